//! VGG16, AlexNet and ResNet18 style feature extractors without their dense heads.

use clue_tensor::layers::Conv2d;
use clue_tensor::{Graph, ParamStore, Scalar, Var};
use rand::Rng;

use crate::config::{BackboneConfig, BackboneKind};
use crate::error::{config_err, CoreError, Result};

const VGG_PLAN: [usize; 13] = [64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512];
/// 0-based indices of the VGG convolutions followed by a 2×2 pool
const VGG_POOL_AFTER: [usize; 5] = [1, 3, 6, 9, 12];

/// Basic residual block: conv-ReLU-conv plus shortcut, ReLU after the sum.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    /// 1×1 projection, present when the shape changes
    pub projection: Option<Conv2d>,
}

impl ResidualBlock {
    fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let conv1 = Conv2d::new(store, &format!("{name}.conv1"), cin, cout, (3, 3), (stride, stride), (1, 1), rng)?;
        let conv2 = Conv2d::new(store, &format!("{name}.conv2"), cout, cout, (3, 3), (1, 1), (1, 1), rng)?;
        let projection = (cin != cout || stride != 1)
            .then(|| Conv2d::new(store, &format!("{name}.proj"), cin, cout, (1, 1), (stride, stride), (0, 0), rng))
            .transpose()?;
        Ok(ResidualBlock {
            conv1,
            conv2,
            projection,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, x)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, h)?;
        let shortcut = match &self.projection {
            Some(p) => p.forward(g, x)?,
            None => x,
        };
        let sum = g.add(h, shortcut)?;
        Ok(g.relu(sum))
    }
}

#[derive(Debug, Clone)]
pub enum Stage {
    /// convolution followed by ReLU
    Conv(Conv2d),
    MaxPool { kernel: usize, stride: usize },
    Block(ResidualBlock),
}

/// Convolutional trunk. The tap is the stage whose output Grad-CAM reads,
/// by default the last convolutional one.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub stages: Vec<Stage>,
    /// `conv3`, `pool2`, `layer4.1`, ... parallel to `stages`
    pub stage_names: Vec<String>,
    tap: usize,
    tap_shape: [usize; 3],
    out_shape: [usize; 3],
}

fn conv_out(n: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (n + 2 * p >= k).then(|| (n + 2 * p - k) / s + 1)
}

impl Stage {
    fn output_shape(&self, [c, h, w]: [usize; 3]) -> Option<[usize; 3]> {
        match self {
            Stage::Conv(conv) => {
                let (oh, ow) = conv.output_hw(h, w)?;
                (conv.in_channels == c).then_some([conv.out_channels, oh, ow])
            }
            Stage::MaxPool { kernel, stride } => Some([
                c,
                conv_out(h, *kernel, *stride, 0)?,
                conv_out(w, *kernel, *stride, 0)?,
            ]),
            Stage::Block(b) => {
                let [c1, h1, w1] = Stage::Conv(b.conv1.clone()).output_shape([c, h, w])?;
                Stage::Conv(b.conv2.clone()).output_shape([c1, h1, w1])
            }
        }
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        Ok(match self {
            Stage::Conv(conv) => {
                let y = conv.forward(g, x)?;
                g.relu(y)
            }
            Stage::MaxPool { kernel, stride } => g.maxpool2d(x, (*kernel, *kernel), (*stride, *stride))?,
            Stage::Block(b) => b.forward(g, x)?,
        })
    }
}

impl Backbone {
    /// Builds the trunk, registering parameters under `{prefix}.`.
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        config: BackboneConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let wm = config.width_multiplier;
        if !(wm > 0.0 && wm <= 1.0) {
            return Err(config_err!("width multiplier {wm} must lie in (0, 1]"));
        }
        let s = config.input_size;
        let mut stages = Vec::new();
        let mut names: Vec<String> = Vec::new();
        let name = |n: &str| format!("{prefix}.{n}");
        match config.kind {
            BackboneKind::Vgg16 => {
                if s == 0 || !s.is_multiple_of(32) {
                    return Err(config_err!("vgg16 input size {s} must be a positive multiple of 32"));
                }
                let mut cin = 3;
                for (i, &base) in VGG_PLAN.iter().enumerate() {
                    let cout = config.width(base);
                    stages.push(Stage::Conv(Conv2d::new(
                        store,
                        &name(&format!("conv{}", i + 1)),
                        cin,
                        cout,
                        (3, 3),
                        (1, 1),
                        (1, 1),
                        rng,
                    )?));
                    names.push(format!("conv{}", i + 1));
                    if VGG_POOL_AFTER.contains(&i) {
                        stages.push(Stage::MaxPool { kernel: 2, stride: 2 });
                        names.push(format!("pool{}", names.iter().filter(|n| n.starts_with("pool")).count() + 1));
                    }
                    cin = cout;
                }
            }
            BackboneKind::AlexNet => {
                if s < 63 {
                    return Err(config_err!("alexnet input size {s} is below the minimum of 63"));
                }
                let plan = [
                    (64, 11, 4, 2, true),
                    (192, 5, 1, 2, true),
                    (384, 3, 1, 1, false),
                    (256, 3, 1, 1, false),
                    (256, 3, 1, 1, true),
                ];
                let mut cin = 3;
                for (i, (base, k, st, p, pool)) in plan.into_iter().enumerate() {
                    let cout = config.width(base);
                    stages.push(Stage::Conv(Conv2d::new(
                        store,
                        &name(&format!("conv{}", i + 1)),
                        cin,
                        cout,
                        (k, k),
                        (st, st),
                        (p, p),
                        rng,
                    )?));
                    names.push(format!("conv{}", i + 1));
                    if pool {
                        stages.push(Stage::MaxPool { kernel: 3, stride: 2 });
                        names.push(format!("pool{}", names.iter().filter(|n| n.starts_with("pool")).count() + 1));
                    }
                    cin = cout;
                }
            }
            BackboneKind::ResNet18 => {
                if s == 0 || !s.is_multiple_of(32) {
                    return Err(config_err!("resnet18 input size {s} must be a positive multiple of 32"));
                }
                let stem = config.width(64);
                stages.push(Stage::Conv(Conv2d::new(store, &name("stem"), 3, stem, (7, 7), (2, 2), (3, 3), rng)?));
                stages.push(Stage::MaxPool { kernel: 3, stride: 2 });
                names.extend(["stem".to_string(), "pool1".to_string()]);
                let mut cin = stem;
                for (layer, base) in [64, 128, 256, 512].into_iter().enumerate() {
                    let cout = config.width(base);
                    for block in 0..2 {
                        let stride = if layer > 0 && block == 0 { 2 } else { 1 };
                        let n = name(&format!("layer{}.{block}", layer + 1));
                        stages.push(Stage::Block(ResidualBlock::new(store, &n, cin, cout, stride, rng)?));
                        names.push(format!("layer{}.{block}", layer + 1));
                        cin = cout;
                    }
                }
            }
        }
        let tap = stages
            .iter()
            .rposition(|st| !matches!(st, Stage::MaxPool { .. }))
            .expect("at least one convolution");
        let mut backbone = Backbone {
            config,
            stages,
            stage_names: names,
            tap,
            tap_shape: [0; 3],
            out_shape: [0; 3],
        };
        let shapes = backbone.stage_shapes()?;
        backbone.tap_shape = shapes[tap];
        backbone.out_shape = *shapes.last().expect("nonempty trunk");
        Ok(backbone)
    }

    /// Output shape of every stage.
    fn stage_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let s = self.config.input_size;
        let mut shape = [3, s, s];
        self.stages
            .iter()
            .enumerate()
            .map(|(i, st)| {
                shape = st
                    .output_shape(shape)
                    .ok_or_else(|| config_err!("{} input size {s} collapses before stage {i}", self.config.kind))?;
                Ok(shape)
            })
            .collect()
    }

    /// Moves the Grad-CAM tap to the named stage. Features are unaffected.
    pub fn set_tap(&mut self, layer: &str) -> Result<()> {
        let i = self.stage_names.iter().position(|n| n == layer).ok_or_else(|| {
            config_err!("unknown cam_layer {layer:?}; {} has {}", self.config.kind, self.stage_names.join(", "))
        })?;
        self.tap_shape = self.stage_shapes()?[i];
        self.tap = i;
        Ok(())
    }

    /// `[C, H, W]` of the Grad-CAM tap activation.
    pub fn tap_shape(&self) -> [usize; 3] {
        self.tap_shape
    }

    /// Name of the tapped stage.
    pub fn tap_name(&self) -> &str {
        &self.stage_names[self.tap]
    }

    /// `[C, H, W]` of the final map before pooling or flattening.
    pub fn output_shape(&self) -> [usize; 3] {
        self.out_shape
    }

    pub fn feature_dim(&self) -> usize {
        let [c, h, w] = self.out_shape;
        if self.config.with_avg_pool {
            c
        } else {
            c * h * w
        }
    }

    pub fn num_convs(&self) -> usize {
        self.stages
            .iter()
            .map(|s| match s {
                Stage::Conv(_) => 1,
                Stage::MaxPool { .. } => 0,
                Stage::Block(b) => 2 + usize::from(b.projection.is_some()),
            })
            .sum()
    }

    pub fn num_pools(&self) -> usize {
        self.stages
            .iter()
            .filter(|s| matches!(s, Stage::MaxPool { .. }))
            .count()
    }

    fn check_frame<T: Scalar>(&self, g: &Graph<'_, T>, x: Var) -> Result<()> {
        let s = self.config.input_size;
        if g.shape(x) != [3, s, s] {
            return Err(CoreError::Input(format!(
                "frame shape {:?}, backbone expects [3, {s}, {s}]",
                g.shape(x)
            )));
        }
        Ok(())
    }

    /// Runs up to and including the tapped stage.
    pub fn forward_to_tap<T: Scalar>(&self, g: &mut Graph<'_, T>, frame: Var) -> Result<Var> {
        self.check_frame(g, frame)?;
        let mut x = frame;
        for st in &self.stages[..=self.tap] {
            x = st.forward(g, x)?;
        }
        Ok(x)
    }

    /// Remaining pooling, then global average pooling or flattening.
    pub fn forward_from_tap<T: Scalar>(&self, g: &mut Graph<'_, T>, tap: Var) -> Result<Var> {
        let mut x = tap;
        for st in &self.stages[self.tap + 1..] {
            x = st.forward(g, x)?;
        }
        Ok(if self.config.with_avg_pool {
            g.global_avg_pool(x)?
        } else {
            g.flatten(x)?
        })
    }

    /// Frame `[3, S, S]` to the feature vector `f_t`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, frame: Var) -> Result<Var> {
        let tap = self.forward_to_tap(g, frame)?;
        self.forward_from_tap(g, tap)
    }

    /// Evaluates the features of one frame outside any training graph.
    pub fn extract_features<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        frame: &clue_tensor::Tensor<T>,
    ) -> Result<clue_tensor::Tensor<T>> {
        let mut g = Graph::new(store);
        let x = g.input(frame.clone());
        let f = self.forward(&mut g, x)?;
        Ok(g.value(f).clone())
    }
}
