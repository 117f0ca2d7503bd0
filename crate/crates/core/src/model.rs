//! The three sensory streams and the late-fusion classifier.

use clue_tensor::layers::{Conv2d, Dense, LstmCell, RnnCell, SelfAttention};
use std::path::Path;

use clue_tensor::manifest;
use clue_tensor::rng::seeded;
use clue_tensor::{Graph, Mode, ParamStore, Scalar, Tensor, Var};
use rand::Rng;

use crate::backbone::Backbone;
use crate::config::{ModelConfig, RecurrentKind, LAST_CONV, NUM_CLASSES};
use crate::error::{config_err, CoreError, Result};

/// Name prefix shared by all backbone parameters.
pub const BACKBONE_PREFIX: &str = "visual.backbone.";

/// Input extents that fix the parameter shapes of the audio and proprio streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputDims {
    pub mfcc_frames: usize,
    pub mfcc_coeffs: usize,
    pub proprio_len: usize,
}

impl Default for InputDims {
    fn default() -> Self {
        InputDims {
            mfcc_frames: 61,
            mfcc_coeffs: 13,
            proprio_len: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub enum VisualInput<T> {
    /// `[3, S, S]` frames in ascending time order
    Frames(Vec<Tensor<T>>),
    /// backbone features already computed for each frame
    Features(Vec<Tensor<T>>),
}

impl<T> VisualInput<T> {
    pub fn len(&self) -> usize {
        match self {
            VisualInput::Frames(v) | VisualInput::Features(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One episode in model-ready form. Streams that are disabled may leave their entry empty.
#[derive(Debug, Clone)]
pub struct ModelInput<T> {
    pub visual: Option<VisualInput<T>>,
    /// `[1, n_frames, n_mfcc]`
    pub mfcc: Option<Tensor<T>>,
    /// `[2, 1, T_p]`, channels (openness, force)
    pub proprio: Option<Tensor<T>>,
}

impl<T: Scalar> ModelInput<T> {
    pub fn cast<U: Scalar>(&self) -> ModelInput<U> {
        let cast_all = |v: &[Tensor<T>]| v.iter().map(Tensor::cast).collect();
        ModelInput {
            visual: self.visual.as_ref().map(|v| match v {
                VisualInput::Frames(f) => VisualInput::Frames(cast_all(f)),
                VisualInput::Features(f) => VisualInput::Features(cast_all(f)),
            }),
            mfcc: self.mfcc.as_ref().map(Tensor::cast),
            proprio: self.proprio.as_ref().map(Tensor::cast),
        }
    }
}

#[derive(Debug, Clone)]
enum Recurrent {
    Lstm(Vec<LstmCell>),
    Rnn(Vec<RnnCell>),
}

#[derive(Debug, Clone)]
pub struct VisualStream {
    pub backbone: Backbone,
    recurrent: Recurrent,
    pub attention: Option<(SelfAttention, Dense)>,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct AudioStream {
    pub convs: Vec<Conv2d>,
    pub pool: (usize, usize),
    pub dense: Dense,
}

#[derive(Debug, Clone)]
pub struct ProprioStream {
    pub conv: Conv2d,
    pub pool: usize,
    pub dense: Dense,
}

/// Layer structure of a model; parameter values live in a separate [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Architecture {
    pub config: ModelConfig,
    pub dims: InputDims,
    pub visual: Option<VisualStream>,
    pub audio: Option<AudioStream>,
    pub proprio: Option<ProprioStream>,
    fusion_hidden: Dense,
    fusion_out: Dense,
}

/// Variables produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logits: Var,
    pub r_v: Option<Var>,
    pub r_a: Option<Var>,
    pub r_p: Option<Var>,
    pub r_fused: Var,
    /// `[T, T]` attention weights when attention is enabled
    pub attention: Option<Var>,
}

/// Called with each frame's tap activation; returns the variable to continue from.
pub type TapHook<'h, 'p, T> = &'h mut dyn FnMut(&mut Graph<'p, T>, usize, Var) -> Result<Var>;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub predicted: usize,
}

impl Prediction {
    pub fn from_logits(logits: &Tensor<impl Scalar>) -> Self {
        let probs = clue_tensor::ops::softmax(logits);
        Prediction {
            logits: logits.to_f64_vec(),
            predicted: probs.argmax(),
            probs: probs.to_f64_vec(),
        }
    }
}

/// Per-dimension padding for an audio convolution: "same" at stride 1, none
/// for strided kernels unless the map is already smaller than the kernel.
fn audio_padding(n: usize, k: usize, s: usize, first: bool, axis: &str) -> Result<usize> {
    if s == 1 {
        Ok((k - 1) / 2)
    } else if n >= k {
        Ok(0)
    } else if first {
        Err(config_err!(
            "MFCC {axis} extent {n} is smaller than the {k}-wide strided kernel; need at least {k}"
        ))
    } else {
        Ok((k - n).div_ceil(2))
    }
}

impl AudioStream {
    fn build<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        dims: InputDims,
        rng: &mut R,
    ) -> Result<Self> {
        let (mut c, mut h, mut w) = (1, dims.mfcc_frames, dims.mfcc_coeffs);
        let mut convs = Vec::new();
        for (i, ((&k, &s), &cout)) in cfg
            .audio_kernels
            .iter()
            .zip(&cfg.audio_strides)
            .zip(&cfg.audio_channels)
            .enumerate()
        {
            let pad = (
                audio_padding(h, k.0, s.0, i == 0, "frame")?,
                audio_padding(w, k.1, s.1, i == 0, "coefficient")?,
            );
            let conv = Conv2d::new(store, &format!("audio.conv{}", i + 1), c, cout, k, s, pad, rng)?;
            (h, w) = conv
                .output_hw(h, w)
                .ok_or_else(|| config_err!("audio layer {} does not fit a {h}×{w} map", i + 1))?;
            c = cout;
            convs.push(conv);
        }
        let pool = (h.min(2), w.min(2));
        let (ph, pw) = (h / pool.0, w / pool.1);
        let dense = Dense::new(store, "audio.dense", c * ph * pw, cfg.audio_dim, rng)?;
        Ok(AudioStream { convs, pool, dense })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, mfcc: Var) -> Result<Var> {
        let mut x = mfcc;
        for conv in &self.convs {
            let y = conv.forward(g, x)?;
            x = g.relu(y);
        }
        let x = g.maxpool2d(x, self.pool, self.pool)?;
        let x = g.flatten(x)?;
        Ok(self.dense.forward(g, x)?)
    }
}

impl ProprioStream {
    fn build<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        dims: InputDims,
        rng: &mut R,
    ) -> Result<Self> {
        let k = cfg.proprio_kernel;
        if dims.proprio_len < k {
            return Err(config_err!(
                "proprio trace of {} samples is shorter than the kernel length {k}",
                dims.proprio_len
            ));
        }
        let conv = Conv2d::new(store, "proprio.conv", 2, cfg.proprio_channels, (1, k), (1, 1), (0, k / 2), rng)?;
        let (_, len) = conv.output_hw(1, dims.proprio_len).expect("checked length");
        let pool = len.min(2);
        let dense = Dense::new(store, "proprio.dense", cfg.proprio_channels * (len / pool), cfg.proprio_dim, rng)?;
        Ok(ProprioStream { conv, pool, dense })
    }

    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        trace: Var,
        p: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let y = self.conv.forward(g, trace)?;
        let y = g.relu(y);
        let y = g.maxpool2d(y, (1, self.pool), (1, self.pool))?;
        let y = g.flatten(y)?;
        let y = self.dense.forward(g, y)?;
        Ok(g.dropout(y, p, mode, rng)?)
    }
}

impl VisualStream {
    fn build<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut backbone = Backbone::build(store, BACKBONE_PREFIX.trim_end_matches('.'), cfg.backbone, rng)?;
        if cfg.cam_layer != LAST_CONV {
            backbone.set_tap(&cfg.cam_layer)?;
        }
        let h = cfg.lstm_hidden;
        let mut input = backbone.feature_dim();
        let recurrent = match cfg.recurrent {
            RecurrentKind::Lstm => Recurrent::Lstm(
                (0..cfg.lstm_layers)
                    .map(|l| {
                        let cell = LstmCell::new(store, &format!("visual.lstm{l}"), input, h, rng);
                        input = h;
                        cell
                    })
                    .collect::<Result<_, _>>()?,
            ),
            RecurrentKind::Rnn => Recurrent::Rnn(
                (0..cfg.lstm_layers)
                    .map(|l| {
                        let cell = RnnCell::new(store, &format!("visual.rnn{l}"), input, h, rng);
                        input = h;
                        cell
                    })
                    .collect::<Result<_, _>>()?,
            ),
        };
        let attention = if cfg.attention {
            Some((
                SelfAttention::new(store, "visual.attention", h, rng)?,
                Dense::new(store, "visual.attention_dense", h, h, rng)?,
            ))
        } else {
            None
        };
        Ok(VisualStream {
            backbone,
            recurrent,
            attention,
            hidden: h,
        })
    }

    fn run_recurrent<T: Scalar>(&self, g: &mut Graph<'_, T>, seq: Vec<Var>) -> Result<Vec<Var>> {
        let zeros = |g: &mut Graph<'_, T>| g.input(Tensor::zeros(&[self.hidden]));
        let mut seq = seq;
        match &self.recurrent {
            Recurrent::Lstm(cells) => {
                for cell in cells {
                    let (mut h, mut c) = (zeros(g), zeros(g));
                    let mut out = Vec::with_capacity(seq.len());
                    for &x in &seq {
                        (h, c) = cell.forward(g, x, h, c)?;
                        out.push(h);
                    }
                    seq = out;
                }
            }
            Recurrent::Rnn(cells) => {
                for cell in cells {
                    let mut h = zeros(g);
                    let mut out = Vec::with_capacity(seq.len());
                    for &x in &seq {
                        h = cell.forward(g, x, h)?;
                        out.push(h);
                    }
                    seq = out;
                }
            }
        }
        Ok(seq)
    }

    /// Returns `(r_v, attention weights)`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        input: &VisualInput<T>,
        p: f64,
        mode: Mode,
        rng: &mut R,
        mut hook: Option<TapHook<'_, 'p, T>>,
    ) -> Result<(Var, Option<Var>)> {
        if input.is_empty() {
            return Err(CoreError::Input("visual stream needs at least one frame".into()));
        }
        let mut feats = Vec::with_capacity(input.len());
        match input {
            VisualInput::Frames(frames) => {
                for (t, frame) in frames.iter().enumerate() {
                    let x = g.input(frame.clone());
                    let mut tap = self.backbone.forward_to_tap(g, x)?;
                    if let Some(h) = hook.as_mut() {
                        tap = h(g, t, tap)?;
                    }
                    feats.push(self.backbone.forward_from_tap(g, tap)?);
                }
            }
            VisualInput::Features(fs) => {
                let d = self.backbone.feature_dim();
                for f in fs {
                    if f.shape() != [d] {
                        return Err(CoreError::Input(format!(
                            "precomputed feature shape {:?}, expected [{d}]",
                            f.shape()
                        )));
                    }
                    feats.push(g.input(f.clone()));
                }
            }
        }
        let feats = feats
            .into_iter()
            .map(|f| g.dropout(f, p, mode, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let hs = self.run_recurrent(g, feats)?;
        let last = *hs.last().expect("non-empty sequence");
        let seq = g.stack_rows(&hs)?;
        let (context, weights) = match &self.attention {
            Some((att, dense)) => {
                let out = att.forward(g, seq)?;
                let d = dense.forward(g, out.output)?;
                (g.mean_rows(d)?, Some(out.weights))
            }
            None => (g.mean_rows(seq)?, None),
        };
        Ok((g.concat(&[context, last])?, weights))
    }
}

impl Architecture {
    /// Creates the layers and registers freshly initialised parameters in `store`.
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        cfg: &ModelConfig,
        dims: InputDims,
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let m = cfg.modalities;
        let visual = m.visual.then(|| VisualStream::build(store, cfg, rng)).transpose()?;
        let audio = m.audio.then(|| AudioStream::build(store, cfg, dims, rng)).transpose()?;
        let proprio = m.proprio.then(|| ProprioStream::build(store, cfg, dims, rng)).transpose()?;
        let fused = usize::from(m.visual) * 2 * cfg.lstm_hidden
            + usize::from(m.audio) * cfg.audio_dim
            + usize::from(m.proprio) * cfg.proprio_dim;
        let fusion_hidden = Dense::new(store, "fusion.hidden", fused, cfg.fusion_hidden, rng)?;
        let fusion_out = Dense::new(store, "fusion.output", cfg.fusion_hidden, NUM_CLASSES, rng)?;
        Ok(Architecture {
            config: cfg.clone(),
            dims,
            visual,
            audio,
            proprio,
            fusion_hidden,
            fusion_out,
        })
    }

    pub fn fused_dim(&self) -> usize {
        self.fusion_hidden.inputs
    }

    /// Full forward pass. `rng` feeds dropout and is untouched in eval mode.
    pub fn forward<'p, T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'p, T>,
        input: &ModelInput<T>,
        mode: Mode,
        rng: &mut R,
        hook: Option<TapHook<'_, 'p, T>>,
    ) -> Result<ForwardVars> {
        let cfg = &self.config;
        let missing = |what: &str| CoreError::Input(format!("{what} input missing for an enabled stream"));
        let (r_v, attention) = match &self.visual {
            Some(v) => {
                let vin = input.visual.as_ref().ok_or_else(|| missing("visual"))?;
                let (r, a) = v.forward(g, vin, cfg.dropout_visual, mode, rng, hook)?;
                (Some(r), a)
            }
            None => (None, None),
        };
        let r_a = match &self.audio {
            Some(a) => {
                let m = input.mfcc.as_ref().ok_or_else(|| missing("audio"))?;
                let x = g.input(m.clone());
                Some(a.forward(g, x)?)
            }
            None => None,
        };
        let r_p = match &self.proprio {
            Some(p) => {
                let t = input.proprio.as_ref().ok_or_else(|| missing("proprio"))?;
                let x = g.input(t.clone());
                Some(p.forward(g, x, cfg.dropout_proprio, mode, rng)?)
            }
            None => None,
        };
        let parts: Vec<Var> = [r_v, r_a, r_p].into_iter().flatten().collect();
        let r_fused = g.concat(&parts)?;
        let h = self.fusion_hidden.forward(g, r_fused)?;
        let h = if cfg.fusion_relu { g.relu(h) } else { h };
        let h = g.dropout(h, cfg.dropout_fusion, mode, rng)?;
        let logits = self.fusion_out.forward(g, h)?;
        Ok(ForwardVars {
            logits,
            r_v,
            r_a,
            r_p,
            r_fused,
            attention,
        })
    }

    /// Per-frame backbone features, for training with a fixed backbone.
    pub fn frame_features<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        frames: &[Tensor<T>],
    ) -> Result<Vec<Tensor<T>>> {
        let v = self
            .visual
            .as_ref()
            .ok_or_else(|| CoreError::Input("model has no visual stream".into()))?;
        frames
            .iter()
            .map(|f| v.backbone.extract_features(store, f))
            .collect()
    }
}

/// Architecture plus parameter values.
#[derive(Debug, Clone)]
pub struct ClueModel<T> {
    pub arch: Architecture,
    pub store: ParamStore<T>,
}

impl<T: Scalar> ClueModel<T> {
    pub fn build(cfg: &ModelConfig, dims: InputDims, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let arch = Architecture::build(cfg, dims, &mut store, &mut seeded(seed))?;
        Ok(ClueModel { arch, store })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    /// Eval-mode prediction.
    pub fn predict(&self, input: &ModelInput<T>) -> Result<Prediction> {
        let mut g = Graph::new(&self.store);
        let out = self
            .arch
            .forward(&mut g, input, Mode::Eval, &mut seeded(0), None)?;
        let logits = g.value(out.logits);
        logits.ensure_finite("logits")?;
        Ok(Prediction::from_logits(logits))
    }

    /// Writes every parameter as a weight manifest in `dir`.
    pub fn save_weights(&self, dir: &Path) -> Result<()> {
        Ok(manifest::save(&self.store, dir)?)
    }

    /// Replaces all parameters from a manifest; names and shapes must match exactly.
    pub fn load_weights(&mut self, dir: &Path) -> Result<()> {
        Ok(manifest::load(&mut self.store, dir)?)
    }

    /// Writes only the visual backbone, with names relative to it.
    pub fn save_backbone(&self, dir: &Path) -> Result<()> {
        Ok(manifest::save_prefixed(&self.store, dir, BACKBONE_PREFIX)?)
    }

    /// Loads backbone weights written by [`Self::save_backbone`] or an external converter.
    pub fn load_backbone(&mut self, dir: &Path) -> Result<()> {
        if self.arch.visual.is_none() {
            return Err(CoreError::Input("model has no visual stream".into()));
        }
        Ok(manifest::load_prefixed(&mut self.store, dir, BACKBONE_PREFIX)?)
    }

    pub fn cast<U: Scalar>(&self) -> ClueModel<U> {
        ClueModel {
            arch: self.arch.clone(),
            store: self.store.cast(),
        }
    }
}
