//! Flat `key=value` configuration text and the model configuration it describes.

use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, CoreError, Result};

/// One `key=value` assignment with its 1-based source line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped; a key
/// may appear only once.
pub fn parse_assignments(text: &str) -> Result<Vec<Assignment>> {
    let mut out: Vec<Assignment> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err!("line {}: expected key=value, got {line:?}", i + 1))?;
        let key = k.trim();
        if key.is_empty() || !key.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
            return Err(config_err!("line {}: invalid key {key:?}", i + 1));
        }
        if out.iter().any(|a| a.key == key) {
            return Err(config_err!("line {}: duplicate key {key}", i + 1));
        }
        out.push(Assignment {
            key: key.to_string(),
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Parses one `key=value` override as given on a command line.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| config_err!("override {s:?} is not key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn parse_bool(v: &str) -> Result<bool> {
    match v.trim() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        other => Err(config_err!("expected on/off, got {other:?}")),
    }
}

pub fn fmt_bool(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

pub fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| config_err!("invalid value {v:?} for {key}"))
}

pub fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse_num(key, p)).collect()
}

/// `HxW` pair such as `16x4`.
pub fn parse_pair(key: &str, v: &str) -> Result<(usize, usize)> {
    let (a, b) = v
        .trim()
        .split_once('x')
        .ok_or_else(|| config_err!("invalid {key} entry {v:?}, expected HxW"))?;
    Ok((parse_num(key, a)?, parse_num(key, b)?))
}

fn fmt_pairs(p: &[(usize, usize)]) -> String {
    p.iter().map(|(a, b)| format!("{a}x{b}")).collect::<Vec<_>>().join(",")
}

fn fmt_list<T: ToString>(p: &[T]) -> String {
    p.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    Vgg16,
    AlexNet,
    ResNet18,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::Vgg16 => "vgg16",
            BackboneKind::AlexNet => "alexnet",
            BackboneKind::ResNet18 => "resnet18",
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vgg16" => Ok(BackboneKind::Vgg16),
            "alexnet" => Ok(BackboneKind::AlexNet),
            "resnet18" => Ok(BackboneKind::ResNet18),
            other => Err(config_err!("unknown backbone {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneConfig {
    pub kind: BackboneKind,
    pub width_multiplier: f64,
    /// square input side
    pub input_size: usize,
    pub with_avg_pool: bool,
}

impl BackboneConfig {
    pub fn full_size() -> Self {
        BackboneConfig {
            kind: BackboneKind::Vgg16,
            width_multiplier: 1.0,
            input_size: 224,
            with_avg_pool: false,
        }
    }

    /// `ceil(width_multiplier · base)`, at least 1.
    pub fn width(&self, base: usize) -> usize {
        ((self.width_multiplier * base as f64 - 1e-9).ceil() as usize).max(1)
    }
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            kind: BackboneKind::Vgg16,
            width_multiplier: 0.125,
            input_size: 32,
            with_avg_pool: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecurrentKind {
    Lstm,
    Rnn,
}

impl FromStr for RecurrentKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lstm" => Ok(RecurrentKind::Lstm),
            "rnn" => Ok(RecurrentKind::Rnn),
            other => Err(config_err!("unknown recurrent kind {other:?}")),
        }
    }
}

impl fmt::Display for RecurrentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecurrentKind::Lstm => "lstm",
            RecurrentKind::Rnn => "rnn",
        })
    }
}

/// Which streams feed the fusion head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalityMask {
    pub visual: bool,
    pub audio: bool,
    pub proprio: bool,
}

impl ModalityMask {
    pub const ALL: ModalityMask = ModalityMask {
        visual: true,
        audio: true,
        proprio: true,
    };

    pub fn any(&self) -> bool {
        self.visual || self.audio || self.proprio
    }
}

impl fmt::Display for ModalityMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.visual, "v"), (self.audio, "a"), (self.proprio, "p")]
            .into_iter()
            .filter_map(|(on, s)| on.then_some(s))
            .collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for ModalityMask {
    type Err = CoreError;

    /// Comma-separated subset of `v`, `a`, `p`.
    fn from_str(s: &str) -> Result<Self> {
        let mut m = ModalityMask {
            visual: false,
            audio: false,
            proprio: false,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "v" => m.visual = true,
                "a" => m.audio = true,
                "p" => m.proprio = true,
                other => return Err(config_err!("unknown modality {other:?}, expected v, a or p")),
            }
        }
        if !m.any() {
            return Err(config_err!("at least one modality must be enabled"));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    /// when off the backbone acts as a fixed feature extractor
    pub backbone_trainable: bool,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub recurrent: RecurrentKind,
    pub attention: bool,
    pub modalities: ModalityMask,
    pub audio_kernels: Vec<(usize, usize)>,
    pub audio_strides: Vec<(usize, usize)>,
    pub audio_channels: Vec<usize>,
    pub audio_dim: usize,
    pub proprio_channels: usize,
    pub proprio_kernel: usize,
    pub proprio_dim: usize,
    pub dropout_visual: f64,
    pub dropout_proprio: f64,
    pub dropout_fusion: f64,
    pub fusion_hidden: usize,
    /// apply ReLU after the fusion hidden layer
    pub fusion_relu: bool,
    /// backbone stage read by Grad-CAM; `last` is the final convolution
    pub cam_layer: String,
}

pub const NUM_CLASSES: usize = clue_data::NUM_CLASSES;

/// `cam_layer` value selecting the last convolutional stage.
pub const LAST_CONV: &str = "last";

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: BackboneConfig::default(),
            backbone_trainable: true,
            lstm_hidden: 64,
            lstm_layers: 1,
            recurrent: RecurrentKind::Lstm,
            attention: true,
            modalities: ModalityMask::ALL,
            audio_kernels: vec![(3, 3); 4],
            audio_strides: vec![(1, 1); 4],
            audio_channels: vec![8, 16, 32, 32],
            audio_dim: 64,
            proprio_channels: 16,
            proprio_kernel: 5,
            proprio_dim: 64,
            dropout_visual: 0.4,
            dropout_proprio: 0.4,
            dropout_fusion: 0.4,
            fusion_hidden: 256,
            fusion_relu: false,
            cam_layer: LAST_CONV.to_string(),
        }
    }
}

impl ModelConfig {
    /// Full-size architecture: VGG16 at 224², hidden size 512.
    pub fn full_size() -> Self {
        ModelConfig {
            backbone: BackboneConfig::full_size(),
            lstm_hidden: 512,
            ..ModelConfig::default()
        }
    }

    /// Two rectangular stride-equal layers followed by two square ones.
    pub fn set_rectangular_audio(&mut self) {
        self.audio_kernels = vec![(16, 4), (16, 5), (3, 3), (3, 3)];
        self.audio_strides = vec![(16, 4), (16, 5), (1, 1), (1, 1)];
    }

    pub const KEYS: [&'static str; 24] = [
        "backbone",
        "width_mult",
        "input_size",
        "avg_pool",
        "backbone_trainable",
        "lstm_hidden",
        "lstm_layers",
        "recurrent",
        "attention",
        "modalities",
        "audio_kernels",
        "audio_strides",
        "audio_channels",
        "audio_dim",
        "proprio_channels",
        "proprio_kernel",
        "proprio_dim",
        "dropout_visual",
        "dropout_proprio",
        "dropout_fusion",
        "fusion_hidden",
        "fusion_relu",
        "cam_layer",
        "audio_preset",
    ];

    /// Applies one key. Returns `Ok(false)` if the key is not a model key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "backbone" => self.backbone.kind = v.parse()?,
            "width_mult" => self.backbone.width_multiplier = parse_num(key, v)?,
            "input_size" => self.backbone.input_size = parse_num(key, v)?,
            "avg_pool" => self.backbone.with_avg_pool = parse_bool(v)?,
            "backbone_trainable" => self.backbone_trainable = parse_bool(v)?,
            "lstm_hidden" => self.lstm_hidden = parse_num(key, v)?,
            "lstm_layers" => self.lstm_layers = parse_num(key, v)?,
            "recurrent" => self.recurrent = v.parse()?,
            "attention" => self.attention = parse_bool(v)?,
            "modalities" => self.modalities = v.parse()?,
            "audio_kernels" => {
                self.audio_kernels = v.split(',').map(|p| parse_pair(key, p)).collect::<Result<_>>()?
            }
            "audio_strides" => {
                self.audio_strides = v.split(',').map(|p| parse_pair(key, p)).collect::<Result<_>>()?
            }
            "audio_channels" => self.audio_channels = parse_list(key, v)?,
            "audio_dim" => self.audio_dim = parse_num(key, v)?,
            "proprio_channels" => self.proprio_channels = parse_num(key, v)?,
            "proprio_kernel" => self.proprio_kernel = parse_num(key, v)?,
            "proprio_dim" => self.proprio_dim = parse_num(key, v)?,
            "dropout_visual" => self.dropout_visual = parse_num(key, v)?,
            "dropout_proprio" => self.dropout_proprio = parse_num(key, v)?,
            "dropout_fusion" => self.dropout_fusion = parse_num(key, v)?,
            "fusion_hidden" => self.fusion_hidden = parse_num(key, v)?,
            "fusion_relu" => self.fusion_relu = parse_bool(v)?,
            "cam_layer" => self.cam_layer = v.trim().to_string(),
            "audio_preset" => match v.trim() {
                "square" => {
                    self.audio_kernels = vec![(3, 3); 4];
                    self.audio_strides = vec![(1, 1); 4];
                }
                "rectangular" => self.set_rectangular_audio(),
                other => return Err(config_err!("unknown audio_preset {other:?}")),
            },
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every key with its current value, in a fixed order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("backbone", self.backbone.kind.to_string()),
            ("width_mult", self.backbone.width_multiplier.to_string()),
            ("input_size", self.backbone.input_size.to_string()),
            ("avg_pool", fmt_bool(self.backbone.with_avg_pool).into()),
            ("backbone_trainable", fmt_bool(self.backbone_trainable).into()),
            ("lstm_hidden", self.lstm_hidden.to_string()),
            ("lstm_layers", self.lstm_layers.to_string()),
            ("recurrent", self.recurrent.to_string()),
            ("attention", fmt_bool(self.attention).into()),
            ("modalities", self.modalities.to_string()),
            ("audio_kernels", fmt_pairs(&self.audio_kernels)),
            ("audio_strides", fmt_pairs(&self.audio_strides)),
            ("audio_channels", fmt_list(&self.audio_channels)),
            ("audio_dim", self.audio_dim.to_string()),
            ("proprio_channels", self.proprio_channels.to_string()),
            ("proprio_kernel", self.proprio_kernel.to_string()),
            ("proprio_dim", self.proprio_dim.to_string()),
            ("dropout_visual", self.dropout_visual.to_string()),
            ("dropout_proprio", self.dropout_proprio.to_string()),
            ("dropout_fusion", self.dropout_fusion.to_string()),
            ("fusion_hidden", self.fusion_hidden.to_string()),
            ("fusion_relu", fmt_bool(self.fusion_relu).into()),
            ("cam_layer", self.cam_layer.clone()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let wm = self.backbone.width_multiplier;
        if !(wm > 0.0 && wm <= 1.0) {
            return Err(config_err!("width_mult {wm} must lie in (0, 1]"));
        }
        if self.cam_layer.is_empty() {
            return Err(config_err!("cam_layer must name a backbone stage or be {LAST_CONV:?}"));
        }
        if !self.modalities.any() {
            return Err(config_err!("at least one modality must be enabled"));
        }
        if self.lstm_hidden == 0 || self.lstm_layers == 0 {
            return Err(config_err!("lstm_hidden and lstm_layers must be positive"));
        }
        let n = self.audio_channels.len();
        if n == 0 || self.audio_kernels.len() != n || self.audio_strides.len() != n {
            return Err(config_err!(
                "audio_kernels, audio_strides and audio_channels must have the same nonzero length"
            ));
        }
        let zero_pair = |p: &(usize, usize)| p.0 == 0 || p.1 == 0;
        if self.audio_kernels.iter().any(zero_pair) || self.audio_strides.iter().any(zero_pair) {
            return Err(config_err!("audio kernel and stride extents must be positive"));
        }
        if self.audio_channels.contains(&0)
            || [self.audio_dim, self.proprio_channels, self.proprio_kernel, self.proprio_dim, self.fusion_hidden]
                .contains(&0)
        {
            return Err(config_err!("layer widths must be positive"));
        }
        for (name, p) in [
            ("dropout_visual", self.dropout_visual),
            ("dropout_proprio", self.dropout_proprio),
            ("dropout_fusion", self.dropout_fusion),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(config_err!("{name} {p} must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}
