//! Turning stored episodes into model inputs.

use clue_audio::{MfccExtractor, MfccParams};
use clue_data::{Episode, GenParams, Label, Quadrant};
use clue_tensor::Tensor;

use crate::config::{parse_num, ModalityMask};
use crate::error::{config_err, CoreError, Result};
use crate::model::{InputDims, ModelInput, VisualInput};

/// Feature extraction settings shared by every model trained on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PrepConfig {
    /// frame sampling frequency applied to the stored sequence
    pub frame_rate_hz: f64,
    pub mfcc: MfccParams,
    /// fixed gain applied to MFCC coefficients before the audio CNN
    pub mfcc_scale: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            frame_rate_hz: 0.125,
            mfcc: MfccParams::default(),
            mfcc_scale: 0.05,
        }
    }
}

impl PrepConfig {
    pub const KEYS: [&'static str; 8] = [
        "frame_rate_hz",
        "mfcc_scale",
        "mfcc_frame_len",
        "mfcc_hop",
        "mfcc_n_mels",
        "mfcc_n_mfcc",
        "mfcc_f_min",
        "mfcc_f_max",
    ];

    /// Returns `Ok(false)` for keys this config does not own.
    pub fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "frame_rate_hz" => self.frame_rate_hz = parse_num(key, v)?,
            "mfcc_scale" => self.mfcc_scale = parse_num(key, v)?,
            "mfcc_frame_len" => self.mfcc.frame_len = parse_num(key, v)?,
            "mfcc_hop" => self.mfcc.hop = parse_num(key, v)?,
            "mfcc_n_mels" => self.mfcc.n_mels = parse_num(key, v)?,
            "mfcc_n_mfcc" => self.mfcc.n_mfcc = parse_num(key, v)?,
            "mfcc_f_min" => self.mfcc.f_min = parse_num(key, v)?,
            "mfcc_f_max" => self.mfcc.f_max = parse_num(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let m = &self.mfcc;
        vec![
            ("frame_rate_hz", self.frame_rate_hz.to_string()),
            ("mfcc_scale", self.mfcc_scale.to_string()),
            ("mfcc_frame_len", m.frame_len.to_string()),
            ("mfcc_hop", m.hop.to_string()),
            ("mfcc_n_mels", m.n_mels.to_string()),
            ("mfcc_n_mfcc", m.n_mfcc.to_string()),
            ("mfcc_f_min", m.f_min.to_string()),
            ("mfcc_f_max", m.f_max.to_string()),
        ]
    }

    pub fn validate(&self, gen: &GenParams) -> Result<()> {
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return Err(config_err!("frame_rate_hz must be positive, got {}", self.frame_rate_hz));
        }
        if !(self.mfcc_scale > 0.0 && self.mfcc_scale.is_finite()) {
            return Err(config_err!("mfcc_scale must be positive, got {}", self.mfcc_scale));
        }
        self.mfcc.validate(gen.sample_rate)?;
        if self.mfcc.n_frames(gen.audio_len()) == 0 {
            return Err(config_err!(
                "audio clip of {} samples is shorter than one MFCC frame",
                gen.audio_len()
            ));
        }
        Ok(())
    }

    /// Input extents produced for episodes generated with `gen`.
    pub fn dims(&self, gen: &GenParams) -> InputDims {
        InputDims {
            mfcc_frames: self.mfcc.n_frames(gen.audio_len()),
            mfcc_coeffs: self.mfcc.n_mfcc,
            proprio_len: gen.proprio_len,
        }
    }
}

/// Bilinear resize of one `h × w` plane with half-pixel centres and edge clamping.
pub fn bilinear_resize(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(plane.len(), h * w, "plane size");
    let axis = |n_in: usize, n_out: usize, i: usize| {
        let pos = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(h, out_h, y);
        for x in 0..out_w {
            let (x0, x1, fx) = axis(w, out_w, x);
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Centre-crops a `[3, h, w]` image to a square and rescales it to `size × size`.
pub fn crop_and_scale(frame: &Tensor<f32>, size: usize) -> Result<Tensor<f32>> {
    let &[c, h, w] = frame.shape() else {
        return Err(CoreError::Input(format!("frame shape {:?} is not [3, h, w]", frame.shape())));
    };
    if c != 3 || size == 0 {
        return Err(CoreError::Input(format!("cannot crop {:?} to {size}", frame.shape())));
    }
    if h == size && w == size {
        return Ok(frame.clone());
    }
    let side = h.min(w);
    let (top, left) = ((h - side) / 2, (w - side) / 2);
    let mut data = Vec::with_capacity(3 * size * size);
    for ch in 0..3 {
        let plane: Vec<f64> = (0..side)
            .flat_map(|y| (0..side).map(move |x| (y, x)))
            .map(|(y, x)| f64::from(frame.data()[(ch * h + top + y) * w + left + x]))
            .collect();
        data.extend(
            bilinear_resize(&plane, side, side, size, size)
                .into_iter()
                .map(|v| v.clamp(0.0, 1.0) as f32),
        );
    }
    Ok(Tensor::new(vec![3, size, size], data)?)
}

/// An episode reduced to what the model consumes, plus the metadata the experiments need.
#[derive(Debug, Clone)]
pub struct PreparedEpisode {
    pub id: String,
    pub label: Label,
    /// subsampled and rescaled `[3, S, S]` frames
    pub frames: Vec<Tensor<f32>>,
    pub frame_times: Vec<f64>,
    /// `[1, n_frames, n_mfcc]`, scaled
    pub mfcc: Tensor<f32>,
    /// `[2, 1, T_p]`
    pub proprio: Tensor<f32>,
    pub signal_region: Quadrant,
    /// index into `frames` of the first frame at or after the event
    pub event_frame: usize,
}

impl PreparedEpisode {
    /// Model input using raw frames for the visual stream.
    pub fn input(&self, mask: ModalityMask) -> ModelInput<f32> {
        self.input_with_visual(mask, VisualInput::Frames(self.frames.clone()))
    }

    pub fn input_with_visual(&self, mask: ModalityMask, visual: VisualInput<f32>) -> ModelInput<f32> {
        ModelInput {
            visual: mask.visual.then_some(visual),
            mfcc: mask.audio.then(|| self.mfcc.clone()),
            proprio: mask.proprio.then(|| self.proprio.clone()),
        }
    }
}

/// Reusable episode converter; owns the FFT plan.
pub struct Preprocessor {
    config: PrepConfig,
    input_size: usize,
    extractor: MfccExtractor,
}

impl Preprocessor {
    pub fn new(config: PrepConfig, input_size: usize, sample_rate: u32) -> Result<Self> {
        let extractor = MfccExtractor::new(config.mfcc, sample_rate)?;
        Ok(Preprocessor {
            config,
            input_size,
            extractor,
        })
    }

    pub fn config(&self) -> &PrepConfig {
        &self.config
    }

    pub fn prepare(&self, ep: &Episode) -> Result<PreparedEpisode> {
        let (frames, frame_times) = ep.subsampled(self.config.frame_rate_hz)?;
        let frames = frames
            .into_iter()
            .map(|f| crop_and_scale(f, self.input_size))
            .collect::<Result<Vec<_>>>()?;
        let m = self.extractor.compute(&ep.audio)?;
        let (n_frames, n_mfcc) = (m.n_frames(), m.n_mfcc);
        let scale = self.config.mfcc_scale;
        let mfcc = Tensor::new(
            vec![1, n_frames, n_mfcc],
            m.coeffs.data().iter().map(|&c| (c * scale) as f32).collect(),
        )?;
        let values = ep.proprio.values.data();
        let t_p = values.len() / 2;
        let proprio_data = (0..2)
            .flat_map(|ch| (0..t_p).map(move |t| values[t * 2 + ch] as f32))
            .collect();
        let proprio = Tensor::new(vec![2, 1, t_p], proprio_data)?;
        Ok(PreparedEpisode {
            id: ep.id.clone(),
            label: ep.label,
            event_frame: Episode::event_frame(&frame_times, ep.event_time),
            frames,
            frame_times,
            mfcc,
            proprio,
            signal_region: ep.signal_region,
        })
    }
}
