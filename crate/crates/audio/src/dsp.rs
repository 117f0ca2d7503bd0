//! Framing, power spectrum, mel filterbank and cepstral transform.

use std::f64::consts::PI;
use std::sync::Arc;

use clue_tensor::Tensor;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{AudioError, Result};

/// Mono signal with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AudioError::Parameter("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(AudioError::Input("waveform has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AudioError::Input(format!(
                "sample {i} = {} lies outside [-1, 1]",
                samples[i]
            )));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Waveform::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate,
        )
    }
}

/// Analysis settings for [`mfcc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccParams {
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MfccParams {
    fn default() -> Self {
        MfccParams {
            frame_len: 512,
            hop: 256,
            n_mels: 26,
            n_mfcc: 13,
            f_min: 0.0,
            f_max: 8000.0,
        }
    }
}

impl MfccParams {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let p = |m: String| Err(AudioError::Parameter(m));
        if self.frame_len < 2 || !self.frame_len.is_power_of_two() {
            return p(format!("frame_len {} must be a power of two ≥ 2", self.frame_len));
        }
        if self.hop == 0 {
            return p("hop must be at least 1".into());
        }
        if self.n_mels < 2 {
            return p(format!("n_mels {} must be at least 2", self.n_mels));
        }
        if self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return p(format!("n_mfcc {} must lie in 1..={}", self.n_mfcc, self.n_mels));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return p(format!(
                "need 0 ≤ f_min < f_max ≤ {nyquist}, got {}..{}",
                self.f_min, self.f_max
            ));
        }
        Ok(())
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        frame_count(n_samples, self.frame_len, self.hop)
    }
}

/// Number of full frames: `1 + (n - frame_len) / hop`, or 0 when `n < frame_len`.
pub fn frame_count(n_samples: usize, frame_len: usize, hop: usize) -> usize {
    if n_samples < frame_len || hop == 0 {
        0
    } else {
        1 + (n_samples - frame_len) / hop
    }
}

pub fn hann_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / denom).cos()))
        .collect()
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Splits the waveform into overlapping Hann-windowed frames.
pub fn frame_and_window(w: &Waveform, frame_len: usize, hop: usize) -> Result<Tensor<f64>> {
    if frame_len == 0 || hop == 0 {
        return Err(AudioError::Parameter("frame_len and hop must be positive".into()));
    }
    let n = w.samples().len();
    if n < frame_len {
        return Err(AudioError::Input(format!(
            "waveform of {n} samples is shorter than one {frame_len}-sample frame"
        )));
    }
    let window = hann_window(frame_len);
    let frames = frame_count(n, frame_len, hop);
    let mut data = Vec::with_capacity(frames * frame_len);
    for f in 0..frames {
        let seg = &w.samples()[f * hop..f * hop + frame_len];
        data.extend(seg.iter().zip(&window).map(|(s, h)| s * h));
    }
    Ok(Tensor::new(vec![frames, frame_len], data).expect("frame shape"))
}

fn plan(len: usize) -> Result<Arc<dyn Fft<f64>>> {
    if len < 2 || !len.is_power_of_two() {
        return Err(AudioError::Parameter(format!(
            "frame length {len} is not a power of two"
        )));
    }
    Ok(FftPlanner::new().plan_fft_forward(len))
}

fn power_rows(fft: &dyn Fft<f64>, frames: &[f64], len: usize) -> Vec<f64> {
    let bins = len / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames.len() / len * bins);
    for row in frames.chunks_exact(len) {
        for (b, &x) in buf.iter_mut().zip(row) {
            *b = Complex::new(x, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }
    out
}

/// `|DFT|²` of each row at the non-negative frequency bins.
pub fn power_spectrum(frames: &Tensor<f64>) -> Result<Tensor<f64>> {
    let [rows, len] = rank2(frames, "frames")?;
    let fft = plan(len)?;
    let out = power_rows(fft.as_ref(), frames.data(), len);
    Ok(Tensor::new(vec![rows, len / 2 + 1], out).expect("spectrum shape"))
}

fn rank2(t: &Tensor<f64>, what: &str) -> Result<[usize; 2]> {
    match *t.shape() {
        [r, c] => Ok([r, c]),
        ref s => Err(AudioError::Input(format!("{what} must be rank 2, got {s:?}"))),
    }
}

/// Triangular filter weights, `[n_mels, n_bins]`, with unit peak height.
///
/// Filter `m` rises from edge `m` to edge `m+1` and falls to edge `m+2`, where the
/// `n_mels + 2` edges are uniformly spaced in mel between `f_min` and `f_max`.
pub fn mel_filter_matrix(
    n_bins: usize,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    sample_rate: u32,
) -> Result<Vec<f64>> {
    if n_mels < 2 {
        return Err(AudioError::Parameter(format!("n_mels {n_mels} must be at least 2")));
    }
    let nyquist = f64::from(sample_rate) / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(AudioError::Parameter(format!(
            "need 0 ≤ f_min < f_max ≤ {nyquist}, got {f_min}..{f_max}"
        )));
    }
    if n_bins < 2 {
        return Err(AudioError::Parameter("spectrum needs at least 2 bins".into()));
    }
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = nyquist / (n_bins - 1) as f64;
    let mut m = vec![0.0; n_mels * n_bins];
    for (j, row) in m.chunks_exact_mut(n_bins).enumerate() {
        let (left, center, right) = (edges[j], edges[j + 1], edges[j + 2]);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            *w = rise.min(fall).max(0.0);
        }
    }
    Ok(m)
}

/// Applies the mel filterbank to a `[n_frames, n_bins]` power spectrum.
pub fn mel_filterbank(
    spectrum: &Tensor<f64>,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    sample_rate: u32,
) -> Result<Tensor<f64>> {
    let [rows, bins] = rank2(spectrum, "spectrum")?;
    let filters = mel_filter_matrix(bins, n_mels, f_min, f_max, sample_rate)?;
    let out = apply_filters(&filters, spectrum.data(), bins, n_mels);
    Ok(Tensor::new(vec![rows, n_mels], out).expect("mel shape"))
}

fn apply_filters(filters: &[f64], spectrum: &[f64], bins: usize, n_mels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(spectrum.len() / bins * n_mels);
    for row in spectrum.chunks_exact(bins) {
        out.extend(
            filters
                .chunks_exact(bins)
                .map(|f| f.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()),
        );
    }
    out
}

/// Orthonormal DCT-II matrix, row `k` = basis function `k`, shape `[n, n]` row-major.
pub fn dct2_matrix(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut m = Vec::with_capacity(n * n);
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        m.extend((0..n).map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos()));
    }
    m
}

/// Added to filterbank energies before the log.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    /// `[n_frames, n_mfcc]`
    pub coeffs: Tensor<f64>,
    pub frame_hop: usize,
    pub n_mfcc: usize,
}

impl MfccMatrix {
    pub fn n_frames(&self) -> usize {
        self.coeffs.shape()[0]
    }
}

/// Reusable extractor with the FFT plan, window and filter matrices precomputed.
pub struct MfccExtractor {
    params: MfccParams,
    sample_rate: u32,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filters: Vec<f64>,
    dct: Vec<f64>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor")
            .field("params", &self.params)
            .field("sample_rate", &self.sample_rate)
            .finish_non_exhaustive()
    }
}

impl MfccExtractor {
    pub fn new(params: MfccParams, sample_rate: u32) -> Result<Self> {
        params.validate(sample_rate)?;
        let bins = params.frame_len / 2 + 1;
        Ok(MfccExtractor {
            window: hann_window(params.frame_len),
            fft: plan(params.frame_len)?,
            filters: mel_filter_matrix(bins, params.n_mels, params.f_min, params.f_max, sample_rate)?,
            dct: dct2_matrix(params.n_mels),
            params,
            sample_rate,
        })
    }

    pub fn params(&self) -> &MfccParams {
        &self.params
    }

    pub fn compute(&self, w: &Waveform) -> Result<MfccMatrix> {
        if w.sample_rate() != self.sample_rate {
            return Err(AudioError::Input(format!(
                "waveform sampled at {} Hz, extractor expects {} Hz",
                w.sample_rate(),
                self.sample_rate
            )));
        }
        let MfccParams {
            frame_len,
            hop,
            n_mels,
            n_mfcc,
            ..
        } = self.params;
        let n = w.samples().len();
        if n < frame_len {
            return Err(AudioError::Input(format!(
                "waveform of {n} samples is shorter than one {frame_len}-sample frame"
            )));
        }
        let frames = frame_count(n, frame_len, hop);
        let mut windowed = Vec::with_capacity(frames * frame_len);
        for f in 0..frames {
            let seg = &w.samples()[f * hop..f * hop + frame_len];
            windowed.extend(seg.iter().zip(&self.window).map(|(s, h)| s * h));
        }
        let power = power_rows(self.fft.as_ref(), &windowed, frame_len);
        let energies = apply_filters(&self.filters, &power, frame_len / 2 + 1, n_mels);
        let mut coeffs = Vec::with_capacity(frames * n_mfcc);
        for row in energies.chunks_exact(n_mels) {
            let logs: Vec<f64> = row.iter().map(|e| (e + LOG_FLOOR).ln()).collect();
            coeffs.extend(
                self.dct
                    .chunks_exact(n_mels)
                    .take(n_mfcc)
                    .map(|basis| basis.iter().zip(&logs).map(|(a, b)| a * b).sum::<f64>()),
            );
        }
        let coeffs = Tensor::new(vec![frames, n_mfcc], coeffs).expect("mfcc shape");
        coeffs
            .ensure_finite("mfcc")
            .map_err(|e| AudioError::Input(e.to_string()))?;
        Ok(MfccMatrix {
            coeffs,
            frame_hop: hop,
            n_mfcc,
        })
    }
}

pub fn mfcc(w: &Waveform, params: &MfccParams) -> Result<MfccMatrix> {
    MfccExtractor::new(*params, w.sample_rate())?.compute(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f64>) -> Waveform {
        Waveform::new(samples, 16000).unwrap()
    }

    #[test]
    fn waveform_validation() {
        assert!(Waveform::new(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![], 16000).is_err());
        assert!(Waveform::new(vec![1.5], 16000).is_err());
        assert!(Waveform::new(vec![f64::NAN], 16000).is_err());
    }

    #[test]
    fn single_frame_when_length_equals_frame() {
        for hop in [1, 7, 512, 10_000] {
            let f = frame_and_window(&wave(vec![0.1; 512]), 512, hop).unwrap();
            assert_eq!(f.shape(), &[1, 512]);
        }
    }

    #[test]
    fn constant_signal_yields_window() {
        let f = frame_and_window(&wave(vec![1.0; 64]), 64, 32).unwrap();
        assert_eq!(f.data(), hann_window(64).as_slice());
        assert_eq!(f.data()[0], 0.0);
    }

    #[test]
    fn frame_count_formula() {
        let f = frame_and_window(&wave(vec![0.0; 1024]), 512, 256).unwrap();
        assert_eq!(f.shape()[0], 3);
        assert_eq!(frame_count(16000, 512, 256), 61);
        assert!(matches!(
            frame_and_window(&wave(vec![0.0; 100]), 512, 256),
            Err(AudioError::Input(_))
        ));
    }

    #[test]
    fn zero_and_non_power_of_two() {
        let z = Tensor::<f64>::zeros(&[2, 16]);
        assert!(power_spectrum(&z).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            power_spectrum(&Tensor::zeros(&[1, 12])),
            Err(AudioError::Parameter(_))
        ));
    }

    #[test]
    fn pure_tone_power() {
        let len = 64;
        let k = 5;
        let tone: Vec<f64> = (0..len)
            .map(|n| (2.0 * PI * k as f64 * n as f64 / len as f64).cos())
            .collect();
        let p = power_spectrum(&Tensor::new(vec![1, len], tone).unwrap()).unwrap();
        let expected = (len * len) as f64 / 4.0;
        for (bin, &v) in p.data().iter().enumerate() {
            if bin == k {
                assert!((v - expected).abs() < 1e-9 * expected);
            } else {
                assert!(v < 1e-18 * expected, "bin {bin}: {v}");
            }
        }
    }

    #[test]
    fn mel_scale_reference() {
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn filters_are_nonnegative_and_peak_near_center() {
        let bins = 257;
        let m = mel_filter_matrix(bins, 26, 0.0, 8000.0, 16000).unwrap();
        let lo = hz_to_mel(0.0);
        let hi = hz_to_mel(8000.0);
        for (j, row) in m.chunks_exact(bins).enumerate() {
            assert!(row.iter().all(|&w| w >= 0.0));
            let peak = row
                .iter()
                .enumerate()
                .fold(0, |b, (i, &w)| if w > row[b] { i } else { b });
            let center = mel_to_hz(lo + (hi - lo) * (j + 1) as f64 / 27.0) / 31.25;
            assert!(
                peak == center.floor() as usize || peak == center.ceil() as usize,
                "filter {j}: peak {peak} center {center}"
            );
            assert!(row[peak] > 0.0);
        }
    }

    #[test]
    fn zero_spectrum_gives_zero_energy() {
        let e = mel_filterbank(&Tensor::zeros(&[3, 257]), 26, 0.0, 8000.0, 16000).unwrap();
        assert_eq!(e.shape(), &[3, 26]);
        assert!(e.data().iter().all(|&v| v == 0.0));
        assert!(mel_filterbank(&Tensor::zeros(&[1, 257]), 1, 0.0, 8000.0, 16000).is_err());
        assert!(mel_filterbank(&Tensor::zeros(&[1, 257]), 26, 0.0, 9000.0, 16000).is_err());
    }

    #[test]
    fn silence_has_only_c0() {
        let m = mfcc(&wave(vec![0.0; 16000]), &MfccParams::default()).unwrap();
        assert_eq!(m.coeffs.shape(), &[61, 13]);
        let c0 = (26f64).sqrt() * LOG_FLOOR.ln();
        for row in m.coeffs.data().chunks_exact(13) {
            assert!((row[0] - c0).abs() < 1e-9);
            assert!(row[1..].iter().all(|c| c.abs() < 1e-9));
        }
    }

    #[test]
    fn rejects_mismatched_rate() {
        let ex = MfccExtractor::new(MfccParams::default(), 16000).unwrap();
        let w = Waveform::new(vec![0.0; 1024], 8000).unwrap();
        assert!(ex.compute(&w).is_err());
        assert!(MfccExtractor::new(MfccParams::default(), 8000).is_err());
    }
}
