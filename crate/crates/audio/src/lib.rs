//! Mono audio decoding and MFCC features.

mod dsp;
mod error;
pub mod wav;

pub use dsp::{
    dct2_matrix, frame_and_window, frame_count, hann_window, hz_to_mel, mel_filter_matrix,
    mel_filterbank, mel_to_hz, mfcc, power_spectrum, MfccExtractor, MfccMatrix, MfccParams,
    Waveform, LOG_FLOOR,
};
pub use error::{AudioError, Result};
