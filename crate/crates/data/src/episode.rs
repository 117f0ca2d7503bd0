use std::path::Path;

use clue_audio::{wav, Waveform};
use clue_tensor::Tensor;

use crate::error::{DataError, Result};
use crate::label::{Label, Quadrant};
use crate::manifest::{parse_manifest, DatasetManifest, GenParams, ManifestRow, MANIFEST_FILE};
use crate::ppm::{encode_ppm, parse_ppm};
use crate::proprio::{format_proprio, parse_proprio, ProprioTrace};
use crate::split::temporal_subsample;

pub const AUDIO_FILE: &str = "audio.wav";
pub const PROPRIO_FILE: &str = "proprio.csv";

pub fn frame_file(i: usize) -> String {
    format!("frame_{i:03}.ppm")
}

/// One multimodal recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: String,
    pub label: Label,
    /// `[3, S, S]` images with values in [0, 1], one per timestamp
    pub frames: Vec<Tensor<f32>>,
    /// seconds, strictly ascending
    pub frame_times: Vec<f64>,
    pub audio: Waveform,
    pub proprio: ProprioTrace,
    pub seed: u64,
    /// quadrant holding the discriminative visual event
    pub signal_region: Quadrant,
    pub event_time: f64,
}

impl Episode {
    /// Frames kept by [`temporal_subsample`] at `rate_hz`, with their timestamps.
    pub fn subsampled(&self, rate_hz: f64) -> Result<(Vec<&Tensor<f32>>, Vec<f64>)> {
        let kept = temporal_subsample(&self.frame_times, rate_hz)?;
        Ok((
            kept.iter().map(|&i| &self.frames[i]).collect(),
            kept.iter().map(|&i| self.frame_times[i]).collect(),
        ))
    }

    /// Index of the first timestamp at or after the event, clamped to the last frame.
    pub fn event_frame(times: &[f64], event_time: f64) -> usize {
        times
            .iter()
            .position(|&t| t >= event_time - 1e-9)
            .unwrap_or(times.len().saturating_sub(1))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        for (i, frame) in self.frames.iter().enumerate() {
            let path = dir.join(frame_file(i));
            std::fs::write(&path, encode_ppm(frame)?).map_err(|e| DataError::io(path, e))?;
        }
        let path = dir.join(AUDIO_FILE);
        std::fs::write(&path, wav::encode_wav(&self.audio)).map_err(|e| DataError::io(path, e))?;
        let path = dir.join(PROPRIO_FILE);
        std::fs::write(&path, format_proprio(&self.proprio)).map_err(|e| DataError::io(path, e))
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| DataError::io(path, e))
}

/// Reads one episode directory described by a manifest row.
pub fn load_episode(dir: &Path, row: &ManifestRow, params: &GenParams) -> Result<Episode> {
    let wrap = |e: DataError| DataError::Episode {
        id: row.id.clone(),
        msg: e.to_string(),
    };
    let frames = (0..params.native_frames)
        .map(|i| {
            let name = frame_file(i);
            let img = parse_ppm(&read(&dir.join(&name))?).map_err(|e| e.in_file(&name))?;
            if img.shape() != [3, params.frame_size, params.frame_size] {
                return Err(DataError::format(
                    name,
                    0,
                    format!("image shape {:?}, expected side {}", img.shape(), params.frame_size),
                ));
            }
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    let audio = wav::parse_wav(&read(&dir.join(AUDIO_FILE)).map_err(wrap)?).map_err(|e| {
        wrap(match e {
            clue_audio::AudioError::Format { offset, msg } => DataError::format(AUDIO_FILE, offset, msg),
            other => DataError::Input(other.to_string()),
        })
    })?;
    let text = String::from_utf8(read(&dir.join(PROPRIO_FILE)).map_err(wrap)?)
        .map_err(|e| wrap(DataError::format(PROPRIO_FILE, e.utf8_error().valid_up_to(), "invalid UTF-8")))?;
    let proprio = parse_proprio(&text).map_err(wrap)?;
    Ok(Episode {
        id: row.id.clone(),
        label: row.label,
        frames,
        frame_times: params.frame_times(),
        audio,
        proprio,
        seed: row.seed,
        signal_region: row.signal_region,
        event_time: row.event_time,
    })
}

pub fn read_dataset_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    parse_manifest(&text)
}

/// Loads the manifest and every episode it lists, in manifest order.
pub fn load_dataset(root: &Path) -> Result<(DatasetManifest, Vec<Episode>)> {
    let manifest = read_dataset_manifest(root)?;
    let episodes = manifest
        .rows
        .iter()
        .map(|row| load_episode(&root.join(&row.path), row, &manifest.params))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, episodes))
}
