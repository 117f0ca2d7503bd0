//! Dataset `manifest.tsv`: `# key=value` generator lines, a column header, one row per episode.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{DataError, Result};
use crate::label::{Label, Quadrant, NUM_CLASSES};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const COLUMNS: &str = "id\tlabel\tpath\tseed\tsignal_region\tevent_time";

/// Episodes per class, indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts(pub [usize; NUM_CLASSES]);

impl ClassCounts {
    /// 68 SAFE, 22 LOC, 41 DIS, 33 EUA, 18 OTA, 43 SPC, 24 FCA.
    pub const FULL: ClassCounts = ClassCounts([68, 22, 41, 33, 18, 43, 24]);

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        match self.0.iter().position(|&c| c == 0) {
            Some(i) => Err(DataError::Config(format!(
                "class {} needs at least one episode",
                Label::ALL[i]
            ))),
            None => Ok(()),
        }
    }
}

impl Default for ClassCounts {
    fn default() -> Self {
        ClassCounts::FULL
    }
}

impl std::fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for ClassCounts {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != NUM_CLASSES {
            return Err(DataError::Config(format!(
                "expected {NUM_CLASSES} comma-separated counts, got {}",
                parts.len()
            )));
        }
        let mut counts = [0; NUM_CLASSES];
        for (c, p) in counts.iter_mut().zip(parts) {
            *c = p
                .parse()
                .map_err(|_| DataError::Config(format!("invalid count {p:?}")))?;
        }
        Ok(ClassCounts(counts))
    }
}

/// Settings shared by every generated episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenParams {
    /// square frame side in pixels
    pub frame_size: usize,
    /// frames rendered per episode before subsampling
    pub native_frames: usize,
    pub frame_rate_hz: f64,
    pub audio_secs: f64,
    pub sample_rate: u32,
    pub proprio_len: usize,
    pub pixel_noise: f64,
    pub sensor_noise: f64,
    pub audio_noise: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            frame_size: 32,
            native_frames: 16,
            frame_rate_hz: 0.25,
            audio_secs: 1.0,
            sample_rate: 16000,
            proprio_len: 50,
            pixel_noise: 0.03,
            sensor_noise: 0.02,
            audio_noise: 0.002,
        }
    }
}

impl GenParams {
    pub const KEYS: [&'static str; 9] = [
        "frame_size",
        "native_frames",
        "frame_rate_hz",
        "audio_secs",
        "sample_rate",
        "proprio_len",
        "pixel_noise",
        "sensor_noise",
        "audio_noise",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DataError::Config(m.to_string()));
        if !(8..=512).contains(&self.frame_size) {
            return bad("frame_size must lie in 8..=512");
        }
        if self.native_frames == 0 || self.native_frames > 1000 {
            return bad("native_frames must lie in 1..=1000");
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad("frame_rate_hz must be positive");
        }
        if !(self.audio_secs > 0.0 && self.audio_secs <= 30.0) {
            return bad("audio_secs must lie in (0, 30]");
        }
        if !(1000..=192_000).contains(&self.sample_rate) {
            return bad("sample_rate must lie in 1000..=192000");
        }
        if !(2..=100_000).contains(&self.proprio_len) {
            return bad("proprio_len must lie in 2..=100000");
        }
        for (name, v) in [
            ("pixel_noise", self.pixel_noise),
            ("sensor_noise", self.sensor_noise),
            ("audio_noise", self.audio_noise),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Simulated episode duration in seconds.
    pub fn duration(&self) -> f64 {
        self.native_frames as f64 / self.frame_rate_hz
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.native_frames)
            .map(|i| i as f64 / self.frame_rate_hz)
            .collect()
    }

    pub fn audio_len(&self) -> usize {
        (self.audio_secs * f64::from(self.sample_rate)).round() as usize
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || DataError::Config(format!("invalid value {value:?} for {key}"));
        let v = value.trim();
        match key {
            "frame_size" => self.frame_size = v.parse().map_err(|_| bad())?,
            "native_frames" => self.native_frames = v.parse().map_err(|_| bad())?,
            "frame_rate_hz" => self.frame_rate_hz = v.parse().map_err(|_| bad())?,
            "audio_secs" => self.audio_secs = v.parse().map_err(|_| bad())?,
            "sample_rate" => self.sample_rate = v.parse().map_err(|_| bad())?,
            "proprio_len" => self.proprio_len = v.parse().map_err(|_| bad())?,
            "pixel_noise" => self.pixel_noise = v.parse().map_err(|_| bad())?,
            "sensor_noise" => self.sensor_noise = v.parse().map_err(|_| bad())?,
            "audio_noise" => self.audio_noise = v.parse().map_err(|_| bad())?,
            _ => return Err(DataError::Config(format!("unknown generator key {key:?}"))),
        }
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("frame_size", self.frame_size.to_string()),
            ("native_frames", self.native_frames.to_string()),
            ("frame_rate_hz", self.frame_rate_hz.to_string()),
            ("audio_secs", self.audio_secs.to_string()),
            ("sample_rate", self.sample_rate.to_string()),
            ("proprio_len", self.proprio_len.to_string()),
            ("pixel_noise", self.pixel_noise.to_string()),
            ("sensor_noise", self.sensor_noise.to_string()),
            ("audio_noise", self.audio_noise.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub label: Label,
    /// episode directory relative to the dataset root
    pub path: String,
    pub seed: u64,
    pub signal_region: Quadrant,
    pub event_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dataset_seed: u64,
    pub params: GenParams,
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for r in &self.rows {
            c[r.label.index()] += 1;
        }
        c
    }

    pub fn row(&self, id: &str) -> Option<&ManifestRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn labelled_ids(&self) -> Vec<(String, Label)> {
        self.rows.iter().map(|r| (r.id.clone(), r.label)).collect()
    }
}

pub fn format_manifest(m: &DatasetManifest) -> String {
    let mut s = String::new();
    writeln!(s, "# dataset_seed={}", m.dataset_seed).unwrap();
    for (k, v) in m.params.pairs() {
        writeln!(s, "# {k}={v}").unwrap();
    }
    writeln!(s, "{COLUMNS}").unwrap();
    for r in &m.rows {
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{:.6}",
            r.id, r.label, r.path, r.seed, r.signal_region, r.event_time
        )
        .unwrap();
    }
    s
}

fn safe_relative(path: &str) -> bool {
    !path.is_empty()
        && !path.starts_with('/')
        && !path.contains('\\')
        && path.split('/').all(|c| !c.is_empty() && c != "." && c != "..")
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let err = |off: usize, msg: String| DataError::format(MANIFEST_FILE, off, msg);
    let mut params = GenParams::default();
    let mut dataset_seed = None;
    let mut rows: Vec<ManifestRow> = Vec::new();
    let mut seen_columns = false;
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.trim_end_matches(['\n', '\r']);
        let here = offset;
        offset += raw.len();
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if seen_columns {
                continue;
            }
            let Some((k, v)) = rest.split_once('=') else { continue };
            let k = k.trim();
            if k == "dataset_seed" {
                dataset_seed = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| err(here, format!("invalid dataset_seed {v:?}")))?,
                );
            } else {
                params.set(k, v).map_err(|e| err(here, e.to_string()))?;
            }
            continue;
        }
        if !seen_columns {
            if line != COLUMNS {
                return Err(err(here, format!("expected column header {COLUMNS:?}")));
            }
            seen_columns = true;
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(err(here, format!("expected 6 columns, got {}", f.len())));
        }
        let id = f[0].to_string();
        if id.is_empty() || id.contains(['/', '\\']) {
            return Err(err(here, format!("invalid episode id {id:?}")));
        }
        if rows.iter().any(|r| r.id == id) {
            return Err(err(here, format!("duplicate episode id {id}")));
        }
        if !safe_relative(f[2]) {
            return Err(err(here, format!("unsafe episode path {:?}", f[2])));
        }
        let event_time: f64 = f[5]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| err(here, format!("invalid event_time {:?}", f[5])))?;
        rows.push(ManifestRow {
            label: f[1].parse().map_err(|e: DataError| err(here, e.to_string()))?,
            path: f[2].to_string(),
            seed: f[3]
                .parse()
                .map_err(|_| err(here, format!("invalid seed {:?}", f[3])))?,
            signal_region: f[4].parse().map_err(|e: DataError| err(here, e.to_string()))?,
            event_time,
            id,
        });
    }
    if !seen_columns {
        return Err(err(offset, "missing column header".into()));
    }
    params.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(DatasetManifest {
        dataset_seed: dataset_seed.ok_or_else(|| err(0, "missing dataset_seed".into()))?,
        params,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DatasetManifest {
        DatasetManifest {
            dataset_seed: 9,
            params: GenParams::default(),
            rows: vec![ManifestRow {
                id: "e0".into(),
                label: Label::Fca,
                path: "e0".into(),
                seed: 123,
                signal_region: Quadrant::BottomLeft,
                event_time: 28.0,
            }],
        }
    }

    #[test]
    fn round_trip() {
        let text = format_manifest(&sample());
        assert_eq!(parse_manifest(&text).unwrap(), sample());
    }

    #[test]
    fn counts_parse() {
        assert_eq!("68,22,41,33,18,43,24".parse::<ClassCounts>().unwrap(), ClassCounts::FULL);
        assert_eq!(ClassCounts::FULL.total(), 249);
        assert!("0,1,1,1,1,1,1".parse::<ClassCounts>().unwrap().validate().is_err());
        assert!("1,2".parse::<ClassCounts>().is_err());
    }

    #[test]
    fn rejects_malformed() {
        let good = format_manifest(&sample());
        assert!(parse_manifest(&good.replace("\tFCA\t", "\tXYZ\t")).is_err());
        assert!(parse_manifest(&good.replace("\te0\t", "\t../x\t")).is_err());
        assert!(parse_manifest(&good.replace("# dataset_seed=9\n", "")).is_err());
        assert!(parse_manifest(&good.replace("frame_size=32", "frame_size=0")).is_err());
        assert!(parse_manifest(&good.replace("event_time", "when")).is_err());
        let dup = format!("{good}{}", good.lines().last().unwrap());
        assert!(parse_manifest(&dup).is_err());
    }
}
