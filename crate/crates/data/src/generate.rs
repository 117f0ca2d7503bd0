//! Class-conditioned synthetic episodes.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::Path;

use clue_audio::Waveform;
use clue_tensor::rng::{derive_seed, seeded, Prng};
use clue_tensor::Tensor;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::episode::Episode;
use crate::error::{DataError, Result};
use crate::label::{Label, Quadrant};
use crate::manifest::{format_manifest, ClassCounts, DatasetManifest, GenParams, ManifestRow, MANIFEST_FILE};
use crate::proprio::ProprioTrace;
use crate::render::{Canvas, Shape, Texture, CONTAINER, OBJECT};

const OBJECT_RADIUS: f64 = 0.09;
const CONTAINER_HALF: (f64, f64) = (0.16, 0.11);

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn lerp(a: (f64, f64), b: (f64, f64), s: f64) -> (f64, f64) {
    (a.0 + (b.0 - a.0) * s, a.1 + (b.1 - a.1) * s)
}

fn jitter(q: Quadrant, spread: f64, rng: &mut Prng) -> (f64, f64) {
    let (x, y) = q.center();
    (
        x + rng.random_range(-spread..spread),
        y + rng.random_range(-spread..spread),
    )
}

/// Per-episode random layout, drawn once before any frame is rendered.
struct Scene {
    label: Label,
    signal: Quadrant,
    container: (f64, f64),
    event_frame: usize,
    texture: Texture,
    /// class-specific object positions, interpretation depends on `label`
    anchors: Vec<(f64, f64)>,
    targets: Vec<(f64, f64)>,
}

impl Scene {
    fn new(label: Label, params: &GenParams, rng: &mut Prng) -> Self {
        let signal = *Quadrant::ALL.choose(rng).expect("quadrants");
        let others: Vec<Quadrant> = Quadrant::ALL.into_iter().filter(|&q| q != signal).collect();
        let container_q = *others.choose(rng).expect("quadrants");
        let container = jitter(container_q, 0.04, rng);
        let n = params.native_frames;
        let lo = (3 * n / 8).max(1).min(n.saturating_sub(1));
        let hi = (5 * n / 8).max(lo).min(n.saturating_sub(1));
        let event_frame = rng.random_range(lo..=hi);
        let texture = Texture::random(rng);
        let (mut anchors, mut targets) = (Vec::new(), Vec::new());
        match label {
            Label::Safe | Label::Dis | Label::Ota => anchors.push(jitter(signal, 0.08, rng)),
            Label::Loc => {
                let free: Vec<Quadrant> = others
                    .iter()
                    .copied()
                    .filter(|&q| q != container_q)
                    .collect();
                anchors.push(jitter(*free.choose(rng).expect("free quadrant"), 0.08, rng));
                targets.push(jitter(signal, 0.08, rng));
            }
            Label::Eua => {
                let (x, y) = jitter(signal, 0.05, rng);
                for k in 0..3 {
                    anchors.push((x, y - 0.12 + 0.12 * k as f64));
                    targets.push((x + rng.random_range(-0.15..0.15), y + 0.13));
                }
            }
            Label::Spc => {
                for _ in 0..10 {
                    anchors.push((
                        container.0 + rng.random_range(-0.1..0.1),
                        container.1 + rng.random_range(-0.06..0.06),
                    ));
                    targets.push(jitter(signal, 0.15, rng));
                }
            }
            Label::Fca => {
                anchors.push((container.0, container.1 - CONTAINER_HALF.1));
                targets.push(jitter(signal, 0.08, rng));
            }
        }
        Scene {
            label,
            signal,
            container,
            event_frame,
            texture,
            anchors,
            targets,
        }
    }

    fn shapes(&self, f: usize, n: usize) -> Vec<Shape> {
        let after = f >= self.event_frame;
        // event progress, 0 before the event and 1 once it has fully played out
        let progress = |frames: f64| {
            if after {
                ((f - self.event_frame + 1) as f64 / frames).min(1.0)
            } else {
                0.0
            }
        };
        let disc = |(x, y): (f64, f64), r: f64| Shape::Disc { x, y, r };
        match self.label {
            Label::Safe => {
                let s = 0.7 * f as f64 / (n.max(2) - 1) as f64;
                vec![disc(lerp(self.anchors[0], self.container, s), OBJECT_RADIUS)]
            }
            Label::Loc => {
                let p = if after { self.targets[0] } else { self.anchors[0] };
                vec![disc(p, OBJECT_RADIUS)]
            }
            Label::Dis => {
                if after {
                    vec![]
                } else {
                    vec![disc(self.anchors[0], OBJECT_RADIUS)]
                }
            }
            Label::Eua => {
                let s = smoothstep(progress(2.0));
                self.anchors
                    .iter()
                    .zip(&self.targets)
                    .map(|(&a, &t)| disc(lerp(a, t, s), 0.06))
                    .collect()
            }
            Label::Ota => {
                let s = smoothstep(progress(2.0));
                let (x, y) = self.anchors[0];
                vec![Shape::Rect {
                    x: x + 0.05 * s,
                    y: y + 0.08 * s,
                    half_w: 0.05,
                    half_h: 0.15,
                    angle: FRAC_PI_2 * s,
                }]
            }
            Label::Spc => {
                let s = smoothstep(progress(3.0));
                self.anchors
                    .iter()
                    .zip(&self.targets)
                    .map(|(&a, &t)| disc(lerp(a, t, s), 0.03))
                    .collect()
            }
            Label::Fca => {
                let p = if after { self.targets[0] } else { self.anchors[0] };
                vec![disc(p, OBJECT_RADIUS)]
            }
        }
    }

    fn render(&self, params: &GenParams, rng: &mut Prng) -> Vec<Tensor<f32>> {
        let n = params.native_frames;
        (0..n)
            .map(|f| {
                let mut canvas = Canvas::new(params.frame_size, &self.texture);
                canvas.draw(
                    &Shape::Rect {
                        x: self.container.0,
                        y: self.container.1,
                        half_w: CONTAINER_HALF.0,
                        half_h: CONTAINER_HALF.1,
                        angle: 0.0,
                    },
                    CONTAINER,
                );
                for shape in self.shapes(f, n) {
                    canvas.draw(&shape, OBJECT);
                }
                canvas.add_noise(params.pixel_noise, rng);
                canvas.into_tensor()
            })
            .collect()
    }
}

fn synth_audio(label: Label, params: &GenParams, rng: &mut Prng) -> Result<Waveform> {
    let n = params.audio_len();
    let sr = f64::from(params.sample_rate);
    let secs = n as f64 / sr;
    let mut x: Vec<f64> = if params.audio_noise > 0.0 {
        let floor = Normal::new(0.0, params.audio_noise).expect("finite noise");
        (0..n).map(|_| floor.sample(rng)).collect()
    } else {
        vec![0.0; n]
    };
    let onset = rng.random_range(0.35..0.65) * secs;
    let start = (onset * sr) as usize;
    match label {
        Label::Safe | Label::Loc | Label::Dis => {}
        Label::Eua => {
            let amp = rng.random_range(0.35..0.5);
            for (i, v) in x.iter_mut().enumerate().skip(start) {
                let t = (i - start) as f64 / sr;
                let env = (t / 0.005).min(1.0) * (-t / 0.12).exp();
                let z: f64 = StandardNormal.sample(rng);
                *v += amp * env * z;
            }
        }
        Label::Ota | Label::Fca => {
            let amp = rng.random_range(0.5..0.7);
            let freq = rng.random_range(60.0..180.0);
            let decay = rng.random_range(15.0..30.0);
            for (i, v) in x.iter_mut().enumerate().skip(start) {
                let t = (i - start) as f64 / sr;
                *v += amp * (-decay * t).exp() * (TAU * freq * t).sin();
            }
        }
        Label::Spc => {
            let grains = rng.random_range(25..=40);
            let width = ((0.003 * sr) as usize).max(2);
            for _ in 0..grains {
                let at = (rng.random_range(0.05..0.95) * n as f64) as usize;
                let amp = rng.random_range(0.08..0.2);
                for k in 0..width.min(n - at) {
                    let env = 0.5 - 0.5 * (TAU * k as f64 / (width - 1) as f64).cos();
                    let z: f64 = StandardNormal.sample(rng);
                    x[at + k] += amp * env * z;
                }
            }
        }
    }
    // snap to the PCM16 grid so that saved and in-memory episodes agree
    let samples = x
        .into_iter()
        .map(|v| (v * 32768.0).round().clamp(-32768.0, 32767.0) / 32768.0)
        .collect();
    Waveform::new(samples, params.sample_rate).map_err(|e| DataError::Config(e.to_string()))
}

fn synth_proprio(label: Label, params: &GenParams, event_time: f64, rng: &mut Prng) -> Result<ProprioTrace> {
    let n = params.proprio_len;
    let dur = params.duration();
    let times: Vec<f64> = (0..n).map(|i| snap(i as f64 * dur / n as f64)).collect();
    let grasp = rng.random_range(0.1..0.2) * dur;
    let missed = matches!(label, Label::Loc | Label::Dis);
    let closure = if missed { 1.0 } else { rng.random_range(0.6..0.7) };
    let hold = if missed { 0.05 } else { rng.random_range(0.5..0.65) };
    let spike = (rng.random_range(0.25..0.35), rng.random_range(0.02..0.06) * dur);
    let noise = Normal::new(0.0, params.sensor_noise).expect("finite noise");
    let mut values = Vec::with_capacity(2 * n);
    for &t in &times {
        let grip = smoothstep((t - grasp) / (0.05 * dur));
        let openness = 1.0 - closure * grip;
        let mut force = if missed {
            hold
        } else {
            hold * smoothstep((t - grasp) / (0.08 * dur))
        };
        match label {
            Label::Eua => force *= 1.0 - 0.8 * smoothstep((t - event_time) / (0.03 * dur)),
            Label::Ota | Label::Fca => {
                force += spike.0 * (-((t - event_time) / spike.1).powi(2)).exp();
            }
            _ => {}
        }
        for v in [openness, force] {
            values.push(snap((v + noise.sample(rng)).clamp(0.0, 1.0)));
        }
    }
    ProprioTrace::new(times, Tensor::new(vec![n, 2], values).expect("proprio shape"))
}

/// Rounds to the 6-decimal text representation used in `proprio.csv`.
fn snap(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float")
}

pub fn generate_episode(label: Label, seed: u64, id: &str, params: &GenParams) -> Result<Episode> {
    params.validate()?;
    let mut rng = seeded(seed);
    let scene = Scene::new(label, params, &mut rng);
    let frames = scene.render(params, &mut rng);
    let event_time = snap(scene.event_frame as f64 / params.frame_rate_hz);
    let audio = synth_audio(label, params, &mut rng)?;
    let proprio = synth_proprio(label, params, event_time, &mut rng)?;
    Ok(Episode {
        id: id.to_string(),
        label,
        frames,
        frame_times: params.frame_times(),
        audio,
        proprio,
        seed,
        signal_region: scene.signal,
        event_time,
    })
}

pub fn episode_seed(dataset_seed: u64, label: Label, index: usize) -> u64 {
    derive_seed(&[dataset_seed, label.index() as u64, index as u64])
}

/// Generates every episode in memory, in label order with ids `e0`, `e1`, ...
pub fn generate_episodes(
    counts: &ClassCounts,
    dataset_seed: u64,
    params: &GenParams,
) -> Result<(DatasetManifest, Vec<Episode>)> {
    counts.validate()?;
    params.validate()?;
    let mut rows = Vec::with_capacity(counts.total());
    let mut episodes = Vec::with_capacity(counts.total());
    for label in Label::ALL {
        for index in 0..counts.0[label.index()] {
            let id = format!("e{}", rows.len());
            let seed = episode_seed(dataset_seed, label, index);
            let episode = generate_episode(label, seed, &id, params)?;
            rows.push(ManifestRow {
                path: id.clone(),
                id,
                label,
                seed,
                signal_region: episode.signal_region,
                event_time: episode.event_time,
            });
            episodes.push(episode);
        }
    }
    let manifest = DatasetManifest {
        dataset_seed,
        params: *params,
        rows,
    };
    Ok((manifest, episodes))
}

/// Writes every episode plus `manifest.tsv` under `out_dir`.
pub fn generate_dataset(
    counts: &ClassCounts,
    dataset_seed: u64,
    params: &GenParams,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let (manifest, episodes) = generate_episodes(counts, dataset_seed, params)?;
    std::fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    for (row, episode) in manifest.rows.iter().zip(&episodes) {
        episode.save(&out_dir.join(&row.path))?;
    }
    let path = out_dir.join(MANIFEST_FILE);
    std::fs::write(&path, format_manifest(&manifest)).map_err(|e| DataError::io(path, e))?;
    Ok(manifest)
}
