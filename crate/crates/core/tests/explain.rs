//! Grad-CAM bounds, the channel-weight finite-difference oracle, overlays and weight files.

use clue_core::config::{BackboneKind, ModelConfig};
use clue_core::explain::{colormap, format_map_tsv, grad_cam, overlay, shifted_logit, upsample_aligned};
use clue_core::model::{ClueModel, InputDims, ModelInput, VisualInput};
use clue_data::ppm::encode_ppm;
use clue_data::{Label, Quadrant};
use clue_tensor::rng::seeded;
use clue_tensor::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn input(cfg: &ModelConfig, frames: usize, seed: u64) -> ModelInput<f64> {
    let mut rng = seeded(seed);
    let dims = InputDims::default();
    let s = cfg.backbone.input_size;
    ModelInput {
        visual: Some(VisualInput::Frames((0..frames).map(|_| random(&[3, s, s], &mut rng)).collect())),
        mfcc: Some(random(&[1, dims.mfcc_frames, dims.mfcc_coeffs], &mut rng)),
        proprio: Some(random(&[2, 1, dims.proprio_len], &mut rng)),
    }
}

#[test]
fn maps_are_bounded() {
    let cfg = ModelConfig::default();
    for seed in 0..10 {
        let model = ClueModel::<f64>::build(&cfg, InputDims::default(), seed).unwrap();
        let x = input(&cfg, 4, seed);
        let target = Label::from_index(seed as usize % 7).unwrap();
        let map = grad_cam(&model, &x, target, seed as usize % 4).unwrap();
        assert_eq!(map.values.shape(), &[2, 2]);
        assert_eq!(map.upsampled.shape(), &[32, 32]);
        for v in map.values.data().iter().chain(map.upsampled.data()) {
            assert!((0.0..=1.0).contains(v), "{v}");
        }
        if !map.is_zero {
            let hi = map.values.data().iter().cloned().fold(0.0, f64::max);
            assert_eq!(hi, 1.0);
        }
        let total: f64 = [Quadrant::TopLeft, Quadrant::TopRight, Quadrant::BottomLeft, Quadrant::BottomRight]
            .iter()
            .map(|&q| map.quadrant_mass(q))
            .sum();
        assert!(map.is_zero || (total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn every_backbone_has_a_tap() {
    for (kind, size) in [(BackboneKind::ResNet18, 32), (BackboneKind::AlexNet, 64), (BackboneKind::Vgg16, 64)] {
        let mut cfg = ModelConfig::default();
        cfg.backbone.kind = kind;
        cfg.backbone.input_size = size;
        let model = ClueModel::<f64>::build(&cfg, InputDims::default(), 1).unwrap();
        let map = grad_cam(&model, &input(&cfg, 2, 1), Label::Fca, 1).unwrap();
        assert_eq!(map.upsampled.shape(), &[size, size], "{kind}");
        let [c, h, w] = model.arch.visual.as_ref().unwrap().backbone.tap_shape();
        assert_eq!(map.values.shape(), &[h, w]);
        assert_eq!(map.alpha.len(), c);
    }
}

#[test]
fn channel_weights_match_finite_differences() {
    let cfg = ModelConfig::default();
    let delta = 1e-6;
    for seed in 0..10 {
        let model = ClueModel::<f64>::build(&cfg, InputDims::default(), seed).unwrap();
        let x = input(&cfg, 3, seed + 50);
        let frame = seed as usize % 3;
        let target = Label::from_index((seed as usize + 3) % 7).unwrap();
        let map = grad_cam(&model, &x, target, frame).unwrap();
        let [c, h, w] = model.arch.visual.as_ref().unwrap().backbone.tap_shape();
        for k in 0..c {
            let mut shift = vec![0.0; c];
            shift[k] = delta;
            let plus = shifted_logit(&model, &x, target, frame, &shift).unwrap();
            shift[k] = -delta;
            let minus = shifted_logit(&model, &x, target, frame, &shift).unwrap();
            let numeric = (plus - minus) / (2.0 * delta) / (h * w) as f64;
            let analytic = map.alpha[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-3, "seed {seed} channel {k}: analytic {analytic:.6e} numeric {numeric:.6e}");
        }
    }
}

#[test]
fn unshifted_logit_matches_prediction() {
    let cfg = ModelConfig::default();
    let model = ClueModel::<f64>::build(&cfg, InputDims::default(), 3).unwrap();
    let x = input(&cfg, 2, 3);
    let y = shifted_logit(&model, &x, Label::Spc, 0, &[0.0; 64]).unwrap();
    assert_eq!(y, model.predict(&x).unwrap().logits[Label::Spc.index()]);
    assert!(shifted_logit(&model, &x, Label::Spc, 0, &[0.0; 3]).is_err());
}

#[test]
fn visual_path_cut_gives_a_flagged_zero_map() {
    let cfg = ModelConfig::default();
    let mut model = ClueModel::<f64>::build(&cfg, InputDims::default(), 7).unwrap();
    for p in model.store.iter_mut().filter(|p| p.name.starts_with("visual.lstm")) {
        p.value.fill(0.0);
    }
    let map = grad_cam(&model, &input(&cfg, 3, 7), Label::Fca, 1).unwrap();
    assert!(map.is_zero);
    assert!(map.alpha.iter().all(|&a| a == 0.0));
    assert!(map.upsampled.data().iter().all(|&v| v == 0.0));
    assert_eq!(map.quadrant_mass(Quadrant::TopLeft), 0.0);
}

#[test]
fn invalid_requests_are_input_errors() {
    let cfg = ModelConfig::default();
    let model = ClueModel::<f64>::build(&cfg, InputDims::default(), 0).unwrap();
    let x = input(&cfg, 3, 0);
    assert!(grad_cam(&model, &x, Label::Fca, 3).is_err());
    let mut features = x.clone();
    features.visual = Some(VisualInput::Features(vec![Tensor::zeros(&[64]); 3]));
    assert!(grad_cam(&model, &features, Label::Fca, 0).is_err());
}

#[test]
fn overlay_colours_and_determinism() {
    let cfg = ModelConfig::default();
    let model = ClueModel::<f64>::build(&cfg, InputDims::default(), 2).unwrap();
    let x = input(&cfg, 2, 2);
    let mut map = grad_cam(&model, &x, Label::Ota, 0).unwrap();
    let frame = Tensor::<f32>::full(&[3, 32, 32], 0.4);
    assert_eq!(colormap(0.0), [0.0, 0.0, 1.0]);
    assert_eq!(colormap(1.0), [1.0, 0.0, 0.0]);

    map.upsampled = Tensor::zeros(&[32, 32]);
    let blue = overlay(&map, &frame).unwrap();
    let px = |img: &Tensor<f32>, i: usize| [img.data()[i], img.data()[1024 + i], img.data()[2048 + i]];
    assert!((0..1024).all(|i| px(&blue, i) == [0.2, 0.2, 0.7]));

    map.upsampled.data_mut()[5] = 1.0;
    let red = overlay(&map, &frame).unwrap();
    assert_eq!(px(&red, 5), [0.7, 0.2, 0.2]);
    assert_eq!(encode_ppm(&red).unwrap(), encode_ppm(&overlay(&map, &frame).unwrap()).unwrap());
    assert!(overlay(&map, &Tensor::zeros(&[3, 16, 16])).is_err());
    assert_eq!(format_map_tsv(&map).lines().count(), 2);
}

#[test]
fn weights_round_trip_and_reject_mismatches() {
    let cfg = ModelConfig::default();
    let dir = tempfile::tempdir().unwrap();
    let model = ClueModel::<f32>::build(&cfg, InputDims::default(), 1).unwrap();
    model.save_weights(dir.path()).unwrap();
    let mut other = ClueModel::<f32>::build(&cfg, InputDims::default(), 2).unwrap();
    assert_ne!(other.store.iter().next().unwrap().1.value, model.store.iter().next().unwrap().1.value);
    other.load_weights(dir.path()).unwrap();
    for ((_, a), (_, b)) in model.store.iter().zip(other.store.iter()) {
        assert_eq!(a.value, b.value, "{}", a.name);
    }

    let mut wider = cfg.clone();
    wider.lstm_hidden = 32;
    let mut mismatch = ClueModel::<f32>::build(&wider, InputDims::default(), 1).unwrap();
    assert!(mismatch.load_weights(dir.path()).unwrap_err().to_string().contains("shape mismatch"));

    let bdir = tempfile::tempdir().unwrap();
    model.save_backbone(bdir.path()).unwrap();
    let mut fresh = ClueModel::<f32>::build(&wider, InputDims::default(), 9).unwrap();
    fresh.load_backbone(bdir.path()).unwrap();
    let w = |m: &ClueModel<f32>| m.store.by_name("visual.backbone.conv1.weight").unwrap().value.clone();
    assert_eq!(w(&fresh), w(&model));
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b })
}

#[test]
fn desk_map_upsampling_hits_the_nodes() {
    let up = upsample_aligned(&[0.1, 0.9, 0.4, 0.0], 2, 2, 32, 32);
    assert_eq!(up[0], 0.1);
    assert_eq!(up[31], 0.9);
    assert_eq!(up[31 * 32], 0.4);
    assert_eq!(up[1023], 0.0);
    assert_eq!(upsample_aligned(&[0.7], 1, 1, 4, 4), vec![0.7; 16]);
}

proptest! {
    #[test]
    fn upsampling_keeps_the_peak_in_its_cell(
        h in 1usize..5, w in 1usize..5, kh in 1usize..9, kw in 1usize..9, seed in 0u64..1000,
    ) {
        // output sizes for which every source node lands on an output pixel
        let out_h = if h == 1 { kh } else { kh * (h - 1) + 1 };
        let out_w = if w == 1 { kw } else { kw * (w - 1) + 1 };
        prop_assume!(out_h >= h && out_w >= w);
        let mut rng = seeded(seed);
        let plane: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        let up = upsample_aligned(&plane, h, w, out_h, out_w);
        let dst = argmax(&up);
        let (y, x) = (dst / out_w, dst % out_w);
        prop_assert_eq!(up[dst], plane[argmax(&plane)]);
        prop_assert_eq!((y * h / out_h) * w + x * w / out_w, argmax(&plane));
    }
}
