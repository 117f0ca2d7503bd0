//! Dimension algebra, structural properties and finite-difference checks of the full model.

use clue_core::config::{BackboneKind, ModalityMask, ModelConfig, RecurrentKind};
use clue_core::model::{ClueModel, InputDims, ModelInput, VisualInput};
use clue_tensor::gradcheck::{gradient_check, GradCheckOptions};
use clue_tensor::rng::seeded;
use clue_tensor::{Graph, Mode, Tensor};
use rand::Rng;

const SEEDS: std::ops::Range<u64> = 0..10;

fn random(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn desk_input(cfg: &ModelConfig, dims: InputDims, frames: usize, seed: u64) -> ModelInput<f64> {
    let mut rng = seeded(seed ^ 0x5eed);
    let s = cfg.backbone.input_size;
    ModelInput {
        visual: Some(VisualInput::Frames((0..frames).map(|_| random(&[3, s, s], 0.0, 1.0, &mut rng)).collect())),
        mfcc: Some(random(&[1, dims.mfcc_frames, dims.mfcc_coeffs], -2.0, 2.0, &mut rng)),
        proprio: Some(random(&[2, 1, dims.proprio_len], 0.0, 1.0, &mut rng)),
    }
}

fn features_input(feature_dim: usize, frames: usize, dims: InputDims, seed: u64) -> ModelInput<f64> {
    let mut rng = seeded(seed);
    ModelInput {
        visual: Some(VisualInput::Features((0..frames).map(|_| random(&[feature_dim], 0.0, 1.0, &mut rng)).collect())),
        mfcc: Some(random(&[1, dims.mfcc_frames, dims.mfcc_coeffs], -1.0, 1.0, &mut rng)),
        proprio: Some(random(&[2, 1, dims.proprio_len], 0.0, 1.0, &mut rng)),
    }
}

fn dims_of(model: &ClueModel<f64>, input: &ModelInput<f64>) -> [usize; 4] {
    let mut g = Graph::new(&model.store);
    let out = model.arch.forward(&mut g, input, Mode::Eval, &mut seeded(0), None).unwrap();
    let d = |v: Option<clue_tensor::Var>| v.map_or(0, |v| g.shape(v).iter().product());
    [d(out.r_v), d(out.r_a), d(out.r_p), g.shape(out.r_fused)[0]]
}

#[test]
fn full_scale_dimensions() {
    let cfg = ModelConfig::full_size();
    let dims = InputDims::default();
    let model = ClueModel::<f64>::build(&cfg, dims, 0).unwrap();
    let vis = model.arch.visual.as_ref().unwrap();
    assert_eq!(vis.backbone.feature_dim(), 25088);
    assert_eq!(model.arch.fused_dim(), 1152);
    let input = features_input(25088, 2, dims, 1);
    assert_eq!(dims_of(&model, &input), [1024, 64, 64, 1152]);

    let mut visual_only = cfg.clone();
    visual_only.modalities = ModalityMask { visual: true, audio: false, proprio: false };
    let model = ClueModel::<f64>::build(&visual_only, dims, 0).unwrap();
    assert_eq!(model.arch.fused_dim(), 1024);
    assert!(model.store.by_name("audio.dense.weight").is_none());
}

#[test]
fn fused_width_follows_the_mask_for_every_combination() {
    let cfg = ModelConfig::default();
    let dims = InputDims::default();
    for bits in 1u8..8 {
        let mut c = cfg.clone();
        c.modalities = ModalityMask { visual: bits & 1 != 0, audio: bits & 2 != 0, proprio: bits & 4 != 0 };
        let model = ClueModel::<f64>::build(&c, dims, 3).unwrap();
        let expected = usize::from(c.modalities.visual) * 2 * c.lstm_hidden
            + usize::from(c.modalities.audio) * c.audio_dim
            + usize::from(c.modalities.proprio) * c.proprio_dim;
        assert_eq!(model.arch.fused_dim(), expected, "mask {}", c.modalities);
        let input = desk_input(&c, dims, 3, 1);
        assert_eq!(dims_of(&model, &input)[3], expected);
    }
    let mut none = cfg;
    none.modalities = ModalityMask { visual: false, audio: false, proprio: false };
    assert!(ClueModel::<f64>::build(&none, dims, 0).is_err());
}

#[test]
fn desk_visual_vector_is_twice_the_hidden_size() {
    let cfg = ModelConfig::default();
    let model = ClueModel::<f64>::build(&cfg, InputDims::default(), 2).unwrap();
    let input = desk_input(&cfg, InputDims::default(), 4, 2);
    assert_eq!(dims_of(&model, &input), [128, 64, 64, 256]);
}

#[test]
fn attention_weights_are_row_stochastic() {
    let cfg = ModelConfig::default();
    for seed in SEEDS {
        let model = ClueModel::<f64>::build(&cfg, InputDims::default(), seed).unwrap();
        let frames = 1 + seed as usize % 6;
        let input = desk_input(&cfg, InputDims::default(), frames, seed);
        let mut g = Graph::new(&model.store);
        let out = model.arch.forward(&mut g, &input, Mode::Eval, &mut seeded(0), None).unwrap();
        let a = g.value(out.attention.unwrap());
        assert_eq!(a.shape(), &[frames, frames]);
        for row in a.data().chunks(frames) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        if frames == 1 {
            assert_eq!(a.data(), &[1.0]);
        }
    }
}

#[test]
fn frame_order_matters() {
    let cfg = ModelConfig::default();
    let model = ClueModel::<f64>::build(&cfg, InputDims::default(), 4).unwrap();
    let input = features_input(64, 5, InputDims::default(), 9);
    let r_v = |input: &ModelInput<f64>| {
        let mut g = Graph::new(&model.store);
        let out = model.arch.forward(&mut g, input, Mode::Eval, &mut seeded(0), None).unwrap();
        g.value(out.r_v.unwrap()).clone()
    };
    let base = r_v(&input);
    let mut reversed = input.clone();
    if let Some(VisualInput::Features(f)) = reversed.visual.as_mut() {
        f.reverse();
    }
    assert!(base.max_abs_diff(&r_v(&reversed)) > 0.0);
}

#[test]
fn eval_is_deterministic_and_ignores_the_rng() {
    let cfg = ModelConfig::default();
    let model = ClueModel::<f64>::build(&cfg, InputDims::default(), 5).unwrap();
    let input = desk_input(&cfg, InputDims::default(), 3, 5);
    let logits = |seed| {
        let mut g = Graph::new(&model.store);
        let out = model.arch.forward(&mut g, &input, Mode::Eval, &mut seeded(seed), None).unwrap();
        g.value(out.logits).clone()
    };
    let a = logits(1);
    assert_eq!(a, logits(2));
    let p = model.predict(&input).unwrap();
    assert_eq!(p, model.predict(&input).unwrap());
    assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let best = p.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(p.predicted, p.probs.iter().position(|&v| v == best).unwrap());

    let mut g = Graph::new(&model.store);
    let train = model.arch.forward(&mut g, &input, Mode::Train, &mut seeded(1), None).unwrap();
    assert!(g.value(train.logits).max_abs_diff(&a) > 0.0, "dropout is active in training");
}

#[test]
fn disabling_attention_removes_its_parameters() {
    let mut cfg = ModelConfig::default();
    let with = ClueModel::<f64>::build(&cfg, InputDims::default(), 0).unwrap();
    cfg.attention = false;
    let without = ClueModel::<f64>::build(&cfg, InputDims::default(), 0).unwrap();
    let names = |m: &ClueModel<f64>| m.store.iter().map(|(_, p)| p.name.clone()).collect::<Vec<_>>();
    let removed: Vec<_> = names(&with).into_iter().filter(|n| !names(&without).contains(n)).collect();
    assert!(!removed.is_empty());
    assert!(removed.iter().all(|n| n.starts_with("visual.attention")));
    assert!(names(&without).iter().all(|n| !n.contains("attention")));
    let input = desk_input(&cfg, InputDims::default(), 3, 0);
    assert_eq!(dims_of(&without, &input)[0], 128);
}

#[test]
fn recurrent_variants_and_backbones_build() {
    let dims = InputDims::default();
    for kind in [RecurrentKind::Lstm, RecurrentKind::Rnn] {
        for layers in [1, 2] {
            let mut cfg = ModelConfig::default();
            cfg.recurrent = kind;
            cfg.lstm_layers = layers;
            let model = ClueModel::<f64>::build(&cfg, dims, 1).unwrap();
            let input = desk_input(&cfg, dims, 3, 1);
            assert_eq!(dims_of(&model, &input)[0], 128);
        }
    }
    for (kind, size, ap) in [
        (BackboneKind::ResNet18, 32, true),
        (BackboneKind::ResNet18, 32, false),
        (BackboneKind::AlexNet, 64, false),
        (BackboneKind::Vgg16, 64, false),
    ] {
        let mut cfg = ModelConfig::default();
        cfg.backbone.kind = kind;
        cfg.backbone.input_size = size;
        cfg.backbone.with_avg_pool = ap;
        let model = ClueModel::<f64>::build(&cfg, dims, 1).unwrap();
        let input = desk_input(&cfg, dims, 2, 1);
        assert_eq!(dims_of(&model, &input), [128, 64, 64, 256], "{kind}");
    }
}

#[test]
fn rectangular_audio_kernels() {
    let mut cfg = ModelConfig::default();
    cfg.set_rectangular_audio();
    let dims = InputDims::default();
    let model = ClueModel::<f64>::build(&cfg, dims, 1).unwrap();
    let input = desk_input(&cfg, dims, 2, 1);
    assert_eq!(dims_of(&model, &input)[1], 64);
    let short = InputDims { mfcc_frames: 15, ..dims };
    let err = ClueModel::<f64>::build(&cfg, short, 1).unwrap_err().to_string();
    assert!(err.contains("at least 16"), "{err}");
}

#[test]
fn degenerate_inputs() {
    let cfg = ModelConfig::default();
    let dims = InputDims::default();
    let model = ClueModel::<f64>::build(&cfg, dims, 1).unwrap();
    let mut input = desk_input(&cfg, dims, 2, 1);
    input.mfcc = Some(Tensor::zeros(&[1, dims.mfcc_frames, dims.mfcc_coeffs]));
    input.proprio = Some(Tensor::full(&[2, 1, dims.proprio_len], 0.5));
    let p = model.predict(&input).unwrap();
    assert!(p.logits.iter().all(|v| v.is_finite()));
    assert_eq!(p, model.predict(&input).unwrap());

    let mut missing = input.clone();
    missing.proprio = None;
    assert!(model.predict(&missing).unwrap_err().to_string().contains("proprio"));
    let mut empty = input.clone();
    empty.visual = Some(VisualInput::Frames(vec![]));
    assert!(model.predict(&empty).is_err());
    let mut wrong = input;
    wrong.visual = Some(VisualInput::Features(vec![Tensor::zeros(&[63])]));
    assert!(model.predict(&wrong).is_err());
    assert!(ClueModel::<f64>::build(&cfg, InputDims { proprio_len: 4, ..dims }, 1).is_err());
}

fn grad_opts(tolerance: f64, seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        step: 1e-5,
        tolerance,
        max_entries_per_param: Some(6),
        sample_seed: seed,
        abs_floor: 1e-6,
        kink_retries: 2,
    }
}

/// Weighted cross-entropy in training mode with a dropout mask fixed per seed.
fn check_model(cfg: &ModelConfig, frames: usize, tolerance: f64, what: &str) {
    let dims = InputDims { mfcc_frames: 20, ..InputDims::default() };
    let weights = [1.0, 2.0, 0.5, 1.5, 1.0, 0.7, 1.3];
    for seed in SEEDS {
        let ClueModel { arch, mut store } = ClueModel::<f64>::build(cfg, dims, seed).unwrap();
        let input = desk_input(cfg, dims, frames, seed);
        let label = seed as usize % 7;
        let report = gradient_check(
            &mut store,
            |g| {
                let out = arch.forward(g, &input, Mode::Train, &mut seeded(seed + 100), None).expect("forward");
                g.softmax_cross_entropy(out.logits, label, &weights)
            },
            &grad_opts(tolerance, seed),
        )
        .unwrap();
        assert!(
            report.passed,
            "{what} seed {seed}: rel err {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}, {} kink retries)",
            report.max_rel_error, report.worst_param, report.worst_index, report.worst_analytic, report.worst_numeric, report.kink_retries
        );
    }
}

fn only(v: bool, a: bool, p: bool) -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.lstm_hidden = 12;
    cfg.fusion_hidden = 16;
    cfg.backbone_trainable = true;
    cfg.modalities = ModalityMask { visual: v, audio: a, proprio: p };
    cfg
}

#[test]
fn gradient_check_visual_stream() {
    check_model(&only(true, false, false), 3, 1e-4, "visual");
}

#[test]
fn gradient_check_visual_stream_without_attention_and_with_rnn() {
    let mut cfg = only(true, false, false);
    cfg.attention = false;
    check_model(&cfg, 3, 1e-4, "visual no attention");
    cfg.attention = true;
    cfg.recurrent = RecurrentKind::Rnn;
    cfg.lstm_layers = 2;
    check_model(&cfg, 3, 1e-4, "visual rnn");
}

#[test]
fn gradient_check_audio_stream() {
    check_model(&only(false, true, false), 1, 1e-4, "audio");
    let mut rect = only(false, true, false);
    rect.set_rectangular_audio();
    check_model(&rect, 1, 1e-4, "audio rectangular");
}

#[test]
fn gradient_check_proprio_stream() {
    check_model(&only(false, false, true), 1, 1e-4, "proprio");
}

#[test]
fn gradient_check_end_to_end() {
    let mut cfg = only(true, true, true);
    cfg.fusion_relu = true;
    check_model(&cfg, 3, 1e-3, "end to end");
}
