//! Finite-difference checks for every layer, over ten seeds each.

use clue_tensor::gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
use clue_tensor::layers::{Conv2d, Dense, LstmCell, RnnCell, SelfAttention};
use clue_tensor::rng::seeded;
use clue_tensor::{Graph, Init, Mode, ParamStore, Result, Tensor, Var};
use rand::Rng;

const SEEDS: std::ops::Range<u64> = 0..10;

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar readout `Σ out ⊙ r` with a fixed random `r`.
fn readout(g: &mut Graph<'_, f64>, out: Var, seed: u64) -> Result<Var> {
    let r = random(g.shape(out), &mut seeded(seed ^ 0xabc));
    let r = g.input(r);
    let prod = g.mul(out, r)?;
    Ok(g.sum(prod))
}

fn assert_pass(what: &str, seed: u64, report: GradCheckReport) {
    assert!(
        report.passed,
        "{what} seed {seed}: max rel err {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e})",
        report.max_rel_error,
        report.worst_param,
        report.worst_index,
        report.worst_analytic,
        report.worst_numeric
    );
}

#[test]
fn dense_layer() {
    for seed in SEEDS {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, "fc", 6, 4, &mut rng).unwrap();
        store.get_mut(layer.bias).value = random(&[4], &mut rng);
        let x = random(&[6], &mut rng);
        let report = gradient_check(
            &mut store,
            |g| {
                let xi = g.input(x.clone());
                let y = layer.forward(g, xi)?;
                readout(g, y, seed)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_pass("dense", seed, report);
    }
}

#[test]
fn dense_rows_and_input_gradient() {
    for seed in SEEDS {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let layer = Dense::new(&mut store, "fc", 5, 3, &mut rng).unwrap();
        store.add("x", random(&[4, 5], &mut rng)).unwrap();
        let xid = store.id("x").unwrap();
        let report = gradient_check(
            &mut store,
            |g| {
                let xi = g.param(xid);
                let y = layer.forward(g, xi)?;
                readout(g, y, seed)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_pass("dense rows", seed, report);
    }
}

#[test]
fn conv_relu_pool_stack() {
    for seed in SEEDS {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let c1 = Conv2d::new(&mut store, "c1", 2, 3, (3, 3), (1, 1), (1, 1), &mut rng).unwrap();
        let c2 = Conv2d::new(&mut store, "c2", 3, 4, (3, 2), (2, 1), (0, 1), &mut rng).unwrap();
        store.get_mut(c1.bias).value = random(&[3], &mut rng);
        store.add("x", random(&[2, 7, 6], &mut rng)).unwrap();
        let xid = store.id("x").unwrap();
        let report = gradient_check(
            &mut store,
            |g| {
                let x = g.param(xid);
                let h = c1.forward(g, x)?;
                let h = g.relu(h);
                let h = g.maxpool2d(h, (2, 2), (1, 1))?;
                let h = c2.forward(g, h)?;
                let h = g.relu(h);
                readout(g, h, seed)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_pass("conv stack", seed, report);
    }
}

#[test]
fn relu_sum_gradient_matches_oracle() {
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::from_vec(vec![-1.0, 3.0])).unwrap();
    let g = {
        let mut g = Graph::new(&store);
        let x = g.param(id);
        let y = g.relu(x);
        let s = g.sum(y);
        g.backward(s).unwrap().param(id).unwrap().clone()
    };
    assert_eq!(g.data(), &[0.0, 1.0]);
    let report = gradient_check(
        &mut store,
        |g| {
            let x = g.param(id);
            let y = g.relu(x);
            Ok(g.sum(y))
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed);
}

#[test]
fn lstm_through_time() {
    for seed in SEEDS {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "lstm", 3, 4, &mut rng).unwrap();
        store.get_mut(cell.bias).value = random(&[16], &mut rng);
        let xs: Vec<_> = (0..4).map(|_| random(&[3], &mut rng)).collect();
        let report = gradient_check(
            &mut store,
            |g| {
                let mut h = g.input(Tensor::zeros(&[4]));
                let mut c = g.input(Tensor::zeros(&[4]));
                for x in &xs {
                    let xi = g.input(x.clone());
                    (h, c) = cell.forward(g, xi, h, c)?;
                }
                Ok(g.sum(h))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_pass("lstm", seed, report);
    }
}

#[test]
fn rnn_through_time() {
    for seed in SEEDS {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let cell = RnnCell::new(&mut store, "rnn", 3, 4, &mut rng).unwrap();
        let xs: Vec<_> = (0..4).map(|_| random(&[3], &mut rng)).collect();
        let report = gradient_check(
            &mut store,
            |g| {
                let mut h = g.input(Tensor::zeros(&[4]));
                for x in &xs {
                    let xi = g.input(x.clone());
                    h = cell.forward(g, xi, h)?;
                }
                readout(g, h, seed)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_pass("rnn", seed, report);
    }
}

#[test]
fn self_attention_and_reductions() {
    for seed in SEEDS {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let att = SelfAttention::new(&mut store, "att", 4, &mut rng).unwrap();
        let proj = Dense::new(&mut store, "proj", 4, 4, &mut rng).unwrap();
        store.add("seq", random(&[5, 4], &mut rng)).unwrap();
        let sid = store.id("seq").unwrap();
        let report = gradient_check(
            &mut store,
            |g| {
                let seq = g.param(sid);
                let out = att.forward(g, seq)?;
                let d = proj.forward(g, out.output)?;
                let ctx = g.mean_rows(d)?;
                let last = g.row(seq, 4)?;
                let r = g.concat(&[ctx, last])?;
                readout(g, r, seed)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_pass("attention", seed, report);
    }
}

#[test]
fn weighted_cross_entropy_and_dropout() {
    for seed in SEEDS {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let fc = Dense::new(&mut store, "fc", 6, 7, &mut rng).unwrap();
        store.get_mut(fc.bias).value = random(&[7], &mut rng);
        let x = random(&[6], &mut rng);
        let weights: Vec<f64> = (0..7).map(|_| rng.random_range(0.5..2.0)).collect();
        let label = (seed % 7) as usize;
        let report = gradient_check(
            &mut store,
            |g| {
                let xi = g.input(x.clone());
                let xi = g.dropout(xi, 0.4, Mode::Train, &mut seeded(seed))?;
                let z = fc.forward(g, xi)?;
                g.softmax_cross_entropy(z, label, &weights)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_pass("cross entropy", seed, report);
    }
}

#[test]
fn softmax_and_global_pool() {
    for seed in SEEDS {
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let id = store.add("x", random(&[3, 4, 2], &mut rng)).unwrap();
        let report = gradient_check(
            &mut store,
            |g| {
                let x = g.param(id);
                let p = g.global_avg_pool(x)?;
                let s = g.softmax(p);
                let m = g.reshape(x, &[3, 8])?;
                let t = g.transpose(m)?;
                let sm = g.softmax(t);
                let a = readout(g, s, seed)?;
                let b = readout(g, sm, seed + 1)?;
                g.add(a, b)
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_pass("softmax/pool", seed, report);
    }
}

#[test]
fn corrupted_backward_is_caught() {
    let mut rng = seeded(11);
    let mut store = ParamStore::new();
    let layer = Dense::new(&mut store, "fc", 4, 3, &mut rng).unwrap();
    let x = random(&[4], &mut rng);
    let report = gradient_check(
        &mut store,
        |g| {
            let xi = g.input(x.clone());
            let y = layer.forward(g, xi)?;
            let y = g.corrupt_backward(y, 2.0);
            readout(g, y, 11)
        },
        &GradCheckOptions {
            kink_retries: 3,
            ..GradCheckOptions::default()
        },
    )
    .unwrap();
    assert!(!report.passed);
    assert!(report.max_rel_error > 0.4);
    assert_eq!(report.kink_retries, 0, "a smooth mismatch is never retried");
}

#[test]
fn kink_crossing_is_retried_at_a_smaller_step() {
    // x sits 2e-6 above the ReLU kink; a 1e-5 step straddles it
    let mut store = ParamStore::new();
    let id = store.add("x", Tensor::from_vec(vec![2e-6, 3.0])).unwrap();
    let loss = |g: &mut Graph<'_, f64>| {
        let x = g.param(id);
        let y = g.relu(x);
        Ok(g.sum(y))
    };
    let plain = gradient_check(&mut store, loss, &GradCheckOptions::default()).unwrap();
    assert!(!plain.passed);
    assert!((plain.worst_numeric - 0.6).abs() < 1e-9);
    let retried = gradient_check(
        &mut store,
        loss,
        &GradCheckOptions {
            kink_retries: 2,
            ..GradCheckOptions::default()
        },
    )
    .unwrap();
    assert!(retried.passed, "{retried:?}");
    assert_eq!(retried.kink_retries, 1);
}

#[test]
fn sampled_entries_cover_every_tensor() {
    let mut rng = seeded(3);
    let mut store = ParamStore::new();
    store
        .add_init("w", &[50, 40], Init::Uniform { bound: 1.0 }, &mut rng)
        .unwrap();
    let id = store.id("w").unwrap();
    let report = gradient_check(
        &mut store,
        |g| {
            let w = g.param(id);
            let t = g.tanh(w);
            Ok(g.sum(t))
        },
        &GradCheckOptions {
            max_entries_per_param: Some(7),
            ..GradCheckOptions::default()
        },
    )
    .unwrap();
    assert_eq!(report.entries_checked, 7);
    assert!(report.passed);
}
