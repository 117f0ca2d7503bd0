use std::collections::BTreeMap;

use clue_tensor::rng::{derive_seed, seeded};
use rand::seq::SliceRandom;

use crate::error::{DataError, Result};
use crate::label::{Label, NUM_CLASSES};

/// Keeps the earliest frame in each `1/rate_hz` window measured from the first timestamp.
///
/// Returns the indices of the kept frames.
pub fn temporal_subsample(timestamps: &[f64], rate_hz: f64) -> Result<Vec<usize>> {
    if timestamps.is_empty() {
        return Err(DataError::Input("no frames to subsample".into()));
    }
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(DataError::Config(format!("sampling rate {rate_hz} must be positive")));
    }
    if !timestamps.windows(2).all(|w| w[0] < w[1]) {
        return Err(DataError::Input("frame timestamps must be strictly ascending".into()));
    }
    let period = 1.0 / rate_hz;
    let t0 = timestamps[0];
    let mut kept = Vec::new();
    let mut last_window = None;
    for (i, &t) in timestamps.iter().enumerate() {
        // small tolerance so that t0 + k·period lands in window k despite rounding
        let window = ((t - t0) / period + 1e-9).floor() as i64;
        if last_window != Some(window) {
            kept.push(i);
            last_window = Some(window);
        }
    }
    Ok(kept)
}

/// Per-class test count `max(1, round((1 - train_frac) · n))`.
pub fn test_count(n: usize, train_frac: f64) -> usize {
    (((1.0 - train_frac) * n as f64).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Per-class seeded shuffle; the first `test_count` ids of each class go to the test set.
pub fn stratified_split(items: &[(String, Label)], train_frac: f64, seed: u64) -> Result<Split> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DataError::Config(format!("train fraction {train_frac} must lie in (0, 1)")));
    }
    let mut by_class: BTreeMap<Label, Vec<&str>> = BTreeMap::new();
    for (id, label) in items {
        by_class.entry(*label).or_default().push(id);
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (label, mut ids) in by_class {
        if ids.len() < 2 {
            return Err(DataError::Data(format!(
                "class {label} has {} episode(s), need at least 2 to split",
                ids.len()
            )));
        }
        ids.shuffle(&mut seeded(derive_seed(&[seed, label.index() as u64])));
        let n_test = test_count(ids.len(), train_frac).min(ids.len() - 1);
        split.test.extend(ids[..n_test].iter().map(|s| s.to_string()));
        split.train.extend(ids[n_test..].iter().map(|s| s.to_string()));
    }
    Ok(split)
}

/// Inverse-frequency weights `N / (7 · N_c)`, rescaled to mean 1.
pub fn class_weights(counts: &[usize; NUM_CLASSES]) -> Result<[f64; NUM_CLASSES]> {
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(DataError::Data(format!(
            "class {} has no episodes",
            Label::ALL[i]
        )));
    }
    let total: usize = counts.iter().sum();
    let mut w = counts.map(|c| total as f64 / (NUM_CLASSES as f64 * c as f64));
    let mean = w.iter().sum::<f64>() / NUM_CLASSES as f64;
    w.iter_mut().for_each(|v| *v /= mean);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_examples() {
        let ts: Vec<f64> = (0..64).map(f64::from).collect();
        let kept = temporal_subsample(&ts, 0.125).unwrap();
        let t: Vec<f64> = kept.iter().map(|&i| ts[i]).collect();
        assert_eq!(t, vec![0.0, 8.0, 16.0, 24.0, 32.0, 40.0, 48.0, 56.0]);
        assert_eq!(temporal_subsample(&ts, 1.0).unwrap(), (0..64).collect::<Vec<_>>());
        assert_eq!(temporal_subsample(&ts, 5.0).unwrap().len(), 64);
        assert_eq!(temporal_subsample(&[3.5], 0.125).unwrap(), vec![0]);
        assert!(temporal_subsample(&[], 1.0).is_err());
        assert!(temporal_subsample(&[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn split_counts_follow_rounding_rule() {
        let mut items = Vec::new();
        for (label, n) in [(Label::Safe, 68), (Label::Ota, 18), (Label::Loc, 2)] {
            items.extend((0..n).map(|i| (format!("{label}{i}"), label)));
        }
        let s = stratified_split(&items, 0.8, 3).unwrap();
        let count = |v: &[String], p: &str| v.iter().filter(|id| id.starts_with(p)).count();
        assert_eq!((count(&s.train, "SAFE"), count(&s.test, "SAFE")), (54, 14));
        assert_eq!((count(&s.train, "OTA"), count(&s.test, "OTA")), (14, 4));
        assert_eq!((count(&s.train, "LOC"), count(&s.test, "LOC")), (1, 1));
        assert_eq!(s, stratified_split(&items, 0.8, 3).unwrap());
        assert_ne!(s, stratified_split(&items, 0.8, 4).unwrap());
    }

    #[test]
    fn split_rejects_singleton_class() {
        let items = vec![("a".to_string(), Label::Safe), ("b".to_string(), Label::Loc)];
        assert!(matches!(stratified_split(&items, 0.8, 0), Err(DataError::Data(_))));
    }

    #[test]
    fn weights() {
        assert_eq!(class_weights(&[5; 7]).unwrap(), [1.0; 7]);
        let w = class_weights(&[68, 22, 41, 33, 18, 43, 24]).unwrap();
        assert!((w[Label::Ota.index()] / w[Label::Safe.index()] - 68.0 / 18.0).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() / 7.0 - 1.0).abs() < 1e-12);
        assert!(class_weights(&[1, 0, 1, 1, 1, 1, 1]).is_err());
    }
}
