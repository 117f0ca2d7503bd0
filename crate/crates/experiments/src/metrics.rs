//! Confusion matrices, per-class and support-weighted scores, seed aggregation.

use clue_data::NUM_CLASSES;

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        ConfusionMatrix { n, counts: vec![0; n * n] }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = ConfusionMatrix::new(n);
        for (t, p) in pairs {
            m.add(t, p);
        }
        m
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        assert!(truth < self.n && predicted < self.n, "class index out of range");
        self.counts[truth * self.n + predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn count(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.n + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn support(&self, c: usize) -> usize {
        (0..self.n).map(|p| self.count(c, p)).sum()
    }

    fn predicted_count(&self, c: usize) -> usize {
        (0..self.n).map(|t| self.count(t, c)).sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.n).map(|c| self.count(c, c)).sum()
    }

    /// Row-normalised matrix; rows without support stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|t| {
                let s = self.support(t);
                (0..self.n)
                    .map(|p| if s == 0 { 0.0 } else { self.count(t, p) as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// nothing was predicted as this class, so precision was set to 0
    pub precision_undefined: bool,
    /// the class has no test examples, so recall was set to 0
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassScores>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl MetricsReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let n = confusion.classes();
        let per_class: Vec<ClassScores> = (0..n)
            .map(|c| {
                let tp = confusion.count(c, c);
                let (precision, precision_undefined) = ratio(tp, confusion.predicted_count(c));
                let (recall, recall_undefined) = ratio(tp, confusion.support(c));
                // harmonic mean of precision and recall, written in counts
                let fp = confusion.predicted_count(c) - tp;
                let fn_ = confusion.support(c) - tp;
                let f1 = ratio(2 * tp, 2 * tp + fp + fn_).0;
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support: confusion.support(c),
                    precision_undefined,
                    recall_undefined,
                }
            })
            .collect();
        let total = confusion.total();
        let weighted = |f: fn(&ClassScores) -> f64| {
            if total == 0 {
                0.0
            } else {
                per_class.iter().map(|s| s.support as f64 * f(s)).sum::<f64>() / total as f64
            }
        };
        MetricsReport {
            weighted_precision: weighted(|s| s.precision),
            weighted_recall: weighted(|s| s.recall),
            weighted_f1: weighted(|s| s.f1),
            accuracy: ratio(confusion.trace(), total).0,
            per_class,
            confusion,
        }
    }

    /// Seven-class report from `(true, predicted)` label indices.
    pub fn from_predictions(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self::from_confusion(ConfusionMatrix::from_pairs(NUM_CLASSES, pairs))
    }

    /// Whether any precision or recall hit the zero-division rule.
    pub fn zero_division(&self) -> bool {
        self.per_class.iter().any(|s| s.precision_undefined || s.recall_undefined)
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Seed-aggregated weighted scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub seeds: usize,
}

impl Summary {
    pub fn of<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Self {
        let reports: Vec<_> = reports.into_iter().collect();
        let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        Summary {
            precision: col(|r| r.weighted_precision),
            recall: col(|r| r.weighted_recall),
            f1: col(|r| r.weighted_f1),
            seeds: reports.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = MetricsReport::from_predictions((0..7).flat_map(|c| [(c, c), (c, c)]));
        assert!(r.per_class.iter().all(|s| s.precision == 1.0 && s.recall == 1.0 && s.f1 == 1.0));
        assert_eq!(r.weighted_f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
        let norm = r.confusion.normalized();
        for (i, row) in norm.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(!r.zero_division());
    }

    #[test]
    fn undefined_scores_are_zero_and_flagged() {
        let r = MetricsReport::from_confusion(ConfusionMatrix::from_pairs(3, [(0, 0), (0, 0), (1, 0)]));
        assert!(r.per_class[1].precision_undefined);
        assert!(r.per_class[2].recall_undefined && r.per_class[2].precision_undefined);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert_eq!(r.confusion.normalized()[2], vec![0.0; 3]);
        assert!(r.zero_division());
    }

    #[test]
    fn mean_std_hand_values() {
        assert_eq!(MeanStd::of(&[0.7]), MeanStd { mean: 0.7, std: 0.0 });
        let m = MeanStd::of(&[0.9, 0.8]);
        assert!((m.mean - 0.85).abs() < 1e-15 && (m.std - 0.05).abs() < 1e-15);
    }
}
