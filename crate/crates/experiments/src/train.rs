//! Batch-size-one training with weighted cross-entropy and Adam, and evaluation.

use clue_core::{ClueModel, ModelInput, PreparedEpisode, Prediction, VisualInput};
use clue_tensor::optim::Adam;
use clue_tensor::rng::seeded;
use clue_tensor::{Graph, Mode, TensorError};
use rand::seq::SliceRandom;

use crate::error::{ExperimentError, Result};
use crate::metrics::MetricsReport;
use crate::settings::TrainSettings;

/// One episode in the form the model consumes.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub input: ModelInput<f32>,
}

/// Builds model inputs. A fixed backbone is run once per frame here and its
/// features are fed to the rest of the model; a trainable one receives raw frames.
pub fn build_samples<'a>(
    model: &ClueModel<f32>,
    episodes: impl IntoIterator<Item = &'a PreparedEpisode>,
) -> Result<Vec<Sample>> {
    let cfg = model.config();
    episodes
        .into_iter()
        .map(|ep| {
            let visual = if !cfg.modalities.visual {
                VisualInput::Frames(Vec::new())
            } else if cfg.backbone_trainable {
                VisualInput::Frames(ep.frames.clone())
            } else {
                VisualInput::Features(model.arch.frame_features(&model.store, &ep.frames)?)
            };
            Ok(Sample {
                id: ep.id.clone(),
                label: ep.label.index(),
                input: ep.input_with_visual(cfg.modalities, visual),
            })
        })
        .collect()
}

/// Trains in place and returns the mean weighted loss of every epoch.
pub fn train(
    model: &mut ClueModel<f32>,
    samples: &[Sample],
    settings: &TrainSettings,
    class_weights: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let opt = settings.optimizer(seed, class_weights);
    opt.validate()?;
    if samples.is_empty() {
        return Err(ExperimentError::Config("training set is empty".into()));
    }
    let weights: Vec<f32> = class_weights.iter().map(|&w| w as f32).collect();
    let ClueModel { arch, store } = model;
    let mut adam = Adam::new(store);
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(settings.epochs);
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let s = &samples[i];
            let (loss, grads) = {
                let mut g = Graph::new(&*store);
                let out = arch.forward(&mut g, &s.input, Mode::Train, &mut rng, None)?;
                let non_finite = |loss: f64| ExperimentError::NonFiniteLoss {
                    epoch,
                    episode: s.id.clone(),
                    loss,
                };
                let l = match g.softmax_cross_entropy(out.logits, s.label, &weights) {
                    Err(TensorError::Numeric(_)) => return Err(non_finite(f64::NAN)),
                    other => other?,
                };
                let loss = f64::from(g.value(l).data()[0]);
                if !loss.is_finite() {
                    return Err(non_finite(loss));
                }
                (loss, g.backward(l)?)
            };
            store.zero_grad();
            grads.accumulate_into(store);
            adam.step(store, &opt)?;
            total += loss;
        }
        history.push(total / samples.len() as f64);
    }
    Ok(history)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub report: MetricsReport,
}

pub fn evaluate(model: &ClueModel<f32>, samples: &[Sample]) -> Result<Evaluation> {
    let predictions = samples
        .iter()
        .map(|s| model.predict(&s.input))
        .collect::<Result<Vec<_>, _>>()?;
    let report = MetricsReport::from_predictions(samples.iter().zip(&predictions).map(|(s, p)| (s.label, p.predicted)));
    Ok(Evaluation { predictions, report })
}
