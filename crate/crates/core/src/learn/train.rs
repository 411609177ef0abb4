//! Pointwise and pairwise training loops over featurized candidate groups.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::QuestionCandidates;
use crate::error::{Error, Result};
use crate::features::PairFeaturizer;

use super::loss::{hinge_pair_loss, smoothed_ce_loss};
use super::model::{Gradients, Model};
use super::optim::{adamw_step, AdamWConfig, OptimizerState, Schedule};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub adamw: AdamWConfig,
    /// Label smoothing for the pointwise objective.
    pub smoothing_epsilon: f64,
    /// Hinge margin for the pairwise objective.
    pub margin: f64,
    /// `None` trains a linear head, `Some(h)` a tanh MLP.
    pub hidden: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            learning_rate: 5e-5,
            warmup_fraction: 0.02,
            adamw: AdamWConfig::default(),
            smoothing_epsilon: 0.1,
            margin: 0.2,
            hidden: None,
            seed: 42,
        }
    }
}

/// One training-loss observation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

/// All candidates of one question in feature space.
#[derive(Debug, Clone)]
pub struct FeaturizedQuestion {
    pub q_id: i64,
    pub doc_ids: Vec<i64>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

/// Run the featurizer over grouped candidates, once per question.
pub fn featurize_groups(
    groups: &[QuestionCandidates],
    featurizer: &PairFeaturizer,
) -> Result<Vec<FeaturizedQuestion>> {
    groups
        .iter()
        .map(|g| {
            let cands: Vec<(i64, String)> = g
                .candidates
                .iter()
                .map(|(d, text, _)| (*d, text.clone()))
                .collect();
            let features = featurizer.question_features(&g.question, &cands)?;
            Ok(FeaturizedQuestion {
                q_id: g.q_id,
                doc_ids: g.candidates.iter().map(|(d, _, _)| *d).collect(),
                features,
                labels: g.candidates.iter().map(|(_, _, l)| *l).collect(),
            })
        })
        .collect()
}

fn feature_dim(groups: &[FeaturizedQuestion]) -> Result<usize> {
    groups
        .iter()
        .flat_map(|g| g.features.first())
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::InvalidInput("empty training set".into()))
}

/// Binary classifier over (question, answer) features with label smoothing.
pub fn train_pointwise(
    groups: &[FeaturizedQuestion],
    cfg: &TrainConfig,
) -> Result<(Model, Vec<TraceRow>)> {
    let dim = feature_dim(groups)?;
    let mut model = Model::new(dim, cfg.hidden, 2, cfg.seed);
    let mut samples: Vec<(&Vec<f64>, u8)> = Vec::new();
    for g in groups {
        for (f, &label) in g.features.iter().zip(&g.labels) {
            samples.push((f, label));
        }
    }
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }
    let total_steps = (samples.len() * cfg.epochs) as u64;
    let schedule = Schedule::new(total_steps, cfg.warmup_fraction, cfg.learning_rate)?;
    let mut state = OptimizerState::for_model(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::with_capacity(total_steps as usize);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (features, label) = samples[i];
            let (logits, act) = model.forward_cached(features)?;
            let (loss, grad) =
                smoothed_ce_loss(&[logits[0], logits[1]], label, cfg.smoothing_epsilon)?;
            let grads = model.backward(features, act.as_deref(), &grad)?;
            let lr = schedule.lr_at(state.step)?;
            adamw_step(&mut model, &grads, &mut state, &cfg.adamw, &schedule)?;
            trace.push(TraceRow {
                step: state.step,
                lr,
                loss,
            });
        }
    }
    Ok((model, trace))
}

/// Shared-weight pairwise trainer: each (question, positive, negative)
/// triple runs two forward passes through the same parameters and applies
/// the hinge subgradient.
pub fn train_pairwise(
    groups: &[FeaturizedQuestion],
    cfg: &TrainConfig,
) -> Result<(Model, Vec<TraceRow>)> {
    let dim = feature_dim(groups)?;
    let mut model = Model::new(dim, cfg.hidden, 1, cfg.seed);
    let mut pairs: Vec<(&Vec<f64>, &Vec<f64>)> = Vec::new();
    for g in groups {
        let positives: Vec<&Vec<f64>> = g
            .features
            .iter()
            .zip(&g.labels)
            .filter(|(_, &l)| l == 1)
            .map(|(f, _)| f)
            .collect();
        let negatives: Vec<&Vec<f64>> = g
            .features
            .iter()
            .zip(&g.labels)
            .filter(|(_, &l)| l == 0)
            .map(|(f, _)| f)
            .collect();
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::InvalidInput(format!(
                "question {} lacks a positive/negative pair",
                g.q_id
            )));
        }
        for p in &positives {
            for n in &negatives {
                pairs.push((p, n));
            }
        }
    }
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }
    let total_steps = (pairs.len() * cfg.epochs) as u64;
    let schedule = Schedule::new(total_steps, cfg.warmup_fraction, cfg.learning_rate)?;
    let mut state = OptimizerState::for_model(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::with_capacity(total_steps as usize);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (pos, neg) = pairs[i];
            let (pos_logits, pos_act) = model.forward_cached(pos)?;
            let (neg_logits, neg_act) = model.forward_cached(neg)?;
            let (loss, d_pos, d_neg) =
                hinge_pair_loss(pos_logits[0], neg_logits[0], cfg.margin)?;
            let mut grads = Gradients::zeros_like(&model);
            if loss > 0.0 {
                grads.accumulate(&model.backward(pos, pos_act.as_deref(), &[d_pos])?);
                grads.accumulate(&model.backward(neg, neg_act.as_deref(), &[d_neg])?);
            }
            let lr = schedule.lr_at(state.step)?;
            adamw_step(&mut model, &grads, &mut state, &cfg.adamw, &schedule)?;
            trace.push(TraceRow {
                step: state.step,
                lr,
                loss,
            });
        }
    }
    Ok((model, trace))
}
