use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HiddenState, RepresentationModel, SequenceExample};
use crate::catalog::DatabaseVector;
use crate::error::{Error, Result};
use crate::metrics::{relative_error, Summary};
use crate::nn::{log_ratio_loss, relative_error_loss, Gradient, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `|pred - truth| / max(truth, floor)` on cardinalities.
    Relative,
    /// `|ln((pred + 1) / (truth + 1))|` on cardinalities.
    LogRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Denominator floor of the relative error, in tuples.
    pub floor: f64,
    pub loss: LossKind,
    /// Spend one epoch on each shallower depth before training full chains.
    pub curriculum: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.01,
            seed: 0,
            floor: 1.0,
            loss: LossKind::LogRatio,
            curriculum: true,
        }
    }
}

/// Relative-error summary of one split after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub mean_rel_err: f64,
    pub median_rel_err: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    pub epochs: Vec<EpochMetrics>,
    /// Examples skipped because their loss was not finite.
    pub skipped: usize,
}

/// Gradients for the three networks of a [`RepresentationModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub init: Gradient,
    pub st: Gradient,
    pub observed: Gradient,
}

impl ModelGradient {
    fn is_finite(&self) -> bool {
        self.init.is_finite() && self.st.is_finite() && self.observed.is_finite()
    }

    /// Entries in the same order as [`RepresentationModel::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.init
            .flat()
            .chain(self.st.flat())
            .chain(self.observed.flat())
            .collect()
    }
}

impl RepresentationModel {
    pub fn params(&self) -> Vec<f64> {
        [self.nn_init.params(), self.nn_st.params(), self.nn_observed.params()].concat()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let a = self.nn_init.param_count();
        let b = a + self.nn_st.param_count();
        let c = b + self.nn_observed.param_count();
        if params.len() != c {
            return Err(Error::Shape {
                expected: c,
                actual: params.len(),
                context: "model parameters",
            });
        }
        self.nn_init.set_params(&params[..a])?;
        self.nn_st.set_params(&params[a..b])?;
        self.nn_observed.set_params(&params[b..])
    }

    fn stage_loss(&self, kind: LossKind, floor: f64, y: f64, label: f64, scale: f64) -> (f64, f64) {
        let (card, dcard_dy) = self.normalization.denormalize(y, scale);
        let (loss, dl_dcard) = match kind {
            LossKind::Relative => relative_error_loss(card, label, floor),
            LossKind::LogRatio => log_ratio_loss(card.max(0.0), label),
        };
        (loss, dl_dcard * dcard_dy)
    }

    /// Summed stage losses of one example and the gradient of that sum with
    /// respect to every parameter. Stage `t`'s loss flows back through every
    /// earlier transition into `nn_init`.
    pub fn loss_and_gradient(
        &self,
        x0: &DatabaseVector,
        ex: &SequenceExample,
        kind: LossKind,
        floor: f64,
    ) -> Result<(f64, ModelGradient)> {
        let Some(first) = ex.encodings.first() else {
            return Err(Error::Contract("empty sequence example".into()));
        };
        let (h1, init_tape) = self.nn_init.forward(&self.init_input(x0, first)?)?;
        let mut states = vec![h1];
        let mut st_tapes: Vec<Tape> = Vec::with_capacity(ex.len() - 1);
        for a in &ex.encodings[1..] {
            let input = self.transition_input(&HiddenState(states.last().unwrap().clone()), a)?;
            let (h, tape) = self.nn_st.forward(&input)?;
            st_tapes.push(tape);
            states.push(h);
        }

        let mut total = 0.0;
        let mut grad = ModelGradient {
            init: Gradient::zeros_like(&self.nn_init),
            st: Gradient::zeros_like(&self.nn_st),
            observed: Gradient::zeros_like(&self.nn_observed),
        };
        let n = self.state_dim();
        let mut dh = vec![0.0; n];
        for t in (0..ex.len()).rev() {
            let (y, obs_tape) = self.nn_observed.forward(&states[t])?;
            let (loss, dl_dy) = self.stage_loss(kind, floor, y[0], ex.labels[t], ex.scales[t]);
            total += loss;
            let (g_obs, dh_obs) = self.nn_observed.backward(&obs_tape, &[dl_dy])?;
            grad.observed.add_assign(&g_obs);
            dh.iter_mut().zip(&dh_obs).for_each(|(a, b)| *a += b);
            if t > 0 {
                let (g_st, d_in) = self.nn_st.backward(&st_tapes[t - 1], &dh)?;
                grad.st.add_assign(&g_st);
                dh.copy_from_slice(&d_in[..n]);
            } else {
                let (g_init, _) = self.nn_init.backward(&init_tape, &dh)?;
                grad.init.add_assign(&g_init);
            }
        }
        Ok((total, grad))
    }

    fn sgd_all(&mut self, g: &ModelGradient, lr: f64) -> Result<()> {
        self.nn_init.apply_sgd(&g.init, lr)?;
        self.nn_st.apply_sgd(&g.st, lr)?;
        self.nn_observed.apply_sgd(&g.observed, lr)
    }
}

pub(crate) fn evaluate(
    model: &RepresentationModel,
    x0: &DatabaseVector,
    data: &[SequenceExample],
    floor: f64,
) -> Result<Vec<Vec<f64>>> {
    // errors[t] = relative errors of stage t over all examples that have it.
    let mut errors: Vec<Vec<f64>> = Vec::new();
    for ex in data {
        let preds = model.predict_encoded(x0, &ex.encodings, &ex.scales)?;
        for (t, (p, y)) in preds.iter().zip(&ex.labels).enumerate() {
            if errors.len() <= t {
                errors.push(Vec::new());
            }
            errors[t].push(relative_error(*p, *y, floor));
        }
    }
    Ok(errors)
}

pub(crate) fn push_split(out: &mut Vec<EpochMetrics>, epoch: usize, split: &str, per_stage: &[Vec<f64>]) {
    let all: Vec<f64> = per_stage.iter().flatten().copied().collect();
    if all.is_empty() {
        return;
    }
    let mut push = |name: String, errs: &[f64]| {
        let s = Summary::of(errs);
        out.push(EpochMetrics {
            epoch,
            split: name,
            mean_rel_err: s.mean,
            median_rel_err: s.median,
            std: s.std,
        });
    };
    push(split.to_string(), &all);
    if per_stage.len() > 1 {
        for (t, errs) in per_stage.iter().enumerate() {
            push(format!("{split}_h{}", t + 1), errs);
        }
    }
}

/// Trains all three networks jointly with per-example SGD.
///
/// Each example is unrolled over its full chain, the stage losses are summed
/// with equal weight and the gradient of the sum is applied in one step.
/// After every epoch the relative error on `train` and `test` is recorded.
pub fn train_combined(
    model: &RepresentationModel,
    x0: &DatabaseVector,
    train: &[SequenceExample],
    test: &[SequenceExample],
    cfg: &TrainConfig,
) -> Result<(RepresentationModel, TrainingReport)> {
    let mut model = model.clone();
    let mut report = TrainingReport::default();
    if cfg.epochs == 0 {
        return Ok((model, report));
    }
    if train.is_empty() {
        return Err(Error::config("training", "empty training set"));
    }
    if !(cfg.lr > 0.0 && cfg.floor > 0.0) {
        return Err(Error::config("training", "lr and floor must be positive"));
    }
    let max_depth = train.iter().map(SequenceExample::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let depth = if cfg.curriculum {
            epoch.min(max_depth)
        } else {
            max_depth
        };
        order.shuffle(&mut rng);
        for &i in &order {
            let ex = if train[i].len() > depth {
                std::borrow::Cow::Owned(train[i].truncated(depth))
            } else {
                std::borrow::Cow::Borrowed(&train[i])
            };
            let (loss, grad) = model.loss_and_gradient(x0, &ex, cfg.loss, cfg.floor)?;
            if !loss.is_finite() || !grad.is_finite() {
                report.skipped += 1;
                continue;
            }
            model.sgd_all(&grad, cfg.lr)?;
        }
        push_split(
            &mut report.epochs,
            epoch,
            "train",
            &evaluate(&model, x0, train, cfg.floor)?,
        );
        push_split(
            &mut report.epochs,
            epoch,
            "test",
            &evaluate(&model, x0, test, cfg.floor)?,
        );
    }
    Ok((model, report))
}
