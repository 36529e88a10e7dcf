//! The recursive subquery representation: `nn_init` maps the database vector
//! and the first action to a hidden state, `nn_st` maps a hidden state and the
//! next action to the next hidden state, and `nn_observed` decodes any hidden
//! state into a cardinality.

mod checkpoint;
pub(crate) mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{encode_action, ActionEncoding, Catalog, DatabaseVector};
use crate::error::{Error, Result};
use crate::nn::{Activation, Network};
use crate::relation::{true_cardinality, Action, Database, PlanProgress, QuerySpec};

pub use checkpoint::{read_model, write_model};
pub use train::{train_combined, EpochMetrics, LossKind, TrainConfig, TrainingReport};

/// How `nn_observed`'s scalar output maps to a cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Sigmoid output is a selectivity; cardinality = output × stage scale.
    Selectivity,
    /// Linear output is the cardinality itself.
    Raw,
}

impl Normalization {
    pub(crate) fn code(self) -> u8 {
        match self {
            Normalization::Selectivity => 0,
            Normalization::Raw => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Normalization::Selectivity),
            1 => Some(Normalization::Raw),
            _ => None,
        }
    }

    fn output_activation(self) -> Activation {
        match self {
            Normalization::Selectivity => Activation::Sigmoid,
            Normalization::Raw => Activation::Identity,
        }
    }

    /// Unclamped cardinality for output `y` and its derivative `d card / d y`.
    fn denormalize(self, y: f64, scale: f64) -> (f64, f64) {
        match self {
            Normalization::Selectivity => (y * scale, scale),
            Normalization::Raw => (y, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub init_hidden: usize,
    pub st_hidden: usize,
    pub observed_hidden: usize,
    pub hidden_activation: Activation,
    pub normalization: Normalization,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            state_dim: 64,
            init_hidden: 50,
            st_hidden: 64,
            observed_hidden: 32,
            hidden_activation: Activation::Relu,
            normalization: Normalization::Selectivity,
        }
    }
}

/// Learned representation `h_t` of a subquery.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationModel {
    pub(crate) nn_init: Network,
    pub(crate) nn_st: Network,
    pub(crate) nn_observed: Network,
    pub(crate) normalization: Normalization,
}

impl RepresentationModel {
    /// Randomly initialised model for database vectors of length `x0_len`
    /// and action encodings of length `action_len`.
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, x0_len: usize, action_len: usize, rng: &mut R) -> Result<Self> {
        if cfg.state_dim == 0 {
            return Err(Error::config("model.state_dim", "must be positive"));
        }
        let n = cfg.state_dim;
        let act = cfg.hidden_activation;
        // Hidden states come out of a sigmoid so they stay in (0, 1).
        let nn_init = Network::mlp(
            &[x0_len + action_len, cfg.init_hidden, n],
            act,
            Activation::Sigmoid,
            rng,
        )?;
        let nn_st = Network::mlp(&[n + action_len, cfg.st_hidden, n], act, Activation::Sigmoid, rng)?;
        let nn_observed = Network::mlp(
            &[n, cfg.observed_hidden, 1],
            act,
            cfg.normalization.output_activation(),
            rng,
        )?;
        Self::from_networks(nn_init, nn_st, nn_observed, cfg.normalization)
    }

    pub fn from_networks(
        nn_init: Network,
        nn_st: Network,
        nn_observed: Network,
        normalization: Normalization,
    ) -> Result<Self> {
        let n = nn_init.output_dim();
        if nn_st.output_dim() != n {
            return Err(Error::Shape {
                expected: n,
                actual: nn_st.output_dim(),
                context: "nn_st output",
            });
        }
        if nn_observed.input_dim() != n {
            return Err(Error::Shape {
                expected: n,
                actual: nn_observed.input_dim(),
                context: "nn_observed input",
            });
        }
        if nn_observed.output_dim() != 1 {
            return Err(Error::Shape {
                expected: 1,
                actual: nn_observed.output_dim(),
                context: "nn_observed output",
            });
        }
        if nn_st.input_dim() <= n || nn_init.input_dim() <= nn_st.input_dim() - n {
            return Err(Error::Shape {
                expected: n + 1,
                actual: nn_st.input_dim(),
                context: "nn_st input (state + action)",
            });
        }
        Ok(Self {
            nn_init,
            nn_st,
            nn_observed,
            normalization,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.nn_init.output_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.nn_st.input_dim() - self.state_dim()
    }

    pub fn x0_dim(&self) -> usize {
        self.nn_init.input_dim() - self.action_dim()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn networks(&self) -> [&Network; 3] {
        [&self.nn_init, &self.nn_st, &self.nn_observed]
    }

    pub(crate) fn init_input(&self, x0: &DatabaseVector, a0: &ActionEncoding) -> Result<Vec<f64>> {
        if x0.values.len() != self.x0_dim() {
            return Err(Error::Shape {
                expected: self.x0_dim(),
                actual: x0.values.len(),
                context: "database vector",
            });
        }
        if a0.values.len() != self.action_dim() {
            return Err(Error::Shape {
                expected: self.action_dim(),
                actual: a0.values.len(),
                context: "action encoding",
            });
        }
        Ok([x0.values.as_slice(), a0.values.as_slice()].concat())
    }

    pub(crate) fn transition_input(&self, h: &HiddenState, a: &ActionEncoding) -> Result<Vec<f64>> {
        if h.0.len() != self.state_dim() {
            return Err(Error::Shape {
                expected: self.state_dim(),
                actual: h.0.len(),
                context: "hidden state",
            });
        }
        if a.values.len() != self.action_dim() {
            return Err(Error::Shape {
                expected: self.action_dim(),
                actual: a.values.len(),
                context: "action encoding",
            });
        }
        Ok([h.0.as_slice(), a.values.as_slice()].concat())
    }

    /// `h_1 = nn_init([x0; a0])`.
    pub fn initial_state(&self, x0: &DatabaseVector, a0: &ActionEncoding) -> Result<HiddenState> {
        Ok(HiddenState(self.nn_init.predict(&self.init_input(x0, a0)?)?))
    }

    /// `h_{t+1} = nn_st([h_t; a_t])`.
    pub fn transition(&self, h: &HiddenState, a: &ActionEncoding) -> Result<HiddenState> {
        Ok(HiddenState(self.nn_st.predict(&self.transition_input(h, a)?)?))
    }

    /// Cardinality decoded from `h`, with `scale` the stage input size; never
    /// negative.
    pub fn decode_cardinality(&self, h: &HiddenState, scale: f64) -> Result<f64> {
        let y = self.nn_observed.predict(&h.0)?[0];
        Ok(self.normalization.denormalize(y, scale).0.max(0.0))
    }

    /// Predicted cardinality after each action of an already-encoded sequence.
    pub fn predict_encoded(&self, x0: &DatabaseVector, actions: &[ActionEncoding], scales: &[f64]) -> Result<Vec<f64>> {
        if actions.len() != scales.len() {
            return Err(Error::Shape {
                expected: actions.len(),
                actual: scales.len(),
                context: "stage scales",
            });
        }
        let mut out = Vec::with_capacity(actions.len());
        let mut h: Option<HiddenState> = None;
        for (a, &scale) in actions.iter().zip(scales) {
            let next = match &h {
                None => self.initial_state(x0, a)?,
                Some(prev) => self.transition(prev, a)?,
            };
            out.push(self.decode_cardinality(&next, scale)?);
            h = Some(next);
        }
        Ok(out)
    }

    /// Predicted cardinality of each stage of a legal action sequence for
    /// `q`. Stage scales come from catalog row counts; the oracle is never
    /// consulted.
    pub fn predict_sequence(
        &self,
        x0: &DatabaseVector,
        catalog: &Catalog,
        q: &QuerySpec,
        actions: &[Action],
    ) -> Result<Vec<f64>> {
        let mut progress = PlanProgress::new();
        let mut encodings = Vec::with_capacity(actions.len());
        let mut scales = Vec::with_capacity(actions.len());
        for a in actions {
            progress = progress.apply(q, a)?;
            encodings.push(encode_action(a, catalog)?);
            scales.push(stage_scale(
                catalog,
                &progress.last_output(q).expect("an action was applied"),
            )?);
        }
        self.predict_encoded(x0, &encodings, &scales)
    }
}

/// Input size of a stage: the product of the base row counts of the
/// relations the stage's output draws from.
pub fn stage_scale(catalog: &Catalog, stage: &QuerySpec) -> Result<f64> {
    stage
        .relations
        .iter()
        .try_fold(1.0, |acc, r| Ok(acc * catalog.row_count(r)? as f64))
}

/// A legal action sequence with the true cardinality and input size of every
/// stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceExample {
    pub actions: Vec<Action>,
    pub encodings: Vec<ActionEncoding>,
    pub labels: Vec<f64>,
    pub scales: Vec<f64>,
}

impl SequenceExample {
    /// Replays `actions` against `q` and labels every stage with the oracle.
    pub fn build(db: &Database, catalog: &Catalog, q: &QuerySpec, actions: Vec<Action>) -> Result<Self> {
        let mut progress = PlanProgress::new();
        let mut encodings = Vec::with_capacity(actions.len());
        let mut labels = Vec::with_capacity(actions.len());
        let mut scales = Vec::with_capacity(actions.len());
        for a in &actions {
            progress = progress.apply(q, a)?;
            let stage = progress.last_output(q).expect("an action was applied");
            encodings.push(encode_action(a, catalog)?);
            labels.push(true_cardinality(db, &stage)? as f64);
            scales.push(stage_scale(catalog, &stage)?);
        }
        Ok(Self {
            actions,
            encodings,
            labels,
            scales,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `depth` stages.
    pub fn truncated(&self, depth: usize) -> SequenceExample {
        let d = depth.min(self.len());
        SequenceExample {
            actions: self.actions[..d].to_vec(),
            encodings: self.encodings[..d].to_vec(),
            labels: self.labels[..d].to_vec(),
            scales: self.scales[..d].to_vec(),
        }
    }
}
