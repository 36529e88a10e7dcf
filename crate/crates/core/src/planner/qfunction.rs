use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PlanAction, PlanState, PlanningEnv};
use crate::catalog::encode_action;
use crate::error::{Error, Result};
use crate::nn::{Activation, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    /// Lookup table keyed by the context vector and the hidden state rounded
    /// to one decimal.
    Tabular,
    /// Small MLP over `[h; u; encoding(a)]`.
    Approximate,
}

/// Discretised state used as a table key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey {
    context: Vec<u64>,
    hidden: Vec<i64>,
}

impl StateKey {
    pub fn of(state: &PlanState) -> Self {
        Self {
            context: state.context.values.iter().map(|v| (v + 0.0).to_bits()).collect(),
            hidden: state.hidden.0.iter().map(|h| (h * 10.0).round() as i64).collect(),
        }
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("u=")?;
        for (i, bits) in self.context.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", f64::from_bits(*bits))?;
        }
        if !self.hidden.is_empty() {
            f.write_str(";h=")?;
            for (i, h) in self.hidden.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{h}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QFunction {
    /// Unseen entries read as 0.
    Tabular(HashMap<(StateKey, usize), f64>),
    Approximate(Network),
}

impl QFunction {
    pub fn tabular() -> Self {
        QFunction::Tabular(HashMap::new())
    }

    pub fn approximate<R: Rng + ?Sized>(env: &PlanningEnv<'_>, hidden: usize, rng: &mut R) -> Result<Self> {
        let enc = env.catalog().encoding_len();
        let dims = [env.state_dim() + 2 * enc, hidden, 1];
        Ok(QFunction::Approximate(Network::mlp(
            &dims,
            Activation::Relu,
            Activation::Identity,
            rng,
        )?))
    }

    pub fn new<R: Rng + ?Sized>(mode: QMode, env: &PlanningEnv<'_>, hidden: usize, rng: &mut R) -> Result<Self> {
        match mode {
            QMode::Tabular => Ok(Self::tabular()),
            QMode::Approximate => Self::approximate(env, hidden, rng),
        }
    }

    fn features(env: &PlanningEnv<'_>, state: &PlanState, action: &PlanAction) -> Result<Vec<f64>> {
        let enc = encode_action(&action.action, env.catalog())?;
        let mut x = Vec::with_capacity(state.hidden.0.len() + state.context.values.len() + enc.values.len());
        x.extend_from_slice(&state.hidden.0);
        x.extend_from_slice(&state.context.values);
        x.extend_from_slice(&enc.values);
        Ok(x)
    }

    pub fn value(&self, env: &PlanningEnv<'_>, state: &PlanState, action: &PlanAction) -> Result<f64> {
        match self {
            QFunction::Tabular(t) => Ok(t.get(&(StateKey::of(state), action.id)).copied().unwrap_or(0.0)),
            QFunction::Approximate(net) => Ok(net.predict(&Self::features(env, state, action)?)?[0]),
        }
    }

    /// Highest-valued legal action; ties go to the lowest id. `None` at a
    /// terminal state.
    pub fn greedy(&self, env: &PlanningEnv<'_>, state: &PlanState) -> Result<Option<(PlanAction, f64)>> {
        let mut best: Option<(PlanAction, f64)> = None;
        for a in env.legal_actions(state)? {
            let v = self.value(env, state, &a)?;
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((a, v));
            }
        }
        Ok(best)
    }

    /// `max_a' Q(s', a')`, or 0 when `state` is terminal.
    pub fn max_value(&self, env: &PlanningEnv<'_>, state: &PlanState) -> Result<f64> {
        if env.is_terminal(state) {
            return Ok(0.0);
        }
        Ok(self.greedy(env, state)?.map_or(0.0, |(_, v)| v))
    }

    /// Number of stored table entries; 0 for the approximate form.
    pub fn table_len(&self) -> usize {
        match self {
            QFunction::Tabular(t) => t.len(),
            QFunction::Approximate(_) => 0,
        }
    }
}

/// One Q-learning update
/// `Q(s,a) <- Q(s,a) + alpha (r + gamma max_a' Q(s',a') - Q(s,a))`.
///
/// The approximate form takes one semi-gradient step on
/// `0.5 (target - Q(s,a))^2` with learning rate `alpha`, holding the target
/// fixed. Returns the updated `Q(s,a)`; `alpha = 0` leaves `q` untouched.
#[allow(clippy::too_many_arguments)]
pub fn q_update(
    q: &mut QFunction,
    env: &PlanningEnv<'_>,
    state: &PlanState,
    action: &PlanAction,
    reward: f64,
    next: &PlanState,
    alpha: f64,
    gamma: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config("agent", "alpha and gamma must lie in [0, 1]"));
    }
    if alpha == 0.0 {
        return q.value(env, state, action);
    }
    let target = reward + gamma * q.max_value(env, next)?;
    match q {
        QFunction::Tabular(t) => {
            let entry = t.entry((StateKey::of(state), action.id)).or_insert(0.0);
            *entry += alpha * (target - *entry);
            Ok(*entry)
        }
        QFunction::Approximate(net) => {
            let x = QFunction::features(env, state, action)?;
            let (y, tape) = net.forward(&x)?;
            let (grad, _) = net.backward(&tape, &[y[0] - target])?;
            if !grad.is_finite() {
                return Err(Error::Numeric("non-finite Q gradient"));
            }
            net.apply_sgd(&grad, alpha)?;
            Ok(net.predict(&x)?[0])
        }
    }
}
