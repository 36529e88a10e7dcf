use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{q_update, stage_cost, PlanAction, PlanningEnv, QFunction, QMode, RewardMode, StateKey};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::relation::{Database, QuerySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub epsilon_decay: f64,
    pub seed: u64,
    pub q_mode: QMode,
    /// Hidden units of the approximate Q network.
    pub q_hidden: usize,
    pub reward_mode: RewardMode,
    /// Rewards are `-log10(1 + card)` when set, `-card` otherwise.
    pub log_rewards: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            alpha: 0.1,
            gamma: 1.0,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.5,
            seed: 0,
            q_mode: QMode::Tabular,
            q_hidden: 32,
            reward_mode: RewardMode::TrueCardinality,
            log_rewards: true,
        }
    }
}

impl AgentConfig {
    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = (self.epsilon_decay * self.episodes as f64).ceil();
        if span <= 0.0 || episode as f64 >= span {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * episode as f64 / span
    }

    fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) || !unit(self.epsilon_decay) {
            return Err(Error::config("agent.epsilon", "epsilon settings must lie in [0, 1]"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !unit(self.gamma) {
            return Err(Error::config("agent", "alpha must lie in (0, 1] and gamma in [0, 1]"));
        }
        Ok(())
    }
}

/// One line of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub step: usize,
    pub state_key: String,
    pub action: String,
    pub action_id: usize,
    pub reward: f64,
    pub q_value: f64,
}

/// A complete plan with the cardinality and cost of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedQuery {
    pub actions: Vec<PlanAction>,
    pub cardinalities: Vec<f64>,
    /// Sum of step costs, i.e. minus the undiscounted return.
    pub cost: f64,
}

/// Runs `cfg.episodes` epsilon-greedy episodes, updating `q` after every
/// step. When `log` is given, one JSON object per step is written to it.
pub fn run_training(
    env: &PlanningEnv<'_>,
    mut q: QFunction,
    cfg: &AgentConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<QFunction> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for episode in 0..cfg.episodes {
        let eps = cfg.epsilon(episode);
        let mut state = env.reset()?;
        let mut step = 0;
        while !env.is_terminal(&state) {
            let mut legal = env.legal_actions(&state)?;
            if legal.is_empty() {
                return Err(Error::Contract("non-terminal state without legal actions".into()));
            }
            // Draw unconditionally so the random stream does not depend on
            // the values learned so far.
            let explore = rng.random::<f64>() < eps;
            let pick = rng.random_range(0..legal.len());
            let action = if explore {
                legal.swap_remove(pick)
            } else {
                q.greedy(env, &state)?.expect("legal actions exist").0
            };
            let t = env.step(&state, &action.action)?;
            let q_value = q_update(&mut q, env, &state, &action, t.reward, &t.next, cfg.alpha, cfg.gamma)?;
            if let Some(w) = log.as_deref_mut() {
                let rec = EpisodeRecord {
                    episode,
                    step,
                    state_key: StateKey::of(&state).to_string(),
                    action: action.action.to_string(),
                    action_id: action.id,
                    reward: t.reward,
                    q_value,
                };
                serde_json::to_writer(&mut *w, &rec).map_err(|e| Error::Encoding(e.to_string()))?;
                w.write_all(b"\n").map_err(|e| Error::io("episode log", e))?;
            }
            state = t.next;
            step += 1;
        }
    }
    Ok(q)
}

fn follow(
    env: &PlanningEnv<'_>,
    log_costs: bool,
    mut choose: impl FnMut(&super::PlanState) -> Result<PlanAction>,
) -> Result<PlannedQuery> {
    let mut state = env.reset()?;
    let mut out = PlannedQuery {
        actions: Vec::new(),
        cardinalities: Vec::new(),
        cost: 0.0,
    };
    let limit = env.query().selections.len() + env.query().joins.len();
    while !env.is_terminal(&state) {
        if out.actions.len() >= limit {
            return Err(Error::Contract("plan did not terminate".into()));
        }
        let a = choose(&state)?;
        let t = env.step(&state, &a.action)?;
        out.cost += stage_cost(t.cardinality, log_costs);
        out.cardinalities.push(t.cardinality);
        out.actions.push(a);
        state = t.next;
    }
    Ok(out)
}

/// Follows `q` greedily from the empty plan (ties to the lowest action id).
/// Costs are in the environment's reward mode.
pub fn best_plan(env: &PlanningEnv<'_>, q: &QFunction, log_costs: bool) -> Result<PlannedQuery> {
    follow(env, log_costs, |s| Ok(q.greedy(env, s)?.expect("non-terminal").0))
}

/// Picks, at every step, the action whose output has the smallest estimated
/// cardinality under the histogram baseline.
pub fn greedy_baseline_plan(db: &Database, catalog: &Catalog, query: &QuerySpec) -> Result<PlannedQuery> {
    let env = PlanningEnv::new(db, catalog, query, None, RewardMode::BaselineCost, true)?;
    follow(&env, true, |s| {
        let mut best: Option<(PlanAction, f64)> = None;
        for a in env.legal_actions(s)? {
            let c = env.step(s, &a.action)?.cardinality;
            if best.as_ref().is_none_or(|(_, b)| c < *b) {
                best = Some((a, c));
            }
        }
        Ok(best.expect("non-terminal").0)
    })
}
