//! Q-learning over left-deep plans.
//!
//! A planning episode starts from an empty plan and applies one legal action
//! per step until every predicate of the query is consumed. The state carries
//! the learned representation `h_t` of the subquery built so far, the context
//! vector of still-pending predicates and the plan bookkeeping.

mod agent;
mod exhaustive;
mod qfunction;
mod render;

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use agent::{best_plan, greedy_baseline_plan, run_training, AgentConfig, EpisodeRecord, PlannedQuery};
pub use exhaustive::{exhaustive_optimum, plan_cost, MAX_EXHAUSTIVE_RELATIONS};
pub use qfunction::{q_update, QFunction, QMode, StateKey};
pub use render::render_plan;

use crate::baseline::estimate_query;
use crate::catalog::{encode_action, Catalog, ContextVector, DatabaseVector};
use crate::error::{Error, Result};
use crate::model::{stage_scale, HiddenState, RepresentationModel};
use crate::relation::{true_cardinality, Action, Database, PlanProgress, QuerySpec};

/// Where step rewards come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// Cardinality decoded from the learned state by `NN_observed`.
    LearnedCardinality,
    /// Exact cardinality of each intermediate result.
    TrueCardinality,
    /// Histogram and independence estimate of each intermediate result.
    BaselineCost,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" | "learned-cardinality" => Ok(Self::LearnedCardinality),
            "true" | "true-cardinality" => Ok(Self::TrueCardinality),
            "baseline" | "baseline-cost" => Ok(Self::BaselineCost),
            _ => Err(Error::config("reward_mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// Cost of an intermediate result of `card` tuples.
pub fn stage_cost(card: f64, log_scale: bool) -> f64 {
    if log_scale {
        (1.0 + card.max(0.0)).log10()
    } else {
        card.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    pub hidden: HiddenState,
    pub context: ContextVector,
    pub progress: PlanProgress,
}

/// A legal action together with its stable id: selection groups are numbered
/// by catalog relation index, joins follow at `relations + join index`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanAction {
    pub id: usize,
    pub action: Action,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub next: PlanState,
    pub reward: f64,
    /// Cardinality of the step's output under the environment's reward mode.
    pub cardinality: f64,
}

/// Consumed-predicate key of a plan prefix plus the last action id.
type StageKey = (Vec<usize>, Vec<usize>);

/// Deterministic planning environment for one query.
pub struct PlanningEnv<'a> {
    db: &'a Database,
    catalog: &'a Catalog,
    query: &'a QuerySpec,
    model: Option<&'a RepresentationModel>,
    x0: Option<DatabaseVector>,
    reward_mode: RewardMode,
    log_rewards: bool,
    cache: RefCell<HashMap<StageKey, f64>>,
}

impl<'a> PlanningEnv<'a> {
    /// `model` is required for [`RewardMode::LearnedCardinality`]; without a
    /// model the hidden state is empty.
    pub fn new(
        db: &'a Database,
        catalog: &'a Catalog,
        query: &'a QuerySpec,
        model: Option<&'a RepresentationModel>,
        reward_mode: RewardMode,
        log_rewards: bool,
    ) -> Result<Self> {
        query.validate(db)?;
        if !query.is_connected() {
            return Err(Error::Contract("query graph is not connected".into()));
        }
        if reward_mode == RewardMode::LearnedCardinality && model.is_none() {
            return Err(Error::config("reward_mode", "learned rewards need a trained model"));
        }
        let x0 = match model {
            Some(m) => {
                let x0 = crate::catalog::build_x0(catalog);
                if x0.values.len() != m.x0_dim() || catalog.encoding_len() != m.action_dim() {
                    return Err(Error::Shape {
                        expected: m.x0_dim(),
                        actual: x0.values.len(),
                        context: "model does not match the catalog",
                    });
                }
                Some(x0)
            }
            None => None,
        };
        Ok(Self {
            db,
            catalog,
            query,
            model,
            x0,
            reward_mode,
            log_rewards,
            cache: RefCell::new(HashMap::new()),
        })
    }

    pub fn query(&self) -> &QuerySpec {
        self.query
    }

    pub fn catalog(&self) -> &Catalog {
        self.catalog
    }

    pub fn reward_mode(&self) -> RewardMode {
        self.reward_mode
    }

    pub fn state_dim(&self) -> usize {
        self.model.map_or(0, RepresentationModel::state_dim)
    }

    pub fn reset(&self) -> Result<PlanState> {
        Ok(PlanState {
            hidden: HiddenState(vec![0.0; self.state_dim()]),
            context: ContextVector::init(self.query, self.catalog)?,
            progress: PlanProgress::new(),
        })
    }

    pub fn action_id(&self, action: &Action) -> Result<usize> {
        let n = self.catalog.relations().len();
        match action {
            Action::Select { predicates } => {
                let rel = &predicates[0].relation;
                self.catalog
                    .relation_index(rel)
                    .ok_or_else(|| Error::Encoding(format!("unknown relation `{rel}`")))
            }
            Action::Join { predicate } => self
                .catalog
                .join_index(predicate)
                .map(|j| n + j)
                .ok_or_else(|| Error::Encoding(format!("`{predicate}` is not a declared join key"))),
        }
    }

    /// Legal actions in ascending id order.
    pub fn legal_actions(&self, state: &PlanState) -> Result<Vec<PlanAction>> {
        let mut out = state
            .progress
            .legal_actions(self.query)
            .into_iter()
            .map(|action| {
                Ok(PlanAction {
                    id: self.action_id(&action)?,
                    action,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.sort_by_key(|a| a.id);
        Ok(out)
    }

    pub fn is_terminal(&self, state: &PlanState) -> bool {
        state.progress.is_terminal(self.query)
    }

    fn stage_cardinality(&self, progress: &PlanProgress, hidden: &HiddenState) -> Result<f64> {
        let stage = progress
            .last_output(self.query)
            .ok_or_else(|| Error::Contract("no action applied".into()))?;
        if self.reward_mode == RewardMode::LearnedCardinality {
            let model = self.model.expect("checked in new");
            return model.decode_cardinality(hidden, stage_scale(self.catalog, &stage)?);
        }
        // Output of the latest step only depends on which predicates were
        // consumed and what the last action was.
        let mut key = progress.key();
        key.0.push(usize::MAX);
        key.0.push(self.action_id(progress.applied().last().unwrap())?);
        if let Some(&c) = self.cache.borrow().get(&key) {
            return Ok(c);
        }
        let c = match self.reward_mode {
            RewardMode::TrueCardinality => true_cardinality(self.db, &stage)? as f64,
            RewardMode::BaselineCost => estimate_query(self.catalog, &stage)?,
            RewardMode::LearnedCardinality => unreachable!(),
        };
        self.cache.borrow_mut().insert(key, c);
        Ok(c)
    }

    pub fn step(&self, state: &PlanState, action: &Action) -> Result<Transition> {
        let progress = state.progress.apply(self.query, action)?;
        let context = state.context.apply_action(action, self.catalog)?;
        let hidden = match (self.model, &self.x0) {
            (Some(m), Some(x0)) => {
                let enc = encode_action(action, self.catalog)?;
                if state.progress.applied().is_empty() {
                    m.initial_state(x0, &enc)?
                } else {
                    m.transition(&state.hidden, &enc)?
                }
            }
            _ => HiddenState(Vec::new()),
        };
        let cardinality = self.stage_cardinality(&progress, &hidden)?;
        Ok(Transition {
            reward: -stage_cost(cardinality, self.log_rewards),
            cardinality,
            next: PlanState {
                hidden,
                context,
                progress,
            },
        })
    }
}
