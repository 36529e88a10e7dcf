use super::{stage_cost, PlanAction, PlanState, PlannedQuery, PlanningEnv, RewardMode};
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::relation::{Action, Database, QuerySpec};

/// Queries with more relations are refused by [`exhaustive_optimum`].
pub const MAX_EXHAUSTIVE_RELATIONS: usize = 5;

/// Cost of a complete plan: summed step costs under `mode` (true or
/// baseline cardinalities).
pub fn plan_cost(
    db: &Database,
    catalog: &Catalog,
    query: &QuerySpec,
    actions: &[Action],
    mode: RewardMode,
    log_costs: bool,
) -> Result<f64> {
    let env = PlanningEnv::new(db, catalog, query, None, mode, log_costs)?;
    let mut state = env.reset()?;
    let mut cost = 0.0;
    for a in actions {
        let t = env.step(&state, a)?;
        cost += stage_cost(t.cardinality, log_costs);
        state = t.next;
    }
    if !env.is_terminal(&state) {
        return Err(Error::Contract("plan leaves predicates unapplied".into()));
    }
    Ok(cost)
}

/// Cheapest legal plan by exhaustive search. Among plans of equal cost the
/// one with the lexicographically smallest action-id sequence wins.
pub fn exhaustive_optimum(
    db: &Database,
    catalog: &Catalog,
    query: &QuerySpec,
    mode: RewardMode,
    log_costs: bool,
) -> Result<PlannedQuery> {
    if query.relations.len() > MAX_EXHAUSTIVE_RELATIONS {
        return Err(Error::Capacity(format!(
            "exhaustive search is limited to {MAX_EXHAUSTIVE_RELATIONS} relations, query has {}",
            query.relations.len()
        )));
    }
    if mode == RewardMode::LearnedCardinality {
        return Err(Error::config(
            "reward_mode",
            "exhaustive search needs true or baseline costs",
        ));
    }
    let env = PlanningEnv::new(db, catalog, query, None, mode, log_costs)?;
    let mut best: Option<PlannedQuery> = None;
    let mut path = PlannedQuery {
        actions: Vec::new(),
        cardinalities: Vec::new(),
        cost: 0.0,
    };
    search(&env, &env.reset()?, log_costs, &mut path, &mut best)?;
    best.ok_or_else(|| Error::Contract("query has no legal plan".into()))
}

fn search(
    env: &PlanningEnv<'_>,
    state: &PlanState,
    log_costs: bool,
    path: &mut PlannedQuery,
    best: &mut Option<PlannedQuery>,
) -> Result<()> {
    if env.is_terminal(state) {
        // Equal-cost plans can differ by rounding in the summation order.
        let better = best
            .as_ref()
            .is_none_or(|b| path.cost < b.cost - 1e-12 * b.cost.abs().max(1.0));
        if better {
            *best = Some(path.clone());
        }
        return Ok(());
    }
    for a in env.legal_actions(state)? {
        let t = env.step(state, &a.action)?;
        let c = stage_cost(t.cardinality, log_costs);
        path.actions.push(PlanAction {
            id: a.id,
            action: a.action,
        });
        path.cardinalities.push(t.cardinality);
        path.cost += c;
        search(env, &t.next, log_costs, path, best)?;
        path.cost -= c;
        path.cardinalities.pop();
        path.actions.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::tests::{chain_db, chain_query};
    use crate::relation::{true_cardinality, Selection};

    #[test]
    fn optimum_of_the_chain_query() {
        let (db, catalog) = chain_db();
        let q = chain_query(&catalog);
        let best = exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true).unwrap();
        let plain: Vec<Action> = best.actions.iter().map(|a| a.action.clone()).collect();
        let again = plan_cost(&db, &catalog, &q, &plain, RewardMode::TrueCardinality, true).unwrap();
        assert!((again - best.cost).abs() < 1e-12);
        // Both selections come first; the two join orders are the only choice.
        let sr = true_cardinality(
            &db,
            &QuerySpec {
                selections: vec![Selection::new("R", "a", 9.0)],
                ..QuerySpec::single("R")
            },
        )
        .unwrap();
        let st = true_cardinality(
            &db,
            &QuerySpec {
                selections: vec![Selection::new("T", "b", 3.0)],
                ..QuerySpec::single("T")
            },
        )
        .unwrap();
        let all = true_cardinality(&db, &q).unwrap();
        let mut rs = q.clone();
        rs.relations.remove("T");
        rs.selections.truncate(1);
        rs.joins.truncate(1);
        let mut s_t = q.clone();
        s_t.relations.remove("R");
        s_t.selections.remove(0);
        s_t.joins.remove(0);
        let l = |c: u64| (1.0 + c as f64).log10();
        let base = l(sr) + l(st) + l(all);
        let expect = base + l(true_cardinality(&db, &rs).unwrap()).min(l(true_cardinality(&db, &s_t).unwrap()));
        assert!((best.cost - expect).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_queries() {
        let (db, catalog) = chain_db();
        let mut q = chain_query(&catalog);
        for r in ["U", "V", "W"] {
            q.relations.insert(r.into());
        }
        let err = exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }
}
