mod common;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlqo::catalog::Catalog;
use rlqo::planner::{
    best_plan, exhaustive_optimum, plan_cost, q_update, run_training, stage_cost, AgentConfig, PlanningEnv, QFunction,
    RewardMode,
};
use rlqo::relation::{Action, Column, Database, JoinPredicate, QuerySpec, Relation, Selection};
use rlqo::Error;

fn rel(name: &str, cols: &[(&str, &[f64])]) -> Relation {
    Relation::new(name, cols.iter().map(|(n, d)| Column::new(*n, d.to_vec())).collect()).unwrap()
}

/// Predicates of `q` as independent steps: one selection group per relation
/// and one step per join.
#[derive(Clone, Debug)]
enum Step {
    Sel(String),
    Join(JoinPredicate),
}

/// Recursive enumeration of every legal left-deep order, scored with the
/// nested-loop counter. Returns all (cost, order) pairs.
fn enumerate(db: &Database, q: &QuerySpec) -> Vec<(f64, Vec<Step>)> {
    let mut steps: Vec<Step> = q
        .relations
        .iter()
        .filter(|r| q.selections_on(r).next().is_some())
        .map(|r| Step::Sel(r.clone()))
        .collect();
    steps.extend(q.joins.iter().cloned().map(Step::Join));

    struct Walk<'a> {
        db: &'a Database,
        q: &'a QuerySpec,
        steps: Vec<Step>,
        out: Vec<(f64, Vec<Step>)>,
    }
    impl Walk<'_> {
        fn output(&self, chain: &BTreeSet<String>, joins: &[JoinPredicate]) -> u64 {
            let sub = QuerySpec {
                relations: chain.clone(),
                selections: self
                    .q
                    .selections
                    .iter()
                    .filter(|s| chain.contains(&s.relation))
                    .cloned()
                    .collect(),
                joins: joins.to_vec(),
            };
            common::brute_force_count(self.db, &sub)
        }

        fn go(
            &mut self,
            used: &mut Vec<bool>,
            filtered: &mut BTreeSet<String>,
            chain: &mut BTreeSet<String>,
            joins: &mut Vec<JoinPredicate>,
            order: &mut Vec<Step>,
            cost: f64,
        ) {
            if used.iter().all(|u| *u) {
                self.out.push((cost, order.clone()));
                return;
            }
            for i in 0..self.steps.len() {
                if used[i] {
                    continue;
                }
                let step = self.steps[i].clone();
                match &step {
                    Step::Sel(r) => {
                        if chain.contains(r) {
                            continue;
                        }
                        let single: BTreeSet<String> = [r.clone()].into();
                        let c = self.output(&single, &[]);
                        used[i] = true;
                        filtered.insert(r.clone());
                        order.push(step.clone());
                        self.go(used, filtered, chain, joins, order, cost + (1.0 + c as f64).log10());
                        order.pop();
                        filtered.remove(r);
                        used[i] = false;
                    }
                    Step::Join(j) => {
                        let (a, b) = (&j.left().relation, &j.right().relation);
                        let ready = |r: &String| {
                            chain.contains(r) || filtered.contains(r) || self.q.selections_on(r).next().is_none()
                        };
                        if !ready(a) || !ready(b) {
                            continue;
                        }
                        if !chain.is_empty() && !chain.contains(a) && !chain.contains(b) {
                            continue;
                        }
                        let added: Vec<String> = [a, b].into_iter().filter(|r| !chain.contains(*r)).cloned().collect();
                        chain.extend(added.iter().cloned());
                        joins.push(j.clone());
                        let c = self.output(chain, joins);
                        used[i] = true;
                        order.push(step.clone());
                        self.go(used, filtered, chain, joins, order, cost + (1.0 + c as f64).log10());
                        order.pop();
                        used[i] = false;
                        joins.pop();
                        for r in &added {
                            chain.remove(r);
                        }
                    }
                }
            }
        }
    }

    let n = steps.len();
    let mut w = Walk {
        db,
        q,
        steps,
        out: Vec::new(),
    };
    w.go(
        &mut vec![false; n],
        &mut BTreeSet::new(),
        &mut BTreeSet::new(),
        &mut Vec::new(),
        &mut Vec::new(),
        0.0,
    );
    w.out
}

#[test]
fn exhaustive_optimum_agrees_with_an_independent_enumerator() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 12 {
        let (db, joins) = common::random_db(&mut rng, 4, 12);
        let catalog = Catalog::build(&db, &joins, 4).unwrap();
        let q = common::random_query(&mut rng, &db, &joins);
        if q.relations.len() < 3 {
            continue;
        }
        let all = enumerate(&db, &q);
        assert!(!all.is_empty());
        let best = all.iter().map(|(c, _)| *c).fold(f64::INFINITY, f64::min);
        let opt = exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true).unwrap();
        assert!((opt.cost - best).abs() <= 1e-9, "{} vs {best}", opt.cost);
        let actions: Vec<Action> = opt.actions.iter().map(|a| a.action.clone()).collect();
        let again = plan_cost(&db, &catalog, &q, &actions, RewardMode::TrueCardinality, true).unwrap();
        assert!((again - opt.cost).abs() <= 1e-12);
        checked += 1;
    }
}

#[test]
fn skewed_four_relation_chain() {
    // fan-out grows sharply towards D, so D should join last
    let a = rel("A", &[("k", &[0.0, 1.0, 2.0, 3.0])]);
    let b = rel(
        "B",
        &[("k", &[0.0, 0.0, 1.0, 2.0, 3.0]), ("m", &[0.0, 1.0, 1.0, 2.0, 2.0])],
    );
    let c = rel(
        "C",
        &[
            ("m", &[1.0, 1.0, 2.0, 2.0, 2.0, 5.0]),
            ("n", &[0.0, 1.0, 0.0, 0.0, 1.0, 1.0]),
        ],
    );
    let d = rel(
        "D",
        &[("n", &[0.0; 20].iter().chain(&[1.0; 3]).copied().collect::<Vec<_>>())],
    );
    let db = Database::new(vec![a, b, c, d]).unwrap();
    let joins: Vec<JoinPredicate> = ["A.k = B.k", "B.m = C.m", "C.n = D.n"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let catalog = Catalog::build(&db, &joins, 4).unwrap();
    let q = QuerySpec {
        relations: ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect(),
        selections: vec![],
        joins: joins.clone(),
    };
    let all = enumerate(&db, &q);
    let (best, order) = all.iter().min_by(|x, y| x.0.total_cmp(&y.0)).unwrap();
    let opt = exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true).unwrap();
    assert!((opt.cost - best).abs() <= 1e-9);
    assert!(matches!(order.last(), Some(Step::Join(j)) if j.touches("D")));
    assert!(opt.actions.last().unwrap().action.to_string().contains('D'));
}

#[test]
fn legal_actions_follow_pushdown_and_connectivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (db, joins) = common::random_db(&mut rng, 3, 10);
    let catalog = Catalog::build(&db, &joins, 4).unwrap();
    let two = QuerySpec {
        relations: ["R0".to_string(), "R1".to_string()].into(),
        selections: vec![Selection::new("R0", "a", 5.0), Selection::new("R1", "b", 3.0)],
        joins: vec![joins[0].clone()],
    };
    let env = PlanningEnv::new(&db, &catalog, &two, None, RewardMode::TrueCardinality, true).unwrap();
    let s0 = env.reset().unwrap();
    let ids = |s| env.legal_actions(s).unwrap().iter().map(|a| a.id).collect::<Vec<_>>();
    assert_eq!(ids(&s0), vec![0, 1]);
    let s1 = env.step(&s0, &env.legal_actions(&s0).unwrap()[0].action).unwrap().next;
    let s2 = env.step(&s1, &env.legal_actions(&s1).unwrap()[0].action).unwrap().next;
    // three relations in the catalog, so the first join has id 3
    assert_eq!(ids(&s2), vec![3]);

    let chain = QuerySpec {
        relations: ["R0", "R1", "R2"].iter().map(|s| s.to_string()).collect(),
        selections: vec![],
        joins: joins.clone(),
    };
    let env = PlanningEnv::new(&db, &catalog, &chain, None, RewardMode::TrueCardinality, true).unwrap();
    let ids = |s| env.legal_actions(s).unwrap().iter().map(|a| a.id).collect::<Vec<_>>();
    let s0 = env.reset().unwrap();
    assert_eq!(ids(&s0), vec![3, 4]);
    let s1 = env.step(&s0, &Action::join(joins[1].clone())).unwrap().next;
    assert_eq!(ids(&s1), vec![3]);
    let s2 = env.step(&s1, &Action::join(joins[0].clone())).unwrap().next;
    assert!(env.is_terminal(&s2));
    assert!(ids(&s2).is_empty());
}

#[test]
fn reward_examples() {
    assert_eq!(stage_cost(0.0, true), 0.0);
    assert!((stage_cost(999.0, true) - 3.0).abs() < 1e-15);
    assert_eq!(stage_cost(999.0, false), 999.0);
}

#[test]
fn episode_return_is_minus_the_summed_log_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (db, joins) = common::random_db(&mut rng, 3, 15);
        let catalog = Catalog::build(&db, &joins, 4).unwrap();
        let q = common::random_query(&mut rng, &db, &joins);
        let env = PlanningEnv::new(&db, &catalog, &q, None, RewardMode::TrueCardinality, true).unwrap();
        let plan = rlqo::harness::random_plan(&q, &mut rng).unwrap();
        let mut s = env.reset().unwrap();
        let mut total = 0.0;
        let mut expect = 0.0;
        let bound: f64 = q
            .relations
            .iter()
            .map(|r| db.relation(r).unwrap().row_count() as f64)
            .product();
        for (t, a) in plan.iter().enumerate() {
            let tr = env.step(&s, a).unwrap();
            let stage = s.progress.apply(&q, a).unwrap().last_output(&q).unwrap();
            let truth = common::brute_force_count(&db, &stage) as f64;
            assert_eq!(tr.cardinality, truth, "stage {t}");
            assert!(tr.reward.abs() <= (1.0 + bound).log10() + 1e-12);
            total += tr.reward;
            expect -= (1.0 + truth).log10();
            s = tr.next;
        }
        assert!(env.is_terminal(&s));
        assert!((total - expect).abs() < 1e-12);
    }
}

fn two_relation_db() -> (Database, Catalog, QuerySpec) {
    let r = rel("R", &[("x", &[1.0, 1.0, 2.0, 3.0]), ("a", &[1.0, 2.0, 3.0, 4.0])]);
    let s = rel("S", &[("x", &[1.0, 2.0, 2.0]), ("b", &[5.0, 6.0, 7.0])]);
    let db = Database::new(vec![r, s]).unwrap();
    let j: JoinPredicate = "R.x = S.x".parse().unwrap();
    let catalog = Catalog::build(&db, std::slice::from_ref(&j), 4).unwrap();
    let q = QuerySpec {
        relations: ["R".to_string(), "S".to_string()].into(),
        selections: vec![Selection::new("R", "a", 3.0), Selection::new("S", "b", 6.0)],
        joins: vec![j],
    };
    (db, catalog, q)
}

#[test]
fn two_relation_selection_orders_tie_and_the_lower_id_wins() {
    let (db, catalog, q) = two_relation_db();
    let sel = |r: &str| Action::select(q.selections_on(r).cloned().collect()).unwrap();
    let join = Action::join(q.joins[0].clone());
    let rs = plan_cost(
        &db,
        &catalog,
        &q,
        &[sel("R"), sel("S"), join.clone()],
        RewardMode::TrueCardinality,
        true,
    );
    let sr = plan_cost(
        &db,
        &catalog,
        &q,
        &[sel("S"), sel("R"), join],
        RewardMode::TrueCardinality,
        true,
    );
    assert_eq!(rs.unwrap(), sr.unwrap());
    let opt = exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true).unwrap();
    assert_eq!(opt.actions.iter().map(|a| a.id).collect::<Vec<_>>(), vec![0, 1, 2]);

    // an untrained table is all zeros, so the greedy plan is the same
    let env = PlanningEnv::new(&db, &catalog, &q, None, RewardMode::TrueCardinality, true).unwrap();
    let plan = best_plan(&env, &QFunction::tabular(), true).unwrap();
    assert_eq!(plan.actions, opt.actions);
}

#[test]
fn single_relation_query_has_one_plan() {
    let (db, catalog, _) = two_relation_db();
    let q = QuerySpec {
        relations: ["R".to_string()].into(),
        selections: vec![Selection::new("R", "a", 2.0)],
        joins: vec![],
    };
    let env = PlanningEnv::new(&db, &catalog, &q, None, RewardMode::TrueCardinality, true).unwrap();
    let plan = best_plan(&env, &QFunction::tabular(), true).unwrap();
    assert_eq!(plan.actions.len(), 1);
    assert_eq!(plan.cardinalities, vec![2.0]);
    let opt = exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true).unwrap();
    assert_eq!(opt.actions, plan.actions);
}

#[test]
fn zero_episodes_and_zero_step_size_change_nothing() {
    let (db, catalog, q) = two_relation_db();
    let env = PlanningEnv::new(&db, &catalog, &q, None, RewardMode::TrueCardinality, true).unwrap();
    let cfg = AgentConfig {
        episodes: 0,
        ..Default::default()
    };
    let q0 = run_training(&env, QFunction::tabular(), &cfg, None).unwrap();
    assert_eq!(q0, QFunction::tabular());

    let mut qf = run_training(
        &env,
        QFunction::tabular(),
        &AgentConfig {
            episodes: 20,
            ..Default::default()
        },
        None,
    )
    .unwrap();
    let before = qf.clone();
    let s0 = env.reset().unwrap();
    let a = env.legal_actions(&s0).unwrap().remove(0);
    let t = env.step(&s0, &a.action).unwrap();
    let v = q_update(&mut qf, &env, &s0, &a, t.reward, &t.next, 0.0, 1.0).unwrap();
    assert_eq!(qf, before);
    assert_eq!(v, before.value(&env, &s0, &a).unwrap());
}

#[test]
fn fixed_seed_replays_the_episode_log() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (db, joins) = common::random_db(&mut rng, 3, 15);
    let catalog = Catalog::build(&db, &joins, 4).unwrap();
    let q = QuerySpec {
        relations: ["R0", "R1", "R2"].iter().map(|s| s.to_string()).collect(),
        selections: vec![Selection::new("R0", "a", 9.0)],
        joins,
    };
    let env = PlanningEnv::new(&db, &catalog, &q, None, RewardMode::TrueCardinality, true).unwrap();
    let run = |seed| {
        let mut log = Vec::new();
        let cfg = AgentConfig {
            episodes: 50,
            seed,
            ..Default::default()
        };
        let qf = run_training(&env, QFunction::tabular(), &cfg, Some(&mut log)).unwrap();
        (qf, String::from_utf8(log).unwrap())
    };
    let (qa, la) = run(3);
    let (qb, lb) = run(3);
    assert_eq!(la, lb);
    assert_eq!(qa, qb);
    // three predicates, one step each
    assert_eq!(la.lines().count(), 50 * 3);
    for line in la.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for field in [
            "episode",
            "step",
            "state_key",
            "action",
            "action_id",
            "reward",
            "q_value",
        ] {
            assert!(v.get(field).is_some(), "missing {field}");
        }
    }
    assert_ne!(run(4).1, la);
}

#[test]
fn converged_agent_matches_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut done = 0;
    while done < 3 {
        let (db, joins) = common::random_db(&mut rng, 3, 20);
        let catalog = Catalog::build(&db, &joins, 4).unwrap();
        let mut q = common::random_query(&mut rng, &db, &joins);
        if q.relations.len() < 3 {
            continue;
        }
        q.selections.truncate(2);
        let env = PlanningEnv::new(&db, &catalog, &q, None, RewardMode::TrueCardinality, true).unwrap();
        let cfg = AgentConfig {
            episodes: 3000,
            seed: done,
            ..Default::default()
        };
        let qf = run_training(&env, QFunction::tabular(), &cfg, None).unwrap();
        let plan = best_plan(&env, &qf, true).unwrap();
        let opt = exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true).unwrap();
        assert!((plan.cost - opt.cost).abs() <= 1e-9, "{} vs {}", plan.cost, opt.cost);
        done += 1;
    }
}

#[test]
fn greedy_plans_consume_every_predicate_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for i in 0..10 {
        let (db, joins) = common::random_db(&mut rng, 4, 12);
        let catalog = Catalog::build(&db, &joins, 4).unwrap();
        let q = common::random_query(&mut rng, &db, &joins);
        let env = PlanningEnv::new(&db, &catalog, &q, None, RewardMode::BaselineCost, true).unwrap();
        let qf = run_training(
            &env,
            QFunction::tabular(),
            &AgentConfig {
                episodes: 30,
                seed: i,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let plan = best_plan(&env, &qf, true).unwrap();
        let mut seen_sel = BTreeSet::new();
        let mut seen_join = BTreeSet::new();
        let mut chain = BTreeSet::new();
        for a in &plan.actions {
            match &a.action {
                Action::Select { predicates } => {
                    assert!(!chain.contains(&predicates[0].relation));
                    assert!(seen_sel.insert(predicates[0].relation.clone()));
                }
                Action::Join { predicate } => {
                    assert!(seen_join.insert(predicate.to_string()));
                    let before = chain.len();
                    chain.insert(predicate.left().relation.clone());
                    chain.insert(predicate.right().relation.clone());
                    // the first join adds two relations, later ones one
                    assert_eq!(chain.len() - before, if before == 0 { 2 } else { 1 });
                }
            }
        }
        assert_eq!(seen_join.len(), q.joins.len());
        let with_sel: BTreeSet<String> = q.selections.iter().map(|s| s.relation.clone()).collect();
        assert_eq!(seen_sel, with_sel);
    }
}

#[test]
fn exhaustive_search_refuses_large_queries_and_learned_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (db, joins) = common::random_db(&mut rng, 6, 5);
    let catalog = Catalog::build(&db, &joins, 4).unwrap();
    let q = QuerySpec {
        relations: db.relations().iter().map(|r| r.name().to_string()).collect(),
        selections: vec![],
        joins,
    };
    assert!(matches!(
        exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true),
        Err(Error::Capacity(_))
    ));
    let (db, catalog, q) = two_relation_db();
    assert!(exhaustive_optimum(&db, &catalog, &q, RewardMode::LearnedCardinality, true).is_err());
}
