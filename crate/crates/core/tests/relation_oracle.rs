mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlqo::catalog::Catalog;
use rlqo::harness::{gen_workload, WorkloadKind, WorkloadSpec};
use rlqo::relation::{
    gen_synthetic, load_csv, save_csv, subquery_of, true_cardinality, Column, ColumnSpec, Database, Marginal,
    PlanProgress, Relation, SyntheticSpec,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_matches_nested_loop(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (db, joins) = common::random_db(&mut rng, 3, 60);
        let q = common::random_query(&mut rng, &db, &joins);
        prop_assert_eq!(true_cardinality(&db, &q).unwrap(), common::brute_force_count(&db, &q));
    }

    #[test]
    fn selection_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (db, joins) = common::random_db(&mut rng, 3, 80);
        let q = common::random_query(&mut rng, &db, &joins);
        let mut shuffled = q.clone();
        shuffled.selections.shuffle(&mut rng);
        shuffled.joins.reverse();
        prop_assert_eq!(true_cardinality(&db, &q).unwrap(), true_cardinality(&db, &shuffled).unwrap());
    }

    #[test]
    fn looser_bounds_never_shrink_the_result(seed in any::<u64>(), bump in 0.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (db, joins) = common::random_db(&mut rng, 2, 80);
        let q = common::random_query(&mut rng, &db, &joins);
        let mut looser = q.clone();
        for s in &mut looser.selections {
            s.bound += bump;
        }
        prop_assert!(true_cardinality(&db, &looser).unwrap() >= true_cardinality(&db, &q).unwrap());
    }
}

fn subsample(rel: &Relation, rows: usize) -> Relation {
    let cols = rel
        .columns()
        .iter()
        .map(|c| Column::new(c.name.clone(), c.data[..rows].to_vec()))
        .collect();
    Relation::new(rel.name(), cols).unwrap()
}

#[test]
fn workload_labels_agree_with_nested_loop_on_a_subsample() {
    let spec = |name: &str, seed, columns: Vec<(&str, Marginal)>| SyntheticSpec {
        name: name.into(),
        rows: 1000,
        seed,
        columns: columns
            .into_iter()
            .map(|(n, rule)| ColumnSpec { name: n.into(), rule })
            .collect(),
    };
    let r = gen_synthetic(
        &spec(
            "R",
            1,
            vec![
                ("id", Marginal::Uniform { low: 0, high: 30 }),
                ("a", Marginal::Uniform { low: 0, high: 50 }),
                (
                    "b",
                    Marginal::Derived {
                        source: "a".into(),
                        scale: 1.0,
                        offset: 0.0,
                        noise: 3,
                    },
                ),
            ],
        ),
        1,
    )
    .unwrap();
    let s = gen_synthetic(
        &spec(
            "S",
            2,
            vec![(
                "rid",
                Marginal::Zipf {
                    n: 30,
                    s: 1.2,
                    offset: 0,
                },
            )],
        ),
        2,
    )
    .unwrap();
    let db = Database::new(vec![subsample(&r, 100), subsample(&s, 100)]).unwrap();
    let join = "R.id = S.rid".parse().unwrap();
    let catalog = Catalog::build(&db, &[join], 8).unwrap();
    let wl = gen_workload(
        &WorkloadSpec {
            kind: WorkloadKind::SelectionJoin,
            relation: "R".into(),
            m: 2,
            attributes: Some(vec!["a".into(), "b".into()]),
            join: Some("R.id = S.rid".into()),
            count: 60,
            train_fraction: 0.5,
            seed: 4,
        },
        &db,
        &catalog,
    )
    .unwrap();
    for (q, ex) in wl.queries.iter().zip(&wl.examples) {
        for t in 0..ex.len() {
            let stage = PlanProgress::replay(q, &ex.actions[..=t])
                .unwrap()
                .last_output(q)
                .unwrap();
            assert_eq!(ex.labels[t], common::brute_force_count(&db, &stage) as f64);
        }
        // the last stage is the whole query
        assert_eq!(subquery_of(q, &ex.actions).unwrap(), *q);
    }
}

#[test]
fn csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (db, _) = common::random_db(&mut rng, 1, 50);
    let rel = &db.relations()[0];
    let path = dir.path().join("r.csv");
    save_csv(rel, &path).unwrap();
    let names: Vec<String> = rel.attribute_names().map(str::to_string).collect();
    assert_eq!(&load_csv(&path, rel.name(), &names).unwrap(), rel);
}
