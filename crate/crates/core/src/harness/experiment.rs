use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plans::{gen_plan_queries, random_plan};
use super::{gen_workload, DatabaseConfig, RelationSource, WorkloadKind, WorkloadSpec};
use crate::baseline::estimate_query;
use crate::catalog::{build_x0, Catalog, DatabaseVector};
use crate::error::{Error, Result};
use crate::model::train::{evaluate, push_split};
use crate::model::{train_combined, EpochMetrics, ModelConfig, RepresentationModel, SequenceExample, TrainConfig};
use crate::planner::{
    best_plan, exhaustive_optimum, greedy_baseline_plan, plan_cost, run_training, AgentConfig, PlanningEnv, QFunction,
    RewardMode,
};
use crate::relation::{ColumnSpec, Database, Marginal, PlanProgress, QuerySpec, SyntheticSpec};

/// Settings of the planner evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerEvalSpec {
    pub queries: usize,
    /// Relations per query.
    pub relations: usize,
    pub selection_probability: f64,
    pub reward_modes: Vec<RewardMode>,
    /// Randomly planned queries used to train the model behind learned
    /// rewards.
    pub model_queries: usize,
}

impl Default for PlannerEvalSpec {
    fn default() -> Self {
        Self {
            queries: 20,
            relations: 3,
            selection_probability: 0.5,
            reward_modes: vec![
                RewardMode::LearnedCardinality,
                RewardMode::TrueCardinality,
                RewardMode::BaselineCost,
            ],
            model_queries: 1000,
        }
    }
}

/// Everything needed to run one experiment. `seed` is the master seed: the
/// workload, model initialisation, training order and agent exploration
/// seeds are all derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub database: DatabaseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<WorkloadSpec>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerEvalSpec>,
}

pub const EXPERIMENTS: [&str; 3] = ["fig4-selection", "fig5-combined", "planner-eval"];

fn synthetic(name: &str, rows: usize, seed: u64, columns: Vec<(&str, Marginal)>) -> RelationSource {
    RelationSource::synthetic(SyntheticSpec {
        name: name.into(),
        rows,
        seed,
        columns: columns
            .into_iter()
            .map(|(n, rule)| ColumnSpec { name: n.into(), rule })
            .collect(),
    })
}

fn uniform(low: i64, high: i64) -> Marginal {
    Marginal::Uniform { low, high }
}

fn derived(source: &str, scale: f64, offset: f64, noise: i64) -> Marginal {
    Marginal::Derived {
        source: source.into(),
        scale,
        offset,
        noise,
    }
}

fn zipf(n: u64, s: f64) -> Marginal {
    Marginal::Zipf { n, s, offset: 0 }
}

impl ExperimentConfig {
    /// Built-in configuration of a named experiment.
    pub fn preset(name: &str) -> Result<Self> {
        let base = |database, workload, planner| ExperimentConfig {
            name: name.to_string(),
            seed: 42,
            database,
            workload,
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            agent: AgentConfig::default(),
            planner,
        };
        match name {
            "fig4-selection" => {
                // c1 is a function of c0, c2 is independent.
                let db = DatabaseConfig {
                    buckets: 16,
                    relations: vec![synthetic(
                        "R",
                        10_000,
                        7,
                        vec![
                            ("c0", uniform(0, 999)),
                            ("c1", derived("c0", 2.0, 5.0, 0)),
                            ("c2", uniform(0, 99)),
                        ],
                    )],
                    join_keys: vec![],
                };
                let wl = WorkloadSpec {
                    kind: WorkloadKind::Selection,
                    relation: "R".into(),
                    m: 2,
                    attributes: Some(vec!["c0".into(), "c1".into()]),
                    join: None,
                    count: 5000,
                    train_fraction: 0.8,
                    seed: 0,
                };
                Ok(base(db, Some(wl), None))
            }
            "fig5-combined" => {
                // Fan-out of R.id into S is Zipf-skewed and R.a tracks R.id,
                // so selections on a change the join size non-uniformly.
                let db = DatabaseConfig {
                    buckets: 16,
                    relations: vec![
                        synthetic(
                            "R",
                            2000,
                            11,
                            vec![
                                ("id", Marginal::Serial { start: 0 }),
                                ("a", derived("id", 0.5, 0.0, 25)),
                                ("b", uniform(0, 99)),
                            ],
                        ),
                        synthetic("S", 10_000, 12, vec![("rid", zipf(2000, 1.1)), ("c", uniform(0, 9))]),
                    ],
                    join_keys: vec!["R.id = S.rid".into()],
                };
                let wl = WorkloadSpec {
                    kind: WorkloadKind::SelectionJoin,
                    relation: "R".into(),
                    m: 2,
                    attributes: Some(vec!["a".into(), "b".into()]),
                    join: Some("R.id = S.rid".into()),
                    count: 2500,
                    train_fraction: 0.8,
                    seed: 0,
                };
                Ok(base(db, Some(wl), None))
            }
            "planner-eval" => {
                let db = DatabaseConfig {
                    buckets: 16,
                    relations: vec![
                        synthetic(
                            "A",
                            500,
                            21,
                            vec![
                                ("id", Marginal::Serial { start: 0 }),
                                ("x", uniform(0, 49)),
                                ("p", zipf(100, 1.2)),
                            ],
                        ),
                        synthetic(
                            "B",
                            2000,
                            22,
                            vec![
                                ("id", Marginal::Serial { start: 0 }),
                                ("aid", zipf(500, 1.1)),
                                ("q", uniform(0, 99)),
                            ],
                        ),
                        synthetic(
                            "C",
                            1000,
                            23,
                            vec![
                                ("id", Marginal::Serial { start: 0 }),
                                ("bid", uniform(0, 1999)),
                                ("x", uniform(0, 49)),
                                ("r", derived("bid", 0.05, 0.0, 5)),
                            ],
                        ),
                        synthetic("D", 3000, 24, vec![("cid", zipf(1000, 1.0)), ("s", uniform(0, 9))]),
                    ],
                    join_keys: vec![
                        "A.id = B.aid".into(),
                        "B.id = C.bid".into(),
                        "C.id = D.cid".into(),
                        "A.x = C.x".into(),
                    ],
                };
                let agent = AgentConfig {
                    episodes: 5000,
                    ..AgentConfig::default()
                };
                Ok(ExperimentConfig {
                    agent,
                    ..base(db, None, Some(PlannerEvalSpec::default()))
                })
            }
            other => Err(Error::config(
                "experiment",
                format!(
                    "unknown experiment `{other}`; expected one of {}",
                    EXPERIMENTS.join(", ")
                ),
            )),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("experiment", e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Encoding(e.to_string()))
    }
}

/// Seeds handed to each stage of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DerivedSeeds {
    pub workload: u64,
    pub model: u64,
    pub training: u64,
    pub agent: u64,
    pub queries: u64,
}

impl DerivedSeeds {
    pub fn from_master(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            workload: rng.random(),
            model: rng.random(),
            training: rng.random(),
            agent: rng.random(),
            queries: rng.random(),
        }
    }
}

/// One row of the planner comparison. Costs are summed
/// `log10(1 + true cardinality)` over the plan's steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerRow {
    pub query_id: usize,
    pub reward_mode: RewardMode,
    pub agent_cost: f64,
    pub baseline_cost: f64,
    pub optimum_cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub experiment: String,
    /// Per-epoch relative error of the learned model.
    pub epochs: Vec<EpochMetrics>,
    /// Relative error of the histogram baseline (epoch 0).
    pub baseline: Vec<EpochMetrics>,
    /// `(true, predicted)` pairs of the test split, one list per stage.
    pub scatter: Vec<Vec<(f64, f64)>>,
    pub planner: Vec<PlannerRow>,
}

impl MetricsReport {
    /// Final-epoch row of `split`.
    pub fn last(&self, split: &str) -> Option<&EpochMetrics> {
        self.epochs.iter().rev().find(|m| m.split == split)
    }

    pub fn baseline_of(&self, split: &str) -> Option<&EpochMetrics> {
        self.baseline.iter().find(|m| m.split == split)
    }

    pub fn metrics_csv(&self) -> String {
        epochs_csv(&self.epochs)
    }

    pub fn baseline_csv(&self) -> String {
        epochs_csv(&self.baseline)
    }

    pub fn scatter_csv(&self, stage: usize) -> String {
        let mut s = String::from("true,predicted\n");
        for (t, p) in &self.scatter[stage] {
            let _ = writeln!(s, "{t},{p}");
        }
        s
    }

    pub fn planner_csv(&self) -> String {
        let mut s = String::from("query_id,reward_mode,agent_cost,baseline_cost,optimum_cost\n");
        for r in &self.planner {
            let mode = serde_json::to_value(r.reward_mode).unwrap();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.query_id,
                mode.as_str().unwrap(),
                r.agent_cost,
                r.baseline_cost,
                r.optimum_cost
            );
        }
        s
    }

    /// Writes `metrics.csv`, `baseline.csv`, `scatter_h{t}.csv` and
    /// `planner.csv` (whichever apply) into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        if !self.epochs.is_empty() {
            put("metrics.csv", self.metrics_csv())?;
        }
        if !self.baseline.is_empty() {
            put("baseline.csv", self.baseline_csv())?;
        }
        for t in 0..self.scatter.len() {
            put(&format!("scatter_h{}.csv", t + 1), self.scatter_csv(t))?;
        }
        if !self.planner.is_empty() {
            put("planner.csv", self.planner_csv())?;
        }
        Ok(())
    }
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Encoding(format!("{}: {other:?}", path.display())),
    })?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

impl MetricsReport {
    /// Reads back whatever report files [`MetricsReport::write_to`] left in
    /// `dir`. Missing files yield empty sections.
    pub fn read_from(dir: &Path, experiment: &str) -> Result<Self> {
        let mut out = MetricsReport {
            experiment: experiment.to_string(),
            ..Default::default()
        };
        let exists = |name: &str| dir.join(name).is_file();
        if exists("metrics.csv") {
            out.epochs = read_rows(&dir.join("metrics.csv"))?;
        }
        if exists("baseline.csv") {
            out.baseline = read_rows(&dir.join("baseline.csv"))?;
        }
        if exists("planner.csv") {
            out.planner = read_rows(&dir.join("planner.csv"))?;
        }
        let mut t = 1;
        while exists(&format!("scatter_h{t}.csv")) {
            let rows: Vec<(f64, f64)> = read_rows(&dir.join(format!("scatter_h{t}.csv")))?;
            out.scatter.push(rows);
            t += 1;
        }
        Ok(out)
    }
}

fn epochs_csv(rows: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,split,mean_rel_err,median_rel_err,std\n");
    for m in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            m.epoch, m.split, m.mean_rel_err, m.median_rel_err, m.std
        );
    }
    s
}

/// Outcome of [`run_experiment`]: the report plus the trained model, if any.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub model: Option<RepresentationModel>,
}

/// Relative errors of the histogram baseline on each stage of `examples`.
pub fn baseline_errors(
    catalog: &Catalog,
    queries: &[QuerySpec],
    examples: &[SequenceExample],
    floor: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut errors: Vec<Vec<f64>> = Vec::new();
    for (q, ex) in queries.iter().zip(examples) {
        let mut p = PlanProgress::new();
        for (t, (a, y)) in ex.actions.iter().zip(&ex.labels).enumerate() {
            p = p.apply(q, a)?;
            let stage = p.last_output(q).expect("one action applied");
            let est = estimate_query(catalog, &stage)?;
            if errors.len() <= t {
                errors.push(Vec::new());
            }
            errors[t].push(crate::metrics::relative_error(est, *y, floor));
        }
    }
    Ok(errors)
}

/// Test-split `(true, predicted)` pairs per stage.
pub fn scatter_pairs(
    model: &RepresentationModel,
    x0: &DatabaseVector,
    examples: &[SequenceExample],
) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut out: Vec<Vec<(f64, f64)>> = Vec::new();
    for ex in examples {
        let preds = model.predict_encoded(x0, &ex.encodings, &ex.scales)?;
        for (t, (y, p)) in ex.labels.iter().zip(preds).enumerate() {
            if out.len() <= t {
                out.push(Vec::new());
            }
            out[t].push((*y, p));
        }
    }
    Ok(out)
}

fn train_model(
    cfg: &ExperimentConfig,
    seeds: &DerivedSeeds,
    catalog: &Catalog,
    train: &[SequenceExample],
    test: &[SequenceExample],
) -> Result<(RepresentationModel, Vec<EpochMetrics>)> {
    let x0 = build_x0(catalog);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.model);
    let init = RepresentationModel::new(&cfg.model, x0.values.len(), catalog.encoding_len(), &mut rng)?;
    let tcfg = TrainConfig {
        seed: seeds.training,
        ..cfg.training.clone()
    };
    let (model, report) = train_combined(&init, &x0, train, test, &tcfg)?;
    Ok((model, report.epochs))
}

/// Runs the experiment described by `cfg` against an already built database.
pub fn run_experiment_on(cfg: &ExperimentConfig, db: &Database, catalog: &Catalog) -> Result<ExperimentOutput> {
    let seeds = DerivedSeeds::from_master(cfg.seed);
    match cfg.name.as_str() {
        "fig4-selection" | "fig5-combined" => {
            let mut spec = cfg
                .workload
                .clone()
                .ok_or_else(|| Error::config("workload", "required for this experiment"))?;
            spec.seed = seeds.workload;
            let wl = gen_workload(&spec, db, catalog)?;
            let (model, epochs) = train_model(cfg, &seeds, catalog, wl.train(), wl.test())?;
            let mut baseline = Vec::new();
            let floor = cfg.training.floor;
            push_split(
                &mut baseline,
                0,
                "train",
                &baseline_errors(catalog, wl.train_queries(), wl.train(), floor)?,
            );
            push_split(
                &mut baseline,
                0,
                "test",
                &baseline_errors(catalog, wl.test_queries(), wl.test(), floor)?,
            );
            let x0 = build_x0(catalog);
            let report = MetricsReport {
                experiment: cfg.name.clone(),
                epochs,
                baseline,
                scatter: scatter_pairs(&model, &x0, wl.test())?,
                planner: Vec::new(),
            };
            Ok(ExperimentOutput {
                report,
                model: Some(model),
            })
        }
        "planner-eval" => run_planner_eval(cfg, &seeds, db, catalog),
        other => Err(Error::config(
            "name",
            format!(
                "unknown experiment `{other}`; expected one of {}",
                EXPERIMENTS.join(", ")
            ),
        )),
    }
}

/// Scores a trained `model` on the workload of `cfg` without training:
/// epoch-0 metrics for the model and the baseline plus test scatters.
pub fn evaluate_model(
    cfg: &ExperimentConfig,
    db: &Database,
    catalog: &Catalog,
    model: &RepresentationModel,
) -> Result<MetricsReport> {
    let seeds = DerivedSeeds::from_master(cfg.seed);
    let mut spec = cfg
        .workload
        .clone()
        .ok_or_else(|| Error::config("workload", "required for evaluation"))?;
    spec.seed = seeds.workload;
    let wl = gen_workload(&spec, db, catalog)?;
    let x0 = build_x0(catalog);
    let floor = cfg.training.floor;
    let mut report = MetricsReport {
        experiment: cfg.name.clone(),
        ..Default::default()
    };
    push_split(
        &mut report.epochs,
        0,
        "train",
        &evaluate(model, &x0, wl.train(), floor)?,
    );
    push_split(&mut report.epochs, 0, "test", &evaluate(model, &x0, wl.test(), floor)?);
    push_split(
        &mut report.baseline,
        0,
        "train",
        &baseline_errors(catalog, wl.train_queries(), wl.train(), floor)?,
    );
    push_split(
        &mut report.baseline,
        0,
        "test",
        &baseline_errors(catalog, wl.test_queries(), wl.test(), floor)?,
    );
    report.scatter = scatter_pairs(model, &x0, wl.test())?;
    Ok(report)
}

/// Builds the database described by `cfg` (CSV paths relative to `base`) and
/// runs the experiment.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<ExperimentOutput> {
    let (db, catalog) = cfg.database.build(base)?;
    run_experiment_on(cfg, &db, &catalog)
}

/// Runs the experiment and writes its report, a manifest of the full
/// configuration and, when a model was trained, `model.bin` into `out`.
pub fn run_and_write(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<MetricsReport> {
    let result = run_experiment(cfg, base)?;
    result.report.write_to(out)?;
    let manifest = out.join("manifest.toml");
    std::fs::write(&manifest, cfg.to_toml_string()?).map_err(|e| Error::io(&manifest, e))?;
    if let Some(m) = &result.model {
        m.save(out.join("model.bin"))?;
    }
    Ok(result.report)
}

fn run_planner_eval(
    cfg: &ExperimentConfig,
    seeds: &DerivedSeeds,
    db: &Database,
    catalog: &Catalog,
) -> Result<ExperimentOutput> {
    let spec = cfg.planner.clone().unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.queries);
    let queries = gen_plan_queries(
        db,
        catalog,
        spec.queries,
        spec.relations,
        spec.selection_probability,
        &mut rng,
    )?;

    let mut report = MetricsReport {
        experiment: cfg.name.clone(),
        ..Default::default()
    };
    let mut model = None;
    if spec.reward_modes.contains(&RewardMode::LearnedCardinality) {
        // Train the representation on random plans of other random queries.
        let train_qs = gen_plan_queries(
            db,
            catalog,
            spec.model_queries,
            spec.relations,
            spec.selection_probability,
            &mut rng,
        )?;
        let mut examples = Vec::with_capacity(train_qs.len());
        for q in &train_qs {
            examples.push(SequenceExample::build(db, catalog, q, random_plan(q, &mut rng)?)?);
        }
        let split = (examples.len() as f64 * 0.8).round() as usize;
        let (m, epochs) = train_model(cfg, seeds, catalog, &examples[..split], &examples[split..])?;
        report.epochs = epochs;
        let floor = cfg.training.floor;
        push_split(
            &mut report.baseline,
            0,
            "train",
            &baseline_errors(catalog, &train_qs[..split], &examples[..split], floor)?,
        );
        push_split(
            &mut report.baseline,
            0,
            "test",
            &baseline_errors(catalog, &train_qs[split..], &examples[split..], floor)?,
        );
        model = Some(m);
    }

    for (qi, q) in queries.iter().enumerate() {
        let optimum = exhaustive_optimum(db, catalog, q, RewardMode::TrueCardinality, true)?;
        let greedy = greedy_baseline_plan(db, catalog, q)?;
        let greedy_actions: Vec<_> = greedy.actions.iter().map(|a| a.action.clone()).collect();
        let baseline_cost = plan_cost(db, catalog, q, &greedy_actions, RewardMode::TrueCardinality, true)?;
        for &mode in &spec.reward_modes {
            let m = if mode == RewardMode::LearnedCardinality {
                model.as_ref()
            } else {
                None
            };
            let env = PlanningEnv::new(db, catalog, q, m, mode, cfg.agent.log_rewards)?;
            // Distinct but reproducible exploration per query and mode.
            let agent = AgentConfig {
                seed: seeds.agent ^ ((qi as u64) << 8) ^ mode_code(mode),
                reward_mode: mode,
                ..cfg.agent.clone()
            };
            let mut qrng = ChaCha8Rng::seed_from_u64(agent.seed);
            let qf = QFunction::new(agent.q_mode, &env, agent.q_hidden, &mut qrng)?;
            let qf = run_training(&env, qf, &agent, None)?;
            let plan = best_plan(&env, &qf, cfg.agent.log_rewards)?;
            let actions: Vec<_> = plan.actions.iter().map(|a| a.action.clone()).collect();
            report.planner.push(PlannerRow {
                query_id: qi,
                reward_mode: mode,
                agent_cost: plan_cost(db, catalog, q, &actions, RewardMode::TrueCardinality, true)?,
                baseline_cost,
                optimum_cost: optimum.cost,
            });
        }
    }
    Ok(ExperimentOutput { report, model })
}

fn mode_code(mode: RewardMode) -> u64 {
    match mode {
        RewardMode::LearnedCardinality => 1,
        RewardMode::TrueCardinality => 2,
        RewardMode::BaselineCost => 3,
    }
}
