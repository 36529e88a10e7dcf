use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rlqo::catalog::Catalog;
use rlqo::harness::{
    evaluate_model, gen_workload, run_and_write, DatabaseConfig, DerivedSeeds, ExperimentConfig, MetricsReport,
    RelationSource, EXPERIMENTS,
};
use rlqo::model::RepresentationModel;
use rlqo::planner::{
    best_plan, exhaustive_optimum, plan_cost, render_plan, run_training, PlanningEnv, QFunction, RewardMode,
    MAX_EXHAUSTIVE_RELATIONS,
};
use rlqo::relation::{save_csv, Database, QuerySpec};

#[derive(Parser)]
#[command(
    name = "rlqo",
    version,
    about = "Learned cardinality representations and a Q-learning join planner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Built-in experiment: fig4-selection, fig5-combined or planner-eval.
    #[arg(long)]
    experiment: Option<String>,
    /// Experiment configuration file (TOML). Takes precedence over the
    /// built-in settings of `--experiment`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram buckets per attribute.
    #[arg(long)]
    buckets: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the experiment's relations as CSV files plus a database.toml.
    GenData {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate and label the experiment's workload (workload.jsonl).
    GenWorkload {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment and write its reports, manifest and model.
    Train {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        epochs: Option<usize>,
        /// SGD learning rate [default: 0.01].
        #[arg(long)]
        lr: Option<f64>,
        /// Hidden units of the initial-state network [default: 50].
        #[arg(long)]
        hidden: Option<usize>,
        /// Restrict the planner evaluation to one reward mode.
        #[arg(long)]
        reward_mode: Option<RewardMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved model on the experiment's workload.
    Eval {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a Q-learning agent on one query and print its plan.
    Plan {
        /// Query file (JSON or TOML).
        query: PathBuf,
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "true-cardinality")]
        reward_mode: RewardMode,
        /// Model for learned-cardinality rewards.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Write the episode log (JSON lines) here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Summarise one or more run directories written by `train`.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn load_config(source: &Source) -> Result<(ExperimentConfig, PathBuf)> {
    let (mut cfg, base) = match (&source.config, &source.experiment) {
        (Some(path), name) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = match ExperimentConfig::from_toml_str(&text) {
                Ok(mut cfg) => {
                    if let Some(n) = name {
                        cfg.name = n.clone();
                    }
                    cfg
                }
                // a bare database description, e.g. from gen-data
                Err(e) => match DatabaseConfig::from_toml_file(path) {
                    Ok((database, _)) => {
                        let preset = name.as_deref().unwrap_or("planner-eval");
                        ExperimentConfig {
                            database,
                            ..ExperimentConfig::preset(preset)?
                        }
                    }
                    Err(_) => return Err(e.into()),
                },
            };
            (cfg, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        (None, Some(name)) => (ExperimentConfig::preset(name)?, PathBuf::new()),
        (None, None) => bail!("give --experiment <{}> or --config <file>", EXPERIMENTS.join("|")),
    };
    if let Some(s) = source.seed {
        cfg.seed = s;
    }
    if let Some(b) = source.buckets {
        cfg.database.buckets = b;
    }
    Ok((cfg, base))
}

fn build(cfg: &ExperimentConfig, base: &Path) -> Result<(Database, Catalog)> {
    Ok(cfg.database.build(base)?)
}

fn gen_data(source: &Source, out: &Path) -> Result<()> {
    let (cfg, base) = load_config(source)?;
    let db = cfg.database.build_database(&base)?;
    fs::create_dir_all(out)?;
    let mut relations = Vec::new();
    for rel in db.relations() {
        let file = format!("{}.csv", rel.name());
        save_csv(rel, out.join(&file))?;
        relations.push(RelationSource {
            name: rel.name().to_string(),
            csv: Some(file.into()),
            attributes: None,
            rows: None,
            seed: None,
            columns: Vec::new(),
        });
        println!("{}: {} rows", rel.name(), rel.row_count());
    }
    let described = DatabaseConfig {
        relations,
        ..cfg.database.clone()
    };
    fs::write(out.join("database.toml"), described.to_toml_string()?)?;
    Ok(())
}

fn gen_workload_cmd(source: &Source, out: &Path) -> Result<()> {
    let (cfg, base) = load_config(source)?;
    let (db, catalog) = build(&cfg, &base)?;
    let Some(mut spec) = cfg.workload.clone() else {
        bail!("experiment `{}` has no workload", cfg.name);
    };
    spec.seed = DerivedSeeds::from_master(cfg.seed).workload;
    let wl = gen_workload(&spec, &db, &catalog)?;
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(fs::File::create(out.join("workload.jsonl"))?);
    for (i, (q, ex)) in wl.queries.iter().zip(&wl.examples).enumerate() {
        let split = if i < wl.train_len { "train" } else { "test" };
        let line = serde_json::json!({
            "id": i,
            "split": split,
            "query": q,
            "actions": ex.actions,
            "labels": ex.labels,
        });
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    println!(
        "{} train + {} test queries",
        wl.train_len,
        wl.queries.len() - wl.train_len
    );
    Ok(())
}

fn print_summary(report: &MetricsReport) {
    let splits: BTreeSet<&str> = report.epochs.iter().map(|m| m.split.as_str()).collect();
    for split in splits {
        let model = report.last(split).expect("split present");
        match report.baseline_of(split) {
            Some(b) => println!(
                "{split:>9}: model median {:.4} (epoch {}), baseline median {:.4}, ratio {:.3}",
                model.median_rel_err,
                model.epoch,
                b.median_rel_err,
                model.median_rel_err / b.median_rel_err
            ),
            None => println!(
                "{split:>9}: model median {:.4} (epoch {})",
                model.median_rel_err, model.epoch
            ),
        }
    }
    for (t, pairs) in report.scatter.iter().enumerate() {
        let (truth, pred): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        println!(
            "h{} spearman {:.4} over {} test queries",
            t + 1,
            rlqo::metrics::spearman(&truth, &pred),
            pairs.len()
        );
    }
    let mut modes: Vec<RewardMode> = Vec::new();
    for r in &report.planner {
        if !modes.contains(&r.reward_mode) {
            modes.push(r.reward_mode);
        }
    }
    for mode in modes {
        let rows: Vec<_> = report.planner.iter().filter(|r| r.reward_mode == mode).collect();
        let within = |c: f64, o: f64| c <= 1.1 * o + 1e-9;
        let agent = rows.iter().filter(|r| within(r.agent_cost, r.optimum_cost)).count();
        let greedy = rows.iter().filter(|r| within(r.baseline_cost, r.optimum_cost)).count();
        println!(
            "planner {mode:?}: agent within 10% of optimum on {agent}/{n}, baseline-greedy on {greedy}/{n}",
            n = rows.len()
        );
    }
}

fn train(
    source: &Source,
    epochs: Option<usize>,
    lr: Option<f64>,
    hidden: Option<usize>,
    reward_mode: Option<RewardMode>,
    out: &Path,
) -> Result<()> {
    if source.experiment.is_none() && source.config.is_none() {
        bail!("train needs --experiment <{}>", EXPERIMENTS.join("|"));
    }
    let (mut cfg, base) = load_config(source)?;
    if let Some(e) = epochs {
        cfg.training.epochs = e;
    }
    if let Some(lr) = lr {
        cfg.training.lr = lr;
    }
    if let Some(h) = hidden {
        cfg.model.init_hidden = h;
    }
    if let Some(mode) = reward_mode {
        cfg.agent.reward_mode = mode;
        cfg.planner.get_or_insert_with(Default::default).reward_modes = vec![mode];
    }
    let report = run_and_write(&cfg, &base, out)?;
    print_summary(&report);
    println!("reports written to {}", out.display());
    Ok(())
}

fn eval(source: &Source, model: &Path, out: &Path) -> Result<()> {
    let (cfg, base) = load_config(source)?;
    let (db, catalog) = build(&cfg, &base)?;
    let model = RepresentationModel::load(model)?;
    let report = evaluate_model(&cfg, &db, &catalog, &model)?;
    report.write_to(out)?;
    print_summary(&report);
    Ok(())
}

fn read_query(path: &Path) -> Result<QuerySpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let q = if path.extension().is_some_and(|e| e == "toml") {
        QuerySpec::from_toml_str(&text)?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(q)
}

fn plan(
    query: &Path,
    source: &Source,
    reward_mode: RewardMode,
    model: Option<&Path>,
    episodes: Option<usize>,
    log: Option<&Path>,
) -> Result<()> {
    let (cfg, base) = load_config(source)?;
    let (db, catalog) = build(&cfg, &base)?;
    let q = read_query(query)?;
    let model = model.map(RepresentationModel::load).transpose()?;
    let env = PlanningEnv::new(&db, &catalog, &q, model.as_ref(), reward_mode, cfg.agent.log_rewards)?;
    let mut agent = cfg.agent.clone();
    agent.reward_mode = reward_mode;
    agent.seed = DerivedSeeds::from_master(cfg.seed).agent;
    if let Some(e) = episodes {
        agent.episodes = e;
    }
    let qf = QFunction::new(
        agent.q_mode,
        &env,
        agent.q_hidden,
        &mut ChaCha8Rng::seed_from_u64(agent.seed),
    )?;
    let qf = match log {
        Some(path) => {
            let mut w = BufWriter::new(fs::File::create(path)?);
            let qf = run_training(&env, qf, &agent, Some(&mut w))?;
            w.flush()?;
            qf
        }
        None => run_training(&env, qf, &agent, None)?,
    };
    let best = best_plan(&env, &qf, cfg.agent.log_rewards)?;
    let actions: Vec<_> = best.actions.iter().map(|a| a.action.clone()).collect();
    print!("{}", render_plan(&q, &actions)?);
    let cost = plan_cost(&db, &catalog, &q, &actions, RewardMode::TrueCardinality, true)?;
    println!("cost (sum of log10(1 + true cardinality)): {cost:.6}");
    if q.relations.len() <= MAX_EXHAUSTIVE_RELATIONS {
        let opt = exhaustive_optimum(&db, &catalog, &q, RewardMode::TrueCardinality, true)?;
        println!("optimum cost: {:.6}", opt.cost);
    }
    Ok(())
}

fn compare(runs: &[PathBuf]) -> Result<()> {
    for dir in runs {
        let name = fs::read_to_string(dir.join("manifest.toml"))
            .ok()
            .and_then(|t| ExperimentConfig::from_toml_str(&t).ok())
            .map(|c| c.name)
            .unwrap_or_else(|| "?".into());
        let report = MetricsReport::read_from(dir, &name)?;
        println!("== {} ({name})", dir.display());
        print_summary(&report);
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenData { source, out } => gen_data(source, out),
        Command::GenWorkload { source, out } => gen_workload_cmd(source, out),
        Command::Train {
            source,
            epochs,
            lr,
            hidden,
            reward_mode,
            out,
        } => train(source, *epochs, *lr, *hidden, *reward_mode, out),
        Command::Eval { source, model, out } => eval(source, model, out),
        Command::Plan {
            query,
            source,
            reward_mode,
            model,
            episodes,
            log,
        } => plan(query, source, *reward_mode, model.as_deref(), *episodes, log.as_deref()),
        Command::Compare { runs } => compare(runs),
    }
}
