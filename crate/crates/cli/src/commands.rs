use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use neurodeploy::bench::{overfit_model, run_grid, subset_offer_sets, summarize, GridSpec, PLAIN};
use neurodeploy::dataset::{generate, split, Backend, Curation, Dataset, Selection};
use neurodeploy::gnn::{evaluate, graphs_for, prepare, train, Aggregation, ModelConfig, RgcnModel, TrainConfig};
use neurodeploy::hetgraph::FeatureStats;
use neurodeploy::refine::{neuro_solve, predict, to_soft, SoftOptions};
use neurodeploy::smt::{encode, solve, SolveStatus, SolverConfig, SOLVER_ENV};
use neurodeploy::{
    case_study, catalog_cloud20, catalog_droplet27, synthetic_catalog, Application, DeploymentProblem, Error,
    OracleCaps, Price, VmOffer,
};

use crate::config::Config;
use crate::{AggArg, BackendArg, Cli, Command, Outcome, ProblemArgs, Usage};

/// Default budget per solve: 40 minutes.
const DEFAULT_DEADLINE: f64 = 2400.0;
const DEFAULT_K: usize = 7;
const DEFAULT_TEST_RATIO: f64 = 0.2;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

/// Settings shared by every subcommand after merging config and flags.
struct Run<'a> {
    config: &'a Config,
    seed: u64,
    jobs: usize,
    deadline: Duration,
    solver: SolverConfig,
}

impl<'a> Run<'a> {
    fn new(cli: &Cli, config: &'a Config) -> Result<Run<'a>> {
        let deadline = cli.deadline.or(config.solver.deadline).unwrap_or(DEFAULT_DEADLINE);
        if !(deadline.is_finite() && deadline > 0.0) {
            return Err(usage(format!("deadline must be positive, got {deadline}")));
        }
        let mut solver = SolverConfig::default();
        if let Some(p) = &config.solver.program {
            solver.program = p.clone();
        }
        solver.args = config.solver.args.clone();
        if std::env::var(SOLVER_ENV).is_ok_and(|v| !v.trim().is_empty()) {
            solver = SolverConfig::from_env();
        }
        let jobs = cli.jobs.or(config.bench.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        Ok(Run {
            config,
            seed: cli.seed.or(config.seed).unwrap_or(0),
            jobs,
            deadline: Duration::from_secs_f64(deadline),
            solver,
        })
    }
}

pub fn run(cli: &Cli, config: &Config) -> Result<Outcome> {
    let run = Run::new(cli, config)?;
    // Only the first call can configure the global pool; later calls are no-ops.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(run.jobs).build_global();
    match &cli.command {
        Command::GenDataset {
            problem,
            k,
            count,
            limit,
            backend,
            out,
        } => gen_dataset(&run, problem, *k, *count, *limit, *backend, out),
        Command::Curate { dataset, keep, out } => curate(dataset, keep, out),
        Command::Train {
            dataset,
            epochs,
            batch_size,
            gamma,
            learning_rate,
            agg,
            test_ratio,
            history,
            out,
        } => {
            let mut tc = train_config(&run);
            tc.epochs = epochs.unwrap_or(tc.epochs);
            tc.batch_size = batch_size.unwrap_or(tc.batch_size);
            tc.gamma = gamma.unwrap_or(tc.gamma);
            tc.learning_rate = learning_rate.unwrap_or(tc.learning_rate);
            train_cmd(&run, dataset, tc, *agg, *test_ratio, history.as_deref(), out)
        }
        Command::Predict { problem, model, out } => predict_cmd(problem, model, out.as_deref()),
        Command::Solve { problem, out, script } => solve_cmd(&run, problem, out.as_deref(), script.as_deref()),
        Command::NeuroSolve {
            problem,
            model,
            no_negatives,
            out,
        } => neuro_solve_cmd(&run, problem, model, *no_negatives, out.as_deref()),
        Command::Eval { dataset, model } => eval_cmd(dataset, model),
        Command::Bench {
            problem,
            offers,
            vms,
            subsets,
            subset_size,
            model,
            overfit,
            save_overfit,
            no_negatives,
            out,
        } => {
            let app = load_application(problem, *vms)?;
            let sets = bench_sets(&run, offers, *subsets, *subset_size)?;
            let mut models = model
                .iter()
                .map(|p| Ok((file_stem(p), load_model(p)?)))
                .collect::<Result<Vec<_>>>()?;
            if *overfit {
                let m = overfit_model(&app, &sets, run.deadline, &run.solver, run.seed)
                    .context("training the overfit model")?;
                if let Some(path) = save_overfit {
                    m.save(path)?;
                }
                models.push(("overfit".to_string(), m));
            }
            let negatives = !no_negatives && run.config.bench.negatives.unwrap_or(true);
            bench_cmd(&run, &app, &models, &sets, negatives, out)
        }
    }
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_application(spec: &str, vms: Option<usize>) -> Result<Application> {
    let path = Path::new(spec);
    let mut app = if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{spec}: {e}")))?
    } else {
        case_study(spec).map_err(|e| usage(format!("--problem {spec}: {e}")))?
    };
    if let Some(m) = vms {
        app.vm_budget = m;
    }
    Ok(app)
}

fn load_offers(spec: &str, seed: u64) -> Result<Vec<VmOffer>> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        return serde_json::from_str(&text).map_err(|e| usage(format!("{spec}: {e}")));
    }
    match spec {
        "cloud20" => Ok(catalog_cloud20()),
        "droplet27" => Ok(catalog_droplet27()),
        _ => {
            let parts: Vec<&str> = spec
                .strip_prefix("synthetic:")
                .map(|r| r.split(':').collect())
                .unwrap_or_default();
            let n = parts.first().and_then(|n| n.parse::<usize>().ok()).filter(|&n| n > 0);
            let s = match parts.get(1) {
                Some(s) => s.parse::<u64>().ok(),
                None => Some(seed),
            };
            match (n, s, parts.len()) {
                (Some(n), Some(s), 1..=2) => Ok(synthetic_catalog(n, s)),
                _ => Err(usage(format!(
                    "--offers {spec}: expected cloud20, droplet27, synthetic:<n>[:<seed>] or a JSON file"
                ))),
            }
        }
    }
}

fn load_problem(args: &ProblemArgs, seed: u64) -> Result<DeploymentProblem> {
    let app = load_application(&args.problem, args.vms)?;
    let offers = load_offers(&args.offers, seed)?;
    DeploymentProblem::new(app, offers).map_err(|e| usage(e.to_string()))
}

fn load_model(path: &Path) -> Result<RgcnModel> {
    RgcnModel::load(path).map_err(|e| match e {
        Error::Io { .. } => usage(e.to_string()),
        other => anyhow!(other),
    })
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read(path).map_err(|e| match e {
        Error::Io { .. } => usage(e.to_string()),
        other => anyhow!(other),
    })
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn status_outcome(status: SolveStatus, diagnostics: &str) -> Result<Outcome> {
    match status {
        SolveStatus::Sat => Ok(Outcome::Success),
        SolveStatus::Unsat => Ok(Outcome::Unsat),
        SolveStatus::Timeout => Ok(Outcome::Timeout),
        SolveStatus::Error => Err(anyhow!("solver error: {diagnostics}")),
    }
}

fn gen_dataset(
    run: &Run,
    args: &ProblemArgs,
    k: Option<usize>,
    count: Option<usize>,
    limit: Option<usize>,
    backend: Option<BackendArg>,
    out: &Path,
) -> Result<Outcome> {
    let app = load_application(&args.problem, args.vms)?;
    let catalog = load_offers(&args.offers, run.seed)?;
    let k = k.or(run.config.dataset.k).unwrap_or(DEFAULT_K);
    let selection = match (count.or(run.config.dataset.count), limit) {
        (Some(count), _) => Selection::Random { count, seed: run.seed },
        (None, limit) => Selection::First { limit },
    };
    let backend = match backend {
        Some(b) => b,
        None => match run.config.dataset.backend.as_deref() {
            None | Some("smt") => BackendArg::Smt,
            Some("oracle") => BackendArg::Oracle,
            Some(other) => return Err(usage(format!("unknown dataset backend {other}"))),
        },
    };
    let backend = match backend {
        BackendArg::Smt => Backend::Smt {
            config: run.solver.clone(),
            deadline: run.deadline,
        },
        // Sized to admit the instance: the caller opted into exhaustive search.
        BackendArg::Oracle => Backend::Oracle(OracleCaps {
            max_components: app.components.len(),
            max_vms: app.vm_budget,
            max_offers: k,
        }),
    };
    let data = generate(&app, &catalog, k, selection, &backend).map_err(|e| match e {
        Error::InvalidArgument(_) | Error::InvalidProblem(_) => usage(e.to_string()),
        other => anyhow!(other),
    })?;
    data.write(out)?;
    print_json(&serde_json::json!({
        "samples": data.samples.len(),
        "subsets": data.manifest.n_subsets,
        "infeasible": data.manifest.n_infeasible,
        "labels": data.histogram().n_labels(),
        "gini": data.histogram().gini(),
        "out": out,
    }))?;
    Ok(Outcome::Success)
}

fn curate(dataset: &Path, keep: &[String], out: &Path) -> Result<Outcome> {
    let data = load_dataset(dataset)?;
    let mode = if keep.is_empty() {
        Curation::Auto
    } else {
        let prices = keep
            .iter()
            .map(|p| p.trim().parse::<Price>().map_err(|e| usage(format!("--keep {p}: {e}"))))
            .collect::<Result<BTreeSet<_>>>()?;
        Curation::Manual(prices)
    };
    let (curated, report) = data.curated(&mode)?;
    curated.write(out)?;
    print_json(&report)?;
    Ok(Outcome::Success)
}

fn model_config(run: &Run, slots: usize, agg: Option<AggArg>) -> ModelConfig {
    let c = &run.config.model;
    let mut mc = ModelConfig::new(slots);
    mc.input_dim = c.input_dim.unwrap_or(mc.input_dim);
    mc.layer_dims = c.layer_dims.clone().unwrap_or(mc.layer_dims);
    mc.predictor_hidden = c.predictor_hidden.or(mc.predictor_hidden);
    mc.classes = c.classes.unwrap_or(mc.classes);
    mc.relation_mode = c.relation_mode.unwrap_or(mc.relation_mode);
    mc.aggregation = match agg {
        Some(AggArg::Sum) => Aggregation::Sum,
        Some(AggArg::Mean) => Aggregation::Mean,
        None => c.aggregation.unwrap_or(mc.aggregation),
    };
    mc
}

fn train_config(run: &Run) -> TrainConfig {
    let c = &run.config.train;
    let d = TrainConfig::default();
    TrainConfig {
        epochs: c.epochs.unwrap_or(d.epochs),
        batch_size: c.batch_size.unwrap_or(d.batch_size),
        learning_rate: c.learning_rate.unwrap_or(d.learning_rate),
        gamma: c.gamma.unwrap_or(d.gamma),
        class_weights: c.class_weights.unwrap_or(d.class_weights),
        seed: run.seed,
        ..d
    }
}

fn train_cmd(
    run: &Run,
    dataset: &Path,
    tc: TrainConfig,
    agg: Option<AggArg>,
    test_ratio: Option<f64>,
    history: Option<&Path>,
    out: &Path,
) -> Result<Outcome> {
    let data = load_dataset(dataset)?;
    let ratio = test_ratio
        .or(run.config.dataset.test_ratio)
        .unwrap_or(DEFAULT_TEST_RATIO);
    if !(0.0..1.0).contains(&ratio) {
        return Err(usage(format!("test ratio must be in [0, 1), got {ratio}")));
    }
    if tc.epochs == 0 || tc.batch_size == 0 {
        return Err(usage("epochs and batch size must be positive"));
    }
    let (train_set, test_set) = split(&data.samples, ratio, run.seed);
    if train_set.is_empty() {
        return Err(usage("no training samples"));
    }
    let train_graphs = graphs_for(&data, &train_set)?;
    let test_graphs = graphs_for(&data, &test_set)?;
    let stats = FeatureStats::fit(&train_graphs)?;
    let config = model_config(run, data.manifest.application.vm_budget, agg);
    let mut model = RgcnModel::new(config, run.seed).map_err(|e| usage(e.to_string()))?;
    model.stats = Some(stats.clone());
    let train_inputs = prepare(&model, &train_graphs, &stats)?;
    let test_inputs = prepare(&model, &test_graphs, &stats)?;
    let epochs = train(&mut model, &train_inputs, &tc)?;
    model.save(out)?;
    if let Some(path) = history {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        for e in &epochs {
            w.serialize(e)?;
        }
        w.flush()?;
    }
    let test = if test_inputs.is_empty() {
        None
    } else {
        Some(evaluate(&model, &test_inputs)?)
    };
    print_json(&serde_json::json!({
        "train_samples": train_set.len(),
        "test_samples": test_set.len(),
        "final_loss": epochs.last().map(|e| e.loss),
        "train_accuracy": epochs.last().map(|e| e.accuracy),
        "test": test,
        "out": out,
    }))?;
    Ok(Outcome::Success)
}

fn soft_options(negatives: bool) -> SoftOptions {
    SoftOptions { negatives }
}

fn predict_cmd(args: &ProblemArgs, model_path: &Path, out: Option<&Path>) -> Result<Outcome> {
    let problem = load_problem(args, 0)?;
    let model = load_model(model_path)?;
    let pred = predict(&problem, &model).map_err(|e| match e {
        Error::Dimension(_) => usage(e.to_string()),
        other => anyhow!(other),
    })?;
    let (soft, report) = to_soft(&pred, &problem, SoftOptions::default())?;
    let script = encode(&problem, &soft)?;
    let mut stdout = std::io::stdout().lock();
    for line in script.text.lines().filter(|l| l.starts_with("(assert-soft")) {
        writeln!(stdout, "{line}")?;
    }
    eprintln!(
        "{} soft constraints, {} VM offer constraints, unpredicted VMs {:?}",
        report.n_soft, report.n_price_soft, report.unpredicted_vms
    );
    if let Some(path) = out {
        write_json(path, &pred)?;
    }
    Ok(Outcome::Success)
}

fn solve_cmd(run: &Run, args: &ProblemArgs, out: Option<&Path>, script_out: Option<&Path>) -> Result<Outcome> {
    let problem = load_problem(args, run.seed)?;
    let script = encode(&problem, &[])?;
    if let Some(path) = script_out {
        std::fs::write(path, &script.text).with_context(|| format!("writing {}", path.display()))?;
    }
    let outcome = solve(&script, run.deadline, &run.solver)?;
    report_solve(&outcome.status, outcome.objective_price, outcome.wall_time);
    if let (Some(path), Some(sol)) = (out, &outcome.solution) {
        write_json(path, sol)?;
    }
    status_outcome(outcome.status, &outcome.diagnostics)
}

fn report_solve(status: &SolveStatus, price: Option<Price>, wall_time: f64) {
    match price {
        Some(p) => println!("{status} {p} ({wall_time:.3}s)"),
        None => println!("{status} ({wall_time:.3}s)"),
    }
}

fn neuro_solve_cmd(
    run: &Run,
    args: &ProblemArgs,
    model_path: &Path,
    no_negatives: bool,
    out: Option<&Path>,
) -> Result<Outcome> {
    let problem = load_problem(args, run.seed)?;
    let model = load_model(model_path)?;
    let (outcome, report) = neuro_solve(&problem, &model, run.deadline, &run.solver, soft_options(!no_negatives))
        .map_err(|e| match e {
            Error::Dimension(_) => usage(e.to_string()),
            other => anyhow!(other),
        })?;
    report_solve(&outcome.status, outcome.objective_price, outcome.wall_time);
    eprintln!(
        "{} soft constraints, prepare {:.3}s, {} offer conflicts resolved",
        report.soft.n_soft,
        report.prepare_time,
        report.soft.conflicts_resolved.len()
    );
    if let (Some(path), Some(sol)) = (out, &outcome.solution) {
        write_json(path, sol)?;
    }
    status_outcome(outcome.status, &outcome.diagnostics)
}

fn eval_cmd(dataset: &Path, model_path: &Path) -> Result<Outcome> {
    let data = load_dataset(dataset)?;
    let model = load_model(model_path)?;
    let graphs = graphs_for(&data, &data.samples)?;
    let stats = match &model.stats {
        Some(s) => s.clone(),
        None => FeatureStats::fit(&graphs)?,
    };
    let inputs = prepare(&model, &graphs, &stats).map_err(|e| match e {
        Error::Dimension(_) => usage(e.to_string()),
        other => anyhow!(other),
    })?;
    print_json(&evaluate(&model, &inputs)?)?;
    Ok(Outcome::Success)
}

fn bench_sets(
    run: &Run,
    offers: &[String],
    subsets: Option<usize>,
    subset_size: usize,
) -> Result<Vec<(String, Vec<VmOffer>)>> {
    match subsets {
        Some(count) => {
            let [catalog] = offers else {
                return Err(usage("--subsets draws from exactly one --offers catalog"));
            };
            let catalog = load_offers(catalog, run.seed)?;
            subset_offer_sets(&catalog, count, subset_size, run.seed).map_err(|e| usage(e.to_string()))
        }
        None => offers
            .iter()
            .map(|spec| {
                let name = if Path::new(spec).is_file() {
                    file_stem(Path::new(spec))
                } else {
                    spec.clone()
                };
                Ok((name, load_offers(spec, run.seed)?))
            })
            .collect(),
    }
}

/// One grid row: the cell plus its offer set's plain baseline. The csv
/// writer cannot flatten, hence the copy of the cell fields.
#[derive(Serialize)]
struct GridRow<'a> {
    offer_set: &'a str,
    model: &'a str,
    status: SolveStatus,
    wall_time: f64,
    price: String,
    n_soft: usize,
    valid: bool,
    baseline_status: Option<SolveStatus>,
    baseline_wall_time: Option<f64>,
    baseline_price: String,
}

fn price_text(p: Option<Price>) -> String {
    p.map(|p| p.to_string()).unwrap_or_default()
}

fn bench_cmd(
    run: &Run,
    app: &Application,
    models: &[(String, RgcnModel)],
    sets: &[(String, Vec<VmOffer>)],
    negatives: bool,
    out: &Path,
) -> Result<Outcome> {
    let spec = GridSpec {
        app,
        models,
        offer_sets: sets,
        deadline: run.deadline,
        solver: &run.solver,
        soft: soft_options(negatives),
        jobs: run.jobs,
    };
    let cells = run_grid(&spec).map_err(|e| match e {
        Error::InvalidProblem(_) | Error::Dimension(_) => usage(e.to_string()),
        other => anyhow!(other),
    })?;
    let mut w = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    for cell in &cells {
        let base = cells.iter().find(|b| b.model == PLAIN && b.offer_set == cell.offer_set);
        w.serialize(GridRow {
            offer_set: &cell.offer_set,
            model: &cell.model,
            status: cell.status,
            wall_time: cell.wall_time,
            price: price_text(cell.price),
            n_soft: cell.n_soft,
            valid: cell.valid,
            baseline_status: base.map(|b| b.status),
            baseline_wall_time: base.map(|b| b.wall_time),
            baseline_price: price_text(base.and_then(|b| b.price)),
        })?;
    }
    w.flush()?;
    print_json(&summarize(&cells))?;
    Ok(Outcome::Success)
}
