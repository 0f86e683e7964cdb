//! The (models x offer sets) experiment grid behind the bench subcommand.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gnn::{prepare, train, ClassWeights, ModelConfig, RgcnModel, TrainConfig};
use crate::hetgraph::{FeatureStats, HetGraph};
use crate::model::{validate, Application, DeploymentProblem, VmOffer};
use crate::price::Price;
use crate::refine::{neuro_solve, SoftOptions};
use crate::smt::{encode, solve, SolveStatus, SolverConfig};

/// Name used for the cell solved without predictions.
pub const PLAIN: &str = "plain";

/// One solve in the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub offer_set: String,
    pub model: String,
    pub status: SolveStatus,
    /// Solver wall time in seconds.
    pub wall_time: f64,
    #[serde(serialize_with = "price_or_empty")]
    pub price: Option<Price>,
    pub n_soft: usize,
    /// Whether a sat solution passed validation (always true when sat).
    pub valid: bool,
}

fn price_or_empty<S: serde::Serializer>(p: &Option<Price>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match p {
        Some(p) => s.collect_str(p),
        None => s.serialize_str(""),
    }
}

pub struct GridSpec<'a> {
    pub app: &'a Application,
    pub models: &'a [(String, RgcnModel)],
    pub offer_sets: &'a [(String, Vec<VmOffer>)],
    pub deadline: Duration,
    pub solver: &'a SolverConfig,
    pub soft: SoftOptions,
    /// Cells solved concurrently.
    pub jobs: usize,
}

fn run_cell(spec: &GridSpec, set: usize, model: Option<usize>) -> Result<GridCell> {
    let (set_name, offers) = &spec.offer_sets[set];
    let problem = DeploymentProblem::new(spec.app.clone(), offers.clone())?;
    let (outcome, n_soft, name) = match model {
        None => {
            let script = encode(&problem, &[])?;
            (solve(&script, spec.deadline, spec.solver)?, 0, PLAIN.to_string())
        }
        Some(mi) => {
            let (name, m) = &spec.models[mi];
            let (outcome, report) = neuro_solve(&problem, m, spec.deadline, spec.solver, spec.soft)?;
            (outcome, report.soft.n_soft, name.clone())
        }
    };
    let valid = match &outcome.solution {
        Some(sol) => validate(&problem, sol)?.is_empty(),
        None => false,
    };
    Ok(GridCell {
        offer_set: set_name.clone(),
        model: name,
        status: outcome.status,
        wall_time: outcome.wall_time,
        price: outcome.objective_price,
        n_soft,
        valid,
    })
}

/// Solves every offer set without predictions and then with each model.
/// Cells come back grouped by offer set, baseline first, whatever the
/// level of parallelism.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<GridCell>> {
    let cells: Vec<(usize, Option<usize>)> = (0..spec.offer_sets.len())
        .flat_map(|s| std::iter::once((s, None)).chain((0..spec.models.len()).map(move |m| (s, Some(m)))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let out = pool.install(|| {
        cells
            .par_iter()
            .map(|&(s, m)| run_cell(spec, s, m))
            .collect::<Result<Vec<_>>>()
    })?;
    log::info!("grid of {} cells in {:.1}s", out.len(), start.elapsed().as_secs_f64());
    Ok(out)
}

/// Per-model summary against the plain baseline of each offer set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub cells: usize,
    /// Cells whose wall time is at most the baseline's.
    pub not_slower: usize,
    /// Sat cells whose price equals the sat baseline price.
    pub optimal_price: usize,
    pub comparable: usize,
}

pub fn summarize(cells: &[GridCell]) -> Vec<ModelSummary> {
    let mut out: Vec<ModelSummary> = Vec::new();
    for c in cells.iter().filter(|c| c.model != PLAIN) {
        let Some(base) = cells.iter().find(|b| b.model == PLAIN && b.offer_set == c.offer_set) else {
            continue;
        };
        let idx = match out.iter().position(|s| s.model == c.model) {
            Some(i) => i,
            None => {
                out.push(ModelSummary {
                    model: c.model.clone(),
                    cells: 0,
                    not_slower: 0,
                    optimal_price: 0,
                    comparable: 0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        s.cells += 1;
        s.not_slower += usize::from(c.wall_time <= base.wall_time);
        if base.status == SolveStatus::Sat {
            s.comparable += 1;
            s.optimal_price += usize::from(c.status == SolveStatus::Sat && c.price == base.price);
        }
    }
    out
}

/// Draws `count` offer sets of `size` distinct offers from one catalog.
/// Offers keep their catalog ids, so the same offer recurs across sets.
pub fn subset_offer_sets(
    catalog: &[VmOffer],
    count: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<(String, Vec<VmOffer>)>> {
    if size == 0 || size > catalog.len() {
        return Err(Error::InvalidArgument(format!(
            "subset size {size} outside 1..={}",
            catalog.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|idx| {
            let mut offers: Vec<VmOffer> = catalog.choose_multiple(&mut rng, size).cloned().collect();
            offers.sort_by_key(|o| o.id);
            (format!("s{idx:02}"), offers)
        })
        .collect())
}

/// Model and training settings that memorize a couple dozen Secure-Web-sized
/// instances exactly. Uniform weights with plain cross-entropy avoid the
/// false positives inverse-frequency weighting leaves behind.
pub fn overfit_configs(slots: usize, seed: u64) -> (ModelConfig, TrainConfig) {
    let mut model = ModelConfig::new(slots);
    model.input_dim = 16;
    model.layer_dims = vec![16, 16, 16];
    model.predictor_hidden = Some(64);
    let train = TrainConfig {
        epochs: 4000,
        learning_rate: 0.003,
        gamma: 0.0,
        class_weights: ClassWeights::Uniform,
        seed,
        ..TrainConfig::default()
    };
    (model, train)
}

/// Labels every offer set with the plain solver and trains a model on
/// exactly those instances. Fails if any set is not solved to sat.
pub fn overfit_model(
    app: &Application,
    offer_sets: &[(String, Vec<VmOffer>)],
    deadline: Duration,
    solver: &SolverConfig,
    seed: u64,
) -> Result<RgcnModel> {
    let mut graphs = Vec::with_capacity(offer_sets.len());
    for (name, offers) in offer_sets {
        let problem = DeploymentProblem::new(app.clone(), offers.clone())?;
        let outcome = solve(&encode(&problem, &[])?, deadline, solver)?;
        let sol = outcome.solution.ok_or_else(|| {
            Error::InvalidArgument(format!("offer set {name}: plain solve gave {:?}", outcome.status))
        })?;
        graphs.push(HetGraph::build(&problem, Some(&sol.canonicalize()))?);
    }
    let stats = FeatureStats::fit(&graphs)?;
    let (model_config, train_config) = overfit_configs(app.vm_budget, seed);
    let mut model = RgcnModel::new(model_config, seed)?;
    model.stats = Some(stats.clone());
    let data = prepare(&model, &graphs, &stats)?;
    train(&mut model, &data, &train_config)?;
    Ok(model)
}
