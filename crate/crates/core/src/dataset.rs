//! Labeled dataset generation over offer subsets, label-imbalance
//! measurement and curation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{validate, Application, DeploymentProblem, Solution, VmOffer};
use crate::oracle::{brute_force, OracleCaps};
use crate::price::Price;
use crate::smt::{encode, solve, SolveStatus, SolverConfig};

/// Curation threshold on the label-count Gini coefficient.
pub const GINI_THRESHOLD: f64 = 0.3;

/// Number of `k`-subsets of an `n`-set.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn check_subset_size(catalog: &[VmOffer], k: usize) -> Result<()> {
    if k == 0 || k > catalog.len() {
        return Err(Error::InvalidArgument(format!(
            "subset size {k} outside 1..={}",
            catalog.len()
        )));
    }
    Ok(())
}

/// Lexicographic `k`-combinations of `catalog`, truncated at `limit`.
pub fn enumerate_subsets(
    catalog: &[VmOffer],
    k: usize,
    limit: Option<usize>,
) -> Result<impl Iterator<Item = Vec<VmOffer>> + '_> {
    check_subset_size(catalog, k)?;
    Ok(catalog
        .iter()
        .cloned()
        .combinations(k)
        .take(limit.unwrap_or(usize::MAX)))
}

/// Which `k`-subsets of the catalog get labeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Selection {
    /// Lexicographic order, optionally truncated.
    First { limit: Option<usize> },
    /// `count` distinct subsets drawn uniformly, in draw order.
    Random { count: usize, seed: u64 },
}

pub fn select_subsets(catalog: &[VmOffer], k: usize, selection: Selection) -> Result<Vec<Vec<VmOffer>>> {
    match selection {
        Selection::First { limit } => Ok(enumerate_subsets(catalog, k, limit)?.collect()),
        Selection::Random { count, seed } => {
            check_subset_size(catalog, k)?;
            if count as u64 >= binomial(catalog.len(), k) {
                return Ok(enumerate_subsets(catalog, k, None)?.collect());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let positions: Vec<usize> = (0..catalog.len()).collect();
            let mut seen = BTreeSet::new();
            let mut out = Vec::with_capacity(count);
            while out.len() < count {
                let mut pick: Vec<usize> = positions.choose_multiple(&mut rng, k).copied().collect();
                pick.sort_unstable();
                if seen.insert(pick.clone()) {
                    out.push(pick.iter().map(|&p| catalog[p].clone()).collect());
                }
            }
            Ok(out)
        }
    }
}

/// Gini coefficient of a list of positive counts.
pub fn gini(v: &[u64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("gini of an empty list".into()));
    }
    if v.contains(&0) {
        return Err(Error::InvalidArgument("gini requires positive counts".into()));
    }
    let mut sv = v.to_vec();
    sv.sort_unstable();
    let n = sv.len() as f64;
    let s: f64 = sv.iter().map(|&x| x as f64).sum();
    let c: f64 = sv
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x as f64;
            Some(*acc)
        })
        .sum();
    Ok((n + 1.0 - 2.0 * c / s) / n)
}

/// Drops the largest count while the Gini coefficient is at or above the
/// threshold. `counts` must be sorted in decreasing order. Stops at a single
/// element, whose Gini is 0.
pub fn reduce_gini(counts: &[u64]) -> Vec<u64> {
    let mut rest = counts;
    while rest.len() > 1 && gini(rest).is_ok_and(|g| g >= GINI_THRESHOLD) {
        rest = &rest[1..];
    }
    rest.to_vec()
}

/// One solved instance: the offer subset and its optimal deployment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub subset: Vec<u32>,
    pub a: Vec<Vec<u8>>,
    pub t: Vec<u32>,
    #[serde(with = "crate::price::text")]
    pub min_price: Price,
}

impl Sample {
    fn from_solution(subset: Vec<u32>, sol: &Solution) -> Self {
        let sol = sol.canonicalize();
        Sample {
            subset,
            a: sol.a,
            t: sol.t,
            min_price: sol.price_total,
        }
    }

    pub fn solution(&self, problem: &DeploymentProblem) -> Solution {
        Solution::from_assignment(problem, self.a.clone(), self.t.clone())
    }
}

/// `(min_price, count)` pairs in ascending price order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelHistogram(pub Vec<(Price, u64)>);

impl LabelHistogram {
    pub fn of(samples: &[Sample]) -> Self {
        let mut counts: BTreeMap<Price, u64> = BTreeMap::new();
        for s in samples {
            *counts.entry(s.min_price).or_default() += 1;
        }
        LabelHistogram(counts.into_iter().collect())
    }

    pub fn n_labels(&self) -> usize {
        self.0.len()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.0.iter().map(|&(_, c)| c).collect()
    }

    pub fn gini(&self) -> Option<f64> {
        gini(&self.counts()).ok()
    }
}

/// Exact solver used to label subsets.
#[derive(Debug, Clone)]
pub enum Backend {
    Oracle(OracleCaps),
    Smt { config: SolverConfig, deadline: Duration },
}

impl Backend {
    fn name(&self) -> &'static str {
        match self {
            Backend::Oracle(_) => "oracle",
            Backend::Smt { .. } => "smt",
        }
    }

    fn solve(&self, problem: &DeploymentProblem) -> Result<Option<Solution>> {
        match self {
            Backend::Oracle(caps) => brute_force(problem, *caps),
            Backend::Smt { config, deadline } => {
                let out = solve(&encode(problem, &[])?, *deadline, config)?;
                match out.status {
                    SolveStatus::Sat => Ok(out.solution),
                    SolveStatus::Unsat => Ok(None),
                    SolveStatus::Timeout => Err(Error::InvalidArgument(format!(
                        "solver exceeded the {:.1}s labeling deadline",
                        deadline.as_secs_f64()
                    ))),
                    SolveStatus::Error => Err(Error::SolverOutput {
                        reason: "solver reported an error".into(),
                        raw: out.diagnostics,
                    }),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub application: Application,
    pub catalog: Vec<VmOffer>,
    pub catalog_sha256: String,
    pub k: usize,
    pub selection: Selection,
    pub backend: String,
    pub n_subsets: usize,
    pub n_infeasible: usize,
    pub curation: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<Sample>,
}

pub fn catalog_hash(catalog: &[VmOffer]) -> String {
    let json = serde_json::to_vec(catalog).expect("offers serialize");
    hex::encode(Sha256::digest(json))
}

/// Labels the selected `k`-subsets of `catalog` with their optimal
/// deployments. Infeasible subsets are counted in the manifest but yield no
/// sample. Output order follows subset order regardless of parallelism.
pub fn generate(
    app: &Application,
    catalog: &[VmOffer],
    k: usize,
    selection: Selection,
    backend: &Backend,
) -> Result<Dataset> {
    let subsets = select_subsets(catalog, k, selection)?;
    let labeled: Vec<Option<Sample>> = subsets
        .par_iter()
        .enumerate()
        .map(|(idx, offers)| {
            let wrap = |e: Error| Error::Generation {
                subset: idx,
                source: Box::new(e),
            };
            let problem = DeploymentProblem::new(app.clone(), offers.clone()).map_err(wrap)?;
            let ids = offers.iter().map(|o| o.id).collect();
            Ok(backend
                .solve(&problem)
                .map_err(wrap)?
                .map(|sol| Sample::from_solution(ids, &sol)))
        })
        .collect::<Result<_>>()?;
    let n_subsets = labeled.len();
    let samples: Vec<Sample> = labeled.into_iter().flatten().collect();
    log::info!(
        "labeled {n_subsets} subsets, {} feasible, {} distinct prices",
        samples.len(),
        LabelHistogram::of(&samples).n_labels()
    );
    Ok(Dataset {
        manifest: Manifest {
            application: app.clone(),
            catalog: catalog.to_vec(),
            catalog_sha256: catalog_hash(catalog),
            k,
            selection,
            backend: backend.name().to_string(),
            n_subsets,
            n_infeasible: n_subsets - samples.len(),
            curation: None,
        },
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Curation {
    Auto,
    Manual(BTreeSet<Price>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurationReport {
    pub labels_before: usize,
    pub labels_after: usize,
    pub gini_before: f64,
    pub gini_after: f64,
    pub samples_before: usize,
    pub samples_after: usize,
}

/// Drops the samples of over-represented (auto) or unlisted (manual) labels.
///
/// Auto mode orders labels by count, largest first (cheaper label first on
/// ties), runs [`reduce_gini`] and keeps the labels that survive.
pub fn curate(samples: &[Sample], mode: &Curation) -> Result<(Vec<Sample>, CurationReport)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("nothing to curate".into()));
    }
    let hist = LabelHistogram::of(samples);
    let keep: BTreeSet<Price> = match mode {
        Curation::Auto => {
            let mut by_count = hist.0.clone();
            by_count.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
            let counts: Vec<u64> = by_count.iter().map(|&(_, c)| c).collect();
            let kept = reduce_gini(&counts).len();
            by_count[by_count.len() - kept..].iter().map(|&(p, _)| p).collect()
        }
        Curation::Manual(keep) => {
            if !hist.0.iter().any(|(p, _)| keep.contains(p)) {
                return Err(Error::InvalidArgument(
                    "manual keep-set shares no label with the dataset".into(),
                ));
            }
            keep.clone()
        }
    };
    let kept: Vec<Sample> = samples
        .iter()
        .filter(|s| keep.contains(&s.min_price))
        .cloned()
        .collect();
    let after = LabelHistogram::of(&kept);
    let report = CurationReport {
        labels_before: hist.n_labels(),
        labels_after: after.n_labels(),
        gini_before: hist.gini().unwrap_or(0.0),
        gini_after: after.gini().unwrap_or(0.0),
        samples_before: samples.len(),
        samples_after: kept.len(),
    };
    Ok((kept, report))
}

/// Seeded shuffle followed by a `(1 - test_ratio, test_ratio)` split.
pub fn split(samples: &[Sample], test_ratio: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((samples.len() as f64) * test_ratio.clamp(0.0, 1.0)).round() as usize;
    let train = shuffled.split_off(n_test);
    (train, shuffled)
}

impl Dataset {
    /// The problem instance a sample was solved on.
    pub fn problem(&self, sample: &Sample) -> Result<DeploymentProblem> {
        let offers = sample
            .subset
            .iter()
            .map(|id| {
                self.manifest
                    .catalog
                    .iter()
                    .find(|o| o.id == *id)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("offer {id} not in catalog")))
            })
            .collect::<Result<Vec<_>>>()?;
        DeploymentProblem::new(self.manifest.application.clone(), offers)
    }

    pub fn histogram(&self) -> LabelHistogram {
        LabelHistogram::of(&self.samples)
    }

    /// Replaces the samples by their curated subset and records the mode.
    pub fn curated(&self, mode: &Curation) -> Result<(Dataset, CurationReport)> {
        let (samples, report) = curate(&self.samples, mode)?;
        let label = match mode {
            Curation::Auto => "auto".to_string(),
            Curation::Manual(keep) => format!("manual:{}", keep.iter().join(",")),
        };
        let mut manifest = self.manifest.clone();
        manifest.curation = Some(label);
        Ok((Dataset { manifest, samples }, report))
    }

    /// Checks every sample against its problem.
    pub fn verify(&self) -> Result<()> {
        for (idx, s) in self.samples.iter().enumerate() {
            let problem = self.problem(s)?;
            let violations = validate(&problem, &s.solution(&problem))?;
            if !violations.is_empty() || s.solution(&problem).price_total != s.min_price {
                return Err(Error::InvalidLabels(format!(
                    "sample {idx}: {}",
                    violations.iter().join("; ")
                )));
            }
        }
        Ok(())
    }

    pub fn manifest_path(path: &Path) -> PathBuf {
        path.with_extension("manifest.json")
    }

    /// Writes the samples as JSON Lines at `path` and the manifest beside it.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        let mpath = Self::manifest_path(path);
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let mpath = Self::manifest_path(path);
        let mtext = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest = serde_json::from_str(&mtext)?;
        if catalog_hash(&manifest.catalog) != manifest.catalog_sha256 {
            return Err(Error::InvalidArgument(format!(
                "{}: catalog hash mismatch",
                mpath.display()
            )));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut samples = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                samples.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Dataset { manifest, samples })
    }
}
