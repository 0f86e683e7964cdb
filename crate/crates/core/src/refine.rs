//! From edge predictions to soft constraints, and the combined solve.

use std::time::{Duration, Instant};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{argmax_rows, GraphInput, RgcnModel, LINKED};
use crate::hetgraph::{normalize_features, HetGraph};
use crate::model::{DeploymentProblem, Solution};
use crate::smt::{encode, solve, SoftConstraint, SolverConfig, SolverOutcome};

/// Binary `N x M x O` placement predictions; `o` is the 0-based position of
/// the offer in the problem catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredTensor {
    pub n: usize,
    pub m: usize,
    pub o: usize,
    pub data: Vec<u8>,
}

impl PredTensor {
    pub fn zeros(n: usize, m: usize, o: usize) -> Self {
        PredTensor {
            n,
            m,
            o,
            data: vec![0; n * m * o],
        }
    }

    fn idx(&self, i: usize, k: usize, o: usize) -> usize {
        (i * self.m + k) * self.o + o
    }

    /// 0-based indices.
    pub fn get(&self, i: usize, k: usize, o: usize) -> u8 {
        self.data[self.idx(i, k, o)]
    }

    pub fn set(&mut self, i: usize, k: usize, o: usize, value: u8) {
        let at = self.idx(i, k, o);
        self.data[at] = value;
    }

    /// One-hot encoding of a known solution.
    pub fn from_solution(problem: &DeploymentProblem, sol: &Solution) -> Result<Self> {
        let mut p = PredTensor::zeros(problem.n_components(), problem.n_vms(), problem.n_offers());
        for i in 0..p.n {
            for k in 0..p.m {
                if sol.a[i][k] == 1 {
                    let o = problem
                        .offers
                        .iter()
                        .position(|x| x.id == sol.t[k])
                        .ok_or_else(|| Error::InvalidLabels(format!("VM {} leases no catalog offer", k + 1)))?;
                    p.set(i, k, o, 1);
                }
            }
        }
        Ok(p)
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&x| x == 1).count()
    }
}

/// `pred = 1` exactly where the linked class strictly wins the argmax.
/// Only the first `n * m * o` rows (the cv-edges) are read.
pub fn decode(logits: ArrayView2<f64>, n: usize, m: usize, o: usize) -> Result<PredTensor> {
    let needed = n * m * o;
    if logits.nrows() < needed || logits.ncols() < 2 {
        return Err(Error::Dimension(format!(
            "need {needed} edge logits with at least 2 classes, got {:?}",
            logits.dim()
        )));
    }
    let classes = argmax_rows(logits.slice(ndarray::s![..needed, ..]));
    Ok(PredTensor {
        n,
        m,
        o,
        data: classes.into_iter().map(|c| u8::from(c == LINKED)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoftOptions {
    /// Emit `a_ik = 0` where no offer is predicted.
    pub negatives: bool,
}

impl Default for SoftOptions {
    fn default() -> Self {
        SoftOptions { negatives: true }
    }
}

/// Disagreement between components about one VM's offer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferConflict {
    pub vm: usize,
    /// `(offer id, votes)` in first-vote order.
    pub votes: Vec<(u32, usize)>,
    pub chosen: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftReport {
    pub n_soft: usize,
    pub n_price_soft: usize,
    /// 1-based VMs that no component placed on any offer.
    pub unpredicted_vms: Vec<usize>,
    pub conflicts_resolved: Vec<OfferConflict>,
    /// Fraction of VMs that received an offer prediction.
    pub pred_coverage: f64,
}

/// Soft constraints implied by `pred`: per `(i, k)`, `a_ik = 1` when some
/// offer is predicted and `a_ik = 0` otherwise; per VM, one spec/price
/// constraint for the offer most components voted for (first vote wins
/// ties).
pub fn to_soft(
    pred: &PredTensor,
    problem: &DeploymentProblem,
    options: SoftOptions,
) -> Result<(Vec<SoftConstraint>, SoftReport)> {
    let (n, m, o) = (problem.n_components(), problem.n_vms(), problem.n_offers());
    if (pred.n, pred.m, pred.o) != (n, m, o) || pred.data.len() != n * m * o {
        return Err(Error::Dimension(format!(
            "pred tensor is {}x{}x{}, problem is {n}x{m}x{o}",
            pred.n, pred.m, pred.o
        )));
    }
    let mut soft = Vec::new();
    for i in 0..n {
        for k in 0..m {
            let hot = (0..o).any(|x| pred.get(i, k, x) == 1);
            if hot {
                soft.push(SoftConstraint::assign(i + 1, k + 1, 1));
            } else if options.negatives {
                soft.push(SoftConstraint::assign(i + 1, k + 1, 0));
            }
        }
    }
    let mut unpredicted = Vec::new();
    let mut conflicts = Vec::new();
    let mut n_price = 0;
    for k in 0..m {
        // (offer position, votes), in first-vote order.
        let mut votes: Vec<(usize, usize)> = Vec::new();
        for i in 0..n {
            for x in 0..o {
                if pred.get(i, k, x) == 1 {
                    match votes.iter_mut().find(|v| v.0 == x) {
                        Some(v) => v.1 += 1,
                        None => votes.push((x, 1)),
                    }
                }
            }
        }
        let Some(&(winner, _)) = votes.iter().fold(None, |best: Option<&(usize, usize)>, v| match best {
            Some(b) if b.1 >= v.1 => Some(b),
            _ => Some(v),
        }) else {
            unpredicted.push(k + 1);
            continue;
        };
        if votes.len() > 1 {
            let c = OfferConflict {
                vm: k + 1,
                votes: votes.iter().map(|&(x, c)| (problem.offers[x].id, c)).collect(),
                chosen: problem.offers[winner].id,
            };
            log::warn!(
                "VM {}: components disagree on the offer {:?}, using {}",
                c.vm,
                c.votes,
                c.chosen
            );
            conflicts.push(c);
        }
        soft.push(SoftConstraint::vm_offer(k + 1, winner));
        n_price += 1;
    }
    let report = SoftReport {
        n_soft: soft.len(),
        n_price_soft: n_price,
        pred_coverage: if m == 0 {
            0.0
        } else {
            (m - unpredicted.len()) as f64 / m as f64
        },
        unpredicted_vms: unpredicted,
        conflicts_resolved: conflicts,
    };
    Ok((soft, report))
}

/// Runs `model` on `problem` and decodes its placement predictions.
pub fn predict(problem: &DeploymentProblem, model: &RgcnModel) -> Result<PredTensor> {
    let graph = HetGraph::build(problem, None)?;
    let (graph, _) = normalize_features(&graph, model.stats.as_ref())?;
    let input = GraphInput::new(&graph, &model.config)?;
    let logits = model.forward(&input)?.logits;
    decode(
        logits.view(),
        problem.n_components(),
        problem.n_vms(),
        problem.n_offers(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuroReport {
    #[serde(flatten)]
    pub soft: SoftReport,
    /// Seconds spent on graph building, inference and encoding.
    pub prepare_time: f64,
}

/// Graph, inference, soft constraints, encoding and solve in one go. The
/// soft constraints never override hard ones, so any sat solution is valid.
pub fn neuro_solve(
    problem: &DeploymentProblem,
    model: &RgcnModel,
    deadline: Duration,
    config: &SolverConfig,
    options: SoftOptions,
) -> Result<(SolverOutcome, NeuroReport)> {
    let start = Instant::now();
    let pred = predict(problem, model)?;
    solve_with_pred(problem, &pred, deadline, config, options, start)
}

/// The solve half of [`neuro_solve`], for callers holding a pred tensor.
pub fn solve_with_pred(
    problem: &DeploymentProblem,
    pred: &PredTensor,
    deadline: Duration,
    config: &SolverConfig,
    options: SoftOptions,
    start: Instant,
) -> Result<(SolverOutcome, NeuroReport)> {
    let (soft, report) = to_soft(pred, problem, options)?;
    let script = encode(problem, &soft)?;
    let prepare_time = start.elapsed().as_secs_f64();
    let outcome = solve(&script, deadline, config)?;
    Ok((
        outcome,
        NeuroReport {
            soft: report,
            prepare_time,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::smt::SoftTerm;
    use ndarray::Array2;

    fn secure_web10() -> DeploymentProblem {
        let offers = cases::catalog_cloud20().into_iter().take(10).collect();
        DeploymentProblem::new(cases::secure_web(), offers).unwrap()
    }

    #[test]
    fn decode_ties_go_unlinked() {
        let logits = Array2::from_shape_vec((3, 2), vec![0.0, 0.0, 1.0, 2.0, 3.0, -1.0]).unwrap();
        let p = decode(logits.view(), 1, 1, 3).unwrap();
        assert_eq!(p.data, vec![0, 1, 0]);
        assert!(decode(logits.view(), 2, 1, 3).is_err());
    }

    #[test]
    fn zero_tensor_is_all_negative() {
        let p = secure_web10();
        let (soft, report) = to_soft(&PredTensor::zeros(5, 6, 10), &p, SoftOptions::default()).unwrap();
        assert_eq!(soft.len(), 30);
        assert!(soft.iter().all(|s| matches!(s.term, SoftTerm::Assign { value: 0, .. })));
        assert_eq!(report.n_price_soft, 0);
        assert_eq!(report.unpredicted_vms, vec![1, 2, 3, 4, 5, 6]);
        let (none, _) = to_soft(&PredTensor::zeros(5, 6, 10), &p, SoftOptions { negatives: false }).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn majority_vote_first_wins_ties() {
        let p = secure_web10();
        let mut pred = PredTensor::zeros(5, 6, 10);
        pred.set(0, 0, 2, 1);
        pred.set(1, 0, 4, 1);
        pred.set(2, 0, 4, 1);
        pred.set(0, 1, 7, 1);
        pred.set(1, 1, 3, 1);
        let (soft, report) = to_soft(&pred, &p, SoftOptions::default()).unwrap();
        let offers: Vec<_> = soft
            .iter()
            .filter_map(|s| match s.term {
                SoftTerm::VmOffer { vm, offer } => Some((vm, offer)),
                _ => None,
            })
            .collect();
        assert_eq!(offers, vec![(1, 4), (2, 7)]);
        assert_eq!(report.conflicts_resolved.len(), 2);
        assert_eq!(report.conflicts_resolved[0].votes, vec![(3, 1), (5, 2)]);
        assert_eq!(report.conflicts_resolved[1].chosen, 8);
    }
}
