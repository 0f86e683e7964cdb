//! Heterogeneous graph encoding of a deployment problem.
//!
//! Component nodes come first (by id), then one VM node per `(slot, offer)`
//! pair in row-major order, so VM node `k * O + o` stands for slot `k+1`
//! leased as the `o`-th offer of the problem. Component-to-VM edges are
//! indexed `i * M * O + k * O + o`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate, BoundKind, BoundOp, Constraint, DeploymentProblem, Solution};

pub const COMP_FEATURES: usize = 8;
pub const VM_FEATURES: usize = 4;
pub const CC_FLAGS: usize = 7;

/// Order of the component-component flags, also the order of their relations.
pub const CC_FLAG_NAMES: [&str; CC_FLAGS] = [
    "conflict",
    "colocation",
    "require_provide",
    "exclusive",
    "upper_bound",
    "lower_bound",
    "equal_bound",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeLabel {
    Linked,
    Unlinked,
    Binding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcEdge {
    /// 0-based component indices, `i < j`.
    pub i: usize,
    pub j: usize,
    pub flags: [u8; CC_FLAGS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HetGraph {
    pub n: usize,
    pub m: usize,
    pub offer_ids: Vec<u32>,
    pub comp_features: Vec<[f64; COMP_FEATURES]>,
    pub vm_features: Vec<[f64; VM_FEATURES]>,
    pub cc_edges: Vec<CcEdge>,
    /// Per cv-edge label; all `Unlinked` when built without a solution.
    pub cv_labels: Vec<EdgeLabel>,
    pub labeled: bool,
}

/// How component-component constraints map onto message-passing relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationMode {
    /// One relation per constraint flag and direction (18 relations total).
    #[default]
    PerFlag,
    /// A single `binding` relation per direction (6 relations total).
    Collapsed,
}

impl RelationMode {
    pub fn n_relations(self) -> usize {
        match self {
            RelationMode::PerFlag => 2 * CC_FLAGS + 4,
            RelationMode::Collapsed => 2 + 4,
        }
    }
}

fn bound_flag(op: BoundOp) -> usize {
    match op {
        BoundOp::Le => 4,
        BoundOp::Ge => 5,
        BoundOp::Eq => 6,
    }
}

impl HetGraph {
    /// Encodes `problem`; with `labels`, cv-edge `(i, (k, o))` is linked iff
    /// component `i` runs on slot `k` and the slot leases offer `o`.
    pub fn build(problem: &DeploymentProblem, labels: Option<&Solution>) -> Result<HetGraph> {
        let n = problem.n_components();
        let m = problem.n_vms();
        let o = problem.n_offers();

        let comp_features = problem
            .app
            .components
            .iter()
            .map(|c| {
                let r = c.requirements;
                let mut f = [0.0; COMP_FEATURES];
                f[0] = c.id as f64;
                f[1] = r.cpu as f64;
                f[2] = r.mem as f64;
                f[3] = r.sto as f64;
                f[4] = f64::from(u8::from(c.full_deployment));
                if let Some(b) = c.bound {
                    let slot = match b.kind {
                        BoundKind::Upper => 5,
                        BoundKind::Lower => 6,
                        BoundKind::Equal => 7,
                    };
                    f[slot] = f64::from(b.value);
                }
                f
            })
            .collect();

        let mut vm_features = Vec::with_capacity(m * o);
        for _ in 0..m {
            for offer in &problem.offers {
                vm_features.push([
                    offer.spec.cpu as f64,
                    offer.spec.mem as f64,
                    offer.spec.sto as f64,
                    offer.price.as_f64(),
                ]);
            }
        }

        let mut flags = vec![[0u8; CC_FLAGS]; n * n];
        let mut mark = |a: usize, b: usize, flag: usize| {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if i != j {
                flags[(i - 1) * n + (j - 1)][flag] = 1;
            }
        };
        for c in &problem.app.constraints {
            match c {
                Constraint::Conflict { i, j } => mark(*i, *j, 0),
                Constraint::Colocation { i, j } => mark(*i, *j, 1),
                Constraint::RequireProvide(rp) => mark(rp.i, rp.j, 2),
                Constraint::ExclusiveDeployment { group } => {
                    for (x, &a) in group.iter().enumerate() {
                        for &b in &group[x + 1..] {
                            mark(a, b, 3);
                        }
                    }
                }
                Constraint::GroupBound(gb) => {
                    for (x, &a) in gb.members.iter().enumerate() {
                        for &b in &gb.members[x + 1..] {
                            mark(a, b, bound_flag(gb.op));
                        }
                    }
                }
            }
        }
        let mut cc_edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let f = flags[i * n + j];
                if f.iter().any(|&x| x != 0) {
                    cc_edges.push(CcEdge { i, j, flags: f });
                }
            }
        }

        let mut cv_labels = vec![EdgeLabel::Unlinked; n * m * o];
        if let Some(sol) = labels {
            let violations = validate(problem, sol).map_err(|e| Error::InvalidLabels(e.to_string()))?;
            if !violations.is_empty() {
                let listed: Vec<String> = violations.iter().map(ToString::to_string).collect();
                return Err(Error::InvalidLabels(listed.join("; ")));
            }
            for i in 0..n {
                for k in 0..m {
                    if sol.a[i][k] == 1 {
                        let oi = problem
                            .offers
                            .iter()
                            .position(|x| x.id == sol.t[k])
                            .expect("validated solution leases a catalog offer");
                        cv_labels[(i * m + k) * o + oi] = EdgeLabel::Linked;
                    }
                }
            }
        }

        Ok(HetGraph {
            n,
            m,
            offer_ids: problem.offers.iter().map(|x| x.id).collect(),
            comp_features,
            vm_features,
            cc_edges,
            cv_labels,
            labeled: labels.is_some(),
        })
    }

    pub fn n_offers(&self) -> usize {
        self.offer_ids.len()
    }

    pub fn n_vm_nodes(&self) -> usize {
        self.vm_features.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n + self.n_vm_nodes()
    }

    pub fn n_cv_edges(&self) -> usize {
        self.cv_labels.len()
    }

    /// Node index of VM `(k, o)`, both 0-based.
    pub fn vm_node(&self, k: usize, o: usize) -> usize {
        self.n + k * self.n_offers() + o
    }

    /// `(component, vm node)` endpoints of every cv-edge, in edge order.
    pub fn cv_endpoints(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let vms = self.n_vm_nodes();
        (0..self.n).flat_map(move |i| (0..vms).map(move |v| (i, self.n + v)))
    }

    pub fn n_linked(&self) -> usize {
        self.cv_labels.iter().filter(|&&l| l == EdgeLabel::Linked).count()
    }

    /// Directed `(src, dst)` node pairs per relation.
    ///
    /// Every cv-edge is placed in the `unlinked` relations regardless of its
    /// label: labels are prediction targets, and at inference time nothing is
    /// linked yet, so training must see the same message-passing structure.
    /// The `linked` relations are kept so the relation layout stays fixed.
    pub fn relations(&self, mode: RelationMode) -> Vec<Vec<(usize, usize)>> {
        let mut rel = vec![Vec::new(); mode.n_relations()];
        for e in &self.cc_edges {
            match mode {
                RelationMode::PerFlag => {
                    for (f, &on) in e.flags.iter().enumerate() {
                        if on != 0 {
                            rel[2 * f].push((e.i, e.j));
                            rel[2 * f + 1].push((e.j, e.i));
                        }
                    }
                }
                RelationMode::Collapsed => {
                    rel[0].push((e.i, e.j));
                    rel[1].push((e.j, e.i));
                }
            }
        }
        let base = mode.n_relations() - 4;
        // base, base+1: linked comp->vm, vm->comp; base+2, base+3: unlinked.
        for (c, v) in self.cv_endpoints() {
            rel[base + 2].push((c, v));
            rel[base + 3].push((v, c));
        }
        rel
    }
}

/// Per-column min/max for both node types, computed on training graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub comp_min: [f64; COMP_FEATURES],
    pub comp_max: [f64; COMP_FEATURES],
    pub vm_min: [f64; VM_FEATURES],
    pub vm_max: [f64; VM_FEATURES],
}

impl FeatureStats {
    #[allow(clippy::needless_range_loop)]
    pub fn fit<'a>(graphs: impl IntoIterator<Item = &'a HetGraph>) -> Result<FeatureStats> {
        let mut s = FeatureStats {
            comp_min: [f64::INFINITY; COMP_FEATURES],
            comp_max: [f64::NEG_INFINITY; COMP_FEATURES],
            vm_min: [f64::INFINITY; VM_FEATURES],
            vm_max: [f64::NEG_INFINITY; VM_FEATURES],
        };
        let mut any = false;
        for g in graphs {
            any = true;
            for f in &g.comp_features {
                for c in 0..COMP_FEATURES {
                    s.comp_min[c] = s.comp_min[c].min(f[c]);
                    s.comp_max[c] = s.comp_max[c].max(f[c]);
                }
            }
            for f in &g.vm_features {
                for c in 0..VM_FEATURES {
                    s.vm_min[c] = s.vm_min[c].min(f[c]);
                    s.vm_max[c] = s.vm_max[c].max(f[c]);
                }
            }
        }
        if !any {
            return Err(Error::InvalidArgument("no graphs to fit feature stats on".into()));
        }
        Ok(s)
    }
}

fn scale(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (x - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Min-max scales every feature column with `stats` (fitted on `graph` when
/// absent). The ID column is divided by N instead.
#[allow(clippy::needless_range_loop)]
pub fn normalize_features(graph: &HetGraph, stats: Option<&FeatureStats>) -> Result<(HetGraph, FeatureStats)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => FeatureStats::fit([graph])?,
    };
    let mut out = graph.clone();
    for f in &mut out.comp_features {
        f[0] /= graph.n as f64;
        for c in 1..COMP_FEATURES {
            f[c] = scale(f[c], stats.comp_min[c], stats.comp_max[c]);
        }
    }
    for f in &mut out.vm_features {
        for c in 0..VM_FEATURES {
            f[c] = scale(f[c], stats.vm_min[c], stats.vm_max[c]);
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::model::DeploymentProblem;

    fn secure_web() -> DeploymentProblem {
        DeploymentProblem::new(cases::secure_web(), cases::catalog_cloud20()).unwrap()
    }

    #[test]
    fn secure_web_sizes() {
        let g = HetGraph::build(&secure_web(), None).unwrap();
        assert_eq!(g.n_vm_nodes(), 120);
        assert_eq!(g.n_cv_edges(), 600);
        assert_eq!(g.n_linked(), 0);
        assert!(!g.labeled);
    }

    #[test]
    fn balancer_ids_server_edge() {
        let g = HetGraph::build(&secure_web(), None).unwrap();
        let e = g.cc_edges.iter().find(|e| e.i == 0 && e.j == 3).unwrap();
        assert_eq!(e.flags, [1, 0, 0, 0, 0, 0, 0]);
        let apache_nginx = g.cc_edges.iter().find(|e| e.i == 1 && e.j == 2).unwrap();
        assert_eq!(apache_nginx.flags, [1, 0, 0, 0, 0, 1, 0]);
    }

    #[test]
    fn component_features() {
        let g = HetGraph::build(&secure_web(), None).unwrap();
        assert_eq!(g.comp_features[0], [1.0, 4.0, 2048.0, 500.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.comp_features[4][4], 1.0);
    }

    #[test]
    fn relation_counts() {
        let g = HetGraph::build(&secure_web(), None).unwrap();
        let rel = g.relations(RelationMode::PerFlag);
        assert_eq!(rel.len(), 18);
        assert_eq!(rel[16].len(), 600);
        assert_eq!(rel[14].len(), 0);
        let collapsed = g.relations(RelationMode::Collapsed);
        assert_eq!(collapsed.len(), 6);
        assert_eq!(collapsed[0].len(), g.cc_edges.len());
    }

    #[test]
    fn normalization() {
        let g = HetGraph::build(&secure_web(), None).unwrap();
        let (a, stats) = normalize_features(&g, None).unwrap();
        let (b, _) = normalize_features(&g, Some(&stats)).unwrap();
        assert_eq!(a, b);
        let cpus: Vec<f64> = a.vm_features.iter().map(|f| f[0]).collect();
        assert_eq!(cpus.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(cpus.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
        // A constant column maps to zero.
        let mut flat = g.clone();
        for f in &mut flat.comp_features {
            f[3] = 7.0;
        }
        let (c, _) = normalize_features(&flat, None).unwrap();
        assert!(c.comp_features.iter().all(|f| f[3] == 0.0));
        assert!((a.comp_features[4][0] - 1.0).abs() < 1e-12);
    }
}
