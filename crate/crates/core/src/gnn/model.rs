//! RGCN encoder and edge predictor with hand-written backward passes.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hetgraph::{FeatureStats, HetGraph, RelationMode, COMP_FEATURES, VM_FEATURES};

pub const UNLINKED: usize = 0;
pub const LINKED: usize = 1;
pub const BINDING: usize = 2;

/// How per-relation messages are combined at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Sum,
    /// Averages over the relations that have at least one neighbor.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width both node types are projected to before the first layer.
    pub input_dim: usize,
    /// Output width of each RGCN layer.
    pub layer_dims: Vec<usize>,
    /// Optional ReLU hidden layer inside the edge predictor.
    pub predictor_hidden: Option<usize>,
    /// 2 (unlinked, linked) or 3 (adds binding, trained on cc-edges).
    pub classes: usize,
    pub relation_mode: RelationMode,
    pub aggregation: Aggregation,
    /// VM slots M; each slot gets a learned input offset.
    pub slots: usize,
}

impl ModelConfig {
    pub fn new(slots: usize) -> Self {
        ModelConfig {
            input_dim: 8,
            layer_dims: vec![10, 5],
            predictor_hidden: None,
            classes: 2,
            relation_mode: RelationMode::PerFlag,
            aggregation: Aggregation::Sum,
            slots,
        }
    }

    fn check(&self) -> Result<()> {
        if self.input_dim == 0 || self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if !(2..=3).contains(&self.classes) {
            return Err(Error::InvalidArgument("classes must be 2 or 3".into()));
        }
        if self.slots == 0 || self.predictor_hidden == Some(0) {
            return Err(Error::InvalidArgument(
                "slots and predictor width must be positive".into(),
            ));
        }
        Ok(())
    }

    fn embed_dim(&self) -> usize {
        *self.layer_dims.last().expect("checked non-empty")
    }

    /// Parameter names and shapes, in a fixed order.
    pub fn shapes(&self) -> Vec<(String, (usize, usize))> {
        let d0 = self.input_dim;
        let mut out = vec![
            ("in.comp.w".to_string(), (d0, COMP_FEATURES)),
            ("in.comp.b".to_string(), (1, d0)),
            ("in.vm.w".to_string(), (d0, VM_FEATURES)),
            ("in.vm.b".to_string(), (1, d0)),
            ("in.slot".to_string(), (self.slots, d0)),
        ];
        let mut d_in = d0;
        for (l, &d_out) in self.layer_dims.iter().enumerate() {
            for r in 0..self.relation_mode.n_relations() {
                out.push((rel_name(l, r), (d_out, d_in)));
            }
            out.push((self_name(l), (d_out, d_in)));
            d_in = d_out;
        }
        let two_d = 2 * self.embed_dim();
        match self.predictor_hidden {
            Some(h) => {
                out.push(("edge.hidden.w".to_string(), (h, two_d)));
                out.push(("edge.hidden.b".to_string(), (1, h)));
                out.push(("edge.w".to_string(), (self.classes, h)));
            }
            None => out.push(("edge.w".to_string(), (self.classes, two_d))),
        }
        out.push(("edge.b".to_string(), (1, self.classes)));
        out
    }
}

fn rel_name(layer: usize, rel: usize) -> String {
    format!("layer{layer}.rel{rel:02}")
}

fn self_name(layer: usize) -> String {
    format!("layer{layer}.self")
}

/// Named parameter (or gradient) tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params(pub BTreeMap<String, Array2<f64>>);

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        Params(
            other
                .0
                .iter()
                .map(|(k, v)| (k.clone(), Array2::zeros(v.raw_dim())))
                .collect(),
        )
    }

    fn get(&self, name: &str) -> &Array2<f64> {
        &self.0[name]
    }

    fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.0.get_mut(name).expect("parameter present")
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (k, v) in &mut self.0 {
            *v += &other.0[k];
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.0.values_mut() {
            v.mapv_inplace(|x| x * factor);
        }
    }

    pub fn n_scalars(&self) -> usize {
        self.0.values().map(Array2::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgcnModel {
    pub config: ModelConfig,
    pub params: Params,
    /// Feature scaling fitted on the training graphs.
    pub stats: Option<FeatureStats>,
}

/// A normalized graph laid out for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub n: usize,
    pub m: usize,
    pub o: usize,
    pub x_comp: Array2<f64>,
    pub x_vm: Array2<f64>,
    pub vm_slot: Vec<usize>,
    /// relation -> destination node -> source nodes.
    pub in_nbrs: Vec<Vec<Vec<usize>>>,
    /// Scored `(u, v)` node pairs: every cv-edge first, then cc-edges when
    /// the binding class is enabled.
    pub edges: Vec<(usize, usize)>,
    pub n_cv: usize,
    /// Target class per scored edge.
    pub targets: Option<Vec<usize>>,
}

impl GraphInput {
    /// Lays out an already normalized graph.
    pub fn new(graph: &HetGraph, config: &ModelConfig) -> Result<GraphInput> {
        if graph.m != config.slots {
            return Err(Error::Dimension(format!(
                "graph has {} VM slots, model expects {}",
                graph.m, config.slots
            )));
        }
        let n_nodes = graph.n_nodes();
        let o = graph.n_offers();
        let x_comp = Array2::from_shape_fn((graph.n, COMP_FEATURES), |(i, c)| graph.comp_features[i][c]);
        let x_vm = Array2::from_shape_fn((graph.n_vm_nodes(), VM_FEATURES), |(v, c)| graph.vm_features[v][c]);
        let in_nbrs = graph
            .relations(config.relation_mode)
            .into_iter()
            .map(|pairs| {
                let mut nb = vec![Vec::new(); n_nodes];
                for (src, dst) in pairs {
                    nb[dst].push(src);
                }
                nb
            })
            .collect();
        let mut edges: Vec<(usize, usize)> = graph.cv_endpoints().collect();
        let n_cv = edges.len();
        let mut targets = graph.labeled.then(|| {
            graph
                .cv_labels
                .iter()
                .map(|l| match l {
                    crate::hetgraph::EdgeLabel::Linked => LINKED,
                    _ => UNLINKED,
                })
                .collect::<Vec<_>>()
        });
        if config.classes == 3 {
            for e in &graph.cc_edges {
                edges.push((e.i, e.j));
            }
            if let Some(t) = targets.as_mut() {
                t.extend(std::iter::repeat_n(BINDING, graph.cc_edges.len()));
            }
        }
        Ok(GraphInput {
            n: graph.n,
            m: graph.m,
            o,
            x_comp,
            x_vm,
            vm_slot: (0..graph.n_vm_nodes()).map(|v| v / o.max(1)).collect(),
            in_nbrs,
            edges,
            n_cv,
            targets,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n + self.x_vm.nrows()
    }
}

/// Intermediate values kept for the backward pass.
struct Cache {
    /// `h[0]` is the projected input, `h[l + 1]` the output of layer `l`.
    h: Vec<Array2<f64>>,
    /// Per layer and relation: mean of neighbor rows (None when empty).
    agg: Vec<Vec<Option<Array2<f64>>>>,
    pre: Vec<Array2<f64>>,
    /// Per-node factor applied to the relation sum.
    coef: Array2<f64>,
    hidden_pre: Option<Array2<f64>>,
    hidden: Option<Array2<f64>>,
    logits: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub embeddings: Array2<f64>,
    /// One row per scored edge, cv-edges first.
    pub logits: Array2<f64>,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn mean_rows(h: &Array2<f64>, nbrs: &[Vec<usize>]) -> Array2<f64> {
    let mut out = Array2::zeros((nbrs.len(), h.ncols()));
    for (dst, srcs) in nbrs.iter().enumerate() {
        if srcs.is_empty() {
            continue;
        }
        let w = 1.0 / srcs.len() as f64;
        let mut row = out.row_mut(dst);
        for &src in srcs {
            row.scaled_add(w, &h.row(src));
        }
    }
    out
}

/// Rows of `src` gathered by index.
fn gather(src: &Array2<f64>, idx: impl ExactSizeIterator<Item = usize>) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), src.ncols()));
    for (r, i) in idx.enumerate() {
        out.row_mut(r).assign(&src.row(i));
    }
    out
}

/// `out[idx[r]] += rows[r]`.
fn scatter_add(out: &mut Array2<f64>, rows: &Array2<f64>, idx: impl Iterator<Item = usize>) {
    for (r, i) in idx.enumerate() {
        let mut dst = out.row_mut(i);
        dst += &rows.row(r);
    }
}

fn col_sum(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

impl RgcnModel {
    /// Weights drawn uniformly from `±1/sqrt(fan_in)`; biases start at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<RgcnModel> {
        config.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for (name, (rows, cols)) in config.shapes() {
            let t = if name.ends_with(".b") {
                Array2::zeros((rows, cols))
            } else {
                let bound = 1.0 / (cols as f64).sqrt();
                Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
            };
            params.insert(name, t);
        }
        Ok(RgcnModel {
            config,
            params: Params(params),
            stats: None,
        })
    }

    pub fn forward(&self, g: &GraphInput) -> Result<Forward> {
        let cache = self.forward_cached(g)?;
        Ok(Forward {
            embeddings: cache.h.last().expect("at least one layer").clone(),
            logits: cache.logits,
        })
    }

    fn forward_cached(&self, g: &GraphInput) -> Result<Cache> {
        let p = &self.params;
        if g.in_nbrs.len() != self.config.relation_mode.n_relations() {
            return Err(Error::Dimension("relation count differs from model".into()));
        }
        if g.vm_slot.iter().any(|&k| k >= self.config.slots) {
            return Err(Error::Dimension("VM slot outside model range".into()));
        }
        let n = g.n;
        let d0 = self.config.input_dim;
        let mut h0 = Array2::zeros((g.n_nodes(), d0));
        let hc = g.x_comp.dot(&p.get("in.comp.w").t()) + p.get("in.comp.b");
        h0.slice_mut(s![..n, ..]).assign(&hc);
        let mut hv = g.x_vm.dot(&p.get("in.vm.w").t()) + p.get("in.vm.b");
        let slot = p.get("in.slot");
        for (v, &k) in g.vm_slot.iter().enumerate() {
            let mut row = hv.row_mut(v);
            row += &slot.row(k);
        }
        h0.slice_mut(s![n.., ..]).assign(&hv);

        let coef = Array2::from_shape_fn((g.n_nodes(), 1), |(i, _)| match self.config.aggregation {
            Aggregation::Sum => 1.0,
            Aggregation::Mean => {
                let active = g.in_nbrs.iter().filter(|nb| !nb[i].is_empty()).count();
                1.0 / active.max(1) as f64
            }
        });

        let mut h = vec![h0];
        let mut agg = Vec::new();
        let mut pre = Vec::new();
        for l in 0..self.config.layer_dims.len() {
            let cur = h.last().expect("input layer");
            let mut rel_sum = Array2::zeros((g.n_nodes(), self.config.layer_dims[l]));
            let mut layer_agg = Vec::with_capacity(g.in_nbrs.len());
            for (r, nbrs) in g.in_nbrs.iter().enumerate() {
                if nbrs.iter().all(Vec::is_empty) {
                    layer_agg.push(None);
                    continue;
                }
                let a = mean_rows(cur, nbrs);
                rel_sum += &a.dot(&p.get(&rel_name(l, r)).t());
                layer_agg.push(Some(a));
            }
            let z = rel_sum * &coef + cur.dot(&p.get(&self_name(l)).t());
            h.push(relu(&z));
            pre.push(z);
            agg.push(layer_agg);
        }

        let emb = h.last().expect("output layer");
        let d = self.config.embed_dim();
        let src = || g.edges.iter().map(|e| e.0);
        let dst = || g.edges.iter().map(|e| e.1);
        let pair_proj = |w: &Array2<f64>, bias: &Array2<f64>| -> Array2<f64> {
            let pa = emb.dot(&w.slice(s![.., ..d]).t());
            let pb = emb.dot(&w.slice(s![.., d..]).t());
            gather(&pa, src()) + gather(&pb, dst()) + bias
        };
        let (hidden_pre, hidden, logits) = match self.config.predictor_hidden {
            Some(_) => {
                let hp = pair_proj(p.get("edge.hidden.w"), p.get("edge.hidden.b"));
                let hz = relu(&hp);
                let logits = hz.dot(&p.get("edge.w").t()) + p.get("edge.b");
                (Some(hp), Some(hz), logits)
            }
            None => (None, None, pair_proj(p.get("edge.w"), p.get("edge.b"))),
        };
        Ok(Cache {
            h,
            agg,
            pre,
            coef,
            hidden_pre,
            hidden,
            logits,
        })
    }

    /// Gradient of a scalar loss given its gradient w.r.t. the logits.
    fn backward(&self, g: &GraphInput, cache: &Cache, dlogits: &Array2<f64>) -> Params {
        let p = &self.params;
        let mut grad = Params::zeros_like(p);
        let d = self.config.embed_dim();
        let emb = cache.h.last().expect("output layer");
        let src = || g.edges.iter().map(|e| e.0);
        let dst = || g.edges.iter().map(|e| e.1);

        // Gradient of `gather(emb Wa^T, src) + gather(emb Wb^T, dst) + b`
        // given the upstream `dout`; returns d(emb).
        let pair_back = |w: &Array2<f64>, dout: &Array2<f64>, gw: &mut Array2<f64>, gb: &mut Array2<f64>| {
            let mut da = Array2::zeros((g.n_nodes(), dout.ncols()));
            let mut db = Array2::zeros((g.n_nodes(), dout.ncols()));
            scatter_add(&mut da, dout, src());
            scatter_add(&mut db, dout, dst());
            gw.slice_mut(s![.., ..d]).assign(&da.t().dot(emb));
            gw.slice_mut(s![.., d..]).assign(&db.t().dot(emb));
            *gb = col_sum(dout);
            da.dot(&w.slice(s![.., ..d])) + db.dot(&w.slice(s![.., d..]))
        };

        let mut dh = match (&cache.hidden, &cache.hidden_pre) {
            (Some(hz), Some(hp)) => {
                *grad.get_mut("edge.w") = dlogits.t().dot(hz);
                *grad.get_mut("edge.b") = col_sum(dlogits);
                let mut dpre = dlogits.dot(p.get("edge.w"));
                dpre.zip_mut_with(hp, |g, &x| {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                });
                let mut gw = Array2::zeros(p.get("edge.hidden.w").raw_dim());
                let mut gb = Array2::zeros((1, dpre.ncols()));
                let dh = pair_back(p.get("edge.hidden.w"), &dpre, &mut gw, &mut gb);
                *grad.get_mut("edge.hidden.w") = gw;
                *grad.get_mut("edge.hidden.b") = gb;
                dh
            }
            _ => {
                let mut gw = Array2::zeros(p.get("edge.w").raw_dim());
                let mut gb = Array2::zeros((1, dlogits.ncols()));
                let dh = pair_back(p.get("edge.w"), dlogits, &mut gw, &mut gb);
                *grad.get_mut("edge.w") = gw;
                *grad.get_mut("edge.b") = gb;
                dh
            }
        };

        for l in (0..self.config.layer_dims.len()).rev() {
            let mut dz = dh;
            dz.zip_mut_with(&cache.pre[l], |g, &x| {
                if x <= 0.0 {
                    *g = 0.0;
                }
            });
            let h_in = &cache.h[l];
            *grad.get_mut(&self_name(l)) = dz.t().dot(h_in);
            let mut dh_in = dz.dot(p.get(&self_name(l)));
            let dz_rel = &dz * &cache.coef;
            for (r, a) in cache.agg[l].iter().enumerate() {
                let Some(a) = a else { continue };
                let w = p.get(&rel_name(l, r));
                *grad.get_mut(&rel_name(l, r)) = dz_rel.t().dot(a);
                let da = dz_rel.dot(w);
                for (dst, srcs) in g.in_nbrs[r].iter().enumerate() {
                    if srcs.is_empty() {
                        continue;
                    }
                    let wgt = 1.0 / srcs.len() as f64;
                    for &s in srcs {
                        let mut row = dh_in.row_mut(s);
                        row.scaled_add(wgt, &da.row(dst));
                    }
                }
            }
            dh = dh_in;
        }

        let n = g.n;
        let dc = dh.slice(s![..n, ..]).to_owned();
        let dv = dh.slice(s![n.., ..]).to_owned();
        *grad.get_mut("in.comp.w") = dc.t().dot(&g.x_comp);
        *grad.get_mut("in.comp.b") = col_sum(&dc);
        *grad.get_mut("in.vm.w") = dv.t().dot(&g.x_vm);
        *grad.get_mut("in.vm.b") = col_sum(&dv);
        let gs = grad.get_mut("in.slot");
        for (v, &k) in g.vm_slot.iter().enumerate() {
            let mut row = gs.row_mut(k);
            row += &dv.row(v);
        }
        grad
    }

    /// Summed loss over the scored edges of `g` and its parameter gradient.
    pub(crate) fn loss_and_grad(
        &self,
        g: &GraphInput,
        loss: &super::loss::FocalLoss,
    ) -> Result<(f64, Params, Array2<f64>)> {
        let targets = g
            .targets
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("graph has no training labels".into()))?;
        let cache = self.forward_cached(g)?;
        let (value, dlogits) = loss.sum_and_grad(cache.logits.view(), targets)?;
        let grad = self.backward(g, &cache, &dlogits);
        Ok((value, grad, cache.logits))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&Checkpoint::from(self))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<RgcnModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str::<Checkpoint>(&text)?.into_model()
    }
}

/// Predicted class per row; ties go to the lower class index, so to
/// `unlinked` between linked and unlinked.
pub fn argmax_rows(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorDump {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// JSON weight dump with a shape manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub stats: Option<FeatureStats>,
    pub tensors: BTreeMap<String, TensorDump>,
}

impl From<&RgcnModel> for Checkpoint {
    fn from(m: &RgcnModel) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: m.config.clone(),
            stats: m.stats.clone(),
            tensors: m
                .params
                .0
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        TensorDump {
                            shape: [v.nrows(), v.ncols()],
                            data: v.iter().copied().collect(),
                        },
                    )
                })
                .collect(),
        }
    }
}

impl Checkpoint {
    pub fn into_model(self) -> Result<RgcnModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", self.version)));
        }
        self.config.check()?;
        let mut params = BTreeMap::new();
        let mut tensors = self.tensors;
        for (name, (rows, cols)) in self.config.shapes() {
            let dump = tensors
                .remove(&name)
                .ok_or_else(|| Error::Parse(format!("checkpoint lacks tensor `{name}`")))?;
            if dump.shape != [rows, cols] {
                return Err(Error::Parse(format!(
                    "tensor `{name}` has shape {:?}, expected [{rows}, {cols}]",
                    dump.shape
                )));
            }
            let t = Array2::from_shape_vec((rows, cols), dump.data)
                .map_err(|e| Error::Parse(format!("tensor `{name}`: {e}")))?;
            params.insert(name, t);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Parse(format!("unexpected tensor `{extra}` in checkpoint")));
        }
        Ok(RgcnModel {
            config: self.config,
            params: Params(params),
            stats: self.stats,
        })
    }
}
