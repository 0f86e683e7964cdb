//! Adam training loop, evaluation metrics and the gradient check.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::FocalLoss;
use super::model::{argmax_rows, GraphInput, Params, RgcnModel, LINKED};
use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::hetgraph::{normalize_features, FeatureStats, HetGraph};

/// How per-class loss weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeights {
    #[default]
    InverseFrequency,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Graphs per gradient step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub class_weights: ClassWeights,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.01,
            gamma: 2.0,
            class_weights: ClassWeights::InverseFrequency,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn loss_for(&self, classes: usize, data: &[GraphInput]) -> FocalLoss {
        match self.class_weights {
            ClassWeights::Uniform => FocalLoss::new(self.gamma, vec![1.0; classes]),
            ClassWeights::InverseFrequency => FocalLoss::inverse_frequency(
                self.gamma,
                classes,
                data.iter().filter_map(|g| g.targets.as_ref()).flatten().copied(),
            ),
        }
    }
}

/// Confusion counts over cv-edges, treating `linked` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Predicted linked and linked in the ground truth.
    pub predicted_t: usize,
    /// Predicted linked but unlinked in the ground truth.
    pub predicted_f: usize,
    pub gt_t: usize,
    pub correct: usize,
    pub total: usize,
}

impl Metrics {
    pub fn from_predictions(predicted_linked: &[bool], gt_linked: &[bool]) -> Metrics {
        assert_eq!(predicted_linked.len(), gt_linked.len(), "prediction/label length");
        let mut m = Metrics::default();
        for (&p, &g) in predicted_linked.iter().zip(gt_linked) {
            m.total += 1;
            m.correct += usize::from(p == g);
            m.gt_t += usize::from(g);
            m.predicted_t += usize::from(p && g);
            m.predicted_f += usize::from(p && !g);
        }
        m.finish()
    }

    fn finish(mut self) -> Metrics {
        self.accuracy = if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        };
        self
    }

    pub fn merge(self, other: Metrics) -> Metrics {
        Metrics {
            accuracy: 0.0,
            predicted_t: self.predicted_t + other.predicted_t,
            predicted_f: self.predicted_f + other.predicted_f,
            gt_t: self.gt_t + other.gt_t,
            correct: self.correct + other.correct,
            total: self.total + other.total,
        }
        .finish()
    }
}

fn cv_metrics(g: &GraphInput, logits: &Array2<f64>) -> Result<Metrics> {
    let targets = g
        .targets
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("graph has no ground-truth labels".into()))?;
    let pred: Vec<bool> = argmax_rows(logits.view())[..g.n_cv]
        .iter()
        .map(|&c| c == LINKED)
        .collect();
    let gt: Vec<bool> = targets[..g.n_cv].iter().map(|&c| c == LINKED).collect();
    Ok(Metrics::from_predictions(&pred, &gt))
}

/// Edge-classification metrics of `model` on one labeled graph.
pub fn metrics(model: &RgcnModel, g: &GraphInput) -> Result<Metrics> {
    cv_metrics(g, &model.forward(g)?.logits)
}

/// Metrics pooled over every cv-edge of `graphs`.
pub fn evaluate(model: &RgcnModel, graphs: &[GraphInput]) -> Result<Metrics> {
    graphs
        .iter()
        .try_fold(Metrics::default(), |acc, g| Ok(acc.merge(metrics(model, g)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub predicted_t: usize,
    pub predicted_f: usize,
}

struct Adam {
    m: Params,
    v: Params,
    step: i32,
}

impl Adam {
    fn new(p: &Params) -> Self {
        Adam {
            m: Params::zeros_like(p),
            v: Params::zeros_like(p),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut Params, grad: &Params, c: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (name, w) in params.0.iter_mut() {
            let g = &grad.0[name];
            let m = self.m.0.get_mut(name).expect("moment present");
            let v = self.v.0.get_mut(name).expect("moment present");
            ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *w -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
            });
        }
    }
}

/// Mean loss over all scored edges of `batch` and its gradient. Graphs are
/// reduced in order, so the result does not depend on scheduling.
pub fn batch_loss_and_grad(
    model: &RgcnModel,
    batch: &[&GraphInput],
    loss: &FocalLoss,
) -> Result<(f64, Params, Metrics)> {
    let mut grad = Params::zeros_like(&model.params);
    let mut total = 0.0;
    let mut edges = 0usize;
    let mut metrics = Metrics::default();
    for g in batch {
        let (value, gr, logits) = model.loss_and_grad(g, loss)?;
        total += value;
        edges += g.edges.len();
        grad.add_assign(&gr);
        metrics = metrics.merge(cv_metrics(g, &logits)?);
    }
    if edges == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    grad.scale(1.0 / edges as f64);
    Ok((total / edges as f64, grad, metrics))
}

/// Mini-batch Adam on `data`. Each epoch visits the graphs in a seeded
/// shuffled order. History metrics are pooled from the forward passes made
/// during the epoch.
pub fn train(model: &mut RgcnModel, data: &[GraphInput], config: &TrainConfig) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if config.batch_size == 0 || config.learning_rate < 0.0 {
        return Err(Error::InvalidArgument(
            "batch size must be positive, learning rate non-negative".into(),
        ));
    }
    let loss = config.loss_for(model.config.classes, data);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(&model.params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut edge_sum = 0usize;
        let mut metrics = Metrics::default();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&GraphInput> = chunk.iter().map(|&i| &data[i]).collect();
            let (value, grad, m) = batch_loss_and_grad(model, &batch, &loss)?;
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("loss became {value}"),
                });
            }
            let n_edges: usize = batch.iter().map(|g| g.edges.len()).sum();
            loss_sum += value * n_edges as f64;
            edge_sum += n_edges;
            metrics = metrics.merge(m);
            adam.update(&mut model.params, &grad, config);
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / edge_sum as f64,
            accuracy: metrics.accuracy,
            predicted_t: metrics.predicted_t,
            predicted_f: metrics.predicted_f,
        };
        log::debug!("epoch {epoch}: loss {:.6} acc {:.4}", stats.loss, stats.accuracy);
        history.push(stats);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

/// Compares analytic gradients with central differences on every scalar
/// parameter. Relative error is `|a - n| / max(|a| + |n|, 1e-6)`; the floor
/// keeps round-off on vanishing gradients from dominating.
pub fn gradient_check(model: &RgcnModel, graphs: &[GraphInput], loss: &FocalLoss, eps: f64) -> Result<GradCheck> {
    let batch: Vec<&GraphInput> = graphs.iter().collect();
    let (_, analytic, _) = batch_loss_and_grad(model, &batch, loss)?;
    let mut probe = model.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let names: Vec<String> = model.params.0.keys().cloned().collect();
    for name in names {
        let shape = model.params.0[&name].dim();
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let orig = model.params.0[&name][[r, c]];
                probe.params.0.get_mut(&name).expect("param")[[r, c]] = orig + eps;
                let up = batch_loss_and_grad(&probe, &batch, loss)?.0;
                probe.params.0.get_mut(&name).expect("param")[[r, c]] = orig - eps;
                let down = batch_loss_and_grad(&probe, &batch, loss)?.0;
                probe.params.0.get_mut(&name).expect("param")[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic.0[&name][[r, c]];
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
                report.checked += 1;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = format!("{name}[{r},{c}]: analytic {a:e} numeric {numeric:e}");
                }
            }
        }
    }
    Ok(report)
}

/// Labeled graphs for `samples` of `dataset`.
pub fn graphs_for(dataset: &Dataset, samples: &[Sample]) -> Result<Vec<HetGraph>> {
    samples
        .iter()
        .map(|s| {
            let problem = dataset.problem(s)?;
            HetGraph::build(&problem, Some(&s.solution(&problem)))
        })
        .collect()
}

/// Normalizes with `stats` and lays the graphs out for `model`.
pub fn prepare(model: &RgcnModel, graphs: &[HetGraph], stats: &FeatureStats) -> Result<Vec<GraphInput>> {
    graphs
        .iter()
        .map(|g| GraphInput::new(&normalize_features(g, Some(stats))?.0, &model.config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_tallied_confusions() {
        // All correct.
        let m = Metrics::from_predictions(&[true, false, false], &[true, false, false]);
        assert_eq!((m.predicted_t, m.predicted_f, m.gt_t, m.accuracy), (1, 0, 1, 1.0));
        // One hit, one false alarm, one miss.
        let m = Metrics::from_predictions(
            &[true, true, false, false, false, false],
            &[true, false, true, false, false, false],
        );
        assert_eq!((m.predicted_t, m.predicted_f, m.gt_t), (1, 1, 2));
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
        // Everything predicted linked.
        let m = Metrics::from_predictions(&[true; 4], &[false, true, false, false]);
        assert_eq!((m.predicted_t, m.predicted_f, m.gt_t), (1, 3, 1));
        assert_eq!(m.accuracy, 0.25);
    }

    #[test]
    fn all_unlinked_baseline() {
        let gt = [true, false, false, true, false, false, false, false];
        let m = Metrics::from_predictions(&[false; 8], &gt);
        assert_eq!(m.predicted_t, 0);
        assert_eq!(m.predicted_f, 0);
        assert!((m.accuracy - (1.0 - 2.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn merge_pools_counts() {
        let a = Metrics::from_predictions(&[true, false], &[true, true]);
        let b = Metrics::from_predictions(&[false, false], &[false, false]);
        let m = a.merge(b);
        assert_eq!((m.correct, m.total, m.gt_t), (3, 4, 2));
        assert_eq!(m.accuracy, 0.75);
    }
}
