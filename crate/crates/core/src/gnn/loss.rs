//! Focal loss over softmax edge logits.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FocalLoss {
    pub gamma: f64,
    /// Per-class weight.
    pub alpha: Vec<f64>,
}

impl FocalLoss {
    pub fn new(gamma: f64, alpha: Vec<f64>) -> Self {
        FocalLoss { gamma, alpha }
    }

    /// Plain cross-entropy: `gamma = 0`, unit weights.
    pub fn cross_entropy(classes: usize) -> Self {
        FocalLoss::new(0.0, vec![1.0; classes])
    }

    /// `alpha_c = total / (classes * count_c)`; classes absent from
    /// `targets` get weight 1.
    pub fn inverse_frequency(gamma: f64, classes: usize, targets: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = vec![0u64; classes];
        for t in targets {
            counts[t] += 1;
        }
        let total: u64 = counts.iter().sum();
        let alpha = counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    1.0
                } else {
                    total as f64 / (classes as f64 * c as f64)
                }
            })
            .collect();
        FocalLoss::new(gamma, alpha)
    }

    /// Summed loss and its gradient w.r.t. `logits`.
    pub fn sum_and_grad(&self, logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if logits.nrows() != labels.len() || logits.ncols() != self.alpha.len() {
            return Err(Error::Dimension(format!(
                "logits {:?} vs {} labels and {} classes",
                logits.dim(),
                labels.len(),
                self.alpha.len()
            )));
        }
        let mut grad = Array2::zeros(logits.raw_dim());
        let mut total = 0.0;
        for (e, &y) in labels.iter().enumerate() {
            if y >= self.alpha.len() {
                return Err(Error::InvalidArgument(format!("label {y} out of range")));
            }
            let row = logits.row(e);
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let log_z = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            let log_pt = row[y] - log_z;
            let pt = log_pt.exp();
            let q = 1.0 - pt;
            let alpha = self.alpha[y];
            let focal = q.powf(self.gamma);
            total += -alpha * focal * log_pt;
            // dL/dz_c = alpha * (gamma q^(gamma-1) pt log pt - q^gamma) (delta_cy - p_c)
            let slope = if self.gamma == 0.0 || q == 0.0 {
                0.0
            } else {
                self.gamma * q.powf(self.gamma - 1.0) * pt * log_pt
            };
            let k = alpha * (slope - focal);
            for (c, &z) in row.iter().enumerate() {
                let p = (z - log_z).exp();
                let delta = if c == y { 1.0 } else { 0.0 };
                grad[[e, c]] = k * (delta - p);
            }
        }
        Ok((total, grad))
    }

    /// Mean loss over edges and its gradient.
    pub fn mean_and_grad(&self, logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
        let (sum, mut grad) = self.sum_and_grad(logits, labels)?;
        let n = labels.len() as f64;
        grad.mapv_inplace(|g| g / n);
        Ok((sum / n, grad))
    }
}

/// Row-wise softmax.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn zero_logits_gamma_two() {
        let l = FocalLoss::new(2.0, vec![1.0, 1.0]);
        let (v, _) = l.mean_and_grad(array![[0.0, 0.0]].view(), &[1]).unwrap();
        assert_abs_diff_eq!(v, 0.25 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.1733, epsilon = 1e-4);
    }

    #[test]
    fn confident_prediction_has_no_loss() {
        let l = FocalLoss::new(2.0, vec![1.0, 1.0]);
        let (v, g) = l.mean_and_grad(array![[-40.0, 40.0]].view(), &[1]).unwrap();
        assert!(v < 1e-30);
        assert!(g.iter().all(|x| x.abs() < 1e-30));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let l = FocalLoss::new(1.5, vec![0.7, 2.0, 1.1]);
        let z = array![[0.3, -1.2, 0.8], [2.0, 0.1, -0.4]];
        let labels = [1, 0];
        let (_, g) = l.sum_and_grad(z.view(), &labels).unwrap();
        let eps = 1e-6;
        for e in 0..2 {
            for c in 0..3 {
                let mut up = z.clone();
                up[[e, c]] += eps;
                let mut down = z.clone();
                down[[e, c]] -= eps;
                let num = (l.sum_and_grad(up.view(), &labels).unwrap().0
                    - l.sum_and_grad(down.view(), &labels).unwrap().0)
                    / (2.0 * eps);
                assert_abs_diff_eq!(g[[e, c]], num, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn inverse_frequency_weights() {
        let l = FocalLoss::inverse_frequency(2.0, 2, [0, 0, 0, 1]);
        assert_abs_diff_eq!(l.alpha[0], 4.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.alpha[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn errors() {
        let l = FocalLoss::cross_entropy(2);
        assert!(l.sum_and_grad(Array2::zeros((0, 2)).view(), &[]).is_err());
        assert!(l.sum_and_grad(Array2::zeros((1, 3)).view(), &[0]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(array![[1.0, 2.0, 3.0], [-5.0, 0.0, 700.0]].view());
        for row in p.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }
}
