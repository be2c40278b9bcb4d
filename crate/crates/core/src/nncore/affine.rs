use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::params::{glorot_uniform, tensor1, tensor1_mut, tensor2, tensor2_mut, TensorMut, TensorRef};
use crate::corpus::NUM_LABELS;
use crate::error::{Error, Result};

/// Output projection `logits = W h + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineParams {
    /// `out × in`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl AffineParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        AffineParams {
            w: Array2::zeros((output_dim, input_dim)),
            b: Array1::zeros(output_dim),
        }
    }

    /// Label head with one row per situation entity type.
    pub fn init_labels<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        AffineParams {
            w: glorot_uniform(NUM_LABELS, input_dim, rng),
            b: Array1::zeros(NUM_LABELS),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Rows of `h` are inputs; rows of the result are logits.
    pub fn forward(&self, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if h.ncols() != self.input_dim() {
            return Err(Error::Shape {
                op: "affine forward",
                expected: self.input_dim(),
                actual: h.ncols(),
            });
        }
        let mut out = h.dot(&self.w.t());
        out += &self.b;
        Ok(out)
    }

    pub fn backward(
        &self,
        h: ArrayView2<'_, f64>,
        dlogits: ArrayView2<'_, f64>,
        grad: &mut AffineParams,
    ) -> Result<Array2<f64>> {
        if h.nrows() != dlogits.nrows() || dlogits.ncols() != self.output_dim() {
            return Err(Error::Shape {
                op: "affine backward",
                expected: h.nrows(),
                actual: dlogits.nrows(),
            });
        }
        general_mat_mul(1.0, &dlogits.t(), &h, 1.0, &mut grad.w);
        grad.b += &dlogits.sum_axis(Axis(0));
        Ok(dlogits.dot(&self.w))
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str) -> Vec<TensorRef<'a>> {
        vec![
            tensor2(prefix, "w", &self.w, true),
            tensor1(prefix, "b", &self.b, false),
        ]
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str) -> Vec<TensorMut<'a>> {
        vec![
            tensor2_mut(prefix, "w", &mut self.w, true),
            tensor1_mut(prefix, "b", &mut self.b, false),
        ]
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut e = logits.mapv(|x| (x - m).exp());
    let z = e.sum();
    e /= z;
    e
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Probability vector for one clause representation.
pub fn affine_softmax(p: &AffineParams, h: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let logits = p.forward(h.insert_axis(Axis(0)))?;
    Ok(softmax(logits.row(0)))
}

/// Cross-entropy of `softmax(logits)` against `target`, with its gradient
/// `probabilities − one_hot(target)`.
pub fn softmax_cross_entropy(logits: ArrayView1<'_, f64>, target: usize) -> (f64, Array1<f64>) {
    let lse = log_sum_exp(logits.iter().copied());
    let loss = lse - logits[target];
    let mut grad = logits.mapv(|x| (x - lse).exp());
    grad[target] -= 1.0;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::{central_difference, max_relative_error, EPSILON};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_uniform() {
        let p = AffineParams::zeros(4, NUM_LABELS);
        let probs = affine_softmax(&p, array![1.0, -2.0, 3.0, 0.5].view()).unwrap();
        for &x in probs.iter() {
            assert!((x - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_bias_dominates() {
        let mut p = AffineParams::zeros(2, NUM_LABELS);
        p.b[0] = 10.0;
        let probs = affine_softmax(&p, array![0.3, 0.2].view()).unwrap();
        // e^10 / (e^10 + 6) evaluated analytically.
        let expected = 10f64.exp() / (10f64.exp() + 6.0);
        assert!((probs[0] - expected).abs() < 1e-15);
        assert!(probs[0] > 0.999);
        assert!((probs.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let logits = array![0.5, -1.0, 2.0, 700.0, 699.0, -3.0, 1.0];
        let a = softmax(logits.view());
        let b = softmax((&logits + 123.4).view());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
            assert!(*x >= 0.0);
        }
        assert!(a.iter().all(|x| x.is_finite()));
        assert!((a.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_identity() {
        let logits = array![0.1, 0.7, -0.3];
        let (loss, grad) = softmax_cross_entropy(logits.view(), 1);
        let probs = softmax(logits.view());
        assert!((loss + probs[1].ln()).abs() < 1e-14);
        let mut expected = probs.clone();
        expected[1] -= 1.0;
        for (g, e) in grad.iter().zip(expected.iter()) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn affine_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let p = AffineParams {
                w: glorot_uniform(NUM_LABELS, 5, &mut rng),
                b: Array1::from_shape_simple_fn(NUM_LABELS, || rng.gen_range(-1.0..1.0)),
            };
            let h = Array2::from_shape_simple_fn((3, 5), || rng.gen_range(-1.0..1.0));
            let targets = [0usize, 4, 6];
            let loss = |p: &AffineParams, h: &Array2<f64>| {
                let logits = p.forward(h.view()).unwrap();
                targets
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| softmax_cross_entropy(logits.row(i), t).0)
                    .sum::<f64>()
            };
            let logits = p.forward(h.view()).unwrap();
            let mut dlogits = Array2::zeros(logits.dim());
            for (i, &t) in targets.iter().enumerate() {
                dlogits.row_mut(i).assign(&softmax_cross_entropy(logits.row(i), t).1);
            }
            let mut g = AffineParams::zeros(5, NUM_LABELS);
            let dh = p.backward(h.view(), dlogits.view(), &mut g).unwrap();

            let wflat: Vec<f64> = p.w.iter().copied().collect();
            let numeric = central_difference(&wflat, EPSILON, |v| {
                let mut q = p.clone();
                q.w = Array2::from_shape_vec(p.w.dim(), v.to_vec()).unwrap();
                loss(&q, &h)
            });
            assert!(max_relative_error(g.w.as_slice().unwrap(), &numeric) < 1e-4);
            let numeric_b = central_difference(p.b.as_slice().unwrap(), EPSILON, |v| {
                let mut q = p.clone();
                q.b = Array1::from(v.to_vec());
                loss(&q, &h)
            });
            assert!(max_relative_error(g.b.as_slice().unwrap(), &numeric_b) < 1e-4);
            let hflat: Vec<f64> = h.iter().copied().collect();
            let numeric_h = central_difference(&hflat, EPSILON, |v| {
                loss(&p, &Array2::from_shape_vec((3, 5), v.to_vec()).unwrap())
            });
            assert!(max_relative_error(dh.as_slice().unwrap(), &numeric_h) < 1e-4);
        }
    }
}
