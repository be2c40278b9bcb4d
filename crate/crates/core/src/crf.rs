//! Linear-chain CRF over per-clause emission scores.
//!
//! The score of a label path `y` over `n` rows of emissions `e` is
//!
//! ```text
//! S[y_0] + Σ_i e[i][y_i] + Σ_i T[y_i][y_{i+1}] + E[y_{n-1}]
//! ```
//!
//! Label count is taken from the parameters, so the same code runs the
//! 7-label model and small test instances.

use ndarray::{Array1, Array2, ArrayView2};

use crate::corpus::NUM_LABELS;
use crate::error::{Error, Result};
use crate::nncore::{log_sum_exp, tensor1, tensor1_mut, tensor2, tensor2_mut, ParamSet, TensorMut, TensorRef};

#[derive(Clone, Debug, PartialEq)]
pub struct CrfParams {
    /// `transitions[[a, b]]`: score of label `b` following label `a`.
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

/// Posterior marginals from forward-backward.
#[derive(Clone, Debug)]
pub struct Marginals {
    pub log_partition: f64,
    /// `n × K`: P(y_i = a).
    pub unary: Array2<f64>,
    /// `n − 1` matrices of `K × K`: P(y_i = a, y_{i+1} = b).
    pub pairwise: Vec<Array2<f64>>,
}

/// Sequence negative log-likelihood with gradients for emissions and
/// parameters.
#[derive(Clone, Debug)]
pub struct CrfLoss {
    pub loss: f64,
    pub d_emissions: Array2<f64>,
    pub grad: CrfParams,
}

impl CrfParams {
    pub fn zeros(num_labels: usize) -> Self {
        CrfParams {
            transitions: Array2::zeros((num_labels, num_labels)),
            start: Array1::zeros(num_labels),
            end: Array1::zeros(num_labels),
        }
    }

    pub fn for_labels() -> Self {
        Self::zeros(NUM_LABELS)
    }

    pub fn num_labels(&self) -> usize {
        self.start.len()
    }

    fn check(&self, e: ArrayView2<'_, f64>) -> Result<()> {
        if e.nrows() == 0 {
            return Err(Error::Shape {
                op: "crf emissions (rows)",
                expected: 1,
                actual: 0,
            });
        }
        if e.ncols() != self.num_labels() {
            return Err(Error::Shape {
                op: "crf emissions (labels)",
                expected: self.num_labels(),
                actual: e.ncols(),
            });
        }
        Ok(())
    }

    pub fn path_score(&self, e: ArrayView2<'_, f64>, path: &[usize]) -> f64 {
        let n = path.len();
        let mut s = self.start[path[0]] + self.end[path[n - 1]];
        for (i, &y) in path.iter().enumerate() {
            s += e[[i, y]];
            if i + 1 < n {
                s += self.transitions[[y, path[i + 1]]];
            }
        }
        s
    }

    /// Forward log-potentials: `alpha[i][b]` sums all prefixes ending in `b`
    /// at row `i`, including `e[i][b]`.
    fn alphas(&self, e: ArrayView2<'_, f64>) -> Array2<f64> {
        let (n, k) = e.dim();
        let mut alpha = Array2::zeros((n, k));
        for b in 0..k {
            alpha[[0, b]] = self.start[b] + e[[0, b]];
        }
        for i in 1..n {
            for b in 0..k {
                let prev = (0..k).map(|a| alpha[[i - 1, a]] + self.transitions[[a, b]]);
                alpha[[i, b]] = e[[i, b]] + log_sum_exp(prev);
            }
        }
        alpha
    }

    /// Backward log-potentials: `beta[i][a]` sums all suffixes after row `i`
    /// given `y_i = a`, including the end score.
    fn betas(&self, e: ArrayView2<'_, f64>) -> Array2<f64> {
        let (n, k) = e.dim();
        let mut beta = Array2::zeros((n, k));
        for a in 0..k {
            beta[[n - 1, a]] = self.end[a];
        }
        for i in (0..n - 1).rev() {
            for a in 0..k {
                let next = (0..k).map(|b| self.transitions[[a, b]] + e[[i + 1, b]] + beta[[i + 1, b]]);
                beta[[i, a]] = log_sum_exp(next);
            }
        }
        beta
    }

    pub fn log_partition(&self, e: ArrayView2<'_, f64>) -> Result<f64> {
        self.check(e)?;
        let alpha = self.alphas(e);
        let last = alpha.nrows() - 1;
        Ok(log_sum_exp((0..self.num_labels()).map(|b| alpha[[last, b]] + self.end[b])))
    }

    pub fn marginals(&self, e: ArrayView2<'_, f64>) -> Result<Marginals> {
        self.check(e)?;
        let (n, k) = e.dim();
        let alpha = self.alphas(e);
        let beta = self.betas(e);
        let log_z = log_sum_exp((0..k).map(|b| alpha[[n - 1, b]] + self.end[b]));
        let unary = Array2::from_shape_fn((n, k), |(i, a)| (alpha[[i, a]] + beta[[i, a]] - log_z).exp());
        let pairwise = (0..n - 1)
            .map(|i| {
                Array2::from_shape_fn((k, k), |(a, b)| {
                    (alpha[[i, a]] + self.transitions[[a, b]] + e[[i + 1, b]] + beta[[i + 1, b]] - log_z).exp()
                })
            })
            .collect();
        Ok(Marginals {
            log_partition: log_z,
            unary,
            pairwise,
        })
    }

    /// `log Z − score(gold)`; gradients are expected counts minus gold counts.
    pub fn nll(&self, e: ArrayView2<'_, f64>, gold: &[usize]) -> Result<CrfLoss> {
        self.check(e)?;
        if gold.len() != e.nrows() {
            return Err(Error::LabelLength {
                expected: e.nrows(),
                actual: gold.len(),
            });
        }
        if let Some(&bad) = gold.iter().find(|&&y| y >= self.num_labels()) {
            return Err(Error::Shape {
                op: "crf gold label",
                expected: self.num_labels(),
                actual: bad,
            });
        }
        let m = self.marginals(e)?;
        let n = gold.len();
        let loss = (m.log_partition - self.path_score(e, gold)).max(0.0);
        let mut d_emissions = m.unary.clone();
        for (i, &y) in gold.iter().enumerate() {
            d_emissions[[i, y]] -= 1.0;
        }
        let mut grad = CrfParams::zeros(self.num_labels());
        grad.start.assign(&m.unary.row(0));
        grad.start[gold[0]] -= 1.0;
        grad.end.assign(&m.unary.row(n - 1));
        grad.end[gold[n - 1]] -= 1.0;
        for (i, p) in m.pairwise.iter().enumerate() {
            grad.transitions += p;
            grad.transitions[[gold[i], gold[i + 1]]] -= 1.0;
        }
        Ok(CrfLoss {
            loss,
            d_emissions,
            grad,
        })
    }

    /// Highest-scoring path and its score. Ties resolve to the lower label
    /// index, both at the final position and at every backpointer.
    pub fn viterbi(&self, e: ArrayView2<'_, f64>) -> Result<(Vec<usize>, f64)> {
        self.check(e)?;
        let (n, k) = e.dim();
        let mut delta = Array2::zeros((n, k));
        let mut back = Array2::<usize>::zeros((n, k));
        for b in 0..k {
            delta[[0, b]] = self.start[b] + e[[0, b]];
        }
        for i in 1..n {
            for b in 0..k {
                let mut best = 0;
                let mut best_score = delta[[i - 1, 0]] + self.transitions[[0, b]];
                for a in 1..k {
                    let s = delta[[i - 1, a]] + self.transitions[[a, b]];
                    if s > best_score {
                        best = a;
                        best_score = s;
                    }
                }
                delta[[i, b]] = best_score + e[[i, b]];
                back[[i, b]] = best;
            }
        }
        let mut last = 0;
        let mut best_score = delta[[n - 1, 0]] + self.end[0];
        for b in 1..k {
            let s = delta[[n - 1, b]] + self.end[b];
            if s > best_score {
                last = b;
                best_score = s;
            }
        }
        let mut path = vec![0; n];
        path[n - 1] = last;
        for i in (1..n).rev() {
            path[i - 1] = back[[i, path[i]]];
        }
        Ok((path, best_score))
    }

    pub(crate) fn tensors_prefixed<'a>(&'a self, prefix: &str) -> Vec<TensorRef<'a>> {
        vec![
            tensor2(prefix, "transitions", &self.transitions, false),
            tensor1(prefix, "start", &self.start, false),
            tensor1(prefix, "end", &self.end, false),
        ]
    }

    pub(crate) fn tensors_mut_prefixed<'a>(&'a mut self, prefix: &str) -> Vec<TensorMut<'a>> {
        vec![
            tensor2_mut(prefix, "transitions", &mut self.transitions, false),
            tensor1_mut(prefix, "start", &mut self.start, false),
            tensor1_mut(prefix, "end", &mut self.end, false),
        ]
    }
}

impl ParamSet for CrfParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        self.tensors_prefixed("crf")
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        self.tensors_mut_prefixed("crf")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::{central_difference, max_relative_error, EPSILON};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, k: usize, rng: &mut ChaCha8Rng) -> (CrfParams, Array2<f64>) {
        let mut u = || rng.gen_range(-2.0..2.0);
        let p = CrfParams {
            transitions: Array2::from_shape_simple_fn((k, k), &mut u),
            start: Array1::from_shape_simple_fn(k, &mut u),
            end: Array1::from_shape_simple_fn(k, &mut u),
        };
        let e = Array2::from_shape_simple_fn((n, k), &mut u);
        (p, e)
    }

    /// Every label sequence of length `n` over `k` labels.
    fn all_paths(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..k).map(move |y| {
                        let mut q = p.clone();
                        q.push(y);
                        q
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn single_row_zero_scores() {
        let p = CrfParams::zeros(2);
        let z = p.log_partition(Array2::zeros((1, 2)).view()).unwrap();
        assert!((z - 2f64.ln()).abs() < 1e-15);
        let p = CrfParams::for_labels();
        let z = p.log_partition(Array2::zeros((1, 7)).view()).unwrap();
        assert!((z - 7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn partition_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (p, e) = random(3, 4, &mut rng);
            let brute = log_sum_exp(all_paths(3, 4).iter().map(|y| p.path_score(e.view(), y)));
            assert!((p.log_partition(e.view()).unwrap() - brute).abs() < 1e-10);
        }
    }

    #[test]
    fn marginals_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (p, e) = random(2, 3, &mut rng);
            let paths = all_paths(2, 3);
            let z = log_sum_exp(paths.iter().map(|y| p.path_score(e.view(), y)));
            let mut unary = Array2::<f64>::zeros((2, 3));
            let mut pair = Array2::<f64>::zeros((3, 3));
            for y in &paths {
                let prob = (p.path_score(e.view(), y) - z).exp();
                unary[[0, y[0]]] += prob;
                unary[[1, y[1]]] += prob;
                pair[[y[0], y[1]]] += prob;
            }
            let m = p.marginals(e.view()).unwrap();
            for (a, b) in m.unary.iter().zip(unary.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in m.pairwise[0].iter().zip(pair.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn saturated_gold_has_tiny_loss() {
        let p = CrfParams::zeros(7);
        let gold = [0, 3, 3, 6];
        let mut e = Array2::zeros((4, 7));
        for (i, &y) in gold.iter().enumerate() {
            e[[i, y]] = 50.0;
        }
        let l = p.nll(e.view(), &gold).unwrap();
        assert!(l.loss >= 0.0 && l.loss < 1e-8);
    }

    #[test]
    fn length_mismatch() {
        let p = CrfParams::zeros(3);
        let err = p.nll(Array2::zeros((2, 3)).view(), &[0]).unwrap_err();
        assert!(matches!(err, Error::LabelLength { expected: 2, actual: 1 }));
    }

    #[test]
    fn nll_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (p, e) = random(4, 3, &mut rng);
            let gold: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
            let l = p.nll(e.view(), &gold).unwrap();
            let ef: Vec<f64> = e.iter().copied().collect();
            let num_e = central_difference(&ef, EPSILON, |v| {
                let e = Array2::from_shape_vec((4, 3), v.to_vec()).unwrap();
                p.nll(e.view(), &gold).unwrap().loss
            });
            assert!(max_relative_error(l.d_emissions.as_slice().unwrap(), &num_e) < 1e-4);
            let num_p = central_difference(&p.flatten(), EPSILON, |v| {
                let mut q = p.clone();
                q.assign_flat(v);
                q.nll(e.view(), &gold).unwrap().loss
            });
            assert!(max_relative_error(&l.grad.flatten(), &num_p) < 1e-4);
        }
    }

    #[test]
    fn viterbi_zero_transitions_is_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = CrfParams::zeros(5);
        let e = Array2::from_shape_simple_fn((6, 5), || rng.gen_range(-1.0..1.0));
        let (path, _) = p.viterbi(e.view()).unwrap();
        for (i, &y) in path.iter().enumerate() {
            let row = e.row(i);
            let best = (0..5).fold(0, |b, a| if row[a] > row[b] { a } else { b });
            assert_eq!(y, best);
        }
    }

    #[test]
    fn viterbi_single_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (p, e) = random(1, 4, &mut rng);
        let (path, score) = p.viterbi(e.view()).unwrap();
        let totals: Vec<f64> = (0..4).map(|b| p.start[b] + e[[0, b]] + p.end[b]).collect();
        let best = (0..4).fold(0, |b, a| if totals[a] > totals[b] { a } else { b });
        assert_eq!(path, vec![best]);
        assert!((score - totals[best]).abs() < 1e-12);
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let paths = all_paths(4, 5);
        for _ in 0..20 {
            let (p, e) = random(4, 5, &mut rng);
            let (path, score) = p.viterbi(e.view()).unwrap();
            let mut best = &paths[0];
            for y in &paths {
                if p.path_score(e.view(), y) > p.path_score(e.view(), best) {
                    best = y;
                }
            }
            assert_eq!(&path, best);
            assert!((score - p.path_score(e.view(), &path)).abs() < 1e-12);
        }
    }

    #[test]
    fn viterbi_ties_prefer_lower_index() {
        let p = CrfParams::zeros(3);
        let (path, _) = p.viterbi(Array2::zeros((3, 3)).view()).unwrap();
        assert_eq!(path, vec![0, 0, 0]);
    }

    #[test]
    fn emission_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (p, e) = random(5, 4, &mut rng);
        let shifted = &e + 3.5;
        let z0 = p.log_partition(e.view()).unwrap();
        let z1 = p.log_partition(shifted.view()).unwrap();
        assert!((z1 - z0 - 5.0 * 3.5).abs() < 1e-10);
        assert_eq!(p.viterbi(e.view()).unwrap().0, p.viterbi(shifted.view()).unwrap().0);
    }

    #[test]
    fn viterbi_beats_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (p, e) = random(8, 7, &mut rng);
        let (_, best) = p.viterbi(e.view()).unwrap();
        for _ in 0..1000 {
            let y: Vec<usize> = (0..8).map(|_| rng.gen_range(0..7)).collect();
            assert!(p.path_score(e.view(), &y) <= best + 1e-12);
        }
    }
}
