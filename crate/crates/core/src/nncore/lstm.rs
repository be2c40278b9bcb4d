//! LSTM with forget gate (no peepholes) and its bidirectional wrapper.
//!
//! Gate rows are stacked as `[input; forget; output; candidate]`, each block
//! `hidden` rows tall:
//!
//! ```text
//! z = W_x x + W_h h_prev + b
//! i = σ(z_i)  f = σ(z_f)  o = σ(z_o)  g = tanh(z_g)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{glorot_uniform, matvec_into, matvec_many, matvec_t_acc_many, tensor1, tensor1_mut, tensor2, tensor2_mut, TensorMut, TensorRef};
use crate::error::{Error, Result};

pub const FORGET_BIAS: f64 = 1.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4H × D`
    pub w_x: Array2<f64>,
    /// `4H × H`
    pub w_h: Array2<f64>,
    /// `4H`
    pub b: Array1<f64>,
}

/// Activations of one direction over a sequence, indexed by position.
#[derive(Clone, Debug, Default)]
pub struct LstmTape {
    xs: Array2<f64>,
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
    reverse: bool,
}

impl LstmTape {
    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hidden_states(&self) -> &Array2<f64> {
        &self.h
    }
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: Array2::zeros((4 * hidden, input_dim)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    /// Glorot-uniform weights, zero biases except the forget gate at 1.0.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut b = Array1::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(FORGET_BIAS);
        LstmParams {
            w_x: glorot_uniform(4 * hidden, input_dim, rng),
            w_h: glorot_uniform(4 * hidden, hidden, rng),
            b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.ncols()
    }

    /// A single cell update.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let hd = self.hidden_dim();
        check("lstm_cell_step input", self.input_dim(), x.len())?;
        check("lstm_cell_step h_prev", hd, h_prev.len())?;
        check("lstm_cell_step c_prev", hd, c_prev.len())?;
        let mut z = vec![0.0; 4 * hd];
        let mut zh = vec![0.0; 4 * hd];
        matvec_into(&self.w_x, x, &mut z);
        matvec_into(&self.w_h, h_prev, &mut zh);
        for ((a, b), bias) in z.iter_mut().zip(&zh).zip(self.b.iter()) {
            *a += b + bias;
        }
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        for j in 0..hd {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hd + j]);
            let o = sigmoid(z[2 * hd + j]);
            let g = z[3 * hd + j].tanh();
            c[j] = f * c_prev[j] + i * g;
            h[j] = o * c[j].tanh();
        }
        Ok((h, c))
    }

    /// Runs the cell over `xs` (rows are time steps) from zero state. With
    /// `reverse` the sequence is read right to left; outputs stay indexed by
    /// input position.
    pub fn forward(&self, xs: ArrayView2<'_, f64>, reverse: bool) -> Result<(Array2<f64>, LstmTape)> {
        Ok(self.forward_batch(&[xs], reverse)?.pop().expect("one sequence"))
    }

    /// Independent forwards over several sequences, advanced in lockstep so
    /// each recurrent weight row is read once per step. Results are
    /// identical to calling [`forward`](Self::forward) on each sequence.
    pub fn forward_batch(&self, seqs: &[ArrayView2<'_, f64>], reverse: bool) -> Result<Vec<(Array2<f64>, LstmTape)>> {
        let hd = self.hidden_dim();
        let mut pres = Vec::with_capacity(seqs.len());
        for xs in seqs {
            check("lstm forward", self.input_dim(), xs.ncols())?;
            let mut pre = xs.dot(&self.w_x.t());
            pre += &self.b;
            pres.push(pre);
        }
        let lens: Vec<usize> = seqs.iter().map(|x| x.nrows()).collect();
        let mut tapes: Vec<LstmTape> = seqs
            .iter()
            .map(|xs| LstmTape {
                xs: xs.to_owned(),
                gates: Array2::zeros((xs.nrows(), 4 * hd)),
                c: Array2::zeros((xs.nrows(), hd)),
                tanh_c: Array2::zeros((xs.nrows(), hd)),
                h: Array2::zeros((xs.nrows(), hd)),
                reverse,
            })
            .collect();
        let n = seqs.len();
        let mut h_prev = vec![0.0; n * hd];
        let mut c_prev = vec![0.0; n * hd];
        let mut active: Vec<usize> = Vec::with_capacity(n);
        let mut hin = Vec::with_capacity(n * hd);
        let mut zh = vec![0.0; n * 4 * hd];
        let max_len = lens.iter().copied().max().unwrap_or(0);
        for k in 0..max_len {
            active.clear();
            active.extend((0..n).filter(|&b| lens[b] > k));
            hin.clear();
            for &b in &active {
                hin.extend_from_slice(&h_prev[b * hd..(b + 1) * hd]);
            }
            let zh = &mut zh[..active.len() * 4 * hd];
            matvec_many(&self.w_h, &hin, zh);
            for (a, &b) in active.iter().enumerate() {
                let t = if reverse { lens[b] - 1 - k } else { k };
                let zh = &zh[a * 4 * hd..(a + 1) * 4 * hd];
                let z = pres[b].row(t);
                let tape = &mut tapes[b];
                let hp = &mut h_prev[b * hd..(b + 1) * hd];
                let cp = &mut c_prev[b * hd..(b + 1) * hd];
                let mut grow = tape.gates.row_mut(t);
                for j in 0..hd {
                    let i = sigmoid(z[j] + zh[j]);
                    let f = sigmoid(z[hd + j] + zh[hd + j]);
                    let o = sigmoid(z[2 * hd + j] + zh[2 * hd + j]);
                    let g = (z[3 * hd + j] + zh[3 * hd + j]).tanh();
                    grow[j] = i;
                    grow[hd + j] = f;
                    grow[2 * hd + j] = o;
                    grow[3 * hd + j] = g;
                    let cj = f * cp[j] + i * g;
                    let tc = cj.tanh();
                    tape.c[[t, j]] = cj;
                    tape.tanh_c[[t, j]] = tc;
                    tape.h[[t, j]] = o * tc;
                    cp[j] = cj;
                    hp[j] = o * tc;
                }
            }
        }
        Ok(tapes.into_iter().map(|t| (t.h.clone(), t)).collect())
    }

    /// Backpropagates `dh` (gradient w.r.t. every output row) through the
    /// recorded pass, accumulating into `grad` and returning the input
    /// gradient.
    pub fn backward(&self, tape: &LstmTape, dh: ArrayView2<'_, f64>, grad: &mut LstmParams) -> Result<Array2<f64>> {
        let mut dx = self.backward_batch(&[tape], &[dh], grad, true)?;
        Ok(dx.pop().flatten().expect("input gradient requested"))
    }

    /// Like [`backward`](Self::backward) but skips the input gradient.
    pub fn backward_params(&self, tape: &LstmTape, dh: ArrayView2<'_, f64>, grad: &mut LstmParams) -> Result<()> {
        self.backward_batch(&[tape], &[dh], grad, false).map(|_| ())
    }

    /// Lockstep backward over several tapes. Parameter gradients are added
    /// sequence by sequence in the given order, matching repeated calls to
    /// [`backward`](Self::backward).
    pub fn backward_batch(
        &self,
        tapes: &[&LstmTape],
        dhs: &[ArrayView2<'_, f64>],
        grad: &mut LstmParams,
        want_dx: bool,
    ) -> Result<Vec<Option<Array2<f64>>>> {
        let hd = self.hidden_dim();
        check("lstm backward batch", tapes.len(), dhs.len())?;
        for (tape, dh) in tapes.iter().zip(dhs) {
            if tape.is_empty() {
                return Err(Error::NoTape);
            }
            check("lstm backward rows", tape.len(), dh.nrows())?;
            check("lstm backward cols", hd, dh.ncols())?;
        }
        let n = tapes.len();
        let lens: Vec<usize> = tapes.iter().map(|t| t.len()).collect();
        let mut dzs: Vec<Array2<f64>> = lens.iter().map(|&l| Array2::zeros((l, 4 * hd))).collect();
        let mut dh_next = vec![0.0; n * hd];
        let mut dc_next = vec![0.0; n * hd];
        let mut active: Vec<usize> = Vec::with_capacity(n);
        let mut dz_steps = vec![0.0; n * 4 * hd];
        let mut dh_out = vec![0.0; n * hd];
        let max_len = lens.iter().copied().max().unwrap_or(0);
        // Step k is the k-th position in reading order.
        let pos = |b: usize, k: usize| if tapes[b].reverse { lens[b] - 1 - k } else { k };
        for k in (0..max_len).rev() {
            active.clear();
            active.extend((0..n).filter(|&b| lens[b] > k));
            for (a, &b) in active.iter().enumerate() {
                let tape = tapes[b];
                let t = pos(b, k);
                let prev = k.checked_sub(1).map(|p| pos(b, p));
                let g = tape.gates.row(t);
                let dz_t = &mut dz_steps[a * 4 * hd..(a + 1) * 4 * hd];
                let dhn = &dh_next[b * hd..(b + 1) * hd];
                let dcn = &mut dc_next[b * hd..(b + 1) * hd];
                for j in 0..hd {
                    let (i, f, o, gg) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                    let tc = tape.tanh_c[[t, j]];
                    let c_prev = prev.map_or(0.0, |p| tape.c[[p, j]]);
                    let dht = dhs[b][[t, j]] + dhn[j];
                    let dc = dht * o * (1.0 - tc * tc) + dcn[j];
                    dz_t[j] = dc * gg * i * (1.0 - i);
                    dz_t[hd + j] = dc * c_prev * f * (1.0 - f);
                    dz_t[2 * hd + j] = dht * tc * o * (1.0 - o);
                    dz_t[3 * hd + j] = dc * i * (1.0 - gg * gg);
                    dcn[j] = dc * f;
                }
                dzs[b]
                    .row_mut(t)
                    .as_slice_mut()
                    .expect("standard layout")
                    .copy_from_slice(dz_t);
            }
            let m = active.len();
            let out = &mut dh_out[..m * hd];
            out.fill(0.0);
            matvec_t_acc_many(&self.w_h, &dz_steps[..m * 4 * hd], out);
            for (a, &b) in active.iter().enumerate() {
                dh_next[b * hd..(b + 1) * hd].copy_from_slice(&out[a * hd..(a + 1) * hd]);
            }
        }
        let mut dxs = Vec::with_capacity(n);
        for (b, tape) in tapes.iter().enumerate() {
            let dz = &dzs[b];
            // Row t of the recurrent input is the state read before step t.
            let mut h_prev_rows = Array2::zeros((lens[b], hd));
            for k in 1..lens[b] {
                h_prev_rows.row_mut(pos(b, k)).assign(&tape.h.row(pos(b, k - 1)));
            }
            general_mat_mul(1.0, &dz.t(), &tape.xs, 1.0, &mut grad.w_x);
            general_mat_mul(1.0, &dz.t(), &h_prev_rows, 1.0, &mut grad.w_h);
            grad.b += &dz.sum_axis(Axis(0));
            dxs.push(want_dx.then(|| dz.dot(&self.w_x)));
        }
        Ok(dxs)
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str) -> Vec<TensorRef<'a>> {
        vec![
            tensor2(prefix, "w_x", &self.w_x, true),
            tensor2(prefix, "w_h", &self.w_h, true),
            tensor1(prefix, "b", &self.b, false),
        ]
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str) -> Vec<TensorMut<'a>> {
        vec![
            tensor2_mut(prefix, "w_x", &mut self.w_x, true),
            tensor2_mut(prefix, "w_h", &mut self.w_h, true),
            tensor1_mut(prefix, "b", &mut self.b, false),
        ]
    }
}

fn check(op: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { op, expected, actual })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

#[derive(Clone, Debug, Default)]
pub struct BiLstmTape {
    fwd: LstmTape,
    bwd: LstmTape,
}

impl BiLstmTape {
    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }
}

impl BiLstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        BiLstmParams {
            fwd: LstmParams::zeros(input_dim, hidden),
            bwd: LstmParams::zeros(input_dim, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        BiLstmParams {
            fwd: LstmParams::init(input_dim, hidden, rng),
            bwd: LstmParams::init(input_dim, hidden, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.fwd.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim()
    }

    /// Row `t` of the output is `[h→_t, h←_t]`.
    pub fn forward(&self, xs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, BiLstmTape)> {
        Ok(self.forward_batch(&[xs])?.pop().expect("one sequence"))
    }

    pub fn forward_batch(&self, seqs: &[ArrayView2<'_, f64>]) -> Result<Vec<(Array2<f64>, BiLstmTape)>> {
        if seqs.iter().any(|x| x.nrows() == 0) {
            return Err(Error::Shape {
                op: "bilstm forward (sequence length)",
                expected: 1,
                actual: 0,
            });
        }
        let fwd = self.fwd.forward_batch(seqs, false)?;
        let bwd = self.bwd.forward_batch(seqs, true)?;
        let hd = self.hidden_dim();
        Ok(fwd
            .into_iter()
            .zip(bwd)
            .map(|((hf, fwd), (hb, bwd))| {
                let mut out = Array2::zeros((hf.nrows(), 2 * hd));
                out.slice_mut(s![.., ..hd]).assign(&hf);
                out.slice_mut(s![.., hd..]).assign(&hb);
                (out, BiLstmTape { fwd, bwd })
            })
            .collect())
    }

    pub fn backward(&self, tape: &BiLstmTape, dout: ArrayView2<'_, f64>, grad: &mut BiLstmParams) -> Result<Array2<f64>> {
        let mut dx = self.backward_batch(&[tape], &[dout], grad, true)?;
        Ok(dx.pop().flatten().expect("input gradient requested"))
    }

    pub fn backward_params(&self, tape: &BiLstmTape, dout: ArrayView2<'_, f64>, grad: &mut BiLstmParams) -> Result<()> {
        self.backward_batch(&[tape], &[dout], grad, false).map(|_| ())
    }

    pub fn backward_batch(
        &self,
        tapes: &[&BiLstmTape],
        douts: &[ArrayView2<'_, f64>],
        grad: &mut BiLstmParams,
        want_dx: bool,
    ) -> Result<Vec<Option<Array2<f64>>>> {
        for d in douts {
            check("bilstm backward cols", self.output_dim(), d.ncols())?;
        }
        let hd = self.hidden_dim();
        let f_tapes: Vec<&LstmTape> = tapes.iter().map(|t| &t.fwd).collect();
        let b_tapes: Vec<&LstmTape> = tapes.iter().map(|t| &t.bwd).collect();
        let f_d: Vec<_> = douts.iter().map(|d| d.slice(s![.., ..hd])).collect();
        let b_d: Vec<_> = douts.iter().map(|d| d.slice(s![.., hd..])).collect();
        let dx_f = self.fwd.backward_batch(&f_tapes, &f_d, &mut grad.fwd, want_dx)?;
        let dx_b = self.bwd.backward_batch(&b_tapes, &b_d, &mut grad.bwd, want_dx)?;
        Ok(dx_f
            .into_iter()
            .zip(dx_b)
            .map(|(a, b)| match (a, b) {
                (Some(mut a), Some(b)) => {
                    a += &b;
                    Some(a)
                }
                _ => None,
            })
            .collect())
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str) -> Vec<TensorRef<'a>> {
        let mut v = self.fwd.tensors(&format!("{prefix}.fwd"));
        v.extend(self.bwd.tensors(&format!("{prefix}.bwd")));
        v
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str) -> Vec<TensorMut<'a>> {
        let mut v = self.fwd.tensors_mut(&format!("{prefix}.fwd"));
        v.extend(self.bwd.tensors_mut(&format!("{prefix}.bwd")));
        v
    }
}
