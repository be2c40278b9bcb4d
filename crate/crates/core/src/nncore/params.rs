use ndarray::{Array1, Array2};
use rand::Rng;

/// Borrowed view of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
    /// Weight matrices take L2 decay; biases and CRF scores do not.
    pub decay: bool,
}

pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
    pub decay: bool,
}

/// A fixed, ordered collection of named parameter tensors.
///
/// Gradients, optimizer moments and checkpoints all reuse the same type as
/// the parameters, so the visit order is the single source of layout.
pub trait ParamSet {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t.data);
        }
        out
    }

    /// Overwrites all parameters from a flat vector in visit order.
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.data.fill(value);
        }
    }

    /// `self += scale * other`; both must share a layout.
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        let src = other.tensors();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            debug_assert_eq!(dst.shape, src.shape);
            for (d, s) in dst.data.iter_mut().zip(src.data) {
                *d += scale * s;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Σ‖W‖² over decayed tensors.
    fn decay_sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .filter(|t| t.decay)
            .flat_map(|t| t.data.iter())
            .map(|x| x * x)
            .sum()
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

pub(crate) fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

pub(crate) fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

pub(crate) fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

pub(crate) fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

pub(crate) fn tensor2<'a>(prefix: &str, name: &str, a: &'a Array2<f64>, decay: bool) -> TensorRef<'a> {
    TensorRef {
        name: format!("{prefix}.{name}"),
        shape: a.shape().to_vec(),
        data: slice2(a),
        decay,
    }
}

pub(crate) fn tensor1<'a>(prefix: &str, name: &str, a: &'a Array1<f64>, decay: bool) -> TensorRef<'a> {
    TensorRef {
        name: format!("{prefix}.{name}"),
        shape: a.shape().to_vec(),
        data: slice1(a),
        decay,
    }
}

pub(crate) fn tensor2_mut<'a>(
    prefix: &str,
    name: &str,
    a: &'a mut Array2<f64>,
    decay: bool,
) -> TensorMut<'a> {
    TensorMut {
        name: format!("{prefix}.{name}"),
        shape: a.shape().to_vec(),
        data: slice2_mut(a),
        decay,
    }
}

pub(crate) fn tensor1_mut<'a>(
    prefix: &str,
    name: &str,
    a: &'a mut Array1<f64>,
    decay: bool,
) -> TensorMut<'a> {
    TensorMut {
        name: format!("{prefix}.{name}"),
        shape: a.shape().to_vec(),
        data: slice1_mut(a),
        decay,
    }
}

/// Glorot/Xavier uniform initialization for a `rows × cols` weight matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..=limit))
}

/// `out = w · x` for a row-major `w`.
pub(crate) fn matvec_into(w: &Array2<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), w.ncols());
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU feature was detected at runtime.
        return unsafe { matvec_avx2(slice2(w), w.ncols(), x, out) };
    }
    matvec_body(slice2(w), w.ncols(), x, out)
}

/// Row-blocked [`matvec_into`] over `n` vectors stored back to back in `x`
/// (`n × cols`), writing `n × rows` into `out`. Each weight row is loaded
/// once for all vectors; every output equals the single-vector result.
pub(crate) fn matvec_many(w: &Array2<f64>, x: &[f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU feature was detected at runtime.
        return unsafe { matvec_many_avx2(slice2(w), w.ncols(), x, out) };
    }
    matvec_many_body(slice2(w), w.ncols(), x, out)
}

/// `out_b += wᵀ · y_b` for `n` vectors: `y` is `n × rows`, `out` is `n × cols`.
pub(crate) fn matvec_t_acc_many(w: &Array2<f64>, y: &[f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU feature was detected at runtime.
        return unsafe { matvec_t_many_avx2(slice2(w), w.ncols(), y, out) };
    }
    matvec_t_many_body(slice2(w), w.ncols(), y, out)
}

// The AVX2 entry points only widen the registers LLVM may use. Lane
// structure and summation order are fixed by the bodies and `mul_add` is
// exactly rounded everywhere, so both paths produce identical bits.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn matvec_many_avx2(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    matvec_many_body(w, cols, x, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn matvec_t_many_avx2(w: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    matvec_t_many_body(w, cols, y, out)
}

#[inline(always)]
fn matvec_many_body(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    let rows = w.len() / cols;
    for (r, row) in w.chunks_exact(cols).enumerate() {
        for (b, xb) in x.chunks_exact(cols).enumerate() {
            out[b * rows + r] = dot(row, xb);
        }
    }
}

#[inline(always)]
fn matvec_t_many_body(w: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    let rows = w.len() / cols;
    for (r, row) in w.chunks_exact(cols).enumerate() {
        for (b, ob) in out.chunks_exact_mut(cols).enumerate() {
            let yi = y[b * rows + r];
            if yi != 0.0 {
                for (o, v) in ob.iter_mut().zip(row) {
                    *o = yi.mul_add(*v, *o);
                }
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn matvec_avx2(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    matvec_body(w, cols, x, out)
}

#[inline(always)]
fn matvec_body(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

const LANES: usize = 16;

// Independent accumulators let the compiler vectorize the reduction
// without reassociating it.
#[inline(always)]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..LANES {
            acc[k] = x[k].mul_add(y[k], acc[k]);
        }
    }
    let mut half = LANES / 2;
    while half > 0 {
        for k in 0..half {
            acc[k] += acc[k + half];
        }
        half /= 2;
    }
    let mut s = acc[0];
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}
