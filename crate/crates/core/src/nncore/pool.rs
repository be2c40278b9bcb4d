use ndarray::{Array2, ArrayView2};

use crate::embed::Span;
use crate::error::{Error, Result};

/// Argmax rows chosen in the forward pass, one per output component.
#[derive(Clone, Debug, Default)]
pub struct PoolTape {
    rows: usize,
    argmax: Array2<usize>,
}

/// Componentwise max over the rows of each span.
///
/// Rows with `mask[t] == true` are excluded; a span whose rows are all
/// masked falls back to the unmasked max. Ties resolve to the first row.
pub fn span_max_pool(
    h: ArrayView2<'_, f64>,
    spans: &[Span],
    mask: Option<&[bool]>,
) -> Result<(Array2<f64>, PoolTape)> {
    let (len, k) = h.dim();
    if let Some(m) = mask {
        if m.len() != len {
            return Err(Error::Shape {
                op: "span_max_pool mask",
                expected: len,
                actual: m.len(),
            });
        }
    }
    let mut out = Array2::zeros((spans.len(), k));
    let mut argmax = Array2::zeros((spans.len(), k));
    for (i, &(start, end)) in spans.iter().enumerate() {
        if start >= end || end > len {
            return Err(Error::Span { start, end, len });
        }
        let keep: Vec<usize> = match mask {
            Some(m) if (start..end).any(|t| !m[t]) => (start..end).filter(|&t| !m[t]).collect(),
            _ => (start..end).collect(),
        };
        for j in 0..k {
            let mut best = keep[0];
            for &t in &keep[1..] {
                if h[[t, j]] > h[[best, j]] {
                    best = t;
                }
            }
            out[[i, j]] = h[[best, j]];
            argmax[[i, j]] = best;
        }
    }
    Ok((out, PoolTape { rows: len, argmax }))
}

/// Routes each output gradient to its argmax row; every other row gets 0.
pub fn span_max_pool_backward(tape: &PoolTape, dout: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if tape.rows == 0 {
        return Err(Error::NoTape);
    }
    if dout.dim() != tape.argmax.dim() {
        return Err(Error::Shape {
            op: "span_max_pool backward",
            expected: tape.argmax.nrows(),
            actual: dout.nrows(),
        });
    }
    let k = dout.ncols();
    let mut dh = Array2::zeros((tape.rows, k));
    for ((i, j), &t) in tape.argmax.indexed_iter() {
        dh[[t, j]] += dout[[i, j]];
    }
    Ok(dh)
}
