use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Inference,
}

/// Inverted dropout: survivors are scaled by `1 / (1 − rate)` at train
/// time so inference is the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub mode: Mode,
}

/// Per-element scale factors (0 or `1/(1−rate)`); `None` for identity.
#[derive(Clone, Debug, Default)]
pub struct DropoutTape {
    scale: Option<Array2<f64>>,
}

impl DropoutSpec {
    pub fn new(rate: f64, mode: Mode) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        Ok(DropoutSpec { rate, mode })
    }

    pub fn inference() -> Self {
        DropoutSpec {
            rate: 0.0,
            mode: Mode::Inference,
        }
    }

    fn active(&self) -> bool {
        self.mode == Mode::Train && self.rate > 0.0
    }

    pub fn apply<R: Rng + ?Sized>(&self, x: ArrayView2<'_, f64>, rng: &mut R) -> (Array2<f64>, DropoutTape) {
        if !self.active() {
            return (x.to_owned(), DropoutTape { scale: None });
        }
        let keep = 1.0 / (1.0 - self.rate);
        let scale = Array2::from_shape_simple_fn(x.dim(), || {
            if rng.gen::<f64>() < self.rate {
                0.0
            } else {
                keep
            }
        });
        (&x * &scale, DropoutTape { scale: Some(scale) })
    }
}

pub fn dropout_backward(tape: &DropoutTape, dy: ArrayView2<'_, f64>) -> Array2<f64> {
    match &tape.scale {
        Some(s) => &dy * s,
        None => dy.to_owned(),
    }
}
