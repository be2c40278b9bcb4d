use crate::nncore::ParamSet;

/// Adam with bias correction. Moments share the parameter layout.
#[derive(Clone, Debug)]
pub struct Adam<P> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    m: P,
    v: P,
}

impl<P: ParamSet + Clone> Adam<P> {
    pub fn new(params: &P, learning_rate: f64) -> Self {
        let mut zeros = params.clone();
        zeros.fill(0.0);
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut P, grad: &P) {
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let grads = grad.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for (((pi, &gi), mi), vi) in p.data.iter_mut().zip(g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::AffineParams;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr · g/|g| per component.
        let mut p = AffineParams::zeros(2, 3);
        let mut g = p.clone();
        g.w[[0, 0]] = 4.0;
        g.b[1] = -0.01;
        let mut opt = Adam::new(&p, 0.001);
        opt.step(&mut p, &g);
        assert!((p.w[[0, 0]] + 0.001).abs() < 1e-9);
        assert!((p.b[1] - 0.001).abs() < 1e-6);
        assert_eq!(p.w[[1, 1]], 0.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = AffineParams::zeros(1, 1);
        p.w[[0, 0]] = 3.0;
        let mut opt = Adam::new(&p, 0.05);
        for _ in 0..2000 {
            let mut g = p.clone();
            g.w[[0, 0]] = 2.0 * (p.w[[0, 0]] - 1.0);
            g.b[0] = 0.0;
            opt.step(&mut p, &g);
        }
        assert!((p.w[[0, 0]] - 1.0).abs() < 1e-3);
    }
}
