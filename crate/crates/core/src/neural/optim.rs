use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    RmsProp {
        lr: f64,
        rho: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn rmsprop(lr: f64) -> Self {
        Optimizer::RmsProp {
            lr,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Adam { lr, .. } | Optimizer::RmsProp { lr, .. } => lr,
        }
    }

    pub fn with_learning_rate(self, new_lr: f64) -> Self {
        match self {
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
                ..
            } => Optimizer::Adam {
                lr: new_lr,
                beta1,
                beta2,
                epsilon,
            },
            Optimizer::RmsProp { rho, epsilon, .. } => Optimizer::RmsProp {
                lr: new_lr,
                rho,
                epsilon,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(())
    }
}

/// First/second moment accumulators mirroring a network's parameter tensors.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new<N: Network>(net: &N) -> Self {
        let shapes: Vec<usize> = net.params().iter().map(|m| m.len()).collect();
        OptimizerState {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<N: Network>(
        &mut self,
        params: &mut N,
        grads: &N,
        optimizer: &Optimizer,
    ) -> Result<()> {
        let grads = grads.params();
        let mut params = params.params_mut();
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors, {} gradient tensors, {} accumulators",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(&grads).zip(&self.first) {
            if !p.same_shape(g) || p.len() != m.len() {
                return Err(Error::Shape("parameter/gradient shape mismatch".into()));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            let p = p.as_mut_slice();
            let g = g.as_slice();
            match *optimizer {
                Optimizer::Adam {
                    lr,
                    beta1,
                    beta2,
                    epsilon,
                } => {
                    let bc1 = 1.0 - beta1.powf(t);
                    let bc2 = 1.0 - beta2.powf(t);
                    for j in 0..p.len() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        p[j] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
                Optimizer::RmsProp { lr, rho, epsilon } => {
                    for j in 0..p.len() {
                        v[j] = rho * v[j] + (1.0 - rho) * g[j] * g[j];
                        p[j] -= lr * g[j] / (v[j].sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::matrix::Matrix;
    use crate::neural::network::{LossKind, Network};

    /// A bare parameter vector with loss `sum(w^2)`.
    #[derive(Clone, Debug)]
    struct Quadratic(Matrix);

    impl Network for Quadratic {
        type Example = ();
        fn head(&self) -> LossKind {
            LossKind::BinaryCE
        }
        fn params(&self) -> Vec<&Matrix> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Matrix> {
            vec![&mut self.0]
        }
        fn zeros_like(&self) -> Self {
            Quadratic(Matrix::zeros(self.0.rows(), self.0.cols()))
        }
        fn accumulate(&self, _: &(), grads: Option<&mut Self>) -> Result<(f64, usize)> {
            if let Some(g) = grads {
                for (gi, wi) in g.0.as_mut_slice().iter_mut().zip(self.0.as_slice()) {
                    *gi += 2.0 * wi;
                }
            }
            Ok((self.0.as_slice().iter().map(|w| w * w).sum(), 1))
        }
    }

    fn q(values: &[f64]) -> Quadratic {
        Quadratic(Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for opt in [Optimizer::adam(0.1), Optimizer::rmsprop(0.1)] {
            let mut p = q(&[1.0, -2.0]);
            let mut st = OptimizerState::new(&p);
            st.step(&mut p, &q(&[0.0, 0.0]), &opt).unwrap();
            assert_eq!(p.0.as_slice(), &[1.0, -2.0]);
            assert_eq!(st.steps(), 1);
        }
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut p = q(&[0.0, 0.0, 0.0]);
        let mut st = OptimizerState::new(&p);
        st.step(&mut p, &q(&[3.0, -0.02, 500.0]), &Optimizer::adam(0.01))
            .unwrap();
        for (w, s) in p.0.as_slice().iter().zip([-1.0, 1.0, -1.0]) {
            assert!((w - 0.01 * s).abs() < 1e-8, "{w}");
        }
    }

    #[test]
    fn adam_on_quadratic_decreases_monotonically() {
        // independent scalar simulation of ten Adam steps on f(w) = w^2
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
            expected.push(w);
        }

        let mut p = q(&[1.0]);
        let mut st = OptimizerState::new(&p);
        let mut prev = 1.0f64;
        for want in expected {
            let mut g = p.zeros_like();
            p.accumulate(&(), Some(&mut g)).unwrap();
            st.step(&mut p, &g, &Optimizer::adam(0.1)).unwrap();
            let w = p.0.get(0, 0);
            assert!((w - want).abs() < 1e-12);
            assert!(w.abs() < prev.abs());
            prev = w;
        }
    }

    #[test]
    fn rmsprop_matches_hand_update() {
        let mut p = q(&[1.0]);
        let mut st = OptimizerState::new(&p);
        st.step(&mut p, &q(&[2.0]), &Optimizer::rmsprop(0.001))
            .unwrap();
        let v = 0.1 * 4.0f64;
        assert!((p.0.get(0, 0) - (1.0 - 0.001 * 2.0 / (v.sqrt() + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = q(&[1.0, 2.0]);
        let mut st = OptimizerState::new(&p);
        assert!(matches!(
            st.step(&mut p, &q(&[1.0]), &Optimizer::adam(0.1)),
            Err(Error::Shape(_))
        ));
    }
}
