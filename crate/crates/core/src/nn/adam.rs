use serde::{Deserialize, Serialize};

use super::mlp::Parameters;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    /// Zero-initialized state shaped like `params`, with β1 = 0.9,
    /// β2 = 0.999, ε = 1e-8.
    pub fn new<P: Parameters + ?Sized>(params: &P, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn restore(
        &mut self,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
    ) -> Result<()> {
        let shapes_match =
            |a: &[Tensor], b: &[Tensor]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_shape(y));
        if !shapes_match(&m, &self.m) || !shapes_match(&v, &self.v) {
            return Err(Error::Dimension("optimizer state shapes differ".into()));
        }
        *self = Self {
            lr,
            beta1,
            beta2,
            eps,
            t,
            m,
            v,
        };
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Applies one update. Non-finite gradients leave everything untouched
    /// and return [`Error::NonFinite`].
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &[Tensor]) -> Result<()> {
        let mut targets = params.params_mut();
        if targets.len() != grads.len() || targets.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam over {} tensors with {} gradients and {} moment slots",
                targets.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for ((p, g), m) in targets.iter().zip(grads).zip(&self.m) {
            if !p.same_shape(g) || !p.same_shape(m) {
                return Err(Error::Dimension(format!(
                    "parameter {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient tensor #{bad}")));
        }

        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in targets
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<Tensor>);

    impl Parameters for Flat {
        fn params(&self) -> Vec<&Tensor> {
            self.0.iter().collect()
        }
        fn params_mut(&mut self) -> Vec<&mut Tensor> {
            self.0.iter_mut().collect()
        }
    }

    #[test]
    fn zero_gradient_changes_only_the_counter() {
        let mut p = Flat(vec![Tensor::vector(vec![1.0, -2.0, 3.0])]);
        let before = p.0.clone();
        let mut opt = Adam::new(&p, 1e-3);
        opt.step(&mut p, &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p.0, before);
        assert_eq!(opt.steps(), 1);
        assert!(opt.first_moments()[0].data().iter().all(|&v| v == 0.0));
        assert!(opt.second_moments()[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_closed_form() {
        let g = [0.5, -3.0, 1e-4];
        let mut p = Flat(vec![Tensor::vector(vec![0.0; 3])]);
        let mut opt = Adam::new(&p, 0.01);
        opt.step(&mut p, &[Tensor::vector(g.to_vec())]).unwrap();
        for (pv, gv) in p.0[0].data().iter().zip(g) {
            let expected = -0.01 * gv / (gv.abs() + 1e-8);
            assert!((pv - expected).abs() < 1e-15, "{pv} vs {expected}");
        }
    }

    #[test]
    fn nan_gradient_is_poisoned_update() {
        let mut p = Flat(vec![Tensor::vector(vec![1.0, 2.0])]);
        let before = p.0.clone();
        let mut opt = Adam::new(&p, 0.1);
        let err = opt.step(&mut p, &[Tensor::vector(vec![0.1, f64::NAN])]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p.0, before);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Flat(vec![Tensor::vector(vec![1.0, 2.0])]);
        let mut opt = Adam::new(&p, 0.1);
        assert!(opt.step(&mut p, &[Tensor::vector(vec![0.1])]).is_err());
    }

    /// Scalar Adam written out longhand.
    fn scalar_adam(x0: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        let mut trace = Vec::new();
        for t in 1..=steps {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
            trace.push(x);
        }
        trace
    }

    #[test]
    fn ten_steps_on_quadratic_match_scalar_oracle() {
        let oracle = scalar_adam(1.0, 0.1, 10);
        let mut p = Flat(vec![Tensor::vector(vec![1.0])]);
        let mut opt = Adam::new(&p, 0.1);
        let mut prev = 1.0f64;
        for expected in oracle {
            let g = Tensor::vector(vec![2.0 * p.0[0].data()[0]]);
            opt.step(&mut p, &[g]).unwrap();
            let x = p.0[0].data()[0];
            assert!(x.abs() < prev.abs());
            assert!((x - expected).abs() < 1e-10);
            prev = x;
        }
    }
}
