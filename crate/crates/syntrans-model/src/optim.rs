//! Adaptive-moment optimizer with decoupled weight decay and the two
//! learning-rate schedules the trainer uses: constant (fine-tuning) and
//! inverse-square-root decay (pre-training).

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// lr(t) = lr * sqrt(plateau / max(t, plateau)): flat for the first
    /// `plateau` steps, then 1/sqrt(t) decay.
    InverseSqrt { lr: f64, plateau: u64 },
}

impl LrSchedule {
    pub fn at(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::InverseSqrt { lr, plateau } => {
                let plateau = plateau.max(1);
                lr * ((plateau as f64) / (step.max(plateau) as f64)).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: IndexMap<String, Tensor<F>>,
    v: IndexMap<String, Tensor<F>>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(schedule: LrSchedule, weight_decay: f64) -> Self {
        AdamW {
            schedule,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: IndexMap::new(),
            v: IndexMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        self.schedule.at(self.step.max(1))
    }

    /// One update over every parameter, in parameter-map order.
    pub fn apply(&mut self, params: &mut IndexMap<String, Tensor<F>>, grads: &IndexMap<String, Tensor<F>>) {
        self.step += 1;
        let lr = self.schedule.at(self.step);
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one_minus_b1 = F::from_f64(1.0 - self.beta1);
        let one_minus_b2 = F::from_f64(1.0 - self.beta2);
        let bc1 = F::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let bc2 = F::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let eps = F::from_f64(self.eps);
        let lr_f = F::from_f64(lr);
        let wd = F::from_f64(self.weight_decay);

        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            for ((pv, &gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = b1 * *mv + one_minus_b1 * gv;
                *vv = b2 * *vv + one_minus_b2 * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr_f * (mhat / (vhat.sqrt() + eps) + wd * *pv);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_and_grads() -> (IndexMap<String, Tensor<f64>>, IndexMap<String, Tensor<f64>>) {
        let mut p = IndexMap::new();
        p.insert("w".to_string(), Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]));
        let mut g = IndexMap::new();
        g.insert("w".to_string(), Tensor::from_vec(&[3], vec![0.1, -0.2, 0.0]));
        (p, g)
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let (mut p, g) = params_and_grads();
        let before = p.clone();
        let mut opt = AdamW::new(LrSchedule::Constant { lr: 0.0 }, 0.0);
        opt.apply(&mut p, &g);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_against_the_gradient_sign() {
        let (mut p, g) = params_and_grads();
        let mut opt = AdamW::new(LrSchedule::Constant { lr: 0.01 }, 0.0);
        opt.apply(&mut p, &g);
        let w = p["w"].data();
        assert!(w[0] < 1.0);
        assert!(w[1] > -2.0);
        assert_eq!(w[2], 0.5, "zero gradient and zero decay leave the value");
    }

    #[test]
    fn inverse_sqrt_schedule_decays_after_the_plateau() {
        let s = LrSchedule::InverseSqrt { lr: 1e-3, plateau: 100 };
        assert_eq!(s.at(1), 1e-3);
        assert_eq!(s.at(100), 1e-3);
        assert!((s.at(400) - 5e-4).abs() < 1e-12);
        assert!(s.at(10_000) < s.at(400));
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_gradient() {
        let (mut p, mut g) = params_and_grads();
        g.get_mut("w").unwrap().data_mut().fill(0.0);
        let mut opt = AdamW::new(LrSchedule::Constant { lr: 0.1 }, 0.01);
        opt.apply(&mut p, &g);
        let w = p["w"].data();
        assert!(w[0] < 1.0 && w[0] > 0.99);
        assert!(w[1] > -2.0 && w[1] < -1.99);
    }

    #[test]
    fn updates_are_deterministic() {
        let (mut p1, g) = params_and_grads();
        let mut p2 = p1.clone();
        let mut o1 = AdamW::new(LrSchedule::Constant { lr: 0.05 }, 0.001);
        let mut o2 = AdamW::new(LrSchedule::Constant { lr: 0.05 }, 0.001);
        for _ in 0..10 {
            o1.apply(&mut p1, &g);
            o2.apply(&mut p2, &g);
        }
        assert_eq!(p1, p2);
    }
}
