//! First-order optimizers. Gradients are of the log-likelihood, so every
//! update moves parameters along the gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 0.1,
            OptimizerKind::Adam => 1e-3,
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::InvalidConfig(format!(
                "unknown optimizer `{s}` (expected sgd or adam)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerConfig {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for Adam; unused by SGD.
#[derive(Debug, Clone, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
}

pub fn optimizer_step<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) {
    let lr = cfg.learning_rate;
    match cfg.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                assert_eq!(p.len(), g.len());
                for (x, d) in p.iter_mut().zip(g) {
                    *x += lr * d;
                }
            }
        }
        OptimizerKind::Adam => {
            let n = grads.num_parameters();
            if state.first_moment.len() != n {
                state.first_moment = vec![0.0; n];
                state.second_moment = vec![0.0; n];
            }
            state.step += 1;
            let bc1 = 1.0 - cfg.beta1.powf(state.step as f64);
            let bc2 = 1.0 - cfg.beta2.powf(state.step as f64);
            let mut k = 0;
            for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                assert_eq!(p.len(), g.len());
                for (x, &d) in p.iter_mut().zip(g) {
                    let m = &mut state.first_moment[k];
                    let v = &mut state.second_moment[k];
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * d;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * d * d;
                    *x += lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
                    k += 1;
                }
            }
        }
    }
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`.
pub fn clip_global_norm<P: Parameters + ?Sized>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Flat(Vec<f64>);

    impl Parameters for Flat {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn sgd_ascends() {
        let mut p = Flat(vec![0.0, 0.0]);
        let cfg = OptimizerConfig::new(OptimizerKind::Sgd, 0.1);
        optimizer_step(&mut p, &Flat(vec![1.0, -2.0]), &mut OptimizerState::default(), &cfg);
        assert!((p.0[0] - 0.1).abs() < 1e-15 && (p.0[1] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient() {
        let mut p = Flat(vec![0.5, -1.0]);
        let mut state = OptimizerState::default();
        optimizer_step(
            &mut p,
            &Flat(vec![0.0; 2]),
            &mut state,
            &OptimizerConfig::new(OptimizerKind::Sgd, 0.1),
        );
        assert_eq!(p.0, vec![0.5, -1.0]);
        optimizer_step(
            &mut p,
            &Flat(vec![0.0; 2]),
            &mut state,
            &OptimizerConfig::new(OptimizerKind::Adam, 0.1),
        );
        assert_eq!(p.0, vec![0.5, -1.0]);
        assert_eq!(state.step, 1);
        assert_eq!(state.first_moment.len(), 2);
    }

    #[test]
    fn first_adam_step_is_about_lr() {
        let lr = 1e-3;
        let g = vec![3.0, -0.01, 1e-6];
        let mut p = Flat(vec![0.0; 3]);
        optimizer_step(
            &mut p,
            &Flat(g.clone()),
            &mut OptimizerState::default(),
            &OptimizerConfig::new(OptimizerKind::Adam, lr),
        );
        for (x, d) in p.0.iter().zip(&g) {
            assert!(x.abs() <= lr * (1.0 + 1e-8));
            assert_eq!(x.signum(), d.signum());
        }
        assert!((p.0[0] - lr).abs() < 1e-10);
    }

    #[test]
    fn clipping() {
        let mut g = Flat(vec![3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g.l2_norm() - 1.0).abs() < 1e-15);
        let mut small = Flat(vec![0.3, 0.4]);
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small.0, vec![0.3, 0.4]);
    }

    #[test]
    fn parses_names() {
        assert_eq!("Adam".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adam);
        assert_eq!("sgd".parse::<OptimizerKind>().unwrap(), OptimizerKind::Sgd);
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
