use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::params::{ParamSet, Parameterized};
use crate::error::{Error, Result};

/// Per parameter collection, per parameter: whether it is updated.
pub type TrainMask = Vec<Vec<bool>>;

pub fn full_mask<M: Parameterized + ?Sized>(model: &M) -> TrainMask {
    model.param_sets().iter().map(|s| vec![true; s.len()]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(alloc::format!(
                "invalid optimizer settings: lr {}, momentum {}, weight decay {}",
                self.learning_rate,
                self.momentum,
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Stochastic gradient descent with heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Vec<ParamSet>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    /// One update at learning rate `lr` (the schedule's value for this step).
    pub fn step<M: Parameterized + ?Sized>(
        &mut self,
        model: &mut M,
        grads: &[ParamSet],
        mask: &TrainMask,
        lr: f64,
    ) -> Result<()> {
        let mut sets = model.param_sets_mut();
        if sets.len() != grads.len() || mask.len() != grads.len() {
            return Err(Error::Contract(
                "gradient and parameter collections differ in count".into(),
            ));
        }
        if self.velocity.is_empty() {
            self.velocity = sets.iter().map(|s| s.zeros_like()).collect();
        }
        let SgdConfig {
            momentum, weight_decay, ..
        } = self.config;
        for (((params, grads), velocity), mask) in sets.iter_mut().zip(grads).zip(&mut self.velocity).zip(mask) {
            params.check_layout(grads)?;
            for (((p, g), v), &trainable) in params.iter_mut().zip(grads.iter()).zip(velocity.iter_mut()).zip(mask) {
                if !trainable {
                    continue;
                }
                let decay = if p.decay { weight_decay } else { 0.0 };
                for ((pv, gv), vv) in p.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
                    let grad = gv + decay * *pv;
                    *vv = momentum * *vv + grad;
                    *pv -= lr * *vv;
                }
            }
        }
        Ok(())
    }
}

/// Learning rate multiplied by `gamma` every `step_epochs` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub base: f64,
    pub gamma: f64,
    pub step_epochs: usize,
}

impl StepSchedule {
    pub fn at_epoch(&self, epoch: usize) -> f64 {
        if self.step_epochs == 0 {
            return self.base;
        }
        self.base * libm::pow(self.gamma, (epoch / self.step_epochs) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::Param;

    fn single(v: f64) -> ParamSet {
        ParamSet::new(vec![Param::new("p", vec![1], vec![v]).unwrap()])
    }

    #[test]
    fn plain_gradient_step() {
        let mut p = single(1.0);
        let mut sgd = Sgd::new(SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
        })
        .unwrap();
        let mask = full_mask(&p);
        sgd.step(&mut p, &[single(2.0)], &mask, 0.1).unwrap();
        assert!((p.get(0).data[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut p = single(0.0);
        let mut sgd = Sgd::new(SgdConfig {
            learning_rate: 1.0,
            momentum: 0.5,
            weight_decay: 0.0,
        })
        .unwrap();
        let mask = full_mask(&p);
        sgd.step(&mut p, &[single(1.0)], &mask, 1.0).unwrap();
        sgd.step(&mut p, &[single(1.0)], &mask, 1.0).unwrap();
        // v1 = 1, v2 = 1.5
        assert!((p.get(0).data[0] + 2.5).abs() < 1e-15);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut p = single(3.0);
        let mut sgd = Sgd::new(SgdConfig {
            learning_rate: 1.0,
            momentum: 0.9,
            weight_decay: 0.1,
        })
        .unwrap();
        sgd.step(&mut p, &[single(5.0)], &vec![vec![false]], 1.0).unwrap();
        assert_eq!(p.get(0).data[0], 3.0);
    }

    #[test]
    fn schedule_steps_down() {
        let s = StepSchedule {
            base: 0.1,
            gamma: 0.1,
            step_epochs: 10,
        };
        assert_eq!(s.at_epoch(9), 0.1);
        assert!((s.at_epoch(10) - 0.01).abs() < 1e-15);
        assert!((s.at_epoch(25) - 0.001).abs() < 1e-15);
    }
}
