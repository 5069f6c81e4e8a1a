use super::params::Parameterized;
use crate::error::{Error, Result};

/// Exponential moving average of a model's parameters.
///
/// The shadow is a full copy of the tracked model, so it can be run for
/// inference (label guessing) directly.
#[derive(Debug, Clone)]
pub struct EmaShadow<M> {
    decay: f64,
    model: M,
}

impl<M: Parameterized + Clone> EmaShadow<M> {
    pub fn new(model: &M, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::Config(alloc::format!(
                "EMA decay must lie in [0, 1], got {decay}"
            )));
        }
        Ok(Self {
            decay,
            model: model.clone(),
        })
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut M {
        &mut self.model
    }

    /// `shadow <- decay * shadow + (1 - decay) * params`, elementwise.
    pub fn update(&mut self, tracked: &M) -> Result<()> {
        let sources = tracked.param_sets();
        let mut targets = self.model.param_sets_mut();
        if sources.len() != targets.len() {
            return Err(Error::Contract("EMA shadow and model differ in structure".into()));
        }
        for (shadow, params) in targets.iter().zip(&sources) {
            shadow.check_layout(params)?;
        }
        let d = self.decay;
        for (shadow, params) in targets.iter_mut().zip(&sources) {
            for (s, p) in shadow.iter_mut().zip(params.iter()) {
                for (sv, pv) in s.data.iter_mut().zip(&p.data) {
                    *sv = d * *sv + (1.0 - d) * pv;
                }
            }
        }
        Ok(())
    }
}

pub fn ema_update<M: Parameterized + Clone>(shadow: &mut EmaShadow<M>, params: &M) -> Result<()> {
    shadow.update(params)
}
