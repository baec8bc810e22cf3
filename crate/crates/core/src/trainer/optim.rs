use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::modelkit::Param;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// SGD only.
    pub momentum: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self { kind, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, momentum: 0.0 }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }
}

fn check_len(a: usize, b: usize) -> Result<(), TrainError> {
    if a != b {
        return Err(TrainError::ShapeMismatch(format!("parameter has {a} values, gradient {b}")));
    }
    Ok(())
}

/// `param ← param − lr·grad`.
pub fn sgd_step(param: &mut [f64], grad: &[f64], lr: f64) -> Result<(), TrainError> {
    check_len(param.len(), grad.len())?;
    param.iter_mut().zip(grad).for_each(|(p, g)| *p -= lr * g);
    Ok(())
}

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(param: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &OptimizerConfig) -> Result<(), TrainError> {
    check_len(param.len(), grad.len())?;
    check_len(param.len(), state.m.len())?;
    check_len(param.len(), state.v.len())?;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Optimizer state over a model's parameter list (indexed by position).
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    adam: Vec<Option<AdamState>>,
    velocity: Vec<Option<Vec<f64>>>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        Ok(Self { cfg, adam: Vec::new(), velocity: Vec::new() })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Updates every trainable parameter from its gradient. Non-trainable
    /// parameters are left untouched.
    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut Param>) -> Result<(), TrainError> {
        for (i, p) in params.enumerate() {
            if !p.trainable {
                continue;
            }
            if self.adam.len() <= i {
                self.adam.resize(i + 1, None);
                self.velocity.resize(i + 1, None);
            }
            let n = p.value.len();
            match self.cfg.kind {
                OptimizerKind::Adam => {
                    let state = self.adam[i].get_or_insert_with(|| AdamState::zeros(n));
                    adam_step(p.value.data_mut(), &p.grad, state, &self.cfg)?;
                }
                OptimizerKind::Sgd if self.cfg.momentum == 0.0 => {
                    sgd_step(p.value.data_mut(), &p.grad, self.cfg.learning_rate)?;
                }
                OptimizerKind::Sgd => {
                    let vel = self.velocity[i].get_or_insert_with(|| vec![0.0; n]);
                    check_len(n, p.grad.len())?;
                    for ((w, v), &g) in p.value.data_mut().iter_mut().zip(vel.iter_mut()).zip(&p.grad) {
                        *v = self.cfg.momentum * *v + g;
                        *w -= self.cfg.learning_rate * *v;
                    }
                }
            }
        }
        Ok(())
    }
}
