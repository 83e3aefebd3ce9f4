use serde::{Deserialize, Serialize};

use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// RMSProp with one set of statistics shared by every worker.
    RmsProp { decay: f64, eps: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::RmsProp { decay: 0.99, eps: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    pub updates: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, clip_norm: f64, len: usize) -> Self {
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::RmsProp { .. } => (Vec::new(), vec![0.0; len]),
            OptimizerKind::Adam { .. } => (vec![0.0; len], vec![0.0; len]),
        };
        Self {
            kind,
            lr,
            clip_norm,
            first,
            second,
            updates: 0,
        }
    }

    /// Applies one update in place. Rejects non-finite gradients without
    /// touching `params` or the optimizer statistics.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), PolicyError> {
        if params.len() != grads.len() {
            return Err(PolicyError::Shape(format!(
                "gradient has {} entries for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(PolicyError::NonFinite("gradient contains NaN or infinity".into()));
        }
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        self.updates += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * scale * g;
                }
            }
            OptimizerKind::RmsProp { decay, eps } => {
                for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.second) {
                    let g = scale * g;
                    *s = decay * *s + (1.0 - decay) * g * g;
                    *p -= lr * g / (s.sqrt() + eps);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.updates as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    let g = scale * g;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
