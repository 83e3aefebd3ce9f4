use serde::{Deserialize, Serialize};

use super::{ForwardCache, PolicyError, PolicyParams};
use crate::sim::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            value_coef: 0.5,
            entropy_coef: 0.01,
        }
    }
}

/// One n-step rollout segment collected by an actor.
///
/// `actions` holds the raw head indices that were sampled, so a NoOp still
/// records which coalition and bins its heads produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub observations: Vec<Observation>,
    pub actions: Vec<[usize; 4]>,
    pub rewards: Vec<f64>,
    /// Value estimates made while acting.
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub steps: usize,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        self.observations.clear();
        self.actions.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
        self.bootstrap_value = 0.0;
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let n = self.len();
        if n == 0 {
            return Err(PolicyError::Batch("empty batch".into()));
        }
        let lens = [self.observations.len(), self.actions.len(), self.values.len(), self.dones.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(PolicyError::Batch(format!(
                "misaligned lengths: rewards {n}, observations/actions/values/dones {lens:?}"
            )));
        }
        if self.dones[n - 1] && self.bootstrap_value != 0.0 {
            return Err(PolicyError::Batch("bootstrap value must be 0 after a terminal step".into()));
        }
        Ok(())
    }
}

/// `R_t = r_t + gamma * R_{t+1}`, cut at terminal flags and seeded with the
/// bootstrap value; `A_t = R_t - V(s_t)`.
pub fn n_step_returns(batch: &RolloutBatch, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let n = batch.len();
    let mut returns = vec![0.0; n];
    let mut next = batch.bootstrap_value;
    for t in (0..n).rev() {
        if batch.dones[t] {
            next = 0.0;
        }
        next = batch.rewards[t] + gamma * next;
        returns[t] = next;
    }
    let adv = returns.iter().zip(&batch.values).map(|(r, v)| r - v).collect();
    (returns, adv)
}

impl PolicyParams {
    /// Mean over the batch of
    /// `-A_t log pi(a_t|s_t) + value_coef * (R_t - V(s_t))^2 / 2 - entropy_coef * H(pi(.|s_t))`
    /// with the advantage held constant. Returns the loss and its exact
    /// gradient.
    pub fn loss_and_grads(&self, batch: &RolloutBatch, cfg: &LossConfig) -> Result<(LossStats, Vec<f64>), PolicyError> {
        batch.validate()?;
        let caches = batch
            .observations
            .iter()
            .map(|o| self.forward(o))
            .collect::<Result<Vec<_>, _>>()?;
        let mut grads = vec![0.0; self.len()];
        let stats = self.loss_and_grads_cached(batch, &caches, cfg, &mut grads)?;
        Ok((stats, grads))
    }

    /// Same as [`loss_and_grads`](Self::loss_and_grads) but reuses forward
    /// passes made with these exact parameters while acting. Gradients are
    /// accumulated into `grads`.
    pub fn loss_and_grads_cached(
        &self,
        batch: &RolloutBatch,
        caches: &[ForwardCache],
        cfg: &LossConfig,
        grads: &mut [f64],
    ) -> Result<LossStats, PolicyError> {
        batch.validate()?;
        if caches.len() != batch.len() || grads.len() != self.len() {
            return Err(PolicyError::Batch("cache or gradient buffer has the wrong size".into()));
        }
        let (returns, adv) = n_step_returns(batch, cfg.gamma);
        let scale = 1.0 / batch.len() as f64;
        let sizes = self.config.head_sizes();
        let mut stats = LossStats {
            steps: batch.len(),
            ..Default::default()
        };
        let mut dlogits = vec![0.0; self.config.logits_len()];

        for t in 0..batch.len() {
            let c = &caches[t];
            let a = batch.actions[t];
            let logp = c.dist.log_prob_indices(a);
            let h = c.dist.entropy();
            let err = c.value - returns[t];
            stats.policy_loss += -adv[t] * logp * scale;
            stats.value_loss += 0.5 * err * err * scale;
            stats.entropy += h * scale;

            let mut at = 0;
            for (head, (probs, &n)) in c.dist.heads.iter().zip(&sizes).enumerate() {
                let h_head: f64 = -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
                for j in 0..n {
                    let p = probs[j];
                    let onehot = if j == a[head] { 1.0 } else { 0.0 };
                    let d_pg = -adv[t] * (onehot - p);
                    let plogp = if p > 0.0 { p * (p.ln() + h_head) } else { 0.0 };
                    dlogits[at + j] = scale * (d_pg + cfg.entropy_coef * plogp);
                }
                at += n;
            }
            let dvalue = scale * cfg.value_coef * err;
            self.backward(&batch.observations[t], c, &dlogits, dvalue, grads);
        }
        stats.loss = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
        if !stats.loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(PolicyError::NonFinite(format!(
                "loss {:?}; returns {returns:?}; advantages {adv:?}; values {:?}",
                stats, batch.values
            )));
        }
        Ok(stats)
    }
}
