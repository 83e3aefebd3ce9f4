use rand::Rng;

use crate::sim::{ActionId, Command};

/// Factorized categorical distribution over commands: one head each for the
/// coalition, the action id, the x bin and the y bin. Heads are independent
/// given the observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActionDistribution {
    pub heads: [Vec<f64>; 4],
}

pub(crate) fn softmax(logits: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.extend(logits.iter().map(|z| (z - max).exp()));
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the last cumulative sum
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl ActionDistribution {
    pub fn from_probs(coalition: Vec<f64>, action: Vec<f64>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self {
            heads: [coalition, action, x, y],
        }
    }

    pub fn from_logits(logits: &[f64], sizes: [usize; 4]) -> Self {
        let mut heads: [Vec<f64>; 4] = Default::default();
        let mut at = 0;
        for (h, n) in heads.iter_mut().zip(sizes) {
            softmax(&logits[at..at + n], h);
            at += n;
        }
        Self { heads }
    }

    fn to_command(idx: [usize; 4]) -> Command {
        let action = ActionId::from_index(idx[1]).expect("action head has three entries");
        if action == ActionId::NoOp {
            return Command::NOOP;
        }
        Command {
            coalition: idx[0] as u8,
            action,
            x_bin: idx[2] as u8,
            y_bin: idx[3] as u8,
        }
    }

    /// Head indices a command selects. The coalition and bins of a NoOp are
    /// whatever the heads sampled; only their canonical zero form survives.
    fn indices(cmd: &Command) -> [usize; 4] {
        [
            cmd.coalition as usize,
            cmd.action.index(),
            cmd.x_bin as usize,
            cmd.y_bin as usize,
        ]
    }

    /// Samples each head independently. Returns the raw head indices
    /// alongside the command they encode.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> [usize; 4] {
        [
            sample_index(&self.heads[0], rng),
            sample_index(&self.heads[1], rng),
            sample_index(&self.heads[2], rng),
            sample_index(&self.heads[3], rng),
        ]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Command {
        Self::to_command(self.sample_indices(rng))
    }

    pub fn greedy_indices(&self) -> [usize; 4] {
        [
            argmax(&self.heads[0]),
            argmax(&self.heads[1]),
            argmax(&self.heads[2]),
            argmax(&self.heads[3]),
        ]
    }

    /// Per-head argmax.
    pub fn greedy(&self) -> Command {
        Self::to_command(self.greedy_indices())
    }

    pub fn command_for(idx: [usize; 4]) -> Command {
        Self::to_command(idx)
    }

    /// Sum of per-head log-probabilities of the given head indices.
    /// Returns `-inf` when any selected entry has probability zero.
    pub fn log_prob_indices(&self, idx: [usize; 4]) -> f64 {
        self.heads
            .iter()
            .zip(idx)
            .map(|(h, i)| h.get(i).copied().unwrap_or(0.0).ln())
            .sum()
    }

    pub fn log_prob(&self, cmd: &Command) -> f64 {
        self.log_prob_indices(Self::indices(cmd))
    }

    /// Sum of per-head entropies (nats).
    pub fn entropy(&self) -> f64 {
        self.heads
            .iter()
            .map(|h| {
                -h.iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.heads.iter().all(|h| {
            h.iter().all(|&p| p >= 0.0 && p.is_finite()) && (h.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform() -> ActionDistribution {
        ActionDistribution::from_probs(vec![0.2; 5], vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3])
    }

    #[test]
    fn uniform_entropy() {
        let want = 5f64.ln() + 3.0 * 3f64.ln();
        assert!((uniform().entropy() - want).abs() < 1e-12);
        assert!((want - 4.905).abs() < 1e-3);
    }

    #[test]
    fn deterministic_entropy_is_zero() {
        let d = ActionDistribution::from_probs(
            vec![0.0, 1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
        );
        assert_eq!(d.entropy(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(d.sample_indices(&mut rng), [1, 2, 0, 1]);
        }
        assert_eq!(d.greedy(), d.sample(&mut rng));
    }

    #[test]
    fn zero_probability_log_prob_is_neg_inf() {
        let d = ActionDistribution::from_probs(
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![1.0 / 3.0; 3],
            vec![1.0 / 3.0; 3],
        );
        assert_eq!(d.log_prob_indices([1, 0, 0, 0]), f64::NEG_INFINITY);
        assert!(d.log_prob_indices([0, 1, 2, 2]).is_finite());
    }

    #[test]
    fn log_prob_factorizes() {
        let d = ActionDistribution::from_logits(&[0.1, -0.3, 0.7, 0.0, 1.2, 0.5, -1.0, 0.2, 0.0, 0.3, 0.3, 0.9, -0.4, 0.1], [5, 3, 3, 3]);
        assert!(d.is_normalized(1e-12));
        let idx = [2, 1, 0, 2];
        let want: f64 = (0..4).map(|h| d.heads[h][idx[h]].ln()).sum();
        assert!((d.log_prob_indices(idx) - want).abs() < 1e-14);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let d = ActionDistribution::from_logits(&[0.0; 14], [5, 3, 3, 3]);
        assert!(d.heads[0].iter().all(|&p| (p - 0.2).abs() < 1e-15));
        assert!(d.heads[1].iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn greedy_maps_noop_to_canonical() {
        let d = ActionDistribution::from_probs(
            vec![0.1, 0.1, 0.6, 0.1, 0.1],
            vec![0.8, 0.1, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.2, 0.1, 0.7],
        );
        assert_eq!(d.greedy(), Command::NOOP);
        assert_eq!(d.greedy_indices(), [2, 0, 1, 2]);
    }
}
