//! Oracles and random generators shared by the integration tests and the
//! acceptance run.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wadi_core::policy::{LossConfig, NetConfig, PolicyParams, RolloutBatch};
use wadi_core::sim::{ActionId, Command, ObsMode, Observation};

pub fn random_command(rng: &mut impl Rng) -> Command {
    let action = [ActionId::NoOp, ActionId::Move, ActionId::Attack][rng.random_range(0..3)];
    if action == ActionId::NoOp {
        return Command::NOOP;
    }
    Command {
        coalition: rng.random_range(0..5),
        action,
        x_bin: rng.random_range(0..3),
        y_bin: rng.random_range(0..3),
    }
}

/// Outputs of the reference forward pass.
pub struct Reference {
    pub logits: Vec<f64>,
    pub value: f64,
    /// Smallest |pre-activation| over every ReLU unit.
    pub relu_margin: f64,
}

pub fn reference_forward(p: &PolicyParams, obs: &Observation) -> Reference {
    let cfg = &p.config;
    let t = |name: &str| p.tensor(name).unwrap_or_else(|| panic!("missing tensor {name}"));
    let mut margin = f64::INFINITY;
    let mut features = Vec::new();

    if let Some(img) = &obs.image {
        let (mut c, mut h, mut w) = (cfg.image_channels, cfg.image_height, cfg.image_width);
        let mut x = img.clone();
        let k = cfg.kernel as i64;
        let pad = cfg.padding() as i64;
        for (layer, &(co, ho, wo)) in cfg.conv_shapes().iter().enumerate() {
            let wt = t(&format!("conv{layer}.weight"));
            let bs = t(&format!("conv{layer}.bias"));
            let mut y = vec![0.0; co * ho * wo];
            for o in 0..co {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = bs[o];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * cfg.stride) as i64 + ky - pad;
                                    let ix = (ox * cfg.stride) as i64 + kx - pad;
                                    if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                        continue;
                                    }
                                    let wi = ((o * c + ci) as i64 * k + ky) * k + kx;
                                    acc += wt[wi as usize] * x[ci * h * w + iy as usize * w + ix as usize];
                                }
                            }
                        }
                        margin = margin.min(acc.abs());
                        y[o * ho * wo + oy * wo + ox] = acc.max(0.0);
                    }
                }
            }
            x = y;
            (c, h, w) = (co, ho, wo);
        }
        features.extend(x);
    }
    if let Some(v) = &obs.vector {
        let wt = t("vector.weight");
        let bs = t("vector.bias");
        let out = bs.len();
        for o in 0..out {
            let z: f64 = bs[o] + (0..v.len()).map(|i| v[i] * wt[i * out + o]).sum::<f64>();
            features.push(z.tanh());
        }
    }
    for layer in 0..cfg.trunk.len() {
        let wt = t(&format!("trunk{layer}.weight"));
        let bs = t(&format!("trunk{layer}.bias"));
        let out = bs.len();
        features = (0..out)
            .map(|o| {
                let z = bs[o] + (0..features.len()).map(|i| features[i] * wt[i * out + o]).sum::<f64>();
                margin = margin.min(z.abs());
                z.max(0.0)
            })
            .collect();
    }
    let dense = |name: &str, x: &[f64]| -> Vec<f64> {
        let wt = t(&format!("{name}.weight"));
        let bs = t(&format!("{name}.bias"));
        let out = bs.len();
        (0..out)
            .map(|o| bs[o] + (0..x.len()).map(|i| x[i] * wt[i * out + o]).sum::<f64>())
            .collect()
    };
    Reference {
        logits: dense("heads", &features),
        value: dense("value", &features)[0],
        relu_margin: margin,
    }
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z.iter().map(|x| x - lse).collect()
}

/// The loss written out directly from its definition.
pub fn reference_loss(p: &PolicyParams, batch: &RolloutBatch, cfg: &LossConfig) -> f64 {
    let n = batch.rewards.len();
    let mut total = 0.0;
    for t in 0..n {
        // R_t by explicit summation up to the first terminal.
        let mut ret = 0.0;
        let mut disc = 1.0;
        let mut cut = false;
        for k in t..n {
            ret += disc * batch.rewards[k];
            disc *= cfg.gamma;
            if batch.dones[k] {
                cut = true;
                break;
            }
        }
        if !cut {
            ret += disc * batch.bootstrap_value;
        }
        let adv = ret - batch.values[t];
        let r = reference_forward(p, &batch.observations[t]);
        let mut logp = 0.0;
        let mut entropy = 0.0;
        let mut at = 0;
        for (head, n) in p.config.head_sizes().into_iter().enumerate() {
            let ls = log_softmax(&r.logits[at..at + n]);
            logp += ls[batch.actions[t][head]];
            entropy -= ls.iter().map(|l| l.exp() * l).sum::<f64>();
            at += n;
        }
        let err = ret - r.value;
        total += -adv * logp + cfg.value_coef * 0.5 * err * err - cfg.entropy_coef * entropy;
    }
    total / n as f64
}

pub fn tiny_config(rng: &mut ChaCha8Rng) -> NetConfig {
    let mode = [ObsMode::Image, ObsMode::Vector, ObsMode::Both][rng.random_range(0..3)];
    NetConfig {
        obs_mode: mode,
        image_channels: rng.random_range(1..=3),
        image_height: rng.random_range(4..=7),
        image_width: rng.random_range(4..=7),
        conv_channels: vec![rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=3)],
        kernel: 3,
        stride: 2,
        vector_len: rng.random_range(1..=8),
        vector_hidden: rng.random_range(1..=6),
        trunk: (0..rng.random_range(0..=2)).map(|_| rng.random_range(2..=8)).collect(),
        grid_bins: rng.random_range(2..=3),
    }
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn random_obs(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Observation {
    Observation {
        image: cfg
            .obs_mode
            .has_image()
            .then(|| gaussian(rng, cfg.image_channels * cfg.image_height * cfg.image_width, 1.0)),
        vector: cfg.obs_mode.has_vector().then(|| gaussian(rng, cfg.vector_len, 1.0)),
    }
}

pub fn random_params(cfg: NetConfig, rng: &mut ChaCha8Rng) -> PolicyParams {
    let mut p = PolicyParams::zeros(cfg).unwrap();
    let n = p.len();
    p.data = gaussian(rng, n, 0.5);
    p
}

pub fn random_batch(p: &PolicyParams, rng: &mut ChaCha8Rng) -> RolloutBatch {
    let len = rng.random_range(1..=4);
    let sizes = p.config.head_sizes();
    let mut b = RolloutBatch::default();
    for _ in 0..len {
        b.observations.push(random_obs(&p.config, rng));
        b.actions.push(sizes.map(|n| rng.random_range(0..n)));
        b.rewards.push(rng.random_range(-2.0..2.0));
        b.values.push(rng.random_range(-1.0..1.0));
        b.dones.push(rng.random_bool(0.2));
    }
    b.bootstrap_value = if *b.dones.last().unwrap() {
        0.0
    } else {
        rng.random_range(-1.0..1.0)
    };
    b
}

/// Relative error with a small absolute floor in the denominator so that
/// coordinates whose true gradient is ~0 are judged on absolute error.
pub const REL_FLOOR: f64 = 1e-6;
pub const FD_STEP: f64 = 1e-4;
/// Draws with any ReLU input closer than this to its kink are redrawn: a
/// central difference straddling the kink measures a different function.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn max_fd_error(p: &PolicyParams, batch: &RolloutBatch, cfg: &LossConfig) -> f64 {
    let (_, grads) = p.loss_and_grads(batch, cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut q = p.clone();
    for i in 0..p.len() {
        let x = p.data[i];
        q.data[i] = x + FD_STEP;
        let up = reference_loss(&q, batch, cfg);
        q.data[i] = x - FD_STEP;
        let down = reference_loss(&q, batch, cfg);
        q.data[i] = x;
        let fd = (up - down) / (2.0 * FD_STEP);
        let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(REL_FLOOR);
        worst = worst.max(rel);
    }
    worst
}

pub fn kink_free(p: &PolicyParams, batch: &RolloutBatch) -> bool {
    batch
        .observations
        .iter()
        .all(|o| reference_forward(p, o).relu_margin > KINK_MARGIN)
}

/// Brute force: for every t, walk forward summing discounted rewards until
/// a terminal or the end of the batch.
pub fn brute_force_returns(b: &RolloutBatch, gamma: f64) -> Vec<f64> {
    let n = b.rewards.len();
    let mut out = vec![0.0; n];
    for t in 0..n {
        let mut total = 0.0;
        let mut terminal = false;
        for k in t..n {
            total += gamma.powi((k - t) as i32) * b.rewards[k];
            if b.dones[k] {
                terminal = true;
                break;
            }
        }
        if !terminal {
            total += gamma.powi((n - t) as i32) * b.bootstrap_value;
        }
        out[t] = total;
    }
    out
}
