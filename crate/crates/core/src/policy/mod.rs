//! Actor-critic network with hand-written reverse-mode gradients.
//!
//! Image path: three stride-2 convolutions with ReLU. Vector path: one
//! fully-connected layer with tanh. Their outputs are concatenated and fed
//! through a ReLU trunk into four categorical heads (coalition, action,
//! x bin, y bin) and a scalar value head.
//!
//! All parameters live in one flat `Vec<f64>` described by a [`Layout`], so
//! optimizers, gradient buffers and checkpoints treat the network as a
//! single vector.

mod checkpoint;
mod dist;
mod loss;
mod net;
mod optim;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::sim::{ObsMode, IMAGE_CHANNELS, VECTOR_LEN};

pub use checkpoint::{CheckpointError, CHECKPOINT_VERSION};
pub use dist::ActionDistribution;
pub use loss::{n_step_returns, LossConfig, LossStats, RolloutBatch};
pub use net::ForwardCache;
pub use optim::{Optimizer, OptimizerKind};

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed rollout batch: {0}")]
    Batch(String),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
}

/// Number of Blue coalitions addressed by the coalition head.
pub const COALITION_CHOICES: usize = 5;
/// NoOp, Move, Attack.
pub const ACTION_CHOICES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub obs_mode: ObsMode,
    pub image_channels: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub vector_len: usize,
    pub vector_hidden: usize,
    pub trunk: Vec<usize>,
    pub grid_bins: usize,
}

impl NetConfig {
    /// Desk-scale network for the bundled 24x24 map.
    pub fn desk_scale(obs_mode: ObsMode, grid_bins: usize) -> Self {
        Self {
            obs_mode,
            image_channels: IMAGE_CHANNELS,
            image_height: 24,
            image_width: 24,
            conv_channels: vec![8, 16, 16],
            kernel: 3,
            stride: 2,
            vector_len: VECTOR_LEN,
            vector_hidden: 128,
            trunk: vec![128, 128],
            grid_bins,
        }
    }

    pub fn head_sizes(&self) -> [usize; 4] {
        [COALITION_CHOICES, ACTION_CHOICES, self.grid_bins, self.grid_bins]
    }

    pub fn logits_len(&self) -> usize {
        self.head_sizes().iter().sum()
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    /// `(channels, height, width)` after each convolution.
    pub fn conv_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shapes = Vec::new();
        let (mut h, mut w) = (self.image_height, self.image_width);
        for &c in &self.conv_channels {
            h = (h + 2 * self.padding() - self.kernel) / self.stride + 1;
            w = (w + 2 * self.padding() - self.kernel) / self.stride + 1;
            shapes.push((c, h, w));
        }
        shapes
    }

    pub fn image_features(&self) -> usize {
        if !self.obs_mode.has_image() {
            return 0;
        }
        self.conv_shapes()
            .last()
            .map(|&(c, h, w)| c * h * w)
            .unwrap_or(self.image_channels * self.image_height * self.image_width)
    }

    pub fn vector_features(&self) -> usize {
        if self.obs_mode.has_vector() {
            self.vector_hidden
        } else {
            0
        }
    }

    pub fn trunk_input(&self) -> usize {
        self.image_features() + self.vector_features()
    }

    pub fn trunk_output(&self) -> usize {
        self.trunk.last().copied().unwrap_or_else(|| self.trunk_input())
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Shape(m.to_string()));
        if self.grid_bins == 0 {
            return bad("grid_bins must be positive");
        }
        if self.obs_mode.has_image() {
            if self.kernel == 0 || self.stride == 0 || self.image_channels == 0 {
                return bad("convolution kernel, stride and channels must be positive");
            }
            let (mut h, mut w) = (self.image_height, self.image_width);
            for _ in &self.conv_channels {
                if h + 2 * self.padding() < self.kernel || w + 2 * self.padding() < self.kernel {
                    return bad("image too small for the convolution stack");
                }
                h = (h + 2 * self.padding() - self.kernel) / self.stride + 1;
                w = (w + 2 * self.padding() - self.kernel) / self.stride + 1;
            }
        }
        if self.obs_mode.has_vector() && (self.vector_len == 0 || self.vector_hidden == 0) {
            return bad("vector path needs positive widths");
        }
        if self.trunk.contains(&0) {
            return bad("trunk widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one weight/bias pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub(crate) conv: Vec<Dense>,
    pub(crate) vector: Option<Dense>,
    pub(crate) trunk: Vec<Dense>,
    pub(crate) heads: Dense,
    pub(crate) value: Dense,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &NetConfig) -> Self {
        let mut b = LayoutBuilder::default();

        // Convolutions are stored [out][in][k][k]; `inputs` counts in*k*k.
        let mut conv = Vec::new();
        if cfg.obs_mode.has_image() {
            let mut c_in = cfg.image_channels;
            for (i, &c_out) in cfg.conv_channels.iter().enumerate() {
                let k = cfg.kernel;
                let w = b.push(format!("conv{i}.weight"), vec![c_out, c_in, k, k]);
                let bias = b.push(format!("conv{i}.bias"), vec![c_out]);
                conv.push(Dense {
                    w,
                    b: bias,
                    inputs: c_in * k * k,
                    outputs: c_out,
                });
                c_in = c_out;
            }
        }
        let vector = cfg
            .obs_mode
            .has_vector()
            .then(|| b.dense("vector", cfg.vector_len, cfg.vector_hidden));
        let mut trunk = Vec::new();
        let mut width = cfg.trunk_input();
        for (i, &n) in cfg.trunk.iter().enumerate() {
            trunk.push(b.dense(&format!("trunk{i}"), width, n));
            width = n;
        }
        let heads = b.dense("heads", width, cfg.logits_len());
        let value = b.dense("value", width, 1);
        Self {
            tensors: b.tensors,
            conv,
            vector,
            trunk,
            heads,
            value,
            total: b.offset,
        }
    }
}

#[derive(Default)]
struct LayoutBuilder {
    tensors: Vec<TensorSpec>,
    offset: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let spec = TensorSpec {
            name,
            shape,
            offset: self.offset,
        };
        self.offset += spec.len();
        self.tensors.push(spec);
        self.offset - self.tensors.last().map_or(0, TensorSpec::len)
    }

    fn dense(&mut self, name: &str, inputs: usize, outputs: usize) -> Dense {
        let w = self.push(format!("{name}.weight"), vec![inputs, outputs]);
        let b = self.push(format!("{name}.bias"), vec![outputs]);
        Dense {
            w,
            b,
            inputs,
            outputs,
        }
    }
}

/// All trainable weights: the policy heads and the value head share the
/// feature extractor and trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: NetConfig,
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(config: NetConfig) -> Result<Self, PolicyError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let data = vec![0.0; layout.total];
        Ok(Self {
            config,
            layout,
            data,
        })
    }

    /// Orthogonal init with ReLU gain for hidden layers, unit gain for the
    /// value head and 0.01 gain for the policy logits, zero biases.
    pub fn init<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self, PolicyError> {
        let mut p = Self::zeros(config)?;
        let relu_gain = 2f64.sqrt();
        let layout = p.layout.clone();
        for d in &layout.conv {
            orthogonal(&mut p.data[d.w..d.w + d.inputs * d.outputs], d.outputs, d.inputs, relu_gain, rng);
        }
        if let Some(d) = layout.vector {
            orthogonal_dense(&mut p.data, d, 1.0, rng);
        }
        for d in &layout.trunk {
            orthogonal_dense(&mut p.data, *d, relu_gain, rng);
        }
        orthogonal_dense(&mut p.data, layout.heads, 0.01, rng);
        orthogonal_dense(&mut p.data, layout.value, 1.0, rng);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.data[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.tensors.iter().find(|t| t.name == name)?.range();
        Some(&mut self.data[range])
    }
}

fn orthogonal_dense<R: Rng + ?Sized>(data: &mut [f64], d: Dense, gain: f64, rng: &mut R) {
    // Stored [in][out]; orthogonalize the transpose so columns map inputs.
    let mut m = vec![0.0; d.inputs * d.outputs];
    orthogonal(&mut m, d.outputs, d.inputs, gain, rng);
    for o in 0..d.outputs {
        for i in 0..d.inputs {
            data[d.w + i * d.outputs + o] = m[o * d.inputs + i];
        }
    }
}

/// Fills a row-major `rows x cols` matrix with a scaled (semi-)orthogonal
/// matrix via Gram-Schmidt on Gaussian draws.
fn orthogonal<R: Rng + ?Sized>(m: &mut [f64], rows: usize, cols: usize, gain: f64, rng: &mut R) {
    let (n, k) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    // n orthonormal vectors of length k.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(b).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = gain * if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn desk_scale_shapes() {
        let cfg = NetConfig::desk_scale(ObsMode::Both, 3);
        assert_eq!(cfg.conv_shapes(), vec![(8, 12, 12), (16, 6, 6), (16, 3, 3)]);
        assert_eq!(cfg.image_features(), 144);
        assert_eq!(cfg.trunk_input(), 144 + 128);
        assert_eq!(cfg.head_sizes(), [5, 3, 3, 3]);
        let layout = Layout::new(&cfg);
        let sum: usize = layout.tensors.iter().map(|t| t.len()).sum();
        assert_eq!(sum, layout.total);
    }

    #[test]
    fn vector_mode_has_no_conv() {
        let layout = Layout::new(&NetConfig::desk_scale(ObsMode::Vector, 3));
        assert!(layout.conv.is_empty());
        assert!(layout.tensors.iter().all(|t| !t.name.starts_with("conv")));
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (r, c) = (4, 9);
        let mut m = vec![0.0; r * c];
        orthogonal(&mut m, r, c, 1.0, &mut rng);
        for i in 0..r {
            for j in 0..r {
                let dot: f64 = (0..c).map(|k| m[i * c + k] * m[j * c + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn init_is_finite_and_seeded() {
        let cfg = NetConfig::desk_scale(ObsMode::Both, 3);
        let a = PolicyParams::init(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = PolicyParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(a.is_finite());
        assert_eq!(a, b);
    }
}
