use super::{ActionDistribution, Dense, PolicyError, PolicyParams};
use crate::sim::Observation;

/// Activations kept from a forward pass so the backward pass can reuse them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardCache {
    /// Post-ReLU output of each convolution, `[c][h][w]`.
    pub(crate) conv: Vec<Vec<f64>>,
    /// Post-tanh output of the vector layer.
    pub(crate) vector: Vec<f64>,
    /// Concatenated image and vector features.
    pub(crate) joined: Vec<f64>,
    /// Post-ReLU output of each trunk layer.
    pub(crate) trunk: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub dist: ActionDistribution,
    pub value: f64,
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y = b + x W` with `W` stored `[in][out]`. Zero inputs are skipped,
/// which pays off on the mostly-empty observation vector and ReLU outputs.
fn dense_forward(p: &[f64], d: Dense, x: &[f64], y: &mut Vec<f64>) {
    y.clear();
    y.extend_from_slice(&p[d.b..d.b + d.outputs]);
    let w = &p[d.w..d.w + d.inputs * d.outputs];
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(y, xi, &w[i * d.outputs..(i + 1) * d.outputs]);
        }
    }
}

/// Accumulates parameter gradients for `y = b + x W` and optionally writes
/// the input gradient.
fn dense_backward(p: &[f64], d: Dense, x: &[f64], dy: &[f64], g: &mut [f64], dx: Option<&mut Vec<f64>>) {
    axpy(&mut g[d.b..d.b + d.outputs], 1.0, dy);
    let w = &p[d.w..d.w + d.inputs * d.outputs];
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            let at = d.w + i * d.outputs;
            axpy(&mut g[at..at + d.outputs], xi, dy);
        }
    }
    if let Some(dx) = dx {
        dx.clear();
        dx.extend((0..d.inputs).map(|i| dot(&w[i * d.outputs..(i + 1) * d.outputs], dy)));
    }
}

struct ConvGeom {
    c_in: usize,
    h_in: usize,
    w_in: usize,
    c_out: usize,
    h_out: usize,
    w_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    /// Input index feeding output `(oy, ox)` through kernel tap `(ky, kx)`.
    #[inline]
    fn tap(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad)?;
        (iy < self.h_in && ix < self.w_in).then_some((iy, ix))
    }
}

fn conv_forward(p: &[f64], d: Dense, g: &ConvGeom, x: &[f64], y: &mut Vec<f64>) {
    let (k, plane_in, plane_out) = (g.k, g.h_in * g.w_in, g.h_out * g.w_out);
    y.clear();
    y.resize(g.c_out * plane_out, 0.0);
    for o in 0..g.c_out {
        let bias = p[d.b + o];
        for oy in 0..g.h_out {
            for ox in 0..g.w_out {
                let mut acc = bias;
                for c in 0..g.c_in {
                    let wbase = d.w + (o * g.c_in + c) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some((iy, ix)) = g.tap(oy, ox, ky, kx) {
                                acc += p[wbase + ky * k + kx] * x[c * plane_in + iy * g.w_in + ix];
                            }
                        }
                    }
                }
                y[o * plane_out + oy * g.w_out + ox] = acc.max(0.0);
            }
        }
    }
}

/// `dy` is the gradient w.r.t. the post-ReLU output `y`.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    p: &[f64],
    d: Dense,
    geom: &ConvGeom,
    x: &[f64],
    y: &[f64],
    dy: &[f64],
    g: &mut [f64],
    mut dx: Option<&mut Vec<f64>>,
) {
    let (k, plane_in, plane_out) = (geom.k, geom.h_in * geom.w_in, geom.h_out * geom.w_out);
    if let Some(dx) = dx.as_deref_mut() {
        dx.clear();
        dx.resize(geom.c_in * plane_in, 0.0);
    }
    for o in 0..geom.c_out {
        for oy in 0..geom.h_out {
            for ox in 0..geom.w_out {
                let at = o * plane_out + oy * geom.w_out + ox;
                if y[at] <= 0.0 {
                    continue;
                }
                let dpre = dy[at];
                if dpre == 0.0 {
                    continue;
                }
                g[d.b + o] += dpre;
                for c in 0..geom.c_in {
                    let wbase = d.w + (o * geom.c_in + c) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some((iy, ix)) = geom.tap(oy, ox, ky, kx) {
                                let xi = c * plane_in + iy * geom.w_in + ix;
                                g[wbase + ky * k + kx] += dpre * x[xi];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[xi] += dpre * p[wbase + ky * k + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

impl PolicyParams {
    fn conv_geoms(&self) -> Vec<ConvGeom> {
        let cfg = &self.config;
        let mut out = Vec::new();
        let (mut c, mut h, mut w) = (cfg.image_channels, cfg.image_height, cfg.image_width);
        for (c_out, h_out, w_out) in cfg.conv_shapes() {
            out.push(ConvGeom {
                c_in: c,
                h_in: h,
                w_in: w,
                c_out,
                h_out,
                w_out,
                k: cfg.kernel,
                stride: cfg.stride,
                pad: cfg.padding(),
            });
            (c, h, w) = (c_out, h_out, w_out);
        }
        out
    }

    fn check_obs(&self, obs: &Observation) -> Result<(), PolicyError> {
        let cfg = &self.config;
        if obs.mode() != Some(cfg.obs_mode) {
            return Err(PolicyError::Shape(format!(
                "observation mode {:?} does not match network mode {:?}",
                obs.mode(),
                cfg.obs_mode
            )));
        }
        if let Some(img) = &obs.image {
            let want = cfg.image_channels * cfg.image_height * cfg.image_width;
            if img.len() != want {
                return Err(PolicyError::Shape(format!("image has {} entries, expected {want}", img.len())));
            }
        }
        if let Some(v) = &obs.vector {
            if v.len() != cfg.vector_len {
                return Err(PolicyError::Shape(format!(
                    "vector has {} entries, expected {}",
                    v.len(),
                    cfg.vector_len
                )));
            }
        }
        Ok(())
    }

    pub fn forward(&self, obs: &Observation) -> Result<ForwardCache, PolicyError> {
        let mut cache = ForwardCache::default();
        self.forward_into(obs, &mut cache)?;
        Ok(cache)
    }

    /// Pure function of `(self, obs)`; `cache` buffers are reused.
    pub fn forward_into(&self, obs: &Observation, cache: &mut ForwardCache) -> Result<(), PolicyError> {
        self.check_obs(obs)?;
        let p = &self.data;
        let l = &self.layout;
        cache.joined.clear();

        if let Some(img) = &obs.image {
            let geoms = self.conv_geoms();
            cache.conv.resize_with(geoms.len(), Vec::new);
            for (i, (geom, d)) in geoms.iter().zip(&l.conv).enumerate() {
                let (done, rest) = cache.conv.split_at_mut(i);
                let input: &[f64] = if i == 0 { img } else { &done[i - 1] };
                conv_forward(p, *d, geom, input, &mut rest[0]);
            }
            match cache.conv.last() {
                Some(last) => cache.joined.extend_from_slice(last),
                None => cache.joined.extend_from_slice(img),
            }
        } else {
            cache.conv.clear();
        }

        if let (Some(v), Some(d)) = (&obs.vector, l.vector) {
            dense_forward(p, d, v, &mut cache.vector);
            cache.vector.iter_mut().for_each(|a| *a = a.tanh());
            cache.joined.extend_from_slice(&cache.vector);
        } else {
            cache.vector.clear();
        }

        cache.trunk.resize_with(l.trunk.len(), Vec::new);
        for (i, d) in l.trunk.iter().enumerate() {
            let (done, rest) = cache.trunk.split_at_mut(i);
            let input: &[f64] = if i == 0 { &cache.joined } else { &done[i - 1] };
            dense_forward(p, *d, input, &mut rest[0]);
            rest[0].iter_mut().for_each(|a| *a = a.max(0.0));
        }
        let features: &[f64] = cache.trunk.last().unwrap_or(&cache.joined);

        dense_forward(p, l.heads, features, &mut cache.logits);
        let mut value = Vec::with_capacity(1);
        dense_forward(p, l.value, features, &mut value);
        cache.value = value[0];
        cache.dist = ActionDistribution::from_logits(&cache.logits, self.config.head_sizes());
        Ok(())
    }

    /// Backpropagates `dlogits` (gradient of the loss w.r.t. the raw head
    /// logits) and `dvalue` through the network, accumulating into `grads`.
    pub(crate) fn backward(
        &self,
        obs: &Observation,
        cache: &ForwardCache,
        dlogits: &[f64],
        dvalue: f64,
        grads: &mut [f64],
    ) {
        let p = &self.data;
        let l = &self.layout;
        let features: &[f64] = cache.trunk.last().unwrap_or(&cache.joined);

        let mut df = Vec::new();
        let mut tmp = Vec::new();
        dense_backward(p, l.heads, features, dlogits, grads, Some(&mut df));
        dense_backward(p, l.value, features, &[dvalue], grads, Some(&mut tmp));
        axpy(&mut df, 1.0, &tmp);

        for i in (0..l.trunk.len()).rev() {
            let out = &cache.trunk[i];
            for (g, &a) in df.iter_mut().zip(out) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            let input: &[f64] = if i == 0 { &cache.joined } else { &cache.trunk[i - 1] };
            dense_backward(p, l.trunk[i], input, &df, grads, Some(&mut tmp));
            std::mem::swap(&mut df, &mut tmp);
        }

        // df now holds d(loss)/d(joined): image features first, then vector.
        let split = self.config.image_features();
        if let (Some(v), Some(d)) = (&obs.vector, l.vector) {
            let dv: Vec<f64> = df[split..]
                .iter()
                .zip(&cache.vector)
                .map(|(g, a)| g * (1.0 - a * a))
                .collect();
            dense_backward(p, d, v, &dv, grads, None);
        }
        if let Some(img) = &obs.image {
            if l.conv.is_empty() {
                return;
            }
            let geoms = self.conv_geoms();
            let mut dy = df[..split].to_vec();
            for i in (0..l.conv.len()).rev() {
                let input: &[f64] = if i == 0 { img } else { &cache.conv[i - 1] };
                let dx = if i == 0 { None } else { Some(&mut tmp) };
                conv_backward(p, l.conv[i], &geoms[i], input, &cache.conv[i], &dy, grads, dx);
                if i > 0 {
                    std::mem::swap(&mut dy, &mut tmp);
                }
            }
        }
    }
}
