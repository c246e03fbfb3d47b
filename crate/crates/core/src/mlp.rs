//! Minimal dense feed-forward networks with reverse-mode gradients.
//!
//! All learned function approximators in the crate (policy heads, value
//! functions, detector, reconstructor, attacker mean-net) are instances of
//! [`MlpParams`]: a flat `f64` parameter vector plus a layer-shape
//! description. The flat layout per layer is the row-major weight matrix
//! `(out, in)` followed by the bias vector `(out)`.
//!
//! Everything is 64-bit and allocation-light; `forward` is a pure function
//! of `(params, input)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the post-activation value.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Flat parameter block for a dense feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    data: Vec<f64>,
    init_seed: Option<u64>,
}

/// Gradient with the same flat layout as its [`MlpParams`].
#[derive(Debug, Clone)]
pub struct Grad {
    data: Vec<f64>,
}

impl Grad {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Grad {
            data: vec![0.0; params.data.len()],
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|g| *g *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|g| g.is_finite())
    }
}

/// Post-activation values of every layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    layer_outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.layer_outputs
            .last()
            .expect("cache holds at least one layer")
    }
}

fn flat_len(layer_sizes: &[usize]) -> usize {
    layer_sizes
        .windows(2)
        .map(|w| (w[0] + 1) * w[1])
        .sum::<usize>()
}

impl MlpParams {
    /// Zero-initialized network. `layer_sizes` is `[input, h1, ..., output]`;
    /// `activations` has one entry per weight layer.
    pub fn zeros(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(
                "network needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if activations.len() != layer_sizes.len() - 1 {
            return Err(Error::Config(format!(
                "expected {} activations, got {}",
                layer_sizes.len() - 1,
                activations.len()
            )));
        }
        let len = flat_len(&layer_sizes);
        Ok(MlpParams {
            layer_sizes,
            activations,
            data: vec![0.0; len],
            init_seed: None,
        })
    }

    /// Convenience constructor: `hidden` layers with `hidden_act`, final layer
    /// with `out_act`.
    pub fn new_seeded(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        out_act: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(out_act);
        let mut net = Self::zeros(sizes, acts)?;
        net.init_uniform(seed);
        Ok(net)
    }

    /// Uniform init in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, deterministic
    /// under `seed`.
    pub fn init_uniform(&mut self, seed: u64) {
        let mut rng = rng_from_seed(seed);
        let mut offset = 0;
        for l in 0..self.n_layers() {
            let (in_d, out_d) = self.layer_dims(l);
            let bound = 1.0 / (in_d as f64).sqrt();
            for k in 0..out_d * in_d + out_d {
                self.data[offset + k] = rng.random_range(-bound..bound);
            }
            offset += out_d * in_d + out_d;
        }
        self.init_seed = Some(seed);
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn init_seed(&self) -> Option<u64> {
        self.init_seed
    }

    fn layer_dims(&self, layer: usize) -> (usize, usize) {
        (self.layer_sizes[layer], self.layer_sizes[layer + 1])
    }

    fn layer_offset(&self, layer: usize) -> usize {
        flat_len(&self.layer_sizes[..layer + 1])
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Shape(format!(
                "input length {} != first layer input size {}",
                input.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Forward pass. Pure: identical inputs give bit-identical outputs.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.forward_cached(input)?;
        Ok(cache.layer_outputs.pop().expect("at least one layer"))
    }

    /// Forward pass keeping per-layer post-activations for [`Self::backward_cached`].
    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut layer_outputs = Vec::with_capacity(self.n_layers());
        let mut offset = 0;
        {
            let mut x: &[f64] = input;
            for l in 0..self.n_layers() {
                let (in_d, out_d) = self.layer_dims(l);
                let act = self.activations[l];
                let w = &self.data[offset..offset + out_d * in_d];
                let b = &self.data[offset + out_d * in_d..offset + out_d * in_d + out_d];
                let mut y = vec![0.0; out_d];
                for o in 0..out_d {
                    let row = &w[o * in_d..(o + 1) * in_d];
                    let mut acc = b[o];
                    for i in 0..in_d {
                        acc += row[i] * x[i];
                    }
                    y[o] = act.apply(acc);
                }
                layer_outputs.push(y);
                x = layer_outputs.last().unwrap();
                offset += out_d * in_d + out_d;
            }
        }
        Ok(ForwardCache {
            input: input.to_vec(),
            layer_outputs,
        })
    }

    /// Reverse-mode gradient of `output · output_grad` with respect to the
    /// parameters. Returns the gradient and the input gradient.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Grad, Vec<f64>)> {
        let cache = self.forward_cached(input)?;
        let mut grad = Grad::zeros_like(self);
        let input_grad = self.backward_cached_into(&cache, output_grad, &mut grad, 1.0)?;
        Ok((grad, input_grad))
    }

    /// As [`Self::backward`], reusing a forward cache and accumulating
    /// `scale * gradient` into `grad`. Returns the input gradient (scaled).
    pub fn backward_cached_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grad: &mut Grad,
        scale: f64,
    ) -> Result<Vec<f64>> {
        if output_grad.len() != self.output_size() {
            return Err(Error::Shape(format!(
                "output_grad length {} != output size {}",
                output_grad.len(),
                self.output_size()
            )));
        }
        if grad.data.len() != self.data.len() {
            return Err(Error::Shape("gradient buffer shape mismatch".into()));
        }
        let mut upstream: Vec<f64> = output_grad.iter().map(|g| g * scale).collect();
        for l in (0..self.n_layers()).rev() {
            let (in_d, out_d) = self.layer_dims(l);
            let offset = self.layer_offset(l);
            let act = self.activations[l];
            let y = &cache.layer_outputs[l];
            let x: &[f64] = if l == 0 {
                &cache.input
            } else {
                &cache.layer_outputs[l - 1]
            };
            // d(post-activation)/d(pre-activation) folded into the upstream signal.
            let mut g_pre = upstream;
            for o in 0..out_d {
                g_pre[o] *= act.derivative_from_output(y[o]);
            }
            let (gw, gb) = grad.data[offset..offset + out_d * in_d + out_d]
                .split_at_mut(out_d * in_d);
            let w = &self.data[offset..offset + out_d * in_d];
            let mut g_x = vec![0.0; in_d];
            for o in 0..out_d {
                let go = g_pre[o];
                if go == 0.0 {
                    continue;
                }
                let row = &w[o * in_d..(o + 1) * in_d];
                let grow = &mut gw[o * in_d..(o + 1) * in_d];
                for i in 0..in_d {
                    grow[i] += go * x[i];
                    g_x[i] += go * row[i];
                }
                gb[o] += go;
            }
            upstream = g_x;
        }
        Ok(upstream)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|p| p.is_finite())
    }
}

/// Adam first/second-moment state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        AdamState {
            m: vec![0.0; params.data.len()],
            v: vec![0.0; params.data.len()],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update, in place. Rejects non-finite gradients and guarantees the
/// parameters stay finite.
pub fn adam_step(
    params: &mut MlpParams,
    grad: &Grad,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    if grad.data.len() != params.data.len() {
        return Err(Error::Shape("gradient/parameter shape mismatch".into()));
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient passed to adam_step".into()));
    }
    state.t += 1;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for k in 0..params.data.len() {
        let g = grad.data[k];
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g;
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        params.data[k] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    if !params.all_finite() {
        return Err(Error::NonFinite("parameters after adam_step".into()));
    }
    Ok(())
}

/// Serialization: flat little-endian `f64` blob plus a JSON sidecar with the
/// layer shape, activations and init seed.
#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    seed: Option<u64>,
}

impl MlpParams {
    pub fn save(&self, dir: &std::path::Path, name: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut blob = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(dir.join(format!("{name}.bin")), blob)?;
        let sidecar = Sidecar {
            layer_sizes: self.layer_sizes.clone(),
            activations: self.activations.clone(),
            seed: self.init_seed,
        };
        std::fs::write(
            dir.join(format!("{name}.json")),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &std::path::Path, name: &str) -> Result<Self> {
        let sidecar: Sidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json")))?)?;
        let blob = std::fs::read(dir.join(format!("{name}.bin")))?;
        let expected = flat_len(&sidecar.layer_sizes);
        if blob.len() != expected * 8 {
            return Err(Error::Shape(format!(
                "blob holds {} bytes, layer sizes require {}",
                blob.len(),
                expected * 8
            )));
        }
        let data: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut params = MlpParams::zeros(sidecar.layer_sizes, sidecar.activations)?;
        params.data = data;
        params.init_seed = sidecar.seed;
        Ok(params)
    }
}
