//! Image discriminator with a shared identity encoder.
//!
//! Four spectrally normalised stride-2 convolutions form the trunk. After
//! trunk levels 1 to 3 the per-channel mean and standard deviation of the
//! activations (taken before instance normalisation) feed a small style
//! classifier. The flattened trunk output feeds two dense heads: the
//! real/fake logit and the latent reconstruction `z_hat`.

use rand::Rng;

use crate::error::ModelError;
use crate::init;
use crate::layers;
use crate::params::ParamStore;
use crate::tensor::{Real, Tape, Tensor, Var};

pub const KERNEL: usize = 5;
pub const TRUNK_DEPTH: usize = 4;
/// Trunk levels that feed a style classifier.
pub const STYLE_LEVELS: [usize; 3] = [1, 2, 3];

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    pub channels: [usize; TRUNK_DEPTH],
}

impl DiscriminatorConfig {
    pub fn standard(resolution: usize, latent_dim: usize) -> Self {
        Self {
            resolution,
            latent_dim,
            channels: [64, 128, 256, 512],
        }
    }

    pub fn desk(resolution: usize, latent_dim: usize) -> Self {
        Self {
            resolution,
            latent_dim,
            channels: [16, 32, 32, 64],
        }
    }

    pub fn tiny(resolution: usize, latent_dim: usize) -> Self {
        Self {
            resolution,
            latent_dim,
            channels: [2, 2, 3, 2],
        }
    }

    pub fn preset(name: &str, resolution: usize, latent_dim: usize) -> Option<Self> {
        match name {
            "standard" => Some(Self::standard(resolution, latent_dim)),
            "desk" => Some(Self::desk(resolution, latent_dim)),
            "tiny" => Some(Self::tiny(resolution, latent_dim)),
            _ => None,
        }
    }

    /// Spatial extent after the trunk.
    pub fn final_extent(&self) -> usize {
        self.resolution >> TRUNK_DEPTH
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.resolution % (1 << TRUNK_DEPTH) != 0 || self.final_extent() < 2 {
            return Err(ModelError::Config(format!(
                "discriminator resolution {} must be a multiple of 32",
                self.resolution
            )));
        }
        if self.latent_dim == 0 || self.channels.contains(&0) {
            return Err(ModelError::Config("discriminator widths must be positive".into()));
        }
        Ok(())
    }
}

/// Outputs of one discriminator pass.
#[derive(Clone, Debug)]
pub struct DiscOutput {
    /// `[N]` real/fake logits.
    pub logit: Var,
    /// One `[N]` logit per style level.
    pub style_logits: Vec<Var>,
    /// `[N, d]` in `(-1, 1)`.
    pub z_hat: Var,
    /// Trunk activations entering instance normalisation, per style level.
    pub pre_norm: Vec<Var>,
    /// Trunk activations right after instance normalisation, per style level.
    pub normalized: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    config: DiscriminatorConfig,
    pub params: ParamStore<T>,
}

fn conv_name(i: usize) -> String {
    format!("d.conv{i}")
}

impl<T: Real> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut cin = 3;
        for (i, &c) in config.channels.iter().enumerate() {
            let name = conv_name(i);
            params.insert(format!("{name}.w"), init::weight(vec![KERNEL, KERNEL, cin, c], rng));
            params.insert(format!("{name}.b"), Tensor::zeros(vec![c]));
            params.insert_buffer(format!("{name}.u"), layers::init_power_vector(c, rng));
            cin = c;
        }
        for &l in &STYLE_LEVELS {
            let c = config.channels[l];
            params.insert(format!("d.style{l}.w1"), init::weight(vec![2 * c, c], rng));
            params.insert(format!("d.style{l}.b1"), Tensor::zeros(vec![c]));
            params.insert(format!("d.style{l}.w2"), init::weight(vec![c, 1], rng));
            params.insert(format!("d.style{l}.b2"), Tensor::zeros(vec![1]));
        }
        let e = config.final_extent();
        let flat = e * e * config.channels[TRUNK_DEPTH - 1];
        params.insert("d.logit.w", init::weight(vec![flat, 1], rng));
        params.insert("d.logit.b", Tensor::zeros(vec![1]));
        params.insert("d.encode.w", init::weight(vec![flat, config.latent_dim], rng));
        params.insert("d.encode.b", Tensor::zeros(vec![config.latent_dim]));
        Ok(Self { config, params })
    }

    pub fn from_params(config: DiscriminatorConfig, params: ParamStore<T>) -> Result<Self, ModelError> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let template = Self::new(config, &mut rng)?;
        let expected = template.params.params().chain(template.params.buffers());
        for (name, t) in expected {
            let got = params
                .get(name)
                .or_else(|| params.buffer(name))
                .ok_or_else(|| ModelError::Config(format!("missing parameter {name}")))?;
            if got.shape() != t.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(Self {
            config: template.config,
            params,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn cast<U: Real>(&self) -> Discriminator<U> {
        Discriminator {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Advances every trunk power-iteration vector by `iters` steps.
    pub fn power_iterate(&mut self, iters: usize) {
        for i in 0..TRUNK_DEPTH {
            let name = conv_name(i);
            let w = self.params.get(&format!("{name}.w")).expect("trunk weight").clone();
            let u = self.params.buffer_mut(&format!("{name}.u")).expect("trunk vector");
            layers::power_iteration(&w, u.data_mut(), iters);
        }
    }

    /// The effective (normalised) weight of trunk conv `i` under the stored
    /// power-iteration vector.
    pub fn normalized_weight(&self, i: usize) -> Tensor<T> {
        let name = conv_name(i);
        let w = self.params.get(&format!("{name}.w")).expect("trunk weight");
        let u = self.params.buffer(&format!("{name}.u")).expect("trunk vector");
        let sigma = layers::sigma_estimate(w, u.data()).max(T::lit(crate::tensor::SIGMA_FLOOR));
        w.map(|x| x / sigma)
    }

    fn style_head(&self, tape: &mut Tape<T>, h: Var, level: usize, grad: bool) -> Result<Var, ModelError> {
        let (mu, sigma) = layers::instance_stats(tape, h)?;
        let stats = tape.concat(&[mu, sigma], 1)?;
        let w1 = self.params.bind(tape, &format!("d.style{level}.w1"), grad);
        let b1 = self.params.bind(tape, &format!("d.style{level}.b1"), grad);
        let w2 = self.params.bind(tape, &format!("d.style{level}.w2"), grad);
        let b2 = self.params.bind(tape, &format!("d.style{level}.b2"), grad);
        let hidden = tape.linear(stats, w1, b1)?;
        let hidden = tape.lrelu(hidden);
        let out = tape.linear(hidden, w2, b2)?;
        let n = tape.shape(out)[0];
        Ok(tape.reshape(out, vec![n])?)
    }

    /// Records a discriminator pass over `x: [N, res, res, 3]`. With `grad`
    /// false the parameters enter as constants (gradients still flow to `x`).
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, grad: bool) -> Result<DiscOutput, ModelError> {
        let shape = tape.shape(x).to_vec();
        let res = self.config.resolution;
        if shape.len() != 4 || shape[1] != res || shape[2] != res || shape[3] != 3 {
            return Err(ModelError::Resolution {
                expected: res,
                got: shape.get(1).copied().unwrap_or(0),
            });
        }
        let n = shape[0];
        let mut h = x;
        let mut style_logits = Vec::with_capacity(STYLE_LEVELS.len());
        let mut normalized = Vec::with_capacity(STYLE_LEVELS.len());
        let mut pre_norm = Vec::with_capacity(STYLE_LEVELS.len());
        for i in 0..TRUNK_DEPTH {
            let name = conv_name(i);
            let w = self.params.bind(tape, &format!("{name}.w"), grad);
            let b = self.params.bind(tape, &format!("{name}.b"), grad);
            let u = self.params.buffer(&format!("{name}.u")).expect("trunk vector");
            let w = layers::spectral_normalize(tape, w, u.data())?;
            h = tape.conv2d(h, w, b, 2, KERNEL / 2)?;
            if STYLE_LEVELS.contains(&i) {
                style_logits.push(self.style_head(tape, h, i, grad)?);
                pre_norm.push(h);
                h = tape.instance_norm(h)?;
                normalized.push(h);
            }
            h = tape.lrelu(h);
        }
        let flat_len: usize = tape.shape(h)[1..].iter().product();
        let flat = tape.reshape(h, vec![n, flat_len])?;
        let w = self.params.bind(tape, "d.logit.w", grad);
        let b = self.params.bind(tape, "d.logit.b", grad);
        let logit = tape.linear(flat, w, b)?;
        let logit = tape.reshape(logit, vec![n])?;
        let w = self.params.bind(tape, "d.encode.w", grad);
        let b = self.params.bind(tape, "d.encode.b", grad);
        let z = tape.linear(flat, w, b)?;
        let z_hat = tape.tanh(z);
        Ok(DiscOutput {
            logit,
            style_logits,
            z_hat,
            pre_norm,
            normalized,
        })
    }

    /// Latent reconstruction for a batch of images.
    pub fn encode(&self, x: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let out = self.forward(&mut tape, v, false)?;
        Ok(tape.value(out.z_hat).clone())
    }
}
