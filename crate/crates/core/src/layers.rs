//! Normalisation and modulation blocks: instance statistics, AdaIN, the
//! per-site style mapping network and spectral normalisation.
//!
//! Naming note: in the AdaIN formula the multiplier is written σ(z) and the
//! offset γ(z). Here the multiplier is `gamma` and the offset is `beta`.

use rand::Rng;

use crate::error::ModelError;
use crate::init;
use crate::params::ParamStore;
use crate::tensor::{Real, Tape, Tensor, Var};

/// Per-instance, per-channel mean and epsilon-stabilised standard deviation
/// over every spatial axis of `x: [N, spatial.., C]`, each shaped `[N, C]`.
pub fn instance_stats<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<(Var, Var), ModelError> {
    let rank = tape.shape(x).len();
    let spatial: Vec<usize> = (1..rank.saturating_sub(1)).collect();
    let count: usize = spatial.iter().map(|&a| tape.shape(x)[a]).product();
    if spatial.is_empty() || count < 2 {
        return Err(ModelError::Tensor(crate::tensor::TensorError::Shape {
            op: "instance_stats",
            detail: format!("{:?} needs at least 2 spatial elements", tape.shape(x)),
        }));
    }
    let mu = tape.mean_axes(x, &spatial)?;
    let sigma = tape.std_axes(x, &spatial)?;
    Ok((mu, sigma))
}

/// Modulation for one AdaIN site: `gamma` multiplies, `beta` offsets.
#[derive(Clone, Copy, Debug)]
pub struct StyleParams {
    pub gamma: Var,
    pub beta: Var,
}

/// `gamma ⊙ (x - μ(x)) / σ(x) + beta`, per instance and channel.
pub fn adain<T: Real>(tape: &mut Tape<T>, x: Var, style: StyleParams) -> Result<Var, ModelError> {
    let channels = *tape.shape(x).last().unwrap_or(&0);
    for v in [style.gamma, style.beta] {
        let got = *tape.shape(v).last().unwrap_or(&0);
        if got != channels {
            return Err(ModelError::Width {
                what: "adain style",
                expected: channels,
                got,
            });
        }
    }
    let normed = tape.instance_norm(x)?;
    Ok(tape.channel_affine(normed, style.gamma, style.beta)?)
}

/// Two dense layers with a leaky ReLU between them per modulation site,
/// mapping a latent code to `(gamma, beta)` for that site.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingNetwork {
    prefix: String,
    latent: usize,
    hidden: usize,
    sites: Vec<(String, usize)>,
}

impl MappingNetwork {
    pub fn new(prefix: impl Into<String>, latent: usize, hidden: usize) -> Self {
        Self {
            prefix: prefix.into(),
            latent,
            hidden,
            sites: Vec::new(),
        }
    }

    pub fn with_site(mut self, name: impl Into<String>, channels: usize) -> Self {
        self.sites.push((name.into(), channels));
        self
    }

    pub fn sites(&self) -> impl Iterator<Item = (&str, usize)> {
        self.sites.iter().map(|(n, c)| (n.as_str(), *c))
    }

    fn key(&self, site: &str, part: &str) -> String {
        format!("{}.{site}.{part}", self.prefix)
    }

    fn channels(&self, site: &str) -> Result<usize, ModelError> {
        self.sites
            .iter()
            .find(|(n, _)| n == site)
            .map(|(_, c)| *c)
            .ok_or_else(|| ModelError::UnknownSite(site.to_string()))
    }

    /// Normal weights; the output bias starts at `gamma = 1`, `beta = 0` so
    /// an untrained network modulates close to the identity.
    pub fn init_params<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, rng: &mut R) {
        for (site, c) in &self.sites {
            store.insert(self.key(site, "w1"), init::weight(vec![self.latent, self.hidden], rng));
            store.insert(self.key(site, "b1"), Tensor::zeros(vec![self.hidden]));
            store.insert(self.key(site, "w2"), init::weight(vec![self.hidden, 2 * c], rng));
            let bias = Tensor::from_fn(vec![2 * c], |i| if i < *c { T::one() } else { T::zero() });
            store.insert(self.key(site, "b2"), bias);
        }
    }

    /// Maps `z: [N, latent]` to the modulation of `site`.
    pub fn map_style<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        z: Var,
        site: &str,
        grad: bool,
    ) -> Result<StyleParams, ModelError> {
        let c = self.channels(site)?;
        let width = *tape.shape(z).last().unwrap_or(&0);
        if width != self.latent {
            return Err(ModelError::Width {
                what: "mapping network latent",
                expected: self.latent,
                got: width,
            });
        }
        let w1 = store.bind(tape, &self.key(site, "w1"), grad);
        let b1 = store.bind(tape, &self.key(site, "b1"), grad);
        let w2 = store.bind(tape, &self.key(site, "w2"), grad);
        let b2 = store.bind(tape, &self.key(site, "b2"), grad);
        let h = tape.linear(z, w1, b1)?;
        let h = tape.lrelu(h);
        let out = tape.linear(h, w2, b2)?;
        let gamma = tape.narrow(out, 1, 0, c)?;
        let beta = tape.narrow(out, 1, c, c)?;
        Ok(StyleParams { gamma, beta })
    }
}

fn normalize_in_place<T: Real>(v: &mut [T]) {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    let norm = norm.max(T::lit(crate::tensor::SIGMA_FLOOR));
    v.iter_mut().for_each(|x| *x /= norm);
}

/// `M u` for the `[fan_in, out]` view `M` of `w`, normalised.
fn right_vector<T: Real>(w: &Tensor<T>, u: &[T]) -> Vec<T> {
    let out = u.len();
    let mut v: Vec<T> = w
        .data()
        .chunks(out)
        .map(|row| row.iter().zip(u).map(|(&a, &b)| a * b).sum())
        .collect();
    normalize_in_place(&mut v);
    v
}

/// Runs `iters` power-iteration steps on the `[out, fan_in]` matrix view of
/// `w` (its last extent is `out`), updating `u` in place, and returns the
/// resulting largest-singular-value estimate.
pub fn power_iteration<T: Real>(w: &Tensor<T>, u: &mut [T], iters: usize) -> T {
    let out = u.len();
    for _ in 0..iters {
        let v = right_vector(w, u);
        let mut next = vec![T::zero(); out];
        for (row, &vi) in w.data().chunks(out).zip(&v) {
            for (n, &m) in next.iter_mut().zip(row) {
                *n += m * vi;
            }
        }
        normalize_in_place(&mut next);
        u.copy_from_slice(&next);
    }
    sigma_estimate(w, u)
}

/// `‖M u‖`, the estimate used to rescale the weight.
pub fn sigma_estimate<T: Real>(w: &Tensor<T>, u: &[T]) -> T {
    let out = u.len();
    w.data()
        .chunks(out)
        .map(|row| row.iter().zip(u).map(|(&a, &b)| a * b).sum::<T>())
        .map(|x| x * x)
        .sum::<T>()
        .sqrt()
}

/// A random unit vector for a fresh power-iteration state.
pub fn init_power_vector<T: Real, R: Rng + ?Sized>(out: usize, rng: &mut R) -> Tensor<T> {
    let mut u: Vec<T> = init::normal::<T, _>(vec![out], 1.0, rng).into_data();
    normalize_in_place(&mut u);
    Tensor::new(vec![out], u).expect("vector shape")
}

/// Divides `w` by its spectral-norm estimate given the persistent vector
/// `u`. `u` and the derived right vector are constants for differentiation.
pub fn spectral_normalize<T: Real>(tape: &mut Tape<T>, w: Var, u: &[T]) -> Result<Var, ModelError> {
    let out = *tape.shape(w).last().unwrap_or(&0);
    if u.len() != out {
        return Err(ModelError::Width {
            what: "spectral norm vector",
            expected: out,
            got: u.len(),
        });
    }
    let v = right_vector(tape.value(w), u);
    Ok(tape.spectral_scale(w, u, &v)?)
}

pub fn instance_norm<T: Real>(tape: &mut Tape<T>, x: Var) -> Result<Var, ModelError> {
    Ok(tape.instance_norm(x)?)
}
