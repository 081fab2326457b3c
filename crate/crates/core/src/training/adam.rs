use indexmap::IndexMap;

use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Outcome of one optimizer step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A gradient contained NaN or infinity; nothing was touched.
    Skipped { param: String },
}

/// Bias-corrected Adam with per-parameter moments keyed by name.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub hyper: AdamHyper,
    /// Number of applied steps.
    pub t: u64,
    pub m: IndexMap<String, Tensor<T>>,
    pub v: IndexMap<String, Tensor<T>>,
}

/// One in-place Adam update at step `t` (1-based).
fn update<T: Real>(p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], h: &AdamHyper, t: u64) {
    let (b1, b2) = (T::lit(h.beta1), T::lit(h.beta2));
    let c1 = T::lit(1.0 - h.beta1.powi(t as i32));
    let c2 = T::lit(1.0 - h.beta2.powi(t as i32));
    let (lr, eps) = (T::lit(h.lr), T::lit(h.eps));
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (T::one() - b1) * g[i];
        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

impl<T: Real> Adam<T> {
    pub fn new(hyper: AdamHyper, params: &ParamStore<T>) -> Self {
        let zeros = |(n, t): (&str, &Tensor<T>)| (n.to_string(), Tensor::zeros(t.shape().to_vec()));
        Self {
            hyper,
            t: 0,
            m: params.params().map(zeros).collect(),
            v: params.params().map(zeros).collect(),
        }
    }

    /// Updates every parameter named in `grads`. Parameters without a
    /// gradient keep their value and moments.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[(String, Tensor<T>)]) -> StepOutcome {
        if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
            log::warn!("non-finite gradient for {name}; optimizer step skipped");
            return StepOutcome::Skipped { param: name.clone() };
        }
        self.t += 1;
        for (name, g) in grads {
            let p = params.get_mut(name).expect("gradient for a known parameter");
            assert_eq!(p.shape(), g.shape(), "gradient shape for {name}");
            let m = self.m.get_mut(name).expect("moment for a known parameter");
            let v = self.v.get_mut(name).expect("moment for a known parameter");
            update(p.data_mut(), g.data(), m.data_mut(), v.data_mut(), &self.hyper, self.t);
        }
        StepOutcome::Applied
    }
}
