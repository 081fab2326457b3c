//! Training objectives. Every logistic term uses `softplus`, so
//! `-log σ(x) = softplus(-x)` and `-log(1 - σ(x)) = softplus(x)` stay finite
//! for any finite logit.

use crate::error::ModelError;
use crate::tensor::{Real, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_i: f64,
    pub lambda_s: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_i: 1.0,
            lambda_s: 1.0,
        }
    }
}

/// Scalar loss values of one training step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub g_total: f64,
    pub g_gan: f64,
    pub g_identity: f64,
    pub g_style: f64,
    pub d_total: f64,
    pub g_style_levels: Vec<f64>,
}

impl LossReport {
    pub fn csv_header(levels: usize) -> String {
        let mut cols = vec![
            "step".to_string(),
            "g_total".into(),
            "g_gan".into(),
            "g_identity".into(),
            "g_style".into(),
            "d_total".into(),
        ];
        cols.extend((0..levels).map(|l| format!("g_style_{l}")));
        cols.join(",")
    }

    /// One CSV row; `{:e}` prints the shortest representation that parses
    /// back to the same value.
    pub fn csv_row(&self, step: u64) -> String {
        let mut cols = vec![step.to_string()];
        for v in [self.g_total, self.g_gan, self.g_identity, self.g_style, self.d_total]
            .into_iter()
            .chain(self.g_style_levels.iter().copied())
        {
            cols.push(format!("{v:e}"));
        }
        cols.join(",")
    }

    pub fn all_finite(&self) -> bool {
        [self.g_total, self.g_gan, self.g_identity, self.g_style, self.d_total]
            .iter()
            .chain(&self.g_style_levels)
            .all(|v| v.is_finite())
    }

    /// `g_total - (g_gan + λ_i·g_identity + λ_s·Σ style)`.
    pub fn accounting_residual(&self, weights: &LossWeights) -> f64 {
        let style: f64 = self.g_style_levels.iter().sum();
        self.g_total - (self.g_gan + weights.lambda_i * self.g_identity + weights.lambda_s * style)
    }
}

fn mean_softplus<T: Real>(tape: &mut Tape<T>, x: Var, negate: bool) -> Var {
    let x = if negate { tape.neg(x) } else { x };
    let sp = tape.softplus(x);
    tape.mean(sp)
}

/// `-mean(log σ(real)) - mean(log(1 - σ(fake)))`.
pub fn gan_loss_d<T: Real>(tape: &mut Tape<T>, logit_real: Var, logit_fake: Var) -> Result<Var, ModelError> {
    let r = mean_softplus(tape, logit_real, true);
    let f = mean_softplus(tape, logit_fake, false);
    Ok(tape.add(r, f)?)
}

/// Non-saturating generator loss `-mean(log σ(fake))`.
pub fn gan_loss_g<T: Real>(tape: &mut Tape<T>, logit_fake: Var) -> Var {
    mean_softplus(tape, logit_fake, true)
}

/// Mean over the batch of `‖z - z_hat‖²`.
pub fn identity_loss<T: Real>(tape: &mut Tape<T>, z: Var, z_hat: Var) -> Result<Var, ModelError> {
    let (a, b) = (tape.shape(z).to_vec(), tape.shape(z_hat).to_vec());
    if a != b || a.len() != 2 {
        return Err(ModelError::Width {
            what: "identity loss",
            expected: *a.last().unwrap_or(&0),
            got: *b.last().unwrap_or(&0),
        });
    }
    let diff = tape.sub(z, z_hat)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, T::one() / T::from_usize(a[0]).unwrap()))
}

/// Per-level generator style terms; their sum is the style loss.
pub fn style_loss_g<T: Real>(tape: &mut Tape<T>, style_logits_fake: &[Var]) -> Result<(Var, Vec<Var>), ModelError> {
    if style_logits_fake.is_empty() {
        return Err(ModelError::Config("style loss needs at least one level".into()));
    }
    let levels: Vec<Var> = style_logits_fake.iter().map(|&l| gan_loss_g(tape, l)).collect();
    let mut total = levels[0];
    for &l in &levels[1..] {
        total = tape.add(total, l)?;
    }
    Ok((total, levels))
}

/// Discriminator side of the style terms: each level classifies real
/// statistics as real and fake statistics as fake.
pub fn style_loss_d<T: Real>(tape: &mut Tape<T>, real: &[Var], fake: &[Var]) -> Result<Var, ModelError> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(ModelError::Config(format!(
            "style levels differ: {} real vs {} fake",
            real.len(),
            fake.len()
        )));
    }
    let mut total = gan_loss_d(tape, real[0], fake[0])?;
    for (&r, &f) in real.iter().zip(fake).skip(1) {
        let term = gan_loss_d(tape, r, f)?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}

/// `gan + λ_i·identity + λ_s·style`.
pub fn total_loss_g<T: Real>(
    tape: &mut Tape<T>,
    gan: Var,
    identity: Var,
    style: Var,
    weights: &LossWeights,
) -> Result<Var, ModelError> {
    let id = tape.scale(identity, T::lit(weights.lambda_i));
    let st = tape.scale(style, T::lit(weights.lambda_s));
    let partial = tape.add(gan, id)?;
    Ok(tape.add(partial, st)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    const LN2: f64 = std::f64::consts::LN_2;

    fn vec1(t: &mut Tape<f64>, v: &[f64]) -> Var {
        t.leaf(Tensor::new(vec![v.len()], v.to_vec()).unwrap(), true)
    }

    fn naive_d(real: &[f64], fake: &[f64]) -> f64 {
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let r: f64 = real.iter().map(|&x| -s(x).ln()).sum::<f64>() / real.len() as f64;
        let f: f64 = fake.iter().map(|&x| -(1.0 - s(x)).ln()).sum::<f64>() / fake.len() as f64;
        r + f
    }

    #[test]
    fn zero_logits() {
        let mut t = Tape::new();
        let z = vec1(&mut t, &[0.0, 0.0]);
        let d = gan_loss_d(&mut t, z, z).unwrap();
        assert!((t.value(d).item() - 2.0 * LN2).abs() < 1e-12);
        let g = gan_loss_g(&mut t, z);
        assert!((t.value(g).item() - LN2).abs() < 1e-12);
        let (s, levels) = style_loss_g(&mut t, &[z, z, z]).unwrap();
        assert!((t.value(s).item() - 3.0 * LN2).abs() < 1e-12);
        assert_eq!(levels.len(), 3);
    }

    #[test]
    fn confident_logits_give_small_loss() {
        let mut t = Tape::new();
        let r = vec1(&mut t, &[40.0]);
        let f = vec1(&mut t, &[-40.0]);
        let d = gan_loss_d(&mut t, r, f).unwrap();
        assert!(t.value(d).item() < 1e-12);
        let g = gan_loss_g(&mut t, r);
        assert!(t.value(g).item() < 1e-12);
    }

    #[test]
    fn matches_naive_formula() {
        let real = [-3.0, 0.4, 7.5, -19.0];
        let fake = [2.2, -0.1, 19.9, -6.0];
        let mut t = Tape::new();
        let (r, f) = (vec1(&mut t, &real), vec1(&mut t, &fake));
        let d = gan_loss_d(&mut t, r, f).unwrap();
        assert!((t.value(d).item() - naive_d(&real, &fake)).abs() < 1e-6);
    }

    #[test]
    fn huge_logits_stay_finite() {
        let mut t = Tape::new();
        let x = vec1(&mut t, &[1e4, -1e4]);
        let d = gan_loss_d(&mut t, x, x).unwrap();
        let g = gan_loss_g(&mut t, x);
        assert!(t.value(d).item().is_finite() && t.value(g).item().is_finite());
        t.backward(d).unwrap();
        assert!(t.grad(x).unwrap().all_finite());
    }

    #[test]
    fn generator_gradient_pushes_logit_up() {
        let mut t = Tape::new();
        let x = vec1(&mut t, &[0.3, -2.0]);
        let g = gan_loss_g(&mut t, x);
        t.backward(g).unwrap();
        assert!(t.grad(x).unwrap().data().iter().all(|&v| v < 0.0));
    }

    #[test]
    fn identity_cases() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::zeros(vec![1, 128]), false);
        let ones = t.leaf(Tensor::ones(vec![1, 128]), false);
        let l = identity_loss(&mut t, z, ones).unwrap();
        assert_eq!(t.value(l).item(), 128.0);
        let same = identity_loss(&mut t, ones, ones).unwrap();
        assert_eq!(t.value(same).item(), 0.0);
        let a = t.leaf(Tensor::from_fn(vec![2, 3], |i| i as f64 * 0.3 - 0.7), false);
        let b = t.leaf(Tensor::from_fn(vec![2, 3], |i| (i as f64).sin()), false);
        let (na, nb) = (t.neg(a), t.neg(b));
        let l1 = identity_loss(&mut t, a, b).unwrap();
        let l2 = identity_loss(&mut t, na, nb).unwrap();
        assert_eq!(t.value(l1).item(), t.value(l2).item());
        let narrow = t.leaf(Tensor::zeros(vec![1, 127]), false);
        assert!(identity_loss(&mut t, z, narrow).is_err());
    }

    #[test]
    fn single_style_level_is_gan_g() {
        let mut t = Tape::new();
        let x = vec1(&mut t, &[0.7, -1.2]);
        let (s, _) = style_loss_g(&mut t, &[x]).unwrap();
        let g = gan_loss_g(&mut t, x);
        assert_eq!(t.value(s).item(), t.value(g).item());
        assert!(style_loss_g::<f64>(&mut t, &[]).is_err());
    }

    #[test]
    fn total_is_linear_in_weights() {
        let mut t = Tape::new();
        let gan = t.constant(Tensor::scalar(0.8));
        let id = t.constant(Tensor::scalar(2.5));
        let st = t.constant(Tensor::scalar(1.25));
        let eval = |t: &mut Tape<f64>, li, ls| {
            let w = LossWeights { lambda_i: li, lambda_s: ls };
            let v = total_loss_g(t, gan, id, st, &w).unwrap();
            t.value(v).item()
        };
        assert_eq!(eval(&mut t, 0.0, 0.0), 0.8);
        assert_eq!(eval(&mut t, 1.0, 1.0), 0.8 + 2.5 + 1.25);
        assert!((eval(&mut t, 2.0, 0.0) - 0.8 - 5.0).abs() < 1e-12);
        assert_eq!(LossWeights::default(), LossWeights { lambda_i: 1.0, lambda_s: 1.0 });
    }

    #[test]
    fn csv_row_round_trips() {
        let r = LossReport {
            g_total: 1.0 / 3.0,
            g_gan: 0.1,
            g_identity: 2.0,
            g_style: 0.5,
            d_total: 1.2,
            g_style_levels: vec![0.25, 0.25],
        };
        let row = r.csv_row(7);
        let parsed: Vec<f64> = row.split(',').skip(1).map(|c| c.parse().unwrap()).collect();
        assert_eq!(parsed[0], 1.0 / 3.0);
        assert_eq!(LossReport::csv_header(2).split(',').count(), row.split(',').count());
    }
}
