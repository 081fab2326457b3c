//! Samplers, the alternating discriminator/generator update and the
//! training state that checkpoints capture.

mod adam;
mod checkpoint;
mod config;
mod session;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{BatchSampler, DataError, Dataset};
use crate::discriminator::Discriminator;
use crate::error::ModelError;
use crate::generator::{Generator, RenderMode};
use crate::geometry::{Pose, PoseRange};
use crate::losses::{self, LossReport, LossWeights};
use crate::tensor::{Real, Tape, Tensor, Var};

pub use adam::{Adam, AdamHyper, StepOutcome};
pub use checkpoint::{
    decode_archive, encode_archive, load_checkpoint, save_checkpoint, Archive, CheckpointError, Record,
    FORMAT_VERSION, MAGIC,
};
pub use config::{ConfigError, KeyInfo, KeyKind, TrainConfig};
pub use session::{dataset_for, Session};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite {phase} loss at step {step}: {report:?}")]
    NonFinite {
        step: u64,
        phase: &'static str,
        report: LossReport,
    },
    #[error("bad batch: {0}")]
    Batch(String),
}

/// One code with i.i.d. components uniform on `[-1, 1]`.
pub fn sample_latent<T: Real, R: Rng + ?Sized>(rng: &mut R, d: usize) -> Tensor<T> {
    Tensor::from_fn(vec![d], |_| T::lit(rng.random_range(-1.0..=1.0)))
}

/// `[n, d]` latent batch.
pub fn sample_latents<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize) -> Tensor<T> {
    Tensor::from_fn(vec![n, d], |_| T::lit(rng.random_range(-1.0..=1.0)))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Each pose component uniform in its interval.
pub fn sample_pose<R: Rng + ?Sized>(rng: &mut R, range: &PoseRange) -> Pose {
    let azimuth = uniform(rng, range.azimuth_min, range.azimuth_max);
    let elevation = uniform(rng, range.elevation_min, range.elevation_max);
    let scale = uniform(rng, range.scale_min, range.scale_max);
    Pose::new(azimuth, elevation, scale)
}

/// Tape handles of the generator objective.
#[derive(Clone, Debug)]
pub struct GeneratorLoss {
    pub total: Var,
    pub gan: Var,
    pub identity: Var,
    pub style: Var,
    pub style_levels: Vec<Var>,
}

/// Records the full generator objective for codes `z` (used for both `z1`
/// and `z2`). The discriminator enters as constants.
pub fn generator_loss<T: Real>(
    tape: &mut Tape<T>,
    g: &Generator<T>,
    d: &Discriminator<T>,
    z: Var,
    poses: &[Pose],
    weights: &LossWeights,
) -> Result<GeneratorLoss, ModelError> {
    let trace = g.forward(tape, z, z, poses, RenderMode::Train, true)?;
    let out = d.forward(tape, trace.image, false)?;
    let gan = losses::gan_loss_g(tape, out.logit);
    let identity = losses::identity_loss(tape, z, out.z_hat)?;
    let (style, style_levels) = losses::style_loss_g(tape, &out.style_logits)?;
    let total = losses::total_loss_g(tape, gan, identity, style, weights)?;
    Ok(GeneratorLoss {
        total,
        gan,
        identity,
        style,
        style_levels,
    })
}

/// Discriminator objective: real/fake logits, mirrored style terms and,
/// optionally, the identity term on the fakes.
pub fn discriminator_loss<T: Real>(
    tape: &mut Tape<T>,
    d: &Discriminator<T>,
    real: Var,
    fake: Var,
    z: Var,
    weights: &LossWeights,
    identity_updates_d: bool,
) -> Result<Var, ModelError> {
    let r = d.forward(tape, real, true)?;
    let f = d.forward(tape, fake, true)?;
    let gan = losses::gan_loss_d(tape, r.logit, f.logit)?;
    let style = losses::style_loss_d(tape, &r.style_logits, &f.style_logits)?;
    let mut total = tape.add(gan, style)?;
    if identity_updates_d {
        let id = losses::identity_loss(tape, z, f.z_hat)?;
        let id = tape.scale(id, T::lit(weights.lambda_i));
        total = tape.add(total, id)?;
    }
    Ok(total)
}

fn collect_grads<T: Real>(tape: &Tape<T>) -> Vec<(String, Tensor<T>)> {
    tape.bound_grads()
        .filter_map(|(name, g)| g.map(|g| (name.to_string(), g.clone())))
        .collect()
}

/// Everything that evolves during training. Checkpoints capture it whole.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub opt_g: Adam<f32>,
    pub opt_d: Adam<f32>,
    /// Completed steps.
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub sampler: BatchSampler,
}

impl Trainer {
    pub fn new(config: TrainConfig, dataset_len: usize) -> Result<Self, TrainError> {
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = Generator::new(config.generator_config()?, &mut init)?;
        let discriminator = Discriminator::new(config.discriminator_config()?, &mut init)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let opt_g = Adam::new(hyper(&config, config.lr_g), &generator.params);
        let opt_d = Adam::new(hyper(&config, config.lr_d), &discriminator.params);
        Ok(Self {
            sampler: BatchSampler::new(dataset_len, config.seed),
            config,
            generator,
            discriminator,
            opt_g,
            opt_d,
            step: 0,
            rng,
        })
    }

    pub fn next_batch(&mut self, dataset: &Dataset) -> Tensor<f32> {
        self.sampler.next_batch(dataset, self.config.batch_size)
    }

    fn check_batch(&self, real: &Tensor<f32>) -> Result<usize, TrainError> {
        let res = self.config.resolution;
        match real.shape() {
            [n, h, w, 3] if *h == res && *w == res && *n >= 1 => {}
            s => return Err(TrainError::Batch(format!("expected [N, {res}, {res}, 3], got {s:?}"))),
        }
        if !real.data().iter().all(|v| (-1.0..=1.0).contains(v)) {
            return Err(TrainError::Batch("pixel values outside [-1, 1]".into()));
        }
        Ok(real.shape()[0])
    }

    fn sample_poses(&mut self, n: usize) -> Vec<Pose> {
        let range = self.config.pose_range();
        (0..n).map(|_| sample_pose(&mut self.rng, &range)).collect()
    }

    /// One discriminator update followed by one generator update on fresh
    /// samples.
    pub fn train_step(&mut self, real: &Tensor<f32>) -> Result<LossReport, TrainError> {
        let n = self.check_batch(real)?;
        let d_lat = self.config.latent_dim;
        let weights = self.config.loss_weights();
        let mut report = LossReport::default();

        // Discriminator.
        let z = sample_latents::<f32, _>(&mut self.rng, n, d_lat);
        let poses = self.sample_poses(n);
        let fake = {
            let mut tape = Tape::new();
            let zv = tape.constant(z.clone());
            let trace = self.generator.forward(&mut tape, zv, zv, &poses, RenderMode::Train, false)?;
            tape.value(trace.image).clone()
        };
        self.discriminator.power_iterate(1);
        let mut tape = Tape::new();
        let rv = tape.constant(real.clone());
        let fv = tape.constant(fake);
        let zv = tape.constant(z);
        let d_loss = discriminator_loss(
            &mut tape,
            &self.discriminator,
            rv,
            fv,
            zv,
            &weights,
            self.config.identity_updates_d,
        )?;
        report.d_total = tape.value(d_loss).item() as f64;
        if !report.d_total.is_finite() {
            return Err(self.non_finite("discriminator", report));
        }
        tape.backward(d_loss)?;
        self.opt_d.step(&mut self.discriminator.params, &collect_grads(&tape));

        // Generator.
        let z = sample_latents::<f32, _>(&mut self.rng, n, d_lat);
        let poses = self.sample_poses(n);
        let mut tape = Tape::new();
        let zv = tape.constant(z);
        let parts = generator_loss(&mut tape, &self.generator, &self.discriminator, zv, &poses, &weights)?;
        let value = |v: Var| tape.value(v).item() as f64;
        report.g_total = value(parts.total);
        report.g_gan = value(parts.gan);
        report.g_identity = value(parts.identity);
        report.g_style = value(parts.style);
        report.g_style_levels = parts.style_levels.iter().map(|&v| value(v)).collect();
        if !report.all_finite() {
            return Err(self.non_finite("generator", report));
        }
        tape.backward(parts.total)?;
        self.opt_g.step(&mut self.generator.params, &collect_grads(&tape));

        self.step += 1;
        Ok(report)
    }

    fn non_finite(&self, phase: &'static str, report: LossReport) -> TrainError {
        log::error!("non-finite {phase} loss at step {}: {report:?}", self.step + 1);
        TrainError::NonFinite {
            step: self.step + 1,
            phase,
            report,
        }
    }
}

fn hyper(config: &TrainConfig, lr: f64) -> AdamHyper {
    AdamHyper {
        lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.adam_eps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Primitive, SyntheticSpec};

    pub(crate) fn tiny_config() -> TrainConfig {
        TrainConfig {
            batch_size: 2,
            resolution: 32,
            channels: "tiny".into(),
            latent_dim: 4,
            mapping_hidden: 4,
            ..TrainConfig::default()
        }
    }

    fn dataset() -> Dataset {
        Dataset::synthetic(SyntheticSpec::new(Primitive::Chair, 32, 0), 8)
    }

    #[test]
    fn latents_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = sample_latent::<f64, _>(&mut rng, 100_000);
        assert!(z.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let mean = z.sum() / 1e5;
        assert!(mean.abs() < 0.02, "{mean}");
        assert_eq!(TrainConfig::default().latent_dim, 128);
    }

    #[test]
    fn degenerate_range_gives_constant_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let range = PoseRange {
            azimuth_min: 30.0,
            azimuth_max: 30.0,
            elevation_min: -5.0,
            elevation_max: -5.0,
            scale_min: 1.0,
            scale_max: 1.0,
        };
        for _ in 0..5 {
            assert_eq!(sample_pose(&mut rng, &range), Pose::new(30.0, -5.0, 1.0));
        }
    }

    #[test]
    fn poses_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let range = TrainConfig {
            azimuth_min: 0.0,
            azimuth_max: 360.0,
            ..TrainConfig::default()
        }
        .pose_range();
        for _ in 0..1000 {
            let p = sample_pose(&mut rng, &range);
            assert!((0.0..=360.0).contains(&p.azimuth));
            assert!((-17.5..=17.5).contains(&p.elevation));
            assert!((0.9..=1.1).contains(&p.scale));
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let ds = dataset();
        let mut a = Trainer::new(tiny_config(), ds.len()).unwrap();
        let mut b = Trainer::new(tiny_config(), ds.len()).unwrap();
        for _ in 0..10 {
            let (ba, bb) = (a.next_batch(&ds), b.next_batch(&ds));
            let ra = a.train_step(&ba).unwrap();
            assert_eq!(ra, b.train_step(&bb).unwrap());
            assert!(ra.all_finite());
            assert!(ra.accounting_residual(&a.config.loss_weights()).abs() <= 1e-6);
        }
        assert_eq!(a.step, 10);
    }

    #[test]
    fn zero_weights_leave_pure_gan_loss() {
        let ds = dataset();
        let cfg = TrainConfig {
            lambda_i: 0.0,
            lambda_s: 0.0,
            ..tiny_config()
        };
        let mut t = Trainer::new(cfg, ds.len()).unwrap();
        let batch = t.next_batch(&ds);
        let r = t.train_step(&batch).unwrap();
        assert_eq!(r.g_total, r.g_gan);
    }

    #[test]
    fn shapes_never_change() {
        let ds = dataset();
        let mut t = Trainer::new(tiny_config(), ds.len()).unwrap();
        let before: Vec<Vec<usize>> = t.generator.params.params().map(|(_, p)| p.shape().to_vec()).collect();
        let batch = t.next_batch(&ds);
        t.train_step(&batch).unwrap();
        let after: Vec<Vec<usize>> = t.generator.params.params().map(|(_, p)| p.shape().to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn bad_batches_rejected() {
        let mut t = Trainer::new(tiny_config(), 8).unwrap();
        assert!(matches!(t.train_step(&Tensor::zeros(vec![2, 16, 16, 3])), Err(TrainError::Batch(_))));
        assert!(matches!(t.train_step(&Tensor::full(vec![2, 32, 32, 3], 2.0)), Err(TrainError::Batch(_))));
    }
}
