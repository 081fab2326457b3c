//! The 3D-aware generator.
//!
//! A learnt constant volume is grown by two styled 3D blocks, rotated into
//! the requested pose, morphed by two plain 3D convolutions, collapsed to a
//! 2D feature map by the projection unit and refined by styled 2D blocks
//! into an RGB image in `[-1, 1]`. `z1` drives the 3D blocks and `z2` the
//! 2D blocks.

use rand::Rng;

use crate::error::ModelError;
use crate::geometry::{self, Pose};
use crate::init;
use crate::layers::{self, MappingNetwork};
use crate::params::ParamStore;
use crate::tensor::{Real, Tape, Tensor, Var};

/// Edge length of the constant volume.
pub const CONSTANT_EXTENT: usize = 4;
/// Edge length of the volume handed to the rigid transform.
pub const VOLUME_EXTENT: usize = 16;

/// Supported output resolutions.
pub const RESOLUTIONS: [usize; 3] = [32, 64, 128];

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSchedule {
    pub constant: usize,
    /// Output channels of the two 3D blocks (8³ then 16³).
    pub volume: [usize; 2],
    /// Channels produced by the projection unit.
    pub projection: usize,
    /// Output channels of each 2D block, one block per doubling above 16².
    pub image: Vec<usize>,
}

fn blocks_2d(resolution: usize) -> usize {
    (resolution / VOLUME_EXTENT).trailing_zeros() as usize
}

impl ChannelSchedule {
    /// 4³×512 constant growing to 16³×64, projected to 512 channels.
    pub fn standard(resolution: usize) -> Self {
        let image = [256, 64, 32][..blocks_2d(resolution).min(3)].to_vec();
        Self {
            constant: 512,
            volume: [256, 64],
            projection: 512,
            image,
        }
    }

    /// A narrow schedule sized for CPU training runs.
    pub fn desk(resolution: usize) -> Self {
        let image = [16, 8, 8][..blocks_2d(resolution).min(3)].to_vec();
        Self {
            constant: 16,
            volume: [8, 4],
            projection: 32,
            image,
        }
    }

    /// Two channels everywhere; used by gradient checks.
    pub fn tiny(resolution: usize) -> Self {
        Self {
            constant: 2,
            volume: [2, 2],
            projection: 3,
            image: vec![2; blocks_2d(resolution).min(3)],
        }
    }

    pub fn preset(name: &str, resolution: usize) -> Option<Self> {
        match name {
            "standard" => Some(Self::standard(resolution)),
            "desk" => Some(Self::desk(resolution)),
            "tiny" => Some(Self::tiny(resolution)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub resolution: usize,
    pub latent_dim: usize,
    pub mapping_hidden: usize,
    /// Ignore poses while training (the transform is forced to identity).
    pub no_rotation: bool,
    /// Replace the learnt constant with a dense layer from `z` and every
    /// AdaIN with plain instance normalisation.
    pub traditional_z: bool,
    pub channels: ChannelSchedule,
}

impl GeneratorConfig {
    pub fn new(resolution: usize, channels: ChannelSchedule) -> Self {
        Self {
            resolution,
            latent_dim: 128,
            mapping_hidden: 128,
            no_rotation: false,
            traditional_z: false,
            channels,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !RESOLUTIONS.contains(&self.resolution) {
            return Err(ModelError::Config(format!(
                "resolution {} not in {RESOLUTIONS:?}",
                self.resolution
            )));
        }
        if self.channels.image.len() != blocks_2d(self.resolution) {
            return Err(ModelError::Config(format!(
                "resolution {} needs {} 2D blocks, schedule has {}",
                self.resolution,
                blocks_2d(self.resolution),
                self.channels.image.len()
            )));
        }
        if self.latent_dim == 0 || self.mapping_hidden == 0 {
            return Err(ModelError::Config("latent and mapping widths must be positive".into()));
        }
        let c = &self.channels;
        if [c.constant, c.volume[0], c.volume[1], c.projection]
            .iter()
            .chain(&c.image)
            .any(|&w| w == 0)
        {
            return Err(ModelError::Config("channel counts must be positive".into()));
        }
        Ok(())
    }
}

/// Whether poses are honoured. Training ignores them under `no_rotation`;
/// evaluation always applies the requested transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderMode {
    Train,
    Eval,
}

/// Intermediate values of one generator pass.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorTrace {
    /// `[N, 16, 16, 16, C]` after the rigid transform.
    pub transformed: Var,
    /// `[N, res, res, 3]` in `[-1, 1]`.
    pub image: Var,
}

#[derive(Clone, Debug)]
pub struct Generator<T> {
    config: GeneratorConfig,
    mapping: Option<MappingNetwork>,
    pub params: ParamStore<T>,
}

fn vol_site(i: usize) -> String {
    format!("vol{i}")
}

fn img_site(i: usize) -> String {
    format!("img{i}")
}

impl<T: Real> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let ch = &config.channels;
        let mut params = ParamStore::new();
        let mapping = if config.traditional_z {
            let width = CONSTANT_EXTENT.pow(3) * ch.constant;
            params.insert("g.input.w", init::weight(vec![config.latent_dim, width], rng));
            params.insert("g.input.b", Tensor::zeros(vec![width]));
            None
        } else {
            let e = CONSTANT_EXTENT;
            params.insert("g.constant", init::weight(vec![e, e, e, ch.constant], rng));
            let mut net = MappingNetwork::new("g.map", config.latent_dim, config.mapping_hidden);
            for (i, &c) in ch.volume.iter().enumerate() {
                net = net.with_site(vol_site(i), c);
            }
            for (i, &c) in ch.image.iter().enumerate() {
                net = net.with_site(img_site(i), c);
            }
            Some(net)
        };
        let mut cin = ch.constant;
        for (i, &c) in ch.volume.iter().enumerate() {
            params.insert(format!("g.vol{i}.w"), init::weight(vec![3, 3, 3, cin, c], rng));
            cin = c;
        }
        for i in 0..2 {
            params.insert(format!("g.morph{i}.w"), init::weight(vec![3, 3, 3, cin, cin], rng));
            params.insert(format!("g.morph{i}.b"), Tensor::zeros(vec![cin]));
        }
        let flat = VOLUME_EXTENT * cin;
        params.insert("g.project.w", init::weight(vec![1, 1, flat, ch.projection], rng));
        params.insert("g.project.b", Tensor::zeros(vec![ch.projection]));
        let mut cin = ch.projection;
        for (i, &c) in ch.image.iter().enumerate() {
            params.insert(format!("g.img{i}.w"), init::weight(vec![3, 3, cin, c], rng));
            cin = c;
        }
        params.insert("g.rgb.w", init::weight(vec![3, 3, cin, 3], rng));
        params.insert("g.rgb.b", Tensor::zeros(vec![3]));
        if let Some(net) = &mapping {
            net.init_params(&mut params, rng);
        }
        Ok(Self {
            config,
            mapping,
            params,
        })
    }

    /// Rebuilds a generator around existing parameters (e.g. from a
    /// checkpoint or a cast to another precision).
    pub fn from_params(config: GeneratorConfig, params: ParamStore<T>) -> Result<Self, ModelError> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let template = Self::new(config, &mut rng)?;
        for (name, t) in template.params.params() {
            let got = params
                .get(name)
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
            mapping: template.mapping,
            params,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn mapping(&self) -> Option<&MappingNetwork> {
        self.mapping.as_ref()
    }

    pub fn cast<U: Real>(&self) -> Generator<U> {
        Generator {
            config: self.config.clone(),
            mapping: self.mapping.clone(),
            params: self.params.cast(),
        }
    }

    fn zero_bias(&self, tape: &mut Tape<T>, channels: usize) -> Var {
        tape.constant(Tensor::zeros(vec![channels]))
    }

    /// Instance-normalises and, unless running the traditional ablation,
    /// modulates with the style of `site` computed from `z`.
    fn modulate(&self, tape: &mut Tape<T>, x: Var, z: Var, site: &str, grad: bool) -> Result<Var, ModelError> {
        match &self.mapping {
            Some(net) => {
                let style = net.map_style(tape, &self.params, z, site, grad)?;
                layers::adain(tape, x, style)
            }
            None => layers::instance_norm(tape, x),
        }
    }

    fn checked(&self, tape: &Tape<T>, v: Var, layer: &str) -> Result<Var, ModelError> {
        if tape.value(v).all_finite() {
            Ok(v)
        } else {
            Err(ModelError::NonFinite {
                layer: layer.to_string(),
            })
        }
    }

    fn check_latent(&self, tape: &Tape<T>, z: Var, batch: Option<usize>) -> Result<usize, ModelError> {
        let shape = tape.shape(z);
        if shape.len() != 2 || shape[1] != self.config.latent_dim {
            return Err(ModelError::Width {
                what: "latent code",
                expected: self.config.latent_dim,
                got: *shape.last().unwrap_or(&0),
            });
        }
        if let Some(n) = batch {
            if shape[0] != n {
                return Err(ModelError::Config(format!(
                    "latent batches differ: {} vs {n}",
                    shape[0]
                )));
            }
        }
        Ok(shape[0])
    }

    /// Records a full generator pass. `poses` holds one pose for the whole
    /// batch or one per instance.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        z1: Var,
        z2: Var,
        poses: &[Pose],
        mode: RenderMode,
        grad: bool,
    ) -> Result<GeneratorTrace, ModelError> {
        let n = self.check_latent(tape, z1, None)?;
        self.check_latent(tape, z2, Some(n))?;
        for p in poses {
            p.validate()
                .map_err(|e| ModelError::Config(e.to_string()))?;
        }
        let ch = &self.config.channels;
        let e = CONSTANT_EXTENT;

        let mut x = if self.config.traditional_z {
            let w = self.params.bind(tape, "g.input.w", grad);
            let b = self.params.bind(tape, "g.input.b", grad);
            let flat = tape.linear(z1, w, b)?;
            tape.reshape(flat, vec![n, e, e, e, ch.constant])?
        } else {
            let c = self.params.bind(tape, "g.constant", grad);
            tape.repeat_batch(c, n)
        };

        for (i, &c) in ch.volume.iter().enumerate() {
            let up = tape.upsample_nearest(x, 2)?;
            let w = self.params.bind(tape, &format!("g.vol{i}.w"), grad);
            let b = self.zero_bias(tape, c);
            let h = tape.conv3d(up, w, b, 1, 1)?;
            let h = self.modulate(tape, h, z1, &vol_site(i), grad)?;
            x = tape.lrelu(h);
            x = self.checked(tape, x, &format!("vol{i}"))?;
        }

        let identity = [Pose::identity()];
        let poses = if mode == RenderMode::Train && self.config.no_rotation {
            &identity[..]
        } else {
            poses
        };
        let transformed = geometry::rigid_transform(tape, x, poses)?;
        x = transformed;

        for i in 0..2 {
            let w = self.params.bind(tape, &format!("g.morph{i}.w"), grad);
            let b = self.params.bind(tape, &format!("g.morph{i}.b"), grad);
            let h = tape.conv3d(x, w, b, 1, 1)?;
            x = tape.lrelu(h);
            x = self.checked(tape, x, &format!("morph{i}"))?;
        }

        x = self.project(tape, x, grad)?;
        x = self.checked(tape, x, "project")?;

        for (i, &c) in ch.image.iter().enumerate() {
            let up = tape.upsample_nearest(x, 2)?;
            let w = self.params.bind(tape, &format!("g.img{i}.w"), grad);
            let b = self.zero_bias(tape, c);
            let h = tape.conv2d(up, w, b, 1, 1)?;
            let h = self.modulate(tape, h, z2, &img_site(i), grad)?;
            x = tape.lrelu(h);
            x = self.checked(tape, x, &format!("img{i}"))?;
        }

        let w = self.params.bind(tape, "g.rgb.w", grad);
        let b = self.params.bind(tape, "g.rgb.b", grad);
        let rgb = tape.conv2d(x, w, b, 1, 1)?;
        let image = tape.tanh(rgb);
        let image = self.checked(tape, image, "rgb")?;
        Ok(GeneratorTrace { transformed, image })
    }

    /// Projection unit: folds depth into channels, then a per-pixel dense
    /// map with leaky ReLU.
    pub fn project(&self, tape: &mut Tape<T>, volume: Var, grad: bool) -> Result<Var, ModelError> {
        let s = tape.shape(volume).to_vec();
        if s.len() != 5 {
            return Err(ModelError::Config(format!("projection input {s:?} is not a volume")));
        }
        let flat = tape.reshape(volume, vec![s[0], s[1], s[2], s[3] * s[4]])?;
        let w = self.params.bind(tape, "g.project.w", grad);
        let b = self.params.bind(tape, "g.project.b", grad);
        let h = tape.conv2d(flat, w, b, 1, 0)?;
        Ok(tape.lrelu(h))
    }

    /// Renders `z1`/`z2: [N, d]` under one shared pose.
    pub fn generate(
        &self,
        z1: &Tensor<T>,
        z2: &Tensor<T>,
        pose: &Pose,
        mode: RenderMode,
    ) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let a = tape.constant(z1.clone());
        let b = tape.constant(z2.clone());
        let trace = self.forward(&mut tape, a, b, std::slice::from_ref(pose), mode, false)?;
        Ok(tape.value(trace.image).clone())
    }

    /// Post-transform volume for `z1`; `z2` never reaches it.
    pub fn transformed_volume(
        &self,
        z1: &Tensor<T>,
        z2: &Tensor<T>,
        pose: &Pose,
        mode: RenderMode,
    ) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let a = tape.constant(z1.clone());
        let b = tape.constant(z2.clone());
        let trace = self.forward(&mut tape, a, b, std::slice::from_ref(pose), mode, false)?;
        Ok(tape.value(trace.transformed).clone())
    }

    /// Renders with the traditional input layer; the code drives the input
    /// layer only.
    pub fn generate_traditional(&self, z: &Tensor<T>, pose: &Pose) -> Result<Tensor<T>, ModelError> {
        if !self.config.traditional_z {
            return Err(ModelError::Mode("generator was not built with the traditional input layer"));
        }
        self.generate(z, z, pose, RenderMode::Eval)
    }

    /// One image batch per pose with the latents held fixed, poses always
    /// applied.
    pub fn render_sweep(&self, z1: &Tensor<T>, z2: &Tensor<T>, poses: &[Pose]) -> Result<Vec<Tensor<T>>, ModelError> {
        if poses.is_empty() {
            return Err(ModelError::Config("pose sweep needs at least one pose".into()));
        }
        poses
            .iter()
            .map(|p| self.generate(z1, z2, p, RenderMode::Eval))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(resolution: usize) -> GeneratorConfig {
        let mut cfg = GeneratorConfig::new(resolution, ChannelSchedule::tiny(resolution));
        cfg.latent_dim = 4;
        cfg.mapping_hidden = 6;
        cfg
    }

    fn latent(n: usize, d: usize, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![n, d], |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn schedules_match_resolution() {
        assert_eq!(ChannelSchedule::standard(64).image, vec![256, 64]);
        assert_eq!(ChannelSchedule::standard(128).image, vec![256, 64, 32]);
        assert_eq!(ChannelSchedule::desk(32).image.len(), 1);
        let mut cfg = tiny(64);
        cfg.channels.image.pop();
        assert!(cfg.validate().is_err());
        assert!(GeneratorConfig::new(48, ChannelSchedule::tiny(32)).validate().is_err());
    }

    #[test]
    fn output_shape_and_range() {
        let g = Generator::<f32>::new(tiny(64), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let z = latent(2, 4, 1);
        let img = g.generate(&z, &z, &Pose::identity(), RenderMode::Eval).unwrap();
        assert_eq!(img.shape(), &[2, 64, 64, 3]);
        assert!(img.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic() {
        let g = Generator::<f32>::new(tiny(32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let z = latent(1, 4, 1);
        let pose = Pose::new(30.0, 10.0, 1.05);
        assert_eq!(g.generate(&z, &z, &pose, RenderMode::Eval).unwrap(), g.generate(&z, &z, &pose, RenderMode::Eval).unwrap());
    }

    #[test]
    fn sweep_repeats_single_generate() {
        let g = Generator::<f32>::new(tiny(32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let z = latent(1, 4, 1);
        let pose = Pose::new(45.0, 0.0, 1.0);
        let sweep = g.render_sweep(&z, &z, &[pose, pose]).unwrap();
        assert_eq!(sweep[0], g.generate(&z, &z, &pose, RenderMode::Eval).unwrap());
        assert_eq!(sweep[0], sweep[1]);
        let poses: Vec<Pose> = (0..8).map(|i| Pose::new(45.0 * i as f64, 0.0, 1.0)).collect();
        assert_eq!(g.render_sweep(&z, &z, &poses).unwrap().len(), 8);
        assert!(g.render_sweep(&z, &z, &[]).is_err());
    }

    #[test]
    fn traditional_requires_flag() {
        let g = Generator::<f32>::new(tiny(32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(
            g.generate_traditional(&latent(1, 4, 0), &Pose::identity()),
            Err(ModelError::Mode(_))
        ));
    }

    #[test]
    fn traditional_zero_code_gives_constant_image() {
        let mut cfg = tiny(32);
        cfg.traditional_z = true;
        let g = Generator::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(!g.params.contains("g.constant"));
        let img = g
            .generate_traditional(&Tensor::zeros(vec![1, 4]), &Pose::identity())
            .unwrap();
        let first = &img.data()[..3];
        for px in img.data().chunks(3) {
            assert_eq!(px, first);
        }
    }

    #[test]
    fn latent_width_checked() {
        let g = Generator::<f32>::new(tiny(32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let z = latent(1, 5, 0);
        assert!(matches!(
            g.generate(&z, &z, &Pose::identity(), RenderMode::Eval),
            Err(ModelError::Width { .. })
        ));
    }

    #[test]
    fn half_turn_changes_untrained_image() {
        let g = Generator::<f32>::new(tiny(32), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let z = latent(1, 4, 5);
        let a = g.generate(&z, &z, &Pose::identity(), RenderMode::Eval).unwrap();
        let b = g.generate(&z, &z, &Pose::new(180.0, 0.0, 1.0), RenderMode::Eval).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn no_rotation_ignores_pose_only_in_training() {
        let mut cfg = tiny(32);
        cfg.no_rotation = true;
        let g = Generator::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let z = latent(1, 4, 5);
        let (pa, pb) = (Pose::new(-40.0, 10.0, 0.9), Pose::new(130.0, -15.0, 1.1));
        assert_eq!(
            g.generate(&z, &z, &pa, RenderMode::Train).unwrap(),
            g.generate(&z, &z, &pb, RenderMode::Train).unwrap()
        );
        assert_ne!(
            g.generate(&z, &z, &pa, RenderMode::Eval).unwrap(),
            g.generate(&z, &z, &pb, RenderMode::Eval).unwrap()
        );
    }

    #[test]
    fn z2_leaves_volume_untouched() {
        let g = Generator::<f32>::new(tiny(32), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let z1 = latent(2, 4, 1);
        let pose = Pose::new(20.0, 5.0, 1.0);
        let va = g.transformed_volume(&z1, &latent(2, 4, 2), &pose, RenderMode::Train).unwrap();
        let vb = g.transformed_volume(&z1, &latent(2, 4, 3), &pose, RenderMode::Train).unwrap();
        assert_eq!(va, vb);
        let ia = g.generate(&z1, &latent(2, 4, 2), &pose, RenderMode::Train).unwrap();
        let ib = g.generate(&z1, &latent(2, 4, 3), &pose, RenderMode::Train).unwrap();
        assert_ne!(ia, ib);
    }

    #[test]
    fn traditional_distinct_codes_differ() {
        let mut cfg = tiny(32);
        cfg.traditional_z = true;
        let g = Generator::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let a = g.generate_traditional(&latent(1, 4, 1), &Pose::identity()).unwrap();
        let b = g.generate_traditional(&latent(1, 4, 2), &Pose::identity()).unwrap();
        assert_eq!(a.shape(), &[1, 32, 32, 3]);
        assert_ne!(a, b);
    }

    #[test]
    fn project_selects_depth_slice() {
        let mut cfg = tiny(32);
        cfg.channels.volume = [2, 2];
        cfg.channels.projection = 2;
        let mut g = Generator::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // Folded channel index is depth * C + c; pick depth 0.
        let w = Tensor::from_fn(vec![1, 1, 32, 2], |i| {
            let (row, col) = (i / 2, i % 2);
            if row == col { 1.0 } else { 0.0 }
        });
        *g.params.get_mut("g.project.w").unwrap() = w;
        let mut tape = Tape::new();
        let vol = Tensor::from_fn(vec![1, 16, 16, 16, 2], |i| (i as f64 * 0.37).sin().abs());
        let v = tape.constant(vol.clone());
        let out = g.project(&mut tape, v, false).unwrap();
        let out = tape.value(out);
        assert_eq!(out.shape(), &[1, 16, 16, 2]);
        for p in 0..256 {
            for c in 0..2 {
                assert_eq!(out.data()[p * 2 + c], vol.data()[p * 32 + c]);
            }
        }
    }

    #[test]
    fn every_parameter_gets_gradient() {
        for traditional in [false, true] {
            let mut cfg = tiny(32);
            cfg.traditional_z = traditional;
            let g = Generator::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let z = Tensor::from_fn(vec![2, 4], |_| rng.random_range(-1.0..1.0));
            let mut tape = Tape::new();
            let zv = tape.constant(z);
            let poses = [Pose::new(30.0, 5.0, 1.0), Pose::new(-60.0, -10.0, 0.95)];
            let trace = g.forward(&mut tape, zv, zv, &poses, RenderMode::Train, true).unwrap();
            let target = tape.constant(Tensor::from_fn(vec![2, 32, 32, 3], |i| (i as f64).cos()));
            let prod = tape.mul(trace.image, target).unwrap();
            let loss = tape.sum(prod);
            tape.backward(loss).unwrap();
            for (name, grad) in tape.bound_grads() {
                let grad = grad.unwrap_or_else(|| panic!("{name} has no gradient"));
                assert!(grad.data().iter().any(|v| v.abs() > 0.0), "{name} gradient is zero");
            }
            assert_eq!(tape.bound_grads().count(), g.params.len());
        }
    }
}
