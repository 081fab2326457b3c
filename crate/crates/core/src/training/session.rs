use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{load_checkpoint, sample_latents, save_checkpoint, TrainConfig, TrainError, Trainer};
use crate::data::{self, DataError, Dataset, Primitive, SyntheticSpec};
use crate::generator::RenderMode;
use crate::losses::LossReport;

/// Images per periodic sample grid.
const SAMPLE_COUNT: usize = 8;

/// The dataset a config names: `synthetic` or a PNG folder.
pub fn dataset_for(config: &TrainConfig) -> Result<Dataset, TrainError> {
    if config.data == "synthetic" {
        let primitive = Primitive::parse(&config.synthetic_primitive).unwrap_or(Primitive::Chair);
        let spec = SyntheticSpec::new(primitive, config.resolution, config.seed);
        Ok(Dataset::synthetic(spec, config.synthetic_items))
    } else {
        Ok(Dataset::load_folder(Path::new(&config.data), config.resolution)?)
    }
}

/// A trainer bound to its dataset, writing `loss.csv`, `samples/` and
/// `ckpt/` under one output directory.
pub struct Session {
    pub trainer: Trainer,
    pub dataset: Dataset,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| {
        TrainError::Data(DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl Session {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let dataset = dataset_for(&config)?;
        let trainer = Trainer::new(config, dataset.len())?;
        Ok(Self { trainer, dataset })
    }

    pub fn resume(checkpoint: &Path) -> Result<Self, TrainError> {
        let trainer = load_checkpoint(checkpoint)?;
        let dataset = dataset_for(&trainer.config)?;
        if dataset.len() != trainer.sampler.perm.len() {
            return Err(TrainError::Batch(format!(
                "dataset has {} items but the checkpoint sampled from {}",
                dataset.len(),
                trainer.sampler.perm.len()
            )));
        }
        Ok(Self { trainer, dataset })
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.trainer.config.out)
    }

    pub fn step(&mut self) -> Result<LossReport, TrainError> {
        let batch = self.trainer.next_batch(&self.dataset);
        self.trainer.train_step(&batch)
    }

    pub fn checkpoint_path(&self, step: u64) -> PathBuf {
        self.out_dir().join("ckpt").join(format!("step_{step:08}.hvox"))
    }

    /// Renders the fixed sample latents at the centre pose.
    pub fn write_samples(&self, path: &Path) -> Result<(), TrainError> {
        let cfg = &self.trainer.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(3);
        let z = sample_latents::<f32, _>(&mut rng, SAMPLE_COUNT, cfg.latent_dim);
        let pose = cfg.pose_range().midpoint();
        let imgs = self.trainer.generator.generate(&z, &z, &pose, RenderMode::Eval)?;
        let tiles = split_batch(&imgs);
        data::write_grid(&tiles, SAMPLE_COUNT / 2, path)?;
        Ok(())
    }

    /// Trains until `trainer.step == until`, appending one CSV row per step.
    /// A fresh run (step 0) starts a new `loss.csv`.
    pub fn run(&mut self, until: u64, mut on_step: impl FnMut(u64, &LossReport)) -> Result<(), TrainError> {
        let out = self.out_dir();
        std::fs::create_dir_all(&out).map_err(io_err(&out))?;
        let csv_path = out.join("loss.csv");
        let levels = crate::discriminator::STYLE_LEVELS.len();
        let mut csv: File = if self.trainer.step == 0 {
            let mut f = File::create(&csv_path).map_err(io_err(&csv_path))?;
            writeln!(f, "{}", LossReport::csv_header(levels)).map_err(io_err(&csv_path))?;
            f
        } else {
            OpenOptions::new().append(true).create(true).open(&csv_path).map_err(io_err(&csv_path))?
        };
        let cfg = self.trainer.config.clone();
        let mut saved_at = None;
        while self.trainer.step < until {
            let report = self.step()?;
            let step = self.trainer.step;
            writeln!(csv, "{}", report.csv_row(step)).map_err(io_err(&csv_path))?;
            on_step(step, &report);
            if cfg.sample_interval > 0 && step % cfg.sample_interval == 0 {
                let path = out.join("samples").join(format!("step_{step:08}.png"));
                self.write_samples(&path)?;
            }
            if cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 {
                save_checkpoint(&self.trainer, &self.checkpoint_path(step))?;
                saved_at = Some(step);
            }
        }
        csv.flush().map_err(io_err(&csv_path))?;
        if saved_at != Some(self.trainer.step) {
            save_checkpoint(&self.trainer, &self.checkpoint_path(self.trainer.step))?;
        }
        Ok(())
    }
}

/// `[N, H, W, 3]` into N separate `[H, W, 3]` images.
pub(crate) fn split_batch(batch: &crate::tensor::Tensor<f32>) -> Vec<crate::tensor::Tensor<f32>> {
    let s = batch.shape();
    let per = s[1] * s[2] * s[3];
    batch
        .data()
        .chunks(per)
        .map(|c| crate::tensor::Tensor::new(vec![s[1], s[2], s[3]], c.to_vec()).expect("image shape"))
        .collect()
}
