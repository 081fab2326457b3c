//! Image datasets, batch sampling and PNG output.

mod png;
mod synthetic;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::Tensor;

pub use png::{decode_png, encode_grid, encode_png, load_png, write_grid, write_png};
pub use synthetic::{render, synthesize_item, Primitive, SyntheticSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no decodable PNG files in {0}")]
    Empty(PathBuf),
    #[error("image encoding: {0}")]
    Encode(String),
    #[error("image decoding: {0}")]
    Decode(String),
    #[error("{0}")]
    Shape(String),
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

#[derive(Clone, Debug)]
enum Source {
    Images(Vec<Tensor<f32>>),
    Synthetic { spec: SyntheticSpec, items: usize },
}

/// A fixed collection of `[res, res, 3]` images in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct Dataset {
    source: Source,
    resolution: usize,
}

impl Dataset {
    pub fn from_images(images: Vec<Tensor<f32>>) -> Result<Self, DataError> {
        let first = images
            .first()
            .ok_or_else(|| DataError::Shape("dataset needs at least one image".into()))?;
        let resolution = first.shape()[0];
        if let Some(bad) = images.iter().find(|t| t.shape() != [resolution, resolution, 3]) {
            return Err(DataError::Shape(format!(
                "image {:?} does not match [{resolution}, {resolution}, 3]",
                bad.shape()
            )));
        }
        Ok(Self {
            source: Source::Images(images),
            resolution,
        })
    }

    /// Items are rendered on demand and never cached.
    pub fn synthetic(spec: SyntheticSpec, items: usize) -> Self {
        Self {
            resolution: spec.resolution,
            source: Source::Synthetic { spec, items },
        }
    }

    /// Every `*.png` directly inside `dir`, in name order, centre-cropped to a
    /// square and bilinearly resized. Undecodable files are skipped.
    pub fn load_folder(dir: &Path, resolution: usize) -> Result<Self, DataError> {
        let entries = std::fs::read_dir(dir).map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
            })
            .collect();
        paths.sort();
        let mut images = Vec::with_capacity(paths.len());
        for p in &paths {
            match load_png(p, resolution) {
                Ok(img) => images.push(img),
                Err(e) => log::warn!("skipping {}: {e}", p.display()),
            }
        }
        if images.is_empty() {
            return Err(DataError::Empty(dir.to_path_buf()));
        }
        Self::from_images(images)
    }

    pub fn len(&self) -> usize {
        match &self.source {
            Source::Images(v) => v.len(),
            Source::Synthetic { items, .. } => *items,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn get(&self, index: usize) -> Tensor<f32> {
        match &self.source {
            Source::Images(v) => v[index].clone(),
            Source::Synthetic { spec, .. } => synthesize_item(spec, index as u64).0,
        }
    }
}

/// Epoch-wise shuffled sampling without replacement.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchSampler {
    pub perm: Vec<usize>,
    pub cursor: usize,
    pub rng: ChaCha8Rng,
    pub warned: bool,
}

impl BatchSampler {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut rng);
        Self {
            perm,
            cursor: 0,
            rng,
            warned: false,
        }
    }

    /// Next `n` dataset indices. Reshuffles whenever an epoch is exhausted;
    /// draws with replacement if `n` exceeds the dataset.
    pub fn next_indices(&mut self, n: usize) -> Vec<usize> {
        let len = self.perm.len();
        if n > len {
            if !self.warned {
                log::warn!("batch of {n} exceeds dataset of {len}; sampling with replacement");
                self.warned = true;
            }
            return (0..n).map(|_| self.rng.random_range(0..len)).collect();
        }
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.cursor == len {
                self.perm.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let take = (n - out.len()).min(len - self.cursor);
            out.extend_from_slice(&self.perm[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }

    /// `[n, res, res, 3]` batch.
    pub fn next_batch(&mut self, dataset: &Dataset, n: usize) -> Tensor<f32> {
        assert!(n >= 1, "batch size must be positive");
        let res = dataset.resolution();
        let mut data = Vec::with_capacity(n * res * res * 3);
        for i in self.next_indices(n) {
            data.extend_from_slice(dataset.get(i).data());
        }
        Tensor::new(vec![n, res, res, 3], data).expect("batch shape")
    }
}
