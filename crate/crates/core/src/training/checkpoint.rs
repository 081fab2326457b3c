//! Binary checkpoint archive.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "HVOX" | u16 version | u32 record count
//! per record: u16 name length | name (UTF-8) | u8 dtype | u8 rank | u64 extents[rank] | payload
//! u32 CRC32 of every preceding byte
//! ```
//!
//! dtype tags: 0 = f32, 1 = f64, 2 = u8, 3 = u64.

use std::path::Path;

use indexmap::IndexMap;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Adam, Trainer, TrainConfig};
use crate::data::{write_atomic, BatchSampler};
use crate::discriminator::Discriminator;
use crate::generator::Generator;
use crate::params::ParamStore;
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 4] = b"HVOX";
pub const FORMAT_VERSION: u16 = 1;

const TAG_F32: u8 = 0;
const TAG_F64: u8 = 1;
const TAG_U8: u8 = 2;
const TAG_U64: u8 = 3;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u16, expected: u16 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("checkpoint record {0:?} missing")]
    Missing(String),
    #[error("checkpoint record {name:?}: {detail}")]
    Malformed { name: String, detail: String },
    #[error("checkpoint I/O on {path}: {detail}")]
    Io { path: String, detail: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
    U8(Vec<u8>),
    U64(Vec<u64>),
}

/// Named records in write order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub records: IndexMap<String, Record>,
}

impl Archive {
    pub fn insert(&mut self, name: impl Into<String>, record: Record) {
        self.records.insert(name.into(), record);
    }

    pub fn get(&self, name: &str) -> Result<&Record, CheckpointError> {
        self.records
            .get(name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    fn malformed(name: &str, detail: impl Into<String>) -> CheckpointError {
        CheckpointError::Malformed {
            name: name.to_string(),
            detail: detail.into(),
        }
    }

    pub fn f32(&self, name: &str) -> Result<&Tensor<f32>, CheckpointError> {
        match self.get(name)? {
            Record::F32(t) => Ok(t),
            _ => Err(Self::malformed(name, "expected f32 data")),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8], CheckpointError> {
        match self.get(name)? {
            Record::U8(b) => Ok(b),
            _ => Err(Self::malformed(name, "expected bytes")),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64], CheckpointError> {
        match self.get(name)? {
            Record::U64(v) => Ok(v),
            _ => Err(Self::malformed(name, "expected u64 data")),
        }
    }

    fn u64_exact(&self, name: &str, len: usize) -> Result<&[u64], CheckpointError> {
        let v = self.u64s(name)?;
        if v.len() != len {
            return Err(Self::malformed(name, format!("expected {len} values, got {}", v.len())));
        }
        Ok(v)
    }
}

fn put_dims(out: &mut Vec<u8>, tag: u8, shape: &[usize]) {
    out.push(tag);
    out.push(shape.len() as u8);
    for &e in shape {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
}

pub fn encode_archive(archive: &Archive) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(archive.records.len() as u32).to_le_bytes());
    for (name, rec) in &archive.records {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        match rec {
            Record::F32(t) => {
                put_dims(&mut out, TAG_F32, t.shape());
                t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
            Record::F64(t) => {
                put_dims(&mut out, TAG_F64, t.shape());
                t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
            Record::U8(b) => {
                put_dims(&mut out, TAG_U8, &[b.len()]);
                out.extend_from_slice(b);
            }
            Record::U64(v) => {
                put_dims(&mut out, TAG_U64, &[v.len()]);
                v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("sized slice"))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}

/// Parses an archive. Magic and version are checked first, then the record
/// stream (running off the end is truncation), then the trailing CRC.
pub fn decode_archive(bytes: &[u8]) -> Result<Archive, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let found = r.u16()?;
    if found != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let count = r.u32()?;
    let mut archive = Archive::default();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Archive::malformed("?", "record name is not UTF-8"))?;
        let tag = r.u8()?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| CheckpointError::Truncated)?);
        }
        let elems = shape
            .iter()
            .try_fold(1usize, |a, &b| a.checked_mul(b))
            .ok_or(CheckpointError::Truncated)?;
        let width = match tag {
            TAG_F32 => 4,
            TAG_F64 | TAG_U64 => 8,
            TAG_U8 => 1,
            t => return Err(Archive::malformed(&name, format!("unknown dtype tag {t}"))),
        };
        let payload = r.take(elems.checked_mul(width).ok_or(CheckpointError::Truncated)?)?;
        let record = match tag {
            TAG_F32 => Record::F32(
                Tensor::new(
                    shape,
                    payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
                )
                .map_err(|e| Archive::malformed(&name, e.to_string()))?,
            ),
            TAG_F64 => Record::F64(
                Tensor::new(
                    shape,
                    payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                )
                .map_err(|e| Archive::malformed(&name, e.to_string()))?,
            ),
            TAG_U8 => Record::U8(payload.to_vec()),
            _ => Record::U64(payload.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        archive.insert(name, record);
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(Archive::malformed("<trailer>", "trailing bytes after checksum"));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    Ok(archive)
}

fn put_store<T: Real>(archive: &mut Archive, store: &ParamStore<T>, wrap: fn(Tensor<T>) -> Record) {
    for (name, t) in store.params().chain(store.buffers()) {
        archive.insert(name, wrap(t.clone()));
    }
}

fn put_rng(archive: &mut Archive, prefix: &str, rng: &ChaCha8Rng) {
    archive.insert(format!("{prefix}.seed"), Record::U8(rng.get_seed().to_vec()));
    let pos = rng.get_word_pos();
    archive.insert(
        format!("{prefix}.state"),
        Record::U64(vec![rng.get_stream(), pos as u64, (pos >> 64) as u64]),
    );
}

fn get_rng(archive: &Archive, prefix: &str) -> Result<ChaCha8Rng, CheckpointError> {
    let name = format!("{prefix}.seed");
    let seed: [u8; 32] = archive
        .bytes(&name)?
        .try_into()
        .map_err(|_| Archive::malformed(&name, "seed must be 32 bytes"))?;
    let state = archive.u64_exact(&format!("{prefix}.state"), 3)?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
    rng.set_stream(state[0]);
    rng.set_word_pos(state[1] as u128 | (state[2] as u128) << 64);
    Ok(rng)
}

fn put_adam(archive: &mut Archive, prefix: &str, opt: &Adam<f32>) {
    archive.insert(format!("{prefix}.t"), Record::U64(vec![opt.t]));
    for (name, m) in &opt.m {
        archive.insert(format!("{prefix}.m/{name}"), Record::F32(m.clone()));
    }
    for (name, v) in &opt.v {
        archive.insert(format!("{prefix}.v/{name}"), Record::F32(v.clone()));
    }
}

/// Fills `template` from the archive, requiring every name and shape.
fn fill_store(archive: &Archive, template: &ParamStore<f32>) -> Result<ParamStore<f32>, CheckpointError> {
    let mut out = ParamStore::new();
    let check = |name: &str, want: &Tensor<f32>| -> Result<Tensor<f32>, CheckpointError> {
        let got = archive.f32(name)?;
        if got.shape() != want.shape() {
            return Err(Archive::malformed(
                name,
                format!("shape {:?}, expected {:?}", got.shape(), want.shape()),
            ));
        }
        Ok(got.clone())
    };
    for (name, t) in template.params() {
        out.insert(name, check(name, t)?);
    }
    for (name, t) in template.buffers() {
        out.insert_buffer(name, check(name, t)?);
    }
    Ok(out)
}

fn fill_adam(archive: &Archive, prefix: &str, opt: &mut Adam<f32>) -> Result<(), CheckpointError> {
    opt.t = archive.u64_exact(&format!("{prefix}.t"), 1)?[0];
    for (kind, moments) in [("m", &mut opt.m), ("v", &mut opt.v)] {
        for (name, t) in moments.iter_mut() {
            let rec = format!("{prefix}.{kind}/{name}");
            let got = archive.f32(&rec)?;
            if got.shape() != t.shape() {
                return Err(Archive::malformed(&rec, "moment shape mismatch"));
            }
            *t = got.clone();
        }
    }
    Ok(())
}

pub fn trainer_archive(trainer: &Trainer) -> Archive {
    let mut a = Archive::default();
    a.insert("meta.config", Record::U8(trainer.config.to_text().into_bytes()));
    a.insert("meta.step", Record::U64(vec![trainer.step]));
    put_rng(&mut a, "meta.rng", &trainer.rng);
    put_store(&mut a, &trainer.generator.params, Record::F32);
    put_store(&mut a, &trainer.discriminator.params, Record::F32);
    put_adam(&mut a, "adam_g", &trainer.opt_g);
    put_adam(&mut a, "adam_d", &trainer.opt_d);
    let s = &trainer.sampler;
    a.insert("data.perm", Record::U64(s.perm.iter().map(|&i| i as u64).collect()));
    a.insert("data.cursor", Record::U64(vec![s.cursor as u64, s.warned as u64]));
    put_rng(&mut a, "data.rng", &s.rng);
    a
}

pub fn trainer_from_archive(archive: &Archive) -> Result<Trainer, CheckpointError> {
    let text = String::from_utf8(archive.bytes("meta.config")?.to_vec())
        .map_err(|_| Archive::malformed("meta.config", "not UTF-8"))?;
    let config = TrainConfig::parse(&text).map_err(|e| Archive::malformed("meta.config", e.to_string()))?;
    let perm: Vec<usize> = archive.u64s("data.perm")?.iter().map(|&i| i as usize).collect();
    let mut trainer =
        Trainer::new(config, perm.len()).map_err(|e| Archive::malformed("meta.config", e.to_string()))?;
    let gparams = fill_store(archive, &trainer.generator.params)?;
    let dparams = fill_store(archive, &trainer.discriminator.params)?;
    let bad = |e: crate::error::ModelError| Archive::malformed("parameters", e.to_string());
    trainer.generator = Generator::from_params(trainer.generator.config().clone(), gparams).map_err(bad)?;
    trainer.discriminator =
        Discriminator::from_params(trainer.discriminator.config().clone(), dparams).map_err(bad)?;
    fill_adam(archive, "adam_g", &mut trainer.opt_g)?;
    fill_adam(archive, "adam_d", &mut trainer.opt_d)?;
    trainer.step = archive.u64_exact("meta.step", 1)?[0];
    trainer.rng = get_rng(archive, "meta.rng")?;
    let cursor = archive.u64_exact("data.cursor", 2)?;
    trainer.sampler = BatchSampler {
        perm,
        cursor: cursor[0] as usize,
        rng: get_rng(archive, "data.rng")?,
        warned: cursor[1] != 0,
    };
    if trainer.sampler.cursor > trainer.sampler.perm.len() {
        return Err(Archive::malformed("data.cursor", "cursor beyond permutation"));
    }
    Ok(trainer)
}

pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<(), CheckpointError> {
    write_atomic(path, &encode_archive(&trainer_archive(trainer))).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Trainer, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    trainer_from_archive(&decode_archive(&bytes)?)
}
