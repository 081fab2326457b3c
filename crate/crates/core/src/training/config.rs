//! Flat `key = value` training configuration. Every field of
//! [`TrainConfig`] is a key; `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::discriminator::DiscriminatorConfig;
use crate::generator::{ChannelSchedule, GeneratorConfig};
use crate::geometry::PoseRange;
use crate::losses::LossWeights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key}: cannot parse {value:?}")]
    BadValue { key: String, value: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("reading config: {0}")]
    Io(String),
}

trait FieldValue: Sized {
    fn parse_value(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

macro_rules! from_str_field {
    ($($t:ty),*) => {$(
        impl FieldValue for $t {
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_field!(usize, u64, f64, String);

impl FieldValue for bool {
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "true" | "1" | "yes" | "on" => Some(true),
            "false" | "0" | "no" | "off" => Some(false),
            _ => None,
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// The value type of a key, as seen by front ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyKind {
    Flag,
    Integer,
    Real,
    Text,
}

trait Kind {
    const KIND: KeyKind;
}
impl Kind for bool {
    const KIND: KeyKind = KeyKind::Flag;
}
impl Kind for usize {
    const KIND: KeyKind = KeyKind::Integer;
}
impl Kind for u64 {
    const KIND: KeyKind = KeyKind::Integer;
}
impl Kind for f64 {
    const KIND: KeyKind = KeyKind::Real;
}
impl Kind for String {
    const KIND: KeyKind = KeyKind::Text;
}

/// One addressable configuration key.
#[derive(Clone, Copy, Debug)]
pub struct KeyInfo {
    pub name: &'static str,
    pub kind: KeyKind,
    pub help: &'static str,
}

macro_rules! train_config {
    ($($(#[doc = $doc:literal])+ $field:ident: $ty:ty = $default:expr;)*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct TrainConfig {
            $($(#[doc = $doc])+ pub $field: $ty,)*
        }

        impl Default for TrainConfig {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl TrainConfig {
            pub const KEYS: &'static [KeyInfo] = &[
                $(KeyInfo {
                    name: stringify!($field),
                    kind: <$ty as Kind>::KIND,
                    help: concat!($($doc),+),
                },)*
            ];

            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                let value = value.trim();
                match key {
                    $(stringify!($field) => {
                        self.$field = <$ty as FieldValue>::parse_value(value).ok_or_else(|| {
                            ConfigError::BadValue { key: key.to_string(), value: value.to_string() }
                        })?;
                    })*
                    _ => return Err(ConfigError::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $(stringify!($field) => Some(self.$field.render()),)*
                    _ => None,
                }
            }
        }
    };
}

train_config! {
    /// Images per batch (at least 2).
    batch_size: usize = 16;
    /// Total optimisation steps.
    steps: u64 = 10_000;
    /// Generator learning rate.
    lr_g: f64 = 2e-4;
    /// Discriminator learning rate.
    lr_d: f64 = 2e-4;
    /// Adam first-moment decay.
    beta1: f64 = 0.5;
    /// Adam second-moment decay.
    beta2: f64 = 0.999;
    /// Adam denominator epsilon.
    adam_eps: f64 = 1e-8;
    /// Latent code width.
    latent_dim: usize = 128;
    /// Hidden width of each style mapping network.
    mapping_hidden: usize = 128;
    /// Output resolution (32, 64 or 128).
    resolution: usize = 64;
    /// Channel preset: standard, desk or tiny.
    channels: String = "desk".to_string();
    /// Lower azimuth bound in degrees.
    azimuth_min: f64 = -50.0;
    /// Upper azimuth bound in degrees.
    azimuth_max: f64 = 50.0;
    /// Lower elevation bound in degrees.
    elevation_min: f64 = -17.5;
    /// Upper elevation bound in degrees.
    elevation_max: f64 = 17.5;
    /// Lower scale bound.
    scale_min: f64 = 0.9;
    /// Upper scale bound.
    scale_max: f64 = 1.1;
    /// Identity loss weight.
    lambda_i: f64 = 1.0;
    /// Style loss weight.
    lambda_s: f64 = 1.0;
    /// Train without random 3D transforms.
    no_rotation: bool = false;
    /// Replace the learnt constant with a dense input layer from z.
    traditional_z: bool = false;
    /// Let the identity loss also update the discriminator trunk.
    identity_updates_d: bool = true;
    /// Seed for initialisation, sampling and data order.
    seed: u64 = 0;
    /// Folder of PNG images, or `synthetic`.
    data: String = "synthetic".to_string();
    /// Synthetic primitive: chair or cube.
    synthetic_primitive: String = "chair".to_string();
    /// Number of synthetic items.
    synthetic_items: usize = 4096;
    /// Output directory.
    out: String = "runs/default".to_string();
    /// Steps between checkpoints (0 disables).
    checkpoint_interval: u64 = 1000;
    /// Steps between sample grids (0 disables).
    sample_interval: u64 = 500;
}

impl TrainConfig {
    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key in declaration order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{} = {}", key.name, self.get(key.name).unwrap_or_default());
        }
        out
    }

    pub fn pose_range(&self) -> PoseRange {
        PoseRange {
            azimuth_min: self.azimuth_min,
            azimuth_max: self.azimuth_max,
            elevation_min: self.elevation_min,
            elevation_max: self.elevation_max,
            scale_min: self.scale_min,
            scale_max: self.scale_max,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_i: self.lambda_i,
            lambda_s: self.lambda_s,
        }
    }

    pub fn generator_config(&self) -> Result<GeneratorConfig, ConfigError> {
        let channels = ChannelSchedule::preset(&self.channels, self.resolution)
            .ok_or_else(|| ConfigError::BadValue { key: "channels".into(), value: self.channels.clone() })?;
        Ok(GeneratorConfig {
            resolution: self.resolution,
            latent_dim: self.latent_dim,
            mapping_hidden: self.mapping_hidden,
            no_rotation: self.no_rotation,
            traditional_z: self.traditional_z,
            channels,
        })
    }

    pub fn discriminator_config(&self) -> Result<DiscriminatorConfig, ConfigError> {
        DiscriminatorConfig::preset(&self.channels, self.resolution, self.latent_dim)
            .ok_or_else(|| ConfigError::BadValue { key: "channels".into(), value: self.channels.clone() })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.batch_size < 2 {
            return Err(ConfigError::Invalid("batch_size must be at least 2".into()));
        }
        if self.steps < 1 {
            return Err(ConfigError::Invalid("steps must be at least 1".into()));
        }
        for (name, v) in [("lr_g", self.lr_g), ("lr_d", self.lr_d), ("adam_eps", self.adam_eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(ConfigError::Invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.lambda_i >= 0.0 && self.lambda_s >= 0.0) {
            return Err(ConfigError::Invalid("loss weights must be nonnegative".into()));
        }
        self.pose_range().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !matches!(self.synthetic_primitive.as_str(), "chair" | "cube") {
            return Err(ConfigError::BadValue {
                key: "synthetic_primitive".into(),
                value: self.synthetic_primitive.clone(),
            });
        }
        if self.data == "synthetic" && self.synthetic_items == 0 {
            return Err(ConfigError::Invalid("synthetic_items must be positive".into()));
        }
        self.generator_config()?
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.discriminator_config()?
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
