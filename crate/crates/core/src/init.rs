use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Real, Tensor};

/// Standard deviation of the zero-mean normal used for weight init.
pub const WEIGHT_STD: f64 = 0.02;

pub fn normal<T: Real, R: Rng + ?Sized>(shape: Vec<usize>, std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| T::lit(dist.sample(rng)))
}

pub fn weight<T: Real, R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Tensor<T> {
    normal(shape, WEIGHT_STD, rng)
}
