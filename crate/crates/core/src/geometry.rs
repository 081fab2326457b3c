//! Poses, rotation matrices and rigid-body resampling of feature volumes.
//!
//! Volumes are laid out `[N, rows, cols, depth, C]`. A voxel index
//! `(i, j, k)` sits at the object-space point `x = j - cx`, `y = cy - i`,
//! `z = k - cz` measured from the volume centre, so `y` is up and the
//! canonical camera looks down `+z` from the negative z side. Angles are
//! degrees at every public interface.

use thiserror::Error;

use crate::tensor::{Real, Result, Tape, Tensor, Var};

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("pose scale must be positive and finite, got {0}")]
    Scale(f64),
    #[error("pose angles must be finite")]
    Angle,
    #[error("pose range {field}: min {min} exceeds max {max}")]
    Range { field: &'static str, min: f64, max: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    /// Rotation about the y axis, degrees.
    pub azimuth: f64,
    /// Rotation about the x axis, degrees.
    pub elevation: f64,
    pub scale: f64,
    /// Offset in voxel units, object frame.
    pub translation: [f64; 3],
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            azimuth: 0.0,
            elevation: 0.0,
            scale: 1.0,
            translation: [0.0; 3],
        }
    }

    pub fn new(azimuth: f64, elevation: f64, scale: f64) -> Self {
        Self {
            azimuth,
            elevation,
            scale,
            translation: [0.0; 3],
        }
    }

    pub fn validate(&self) -> std::result::Result<(), PoseError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(PoseError::Scale(self.scale));
        }
        if !(self.azimuth.is_finite()
            && self.elevation.is_finite()
            && self.translation.iter().all(|t| t.is_finite()))
        {
            return Err(PoseError::Angle);
        }
        Ok(())
    }
}

/// Uniform sampling box for poses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseRange {
    pub azimuth_min: f64,
    pub azimuth_max: f64,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl PoseRange {
    pub fn validate(&self) -> std::result::Result<(), PoseError> {
        for (field, min, max) in [
            ("azimuth", self.azimuth_min, self.azimuth_max),
            ("elevation", self.elevation_min, self.elevation_max),
            ("scale", self.scale_min, self.scale_max),
        ] {
            if !(min <= max) {
                return Err(PoseError::Range { field, min, max });
            }
        }
        if !(self.scale_min > 0.0) {
            return Err(PoseError::Scale(self.scale_min));
        }
        Ok(())
    }

    /// Centre of the box with unit scale.
    pub fn midpoint(&self) -> Pose {
        Pose::new(
            0.5 * (self.azimuth_min + self.azimuth_max),
            0.5 * (self.elevation_min + self.elevation_max),
            1.0,
        )
    }
}

/// Axis varied by a pose sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Azimuth,
    Elevation,
}

/// `k` evenly spaced angles over `[min, max]`. One angle is the midpoint. A
/// span of a full turn or more is treated as periodic and excludes `max`,
/// which would repeat `min`.
pub fn sweep_angles(min: f64, max: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![0.5 * (min + max)],
        _ => {
            let span = max - min;
            let steps = if span >= 360.0 { k } else { k - 1 };
            (0..k).map(|i| min + span * i as f64 / steps as f64).collect()
        }
    }
}

/// `k` poses along `axis` over `range`; the other angle stays at its
/// midpoint and scale at 1.
pub fn sweep_poses(range: &PoseRange, axis: SweepAxis, k: usize) -> Vec<Pose> {
    let centre = range.midpoint();
    match axis {
        SweepAxis::Azimuth => sweep_angles(range.azimuth_min, range.azimuth_max, k)
            .into_iter()
            .map(|a| Pose::new(a, centre.elevation, 1.0))
            .collect(),
        SweepAxis::Elevation => sweep_angles(range.elevation_min, range.elevation_max, k)
            .into_iter()
            .map(|e| Pose::new(centre.azimuth, e, 1.0))
            .collect(),
    }
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn determinant(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn apply(a: &Mat3, p: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i][0] * p[0] + a[i][1] * p[1] + a[i][2] * p[2])
}

/// `R = R_y(azimuth) · R_x(elevation)`; scale and translation are not part
/// of the matrix.
pub fn rotation_matrix(pose: &Pose) -> Mat3 {
    let (sa, ca) = pose.azimuth.to_radians().sin_cos();
    let (se, ce) = pose.elevation.to_radians().sin_cos();
    let ry = [[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]];
    let rx = [[1.0, 0.0, 0.0], [0.0, ce, -se], [0.0, se, ce]];
    mat_mul(&ry, &rx)
}

/// Source voxel coordinates `[rows, cols, depth, 3]` for resampling a volume
/// of the given extents under `pose`. Each output voxel reads from
/// `(1/scale) · Rᵀ · (p - translation)`, which rotates the content by `+pose`.
pub fn build_grid<T: Real>(extents: [usize; 3], pose: &Pose) -> Tensor<T> {
    let mut data = Vec::with_capacity(extents.iter().product::<usize>() * 3);
    fill_grid(extents, pose, &mut data);
    Tensor::new(vec![extents[0], extents[1], extents[2], 3], data).expect("grid shape")
}

fn fill_grid<T: Real>(extents: [usize; 3], pose: &Pose, out: &mut Vec<T>) {
    let centre = extents.map(|e| (e as f64 - 1.0) * 0.5);
    let rt = transpose(&rotation_matrix(pose));
    let inv_scale = 1.0 / pose.scale;
    let t = pose.translation;
    for i in 0..extents[0] {
        for j in 0..extents[1] {
            for k in 0..extents[2] {
                let p = [
                    j as f64 - centre[1] - t[0],
                    centre[0] - i as f64 - t[1],
                    k as f64 - centre[2] - t[2],
                ];
                let q = apply(&rt, p).map(|v| v * inv_scale);
                out.push(T::lit(centre[0] - q[1]));
                out.push(T::lit(q[0] + centre[1]));
                out.push(T::lit(q[2] + centre[2]));
            }
        }
    }
}

/// Resamples `volume: [N, rows, cols, depth, C]` under one pose shared by
/// the batch or one pose per instance.
pub fn rigid_transform<T: Real>(tape: &mut Tape<T>, volume: Var, poses: &[Pose]) -> Result<Var> {
    let shape = tape.shape(volume).to_vec();
    if shape.len() != 5 {
        return Err(crate::tensor::TensorError::Shape {
            op: "rigid_transform",
            detail: format!("volume {shape:?} is not rank 5"),
        });
    }
    let extents = [shape[1], shape[2], shape[3]];
    let grid = match poses {
        [pose] => build_grid(extents, pose),
        many if many.len() == shape[0] => {
            let mut data = Vec::with_capacity(shape[0] * extents.iter().product::<usize>() * 3);
            for pose in many {
                fill_grid(extents, pose, &mut data);
            }
            Tensor::new(vec![shape[0], extents[0], extents[1], extents[2], 3], data)?
        }
        _ => {
            return Err(crate::tensor::TensorError::Shape {
                op: "rigid_transform",
                detail: format!("{} poses for batch of {}", poses.len(), shape[0]),
            })
        }
    };
    tape.trilinear_resample(volume, grid)
}
