//! Procedural stand-in dataset: flat-shaded orthographic renderings of a
//! cube or an asymmetric two-box chair at pseudo-random azimuths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{apply, mat_mul, transpose, Mat3};
use crate::tensor::Tensor;

/// Camera elevation in degrees; the object is seen slightly from above.
const VIEW_ELEVATION: f64 = 25.0;
const AMBIENT: f64 = 0.35;

const PALETTE: [[f64; 3]; 8] = [
    [0.80, 0.25, 0.20],
    [0.20, 0.55, 0.80],
    [0.25, 0.70, 0.30],
    [0.85, 0.70, 0.20],
    [0.55, 0.30, 0.70],
    [0.90, 0.50, 0.15],
    [0.30, 0.30, 0.35],
    [0.60, 0.45, 0.30],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    Cube,
    /// A seat slab with a backrest along one edge.
    Chair,
}

impl Primitive {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "cube" => Some(Self::Cube),
            "chair" => Some(Self::Chair),
            _ => None,
        }
    }

    fn boxes(self) -> &'static [([f64; 3], [f64; 3])] {
        match self {
            Self::Cube => &[([-0.45, -0.45, -0.45], [0.45, 0.45, 0.45])],
            Self::Chair => &[
                ([-0.5, -0.35, -0.5], [0.5, -0.2, 0.5]),
                ([-0.5, -0.2, -0.5], [0.5, 0.55, -0.32]),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub primitive: Primitive,
    /// Number of palette colours in use (1 to 8).
    pub palette_size: usize,
    /// Background grey level range in `[0, 1]`.
    pub background: (f64, f64),
    /// Azimuth range in degrees.
    pub azimuth: (f64, f64),
    pub resolution: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(primitive: Primitive, resolution: usize, seed: u64) -> Self {
        Self {
            primitive,
            palette_size: 6,
            background: (0.75, 0.95),
            azimuth: (0.0, 360.0),
            resolution,
            seed,
        }
    }
}

fn rot_y(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_x(deg: f64) -> Mat3 {
    let (s, c) = deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

/// Nearest slab-test hit of a ray with an axis-aligned box: distance and
/// outward normal.
fn hit_box(origin: [f64; 3], dir: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, [f64; 3])> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut normal = [0.0; 3];
    for a in 0..3 {
        if dir[a].abs() < 1e-12 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
            continue;
        }
        let (mut t0, mut t1) = ((lo[a] - origin[a]) / dir[a], (hi[a] - origin[a]) / dir[a]);
        let mut sign = -1.0;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
            sign = 1.0;
        }
        if t0 > t_near {
            t_near = t0;
            normal = [0.0; 3];
            normal[a] = sign;
        }
        t_far = t_far.min(t1);
    }
    (t_near <= t_far && t_far > 0.0).then_some((t_near, normal))
}

/// Renders item `index`: the image `[res, res, 3]` in `[-1, 1]` and the
/// azimuth it was drawn at. The azimuth is for evaluation only.
pub fn synthesize_item(spec: &SyntheticSpec, index: u64) -> (Tensor<f32>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let (a0, a1) = spec.azimuth;
    let azimuth = if a1 > a0 { rng.random_range(a0..a1) } else { a0 };
    let colour = PALETTE[rng.random_range(0..spec.palette_size.clamp(1, PALETTE.len()))];
    let (b0, b1) = spec.background;
    let bg = if b1 > b0 { rng.random_range(b0..b1) } else { b0 };
    (render(spec.primitive, azimuth, colour, bg, spec.resolution), azimuth)
}

/// Orthographic flat-shaded rendering of `primitive` turned by `azimuth`.
pub fn render(primitive: Primitive, azimuth: f64, colour: [f64; 3], background: f64, res: usize) -> Tensor<f32> {
    // Object to camera.
    let r = mat_mul(&rot_x(VIEW_ELEVATION), &rot_y(azimuth));
    let rt = transpose(&r);
    let light = {
        let l: [f64; 3] = [0.4, 0.8, 0.6];
        let n = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        [l[0] / n, l[1] / n, l[2] / n]
    };
    let dir = apply(&rt, [0.0, 0.0, -1.0]);
    let mut data = Vec::with_capacity(res * res * 3);
    for i in 0..res {
        let y = 1.0 - (i as f64 + 0.5) * 2.0 / res as f64;
        for j in 0..res {
            let x = -1.0 + (j as f64 + 0.5) * 2.0 / res as f64;
            let origin = apply(&rt, [x, y, 10.0]);
            let nearest = primitive
                .boxes()
                .iter()
                .filter_map(|(lo, hi)| hit_box(origin, dir, *lo, *hi))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let rgb = match nearest {
                Some((_, n)) => {
                    let n = apply(&r, n);
                    let lambert = (n[0] * light[0] + n[1] * light[1] + n[2] * light[2]).max(0.0);
                    let shade = AMBIENT + (1.0 - AMBIENT) * lambert;
                    [colour[0] * shade, colour[1] * shade, colour[2] * shade]
                }
                None => [background; 3],
            };
            data.extend(rgb.iter().map(|&v| (2.0 * v - 1.0) as f32));
        }
    }
    Tensor::new(vec![res, res, 3], data).expect("image shape")
}
