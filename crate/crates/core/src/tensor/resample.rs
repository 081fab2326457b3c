use super::tape::Op;
use super::{shape_err, Real, Result, Tape, Tensor, Var};

fn padded_spatial(shape: &[usize]) -> [usize; 3] {
    let mut s = [1; 3];
    s[..shape.len() - 2].copy_from_slice(&shape[1..shape.len() - 1]);
    s
}

/// Calls `f(dst_voxel, src_voxel)` for every output voxel of a
/// nearest-neighbour upsampling of one instance.
fn upsample_pairs(src: [usize; 3], factors: [usize; 3], mut f: impl FnMut(usize, usize)) {
    let dst = [src[0] * factors[0], src[1] * factors[1], src[2] * factors[2]];
    let mut d = 0;
    for a in 0..dst[0] {
        for b in 0..dst[1] {
            for c in 0..dst[2] {
                let s = ((a / factors[0]) * src[1] + b / factors[1]) * src[2] + c / factors[2];
                f(d, s);
                d += 1;
            }
        }
    }
}

fn factors_for(spatial: usize, factor: usize) -> [usize; 3] {
    let mut f = [1; 3];
    f[..spatial].fill(factor);
    f
}

pub(crate) fn upsample_grad<T: Real>(g: &Tensor<T>, input_shape: &[usize], factor: usize) -> Tensor<T> {
    let spatial = input_shape.len() - 2;
    let src = padded_spatial(input_shape);
    let c = input_shape[input_shape.len() - 1];
    let factors = factors_for(spatial, factor);
    let per_in: usize = src.iter().product::<usize>() * c;
    let per_out = per_in * factors.iter().product::<usize>();
    let mut out = Tensor::zeros(input_shape.to_vec());
    for (n, gs) in g.data().chunks(per_out).enumerate() {
        let dst = &mut out.data_mut()[n * per_in..(n + 1) * per_in];
        upsample_pairs(src, factors, |d, s| {
            for k in 0..c {
                dst[s * c + k] += gs[d * c + k];
            }
        });
    }
    out
}

/// The eight lattice neighbours of a fractional coordinate together with
/// their blend weights. Neighbours outside `extent` are skipped, which is
/// the same as reading zeros there.
#[inline]
pub(crate) fn trilinear_taps<T: Real>(
    coord: [T; 3],
    extent: [usize; 3],
    mut f: impl FnMut(usize, T),
) {
    let mut base = [0isize; 3];
    let mut frac = [T::zero(); 3];
    for a in 0..3 {
        let fl = coord[a].floor();
        base[a] = fl.to_isize().unwrap_or(isize::MIN / 2);
        frac[a] = coord[a] - fl;
    }
    for corner in 0..8 {
        let mut weight = T::one();
        let mut index = 0usize;
        let mut inside = true;
        for a in 0..3 {
            let bit = (corner >> (2 - a)) & 1;
            let p = base[a] + bit as isize;
            if p < 0 || p >= extent[a] as isize {
                inside = false;
                break;
            }
            index = index * extent[a] + p as usize;
            weight *= if bit == 1 { frac[a] } else { T::one() - frac[a] };
        }
        if inside {
            f(index, weight);
        }
    }
}

fn grid_layout(grid: &[usize], batch: usize) -> Option<(bool, [usize; 3])> {
    match grid {
        [a, b, c, 3] => Some((false, [*a, *b, *c])),
        [n, a, b, c, 3] if *n == batch => Some((true, [*a, *b, *c])),
        _ => None,
    }
}

pub(crate) fn trilinear_grad<T: Real>(g: &Tensor<T>, input_shape: &[usize], grid: &Tensor<T>) -> Tensor<T> {
    let batch = input_shape[0];
    let extent = [input_shape[1], input_shape[2], input_shape[3]];
    let c = input_shape[4];
    let (per_instance, out_sp) = grid_layout(grid.shape(), batch).expect("validated grid");
    let voxels: usize = out_sp.iter().product();
    let in_len = extent.iter().product::<usize>() * c;
    let mut out = Tensor::zeros(input_shape.to_vec());
    for n in 0..batch {
        let coords = if per_instance {
            &grid.data()[n * voxels * 3..(n + 1) * voxels * 3]
        } else {
            grid.data()
        };
        let gs = &g.data()[n * voxels * c..(n + 1) * voxels * c];
        let dst = &mut out.data_mut()[n * in_len..(n + 1) * in_len];
        for v in 0..voxels {
            let p = [coords[v * 3], coords[v * 3 + 1], coords[v * 3 + 2]];
            let gv = &gs[v * c..(v + 1) * c];
            trilinear_taps(p, extent, |idx, w| {
                for (d, &x) in dst[idx * c..(idx + 1) * c].iter_mut().zip(gv) {
                    *d += w * x;
                }
            });
        }
    }
    out
}

impl<T: Real> Tape<T> {
    /// Nearest-neighbour upsampling of every spatial axis by `factor`.
    pub fn upsample_nearest(&mut self, a: Var, factor: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if factor == 0 {
            return Err(shape_err("upsample_nearest", "factor must be at least 1"));
        }
        if !(3..=5).contains(&shape.len()) {
            return Err(shape_err(
                "upsample_nearest",
                format!("{shape:?} needs 1 to 3 spatial axes"),
            ));
        }
        let spatial = shape.len() - 2;
        let src = padded_spatial(&shape);
        let c = shape[shape.len() - 1];
        let factors = factors_for(spatial, factor);
        let mut out_shape = shape.clone();
        for s in &mut out_shape[1..=spatial] {
            *s *= factor;
        }
        let per_in: usize = src.iter().product::<usize>() * c;
        let per_out = per_in * factors.iter().product::<usize>();
        let x = self.value(a).data();
        let mut data = vec![T::zero(); per_out * shape[0]];
        for (n, dst) in data.chunks_mut(per_out).enumerate() {
            let xs = &x[n * per_in..(n + 1) * per_in];
            upsample_pairs(src, factors, |d, s| {
                dst[d * c..(d + 1) * c].copy_from_slice(&xs[s * c..(s + 1) * c]);
            });
        }
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(out, Op::Upsample { input: a, factor }, &[a]))
    }

    /// Samples `volume: [N, A, B, D, C]` at the fractional voxel coordinates
    /// in `grid` (`[A', B', D', 3]` shared by the batch, or
    /// `[N, A', B', D', 3]` per instance). Differentiable in the volume only.
    pub fn trilinear_resample(&mut self, volume: Var, grid: Tensor<T>) -> Result<Var> {
        let shape = self.shape(volume).to_vec();
        if shape.len() != 5 {
            return Err(shape_err("trilinear_resample", format!("volume {shape:?} is not rank 5")));
        }
        let batch = shape[0];
        let Some((per_instance, out_sp)) = grid_layout(grid.shape(), batch) else {
            return Err(shape_err(
                "trilinear_resample",
                format!("grid {:?} incompatible with volume {shape:?}", grid.shape()),
            ));
        };
        let extent = [shape[1], shape[2], shape[3]];
        let c = shape[4];
        let voxels: usize = out_sp.iter().product();
        let in_len = extent.iter().product::<usize>() * c;
        let x = self.value(volume).data();
        let mut data = vec![T::zero(); batch * voxels * c];
        for n in 0..batch {
            let coords = if per_instance {
                &grid.data()[n * voxels * 3..(n + 1) * voxels * 3]
            } else {
                grid.data()
            };
            let xs = &x[n * in_len..(n + 1) * in_len];
            let dst = &mut data[n * voxels * c..(n + 1) * voxels * c];
            for v in 0..voxels {
                let p = [coords[v * 3], coords[v * 3 + 1], coords[v * 3 + 2]];
                let dv = &mut dst[v * c..(v + 1) * c];
                trilinear_taps(p, extent, |idx, w| {
                    for (d, &s) in dv.iter_mut().zip(&xs[idx * c..(idx + 1) * c]) {
                        *d += w * s;
                    }
                });
            }
        }
        let out = Tensor::new(vec![batch, out_sp[0], out_sp[1], out_sp[2], c], data)?;
        Ok(self.push(out, Op::Trilinear { input: volume, grid }, &[volume]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_factor_one_is_identity() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::from_fn(vec![2, 3, 2, 2], |i| i as f64));
        let y = t.upsample_nearest(x, 1).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn upsample_1d_repeats() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::new(vec![1, 2, 1], vec![4.0, 9.0]).unwrap());
        let y = t.upsample_nearest(x, 2).unwrap();
        assert_eq!(t.value(y).data(), &[4.0, 4.0, 9.0, 9.0]);
    }

    #[test]
    fn upsample_scales_sum() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::from_fn(vec![2, 2, 3, 2, 3], |i| (i as f64).sin()));
        let y = t.upsample_nearest(x, 2).unwrap();
        assert_eq!(t.shape(y), &[2, 4, 6, 4, 3]);
        let (sx, sy) = (t.value(x).sum(), t.value(y).sum());
        assert!((sy - 8.0 * sx).abs() < 1e-12);
    }

    #[test]
    fn upsample_rejects_zero_factor() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(vec![1, 2, 2, 1]));
        assert!(t.upsample_nearest(x, 0).is_err());
    }

    #[test]
    fn midpoint_of_eight_is_mean() {
        let mut t = Tape::<f64>::new();
        let vol = t.constant(Tensor::from_fn(vec![1, 2, 2, 2, 1], |i| i as f64));
        let grid = Tensor::new(vec![1, 1, 1, 3], vec![0.5, 0.5, 0.5]).unwrap();
        let y = t.trilinear_resample(vol, grid).unwrap();
        assert_eq!(t.value(y).data(), &[3.5]);
    }

    #[test]
    fn lattice_points_copy_exactly() {
        let mut t = Tape::<f32>::new();
        let vol = t.constant(Tensor::from_fn(vec![1, 3, 2, 2, 2], |i| (i as f32).cos()));
        let grid = Tensor::from_fn(vec![3, 2, 2, 3], |i| {
            let (v, a) = (i / 3, i % 3);
            [v / 4, (v / 2) % 2, v % 2][a] as f32
        });
        let y = t.trilinear_resample(vol, grid).unwrap();
        assert_eq!(t.value(y), t.value(vol));
    }
}
