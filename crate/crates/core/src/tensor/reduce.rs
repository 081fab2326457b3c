use super::tape::Op;
use super::{shape_err, strides, Real, Result, Tape, Tensor, Var, STD_EPS};

/// Maps every input element to its output slot when `axes` are reduced.
fn reduce_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>, usize) {
    let out_shape: Vec<usize> = shape
        .iter()
        .enumerate()
        .filter(|(i, _)| !axes.contains(i))
        .map(|(_, &s)| s)
        .collect();
    let out_strides = strides(&out_shape);
    // Stride of each input axis in the output (0 for reduced axes).
    let mut axis_stride = Vec::with_capacity(shape.len());
    let mut k = 0;
    for i in 0..shape.len() {
        if axes.contains(&i) {
            axis_stride.push(0);
        } else {
            axis_stride.push(out_strides[k]);
            k += 1;
        }
    }
    let len: usize = shape.iter().product();
    let mut map = Vec::with_capacity(len);
    let mut idx = vec![0usize; shape.len()];
    let mut off = 0usize;
    for _ in 0..len {
        map.push(off);
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            off += axis_stride[a];
            if idx[a] < shape[a] {
                break;
            }
            off -= axis_stride[a] * shape[a];
            idx[a] = 0;
        }
    }
    let count = axes.iter().map(|&a| shape[a]).product();
    (map, out_shape, count)
}

fn check_axes(op: &'static str, shape: &[usize], axes: &[usize]) -> Result<()> {
    let mut seen = vec![false; shape.len()];
    for &a in axes {
        if a >= shape.len() || seen[a] {
            return Err(shape_err(op, format!("bad axis {a} for {shape:?}")));
        }
        seen[a] = true;
    }
    if axes.is_empty() {
        return Err(shape_err(op, "no axes to reduce"));
    }
    Ok(())
}

fn mean_axes_value<T: Real>(x: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let (map, out_shape, count) = reduce_map(x.shape(), axes);
    let mut out = Tensor::zeros(out_shape);
    for (&m, &v) in map.iter().zip(x.data()) {
        out.data_mut()[m] += v;
    }
    let inv = T::one() / T::from_usize(count).unwrap();
    out.data_mut().iter_mut().for_each(|v| *v *= inv);
    out
}

pub(crate) fn mean_axes_grad<T: Real>(g: &Tensor<T>, input_shape: &[usize], axes: &[usize]) -> Tensor<T> {
    let (map, _, count) = reduce_map(input_shape, axes);
    let inv = T::one() / T::from_usize(count).unwrap();
    let data = map.iter().map(|&m| g.data()[m] * inv).collect();
    Tensor::new(input_shape.to_vec(), data).expect("input shape")
}

pub(crate) fn std_axes_grad<T: Real>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    axes: &[usize],
    mean: &Tensor<T>,
    std: &Tensor<T>,
) -> Tensor<T> {
    let (map, _, count) = reduce_map(x.shape(), axes);
    let inv_n = T::one() / T::from_usize(count).unwrap();
    let data = map
        .iter()
        .zip(x.data())
        .map(|(&m, &v)| g.data()[m] * (v - mean.data()[m]) * inv_n / std.data()[m])
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("input shape")
}

/// `[N, spatial.., C]` as (instances, spatial count, channels).
fn instance_layout(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 3 {
        return Err(shape_err(op, format!("{shape:?} has no spatial axes")));
    }
    let spatial: usize = shape[1..shape.len() - 1].iter().product();
    if spatial < 2 {
        return Err(shape_err(
            op,
            format!("{shape:?} needs at least 2 spatial elements per channel"),
        ));
    }
    Ok((shape[0], spatial, shape[shape.len() - 1]))
}

pub(crate) fn instance_norm_grad<T: Real>(g: &Tensor<T>, y: &Tensor<T>, inv_std: &[T]) -> Tensor<T> {
    let (n, s, c) = instance_layout("instance_norm", y.shape()).expect("validated");
    let inv_s = T::one() / T::from_usize(s).unwrap();
    let mut out = Tensor::zeros(y.shape().to_vec());
    for i in 0..n {
        let base = i * s * c;
        let mut mean_g = vec![T::zero(); c];
        let mut mean_gy = vec![T::zero(); c];
        for p in 0..s {
            for k in 0..c {
                let j = base + p * c + k;
                mean_g[k] += g.data()[j];
                mean_gy[k] += g.data()[j] * y.data()[j];
            }
        }
        for k in 0..c {
            mean_g[k] *= inv_s;
            mean_gy[k] *= inv_s;
        }
        let d = out.data_mut();
        for p in 0..s {
            for k in 0..c {
                let j = base + p * c + k;
                d[j] = inv_std[i * c + k] * (g.data()[j] - mean_g[k] - y.data()[j] * mean_gy[k]);
            }
        }
    }
    out
}

type AffineGrads<T> = (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>);

pub(crate) fn channel_affine_grad<T: Real>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    scale: &Tensor<T>,
    want: [bool; 3],
) -> AffineGrads<T> {
    let (n, s, c) = instance_layout("channel_affine", x.shape()).expect("validated");
    let dx = want[0].then(|| {
        let mut out = g.clone();
        for i in 0..n {
            for p in 0..s {
                let j = (i * s + p) * c;
                for k in 0..c {
                    out.data_mut()[j + k] *= scale.data()[i * c + k];
                }
            }
        }
        out
    });
    let mut dscale = want[1].then(|| Tensor::zeros(vec![n, c]));
    let mut dshift = want[2].then(|| Tensor::zeros(vec![n, c]));
    for i in 0..n {
        for p in 0..s {
            let j = (i * s + p) * c;
            for k in 0..c {
                if let Some(d) = dscale.as_mut() {
                    d.data_mut()[i * c + k] += g.data()[j + k] * x.data()[j + k];
                }
                if let Some(d) = dshift.as_mut() {
                    d.data_mut()[i * c + k] += g.data()[j + k];
                }
            }
        }
    }
    (dx, dscale, dshift)
}

impl<T: Real> Tape<T> {
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::scalar(x.sum() / T::from_usize(x.len()).unwrap());
        self.push(out, Op::Mean(a), &[a])
    }

    /// Mean over `axes`, which are removed from the shape.
    pub fn mean_axes(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        check_axes("mean_axes", self.shape(a), axes)?;
        let out = mean_axes_value(self.value(a), axes);
        Ok(self.push(
            out,
            Op::MeanAxes {
                input: a,
                axes: axes.to_vec(),
            },
            &[a],
        ))
    }

    /// `sqrt(var + eps)` over `axes` with the population variance.
    pub fn std_axes(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        check_axes("std_axes", self.shape(a), axes)?;
        let x = self.value(a);
        let mean = mean_axes_value(x, axes);
        let (map, out_shape, count) = reduce_map(x.shape(), axes);
        let mut var: Tensor<T> = Tensor::zeros(out_shape);
        for (&m, &v) in map.iter().zip(x.data()) {
            let d = v - mean.data()[m];
            var.data_mut()[m] += d * d;
        }
        let inv = T::one() / T::from_usize(count).unwrap();
        let eps = T::lit(STD_EPS);
        let out = var.map(|v| (v * inv + eps).sqrt());
        Ok(self.push(
            out,
            Op::StdAxes {
                input: a,
                axes: axes.to_vec(),
                mean,
            },
            &[a],
        ))
    }

    /// Per-instance, per-channel standardisation over all spatial axes of a
    /// channels-last tensor, with no learned affine.
    pub fn instance_norm(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (n, s, c) = instance_layout("instance_norm", x.shape())?;
        let inv_s = T::one() / T::from_usize(s).unwrap();
        let eps = T::lit(STD_EPS);
        let mut out = Tensor::zeros(x.shape().to_vec());
        let mut inv_std = vec![T::zero(); n * c];
        for i in 0..n {
            let xs = &x.data()[i * s * c..(i + 1) * s * c];
            let mut mean = vec![T::zero(); c];
            for row in xs.chunks(c) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m *= inv_s);
            let mut var = vec![T::zero(); c];
            for row in xs.chunks(c) {
                for k in 0..c {
                    let d = row[k] - mean[k];
                    var[k] += d * d;
                }
            }
            for k in 0..c {
                inv_std[i * c + k] = T::one() / (var[k] * inv_s + eps).sqrt();
            }
            let ys = &mut out.data_mut()[i * s * c..(i + 1) * s * c];
            for (yrow, xrow) in ys.chunks_mut(c).zip(xs.chunks(c)) {
                for k in 0..c {
                    yrow[k] = (xrow[k] - mean[k]) * inv_std[i * c + k];
                }
            }
        }
        Ok(self.push(out, Op::InstanceNorm { input: a, inv_std }, &[a]))
    }

    /// `x · scale + shift` with `scale`, `shift: [N, C]` broadcast over the
    /// spatial axes of `x: [N, spatial.., C]`.
    pub fn channel_affine(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let xs = self.value(x);
        let (n, s, c) = instance_layout("channel_affine", xs.shape())?;
        for v in [scale, shift] {
            if self.shape(v) != [n, c] {
                return Err(shape_err(
                    "channel_affine",
                    format!("modulation {:?} vs expected [{n}, {c}]", self.shape(v)),
                ));
            }
        }
        let (sc, sh) = (self.value(scale).data(), self.value(shift).data());
        let mut out = xs.clone();
        for i in 0..n {
            for p in 0..s {
                let j = (i * s + p) * c;
                for k in 0..c {
                    let d = &mut out.data_mut()[j + k];
                    *d = *d * sc[i * c + k] + sh[i * c + k];
                }
            }
        }
        Ok(self.push(out, Op::ChannelAffine { x, scale, shift }, &[x, scale, shift]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_three() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let m = t.mean(x);
        assert_eq!(t.value(m).item(), 2.0);
    }

    #[test]
    fn mean_axes_middle() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::from_fn(vec![2, 3, 2], |i| i as f64));
        let m = t.mean_axes(x, &[1]).unwrap();
        assert_eq!(t.shape(m), &[2, 2]);
        assert_eq!(t.value(m).data(), &[2.0, 3.0, 8.0, 9.0]);
        assert!(t.mean_axes(x, &[3]).is_err());
        assert!(t.mean_axes(x, &[1, 1]).is_err());
    }

    #[test]
    fn std_is_population_with_eps() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::new(vec![1, 2, 1], vec![1.0, -1.0]).unwrap());
        let s = t.std_axes(x, &[1]).unwrap();
        assert!((t.value(s).item() - (1.0f64 + 1e-5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn instance_norm_constant_is_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::full(vec![2, 3, 3, 2], 4.5));
        let y = t.instance_norm(x).unwrap();
        assert!(t.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn instance_norm_needs_two_spatial() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(vec![2, 1, 1, 4]));
        assert!(t.instance_norm(x).is_err());
    }
}
