use super::tape::Op;
use super::{shape_err, Real, Result, Tape, Tensor, Var};

/// (outer, inner) element counts around `axis`.
fn outer_inner(shape: &[usize], axis: usize) -> (usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis + 1..].iter().product(),
    )
}

pub(crate) fn split_grad<T: Real>(g: &Tensor<T>, shapes: &[&[usize]], axis: usize) -> Vec<Tensor<T>> {
    let (outer, inner) = outer_inner(g.shape(), axis);
    let total = g.shape()[axis];
    let mut offset = 0;
    shapes
        .iter()
        .map(|s| {
            let len = s[axis];
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = (o * total + offset) * inner;
                data.extend_from_slice(&g.data()[base..base + len * inner]);
            }
            offset += len;
            Tensor::new(s.to_vec(), data).expect("split shape")
        })
        .collect()
}

pub(crate) fn narrow_grad<T: Real>(
    g: &Tensor<T>,
    input_shape: &[usize],
    axis: usize,
    start: usize,
) -> Tensor<T> {
    let (outer, inner) = outer_inner(input_shape, axis);
    let total = input_shape[axis];
    let len = g.shape()[axis];
    let mut out = Tensor::zeros(input_shape.to_vec());
    let dst = out.data_mut();
    for o in 0..outer {
        let src = &g.data()[o * len * inner..(o + 1) * len * inner];
        let base = (o * total + start) * inner;
        dst[base..base + len * inner].copy_from_slice(src);
    }
    out
}

pub(crate) fn repeat_batch_grad<T: Real>(g: &Tensor<T>, input_shape: &[usize]) -> Tensor<T> {
    let chunk: usize = input_shape.iter().product();
    let mut out = Tensor::zeros(input_shape.to_vec());
    for block in g.data().chunks(chunk) {
        for (a, &b) in out.data_mut().iter_mut().zip(block) {
            *a += b;
        }
    }
    out
}

impl<T: Real> Tape<T> {
    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Concatenates along `axis`; every other extent must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(shape_err("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let agrees = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !agrees {
                return Err(shape_err(
                    "concat",
                    format!("{s:?} vs {base:?} off axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, inner) = outer_inner(&base, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let len = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
            }
        }
        let out = Tensor::new(shape, data)?;
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// The slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(shape_err(
                "narrow",
                format!("{start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, inner) = outer_inner(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push(out, Op::Narrow { input: a, axis, start }, &[a]))
    }

    /// Stacks `n` copies of `a` along a new leading axis.
    pub fn repeat_batch(&mut self, a: Var, n: usize) -> Var {
        let t = self.value(a);
        let mut shape = vec![n];
        shape.extend_from_slice(t.shape());
        let data = t.data().repeat(n);
        let out = Tensor::new(shape, data).expect("repeat shape");
        self.push(out, Op::RepeatBatch(a), &[a])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn concat_last_axis() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap());
        let b = t.constant(Tensor::new(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.shape(c), &[2, 3]);
        assert_eq!(t.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn narrow_middle() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Tensor::from_fn(vec![2, 4], |i| i as f64));
        let n = t.narrow(a, 1, 1, 2).unwrap();
        assert_eq!(t.value(n).data(), &[1.0, 2.0, 5.0, 6.0]);
        assert!(t.narrow(a, 1, 3, 2).is_err());
    }

    proptest! {
        #[test]
        fn reshape_and_concat_preserve_multiset(
            vals in proptest::collection::vec(-1e3f64..1e3, 12),
            split in 1usize..3,
        ) {
            let mut t = Tape::<f64>::new();
            let a = t.constant(Tensor::new(vec![3, 4], vals.clone()).unwrap());
            let r = t.reshape(a, vec![2, 6]).unwrap();
            prop_assert_eq!(sorted(t.value(r).data().to_vec()), sorted(vals.clone()));

            let left = t.narrow(a, 1, 0, split).unwrap();
            let right = t.narrow(a, 1, split, 4 - split).unwrap();
            let c = t.concat(&[right, left], 1).unwrap();
            prop_assert_eq!(sorted(t.value(c).data().to_vec()), sorted(vals));
        }
    }
}
