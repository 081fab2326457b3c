use super::tape::Op;
use super::{shape_err, Real, Result, Tape, Tensor, Var};

/// Smallest singular-value estimate a spectral rescale will divide by.
pub const SIGMA_FLOOR: f64 = 1e-12;

pub(crate) fn matmul_grad<T: Real>(
    g: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    want_a: bool,
    want_b: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let da = want_a.then(|| {
        let mut out = Tensor::zeros(vec![m, k]);
        T::gemm(false, true, m, n, k, g.data(), b.data(), out.data_mut(), false);
        out
    });
    let db = want_b.then(|| {
        let mut out = Tensor::zeros(vec![k, n]);
        T::gemm(true, false, k, m, n, a.data(), g.data(), out.data_mut(), false);
        out
    });
    (da, db)
}

/// Column sums of a `[m, n]` tensor.
pub(crate) fn row_sum<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let n = *g.shape().last().unwrap();
    let mut out = Tensor::zeros(vec![n]);
    for row in g.data().chunks(n) {
        for (a, &b) in out.data_mut().iter_mut().zip(row) {
            *a += b;
        }
    }
    out
}

/// Views a weight tensor as the matrix `[fan_in, out]` where `out` is its
/// last extent.
pub(crate) fn fan_in_out(shape: &[usize]) -> (usize, usize) {
    let out = *shape.last().unwrap_or(&1);
    (shape.iter().product::<usize>() / out.max(1), out)
}

/// `u · (W v)` with `W` the `[out, fan_in]` view of `w`.
pub(crate) fn bilinear_sigma<T: Real>(w: &[T], rows: usize, cols: usize, u: &[T], v: &[T]) -> T {
    let mut sigma = T::zero();
    for i in 0..rows {
        let row = &w[i * cols..(i + 1) * cols];
        let dot: T = row.iter().zip(u).map(|(&a, &b)| a * b).sum();
        sigma += dot * v[i];
    }
    sigma
}

pub(crate) fn spectral_scale_grad<T: Real>(
    g: &Tensor<T>,
    w: &Tensor<T>,
    u: &[T],
    v: &[T],
    sigma: T,
    clamped: bool,
) -> Tensor<T> {
    let inv = T::one() / sigma;
    let mut out = g.map(|x| x * inv);
    if clamped {
        return out;
    }
    let gw: T = g.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum();
    let coef = gw * inv * inv;
    let (rows, cols) = fan_in_out(w.shape());
    let d = out.data_mut();
    for i in 0..rows {
        for o in 0..cols {
            d[i * cols + o] -= coef * v[i] * u[o];
        }
    }
    out
}

impl<T: Real> Tape<T> {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0] {
            return Err(shape_err(
                "matmul",
                format!("{:?} x {:?}", x.shape(), y.shape()),
            ));
        }
        let (m, k, n) = (x.shape()[0], x.shape()[1], y.shape()[1]);
        let mut out = Tensor::zeros(vec![m, n]);
        T::gemm(false, false, m, k, n, x.data(), y.data(), out.data_mut(), false);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Dense layer `x · w + b` with `x: [m, k]`, `w: [k, n]`, `b: [n]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.rank() != 2 || wv.rank() != 2 || xv.shape()[1] != wv.shape()[0] {
            return Err(shape_err(
                "linear",
                format!("input {:?} vs weight {:?}", xv.shape(), wv.shape()),
            ));
        }
        let (m, k, n) = (xv.shape()[0], xv.shape()[1], wv.shape()[1]);
        if bv.shape() != [n] {
            return Err(shape_err(
                "linear",
                format!("bias {:?} vs {n} outputs", bv.shape()),
            ));
        }
        let mut out = Tensor::zeros(vec![m, n]);
        for row in out.data_mut().chunks_mut(n) {
            row.copy_from_slice(bv.data());
        }
        T::gemm(false, false, m, k, n, xv.data(), wv.data(), out.data_mut(), true);
        Ok(self.push(out, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// `w / σ` with `σ = uᵀ W v`, where `W` is the `[out, fan_in]` view of
    /// `w`. `u` and `v` are held constant; the gradient still flows through
    /// the dependence of `σ` on `w`.
    pub fn spectral_scale(&mut self, w: Var, u: &[T], v: &[T]) -> Result<Var> {
        let wt = self.value(w);
        let (rows, cols) = fan_in_out(wt.shape());
        if u.len() != cols || v.len() != rows {
            return Err(shape_err(
                "spectral_scale",
                format!(
                    "weight {:?} needs u[{cols}], v[{rows}]; got u[{}], v[{}]",
                    wt.shape(),
                    u.len(),
                    v.len()
                ),
            ));
        }
        let raw = bilinear_sigma(wt.data(), rows, cols, u, v);
        let floor = T::lit(SIGMA_FLOOR);
        let clamped = raw < floor;
        let sigma = if clamped { floor } else { raw };
        let out = wt.map(|x| x / sigma);
        Ok(self.push(
            out,
            Op::SpectralScale {
                w,
                u: u.to_vec(),
                v: v.to_vec(),
                sigma,
                clamped,
            },
            &[w],
        ))
    }
}
