//! Channels-last cross-correlation over one to three spatial axes, lowered
//! to GEMM through an explicit patch matrix.

use super::tape::Op;
use super::{shape_err, Real, Result, Tape, Tensor, Var};

/// Convolution geometry with every shape padded to three spatial axes
/// (missing axes have extent 1, kernel 1, stride 1, no padding).
#[derive(Clone, Debug)]
pub(crate) struct ConvGeom {
    batch: usize,
    spatial: usize,
    input: [usize; 3],
    output: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    cin: usize,
    cout: usize,
}

impl ConvGeom {
    fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let spatial = x.len().checked_sub(2).filter(|s| (1..=3).contains(s));
        let Some(spatial) = spatial else {
            return Err(shape_err("conv", format!("input rank {} unsupported", x.len())));
        };
        if w.len() != spatial + 2 {
            return Err(shape_err(
                "conv",
                format!("weight {w:?} does not match {spatial} spatial axes of input {x:?}"),
            ));
        }
        let cin = x[spatial + 1];
        if w[spatial] != cin {
            return Err(shape_err(
                "conv",
                format!("axis {}: input channels {cin} vs weight {}", spatial + 1, w[spatial]),
            ));
        }
        if stride == 0 {
            return Err(shape_err("conv", "stride must be positive"));
        }
        let mut g = Self {
            batch: x[0],
            spatial,
            input: [1; 3],
            output: [1; 3],
            kernel: [1; 3],
            stride: [1; 3],
            pad: [0; 3],
            cin,
            cout: w[spatial + 1],
        };
        for a in 0..spatial {
            let k = w[a];
            if k % 2 == 0 {
                return Err(shape_err("conv", format!("kernel axis {a} has even extent {k}")));
            }
            if k > x[a + 1] + 2 * pad {
                return Err(shape_err(
                    "conv",
                    format!("axis {}: kernel {k} exceeds padded extent {}", a + 1, x[a + 1] + 2 * pad),
                ));
            }
            g.input[a] = x[a + 1];
            g.kernel[a] = k;
            g.stride[a] = stride;
            g.pad[a] = pad;
            g.output[a] = (x[a + 1] + 2 * pad - k) / stride + 1;
        }
        Ok(g)
    }

    fn out_shape(&self) -> Vec<usize> {
        let mut s = vec![self.batch];
        s.extend_from_slice(&self.output[..self.spatial]);
        s.push(self.cout);
        s
    }

    fn positions(&self) -> usize {
        self.output.iter().product()
    }

    fn patch(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.cin
    }

    fn in_len(&self) -> usize {
        self.input.iter().product::<usize>() * self.cin
    }

    /// In-bounds kernel taps `[lo, hi)` on axis `a` for output coordinate
    /// `o`, and the source coordinate of tap `lo`.
    #[inline]
    fn taps(&self, a: usize, o: usize) -> (usize, usize, usize) {
        let base = o * self.stride[a];
        let lo = self.pad[a].saturating_sub(base);
        let hi = (self.input[a] + self.pad[a]).saturating_sub(base).min(self.kernel[a]);
        (lo, hi.max(lo), (base + lo).saturating_sub(self.pad[a]))
    }

    /// Walks the patch matrix row by row. For every run of in-bounds taps
    /// along the innermost kernel axis, calls `f(row, Some((col, src, len)))`
    /// where the run covers `len` contiguous elements in both the patch row
    /// and the source sample. Rows with some taps in the padding get a
    /// `f(row, None)` call before their runs.
    fn for_each_run(&self, mut f: impl FnMut(usize, Option<(usize, usize, usize)>)) {
        let [o0n, o1n, o2n] = self.output;
        let [k0n, k1n, k2n] = self.kernel;
        let [_, i1n, i2n] = self.input;
        let cin = self.cin;
        let mut row = 0;
        for o0 in 0..o0n {
            let (l0, h0, s0) = self.taps(0, o0);
            for o1 in 0..o1n {
                let (l1, h1, s1) = self.taps(1, o1);
                for o2 in 0..o2n {
                    let (l2, h2, s2) = self.taps(2, o2);
                    if h0 - l0 < k0n || h1 - l1 < k1n || h2 - l2 < k2n {
                        f(row, None);
                    }
                    if l2 < h2 {
                        let len = (h2 - l2) * cin;
                        for k0 in l0..h0 {
                            let a = s0 + k0 - l0;
                            for k1 in l1..h1 {
                                let b = s1 + k1 - l1;
                                let col = ((k0 * k1n + k1) * k2n + l2) * cin;
                                f(row, Some((col, ((a * i1n + b) * i2n + s2) * cin, len)));
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let patch = self.patch();
        self.for_each_run(|row, run| match run {
            None => cols[row * patch..(row + 1) * patch].fill(T::zero()),
            Some((col, src, len)) => {
                let dst = row * patch + col;
                cols[dst..dst + len].copy_from_slice(&x[src..src + len]);
            }
        });
    }

    fn col2im<T: Real>(&self, cols: &[T], dx: &mut [T]) {
        let patch = self.patch();
        self.for_each_run(|row, run| {
            if let Some((col, src, len)) = run {
                let from = &cols[row * patch + col..row * patch + col + len];
                for (d, &s) in dx[src..src + len].iter_mut().zip(from) {
                    *d += s;
                }
            }
        });
    }

    /// 1×1 kernels at stride 1 read the input directly as the patch matrix.
    fn is_pointwise(&self) -> bool {
        self.kernel == [1; 3] && self.stride == [1; 3] && self.pad == [0; 3]
    }

}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn conv_forward<T: Real>(geom: &ConvGeom, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (p, k, n) = (geom.positions(), geom.patch(), geom.cout);
    let mut out = Tensor::zeros(geom.out_shape());
    let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![T::zero(); p * k] };
    let in_len = geom.in_len();
    for (s, dst) in out.data_mut().chunks_mut(p * n).enumerate() {
        for row in dst.chunks_mut(n) {
            row.copy_from_slice(b.data());
        }
        let xs = &x.data()[s * in_len..(s + 1) * in_len];
        let a = if geom.is_pointwise() {
            xs
        } else {
            geom.im2col(xs, &mut cols);
            &cols
        };
        T::gemm(false, false, p, k, n, a, w.data(), dst, true);
    }
    out
}

pub(crate) fn conv_grad<T: Real>(
    geom: &ConvGeom,
    g: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    want: [bool; 3],
) -> ConvGrads<T> {
    let (p, k, n) = (geom.positions(), geom.patch(), geom.cout);
    let in_len = geom.in_len();
    let pointwise = geom.is_pointwise();
    let mut dx = want[0].then(|| Tensor::zeros(x.shape().to_vec()));
    let mut dw = want[1].then(|| Tensor::zeros(w.shape().to_vec()));
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); p * k] };
    let mut dcols = if pointwise || !want[0] { Vec::new() } else { vec![T::zero(); p * k] };
    for s in 0..geom.batch {
        let gs = &g.data()[s * p * n..(s + 1) * p * n];
        let xs = &x.data()[s * in_len..(s + 1) * in_len];
        if let Some(dw) = dw.as_mut() {
            let a = if pointwise {
                xs
            } else {
                geom.im2col(xs, &mut cols);
                &cols
            };
            T::gemm(true, false, k, p, n, a, gs, dw.data_mut(), true);
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx.data_mut()[s * in_len..(s + 1) * in_len];
            if pointwise {
                T::gemm(false, true, p, n, k, gs, w.data(), dxs, false);
            } else {
                T::gemm(false, true, p, n, k, gs, w.data(), &mut dcols, false);
                geom.col2im(&dcols, dxs);
            }
        }
    }
    let bias = want[2].then(|| {
        let mut db = Tensor::zeros(vec![n]);
        for row in g.data().chunks(n) {
            for (a, &b) in db.data_mut().iter_mut().zip(row) {
                *a += b;
            }
        }
        db
    });
    ConvGrads {
        input: dx,
        weight: dw,
        bias,
    }
}

impl<T: Real> Tape<T> {
    /// Zero-padded cross-correlation. Input `[N, spatial.., Cin]`, weight
    /// `[k.., Cin, Cout]`, bias `[Cout]`; the spatial rank is read from the
    /// weight.
    pub fn conv(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), stride, pad)?;
        if self.shape(b) != [geom.cout] {
            return Err(shape_err(
                "conv",
                format!("bias {:?} vs {} output channels", self.shape(b), geom.cout),
            ));
        }
        let out = conv_forward(&geom, self.value(x), self.value(w), self.value(b));
        Ok(self.push(out, Op::Conv { x, w, b, geom }, &[x, w, b]))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        if self.shape(w).len() != 4 {
            return Err(shape_err("conv2d", format!("weight {:?} is not rank 4", self.shape(w))));
        }
        self.conv(x, w, b, stride, pad)
    }

    pub fn conv3d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        if self.shape(w).len() != 5 {
            return Err(shape_err("conv3d", format!("weight {:?} is not rank 5", self.shape(w))));
        }
        self.conv(x, w, b, stride, pad)
    }
}
