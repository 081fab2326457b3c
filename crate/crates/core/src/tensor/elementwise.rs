use super::tape::Op;
use super::{shape_err, Real, Result, Tape, Tensor, Var};

pub(crate) fn zip<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^x)` without overflow for large |x|.
pub(crate) fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Real> Tape<T> {
    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let out = zip(x, y, f);
        Ok(self.push(out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let mut branches = std::mem::take(&mut self.branches);
        let mask = branches.choose(self.value(a).data());
        self.branches = branches;
        let x = self.value(a);
        let out = match mask {
            None => x.map(|v| if v > T::zero() { v } else { v * slope }),
            Some(mask) => {
                let data = x
                    .data()
                    .iter()
                    .zip(&mask)
                    .map(|(&v, &pos)| if pos { v } else { v * slope })
                    .collect();
                Tensor::new(x.shape().to_vec(), data).expect("same shape")
            }
        };
        self.push(out, Op::LeakyRelu(a, slope), &[a])
    }

    /// Leaky ReLU with the pipeline-wide slope.
    pub fn lrelu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, T::lit(super::LEAKY_SLOPE))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(T::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        self.push(out, Op::Softplus(a), &[a])
    }
}
