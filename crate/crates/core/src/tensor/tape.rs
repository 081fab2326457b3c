use std::collections::HashMap;

use super::conv::ConvGeom;
use super::{Real, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    LeakyRelu(Var, T),
    Tanh(Var),
    Softplus(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { input: Var, axis: usize, start: usize },
    RepeatBatch(Var),
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Var },
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom },
    Upsample { input: Var, factor: usize },
    Trilinear { input: Var, grid: Tensor<T> },
    Sum(Var),
    Mean(Var),
    MeanAxes { input: Var, axes: Vec<usize> },
    StdAxes { input: Var, axes: Vec<usize>, mean: Tensor<T> },
    InstanceNorm { input: Var, inv_std: Vec<T> },
    ChannelAffine { x: Var, scale: Var, shift: Var },
    SpectralScale { w: Var, u: Vec<T>, v: Vec<T>, sigma: T, clamped: bool },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Records a forward computation so that [`Tape::backward`] can replay it in
/// reverse. Nodes are appended in evaluation order, which is a topological
/// order by construction.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    bound: HashMap<String, Var>,
    pub(crate) branches: Branches,
}

/// Leaky ReLU branch choices of one forward pass, in op order. Replaying
/// them makes the graph a smooth function of its inputs near the recorded
/// point, so finite differences see the same branch the adjoint uses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BranchPattern {
    masks: Vec<Vec<bool>>,
}

impl BranchPattern {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

#[derive(Debug, Default)]
pub(crate) enum Branches {
    #[default]
    Free,
    Record(BranchPattern),
    Replay(BranchPattern, usize),
}

impl Branches {
    /// Positive-branch mask for a leaky ReLU over `x`.
    pub(crate) fn choose<T: Real>(&mut self, x: &[T]) -> Option<Vec<bool>> {
        match self {
            Branches::Free => None,
            Branches::Record(p) => {
                let mask: Vec<bool> = x.iter().map(|&v| v > T::zero()).collect();
                p.masks.push(mask.clone());
                Some(mask)
            }
            Branches::Replay(p, cursor) => {
                let mask = p.masks.get(*cursor).filter(|m| m.len() == x.len()).cloned();
                *cursor += 1;
                mask
            }
        }
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: HashMap::new(),
            branches: Branches::Free,
        }
    }

    /// A tape that records every leaky ReLU branch choice.
    pub fn recording() -> Self {
        Self {
            branches: Branches::Record(BranchPattern::default()),
            ..Self::new()
        }
    }

    /// A tape whose leaky ReLUs follow `pattern` instead of the sign of
    /// their input. Ops beyond the pattern, or of a different size, use the
    /// sign as usual.
    pub fn replaying(pattern: BranchPattern) -> Self {
        Self {
            branches: Branches::Replay(pattern, 0),
            ..Self::new()
        }
    }

    /// The pattern recorded so far; empty unless built with `recording`.
    pub fn branch_pattern(&self) -> BranchPattern {
        match &self.branches {
            Branches::Record(p) => p.clone(),
            _ => BranchPattern::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients accumulate on leaves created with
    /// `requires_grad` until [`Tape::zero_grad`].
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Binds a named parameter as a leaf, reusing the existing leaf when the
    /// same name was already bound on this tape.
    pub fn bind(&mut self, name: &str, value: &Tensor<T>, requires_grad: bool) -> Var {
        if let Some(&v) = self.bound.get(name) {
            return v;
        }
        let v = self.leaf(value.clone(), requires_grad);
        self.bound.insert(name.to_string(), v);
        v
    }

    /// Gradients of every bound parameter that requires one.
    pub fn bound_grads(&self) -> impl Iterator<Item = (&str, Option<&Tensor<T>>)> {
        self.bound
            .iter()
            .filter(|(_, v)| self.nodes[v.0].requires_grad)
            .map(|(k, v)| (k.as_str(), self.nodes[v.0].grad.as_ref()))
    }

    pub fn bound_var(&self, name: &str) -> Option<Var> {
        self.bound.get(name).copied()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagates d(loss)/d(node) back to every leaf that requires a
    /// gradient, adding into the leaf accumulators.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.nodes[loss.0].value.shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(shape));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.add_assign(&g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (v, contrib) in self.adjoint(i, &g)? {
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn adjoint(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let out = &self.nodes[i].value;
        let val = |v: Var| &self.nodes[v.0].value;
        let mut res = Vec::new();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    res.push((*a, g.clone()));
                }
                if self.wants(*b) {
                    res.push((*b, g.clone()));
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    res.push((*a, g.clone()));
                }
                if self.wants(*b) {
                    res.push((*b, g.map(|x| -x)));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    res.push((*a, super::elementwise::zip(g, val(*b), |x, y| x * y)));
                }
                if self.wants(*b) {
                    res.push((*b, super::elementwise::zip(g, val(*a), |x, y| x * y)));
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                res.push((*a, g.map(|x| x * c)));
            }
            Op::LeakyRelu(a, slope) => {
                let slope = *slope;
                let grad = super::elementwise::zip(g, val(*a), |gx, x| {
                    if x > T::zero() {
                        gx
                    } else {
                        gx * slope
                    }
                });
                res.push((*a, grad));
            }
            Op::Tanh(a) => {
                let grad = super::elementwise::zip(g, out, |gx, y| gx * (T::one() - y * y));
                res.push((*a, grad));
            }
            Op::Softplus(a) => {
                let grad = super::elementwise::zip(g, val(*a), |gx, x| {
                    gx * super::elementwise::sigmoid(x)
                });
                res.push((*a, grad));
            }
            Op::Reshape(a) => {
                res.push((*a, g.clone().reshaped(val(*a).shape().to_vec())?));
            }
            Op::Concat { inputs, axis } => {
                let shapes: Vec<&[usize]> = inputs.iter().map(|v| val(*v).shape()).collect();
                let parts = super::shape_ops::split_grad(g, &shapes, *axis);
                for (v, p) in inputs.iter().zip(parts) {
                    if self.wants(*v) {
                        res.push((*v, p));
                    }
                }
            }
            Op::Narrow { input, axis, start } => {
                res.push((
                    *input,
                    super::shape_ops::narrow_grad(g, val(*input).shape(), *axis, *start),
                ));
            }
            Op::RepeatBatch(a) => {
                res.push((*a, super::shape_ops::repeat_batch_grad(g, val(*a).shape())));
            }
            Op::MatMul(a, b) => {
                let (da, db) = super::linalg::matmul_grad(
                    g,
                    val(*a),
                    val(*b),
                    self.wants(*a),
                    self.wants(*b),
                );
                res.extend(da.map(|t| (*a, t)));
                res.extend(db.map(|t| (*b, t)));
            }
            Op::Linear { x, w, b } => {
                let (dx, dw) =
                    super::linalg::matmul_grad(g, val(*x), val(*w), self.wants(*x), self.wants(*w));
                res.extend(dx.map(|t| (*x, t)));
                res.extend(dw.map(|t| (*w, t)));
                if self.wants(*b) {
                    res.push((*b, super::linalg::row_sum(g)));
                }
            }
            Op::Conv { x, w, b, geom } => {
                let grads = super::conv::conv_grad(
                    geom,
                    g,
                    val(*x),
                    val(*w),
                    [self.wants(*x), self.wants(*w), self.wants(*b)],
                );
                res.extend(grads.input.map(|t| (*x, t)));
                res.extend(grads.weight.map(|t| (*w, t)));
                res.extend(grads.bias.map(|t| (*b, t)));
            }
            Op::Upsample { input, factor } => {
                res.push((
                    *input,
                    super::resample::upsample_grad(g, val(*input).shape(), *factor),
                ));
            }
            Op::Trilinear { input, grid } => {
                res.push((
                    *input,
                    super::resample::trilinear_grad(g, val(*input).shape(), grid),
                ));
            }
            Op::Sum(a) => {
                res.push((*a, Tensor::full(val(*a).shape().to_vec(), g.item())));
            }
            Op::Mean(a) => {
                let n = T::from_usize(val(*a).len()).unwrap();
                res.push((*a, Tensor::full(val(*a).shape().to_vec(), g.item() / n)));
            }
            Op::MeanAxes { input, axes } => {
                res.push((*input, super::reduce::mean_axes_grad(g, val(*input).shape(), axes)));
            }
            Op::StdAxes { input, axes, mean } => {
                res.push((
                    *input,
                    super::reduce::std_axes_grad(g, val(*input), axes, mean, out),
                ));
            }
            Op::InstanceNorm { input, inv_std } => {
                res.push((*input, super::reduce::instance_norm_grad(g, out, inv_std)));
            }
            Op::ChannelAffine { x, scale, shift } => {
                let (dx, dscale, dshift) = super::reduce::channel_affine_grad(
                    g,
                    val(*x),
                    val(*scale),
                    [self.wants(*x), self.wants(*scale), self.wants(*shift)],
                );
                res.extend(dx.map(|t| (*x, t)));
                res.extend(dscale.map(|t| (*scale, t)));
                res.extend(dshift.map(|t| (*shift, t)));
            }
            Op::SpectralScale {
                w,
                u,
                v,
                sigma,
                clamped,
            } => {
                res.push((
                    *w,
                    super::linalg::spectral_scale_grad(g, val(*w), u, v, *sigma, *clamped),
                ));
            }
        }
        Ok(res)
    }
}
