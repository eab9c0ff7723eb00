//! Recording of primitive ops and reverse-mode gradient propagation.
//!
//! A [`Tape`] is append-only: every op reads nodes that were recorded before
//! it, so the node order is a valid topological order and backward is a
//! single reverse sweep.

use std::fmt;
use std::sync::Arc;

use super::array::{affine_forward, gemm};
use super::{GradientSet, NumericArray};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softplus,
    Exp,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Exp => x.exp(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Softplus => sigmoid(x),
            Activation::Exp => y,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// An op with a hand-written backward, recorded like any primitive.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&NumericArray]) -> Result<NumericArray>;

    /// Returns one gradient per input, each shaped like that input.
    fn backward(
        &self,
        inputs: &[&NumericArray],
        output: &NumericArray,
        grad_output: &NumericArray,
    ) -> Vec<NumericArray>;
}

#[derive(Clone)]
enum Op {
    Constant,
    Parameter(String),
    Affine { x: Var, weight: Var, bias: Var },
    Activation { x: Var, kind: Activation },
    ConcatColumns { left: Var, right: Var },
    MulConstant { x: Var, factor: Arc<NumericArray> },
    AddConstant { x: Var, offset: Arc<NumericArray> },
    GatherRows { x: Var, rows: Arc<Vec<usize>> },
    Sum { x: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    WeightedSquaredError { pred: Var, target: Arc<NumericArray>, row_weights: Arc<Vec<f64>> },
    Custom { inputs: Vec<Var>, op: Arc<dyn CustomOp> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Parameter(_) => vec![],
            Op::Affine { x, weight, bias } => vec![*x, *weight, *bias],
            Op::Activation { x, .. }
            | Op::MulConstant { x, .. }
            | Op::AddConstant { x, .. }
            | Op::GatherRows { x, .. }
            | Op::Sum { x }
            | Op::Scale { x, .. } => vec![*x],
            Op::WeightedSquaredError { pred, .. } => vec![*pred],
            Op::ConcatColumns { left, right } => vec![*left, *right],
            Op::Add { a, b } => vec![*a, *b],
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Constant => "constant",
            Op::Parameter(_) => "parameter",
            Op::Affine { .. } => "affine",
            Op::Activation { .. } => "activation",
            Op::ConcatColumns { .. } => "concat",
            Op::MulConstant { .. } => "mul_const",
            Op::AddConstant { .. } => "add_const",
            Op::GatherRows { .. } => "gather_rows",
            Op::Sum { .. } => "sum",
            Op::Add { .. } => "add",
            Op::Scale { .. } => "scale",
            Op::WeightedSquaredError { .. } => "weighted_sq_err",
            Op::Custom { op, .. } => op.name(),
        };
        f.write_str(name)
    }
}

struct Node {
    value: NumericArray,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node adjoints produced by [`Tape::backward_full`].
pub struct Adjoints {
    grads: Vec<Option<NumericArray>>,
}

impl Adjoints {
    /// Gradient of the loss with respect to `var`, `None` when unreached.
    pub fn wrt(&self, var: Var) -> Option<&NumericArray> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn matrix_dims(op: &'static str, a: &NumericArray) -> Result<(usize, usize)> {
    a.as_matrix_dims()
        .ok_or_else(|| Error::shape(op, format!("expected rank 1 or 2, got {:?}", a.shape())))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &NumericArray {
        &self.nodes[var.0].value
    }

    pub fn constant(&mut self, value: NumericArray) -> Var {
        self.push(value, Op::Constant)
    }

    /// Records a trainable leaf; its gradient is reported under `name`.
    pub fn parameter(&mut self, name: impl Into<String>, value: NumericArray) -> Var {
        self.push(value, Op::Parameter(name.into()))
    }

    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        self.record(Op::Affine { x, weight, bias })
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        self.record(Op::Activation { x, kind })
            .expect("activation is shape-preserving")
    }

    pub fn concat_columns(&mut self, left: Var, right: Var) -> Result<Var> {
        self.record(Op::ConcatColumns { left, right })
    }

    pub fn mul_constant(&mut self, x: Var, factor: NumericArray) -> Result<Var> {
        self.record(Op::MulConstant {
            x,
            factor: Arc::new(factor),
        })
    }

    pub fn add_constant(&mut self, x: Var, offset: NumericArray) -> Result<Var> {
        self.record(Op::AddConstant {
            x,
            offset: Arc::new(offset),
        })
    }

    pub fn gather_rows(&mut self, x: Var, rows: Vec<usize>) -> Result<Var> {
        self.record(Op::GatherRows {
            x,
            rows: Arc::new(rows),
        })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.record(Op::Sum { x }).expect("sum accepts any shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add { a, b })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.record(Op::Scale { x, factor })
            .expect("scale is shape-preserving")
    }

    /// `Σ_r w_r Σ_c (pred[r,c] − target[r,c])²` as a scalar.
    pub fn weighted_squared_error(
        &mut self,
        pred: Var,
        target: NumericArray,
        row_weights: Vec<f64>,
    ) -> Result<Var> {
        self.record(Op::WeightedSquaredError {
            pred,
            target: Arc::new(target),
            row_weights: Arc::new(row_weights),
        })
    }

    pub fn custom(&mut self, inputs: Vec<Var>, op: Arc<dyn CustomOp>) -> Result<Var> {
        self.record(Op::Custom { inputs, op })
    }

    fn push(&mut self, value: NumericArray, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        let requires_grad = match &op {
            Op::Constant => false,
            Op::Parameter(_) => true,
            other => other.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let value = Self::evaluate(&op, |v| &self.nodes[v.0].value)?;
        Ok(self.push(value, op))
    }

    /// Re-executes every recorded op from the leaves and returns all node
    /// values in order.
    pub fn replay(&self) -> Result<Vec<NumericArray>> {
        let mut values: Vec<NumericArray> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Constant | Op::Parameter(_) => node.value.clone(),
                op => Self::evaluate(op, |v| &values[v.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    fn evaluate<'a>(op: &Op, get: impl Fn(Var) -> &'a NumericArray) -> Result<NumericArray> {
        match op {
            Op::Constant | Op::Parameter(_) => unreachable!("leaves are not evaluated"),
            Op::Affine { x, weight, bias } => {
                let (x, w, b) = (get(*x), get(*weight), get(*bias));
                forward_affine(x, w, b)
            }
            Op::Activation { x, kind } => Ok(get(*x).map(|v| kind.apply(v))),
            Op::ConcatColumns { left, right } => {
                let (l, r) = (get(*left), get(*right));
                let (rows, lc) = matrix_dims("concat_columns", l)?;
                let (rrows, rc) = matrix_dims("concat_columns", r)?;
                if rows != rrows || l.shape().len() != r.shape().len() {
                    return Err(Error::shape(
                        "concat_columns",
                        format!("{:?} vs {:?}", l.shape(), r.shape()),
                    ));
                }
                let mut values = Vec::with_capacity(rows * (lc + rc));
                for i in 0..rows {
                    values.extend_from_slice(&l.values()[i * lc..(i + 1) * lc]);
                    values.extend_from_slice(&r.values()[i * rc..(i + 1) * rc]);
                }
                let shape = if l.shape().len() == 1 {
                    vec![lc + rc]
                } else {
                    vec![rows, lc + rc]
                };
                NumericArray::new(shape, values)
            }
            Op::MulConstant { x, factor } => elementwise("mul_constant", get(*x), factor, |a, b| a * b),
            Op::AddConstant { x, offset } => elementwise("add_constant", get(*x), offset, |a, b| a + b),
            Op::GatherRows { x, rows } => {
                let x = get(*x);
                let (n, c) = matrix_dims("gather_rows", x)?;
                let mut values = Vec::with_capacity(rows.len() * c);
                for &r in rows.iter() {
                    if r >= n {
                        return Err(Error::shape("gather_rows", format!("row {r} of {n}")));
                    }
                    values.extend_from_slice(&x.values()[r * c..(r + 1) * c]);
                }
                NumericArray::matrix(rows.len(), c, values)
            }
            Op::Sum { x } => Ok(NumericArray::scalar(get(*x).values().iter().sum())),
            Op::Add { a, b } => elementwise("add", get(*a), get(*b), |a, b| a + b),
            Op::Scale { x, factor } => Ok(get(*x).map(|v| v * factor)),
            Op::WeightedSquaredError {
                pred,
                target,
                row_weights,
            } => {
                let pred = get(*pred);
                if !pred.same_shape(target) {
                    return Err(Error::shape(
                        "weighted_squared_error",
                        format!("prediction {:?} vs target {:?}", pred.shape(), target.shape()),
                    ));
                }
                let (rows, cols) = matrix_dims("weighted_squared_error", pred)?;
                if row_weights.len() != rows {
                    return Err(Error::shape(
                        "weighted_squared_error",
                        format!("{} row weights for {rows} rows", row_weights.len()),
                    ));
                }
                let mut total = 0.0;
                for (r, w) in row_weights.iter().enumerate() {
                    let mut row = 0.0;
                    for c in 0..cols {
                        let d = pred.values()[r * cols + c] - target.values()[r * cols + c];
                        row += d * d;
                    }
                    total += w * row;
                }
                Ok(NumericArray::scalar(total))
            }
            Op::Custom { inputs, op } => {
                let args: Vec<&NumericArray> = inputs.iter().map(|v| get(*v)).collect();
                op.forward(&args)
            }
        }
    }

    /// Reverse sweep from `loss`; reports every parameter leaf on the tape,
    /// with zeros for those the loss does not reach.
    pub fn backward(&self, loss: Var) -> Result<GradientSet> {
        let adjoints = self.backward_full(loss)?;
        let mut out = GradientSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Parameter(name) = &node.op {
                match &adjoints.grads[i] {
                    Some(g) => out.accumulate(name, g),
                    None => out.accumulate(name, &NumericArray::zeros(node.value.shape())),
                }
            }
        }
        Ok(out)
    }

    pub fn backward_full(&self, loss: Var) -> Result<Adjoints> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", loss_value.shape()),
            ));
        }
        let mut grads: Vec<Option<NumericArray>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(NumericArray::filled(loss_value.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(g);
                continue;
            }
            for (input, contribution) in self.propagate(node, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(existing) => existing.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[i] = Some(g);
        }
        Ok(Adjoints { grads })
    }

    fn propagate(&self, node: &Node, g: &NumericArray) -> Vec<(Var, NumericArray)> {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Constant | Op::Parameter(_) => vec![],
            Op::Affine { x, weight, bias } => {
                let (xv, wv) = (val(*x), val(*weight));
                let (rows, inner) = xv.as_matrix_dims().expect("validated at record");
                let outer = wv.shape()[0];
                let gy = g.values();

                let mut out = Vec::with_capacity(3);
                if self.nodes[x.0].requires_grad {
                    let mut gx = vec![0.0; rows * inner];
                    gemm(rows, outer, inner, gy, (outer as isize, 1), wv.values(), (inner as isize, 1), &mut gx, 0.0);
                    out.push((*x, NumericArray::new(xv.shape().to_vec(), gx).unwrap()));
                }

                let mut gw = vec![0.0; outer * inner];
                gemm(outer, rows, inner, gy, (1, outer as isize), xv.values(), (inner as isize, 1), &mut gw, 0.0);

                let mut gb = vec![0.0; outer];
                for r in 0..rows {
                    for (o, acc) in gb.iter_mut().enumerate() {
                        *acc += gy[r * outer + o];
                    }
                }
                out.push((*weight, NumericArray::new(wv.shape().to_vec(), gw).unwrap()));
                out.push((*bias, NumericArray::new(val(*bias).shape().to_vec(), gb).unwrap()));
                out
            }
            Op::Activation { x, kind } => {
                let xv = val(*x);
                let values = xv
                    .values()
                    .iter()
                    .zip(node.value.values())
                    .zip(g.values())
                    .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                    .collect();
                vec![(*x, NumericArray::new(xv.shape().to_vec(), values).unwrap())]
            }
            Op::ConcatColumns { left, right } => {
                let (lv, rv) = (val(*left), val(*right));
                let (rows, lc) = lv.as_matrix_dims().unwrap();
                let (_, rc) = rv.as_matrix_dims().unwrap();
                let mut gl = Vec::with_capacity(rows * lc);
                let mut gr = Vec::with_capacity(rows * rc);
                for r in 0..rows {
                    let row = &g.values()[r * (lc + rc)..(r + 1) * (lc + rc)];
                    gl.extend_from_slice(&row[..lc]);
                    gr.extend_from_slice(&row[lc..]);
                }
                vec![
                    (*left, NumericArray::new(lv.shape().to_vec(), gl).unwrap()),
                    (*right, NumericArray::new(rv.shape().to_vec(), gr).unwrap()),
                ]
            }
            Op::MulConstant { x, factor } => {
                let values = g.values().iter().zip(factor.values()).map(|(a, b)| a * b).collect();
                vec![(*x, NumericArray::new(g.shape().to_vec(), values).unwrap())]
            }
            Op::AddConstant { x, .. } => vec![(*x, g.clone())],
            Op::GatherRows { x, rows } => {
                let xv = val(*x);
                let (_, c) = xv.as_matrix_dims().unwrap();
                let mut gx = NumericArray::zeros(xv.shape());
                let buf = gx.values_mut();
                for (i, &r) in rows.iter().enumerate() {
                    for k in 0..c {
                        buf[r * c + k] += g.values()[i * c + k];
                    }
                }
                vec![(*x, gx)]
            }
            Op::Sum { x } => vec![(*x, NumericArray::filled(val(*x).shape(), g.values()[0]))],
            Op::Add { a, b } => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Scale { x, factor } => vec![(*x, g.map(|v| v * factor))],
            Op::WeightedSquaredError {
                pred,
                target,
                row_weights,
            } => {
                let pv = val(*pred);
                let (_, cols) = pv.as_matrix_dims().unwrap();
                let upstream = g.values()[0];
                let values = pv
                    .values()
                    .iter()
                    .zip(target.values())
                    .enumerate()
                    .map(|(i, (p, t))| upstream * 2.0 * row_weights[i / cols] * (p - t))
                    .collect();
                vec![(*pred, NumericArray::new(pv.shape().to_vec(), values).unwrap())]
            }
            Op::Custom { inputs, op } => {
                let args: Vec<&NumericArray> = inputs.iter().map(|v| val(*v)).collect();
                let grads = op.backward(&args, &node.value, g);
                inputs.iter().copied().zip(grads).collect()
            }
        }
    }
}

fn elementwise(
    op: &'static str,
    a: &NumericArray,
    b: &NumericArray,
    f: impl Fn(f64, f64) -> f64,
) -> Result<NumericArray> {
    if !a.same_shape(b) {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let values = a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect();
    NumericArray::new(a.shape().to_vec(), values)
}

/// `y = W x + b`, batched over the rows of `x` when `x` is a matrix.
pub fn forward_affine(x: &NumericArray, weight: &NumericArray, bias: &NumericArray) -> Result<NumericArray> {
    let (rows, inner) = matrix_dims("affine", x)?;
    let [outer, w_inner] = *weight.shape() else {
        return Err(Error::shape("affine", format!("weight must be rank 2, got {:?}", weight.shape())));
    };
    if w_inner != inner {
        return Err(Error::shape(
            "affine",
            format!("input has {inner} features but weight is {outer}×{w_inner}"),
        ));
    }
    if bias.shape() != [outer] {
        return Err(Error::shape(
            "affine",
            format!("bias {:?} does not match {outer} outputs", bias.shape()),
        ));
    }
    let y = affine_forward(x.values(), rows, inner, weight.values(), outer, bias.values());
    let shape = if x.shape().len() == 1 { vec![outer] } else { vec![rows, outer] };
    NumericArray::new(shape, y)
}

pub fn forward_activation(x: &NumericArray, kind: Activation) -> NumericArray {
    x.map(|v| kind.apply(v))
}
