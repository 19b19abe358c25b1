use std::collections::{BTreeMap, HashMap};

use super::{Gradients, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive kinds reachable through [`Graph::forward`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive<S> {
    Add,
    ElementwiseMul,
    MatMul,
    Concat,
    RowLookup(usize),
    Sigmoid,
    Tanh,
    SoftmaxLastDim,
    Log,
    Square,
    Sum,
    ScalarScale(S),
}

#[derive(Clone, Debug)]
enum Op<S> {
    Constant,
    Param(ParamId),
    Add(Var, Var),
    /// `[n, k] + [k]`, the vector added to every row.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    RowLookup(Var, usize),
    Pick(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Scale(Var, S),
    AddScalar(Var, S),
    SoftmaxLastDim(Var),
    LogSoftmaxLastDim(Var),
}

#[derive(Clone, Debug)]
struct Node<S> {
    op: Op<S>,
    /// `None` for parameter leaves, whose value lives in the borrowed [`ParamSet`].
    value: Option<Tensor<S>>,
}

/// Computation record for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every input precedes its consumer.
/// Parameters are borrowed rather than copied; one record lives for one training step.
pub struct Graph<'p, S> {
    params: &'p ParamSet<S>,
    nodes: Vec<Node<S>>,
    param_nodes: HashMap<ParamId, Var>,
    grads: Vec<Option<Vec<S>>>,
    /// Row gradients of lookups taken directly from a parameter table, keyed by table node.
    sparse_rows: HashMap<usize, BTreeMap<usize, Vec<S>>>,
    backward_done: bool,
}

fn value_of<'a, S>(nodes: &'a [Node<S>], params: &'a ParamSet<S>, v: Var) -> &'a Tensor<S>
where
    S: Scalar,
{
    match (&nodes[v.0].value, &nodes[v.0].op) {
        (Some(t), _) => t,
        (None, Op::Param(id)) => params.get(*id),
        (None, _) => unreachable!("only parameter leaves are stored by reference"),
    }
}

fn grad_slot<S: Scalar>(grads: &mut [Option<Vec<S>>], v: Var, len: usize) -> &mut Vec<S> {
    grads[v.0].get_or_insert_with(|| vec![S::zero(); len])
}

fn softmax_slice<S: Scalar>(xs: &[S], out: &mut [S]) {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn log_softmax_slice<S: Scalar>(xs: &[S], out: &mut [S]) {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    let total: S = xs.iter().map(|&x| (x - max).exp()).sum();
    let log_z = max + total.ln();
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = x - log_z;
    }
}

impl<'p, S: Scalar> Graph<'p, S> {
    pub fn new(params: &'p ParamSet<S>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            grads: Vec::new(),
            sparse_rows: HashMap::new(),
            backward_done: false,
        }
    }

    pub fn params(&self) -> &'p ParamSet<S> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        value_of(&self.nodes, self.params, v)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// First element of `v`; the scalar value for shape `[1]`.
    pub fn item(&self, v: Var) -> S {
        self.value(v).item()
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<S>) -> Var {
        self.push(Op::Constant, t)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        self.constant(Tensor::zeros(shape.to_vec()))
    }

    /// Leaf for a parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    /// Dispatches a primitive by kind.
    pub fn forward(&mut self, kind: Primitive<S>, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{kind:?} takes {n} inputs, got {}",
                    inputs.len()
                )))
            }
        };
        match kind {
            Primitive::Add => {
                arity(2)?;
                self.add(inputs[0], inputs[1])
            }
            Primitive::ElementwiseMul => {
                arity(2)?;
                self.mul(inputs[0], inputs[1])
            }
            Primitive::MatMul => {
                arity(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            Primitive::Concat => self.concat(inputs),
            Primitive::RowLookup(i) => {
                arity(1)?;
                self.row_lookup(inputs[0], i)
            }
            Primitive::Sigmoid => {
                arity(1)?;
                Ok(self.sigmoid(inputs[0]))
            }
            Primitive::Tanh => {
                arity(1)?;
                Ok(self.tanh(inputs[0]))
            }
            Primitive::SoftmaxLastDim => {
                arity(1)?;
                Ok(self.softmax(inputs[0]))
            }
            Primitive::Log => {
                arity(1)?;
                self.log(inputs[0])
            }
            Primitive::Square => {
                arity(1)?;
                Ok(self.square(inputs[0]))
            }
            Primitive::Sum => {
                arity(1)?;
                Ok(self.sum(inputs[0]))
            }
            Primitive::ScalarScale(c) => {
                arity(1)?;
                Ok(self.scale(inputs[0], c))
            }
        }
    }

    fn map_unary(&mut self, a: Var, op: Op<S>, f: impl Fn(S) -> S) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(op, out)
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op<S>,
        f: impl Fn(S, S) -> S,
    ) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape(name, x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(op, out))
    }

    /// Elementwise sum. `b` may also be a vector matching the last dimension of a matrix `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() == y.shape() {
            return self.zip_same("add", a, b, Op::Add(a, b), |p, q| p + q);
        }
        if x.rank() == 2 && y.rank() == 1 && x.shape()[1] == y.shape()[0] {
            let k = y.len();
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, &p)| p + y.data()[i % k])
                .collect();
            let out = Tensor::new(x.shape().to_vec(), data)?;
            return Ok(self.push(Op::AddRow(a, b), out));
        }
        Err(Error::shape("add", x.shape(), y.shape()))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("elementwise_mul", a, b, Op::Mul(a, b), |p, q| p * q)
    }

    /// `[m,k]·[k,n]`, `[m,k]·[k]` or `[k]·[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        let out = match (x.shape(), y.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![S::zero(); m * n];
                for i in 0..m {
                    let xr = x.row(i);
                    let or = &mut out[i * n..(i + 1) * n];
                    for (p, &xv) in xr.iter().enumerate() {
                        if xv == S::zero() {
                            continue;
                        }
                        for (o, &yv) in or.iter_mut().zip(y.row(p)) {
                            *o += xv * yv;
                        }
                    }
                }
                Tensor::new([m, n], out)?
            }
            (&[m, k], &[k2]) if k == k2 => {
                let out = (0..m)
                    .map(|i| {
                        x.row(i)
                            .iter()
                            .zip(y.data())
                            .fold(S::zero(), |acc, (&p, &q)| acc + p * q)
                    })
                    .collect();
                Tensor::new([m], out)?
            }
            (&[k], &[k2, n]) if k == k2 => {
                let mut out = vec![S::zero(); n];
                for (p, &xv) in x.data().iter().enumerate() {
                    for (o, &yv) in out.iter_mut().zip(y.row(p)) {
                        *o += xv * yv;
                    }
                }
                Tensor::new([n], out)?
            }
            (l, r) => return Err(Error::shape("matmul", l, r)),
        };
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// Concatenates 1-D tensors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(Error::shape("concat", t.shape(), &[t.len()]));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::vector(data);
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("stack of zero rows".into()));
        }
        let first = self.value(rows[0]).shape().to_vec();
        if first.len() != 1 {
            return Err(Error::shape("stack", &first, &[first.iter().product()]));
        }
        let mut data = Vec::with_capacity(rows.len() * first[0]);
        for &r in rows {
            let t = self.value(r);
            if t.shape() != first.as_slice() {
                return Err(Error::shape("stack", &first, t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new([rows.len(), first[0]], data)?;
        Ok(self.push(Op::Stack(rows.to_vec()), out))
    }

    pub fn row_lookup(&mut self, table: Var, index: usize) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::shape("row_lookup", t.shape(), &[index]));
        }
        if index >= t.shape()[0] {
            return Err(Error::IndexOutOfRange {
                index,
                size: t.shape()[0],
            });
        }
        let out = Tensor::vector(t.row(index).to_vec());
        Ok(self.push(Op::RowLookup(table, index), out))
    }

    /// Element `index` of a 1-D tensor, as shape `[1]`.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 {
            return Err(Error::shape("pick", t.shape(), &[index]));
        }
        if index >= t.len() {
            return Err(Error::IndexOutOfRange {
                index,
                size: t.len(),
            });
        }
        let out = Tensor::scalar(t.data()[index]);
        Ok(self.push(Op::Pick(a, index), out))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map_unary(a, Op::Sigmoid(a), |x| {
            if x >= S::zero() {
                S::one() / (S::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (S::one() + e)
            }
        })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map_unary(a, Op::Tanh(a), S::tanh)
    }

    /// Natural log; every input entry must be positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(&bad) = self.value(a).data().iter().find(|&&x| !(x > S::zero())) {
            return Err(Error::InvalidArgument(format!("log of non-positive value {bad}")));
        }
        Ok(self.map_unary(a, Op::Log(a), S::ln))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map_unary(a, Op::Square(a), |x| x * x)
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        self.map_unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: S) -> Var {
        self.map_unary(a, Op::AddScalar(a, c), |x| x + c)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -S::one())
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        self.add_scalar(n, S::one())
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Op::Sum(a), Tensor::scalar(total))
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, xs: &[Var]) -> Result<Var> {
        let c = self.concat(xs)?;
        Ok(self.sum(c))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let k = x.last_dim();
        let mut out = vec![S::zero(); x.len()];
        for (xs, os) in x.data().chunks(k).zip(out.chunks_mut(k)) {
            softmax_slice(xs, os);
        }
        let out = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        self.push(Op::SoftmaxLastDim(a), out)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let k = x.last_dim();
        let mut out = vec![S::zero(); x.len()];
        for (xs, os) in x.data().chunks(k).zip(out.chunks_mut(k)) {
            log_softmax_slice(xs, os);
        }
        let out = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        self.push(Op::LogSoftmaxLastDim(a), out)
    }

    /// Clears all gradients so that [`Graph::backward`] may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.sparse_rows.clear();
        self.backward_done = false;
    }

    /// Accumulates `d loss / d node` into every node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let shape = self.value(loss).shape();
        if shape != [1] {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss of shape [1], got {shape:?}"
            )));
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![S::one()]);

        let nodes = &self.nodes;
        let params = self.params;
        let grads = &mut self.grads;
        let sparse = &mut self.sparse_rows;
        let val = |v: Var| value_of(nodes, params, v);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let out = val(Var(i));
            match &nodes[i].op {
                Op::Constant | Op::Param(_) => {}
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let s = grad_slot(grads, v, g.len());
                        s.iter_mut().zip(&g).for_each(|(s, &d)| *s += d);
                    }
                }
                Op::AddRow(a, b) => {
                    let s = grad_slot(grads, *a, g.len());
                    s.iter_mut().zip(&g).for_each(|(s, &d)| *s += d);
                    let k = val(*b).len();
                    let s = grad_slot(grads, *b, k);
                    for row in g.chunks(k) {
                        s.iter_mut().zip(row).for_each(|(s, &d)| *s += d);
                    }
                }
                Op::Sub(a, b) => {
                    let s = grad_slot(grads, *a, g.len());
                    s.iter_mut().zip(&g).for_each(|(s, &d)| *s += d);
                    let s = grad_slot(grads, *b, g.len());
                    s.iter_mut().zip(&g).for_each(|(s, &d)| *s -= d);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    let s = grad_slot(grads, *a, g.len());
                    for ((s, &d), &q) in s.iter_mut().zip(&g).zip(y.data()) {
                        *s += d * q;
                    }
                    let s = grad_slot(grads, *b, g.len());
                    for ((s, &d), &p) in s.iter_mut().zip(&g).zip(x.data()) {
                        *s += d * p;
                    }
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (val(*a), val(*b));
                    match (x.shape(), y.shape()) {
                        (&[m, k], &[_, n]) => {
                            let sa = grad_slot(grads, *a, m * k);
                            for i in 0..m {
                                let gr = &g[i * n..(i + 1) * n];
                                for p in 0..k {
                                    sa[i * k + p] += gr
                                        .iter()
                                        .zip(y.row(p))
                                        .fold(S::zero(), |acc, (&d, &w)| acc + d * w);
                                }
                            }
                            let sb = grad_slot(grads, *b, k * n);
                            for i in 0..m {
                                let gr = &g[i * n..(i + 1) * n];
                                for (p, &xv) in x.row(i).iter().enumerate() {
                                    for (s, &d) in sb[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                        *s += xv * d;
                                    }
                                }
                            }
                        }
                        (&[m, k], &[_]) => {
                            let sa = grad_slot(grads, *a, m * k);
                            for (i, &d) in g.iter().enumerate() {
                                for (s, &q) in sa[i * k..(i + 1) * k].iter_mut().zip(y.data()) {
                                    *s += d * q;
                                }
                            }
                            let sb = grad_slot(grads, *b, k);
                            for (i, &d) in g.iter().enumerate() {
                                for (s, &w) in sb.iter_mut().zip(x.row(i)) {
                                    *s += w * d;
                                }
                            }
                        }
                        (&[k], &[_, n]) => {
                            let sa = grad_slot(grads, *a, k);
                            for (p, s) in sa.iter_mut().enumerate() {
                                *s += g
                                    .iter()
                                    .zip(y.row(p))
                                    .fold(S::zero(), |acc, (&d, &w)| acc + d * w);
                            }
                            let sb = grad_slot(grads, *b, k * n);
                            for (p, &xv) in x.data().iter().enumerate() {
                                for (s, &d) in sb[p * n..(p + 1) * n].iter_mut().zip(&g) {
                                    *s += xv * d;
                                }
                            }
                        }
                        _ => unreachable!("matmul shapes validated in forward"),
                    }
                }
                Op::Concat(parts) | Op::Stack(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = val(p).len();
                        let s = grad_slot(grads, p, n);
                        s.iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(s, &d)| *s += d);
                        offset += n;
                    }
                }
                Op::RowLookup(table, idx) => {
                    let t = val(*table);
                    let cols = t.last_dim();
                    if matches!(nodes[table.0].op, Op::Param(_)) {
                        let row = sparse
                            .entry(table.0)
                            .or_default()
                            .entry(*idx)
                            .or_insert_with(|| vec![S::zero(); cols]);
                        row.iter_mut().zip(&g).for_each(|(s, &d)| *s += d);
                    } else {
                        let s = grad_slot(grads, *table, t.len());
                        s[idx * cols..(idx + 1) * cols]
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(s, &d)| *s += d);
                    }
                }
                Op::Pick(a, idx) => {
                    let n = val(*a).len();
                    grad_slot(grads, *a, n)[*idx] += g[0];
                }
                Op::Sigmoid(a) => {
                    let s = grad_slot(grads, *a, g.len());
                    for ((s, &d), &y) in s.iter_mut().zip(&g).zip(out.data()) {
                        *s += d * y * (S::one() - y);
                    }
                }
                Op::Tanh(a) => {
                    let s = grad_slot(grads, *a, g.len());
                    for ((s, &d), &y) in s.iter_mut().zip(&g).zip(out.data()) {
                        *s += d * (S::one() - y * y);
                    }
                }
                Op::Log(a) => {
                    let x = val(*a);
                    let s = grad_slot(grads, *a, g.len());
                    for ((s, &d), &p) in s.iter_mut().zip(&g).zip(x.data()) {
                        *s += d / p;
                    }
                }
                Op::Square(a) => {
                    let x = val(*a);
                    let s = grad_slot(grads, *a, g.len());
                    let two = S::one() + S::one();
                    for ((s, &d), &p) in s.iter_mut().zip(&g).zip(x.data()) {
                        *s += d * two * p;
                    }
                }
                Op::Sum(a) => {
                    let n = val(*a).len();
                    let s = grad_slot(grads, *a, n);
                    s.iter_mut().for_each(|s| *s += g[0]);
                }
                Op::Scale(a, c) => {
                    let s = grad_slot(grads, *a, g.len());
                    s.iter_mut().zip(&g).for_each(|(s, &d)| *s += d * *c);
                }
                Op::AddScalar(a, _) => {
                    let s = grad_slot(grads, *a, g.len());
                    s.iter_mut().zip(&g).for_each(|(s, &d)| *s += d);
                }
                Op::SoftmaxLastDim(a) => {
                    let k = out.last_dim();
                    let s = grad_slot(grads, *a, g.len());
                    for ((ss, gs), ys) in s.chunks_mut(k).zip(g.chunks(k)).zip(out.data().chunks(k))
                    {
                        let dot = gs
                            .iter()
                            .zip(ys)
                            .fold(S::zero(), |acc, (&d, &y)| acc + d * y);
                        for ((s, &d), &y) in ss.iter_mut().zip(gs).zip(ys) {
                            *s += y * (d - dot);
                        }
                    }
                }
                Op::LogSoftmaxLastDim(a) => {
                    let k = out.last_dim();
                    let s = grad_slot(grads, *a, g.len());
                    for ((ss, gs), ys) in s.chunks_mut(k).zip(g.chunks(k)).zip(out.data().chunks(k))
                    {
                        let total: S = gs.iter().copied().sum();
                        for ((s, &d), &y) in ss.iter_mut().zip(gs).zip(ys) {
                            *s += d - y.exp() * total;
                        }
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`, zero if `v` did not participate.
    pub fn grad(&self, v: Var) -> Tensor<S> {
        let t = self.value(v);
        let mut data = self
            .grads
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![S::zero(); t.len()]);
        if let Some(rows) = self.sparse_rows.get(&v.0) {
            let cols = t.last_dim();
            for (&r, row) in rows {
                data[r * cols..(r + 1) * cols]
                    .iter_mut()
                    .zip(row)
                    .for_each(|(s, &d)| *s += d);
            }
        }
        Tensor::new(t.shape().to_vec(), data).expect("gradient matches value shape")
    }

    /// Gradient with respect to a parameter; zero if it never entered the record.
    pub fn param_grad(&self, id: ParamId) -> Tensor<S> {
        match self.param_nodes.get(&id) {
            Some(&v) => self.grad(v),
            None => Tensor::zeros(self.params.get(id).shape().to_vec()),
        }
    }

    /// Adds the parameter gradients of the last backward pass into `into`.
    pub fn accumulate_param_grads(
        &self,
        into: &mut Gradients<S>,
        ids: impl IntoIterator<Item = ParamId>,
    ) {
        for id in ids {
            let Some(&v) = self.param_nodes.get(&id) else {
                continue;
            };
            let dst = into.get_mut(id);
            if let Some(Some(dense)) = self.grads.get(v.0) {
                dst.data_mut()
                    .iter_mut()
                    .zip(dense)
                    .for_each(|(s, &d)| *s += d);
            }
            if let Some(rows) = self.sparse_rows.get(&v.0) {
                let cols = dst.last_dim();
                for (&r, row) in rows {
                    dst.data_mut()[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(s, &d)| *s += d);
                }
            }
        }
    }
}
