use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use super::graph::{Graph, NodeId, Op, L2_NORM_EPS};
use super::tensor::{gemm, Scalar, Tensor};
use super::GraphError;

/// Source of named tensors for `Input` and `Param` leaves.
pub trait Bindings<T> {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>>;
}

impl<T> Bindings<T> for HashMap<String, Tensor<T>> {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>> {
        self.get(name)
    }
}

impl<T> Bindings<T> for BTreeMap<String, Tensor<T>> {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>> {
        self.get(name)
    }
}

/// Looks names up in `first`, then in `second`.
pub struct Chain<'a, T>(pub &'a dyn Bindings<T>, pub &'a dyn Bindings<T>);

impl<T> Bindings<T> for Chain<'_, T> {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>> {
        self.0.lookup(name).or_else(|| self.1.lookup(name))
    }
}

/// Parameter gradients keyed by parameter name.
#[derive(Clone, Debug, Default)]
pub struct Gradients<T> {
    pub by_name: BTreeMap<String, Tensor<T>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.by_name.get(name)
    }
}

/// One evaluation of a [`Graph`]: holds every intermediate for the reverse pass.
pub struct Session<'g, 'a, T: Scalar> {
    graph: &'g Graph,
    values: Vec<Option<Cow<'a, Tensor<T>>>>,
    evaluated: bool,
}

impl Graph {
    /// Evaluate every node with the given bindings.
    pub fn evaluate<'g, 'a, T: Scalar>(
        &'g self,
        bindings: &'a dyn Bindings<T>,
    ) -> Result<Session<'g, 'a, T>, GraphError> {
        let mut s = Session::new(self);
        s.evaluate(bindings)?;
        Ok(s)
    }
}

impl<'g, 'a, T: Scalar> Session<'g, 'a, T> {
    pub fn new(graph: &'g Graph) -> Self {
        Self {
            graph,
            values: Vec::new(),
            evaluated: false,
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn evaluate(&mut self, bindings: &'a dyn Bindings<T>) -> Result<(), GraphError> {
        self.evaluated = false;
        self.values.clear();
        self.values.reserve(self.graph.nodes.len());
        for (i, node) in self.graph.nodes.iter().enumerate() {
            let id = NodeId(i);
            let value: Cow<'a, Tensor<T>> = match &node.op {
                Op::Input(name) | Op::Param(name) => {
                    let t = bindings.lookup(name).ok_or_else(|| GraphError::Unbound(name.clone()))?;
                    if t.shape() != node.shape.as_slice() {
                        return Err(GraphError::ShapeMismatch {
                            node: self.graph.node_ref(id),
                            detail: format!("bound {:?}, declared {:?}", t.shape(), node.shape),
                        });
                    }
                    Cow::Borrowed(t)
                }
                Op::Constant(c) => Cow::Owned(c.cast()),
                op => {
                    let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|j| self.value_ref(*j)).collect();
                    Cow::Owned(forward_op(op, &ins, &node.shape))
                }
            };
            if !value.all_finite() {
                return Err(GraphError::NonFinite(self.graph.node_ref(id)));
            }
            self.values.push(Some(value));
        }
        self.evaluated = true;
        Ok(())
    }

    fn value_ref(&self, id: NodeId) -> &Tensor<T> {
        self.values[id.0].as_deref().expect("value computed before use")
    }

    pub fn value(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.values.get(id.0).and_then(|v| v.as_deref())
    }

    /// Value of a named graph output.
    pub fn output(&self, name: &str) -> Option<&Tensor<T>> {
        self.graph.output(name).and_then(|id| self.value(id))
    }

    /// Scalar value of a `[1]`-shaped node.
    pub fn scalar(&self, id: NodeId) -> Option<T> {
        self.value(id).filter(|t| t.len() == 1).map(|t| t.data()[0])
    }

    /// Reverse pass from `output`, seeded with `seed` (shaped like the output).
    pub fn backward(&self, output: NodeId, seed: Tensor<T>) -> Result<Gradients<T>, GraphError> {
        if !self.evaluated {
            return Err(GraphError::CalledBeforeForward);
        }
        let g = self.graph;
        if seed.shape() != g.shape(output) {
            return Err(GraphError::ShapeMismatch {
                node: g.node_ref(output),
                detail: format!("seed {:?} vs output {:?}", seed.shape(), g.shape(output)),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);
        let mut result = Gradients {
            by_name: BTreeMap::new(),
        };
        for i in (0..=output.0).rev() {
            let node = &g.nodes[i];
            let Some(dy) = grads[i].take() else { continue };
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Param(name) => {
                    result.by_name.insert(name.clone(), dy);
                }
                Op::Input(_) | Op::Constant(_) => {}
                op => {
                    let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|j| self.value_ref(*j)).collect();
                    let y = self.value_ref(NodeId(i));
                    let needs: Vec<bool> = node.inputs.iter().map(|j| g.nodes[j.0].requires_grad).collect();
                    let dins = backward_op(op, &ins, y, &dy, &needs);
                    for (j, d) in node.inputs.iter().zip(dins) {
                        if let Some(d) = d {
                            match &mut grads[j.0] {
                                Some(acc) => acc.add_assign(&d),
                                slot @ None => *slot = Some(d),
                            }
                        }
                    }
                }
            }
        }
        Ok(result)
    }

    /// Reverse pass from a scalar output with seed 1.
    pub fn backward_scalar(&self, output: NodeId) -> Result<Gradients<T>, GraphError> {
        if self.graph.shape(output) != [1] {
            return Err(GraphError::NonScalarOutput(self.graph.node_ref(output)));
        }
        self.backward(output, Tensor::scalar(T::one()))
    }
}

fn map<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect()).expect("same shape")
}

fn zip<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("same shape")
}

fn dims2<T: Scalar>(t: &Tensor<T>) -> (usize, usize) {
    (t.rows(), t.cols())
}

/// Gathers `k` shifted copies of each time-major row: `(L·B) × (k·c_in)`.
fn im2col<T: Scalar>(x: &Tensor<T>, batch: usize, k: usize) -> Vec<T> {
    let (rows, c_in) = dims2(x);
    let len = rows / batch;
    let half = k / 2;
    let mut col = vec![T::zero(); rows * k * c_in];
    let xd = x.data();
    for t in 0..len {
        for o in 0..k {
            let src_t = t as isize + o as isize - half as isize;
            if src_t < 0 || src_t >= len as isize {
                continue;
            }
            for b in 0..batch {
                let dst_row = t * batch + b;
                let src_row = src_t as usize * batch + b;
                let dst = &mut col[dst_row * k * c_in + o * c_in..dst_row * k * c_in + (o + 1) * c_in];
                dst.copy_from_slice(&xd[src_row * c_in..(src_row + 1) * c_in]);
            }
        }
    }
    col
}

pub(crate) fn forward_op<T: Scalar>(op: &Op, ins: &[&Tensor<T>], shape: &[usize]) -> Tensor<T> {
    match op {
        Op::Input(_) | Op::Param(_) | Op::Constant(_) => unreachable!("leaves are bound, not computed"),
        Op::MatMul {
            trans_a,
            trans_b,
            alpha,
        } => {
            let (a, b) = (ins[0], ins[1]);
            let mut out = Tensor::zeros(shape.to_vec());
            gemm(
                T::lit(*alpha),
                a.data(),
                dims2(a),
                *trans_a,
                b.data(),
                dims2(b),
                *trans_b,
                T::zero(),
                out.data_mut(),
            );
            out
        }
        Op::Add => {
            let (a, b) = (ins[0], ins[1]);
            if a.shape() == b.shape() {
                zip(a, b, |x, y| x + y)
            } else {
                let c = a.cols();
                let mut out = a.clone();
                for row in out.data_mut().chunks_mut(c) {
                    for (v, &bias) in row.iter_mut().zip(b.data()) {
                        *v += bias;
                    }
                }
                out
            }
        }
        Op::Mul => zip(ins[0], ins[1], |x, y| x * y),
        Op::Concat { axis } => {
            let mut data = Vec::with_capacity(shape.iter().product());
            if *axis == 0 {
                for p in ins {
                    data.extend_from_slice(p.data());
                }
            } else {
                for r in 0..shape[0] {
                    for p in ins {
                        data.extend_from_slice(p.row(r));
                    }
                }
            }
            Tensor::new(shape.to_vec(), data).expect("concat shape")
        }
        Op::Slice { axis, start, len } => {
            let x = ins[0];
            let c = x.cols();
            let data = if *axis == 0 {
                x.data()[start * c..(start + len) * c].to_vec()
            } else {
                let mut d = Vec::with_capacity(shape[0] * len);
                for r in 0..x.rows() {
                    d.extend_from_slice(&x.row(r)[*start..start + len]);
                }
                d
            };
            Tensor::new(shape.to_vec(), data).expect("slice shape")
        }
        Op::Reshape(s) => Tensor::new(s.clone(), ins[0].data().to_vec()).expect("reshape"),
        Op::Tanh => map(ins[0], Scalar::tanh_act),
        Op::Sigmoid => map(ins[0], Scalar::sigmoid),
        Op::Relu => map(ins[0], |v| if v > T::zero() { v } else { T::zero() }),
        Op::SoftmaxRows => {
            let mut out = ins[0].clone();
            let c = out.cols();
            for row in out.data_mut().chunks_mut(c) {
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut s = T::zero();
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    s += *v;
                }
                for v in row.iter_mut() {
                    *v = *v / s;
                }
            }
            out
        }
        Op::Log => map(ins[0], |v| v.ln()),
        Op::Exp => map(ins[0], |v| v.exp()),
        Op::Power(p) => {
            let p = T::lit(*p);
            map(ins[0], |v| v.powf(p))
        }
        Op::Mean => {
            let x = ins[0];
            let s: T = x.data().iter().copied().sum();
            Tensor::scalar(s / T::from_usize(x.len()).expect("count"))
        }
        Op::Sum(axis) => {
            let x = ins[0];
            match axis {
                None => Tensor::scalar(x.data().iter().copied().sum()),
                Some(0) => {
                    let c = x.cols();
                    let mut out = Tensor::zeros(vec![1, c]);
                    for row in x.data().chunks(c) {
                        for (o, &v) in out.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    out
                }
                Some(_) => {
                    let c = x.cols();
                    let data = x.data().chunks(c).map(|r| r.iter().copied().sum()).collect();
                    Tensor::new(shape.to_vec(), data).expect("row sums")
                }
            }
        }
        Op::Conv1dSame { batch } => {
            let (x, w) = (ins[0], ins[1]);
            let c_in = x.cols();
            let k = w.rows() / c_in;
            let col = im2col(x, *batch, k);
            let mut out = Tensor::zeros(shape.to_vec());
            gemm(
                T::one(),
                &col,
                (x.rows(), k * c_in),
                false,
                w.data(),
                dims2(w),
                false,
                T::zero(),
                out.data_mut(),
            );
            out
        }
        Op::L2NormalizeRows => {
            let mut out = ins[0].clone();
            let c = out.cols();
            let eps = T::lit(L2_NORM_EPS);
            for row in out.data_mut().chunks_mut(c) {
                let n = row.iter().map(|&v| v * v).sum::<T>().sqrt();
                if n >= eps {
                    for v in row.iter_mut() {
                        *v = *v / n;
                    }
                }
            }
            out
        }
        Op::MaskedFill(fill) => {
            let f = T::lit(*fill);
            zip(ins[0], ins[1], |x, m| if m != T::zero() { x } else { f })
        }
    }
}

pub(crate) fn backward_op<T: Scalar>(
    op: &Op,
    ins: &[&Tensor<T>],
    y: &Tensor<T>,
    dy: &Tensor<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    match op {
        Op::Input(_) | Op::Param(_) | Op::Constant(_) => vec![],
        Op::MatMul {
            trans_a,
            trans_b,
            alpha,
        } => {
            let (a, b) = (ins[0], ins[1]);
            let alpha = T::lit(*alpha);
            let da = needs[0].then(|| {
                let mut d = Tensor::zeros(a.shape().to_vec());
                if *trans_a {
                    // a is k×m; dA = alpha · op(B) · dYᵀ
                    gemm(
                        alpha,
                        b.data(),
                        dims2(b),
                        *trans_b,
                        dy.data(),
                        dims2(dy),
                        true,
                        T::zero(),
                        d.data_mut(),
                    );
                } else {
                    gemm(
                        alpha,
                        dy.data(),
                        dims2(dy),
                        false,
                        b.data(),
                        dims2(b),
                        !*trans_b,
                        T::zero(),
                        d.data_mut(),
                    );
                }
                d
            });
            let db = needs[1].then(|| {
                let mut d = Tensor::zeros(b.shape().to_vec());
                if *trans_b {
                    // b is n×k; dB = alpha · dYᵀ · op(A)
                    gemm(
                        alpha,
                        dy.data(),
                        dims2(dy),
                        true,
                        a.data(),
                        dims2(a),
                        *trans_a,
                        T::zero(),
                        d.data_mut(),
                    );
                } else {
                    gemm(
                        alpha,
                        a.data(),
                        dims2(a),
                        !*trans_a,
                        dy.data(),
                        dims2(dy),
                        false,
                        T::zero(),
                        d.data_mut(),
                    );
                }
                d
            });
            vec![da, db]
        }
        Op::Add => {
            let b = ins[1];
            let db = needs[1].then(|| {
                if b.shape() == dy.shape() {
                    dy.clone()
                } else {
                    let c = dy.cols();
                    let mut d = Tensor::zeros(b.shape().to_vec());
                    for row in dy.data().chunks(c) {
                        for (o, &v) in d.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    d
                }
            });
            vec![needs[0].then(|| dy.clone()), db]
        }
        Op::Mul => vec![
            needs[0].then(|| zip(dy, ins[1], |g, b| g * b)),
            needs[1].then(|| zip(dy, ins[0], |g, a| g * a)),
        ],
        Op::Concat { axis } => {
            let mut out = Vec::with_capacity(ins.len());
            let mut offset = 0;
            for (p, &need) in ins.iter().zip(needs) {
                let extent = if *axis == 0 { p.rows() } else { p.cols() };
                if need {
                    let data = if *axis == 0 {
                        let c = dy.cols();
                        dy.data()[offset * c..(offset + extent) * c].to_vec()
                    } else {
                        let mut d = Vec::with_capacity(p.len());
                        for r in 0..dy.rows() {
                            d.extend_from_slice(&dy.row(r)[offset..offset + extent]);
                        }
                        d
                    };
                    out.push(Some(Tensor::new(p.shape().to_vec(), data).expect("concat grad")));
                } else {
                    out.push(None);
                }
                offset += extent;
            }
            out
        }
        Op::Slice { axis, start, .. } => {
            let x = ins[0];
            let mut d = Tensor::zeros(x.shape().to_vec());
            let c = x.cols();
            if *axis == 0 {
                d.data_mut()[start * c..start * c + dy.len()].copy_from_slice(dy.data());
            } else {
                let w = dy.cols();
                for r in 0..x.rows() {
                    d.data_mut()[r * c + start..r * c + start + w].copy_from_slice(dy.row(r));
                }
            }
            vec![Some(d)]
        }
        Op::Reshape(_) => vec![Some(
            Tensor::new(ins[0].shape().to_vec(), dy.data().to_vec()).expect("reshape grad"),
        )],
        Op::Tanh => vec![Some(zip(dy, y, |g, t| g * (T::one() - t * t)))],
        Op::Sigmoid => vec![Some(zip(dy, y, |g, s| g * s * (T::one() - s)))],
        Op::Relu => vec![Some(zip(dy, ins[0], |g, x| if x > T::zero() { g } else { T::zero() }))],
        Op::SoftmaxRows => {
            let c = y.cols();
            let mut d = dy.clone();
            for (drow, yrow) in d.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                let dot: T = drow.iter().zip(yrow).map(|(&g, &p)| g * p).sum();
                for (g, &p) in drow.iter_mut().zip(yrow) {
                    *g = p * (*g - dot);
                }
            }
            vec![Some(d)]
        }
        Op::Log => vec![Some(zip(dy, ins[0], |g, x| g / x))],
        Op::Exp => vec![Some(zip(dy, y, |g, e| g * e))],
        Op::Power(p) => {
            if *p == 0.0 {
                return vec![Some(Tensor::zeros(ins[0].shape().to_vec()))];
            }
            let pt = T::lit(*p);
            let pm1 = T::lit(p - 1.0);
            vec![Some(zip(dy, ins[0], |g, x| g * pt * x.powf(pm1)))]
        }
        Op::Mean => {
            let x = ins[0];
            let g = dy.data()[0] / T::from_usize(x.len()).expect("count");
            vec![Some(Tensor::filled(x.shape().to_vec(), g))]
        }
        Op::Sum(axis) => {
            let x = ins[0];
            let d = match axis {
                None => Tensor::filled(x.shape().to_vec(), dy.data()[0]),
                Some(0) => {
                    let mut d = Tensor::zeros(x.shape().to_vec());
                    let c = x.cols();
                    for row in d.data_mut().chunks_mut(c) {
                        row.copy_from_slice(dy.data());
                    }
                    d
                }
                Some(_) => {
                    let mut d = Tensor::zeros(x.shape().to_vec());
                    let c = x.cols();
                    for (row, &g) in d.data_mut().chunks_mut(c).zip(dy.data()) {
                        row.fill(g);
                    }
                    d
                }
            };
            vec![Some(d)]
        }
        Op::Conv1dSame { batch } => {
            let (x, w) = (ins[0], ins[1]);
            let (rows, c_in) = dims2(x);
            let k = w.rows() / c_in;
            let dw = needs[1].then(|| {
                let col = im2col(x, *batch, k);
                let mut d = Tensor::zeros(w.shape().to_vec());
                gemm(
                    T::one(),
                    &col,
                    (rows, k * c_in),
                    true,
                    dy.data(),
                    dims2(dy),
                    false,
                    T::zero(),
                    d.data_mut(),
                );
                d
            });
            let dx = needs[0].then(|| {
                let mut dcol = vec![T::zero(); rows * k * c_in];
                gemm(
                    T::one(),
                    dy.data(),
                    dims2(dy),
                    false,
                    w.data(),
                    dims2(w),
                    true,
                    T::zero(),
                    &mut dcol,
                );
                let len = rows / batch;
                let half = k / 2;
                let mut d = Tensor::zeros(x.shape().to_vec());
                let dd = d.data_mut();
                for t in 0..len {
                    for o in 0..k {
                        let src_t = t as isize + o as isize - half as isize;
                        if src_t < 0 || src_t >= len as isize {
                            continue;
                        }
                        for b in 0..*batch {
                            let row = t * batch + b;
                            let src_row = src_t as usize * batch + b;
                            let from = &dcol[row * k * c_in + o * c_in..row * k * c_in + (o + 1) * c_in];
                            for (acc, &v) in dd[src_row * c_in..(src_row + 1) * c_in].iter_mut().zip(from) {
                                *acc += v;
                            }
                        }
                    }
                }
                d
            });
            vec![dx, dw]
        }
        Op::L2NormalizeRows => {
            let x = ins[0];
            let c = x.cols();
            let eps = T::lit(L2_NORM_EPS);
            let mut d = dy.clone();
            for ((drow, xrow), yrow) in d
                .data_mut()
                .chunks_mut(c)
                .zip(x.data().chunks(c))
                .zip(y.data().chunks(c))
            {
                let n = xrow.iter().map(|&v| v * v).sum::<T>().sqrt();
                if n < eps {
                    continue;
                }
                let dot: T = drow.iter().zip(yrow).map(|(&g, &v)| g * v).sum();
                for (g, &v) in drow.iter_mut().zip(yrow) {
                    *g = (*g - v * dot) / n;
                }
            }
            vec![Some(d)]
        }
        Op::MaskedFill(_) => vec![
            Some(zip(dy, ins[1], |g, m| if m != T::zero() { g } else { T::zero() })),
            None,
        ],
    }
}
