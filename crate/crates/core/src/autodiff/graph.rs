use std::collections::HashMap;
use std::fmt;

use super::tensor::Tensor;
use super::GraphError;

/// Index of a node inside its [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The closed set of differentiable operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    MatMul,
    Add,
    Mul,
    Concat,
    Slice,
    Reshape,
    Tanh,
    Sigmoid,
    Relu,
    SoftmaxRows,
    Log,
    Exp,
    Power,
    Mean,
    Sum,
    Conv1dSame,
    L2NormalizeRows,
    MaskedFill,
}

impl OpKind {
    pub const ALL: [OpKind; 18] = [
        OpKind::MatMul,
        OpKind::Add,
        OpKind::Mul,
        OpKind::Concat,
        OpKind::Slice,
        OpKind::Reshape,
        OpKind::Tanh,
        OpKind::Sigmoid,
        OpKind::Relu,
        OpKind::SoftmaxRows,
        OpKind::Log,
        OpKind::Exp,
        OpKind::Power,
        OpKind::Mean,
        OpKind::Sum,
        OpKind::Conv1dSame,
        OpKind::L2NormalizeRows,
        OpKind::MaskedFill,
    ];
}

/// Rows whose Euclidean norm falls below this pass through `l2_normalize_rows` unscaled.
pub const L2_NORM_EPS: f64 = 1e-12;

/// A node's operation together with its static parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Bound per evaluation, never differentiated.
    Input(String),
    /// Bound per evaluation, gradients reported by name.
    Param(String),
    Constant(Tensor<f64>),
    MatMul {
        trans_a: bool,
        trans_b: bool,
        alpha: f64,
    },
    /// Same-shape sum, or a rank-2 left operand plus a bias of its column width.
    Add,
    Mul,
    Concat {
        axis: usize,
    },
    Slice {
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape(Vec<usize>),
    Tanh,
    Sigmoid,
    Relu,
    SoftmaxRows,
    Log,
    Exp,
    Power(f64),
    Mean,
    /// `None` sums everything to shape `[1]`; `Some(0)` gives `[1, n]`, `Some(1)` gives `[m, 1]`.
    Sum(Option<usize>),
    /// Input rows are time-major (`row = t * batch + b`); weight is `(k * c_in) × c_out`.
    Conv1dSame {
        batch: usize,
    },
    L2NormalizeRows,
    /// Keeps entries where the mask is non-zero and writes the fill value elsewhere.
    MaskedFill(f64),
}

impl Op {
    pub fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Input(_) | Op::Param(_) | Op::Constant(_) => return None,
            Op::MatMul { .. } => OpKind::MatMul,
            Op::Add => OpKind::Add,
            Op::Mul => OpKind::Mul,
            Op::Concat { .. } => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Tanh => OpKind::Tanh,
            Op::Sigmoid => OpKind::Sigmoid,
            Op::Relu => OpKind::Relu,
            Op::SoftmaxRows => OpKind::SoftmaxRows,
            Op::Log => OpKind::Log,
            Op::Exp => OpKind::Exp,
            Op::Power(_) => OpKind::Power,
            Op::Mean => OpKind::Mean,
            Op::Sum(_) => OpKind::Sum,
            Op::Conv1dSame { .. } => OpKind::Conv1dSame,
            Op::L2NormalizeRows => OpKind::L2NormalizeRows,
            Op::MaskedFill(_) => OpKind::MaskedFill,
        })
    }

    fn describe(&self) -> String {
        match self {
            Op::Input(n) => format!("input '{n}'"),
            Op::Param(n) => format!("param '{n}'"),
            Op::Constant(_) => "constant".into(),
            other => format!("{:?}", other.kind().expect("non-leaf")),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub shape: Vec<usize>,
    pub requires_grad: bool,
    pub label: Option<String>,
}

/// A static computation graph, built once and evaluated many times.
///
/// Nodes are appended in topological order: every node's inputs precede it.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    leaves: HashMap<String, NodeId>,
    outputs: Vec<(String, NodeId)>,
}

/// Human-readable node reference used in error messages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeRef {
    pub id: usize,
    pub op: String,
    pub label: Option<String>,
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node #{} ({})", self.id, self.op)?;
        if let Some(l) = &self.label {
            write!(f, " '{l}'")?;
        }
        Ok(())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn inputs_of(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    /// Every distinct operation kind appearing in the graph.
    pub fn op_kinds(&self) -> Vec<OpKind> {
        let mut kinds: Vec<OpKind> = Vec::new();
        for n in &self.nodes {
            if let Some(k) = n.op.kind() {
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
        }
        kinds
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Param(name) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Declared shape of every parameter, in declaration order.
    pub fn param_shapes(&self) -> Vec<(&str, &[usize])> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Param(name) => Some((name.as_str(), n.shape.as_slice())),
                _ => None,
            })
            .collect()
    }

    /// Labeled nodes with their shapes, in graph order.
    pub fn labeled(&self) -> Vec<(&str, &[usize])> {
        self.nodes
            .iter()
            .filter_map(|n| n.label.as_deref().map(|l| (l, n.shape.as_slice())))
            .collect()
    }

    /// First node carrying `label`.
    pub fn labeled_id(&self, label: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.label.as_deref() == Some(label))
            .map(NodeId)
    }

    pub(crate) fn node_ref(&self, id: NodeId) -> NodeRef {
        let n = &self.nodes[id.0];
        NodeRef {
            id: id.0,
            op: n.op.describe(),
            label: n.label.clone(),
        }
    }

    /// Attach a label shown in error messages.
    pub fn label(&mut self, id: NodeId, label: impl Into<String>) -> NodeId {
        self.nodes[id.0].label = Some(label.into());
        id
    }

    /// Register a named output retrievable after evaluation.
    pub fn set_output(&mut self, name: impl Into<String>, id: NodeId) {
        let name = name.into();
        self.outputs.retain(|(n, _)| *n != name);
        self.outputs.push((name, id));
    }

    pub fn output(&self, name: &str) -> Option<NodeId> {
        self.outputs.iter().find(|(n, _)| n == name).map(|(_, id)| *id)
    }

    pub fn outputs(&self) -> &[(String, NodeId)] {
        &self.outputs
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>) -> NodeId {
        let requires_grad = match &op {
            Op::Param(_) => true,
            Op::Input(_) | Op::Constant(_) => false,
            Op::MaskedFill(_) => self.nodes[inputs[0].0].requires_grad,
            _ => inputs.iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            inputs,
            shape,
            requires_grad,
            label: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn mismatch(&self, op: &str, detail: String) -> GraphError {
        GraphError::ShapeMismatch {
            node: NodeRef {
                id: self.nodes.len(),
                op: op.to_string(),
                label: None,
            },
            detail,
        }
    }

    fn leaf(&mut self, op: Op, name: &str, shape: Vec<usize>) -> Result<NodeId, GraphError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(GraphError::InvalidShape(shape));
        }
        if let Some(&id) = self.leaves.get(name) {
            let existing = &self.nodes[id.0];
            if std::mem::discriminant(&existing.op) != std::mem::discriminant(&op) || existing.shape != shape {
                return Err(self.mismatch(
                    name,
                    format!("leaf '{name}' redeclared as {shape:?} (was {:?})", existing.shape),
                ));
            }
            return Ok(id);
        }
        let id = self.push(op, vec![], shape);
        self.leaves.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn input(&mut self, name: &str, shape: impl Into<Vec<usize>>) -> Result<NodeId, GraphError> {
        self.leaf(Op::Input(name.to_string()), name, shape.into())
    }

    /// Declares (or re-uses) a named trainable tensor.
    pub fn param(&mut self, name: &str, shape: impl Into<Vec<usize>>) -> Result<NodeId, GraphError> {
        self.leaf(Op::Param(name.to_string()), name, shape.into())
    }

    pub fn constant<T: super::Scalar>(&mut self, value: &Tensor<T>) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Constant(value.cast()), vec![], shape)
    }

    fn rank2(&self, id: NodeId, op: &str) -> Result<(usize, usize), GraphError> {
        let s = self.shape(id);
        if s.len() != 2 {
            return Err(self.mismatch(op, format!("expected rank-2 operand, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        self.matmul_ext(a, b, false, false, 1.0)
    }

    /// `alpha * op(a) * op(b)` with optional transposes.
    pub fn matmul_ext(
        &mut self,
        a: NodeId,
        b: NodeId,
        trans_a: bool,
        trans_b: bool,
        alpha: f64,
    ) -> Result<NodeId, GraphError> {
        let (ar, ac) = self.rank2(a, "MatMul")?;
        let (br, bc) = self.rank2(b, "MatMul")?;
        let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(self.mismatch(
                "MatMul",
                format!("inner dimensions differ: {:?} x {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(self.push(
            Op::MatMul {
                trans_a,
                trans_b,
                alpha,
            },
            vec![a, b],
            vec![m, n],
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let bias = sa.len() == 2 && (sb == [sa[1]] || sb == [1, sa[1]]);
        if sa != sb && !bias {
            return Err(self.mismatch("Add", format!("{sa:?} + {sb:?}")));
        }
        Ok(self.push(Op::Add, vec![a, b], sa))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GraphError> {
        let sa = self.shape(a).to_vec();
        if sa != self.shape(b) {
            return Err(self.mismatch("Mul", format!("{sa:?} * {:?}", self.shape(b))));
        }
        Ok(self.push(Op::Mul, vec![a, b], sa))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, GraphError> {
        if parts.is_empty() || axis > 1 {
            return Err(self.mismatch("Concat", "needs ≥1 part and axis 0 or 1".into()));
        }
        let (r0, c0) = self.rank2(parts[0], "Concat")?;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.rank2(p, "Concat")?;
            if (axis == 0 && c != c0) || (axis == 1 && r != r0) {
                return Err(self.mismatch(
                    "Concat",
                    format!("part {:?} incompatible along axis {axis}", self.shape(p)),
                ));
            }
            total += if axis == 0 { r } else { c };
        }
        let shape = if axis == 0 { vec![total, c0] } else { vec![r0, total] };
        Ok(self.push(Op::Concat { axis }, parts.to_vec(), shape))
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId, GraphError> {
        let (r, c) = self.rank2(x, "Slice")?;
        let extent = match axis {
            0 => r,
            1 => c,
            _ => return Err(self.mismatch("Slice", format!("axis {axis}"))),
        };
        if len == 0 || start + len > extent {
            return Err(self.mismatch(
                "Slice",
                format!("range {start}..{} outside extent {extent}", start + len),
            ));
        }
        let shape = if axis == 0 { vec![len, c] } else { vec![r, len] };
        Ok(self.push(Op::Slice { axis, start, len }, vec![x], shape))
    }

    pub fn reshape(&mut self, x: NodeId, shape: impl Into<Vec<usize>>) -> Result<NodeId, GraphError> {
        let shape = shape.into();
        let n: usize = self.shape(x).iter().product();
        if shape.is_empty() || shape.contains(&0) || shape.iter().product::<usize>() != n {
            return Err(self.mismatch("Reshape", format!("{:?} -> {shape:?}", self.shape(x))));
        }
        Ok(self.push(Op::Reshape(shape.clone()), vec![x], shape))
    }

    fn unary(&mut self, op: Op, x: NodeId) -> NodeId {
        let shape = self.shape(x).to_vec();
        self.push(op, vec![x], shape)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Sigmoid, x)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Relu, x)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Log, x)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.unary(Op::Exp, x)
    }

    pub fn power(&mut self, x: NodeId, exponent: f64) -> NodeId {
        self.unary(Op::Power(exponent), x)
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.rank2(x, "SoftmaxRows")?;
        Ok(self.unary(Op::SoftmaxRows, x))
    }

    pub fn l2_normalize_rows(&mut self, x: NodeId) -> Result<NodeId, GraphError> {
        self.rank2(x, "L2NormalizeRows")?;
        Ok(self.unary(Op::L2NormalizeRows, x))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean, vec![x], vec![1])
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(None), vec![x], vec![1])
    }

    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, GraphError> {
        let (r, c) = self.rank2(x, "Sum")?;
        let shape = match axis {
            0 => vec![1, c],
            1 => vec![r, 1],
            _ => return Err(self.mismatch("Sum", format!("axis {axis}"))),
        };
        Ok(self.push(Op::Sum(Some(axis)), vec![x], shape))
    }

    /// Same-padded 1-D convolution over time-major rows.
    pub fn conv1d_same(&mut self, x: NodeId, w: NodeId, batch: usize) -> Result<NodeId, GraphError> {
        let (rows, c_in) = self.rank2(x, "Conv1dSame")?;
        let (wr, c_out) = self.rank2(w, "Conv1dSame")?;
        if batch == 0 || rows % batch != 0 || wr % c_in != 0 || (wr / c_in) % 2 == 0 {
            return Err(self.mismatch(
                "Conv1dSame",
                format!(
                    "input {:?}, weight {:?}, batch {batch}: need rows divisible by batch and an odd kernel",
                    self.shape(x),
                    self.shape(w)
                ),
            ));
        }
        Ok(self.push(Op::Conv1dSame { batch }, vec![x, w], vec![rows, c_out]))
    }

    pub fn masked_fill(&mut self, x: NodeId, mask: NodeId, value: f64) -> Result<NodeId, GraphError> {
        if self.shape(x) != self.shape(mask) {
            return Err(self.mismatch(
                "MaskedFill",
                format!("mask {:?} vs input {:?}", self.shape(mask), self.shape(x)),
            ));
        }
        if self.nodes[mask.0].requires_grad {
            return Err(self.mismatch("MaskedFill", "mask must not depend on parameters".into()));
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::MaskedFill(value), vec![x, mask], shape))
    }

    /// `x · W + b` with a rank-1 bias.
    pub fn linear(&mut self, x: NodeId, prefix: &str, in_dim: usize, out_dim: usize) -> Result<NodeId, GraphError> {
        let w = self.param(&format!("{prefix}.w"), [in_dim, out_dim])?;
        let b = self.param(&format!("{prefix}.b"), [out_dim])?;
        let y = self.matmul(x, w)?;
        self.add(y, b)
    }

    /// Constant tensor filled with a single value.
    pub fn fill(&mut self, shape: impl Into<Vec<usize>>, value: f64) -> NodeId {
        let t = Tensor::<f64>::filled(shape, value);
        self.constant(&t)
    }

    /// Element-wise scaling by a constant.
    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, GraphError> {
        let c = self.fill(self.shape(x).to_vec(), factor);
        self.mul(x, c)
    }
}
