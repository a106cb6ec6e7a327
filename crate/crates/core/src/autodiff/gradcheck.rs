//! Central finite differences, the oracle for every analytic gradient.

use std::collections::HashMap;

use rand::Rng;

use super::exec::{Bindings, Chain};
use super::graph::{Graph, NodeId, OpKind};
use super::tensor::Tensor;
use super::GraphError;

/// Denominator floor of [`relative_error`]; below it the comparison is effectively absolute.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Relative step `h = step · max(1, |θ|)`.
pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Largest [`relative_error`] between two equally shaped gradient tensors.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Smallest `|x|` over every ReLU input of one forward pass, or infinity
/// without ReLUs. A central difference straddling a kink averages two
/// slopes, so points with a margin near the step are not valid probes.
pub fn relu_margin(graph: &Graph, bindings: &dyn Bindings<f64>) -> Result<f64, GraphError> {
    let session = graph.evaluate(bindings)?;
    let mut margin = f64::INFINITY;
    for i in 0..graph.len() {
        let id = NodeId(i);
        if graph.op(id).kind() == Some(OpKind::Relu) {
            let x = session.value(graph.inputs_of(id)[0]).expect("evaluated");
            margin = x.data().iter().fold(margin, |m, v| m.min(v.abs()));
        }
    }
    Ok(margin)
}

/// `(f(θ+h) − f(θ−h)) / 2h` for the listed elements of parameter `name`
/// (all elements when `indices` is `None`), evaluated in 64-bit.
///
/// Elements not listed are left at zero in the returned tensor.
pub fn finite_difference_gradient(
    graph: &Graph,
    output: NodeId,
    bindings: &dyn Bindings<f64>,
    name: &str,
    step: f64,
    indices: Option<&[usize]>,
) -> Result<Tensor<f64>, GraphError> {
    if graph.shape(output) != [1] {
        return Err(GraphError::NonScalarOutput(graph.node_ref(output)));
    }
    let base = bindings
        .lookup(name)
        .ok_or_else(|| GraphError::Unbound(name.to_string()))?
        .clone();
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..base.len()).collect();
            &all
        }
    };
    let mut grad = Tensor::<f64>::zeros(base.shape().to_vec());
    let mut overlay: HashMap<String, Tensor<f64>> = HashMap::new();
    overlay.insert(name.to_string(), base.clone());
    for &i in idx {
        let theta = base.data()[i];
        let h = step * theta.abs().max(1.0);
        let eval = |value: f64, overlay: &mut HashMap<String, Tensor<f64>>| -> Result<f64, GraphError> {
            overlay.get_mut(name).expect("overlay").data_mut()[i] = value;
            let chained = Chain(&*overlay, bindings);
            let s = graph.evaluate(&chained)?;
            Ok(s.scalar(output).expect("scalar output"))
        };
        let plus = eval(theta + h, &mut overlay)?;
        let minus = eval(theta - h, &mut overlay)?;
        overlay.get_mut(name).expect("overlay").data_mut()[i] = theta;
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// A randomly drawn single-op graph reduced to a scalar, for gradient checks.
pub struct OpInstance {
    pub kind: OpKind,
    pub graph: Graph,
    pub output: NodeId,
    pub bindings: HashMap<String, Tensor<f64>>,
    pub params: Vec<String>,
}

#[derive(Default)]
struct InstanceBuilder {
    graph: Graph,
    bindings: HashMap<String, Tensor<f64>>,
    params: Vec<String>,
}

impl InstanceBuilder {
    fn param(&mut self, name: &str, t: Tensor<f64>) -> NodeId {
        let id = self.graph.param(name, t.shape().to_vec()).expect("param");
        self.bindings.insert(name.to_string(), t);
        self.params.push(name.to_string());
        id
    }
}

fn uniform<R: Rng>(rng: &mut R, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape, data).expect("shape")
}

fn dim<R: Rng>(rng: &mut R) -> usize {
    rng.gen_range(1..=5)
}

/// Draws one random instance of `kind`: random shapes and values, wrapped as
/// `sum(op(θ…) ⊙ R)` with a fixed random `R` so every output element matters.
///
/// Values stay inside each op's smooth domain: away from ReLU kinks, positive
/// bases for `log`/`power`, rows well above the normalization floor.
pub fn random_op_instance<R: Rng>(kind: OpKind, rng: &mut R) -> OpInstance {
    use OpKind as K;
    let mut b = InstanceBuilder::default();
    let out = match kind {
        K::MatMul => {
            let (m, k, n) = (dim(rng), dim(rng), dim(rng));
            let (ta, tb) = (rng.gen::<bool>(), rng.gen::<bool>());
            let a_shape = if ta { vec![k, m] } else { vec![m, k] };
            let b_shape = if tb { vec![n, k] } else { vec![k, n] };
            let alpha = rng.gen_range(0.2..2.0);
            let lhs = b.param("a", uniform(rng, a_shape, -1.0, 1.0));
            let rhs = b.param("b", uniform(rng, b_shape, -1.0, 1.0));
            b.graph.matmul_ext(lhs, rhs, ta, tb, alpha).expect("matmul")
        }
        K::Add => {
            let (m, n) = (dim(rng), dim(rng));
            let lhs = b.param("a", uniform(rng, vec![m, n], -1.0, 1.0));
            let rhs_shape = if rng.gen::<bool>() { vec![m, n] } else { vec![n] };
            let rhs = b.param("b", uniform(rng, rhs_shape, -1.0, 1.0));
            b.graph.add(lhs, rhs).expect("add")
        }
        K::Mul => {
            let (m, n) = (dim(rng), dim(rng));
            let lhs = b.param("a", uniform(rng, vec![m, n], -1.0, 1.0));
            let rhs = b.param("b", uniform(rng, vec![m, n], -1.0, 1.0));
            b.graph.mul(lhs, rhs).expect("mul")
        }
        K::Concat => {
            let axis = rng.gen_range(0..2usize);
            let fixed = dim(rng);
            let parts = rng.gen_range(2..=3usize);
            let mut ids = Vec::new();
            for i in 0..parts {
                let e = dim(rng);
                let shape = if axis == 0 { vec![e, fixed] } else { vec![fixed, e] };
                let t = uniform(rng, shape, -1.0, 1.0);
                ids.push(b.param(&format!("p{i}"), t));
            }
            b.graph.concat(&ids, axis).expect("concat")
        }
        K::Slice => {
            let (m, n) = (dim(rng) + 1, dim(rng) + 1);
            let axis = rng.gen_range(0..2usize);
            let extent = if axis == 0 { m } else { n };
            let start = rng.gen_range(0..extent);
            let len = rng.gen_range(1..=extent - start);
            let x = b.param("x", uniform(rng, vec![m, n], -1.0, 1.0));
            b.graph.slice(x, axis, start, len).expect("slice")
        }
        K::Reshape => {
            let (m, n) = (dim(rng), dim(rng));
            let x = b.param("x", uniform(rng, vec![m, n], -1.0, 1.0));
            let target = if rng.gen::<bool>() { vec![n, m] } else { vec![m * n] };
            b.graph.reshape(x, target).expect("reshape")
        }
        K::Tanh | K::Sigmoid | K::Exp => {
            let shape = vec![dim(rng), dim(rng)];
            let x = b.param("x", uniform(rng, shape, -2.0, 2.0));
            match kind {
                K::Tanh => b.graph.tanh(x),
                K::Sigmoid => b.graph.sigmoid(x),
                _ => b.graph.exp(x),
            }
        }
        K::Relu => {
            let shape = vec![dim(rng), dim(rng)];
            let mut t = uniform(rng, shape, -2.0, 2.0);
            for v in t.data_mut() {
                if v.abs() < 0.05 {
                    *v += 0.1f64.copysign(*v);
                }
            }
            let x = b.param("x", t);
            b.graph.relu(x)
        }
        K::SoftmaxRows => {
            let shape = vec![dim(rng), dim(rng)];
            let x = b.param("x", uniform(rng, shape, -3.0, 3.0));
            b.graph.softmax_rows(x).expect("softmax")
        }
        K::Log => {
            let shape = vec![dim(rng), dim(rng)];
            let x = b.param("x", uniform(rng, shape, 0.3, 3.0));
            b.graph.log(x)
        }
        K::Power => {
            let shape = vec![dim(rng), dim(rng)];
            let x = b.param("x", uniform(rng, shape, 0.3, 3.0));
            let p = rng.gen_range(-2.0..3.0);
            b.graph.power(x, p)
        }
        K::Mean => {
            let shape = vec![dim(rng), dim(rng)];
            let x = b.param("x", uniform(rng, shape, -1.0, 1.0));
            b.graph.mean(x)
        }
        K::Sum => {
            let shape = vec![dim(rng), dim(rng)];
            let x = b.param("x", uniform(rng, shape, -1.0, 1.0));
            match rng.gen_range(0..3usize) {
                0 => b.graph.sum(x),
                a => b.graph.sum_axis(x, a - 1).expect("sum axis"),
            }
        }
        K::Conv1dSame => {
            let len = rng.gen_range(1..=6usize);
            let batch = rng.gen_range(1..=3usize);
            let c_in = rng.gen_range(1..=4usize);
            let c_out = rng.gen_range(1..=4usize);
            let k = [1usize, 3, 5][rng.gen_range(0..3usize)];
            let x = b.param("x", uniform(rng, vec![len * batch, c_in], -1.0, 1.0));
            let w = b.param("w", uniform(rng, vec![k * c_in, c_out], -1.0, 1.0));
            b.graph.conv1d_same(x, w, batch).expect("conv")
        }
        K::L2NormalizeRows => {
            let shape = vec![dim(rng), dim(rng) + 1];
            let mut t = uniform(rng, shape, -1.0, 1.0);
            let c = t.cols();
            for row in t.data_mut().chunks_mut(c) {
                row[0] += 1.0f64.copysign(row[0]);
            }
            let x = b.param("x", t);
            b.graph.l2_normalize_rows(x).expect("l2")
        }
        K::MaskedFill => {
            let shape = vec![dim(rng), dim(rng)];
            let x = b.param("x", uniform(rng, shape.clone(), -1.0, 1.0));
            let n: usize = shape.iter().product();
            let mask_data = (0..n).map(|_| if rng.gen_bool(0.6) { 1.0 } else { 0.0 }).collect();
            let mask_t = Tensor::new(shape.clone(), mask_data).expect("mask");
            let mask = b.graph.input("mask", shape).expect("mask input");
            b.bindings.insert("mask".to_string(), mask_t);
            let fill = rng.gen_range(-5.0..5.0);
            b.graph.masked_fill(x, mask, fill).expect("masked fill")
        }
    };
    let shape = b.graph.shape(out).to_vec();
    let weights = uniform(rng, shape, -1.0, 1.0);
    let r = b.graph.constant(&weights);
    let weighted = b.graph.mul(out, r).expect("weighting");
    let output = b.graph.sum(weighted);
    OpInstance {
        kind,
        graph: b.graph,
        output,
        bindings: b.bindings,
        params: b.params,
    }
}

impl OpInstance {
    /// Max relative error between the analytic gradient and central
    /// differences over every parameter element.
    pub fn max_gradient_error(&self) -> Result<f64, GraphError> {
        let session = self.graph.evaluate(&self.bindings)?;
        let grads = session.backward_scalar(self.output)?;
        let mut worst: f64 = 0.0;
        for p in &self.params {
            let analytic = grads
                .get(p)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(self.bindings[p].shape().to_vec()));
            let numeric = finite_difference_gradient(&self.graph, self.output, &self.bindings, p, DEFAULT_STEP, None)?;
            worst = worst.max(max_relative_error(analytic.data(), numeric.data()));
        }
        Ok(worst)
    }
}
