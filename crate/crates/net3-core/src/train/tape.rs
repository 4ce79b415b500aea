//! Minimal reverse-mode differentiation tape over dense tensors.
//!
//! The forward pass records one node per primitive (mode products,
//! elementwise arithmetic, activations, concatenation, reductions) with its
//! computed value; `backward` replays the record in reverse, accumulating
//! adjoints, and returns a gradient per registered parameter. Parameters are
//! owned by a [`ParamStore`] keyed by stable names so optimizer state and
//! checkpoints can address them.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::Net3Params;
use crate::tensor::DenseTensor;
use crate::trnn::logistic;

/// Flat, named parameter storage. Order matches
/// [`Net3Params::for_each_param`], which is also the checkpoint order.
#[derive(Clone, Debug)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<DenseTensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn from_model(model: &Net3Params) -> Self {
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        model.for_each_param(|name, t| {
            names.push(String::from(name));
            tensors.push(t.clone());
        });
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self {
            names,
            tensors,
            index,
        }
    }

    /// Writes the stored tensors back into the model structure.
    pub fn write_back(&self, model: &mut Net3Params) -> Result<()> {
        model.assign_params(self.tensors.iter())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[DenseTensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [DenseTensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &DenseTensor {
        &self.tensors[i]
    }

    pub fn lookup(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or(CoreError::InvalidArgument {
            op: "ParamStore::lookup",
            message: alloc::format!("no parameter named {name}"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    /// Constant leaf; no gradient consumer.
    Input,
    /// Parameter leaf, addressed by store index.
    Param(usize),
    /// `x x_mode W` (or `W^T` when `transpose_w`).
    ModeProduct {
        x: NodeId,
        w: NodeId,
        mode: usize,
        transpose_w: bool,
    },
    /// Batched per-series map: x viewed `(S, d_in)`, w `(S, d_in, d_out)`.
    PerSeriesLinear { x: NodeId, w: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Hadamard { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    /// Bias (1-mode) broadcast along the last mode.
    AddBiasLast { x: NodeId, b: NodeId },
    /// Single scalar parameter (shape [1]) broadcast everywhere.
    AddScalarParam { x: NodeId, b: NodeId },
    Logistic { x: NodeId },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    ConcatLast { a: NodeId, b: NodeId },
    /// Row-major reinterpretation to a new shape (same element count).
    Reshape { x: NodeId },
    /// Sum of squared entries, a scalar node.
    SumSq { x: NodeId },
}

struct Node {
    op: Op,
    value: DenseTensor,
}

/// Records a forward computation; parameters are registered as the first
/// `store.len()` nodes.
pub struct Tape {
    nodes: Vec<Node>,
    n_params: usize,
}

impl Tape {
    /// Starts a tape with every parameter of `store` as a leaf; node `i`
    /// corresponds to store index `i`.
    pub fn new(store: &ParamStore) -> Self {
        let nodes = store
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| Node {
                op: Op::Param(i),
                value: t.clone(),
            })
            .collect();
        Self {
            nodes,
            n_params: store.len(),
        }
    }

    pub fn param_node(&self, store_index: usize) -> NodeId {
        debug_assert!(store_index < self.n_params);
        NodeId(store_index)
    }

    pub fn value(&self, id: NodeId) -> &DenseTensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: DenseTensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: DenseTensor) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn mode_product(
        &mut self,
        x: NodeId,
        w: NodeId,
        mode: usize,
        transpose_w: bool,
    ) -> Result<NodeId> {
        let wmat = self.nodes[w.0].value.to_matrix()?;
        let weff = if transpose_w { wmat.transpose() } else { wmat };
        let value = self.nodes[x.0].value.mode_product(&weff, mode)?;
        Ok(self.push(
            Op::ModeProduct {
                x,
                w,
                mode,
                transpose_w,
            },
            value,
        ))
    }

    pub fn per_series_linear(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let value = per_series_linear_value(&self.nodes[x.0].value, &self.nodes[w.0].value)?;
        Ok(self.push(Op::PerSeriesLinear { x, w }, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.add(&self.nodes[b.0].value);
        self.push(Op::Add { a, b }, value)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.sub(&self.nodes[b.0].value);
        self.push(Op::Sub { a, b }, value)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a.0].value.hadamard(&self.nodes[b.0].value);
        self.push(Op::Hadamard { a, b }, value)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.nodes[x.0].value.scale(c);
        self.push(Op::Scale { x, c }, value)
    }

    pub fn add_bias_last(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let value =
            crate::trnn::add_bias_last(&self.nodes[x.0].value, self.nodes[b.0].value.data())?;
        Ok(self.push(Op::AddBiasLast { x, b }, value))
    }

    pub fn add_scalar_param(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let bval = &self.nodes[b.0].value;
        if bval.len() != 1 {
            return Err(CoreError::InvalidArgument {
                op: "Tape::add_scalar_param",
                message: alloc::format!("bias node must be a scalar, has {} entries", bval.len()),
            });
        }
        let c = bval.data()[0];
        let value = self.nodes[x.0].value.map(|v| v + c);
        Ok(self.push(Op::AddScalarParam { x, b }, value))
    }

    pub fn logistic(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.map(logistic);
        self.push(Op::Logistic { x }, value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.map(libm::tanh);
        self.push(Op::Tanh { x }, value)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu { x }, value)
    }

    pub fn concat_last(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0].value.concat_last(&self.nodes[b.0].value)?;
        Ok(self.push(Op::ConcatLast { a, b }, value))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let src = &self.nodes[x.0].value;
        let value = DenseTensor::new(shape.to_vec(), src.data().to_vec())?;
        Ok(self.push(Op::Reshape { x }, value))
    }

    pub fn sum_sq(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.data().iter().map(|v| v * v).sum();
        self.push(
            Op::SumSq { x },
            DenseTensor::new(vec![1], vec![s]).unwrap(),
        )
    }

    /// Scalar value of a 1-element node (typically the loss).
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value.data()[0]
    }

    /// Reverse sweep from `output` (a scalar node). Returns one gradient per
    /// parameter in store order; parameters not touched by the recorded
    /// computation get zero gradients.
    pub fn backward(&self, output: NodeId) -> Result<Vec<DenseTensor>> {
        if self.nodes[output.0].value.len() != 1 {
            return Err(CoreError::InvalidArgument {
                op: "Tape::backward",
                message: String::from("backward starts from a scalar node"),
            });
        }
        let mut adj: Vec<Option<DenseTensor>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(DenseTensor::new(vec![1], vec![1.0]).unwrap());

        for id in (0..self.nodes.len()).rev() {
            let Some(grad) = adj[id].clone() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Input | Op::Param(_) => {}
                Op::ModeProduct {
                    x,
                    w,
                    mode,
                    transpose_w,
                } => {
                    let xval = &self.nodes[x.0].value;
                    let wmat = self.nodes[w.0].value.to_matrix()?;
                    let weff = if *transpose_w {
                        wmat.transpose()
                    } else {
                        wmat
                    };
                    // dX_(m) = W_eff * dY_(m)
                    let dy_unf = grad.unfold(*mode);
                    let dx = DenseTensor::fold(&weff.matmul(&dy_unf), xval.shape(), *mode)?;
                    accumulate(&mut adj, *x, dx);
                    // dW_eff = X_(m) * dY_(m)^T
                    let dw_eff = xval.unfold(*mode).matmul(&dy_unf.transpose());
                    let dw = if *transpose_w {
                        dw_eff.transpose()
                    } else {
                        dw_eff
                    };
                    accumulate(&mut adj, *w, DenseTensor::from_matrix(&dw));
                }
                Op::PerSeriesLinear { x, w } => {
                    let xval = &self.nodes[x.0].value;
                    let wval = &self.nodes[w.0].value;
                    let (series, d_in, d_out) =
                        (wval.shape()[0], wval.shape()[1], wval.shape()[2]);
                    let mut dx = DenseTensor::zeros(xval.shape());
                    let mut dw = DenseTensor::zeros(wval.shape());
                    for s in 0..series {
                        for o in 0..d_out {
                            let g = grad.data()[s * d_out + o];
                            if g == 0.0 {
                                continue;
                            }
                            for i in 0..d_in {
                                dx.data_mut()[s * d_in + i] +=
                                    g * wval.data()[s * d_in * d_out + i * d_out + o];
                                dw.data_mut()[s * d_in * d_out + i * d_out + o] +=
                                    g * xval.data()[s * d_in + i];
                            }
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *w, dw);
                }
                Op::Add { a, b } => {
                    accumulate(&mut adj, *a, grad.clone());
                    accumulate(&mut adj, *b, grad);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut adj, *a, grad.clone());
                    accumulate(&mut adj, *b, grad.scale(-1.0));
                }
                Op::Hadamard { a, b } => {
                    let da = grad.hadamard(&self.nodes[b.0].value);
                    let db = grad.hadamard(&self.nodes[a.0].value);
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Scale { x, c } => {
                    accumulate(&mut adj, *x, grad.scale(*c));
                }
                Op::AddBiasLast { x, b } => {
                    accumulate(&mut adj, *x, grad.clone());
                    let d = self.nodes[b.0].value.len();
                    let mut db = vec![0.0; d];
                    for (k, g) in grad.data().iter().enumerate() {
                        db[k % d] += g;
                    }
                    accumulate(
                        &mut adj,
                        *b,
                        DenseTensor::new(vec![d], db).unwrap(),
                    );
                }
                Op::AddScalarParam { x, b } => {
                    accumulate(&mut adj, *x, grad.clone());
                    let total: f64 = grad.data().iter().sum();
                    accumulate(
                        &mut adj,
                        *b,
                        DenseTensor::new(vec![1], vec![total]).unwrap(),
                    );
                }
                Op::Logistic { x } => {
                    let out = &self.nodes[id].value;
                    let dx = DenseTensor::new(
                        out.shape().to_vec(),
                        grad.data()
                            .iter()
                            .zip(out.data().iter())
                            .map(|(g, s)| g * s * (1.0 - s))
                            .collect(),
                    )?;
                    accumulate(&mut adj, *x, dx);
                }
                Op::Tanh { x } => {
                    let out = &self.nodes[id].value;
                    let dx = DenseTensor::new(
                        out.shape().to_vec(),
                        grad.data()
                            .iter()
                            .zip(out.data().iter())
                            .map(|(g, t)| g * (1.0 - t * t))
                            .collect(),
                    )?;
                    accumulate(&mut adj, *x, dx);
                }
                Op::Relu { x } => {
                    let xin = &self.nodes[x.0].value;
                    let dx = DenseTensor::new(
                        xin.shape().to_vec(),
                        grad.data()
                            .iter()
                            .zip(xin.data().iter())
                            .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                            .collect(),
                    )?;
                    accumulate(&mut adj, *x, dx);
                }
                Op::ConcatLast { a, b } => {
                    let aval = &self.nodes[a.0].value;
                    let bval = &self.nodes[b.0].value;
                    let da_len = *aval.shape().last().unwrap();
                    let db_len = *bval.shape().last().unwrap();
                    let fibers = aval.len() / da_len;
                    let mut da = DenseTensor::zeros(aval.shape());
                    let mut db = DenseTensor::zeros(bval.shape());
                    for f in 0..fibers {
                        let src = &grad.data()[f * (da_len + db_len)..(f + 1) * (da_len + db_len)];
                        da.data_mut()[f * da_len..(f + 1) * da_len]
                            .copy_from_slice(&src[..da_len]);
                        db.data_mut()[f * db_len..(f + 1) * db_len]
                            .copy_from_slice(&src[da_len..]);
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::Reshape { x } => {
                    let xval = &self.nodes[x.0].value;
                    let dx = DenseTensor::new(xval.shape().to_vec(), grad.data().to_vec())?;
                    accumulate(&mut adj, *x, dx);
                }
                Op::SumSq { x } => {
                    let g = grad.data()[0];
                    let dx = self.nodes[x.0].value.scale(2.0 * g);
                    accumulate(&mut adj, *x, dx);
                }
            }
        }

        let mut grads: Vec<DenseTensor> = self.nodes[..self.n_params]
            .iter()
            .map(|n| DenseTensor::zeros(n.value.shape()))
            .collect();
        for (i, node) in self.nodes[..self.n_params].iter().enumerate() {
            if let Op::Param(p) = node.op {
                if let Some(g) = adj[i].take() {
                    grads[p] = g;
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<DenseTensor>], id: NodeId, grad: DenseTensor) {
    match &mut adj[id.0] {
        Some(existing) => *existing = existing.add(&grad),
        slot @ None => *slot = Some(grad),
    }
}

/// Forward value of the batched per-series map (shared with the pure model
/// path through the same formula).
pub(crate) fn per_series_linear_value(x: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    if w.order() != 3 {
        return Err(CoreError::InvalidArgument {
            op: "per_series_linear",
            message: alloc::format!("weights must be 3-mode, got order {}", w.order()),
        });
    }
    let d_in = *x.shape().last().unwrap();
    let (series, w_in, d_out) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    if x.len() / d_in != series || w_in != d_in {
        return Err(CoreError::ShapeMismatch {
            op: "per_series_linear",
            expected: alloc::format!("({series}, {w_in}) input view"),
            got: alloc::format!("({}, {d_in})", x.len() / d_in),
            mode: None,
        });
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = d_out;
    let mut out = DenseTensor::zeros(&shape);
    for s in 0..series {
        for o in 0..d_out {
            let mut acc = 0.0;
            for i in 0..d_in {
                acc += x.data()[s * d_in + i] * w.data()[s * w_in * d_out + i * d_out + o];
            }
            out.data_mut()[s * d_out + o] = acc;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::rng::SeededRng;

    fn store_of(tensors: Vec<(&str, DenseTensor)>) -> ParamStore {
        let names: Vec<String> = tensors.iter().map(|(n, _)| String::from(*n)).collect();
        let ts: Vec<DenseTensor> = tensors.into_iter().map(|(_, t)| t).collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        ParamStore {
            names,
            tensors: ts,
            index,
        }
    }

    #[test]
    fn gradient_of_sum_sq_is_twice_input() {
        let mut rng = SeededRng::new(1);
        let x = DenseTensor::from_fn(&[2, 3], |_| rng.normal());
        let store = store_of(vec![("x", x.clone())]);
        let mut tape = Tape::new(&store);
        let xid = tape.param_node(0);
        let loss = tape.sum_sq(xid);
        let grads = tape.backward(loss).unwrap();
        assert!(grads[0].max_abs_diff(&x.scale(2.0)) < 1e-12);
    }

    #[test]
    fn untouched_parameter_gets_zero_gradient() {
        let store = store_of(vec![
            ("used", DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap()),
            ("unused", DenseTensor::new(vec![3], vec![1.0, 1.0, 1.0]).unwrap()),
        ]);
        let mut tape = Tape::new(&store);
        let loss = tape.sum_sq(tape.param_node(0));
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads[1].data(), &[0.0, 0.0, 0.0]);
    }

    /// Central finite differences on an arbitrary scalar tape program.
    #[allow(clippy::needless_range_loop)]
    fn finite_diff_check(
        build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
        store: &ParamStore,
        tol: f64,
    ) {
        let mut tape = Tape::new(store);
        let ids: Vec<NodeId> = (0..store.len()).map(|i| tape.param_node(i)).collect();
        let loss = build(&mut tape, &ids);
        let analytic = tape.backward(loss).unwrap();

        let h = 1e-5;
        for p in 0..store.len() {
            for k in 0..store.get(p).len() {
                let eval = |delta: f64| -> f64 {
                    let mut bumped = store.clone();
                    bumped.tensors_mut()[p].data_mut()[k] += delta;
                    let mut t = Tape::new(&bumped);
                    let ids: Vec<NodeId> = (0..bumped.len()).map(|i| t.param_node(i)).collect();
                    let l = build(&mut t, &ids);
                    t.scalar(l)
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = analytic[p].data()[k];
                let denom = fd.abs().max(an.abs()).max(1.0);
                assert!(
                    (fd - an).abs() / denom < tol,
                    "param {p} coord {k}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn mode_product_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(2);
        let store = store_of(vec![
            ("x", DenseTensor::from_fn(&[2, 3, 2], |_| rng.normal())),
            ("w", DenseTensor::from_fn(&[3, 4], |_| rng.normal())),
        ]);
        finite_diff_check(
            |t, ids| {
                let y = t.mode_product(ids[0], ids[1], 1, false).unwrap();
                t.sum_sq(y)
            },
            &store,
            1e-6,
        );
    }

    #[test]
    fn transposed_mode_product_gradients() {
        let mut rng = SeededRng::new(3);
        let store = store_of(vec![
            ("x", DenseTensor::from_fn(&[4, 2], |_| rng.normal())),
            ("u", DenseTensor::from_fn(&[3, 4], |_| rng.normal())), // U: 3x4, applies U^T
        ]);
        finite_diff_check(
            |t, ids| {
                let y = t.mode_product(ids[0], ids[1], 0, true).unwrap();
                t.sum_sq(y)
            },
            &store,
            1e-6,
        );
    }

    #[test]
    fn shared_node_used_twice_accumulates() {
        // loss = || U U^T - I ||^2: U enters the product twice.
        let mut rng = SeededRng::new(4);
        let store = store_of(vec![(
            "u",
            DenseTensor::from_fn(&[2, 4], |_| rng.normal()),
        )]);
        finite_diff_check(
            |t, ids| {
                let gram = t.mode_product(ids[0], ids[0], 1, true).unwrap();
                let eye = t.input(DenseTensor::from_matrix(&Matrix::identity(2)));
                let diff = t.sub(gram, eye);
                t.sum_sq(diff)
            },
            &store,
            1e-6,
        );
    }

    #[test]
    fn elementwise_chain_gradients() {
        let mut rng = SeededRng::new(5);
        let store = store_of(vec![
            ("a", DenseTensor::from_fn(&[5], |_| rng.normal())),
            ("b", DenseTensor::from_fn(&[5], |_| rng.normal())),
            ("bias", DenseTensor::from_fn(&[5], |_| rng.normal())),
        ]);
        finite_diff_check(
            |t, ids| {
                let prod = t.hadamard(ids[0], ids[1]);
                let biased = t.add_bias_last(prod, ids[2]).unwrap();
                let sig = t.logistic(biased);
                let tan = t.tanh(sig);
                let scaled = t.scale(tan, 1.7);
                t.sum_sq(scaled)
            },
            &store,
            1e-6,
        );
    }

    #[test]
    fn concat_and_scalar_bias_gradients() {
        let mut rng = SeededRng::new(6);
        let store = store_of(vec![
            ("a", DenseTensor::from_fn(&[2, 2], |_| rng.normal())),
            ("b", DenseTensor::from_fn(&[2, 3], |_| rng.normal())),
            ("c", DenseTensor::new(vec![1], vec![0.3]).unwrap()),
        ]);
        finite_diff_check(
            |t, ids| {
                let cat = t.concat_last(ids[0], ids[1]).unwrap();
                let shifted = t.add_scalar_param(cat, ids[2]).unwrap();
                t.sum_sq(shifted)
            },
            &store,
            1e-6,
        );
    }

    #[test]
    fn per_series_linear_gradients() {
        let mut rng = SeededRng::new(7);
        let store = store_of(vec![
            ("x", DenseTensor::from_fn(&[3, 2], |_| rng.normal())),
            ("w", DenseTensor::from_fn(&[3, 2, 2], |_| rng.normal())),
        ]);
        finite_diff_check(
            |t, ids| {
                let y = t.per_series_linear(ids[0], ids[1]).unwrap();
                let s = t.tanh(y);
                t.sum_sq(s)
            },
            &store,
            1e-6,
        );
    }

    #[test]
    fn relu_and_reshape_gradients() {
        let mut rng = SeededRng::new(8);
        // keep values away from the relu kink
        let store = store_of(vec![(
            "x",
            DenseTensor::from_fn(&[6], |_| rng.normal() + 3.0 * rng.normal().signum()),
        )]);
        finite_diff_check(
            |t, ids| {
                let r = t.relu(ids[0]);
                let rs = t.reshape(r, &[2, 3]).unwrap();
                t.sum_sq(rs)
            },
            &store,
            1e-6,
        );
    }

    #[test]
    fn store_round_trips_through_model() {
        use crate::graph::ModeNetwork;
        use crate::model::{ModelVariant, Net3Config, Net3Params};
        use crate::tgcn::Activation;
        use crate::trnn::CellOutput;
        let cfg = Net3Config {
            dims: vec![3, 2],
            d: 2,
            d_out: 2,
            rho: 0.6,
            activation: Activation::Tanh,
            cell_output: CellOutput::Logistic,
            variant: ModelVariant::Net3,
        };
        let nets = vec![ModeNetwork::identity(3), ModeNetwork::identity(2)];
        let model = Net3Params::init(&cfg, &nets, 3).unwrap();
        let store = ParamStore::from_model(&model);
        assert_eq!(store.len() as u64, {
            let mut n = 0u64;
            model.for_each_param(|_, _| n += 1);
            n
        });
        let mut copy = Net3Params::init(&cfg, &nets, 4).unwrap();
        store.write_back(&mut copy).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        model.for_each_param(|_, t| a.extend_from_slice(t.data()));
        copy.for_each_param(|_, t| b.extend_from_slice(t.data()));
        assert_eq!(a, b);
        assert!(store.lookup("mlp.w").is_ok());
        assert!(store.lookup("nope").is_err());
    }
}
