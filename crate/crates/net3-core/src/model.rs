//! The end-to-end forecasting model: graph convolution over each snapshot,
//! Tucker reduction into a core, a gated recurrence, reconstruction, and a
//! linear output head that maps the concatenated embedding and reconstructed
//! hidden state to the next snapshot.
//!
//! Ablation variants swap exactly one stage: the independent graph layer or
//! a flat-graph convolution replace the tensor layer; independent per-series
//! cells or one shared cell replace the Tucker-core recurrence.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_string, CoreError, Result};
use crate::graph::{flatten_kronecker, ModeNetwork};
use crate::matrix::Matrix;
use crate::rng::SeededRng;
use crate::tensor::DenseTensor;
use crate::tgcn::{
    gcn_flat_forward, itgcn_forward, networked_modes, tgcl_forward, Activation, ItgcnParams,
    TgclParams,
};
use crate::trnn::{
    add_bias_last, core_dims, logistic, reconstruct, reduce, tlstm_step, CellOutput, FactorSet,
    TlstmParams, TlstmState, GATE_NAMES,
};

/// Which stage substitutions the model runs with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelVariant {
    /// Tensor graph convolution + Tucker-core cell (the full model).
    Net3,
    /// Independent per-mode graph convolution + Tucker-core cell.
    Itgcn,
    /// Flat-graph convolution on the Kronecker-combined network; the rest of
    /// the pipeline runs on the flattened single mode.
    GcnFlat,
    /// Tensor graph convolution + one independent cell per series.
    MLstm,
    /// Tensor graph convolution + a single cell shared across series.
    SingleLstm,
}

impl ModelVariant {
    pub fn name(&self) -> &'static str {
        match self {
            ModelVariant::Net3 => "net3",
            ModelVariant::Itgcn => "itgcn",
            ModelVariant::GcnFlat => "gcn-flat",
            ModelVariant::MLstm => "mlstm",
            ModelVariant::SingleLstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "net3" => Some(ModelVariant::Net3),
            "itgcn" => Some(ModelVariant::Itgcn),
            "gcn-flat" => Some(ModelVariant::GcnFlat),
            "mlstm" => Some(ModelVariant::MLstm),
            "lstm" => Some(ModelVariant::SingleLstm),
            _ => None,
        }
    }
}

/// Shape/hyperparameter description of a model instance.
#[derive(Clone, Debug)]
pub struct Net3Config {
    /// Non-time mode dimensions of a snapshot.
    pub dims: Vec<usize>,
    /// Embedding channels out of the graph layer.
    pub d: usize,
    /// Hidden channels of the recurrence.
    pub d_out: usize,
    /// Interaction degree setting the core dimensions.
    pub rho: f64,
    pub activation: Activation,
    pub cell_output: CellOutput,
    pub variant: ModelVariant,
}

impl Net3Config {
    /// Mode dimensions the recurrence operates on (flattened for the
    /// flat-graph variant).
    pub fn cell_dims(&self) -> Vec<usize> {
        match self.variant {
            ModelVariant::GcnFlat => vec![self.dims.iter().product()],
            _ => self.dims.clone(),
        }
    }
}

/// Graph-stage parameters.
#[derive(Clone, Debug)]
pub enum GraphLayer {
    Tgcl(TgclParams),
    Itgcn(ItgcnParams),
    FlatGcn {
        theta0: Matrix,
        theta1: Matrix,
        activation: Activation,
    },
}

/// Independent per-series gate weights, stored as stacked tensors.
#[derive(Clone, Debug)]
pub struct MlstmGate {
    /// `(series, d, d')`
    pub input: DenseTensor,
    /// `(series, d', d')`
    pub state: DenseTensor,
    /// `(series, d')`
    pub bias: DenseTensor,
}

#[derive(Clone, Debug)]
pub struct MlstmParams {
    pub gates: [MlstmGate; 4],
    pub series: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub cell_output: CellOutput,
}

/// One shared cell: feature-mode maps only.
#[derive(Clone, Debug)]
pub struct SingleLstmGate {
    pub input: Matrix,
    pub state: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SingleLstmParams {
    pub gates: [SingleLstmGate; 4],
    pub d_in: usize,
    pub d_out: usize,
    pub cell_output: CellOutput,
}

/// Recurrence-stage parameters.
#[derive(Clone, Debug)]
pub enum RecurrentCell {
    Tlstm {
        factors: FactorSet,
        params: TlstmParams,
    },
    MLstm(MlstmParams),
    SingleLstm(SingleLstmParams),
}

/// Linear output head on the concatenated `[embedding, reconstruction]`
/// features.
#[derive(Clone, Debug)]
pub struct MlpParams {
    /// `(d + d') x 1`
    pub weight: Matrix,
    pub bias: f64,
}

/// All parameters of one model instance.
#[derive(Clone, Debug)]
pub struct Net3Params {
    pub graph: GraphLayer,
    pub cell: RecurrentCell,
    pub mlp: MlpParams,
    config: Net3Config,
}

impl Net3Params {
    /// Seeded initialization consistent with `config` and the given networks.
    pub fn init(config: &Net3Config, nets: &[ModeNetwork], seed: u64) -> Result<Self> {
        if nets.len() != config.dims.len() {
            return Err(CoreError::InvalidArgument {
                op: "Net3Params::init",
                message: alloc::format!(
                    "{} networks for {} modes",
                    nets.len(),
                    config.dims.len()
                ),
            });
        }
        for (m, net) in nets.iter().enumerate() {
            if net.dim() != config.dims[m] {
                return Err(CoreError::ShapeMismatch {
                    op: "Net3Params::init",
                    expected: alloc::format!("{}", config.dims[m]),
                    got: alloc::format!("{}", net.dim()),
                    mode: Some(m),
                });
            }
        }
        if config.d == 0 || config.d_out == 0 {
            return Err(CoreError::InvalidArgument {
                op: "Net3Params::init",
                message: alloc::format!("channel sizes must be positive ({}, {})", config.d, config.d_out),
            });
        }
        if config.rho > 1.0 {
            log::warn!(
                "interaction degree {} > 1: the factor matrices are clamped to square",
                config.rho
            );
        }
        let mut rng = SeededRng::new(seed);
        let graph = match config.variant {
            ModelVariant::Itgcn => GraphLayer::Itgcn(ItgcnParams::init(
                config.dims.len(),
                1,
                config.d,
                config.activation,
                &mut rng,
            )),
            ModelVariant::GcnFlat => {
                let bound = libm::sqrt(6.0 / (1 + config.d) as f64);
                GraphLayer::FlatGcn {
                    theta0: Matrix::from_fn(1, config.d, |_, _| rng.uniform_in(-bound, bound)),
                    theta1: Matrix::from_fn(1, config.d, |_, _| rng.uniform_in(-bound, bound)),
                    activation: config.activation,
                }
            }
            _ => {
                let k = networked_modes(nets).len();
                GraphLayer::Tgcl(TgclParams::init(k, 1, config.d, config.activation, &mut rng))
            }
        };

        let cell_dims = config.cell_dims();
        let cell = match config.variant {
            ModelVariant::MLstm => {
                let series: usize = cell_dims.iter().product();
                let (d, d_out) = (config.d, config.d_out);
                let in_bound = libm::sqrt(6.0 / (d + d_out) as f64);
                let st_bound = 0.1 * libm::sqrt(3.0 / d_out as f64);
                let make_gate = |rng: &mut SeededRng, forget: bool| MlstmGate {
                    input: DenseTensor::from_fn(&[series, d, d_out], |_| {
                        rng.uniform_in(-in_bound, in_bound)
                    }),
                    state: DenseTensor::from_fn(&[series, d_out, d_out], |_| {
                        rng.uniform_in(-st_bound, st_bound)
                    }),
                    bias: DenseTensor::from_fn(&[series, d_out], |_| if forget { 1.0 } else { 0.0 }),
                };
                RecurrentCell::MLstm(MlstmParams {
                    gates: [
                        make_gate(&mut rng, true),
                        make_gate(&mut rng, false),
                        make_gate(&mut rng, false),
                        make_gate(&mut rng, false),
                    ],
                    series,
                    d_in: config.d,
                    d_out: config.d_out,
                    cell_output: config.cell_output,
                })
            }
            ModelVariant::SingleLstm => {
                let (d, d_out) = (config.d, config.d_out);
                let in_bound = libm::sqrt(6.0 / (d + d_out) as f64);
                let make_gate = |rng: &mut SeededRng, forget: bool| -> Result<SingleLstmGate> {
                    Ok(SingleLstmGate {
                        input: Matrix::from_fn(d, d_out, |_, _| rng.uniform_in(-in_bound, in_bound)),
                        state: crate::trnn::orthonormal_rows(d_out, d_out, rng)?.scale(0.1),
                        bias: vec![if forget { 1.0 } else { 0.0 }; d_out],
                    })
                };
                RecurrentCell::SingleLstm(SingleLstmParams {
                    gates: [
                        make_gate(&mut rng, true)?,
                        make_gate(&mut rng, false)?,
                        make_gate(&mut rng, false)?,
                        make_gate(&mut rng, false)?,
                    ],
                    d_in: config.d,
                    d_out: config.d_out,
                    cell_output: config.cell_output,
                })
            }
            _ => {
                let core = core_dims(config.rho, &cell_dims)?;
                let factors = FactorSet::init(&cell_dims, &core, &mut rng)?;
                let params = TlstmParams::init(
                    &core,
                    config.d,
                    config.d_out,
                    config.cell_output,
                    &mut rng,
                )?;
                RecurrentCell::Tlstm { factors, params }
            }
        };

        let mlp_in = config.d + config.d_out;
        let bound = libm::sqrt(6.0 / (mlp_in + 1) as f64);
        let mlp = MlpParams {
            weight: Matrix::from_fn(mlp_in, 1, |_, _| rng.uniform_in(-bound, bound)),
            bias: 0.0,
        };

        Ok(Self {
            graph,
            cell,
            mlp,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &Net3Config {
        &self.config
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> u64 {
        let mut n = 0u64;
        self.for_each_param(|_, t| n += t.len() as u64);
        n
    }

    /// Visits every parameter tensor in the canonical flattening order.
    pub fn for_each_param(&self, mut f: impl FnMut(&str, &DenseTensor)) {
        let call = |f: &mut dyn FnMut(&str, &DenseTensor), name: &str, m: &Matrix| {
            f(name, &DenseTensor::from_matrix(m));
        };
        match &self.graph {
            GraphLayer::Tgcl(p) => {
                for (i, th) in p.thetas().iter().enumerate() {
                    call(&mut f, &alloc::format!("tgcl.theta{i}"), th);
                }
            }
            GraphLayer::Itgcn(p) => {
                for (i, th) in p.thetas().iter().enumerate() {
                    call(&mut f, &alloc::format!("itgcn.theta{i}"), th);
                }
            }
            GraphLayer::FlatGcn { theta0, theta1, .. } => {
                call(&mut f, "gcn.theta0", theta0);
                call(&mut f, "gcn.theta1", theta1);
            }
        }
        match &self.cell {
            RecurrentCell::Tlstm { factors, params } => {
                for (m, u) in factors.factors().iter().enumerate() {
                    call(&mut f, &alloc::format!("factor{m}"), u);
                }
                for (g, gate) in params.gates.iter().enumerate() {
                    let gn = GATE_NAMES[g];
                    for (m, w) in gate.input.iter().enumerate() {
                        call(&mut f, &alloc::format!("cell.{gn}.z{m}"), w);
                    }
                    for (m, w) in gate.state.iter().enumerate() {
                        call(&mut f, &alloc::format!("cell.{gn}.y{m}"), w);
                    }
                    f(
                        &alloc::format!("cell.{gn}.b"),
                        &DenseTensor::new(vec![gate.bias.len()], gate.bias.clone()).unwrap(),
                    );
                }
            }
            RecurrentCell::MLstm(p) => {
                for (g, gate) in p.gates.iter().enumerate() {
                    let gn = GATE_NAMES[g];
                    f(&alloc::format!("cell.{gn}.z"), &gate.input);
                    f(&alloc::format!("cell.{gn}.y"), &gate.state);
                    f(&alloc::format!("cell.{gn}.b"), &gate.bias);
                }
            }
            RecurrentCell::SingleLstm(p) => {
                for (g, gate) in p.gates.iter().enumerate() {
                    let gn = GATE_NAMES[g];
                    call(&mut f, &alloc::format!("cell.{gn}.z"), &gate.input);
                    call(&mut f, &alloc::format!("cell.{gn}.y"), &gate.state);
                    f(
                        &alloc::format!("cell.{gn}.b"),
                        &DenseTensor::new(vec![gate.bias.len()], gate.bias.clone()).unwrap(),
                    );
                }
            }
        }
        call(&mut f, "mlp.w", &self.mlp.weight);
        f(
            "mlp.b",
            &DenseTensor::new(vec![1], vec![self.mlp.bias]).unwrap(),
        );
    }

    /// Rebuilds the parameter tensors from the canonical flattening order.
    /// The iterator must yield exactly the tensors `for_each_param` visits.
    pub fn assign_params<'a>(
        &mut self,
        mut tensors: impl Iterator<Item = &'a DenseTensor>,
    ) -> Result<()> {
        let mut take = |expect_shape: &[usize]| -> Result<DenseTensor> {
            let t = tensors.next().ok_or(CoreError::InvalidArgument {
                op: "assign_params",
                message: alloc::string::String::from("not enough parameter tensors"),
            })?;
            if t.shape() != expect_shape {
                return Err(CoreError::ShapeMismatch {
                    op: "assign_params",
                    expected: shape_string(expect_shape),
                    got: shape_string(t.shape()),
                    mode: None,
                });
            }
            Ok(t.clone())
        };
        let as_matrix = |t: DenseTensor| t.to_matrix();
        match &mut self.graph {
            GraphLayer::Tgcl(p) => {
                for th in p.thetas_mut() {
                    *th = as_matrix(take(&[th.rows(), th.cols()])?)?;
                }
            }
            GraphLayer::Itgcn(p) => {
                for th in p.thetas_mut() {
                    *th = as_matrix(take(&[th.rows(), th.cols()])?)?;
                }
            }
            GraphLayer::FlatGcn { theta0, theta1, .. } => {
                *theta0 = as_matrix(take(&[theta0.rows(), theta0.cols()])?)?;
                *theta1 = as_matrix(take(&[theta1.rows(), theta1.cols()])?)?;
            }
        }
        match &mut self.cell {
            RecurrentCell::Tlstm { factors, params } => {
                for u in factors.factors_mut() {
                    *u = as_matrix(take(&[u.rows(), u.cols()])?)?;
                }
                for gate in params.gates.iter_mut() {
                    for w in gate.input.iter_mut() {
                        *w = as_matrix(take(&[w.rows(), w.cols()])?)?;
                    }
                    for w in gate.state.iter_mut() {
                        *w = as_matrix(take(&[w.rows(), w.cols()])?)?;
                    }
                    gate.bias = take(&[gate.bias.len()])?.into_data();
                }
            }
            RecurrentCell::MLstm(p) => {
                for gate in p.gates.iter_mut() {
                    gate.input = take(gate.input.shape().to_vec().as_slice())?;
                    gate.state = take(gate.state.shape().to_vec().as_slice())?;
                    gate.bias = take(gate.bias.shape().to_vec().as_slice())?;
                }
            }
            RecurrentCell::SingleLstm(p) => {
                for gate in p.gates.iter_mut() {
                    gate.input = as_matrix(take(&[gate.input.rows(), gate.input.cols()])?)?;
                    gate.state = as_matrix(take(&[gate.state.rows(), gate.state.cols()])?)?;
                    gate.bias = take(&[gate.bias.len()])?.into_data();
                }
            }
        }
        self.mlp.weight = as_matrix(take(&[self.mlp.weight.rows(), self.mlp.weight.cols()])?)?;
        self.mlp.bias = take(&[1])?.data()[0];
        if tensors.next().is_some() {
            return Err(CoreError::InvalidArgument {
                op: "assign_params",
                message: alloc::string::String::from("too many parameter tensors"),
            });
        }
        Ok(())
    }
}

/// Per-step intermediate values retained for the loss terms.
#[derive(Clone, Debug)]
pub struct StepTrace {
    /// Node embedding out of the graph layer.
    pub h: DenseTensor,
    /// Cell input (the Tucker core for the compressed cell).
    pub z: DenseTensor,
    /// Cell state after the step.
    pub state: TlstmState,
    /// Reconstructed hidden state at full dimensions.
    pub r: DenseTensor,
    /// Predicted next snapshot, shape `N_1 x ... x N_M`.
    pub pred: DenseTensor,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub steps: Vec<StepTrace>,
}

impl ForwardTrace {
    pub fn final_state(&self) -> &TlstmState {
        &self.steps.last().expect("nonempty window").state
    }

    pub fn last_pred(&self) -> &DenseTensor {
        &self.steps.last().expect("nonempty window").pred
    }
}

fn per_series_linear(x: &DenseTensor, w: &DenseTensor) -> Result<DenseTensor> {
    // x: (..., d_in) flattened to (series, d_in); w: (series, d_in, d_out).
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

fn mlstm_step(
    z: &DenseTensor,
    prev: &TlstmState,
    p: &MlstmParams,
) -> Result<TlstmState> {
    let preact = |gate: &MlstmGate| -> Result<DenseTensor> {
        let gi = per_series_linear(z, &gate.input)?;
        let gy = per_series_linear(&prev.y, &gate.state)?;
        let mut sum = gi.add(&gy);
        let d_out = p.d_out;
        for (k, v) in sum.data_mut().iter_mut().enumerate() {
            let s = k / d_out;
            let o = k % d_out;
            *v += gate.bias.data()[s * d_out + o];
        }
        Ok(sum)
    };
    let f = preact(&p.gates[0])?.map(logistic);
    let i = preact(&p.gates[1])?.map(logistic);
    let o = preact(&p.gates[2])?.map(logistic);
    let c_tilde = preact(&p.gates[3])?.map(libm::tanh);
    let c = f.hadamard(&prev.c).add(&i.hadamard(&c_tilde));
    let squash = p.cell_output;
    let y = o.hadamard(&c.map(|v| match squash {
        CellOutput::Logistic => logistic(v),
        CellOutput::Tanh => libm::tanh(v),
    }));
    Ok(TlstmState { y, c })
}

fn single_lstm_step(
    z: &DenseTensor,
    prev: &TlstmState,
    p: &SingleLstmParams,
) -> Result<TlstmState> {
    let last = z.order() - 1;
    let preact = |gate: &SingleLstmGate| -> Result<DenseTensor> {
        let gi = z.mode_product(&gate.input, last)?;
        let gy = prev.y.mode_product(&gate.state, last)?;
        add_bias_last(&gi.add(&gy), &gate.bias)
    };
    let f = preact(&p.gates[0])?.map(logistic);
    let i = preact(&p.gates[1])?.map(logistic);
    let o = preact(&p.gates[2])?.map(logistic);
    let c_tilde = preact(&p.gates[3])?.map(libm::tanh);
    let c = f.hadamard(&prev.c).add(&i.hadamard(&c_tilde));
    let squash = p.cell_output;
    let y = o.hadamard(&c.map(|v| match squash {
        CellOutput::Logistic => logistic(v),
        CellOutput::Tanh => libm::tanh(v),
    }));
    Ok(TlstmState { y, c })
}

/// Zero initial state shaped for the configured cell.
pub fn initial_state(params: &Net3Params) -> TlstmState {
    let cfg = params.config();
    match &params.cell {
        RecurrentCell::Tlstm { params: cell, .. } => {
            TlstmState::zeros(cell.core(), cell.d_out())
        }
        _ => {
            let mut shape = cfg.cell_dims();
            shape.push(cfg.d_out);
            TlstmState {
                y: DenseTensor::zeros(&shape),
                c: DenseTensor::zeros(&shape),
            }
        }
    }
}

/// One pipeline step on a snapshot (no feature mode), returning the trace
/// entry and the next state.
pub fn step(
    snapshot: &DenseTensor,
    state: &TlstmState,
    nets: &[ModeNetwork],
    params: &Net3Params,
) -> Result<(StepTrace, TlstmState)> {
    let cfg = params.config();
    if snapshot.shape() != cfg.dims.as_slice() {
        return Err(CoreError::ShapeMismatch {
            op: "model::step",
            expected: shape_string(&cfg.dims),
            got: shape_string(snapshot.shape()),
            mode: None,
        });
    }

    // Graph stage.
    let h = match &params.graph {
        GraphLayer::Tgcl(p) => tgcl_forward(&snapshot.append_unit_mode(), nets, p)?,
        GraphLayer::Itgcn(p) => itgcn_forward(&snapshot.append_unit_mode(), nets, p)?,
        GraphLayer::FlatGcn {
            theta0,
            theta1,
            activation,
        } => {
            let flat = flatten_kronecker(nets)?;
            let x_mat = Matrix::new(snapshot.len(), 1, snapshot.vectorize())?;
            let out = gcn_flat_forward(&x_mat, &flat, theta0, theta1, *activation)?;
            DenseTensor::from_matrix(&out)
        }
    };

    // Recurrence stage.
    let (z, new_state, r) = match &params.cell {
        RecurrentCell::Tlstm { factors, params: cell } => {
            let z = reduce(&h, factors)?;
            let new_state = tlstm_step(&z, state, cell)?;
            let r = reconstruct(&new_state.y, factors)?;
            (z, new_state, r)
        }
        RecurrentCell::MLstm(p) => {
            let new_state = mlstm_step(&h, state, p)?;
            let r = new_state.y.clone();
            (h.clone(), new_state, r)
        }
        RecurrentCell::SingleLstm(p) => {
            let new_state = single_lstm_step(&h, state, p)?;
            let r = new_state.y.clone();
            (h.clone(), new_state, r)
        }
    };

    // Output head.
    let features = h.concat_last(&r)?;
    let last = features.order() - 1;
    let projected = features.mode_product(&params.mlp.weight, last)?;
    let with_bias = projected.map(|v| v + params.mlp.bias);
    let flat_pred = with_bias.squeeze_last()?;
    let pred = match cfg.variant {
        ModelVariant::GcnFlat => {
            DenseTensor::from_vectorized(&cfg.dims, flat_pred.data())?
        }
        _ => flat_pred,
    };

    Ok((
        StepTrace {
            h,
            z,
            state: new_state.clone(),
            r,
            pred,
        },
        new_state,
    ))
}

/// Runs the pipeline over a window of snapshots, starting from a zero state.
pub fn forward(
    window: &[DenseTensor],
    nets: &[ModeNetwork],
    params: &Net3Params,
) -> Result<ForwardTrace> {
    if window.is_empty() {
        return Err(CoreError::InvalidArgument {
            op: "model::forward",
            message: alloc::string::String::from("window must hold at least one snapshot"),
        });
    }
    let mut state = initial_state(params);
    let mut steps = Vec::with_capacity(window.len());
    for snapshot in window {
        let (trace, next) = step(snapshot, &state, nets, params)?;
        steps.push(trace);
        state = next;
    }
    Ok(ForwardTrace { steps })
}

/// Iterative rollout: consumes the history, then feeds each prediction back
/// as the next input. Returns `horizon` predicted snapshots.
pub fn predict_multi_step(
    history: &[DenseTensor],
    nets: &[ModeNetwork],
    params: &Net3Params,
    horizon: usize,
) -> Result<Vec<DenseTensor>> {
    if horizon < 1 {
        return Err(CoreError::InvalidArgument {
            op: "predict_multi_step",
            message: alloc::format!("horizon must be at least 1, got {horizon}"),
        });
    }
    let trace = forward(history, nets, params)?;
    let mut preds = Vec::with_capacity(horizon);
    let mut state = trace.final_state().clone();
    let mut last = trace.last_pred().clone();
    preds.push(last.clone());
    for _ in 1..horizon {
        let (step_trace, next) = step(&last, &state, nets, params)?;
        last = step_trace.pred;
        state = next;
        preds.push(last.clone());
    }
    Ok(preds)
}

/// The three objective terms; the total is
/// `prediction + mu1 * tucker + mu2 * orthonormality`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    /// Squared error over the observed target entries.
    pub prediction: f64,
    /// Squared reconstruction error of the core at each window step.
    pub tucker: f64,
    /// Squared orthonormality residual of the factors.
    pub orthonormality: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.prediction + self.mu1 * self.tucker + self.mu2 * self.orthonormality
    }
}

/// Objective of one window: the final prediction against its target (masked
/// entries excluded), the per-step core reconstruction error, and the factor
/// orthonormality residual.
pub fn loss(
    trace: &ForwardTrace,
    target: &DenseTensor,
    target_mask: Option<&[bool]>,
    params: &Net3Params,
    mu1: f64,
    mu2: f64,
) -> Result<LossTerms> {
    let pred = trace.last_pred();
    if pred.shape() != target.shape() {
        return Err(CoreError::ShapeMismatch {
            op: "model::loss",
            expected: shape_string(pred.shape()),
            got: shape_string(target.shape()),
            mode: None,
        });
    }
    if let Some(m) = target_mask {
        if m.len() != target.len() {
            return Err(CoreError::ShapeMismatch {
                op: "model::loss",
                expected: alloc::format!("mask of {} entries", target.len()),
                got: alloc::format!("{}", m.len()),
                mode: None,
            });
        }
    }
    let mut prediction = 0.0;
    for (k, (&p, &t)) in pred.data().iter().zip(target.data().iter()).enumerate() {
        if target_mask.is_none_or(|m| m[k]) {
            let d = p - t;
            prediction += d * d;
        }
    }

    let sum_sq = |t: &DenseTensor| -> f64 { t.data().iter().map(|v| v * v).sum() };
    let (tucker, orthonormality) = match &params.cell {
        RecurrentCell::Tlstm { factors, .. } => {
            let mut tucker = 0.0;
            for s in &trace.steps {
                let recon = reconstruct(&s.z, factors)?;
                tucker += sum_sq(&s.h.sub(&recon));
            }
            let mut ortho = 0.0;
            for u in factors.factors() {
                let gram = u.matmul(&u.transpose());
                let diff = gram.sub(&Matrix::identity(u.rows()));
                ortho += diff.data().iter().map(|v| v * v).sum::<f64>();
            }
            (tucker, ortho)
        }
        _ => (0.0, 0.0),
    };

    Ok(LossTerms {
        prediction,
        tucker,
        orthonormality,
        mu1,
        mu2,
    })
}
