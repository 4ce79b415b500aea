//! Records the model's window objective on the tape.
//!
//! Mirrors the pure pipeline in `model` operation for operation (same kernels,
//! same accumulation order), so the taped forward values are bit-identical to
//! the pure forward; a test pins that equality.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::graph::{flatten_kronecker, ModeNetwork};
use crate::matrix::Matrix;
use crate::model::{GraphLayer, ModelVariant, Net3Params, RecurrentCell};
use crate::tensor::DenseTensor;
use crate::tgcn::{networked_modes, Activation, IndicatorVector};
use crate::trnn::{CellOutput, GATE_NAMES};

use super::tape::{NodeId, ParamStore, Tape};

/// The recorded objective of one window.
pub struct TapedWindow {
    pub tape: Tape,
    pub loss: NodeId,
    /// Final-step prediction node (in vectorized space for the flat variant).
    pub pred: NodeId,
}

struct GateIds {
    input: Vec<NodeId>,
    state: Vec<NodeId>,
    bias: NodeId,
}

/// Builds the full objective of one window on a fresh tape:
/// squared prediction error over observed target entries, plus
/// `mu1 * sum_t ||H_t - Z_t expanded||^2` and
/// `mu2 * sum_m ||U_m U_m^T - I||^2` when the Tucker cell is active.
#[allow(clippy::too_many_arguments)]
pub fn build_window_loss(
    store: &ParamStore,
    model: &Net3Params,
    nets: &[ModeNetwork],
    window: &[DenseTensor],
    target: &DenseTensor,
    target_mask: &[bool],
    mu1: f64,
    mu2: f64,
) -> Result<TapedWindow> {
    if window.is_empty() {
        return Err(CoreError::InvalidArgument {
            op: "build_window_loss",
            message: alloc::string::String::from("window must hold at least one snapshot"),
        });
    }
    let cfg = model.config();
    let flat = cfg.variant == ModelVariant::GcnFlat;
    let mut tape = Tape::new(store);
    let look = |name: &str| store.lookup(name);

    // Graph-stage constants and parameter nodes.
    enum GraphIds {
        Tgcl {
            thetas: Vec<NodeId>,
            adj: Vec<(usize, NodeId)>, // (mode, normalized adjacency node)
            activation: Activation,
        },
        Itgcn {
            thetas: Vec<NodeId>, // [theta0, theta_mode0, ...]
            adj: Vec<NodeId>,
            activation: Activation,
        },
        Flat {
            theta0: NodeId,
            theta1: NodeId,
            a_flat: NodeId,
            activation: Activation,
        },
    }
    let graph_ids = match &model.graph {
        GraphLayer::Tgcl(p) => {
            let thetas: Vec<NodeId> = (0..p.thetas().len())
                .map(|i| look(&format!("tgcl.theta{i}")).map(|ix| tape.param_node(ix)))
                .collect::<Result<_>>()?;
            let adj = networked_modes(nets)
                .into_iter()
                .map(|m| {
                    let node =
                        tape.input(DenseTensor::from_matrix(nets[m].normalized()));
                    (m, node)
                })
                .collect();
            GraphIds::Tgcl {
                thetas,
                adj,
                activation: p.activation,
            }
        }
        GraphLayer::Itgcn(p) => {
            let thetas: Vec<NodeId> = (0..p.thetas().len())
                .map(|i| look(&format!("itgcn.theta{i}")).map(|ix| tape.param_node(ix)))
                .collect::<Result<_>>()?;
            let adj = nets
                .iter()
                .map(|n| tape.input(DenseTensor::from_matrix(n.normalized())))
                .collect();
            GraphIds::Itgcn {
                thetas,
                adj,
                activation: p.activation,
            }
        }
        GraphLayer::FlatGcn { activation, .. } => {
            let a = flatten_kronecker(nets)?;
            GraphIds::Flat {
                theta0: tape.param_node(look("gcn.theta0")?),
                theta1: tape.param_node(look("gcn.theta1")?),
                a_flat: tape.input(DenseTensor::from_matrix(&a)),
                activation: *activation,
            }
        }
    };

    // Cell parameter nodes.
    enum CellIds {
        Tlstm {
            factors: Vec<NodeId>,
            gates: Vec<GateIds>,
            cell_output: CellOutput,
            core: Vec<usize>,
            d_out: usize,
        },
        PerSeries {
            gates: Vec<GateIds>, // input/state hold exactly one id each
            cell_output: CellOutput,
            state_shape: Vec<usize>,
        },
        Shared {
            gates: Vec<GateIds>,
            cell_output: CellOutput,
            state_shape: Vec<usize>,
        },
    }
    let cell_ids = match &model.cell {
        RecurrentCell::Tlstm { factors, params } => {
            let factor_ids: Vec<NodeId> = (0..factors.mode_count())
                .map(|m| look(&format!("factor{m}")).map(|ix| tape.param_node(ix)))
                .collect::<Result<_>>()?;
            let mut gates = Vec::with_capacity(4);
            for gn in GATE_NAMES {
                let modes = params.core().len();
                let mut input = Vec::with_capacity(modes + 1);
                let mut state = Vec::with_capacity(modes + 1);
                for m in 0..=modes {
                    input.push(tape.param_node(look(&format!("cell.{gn}.z{m}"))?));
                    state.push(tape.param_node(look(&format!("cell.{gn}.y{m}"))?));
                }
                gates.push(GateIds {
                    input,
                    state,
                    bias: tape.param_node(look(&format!("cell.{gn}.b"))?),
                });
            }
            CellIds::Tlstm {
                factors: factor_ids,
                gates,
                cell_output: params.cell_output,
                core: params.core().to_vec(),
                d_out: params.d_out(),
            }
        }
        RecurrentCell::MLstm(p) => {
            let mut gates = Vec::with_capacity(4);
            for gn in GATE_NAMES {
                gates.push(GateIds {
                    input: alloc::vec![tape.param_node(look(&format!("cell.{gn}.z"))?)],
                    state: alloc::vec![tape.param_node(look(&format!("cell.{gn}.y"))?)],
                    bias: tape.param_node(look(&format!("cell.{gn}.b"))?),
                });
            }
            let mut state_shape = cfg.cell_dims();
            state_shape.push(p.d_out);
            CellIds::PerSeries {
                gates,
                cell_output: p.cell_output,
                state_shape,
            }
        }
        RecurrentCell::SingleLstm(p) => {
            let mut gates = Vec::with_capacity(4);
            for gn in GATE_NAMES {
                gates.push(GateIds {
                    input: alloc::vec![tape.param_node(look(&format!("cell.{gn}.z"))?)],
                    state: alloc::vec![tape.param_node(look(&format!("cell.{gn}.y"))?)],
                    bias: tape.param_node(look(&format!("cell.{gn}.b"))?),
                });
            }
            let mut state_shape = cfg.cell_dims();
            state_shape.push(p.d_out);
            CellIds::Shared {
                gates,
                cell_output: p.cell_output,
                state_shape,
            }
        }
    };
    let mlp_w = tape.param_node(look("mlp.w")?);
    let mlp_b = tape.param_node(look("mlp.b")?);

    let activation_node = |tape: &mut Tape, act: Activation, x: NodeId| match act {
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Identity => x,
    };
    let squash_node = |tape: &mut Tape, squash: CellOutput, x: NodeId| match squash {
        CellOutput::Logistic => tape.logistic(x),
        CellOutput::Tanh => tape.tanh(x),
    };

    // Initial cell state: zero constants.
    let (mut y_prev, mut c_prev) = {
        let shape = match &cell_ids {
            CellIds::Tlstm { core, d_out, .. } => {
                let mut s = core.clone();
                s.push(*d_out);
                s
            }
            CellIds::PerSeries { state_shape, .. } | CellIds::Shared { state_shape, .. } => {
                state_shape.clone()
            }
        };
        (
            tape.input(DenseTensor::zeros(&shape)),
            tape.input(DenseTensor::zeros(&shape)),
        )
    };

    let mut hz_pairs: Vec<(NodeId, NodeId)> = Vec::with_capacity(window.len());
    let mut pred = None;
    for snapshot in window {
        // Input node (with unit feature mode; vectorized for the flat graph).
        let x = if flat {
            tape.input(DenseTensor::new(
                alloc::vec![snapshot.len(), 1],
                snapshot.vectorize(),
            )?)
        } else {
            tape.input(snapshot.append_unit_mode())
        };
        let feature_mode = tape.value(x).order() - 1;

        // Graph stage.
        let h = match &graph_ids {
            GraphIds::Tgcl {
                thetas,
                adj,
                activation,
            } => {
                let k = adj.len();
                let mut out: Option<NodeId> = None;
                for p in IndicatorVector::enumerate(k) {
                    let mut term = x;
                    for (bit, (mode, adj_node)) in p.bits().iter().zip(adj.iter()) {
                        if *bit {
                            term = tape.mode_product(term, *adj_node, *mode, false)?;
                        }
                    }
                    term = tape.mode_product(term, thetas[p.index()], feature_mode, false)?;
                    out = Some(match out {
                        None => term,
                        Some(acc) => tape.add(acc, term),
                    });
                }
                activation_node(&mut tape, *activation, out.expect("at least one term"))
            }
            GraphIds::Itgcn {
                thetas,
                adj,
                activation,
            } => {
                let mut out = tape.mode_product(x, thetas[0], feature_mode, false)?;
                for (m, adj_node) in adj.iter().enumerate() {
                    let term = tape.mode_product(x, *adj_node, m, false)?;
                    let term = tape.mode_product(term, thetas[m + 1], feature_mode, false)?;
                    out = tape.add(out, term);
                }
                activation_node(&mut tape, *activation, out)
            }
            GraphIds::Flat {
                theta0,
                theta1,
                a_flat,
                activation,
            } => {
                let prop = tape.mode_product(x, *a_flat, 0, true)?;
                let prop = tape.mode_product(prop, *theta1, 1, false)?;
                let own = tape.mode_product(x, *theta0, 1, false)?;
                let sum = tape.add(prop, own);
                activation_node(&mut tape, *activation, sum)
            }
        };

        // Recurrence stage.
        let (z, y, c, r) = match &cell_ids {
            CellIds::Tlstm {
                factors,
                gates,
                cell_output,
                core,
                ..
            } => {
                let mut z = h;
                for (m, u) in factors.iter().enumerate() {
                    z = tape.mode_product(z, *u, m, true)?;
                }
                let modes = core.len();
                let preact = |tape: &mut Tape, g: &GateIds| -> Result<NodeId> {
                    let mut gi = z;
                    for m in 0..modes {
                        gi = tape.mode_product(gi, g.input[m], m, false)?;
                    }
                    gi = tape.mode_product(gi, g.input[modes], modes, false)?;
                    let mut gy = y_prev;
                    for m in 0..modes {
                        gy = tape.mode_product(gy, g.state[m], m, false)?;
                    }
                    gy = tape.mode_product(gy, g.state[modes], modes, false)?;
                    let sum = tape.add(gi, gy);
                    tape.add_bias_last(sum, g.bias)
                };
                let f_pre = preact(&mut tape, &gates[0])?;
                let i_pre = preact(&mut tape, &gates[1])?;
                let o_pre = preact(&mut tape, &gates[2])?;
                let c_pre = preact(&mut tape, &gates[3])?;
                let f = tape.logistic(f_pre);
                let i = tape.logistic(i_pre);
                let o = tape.logistic(o_pre);
                let c_tilde = tape.tanh(c_pre);
                let keep = tape.hadamard(f, c_prev);
                let write = tape.hadamard(i, c_tilde);
                let c = tape.add(keep, write);
                let squashed = squash_node(&mut tape, *cell_output, c);
                let y = tape.hadamard(o, squashed);
                let mut r = y;
                for (m, u) in factors.iter().enumerate() {
                    r = tape.mode_product(r, *u, m, false)?;
                }
                (z, y, c, r)
            }
            CellIds::PerSeries {
                gates,
                cell_output,
                state_shape,
            } => {
                let preact = |tape: &mut Tape, g: &GateIds| -> Result<NodeId> {
                    let gi = tape.per_series_linear(h, g.input[0])?;
                    let gy = tape.per_series_linear(y_prev, g.state[0])?;
                    let sum = tape.add(gi, gy);
                    let bias = tape.reshape(g.bias, state_shape)?;
                    Ok(tape.add(sum, bias))
                };
                let f_pre = preact(&mut tape, &gates[0])?;
                let i_pre = preact(&mut tape, &gates[1])?;
                let o_pre = preact(&mut tape, &gates[2])?;
                let c_pre = preact(&mut tape, &gates[3])?;
                let f = tape.logistic(f_pre);
                let i = tape.logistic(i_pre);
                let o = tape.logistic(o_pre);
                let c_tilde = tape.tanh(c_pre);
                let keep = tape.hadamard(f, c_prev);
                let write = tape.hadamard(i, c_tilde);
                let c = tape.add(keep, write);
                let squashed = squash_node(&mut tape, *cell_output, c);
                let y = tape.hadamard(o, squashed);
                (h, y, c, y)
            }
            CellIds::Shared {
                gates,
                cell_output,
                ..
            } => {
                let last = tape.value(h).order() - 1;
                let preact = |tape: &mut Tape, g: &GateIds| -> Result<NodeId> {
                    let gi = tape.mode_product(h, g.input[0], last, false)?;
                    let gy = tape.mode_product(y_prev, g.state[0], last, false)?;
                    let sum = tape.add(gi, gy);
                    tape.add_bias_last(sum, g.bias)
                };
                let f_pre = preact(&mut tape, &gates[0])?;
                let i_pre = preact(&mut tape, &gates[1])?;
                let o_pre = preact(&mut tape, &gates[2])?;
                let c_pre = preact(&mut tape, &gates[3])?;
                let f = tape.logistic(f_pre);
                let i = tape.logistic(i_pre);
                let o = tape.logistic(o_pre);
                let c_tilde = tape.tanh(c_pre);
                let keep = tape.hadamard(f, c_prev);
                let write = tape.hadamard(i, c_tilde);
                let c = tape.add(keep, write);
                let squashed = squash_node(&mut tape, *cell_output, c);
                let y = tape.hadamard(o, squashed);
                (h, y, c, y)
            }
        };
        y_prev = y;
        c_prev = c;
        hz_pairs.push((h, z));

        // Output head.
        let feat = tape.concat_last(h, r)?;
        let last = tape.value(feat).order() - 1;
        let proj = tape.mode_product(feat, mlp_w, last, false)?;
        pred = Some(tape.add_scalar_param(proj, mlp_b)?);
    }
    let pred = pred.expect("nonempty window");

    // Prediction term: masked squared error against the target.
    let (target_node, mask_node) = {
        let (t_tensor, m_tensor) = if flat {
            let t = DenseTensor::new(alloc::vec![target.len(), 1], target.vectorize())?;
            let mask_f =
                DenseTensor::from_fn(target.shape(), |idx| {
                    let mut flat_idx = 0usize;
                    for (&i, &d) in idx.iter().zip(target.shape().iter()) {
                        flat_idx = flat_idx * d + i;
                    }
                    if target_mask[flat_idx] {
                        1.0
                    } else {
                        0.0
                    }
                });
            let m = DenseTensor::new(alloc::vec![target.len(), 1], mask_f.vectorize())?;
            (t, m)
        } else {
            let t = target.append_unit_mode();
            let m = DenseTensor::new(
                {
                    let mut s = target.shape().to_vec();
                    s.push(1);
                    s
                },
                target_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            )?;
            (t, m)
        };
        (tape.input(t_tensor), tape.input(m_tensor))
    };
    let diff = tape.sub(pred, target_node);
    let masked = tape.hadamard(diff, mask_node);
    let mut loss = tape.sum_sq(masked);

    // Tucker reconstruction and orthonormality penalties.
    if let CellIds::Tlstm { factors, .. } = &cell_ids {
        let mut tucker: Option<NodeId> = None;
        for (h, z) in &hz_pairs {
            let mut recon = *z;
            for (m, u) in factors.iter().enumerate() {
                recon = tape.mode_product(recon, *u, m, false)?;
            }
            let diff = tape.sub(*h, recon);
            let term = tape.sum_sq(diff);
            tucker = Some(match tucker {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        if let Some(t) = tucker {
            let scaled = tape.scale(t, mu1);
            loss = tape.add(loss, scaled);
        }
        let mut ortho: Option<NodeId> = None;
        for u in factors {
            let rows = tape.value(*u).shape()[0];
            let gram = tape.mode_product(*u, *u, 1, true)?;
            let eye = tape.input(DenseTensor::from_matrix(&Matrix::identity(rows)));
            let diff = tape.sub(gram, eye);
            let term = tape.sum_sq(diff);
            ortho = Some(match ortho {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        if let Some(o) = ortho {
            let scaled = tape.scale(o, mu2);
            loss = tape.add(loss, scaled);
        }
    }

    Ok(TapedWindow { tape, loss, pred })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, loss as pure_loss, Net3Config};
    use crate::rng::SeededRng;
    use crate::trnn::CellOutput;

    fn random_adjacency(n: usize, rng: &mut SeededRng) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for r in 0..n {
            for c in (r + 1)..n {
                let v = rng.uniform();
                a.set(r, c, v);
                a.set(c, r, v);
            }
        }
        a
    }

    #[test]
    fn taped_forward_matches_pure_forward_exactly() {
        let mut rng = SeededRng::new(41);
        let nets = alloc::vec![
            ModeNetwork::new(random_adjacency(3, &mut rng)).unwrap(),
            ModeNetwork::new(random_adjacency(2, &mut rng)).unwrap(),
        ];
        for variant in [
            ModelVariant::Net3,
            ModelVariant::Itgcn,
            ModelVariant::MLstm,
            ModelVariant::SingleLstm,
        ] {
            let cfg = Net3Config {
                dims: alloc::vec![3, 2],
                d: 3,
                d_out: 2,
                rho: 0.7,
                activation: Activation::Tanh,
                cell_output: CellOutput::Logistic,
                variant,
            };
            let model = Net3Params::init(&cfg, &nets, 9).unwrap();
            let store = ParamStore::from_model(&model);
            let window: Vec<DenseTensor> = (0..3)
                .map(|_| DenseTensor::from_fn(&[3, 2], |_| rng.normal()))
                .collect();
            let target = DenseTensor::from_fn(&[3, 2], |_| rng.normal());
            let mask = alloc::vec![true; 6];

            let taped =
                build_window_loss(&store, &model, &nets, &window, &target, &mask, 1e-3, 1e-3)
                    .unwrap();
            let trace = forward(&window, &nets, &model).unwrap();
            let taped_pred = taped.tape.value(taped.pred).squeeze_last().unwrap();
            assert_eq!(
                taped_pred.data(),
                trace.last_pred().data(),
                "variant {variant:?} prediction mismatch"
            );
            let pure = pure_loss(&trace, &target, Some(&mask), &model, 1e-3, 1e-3).unwrap();
            assert_eq!(
                taped.tape.scalar(taped.loss),
                pure.total(),
                "variant {variant:?} loss mismatch"
            );
        }
    }

    #[test]
    fn taped_flat_variant_matches_pure_within_rounding() {
        let mut rng = SeededRng::new(42);
        let nets = alloc::vec![
            ModeNetwork::new(random_adjacency(3, &mut rng)).unwrap(),
            ModeNetwork::new(random_adjacency(2, &mut rng)).unwrap(),
        ];
        let cfg = Net3Config {
            dims: alloc::vec![3, 2],
            d: 3,
            d_out: 2,
            rho: 0.5,
            activation: Activation::Tanh,
            cell_output: CellOutput::Logistic,
            variant: ModelVariant::GcnFlat,
        };
        let model = Net3Params::init(&cfg, &nets, 10).unwrap();
        let store = ParamStore::from_model(&model);
        let window: Vec<DenseTensor> = (0..2)
            .map(|_| DenseTensor::from_fn(&[3, 2], |_| rng.normal()))
            .collect();
        let target = DenseTensor::from_fn(&[3, 2], |_| rng.normal());
        let mask = alloc::vec![true; 6];
        let taped =
            build_window_loss(&store, &model, &nets, &window, &target, &mask, 1e-3, 1e-3).unwrap();
        let trace = forward(&window, &nets, &model).unwrap();
        // the taped route stays in vectorized space; compare after mapping back
        let taped_pred = DenseTensor::from_vectorized(
            &[3, 2],
            taped.tape.value(taped.pred).data(),
        )
        .unwrap();
        assert!(taped_pred.max_abs_diff(trace.last_pred()) < 1e-12);
        let pure = pure_loss(&trace, &target, Some(&mask), &model, 1e-3, 1e-3).unwrap();
        assert!((taped.tape.scalar(taped.loss) - pure.total()).abs() < 1e-12);
    }
}
