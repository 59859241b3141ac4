//! Losses, optimizers, metrics, and the shared train/eval loop.

pub mod metrics;

use crate::error::{Error, Result};
use crate::exec;
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;
use std::collections::HashMap;

/// Standalone mean-squared-error: value plus gradient seed w.r.t. `pred`.
pub fn loss_mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "loss_mse shapes {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let diff = pred.sub(target)?;
    let d = diff.real();
    let sq: Vec<f64> = d.iter().map(|&v| v * v).collect();
    let value = exec::sum(&sq) / d.len() as f64;
    let grad = diff.scale(2.0 / d.len() as f64);
    Ok((value, grad))
}

/// Standalone soft Dice loss (epsilon-smoothed).
pub fn loss_dice(pred: &Tensor, mask: &Tensor) -> Result<f64> {
    crate::graph::ops::DiceLoss::default()
        .forward(&[pred, mask])
        .and_then(|t| t.scalar_value())
}

use crate::graph::GraphOp as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimKind {
    Sgd,
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

#[derive(Debug, Clone, Default)]
struct ParamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First-order optimizer over a graph's trainable parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimKind,
    pub learning_rate: f64,
    step: u64,
    state: HashMap<NodeId, ParamState>,
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer { kind: OptimKind::Sgd, learning_rate, step: 0, state: HashMap::new() }
    }

    pub fn sgd_momentum(learning_rate: f64, momentum: f64) -> Self {
        Optimizer {
            kind: OptimKind::SgdMomentum { momentum },
            learning_rate,
            step: 0,
            state: HashMap::new(),
        }
    }

    /// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
    pub fn adam(learning_rate: f64) -> Self {
        Optimizer {
            kind: OptimKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 },
            learning_rate,
            step: 0,
            state: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update from accumulated gradients.
    pub fn step(&mut self, graph: &mut Graph, grads: &HashMap<NodeId, Tensor>) -> Result<()> {
        self.step += 1;
        let mut ids: Vec<NodeId> = grads.keys().copied().collect();
        ids.sort(); // deterministic parameter order
        for id in ids {
            let g = grads[&id].try_real()?.to_vec();
            let theta = graph.param_value(id)?.clone();
            let mut p = theta.real().to_vec();
            if p.len() != g.len() {
                return Err(Error::shape("gradient/parameter length mismatch"));
            }
            let st = self.state.entry(id).or_insert_with(|| ParamState {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
            });
            match self.kind {
                OptimKind::Sgd => {
                    for i in 0..p.len() {
                        p[i] -= self.learning_rate * g[i];
                    }
                }
                OptimKind::SgdMomentum { momentum } => {
                    for i in 0..p.len() {
                        st.m[i] = momentum * st.m[i] + g[i];
                        p[i] -= self.learning_rate * st.m[i];
                    }
                }
                OptimKind::Adam { beta1, beta2, epsilon } => {
                    let t = self.step as f64;
                    let bc1 = 1.0 - beta1.powf(t);
                    let bc2 = 1.0 - beta2.powf(t);
                    for i in 0..p.len() {
                        st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
                        st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
                        let mh = st.m[i] / bc1;
                        let vh = st.v[i] / bc2;
                        p[i] -= self.learning_rate * mh / (vh.sqrt() + epsilon);
                    }
                }
            }
            graph.set_param(id, Tensor::from_vec(theta.shape().to_vec(), p)?)?;
        }
        Ok(())
    }
}

/// One training example: bindings for every input leaf of the loss graph.
pub struct TrainItem {
    pub bindings: Vec<(NodeId, Tensor)>,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    /// Parameter snapshot with the best validation loss, also restored into
    /// the graph on return.
    pub best_params: HashMap<NodeId, Tensor>,
    pub best_val: f64,
    pub best_epoch: usize,
}

fn mean_loss(graph: &Graph, items: &[TrainItem]) -> Result<f64> {
    let losses = exec::map_collect(items.len(), |i| -> Result<f64> {
        let tape = graph.forward(&items[i].bindings)?;
        tape.output_of(graph)?.scalar_value()
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / items.len().max(1) as f64)
}

fn snapshot(graph: &Graph) -> HashMap<NodeId, Tensor> {
    graph
        .trainable_params()
        .into_iter()
        .map(|id| (id, graph.param_value(id).unwrap().clone()))
        .collect()
}

fn restore(graph: &mut Graph, params: &HashMap<NodeId, Tensor>) -> Result<()> {
    let mut ids: Vec<NodeId> = params.keys().copied().collect();
    ids.sort();
    for id in ids {
        graph.set_param(id, params[&id].clone())?;
    }
    Ok(())
}

/// Full-batch training of a scalar-loss graph.
///
/// Per epoch: accumulate gradients over all items, take one optimizer step,
/// then log train/validation loss. The best validation checkpoint is kept and
/// restored at the end. A non-finite loss aborts with a numerical error after
/// restoring the last good checkpoint.
pub fn train_loop(
    graph: &mut Graph,
    train: &[TrainItem],
    val: &[TrainItem],
    optimizer: &mut Optimizer,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if graph.trainable_params().is_empty() {
        return Err(Error::arg("train_loop needs trainable parameters"));
    }
    if train.is_empty() {
        return Err(Error::arg("empty training set"));
    }
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best_params = snapshot(graph);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;

    for epoch in 0..cfg.epochs {
        // Accumulate gradients over the batch (ordered reduction).
        let results = exec::map_collect(train.len(), |i| -> Result<(f64, HashMap<NodeId, Tensor>)> {
            let tape = graph.forward(&train[i].bindings)?;
            let loss = tape.output_of(graph)?.scalar_value()?;
            let grads = graph.backward(&tape, &Tensor::scalar(1.0))?;
            Ok((loss, grads))
        });
        let mut train_loss = 0.0;
        let mut total: HashMap<NodeId, Tensor> = HashMap::new();
        for r in results {
            let (loss, grads) = r?;
            train_loss += loss;
            let mut ids: Vec<NodeId> = grads.keys().copied().collect();
            ids.sort();
            for id in ids {
                let g = &grads[&id];
                total
                    .entry(id)
                    .and_modify(|acc| *acc = acc.add(g).expect("gradient shapes agree"))
                    .or_insert_with(|| g.clone());
            }
        }
        train_loss /= train.len() as f64;
        if !train_loss.is_finite() {
            restore(graph, &best_params)?;
            return Err(Error::Numerical(format!(
                "training diverged at epoch {epoch}; best checkpoint (epoch {best_epoch}) restored"
            )));
        }
        let scale = 1.0 / train.len() as f64;
        let mean_grads: HashMap<NodeId, Tensor> =
            total.into_iter().map(|(id, g)| (id, g.scale(scale))).collect();
        optimizer.step(graph, &mean_grads)?;

        let val_loss = if val.is_empty() { train_loss } else { mean_loss(graph, val)? };
        if !val_loss.is_finite() {
            restore(graph, &best_params)?;
            return Err(Error::Numerical(format!(
                "validation loss diverged at epoch {epoch}; best checkpoint restored"
            )));
        }
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = snapshot(graph);
        }
        records.push(EpochRecord { epoch, train_loss, val_loss });
    }
    restore(graph, &best_params)?;
    Ok(TrainOutcome { records, best_params, best_val, best_epoch })
}

/// Render epoch records as the metrics CSV rows shared by all experiments.
pub fn records_to_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,split,loss\n");
    for r in records {
        out.push_str(&format!("{},train,{}\n", r.epoch, r.train_loss));
        out.push_str(&format!("{},val,{}\n", r.epoch, r.val_loss));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ops::{DenseBiasOp, MseLoss};
    use crate::rng::SeededRng;

    #[test]
    fn mse_constant_offset() {
        let a = Tensor::filled([8], 3.0);
        let b = Tensor::filled([8], 1.0);
        let (v, _) = loss_mse(&a, &b).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
        let (z, _) = loss_mse(&a, &a).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn mse_gradient_seed_matches_finite_differences() {
        let mut rng = SeededRng::new(2);
        let p: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let t: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let pt = Tensor::from_vec([16], p.clone()).unwrap();
        let tt = Tensor::from_vec([16], t).unwrap();
        let (_, grad) = loss_mse(&pt, &tt).unwrap();
        let h = 1e-6;
        for i in 0..16 {
            let mut plus = p.clone();
            plus[i] += h;
            let mut minus = p.clone();
            minus[i] -= h;
            let (vp, _) = loss_mse(&Tensor::from_vec([16], plus).unwrap(), &tt).unwrap();
            let (vm, _) = loss_mse(&Tensor::from_vec([16], minus).unwrap(), &tt).unwrap();
            let fd = (vp - vm) / (2.0 * h);
            assert!((fd - grad.real()[i]).abs() < 1e-6);
        }
    }

    fn least_squares_graph() -> (Graph, Vec<TrainItem>, NodeId) {
        // Fit y = 2x - 1 with a 1-unit dense layer: analytic optimum w = [2, -1].
        let mut g = Graph::new();
        let x = g.add_input("x");
        let t = g.add_input("t");
        let w = g.add_param("w", Tensor::from_vec([1, 2], vec![0.0, 0.0]).unwrap(), true);
        let y = g.apply(DenseBiasOp, &[x, w]).unwrap();
        let loss = g.apply(MseLoss, &[y, t]).unwrap();
        g.set_output(loss);
        let xs: Vec<f64> = (0..9).map(|i| -1.0 + 0.25 * i as f64).collect();
        let ts: Vec<f64> = xs.iter().map(|&v| 2.0 * v - 1.0).collect();
        let item = TrainItem {
            bindings: vec![
                (x, Tensor::from_vec([9, 1], xs).unwrap()),
                (t, Tensor::from_vec([9, 1], ts).unwrap()),
            ],
        };
        (g, vec![item], w)
    }

    #[test]
    fn quadratic_toy_converges_to_analytic_optimum() {
        let (mut g, items, w) = least_squares_graph();
        let mut opt = Optimizer::adam(0.05);
        let out =
            train_loop(&mut g, &items, &[], &mut opt, &TrainConfig { epochs: 800 }).unwrap();
        assert!(out.best_val < 1e-9, "val {}", out.best_val);
        let wv = g.param_value(w).unwrap().real().to_vec();
        assert!((wv[0] - 2.0).abs() < 1e-4 && (wv[1] + 1.0).abs() < 1e-4, "{wv:?}");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (mut g, items, w) = least_squares_graph();
        g.set_param(w, Tensor::from_vec([1, 2], vec![0.3, -0.2]).unwrap()).unwrap();
        let before = g.param_value(w).unwrap().clone();
        let mut opt = Optimizer::sgd(0.0);
        train_loop(&mut g, &items, &[], &mut opt, &TrainConfig { epochs: 5 }).unwrap();
        assert_eq!(g.param_value(w).unwrap(), &before);
    }

    #[test]
    fn fixed_seed_reproduces_loss_trajectory() {
        let run = || {
            let (mut g, items, _) = least_squares_graph();
            let mut opt = Optimizer::adam(0.01);
            let out =
                train_loop(&mut g, &items, &[], &mut opt, &TrainConfig { epochs: 20 }).unwrap();
            out.records.iter().map(|r| r.train_loss.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut g = Graph::new();
        let w = g.add_param("w", Tensor::from_vec([3], vec![1.0, -2.0, 0.5]).unwrap(), true);
        let zero_grad: HashMap<NodeId, Tensor> =
            [(w, Tensor::zeros([3]))].into_iter().collect();

        let mut sgd = Optimizer::sgd(0.1);
        sgd.step(&mut g, &zero_grad).unwrap();
        assert_eq!(g.param_value(w).unwrap().real(), &[1.0, -2.0, 0.5]);

        let mut adam = Optimizer::adam(0.1);
        adam.step(&mut g, &zero_grad).unwrap();
        for (a, b) in g.param_value(w).unwrap().real().iter().zip(&[1.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_matches_hand_rolled_update() {
        let mut g = Graph::new();
        let w = g.add_param("w", Tensor::from_vec([1], vec![1.0]).unwrap(), true);
        let grad: HashMap<NodeId, Tensor> =
            [(w, Tensor::from_vec([1], vec![0.5]).unwrap())].into_iter().collect();
        let mut opt = Optimizer::sgd_momentum(0.1, 0.9);
        opt.step(&mut g, &grad).unwrap();
        // m = 0.5, w = 1 - 0.05
        assert!((g.param_value(w).unwrap().real()[0] - 0.95).abs() < 1e-15);
        opt.step(&mut g, &grad).unwrap();
        // m = 0.9*0.5 + 0.5 = 0.95, w = 0.95 - 0.095
        assert!((g.param_value(w).unwrap().real()[0] - 0.855).abs() < 1e-15);
    }
}
