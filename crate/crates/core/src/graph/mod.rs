//! Directed acyclic operator graph with reverse-mode gradient accumulation.
//!
//! Graphs mix three node kinds: input leaves (bound per evaluation), parameter
//! leaves (owned values, optionally trainable) and operator applications. An
//! operator contributes a forward rule and one vector-Jacobian product per
//! input slot; parameters enter operators as ordinary inputs, so a single vjp
//! interface covers both input gradients and parameter gradients. Fixed
//! operators still provide input vjps — that is what lets trainable layers
//! upstream of a projector or Fourier transform receive signal.
//!
//! Evaluation is deterministic: nodes are stored in topological (insertion)
//! order, the backward pass walks the exact reverse order, and cotangents
//! accumulate in input-slot order.

pub mod gradcheck;
pub mod ops;

pub use gradcheck::{gradcheck, GradCheckConfig, GradCheckReport};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde_json::json;
use std::collections::HashMap;
use std::fmt;

/// Handle to a graph node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// A differentiable operator embedded in a graph.
///
/// `vjp` maps the cotangent at the output to the cotangent contribution for
/// one input slot. For a linear operator this is exactly the adjoint.
pub trait GraphOp: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;

    fn vjp(
        &self,
        input_index: usize,
        inputs: &[&Tensor],
        output: &Tensor,
        cotangent: &Tensor,
    ) -> Result<Tensor>;

    /// Serializable operator description (for experiment reproducibility).
    fn describe(&self) -> serde_json::Value {
        json!({ "op": self.name() })
    }
}

enum NodeKind {
    Input { name: String },
    Param { name: String, value: Tensor, trainable: bool },
    Op { op: Box<dyn GraphOp>, inputs: Vec<NodeId> },
}

pub struct Graph {
    nodes: Vec<NodeKind>,
    output: Option<NodeId>,
    /// Bumped on any mutation; tapes remember the epoch they were built at.
    epoch: u64,
}

/// Cached forward values, one per node, in topological order.
pub struct Tape {
    values: Vec<Tensor>,
    epoch: u64,
}

impl Tape {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn output_of(&self, graph: &Graph) -> Result<&Tensor> {
        let out = graph.output.ok_or_else(|| Error::State("graph has no output".into()))?;
        Ok(&self.values[out.0])
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), output: None, epoch: 0 }
    }

    pub fn add_input(&mut self, name: impl Into<String>) -> NodeId {
        self.epoch += 1;
        self.nodes.push(NodeKind::Input { name: name.into() });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_param(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        trainable: bool,
    ) -> NodeId {
        self.epoch += 1;
        self.nodes.push(NodeKind::Param { name: name.into(), value, trainable });
        NodeId(self.nodes.len() - 1)
    }

    /// Append an operator node. Inputs must already exist, which keeps the
    /// graph acyclic by construction.
    pub fn apply(
        &mut self,
        op: impl GraphOp + 'static,
        inputs: &[NodeId],
    ) -> Result<NodeId> {
        for id in inputs {
            if id.0 >= self.nodes.len() {
                return Err(Error::arg(format!("input node {} does not exist", id.0)));
            }
        }
        self.epoch += 1;
        self.nodes.push(NodeKind::Op { op: Box::new(op), inputs: inputs.to_vec() });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.epoch += 1;
        self.output = Some(id);
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param_value(&self, id: NodeId) -> Result<&Tensor> {
        match self.nodes.get(id.0) {
            Some(NodeKind::Param { value, .. }) => Ok(value),
            _ => Err(Error::arg(format!("node {} is not a parameter", id.0))),
        }
    }

    pub fn set_param(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        match self.nodes.get_mut(id.0) {
            Some(NodeKind::Param { value: v, .. }) => {
                if v.shape() != value.shape() {
                    return Err(Error::shape(format!(
                        "parameter {} has shape {:?}, new value {:?}",
                        id.0,
                        v.shape(),
                        value.shape()
                    )));
                }
                *v = value;
                self.epoch += 1;
                Ok(())
            }
            _ => Err(Error::arg(format!("node {} is not a parameter", id.0))),
        }
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        match &self.nodes[id.0] {
            NodeKind::Input { name } => name,
            NodeKind::Param { name, .. } => name,
            NodeKind::Op { op, .. } => op.name(),
        }
    }

    /// Ids of trainable parameter leaves, in insertion order.
    pub fn trainable_params(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n {
                NodeKind::Param { trainable: true, .. } => Some(NodeId(i)),
                _ => None,
            })
            .collect()
    }

    /// Total number of trainable scalars.
    pub fn trainable_scalar_count(&self) -> usize {
        self.trainable_params()
            .iter()
            .map(|id| self.param_value(*id).map(|t| t.len()).unwrap_or(0))
            .sum()
    }

    /// Deterministic forward evaluation; caches every node value for backward.
    pub fn forward(&self, bindings: &[(NodeId, Tensor)]) -> Result<Tape> {
        let mut values: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let value = match node {
                NodeKind::Input { name } => bindings
                    .iter()
                    .find(|(id, _)| id.0 == i)
                    .map(|(_, t)| t.clone())
                    .ok_or_else(|| Error::arg(format!("input leaf '{name}' (node {i}) unbound")))?,
                NodeKind::Param { value, .. } => value.clone(),
                NodeKind::Op { op, inputs } => {
                    let args: Vec<&Tensor> =
                        inputs.iter().map(|id| values[id.0].as_ref().unwrap()).collect();
                    op.forward(&args).map_err(|e| {
                        Error::arg(format!("node {i} ({}): {e}", op.name()))
                    })?
                }
            };
            values[i] = Some(value);
        }
        Ok(Tape { values: values.into_iter().map(Option::unwrap).collect(), epoch: self.epoch })
    }

    /// Nodes that (transitively) depend on a trainable parameter.
    fn depends_on_trainable(&self) -> Vec<bool> {
        let mut dep = vec![false; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            dep[i] = match node {
                NodeKind::Param { trainable, .. } => *trainable,
                NodeKind::Input { .. } => false,
                NodeKind::Op { inputs, .. } => inputs.iter().any(|id| dep[id.0]),
            };
        }
        dep
    }

    /// Reverse-mode gradient accumulation from a loss cotangent at the output.
    ///
    /// Returns the gradient for every trainable leaf. The tape must come from
    /// a forward pass at the current graph epoch (no parameter updates in
    /// between).
    pub fn backward(
        &self,
        tape: &Tape,
        loss_grad: &Tensor,
    ) -> Result<HashMap<NodeId, Tensor>> {
        if tape.epoch != self.epoch {
            return Err(Error::State(
                "tape is stale: graph or parameters changed since forward".into(),
            ));
        }
        let out = self.output.ok_or_else(|| Error::State("graph has no output".into()))?;
        if tape.values[out.0].shape() != loss_grad.shape() {
            return Err(Error::shape(format!(
                "loss gradient shape {:?} does not match output shape {:?}",
                loss_grad.shape(),
                tape.values[out.0].shape()
            )));
        }
        let dep = self.depends_on_trainable();
        let mut cotangents: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        cotangents[out.0] = Some(loss_grad.clone());

        for i in (0..self.nodes.len()).rev() {
            let Some(cot) = cotangents[i].take() else { continue };
            if let NodeKind::Op { op, inputs } = &self.nodes[i] {
                let args: Vec<&Tensor> = inputs.iter().map(|id| tape.value(*id)).collect();
                for (slot, id) in inputs.iter().enumerate() {
                    if !dep[id.0] {
                        continue;
                    }
                    let contrib = op
                        .vjp(slot, &args, &tape.values[i], &cot)
                        .map_err(|e| Error::State(format!("vjp of node {i} ({}): {e}", op.name())))?;
                    cotangents[id.0] = Some(match cotangents[id.0].take() {
                        Some(acc) => acc.add(&contrib)?,
                        None => contrib,
                    });
                }
            } else {
                cotangents[i] = Some(cot);
            }
        }

        let mut grads = HashMap::new();
        for id in self.trainable_params() {
            let g = match cotangents[id.0].take() {
                Some(g) => g,
                None => Tensor::zeros(self.param_value(id)?.shape().to_vec()),
            };
            grads.insert(id, g);
        }
        Ok(grads)
    }

    /// JSON description of the graph structure (node kinds, edges, shapes).
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| match n {
                NodeKind::Input { name } => json!({"id": i, "kind": "input", "name": name}),
                NodeKind::Param { name, value, trainable } => json!({
                    "id": i, "kind": "param", "name": name,
                    "shape": value.shape(), "trainable": trainable,
                }),
                NodeKind::Op { op, inputs } => json!({
                    "id": i, "kind": "op", "op": op.describe(),
                    "inputs": inputs.iter().map(|x| x.0).collect::<Vec<_>>(),
                }),
            })
            .collect();
        json!({ "nodes": nodes, "output": self.output.map(|o| o.0) })
    }
}

#[cfg(test)]
mod tests {
    use super::ops::{MseLoss, MulOp, ReluOp};
    use super::*;

    #[test]
    fn relu_of_weighted_input() {
        // relu(w * x), w = 2, x = [-1, 3] -> [0, 6]
        let mut g = Graph::new();
        let x = g.add_input("x");
        let w = g.add_param("w", Tensor::from_vec([2], vec![2.0, 2.0]).unwrap(), true);
        let prod = g.apply(MulOp, &[w, x]).unwrap();
        let out = g.apply(ReluOp, &[prod]).unwrap();
        g.set_output(out);
        let tape = g
            .forward(&[(x, Tensor::from_vec([2], vec![-1.0, 3.0]).unwrap())])
            .unwrap();
        assert_eq!(tape.output_of(&g).unwrap().real(), &[0.0, 6.0]);
    }

    #[test]
    fn identity_chain_passes_through() {
        #[derive(Debug)]
        struct Identity;
        impl GraphOp for Identity {
            fn name(&self) -> &'static str {
                "identity"
            }
            fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
                Ok(inputs[0].clone())
            }
            fn vjp(&self, _: usize, _: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
                Ok(cot.clone())
            }
        }
        let mut g = Graph::new();
        let x = g.add_input("x");
        let a = g.apply(Identity, &[x]).unwrap();
        let b = g.apply(Identity, &[a]).unwrap();
        let c = g.apply(Identity, &[b]).unwrap();
        g.set_output(c);
        let v = Tensor::from_vec([3], vec![1.0, -2.0, 0.5]).unwrap();
        let tape = g.forward(&[(x, v.clone())]).unwrap();
        assert_eq!(tape.output_of(&g).unwrap(), &v);
    }

    #[test]
    fn scalar_quadratic_gradient() {
        // loss = (w*x - t)^2 with x = 1, t = 0, w = 3 -> dloss/dw = 2*w = 6
        let mut g = Graph::new();
        let x = g.add_input("x");
        let t = g.add_input("t");
        let w = g.add_param("w", Tensor::from_vec([1], vec![3.0]).unwrap(), true);
        let wx = g.apply(MulOp, &[w, x]).unwrap();
        let loss = g.apply(MseLoss, &[wx, t]).unwrap();
        g.set_output(loss);
        let tape = g
            .forward(&[(x, Tensor::scalar(1.0)), (t, Tensor::scalar(0.0))])
            .unwrap();
        let grads = g.backward(&tape, &Tensor::scalar(1.0)).unwrap();
        assert!((grads[&w].real()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let mut g = Graph::new();
        let x = g.add_input("x");
        let w = g.add_param("w", Tensor::from_vec([1], vec![2.0]).unwrap(), true);
        let wx = g.apply(MulOp, &[w, x]).unwrap();
        let r = g.apply(ReluOp, &[wx]).unwrap();
        g.set_output(r);
        let tape = g.forward(&[(x, Tensor::scalar(-1.0))]).unwrap();
        let grads = g.backward(&tape, &Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads[&w].real()[0], 0.0);
    }

    #[test]
    fn unbound_input_is_an_error() {
        let mut g = Graph::new();
        let x = g.add_input("x");
        let r = g.apply(ReluOp, &[x]).unwrap();
        g.set_output(r);
        assert!(g.forward(&[]).is_err());
    }

    #[test]
    fn stale_tape_rejected() {
        let mut g = Graph::new();
        let x = g.add_input("x");
        let w = g.add_param("w", Tensor::scalar(1.0), true);
        let wx = g.apply(MulOp, &[w, x]).unwrap();
        g.set_output(wx);
        let tape = g.forward(&[(x, Tensor::scalar(2.0))]).unwrap();
        g.set_param(w, Tensor::scalar(5.0)).unwrap();
        assert!(matches!(g.backward(&tape, &Tensor::scalar(1.0)), Err(Error::State(_))));
    }

    #[test]
    fn backward_is_bit_deterministic() {
        let mut g = Graph::new();
        let x = g.add_input("x");
        let w = g.add_param(
            "w",
            Tensor::from_vec([64], (0..64).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap(),
            true,
        );
        let wx = g.apply(MulOp, &[w, x]).unwrap();
        let r = g.apply(ReluOp, &[wx]).unwrap();
        let t = g.add_input("t");
        let loss = g.apply(MseLoss, &[r, t]).unwrap();
        g.set_output(loss);
        let xv = Tensor::from_vec([64], (0..64).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        let tv = Tensor::from_vec([64], vec![0.25; 64]).unwrap();
        let run = |g: &Graph| {
            let tape = g.forward(&[(x, xv.clone()), (t, tv.clone())]).unwrap();
            let grads = g.backward(&tape, &Tensor::scalar(1.0)).unwrap();
            grads[&w].real().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(&g), run(&g));
    }

    #[test]
    fn graph_serializes_to_json() {
        let mut g = Graph::new();
        let x = g.add_input("x");
        let w = g.add_param("w", Tensor::scalar(1.0), true);
        let wx = g.apply(MulOp, &[w, x]).unwrap();
        g.set_output(wx);
        let j = g.to_json();
        assert_eq!(j["nodes"].as_array().unwrap().len(), 3);
        assert_eq!(j["output"], 2);
        assert_eq!(j["nodes"][1]["trainable"], true);
    }
}
