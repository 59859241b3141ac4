//! Graph assembly for the multiscale vesselness network.

use super::{Conv2dReflectOp, EigOp, Polarity, ScaleBank, VesselnessOp};
use crate::error::Result;
use crate::graph::ops::{NormalizeOp, ScaleMaxOp, ScaleOp};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Output-head description; `trainable_bc` adds beta and c as two trainable
/// scalars to the parameter count.
#[derive(Debug, Clone, Copy)]
pub struct FrangiHead {
    pub beta: f64,
    pub polarity: Polarity,
    pub trainable_bc: bool,
}

impl Default for FrangiHead {
    fn default() -> Self {
        FrangiHead { beta: 0.5, polarity: Polarity::Dark, trainable_bc: false }
    }
}

/// Exact count of trainable scalars in a network built from `bank` and `head`.
pub fn frangi_param_count(bank: &ScaleBank, head: &FrangiHead) -> usize {
    bank.parameter_count() + if head.trainable_bc { 2 } else { 0 }
}

/// The assembled network with handles to its leaves.
pub struct FrangiNet {
    pub graph: Graph,
    /// Image input leaf.
    pub input: NodeId,
    /// Per-image structureness parameter `c` (one-element input leaf).
    pub c_input: NodeId,
    /// Kernel parameter leaves, three per scale (xx, xy, yy).
    pub kernel_params: Vec<NodeId>,
    /// Vesselness map output (max over scales).
    pub output: NodeId,
}

/// Build the network: normalize -> per-scale Hessian convolutions (sigma^2
/// normalized) -> eigenvalues -> vesselness -> max over scales.
///
/// The structureness parameter `c` is image-dependent, so it enters as an
/// input leaf; compute it per image with [`super::auto_c`] on the normalized
/// image under the initial bank (it is treated as a constant of the image,
/// not a gradient path).
pub fn frangi_net(bank: &ScaleBank, head: &FrangiHead) -> Result<FrangiNet> {
    let mut graph = Graph::new();
    let input = graph.add_input("image");
    let c_input = graph.add_input("structureness_c");
    let normalized = graph.apply(NormalizeOp::default(), &[input])?;

    let mut kernel_params = Vec::with_capacity(bank.n_scales() * 3);
    let mut per_scale = Vec::with_capacity(bank.n_scales());
    for (s, kernels) in bank.kernels.iter().enumerate() {
        let sigma = bank.sigmas[s];
        let mut channels = Vec::with_capacity(3);
        for (kernel, tag) in kernels.iter().zip(["xx", "xy", "yy"]) {
            let p = graph.add_param(
                format!("kernel_s{s}_{tag}"),
                kernel.clone(),
                bank.trainable,
            );
            kernel_params.push(p);
            let conv = graph.apply(Conv2dReflectOp, &[normalized, p])?;
            let scaled = graph.apply(ScaleOp(sigma * sigma), &[conv])?;
            channels.push(scaled);
        }
        let l1 = graph.apply(EigOp { which: 0 }, &[channels[0], channels[1], channels[2]])?;
        let l2 = graph.apply(EigOp { which: 1 }, &[channels[0], channels[1], channels[2]])?;
        let v = graph.apply(
            VesselnessOp { beta: head.beta, polarity: head.polarity },
            &[l1, l2, c_input],
        )?;
        per_scale.push(v);
    }
    let output = graph.apply(ScaleMaxOp, &per_scale)?;
    graph.set_output(output);
    Ok(FrangiNet { graph, input, c_input, kernel_params, output })
}

impl FrangiNet {
    /// Evaluate the vesselness map for one image with a given `c`.
    pub fn response(&self, img: &Tensor, c: f64) -> Result<Tensor> {
        let tape = self
            .graph
            .forward(&[(self.input, img.clone()), (self.c_input, Tensor::scalar(c))])?;
        Ok(tape.value(self.output).clone())
    }
}
