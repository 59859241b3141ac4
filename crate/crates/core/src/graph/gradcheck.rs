//! Gradient verification against central finite differences.
//!
//! Works on any graph with a scalar output: for each trainable parameter a
//! deterministic sample of coordinates is perturbed by an adaptive step and
//! the reverse-mode gradient is compared to the two-sided difference quotient.

use super::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Relative step: h = rel_step * (1 + |theta|).
    pub rel_step: f64,
    /// Max relative discrepancy accepted per coordinate.
    pub tolerance: f64,
    /// Cap on coordinates checked per parameter (sampled deterministically).
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { rel_step: 1e-5, tolerance: 1e-3, max_coords_per_param: 24, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub node: NodeId,
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "gradcheck: {} (max rel err {:.3e}, tol {:.1e})\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.max_rel_err,
            self.tolerance
        );
        for p in &self.params {
            s.push_str(&format!(
                "  {:<24} coords {:>4}  max rel err {:.3e}\n",
                p.name, p.coords_checked, p.max_rel_err
            ));
        }
        s
    }
}

fn rel_discrepancy(ad: f64, fd: f64) -> f64 {
    let denom = ad.abs().max(fd.abs());
    if denom < 1e-7 {
        // Both effectively zero.
        (ad - fd).abs()
    } else {
        (ad - fd).abs() / denom
    }
}

/// Compare reverse-mode gradients of a scalar-output graph against central
/// finite differences for every trainable parameter.
pub fn gradcheck(
    graph: &mut Graph,
    bindings: &[(NodeId, Tensor)],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let params = graph.trainable_params();
    if params.is_empty() {
        return Err(Error::arg("gradcheck needs at least one trainable parameter"));
    }
    let tape = graph.forward(bindings)?;
    let out = tape.output_of(graph)?;
    if out.len() != 1 {
        return Err(Error::arg(format!(
            "gradcheck needs a scalar-output graph, got shape {:?}",
            out.shape()
        )));
    }
    let grads = graph.backward(&tape, &Tensor::scalar(1.0))?;

    let eval = |graph: &Graph| -> Result<f64> {
        graph.forward(bindings)?.output_of(graph)?.scalar_value()
    };

    let mut report = GradCheckReport {
        params: Vec::new(),
        max_rel_err: 0.0,
        tolerance: cfg.tolerance,
        passed: true,
    };
    let mut rng = SeededRng::new(cfg.seed);

    for id in params {
        let theta = graph.param_value(id)?.clone();
        let values = theta.real().to_vec();
        let n = values.len();
        let coords: Vec<usize> = if n <= cfg.max_coords_per_param {
            (0..n).collect()
        } else {
            let mut picked: Vec<usize> = (0..cfg.max_coords_per_param)
                .map(|_| rng.below(n))
                .collect();
            picked.sort_unstable();
            picked.dedup();
            picked
        };

        let ad = grads
            .get(&id)
            .ok_or_else(|| Error::State("missing gradient for trainable leaf".into()))?
            .real()
            .to_vec();

        let mut max_err = 0.0f64;
        for &c in &coords {
            let h = cfg.rel_step * (1.0 + values[c].abs());
            let mut plus = values.clone();
            plus[c] += h;
            graph.set_param(id, Tensor::from_vec(theta.shape().to_vec(), plus)?)?;
            let f_plus = eval(graph)?;
            let mut minus = values.clone();
            minus[c] -= h;
            graph.set_param(id, Tensor::from_vec(theta.shape().to_vec(), minus)?)?;
            let f_minus = eval(graph)?;
            let fd = (f_plus - f_minus) / (2.0 * h);
            max_err = max_err.max(rel_discrepancy(ad[c], fd));
        }
        // Restore the original value.
        graph.set_param(id, theta)?;

        report.max_rel_err = report.max_rel_err.max(max_err);
        report.params.push(ParamCheck {
            node: id,
            name: graph.node_name(id).to_string(),
            coords_checked: coords.len(),
            max_rel_err: max_err,
        });
    }
    report.passed = report.max_rel_err <= cfg.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ops::{DenseBiasOp, DotOutOp, MseLoss, SigmoidOp};
    use crate::graph::GraphOp;

    fn small_mlp_graph(seed: u64) -> (Graph, Vec<(NodeId, Tensor)>) {
        let mut rng = SeededRng::new(seed);
        let mut g = Graph::new();
        let x = g.add_input("x");
        let t = g.add_input("t");
        let w = g.add_param(
            "w_hidden",
            Tensor::from_vec([4, 2], (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap(),
            true,
        );
        let u = g.add_param(
            "w_out",
            Tensor::from_vec([4], (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap(),
            true,
        );
        let h = g.apply(DenseBiasOp, &[x, w]).unwrap();
        let s = g.apply(SigmoidOp, &[h]).unwrap();
        let y = g.apply(DotOutOp, &[s, u]).unwrap();
        let loss = g.apply(MseLoss, &[y, t]).unwrap();
        g.set_output(loss);
        let xv = Tensor::from_vec([3, 1], vec![-0.5, 0.1, 0.8]).unwrap();
        let tv = Tensor::from_vec([3], vec![0.2, -0.1, 0.4]).unwrap();
        (g, vec![(x, xv), (t, tv)])
    }

    #[test]
    fn linear_layer_passes_tightly() {
        let mut g = Graph::new();
        let x = g.add_input("x");
        let t = g.add_input("t");
        let w = g.add_param(
            "w",
            Tensor::from_vec([2, 3], vec![0.3, -0.2, 0.5, 0.1, 0.7, -0.4]).unwrap(),
            true,
        );
        let h = g.apply(DenseBiasOp, &[x, w]).unwrap();
        let loss = g.apply(MseLoss, &[h, t]).unwrap();
        g.set_output(loss);
        let bindings = vec![
            (x, Tensor::from_vec([2, 2], vec![1.0, -1.0, 0.5, 2.0]).unwrap()),
            (t, Tensor::from_vec([2, 2], vec![0.0, 1.0, -1.0, 0.5]).unwrap()),
        ];
        let report =
            gradcheck(&mut g, &bindings, &GradCheckConfig { tolerance: 1e-6, ..Default::default() })
                .unwrap();
        assert!(report.passed, "{}", report.summary());
    }

    #[test]
    fn mlp_passes_default_tolerance() {
        let (mut g, bindings) = small_mlp_graph(3);
        let report = gradcheck(&mut g, &bindings, &GradCheckConfig::default()).unwrap();
        assert!(report.passed, "{}", report.summary());
    }

    #[test]
    fn corrupted_gradient_rule_is_flagged() {
        // An operator whose vjp is deliberately scaled by 1.5.
        #[derive(Debug)]
        struct BadScale;
        impl GraphOp for BadScale {
            fn name(&self) -> &'static str {
                "bad_scale"
            }
            fn forward(&self, inputs: &[&Tensor]) -> crate::Result<Tensor> {
                Ok(inputs[0].scale(2.0))
            }
            fn vjp(
                &self,
                _: usize,
                _: &[&Tensor],
                _: &Tensor,
                cot: &Tensor,
            ) -> crate::Result<Tensor> {
                Ok(cot.scale(3.0)) // should be 2.0
            }
        }
        let mut g = Graph::new();
        let t = g.add_input("t");
        let w = g.add_param("w", Tensor::from_vec([2], vec![0.4, -0.6]).unwrap(), true);
        let y = g.apply(BadScale, &[w]).unwrap();
        let loss = g.apply(MseLoss, &[y, t]).unwrap();
        g.set_output(loss);
        let bindings = vec![(t, Tensor::from_vec([2], vec![0.1, 0.2]).unwrap())];
        let report = gradcheck(&mut g, &bindings, &GradCheckConfig::default()).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn no_trainable_leaves_is_an_error() {
        let mut g = Graph::new();
        let x = g.add_input("x");
        let t = g.add_input("t");
        let loss = g.apply(MseLoss, &[x, t]).unwrap();
        g.set_output(loss);
        let b = vec![(x, Tensor::scalar(1.0)), (t, Tensor::scalar(0.0))];
        assert!(gradcheck(&mut g, &b, &GradCheckConfig::default()).is_err());
    }
}
