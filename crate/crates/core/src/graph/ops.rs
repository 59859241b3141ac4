//! Generic differentiable operators: elementwise arithmetic, activations,
//! dense layers, losses, normalization, and the across-scale maximum.

use super::GraphOp;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde_json::json;

fn expect_arity(inputs: &[&Tensor], n: usize, op: &str) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::arg(format!("{op} expects {n} inputs, got {}", inputs.len())));
    }
    Ok(())
}

/// Elementwise sum.
#[derive(Debug, Clone, Copy)]
pub struct AddOp;

impl GraphOp for AddOp {
    fn name(&self) -> &'static str {
        "add"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 2, "add")?;
        inputs[0].add(inputs[1])
    }
    fn vjp(&self, _: usize, _: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        Ok(cot.clone())
    }
}

/// Elementwise difference.
#[derive(Debug, Clone, Copy)]
pub struct SubOp;

impl GraphOp for SubOp {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 2, "sub")?;
        inputs[0].sub(inputs[1])
    }
    fn vjp(&self, slot: usize, _: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        Ok(if slot == 0 { cot.clone() } else { cot.scale(-1.0) })
    }
}

/// Elementwise (Hadamard) product; also serves as a diagonal weighting layer
/// when one input is a parameter.
#[derive(Debug, Clone, Copy)]
pub struct MulOp;

impl GraphOp for MulOp {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 2, "mul")?;
        inputs[0].mul(inputs[1])
    }
    fn vjp(&self, slot: usize, inputs: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        cot.mul(inputs[1 - slot])
    }
}

/// Rectifier; sub-gradient at zero is zero.
#[derive(Debug, Clone, Copy)]
pub struct ReluOp;

impl GraphOp for ReluOp {
    fn name(&self) -> &'static str {
        "relu"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 1, "relu")?;
        inputs[0].relu()
    }
    fn vjp(&self, _: usize, inputs: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let x = inputs[0].try_real()?;
        let g = cot.try_real()?;
        let out: Vec<f64> =
            x.iter().zip(g).map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 }).collect();
        Tensor::from_vec(cot.shape().to_vec(), out)
    }
}

/// Multiplication by a fixed scalar.
#[derive(Debug, Clone, Copy)]
pub struct ScaleOp(pub f64);

impl GraphOp for ScaleOp {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 1, "scale")?;
        Ok(inputs[0].scale(self.0))
    }
    fn vjp(&self, _: usize, _: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        Ok(cot.scale(self.0))
    }
    fn describe(&self) -> serde_json::Value {
        json!({"op": "scale", "factor": self.0})
    }
}

/// Logistic sigmoid.
#[derive(Debug, Clone, Copy)]
pub struct SigmoidOp;

impl GraphOp for SigmoidOp {
    fn name(&self) -> &'static str {
        "sigmoid"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 1, "sigmoid")?;
        let x = inputs[0].try_real()?;
        Tensor::from_vec(
            inputs[0].shape().to_vec(),
            x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
        )
    }
    fn vjp(&self, _: usize, _: &[&Tensor], output: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let s = output.real();
        let g = cot.try_real()?;
        Tensor::from_vec(
            cot.shape().to_vec(),
            s.iter().zip(g).map(|(&si, &gi)| gi * si * (1.0 - si)).collect(),
        )
    }
}

/// Hyperbolic tangent.
#[derive(Debug, Clone, Copy)]
pub struct TanhOp;

impl GraphOp for TanhOp {
    fn name(&self) -> &'static str {
        "tanh"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 1, "tanh")?;
        let x = inputs[0].try_real()?;
        Tensor::from_vec(inputs[0].shape().to_vec(), x.iter().map(|v| v.tanh()).collect())
    }
    fn vjp(&self, _: usize, _: &[&Tensor], output: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let t = output.real();
        let g = cot.try_real()?;
        Tensor::from_vec(
            cot.shape().to_vec(),
            t.iter().zip(g).map(|(&ti, &gi)| gi * (1.0 - ti * ti)).collect(),
        )
    }
}

/// Hidden layer with absorbed bias: inputs `x [B, d]`, `w [N, d+1]`,
/// output `[B, N]` with `out[b, i] = w[i, ..d] . x[b, ..] + w[i, d]`.
#[derive(Debug, Clone, Copy)]
pub struct DenseBiasOp;

impl GraphOp for DenseBiasOp {
    fn name(&self) -> &'static str {
        "dense_bias"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 2, "dense_bias")?;
        let (x, w) = (inputs[0], inputs[1]);
        if x.rank() != 2 || w.rank() != 2 {
            return Err(Error::shape("dense_bias: x and w must be rank 2"));
        }
        let (b, d) = (x.shape()[0], x.shape()[1]);
        let (n, d1) = (w.shape()[0], w.shape()[1]);
        if d1 != d + 1 {
            return Err(Error::shape(format!("dense_bias: w has {d1} cols, need {}", d + 1)));
        }
        let (xv, wv) = (x.try_real()?, w.try_real()?);
        let out = crate::exec::map_collect(b, |bi| {
            let xr = &xv[bi * d..(bi + 1) * d];
            (0..n)
                .map(|i| {
                    let wr = &wv[i * d1..(i + 1) * d1];
                    wr[..d].iter().zip(xr).map(|(&a, &c)| a * c).sum::<f64>() + wr[d]
                })
                .collect::<Vec<f64>>()
        })
        .concat();
        Tensor::from_vec([b, n], out)
    }
    fn vjp(&self, slot: usize, inputs: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let (x, w) = (inputs[0], inputs[1]);
        let (b, d) = (x.shape()[0], x.shape()[1]);
        let n = w.shape()[0];
        let d1 = d + 1;
        let (xv, wv, g) = (x.real(), w.real(), cot.try_real()?);
        match slot {
            0 => {
                let out = crate::exec::map_collect(b, |bi| {
                    let gr = &g[bi * n..(bi + 1) * n];
                    (0..d)
                        .map(|j| (0..n).map(|i| gr[i] * wv[i * d1 + j]).sum::<f64>())
                        .collect::<Vec<f64>>()
                })
                .concat();
                Tensor::from_vec([b, d], out)
            }
            1 => {
                let mut out = vec![0.0; n * d1];
                for bi in 0..b {
                    let gr = &g[bi * n..(bi + 1) * n];
                    let xr = &xv[bi * d..(bi + 1) * d];
                    for i in 0..n {
                        let row = &mut out[i * d1..(i + 1) * d1];
                        for j in 0..d {
                            row[j] += gr[i] * xr[j];
                        }
                        row[d] += gr[i];
                    }
                }
                Tensor::from_vec([n, d1], out)
            }
            _ => Err(Error::arg("dense_bias has two inputs")),
        }
    }
}

/// Weighted sum over hidden units: inputs `h [B, N]`, `u [N]`, output `[B]`.
#[derive(Debug, Clone, Copy)]
pub struct DotOutOp;

impl GraphOp for DotOutOp {
    fn name(&self) -> &'static str {
        "dot_out"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 2, "dot_out")?;
        let (h, u) = (inputs[0], inputs[1]);
        if h.rank() != 2 || u.rank() != 1 || h.shape()[1] != u.shape()[0] {
            return Err(Error::shape(format!(
                "dot_out: incompatible shapes {:?} and {:?}",
                h.shape(),
                u.shape()
            )));
        }
        let (b, n) = (h.shape()[0], h.shape()[1]);
        let (hv, uv) = (h.try_real()?, u.try_real()?);
        let out: Vec<f64> = (0..b)
            .map(|bi| hv[bi * n..(bi + 1) * n].iter().zip(uv).map(|(&a, &c)| a * c).sum())
            .collect();
        Tensor::from_vec([b], out)
    }
    fn vjp(&self, slot: usize, inputs: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let (h, u) = (inputs[0], inputs[1]);
        let (b, n) = (h.shape()[0], h.shape()[1]);
        let g = cot.try_real()?;
        match slot {
            0 => {
                let uv = u.real();
                let mut out = vec![0.0; b * n];
                for bi in 0..b {
                    for i in 0..n {
                        out[bi * n + i] = g[bi] * uv[i];
                    }
                }
                Tensor::from_vec([b, n], out)
            }
            1 => {
                let hv = h.real();
                let mut out = vec![0.0; n];
                for bi in 0..b {
                    for i in 0..n {
                        out[i] += g[bi] * hv[bi * n + i];
                    }
                }
                Tensor::from_vec([n], out)
            }
            _ => Err(Error::arg("dot_out has two inputs")),
        }
    }
}

/// Mean squared error; scalar output of shape `[1]`.
#[derive(Debug, Clone, Copy)]
pub struct MseLoss;

impl GraphOp for MseLoss {
    fn name(&self) -> &'static str {
        "mse"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 2, "mse")?;
        let diff = inputs[0].sub(inputs[1])?;
        let d = diff.real();
        let sq: Vec<f64> = d.iter().map(|&v| v * v).collect();
        Ok(Tensor::scalar(crate::exec::sum(&sq) / d.len() as f64))
    }
    fn vjp(&self, slot: usize, inputs: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let g0 = cot.scalar_value()?;
        let diff = inputs[0].sub(inputs[1])?;
        let k = 2.0 * g0 / inputs[0].len() as f64;
        Ok(diff.scale(if slot == 0 { k } else { -k }))
    }
}

/// Soft Dice loss `1 - (2 Σ p m + ε) / (Σ p + Σ m + ε)`.
#[derive(Debug, Clone, Copy)]
pub struct DiceLoss {
    pub epsilon: f64,
}

impl Default for DiceLoss {
    fn default() -> Self {
        DiceLoss { epsilon: 1e-6 }
    }
}

impl DiceLoss {
    fn parts(&self, p: &[f64], m: &[f64]) -> (f64, f64) {
        let inter: Vec<f64> = p.iter().zip(m).map(|(&a, &b)| a * b).collect();
        let num = 2.0 * crate::exec::sum(&inter) + self.epsilon;
        let den = crate::exec::sum(p) + crate::exec::sum(m) + self.epsilon;
        (num, den)
    }
}

impl GraphOp for DiceLoss {
    fn name(&self) -> &'static str {
        "dice"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 2, "dice")?;
        if inputs[0].shape() != inputs[1].shape() {
            return Err(Error::shape("dice: prediction/mask shapes differ"));
        }
        let (num, den) = self.parts(inputs[0].try_real()?, inputs[1].try_real()?);
        Ok(Tensor::scalar(1.0 - num / den))
    }
    fn vjp(&self, slot: usize, inputs: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let g0 = cot.scalar_value()?;
        let (p, m) = (inputs[0].try_real()?, inputs[1].try_real()?);
        let (num, den) = self.parts(p, m);
        let other = if slot == 0 { m } else { p };
        let grad: Vec<f64> = other
            .iter()
            .map(|&o| -g0 * (2.0 * o * den - num) / (den * den))
            .collect();
        Tensor::from_vec(inputs[slot].shape().to_vec(), grad)
    }
    fn describe(&self) -> serde_json::Value {
        json!({"op": "dice", "epsilon": self.epsilon})
    }
}

/// Zero-mean / unit-variance normalization over the whole tensor.
#[derive(Debug, Clone, Copy)]
pub struct NormalizeOp {
    pub epsilon: f64,
}

impl Default for NormalizeOp {
    fn default() -> Self {
        NormalizeOp { epsilon: 1e-12 }
    }
}

impl GraphOp for NormalizeOp {
    fn name(&self) -> &'static str {
        "normalize"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        expect_arity(inputs, 1, "normalize")?;
        let x = inputs[0].try_real()?;
        let n = x.len() as f64;
        let mean = crate::exec::sum(x) / n;
        let devs: Vec<f64> = x.iter().map(|&v| (v - mean) * (v - mean)).collect();
        let std = (crate::exec::sum(&devs) / n + self.epsilon).sqrt();
        Tensor::from_vec(
            inputs[0].shape().to_vec(),
            x.iter().map(|&v| (v - mean) / std).collect(),
        )
    }
    fn vjp(&self, _: usize, inputs: &[&Tensor], output: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let x = inputs[0].real();
        let y = output.real();
        let g = cot.try_real()?;
        let n = x.len() as f64;
        let mean = crate::exec::sum(x) / n;
        let devs: Vec<f64> = x.iter().map(|&v| (v - mean) * (v - mean)).collect();
        let std = (crate::exec::sum(&devs) / n + self.epsilon).sqrt();
        let g_mean = crate::exec::sum(g) / n;
        let gy: Vec<f64> = g.iter().zip(y).map(|(&a, &b)| a * b).collect();
        let gy_mean = crate::exec::sum(&gy) / n;
        Tensor::from_vec(
            cot.shape().to_vec(),
            g.iter().zip(y).map(|(&gi, &yi)| (gi - g_mean - yi * gy_mean) / std).collect(),
        )
    }
}

/// Elementwise maximum over k same-shaped inputs; the earliest input wins
/// ties, both in the value (trivially) and in the sub-gradient.
#[derive(Debug, Clone, Copy)]
pub struct ScaleMaxOp;

impl ScaleMaxOp {
    fn winners(inputs: &[&Tensor]) -> Result<Vec<usize>> {
        let len = inputs[0].len();
        let mut win = vec![0usize; len];
        let mut best = inputs[0].try_real()?.to_vec();
        for (j, t) in inputs.iter().enumerate().skip(1) {
            let v = t.try_real()?;
            for i in 0..len {
                if v[i] > best[i] {
                    best[i] = v[i];
                    win[i] = j;
                }
            }
        }
        Ok(win)
    }
}

impl GraphOp for ScaleMaxOp {
    fn name(&self) -> &'static str {
        "scale_max"
    }
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        if inputs.is_empty() {
            return Err(Error::arg("scale_max needs at least one input"));
        }
        for t in inputs.iter().skip(1) {
            if t.shape() != inputs[0].shape() {
                return Err(Error::shape("scale_max: inputs differ in shape"));
            }
        }
        let mut best = inputs[0].try_real()?.to_vec();
        for t in inputs.iter().skip(1) {
            for (b, &v) in best.iter_mut().zip(t.try_real()?) {
                if v > *b {
                    *b = v;
                }
            }
        }
        Tensor::from_vec(inputs[0].shape().to_vec(), best)
    }
    fn vjp(&self, slot: usize, inputs: &[&Tensor], _: &Tensor, cot: &Tensor) -> Result<Tensor> {
        let win = Self::winners(inputs)?;
        let g = cot.try_real()?;
        let out: Vec<f64> =
            win.iter().zip(g).map(|(&w, &gi)| if w == slot { gi } else { 0.0 }).collect();
        Tensor::from_vec(cot.shape().to_vec(), out)
    }
}
