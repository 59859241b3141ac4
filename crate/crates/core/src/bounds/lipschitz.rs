//! Lipschitz constant estimation: analytic where available, grid suprema of
//! gradient norms otherwise.

use super::BoxDomain;
use crate::exec;
use crate::tensor::NormP;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LipMethod {
    /// Closed-form supremum.
    Analytic,
    /// Max over a finite grid — a lower estimate of the true supremum.
    GridSup { resolution: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub method: LipMethod,
    pub p: String,
}

fn p_label(p: NormP) -> String {
    match p {
        NormP::One => "1".into(),
        NormP::Two => "2".into(),
        NormP::Inf => "inf".into(),
    }
}

impl LipschitzEstimate {
    pub fn analytic(value: f64, p: NormP) -> Self {
        LipschitzEstimate { value, method: LipMethod::Analytic, p: p_label(p) }
    }

    pub fn is_lower_estimate(&self) -> bool {
        matches!(self.method, LipMethod::GridSup { .. })
    }
}

fn vec_norm(v: &[f64], p: NormP) -> f64 {
    match p {
        NormP::One => v.iter().map(|x| x.abs()).sum(),
        NormP::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormP::Inf => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    }
}

/// Grid supremum of the gradient p-norm over a box. Labeled as a lower
/// estimate of the true supremum.
pub fn lipschitz_grid(
    grad: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    domain: &BoxDomain,
    p: NormP,
    resolution: usize,
) -> LipschitzEstimate {
    let pts = domain.grid(resolution);
    let norms = exec::map_collect(pts.len(), |i| vec_norm(&grad(&pts[i]), p));
    LipschitzEstimate {
        value: norms.into_iter().fold(0.0f64, f64::max),
        method: LipMethod::GridSup { resolution },
        p: p_label(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_norms() {
        // g(x) = a.x has constant gradient; l_p = ||a||_p exactly.
        let a = [1.5, -0.7];
        let domain = BoxDomain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let grad = move |_: &[f64]| vec![a[0], a[1]];
        let l1 = lipschitz_grid(&grad, &domain, NormP::One, 11);
        let l2 = lipschitz_grid(&grad, &domain, NormP::Two, 11);
        assert!((l1.value - 2.2).abs() < 1e-14);
        assert!((l2.value - (1.5f64 * 1.5 + 0.49).sqrt()).abs() < 1e-14);
        assert!(l1.is_lower_estimate());
    }

    #[test]
    fn sigmoid_derivative_peak() {
        // Scalar sigmoid: sup sigma' = 1/4 at 0 (grid includes 0 for odd res).
        let domain = BoxDomain::new(vec![-4.0], vec![4.0]).unwrap();
        let grad = |x: &[f64]| {
            let s = 1.0 / (1.0 + (-x[0]).exp());
            vec![s * (1.0 - s)]
        };
        let l = lipschitz_grid(&grad, &domain, NormP::Two, 201);
        assert!((l.value - 0.25).abs() < 1e-12, "sigmoid lipschitz {}", l.value);
    }

    #[test]
    fn tanh_slope_at_origin() {
        let domain = BoxDomain::new(vec![-2.0], vec![2.0]).unwrap();
        let grad = |x: &[f64]| vec![1.0 - x[0].tanh().powi(2)];
        let l = lipschitz_grid(&grad, &domain, NormP::One, 201);
        assert!((l.value - 1.0).abs() < 1e-9, "tanh lipschitz {}", l.value);
    }
}
