//! Dense real/complex tensors.
//!
//! Row-major contiguous storage, double precision. Tensors are immutable
//! values: every operation returns a new tensor, and construction rejects
//! non-finite entries so downstream code can rely on clean data.

mod fft;
mod spectrum;

pub use fft::{dft, inverse_dft};
pub use spectrum::{
    sym_decode, sym_encode, sym_fold_cotangent, sym_param_count, Spectrum,
};

use crate::error::{Error, Result};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Data {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Dense n-dimensional array with shape metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Data,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl Tensor {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite tensor entry".into()));
        }
        Ok(Tensor { shape, data: Data::Real(data) })
    }

    pub fn from_complex_vec(shape: impl Into<Vec<usize>>, data: Vec<Complex64>) -> Result<Self> {
        let shape = shape.into();
        if numel(&shape) != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        if !data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Numerical("non-finite tensor entry".into()));
        }
        Ok(Tensor { shape, data: Data::Complex(data) })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Tensor { shape, data: Data::Real(vec![0.0; n]) }
    }

    pub fn zeros_complex(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Tensor { shape, data: Data::Complex(vec![Complex64::new(0.0, 0.0); n]) }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = numel(&shape);
        Tensor { shape, data: Data::Real(vec![value; n]) }
    }

    /// Rank-1 single-element tensor, used for scalar losses.
    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: Data::Real(vec![value]) }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        numel(&self.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            Data::Real(_) => DType::Real,
            Data::Complex(_) => DType::Complex,
        }
    }

    pub fn is_real(&self) -> bool {
        self.dtype() == DType::Real
    }

    /// Real storage. Panics on complex tensors; use [`Tensor::try_real`] on
    /// user-supplied data.
    pub fn real(&self) -> &[f64] {
        match &self.data {
            Data::Real(v) => v,
            Data::Complex(_) => panic!("expected real tensor"),
        }
    }

    pub fn try_real(&self) -> Result<&[f64]> {
        match &self.data {
            Data::Real(v) => Ok(v),
            Data::Complex(_) => Err(Error::arg("expected real tensor, got complex")),
        }
    }

    pub fn complex(&self) -> &[Complex64] {
        match &self.data {
            Data::Complex(v) => v,
            Data::Real(_) => panic!("expected complex tensor"),
        }
    }

    pub fn try_complex(&self) -> Result<&[Complex64]> {
        match &self.data {
            Data::Complex(v) => Ok(v),
            Data::Real(_) => Err(Error::arg("expected complex tensor, got real")),
        }
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self) -> Result<f64> {
        if self.len() != 1 {
            return Err(Error::shape(format!("expected scalar, shape {:?}", self.shape)));
        }
        self.try_real().map(|v| v[0])
    }

    /// Copy into complex representation.
    pub fn to_complex(&self) -> Vec<Complex64> {
        match &self.data {
            Data::Real(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            Data::Complex(v) => v.clone(),
        }
    }

    /// Real part as a real tensor.
    pub fn real_part(&self) -> Tensor {
        match &self.data {
            Data::Real(_) => self.clone(),
            Data::Complex(v) => Tensor {
                shape: self.shape.clone(),
                data: Data::Real(v.iter().map(|z| z.re).collect()),
            },
        }
    }

    /// Largest |imaginary part|; 0 for real tensors.
    pub fn max_imag(&self) -> f64 {
        match &self.data {
            Data::Real(_) => 0.0,
            Data::Complex(v) => v.iter().fold(0.0f64, |m, z| m.max(z.im.abs())),
        }
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "operands have shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn zip_real(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Tensor> {
        self.check_same_shape(other)?;
        let (a, b) = (self.try_real()?, other.try_real()?);
        let out: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(self.shape.clone(), out)
    }

    fn zip_complex(
        &self,
        other: &Tensor,
        f: impl Fn(Complex64, Complex64) -> Complex64 + Sync,
    ) -> Result<Tensor> {
        self.check_same_shape(other)?;
        let (a, b) = (self.to_complex(), other.to_complex());
        let out: Vec<Complex64> = a.iter().zip(&b).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_complex_vec(self.shape.clone(), out)
    }

    fn binary(
        &self,
        other: &Tensor,
        fr: impl Fn(f64, f64) -> f64 + Sync,
        fc: impl Fn(Complex64, Complex64) -> Complex64 + Sync,
    ) -> Result<Tensor> {
        if self.is_real() && other.is_real() {
            self.zip_real(other, fr)
        } else {
            self.zip_complex(other, fc)
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, |a, b| a + b, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, |a, b| a - b, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, |a, b| a * b, |a, b| a * b)
    }

    fn map_real(&self, f: impl Fn(f64) -> f64 + Sync) -> Result<Tensor> {
        let v = self.try_real()?;
        Tensor::from_vec(self.shape.clone(), v.iter().map(|&x| f(x)).collect())
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.map_real(|x| x.max(0.0))
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.map_real(f64::exp)
    }

    pub fn abs(&self) -> Result<Tensor> {
        match &self.data {
            Data::Real(v) => {
                Tensor::from_vec(self.shape.clone(), v.iter().map(|x| x.abs()).collect())
            }
            Data::Complex(v) => {
                Tensor::from_vec(self.shape.clone(), v.iter().map(|z| z.norm()).collect())
            }
        }
    }

    pub fn max_with(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_real(other, f64::max)
    }

    pub fn scale(&self, k: f64) -> Tensor {
        match &self.data {
            Data::Real(v) => Tensor {
                shape: self.shape.clone(),
                data: Data::Real(v.iter().map(|&x| k * x).collect()),
            },
            Data::Complex(v) => Tensor {
                shape: self.shape.clone(),
                data: Data::Complex(v.iter().map(|&z| k * z).collect()),
            },
        }
    }
}

/// Elementwise operation selector mirroring the public operation surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EwOp {
    Add,
    Sub,
    Mul,
    Relu,
    Exp,
    Abs,
    Max,
}

/// Apply an elementwise operation. Binary ops require `b`; unary ops reject it.
pub fn elementwise(op: EwOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let need_b = matches!(op, EwOp::Add | EwOp::Sub | EwOp::Mul | EwOp::Max);
    match (need_b, b) {
        (true, None) => return Err(Error::arg(format!("{op:?} needs two operands"))),
        (false, Some(_)) => return Err(Error::arg(format!("{op:?} takes one operand"))),
        _ => {}
    }
    match op {
        EwOp::Add => a.add(b.unwrap()),
        EwOp::Sub => a.sub(b.unwrap()),
        EwOp::Mul => a.mul(b.unwrap()),
        EwOp::Max => a.max_with(b.unwrap()),
        EwOp::Relu => a.relu(),
        EwOp::Exp => a.exp(),
        EwOp::Abs => a.abs(),
    }
}

/// p-norm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormP {
    One,
    Two,
    Inf,
}

/// Vector p-norm over all entries (complex entries enter via modulus).
pub fn norm(t: &Tensor, p: NormP) -> f64 {
    let abs_iter: Vec<f64> = match &t.data {
        Data::Real(v) => v.iter().map(|x| x.abs()).collect(),
        Data::Complex(v) => v.iter().map(|z| z.norm()).collect(),
    };
    match p {
        NormP::One => crate::exec::sum(&abs_iter),
        NormP::Two => crate::exec::sum(&abs_iter.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt(),
        NormP::Inf => abs_iter.iter().fold(0.0f64, |m, &x| m.max(x)),
    }
}

/// Inner product of two real tensors (deterministic reduction order).
pub fn dot(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b)?;
    let (x, y) = (a.try_real()?, b.try_real()?);
    let prods: Vec<f64> = x.iter().zip(y).map(|(&u, &v)| u * v).collect();
    Ok(crate::exec::sum(&prods))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::from_vec([2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec([3], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(a.add(&b).is_err());
        assert!(Tensor::from_vec([4], vec![0.0; 3]).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Tensor::from_vec([2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::from_vec([1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn relu_basics() {
        let t = Tensor::from_vec([3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(t.relu().unwrap().real(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn exp_of_zero() {
        let t = Tensor::from_vec([1], vec![0.0]).unwrap();
        assert_eq!(t.exp().unwrap().real(), &[1.0]);
    }

    #[test]
    fn mul_matches_scalar_loop() {
        let mut rng = crate::rng::SeededRng::new(11);
        let a: Vec<f64> = (0..64).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let ta = Tensor::from_vec([64], a.clone()).unwrap();
        let tb = Tensor::from_vec([64], b.clone()).unwrap();
        let out = ta.mul(&tb).unwrap();
        for i in 0..64 {
            assert_eq!(out.real()[i], a[i] * b[i]);
        }
    }

    #[test]
    fn norms() {
        let t = Tensor::from_vec([2], vec![3.0, 4.0]).unwrap();
        assert!((norm(&t, NormP::Two) - 5.0).abs() < 1e-15);
        let t = Tensor::from_vec([2], vec![3.0, -4.0]).unwrap();
        assert!((norm(&t, NormP::One) - 7.0).abs() < 1e-15);
        assert!((norm(&t, NormP::Inf) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn norm_matches_summation_oracle() {
        let mut rng = crate::rng::SeededRng::new(3);
        let v: Vec<f64> = (0..257).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let t = Tensor::from_vec([257], v.clone()).unwrap();
        let mut one = 0.0;
        let mut two = 0.0;
        for &x in &v {
            one += x.abs();
            two += x * x;
        }
        assert!((norm(&t, NormP::One) - one).abs() < 1e-12 * one.max(1.0));
        assert!((norm(&t, NormP::Two) - two.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn elementwise_arity_checked() {
        let a = Tensor::from_vec([1], vec![1.0]).unwrap();
        assert!(elementwise(EwOp::Add, &a, None).is_err());
        assert!(elementwise(EwOp::Relu, &a, Some(&a)).is_err());
    }
}
