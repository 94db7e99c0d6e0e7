//! Scalar fields on the plane with values and gradients.
//!
//! The Pohozaev and asymptotics machinery is written against this trait so
//! that exact solution families, synthetic log-sums, and interpolated solver
//! grids all flow through the same quadratures.

use crate::family::{eval_global, grad_global, GlobalSolutionParams};
use num_complex::Complex64;

pub trait ScalarField {
    fn value(&self, p: Complex64) -> f64;
    /// Complex gradient `∂₁f + i ∂₂f`.
    fn gradient(&self, p: Complex64) -> Complex64;
}

/// The explicit solution family as a field.
#[derive(Debug, Clone, Copy)]
pub struct GlobalField(pub GlobalSolutionParams);

impl ScalarField for GlobalField {
    fn value(&self, p: Complex64) -> f64 {
        eval_global(&self.0, p)
    }
    fn gradient(&self, p: Complex64) -> Complex64 {
        grad_global(&self.0, p)
    }
}

/// `w(y) = -4 Σ_l ( log|y - a_l| - log|y - b_l| )`: the leading shape of the
/// difference of two bubbling fields whose bubbles moved from `b_l` to `a_l`.
#[derive(Debug, Clone)]
pub struct LogPairSum {
    pub moved: Vec<Complex64>,
    pub reference: Vec<Complex64>,
}

impl ScalarField for LogPairSum {
    fn value(&self, p: Complex64) -> f64 {
        let mut v = 0.0;
        for (&a, &b) in self.moved.iter().zip(&self.reference) {
            v += -4.0 * ((p - a).norm().ln() - (p - b).norm().ln());
        }
        v
    }
    fn gradient(&self, p: Complex64) -> Complex64 {
        let mut g = Complex64::new(0.0, 0.0);
        for (&a, &b) in self.moved.iter().zip(&self.reference) {
            g += -4.0 * ((p - a) / (p - a).norm_sqr() - (p - b) / (p - b).norm_sqr());
        }
        g
    }
}

/// Pointwise difference of two fields.
pub struct DiffField<'a>(pub &'a dyn ScalarField, pub &'a dyn ScalarField);

impl ScalarField for DiffField<'_> {
    fn value(&self, p: Complex64) -> f64 {
        self.0.value(p) - self.1.value(p)
    }
    fn gradient(&self, p: Complex64) -> Complex64 {
        self.0.gradient(p) - self.1.gradient(p)
    }
}

/// Pointwise sum of two fields.
pub struct SumField<'a>(pub &'a dyn ScalarField, pub &'a dyn ScalarField);

impl ScalarField for SumField<'_> {
    fn value(&self, p: Complex64) -> f64 {
        self.0.value(p) + self.1.value(p)
    }
    fn gradient(&self, p: Complex64) -> Complex64 {
        self.0.gradient(p) + self.1.gradient(p)
    }
}

/// A closure-backed field with finite-difference gradient; convenient in
/// tests and for perturbations like `0.01 Re(y)`.
pub struct FnField<F: Fn(Complex64) -> f64> {
    pub f: F,
    pub fd_step: f64,
}

impl<F: Fn(Complex64) -> f64> FnField<F> {
    pub fn new(f: F) -> Self {
        FnField { f, fd_step: 1e-6 }
    }
}

impl<F: Fn(Complex64) -> f64> ScalarField for FnField<F> {
    fn value(&self, p: Complex64) -> f64 {
        (self.f)(p)
    }
    fn gradient(&self, p: Complex64) -> Complex64 {
        let h = self.fd_step;
        let dx = ((self.f)(p + Complex64::new(h, 0.0)) - (self.f)(p - Complex64::new(h, 0.0))) / (2.0 * h);
        let dy = ((self.f)(p + Complex64::new(0.0, h)) - (self.f)(p - Complex64::new(0.0, h))) / (2.0 * h);
        Complex64::new(dx, dy)
    }
}
