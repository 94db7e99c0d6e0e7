//! Closed-form coefficient fields `h(x)` for the equation
//! `Δu + |x|^{2N} h(x) e^u = 0`.
//!
//! The grammar is deliberately small — bivariate polynomials and
//! exponentials of bivariate polynomials — so that values, gradients and
//! Hessians are exact and problem files stay auditable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A sparse bivariate polynomial: terms `c · x₁^i · x₂^j`.
pub type PolyTerms = Vec<(u32, u32, f64)>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoeffExpr {
    /// `h(x) = Σ c x₁^i x₂^j`
    Poly { terms: PolyTerms },
    /// `h(x) = exp(Σ c x₁^i x₂^j)`
    ExpPoly { terms: PolyTerms },
}

fn poly_value(terms: &PolyTerms, x: f64, y: f64) -> f64 {
    terms
        .iter()
        .map(|&(i, j, c)| c * x.powi(i as i32) * y.powi(j as i32))
        .sum()
}

fn poly_grad(terms: &PolyTerms, x: f64, y: f64) -> (f64, f64) {
    let mut gx = 0.0;
    let mut gy = 0.0;
    for &(i, j, c) in terms {
        if i > 0 {
            gx += c * i as f64 * x.powi(i as i32 - 1) * y.powi(j as i32);
        }
        if j > 0 {
            gy += c * j as f64 * x.powi(i as i32) * y.powi(j as i32 - 1);
        }
    }
    (gx, gy)
}

fn poly_hess(terms: &PolyTerms, x: f64, y: f64) -> (f64, f64, f64) {
    let (mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0);
    for &(i, j, c) in terms {
        let (fi, fj) = (i as f64, j as f64);
        if i >= 2 {
            hxx += c * fi * (fi - 1.0) * x.powi(i as i32 - 2) * y.powi(j as i32);
        }
        if i >= 1 && j >= 1 {
            hxy += c * fi * fj * x.powi(i as i32 - 1) * y.powi(j as i32 - 1);
        }
        if j >= 2 {
            hyy += c * fj * (fj - 1.0) * x.powi(i as i32) * y.powi(j as i32 - 2);
        }
    }
    (hxx, hxy, hyy)
}

impl CoeffExpr {
    /// `h ≡ 1`.
    pub fn one() -> Self {
        CoeffExpr::Poly { terms: vec![(0, 0, 1.0)] }
    }

    pub fn constant(c: f64) -> Self {
        CoeffExpr::Poly { terms: vec![(0, 0, c)] }
    }

    /// `h = 1 + a x₁ + b x₂`.
    pub fn one_plus_linear(a: f64, b: f64) -> Self {
        CoeffExpr::Poly { terms: vec![(0, 0, 1.0), (1, 0, a), (0, 1, b)] }
    }

    /// `h = exp(a x₁ + b x₂)`; log h is exactly linear, so all second
    /// derivatives of log h vanish.
    pub fn exp_linear(a: f64, b: f64) -> Self {
        CoeffExpr::ExpPoly { terms: vec![(1, 0, a), (0, 1, b)] }
    }

    pub fn value(&self, p: Complex64) -> f64 {
        match self {
            CoeffExpr::Poly { terms } => poly_value(terms, p.re, p.im),
            CoeffExpr::ExpPoly { terms } => poly_value(terms, p.re, p.im).exp(),
        }
    }

    pub fn gradient(&self, p: Complex64) -> (f64, f64) {
        match self {
            CoeffExpr::Poly { terms } => poly_grad(terms, p.re, p.im),
            CoeffExpr::ExpPoly { terms } => {
                let v = poly_value(terms, p.re, p.im).exp();
                let (gx, gy) = poly_grad(terms, p.re, p.im);
                (v * gx, v * gy)
            }
        }
    }

    pub fn hessian(&self, p: Complex64) -> (f64, f64, f64) {
        match self {
            CoeffExpr::Poly { terms } => poly_hess(terms, p.re, p.im),
            CoeffExpr::ExpPoly { terms } => {
                let v = poly_value(terms, p.re, p.im).exp();
                let (gx, gy) = poly_grad(terms, p.re, p.im);
                let (hxx, hxy, hyy) = poly_hess(terms, p.re, p.im);
                (
                    v * (hxx + gx * gx),
                    v * (hxy + gx * gy),
                    v * (hyy + gy * gy),
                )
            }
        }
    }

    /// Gradient of `log h` as a complex number `∂₁ log h + i ∂₂ log h`.
    pub fn log_gradient(&self, p: Complex64) -> Complex64 {
        match self {
            CoeffExpr::ExpPoly { terms } => {
                let (gx, gy) = poly_grad(terms, p.re, p.im);
                Complex64::new(gx, gy)
            }
            _ => {
                let v = self.value(p);
                let (gx, gy) = self.gradient(p);
                Complex64::new(gx / v, gy / v)
            }
        }
    }

    /// Laplacian of `log h`.
    pub fn log_laplacian(&self, p: Complex64) -> f64 {
        match self {
            CoeffExpr::ExpPoly { terms } => {
                let (hxx, _, hyy) = poly_hess(terms, p.re, p.im);
                hxx + hyy
            }
            _ => {
                let v = self.value(p);
                let (gx, gy) = self.gradient(p);
                let (hxx, _, hyy) = self.hessian(p);
                (hxx + hyy) / v - (gx * gx + gy * gy) / (v * v)
            }
        }
    }

    /// True if `h(x₁, -x₂) = h(x₁, x₂)` structurally (all terms have even
    /// powers of x₂). Such coefficients admit conjugation-symmetric
    /// solutions.
    pub fn is_even_in_x2(&self) -> bool {
        let terms = match self {
            CoeffExpr::Poly { terms } | CoeffExpr::ExpPoly { terms } => terms,
        };
        terms.iter().all(|&(_, j, c)| j % 2 == 0 || c == 0.0)
    }

    /// Numerically checks invariance under rotation by `2π/k` on a sample
    /// of the disk of radius `tau`.
    pub fn is_rotation_invariant(&self, k: u32, tau: f64) -> bool {
        if k <= 1 {
            return true;
        }
        let rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / k as f64);
        for i in 1..=6 {
            let r = tau * i as f64 / 6.0;
            for j in 0..17 {
                let p = Complex64::from_polar(r, 0.37 * j as f64);
                let a = self.value(p);
                let b = self.value(p * rot);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return false;
                }
            }
        }
        true
    }

    /// Minimum of `h` over a polar sample of the closed disk of radius `tau`.
    pub fn min_on_disk(&self, tau: f64, n_r: usize, n_theta: usize) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..=n_r {
            let r = tau * i as f64 / n_r as f64;
            for j in 0..n_theta {
                let t = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
                min = min.min(self.value(Complex64::from_polar(r, t)));
            }
        }
        min
    }
}
