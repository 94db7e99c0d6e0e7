//! The explicit two-parameter family of entire solutions of
//! `ΔU + |y|^{2N} h₀ e^U = 0` with finite mass `8π(N+1)`:
//!
//! ```text
//!     U(y) = log( e^λ / (1 + (e^λ h₀ / (8(N+1)²)) |y^{N+1} − ξ|²)² )
//! ```
//!
//! All evaluation goes through a log1p rearrangement so that heights up to
//! λ ~ 300 never overflow. The module also provides the family's parameter
//! kernels (derivatives in the multiplicative height Λ = e^λ and in ξ), the
//! probe matrix built from them, total mass with an analytic tail bound, and
//! Newton refinement of the N+1 local maxima.

use nalgebra::{Matrix2, Matrix3, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("bumps are not separated at this height (e^(λ/2) = {got:.3e} < {need:.3e})")]
    MaximaNotSeparated { got: f64, need: f64 },
    #[error("requested tolerance {tol:.3e} unreachable at radius {radius:.3e}: tail bound {bound:.3e}")]
    TailTooLarge { radius: f64, tol: f64, bound: f64 },
    #[error("degenerate probes: sin((N+1)(θ₂−θ₁)) = {0:.3e}")]
    DegenerateProbes(f64),
}

/// Parameters `(N, λ, ξ, h₀)` of the explicit solution family.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GlobalSolutionParams {
    /// Singularity strength N ≥ 0.
    pub n: u32,
    /// Log-height λ.
    pub lambda: f64,
    /// Center parameter ξ (the maxima sit at the (N+1)-th roots of ξ).
    pub xi: Complex64,
    /// Coefficient value h₀ > 0.
    pub h0: f64,
}

impl GlobalSolutionParams {
    pub fn new(n: u32, lambda: f64, xi: Complex64, h0: f64) -> Result<Self, FamilyError> {
        if !(h0 > 0.0) {
            return Err(FamilyError::InvalidParams(format!("h0 = {h0} must be positive")));
        }
        if !lambda.is_finite() || lambda.abs() > 300.0 {
            return Err(FamilyError::InvalidParams(format!("lambda = {lambda} out of range")));
        }
        if !xi.re.is_finite() || !xi.im.is_finite() {
            return Err(FamilyError::InvalidParams("xi must be finite".into()));
        }
        Ok(GlobalSolutionParams { n, lambda, xi, h0 })
    }

    /// `8(N+1)²`.
    pub fn c0(&self) -> f64 {
        let np1 = (self.n + 1) as f64;
        8.0 * np1 * np1
    }

    /// `C = e^λ h₀ / (8(N+1)²)`, the coefficient of `|y^{N+1}−ξ|²`.
    pub fn coef(&self) -> f64 {
        (self.lambda + self.h0.ln() - self.c0().ln()).exp()
    }

    /// `P(y) = y^{N+1} − ξ`.
    pub fn poly(&self, y: Complex64) -> Complex64 {
        y.powu(self.n + 1) - self.xi
    }

    fn poly_d1(&self, y: Complex64) -> Complex64 {
        (self.n as f64 + 1.0) * y.powu(self.n)
    }

    fn poly_d2(&self, y: Complex64) -> Complex64 {
        if self.n == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            ((self.n + 1) * self.n) as f64 * y.powu(self.n - 1)
        }
    }

    /// Width scale of each bump in the `z = y^{N+1}` plane: `1/√C`.
    pub fn bump_width_z(&self) -> f64 {
        (-0.5 * (self.lambda + self.h0.ln() - self.c0().ln())).exp()
    }
}

fn softplus(t: f64) -> f64 {
    // log(1 + e^t), overflow-safe
    if t > 33.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Evaluates `U(y)`; finite for every `y`, all λ in range.
pub fn eval_global(p: &GlobalSolutionParams, y: Complex64) -> f64 {
    let pv = p.poly(y);
    let n2 = pv.norm_sqr();
    if n2 == 0.0 {
        return p.lambda;
    }
    let t = p.lambda + p.h0.ln() - p.c0().ln() + n2.ln();
    p.lambda - 2.0 * softplus(t)
}

/// Complex gradient `∂₁U + i ∂₂U`.
pub fn grad_global(p: &GlobalSolutionParams, y: Complex64) -> Complex64 {
    let c = p.coef();
    let pv = p.poly(y);
    let dp = p.poly_d1(y);
    // ∇|P|² = 2 conj(P') P as a complex vector
    -4.0 * c * dp.conj() * pv / (1.0 + c * pv.norm_sqr())
}

/// Real 2×2 Hessian of `U`.
pub fn hess_global(p: &GlobalSolutionParams, y: Complex64) -> Matrix2<f64> {
    let c = p.coef();
    let pv = p.poly(y);
    let dp = p.poly_d1(y);
    let d2p = p.poly_d2(y);
    let denom = 1.0 + c * pv.norm_sqr();
    // F = |P|²: f_yy = P'' conj(P), f_yȳ = |P'|²
    let a = d2p * pv.conj();
    let b = dp.norm_sqr();
    let f11 = 2.0 * a.re + 2.0 * b;
    let f22 = -2.0 * a.re + 2.0 * b;
    let f12 = -2.0 * a.im;
    let g = 2.0 * dp.conj() * pv; // complex gradient of F
    let (g1, g2) = (g.re, g.im);
    let s = -2.0 * c / denom;
    let t = 2.0 * c * c / (denom * denom);
    Matrix2::new(
        s * f11 + t * g1 * g1,
        s * f12 + t * g1 * g2,
        s * f12 + t * g1 * g2,
        s * f22 + t * g2 * g2,
    )
}

/// `e^{U(y)}` without overflow (λ in the validated range).
pub fn exp_global(p: &GlobalSolutionParams, y: Complex64) -> f64 {
    eval_global(p, y).exp()
}

/// Five-point finite-difference residual `Δ_h U + |y|^{2N} h₀ e^U` at `y`.
pub fn residual_global(p: &GlobalSolutionParams, y: Complex64, fd_step: f64) -> f64 {
    assert!(fd_step > 0.0);
    let h = fd_step;
    let lap = (eval_global(p, y + Complex64::new(h, 0.0))
        + eval_global(p, y - Complex64::new(h, 0.0))
        + eval_global(p, y + Complex64::new(0.0, h))
        + eval_global(p, y - Complex64::new(0.0, h))
        - 4.0 * eval_global(p, y))
        / (h * h);
    lap + y.norm_sqr().powi(p.n as i32) * p.h0 * exp_global(p, y)
}

/// Quadrature request for [`total_mass`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MassQuadrature {
    /// Integration radius in the y-plane.
    pub radius: f64,
    /// Relative tolerance the analytic tail bound must meet.
    pub tol: f64,
    /// Angular nodes (the rule insists on ≥ 8(N+1)).
    pub n_angle: usize,
    /// Gauss–Legendre order per radial segment.
    pub gl_order: usize,
}

impl MassQuadrature {
    pub fn with_tolerance(p: &GlobalSolutionParams, tol: f64) -> Self {
        // choose R so that the analytic tail bound is comfortably below tol
        let c = p.coef();
        let rz = ((2.0 / tol - 1.0) / c).sqrt().max(2.0 * (p.xi.norm() + 1.0));
        MassQuadrature {
            radius: rz.powf(1.0 / (p.n as f64 + 1.0)),
            tol,
            n_angle: (8 * (p.n as usize + 1)).max(16),
            gl_order: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MassEstimate {
    pub value: f64,
    /// Analytic bound on the neglected tail, included in `rel_err_bound`.
    pub tail_bound: f64,
    pub rel_err_bound: f64,
}

/// Total mass `∫_{R²} |y|^{2N} h₀ e^U dy`.
///
/// The integral is computed in the substituted variable `z = y^{N+1}`
/// (the map is (N+1)-to-1 with `dz = (N+1)² |y|^{2N} dy`), which turns the
/// angularly oscillatory integrand into a radial bump around ξ:
/// `(1/(N+1)) ∫ h₀ e^λ (1 + C|z−ξ|²)^{-2} dz`. Radial Gauss–Legendre over
/// segments graded at the bump width, trapezoid in angle.
pub fn total_mass(p: &GlobalSolutionParams, quad: &MassQuadrature) -> Result<MassEstimate, FamilyError> {
    let np1 = p.n as f64 + 1.0;
    let c = p.coef();
    let rz = quad.radius.powf(np1);
    // tail of ∫_{|z-ξ|>ρ*} over the worst-centered annulus: bound |z−ξ| ≥ |z| − |ξ|
    let rho_star = rz - p.xi.norm();
    if rho_star <= 0.0 {
        return Err(FamilyError::TailTooLarge { radius: quad.radius, tol: quad.tol, bound: f64::INFINITY });
    }
    let amp = p.h0 * (p.lambda.exp());
    // ∫_{ρ>ρ*} 2πρ (1+Cρ²)⁻² dρ = π / (C (1+Cρ*²))
    let tail = amp / np1 * std::f64::consts::PI / (c * (1.0 + c * rho_star * rho_star));
    let exact_scale = 8.0 * std::f64::consts::PI * np1;
    if tail > quad.tol * exact_scale {
        return Err(FamilyError::TailTooLarge { radius: quad.radius, tol: quad.tol, bound: tail });
    }
    let width = p.bump_width_z();
    let integrand = |z: Complex64| {
        let t = p.lambda + p.h0.ln() - p.c0().ln() + (z - p.xi).norm_sqr().ln();
        // h₀ e^λ (1+C|z−ξ|²)⁻² in log space
        (p.lambda + p.h0.ln() - 2.0 * softplus(t)).exp()
    };
    let value = crate::quad::polar_ball_integral(p.xi, rho_star, width, quad.gl_order, quad.n_angle, integrand)
        / np1;
    Ok(MassEstimate {
        value,
        tail_bound: tail,
        rel_err_bound: tail / exact_scale,
    })
}

/// The N+1 local maxima of `U`, refined by damped Newton from the
/// (N+1)-th roots of ξ. Maxima are sorted by angle.
pub fn local_maxima(p: &GlobalSolutionParams) -> Result<Vec<Complex64>, FamilyError> {
    let np1 = p.n as u32 + 1;
    let threshold = 10.0 * np1 as f64;
    let got = (p.lambda / 2.0).exp();
    if got < threshold {
        return Err(FamilyError::MaximaNotSeparated { got, need: threshold });
    }
    if p.n == 0 {
        // single bump exactly at ξ (the unique root of y − ξ)
        return Ok(vec![p.xi]);
    }
    if p.xi.norm() == 0.0 {
        // all roots collapse to the origin
        return Err(FamilyError::MaximaNotSeparated { got: 0.0, need: threshold });
    }
    let root0 = Complex64::from_polar(p.xi.norm().powf(1.0 / np1 as f64), p.xi.arg() / np1 as f64);
    let mut maxima = Vec::with_capacity(np1 as usize);
    for l in 0..np1 {
        let rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * l as f64 / np1 as f64);
        let mut y = root0 * rot;
        let mut gnorm = grad_global(p, y).norm();
        for _ in 0..50 {
            if gnorm < 1e-13 {
                break;
            }
            let h = hess_global(p, y);
            let g = grad_global(p, y);
            let rhs = Vector2::new(-g.re, -g.im);
            let step = match h.lu().solve(&rhs) {
                Some(s) => s,
                None => break,
            };
            let mut damp = 1.0;
            // halve the step while the gradient norm does not decrease
            loop {
                let y_try = y + Complex64::new(damp * step[0], damp * step[1]);
                let g_try = grad_global(p, y_try).norm();
                if g_try < gnorm || damp < 1.0 / 1024.0 {
                    y = y_try;
                    gnorm = g_try;
                    break;
                }
                damp *= 0.5;
            }
        }
        maxima.push(y);
    }
    // ascending angle starting from the root nearest the positive real axis
    let half_sector = std::f64::consts::PI / np1 as f64;
    let key = |z: &Complex64| (z.arg() + half_sector).rem_euclid(2.0 * std::f64::consts::PI);
    maxima.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
    // strictness: negative-definite Hessian and pairwise separation
    let width = p.bump_width_z() / (np1 as f64 * root0.norm().powi(p.n as i32));
    for (i, &m) in maxima.iter().enumerate() {
        let h = hess_global(p, m);
        if !(h[(0, 0)] < 0.0 && h.determinant() > 0.0) {
            return Err(FamilyError::MaximaNotSeparated { got, need: threshold });
        }
        let next = maxima[(i + 1) % maxima.len()];
        if i + 1 < maxima.len() && (next - m).norm() < 5.0 * width {
            return Err(FamilyError::MaximaNotSeparated { got, need: threshold });
        }
    }
    Ok(maxima)
}

/// Parameter derivatives of the family at a point, in the multiplicative
/// height `Λ = e^λ` and the center ξ.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelDerivatives {
    /// ∂v/∂Λ = (1/Λ)(1−u)/(1+u) with u = C|y^{N+1}−ξ|².
    pub d_height: f64,
    /// Holomorphic derivative ∂v/∂ξ.
    pub d_xi: Complex64,
    /// Anti-holomorphic derivative ∂v/∂ξ̄ = conj(∂v/∂ξ).
    pub d_xi_bar: Complex64,
    /// ∂v/∂ξ₁ = 2 Re ∂v/∂ξ.
    pub d_xi1: f64,
    /// ∂v/∂ξ₂ = −2 Im ∂v/∂ξ.
    pub d_xi2: f64,
}

/// Derivatives of `U` with respect to `(Λ, ξ₁, ξ₂)` at the point `z`.
///
/// The height derivative is taken from direct differentiation of the
/// closed form; it is pinned to the central finite-difference oracle in the
/// tests, which is the defining property.
pub fn kernel_derivatives(p: &GlobalSolutionParams, z: Complex64) -> KernelDerivatives {
    let c = p.coef();
    let pv = p.poly(z);
    let u = c * pv.norm_sqr();
    let cap_lambda = p.lambda.exp();
    let d_height = (1.0 / cap_lambda) * (1.0 - u) / (1.0 + u);
    let d_xi = 2.0 * (cap_lambda * p.h0 / p.c0()) * pv.conj() / (1.0 + u);
    KernelDerivatives {
        d_height,
        d_xi,
        d_xi_bar: d_xi.conj(),
        d_xi1: 2.0 * d_xi.re,
        d_xi2: -2.0 * d_xi.im,
    }
}

/// The 3×3 probe matrix of parameter kernels and its determinant data.
#[derive(Debug, Clone, Serialize)]
pub struct KernelMatrix {
    pub probes: [Complex64; 3],
    /// Rows (∂/∂Λ, ∂/∂ξ₁, ∂/∂ξ₂), columns probes.
    pub entries: [[f64; 3]; 3],
    pub det: f64,
    /// Determinant after the normalizing row scalings (complex).
    pub det_scaled: Complex64,
    /// Leading-order prediction `2i sin((N+1)(θ₂−θ₁)) s^{3(N+1)ε}`.
    pub det_scaled_leading: Complex64,
    /// `det_scaled / det_scaled_leading`.
    pub leading_ratio: Complex64,
    pub scale_s: f64,
    pub eps: f64,
    pub thetas: [f64; 3],
}

/// Builds the probe matrix at `p_l = s^{1+εl} e^{iθ_l}`, `l = 1,2,3`.
pub fn build_kernel_matrix(
    p: &GlobalSolutionParams,
    s: f64,
    eps: f64,
    thetas: [f64; 3],
) -> Result<KernelMatrix, FamilyError> {
    if !(s > 1.0) || !(eps > 0.0) {
        return Err(FamilyError::InvalidParams("need s > 1 and eps > 0".into()));
    }
    let np1 = p.n as f64 + 1.0;
    let sine = (np1 * (thetas[1] - thetas[0])).sin();
    if sine.abs() < 1e-12 {
        return Err(FamilyError::DegenerateProbes(sine));
    }
    let probes = [
        Complex64::from_polar(s.powf(1.0 + eps), thetas[0]),
        Complex64::from_polar(s.powf(1.0 + 2.0 * eps), thetas[1]),
        Complex64::from_polar(s.powf(1.0 + 3.0 * eps), thetas[2]),
    ];
    let ks: Vec<KernelDerivatives> = probes.iter().map(|&q| kernel_derivatives(p, q)).collect();
    let entries = [
        [ks[0].d_height, ks[1].d_height, ks[2].d_height],
        [ks[0].d_xi1, ks[1].d_xi1, ks[2].d_xi1],
        [ks[0].d_xi2, ks[1].d_xi2, ks[2].d_xi2],
    ];
    let det = Matrix3::from_fn(|i, j| entries[i][j]).determinant();

    // Scaled complex variant with rows (∂Λ, ∂ξ, ∂ξ̄): multiply the first row
    // by −Λ and the ξ rows by |p₃|^{N+1}/2, which normalizes the far-field
    // asymptote ∂v/∂ξ → 2 e^{-i(N+1)θ}/|p|^{N+1}; the determinant of the
    // result tends to 2i sin((N+1)(θ₂−θ₁)) s^{3(N+1)ε}.
    let cap_lambda = p.lambda.exp();
    let row_scale = probes[2].norm().powf(np1) / 2.0;
    let m: Vec<[Complex64; 3]> = vec![
        [
            Complex64::new(-cap_lambda * ks[0].d_height, 0.0),
            Complex64::new(-cap_lambda * ks[1].d_height, 0.0),
            Complex64::new(-cap_lambda * ks[2].d_height, 0.0),
        ],
        [ks[0].d_xi * row_scale, ks[1].d_xi * row_scale, ks[2].d_xi * row_scale],
        [
            ks[0].d_xi_bar * row_scale,
            ks[1].d_xi_bar * row_scale,
            ks[2].d_xi_bar * row_scale,
        ],
    ];
    let det_scaled = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let det_scaled_leading =
        Complex64::new(0.0, 2.0 * sine) * s.powf(3.0 * np1 * eps);
    Ok(KernelMatrix {
        probes,
        entries,
        det,
        det_scaled,
        det_scaled_leading,
        leading_ratio: det_scaled / det_scaled_leading,
        scale_s: s,
        eps,
        thetas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn center_and_root_values() {
        // U(0) = 0 for (N=0, λ=0, ξ=0, h₀=8)
        let p = GlobalSolutionParams::new(0, 0.0, Complex64::new(0.0, 0.0), 8.0).unwrap();
        assert_relative_eq!(eval_global(&p, Complex64::new(0.0, 0.0)), 0.0, epsilon = 1e-14);

        // U = λ at the roots of ξ: (N=2, λ=20, ξ=1), y = e^{2πi/3}
        let p = GlobalSolutionParams::new(2, 20.0, Complex64::new(1.0, 0.0), 1.0).unwrap();
        let y = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        assert_relative_eq!(eval_global(&p, y), 20.0, epsilon = 1e-9);
    }

    #[test]
    fn direct_arithmetic_value() {
        // (N=1, λ=0, ξ=0, h₀=1), y=2: log(1/(1+16/32)²) = -2 log(3/2)
        let p = GlobalSolutionParams::new(1, 0.0, Complex64::new(0.0, 0.0), 1.0).unwrap();
        let v = eval_global(&p, Complex64::new(2.0, 0.0));
        assert_relative_eq!(v, -2.0 * (1.5_f64).ln(), max_relative = 1e-13);
    }

    #[test]
    fn rotational_invariance_when_centered() {
        // ξ = 0: U depends on y only through y^{N+1}
        let p = GlobalSolutionParams::new(3, 7.0, Complex64::new(0.0, 0.0), 2.0).unwrap();
        let rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 4.0);
        for k in 0..5 {
            let y = Complex64::new(0.3 + 0.2 * k as f64, -0.7);
            assert_relative_eq!(eval_global(&p, y), eval_global(&p, y * rot), epsilon = 1e-12);
        }
    }

    #[test]
    fn no_overflow_at_large_height() {
        let p = GlobalSolutionParams::new(2, 200.0, Complex64::new(1.0, 0.0), 1.0).unwrap();
        let v = eval_global(&p, Complex64::new(3.0, 1.0));
        assert!(v.is_finite());
        assert!(grad_global(&p, Complex64::new(3.0, 1.0)).norm().is_finite());
    }

    #[test]
    fn pde_residual_small_and_second_order() {
        let p = GlobalSolutionParams::new(0, 0.0, Complex64::new(0.0, 0.0), 8.0).unwrap();
        let y = Complex64::new(0.5, 0.3);
        assert!(residual_global(&p, y, 1e-3).abs() < 1e-4);

        let p = GlobalSolutionParams::new(3, 5.0, Complex64::new(1.0, 0.0), 1.0).unwrap();
        let y = Complex64::new(1.2, 0.0);
        assert!(residual_global(&p, y, 1e-3).abs() < 1e-3);

        // halving the step should cut the residual by roughly 4
        let r1 = residual_global(&p, y, 2e-3).abs();
        let r2 = residual_global(&p, y, 1e-3).abs();
        let ratio = r1 / r2;
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = GlobalSolutionParams::new(2, 9.0, Complex64::new(1.0, 0.4), 1.3).unwrap();
        let y = Complex64::new(0.8, -0.5);
        let g = grad_global(&p, y);
        let s = 1e-6;
        let gx = (eval_global(&p, y + Complex64::new(s, 0.0)) - eval_global(&p, y - Complex64::new(s, 0.0)))
            / (2.0 * s);
        let gy = (eval_global(&p, y + Complex64::new(0.0, s)) - eval_global(&p, y - Complex64::new(0.0, s)))
            / (2.0 * s);
        assert_relative_eq!(g.re, gx, epsilon = 1e-7, max_relative = 1e-5);
        assert_relative_eq!(g.im, gy, epsilon = 1e-7, max_relative = 1e-5);
    }

    #[test]
    fn mass_equals_8pi_np1() {
        let cases = vec![
            GlobalSolutionParams::new(0, 0.0, Complex64::new(0.0, 0.0), 8.0).unwrap(),
            GlobalSolutionParams::new(2, 10.0, Complex64::new(1.0, 0.0), 1.0).unwrap(),
            GlobalSolutionParams::new(1, 4.0, Complex64::new(0.3, -0.2), 2.5).unwrap(),
        ];
        for p in cases {
            let q = MassQuadrature::with_tolerance(&p, 1e-8);
            let m = total_mass(&p, &q).unwrap();
            let exact = 8.0 * std::f64::consts::PI * (p.n as f64 + 1.0);
            assert_relative_eq!(m.value, exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn mass_independent_of_center() {
        let p0 = GlobalSolutionParams::new(2, 8.0, Complex64::new(0.0, 0.0), 1.0).unwrap();
        let p1 = GlobalSolutionParams::new(2, 8.0, Complex64::new(1.0, 1.0), 1.0).unwrap();
        let m0 = total_mass(&p0, &MassQuadrature::with_tolerance(&p0, 1e-8)).unwrap();
        let m1 = total_mass(&p1, &MassQuadrature::with_tolerance(&p1, 1e-8)).unwrap();
        assert_relative_eq!(m0.value, m1.value, max_relative = 1e-7);
    }

    #[test]
    fn mass_tail_error_reported() {
        let p = GlobalSolutionParams::new(0, 0.0, Complex64::new(0.0, 0.0), 8.0).unwrap();
        let q = MassQuadrature { radius: 3.0, tol: 1e-10, n_angle: 16, gl_order: 24 };
        assert!(matches!(total_mass(&p, &q), Err(FamilyError::TailTooLarge { .. })));
    }

    #[test]
    fn maxima_at_roots_of_unity() {
        let p = GlobalSolutionParams::new(2, 20.0, Complex64::new(1.0, 0.0), 1.0).unwrap();
        let maxima = local_maxima(&p).unwrap();
        assert_eq!(maxima.len(), 3);
        for (l, m) in maxima.iter().enumerate() {
            let target = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * l as f64 / 3.0);
            // sorted by angle starting at β₀ = 0
            assert!((m - target).norm() < 1e-3, "l={l}: {m} vs {target}");
        }
    }

    #[test]
    fn single_maximum_for_radial_bubble() {
        let p = GlobalSolutionParams::new(0, 5.0, Complex64::new(0.0, 0.0), 1.0).unwrap();
        let maxima = local_maxima(&p).unwrap();
        assert_eq!(maxima.len(), 1);
        assert!(maxima[0].norm() < 1e-12);
    }

    #[test]
    fn maxima_count_and_failure_mode() {
        for (n, lam) in [(1u32, 8.0), (3, 9.0), (4, 10.0)] {
            let p = GlobalSolutionParams::new(n, lam, Complex64::new(1.0, 0.0), 1.0).unwrap();
            assert_eq!(local_maxima(&p).unwrap().len(), n as usize + 1);
        }
        let p = GlobalSolutionParams::new(2, 2.0, Complex64::new(1.0, 0.0), 1.0).unwrap();
        assert!(matches!(local_maxima(&p), Err(FamilyError::MaximaNotSeparated { .. })));
    }

    #[test]
    fn kernel_derivative_hand_value() {
        // ∂v/∂ξ at (N=1, Λ=1 i.e. λ=0, ξ=0), z=2 → 1/6
        let p = GlobalSolutionParams::new(1, 0.0, Complex64::new(0.0, 0.0), 1.0).unwrap();
        let k = kernel_derivatives(&p, Complex64::new(2.0, 0.0));
        assert_relative_eq!(k.d_xi.re, 1.0 / 6.0, max_relative = 1e-13);
        assert_relative_eq!(k.d_xi.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kernel_derivatives_conjugate_symmetry() {
        let p = GlobalSolutionParams::new(2, 1.5, Complex64::new(0.7, 0.0), 1.0).unwrap();
        let k = kernel_derivatives(&p, Complex64::new(1.9, 0.0));
        assert_eq!(k.d_xi_bar, k.d_xi.conj());
        assert!(k.d_xi.im.abs() < 1e-14); // real z, real ξ
    }

    /// Central finite differences in (Λ, ξ₁, ξ₂) — the defining oracle.
    fn fd_kernel(p: &GlobalSolutionParams, z: Complex64, step: f64) -> (f64, f64, f64) {
        let lam_of = |cap: f64| cap.ln();
        let cap = p.lambda.exp();
        let up = GlobalSolutionParams { lambda: lam_of(cap + step), ..*p };
        let dn = GlobalSolutionParams { lambda: lam_of(cap - step), ..*p };
        let d_h = (eval_global(&up, z) - eval_global(&dn, z)) / (2.0 * step);
        let xp = GlobalSolutionParams { xi: p.xi + Complex64::new(step, 0.0), ..*p };
        let xm = GlobalSolutionParams { xi: p.xi - Complex64::new(step, 0.0), ..*p };
        let d_x1 = (eval_global(&xp, z) - eval_global(&xm, z)) / (2.0 * step);
        let yp = GlobalSolutionParams { xi: p.xi + Complex64::new(0.0, step), ..*p };
        let ym = GlobalSolutionParams { xi: p.xi - Complex64::new(0.0, step), ..*p };
        let d_x2 = (eval_global(&yp, z) - eval_global(&ym, z)) / (2.0 * step);
        (d_h, d_x1, d_x2)
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.random_range(0..4u32);
            let lambda = rng.random_range(-0.5..2.0);
            let xi = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let p = GlobalSolutionParams::new(n, lambda, xi, 1.0).unwrap();
            let z = Complex64::from_polar(rng.random_range(1.5..4.0), rng.random_range(0.0..6.28));
            let k = kernel_derivatives(&p, z);
            let (dh, dx1, dx2) = fd_kernel(&p, z, 1e-4);
            assert_relative_eq!(k.d_height, dh, max_relative = 1e-6, epsilon = 1e-10);
            assert_relative_eq!(k.d_xi1, dx1, max_relative = 1e-6, epsilon = 1e-10);
            assert_relative_eq!(k.d_xi2, dx2, max_relative = 1e-6, epsilon = 1e-10);
        }
    }

    #[test]
    fn kernel_matrix_invertible_and_degenerate_probe_detection() {
        let p = GlobalSolutionParams::new(1, 0.0, Complex64::new(0.0, 0.0), 1.0).unwrap();
        let km = build_kernel_matrix(&p, 10.0, 0.1, [0.0, std::f64::consts::PI / 8.0, std::f64::consts::PI / 4.0])
            .unwrap();
        assert!(km.det.abs() > 1e-12);

        // θ₂ − θ₁ = π/(N+1) kills the sine factor
        let bad = build_kernel_matrix(
            &p,
            10.0,
            0.1,
            [0.0, std::f64::consts::PI / 2.0, std::f64::consts::PI / 4.0],
        );
        assert!(matches!(bad, Err(FamilyError::DegenerateProbes(_))));
    }

    #[test]
    fn kernel_matrix_leading_term_trend() {
        let p = GlobalSolutionParams::new(1, 0.0, Complex64::new(0.0, 0.0), 1.0).unwrap();
        let thetas = [0.0, std::f64::consts::PI / 8.0, std::f64::consts::PI / 4.0];
        let mut devs = Vec::new();
        for s in [10.0, 100.0, 1000.0] {
            let km = build_kernel_matrix(&p, s, 0.15, thetas).unwrap();
            devs.push((km.leading_ratio - Complex64::new(1.0, 0.0)).norm());
        }
        assert!(devs[0] > devs[1] && devs[1] > devs[2], "not monotone: {devs:?}");
        assert!(devs[2] < 0.2, "final deviation {:.3}", devs[2]);
    }
}
