//! Dirichlet Green function of the Laplacian on a centered disk, its
//! regular part, and harmonic extension of boundary data (the
//! de-oscillation construction).
//!
//! On `B_R`: `G(y,η) = -(1/2π) log|y-η| + H(y,η)` with the image-point
//! regular part `H(y,η) = (1/2π) log( (|η|/R) |R²η/|η|² - y| )`, which is
//! exact for disks.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GreenError {
    #[error("green function evaluated at coincident points")]
    CoincidentPoints,
    #[error("need at least 16 equispaced boundary samples, got {0}")]
    TooFewSamples(usize),
}

/// Green data for the disk `B_R` centered at the origin.
#[derive(Debug, Clone, Copy)]
pub struct DiskGreen {
    pub radius: f64,
}

impl DiskGreen {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0);
        DiskGreen { radius }
    }

    /// Regular part `H(y,η)`. Symmetric in its arguments; harmonic in `y`
    /// throughout the open disk.
    pub fn regular(&self, y: Complex64, eta: Complex64) -> f64 {
        let r = self.radius;
        // |η| |R²η/|η|² − y| = |R² η̂ − y|η|| , stable as η → 0
        let en = eta.norm();
        let dist = if en == 0.0 {
            r * r
        } else {
            (r * r * (eta / en) - y * en).norm()
        };
        (dist / r).ln() / (2.0 * std::f64::consts::PI)
    }

    /// Full Green function `G(y,η)`.
    pub fn green(&self, y: Complex64, eta: Complex64) -> Result<f64, GreenError> {
        let d = (y - eta).norm();
        if d == 0.0 {
            return Err(GreenError::CoincidentPoints);
        }
        Ok(-d.ln() / (2.0 * std::f64::consts::PI) + self.regular(y, eta))
    }

    /// Gradient of `H` in the first argument, as `∂₁H + i ∂₂H`.
    pub fn grad1_regular(&self, y: Complex64, eta: Complex64) -> Complex64 {
        let r = self.radius;
        let en = eta.norm();
        if en == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let image = r * r * eta / (en * en);
        (y - image) / (y - image).norm_sqr() / (2.0 * std::f64::consts::PI)
    }

    /// Gradient of `G` in the first argument.
    pub fn grad1(&self, y: Complex64, eta: Complex64) -> Complex64 {
        -(y - eta) / (y - eta).norm_sqr() / (2.0 * std::f64::consts::PI) + self.grad1_regular(y, eta)
    }
}

/// Harmonic extension of equispaced boundary samples on `∂B_R`.
///
/// Interior values come from the Poisson kernel under the trapezoid rule in
/// angle; the Fourier coefficients of the same samples give a fast
/// whole-grid evaluator and the gradient at the center.
#[derive(Debug, Clone)]
pub struct HarmonicLift {
    pub radius: f64,
    pub samples: Vec<f64>,
    coeffs: Vec<Complex64>,
}

impl HarmonicLift {
    pub fn new(radius: f64, samples: Vec<f64>) -> Result<Self, GreenError> {
        if samples.len() < 16 {
            return Err(GreenError::TooFewSamples(samples.len()));
        }
        let n = samples.len();
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let coeffs = buf.into_iter().map(|c| c / n as f64).collect();
        Ok(HarmonicLift { radius, samples, coeffs })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Boundary mean (the zeroth Fourier coefficient).
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Poisson-kernel quadrature at an interior point.
    pub fn evaluate(&self, p: Complex64) -> f64 {
        let r = self.radius;
        let n = self.samples.len();
        debug_assert!(p.norm() < r, "harmonic lift evaluated outside the open disk");
        let mut acc = 0.0;
        let k = (r * r - p.norm_sqr()) / n as f64;
        for (j, &v) in self.samples.iter().enumerate() {
            let b = Complex64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
            acc += v * k / (p - b).norm_sqr();
        }
        acc
    }

    /// Spectral form of the same trapezoid data:
    /// `Σ_m ĉ_m (ρ/R)^{|m|} e^{imθ}`. Agrees with [`Self::evaluate`] to
    /// roundoff and is cheap on whole grids.
    pub fn evaluate_spectral(&self, p: Complex64) -> f64 {
        let n = self.samples.len();
        let rho = p.norm() / self.radius;
        let theta = p.arg();
        let mut acc = self.coeffs[0].re;
        let half = n / 2;
        for m in 1..=half {
            let c = self.coeffs[m];
            let decay = rho.powi(m as i32);
            let weight = if 2 * m == n { 0.5 } else { 1.0 };
            // conjugate pair m and n−m
            acc += 2.0 * weight * decay * (c * Complex64::from_polar(1.0, m as f64 * theta)).re;
        }
        acc
    }

    /// Gradient of the lift at the disk center, from the `m = ±1` modes.
    pub fn gradient_at_center(&self) -> Complex64 {
        let c1 = self.coeffs[1];
        (2.0 / self.radius) * Complex64::new(c1.re, -c1.im)
    }

    /// Analytic gradient of the Poisson-kernel quadrature at an interior
    /// point (the kernel is differentiated exactly, so no finite-difference
    /// noise enters peak-shift measurements).
    pub fn gradient(&self, p: Complex64) -> Complex64 {
        let r = self.radius;
        let n = self.samples.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &v) in self.samples.iter().enumerate() {
            let b = Complex64::from_polar(r, 2.0 * std::f64::consts::PI * j as f64 / n as f64);
            let d2 = (p - b).norm_sqr();
            let grad = (-2.0 * p * d2 - (r * r - p.norm_sqr()) * 2.0 * (p - b)) / (d2 * d2);
            acc += v * grad / n as f64;
        }
        acc
    }
}

/// Max defect of the Green representation
/// `u(y) = Σ_cells G(y, node) f_cell A_cell + u_boundary`
/// over the probe points. `sources` carries `(node, f·area)` pairs.
pub fn representation_check(
    g: &DiskGreen,
    sources: &[(Complex64, f64)],
    u_boundary: f64,
    u_at: impl Fn(Complex64) -> f64,
    probes: &[Complex64],
) -> f64 {
    let mut worst: f64 = 0.0;
    for &y in probes {
        let mut acc = 0.0;
        for &(node, fa) in sources {
            if (y - node).norm() == 0.0 {
                continue;
            }
            acc += g.green(y, node).unwrap() * fa;
        }
        worst = worst.max((u_at(y) - acc - u_boundary).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vanishes_on_boundary_and_symmetric() {
        let g = DiskGreen::new(1.0);
        let y = Complex64::new(0.5, 0.0);
        // approach the boundary along a ray
        let eta = Complex64::from_polar(1.0 - 1e-6, 1.0);
        assert!(g.green(y, eta).unwrap().abs() < 1e-5);
        let eta = Complex64::from_polar(1.0 - 1e-8, 2.2);
        assert!(g.green(y, eta).unwrap().abs() < 1e-7);

        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = Complex64::from_polar(rng.random_range(0.0..0.95), rng.random_range(0.0..6.28));
            let b = Complex64::from_polar(rng.random_range(0.0..0.95), rng.random_range(0.0..6.28));
            if (a - b).norm() < 1e-3 {
                continue;
            }
            let d = (g.green(a, b).unwrap() - g.green(b, a).unwrap()).abs();
            assert!(d < 1e-12, "symmetry defect {d}");
        }
    }

    #[test]
    fn coincident_points_rejected() {
        let g = DiskGreen::new(2.0);
        let y = Complex64::new(0.3, 0.1);
        assert!(matches!(g.green(y, y), Err(GreenError::CoincidentPoints)));
    }

    #[test]
    fn regular_part_is_harmonic() {
        let g = DiskGreen::new(1.5);
        let eta = Complex64::new(0.4, -0.3);
        for &h in &[1e-3, 5e-4] {
            let y = Complex64::new(-0.2, 0.6);
            let lap = (g.regular(y + Complex64::new(h, 0.0), eta)
                + g.regular(y - Complex64::new(h, 0.0), eta)
                + g.regular(y + Complex64::new(0.0, h), eta)
                + g.regular(y - Complex64::new(0.0, h), eta)
                - 4.0 * g.regular(y, eta))
                / (h * h);
            assert!(lap.abs() < 1e-6, "lap {lap} at h={h}");
        }
    }

    #[test]
    fn grad1_regular_matches_finite_differences() {
        let g = DiskGreen::new(10.0);
        let y = Complex64::new(1.0, 0.2);
        let eta = Complex64::new(-0.9, 0.5);
        let grad = g.grad1_regular(y, eta);
        let h = 1e-6;
        let fx = (g.regular(y + Complex64::new(h, 0.0), eta) - g.regular(y - Complex64::new(h, 0.0), eta))
            / (2.0 * h);
        let fy = (g.regular(y + Complex64::new(0.0, h), eta) - g.regular(y - Complex64::new(0.0, h), eta))
            / (2.0 * h);
        assert_relative_eq!(grad.re, fx, epsilon = 1e-9, max_relative = 1e-5);
        assert_relative_eq!(grad.im, fy, epsilon = 1e-9, max_relative = 1e-5);
    }

    #[test]
    fn grad1_regular_leading_term_at_unit_points() {
        // at Q_m = Q_l = roots of unity on R = τ/δ: 2π ∇₁H ≈ -δ² e^{iβ_l}
        let np1 = 3usize;
        for &delta in &[0.1, 0.05, 0.025] {
            let g = DiskGreen::new(1.0 / delta);
            for l in 0..np1 {
                let beta = 2.0 * std::f64::consts::PI * l as f64 / np1 as f64;
                let q = Complex64::from_polar(1.0, beta);
                let val = 2.0 * std::f64::consts::PI * g.grad1_regular(q, q);
                let lead = -delta * delta * Complex64::from_polar(1.0, beta);
                assert!(
                    (val - lead).norm() < 2.0 * delta.powi(4),
                    "delta={delta}, l={l}: {:?} vs {:?}",
                    val,
                    lead
                );
            }
        }
    }

    #[test]
    fn lift_reproduces_constant_and_cosine() {
        let n = 256;
        let c = 3.7;
        let lift = HarmonicLift::new(1.0, vec![c; n]).unwrap();
        assert_relative_eq!(lift.evaluate(Complex64::new(0.3, -0.2)), c, max_relative = 1e-12);

        let data: Vec<f64> = (0..n)
            .map(|j| (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos())
            .collect();
        let lift = HarmonicLift::new(1.0, data).unwrap();
        // exact harmonic extension of cos θ is r cos θ
        for &(r, t) in &[(0.5, 0.3), (0.9, 2.0), (0.1, 4.4)] {
            let p = Complex64::from_polar(r, t);
            assert_relative_eq!(lift.evaluate(p), r * t.cos(), epsilon = 1e-8);
            assert_relative_eq!(lift.evaluate_spectral(p), r * t.cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn lift_center_is_boundary_mean() {
        let n = 128;
        let data: Vec<f64> = (0..n)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                1.5 + 0.3 * t.sin() + 0.1 * (3.0 * t).cos()
            })
            .collect();
        let mean = data.iter().sum::<f64>() / n as f64;
        let lift = HarmonicLift::new(2.0, data).unwrap();
        assert_relative_eq!(lift.evaluate(Complex64::new(0.0, 0.0)), mean, epsilon = 1e-10);
    }

    #[test]
    fn lift_rejects_too_few_samples() {
        assert!(matches!(
            HarmonicLift::new(1.0, vec![0.0; 8]),
            Err(GreenError::TooFewSamples(8))
        ));
    }

    #[test]
    fn spectral_and_quadrature_paths_agree() {
        let n = 96;
        let data: Vec<f64> = (0..n)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                (2.0 * t).sin() - 0.4 * (5.0 * t).cos()
            })
            .collect();
        let lift = HarmonicLift::new(1.0, data).unwrap();
        for &(r, t) in &[(0.2, 0.0), (0.7, 1.3), (0.5, 5.9)] {
            let p = Complex64::from_polar(r, t);
            assert_relative_eq!(lift.evaluate(p), lift.evaluate_spectral(p), epsilon = 1e-10);
        }
    }

    #[test]
    fn center_gradient_matches_finite_differences() {
        let n = 128;
        let data: Vec<f64> = (0..n)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                0.7 * t.cos() - 0.2 * t.sin() + 0.05 * (2.0 * t).cos()
            })
            .collect();
        let lift = HarmonicLift::new(1.0, data).unwrap();
        let g = lift.gradient_at_center();
        let h = 1e-5;
        let fx = (lift.evaluate(Complex64::new(h, 0.0)) - lift.evaluate(Complex64::new(-h, 0.0))) / (2.0 * h);
        let fy = (lift.evaluate(Complex64::new(0.0, h)) - lift.evaluate(Complex64::new(0.0, -h))) / (2.0 * h);
        assert_relative_eq!(g.re, fx, epsilon = 1e-8);
        assert_relative_eq!(g.im, fy, epsilon = 1e-8);
    }
}
