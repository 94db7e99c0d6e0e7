//! The trigonometric circulant system governing first-order blowup-point
//! locations.
//!
//! For singularity strength `N` the system is built from
//! `d_j = 1/sin²(jπ/(N+1))`, its sum `D = Σ d_j = N(N+2)/3`, the symmetric
//! Toeplitz matrix `A` with diagonal `D` and off-diagonal `-d_{|i-j|}`, and
//! the root-of-unity angles `β_l = 2πl/(N+1)`. The module verifies the exact
//! identities this structure satisfies in floating point, with reported error
//! bounds, and exposes the non-degeneracy constant that makes the first-order
//! displacement system solvable.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

/// Dense-inversion size cap. Identities that avoid the inverse run far
/// beyond this (see [`CirculantSystem::lambda_sum_error`]).
pub const DENSE_SIZE_CAP: usize = 10_000;

#[derive(Debug, Error)]
pub enum CirculantError {
    #[error("N = {0} exceeds the dense-inversion cap {DENSE_SIZE_CAP}")]
    SizeCap(usize),
    #[error("N must be at least 1")]
    ZeroSize,
}

/// The circulant data for one value of `N`.
#[derive(Debug, Clone)]
pub struct CirculantSystem {
    /// Singularity strength N (matrix dimension).
    pub n: usize,
    /// `d_j = 1/sin²(jπ/(N+1))`, `j = 1..=N`.
    pub d: Vec<f64>,
    /// `D = Σ d_j`.
    pub big_d: f64,
    /// The N×N displacement matrix.
    pub a: DMatrix<f64>,
    /// Inverse of `a`, computed by LU with partial pivoting.
    pub a_inv: DMatrix<f64>,
    /// Angles `β_l = 2πl/(N+1)`, `l = 0..=N`.
    pub beta: Vec<f64>,
    /// `Λ = Σ d_l e^{iβ_l} = D - 2N` (real by symmetry).
    pub lambda_const: f64,
    /// 1-norm condition estimate `‖A‖₁ ‖A⁻¹‖₁`.
    pub cond_estimate: f64,
}

/// One verified identity: label, evaluated sides, and the error.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub n: usize,
    /// Row/index the identity was instantiated at, when per-index.
    pub index: Option<usize>,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub abs_error: f64,
    pub tol: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn new(identity: &str, n: usize, index: Option<usize>, lhs: Complex64, rhs: Complex64, tol: f64) -> Self {
        let abs_error = (lhs - rhs).norm();
        IdentityReport {
            identity: identity.to_string(),
            n,
            index,
            lhs_re: lhs.re,
            lhs_im: lhs.im,
            rhs_re: rhs.re,
            rhs_im: rhs.im,
            abs_error,
            tol,
            pass: abs_error <= tol,
        }
    }
}

/// Non-degeneracy constant of the displacement system.
///
/// The `N = 1` case is a dichotomy rather than a single constant: the
/// summed coefficient identity has left side `-1` and right side `0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum NondegeneracyConstant {
    N1 { left: f64, right: f64 },
    General { g: f64, closed_form: f64 },
}

/// `d_j = 1/sin²(jπ/(N+1))`, computed for `j ≤ (N+1)/2` and mirrored so the
/// palindrome `d_j = d_{N+1-j}` holds bit-for-bit.
pub fn d_vector(n: usize) -> Vec<f64> {
    let np1 = (n + 1) as f64;
    let mut d = vec![0.0; n];
    for j in 1..=n.div_ceil(2) {
        let s = (j as f64 * std::f64::consts::PI / np1).sin();
        let v = 1.0 / (s * s);
        d[j - 1] = v;
        d[n - j] = v;
    }
    d
}

/// Absolute tolerance policy: 1e-8 up to N = 100, relative 1e-6 beyond
/// (`d_1 ~ N²` inflates absolute errors at large N).
pub fn default_tolerance(n: usize, magnitude: f64) -> f64 {
    if n <= 100 {
        1e-8
    } else {
        1e-6 * magnitude.abs().max(1.0)
    }
}

impl CirculantSystem {
    /// Builds the system for strength `n >= 1`.
    pub fn build(n: usize) -> Result<Self, CirculantError> {
        if n == 0 {
            return Err(CirculantError::ZeroSize);
        }
        if n > DENSE_SIZE_CAP {
            return Err(CirculantError::SizeCap(n));
        }
        let d = d_vector(n);
        let np1 = (n + 1) as f64;
        let big_d: f64 = d.iter().sum();
        let beta: Vec<f64> = (0..=n)
            .map(|l| 2.0 * std::f64::consts::PI * l as f64 / np1)
            .collect();
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                big_d
            } else {
                -d[i.abs_diff(j) - 1]
            }
        });
        let lu = a.clone().lu();
        let a_inv = lu
            .try_inverse()
            .expect("A is strictly diagonally dominant, hence invertible");
        let norm1 = |m: &DMatrix<f64>| {
            (0..m.ncols())
                .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0_f64, f64::max)
        };
        let cond_estimate = norm1(&a) * norm1(&a_inv);
        let lambda_const = big_d - 2.0 * n as f64;
        Ok(CirculantSystem {
            n,
            d,
            big_d,
            a,
            a_inv,
            beta,
            lambda_const,
            cond_estimate,
        })
    }

    /// `e^{iβ_l}` for `l = 0..=N`.
    pub fn phase(&self, l: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.beta[l % (self.n + 1)])
    }

    /// Phase with an arbitrary (possibly large) multiple of the base angle:
    /// `e^{iβ_k}` with `β_k = 2πk/(N+1)` reduced mod N+1.
    pub fn phase_multiple(&self, k: i64) -> Complex64 {
        let m = k.rem_euclid(self.n as i64 + 1) as usize;
        self.phase(m)
    }

    /// Error of the weighted phase sum `Σ d_l e^{iβ_l} - (D - 2N)`; usable
    /// far past the dense cap because it needs no inverse.
    pub fn lambda_sum_error(n: usize) -> f64 {
        let np1 = (n + 1) as f64;
        let d = d_vector(n);
        let mut sum = Complex64::new(0.0, 0.0);
        for j in 1..=n {
            sum += d[j - 1] * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / np1);
        }
        let big_d: f64 = d.iter().sum();
        (sum - Complex64::new(big_d - 2.0 * n as f64, 0.0)).norm()
    }

    /// Verifies the five inverse/phase identities plus the closed form of D
    /// and two structural cross-checks. One report per identity per
    /// applicable index.
    pub fn verify_identities(&self, tol: f64) -> Vec<IdentityReport> {
        let n = self.n;
        let nf = n as f64;
        let mut out = Vec::new();
        let e: Vec<Complex64> = (1..=n).map(|l| self.phase(l)).collect();

        // Σ d_l e^{iβ_l} = D - 2N
        let lhs: Complex64 = self.d.iter().zip(&e).map(|(d, p)| d * p).sum();
        out.push(IdentityReport::new(
            "lambda_sum",
            n,
            None,
            lhs,
            Complex64::new(self.big_d - 2.0 * nf, 0.0),
            tol,
        ));

        // D = N(N+2)/3
        out.push(IdentityReport::new(
            "d_sum_closed_form",
            n,
            None,
            Complex64::new(self.big_d, 0.0),
            Complex64::new(nf * (nf + 2.0) / 3.0, 0.0),
            tol,
        ));

        // A⁻¹ (d_N, ..., d_1)ᵀ = (1, ..., 1)ᵀ
        for i in 0..n {
            let lhs: f64 = (0..n).map(|j| self.a_inv[(i, j)] * self.d[n - 1 - j]).sum();
            out.push(IdentityReport::new(
                "inv_reversed_d",
                n,
                Some(i + 1),
                Complex64::new(lhs, 0.0),
                Complex64::new(1.0, 0.0),
                tol,
            ));
        }

        // Σ_{s,t} a^{st} e^{iβ_s} e^{-iβ_t} = (N+1)/(2N)
        let mut herm = Complex64::new(0.0, 0.0);
        for s in 0..n {
            for t in 0..n {
                herm += self.a_inv[(s, t)] * e[s] * e[t].conj();
            }
        }
        out.push(IdentityReport::new(
            "hermitian_form",
            n,
            None,
            herm,
            Complex64::new((nf + 1.0) / (2.0 * nf), 0.0),
            tol,
        ));

        // Σ_{s,t} e^{iβ_s} a^{st} e^{iβ_t} = 0. Valid for N ≥ 2 only: the
        // derivation uses Σ_{l=0}^{N} e^{2iβ_l} = 0, which fails at N = 1
        // (the form evaluates to 1 there).
        if n >= 2 {
            let mut bil = Complex64::new(0.0, 0.0);
            for s in 0..n {
                for t in 0..n {
                    bil += self.a_inv[(s, t)] * e[s] * e[t];
                }
            }
            out.push(IdentityReport::new(
                "bilinear_form_zero",
                n,
                None,
                bil,
                Complex64::new(0.0, 0.0),
                tol,
            ));
        }

        // Σ_j a^{sj} e^{iβ_j} = (e^{iβ_s} - 1)/(2N)
        for s in 0..n {
            let lhs: Complex64 = (0..n).map(|j| self.a_inv[(s, j)] * e[j]).sum();
            let rhs = (e[s] - 1.0) / (2.0 * nf);
            out.push(IdentityReport::new(
                "inverse_phase_action",
                n,
                Some(s + 1),
                lhs,
                rhs,
                tol,
            ));
        }

        // -(d_N, ..., d_1)ᵀ + A e = 2N e (row by row)
        for s in 0..n {
            let mut lhs = Complex64::new(-self.d[n - 1 - s], 0.0);
            for j in 0..n {
                lhs += self.a[(s, j)] * e[j];
            }
            out.push(IdentityReport::new(
                "eigen_relation",
                n,
                Some(s + 1),
                lhs,
                2.0 * nf * e[s],
                tol,
            ));
        }

        // The (N+1)×(N+1) circulant extension has eigenvalues 2m(N+1-m):
        // Σ_j d_j e^{i j β_m} = D - 2m(N+1-m). Independent of A⁻¹; checks the
        // whole d-vector structure at every frequency.
        for m in 0..=n {
            let mut sum = Complex64::new(0.0, 0.0);
            for j in 1..=n {
                sum += self.d[j - 1] * self.phase_multiple((j * m) as i64);
            }
            let rhs = self.big_d - 2.0 * (m as f64) * ((n + 1 - m) as f64);
            out.push(IdentityReport::new(
                "circulant_eigenvalue",
                n,
                Some(m),
                sum,
                Complex64::new(rhs, 0.0),
                tol,
            ));
        }

        out
    }

    /// `g(N) = Λ/2 + D/(2N) + 1 - 2/N + 1`, the distance of the summed
    /// coefficient comparison from its degenerate value. For `N = 1` the
    /// comparison is a dichotomy (left coefficient −1, right 0) and no single
    /// constant applies.
    pub fn nondegeneracy_constant(&self) -> NondegeneracyConstant {
        let nf = self.n as f64;
        if self.n == 1 {
            return NondegeneracyConstant::N1 { left: -1.0, right: 0.0 };
        }
        let g = self.lambda_const / 2.0 + self.big_d / (2.0 * nf) + 1.0 - 2.0 / nf + 1.0;
        let closed_form = (nf - 1.0) * (nf - 2.0) / 6.0 + 2.0 - 2.0 / nf;
        NondegeneracyConstant::General { g, closed_form }
    }

    /// Brute-force evaluation of the double trigonometric sums against their
    /// closed forms. Requires `N >= 2` (the sums over `l ≠ s` are empty at
    /// `N = 1`).
    pub fn verify_sum_chain(&self, tol: f64) -> Vec<IdentityReport> {
        let n = self.n;
        assert!(n >= 2, "sum chain needs N >= 2");
        let nf = n as f64;
        let lam = self.lambda_const;
        let mut out = Vec::new();

        // Σ_s Σ_{l≠s} d_{|l-s|} e^{i(β_l - β_s)} = (N-1)Λ
        let mut s_rel = Complex64::new(0.0, 0.0);
        // Σ_s Σ_{l≠s} d_{|l-s|} e^{iβ_l} = -Λ - D
        let mut s_abs = Complex64::new(0.0, 0.0);
        // Σ_s Σ_{l≠s} d_{|l-s|} e^{iβ_{2l}} e^{iβ_{s-l}} = -2Λ
        let mut s_dbl = Complex64::new(0.0, 0.0);
        for s in 1..=n {
            for l in 1..=n {
                if l == s {
                    continue;
                }
                let d = self.d[l.abs_diff(s) - 1];
                s_rel += d * self.phase_multiple(l as i64 - s as i64);
                s_abs += d * self.phase(l);
                s_dbl += d * self.phase_multiple(2 * l as i64) * self.phase_multiple(s as i64 - l as i64);
            }
        }
        out.push(IdentityReport::new(
            "double_sum_relative_phase",
            n,
            None,
            s_rel,
            Complex64::new((nf - 1.0) * lam, 0.0),
            tol,
        ));
        out.push(IdentityReport::new(
            "double_sum_absolute_phase",
            n,
            None,
            s_abs,
            Complex64::new(-lam - self.big_d, 0.0),
            tol,
        ));
        out.push(IdentityReport::new(
            "double_sum_doubled_phase",
            n,
            None,
            s_dbl,
            Complex64::new(-2.0 * lam, 0.0),
            tol,
        ));

        // Σ_l d_l e^{iβ_{2l}} = -4(N-1) + D, same value for even and odd N.
        let single: Complex64 = (1..=n)
            .map(|l| self.d[l - 1] * self.phase_multiple(2 * l as i64))
            .sum();
        out.push(IdentityReport::new(
            "doubled_phase_sum",
            n,
            None,
            single,
            Complex64::new(-4.0 * (nf - 1.0) + self.big_d, 0.0),
            tol,
        ));
        out
    }

    /// Same four sum-chain errors without building the dense system; used by
    /// large-N sweeps. Returns (identity label, abs error, closed-form
    /// magnitude) triples.
    pub fn sum_chain_errors(n: usize) -> Vec<(&'static str, f64, f64)> {
        assert!(n >= 2);
        let np1 = (n + 1) as f64;
        let nf = n as f64;
        let d = d_vector(n);
        let big_d: f64 = d.iter().sum();
        let lam = big_d - 2.0 * nf;
        let ph = |k: i64| {
            let m = k.rem_euclid(n as i64 + 1) as f64;
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * m / np1)
        };
        let mut s_rel = Complex64::new(0.0, 0.0);
        let mut s_abs = Complex64::new(0.0, 0.0);
        let mut s_dbl = Complex64::new(0.0, 0.0);
        for s in 1..=n {
            for l in 1..=n {
                if l == s {
                    continue;
                }
                let dv = d[l.abs_diff(s) - 1];
                s_rel += dv * ph(l as i64 - s as i64);
                s_abs += dv * ph(l as i64);
                s_dbl += dv * ph(2 * l as i64) * ph(s as i64 - l as i64);
            }
        }
        let single: Complex64 = (1..=n).map(|l| d[l - 1] * ph(2 * l as i64)).sum();
        vec![
            (
                "double_sum_relative_phase",
                (s_rel - Complex64::new((nf - 1.0) * lam, 0.0)).norm(),
                ((nf - 1.0) * lam).abs(),
            ),
            (
                "double_sum_absolute_phase",
                (s_abs - Complex64::new(-lam - big_d, 0.0)).norm(),
                (lam + big_d).abs(),
            ),
            (
                "double_sum_doubled_phase",
                (s_dbl - Complex64::new(-2.0 * lam, 0.0)).norm(),
                (2.0 * lam).abs(),
            ),
            (
                "doubled_phase_sum",
                (single - Complex64::new(-4.0 * (nf - 1.0) + big_d, 0.0)).norm(),
                (4.0 * (nf - 1.0) - big_d).abs(),
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn build_small_cases() {
        let s1 = CirculantSystem::build(1).unwrap();
        assert_relative_eq!(s1.d[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(s1.big_d, 1.0, max_relative = 1e-14);
        assert_relative_eq!(s1.a[(0, 0)], 1.0, max_relative = 1e-14);

        let s2 = CirculantSystem::build(2).unwrap();
        assert_relative_eq!(s2.d[0], 4.0 / 3.0, max_relative = 1e-13);
        assert_relative_eq!(s2.d[1], 4.0 / 3.0, max_relative = 1e-13);
        assert_relative_eq!(s2.big_d, 8.0 / 3.0, max_relative = 1e-13);
        assert_relative_eq!(s2.a[(0, 1)], -4.0 / 3.0, max_relative = 1e-13);
        assert_relative_eq!(s2.a_inv[(0, 0)], 0.5, max_relative = 1e-12);
        assert_relative_eq!(s2.a_inv[(0, 1)], 0.25, max_relative = 1e-12);

        let s3 = CirculantSystem::build(3).unwrap();
        assert_relative_eq!(s3.d[0], 2.0, max_relative = 1e-13);
        assert_relative_eq!(s3.d[1], 1.0, max_relative = 1e-13);
        assert_relative_eq!(s3.d[2], 2.0, max_relative = 1e-13);
        assert_relative_eq!(s3.big_d, 5.0, max_relative = 1e-13);
    }

    #[test]
    fn size_cap_enforced() {
        assert!(matches!(
            CirculantSystem::build(DENSE_SIZE_CAP + 1),
            Err(CirculantError::SizeCap(_))
        ));
        assert!(matches!(CirculantSystem::build(0), Err(CirculantError::ZeroSize)));
    }

    #[test]
    fn d_is_palindromic_exactly() {
        for n in [2usize, 3, 7, 20, 51] {
            let s = CirculantSystem::build(n).unwrap();
            for j in 0..n {
                // same floating computation on both ends
                assert_eq!(s.d[j], s.d[n - 1 - j], "d not palindromic at N={n}, j={j}");
            }
        }
    }

    #[test]
    fn inverse_phase_action_matches_hand_value_n2() {
        // Σ_j a^{1j} e^{iβ_j} = -3/8 + i√3/8 at N = 2
        let s = CirculantSystem::build(2).unwrap();
        let lhs: Complex64 = (0..2).map(|j| s.a_inv[(0, j)] * s.phase(j + 1)).sum();
        assert_relative_eq!(lhs.re, -3.0 / 8.0, max_relative = 1e-12);
        assert_relative_eq!(lhs.im, 3.0_f64.sqrt() / 8.0, max_relative = 1e-12);
    }

    #[test]
    fn hermitian_form_hand_value_n2() {
        let s = CirculantSystem::build(2).unwrap();
        let rep = s
            .verify_identities(1e-10)
            .into_iter()
            .find(|r| r.identity == "hermitian_form")
            .unwrap();
        assert_relative_eq!(rep.lhs_re, 0.75, max_relative = 1e-12);
        assert!(rep.pass);
    }

    #[test]
    fn identities_pass_for_small_range() {
        for n in 1..=30 {
            let s = CirculantSystem::build(n).unwrap();
            for r in s.verify_identities(1e-9) {
                assert!(r.pass, "N={n}: {} (err {:.3e})", r.identity, r.abs_error);
            }
        }
    }

    #[test]
    fn inverse_is_consistent() {
        let s = CirculantSystem::build(17).unwrap();
        let prod = &s.a * &s.a_inv;
        let id = DMatrix::<f64>::identity(17, 17);
        assert!((prod - id).amax() < 1e-10);
    }

    #[test]
    fn nondegeneracy_matches_closed_form() {
        let s2 = CirculantSystem::build(2).unwrap();
        match s2.nondegeneracy_constant() {
            NondegeneracyConstant::General { g, closed_form } => {
                assert_relative_eq!(g, 1.0, epsilon = 1e-12);
                assert_relative_eq!(closed_form, 1.0, epsilon = 1e-12);
            }
            _ => panic!("N=2 should be general"),
        }
        let s3 = CirculantSystem::build(3).unwrap();
        match s3.nondegeneracy_constant() {
            NondegeneracyConstant::General { g, closed_form } => {
                assert_relative_eq!(g, 5.0 / 3.0, epsilon = 1e-12);
                assert_relative_eq!(closed_form, 5.0 / 3.0, epsilon = 1e-12);
            }
            _ => panic!("N=3 should be general"),
        }
        match CirculantSystem::build(1).unwrap().nondegeneracy_constant() {
            NondegeneracyConstant::N1 { left, right } => {
                assert_eq!(left, -1.0);
                assert_eq!(right, 0.0);
            }
            _ => panic!("N=1 is a dichotomy"),
        }
    }

    #[test]
    fn sum_chain_small_cases_and_both_parities() {
        // N=2: Σ_l d_l e^{iβ_{2l}} = -4(2-1) + 8/3 = -4/3
        let s2 = CirculantSystem::build(2).unwrap();
        let reports = s2.verify_sum_chain(1e-10);
        let d2l = reports.iter().find(|r| r.identity == "doubled_phase_sum").unwrap();
        assert_relative_eq!(d2l.lhs_re, -4.0 / 3.0, epsilon = 1e-12);
        assert!(reports.iter().all(|r| r.pass));

        // N=5 (odd) and N=4 (even): -16 + D and -12 + D respectively
        let s5 = CirculantSystem::build(5).unwrap();
        let r5 = s5.verify_sum_chain(1e-9);
        let d5 = r5.iter().find(|r| r.identity == "doubled_phase_sum").unwrap();
        assert_relative_eq!(d5.lhs_re, -16.0 + s5.big_d, epsilon = 1e-9);
        assert!(r5.iter().all(|r| r.pass));

        let s4 = CirculantSystem::build(4).unwrap();
        let r4 = s4.verify_sum_chain(1e-9);
        assert!(r4.iter().all(|r| r.pass));
    }

    #[test]
    fn lambda_sum_cheap_path_agrees() {
        for n in [1usize, 2, 10, 500, 5000] {
            assert!(CirculantSystem::lambda_sum_error(n) < 1e-6 * (n as f64).powi(2).max(1.0));
        }
    }

    #[test]
    fn sum_chain_cheap_path_matches_dense_path() {
        for n in [2usize, 5, 23] {
            let s = CirculantSystem::build(n).unwrap();
            let dense = s.verify_sum_chain(1.0);
            let cheap = CirculantSystem::sum_chain_errors(n);
            for (r, (label, err, _)) in dense.iter().zip(cheap) {
                assert_eq!(r.identity, label);
                assert!((r.abs_error - err).abs() < 1e-12);
            }
        }
    }
}
