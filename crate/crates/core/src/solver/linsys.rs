//! Linear algebra for the Newton step on polar grids.
//!
//! The Jacobian is the finite-volume five-point operator plus a diagonal
//! term concentrated in the bubbles. It is solved by right-preconditioned
//! GMRES where the preconditioner combines
//!
//! * the angularly averaged operator, diagonalized by FFT in the angle into
//!   independent radial tridiagonal solves, and
//! * exact dense solves on small patches around each bubble.
//!
//! A dense block-tridiagonal elimination serves as a direct fallback (and as
//! an independent check of the iterative path) at moderate angular sizes.

use super::grid::PolarGrid;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

/// Finite-volume flux coefficients of the Laplacian on a polar grid.
/// Rows carry O(1) magnitudes by construction (fluxes, not densities).
#[derive(Debug, Clone)]
pub struct Stencil {
    /// Coupling of ring i to ring i+1 (zero on the last ring).
    pub alpha_out: Vec<f64>,
    /// Coupling of ring i to ring i-1 (zero on ring 0; no flux through the origin).
    pub alpha_in: Vec<f64>,
    /// Coupling of the last ring to the Dirichlet boundary value.
    pub alpha_bc: f64,
    /// Angular coupling within ring i.
    pub b_theta: Vec<f64>,
}

impl Stencil {
    pub fn new(grid: &PolarGrid) -> Self {
        let n = grid.n_r;
        let dt = grid.dtheta;
        let mut alpha_out = vec![0.0; n];
        let mut alpha_in = vec![0.0; n];
        let mut b_theta = vec![0.0; n];
        for i in 0..n {
            if i + 1 < n {
                alpha_out[i] = grid.edges[i + 1] * dt / (grid.r[i + 1] - grid.r[i]);
            }
            if i > 0 {
                alpha_in[i] = grid.edges[i] * dt / (grid.r[i] - grid.r[i - 1]);
            }
            b_theta[i] = (grid.edges[i + 1] - grid.edges[i]) / (grid.r[i] * dt);
        }
        let alpha_bc = grid.edges[n] * dt / (grid.tau - grid.r[n - 1]);
        Stencil { alpha_out, alpha_in, alpha_bc, b_theta }
    }

    /// Applies the flux-form Laplacian with Dirichlet constant `bc`.
    pub fn apply_laplacian(&self, grid: &PolarGrid, u: &[f64], bc: f64, out: &mut [f64]) {
        let (nr, nt) = (grid.n_r, grid.n_theta);
        for i in 0..nr {
            let row = i * nt;
            for j in 0..nt {
                let jm = if j == 0 { nt - 1 } else { j - 1 };
                let jp = if j + 1 == nt { 0 } else { j + 1 };
                let c = u[row + j];
                let mut acc = self.b_theta[i] * (u[row + jp] + u[row + jm] - 2.0 * c);
                if i + 1 < nr {
                    acc += self.alpha_out[i] * (u[row + nt + j] - c);
                } else {
                    acc += self.alpha_bc * (bc - c);
                }
                if i > 0 {
                    acc += self.alpha_in[i] * (u[row - nt + j] - c);
                }
                out[row + j] = acc;
            }
        }
    }
}

/// `J x = L x + diag·x` where `diag` already contains the full diagonal
/// (flux diagonal, boundary coupling, and the nonlinear term).
pub struct JacobianOp<'a> {
    pub grid: &'a PolarGrid,
    pub stencil: &'a Stencil,
    /// Full diagonal of J.
    pub diag: Vec<f64>,
}

impl JacobianOp<'_> {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (nr, nt) = (self.grid.n_r, self.grid.n_theta);
        for i in 0..nr {
            let row = i * nt;
            let s = self.stencil;
            for j in 0..nt {
                let jm = if j == 0 { nt - 1 } else { j - 1 };
                let jp = if j + 1 == nt { 0 } else { j + 1 };
                let mut acc = self.diag[row + j] * x[row + j]
                    + s.b_theta[i] * (x[row + jp] + x[row + jm]);
                if i + 1 < nr {
                    acc += s.alpha_out[i] * x[row + nt + j];
                }
                if i > 0 {
                    acc += s.alpha_in[i] * x[row - nt + j];
                }
                out[row + j] = acc;
            }
        }
    }
}

/// Builds the Jacobian diagonal (flux part + boundary + nonlinear part).
pub fn jacobian_diagonal(grid: &PolarGrid, stencil: &Stencil, w_diag: &[f64]) -> Vec<f64> {
    let (nr, nt) = (grid.n_r, grid.n_theta);
    let mut diag = vec![0.0; nr * nt];
    for i in 0..nr {
        let bc = if i + 1 == nr { stencil.alpha_bc } else { 0.0 };
        let base = -stencil.alpha_out[i] - stencil.alpha_in[i] - 2.0 * stencil.b_theta[i] - bc;
        for j in 0..nt {
            diag[i * nt + j] = base + w_diag[i * nt + j];
        }
    }
    diag
}

/// Angular-mean preconditioner: FFT in the angle, Thomas solves in the
/// radius, one factorization per angular mode.
pub struct FourierPrecond {
    n_r: usize,
    n_theta: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Per mode m: lower factors l_i and pivots d_i of the tridiagonal.
    factors: Vec<(Vec<f64>, Vec<f64>)>,
    sup: Vec<f64>,
}

impl FourierPrecond {
    pub fn new(grid: &PolarGrid, stencil: &Stencil, diag: &[f64]) -> Self {
        let (nr, nt) = (grid.n_r, grid.n_theta);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nt);
        let inv = planner.plan_fft_inverse(nt);
        // angular mean of the diagonal per ring
        let mut mean_diag = vec![0.0; nr];
        for i in 0..nr {
            mean_diag[i] = diag[i * nt..(i + 1) * nt].iter().sum::<f64>() / nt as f64;
        }
        let mut factors = Vec::with_capacity(nt);
        for m in 0..nt {
            let cosm = (2.0 * std::f64::consts::PI * m as f64 / nt as f64).cos();
            // the mean diagonal holds −2 b_i; the mode-m angular term adds
            // b_i (2 cos θ_m)
            let mut d = vec![0.0; nr];
            let mut l = vec![0.0; nr];
            for i in 0..nr {
                d[i] = mean_diag[i] + 2.0 * stencil.b_theta[i] * cosm;
            }
            for i in 1..nr {
                l[i] = stencil.alpha_in[i] / d[i - 1];
                d[i] -= l[i] * stencil.alpha_out[i - 1];
            }
            factors.push((l, d));
        }
        FourierPrecond { n_r: nr, n_theta: nt, fwd, inv, factors, sup: stencil.alpha_out.clone() }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (nr, nt) = (self.n_r, self.n_theta);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for i in 0..nr {
            self.fwd.process(&mut buf[i * nt..(i + 1) * nt]);
        }
        // Thomas solve per mode, working down the strided columns
        let mut col = vec![Complex64::new(0.0, 0.0); nr];
        for m in 0..nt {
            let (l, d) = &self.factors[m];
            for i in 0..nr {
                col[i] = buf[i * nt + m];
            }
            for i in 1..nr {
                let li = l[i];
                col[i] = col[i] - li * col[i - 1];
            }
            col[nr - 1] /= d[nr - 1];
            for i in (0..nr - 1).rev() {
                col[i] = (col[i] - self.sup[i] * col[i + 1]) / d[i];
            }
            for i in 0..nr {
                buf[i * nt + m] = col[i];
            }
        }
        for i in 0..nr {
            self.inv.process(&mut buf[i * nt..(i + 1) * nt]);
        }
        let scale = 1.0 / nt as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }
}

/// Exact dense solves on small index patches (the bubbles), layered
/// multiplicatively on the Fourier preconditioner.
pub struct PatchSolver {
    patches: Vec<Patch>,
}

struct Patch {
    cells: Vec<usize>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl PatchSolver {
    /// `centers` are grid indices of bubble peaks; `radius` is the patch
    /// radius in physical length around each.
    pub fn new(
        grid: &PolarGrid,
        stencil: &Stencil,
        diag: &[f64],
        centers: &[usize],
        radius: f64,
        max_cells: usize,
    ) -> Self {
        let nt = grid.n_theta;
        let mut patches = Vec::new();
        for &c in centers {
            let (ci, cj) = (c / nt, c % nt);
            let cp = grid.node(ci, cj);
            let mut cells = Vec::new();
            // scan a ring window around the center
            for i in 0..grid.n_r {
                if (grid.r[i] - grid.r[ci]).abs() > radius {
                    continue;
                }
                for j in 0..nt {
                    if (grid.node(i, j) - cp).norm() <= radius {
                        cells.push(i * nt + j);
                    }
                }
            }
            if cells.len() < 4 || cells.len() > max_cells {
                continue;
            }
            cells.sort_unstable();
            let pos: HashMap<usize, usize> = cells.iter().enumerate().map(|(k, &g)| (g, k)).collect();
            let m = cells.len();
            let mut mat = DMatrix::<f64>::zeros(m, m);
            for (k, &g) in cells.iter().enumerate() {
                let (i, j) = (g / nt, g % nt);
                mat[(k, k)] = diag[g];
                let jm = if j == 0 { nt - 1 } else { j - 1 };
                let jp = if j + 1 == nt { 0 } else { j + 1 };
                for (nb, coef) in [
                    (i * nt + jm, stencil.b_theta[i]),
                    (i * nt + jp, stencil.b_theta[i]),
                    (if i + 1 < grid.n_r { (i + 1) * nt + j } else { usize::MAX }, stencil.alpha_out[i]),
                    (if i > 0 { (i - 1) * nt + j } else { usize::MAX }, stencil.alpha_in[i]),
                ] {
                    if nb != usize::MAX {
                        if let Some(&kk) = pos.get(&nb) {
                            mat[(k, kk)] = coef;
                        }
                    }
                }
            }
            patches.push(Patch { cells, lu: mat.lu() });
        }
        PatchSolver { patches }
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Adds the patch corrections for residual `r` into `z`.
    pub fn apply_add(&self, r: &[f64], z: &mut [f64]) {
        for p in &self.patches {
            let rhs = nalgebra::DVector::from_fn(p.cells.len(), |k, _| r[p.cells[k]]);
            if let Some(sol) = p.lu.solve(&rhs) {
                for (k, &g) in p.cells.iter().enumerate() {
                    z[g] += sol[k];
                }
            }
        }
    }
}

/// The combined preconditioner: Fourier sweep, then a multiplicative patch
/// correction `z += P (r − J z)`.
pub struct Preconditioner<'a> {
    pub fourier: FourierPrecond,
    pub patches: PatchSolver,
    pub jac: &'a JacobianOp<'a>,
}

impl Preconditioner<'_> {
    pub fn apply(&self, r: &[f64], z: &mut [f64], scratch: &mut [f64]) {
        self.fourier.apply(r, z);
        if !self.patches.is_empty() {
            self.jac.apply(z, scratch);
            for (s, rv) in scratch.iter_mut().zip(r) {
                *s = rv - *s;
            }
            self.patches.apply_add(scratch, z);
        }
    }
}

pub struct GmresResult {
    pub converged: bool,
    pub rel_residual: f64,
    pub iterations: usize,
}

/// Right-preconditioned restarted GMRES. Solves `J (M z) = b`, returns
/// `x = M z` accumulated across restarts in `x` (which carries the initial
/// guess on entry).
pub fn gmres(
    jac: &JacobianOp<'_>,
    precond: &Preconditioner<'_>,
    b: &[f64],
    x: &mut [f64],
    restart: usize,
    max_restarts: usize,
    tol_rel: f64,
) -> GmresResult {
    let n = b.len();
    let bnorm = norm2(b).max(1e-300);
    let mut scratch = vec![0.0; n];
    let mut scratch2 = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut total_iters = 0;

    for _ in 0..max_restarts {
        jac.apply(x, &mut r);
        for k in 0..n {
            r[k] = b[k] - r[k];
        }
        let beta = norm2(&r);
        if beta / bnorm < tol_rel {
            return GmresResult { converged: true, rel_residual: beta / bnorm, iterations: total_iters };
        }
        let m = restart;
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|t| t / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total_iters += 1;
            // w = J M v_k
            precond.apply(&v[k], &mut scratch, &mut scratch2);
            let mut w = vec![0.0; n];
            jac.apply(&scratch, &mut w);
            for (iv, vk) in v.iter().enumerate().take(k + 1) {
                let hik = dot(&w, vk);
                h[iv][k] = hik;
                for t in 0..n {
                    w[t] -= hik * vk[t];
                }
            }
            let hkk = norm2(&w);
            h[k + 1][k] = hkk;
            // Givens rotations
            for i in 0..k {
                let tmp = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = tmp;
            }
            let denom = (h[k][k] * h[k][k] + hkk * hkk).sqrt();
            if denom == 0.0 {
                k_used = k + 1;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = hkk / denom;
            h[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if (g[k + 1].abs() / bnorm) < tol_rel || hkk == 0.0 {
                break;
            }
            if k + 1 < m {
                v.push(w.iter().map(|t| t / hkk).collect());
            }
        }
        // back-substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for jj in i + 1..k_used {
                s -= h[i][jj] * y[jj];
            }
            y[i] = s / h[i][i];
        }
        // x += M (V y)
        let mut vy = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            for t in 0..n {
                vy[t] += yi * v[i][t];
            }
        }
        precond.apply(&vy, &mut scratch, &mut scratch2);
        for t in 0..n {
            x[t] += scratch[t];
        }
        jac.apply(x, &mut r);
        for k in 0..n {
            r[k] = b[k] - r[k];
        }
        let rel = norm2(&r) / bnorm;
        if rel < tol_rel {
            return GmresResult { converged: true, rel_residual: rel, iterations: total_iters };
        }
    }
    jac.apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let rel = norm2(&r) / bnorm;
    GmresResult { converged: rel < tol_rel, rel_residual: rel, iterations: total_iters }
}

/// Dense block-tridiagonal elimination over the rings; direct fallback and
/// reference path. Memory and cost scale with `n_r · n_θ²` and `n_r · n_θ³`.
pub fn block_tridiag_solve(
    grid: &PolarGrid,
    stencil: &Stencil,
    diag: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let (nr, nt) = (grid.n_r, grid.n_theta);
    let mut inv_s: Vec<DMatrix<f64>> = Vec::with_capacity(nr);
    let mut y: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(nr);
    for i in 0..nr {
        let mut d = DMatrix::<f64>::zeros(nt, nt);
        for j in 0..nt {
            d[(j, j)] = diag[i * nt + j];
            let jm = if j == 0 { nt - 1 } else { j - 1 };
            let jp = if j + 1 == nt { 0 } else { j + 1 };
            d[(j, jm)] += stencil.b_theta[i];
            d[(j, jp)] += stencil.b_theta[i];
        }
        let mut rhs = nalgebra::DVector::from_fn(nt, |j, _| b[i * nt + j]);
        if i > 0 {
            let coupling = stencil.alpha_in[i] * stencil.alpha_out[i - 1];
            d -= coupling * &inv_s[i - 1];
            rhs -= stencil.alpha_in[i] * (&inv_s[i - 1] * &y[i - 1]);
        }
        let lu = d.lu();
        let inv = lu.try_inverse().expect("block pivot singular");
        y.push(rhs);
        inv_s.push(inv);
    }
    let mut x = vec![0.0; nr * nt];
    let mut prev = inv_s[nr - 1].clone() * &y[nr - 1];
    for j in 0..nt {
        x[(nr - 1) * nt + j] = prev[j];
    }
    for i in (0..nr - 1).rev() {
        let rhs = &y[i] - stencil.alpha_out[i] * &prev;
        prev = &inv_s[i] * rhs;
        for j in 0..nt {
            x[i * nt + j] = prev[j];
        }
    }
    x
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|t| t * t).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
