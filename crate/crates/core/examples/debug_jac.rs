// scratch: mini-Newton with dense solves, watching Fourier content
use liouville_core::coeff::CoeffExpr;
use liouville_core::family::{eval_global, GlobalSolutionParams};
use liouville_core::solver::linsys::{block_tridiag_solve, jacobian_diagonal, Stencil};
use liouville_core::solver::*;
use num_complex::Complex64;

fn mode_norms(grid: &PolarGrid, v: &[f64]) -> Vec<f64> {
    // RMS per angular mode (crude DFT)
    let nt = grid.n_theta;
    let mut out = vec![0.0; 4];
    for m in 0..4 {
        let mut acc = 0.0;
        for i in 0..grid.n_r {
            let mut re = 0.0;
            let mut im = 0.0;
            for j in 0..nt {
                let t = 2.0 * std::f64::consts::PI * (m * j) as f64 / nt as f64;
                re += v[i * nt + j] * t.cos();
                im += v[i * nt + j] * t.sin();
            }
            acc += (re * re + im * im) / (nt * nt) as f64;
        }
        out[m] = acc.sqrt();
    }
    out
}

fn main() {
    let lambda = 8.0;
    let params = GlobalSolutionParams::new(0, lambda, Complex64::new(0.0, 0.0), 1.0).unwrap();
    let problem = DiskProblem {
        n: 0,
        tau: 1.0,
        h: CoeffExpr::one(),
        grid: GridSpec {
            n_r: 96,
            n_theta: 32,
            grading: GradingSpec {
                cluster_radius: 0.0,
                cluster_spacing: 0.5 * (-lambda / 2.0).exp(),
                plateau: 0.0,
                slope: 0.3,
                max_spacing_frac: 0.05,
            },
        },
        boundary_value: eval_global(&params, Complex64::new(1.0, 0.0)),
    };
    let grid = problem.build_grid();
    let stencil = Stencil::new(&grid);
    let nlen = grid.len();
    let resid = |uu: &[f64]| -> Vec<f64> {
        let mut f = vec![0.0; nlen];
        stencil.apply_laplacian(&grid, uu, problem.boundary_value, &mut f);
        for k in 0..nlen {
            let (i, j) = (k / grid.n_theta, k % grid.n_theta);
            let p = grid.node(i, j);
            f[k] += grid.area(i) * problem.h.value(p) * uu[k].exp();
        }
        f
    };

    let exact = field_from_family(&problem, &params);
    let mut u: Vec<f64> = exact.iter().map(|v| v * 0.9).collect();
    for it in 0..12 {
        let f = resid(&u);
        let fnorm = f.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        let fm = mode_norms(&grid, &f);
        let w: Vec<f64> = (0..nlen)
            .map(|k| {
                let (i, j) = (k / grid.n_theta, k % grid.n_theta);
                let p = grid.node(i, j);
                grid.area(i) * problem.h.value(p) * u[k].exp()
            })
            .collect();
        let diag = jacobian_diagonal(&grid, &stencil, &w);
        let rhs: Vec<f64> = f.iter().map(|t| -t).collect();
        let dx = block_tridiag_solve(&grid, &stencil, &diag, &rhs);
        let dxnorm = dx.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        let dm = mode_norms(&grid, &dx);
        println!(
            "it={it} fnorm={fnorm:.3e} f_modes={:.2e}/{:.2e}/{:.2e}/{:.2e} |dx|={dxnorm:.3e} dx_modes={:.2e}/{:.2e}/{:.2e}/{:.2e}",
            fm[0], fm[1], fm[2], fm[3], dm[0], dm[1], dm[2], dm[3]
        );
        // plain full step
        let mut best_t = 1.0;
        let mut best = f64::INFINITY;
        for k in 0..20 {
            let t = 0.5f64.powi(k);
            let ut: Vec<f64> = u.iter().zip(&dx).map(|(a, b)| a + t * b).collect();
            let ft = resid(&ut);
            let fn_t = ft.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
            if fn_t < best {
                best = fn_t;
                best_t = t;
            }
            if fn_t < fnorm {
                break;
            }
        }
        println!("   best t={best_t:.3e} -> {best:.3e}");
        for k in 0..nlen {
            u[k] += best_t * dx[k];
        }
    }
    let sup = u
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    println!("final sup err vs family sample: {sup:.3e}");

    // profiles at the stuck point
    let f = resid(&u);
    let w: Vec<f64> = (0..nlen)
        .map(|k| {
            let (i, j) = (k / grid.n_theta, k % grid.n_theta);
            let p = grid.node(i, j);
            grid.area(i) * problem.h.value(p) * u[k].exp()
        })
        .collect();
    let diag = jacobian_diagonal(&grid, &stencil, &w);
    let rhs: Vec<f64> = f.iter().map(|t| -t).collect();
    let dx = block_tridiag_solve(&grid, &stencil, &diag, &rhs);
    println!("ring profiles: i r spacing  F  dx  u  u_exact  w");
    for i in 0..grid.n_r {
        if i % 3 != 0 && i > 12 {
            continue;
        }
        let k = i * grid.n_theta;
        println!(
            "{i:3} {:.5} {:.2e}  {:+.3e}  {:+.3e}  {:+.4e} {:+.4e}  {:.2e}",
            grid.r[i],
            grid.edges[i + 1] - grid.edges[i],
            f[k],
            dx[k],
            u[k],
            exact[k],
            w[k]
        );
    }
}
