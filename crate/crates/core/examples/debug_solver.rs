// scratch harness for poking at the Newton solver
use liouville_core::coeff::CoeffExpr;
use liouville_core::family::{eval_global, GlobalSolutionParams};
use liouville_core::solver::*;
use num_complex::Complex64;

fn run(tag: &str, opts: &NewtonOptions) {
    let params = GlobalSolutionParams::new(0, 8.0, Complex64::new(0.0, 0.0), 1.0).unwrap();
    let problem = DiskProblem {
        n: 0,
        tau: 1.0,
        h: CoeffExpr::one(),
        grid: GridSpec {
            n_r: 96,
            n_theta: 32,
            grading: GradingSpec {
                cluster_radius: 0.0,
                cluster_spacing: 0.5 * (-4.0f64).exp(),
                plateau: 0.0,
                slope: 0.3,
                max_spacing_frac: 0.05,
            },
        },
        boundary_value: eval_global(&params, Complex64::new(1.0, 0.0)),
    };
    let exact = field_from_family(&problem, &params);
    let guess: Vec<f64> = exact.iter().map(|v| v * 0.9).collect();
    match solve(&problem, &guess, opts) {
        Ok(sol) => {
            let sup = sol.values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
            println!("{tag}: ok iters={} res={:.3e} sup_err={:.3e} peaks={}", sol.newton_iters, sol.residual_norm, sup, sol.peaks.len());
        }
        Err(e) => println!("{tag}: err: {e}"),
    }
}

fn main() {
    run("direct ", &NewtonOptions { force_direct: true, ..NewtonOptions::default() });
    run("gmres-nopatch", &NewtonOptions { use_patches: false, ..NewtonOptions::default() });
    run("gmres+patch ", &NewtonOptions::default());
}
