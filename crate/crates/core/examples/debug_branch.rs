// scratch: drive the N=1 ring branch and watch phenomenology + timing
use liouville_core::coeff::CoeffExpr;
use liouville_core::solver::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mu_end: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(11.0);
    let ppw: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3.5);
    let t0 = Instant::now();
    let schedule = BranchSchedule::scaled_heights(8.0, mu_end, 0.5);
    let opts = BranchOptions {
        points_per_width: ppw,
        ..BranchOptions::default()
    };
    let h = CoeffExpr::one();
    let result = continue_branch(1, 10.0, &h, 1.0, &schedule, &opts, |step, field| {
        let v = scale_to_v(field, step.delta, step.theta);
        let q: Vec<String> = v
            .peaks
            .iter()
            .map(|p| format!("({:+.4},{:+.4})h={:.2}", p.location.re, p.location.im, p.height))
            .collect();
        println!(
            "mu={:?} c={:.3} meas_mu={:.3} delta={:.4} peaks={} mass/16pi={:.4} res={:.1e} it={} grid={}x{} [{}] t={:.0?}",
            step.target,
            step.boundary_value,
            step.measured_mu,
            step.delta,
            step.peak_count,
            step.mass / (16.0 * std::f64::consts::PI),
            step.residual_norm,
            step.newton_iters,
            step.n_r,
            step.n_theta,
            q.join(" "),
            t0.elapsed()
        );
    });
    match result {
        Ok(r) => {
            println!("terminated: {:?}", r.terminated);
            println!("total {:?}", t0.elapsed());
        }
        Err(e) => println!("error: {e}"),
    }
}
