//! Quadrature rules shared across the crate: Gauss–Legendre nodes, composite
//! graded radial rules, and the periodic trapezoid rule on circles.

use crate::C64;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre polynomial, seeded with the Chebyshev
/// approximation of the roots. Deterministic, accurate to ~1 ulp for the
/// orders used here (n <= 64).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|t| t * h).collect(),
    )
}

/// Breakpoints of a radial partition of `[0, rmax]` graded around a spike.
///
/// Segments double geometrically away from the spike scale `width` (measured
/// from `center`), so an integrand concentrated at `center` with that width is
/// resolved by a fixed Gauss order per segment.
pub fn graded_breakpoints(center: f64, width: f64, rmax: f64) -> Vec<f64> {
    assert!(rmax > 0.0 && width > 0.0);
    let mut pts = vec![center];
    // outward
    let mut w = width;
    let mut r = center + w;
    while r < rmax {
        pts.push(r);
        w *= 2.0;
        r += w;
    }
    pts.push(rmax);
    // inward
    let mut w = width;
    let mut r = center - w;
    while r > 0.0 {
        pts.insert(0, r);
        w *= 2.0;
        r -= w;
    }
    if pts[0] > 0.0 {
        pts.insert(0, 0.0);
    }
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-300);
    pts
}

/// Composite Gauss–Legendre rule over a graded radial partition.
pub fn graded_radial_rule(center: f64, width: f64, rmax: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    let bps = graded_breakpoints(center, width, rmax);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for seg in bps.windows(2) {
        let (x, w) = gauss_legendre_on(seg[0], seg[1], order);
        nodes.extend(x);
        weights.extend(w);
    }
    (nodes, weights)
}

/// Uniform angles `θ_j = 2πj/n` with trapezoid weight `2π/n`; spectrally
/// accurate for smooth periodic integrands.
pub fn circle_angles(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64)
        .collect()
}

/// Integrates `f` over the disk `B(center, radius)` with a tensor rule:
/// graded Gauss–Legendre in the radius (around a spike of scale
/// `spike_width` measured from the ball center) and uniform trapezoid in
/// the angle.
pub fn polar_ball_integral<F: FnMut(C64) -> f64>(
    center: C64,
    radius: f64,
    spike_width: f64,
    gl_order: usize,
    n_angle: usize,
    mut f: F,
) -> f64 {
    let (rs, rw) = graded_radial_rule(0.0, spike_width.min(radius), radius, gl_order);
    let angles = circle_angles(n_angle);
    let wt = 2.0 * std::f64::consts::PI / n_angle as f64;
    let mut total = 0.0;
    for (&r, &w) in rs.iter().zip(&rw) {
        let mut ring = 0.0;
        for &t in &angles {
            ring += f(center + C64::from_polar(r, t));
        }
        total += ring * wt * w * r;
    }
    total
}

/// Integrates `f(θ)` over `[0, 2π)` by the `n`-point trapezoid rule.
pub fn circle_integral<F: FnMut(f64) -> f64>(n: usize, mut f: F) -> f64 {
    let wt = 2.0 * std::f64::consts::PI / n as f64;
    circle_angles(n).iter().map(|&t| f(t) * wt).sum()
}
