//! Finite-volume polar grids: cell edges from a fixed graded radial map,
//! nodes at cell midpoints (half-cell offset at the origin), uniform angles.
//!
//! The radial map is the inverse CDF of a spacing profile
//! `w(r) = clamp(|r - r_c|·slope, w_min, w_max)`, so cells cluster at the
//! ring `r_c` where the bubbles live. Refining `n_r` with the profile fixed
//! refines every cell proportionally, which keeps convergence-order
//! measurements clean.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GradingSpec {
    /// Radius the cells cluster at (0 for a central bubble).
    pub cluster_radius: f64,
    /// Target spacing at the cluster, as an absolute length.
    pub cluster_spacing: f64,
    /// Half-width of the plateau that keeps the cluster spacing; bubbles
    /// drift along a continuation branch, so the fine region needs slack.
    #[serde(default)]
    pub plateau: f64,
    /// Spacing growth per unit distance from the cluster.
    pub slope: f64,
    /// Spacing cap as a fraction of the domain radius.
    pub max_spacing_frac: f64,
}

impl GradingSpec {
    pub fn uniform() -> Self {
        GradingSpec {
            cluster_radius: 0.0,
            cluster_spacing: f64::INFINITY,
            plateau: 0.0,
            slope: 0.0,
            max_spacing_frac: 1.0,
        }
    }

    pub(crate) fn profile(&self, r: f64, tau: f64) -> f64 {
        let dist = ((r - self.cluster_radius).abs() - self.plateau).max(0.0);
        let w = (dist * self.slope).max(self.cluster_spacing);
        w.min(self.max_spacing_frac * tau)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_r: usize,
    pub n_theta: usize,
    pub grading: GradingSpec,
}

/// Node-and-edge data of one polar grid.
#[derive(Debug, Clone)]
pub struct PolarGrid {
    pub tau: f64,
    pub n_r: usize,
    pub n_theta: usize,
    /// Cell edges, `edges[0] = 0`, `edges[n_r] = tau`.
    pub edges: Vec<f64>,
    /// Node radii (cell midpoints).
    pub r: Vec<f64>,
    pub dtheta: f64,
    pub spec: GridSpec,
}

impl PolarGrid {
    pub fn new(tau: f64, spec: GridSpec) -> Self {
        assert!(tau > 0.0 && spec.n_r >= 4 && spec.n_theta >= 8);
        // tabulate the density 1/w on a fine fixed lattice, integrate, invert
        const FINE: usize = 1 << 14;
        let mut cdf = vec![0.0f64; FINE + 1];
        let dr = tau / FINE as f64;
        for k in 0..FINE {
            let rm = (k as f64 + 0.5) * dr;
            cdf[k + 1] = cdf[k] + dr / spec.grading.profile(rm, tau);
        }
        let total = cdf[FINE];
        let mut edges = Vec::with_capacity(spec.n_r + 1);
        edges.push(0.0);
        let mut k = 0usize;
        for i in 1..spec.n_r {
            let target = total * i as f64 / spec.n_r as f64;
            while k + 1 < FINE && cdf[k + 1] < target {
                k += 1;
            }
            let t = (target - cdf[k]) / (cdf[k + 1] - cdf[k]);
            edges.push((k as f64 + t) * dr);
        }
        edges.push(tau);
        let r: Vec<f64> = (0..spec.n_r).map(|i| 0.5 * (edges[i] + edges[i + 1])).collect();
        PolarGrid {
            tau,
            n_r: spec.n_r,
            n_theta: spec.n_theta,
            edges,
            r,
            dtheta: 2.0 * std::f64::consts::PI / spec.n_theta as f64,
            spec,
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    #[inline]
    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> num_complex::Complex64 {
        num_complex::Complex64::from_polar(self.r[i], self.theta(j))
    }

    /// Exact annular-sector cell area.
    #[inline]
    pub fn area(&self, i: usize) -> f64 {
        0.5 * (self.edges[i + 1] * self.edges[i + 1] - self.edges[i] * self.edges[i]) * self.dtheta
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Radial spacing of the cell containing `radius`.
    pub fn radial_spacing_at(&self, radius: f64) -> f64 {
        let i = match self.edges.binary_search_by(|e| e.partial_cmp(&radius).unwrap()) {
            Ok(i) => i.min(self.n_r - 1),
            Err(i) => i.saturating_sub(1).min(self.n_r - 1),
        };
        self.edges[i + 1] - self.edges[i]
    }

    /// Ring index whose node radius is nearest to `radius`.
    pub fn nearest_ring(&self, radius: f64) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, &ri) in self.r.iter().enumerate() {
            let d = (ri - radius).abs();
            if d < bd {
                bd = d;
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_edges_are_uniform() {
        let g = PolarGrid::new(
            2.0,
            GridSpec { n_r: 10, n_theta: 16, grading: GradingSpec::uniform() },
        );
        for i in 0..10 {
            approx::assert_relative_eq!(g.edges[i + 1] - g.edges[i], 0.2, max_relative = 1e-9);
        }
        approx::assert_relative_eq!(g.r[0], 0.1, max_relative = 1e-9);
    }

    #[test]
    fn graded_grid_clusters_at_ring() {
        let spec = GridSpec {
            n_r: 120,
            n_theta: 32,
            grading: GradingSpec {
                cluster_radius: 1.0,
                cluster_spacing: 1e-3,
                plateau: 0.0,
                slope: 0.35,
                max_spacing_frac: 0.05,
            },
        };
        let g = PolarGrid::new(10.0, spec);
        let at_ring = g.radial_spacing_at(1.0);
        let far = g.radial_spacing_at(8.0);
        assert!(at_ring < 3e-3, "spacing at ring {at_ring}");
        assert!(far > 20.0 * at_ring, "far {far} vs ring {at_ring}");
        // edges monotone, cover [0, tau]
        assert_eq!(g.edges[0], 0.0);
        approx::assert_relative_eq!(g.edges[g.n_r], 10.0);
        assert!(g.edges.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn refinement_scales_all_cells() {
        let grading = GradingSpec {
            cluster_radius: 0.5,
            cluster_spacing: 5e-3,
            plateau: 0.0,
            slope: 0.4,
            max_spacing_frac: 0.1,
        };
        let g1 = PolarGrid::new(1.0, GridSpec { n_r: 40, n_theta: 16, grading });
        let g2 = PolarGrid::new(1.0, GridSpec { n_r: 80, n_theta: 16, grading });
        // compare spacing at matching physical radii
        for &rad in &[0.1, 0.5, 0.9] {
            let ratio = g1.radial_spacing_at(rad) / g2.radial_spacing_at(rad);
            assert!((ratio - 2.0).abs() < 0.35, "ratio {ratio} at {rad}");
        }
    }

    #[test]
    fn areas_sum_to_disk() {
        let g = PolarGrid::new(
            3.0,
            GridSpec {
                n_r: 50,
                n_theta: 24,
                grading: GradingSpec {
                    cluster_radius: 1.0,
                    cluster_spacing: 1e-2,
                    plateau: 0.0,
                    slope: 0.5,
                    max_spacing_frac: 0.1,
                },
            },
        );
        let total: f64 = (0..g.n_r).map(|i| g.area(i) * g.n_theta as f64).sum();
        approx::assert_relative_eq!(total, std::f64::consts::PI * 9.0, max_relative = 1e-12);
    }
}
