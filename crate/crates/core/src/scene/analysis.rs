//! Integrability diagnostics for normal fields.
//!
//! A normal field is converted to slopes `p = (-n_x / n_z, -n_y / n_z)`; a field
//! that comes from a height map has `p = ∇h` and zero curl. Impossible shapes
//! show up as nonzero curl and as a residual that no height map can remove.
//! Nothing here repairs a field.

use thiserror::Error;

use crate::field::{Field2D, Vec2, Vec3};

/// Pixels with `|n_z| <= DEFAULT_EPS_Z` are masked out of slope space.
pub const DEFAULT_EPS_Z: f64 = 1e-3;

/// Noise floor for the background curl level used by [`flag_nonconservative`].
const CURL_NOISE_FLOOR: f64 = 1e-6;

/// Slope field and silhouette mask (`true` = masked) of a normal field.
pub fn normals_to_slopes(normals: &Field2D<Vec3>, eps_z: f64) -> (Field2D<Vec2>, Field2D<bool>) {
    let slopes = normals.map(|n| {
        if n.z.abs() > eps_z {
            Vec2::new(-n.x / n.z, -n.y / n.z)
        } else {
            Vec2::zeros()
        }
    });
    let mask = normals.map(|n| n.z.abs() <= eps_z);
    (slopes, mask)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurlReport {
    /// `∂p_y/∂u - ∂p_x/∂v`; zero on masked pixels.
    pub residual: Field2D<f64>,
    /// Pixels whose stencil touches a masked normal.
    pub masked: Field2D<bool>,
}

impl CurlReport {
    pub fn masked_fraction(&self) -> f64 {
        let n = self.masked.values().iter().filter(|&&m| m).count();
        n as f64 / self.masked.values().len() as f64
    }

    /// Largest `|curl|` over interior (non-border) unmasked pixels.
    pub fn max_interior(&self) -> f64 {
        let (w, h) = self.residual.dims();
        let mut m = 0.0f64;
        for j in 1..h.saturating_sub(1) {
            for i in 1..w.saturating_sub(1) {
                if !self.masked.get(i, j) {
                    m = m.max(self.residual.get(i, j).abs());
                }
            }
        }
        m
    }
}

/// Derivative stencil along one axis: (lower index, upper index, spacing multiplier).
#[inline]
fn stencil(k: usize, n: usize) -> Option<(usize, usize, f64)> {
    if n < 2 {
        None
    } else if k == 0 {
        Some((0, 1, 1.0))
    } else if k == n - 1 {
        Some((n - 2, n - 1, 1.0))
    } else {
        Some((k - 1, k + 1, 2.0))
    }
}

/// Discrete curl of the slope field of `normals`, by central differences.
pub fn curl_residual(normals: &Field2D<Vec3>, eps_z: f64) -> CurlReport {
    let (slopes, mask) = normals_to_slopes(normals, eps_z);
    let (w, h) = normals.dims();
    let du = 1.0 / w as f64;
    let dv = 1.0 / h as f64;
    let cell = Field2D::from_fn(w, h, |i, j| {
        if mask.get(i, j) {
            return (0.0, true);
        }
        let mut curl = 0.0;
        if let Some((a, b, m)) = stencil(i, w) {
            if mask.get(a, j) || mask.get(b, j) {
                return (0.0, true);
            }
            curl += (slopes.get(b, j).y - slopes.get(a, j).y) / (m * du);
        }
        if let Some((a, b, m)) = stencil(j, h) {
            if mask.get(i, a) || mask.get(i, b) {
                return (0.0, true);
            }
            curl -= (slopes.get(i, b).x - slopes.get(i, a).x) / (m * dv);
        }
        (curl, false)
    });
    CurlReport {
        residual: cell.map(|c| c.0),
        masked: cell.map(|c| c.1),
    }
}

/// Pixels whose `|curl|` exceeds `factor` times the background level (the
/// median `|curl|` over unmasked pixels, floored at a small noise level).
pub fn flag_nonconservative(report: &CurlReport, factor: f64) -> Field2D<bool> {
    let mut mags: Vec<f64> = report
        .residual
        .values()
        .iter()
        .zip(report.masked.values())
        .filter(|(_, &m)| !m)
        .map(|(r, _)| r.abs())
        .collect();
    let background = if mags.is_empty() {
        CURL_NOISE_FLOOR
    } else {
        let mid = mags.len() / 2;
        let (_, median, _) = mags.select_nth_unstable_by(mid, f64::total_cmp);
        median.max(CURL_NOISE_FLOOR)
    };
    report
        .residual
        .zip_map(&report.masked, |r, m| !m && r.abs() > factor * background)
        .expect("same resolution")
}

/// Circulation of the slope field around the plaquette with lower-left pixel
/// center `(i, j)`, divided by its area. Trapezoid rule on each edge.
pub fn discrete_circulation(slopes: &Field2D<Vec2>, i: usize, j: usize) -> f64 {
    let du = 1.0 / slopes.width() as f64;
    let dv = 1.0 / slopes.height() as f64;
    let p00 = slopes.get(i, j);
    let p10 = slopes.get(i + 1, j);
    let p11 = slopes.get(i + 1, j + 1);
    let p01 = slopes.get(i, j + 1);
    let circ = 0.5 * (p00.x + p10.x) * du + 0.5 * (p10.y + p11.y) * dv
        - 0.5 * (p11.x + p01.x) * du
        - 0.5 * (p01.y + p00.y) * dv;
    circ / (du * dv)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationResult {
    /// Least-squares height, mean zero over unmasked pixels, zero on masked ones.
    pub height: Field2D<f64>,
    /// RMS over unmasked pixels of `|∇h - p|`, measured on grid edges.
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum IntegrationError {
    #[error("Poisson solve did not reach relative residual {tolerance:e} in {iterations} iterations (at {achieved:e})")]
    SolverDiverged {
        iterations: usize,
        tolerance: f64,
        achieved: f64,
    },
}

const SOLVER_TOLERANCE: f64 = 1e-8;

/// Edge set of the least-squares problem: a grid edge is active when both
/// endpoints are unmasked. Weights are `1 / spacing²`.
struct EdgeGraph {
    w: usize,
    h: usize,
    horiz: Vec<bool>,
    vert: Vec<bool>,
    wx: f64,
    wy: f64,
}

impl EdgeGraph {
    #[inline]
    fn h_ok(&self, i: usize, j: usize) -> bool {
        self.horiz[j * (self.w - 1) + i]
    }
    #[inline]
    fn v_ok(&self, i: usize, j: usize) -> bool {
        self.vert[j * self.w + i]
    }

    /// `y = L x`, the weighted graph Laplacian.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let w = self.w;
        y.iter_mut().for_each(|v| *v = 0.0);
        if w > 1 {
            for j in 0..self.h {
                for i in 0..w - 1 {
                    if self.h_ok(i, j) {
                        let a = j * w + i;
                        let d = self.wx * (x[a + 1] - x[a]);
                        y[a] -= d;
                        y[a + 1] += d;
                    }
                }
            }
        }
        for j in 0..self.h.saturating_sub(1) {
            for i in 0..w {
                if self.v_ok(i, j) {
                    let a = j * w + i;
                    let d = self.wy * (x[a + w] - x[a]);
                    y[a] -= d;
                    y[a + w] += d;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares height whose gradient best matches the slope field of
/// `normals` (discrete Poisson problem with natural boundary conditions,
/// solved by conjugate gradients).
pub fn integrate_normals(normals: &Field2D<Vec3>, eps_z: f64) -> Result<IntegrationResult, IntegrationError> {
    let (slopes, mask) = normals_to_slopes(normals, eps_z);
    let (w, h) = normals.dims();
    let n = w * h;
    let du = 1.0 / w as f64;
    let dv = 1.0 / h as f64;

    let mut horiz = vec![false; (w.max(2) - 1) * h];
    let mut vert = vec![false; w * (h.max(2) - 1)];
    // Edge targets: average slope times spacing, i.e. the expected height step.
    let mut b = vec![0.0; n];
    let (wx, wy) = (1.0 / (du * du), 1.0 / (dv * dv));
    for j in 0..h {
        for i in 0..w.saturating_sub(1) {
            if !mask.get(i, j) && !mask.get(i + 1, j) {
                horiz[j * (w - 1) + i] = true;
                let g = 0.5 * (slopes.get(i, j).x + slopes.get(i + 1, j).x) * du;
                let a = j * w + i;
                b[a] -= wx * g;
                b[a + 1] += wx * g;
            }
        }
    }
    for j in 0..h.saturating_sub(1) {
        for i in 0..w {
            if !mask.get(i, j) && !mask.get(i, j + 1) {
                vert[j * w + i] = true;
                let g = 0.5 * (slopes.get(i, j).y + slopes.get(i, j + 1).y) * dv;
                let a = j * w + i;
                b[a] -= wy * g;
                b[a + w] += wy * g;
            }
        }
    }
    let graph = EdgeGraph {
        w,
        h,
        horiz,
        vert,
        wx,
        wy,
    };

    let mut x = vec![0.0; n];
    let b_norm = dot(&b, &b).sqrt();
    let mut iterations = 0;
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr = dot(&r, &r);
        let cap = 20 * (w + h) + 1000;
        loop {
            if rr.sqrt() <= SOLVER_TOLERANCE * b_norm {
                break;
            }
            if iterations >= cap {
                return Err(IntegrationError::SolverDiverged {
                    iterations,
                    tolerance: SOLVER_TOLERANCE,
                    achieved: rr.sqrt() / b_norm,
                });
            }
            graph.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rr / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
            iterations += 1;
        }
    }

    // Gauge: mean zero over unmasked pixels.
    let unmasked: Vec<usize> = (0..n).filter(|&k| !mask.values()[k]).collect();
    if !unmasked.is_empty() {
        let mean = unmasked.iter().map(|&k| x[k]).sum::<f64>() / unmasked.len() as f64;
        for &k in &unmasked {
            x[k] -= mean;
        }
    }
    for (k, v) in x.iter_mut().enumerate() {
        if mask.values()[k] {
            *v = 0.0;
        }
    }

    let mut sq = 0.0;
    for j in 0..h {
        for i in 0..w.saturating_sub(1) {
            if graph.h_ok(i, j) {
                let a = j * w + i;
                let target = 0.5 * (slopes.get(i, j).x + slopes.get(i + 1, j).x);
                sq += ((x[a + 1] - x[a]) / du - target).powi(2);
            }
        }
    }
    for j in 0..h.saturating_sub(1) {
        for i in 0..w {
            if graph.v_ok(i, j) {
                let a = j * w + i;
                let target = 0.5 * (slopes.get(i, j).y + slopes.get(i, j + 1).y);
                sq += ((x[a + w] - x[a]) / dv - target).powi(2);
            }
        }
    }
    let residual_norm = if unmasked.is_empty() {
        0.0
    } else {
        (sq / unmasked.len() as f64).sqrt()
    };

    Ok(IntegrationResult {
        height: Field2D::from_vec(w, h, x).expect("dimensions preserved"),
        residual_norm,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{finite_diff_gradient, gradient_to_normals};
    use std::f64::consts::PI;

    fn slopes_to_normals(p: &Field2D<Vec2>) -> Field2D<Vec3> {
        p.map(|s| Vec3::new(-s.x, -s.y, 1.0).normalize())
    }

    #[test]
    fn analytic_gradient_field_is_curl_free() {
        let n = 128;
        let p = Field2D::from_uv_fn(n, n, |u, v| Vec2::new(2.0 * u, 2.0 * v));
        let report = curl_residual(&slopes_to_normals(&p), DEFAULT_EPS_Z);
        let du = 1.0 / n as f64;
        assert!(report.max_interior() <= du * du, "{}", report.max_interior());
        assert_eq!(report.masked_fraction(), 0.0);
    }

    #[test]
    fn rotation_has_curl_two() {
        let n = 256;
        let p = Field2D::from_uv_fn(n, n, |u, v| Vec2::new(-v, u));
        let report = curl_residual(&slopes_to_normals(&p), DEFAULT_EPS_Z);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                assert!((report.residual.get(i, j) - 2.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn silhouettes_are_masked() {
        let mut normals = Field2D::new(8, 8, Vec3::new(0.0, 0.0, 1.0));
        normals.set(4, 4, Vec3::new(1.0, 0.0, 0.0));
        let report = curl_residual(&normals, DEFAULT_EPS_Z);
        assert!(report.masked.get(4, 4) && report.masked.get(3, 4) && report.masked.get(4, 5));
        assert!(!report.masked.get(1, 1));
        assert_eq!(report.residual.get(4, 4), 0.0);
    }

    #[test]
    fn ramp_integrates_exactly() {
        let n = 64;
        let h = Field2D::from_uv_fn(n, n, |u, _| 0.3 * u);
        let normals = gradient_to_normals(&finite_diff_gradient(&h));
        let res = integrate_normals(&normals, DEFAULT_EPS_Z).unwrap();
        let mean = h.mean();
        let rms = (h
            .values()
            .iter()
            .zip(res.height.values())
            .map(|(a, b)| (a - mean - b).powi(2))
            .sum::<f64>()
            / (n * n) as f64)
            .sqrt();
        assert!(rms <= 1e-6, "rms {rms}");
        assert!(res.residual_norm <= 1e-6, "residual {}", res.residual_norm);
    }

    #[test]
    fn rotation_leaves_residual() {
        let n = 128;
        let p = Field2D::from_uv_fn(n, n, |u, v| Vec2::new(-v, u));
        let res = integrate_normals(&slopes_to_normals(&p), DEFAULT_EPS_Z).unwrap();
        assert!(res.residual_norm > 0.1, "{}", res.residual_norm);
    }

    #[test]
    fn smooth_height_recovered() {
        let n = 128;
        let analytic = |u: f64, v: f64| (2.0 * PI * u).sin() * (2.0 * PI * v).sin();
        let normals = Field2D::from_uv_fn(n, n, |u, v| {
            let hx = 2.0 * PI * (2.0 * PI * u).cos() * (2.0 * PI * v).sin();
            let hy = 2.0 * PI * (2.0 * PI * u).sin() * (2.0 * PI * v).cos();
            Vec3::new(-hx, -hy, 1.0).normalize()
        });
        let res = integrate_normals(&normals, DEFAULT_EPS_Z).unwrap();
        let truth = Field2D::from_uv_fn(n, n, analytic);
        let mean = truth.mean();
        let rms = (truth
            .values()
            .iter()
            .zip(res.height.values())
            .map(|(a, b)| (a - mean - b).powi(2))
            .sum::<f64>()
            / (n * n) as f64)
            .sqrt();
        assert!(rms <= 1e-3, "rms {rms}");
    }

    #[test]
    fn fully_masked_field_is_flat() {
        let normals = Field2D::new(6, 6, Vec3::new(1.0, 0.0, 0.0));
        let res = integrate_normals(&normals, DEFAULT_EPS_Z).unwrap();
        assert!(res.height.values().iter().all(|&h| h == 0.0));
        assert_eq!(res.residual_norm, 0.0);
    }
}
