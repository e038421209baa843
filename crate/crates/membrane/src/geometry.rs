//! Membrane surface geometry.
//!
//! Only surfaces with closed-form distance, normal and projection are
//! admitted: a point in 1-D, a hyperplane and a sphere. The hyperplane is
//! unbounded; it is kept because it is the classical testbed for the skew
//! construction. Everything downstream queries the surface through the
//! signed normal coordinate `s(x)` which is negative in the interior
//! domain, zero on `S` and positive in the exterior.

use crate::error::MembraneError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Interior,
    Exterior,
    On,
}

/// Classification tolerance for externally supplied points.
pub fn on_tolerance(x: &[f64]) -> f64 {
    1e-12 * (1.0 + norm(x))
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    /// Single-point membrane on the line; interior is `x < location`.
    Point1d { location: f64 },
    /// `normal . x = offset` with unit `normal`; interior is `normal . x < offset`.
    Hyperplane { normal: Vec<f64>, offset: f64 },
    Sphere { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Surface {
    pub kind: SurfaceKind,
    pub dim: usize,
    /// Number of surface quadrature points used for `d sigma` integrals.
    pub quadrature_order: usize,
}

impl Surface {
    pub fn point_1d(location: f64) -> Self {
        Surface {
            kind: SurfaceKind::Point1d { location },
            dim: 1,
            quadrature_order: 1,
        }
    }

    pub fn hyperplane(normal: Vec<f64>, offset: f64) -> Result<Self, MembraneError> {
        let n = norm(&normal);
        if (n - 1.0).abs() > 1e-12 {
            return Err(MembraneError::Geometry(format!(
                "hyperplane normal must have unit norm, got |n| = {n}"
            )));
        }
        let dim = normal.len();
        Ok(Surface {
            kind: SurfaceKind::Hyperplane { normal, offset },
            dim,
            quadrature_order: 1,
        })
    }

    pub fn sphere(center: Vec<f64>, radius: f64, quadrature_order: usize) -> Result<Self, MembraneError> {
        if radius <= 0.0 {
            return Err(MembraneError::Geometry(format!(
                "sphere radius must be positive, got {radius}"
            )));
        }
        if quadrature_order == 0 {
            return Err(MembraneError::Geometry("quadrature_order must be >= 1".into()));
        }
        let dim = center.len();
        if dim < 2 {
            return Err(MembraneError::Geometry("sphere requires dim >= 2".into()));
        }
        Ok(Surface {
            kind: SurfaceKind::Sphere { center, radius },
            dim,
            quadrature_order,
        })
    }

    /// Signed normal coordinate: negative interior, positive exterior.
    pub fn signed_coord(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SurfaceKind::Point1d { location } => x[0] - location,
            SurfaceKind::Hyperplane { normal, offset } => dot(normal, x) - offset,
            SurfaceKind::Sphere { center, radius } => radial(x, center) - radius,
        }
    }

    /// `d(x, S)`, the Euclidean distance to the surface.
    pub fn unsigned_distance(&self, x: &[f64]) -> f64 {
        self.signed_coord(x).abs()
    }

    pub fn side(&self, x: &[f64]) -> Side {
        let s = self.signed_coord(x);
        if s.abs() <= on_tolerance(x) {
            Side::On
        } else if s < 0.0 {
            Side::Interior
        } else {
            Side::Exterior
        }
    }

    /// Closest point on `S`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SurfaceKind::Point1d { location } => vec![*location],
            SurfaceKind::Hyperplane { normal, offset } => {
                let s = dot(normal, x) - offset;
                x.iter().zip(normal).map(|(xi, ni)| xi - s * ni).collect()
            }
            SurfaceKind::Sphere { center, radius } => {
                let rho = radial(x, center);
                if rho == 0.0 {
                    // Center is equidistant from all of S; pick a fixed direction.
                    let mut p = center.clone();
                    p[0] += radius;
                    return p;
                }
                center
                    .iter()
                    .zip(x)
                    .map(|(ci, xi)| ci + radius * (xi - ci) / rho)
                    .collect()
            }
        }
    }

    /// Outward unit normal at a surface point (the caller projects first if needed).
    pub fn normal_at(&self, x: &[f64]) -> Result<Vec<f64>, MembraneError> {
        let dist = self.unsigned_distance(x);
        let tol = on_tolerance(x);
        if dist > tol {
            return Err(MembraneError::OffSurface { dist, tol });
        }
        Ok(self.gradient_signed(x))
    }

    /// Gradient of the signed coordinate; equals the outward normal on `S`
    /// and stays a unit vector off `S`.
    pub fn gradient_signed(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            SurfaceKind::Point1d { .. } => vec![1.0],
            SurfaceKind::Hyperplane { normal, .. } => normal.clone(),
            SurfaceKind::Sphere { center, .. } => {
                let rho = radial(x, center);
                if rho == 0.0 {
                    let mut g = vec![0.0; self.dim];
                    g[0] = 1.0;
                    return g;
                }
                x.iter().zip(center).map(|(xi, ci)| (xi - ci) / rho).collect()
            }
        }
    }

    /// Laplacian of the signed coordinate ((d-1)/rho for the sphere, zero otherwise).
    pub fn laplacian_signed(&self, x: &[f64]) -> f64 {
        match &self.kind {
            SurfaceKind::Point1d { .. } | SurfaceKind::Hyperplane { .. } => 0.0,
            SurfaceKind::Sphere { center, .. } => {
                let rho = radial(x, center);
                if rho == 0.0 {
                    0.0
                } else {
                    (self.dim as f64 - 1.0) / rho
                }
            }
        }
    }

    /// Surface quadrature nodes and weights for `d sigma`.
    ///
    /// Point membrane: single node, unit weight (the surface measure is the
    /// counting measure). Sphere in d = 2: uniform angular grid. Other cases
    /// have no bounded closed-form quadrature here.
    pub fn quadrature(&self) -> Result<Vec<(Vec<f64>, f64)>, MembraneError> {
        match &self.kind {
            SurfaceKind::Point1d { location } => Ok(vec![(vec![*location], 1.0)]),
            SurfaceKind::Hyperplane { .. } => Err(MembraneError::Unsupported(
                "no surface quadrature for the unbounded hyperplane".into(),
            )),
            SurfaceKind::Sphere { center, radius } => {
                if self.dim != 2 {
                    return Err(MembraneError::Unsupported(
                        "sphere quadrature implemented for d = 2 only".into(),
                    ));
                }
                let n = self.quadrature_order;
                let w = 2.0 * std::f64::consts::PI * radius / n as f64;
                Ok((0..n)
                    .map(|i| {
                        let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                        (
                            vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()],
                            w,
                        )
                    })
                    .collect())
            }
        }
    }

    /// `phi_m(x) = eta_m(d(x,S)) * d(x,S)` from the capped-distance family.
    pub fn capped_distance(&self, x: &[f64], m: u32) -> f64 {
        let d = self.unsigned_distance(x);
        cap_profile(d, m) * d
    }
}

fn radial(x: &[f64], center: &[f64]) -> f64 {
    x.iter()
        .zip(center)
        .map(|(xi, ci)| (xi - ci) * (xi - ci))
        .sum::<f64>()
        .sqrt()
}

/// The cap `eta_m`: 1 on [0, m], 0 off [0, m+1], quintic smoothstep in between
/// (C^2 with vanishing first and second derivatives at both ends).
pub fn cap_profile(s: f64, m: u32) -> f64 {
    let m = m as f64;
    if s <= m {
        1.0
    } else if s >= m + 1.0 {
        0.0
    } else {
        1.0 - smoothstep_quintic(s - m)
    }
}

pub fn cap_profile_d1(s: f64, m: u32) -> f64 {
    let m = m as f64;
    if s <= m || s >= m + 1.0 {
        0.0
    } else {
        -smoothstep_quintic_d1(s - m)
    }
}

pub fn cap_profile_d2(s: f64, m: u32) -> f64 {
    let m = m as f64;
    if s <= m || s >= m + 1.0 {
        0.0
    } else {
        -smoothstep_quintic_d2(s - m)
    }
}

fn smoothstep_quintic(u: f64) -> f64 {
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

fn smoothstep_quintic_d1(u: f64) -> f64 {
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}

fn smoothstep_quintic_d2(u: f64) -> f64 {
    60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sphere_radial_distance() {
        let s = Surface::sphere(vec![0.0, 0.0], 1.0, 16).unwrap();
        assert_abs_diff_eq!(s.unsigned_distance(&[2.0, 0.0]), 1.0);
        assert_eq!(s.side(&[0.5, 0.0]), Side::Interior);
        assert_eq!(s.side(&[0.0, 1.0]), Side::On);
        let p = s.project(&[0.3, -0.1]);
        assert!(s.unsigned_distance(&p) <= on_tolerance(&p));
        assert_eq!(s.side(&p), Side::On);
    }

    #[test]
    fn hyperplane_distance_and_convention() {
        let s = Surface::hyperplane(vec![0.0, 1.0], 0.0).unwrap();
        assert_abs_diff_eq!(s.unsigned_distance(&[0.3, -0.7]), 0.7);
        let line = Surface::hyperplane(vec![1.0], 0.0).unwrap();
        assert_eq!(line.side(&[-3.0]), Side::Interior);
    }

    #[test]
    fn on_points_have_zero_distance() {
        let s = Surface::point_1d(0.0);
        assert_eq!(s.side(&[0.0]), Side::On);
        assert_eq!(s.unsigned_distance(&[0.0]), 0.0);
    }

    #[test]
    fn conormal_examples() {
        let s = Surface::sphere(vec![0.0, 0.0], 1.0, 8).unwrap();
        let nu = s.normal_at(&[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(nu[0], 0.0);
        assert_abs_diff_eq!(nu[1], 1.0);
        assert!(s.normal_at(&[0.0, 1.5]).is_err());
    }

    #[test]
    fn capped_distance_profile() {
        let s = Surface::point_1d(0.0);
        assert_abs_diff_eq!(s.capped_distance(&[0.5], 1), 0.5);
        assert_abs_diff_eq!(s.capped_distance(&[2.5], 1), 0.0);
        // eta_1(1.5) = 0.5 for the symmetric smoothstep.
        assert_abs_diff_eq!(s.capped_distance(&[1.5], 1), 0.75);
    }

    #[test]
    fn cap_profile_is_c2_at_edges() {
        for m in [1u32, 3] {
            for edge in [m as f64, m as f64 + 1.0] {
                let h = 1e-6;
                let d1 = (cap_profile(edge + h, m) - cap_profile(edge - h, m)) / (2.0 * h);
                assert!(d1.abs() < 1e-4, "first derivative should vanish at {edge}");
                assert!(cap_profile_d1(edge, m).abs() < 1e-12);
                assert!(cap_profile_d2(edge, m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_quadrature_sums_to_area() {
        let s = Surface::sphere(vec![0.0, 0.0], 2.0, 37).unwrap();
        let total: f64 = s.quadrature().unwrap().iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(total, 4.0 * std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(Surface::sphere(vec![0.0, 0.0], 0.0, 8).is_err());
        assert!(Surface::hyperplane(vec![0.5, 0.5], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn projection_lies_on_surface(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let s = Surface::sphere(vec![0.25, -0.5], 1.5, 8).unwrap();
            let p = s.project(&[x, y]);
            let tol = 1e-12 * (1.0 + norm(&[x, y]));
            prop_assert!(s.unsigned_distance(&p) <= tol);
        }

        #[test]
        fn distance_matches_projection(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let s = Surface::sphere(vec![0.0, 0.0], 1.0, 8).unwrap();
            let p = s.project(&[x, y]);
            let d = ((x - p[0]).powi(2) + (y - p[1]).powi(2)).sqrt();
            prop_assert!((s.unsigned_distance(&[x, y]) - d).abs() <= 1e-10 * (1.0 + norm(&[x, y])));
        }

        #[test]
        fn capped_distance_monotone_in_m(x in -6.0f64..6.0, m in 1u32..4) {
            let s = Surface::point_1d(0.0);
            let lo = s.capped_distance(&[x], m);
            let hi = s.capped_distance(&[x], m + 1);
            prop_assert!(lo <= hi + 1e-15);
            prop_assert!(hi <= s.unsigned_distance(&[x]) + 1e-15);
        }

        #[test]
        fn normals_have_unit_norm(theta in 0.0f64..6.28) {
            let s = Surface::sphere(vec![0.0, 0.0], 1.0, 8).unwrap();
            let p = vec![theta.cos(), theta.sin()];
            let nu = s.normal_at(&s.project(&p)).unwrap();
            prop_assert!((norm(&nu) - 1.0).abs() < 1e-12);
        }
    }
}
