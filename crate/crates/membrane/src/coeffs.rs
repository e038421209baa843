//! Problem coefficients: the diffusion matrix field `b` with its ellipticity
//! and Hoelder constants, and the membrane functions `q` (skewness) and `r`
//! (delay density) on the surface.

use crate::error::MembraneError;
use crate::geometry::{dot, Surface, SurfaceKind};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Diffusion matrix field over R^d. All admitted forms are symmetric by
/// construction; `Table1d` is a scalar coefficient on the line with linear
/// interpolation, clamped outside the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum DiffusionField {
    /// `b = sigma2 * I`.
    Scalar { sigma2: f64 },
    Diagonal { entries: Vec<f64> },
    ConstMatrix { rows: Vec<Vec<f64>> },
    Table1d { xs: Vec<f64>, values: Vec<f64> },
}

impl DiffusionField {
    pub fn entry(&self, x: &[f64], i: usize, j: usize) -> f64 {
        match self {
            DiffusionField::Scalar { sigma2 } => {
                if i == j {
                    *sigma2
                } else {
                    0.0
                }
            }
            DiffusionField::Diagonal { entries } => {
                if i == j {
                    entries[i]
                } else {
                    0.0
                }
            }
            DiffusionField::ConstMatrix { rows } => rows[i][j],
            DiffusionField::Table1d { xs, values } => {
                debug_assert!(i == 0 && j == 0);
                interp_clamped(xs, values, x[0])
            }
        }
    }

    pub fn matrix(&self, x: &[f64], dim: usize) -> DMatrix<f64> {
        DMatrix::from_fn(dim, dim, |i, j| self.entry(x, i, j))
    }

    pub fn quadratic_form(&self, x: &[f64], theta: &[f64]) -> f64 {
        match self {
            DiffusionField::Scalar { sigma2 } => sigma2 * dot(theta, theta),
            DiffusionField::Diagonal { entries } => entries
                .iter()
                .zip(theta)
                .map(|(b, t)| b * t * t)
                .sum(),
            DiffusionField::ConstMatrix { rows } => rows
                .iter()
                .zip(theta)
                .map(|(row, ti)| ti * dot(row, theta))
                .sum(),
            DiffusionField::Table1d { xs, values } => {
                interp_clamped(xs, values, x[0]) * theta[0] * theta[0]
            }
        }
    }

    /// `b(x) v`.
    pub fn mul_vec(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            DiffusionField::Scalar { sigma2 } => v.iter().map(|vi| sigma2 * vi).collect(),
            DiffusionField::Diagonal { entries } => {
                entries.iter().zip(v).map(|(b, vi)| b * vi).collect()
            }
            DiffusionField::ConstMatrix { rows } => rows.iter().map(|row| dot(row, v)).collect(),
            DiffusionField::Table1d { xs, values } => {
                vec![interp_clamped(xs, values, x[0]) * v[0]]
            }
        }
    }

    /// `b(x)^{1/2} v`, with the square root of the constant-matrix form taken
    /// through a symmetric eigendecomposition.
    pub fn sqrt_mul(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            DiffusionField::Scalar { sigma2 } => {
                let s = sigma2.sqrt();
                v.iter().map(|vi| s * vi).collect()
            }
            DiffusionField::Diagonal { entries } => entries
                .iter()
                .zip(v)
                .map(|(b, vi)| b.sqrt() * vi)
                .collect(),
            DiffusionField::ConstMatrix { rows } => {
                let dim = rows.len();
                let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
                let eig = SymmetricEigen::new(m);
                let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                let vv = nalgebra::DVector::from_column_slice(v);
                let y = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose() * vv;
                y.iter().copied().collect()
            }
            DiffusionField::Table1d { xs, values } => {
                vec![interp_clamped(xs, values, x[0]).sqrt() * v[0]]
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, DiffusionField::Table1d { .. })
    }
}

fn interp_clamped(xs: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return values[0];
    }
    if x >= xs[xs.len() - 1] {
        return values[values.len() - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Scalar function on the surface: constant, or tabulated over the angular
/// coordinate of a d = 2 sphere (piecewise linear, periodic).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SurfaceField {
    Constant { value: f64 },
    Angular { values: Vec<f64> },
}

impl SurfaceField {
    pub fn constant(value: f64) -> Self {
        SurfaceField::Constant { value }
    }

    pub fn eval(&self, surface: &Surface, x: &[f64]) -> f64 {
        match self {
            SurfaceField::Constant { value } => *value,
            SurfaceField::Angular { values } => {
                let center = match &surface.kind {
                    SurfaceKind::Sphere { center, .. } => center,
                    _ => return values[0],
                };
                let theta = (x[1] - center[1]).atan2(x[0] - center[0]);
                let n = values.len() as f64;
                let mut u = theta / (2.0 * std::f64::consts::PI) * n;
                if u < 0.0 {
                    u += n;
                }
                let i = u.floor() as usize % values.len();
                let j = (i + 1) % values.len();
                let w = u - u.floor();
                values[i] * (1.0 - w) + values[j] * w
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            SurfaceField::Constant { value } => *value == 0.0,
            SurfaceField::Angular { values } => values.iter().all(|v| *v == 0.0),
        }
    }
}

/// Validated problem coefficients; immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub b: DiffusionField,
    /// Lower/upper ellipticity bounds from the conditions J.
    pub c1: f64,
    pub c2: f64,
    /// Hoelder constant and exponent for `|b_ij(x) - b_ij(x')| <= L |x-x'|^alpha`.
    pub l_holder: f64,
    pub alpha: f64,
    pub q: SurfaceField,
    pub r: SurfaceField,
}

impl DiffusionSpec {
    pub fn new(
        b: DiffusionField,
        c1: f64,
        c2: f64,
        l_holder: f64,
        alpha: f64,
        q: SurfaceField,
        r: SurfaceField,
    ) -> Result<Self, MembraneError> {
        if !(c1 > 0.0 && c2 >= c1) {
            return Err(MembraneError::Coefficients(format!(
                "need 0 < C1 <= C2, got C1 = {c1}, C2 = {c2}"
            )));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(MembraneError::Coefficients(format!(
                "need 0 < alpha <= 1, got {alpha}"
            )));
        }
        if l_holder < 0.0 {
            return Err(MembraneError::Coefficients("L must be non-negative".into()));
        }
        Ok(DiffusionSpec {
            b,
            c1,
            c2,
            l_holder,
            alpha,
            q,
            r,
        })
    }

    /// Standard Brownian coefficients in d = 1 with constant membrane functions.
    pub fn brownian_1d(q: f64, r: f64) -> Self {
        DiffusionSpec {
            b: DiffusionField::Scalar { sigma2: 1.0 },
            c1: 1.0,
            c2: 1.0,
            l_holder: 0.0,
            alpha: 1.0,
            q: SurfaceField::constant(q),
            r: SurfaceField::constant(r),
        }
    }

    /// `A(x) = q(x) / r(x)`, defined only where `r > 0`.
    pub fn membrane_ratio(&self, surface: &Surface, x: &[f64]) -> Option<f64> {
        let r = self.r.eval(surface, x);
        if r > 0.0 {
            Some(self.q.eval(surface, x) / r)
        } else {
            None
        }
    }

    /// Co-normal vector `N(x) = b(x) nu(x)` at a surface point.
    pub fn conormal(&self, surface: &Surface, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MembraneError> {
        let nu = surface.normal_at(x)?;
        let n = self.b.mul_vec(x, &nu);
        Ok((nu, n))
    }

    /// `(b(x) nu, nu)`, the co-normal normal component.
    pub fn conormal_component(&self, surface: &Surface, x: &[f64]) -> f64 {
        let nu = surface.gradient_signed(x);
        dot(&self.b.mul_vec(x, &nu), &nu)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub what: String,
    pub x: Vec<f64>,
    pub value: f64,
    pub bound: f64,
}

/// Result of the randomized conditions-J audit. This is an audit over a
/// sample budget, not a proof; the worst witnesses are reported either way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionsJReport {
    pub pass: bool,
    pub samples: usize,
    pub violations: Vec<Witness>,
    pub worst_ellipticity_margin: f64,
    pub worst_holder_margin: f64,
}

/// Monte Carlo audit of symmetry, ellipticity, the Hoelder bound and the
/// ranges of `q` and `r`. Violated samples produce a fail report with
/// witnesses rather than an error.
pub fn validate_conditions_j(
    spec: &DiffusionSpec,
    surface: &Surface,
    samples: usize,
    seed: u64,
) -> ConditionsJReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = surface.dim;
    let mut violations = Vec::new();
    let mut worst_ell = f64::INFINITY;
    let mut worst_hold = f64::INFINITY;

    let mut directions: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            e
        })
        .collect();
    for _ in 0..samples {
        let mut th: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let n = crate::geometry::norm(&th);
        if n > 1e-9 {
            th.iter_mut().for_each(|v| *v /= n);
            directions.push(th);
        }
    }

    let sample_point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect()
    };

    for _ in 0..samples {
        let x = sample_point(&mut rng);
        // Symmetry.
        for i in 0..dim {
            for j in (i + 1)..dim {
                let d = (spec.b.entry(&x, i, j) - spec.b.entry(&x, j, i)).abs();
                if d > 1e-12 {
                    violations.push(Witness {
                        what: format!("symmetry b[{i}][{j}]"),
                        x: x.clone(),
                        value: d,
                        bound: 0.0,
                    });
                }
            }
        }
        // Ellipticity along the audit directions.
        for th in &directions {
            let quad = spec.b.quadratic_form(&x, th);
            let lo = quad - spec.c1;
            let hi = spec.c2 - quad;
            worst_ell = worst_ell.min(lo.min(hi));
            if lo < -1e-12 || hi < -1e-12 {
                violations.push(Witness {
                    what: format!("ellipticity along ({})", format_vec(th)),
                    x: x.clone(),
                    value: quad,
                    bound: if lo < 0.0 { spec.c1 } else { spec.c2 },
                });
            }
        }
        // Hoelder bound against a second random point.
        let y = sample_point(&mut rng);
        check_holder(spec, &x, &y, &mut worst_hold, &mut violations);
    }

    // Dense scan for the tabulated 1-D coefficient: adjacent nodes carry the
    // steepest slopes of the interpolant.
    if let DiffusionField::Table1d { xs, .. } = &spec.b {
        for w in xs.windows(2) {
            let x = [w[0]];
            let y = [w[1]];
            check_holder(spec, &x, &y, &mut worst_hold, &mut violations);
        }
    }

    // Membrane function ranges on sampled surface points.
    if let Ok(quad) = surface.quadrature() {
        for (z, _) in &quad {
            let qv = spec.q.eval(surface, z);
            if qv.abs() > 1.0 + 1e-12 {
                violations.push(Witness {
                    what: "skewness |q| <= 1".into(),
                    x: z.clone(),
                    value: qv,
                    bound: 1.0,
                });
            }
            let rv = spec.r.eval(surface, z);
            if rv < 0.0 {
                violations.push(Witness {
                    what: "delay r >= 0".into(),
                    x: z.clone(),
                    value: rv,
                    bound: 0.0,
                });
            }
        }
    }

    ConditionsJReport {
        pass: violations.is_empty(),
        samples,
        violations,
        worst_ellipticity_margin: worst_ell,
        worst_holder_margin: worst_hold,
    }
}

fn check_holder(
    spec: &DiffusionSpec,
    x: &[f64],
    y: &[f64],
    worst: &mut f64,
    violations: &mut Vec<Witness>,
) {
    let dist: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dist < 1e-12 {
        return;
    }
    let dim = x.len();
    for i in 0..dim {
        for j in 0..dim {
            let diff = (spec.b.entry(x, i, j) - spec.b.entry(y, i, j)).abs();
            let bound = spec.l_holder * dist.powf(spec.alpha);
            *worst = worst.min(bound - diff);
            if diff > bound + 1e-12 {
                violations.push(Witness {
                    what: format!("holder b[{i}][{j}] against x' = ({})", format_vec(y)),
                    x: x.to_vec(),
                    value: diff,
                    bound,
                });
            }
        }
    }
}

fn format_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_passes_audit() {
        let spec = DiffusionSpec::brownian_1d(0.0, 0.0);
        let surface = Surface::point_1d(0.0);
        let report = validate_conditions_j(&spec, &surface, 200, 7);
        assert!(report.pass, "violations: {:?}", report.violations);
    }

    #[test]
    fn diagonal_ellipticity_bounds() {
        let surface = Surface::sphere(vec![0.0, 0.0], 1.0, 8).unwrap();
        let b = DiffusionField::Diagonal { entries: vec![1.0, 4.0] };
        let ok = DiffusionSpec::new(
            b.clone(), 1.0, 4.0, 0.0, 1.0,
            SurfaceField::constant(0.0), SurfaceField::constant(0.0),
        )
        .unwrap();
        assert!(validate_conditions_j(&ok, &surface, 100, 3).pass);

        let bad = DiffusionSpec::new(
            b, 1.0, 2.0, 0.0, 1.0,
            SurfaceField::constant(0.0), SurfaceField::constant(0.0),
        )
        .unwrap();
        let report = validate_conditions_j(&bad, &surface, 100, 3);
        assert!(!report.pass);
        assert!(report
            .violations
            .iter()
            .any(|w| w.what.contains("ellipticity") && w.value > 2.0));
    }

    #[test]
    fn holder_violation_found_by_scan() {
        // b(x) = 1 + 0.5 sin(x) tabulated densely; max slope 0.5 > claimed L = 0.1.
        let xs: Vec<f64> = (0..=2000).map(|i| -5.0 + i as f64 * 0.005).collect();
        let values: Vec<f64> = xs.iter().map(|x| 1.0 + 0.5 * x.sin()).collect();
        let spec = DiffusionSpec::new(
            DiffusionField::Table1d { xs, values },
            0.5,
            1.5,
            0.1,
            1.0,
            SurfaceField::constant(0.0),
            SurfaceField::constant(0.0),
        )
        .unwrap();
        let surface = Surface::point_1d(0.0);
        let report = validate_conditions_j(&spec, &surface, 100, 11);
        assert!(!report.pass);
        assert!(report.violations.iter().any(|w| w.what.contains("holder")));
    }

    #[test]
    fn conormal_products() {
        let surface = Surface::sphere(vec![0.0, 0.0], 1.0, 8).unwrap();
        let spec = DiffusionSpec::new(
            DiffusionField::Diagonal { entries: vec![1.0, 4.0] },
            1.0, 4.0, 0.0, 1.0,
            SurfaceField::constant(0.0), SurfaceField::constant(0.0),
        )
        .unwrap();
        let (nu, n) = spec.conormal(&surface, &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(nu[1], 1.0);
        assert_abs_diff_eq!(n[0], 0.0);
        assert_abs_diff_eq!(n[1], 4.0);

        // (b nu, nu) stays within the ellipticity window.
        for theta in [0.1f64, 1.0, 2.5, 4.0] {
            let p = [theta.cos(), theta.sin()];
            let c = spec.conormal_component(&surface, &p);
            assert!((1.0..=4.0).contains(&c));
        }

        // d = 1 point membrane with b = sigma^2.
        let line = Surface::point_1d(0.0);
        let s1 = DiffusionSpec::new(
            DiffusionField::Scalar { sigma2 : 2.25 },
            2.25, 2.25, 0.0, 1.0,
            SurfaceField::constant(0.0), SurfaceField::constant(0.0),
        )
        .unwrap();
        let (nu, n) = s1.conormal(&line, &[0.0]).unwrap();
        assert_abs_diff_eq!(nu[0], 1.0);
        assert_abs_diff_eq!(n[0], 2.25);
    }

    #[test]
    fn sqrt_mul_matches_matrix_sqrt() {
        let b = DiffusionField::ConstMatrix {
            rows: vec![vec![2.0, 0.5], vec![0.5, 1.0]],
        };
        let v = [1.0, -2.0];
        let half = b.sqrt_mul(&[0.0, 0.0], &v);
        // Apply twice: should equal b v.
        let twice = b.sqrt_mul(&[0.0, 0.0], &half);
        let direct = b.mul_vec(&[0.0, 0.0], &v);
        for i in 0..2 {
            assert_abs_diff_eq!(twice[i], direct[i], epsilon = 1e-12);
        }
    }
}
