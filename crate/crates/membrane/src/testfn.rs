//! Test functions for the martingale checks and PDE data.
//!
//! Each variant is evaluable together with its time derivative, gradient and
//! Hessian away from `S`, and carries one-sided co-normal derivatives on `S`.

use crate::coeffs::DiffusionSpec;
use crate::geometry::{self, dot, Surface};
use crate::quad::CubicSpline;

/// Infinitely differentiable bump supported on `[t0, t1]`, normalized to 1
/// at the midpoint.
#[derive(Debug, Clone, Copy)]
pub struct TimeBump {
    pub t0: f64,
    pub t1: f64,
}

impl TimeBump {
    pub fn new(t0: f64, t1: f64) -> Self {
        assert!(t1 > t0, "bump support must be a nonempty interval");
        TimeBump { t0, t1 }
    }

    pub fn value(&self, t: f64) -> f64 {
        let u = (2.0 * t - self.t0 - self.t1) / (self.t1 - self.t0);
        if u.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - u * u)).exp()
        }
    }

    pub fn d1(&self, t: f64) -> f64 {
        let du = 2.0 / (self.t1 - self.t0);
        let u = (2.0 * t - self.t0 - self.t1) / (self.t1 - self.t0);
        if u.abs() >= 1.0 {
            0.0
        } else {
            let w = 1.0 - u * u;
            self.value(t) * (-2.0 * u / (w * w)) * du
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }
}

/// Which one-sided limit of a co-normal derivative to take at a surface point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Limit {
    Exterior,
    Interior,
}

#[derive(Debug, Clone)]
pub enum TestFunction {
    /// `T(t) * (c0 + lin . x + x^T quad x)` with optional smooth compactly
    /// supported time factor (T = 1 when absent).
    Polynomial {
        c0: f64,
        lin: Vec<f64>,
        quad: Vec<Vec<f64>>,
        time: Option<TimeBump>,
    },
    /// The capped distance `phi_m`.
    CappedDistance { m: u32 },
    /// 1-D grid table with cubic interpolation, splined separately on each
    /// side of the membrane so one-sided derivatives survive.
    Tabulated1d {
        membrane: f64,
        left: CubicSpline,
        right: CubicSpline,
        time: Option<TimeBump>,
    },
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction::Polynomial {
            c0: c,
            lin: vec![],
            quad: vec![],
            time: None,
        }
    }

    pub fn coordinate(i: usize, dim: usize) -> Self {
        let mut lin = vec![0.0; dim];
        lin[i] = 1.0;
        TestFunction::Polynomial {
            c0: 0.0,
            lin,
            quad: vec![vec![0.0; dim]; dim],
            time: None,
        }
    }

    pub fn coordinate_squared(i: usize, dim: usize) -> Self {
        let mut quad = vec![vec![0.0; dim]; dim];
        quad[i][i] = 1.0;
        TestFunction::Polynomial {
            c0: 0.0,
            lin: vec![0.0; dim],
            quad,
            time: None,
        }
    }

    pub fn polynomial(c0: f64, lin: Vec<f64>, quad: Vec<Vec<f64>>, time: Option<TimeBump>) -> Self {
        TestFunction::Polynomial { c0, lin, quad, time }
    }

    /// Sample a scalar function of x into the tabulated variant.
    pub fn tabulated_1d<F: Fn(f64) -> f64>(
        f: F,
        membrane: f64,
        x_min: f64,
        x_max: f64,
        n: usize,
        time: Option<TimeBump>,
    ) -> Self {
        let mut left_xs = Vec::new();
        let mut right_xs = Vec::new();
        for i in 0..=n {
            let x = x_min + (x_max - x_min) * i as f64 / n as f64;
            if x < membrane {
                left_xs.push(x);
            } else if x > membrane {
                right_xs.push(x);
            }
        }
        left_xs.push(membrane);
        let mut right = vec![membrane];
        right.extend(right_xs);
        let left_ys: Vec<f64> = left_xs.iter().map(|&x| f(x)).collect();
        let right_ys: Vec<f64> = right.iter().map(|&x| f(x)).collect();
        TestFunction::Tabulated1d {
            membrane,
            left: CubicSpline::new(left_xs, left_ys),
            right: CubicSpline::new(right, right_ys),
            time,
        }
    }

    pub fn value(&self, t: f64, x: &[f64], surface: &Surface) -> f64 {
        match self {
            TestFunction::Polynomial { c0, lin, quad, time } => {
                let mut v = *c0;
                for (i, xi) in x.iter().enumerate() {
                    if i < lin.len() {
                        v += lin[i] * xi;
                    }
                    for (j, xj) in x.iter().enumerate() {
                        if i < quad.len() {
                            v += quad[i][j] * xi * xj;
                        }
                    }
                }
                v * time_value(time, t)
            }
            TestFunction::CappedDistance { m } => surface.capped_distance(x, *m),
            TestFunction::Tabulated1d { membrane, left, right, time } => {
                let v = if x[0] < *membrane { left.value(x[0]) } else { right.value(x[0]) };
                v * time_value(time, t)
            }
        }
    }

    pub fn dt(&self, t: f64, x: &[f64], surface: &Surface) -> f64 {
        match self {
            TestFunction::Polynomial { time, .. } | TestFunction::Tabulated1d { time, .. } => {
                match time {
                    None => 0.0,
                    Some(bump) => {
                        let base = self.value(t, x, surface) / time_value(time, t).max(f64::MIN_POSITIVE);
                        // Avoid dividing by a vanishing bump: recompute spatial part.
                        let spatial = self.spatial_value(x, surface);
                        let _ = base;
                        spatial * bump.d1(t)
                    }
                }
            }
            TestFunction::CappedDistance { .. } => 0.0,
        }
    }

    fn spatial_value(&self, x: &[f64], surface: &Surface) -> f64 {
        match self {
            TestFunction::Polynomial { c0, lin, quad, .. } => {
                let mut v = *c0;
                for (i, xi) in x.iter().enumerate() {
                    if i < lin.len() {
                        v += lin[i] * xi;
                    }
                    for (j, xj) in x.iter().enumerate() {
                        if i < quad.len() {
                            v += quad[i][j] * xi * xj;
                        }
                    }
                }
                v
            }
            TestFunction::CappedDistance { m } => surface.capped_distance(x, *m),
            TestFunction::Tabulated1d { membrane, left, right, .. } => {
                if x[0] < *membrane {
                    left.value(x[0])
                } else {
                    right.value(x[0])
                }
            }
        }
    }

    pub fn gradient(&self, t: f64, x: &[f64], surface: &Surface) -> Vec<f64> {
        match self {
            TestFunction::Polynomial { lin, quad, time, .. } => {
                let tv = time_value(time, t);
                (0..x.len())
                    .map(|i| {
                        let mut g = if i < lin.len() { lin[i] } else { 0.0 };
                        if i < quad.len() {
                            for (j, xj) in x.iter().enumerate() {
                                g += (quad[i][j] + quad[j][i]) * xj;
                            }
                        }
                        g * tv
                    })
                    .collect()
            }
            TestFunction::CappedDistance { m } => {
                let d = surface.unsigned_distance(x);
                let gp = geometry::cap_profile_d1(d, *m) * d + geometry::cap_profile(d, *m);
                let sgn = surface.signed_coord(x).signum();
                surface
                    .gradient_signed(x)
                    .iter()
                    .map(|gi| gp * sgn * gi)
                    .collect()
            }
            TestFunction::Tabulated1d { membrane, left, right, time } => {
                let tv = time_value(time, t);
                let d = if x[0] < *membrane { left.d1(x[0]) } else { right.d1(x[0]) };
                vec![d * tv]
            }
        }
    }

    /// `1/2 sum_ij b_ij(x) d2f/dx_i dx_j`, the spatial generator term off `S`.
    pub fn half_trace_b_hessian(&self, spec: &DiffusionSpec, surface: &Surface, t: f64, x: &[f64]) -> f64 {
        match self {
            TestFunction::Polynomial { quad, time, .. } => {
                let tv = time_value(time, t);
                let dim = x.len();
                let mut acc = 0.0;
                for i in 0..dim.min(quad.len()) {
                    for j in 0..dim.min(quad.len()) {
                        acc += spec.b.entry(x, i, j) * (quad[i][j] + quad[j][i]);
                    }
                }
                0.5 * acc * tv
            }
            TestFunction::CappedDistance { m } => {
                let d = surface.unsigned_distance(x);
                let eta = geometry::cap_profile(d, *m);
                let eta1 = geometry::cap_profile_d1(d, *m);
                let eta2 = geometry::cap_profile_d2(d, *m);
                let g1 = eta1 * d + eta;
                let g2 = eta2 * d + 2.0 * eta1;
                let sgn = surface.signed_coord(x).signum();
                let grad_s = surface.gradient_signed(x);
                let b_grad = spec.b.quadratic_form(x, &grad_s);
                // b : Hess(s) for the admitted surfaces reduces to the
                // Laplacian term because Hess(s) = (I - u u^T)/rho with u
                // the radial direction (zero for flat surfaces).
                let trace_term = match spec.b {
                    crate::coeffs::DiffusionField::Scalar { sigma2 } => {
                        sigma2 * surface.laplacian_signed(x)
                    }
                    _ => {
                        let dim = x.len();
                        let mut acc = 0.0;
                        let hess = signed_hessian(surface, x);
                        for i in 0..dim {
                            for j in 0..dim {
                                acc += spec.b.entry(x, i, j) * hess[i][j];
                            }
                        }
                        acc
                    }
                };
                0.5 * (g2 * b_grad + g1 * sgn * trace_term)
            }
            TestFunction::Tabulated1d { membrane, left, right, time } => {
                let tv = time_value(time, t);
                let d2 = if x[0] < *membrane { left.d2(x[0]) } else { right.d2(x[0]) };
                0.5 * spec.b.entry(x, 0, 0) * d2 * tv
            }
        }
    }

    /// Full generator integrand `df/dt + 1/2 sum b_ij d2f` used off `S`.
    pub fn generator(&self, spec: &DiffusionSpec, surface: &Surface, t: f64, x: &[f64]) -> f64 {
        self.dt(t, x, surface) + self.half_trace_b_hessian(spec, surface, t, x)
    }

    /// One-sided co-normal derivative at a surface point.
    pub fn conormal_one_sided(
        &self,
        spec: &DiffusionSpec,
        surface: &Surface,
        t: f64,
        x: &[f64],
        side: Limit,
    ) -> f64 {
        match self {
            TestFunction::Polynomial { .. } => {
                // Smooth across S: both limits agree with N . grad f.
                let nu = surface.gradient_signed(x);
                let n = spec.b.mul_vec(x, &nu);
                dot(&n, &self.gradient(t, x, surface))
            }
            TestFunction::CappedDistance { .. } => {
                // grad phi has one-sided limits +-nu; eta_m == 1 near S.
                let c = spec.conormal_component(surface, x);
                match side {
                    Limit::Exterior => c,
                    Limit::Interior => -c,
                }
            }
            TestFunction::Tabulated1d { membrane, left, right, time } => {
                let tv = time_value(time, t);
                let b = spec.b.entry(x, 0, 0);
                match side {
                    Limit::Exterior => b * right.d1(*membrane) * tv,
                    Limit::Interior => b * left.d1(*membrane) * tv,
                }
            }
        }
    }

    /// `Kf(t,x) = (1+q)/2 df/dN(x+) - (1-q)/2 df/dN(x-)` for `x` in `S`.
    pub fn kf(&self, spec: &DiffusionSpec, surface: &Surface, t: f64, x: &[f64]) -> f64 {
        let q = spec.q.eval(surface, x);
        let plus = self.conormal_one_sided(spec, surface, t, x, Limit::Exterior);
        let minus = self.conormal_one_sided(spec, surface, t, x, Limit::Interior);
        0.5 * (1.0 + q) * plus - 0.5 * (1.0 - q) * minus
    }

    pub fn time_support(&self) -> Option<(f64, f64)> {
        match self {
            TestFunction::Polynomial { time, .. } | TestFunction::Tabulated1d { time, .. } => {
                time.map(|b| b.support())
            }
            TestFunction::CappedDistance { .. } => None,
        }
    }
}

fn signed_hessian(surface: &Surface, x: &[f64]) -> Vec<Vec<f64>> {
    let dim = x.len();
    let mut h = vec![vec![0.0; dim]; dim];
    if let crate::geometry::SurfaceKind::Sphere { center, .. } = &surface.kind {
        let u = surface.gradient_signed(x);
        let rho: f64 = x
            .iter()
            .zip(center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt();
        if rho > 0.0 {
            for i in 0..dim {
                for j in 0..dim {
                    let kron = if i == j { 1.0 } else { 0.0 };
                    h[i][j] = (kron - u[i] * u[j]) / rho;
                }
            }
        }
    }
    h
}

fn time_value(time: &Option<TimeBump>, t: f64) -> f64 {
    time.map_or(1.0, |b| b.value(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{DiffusionField, DiffusionSpec, SurfaceField};
    use approx::assert_abs_diff_eq;

    fn bm_spec(q: f64) -> DiffusionSpec {
        DiffusionSpec::brownian_1d(q, 0.0)
    }

    #[test]
    fn k_of_distance_is_one_for_identity_b() {
        let surface = Surface::point_1d(0.0);
        let f = TestFunction::CappedDistance { m: 2 };
        for q in [-1.0, 0.0, 0.3, 1.0] {
            let spec = bm_spec(q);
            assert_abs_diff_eq!(f.kf(&spec, &surface, 0.3, &[0.0]), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn k_of_coordinate_is_q_sigma2() {
        let surface = Surface::point_1d(0.0);
        let f = TestFunction::coordinate(0, 1);
        for (q, sigma2) in [(0.5, 1.0), (-0.3, 2.25), (1.0, 0.5)] {
            let spec = DiffusionSpec::new(
                DiffusionField::Scalar { sigma2 },
                sigma2,
                sigma2,
                0.0,
                1.0,
                SurfaceField::constant(q),
                SurfaceField::constant(0.0),
            )
            .unwrap();
            assert_abs_diff_eq!(f.kf(&spec, &surface, 0.0, &[0.0]), q * sigma2, epsilon = 1e-14);
        }
    }

    #[test]
    fn smooth_crossing_has_zero_k_at_q0() {
        let surface = Surface::point_1d(0.0);
        let spec = bm_spec(0.0);
        let f = TestFunction::tabulated_1d(|x| (x * 1.3).sin(), 0.0, -3.0, 3.0, 600, None);
        assert!(f.kf(&spec, &surface, 0.0, &[0.0]).abs() < 1e-3);
    }

    #[test]
    fn generator_of_quadratic() {
        let surface = Surface::point_1d(0.0);
        let spec = bm_spec(0.0);
        let f = TestFunction::coordinate_squared(0, 1);
        // d/dt + 1/2 * d2/dx2 (x^2) = 1.
        assert_abs_diff_eq!(f.generator(&spec, &surface, 0.1, &[0.7]), 1.0);
    }

    #[test]
    fn capped_distance_generator_on_sphere() {
        let surface = Surface::sphere(vec![0.0, 0.0], 1.0, 16).unwrap();
        let spec = DiffusionSpec::new(
            DiffusionField::Scalar { sigma2: 1.0 },
            1.0, 1.0, 0.0, 1.0,
            SurfaceField::constant(0.0),
            SurfaceField::constant(0.0),
        )
        .unwrap();
        let f = TestFunction::CappedDistance { m: 2 };
        // Away from S (exterior of unit sphere at rho = 2), phi = rho - 1 so
        // 1/2 Lap phi = (d-1)/(2 rho) = 1/4.
        let v = f.half_trace_b_hessian(&spec, &surface, 0.0, &[2.0, 0.0]);
        assert_abs_diff_eq!(v, 0.25, epsilon = 1e-12);
        // Interior at rho = 0.5: phi = 1 - rho, sign flips.
        let v = f.half_trace_b_hessian(&spec, &surface, 0.0, &[0.5, 0.0]);
        assert_abs_diff_eq!(v, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn time_bump_derivative_matches_finite_difference() {
        let bump = TimeBump::new(0.2, 1.0);
        for t in [0.25, 0.5, 0.77, 0.95] {
            let h = 1e-6;
            let fd = (bump.value(t + h) - bump.value(t - h)) / (2.0 * h);
            assert_abs_diff_eq!(bump.d1(t), fd, epsilon = 1e-5);
        }
        assert_eq!(bump.value(0.1), 0.0);
        assert_eq!(bump.value(1.1), 0.0);
    }
}
