//! Single-layer heat-potential machinery.
//!
//! The fundamental solution `g0` of the constant-coefficient half-Laplacian
//! drives everything. The surface potential `Vtilde` solves the Volterra
//! equation
//!
//! ```text
//! Vtilde(t,x,y) = g0(t,x,y) + int_0^t dtau int_S Vtilde(tau,x,z)
//!                 dg0(t-tau,z,y)/dN(z) q(z) dsigma_z,     y in S,
//! ```
//!
//! the skew transition density `G0` is the same representation evaluated at
//! interior `y`, and the damped kernels `G_lambda` solve the pair
//!
//! ```text
//! G_l = G0 - l int Vtilde(tau,x,z) G_l(t-tau,z,y) r dsigma   (route one)
//! G_l = G0 - l int G_l(tau,x,z) G0(t-tau,z,y) r dsigma      (route two)
//! ```
//!
//! subject to `0 <= G_l <= G0`. The resolvent candidate is
//! `V_l(t,x) = int_t^inf int_S G^1_l(tau-t,x,y) psi(tau,y) dsigma dtau`
//! (`G^1` is the `r = 1` kernel), and `check_resolvent` measures the
//! residual of `l V - Ktilde V = psi` on the membrane.
//!
//! Discretization: product integration. Endpoint `t^{-1/2}` factors are
//! integrated exactly (`sqrt_panel`, `arcsine_panel`); in the plane the
//! conormal kernel integrates in closed form over each time panel; sharply
//! peaked first-passage factors are removed by the exact substitution
//! `u = d / (sigma sqrt(s))`, which maps them to a standard normal weight.
//! A point membrane on the line has an identically zero surface kernel
//! (`dg0/dN` vanishes at the symmetric point), so `Vtilde = g0` there holds
//! exactly and the solver reproduces it to rounding.

use crate::coeffs::{DiffusionField, DiffusionSpec};
use crate::error::MembraneError;
use crate::geometry::{self, Surface, SurfaceKind};
use crate::quad::{adaptive_simpson, arcsine_panel, lerp_clamped, sqrt_panel};
use crate::stats::normal_cdf;
use crate::testfn::TimeBump;
use serde::{Deserialize, Serialize};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Uniform time grid `dtau, 2 dtau, ..., n dtau`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dtau: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(dtau: f64, n: usize) -> Result<Self, MembraneError> {
        if dtau <= 0.0 || n < 2 {
            return Err(MembraneError::Grid("need dtau > 0 and n >= 2".into()));
        }
        Ok(TimeGrid { dtau, n })
    }

    pub fn t_end(&self) -> f64 {
        self.dtau * self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.n).map(|k| k as f64 * self.dtau).collect()
    }
}

/// N(0, var) density.
fn gauss1(var: f64, z: f64) -> f64 {
    (-z * z / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn std_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

fn scalar_sigma2(spec: &DiffusionSpec) -> Result<f64, MembraneError> {
    match spec.b {
        DiffusionField::Scalar { sigma2 } => Ok(sigma2),
        _ => Err(MembraneError::Unsupported(
            "potential machinery requires b = sigma^2 I".into(),
        )),
    }
}

/// Fundamental solution of `u_t = (1/2) sum b_ij d_i d_j u` for constant b.
pub fn g0(spec: &DiffusionSpec, t: f64, x: &[f64], y: &[f64]) -> Result<f64, MembraneError> {
    if t <= 0.0 {
        return Err(MembraneError::Quadrature("g0 needs t > 0".into()));
    }
    match &spec.b {
        DiffusionField::Scalar { sigma2 } => Ok(x
            .iter()
            .zip(y)
            .map(|(xi, yi)| gauss1(sigma2 * t, xi - yi))
            .product()),
        DiffusionField::Diagonal { entries } => Ok(x
            .iter()
            .zip(y)
            .zip(entries)
            .map(|((xi, yi), e)| gauss1(e * t, xi - yi))
            .product()),
        DiffusionField::ConstMatrix { rows } => {
            let d = x.len();
            let m = nalgebra::DMatrix::from_fn(d, d, |i, j| rows[i][j] * t);
            let det = m.determinant();
            let inv = m
                .try_inverse()
                .ok_or_else(|| MembraneError::Coefficients("singular diffusion matrix".into()))?;
            let z = nalgebra::DVector::from_fn(d, |i, _| x[i] - y[i]);
            let qf = (z.transpose() * &inv * &z)[(0, 0)];
            Ok((-0.5 * qf).exp()
                / ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt())
        }
        DiffusionField::Table1d { .. } => Err(MembraneError::Unsupported(
            "no closed-form fundamental solution for variable b".into(),
        )),
    }
}

/// `dg0(s, z, y)/dN(z)` for constant b: `(nu(z) . (y - z) / s) g0(s, z, y)`.
pub fn g0_conormal(
    spec: &DiffusionSpec,
    surface: &Surface,
    s: f64,
    z: &[f64],
    y: &[f64],
) -> Result<f64, MembraneError> {
    let nu = surface.normal_at(z)?;
    let c: f64 = nu.iter().zip(y.iter().zip(z)).map(|(n, (yi, zi))| n * (yi - zi)).sum();
    Ok(c / s * g0(spec, s, z, y)?)
}

/// Solution table of the surface Volterra equation for a fixed source `x`.
#[derive(Debug, Clone)]
pub struct VtildeTable {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `Vtilde(t_k, x, z_i)`, flattened times x points.
    pub values: Vec<f64>,
    pub x: Vec<f64>,
    /// Source on the surface: values blow up like `t^{-1/2}` at `t -> 0`.
    pub singular_endpoint: bool,
    pub sig2: f64,
    /// Set on the line: the surface kernel vanishes identically, so
    /// `Vtilde(t, x, membrane) = g0(t, x, membrane)` holds exactly and
    /// off-grid evaluation may use the closed form.
    pub d1_membrane: Option<f64>,
    /// Sphere tables: `g0(t_k, x, z_i)` on the grid, same layout as
    /// `values`; the correction `R = Vtilde - g0` is smooth while `g0`
    /// spikes inside the early panels when `x` sits near the surface.
    pub g0_source: Vec<f64>,
    /// Sphere tables: exact `int g0(tau, x, z_i) dtau` over the panel
    /// `[t_{j-1}, t_j]`, flattened panels x points.
    pub g0_panels: Vec<f64>,
}

impl VtildeTable {
    /// `Vtilde(t, x, z_i)` for arbitrary `t > 0`.
    pub fn eval(&self, t: f64, pi: usize) -> f64 {
        if let Some(loc) = self.d1_membrane {
            let xt = self.x[0] - loc;
            return gauss1(self.sig2 * t, xt);
        }
        let np = self.points.len();
        let column: Vec<f64> = (0..self.times.len()).map(|k| self.values[k * np + pi]).collect();
        lerp_clamped(&self.times, &column, t)
    }
}

/// Closed-form panel integral of the planar conormal kernel:
/// `int_{sa}^{sb} (c / s) g0(s, z, y) ds = c / (pi |y-z|^2) *
/// [exp(-a/sb) - exp(-a/sa)]`-type with `a = |y-z|^2 / (2 sigma^2)`.
fn planar_kernel_panel(sig2: f64, nu: &[f64], z: &[f64], y: &[f64], sa: f64, sb: f64) -> f64 {
    let mut c = 0.0;
    let mut d2 = 0.0;
    for i in 0..z.len() {
        let diff = y[i] - z[i];
        c += nu[i] * diff;
        d2 += diff * diff;
    }
    if d2 == 0.0 {
        return 0.0;
    }
    let a = d2 / (2.0 * sig2);
    let ea = if sa > 0.0 { (-a / sa).exp() } else { 0.0 };
    let eb = (-a / sb).exp();
    c / (2.0 * std::f64::consts::PI * sig2 * a) * (eb - ea)
}

/// Exponential integral `E1(z)` for `z > 0`: power series below one,
/// continued fraction (modified Lentz) above.
fn exp_integral_e1(z: f64) -> f64 {
    if z.is_infinite() {
        return 0.0;
    }
    if z <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..=40 {
            term *= -z / k as f64;
            sum += term / k as f64;
        }
        -0.577_215_664_901_532_9 - z.ln() - sum
    } else {
        let mut b = z + 1.0;
        let mut c = 1e308;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=200 {
            let a = -(i as f64) * (i as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        h * (-z).exp()
    }
}

/// Exact `int_{sa}^{sb} g0(tau; rho) dtau` for the plane heat kernel,
/// `(2 pi sig2)^{-1} [E1(a/sb) - E1(a/sa)]` with `a = rho^2 / (2 sig2)`.
fn g0_time_panel_2d(sig2: f64, rho2: f64, sa: f64, sb: f64) -> f64 {
    let a = rho2 / (2.0 * sig2);
    let ea = if sa > 0.0 {
        exp_integral_e1(a / sa)
    } else {
        0.0
    };
    (exp_integral_e1(a / sb) - ea) / (2.0 * std::f64::consts::PI * sig2)
}

/// Correction sum of the sphere representation at grid index `k` for an
/// arbitrary target point. Each panel splits `Vtilde = g0 + R`: the `g0`
/// part (which spikes inside the early panels when the source sits near
/// the surface) is paired as exact time integral times exact kernel panel
/// average, the smooth remainder `R` as endpoint mean times exact kernel
/// panel, the final panel using the left value alone.
#[allow(clippy::too_many_arguments)]
fn sphere_correction(
    sig2: f64,
    points: &[Vec<f64>],
    weights: &[f64],
    qvals: &[f64],
    normals: &[Vec<f64>],
    values: &[f64],
    g0_source: &[f64],
    g0_panels: &[f64],
    target: &[f64],
    k: usize,
    dtau: f64,
    order: &[usize],
) -> f64 {
    let np = points.len();
    let mut acc = 0.0;
    for j in 1..=k {
        // tau-panel [t_{j-1}, t_j] => s in [sa, sb]
        let sa = (k - j) as f64 * dtau;
        let sb = sa + dtau;
        for &l in order {
            if qvals[l] == 0.0 {
                continue;
            }
            let pw = planar_kernel_panel(sig2, &normals[l], &points[l], target, sa, sb);
            let r_left = if j >= 2 {
                values[(j - 2) * np + l] - g0_source[(j - 2) * np + l]
            } else {
                0.0
            };
            let r_part = if j < k {
                0.5 * (r_left + values[(j - 1) * np + l] - g0_source[(j - 1) * np + l])
            } else {
                r_left
            };
            let contrib = g0_panels[(j - 1) * np + l] * (pw / dtau) + pw * r_part;
            acc += weights[l] * qvals[l] * contrib;
        }
    }
    acc
}

/// Product-integration march of the surface Volterra equation.
pub fn solve_vtilde(
    spec: &DiffusionSpec,
    surface: &Surface,
    x: &[f64],
    grid: &TimeGrid,
    permuted: bool,
) -> Result<VtildeTable, MembraneError> {
    let sig2 = scalar_sigma2(spec)?;
    let quad = surface.quadrature()?;
    let points: Vec<Vec<f64>> = quad.iter().map(|(p, _)| p.clone()).collect();
    let weights: Vec<f64> = quad.iter().map(|(_, w)| *w).collect();
    let qvals: Vec<f64> = points.iter().map(|p| spec.q.eval(surface, p)).collect();
    let on_surface = surface.unsigned_distance(x) <= geometry::on_tolerance(x);
    let times = grid.times();
    let np = points.len();

    match surface.kind {
        SurfaceKind::Point1d { location } => {
            // The kernel dg0/dN(z) q(z) vanishes at the single symmetric
            // point, so the correction term of the march is identically
            // zero and the table is g0 restricted to the membrane.
            let values: Vec<f64> = times
                .iter()
                .map(|&t| gauss1(sig2 * t, x[0] - location))
                .collect();
            Ok(VtildeTable {
                times,
                points,
                weights,
                values,
                x: x.to_vec(),
                singular_endpoint: on_surface,
                sig2,
                d1_membrane: Some(location),
                g0_source: Vec::new(),
                g0_panels: Vec::new(),
            })
        }
        SurfaceKind::Sphere { .. } => {
            if x.len() != 2 {
                return Err(MembraneError::Unsupported(
                    "sphere potential march implemented in the plane only".into(),
                ));
            }
            if on_surface {
                return Err(MembraneError::Unsupported(
                    "sphere march requires the source off the surface".into(),
                ));
            }
            let normals: Vec<Vec<f64>> = points
                .iter()
                .map(|p| surface.normal_at(p))
                .collect::<Result<_, _>>()?;
            let n = grid.n;
            let dtau = grid.dtau;
            let order: Vec<usize> = if permuted {
                (0..np).rev().collect()
            } else {
                (0..np).collect()
            };
            let mut g0_source = vec![0.0f64; n * np];
            let mut g0_panels = vec![0.0f64; n * np];
            for l in 0..np {
                let rho2: f64 = x
                    .iter()
                    .zip(&points[l])
                    .map(|(xi, pi)| (xi - pi) * (xi - pi))
                    .sum();
                for k in 0..n {
                    g0_source[k * np + l] = g0(spec, (k + 1) as f64 * dtau, x, &points[l])?;
                    g0_panels[k * np + l] =
                        g0_time_panel_2d(sig2, rho2, k as f64 * dtau, (k + 1) as f64 * dtau);
                }
            }
            let mut values = vec![0.0f64; n * np];
            for k in 1..=n {
                let tk = k as f64 * dtau;
                for i in 0..np {
                    let v = g0(spec, tk, x, &points[i])?
                        + sphere_correction(
                            sig2, &points, &weights, &qvals, &normals, &values, &g0_source,
                            &g0_panels, &points[i], k, dtau, &order,
                        );
                    values[(k - 1) * np + i] = v;
                }
            }
            Ok(VtildeTable {
                times,
                points,
                weights,
                values,
                x: x.to_vec(),
                singular_endpoint: false,
                sig2,
                d1_membrane: None,
                g0_source,
                g0_panels,
            })
        }
        SurfaceKind::Hyperplane { .. } => Err(MembraneError::Unsupported(
            "hyperplane surfaces have no quadrature".into(),
        )),
    }
}

/// Representation integral for the line: exact first-passage substitution
/// `u = |y| / (sigma sqrt(s))` turns the peaked factor into a standard
/// normal weight. `vt` fixes the source `x`.
fn skew_correction_d1(
    spec: &DiffusionSpec,
    surface: &Surface,
    vt: &VtildeTable,
    t: f64,
    y: f64,
) -> f64 {
    let loc = match surface.kind {
        SurfaceKind::Point1d { location } => location,
        _ => unreachable!(),
    };
    let sig2 = vt.sig2;
    let sigma = sig2.sqrt();
    let q = spec.q.eval(surface, &[loc]);
    if q == 0.0 {
        return 0.0;
    }
    let xt = vt.x[0] - loc;
    let yt = y - loc;
    if yt == 0.0 {
        return 0.0;
    }
    let ay = yt.abs();
    let u0 = ay / (sigma * t.sqrt());
    let tol = 1e-11;
    let integral = if xt == 0.0 {
        // Vtilde(s, 0, 0) = (2 pi sig2 s)^{-1/2}: remove the endpoint
        // square root with u = u0 + w^2. With tau written in the
        // cancellation-free form t w^2 (w^2 + 2 u0) / u^2 the Jacobian
        // factor w cancels and the integrand is smooth at w = 0.
        let f = |w: f64| {
            let u = u0 + w * w;
            4.0 * std_pdf(u) * INV_SQRT_2PI * u
                / (sigma * t.sqrt() * (w * w + 2.0 * u0).sqrt())
        };
        adaptive_simpson(&f, 0.0, 3.6, tol)
    } else {
        let f = |u: f64| {
            // tau = t - ay^2 / (sig2 u^2), arranged without cancellation.
            let tau = t * (u - u0) * (u + u0) / (u * u);
            if tau <= 0.0 {
                return 0.0;
            }
            2.0 * std_pdf(u) * gauss1(sig2 * tau, xt)
        };
        // Break at the time scales of the source peak (tau ~ xt^2 / sig2)
        // so the adaptive rule cannot step over it.
        let mut cuts = vec![u0];
        let mut beta = xt * xt / sig2;
        while beta < 0.5 * t {
            cuts.push(ay / (sigma * (t - beta).sqrt()));
            beta *= 4.0;
        }
        cuts.push(u0 + 13.0);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                acc += adaptive_simpson(&f, w[0], w[1], tol);
            }
        }
        acc
    };
    q * yt.signum() * integral
}

/// Skew transition density `G0(t, x, y)` via the representation formula;
/// the source `x` is fixed by the Vtilde table.
pub fn eval_g0_skew(
    spec: &DiffusionSpec,
    surface: &Surface,
    vt: &VtildeTable,
    t: f64,
    y: &[f64],
) -> Result<f64, MembraneError> {
    let base = g0(spec, t, &vt.x, y)?;
    match surface.kind {
        SurfaceKind::Point1d { .. } => Ok(base + skew_correction_d1(spec, surface, vt, t, y[0])),
        SurfaceKind::Sphere { .. } => {
            // Product integration on the Vtilde grid with exact panel
            // integrals of the conormal kernel.
            let k = (t / (vt.times[0])).round() as usize;
            if k == 0 || k > vt.times.len() || (t - k as f64 * vt.times[0]).abs() > 1e-9 {
                return Err(MembraneError::Grid(
                    "sphere G0 evaluation requires a grid time".into(),
                ));
            }
            let dtau = vt.times[0];
            let np = vt.points.len();
            let qvals: Vec<f64> = vt.points.iter().map(|p| spec.q.eval(surface, p)).collect();
            let normals: Vec<Vec<f64>> = vt
                .points
                .iter()
                .map(|p| surface.normal_at(p))
                .collect::<Result<_, _>>()?;
            let order: Vec<usize> = (0..np).collect();
            Ok(base
                + sphere_correction(
                    vt.sig2,
                    &vt.points,
                    &vt.weights,
                    &qvals,
                    &normals,
                    &vt.values,
                    &vt.g0_source,
                    &vt.g0_panels,
                    y,
                    k,
                    dtau,
                    &order,
                ))
        }
        SurfaceKind::Hyperplane { .. } => Err(MembraneError::Unsupported(
            "hyperplane surfaces unsupported here".into(),
        )),
    }
}

/// One-sided limits `G0(t, x, z+)` and `G0(t, x, z-)` by Richardson
/// extrapolation along the normal with fringe offsets `delta, 2 delta`.
pub fn g0_one_sided(
    spec: &DiffusionSpec,
    surface: &Surface,
    vt: &VtildeTable,
    t: f64,
    z: &[f64],
    delta: f64,
) -> Result<(f64, f64), MembraneError> {
    let nu = surface.normal_at(z)?;
    let off = |s: f64| -> Vec<f64> {
        z.iter().zip(&nu).map(|(zi, ni)| zi + s * ni).collect()
    };
    let gp1 = eval_g0_skew(spec, surface, vt, t, &off(delta))?;
    let gp2 = eval_g0_skew(spec, surface, vt, t, &off(2.0 * delta))?;
    let gm1 = eval_g0_skew(spec, surface, vt, t, &off(-delta))?;
    let gm2 = eval_g0_skew(spec, surface, vt, t, &off(-2.0 * delta))?;
    Ok((2.0 * gp1 - gp2, 2.0 * gm1 - gm2))
}

/// Midpoint-grid density profile of `G0(t, x, .)` on the line, suited to
/// mass and half-line integrals (no node sits on the jump).
pub fn density_profile_d1(
    spec: &DiffusionSpec,
    surface: &Surface,
    vt: &VtildeTable,
    t: f64,
    dy: f64,
    half_width: f64,
) -> Result<(Vec<f64>, Vec<f64>), MembraneError> {
    let loc = match surface.kind {
        SurfaceKind::Point1d { location } => location,
        _ => return Err(MembraneError::Unsupported("line geometry only".into())),
    };
    let m = (half_width / dy).round() as usize;
    let mut ys = Vec::with_capacity(2 * m);
    for j in (0..m).rev() {
        ys.push(loc - (j as f64 + 0.5) * dy);
    }
    for j in 0..m {
        ys.push(loc + (j as f64 + 0.5) * dy);
    }
    let mut vals = Vec::with_capacity(ys.len());
    for &y in &ys {
        vals.push(eval_g0_skew(spec, surface, vt, t, &[y])?);
    }
    Ok((ys, vals))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluxReport {
    pub max_residual: f64,
    pub n_checked: usize,
}

/// Residual of the flux condition
/// `(1+q)/2 dG0/dN(x+) - (1-q)/2 dG0/dN(x-) = 0` over surface points and
/// times, with one-sided derivatives from Richardson fringe stencils.
pub fn check_flux_condition(
    spec: &DiffusionSpec,
    surface: &Surface,
    grid: &TimeGrid,
    t_list: &[f64],
    ys: &[Vec<f64>],
    delta: f64,
) -> Result<FluxReport, MembraneError> {
    let sig2 = scalar_sigma2(spec)?;
    let anchors: Vec<Vec<f64>> = match surface.kind {
        SurfaceKind::Point1d { location } => vec![vec![location]],
        SurfaceKind::Sphere { .. } => {
            // Each anchor costs six full layer marches; two strided anchors
            // already sample distinct values of the angular field q.
            let quad = surface.quadrature()?;
            let stride = (quad.len() / 2).max(1);
            quad.iter().step_by(stride).map(|(p, _)| p.clone()).collect()
        }
        SurfaceKind::Hyperplane { .. } => {
            return Err(MembraneError::Unsupported("hyperplane unsupported".into()))
        }
    };
    let mut worst = 0.0f64;
    let mut n_checked = 0usize;
    for anchor in &anchors {
        let nu = surface.normal_at(anchor)?;
        let q = spec.q.eval(surface, anchor);
        let (wp, wm) = (0.5 * (1.0 + q), 0.5 * (1.0 - q));
        // Source points on the fringe of the anchor; the one-sided
        // derivatives come from quadratic fits that never need the
        // on-surface value.
        let offsets = [
            -3.0 * delta,
            -2.0 * delta,
            -delta,
            delta,
            2.0 * delta,
            3.0 * delta,
        ];
        let mut tables = Vec::with_capacity(offsets.len());
        for &s in &offsets {
            let xx: Vec<f64> = anchor.iter().zip(&nu).map(|(a, n)| a + s * n).collect();
            tables.push(solve_vtilde(spec, surface, &xx, grid, false)?);
        }
        for &t in t_list {
            for y in ys {
                let g: Vec<f64> = tables
                    .iter()
                    .map(|vt| eval_g0_skew(spec, surface, vt, t, y))
                    .collect::<Result<_, _>>()?;
                let dp = (-2.5 * g[3] + 4.0 * g[4] - 1.5 * g[5]) / delta;
                let dm = (2.5 * g[2] - 4.0 * g[1] + 1.5 * g[0]) / delta;
                let residual = (wp * sig2 * dp - wm * sig2 * dm).abs();
                worst = worst.max(residual);
                n_checked += 1;
            }
        }
    }
    Ok(FluxReport {
        max_residual: worst,
        n_checked,
    })
}

/// Damped kernels on the line with source on the membrane.
#[derive(Debug, Clone)]
pub struct GLambdaTable {
    pub lambda: f64,
    pub times: Vec<f64>,
    pub ys: Vec<f64>,
    /// `G0(t, x_S, y)`, flattened times x ys.
    pub g0: Vec<f64>,
    /// Route-one solution of the Volterra pair, same layout.
    pub g_lambda: Vec<f64>,
    /// `w(t) = sqrt(t) G_lambda(t, x_S, x_S)` on the grid (`w(0)` is the
    /// free value `1/sqrt(2 pi sig2)`).
    pub w_surface: Vec<f64>,
    /// Sup distance between routes one and two on a grid subset.
    pub route12_discrepancy: f64,
    pub dy: f64,
    pub sig2: f64,
}

impl GLambdaTable {
    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.g_lambda[k * self.ys.len() + j]
    }
}

/// On-surface damped kernel march: `w(t) = sqrt(t) G_lambda(t, 0, 0)` from
/// the double-endpoint-singular Volterra equation, with exact arcsine panel
/// weights for the `tau^{-1/2} (t-tau)^{-1/2}` factor. First-order accurate
/// in the step; [`march_w_surface`] removes that error by step-halving.
fn march_w_once(sig2: f64, lambda_r: f64, grid: &TimeGrid) -> Vec<f64> {
    let c = 1.0 / (2.0 * std::f64::consts::PI * sig2).sqrt();
    let n = grid.n;
    let dt = grid.dtau;
    let mut w = Vec::with_capacity(n + 1);
    w.push(c);
    for k in 1..=n {
        let tk = k as f64 * dt;
        let scale = lambda_r * tk.sqrt() * c;
        let mut rhs = c;
        let mut implicit = 1.0;
        for j in 1..=k {
            let a_j = arcsine_panel((j - 1) as f64 * dt, j as f64 * dt, tk);
            // w(t_k - tau) at the panel midpoint ~ mean of endpoint values;
            // the j = 1 panel carries the unknown w_k.
            if j == 1 {
                implicit += scale * a_j * 0.5;
                rhs -= scale * a_j * 0.5 * w[k - 1];
            } else {
                rhs -= scale * a_j * 0.5 * (w[k - j] + w[k - j + 1]);
            }
        }
        w.push(rhs / implicit);
    }
    w
}

/// Step-halving Richardson extrapolation of [`march_w_once`].
fn march_w_surface(sig2: f64, lambda_r: f64, grid: &TimeGrid) -> Vec<f64> {
    let coarse = march_w_once(sig2, lambda_r, grid);
    let fine_grid = TimeGrid {
        dtau: 0.5 * grid.dtau,
        n: 2 * grid.n,
    };
    let fine = march_w_once(sig2, lambda_r, &fine_grid);
    (0..=grid.n).map(|k| 2.0 * fine[2 * k] - coarse[k]).collect()
}

/// Solve for `G_lambda(t, x_S, y)` on the line (source on the membrane) by
/// both Volterra routes; route one is returned, route two audited.
pub fn solve_g_lambda(
    spec: &DiffusionSpec,
    surface: &Surface,
    lambda: f64,
    grid: &TimeGrid,
    dy: f64,
    half_width: f64,
) -> Result<GLambdaTable, MembraneError> {
    if lambda < 0.0 {
        return Err(MembraneError::Scheme("lambda must be nonnegative".into()));
    }
    let sig2 = scalar_sigma2(spec)?;
    let loc = match surface.kind {
        SurfaceKind::Point1d { location } => location,
        _ => {
            return Err(MembraneError::Unsupported(
                "damped kernels implemented on the line".into(),
            ))
        }
    };
    let r = spec.r.eval(surface, &[loc]);
    let lr = lambda * r;
    let vt = solve_vtilde(spec, surface, &[loc], grid, false)?;
    let times = grid.times();
    let n = grid.n;
    let dt = grid.dtau;

    let m = (half_width / dy).round() as usize;
    let mut ys = Vec::with_capacity(2 * m);
    for j in (0..m).rev() {
        ys.push(loc - (j as f64 + 0.5) * dy);
    }
    for j in 0..m {
        ys.push(loc + (j as f64 + 0.5) * dy);
    }
    let ny = ys.len();

    let mut g0_tab = vec![0.0f64; n * ny];
    for (k, &t) in times.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            g0_tab[k * ny + j] = eval_g0_skew(spec, surface, &vt, t, &[y])?;
        }
    }

    let w = march_w_surface(sig2, lr, grid);

    // Route one, surface-restricted: the kernel is
    // Vtilde(tau, 0, 0) = c / sqrt(tau); sqrt panels are exact.
    let c = 1.0 / (2.0 * std::f64::consts::PI * sig2).sqrt();
    let mut gl = vec![0.0f64; n * ny];
    if lr == 0.0 {
        gl.copy_from_slice(&g0_tab);
    } else {
        // G_k = G0_k - lr * c * sum_j S_j * (G_{k-j} + G_{k-j+1}) / 2,
        // with G_0(y) = 0 and the j = 1 panel implicit in G_k.
        let s_panels: Vec<f64> =
            (1..=n).map(|j| sqrt_panel((j - 1) as f64 * dt, j as f64 * dt)).collect();
        let implicit = 1.0 + lr * c * s_panels[0] * 0.5;
        let mut row = vec![0.0f64; ny];
        for k in 1..=n {
            for j in 0..ny {
                row[j] = g0_tab[(k - 1) * ny + j];
            }
            for j in 1..=k {
                let s_j = s_panels[j - 1];
                let half = lr * c * s_j * 0.5;
                for l in 0..ny {
                    let g_left = if k >= j + 1 { gl[(k - j - 1) * ny + l] } else { 0.0 };
                    let g_right = if j == 1 {
                        0.0 // the unknown, moved into `implicit`
                    } else if k >= j {
                        gl[(k - j) * ny + l]
                    } else {
                        0.0
                    };
                    row[l] -= half * (g_left + g_right);
                }
            }
            for l in 0..ny {
                gl[(k - 1) * ny + l] = row[l] / implicit;
            }
        }
    }

    // The comparison principle 0 <= G_lambda <= G0 is asserted, not
    // enforced: a violation beyond rounding scale means the march step is
    // too coarse.
    let scale = g0_tab.iter().fold(0.0f64, |m, v| m.max(*v));
    for (gl_v, g0_v) in gl.iter().zip(&g0_tab) {
        if *gl_v < -1e-6 * scale || *gl_v > *g0_v + 1e-6 * scale {
            return Err(MembraneError::Scheme(
                "damped kernel escapes [0, G0]: refine the time step".into(),
            ));
        }
    }

    // Route two as an independent quadrature:
    // G_l(t,0,y) = G0(t,0,y) - lr int_0^t G_l(tau,0,0) G0(t-tau,0,y) dtau
    // with G_l(tau,0,0) = w(tau) / sqrt(tau).
    let mut discrepancy = 0.0f64;
    if lr != 0.0 {
        let stride_t = (n / 8).max(1);
        let stride_y = (ny / 12).max(1);
        for k in (stride_t..=n).step_by(stride_t) {
            for l in (0..ny).step_by(stride_y) {
                let mut v = g0_tab[(k - 1) * ny + l];
                for j in 1..=k {
                    let s_j = sqrt_panel((j - 1) as f64 * dt, j as f64 * dt);
                    let w_mid = 0.5 * (w[j - 1] + w[j]);
                    // G0(t - tau*, 0, y) at the panel midpoint.
                    let g_mid = if j < k {
                        0.5 * (g0_tab[(k - j - 1) * ny + l] + g0_tab[(k - j) * ny + l])
                    } else {
                        0.5 * g0_tab[(k - j) * ny + l]
                    };
                    v -= lr * s_j * w_mid * g_mid;
                }
                discrepancy = discrepancy.max((v - gl[(k - 1) * ny + l]).abs());
            }
        }
    }

    Ok(GLambdaTable {
        lambda,
        times,
        ys,
        g0: g0_tab,
        g_lambda: gl,
        w_surface: w,
        route12_discrepancy: discrepancy,
        dy,
        sig2,
    })
}

/// Resolvent candidate table `V_lambda(t, x)` on the line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VLambdaTable {
    pub lambda: f64,
    /// Full grid including t = 0.
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// Flattened times x xs.
    pub values: Vec<f64>,
    /// `V_lambda(t, x_S)` on the same times.
    pub v0: Vec<f64>,
    /// Sup distance to a direct evaluation of the defining convolution
    /// using the closed-form damped kernel, on a grid subset.
    pub direct_check_residual: f64,
}

impl VLambdaTable {
    pub fn value(&self, ti: usize, xi: usize) -> f64 {
        self.values[ti * self.xs.len() + xi]
    }
}

/// Fringe layout used by the resolvent residual: the membrane point plus
/// symmetric offsets `2 delta` and `4 delta`.
pub fn fringe_xs(loc: f64, delta: f64) -> [f64; 5] {
    [
        loc - 4.0 * delta,
        loc - 2.0 * delta,
        loc,
        loc + 2.0 * delta,
        loc + 4.0 * delta,
    ]
}

/// Antiderivative used by the exact product weights of the source factor:
/// `int u^{-2} phi(u) du = -phi(u)/u - Phi(u)`.
fn f_weight(u: f64) -> f64 {
    if u.is_infinite() {
        return -1.0;
    }
    -std_pdf(u) / u - normal_cdf(u)
}

/// Closed form of the `r = 1` damped kernel on the line evaluated at the
/// membrane, `K(s, x) = phi_v(a) - (lambda/2) e^{lambda a + lambda^2 v / 2}
/// erfc((a + lambda v) / sqrt(2 v))` with `v = sig2 s`, `a = |x - loc|`.
/// Recovers the free kernel at `lambda = 0` and is the Laplace transform in
/// the local time of the joint reflected-path density.
fn damped_kernel_closed_form(sig2: f64, lambda: f64, s: f64, a: f64) -> f64 {
    let v = sig2 * s;
    let arg = (a + lambda * v) / (2.0 * v).sqrt();
    gauss1(v, a) - 0.5 * lambda * (lambda * a + 0.5 * lambda * lambda * v).exp() * libm::erfc(arg)
}

/// Exact integral of `g0(s, x, loc) ds` over `[sa, sb]` (line, `x != loc`).
fn source_panel(sig2: f64, a: f64, sa: f64, sb: f64) -> f64 {
    let sigma = sig2.sqrt();
    let ua = if sa > 0.0 { a / (sigma * sa.sqrt()) } else { f64::INFINITY };
    let ub = a / (sigma * sb.sqrt());
    (2.0 * a / sigma) * (f_weight(ua) - f_weight(ub))
}

/// One midpoint product-integration pass of the resolvent assembly on a
/// given grid: the on-surface profile
/// `V0(t) = int_0^{T-t} w(s) s^{-1/2} psi(t+s) ds` followed by the
/// off-surface Volterra relation
/// `V(t,x) = int_0^{T-t} Vtilde(s, x, loc) [psi - lambda V0](t+s) ds`
/// with exact panel weights for the singular source factor (its peak sits
/// at `s ~ (x - loc)^2 / sig2`, well inside the first panels on the
/// fringe). Returns `(values, v0)` flattened as times x xs.
fn assemble_v_profile(
    sig2: f64,
    lambda: f64,
    psi: &TimeBump,
    grid: &TimeGrid,
    xs: &[f64],
    loc: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n;
    let dt = grid.dtau;
    let (_, t_psi) = psi.support();
    let c = 1.0 / (2.0 * std::f64::consts::PI * sig2).sqrt();
    let w = march_w_surface(sig2, lambda, grid); // G^1: r = 1

    let mut v0 = vec![0.0f64; n + 1];
    for i in 0..=n {
        let t = i as f64 * dt;
        if t >= t_psi {
            break;
        }
        let mut acc = 0.0;
        for j in 1..=(n - i) {
            let sa = (j - 1) as f64 * dt;
            let sb = j as f64 * dt;
            if t + sa >= t_psi {
                break;
            }
            let mid = 0.5 * (sa + sb);
            acc += sqrt_panel(sa, sb) * 0.5 * (w[j - 1] + w[j]) * psi.value(t + mid);
        }
        v0[i] = acc;
    }

    let mut values = vec![0.0f64; (n + 1) * xs.len()];
    for (xi, &x) in xs.iter().enumerate() {
        let a = (x - loc).abs();
        for i in 0..=n {
            let t = i as f64 * dt;
            if t >= t_psi {
                break;
            }
            let mut acc = 0.0;
            for j in 1..=(n - i) {
                let sa = (j - 1) as f64 * dt;
                let sb = j as f64 * dt;
                if t + sa >= t_psi {
                    break;
                }
                let mid = 0.5 * (sa + sb);
                let f_mid = psi.value(t + mid) - lambda * 0.5 * (v0[i + j - 1] + v0[i + j]);
                let wgt = if a == 0.0 {
                    c * sqrt_panel(sa, sb)
                } else {
                    source_panel(sig2, a, sa, sb)
                };
                acc += wgt * f_mid;
            }
            values[i * xs.len() + xi] = acc;
        }
    }
    (values, v0)
}

/// `V_lambda(t, x) = int_t^inf G^1_lambda(tau - t, x, x_S) psi(tau) dtau`
/// for `psi(tau, y) = rho(tau)` on a point membrane. Interchanging the
/// convolution layers reduces every evaluation to integrals against the
/// on-surface profile `V_lambda(., x_S)`.
pub fn solve_v_lambda(
    spec: &DiffusionSpec,
    surface: &Surface,
    lambda: f64,
    psi: &TimeBump,
    grid: &TimeGrid,
    xs: &[f64],
) -> Result<VLambdaTable, MembraneError> {
    let sig2 = scalar_sigma2(spec)?;
    let loc = match surface.kind {
        SurfaceKind::Point1d { location } => location,
        _ => {
            return Err(MembraneError::Unsupported(
                "resolvent machinery implemented on the line".into(),
            ))
        }
    };
    let (_, t_psi) = psi.support();
    if !t_psi.is_finite() {
        return Err(MembraneError::NonCompactSupport);
    }
    if grid.t_end() < t_psi {
        return Err(MembraneError::Grid(
            "time grid must cover the support of psi".into(),
        ));
    }
    let n = grid.n;
    let dt = grid.dtau;
    let mut times = Vec::with_capacity(n + 1);
    for k in 0..=n {
        times.push(k as f64 * dt);
    }

    // The midpoint product-integration assembly is first-order accurate in
    // the step (the panel first moment of the singular weight does not
    // match the midpoint); running it at the step and at half the step and
    // extrapolating removes that error.
    let (coarse_v, coarse_v0) = assemble_v_profile(sig2, lambda, psi, grid, xs, loc);
    let fine_grid = TimeGrid {
        dtau: 0.5 * dt,
        n: 2 * n,
    };
    let (fine_v, fine_v0) = assemble_v_profile(sig2, lambda, psi, &fine_grid, xs, loc);
    let nx = xs.len();
    let mut values = vec![0.0f64; (n + 1) * nx];
    let mut v0 = vec![0.0f64; n + 1];
    for i in 0..=n {
        v0[i] = 2.0 * fine_v0[2 * i] - coarse_v0[i];
        for xi in 0..nx {
            values[i * nx + xi] = 2.0 * fine_v[2 * i * nx + xi] - coarse_v[i * nx + xi];
        }
    }

    // Independent route on a grid subset: the defining convolution
    // V(t,x) = int_0^{T-t} K(s, x) psi(t+s) ds against the closed-form
    // damped kernel, with s = z^2 removing the on-surface endpoint
    // singularity of K.
    let sigma = sig2.sqrt();
    let mut direct_residual = 0.0f64;
    let stride = (n / 40).max(1);
    for (xi, &x) in xs.iter().enumerate() {
        let a = (x - loc).abs();
        for i in (0..n).step_by(stride) {
            let t = times[i];
            if t >= t_psi {
                continue;
            }
            let z_end = (t_psi - t).min(grid.t_end() - t).sqrt();
            let f = |z: f64| {
                let s = z * z;
                if s == 0.0 {
                    return 0.0;
                }
                2.0 * z * damped_kernel_closed_form(sig2, lambda, s, a) * psi.value(t + s)
            };
            let mut cuts = vec![0.0, z_end];
            for c_z in [a / sigma, 2.0 * a / sigma] {
                if c_z > 0.0 && c_z < z_end {
                    cuts.push(c_z);
                }
            }
            cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
            let mut direct = 0.0;
            for w in cuts.windows(2) {
                if w[1] > w[0] {
                    direct += adaptive_simpson(&f, w[0], w[1], 1e-9);
                }
            }
            direct_residual = direct_residual.max((direct - values[i * xs.len() + xi]).abs());
        }
    }

    Ok(VLambdaTable {
        lambda,
        times,
        xs: xs.to_vec(),
        values,
        v0,
        direct_check_residual: direct_residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventReport {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sup_residual: f64,
}

/// Residual of `lambda V - Ktilde V = psi` on the membrane, using the
/// Richardson fringe layout of [`fringe_xs`]. The `r dV/dt` part of Ktilde
/// is included when the spec carries `r > 0`; the instantaneous branch has
/// no time term.
pub fn check_resolvent(
    spec: &DiffusionSpec,
    surface: &Surface,
    psi: &TimeBump,
    vtab: &VLambdaTable,
) -> Result<ResolventReport, MembraneError> {
    let sig2 = scalar_sigma2(spec)?;
    let loc = match surface.kind {
        SurfaceKind::Point1d { location } => location,
        _ => return Err(MembraneError::Unsupported("line geometry only".into())),
    };
    if vtab.xs.len() != 5 {
        return Err(MembraneError::Grid(
            "resolvent check expects the five-point fringe layout".into(),
        ));
    }
    let delta = vtab.xs[3] - loc;
    if delta <= 0.0 {
        return Err(MembraneError::Grid("fringe layout out of order".into()));
    }
    let q = spec.q.eval(surface, &[loc]);
    let r = spec.r.eval(surface, &[loc]);
    let (wp, wm) = (0.5 * (1.0 + q), 0.5 * (1.0 - q));
    let nt = vtab.times.len();
    let dt = vtab.times[1] - vtab.times[0];
    let mut times = Vec::new();
    let mut residuals = Vec::new();
    let mut sup = 0.0f64;
    for i in 1..nt - 1 {
        let t = vtab.times[i];
        let v0 = vtab.value(i, 2);
        let dp = 2.0 * (vtab.value(i, 3) - v0) / delta - (vtab.value(i, 4) - v0) / (2.0 * delta);
        let dm = 2.0 * (v0 - vtab.value(i, 1)) / delta - (v0 - vtab.value(i, 0)) / (2.0 * delta);
        let dv_dt = (vtab.v0[i + 1] - vtab.v0[i - 1]) / (2.0 * dt);
        let res = vtab.lambda * v0 - sig2 * (wp * dp - wm * dm) - r * dv_dt - psi.value(t);
        times.push(t);
        residuals.push(res);
        sup = sup.max(res.abs());
    }
    Ok(ResolventReport {
        times,
        residuals,
        sup_residual: sup,
    })
}
