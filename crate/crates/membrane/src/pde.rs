//! Deterministic solvers for the membrane semigroup.
//!
//! `solve_interface_heat` marches `u_t = (1/2) sum b_ij d2u` with a
//! theta-scheme on a line through the membrane point (or the radial
//! reduction `u_t = sigma^2/2 (u_rr + (d-1)/rho u_r)` for a sphere), with a
//! single value at the membrane node (continuity of `u`) and the discrete
//! transmission row
//!
//! ```text
//! r u_t = (1+q)/2 du/dN(+) - (1-q)/2 du/dN(-),     dN = (b nu, nu) d/dnu,
//! ```
//!
//! built from one-sided second-order flux stencils. The far field is a
//! homogeneous Neumann wall. `solve_extension_hh` solves the backward
//! equation on each side of the membrane separately with Dirichlet data `h`
//! on the membrane and terminal data zero, extended by zero past the support
//! of `h`. `evaluate_k_grid` and `evaluate_ktilde` read the one-sided
//! conormal combinations off grid functions.
//!
//! Linear systems are tridiagonal except for the five-entry membrane row,
//! handled by a rank-one Sherman-Morrison correction of a tridiagonal
//! factorization.

use crate::coeffs::{DiffusionField, DiffusionSpec};
use crate::error::MembraneError;
use crate::geometry::{Surface, SurfaceKind};
use crate::testfn::TestFunction;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub enum GridGeometry {
    /// 1-D line; membrane at a grid node.
    Line { membrane: f64 },
    /// Radially symmetric reduction in `dim` dimensions; membrane sphere of
    /// the given radius, domain [0, r_max].
    Radial { dim: usize, radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid1D {
    pub xs: Vec<f64>,
    pub dx: f64,
    pub dt: f64,
    /// Implicitness weight in [0, 1]: 1 backward Euler, 1/2 Crank-Nicolson.
    pub theta: f64,
    pub t_end: f64,
    pub membrane_index: usize,
    pub geometry: GridGeometry,
}

impl Grid1D {
    pub fn line(
        membrane: f64,
        half_width: f64,
        dx: f64,
        dt: f64,
        theta: f64,
        t_end: f64,
    ) -> Result<Self, MembraneError> {
        let half = (half_width / dx).round() as usize;
        if half < 3 {
            return Err(MembraneError::Grid("domain too small for membrane stencils".into()));
        }
        let xs: Vec<f64> = (0..=2 * half)
            .map(|j| membrane + (j as f64 - half as f64) * dx)
            .collect();
        let grid = Grid1D {
            xs,
            dx,
            dt,
            theta,
            t_end,
            membrane_index: half,
            geometry: GridGeometry::Line { membrane },
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn radial(
        dim: usize,
        radius: f64,
        r_max: f64,
        dx: f64,
        dt: f64,
        theta: f64,
        t_end: f64,
    ) -> Result<Self, MembraneError> {
        let m = (radius / dx).round() as usize;
        if (m as f64 * dx - radius).abs() > 1e-9 * dx.max(1.0) {
            return Err(MembraneError::Grid("membrane radius must be a grid node".into()));
        }
        let n = (r_max / dx).round() as usize;
        let xs: Vec<f64> = (0..=n).map(|j| j as f64 * dx).collect();
        let grid = Grid1D {
            xs,
            dx,
            dt,
            theta,
            t_end,
            membrane_index: m,
            geometry: GridGeometry::Radial { dim, radius },
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), MembraneError> {
        if self.dx <= 0.0 || self.dt <= 0.0 || self.t_end <= 0.0 {
            return Err(MembraneError::Grid("dx, dt, t_end must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(MembraneError::Grid("theta must lie in [0, 1]".into()));
        }
        let n = self.xs.len();
        if self.membrane_index < 2 || self.membrane_index + 2 >= n {
            return Err(MembraneError::Grid(
                "membrane node needs two neighbours on each side".into(),
            ));
        }
        for w in self.xs.windows(2) {
            if w[1] <= w[0] {
                return Err(MembraneError::Grid("nodes must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Node coordinate as an ambient point (radial grids embed `rho` on the
    /// first axis through the sphere centre).
    pub fn point(&self, j: usize, surface: &Surface) -> Vec<f64> {
        match self.geometry {
            GridGeometry::Line { .. } => vec![self.xs[j]],
            GridGeometry::Radial { dim, .. } => {
                let mut p = vec![0.0; dim];
                if let SurfaceKind::Sphere { ref center, .. } = surface.kind {
                    p.copy_from_slice(center);
                }
                p[0] += self.xs[j];
                p
            }
        }
    }
}

/// Space-time table produced by the solvers. Time slices may be stored with
/// a stride when the march is long; `times` lists the stored instants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFunction {
    pub xs: Vec<f64>,
    pub times: Vec<f64>,
    /// Flattened `times.len() x xs.len()`.
    pub values: Vec<f64>,
    pub membrane_index: usize,
    pub geometry: GridGeometry,
}

impl GridFunction {
    pub fn n_nodes(&self) -> usize {
        self.xs.len()
    }

    pub fn slice(&self, ti: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.values[ti * n..(ti + 1) * n]
    }

    pub fn final_slice(&self) -> &[f64] {
        self.slice(self.times.len() - 1)
    }

    /// Index of the stored instant closest to `t`.
    pub fn time_index(&self, t: f64) -> usize {
        let mut best = 0;
        let mut err = f64::INFINITY;
        for (i, &s) in self.times.iter().enumerate() {
            let e = (s - t).abs();
            if e < err {
                err = e;
                best = i;
            }
        }
        best
    }

    /// Value at (t, x) by nearest stored time and linear space interpolation;
    /// zero beyond the stored time range (the extension convention).
    pub fn value_at(&self, t: f64, x: f64) -> f64 {
        if t > self.times.last().copied().unwrap_or(0.0) + 1e-12 {
            return 0.0;
        }
        let ti = self.time_index(t);
        let u = self.slice(ti);
        let lo = self.xs[0];
        let hi = *self.xs.last().unwrap();
        let xc = x.clamp(lo, hi);
        let dx = self.xs[1] - self.xs[0];
        let j = (((xc - lo) / dx) as usize).min(self.xs.len() - 2);
        let w = (xc - self.xs[j]) / dx;
        u[j] * (1.0 - w) + u[j + 1] * w
    }

    pub fn membrane_value(&self, ti: usize) -> f64 {
        self.slice(ti)[self.membrane_index]
    }

    /// One-sided second-order spatial derivative at the membrane node.
    pub fn one_sided_dx(&self, ti: usize, exterior: bool) -> f64 {
        let u = self.slice(ti);
        let m = self.membrane_index;
        let dx = self.xs[1] - self.xs[0];
        if exterior {
            (-3.0 * u[m] + 4.0 * u[m + 1] - u[m + 2]) / (2.0 * dx)
        } else {
            (3.0 * u[m] - 4.0 * u[m - 1] + u[m - 2]) / (2.0 * dx)
        }
    }

    pub fn assert_finite(&self) -> Result<(), MembraneError> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(MembraneError::Scheme("non-finite values in grid function".into()))
        }
    }
}

/// In-place Thomas elimination; `lower[0]` and `upper[n-1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut c_prime = vec![0.0; n];
    c_prime[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c_prime[i - 1];
        c_prime[i] = upper[i] / denom;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c_prime[i] * rhs[i + 1];
    }
}

/// Spatial operator rows: tridiagonal plus a five-entry membrane row.
struct Operator {
    /// Tridiagonal coefficients of L: (sub, diag, super) per node.
    lo: Vec<f64>,
    di: Vec<f64>,
    hi: Vec<f64>,
    /// Membrane row of L scaled to the transmission form: entries at
    /// m-2..m+2 of F(u); `None` when the node behaves as interior.
    membrane_row: Option<[f64; 5]>,
    m: usize,
    r: f64,
}

fn build_operator(
    spec: &DiffusionSpec,
    surface: &Surface,
    grid: &Grid1D,
) -> Result<Operator, MembraneError> {
    let n = grid.xs.len();
    let dx = grid.dx;
    let m = grid.membrane_index;
    let membrane_point = grid.point(m, surface);
    let q = spec.q.eval(surface, &membrane_point);
    let r = spec.r.eval(surface, &membrane_point);

    let sig2: Vec<f64> = match grid.geometry {
        GridGeometry::Line { .. } => (0..n)
            .map(|j| spec.b.entry(&[grid.xs[j]], 0, 0))
            .collect(),
        GridGeometry::Radial { .. } => {
            let s2 = match spec.b {
                DiffusionField::Scalar { sigma2 } => sigma2,
                _ => {
                    return Err(MembraneError::Unsupported(
                        "radial reduction requires b = sigma^2 I".into(),
                    ))
                }
            };
            vec![s2; n]
        }
    };

    let mut lo = vec![0.0; n];
    let mut di = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for j in 0..n {
        if j == 0 {
            match grid.geometry {
                GridGeometry::Line { .. } => {
                    // Reflecting half-cell row; exact trapezoid conservation.
                    di[0] = -sig2[0] / (dx * dx);
                    hi[0] = sig2[0] / (dx * dx);
                }
                GridGeometry::Radial { dim, .. } => {
                    // rho = 0 with the symmetric ghost: u_t = sigma^2/2 d u_rr.
                    let c = sig2[0] * dim as f64 / (dx * dx);
                    di[0] = -c;
                    hi[0] = c;
                }
            }
        } else if j == n - 1 {
            lo[j] = sig2[j] / (dx * dx);
            di[j] = -sig2[j] / (dx * dx);
        } else {
            let diff = 0.5 * sig2[j] / (dx * dx);
            let drift = match grid.geometry {
                GridGeometry::Line { .. } => 0.0,
                GridGeometry::Radial { dim, .. } => {
                    0.5 * sig2[j] * (dim as f64 - 1.0) / (grid.xs[j] * 2.0 * dx)
                }
            };
            lo[j] = diff - drift;
            di[j] = -2.0 * diff;
            hi[j] = diff + drift;
        }
    }

    // With q = r = 0 the transmission condition is flux continuity, which
    // the interior heat row already implies; keeping the interior stencil
    // there preserves exact discrete conservation.
    let membrane_row = if q == 0.0 && r == 0.0 {
        None
    } else {
        let (wp, wm) = (0.5 * (1.0 + q), 0.5 * (1.0 - q));
        let cn = spec.conormal_component(surface, &membrane_point);
        let s = cn / (2.0 * dx);
        Some([
            -wm * s,
            4.0 * wm * s,
            -3.0 * (wp + wm) * s,
            4.0 * wp * s,
            -wp * s,
        ])
    };

    Ok(Operator {
        lo,
        di,
        hi,
        membrane_row,
        m,
        r,
    })
}

fn stability_check(op: &Operator, grid: &Grid1D) -> Result<(), MembraneError> {
    if grid.theta >= 1.0 {
        return Ok(());
    }
    let explicit = 1.0 - grid.theta;
    let mut worst = 0.0f64;
    for j in 0..op.di.len() {
        worst = worst.max(-op.di[j]);
    }
    if let Some(row) = op.membrane_row {
        if op.r > 0.0 {
            worst = worst.max(-row[2] / op.r);
        }
    }
    if explicit * grid.dt * worst > 1.0 + 1e-12 {
        return Err(MembraneError::UnstableStep {
            suggested: 0.9 / (explicit * worst),
        });
    }
    Ok(())
}

/// One theta-step of `u_t = L u` with the membrane row.
struct Stepper {
    op: Operator,
    grid_theta: f64,
    dt: f64,
    /// LHS tridiagonal with the membrane row replaced by identity.
    t_lo: Vec<f64>,
    t_di: Vec<f64>,
    t_hi: Vec<f64>,
    /// Sherman-Morrison data for the true membrane row, if any.
    sm: Option<SmRow>,
}

struct SmRow {
    /// (row of the LHS) - e_m, at offsets m-2..m+2.
    v: [f64; 5],
    /// T^{-1} e_m.
    z: Vec<f64>,
    denom: f64,
}

impl Stepper {
    fn new(op: Operator, grid: &Grid1D) -> Self {
        let n = op.di.len();
        let th = grid.theta;
        let dt = grid.dt;
        let mut t_lo = vec![0.0; n];
        let mut t_di = vec![0.0; n];
        let mut t_hi = vec![0.0; n];
        for j in 0..n {
            t_lo[j] = -th * dt * op.lo[j];
            t_di[j] = 1.0 - th * dt * op.di[j];
            t_hi[j] = -th * dt * op.hi[j];
        }
        let m = op.m;
        let sm = op.membrane_row.map(|row| {
            t_lo[m] = 0.0;
            t_di[m] = 1.0;
            t_hi[m] = 0.0;
            // LHS membrane row: sticky (r > 0) gets theta-weighted u_t;
            // instantaneous (r = 0) imposes F(u^{n+1}) = 0 fully implicitly.
            let mut full = [0.0f64; 5];
            if op.r > 0.0 {
                for k in 0..5 {
                    full[k] = -th * dt / op.r * row[k];
                }
                full[2] += 1.0;
            } else {
                full = row;
            }
            let mut v = full;
            v[2] -= 1.0;
            let mut z = vec![0.0; n];
            z[m] = 1.0;
            thomas(&t_lo, &t_di, &t_hi, &mut z);
            let denom = 1.0 + (0..5).map(|k| v[k] * z[m - 2 + k]).sum::<f64>();
            SmRow { v, z, denom }
        });
        Stepper {
            op,
            grid_theta: th,
            dt,
            t_lo,
            t_di,
            t_hi,
            sm,
        }
    }

    /// Explicit part `u + (1-theta) dt L u` with the membrane RHS.
    fn rhs(&self, u: &[f64], out: &mut Vec<f64>) {
        let n = u.len();
        let ex = (1.0 - self.grid_theta) * self.dt;
        out.clear();
        for j in 0..n {
            let lu = (if j > 0 { self.op.lo[j] * u[j - 1] } else { 0.0 })
                + self.op.di[j] * u[j]
                + (if j + 1 < n { self.op.hi[j] * u[j + 1] } else { 0.0 });
            out.push(u[j] + ex * lu);
        }
        if let Some(row) = self.op.membrane_row {
            let m = self.op.m;
            let f: f64 = (0..5).map(|k| row[k] * u[m - 2 + k]).sum();
            out[m] = if self.op.r > 0.0 {
                u[m] + (1.0 - self.grid_theta) * self.dt / self.op.r * f
            } else {
                0.0
            };
        }
    }

    fn advance(&self, u: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        self.rhs(u, scratch);
        thomas(&self.t_lo, &self.t_di, &self.t_hi, scratch);
        if let Some(sm) = &self.sm {
            let m = self.op.m;
            let vy: f64 = (0..5).map(|k| sm.v[k] * scratch[m - 2 + k]).sum();
            let factor = vy / sm.denom;
            for j in 0..scratch.len() {
                scratch[j] -= factor * sm.z[j];
            }
        }
        std::mem::swap(u, scratch);
    }
}

fn store_stride(n_steps: usize) -> usize {
    n_steps / 4000 + 1
}

/// Semigroup solve `u(t, x) = E_x phi(x(t))` on the grid.
pub fn solve_interface_heat(
    spec: &DiffusionSpec,
    surface: &Surface,
    phi_init: &TestFunction,
    grid: &Grid1D,
) -> Result<GridFunction, MembraneError> {
    grid.validate()?;
    match (&surface.kind, grid.geometry) {
        (SurfaceKind::Point1d { .. }, GridGeometry::Line { .. }) => {}
        (SurfaceKind::Sphere { .. }, GridGeometry::Radial { .. }) => {}
        _ => {
            return Err(MembraneError::Unsupported(
                "surface kind does not match grid geometry".into(),
            ))
        }
    }
    let op = build_operator(spec, surface, grid)?;
    stability_check(&op, grid)?;
    let stepper = Stepper::new(op, grid);

    let n = grid.xs.len();
    let mut u: Vec<f64> = (0..n)
        .map(|j| phi_init.value(0.0, &grid.point(j, surface), surface))
        .collect();
    let n_steps = grid.n_steps();
    let stride = store_stride(n_steps);
    let mut times = vec![0.0];
    let mut values = u.clone();
    let mut scratch = Vec::with_capacity(n);
    for k in 1..=n_steps {
        stepper.advance(&mut u, &mut scratch);
        if k % stride == 0 || k == n_steps {
            times.push(k as f64 * grid.dt);
            values.extend_from_slice(&u);
        }
    }
    let gf = GridFunction {
        xs: grid.xs.clone(),
        times,
        values,
        membrane_index: grid.membrane_index,
        geometry: grid.geometry,
    };
    gf.assert_finite()?;
    Ok(gf)
}

/// Boundary data on the membrane with compact time support.
pub struct BoundaryData<'a> {
    /// `h(t) = 0` for `t >= support_end`.
    pub support_end: f64,
    pub h: &'a (dyn Fn(f64) -> f64 + Sync),
}

/// Two-sided extension: solves the backward equation
/// `dU/dt + (1/2) sigma^2 U_xx = 0` separately on each side with Dirichlet
/// data `h` on the membrane and terminal data zero at the end of the
/// support, extended by zero afterwards. Line geometry only.
pub fn solve_extension_hh(
    spec: &DiffusionSpec,
    _surface: &Surface,
    data: &BoundaryData,
    grid: &Grid1D,
) -> Result<GridFunction, MembraneError> {
    grid.validate()?;
    if !matches!(grid.geometry, GridGeometry::Line { .. }) {
        return Err(MembraneError::Unsupported(
            "extension solver supports line geometry only".into(),
        ));
    }
    if !data.support_end.is_finite() || data.support_end <= 0.0 {
        return Err(MembraneError::NonCompactSupport);
    }
    let t0 = data.support_end;
    if grid.t_end < t0 {
        return Err(MembraneError::Grid(
            "grid horizon must cover the support of h".into(),
        ));
    }

    let n = grid.xs.len();
    let m = grid.membrane_index;
    let dx = grid.dx;
    let th = grid.theta;
    let dt = grid.dt;
    let sig2: Vec<f64> = (0..n).map(|j| spec.b.entry(&[grid.xs[j]], 0, 0)).collect();

    // Reversed clock: W(s, x) = U(t0 - s, x) marches forward with Dirichlet
    // membrane row W(s, 0) = h(t0 - s).
    let mut t_lo = vec![0.0; n];
    let mut t_di = vec![1.0; n];
    let mut t_hi = vec![0.0; n];
    let mut e_lo = vec![0.0; n];
    let mut e_di = vec![0.0; n];
    let mut e_hi = vec![0.0; n];
    for j in 0..n {
        if j == m {
            continue; // identity row; RHS carries the Dirichlet value
        }
        let (l, d, h) = if j == 0 {
            (0.0, -sig2[0] / (dx * dx), sig2[0] / (dx * dx))
        } else if j == n - 1 {
            (sig2[j] / (dx * dx), -sig2[j] / (dx * dx), 0.0)
        } else {
            let c = 0.5 * sig2[j] / (dx * dx);
            (c, -2.0 * c, c)
        };
        t_lo[j] = -th * dt * l;
        t_di[j] = 1.0 - th * dt * d;
        t_hi[j] = -th * dt * h;
        e_lo[j] = l;
        e_di[j] = d;
        e_hi[j] = h;
    }
    if th < 1.0 {
        let worst = sig2.iter().cloned().fold(0.0f64, f64::max) / (dx * dx);
        if (1.0 - th) * dt * worst > 1.0 + 1e-12 {
            return Err(MembraneError::UnstableStep {
                suggested: 0.9 / ((1.0 - th) * worst),
            });
        }
    }

    let n_steps = (t0 / dt).round() as usize;
    let stride = store_stride(n_steps);
    let mut w = vec![0.0; n];
    w[m] = (data.h)(t0);
    // Reversed-clock slices, re-ordered to forward time afterwards.
    let mut rev_slices: Vec<(f64, Vec<f64>)> = vec![(0.0, w.clone())];
    let mut rhs = vec![0.0; n];
    for k in 1..=n_steps {
        let s = k as f64 * dt;
        for j in 0..n {
            let lu = (if j > 0 { e_lo[j] * w[j - 1] } else { 0.0 })
                + e_di[j] * w[j]
                + (if j + 1 < n { e_hi[j] * w[j + 1] } else { 0.0 });
            rhs[j] = w[j] + (1.0 - th) * dt * lu;
        }
        rhs[m] = (data.h)(t0 - s);
        thomas(&t_lo, &t_di, &t_hi, &mut rhs);
        std::mem::swap(&mut w, &mut rhs);
        if k % stride == 0 || k == n_steps {
            rev_slices.push((s, w.clone()));
        }
    }

    let mut times = Vec::with_capacity(rev_slices.len());
    let mut values = Vec::with_capacity(rev_slices.len() * n);
    for (s, slice) in rev_slices.iter().rev() {
        times.push(t0 - s);
        values.extend_from_slice(slice);
    }
    let gf = GridFunction {
        xs: grid.xs.clone(),
        times,
        values,
        membrane_index: grid.membrane_index,
        geometry: grid.geometry,
    };
    gf.assert_finite()?;
    Ok(gf)
}

/// `Kf` at the membrane from one-sided grid stencils:
/// `(1+q)/2 df/dN(+) - (1-q)/2 df/dN(-)`.
pub fn evaluate_k_grid(
    u: &GridFunction,
    spec: &DiffusionSpec,
    surface: &Surface,
    ti: usize,
) -> f64 {
    let m_point = match u.geometry {
        GridGeometry::Line { membrane } => vec![membrane],
        GridGeometry::Radial { dim, radius } => {
            let mut p = vec![0.0; dim];
            p[0] = radius;
            p
        }
    };
    let q = spec.q.eval(surface, &m_point);
    let cn = spec.conormal_component(surface, &m_point);
    let dp = u.one_sided_dx(ti, true);
    let dm = u.one_sided_dx(ti, false);
    0.5 * (1.0 + q) * cn * dp - 0.5 * (1.0 - q) * cn * dm
}

/// Table of `Ktilde h (t) = r d(Hh)/dt + [(1+q)/2 d(Hh)/dN(+) - (1-q)/2 d(Hh)/dN(-)]`
/// at the membrane, on the stored time grid of the extension.
pub struct KtildeTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn evaluate_ktilde(
    hh: &GridFunction,
    spec: &DiffusionSpec,
    surface: &Surface,
) -> Result<KtildeTable, MembraneError> {
    let nt = hh.times.len();
    if nt < 3 {
        return Err(MembraneError::Grid("extension table too short for Ktilde".into()));
    }
    let m_point = match hh.geometry {
        GridGeometry::Line { membrane } => vec![membrane],
        GridGeometry::Radial { .. } => {
            return Err(MembraneError::Unsupported(
                "Ktilde table supports line geometry only".into(),
            ))
        }
    };
    let r = spec.r.eval(surface, &m_point);
    let mut values = Vec::with_capacity(nt);
    for ti in 0..nt {
        let du_dt = if r == 0.0 {
            0.0
        } else if ti == 0 {
            (hh.membrane_value(1) - hh.membrane_value(0)) / (hh.times[1] - hh.times[0])
        } else if ti == nt - 1 {
            (hh.membrane_value(nt - 1) - hh.membrane_value(nt - 2))
                / (hh.times[nt - 1] - hh.times[nt - 2])
        } else {
            (hh.membrane_value(ti + 1) - hh.membrane_value(ti - 1))
                / (hh.times[ti + 1] - hh.times[ti - 1])
        };
        values.push(r * du_dt + evaluate_k_grid(hh, spec, surface, ti));
    }
    Ok(KtildeTable {
        times: hh.times.clone(),
        values,
    })
}
