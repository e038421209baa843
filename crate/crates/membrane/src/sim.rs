//! Monte Carlo construction of the membrane process.
//!
//! The base layer is an Euler scheme for the skew diffusion: between
//! membrane encounters the state follows `dx0 = b^{1/2} dw`; a step that
//! crosses or lands inside the epsilon band of `S` is resampled to the
//! exterior side with probability `(1+q)/2` (crossing-resample mode) or the
//! skew is carried by a mollified drift `q N rho_eps` (mollified-drift
//! mode). The delaying membrane is produced by the random time change
//! `zeta_t`, the inverse of `A(s) = s + int r d eta`, and the compensator on
//! the changed clock is `gamma = eta o zeta`.
//!
//! Local time `eta` can be estimated by the epsilon-band surrogate
//! `(1/2 eps) int 1{d(x0,S) < eps} ds` (optionally Richardson-extrapolated
//! over two band widths) or, for a flat membrane with constant `b`, by the
//! conditional bridge estimator, which is unbiased given the step skeleton
//! because the reflected normal coordinate of the skeleton is exact.

use crate::coeffs::{DiffusionField, DiffusionSpec};
use crate::error::MembraneError;
use crate::geometry::Surface;
use crate::rng::path_rng;
use crate::stats::DensityTable;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SkewMode {
    CrossingResample,
    MollifiedDrift { eps_drift: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LocalTimeMode {
    /// `(1/2 eps) int 1{d < eps}` on the step grid.
    Band { eps: f64 },
    /// Two-width Richardson extrapolation `2 eta(eps/2) - eta(eps)`.
    BandRichardson { eps: f64 },
    /// Conditional expectation of the step-bridge local time given the
    /// reflected endpoints; exact in mean for a flat membrane and constant b.
    Bridge,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimScheme {
    /// Operational-time step.
    pub dt: f64,
    pub skew_mode: SkewMode,
    /// Band half-width for occupation surrogates and crossing detection.
    pub band_eps: f64,
    pub localtime: LocalTimeMode,
    /// Operational-time horizon of the base layer.
    pub horizon: f64,
    pub master_seed: u64,
}

impl SimScheme {
    pub fn validate(&self) -> Result<(), MembraneError> {
        if self.dt <= 0.0 {
            return Err(MembraneError::Scheme("dt must be positive".into()));
        }
        if self.band_eps <= 0.0 {
            return Err(MembraneError::Scheme("band_eps must be positive".into()));
        }
        if let SkewMode::MollifiedDrift { eps_drift } = self.skew_mode {
            if eps_drift <= 0.0 {
                return Err(MembraneError::Scheme("eps_drift must be positive".into()));
            }
        }
        if self.horizon <= 0.0 {
            return Err(MembraneError::Scheme("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// One discretized trajectory: base layer in operational time `s`, changed
/// layer in physical time `t`.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub dim: usize,
    pub dt: f64,
    /// Base states, flattened `(n_steps + 1) x dim`.
    pub base_states: Vec<f64>,
    /// Local-time values on the base grid (empty until estimated).
    pub eta: Vec<f64>,
    /// Changed-clock states, flattened, on the uniform physical grid.
    pub states: Vec<f64>,
    /// `gamma(t) = eta(zeta_t)` on the physical grid.
    pub gamma: Vec<f64>,
    /// Index into the base grid of `zeta_t` for each physical node.
    pub zeta_idx: Vec<usize>,
    /// Cumulative Lebesgue time within the band on the changed clock.
    pub occupation_s: Vec<f64>,
    pub truncated: bool,
}

impl PathBundle {
    pub fn n_base(&self) -> usize {
        self.base_states.len() / self.dim
    }

    pub fn base_state(&self, k: usize) -> &[f64] {
        &self.base_states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn n_changed(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    /// Changed-clock node index for physical time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.n_changed().saturating_sub(1))
    }

    /// Synthetic bundle from explicit base states (tests and oracles).
    pub fn from_base_states(dim: usize, dt: f64, flat: Vec<f64>) -> Self {
        PathBundle {
            dim,
            dt,
            base_states: flat,
            eta: Vec::new(),
            states: Vec::new(),
            gamma: Vec::new(),
            zeta_idx: Vec::new(),
            occupation_s: Vec::new(),
            truncated: false,
        }
    }
}

/// Time-changed boundary process samples on a theta grid.
#[derive(Debug, Clone)]
pub struct BoundaryPath {
    pub thetas: Vec<f64>,
    pub tau: Vec<f64>,
    /// Surface points, flattened.
    pub y: Vec<f64>,
    pub dim: usize,
    /// First theta index beyond the accumulated gamma range, if any.
    pub exhausted_at: Option<usize>,
}

/// Simulate the base layer of a single path.
pub fn simulate_base_path(
    spec: &DiffusionSpec,
    surface: &Surface,
    start: &[f64],
    scheme: &SimScheme,
    path_index: u64,
) -> Result<PathBundle, MembraneError> {
    scheme.validate()?;
    let dim = surface.dim;
    let n_steps = scheme.n_steps();
    let mut rng = path_rng(scheme.master_seed, path_index);
    let mut states = Vec::with_capacity((n_steps + 1) * dim);
    states.extend_from_slice(start);

    let sqrt_dt = scheme.dt.sqrt();
    let scalar_sigma = match spec.b {
        DiffusionField::Scalar { sigma2 } => Some(sigma2.sqrt()),
        _ => None,
    };

    let mut x = start.to_vec();
    let mut s_old = surface.signed_coord(&x);
    let mut prop = vec![0.0; dim];

    for step in 0..n_steps {
        // Diffusive proposal.
        if let Some(sigma) = scalar_sigma {
            for i in 0..dim {
                let xi: f64 = rng.sample(StandardNormal);
                prop[i] = x[i] + sigma * sqrt_dt * xi;
            }
        } else {
            let xi: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let dw = spec.b.sqrt_mul(&x, &xi);
            for i in 0..dim {
                prop[i] = x[i] + sqrt_dt * dw[i];
            }
        }

        match scheme.skew_mode {
            SkewMode::MollifiedDrift { eps_drift } => {
                let d = surface.unsigned_distance(&x);
                if d < eps_drift {
                    let z = surface.project(&x);
                    let q = spec.q.eval(surface, &z);
                    if q.abs() >= 1.0 {
                        return Err(MembraneError::Scheme(
                            "mollified drift requires |q| < 1 (total reflection needs crossing resampling)".into(),
                        ));
                    }
                    if q != 0.0 {
                        // The scale function of the drifted diffusion jumps
                        // by exp(-2 c / sigma^2) across the band, so a drift
                        // coefficient c produces effective skewness
                        // tanh(c / sigma^2); invert it to hit q exactly.
                        let c = 0.5 * ((1.0 + q) / (1.0 - q)).ln();
                        let rho = (1.0 - d / eps_drift) / eps_drift;
                        let nu = surface.gradient_signed(&z);
                        let n_vec = spec.b.mul_vec(&z, &nu);
                        for i in 0..dim {
                            prop[i] += scheme.dt * c * n_vec[i] * rho;
                        }
                    }
                }
            }
            SkewMode::CrossingResample => {
                let s_new = surface.signed_coord(&prop);
                // A membrane visit during the step: it starts at the band,
                // crosses, or lands in the band.
                if s_old.abs() < scheme.band_eps
                    || s_old * s_new < 0.0
                    || s_new.abs() < scheme.band_eps
                {
                    // Linear interpolation of the signed coordinate locates
                    // the crossing point used to read off q.
                    let lambda = if (s_old - s_new).abs() > 1e-300 {
                        (s_old / (s_old - s_new)).clamp(0.0, 1.0)
                    } else {
                        0.5
                    };
                    let crossing: Vec<f64> = (0..dim)
                        .map(|i| x[i] + lambda * (prop[i] - x[i]))
                        .collect();
                    let z = surface.project(&crossing);
                    let q = spec.q.eval(surface, &z);
                    let to_exterior = rng.random::<f64>() < 0.5 * (1.0 + q);
                    let target = if to_exterior { s_new.abs() } else { -s_new.abs() };
                    if target != s_new {
                        let grad = surface.gradient_signed(&prop);
                        for i in 0..dim {
                            prop[i] += (target - s_new) * grad[i];
                        }
                    }
                }
            }
        }

        for v in &prop {
            if !v.is_finite() {
                return Err(MembraneError::Diverged { step });
            }
        }
        x.copy_from_slice(&prop);
        s_old = surface.signed_coord(&x);
        states.extend_from_slice(&x);
    }

    Ok(PathBundle::from_base_states(dim, scheme.dt, states))
}

/// Epsilon-band local time on the base grid of an existing bundle.
pub fn band_eta(bundle: &PathBundle, surface: &Surface, eps: f64) -> Vec<f64> {
    let n = bundle.n_base();
    let mut eta = Vec::with_capacity(n);
    eta.push(0.0);
    let mut acc = 0.0;
    for k in 0..n - 1 {
        if surface.unsigned_distance(bundle.base_state(k)) < eps {
            acc += bundle.dt / (2.0 * eps);
        }
        eta.push(acc);
    }
    eta
}

fn bridge_eta(bundle: &PathBundle, surface: &Surface, spec: &DiffusionSpec) -> Vec<f64> {
    let sigma2 = match spec.b {
        DiffusionField::Scalar { sigma2 } => sigma2,
        _ => panic!("bridge local-time estimator requires a constant scalar b"),
    };
    let h = bundle.dt;
    let sig_h = (sigma2 * h).sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma2 * h).sqrt();
    let n = bundle.n_base();
    let mut eta = Vec::with_capacity(n);
    eta.push(0.0);
    let mut acc = 0.0;
    let mut u = surface.unsigned_distance(bundle.base_state(0));
    for k in 1..n {
        let v = surface.unsigned_distance(bundle.base_state(k));
        let sum = u + v;
        // erfc underflows past ~ 8 standard deviations; skip far steps.
        if sum < 12.0 * sig_h {
            let num = libm::erfc(sum / (sig_h * std::f64::consts::SQRT_2));
            let diff = u - v;
            let den = norm
                * ((-diff * diff / (2.0 * sigma2 * h)).exp()
                    + (-sum * sum / (2.0 * sigma2 * h)).exp());
            acc += num / den;
        }
        u = v;
        eta.push(acc);
    }
    eta
}

/// Fill `eta` on the base grid using the scheme's estimator.
pub fn estimate_eta(
    bundle: &mut PathBundle,
    spec: &DiffusionSpec,
    surface: &Surface,
    mode: LocalTimeMode,
) {
    bundle.eta = match mode {
        LocalTimeMode::Band { eps } => band_eta(bundle, surface, eps),
        LocalTimeMode::BandRichardson { eps } => {
            let coarse = band_eta(bundle, surface, eps);
            let fine = band_eta(bundle, surface, 0.5 * eps);
            fine.iter()
                .zip(&coarse)
                .map(|(f, c)| (2.0 * f - c).max(0.0))
                .collect()
        }
        LocalTimeMode::Bridge => bridge_eta(bundle, surface, spec),
    };
    // Monotonicity can be lost only through the extrapolated variant; clamp.
    let mut prev = 0.0;
    for e in bundle.eta.iter_mut() {
        if *e < prev {
            *e = prev;
        }
        prev = *e;
    }
}

/// Apply the random time change up to the physical horizon, filling the
/// changed layer. `gamma(t) = eta(zeta_t)`; occupation is accumulated with
/// the band indicator on the changed clock.
pub fn apply_time_change(
    bundle: &mut PathBundle,
    spec: &DiffusionSpec,
    surface: &Surface,
    phys_horizon: f64,
    band_eps: f64,
) -> Result<(), MembraneError> {
    if bundle.eta.is_empty() {
        // r == 0 everywhere makes eta irrelevant for the clock, but gamma
        // still needs it; callers estimate first.
        return Err(MembraneError::Scheme("estimate_eta must run before the time change".into()));
    }
    let n_base = bundle.n_base();
    let dt = bundle.dt;
    let r_const = match &spec.r {
        crate::coeffs::SurfaceField::Constant { value } => Some(*value),
        _ => None,
    };

    // A(s) on the base grid.
    let mut big_a = Vec::with_capacity(n_base);
    big_a.push(0.0);
    for k in 1..n_base {
        let d_eta = bundle.eta[k] - bundle.eta[k - 1];
        let extra = if d_eta > 0.0 {
            let r = match r_const {
                Some(r) => r,
                None => {
                    let z = surface.project(bundle.base_state(k - 1));
                    spec.r.eval(surface, &z)
                }
            };
            r * d_eta
        } else {
            0.0
        };
        big_a.push(big_a[k - 1] + dt + extra);
    }

    let n_phys = (phys_horizon / dt).round() as usize;
    let dim = bundle.dim;
    let mut states = Vec::with_capacity((n_phys + 1) * dim);
    let mut gamma = Vec::with_capacity(n_phys + 1);
    let mut zeta_idx = Vec::with_capacity(n_phys + 1);
    let mut occupation = Vec::with_capacity(n_phys + 1);
    let mut occ = 0.0;
    let mut k = 0usize;
    let mut truncated = false;
    for j in 0..=n_phys {
        let t = j as f64 * dt;
        while k < n_base - 1 && big_a[k] < t - 1e-12 {
            k += 1;
        }
        if big_a[k] < t - 1e-12 {
            truncated = true;
            break;
        }
        // Base step k covers the physical interval (A[k-1], A[k]] of length
        // dt + r d_eta. When t falls in the delay portion the particle is
        // sitting on the membrane, not at the off-surface crossing state;
        // store the projected point so occupation and compensator walks see
        // a surface node. Classification is one-step accurate.
        let x_k = bundle.base_state(k);
        if big_a[k] - t > dt * (1.0 - 1e-9) {
            let z = surface.project(x_k);
            if j > 0 {
                occ += dt;
            }
            states.extend_from_slice(&z);
        } else {
            if j > 0 && surface.unsigned_distance(x_k) < band_eps {
                occ += dt;
            }
            states.extend_from_slice(x_k);
        }
        gamma.push(bundle.eta[k]);
        zeta_idx.push(k);
        occupation.push(occ);
    }
    bundle.states = states;
    bundle.gamma = gamma;
    bundle.zeta_idx = zeta_idx;
    bundle.occupation_s = occupation;
    bundle.truncated = truncated;
    Ok(())
}

/// Right-continuous inverse of `gamma` on the changed grid; `y` is the
/// projected state at `tau(theta)`.
pub fn extract_boundary_process(
    bundle: &PathBundle,
    surface: &Surface,
    thetas: &[f64],
) -> Result<BoundaryPath, MembraneError> {
    let start = bundle.state(0);
    let d0 = surface.unsigned_distance(start);
    if d0 > crate::geometry::on_tolerance(start) {
        return Err(MembraneError::StartOffSurface(d0));
    }
    let n = bundle.n_changed();
    let dim = bundle.dim;
    let gamma_end = *bundle.gamma.last().unwrap();
    let mut tau = Vec::with_capacity(thetas.len());
    let mut y = Vec::with_capacity(thetas.len() * dim);
    let mut exhausted_at = None;
    let mut j = 0usize;
    for (i, &theta) in thetas.iter().enumerate() {
        if theta >= gamma_end {
            exhausted_at = Some(i);
            break;
        }
        // sup{t : gamma(t) <= theta}: advance to the last node not exceeding.
        while j + 1 < n && bundle.gamma[j + 1] <= theta {
            j += 1;
        }
        tau.push(j as f64 * bundle.dt);
        y.extend_from_slice(&surface.project(bundle.state(j)));
    }
    Ok(BoundaryPath {
        thetas: thetas[..tau.len()].to_vec(),
        tau,
        y,
        dim,
        exhausted_at,
    })
}

/// Run the full per-path pipeline (base, local time, time change) for
/// `n_paths` paths and reduce each to `T`. Paths are independent; the output
/// order is by path index regardless of scheduling.
pub fn run_paths<T, F>(
    spec: &DiffusionSpec,
    surface: &Surface,
    start: &[f64],
    scheme: &SimScheme,
    phys_horizon: f64,
    n_paths: usize,
    map: F,
) -> Result<Vec<T>, MembraneError>
where
    T: Send,
    F: Fn(usize, &PathBundle) -> T + Sync,
{
    scheme.validate()?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut bundle = simulate_base_path(spec, surface, start, scheme, i as u64)?;
            estimate_eta(&mut bundle, spec, surface, scheme.localtime);
            apply_time_change(&mut bundle, spec, surface, phys_horizon, scheme.band_eps)?;
            Ok(map(i, &bundle))
        })
        .collect()
}

/// Base-layer-only ensemble reduction (no time change), for checks on `x0`.
pub fn run_base_paths<T, F>(
    spec: &DiffusionSpec,
    surface: &Surface,
    start: &[f64],
    scheme: &SimScheme,
    n_paths: usize,
    map: F,
) -> Result<Vec<T>, MembraneError>
where
    T: Send,
    F: Fn(usize, &mut PathBundle) -> T + Sync,
{
    scheme.validate()?;
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut bundle = simulate_base_path(spec, surface, start, scheme, i as u64)?;
            Ok(map(i, &mut bundle))
        })
        .collect()
}

/// Histogram of the ensemble law of a scalar path functional at time `t`.
pub fn empirical_density(
    samples: &[f64],
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<DensityTable, MembraneError> {
    if samples.len() < 1000 {
        return Err(MembraneError::Scheme(format!(
            "empirical density needs >= 1000 paths, got {}",
            samples.len()
        )));
    }
    DensityTable::from_samples(samples, lo, hi, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use approx::assert_abs_diff_eq;

    fn line() -> Surface {
        Surface::point_1d(0.0)
    }

    fn scheme(dt: f64, horizon: f64, seed: u64) -> SimScheme {
        SimScheme {
            dt,
            skew_mode: SkewMode::CrossingResample,
            band_eps: 0.02,
            localtime: LocalTimeMode::Bridge,
            horizon,
            master_seed: seed,
        }
    }

    #[test]
    fn symmetric_crossings_are_fair() {
        let spec = DiffusionSpec::brownian_1d(0.0, 0.0);
        let surface = line();
        let sch = scheme(1e-3, 0.5, 11);
        let counts = run_base_paths(&spec, &surface, &[0.0], &sch, 2000, |_, b| {
            // Steps starting inside the band are always resampled, so their
            // endpoint sign records one independent fair coin each.
            let mut triggers = 0usize;
            let mut exterior = 0usize;
            for k in 1..b.n_base() {
                let s_prev = b.base_state(k - 1)[0];
                let s = b.base_state(k)[0];
                if s_prev.abs() < sch.band_eps {
                    triggers += 1;
                    if s > 0.0 {
                        exterior += 1;
                    }
                }
            }
            (triggers, exterior)
        })
        .unwrap();
        let total: usize = counts.iter().map(|(t, _)| t).sum();
        let ext: usize = counts.iter().map(|(_, e)| e).sum();
        assert!(total > 20_000, "expected plenty of membrane visits, got {total}");
        let p = ext as f64 / total as f64;
        let se = (0.25 / total as f64).sqrt();
        assert!((p - 0.5).abs() <= 3.0 * se, "p = {p}, se = {se}");
    }

    #[test]
    fn total_skew_leaves_no_interior_time() {
        let spec = DiffusionSpec::brownian_1d(1.0, 0.0);
        let surface = line();
        let sch = scheme(1e-3, 1.0, 5);
        let fractions = run_base_paths(&spec, &surface, &[0.0], &sch, 50, |_, b| {
            let neg = (0..b.n_base())
                .filter(|&k| b.base_state(k)[0] < -sch.band_eps)
                .count();
            neg as f64 / b.n_base() as f64
        })
        .unwrap();
        assert!(stats::mean(&fractions) <= 0.01);
    }

    #[test]
    fn skew_half_hits_three_quarters() {
        let spec = DiffusionSpec::brownian_1d(0.5, 0.0);
        let surface = line();
        let sch = scheme(1e-3, 1.0, 23);
        let hits = run_base_paths(&spec, &surface, &[0.0], &sch, 20_000, |_, b| {
            let last = b.base_state(b.n_base() - 1)[0];
            if last > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let (p, se) = stats::mean_se(&hits);
        // P(x0(1) > 0) = (1+q)/2 for the skew diffusion started on S.
        assert!((p - 0.75).abs() <= 3.5 * se + 0.01, "p = {p}, se = {se}");
    }

    #[test]
    fn band_eta_on_deterministic_path() {
        // x(u) = u - 1, unit speed through the membrane.
        let dt = 1e-4;
        let n = 20_001;
        let flat: Vec<f64> = (0..n).map(|k| k as f64 * dt - 1.0).collect();
        let mut bundle = PathBundle::from_base_states(1, dt, flat);
        estimate_eta(
            &mut bundle,
            &DiffusionSpec::brownian_1d(0.0, 0.0),
            &line(),
            LocalTimeMode::Band { eps: 0.01 },
        );
        assert_abs_diff_eq!(*bundle.eta.last().unwrap(), 1.0, epsilon = 0.02);
    }

    #[test]
    fn eta_zero_off_membrane() {
        let dt = 1e-3;
        let flat: Vec<f64> = (0..1000).map(|k| 5.0 + (k as f64 * dt).sin()).collect();
        let mut bundle = PathBundle::from_base_states(1, dt, flat);
        estimate_eta(
            &mut bundle,
            &DiffusionSpec::brownian_1d(0.0, 0.0),
            &line(),
            LocalTimeMode::Band { eps: 0.01 },
        );
        assert!(bundle.eta.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn mean_local_time_matches_brownian_value() {
        // E L_1 = sqrt(2/pi) for standard BM from 0; both estimators agree.
        let spec = DiffusionSpec::brownian_1d(0.0, 0.0);
        let surface = line();
        let sch = SimScheme {
            dt: 1e-4,
            skew_mode: SkewMode::CrossingResample,
            band_eps: 0.04,
            localtime: LocalTimeMode::Bridge,
            horizon: 1.0,
            master_seed: 99,
        };
        let expected = (2.0 / std::f64::consts::PI).sqrt();
        let both = run_base_paths(&spec, &surface, &[0.0], &sch, 4_000, |_, b| {
            estimate_eta(b, &spec, &surface, LocalTimeMode::Bridge);
            let bridge = *b.eta.last().unwrap();
            estimate_eta(b, &spec, &surface, LocalTimeMode::BandRichardson { eps: 0.04 });
            (bridge, *b.eta.last().unwrap())
        })
        .unwrap();
        let bridge: Vec<f64> = both.iter().map(|(a, _)| *a).collect();
        let band: Vec<f64> = both.iter().map(|(_, b)| *b).collect();
        let (mb, sb) = stats::mean_se(&bridge);
        let (mr, sr) = stats::mean_se(&band);
        assert!((mb - expected).abs() <= 3.0 * sb + 0.01, "bridge {mb} +- {sb}");
        assert!((mr - expected).abs() <= 3.0 * sr + 0.03, "band {mr} +- {sr}");
    }

    #[test]
    fn time_change_identity_when_r_zero() {
        let spec = DiffusionSpec::brownian_1d(0.3, 0.0);
        let surface = line();
        let sch = scheme(1e-3, 0.5, 3);
        let mut b = simulate_base_path(&spec, &surface, &[0.0], &sch, 0).unwrap();
        estimate_eta(&mut b, &spec, &surface, LocalTimeMode::Bridge);
        apply_time_change(&mut b, &spec, &surface, 0.5, sch.band_eps).unwrap();
        assert_eq!(b.n_changed(), b.n_base());
        for j in 0..b.n_changed() {
            assert_eq!(b.state(j)[0], b.base_state(j)[0]);
            assert_eq!(b.gamma[j], b.eta[j]);
        }
        assert!(!b.truncated);
    }

    #[test]
    fn time_change_with_synthetic_eta() {
        // eta(s) = s and r = c: A(s) = (1+c)s, gamma(t) = t/(1+c).
        let dt = 1e-3;
        let c = 1.5;
        let n = 1001;
        let flat: Vec<f64> = vec![0.0; n];
        let mut b = PathBundle::from_base_states(1, dt, flat);
        b.eta = (0..n).map(|k| k as f64 * dt).collect();
        let spec = DiffusionSpec::brownian_1d(0.0, c);
        apply_time_change(&mut b, &spec, &line(), 1.0, 0.02).unwrap();
        let t = 0.8;
        let j = b.index_at(t);
        assert_abs_diff_eq!(b.gamma[j], t / (1.0 + c), epsilon = 2.0 * dt);
    }

    #[test]
    fn gamma_monotone_and_zero_at_start() {
        let spec = DiffusionSpec::brownian_1d(0.2, 1.0);
        let surface = line();
        let sch = scheme(1e-3, 1.0, 17);
        run_paths(&spec, &surface, &[0.0], &sch, 1.0, 50, |_, b| {
            assert_eq!(b.gamma[0], 0.0);
            for j in 1..b.gamma.len() {
                assert!(b.gamma[j] >= b.gamma[j - 1]);
            }
            for j in 1..b.eta.len() {
                assert!(b.eta[j] >= b.eta[j - 1]);
            }
        })
        .unwrap();
    }

    #[test]
    fn boundary_process_basics() {
        let spec = DiffusionSpec::brownian_1d(0.0, 0.0);
        let surface = line();
        let sch = scheme(1e-3, 1.0, 29);
        let mut b = simulate_base_path(&spec, &surface, &[0.0], &sch, 1).unwrap();
        estimate_eta(&mut b, &spec, &surface, LocalTimeMode::Bridge);
        apply_time_change(&mut b, &spec, &surface, 1.0, sch.band_eps).unwrap();
        let thetas: Vec<f64> = (0..20).map(|i| i as f64 * 0.01).collect();
        let bp = extract_boundary_process(&b, &surface, &thetas).unwrap();
        assert_eq!(bp.tau[0], 0.0);
        assert_eq!(bp.y[0], 0.0);
        for w in bp.tau.windows(2) {
            assert!(w[1] >= w[0]);
        }
        // Single-point surface: y is identically the membrane location.
        assert!(bp.y.iter().all(|&v| v == 0.0));

        // Rejects starts off S.
        let mut off = b.clone();
        off.states[0] = 1.0;
        assert!(extract_boundary_process(&off, &surface, &thetas).is_err());
    }

    #[test]
    fn boundary_inverse_of_synthetic_gamma() {
        // gamma(t) = t/2 gives tau(theta) = 2 theta.
        let dt = 1e-3;
        let n = 1001;
        let mut b = PathBundle::from_base_states(1, dt, vec![0.0; n]);
        b.states = vec![0.0; n];
        b.gamma = (0..n).map(|k| k as f64 * dt / 2.0).collect();
        b.zeta_idx = (0..n).collect();
        b.occupation_s = vec![0.0; n];
        let thetas = [0.0, 0.1, 0.2];
        let bp = extract_boundary_process(&b, &Surface::point_1d(0.0), &thetas).unwrap();
        for (i, &theta) in thetas.iter().enumerate() {
            assert_abs_diff_eq!(bp.tau[i], 2.0 * theta, epsilon = 2.0 * dt);
        }
    }

    #[test]
    fn null_membrane_terminal_law_is_gaussian() {
        let spec = DiffusionSpec::brownian_1d(0.0, 0.0);
        let surface = line();
        let sch = scheme(1e-3, 1.0, 41);
        let mut terminal = run_base_paths(&spec, &surface, &[0.0], &sch, 10_000, |_, b| {
            b.base_state(b.n_base() - 1)[0]
        })
        .unwrap();
        let d = stats::ks_distance_to_cdf(&mut terminal, stats::normal_cdf);
        assert!(d < 0.02, "KS distance {d}");
        let table = empirical_density(&terminal, -4.0, 4.0, 64).unwrap();
        assert_abs_diff_eq!(table.total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn truncation_flag_set_when_horizon_exhausted() {
        let spec = DiffusionSpec::brownian_1d(0.0, 5.0);
        let surface = line();
        let sch = SimScheme {
            dt: 1e-3,
            skew_mode: SkewMode::CrossingResample,
            band_eps: 0.02,
            localtime: LocalTimeMode::Bridge,
            horizon: 0.2,
            master_seed: 4,
        };
        let mut b = simulate_base_path(&spec, &surface, &[0.0], &sch, 0).unwrap();
        estimate_eta(&mut b, &spec, &surface, LocalTimeMode::Bridge);
        // Physical horizon far beyond what the base layer can cover.
        apply_time_change(&mut b, &spec, &surface, 10.0, sch.band_eps).unwrap();
        assert!(b.truncated);
    }
}
