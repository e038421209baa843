//! Run configuration: one TOML file describing the surface, the
//! coefficients, the simulation scheme, the grids, and the verification
//! battery. Unknown keys are rejected and the structure round-trips through
//! serialization losslessly, so the manifest hash of the canonical TOML
//! covers every input that affects numerics.

use crate::coeffs::{DiffusionField, DiffusionSpec, SurfaceField};
use crate::error::MembraneError;
use crate::geometry::Surface;
use crate::sim::{LocalTimeMode, SimScheme, SkewMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceConfig {
    Point1d {
        location: f64,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
        quadrature_order: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub sigma2: f64,
    /// Constant skewness, or per-sector values on a sphere.
    pub q: f64,
    #[serde(default)]
    pub q_angular: Option<Vec<f64>>,
    /// Constant delay density.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub dt: f64,
    pub band_eps: f64,
    /// Operational-time horizon; must cover the largest physical checkpoint.
    pub horizon: f64,
    /// "crossing_resample" or "mollified_drift".
    pub skew_mode: String,
    #[serde(default)]
    pub eps_drift: Option<f64>,
    /// "bridge", "band", or "band_richardson".
    pub localtime: String,
    #[serde(default)]
    pub localtime_eps: Option<f64>,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsConfig {
    /// Interface finite-difference grid.
    pub dx: f64,
    pub dt: f64,
    pub half_width: f64,
    pub theta: f64,
    pub t_end: f64,
    /// Layer/resolvent time grid.
    pub potential_dtau: f64,
    pub potential_n: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationConfig {
    pub checkpoints: Vec<f64>,
    pub eps_schedule: Vec<f64>,
    pub theta_checkpoints: Vec<f64>,
    pub theta_step: f64,
    /// Time-bump support for boundary data and resolvent sources.
    pub bump_start: f64,
    pub bump_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    pub start: Vec<f64>,
    pub surface: SurfaceConfig,
    pub coefficients: CoefficientsConfig,
    pub scheme: SchemeConfig,
    pub grids: GridsConfig,
    pub verification: VerificationConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, MembraneError> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| MembraneError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, MembraneError> {
        toml::to_string_pretty(self).map_err(|e| MembraneError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, MembraneError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| MembraneError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn validate(&self) -> Result<(), MembraneError> {
        if self.coefficients.sigma2 <= 0.0 {
            return Err(MembraneError::Config("sigma2 must be positive".into()));
        }
        let qs: Vec<f64> = match &self.coefficients.q_angular {
            Some(v) if !v.is_empty() => v.clone(),
            Some(_) => return Err(MembraneError::Config("q_angular must be nonempty".into())),
            None => vec![self.coefficients.q],
        };
        if qs.iter().any(|q| q.abs() > 1.0) {
            return Err(MembraneError::Config("skewness must lie in [-1, 1]".into()));
        }
        if self.coefficients.r < 0.0 {
            return Err(MembraneError::Config("delay density must be >= 0".into()));
        }
        let dim = match &self.surface {
            SurfaceConfig::Point1d { .. } => 1,
            SurfaceConfig::Sphere { center, .. } => center.len(),
        };
        if self.start.len() != dim {
            return Err(MembraneError::Config(format!(
                "start point has dimension {}, surface has {}",
                self.start.len(),
                dim
            )));
        }
        self.sim_scheme()?.validate()?;
        Ok(())
    }

    pub fn surface(&self) -> Result<Surface, MembraneError> {
        match &self.surface {
            SurfaceConfig::Point1d { location } => Ok(Surface::point_1d(*location)),
            SurfaceConfig::Sphere {
                center,
                radius,
                quadrature_order,
            } => Surface::sphere(center.clone(), *radius, *quadrature_order),
        }
    }

    pub fn spec(&self) -> Result<DiffusionSpec, MembraneError> {
        let q = match &self.coefficients.q_angular {
            Some(values) => SurfaceField::Angular {
                values: values.clone(),
            },
            None => SurfaceField::constant(self.coefficients.q),
        };
        DiffusionSpec::new(
            DiffusionField::Scalar {
                sigma2: self.coefficients.sigma2,
            },
            self.coefficients.sigma2,
            self.coefficients.sigma2,
            0.0,
            1.0,
            q,
            SurfaceField::constant(self.coefficients.r),
        )
    }

    pub fn sim_scheme(&self) -> Result<SimScheme, MembraneError> {
        let skew_mode = match self.scheme.skew_mode.as_str() {
            "crossing_resample" => SkewMode::CrossingResample,
            "mollified_drift" => SkewMode::MollifiedDrift {
                eps_drift: self.scheme.eps_drift.ok_or_else(|| {
                    MembraneError::Config("mollified_drift requires eps_drift".into())
                })?,
            },
            other => {
                return Err(MembraneError::Config(format!("unknown skew mode '{other}'")))
            }
        };
        let eps = self.scheme.localtime_eps.unwrap_or(self.scheme.band_eps);
        let localtime = match self.scheme.localtime.as_str() {
            "bridge" => LocalTimeMode::Bridge,
            "band" => LocalTimeMode::Band { eps },
            "band_richardson" => LocalTimeMode::BandRichardson { eps },
            other => {
                return Err(MembraneError::Config(format!(
                    "unknown local-time mode '{other}'"
                )))
            }
        };
        Ok(SimScheme {
            dt: self.scheme.dt,
            skew_mode,
            band_eps: self.scheme.band_eps,
            localtime,
            horizon: self.scheme.horizon,
            master_seed: self.seed,
        })
    }
}
