//! Batch front door: load a TOML run configuration, apply flag overrides,
//! run one pipeline stage (or the whole cross-consistency suite), and write
//! CSV/JSON artifacts plus a manifest into the output directory.
//!
//! Exit codes: 0 on pass, 1 on a numeric failure or runtime error, 2 on
//! usage/configuration errors.

use clap::{Args, Parser, Subcommand};
use membrane::config::RunConfig;
use membrane::error::MembraneError;
use membrane::geometry::SurfaceKind;
use membrane::output::{self, ArtifactWriter};
use membrane::pde::{self, Grid1D};
use membrane::potential::{self, TimeGrid};
use membrane::sim;
use membrane::stats;
use membrane::verify;
use membrane::{DiffusionSpec, Surface, TestFunction, TimeBump};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "membrane", version, about = "Membrane diffusion toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the Monte Carlo path count.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the simulation time step.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the band half-width.
    #[arg(long)]
    eps: Option<f64>,
    /// Override the resolvent parameter.
    #[arg(long)]
    lambda: Option<f64>,
    /// Override the finite-difference space step.
    #[arg(long = "grid-dx")]
    grid_dx: Option<f64>,
    /// Override the finite-difference time step.
    #[arg(long = "grid-dt")]
    grid_dt: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo ensemble: terminal law and compensator summaries.
    Simulate(Common),
    /// Interface finite-difference solve of the semigroup.
    Pde(Common),
    /// Layer-potential machinery: transition-density profiles.
    Potential(Common),
    /// Damped kernel and resolvent residual check.
    Resolvent(Common),
    /// Statistical verification suite.
    Verify(Common),
    /// Every stage plus the cross-route consistency checks.
    All(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, stage) = match &cli.cmd {
        Cmd::Simulate(c) => (c, Stage::Simulate),
        Cmd::Pde(c) => (c, Stage::Pde),
        Cmd::Potential(c) => (c, Stage::Potential),
        Cmd::Resolvent(c) => (c, Stage::Resolvent),
        Cmd::Verify(c) => (c, Stage::Verify),
        Cmd::All(c) => (c, Stage::All),
    };
    match run(common, stage) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("numeric checks failed (see report artifacts)");
            ExitCode::from(1)
        }
        Err(MembraneError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Simulate,
    Pde,
    Potential,
    Resolvent,
    Verify,
    All,
}

fn load_config(common: &Common) -> Result<RunConfig, MembraneError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.display().to_string();
    }
    if let Some(paths) = common.paths {
        cfg.scheme.n_paths = paths;
    }
    if let Some(dt) = common.dt {
        cfg.scheme.dt = dt;
    }
    if let Some(eps) = common.eps {
        cfg.scheme.band_eps = eps;
    }
    if let Some(lambda) = common.lambda {
        cfg.grids.lambda = lambda;
    }
    if let Some(dx) = common.grid_dx {
        cfg.grids.dx = dx;
    }
    if let Some(dt) = common.grid_dt {
        cfg.grids.dt = dt;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(common: &Common, stage: Stage) -> Result<bool, MembraneError> {
    let cfg = load_config(common)?;
    let spec = cfg.spec()?;
    let surface = cfg.surface()?;
    let mut writer = ArtifactWriter::new(std::path::Path::new(&cfg.output_dir))?;
    let mut pass = true;
    let stages: &[Stage] = if stage == Stage::All {
        &[
            Stage::Simulate,
            Stage::Pde,
            Stage::Potential,
            Stage::Resolvent,
            Stage::Verify,
        ]
    } else {
        std::slice::from_ref(&stage)
    };
    for &s in stages {
        let skip_off_line = !matches!(surface.kind, SurfaceKind::Point1d { .. })
            && matches!(s, Stage::Resolvent);
        if skip_off_line && stage == Stage::All {
            continue;
        }
        pass &= match s {
            Stage::Simulate => stage_simulate(&cfg, &spec, &surface, &mut writer)?,
            Stage::Pde => stage_pde(&cfg, &spec, &surface, &mut writer)?,
            Stage::Potential => stage_potential(&cfg, &spec, &surface, &mut writer)?,
            Stage::Resolvent => stage_resolvent(&cfg, &spec, &surface, &mut writer)?,
            Stage::Verify => stage_verify(&cfg, &spec, &surface, &mut writer)?,
            Stage::All => unreachable!(),
        };
    }
    writer.finish(&cfg, pass)?;
    Ok(pass)
}

fn terminal_time(cfg: &RunConfig) -> f64 {
    cfg.grids.t_end.min(cfg.scheme.horizon)
}

fn stage_simulate(
    cfg: &RunConfig,
    spec: &DiffusionSpec,
    surface: &Surface,
    writer: &mut ArtifactWriter,
) -> Result<bool, MembraneError> {
    let scheme = cfg.sim_scheme()?;
    let t_end = terminal_time(cfg);
    let checkpoints: Vec<f64> = cfg
        .verification
        .checkpoints
        .iter()
        .copied()
        .filter(|&t| t <= t_end + 1e-12)
        .collect();
    let rows = sim::run_paths(
        spec,
        surface,
        &cfg.start,
        &scheme,
        t_end,
        cfg.scheme.n_paths,
        |_, b| {
            let mut row = vec![b.state(b.index_at(t_end))[0]];
            for &t in &checkpoints {
                row.push(b.gamma[b.index_at(t)]);
            }
            row
        },
    )?;
    let terminal: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let sigma = spec.b.entry(&cfg.start, 0, 0).sqrt();
    let (lo, hi) = (
        cfg.start[0] - 6.0 * sigma * t_end.sqrt(),
        cfg.start[0] + 6.0 * sigma * t_end.sqrt(),
    );
    let density = sim::empirical_density(&terminal, lo, hi, 80)?;
    output::write_density_csv(&writer.path("terminal_density.csv"), &density)?;
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut col = vec![0.0f64; rows.len()];
    for ci in 0..checkpoints.len() {
        for (pi, r) in rows.iter().enumerate() {
            col[pi] = r[ci + 1];
        }
        let (m, s) = stats::mean_se(&col);
        means.push(m);
        ses.push(s);
    }
    output::write_checkpoint_csv(
        &writer.path("gamma_checkpoints.csv"),
        "gamma",
        &checkpoints,
        &means,
        &ses,
    )?;
    // Sanity: the histogram plus its outside fraction carries full mass.
    Ok((density.total_mass() - 1.0).abs() < 1e-9)
}

/// Smooth initial function for the semigroup stage: a Gaussian bump in the
/// first coordinate, tabulated so one-sided membrane derivatives survive.
fn semigroup_phi(cfg: &RunConfig, surface: &Surface) -> TestFunction {
    let membrane = match surface.kind {
        SurfaceKind::Point1d { location } => location,
        SurfaceKind::Sphere { radius, .. } => radius,
        SurfaceKind::Hyperplane { .. } => 0.0,
    };
    let c = cfg.start[0];
    let w = cfg.grids.half_width;
    TestFunction::tabulated_1d(
        |y| (-(y - c) * (y - c)).exp(),
        membrane,
        membrane - w,
        membrane + w,
        (2.0 * w / cfg.grids.dx).round() as usize,
        None,
    )
}

fn pde_grid(cfg: &RunConfig, surface: &Surface) -> Result<Grid1D, MembraneError> {
    match surface.kind {
        SurfaceKind::Point1d { location } => Grid1D::line(
            location,
            cfg.grids.half_width,
            cfg.grids.dx,
            cfg.grids.dt,
            cfg.grids.theta,
            cfg.grids.t_end,
        ),
        SurfaceKind::Sphere { radius, .. } => Grid1D::radial(
            surface.dim,
            radius,
            radius + cfg.grids.half_width,
            cfg.grids.dx,
            cfg.grids.dt,
            cfg.grids.theta,
            cfg.grids.t_end,
        ),
        SurfaceKind::Hyperplane { .. } => Err(MembraneError::Unsupported(
            "hyperplane surfaces have no grid reduction".into(),
        )),
    }
}

fn stage_pde(
    cfg: &RunConfig,
    spec: &DiffusionSpec,
    surface: &Surface,
    writer: &mut ArtifactWriter,
) -> Result<bool, MembraneError> {
    let grid = pde_grid(cfg, surface)?;
    let phi = semigroup_phi(cfg, surface);
    let u = pde::solve_interface_heat(spec, surface, &phi, &grid)?;
    output::write_grid_csv(&writer.path("pde_final_slice.csv"), &u)?;
    Ok(true)
}

fn stage_potential(
    cfg: &RunConfig,
    spec: &DiffusionSpec,
    surface: &Surface,
    writer: &mut ArtifactWriter,
) -> Result<bool, MembraneError> {
    let t_end = cfg.grids.potential_dtau * cfg.grids.potential_n as f64;
    let grid = TimeGrid::new(cfg.grids.potential_dtau, cfg.grids.potential_n)?;
    let vt = potential::solve_vtilde(spec, surface, &cfg.start, &grid, false)?;
    match surface.kind {
        SurfaceKind::Point1d { .. } => {
            let sigma = spec.b.entry(&cfg.start, 0, 0).sqrt();
            let half_width = 6.0 * sigma * t_end.sqrt() + cfg.start[0].abs();
            let (ys, vals) =
                potential::density_profile_d1(spec, surface, &vt, t_end, 0.01, half_width)?;
            output::write_profile_csv(&writer.path("g0_profile.csv"), &ys, &vals)?;
            let mass: f64 = vals.iter().sum::<f64>() * 0.01;
            output::write_report_json(
                &writer.path("g0_mass.json"),
                &serde_json::json!({ "t": t_end, "mass": mass }),
            )?;
            Ok((mass - 1.0).abs() <= 5e-3)
        }
        _ => {
            // Surface values of the layer solution at the final grid time.
            let np = vt.points.len();
            let idx: Vec<f64> = (0..np).map(|i| i as f64).collect();
            let vals: Vec<f64> = (0..np).map(|i| vt.eval(t_end, i)).collect();
            output::write_profile_csv(&writer.path("vtilde_surface.csv"), &idx, &vals)?;
            Ok(vals.iter().all(|v| v.is_finite()))
        }
    }
}

fn stage_resolvent(
    cfg: &RunConfig,
    spec: &DiffusionSpec,
    surface: &Surface,
    writer: &mut ArtifactWriter,
) -> Result<bool, MembraneError> {
    let loc = match surface.kind {
        SurfaceKind::Point1d { location } => location,
        _ => {
            return Err(MembraneError::Unsupported(
                "resolvent stage runs on line geometry".into(),
            ))
        }
    };
    let grid = TimeGrid::new(cfg.grids.potential_dtau, cfg.grids.potential_n)?;
    let psi = TimeBump::new(cfg.verification.bump_start, cfg.verification.bump_end);
    let xs = potential::fringe_xs(loc, 0.01);
    let vtab = potential::solve_v_lambda(spec, surface, cfg.grids.lambda, &psi, &grid, &xs)?;
    let report = potential::check_resolvent(spec, surface, &psi, &vtab)?;
    output::write_report_json(&writer.path("resolvent_report.json"), &report)?;
    output::write_checkpoint_csv(
        &writer.path("resolvent_residuals.csv"),
        "residual",
        &report.times,
        &report.residuals,
        &vec![0.0; report.times.len()],
    )?;
    Ok(report.sup_residual <= 5e-3)
}

fn stage_verify(
    cfg: &RunConfig,
    spec: &DiffusionSpec,
    surface: &Surface,
    writer: &mut ArtifactWriter,
) -> Result<bool, MembraneError> {
    let scheme = cfg.sim_scheme()?;
    let dim = surface.dim;
    let checkpoints: Vec<f64> = cfg
        .verification
        .checkpoints
        .iter()
        .copied()
        .filter(|&t| t <= scheme.horizon + 1e-12)
        .collect();
    let battery = [
        ("coordinate", TestFunction::coordinate(0, dim)),
        ("coordinate_squared", TestFunction::coordinate_squared(0, dim)),
        ("capped_distance", TestFunction::CappedDistance { m: 5 }),
    ];
    let family = battery.len() * checkpoints.len();
    let mut pass = true;
    for (id, f) in &battery {
        let report = verify::check_martingale(
            f,
            id,
            spec,
            surface,
            &cfg.start,
            &scheme,
            &checkpoints,
            cfg.scheme.n_paths,
            family,
        )?;
        pass &= report.pass;
        output::write_report_json(&writer.path(&format!("martingale_{id}.json")), &report)?;
    }
    let occupation = verify::check_occupation_identity(
        spec,
        surface,
        &cfg.start,
        &scheme,
        &checkpoints,
        &cfg.verification.eps_schedule,
        cfg.scheme.n_paths,
    )?;
    pass &= occupation.rel_discrepancy <= 0.05;
    output::write_report_json(&writer.path("occupation_identity.json"), &occupation)?;

    if matches!(surface.kind, SurfaceKind::Point1d { .. }) {
        let grid = pde_grid(cfg, surface)?;
        let cross = verify::check_uniqueness_consistency(
            spec,
            surface,
            &cfg.start,
            &scheme,
            &grid,
            &[(
                "coordinate_squared".to_string(),
                TestFunction::coordinate_squared(0, dim),
            )],
            &checkpoints,
            cfg.scheme.n_paths,
            1e-2,
        )?;
        pass &= cross.pass;
        output::write_report_json(&writer.path("cross_route.json"), &cross)?;
    }
    Ok(pass)
}
