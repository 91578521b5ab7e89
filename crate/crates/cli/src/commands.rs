//! Subcommand bodies. Each computes everything first, then writes its files.

use std::fs;
use std::io::Write;
use std::path::Path;

use qjump_core::analytic::{laser_alpha, laser_emission_rate};
use qjump_core::ensemble::{
    beta_sweep, chi_map, ergodicity_report, phase_sweep, run_ensemble, uniform_grid, EnsembleOptions,
};
use qjump_core::fock::{integrate, truncation_rule, TruncatedDensityMatrix};
use qjump_core::output::{self, SeriesBlock};
use qjump_core::picture::{to_schrodinger, CoherentAmplitude};
use qjump_core::trajectory::simulate;
use qjump_core::{DriveMode, RandomStream};
use serde_json::json;

use crate::config::{RunConfig, Subcommand};
use crate::Failure;

/// Largest allowed `|Δ⟨n⟩|` is `SIGMA_MULTIPLIER·stderr + ABSOLUTE_ALLOWANCE`.
pub const SIGMA_MULTIPLIER: f64 = 3.0;
pub const ABSOLUTE_ALLOWANCE: f64 = 1e-6;
/// Trajectories in the pilot ensemble that sizes the Fock basis in feedback mode.
pub const PILOT_TRAJECTORIES: u64 = 1_000;

pub fn execute(cmd: Subcommand, cfg: &RunConfig) -> Result<(), Failure> {
    match cmd {
        Subcommand::LaserRun => laser_run(cfg),
        Subcommand::FeedbackRun => feedback_run(cfg),
        Subcommand::ChiMap => chi_map_run(cfg),
        Subcommand::OracleCheck => oracle_check(cfg),
        Subcommand::Ergodicity => ergodicity(cfg),
    }
}

fn require_mode(cfg: &RunConfig, mode: DriveMode, cmd: Subcommand) -> Result<(), Failure> {
    if cfg.mode == mode {
        Ok(())
    } else {
        let want = serde_json::to_value(mode).expect("mode serialises");
        Err(Failure::Validation(format!("{} requires mode = {want}", cmd.name())))
    }
}

fn options(cfg: &RunConfig) -> EnsembleOptions {
    EnsembleOptions::new(cfg.sim_options())
}

fn prepare_dir(cfg: &RunConfig) -> Result<&Path, Failure> {
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let text = serde_json::to_string_pretty(cfg).expect("config serialises");
    write_text(&dir.join("config.json"), &text)?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    output::write_file(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })?;
    Ok(())
}

fn laser_run(cfg: &RunConfig) -> Result<(), Failure> {
    require_mode(cfg, DriveMode::LaserDriven, Subcommand::LaserRun)?;
    let p = cfg.params();
    let a0 = cfg.alpha0.0;
    let grid = cfg.grid();
    let series = run_ensemble(a0, &p, cfg.trajectories, cfg.horizon, &grid, cfg.base_seed, &options(cfg))?;
    let analytic: Vec<f64> = grid.iter().map(|&t| laser_emission_rate(t, a0, &p)).collect();

    let spiral_t = uniform_grid(cfg.horizon, cfg.spiral_points);
    let spiral = spiral_t
        .iter()
        .map(|&t| to_schrodinger(CoherentAmplitude::interaction(laser_alpha(t, a0, &p)), t, &p))
        .collect::<Result<Vec<_>, _>>()?;

    let dir = prepare_dir(cfg)?;
    output::write_file(&dir.join("spiral.csv"), |w| output::write_spiral(w, &spiral_t, &spiral))?;
    output::write_file(&dir.join("emission_rate.csv"), |w| {
        output::write_emission_rate(w, &grid, &analytic, &series.counted_rate, &series.counted_stderr)
    })?;
    Ok(())
}

fn feedback_run(cfg: &RunConfig) -> Result<(), Failure> {
    require_mode(cfg, DriveMode::Feedback, Subcommand::FeedbackRun)?;
    let p = cfg.params();
    let a0 = cfg.alpha0.0;
    let grid = cfg.grid();
    let opts = options(cfg);
    let shown = (0..cfg.displayed_trajectories as u64)
        .map(|i| simulate(a0, cfg.horizon, &p, RandomStream::new(cfg.base_seed, i), &grid, &opts.sim))
        .collect::<Result<Vec<_>, _>>()?;
    let series = run_ensemble(a0, &p, cfg.trajectories, cfg.horizon, &grid, cfg.base_seed, &opts)?;
    let betas: Option<Vec<_>> = cfg.beta_list.as_ref().map(|b| b.iter().map(|c| c.0).collect());
    let beta_series = match &betas {
        Some(b) => Some(beta_sweep(a0, b, &p, cfg.trajectories, cfg.horizon, &grid, cfg.base_seed, &opts)?),
        None => None,
    };
    let phase_series = match &cfg.phase_list {
        Some(phases) => Some(phase_sweep(
            a0.norm(),
            phases,
            &p,
            cfg.trajectories,
            cfg.horizon,
            &grid,
            cfg.base_seed,
            &opts,
        )?),
        None => None,
    };

    let dir = prepare_dir(cfg)?;
    output::write_file(&dir.join("trajectories.csv"), |w| output::write_trajectories(w, &shown))?;
    output::write_file(&dir.join("events.csv"), |w| output::write_events(w, &shown))?;
    output::write_file(&dir.join("magnitudes.csv"), |w| output::write_magnitudes(w, &grid, &shown))?;
    output::write_file(&dir.join("ensemble.csv"), |w| {
        output::write_series(w, &[SeriesBlock::trajectory("trajectory", &series)])
    })?;
    if let (Some(b), Some(s)) = (&betas, &beta_series) {
        output::write_file(&dir.join("beta_sweep.csv"), |w| output::write_beta_sweep(w, b, s))?;
    }
    if let (Some(phases), Some(s)) = (&cfg.phase_list, &phase_series) {
        output::write_file(&dir.join("phase_sweep.csv"), |w| output::write_phase_sweep(w, phases, s))?;
    }
    Ok(())
}

fn chi_map_run(cfg: &RunConfig) -> Result<(), Failure> {
    require_mode(cfg, DriveMode::Feedback, Subcommand::ChiMap)?;
    let map = chi_map(
        &cfg.chi_grid,
        &cfg.params(),
        cfg.chi_trajectories_per_cell,
        cfg.horizon,
        cfg.vacuum_radius,
        cfg.base_seed,
        &options(cfg),
    )?;
    let dir = prepare_dir(cfg)?;
    output::write_file(&dir.join("chi.csv"), |w| output::write_chi(w, &map))?;
    Ok(())
}

/// Truncation level for the oracle: the configured value, or the rule applied
/// to the peak mean photon number (analytic for the laser, a pilot ensemble
/// for feedback).
pub fn oracle_truncation(cfg: &RunConfig) -> Result<usize, Failure> {
    if let Some(n) = cfg.truncation {
        return Ok(n);
    }
    let p = cfg.params();
    let a0 = cfg.alpha0.0;
    let mu = match cfg.mode {
        DriveMode::LaserDriven => uniform_grid(cfg.horizon, 1001)
            .iter()
            .map(|&t| laser_alpha(t, a0, &p).norm_sqr())
            .fold(0.0, f64::max),
        DriveMode::Feedback => {
            let pilot = run_ensemble(
                a0,
                &p,
                PILOT_TRAJECTORIES.min(cfg.trajectories),
                cfg.horizon,
                &cfg.grid(),
                cfg.base_seed,
                &options(cfg),
            )?;
            if pilot.any_frozen() {
                let n = pilot.frozen.last().copied().unwrap_or(0);
                return Err(Failure::Runtime(format!(
                    "divergence-policy conflict: {n} pilot trajectories reached the divergence cap, so no finite truncation bounds ⟨n⟩; set `truncation` explicitly to force a run"
                )));
            }
            pilot.mean_n.iter().copied().fold(0.0, f64::max)
        }
    };
    let coherent_floor = (2.0 * a0.norm_sqr()).ceil() as usize;
    let displacement_floor = match cfg.mode {
        DriveMode::Feedback => (4.0 * cfg.beta.0.norm_sqr()).ceil() as usize,
        DriveMode::LaserDriven => 0,
    };
    Ok(truncation_rule(mu).max(coherent_floor).max(displacement_floor))
}

fn oracle_check(cfg: &RunConfig) -> Result<(), Failure> {
    let p = cfg.params();
    let a0 = cfg.alpha0.0;
    let grid = cfg.grid();
    let level = oracle_truncation(cfg)?;
    let rho0 = TruncatedDensityMatrix::coherent(a0, level)?;
    let oracle = integrate(&rho0, &p, &grid, cfg.oracle_dt)?;
    let series = run_ensemble(a0, &p, cfg.trajectories, cfg.horizon, &grid, cfg.base_seed, &options(cfg))?;

    let mut max_abs = 0.0f64;
    let mut max_sigma: Option<f64> = None;
    let mut worst_margin = f64::INFINITY;
    let mut worst_time = grid[0];
    for i in 0..grid.len() {
        let d = (series.mean_n[i] - oracle.mean_n[i]).abs();
        let se = series.mean_n_stderr(i);
        max_abs = max_abs.max(d);
        if se > 0.0 {
            max_sigma = Some(max_sigma.unwrap_or(0.0).max(d / se));
        }
        let margin = SIGMA_MULTIPLIER * se + ABSOLUTE_ALLOWANCE - d;
        if margin < worst_margin {
            worst_margin = margin;
            worst_time = grid[i];
        }
    }
    let frozen = series.frozen.iter().filter(|&&f| f > 0).count();
    let pass = worst_margin >= 0.0 && frozen == 0;
    let summary = json!({
        "pass": pass,
        "truncation": level,
        "trajectories": cfg.trajectories,
        "max_abs_deviation": max_abs,
        "max_deviation_sigma": max_sigma,
        "worst_margin": worst_margin,
        "worst_time": worst_time,
        "sigma_multiplier": SIGMA_MULTIPLIER,
        "absolute_allowance": ABSOLUTE_ALLOWANCE,
        "trace_drift": oracle.trace_drift(),
        "frozen_points": frozen,
    });

    let dir = prepare_dir(cfg)?;
    output::write_file(&dir.join("series.csv"), |w| {
        output::write_series(w, &[SeriesBlock::trajectory("trajectory", &series), SeriesBlock::oracle(&oracle)])
    })?;
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary).expect("summary"))?;
    if pass {
        Ok(())
    } else {
        Err(Failure::CheckFailed(format!(
            "trajectory and oracle ⟨n⟩ differ beyond {SIGMA_MULTIPLIER}σ + {ABSOLUTE_ALLOWANCE:e} (worst margin {worst_margin:.3e} at t = {worst_time}, {frozen} frozen points)"
        )))
    }
}

fn ergodicity(cfg: &RunConfig) -> Result<(), Failure> {
    let report = ergodicity_report(
        cfg.alpha0.0,
        &cfg.params(),
        cfg.trajectories,
        cfg.horizon,
        &cfg.grid(),
        cfg.base_seed,
        cfg.ergodicity_tolerance,
        &options(cfg),
    )?;
    let summary = json!({
        "ensemble_average": report.ensemble_average,
        "ensemble_stderr": report.ensemble_stderr,
        "dispersion": report.dispersion,
        "max_relative_deviation": report.max_relative_deviation,
        "tolerance": report.tolerance,
        "verdict": report.verdict,
        "trajectories": report.time_averages.len(),
    });
    let dir = prepare_dir(cfg)?;
    output::write_file(&dir.join("time_averages.csv"), |w| output::write_time_averages(w, &report))?;
    write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary).expect("summary"))?;
    Ok(())
}
