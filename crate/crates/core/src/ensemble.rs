//! Ensemble statistics over independent trajectories.
//!
//! Trajectory `i` of a run always uses `RandomStream::new(base_seed, i)`.
//! Per-trajectory records are folded into [`Moments`] in index order inside
//! fixed blocks of [`BLOCK_SIZE`] trajectories, and the block accumulators
//! are merged with a fixed binary tree. The result is therefore bit-identical
//! for any thread count and for both the in-memory and the streaming path.
//!
//! Trajectories halted at the divergence cap keep contributing the cap value
//! `|α|² = cap` at later grid points; those points count as frozen.

use serde::{Deserialize, Serialize};

use crate::analytic::mean_photon_drift;
use crate::exec::Execution;
use crate::stats::{tree_merge_vec, Moments};
use crate::trajectory::{
    classify, first_emission, simulate, validate_grid, Classification, SimOptions, Trajectory,
};
use crate::{CavityParams, Error, RandomStream, Result, C64};

pub const BLOCK_SIZE: usize = 256;
/// Default vacuum criterion: `|α| < 0.1` at `t = 10/κ`.
pub const DEFAULT_VACUUM_RADIUS: f64 = 0.1;
pub const DEFAULT_MEMORY_BUDGET: usize = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub sim: SimOptions,
    pub execution: Execution,
    /// Above this many bytes of per-trajectory records the reduction streams
    /// block by block instead of materialising every record.
    pub memory_budget_bytes: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        Self {
            sim: SimOptions::default(),
            execution: Execution::Parallel,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl EnsembleOptions {
    pub fn new(sim: SimOptions) -> Self {
        Self {
            sim,
            ..Self::default()
        }
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_memory_budget(mut self, bytes: usize) -> Self {
        self.memory_budget_bytes = bytes;
        self
    }
}

/// `n` grid points evenly spaced over `[0, horizon]`, endpoints included.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![horizon],
        _ => (0..n).map(|i| i as f64 * horizon / (n - 1) as f64).collect(),
    }
}

/// Counting windows around grid points: midpoints between neighbours,
/// clipped to `[0, horizon]`.
pub fn rate_bins(grid: &[f64], horizon: f64) -> Vec<(f64, f64)> {
    match grid.len() {
        0 => Vec::new(),
        1 => vec![(0.0, horizon)],
        n => (0..n)
            .map(|i| {
                let lo = if i == 0 {
                    (grid[0] - 0.5 * (grid[1] - grid[0])).max(0.0)
                } else {
                    0.5 * (grid[i - 1] + grid[i])
                };
                let hi = if i == n - 1 {
                    (grid[n - 1] + 0.5 * (grid[n - 1] - grid[n - 2])).min(horizon)
                } else {
                    0.5 * (grid[i] + grid[i + 1])
                };
                (lo, hi)
            })
            .collect(),
    }
}

/// Ensemble averages on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    /// Mean photon number `⟨c†c⟩ = E|α|²`.
    pub mean_n: Vec<f64>,
    /// `I(t) = κ·mean_n`.
    pub emission_rate: Vec<f64>,
    /// Standard error of `emission_rate`.
    pub stderr: Vec<f64>,
    /// Emission rate estimated by counting emissions inside `bins`.
    pub counted_rate: Vec<f64>,
    pub counted_stderr: Vec<f64>,
    pub bins: Vec<(f64, f64)>,
    /// Number of trajectories frozen at the divergence cap at each point.
    pub frozen: Vec<u64>,
    pub n_trajectories: u64,
    pub kappa: f64,
}

impl EnsembleSeries {
    pub fn mean_n_stderr(&self, i: usize) -> f64 {
        self.stderr[i] / self.kappa
    }

    pub fn any_frozen(&self) -> bool {
        self.frozen.iter().any(|&f| f > 0)
    }
}

/// Folds per-index records into one accumulator per record component.
pub(crate) fn reduce_records<F>(n: u64, dims: usize, opts: &EnsembleOptions, record: F) -> Result<Vec<Moments>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync + Send,
{
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one trajectory".into()));
    }
    let n_blocks = (n as usize).div_ceil(BLOCK_SIZE);
    let block_range = |b: usize| {
        let lo = (b * BLOCK_SIZE) as u64;
        lo..(lo + BLOCK_SIZE as u64).min(n)
    };
    let fold = |acc: &mut Vec<Moments>, rec: &[f64]| {
        for (m, &x) in acc.iter_mut().zip(rec) {
            m.push(x);
        }
    };

    let fits = (n as u128) * (dims as u128) * 8 <= opts.memory_budget_bytes as u128;
    let blocks: Vec<Vec<Moments>> = if fits {
        let records = opts
            .execution
            .map_indexed(n as usize, |i| record(i as u64))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        (0..n_blocks)
            .map(|b| {
                let mut acc = vec![Moments::default(); dims];
                for i in block_range(b) {
                    fold(&mut acc, &records[i as usize]);
                }
                acc
            })
            .collect()
    } else {
        opts.execution
            .map_indexed(n_blocks, |b| {
                let mut acc = vec![Moments::default(); dims];
                for i in block_range(b) {
                    fold(&mut acc, &record(i)?);
                }
                Ok(acc)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?
    };
    Ok(tree_merge_vec(&blocks))
}

/// Sequential block fold plus tree merge of a scalar sequence, matching the
/// topology of [`reduce_records`].
pub fn ordered_moments(values: &[f64]) -> Moments {
    let blocks: Vec<Vec<Moments>> = values
        .chunks(BLOCK_SIZE)
        .map(|c| vec![c.iter().copied().collect()])
        .collect();
    tree_merge_vec(&blocks).first().copied().unwrap_or_default()
}

/// `|α|²` on the grid, with points after a divergence halt set to the cap.
pub fn photon_numbers(traj: &Trajectory, grid_len: usize) -> (Vec<f64>, usize) {
    let mut n: Vec<f64> = traj.alphas.iter().map(|a| a.norm_sqr()).collect();
    let reached = n.len();
    n.resize(grid_len, traj.divergence_cap);
    (n, grid_len - reached)
}

fn bin_counts(traj: &Trajectory, bins: &[(f64, f64)]) -> Vec<f64> {
    let mut counts = vec![0.0; bins.len()];
    let (first, last) = match (bins.first(), bins.last()) {
        (Some(f), Some(l)) => (f.0, l.1),
        _ => return counts,
    };
    for e in &traj.events {
        if e.time < first || e.time > last {
            continue;
        }
        let j = bins.partition_point(|b| b.1 <= e.time).min(bins.len() - 1);
        counts[j] += 1.0;
    }
    counts
}

/// Runs `n` trajectories from `alpha0`; trajectory `i` uses stream `i`.
pub fn run_ensemble(
    alpha0: C64,
    params: &CavityParams,
    n: u64,
    horizon: f64,
    grid: &[f64],
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<EnsembleSeries> {
    params.validate()?;
    validate_grid(grid, horizon)?;
    let g = grid.len();
    let bins = rate_bins(grid, horizon);
    let widths: Vec<f64> = bins.iter().map(|b| b.1 - b.0).collect();

    let moments = reduce_records(n, 3 * g, opts, |i| {
        let traj = simulate(alpha0, horizon, params, RandomStream::new(base_seed, i), grid, &opts.sim)?;
        let (mut rec, _) = photon_numbers(&traj, g);
        let reached = traj.alphas.len();
        rec.extend((0..g).map(|j| if j >= reached { 1.0 } else { 0.0 }));
        rec.extend(bin_counts(&traj, &bins).iter().zip(&widths).map(|(c, w)| if *w > 0.0 { c / w } else { 0.0 }));
        Ok(rec)
    })?;

    let k = params.kappa;
    let (photon, rest) = moments.split_at(g);
    let (frozen, counted) = rest.split_at(g);
    Ok(EnsembleSeries {
        times: grid.to_vec(),
        mean_n: photon.iter().map(|m| m.mean).collect(),
        emission_rate: photon.iter().map(|m| k * m.mean).collect(),
        stderr: photon.iter().map(|m| k * m.stderr()).collect(),
        counted_rate: counted.iter().map(|m| m.mean).collect(),
        counted_stderr: counted.iter().map(|m| m.stderr()).collect(),
        bins,
        frozen: frozen.iter().map(|m| (m.mean * m.count as f64).round() as u64).collect(),
        n_trajectories: n,
        kappa: k,
    })
}

/// Interaction-picture amplitudes of `n` trajectories at `time`, with equal
/// weights. Uses the same streams as [`run_ensemble`] with the same seed.
pub fn snapshot(
    alpha0: C64,
    params: &CavityParams,
    n: u64,
    time: f64,
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<Vec<(C64, f64)>> {
    let w = 1.0 / n as f64;
    if time == 0.0 {
        params.validate()?;
        return Ok(vec![(alpha0, w); n as usize]);
    }
    opts.execution
        .map_indexed(n as usize, |i| {
            let traj =
                simulate(alpha0, time, params, RandomStream::new(base_seed, i as u64), &[time], &opts.sim)?;
            Ok((traj.final_alpha, w))
        })
        .into_iter()
        .collect()
}

/// First emission time of each of `n` trajectories; `None` when none occurs
/// before `horizon`.
pub fn first_emission_times(
    alpha0: C64,
    params: &CavityParams,
    n: u64,
    horizon: f64,
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<Vec<Option<f64>>> {
    opts.execution
        .map_indexed(n as usize, |i| {
            first_emission(alpha0, horizon, params, RandomStream::new(base_seed, i as u64), &opts.sim)
        })
        .into_iter()
        .collect()
}

/// Rectangular lattice of initial amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub spacing: f64,
}

impl Default for ChiGrid {
    fn default() -> Self {
        Self {
            re_min: -3.0,
            re_max: 3.0,
            im_min: -3.0,
            im_max: 3.0,
            spacing: 0.1,
        }
    }
}

impl ChiGrid {
    fn axis(lo: f64, hi: f64, h: f64) -> Vec<f64> {
        let n = ((hi - lo) / h + 1e-9).floor() as usize + 1;
        (0..n).map(|i| lo + i as f64 * h).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max, self.spacing]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.spacing > 0.0) || self.re_max < self.re_min || self.im_max < self.im_min {
            return Err(Error::InvalidArgument(format!("bad chi grid {self:?}")));
        }
        Ok(())
    }

    /// Cell centres, real part varying fastest.
    pub fn points(&self) -> Vec<C64> {
        let re = Self::axis(self.re_min, self.re_max, self.spacing);
        let im = Self::axis(self.im_min, self.im_max, self.spacing);
        im.iter()
            .flat_map(|&y| re.iter().map(move |&x| C64::new(x, y)))
            .collect()
    }

    pub fn shape(&self) -> (usize, usize) {
        (
            Self::axis(self.re_min, self.re_max, self.spacing).len(),
            Self::axis(self.im_min, self.im_max, self.spacing).len(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiCell {
    pub alpha0: C64,
    /// Fraction of trajectories classified as vacuum at the horizon.
    pub chi: f64,
    pub chi_stderr: f64,
    pub count: u64,
    pub diverging_fraction: f64,
    /// Neither vacuum nor diverging at the horizon; counted as not vacuum.
    pub undecided_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiMap {
    pub n_re: usize,
    pub n_im: usize,
    pub cells: Vec<ChiCell>,
}

fn chi_cell(
    cell_index: u64,
    alpha0: C64,
    params: &CavityParams,
    n: u64,
    horizon: f64,
    vacuum_radius: f64,
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<ChiCell> {
    let offset = cell_index * n;
    let m = reduce_records(n, 3, opts, |i| {
        let stream = RandomStream::new(base_seed, offset + i);
        let traj = simulate(alpha0, horizon, params, stream, &[horizon], &opts.sim)?;
        let class = classify(&traj, vacuum_radius, horizon);
        let flag = |c| if class == c { 1.0 } else { 0.0 };
        Ok(vec![
            flag(Classification::Vacuum),
            flag(Classification::Diverging),
            flag(Classification::Undecided),
        ])
    })?;
    Ok(ChiCell {
        alpha0,
        chi: m[0].mean,
        chi_stderr: m[0].stderr(),
        count: n,
        diverging_fraction: m[1].mean,
        undecided_fraction: m[2].mean,
    })
}

/// χ for an arbitrary list of initial amplitudes. Cell `c` uses streams
/// `c·n_per_cell .. (c+1)·n_per_cell`.
pub fn chi_probe(
    points: &[C64],
    params: &CavityParams,
    n_per_cell: u64,
    horizon: f64,
    vacuum_radius: f64,
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<Vec<ChiCell>> {
    params.validate()?;
    params.require_feedback()?;
    if !(vacuum_radius > 0.0) {
        return Err(Error::InvalidArgument(format!("vacuum radius must be > 0, got {vacuum_radius}")));
    }
    points
        .iter()
        .enumerate()
        .map(|(c, &a)| chi_cell(c as u64, a, params, n_per_cell, horizon, vacuum_radius, base_seed, opts))
        .collect()
}

/// Probability of reaching the vacuum as a function of the initial amplitude.
pub fn chi_map(
    grid: &ChiGrid,
    params: &CavityParams,
    n_per_cell: u64,
    horizon: f64,
    vacuum_radius: f64,
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<ChiMap> {
    grid.validate()?;
    let (n_re, n_im) = grid.shape();
    let cells = chi_probe(&grid.points(), params, n_per_cell, horizon, vacuum_radius, base_seed, opts)?;
    Ok(ChiMap { n_re, n_im, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Ergodic,
    NonErgodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std_dev: f64,
    /// `(max − min) / |mean|`, zero when all time averages coincide.
    pub relative_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    /// Ensemble mean of `|α|²` at the horizon.
    pub ensemble_average: f64,
    pub ensemble_stderr: f64,
    /// Per-trajectory time averages of `|α|²` over the grid.
    pub time_averages: Vec<f64>,
    pub dispersion: Dispersion,
    /// Largest `|time average − ensemble average| / ensemble average`.
    pub max_relative_deviation: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl ErgodicityReport {
    pub fn fraction_below(&self, x: f64) -> f64 {
        self.time_averages.iter().filter(|&&v| v < x).count() as f64 / self.time_averages.len() as f64
    }

    pub fn fraction_above(&self, x: f64) -> f64 {
        self.time_averages.iter().filter(|&&v| v > x).count() as f64 / self.time_averages.len() as f64
    }
}

/// Trapezoidal `(1/T)∫ y dt` over the grid span.
pub fn time_average(times: &[f64], values: &[f64]) -> f64 {
    let span = times[times.len() - 1] - times[0];
    if span <= 0.0 {
        return values[0];
    }
    let area: f64 = times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    area / span
}

/// Compares per-trajectory time averages of the photon number with the
/// ensemble average at the horizon. The verdict is ergodic when the time
/// averages agree to within `tolerance` relative spread.
#[allow(clippy::too_many_arguments)]
pub fn ergodicity_report(
    alpha0: C64,
    params: &CavityParams,
    n: u64,
    horizon: f64,
    grid: &[f64],
    base_seed: u64,
    tolerance: f64,
    opts: &EnsembleOptions,
) -> Result<ErgodicityReport> {
    params.validate()?;
    validate_grid(grid, horizon)?;
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one trajectory".into()));
    }
    let g = grid.len();
    let pairs = opts
        .execution
        .map_indexed(n as usize, |i| {
            let traj = simulate(alpha0, horizon, params, RandomStream::new(base_seed, i as u64), grid, &opts.sim)?;
            let (photon, _) = photon_numbers(&traj, g);
            let last = if traj.end_time() < horizon {
                traj.divergence_cap
            } else {
                traj.final_alpha.norm_sqr()
            };
            Ok((time_average(grid, &photon), last))
        })
        .into_iter()
        .collect::<Result<Vec<(f64, f64)>>>()?;

    let time_averages: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let finals: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ens = ordered_moments(&finals);
    let ta = ordered_moments(&time_averages);
    let min = time_averages.iter().copied().fold(f64::INFINITY, f64::min);
    let max = time_averages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let relative_spread = if max == min { 0.0 } else { (max - min) / ta.mean.abs() };
    let max_relative_deviation = if ens.mean == 0.0 {
        if max == 0.0 && min == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        time_averages
            .iter()
            .map(|v| ((v - ens.mean) / ens.mean).abs())
            .fold(0.0, f64::max)
    };

    Ok(ErgodicityReport {
        ensemble_average: ens.mean,
        ensemble_stderr: ens.stderr(),
        dispersion: Dispersion {
            min,
            max,
            mean: ta.mean,
            std_dev: ta.std_dev(),
            relative_spread,
        },
        time_averages,
        max_relative_deviation,
        tolerance,
        verdict: if relative_spread <= tolerance {
            Verdict::Ergodic
        } else {
            Verdict::NonErgodic
        },
    })
}

/// One ensemble per initial phase, `α0 = |α0| e^{iφ}`, all with the same seed.
#[allow(clippy::too_many_arguments)]
pub fn phase_sweep(
    magnitude: f64,
    phases: &[f64],
    params: &CavityParams,
    n: u64,
    horizon: f64,
    grid: &[f64],
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<Vec<EnsembleSeries>> {
    params.require_feedback()?;
    phases
        .iter()
        .map(|&phi| {
            let phi = phi.rem_euclid(std::f64::consts::TAU);
            run_ensemble(C64::from_polar(magnitude, phi), params, n, horizon, grid, base_seed, opts)
        })
        .collect()
}

/// One ensemble per feedback displacement, all with the same seed.
#[allow(clippy::too_many_arguments)]
pub fn beta_sweep(
    alpha0: C64,
    betas: &[C64],
    params: &CavityParams,
    n: u64,
    horizon: f64,
    grid: &[f64],
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<Vec<EnsembleSeries>> {
    params.require_feedback()?;
    betas
        .iter()
        .map(|&beta| {
            let p = CavityParams { beta, ..*params };
            run_ensemble(alpha0, &p, n, horizon, grid, base_seed, opts)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

impl SlopeEstimate {
    pub fn z_score(&self) -> f64 {
        if self.stderr > 0.0 {
            self.slope / self.stderr
        } else if self.slope == 0.0 {
            0.0
        } else {
            self.slope.signum() * f64::INFINITY
        }
    }
}

/// Least-squares slope of `I(t)` over grid points inside `window`.
///
/// The fit is linear in the data, so the ensemble slope is the mean of
/// per-trajectory slopes; its standard error comes from their spread and
/// accounts for the correlation between grid points.
#[allow(clippy::too_many_arguments)]
pub fn rate_slope(
    alpha0: C64,
    params: &CavityParams,
    n: u64,
    horizon: f64,
    grid: &[f64],
    window: (f64, f64),
    base_seed: u64,
    opts: &EnsembleOptions,
) -> Result<SlopeEstimate> {
    params.validate()?;
    validate_grid(grid, horizon)?;
    let idx: Vec<usize> = (0..grid.len())
        .filter(|&i| grid[i] >= window.0 && grid[i] <= window.1)
        .collect();
    if idx.len() < 2 {
        return Err(Error::InvalidGrid(format!("fewer than two grid points in {window:?}")));
    }
    let tbar = idx.iter().map(|&i| grid[i]).sum::<f64>() / idx.len() as f64;
    let sxx: f64 = idx.iter().map(|&i| (grid[i] - tbar).powi(2)).sum();
    let weights: Vec<f64> = idx.iter().map(|&i| (grid[i] - tbar) / sxx).collect();
    let k = params.kappa;
    let m = reduce_records(n, 1, opts, |i| {
        let traj = simulate(alpha0, horizon, params, RandomStream::new(base_seed, i), grid, &opts.sim)?;
        let (photon, _) = photon_numbers(&traj, grid.len());
        Ok(vec![idx.iter().zip(&weights).map(|(&j, w)| w * k * photon[j]).sum()])
    })?;
    Ok(SlopeEstimate {
        slope: m[0].mean,
        stderr: m[0].stderr(),
        points: idx.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub time: f64,
    /// Finite-difference `dI/dt` from the series.
    pub finite_difference: f64,
    pub finite_difference_stderr: f64,
    /// `dI/dt` from the drift integral over the snapshot.
    pub drift: f64,
    pub drift_stderr: f64,
    /// `(finite_difference − drift) / combined stderr`.
    pub residual_sigma: f64,
}

/// Checks the finite-difference slope of `I(t)` at grid point `index`
/// against the drift integral evaluated on a snapshot taken at that time.
pub fn drift_check(
    series: &EnsembleSeries,
    index: usize,
    snapshot: &[(C64, f64)],
    params: &CavityParams,
) -> Result<DriftReport> {
    let g = series.times.len();
    if g < 2 || index >= g {
        return Err(Error::InvalidArgument(format!("index {index} outside a series of {g} points")));
    }
    let (a, b) = match index {
        0 => (0, 1),
        i if i == g - 1 => (g - 2, g - 1),
        i => (i - 1, i + 1),
    };
    let dt = series.times[b] - series.times[a];
    let fd = (series.emission_rate[b] - series.emission_rate[a]) / dt;
    let fd_se = series.stderr[a].hypot(series.stderr[b]) / dt;

    let drift = mean_photon_drift(snapshot, params);
    let sum_w: f64 = snapshot.iter().map(|s| s.1).sum();
    let sum_w2: f64 = snapshot.iter().map(|s| s.1 * s.1).sum();
    let var: f64 = snapshot
        .iter()
        .map(|&(alpha, w)| w * (mean_photon_drift(&[(alpha, 1.0)], params) - drift / sum_w).powi(2))
        .sum::<f64>()
        / sum_w;
    let drift_se = (var * sum_w2 / (sum_w * sum_w)).sqrt();

    let combined = fd_se.hypot(drift_se);
    let diff = fd - drift;
    let residual_sigma = if combined > 0.0 {
        diff / combined
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(DriftReport {
        time: series.times[index],
        finite_difference: fd,
        finite_difference_stderr: fd_se,
        drift,
        drift_stderr: drift_se,
        residual_sigma,
    })
}
