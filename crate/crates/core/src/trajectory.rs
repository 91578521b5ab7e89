//! The quantum-jump engine.
//!
//! A trajectory alternates deterministic no-emission segments with
//! instantaneous emissions. In laser mode an emission leaves `α` unchanged
//! (coherent states are eigenstates of the annihilation operator), so the
//! amplitude follows the closed-form driven solution and only the emission
//! record is random. In feedback mode a detected emission displaces `α` by
//! `β`.
//!
//! Two samplers produce the emission record:
//!
//! * [`Sampler::FixedStep`] draws a Bernoulli trial per step of length
//!   `Δt`, reduced adaptively so that `κΔt·max(1,|α|²) ≤ 0.05`.
//! * [`Sampler::WaitingTime`] inverts the exact no-emission probability of
//!   undriven decay and jumps straight to the next emission (feedback only).
//!
//! Both consume exactly two uniforms per step or per emission candidate:
//! one for the emission and one for the detector, whether or not they are
//! needed.

use serde::{Deserialize, Serialize};

use crate::analytic::{decay_alpha, laser_alpha, laser_emission_integral};
use crate::{CavityParams, DriveMode, Error, RandomStream, Result, TrajectoryRng, C64};

/// Upper bound on `κΔt·max(1,|α|²)` for a fixed step.
pub const SINGLE_JUMP_LIMIT: f64 = 0.05;
/// Default `κΔt` of the fixed-step sampler.
pub const DEFAULT_KAPPA_DT: f64 = 1e-3;
/// Default photon-number cap beyond which a trajectory is halted as diverged.
pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e4;
/// A trajectory still running with `|α|²` above this fraction of the cap
/// counts as diverging.
pub const DIVERGING_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    #[default]
    FixedStep,
    WaitingTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub sampler: Sampler,
    /// Base step `κΔt` of the fixed-step sampler.
    pub kappa_dt: f64,
    pub divergence_cap: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            sampler: Sampler::FixedStep,
            kappa_dt: DEFAULT_KAPPA_DT,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
        }
    }
}

impl SimOptions {
    pub fn waiting_time() -> Self {
        Self {
            sampler: Sampler::WaitingTime,
            ..Self::default()
        }
    }

    pub fn fixed_step(kappa_dt: f64) -> Self {
        Self {
            sampler: Sampler::FixedStep,
            kappa_dt,
            ..Self::default()
        }
    }

    pub fn with_cap(mut self, divergence_cap: f64) -> Self {
        self.divergence_cap = divergence_cap;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa_dt.is_finite() && self.kappa_dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kappa_dt must be finite and > 0, got {}",
                self.kappa_dt
            )));
        }
        if !(self.divergence_cap > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "divergence cap must be > 0, got {}",
                self.divergence_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub time: f64,
    pub detected: bool,
    /// Always implies `detected`.
    pub feedback_applied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalStatus {
    Completed,
    /// `|α|²` exceeded the divergence cap; the trajectory stops at `halt_time`.
    HaltedDiverged,
    /// No further emission can occur; the amplitude decays to the vacuum.
    HaltedVacuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Vacuum,
    Diverging,
    Undecided,
}

/// One seeded realisation sampled on an output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub stream: RandomStream,
    pub params: CavityParams,
    pub alpha0: C64,
    pub horizon: f64,
    pub divergence_cap: f64,
    /// Grid points reached before any halt.
    pub times: Vec<f64>,
    /// Interaction-picture amplitudes at `times`.
    pub alphas: Vec<C64>,
    pub events: Vec<TrajectoryEvent>,
    pub status: TerminalStatus,
    pub halt_time: Option<f64>,
    /// Amplitude at the horizon, or just after the diverging jump.
    pub final_alpha: C64,
}

impl Trajectory {
    /// Time up to which the trajectory is defined.
    pub fn end_time(&self) -> f64 {
        self.halt_time.unwrap_or(self.horizon)
    }

    /// Reconstructs `α(t)` from the initial amplitude and the event record.
    ///
    /// Returns `None` outside `[0, end_time]`.
    pub fn alpha_at(&self, t: f64) -> Option<C64> {
        if !(0.0..=self.end_time()).contains(&t) {
            return None;
        }
        let mut seg = Segment {
            start: 0.0,
            alpha: self.alpha0,
        };
        for e in self.events.iter().filter(|e| e.feedback_applied) {
            if e.time > t {
                break;
            }
            seg = seg.jump(e.time, &self.params);
        }
        Some(seg.at(t, &self.params))
    }

    pub fn emission_count(&self) -> usize {
        self.events.len()
    }
}

/// A no-emission segment starting at `start` with amplitude `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    start: f64,
    alpha: C64,
}

impl Segment {
    #[inline]
    fn at(&self, t: f64, params: &CavityParams) -> C64 {
        match params.mode {
            DriveMode::Feedback => decay_alpha(t - self.start, self.alpha, params.kappa),
            DriveMode::LaserDriven => laser_alpha(t - self.start, self.alpha, params),
        }
    }

    fn jump(&self, time: f64, params: &CavityParams) -> Segment {
        Segment {
            start: time,
            alpha: apply_emission(self.at(time, params), true, params),
        }
    }
}

/// State change caused by an emission that was (or was not) detected.
///
/// Laser mode: always the identity. Feedback mode: `α + β` when detected.
#[inline]
pub fn apply_emission(alpha: C64, detected: bool, params: &CavityParams) -> C64 {
    match params.mode {
        DriveMode::Feedback if detected => alpha + params.beta,
        _ => alpha,
    }
}

/// Emission inside one fixed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEmission {
    /// Time of the emission measured from the start of the step.
    pub offset: f64,
    pub detected: bool,
    pub feedback_applied: bool,
}

/// Advances `alpha` by one step of length `dt`, with at most one emission.
///
/// Feedback mode uses the exact no-emission probability of the step and,
/// given an emission, places it by inverting that probability with the same
/// uniform. Laser mode uses the midpoint rate `κ|α(t+Δt/2)|²`.
pub fn step_fixed(
    alpha: C64,
    dt: f64,
    params: &CavityParams,
    rng: &mut TrajectoryRng,
) -> Result<(C64, Option<StepEmission>)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be finite and > 0, got {dt}")));
    }
    let n = alpha.norm_sqr();
    let k = params.kappa;
    let product = k * dt * n.max(1.0);
    if product > SINGLE_JUMP_LIMIT * (1.0 + 1e-9) {
        return Err(Error::StepTooLarge {
            photon_number: n,
            product,
            limit: SINGLE_JUMP_LIMIT,
        });
    }

    let u_emit = rng.uniform();
    let u_detect = rng.uniform();

    match params.mode {
        DriveMode::Feedback => {
            let p_emit = -(n * (-k * dt).exp_m1()).exp_m1();
            if u_emit < p_emit {
                // solve exp(−n(1 − e^{−κs})) = 1 − u for s
                let offset = (-(((-u_emit).ln_1p() / n).ln_1p()) / k).clamp(0.0, dt);
                let detected = u_detect < params.eta;
                let end = if detected {
                    let at = decay_alpha(offset, alpha, k);
                    decay_alpha(dt - offset, apply_emission(at, true, params), k)
                } else {
                    decay_alpha(dt, alpha, k)
                };
                let e = StepEmission {
                    offset,
                    detected,
                    feedback_applied: detected,
                };
                Ok((end, Some(e)))
            } else {
                Ok((decay_alpha(dt, alpha, k), None))
            }
        }
        DriveMode::LaserDriven => {
            // emissions leave α unchanged, so a Bernoulli draw with the exact
            // integrated rate keeps the mean count per step exact
            let p_emit = laser_emission_integral(0.0, dt, alpha, params);
            let end = laser_alpha(dt, alpha, params);
            if u_emit < p_emit {
                let e = StepEmission {
                    offset: dt * (u_emit / p_emit),
                    detected: u_detect < params.eta,
                    feedback_applied: false,
                };
                Ok((end, Some(e)))
            } else {
                Ok((end, None))
            }
        }
    }
}

/// Time to the next emission of an undriven cavity for a given uniform `u`.
///
/// `None` when `u ≤ e^{-|α|²}`: the cavity decays to the vacuum without
/// emitting again. Otherwise solves `exp[−|α|²(1−e^{−κt})] = u`.
#[inline]
pub fn waiting_time_from_uniform(alpha: C64, kappa: f64, u: f64) -> Option<f64> {
    let n = alpha.norm_sqr();
    if n == 0.0 || u <= (-n).exp() {
        return None;
    }
    let t = -(u.ln() / n).ln_1p() / kappa;
    Some(t.max(0.0))
}

/// Draws one uniform and returns the exact waiting time to the next emission.
pub fn sample_waiting_time(alpha: C64, kappa: f64, rng: &mut TrajectoryRng) -> Option<f64> {
    waiting_time_from_uniform(alpha, kappa, rng.uniform())
}

struct Emission {
    time: f64,
    detected: bool,
    feedback_applied: bool,
    before: Segment,
    diverged: bool,
}

enum Advance {
    Emission(Emission),
    End(TerminalStatus),
}

struct Engine<'a> {
    params: &'a CavityParams,
    opts: &'a SimOptions,
    rng: TrajectoryRng,
    seg: Segment,
    /// Fixed-step: start of the next step. Waiting-time: last emission.
    clock: f64,
    base_dt: f64,
}

impl<'a> Engine<'a> {
    fn new(alpha0: C64, params: &'a CavityParams, opts: &'a SimOptions, stream: RandomStream) -> Self {
        Self {
            params,
            opts,
            rng: stream.rng(),
            seg: Segment {
                start: 0.0,
                alpha: alpha0,
            },
            clock: 0.0,
            base_dt: opts.kappa_dt / params.kappa,
        }
    }

    fn emission(&mut self, time: f64, detected: bool) -> Advance {
        let before = self.seg;
        let feedback_applied = detected && self.params.is_feedback();
        let mut diverged = false;
        if feedback_applied {
            self.seg = before.jump(time, self.params);
            diverged = self.seg.alpha.norm_sqr() > self.opts.divergence_cap;
        }
        Advance::Emission(Emission {
            time,
            detected,
            feedback_applied,
            before,
            diverged,
        })
    }

    fn advance(&mut self, horizon: f64) -> Result<Advance> {
        match self.opts.sampler {
            Sampler::FixedStep => self.advance_fixed(horizon),
            Sampler::WaitingTime => Ok(self.advance_waiting(horizon)),
        }
    }

    fn advance_fixed(&mut self, horizon: f64) -> Result<Advance> {
        let k = self.params.kappa;
        while self.clock < horizon {
            let alpha = self.seg.at(self.clock, self.params);
            let n = alpha.norm_sqr();
            if n == 0.0 && self.params.is_feedback() {
                return Ok(Advance::End(TerminalStatus::HaltedVacuum));
            }
            let dt = self.base_dt.min(SINGLE_JUMP_LIMIT / (k * n.max(1.0)));
            let start = self.clock;
            let (_, emitted) = step_fixed(alpha, dt, self.params, &mut self.rng)?;
            self.clock = start + dt;
            if let Some(e) = emitted {
                let time = start + e.offset;
                if time > horizon {
                    break;
                }
                return Ok(self.emission(time, e.detected));
            }
        }
        Ok(Advance::End(TerminalStatus::Completed))
    }

    /// `clock` is the time of the last emission; the next one is sampled
    /// from the amplitude there.
    fn advance_waiting(&mut self, horizon: f64) -> Advance {
        let alpha = self.seg.at(self.clock, self.params);
        let wait = sample_waiting_time(alpha, self.params.kappa, &mut self.rng);
        let u_detect = self.rng.uniform();
        match wait {
            None => Advance::End(TerminalStatus::HaltedVacuum),
            Some(w) => {
                let time = self.clock + w;
                if time > horizon {
                    Advance::End(TerminalStatus::Completed)
                } else {
                    self.clock = time;
                    self.emission(time, u_detect < self.params.eta)
                }
            }
        }
    }
}

fn check_inputs(alpha0: C64, horizon: f64, params: &CavityParams, opts: &SimOptions) -> Result<()> {
    params.validate()?;
    opts.validate()?;
    if !(alpha0.re.is_finite() && alpha0.im.is_finite()) {
        return Err(Error::NonFinite { what: "alpha0" });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be finite and > 0, got {horizon}")));
    }
    if opts.sampler == Sampler::WaitingTime {
        params.require_feedback()?;
    }
    Ok(())
}

/// Checks that `grid` is strictly increasing and inside `[0, horizon]`.
pub fn validate_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    if !(grid[0] >= 0.0) || !(grid[grid.len() - 1] <= horizon) {
        return Err(Error::InvalidGrid(format!("grid must lie in [0, {horizon}]")));
    }
    Ok(())
}

/// Simulates one trajectory up to `horizon`, sampling `α` on `grid`.
///
/// The random draws depend only on `stream` and on the physics, never on the
/// grid or the horizon, so a shorter run is an exact prefix of a longer one.
pub fn simulate(
    alpha0: C64,
    horizon: f64,
    params: &CavityParams,
    stream: RandomStream,
    grid: &[f64],
    opts: &SimOptions,
) -> Result<Trajectory> {
    check_inputs(alpha0, horizon, params, opts)?;
    validate_grid(grid, horizon)?;

    let mut times = Vec::with_capacity(grid.len());
    let mut alphas = Vec::with_capacity(grid.len());
    let mut events = Vec::new();
    let mut gi = 0;
    let mut halt_time = None;

    let mut engine = Engine::new(alpha0, params, opts, stream);
    let status;
    let final_alpha;

    if params.is_feedback() && alpha0.norm_sqr() > opts.divergence_cap {
        status = TerminalStatus::HaltedDiverged;
        halt_time = Some(0.0);
        final_alpha = alpha0;
    } else {
        loop {
            match engine.advance(horizon)? {
                Advance::Emission(e) => {
                    while gi < grid.len() && grid[gi] < e.time {
                        times.push(grid[gi]);
                        alphas.push(e.before.at(grid[gi], params));
                        gi += 1;
                    }
                    events.push(TrajectoryEvent {
                        time: e.time,
                        detected: e.detected,
                        feedback_applied: e.feedback_applied,
                    });
                    if e.diverged {
                        status = TerminalStatus::HaltedDiverged;
                        halt_time = Some(e.time);
                        final_alpha = engine.seg.alpha;
                        break;
                    }
                }
                Advance::End(s) => {
                    for &g in &grid[gi..] {
                        times.push(g);
                        alphas.push(engine.seg.at(g, params));
                    }
                    status = s;
                    final_alpha = engine.seg.at(horizon, params);
                    break;
                }
            }
        }
    }

    Ok(Trajectory {
        stream,
        params: *params,
        alpha0,
        horizon,
        divergence_cap: opts.divergence_cap,
        times,
        alphas,
        events,
        status,
        halt_time,
        final_alpha,
    })
}

/// Time of the first emission before `horizon`, detected or not.
///
/// Uses the same draws as [`simulate`], so it equals the first event time
/// of the corresponding trajectory.
pub fn first_emission(
    alpha0: C64,
    horizon: f64,
    params: &CavityParams,
    stream: RandomStream,
    opts: &SimOptions,
) -> Result<Option<f64>> {
    check_inputs(alpha0, horizon, params, opts)?;
    let mut engine = Engine::new(alpha0, params, opts, stream);
    Ok(match engine.advance(horizon)? {
        Advance::Emission(e) => Some(e.time),
        Advance::End(_) => None,
    })
}

/// Vacuum iff `|α(horizon)| < vacuum_radius`; diverging iff halted at the cap
/// or `|α(horizon)|²` above half the cap.
pub fn classify(traj: &Trajectory, vacuum_radius: f64, horizon: f64) -> Classification {
    if traj.status == TerminalStatus::HaltedDiverged && traj.end_time() <= horizon {
        return Classification::Diverging;
    }
    let alpha = traj.alpha_at(horizon).unwrap_or(traj.final_alpha);
    if alpha.norm() < vacuum_radius {
        Classification::Vacuum
    } else if alpha.norm_sqr() > DIVERGING_FRACTION * traj.divergence_cap {
        Classification::Diverging
    } else {
        Classification::Undecided
    }
}
