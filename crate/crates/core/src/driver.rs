//! The outer integration loop: adaptive step-doubling control or fixed steps,
//! the accepted time grid, instrumentation, and trajectory reconstruction
//! by repeated `ψ⁻¹`.
//!
//! In adaptive mode every accepted trial contributes its two half steps to
//! the grid, so `t_grid.len() == 2 * accepted_steps + 1`. Each grid interval
//! is one exact `ψ` application, which is what makes reconstruction exact.

use std::fmt::Write as _;

use crate::alf::{self, AugmentedState, Damping, ErrorNorm, Tolerance};
use crate::error::{Error, Result};
use crate::field::{Dynamics, EvalCounter, StateVec};
use crate::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Adaptive,
    /// Equal steps of the given size; the last one may be shorter.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub safety: f64,
    pub shrink_floor: f64,
    pub growth_cap: f64,
    pub max_rejects_per_step: usize,
    pub damping: Damping,
    pub mode: StepMode,
    pub norm: ErrorNorm,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-5,
            atol: 1e-6,
            h_init: 0.01,
            h_min: 1e-12,
            h_max: 1e3,
            safety: 0.9,
            shrink_floor: 0.2,
            growth_cap: 5.0,
            max_rejects_per_step: 20,
            damping: Damping::NONE,
            mode: StepMode::Adaptive,
            norm: ErrorNorm::Augmented,
        }
    }
}

impl SolverConfig {
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        SolverConfig {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn fixed(h: f64) -> Self {
        SolverConfig {
            mode: StepMode::Fixed(h),
            ..Self::default()
        }
    }

    pub fn with_damping(mut self, damping: Damping) -> Self {
        self.damping = damping;
        self
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            rtol: self.rtol,
            atol: self.atol,
            norm: self.norm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return bad(format!(
                "rtol and atol must be positive ({}, {})",
                self.rtol, self.atol
            ));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return bad(format!(
                "need 0 < h_min <= h_init <= h_max, got {} / {} / {}",
                self.h_min, self.h_init, self.h_max
            ));
        }
        if !(0.0 < self.shrink_floor && self.shrink_floor < 1.0 && 1.0 < self.growth_cap) {
            return bad(format!(
                "need 0 < shrink_floor < 1 < growth_cap, got {} / {}",
                self.shrink_floor, self.growth_cap
            ));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad(format!("safety must lie in (0, 1], got {}", self.safety));
        }
        if self.max_rejects_per_step == 0 {
            return bad("max_rejects_per_step must be positive".into());
        }
        if let StepMode::Fixed(h) = self.mode {
            if !(h.is_finite() && h > 0.0) {
                return bad(format!("fixed step must be positive, got {h}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoragePolicy {
    /// Keep only the running state and the grid.
    None,
    /// Store `(z, v)` at every grid point.
    Checkpoints,
    /// Store the full forward tape, rejected trials included.
    FullTape,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counters {
    pub f_evals: u64,
    /// Accepted step-doubling trials (adaptive) or grid steps (fixed).
    pub accepted_steps: u64,
    pub rejected_trials: u64,
    /// Peak number of stored f64 scalars, see [`StoragePolicy`].
    pub peak_state_units: u64,
}

impl Counters {
    /// Average number of trials per accepted step.
    pub fn m_avg(&self) -> f64 {
        if self.accepted_steps == 0 {
            0.0
        } else {
            (self.accepted_steps + self.rejected_trials) as f64 / self.accepted_steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationRecord {
    pub t_grid: Vec<f64>,
    pub end_state: AugmentedState,
    pub counters: Counters,
}

impl IntegrationRecord {
    /// Number of `ψ` applications on the accepted grid.
    pub fn grid_steps(&self) -> usize {
        self.t_grid.len() - 1
    }

    /// `kind,t,z_0..,v_0..`: one `grid` row per accepted time, then one `end`
    /// row. Counters go in a leading comment line.
    pub fn to_csv(&self) -> String {
        let n = self.end_state.dim();
        let mut out = String::new();
        let c = &self.counters;
        let _ = writeln!(
            out,
            "# f_evals={},accepted_steps={},rejected_trials={},peak_state_units={}",
            c.f_evals, c.accepted_steps, c.rejected_trials, c.peak_state_units
        );
        out.push_str("kind,t");
        for i in 0..n {
            let _ = write!(out, ",z_{i}");
        }
        for i in 0..n {
            let _ = write!(out, ",v_{i}");
        }
        out.push('\n');
        for t in &self.t_grid {
            let _ = writeln!(out, "grid,{}{}", fmt_f64(*t), ",".repeat(2 * n));
        }
        let s = &self.end_state;
        let _ = write!(out, "end,{}", fmt_f64(s.t));
        for x in s.z.iter().chain(s.v.iter()) {
            let _ = write!(out, ",{}", fmt_f64(*x));
        }
        out.push('\n');
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("integration record: {m}"));
        let mut lines = text.lines();
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| bad("missing counter line"))?;
        let mut counters = Counters::default();
        for kv in meta.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("bad counter"))?;
            let v: u64 = v.parse().map_err(|_| bad("bad counter value"))?;
            match k {
                "f_evals" => counters.f_evals = v,
                "accepted_steps" => counters.accepted_steps = v,
                "rejected_trials" => counters.rejected_trials = v,
                "peak_state_units" => counters.peak_state_units = v,
                _ => return Err(bad("unknown counter")),
            }
        }
        let header = lines.next().ok_or_else(|| bad("missing header"))?;
        let n = header.split(',').filter(|c| c.starts_with("z_")).count();
        let mut t_grid = Vec::new();
        let mut end = None;
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
            match cols.first().copied() {
                Some("grid") => t_grid.push(parse(cols[1])?),
                Some("end") => {
                    if cols.len() != 2 + 2 * n {
                        return Err(bad("end row width"));
                    }
                    let vals = cols[2..]
                        .iter()
                        .map(|s| parse(s))
                        .collect::<Result<Vec<_>>>()?;
                    end = Some(AugmentedState::new(
                        StateVec::new(vals[..n].to_vec())?,
                        StateVec::new(vals[n..].to_vec())?,
                        parse(cols[1])?,
                    )?);
                }
                _ => return Err(bad("unknown row kind")),
            }
        }
        Ok(IntegrationRecord {
            t_grid,
            end_state: end.ok_or_else(|| bad("missing end row"))?,
            counters,
        })
    }
}

/// Forward intermediates of one accepted grid step, kept by the naive
/// full-tape regime.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeEntry {
    pub t_in: f64,
    pub h: f64,
    pub k1: Vec<f64>,
}

/// What the forward pass retained beyond the record itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointLog {
    /// `(z, v)` at every grid point (checkpoints and full tape).
    pub states: Vec<AugmentedState>,
    /// One entry per accepted grid step (full tape only).
    pub tape: Vec<TapeEntry>,
}

impl CheckpointLog {
    /// `t,z_0,..`: the stored trajectory.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("t");
        if let Some(s) = self.states.first() {
            for i in 0..s.dim() {
                let _ = write!(out, ",z_{i}");
            }
        }
        out.push('\n');
        for s in &self.states {
            out.push_str(&fmt_f64(s.t));
            for z in s.z.iter() {
                let _ = write!(out, ",{}", fmt_f64(*z));
            }
            out.push('\n');
        }
        out
    }
}

/// Memory bookkeeping in f64 scalars.
struct Ledger {
    dim: u64,
    eval_units: u64,
    storage: StoragePolicy,
    stored: u64,
    peak: u64,
}

impl Ledger {
    fn new(dim: usize, eval_units: usize, storage: StoragePolicy) -> Self {
        let mut l = Ledger {
            dim: dim as u64,
            eval_units: eval_units as u64,
            storage,
            stored: 0,
            peak: 0,
        };
        l.touch();
        l
    }

    // eval working set + the running (z, v)
    fn base(&self) -> u64 {
        (self.eval_units + 2) * self.dim
    }

    fn touch(&mut self) {
        self.peak = self.peak.max(self.base() + self.stored);
    }

    fn state_stored(&mut self) {
        if self.storage != StoragePolicy::None {
            self.stored += 2 * self.dim;
            self.touch();
        }
    }

    fn evals_taped(&mut self, evals: u64) {
        if self.storage == StoragePolicy::FullTape {
            self.stored += evals * (self.eval_units + 1) * self.dim;
            self.touch();
        }
    }
}

fn with_last_good(err: Error, state: &AugmentedState) -> Error {
    match err {
        Error::NonFinite { .. } => Error::NumericalFailure {
            t: state.t,
            z: state.z.as_slice().to_vec(),
            source: Box::new(err),
        },
        other => other,
    }
}

/// Number of equal steps of size `h` covering `span`, tolerant of `span / h`
/// landing a hair above an integer.
pub(crate) fn fixed_step_count(span: f64, h: f64) -> usize {
    let ratio = span / h;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    (n as usize).max(1)
}

pub(crate) fn fixed_grid(t0: f64, t_end: f64, h: f64) -> Vec<f64> {
    let n = fixed_step_count((t_end - t0).abs(), h);
    let step = h.copysign(t_end - t0);
    (0..=n)
        .map(|i| if i == n { t_end } else { t0 + step * i as f64 })
        .collect()
}

fn check_problem<F: Dynamics + ?Sized>(
    field: &F,
    z0: &StateVec,
    t0: f64,
    t_end: f64,
    theta: &[f64],
) -> Result<()> {
    if !(t0.is_finite() && t_end.is_finite()) || t0 == t_end {
        return Err(Error::EmptyInterval { t0, t_end });
    }
    if z0.len() != field.dim_state() {
        return Err(Error::Dimension {
            what: "state",
            expected: field.dim_state(),
            got: z0.len(),
        });
    }
    if theta.len() != field.dim_params() {
        return Err(Error::Dimension {
            what: "parameters",
            expected: field.dim_params(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// Integrates `dz/dt = f(z, t, θ)` from `t0` to `t_end` (either direction)
/// starting from `v₀ = f(z₀, t₀, θ)`.
pub fn integrate<F: Dynamics + ?Sized>(
    field: &F,
    z0: &StateVec,
    t0: f64,
    t_end: f64,
    theta: &[f64],
    config: &SolverConfig,
    storage: StoragePolicy,
) -> Result<(IntegrationRecord, CheckpointLog)> {
    config.validate()?;
    check_problem(field, z0, t0, t_end, theta)?;
    match config.mode {
        StepMode::Fixed(h) => {
            let grid = fixed_grid(t0, t_end, h);
            integrate_on_grid(field, z0, &grid, theta, config.damping, storage)
        }
        StepMode::Adaptive => integrate_adaptive(field, z0, t0, t_end, theta, config, storage),
    }
}

/// Replays the ALF steps on a prescribed grid (fixed mode, or a frozen
/// adaptive grid).
pub fn integrate_on_grid<F: Dynamics + ?Sized>(
    field: &F,
    z0: &StateVec,
    grid: &[f64],
    theta: &[f64],
    damping: Damping,
    storage: StoragePolicy,
) -> Result<(IntegrationRecord, CheckpointLog)> {
    if grid.len() < 2 {
        return Err(Error::InvalidConfig(
            "a grid needs at least two points".into(),
        ));
    }
    check_problem(field, z0, grid[0], *grid.last().unwrap(), theta)?;
    let mut counter = EvalCounter::default();
    let mut ledger = Ledger::new(field.dim_state(), field.eval_units(), storage);
    let mut log = CheckpointLog::default();

    let mut state = AugmentedState::initial(field, z0, grid[0], theta, &mut counter)?;
    ledger.evals_taped(1);
    if storage != StoragePolicy::None {
        log.states.push(state.clone());
    }
    ledger.state_stored();

    for w in grid.windows(2) {
        let (t_in, t_out) = (w[0], w[1]);
        let h = t_out - t_in;
        alf::check_step(t_in, h)?;
        let (z, v) = alf::forward_kernel(
            field,
            &state.z,
            &state.v,
            t_in,
            h,
            theta,
            damping,
            &mut counter,
        )
        .map_err(|e| with_last_good(e, &state))?;
        if storage == StoragePolicy::FullTape {
            log.tape.push(TapeEntry {
                t_in,
                h,
                k1: state
                    .z
                    .iter()
                    .zip(state.v.iter())
                    .map(|(zi, vi)| zi + vi * 0.5 * h)
                    .collect(),
            });
        }
        ledger.evals_taped(1);
        state = AugmentedState {
            z: StateVec::from_finite(z),
            v: StateVec::from_finite(v),
            t: t_out,
        };
        if storage != StoragePolicy::None {
            log.states.push(state.clone());
        }
        ledger.state_stored();
    }

    let record = IntegrationRecord {
        t_grid: grid.to_vec(),
        end_state: state,
        counters: Counters {
            f_evals: counter.evals,
            accepted_steps: (grid.len() - 1) as u64,
            rejected_trials: 0,
            peak_state_units: ledger.peak,
        },
    };
    Ok((record, log))
}

fn integrate_adaptive<F: Dynamics + ?Sized>(
    field: &F,
    z0: &StateVec,
    t0: f64,
    t_end: f64,
    theta: &[f64],
    config: &SolverConfig,
    storage: StoragePolicy,
) -> Result<(IntegrationRecord, CheckpointLog)> {
    let tol = config.tolerance();
    let forward = t_end > t0;
    let mut counter = EvalCounter::default();
    let mut ledger = Ledger::new(field.dim_state(), field.eval_units(), storage);
    let mut log = CheckpointLog::default();
    let mut counters = Counters::default();

    let mut state = AugmentedState::initial(field, z0, t0, theta, &mut counter)?;
    ledger.evals_taped(1);
    if storage != StoragePolicy::None {
        log.states.push(state.clone());
    }
    ledger.state_stored();
    let mut t_grid = vec![t0];
    let mut h = config.h_init.min(config.h_max);

    while state.t != t_end {
        let mut rejects = 0;
        loop {
            let remaining = (t_end - state.t).abs();
            let t_try = if h >= remaining || remaining - h <= 1e-12 * (1.0 + t_end.abs()) {
                t_end
            } else if forward {
                state.t + h
            } else {
                state.t - h
            };
            let h_eff = (t_try - state.t).abs();
            let trial = alf::trial(
                field,
                &state,
                t_try,
                theta,
                config.damping,
                &tol,
                &mut counter,
            )
            .map_err(|e| with_last_good(e, &state))?;
            ledger.evals_taped(trial.f_evals);
            let err = trial.err_norm;

            if err <= 1.0 {
                counters.accepted_steps += 1;
                if storage == StoragePolicy::FullTape {
                    for (from, to) in [
                        (&state, &trial.midpoint),
                        (&trial.midpoint, &trial.state_out),
                    ] {
                        let step = to.t - from.t;
                        log.tape.push(TapeEntry {
                            t_in: from.t,
                            h: step,
                            k1: from
                                .z
                                .iter()
                                .zip(from.v.iter())
                                .map(|(zi, vi)| zi + vi * 0.5 * step)
                                .collect(),
                        });
                    }
                }
                t_grid.push(trial.midpoint.t);
                t_grid.push(trial.state_out.t);
                if storage != StoragePolicy::None {
                    log.states.push(trial.midpoint.clone());
                    log.states.push(trial.state_out.clone());
                }
                ledger.state_stored();
                ledger.state_stored();
                let factor = if err == 0.0 {
                    config.growth_cap
                } else {
                    (config.safety * err.powf(-1.0 / 3.0))
                        .clamp(config.shrink_floor, config.growth_cap)
                };
                h = (h_eff * factor).min(config.h_max);
                state = trial.state_out;
                break;
            }

            counters.rejected_trials += 1;
            rejects += 1;
            if rejects > config.max_rejects_per_step {
                return Err(Error::ToleranceUnreachable {
                    t: state.t,
                    rejects,
                });
            }
            h = h_eff * (config.safety * err.powf(-1.0 / 3.0)).max(config.shrink_floor);
            if h < config.h_min {
                return Err(Error::Stiffness {
                    t: state.t,
                    h,
                    h_min: config.h_min,
                });
            }
        }
    }

    counters.f_evals = counter.evals;
    counters.peak_state_units = ledger.peak;
    Ok((
        IntegrationRecord {
            t_grid,
            end_state: state,
            counters,
        },
        log,
    ))
}

/// Lazily walks the accepted grid backwards from the record's end state,
/// one `ψ⁻¹` per grid step. Only the current state is live.
pub struct Reconstruction<'a, F: ?Sized> {
    field: &'a F,
    grid: &'a [f64],
    theta: &'a [f64],
    damping: Damping,
    current: Option<AugmentedState>,
    next_index: usize,
    counter: EvalCounter,
    failed: bool,
}

impl<F: Dynamics + ?Sized> Reconstruction<'_, F> {
    pub fn counter(&self) -> EvalCounter {
        self.counter
    }
}

impl<F: Dynamics + ?Sized> Iterator for Reconstruction<'_, F> {
    type Item = Result<AugmentedState>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let state = self.current.take()?;
        let i = self.next_index;
        if i > 0 {
            let (t_in, t_out) = (self.grid[i - 1], self.grid[i]);
            let h = t_out - t_in;
            match alf::inverse_kernel(
                self.field,
                &state.z,
                &state.v,
                t_in,
                h,
                self.theta,
                self.damping,
                &mut self.counter,
            ) {
                Ok((z, v)) => {
                    self.current = Some(AugmentedState {
                        z: StateVec::from_finite(z),
                        v: StateVec::from_finite(v),
                        t: t_in,
                    });
                    self.next_index = i - 1;
                }
                Err(_) => {
                    self.failed = true;
                    return Some(Err(Error::ReconstructionDiverged { step: i }));
                }
            }
        }
        Some(Ok(state))
    }
}

/// States at `t_N, t_{N-1}, …, t_0`, rebuilt from `record.end_state` alone.
pub fn reconstruct_backward<'a, F: Dynamics + ?Sized>(
    field: &'a F,
    record: &'a IntegrationRecord,
    theta: &'a [f64],
    config: &SolverConfig,
) -> Reconstruction<'a, F> {
    Reconstruction {
        field,
        grid: &record.t_grid,
        theta,
        damping: config.damping,
        current: Some(record.end_state.clone()),
        next_index: record.t_grid.len() - 1,
        counter: EvalCounter::default(),
        failed: false,
    }
}
