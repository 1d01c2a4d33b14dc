//! The asynchronous leapfrog step `ψ`, its explicit inverse `ψ⁻¹`, the damped
//! variants, and the step-doubling local error estimate.
//!
//! One step of size `h` from `(z, v, t)`:
//!
//! ```text
//! s₁    = t + h/2
//! k₁    = z + v·h/2
//! u₁    = f(k₁, s₁, θ)
//! v_out = v + 2η(u₁ − v)
//! z_out = k₁ + v_out·h/2
//! t_out = t + h
//! ```
//!
//! The inverse recovers `k₁ = z_out − v_out·h/2` first, re-evaluates `u₁` at
//! the same point and solves the `v` update for `v`, dividing by `1 − 2η`.
//! Both directions cost one field evaluation.

use crate::error::{Error, Result};
use crate::field::{self, Dynamics, EvalCounter, StateVec};

/// `(z, v, t)`: the ODE state, the running derivative estimate and time.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub z: StateVec,
    pub v: StateVec,
    pub t: f64,
}

impl AugmentedState {
    pub fn new(z: StateVec, v: StateVec, t: f64) -> Result<Self> {
        if z.len() != v.len() {
            return Err(Error::Dimension {
                what: "derivative estimate",
                expected: z.len(),
                got: v.len(),
            });
        }
        if !t.is_finite() {
            return Err(Error::NonFinite {
                stage: "state construction",
                t,
                z: z.into_inner(),
            });
        }
        Ok(AugmentedState { z, v, t })
    }

    /// Starts an integration with the consistent derivative `v₀ = f(z₀, t₀, θ)`.
    pub fn initial<F: Dynamics + ?Sized>(
        field: &F,
        z0: &StateVec,
        t0: f64,
        theta: &[f64],
        counter: &mut EvalCounter,
    ) -> Result<Self> {
        let v0 = field::eval(field, z0, t0, theta, counter)?;
        AugmentedState::new(z0.clone(), v0, t0)
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Damping coefficient `η ∈ (0.5, 1]`. `η = 1` is undamped ALF.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Damping(f64);

impl Damping {
    pub const NONE: Damping = Damping(1.0);

    pub fn new(eta: f64) -> Result<Self> {
        if eta > 0.5 && eta <= 1.0 {
            Ok(Damping(eta))
        } else {
            Err(Error::InvalidConfig(format!(
                "damping must lie in (0.5, 1], got {eta}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Damping {
    fn default() -> Self {
        Damping::NONE
    }
}

/// Which components enter the step-doubling error norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    /// `z` and `v` components, each scaled by its own mixed tolerance.
    #[default]
    Augmented,
    /// `z` components only.
    State,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub norm: ErrorNorm,
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerance {
            rtol,
            atol,
            norm: ErrorNorm::Augmented,
        }
    }
}

/// Outcome of one step-doubling trial.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Result of the two half steps; this is what an accepted trial keeps.
    pub state_out: AugmentedState,
    /// State after the first half step.
    pub midpoint: AugmentedState,
    /// RMS of the tolerance-scaled full-vs-half discrepancy.
    pub err_norm: f64,
    pub f_evals: u64,
}

pub(crate) fn check_step(t: f64, h: f64) -> Result<()> {
    if !h.is_finite() || h.abs() < 1e-14 * (1.0 + t.abs()) {
        Err(Error::NoProgress { t, h })
    } else {
        Ok(())
    }
}

fn finite(stage: &'static str, values: &[f64], t: f64, z: &[f64]) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            stage,
            t,
            z: z.to_vec(),
        })
    }
}

/// ψ on raw slices, starting at `t_in`. Returns `(z_out, v_out)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn forward_kernel<F: Dynamics + ?Sized>(
    field: &F,
    z: &[f64],
    v: &[f64],
    t_in: f64,
    h: f64,
    theta: &[f64],
    eta: Damping,
    counter: &mut EvalCounter,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let eta = eta.get();
    let half = 0.5 * h;
    let s1 = t_in + half;
    let k1: Vec<f64> = z.iter().zip(v).map(|(zi, vi)| zi + vi * half).collect();
    finite("alf_step: k1", &k1, t_in, z)?;
    let u1 = field::eval(field, &k1, s1, theta, counter)?;
    let v_out: Vec<f64> = v
        .iter()
        .zip(u1.iter())
        .map(|(vi, ui)| vi + 2.0 * eta * (ui - vi))
        .collect();
    finite("alf_step: v_out", &v_out, t_in, z)?;
    let z_out: Vec<f64> = k1
        .iter()
        .zip(&v_out)
        .map(|(ki, vi)| ki + vi * half)
        .collect();
    finite("alf_step: z_out", &z_out, t_in, z)?;
    Ok((z_out, v_out))
}

/// ψ⁻¹ on raw slices for the step that started at `t_in`. Using the forward
/// step's own `t_in` keeps the midpoint time `s₁` bit-identical.
#[allow(clippy::too_many_arguments)]
pub(crate) fn inverse_kernel<F: Dynamics + ?Sized>(
    field: &F,
    z_out: &[f64],
    v_out: &[f64],
    t_in: f64,
    h: f64,
    theta: &[f64],
    eta: Damping,
    counter: &mut EvalCounter,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let eta = eta.get();
    let half = 0.5 * h;
    let s1 = t_in + half;
    let k1: Vec<f64> = z_out
        .iter()
        .zip(v_out)
        .map(|(zi, vi)| zi - vi * half)
        .collect();
    finite("alf_inverse: k1", &k1, t_in + h, z_out)?;
    let u1 = field::eval(field, &k1, s1, theta, counter)?;
    let v_in: Vec<f64> = if eta == 1.0 {
        u1.iter().zip(v_out).map(|(ui, vi)| 2.0 * ui - vi).collect()
    } else {
        let denom = 1.0 - 2.0 * eta;
        u1.iter()
            .zip(v_out)
            .map(|(ui, vi)| (vi - 2.0 * eta * ui) / denom)
            .collect()
    };
    finite("alf_inverse: v_in", &v_in, t_in + h, z_out)?;
    let z_in: Vec<f64> = k1
        .iter()
        .zip(&v_in)
        .map(|(ki, vi)| ki - vi * half)
        .collect();
    finite("alf_inverse: z_in", &z_in, t_in + h, z_out)?;
    Ok((z_in, v_in))
}

/// One ALF step of size `h` (negative for reverse time). One field evaluation.
pub fn alf_step<F: Dynamics + ?Sized>(
    field: &F,
    state: &AugmentedState,
    h: f64,
    theta: &[f64],
    eta: Damping,
    counter: &mut EvalCounter,
) -> Result<AugmentedState> {
    check_step(state.t, h)?;
    let (z, v) = forward_kernel(field, &state.z, &state.v, state.t, h, theta, eta, counter)?;
    Ok(AugmentedState {
        z: StateVec::from_finite(z),
        v: StateVec::from_finite(v),
        t: state.t + h,
    })
}

/// Exact inverse of [`alf_step`] with the same `h` and `η`.
pub fn alf_inverse<F: Dynamics + ?Sized>(
    field: &F,
    state_out: &AugmentedState,
    h: f64,
    theta: &[f64],
    eta: Damping,
    counter: &mut EvalCounter,
) -> Result<AugmentedState> {
    check_step(state_out.t, h)?;
    let t_in = state_out.t - h;
    let (z, v) = inverse_kernel(
        field,
        &state_out.z,
        &state_out.v,
        t_in,
        h,
        theta,
        eta,
        counter,
    )?;
    Ok(AugmentedState {
        z: StateVec::from_finite(z),
        v: StateVec::from_finite(v),
        t: t_in,
    })
}

/// Reference explicit midpoint step: like ALF but recomputes `v = f(z, t)`.
/// Returns `z_out`. Two field evaluations.
pub fn midpoint_step<F: Dynamics + ?Sized>(
    field: &F,
    z: &StateVec,
    t: f64,
    h: f64,
    theta: &[f64],
    counter: &mut EvalCounter,
) -> Result<StateVec> {
    check_step(t, h)?;
    let v = field::eval(field, z, t, theta, counter)?;
    let k1: Vec<f64> = z
        .iter()
        .zip(v.iter())
        .map(|(zi, vi)| zi + vi * 0.5 * h)
        .collect();
    let u1 = field::eval(field, &k1, t + 0.5 * h, theta, counter)?;
    StateVec::new(
        z.iter()
            .zip(u1.iter())
            .map(|(zi, ui)| zi + h * ui)
            .collect(),
    )
}

fn scaled_sq(full: &[f64], half: &[f64], before: &[f64], tol: &Tolerance) -> f64 {
    full.iter()
        .zip(half)
        .zip(before)
        .map(|((f, h), b)| {
            let scale = tol.atol + tol.rtol * b.abs().max(h.abs());
            ((f - h) / scale).powi(2)
        })
        .sum()
}

/// Step-doubling trial ending exactly at `t_end`: one full step against two
/// half steps. Three field evaluations.
#[allow(clippy::too_many_arguments)]
pub(crate) fn trial<F: Dynamics + ?Sized>(
    field: &F,
    state: &AugmentedState,
    t_end: f64,
    theta: &[f64],
    eta: Damping,
    tol: &Tolerance,
    counter: &mut EvalCounter,
) -> Result<StepResult> {
    let t = state.t;
    let t_mid = t + 0.5 * (t_end - t);
    let h_full = t_end - t;
    let h1 = t_mid - t;
    let h2 = t_end - t_mid;
    check_step(t, h1)?;
    check_step(t_mid, h2)?;
    let before = counter.evals;

    let (z_full, v_full) =
        forward_kernel(field, &state.z, &state.v, t, h_full, theta, eta, counter)?;
    let (z_mid, v_mid) = forward_kernel(field, &state.z, &state.v, t, h1, theta, eta, counter)?;
    let (z_half, v_half) = forward_kernel(field, &z_mid, &v_mid, t_mid, h2, theta, eta, counter)?;

    let n = state.dim();
    let mut sum = scaled_sq(&z_full, &z_half, &state.z, tol);
    let count = match tol.norm {
        ErrorNorm::State => n,
        ErrorNorm::Augmented => {
            sum += scaled_sq(&v_full, &v_half, &state.v, tol);
            2 * n
        }
    };
    let err_norm = if count == 0 {
        0.0
    } else {
        (sum / count as f64).sqrt()
    };

    Ok(StepResult {
        state_out: AugmentedState {
            z: StateVec::from_finite(z_half),
            v: StateVec::from_finite(v_half),
            t: t_end,
        },
        midpoint: AugmentedState {
            z: StateVec::from_finite(z_mid),
            v: StateVec::from_finite(v_mid),
            t: t_mid,
        },
        err_norm,
        f_evals: counter.evals - before,
    })
}

/// Step-doubling local error estimate for a step of size `h`.
///
/// `state_out` is the two-half-step result (no local extrapolation), so it
/// is a composition of exact `ψ` applications and stays invertible.
pub fn estimate_error<F: Dynamics + ?Sized>(
    field: &F,
    state: &AugmentedState,
    h: f64,
    theta: &[f64],
    eta: Damping,
    tol: &Tolerance,
    counter: &mut EvalCounter,
) -> Result<StepResult> {
    check_step(state.t, h)?;
    trial(field, state, state.t + h, theta, eta, tol, counter)
}
