use rayon::prelude::*;

use super::{GradCounters, GradientReport, LossFn, Method, Problem};
use crate::driver::{self, StoragePolicy};
use crate::error::{Error, Result};
use crate::field::{ParamVec, StateVec, VectorField};

/// Beyond this many coordinates of `(z₀, θ)` the oracle refuses.
pub const FD_COORDINATE_LIMIT: usize = 1000;

/// Central differences of the whole integrate-then-loss pipeline, one
/// coordinate of `(z₀, θ)` at a time with step `1e-5·(1 + |x|)`.
///
/// The grid of the unperturbed run is frozen and replayed for every
/// perturbation, so step-size selection never enters the difference.
/// Coordinates are evaluated in parallel and merged by index.
pub fn grad_fd_oracle<F: VectorField + ?Sized>(
    p: &Problem<'_, F>,
    loss: &dyn LossFn,
) -> Result<GradientReport> {
    p.check()?;
    let n = p.z0.len();
    let dims = n + p.theta.len();
    if dims > FD_COORDINATE_LIMIT {
        return Err(Error::TooManyCoordinates {
            dims,
            limit: FD_COORDINATE_LIMIT,
        });
    }
    let (base, _) = driver::integrate(
        p.field,
        &p.z0,
        p.t0,
        p.t_end,
        &p.theta,
        &p.config,
        StoragePolicy::None,
    )?;
    let grid = &base.t_grid;
    let run = |z0: &[f64], theta: &[f64]| -> Result<(f64, u64)> {
        let (rec, _) = driver::integrate_on_grid(
            p.field,
            &StateVec::new(z0.to_vec())?,
            grid,
            theta,
            p.config.damping,
            StoragePolicy::None,
        )?;
        Ok((loss.evaluate(&rec.end_state.z), rec.counters.f_evals))
    };

    let partials: Vec<(f64, u64)> = (0..dims)
        .into_par_iter()
        .map(|i| {
            let mut z0 = p.z0.as_slice().to_vec();
            let mut theta = p.theta.as_slice().to_vec();
            let x = if i < n { &mut z0[i] } else { &mut theta[i - n] };
            let x0 = *x;
            let h = 1e-5 * (1.0 + x0.abs());
            *x = x0 + h;
            let (lp, ep) = run(&z0, &theta)?;
            let x = if i < n { &mut z0[i] } else { &mut theta[i - n] };
            *x = x0 - h;
            let (lm, em) = run(&z0, &theta)?;
            Ok(((lp - lm) / (2.0 * h), ep + em))
        })
        .collect::<Result<_>>()?;

    let grads: Vec<f64> = partials.iter().map(|(g, _)| *g).collect();
    GradientReport {
        method: Method::Fd,
        loss: loss.evaluate(&base.end_state.z),
        dl_dz0: StateVec::new(grads[..n].to_vec())?,
        dl_dtheta: ParamVec::new(grads[n..].to_vec()),
        counters: GradCounters {
            f_evals: base.counters.f_evals + partials.iter().map(|(_, e)| e).sum::<u64>(),
            vjp_evals: 0,
            peak_state_units: base.counters.peak_state_units,
            graph_depth_units: 0,
            grid_steps: base.grid_steps() as u64,
            rejected_trials: base.counters.rejected_trials,
        },
    }
    .check_finite()
}
