use super::{GradCounters, GradientReport, LossFn, Method, Problem};
use crate::alf::ErrorNorm;
use crate::driver::{self, StoragePolicy};
use crate::error::Result;
use crate::field::{Dynamics, ParamVec, StateVec, VectorField};

/// The joint reverse-time system for `y = [z, a, g]`:
///
/// ```text
/// dz/dt =  f(z, t, θ)
/// da/dt = −(∂f/∂z)ᵀ a
/// dg/dt = −(∂f/∂θ)ᵀ a
/// ```
///
/// Each evaluation costs one field evaluation and one vjp.
#[derive(Debug, Clone, Copy)]
pub struct AdjointSystem<'a, F: ?Sized> {
    field: &'a F,
}

impl<'a, F: VectorField + ?Sized> AdjointSystem<'a, F> {
    pub fn new(field: &'a F) -> Self {
        AdjointSystem { field }
    }
}

impl<F: VectorField + ?Sized> Dynamics for AdjointSystem<'_, F> {
    fn dim_state(&self) -> usize {
        2 * self.field.dim_state() + self.field.dim_params()
    }

    fn dim_params(&self) -> usize {
        self.field.dim_params()
    }

    fn eval_units(&self) -> usize {
        2 * self.field.eval_units()
    }

    fn eval_into(&self, y: &[f64], t: f64, theta: &[f64], out: &mut [f64]) {
        let n = self.field.dim_state();
        let (z, rest) = y.split_at(n);
        let a = &rest[..n];
        let (dz, rest) = out.split_at_mut(n);
        let (da, dg) = rest.split_at_mut(n);
        self.field.eval_into(z, t, theta, dz);
        self.field.vjp_into(z, t, theta, a, da, dg);
        da.iter_mut().chain(dg.iter_mut()).for_each(|x| *x = -*x);
    }
}

/// Continuous adjoint: forward solve keeping only `z(T)`, then one reverse
/// ALF solve of [`AdjointSystem`] from `T` back to `t₀`. `z` is
/// re-integrated, not reconstructed, so it drifts from the forward path.
///
/// The reverse solve measures error on the whole of `y` but not on the
/// ALF derivative estimate.
pub fn grad_adjoint<F: VectorField + ?Sized>(
    p: &Problem<'_, F>,
    loss: &dyn LossFn,
) -> Result<GradientReport> {
    p.check()?;
    let (fwd, _) = driver::integrate(
        p.field,
        &p.z0,
        p.t0,
        p.t_end,
        &p.theta,
        &p.config,
        StoragePolicy::None,
    )?;
    let z_t = fwd.end_state.z.as_slice();
    let n = z_t.len();

    let mut y_t = z_t.to_vec();
    y_t.extend(loss.gradient(z_t));
    y_t.resize(y_t.len() + p.theta.len(), 0.0);
    let system = AdjointSystem::new(p.field);
    let mut reverse_cfg = p.config.clone();
    reverse_cfg.norm = ErrorNorm::State;
    let (rev, _) = driver::integrate(
        &system,
        &StateVec::new(y_t)?,
        p.t_end,
        p.t0,
        &p.theta,
        &reverse_cfg,
        StoragePolicy::None,
    )?;

    let y0 = rev.end_state.z.as_slice();
    GradientReport {
        method: Method::Adjoint,
        loss: loss.evaluate(z_t),
        dl_dz0: StateVec::new(y0[n..2 * n].to_vec())?,
        dl_dtheta: ParamVec::new(y0[2 * n..].to_vec()),
        counters: GradCounters {
            f_evals: fwd.counters.f_evals + rev.counters.f_evals,
            vjp_evals: rev.counters.f_evals,
            peak_state_units: fwd
                .counters
                .peak_state_units
                .max(rev.counters.peak_state_units),
            graph_depth_units: p.field.eval_units() as u64 * rev.grid_steps() as u64,
            grid_steps: fwd.grid_steps() as u64,
            rejected_trials: fwd.counters.rejected_trials,
        },
    }
    .check_finite()
}
