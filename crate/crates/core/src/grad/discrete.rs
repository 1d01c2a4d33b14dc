//! MALI, ACA and naive backpropagation. They share the per-step adjoint
//! update and differ only in where the backward pass gets each step's
//! midpoint argument `k₁` from.

use super::{GradCounters, GradientReport, LossFn, Method, Problem};
use crate::alf::{self, Damping};
use crate::driver::{self, IntegrationRecord, StoragePolicy};
use crate::error::{Error, Result};
use crate::field::{self, EvalCounter, ParamVec, StateVec, VectorField};

/// Cotangents of the augmented state plus the accumulated `dL/dθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub a_z: Vec<f64>,
    pub a_v: Vec<f64>,
    pub g_theta: Vec<f64>,
}

impl AdjointState {
    /// State at `T`: the loss only sees `z(T)`, so `a_v` starts at zero.
    pub fn at_end(loss_grad: Vec<f64>, dim_params: usize) -> Self {
        let n = loss_grad.len();
        AdjointState {
            a_z: loss_grad,
            a_v: vec![0.0; n],
            g_theta: vec![0.0; dim_params],
        }
    }

    /// Pulls the cotangents back through one ALF step of size `h` whose
    /// midpoint evaluation was `f(k₁, s₁)`. One vjp.
    #[allow(clippy::too_many_arguments)]
    pub fn step_back<F: VectorField + ?Sized>(
        &mut self,
        field: &F,
        k1: &[f64],
        s1: f64,
        h: f64,
        theta: &[f64],
        eta: Damping,
        counter: &mut EvalCounter,
    ) -> Result<()> {
        let eta = eta.get();
        let half = 0.5 * h;
        // cotangent of v_out once z_out = k₁ + v_out·h/2 is accounted for
        let avt: Vec<f64> = self
            .a_v
            .iter()
            .zip(&self.a_z)
            .map(|(av, az)| av + az * half)
            .collect();
        let au: Vec<f64> = avt.iter().map(|x| 2.0 * eta * x).collect();
        let (jz, jth) = field::vjp(field, k1, s1, theta, &au, counter)?;
        for (az, j) in self.a_z.iter_mut().zip(jz.iter()) {
            *az += j;
        }
        for (g, j) in self.g_theta.iter_mut().zip(jth.iter()) {
            *g += j;
        }
        for ((av, t), az) in self.a_v.iter_mut().zip(&avt).zip(&self.a_z) {
            *av = (1.0 - 2.0 * eta) * t + az * half;
        }
        Ok(())
    }

    /// Folds `a_v(t₀)` through `v₀ = f(z₀, t₀, θ)`. One vjp.
    pub fn couple_v0<F: VectorField + ?Sized>(
        &mut self,
        field: &F,
        z0: &[f64],
        t0: f64,
        theta: &[f64],
        counter: &mut EvalCounter,
    ) -> Result<()> {
        let (jz, jth) = field::vjp(field, z0, t0, theta, &self.a_v, counter)?;
        for (az, j) in self.a_z.iter_mut().zip(jz.iter()) {
            *az += j;
        }
        for (g, j) in self.g_theta.iter_mut().zip(jth.iter()) {
            *g += j;
        }
        Ok(())
    }
}

fn k1_of(z: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    z.iter().zip(v).map(|(zi, vi)| zi + vi * 0.5 * h).collect()
}

struct Backward<'p, 'a, F: ?Sized> {
    problem: &'p Problem<'a, F>,
    adj: AdjointState,
    counter: EvalCounter,
}

impl<'p, 'a, F: VectorField + ?Sized> Backward<'p, 'a, F> {
    fn new(problem: &'p Problem<'a, F>, record: &IntegrationRecord, loss: &dyn LossFn) -> Self {
        Backward {
            problem,
            adj: AdjointState::at_end(loss.gradient(&record.end_state.z), problem.theta.len()),
            counter: EvalCounter::default(),
        }
    }

    fn step(&mut self, k1: &[f64], t_in: f64, h: f64) -> Result<()> {
        let p = self.problem;
        self.adj.step_back(
            p.field,
            k1,
            t_in + 0.5 * h,
            h,
            &p.theta,
            p.config.damping,
            &mut self.counter,
        )
    }

    fn finish(
        mut self,
        method: Method,
        record: &IntegrationRecord,
        loss: &dyn LossFn,
        extra_f_evals: u64,
        peak_state_units: u64,
        graph_depth_units: u64,
    ) -> Result<GradientReport> {
        let p = self.problem;
        if p.options.couple_v0 {
            self.adj
                .couple_v0(p.field, &p.z0, p.t0, &p.theta, &mut self.counter)?;
        }
        GradientReport {
            method,
            loss: loss.evaluate(&record.end_state.z),
            dl_dz0: StateVec::new(self.adj.a_z)?,
            dl_dtheta: ParamVec::new(self.adj.g_theta),
            counters: GradCounters {
                f_evals: record.counters.f_evals + extra_f_evals + self.counter.evals,
                vjp_evals: self.counter.vjps,
                peak_state_units,
                graph_depth_units,
                grid_steps: record.grid_steps() as u64,
                rejected_trials: record.counters.rejected_trials,
            },
        }
        .check_finite()
    }
}

// running (a_z, a_v) on top of whatever the forward pass held
fn backward_peak(record: &IntegrationRecord, dim: usize) -> u64 {
    record.counters.peak_state_units + 2 * dim as u64
}

fn forward<F: VectorField + ?Sized>(
    p: &Problem<'_, F>,
    storage: StoragePolicy,
) -> Result<(IntegrationRecord, driver::CheckpointLog)> {
    p.check()?;
    driver::integrate(p.field, &p.z0, p.t0, p.t_end, &p.theta, &p.config, storage)
}

/// Constant-memory gradient: keeps only the end state and the grid, and
/// rebuilds each `(zᵢ₋₁, vᵢ₋₁)` with `ψ⁻¹` on the way back.
pub fn grad_mali<F: VectorField + ?Sized>(
    p: &Problem<'_, F>,
    loss: &dyn LossFn,
) -> Result<GradientReport> {
    let (record, _) = forward(p, StoragePolicy::None)?;
    let mut bw = Backward::new(p, &record, loss);
    let mut inverse_counter = EvalCounter::default();
    let grid = &record.t_grid;
    let mut z = record.end_state.z.as_slice().to_vec();
    let mut v = record.end_state.v.as_slice().to_vec();
    for i in (1..grid.len()).rev() {
        let t_in = grid[i - 1];
        let h = grid[i] - t_in;
        let (z_in, v_in) = alf::inverse_kernel(
            p.field,
            &z,
            &v,
            t_in,
            h,
            &p.theta,
            p.config.damping,
            &mut inverse_counter,
        )
        .map_err(|_| Error::ReconstructionDiverged { step: i })?;
        bw.step(&k1_of(&z_in, &v_in, h), t_in, h)?;
        z = z_in;
        v = v_in;
    }
    let peak = backward_peak(&record, p.z0.len());
    let depth = p.field.eval_units() as u64 * record.grid_steps() as u64;
    bw.finish(
        Method::Mali,
        &record,
        loss,
        inverse_counter.evals,
        peak,
        depth,
    )
}

/// Checkpointed gradient: stores `(zᵢ, vᵢ)` at every grid point and replays
/// each step locally.
pub fn grad_aca<F: VectorField + ?Sized>(
    p: &Problem<'_, F>,
    loss: &dyn LossFn,
) -> Result<GradientReport> {
    let (record, log) = forward(p, StoragePolicy::Checkpoints)?;
    let mut bw = Backward::new(p, &record, loss);
    let grid = &record.t_grid;
    for i in (1..grid.len()).rev() {
        let t_in = grid[i - 1];
        let h = grid[i] - t_in;
        let s = &log.states[i - 1];
        bw.step(&k1_of(&s.z, &s.v, h), t_in, h)?;
    }
    let peak = backward_peak(&record, p.z0.len());
    let depth = p.field.eval_units() as u64 * record.grid_steps() as u64;
    bw.finish(Method::Aca, &record, loss, 0, peak, depth)
}

/// Backpropagation through the whole forward tape. Rejected trials hold
/// memory and deepen the graph but contribute nothing to the gradient.
pub fn grad_naive<F: VectorField + ?Sized>(
    p: &Problem<'_, F>,
    loss: &dyn LossFn,
) -> Result<GradientReport> {
    let (record, log) = forward(p, StoragePolicy::FullTape)?;
    let mut bw = Backward::new(p, &record, loss);
    for entry in log.tape.iter().rev() {
        bw.step(&entry.k1, entry.t_in, entry.h)?;
    }
    let peak = backward_peak(&record, p.z0.len());
    let c = &record.counters;
    let trials = c.accepted_steps + c.rejected_trials;
    let depth =
        p.field.eval_units() as u64 * record.grid_steps() as u64 * trials / c.accepted_steps.max(1);
    bw.finish(Method::Naive, &record, loss, 0, peak, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::SolverConfig;
    use crate::field::{Dynamics, MlpField};

    #[test]
    fn adjoint_starts_with_zero_a_v() {
        let a = AdjointState::at_end(vec![1.0, -2.0], 3);
        assert_eq!(a.a_v, vec![0.0, 0.0]);
        assert_eq!(a.g_theta, vec![0.0; 3]);
    }

    // d z_out / d z_in for one step on f = αz, η = 1, by hand:
    // k = z + v h/2, u = αk, v' = 2u − v, z' = k + v' h/2
    // ∂k/∂z = 1, ∂v'/∂z = 2α, so ∂z'/∂z = 1 + αh
    #[test]
    fn one_step_pullback_on_linear_field() {
        let f = crate::field::LinearScalarField::new();
        let (alpha, h) = (0.7, 0.3);
        let mut adj = AdjointState::at_end(vec![1.0], 1);
        let mut c = EvalCounter::default();
        let (z, v) = (1.2, 0.4);
        let k = z + v * h / 2.0;
        adj.step_back(&f, &[k], 0.15, h, &[alpha], Damping::NONE, &mut c)
            .unwrap();
        assert!((adj.a_z[0] - (1.0 + alpha * h)).abs() < 1e-15);
        // ∂z'/∂v = h/2 + (∂v'/∂v)(h/2) with ∂v'/∂v = 2α h/2 − 1
        let dzdv = h / 2.0 + (alpha * h - 1.0) * h / 2.0;
        assert!((adj.a_v[0] - dzdv).abs() < 1e-15);
        // ∂z'/∂α = (h/2)·2k
        assert!((adj.g_theta[0] - h * k).abs() < 1e-15);
        assert_eq!(c.vjps, 1);
    }

    #[test]
    fn mali_matches_aca_on_short_damped_run() {
        let f = MlpField::new(2, &[8]).unwrap();
        let theta = f.init_params(11);
        // ψ⁻¹ amplifies roundoff by 1/|1 − 2η| per step, so keep the run short
        let cfg = SolverConfig::fixed(0.05).with_damping(Damping::new(0.9).unwrap());
        let p = Problem::new(
            &f,
            StateVec::new(vec![0.5, -0.3]).unwrap(),
            0.0,
            1.0,
            theta,
            cfg,
        );
        let m = grad_mali(&p, &super::super::SquaredNorm).unwrap();
        let a = grad_aca(&p, &super::super::SquaredNorm).unwrap();
        assert!(m.rel_diff(&a) <= 1e-9, "{}", m.rel_diff(&a));
        assert_eq!(m.dl_dtheta.len(), f.dim_params());
    }
}
