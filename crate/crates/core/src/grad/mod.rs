//! Gradients of a scalar loss on the end state, `L(z(T))`, with respect to
//! `z₀` and `θ`.
//!
//! | method    | trajectory in the backward pass        | memory in `N_t` |
//! |-----------|----------------------------------------|-----------------|
//! | `mali`    | rebuilt by `ψ⁻¹` from the end state    | constant        |
//! | `aca`     | checkpointed `(zᵢ, vᵢ)`                | linear          |
//! | `naive`   | full forward tape, rejected trials too | linear, larger  |
//! | `adjoint` | re-integrated backwards in time        | constant        |
//! | `fd`      | none (central differences)             | constant        |
//!
//! MALI, ACA and naive all apply the exact reverse-mode derivative of each
//! accepted ALF step, so they agree with each other to roundoff. Step sizes
//! are treated as constants. The adjoint backend solves the continuous
//! adjoint ODE and carries its own discretization error.

mod adjoint;
mod discrete;
mod fd;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

pub use adjoint::{grad_adjoint, AdjointSystem};
pub use discrete::{grad_aca, grad_mali, grad_naive, AdjointState};
pub use fd::{grad_fd_oracle, FD_COORDINATE_LIMIT};

use crate::driver::SolverConfig;
use crate::error::{Error, Result};
use crate::field::{ParamVec, StateVec, VectorField};
use crate::fmt_f64;

/// Scalar loss on the end state.
pub trait LossFn: Sync {
    fn evaluate(&self, z: &[f64]) -> f64;
    fn gradient(&self, z: &[f64]) -> Vec<f64>;
}

/// `L(z) = Σ zᵢ²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredNorm;

impl LossFn for SquaredNorm {
    fn evaluate(&self, z: &[f64]) -> f64 {
        z.iter().map(|x| x * x).sum()
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|x| 2.0 * x).collect()
    }
}

/// `L(z) = ⟨w, z⟩`.
#[derive(Debug, Clone, Default)]
pub struct LinearLoss {
    pub weights: Vec<f64>,
}

impl LossFn for LinearLoss {
    fn evaluate(&self, z: &[f64]) -> f64 {
        self.weights.iter().zip(z).map(|(w, x)| w * x).sum()
    }

    fn gradient(&self, _z: &[f64]) -> Vec<f64> {
        self.weights.clone()
    }
}

/// How the discrete backends turn a grid step into an adjoint update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum StepAdjoint {
    /// Reverse-mode derivative of the step's own arithmetic.
    #[default]
    Exact,
    /// Trapezoidal quadrature of the continuous adjoint between grid
    /// points. Reserved; requesting it is an error.
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradOptions {
    /// Propagate `a_v(t₀)` through `v₀ = f(z₀, t₀, θ)`. Turning this off
    /// leaves `dL/dz₀ = a_z(t₀)`.
    pub couple_v0: bool,
    pub step_adjoint: StepAdjoint,
}

impl Default for GradOptions {
    fn default() -> Self {
        GradOptions {
            couple_v0: true,
            step_adjoint: StepAdjoint::Exact,
        }
    }
}

/// One gradient problem: field, initial value, horizon, parameters, solver.
#[derive(Debug, Clone)]
pub struct Problem<'a, F: ?Sized> {
    pub field: &'a F,
    pub z0: StateVec,
    pub t0: f64,
    pub t_end: f64,
    pub theta: ParamVec,
    pub config: SolverConfig,
    pub options: GradOptions,
}

impl<'a, F: VectorField + ?Sized> Problem<'a, F> {
    pub fn new(
        field: &'a F,
        z0: StateVec,
        t0: f64,
        t_end: f64,
        theta: ParamVec,
        config: SolverConfig,
    ) -> Self {
        Problem {
            field,
            z0,
            t0,
            t_end,
            theta,
            config,
            options: GradOptions::default(),
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        self.config.validate()?;
        if self.options.step_adjoint != StepAdjoint::Exact {
            return Err(Error::InvalidConfig(
                "trapezoidal step adjoint is not implemented".into(),
            ));
        }
        if self.theta.len() != self.field.dim_params() {
            return Err(Error::Dimension {
                what: "parameters",
                expected: self.field.dim_params(),
                got: self.theta.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mali,
    Adjoint,
    Aca,
    Naive,
    Fd,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mali,
        Method::Adjoint,
        Method::Aca,
        Method::Naive,
        Method::Fd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mali => "mali",
            Method::Adjoint => "adjoint",
            Method::Aca => "aca",
            Method::Naive => "naive",
            Method::Fd => "fd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GradCounters {
    pub f_evals: u64,
    pub vjp_evals: u64,
    pub peak_state_units: u64,
    pub graph_depth_units: u64,
    /// Accepted grid steps of the forward pass.
    pub grid_steps: u64,
    pub rejected_trials: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub method: Method,
    pub loss: f64,
    pub dl_dz0: StateVec,
    pub dl_dtheta: ParamVec,
    pub counters: GradCounters,
}

impl GradientReport {
    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.dl_dz0.iter().chain(self.dl_dtheta.iter()).copied()
    }

    /// Max-norm difference relative to `reference`'s max-norm.
    pub fn rel_diff(&self, reference: &GradientReport) -> f64 {
        let num = self
            .values()
            .zip(reference.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let den = reference.values().map(f64::abs).fold(0.0, f64::max);
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }

    pub(crate) fn check_finite(self) -> Result<Self> {
        if self.loss.is_finite() && self.values().all(f64::is_finite) {
            Ok(self)
        } else {
            Err(Error::NonFinite {
                stage: "gradient",
                t: f64::NAN,
                z: self.dl_dz0.as_slice().to_vec(),
            })
        }
    }
}

/// Runs one backend.
pub fn gradient<F: VectorField + ?Sized>(
    method: Method,
    problem: &Problem<'_, F>,
    loss: &dyn LossFn,
) -> Result<GradientReport> {
    match method {
        Method::Mali => grad_mali(problem, loss),
        Method::Adjoint => grad_adjoint(problem, loss),
        Method::Aca => grad_aca(problem, loss),
        Method::Naive => grad_naive(problem, loss),
        Method::Fd => grad_fd_oracle(problem, loss),
    }
}

/// One row per report:
/// `method,n_z,n_theta,loss,dL_dz0_0..,dL_dtheta_0..,f_evals,vjp_evals,peak_state_units,graph_depth_units,grid_steps,rejected_trials`.
/// All reports must share dimensions.
pub fn reports_csv(reports: &[GradientReport]) -> String {
    let mut out = String::from("method,n_z,n_theta,loss");
    if let Some(r) = reports.first() {
        for i in 0..r.dl_dz0.len() {
            let _ = write!(out, ",dL_dz0_{i}");
        }
        for i in 0..r.dl_dtheta.len() {
            let _ = write!(out, ",dL_dtheta_{i}");
        }
    }
    out.push_str(
        ",f_evals,vjp_evals,peak_state_units,graph_depth_units,grid_steps,rejected_trials\n",
    );
    for r in reports {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.method,
            r.dl_dz0.len(),
            r.dl_dtheta.len(),
            fmt_f64(r.loss)
        );
        for x in r.values() {
            let _ = write!(out, ",{}", fmt_f64(x));
        }
        let c = &r.counters;
        let _ = writeln!(
            out,
            ",{},{},{},{},{},{}",
            c.f_evals,
            c.vjp_evals,
            c.peak_state_units,
            c.graph_depth_units,
            c.grid_steps,
            c.rejected_trials
        );
    }
    out
}

/// `method,rel_diff_fd,rel_diff_mali,rel_diff_aca`: max-norm relative
/// differences against the finite-difference oracle and the two discrete
/// checkpointing backends. Empty cells where the reference is missing.
pub fn comparison_csv(reports: &[GradientReport]) -> String {
    let find = |m: Method| reports.iter().find(|r| r.method == m);
    let refs = [find(Method::Fd), find(Method::Mali), find(Method::Aca)];
    let mut out = String::from("method,rel_diff_fd,rel_diff_mali,rel_diff_aca\n");
    for r in reports {
        out.push_str(r.method.as_str());
        for reference in refs {
            out.push(',');
            if let Some(reference) = reference {
                out.push_str(&fmt_f64(r.rel_diff(reference)));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::LinearScalarField;

    fn toy(
        z0: f64,
        alpha: f64,
        t_end: f64,
        config: SolverConfig,
    ) -> (LinearScalarField, StateVec, ParamVec, SolverConfig, f64) {
        (
            LinearScalarField::new(),
            StateVec::new(vec![z0]).unwrap(),
            ParamVec::new(vec![alpha]),
            config,
            t_end,
        )
    }

    // closed form for L = z(T)², z(T) = z₀ e^{αT}
    fn closed_form(z0: f64, alpha: f64, t: f64) -> (f64, f64) {
        let e = (2.0 * alpha * t).exp();
        (2.0 * z0 * e, 2.0 * t * z0 * z0 * e)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn closed_form_values() {
        let (dz, da) = closed_form(2.0, 0.1, 1.0);
        assert!((dz - 4.885611).abs() < 1e-6);
        assert!((da - 9.771222).abs() < 1e-6);
    }

    #[test]
    fn toy_gradients_match_closed_form() {
        let (f, z0, th, cfg, t) = toy(2.0, 0.1, 1.0, SolverConfig::adaptive(1e-5, 1e-6));
        let p = Problem::new(&f, z0, 0.0, t, th, cfg);
        let (dz, da) = closed_form(2.0, 0.1, 1.0);
        for m in [Method::Mali, Method::Aca, Method::Naive, Method::Adjoint] {
            let r = gradient(m, &p, &SquaredNorm).unwrap();
            assert!(rel(r.dl_dz0[0], dz) <= 1e-4, "{m}: {}", r.dl_dz0[0]);
            assert!(rel(r.dl_dtheta[0], da) <= 1e-4, "{m}: {}", r.dl_dtheta[0]);
        }
    }

    #[test]
    fn fd_oracle_on_fine_fixed_grid() {
        let (f, z0, th, _, t) = toy(2.0, 0.1, 1.0, SolverConfig::default());
        let p = Problem::new(&f, z0, 0.0, t, th, SolverConfig::fixed(1e-2));
        let r = grad_fd_oracle(&p, &SquaredNorm).unwrap();
        let (dz, da) = closed_form(2.0, 0.1, 1.0);
        assert!(rel(r.dl_dz0[0], dz) <= 1e-6);
        assert!(rel(r.dl_dtheta[0], da) <= 1e-6);
    }

    #[test]
    fn frozen_dynamics_are_exact() {
        let (f, z0, th, cfg, t) = toy(1.5, 0.0, 2.0, SolverConfig::adaptive(1e-5, 1e-6));
        let p = Problem::new(&f, z0, 0.0, t, th, cfg);
        for m in [Method::Mali, Method::Aca, Method::Naive, Method::Adjoint] {
            let r = gradient(m, &p, &SquaredNorm).unwrap();
            assert!((r.dl_dz0[0] - 3.0).abs() <= 1e-10, "{m}");
            assert!(
                (r.dl_dtheta[0] - 2.0 * 2.0 * 1.5 * 1.5).abs() <= 1e-10,
                "{m}: {}",
                r.dl_dtheta[0]
            );
        }
    }

    #[test]
    fn zero_loss_gradient_gives_zero() {
        let (f, z0, th, cfg, t) = toy(1.0, 0.3, 1.0, SolverConfig::fixed(0.1));
        let p = Problem::new(&f, z0, 0.0, t, th, cfg);
        let zero = LinearLoss { weights: vec![0.0] };
        for m in Method::ALL {
            let r = gradient(m, &p, &zero).unwrap();
            assert!(r.values().all(|x| x == 0.0), "{m}");
        }
    }

    #[test]
    fn discrete_backends_agree() {
        let (f, z0, th, cfg, t) = toy(1.0, 0.5, 5.0, SolverConfig::adaptive(1e-5, 1e-6));
        let p = Problem::new(&f, z0, 0.0, t, th, cfg);
        let mali = grad_mali(&p, &SquaredNorm).unwrap();
        let aca = grad_aca(&p, &SquaredNorm).unwrap();
        let naive = grad_naive(&p, &SquaredNorm).unwrap();
        assert!(aca.rel_diff(&mali) <= 1e-9);
        assert!(naive.rel_diff(&aca) <= 1e-12);
        assert_eq!(mali.counters.grid_steps, aca.counters.grid_steps);
        assert!(naive.counters.graph_depth_units >= aca.counters.graph_depth_units);
        assert_eq!(mali.counters.vjp_evals, mali.counters.grid_steps + 1);
    }

    #[test]
    fn memory_profiles() {
        let f = LinearScalarField::new();
        let peak = |m: Method, t: f64| {
            let p = Problem::new(
                &f,
                StateVec::new(vec![1.0]).unwrap(),
                0.0,
                t,
                ParamVec::new(vec![0.5]),
                SolverConfig::adaptive(1e-5, 1e-6),
            );
            gradient(m, &p, &SquaredNorm)
                .unwrap()
                .counters
                .peak_state_units
        };
        for m in [Method::Mali, Method::Adjoint] {
            assert_eq!(peak(m, 1.0), peak(m, 5.0));
        }
        assert!(peak(Method::Aca, 5.0) > peak(Method::Aca, 1.0));
        assert!(peak(Method::Naive, 5.0) >= peak(Method::Aca, 5.0));
    }

    #[test]
    fn decoupled_v0_leaves_a_z() {
        let (f, z0, th, cfg, t) = toy(1.0, 0.5, 1.0, SolverConfig::fixed(0.1));
        let mut p = Problem::new(&f, z0, 0.0, t, th, cfg);
        let coupled = grad_mali(&p, &SquaredNorm).unwrap();
        p.options.couple_v0 = false;
        let bare = grad_mali(&p, &SquaredNorm).unwrap();
        assert_eq!(bare.counters.vjp_evals + 1, coupled.counters.vjp_evals);
        // v₀ = α z₀, so the coupling adds α·a_v(t₀)
        assert!((coupled.dl_dz0[0] - bare.dl_dz0[0]).abs() > 0.0);
        p.options.step_adjoint = StepAdjoint::Trapezoidal;
        assert!(grad_mali(&p, &SquaredNorm).is_err());
    }

    #[test]
    fn degenerate_horizon_is_an_error() {
        let (f, z0, th, cfg, _) = toy(1.0, 0.5, 1.0, SolverConfig::default());
        let p = Problem::new(&f, z0, 1.0, 1.0, th, cfg);
        for m in Method::ALL {
            assert!(gradient(m, &p, &SquaredNorm).is_err(), "{m}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("backprop".parse::<Method>().is_err());
    }

    #[test]
    fn csv_layout() {
        let (f, z0, th, cfg, t) = toy(2.0, 0.1, 1.0, SolverConfig::fixed(0.25));
        let p = Problem::new(&f, z0, 0.0, t, th, cfg);
        let reports: Vec<_> = [Method::Mali, Method::Aca, Method::Fd]
            .into_iter()
            .map(|m| gradient(m, &p, &SquaredNorm).unwrap())
            .collect();
        let csv = reports_csv(&reports);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,n_z,n_theta,loss,dL_dz0_0,dL_dtheta_0,f_evals,vjp_evals,peak_state_units,graph_depth_units,grid_steps,rejected_trials"
        );
        assert!(lines.next().unwrap().starts_with("mali,1,1,"));
        let cmp = comparison_csv(&reports);
        assert_eq!(cmp.lines().count(), 4);
        assert!(cmp.lines().nth(1).unwrap().starts_with("mali,"));
    }

    #[test]
    fn squared_norm_gradient_matches_differences() {
        let z = [0.3, -1.7, 2.2];
        let g = SquaredNorm.gradient(&z);
        for i in 0..3 {
            let h = 1e-6;
            let mut zp = z;
            zp[i] += h;
            let mut zm = z;
            zm[i] -= h;
            let fd = (SquaredNorm.evaluate(&zp) - SquaredNorm.evaluate(&zm)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs());
        }
    }
}
