use std::fmt::Write as _;

use rayon::prelude::*;

use super::svg::{self, Series};
use crate::driver::SolverConfig;
use crate::error::Result;
use crate::field::{LinearScalarField, ParamVec, StateVec, VectorField};
use crate::fmt_f64;
use crate::grad::{gradient, Method, Problem, SquaredNorm};

/// The backends compared by the studies, in output order.
pub const STUDY_METHODS: [Method; 4] = [Method::Mali, Method::Adjoint, Method::Aca, Method::Naive];

/// `(dL/dz₀, dL/dα)` for `L = z(T)²` under `dz/dt = αz` on `[0, T]`.
pub fn toy_closed_form(z0: f64, alpha: f64, t_end: f64) -> (f64, f64) {
    let e = (2.0 * alpha * t_end).exp();
    (2.0 * z0 * e, 2.0 * t_end * z0 * z0 * e)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRow {
    pub alpha: f64,
    pub z0: f64,
    pub t_end: f64,
    pub method: Method,
    pub grid_steps: u64,
    pub rejected_trials: u64,
    pub f_evals: u64,
    /// Relative errors against the closed form.
    pub err_dz0: f64,
    pub err_dalpha: f64,
    pub peak_state_units: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyStudy {
    pub rows: Vec<ToyRow>,
}

impl ToyStudy {
    pub fn row(&self, method: Method, t_end: f64) -> Option<&ToyRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.t_end == t_end)
    }

    pub fn to_csv(&self) -> String {
        toy_csv(&self.rows)
    }

    pub fn to_svg(&self) -> String {
        let series: Vec<Series> = STUDY_METHODS
            .iter()
            .map(|m| Series {
                name: m.to_string(),
                points: self
                    .rows
                    .iter()
                    .filter(|r| r.method == *m)
                    .map(|r| (r.t_end, r.err_dz0))
                    .collect(),
            })
            .collect();
        svg::line_plot(
            "relative error of dL/dz0",
            "T",
            "error",
            &series,
            false,
            true,
        )
    }
}

/// `alpha,z0,T,method,grid_steps,rejected_trials,f_evals,err_dz0,err_dalpha,peak_state_units`
pub fn toy_csv(rows: &[ToyRow]) -> String {
    let mut out = String::from("alpha,z0,T,method,grid_steps,rejected_trials,f_evals,err_dz0,err_dalpha,peak_state_units\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.alpha),
            fmt_f64(r.z0),
            fmt_f64(r.t_end),
            r.method,
            r.grid_steps,
            r.rejected_trials,
            r.f_evals,
            fmt_f64(r.err_dz0),
            fmt_f64(r.err_dalpha),
            r.peak_state_units
        );
    }
    out
}

/// Runs every backend in [`STUDY_METHODS`] on `L = z(T)²`, `dz/dt = αz`,
/// for each horizon. Points run in parallel; rows come back ordered by
/// horizon, then method.
pub fn toy_study(alpha: f64, z0: f64, t_list: &[f64], config: &SolverConfig) -> Result<ToyStudy> {
    let field = LinearScalarField::new();
    let jobs: Vec<(f64, Method)> = t_list
        .iter()
        .flat_map(|&t| STUDY_METHODS.iter().map(move |&m| (t, m)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(t_end, method)| {
            let p = Problem::new(
                &field,
                StateVec::new(vec![z0])?,
                0.0,
                t_end,
                ParamVec::new(vec![alpha]),
                config.clone(),
            );
            let r = gradient(method, &p, &SquaredNorm)?;
            let (dz, da) = toy_closed_form(z0, alpha, t_end);
            Ok(ToyRow {
                alpha,
                z0,
                t_end,
                method,
                grid_steps: r.counters.grid_steps,
                rejected_trials: r.counters.rejected_trials,
                f_evals: r.counters.f_evals,
                err_dz0: ((r.dl_dz0[0] - dz) / dz).abs(),
                err_dalpha: ((r.dl_dtheta[0] - da) / da).abs(),
                peak_state_units: r.counters.peak_state_units,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyStudy { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryRow {
    pub rtol: f64,
    pub atol: f64,
    pub method: Method,
    pub grid_steps: u64,
    pub peak_state_units: u64,
    pub graph_depth_units: u64,
}

/// `rtol,atol,method,grid_steps,peak_state_units,graph_depth_units`
pub fn memory_csv(rows: &[MemoryRow]) -> String {
    let mut out = String::from("rtol,atol,method,grid_steps,peak_state_units,graph_depth_units\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.rtol),
            fmt_f64(r.atol),
            r.method,
            r.grid_steps,
            r.peak_state_units,
            r.graph_depth_units
        );
    }
    out
}

pub fn memory_svg(rows: &[MemoryRow]) -> String {
    let series: Vec<Series> = STUDY_METHODS
        .iter()
        .map(|m| Series {
            name: m.to_string(),
            points: rows
                .iter()
                .filter(|r| r.method == *m)
                .map(|r| (r.grid_steps as f64, r.peak_state_units as f64))
                .collect(),
        })
        .collect();
    svg::line_plot(
        "peak stored state",
        "grid steps",
        "f64 scalars",
        &series,
        true,
        true,
    )
}

/// Peak memory of each backend as the tolerance tightens. `template`
/// supplies everything except `rtol`/`atol`.
#[allow(clippy::too_many_arguments)]
pub fn memory_study<F: VectorField + ?Sized>(
    field: &F,
    z0: &StateVec,
    t0: f64,
    t_end: f64,
    theta: &ParamVec,
    tol_list: &[(f64, f64)],
    template: &SolverConfig,
) -> Result<Vec<MemoryRow>> {
    let jobs: Vec<((f64, f64), Method)> = tol_list
        .iter()
        .flat_map(|&tol| STUDY_METHODS.iter().map(move |&m| (tol, m)))
        .collect();
    jobs.par_iter()
        .map(|&((rtol, atol), method)| {
            let cfg = SolverConfig {
                rtol,
                atol,
                ..template.clone()
            };
            let p = Problem::new(field, z0.clone(), t0, t_end, theta.clone(), cfg);
            let r = gradient(method, &p, &SquaredNorm)?;
            Ok(MemoryRow {
                rtol,
                atol,
                method,
                grid_steps: r.counters.grid_steps,
                peak_state_units: r.counters.peak_state_units,
                graph_depth_units: r.counters.graph_depth_units,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ZeroField;

    #[test]
    fn toy_orderings() {
        let cfg = SolverConfig::adaptive(1e-5, 1e-6);
        let study = toy_study(0.5, 1.0, &[0.5, 2.0, 5.0], &cfg).unwrap();
        assert_eq!(study.rows.len(), 12);
        for t in [0.5, 2.0, 5.0] {
            let mali = study.row(Method::Mali, t).unwrap();
            let aca = study.row(Method::Aca, t).unwrap();
            let adj = study.row(Method::Adjoint, t).unwrap();
            assert!(
                mali.err_dz0 <= 10.0 * aca.err_dz0.max(1e-15)
                    && aca.err_dz0 <= 10.0 * mali.err_dz0.max(1e-15)
            );
            assert!(mali.err_dz0 <= adj.err_dz0, "T = {t}");
        }
        let peaks: Vec<u64> = study
            .rows
            .iter()
            .filter(|r| r.method == Method::Mali)
            .map(|r| r.peak_state_units)
            .collect();
        assert!(peaks.windows(2).all(|w| w[0] == w[1]));
        assert!(study.to_svg().contains("polyline"));
    }

    #[test]
    fn memory_grows_only_for_stored_trajectories() {
        let f = LinearScalarField::new();
        let rows = memory_study(
            &f,
            &StateVec::new(vec![1.0]).unwrap(),
            0.0,
            2.0,
            &ParamVec::new(vec![0.5]),
            &[(1e-3, 1e-4), (1e-5, 1e-6), (1e-7, 1e-8)],
            &SolverConfig::default(),
        )
        .unwrap();
        let peaks = |m: Method| {
            rows.iter()
                .filter(|r| r.method == m)
                .map(|r| r.peak_state_units)
                .collect::<Vec<_>>()
        };
        for m in [Method::Mali, Method::Adjoint] {
            assert!(peaks(m).windows(2).all(|w| w[0] == w[1]), "{m}");
        }
        for m in [Method::Aca, Method::Naive] {
            assert!(peaks(m).windows(2).all(|w| w[0] < w[1]), "{m}");
        }
        assert!(memory_csv(&rows).starts_with("rtol,atol,method"));
    }

    #[test]
    fn zero_field_baseline_is_flat() {
        let f = ZeroField { dim: 1 };
        let cfg = SolverConfig {
            h_init: 10.0,
            h_max: 10.0,
            ..SolverConfig::default()
        };
        let rows = memory_study(
            &f,
            &StateVec::new(vec![1.0]).unwrap(),
            0.0,
            1.0,
            &ParamVec::zeros(0),
            &[(1e-3, 1e-4), (1e-7, 1e-8)],
            &cfg,
        )
        .unwrap();
        for m in STUDY_METHODS {
            let p: Vec<_> = rows
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.peak_state_units)
                .collect();
            assert_eq!(p[0], p[1], "{m}");
        }
    }
}
