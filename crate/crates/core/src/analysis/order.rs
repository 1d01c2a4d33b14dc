use std::fmt::Write as _;

use super::svg::{self, Series};
use crate::alf::{self, AugmentedState, Damping};
use crate::driver::{self, StoragePolicy};
use crate::error::{Error, Result};
use crate::field::{l2, EvalCounter, ExactFlow, StateVec};
use crate::fmt_f64;

/// Errors below this are treated as roundoff and left out of slope fits.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRow {
    pub h: f64,
    pub err_z: f64,
    pub err_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderStudy {
    pub rows: Vec<OrderRow>,
    /// `None` when every error sits below [`ROUNDOFF_FLOOR`] ("exact").
    pub slope_z: Option<f64>,
    pub slope_v: Option<f64>,
}

/// Least-squares slope of `log₂ err` against `log₂ h`, skipping errors below
/// [`ROUNDOFF_FLOOR`]. Needs two surviving points.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| *h > 0.0 && e.is_finite() && *e >= ROUNDOFF_FLOOR)
        .map(|(h, e)| (h.log2(), e.log2()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn check_steps(h_list: &[f64]) -> Result<()> {
    if h_list.len() < 2 {
        return Err(Error::InvalidConfig("need at least two step sizes".into()));
    }
    if h_list.iter().any(|h| !(h.is_finite() && *h > 0.0))
        || h_list.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidConfig(
            "step sizes must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

impl OrderStudy {
    fn from_rows(rows: Vec<OrderRow>) -> Self {
        let slope_z = fit_slope(&rows.iter().map(|r| (r.h, r.err_z)).collect::<Vec<_>>());
        let slope_v = fit_slope(&rows.iter().map(|r| (r.h, r.err_v)).collect::<Vec<_>>());
        OrderStudy {
            rows,
            slope_z,
            slope_v,
        }
    }

    /// `h,err_z,err_v,slope_z,slope_v`; the fitted slopes repeat on every row
    /// and read `exact` when no error rose above the roundoff floor.
    pub fn to_csv(&self) -> String {
        let slope = |s: Option<f64>| s.map_or_else(|| "exact".to_string(), fmt_f64);
        let (sz, sv) = (slope(self.slope_z), slope(self.slope_v));
        let mut out = String::from("h,err_z,err_v,slope_z,slope_v\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{sz},{sv}",
                fmt_f64(r.h),
                fmt_f64(r.err_z),
                fmt_f64(r.err_v)
            );
        }
        out
    }

    pub fn to_svg(&self, title: &str) -> String {
        let series = vec![
            Series {
                name: "z error".into(),
                points: self.rows.iter().map(|r| (r.h, r.err_z)).collect(),
            },
            Series {
                name: "v error".into(),
                points: self.rows.iter().map(|r| (r.h, r.err_v)).collect(),
            },
        ];
        svg::line_plot(title, "h", "error", &series, true, true)
    }
}

/// One-step errors of `ψ` from `base` against the exact flow, for each `h`.
/// `err_v` compares `v_out` with `f(z_exact(t + h), t + h)`.
pub fn order_study<F: ExactFlow + ?Sized>(
    field: &F,
    base: &AugmentedState,
    theta: &[f64],
    h_list: &[f64],
) -> Result<OrderStudy> {
    check_steps(h_list)?;
    let mut counter = EvalCounter::default();
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let out = alf::alf_step(field, base, h, theta, Damping::NONE, &mut counter)?;
        let z_exact = field.exact(&base.z, base.t, base.t + h, theta);
        let mut v_exact = vec![0.0; z_exact.len()];
        field.eval_into(&z_exact, base.t + h, theta, &mut v_exact);
        let diff =
            |a: &[f64], b: &[f64]| l2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
        rows.push(OrderRow {
            h,
            err_z: diff(&out.z, &z_exact),
            err_v: diff(&out.v, &v_exact),
        });
    }
    Ok(OrderStudy::from_rows(rows))
}

/// End-time errors of fixed-step integrations over `[t0, t_end]`. `err_v`
/// is measured against `f(z_exact(T), T)`.
pub fn global_order_study<F: ExactFlow + ?Sized>(
    field: &F,
    z0: &StateVec,
    t0: f64,
    t_end: f64,
    theta: &[f64],
    h_list: &[f64],
) -> Result<OrderStudy> {
    check_steps(h_list)?;
    let z_exact = field.exact(z0, t0, t_end, theta);
    let mut v_exact = vec![0.0; z_exact.len()];
    field.eval_into(&z_exact, t_end, theta, &mut v_exact);
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let cfg = driver::SolverConfig::fixed(h);
        let (rec, _) = driver::integrate(field, z0, t0, t_end, theta, &cfg, StoragePolicy::None)?;
        let diff =
            |a: &[f64], b: &[f64]| l2(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
        rows.push(OrderRow {
            h,
            err_z: diff(&rec.end_state.z, &z_exact),
            err_v: diff(&rec.end_state.v, &v_exact),
        });
    }
    Ok(OrderStudy::from_rows(rows))
}

/// `2⁻ᵃ, …, 2⁻ᵇ`.
pub fn dyadic_steps(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}
