use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use super::svg;
use crate::error::{Error, Result};
use crate::fmt_f64;

/// A cell counts as stable only if both `|λ±| < 1 − STABLE_MARGIN`. Points
/// on the unit circle up to roundoff are boundary, not stable.
pub const STABLE_MARGIN: f64 = 1e-12;

pub const DEFAULT_RE_RANGE: (f64, f64) = (-3.0, 1.0);
pub const DEFAULT_IM_RANGE: (f64, f64) = (-2.0, 2.0);
pub const DEFAULT_RESOLUTION: usize = 401;

/// Eigenvalues of the damped ALF step map on `dz/dt = σz`:
///
/// ```text
/// λ± = 1 + η(hσ − 1) ± √(η[2hσ + η(hσ − 1)²])
/// ```
///
/// with the principal square root.
pub fn stability_eigenvalues(h_sigma: Complex64, eta: f64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    let centre = one + eta * (h_sigma - one);
    let root = (eta * (2.0 * h_sigma + eta * (h_sigma - one) * (h_sigma - one))).sqrt();
    (centre + root, centre - root)
}

pub fn is_stable(h_sigma: Complex64, eta: f64) -> bool {
    let (a, b) = stability_eigenvalues(h_sigma, eta);
    a.norm().max(b.norm()) < 1.0 - STABLE_MARGIN
}

/// Stable predicate sampled on a rectangle of `hσ` values, nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityGrid {
    pub eta: f64,
    pub re_range: (f64, f64),
    pub im_range: (f64, f64),
    pub resolution: usize,
    /// Row-major, rows run along the imaginary axis from `im_range.0`.
    pub stable: Vec<bool>,
}

impl StabilityGrid {
    pub fn point(&self, i_re: usize, i_im: usize) -> Complex64 {
        let step = |(lo, hi): (f64, f64), i: usize| {
            lo + (hi - lo) * i as f64 / (self.resolution - 1) as f64
        };
        Complex64::new(step(self.re_range, i_re), step(self.im_range, i_im))
    }

    pub fn cell(&self, i_re: usize, i_im: usize) -> bool {
        self.stable[i_im * self.resolution + i_re]
    }

    pub fn stable_cells(&self) -> usize {
        self.stable.iter().filter(|s| **s).count()
    }

    /// Stable cell count times the area of one cell.
    pub fn stable_area(&self) -> f64 {
        let d = (self.resolution - 1) as f64;
        let cell =
            (self.re_range.1 - self.re_range.0) / d * (self.im_range.1 - self.im_range.0) / d;
        self.stable_cells() as f64 * cell
    }

    /// Stable cells drawn as filled horizontal runs.
    pub fn to_svg(&self) -> String {
        let mut rects = Vec::new();
        for i_im in 0..self.resolution {
            let mut i_re = 0;
            while i_re < self.resolution {
                if !self.cell(i_re, i_im) {
                    i_re += 1;
                    continue;
                }
                let start = i_re;
                while i_re < self.resolution && self.cell(i_re, i_im) {
                    i_re += 1;
                }
                rects.push((start, i_im, i_re - start));
            }
        }
        svg::region_plot(
            &format!("stable set, eta = {}", self.eta),
            self.re_range,
            self.im_range,
            self.resolution,
            &rects,
        )
    }
}

pub fn stability_map(
    eta: f64,
    re_range: (f64, f64),
    im_range: (f64, f64),
    resolution: usize,
) -> Result<StabilityGrid> {
    if resolution < 2 {
        return Err(Error::InvalidConfig("resolution must be at least 2".into()));
    }
    if !(re_range.0 < re_range.1 && im_range.0 < im_range.1) {
        return Err(Error::InvalidConfig("empty stability window".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "eta must lie in (0, 1], got {eta}"
        )));
    }
    let mut grid = StabilityGrid {
        eta,
        re_range,
        im_range,
        resolution,
        stable: Vec::new(),
    };
    let rows: Vec<Vec<bool>> = (0..resolution)
        .into_par_iter()
        .map(|i_im| {
            (0..resolution)
                .map(|i_re| is_stable(grid.point(i_re, i_im), eta))
                .collect()
        })
        .collect();
    grid.stable = rows.concat();
    Ok(grid)
}

/// The default window and resolution.
pub fn stability_map_default(eta: f64) -> Result<StabilityGrid> {
    stability_map(eta, DEFAULT_RE_RANGE, DEFAULT_IM_RANGE, DEFAULT_RESOLUTION)
}

/// `eta,re_min,re_max,im_min,im_max,resolution,stable_cells,stable_area`
pub fn stability_csv(grids: &[StabilityGrid]) -> String {
    let mut out =
        String::from("eta,re_min,re_max,im_min,im_max,resolution,stable_cells,stable_area\n");
    for g in grids {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(g.eta),
            fmt_f64(g.re_range.0),
            fmt_f64(g.re_range.1),
            fmt_f64(g.im_range.0),
            fmt_f64(g.im_range.1),
            g.resolution,
            g.stable_cells(),
            fmt_f64(g.stable_area())
        );
    }
    out
}
