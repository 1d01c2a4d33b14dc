//! Studies: stability regions of damped ALF, truncation orders, gradient
//! accuracy on the scalar toy problem, and memory accounting. Each emits a
//! CSV and optionally an SVG.

mod order;
mod stability;
pub mod svg;
mod toy;

pub use order::{
    dyadic_steps, fit_slope, global_order_study, order_study, OrderRow, OrderStudy, ROUNDOFF_FLOOR,
};
pub use stability::{
    is_stable, stability_csv, stability_eigenvalues, stability_map, stability_map_default,
    StabilityGrid, DEFAULT_IM_RANGE, DEFAULT_RESOLUTION, DEFAULT_RE_RANGE, STABLE_MARGIN,
};
pub use toy::{
    memory_csv, memory_study, memory_svg, toy_closed_form, toy_csv, toy_study, MemoryRow, ToyRow,
    ToyStudy, STUDY_METHODS,
};
