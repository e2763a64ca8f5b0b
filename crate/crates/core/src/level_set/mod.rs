//! Narrow-band level-set evolution.
//!
//! `φ > 0` marks the foreground. Each step moves `φ` on the band
//! `{|φ| < τ}` by `dt · (μκ - ν + data)`, with `dt` chosen so no value moves
//! more than 0.45 pixels, and periodically restores the signed-distance
//! property. Evolution stops once the foreground area settles.

mod baseline;
mod convergence;
mod evolve;
mod field;
mod reinit;

pub use baseline::{baseline_cv_force, evolve_chan_vese, region_means, ChanVeseForce, CvMode};
pub use convergence::ConvergenceMonitor;
pub use evolve::{
    cfl_dt, evolve, evolve_fields, evolve_with, force_field, trace_csv, EvolveOutcome,
    KsvdRegionForce, RegionForce, SegParams, TraceRow, CFL,
};
pub use field::{
    curvature, curvature_at, delta, gradient_magnitude, heaviside, init_phi_checkerboard,
    LevelSetField, MAX_CURVATURE,
};
pub use reinit::sussman_reinit;
