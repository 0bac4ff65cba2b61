//! Laplace transforms of first-passage times downwards for time-changed,
//! possibly killed, spectrally positive Levy processes whose reciprocal
//! velocity `1/A` is completely monotone.
//!
//! The model is the pair `(psi - p, A)`: a Laplace exponent `psi` with a
//! separate killing rate `p`, and a velocity `A = 1/gamma_hat` given through
//! the representing measure `gamma` of `1/A`. For issue point `x` and level
//! `l <= x`, the transform `E_x[e^{-q T_l^-}; T_l^- < lifetime]` is a ratio
//! of Laplace transforms of a scale measure carried by `[psi^{-1}(p), oo)`,
//! which this crate constructs by several routes (constructive series,
//! lattice recursion, a Volterra density solver, two closed forms) and
//! cross-validates with a seeded Monte Carlo simulator of the underlying
//! path construction.

// `!(x > 0.0)` deliberately rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cm;
pub mod error;
pub mod exponent;
pub mod measure;
pub mod model;
pub mod presets;
pub mod quad;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use exponent::{explosion_safe, JumpDensity, LevyExponent};
pub use measure::{Grid, Measure};
pub use model::{BoundaryMembership, GammaShape, Interval, Model};
pub use simulate::{
    estimate_fptd, estimate_fptd_many, simulate_path, trace_path, FptdEstimate, PathState,
    SimOptions,
};
pub use solver::{
    classify, csbp_scale, csbp_scale_from, fptd_laplace, lattice_scale, levy_scale, q0_scale,
    scale_residual, series_scale, tilted_series_scale, volterra_scale, Classification,
    ScaleMeasure, SeriesOptions, SolveStatus, Verdict, VolterraGrid,
};
