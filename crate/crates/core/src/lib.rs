//! Numerics for time-changes of Heisenberg nilflows.
//!
//! A time-change of a Heisenberg nilflow is a special flow over the linear
//! skew-shift `f(x, y) = (x + α, y + x + β)` of the 2-torus. This crate
//! provides:
//!
//! - [`heisenberg`]: group arithmetic, nilflows and the return map to the
//!   torus section;
//! - [`skewshift`]: long-orbit Birkhoff sums, fiber stretching and
//!   sublevel-set estimates;
//! - [`cohomology`]: invariant distributions, the cohomological equation and
//!   the mixing/trivial classification of roofs;
//! - [`specialflow`]: the special flow, its invariant measure and
//!   correlation estimates.

// Guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cohomology;
pub mod dd;
pub mod error;
pub mod heisenberg;
pub mod io;
pub mod skewshift;
pub mod specialflow;
pub mod trig;

pub use num_complex::Complex64;

pub use cohomology::{
    classify_roof, convergent_times, decompose_components, ergodic_sum_l2, evaluate_distribution, solve_component,
    solve_roof, sobolev_norm, uniform_bound_profile, uniform_bound_scan, Classification, ComponentSolution,
    ComponentSpectrum, ConvergentTimes, Decomposition, DistributionValue, OrbitLabel, RoofSolution, Verdict,
};
pub use error::{MixlabError, Result};
pub use heisenberg::{
    group_exp, group_log, group_mul, nilflow_at, poincare_return, poincare_return_numeric, reduce_mod_lattice,
    timechange_return_time, AlgebraVector, HeisenbergElement, Lattice, LatticeElement, NilPoint, SectionReturn,
};
pub use io::{read_roof, roof_from_json, roof_to_json, ClassificationReport, RoofFile, RoofSpec};
pub use skewshift::{
    birkhoff_sublevel_measure, birkhoff_sum, decoupling_difference, fiber_coefficients, rotation_transfer, stretch,
    sublevel_measure_1d, sublevel_measure_2d, sublevel_power_law, visit_fraction, Arc, FiberCoefficients,
    OrbitCursor, PhaseAccumulator, PowerLawFit, Precision, RotationTransfer, SkewShift, SublevelEstimate, TorusPoint,
};
pub use specialflow::{
    certify_roof, correlate_cubes, discrete_iteration_bounds, fiber_mixing_profile, flow_at, hit_count,
    hitting_complement_measure, preimage_measure, sample_measure, trivial_conjugacy_check, CorrelationEstimate, Cube,
    FlowPoint, IterationBounds, Roof,
};
pub use trig::{catalog, FiberedTrigPoly, TrigPoly1D};
