//! Numerical toolkit for conformal metrics `f^2 g0` on flat tori and the
//! round 2-sphere: `L^p` norms of metrics, shortest-path distances, Riesz
//! type potentials of the conformal factor and the explicit example families
//! used to probe `L^p` versus `L^q` distance convergence.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curves;
pub mod error;
pub mod experiments;
pub mod families;
pub mod field;
pub mod geodesic;
pub mod manifold;
pub mod numerics;
pub mod potential;
pub mod report;

pub use error::{Error, Result};
pub use field::{
    lp_norm, lq_distance_norm, sample_factor, sample_pairs, tensor_norm_field, Bubble,
    ConformalFactorSpec, CustomProfile, LqEstimate, NormMode, PairEstimator, Profile, RadialCore,
    ScalarField, WeightedDistance,
};
pub use geodesic::{
    delta, edge_weight, pair_distance, single_source, DistanceField, PairDistance, Solver,
    SolverConfig,
};
pub use manifold::{build_grid, build_grid_with_cap, g0_distance, Grid, Manifold, Point};
pub use numerics::Rule;
pub use potential::{
    bad_set_estimate, box_counting, distance_potential_check, lq_of_potential, potential_at,
    potential_field, reverse_holder_check, BadSetEstimate, BoundVariant, PotentialConfig,
    SelfCell, SumMethod,
};
pub use curves::{
    build_family, family_potential_bound_check, normal_jacobian_check, SymmetricFamily,
};
pub use families::{
    bubble, finite_j_radial_oracle, limit_distance, subsequence_index, ExampleFamily, ExampleKind,
    SingularLocus,
};
pub use experiments::{
    evaluate, recompute_verdicts, run, CurveSettings, DistancePotentialSettings, Experiment,
    ExperimentConfig, Exponents, Probe, ReverseHolderSettings, Sampling, Tolerances, Witness,
};
pub use report::{ExperimentReport, Row, Verdict};
