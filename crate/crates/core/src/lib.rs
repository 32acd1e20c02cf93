//! Growth-fragmentation solver and spectral-gap certificates.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discretization;
pub mod error;
pub mod flow;
pub mod model;
mod quad;

pub use discretization::{
    make_grid, push_forward, weighted_tv_norm, Grid, GridMeasure, GridScheme, TransportPlan, WeightSpec,
};
pub use error::{Error, Result};
pub use flow::FlowMap;
pub use model::{
    check_hypotheses, kernel_rate_consistency, moment, Coefficients, Family, FragmentKernel, FragmentLaw, GrowthClass,
    HypothesisReport, Table, Verdict,
};
pub mod semigroup;
pub use semigroup::{
    conserved_functional, fragmentation_gain, max_stable_dt, EvolutionConfig, Evolver, GainOperator, Mode, Splitting,
    Trajectory,
};
pub mod eigen;
pub use eigen::{
    crossover_a, direct_eigen, dual_eigen, explicit_eigen, solve_truncated_dual, window_distance, DirectEigen,
    DirectOptions, DualEigen, DualOptions, EigenTriple, ExplicitCase, PhiFunction, TruncatedDualSolution,
};
pub mod lyapunov;
pub use lyapunov::{
    drift_constants, phi_linear, verify_drift, DriftCertificate, DriftCheckSetup, DriftOptions, DriftReport, DualInput,
    Regime,
};
pub mod minorisation;
pub use minorisation::{
    dirac_lower_bound, exact_shift_grid, mitosis_proof_interval, selfsim_small_set, small_set_constants, DiracBound,
    MinorisationSetup, NuShape, SelfSimilarSmallSet, SmallSetCertificate, SmallSetMode,
};
pub mod provenance;
pub use provenance::{Provenance, Tagged};
pub mod harris;
pub use harris::{
    doeblin_rate, finite_chain_oracle, harris_rate, oracle_suite, selfsim_certificate, HarrisCertificate,
    HarrisChoices, HarrisOracleInput, LogReal, OracleParams, OracleReport, OracleSuite, SelfSimilarCertificate,
};
pub mod ratemeter;
pub use ratemeter::{
    gaussian_bump, measure_rate, rate_vs_certificate, ComparisonVerdict, RateComparison, RateFit, RateMeasurement,
    RateOptions, RateOutcome, RateSetup, Rejection,
};
pub mod pipeline;
pub use pipeline::{run_pipeline, run_until, PipelineRun, PipelineSummary, RunConfig, Stage};
