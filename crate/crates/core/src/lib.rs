//! One-dimensional optimal transport with nonlinear mobilities.
//!
//! The crate discretizes generalized Wasserstein distances on the real line
//! through systems of ordered particles: the cone of admissible
//! configurations, a discrete path action weighted by the mobility ratio
//! `theta(rho) = m(rho)/rho`, geodesic solves defining the discrete distance,
//! minimizing movements for energies driven by that distance,
//! follow-the-leader dynamics for scalar conservation laws, and convergence
//! studies relating all of these to their continuum counterparts.

pub mod cone;
pub mod error;
pub mod ftl;
pub mod geodesic;
pub mod jko;
pub mod measure;
pub mod mobility;
pub mod solver;
pub mod study;
mod transcription;

pub use cone::{
    check_embedding_consistency, embed_empirical, embed_piecewise, gap_densities,
    reconstruct_density, sample_from_quantile, ParticleConfig, RhoStarRule,
};
pub use error::{Error, Result};
pub use ftl::{
    ftl_integrate, ftl_rhs, ftl_vs_entropy, riemann_entropy_density, FtlState, VelocityLaw,
};
pub use geodesic::{
    action_comparison_check, check_constant_speed, discrete_action, distance_lower_bound_check,
    embedded_distance, path_action, path_action_with, solve_geodesic, solve_geodesic_lenient,
    transcribed_action, GeodesicResult, ParticlePath, SolverOptions, SolverReport, StateEval,
};
pub use jko::{
    jko_run, jko_step, second_moment_bound_check, EnergyFunctional, JkoStep, JkoTrajectory,
    PotentialFn,
};
pub use measure::{
    compactification_error_check, compactify, tail_moment, wasserstein_p, Measure1D, TailReport,
    DEFAULT_QUAD_POINTS,
};
pub use mobility::{dilate, phi, theta_of, ActionDensity, Mobility, MobilityKind, Theta};
pub use study::{
    jko_convergence_study, run_gamma_study, GammaRecord, GammaReport, JkoStudyReport, JkoStudyRow,
};
