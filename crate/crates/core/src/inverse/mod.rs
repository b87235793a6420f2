//! Constructive reconstruction from vector-field samples on a sphere:
//! multipole moments, the aggregate weight, single- and multi-anomaly
//! location, and the exponents and permeabilities behind the weights.

mod moments;
mod multi;
mod recover;

pub use moments::{
    dipole_model_field, extract_moments, locate_single, project_vector_harmonic, recover_aggregate_f, AggregateF,
    MomentTable, ProjectionKind,
};
pub use multi::{
    reconstruct_multi, AnomalyDiagnostics, FitDiagnostics, ReconstructOptions, ReconstructionResult, RecoveredAnomaly,
};
pub use recover::{ball_p_of_mu, recover_alpha, recover_mu, weight_ratio, MuShape, PARALLEL_TOL};

#[cfg(test)]
mod tests;
