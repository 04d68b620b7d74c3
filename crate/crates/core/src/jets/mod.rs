//! Time-jet arithmetic at t = 0 and the initial-data constructions: recursive
//! jets per system variant, compatibility residuals, interior-smoothed data
//! with boundary adjustment and corrector, and the trace-matched temperature
//! for the tangentially smoothed system.

pub mod arith;
pub mod build;
pub mod delta;
pub mod kappa;

pub use arith::{FieldJet, MatrixJet, ScalarJet, VectorJet};
pub use build::{
    build_time_jets, compatibility_residual, geometry_jets, initial_geometry, jacobian_jets,
    CompatibilityReport, InitialData, JetVariant, PhysicalParams, TimeJet,
};
pub use delta::{construct_smoothed_data, corrector_eval, SmoothedDataBundle, StageAudit};
pub use kappa::construct_kappa_temperature;

pub(crate) use arith::jet_flux_trace as jet_flux_trace_of;
