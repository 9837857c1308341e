//! Software twin of a magnetic-field indoor positioning system for
//! interactive exhibitions.
//!
//! The measurement chain runs [`signal_sim`] (anchor tones to ADC record),
//! [`amp_estimator`] (multi-tone sinefit), [`ranging`] (power-law inversion)
//! and [`trilateration`]. [`pipeline`] drives that chain in real time and
//! streams fixes to the position-controlled application in [`pca`].
//! [`eval`] reproduces the accuracy analysis against the surveyed control
//! points.

pub mod amp_estimator;
pub mod config;
pub mod domain;
pub mod eval;
pub mod geometry;
pub mod pca;
pub mod pipeline;
pub mod ranging;
pub mod signal_sim;
pub mod trilateration;
pub mod wire;

pub use domain::{
    load_survey_table, project_to_reference_plane, AmplitudeEstimate, Anchor, AnchorId, AnchorSet,
    DistanceEstimate, Point2, Point3, PositionFix, SampleRecord, SurveyTable,
};
