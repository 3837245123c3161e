//! Static home-location inference on weighted social graphs.
//!
//! Unlabeled users are placed at the weighted geodesic median of their located
//! friends, round after round, and an update is kept only when the friends are
//! not too dispersed. The crate also covers the surrounding pipeline: building
//! the reciprocated mention network, deriving seed locations from GPS events
//! and profile strings, generating planted-city benchmarks, and leave-many-out
//! evaluation.

pub mod eval;
pub mod formats;
pub mod geodesy;
pub mod graph;
pub mod ground_truth;
pub mod robust;
pub mod solver;
pub mod synth;

pub use geodesy::{geodesic_distance, GeoPoint};
pub use graph::{MentionRecord, SocialNetwork, UserId, WeightedEdge};
pub use ground_truth::{GroundTruthRecord, SeedSet, SeedSource};
pub use solver::{infer, spatial_label_propagation, EstimateState, LocationEstimate, SolverConfig};
