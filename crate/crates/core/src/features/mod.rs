//! Behavioral feature extraction from passive-sensing streams: low-level
//! per-sensor features per epoch, location clustering and home inference,
//! high-level academic behaviors, and weekly behavioral-change features.

pub mod bouts;
pub mod change;
pub mod events;
mod extract;
pub mod fitbit;
pub mod geo;
pub mod highlevel;
pub mod location;
pub mod places;

pub use change::{behavioral_change, weekly_aggregate, BehavioralChange, Breakpoint};
pub use extract::{extract_cohort, feature_universe, ExtractorConfig, Family};
pub use geo::{haversine_m, Place, PlaceLabel, PlaceMap};
pub use location::{
    cluster_static_samples, dbscan, dwell_entropy, infer_home, LocationCluster, LocationContext,
};
