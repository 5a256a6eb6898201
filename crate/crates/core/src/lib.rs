//! Simulation models for cellular-connected aerial vehicles flying in
//! low-altitude corridors.
//!
//! The crate covers four related studies over a two-tier hexagonal network:
//!
//! * downlink coverage maps with uptilted/downtilted sector panels and a
//!   two-ray ground-reflection channel ([`coverage`], [`antenna`], [`channel`]),
//! * genetic-algorithm search over per-site uptilt angles that maximizes the
//!   worst-point SIR ([`optimizer`]),
//! * handover statistics of a vehicle moving through the layout under an
//!   A3/hysteresis/time-to-trigger rule ([`mobility`]),
//! * TDOA localization accuracy bounds (CRLB) and a Gauss-Newton estimator
//!   for ground sensor constellations watching a corridor ([`localization`]).
//!
//! [`corridor`] validates discrete occupancy schedules against corridor
//! rules of engagement (single occupancy, enter-empty, no overtaking,
//! safety distance).
//!
//! Every stochastic component draws from named [`config::rng_substream`]
//! streams so that a run is fully reproducible from `(seed, label)`.

pub mod antenna;
pub mod channel;
pub mod config;
pub mod corridor;
pub mod coverage;
pub mod localization;
pub mod mobility;
pub mod optimizer;
pub mod scenario;

pub use config::{rng_substream, RunConfig};
pub use scenario::{EvaluationGrid, NetworkLayout};
