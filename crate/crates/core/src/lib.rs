//! Simulation of "metasurface battles": two programmable reflective surfaces
//! with conflicting objectives reshaping one shared wireless channel.
//!
//! The crate is organized bottom-up:
//!
//! * [`mathcore`] numeric primitives, seeded random streams.
//! * [`metasurface`] surface descriptions and configuration vectors.
//! * [`environment`] synthetic propagation (geometry, path loss, fading, motion).
//! * [`channel`] composition of the effective channel and observations.
//! * [`optimizers`] the configuration search strategies (GD, FL, BF, LR, RD, NO).
//! * [`battle`] the two-party battle engine and sweep matrices.
//! * [`analysis`] closed-form gain/degradation predictions used as an oracle.
//! * [`scenarios`] end-to-end case studies (jamming, secure comms, sensing).
//! * [`sweeps`] placement experiments (distance, frequency, orientation, coupling).

pub mod analysis;
pub mod battle;
pub mod channel;
pub mod environment;
mod error;
pub mod mathcore;
pub mod metasurface;
pub mod optimizers;
pub mod scenarios;
pub mod stats;
pub mod sweeps;

pub use error::{Error, Result};
pub use mathcore::{Complex, RandomStream};

pub use analysis::{ErrorPhasor, GainReport, MutualSnrEstimate};
pub use battle::{BattleOutcome, BattleSchedule, BattleTrace, TimingMode, Winner};
pub use channel::{ChannelModel, ChannelObservation};
pub use environment::{
    DirectChannel, Endpoint, Geometry, MotionParams, PropagationParams, SubchannelSet, SurfaceId,
    SurfacePlacement, Vec3,
};
pub use metasurface::{MetasurfaceSpec, SurfaceConfig};
pub use optimizers::{ObjectiveSense, Optimizer, OptimizerKind, OptimizerSettings};
