//! Discrete-event simulation of broadcast-based data collection in urban
//! vehicular networks.
//!
//! Vehicles drive on a Manhattan grid and periodically generate sensing
//! packets for a single gateway. Receivers decide on their own whether to
//! re-broadcast: nodes closer to the gateway wait less, hearing a duplicate
//! cancels a pending forward, and an optional suppression level filters
//! forwards probabilistically. A slotted-1-persistence baseline is included
//! for comparison.
//!
//! ```no_run
//! use udc::{config::SimConfig, engine, metrics};
//!
//! let report = engine::run(&SimConfig::default()).unwrap();
//! println!("sensing accuracy {:.3}", metrics::sensing_accuracy(&report).mean);
//! ```

pub mod config;
pub mod engine;
pub mod error;
pub mod forwarding;
pub mod geometry;
pub mod metrics;
pub mod mobility;
pub mod radio;
pub mod rng;
pub mod scenario;

pub use config::{load_config, parse_config, ConfigFile, SimConfig};
pub use engine::{run, SimReport};
pub use error::{Error, Result};
pub use forwarding::{
    forwarding_probability, slotted1_slot, timer_coefficient, NodeId, PacketHeader, PacketUid, ProtocolConfig,
    ProtocolKind, SuppressionMode,
};
pub use geometry::{Heading, Position, RoadNetwork, SegmentId};
pub use metrics::{drop_analysis, network_efficiency, sensing_accuracy, DropReason, PacketFate};
pub use scenario::{run_matrix, MatrixSpec, ProtocolChoice, RunSpec, SummaryRow};
