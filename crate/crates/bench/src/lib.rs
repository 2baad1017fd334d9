//! Shared fixtures for the criterion benches.

use udc::config::SimConfig;
use udc::forwarding::{ProtocolKind, SuppressionMode};

/// A short run on a reduced grid, small enough to iterate quickly.
pub fn small_run(density: f64, mode: SuppressionMode) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.topology.extent = 1250.0;
    cfg.mobility.density = density;
    cfg.protocol.kind = ProtocolKind::Udc;
    cfg.protocol.suppression = mode;
    cfg.warmup = 1.0;
    cfg.min_packets_per_node = 5;
    cfg.drain = 0.5;
    cfg
}
