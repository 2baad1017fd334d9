//! Run configuration and its TOML loader.
//!
//! Every field has a default reproducing the reference urban scenario, so an
//! empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forwarding::ProtocolConfig;
use crate::geometry::RoadNetwork;
use crate::mobility::{MobilityConfig, NodeKinematics};
use crate::radio::{airtime, RadioConfig};
use crate::scenario::MatrixSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Side of the square map in meters.
    pub extent: f64,
    pub roads_per_axis: usize,
    /// Intersection `[i, j]` hosting the gateway.
    pub gateway: [usize; 2],
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            extent: 2500.0,
            roads_per_axis: 5,
            gateway: [2, 2],
        }
    }
}

impl TopologyConfig {
    pub fn build(&self) -> Result<RoadNetwork> {
        RoadNetwork::build_grid(self.extent, self.roads_per_axis, (self.gateway[0], self.gateway[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Application rate per node in bits per second.
    pub app_rate: f64,
    /// Restrict generation to these node indices; all nodes when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<u32>>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            app_rate: 1000.0,
            sources: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    /// Seconds simulated before packets count towards metrics.
    pub warmup: f64,
    /// Packets each node generates after warmup.
    pub min_packets_per_node: u32,
    /// Seconds simulated after the last generation so in-flight packets resolve.
    pub drain: f64,
    /// Record per-reception and protocol event logs plus a mobility trace.
    pub trace: bool,
    pub topology: TopologyConfig,
    pub mobility: MobilityConfig,
    pub radio: RadioConfig,
    pub protocol: ProtocolConfig,
    pub traffic: TrafficConfig,
    /// Explicit node placement replacing the random one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<NodeKinematics>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            warmup: 2.0,
            min_packets_per_node: 20,
            drain: 2.0,
            trace: false,
            topology: TopologyConfig::default(),
            mobility: MobilityConfig::default(),
            radio: RadioConfig::default(),
            protocol: ProtocolConfig::default(),
            traffic: TrafficConfig::default(),
            nodes: None,
        }
    }
}

impl SimConfig {
    /// Seconds between two packets of one node.
    pub fn generation_period(&self) -> f64 {
        f64::from(self.radio.packet_size) * 8.0 / self.traffic.app_rate
    }

    /// End of the post-warmup generation window.
    pub fn generation_end(&self) -> f64 {
        self.warmup + f64::from(self.min_packets_per_node) * self.generation_period()
    }

    pub fn horizon(&self) -> f64 {
        self.generation_end() + self.drain
    }

    /// Slot length used by the slotted-1 baseline when none is configured.
    pub fn default_tau(&self) -> f64 {
        airtime(&self.radio) + self.radio.mean_access_delay
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup.is_finite() && self.warmup >= 0.0) {
            return Err(Error::config("warmup", "must be non-negative"));
        }
        if !(self.drain.is_finite() && self.drain >= 0.0) {
            return Err(Error::config("drain", "must be non-negative"));
        }
        if self.min_packets_per_node < 1 {
            return Err(Error::config("min_packets_per_node", "must be at least 1"));
        }
        if !(self.traffic.app_rate.is_finite() && self.traffic.app_rate > 0.0) {
            return Err(Error::config("traffic.app_rate", "must be positive"));
        }
        if self.radio.packet_size == 0 {
            return Err(Error::config("radio.packet_size", "must be positive"));
        }
        let net = self.topology.build()?;
        self.mobility.validate()?;
        self.radio.validate()?;
        self.protocol.validate()?;
        let count = match &self.nodes {
            Some(nodes) => {
                for (i, n) in nodes.iter().enumerate() {
                    if !net.is_on_road(n.position) {
                        return Err(Error::config(format!("nodes[{i}]"), "position is not on a road"));
                    }
                    if !(n.speed.is_finite() && n.speed >= 0.0) {
                        return Err(Error::config(format!("nodes[{i}].speed"), "must be non-negative"));
                    }
                }
                nodes.len()
            }
            None => self.mobility.node_count(&net),
        };
        if count == 0 {
            return Err(Error::config("mobility.density", "scenario has no nodes"));
        }
        if let Some(sources) = &self.traffic.sources {
            if let Some(bad) = sources.iter().find(|&&s| s as usize >= count) {
                return Err(Error::config("traffic.sources", format!("node {bad} does not exist")));
            }
        }
        Ok(())
    }
}

/// A parsed configuration file: a base run plus an optional scenario matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub base: SimConfig,
    pub matrix: Option<MatrixSpec>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    let matrix = match table.remove("matrix") {
        Some(v) => Some(
            v.try_into::<MatrixSpec>()
                .map_err(|e| Error::Parse(format!("[matrix]: {e}")))?,
        ),
        None => None,
    };
    let base: SimConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| Error::Parse(e.to_string()))?;
    base.validate()?;
    if let Some(m) = &matrix {
        m.validate()?;
    }
    Ok(ConfigFile { base, matrix })
}

impl SimConfig {
    /// TOML text that [`parse_config`] turns back into this configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
