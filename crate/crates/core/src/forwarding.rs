//! Receiver-based forwarding.
//!
//! A node that receives a packet for the first time waits for channel access,
//! then runs a distance-dependent timer. Hearing the same packet again during
//! either phase cancels the candidate forward. When the timer expires the node
//! forwards with a probability that depends on the suppression mode. The
//! slotted-1-persistence baseline replaces the timer with a slot delay and
//! always forwards.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Position, SegmentId};
use crate::radio::TxId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense run-wide index of a packet lineage, one per `(source, seq)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketUid(pub u32);

impl fmt::Display for PacketUid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketHeader {
    pub uid: PacketUid,
    pub source: NodeId,
    pub seq: u32,
    pub origin_position: Position,
    pub origin_segment: SegmentId,
    pub origin_time: f64,
    pub prev_hop_position: Position,
    /// Transmissions so far along this copy's path, including the one carrying it.
    pub hop_count: u32,
}

impl PacketHeader {
    /// Header carried by this node's forward of the packet.
    pub fn forwarded_from(&self, position: Position) -> PacketHeader {
        PacketHeader {
            prev_hop_position: position,
            hop_count: self.hop_count + 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuppressionMode {
    Basic,
    Weak,
    Moderate,
    Strong,
}

impl SuppressionMode {
    pub const ALL: [SuppressionMode; 4] = [
        SuppressionMode::Basic,
        SuppressionMode::Weak,
        SuppressionMode::Moderate,
        SuppressionMode::Strong,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuppressionMode::Basic => "basic",
            SuppressionMode::Weak => "weak",
            SuppressionMode::Moderate => "moderate",
            SuppressionMode::Strong => "strong",
        }
    }
}

impl fmt::Display for SuppressionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuppressionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(SuppressionMode::Basic),
            "weak" => Ok(SuppressionMode::Weak),
            "moderate" => Ok(SuppressionMode::Moderate),
            "strong" => Ok(SuppressionMode::Strong),
            other => Err(Error::config(
                "protocol.suppression",
                format!("unknown suppression mode `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Udc,
    Slotted1,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Udc => "udc",
            ProtocolKind::Slotted1 => "slotted1",
        }
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "udc" => Ok(ProtocolKind::Udc),
            "slotted1" | "slotted-1" => Ok(ProtocolKind::Slotted1),
            other => Err(Error::config("protocol.kind", format!("unknown protocol `{other}`"))),
        }
    }
}

/// Protocol parameters as written in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub suppression: SuppressionMode,
    /// Maximum UDC timer in seconds.
    pub t_max: f64,
    /// Slot count of the slotted-1 baseline.
    pub n_slots: u32,
    /// Slot length of the slotted-1 baseline; defaults to airtime plus mean access delay.
    pub tau: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Udc,
            suppression: SuppressionMode::Basic,
            t_max: 0.005,
            n_slots: 4,
            tau: None,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::config("protocol.t_max", "must be positive"));
        }
        if self.n_slots < 1 {
            return Err(Error::config("protocol.n_slots", "must be at least 1"));
        }
        if matches!(self.tau, Some(t) if !(t.is_finite() && t >= 0.0)) {
            return Err(Error::config("protocol.tau", "must be non-negative"));
        }
        Ok(())
    }

    /// Short label such as `udc-weak` or `slotted1`.
    pub fn label(&self) -> String {
        match self.kind {
            ProtocolKind::Udc => format!("udc-{}", self.suppression),
            ProtocolKind::Slotted1 => "slotted1".to_string(),
        }
    }

    /// Resolves defaults that depend on the radio.
    pub fn variant(&self, default_tau: f64) -> Protocol {
        match self.kind {
            ProtocolKind::Udc => Protocol::Udc {
                mode: self.suppression,
                t_max: self.t_max,
            },
            ProtocolKind::Slotted1 => Protocol::Slotted1 {
                n_slots: self.n_slots,
                tau: self.tau.unwrap_or(default_tau),
            },
        }
    }
}

/// Resolved forwarding rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    Udc { mode: SuppressionMode, t_max: f64 },
    Slotted1 { n_slots: u32, tau: f64 },
}

/// Fraction of `t_max` a receiver at gateway distance `d_j` waits after a
/// sender at `d_i`. Zero at the gateway-side edge of the range, one at the
/// far edge; clamped since fading can deliver beyond `range`.
pub fn timer_coefficient(d_i: f64, d_j: f64, range: f64) -> f64 {
    (1.0 + (d_j - d_i - range) / (2.0 * range)).clamp(0.0, 1.0)
}

pub fn forwarding_probability(mode: SuppressionMode, d_i: f64, d_j: f64, range: f64) -> f64 {
    match mode {
        SuppressionMode::Basic => 1.0,
        SuppressionMode::Weak => {
            if d_j <= d_i {
                1.0
            } else {
                (1.0 - (d_j - d_i) / range).clamp(0.0, 1.0)
            }
        }
        SuppressionMode::Strong => {
            if d_j < d_i {
                ((d_i - d_j) / range).clamp(0.0, 1.0)
            } else {
                0.0
            }
        }
        SuppressionMode::Moderate => ((d_i - d_j + range) / (2.0 * range)).clamp(0.0, 1.0),
    }
}

/// Slot index of the slotted-1 baseline for sender-receiver distance `d_ij`.
pub fn slotted1_slot(d_ij: f64, range: f64, n_slots: u32) -> u32 {
    if d_ij > range {
        return 0;
    }
    (f64::from(n_slots) * (1.0 - d_ij / range)).floor().max(0.0) as u32
}

/// Growable bitset of packet lineages a node has already seen.
#[derive(Debug, Clone, Default)]
pub struct DuplicateCache {
    words: Vec<u64>,
}

impl DuplicateCache {
    pub fn contains(&self, uid: PacketUid) -> bool {
        let i = uid.0 as usize;
        self.words.get(i / 64).is_some_and(|w| w & (1 << (i % 64)) != 0)
    }

    /// Returns true if `uid` was not present.
    pub fn insert(&mut self, uid: PacketUid) -> bool {
        let i = uid.0 as usize;
        if self.words.len() <= i / 64 {
            self.words.resize(i / 64 + 1, 0);
        }
        let bit = 1 << (i % 64);
        let fresh = self.words[i / 64] & bit == 0;
        self.words[i / 64] |= bit;
        fresh
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendingForward {
    pub packet: PacketHeader,
    pub wait_deadline: f64,
    pub timer_expiry: f64,
    pub d_i: f64,
    pub d_j: f64,
    /// Transmission that delivered the packet; `None` for own packets.
    pub trigger: Option<TxId>,
}

impl PendingForward {
    pub fn is_origin(&self) -> bool {
        self.trigger.is_none()
    }
}

/// Geometry of a reception, as seen by the receiving node.
#[derive(Debug, Clone, Copy)]
pub struct ReceiveContext {
    pub now: f64,
    pub own_position: Position,
    pub gateway: Position,
    pub range: f64,
    /// Channel-access wait drawn for this reception.
    pub access_delay: f64,
    pub trigger: TxId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReceiveAction {
    /// First reception: a candidate forward was scheduled.
    Scheduled(PendingForward),
    /// Duplicate heard while a forward was pending; it was cancelled.
    Cancelled(PendingForward),
    /// Duplicate with nothing pending.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimerOutcome {
    Forward(PacketHeader),
    ProbSuppressed,
}

/// Per-node forwarding state machine.
#[derive(Debug, Clone)]
pub struct Forwarder {
    protocol: Protocol,
    gateway: bool,
    seen: DuplicateCache,
    pending: Vec<PendingForward>,
}

impl Forwarder {
    pub fn new(protocol: Protocol) -> Self {
        Self {
            protocol,
            gateway: false,
            seen: DuplicateCache::default(),
            pending: Vec::new(),
        }
    }

    /// The sink: records what it has seen but never forwards.
    pub fn gateway(protocol: Protocol) -> Self {
        Self {
            gateway: true,
            ..Self::new(protocol)
        }
    }

    pub fn is_gateway(&self) -> bool {
        self.gateway
    }

    pub fn has_seen(&self, uid: PacketUid) -> bool {
        self.seen.contains(uid)
    }

    /// Marks `uid` seen; returns true on first sight. Used by the sink.
    pub fn mark_seen(&mut self, uid: PacketUid) -> bool {
        self.seen.insert(uid)
    }

    pub fn pending(&self, uid: PacketUid) -> Option<&PendingForward> {
        self.pending.iter().find(|p| p.packet.uid == uid)
    }

    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    /// Schedules the node's own packet for transmission after channel access.
    pub fn originate(&mut self, packet: PacketHeader, now: f64, access_delay: f64) -> PendingForward {
        assert!(!self.gateway, "the gateway does not generate traffic");
        self.seen.insert(packet.uid);
        let wait = now + access_delay;
        let pf = PendingForward {
            packet,
            wait_deadline: wait,
            timer_expiry: wait,
            d_i: 0.0,
            d_j: 0.0,
            trigger: None,
        };
        self.pending.push(pf.clone());
        pf
    }

    pub fn on_receive(&mut self, packet: &PacketHeader, ctx: &ReceiveContext) -> ReceiveAction {
        assert!(!self.gateway, "the gateway consumes packets and never forwards");
        if !self.seen.insert(packet.uid) {
            return match self.pending.iter().position(|p| p.packet.uid == packet.uid) {
                Some(i) => ReceiveAction::Cancelled(self.pending.swap_remove(i)),
                None => ReceiveAction::Ignored,
            };
        }
        let d_i = packet.prev_hop_position.distance(&ctx.gateway);
        let d_j = ctx.own_position.distance(&ctx.gateway);
        let wait_deadline = ctx.now + ctx.access_delay;
        let delay = match self.protocol {
            Protocol::Udc { t_max, .. } => timer_coefficient(d_i, d_j, ctx.range) * t_max,
            Protocol::Slotted1 { n_slots, tau } => {
                let d_ij = packet.prev_hop_position.distance(&ctx.own_position);
                f64::from(slotted1_slot(d_ij, ctx.range, n_slots)) * tau
            }
        };
        let pf = PendingForward {
            packet: packet.clone(),
            wait_deadline,
            timer_expiry: wait_deadline + delay,
            d_i,
            d_j,
            trigger: Some(ctx.trigger),
        };
        self.pending.push(pf.clone());
        ReceiveAction::Scheduled(pf)
    }

    /// Resolves the pending forward of `uid` at timer expiry. Returns `None`
    /// if it was cancelled in the meantime.
    pub fn on_timer_expire<R: Rng + ?Sized>(
        &mut self,
        uid: PacketUid,
        own_position: Position,
        range: f64,
        rng: &mut R,
    ) -> Option<(PendingForward, TimerOutcome)> {
        let i = self.pending.iter().position(|p| p.packet.uid == uid)?;
        let pf = self.pending.swap_remove(i);
        let p = if pf.is_origin() {
            1.0
        } else {
            match self.protocol {
                Protocol::Udc { mode, .. } => forwarding_probability(mode, pf.d_i, pf.d_j, range),
                Protocol::Slotted1 { .. } => 1.0,
            }
        };
        let forward = p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p);
        let outcome = if forward {
            TimerOutcome::Forward(pf.packet.forwarded_from(own_position))
        } else {
            TimerOutcome::ProbSuppressed
        };
        Some((pf, outcome))
    }
}
