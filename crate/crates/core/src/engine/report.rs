//! Run output: the raw logs every metric is derived from.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::Result;
use crate::forwarding::{NodeId, PacketUid};
use crate::geometry::SegmentId;
use crate::metrics::{self, DropBreakdown, DropReason};
use crate::radio::{ReceptionOutcome, TxId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionRecord {
    pub id: TxId,
    pub uid: PacketUid,
    pub sender: NodeId,
    pub start: f64,
    pub end: f64,
    pub hop_count: u32,
    /// Transmission that delivered the packet to the sender; `None` for origin sends.
    pub parent: Option<TxId>,
    /// Nodes within the reception cutoff.
    pub receivers: u32,
}

/// One packet copy arriving at the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub uid: PacketUid,
    pub time: f64,
    pub hop_count: u32,
    pub tx: TxId,
}

/// When and why a replica of a lineage stopped existing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Death {
    pub time: f64,
    pub reason: DropReason,
}

impl Death {
    /// Whether `self` supersedes `other` as the lineage's last death: later
    /// wins, ties go to the higher-priority reason.
    pub fn supersedes(&self, other: &Death) -> bool {
        self.time > other.time || (self.time == other.time && self.reason.priority() > other.reason.priority())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageRecord {
    pub uid: PacketUid,
    pub source: NodeId,
    pub seq: u32,
    pub origin_time: f64,
    pub origin_segment: SegmentId,
    /// Generated after warmup.
    pub measured: bool,
    pub first_delivery: Option<f64>,
    pub last_death: Option<Death>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptionRecord {
    pub tx: TxId,
    pub time: f64,
    pub sender: NodeId,
    pub uid: PacketUid,
    pub receiver: NodeId,
    pub outcome: ReceptionOutcome,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolEventKind {
    Scheduled,
    Cancelled,
    ProbSuppressed,
    Forwarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEventRecord {
    pub time: f64,
    pub node: NodeId,
    pub uid: PacketUid,
    pub kind: ProtocolEventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilitySample {
    pub time: f64,
    pub node: NodeId,
    pub x: f64,
    pub y: f64,
}

/// Detailed logs kept only when tracing is enabled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceLogs {
    pub receptions: Vec<ReceptionRecord>,
    pub protocol_events: Vec<ProtocolEventRecord>,
    pub mobility: Vec<MobilitySample>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounters {
    pub events: u64,
    pub transmissions: u64,
    pub receptions: u64,
    pub collisions: u64,
    pub low_snr: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WallClock {
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub node_count: usize,
    pub gateway: NodeId,
    pub segment_count: usize,
    pub tx_power_dbm: f64,
    pub measure_start: f64,
    pub measure_end: f64,
    pub horizon: f64,
    pub counters: RunCounters,
    pub lineages: Vec<LineageRecord>,
    pub deliveries: Vec<DeliveryRecord>,
    pub transmissions: Vec<TransmissionRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceLogs>,
    /// Host timing; excluded from serialization so reports stay reproducible.
    #[serde(skip)]
    pub wall_clock: WallClock,
}

#[derive(Serialize)]
struct MetricsSummary {
    sensing_accuracy: f64,
    network_efficiency: Option<f64>,
    drops: DropBreakdown,
}

/// Borrowed view of a report without its transmission and trace logs.
#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a SimConfig,
    node_count: usize,
    gateway: NodeId,
    segment_count: usize,
    tx_power_dbm: f64,
    measure_start: f64,
    measure_end: f64,
    horizon: f64,
    counters: &'a RunCounters,
    metrics: MetricsSummary,
    lineages: &'a [LineageRecord],
    deliveries: &'a [DeliveryRecord],
}

impl SimReport {
    pub fn lineage(&self, uid: PacketUid) -> Option<&LineageRecord> {
        self.lineages.get(uid.0 as usize).filter(|l| l.uid == uid)
    }

    /// Writes the `report.json` document: everything except the per-transmission
    /// and trace logs, which go to CSV.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let view = ReportFile {
            config: &self.config,
            node_count: self.node_count,
            gateway: self.gateway,
            segment_count: self.segment_count,
            tx_power_dbm: self.tx_power_dbm,
            measure_start: self.measure_start,
            measure_end: self.measure_end,
            horizon: self.horizon,
            counters: &self.counters,
            metrics: MetricsSummary {
                sensing_accuracy: metrics::sensing_accuracy(self).mean,
                network_efficiency: metrics::network_efficiency(self),
                drops: metrics::drop_analysis(self),
            },
            lineages: &self.lineages,
            deliveries: &self.deliveries,
        };
        serde_json::to_writer_pretty(w, &view)?;
        Ok(())
    }

    /// Writes `time,sender,packet_uid,receiver,outcome,distance`: one `sent`
    /// row per transmission followed by its receptions when traced.
    pub fn write_transmissions_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "sender", "packet_uid", "receiver", "outcome", "distance"])?;
        let receptions = self.trace.as_ref().map(|t| t.receptions.as_slice()).unwrap_or(&[]);
        let mut order: Vec<usize> = (0..receptions.len()).collect();
        order.sort_by_key(|&i| receptions[i].tx);
        let mut next = order.iter().peekable();
        for t in &self.transmissions {
            out.write_record([
                t.start.to_string(),
                t.sender.to_string(),
                t.uid.to_string(),
                String::new(),
                "sent".to_string(),
                "0".to_string(),
            ])?;
            while let Some(&&i) = next.peek() {
                let r = &receptions[i];
                if r.tx != t.id {
                    break;
                }
                out.write_record([
                    r.time.to_string(),
                    r.sender.to_string(),
                    r.uid.to_string(),
                    r.receiver.to_string(),
                    r.outcome.as_str().to_string(),
                    r.distance.to_string(),
                ])?;
                next.next();
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Writes the `time,node_id,x,y` mobility trace, if one was recorded.
    pub fn write_mobility_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "node_id", "x", "y"])?;
        if let Some(trace) = &self.trace {
            for s in &trace.mobility {
                out.write_record([s.time.to_string(), s.node.to_string(), s.x.to_string(), s.y.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
