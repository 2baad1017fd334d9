//! Evaluation metrics computed from a finished run.
//!
//! Only lineages generated after warmup are counted.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{LineageRecord, SimReport};
use crate::error::Result;
use crate::geometry::SegmentId;

/// Why a packet replica stopped existing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Duplicate-heard cancellation or probabilistic non-forwarding.
    Suppression,
    Collision,
    LowSnr,
}

impl DropReason {
    /// Tie-break order for deaths at the same instant.
    pub fn priority(self) -> u8 {
        match self {
            DropReason::Collision => 2,
            DropReason::LowSnr => 1,
            DropReason::Suppression => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketFate {
    Delivered,
    DiedSuppression,
    DiedCollision,
    DiedLowSnr,
}

/// Fate of a lineage: delivered, or the reason its last replica died.
/// A lineage that never recorded a death was still pending at the horizon
/// and counts as suppressed.
pub fn fate(lineage: &LineageRecord) -> PacketFate {
    if lineage.first_delivery.is_some() {
        return PacketFate::Delivered;
    }
    match lineage.last_death.map(|d| d.reason) {
        Some(DropReason::Collision) => PacketFate::DiedCollision,
        Some(DropReason::LowSnr) => PacketFate::DiedLowSnr,
        Some(DropReason::Suppression) | None => PacketFate::DiedSuppression,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRate {
    pub segment_id: SegmentId,
    /// Unique delivered packets per second.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingAccuracyTable {
    /// Number of one-second windows in the measurement period.
    pub windows: usize,
    pub segments: Vec<SegmentRate>,
    /// Mean over all segments, including those with no deliveries.
    pub mean: f64,
}

impl SensingAccuracyTable {
    pub fn rate(&self, id: SegmentId) -> Option<f64> {
        self.segments.iter().find(|s| s.segment_id == id).map(|s| s.rate)
    }

    /// Writes `segment_id,rate`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for s in &self.segments {
            out.serialize(s)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Unique delivered packets per road segment per second, bucketed by the
/// segment the packet was generated on. The measurement period is split into
/// one-second windows starting at the end of warmup; arrivals during the
/// drain fold into the last window.
pub fn sensing_accuracy(report: &SimReport) -> SensingAccuracyTable {
    let span = (report.measure_end - report.measure_start).max(0.0);
    let windows = (span - 1e-9).ceil().max(1.0) as usize;
    let mut per_window: BTreeMap<SegmentId, Vec<u64>> = BTreeMap::new();
    for l in report.lineages.iter().filter(|l| l.measured) {
        let Some(arrival) = l.first_delivery else { continue };
        if l.origin_segment == SegmentId::GATEWAY {
            continue;
        }
        let w = ((arrival - report.measure_start).floor().max(0.0) as usize).min(windows - 1);
        per_window.entry(l.origin_segment).or_insert_with(|| vec![0; windows])[w] += 1;
    }
    let segments: Vec<SegmentRate> = (0..report.segment_count as u32)
        .map(SegmentId)
        .map(|id| {
            let total: u64 = per_window.get(&id).map(|w| w.iter().sum()).unwrap_or(0);
            SegmentRate {
                segment_id: id,
                rate: total as f64 / windows as f64,
            }
        })
        .collect();
    let mean = if segments.is_empty() {
        0.0
    } else {
        segments.iter().map(|s| s.rate).sum::<f64>() / segments.len() as f64
    };
    SensingAccuracyTable { windows, segments, mean }
}

/// Share of transmissions that lie on the path of some packet copy reaching
/// the gateway. `None` when nothing was transmitted.
///
/// Each arriving copy contributes its chain of `hop_count` transmissions;
/// chains shared by several copies are counted once, so the ratio never
/// exceeds one.
pub fn network_efficiency(report: &SimReport) -> Option<f64> {
    let measured = |uid: crate::forwarding::PacketUid| report.lineages[uid.0 as usize].measured;
    let total = report.transmissions.iter().filter(|t| measured(t.uid)).count();
    if total == 0 {
        return None;
    }
    let mut on_path = vec![false; report.transmissions.len()];
    let mut useful = 0usize;
    for d in report.deliveries.iter().filter(|d| measured(d.uid)) {
        let mut cursor = Some(d.tx);
        while let Some(id) = cursor {
            let i = id.0 as usize;
            if on_path[i] {
                break;
            }
            on_path[i] = true;
            useful += 1;
            cursor = report.transmissions[i].parent;
        }
    }
    Some(useful as f64 / total as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropBreakdown {
    pub lineages: usize,
    pub delivered: usize,
    pub suppression: usize,
    pub collision: usize,
    pub low_snr: usize,
    pub pct_suppression: f64,
    pub pct_collision: f64,
    pub pct_low_snr: f64,
    pub pct_delivered: f64,
}

impl DropBreakdown {
    pub fn from_fates(fates: impl IntoIterator<Item = PacketFate>) -> Self {
        let mut b = DropBreakdown::default();
        for f in fates {
            b.lineages += 1;
            match f {
                PacketFate::Delivered => b.delivered += 1,
                PacketFate::DiedSuppression => b.suppression += 1,
                PacketFate::DiedCollision => b.collision += 1,
                PacketFate::DiedLowSnr => b.low_snr += 1,
            }
        }
        if b.lineages > 0 {
            let pct = |n: usize| 100.0 * n as f64 / b.lineages as f64;
            b.pct_delivered = pct(b.delivered);
            b.pct_suppression = pct(b.suppression);
            b.pct_collision = pct(b.collision);
            b.pct_low_snr = pct(b.low_snr);
        }
        b
    }

    pub fn pct_total(&self) -> f64 {
        self.pct_delivered + self.pct_suppression + self.pct_collision + self.pct_low_snr
    }
}

/// Fate shares over all measured lineages.
pub fn drop_analysis(report: &SimReport) -> DropBreakdown {
    DropBreakdown::from_fates(report.lineages.iter().filter(|l| l.measured).map(fate))
}
