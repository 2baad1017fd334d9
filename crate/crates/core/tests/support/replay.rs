//! Brute-force lineage replayer.
//!
//! Rebuilds packet fates and delivery chains from the raw reception and
//! protocol-event logs of a traced run, without touching the engine's
//! bookkeeping (`parent`, `last_death`, `first_delivery`) or the metrics
//! module.

use std::collections::HashMap;

use udc::engine::{ProtocolEventKind, ReceptionRecord, SimReport};
use udc::forwarding::{NodeId, PacketUid};
use udc::radio::{ReceptionOutcome, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Cause {
    Suppression = 0,
    LowSnr = 1,
    Collision = 2,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct FateCounts {
    pub lineages: usize,
    pub delivered: usize,
    pub suppression: usize,
    pub collision: usize,
    pub low_snr: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub fates: FateCounts,
    pub efficiency: Option<f64>,
    /// Transmission -> the transmission whose reception made its sender a candidate.
    pub parents: HashMap<TxId, Option<TxId>>,
}

pub fn replay(report: &SimReport) -> Replay {
    let trace = report.trace.as_ref().expect("replay needs a traced run");
    let range = report.config.radio.comm_range;
    let gateway = report.gateway;
    let warmup = report.config.warmup;

    // When each node first took custody of each packet.
    let mut custody: HashMap<(NodeId, PacketUid), f64> = HashMap::new();
    let mut deaths: HashMap<PacketUid, Vec<(f64, Cause)>> = HashMap::new();
    for ev in &trace.protocol_events {
        match ev.kind {
            ProtocolEventKind::Scheduled => {
                custody.entry((ev.node, ev.uid)).or_insert(ev.time);
            }
            ProtocolEventKind::Cancelled | ProtocolEventKind::ProbSuppressed => {
                deaths.entry(ev.uid).or_default().push((ev.time, Cause::Suppression));
            }
            ProtocolEventKind::Forwarded => {}
        }
    }

    let mut by_tx: HashMap<TxId, Vec<&ReceptionRecord>> = HashMap::new();
    let mut at_gateway: HashMap<PacketUid, (f64, TxId)> = HashMap::new();
    for rx in &trace.receptions {
        by_tx.entry(rx.tx).or_default().push(rx);
        if rx.receiver == gateway && rx.outcome == ReceptionOutcome::Delivered {
            let e = at_gateway.entry(rx.uid).or_insert((rx.time, rx.tx));
            if rx.time < e.0 {
                *e = (rx.time, rx.tx);
            }
        }
    }
    let held_before = |node: NodeId, uid: PacketUid, t: f64| -> bool {
        if node == gateway {
            return at_gateway.get(&uid).is_some_and(|&(first, _)| first < t);
        }
        custody.get(&(node, uid)).is_some_and(|&c| c < t)
    };

    let mut parents = HashMap::new();
    for tx in &report.transmissions {
        let took = custody.get(&(tx.sender, tx.uid)).copied();
        let parent = took.and_then(|t| {
            trace
                .receptions
                .iter()
                .find(|r| {
                    r.receiver == tx.sender
                        && r.uid == tx.uid
                        && r.outcome == ReceptionOutcome::Delivered
                        && r.time == t
                })
                .map(|r| r.tx)
        });
        parents.insert(tx.id, parent);

        if tx.end > report.horizon {
            continue;
        }
        let recs = by_tx.get(&tx.id).map(Vec::as_slice).unwrap_or(&[]);
        let spawned = recs.iter().any(|r| {
            r.receiver != gateway
                && r.outcome == ReceptionOutcome::Delivered
                && custody.get(&(r.receiver, tx.uid)) == Some(&r.time)
        });
        let first_at_sink = at_gateway.get(&tx.uid).is_some_and(|&(_, t)| t == tx.id);
        if spawned || first_at_sink {
            continue;
        }
        let lost = |outcome| {
            recs.iter()
                .any(|r| r.outcome == outcome && r.distance <= range && !held_before(r.receiver, tx.uid, r.time))
        };
        let echoed = recs
            .iter()
            .any(|r| r.receiver != gateway && r.outcome == ReceptionOutcome::Delivered);
        let cause = if lost(ReceptionOutcome::Collision) {
            Cause::Collision
        } else if lost(ReceptionOutcome::LowSnr) || !echoed {
            Cause::LowSnr
        } else {
            Cause::Suppression
        };
        deaths.entry(tx.uid).or_default().push((tx.end, cause));
    }

    let measured = |uid: PacketUid| report.lineages[uid.0 as usize].origin_time >= warmup;

    let mut fates = FateCounts::default();
    for l in report.lineages.iter().filter(|l| measured(l.uid)) {
        fates.lineages += 1;
        if at_gateway.contains_key(&l.uid) {
            fates.delivered += 1;
            continue;
        }
        let last = deaths.get(&l.uid).and_then(|d| {
            d.iter()
                .copied()
                .max_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        });
        match last.map(|(_, c)| c) {
            Some(Cause::Collision) => fates.collision += 1,
            Some(Cause::LowSnr) => fates.low_snr += 1,
            Some(Cause::Suppression) | None => fates.suppression += 1,
        }
    }

    // A transmission is useful if some gateway-bound copy descends from it.
    let sink_tx: Vec<TxId> = trace
        .receptions
        .iter()
        .filter(|r| r.receiver == gateway && r.outcome == ReceptionOutcome::Delivered && measured(r.uid))
        .map(|r| r.tx)
        .collect();
    let is_ancestor = |anc: TxId, mut of: TxId| loop {
        if of == anc {
            return true;
        }
        match parents.get(&of).copied().flatten() {
            Some(p) => of = p,
            None => return false,
        }
    };
    let counted: Vec<TxId> = report
        .transmissions
        .iter()
        .filter(|t| measured(t.uid))
        .map(|t| t.id)
        .collect();
    let useful = counted
        .iter()
        .filter(|&&t| sink_tx.iter().any(|&s| is_ancestor(t, s)))
        .count();
    let efficiency = (!counted.is_empty()).then(|| useful as f64 / counted.len() as f64);

    Replay {
        fates,
        efficiency,
        parents,
    }
}
