//! Single-threaded discrete-event core.

mod report;
mod scheduler;

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;

pub use report::{
    Death, DeliveryRecord, LineageRecord, MobilitySample, ProtocolEventKind, ProtocolEventRecord,
    ReceptionRecord, RunCounters, SimReport, TraceLogs, TransmissionRecord, WallClock,
};
pub use scheduler::{Event, EventKind, EventQueue};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::forwarding::{Forwarder, NodeId, PacketHeader, PacketUid, ReceiveAction, ReceiveContext, TimerOutcome};
use crate::geometry::{Heading, RoadNetwork, SegmentId};
use crate::metrics::DropReason;
use crate::mobility::{self, NodeKinematics};
use crate::radio::{Channel, ReceptionOutcome, TxEvent, TxId};
use crate::rng::{substream, SimRng, Stream};

struct Node {
    kin: NodeKinematics,
    forwarder: Forwarder,
    protocol_rng: SimRng,
    channel_rng: SimRng,
    mobility_rng: SimRng,
    /// First generation time; `None` for nodes that do not generate.
    phase: Option<f64>,
    next_seq: u32,
    /// Receptions in progress: `(transmission, index into its receiver list)`.
    incoming: Vec<(TxId, u32)>,
    busy_until: f64,
    transmitting: Option<TxId>,
}

struct RxSlot {
    node: u32,
    distance: f64,
    collided: bool,
}

struct ActiveTx {
    event: TxEvent,
    receivers: Vec<RxSlot>,
}

struct World {
    cfg: SimConfig,
    net: RoadNetwork,
    channel: Channel,
    range: f64,
    nodes: Vec<Node>,
    gateway: usize,
    queue: EventQueue,
    active: HashMap<TxId, ActiveTx>,
    next_tx: u64,
    lineages: Vec<LineageRecord>,
    deliveries: Vec<DeliveryRecord>,
    transmissions: Vec<TransmissionRecord>,
    trace: Option<TraceLogs>,
    counters: RunCounters,
}

/// Runs one simulation to its horizon.
pub fn run(cfg: &SimConfig) -> Result<SimReport> {
    let started = Instant::now();
    let mut world = World::new(cfg)?;
    world.seed_events();
    let horizon = cfg.horizon();
    while let Some(ev) = world.queue.pop_until(horizon) {
        world.counters.events += 1;
        world.dispatch(ev);
    }
    let mut report = world.into_report();
    report.wall_clock = WallClock {
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok(report)
}

impl World {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let net = cfg.topology.build()?;
        let channel = Channel::new(&cfg.radio)?;
        let protocol = cfg.protocol.variant(cfg.default_tau());
        let placements = match &cfg.nodes {
            Some(nodes) => nodes.clone(),
            None => mobility::init_nodes(&net, &cfg.mobility, &mut substream(cfg.seed, Stream::Placement, 0)),
        };
        if placements.is_empty() {
            return Err(Error::config("mobility.density", "scenario has no nodes"));
        }
        let period = cfg.generation_period();
        let mut nodes: Vec<Node> = placements
            .into_iter()
            .enumerate()
            .map(|(i, kin)| {
                let i = i as u64;
                let generates = cfg.traffic.sources.as_ref().is_none_or(|s| s.contains(&(i as u32)));
                let phase = generates.then(|| substream(cfg.seed, Stream::Traffic, i).random_range(0.0..period));
                Node {
                    kin,
                    forwarder: Forwarder::new(protocol),
                    protocol_rng: substream(cfg.seed, Stream::Protocol, i),
                    channel_rng: substream(cfg.seed, Stream::Channel, i),
                    mobility_rng: substream(cfg.seed, Stream::Mobility, i),
                    phase,
                    next_seq: 0,
                    incoming: Vec::new(),
                    busy_until: 0.0,
                    transmitting: None,
                }
            })
            .collect();
        let gateway = nodes.len();
        nodes.push(Node {
            kin: NodeKinematics {
                position: net.gateway(),
                speed: 0.0,
                heading: Heading::East,
            },
            forwarder: Forwarder::gateway(protocol),
            protocol_rng: substream(cfg.seed, Stream::Protocol, gateway as u64),
            channel_rng: substream(cfg.seed, Stream::Channel, gateway as u64),
            mobility_rng: substream(cfg.seed, Stream::Mobility, gateway as u64),
            phase: None,
            next_seq: 0,
            incoming: Vec::new(),
            busy_until: 0.0,
            transmitting: None,
        });
        Ok(Self {
            range: cfg.radio.comm_range,
            cfg: cfg.clone(),
            net,
            channel,
            nodes,
            gateway,
            queue: EventQueue::new(),
            active: HashMap::new(),
            next_tx: 0,
            lineages: Vec::new(),
            deliveries: Vec::new(),
            transmissions: Vec::new(),
            trace: cfg.trace.then(TraceLogs::default),
            counters: RunCounters::default(),
        })
    }

    fn seed_events(&mut self) {
        for i in 0..self.gateway {
            if let Some(phase) = self.nodes[i].phase {
                if phase < self.cfg.generation_end() {
                    self.queue.schedule(phase, EventKind::GeneratePacket(NodeId(i as u32)));
                }
            }
        }
        if self.nodes.iter().any(|n| n.kin.speed > 0.0) || self.trace.is_some() {
            self.record_mobility(0.0);
            self.queue.schedule(self.cfg.mobility.update_interval, EventKind::MobilityTick);
        }
    }

    fn dispatch(&mut self, ev: Event) {
        let now = ev.time;
        match ev.kind {
            EventKind::GeneratePacket(node) => self.generate(node, now),
            EventKind::MobilityTick => self.mobility_tick(now),
            EventKind::TxStart(tx) => self.tx_start(*tx, now),
            EventKind::TxEnd(id) => self.tx_end(id, now),
            EventKind::WaitExpiry(node, uid) => {
                if let Some(pf) = self.nodes[node.0 as usize].forwarder.pending(uid) {
                    let at = pf.timer_expiry;
                    self.queue.schedule(at, EventKind::TimerExpiry(node, uid));
                }
            }
            EventKind::TimerExpiry(node, uid) => self.timer_expiry(node, uid, now),
        }
    }

    fn generate(&mut self, node: NodeId, now: f64) {
        let idx = node.0 as usize;
        let period = self.cfg.generation_period();
        let uid = PacketUid(self.lineages.len() as u32);
        let n = &mut self.nodes[idx];
        let seq = n.next_seq;
        n.next_seq += 1;
        let position = n.kin.position;
        let segment = self
            .net
            .segment_of(position, n.kin.heading)
            .unwrap_or(SegmentId::GATEWAY);
        let header = PacketHeader {
            uid,
            source: node,
            seq,
            origin_position: position,
            origin_segment: segment,
            origin_time: now,
            prev_hop_position: position,
            hop_count: 0,
        };
        self.lineages.push(LineageRecord {
            uid,
            source: node,
            seq,
            origin_time: now,
            origin_segment: segment,
            measured: now >= self.cfg.warmup,
            first_delivery: None,
            last_death: None,
        });
        let delay = self.channel.access_delay(&mut n.protocol_rng);
        let pf = n.forwarder.originate(header, now, delay);
        let phase = n.phase.expect("generating node has a phase");
        let next = phase + f64::from(n.next_seq) * period;
        self.queue.schedule(pf.wait_deadline, EventKind::WaitExpiry(node, uid));
        log_protocol(&mut self.trace, now, node, uid, ProtocolEventKind::Scheduled);
        if next < self.cfg.generation_end() {
            self.queue.schedule(next, EventKind::GeneratePacket(node));
        }
    }

    fn mobility_tick(&mut self, now: f64) {
        let dt = self.cfg.mobility.update_interval;
        for n in self.nodes[..self.gateway].iter_mut() {
            if n.kin.speed > 0.0 {
                n.kin = mobility::advance(n.kin, dt, &self.net, &mut n.mobility_rng);
            }
        }
        self.record_mobility(now);
        let next = now + dt;
        if next <= self.cfg.horizon() {
            self.queue.schedule(next, EventKind::MobilityTick);
        }
    }

    fn record_mobility(&mut self, now: f64) {
        if let Some(trace) = &mut self.trace {
            for (i, n) in self.nodes[..self.gateway].iter().enumerate() {
                trace.mobility.push(MobilitySample {
                    time: now,
                    node: NodeId(i as u32),
                    x: n.kin.position.x,
                    y: n.kin.position.y,
                });
            }
        }
    }

    fn timer_expiry(&mut self, node: NodeId, uid: PacketUid, now: f64) {
        let idx = node.0 as usize;
        let n = &mut self.nodes[idx];
        let position = n.kin.position;
        let Some((pf, outcome)) = n.forwarder.on_timer_expire(uid, position, self.range, &mut n.protocol_rng) else {
            return;
        };
        match outcome {
            TimerOutcome::Forward(packet) => {
                let id = TxId(self.next_tx);
                self.next_tx += 1;
                let airtime = self.channel.airtime();
                let tx = TxEvent {
                    id,
                    sender: node,
                    packet,
                    start: now,
                    end: now + airtime,
                    sender_position: position,
                };
                self.transmissions.push(TransmissionRecord {
                    id,
                    uid,
                    sender: node,
                    start: now,
                    end: now + airtime,
                    hop_count: tx.packet.hop_count,
                    parent: pf.trigger,
                    receivers: 0,
                });
                log_protocol(&mut self.trace, now, node, uid, ProtocolEventKind::Forwarded);
                self.queue.schedule(now, EventKind::TxStart(Box::new(tx)));
            }
            TimerOutcome::ProbSuppressed => {
                record_death(&mut self.lineages, uid, now, DropReason::Suppression);
                log_protocol(&mut self.trace, now, node, uid, ProtocolEventKind::ProbSuppressed);
            }
        }
    }

    fn tx_start(&mut self, mut tx: TxEvent, now: f64) {
        let sender = tx.sender.0 as usize;
        if self.nodes[sender].busy_until > now {
            // Still on air with an earlier packet: queue behind it.
            let at = self.nodes[sender].busy_until;
            self.defer(tx, at);
            return;
        }
        let id = tx.id;
        let sender_pos = self.nodes[sender].kin.position;
        tx.sender_position = sender_pos;
        let mut active = ActiveTx {
            event: tx,
            receivers: Vec::new(),
        };

        // The sender goes deaf: everything it was receiving is lost.
        let s = &mut self.nodes[sender];
        s.busy_until = active.event.end;
        s.transmitting = Some(id);
        let lost: Vec<(TxId, u32)> = s.incoming.clone();
        for (other, slot) in lost {
            if let Some(a) = self.active.get_mut(&other) {
                a.receivers[slot as usize].collided = true;
            }
        }

        for (r, node) in self.nodes.iter().enumerate() {
            if r == sender || !self.channel.in_cutoff(&self.net, sender_pos, node.kin.position) {
                continue;
            }
            active.receivers.push(RxSlot {
                node: r as u32,
                distance: sender_pos.distance(&node.kin.position),
                collided: false,
            });
        }
        for slot_idx in 0..active.receivers.len() {
            let r = active.receivers[slot_idx].node as usize;
            let node = &mut self.nodes[r];
            if !node.incoming.is_empty() || node.transmitting.is_some() {
                active.receivers[slot_idx].collided = true;
                let others: Vec<(TxId, u32)> = node.incoming.clone();
                for (other, slot) in others {
                    if let Some(a) = self.active.get_mut(&other) {
                        a.receivers[slot as usize].collided = true;
                    }
                }
            }
            self.nodes[r].incoming.push((id, slot_idx as u32));
        }
        self.transmissions[id.0 as usize].receivers = active.receivers.len() as u32;
        self.counters.transmissions += 1;
        self.queue.schedule(active.event.end, EventKind::TxEnd(id));
        self.active.insert(id, active);
    }

    fn defer(&mut self, mut tx: TxEvent, at: f64) {
        let airtime = tx.end - tx.start;
        tx.start = at;
        tx.end = at + airtime;
        let record = &mut self.transmissions[tx.id.0 as usize];
        record.start = tx.start;
        record.end = tx.end;
        self.queue.schedule(at, EventKind::TxStart(Box::new(tx)));
    }

    fn tx_end(&mut self, id: TxId, now: f64) {
        let active = self.active.remove(&id).expect("ending transmission is active");
        let sender = active.event.sender.0 as usize;
        if self.nodes[sender].transmitting == Some(id) {
            self.nodes[sender].transmitting = None;
        }
        let packet = &active.event.packet;
        let uid = packet.uid;
        let gateway = self.nodes[self.gateway].kin.position;

        let mut fresh = 0u32;
        let mut reached_sink = false;
        let mut lost_to_collision = false;
        let mut lost_to_low_snr = false;
        let mut duplicate = false;

        for slot in &active.receivers {
            let r = slot.node as usize;
            let node = &mut self.nodes[r];
            if let Some(pos) = node.incoming.iter().position(|&(t, _)| t == id) {
                node.incoming.swap_remove(pos);
            }
            let outcome = if slot.collided {
                ReceptionOutcome::Collision
            } else {
                let gain = self.channel.fading_gain(&mut node.channel_rng);
                self.channel.decode(slot.distance, gain)
            };
            self.counters.receptions += 1;
            if let Some(trace) = &mut self.trace {
                trace.receptions.push(ReceptionRecord {
                    tx: id,
                    time: now,
                    sender: active.event.sender,
                    uid,
                    receiver: NodeId(slot.node),
                    outcome,
                    distance: slot.distance,
                });
            }
            let had = node.forwarder.has_seen(uid);
            match outcome {
                ReceptionOutcome::Delivered if r == self.gateway => {
                    self.deliveries.push(DeliveryRecord {
                        uid,
                        time: now,
                        hop_count: packet.hop_count,
                        tx: id,
                    });
                    if node.forwarder.mark_seen(uid) {
                        reached_sink = true;
                        self.lineages[uid.0 as usize].first_delivery = Some(now);
                    }
                }
                ReceptionOutcome::Delivered => {
                    let access_delay = if had { 0.0 } else { self.channel.access_delay(&mut node.protocol_rng) };
                    let ctx = ReceiveContext {
                        now,
                        own_position: node.kin.position,
                        gateway,
                        range: self.range,
                        access_delay,
                        trigger: id,
                    };
                    match node.forwarder.on_receive(packet, &ctx) {
                        ReceiveAction::Scheduled(pf) => {
                            fresh += 1;
                            self.queue.schedule(pf.wait_deadline, EventKind::WaitExpiry(NodeId(slot.node), uid));
                            log_protocol(&mut self.trace, now, NodeId(slot.node), uid, ProtocolEventKind::Scheduled);
                        }
                        ReceiveAction::Cancelled(_) => {
                            duplicate = true;
                            record_death(&mut self.lineages, uid, now, DropReason::Suppression);
                            log_protocol(&mut self.trace, now, NodeId(slot.node), uid, ProtocolEventKind::Cancelled);
                        }
                        ReceiveAction::Ignored => duplicate = true,
                    }
                }
                ReceptionOutcome::Collision | ReceptionOutcome::LowSnr => {
                    if outcome == ReceptionOutcome::Collision {
                        self.counters.collisions += 1;
                    } else {
                        self.counters.low_snr += 1;
                    }
                    if !had && slot.distance <= self.range {
                        lost_to_collision |= outcome == ReceptionOutcome::Collision;
                        lost_to_low_snr |= outcome == ReceptionOutcome::LowSnr;
                    }
                }
                ReceptionOutcome::OutOfRange => {}
            }
        }

        if fresh == 0 && !reached_sink {
            let reason = if lost_to_collision {
                DropReason::Collision
            } else if lost_to_low_snr || !duplicate {
                DropReason::LowSnr
            } else {
                DropReason::Suppression
            };
            record_death(&mut self.lineages, uid, now, reason);
        }
    }

    fn into_report(self) -> SimReport {
        SimReport {
            node_count: self.gateway,
            gateway: NodeId(self.gateway as u32),
            segment_count: self.net.segment_count(),
            tx_power_dbm: self.channel.tx_power_dbm(),
            measure_start: self.cfg.warmup,
            measure_end: self.cfg.generation_end(),
            horizon: self.cfg.horizon(),
            counters: self.counters,
            lineages: self.lineages,
            deliveries: self.deliveries,
            transmissions: self.transmissions,
            trace: self.trace,
            config: self.cfg,
            wall_clock: WallClock::default(),
        }
    }
}

fn record_death(lineages: &mut [LineageRecord], uid: PacketUid, time: f64, reason: DropReason) {
    let death = Death { time, reason };
    let lineage = &mut lineages[uid.0 as usize];
    if lineage.last_death.is_none_or(|d| death.supersedes(&d)) {
        lineage.last_death = Some(death);
    }
}

fn log_protocol(trace: &mut Option<TraceLogs>, time: f64, node: NodeId, uid: PacketUid, kind: ProtocolEventKind) {
    if let Some(trace) = trace {
        trace.protocol_events.push(ProtocolEventRecord { time, node, uid, kind });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Position;
    use crate::metrics::{self, PacketFate};

    fn parked(x: f64, y: f64) -> NodeKinematics {
        NodeKinematics {
            position: Position::new(x, y),
            speed: 0.0,
            heading: Heading::East,
        }
    }

    fn json(report: &SimReport) -> Vec<u8> {
        let mut buf = Vec::new();
        report.write_json(&mut buf).unwrap();
        buf
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SimConfig {
            seed: 42,
            min_packets_per_node: 3,
            ..Default::default()
        };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(json(&a), json(&b));
        assert_eq!(a.transmissions, b.transmissions);
        let c = run(&SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(json(&a), json(&c));
    }

    #[test]
    fn default_horizon_is_twenty_seconds() {
        let cfg = SimConfig {
            min_packets_per_node: 20,
            mobility: crate::mobility::MobilityConfig {
                density: 0.5,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = run(&cfg).unwrap();
        assert!((report.horizon - 20.0).abs() < 1e-12);
        assert!(report.transmissions.iter().all(|t| t.start <= report.horizon));
        assert!(report.lineages.iter().all(|l| l.origin_time < report.measure_end));
    }

    #[test]
    fn lone_node_at_gateway_delivers_every_packet() {
        let cfg = SimConfig {
            nodes: Some(vec![parked(1250.0, 1250.0)]),
            ..Default::default()
        };
        let report = run(&cfg).unwrap();
        let measured: Vec<_> = report.lineages.iter().filter(|l| l.measured).collect();
        assert_eq!(measured.len(), 20);
        assert!(measured.iter().all(|l| metrics::fate(l) == PacketFate::Delivered));
        let seg = report.lineages[0].origin_segment;
        let table = metrics::sensing_accuracy(&report);
        assert_eq!(table.windows, 16);
        assert!((table.rate(seg).unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(metrics::network_efficiency(&report), Some(1.0));
    }

    #[test]
    fn unheard_packet_dies_of_low_snr() {
        let cfg = SimConfig {
            nodes: Some(vec![parked(0.0, 0.0)]),
            min_packets_per_node: 2,
            ..Default::default()
        };
        let report = run(&cfg).unwrap();
        assert!(report.deliveries.is_empty());
        assert!(report.transmissions.iter().all(|t| t.receivers == 0));
        for l in &report.lineages {
            assert_eq!(metrics::fate(l), PacketFate::DiedLowSnr);
        }
    }

    #[test]
    fn relay_chain_reaches_gateway() {
        // source 900 m out on the gateway's road, relay halfway
        let mut cfg = SimConfig {
            nodes: Some(vec![parked(350.0, 1250.0), parked(800.0, 1250.0)]),
            min_packets_per_node: 5,
            ..Default::default()
        };
        cfg.radio.fading = false;
        cfg.traffic.sources = Some(vec![0]);
        let report = run(&cfg).unwrap();
        let measured = report.lineages.iter().filter(|l| l.measured).count();
        assert_eq!(measured, 5);
        assert!(report.lineages.iter().all(|l| l.first_delivery.is_some()));
        for d in &report.deliveries {
            assert_eq!(d.hop_count, 2);
            let relay = &report.transmissions[d.tx.0 as usize];
            assert_eq!(relay.sender, NodeId(1));
            let origin = &report.transmissions[relay.parent.unwrap().0 as usize];
            assert_eq!(origin.sender, NodeId(0));
            assert!(origin.parent.is_none());
        }
        assert_eq!(metrics::network_efficiency(&report), Some(1.0));
    }

    #[test]
    fn every_lineage_has_one_fate() {
        let cfg = SimConfig {
            seed: 5,
            min_packets_per_node: 4,
            mobility: crate::mobility::MobilityConfig {
                density: 8.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = run(&cfg).unwrap();
        for (i, l) in report.lineages.iter().enumerate() {
            assert_eq!(l.uid.0 as usize, i);
        }
        let drops = metrics::drop_analysis(&report);
        assert_eq!(
            drops.delivered + drops.suppression + drops.collision + drops.low_snr,
            drops.lineages
        );
        assert!((drops.pct_total() - 100.0).abs() < 1e-9);
        let eff = metrics::network_efficiency(&report).unwrap();
        assert!((0.0..=1.0).contains(&eff));
        assert_eq!(report.counters.transmissions as usize, report.transmissions.len());
    }

    #[test]
    fn trace_logs_cover_every_reception() {
        let cfg = SimConfig {
            trace: true,
            min_packets_per_node: 2,
            mobility: crate::mobility::MobilityConfig {
                density: 2.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = run(&cfg).unwrap();
        let trace = report.trace.as_ref().unwrap();
        let expected: u32 = report.transmissions.iter().map(|t| t.receivers).sum();
        assert_eq!(trace.receptions.len(), expected as usize);
        assert_eq!(report.counters.receptions, u64::from(expected));
        assert!(!trace.mobility.is_empty());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = SimConfig::default();
        cfg.mobility.density = -1.0;
        assert!(run(&cfg).unwrap_err().to_string().contains("mobility.density"));
    }
}
