use std::collections::HashSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use udc::config::{SimConfig, TopologyConfig};
use udc::forwarding::{
    forwarding_probability, slotted1_slot, timer_coefficient, NodeId, PacketHeader, PacketUid, SuppressionMode,
};
use udc::geometry::{Position, RoadNetwork, SegmentId};
use udc::metrics::{drop_analysis, fate, network_efficiency, sensing_accuracy, PacketFate};
use udc::mobility::{advance, init_nodes, MobilityConfig};
use udc::radio::{reception_outcome, Channel, RadioConfig, TxEvent, TxId};
use udc::scenario::ProtocolChoice;

const R: f64 = 500.0;

fn mode() -> impl Strategy<Value = SuppressionMode> {
    prop::sample::select(SuppressionMode::ALL.to_vec())
}

fn choice() -> impl Strategy<Value = ProtocolChoice> {
    prop::sample::select(ProtocolChoice::all())
}

fn tiny(density: f64, choice: ProtocolChoice, seed: u64) -> SimConfig {
    let mut cfg = SimConfig {
        seed,
        warmup: 0.5,
        min_packets_per_node: 3,
        drain: 0.5,
        trace: true,
        topology: TopologyConfig {
            extent: 1250.0,
            roads_per_axis: 3,
            gateway: [1, 1],
        },
        ..Default::default()
    };
    cfg.mobility.density = density;
    choice.apply(&mut cfg);
    cfg
}

proptest! {
    #[test]
    fn timer_coefficient_is_a_unit_interval_ramp(d_i in 0.0..3000.0f64, a in 0.0..3000.0f64, b in 0.0..3000.0f64) {
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        let c_near = timer_coefficient(d_i, near, R);
        let c_far = timer_coefficient(d_i, far, R);
        prop_assert!((0.0..=1.0).contains(&c_near) && (0.0..=1.0).contains(&c_far));
        prop_assert!(c_near <= c_far);
    }

    #[test]
    fn probabilities_are_bounded_and_favour_progress(
        m in mode(), d_i in 0.0..3000.0f64, a in 0.0..3000.0f64, b in 0.0..3000.0f64,
    ) {
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        let p_near = forwarding_probability(m, d_i, near, R);
        let p_far = forwarding_probability(m, d_i, far, R);
        prop_assert!((0.0..=1.0).contains(&p_near) && (0.0..=1.0).contains(&p_far));
        prop_assert!(p_near >= p_far);
        if m == SuppressionMode::Basic {
            prop_assert_eq!(p_far, 1.0);
        }
    }

    #[test]
    fn weaker_modes_forward_at_least_as_often(d_i in 0.0..3000.0f64, d_j in 0.0..3000.0f64) {
        let p = |m| forwarding_probability(m, d_i, d_j, R);
        prop_assert!(p(SuppressionMode::Basic) >= p(SuppressionMode::Weak));
        prop_assert!(p(SuppressionMode::Weak) >= p(SuppressionMode::Moderate));
        prop_assert!(p(SuppressionMode::Moderate) >= p(SuppressionMode::Strong));
    }

    #[test]
    fn slot_shrinks_with_distance(n in 1u32..16, a in 0.0..1000.0f64, b in 0.0..1000.0f64) {
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(slotted1_slot(near, R, n) <= n);
        prop_assert!(slotted1_slot(near, R, n) >= slotted1_slot(far, R, n));
    }

    #[test]
    fn collision_ignores_order_of_overlapping_set(
        senders in prop::collection::vec((0.0..2500.0f64, 0.0..0.01f64), 1..8),
        rx_x in 0.0..2500.0f64,
        seed in any::<u64>(),
        shuffle_seed in any::<u64>(),
    ) {
        let net = RoadNetwork::build_grid(2500.0, 5, (2, 2)).unwrap();
        let channel = Channel::new(&RadioConfig::default()).unwrap();
        let airtime = channel.airtime();
        let txs: Vec<TxEvent> = senders
            .iter()
            .enumerate()
            .map(|(i, &(x, start))| TxEvent {
                id: TxId(i as u64),
                sender: NodeId(i as u32 + 1),
                packet: PacketHeader {
                    uid: PacketUid(i as u32),
                    source: NodeId(i as u32 + 1),
                    seq: 0,
                    origin_position: Position::new(x, 0.0),
                    origin_segment: SegmentId(0),
                    origin_time: start,
                    prev_hop_position: Position::new(x, 0.0),
                    hop_count: 1,
                },
                start,
                end: start + airtime,
                sender_position: Position::new(x, 0.0),
            })
            .collect();
        let rx_pos = Position::new(rx_x, 0.0);
        let mut shuffled = txs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        for tx in &txs {
            let a = reception_outcome(&channel, &net, NodeId(0), rx_pos, tx, &txs, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = reception_outcome(&channel, &net, NodeId(0), rx_pos, tx, &shuffled, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn nodes_stay_on_roads(seed in any::<u64>(), steps in 1usize..200, dt in 0.01..5.0f64) {
        let net = RoadNetwork::build_grid(1250.0, 3, (1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = MobilityConfig { density: 8.0, ..Default::default() };
        let mut nodes = init_nodes(&net, &cfg, &mut rng);
        for _ in 0..steps {
            for n in nodes.iter_mut() {
                *n = advance(*n, dt, &net, &mut rng);
                prop_assert!(net.is_on_road(n.position), "{:?}", n.position);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn runs_conserve_lineages(density in 1.0..12.0f64, choice in choice(), seed in 0u64..1000) {
        let report = udc::run(&tiny(density, choice, seed)).unwrap();

        let measured: Vec<_> = report.lineages.iter().filter(|l| l.measured).collect();
        let drops = drop_analysis(&report);
        prop_assert_eq!(drops.lineages, measured.len());
        prop_assert_eq!(
            drops.delivered + drops.suppression + drops.collision + drops.low_snr,
            drops.lineages
        );
        prop_assert!((drops.pct_total() - 100.0).abs() <= 0.01);

        let delivered: HashSet<PacketUid> = report.deliveries.iter().map(|d| d.uid).collect();
        for l in &report.lineages {
            prop_assert_eq!(l.first_delivery.is_some(), delivered.contains(&l.uid));
            prop_assert_eq!(fate(l) == PacketFate::Delivered, l.first_delivery.is_some());
        }

        if let Some(e) = network_efficiency(&report) {
            prop_assert!((0.0..=1.0).contains(&e));
        }

        let trace = report.trace.as_ref().unwrap();
        let mut seen = HashSet::new();
        for r in &trace.receptions {
            prop_assert!(seen.insert((r.tx, r.receiver)), "two outcomes for one link");
            prop_assert!(r.receiver != report.transmissions[r.tx.0 as usize].sender);
        }
    }

    #[test]
    fn sensing_ignores_lineage_order(density in 1.0..8.0f64, seed in 0u64..1000, shuffle_seed in any::<u64>()) {
        let mut report = udc::run(&tiny(density, ProtocolChoice::Slotted1, seed)).unwrap();
        let before = sensing_accuracy(&report);
        prop_assert!(before.segments.iter().all(|s| s.rate >= 0.0));
        report.lineages.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        prop_assert_eq!(sensing_accuracy(&report), before);
    }
}
