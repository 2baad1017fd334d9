//! Random-direction Manhattan walk.
//!
//! Nodes keep a constant speed for the whole run and pick a new heading at
//! every intersection they cross, never reversing unless no other exit exists.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, Heading, Position, RoadNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeKinematics {
    pub position: Position,
    /// Meters per second.
    pub speed: f64,
    pub heading: Heading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    /// Nodes per kilometer of road.
    pub density: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Position update tick in seconds.
    pub update_interval: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            density: 4.0,
            min_speed: 3.0,
            max_speed: 25.0,
            update_interval: 0.1,
        }
    }
}

impl MobilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(Error::config("mobility.density", "must be positive"));
        }
        if !(self.min_speed.is_finite() && self.min_speed >= 0.0) {
            return Err(Error::config("mobility.min_speed", "must be non-negative"));
        }
        if !(self.max_speed.is_finite() && self.max_speed >= self.min_speed) {
            return Err(Error::config("mobility.max_speed", "must be at least min_speed"));
        }
        if !(self.update_interval.is_finite() && self.update_interval > 0.0) {
            return Err(Error::config("mobility.update_interval", "must be positive"));
        }
        Ok(())
    }

    pub fn node_count(&self, net: &RoadNetwork) -> usize {
        (self.density * net.total_road_length() / 1000.0).round() as usize
    }
}

/// Places `round(density * road_km)` nodes uniformly over the road length.
pub fn init_nodes<R: Rng + ?Sized>(
    net: &RoadNetwork,
    cfg: &MobilityConfig,
    rng: &mut R,
) -> Vec<NodeKinematics> {
    let n = cfg.node_count(net);
    let segments = net.segment_count();
    (0..n)
        .map(|_| {
            let id = crate::geometry::SegmentId(rng.random_range(0..segments) as u32);
            let seg = net.segment(id).expect("segment index in range");
            let (lo, _) = net.segment_endpoints(seg);
            let offset = rng.random_range(0.0..net.spacing());
            let forward = rng.random_bool(0.5);
            let (position, heading) = match seg.axis {
                Axis::Horizontal => (
                    Position::new(lo.x + offset, lo.y),
                    if forward { Heading::East } else { Heading::West },
                ),
                Axis::Vertical => (
                    Position::new(lo.x, lo.y + offset),
                    if forward { Heading::North } else { Heading::South },
                ),
            };
            let speed = if cfg.max_speed > cfg.min_speed {
                rng.random_range(cfg.min_speed..=cfg.max_speed)
            } else {
                cfg.min_speed
            };
            NodeKinematics { position, speed, heading }
        })
        .collect()
}

/// Moves a node `speed * dt` meters along the grid.
pub fn advance<R: Rng + ?Sized>(
    node: NodeKinematics,
    dt: f64,
    net: &RoadNetwork,
    rng: &mut R,
) -> NodeKinematics {
    let mut node = node;
    let mut remaining = node.speed * dt;
    let spacing = net.spacing();
    let last = (net.roads_per_axis() - 1) as f64;
    // Bounded: each pass either consumes the remainder or reaches an intersection.
    while remaining > 0.0 {
        let along = match node.heading.axis() {
            Axis::Horizontal => node.position.x,
            Axis::Vertical => node.position.y,
        };
        let u = along / spacing;
        let next = if node.heading.is_positive() {
            (u + 1e-9).floor() + 1.0
        } else {
            (u - 1e-9).ceil() - 1.0
        };
        if next < 0.0 || next > last {
            // Sitting on a boundary intersection facing off the map.
            node.heading = choose_exit(net, node.position, node.heading, rng);
            snap_to_intersection(net, &mut node.position);
            continue;
        }
        let to_next = (next * spacing - along).abs();
        let (dx, dy) = node.heading.unit();
        if remaining < to_next {
            node.position.x += dx * remaining;
            node.position.y += dy * remaining;
            remaining = 0.0;
        } else {
            node.position.x += dx * to_next;
            node.position.y += dy * to_next;
            remaining -= to_next;
            snap_to_intersection(net, &mut node.position);
            node.heading = choose_exit(net, node.position, node.heading, rng);
        }
    }
    node
}

fn snap_to_intersection(net: &RoadNetwork, p: &mut Position) {
    let s = net.spacing();
    let last = (net.roads_per_axis() - 1) as f64;
    p.x = (p.x / s).round().clamp(0.0, last) * s;
    p.y = (p.y / s).round().clamp(0.0, last) * s;
}

/// New heading at an intersection: uniform over exits other than reversal,
/// reversal only at a dead end.
fn choose_exit<R: Rng + ?Sized>(net: &RoadNetwork, p: Position, heading: Heading, rng: &mut R) -> Heading {
    let s = net.spacing();
    let last = net.roads_per_axis() - 1;
    let i = ((p.x / s).round().max(0.0) as usize).min(last);
    let j = ((p.y / s).round().max(0.0) as usize).min(last);
    let options: Vec<Heading> = net.exits((i, j)).filter(|h| *h != heading.reverse()).collect();
    if options.is_empty() {
        heading.reverse()
    } else {
        options[rng.random_range(0..options.len())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> RoadNetwork {
        RoadNetwork::build_grid(2500.0, 5, (2, 2)).unwrap()
    }

    #[test]
    fn node_counts_follow_density() {
        let net = net();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = MobilityConfig { density: 4.0, ..Default::default() };
        assert_eq!(init_nodes(&net, &cfg, &mut rng).len(), 100);
        let cfg = MobilityConfig { density: 42.0, ..Default::default() };
        assert_eq!(init_nodes(&net, &cfg, &mut rng).len(), 1050);
    }

    #[test]
    fn placement_is_deterministic() {
        let net = net();
        let cfg = MobilityConfig::default();
        let a = init_nodes(&net, &cfg, &mut substream(9, Stream::Placement, 0));
        let b = init_nodes(&net, &cfg, &mut substream(9, Stream::Placement, 0));
        assert_eq!(a, b);
        let c = init_nodes(&net, &cfg, &mut substream(10, Stream::Placement, 0));
        assert_ne!(a, c);
    }

    #[test]
    fn placements_are_on_road_with_aligned_headings() {
        let net = net();
        let cfg = MobilityConfig { density: 42.0, ..Default::default() };
        for n in init_nodes(&net, &cfg, &mut ChaCha8Rng::seed_from_u64(3)) {
            assert!(net.is_on_road(n.position));
            match n.heading.axis() {
                Axis::Horizontal => assert!(net.road_index(n.position.y).is_some()),
                Axis::Vertical => assert!(net.road_index(n.position.x).is_some()),
            }
            assert!((3.0..=25.0).contains(&n.speed));
        }
    }

    #[test]
    fn mean_speed_is_midpoint() {
        let net = net();
        let cfg = MobilityConfig { density: 200.0, ..Default::default() };
        let nodes = init_nodes(&net, &cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(nodes.len() >= 1000);
        let mean = nodes.iter().map(|n| n.speed).sum::<f64>() / nodes.len() as f64;
        assert!((mean - 14.0).abs() / 14.0 < 0.02, "mean speed {mean}");
    }

    #[test]
    fn straight_move_inside_block() {
        let net = net();
        let n = NodeKinematics {
            position: Position::new(100.0, 625.0),
            speed: 10.0,
            heading: Heading::East,
        };
        let out = advance(n, 0.1, &net, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out.heading, Heading::East);
        assert!((out.position.x - 101.0).abs() < 1e-12);
        assert_eq!(out.position.y, 625.0);
    }

    #[test]
    fn overshoot_carries_into_new_heading() {
        let net = net();
        // 10 m before intersection (625, 625), moves 20 m
        let n = NodeKinematics {
            position: Position::new(615.0, 625.0),
            speed: 20.0,
            heading: Heading::East,
        };
        for seed in 0..20 {
            let out = advance(n, 1.0, &net, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_ne!(out.heading, Heading::West);
            let from_corner = out.position.distance(&Position::new(625.0, 625.0));
            assert!((from_corner - 10.0).abs() < 1e-9);
            assert!(net.is_on_road(out.position));
        }
    }

    #[test]
    fn corner_forces_a_turn() {
        let net = net();
        let n = NodeKinematics {
            position: Position::new(0.0, 0.0),
            speed: 5.0,
            heading: Heading::West,
        };
        // The only non-reversing exit from (0,0) heading west is north.
        let out = advance(n, 1.0, &net, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out.heading, Heading::North);
        assert!((out.position.y - 5.0).abs() < 1e-12);
        // Arriving at the corner heading south must turn east.
        let n = NodeKinematics {
            position: Position::new(0.0, 3.0),
            speed: 5.0,
            heading: Heading::South,
        };
        let out = advance(n, 1.0, &net, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(out.heading, Heading::East);
        assert!((out.position.x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_t_junction_has_two_choices() {
        let net = net();
        let n = NodeKinematics {
            position: Position::new(1245.0, 0.0),
            speed: 10.0,
            heading: Heading::East,
        };
        let seen: std::collections::HashSet<Heading> = (0..64)
            .map(|s| advance(n, 1.0, &net, &mut ChaCha8Rng::seed_from_u64(s)).heading)
            .collect();
        assert_eq!(seen, [Heading::East, Heading::North].into_iter().collect());
    }

    #[test]
    fn long_walks_stay_on_road() {
        let net = net();
        let cfg = MobilityConfig { density: 4.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut nodes = init_nodes(&net, &cfg, &mut rng);
        let count = nodes.len();
        for _ in 0..2000 {
            for n in nodes.iter_mut() {
                *n = advance(*n, 0.1, &net, &mut rng);
                assert!(net.is_on_road(n.position), "{:?}", n);
                net.segment_of(n.position, n.heading).unwrap();
            }
        }
        assert_eq!(nodes.len(), count);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = MobilityConfig { density: -1.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("mobility.density"));
        let bad = MobilityConfig { min_speed: 30.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("mobility.max_speed"));
    }
}
