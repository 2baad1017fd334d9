//! Manhattan-grid road network.
//!
//! Roads run along `x = i * spacing` (vertical) and `y = j * spacing`
//! (horizontal) for `i, j in 0..roads_per_axis`. A segment is the stretch of
//! one road between two adjacent intersections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Perpendicular tolerance for "on a road", in meters.
pub const ROAD_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Direction of travel along a road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    East,
    West,
    North,
    South,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::West, Heading::North, Heading::South];

    pub fn reverse(self) -> Heading {
        match self {
            Heading::East => Heading::West,
            Heading::West => Heading::East,
            Heading::North => Heading::South,
            Heading::South => Heading::North,
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Heading::East | Heading::West => Axis::Horizontal,
            Heading::North | Heading::South => Axis::Vertical,
        }
    }

    /// Unit step `(dx, dy)`.
    pub fn unit(self) -> (f64, f64) {
        match self {
            Heading::East => (1.0, 0.0),
            Heading::West => (-1.0, 0.0),
            Heading::North => (0.0, 1.0),
            Heading::South => (0.0, -1.0),
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Heading::East | Heading::North)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    /// Road of constant `y`, travelled east/west.
    Horizontal,
    /// Road of constant `x`, travelled north/south.
    Vertical,
}

/// Opaque index of one road stretch between adjacent intersections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u32);

impl SegmentId {
    /// Placeholder segment for the stationary gateway; never counted by metrics.
    pub const GATEWAY: SegmentId = SegmentId(u32::MAX);
}

impl std::fmt::Display for SegmentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub axis: Axis,
    /// Index of the road along the perpendicular axis.
    pub road: usize,
    /// Index of the block along the road, `0..roads_per_axis - 1`.
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    extent: f64,
    roads_per_axis: usize,
    spacing: f64,
    gateway: Position,
    gateway_intersection: (usize, usize),
}

impl RoadNetwork {
    /// Builds a square grid of `roads_per_axis` roads per axis spanning
    /// `[0, extent]`, with the gateway at intersection `(i, j)`.
    pub fn build_grid(extent: f64, roads_per_axis: usize, gateway: (usize, usize)) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::config("topology.extent", "must be a positive finite length"));
        }
        if roads_per_axis < 2 {
            return Err(Error::config("topology.roads_per_axis", "must be at least 2"));
        }
        if gateway.0 >= roads_per_axis || gateway.1 >= roads_per_axis {
            return Err(Error::config(
                "topology.gateway",
                format!("intersection {gateway:?} outside a {roads_per_axis}x{roads_per_axis} grid"),
            ));
        }
        let spacing = extent / (roads_per_axis - 1) as f64;
        Ok(Self {
            extent,
            roads_per_axis,
            spacing,
            gateway: Position::new(gateway.0 as f64 * spacing, gateway.1 as f64 * spacing),
            gateway_intersection: gateway,
        })
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn roads_per_axis(&self) -> usize {
        self.roads_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn gateway(&self) -> Position {
        self.gateway
    }

    pub fn gateway_intersection(&self) -> (usize, usize) {
        self.gateway_intersection
    }

    fn blocks_per_road(&self) -> usize {
        self.roads_per_axis - 1
    }

    pub fn segment_count(&self) -> usize {
        2 * self.roads_per_axis * self.blocks_per_road()
    }

    pub fn segment_length(&self) -> f64 {
        self.spacing
    }

    /// Total road length in meters.
    pub fn total_road_length(&self) -> f64 {
        self.segment_count() as f64 * self.spacing
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = SegmentId> {
        (0..self.segment_count() as u32).map(SegmentId)
    }

    pub fn segment_id(&self, seg: Segment) -> SegmentId {
        let per_axis = self.roads_per_axis * self.blocks_per_road();
        let base = match seg.axis {
            Axis::Horizontal => 0,
            Axis::Vertical => per_axis,
        };
        SegmentId((base + seg.road * self.blocks_per_road() + seg.block) as u32)
    }

    pub fn segment(&self, id: SegmentId) -> Option<Segment> {
        let idx = id.0 as usize;
        if idx >= self.segment_count() {
            return None;
        }
        let per_axis = self.roads_per_axis * self.blocks_per_road();
        let (axis, rest) = if idx < per_axis {
            (Axis::Horizontal, idx)
        } else {
            (Axis::Vertical, idx - per_axis)
        };
        Some(Segment {
            axis,
            road: rest / self.blocks_per_road(),
            block: rest % self.blocks_per_road(),
        })
    }

    /// End points of a segment, from lower to higher coordinate.
    pub fn segment_endpoints(&self, seg: Segment) -> (Position, Position) {
        let fixed = seg.road as f64 * self.spacing;
        let a = seg.block as f64 * self.spacing;
        let b = a + self.spacing;
        match seg.axis {
            Axis::Horizontal => (Position::new(a, fixed), Position::new(b, fixed)),
            Axis::Vertical => (Position::new(fixed, a), Position::new(fixed, b)),
        }
    }

    /// Index of the road at `coord` on the perpendicular axis, if within tolerance.
    pub(crate) fn road_index(&self, coord: f64) -> Option<usize> {
        if coord < -ROAD_EPSILON || coord > self.extent + ROAD_EPSILON {
            return None;
        }
        let k = (coord / self.spacing).round();
        let k = k.clamp(0.0, (self.roads_per_axis - 1) as f64);
        ((coord - k * self.spacing).abs() <= ROAD_EPSILON).then_some(k as usize)
    }

    fn within_extent(&self, v: f64) -> bool {
        v >= -ROAD_EPSILON && v <= self.extent + ROAD_EPSILON
    }

    pub fn is_on_road(&self, p: Position) -> bool {
        (self.road_index(p.y).is_some() && self.within_extent(p.x))
            || (self.road_index(p.x).is_some() && self.within_extent(p.y))
    }

    /// Intersection `(i, j)` at `p`, if `p` lies on one.
    pub fn intersection_at(&self, p: Position) -> Option<(usize, usize)> {
        Some((self.road_index(p.x)?, self.road_index(p.y)?))
    }

    fn block_along(&self, along: f64) -> usize {
        ((along / self.spacing).floor().max(0.0) as usize).min(self.blocks_per_road() - 1)
    }

    /// Segment containing `p`. At an intersection the segment the node is
    /// heading into wins; at a boundary with no such segment the one it is
    /// leaving is used.
    pub fn segment_of(&self, p: Position, heading: Heading) -> Result<SegmentId> {
        let on_h = self.road_index(p.y).filter(|_| self.within_extent(p.x));
        let on_v = self.road_index(p.x).filter(|_| self.within_extent(p.y));
        let seg = match (on_h, on_v) {
            (Some(j), Some(i)) => {
                let last = self.blocks_per_road() - 1;
                let (axis, road, idx) = match heading.axis() {
                    Axis::Horizontal => (Axis::Horizontal, j, i),
                    Axis::Vertical => (Axis::Vertical, i, j),
                };
                let block = if heading.is_positive() {
                    idx.min(last)
                } else {
                    idx.saturating_sub(1)
                };
                Segment { axis, road, block }
            }
            (Some(j), None) => Segment {
                axis: Axis::Horizontal,
                road: j,
                block: self.block_along(p.x),
            },
            (None, Some(i)) => Segment {
                axis: Axis::Vertical,
                road: i,
                block: self.block_along(p.y),
            },
            (None, None) => return Err(Error::OffRoad { x: p.x, y: p.y }),
        };
        Ok(self.segment_id(seg))
    }

    /// Straight-line distance from `p` to the gateway.
    pub fn distance_to_gateway(&self, p: Position) -> f64 {
        p.distance(&self.gateway)
    }

    /// Headings that lead onto an existing segment from intersection `(i, j)`.
    pub fn exits(&self, (i, j): (usize, usize)) -> impl Iterator<Item = Heading> + '_ {
        let last = self.roads_per_axis - 1;
        Heading::ALL.into_iter().filter(move |h| match h {
            Heading::East => i < last,
            Heading::West => i > 0,
            Heading::North => j < last,
            Heading::South => j > 0,
        })
    }

    /// Whether two points share a street line or either sits near an
    /// intersection (within a tenth of the block length). Used by the optional
    /// building-obstruction model.
    pub fn line_of_sight(&self, a: Position, b: Position) -> bool {
        let same_x = self.road_index(a.x).is_some() && (a.x - b.x).abs() <= ROAD_EPSILON;
        let same_y = self.road_index(a.y).is_some() && (a.y - b.y).abs() <= ROAD_EPSILON;
        same_x || same_y || self.near_intersection(a) || self.near_intersection(b)
    }

    fn near_intersection(&self, p: Position) -> bool {
        let snap = |v: f64| {
            let k = (v / self.spacing).round().clamp(0.0, (self.roads_per_axis - 1) as f64);
            k * self.spacing
        };
        let corner = Position::new(snap(p.x), snap(p.y));
        p.distance(&corner) <= 0.1 * self.spacing
    }
}
