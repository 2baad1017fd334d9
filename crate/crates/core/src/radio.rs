//! Broadcast channel model: log-distance path loss with Nakagami-m fading,
//! SNR thresholding, no-capture collisions and an abstract CSMA access delay.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forwarding::{NodeId, PacketHeader};
use crate::geometry::{Position, RoadNetwork};

/// Reference distance of the path-loss model, in meters.
pub const REFERENCE_DISTANCE: f64 = 1.0;

/// Access delays are capped at this multiple of the configured mean.
pub const ACCESS_DELAY_CAP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    /// Nominal communication range R in meters.
    pub comm_range: f64,
    pub path_loss_exponent: f64,
    pub nakagami_m: f64,
    /// When false every link sees unit gain (unit-disk mode).
    pub fading: bool,
    /// Bits per second.
    pub channel_rate: f64,
    /// Hz. Informational only.
    pub bandwidth: f64,
    /// Bytes per packet.
    pub packet_size: u32,
    /// Transmit power; `None` calibrates it so the unit-gain SNR at `comm_range`
    /// equals `snr_threshold_db`.
    pub tx_power_dbm: Option<f64>,
    pub noise_floor_dbm: f64,
    pub snr_threshold_db: f64,
    /// Mean CSMA channel-access delay in seconds.
    pub mean_access_delay: f64,
    /// Block links between non-aligned streets away from intersections.
    pub grid_obstruction: bool,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            comm_range: 500.0,
            path_loss_exponent: 2.5,
            nakagami_m: 1.56,
            fading: true,
            channel_rate: 6e6,
            bandwidth: 10e6,
            packet_size: 100,
            tx_power_dbm: None,
            noise_floor_dbm: -99.0,
            snr_threshold_db: 10.0,
            mean_access_delay: 0.005,
            grid_obstruction: false,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.comm_range) {
            return Err(Error::config("radio.comm_range", "must be positive"));
        }
        if !positive(self.path_loss_exponent) {
            return Err(Error::config("radio.path_loss_exponent", "must be positive"));
        }
        if !(self.nakagami_m.is_finite() && self.nakagami_m >= 0.5) {
            return Err(Error::config("radio.nakagami_m", "must be at least 0.5"));
        }
        if !positive(self.channel_rate) {
            return Err(Error::config("radio.channel_rate", "must be positive"));
        }
        if !(self.mean_access_delay.is_finite() && self.mean_access_delay >= 0.0) {
            return Err(Error::config("radio.mean_access_delay", "must be non-negative"));
        }
        if !self.noise_floor_dbm.is_finite() {
            return Err(Error::config("radio.noise_floor_dbm", "must be finite"));
        }
        if !self.snr_threshold_db.is_finite() {
            return Err(Error::config("radio.snr_threshold_db", "must be finite"));
        }
        if matches!(self.tx_power_dbm, Some(p) if !p.is_finite()) {
            return Err(Error::config("radio.tx_power_dbm", "must be finite"));
        }
        Ok(())
    }

    /// Interference and reception are ignored beyond this distance.
    pub fn cutoff(&self) -> f64 {
        2.0 * self.comm_range
    }

    pub fn path_loss_db(&self, distance: f64) -> f64 {
        let d = distance.max(REFERENCE_DISTANCE);
        10.0 * self.path_loss_exponent * (d / REFERENCE_DISTANCE).log10()
    }

    /// Transmit power placing the unit-gain SNR at `comm_range` exactly on the threshold.
    pub fn calibrated_tx_power_dbm(&self) -> f64 {
        self.snr_threshold_db + self.noise_floor_dbm + self.path_loss_db(self.comm_range)
    }

    pub fn effective_tx_power_dbm(&self) -> f64 {
        self.tx_power_dbm.unwrap_or_else(|| self.calibrated_tx_power_dbm())
    }
}

/// Time on air of one packet.
pub fn airtime(cfg: &RadioConfig) -> f64 {
    f64::from(cfg.packet_size) * 8.0 / cfg.channel_rate
}

/// SNR in dB at `rx_pos` for a given fading power gain. Coincident
/// positions are evaluated at the reference distance.
pub fn received_snr(cfg: &RadioConfig, tx_pos: Position, rx_pos: Position, fading_gain: f64) -> f64 {
    let d = tx_pos.distance(&rx_pos);
    cfg.effective_tx_power_dbm() - cfg.path_loss_db(d) - cfg.noise_floor_dbm + 10.0 * fading_gain.log10()
}

/// Nakagami-m power gain, Gamma(m, 1/m) with unit mean; exactly 1 when fading is off.
pub fn sample_fading_gain<R: Rng + ?Sized>(cfg: &RadioConfig, rng: &mut R) -> f64 {
    if !cfg.fading {
        return 1.0;
    }
    Gamma::new(cfg.nakagami_m, 1.0 / cfg.nakagami_m)
        .expect("validated nakagami_m")
        .sample(rng)
}

/// Solves `1/t - 1/(e^t - 1) = 1/cap` for `t`: the ratio of the cap to the
/// scale of an exponential whose truncation at `cap * mean` keeps the mean.
fn truncation_ratio(cap: f64) -> f64 {
    let f = |t: f64| 1.0 / t - 1.0 / t.exp_m1() - 1.0 / cap;
    let (mut lo, mut hi) = (1e-6, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exponential access delay truncated at `ACCESS_DELAY_CAP * mean`, with its
/// scale chosen so the truncated distribution has exactly the configured mean.
#[derive(Debug, Clone, Copy)]
pub struct AccessDelay {
    scale: f64,
    cap: f64,
    tail_mass: f64,
}

impl AccessDelay {
    pub fn new(mean: f64) -> Self {
        if mean <= 0.0 {
            return Self { scale: 0.0, cap: 0.0, tail_mass: 0.0 };
        }
        let cap = ACCESS_DELAY_CAP * mean;
        let scale = cap / truncation_ratio(ACCESS_DELAY_CAP);
        Self {
            scale,
            cap,
            tail_mass: -(-cap / scale).exp_m1(),
        }
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.cap == 0.0 {
            return 0.0;
        }
        let u: f64 = rng.random();
        (-self.scale * (-u * self.tail_mass).ln_1p()).min(self.cap)
    }
}

pub fn channel_access_delay<R: Rng + ?Sized>(cfg: &RadioConfig, rng: &mut R) -> f64 {
    AccessDelay::new(cfg.mean_access_delay).sample(rng)
}

/// Sequential identifier of a transmission within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxEvent {
    pub id: TxId,
    pub sender: NodeId,
    pub packet: PacketHeader,
    pub start: f64,
    pub end: f64,
    pub sender_position: Position,
}

impl TxEvent {
    pub fn overlaps(&self, other: &TxEvent) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReceptionOutcome {
    Delivered,
    Collision,
    LowSnr,
    OutOfRange,
}

impl ReceptionOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ReceptionOutcome::Delivered => "delivered",
            ReceptionOutcome::Collision => "collision",
            ReceptionOutcome::LowSnr => "low_snr",
            ReceptionOutcome::OutOfRange => "out_of_range",
        }
    }
}

/// Precomputed channel for one run.
#[derive(Debug, Clone)]
pub struct Channel {
    cfg: RadioConfig,
    tx_power_dbm: f64,
    fading: Option<Gamma<f64>>,
    access: AccessDelay,
    cutoff: f64,
}

impl Channel {
    pub fn new(cfg: &RadioConfig) -> Result<Self> {
        cfg.validate()?;
        let fading = if cfg.fading {
            Some(
                Gamma::new(cfg.nakagami_m, 1.0 / cfg.nakagami_m)
                    .map_err(|e| Error::config("radio.nakagami_m", e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            tx_power_dbm: cfg.effective_tx_power_dbm(),
            fading,
            access: AccessDelay::new(cfg.mean_access_delay),
            cutoff: cfg.cutoff(),
        })
    }

    pub fn config(&self) -> &RadioConfig {
        &self.cfg
    }

    pub fn tx_power_dbm(&self) -> f64 {
        self.tx_power_dbm
    }

    pub fn airtime(&self) -> f64 {
        airtime(&self.cfg)
    }

    pub fn access_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.access.sample(rng)
    }

    pub fn fading_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.fading {
            Some(g) => g.sample(rng),
            None => 1.0,
        }
    }

    pub fn snr_db(&self, distance: f64, gain: f64) -> f64 {
        self.tx_power_dbm - self.cfg.path_loss_db(distance) - self.cfg.noise_floor_dbm + 10.0 * gain.log10()
    }

    /// Whether a signal from `tx` reaches `rx` at all (cutoff and obstruction).
    pub fn in_cutoff(&self, net: &RoadNetwork, tx: Position, rx: Position) -> bool {
        tx.distance(&rx) <= self.cutoff && (!self.cfg.grid_obstruction || net.line_of_sight(tx, rx))
    }

    /// Outcome for a reception that was not collided, given the fading gain.
    pub fn decode(&self, distance: f64, gain: f64) -> ReceptionOutcome {
        if self.snr_db(distance, gain) < self.cfg.snr_threshold_db {
            ReceptionOutcome::LowSnr
        } else {
            ReceptionOutcome::Delivered
        }
    }
}

/// Outcome of `tx` at receiver `rx` located at `rx_pos`, given every other
/// transmission that may overlap it. `overlapping` may contain `tx` itself
/// and transmissions sent by `rx` (half-duplex).
pub fn reception_outcome<R: Rng + ?Sized>(
    channel: &Channel,
    net: &RoadNetwork,
    rx: NodeId,
    rx_pos: Position,
    tx: &TxEvent,
    overlapping: &[TxEvent],
    rng: &mut R,
) -> ReceptionOutcome {
    if !channel.in_cutoff(net, tx.sender_position, rx_pos) {
        return ReceptionOutcome::OutOfRange;
    }
    let collided = overlapping.iter().any(|other| {
        other.id != tx.id
            && other.overlaps(tx)
            && (other.sender == rx || channel.in_cutoff(net, other.sender_position, rx_pos))
    });
    if collided {
        return ReceptionOutcome::Collision;
    }
    let gain = channel.fading_gain(rng);
    channel.decode(tx.sender_position.distance(&rx_pos), gain)
}
