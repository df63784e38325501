//! Episode geometry, path loss, Rayleigh block fading and link capacity.
//!
//! Large-scale gains are drawn once per episode from the vehicle placement;
//! the small-scale coefficients are redrawn every slot. Capacity follows the
//! Shannon formula over the instantaneous SINR, and the number of packets a
//! link can move in one slot is the floor of `t * C / L`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Physical-layer and geometry parameters of one scenario.
///
/// Powers are kept in dBm here because that is how they are usually quoted;
/// [`NetworkConfig::noise_power_mw`] and [`NetworkConfig::max_power_mw`]
/// give the linear values every formula uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_links: usize,
    pub bandwidth_hz: f64,
    pub slot_duration_s: f64,
    pub packet_bits: u32,
    pub noise_power_dbm: f64,
    pub max_power_dbm: f64,
    pub carrier_freq_ghz: f64,
    pub antenna_gain_tx_db: f64,
    pub antenna_gain_rx_db: f64,
    pub noise_figure_db: f64,
    /// Informational; the path-loss model is two-dimensional.
    pub antenna_height_m: f64,
    /// Informational; fading is i.i.d. per slot so speed enters no formula.
    pub vehicle_speed_kmh: f64,
    pub episode_slots: usize,
    pub road_length_m: f64,
    pub lane_offsets_m: Vec<f64>,
    pub pair_distance_range_m: [f64; 2],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_links: 4,
            bandwidth_hz: 1e6,
            slot_duration_s: 1e-3,
            packet_bits: 3000,
            noise_power_dbm: -114.0,
            max_power_dbm: 10.0,
            carrier_freq_ghz: 2.0,
            antenna_gain_tx_db: 3.0,
            antenna_gain_rx_db: 3.0,
            noise_figure_db: 9.0,
            antenna_height_m: 1.5,
            vehicle_speed_kmh: 36.0,
            episode_slots: 100,
            road_length_m: DEFAULT_ROAD_LENGTH_M,
            lane_offsets_m: vec![0.0, 3.5, 7.0, 10.5],
            pair_distance_range_m: [10.0, 50.0],
        }
    }
}

pub const DEFAULT_ROAD_LENGTH_M: f64 = 500.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl NetworkConfig {
    pub fn noise_power_mw(&self) -> f64 {
        db_to_linear(self.noise_power_dbm)
    }

    pub fn max_power_mw(&self) -> f64 {
        db_to_linear(self.max_power_dbm)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("slot_duration_s", self.slot_duration_s),
            ("packet_bits", f64::from(self.packet_bits)),
            ("carrier_freq_ghz", self.carrier_freq_ghz),
            ("road_length_m", self.road_length_m),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Schema(format!("network.{name} must be positive, got {value}")));
            }
        }
        if self.num_links == 0 {
            return Err(ConfigError::Schema("network.num_links must be at least 1".into()));
        }
        if self.episode_slots == 0 {
            return Err(ConfigError::Schema("network.episode_slots must be at least 1".into()));
        }
        if !self.max_power_dbm.is_finite() || !self.noise_power_dbm.is_finite() {
            return Err(ConfigError::Schema("network power levels must be finite".into()));
        }
        if self.lane_offsets_m.is_empty() {
            return Err(ConfigError::Schema("network.lane_offsets_m must not be empty".into()));
        }
        let [lo, hi] = self.pair_distance_range_m;
        if !(lo >= 0.0 && hi.is_finite()) {
            return Err(ConfigError::Schema(format!(
                "network.pair_distance_range_m must be non-negative, got [{lo}, {hi}]"
            )));
        }
        if lo > hi {
            return Err(ConfigError::Invariant(format!(
                "network.pair_distance_range_m: min {lo} exceeds max {hi}"
            )));
        }
        Ok(())
    }

    fn lane_span(&self) -> (f64, f64) {
        let lo = self.lane_offsets_m.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.lane_offsets_m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Transmitter and receiver positions of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGeometry {
    pub tx: Vec<Point>,
    pub rx: Vec<Point>,
}

impl LinkGeometry {
    pub fn num_links(&self) -> usize {
        self.tx.len()
    }

    /// Distance from transmitter `i` to receiver `m`.
    pub fn distance(&self, i: usize, m: usize) -> f64 {
        self.tx[i].distance(self.rx[m])
    }
}

const PLACEMENT_RETRIES: usize = 100;

/// Draws transmitter/receiver pairs on the road rectangle.
pub fn place_vehicles<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> LinkGeometry {
    let (y_lo, y_hi) = config.lane_span();
    let x_hi = config.road_length_m;
    let [d_lo, d_hi] = config.pair_distance_range_m;
    let inside = |p: Point| p.x >= 0.0 && p.x <= x_hi && p.y >= y_lo && p.y <= y_hi;

    let mut tx = Vec::with_capacity(config.num_links);
    let mut rx = Vec::with_capacity(config.num_links);
    for _ in 0..config.num_links {
        let t = Point {
            x: rng.random_range(0.0..=x_hi),
            y: config.lane_offsets_m[rng.random_range(0..config.lane_offsets_m.len())],
        };
        let mut r = t;
        for _ in 0..PLACEMENT_RETRIES {
            let d = rng.random_range(d_lo..=d_hi);
            let theta = rng.random_range(0.0..2.0 * PI);
            r = Point { x: t.x + d * theta.cos(), y: t.y + d * theta.sin() };
            if inside(r) {
                break;
            }
        }
        r.x = r.x.clamp(0.0, x_hi);
        r.y = r.y.clamp(y_lo, y_hi);
        tx.push(t);
        rx.push(r);
    }
    LinkGeometry { tx, rx }
}

/// Highway line-of-sight path loss in dB; distances below 1 m are floored.
pub fn path_loss_db(distance_m: f64, config: &NetworkConfig) -> f64 {
    let d = distance_m.max(1.0);
    38.77 + 16.7 * d.log10() + 18.2 * config.carrier_freq_ghz.log10()
}

/// Row-major `n x n` matrix indexed as `(transmitter, receiver)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Copy> LinkMatrix<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for m in 0..n {
                data.push(f(i, m));
            }
        }
        Self { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, tx: usize, rx: usize) -> T {
        self.data[tx * self.n + rx]
    }

    pub fn set(&mut self, tx: usize, rx: usize, value: T) {
        self.data[tx * self.n + rx] = value;
    }
}

/// Channel state of one episode: fixed large-scale gains plus the current
/// slot's small-scale coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub large_scale_gain: LinkMatrix<f64>,
    pub small_scale: LinkMatrix<Complex64>,
}

fn draw_fading<R: Rng + ?Sized>(n: usize, rng: &mut R) -> LinkMatrix<Complex64> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    LinkMatrix::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

/// Linear large-scale gain for a path of the given loss.
pub fn large_scale_gain(path_loss_db: f64, config: &NetworkConfig) -> f64 {
    db_to_linear(config.antenna_gain_tx_db + config.antenna_gain_rx_db - path_loss_db - config.noise_figure_db)
}

pub fn build_channel<R: Rng + ?Sized>(
    geometry: &LinkGeometry,
    config: &NetworkConfig,
    rng: &mut R,
) -> ChannelRealization {
    let n = geometry.num_links();
    let large_scale_gain = LinkMatrix::from_fn(n, |i, m| {
        large_scale_gain(path_loss_db(geometry.distance(i, m), config), config)
    });
    ChannelRealization { large_scale_gain, small_scale: draw_fading(n, rng) }
}

impl ChannelRealization {
    pub fn num_links(&self) -> usize {
        self.large_scale_gain.size()
    }

    /// Redraws every small-scale coefficient; the large-scale gains are kept.
    pub fn resample_fading<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.small_scale = draw_fading(self.num_links(), rng);
    }

    /// Instantaneous power gain `|h_im|^2` including the large-scale term.
    pub fn gain(&self, tx: usize, rx: usize) -> f64 {
        self.large_scale_gain.get(tx, rx) * self.small_scale.get(tx, rx).norm_sqr()
    }

    pub fn gain_matrix(&self) -> LinkMatrix<f64> {
        LinkMatrix::from_fn(self.num_links(), |i, m| self.gain(i, m))
    }
}

/// Shannon capacity in bits/s of link `m` given a gain matrix.
pub fn capacity_from_gains(gains: &LinkMatrix<f64>, powers_mw: &[f64], m: usize, noise_mw: f64, bandwidth_hz: f64) -> f64 {
    let interference: f64 = (0..gains.size()).filter(|&i| i != m).map(|i| gains.get(i, m) * powers_mw[i]).sum();
    let sinr = gains.get(m, m) * powers_mw[m] / (noise_mw + interference);
    bandwidth_hz * (1.0 + sinr).log2()
}

pub fn capacity(chan: &ChannelRealization, powers_mw: &[f64], m: usize, config: &NetworkConfig) -> f64 {
    let interference: f64 = (0..chan.num_links()).filter(|&i| i != m).map(|i| chan.gain(i, m) * powers_mw[i]).sum();
    let sinr = chan.gain(m, m) * powers_mw[m] / (config.noise_power_mw() + interference);
    config.bandwidth_hz * (1.0 + sinr).log2()
}

/// Whole packets that fit into one slot at capacity `capacity_bps`.
pub fn packets_transmittable(capacity_bps: f64, config: &NetworkConfig) -> u32 {
    let ratio = config.slot_duration_s * capacity_bps / f64::from(config.packet_bits);
    if ratio.is_finite() && ratio > 0.0 {
        ratio.floor().min(f64::from(u32::MAX)) as u32
    } else {
        0
    }
}
