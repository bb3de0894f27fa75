//! Scenario geometry and delay-Doppler channels.
//!
//! UE links are `P`-path doubly dispersive channels built from cyclic
//! delay / Doppler shifts. Target links are a single bistatic reflection
//! whose random gain is carried by the RCS coefficient at the receiver.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{CMat, CVec, J};
use crate::otfs::{DdShift, FrameParams};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Azimuth of `other` as seen from `self`.
    pub fn azimuth_to(&self, other: &Point) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// Inputs to [`generate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub area_side: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ue: usize,
    /// Antennas per AP.
    pub antennas: usize,
    /// Noise variance σ_n² in W.
    pub noise_variance: f64,
    /// RCS variance σ_rcs² in m².
    pub rcs_variance: f64,
    /// DD paths per UE link.
    pub paths: usize,
    /// Delay spread interval in seconds.
    pub delay_spread: (f64, f64),
    /// Doppler spread interval in Hz (magnitudes; the sign is randomized).
    pub doppler_spread: (f64, f64),
    pub frame: FrameParams,
    /// Large-scale power gain applied to every reflected path.
    pub reflection_gain: f64,
    /// Doppler of the target reflection, in Hz.
    pub target_doppler: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub area_side: f64,
    pub tx_ap_positions: Vec<Point>,
    pub rx_ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    pub target_position: Point,
    pub antennas: usize,
    pub noise_variance: f64,
    pub rcs_variance: f64,
    pub paths: usize,
    pub delay_spread: (f64, f64),
    pub doppler_spread: (f64, f64),
    pub frame: FrameParams,
    pub reflection_gain: f64,
    pub target_doppler: f64,
}

impl Scenario {
    pub fn n_tx(&self) -> usize {
        self.tx_ap_positions.len()
    }

    pub fn n_rx(&self) -> usize {
        self.rx_ap_positions.len()
    }

    pub fn n_ue(&self) -> usize {
        self.ue_positions.len()
    }

    /// Columns of the full transmit space, `N_tx·L·MN`.
    pub fn transmit_dim(&self) -> usize {
        self.n_tx() * self.antennas * self.frame.len()
    }

    /// Per-AP steering vectors towards the target.
    pub fn tx_steering(&self) -> Vec<CVec> {
        self.tx_ap_positions
            .iter()
            .map(|p| array_response(self.antennas, p.azimuth_to(&self.target_position), 0.0))
            .collect()
    }
}

/// A single delay-Doppler propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdPath {
    pub gain: Complex64,
    pub delay_tap: usize,
    pub doppler_tap: f64,
    /// Angle of departure in radians.
    pub aod: f64,
}

/// Channel from every transmit antenna to one UE.
#[derive(Debug, Clone)]
pub struct UeChannel {
    /// Path lists indexed by transmit AP.
    pub paths: Vec<Vec<DdPath>>,
    pub antennas: usize,
    pub frame_len: usize,
    /// `H_u = [H_{u,1}, …, H_{u,N_tx}]`, each `H_{u,k} = [H_{u,k}^{(1)}, …, H_{u,k}^{(L)}]`.
    pub assembled: CMat,
}

impl UeChannel {
    /// `H_{u,k}^{(l)}`, 0-indexed.
    pub fn block(&self, k: usize, l: usize) -> nalgebra::DMatrixView<'_, Complex64> {
        let mn = self.frame_len;
        self.assembled.view((0, (k * self.antennas + l) * mn), (mn, mn))
    }

    /// `H_{u,k}`, the `MN × L·MN` slab for AP `k`.
    pub fn ap_block(&self, k: usize) -> nalgebra::DMatrixView<'_, Complex64> {
        let w = self.antennas * self.frame_len;
        self.assembled.view((0, k * w), (self.frame_len, w))
    }

    pub fn n_tx(&self) -> usize {
        self.paths.len()
    }
}

/// Reflection channel from transmit AP `k` through the target to receive AP `r`.
#[derive(Debug, Clone)]
pub struct TargetLink {
    pub tx_steering: CVec,
    pub rx_steering: CVec,
    pub shift: DdShift,
    /// Large-scale power gain of the reflected path.
    pub path_gain: f64,
}

impl TargetLink {
    /// `H_{r,k}` materialized.
    pub fn dd_matrix(&self) -> CMat {
        self.shift.to_dense()
    }
}

/// Uniform points in the square `[0, side]²`.
pub fn uniform_points<R: Rng + ?Sized>(count: usize, side: f64, rng: &mut R) -> Vec<Point> {
    (0..count)
        .map(|_| Point::new(rng.random::<f64>() * side, rng.random::<f64>() * side))
        .collect()
}

/// Splits AP indices into `(receive, transmit)`: the `n_rx` APs closest to the
/// target receive, the rest transmit. Ties go to the lower index.
pub fn select_receive_aps(aps: &[Point], target: &Point, n_rx: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_rx > aps.len() {
        return Err(invalid(format!("{n_rx} receive APs requested but only {} APs exist", aps.len())));
    }
    let mut order: Vec<usize> = (0..aps.len()).collect();
    order.sort_by(|&a, &b| {
        aps[a]
            .distance(target)
            .total_cmp(&aps[b].distance(target))
            .then(a.cmp(&b))
    });
    let mut rx = order[..n_rx].to_vec();
    let mut tx = order[n_rx..].to_vec();
    rx.sort_unstable();
    tx.sort_unstable();
    Ok((rx, tx))
}

fn validate_config(config: &ScenarioConfig) -> Result<()> {
    if !(config.area_side > 0.0) {
        return Err(invalid("area side must be positive"));
    }
    if config.n_tx == 0 || config.n_ue == 0 || config.antennas == 0 || config.paths == 0 {
        return Err(invalid("AP, UE, antenna and path counts must be at least 1"));
    }
    if !(config.noise_variance > 0.0) {
        return Err(invalid("noise variance must be positive"));
    }
    if !(config.rcs_variance >= 0.0) || !(config.reflection_gain >= 0.0) {
        return Err(invalid("RCS variance and reflection gain must be nonnegative"));
    }
    let (d0, d1) = config.delay_spread;
    let (f0, f1) = config.doppler_spread;
    if !(d0 >= 0.0 && d1 >= d0) || !(f0 >= 0.0 && f1 >= f0) {
        return Err(invalid("spread intervals must satisfy 0 ≤ min ≤ max"));
    }
    Ok(())
}

/// Builds a scenario from explicit AP and UE positions. The target sits at
/// the centre of the area; the `n_rx` APs nearest to it become receivers.
pub fn assemble_scenario(config: &ScenarioConfig, aps: &[Point], ues: Vec<Point>) -> Result<Scenario> {
    validate_config(config)?;
    let side = config.area_side;
    let inside = |p: &Point| (0.0..=side).contains(&p.x) && (0.0..=side).contains(&p.y);
    if !aps.iter().chain(ues.iter()).all(inside) {
        return Err(invalid("all positions must lie inside the simulation area"));
    }
    let target = Point::new(side / 2.0, side / 2.0);
    let (rx, tx) = select_receive_aps(aps, &target, config.n_rx)?;
    if tx.is_empty() {
        return Err(invalid("no transmit APs left after receive-AP selection"));
    }
    Ok(Scenario {
        area_side: side,
        tx_ap_positions: tx.iter().map(|&i| aps[i]).collect(),
        rx_ap_positions: rx.iter().map(|&i| aps[i]).collect(),
        ue_positions: ues,
        target_position: target,
        antennas: config.antennas,
        noise_variance: config.noise_variance,
        rcs_variance: config.rcs_variance,
        paths: config.paths,
        delay_spread: config.delay_spread,
        doppler_spread: config.doppler_spread,
        frame: config.frame,
        reflection_gain: config.reflection_gain,
        target_doppler: config.target_doppler,
    })
}

/// Random layout: `n_tx + n_rx` APs and `n_ue` UEs uniform in the area.
pub fn generate_scenario<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<Scenario> {
    validate_config(config)?;
    let aps = uniform_points(config.n_tx + config.n_rx, config.area_side, rng);
    let ues = uniform_points(config.n_ue, config.area_side, rng);
    assemble_scenario(config, &aps, ues)
}

/// Log-distance large-scale gain, `β[dB] = −30.5 − 36.7·log10(d / 1 m)`.
pub fn path_loss(distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(invalid(format!("distance must be positive, got {distance}")));
    }
    let db = -30.5 - 36.7 * distance.log10();
    Ok(10f64.powf(db / 10.0))
}

/// ULA response, entry `l` = `exp(jπ·l·sin(azimuth)·cos(elevation))`.
pub fn array_response(antennas: usize, azimuth: f64, elevation: f64) -> CVec {
    let phase = PI * azimuth.sin() * elevation.cos();
    CVec::from_fn(antennas, |l, _| Complex64::from_polar(1.0, phase * l as f64))
}

/// Inclusive delay-tap range implied by the delay spread and sample interval.
pub fn delay_tap_range(scenario: &Scenario) -> (usize, usize) {
    let ts = scenario.frame.sample_interval;
    let last = scenario.frame.len() - 1;
    let lo = ((scenario.delay_spread.0 / ts).round() as usize).min(last);
    let hi = ((scenario.delay_spread.1 / ts).round() as usize).clamp(lo, last);
    (lo, hi)
}

/// Draws the `P` paths between transmit AP `k` and UE `u`.
pub fn sample_ue_paths<R: Rng + ?Sized>(scenario: &Scenario, u: usize, k: usize, rng: &mut R) -> Result<Vec<DdPath>> {
    let ue = scenario
        .ue_positions
        .get(u)
        .ok_or_else(|| invalid(format!("UE index {u} out of range")))?;
    let ap = scenario
        .tx_ap_positions
        .get(k)
        .ok_or_else(|| invalid(format!("transmit AP index {k} out of range")))?;
    let beta = path_loss(ap.distance(ue).max(1.0))?;
    let per_path_std = (beta / scenario.paths as f64 / 2.0).sqrt();
    let (tap_lo, tap_hi) = delay_tap_range(scenario);
    let (nu_lo, nu_hi) = scenario.doppler_spread;
    let doppler_scale = scenario.frame.len() as f64 * scenario.frame.sample_interval;

    let paths = (0..scenario.paths)
        .map(|_| {
            let delay_tap = rng.random_range(tap_lo..=tap_hi);
            let nu = nu_lo + (nu_hi - nu_lo) * rng.random::<f64>();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let aod = -PI + 2.0 * PI * rng.random::<f64>();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            DdPath {
                gain: Complex64::new(re, im) * per_path_std,
                delay_tap,
                doppler_tap: sign * nu * doppler_scale,
                aod,
            }
        })
        .collect();
    Ok(paths)
}

/// Assembles `H_u` from one path list per transmit AP.
pub fn build_ue_channel(paths: Vec<Vec<DdPath>>, scenario: &Scenario) -> Result<UeChannel> {
    if paths.len() != scenario.n_tx() {
        return Err(invalid(format!(
            "expected {} path lists (one per transmit AP), got {}",
            scenario.n_tx(),
            paths.len()
        )));
    }
    let mn = scenario.frame.len();
    let antennas = scenario.antennas;
    let mut assembled = CMat::zeros(mn, scenario.transmit_dim());
    for (k, list) in paths.iter().enumerate() {
        for path in list {
            if path.delay_tap >= mn {
                return Err(invalid(format!("delay tap {} outside frame of {mn}", path.delay_tap)));
            }
            let shift = DdShift::new(mn, path.delay_tap, path.doppler_tap);
            let steer = J * PI * path.aod.sin();
            for l in 0..antennas {
                let scale = path.gain * (steer * l as f64).exp();
                let mut dst = assembled.view_mut((0, (k * antennas + l) * mn), (mn, mn));
                shift.accumulate_into(&mut dst, scale);
            }
        }
    }
    Ok(UeChannel { paths, antennas, frame_len: mn, assembled })
}

/// Samples paths for every transmit AP and assembles the channel of UE `u`.
pub fn sample_ue_channel<R: Rng + ?Sized>(scenario: &Scenario, u: usize, rng: &mut R) -> Result<UeChannel> {
    let paths = (0..scenario.n_tx())
        .map(|k| sample_ue_paths(scenario, u, k, rng))
        .collect::<Result<Vec<_>>>()?;
    build_ue_channel(paths, scenario)
}

/// Bistatic reflection link between transmit AP `k` and receive AP `r`.
pub fn build_target_link(scenario: &Scenario, r: usize, k: usize) -> Result<TargetLink> {
    let rx = scenario
        .rx_ap_positions
        .get(r)
        .ok_or_else(|| invalid(format!("receive AP index {r} out of range")))?;
    let tx = scenario
        .tx_ap_positions
        .get(k)
        .ok_or_else(|| invalid(format!("transmit AP index {k} out of range")))?;
    let target = &scenario.target_position;
    let mn = scenario.frame.len();
    let range = tx.distance(target) + target.distance(rx);
    let delay = (range / SPEED_OF_LIGHT / scenario.frame.sample_interval).round() as usize % mn;
    let doppler = scenario.target_doppler * mn as f64 * scenario.frame.sample_interval;
    Ok(TargetLink {
        tx_steering: array_response(scenario.antennas, tx.azimuth_to(target), 0.0),
        rx_steering: array_response(scenario.antennas, rx.azimuth_to(target), 0.0),
        shift: DdShift::new(mn, delay, doppler),
        path_gain: scenario.reflection_gain,
    })
}

/// All target links, indexed `[r][k]`.
pub fn build_target_links(scenario: &Scenario) -> Result<Vec<Vec<TargetLink>>> {
    (0..scenario.n_rx())
        .map(|r| (0..scenario.n_tx()).map(|k| build_target_link(scenario, r, k)).collect())
        .collect()
}
