//! Air-to-ground and air-to-air link budget: LoS probability, path loss,
//! proportional bandwidth split, Shannon rate and per-hop delay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub carrier_frequency_hz: f64,
    pub light_speed_mps: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub total_bandwidth_hz: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 2.4e9,
            light_speed_mps: 3.0e8,
            rho1: 5.0188,
            rho2: 0.3511,
            eta_los_db: 0.1,
            eta_nlos_db: 21.0,
            tx_power_dbm: 40.0,
            noise_power_dbm: -110.0,
            total_bandwidth_hz: 2.4e6,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self, prefix: &str, errors: &mut Vec<String>) {
        let mut bad = |key: &str, why: &str| errors.push(format!("{prefix}.{key}: {why}"));
        if !(self.rho1 > 0.0) {
            bad("rho1", "must be > 0");
        }
        if !(self.rho2 > 0.0) {
            bad("rho2", "must be > 0");
        }
        if !(self.eta_los_db >= 0.0 && self.eta_nlos_db >= self.eta_los_db) {
            bad("eta_nlos_db", "need eta_nlos_db >= eta_los_db >= 0");
        }
        if !(self.total_bandwidth_hz > 0.0) {
            bad("total_bandwidth_hz", "must be > 0");
        }
        if !(self.carrier_frequency_hz > 0.0 && self.light_speed_mps > 0.0) {
            bad("carrier_frequency_hz", "frequency and light speed must be > 0");
        }
    }

    /// Transmit power in milliwatts.
    pub fn tx_power_mw(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm)
    }

    pub fn noise_power_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm)
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Link kind: ground-involved links add the LoS/NLoS excess loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    AirToAir,
    AirToGround,
}

impl LinkKind {
    pub fn omega(self) -> f64 {
        match self {
            LinkKind::AirToAir => 0.0,
            LinkKind::AirToGround => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub distance: f64,
    pub omega: f64,
    pub path_loss_db: f64,
    pub rate_bps: f64,
}

/// Elevation angle in degrees; a zero horizontal distance is straight overhead.
pub fn elevation_deg(delta_h: f64, horizontal_dist: f64) -> f64 {
    if horizontal_dist == 0.0 {
        return 90.0;
    }
    (delta_h / horizontal_dist).atan().to_degrees()
}

pub fn los_probability(delta_h: f64, horizontal_dist: f64, params: &ChannelParams) -> f64 {
    let theta = elevation_deg(delta_h.abs(), horizontal_dist.abs());
    1.0 / (1.0 + params.rho1 * (-params.rho2 * (theta - params.rho1)).exp())
}

/// Free-space term 20 log10(4π f_c d / c).
pub fn free_space_loss_db(distance: f64, params: &ChannelParams) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * params.carrier_frequency_hz * distance
        / params.light_speed_mps)
        .log10()
}

pub fn path_loss(
    distance: f64,
    omega: f64,
    delta_h: f64,
    horizontal_dist: f64,
    params: &ChannelParams,
) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::NonPositiveDistance(distance));
    }
    let fspl = free_space_loss_db(distance, params);
    if omega == 0.0 {
        return Ok(fspl);
    }
    let pr = los_probability(delta_h, horizontal_dist, params);
    Ok(fspl + omega * (pr * (params.eta_los_db - params.eta_nlos_db) + params.eta_nlos_db))
}

/// Split `total` Hz across demands in proportion to their sizes.
pub fn allocate_bandwidth(queued_sizes: &[f64], total: f64) -> Vec<f64> {
    let sum: f64 = queued_sizes.iter().sum();
    if queued_sizes.is_empty() || !(sum > 0.0) {
        return vec![0.0; queued_sizes.len()];
    }
    queued_sizes.iter().map(|&s| s * total / sum).collect()
}

pub fn snr_linear(path_loss_db: f64, params: &ChannelParams) -> f64 {
    params.tx_power_mw() * 10f64.powf(-path_loss_db / 10.0) / params.noise_power_mw()
}

pub fn transmission_rate(bandwidth: f64, path_loss_db: f64, params: &ChannelParams) -> f64 {
    bandwidth * (1.0 + snr_linear(path_loss_db, params)).log2()
}

/// Per-demand delays `size/rate` and their maximum. A non-positive rate gives
/// an infinite delay so the caller can fail the demand.
pub fn hop_delay(demands: &[(f64, f64)]) -> (Vec<f64>, f64) {
    let per: Vec<f64> = demands
        .iter()
        .map(|&(size, rate)| if rate > 0.0 { size / rate } else { f64::INFINITY })
        .collect();
    let slot_max = per.iter().copied().fold(0.0, f64::max);
    (per, slot_max)
}

/// Path loss and rate for one link with a given bandwidth share.
pub fn link_budget(
    a: &crate::topology::Point3,
    b: &crate::topology::Point3,
    kind: LinkKind,
    bandwidth: f64,
    params: &ChannelParams,
) -> Result<LinkBudget> {
    let distance = a.distance(b);
    let omega = kind.omega();
    let pl = path_loss(
        distance,
        omega,
        (a.z - b.z).abs(),
        a.horizontal_distance(b),
        params,
    )?;
    Ok(LinkBudget {
        distance,
        omega,
        path_loss_db: pl,
        rate_bps: transmission_rate(bandwidth, pl, params),
    })
}
