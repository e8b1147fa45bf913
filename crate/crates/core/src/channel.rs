//! Propagation and link-rate math.
//!
//! Everything here is a pure function of its arguments; random draws take the
//! RNG explicitly so independent workers can own independent streams.
//!
//! Two gain models are available:
//! - [`GainModel::Distance`]: `h = g / d^n` (default)
//! - [`GainModel::LogDistance`]: `h = g * 10^(-PL(d)/10)` with the log-distance
//!   path loss `PL(d) = PL(d0) + 10 n log10(d/d0) + X`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// Latency reported for a link that carries no data (zero spectral efficiency).
pub const INFINITE_LATENCY: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GainModel {
    #[default]
    Distance,
    LogDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub path_loss_exponent: f64,
    /// Meters.
    pub reference_distance: f64,
    /// dB at `reference_distance`.
    pub reference_path_loss_db: f64,
    /// Standard deviation of log-normal shadowing in dB; 0 disables it.
    pub shadow_sigma_db: f64,
    /// Linear watts.
    pub noise_power: f64,
    pub gain_model: GainModel,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            path_loss_exponent: 2.0,
            reference_distance: 1.0,
            reference_path_loss_db: 30.0,
            shadow_sigma_db: 0.0,
            noise_power: 1e-6,
            gain_model: GainModel::Distance,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent >= 1.0) {
            return Err(config_err("propagation.path_loss_exponent", ">= 1"));
        }
        if !(self.reference_distance > 0.0) {
            return Err(config_err("propagation.reference_distance", "> 0"));
        }
        if !self.reference_path_loss_db.is_finite() {
            return Err(config_err("propagation.reference_path_loss_db", "finite"));
        }
        if !(self.shadow_sigma_db >= 0.0) || !self.shadow_sigma_db.is_finite() {
            return Err(config_err("propagation.shadow_sigma_db", ">= 0"));
        }
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return Err(config_err("propagation.noise_power", "> 0"));
        }
        Ok(())
    }

    /// Linear gain for one device under the configured model.
    ///
    /// `shadow_db` is ignored by the distance model.
    pub fn gain(&self, fading: f64, distance: f64, shadow_db: f64) -> Result<f64> {
        match self.gain_model {
            GainModel::Distance => channel_gain(fading, distance, self.path_loss_exponent),
            GainModel::LogDistance => {
                let pl = path_loss_db(distance, self, shadow_db)?;
                Ok(fading * 10f64.powf(-pl / 10.0))
            }
        }
    }
}

/// Gain components of one device for one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub device_id: usize,
    pub distance: f64,
    pub fading: f64,
    pub gain: f64,
}

/// A transmitter sharing a sub-channel: its linear gain and transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub gain: f64,
    pub power: f64,
}

/// `g / d^n`.
pub fn channel_gain(fading: f64, distance: f64, exponent: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("distance must be > 0, got {distance}")));
    }
    if !(fading >= 0.0) {
        return Err(Error::Domain(format!("fading must be >= 0, got {fading}")));
    }
    Ok(fading / distance.powf(exponent))
}

/// Log-distance path loss in dB, including an additive shadowing draw.
pub fn path_loss_db(distance: f64, cfg: &PropagationConfig, shadow_db: f64) -> Result<f64> {
    if !(distance >= cfg.reference_distance) {
        return Err(Error::Domain(format!(
            "distance {distance} is below the reference distance {}",
            cfg.reference_distance
        )));
    }
    Ok(cfg.reference_path_loss_db
        + 10.0 * cfg.path_loss_exponent * (distance / cfg.reference_distance).log10()
        + shadow_db)
}

/// Small-scale power fading: exponential with unit mean (Rayleigh envelope).
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Zero-mean Gaussian shadowing in dB.
pub fn sample_shadow_db<R: Rng + ?Sized>(rng: &mut R, sigma_db: f64) -> f64 {
    if sigma_db == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma_db * z
}

/// SINR of `cluster[own]` against every other member of its sub-channel plus noise.
pub fn sinr(own: usize, cluster: &[Link], noise: f64) -> Result<f64> {
    let me = cluster.get(own).ok_or_else(|| {
        Error::Domain(format!(
            "device {own} not present in a cluster of {} links",
            cluster.len()
        ))
    })?;
    if !(noise > 0.0) {
        return Err(Error::Domain(format!("noise must be > 0, got {noise}")));
    }
    let interference: f64 = cluster
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != own)
        .map(|(_, l)| l.gain * l.power)
        .sum();
    Ok(me.gain * me.power / (interference + noise))
}

/// Shannon spectral efficiency `log2(1 + sinr)` in bits/s/Hz.
pub fn throughput_bps_hz(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Transmission time of a data block; [`INFINITE_LATENCY`] on a dead link.
pub fn latency_seconds(data_bits: f64, spectral_eff: f64, bandwidth_hz: f64) -> f64 {
    if spectral_eff <= 0.0 {
        return INFINITE_LATENCY;
    }
    data_bits / (spectral_eff * bandwidth_hz)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}
