//! Quasi-static Rayleigh fading with distance-dependent path loss.
//!
//! Small-scale coefficients are unit-variance circularly-symmetric complex
//! Gaussians. Each realization gets its own ChaCha stream keyed by
//! `(master_seed, realization_index)`, so a draw never depends on which other
//! realizations were sampled or in what order.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{ChannelRealization, SystemParams};
use crate::{Error, Result};

pub const DEFAULT_SOURCE_RECEIVER_DISTANCE: f64 = 40.0;

/// BN distances in meters, indexed like [`SystemParams`] (BN order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub source_bn_distance: Vec<f64>,
    pub bn_receiver_distance: Vec<f64>,
    pub source_receiver_distance: f64,
}

impl Geometry {
    pub fn num_bns(&self) -> usize {
        self.source_bn_distance.len()
    }

    pub fn validate(&self, num_bns: usize) -> Result<()> {
        for (name, d) in [
            ("source_bn_distances", &self.source_bn_distance),
            ("bn_receiver_distances", &self.bn_receiver_distance),
        ] {
            if d.len() != num_bns {
                return Err(Error::invalid(name, format!("expected {num_bns} entries, got {}", d.len())));
            }
            if let Some(bad) = d.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::invalid(name, format!("distances must be > 0, got {bad}")));
            }
        }
        if !(self.source_receiver_distance.is_finite() && self.source_receiver_distance > 0.0) {
            return Err(Error::invalid(
                "source_receiver_distance",
                format!("must be > 0, got {}", self.source_receiver_distance),
            ));
        }
        Ok(())
    }
}

/// BNs spread evenly along the source-receiver segment, from a quarter to
/// three quarters of its length (10 m to 30 m on the 40 m reference
/// segment). A single BN sits at the midpoint.
pub fn default_geometry(num_bns: usize, source_receiver_distance: f64) -> Geometry {
    let scale = source_receiver_distance / DEFAULT_SOURCE_RECEIVER_DISTANCE;
    let positions: Vec<f64> = if num_bns <= 1 {
        vec![20.0; num_bns]
    } else {
        (0..num_bns)
            .map(|k| 10.0 + 20.0 * k as f64 / (num_bns - 1) as f64)
            .collect()
    };
    Geometry {
        source_bn_distance: positions.iter().map(|x| x * scale).collect(),
        bn_receiver_distance: positions.iter().map(|x| (40.0 - x) * scale).collect(),
        source_receiver_distance,
    }
}

/// How the path-loss exponent enters the power gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLoss {
    /// |h|^2 = |h~|^2 d^-n.
    #[default]
    Power,
    /// h = h~ d^-n, so |h|^2 = |h~|^2 d^-2n.
    Amplitude,
}

impl PathLoss {
    pub fn power_gain(self, distance: f64, exponent: f64) -> f64 {
        match self {
            PathLoss::Power => distance.powf(-exponent),
            PathLoss::Amplitude => distance.powf(-2.0 * exponent),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub realization_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, realization_index: u64) -> Self {
        SeedSpec {
            master_seed,
            realization_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.realization_index);
        rng
    }
}

/// |x|^2 for x ~ CN(0, 1); exactly-zero draws are redrawn.
pub fn unit_fading_power<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let re: f64 = rng.sample::<f64, _>(StandardNormal) * FRAC_1_SQRT_2;
        let im: f64 = rng.sample::<f64, _>(StandardNormal) * FRAC_1_SQRT_2;
        let p = re * re + im * im;
        if p > 0.0 {
            return p;
        }
    }
}

/// Small-scale fading powers `(|h~_k|^2, |g~_k|^2)` in BN order.
pub fn sample_fading(num_bns: usize, seed: SeedSpec) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seed.rng();
    (0..num_bns)
        .map(|_| {
            let h = unit_fading_power(&mut rng);
            let g = unit_fading_power(&mut rng);
            (h, g)
        })
        .unzip()
}

/// Applies path loss to fading powers and builds the SIC-ordered
/// realization.
pub fn realization_from_fading(
    params: &SystemParams,
    geometry: &Geometry,
    path_loss: PathLoss,
    fading_h: &[f64],
    fading_g: &[f64],
) -> Result<ChannelRealization> {
    geometry.validate(params.num_bns)?;
    let n = params.pathloss_exponent;
    let h: Vec<f64> = fading_h
        .iter()
        .zip(&geometry.source_bn_distance)
        .map(|(f, &d)| f * path_loss.power_gain(d, n))
        .collect();
    let g: Vec<f64> = fading_g
        .iter()
        .zip(&geometry.bn_receiver_distance)
        .map(|(f, &d)| f * path_loss.power_gain(d, n))
        .collect();
    ChannelRealization::from_gains(params, &h, &g)
}

pub fn sample_realization(
    params: &SystemParams,
    geometry: &Geometry,
    path_loss: PathLoss,
    seed: SeedSpec,
) -> Result<ChannelRealization> {
    let (fh, fg) = sample_fading(params.num_bns, seed);
    realization_from_fading(params, geometry, path_loss, &fh, &fg)
}
