//! Domain types and direct evaluation of a candidate allocation.
//!
//! Everything here works on the unreduced problem: given a source power, a
//! sleep/active split and a reflection vector, compute what each BN harvests,
//! what the receiver decodes and what the network spends. Units are linear
//! watts and joules over a unit-length slot; rates are bandwidth-normalized
//! (bits/s/Hz), so energy efficiency comes out in bits/Hz/J.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative slack applied to every constraint check.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Static network parameters. All powers in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub num_bns: usize,
    pub p_max: f64,
    pub noise_power: f64,
    pub pa_efficiency: f64,
    pub source_circuit_power: f64,
    pub receiver_circuit_power: f64,
    pub bn_circuit_power: Vec<f64>,
    pub harvest_efficiency: Vec<f64>,
    pub pathloss_exponent: f64,
}

impl SystemParams {
    pub const DEFAULT_P_MAX_DBM: f64 = 30.0;
    pub const DEFAULT_NOISE_DBM: f64 = -100.0;
    pub const DEFAULT_HARVEST_EFFICIENCY: f64 = 0.6;
    pub const DEFAULT_PATHLOSS_EXPONENT: f64 = 3.0;
    pub const DEFAULT_PA_EFFICIENCY: f64 = 0.9;
    pub const DEFAULT_SOURCE_CIRCUIT_DBM: f64 = 20.0;
    pub const DEFAULT_RECEIVER_CIRCUIT_DBM: f64 = 10.0;
    pub const DEFAULT_BN_CIRCUIT_DBM: f64 = 0.0;

    /// Reference simulation parameters for `num_bns` nodes with a 30 dBm
    /// power budget.
    pub fn reference(num_bns: usize) -> Self {
        SystemParams {
            num_bns,
            p_max: dbm_to_watts(Self::DEFAULT_P_MAX_DBM),
            noise_power: dbm_to_watts(Self::DEFAULT_NOISE_DBM),
            pa_efficiency: Self::DEFAULT_PA_EFFICIENCY,
            source_circuit_power: dbm_to_watts(Self::DEFAULT_SOURCE_CIRCUIT_DBM),
            receiver_circuit_power: dbm_to_watts(Self::DEFAULT_RECEIVER_CIRCUIT_DBM),
            bn_circuit_power: vec![dbm_to_watts(Self::DEFAULT_BN_CIRCUIT_DBM); num_bns],
            harvest_efficiency: vec![Self::DEFAULT_HARVEST_EFFICIENCY; num_bns],
            pathloss_exponent: Self::DEFAULT_PATHLOSS_EXPONENT,
        }
    }

    pub fn with_p_max(mut self, p_max: f64) -> Self {
        self.p_max = p_max;
        self
    }

    pub fn with_bn_circuit_power(mut self, p_tc: f64) -> Self {
        self.bn_circuit_power = vec![p_tc; self.num_bns];
        self
    }

    pub fn with_pathloss_exponent(mut self, n: f64) -> Self {
        self.pathloss_exponent = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn nonneg(field: &str, x: f64) -> Result<()> {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must be finite and >= 0, got {x}")))
            }
        }
        fn unit(field: &str, x: f64) -> Result<()> {
            if x > 0.0 && x <= 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(field, format!("must lie in (0, 1], got {x}")))
            }
        }

        if self.num_bns == 0 {
            return Err(Error::invalid("num_bns", "need at least one BN"));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::invalid("p_max", format!("must be > 0, got {}", self.p_max)));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::invalid(
                "noise_power",
                format!("must be > 0, got {}", self.noise_power),
            ));
        }
        unit("pa_efficiency", self.pa_efficiency)?;
        nonneg("source_circuit_power", self.source_circuit_power)?;
        nonneg("receiver_circuit_power", self.receiver_circuit_power)?;
        nonneg("pathloss_exponent", self.pathloss_exponent)?;
        for (name, len) in [
            ("bn_circuit_power", self.bn_circuit_power.len()),
            ("harvest_efficiency", self.harvest_efficiency.len()),
        ] {
            if len != self.num_bns {
                return Err(Error::invalid(
                    name,
                    format!("expected {} entries, got {len}", self.num_bns),
                ));
            }
        }
        for &p in &self.bn_circuit_power {
            nonneg("bn_circuit_power", p)?;
        }
        for &eta in &self.harvest_efficiency {
            unit("harvest_efficiency", eta)?;
        }
        Ok(())
    }
}

/// One channel draw, stored in SIC decoding order (descending BN-to-receiver
/// gain). `bn_index[k]` maps SIC position `k` back to the BN's index in
/// [`SystemParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub bn_index: Vec<usize>,
    /// |h_k|^2, source to BN.
    pub source_bn_gain: Vec<f64>,
    /// |g_k|^2, BN to receiver.
    pub bn_receiver_gain: Vec<f64>,
    /// gamma_k = |h_k|^2 |g_k|^2 / noise, per watt.
    pub snr_gain: Vec<f64>,
    /// c_k = P_tc,k / (eta_k |h_k|^2): the source power at which BN k's
    /// active-phase harvest exactly covers its circuit.
    pub circuit_demand: Vec<f64>,
    /// 1 - sum_k c_k gamma_k.
    pub mu: f64,
}

impl ChannelRealization {
    /// Builds a realization from per-BN power gains given in BN order
    /// (matching `params`), sorting into SIC order.
    pub fn from_gains(params: &SystemParams, source_bn_gain: &[f64], bn_receiver_gain: &[f64]) -> Result<Self> {
        let k = params.num_bns;
        if source_bn_gain.len() != k || bn_receiver_gain.len() != k {
            return Err(Error::invalid(
                "channel",
                format!(
                    "expected {k} gains per link, got {} and {}",
                    source_bn_gain.len(),
                    bn_receiver_gain.len()
                ),
            ));
        }
        for (name, gains) in [("source_bn_gain", source_bn_gain), ("bn_receiver_gain", bn_receiver_gain)] {
            if let Some(&bad) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
                return Err(Error::invalid(name, format!("gains must be finite and > 0, got {bad}")));
            }
        }

        let mut order: Vec<usize> = (0..k).collect();
        // Stable sort keeps BN order on exact ties.
        order.sort_by(|&a, &b| bn_receiver_gain[b].total_cmp(&bn_receiver_gain[a]));

        let h: Vec<f64> = order.iter().map(|&i| source_bn_gain[i]).collect();
        let g: Vec<f64> = order.iter().map(|&i| bn_receiver_gain[i]).collect();
        let snr_gain: Vec<f64> = h.iter().zip(&g).map(|(h, g)| h * g / params.noise_power).collect();
        let circuit_demand: Vec<f64> = order
            .iter()
            .zip(&h)
            .map(|(&i, h)| params.bn_circuit_power[i] / (params.harvest_efficiency[i] * h))
            .collect();
        let mu = 1.0 - circuit_demand.iter().zip(&snr_gain).map(|(c, g)| c * g).sum::<f64>();

        Ok(ChannelRealization {
            bn_index: order,
            source_bn_gain: h,
            bn_receiver_gain: g,
            snr_gain,
            circuit_demand,
            mu,
        })
    }

    pub fn num_bns(&self) -> usize {
        self.snr_gain.len()
    }

    pub fn total_snr_gain(&self) -> f64 {
        self.snr_gain.iter().sum()
    }

    pub fn max_circuit_demand(&self) -> f64 {
        self.circuit_demand.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_circuit_demand(&self) -> f64 {
        self.circuit_demand.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Harvesting efficiency of the BN at SIC position `k`.
    pub fn harvest_efficiency(&self, params: &SystemParams, k: usize) -> f64 {
        params.harvest_efficiency[self.bn_index[k]]
    }

    /// Circuit power of the BN at SIC position `k`.
    pub fn circuit_power(&self, params: &SystemParams, k: usize) -> f64 {
        params.bn_circuit_power[self.bn_index[k]]
    }
}

/// A candidate decision. `reflection` is indexed in SIC order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub source_power: f64,
    pub sleep_fraction: f64,
    pub active_fraction: f64,
    pub reflection: Vec<f64>,
}

impl Allocation {
    /// Allocation with `tau_s = 1 - tau_a`.
    pub fn new(source_power: f64, active_fraction: f64, reflection: Vec<f64>) -> Self {
        Allocation {
            source_power,
            sleep_fraction: 1.0 - active_fraction,
            active_fraction,
            reflection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_user_rate: Vec<f64>,
    pub sum_rate: f64,
    pub total_energy: f64,
    pub energy_efficiency: f64,
    pub harvested_sleep: Vec<f64>,
    pub harvested_active: Vec<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    /// 0 <= P_s <= P_max
    PowerBudget,
    /// tau_s >= 0, tau_a > 0
    PhaseSign,
    /// tau_s + tau_a = 1
    SlotPartition,
    /// 0 <= beta_k <= 1
    ReflectionRange { bn: usize },
    /// P_tc,k tau_a <= E_k^sleep + E_k^active
    EnergyCausality { bn: usize },
}

impl Constraint {
    /// Short tag, `C1`..`C5`.
    pub fn tag(&self) -> &'static str {
        match self {
            Constraint::PowerBudget => "C1",
            Constraint::PhaseSign => "C2",
            Constraint::SlotPartition => "C3",
            Constraint::ReflectionRange { .. } => "C4",
            Constraint::EnergyCausality { .. } => "C5",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::ReflectionRange { bn } | Constraint::EnergyCausality { bn } => {
                write!(f, "{} (bn {bn})", self.tag())
            }
            _ => f.write_str(self.tag()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Constraint>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, tag: &str) -> bool {
        self.violations.iter().any(|c| c.tag() == tag)
    }
}

/// `lhs <= rhs` up to [`FEASIBILITY_SLACK`] relative to the larger magnitude.
pub(crate) fn within(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + FEASIBILITY_SLACK * lhs.abs().max(rhs.abs())
}

/// Per-BN energy harvested during the sleep and active phases.
pub fn harvested_energy(params: &SystemParams, channels: &ChannelRealization, alloc: &Allocation) -> (Vec<f64>, Vec<f64>) {
    (0..channels.num_bns())
        .map(|k| {
            let incident = channels.harvest_efficiency(params, k) * alloc.source_power * channels.source_bn_gain[k];
            let sleep = incident * alloc.sleep_fraction;
            let active = incident * (1.0 - alloc.reflection[k]) * alloc.active_fraction;
            (sleep, active)
        })
        .unzip()
}

/// Received SNR contributions `beta_k P_s gamma_k` in SIC order.
fn received_snr<'a>(channels: &'a ChannelRealization, alloc: &'a Allocation) -> impl Iterator<Item = f64> + 'a {
    alloc
        .reflection
        .iter()
        .zip(&channels.snr_gain)
        .map(move |(b, g)| b * alloc.source_power * g)
}

/// Per-BN rate under SIC: BN k sees interference only from BNs decoded after
/// it (weaker receiver links, higher SIC index).
pub fn per_user_rates(channels: &ChannelRealization, alloc: &Allocation) -> Vec<f64> {
    let snr: Vec<f64> = received_snr(channels, alloc).collect();
    let mut rates = vec![0.0; snr.len()];
    let mut interference = 0.0;
    for k in (0..snr.len()).rev() {
        rates[k] = alloc.active_fraction * (snr[k] / (interference + 1.0)).ln_1p() / LN_2;
        interference += snr[k];
    }
    rates
}

pub fn sum_rate(channels: &ChannelRealization, alloc: &Allocation) -> f64 {
    let total: f64 = received_snr(channels, alloc).sum();
    alloc.active_fraction * total.ln_1p() / LN_2
}

pub fn total_energy(params: &SystemParams, alloc: &Allocation) -> f64 {
    let radiated = alloc.source_power / params.pa_efficiency + params.source_circuit_power;
    alloc.sleep_fraction * radiated + alloc.active_fraction * (radiated + params.receiver_circuit_power)
}

pub fn check_feasibility(params: &SystemParams, channels: &ChannelRealization, alloc: &Allocation) -> FeasibilityReport {
    let mut violations = Vec::new();

    if !(alloc.source_power >= 0.0 && within(alloc.source_power, params.p_max)) {
        violations.push(Constraint::PowerBudget);
    }
    if !(alloc.active_fraction > 0.0 && within(0.0, alloc.sleep_fraction)) {
        violations.push(Constraint::PhaseSign);
    }
    let slot = alloc.sleep_fraction + alloc.active_fraction;
    if (slot - 1.0).abs() > FEASIBILITY_SLACK {
        violations.push(Constraint::SlotPartition);
    }
    if alloc.reflection.len() != channels.num_bns() {
        // A wrong-length vector cannot be checked per BN; flag all of them.
        violations.extend((0..channels.num_bns()).map(|bn| Constraint::ReflectionRange { bn }));
        return FeasibilityReport { violations };
    }
    for (bn, &b) in alloc.reflection.iter().enumerate() {
        if !(within(0.0, b) && within(b, 1.0)) {
            violations.push(Constraint::ReflectionRange { bn });
        }
    }
    let (sleep, active) = harvested_energy(params, channels, alloc);
    for bn in 0..channels.num_bns() {
        let demand = channels.circuit_power(params, bn) * alloc.active_fraction;
        if !within(demand, sleep[bn] + active[bn]) {
            violations.push(Constraint::EnergyCausality { bn });
        }
    }
    FeasibilityReport { violations }
}

/// Full evaluation. Infeasible allocations, and allocations that spend no
/// energy, report an energy efficiency of zero.
pub fn evaluate(params: &SystemParams, channels: &ChannelRealization, alloc: &Allocation) -> Evaluation {
    let feasible = check_feasibility(params, channels, alloc).is_feasible();
    let (harvested_sleep, harvested_active) = harvested_energy(params, channels, alloc);
    let per_user_rate = per_user_rates(channels, alloc);
    let sum_rate = sum_rate(channels, alloc);
    let total_energy = total_energy(params, alloc);
    let energy_efficiency = if feasible && total_energy > 0.0 {
        sum_rate / total_energy
    } else {
        0.0
    };
    Evaluation {
        per_user_rate,
        sum_rate,
        total_energy,
        energy_efficiency,
        harvested_sleep,
        harvested_active,
        feasible,
    }
}



#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn instance() -> impl Strategy<Value = (SystemParams, ChannelRealization, Allocation)> {
        (1usize..8).prop_flat_map(|k| {
            (
                proptest::collection::vec(1e-6f64..1.0, k),
                proptest::collection::vec(1e-9f64..1e-3, k),
                proptest::collection::vec(0.0f64..=1.0, k),
                0.0f64..5.0,
                1e-4f64..=1.0,
            )
                .prop_map(move |(h, g, beta, p_s, tau_a)| {
                    let params = SystemParams::reference(k);
                    let ch = ChannelRealization::from_gains(&params, &h, &g).unwrap();
                    (params, ch, Allocation::new(p_s, tau_a, beta))
                })
        })
    }

    proptest! {
        #[test]
        fn per_user_rates_telescope((_, ch, alloc) in instance()) {
            let total: f64 = per_user_rates(&ch, &alloc).iter().sum();
            let direct = sum_rate(&ch, &alloc);
            prop_assert!((total - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
        }

        #[test]
        fn energy_is_affine_in_power((params, _, alloc) in instance(), lambda in 0.0f64..1.0, p2 in 0.0f64..5.0) {
            let at = |p: f64| total_energy(&params, &Allocation { source_power: p, ..alloc.clone() });
            let p1 = alloc.source_power;
            let mixed = at(lambda * p1 + (1.0 - lambda) * p2);
            let interp = lambda * at(p1) + (1.0 - lambda) * at(p2);
            prop_assert!((mixed - interp).abs() <= 1e-12 * interp.abs().max(1.0));
        }

        #[test]
        fn dbm_round_trip(w in 1e-15f64..1e3) {
            prop_assert!((dbm_to_watts(watts_to_dbm(w)) - w).abs() <= 1e-12 * w);
        }

        #[test]
        fn sum_rate_ignores_bn_order_but_per_user_does_not(
            snr in proptest::collection::vec(0.1f64..10.0, 2..6),
            rot in 1usize..5,
        ) {
            // Same links listed in a different BN order produce the same SIC
            // realization, so compare the raw formulas on permuted vectors.
            let k = snr.len();
            let mut params = SystemParams::reference(k).with_bn_circuit_power(0.0);
            params.noise_power = 1.0;
            let ch = ChannelRealization::from_gains(&params, &vec![1.0; k], &snr).unwrap();
            let alloc = Allocation::new(1.0, 1.0, vec![1.0; k]);
            let mut permuted = ch.clone();
            permuted.snr_gain.rotate_left(rot % k);
            let a = sum_rate(&ch, &alloc);
            let b = sum_rate(&permuted, &alloc);
            prop_assert!((a - b).abs() <= 1e-12 * a);
            let distinct = ch.snr_gain.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-6);
            if rot % k != 0 && distinct {
                prop_assert_ne!(per_user_rates(&ch, &alloc), per_user_rates(&permuted, &alloc));
            }
        }
    }
}
