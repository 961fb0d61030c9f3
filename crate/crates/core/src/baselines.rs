//! Comparison schemes: fixed source power, no sleep phase, and TDMA.
//!
//! The first two are restrictions of the proposed solver's feasible set and
//! reuse its closed forms. TDMA splits the active phase into `K` equal
//! sub-slots; BN `k` reflects only in its own sub-slot, harvests everywhere
//! else, and only needs to power its circuit while it transmits.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::model::{self, within, Allocation, ChannelRealization, Constraint, Evaluation, FeasibilityReport, SystemParams};
use crate::optimizer::{self, finish, run_dinkelbach, select, Candidate, Mode, SolveResult, SolverConfig};
use crate::search::golden_section_max;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    FixedPower,
    NoSleep,
    OmaTdma,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::FixedPower, BaselineKind::NoSleep, BaselineKind::OmaTdma];
}

pub fn solve_baseline(
    kind: BaselineKind,
    params: &SystemParams,
    channels: &ChannelRealization,
    config: &SolverConfig,
) -> Result<SolveResult> {
    match kind {
        BaselineKind::FixedPower => solve_fixed_power(params, channels, config),
        BaselineKind::NoSleep => solve_no_sleep(params, channels, config),
        BaselineKind::OmaTdma => solve_oma(params, channels, config),
    }
}

/// Source pinned at `P_max`: the HoT branch collapses to `P~ = P_max`, the
/// HtT branch is unchanged (it already runs the source at `P_max`).
pub fn solve_fixed_power(params: &SystemParams, channels: &ChannelRealization, config: &SolverConfig) -> Result<SolveResult> {
    let run = run_dinkelbach(config, |alpha| {
        let hot = optimizer::hot_bounds(params, channels)
            .map(|_| Candidate::hot(params, channels, params.p_max))
            .transpose()?;
        let htt = optimizer::solve_htt(alpha, params, channels)?
            .map(|s| Candidate::htt(params, channels, s.effective_power))
            .transpose()?;
        Ok(select(hot, htt, alpha))
    })?;
    Ok(finish(run, |c| optimizer::noma_allocation(params, channels, c)))
}

/// HoT only (`tau_s = 0`).
pub fn solve_no_sleep(params: &SystemParams, channels: &ChannelRealization, config: &SolverConfig) -> Result<SolveResult> {
    let run = run_dinkelbach(config, |alpha| {
        optimizer::solve_hot(alpha, params, channels)?
            .map(|s| Candidate::hot(params, channels, s.effective_power))
            .transpose()
    })?;
    Ok(finish(run, |c| optimizer::noma_allocation(params, channels, c)))
}

/// Largest causal TDMA reflection per BN: `min(1, max(K/tau_a - c_k/P_s, 0))`.
pub fn oma_optimal_beta(channels: &ChannelRealization, source_power: f64, active_fraction: f64) -> Vec<f64> {
    let k = channels.num_bns() as f64;
    channels
        .circuit_demand
        .iter()
        .map(|c| (k / active_fraction - c / source_power).clamp(0.0, 1.0))
        .collect()
}

/// TDMA throughput per unit active time at effective power `P~` and source
/// power `P_s`, with each BN reflecting at its causal bound:
/// `(1/K) sum_k log2(1 + gamma_k min(P_s, K P~ - c_k))`.
fn oma_reduced_throughput(channels: &ChannelRealization, effective_power: f64, source_power: f64) -> f64 {
    let k = channels.num_bns() as f64;
    let total: f64 = channels
        .snr_gain
        .iter()
        .zip(&channels.circuit_demand)
        .map(|(g, c)| (g * source_power.min(k * effective_power - c).max(0.0)).ln_1p())
        .sum();
    total / (k * LN_2)
}

fn oma_candidate(params: &SystemParams, channels: &ChannelRealization, mode: Mode, effective_power: f64) -> Candidate {
    let (source_power, time_scale) = match mode {
        Mode::HarvestThenTransmit => (params.p_max, effective_power / params.p_max),
        _ => (effective_power, 1.0),
    };
    let energy = effective_power / params.pa_efficiency
        + time_scale * params.source_circuit_power
        + params.receiver_circuit_power;
    Candidate {
        mode,
        effective_power,
        time_scale,
        throughput: oma_reduced_throughput(channels, effective_power, source_power),
        energy,
    }
}

fn oma_best(
    params: &SystemParams,
    channels: &ChannelRealization,
    mode: Mode,
    lower: f64,
    upper: f64,
    alpha: f64,
) -> Candidate {
    let tol = 1e-10 * params.p_max;
    let (p, _) = golden_section_max(
        |p| oma_candidate(params, channels, mode, p).objective(alpha),
        lower,
        upper,
        tol,
    );
    oma_candidate(params, channels, mode, p)
}

/// TDMA baseline solved by Dinkelbach with a golden-section inner search per
/// mode (the inner objectives are concave in `P~` but have no closed form).
pub fn solve_oma(params: &SystemParams, channels: &ChannelRealization, config: &SolverConfig) -> Result<SolveResult> {
    let k = channels.num_bns() as f64;
    let max_demand = channels.max_circuit_demand();
    let degenerate = !(channels.total_snr_gain() > 0.0);
    // Past (P_max + max c)/K every BN reflects fully, so the HtT rate is flat
    // and a larger P~ only costs energy.
    let htt_lower = params.p_max.max(max_demand / k);
    let htt_upper = htt_lower.max((params.p_max + max_demand) / k);
    let hot_feasible = max_demand / k <= params.p_max;

    let run = run_dinkelbach(config, |alpha| {
        if degenerate {
            return Ok(None);
        }
        let hot = hot_feasible
            .then(|| oma_best(params, channels, Mode::HarvestOnTransmit, max_demand / k, params.p_max, alpha));
        let htt = Some(oma_best(params, channels, Mode::HarvestThenTransmit, htt_lower, htt_upper, alpha));
        Ok(select(hot, htt, alpha))
    })?;
    Ok(finish(run, |c| {
        let (p_s, tau_a) = optimizer::recover_power_and_time(params, c);
        let allocation = Allocation::new(p_s, tau_a, oma_optimal_beta(channels, p_s, tau_a));
        let evaluation = oma_evaluate(params, channels, &allocation);
        (allocation, evaluation)
    }))
}

/// Per-BN harvest under TDMA: full harvest while asleep and during the other
/// BNs' sub-slots, `(1 - beta_k)` of the incident power in its own.
pub fn oma_harvested_energy(params: &SystemParams, channels: &ChannelRealization, alloc: &Allocation) -> (Vec<f64>, Vec<f64>) {
    let k = channels.num_bns() as f64;
    (0..channels.num_bns())
        .map(|i| {
            let incident = channels.harvest_efficiency(params, i) * alloc.source_power * channels.source_bn_gain[i];
            let own = (1.0 - alloc.reflection[i]) / k;
            let others = (k - 1.0) / k;
            (incident * alloc.sleep_fraction, incident * alloc.active_fraction * (others + own))
        })
        .unzip()
}

pub fn oma_per_user_rates(channels: &ChannelRealization, alloc: &Allocation) -> Vec<f64> {
    let k = channels.num_bns() as f64;
    alloc
        .reflection
        .iter()
        .zip(&channels.snr_gain)
        .map(|(b, g)| alloc.active_fraction / k * (b * alloc.source_power * g).ln_1p() / LN_2)
        .collect()
}

/// C1-C4 as for NOMA; causality charges each BN's circuit only over its own
/// sub-slot, `P_tc,k tau_a / K`.
pub fn oma_check_feasibility(params: &SystemParams, channels: &ChannelRealization, alloc: &Allocation) -> FeasibilityReport {
    let mut report = model::check_feasibility(params, channels, alloc);
    report
        .violations
        .retain(|c| !matches!(c, Constraint::EnergyCausality { .. }));
    if alloc.reflection.len() != channels.num_bns() {
        return report;
    }
    let k = channels.num_bns() as f64;
    let (sleep, active) = oma_harvested_energy(params, channels, alloc);
    for bn in 0..channels.num_bns() {
        let demand = channels.circuit_power(params, bn) * alloc.active_fraction / k;
        if !within(demand, sleep[bn] + active[bn]) {
            report.violations.push(Constraint::EnergyCausality { bn });
        }
    }
    report
}

pub fn oma_evaluate(params: &SystemParams, channels: &ChannelRealization, alloc: &Allocation) -> Evaluation {
    let feasible = oma_check_feasibility(params, channels, alloc).is_feasible();
    let (harvested_sleep, harvested_active) = oma_harvested_energy(params, channels, alloc);
    let per_user_rate = oma_per_user_rates(channels, alloc);
    let sum_rate = per_user_rate.iter().sum::<f64>();
    let total_energy = model::total_energy(params, alloc);
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
