//! Dinkelbach-based alternating optimization.
//!
//! For fixed power and time split, throughput grows with every reflection
//! coefficient while energy does not depend on them, so each BN reflects as
//! much as its energy causality allows ([`optimal_beta`]). Substituting that
//! bound and switching to the effective power `P~ = kappa * P_s` with
//! `kappa = 1 / tau_a` leaves a one-dimensional concave problem in `P~` per
//! operating mode:
//!
//! * harvest-on-transmit (HoT): `kappa = 1`, no sleep phase,
//!   `P~ in [max_k c_k, P_max]`;
//! * harvest-then-transmit (HtT): the source runs at `P_max`,
//!   `kappa = P~ / P_max`, `P~ in [max(P_max, max_k c_k), P_max + min_k c_k]`.
//!
//! Both have closed-form maximizers. The outer Dinkelbach loop solves both at
//! the current ratio `alpha`, keeps the better one and updates `alpha` to the
//! achieved throughput-to-energy ratio until the parametric objective
//! vanishes.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::model::{self, Allocation, ChannelRealization, Evaluation, SystemParams};
use crate::{Error, Result};

/// Log arguments below `1 - LOG_ARGUMENT_TOLERANCE` signal a broken bound.
const LOG_ARGUMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once `|f(alpha)|` drops below this.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub initial_alpha: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-8,
            max_iterations: 100,
            initial_alpha: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be >= 1"));
        }
        if !(self.initial_alpha >= 0.0 && self.initial_alpha.is_finite()) {
            return Err(Error::invalid(
                "initial_alpha",
                format!("must be finite and >= 0, got {}", self.initial_alpha),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "hot")]
    HarvestOnTransmit,
    #[serde(rename = "htt")]
    HarvestThenTransmit,
    #[serde(rename = "infeasible")]
    Infeasible,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::HarvestOnTransmit => "hot",
            Mode::HarvestThenTransmit => "htt",
            Mode::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerInterval {
    pub lower: f64,
    pub upper: f64,
}

impl PowerInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lower).min(self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub effective_power: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub mode: Mode,
    /// `None` when no mode is feasible.
    pub allocation: Option<Allocation>,
    pub evaluation: Option<Evaluation>,
    /// Zero for infeasible instances.
    pub energy_efficiency: f64,
    /// `alpha` at which each iteration's subproblems were solved.
    pub alpha_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Parametric objective `f(alpha)` at termination.
    pub final_objective: f64,
    pub effective_power: f64,
    pub time_scale: f64,
}

impl SolveResult {
    pub(crate) fn infeasible(alpha_trace: Vec<f64>) -> Self {
        SolveResult {
            mode: Mode::Infeasible,
            allocation: None,
            evaluation: None,
            energy_efficiency: 0.0,
            iterations: alpha_trace.len(),
            alpha_trace,
            converged: true,
            final_objective: 0.0,
            effective_power: 0.0,
            time_scale: 1.0,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.mode != Mode::Infeasible
    }

    pub fn sleep_fraction(&self) -> Option<f64> {
        self.allocation.as_ref().map(|a| a.sleep_fraction)
    }
}

/// Largest reflection coefficient per BN that keeps its energy causal:
/// `min(1, max(1/tau_a - c_k/P_s, 0))`.
pub fn optimal_beta(channels: &ChannelRealization, source_power: f64, active_fraction: f64) -> Vec<f64> {
    channels
        .circuit_demand
        .iter()
        .map(|c| (1.0 / active_fraction - c / source_power).clamp(0.0, 1.0))
        .collect()
}

/// `1 + sum_k gamma_k (P~ - c_k)`, i.e. `mu + P~ sum_k gamma_k`, evaluated
/// term by term to avoid cancellation between `mu` and the sum.
pub fn reduced_log_argument(channels: &ChannelRealization, effective_power: f64) -> f64 {
    1.0 + channels
        .snr_gain
        .iter()
        .zip(&channels.circuit_demand)
        .map(|(g, c)| g * (effective_power - c))
        .sum::<f64>()
}

fn reduced_throughput(channels: &ChannelRealization, effective_power: f64) -> Result<f64> {
    let arg = reduced_log_argument(channels, effective_power);
    if !(arg >= 1.0 - LOG_ARGUMENT_TOLERANCE) {
        return Err(Error::Numerical(format!(
            "reduced log argument {arg} < 1 at effective power {effective_power}"
        )));
    }
    Ok(arg.max(1.0).log2())
}

/// Reduced energy `P~/xi + kappa P_sc + P_rc` for HoT.
fn hot_energy(params: &SystemParams, effective_power: f64) -> f64 {
    effective_power / params.pa_efficiency + params.source_circuit_power + params.receiver_circuit_power
}

/// Reduced energy for HtT, where `kappa = P~ / P_max`.
fn htt_energy(params: &SystemParams, effective_power: f64) -> f64 {
    effective_power / params.pa_efficiency
        + params.source_circuit_power / params.p_max * effective_power
        + params.receiver_circuit_power
}

fn degenerate(channels: &ChannelRealization) -> bool {
    !(channels.total_snr_gain() > 0.0)
}

pub fn hot_bounds(params: &SystemParams, channels: &ChannelRealization) -> Option<PowerInterval> {
    let lower = channels.max_circuit_demand();
    (lower <= params.p_max && !degenerate(channels)).then_some(PowerInterval {
        lower,
        upper: params.p_max,
    })
}

pub fn htt_bounds(params: &SystemParams, channels: &ChannelRealization) -> Option<PowerInterval> {
    let lower = params.p_max.max(channels.max_circuit_demand());
    let upper = params.p_max + channels.min_circuit_demand();
    (lower <= upper && !degenerate(channels)).then_some(PowerInterval { lower, upper })
}

/// Stationary point of the HoT objective, `xi/(alpha ln 2) - mu/sum(gamma)`;
/// `+inf` at `alpha = 0`.
pub fn hot_critical_point(alpha: f64, params: &SystemParams, channels: &ChannelRealization) -> f64 {
    if alpha <= 0.0 {
        return f64::INFINITY;
    }
    params.pa_efficiency / (alpha * LN_2) - channels.mu / channels.total_snr_gain()
}

/// Stationary point of the HtT objective,
/// `1/(alpha ln 2 (1/xi + P_sc/P_max)) - mu/sum(gamma)`.
pub fn htt_critical_point(alpha: f64, params: &SystemParams, channels: &ChannelRealization) -> f64 {
    if alpha <= 0.0 {
        return f64::INFINITY;
    }
    let slope = 1.0 / params.pa_efficiency + params.source_circuit_power / params.p_max;
    1.0 / (alpha * LN_2 * slope) - channels.mu / channels.total_snr_gain()
}

pub fn hot_objective(alpha: f64, params: &SystemParams, channels: &ChannelRealization, effective_power: f64) -> Result<f64> {
    Ok(reduced_throughput(channels, effective_power)? - alpha * hot_energy(params, effective_power))
}

pub fn htt_objective(alpha: f64, params: &SystemParams, channels: &ChannelRealization, effective_power: f64) -> Result<f64> {
    Ok(reduced_throughput(channels, effective_power)? - alpha * htt_energy(params, effective_power))
}

pub fn solve_hot(alpha: f64, params: &SystemParams, channels: &ChannelRealization) -> Result<Option<SubproblemSolution>> {
    let Some(bounds) = hot_bounds(params, channels) else {
        return Ok(None);
    };
    let effective_power = bounds.clamp(hot_critical_point(alpha, params, channels));
    Ok(Some(SubproblemSolution {
        effective_power,
        objective: hot_objective(alpha, params, channels, effective_power)?,
    }))
}

pub fn solve_htt(alpha: f64, params: &SystemParams, channels: &ChannelRealization) -> Result<Option<SubproblemSolution>> {
    let Some(bounds) = htt_bounds(params, channels) else {
        return Ok(None);
    };
    let effective_power = bounds.clamp(htt_critical_point(alpha, params, channels));
    Ok(Some(SubproblemSolution {
        effective_power,
        objective: htt_objective(alpha, params, channels, effective_power)?,
    }))
}

/// A subproblem maximizer in reduced coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub mode: Mode,
    pub effective_power: f64,
    pub time_scale: f64,
    /// Throughput per unit active time.
    pub throughput: f64,
    /// Energy per unit active time.
    pub energy: f64,
}

impl Candidate {
    pub fn objective(&self, alpha: f64) -> f64 {
        self.throughput - alpha * self.energy
    }

    pub fn hot(params: &SystemParams, channels: &ChannelRealization, effective_power: f64) -> Result<Self> {
        Ok(Candidate {
            mode: Mode::HarvestOnTransmit,
            effective_power,
            time_scale: 1.0,
            throughput: reduced_throughput(channels, effective_power)?,
            energy: hot_energy(params, effective_power),
        })
    }

    pub fn htt(params: &SystemParams, channels: &ChannelRealization, effective_power: f64) -> Result<Self> {
        Ok(Candidate {
            mode: Mode::HarvestThenTransmit,
            effective_power,
            time_scale: effective_power / params.p_max,
            throughput: reduced_throughput(channels, effective_power)?,
            energy: htt_energy(params, effective_power),
        })
    }
}

/// Mode selection: HtT only when strictly better, so ties go to HoT.
pub(crate) fn select(hot: Option<Candidate>, htt: Option<Candidate>, alpha: f64) -> Option<Candidate> {
    match (hot, htt) {
        (Some(a), Some(b)) if b.objective(alpha) > a.objective(alpha) => Some(b),
        (Some(a), _) => Some(a),
        (None, b) => b,
    }
}

pub(crate) struct DinkelbachRun {
    pub best: Option<Candidate>,
    pub alpha_trace: Vec<f64>,
    pub converged: bool,
    pub final_objective: f64,
}

/// Generic Dinkelbach loop over a per-`alpha` maximizer. `solve_at` returns
/// `None` when nothing is feasible.
pub(crate) fn run_dinkelbach<F>(config: &SolverConfig, mut solve_at: F) -> Result<DinkelbachRun>
where
    F: FnMut(f64) -> Result<Option<Candidate>>,
{
    config.validate()?;
    let mut alpha = config.initial_alpha;
    let mut alpha_trace = Vec::new();
    loop {
        alpha_trace.push(alpha);
        let Some(cand) = solve_at(alpha)? else {
            return Ok(DinkelbachRun {
                best: None,
                alpha_trace,
                converged: true,
                final_objective: 0.0,
            });
        };
        let f = cand.objective(alpha);
        let converged = f.abs() < config.epsilon;
        if converged || alpha_trace.len() >= config.max_iterations {
            return Ok(DinkelbachRun {
                best: Some(cand),
                alpha_trace,
                converged,
                final_objective: f,
            });
        }
        alpha = cand.throughput / cand.energy;
    }
}

/// Maps a reduced-coordinate solution back to `(P_s, tau_a)`.
pub(crate) fn recover_power_and_time(params: &SystemParams, cand: &Candidate) -> (f64, f64) {
    match cand.mode {
        Mode::HarvestThenTransmit => (params.p_max, params.p_max / cand.effective_power),
        _ => (cand.effective_power, 1.0),
    }
}

pub(crate) fn finish(run: DinkelbachRun, build: impl FnOnce(&Candidate) -> (Allocation, Evaluation)) -> SolveResult {
    let Some(cand) = run.best else {
        return SolveResult::infeasible(run.alpha_trace);
    };
    let (allocation, evaluation) = build(&cand);
    SolveResult {
        mode: cand.mode,
        energy_efficiency: evaluation.energy_efficiency,
        allocation: Some(allocation),
        evaluation: Some(evaluation),
        iterations: run.alpha_trace.len(),
        alpha_trace: run.alpha_trace,
        converged: run.converged,
        final_objective: run.final_objective,
        effective_power: cand.effective_power,
        time_scale: cand.time_scale,
    }
}

/// NOMA allocation and its direct evaluation for a reduced solution.
pub(crate) fn noma_allocation(params: &SystemParams, channels: &ChannelRealization, cand: &Candidate) -> (Allocation, Evaluation) {
    let (p_s, tau_a) = recover_power_and_time(params, cand);
    let allocation = Allocation::new(p_s, tau_a, optimal_beta(channels, p_s, tau_a));
    let evaluation = model::evaluate(params, channels, &allocation);
    (allocation, evaluation)
}

/// Solves the joint power / time / reflection problem.
pub fn dinkelbach_solve(params: &SystemParams, channels: &ChannelRealization, config: &SolverConfig) -> Result<SolveResult> {
    let run = run_dinkelbach(config, |alpha| {
        let hot = solve_hot(alpha, params, channels)?
            .map(|s| Candidate::hot(params, channels, s.effective_power))
            .transpose()?;
        let htt = solve_htt(alpha, params, channels)?
            .map(|s| Candidate::htt(params, channels, s.effective_power))
            .transpose()?;
        Ok(select(hot, htt, alpha))
    })?;
    Ok(finish(run, |c| noma_allocation(params, channels, c)))
}
