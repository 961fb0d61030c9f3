//! Brute-force certification of the solver.
//!
//! The oracle scans a `(P_s, tau_a)` lattice, sets every reflection
//! coefficient to its causal bound and scores each point with
//! [`model::evaluate`]. It deliberately ignores the solver's bound
//! derivations: the power axis starts at zero and infeasible points are just
//! skipped.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{default_geometry, sample_realization, PathLoss, SeedSpec};
use crate::model::{self, dbm_to_watts, Allocation, ChannelRealization, SystemParams};
use crate::optimizer::{dinkelbach_solve, optimal_beta, SolveResult, SolverConfig};
use crate::{Error, Result};

/// Guards the relative gap against division by zero.
const TINY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub power_points: usize,
    pub time_points: usize,
    /// Lower end of the (linear) power axis; the upper end is `P_max`.
    pub power_lower: f64,
    /// Lower cap of the (log-spaced) `tau_a` axis; the upper end is 1.
    pub min_active_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::square(500)
    }
}

impl GridSpec {
    pub fn square(points: usize) -> Self {
        GridSpec {
            power_points: points,
            time_points: points,
            power_lower: 0.0,
            min_active_fraction: 1e-4,
        }
    }

    /// The lattice with every gap halved; contains `self` as a sub-lattice.
    pub fn refined(&self) -> Self {
        GridSpec {
            power_points: 2 * self.power_points - 1,
            time_points: 2 * self.time_points - 1,
            ..*self
        }
    }

    pub fn validate(&self, p_max: f64) -> Result<()> {
        if self.power_points < 2 || self.time_points < 2 {
            return Err(Error::invalid("grid", "need at least 2 points per axis"));
        }
        if !(self.power_lower >= 0.0 && self.power_lower < p_max) {
            return Err(Error::invalid(
                "grid.power_lower",
                format!("must lie in [0, P_max), got {}", self.power_lower),
            ));
        }
        if !(self.min_active_fraction > 0.0 && self.min_active_fraction < 1.0) {
            return Err(Error::invalid(
                "grid.min_active_fraction",
                format!("must lie in (0, 1), got {}", self.min_active_fraction),
            ));
        }
        Ok(())
    }

    pub fn power_at(&self, i: usize, p_max: f64) -> f64 {
        if i + 1 == self.power_points {
            return p_max;
        }
        self.power_lower + (p_max - self.power_lower) * i as f64 / (self.power_points - 1) as f64
    }

    pub fn active_fraction_at(&self, j: usize) -> f64 {
        if j + 1 == self.time_points {
            return 1.0;
        }
        let t = j as f64 / (self.time_points - 1) as f64;
        self.min_active_fraction.powf(1.0 - t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    /// `None` when no lattice point is feasible.
    pub allocation: Option<Allocation>,
    pub energy_efficiency: f64,
    pub feasible_points: usize,
}

fn lattice_allocation(channels: &ChannelRealization, p_s: f64, tau_a: f64) -> Allocation {
    let beta = if p_s > 0.0 {
        optimal_beta(channels, p_s, tau_a)
    } else {
        vec![0.0; channels.num_bns()]
    };
    Allocation::new(p_s, tau_a, beta)
}

/// Exhaustive lattice search. Ties go to the lowest linear index
/// `i * time_points + j`.
pub fn grid_search(params: &SystemParams, channels: &ChannelRealization, grid: &GridSpec) -> Result<GridOptimum> {
    grid.validate(params.p_max)?;
    // Best (ee, j) per power row, then a sequential scan keeps the reduction
    // order fixed.
    let rows: Vec<(usize, Option<(f64, usize)>)> = (0..grid.power_points)
        .into_par_iter()
        .map(|i| {
            let p_s = grid.power_at(i, params.p_max);
            let mut count = 0;
            let mut best: Option<(f64, usize)> = None;
            for j in 0..grid.time_points {
                let alloc = lattice_allocation(channels, p_s, grid.active_fraction_at(j));
                let eval = model::evaluate(params, channels, &alloc);
                if !eval.feasible {
                    continue;
                }
                count += 1;
                if best.is_none_or(|(ee, _)| eval.energy_efficiency > ee) {
                    best = Some((eval.energy_efficiency, j));
                }
            }
            (count, best)
        })
        .collect();

    let mut feasible_points = 0;
    let mut best: Option<(f64, usize, usize)> = None;
    for (i, (count, row)) in rows.into_iter().enumerate() {
        feasible_points += count;
        if let Some((ee, j)) = row {
            if best.is_none_or(|(b, _, _)| ee > b) {
                best = Some((ee, i, j));
            }
        }
    }
    Ok(match best {
        Some((ee, i, j)) => GridOptimum {
            allocation: Some(lattice_allocation(channels, grid.power_at(i, params.p_max), grid.active_fraction_at(j))),
            energy_efficiency: ee,
            feasible_points,
        },
        None => GridOptimum {
            allocation: None,
            energy_efficiency: 0.0,
            feasible_points,
        },
    })
}

/// `max(0, (grid EE - solver EE) / grid EE)`.
pub fn relative_gap(grid_ee: f64, solver_ee: f64) -> f64 {
    ((grid_ee - solver_ee) / grid_ee.max(TINY)).max(0.0)
}

pub fn reduction_gap(
    params: &SystemParams,
    channels: &ChannelRealization,
    grid: &GridSpec,
    config: &SolverConfig,
) -> Result<f64> {
    let oracle = grid_search(params, channels, grid)?;
    let solved = dinkelbach_solve(params, channels, config)?;
    Ok(relative_gap(oracle.energy_efficiency, solved.energy_efficiency))
}

/// Solver-versus-oracle comparison for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub instance: usize,
    pub num_bns: usize,
    pub p_max_dbm: f64,
    pub realization_index: u64,
    pub solver_ee: f64,
    pub grid_ee: f64,
    pub coarse_grid_ee: f64,
    /// `(grid - solver) / max(grid, solver)`; negative when the solver wins.
    pub signed_gap: f64,
    pub reduction_gap: f64,
    /// Relative spread between the fine and the coarse lattice optimum.
    pub resolution_bound: f64,
    /// Relative amount by which the solver beats the fine lattice.
    pub solver_excess: f64,
    pub mode: String,
    pub any_beta_clipped: bool,
    pub iterations: usize,
}

impl OracleComparison {
    pub fn within(&self, rel: f64) -> bool {
        (self.solver_ee - self.grid_ee).abs() <= rel * self.grid_ee.max(self.solver_ee)
    }

    pub fn excess_within_resolution(&self) -> bool {
        self.solver_excess <= self.resolution_bound
    }
}

pub fn compare_instance(
    params: &SystemParams,
    channels: &ChannelRealization,
    grid: &GridSpec,
    coarse: &GridSpec,
    config: &SolverConfig,
) -> Result<(SolveResult, OracleComparison)> {
    let solved = dinkelbach_solve(params, channels, config)?;
    let fine = grid_search(params, channels, grid)?.energy_efficiency;
    let rough = grid_search(params, channels, coarse)?.energy_efficiency;
    let scale = fine.max(rough).max(TINY);
    // Relative to the larger value, so an empty lattice (grid EE 0) against a
    // feasible solve reads as a 100% discrepancy rather than overflowing.
    let versus = fine.max(solved.energy_efficiency).max(TINY);
    let any_beta_clipped = solved
        .allocation
        .as_ref()
        .is_some_and(|a| a.reflection.iter().any(|&b| b >= 1.0));
    let cmp = OracleComparison {
        instance: 0,
        num_bns: params.num_bns,
        p_max_dbm: model::watts_to_dbm(params.p_max),
        realization_index: 0,
        solver_ee: solved.energy_efficiency,
        grid_ee: fine,
        coarse_grid_ee: rough,
        signed_gap: (fine - solved.energy_efficiency) / versus,
        reduction_gap: relative_gap(fine, solved.energy_efficiency),
        resolution_bound: (fine - rough).abs() / scale,
        solver_excess: ((solved.energy_efficiency - fine) / versus).max(0.0),
        mode: solved.mode.as_str().to_string(),
        any_beta_clipped,
        iterations: solved.iterations,
    };
    Ok((solved, cmp))
}

/// Settings for the randomized solver-versus-oracle campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub instances: usize,
    pub max_bns: usize,
    pub p_max_dbm: Vec<f64>,
    pub grid_points: usize,
    pub master_seed: u64,
    pub path_loss: PathLoss,
    pub solver: SolverConfig,
    /// Pass threshold on the relative solver-oracle agreement.
    pub tolerance: f64,
    /// Required fraction of instances within `tolerance`.
    pub required_fraction: f64,
    /// Give up after this many candidate draws per requested instance.
    pub draws_per_instance: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            instances: 200,
            max_bns: 3,
            p_max_dbm: vec![10.0, 20.0, 30.0, 40.0],
            grid_points: 500,
            master_seed: 0x0AC1E,
            path_loss: PathLoss::Power,
            solver: SolverConfig::default(),
            tolerance: 0.01,
            required_fraction: 0.95,
            draws_per_instance: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub comparisons: Vec<OracleComparison>,
    pub draws: u64,
    pub fraction_within_tolerance: f64,
    pub max_solver_excess_over_resolution: f64,
    pub excess_violations: usize,
    pub mean_reduction_gap: f64,
    pub max_reduction_gap: f64,
    pub passed: bool,
}

/// Cycles candidate draws over `K in 1..=max_bns` and the `P_max` list
/// (reference parameters otherwise), keeps those the solver finds feasible and
/// compares each against the fine and the half-resolution lattice.
pub fn validate_against_oracle(cfg: &ValidationConfig) -> Result<ValidationReport> {
    if cfg.instances == 0 {
        return Err(Error::invalid("instances", "must be >= 1"));
    }
    if cfg.max_bns == 0 {
        return Err(Error::invalid("k_max", "must be >= 1"));
    }
    if cfg.p_max_dbm.is_empty() {
        return Err(Error::invalid("p_max_dbm", "need at least one value"));
    }
    let grid = GridSpec::square(cfg.grid_points);
    let coarse = GridSpec::square((cfg.grid_points / 2).max(2));

    let mut picked = Vec::with_capacity(cfg.instances);
    let mut draws = 0u64;
    let budget = (cfg.instances * cfg.draws_per_instance) as u64;
    while picked.len() < cfg.instances {
        if draws >= budget {
            return Err(Error::Numerical(format!(
                "only {} feasible instances in {draws} draws",
                picked.len()
            )));
        }
        let k = 1 + (draws as usize) % cfg.max_bns;
        let p_dbm = cfg.p_max_dbm[(draws as usize / cfg.max_bns) % cfg.p_max_dbm.len()];
        let params = SystemParams::reference(k).with_p_max(dbm_to_watts(p_dbm));
        let geo = default_geometry(k, crate::channel::DEFAULT_SOURCE_RECEIVER_DISTANCE);
        let seed = SeedSpec::new(cfg.master_seed, draws);
        draws += 1;
        let channels = sample_realization(&params, &geo, cfg.path_loss, seed)?;
        if dinkelbach_solve(&params, &channels, &cfg.solver)?.is_feasible() {
            picked.push((params, channels, seed.realization_index));
        }
    }

    let mut comparisons = Vec::with_capacity(picked.len());
    for (n, (params, channels, r)) in picked.iter().enumerate() {
        let (_, mut cmp) = compare_instance(params, channels, &grid, &coarse, &cfg.solver)?;
        cmp.instance = n;
        cmp.realization_index = *r;
        comparisons.push(cmp);
    }

    let total = comparisons.len() as f64;
    let within = comparisons.iter().filter(|c| c.within(cfg.tolerance)).count() as f64;
    let excess_violations = comparisons.iter().filter(|c| !c.excess_within_resolution()).count();
    let max_excess = comparisons
        .iter()
        .map(|c| c.solver_excess - c.resolution_bound)
        .fold(f64::NEG_INFINITY, f64::max);
    let gaps: Vec<f64> = comparisons.iter().map(|c| c.reduction_gap).collect();
    let fraction_within_tolerance = within / total;
    Ok(ValidationReport {
        draws,
        fraction_within_tolerance,
        max_solver_excess_over_resolution: max_excess,
        excess_violations,
        mean_reduction_gap: gaps.iter().sum::<f64>() / total,
        max_reduction_gap: gaps.iter().copied().fold(0.0, f64::max),
        passed: fraction_within_tolerance >= cfg.required_fraction && excess_violations == 0,
        comparisons,
    })
}

pub fn write_comparisons(path: &Path, comparisons: &[OracleComparison]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for c in comparisons {
        w.serialize(c).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
