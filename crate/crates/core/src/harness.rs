//! Monte Carlo sweeps: spec parsing, parallel evaluation with a fixed
//! reduction order, and CSV / JSON-lines / manifest output.
//!
//! Every sweep point reuses the same realization indices (common random
//! numbers), so curves are smooth in the swept variable even at small `N`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{solve_baseline, BaselineKind};
use crate::channel::{default_geometry, sample_realization, Geometry, PathLoss, SeedSpec, DEFAULT_SOURCE_RECEIVER_DISTANCE};
use crate::model::{dbm_to_watts, ChannelRealization, SystemParams};
use crate::optimizer::{dinkelbach_solve, Mode, SolveResult, SolverConfig};
use crate::{Error, Result};

pub const DESK_REALIZATIONS: u64 = 1_000;
pub const FULL_REALIZATIONS: u64 = 100_000;
pub const DEFAULT_MASTER_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    FixedPower,
    NoSleep,
    Oma,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::FixedPower, Scheme::NoSleep, Scheme::Oma];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::FixedPower => "fixed_power",
            Scheme::NoSleep => "no_sleep",
            Scheme::Oma => "oma",
        }
    }

    pub fn solve(self, params: &SystemParams, channels: &ChannelRealization, config: &SolverConfig) -> Result<SolveResult> {
        match self {
            Scheme::Proposed => dinkelbach_solve(params, channels, config),
            Scheme::FixedPower => solve_baseline(BaselineKind::FixedPower, params, channels, config),
            Scheme::NoSleep => solve_baseline(BaselineKind::NoSleep, params, channels, config),
            Scheme::Oma => solve_baseline(BaselineKind::OmaTdma, params, channels, config),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::invalid("schemes", format!("unknown scheme `{s}` (expected proposed, fixed_power, no_sleep or oma)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PMaxDbm,
    BnCircuitPowerDbm,
    PathlossExponent,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::PMaxDbm => "p_max_dbm",
            SweepVariable::BnCircuitPowerDbm => "bn_circuit_power_dbm",
            SweepVariable::PathlossExponent => "pathloss_exponent",
        }
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepVariable::PMaxDbm,
            SweepVariable::BnCircuitPowerDbm,
            SweepVariable::PathlossExponent,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| {
            Error::invalid(
                "variable",
                format!("unknown sweep variable `{s}` (expected p_max_dbm, bn_circuit_power_dbm or pathloss_exponent)"),
            )
        })
    }
}

/// Scenario parameters in interface units (dBm, meters). Per-BN lists of
/// length one are broadcast to every BN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub p_max_dbm: f64,
    pub noise_dbm: f64,
    pub pa_efficiency: f64,
    pub source_circuit_power_dbm: f64,
    pub receiver_circuit_power_dbm: f64,
    pub bn_circuit_power_dbm: Vec<f64>,
    pub harvest_efficiency: Vec<f64>,
    pub pathloss_exponent: f64,
    pub path_loss: PathLoss,
    pub source_receiver_distance: f64,
    pub source_bn_distances: Option<Vec<f64>>,
    pub bn_receiver_distances: Option<Vec<f64>>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            p_max_dbm: SystemParams::DEFAULT_P_MAX_DBM,
            noise_dbm: SystemParams::DEFAULT_NOISE_DBM,
            pa_efficiency: SystemParams::DEFAULT_PA_EFFICIENCY,
            source_circuit_power_dbm: SystemParams::DEFAULT_SOURCE_CIRCUIT_DBM,
            receiver_circuit_power_dbm: SystemParams::DEFAULT_RECEIVER_CIRCUIT_DBM,
            bn_circuit_power_dbm: vec![SystemParams::DEFAULT_BN_CIRCUIT_DBM],
            harvest_efficiency: vec![SystemParams::DEFAULT_HARVEST_EFFICIENCY],
            pathloss_exponent: SystemParams::DEFAULT_PATHLOSS_EXPONENT,
            path_loss: PathLoss::default(),
            source_receiver_distance: DEFAULT_SOURCE_RECEIVER_DISTANCE,
            source_bn_distances: None,
            bn_receiver_distances: None,
        }
    }
}

fn per_bn(field: &str, values: &[f64], k: usize) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; k]),
        n if n == k => Ok(values.to_vec()),
        n => Err(Error::invalid(field, format!("expected 1 or {k} entries, got {n}"))),
    }
}

impl Scenario {
    pub fn params(&self, num_bns: usize) -> Result<SystemParams> {
        let params = SystemParams {
            num_bns,
            p_max: dbm_to_watts(self.p_max_dbm),
            noise_power: dbm_to_watts(self.noise_dbm),
            pa_efficiency: self.pa_efficiency,
            source_circuit_power: dbm_to_watts(self.source_circuit_power_dbm),
            receiver_circuit_power: dbm_to_watts(self.receiver_circuit_power_dbm),
            bn_circuit_power: per_bn("bn_circuit_power_dbm", &self.bn_circuit_power_dbm, num_bns)?
                .into_iter()
                .map(dbm_to_watts)
                .collect(),
            harvest_efficiency: per_bn("harvest_efficiency", &self.harvest_efficiency, num_bns)?,
            pathloss_exponent: self.pathloss_exponent,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn geometry(&self, num_bns: usize) -> Result<Geometry> {
        let mut geo = default_geometry(num_bns, self.source_receiver_distance);
        if let Some(d) = &self.source_bn_distances {
            geo.source_bn_distance = per_bn("source_bn_distances", d, num_bns)?;
        }
        if let Some(d) = &self.bn_receiver_distances {
            geo.bn_receiver_distance = per_bn("bn_receiver_distances", d, num_bns)?;
        }
        geo.validate(num_bns)?;
        Ok(geo)
    }

    fn with_value(&self, variable: SweepVariable, value: f64) -> Scenario {
        let mut s = self.clone();
        match variable {
            SweepVariable::PMaxDbm => s.p_max_dbm = value,
            SweepVariable::BnCircuitPowerDbm => s.bn_circuit_power_dbm = vec![value],
            SweepVariable::PathlossExponent => s.pathloss_exponent = value,
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub name: String,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub k_values: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub realizations: u64,
    pub master_seed: u64,
    /// Everything not swept.
    pub scenario: Scenario,
    pub solver: SolverConfig,
}

impl SweepSpec {
    fn builtin(name: &str, variable: SweepVariable, values: Vec<f64>, schemes: &[Scheme]) -> Self {
        SweepSpec {
            name: name.to_string(),
            variable,
            values,
            k_values: vec![2, 3, 4],
            schemes: schemes.to_vec(),
            realizations: DESK_REALIZATIONS,
            master_seed: DEFAULT_MASTER_SEED,
            scenario: Scenario::default(),
            solver: SolverConfig::default(),
        }
    }

    pub fn params_at(&self, value: f64, num_bns: usize) -> Result<SystemParams> {
        self.scenario.with_value(self.variable, value).params(num_bns)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::invalid(
                "name",
                format!("`{}` must be non-empty and use only letters, digits, `_` or `-`", self.name),
            ));
        }
        if self.values.is_empty() {
            return Err(Error::invalid("values", "need at least one sweep value"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "all values must be finite"));
        }
        let up = self.values.windows(2).all(|w| w[1] > w[0]);
        let down = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::invalid("values", "must be strictly monotone"));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::invalid("k_values", "need at least one BN count, each >= 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "need at least one scheme"));
        }
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be >= 1"));
        }
        self.solver.validate()?;
        for &v in &self.values {
            for &k in &self.k_values {
                self.params_at(v, k)?;
                self.scenario.geometry(k)?;
            }
        }
        Ok(())
    }
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

/// The reference figure sweeps, keyed by name.
pub fn builtin_sweeps() -> BTreeMap<String, SweepSpec> {
    use Scheme::*;
    use SweepVariable::*;
    let power = range(0.0, 50.0, 5.0);
    let circuit = range(-10.0, 15.0, 2.5);
    let mut fig3a = SweepSpec::builtin("fig3a_ee_vs_ptc", BnCircuitPowerDbm, circuit.clone(), &[Proposed]);
    let mut fig3b = SweepSpec::builtin("fig3b_time_vs_ptc", BnCircuitPowerDbm, circuit, &[Proposed]);
    fig3a.scenario.p_max_dbm = 30.0;
    fig3b.scenario.p_max_dbm = 30.0;
    [
        SweepSpec::builtin("fig2a_ee_vs_pmax", PMaxDbm, power.clone(), &[Proposed]),
        SweepSpec::builtin("fig2b_time_vs_pmax", PMaxDbm, power.clone(), &[Proposed]),
        SweepSpec::builtin("fig2c_time_vs_pathloss", PathlossExponent, range(2.0, 4.0, 0.25), &[Proposed]),
        SweepSpec::builtin("fig2d_noma_vs_oma", PMaxDbm, power.clone(), &[Proposed, Oma]),
        fig3a,
        fig3b,
        SweepSpec::builtin("fig3c_baselines", PMaxDbm, power, &[Proposed, FixedPower, NoSleep]),
    ]
    .into_iter()
    .map(|s| (s.name.clone(), s))
    .collect()
}

/// Per-realization outcome. Infeasible draws count as a network that never
/// wakes up: `tau_s = 1`, `tau_a = 0`, `P_s = 0`, zero EE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub energy_efficiency: f64,
    pub sleep_fraction: f64,
    pub active_fraction: f64,
    pub source_power: f64,
    pub mode: Mode,
    pub iterations: usize,
    pub converged: bool,
}

impl Outcome {
    pub fn from_result(r: &SolveResult) -> Self {
        match &r.allocation {
            Some(a) => Outcome {
                energy_efficiency: r.energy_efficiency,
                sleep_fraction: a.sleep_fraction,
                active_fraction: a.active_fraction,
                source_power: a.source_power,
                mode: r.mode,
                iterations: r.iterations,
                converged: r.converged,
            },
            None => Outcome {
                energy_efficiency: 0.0,
                sleep_fraction: 1.0,
                active_fraction: 0.0,
                source_power: 0.0,
                mode: Mode::Infeasible,
                iterations: r.iterations,
                converged: r.converged,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub value: f64,
    pub num_bns: usize,
    pub scheme: Scheme,
    pub mean_ee: f64,
    pub mean_sleep_fraction: f64,
    pub mean_active_fraction: f64,
    pub mean_source_power: f64,
    pub hot_fraction: f64,
    pub htt_fraction: f64,
    pub infeasible_fraction: f64,
    pub mean_iterations: f64,
    pub realizations: u64,
}

pub const RECORD_COLUMNS: [&str; 12] = [
    "value",
    "num_bns",
    "scheme",
    "mean_ee",
    "mean_sleep_fraction",
    "mean_active_fraction",
    "mean_source_power",
    "hot_fraction",
    "htt_fraction",
    "infeasible_fraction",
    "mean_iterations",
    "realizations",
];

impl SweepRecord {
    /// Aggregates in slice order, so the result only depends on the order of
    /// `outcomes`, never on how they were computed.
    pub fn aggregate(value: f64, num_bns: usize, scheme: Scheme, outcomes: &[Outcome]) -> Self {
        let n = outcomes.len() as f64;
        let mean = |f: fn(&Outcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
        let count = |m: Mode| outcomes.iter().filter(|o| o.mode == m).count();
        let (hot, htt) = (count(Mode::HarvestOnTransmit), count(Mode::HarvestThenTransmit));
        let infeasible = outcomes.len() - hot - htt;
        SweepRecord {
            value,
            num_bns,
            scheme,
            mean_ee: mean(|o| o.energy_efficiency),
            mean_sleep_fraction: mean(|o| o.sleep_fraction),
            mean_active_fraction: mean(|o| o.active_fraction),
            mean_source_power: mean(|o| o.source_power),
            hot_fraction: hot as f64 / n,
            htt_fraction: htt as f64 / n,
            infeasible_fraction: infeasible as f64 / n,
            mean_iterations: mean(|o| o.iterations as f64),
            realizations: outcomes.len() as u64,
        }
    }

    fn csv_row(&self) -> [String; 12] {
        [
            self.value.to_string(),
            self.num_bns.to_string(),
            self.scheme.to_string(),
            self.mean_ee.to_string(),
            self.mean_sleep_fraction.to_string(),
            self.mean_active_fraction.to_string(),
            self.mean_source_power.to_string(),
            self.hot_fraction.to_string(),
            self.htt_fraction.to_string(),
            self.infeasible_fraction.to_string(),
            self.mean_iterations.to_string(),
            self.realizations.to_string(),
        ]
    }
}

/// One solved draw, kept only when a debug dump is requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRow {
    pub value: f64,
    pub num_bns: usize,
    pub scheme: Scheme,
    pub realization: u64,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub keep_realizations: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub realizations: Option<Vec<RealizationRow>>,
    pub wall_time_seconds: f64,
}

fn solve_cell(spec: &SweepSpec, value: f64, k: usize) -> Result<Vec<Vec<Outcome>>> {
    let params = spec.params_at(value, k)?;
    let geometry = spec.scenario.geometry(k)?;
    let path_loss = spec.scenario.path_loss;
    // One row per realization, one column per scheme.
    let rows: Vec<Vec<Outcome>> = (0..spec.realizations)
        .into_par_iter()
        .map(|r| {
            let ch = sample_realization(&params, &geometry, path_loss, SeedSpec::new(spec.master_seed, r))?;
            spec.schemes
                .iter()
                .map(|s| s.solve(&params, &ch, &spec.solver).map(|res| Outcome::from_result(&res)))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows)
}

fn run_sweep_inner(spec: &SweepSpec, keep: bool) -> Result<(Vec<SweepRecord>, Option<Vec<RealizationRow>>)> {
    let mut records = Vec::new();
    let mut dump = keep.then(Vec::new);
    for &value in &spec.values {
        for &k in &spec.k_values {
            let rows = solve_cell(spec, value, k)?;
            for (s, &scheme) in spec.schemes.iter().enumerate() {
                let column: Vec<Outcome> = rows.iter().map(|r| r[s]).collect();
                records.push(SweepRecord::aggregate(value, k, scheme, &column));
                if let Some(d) = dump.as_mut() {
                    d.extend(column.into_iter().enumerate().map(|(i, outcome)| RealizationRow {
                        value,
                        num_bns: k,
                        scheme,
                        realization: i as u64,
                        outcome,
                    }));
                }
            }
        }
    }
    Ok((records, dump))
}

pub fn run_sweep(spec: &SweepSpec, options: &RunOptions) -> Result<SweepOutput> {
    spec.validate()?;
    let start = Instant::now();
    let (records, realizations) = match options.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid("threads", e.to_string()))?;
            pool.install(|| run_sweep_inner(spec, options.keep_realizations))?
        }
        None => run_sweep_inner(spec, options.keep_realizations)?,
    };
    Ok(SweepOutput {
        records,
        realizations,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

fn csv_error(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the records. Floats use Rust's shortest round-trip formatting, so
/// re-parsing recovers every value bit for bit.
pub fn emit(records: &[SweepRecord], format: OutputFormat, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("records", "nothing to write"));
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
            w.write_record(RECORD_COLUMNS).map_err(csv_error(path))?;
            for r in records {
                w.write_record(r.csv_row()).map_err(csv_error(path))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        OutputFormat::JsonLines => {
            let mut out = String::new();
            for r in records {
                out.push_str(&serde_json::to_string(r)?);
                out.push('\n');
            }
            fs::write(path, out).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn read_records_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_error(path))?;
    rdr.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_error(path))
}

pub fn write_realizations(rows: &[RealizationRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    w.write_record([
        "value",
        "num_bns",
        "scheme",
        "realization",
        "energy_efficiency",
        "sleep_fraction",
        "active_fraction",
        "source_power",
        "mode",
        "iterations",
        "converged",
    ])
    .map_err(csv_error(path))?;
    for r in rows {
        let o = &r.outcome;
        w.write_record([
            r.value.to_string(),
            r.num_bns.to_string(),
            r.scheme.to_string(),
            r.realization.to_string(),
            o.energy_efficiency.to_string(),
            o.sleep_fraction.to_string(),
            o.active_fraction.to_string(),
            o.source_power.to_string(),
            o.mode.as_str().to_string(),
            o.iterations.to_string(),
            o.converged.to_string(),
        ])
        .map_err(csv_error(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub sweep: String,
    pub spec: SweepSpec,
    pub master_seed: u64,
    pub realizations: u64,
    pub library_version: String,
    pub wall_time_seconds: f64,
    pub threads: Option<usize>,
    pub records: usize,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(spec: &SweepSpec, output: &SweepOutput, options: &RunOptions, outputs: Vec<String>) -> Self {
        Manifest {
            sweep: spec.name.clone(),
            spec: spec.clone(),
            master_seed: spec.master_seed,
            realizations: spec.realizations,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: output.wall_time_seconds,
            threads: options.threads,
            records: output.records.len(),
            outputs,
        }
    }
}

/// Paths written by [`write_sweep`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepFiles {
    pub records: PathBuf,
    pub manifest: PathBuf,
    pub realizations: Option<PathBuf>,
}

/// Writes `<name>.csv` (or `.jsonl`), `<name>.manifest.json` and, when the
/// output kept them, `<name>.realizations.csv` into `dir`.
pub fn write_sweep(
    spec: &SweepSpec,
    output: &SweepOutput,
    options: &RunOptions,
    format: OutputFormat,
    dir: &Path,
) -> Result<SweepFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ext = match format {
        OutputFormat::Csv => "csv",
        OutputFormat::JsonLines => "jsonl",
    };
    let records = dir.join(format!("{}.{ext}", spec.name));
    emit(&output.records, format, &records)?;
    let realizations = match &output.realizations {
        Some(rows) => {
            let p = dir.join(format!("{}.realizations.csv", spec.name));
            write_realizations(rows, &p)?;
            Some(p)
        }
        None => None,
    };
    let mut outputs = vec![file_name(&records)];
    outputs.extend(realizations.as_deref().map(file_name));
    let manifest_path = dir.join(format!("{}.manifest.json", spec.name));
    let manifest = Manifest::new(spec, output, options, outputs);
    let mut f = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(SweepFiles {
        records,
        manifest: manifest_path,
        realizations,
    })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Flat key-value config files (TOML syntax, no tables). Lists may be TOML
/// arrays or comma-separated strings.
pub mod config {
    use super::*;
    use toml::Value;

    const SCENARIO_KEYS: [&str; 12] = [
        "p_max_dbm",
        "noise_dbm",
        "pa_efficiency",
        "source_circuit_power_dbm",
        "receiver_circuit_power_dbm",
        "bn_circuit_power_dbm",
        "harvest_efficiency",
        "pathloss_exponent",
        "path_loss",
        "source_receiver_distance",
        "source_bn_distances",
        "bn_receiver_distances",
    ];
    const SOLVER_KEYS: [&str; 2] = ["epsilon", "max_iterations"];
    const INSTANCE_KEYS: [&str; 4] = ["num_bns", "seed", "realization", "scheme"];
    const SWEEP_KEYS: [&str; 7] = ["name", "variable", "values", "k_values", "schemes", "realizations", "master_seed"];

    /// A single problem instance for the `solve` command.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct InstanceConfig {
        pub num_bns: usize,
        pub scenario: Scenario,
        pub solver: SolverConfig,
        pub scheme: Scheme,
        pub seed: u64,
        pub realization: u64,
    }

    impl Default for InstanceConfig {
        fn default() -> Self {
            InstanceConfig {
                num_bns: 2,
                scenario: Scenario::default(),
                solver: SolverConfig::default(),
                scheme: Scheme::Proposed,
                seed: DEFAULT_MASTER_SEED,
                realization: 0,
            }
        }
    }

    impl InstanceConfig {
        pub fn build(&self) -> Result<(SystemParams, ChannelRealization)> {
            let params = self.scenario.params(self.num_bns)?;
            let geometry = self.scenario.geometry(self.num_bns)?;
            let ch = sample_realization(
                &params,
                &geometry,
                self.scenario.path_loss,
                SeedSpec::new(self.seed, self.realization),
            )?;
            Ok((params, ch))
        }
    }

    fn parse_table(text: &str) -> Result<toml::Table> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Config(format!("`{k}`: nested tables are not supported, use flat keys")));
        }
        Ok(table)
    }

    fn check_keys(table: &toml::Table, allowed: &[&[&str]]) -> Result<()> {
        for key in table.keys() {
            if !allowed.iter().any(|set| set.contains(&key.as_str())) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }

    fn number(key: &str, v: &Value) -> Result<f64> {
        match v {
            Value::Float(x) => Ok(*x),
            Value::Integer(i) => Ok(*i as f64),
            Value::String(s) => s
                .trim()
                .parse()
                .map_err(|_| Error::invalid(key, format!("`{s}` is not a number"))),
            _ => Err(Error::invalid(key, "expected a number")),
        }
    }

    fn integer(key: &str, v: &Value) -> Result<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            Value::String(s) => s
                .trim()
                .parse()
                .map_err(|_| Error::invalid(key, format!("`{s}` is not a non-negative integer"))),
            _ => Err(Error::invalid(key, "expected a non-negative integer")),
        }
    }

    fn string<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
        v.as_str().ok_or_else(|| Error::invalid(key, "expected a string"))
    }

    fn items(key: &str, v: &Value) -> Result<Vec<Value>> {
        match v {
            Value::Array(a) => Ok(a.clone()),
            Value::String(s) => Ok(s
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| Value::String(t.to_string()))
                .collect()),
            Value::Integer(_) | Value::Float(_) => Ok(vec![v.clone()]),
            _ => Err(Error::invalid(key, "expected a list")),
        }
    }

    fn numbers(key: &str, v: &Value) -> Result<Vec<f64>> {
        let xs = items(key, v)?.iter().map(|x| number(key, x)).collect::<Result<Vec<_>>>()?;
        if xs.is_empty() {
            return Err(Error::invalid(key, "list is empty"));
        }
        Ok(xs)
    }

    fn apply_scenario(table: &toml::Table, s: &mut Scenario) -> Result<()> {
        for (key, v) in table {
            let k = key.as_str();
            match k {
                "p_max_dbm" => s.p_max_dbm = number(k, v)?,
                "noise_dbm" => s.noise_dbm = number(k, v)?,
                "pa_efficiency" => s.pa_efficiency = number(k, v)?,
                "source_circuit_power_dbm" => s.source_circuit_power_dbm = number(k, v)?,
                "receiver_circuit_power_dbm" => s.receiver_circuit_power_dbm = number(k, v)?,
                "bn_circuit_power_dbm" => s.bn_circuit_power_dbm = numbers(k, v)?,
                "harvest_efficiency" => s.harvest_efficiency = numbers(k, v)?,
                "pathloss_exponent" => s.pathloss_exponent = number(k, v)?,
                "source_receiver_distance" => s.source_receiver_distance = number(k, v)?,
                "source_bn_distances" => s.source_bn_distances = Some(numbers(k, v)?),
                "bn_receiver_distances" => s.bn_receiver_distances = Some(numbers(k, v)?),
                "path_loss" => {
                    s.path_loss = match string(k, v)? {
                        "power" => PathLoss::Power,
                        "amplitude" => PathLoss::Amplitude,
                        other => {
                            return Err(Error::invalid(k, format!("`{other}` (expected power or amplitude)")));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn apply_solver(table: &toml::Table, c: &mut SolverConfig) -> Result<()> {
        if let Some(v) = table.get("epsilon") {
            c.epsilon = number("epsilon", v)?;
        }
        if let Some(v) = table.get("max_iterations") {
            c.max_iterations = integer("max_iterations", v)? as usize;
        }
        c.validate()
    }

    pub fn parse_instance(text: &str) -> Result<InstanceConfig> {
        let table = parse_table(text)?;
        check_keys(&table, &[&SCENARIO_KEYS, &SOLVER_KEYS, &INSTANCE_KEYS])?;
        let mut cfg = InstanceConfig::default();
        apply_scenario(&table, &mut cfg.scenario)?;
        apply_solver(&table, &mut cfg.solver)?;
        if let Some(v) = table.get("num_bns") {
            cfg.num_bns = integer("num_bns", v)? as usize;
        }
        if let Some(v) = table.get("seed") {
            cfg.seed = integer("seed", v)?;
        }
        if let Some(v) = table.get("realization") {
            cfg.realization = integer("realization", v)?;
        }
        if let Some(v) = table.get("scheme") {
            cfg.scheme = string("scheme", v)?.parse()?;
        }
        cfg.scenario.params(cfg.num_bns)?;
        cfg.scenario.geometry(cfg.num_bns)?;
        Ok(cfg)
    }

    /// Parses a sweep spec. `name`, `variable` and `values` are required;
    /// the rest defaults to the desk-scale builtin settings.
    pub fn parse_sweep(text: &str) -> Result<SweepSpec> {
        let table = parse_table(text)?;
        check_keys(&table, &[&SCENARIO_KEYS, &SOLVER_KEYS, &SWEEP_KEYS])?;
        let required = |k: &str| table.get(k).ok_or_else(|| Error::Config(format!("missing required key `{k}`")));
        let variable: SweepVariable = string("variable", required("variable")?)?.parse()?;
        let mut spec = SweepSpec::builtin(
            string("name", required("name")?)?,
            variable,
            numbers("values", required("values")?)?,
            &[Scheme::Proposed],
        );
        if table.contains_key(variable.as_str()) {
            return Err(Error::Config(format!(
                "`{}` is the swept variable and cannot also be fixed",
                variable.as_str()
            )));
        }
        apply_scenario(&table, &mut spec.scenario)?;
        apply_solver(&table, &mut spec.solver)?;
        if let Some(v) = table.get("k_values") {
            spec.k_values = items("k_values", v)?
                .iter()
                .map(|x| integer("k_values", x).map(|k| k as usize))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = table.get("schemes") {
            spec.schemes = items("schemes", v)?
                .iter()
                .map(|x| string("schemes", x)?.trim().parse())
                .collect::<Result<_>>()?;
        }
        if let Some(v) = table.get("realizations") {
            spec.realizations = integer("realizations", v)?;
        }
        if let Some(v) = table.get("master_seed") {
            spec.master_seed = integer("master_seed", v)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load_sweep(path: &Path) -> Result<SweepSpec> {
        parse_sweep(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn load_instance(path: &Path) -> Result<InstanceConfig> {
        parse_instance(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(name: &str) -> SweepSpec {
        let mut s = builtin_sweeps()[name].clone();
        s.values.truncate(3);
        s.k_values = vec![2];
        s.realizations = 20;
        s
    }

    #[test]
    fn builtins_validate() {
        let all = builtin_sweeps();
        assert_eq!(all.len(), 7);
        for (name, spec) in &all {
            assert_eq!(name, &spec.name);
            spec.validate().unwrap();
        }
    }

    #[test]
    fn fig3_sweeps_fix_power_budget() {
        let all = builtin_sweeps();
        for name in ["fig3a_ee_vs_ptc", "fig3b_time_vs_ptc"] {
            let s = &all[name];
            assert_eq!(s.variable, SweepVariable::BnCircuitPowerDbm);
            assert_eq!(s.scenario.p_max_dbm, 30.0);
            assert_eq!(s.values.first(), Some(&-10.0));
            assert_eq!(s.values.last(), Some(&15.0));
        }
    }

    #[test]
    fn fig2c_sweeps_pathloss_only() {
        let s = &builtin_sweeps()["fig2c_time_vs_pathloss"];
        assert_eq!(s.variable, SweepVariable::PathlossExponent);
        assert_eq!(s.values, vec![2.0, 2.25, 2.5, 2.75, 3.0, 3.25, 3.5, 3.75, 4.0]);
        assert_eq!(s.scenario, Scenario::default());
    }

    #[test]
    fn single_realization_equals_direct_solve() {
        let mut spec = tiny("fig2a_ee_vs_pmax");
        spec.realizations = 1;
        spec.values = vec![35.0];
        let out = run_sweep(&spec, &RunOptions::default()).unwrap();
        let params = spec.params_at(35.0, 2).unwrap();
        let ch = sample_realization(&params, &spec.scenario.geometry(2).unwrap(), PathLoss::Power, SeedSpec::new(spec.master_seed, 0)).unwrap();
        let direct = dinkelbach_solve(&params, &ch, &spec.solver).unwrap();
        let rec = &out.records[0];
        assert_eq!(rec.mean_ee, direct.energy_efficiency);
        assert_eq!(rec.realizations, 1);
    }

    #[test]
    fn mode_fractions_sum_to_one() {
        let out = run_sweep(&tiny("fig3c_baselines"), &RunOptions::default()).unwrap();
        for r in &out.records {
            assert!((r.hot_fraction + r.htt_fraction + r.infeasible_fraction - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let mut s = tiny("fig2a_ee_vs_pmax");
        s.values = vec![1.0, 1.0];
        assert!(s.validate().unwrap_err().to_string().contains("values"));
        s = tiny("fig2a_ee_vs_pmax");
        s.realizations = 0;
        assert!(s.validate().unwrap_err().to_string().contains("realizations"));
        s = tiny("fig2a_ee_vs_pmax");
        s.name = "bad name".into();
        assert!(s.validate().unwrap_err().to_string().contains("name"));
    }

    #[test]
    fn descending_values_are_monotone_too() {
        let mut s = tiny("fig2a_ee_vs_pmax");
        s.values = vec![30.0, 20.0, 10.0];
        s.validate().unwrap();
    }

    #[test]
    fn parse_sweep_with_lists_and_overrides() {
        let spec = config::parse_sweep(
            r#"
            name = "custom"
            variable = "bn_circuit_power_dbm"
            values = "-10, 0, 10"
            k_values = [2, 3]
            schemes = "proposed, oma"
            realizations = 50
            master_seed = 7
            p_max_dbm = 35
            epsilon = 1e-9
            "#,
        )
        .unwrap();
        assert_eq!(spec.values, vec![-10.0, 0.0, 10.0]);
        assert_eq!(spec.k_values, vec![2, 3]);
        assert_eq!(spec.schemes, vec![Scheme::Proposed, Scheme::Oma]);
        assert_eq!(spec.scenario.p_max_dbm, 35.0);
        assert_eq!(spec.solver.epsilon, 1e-9);
        assert_eq!(spec.master_seed, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = config::parse_sweep("name = \"x\"\nvariable = \"p_max_dbm\"\nvalues = [1]\nbogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = config::parse_instance("num_bns = 2\nmaster_seed = 1\n").unwrap_err();
        assert!(err.to_string().contains("master_seed"), "{err}");
    }

    #[test]
    fn swept_variable_cannot_be_fixed() {
        let err = config::parse_sweep("name = \"x\"\nvariable = \"p_max_dbm\"\nvalues = [1, 2]\np_max_dbm = 3\n").unwrap_err();
        assert!(err.to_string().contains("p_max_dbm"));
    }

    #[test]
    fn parse_instance_per_bn_lists() {
        let cfg = config::parse_instance(
            "num_bns = 3\nbn_circuit_power_dbm = \"0, -3, 3\"\nsource_bn_distances = [5, 10, 15]\nbn_receiver_distances = \"35,30,25\"\nscheme = \"no_sleep\"\n",
        )
        .unwrap();
        let (params, ch) = cfg.build().unwrap();
        assert_eq!(params.bn_circuit_power.len(), 3);
        assert!((params.bn_circuit_power[1] - dbm_to_watts(-3.0)).abs() < 1e-18);
        assert_eq!(ch.num_bns(), 3);
        assert_eq!(cfg.scheme, Scheme::NoSleep);
        let err = config::parse_instance("num_bns = 3\nsource_bn_distances = [5, 10]\n").unwrap_err();
        assert!(err.to_string().contains("source_bn_distances"));
    }
}
