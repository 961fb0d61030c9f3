use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use backscatter_ee::harness::{
    builtin_sweeps, config, run_sweep, write_sweep, OutputFormat, RunOptions, SweepSpec, FULL_REALIZATIONS,
};
use backscatter_ee::oracle::{validate_against_oracle, write_comparisons, ValidationConfig};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Energy-efficiency optimization for uplink NOMA backscatter networks.
#[derive(Parser, Debug)]
#[command(name = "backscatter-ee", version, about)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one channel realization and print the allocation.
    Solve {
        /// Instance config (flat `key = value` file). Defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed of the channel draw; overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Print machine-readable JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run a Monte Carlo sweep and write CSV plus a manifest.
    Sweep {
        /// A builtin sweep (see `list-sweeps`).
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        name: Option<String>,
        /// A sweep spec file.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, conflicts_with = "full_scale")]
        realizations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Use the full realization count instead of the desk-scale default.
        #[arg(long)]
        full_scale: bool,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Also write every per-realization outcome.
        #[arg(long)]
        dump_realizations: bool,
    },
    /// Compare the solver against the exhaustive grid oracle.
    Validate {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 3)]
        k_max: usize,
        /// Points per lattice axis.
        #[arg(long, default_value_t = 500)]
        grid: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// List the builtin sweeps.
    ListSweeps,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Jsonl => OutputFormat::JsonLines,
        }
    }
}

fn solve(path: Option<PathBuf>, seed: Option<u64>, as_json: bool) -> Result<()> {
    let mut cfg = match &path {
        Some(p) => config::load_instance(p)?,
        None => config::InstanceConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (params, channels) = cfg.build()?;
    let result = cfg.scheme.solve(&params, &channels, &cfg.solver)?;
    if as_json {
        let doc = json!({
            "scheme": cfg.scheme.as_str(),
            "num_bns": cfg.num_bns,
            "seed": cfg.seed,
            "realization": cfg.realization,
            "result": result,
            "channels": channels,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(());
    }
    println!("scheme       {}", cfg.scheme);
    println!("mode         {}", result.mode.as_str());
    println!("EE           {} bit/Hz/J", result.energy_efficiency);
    println!("iterations   {} (converged: {})", result.iterations, result.converged);
    if let (Some(a), Some(e)) = (&result.allocation, &result.evaluation) {
        println!("P_s          {} W", a.source_power);
        println!("tau_s        {}", a.sleep_fraction);
        println!("tau_a        {}", a.active_fraction);
        for (pos, (&bn, beta)) in channels.bn_index.iter().zip(&a.reflection).enumerate() {
            println!("beta[{bn}]      {beta}  (SIC position {pos}, rate {})", e.per_user_rate[pos]);
        }
        println!("sum rate     {} bit/Hz", e.sum_rate);
        println!("energy       {} J", e.total_energy);
    } else {
        println!("no feasible allocation for this draw");
    }
    Ok(())
}

fn sweep_spec(name: Option<String>, spec: Option<PathBuf>) -> Result<SweepSpec> {
    match (name, spec) {
        (Some(n), None) => match builtin_sweeps().remove(&n) {
            Some(s) => Ok(s),
            None => bail!("unknown builtin sweep `{n}`; run `list-sweeps`"),
        },
        (None, Some(p)) => Ok(config::load_sweep(&p)?),
        _ => bail!("give exactly one of --name or --spec"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if cli.threads == Some(0) {
        bail!("--threads must be >= 1");
    }
    match cli.command {
        Command::Solve { config, seed, json } => solve(config, seed, json)?,
        Command::Sweep {
            name,
            spec,
            realizations,
            seed,
            out,
            full_scale,
            format,
            dump_realizations,
        } => {
            let mut spec = sweep_spec(name, spec)?;
            if full_scale {
                spec.realizations = FULL_REALIZATIONS;
            }
            if let Some(n) = realizations {
                spec.realizations = n;
            }
            if let Some(s) = seed {
                spec.master_seed = s;
            }
            let options = RunOptions {
                threads: cli.threads,
                keep_realizations: dump_realizations,
            };
            let output = run_sweep(&spec, &options)?;
            let files = write_sweep(&spec, &output, &options, format.into(), &out)?;
            println!(
                "{}: {} records from {} realizations per point in {:.2} s",
                spec.name,
                output.records.len(),
                spec.realizations,
                output.wall_time_seconds
            );
            println!("wrote {}", files.records.display());
            println!("wrote {}", files.manifest.display());
            if let Some(p) = files.realizations {
                println!("wrote {}", p.display());
            }
        }
        Command::Validate {
            instances,
            k_max,
            grid,
            seed,
            out,
        } => {
            let mut cfg = ValidationConfig {
                instances,
                max_bns: k_max,
                grid_points: grid,
                ..ValidationConfig::default()
            };
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let report = match cli.threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .context("building the thread pool")?
                    .install(|| validate_against_oracle(&cfg))?,
                None => validate_against_oracle(&cfg)?,
            };
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("oracle_gaps.csv");
            write_comparisons(&path, &report.comparisons)?;
            println!(
                "{} instances ({} draws): {:.1}% within {}% of the grid oracle (need {:.0}%)",
                report.comparisons.len(),
                report.draws,
                100.0 * report.fraction_within_tolerance,
                100.0 * cfg.tolerance,
                100.0 * cfg.required_fraction
            );
            println!(
                "solver above the lattice by more than its resolution bound: {} instances",
                report.excess_violations
            );
            println!(
                "reduction gap: mean {:.3e}, max {:.3e}",
                report.mean_reduction_gap, report.max_reduction_gap
            );
            println!("wrote {}", path.display());
            if !report.passed {
                println!("validation FAILED");
                return Ok(ExitCode::from(2));
            }
            println!("validation passed");
        }
        Command::ListSweeps => {
            for (name, s) in builtin_sweeps() {
                let schemes: Vec<&str> = s.schemes.iter().map(|x| x.as_str()).collect();
                println!(
                    "{name:<24} {} over {:?}, K {:?}, schemes {}",
                    s.variable.as_str(),
                    s.values,
                    s.k_values,
                    schemes.join(",")
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
