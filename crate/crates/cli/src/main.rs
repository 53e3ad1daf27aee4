//! `vanet` — grid-city VANET connectivity experiments from the command line.
//!
//! Each scenario subcommand writes plot-ready CSV files plus a manifest into
//! the output directory; reruns with the same seed are byte-identical.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use vanet_core::model::{validate_config, RunConfig};
use vanet_core::percolation::{
    accumulate_sweeps, canonical_convolve, canonical_csv, exhaustive_microcanonical,
    microcanonical_csv, SweepOptions, EXHAUSTIVE_MAX_BONDS,
};
use vanet_core::scenario::{
    run_scenario_to_dir, street_probability_csv, ScenarioKind, ScenarioSpec,
};
use vanet_core::GridLattice;

#[derive(Parser)]
#[command(
    name = "vanet",
    about = "Two-dimensional connectivity analysis for grid-city vehicular networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML run configuration; omitted fields use the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV files and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Monte-Carlo iterations (overrides the config value).
    #[arg(long)]
    iterations: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Percolation curves as a function of edge probability, per lattice side.
    Scenario1 {
        #[command(flatten)]
        common: CommonArgs,
        /// Lattice sides, comma separated.
        #[arg(long, default_value = "4,7,16", value_delimiter = ',')]
        sides: Vec<usize>,
        /// Edge-probability grid as start:end:step.
        #[arg(long, default_value = "0:1:0.02")]
        grid: Grid,
    },
    /// Analytic connectivity curves versus vehicle entrance rate.
    Scenario2 {
        #[command(flatten)]
        common: CommonArgs,
        /// Entrance-rate grid as start:end:step (vehicles/second).
        #[arg(long, default_value = "0.01:0.1:0.01")]
        rates: Grid,
        /// Also run the microscopic simulator at every rate (slow).
        #[arg(long)]
        with_sim: bool,
    },
    /// Connectivity curves versus transmission range at fixed entrance rates.
    Scenario3 {
        #[command(flatten)]
        common: CommonArgs,
        /// Range grid in meters as start:end:step.
        #[arg(long, default_value = "10:200:10")]
        ranges: Grid,
        /// Entrance rates, comma separated.
        #[arg(long, default_value = "0.1,0.2,0.3", value_delimiter = ',')]
        rates: Vec<f64>,
    },
    /// Lower/upper bound curves plus the exact estimate for a city with
    /// random traffic weights in [1, 2).
    Scenario4 {
        #[command(flatten)]
        common: CommonArgs,
        /// Entrance-rate grid as start:end:step.
        #[arg(long, default_value = "0.01:0.1:0.01")]
        rates: Grid,
    },
    /// Dual-range street lower bounds, one curve per short-range probability.
    Scenario5 {
        #[command(flatten)]
        common: CommonArgs,
        /// Entrance-rate grid as start:end:step.
        #[arg(long, default_value = "0.01:0.1:0.01")]
        rates: Grid,
        /// Short-range probabilities, comma separated.
        #[arg(long = "p-list", default_value = "0,0.25,0.5,0.75,1", value_delimiter = ',')]
        p_list: Vec<f64>,
    },
    /// Check a configuration file and list every violated invariant.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Analytic per-street open probabilities at one entrance rate.
    StreetProb {
        #[command(flatten)]
        common: CommonArgs,
        /// Entrance rate (defaults to the config value).
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Raw percolation run: microcanonical record and canonical curves.
    Percolate {
        #[command(flatten)]
        common: CommonArgs,
        /// Lattice side.
        #[arg(long, default_value_t = 16)]
        side: usize,
        /// Edge-probability grid as start:end:step.
        #[arg(long, default_value = "0:1:0.02")]
        grid: Grid,
        /// Exact enumeration over all bond subsets instead of sampling
        /// (capped at 24 bonds, i.e. side 4).
        #[arg(long)]
        exhaustive: bool,
    },
}

/// Inclusive start:end:step grid argument.
#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err("expected start:end:step".into());
        }
        let parse = |p: &str| p.trim().parse::<f64>().map_err(|e| e.to_string());
        let (start, end, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if step <= 0.0 || end < start {
            return Err("need end >= start and step > 0".into());
        }
        let mut grid = Vec::new();
        let mut k = 0u32;
        loop {
            let value = start + step * k as f64;
            if value > end + step * 1e-9 {
                break;
            }
            grid.push(value.min(end));
            k += 1;
        }
        Ok(Grid(grid))
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_path(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let violations = validate_config(&config);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("config violation - {v}");
        }
        bail!("{} config violation(s)", violations.len());
    }
    Ok(config)
}

fn finish_scenario(spec: ScenarioSpec, common: &CommonArgs) -> Result<()> {
    let config = load_config(common)?;
    let mut spec = spec;
    spec.seed = common.seed.or(Some(config.seed));
    spec.iterations = common.iterations;
    let verb = spec.kind.verb();
    let written = run_scenario_to_dir(&spec, &config, &common.out)
        .with_context(|| format!("{verb} failed"))?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Scenario1 { common, sides, grid } => {
            let mut spec = ScenarioSpec::new(ScenarioKind::EdgeProbSweep, grid.0);
            spec.sides = sides;
            finish_scenario(spec, &common)
        }
        Command::Scenario2 { common, rates, with_sim } => {
            let mut spec = ScenarioSpec::new(ScenarioKind::EntranceRateSweep, rates.0);
            spec.with_sim = with_sim;
            finish_scenario(spec, &common)
        }
        Command::Scenario3 { common, ranges, rates } => {
            let mut spec = ScenarioSpec::new(ScenarioKind::RangeSweep, ranges.0);
            spec.rate_list = rates;
            finish_scenario(spec, &common)
        }
        Command::Scenario4 { common, rates } => {
            finish_scenario(ScenarioSpec::new(ScenarioKind::AsymmetricBounds, rates.0), &common)
        }
        Command::Scenario5 { common, rates, p_list } => {
            let mut spec = ScenarioSpec::new(ScenarioKind::DualRange, rates.0);
            spec.prob_short_list = p_list;
            finish_scenario(spec, &common)
        }
        Command::ValidateConfig { config } => {
            let config = RunConfig::from_path(&config)
                .with_context(|| format!("loading config {}", config.display()))?;
            let violations = validate_config(&config);
            if violations.is_empty() {
                println!("config ok");
                Ok(())
            } else {
                for v in &violations {
                    println!("violation - {v}");
                }
                bail!("{} violation(s)", violations.len());
            }
        }
        Command::StreetProb { common, rate } => {
            let config = load_config(&common)?;
            let rate = rate.unwrap_or(config.entrance_rate);
            let csv = street_probability_csv(&config, rate)?;
            std::fs::create_dir_all(&common.out)?;
            let path = common.out.join("street_probs.csv");
            std::fs::write(&path, csv)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Percolate { common, side, grid, exhaustive } => {
            let config = load_config(&common)?;
            let seed = common.seed.unwrap_or(config.seed);
            let iterations = common.iterations.unwrap_or(config.percolation_iterations);
            let record = if exhaustive {
                let bonds = GridLattice::new(side).num_bonds();
                if bonds > EXHAUSTIVE_MAX_BONDS {
                    bail!(
                        "exhaustive mode needs at most {EXHAUSTIVE_MAX_BONDS} bonds; side {side} has {bonds}"
                    );
                }
                exhaustive_microcanonical(side, SweepOptions::default())?
            } else {
                accumulate_sweeps(side, iterations, seed, SweepOptions::default())?
            };
            let curve = canonical_convolve(&record, &grid.0)?;
            std::fs::create_dir_all(&common.out)?;
            let micro = common.out.join("microcanonical.csv");
            std::fs::write(&micro, microcanonical_csv(&record))?;
            println!("wrote {}", micro.display());
            let canon = common.out.join("canonical.csv");
            std::fs::write(&canon, canonical_csv(&curve))?;
            println!("wrote {}", canon.display());
            Ok(())
        }
    }
}
