//! Command-line front end: `synth`, `simulate`, `allocate`, `report`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flm_sim::cli::{self, AllocSource, ExperimentConfig, GridSpec, ScenarioSource};
use flm_sim::engine::SharingMode;
use flm_sim::scenario::synth::SynthParams;

#[derive(Parser)]
#[command(
    name = "flm-sim",
    about = "Seeded simulator and fleet-allocation optimizer for first/last-mile feeder services",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario directory (stations.geojson, demand.csv, points.csv,
    /// params.txt, timetable.csv or headways.csv)
    #[arg(long, value_name = "DIR", conflicts_with = "synth")]
    scenario: Option<PathBuf>,
    /// Use the built-in synthetic reference scenario
    #[arg(long)]
    synth: bool,
    /// Seed for the synthetic scenario (with --synth)
    #[arg(long, value_name = "N", default_value_t = 1)]
    synth_seed: u64,
}

impl ScenarioArgs {
    fn source(&self) -> ScenarioSource {
        match &self.scenario {
            Some(dir) => ScenarioSource::Dir(dir.clone()),
            None => ScenarioSource::Synth { seed: self.synth_seed },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario file set
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_name = "N", default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        lines: u32,
        #[arg(long, default_value_t = 20)]
        stations_per_line: u32,
        #[arg(long, default_value_t = 8)]
        points_per_station: u32,
        #[arg(long, default_value_t = 1.0)]
        demand_scale: f64,
    },
    /// Run seeded replications and write all exports and reports
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Sharing strategy: none|lm|fm|joint
        #[arg(long, default_value = "none")]
        mode: SharingMode,
        /// Allocation source: file:PATH | equal | proportional | optimize
        #[arg(long, default_value = "equal")]
        alloc: AllocSource,
        #[arg(long, value_name = "N", default_value_t = 1)]
        seed: u64,
        #[arg(long, value_name = "N", default_value_t = 1)]
        reps: u32,
        /// Supply grid LO:HI:STEP (with --alloc optimize); defaults to
        /// perStationMin:perStationMax:5
        #[arg(long)]
        grid: Option<GridSpec>,
        /// Adaptive break-point refinement (with --alloc optimize)
        #[arg(long)]
        adaptive: bool,
        /// Worker threads for curve estimation; 0 = all cores
        #[arg(long, value_name = "N", default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Estimate lost-demand curves and compute an allocation
    Allocate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = "none")]
        mode: SharingMode,
        /// equal | proportional | optimize
        #[arg(long, default_value = "optimize")]
        alloc: AllocSource,
        #[arg(long, value_name = "N", default_value_t = 1)]
        seed: u64,
        /// Replications per curve point
        #[arg(long, value_name = "N", default_value_t = 5)]
        reps: u32,
        /// Supply grid LO:HI:STEP; defaults to perStationMin:perStationMax:5
        #[arg(long)]
        grid: Option<GridSpec>,
        #[arg(long)]
        adaptive: bool,
        #[arg(long, value_name = "N", default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Rebuild report.json and plot CSVs from a simulate output directory
    Report {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { out, seed, lines, stations_per_line, points_per_station, demand_scale } => {
            let params = SynthParams {
                n_lines: lines,
                stations_per_line,
                points_per_station,
                demand_scale,
                ..SynthParams::default()
            };
            cli::cmd_synth(&params, seed, &out)
        }
        Command::Simulate { scenario, mode, alloc, seed, reps, grid, adaptive, jobs, out } => {
            let cfg = ExperimentConfig {
                scenario: scenario.source(),
                mode,
                alloc,
                seed,
                reps,
                grid,
                adaptive,
                jobs,
                out,
            };
            cli::cmd_simulate(&cfg).map(|_| ())
        }
        Command::Allocate { scenario, mode, alloc, seed, reps, grid, adaptive, jobs, out } => {
            let cfg = ExperimentConfig {
                scenario: scenario.source(),
                mode,
                alloc,
                seed,
                reps,
                grid,
                adaptive,
                jobs,
                out,
            };
            cli::cmd_allocate(&cfg).map(|_| ())
        }
        Command::Report { out } => cli::cmd_report(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
