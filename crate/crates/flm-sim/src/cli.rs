//! Experiment wiring: reproducible scenario/simulate/allocate/report runs
//! over directories of files.
//!
//! All randomness flows from one master seed; replication `r` of any command
//! uses [`crate::rng::replication_seed`], so a 5-replication simulation sees
//! exactly the demand realisations the allocator averaged over. Every command
//! echoes its configuration into the output directory as `config.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::allocator::{self, Allocation, SimCurveSource};
use crate::analytics;
use crate::engine::{self, SharingMode, SimOutput};
use crate::error::{Error, Result};
use crate::rng::replication_seed;
use crate::scenario::files::{load_scenario, write_scenario};
use crate::scenario::synth::{synthesize_scenario, SynthParams};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ScenarioSource {
    /// Load the file set from a directory.
    Dir(PathBuf),
    /// Synthesize the reference network with this seed.
    Synth { seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub enum AllocSource {
    File(PathBuf),
    Equal,
    Proportional,
    Optimize,
}

impl std::str::FromStr for AllocSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(AllocSource::File(PathBuf::from(path)));
        }
        match s {
            "equal" => Ok(AllocSource::Equal),
            "proportional" => Ok(AllocSource::Proportional),
            "optimize" => Ok(AllocSource::Optimize),
            other => Err(Error::Config(format!(
                "unknown allocation source {other:?} (expected file:PATH|equal|proportional|optimize)"
            ))),
        }
    }
}

/// `LO:HI:STEP` supply grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub struct GridSpec {
    pub lo: u32,
    pub hi: u32,
    pub step: u32,
}

impl GridSpec {
    pub fn points(&self) -> Vec<u32> {
        let mut pts: Vec<u32> = (self.lo..=self.hi).step_by(self.step as usize).collect();
        if *pts.last().unwrap() != self.hi {
            pts.push(self.hi);
        }
        pts
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("grid must be LO:HI:STEP, got {s:?}")));
        }
        let parse = |p: &str| -> Result<u32> {
            p.parse().map_err(|_| Error::Config(format!("invalid grid component {p:?}")))
        };
        let (lo, hi, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if lo >= hi || step == 0 {
            return Err(Error::Config(format!("grid {s:?} must satisfy LO < HI and STEP >= 1")));
        }
        Ok(GridSpec { lo, hi, step })
    }
}

/// A fully specified experiment; serialized as `config.json` next to the
/// outputs so any run can be reproduced from its directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub mode: SharingMode,
    pub alloc: AllocSource,
    pub seed: u64,
    pub reps: u32,
    /// Supply grid for curve estimation; derived from the scenario's
    /// per-station bounds when absent.
    pub grid: Option<GridSpec>,
    pub adaptive: bool,
    pub jobs: usize,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.json");
        let json = serde_json::to_string_pretty(self).expect("config serialization");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("config.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
    }
}

pub fn load_source(source: &ScenarioSource) -> Result<Scenario> {
    match source {
        ScenarioSource::Dir(dir) => load_scenario(dir),
        ScenarioSource::Synth { seed } => synthesize_scenario(&SynthParams::default(), *seed),
    }
}

/// Writes a synthesized scenario file set. Deterministic for a fixed seed.
pub fn cmd_synth(params: &SynthParams, seed: u64, out: &Path) -> Result<()> {
    let scenario = synthesize_scenario(params, seed)?;
    write_scenario(&scenario, out)?;
    println!(
        "wrote scenario: {} stations, {} demand points, fleet {} -> {}",
        scenario.station_count(),
        scenario.points.len(),
        scenario.params.total_fleet,
        out.display()
    );
    Ok(())
}

/// Resolves the configured allocation source against a scenario.
pub fn resolve_allocation(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<Allocation> {
    let params = &scenario.params;
    let ids: Vec<u32> = scenario.stations.iter().map(|s| s.id).collect();
    match &cfg.alloc {
        AllocSource::File(path) => allocator::read_allocation(path),
        AllocSource::Equal => Ok(allocator::baseline_equal(params.total_fleet, &ids)),
        AllocSource::Proportional => {
            let demands: Vec<(u32, f64)> = ids
                .iter()
                .copied()
                .zip(scenario.expected_flm_demand())
                .collect();
            allocator::baseline_proportional(&demands, params.total_fleet, params.per_station_max)
        }
        AllocSource::Optimize => {
            let result = optimize(cfg, scenario)?;
            Ok(result.allocation)
        }
    }
}

pub struct OptimizeResult {
    pub allocation: Allocation,
    pub objective: f64,
    pub curves: Vec<allocator::LostDemandCurve>,
    pub simulations: u32,
    pub full_grid_simulations: u32,
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("rayon pool");
    pool.install(f)
}

/// Curve estimation plus the exact solve, on the full grid or adaptively.
pub fn optimize(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<OptimizeResult> {
    let spec = cfg.grid.unwrap_or(GridSpec {
        lo: scenario.params.per_station_min,
        hi: scenario.params.per_station_max,
        step: 5,
    });
    let grid = spec.points();
    let ids: Vec<u32> = scenario.stations.iter().map(|s| s.id).collect();
    let total = scenario.params.total_fleet;
    with_pool(cfg.jobs, || {
        if cfg.adaptive {
            let mut source = SimCurveSource::new(scenario, cfg.mode, cfg.reps, cfg.seed);
            let result = allocator::adaptive_allocate(
                &mut source,
                &ids,
                total,
                (spec.lo, spec.hi),
                spec.step,
                &[spec.lo, spec.hi],
            )?;
            Ok(OptimizeResult {
                allocation: result.allocation,
                objective: result.objective,
                curves: result.curves,
                simulations: result.simulations,
                full_grid_simulations: result.full_grid_simulations,
            })
        } else {
            let curves = allocator::estimate_curves(scenario, &grid, cfg.reps, cfg.mode, cfg.seed)?;
            let (allocation, objective) = allocator::solve_allocation(&curves, total)?;
            let sims = (ids.len() * grid.len()) as u32;
            Ok(OptimizeResult {
                allocation,
                objective,
                curves,
                simulations: sims,
                full_grid_simulations: sims,
            })
        }
    })
}

/// Runs `reps` seeded replications, writes all exports and reports, prints
/// the aggregate summary line, and returns (mean served, mean lost).
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let scenario = load_source(&cfg.scenario)?;
    let allocation = resolve_allocation(cfg, &scenario)?;
    cfg.echo(&cfg.out)?;
    allocator::write_allocation(&allocation, &cfg.out.join("allocation.csv"))?;

    let mut served_sum = 0.0;
    let mut lost_sum = 0.0;
    for rep in 0..cfg.reps.max(1) {
        let seed = replication_seed(cfg.seed, rep);
        let output = engine::run(&scenario, &allocation, cfg.mode, seed)?;
        let rep_dir = cfg.out.join(format!("rep_{rep}"));
        write_run_outputs(&output, &scenario, &rep_dir)?;
        served_sum += output.served() as f64;
        lost_sum += output.lost() as f64;
    }
    let n = cfg.reps.max(1) as f64;
    let (served, lost) = (served_sum / n, lost_sum / n);
    let total = served + lost;
    let lost_pct = if total > 0.0 { lost / total * 100.0 } else { 0.0 };
    let aggregate = serde_json::json!({
        "reps": cfg.reps.max(1),
        "mean_served": served,
        "mean_lost": lost,
        "lost_pct": lost_pct,
    });
    let agg_path = cfg.out.join("aggregate.json");
    fs::write(&agg_path, serde_json::to_string_pretty(&aggregate).unwrap())
        .map_err(|e| Error::io(&agg_path, e))?;
    println!("served={served} lost={lost} lost_pct={lost_pct:.2}");
    Ok((served, lost))
}

fn write_run_outputs(output: &SimOutput, scenario: &Scenario, dir: &Path) -> Result<()> {
    output.write_csvs(dir)?;
    let report = analytics::build_report(output, &scenario.params.fares);
    analytics::write_report_json(&report, &dir.join("report.json"))?;
    analytics::write_plot_csvs(&report, dir)?;
    analytics::write_lost_locations(output, scenario, dir)?;
    Ok(())
}

/// Computes an allocation (baseline or optimized), writing `allocation.csv`,
/// `curves.csv` (optimizer only), and a simulation-count log.
pub fn cmd_allocate(cfg: &ExperimentConfig) -> Result<Allocation> {
    let scenario = load_source(&cfg.scenario)?;
    cfg.echo(&cfg.out)?;
    let (allocation, log) = match &cfg.alloc {
        AllocSource::File(_) => {
            return Err(Error::Config("allocate computes an allocation; --alloc file: is not valid here".into()))
        }
        AllocSource::Equal | AllocSource::Proportional => {
            let allocation = resolve_allocation(cfg, &scenario)?;
            let name = if cfg.alloc == AllocSource::Equal { "equal" } else { "proportional" };
            (allocation, format!("method={name}\nsimulations=0\n"))
        }
        AllocSource::Optimize => {
            let result = optimize(cfg, &scenario)?;
            allocator::write_curves(&result.curves, &cfg.out.join("curves.csv"))?;
            let log = format!(
                "method={}\nsimulations={}\nfull_grid_simulations={}\nobjective={}\n",
                if cfg.adaptive { "adaptive" } else { "grid" },
                result.simulations,
                result.full_grid_simulations,
                result.objective,
            );
            (result.allocation, log)
        }
    };
    allocator::write_allocation(&allocation, &cfg.out.join("allocation.csv"))?;
    let log_path = cfg.out.join("sim_log.txt");
    fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
    print!("{log}");
    Ok(allocation)
}

/// Regenerates `report.json` and the plot CSVs of every replication directory
/// under `dir` from the exported CSVs. Idempotent.
pub fn cmd_report(dir: &Path) -> Result<()> {
    let cfg = ExperimentConfig::read(dir)?;
    let scenario = load_source(&cfg.scenario)?;
    let mut rep_dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("rep_"))
        })
        .collect();
    rep_dirs.sort();
    if rep_dirs.is_empty() {
        return Err(Error::Config(format!("no rep_* directories under {}", dir.display())));
    }
    for (rep, rep_dir) in rep_dirs.iter().enumerate() {
        let seed = replication_seed(cfg.seed, rep as u32);
        let output = SimOutput::read_dir(rep_dir, &scenario, cfg.mode, seed)?;
        let report = analytics::build_report(&output, &scenario.params.fares);
        analytics::write_report_json(&report, &rep_dir.join("report.json"))?;
        analytics::write_plot_csvs(&report, rep_dir)?;
        analytics::write_lost_locations(&output, &scenario, rep_dir)?;
    }
    println!("rebuilt reports for {} replication(s) in {}", rep_dirs.len(), dir.display());
    Ok(())
}
