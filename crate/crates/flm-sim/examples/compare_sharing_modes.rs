//! Compares the four ride-sharing strategies on the reference scenario:
//! lost demand under each allocation policy, and the vehicle-km saved by
//! pooling.
//!
//! Run with: cargo run --release --example compare_sharing_modes

use flm_sim::allocator::{baseline_equal, baseline_proportional};
use flm_sim::analytics;
use flm_sim::cli::{AllocSource, ExperimentConfig, ScenarioSource};
use flm_sim::engine::{self, SharingMode};
use flm_sim::rng::replication_seed;
use flm_sim::scenario::synth::{synthesize_scenario, SynthParams};

fn main() -> flm_sim::Result<()> {
    let scenario = synthesize_scenario(&SynthParams::default(), 1)?;
    let ids: Vec<u32> = scenario.stations.iter().map(|s| s.id).collect();
    let total = scenario.params.total_fleet;
    println!(
        "reference scenario: {} stations, fleet {}, ~{:.0} requests/day expected",
        scenario.station_count(),
        total,
        scenario.expected_flm_demand().iter().sum::<f64>()
    );

    let equal = baseline_equal(total, &ids);
    let demands: Vec<(u32, f64)> = ids.iter().copied().zip(scenario.expected_flm_demand()).collect();
    let proportional = baseline_proportional(&demands, total, scenario.params.per_station_max)?;

    let seeds: Vec<u64> = (0..5).map(|r| replication_seed(1, r)).collect();
    println!("\n{:<8} {:>12} {:>14} {:>12} {:>12}", "mode", "equal", "proportional", "optimized", "km saved");
    for mode in SharingMode::ALL {
        let mean = |alloc: &flm_sim::allocator::Allocation| -> flm_sim::Result<f64> {
            let mut sum = 0.0;
            for &s in &seeds {
                sum += engine::run(&scenario, alloc, mode, s)?.lost() as f64;
            }
            Ok(sum / seeds.len() as f64)
        };
        let cfg = ExperimentConfig {
            scenario: ScenarioSource::Synth { seed: 1 },
            mode,
            alloc: AllocSource::Optimize,
            seed: 1,
            reps: 5,
            grid: None,
            adaptive: false,
            jobs: 0,
            out: std::path::PathBuf::new(),
        };
        let optimized = flm_sim::cli::optimize(&cfg, &scenario)?.allocation;

        let out = engine::run(&scenario, &optimized, mode, seeds[0])?;
        let km = analytics::vehicle_km(&out);
        let saved = (1.0 - km.actual_km / km.single_ride_km) * 100.0;
        println!(
            "{:<8} {:>12.1} {:>14.1} {:>12.1} {:>11.1}%",
            mode.as_str(),
            mean(&equal)?,
            mean(&proportional)?,
            mean(&optimized)?,
            saved
        );
    }
    Ok(())
}
