//! Scratch calibration probe (not part of the shipped examples).

use flm_sim::allocator::{baseline_equal, baseline_proportional, Allocation};
use flm_sim::analytics;
use flm_sim::cli::{AllocSource, ExperimentConfig, ScenarioSource};
use flm_sim::demand::RequestKind;
use flm_sim::engine::{self, SharingMode};
use flm_sim::rng::replication_seed;
use flm_sim::scenario::synth::{synthesize_scenario, SynthParams};

fn main() -> flm_sim::Result<()> {
    let scenario = synthesize_scenario(&SynthParams::default(), 1)?;
    let ids: Vec<u32> = scenario.stations.iter().map(|s| s.id).collect();
    let total = scenario.params.total_fleet;
    let expected: f64 = scenario.expected_flm_demand().iter().sum();
    println!("fleet {total}, expected {expected:.0}");

    let equal = baseline_equal(total, &ids);
    let demands: Vec<(u32, f64)> = ids.iter().copied().zip(scenario.expected_flm_demand()).collect();
    let proportional = baseline_proportional(&demands, total, scenario.params.per_station_max)?;
    let seeds: Vec<u64> = (0..5).map(|r| replication_seed(1, r)).collect();

    let stats = |alloc: &Allocation, mode: SharingMode| -> flm_sim::Result<(f64, f64, f64, f64)> {
        let mut lost = 0.0;
        let mut lost_fm = 0.0;
        let mut lost_lm = 0.0;
        let mut saved = 0.0;
        for &s in &seeds {
            let out = engine::run(&scenario, alloc, mode, s)?;
            lost += out.lost() as f64;
            lost_fm += out
                .requests
                .iter()
                .filter(|r| r.kind == RequestKind::FirstMile && !r.outcome.is_served())
                .count() as f64;
            lost_lm += out
                .requests
                .iter()
                .filter(|r| r.kind == RequestKind::LastMile && !r.outcome.is_served())
                .count() as f64;
            let km = analytics::vehicle_km(&out);
            saved += (1.0 - km.actual_km / km.single_ride_km) * 100.0;
            if s == seeds[0] {
                let mut hist = [0u32; 3];
                for t in &out.trips {
                    hist[(t.passengers.clamp(1, 3) - 1) as usize] += 1;
                }
                eprintln!("      trips 1/2/3 pax: {}/{}/{}", hist[0], hist[1], hist[2]);
            }
        }
        let n = seeds.len() as f64;
        Ok((lost / n, lost_fm / n, lost_lm / n, saved / n))
    };

    for mode in SharingMode::ALL {
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
        let e = stats(&equal, mode)?;
        let p = stats(&proportional, mode)?;
        let o = stats(&optimized, mode)?;
        println!(
            "{:<6} equal {:>7.1} (fm {:>6.1} lm {:>6.1} km {:>4.1}%) | prop {:>7.1} (fm {:>6.1} lm {:>6.1} km {:>4.1}%) | opt {:>7.1} (fm {:>6.1} lm {:>6.1} km {:>4.1}%)",
            mode.as_str(), e.0, e.1, e.2, e.3, p.0, p.1, p.2, p.3, o.0, o.1, o.2, o.3
        );
    }
    Ok(())
}
