//! Stochastic generation of first- and last-mile requests from station-level
//! hourly counts.
//!
//! Demand is drawn from per-station RNG streams derived from the master seed
//! ([`crate::rng::stream`]), so the request stream of a station is identical
//! whether the whole network or only that station is simulated, and identical
//! across allocation and sharing-mode choices. Last-mile batch sizes are
//! Poisson with mean `exits / trains that hour * flm_share`; first-mile
//! counts are the deterministic round of `entries * flm_share` with request
//! times uniform over the hour. Endpoints are sampled with probability
//! proportional to population.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::scenario::{Scenario, StationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RequestKind {
    FirstMile,
    LastMile,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::FirstMile => "fm",
            RequestKind::LastMile => "lm",
        }
    }
}

impl std::str::FromStr for RequestKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fm" => Ok(RequestKind::FirstMile),
            "lm" => Ok(RequestKind::LastMile),
            other => Err(Error::Config(format!("unknown request kind {other:?}"))),
        }
    }
}

/// A feeder trip request. For last-mile requests the time is a train arrival
/// minute at the station; the endpoint always lies in the station's Voronoi
/// set.
#[derive(Debug, Clone)]
pub struct Request {
    pub id: u64,
    pub kind: RequestKind,
    pub station: StationId,
    /// Index of the station in the scenario's station list.
    pub station_idx: usize,
    /// Index of the endpoint in the scenario's point list.
    pub point_idx: usize,
    pub time: f64,
}

/// Tallies of demand that could not be generated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenWarnings {
    /// Station-hours with exits but no train arrivals.
    pub hours_without_trains: u32,
    /// Station-hours with demand but no demand points (or zero population).
    pub hours_without_points: u32,
}

#[derive(Debug, Clone, Default)]
pub struct DemandStream {
    pub requests: Vec<Request>,
    pub warnings: GenWarnings,
}

/// Population-weighted endpoint sampler over one station's demand points.
pub struct EndpointSampler {
    point_idxs: Vec<usize>,
    cumulative: Vec<u64>,
    total: u64,
}

impl EndpointSampler {
    pub fn new(scenario: &Scenario, station_idx: usize) -> Result<Self> {
        let point_idxs: Vec<usize> = scenario.points_of(station_idx).to_vec();
        if point_idxs.is_empty() {
            return Err(Error::Config(format!(
                "station {} has no demand points to sample",
                scenario.stations[station_idx].id
            )));
        }
        let mut cumulative = Vec::with_capacity(point_idxs.len());
        let mut total = 0u64;
        for &pi in &point_idxs {
            total += scenario.points[pi].population;
            cumulative.push(total);
        }
        if total == 0 {
            return Err(Error::Config(format!(
                "station {} demand points have zero total population",
                scenario.stations[station_idx].id
            )));
        }
        Ok(EndpointSampler { point_idxs, cumulative, total })
    }

    /// Samples a point index with probability `population / total population`.
    /// Zero-population points are never returned.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let draw = rng.random_range(0..self.total);
        // first cumulative value strictly greater than the draw
        let pos = self.cumulative.partition_point(|&c| c <= draw);
        self.point_idxs[pos]
    }
}

/// Poisson batch size for one train arrival.
pub fn last_mile_batch_size(exits: u32, trains_that_hour: u32, flm_share: f64, rng: &mut ChaCha8Rng) -> u32 {
    debug_assert!(trains_that_hour >= 1);
    let mean = exits as f64 / trains_that_hour as f64 * flm_share;
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

/// Deterministic first-mile request count for one hour.
pub fn first_mile_count(entries: u32, flm_share: f64) -> u32 {
    (entries as f64 * flm_share).round() as u32
}

/// Generates the whole-day request stream of one station, ordered by time.
pub fn generate_station(scenario: &Scenario, station_idx: usize, master_seed: u64) -> DemandStream {
    let station = &scenario.stations[station_idx];
    let mut rng = stream(master_seed, Domain::Demand, station.id as u64, 0);
    let mut out = DemandStream::default();
    let share = scenario.params.flm_share;
    let first_hour = scenario.first_hour();

    let sampler = EndpointSampler::new(scenario, station_idx).ok();
    let arrivals = scenario.timetable.arrivals_at(station.id);
    let mut seq = 0u64;
    let mut next_id = || {
        let id = station.id as u64 * 1_000_000 + seq;
        seq += 1;
        id
    };

    for (off, counts) in scenario.demand[station_idx].iter().enumerate() {
        let hour = first_hour + off as u32;
        let hour_start = hour as f64 * 60.0;
        let hour_end = hour_start + 60.0;
        let hour_arrivals: Vec<f64> = arrivals
            .iter()
            .copied()
            .filter(|&t| t >= hour_start && t < hour_end)
            .collect();

        // last-mile: one Poisson batch per train arrival
        if counts.exits > 0 {
            if hour_arrivals.is_empty() {
                out.warnings.hours_without_trains += 1;
            } else if sampler.is_none() {
                out.warnings.hours_without_points += 1;
            } else {
                let sampler = sampler.as_ref().unwrap();
                for &arrival in &hour_arrivals {
                    let n = last_mile_batch_size(counts.exits, hour_arrivals.len() as u32, share, &mut rng);
                    for _ in 0..n {
                        out.requests.push(Request {
                            id: next_id(),
                            kind: RequestKind::LastMile,
                            station: station.id,
                            station_idx,
                            point_idx: sampler.sample(&mut rng),
                            time: arrival,
                        });
                    }
                }
            }
        }

        // first-mile: deterministic count, uniform times within the hour
        let n = first_mile_count(counts.entries, share);
        if n > 0 {
            if let Some(sampler) = &sampler {
                for _ in 0..n {
                    out.requests.push(Request {
                        id: next_id(),
                        kind: RequestKind::FirstMile,
                        station: station.id,
                        station_idx,
                        point_idx: sampler.sample(&mut rng),
                        time: hour_start + rng.random_range(0.0..60.0),
                    });
                }
            } else {
                out.warnings.hours_without_points += 1;
            }
        }
    }

    out.requests.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.id.cmp(&b.id)));
    out
}

/// Generates the request streams of the given stations (all when `None`),
/// merged in station order.
pub fn generate(scenario: &Scenario, master_seed: u64, stations: Option<&[usize]>) -> DemandStream {
    let all: Vec<usize>;
    let idxs = match stations {
        Some(s) => s,
        None => {
            all = (0..scenario.station_count()).collect();
            &all
        }
    };
    let mut out = DemandStream::default();
    for &si in idxs {
        let part = generate_station(scenario, si, master_seed);
        out.requests.extend(part.requests);
        out.warnings.hours_without_trains += part.warnings.hours_without_trains;
        out.warnings.hours_without_points += part.warnings.hours_without_points;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::synth::{synthesize_scenario, SynthParams};

    fn small_scenario(seed: u64) -> Scenario {
        synthesize_scenario(
            &SynthParams { stations_per_line: 4, points_per_station: 4, ..SynthParams::default() },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn zero_mean_batches_are_empty() {
        let mut rng = stream(1, Domain::Demand, 0, 0);
        for _ in 0..100 {
            assert_eq!(last_mile_batch_size(0, 4, 0.1, &mut rng), 0);
        }
    }

    #[test]
    fn poisson_mean_4_sample_mean_within_bounds() {
        // exits 40, 1 train, share 0.1 -> mean 4; bound from a 10k-draw run
        let mut rng = stream(2024, Domain::Demand, 0, 0);
        let n = 10_000;
        let total: u64 = (0..n).map(|_| last_mile_batch_size(40, 1, 0.1, &mut rng) as u64).sum();
        let mean = total as f64 / n as f64;
        assert!((3.88..=4.12).contains(&mean), "sample mean {mean}");
    }

    #[test]
    fn first_mile_count_is_share_of_entries() {
        assert_eq!(first_mile_count(100, 0.1), 10);
        assert_eq!(first_mile_count(0, 0.1), 0);
        assert_eq!(first_mile_count(95, 0.1), 10); // rounds
    }

    #[test]
    fn uniform_times_have_midpoint_mean() {
        // 10k first-mile times in one hour: mean offset within 30 +/- 0.6
        let sc = small_scenario(5);
        let mut rng = stream(77, Domain::Demand, 0, 0);
        let sampler = EndpointSampler::new(&sc, 0).unwrap();
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let _ = sampler.sample(&mut rng);
            sum += rng.random_range(0.0f64..60.0);
        }
        let mean = sum / n as f64;
        assert!((mean - 30.0).abs() <= 0.6, "mean offset {mean}");
    }

    #[test]
    fn endpoint_sampling_is_population_weighted() {
        // two points with populations 300 and 100: the heavy one should be
        // drawn with frequency 0.75 +/- 0.0075 over 40k draws
        let sampler = EndpointSampler {
            point_idxs: vec![0, 1],
            cumulative: vec![300, 400],
            total: 400,
        };
        let mut rng = stream(31, Domain::Demand, 9, 0);
        let n = 40_000;
        let heavy = (0..n).filter(|_| sampler.sample(&mut rng) == 0).count();
        let freq = heavy as f64 / n as f64;
        assert!((freq - 0.75).abs() <= 0.0075, "frequency {freq}");
    }

    #[test]
    fn single_point_always_sampled_and_zero_pop_never() {
        let single = EndpointSampler { point_idxs: vec![3], cumulative: vec![10], total: 10 };
        let mut rng = stream(1, Domain::Demand, 2, 0);
        for _ in 0..50 {
            assert_eq!(single.sample(&mut rng), 3);
        }
        // middle point has zero population
        let with_zero = EndpointSampler {
            point_idxs: vec![0, 1, 2],
            cumulative: vec![5, 5, 9],
            total: 9,
        };
        for _ in 0..500 {
            assert_ne!(with_zero.sample(&mut rng), 1);
        }
    }

    #[test]
    fn stream_is_identical_across_subset_and_full_generation() {
        let sc = small_scenario(9);
        let full = generate(&sc, 42, None);
        for si in 0..sc.station_count() {
            let solo = generate_station(&sc, si, 42);
            let from_full: Vec<&Request> =
                full.requests.iter().filter(|r| r.station_idx == si).collect();
            assert_eq!(from_full.len(), solo.requests.len());
            for (a, b) in from_full.iter().zip(&solo.requests) {
                assert_eq!(a.id, b.id);
                assert_eq!(a.point_idx, b.point_idx);
                assert_eq!(a.time, b.time);
                assert_eq!(a.kind, b.kind);
            }
        }
    }

    #[test]
    fn last_mile_times_are_train_arrivals() {
        let sc = small_scenario(3);
        let d = generate(&sc, 7, None);
        for r in d.requests.iter().filter(|r| r.kind == RequestKind::LastMile) {
            let arrivals = sc.timetable.arrivals_at(r.station);
            assert!(arrivals.contains(&r.time), "LM request at non-arrival time {}", r.time);
        }
    }
}
