//! Desk-scale synthetic scenario generator.
//!
//! Produces a network with the same structure as a real two-corridor metro:
//! crossing straight lines with uniform 1 km station spacing, populated
//! demand points in each station's service band, bimodal (AM/PM peak) hourly
//! entry/exit counts, and a grid road network. Deterministic for a fixed
//! seed, bit for bit.
//!
//! Stations are heterogeneous on purpose: daily volume follows a lognormal
//! weight with a boost near the line crossing, terminal stations serve
//! sprawled catchments while core stations serve compact ones, and each
//! station leans residential or commercial, which flips its entry/exit split
//! between the AM and PM peaks. The default fleet size is scaled to expected
//! demand so that peak-hour supply is genuinely scarce.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{
    assign_voronoi, build_timetable, HeadwayProfile, LineRoute, Metric, RawPoint, Scenario,
    ScenarioParams, Station, StationId,
};
use crate::error::Result;
use crate::geo::{LatLon, LocalFrame};
use crate::network::RoadGraph;
use crate::rng::{stream, Domain};

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_lines: u32,
    pub stations_per_line: u32,
    pub points_per_station: u32,
    /// Multiplies all hourly entry/exit counts; 1.0 yields roughly
    /// 50,000 boardings+alightings per day (about 5,000 feeder requests at
    /// the default 10% share) on the default 40-station network.
    pub demand_scale: f64,
    pub station_spacing_km: f64,
    pub grid_spacing_km: f64,
    /// Fleet per expected daily feeder request; keeps supply scarce at peaks.
    pub fleet_per_request: f64,
    /// Train headway in minutes during peak hours (8-10, 17-20).
    pub peak_headway_min: f64,
    pub offpeak_headway_min: f64,
    /// Train travel time per 1 km hop.
    pub hop_minutes: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_lines: 2,
            stations_per_line: 20,
            points_per_station: 4,
            demand_scale: 1.0,
            station_spacing_km: 1.0,
            grid_spacing_km: 0.5,
            fleet_per_request: 0.034,
            peak_headway_min: 12.0,
            offpeak_headway_min: 24.0,
            hop_minutes: 2.0,
        }
    }
}

const ANCHOR: LatLon = LatLon { lat: 12.97, lon: 77.59 };
const SERVICE_WINDOW: (f64, f64) = (300.0, 1380.0); // 05:00 - 23:00
const DAILY_BOARDINGS_AT_SCALE_ONE: f64 = 25_000.0;
const PEAK_HOURS: [u32; 7] = [8, 9, 10, 17, 18, 19, 20];

/// Hourly demand profile weight (bimodal AM/PM peaks), evaluated at the hour
/// midpoint.
fn hour_weight(hour: u32) -> f64 {
    let h = hour as f64 + 0.5;
    0.10 + 1.45 * (-((h - 9.0) / 1.5).powi(2) / 2.0).exp() + 1.6 * (-((h - 19.0) / 1.75).powi(2) / 2.0).exp()
}

/// Builds a complete scenario. Counts must all be >= 1.
pub fn synthesize_scenario(params: &SynthParams, seed: u64) -> Result<Scenario> {
    assert!(params.n_lines >= 1 && params.stations_per_line >= 1 && params.points_per_station >= 1);
    let frame = LocalFrame::new(ANCHOR);
    let k = params.stations_per_line as f64;
    let spacing = params.station_spacing_km;
    // lines cross at half-integer offsets so no two stations coincide
    let cross = ((k - 1.0) / 2.0).floor() + 0.5;

    let mut stations = Vec::new();
    let mut id = 0u32;
    for line in 0..params.n_lines {
        let corridor = (line / 2) as f64 * 4.0 * spacing; // parallel corridors 4 km apart
        for seq in 0..params.stations_per_line {
            let along = seq as f64 * spacing;
            let (x, y) = if line % 2 == 0 {
                (along, cross * spacing + corridor)
            } else {
                (cross * spacing + corridor, along)
            };
            stations.push(Station {
                id,
                name: format!("L{line}S{seq:02}"),
                location: frame.to_latlon(x, y),
                line,
                seq,
            });
            id += 1;
        }
    }

    // station character: daily-volume weight, catchment sprawl, residential lean
    let crossing = frame.to_latlon(cross * spacing, cross * spacing);
    let mut weights = Vec::with_capacity(stations.len());
    let mut sprawl = Vec::with_capacity(stations.len());
    let mut residential = Vec::with_capacity(stations.len());
    for s in &stations {
        let mut rng = stream(seed, Domain::Synth, 1, s.id as u64);
        let normal = Normal::<f64>::new(0.0, 0.6).unwrap();
        let mut w: f64 = normal.sample(&mut rng).exp();
        let to_cross = crate::geo::haversine_km(s.location, crossing);
        if to_cross < 1.5 * spacing {
            w *= 2.0; // interchange hubs
        } else if to_cross < 3.0 * spacing {
            w *= 1.5;
        }
        let terminal = s.seq == 0 || s.seq == params.stations_per_line - 1;
        if terminal {
            // line ends collect heavy suburban demand over sprawling
            // catchments: long feeder trips meet high volumes there
            w *= 4.0;
        }
        weights.push(w.clamp(0.85, 12.0));
        // terminals serve sprawled regions, core stations compact ones
        sprawl.push(if terminal { 0.45 } else { 0.9 + rng.random_range(0.0..0.5) });
        residential.push(rng.random_range(0.25..0.75));
    }

    // demand points around each station, clustered into a few angular
    // corridors the way suburbs follow arterial roads; Voronoi assignment
    // may still move points to a nearer station
    let mut raw = Vec::new();
    let mut pid = 0u32;
    for (si, s) in stations.iter().enumerate() {
        let mut rng = stream(seed, Domain::Synth, 2, s.id as u64);
        let (sx, sy) = frame.to_km(s.location);
        let n_corridors = rng.random_range(2..=3u32);
        let base_angle = rng.random_range(0.0..std::f64::consts::TAU);
        let angle_noise = Normal::<f64>::new(0.0, 0.10).unwrap();
        for _ in 0..params.points_per_station {
            let corridor = rng.random_range(0..n_corridors);
            let angle = base_angle
                + corridor as f64 * std::f64::consts::TAU / n_corridors as f64
                + angle_noise.sample(&mut rng);
            let u: f64 = rng.random_range(0.0f64..1.0);
            let r = super::WALK_RADIUS_KM
                + (super::MAX_SERVICE_RADIUS_KM - super::WALK_RADIUS_KM) * u.powf(sprawl[si]);
            let pop_normal = Normal::<f64>::new(0.0, 0.6).unwrap();
            let draw: f64 = pop_normal.sample(&mut rng);
            let population = (200.0 * draw.exp()).round().clamp(20.0, 2000.0) as u64;
            raw.push(RawPoint {
                id: pid,
                location: frame.to_latlon(sx + r * angle.cos(), sy + r * angle.sin()),
                population,
            });
            pid += 1;
        }
    }
    let mut assigned = assign_voronoi(&stations, &raw, Metric::Haversine)?;

    // every station must keep at least one point; place a fallback nearby if
    // all of a station's candidates were captured by neighbours or dropped
    for s in &stations {
        if assigned.points.iter().any(|p| p.station == s.id) {
            continue;
        }
        let (sx, sy) = frame.to_km(s.location);
        for attempt in 0..32 {
            let angle = std::f64::consts::TAU * (s.id as f64 * 0.618 + attempt as f64 / 32.0).fract();
            let candidate = RawPoint {
                id: pid,
                location: frame.to_latlon(sx + 0.9 * angle.cos(), sy + 0.9 * angle.sin()),
                population: 150,
            };
            let out = assign_voronoi(&stations, std::slice::from_ref(&candidate), Metric::Haversine)?;
            if let Some(p) = out.points.into_iter().find(|p| p.station == s.id) {
                assigned.points.push(p);
                pid += 1;
                break;
            }
        }
    }

    // hourly entry/exit counts, normalised so total daily boardings scale
    // exactly with demand_scale
    let weight_sum: f64 = weights.iter().sum();
    let profile_sum: f64 = (5..23).map(hour_weight).sum();
    let mut demand_rows = Vec::new();
    for (si, s) in stations.iter().enumerate() {
        let mut rng = stream(seed, Domain::Synth, 3, s.id as u64);
        let daily = DAILY_BOARDINGS_AT_SCALE_ONE * params.demand_scale * weights[si] / weight_sum;
        for hour in 5u32..23 {
            let share = hour_weight(hour) / profile_sum;
            let lean = if hour < 14 { residential[si] } else { 1.0 - residential[si] };
            let noise = 1.0 + rng.random_range(-0.1..0.1);
            // boardings outweigh alightings: first-mile feeder demand runs
            // somewhat ahead of last-mile demand
            let entries = (daily * share * 2.6 * lean * noise).round().max(0.0) as u32;
            let exits = (daily * share * 1.4 * (1.0 - lean) * noise).round().max(0.0) as u32;
            demand_rows.push((s.id, hour, entries, exits));
        }
    }

    // timetable: both directions of every line, dispatched from the terminals
    let headway = {
        let mut segments = Vec::new();
        for hour in 5u32..23 {
            let h = if PEAK_HOURS.contains(&hour) {
                params.peak_headway_min
            } else {
                params.offpeak_headway_min
            };
            segments.push((hour as f64 * 60.0, (hour + 1) as f64 * 60.0, h));
        }
        HeadwayProfile::new(segments)?
    };
    let mut routes = Vec::new();
    for line in 0..params.n_lines {
        let mut ids: Vec<StationId> = stations.iter().filter(|s| s.line == line).map(|s| s.id).collect();
        let hops = vec![params.hop_minutes * spacing; ids.len().saturating_sub(1)];
        routes.push(LineRoute {
            line,
            stations: ids.clone(),
            travel_times_min: hops.clone(),
            first_dispatch: SERVICE_WINDOW.0,
        });
        ids.reverse();
        routes.push(LineRoute {
            line,
            stations: ids,
            travel_times_min: hops,
            first_dispatch: SERVICE_WINDOW.0,
        });
    }
    let timetable = build_timetable(&routes, &headway, SERVICE_WINDOW)?;

    // road grid covering stations and points with a margin
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for loc in stations
        .iter()
        .map(|s| s.location)
        .chain(assigned.points.iter().map(|p| p.location))
    {
        let (x, y) = frame.to_km(loc);
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let margin = params.grid_spacing_km;
    let graph = RoadGraph::grid(
        frame.to_latlon(min_x - margin, min_y - margin),
        frame.to_latlon(max_x + margin, max_y + margin),
        params.grid_spacing_km,
    )?;

    let expected_requests: f64 = demand_rows
        .iter()
        .map(|&(_, _, entries, exits)| (entries + exits) as f64 * 0.10)
        .sum();
    // desk-scale counterpart of the reference network's supply ratios: the
    // fleet tracks expected demand and the per-station floor is kept small
    // relative to the budget so allocation decisions have room to matter
    let per_station_min = 2;
    let scenario_params = ScenarioParams {
        total_fleet: ((expected_requests * params.fleet_per_request).round() as u32)
            .max(per_station_min * stations.len() as u32),
        per_station_min,
        ..ScenarioParams::default()
    };

    Scenario::new(
        stations,
        timetable,
        Arc::new(graph),
        assigned.points,
        demand_rows,
        scenario_params,
        seed,
    )
}
