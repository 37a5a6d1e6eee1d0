//! The simulation world: stations, train timetable, Voronoi service regions,
//! demand points, and global parameters.
//!
//! A [`Scenario`] is immutable after construction and safely shareable across
//! concurrent simulation runs. All invariants are checked eagerly in
//! [`Scenario::new`].

pub mod files;
pub mod synth;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine_km, LatLon};
use crate::network::{DistanceOracle, NodeId, RoadGraph};

pub type StationId = u32;

/// Passengers closer than this walk; no feeder request is generated.
pub const WALK_RADIUS_KM: f64 = 0.5;
/// Passengers farther than this use other modes entirely.
pub const MAX_SERVICE_RADIUS_KM: f64 = 5.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub name: String,
    pub location: LatLon,
    pub line: u32,
    /// Position along the line, strictly increasing.
    pub seq: u32,
}

/// One train run: `(station, arrival minute)` in visit order.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub run: u32,
    pub arrivals: Vec<(StationId, f64)>,
}

/// All train arrivals of the service day.
#[derive(Debug, Clone)]
pub struct Timetable {
    /// Service window `[start, end]` in minutes since midnight.
    pub window: (f64, f64),
    pub runs: Vec<TrainRun>,
}

impl Timetable {
    pub fn validate(&self, known: impl Fn(StationId) -> bool) -> Result<()> {
        let (start, end) = self.window;
        if !(start < end) {
            return Err(Error::Config(format!("empty service window [{start}, {end}]")));
        }
        for run in &self.runs {
            let mut prev = f64::NEG_INFINITY;
            for &(station, t) in &run.arrivals {
                if !known(station) {
                    return Err(Error::Config(format!("timetable run {} visits unknown station {station}", run.run)));
                }
                if t <= prev {
                    return Err(Error::Config(format!("timetable run {} is not strictly increasing at station {station}", run.run)));
                }
                if t < start || t > end {
                    return Err(Error::Config(format!(
                        "timetable run {} arrival {t} outside service window [{start}, {end}]",
                        run.run
                    )));
                }
                prev = t;
            }
        }
        Ok(())
    }

    /// Arrival minutes at one station, sorted ascending.
    pub fn arrivals_at(&self, station: StationId) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .runs
            .iter()
            .flat_map(|r| r.arrivals.iter())
            .filter(|(s, _)| *s == station)
            .map(|&(_, t)| t)
            .collect();
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }
}

/// Piecewise-constant headway by time of day.
#[derive(Debug, Clone)]
pub struct HeadwayProfile {
    /// `(start, end, headway_min)` segments, sorted, non-overlapping.
    segments: Vec<(f64, f64, f64)>,
}

impl HeadwayProfile {
    pub fn new(mut segments: Vec<(f64, f64, f64)>) -> Result<Self> {
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(s, e, h) in &segments {
            if h <= 0.0 {
                return Err(Error::Config(format!("headway must be positive, got {h} on [{s}, {e})")));
            }
            if !(s < e) {
                return Err(Error::Config(format!("empty headway segment [{s}, {e})")));
            }
        }
        for w in segments.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(Error::Config("overlapping headway segments".into()));
            }
        }
        Ok(HeadwayProfile { segments })
    }

    pub fn constant(window: (f64, f64), headway_min: f64) -> Result<Self> {
        HeadwayProfile::new(vec![(window.0, window.1, headway_min)])
    }

    /// Headway in force at minute `t`, if the profile covers it.
    pub fn headway_at(&self, t: f64) -> Option<f64> {
        self.segments
            .iter()
            .find(|&&(s, e, _)| t >= s && t < e)
            .map(|&(_, _, h)| h)
    }

    pub fn segments(&self) -> &[(f64, f64, f64)] {
        &self.segments
    }
}

/// An ordered sequence of stations served by one train route (one direction).
#[derive(Debug, Clone)]
pub struct LineRoute {
    pub line: u32,
    pub stations: Vec<StationId>,
    /// Travel time of hop `i -> i+1`; length = stations.len() - 1.
    pub travel_times_min: Vec<f64>,
    /// First dispatch minute at the reference (first) station.
    pub first_dispatch: f64,
}

/// Expands dispatch times and cumulative travel offsets into a [`Timetable`].
///
/// Dispatches at a route's reference station are spaced by the headway in
/// force at each dispatch time, starting from `first_dispatch`, while the
/// dispatch falls inside the service window. Arrivals that would land after
/// the window end are truncated (the run does not reach those stations within
/// the window).
pub fn build_timetable(
    routes: &[LineRoute],
    headway: &HeadwayProfile,
    window: (f64, f64),
) -> Result<Timetable> {
    let mut runs = Vec::new();
    let mut run_id = 0u32;
    for route in routes {
        if route.travel_times_min.len() + 1 != route.stations.len() {
            return Err(Error::Config(format!(
                "route on line {} has {} stations but {} travel times",
                route.line,
                route.stations.len(),
                route.travel_times_min.len()
            )));
        }
        if route.travel_times_min.iter().any(|&t| t <= 0.0) {
            return Err(Error::Config(format!("non-positive travel time on line {}", route.line)));
        }
        let mut t = route.first_dispatch;
        while t < window.1 {
            let mut arrivals = Vec::with_capacity(route.stations.len());
            let mut at = t;
            arrivals.push((route.stations[0], at));
            for (i, &hop) in route.travel_times_min.iter().enumerate() {
                at += hop;
                if at > window.1 {
                    break;
                }
                arrivals.push((route.stations[i + 1], at));
            }
            runs.push(TrainRun { run: run_id, arrivals });
            run_id += 1;
            let h = headway
                .headway_at(t)
                .ok_or_else(|| Error::Config(format!("headway profile has a gap at minute {t}")))?;
            t += h;
        }
    }
    Ok(Timetable { window, runs })
}

/// A populated location eligible for feeder trips, assigned to its nearest
/// station.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandPoint {
    pub id: u32,
    pub location: LatLon,
    pub population: u64,
    pub station: StationId,
    pub distance_km: f64,
}

/// An unassigned candidate location, as read from a points file.
#[derive(Debug, Clone)]
pub struct RawPoint {
    pub id: u32,
    pub location: LatLon,
    pub population: u64,
}

/// Distance metric for Voronoi assignment. Haversine is the default; the
/// road-network metric measures shortest-path length between snapped nodes.
pub enum Metric<'a> {
    Haversine,
    Network(&'a DistanceOracle),
}

#[derive(Debug, Clone, Default)]
pub struct VoronoiOutcome {
    pub points: Vec<DemandPoint>,
    /// Dropped: closer than [`WALK_RADIUS_KM`] (passengers walk).
    pub dropped_walk: u32,
    /// Dropped: farther than [`MAX_SERVICE_RADIUS_KM`] from every station.
    pub dropped_other_mode: u32,
}

/// Assigns each candidate point to its nearest station and keeps it only if
/// the distance lies in the service band. Idempotent and independent of the
/// input order (ties broken by station id).
pub fn assign_voronoi(stations: &[Station], raw: &[RawPoint], metric: Metric) -> Result<VoronoiOutcome> {
    if stations.is_empty() {
        return Err(Error::Config("voronoi assignment needs at least one station".into()));
    }
    let mut out = VoronoiOutcome::default();
    for p in raw {
        let mut best: Option<(f64, StationId)> = None;
        for s in stations {
            let d = match &metric {
                Metric::Haversine => haversine_km(p.location, s.location),
                Metric::Network(oracle) => {
                    let a = oracle.graph().snap(p.location);
                    let b = oracle.graph().snap(s.location);
                    oracle.distance_km(a, b)?
                }
            };
            let better = match best {
                None => true,
                Some((bd, bid)) => d < bd || (d == bd && s.id < bid),
            };
            if better {
                best = Some((d, s.id));
            }
        }
        let (d, station) = best.unwrap();
        if d < WALK_RADIUS_KM {
            out.dropped_walk += 1;
        } else if d > MAX_SERVICE_RADIUS_KM {
            out.dropped_other_mode += 1;
        } else {
            out.points.push(DemandPoint {
                id: p.id,
                location: p.location,
                population: p.population,
                station,
                distance_km: d,
            });
        }
    }
    Ok(out)
}

/// Fare and operating-cost constants for the pricing models.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FareParams {
    /// Base fare charged up to `base_distance_km`.
    pub base_fare: f64,
    /// Per-km rate beyond the base distance.
    pub per_km_rate: f64,
    pub base_distance_km: f64,
    /// Flat fee of the trip-based pricing model.
    pub flat_fare: f64,
    pub fuel_price_per_litre: f64,
    pub mileage_km_per_litre: f64,
    /// Fixed cost per vehicle per day (depreciation, maintenance).
    pub fixed_cost_per_vehicle_day: f64,
}

impl Default for FareParams {
    fn default() -> Self {
        FareParams {
            base_fare: 30.0,
            per_km_rate: 15.0,
            base_distance_km: 2.0,
            flat_fare: 30.0,
            fuel_price_per_litre: 100.0,
            mileage_km_per_litre: 25.0,
            fixed_cost_per_vehicle_day: 102.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioParams {
    /// Requests not boarded within this many minutes are lost.
    pub max_waiting_time_min: f64,
    /// Cap on the station-arrival delay an insertion may impose on a rider.
    pub max_detour_time_min: f64,
    pub vehicle_speed_kmh: f64,
    pub vehicle_capacity: u32,
    /// Fraction of transit boardings/alightings that request a feeder ride.
    pub flm_share: f64,
    pub total_fleet: u32,
    pub per_station_min: u32,
    pub per_station_max: u32,
    /// Boarding/alighting dwell at off-station stops, minutes.
    pub dwell_min: f64,
    pub fares: FareParams,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            max_waiting_time_min: 7.0,
            max_detour_time_min: 7.0,
            vehicle_speed_kmh: 21.2,
            vehicle_capacity: 3,
            flm_share: 0.10,
            total_fleet: 1200,
            per_station_min: 5,
            per_station_max: 60,
            dwell_min: 0.5,
            fares: FareParams::default(),
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("maxWaitingTime", self.max_waiting_time_min),
            ("maxDetourTime", self.max_detour_time_min),
            ("vehicleSpeed", self.vehicle_speed_kmh),
            ("baseFare", self.fares.base_fare),
            ("perKmRate", self.fares.per_km_rate),
            ("baseDistance", self.fares.base_distance_km),
            ("flatFare", self.fares.flat_fare),
            ("fuelPrice", self.fares.fuel_price_per_litre),
            ("mileage", self.fares.mileage_km_per_litre),
            ("fixedCost", self.fares.fixed_cost_per_vehicle_day),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.vehicle_capacity == 0 {
            return Err(Error::Config("vehicleCapacity must be positive".into()));
        }
        if self.dwell_min < 0.0 {
            return Err(Error::Config("dwellTime must be non-negative".into()));
        }
        if !(self.flm_share > 0.0 && self.flm_share <= 1.0) {
            return Err(Error::Config(format!("flmShare must be in (0, 1], got {}", self.flm_share)));
        }
        if self.per_station_min > self.per_station_max {
            return Err(Error::Config(format!(
                "perStationMin {} exceeds perStationMax {}",
                self.per_station_min, self.per_station_max
            )));
        }
        Ok(())
    }
}

/// Hourly boardings (`entries`) and alightings (`exits`) at one station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HourCounts {
    pub entries: u32,
    pub exits: u32,
}

/// The immutable world description a simulation runs against.
#[derive(Debug)]
pub struct Scenario {
    pub stations: Vec<Station>,
    pub timetable: Timetable,
    pub graph: Arc<RoadGraph>,
    /// Retained demand points, sorted by id.
    pub points: Vec<DemandPoint>,
    /// `demand[station_index][hour - first_hour]`.
    pub demand: Vec<Vec<HourCounts>>,
    pub params: ScenarioParams,
    /// Seed the scenario was synthesised with (provenance; runs take their own).
    pub seed: u64,

    station_index: BTreeMap<StationId, usize>,
    station_nodes: Vec<NodeId>,
    point_nodes: Vec<NodeId>,
    /// Point indexes per station, sorted by point id.
    station_points: Vec<Vec<usize>>,
    /// Shared shortest-path cache; filled lazily, safe under concurrent runs.
    oracle: DistanceOracle,
}

impl Scenario {
    pub fn new(
        stations: Vec<Station>,
        timetable: Timetable,
        graph: Arc<RoadGraph>,
        mut points: Vec<DemandPoint>,
        demand_rows: Vec<(StationId, u32, u32, u32)>,
        params: ScenarioParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let mut station_index = BTreeMap::new();
        for (i, s) in stations.iter().enumerate() {
            if station_index.insert(s.id, i).is_some() {
                return Err(Error::Config(format!("duplicate station id {}", s.id)));
            }
        }
        // strictly increasing sequence along each line
        let mut by_line: BTreeMap<u32, Vec<(u32, StationId)>> = BTreeMap::new();
        for s in &stations {
            by_line.entry(s.line).or_default().push((s.seq, s.id));
        }
        for (line, mut seqs) in by_line {
            seqs.sort();
            for w in seqs.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::Config(format!(
                        "stations {} and {} share sequence {} on line {line}",
                        w[0].1, w[1].1, w[0].0
                    )));
                }
            }
        }
        timetable.validate(|s| station_index.contains_key(&s))?;

        points.sort_by_key(|p| p.id);
        for w in points.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::Config(format!("duplicate demand point id {}", w[0].id)));
            }
        }
        let mut station_points = vec![Vec::new(); stations.len()];
        for (i, p) in points.iter().enumerate() {
            let si = *station_index
                .get(&p.station)
                .ok_or_else(|| Error::Config(format!("demand point {} references unknown station {}", p.id, p.station)))?;
            if p.distance_km < WALK_RADIUS_KM || p.distance_km > MAX_SERVICE_RADIUS_KM {
                return Err(Error::Config(format!(
                    "demand point {} distance {} outside service band",
                    p.id, p.distance_km
                )));
            }
            station_points[si].push(i);
        }

        let first_hour = Self::first_hour_of(&timetable);
        let n_hours = Self::hours_of(&timetable);
        let mut demand = vec![vec![HourCounts { entries: 0, exits: 0 }; n_hours]; stations.len()];
        for (station, hour, entries, exits) in demand_rows {
            let si = *station_index
                .get(&station)
                .ok_or_else(|| Error::Config(format!("demand row references unknown station {station}")))?;
            if hour < first_hour || hour >= first_hour + n_hours as u32 {
                return Err(Error::Config(format!(
                    "demand row for station {station} has hour {hour} outside service window"
                )));
            }
            let cell = &mut demand[si][(hour - first_hour) as usize];
            cell.entries = cell.entries.saturating_add(entries);
            cell.exits = cell.exits.saturating_add(exits);
        }

        let station_nodes = stations.iter().map(|s| graph.snap(s.location)).collect();
        let point_nodes = points.iter().map(|p| graph.snap(p.location)).collect();
        let oracle = DistanceOracle::new(Arc::clone(&graph));

        Ok(Scenario {
            stations,
            timetable,
            graph,
            points,
            demand,
            params,
            seed,
            station_index,
            station_nodes,
            point_nodes,
            station_points,
            oracle,
        })
    }

    fn first_hour_of(tt: &Timetable) -> u32 {
        (tt.window.0 / 60.0).floor() as u32
    }

    fn hours_of(tt: &Timetable) -> usize {
        let first = Self::first_hour_of(tt) as f64;
        ((tt.window.1 / 60.0).ceil() - first) as usize
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn station_index(&self, id: StationId) -> Option<usize> {
        self.station_index.get(&id).copied()
    }

    /// First hour of the service window (e.g. 5 for a 05:00 start).
    pub fn first_hour(&self) -> u32 {
        Self::first_hour_of(&self.timetable)
    }

    pub fn hour_count(&self) -> usize {
        Self::hours_of(&self.timetable)
    }

    pub fn window(&self) -> (f64, f64) {
        self.timetable.window
    }

    pub fn station_node(&self, station_idx: usize) -> NodeId {
        self.station_nodes[station_idx]
    }

    pub fn point_node(&self, point_idx: usize) -> NodeId {
        self.point_nodes[point_idx]
    }

    /// Indexes into [`Scenario::points`] of the points served by a station.
    pub fn points_of(&self, station_idx: usize) -> &[usize] {
        &self.station_points[station_idx]
    }

    /// Shared shortest-path oracle. All runs against this scenario reuse one
    /// per-source distance cache.
    pub fn oracle_ref(&self) -> &DistanceOracle {
        &self.oracle
    }

    /// Expected feeder requests per station for the whole day: deterministic
    /// first-mile counts plus the Poisson means of last-mile batches. Used by
    /// the demand-proportional allocation baseline.
    pub fn expected_flm_demand(&self) -> Vec<f64> {
        (0..self.station_count())
            .map(|si| {
                self.demand[si]
                    .iter()
                    .map(|c| {
                        (c.entries as f64 * self.params.flm_share).round()
                            + c.exits as f64 * self.params.flm_share
                    })
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn station(id: u32, line: u32, seq: u32, lat: f64, lon: f64) -> Station {
        Station {
            id,
            name: format!("S{id}"),
            location: LatLon::new(lat, lon),
            line,
            seq,
        }
    }

    #[test]
    fn timetable_cumulative_offsets() {
        let routes = [LineRoute {
            line: 0,
            stations: vec![1, 2, 3],
            travel_times_min: vec![4.0, 5.0],
            first_dispatch: 300.0,
        }];
        let headway = HeadwayProfile::constant((300.0, 360.0), 120.0).unwrap();
        let tt = build_timetable(&routes, &headway, (300.0, 360.0)).unwrap();
        assert_eq!(tt.runs.len(), 1);
        assert_eq!(tt.runs[0].arrivals, vec![(1, 300.0), (2, 304.0), (3, 309.0)]);
    }

    #[test]
    fn timetable_headway_30_gives_two_dispatches() {
        let routes = [LineRoute {
            line: 0,
            stations: vec![1],
            travel_times_min: vec![],
            first_dispatch: 300.0,
        }];
        let headway = HeadwayProfile::constant((300.0, 360.0), 30.0).unwrap();
        let tt = build_timetable(&routes, &headway, (300.0, 360.0)).unwrap();
        let times: Vec<f64> = tt.runs.iter().map(|r| r.arrivals[0].1).collect();
        assert_eq!(times, vec![300.0, 330.0]);
    }

    #[test]
    fn timetable_headway_5_gives_12_dispatches_per_hour() {
        let routes = [LineRoute {
            line: 0,
            stations: vec![1],
            travel_times_min: vec![],
            first_dispatch: 540.0,
        }];
        let headway = HeadwayProfile::constant((540.0, 600.0), 5.0).unwrap();
        let tt = build_timetable(&routes, &headway, (540.0, 600.0)).unwrap();
        assert_eq!(tt.runs.len(), 12);
    }

    #[test]
    fn timetable_gap_in_headway_profile_is_an_error() {
        let routes = [LineRoute {
            line: 0,
            stations: vec![1],
            travel_times_min: vec![],
            first_dispatch: 300.0,
        }];
        // profile covers only the first half of the window
        let headway = HeadwayProfile::new(vec![(300.0, 330.0, 10.0)]).unwrap();
        let err = build_timetable(&routes, &headway, (300.0, 360.0)).unwrap_err();
        assert!(err.to_string().contains("gap"));
    }

    #[test]
    fn timetable_truncates_arrivals_past_window_end() {
        let routes = [LineRoute {
            line: 0,
            stations: vec![1, 2],
            travel_times_min: vec![10.0],
            first_dispatch: 300.0,
        }];
        let headway = HeadwayProfile::constant((300.0, 312.0), 6.0).unwrap();
        let tt = build_timetable(&routes, &headway, (300.0, 312.0)).unwrap();
        // dispatch at 300 reaches station 2 at 310; dispatch at 306 would reach at 316 > 312
        assert_eq!(tt.arrivals_at(2), vec![310.0]);
        assert_eq!(tt.arrivals_at(1), vec![300.0, 306.0]);
    }

    #[test]
    fn voronoi_drops_walkers_and_other_modes() {
        let stations = vec![station(1, 0, 0, 13.0, 77.6)];
        let frame = crate::geo::LocalFrame::new(stations[0].location);
        let raw = vec![
            RawPoint { id: 1, location: frame.to_latlon(0.3, 0.0), population: 10 },
            RawPoint { id: 2, location: frame.to_latlon(6.0, 0.0), population: 10 },
            RawPoint { id: 3, location: frame.to_latlon(2.0, 0.0), population: 10 },
        ];
        let out = assign_voronoi(&stations, &raw, Metric::Haversine).unwrap();
        assert_eq!(out.dropped_walk, 1);
        assert_eq!(out.dropped_other_mode, 1);
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.points[0].id, 3);
        assert_eq!(out.points[0].station, 1);
    }

    #[test]
    fn voronoi_assigns_nearest_station() {
        let stations = vec![station(1, 0, 0, 13.0, 77.6), station(2, 0, 1, 13.1, 77.6)];
        let frame = crate::geo::LocalFrame::new(stations[0].location);
        let raw = vec![RawPoint { id: 7, location: frame.to_latlon(1.0, 1.0), population: 5 }];
        let out = assign_voronoi(&stations, &raw, Metric::Haversine).unwrap();
        assert_eq!(out.points[0].station, 1);
    }

    #[test]
    fn voronoi_is_order_independent_and_idempotent() {
        let stations = vec![station(1, 0, 0, 13.0, 77.6), station(2, 0, 1, 13.05, 77.65)];
        let frame = crate::geo::LocalFrame::new(stations[0].location);
        let mut raw: Vec<RawPoint> = (0..40)
            .map(|i| RawPoint {
                id: i,
                location: frame.to_latlon(0.17 * i as f64, 0.11 * ((i * 7) % 13) as f64),
                population: 10 + i as u64,
            })
            .collect();
        let forward = assign_voronoi(&stations, &raw, Metric::Haversine).unwrap();
        raw.reverse();
        let mut backward = assign_voronoi(&stations, &raw, Metric::Haversine).unwrap();
        backward.points.sort_by_key(|p| p.id);
        assert_eq!(forward.points.len(), backward.points.len());
        for (a, b) in forward.points.iter().zip(&backward.points) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.station, b.station);
            assert_eq!(a.distance_km, b.distance_km);
        }
        // idempotent: re-assigning the retained set keeps every point
        let again: Vec<RawPoint> = forward
            .points
            .iter()
            .map(|p| RawPoint { id: p.id, location: p.location, population: p.population })
            .collect();
        let second = assign_voronoi(&stations, &again, Metric::Haversine).unwrap();
        assert_eq!(second.points.len(), forward.points.len());
        assert_eq!(second.dropped_walk, 0);
        assert_eq!(second.dropped_other_mode, 0);
    }
}
