//! Scenario file formats.
//!
//! A scenario directory holds:
//!
//! - `stations.geojson` — FeatureCollection of Points with properties
//!   `{id, name, line, seq}`;
//! - `demand.csv` — `station_id,hour,entries,exits` (hours within the service
//!   window, e.g. 5-22 for a 05:00-23:00 day);
//! - `points.csv` — `id,lat,lon,population` (unassigned candidate locations);
//! - `params.txt` — `key = value` lines, keys as in [`ScenarioParams`], plus
//!   `serviceStart`/`serviceEnd` minutes;
//! - `timetable.csv` — `run,station_id,arrival_min`, or alternatively
//!   `headways.csv` — `line,start_min,end_min,headway_min,inter_station_min`
//!   from which a timetable is built (both directions per line, first
//!   dispatch at the window start);
//! - optional `nodes.csv`/`edges.csv` road graph; a grid over the scenario
//!   extent is built when absent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    assign_voronoi, build_timetable, FareParams, HeadwayProfile, LineRoute, Metric, RawPoint,
    Scenario, ScenarioParams, Station, Timetable, TrainRun,
};
use crate::error::{Error, Result};
use crate::geo::{LatLon, LocalFrame};
use crate::network::{load_graph, write_graph, RoadGraph};

/// Grid spacing used when a scenario directory carries no road-graph files.
const DEFAULT_GRID_SPACING_KM: f64 = 0.5;

// ---------------------------------------------------------------------------
// small CSV helpers (shared with the network loader)
// ---------------------------------------------------------------------------

/// Yields `(line_number, content)` for data rows: skips blank lines, `#`
/// comments, and a header row that starts with a non-numeric field.
pub(crate) fn csv_rows(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return None;
        }
        let first = trimmed.split(',').next().unwrap_or("");
        if i == 0 && f64::from_str(first).is_err() {
            return None; // header
        }
        Some((i + 1, trimmed))
    })
}

pub(crate) fn split_fields<'a>(
    line: &'a str,
    expected: usize,
    file: &str,
    lineno: usize,
) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(Error::parse(
            file,
            lineno,
            format!("expected {expected} comma-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

pub(crate) fn parse_field<T: FromStr>(raw: &str, name: &str, file: &str, lineno: usize) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(file, lineno, format!("invalid {name}: {raw:?}")))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// stations.geojson
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FeatureCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct Feature {
    #[serde(rename = "type")]
    kind: String,
    geometry: PointGeometry,
    properties: StationProps,
}

#[derive(Serialize, Deserialize)]
struct PointGeometry {
    #[serde(rename = "type")]
    kind: String,
    /// `[lon, lat]` per the GeoJSON convention.
    coordinates: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct StationProps {
    id: u32,
    name: String,
    line: u32,
    seq: u32,
}

pub fn load_stations(path: &Path) -> Result<Vec<Station>> {
    let text = read(path)?;
    let file = path.display().to_string();
    let fc: FeatureCollection = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&file, e.line(), e.to_string()))?;
    let mut stations = Vec::with_capacity(fc.features.len());
    for f in fc.features {
        if f.geometry.kind != "Point" {
            return Err(Error::parse(&file, 0, format!("station {} geometry must be Point", f.properties.id)));
        }
        stations.push(Station {
            id: f.properties.id,
            name: f.properties.name,
            location: LatLon::new(f.geometry.coordinates[1], f.geometry.coordinates[0]),
            line: f.properties.line,
            seq: f.properties.seq,
        });
    }
    stations.sort_by_key(|s| s.id);
    Ok(stations)
}

fn write_stations(stations: &[Station], path: &Path) -> Result<()> {
    let fc = FeatureCollection {
        kind: "FeatureCollection".into(),
        features: stations
            .iter()
            .map(|s| Feature {
                kind: "Feature".into(),
                geometry: PointGeometry {
                    kind: "Point".into(),
                    coordinates: [s.location.lon, s.location.lat],
                },
                properties: StationProps {
                    id: s.id,
                    name: s.name.clone(),
                    line: s.line,
                    seq: s.seq,
                },
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&fc).expect("geojson serialization");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// params.txt
// ---------------------------------------------------------------------------

fn parse_params(path: &Path) -> Result<(ScenarioParams, (f64, f64))> {
    let text = read(path)?;
    let file = path.display().to_string();
    let mut params = ScenarioParams::default();
    let mut window = (300.0, 1380.0);
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| Error::parse(&file, lineno, format!("expected `key = value`, got {trimmed:?}")))?;
        let key = key.trim();
        let value = value.trim();
        let num = || -> Result<f64> { parse_field(value, key, &file, lineno) };
        match key {
            "maxWaitingTime" => params.max_waiting_time_min = num()?,
            "maxDetourTime" => params.max_detour_time_min = num()?,
            "vehicleSpeed" => params.vehicle_speed_kmh = num()?,
            "vehicleCapacity" => params.vehicle_capacity = parse_field(value, key, &file, lineno)?,
            "flmShare" => params.flm_share = num()?,
            "totalFleet" => params.total_fleet = parse_field(value, key, &file, lineno)?,
            "perStationMin" => params.per_station_min = parse_field(value, key, &file, lineno)?,
            "perStationMax" => params.per_station_max = parse_field(value, key, &file, lineno)?,
            "dwellTime" => params.dwell_min = num()?,
            "baseFare" => params.fares.base_fare = num()?,
            "perKmRate" => params.fares.per_km_rate = num()?,
            "baseDistance" => params.fares.base_distance_km = num()?,
            "flatFare" => params.fares.flat_fare = num()?,
            "fuelPrice" => params.fares.fuel_price_per_litre = num()?,
            "mileage" => params.fares.mileage_km_per_litre = num()?,
            "fixedCost" => params.fares.fixed_cost_per_vehicle_day = num()?,
            "serviceStart" => window.0 = num()?,
            "serviceEnd" => window.1 = num()?,
            _ => return Err(Error::parse(&file, lineno, format!("unknown parameter {key:?}"))),
        }
    }
    Ok((params, window))
}

fn render_params(p: &ScenarioParams, window: (f64, f64)) -> String {
    let FareParams {
        base_fare,
        per_km_rate,
        base_distance_km,
        flat_fare,
        fuel_price_per_litre,
        mileage_km_per_litre,
        fixed_cost_per_vehicle_day,
    } = p.fares;
    format!(
        "maxWaitingTime = {}\nmaxDetourTime = {}\nvehicleSpeed = {}\nvehicleCapacity = {}\n\
         flmShare = {}\ntotalFleet = {}\nperStationMin = {}\nperStationMax = {}\ndwellTime = {}\n\
         baseFare = {}\nperKmRate = {}\nbaseDistance = {}\nflatFare = {}\nfuelPrice = {}\n\
         mileage = {}\nfixedCost = {}\nserviceStart = {}\nserviceEnd = {}\n",
        p.max_waiting_time_min,
        p.max_detour_time_min,
        p.vehicle_speed_kmh,
        p.vehicle_capacity,
        p.flm_share,
        p.total_fleet,
        p.per_station_min,
        p.per_station_max,
        p.dwell_min,
        base_fare,
        per_km_rate,
        base_distance_km,
        flat_fare,
        fuel_price_per_litre,
        mileage_km_per_litre,
        fixed_cost_per_vehicle_day,
        window.0,
        window.1,
    )
}

// ---------------------------------------------------------------------------
// timetable.csv / headways.csv
// ---------------------------------------------------------------------------

fn load_timetable(path: &Path, window: (f64, f64)) -> Result<Timetable> {
    let text = read(path)?;
    let file = path.display().to_string();
    let mut runs: BTreeMap<u32, Vec<(u32, f64)>> = BTreeMap::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 3, &file, lineno)?;
        let run: u32 = parse_field(f[0], "run", &file, lineno)?;
        let station: u32 = parse_field(f[1], "station_id", &file, lineno)?;
        let arrival: f64 = parse_field(f[2], "arrival_min", &file, lineno)?;
        runs.entry(run).or_default().push((station, arrival));
    }
    Ok(Timetable {
        window,
        runs: runs
            .into_iter()
            .map(|(run, arrivals)| TrainRun { run, arrivals })
            .collect(),
    })
}

fn load_headways(path: &Path, stations: &[Station], window: (f64, f64)) -> Result<Timetable> {
    let text = read(path)?;
    let file = path.display().to_string();
    // line -> (segments, inter-station minutes)
    let mut lines: BTreeMap<u32, (Vec<(f64, f64, f64)>, f64)> = BTreeMap::new();
    for (lineno, row) in csv_rows(&text) {
        let f = split_fields(row, 5, &file, lineno)?;
        let line: u32 = parse_field(f[0], "line", &file, lineno)?;
        let start: f64 = parse_field(f[1], "start_min", &file, lineno)?;
        let end: f64 = parse_field(f[2], "end_min", &file, lineno)?;
        let headway: f64 = parse_field(f[3], "headway_min", &file, lineno)?;
        let hop: f64 = parse_field(f[4], "inter_station_min", &file, lineno)?;
        if headway <= 0.0 {
            return Err(Error::parse(&file, lineno, format!("headway must be positive, got {headway}")));
        }
        let entry = lines.entry(line).or_insert_with(|| (Vec::new(), hop));
        entry.0.push((start, end, headway));
        entry.1 = hop;
    }
    let mut routes = Vec::new();
    let mut timetable = Timetable { window, runs: Vec::new() };
    for (line, (segments, hop)) in lines {
        let mut ids: Vec<u32> = stations.iter().filter(|s| s.line == line).map(|s| s.id).collect();
        if ids.is_empty() {
            return Err(Error::parse(&file, 0, format!("headway row references line {line} with no stations")));
        }
        let profile = HeadwayProfile::new(segments)?;
        let hops = vec![hop; ids.len() - 1];
        routes.push((
            LineRoute { line, stations: ids.clone(), travel_times_min: hops.clone(), first_dispatch: window.0 },
            profile.clone(),
        ));
        ids.reverse();
        routes.push((
            LineRoute { line, stations: ids, travel_times_min: hops, first_dispatch: window.0 },
            profile,
        ));
    }
    for (route, profile) in routes {
        let part = build_timetable(std::slice::from_ref(&route), &profile, window)?;
        let base = timetable.runs.len() as u32;
        timetable.runs.extend(part.runs.into_iter().map(|mut r| {
            r.run += base;
            r
        }));
    }
    Ok(timetable)
}

fn write_timetable(tt: &Timetable, path: &Path) -> Result<()> {
    let mut out = String::from("run,station_id,arrival_min\n");
    for run in &tt.runs {
        for &(station, t) in &run.arrivals {
            writeln!(out, "{},{},{}", run.run, station, t).unwrap();
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// demand.csv / points.csv
// ---------------------------------------------------------------------------

fn load_demand(path: &Path) -> Result<Vec<(u32, u32, u32, u32)>> {
    let text = read(path)?;
    let file = path.display().to_string();
    let mut rows = Vec::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 4, &file, lineno)?;
        rows.push((
            parse_field(f[0], "station_id", &file, lineno)?,
            parse_field(f[1], "hour", &file, lineno)?,
            parse_field(f[2], "entries", &file, lineno)?,
            parse_field(f[3], "exits", &file, lineno)?,
        ));
    }
    Ok(rows)
}

fn load_points(path: &Path) -> Result<Vec<RawPoint>> {
    let text = read(path)?;
    let file = path.display().to_string();
    let mut points = Vec::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 4, &file, lineno)?;
        points.push(RawPoint {
            id: parse_field(f[0], "id", &file, lineno)?,
            location: LatLon::new(
                parse_field(f[1], "lat", &file, lineno)?,
                parse_field(f[2], "lon", &file, lineno)?,
            ),
            population: parse_field(f[3], "population", &file, lineno)?,
        });
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// whole-directory load / write
// ---------------------------------------------------------------------------

/// Loads and validates a scenario from a directory; see the module docs for
/// the expected file set. All invariants are checked eagerly.
pub fn load_scenario(dir: &Path) -> Result<Scenario> {
    let stations = load_stations(&dir.join("stations.geojson"))?;
    let (params, window) = parse_params(&dir.join("params.txt"))?;
    let timetable_path = dir.join("timetable.csv");
    let timetable = if timetable_path.exists() {
        load_timetable(&timetable_path, window)?
    } else {
        load_headways(&dir.join("headways.csv"), &stations, window)?
    };
    let demand_rows = load_demand(&dir.join("demand.csv"))?;
    let raw_points = load_points(&dir.join("points.csv"))?;

    let nodes_path = dir.join("nodes.csv");
    let graph = if nodes_path.exists() {
        load_graph(&nodes_path, &dir.join("edges.csv"))?
    } else {
        grid_over(&stations, &raw_points)?
    };
    let assigned = assign_voronoi(&stations, &raw_points, Metric::Haversine)?;

    Scenario::new(
        stations,
        timetable,
        Arc::new(graph),
        assigned.points,
        demand_rows,
        params,
        0,
    )
}

fn grid_over(stations: &[Station], points: &[RawPoint]) -> Result<RoadGraph> {
    let first = stations
        .first()
        .ok_or_else(|| Error::Config("scenario has no stations".into()))?;
    let frame = LocalFrame::new(first.location);
    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for loc in stations
        .iter()
        .map(|s| s.location)
        .chain(points.iter().map(|p| p.location))
    {
        let (x, y) = frame.to_km(loc);
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    let m = DEFAULT_GRID_SPACING_KM;
    RoadGraph::grid(
        frame.to_latlon(min_x - m, min_y - m),
        frame.to_latlon(max_x + m, max_y + m),
        m,
    )
}

/// Writes the full scenario file set into `dir` (created if missing).
pub fn write_scenario(scenario: &Scenario, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_stations(&scenario.stations, &dir.join("stations.geojson"))?;
    write_timetable(&scenario.timetable, &dir.join("timetable.csv"))?;

    let mut demand = String::from("station_id,hour,entries,exits\n");
    let first_hour = scenario.first_hour();
    for (si, s) in scenario.stations.iter().enumerate() {
        for (h, counts) in scenario.demand[si].iter().enumerate() {
            writeln!(
                demand,
                "{},{},{},{}",
                s.id,
                first_hour + h as u32,
                counts.entries,
                counts.exits
            )
            .unwrap();
        }
    }
    let demand_path = dir.join("demand.csv");
    fs::write(&demand_path, demand).map_err(|e| Error::io(&demand_path, e))?;

    let mut points = String::from("id,lat,lon,population\n");
    for p in &scenario.points {
        writeln!(points, "{},{},{},{}", p.id, p.location.lat, p.location.lon, p.population).unwrap();
    }
    let points_path = dir.join("points.csv");
    fs::write(&points_path, points).map_err(|e| Error::io(&points_path, e))?;

    let params_path = dir.join("params.txt");
    fs::write(&params_path, render_params(&scenario.params, scenario.window()))
        .map_err(|e| Error::io(&params_path, e))?;

    write_graph(&scenario.graph, &dir.join("nodes.csv"), &dir.join("edges.csv"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::synth::{synthesize_scenario, SynthParams};

    #[test]
    fn scenario_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let sc = synthesize_scenario(
            &SynthParams { stations_per_line: 4, points_per_station: 3, ..SynthParams::default() },
            11,
        )
        .unwrap();
        write_scenario(&sc, dir.path()).unwrap();
        let loaded = load_scenario(dir.path()).unwrap();
        assert_eq!(loaded.station_count(), sc.station_count());
        assert_eq!(loaded.points.len(), sc.points.len());
        assert_eq!(loaded.demand, sc.demand);
        assert_eq!(loaded.params, sc.params);
        assert_eq!(loaded.timetable.runs.len(), sc.timetable.runs.len());
        for (a, b) in loaded.points.iter().zip(&sc.points) {
            assert_eq!(a.station, b.station);
        }
    }

    #[test]
    fn unknown_station_in_demand_file_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let sc = synthesize_scenario(
            &SynthParams { stations_per_line: 3, points_per_station: 2, ..SynthParams::default() },
            3,
        )
        .unwrap();
        write_scenario(&sc, dir.path()).unwrap();
        let demand = dir.path().join("demand.csv");
        let mut text = fs::read_to_string(&demand).unwrap();
        text.push_str("999,9,10,10\n");
        fs::write(&demand, text).unwrap();
        let err = load_scenario(dir.path()).unwrap_err();
        assert!(err.to_string().contains("999"), "{err}");
    }

    #[test]
    fn zero_population_points_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let sc = synthesize_scenario(
            &SynthParams { stations_per_line: 3, points_per_station: 2, ..SynthParams::default() },
            3,
        )
        .unwrap();
        write_scenario(&sc, dir.path()).unwrap();
        let points = dir.path().join("points.csv");
        let mut text = fs::read_to_string(&points).unwrap();
        // 0.7 km north of the first station, unambiguously in its region
        let first = sc.stations[0].location;
        let frame = LocalFrame::new(first);
        let loc = frame.to_latlon(0.0, 0.7);
        text.push_str(&format!("9999,{},{},0\n", loc.lat, loc.lon));
        fs::write(&points, text).unwrap();
        let loaded = load_scenario(dir.path()).unwrap();
        assert!(loaded.points.iter().any(|p| p.id == 9999 && p.population == 0));
    }

    #[test]
    fn minimal_fixture_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(
            p.join("stations.geojson"),
            r#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":{"type":"Point","coordinates":[77.6,13.0]},"properties":{"id":1,"name":"A","line":0,"seq":0}},
                {"type":"Feature","geometry":{"type":"Point","coordinates":[77.65,13.0]},"properties":{"id":2,"name":"B","line":0,"seq":1}}]}"#,
        )
        .unwrap();
        fs::write(p.join("params.txt"), "totalFleet = 10\nperStationMin = 1\nperStationMax = 8\n").unwrap();
        fs::write(p.join("timetable.csv"), "run,station_id,arrival_min\n0,1,300\n0,2,305\n").unwrap();
        fs::write(p.join("demand.csv"), "station_id,hour,entries,exits\n1,9,50,40\n").unwrap();
        // one point ~1.1 km north of station A
        fs::write(p.join("points.csv"), "id,lat,lon,population\n1,13.01,77.6,200\n").unwrap();
        let sc = load_scenario(p).unwrap();
        assert_eq!(sc.points.len(), 1);
        assert_eq!(sc.points[0].station, 1);
        assert_eq!(sc.demand[0][4].entries, 50);
    }

    #[test]
    fn headway_file_alternative_builds_a_timetable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(
            p.join("stations.geojson"),
            r#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":{"type":"Point","coordinates":[77.6,13.0]},"properties":{"id":1,"name":"A","line":0,"seq":0}},
                {"type":"Feature","geometry":{"type":"Point","coordinates":[77.65,13.0]},"properties":{"id":2,"name":"B","line":0,"seq":1}}]}"#,
        )
        .unwrap();
        fs::write(
            p.join("params.txt"),
            "totalFleet = 10\nperStationMin = 1\nperStationMax = 8\nserviceStart = 300\nserviceEnd = 420\n",
        )
        .unwrap();
        fs::write(p.join("headways.csv"), "line,start_min,end_min,headway_min,inter_station_min\n0,300,420,30,4\n").unwrap();
        fs::write(p.join("demand.csv"), "station_id,hour,entries,exits\n1,5,10,10\n").unwrap();
        fs::write(p.join("points.csv"), "id,lat,lon,population\n1,13.01,77.6,200\n").unwrap();
        let sc = load_scenario(p).unwrap();
        // 4 dispatches per direction (300, 330, 360, 390), 2 directions
        assert_eq!(sc.timetable.runs.len(), 8);
        assert_eq!(sc.timetable.arrivals_at(2), vec![300.0, 304.0, 330.0, 334.0, 360.0, 364.0, 390.0, 394.0]);
    }

    #[test]
    fn non_positive_headway_is_a_load_error_naming_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        fs::write(
            p.join("stations.geojson"),
            r#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":{"type":"Point","coordinates":[77.6,13.0]},"properties":{"id":1,"name":"A","line":0,"seq":0}}]}"#,
        )
        .unwrap();
        fs::write(p.join("params.txt"), "totalFleet = 10\n").unwrap();
        fs::write(p.join("headways.csv"), "line,start_min,end_min,headway_min,inter_station_min\n0,300,420,0,4\n").unwrap();
        fs::write(p.join("demand.csv"), "station_id,hour,entries,exits\n").unwrap();
        fs::write(p.join("points.csv"), "id,lat,lon,population\n").unwrap();
        let err = load_scenario(p).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("headways.csv") && msg.contains("positive"), "{msg}");
    }
}
