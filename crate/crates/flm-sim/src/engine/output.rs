//! Simulation results and their CSV exports.
//!
//! Exports:
//! - `requests.csv` — `id,kind,station,t_request,outcome,wait_min,ride_min,shared_n`
//! - `vehicle_legs.csv` — `vehicle,t0,t1,state,km`
//! - `parking.csv` — `station,minute,idle_count`
//! - `trips.csv` — `vehicle,station,t0,t1,passengers,kind`
//! - `request_endpoints.csv` — `id,endpoint,direct_km`
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a CSV back yields bit-identical values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SharingMode, VehicleState};
use crate::demand::{GenWarnings, RequestKind};
use crate::error::{Error, Result};
use crate::scenario::StationId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Served { wait_min: f64, ride_min: f64, shared: u32 },
    Lost { wait_min: f64 },
}

impl Outcome {
    pub fn is_served(&self) -> bool {
        matches!(self, Outcome::Served { .. })
    }

    pub fn wait_min(&self) -> f64 {
        match *self {
            Outcome::Served { wait_min, .. } | Outcome::Lost { wait_min } => wait_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub id: u64,
    pub kind: RequestKind,
    pub station: StationId,
    /// Demand point id of the off-station endpoint.
    pub endpoint: u32,
    /// Shortest-path distance station <-> endpoint, km.
    pub direct_km: f64,
    pub t_request: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleLeg {
    pub vehicle: u32,
    pub t0: f64,
    pub t1: f64,
    pub state: VehicleState,
    pub km: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSummary {
    pub vehicle: u32,
    pub station: StationId,
    pub odometer_km: f64,
    pub busy_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripKind {
    FirstMile,
    LastMile,
}

impl TripKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TripKind::FirstMile => "fm",
            TripKind::LastMile => "lm",
        }
    }
}

/// A passenger-serving segment between two instants where the vehicle is
/// empty. First- and last-mile legs of one excursion count separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub vehicle: u32,
    pub station: StationId,
    pub t0: f64,
    pub t1: f64,
    pub passengers: u32,
    pub kind: TripKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParkingSample {
    pub station: StationId,
    pub minute: u32,
    pub idle: u32,
}

/// Everything one seeded run produced.
#[derive(Debug)]
pub struct SimOutput {
    pub mode: SharingMode,
    pub seed: u64,
    pub window: (f64, f64),
    /// Minutes from window start until the last vehicle returned (at least
    /// the window length).
    pub horizon_min: f64,
    /// Sorted by (station, id).
    pub requests: Vec<RequestRecord>,
    /// Sorted by (vehicle, t0); covers each vehicle's full horizon.
    pub legs: Vec<VehicleLeg>,
    pub vehicles: Vec<VehicleSummary>,
    pub trips: Vec<TripRecord>,
    pub parking: Vec<ParkingSample>,
    /// Vehicles per simulated station.
    pub allocation: BTreeMap<StationId, u32>,
    pub warnings: GenWarnings,
}

impl SimOutput {
    pub fn generated(&self) -> usize {
        self.requests.len()
    }

    pub fn served(&self) -> usize {
        self.requests.iter().filter(|r| r.outcome.is_served()).count()
    }

    pub fn lost(&self) -> usize {
        self.requests.len() - self.served()
    }

    pub fn lost_of_station(&self, station: StationId) -> usize {
        self.requests
            .iter()
            .filter(|r| r.station == station && !r.outcome.is_served())
            .count()
    }

    /// Writes all export CSVs into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_requests(&dir.join("requests.csv"))?;
        self.write_legs(&dir.join("vehicle_legs.csv"))?;
        self.write_parking(&dir.join("parking.csv"))?;
        self.write_trips(&dir.join("trips.csv"))?;
        self.write_endpoints(&dir.join("request_endpoints.csv"))?;
        Ok(())
    }

    fn write_requests(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id,kind,station,t_request,outcome,wait_min,ride_min,shared_n\n");
        for r in &self.requests {
            match r.outcome {
                Outcome::Served { wait_min, ride_min, shared } => writeln!(
                    out,
                    "{},{},{},{},served,{},{},{}",
                    r.id,
                    r.kind.as_str(),
                    r.station,
                    r.t_request,
                    wait_min,
                    ride_min,
                    shared
                )
                .unwrap(),
                Outcome::Lost { wait_min } => writeln!(
                    out,
                    "{},{},{},{},lost,{},,",
                    r.id,
                    r.kind.as_str(),
                    r.station,
                    r.t_request,
                    wait_min
                )
                .unwrap(),
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    fn write_legs(&self, path: &Path) -> Result<()> {
        let mut out = String::from("vehicle,t0,t1,state,km\n");
        for l in &self.legs {
            writeln!(out, "{},{},{},{},{}", l.vehicle, l.t0, l.t1, l.state.as_str(), l.km).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    fn write_parking(&self, path: &Path) -> Result<()> {
        let mut out = String::from("station,minute,idle_count\n");
        for p in &self.parking {
            writeln!(out, "{},{},{}", p.station, p.minute, p.idle).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    fn write_trips(&self, path: &Path) -> Result<()> {
        let mut out = String::from("vehicle,station,t0,t1,passengers,kind\n");
        for t in &self.trips {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                t.vehicle,
                t.station,
                t.t0,
                t.t1,
                t.passengers,
                t.kind.as_str()
            )
            .unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    fn write_endpoints(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id,endpoint,direct_km\n");
        for r in &self.requests {
            writeln!(out, "{},{},{}", r.id, r.endpoint, r.direct_km).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

impl SimOutput {
    /// Reconstructs a run from its exported CSVs. Vehicle summaries are
    /// rebuilt from the legs (vehicle ids encode `station * 1000 + index`),
    /// so reports regenerated from files match the originals exactly.
    pub fn read_dir(
        dir: &Path,
        scenario: &crate::scenario::Scenario,
        mode: SharingMode,
        seed: u64,
    ) -> Result<SimOutput> {
        let mut requests = read_requests(&dir.join("requests.csv"))?;
        read_endpoints_into(&dir.join("request_endpoints.csv"), &mut requests)?;
        let legs = read_legs(&dir.join("vehicle_legs.csv"))?;
        let parking = read_parking(&dir.join("parking.csv"))?;
        let trips = read_trips(&dir.join("trips.csv"))?;

        let window = scenario.window();
        let mut horizon_end = window.1;
        let mut summary: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        for l in &legs {
            let e = summary.entry(l.vehicle).or_insert((0.0, 0.0));
            e.0 += l.km;
            if l.state.is_busy() {
                e.1 += l.t1 - l.t0;
            }
            horizon_end = horizon_end.max(l.t1);
        }
        let vehicles: Vec<VehicleSummary> = summary
            .into_iter()
            .map(|(vehicle, (odometer_km, busy_min))| VehicleSummary {
                vehicle,
                station: vehicle / 1000,
                odometer_km,
                busy_min,
            })
            .collect();
        let mut allocation: BTreeMap<StationId, u32> =
            scenario.stations.iter().map(|s| (s.id, 0)).collect();
        for v in &vehicles {
            *allocation.entry(v.station).or_insert(0) += 1;
        }
        Ok(SimOutput {
            mode,
            seed,
            window,
            horizon_min: horizon_end - window.0,
            requests,
            legs,
            vehicles,
            trips,
            parking,
            allocation,
            warnings: GenWarnings::default(),
        })
    }
}

// ---------------------------------------------------------------------------
// readers (report regeneration, recount checks)
// ---------------------------------------------------------------------------

use crate::scenario::files::{csv_rows, parse_field, split_fields};

pub fn read_requests(path: &Path) -> Result<Vec<RequestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in csv_rows(&text) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(Error::parse(&file, lineno, format!("expected 8 fields, found {}", f.len())));
        }
        let id: u64 = parse_field(f[0], "id", &file, lineno)?;
        let kind: RequestKind = f[1]
            .parse()
            .map_err(|_| Error::parse(&file, lineno, format!("invalid kind {:?}", f[1])))?;
        let station: u32 = parse_field(f[2], "station", &file, lineno)?;
        let t_request: f64 = parse_field(f[3], "t_request", &file, lineno)?;
        let wait_min: f64 = parse_field(f[5], "wait_min", &file, lineno)?;
        let outcome = match f[4] {
            "served" => Outcome::Served {
                wait_min,
                ride_min: parse_field(f[6], "ride_min", &file, lineno)?,
                shared: parse_field(f[7], "shared_n", &file, lineno)?,
            },
            "lost" => Outcome::Lost { wait_min },
            other => return Err(Error::parse(&file, lineno, format!("invalid outcome {other:?}"))),
        };
        out.push(RequestRecord {
            id,
            kind,
            station,
            endpoint: 0,
            direct_km: 0.0,
            t_request,
            outcome,
        });
    }
    Ok(out)
}

/// Reads `request_endpoints.csv` and fills `endpoint`/`direct_km` in place.
pub fn read_endpoints_into(path: &Path, records: &mut [RequestRecord]) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut by_id: BTreeMap<u64, (u32, f64)> = BTreeMap::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 3, &file, lineno)?;
        by_id.insert(
            parse_field(f[0], "id", &file, lineno)?,
            (
                parse_field(f[1], "endpoint", &file, lineno)?,
                parse_field(f[2], "direct_km", &file, lineno)?,
            ),
        );
    }
    for r in records {
        if let Some(&(endpoint, km)) = by_id.get(&r.id) {
            r.endpoint = endpoint;
            r.direct_km = km;
        }
    }
    Ok(())
}

pub fn read_legs(path: &Path) -> Result<Vec<VehicleLeg>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 5, &file, lineno)?;
        out.push(VehicleLeg {
            vehicle: parse_field(f[0], "vehicle", &file, lineno)?,
            t0: parse_field(f[1], "t0", &file, lineno)?,
            t1: parse_field(f[2], "t1", &file, lineno)?,
            state: f[3]
                .parse()
                .map_err(|_| Error::parse(&file, lineno, format!("invalid state {:?}", f[3])))?,
            km: parse_field(f[4], "km", &file, lineno)?,
        });
    }
    Ok(out)
}

pub fn read_parking(path: &Path) -> Result<Vec<ParkingSample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 3, &file, lineno)?;
        out.push(ParkingSample {
            station: parse_field(f[0], "station", &file, lineno)?,
            minute: parse_field(f[1], "minute", &file, lineno)?,
            idle: parse_field(f[2], "idle_count", &file, lineno)?,
        });
    }
    Ok(out)
}

pub fn read_trips(path: &Path) -> Result<Vec<TripRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 6, &file, lineno)?;
        let kind = match f[5] {
            "fm" => TripKind::FirstMile,
            "lm" => TripKind::LastMile,
            other => return Err(Error::parse(&file, lineno, format!("invalid trip kind {other:?}"))),
        };
        out.push(TripRecord {
            vehicle: parse_field(f[0], "vehicle", &file, lineno)?,
            station: parse_field(f[1], "station", &file, lineno)?,
            t0: parse_field(f[2], "t0", &file, lineno)?,
            t1: parse_field(f[3], "t1", &file, lineno)?,
            passengers: parse_field(f[4], "passengers", &file, lineno)?,
            kind,
        });
    }
    Ok(out)
}
