//! Performance indicators derived from a run: lost-demand matrices,
//! utilization, parking occupancy, shareability, vehicle-km, and the two
//! pricing models.
//!
//! Pure post-processing over [`SimOutput`]; safe to run concurrently over
//! independent outputs. Every value in [`Report`] is a deterministic function
//! of the exported CSVs, so an independent recount over the files reproduces
//! it exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demand::RequestKind;
use crate::engine::{Outcome, SimOutput};
use crate::error::{Error, Result};
use crate::scenario::{FareParams, Scenario, StationId};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LostCell {
    pub generated: u32,
    pub lost: u32,
    /// `lost / generated` as a percentage; 0 for empty cells.
    pub pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LostMatrix {
    pub stations: Vec<StationId>,
    /// Hours of day covered by the service window (e.g. 5..=22).
    pub hours: Vec<u32>,
    /// `cells[station][hour]` in the above orders.
    pub cells: Vec<Vec<LostCell>>,
    pub station_totals: Vec<LostCell>,
    pub hour_totals: Vec<LostCell>,
    pub total: LostCell,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StationUtilization {
    pub station: StationId,
    pub vehicles: u32,
    /// Mean over the station's vehicles of busy-time / horizon.
    pub mean_busy_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParkingStats {
    pub station: StationId,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SharingRow {
    pub station: StationId,
    /// Trips carrying exactly 1, 2, and 3 passengers.
    pub trips_by_passengers: [u32; 3],
    pub total_trips: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VehicleKm {
    /// Sum of vehicle odometers.
    pub actual_km: f64,
    /// Every served request as a solo out-and-back trip.
    pub single_ride_km: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProfitRow {
    pub station: StationId,
    pub served: u32,
    pub revenue: f64,
    pub operating_cost: f64,
    pub profit: f64,
    /// Profit divided by the station's vehicle count (0 when unstaffed).
    pub profit_per_vehicle: f64,
}

/// Every reported indicator of one run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub generated: u32,
    pub served: u32,
    pub lost: u32,
    pub lost_pct: f64,
    pub lost_matrix: LostMatrix,
    pub utilization: Vec<StationUtilization>,
    pub parking: Vec<ParkingStats>,
    pub sharing: Vec<SharingRow>,
    pub vehicle_km: VehicleKm,
    pub profit_distance: Vec<ProfitRow>,
    pub profit_trip: Vec<ProfitRow>,
}

fn pct(lost: u32, generated: u32) -> f64 {
    if generated == 0 {
        0.0
    } else {
        lost as f64 / generated as f64 * 100.0
    }
}

/// Station-by-hour lost-demand counts and percentages with marginals.
pub fn lost_demand_matrix(output: &SimOutput) -> LostMatrix {
    let stations: Vec<StationId> = output.allocation.keys().copied().collect();
    let first_hour = (output.window.0 / 60.0).floor() as u32;
    let n_hours = ((output.window.1 / 60.0).ceil() as u32 - first_hour) as usize;
    let hours: Vec<u32> = (0..n_hours as u32).map(|h| first_hour + h).collect();
    let index: BTreeMap<StationId, usize> =
        stations.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    let mut gen = vec![vec![0u32; n_hours]; stations.len()];
    let mut lost = vec![vec![0u32; n_hours]; stations.len()];
    for r in &output.requests {
        let si = index[&r.station];
        let h = ((r.t_request / 60.0).floor() as u32 - first_hour) as usize;
        gen[si][h] += 1;
        if !r.outcome.is_served() {
            lost[si][h] += 1;
        }
    }

    let cells: Vec<Vec<LostCell>> = gen
        .iter()
        .zip(&lost)
        .map(|(gr, lr)| {
            gr.iter()
                .zip(lr)
                .map(|(&g, &l)| LostCell { generated: g, lost: l, pct: pct(l, g) })
                .collect()
        })
        .collect();
    let station_totals: Vec<LostCell> = cells
        .iter()
        .map(|row| {
            let g = row.iter().map(|c| c.generated).sum();
            let l = row.iter().map(|c| c.lost).sum();
            LostCell { generated: g, lost: l, pct: pct(l, g) }
        })
        .collect();
    let hour_totals: Vec<LostCell> = (0..n_hours)
        .map(|h| {
            let g = cells.iter().map(|row| row[h].generated).sum();
            let l = cells.iter().map(|row| row[h].lost).sum();
            LostCell { generated: g, lost: l, pct: pct(l, g) }
        })
        .collect();
    let g = station_totals.iter().map(|c| c.generated).sum();
    let l = station_totals.iter().map(|c| c.lost).sum();
    LostMatrix {
        stations,
        hours,
        cells,
        station_totals,
        hour_totals,
        total: LostCell { generated: g, lost: l, pct: pct(l, g) },
    }
}

/// Mean busy fraction per station: busy-time / horizon per vehicle, averaged
/// over the station's vehicles. Busy means any state other than parked at
/// the station.
pub fn utilization(output: &SimOutput) -> Vec<StationUtilization> {
    let mut by_station: BTreeMap<StationId, (u32, f64)> = output
        .allocation
        .keys()
        .map(|&s| (s, (0u32, 0.0f64)))
        .collect();
    for v in &output.vehicles {
        let entry = by_station.get_mut(&v.station).expect("vehicle station");
        entry.0 += 1;
        entry.1 += v.busy_min / output.horizon_min;
    }
    by_station
        .into_iter()
        .map(|(station, (n, sum))| StationUtilization {
            station,
            vehicles: n,
            mean_busy_fraction: if n == 0 { 0.0 } else { sum / n as f64 },
        })
        .collect()
}

/// Linear-interpolation quantile (R type 7) over a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box statistics of the per-minute idle-vehicle counts per station.
pub fn parking_series(output: &SimOutput) -> Vec<ParkingStats> {
    let mut by_station: BTreeMap<StationId, Vec<f64>> = BTreeMap::new();
    for p in &output.parking {
        by_station.entry(p.station).or_default().push(p.idle as f64);
    }
    by_station
        .into_iter()
        .map(|(station, mut xs)| {
            xs.sort_by(|a, b| a.total_cmp(b));
            ParkingStats {
                station,
                min: xs[0],
                q1: quantile(&xs, 0.25),
                median: quantile(&xs, 0.5),
                q3: quantile(&xs, 0.75),
                max: xs[xs.len() - 1],
            }
        })
        .collect()
}

/// Counts of 1-, 2-, and 3-passenger trips per station. A trip is a
/// passenger-serving segment between two instants where the vehicle is empty;
/// first- and last-mile legs count separately.
pub fn sharing_distribution(output: &SimOutput) -> Vec<SharingRow> {
    let mut by_station: BTreeMap<StationId, [u32; 3]> =
        output.allocation.keys().map(|&s| (s, [0; 3])).collect();
    for t in &output.trips {
        let bucket = (t.passengers.clamp(1, 3) - 1) as usize;
        by_station.get_mut(&t.station).expect("trip station")[bucket] += 1;
    }
    by_station
        .into_iter()
        .map(|(station, trips_by_passengers)| SharingRow {
            station,
            trips_by_passengers,
            total_trips: trips_by_passengers.iter().sum(),
        })
        .collect()
}

/// Total vehicle-km and the single-ride counterfactual: each served request
/// as an out-and-back solo trip over its direct distance.
pub fn vehicle_km(output: &SimOutput) -> VehicleKm {
    let actual_km = output.vehicles.iter().map(|v| v.odometer_km).fold(0.0, |a, b| a + b);
    let single_ride_km = output
        .requests
        .iter()
        .filter(|r| r.outcome.is_served())
        .map(|r| 2.0 * r.direct_km)
        .fold(0.0, |a, b| a + b);
    VehicleKm { actual_km, single_ride_km }
}

/// Distance-based fare for one served request.
pub fn distance_fare(direct_km: f64, fares: &FareParams) -> f64 {
    fares.base_fare + fares.per_km_rate * (direct_km - fares.base_distance_km).max(0.0)
}

fn profit_rows(output: &SimOutput, fares: &FareParams, fare_of: impl Fn(f64) -> f64) -> Vec<ProfitRow> {
    let mut revenue: BTreeMap<StationId, (u32, f64)> =
        output.allocation.keys().map(|&s| (s, (0, 0.0))).collect();
    for r in &output.requests {
        if r.outcome.is_served() {
            let e = revenue.get_mut(&r.station).expect("request station");
            e.0 += 1;
            e.1 += fare_of(r.direct_km);
        }
    }
    let mut cost: BTreeMap<StationId, f64> = output.allocation.keys().map(|&s| (s, 0.0)).collect();
    for v in &output.vehicles {
        *cost.get_mut(&v.station).unwrap() +=
            v.odometer_km * (fares.fuel_price_per_litre / fares.mileage_km_per_litre)
                + fares.fixed_cost_per_vehicle_day;
    }
    revenue
        .into_iter()
        .map(|(station, (served, rev))| {
            let c = cost[&station];
            let x = output.allocation[&station];
            ProfitRow {
                station,
                served,
                revenue: rev,
                operating_cost: c,
                profit: rev - c,
                profit_per_vehicle: if x == 0 { 0.0 } else { (rev - c) / x as f64 },
            }
        })
        .collect()
}

/// Per-station profit under threshold distance pricing: a base fare up to the
/// base distance, a per-km rate beyond, costs `odometer * fuel/mileage` plus
/// a fixed cost per vehicle.
pub fn profit_distance(output: &SimOutput, fares: &FareParams) -> Vec<ProfitRow> {
    profit_rows(output, fares, |km| distance_fare(km, fares))
}

/// Per-station profit when every served request pays the flat fare.
pub fn profit_trip(output: &SimOutput, fares: &FareParams) -> Vec<ProfitRow> {
    profit_rows(output, fares, |_| fares.flat_fare)
}

fn mean_profit_per_vehicle(rows: &[ProfitRow], allocation: &BTreeMap<StationId, u32>) -> f64 {
    let vehicles: u32 = allocation.values().sum();
    if vehicles == 0 {
        return 0.0;
    }
    rows.iter().map(|r| r.profit).fold(0.0, |a, b| a + b) / vehicles as f64
}

/// The flat fare at which the trip-based model's fleet-wide mean profit per
/// vehicle equals the distance-based model's, found by bisection (profit is
/// monotone increasing in the fare). `None` when nothing was served.
pub fn equivalent_flat_fare(output: &SimOutput, fares: &FareParams) -> Option<f64> {
    let served = output.requests.iter().filter(|r| r.outcome.is_served()).count();
    if served == 0 {
        return None;
    }
    let target = mean_profit_per_vehicle(&profit_distance(output, fares), &output.allocation);
    let profit_at = |fare: f64| {
        let f = FareParams { flat_fare: fare, ..fares.clone() };
        mean_profit_per_vehicle(&profit_trip(output, &f), &output.allocation)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while profit_at(hi) < target {
        hi *= 2.0;
        if hi > 1e9 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if profit_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Builds the full report of one run.
pub fn build_report(output: &SimOutput, fares: &FareParams) -> Report {
    let matrix = lost_demand_matrix(output);
    let (generated, served, lost) =
        (matrix.total.generated, matrix.total.generated - matrix.total.lost, matrix.total.lost);
    Report {
        generated,
        served,
        lost,
        lost_pct: matrix.total.pct,
        lost_matrix: matrix,
        utilization: utilization(output),
        parking: parking_series(output),
        sharing: sharing_distribution(output),
        vehicle_km: vehicle_km(output),
        profit_distance: profit_distance(output, fares),
        profit_trip: profit_trip(output, fares),
    }
}

// ---------------------------------------------------------------------------
// report.json + plot CSVs
// ---------------------------------------------------------------------------

pub fn write_report_json(report: &Report, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serialization");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
}

/// Writes the plot-ready CSV set next to `report.json`.
pub fn write_plot_csvs(report: &Report, dir: &Path) -> Result<()> {
    let m = &report.lost_matrix;
    let mut lost_matrix = String::from("station,hour,generated,lost,pct\n");
    for (si, &station) in m.stations.iter().enumerate() {
        for (hi, &hour) in m.hours.iter().enumerate() {
            let c = &m.cells[si][hi];
            writeln!(lost_matrix, "{},{},{},{},{}", station, hour, c.generated, c.lost, c.pct).unwrap();
        }
    }
    write_file(dir, "lost_matrix.csv", &lost_matrix)?;

    let mut by_station = String::from("station,generated,lost,pct\n");
    for (si, &station) in m.stations.iter().enumerate() {
        let c = &m.station_totals[si];
        writeln!(by_station, "{},{},{},{}", station, c.generated, c.lost, c.pct).unwrap();
    }
    write_file(dir, "lost_by_station.csv", &by_station)?;

    let mut by_hour = String::from("hour,generated,lost,pct\n");
    for (hi, &hour) in m.hours.iter().enumerate() {
        let c = &m.hour_totals[hi];
        writeln!(by_hour, "{},{},{},{}", hour, c.generated, c.lost, c.pct).unwrap();
    }
    write_file(dir, "lost_by_hour.csv", &by_hour)?;

    let mut util = String::from("station,vehicles,mean_busy_fraction\n");
    for u in &report.utilization {
        writeln!(util, "{},{},{}", u.station, u.vehicles, u.mean_busy_fraction).unwrap();
    }
    write_file(dir, "utilization.csv", &util)?;

    let mut parking = String::from("station,min,q1,median,q3,max\n");
    for p in &report.parking {
        writeln!(parking, "{},{},{},{},{},{}", p.station, p.min, p.q1, p.median, p.q3, p.max).unwrap();
    }
    write_file(dir, "parking_box.csv", &parking)?;

    let mut sharing = String::from("station,trips_1,trips_2,trips_3,total\n");
    for s in &report.sharing {
        writeln!(
            sharing,
            "{},{},{},{},{}",
            s.station,
            s.trips_by_passengers[0],
            s.trips_by_passengers[1],
            s.trips_by_passengers[2],
            s.total_trips
        )
        .unwrap();
    }
    write_file(dir, "sharing_hist.csv", &sharing)?;

    let km = &report.vehicle_km;
    let savings = if km.single_ride_km > 0.0 {
        (1.0 - km.actual_km / km.single_ride_km) * 100.0
    } else {
        0.0
    };
    write_file(
        dir,
        "vehicle_km.csv",
        &format!("actual_km,single_ride_km,savings_pct\n{},{},{}\n", km.actual_km, km.single_ride_km, savings),
    )?;

    let mut profit = String::from("station,model,served,revenue,operating_cost,profit,profit_per_vehicle\n");
    for (model, rows) in [("distance", &report.profit_distance), ("trip", &report.profit_trip)] {
        for r in rows {
            writeln!(
                profit,
                "{},{},{},{},{},{},{}",
                r.station, model, r.served, r.revenue, r.operating_cost, r.profit, r.profit_per_vehicle
            )
            .unwrap();
        }
    }
    write_file(dir, "profit.csv", &profit)?;
    Ok(())
}

/// Lost-request endpoint locations (for map-style plots).
pub fn write_lost_locations(output: &SimOutput, scenario: &Scenario, dir: &Path) -> Result<()> {
    let points: BTreeMap<u32, (f64, f64)> = scenario
        .points
        .iter()
        .map(|p| (p.id, (p.location.lat, p.location.lon)))
        .collect();
    let mut out = String::from("kind,lat,lon\n");
    for r in &output.requests {
        if !r.outcome.is_served() {
            if let Some(&(lat, lon)) = points.get(&r.endpoint) {
                writeln!(out, "{},{},{}", r.kind.as_str(), lat, lon).unwrap();
            }
        }
    }
    write_file(dir, "lost_locations.csv", &out)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| Error::io(&path, e))
}

/// Consistency assertions over a finished run: conservation, wait-time
/// thresholds, capacity, odometer-vs-legs agreement. Panics on violation.
pub fn validate_output(output: &SimOutput, max_waiting_min: f64, capacity: u32) {
    // conservation per station and kind
    let mut per_station: BTreeMap<(StationId, RequestKind), (usize, usize)> = BTreeMap::new();
    for r in &output.requests {
        let e = per_station.entry((r.station, r.kind)).or_insert((0, 0));
        e.0 += 1;
        if !r.outcome.is_served() {
            e.1 += 1;
        }
        match r.outcome {
            Outcome::Served { wait_min, .. } => {
                assert!(wait_min < max_waiting_min, "served request {} waited {wait_min}", r.id)
            }
            Outcome::Lost { wait_min } => {
                assert!(wait_min == max_waiting_min, "lost request {} has wait {wait_min}", r.id)
            }
        }
    }
    assert_eq!(
        output.requests.len(),
        output.served() + output.lost(),
        "served + lost must equal generated"
    );

    // trips never exceed capacity
    for t in &output.trips {
        assert!(t.passengers >= 1 && t.passengers <= capacity, "trip with {} passengers", t.passengers);
    }

    // odometer equals the summed leg distances; busy time equals non-idle leg time
    let mut km: BTreeMap<u32, f64> = BTreeMap::new();
    let mut busy: BTreeMap<u32, f64> = BTreeMap::new();
    for l in &output.legs {
        *km.entry(l.vehicle).or_insert(0.0) += l.km;
        if l.state.is_busy() {
            *busy.entry(l.vehicle).or_insert(0.0) += l.t1 - l.t0;
        }
    }
    for v in &output.vehicles {
        let leg_km = km.get(&v.vehicle).copied().unwrap_or(0.0);
        assert!(
            (leg_km - v.odometer_km).abs() < 1e-6,
            "vehicle {} odometer {} vs legs {}",
            v.vehicle,
            v.odometer_km,
            leg_km
        );
        let leg_busy = busy.get(&v.vehicle).copied().unwrap_or(0.0);
        assert!((leg_busy - v.busy_min).abs() < 1e-6);
        assert!(v.busy_min <= output.horizon_min + 1e-9);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_fare_thresholds() {
        let fares = FareParams::default();
        assert_eq!(distance_fare(1.5, &fares), 30.0);
        assert_eq!(distance_fare(5.0, &fares), 30.0 + 15.0 * 3.0);
        assert_eq!(distance_fare(2.0, &fares), 30.0);
    }

    #[test]
    fn operating_cost_formula() {
        // 50 km at 25 km/l and 100/l plus fixed 102 -> 302
        let fares = FareParams::default();
        let cost = 50.0 * (fares.fuel_price_per_litre / fares.mileage_km_per_litre)
            + fares.fixed_cost_per_vehicle_day;
        assert_eq!(cost, 302.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
    }
}
