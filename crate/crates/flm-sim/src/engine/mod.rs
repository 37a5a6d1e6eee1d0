//! The discrete-event core: event queue, per-station FIFO request queues,
//! vehicle pool accounting, and vehicle statechart transitions.
//!
//! One run is strictly single-threaded over a priority queue. Stations do not
//! interact (vehicles are zonal), so a run over any subset of stations yields
//! exactly the per-station results of a full run. Events at equal timestamps
//! are ordered by kind priority (train arrivals before request arrivals
//! before vehicle arrivals before dispatch before wait expiry before parking
//! sampling), then by schedule order, which makes every run deterministic.

pub mod output;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::allocator::Allocation;
use crate::demand::{self, DemandStream, Request, RequestKind};
use crate::error::{Error, Result};
use crate::network::{travel_time_min, DistanceOracle, NodeId};
use crate::scenario::Scenario;
use crate::sharing;

pub use output::{
    Outcome, ParkingSample, RequestRecord, SimOutput, TripKind, TripRecord, VehicleLeg,
    VehicleSummary,
};

/// Ride-sharing strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SharingMode {
    /// Solo trips only.
    None,
    /// Batched last-mile drop-offs (CVRP); first-mile trips stay solo.
    LastMile,
    /// First-mile FIFO insertion under the detour cap; last-mile stays solo.
    FirstMile,
    /// Both, plus one first-mile pickup on the return leg of a drop route.
    Joint,
}

impl SharingMode {
    pub const ALL: [SharingMode; 4] = [
        SharingMode::None,
        SharingMode::LastMile,
        SharingMode::FirstMile,
        SharingMode::Joint,
    ];

    fn lm_shared(self) -> bool {
        matches!(self, SharingMode::LastMile | SharingMode::Joint)
    }

    fn fm_shared(self) -> bool {
        matches!(self, SharingMode::FirstMile | SharingMode::Joint)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SharingMode::None => "none",
            SharingMode::LastMile => "lm",
            SharingMode::FirstMile => "fm",
            SharingMode::Joint => "joint",
        }
    }
}

impl std::str::FromStr for SharingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SharingMode::None),
            "lm" => Ok(SharingMode::LastMile),
            "fm" => Ok(SharingMode::FirstMile),
            "joint" => Ok(SharingMode::Joint),
            other => Err(Error::Config(format!(
                "unknown sharing mode {other:?} (expected none|lm|fm|joint)"
            ))),
        }
    }
}

/// Vehicle statechart states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleState {
    AtMetroStation,
    MovingToDestination,
    Offboarding,
    MovingToStation,
    MovingToOrigin,
    Pickup,
    MovingToStationFull,
    LmRequestsServed,
}

impl VehicleState {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleState::AtMetroStation => "AtMetroStation",
            VehicleState::MovingToDestination => "MovingToDestination",
            VehicleState::Offboarding => "Offboarding",
            VehicleState::MovingToStation => "MovingToStation",
            VehicleState::MovingToOrigin => "MovingToOrigin",
            VehicleState::Pickup => "Pickup",
            VehicleState::MovingToStationFull => "MovingToStationFull",
            VehicleState::LmRequestsServed => "LMRequestsServed",
        }
    }

    pub fn is_busy(self) -> bool {
        self != VehicleState::AtMetroStation
    }
}

impl std::str::FromStr for VehicleState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "AtMetroStation" => VehicleState::AtMetroStation,
            "MovingToDestination" => VehicleState::MovingToDestination,
            "Offboarding" => VehicleState::Offboarding,
            "MovingToStation" => VehicleState::MovingToStation,
            "MovingToOrigin" => VehicleState::MovingToOrigin,
            "Pickup" => VehicleState::Pickup,
            "MovingToStationFull" => VehicleState::MovingToStationFull,
            "LMRequestsServed" => VehicleState::LmRequestsServed,
            other => return Err(Error::Config(format!("unknown vehicle state {other:?}"))),
        })
    }
}

/// Options for non-default runs: restrict to a station subset (curve
/// estimation) or skip per-minute parking sampling.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Station ids to simulate; `None` means the whole scenario.
    pub stations: Option<Vec<u32>>,
    pub skip_parking_samples: bool,
}

/// Runs one seeded day of operations.
///
/// Deterministic for fixed `(scenario, allocation, mode, seed)`: every request
/// resolves as served or lost, and lost means it was not assigned a vehicle
/// within `maxWaitingTime` of its request time.
pub fn run(scenario: &Scenario, allocation: &Allocation, mode: SharingMode, seed: u64) -> Result<SimOutput> {
    run_with(scenario, allocation, mode, seed, &RunOptions::default())
}

pub fn run_with(
    scenario: &Scenario,
    allocation: &Allocation,
    mode: SharingMode,
    seed: u64,
    options: &RunOptions,
) -> Result<SimOutput> {
    let station_idxs = resolve_stations(scenario, options)?;
    let stream = demand::generate(scenario, seed, Some(&station_idxs));
    run_requests(scenario, allocation, mode, seed, stream, options)
}

/// Runs the engine over an externally supplied request stream. The stream
/// must reference stations and demand points of the scenario; last-mile
/// request times must be train arrival minutes.
pub fn run_requests(
    scenario: &Scenario,
    allocation: &Allocation,
    mode: SharingMode,
    seed: u64,
    stream: DemandStream,
    options: &RunOptions,
) -> Result<SimOutput> {
    let station_idxs = resolve_stations(scenario, options)?;
    let mut sim = Sim::new(scenario, allocation, mode, seed, stream, station_idxs, options)?;
    sim.run();
    Ok(sim.finish())
}

fn resolve_stations(scenario: &Scenario, options: &RunOptions) -> Result<Vec<usize>> {
    match &options.stations {
        None => Ok((0..scenario.station_count()).collect()),
        Some(ids) => {
            let mut idxs = Vec::with_capacity(ids.len());
            for id in ids {
                idxs.push(
                    scenario
                        .station_index(*id)
                        .ok_or_else(|| Error::Config(format!("unknown station {id} in run options")))?,
                );
            }
            idxs.sort_unstable();
            idxs.dedup();
            Ok(idxs)
        }
    }
}

// ---------------------------------------------------------------------------
// events
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum EventKind {
    /// A train reaches a station; its pre-sampled last-mile batch requests
    /// service.
    TrainArrival { station: usize, batch: Vec<usize> },
    FirstMileRequest { request: usize },
    VehicleArrived { vehicle: usize },
    RetryAssignment { station: usize },
    WaitExpiry { request: usize },
    SampleParking { minute: u32 },
}

impl EventKind {
    /// Tie-break priority at equal timestamps; lower fires first, so arrivals
    /// can be served before expiring.
    fn priority(&self) -> u8 {
        match self {
            EventKind::TrainArrival { .. } => 0,
            EventKind::FirstMileRequest { .. } => 1,
            EventKind::VehicleArrived { .. } => 2,
            EventKind::RetryAssignment { .. } => 3,
            EventKind::WaitExpiry { .. } => 4,
            EventKind::SampleParking { .. } => 5,
        }
    }
}

struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap and we pop the earliest event
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.priority().cmp(&self.kind.priority()))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// ---------------------------------------------------------------------------
// runtime state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Pending,
    /// Committed to a vehicle; the wait clock stopped at `wait_min`.
    Assigned,
    Served,
    Lost,
}

struct ReqState {
    phase: Phase,
    wait_min: f64,
    /// Minute the passenger's ride starts (vehicle departs with them).
    ride_start: f64,
    ride_min: f64,
    /// Projected station arrival, maintained for onboard first-mile riders.
    projected_arrival: f64,
    trip: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StopRole {
    Dropoff,
    Pickup,
}

#[derive(Debug, Clone, Copy)]
struct Stop {
    node: NodeId,
    role: StopRole,
    request: usize,
}

struct Vehicle {
    id: u32,
    station: usize,
    state: VehicleState,
    node: NodeId,
    /// Destination node and leg length while moving.
    pending: Option<(NodeId, f64)>,
    plan: VecDeque<Stop>,
    onboard: Vec<usize>,
    /// True on a joint-mode return leg, which allows at most one pickup.
    return_leg: bool,
    odometer_km: f64,
    busy_min: f64,
    seg_start: f64,
    trip: Option<OpenTrip>,
}

struct OpenTrip {
    /// Index of this trip's record in `Sim::trips`.
    record: usize,
    requests: Vec<usize>,
}

struct StationState {
    idx: usize,
    node: NodeId,
    idle: VecDeque<usize>,
    fm_queue: VecDeque<usize>,
    lm_queue: VecDeque<usize>,
    /// Lost counts by (hour offset, kind), monotone nondecreasing.
    lost: BTreeMap<(u32, RequestKind), u32>,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    oracle: &'a DistanceOracle,
    mode: SharingMode,
    seed: u64,
    requests: Vec<Request>,
    req_state: Vec<ReqState>,
    vehicles: Vec<Vehicle>,
    stations: Vec<StationState>,
    /// station idx -> position in `stations` (active stations only).
    station_slot: BTreeMap<usize, usize>,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    legs: Vec<VehicleLeg>,
    trips: Vec<TripRecord>,
    parking: Vec<ParkingSample>,
    warnings: demand::GenWarnings,
    last_event_time: f64,
    sample_parking: bool,
}

impl<'a> Sim<'a> {
    fn new(
        scenario: &'a Scenario,
        allocation: &Allocation,
        mode: SharingMode,
        seed: u64,
        stream: DemandStream,
        station_idxs: Vec<usize>,
        options: &RunOptions,
    ) -> Result<Self> {
        let window = scenario.window();
        let mut stations = Vec::with_capacity(station_idxs.len());
        let mut station_slot = BTreeMap::new();
        let mut vehicles = Vec::new();
        for &si in &station_idxs {
            let station = &scenario.stations[si];
            let supply = allocation.get(station.id).ok_or_else(|| {
                Error::Config(format!("allocation has no entry for station {}", station.id))
            })?;
            let node = scenario.station_node(si);
            let mut idle = VecDeque::with_capacity(supply as usize);
            for k in 0..supply {
                idle.push_back(vehicles.len());
                vehicles.push(Vehicle {
                    id: station.id * 1000 + k,
                    station: si,
                    state: VehicleState::AtMetroStation,
                    node,
                    pending: None,
                    plan: VecDeque::new(),
                    onboard: Vec::new(),
                    return_leg: false,
                    odometer_km: 0.0,
                    busy_min: 0.0,
                    seg_start: window.0,
                    trip: None,
                });
            }
            station_slot.insert(si, stations.len());
            stations.push(StationState {
                idx: si,
                node,
                idle,
                fm_queue: VecDeque::new(),
                lm_queue: VecDeque::new(),
                lost: BTreeMap::new(),
            });
        }
        for id in allocation.station_ids() {
            let si = scenario
                .station_index(id)
                .ok_or_else(|| Error::Config(format!("allocation references unknown station {id}")))?;
            if !station_slot.contains_key(&si) && options.stations.is_none() {
                // unreachable: all scenario stations are active in a full run
                return Err(Error::Config(format!("allocation station {id} not simulated")));
            }
        }

        let DemandStream { requests, warnings } = stream;
        let req_state = requests
            .iter()
            .map(|_| ReqState {
                phase: Phase::Pending,
                wait_min: 0.0,
                ride_start: 0.0,
                ride_min: 0.0,
                projected_arrival: 0.0,
                trip: usize::MAX,
            })
            .collect();

        let mut sim = Sim {
            scenario,
            oracle: scenario.oracle_ref(),
            mode,
            seed,
            requests,
            req_state,
            vehicles,
            stations,
            station_slot,
            queue: BinaryHeap::new(),
            seq: 0,
            now: window.0,
            legs: Vec::new(),
            trips: Vec::new(),
            parking: Vec::new(),
            warnings,
            last_event_time: window.0,
            sample_parking: !options.skip_parking_samples,
        };
        sim.seed_events()?;
        Ok(sim)
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Event { time, seq, kind });
    }

    fn seed_events(&mut self) -> Result<()> {
        // group last-mile requests by (station, arrival time) into train
        // arrival events; first-mile requests become individual events
        let mut batches: BTreeMap<(usize, u64), Vec<usize>> = BTreeMap::new();
        let mut fm_events: Vec<(f64, usize)> = Vec::new();
        for (ri, r) in self.requests.iter().enumerate() {
            if !self.station_slot.contains_key(&r.station_idx) {
                return Err(Error::Config(format!(
                    "request {} references station {} outside the simulated set",
                    r.id, r.station
                )));
            }
            match r.kind {
                RequestKind::LastMile => {
                    batches.entry((r.station_idx, r.time.to_bits())).or_default().push(ri);
                }
                RequestKind::FirstMile => fm_events.push((r.time, ri)),
            }
        }
        for (time, ri) in fm_events {
            self.push(time, EventKind::FirstMileRequest { request: ri });
        }
        let batch_list: Vec<(f64, usize, Vec<usize>)> = batches
            .into_iter()
            .map(|((si, bits), reqs)| (f64::from_bits(bits), si, reqs))
            .collect();
        for (time, station, batch) in batch_list {
            self.push(time, EventKind::TrainArrival { station, batch });
        }
        if self.sample_parking {
            let start = self.scenario.window().0 as u32;
            self.push(start as f64, EventKind::SampleParking { minute: start });
        }
        Ok(())
    }

    fn run(&mut self) {
        while let Some(event) = self.queue.pop() {
            debug_assert!(event.time >= self.now - 1e-9, "event queue went backwards");
            self.now = event.time;
            self.last_event_time = self.last_event_time.max(event.time);
            match event.kind {
                EventKind::TrainArrival { station, batch } => self.on_train_arrival(station, batch),
                EventKind::FirstMileRequest { request } => self.on_first_mile_request(request),
                EventKind::VehicleArrived { vehicle } => self.advance_vehicle(vehicle),
                EventKind::RetryAssignment { station } => self.dispatch_fifo(station),
                EventKind::WaitExpiry { request } => self.on_wait_expiry(request),
                EventKind::SampleParking { minute } => self.on_sample_parking(minute),
            }
        }
    }

    // -- request arrivals ---------------------------------------------------

    fn on_train_arrival(&mut self, station_idx: usize, batch: Vec<usize>) {
        let slot = self.station_slot[&station_idx];
        let expiry = self.scenario.params.max_waiting_time_min;
        for ri in batch {
            self.stations[slot].lm_queue.push_back(ri);
            self.push(self.requests[ri].time + expiry, EventKind::WaitExpiry { request: ri });
        }
        self.push(self.now, EventKind::RetryAssignment { station: station_idx });
    }

    fn on_first_mile_request(&mut self, ri: usize) {
        let station_idx = self.requests[ri].station_idx;
        let slot = self.station_slot[&station_idx];
        self.stations[slot].fm_queue.push_back(ri);
        let expiry = self.requests[ri].time + self.scenario.params.max_waiting_time_min;
        self.push(expiry, EventKind::WaitExpiry { request: ri });
        self.push(self.now, EventKind::RetryAssignment { station: station_idx });
    }

    fn on_wait_expiry(&mut self, ri: usize) {
        match self.req_state[ri].phase {
            Phase::Pending => {
                let r = &self.requests[ri];
                let slot = self.station_slot[&r.station_idx];
                let st = &mut self.stations[slot];
                match r.kind {
                    RequestKind::LastMile => st.lm_queue.retain(|&x| x != ri),
                    RequestKind::FirstMile => st.fm_queue.retain(|&x| x != ri),
                }
                let hour_offset = (r.time / 60.0).floor() as u32 - self.scenario.first_hour();
                *st.lost.entry((hour_offset, r.kind)).or_insert(0) += 1;
                let state = &mut self.req_state[ri];
                state.phase = Phase::Lost;
                state.wait_min = self.scenario.params.max_waiting_time_min;
            }
            Phase::Assigned | Phase::Served => {} // cancelled logically on assignment
            Phase::Lost => panic!("double wait expiry for request {}", self.requests[ri].id),
        }
    }

    fn on_sample_parking(&mut self, minute: u32) {
        for st in &self.stations {
            self.parking.push(ParkingSample {
                station: self.scenario.stations[st.idx].id,
                minute,
                idle: st.idle.len() as u32,
            });
        }
        let next = minute + 1;
        if (next as f64) < self.scenario.window().1 || !self.queue.is_empty() {
            self.push(next as f64, EventKind::SampleParking { minute: next });
        }
    }

    // -- dispatch -----------------------------------------------------------

    /// Pairs idle vehicles with queued requests in request-time order. In
    /// lm/joint modes the queued last-mile batch is handed to the CVRP solver
    /// before assignment. Requests at or beyond the waiting threshold are
    /// never assigned; their expiry event (same tick or later) marks them
    /// lost.
    fn dispatch_fifo(&mut self, station_idx: usize) {
        let slot = self.station_slot[&station_idx];
        loop {
            if self.stations[slot].idle.is_empty() {
                break;
            }
            let lm_head = self.fresh_head(slot, RequestKind::LastMile);
            let fm_head = self.fresh_head(slot, RequestKind::FirstMile);
            let pick = match (lm_head, fm_head) {
                (None, None) => break,
                (Some(l), None) => l,
                (None, Some(f)) => f,
                (Some(l), Some(f)) => {
                    let (tl, tf) = (self.requests[l].time, self.requests[f].time);
                    if tl < tf || (tl == tf && self.requests[l].id <= self.requests[f].id) {
                        l
                    } else {
                        f
                    }
                }
            };
            match self.requests[pick].kind {
                RequestKind::LastMile if self.mode.lm_shared() => self.dispatch_lm_batch(slot),
                RequestKind::LastMile => {
                    let vehicle = self.stations[slot].idle.pop_front().unwrap();
                    self.stations[slot].lm_queue.retain(|&x| x != pick);
                    self.start_lm_route(vehicle, vec![pick]);
                }
                RequestKind::FirstMile => {
                    let vehicle = self.stations[slot].idle.pop_front().unwrap();
                    self.stations[slot].fm_queue.retain(|&x| x != pick);
                    self.start_fm_trip(vehicle, pick);
                }
            }
        }
    }

    /// Oldest queued request of a kind that is still assignable (its age is
    /// strictly under the waiting threshold).
    fn fresh_head(&self, slot: usize, kind: RequestKind) -> Option<usize> {
        let q = match kind {
            RequestKind::LastMile => &self.stations[slot].lm_queue,
            RequestKind::FirstMile => &self.stations[slot].fm_queue,
        };
        let max_wait = self.scenario.params.max_waiting_time_min;
        q.iter().copied().find(|&ri| self.now - self.requests[ri].time < max_wait)
    }

    /// CVRP over every fresh queued last-mile request, capped at
    /// `idle * capacity` in request-time order; the overflow stays queued.
    fn dispatch_lm_batch(&mut self, slot: usize) {
        let params = &self.scenario.params;
        let max_wait = params.max_waiting_time_min;
        let capacity = params.vehicle_capacity as usize;
        let now = self.now;
        let fleet = self.stations[slot].idle.len();
        let fresh: Vec<usize> = self.stations[slot]
            .lm_queue
            .iter()
            .copied()
            .filter(|&ri| now - self.requests[ri].time < max_wait)
            .collect();
        debug_assert!(!fresh.is_empty());
        let batch: Vec<usize> = fresh.into_iter().take(fleet * capacity).collect();

        let station_node = self.stations[slot].node;
        let nodes: Vec<NodeId> = batch
            .iter()
            .map(|&ri| self.scenario.point_node(self.requests[ri].point_idx))
            .collect();
        let dist = |i: usize, j: usize| -> f64 {
            let a = if i == 0 { station_node } else { nodes[i - 1] };
            let b = if j == 0 { station_node } else { nodes[j - 1] };
            self.oracle.distance_km(a, b).expect("scenario graph is connected")
        };
        let solution = sharing::solve_cvrp(batch.len(), fleet, capacity, &dist);

        for route in &solution.routes {
            let vehicle = self.stations[slot].idle.pop_front().unwrap();
            let route_reqs: Vec<usize> = route.drops.iter().map(|&d| batch[d]).collect();
            for &ri in &route_reqs {
                self.stations[slot].lm_queue.retain(|&x| x != ri);
            }
            self.start_lm_route(vehicle, route_reqs);
        }
    }

    /// Boards a drop batch at the station and departs for the first drop.
    fn start_lm_route(&mut self, vi: usize, route: Vec<usize>) {
        debug_assert!(!route.is_empty());
        debug_assert!(route.len() <= self.scenario.params.vehicle_capacity as usize);
        let now = self.now;
        let trip_idx = self.trips.len();
        self.trips.push(TripRecord {
            vehicle: self.vehicles[vi].id,
            station: self.scenario.stations[self.vehicles[vi].station].id,
            t0: now,
            t1: now,
            passengers: route.len() as u32,
            kind: TripKind::LastMile,
        });
        for &ri in &route {
            let state = &mut self.req_state[ri];
            debug_assert_eq!(state.phase, Phase::Pending);
            state.phase = Phase::Assigned;
            state.wait_min = now - self.requests[ri].time;
            state.ride_start = now;
            state.trip = trip_idx;
            self.vehicles[vi].onboard.push(ri);
            self.vehicles[vi].plan.push_back(Stop {
                node: self.scenario.point_node(self.requests[ri].point_idx),
                role: StopRole::Dropoff,
                request: ri,
            });
        }
        self.vehicles[vi].trip = Some(OpenTrip { record: trip_idx, requests: route });
        let first = self.vehicles[vi].plan.front().unwrap().node;
        self.depart(vi, first, VehicleState::MovingToDestination);
    }

    /// Commits a first-mile request to a vehicle and heads to its origin.
    fn start_fm_trip(&mut self, vi: usize, ri: usize) {
        let now = self.now;
        let origin = self.scenario.point_node(self.requests[ri].point_idx);
        let station_node = self.stations[self.station_slot[&self.vehicles[vi].station]].node;
        let eta = now + self.leg_minutes(self.vehicles[vi].node, origin);
        let projected =
            eta + self.scenario.params.dwell_min + self.leg_minutes(origin, station_node);
        let state = &mut self.req_state[ri];
        debug_assert_eq!(state.phase, Phase::Pending);
        state.phase = Phase::Assigned;
        state.wait_min = now - self.requests[ri].time;
        state.projected_arrival = projected;
        self.vehicles[vi].plan.push_back(Stop { node: origin, role: StopRole::Pickup, request: ri });
        self.depart(vi, origin, VehicleState::MovingToOrigin);
    }

    // -- vehicle statechart -------------------------------------------------

    fn leg_minutes(&self, a: NodeId, b: NodeId) -> f64 {
        travel_time_min(
            self.oracle.distance_km(a, b).expect("scenario graph is connected"),
            self.scenario.params.vehicle_speed_kmh,
        )
    }

    /// Closes the current state segment and starts a driving leg.
    fn depart(&mut self, vi: usize, to: NodeId, state: VehicleState) {
        let km = self.oracle.distance_km(self.vehicles[vi].node, to).expect("connected");
        self.close_segment(vi, state);
        self.vehicles[vi].pending = Some((to, km));
        let tau = travel_time_min(km, self.scenario.params.vehicle_speed_kmh);
        self.push(self.now + tau, EventKind::VehicleArrived { vehicle: vi });
    }

    /// Closes the current state segment and starts a dwell.
    fn start_dwell(&mut self, vi: usize, state: VehicleState) {
        self.close_segment(vi, state);
        self.push(self.now + self.scenario.params.dwell_min, EventKind::VehicleArrived { vehicle: vi });
    }

    fn close_segment(&mut self, vi: usize, next: VehicleState) {
        let v = &mut self.vehicles[vi];
        let (t0, t1) = (v.seg_start, self.now);
        let km = match v.pending.take() {
            Some((node, km)) => {
                v.node = node;
                v.odometer_km += km;
                km
            }
            None => 0.0,
        };
        if t1 > t0 || km > 0.0 {
            self.legs.push(VehicleLeg {
                vehicle: v.id,
                t0,
                t1,
                state: v.state,
                km,
            });
        }
        if v.state.is_busy() {
            v.busy_min += t1 - t0;
        }
        v.state = next;
        v.seg_start = t1;
    }

    /// Fires the statechart edge matching the vehicle's current state when
    /// its pending leg (drive or dwell) completes.
    fn advance_vehicle(&mut self, vi: usize) {
        match self.vehicles[vi].state {
            VehicleState::MovingToDestination => {
                // reached a drop-off
                let stop = self.vehicles[vi].plan.pop_front().expect("drop stop");
                debug_assert_eq!(stop.role, StopRole::Dropoff);
                self.serve_dropoff(vi, stop.request);
                self.start_dwell(vi, VehicleState::Offboarding);
            }
            VehicleState::Offboarding => {
                if let Some(next) = self.vehicles[vi].plan.front().copied() {
                    debug_assert_eq!(next.role, StopRole::Dropoff);
                    self.depart(vi, next.node, VehicleState::MovingToDestination);
                } else {
                    self.after_last_dropoff(vi);
                }
            }
            VehicleState::MovingToOrigin => {
                // reached a first-mile origin; passenger boards during dwell
                let stop = self.vehicles[vi].plan.pop_front().expect("pickup stop");
                debug_assert_eq!(stop.role, StopRole::Pickup);
                self.board_first_mile(vi, stop.request);
                self.start_dwell(vi, VehicleState::Pickup);
            }
            VehicleState::Pickup => self.after_pickup(vi),
            VehicleState::MovingToStation | VehicleState::MovingToStationFull => {
                self.arrive_home(vi);
            }
            VehicleState::AtMetroStation | VehicleState::LmRequestsServed => {
                panic!(
                    "vehicle {} received an arrival event in state {:?}",
                    self.vehicles[vi].id, self.vehicles[vi].state
                );
            }
        }
    }

    fn serve_dropoff(&mut self, vi: usize, ri: usize) {
        let state = &mut self.req_state[ri];
        state.phase = Phase::Served;
        state.ride_min = self.now - state.ride_start;
        let v = &mut self.vehicles[vi];
        v.onboard.retain(|&x| x != ri);
        if v.onboard.is_empty() {
            // trip ends when the vehicle empties
            if let Some(trip) = v.trip.take() {
                let record = &mut self.trips[trip.record];
                record.t1 = self.now;
                record.passengers = trip.requests.len() as u32;
            }
        }
    }

    /// Joint-mode branch at the last drop: chain one first-mile pickup on the
    /// way home if the oldest feasible request exists, else return empty.
    fn after_last_dropoff(&mut self, vi: usize) {
        let slot = self.station_slot[&self.vehicles[vi].station];
        if self.mode == SharingMode::Joint {
            // pass through the decision state; it has zero duration, so the
            // closed segment is the preceding offboarding dwell
            self.close_segment(vi, VehicleState::LmRequestsServed);
            let queue: Vec<(f64, NodeId)> = self.stations[slot]
                .fm_queue
                .iter()
                .map(|&ri| {
                    (self.requests[ri].time, self.scenario.point_node(self.requests[ri].point_idx))
                })
                .collect();
            let choice = sharing::next_action_joint(
                self.now,
                self.vehicles[vi].node,
                &queue,
                &self.scenario.params,
                self.oracle,
            )
            .expect("connected graph");
            if let Some(pos) = choice {
                let ri = self.stations[slot].fm_queue[pos];
                self.stations[slot].fm_queue.retain(|&x| x != ri);
                self.vehicles[vi].return_leg = true;
                self.start_fm_trip(vi, ri);
                return;
            }
        }
        let home = self.stations[slot].node;
        self.depart(vi, home, VehicleState::MovingToStation);
    }

    fn board_first_mile(&mut self, vi: usize, ri: usize) {
        let now = self.now;
        if self.vehicles[vi].onboard.is_empty() {
            let record = self.trips.len();
            self.trips.push(TripRecord {
                vehicle: self.vehicles[vi].id,
                station: self.scenario.stations[self.vehicles[vi].station].id,
                t0: now,
                t1: now,
                passengers: 0,
                kind: TripKind::FirstMile,
            });
            self.vehicles[vi].trip = Some(OpenTrip { record, requests: Vec::new() });
        }
        self.vehicles[vi].onboard.push(ri);
        let trip = self.vehicles[vi].trip.as_mut().expect("open first-mile trip");
        trip.requests.push(ri);
        self.req_state[ri].trip = trip.record;
        // ride clock starts when boarding completes
        self.req_state[ri].ride_start = now + self.scenario.params.dwell_min;
    }

    /// First-mile branch after boarding: try a FIFO insertion (fm/joint
    /// modes, never on a joint return leg), else head home full.
    fn after_pickup(&mut self, vi: usize) {
        let slot = self.station_slot[&self.vehicles[vi].station];
        let station_node = self.stations[slot].node;
        let can_insert = self.mode.fm_shared()
            && !self.vehicles[vi].return_leg
            && self.vehicles[vi].onboard.len() < self.scenario.params.vehicle_capacity as usize;
        if can_insert {
            let onboard_projections: Vec<f64> = self.vehicles[vi]
                .onboard
                .iter()
                .map(|&r| self.req_state[r].projected_arrival)
                .collect();
            let queue: Vec<usize> = self.stations[slot].fm_queue.iter().copied().collect();
            for ri in queue {
                let origin = self.scenario.point_node(self.requests[ri].point_idx);
                let check = sharing::feasible_fm_insertion(
                    self.now,
                    self.vehicles[vi].node,
                    station_node,
                    &onboard_projections,
                    origin,
                    self.requests[ri].time,
                    &self.scenario.params,
                    self.oracle,
                )
                .expect("connected graph");
                if let Some(insertion) = check {
                    // commit: everyone now projects to the post-insertion arrival
                    self.stations[slot].fm_queue.retain(|&x| x != ri);
                    for &r in &self.vehicles[vi].onboard {
                        self.req_state[r].projected_arrival = insertion.station_arrival_min;
                    }
                    let state = &mut self.req_state[ri];
                    debug_assert_eq!(state.phase, Phase::Pending);
                    state.phase = Phase::Assigned;
                    state.wait_min = self.now - self.requests[ri].time;
                    state.projected_arrival = insertion.station_arrival_min;
                    self.vehicles[vi].plan.push_front(Stop {
                        node: origin,
                        role: StopRole::Pickup,
                        request: ri,
                    });
                    self.depart(vi, origin, VehicleState::MovingToOrigin);
                    return;
                }
            }
        }
        self.depart(vi, station_node, VehicleState::MovingToStationFull);
    }

    fn arrive_home(&mut self, vi: usize) {
        let slot = self.station_slot[&self.vehicles[vi].station];
        // offboard first-mile riders at the station
        let onboard = std::mem::take(&mut self.vehicles[vi].onboard);
        for &ri in &onboard {
            let state = &mut self.req_state[ri];
            state.phase = Phase::Served;
            state.ride_min = self.now - state.ride_start;
        }
        if let Some(trip) = self.vehicles[vi].trip.take() {
            debug_assert!(!onboard.is_empty());
            let record = &mut self.trips[trip.record];
            record.t1 = self.now;
            record.passengers = trip.requests.len() as u32;
        }
        self.vehicles[vi].return_leg = false;
        self.close_segment(vi, VehicleState::AtMetroStation);
        self.stations[slot].idle.push_back(vi);
        self.push(self.now, EventKind::RetryAssignment { station: self.vehicles[vi].station });
    }

    // -- output -------------------------------------------------------------

    fn finish(mut self) -> SimOutput {
        let window = self.scenario.window();
        let horizon_end = window.1.max(self.last_event_time);
        // close the final idle segment of every vehicle
        for vi in 0..self.vehicles.len() {
            debug_assert_eq!(self.vehicles[vi].state, VehicleState::AtMetroStation);
            debug_assert!(self.vehicles[vi].onboard.is_empty());
            self.now = horizon_end;
            self.close_segment(vi, VehicleState::AtMetroStation);
        }

        let mut records: Vec<RequestRecord> = Vec::with_capacity(self.requests.len());
        for (ri, r) in self.requests.iter().enumerate() {
            let state = &self.req_state[ri];
            let outcome = match state.phase {
                Phase::Served => Outcome::Served {
                    wait_min: state.wait_min,
                    ride_min: state.ride_min,
                    shared: self.trips[state.trip].passengers,
                },
                Phase::Lost => Outcome::Lost { wait_min: state.wait_min },
                Phase::Pending | Phase::Assigned => {
                    panic!("request {} did not resolve (phase {:?})", r.id, state.phase)
                }
            };
            records.push(RequestRecord {
                id: r.id,
                kind: r.kind,
                station: r.station,
                endpoint: self.scenario.points[r.point_idx].id,
                direct_km: self
                    .oracle
                    .distance_km(
                        self.scenario.station_node(r.station_idx),
                        self.scenario.point_node(r.point_idx),
                    )
                    .expect("connected"),
                t_request: r.time,
                outcome,
            });
        }
        records.sort_by(|a, b| a.station.cmp(&b.station).then(a.id.cmp(&b.id)));

        let vehicles: Vec<VehicleSummary> = self
            .vehicles
            .iter()
            .map(|v| VehicleSummary {
                vehicle: v.id,
                station: self.scenario.stations[v.station].id,
                odometer_km: v.odometer_km,
                busy_min: v.busy_min,
            })
            .collect();

        self.legs.sort_by(|a, b| {
            a.vehicle
                .cmp(&b.vehicle)
                .then(a.t0.total_cmp(&b.t0))
                .then(a.t1.total_cmp(&b.t1))
        });
        self.trips.sort_by(|a, b| {
            a.station
                .cmp(&b.station)
                .then(a.t0.total_cmp(&b.t0))
                .then(a.vehicle.cmp(&b.vehicle))
        });
        self.parking.sort_by_key(|p| (p.station, p.minute));

        let allocation: BTreeMap<u32, u32> = {
            let mut m: BTreeMap<u32, u32> = BTreeMap::new();
            for v in &vehicles {
                *m.entry(v.station).or_insert(0) += 1;
            }
            for st in &self.stations {
                m.entry(self.scenario.stations[st.idx].id).or_insert(0);
            }
            m
        };

        SimOutput {
            mode: self.mode,
            seed: self.seed,
            window,
            horizon_min: horizon_end - window.0,
            requests: records,
            legs: self.legs,
            vehicles,
            trips: self.trips,
            parking: self.parking,
            allocation,
            warnings: self.warnings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{GenWarnings, Request};
    use crate::geo::{LatLon, LocalFrame};
    use crate::network::RoadGraph;
    use crate::scenario::{
        DemandPoint, HeadwayProfile, LineRoute, ScenarioParams, Station, Timetable,
    };
    use std::sync::Arc;

    /// Path-graph world: station 1 at node 0, demand points at nodes 2..=5,
    /// 1 km edges. Vehicle speed 32 km/h makes every travel time dyadic
    /// (1.875 min per km), so event times are bit-exact in tests.
    fn line_scenario(total_fleet: u32) -> Scenario {
        let frame = LocalFrame::new(LatLon::new(13.0, 77.6));
        let locations: Vec<LatLon> = (0..=6).map(|i| frame.to_latlon(i as f64, 0.0)).collect();
        let edges: Vec<(u32, u32, f64)> = (0..6u32).map(|i| (i, i + 1, 1.0)).collect();
        let graph = RoadGraph::new(locations, &edges).unwrap();
        let station = Station {
            id: 1,
            name: "A".into(),
            location: frame.to_latlon(0.0, 0.0),
            line: 0,
            seq: 0,
        };
        let points: Vec<DemandPoint> = (2..=5)
            .map(|i| DemandPoint {
                id: i,
                location: frame.to_latlon(i as f64, 0.0),
                population: 100,
                station: 1,
                distance_km: i as f64,
            })
            .collect();
        let routes = [LineRoute {
            line: 0,
            stations: vec![1],
            travel_times_min: vec![],
            first_dispatch: 300.0,
        }];
        let headway = HeadwayProfile::constant((300.0, 1380.0), 60.0).unwrap();
        let timetable = crate::scenario::build_timetable(&routes, &headway, (300.0, 1380.0)).unwrap();
        let params = ScenarioParams {
            vehicle_speed_kmh: 32.0,
            total_fleet,
            per_station_min: 0,
            per_station_max: 60,
            ..ScenarioParams::default()
        };
        Scenario::new(vec![station], timetable, Arc::new(graph), points, vec![], params, 0).unwrap()
    }

    fn request(id: u64, kind: RequestKind, point: u32, time: f64) -> Request {
        Request {
            id,
            kind,
            station: 1,
            station_idx: 0,
            // demand points 2..=5 occupy indexes 0..=3
            point_idx: (point - 2) as usize,
            time,
        }
    }

    fn run_line(
        scenario: &Scenario,
        supply: u32,
        mode: SharingMode,
        requests: Vec<Request>,
    ) -> SimOutput {
        let stream = DemandStream { requests, warnings: GenWarnings::default() };
        run_requests(
            scenario,
            &Allocation::single(1, supply),
            mode,
            0,
            stream,
            &RunOptions::default(),
        )
        .unwrap()
    }

    fn leg_states(output: &SimOutput, vehicle: u32) -> Vec<VehicleState> {
        output
            .legs
            .iter()
            .filter(|l| l.vehicle == vehicle)
            .map(|l| l.state)
            .collect()
    }

    #[test]
    fn zero_demand_keeps_all_vehicles_parked() {
        let sc = line_scenario(4);
        let out = run_line(&sc, 3, SharingMode::None, vec![]);
        assert_eq!(out.generated(), 0);
        assert_eq!(out.horizon_min, 1080.0);
        for v in &out.vehicles {
            assert_eq!(v.busy_min, 0.0);
            assert_eq!(v.odometer_km, 0.0);
        }
        // constant parking series at the supply level
        assert!(out.parking.iter().all(|p| p.idle == 3));
        assert_eq!(out.parking.len(), 1080);
    }

    #[test]
    fn single_last_mile_trip_arithmetic() {
        // drop 2 km away at 21.2 km/h: ride 2/21.2*60, odometer 4 after return
        let frame = LocalFrame::new(LatLon::new(13.0, 77.6));
        let locations = vec![frame.to_latlon(0.0, 0.0), frame.to_latlon(2.0, 0.0)];
        let graph = RoadGraph::new(locations, &[(0, 1, 2.0)]).unwrap();
        let station = Station { id: 1, name: "A".into(), location: frame.to_latlon(0.0, 0.0), line: 0, seq: 0 };
        let point = DemandPoint {
            id: 7,
            location: frame.to_latlon(2.0, 0.0),
            population: 1,
            station: 1,
            distance_km: 2.0,
        };
        let timetable = Timetable { window: (300.0, 1380.0), runs: vec![] };
        let sc = Scenario::new(
            vec![station],
            timetable,
            Arc::new(graph),
            vec![point],
            vec![],
            ScenarioParams { per_station_min: 0, ..ScenarioParams::default() },
            0,
        )
        .unwrap();
        let stream = DemandStream {
            requests: vec![Request {
                id: 1,
                kind: RequestKind::LastMile,
                station: 1,
                station_idx: 0,
                point_idx: 0,
                time: 300.0,
            }],
            warnings: GenWarnings::default(),
        };
        let out = run_requests(
            &sc,
            &Allocation::single(1, 1),
            SharingMode::None,
            0,
            stream,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(out.served(), 1);
        match out.requests[0].outcome {
            Outcome::Served { wait_min, ride_min, shared } => {
                assert_eq!(wait_min, 0.0);
                assert!((ride_min - 2.0 / 21.2 * 60.0).abs() < 1e-12);
                assert_eq!(shared, 1);
            }
            _ => panic!("expected served"),
        }
        assert_eq!(out.vehicles[0].odometer_km, 4.0);
        // dispatch happens at the window start, so the zero-length initial
        // idle segment is elided
        assert_eq!(
            leg_states(&out, out.vehicles[0].vehicle),
            [
                VehicleState::MovingToDestination,
                VehicleState::Offboarding,
                VehicleState::MovingToStation,
                VehicleState::AtMetroStation,
            ]
        );
    }

    #[test]
    fn no_supply_loses_every_request_with_full_wait() {
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            0,
            SharingMode::None,
            vec![request(1, RequestKind::LastMile, 2, 300.0), request(2, RequestKind::FirstMile, 3, 310.0)],
        );
        assert_eq!(out.lost(), 2);
        for r in &out.requests {
            assert_eq!(r.outcome, Outcome::Lost { wait_min: 7.0 });
        }
    }

    #[test]
    fn fifo_dispatch_serves_in_request_order_and_third_expires() {
        // 2 idle vehicles, 3 solo last-mile requests; round trips take longer
        // than the waiting threshold, so the third request expires
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            2,
            SharingMode::None,
            vec![
                request(1, RequestKind::LastMile, 3, 300.0),
                request(2, RequestKind::LastMile, 4, 300.0),
                request(3, RequestKind::LastMile, 5, 300.0),
            ],
        );
        assert_eq!(out.served(), 2);
        assert_eq!(out.lost(), 1);
        let r3 = out.requests.iter().find(|r| r.id == 3).unwrap();
        assert_eq!(r3.outcome, Outcome::Lost { wait_min: 7.0 });
        // service start order follows request order (ids 1 then 2)
        let waits: Vec<f64> = out
            .requests
            .iter()
            .filter(|r| r.outcome.is_served())
            .map(|r| r.outcome.wait_min())
            .collect();
        assert_eq!(waits, vec![0.0, 0.0]);
    }

    #[test]
    fn request_at_age_just_under_threshold_is_assigned() {
        // vehicle busy until 308.0 (2 km drop: 3.75 out, 0.5 dwell, 3.75
        // back); a second request from 301.5 is 6.5 min old on its return
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            1,
            SharingMode::None,
            vec![
                request(1, RequestKind::LastMile, 2, 300.0),
                request(2, RequestKind::LastMile, 4, 301.5),
            ],
        );
        assert_eq!(out.served(), 2);
        let r2 = out.requests.iter().find(|r| r.id == 2).unwrap();
        match r2.outcome {
            Outcome::Served { wait_min, .. } => assert_eq!(wait_min, 6.5),
            _ => panic!("expected served"),
        }
    }

    #[test]
    fn request_at_age_exactly_threshold_is_lost_not_assigned() {
        // same setup, but the second request was made at 301.0: the vehicle
        // frees at exactly 308.0 when the request is exactly 7 minutes old
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            1,
            SharingMode::None,
            vec![
                request(1, RequestKind::LastMile, 2, 300.0),
                request(2, RequestKind::LastMile, 4, 301.0),
            ],
        );
        let r2 = out.requests.iter().find(|r| r.id == 2).unwrap();
        assert_eq!(r2.outcome, Outcome::Lost { wait_min: 7.0 });
    }

    #[test]
    fn expiry_after_assignment_is_a_no_op() {
        // request assigned at age 6.5 is picked up well after its expiry
        // event fires; it must still be served
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            1,
            SharingMode::None,
            vec![
                request(1, RequestKind::LastMile, 2, 300.0),
                request(2, RequestKind::FirstMile, 5, 301.5),
            ],
        );
        assert_eq!(out.served(), 2);
        let r2 = out.requests.iter().find(|r| r.id == 2).unwrap();
        match r2.outcome {
            Outcome::Served { wait_min, ride_min, .. } => {
                // assigned when the vehicle frees at 308.0, age 6.5; its
                // expiry event fires at 308.5 while it is being picked up
                assert_eq!(wait_min, 6.5);
                // 5 km at 1.875 min/km back to the station
                assert_eq!(ride_min, 9.375);
            }
            _ => panic!("expected served"),
        }
    }

    #[test]
    fn lm_share_routes_batch_in_line_order() {
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            1,
            SharingMode::LastMile,
            vec![
                request(1, RequestKind::LastMile, 2, 300.0),
                request(2, RequestKind::LastMile, 3, 300.0),
                request(3, RequestKind::LastMile, 4, 300.0),
            ],
        );
        assert_eq!(out.served(), 3);
        assert_eq!(out.trips.len(), 1);
        assert_eq!(out.trips[0].passengers, 3);
        assert_eq!(out.trips[0].kind, TripKind::LastMile);
        // one route out to the farthest drop and back: 8 km
        assert_eq!(out.vehicles[0].odometer_km, 8.0);
        // everyone reports a 3-passenger shared ride
        for r in &out.requests {
            match r.outcome {
                Outcome::Served { shared, .. } => assert_eq!(shared, 3),
                _ => panic!("expected served"),
            }
        }
    }

    #[test]
    fn fm_share_inserts_second_pickup_en_route() {
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            1,
            SharingMode::FirstMile,
            vec![
                request(1, RequestKind::FirstMile, 3, 300.0),
                request(2, RequestKind::FirstMile, 2, 303.0),
            ],
        );
        assert_eq!(out.served(), 2);
        assert_eq!(out.trips.len(), 1);
        assert_eq!(out.trips[0].passengers, 2);
        assert_eq!(out.trips[0].kind, TripKind::FirstMile);
        let states = leg_states(&out, out.vehicles[0].vehicle);
        assert_eq!(
            states,
            [
                VehicleState::MovingToOrigin,
                VehicleState::Pickup,
                VehicleState::MovingToOrigin,
                VehicleState::Pickup,
                VehicleState::MovingToStationFull,
                VehicleState::AtMetroStation,
            ]
        );
    }

    #[test]
    fn joint_mode_chains_return_leg_pickup() {
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            1,
            SharingMode::Joint,
            vec![
                request(1, RequestKind::LastMile, 4, 300.0),
                // requested at 305: pickup eta is 308 + 1.875, wait < 7
                request(2, RequestKind::FirstMile, 3, 305.0),
            ],
        );
        assert_eq!(out.served(), 2);
        let states = leg_states(&out, out.vehicles[0].vehicle);
        assert_eq!(
            states,
            [
                VehicleState::MovingToDestination,
                VehicleState::Offboarding,
                VehicleState::MovingToOrigin,
                VehicleState::Pickup,
                VehicleState::MovingToStationFull,
                VehicleState::AtMetroStation,
            ]
        );
        // two trips: the drop leg and the chained pickup leg
        assert_eq!(out.trips.len(), 2);
        assert_eq!(out.trips[0].kind, TripKind::LastMile);
        assert_eq!(out.trips[1].kind, TripKind::FirstMile);
    }

    #[test]
    fn joint_return_pickup_respects_wait_threshold() {
        let sc = line_scenario(4);
        let out = run_line(
            &sc,
            1,
            SharingMode::Joint,
            vec![
                request(1, RequestKind::LastMile, 4, 300.0),
                // pickup eta would be 309.875, 7.375 min after the request
                request(2, RequestKind::FirstMile, 3, 302.5),
            ],
        );
        let states = leg_states(&out, out.vehicles[0].vehicle);
        // vehicle returns empty; the stale request expires
        assert!(states.contains(&VehicleState::MovingToStation));
        let r2 = out.requests.iter().find(|r| r.id == 2).unwrap();
        assert_eq!(r2.outcome, Outcome::Lost { wait_min: 7.0 });
    }

    #[test]
    fn full_run_equals_union_of_single_station_runs() {
        use crate::scenario::synth::{synthesize_scenario, SynthParams};
        let sc = synthesize_scenario(
            &SynthParams { stations_per_line: 4, points_per_station: 3, ..SynthParams::default() },
            21,
        )
        .unwrap();
        let alloc = Allocation::uniform(&sc, 2);
        let full = run(&sc, &alloc, SharingMode::Joint, 99).unwrap();
        for s in &sc.stations {
            let solo = run_with(
                &sc,
                &alloc,
                SharingMode::Joint,
                99,
                &RunOptions { stations: Some(vec![s.id]), skip_parking_samples: true },
            )
            .unwrap();
            let full_requests: Vec<&RequestRecord> =
                full.requests.iter().filter(|r| r.station == s.id).collect();
            assert_eq!(full_requests.len(), solo.requests.len());
            for (a, b) in full_requests.iter().zip(&solo.requests) {
                assert_eq!(a.id, b.id);
                assert_eq!(a.outcome, b.outcome, "request {}", a.id);
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        use crate::scenario::synth::{synthesize_scenario, SynthParams};
        let sc = synthesize_scenario(
            &SynthParams { stations_per_line: 5, points_per_station: 4, ..SynthParams::default() },
            3,
        )
        .unwrap();
        let alloc = Allocation::uniform(&sc, 3);
        let a = run(&sc, &alloc, SharingMode::Joint, 7).unwrap();
        let b = run(&sc, &alloc, SharingMode::Joint, 7).unwrap();
        assert_eq!(a.requests, b.requests);
        assert_eq!(a.legs, b.legs);
        assert_eq!(a.trips, b.trips);
        assert_eq!(a.parking, b.parking);
        // conservation, thresholds, capacity, odometer agreement
        crate::analytics::validate_output(&a, sc.params.max_waiting_time_min, sc.params.vehicle_capacity);
    }

    #[test]
    fn allocation_station_mismatch_is_a_config_error() {
        let sc = line_scenario(4);
        let err = run(&sc, &Allocation::single(99, 3), SharingMode::None, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
