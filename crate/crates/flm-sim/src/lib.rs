//! Seeded agent/event-based simulator of first- and last-mile (FLM) feeder
//! vehicle fleets operating around a rail transit network.
//!
//! The crate models a day of feeder operations: trains arrive at stations on a
//! timetable, alighting passengers request last-mile rides, and first-mile
//! passengers request rides from nearby locations to the station. Each station
//! owns a fixed pool of vehicles that serve only its own catchment (the
//! station's Voronoi region). Requests not boarded within a waiting-time
//! threshold count as lost demand.
//!
//! On top of the simulator sit:
//!
//! - four ride-sharing strategies ([`engine::SharingMode`]): solo trips,
//!   batched last-mile routing (CVRP), first-mile FIFO insertion with a detour
//!   cap, and the joint strategy that chains a first-mile pickup onto the
//!   return leg of a last-mile route;
//! - a fleet-allocation optimizer ([`allocator`]) that estimates per-station
//!   lost-demand curves by simulation and solves the resulting
//!   piecewise-linear program exactly by dynamic programming, with an adaptive
//!   break-point refinement that cuts the number of simulations;
//! - analytics ([`analytics`]) for lost-demand matrices, vehicle utilization,
//!   parking occupancy, trip shareability, vehicle-km, and pricing/profit
//!   models.
//!
//! Every run is deterministic for a fixed seed: demand, dispatch, routing, and
//! file outputs are all reproducible byte for byte. See the `examples/`
//! directory for runnable walkthroughs of each capability and the `flm-sim`
//! binary for the file-based experiment front end.

pub mod allocator;
pub mod analytics;
pub mod cli;
pub mod demand;
pub mod engine;
pub mod error;
pub mod geo;
pub mod network;
pub mod rng;
pub mod scenario;
pub mod sharing;

pub use error::{Error, Result};
pub use scenario::{Scenario, ScenarioParams};
