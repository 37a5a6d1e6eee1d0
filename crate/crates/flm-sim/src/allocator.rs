//! Fleet allocation: per-station lost-demand curves estimated by simulation,
//! an exact piecewise-linear solver, adaptive break-point refinement, and the
//! two reference baselines (demand-proportional and equal supply).
//!
//! Stations do not interact, so the total expected lost demand separates by
//! station and each station's curve is estimated by simulating just that
//! station's subsystem. The solver minimizes the summed piecewise-linear
//! interpolants over integer per-station supplies under a total-fleet budget,
//! exactly, by multiple-choice-knapsack dynamic programming.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::engine::{self, RunOptions, SharingMode};
use crate::error::{Error, Result};
use crate::rng::replication_seed;
use crate::scenario::{Scenario, StationId};

/// Integer vehicle count per station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    counts: BTreeMap<StationId, u32>,
}

impl Allocation {
    pub fn new(counts: BTreeMap<StationId, u32>) -> Self {
        Allocation { counts }
    }

    pub fn single(station: StationId, supply: u32) -> Self {
        Allocation { counts: BTreeMap::from([(station, supply)]) }
    }

    /// Uniform supply at every station of the scenario.
    pub fn uniform(scenario: &Scenario, supply: u32) -> Self {
        Allocation {
            counts: scenario.stations.iter().map(|s| (s.id, supply)).collect(),
        }
    }

    pub fn get(&self, station: StationId) -> Option<u32> {
        self.counts.get(&station).copied()
    }

    pub fn station_ids(&self) -> impl Iterator<Item = StationId> + '_ {
        self.counts.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StationId, u32)> + '_ {
        self.counts.iter().map(|(&s, &x)| (s, x))
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// One estimated point of a lost-demand curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub supply: u32,
    pub mean_lost: f64,
    pub stderr: f64,
    pub reps: u32,
}

/// Per-station map from supply break points to estimated expected lost
/// demand. Break points are strictly increasing; values are replication means
/// recorded as-is (noise may make them non-monotone).
#[derive(Debug, Clone, PartialEq)]
pub struct LostDemandCurve {
    pub station: StationId,
    pub points: Vec<CurvePoint>,
}

impl LostDemandCurve {
    pub fn new(station: StationId, mut points: Vec<CurvePoint>) -> Result<Self> {
        points.sort_by_key(|p| p.supply);
        if points.len() < 2 {
            return Err(Error::Config(format!("curve for station {station} needs at least 2 break points")));
        }
        for w in points.windows(2) {
            if w[0].supply == w[1].supply {
                return Err(Error::Config(format!(
                    "curve for station {station} has duplicate break point {}",
                    w[0].supply
                )));
            }
        }
        if points.iter().any(|p| p.mean_lost < 0.0) {
            return Err(Error::Config(format!("curve for station {station} has negative values")));
        }
        Ok(LostDemandCurve { station, points })
    }

    pub fn supply_bounds(&self) -> (u32, u32) {
        (self.points[0].supply, self.points[self.points.len() - 1].supply)
    }

    /// Piecewise-linear interpolation at an integer supply within bounds.
    pub fn value_at(&self, x: u32) -> f64 {
        let (lo, hi) = self.supply_bounds();
        assert!(x >= lo && x <= hi, "supply {x} outside curve bounds [{lo}, {hi}]");
        match self.points.binary_search_by_key(&x, |p| p.supply) {
            Ok(i) => self.points[i].mean_lost,
            Err(i) => {
                let a = &self.points[i - 1];
                let b = &self.points[i];
                let t = (x - a.supply) as f64 / (b.supply - a.supply) as f64;
                a.mean_lost + (b.mean_lost - a.mean_lost) * t
            }
        }
    }
}

// ---------------------------------------------------------------------------
// curve estimation by single-station simulation
// ---------------------------------------------------------------------------

/// Lost requests at one station under one supply, averaged over replications
/// with distinct derived seeds. Replication `r` uses the same seed at every
/// (station, supply), so curves share common random numbers.
pub fn estimate_point(
    scenario: &Scenario,
    station: StationId,
    supply: u32,
    replications: u32,
    mode: SharingMode,
    master_seed: u64,
) -> Result<CurvePoint> {
    assert!(replications >= 1);
    let options = RunOptions {
        stations: Some(vec![station]),
        skip_parking_samples: true,
    };
    let alloc = Allocation::single(station, supply);
    let mut losses = Vec::with_capacity(replications as usize);
    for rep in 0..replications {
        let output = engine::run_with(scenario, &alloc, mode, replication_seed(master_seed, rep), &options)?;
        losses.push(output.lost() as f64);
    }
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let stderr = if losses.len() > 1 {
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(CurvePoint { supply, mean_lost: mean, stderr, reps: replications })
}

/// Full curve of one station over the given break points.
pub fn estimate_curve(
    scenario: &Scenario,
    station: StationId,
    break_points: &[u32],
    replications: u32,
    mode: SharingMode,
    master_seed: u64,
) -> Result<LostDemandCurve> {
    let points = break_points
        .iter()
        .map(|&bp| estimate_point(scenario, station, bp, replications, mode, master_seed))
        .collect::<Result<Vec<_>>>()?;
    LostDemandCurve::new(station, points)
}

/// Curves for all stations over a common grid, fanned across the current
/// rayon pool. Results are merged in (station, supply) order, so the outcome
/// is identical for any worker count.
pub fn estimate_curves(
    scenario: &Scenario,
    grid: &[u32],
    replications: u32,
    mode: SharingMode,
    master_seed: u64,
) -> Result<Vec<LostDemandCurve>> {
    let tasks: Vec<(StationId, u32)> = scenario
        .stations
        .iter()
        .flat_map(|s| grid.iter().map(move |&bp| (s.id, bp)))
        .collect();
    let points: Vec<Result<CurvePoint>> = tasks
        .par_iter()
        .map(|&(station, bp)| estimate_point(scenario, station, bp, replications, mode, master_seed))
        .collect();
    let mut by_station: BTreeMap<StationId, Vec<CurvePoint>> = BTreeMap::new();
    for ((station, _), point) in tasks.iter().zip(points) {
        by_station.entry(*station).or_default().push(point?);
    }
    by_station
        .into_iter()
        .map(|(station, pts)| LostDemandCurve::new(station, pts))
        .collect()
}

// ---------------------------------------------------------------------------
// exact solve (multiple-choice knapsack DP)
// ---------------------------------------------------------------------------

/// Minimizes the summed interpolated lost demand over integer supplies
/// `x_s` in each curve's bounds with `sum x_s <= a_total`. Exact optimum;
/// ties break toward smaller total supply, then the lexicographically
/// smallest allocation in station order.
pub fn solve_allocation(curves: &[LostDemandCurve], a_total: u32) -> Result<(Allocation, f64)> {
    if curves.is_empty() {
        return Err(Error::Config("solve_allocation needs at least one curve".into()));
    }
    let n = curves.len();
    let bounds: Vec<(u32, u32)> = curves.iter().map(|c| c.supply_bounds()).collect();
    let min_total: u32 = bounds.iter().map(|b| b.0).sum();
    if min_total > a_total {
        return Err(Error::Infeasible(format!(
            "per-station minimums sum to {min_total}, exceeding the total fleet {a_total}"
        )));
    }
    let budget = a_total.min(bounds.iter().map(|b| b.1).sum::<u32>()) as usize;

    // value[i][b]: best (objective, supply used) for stations i.. given b
    // vehicles; objective sums right-associated so reconstruction and
    // brute-force checks can reproduce it bit for bit
    const INF: (f64, u32) = (f64::INFINITY, u32::MAX);
    let mut value = vec![vec![INF; budget + 1]; n + 1];
    for b in 0..=budget {
        value[n][b] = (0.0, 0);
    }
    for i in (0..n).rev() {
        let (lo, hi) = bounds[i];
        for b in 0..=budget {
            let mut best = INF;
            for x in lo..=hi.min(b as u32) {
                let tail = value[i + 1][b - x as usize];
                if tail.0.is_infinite() {
                    continue;
                }
                let cand = (curves[i].value_at(x) + tail.0, x + tail.1);
                if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    best = cand;
                }
            }
            value[i][b] = best;
        }
    }

    let (objective, used) = value[0][budget];
    if objective.is_infinite() {
        return Err(Error::Infeasible("no feasible allocation".into()));
    }

    // forward reconstruction: smallest x_s at each station that attains the
    // optimal (objective, supply) pair; the next target is the tail pair
    // itself, so the comparisons stay bit-exact
    let mut counts = BTreeMap::new();
    let mut b = budget;
    let mut target = (objective, used);
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let mut chosen = None;
        for x in lo..=hi.min(b as u32) {
            let tail = value[i + 1][b - x as usize];
            if tail.0.is_infinite() {
                continue;
            }
            if curves[i].value_at(x) + tail.0 == target.0 && x + tail.1 == target.1 {
                chosen = Some((x, tail));
                break;
            }
        }
        let (x, tail) = chosen.expect("DP reconstruction");
        counts.insert(curves[i].station, x);
        b -= x as usize;
        target = tail;
    }

    Ok((Allocation::new(counts), objective))
}

// ---------------------------------------------------------------------------
// adaptive break-point refinement
// ---------------------------------------------------------------------------

/// Source of curve points for the adaptive loop; implemented by the
/// simulation-backed source and by synthetic test curves.
pub trait CurveSource {
    fn estimate(&mut self, station: StationId, supply: u32) -> Result<CurvePoint>;

    /// Batched estimation; implementations may parallelize. Results must be
    /// in input order.
    fn estimate_batch(&mut self, points: &[(StationId, u32)]) -> Result<Vec<CurvePoint>> {
        points.iter().map(|&(s, x)| self.estimate(s, x)).collect()
    }
}

/// Simulation-backed curve source with memoized points.
pub struct SimCurveSource<'a> {
    pub scenario: &'a Scenario,
    pub mode: SharingMode,
    pub replications: u32,
    pub master_seed: u64,
    cache: BTreeMap<(StationId, u32), CurvePoint>,
}

impl<'a> SimCurveSource<'a> {
    pub fn new(scenario: &'a Scenario, mode: SharingMode, replications: u32, master_seed: u64) -> Self {
        SimCurveSource { scenario, mode, replications, master_seed, cache: BTreeMap::new() }
    }
}

impl CurveSource for SimCurveSource<'_> {
    fn estimate(&mut self, station: StationId, supply: u32) -> Result<CurvePoint> {
        if let Some(p) = self.cache.get(&(station, supply)) {
            return Ok(*p);
        }
        let p = estimate_point(self.scenario, station, supply, self.replications, self.mode, self.master_seed)?;
        self.cache.insert((station, supply), p);
        Ok(p)
    }

    fn estimate_batch(&mut self, points: &[(StationId, u32)]) -> Result<Vec<CurvePoint>> {
        let missing: Vec<(StationId, u32)> = points
            .iter()
            .copied()
            .filter(|k| !self.cache.contains_key(k))
            .collect();
        let computed: Vec<Result<CurvePoint>> = missing
            .par_iter()
            .map(|&(s, x)| estimate_point(self.scenario, s, x, self.replications, self.mode, self.master_seed))
            .collect();
        for (key, point) in missing.iter().zip(computed) {
            self.cache.insert(*key, point?);
        }
        Ok(points.iter().map(|k| self.cache[k]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveResult {
    pub allocation: Allocation,
    pub objective: f64,
    pub curves: Vec<LostDemandCurve>,
    /// (station, break point) estimations performed.
    pub simulations: u32,
    /// What the full grid would have cost, for comparison.
    pub full_grid_simulations: u32,
    pub rounds: u32,
}

/// Iteratively refined allocation: solve on the current curves, then explore
/// the fine-grid points bracketing each station's optimum (its immediate
/// neighbours when the optimum sits on an explored break point). Stops when
/// every station's optimum has both adjacent fine-grid points explored.
///
/// `coarse` must include `bounds.0` and `bounds.1`. The fine grid steps by
/// `fine_step` from the lower bound, always including the upper bound.
pub fn adaptive_allocate(
    source: &mut dyn CurveSource,
    stations: &[StationId],
    a_total: u32,
    bounds: (u32, u32),
    fine_step: u32,
    coarse: &[u32],
) -> Result<AdaptiveResult> {
    let (lo, hi) = bounds;
    assert!(lo < hi && fine_step >= 1);
    let mut fine: Vec<u32> = (lo..=hi).step_by(fine_step as usize).collect();
    if *fine.last().unwrap() != hi {
        fine.push(hi);
    }
    if !(coarse.contains(&lo) && coarse.contains(&hi)) {
        return Err(Error::Config("coarse grid must include both supply bounds".into()));
    }
    for c in coarse {
        if !fine.contains(c) {
            return Err(Error::Config(format!("coarse point {c} is not on the fine grid")));
        }
    }

    let mut explored: BTreeMap<StationId, BTreeMap<u32, CurvePoint>> =
        stations.iter().map(|&s| (s, BTreeMap::new())).collect();
    let initial: Vec<(StationId, u32)> = stations
        .iter()
        .flat_map(|&s| coarse.iter().map(move |&x| (s, x)))
        .collect();
    let mut simulations = 0u32;
    for ((s, x), p) in initial.iter().zip(source.estimate_batch(&initial)?) {
        explored.get_mut(s).unwrap().insert(*x, p);
        simulations += 1;
    }

    let mut rounds = 0u32;
    loop {
        rounds += 1;
        let curves: Vec<LostDemandCurve> = explored
            .iter()
            .map(|(&s, pts)| LostDemandCurve::new(s, pts.values().copied().collect()))
            .collect::<Result<Vec<_>>>()?;
        let (allocation, objective) = solve_allocation(&curves, a_total)?;

        let mut new_points: Vec<(StationId, u32)> = Vec::new();
        for &s in stations {
            let x = allocation.get(s).unwrap();
            let station_points = &explored[&s];
            // fine-grid brackets of the optimum (the point itself when on-grid)
            let lo_bracket = fine.iter().copied().filter(|&f| f <= x).max().unwrap();
            let hi_bracket = fine.iter().copied().filter(|&f| f >= x).min().unwrap();
            let mut want = vec![lo_bracket, hi_bracket];
            if station_points.contains_key(&lo_bracket) && station_points.contains_key(&hi_bracket) {
                // optimum is pinned between explored points; when it sits on
                // a break point, its immediate fine-grid neighbours must be
                // explored too before stopping
                if lo_bracket == hi_bracket {
                    let pos = fine.iter().position(|&f| f == x).unwrap();
                    if pos > 0 {
                        want.push(fine[pos - 1]);
                    }
                    if pos + 1 < fine.len() {
                        want.push(fine[pos + 1]);
                    }
                }
            }
            for w in want {
                if !station_points.contains_key(&w) && !new_points.contains(&(s, w)) {
                    new_points.push((s, w));
                }
            }
        }

        if new_points.is_empty() {
            return Ok(AdaptiveResult {
                allocation,
                objective,
                curves,
                simulations,
                full_grid_simulations: (stations.len() * fine.len()) as u32,
                rounds,
            });
        }
        new_points.sort_unstable();
        for ((s, x), p) in new_points.iter().zip(source.estimate_batch(&new_points)?) {
            explored.get_mut(s).unwrap().insert(*x, p);
            simulations += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

/// Supply proportional to per-station demand with largest-remainder rounding;
/// vehicles clipped at `cap` are redistributed among the uncapped stations
/// until the whole fleet is assigned.
pub fn baseline_proportional(
    demands: &[(StationId, f64)],
    a_total: u32,
    cap: u32,
) -> Result<Allocation> {
    if demands.iter().any(|&(_, d)| d < 0.0) || demands.iter().all(|&(_, d)| d == 0.0) {
        return Err(Error::Config("demands must be non-negative and not all zero".into()));
    }
    if a_total as u64 > cap as u64 * demands.len() as u64 {
        return Err(Error::Infeasible(format!(
            "cannot place {a_total} vehicles with cap {cap} over {} stations",
            demands.len()
        )));
    }
    let mut counts: BTreeMap<StationId, u32> = demands.iter().map(|&(s, _)| (s, 0)).collect();
    let mut open: Vec<(StationId, f64)> = demands.to_vec();
    let mut remaining = a_total;
    while remaining > 0 && !open.is_empty() {
        let total_demand: f64 = open.iter().map(|&(_, d)| d).sum();
        if total_demand == 0.0 {
            // residual demand exhausted: spread the leftover equally
            let each = remaining / open.len() as u32;
            let extra = (remaining % open.len() as u32) as usize;
            for (i, &(s, _)) in open.iter().enumerate() {
                let add = each + u32::from(i < extra);
                counts.insert(s, (counts[&s] + add).min(cap));
            }
            break;
        }
        // largest-remainder apportionment of the remaining fleet
        let shares: Vec<f64> = open
            .iter()
            .map(|&(_, d)| remaining as f64 * d / total_demand)
            .collect();
        let mut grant: Vec<u32> = shares.iter().map(|&s| s.floor() as u32).collect();
        let mut leftover = remaining - grant.iter().sum::<u32>();
        let mut order: Vec<usize> = (0..open.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = shares[a] - shares[a].floor();
            let fb = shares[b] - shares[b].floor();
            fb.total_cmp(&fa).then(open[a].0.cmp(&open[b].0))
        });
        for &i in &order {
            if leftover == 0 {
                break;
            }
            grant[i] += 1;
            leftover -= 1;
        }
        // clip at the cap and redistribute the excess in the next round
        let mut next_open = Vec::new();
        remaining = 0;
        for (i, &(s, d)) in open.iter().enumerate() {
            let have = counts[&s];
            let target = have + grant[i];
            if target >= cap {
                counts.insert(s, cap);
                remaining += target - cap;
            } else {
                counts.insert(s, target);
                next_open.push((s, d));
            }
        }
        if next_open.len() == open.len() && remaining == 0 {
            break;
        }
        open = next_open;
    }
    Ok(Allocation::new(counts))
}

/// Equal split; the remainder goes to the lowest-index stations.
pub fn baseline_equal(a_total: u32, stations: &[StationId]) -> Allocation {
    assert!(!stations.is_empty());
    let n = stations.len() as u32;
    let each = a_total / n;
    let remainder = (a_total % n) as usize;
    let mut sorted = stations.to_vec();
    sorted.sort_unstable();
    Allocation::new(
        sorted
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, each + u32::from(i < remainder)))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

pub fn write_curves(curves: &[LostDemandCurve], path: &Path) -> Result<()> {
    let mut out = String::from("station_id,supply,mean_lost,stderr,reps\n");
    for c in curves {
        for p in &c.points {
            writeln!(out, "{},{},{},{},{}", c.station, p.supply, p.mean_lost, p.stderr, p.reps).unwrap();
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_curves(path: &Path) -> Result<Vec<LostDemandCurve>> {
    use crate::scenario::files::{csv_rows, parse_field, split_fields};
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut by_station: BTreeMap<StationId, Vec<CurvePoint>> = BTreeMap::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 5, &file, lineno)?;
        by_station
            .entry(parse_field(f[0], "station_id", &file, lineno)?)
            .or_default()
            .push(CurvePoint {
                supply: parse_field(f[1], "supply", &file, lineno)?,
                mean_lost: parse_field(f[2], "mean_lost", &file, lineno)?,
                stderr: parse_field(f[3], "stderr", &file, lineno)?,
                reps: parse_field(f[4], "reps", &file, lineno)?,
            });
    }
    by_station
        .into_iter()
        .map(|(s, pts)| LostDemandCurve::new(s, pts))
        .collect()
}

pub fn write_allocation(allocation: &Allocation, path: &Path) -> Result<()> {
    let mut out = String::from("station_id,x\n");
    for (s, x) in allocation.iter() {
        writeln!(out, "{s},{x}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_allocation(path: &Path) -> Result<Allocation> {
    use crate::scenario::files::{csv_rows, parse_field, split_fields};
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut counts = BTreeMap::new();
    for (lineno, line) in csv_rows(&text) {
        let f = split_fields(line, 2, &file, lineno)?;
        counts.insert(
            parse_field(f[0], "station_id", &file, lineno)?,
            parse_field(f[1], "x", &file, lineno)?,
        );
    }
    Ok(Allocation::new(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(station: u32, pts: &[(u32, f64)]) -> LostDemandCurve {
        LostDemandCurve::new(
            station,
            pts.iter()
                .map(|&(supply, mean_lost)| CurvePoint { supply, mean_lost, stderr: 0.0, reps: 1 })
                .collect(),
        )
        .unwrap()
    }

    /// Enumeration oracle with the same right-associated objective sum.
    pub(crate) fn brute_force_allocation(curves: &[LostDemandCurve], a_total: u32) -> Option<f64> {
        fn recurse(curves: &[LostDemandCurve], budget: u32) -> Option<f64> {
            match curves.split_first() {
                None => Some(0.0),
                Some((head, tail)) => {
                    let (lo, hi) = head.supply_bounds();
                    let mut best: Option<f64> = None;
                    for x in lo..=hi.min(budget) {
                        if let Some(rest) = recurse(tail, budget - x) {
                            let total = head.value_at(x) + rest;
                            if best.map_or(true, |b| total < b) {
                                best = Some(total);
                            }
                        }
                    }
                    best
                }
            }
        }
        recurse(curves, a_total)
    }

    #[test]
    fn single_station_picks_smallest_argmin() {
        let c = curve(1, &[(0, 10.0), (2, 4.0), (4, 4.0), (6, 7.0)]);
        let (alloc, obj) = solve_allocation(&[c], 10).unwrap();
        assert_eq!(obj, 4.0);
        assert_eq!(alloc.get(1), Some(2));
    }

    #[test]
    fn constant_curves_tie_break_to_minimum_supply() {
        let curves = vec![curve(1, &[(2, 5.0), (8, 5.0)]), curve(2, &[(3, 1.0), (9, 1.0)])];
        let (alloc, obj) = solve_allocation(&curves, 20).unwrap();
        assert_eq!(obj, 6.0);
        assert_eq!(alloc.get(1), Some(2));
        assert_eq!(alloc.get(2), Some(3));
    }

    #[test]
    fn infeasible_when_minimums_exceed_total() {
        let curves = vec![curve(1, &[(5, 1.0), (8, 0.0)]), curve(2, &[(5, 1.0), (8, 0.0)])];
        let err = solve_allocation(&curves, 9).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn dp_matches_brute_force_on_random_instances() {
        use rand::Rng;
        let mut rng = crate::rng::stream(5150, crate::rng::Domain::Synth, 0, 0);
        for case in 0..60 {
            let n = rng.random_range(1..=4usize);
            let curves: Vec<LostDemandCurve> = (0..n)
                .map(|s| {
                    let lo = rng.random_range(0..4u32);
                    let width = rng.random_range(2..=8u32);
                    let k = rng.random_range(2..=4usize);
                    let mut supplies: Vec<u32> = vec![lo, lo + width];
                    for _ in 0..k - 2 {
                        supplies.push(lo + rng.random_range(1..width));
                    }
                    supplies.sort_unstable();
                    supplies.dedup();
                    curve(
                        s as u32,
                        &supplies
                            .iter()
                            .map(|&x| (x, rng.random_range(0..40u32) as f64))
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            let min_total: u32 = curves.iter().map(|c| c.supply_bounds().0).sum();
            let a_total = min_total + rng.random_range(0..12u32);
            let got = solve_allocation(&curves, a_total).unwrap();
            let want = brute_force_allocation(&curves, a_total).unwrap();
            assert_eq!(got.1, want, "case {case}");
        }
    }

    #[test]
    fn scale_invariance_of_argmin() {
        let curves = vec![
            curve(1, &[(0, 12.0), (3, 5.0), (6, 2.0), (9, 1.0)]),
            curve(2, &[(0, 20.0), (3, 9.0), (6, 8.0), (9, 8.0)]),
            curve(3, &[(0, 7.0), (3, 3.0), (6, 3.0), (9, 0.0)]),
        ];
        let (base, _) = solve_allocation(&curves, 15).unwrap();
        for factor in [0.25, 2.0, 7.5, 1024.0] {
            let scaled: Vec<LostDemandCurve> = curves
                .iter()
                .map(|c| {
                    LostDemandCurve::new(
                        c.station,
                        c.points
                            .iter()
                            .map(|p| CurvePoint { mean_lost: p.mean_lost * factor, ..*p })
                            .collect(),
                    )
                    .unwrap()
                })
                .collect();
            let (alloc, _) = solve_allocation(&scaled, 15).unwrap();
            assert_eq!(alloc, base, "factor {factor}");
        }
    }

    #[test]
    fn proportional_baseline_examples() {
        let a = baseline_proportional(&[(1, 100.0), (2, 100.0), (3, 200.0)], 40, 60).unwrap();
        assert_eq!((a.get(1), a.get(2), a.get(3)), (Some(10), Some(10), Some(20)));

        let b = baseline_proportional(&[(1, 900.0), (2, 50.0), (3, 50.0)], 120, 60).unwrap();
        assert_eq!((b.get(1), b.get(2), b.get(3)), (Some(60), Some(30), Some(30)));

        let c = baseline_proportional(&[(1, 5.0), (2, 5.0), (3, 5.0), (4, 5.0)], 40, 60).unwrap();
        assert!(c.iter().all(|(_, x)| x == 10));
    }

    #[test]
    fn proportional_infeasible_when_total_exceeds_caps() {
        let err = baseline_proportional(&[(1, 1.0), (2, 1.0)], 200, 60).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn equal_baseline_examples() {
        let a = baseline_equal(1200, &(0..40).collect::<Vec<_>>());
        assert!(a.iter().all(|(_, x)| x == 30));
        let b = baseline_equal(10, &[7, 3, 5]);
        assert_eq!((b.get(3), b.get(5), b.get(7)), (Some(4), Some(3), Some(3)));
        let c = baseline_equal(0, &[1, 2, 3, 4, 5]);
        assert!(c.iter().all(|(_, x)| x == 0));
    }

    /// Synthetic deterministic curve source for adaptive tests.
    struct FnSource<F: Fn(StationId, u32) -> f64> {
        f: F,
        calls: u32,
    }

    impl<F: Fn(StationId, u32) -> f64> CurveSource for FnSource<F> {
        fn estimate(&mut self, station: StationId, supply: u32) -> Result<CurvePoint> {
            self.calls += 1;
            Ok(CurvePoint { supply, mean_lost: (self.f)(station, supply), stderr: 0.0, reps: 1 })
        }
    }

    #[test]
    fn adaptive_equals_full_grid_on_convex_curves() {
        // strictly convex decreasing family with station-specific slopes
        let f = |s: StationId, x: u32| {
            let scale = 40.0 + 17.0 * s as f64;
            scale * (-(x as f64) / (6.0 + s as f64)).exp()
        };
        let stations: Vec<StationId> = (0..6).collect();
        let bounds = (5, 60);
        let fine: Vec<u32> = (5..=60).step_by(5).collect();

        // full-grid oracle
        let full_curves: Vec<LostDemandCurve> = stations
            .iter()
            .map(|&s| {
                curve(s, &fine.iter().map(|&x| (x, f(s, x))).collect::<Vec<_>>())
            })
            .collect();
        let (full_alloc, full_obj) = solve_allocation(&full_curves, 120).unwrap();

        let mut source = FnSource { f, calls: 0 };
        let got = adaptive_allocate(&mut source, &stations, 120, bounds, 5, &[5, 60]).unwrap();
        assert_eq!(got.allocation, full_alloc);
        assert_eq!(got.objective, full_obj);
        assert!(
            got.simulations < got.full_grid_simulations,
            "adaptive {} vs grid {}",
            got.simulations,
            got.full_grid_simulations
        );
    }

    #[test]
    fn adaptive_on_fully_refined_curves_stops_after_one_solve() {
        let f = |_: StationId, x: u32| 100.0 / (x as f64 + 1.0);
        let stations: Vec<StationId> = (0..3).collect();
        let fine: Vec<u32> = (5..=60).step_by(5).collect();
        let all: Vec<u32> = fine.clone();
        let mut source = FnSource { f, calls: 0 };
        let got = adaptive_allocate(&mut source, &stations, 1000, (5, 60), 5, &all).unwrap();
        // coarse grid == fine grid: nothing left to explore
        assert_eq!(got.rounds, 1);
        assert_eq!(got.simulations, (stations.len() * fine.len()) as u32);
        assert_eq!(got.simulations, got.full_grid_simulations);
    }
}
