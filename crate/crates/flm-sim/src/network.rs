//! Road graph storage, shortest-path distances, and travel-time conversion.
//!
//! Vehicles move on an undirected weighted graph at a constant speed. Every
//! trip starts or ends at a station node, so distances are served from a
//! per-source Dijkstra cache: one single-source pass covers all queries from
//! that source. The cache is safe under concurrent reads with an at-most-once
//! fill per source.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use dashmap::DashMap;

use crate::error::{Error, Result};
use crate::geo::{LatLon, LocalFrame};

pub type NodeId = u32;

#[derive(Debug, Clone)]
pub struct RoadGraph {
    locations: Vec<LatLon>,
    /// Adjacency list; each edge stored in both directions.
    adjacency: Vec<Vec<(NodeId, f64)>>,
    frame: LocalFrame,
}

impl RoadGraph {
    pub fn new(locations: Vec<LatLon>, edges: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let n = locations.len();
        if n == 0 {
            return Err(Error::Config("road graph has no nodes".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v, len) in edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::Config(format!("edge ({u},{v}) references unknown node")));
            }
            if len <= 0.0 {
                return Err(Error::Config(format!("edge ({u},{v}) has non-positive length {len}")));
            }
            adjacency[u as usize].push((v, len));
            adjacency[v as usize].push((u, len));
        }
        let frame = LocalFrame::new(locations[0]);
        let graph = RoadGraph {
            locations,
            adjacency,
            frame,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    /// Rectangular lattice covering `(min, max)` with the given node spacing.
    /// Lattice edges all have length exactly `spacing_km`.
    pub fn grid(min: LatLon, max: LatLon, spacing_km: f64) -> Result<Self> {
        if spacing_km <= 0.0 {
            return Err(Error::Config(format!("grid spacing must be positive, got {spacing_km}")));
        }
        let frame = LocalFrame::new(min);
        let (width_km, height_km) = frame.to_km(max);
        if width_km <= 0.0 || height_km <= 0.0 {
            return Err(Error::Config("degenerate grid bounding box".into()));
        }
        // tolerate round-trip float error in the extent so an exact multiple
        // of the spacing does not gain a spurious row/column
        let cols = (width_km / spacing_km - 1e-9).ceil().max(1.0) as u32 + 1;
        let rows = (height_km / spacing_km - 1e-9).ceil().max(1.0) as u32 + 1;
        let mut locations = Vec::with_capacity((rows * cols) as usize);
        for r in 0..rows {
            for c in 0..cols {
                locations.push(frame.to_latlon(c as f64 * spacing_km, r as f64 * spacing_km));
            }
        }
        let node = |r: u32, c: u32| r * cols + c;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((node(r, c), node(r, c + 1), spacing_km));
                }
                if r + 1 < rows {
                    edges.push((node(r, c), node(r + 1, c), spacing_km));
                }
            }
        }
        RoadGraph::new(locations, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.locations.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn location(&self, node: NodeId) -> LatLon {
        self.locations[node as usize]
    }

    /// Nearest graph node to `p` in the local planar metric.
    pub fn snap(&self, p: LatLon) -> NodeId {
        let (px, py) = self.frame.to_km(p);
        let mut best = 0u32;
        let mut best_d2 = f64::INFINITY;
        for (i, &loc) in self.locations.iter().enumerate() {
            let (x, y) = self.frame.to_km(loc);
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best = i as u32;
            }
        }
        best
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &(v, _) in &self.adjacency[u as usize] {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        if count != n {
            return Err(Error::Config(format!(
                "road graph is disconnected: {count} of {n} nodes reachable from node 0"
            )));
        }
        Ok(())
    }

    fn dijkstra(&self, source: NodeId) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Entry(f64, NodeId);
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                // min-heap on distance, node id as a deterministic tie-break
                other
                    .0
                    .total_cmp(&self.0)
                    .then_with(|| other.1.cmp(&self.1))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut dist = vec![f64::INFINITY; self.node_count()];
        let mut heap = BinaryHeap::new();
        dist[source as usize] = 0.0;
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            for &(v, len) in &self.adjacency[u as usize] {
                let nd = d + len;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    heap.push(Entry(nd, v));
                }
            }
        }
        dist
    }
}

/// Shared read-through cache of single-source shortest-path distances.
///
/// `DashMap::entry` holds the shard lock while a missing source is filled, so
/// each source is computed at most once even under concurrent queries, and
/// every distance is stable for the lifetime of the oracle.
pub struct DistanceOracle {
    graph: Arc<RoadGraph>,
    cache: DashMap<NodeId, Arc<Vec<f64>>>,
}

impl std::fmt::Debug for DistanceOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistanceOracle")
            .field("nodes", &self.graph.node_count())
            .field("cached_sources", &self.cache.len())
            .finish()
    }
}

impl DistanceOracle {
    pub fn new(graph: Arc<RoadGraph>) -> Self {
        DistanceOracle {
            graph,
            cache: DashMap::new(),
        }
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    fn from_source(&self, source: NodeId) -> Arc<Vec<f64>> {
        self.cache
            .entry(source)
            .or_insert_with(|| Arc::new(self.graph.dijkstra(source)))
            .clone()
    }

    /// Shortest-path distance in km between two graph nodes.
    pub fn distance_km(&self, a: NodeId, b: NodeId) -> Result<f64> {
        let d = self.from_source(a)[b as usize];
        if d.is_infinite() {
            return Err(Error::Routing(format!("nodes {a} and {b} are not connected")));
        }
        Ok(d)
    }
}

/// In-vehicle travel time in minutes at constant speed. Exact arithmetic:
/// `distance / speed * 60`, no rounding.
pub fn travel_time_min(distance_km: f64, speed_kmh: f64) -> f64 {
    debug_assert!(distance_km >= 0.0 && speed_kmh > 0.0);
    distance_km / speed_kmh * 60.0
}

/// Loads a graph from `nodes.csv` (`id,lat,lon`) and `edges.csv`
/// (`u,v,length_km`). Node ids must be dense 0..n.
pub fn load_graph(nodes_path: &Path, edges_path: &Path) -> Result<RoadGraph> {
    let nodes_text = fs::read_to_string(nodes_path).map_err(|e| Error::io(nodes_path, e))?;
    let nodes_file = nodes_path.display().to_string();
    let mut locations = Vec::new();
    for (lineno, line) in crate::scenario::files::csv_rows(&nodes_text) {
        let f = crate::scenario::files::split_fields(line, 3, &nodes_file, lineno)?;
        let id: u32 = crate::scenario::files::parse_field(f[0], "id", &nodes_file, lineno)?;
        if id as usize != locations.len() {
            return Err(Error::parse(&nodes_file, lineno, format!("node ids must be dense and ordered, got {id}")));
        }
        let lat = crate::scenario::files::parse_field(f[1], "lat", &nodes_file, lineno)?;
        let lon = crate::scenario::files::parse_field(f[2], "lon", &nodes_file, lineno)?;
        locations.push(LatLon::new(lat, lon));
    }
    let edges_text = fs::read_to_string(edges_path).map_err(|e| Error::io(edges_path, e))?;
    let edges_file = edges_path.display().to_string();
    let mut edges = Vec::new();
    for (lineno, line) in crate::scenario::files::csv_rows(&edges_text) {
        let f = crate::scenario::files::split_fields(line, 3, &edges_file, lineno)?;
        let u: u32 = crate::scenario::files::parse_field(f[0], "u", &edges_file, lineno)?;
        let v: u32 = crate::scenario::files::parse_field(f[1], "v", &edges_file, lineno)?;
        let len: f64 = crate::scenario::files::parse_field(f[2], "length_km", &edges_file, lineno)?;
        if len <= 0.0 {
            return Err(Error::parse(&edges_file, lineno, format!("edge length must be positive, got {len}")));
        }
        edges.push((u, v, len));
    }
    RoadGraph::new(locations, &edges)
}

pub fn write_graph(graph: &RoadGraph, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut nodes = String::from("id,lat,lon\n");
    for i in 0..graph.node_count() {
        let p = graph.location(i as u32);
        writeln!(nodes, "{},{},{}", i, p.lat, p.lon).unwrap();
    }
    fs::write(nodes_path, nodes).map_err(|e| Error::io(nodes_path, e))?;
    let mut edges = String::from("u,v,length_km\n");
    for u in 0..graph.node_count() {
        for &(v, len) in &graph.adjacency[u] {
            if (u as u32) < v {
                writeln!(edges, "{},{},{}", u, v, len).unwrap();
            }
        }
    }
    fs::write(edges_path, edges).map_err(|e| Error::io(edges_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> RoadGraph {
        let min = LatLon::new(13.0, 77.6);
        let frame = LocalFrame::new(min);
        let max = frame.to_latlon(2.0, 2.0);
        RoadGraph::grid(min, max, 1.0).unwrap()
    }

    #[test]
    fn grid_3x3_has_9_nodes_12_edges() {
        let g = grid3();
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.edge_count(), 12);
    }

    #[test]
    fn opposite_corners_of_3x3_unit_grid_are_4_km_apart() {
        let g = Arc::new(grid3());
        let oracle = DistanceOracle::new(g);
        assert_eq!(oracle.distance_km(0, 8).unwrap(), 4.0);
    }

    #[test]
    fn distance_to_self_is_zero_and_adjacent_is_spacing() {
        let oracle = DistanceOracle::new(Arc::new(grid3()));
        assert_eq!(oracle.distance_km(4, 4).unwrap(), 0.0);
        assert_eq!(oracle.distance_km(4, 5).unwrap(), 1.0);
    }

    #[test]
    fn distances_are_symmetric() {
        let oracle = DistanceOracle::new(Arc::new(grid3()));
        for a in 0..9u32 {
            for b in 0..9u32 {
                assert_eq!(
                    oracle.distance_km(a, b).unwrap(),
                    oracle.distance_km(b, a).unwrap()
                );
            }
        }
    }

    #[test]
    fn degenerate_bbox_is_rejected() {
        let p = LatLon::new(13.0, 77.6);
        assert!(RoadGraph::grid(p, p, 1.0).is_err());
    }

    #[test]
    fn snap_finds_nearest_node() {
        let g = grid3();
        let frame = LocalFrame::new(g.location(0));
        // a point 0.3 km east, 0.4 km north of node 0 snaps to node 0
        assert_eq!(g.snap(frame.to_latlon(0.3, 0.4)), 0);
        // near the centre node
        assert_eq!(g.snap(frame.to_latlon(1.1, 0.9)), 4);
    }

    #[test]
    fn travel_time_examples() {
        assert_eq!(travel_time_min(21.2, 21.2), 60.0);
        assert_eq!(travel_time_min(0.0, 21.2), 0.0);
        assert!((travel_time_min(1.06, 21.2) - 3.0).abs() < 1e-12);
    }

    /// Independent Bellman-Ford oracle for random lattice pairs.
    #[test]
    fn dijkstra_matches_bellman_ford() {
        use rand::Rng;
        let min = LatLon::new(13.0, 77.6);
        let frame = LocalFrame::new(min);
        let g = RoadGraph::grid(min, frame.to_latlon(5.0, 4.0), 1.0).unwrap();
        let n = g.node_count();

        // Bellman-Ford over the same edge list
        let bellman_ford = |src: usize| -> Vec<f64> {
            let mut dist = vec![f64::INFINITY; n];
            dist[src] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if dist[u].is_finite() {
                        for &(v, len) in &g.adjacency[u] {
                            if dist[u] + len < dist[v as usize] {
                                dist[v as usize] = dist[u] + len;
                                changed = true;
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            dist
        };

        let oracle = DistanceOracle::new(Arc::new(g.clone()));
        let mut rng = crate::rng::stream(99, crate::rng::Domain::Synth, 0, 0);
        for _ in 0..25 {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let expect = bellman_ford(a)[b];
            assert_eq!(oracle.distance_km(a as u32, b as u32).unwrap(), expect);
        }
    }
}
