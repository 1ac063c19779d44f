//! Pedestrian street graph with snapping and bounded shortest paths.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

use crate::geo::{Point, ProjectedPlane};

use super::{read_csv, RouterError};

#[derive(Debug, Clone)]
pub struct WalkGraph {
    ids: Vec<String>,
    points: Vec<Point>,
    adj: Vec<Vec<(u32, f64)>>,
    grid: GridIndex,
}

impl WalkGraph {
    /// Nodes are re-ordered by id; edges are undirected.
    pub fn new(
        mut nodes: Vec<(String, Point)>,
        edges: &[(String, String, f64)],
        cell_m: f64,
    ) -> Result<Self, RouterError> {
        nodes.sort_by(|a, b| a.0.cmp(&b.0));
        let mut index: HashMap<&str, u32> = HashMap::with_capacity(nodes.len());
        for (i, (id, _)) in nodes.iter().enumerate() {
            if index.insert(id.as_str(), i as u32).is_some() {
                return Err(RouterError::Invalid(format!("duplicate street node `{id}`")));
            }
        }
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nodes.len()];
        for (k, (from, to, len)) in edges.iter().enumerate() {
            let f = *index.get(from.as_str()).ok_or_else(|| RouterError::Dangling {
                file: "edges.csv".into(),
                line: k as u64 + 2,
                what: format!("unknown node `{from}`"),
            })?;
            let t = *index.get(to.as_str()).ok_or_else(|| RouterError::Dangling {
                file: "edges.csv".into(),
                line: k as u64 + 2,
                what: format!("unknown node `{to}`"),
            })?;
            if !(*len > 0.0 && len.is_finite()) {
                return Err(RouterError::Invalid(format!(
                    "edges.csv line {}: length_m must be positive, got {len}",
                    k + 2
                )));
            }
            adj[f as usize].push((t, *len));
            adj[t as usize].push((f, *len));
        }
        for a in &mut adj {
            a.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
        }
        let points: Vec<Point> = nodes.iter().map(|n| n.1).collect();
        let grid = GridIndex::new(&points, cell_m);
        Ok(Self {
            ids: nodes.into_iter().map(|n| n.0).collect(),
            points,
            adj,
            grid,
        })
    }

    /// Reads `nodes.csv` (node_id,lon,lat) and `edges.csv` (from_id,to_id,length_m).
    pub fn load(dir: &Path, plane: &ProjectedPlane, cell_m: f64) -> Result<Self, RouterError> {
        #[derive(serde::Deserialize)]
        struct NodeRow {
            node_id: String,
            lon: f64,
            lat: f64,
        }
        #[derive(serde::Deserialize)]
        struct EdgeRow {
            from_id: String,
            to_id: String,
            length_m: f64,
        }
        let nodes: Vec<(u64, NodeRow)> = read_csv(&dir.join("nodes.csv"))?;
        let nodes = nodes
            .into_iter()
            .map(|(_, n)| Ok((n.node_id, plane.project(n.lon, n.lat)?)))
            .collect::<Result<Vec<_>, RouterError>>()?;
        let edges: Vec<(u64, EdgeRow)> = read_csv(&dir.join("edges.csv"))?;
        let edges: Vec<(String, String, f64)> = edges
            .into_iter()
            .map(|(_, e)| (e.from_id, e.to_id, e.length_m))
            .collect();
        Self::new(nodes, &edges, cell_m)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, node: u32) -> Point {
        self.points[node as usize]
    }

    pub fn id(&self, node: u32) -> &str {
        &self.ids[node as usize]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    /// Closest node within `max_m` (ties to the lower node index).
    pub fn nearest(&self, p: &Point, max_m: f64) -> Option<(u32, f64)> {
        self.grid.nearest(&self.points, p, max_m)
    }

    /// Network distances (m) from `src`; nodes farther than `limit_m` stay infinite.
    pub fn distances(&self, src: u32, limit_m: f64) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.points.len()];
        let mut heap = BinaryHeap::new();
        dist[src as usize] = 0.0;
        heap.push(HeapItem(0.0, src));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            for &(v, w) in &self.adj[u as usize] {
                let nd = d + w;
                if nd <= limit_m && nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        dist
    }
}

/// Min-heap entry ordered by distance, then node index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct HeapItem(pub f64, pub u32);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Uniform bucket grid for nearest-point queries.
#[derive(Debug, Clone)]
struct GridIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<u32>>,
}

impl GridIndex {
    fn new(points: &[Point], cell: f64) -> Self {
        let cell = if cell > 0.0 && cell.is_finite() { cell } else { 1000.0 };
        let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(cell, p)).or_default().push(i as u32);
        }
        Self { cell, buckets }
    }

    fn key(cell: f64, p: &Point) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    fn nearest(&self, points: &[Point], p: &Point, max_m: f64) -> Option<(u32, f64)> {
        let mut best: Option<(u32, f64)> = None;
        let mut consider = |i: u32| {
            let d = points[i as usize].dist(p);
            if d <= max_m && best.is_none_or(|(bi, bd)| d < bd || (d == bd && i < bi)) {
                best = Some((i, d));
            }
        };
        let reach = (max_m / self.cell).ceil();
        if !reach.is_finite() || reach > 64.0 {
            (0..points.len() as u32).for_each(consider);
            return best;
        }
        let reach = reach as i64;
        let (cx, cy) = Self::key(self.cell, p);
        for gx in cx - reach..=cx + reach {
            for gy in cy - reach..=cy + reach {
                if let Some(b) = self.buckets.get(&(gx, gy)) {
                    b.iter().copied().for_each(&mut consider);
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_graph() -> WalkGraph {
        let nodes = vec![
            ("a".to_string(), Point::new(0.0, 0.0)),
            ("b".to_string(), Point::new(1000.0, 0.0)),
            ("c".to_string(), Point::new(2000.0, 0.0)),
        ];
        let edges = vec![
            ("a".to_string(), "b".to_string(), 1000.0),
            ("b".to_string(), "c".to_string(), 1000.0),
        ];
        WalkGraph::new(nodes, &edges, 1000.0).unwrap()
    }

    #[test]
    fn distances_respect_limit() {
        let g = line_graph();
        let d = g.distances(0, 1500.0);
        assert_eq!(d[1], 1000.0);
        assert!(d[2].is_infinite());
        assert_eq!(g.distances(0, f64::INFINITY)[2], 2000.0);
    }

    #[test]
    fn nearest_within_radius() {
        let g = line_graph();
        assert_eq!(g.nearest(&Point::new(1100.0, 50.0), 1000.0).map(|x| x.0), Some(1));
        assert!(g.nearest(&Point::new(5000.0, 5000.0), 1000.0).is_none());
        // equidistant: lower index wins
        assert_eq!(g.nearest(&Point::new(500.0, 0.0), 1000.0).map(|x| x.0), Some(0));
    }

    #[test]
    fn bad_edges_rejected() {
        let nodes = vec![("a".to_string(), Point::new(0.0, 0.0))];
        assert!(WalkGraph::new(nodes.clone(), &[("a".into(), "z".into(), 1.0)], 100.0).is_err());
        let two = vec![
            ("a".to_string(), Point::new(0.0, 0.0)),
            ("b".to_string(), Point::new(1.0, 0.0)),
        ];
        assert!(WalkGraph::new(two, &[("a".into(), "b".into(), 0.0)], 100.0).is_err());
    }
}
