//! Random small cities and an exhaustive time-expanded-graph router.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use commute_core::geo::Point;
use commute_core::router::{Network, RawTrip, RouterConfig, TimetableInput, WalkGraph};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct RandomCity {
    pub nodes: Vec<(String, Point)>,
    pub edges: Vec<(String, String, f64)>,
    pub input: TimetableInput,
    pub cfg: RouterConfig,
    pub extent_m: f64,
}

impl RandomCity {
    pub fn network(&self) -> Network {
        let walk = WalkGraph::new(self.nodes.clone(), &self.edges, self.cfg.max_access_walk_m).unwrap();
        Network::new(walk, &self.input, self.cfg.clone()).unwrap()
    }

    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Point {
        Point::new(rng.gen_range(0.0..self.extent_m), rng.gen_range(0.0..self.extent_m))
    }
}

/// A random trip over `stops`, starting near the morning window.
pub fn random_trip<R: Rng>(rng: &mut R, route_id: &str, trip_id: &str, stops: &[String]) -> RawTrip {
    let mut t: u32 = rng.gen_range(6 * 3600 + 1800..9 * 3600 + 1800);
    let pace: f64 = rng.gen_range(0.6..1.6);
    let mut stop_times = Vec::with_capacity(stops.len());
    for (k, s) in stops.iter().enumerate() {
        if k > 0 {
            t += (rng.gen_range(60.0..420.0) * pace) as u32;
        }
        let dwell = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..60) };
        stop_times.push((s.clone(), t, t + dwell));
        t += dwell;
    }
    RawTrip {
        route_id: route_id.to_string(),
        trip_id: trip_id.to_string(),
        stop_times,
    }
}

/// Street grid of jittered nodes linked to their nearest neighbours, random
/// stops and up to `max_trips` trips on a handful of lines.
pub fn random_city<R: Rng>(rng: &mut R, n_stops: usize, max_trips: usize) -> RandomCity {
    let extent_m = rng.gen_range(2000.0..4000.0);
    let n_nodes = rng.gen_range(15..40);
    let nodes: Vec<(String, Point)> = (0..n_nodes)
        .map(|i| {
            (
                format!("n{i:03}"),
                Point::new(rng.gen_range(0.0..extent_m), rng.gen_range(0.0..extent_m)),
            )
        })
        .collect();
    let mut edges = Vec::new();
    for (i, (id, p)) in nodes.iter().enumerate() {
        let mut by_dist: Vec<(f64, usize)> = nodes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, (_, q))| (p.dist(q), j))
            .collect();
        by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let k = rng.gen_range(1..=3);
        for &(d, j) in by_dist.iter().take(k) {
            edges.push((id.clone(), nodes[j].0.clone(), d * rng.gen_range(1.0..1.3) + 1.0));
        }
    }

    let stops: Vec<(String, Point)> = (0..n_stops)
        .map(|i| {
            (
                format!("s{i:02}"),
                Point::new(rng.gen_range(0.0..extent_m), rng.gen_range(0.0..extent_m)),
            )
        })
        .collect();
    let stop_ids: Vec<String> = stops.iter().map(|s| s.0.clone()).collect();

    let mut trips = Vec::new();
    let n_lines = rng.gen_range(2..7);
    'lines: for l in 0..n_lines {
        let len = rng.gen_range(2..=stop_ids.len().min(7));
        let pattern: Vec<String> = stop_ids.choose_multiple(rng, len).cloned().collect();
        for k in 0..rng.gen_range(1..10) {
            if trips.len() >= max_trips {
                break 'lines;
            }
            trips.push(random_trip(rng, &format!("L{l}"), &format!("L{l}_{k}"), &pattern));
        }
    }

    let mut transfers = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let a = stop_ids.choose(rng).unwrap().clone();
        let b = stop_ids.choose(rng).unwrap().clone();
        transfers.push((a, b, rng.gen_range(30.0..400.0)));
    }

    let cfg = RouterConfig {
        min_transfer_s: *[0.0, 45.0, 120.0].choose(rng).unwrap(),
        ..RouterConfig::default()
    };
    RandomCity {
        nodes,
        edges,
        input: TimetableInput {
            stops,
            trips,
            transfers,
        },
        cfg,
        extent_m,
    }
}

/// Exhaustive earliest-arrival search: every departure and arrival event is a
/// node, plus a waiting chain per stop, searched with Dijkstra on clock time.
pub struct TimeExpandedOracle {
    node_pts: Vec<Point>,
    /// All-pairs street distances (m).
    apsp: Vec<Vec<f64>>,
    stop_pts: Vec<Point>,
    stop_snap: Vec<Option<(usize, f64)>>,
    /// Stop-to-stop walking seconds after alighting (excluding slack).
    transfer_s: Vec<Vec<f64>>,
    /// (trip, stop index) -> (stop, arr, dep).
    trips: Vec<Vec<(usize, f64, f64)>>,
    /// Per stop: departure events sorted by time, as (time, trip, index).
    waits: Vec<Vec<(f64, usize, usize)>>,
    speed: f64,
    max_walk: f64,
    slack: f64,
}

impl TimeExpandedOracle {
    pub fn new(city: &RandomCity) -> Self {
        let mut nodes = city.nodes.clone();
        nodes.sort_by(|a, b| a.0.cmp(&b.0));
        let n = nodes.len();
        let idx = |id: &str| nodes.iter().position(|x| x.0 == id).unwrap();
        let mut apsp = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in apsp.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for (a, b, len) in &city.edges {
            let (i, j) = (idx(a), idx(b));
            apsp[i][j] = apsp[i][j].min(*len);
            apsp[j][i] = apsp[j][i].min(*len);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = apsp[i][k] + apsp[k][j];
                    if via < apsp[i][j] {
                        apsp[i][j] = via;
                    }
                }
            }
        }
        let node_pts: Vec<Point> = nodes.iter().map(|x| x.1).collect();
        let max_walk = city.cfg.max_access_walk_m;
        let speed = city.cfg.walk_speed_kmh / 3.6;

        let mut stops = city.input.stops.clone();
        stops.sort_by(|a, b| a.0.cmp(&b.0));
        let sidx = |id: &str| stops.iter().position(|x| x.0 == id).unwrap();
        let stop_pts: Vec<Point> = stops.iter().map(|s| s.1).collect();
        let stop_snap: Vec<Option<(usize, f64)>> =
            stop_pts.iter().map(|p| snap(&node_pts, p, max_walk)).collect();

        let ns = stops.len();
        let mut transfer_s = vec![vec![f64::INFINITY; ns]; ns];
        for a in 0..ns {
            for b in 0..ns {
                if a == b {
                    continue;
                }
                if let (Some((na, da)), Some((nb, db))) = (stop_snap[a], stop_snap[b]) {
                    let total = da + apsp[na][nb] + db;
                    if total <= max_walk {
                        transfer_s[a][b] = total / speed;
                    }
                }
            }
        }
        for (a, b, s) in &city.input.transfers {
            let (a, b) = (sidx(a), sidx(b));
            if a != b {
                transfer_s[a][b] = transfer_s[a][b].min(*s);
            }
        }

        let trips: Vec<Vec<(usize, f64, f64)>> = city
            .input
            .trips
            .iter()
            .map(|t| {
                t.stop_times
                    .iter()
                    .map(|(s, a, d)| (sidx(s), *a as f64, *d as f64))
                    .collect()
            })
            .collect();
        let mut waits = vec![Vec::new(); ns];
        for (ti, t) in trips.iter().enumerate() {
            for (k, &(s, _, d)) in t.iter().enumerate() {
                if k + 1 < t.len() {
                    waits[s].push((d, ti, k));
                }
            }
        }
        for w in &mut waits {
            w.sort_by(|a, b| a.0.total_cmp(&b.0));
        }

        Self {
            node_pts,
            apsp,
            stop_pts,
            stop_snap,
            transfer_s,
            trips,
            waits,
            speed,
            max_walk,
            slack: city.cfg.min_transfer_s,
        }
    }

    pub fn stop_count(&self) -> usize {
        self.stop_pts.len()
    }

    /// Minutes from `o` to `d` leaving at `dep_s`, or `None`.
    pub fn travel_time(&self, o: &Point, d: &Point, dep_s: u32) -> Option<f64> {
        if o == d {
            return Some(0.0);
        }
        let t0 = dep_s as f64;
        let (Some((no, so)), snap_d) = (snap(&self.node_pts, o, self.max_walk), snap(&self.node_pts, d, self.max_walk))
        else {
            return None;
        };
        let mut best = f64::INFINITY;
        if let Some((nd, sd)) = snap_d {
            best = best.min(t0 + (so + self.apsp[no][nd] + sd) / self.speed);
        }
        let walk_to_stop = |s: usize| -> Option<f64> {
            let (ns, ds) = self.stop_snap[s]?;
            let total = so + self.apsp[no][ns] + ds;
            (total <= self.max_walk).then(|| total / self.speed)
        };
        let walk_from_stop = |s: usize| -> Option<f64> {
            let (ns, ds) = self.stop_snap[s]?;
            let (nd, sd) = snap_d?;
            let total = ds + self.apsp[ns][nd] + sd;
            (total <= self.max_walk).then(|| total / self.speed)
        };

        // node ids: wait nodes per stop event, then per-trip dep/arr events
        let mut wait_base = Vec::with_capacity(self.waits.len());
        let mut next = 0usize;
        for w in &self.waits {
            wait_base.push(next);
            next += w.len();
        }
        let total_wait = next;
        let mut trip_base = Vec::with_capacity(self.trips.len());
        for t in &self.trips {
            trip_base.push(next);
            next += 2 * t.len();
        }
        let n_nodes = next;
        let dep_node = |t: usize, k: usize| trip_base[t] + 2 * k;
        let arr_node = |t: usize, k: usize| trip_base[t] + 2 * k + 1;
        let first_wait = |s: usize, ready: f64| -> Option<usize> {
            let k = self.waits[s].partition_point(|e| e.0 < ready);
            (k < self.waits[s].len()).then(|| wait_base[s] + k)
        };

        let mut label = vec![f64::INFINITY; n_nodes];
        let mut heap = BinaryHeap::new();
        let relax = |label: &mut Vec<f64>, heap: &mut BinaryHeap<Item>, v: usize, t: f64| {
            if t < label[v] {
                label[v] = t;
                heap.push(Item(t, v));
            }
        };
        for s in 0..self.stop_pts.len() {
            if let Some(w) = walk_to_stop(s) {
                if let Some(v) = first_wait(s, t0 + w) {
                    relax(&mut label, &mut heap, v, self.waits[s][v - wait_base[s]].0);
                }
            }
        }

        while let Some(Item(t, u)) = heap.pop() {
            if t > label[u] || t >= best {
                continue;
            }
            if u < total_wait {
                let s = wait_base.partition_point(|&b| b <= u) - 1;
                let k = u - wait_base[s];
                if k + 1 < self.waits[s].len() {
                    relax(&mut label, &mut heap, u + 1, self.waits[s][k + 1].0);
                }
                let (_, ti, idx) = self.waits[s][k];
                relax(&mut label, &mut heap, dep_node(ti, idx), t);
                continue;
            }
            let ti = trip_base.iter().rposition(|&b| b <= u).unwrap();
            let off = u - trip_base[ti];
            let (k, is_arr) = (off / 2, off % 2 == 1);
            let trip = &self.trips[ti];
            if !is_arr {
                // ride to the next stop
                relax(&mut label, &mut heap, arr_node(ti, k + 1), trip[k + 1].1);
                continue;
            }
            let (s, _, dep) = trip[k];
            if k + 1 < trip.len() {
                relax(&mut label, &mut heap, dep_node(ti, k), dep);
            }
            if let Some(w) = walk_from_stop(s) {
                best = best.min(t + w);
            }
            let ready = t + self.slack;
            if let Some(v) = first_wait(s, ready) {
                relax(&mut label, &mut heap, v, self.waits[s][v - wait_base[s]].0);
            }
            for (q, &w) in self.transfer_s[s].iter().enumerate() {
                if w.is_finite() {
                    if let Some(v) = first_wait(q, ready + w) {
                        relax(&mut label, &mut heap, v, self.waits[q][v - wait_base[q]].0);
                    }
                }
            }
        }
        best.is_finite().then(|| (best - t0) / 60.0)
    }
}

fn snap(nodes: &[Point], p: &Point, max_m: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in nodes.iter().enumerate() {
        let d = q.dist(p);
        if d <= max_m && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
