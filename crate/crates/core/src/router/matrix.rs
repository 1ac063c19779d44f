//! Door-to-door travel times over the morning window and the OD matrix.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::geo::{HexCoord, Point};

use super::raptor::{raptor, RaptorScratch};
use super::{Network, RouterError};

/// Minimal travel times in minutes, row-major over (origin, destination).
/// Unreachable pairs hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeMatrix {
    pub origins: Vec<HexCoord>,
    pub destinations: Vec<HexCoord>,
    pub minutes: Vec<f64>,
}

impl TravelTimeMatrix {
    pub fn get(&self, o: usize, d: usize) -> f64 {
        self.minutes[o * self.destinations.len() + d]
    }

    pub fn row(&self, o: usize) -> &[f64] {
        let n = self.destinations.len();
        &self.minutes[o * n..(o + 1) * n]
    }

    pub fn origin_index(&self, h: &HexCoord) -> Option<usize> {
        self.origins.binary_search(h).ok()
    }

    pub fn destination_index(&self, h: &HexCoord) -> Option<usize> {
        self.destinations.binary_search(h).ok()
    }

    pub fn lookup(&self, o: &HexCoord, d: &HexCoord) -> Option<f64> {
        Some(self.get(self.origin_index(o)?, self.destination_index(d)?))
    }

    /// `origin_hex,dest_hex,minutes` with `inf` for unreachable pairs.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["origin_hex", "dest_hex", "minutes"])?;
        for (oi, o) in self.origins.iter().enumerate() {
            for (di, d) in self.destinations.iter().enumerate() {
                let m = self.get(oi, di);
                let v = if m.is_finite() { m.to_string() } else { "inf".to_string() };
                wtr.write_record([o.to_string(), d.to_string(), v])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, RouterError> {
        let rows: Vec<(u64, (String, String, String))> = super::read_csv_tuples(path)?;
        let mut origins: Vec<HexCoord> = Vec::new();
        let mut destinations: Vec<HexCoord> = Vec::new();
        let mut cells = Vec::with_capacity(rows.len());
        for (line, (o, d, m)) in rows {
            let bad = |v: &str| RouterError::BadTime {
                file: path.display().to_string(),
                line,
                value: v.to_string(),
            };
            let o: HexCoord = o.parse().map_err(|_| bad(&o))?;
            let d: HexCoord = d.parse().map_err(|_| bad(&d))?;
            let m: f64 = if m == "inf" { f64::INFINITY } else { m.parse().map_err(|_| bad(&m))? };
            cells.push((o, d, m));
            origins.push(o);
            destinations.push(d);
        }
        origins.sort();
        origins.dedup();
        destinations.sort();
        destinations.dedup();
        let mut out = TravelTimeMatrix {
            minutes: vec![f64::INFINITY; origins.len() * destinations.len()],
            origins,
            destinations,
        };
        let n = out.destinations.len();
        for (o, d, m) in cells {
            let oi = out.origin_index(&o).expect("collected");
            let di = out.destination_index(&d).expect("collected");
            out.minutes[oi * n + di] = m;
        }
        Ok(out)
    }
}

/// Walking reach of a point: nearest street node plus network distances.
struct Reach {
    snap_m: f64,
    /// Network distances from the snapped node (m).
    dist: Vec<f64>,
    node: u32,
}

impl Network {
    fn reach(&self, p: &Point, limit_m: f64) -> Option<Reach> {
        let (node, snap_m) = self.walk.nearest(p, self.cfg.max_access_walk_m)?;
        Some(Reach {
            snap_m,
            dist: self.walk.distances(node, limit_m),
            node,
        })
    }

    /// Stops reachable on foot within the access budget, with walk seconds.
    fn stop_links(&self, reach: &Reach) -> Vec<(u32, f64)> {
        let budget = self.cfg.max_access_walk_m;
        let speed = self.cfg.walk_speed_mps();
        let mut links = Vec::new();
        for (n, d) in reach.dist.iter().enumerate() {
            if reach.snap_m + d > budget {
                continue;
            }
            for &(s, ds) in &self.transit.node_stops[n] {
                let total = reach.snap_m + d + ds;
                if total <= budget {
                    links.push((s, total / speed));
                }
            }
        }
        links.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        links.dedup_by_key(|l| l.0);
        links
    }

    /// Departure instants (s) sampled over the configured window.
    pub fn departures(&self) -> Vec<u32> {
        let c = &self.cfg;
        (c.window_start_s..c.window_end_s)
            .step_by(c.step_s.max(1) as usize)
            .collect()
    }

    /// Minimum door-to-door minutes from `origin` to `dest` over the sampled
    /// departures; `None` when unreachable.
    pub fn shortest_time(&self, origin: &Point, dest: &Point) -> Option<f64> {
        if origin == dest {
            return Some(0.0);
        }
        let targets = [self.target(dest)];
        let mut scratch = RaptorScratch::default();
        let t = self.origin_row(origin, &targets, &self.departures(), &mut scratch)[0];
        t.is_finite().then_some(t)
    }

    /// Door-to-door minutes for a single departure instant `dep_s`.
    pub fn travel_time_at(&self, origin: &Point, dest: &Point, dep_s: u32) -> Option<f64> {
        if origin == dest {
            return Some(0.0);
        }
        let targets = [self.target(dest)];
        let mut scratch = RaptorScratch::default();
        let t = self.origin_row(origin, &targets, &[dep_s], &mut scratch)[0];
        t.is_finite().then_some(t)
    }

    fn target(&self, p: &Point) -> Target {
        match self.reach(p, self.cfg.max_access_walk_m) {
            None => Target {
                point: *p,
                snap: None,
                egress: Vec::new(),
            },
            Some(r) => Target {
                point: *p,
                snap: Some((r.node, r.snap_m)),
                egress: self.stop_links(&r),
            },
        }
    }

    fn origin_row(
        &self,
        origin: &Point,
        targets: &[Target],
        departures: &[u32],
        scratch: &mut RaptorScratch,
    ) -> Vec<f64> {
        let mut best = vec![f64::INFINITY; targets.len()];
        for (i, t) in targets.iter().enumerate() {
            if t.point == *origin {
                best[i] = 0.0;
            }
        }
        let Some(reach) = self.reach(origin, f64::INFINITY) else {
            return best;
        };
        let speed = self.cfg.walk_speed_mps();
        for (i, t) in targets.iter().enumerate() {
            if let Some((node, snap)) = t.snap {
                let d = reach.snap_m + reach.dist[node as usize] + snap;
                best[i] = best[i].min(d / speed);
            }
        }
        let links = self.stop_links(&reach);
        if links.is_empty() || self.transit.routes.is_empty() {
            return best.into_iter().map(|s| s / 60.0).collect();
        }
        let mut access = Vec::with_capacity(links.len());
        for &dep in departures {
            let t0 = dep as f64;
            access.clear();
            access.extend(links.iter().map(|&(s, w)| (s, t0 + w)));
            raptor(&self.transit, &access, self.cfg.min_transfer_s, scratch);
            let arr = scratch.arrivals();
            for (i, t) in targets.iter().enumerate() {
                for &(s, w) in &t.egress {
                    let a = arr[s as usize];
                    if a.is_finite() {
                        best[i] = best[i].min(a + w - t0);
                    }
                }
            }
        }
        best.into_iter().map(|s| s / 60.0).collect()
    }

    /// Travel-time matrix over hex centroids. Origins and destinations are
    /// sorted by hex id; each origin row is computed independently.
    pub fn build_matrix(
        &self,
        origins: &[(HexCoord, Point)],
        destinations: &[(HexCoord, Point)],
    ) -> TravelTimeMatrix {
        let mut origins = origins.to_vec();
        origins.sort_by_key(|o| o.0);
        let mut destinations = destinations.to_vec();
        destinations.sort_by_key(|d| d.0);

        let departures = self.departures();
        let targets: Vec<Target> = destinations.par_iter().map(|(_, p)| self.target(p)).collect();
        let rows: Vec<Vec<f64>> = origins
            .par_iter()
            .map_init(RaptorScratch::default, |scratch, (oh, op)| {
                let mut row = self.origin_row(op, &targets, &departures, scratch);
                for (i, (dh, _)) in destinations.iter().enumerate() {
                    if dh == oh {
                        row[i] = 0.0;
                    }
                }
                row
            })
            .collect();
        TravelTimeMatrix {
            origins: origins.into_iter().map(|o| o.0).collect(),
            destinations: destinations.into_iter().map(|d| d.0).collect(),
            minutes: rows.into_iter().flatten().collect(),
        }
    }
}

struct Target {
    point: Point,
    snap: Option<(u32, f64)>,
    egress: Vec<(u32, f64)>,
}
