//! Pointy-top axial hexagon lattice over the projected plane.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::polygon::{clip_convex, signed_area, BBox, Point, Region};
use super::voronoi::VoronoiCell;
use super::GeoError;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Minimum overlap (m²) for a hex to count as intersecting an area.
pub const MIN_OVERLAP_M2: f64 = 1e-6;

/// Axial hex coordinate, written as `q:r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct HexCoord {
    pub q: i32,
    pub r: i32,
}

pub const AXIAL_DIRECTIONS: [(i32, i32); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

impl HexCoord {
    pub const fn new(q: i32, r: i32) -> Self {
        Self { q, r }
    }

    pub fn neighbors(&self) -> [HexCoord; 6] {
        AXIAL_DIRECTIONS.map(|(dq, dr)| HexCoord::new(self.q + dq, self.r + dr))
    }

    pub fn center(&self, edge_m: f64) -> Point {
        Point::new(
            edge_m * SQRT3 * (self.q as f64 + self.r as f64 / 2.0),
            edge_m * 1.5 * self.r as f64,
        )
    }

    /// Counter-clockwise vertices, starting at the lower-right corner.
    pub fn polygon(&self, edge_m: f64) -> Vec<Point> {
        let c = self.center(edge_m);
        (0..6)
            .map(|k| {
                let ang = std::f64::consts::PI / 180.0 * (60.0 * k as f64 - 30.0);
                Point::new(c.x + edge_m * ang.cos(), c.y + edge_m * ang.sin())
            })
            .collect()
    }
}

impl fmt::Display for HexCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.q, self.r)
    }
}

impl FromStr for HexCoord {
    type Err = GeoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeoError::BadHexId(s.to_string());
        let (q, r) = s.split_once(':').ok_or_else(bad)?;
        Ok(HexCoord::new(q.parse().map_err(|_| bad())?, r.parse().map_err(|_| bad())?))
    }
}

impl TryFrom<String> for HexCoord {
    type Error = GeoError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<HexCoord> for String {
    fn from(h: HexCoord) -> String {
        h.to_string()
    }
}

pub fn hex_area(edge_m: f64) -> f64 {
    1.5 * SQRT3 * edge_m * edge_m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexCell {
    pub hex_id: HexCoord,
    pub center: Point,
    pub edge_m: f64,
    pub assigned_bts: Option<String>,
    pub user_share: f64,
    pub opportunity_share: f64,
}

impl HexCell {
    pub fn new(hex_id: HexCoord, edge_m: f64) -> Self {
        Self {
            hex_id,
            center: hex_id.center(edge_m),
            edge_m,
            assigned_bts: None,
            user_share: 0.0,
            opportunity_share: 0.0,
        }
    }

    pub fn polygon(&self) -> Vec<Point> {
        self.hex_id.polygon(self.edge_m)
    }

    pub fn area(&self) -> f64 {
        hex_area(self.edge_m)
    }
}

/// Every lattice hex whose polygon overlaps the boundary, sorted by id.
pub fn build_hex_grid(boundary: &Region, edge_m: f64) -> Result<Vec<HexCell>, GeoError> {
    if !(edge_m > 0.0 && edge_m.is_finite()) {
        return Err(GeoError::BadEdge(edge_m));
    }
    let Some(bb) = boundary.bbox() else {
        return Ok(Vec::new());
    };
    let w = SQRT3 * edge_m;
    let r_lo = ((bb.min.y - edge_m) / (1.5 * edge_m)).floor() as i32;
    let r_hi = ((bb.max.y + edge_m) / (1.5 * edge_m)).ceil() as i32;
    let mut cands = Vec::new();
    for r in r_lo..=r_hi {
        let q_lo = ((bb.min.x - w) / w - r as f64 / 2.0).floor() as i32;
        let q_hi = ((bb.max.x + w) / w - r as f64 / 2.0).ceil() as i32;
        cands.extend((q_lo..=q_hi).map(|q| HexCoord::new(q, r)));
    }
    let mut hexes: Vec<HexCell> = cands
        .into_par_iter()
        .filter(|h| boundary.clip_convex(&h.polygon(edge_m)).area() > MIN_OVERLAP_M2)
        .map(|h| HexCell::new(h, edge_m))
        .collect();
    hexes.sort_by_key(|h| h.hex_id);
    Ok(hexes)
}

/// Assigns each hex to the Voronoi cell covering most of its area. Ties go to
/// the smallest bts id. Returns the assigned hexes and the number dropped for
/// having no overlap with any cell.
pub fn assign_hexes(hexes: &[HexCell], cells: &[VoronoiCell]) -> (Vec<HexCell>, usize) {
    let mut order: Vec<&VoronoiCell> = cells.iter().collect();
    order.sort_by(|a, b| a.bts_id.cmp(&b.bts_id));
    let cell_boxes: Vec<Option<BBox>> = order.iter().map(|c| c.region.bbox()).collect();

    let assigned: Vec<Option<HexCell>> = hexes
        .par_iter()
        .map(|h| {
            let poly = h.polygon();
            let hb = BBox::of(&poly).expect("hexagon");
            let tol = 1e-9 * h.area();
            let mut best: Option<(usize, f64)> = None;
            for (i, c) in order.iter().enumerate() {
                if !cell_boxes[i].is_some_and(|b| b.intersects(&hb)) {
                    continue;
                }
                let a = overlap_area(&c.region, &poly);
                if a <= MIN_OVERLAP_M2 {
                    continue;
                }
                if best.is_none_or(|(_, b)| a > b + tol) {
                    best = Some((i, a));
                }
            }
            best.map(|(i, _)| HexCell {
                assigned_bts: Some(order[i].bts_id.clone()),
                ..h.clone()
            })
        })
        .collect();
    let dropped = assigned.iter().filter(|a| a.is_none()).count();
    let mut out: Vec<HexCell> = assigned.into_iter().flatten().collect();
    out.sort_by_key(|h| h.hex_id);
    (out, dropped)
}

pub fn overlap_area(region: &Region, convex: &[Point]) -> f64 {
    region
        .rings
        .iter()
        .map(|r| signed_area(&clip_convex(r, convex)))
        .sum()
}

/// Spreads each tower's home-user and work-user totals evenly over the hexes
/// assigned to it.
pub fn disaggregate(
    home_totals: &BTreeMap<String, f64>,
    work_totals: &BTreeMap<String, f64>,
    hexes: &mut [HexCell],
) -> Result<(), GeoError> {
    let mut per_tower: BTreeMap<String, usize> = BTreeMap::new();
    for h in hexes.iter() {
        if let Some(b) = &h.assigned_bts {
            *per_tower.entry(b.clone()).or_default() += 1;
        }
    }
    for (bts, n) in home_totals.iter().chain(work_totals.iter()) {
        if *n > 0.0 && !per_tower.contains_key(bts) {
            return Err(GeoError::TowerWithoutHexes(bts.clone()));
        }
    }
    for h in hexes.iter_mut() {
        let Some(b) = &h.assigned_bts else {
            h.user_share = 0.0;
            h.opportunity_share = 0.0;
            continue;
        };
        let k = per_tower[b] as f64;
        h.user_share = home_totals.get(b).copied().unwrap_or(0.0) / k;
        h.opportunity_share = work_totals.get(b).copied().unwrap_or(0.0) / k;
    }
    Ok(())
}

/// Number of hexes assigned to each tower.
pub fn hexes_per_tower(hexes: &[HexCell]) -> BTreeMap<String, Vec<HexCoord>> {
    let mut m: BTreeMap<String, Vec<HexCoord>> = BTreeMap::new();
    for h in hexes {
        if let Some(b) = &h.assigned_bts {
            m.entry(b.clone()).or_default().push(h.hex_id);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::voronoi::voronoi;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Region {
        Region::from_polygon(
            vec![
                Point::new(x0, y0),
                Point::new(x1, y0),
                Point::new(x1, y1),
                Point::new(x0, y1),
            ],
            vec![],
        )
    }

    #[test]
    fn hex_id_roundtrip() {
        let h = HexCoord::new(-3, 12);
        assert_eq!(h.to_string(), "-3:12");
        assert_eq!("-3:12".parse::<HexCoord>().unwrap(), h);
        assert!("3;12".parse::<HexCoord>().is_err());
    }

    #[test]
    fn hex_polygon_area_matches_formula() {
        for (q, r) in [(0, 0), (5, -7), (-120, 44)] {
            let poly = HexCoord::new(q, r).polygon(174.0);
            let rel = (signed_area(&poly) - hex_area(174.0)).abs() / hex_area(174.0);
            assert!(rel < 1e-12, "rel err {rel}");
        }
    }

    #[test]
    fn neighbor_centers_are_sqrt3_edge_apart() {
        let h = HexCoord::new(2, -1);
        for n in h.neighbors() {
            let d = h.center(10.0).dist(&n.center(10.0));
            assert!((d - SQRT3 * 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_boundary_gets_covering_hexes() {
        let b = rect(-1.0, -1.0, 1.0, 1.0);
        let hexes = build_hex_grid(&b, 174.0).unwrap();
        assert!(!hexes.is_empty());
        let covered: f64 = hexes.iter().map(|h| overlap_area(&b, &h.polygon())).sum();
        assert!((covered - b.area()).abs() < 1e-9);
    }

    #[test]
    fn nonpositive_edge_rejected() {
        assert!(build_hex_grid(&rect(0.0, 0.0, 1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn contained_hex_goes_to_its_cell() {
        let b = rect(-5000.0, -5000.0, 5000.0, 5000.0);
        let cells = voronoi(
            &[
                ("a".into(), Point::new(-2500.0, 0.0)),
                ("b".into(), Point::new(2500.0, 0.0)),
            ],
            &b,
        )
        .unwrap();
        let hexes = vec![HexCell::new(HexCoord::new(-10, 0), 100.0)];
        let (out, dropped) = assign_hexes(&hexes, &cells);
        assert_eq!(dropped, 0);
        assert_eq!(out[0].assigned_bts.as_deref(), Some("a"));
    }

    #[test]
    fn split_hex_goes_to_majority_cell() {
        // sites chosen so the bisector x = 20 cuts the hex at the origin 60/40-ish
        let b = rect(-5000.0, -5000.0, 5000.0, 5000.0);
        let cells = voronoi(
            &[
                ("a".into(), Point::new(-980.0, 0.0)),
                ("b".into(), Point::new(1020.0, 0.0)),
            ],
            &b,
        )
        .unwrap();
        let h = HexCell::new(HexCoord::new(0, 0), 100.0);
        let share_a = overlap_area(&cells[0].region, &h.polygon()) / h.area();
        assert!(share_a > 0.55 && share_a < 0.7);
        let (out, _) = assign_hexes(&[h], &cells);
        assert_eq!(out[0].assigned_bts.as_deref(), Some("a"));
    }

    #[test]
    fn disaggregate_even_split() {
        let mut hexes: Vec<HexCell> = (0..4)
            .map(|q| HexCell {
                assigned_bts: Some("t".into()),
                ..HexCell::new(HexCoord::new(q, 0), 10.0)
            })
            .collect();
        hexes.push(HexCell {
            assigned_bts: Some("z".into()),
            ..HexCell::new(HexCoord::new(9, 9), 10.0)
        });
        let home = BTreeMap::from([("t".to_string(), 100.0)]);
        let work = BTreeMap::new();
        disaggregate(&home, &work, &mut hexes).unwrap();
        assert!(hexes[..4].iter().all(|h| h.user_share == 25.0));
        assert_eq!(hexes[4].user_share, 0.0);
    }

    #[test]
    fn tower_without_hexes_is_fatal() {
        let mut hexes = vec![HexCell::new(HexCoord::new(0, 0), 10.0)];
        let home = BTreeMap::from([("t".to_string(), 3.0)]);
        assert!(matches!(
            disaggregate(&home, &BTreeMap::new(), &mut hexes),
            Err(GeoError::TowerWithoutHexes(_))
        ));
    }
}
