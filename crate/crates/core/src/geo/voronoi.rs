//! Voronoi cells by per-site half-plane intersection, clipped to the study
//! region.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::polygon::{clip_halfplane, BBox, Point, Region};
use super::GeoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiCell {
    pub bts_id: String,
    pub site: Point,
    /// Unbounded cell truncated to a box enclosing the study area and all sites.
    pub convex: Vec<Point>,
    /// Cell ∩ study region.
    pub region: Region,
}

impl VoronoiCell {
    pub fn area(&self) -> f64 {
        self.region.area()
    }
}

/// Builds one cell per site. Sites are taken in id order; output is sorted by id.
pub fn voronoi(sites: &[(String, Point)], boundary: &Region) -> Result<Vec<VoronoiCell>, GeoError> {
    if sites.is_empty() {
        return Err(GeoError::NoSites);
    }
    let mut sites: Vec<(String, Point)> = sites.to_vec();
    sites.sort_by(|a, b| a.0.cmp(&b.0));

    let mut by_pos: Vec<usize> = (0..sites.len()).collect();
    by_pos.sort_by(|&a, &b| {
        let (pa, pb) = (sites[a].1, sites[b].1);
        pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y))
    });
    let mut dups: Vec<String> = Vec::new();
    for w in by_pos.windows(2) {
        if sites[w[0]].1.dist(&sites[w[1]].1) < 1e-6 {
            dups.push(format!("{}={}", sites[w[0]].0, sites[w[1]].0));
        }
    }
    if !dups.is_empty() {
        return Err(GeoError::DuplicateSites(dups.join(", ")));
    }

    let site_box = BBox::of(&sites.iter().map(|s| s.1).collect::<Vec<_>>()).expect("non-empty");
    let frame = boundary
        .bbox()
        .map(|b| b.union(&site_box))
        .unwrap_or(site_box);
    let span = (frame.max.x - frame.min.x).max(frame.max.y - frame.min.y).max(1.0);
    let frame = frame.expand(span);

    let cells = (0..sites.len())
        .into_par_iter()
        .map(|i| {
            let convex = convex_cell(i, &sites, &frame);
            VoronoiCell {
                bts_id: sites[i].0.clone(),
                site: sites[i].1,
                region: boundary.clip_convex(&convex),
                convex,
            }
        })
        .collect();
    Ok(cells)
}

fn convex_cell(i: usize, sites: &[(String, Point)], frame: &BBox) -> Vec<Point> {
    let s = sites[i].1;
    let mut others: Vec<(f64, usize)> = sites
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, o)| (s.dist2(&o.1), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut cell = frame.ring();
    let mut radius2 = max_dist2(&cell, &s);
    for (d2, j) in others {
        // bisector lies beyond every vertex: no further site can cut the cell
        if d2 / 4.0 > radius2 {
            break;
        }
        let o = sites[j].1;
        let (dx, dy) = (o.x - s.x, o.y - s.y);
        let mid = Point::new((o.x + s.x) / 2.0, (o.y + s.y) / 2.0);
        cell = clip_halfplane(&cell, dx, dy, dx * mid.x + dy * mid.y);
        radius2 = max_dist2(&cell, &s);
    }
    cell
}

fn max_dist2(ring: &[Point], s: &Point) -> f64 {
    ring.iter().map(|p| p.dist2(s)).fold(0.0, f64::max)
}

/// Index of the cell containing `p` using the convex cells, or `None` when
/// outside every cell.
pub fn locate(cells: &[VoronoiCell], p: &Point) -> Option<usize> {
    cells
        .iter()
        .position(|c| super::polygon::point_in_ring(&c.convex, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(half: f64) -> Region {
        Region::from_polygon(
            vec![
                Point::new(-half, -half),
                Point::new(half, -half),
                Point::new(half, half),
                Point::new(-half, half),
            ],
            vec![],
        )
    }

    #[test]
    fn single_site_takes_whole_boundary() {
        let b = square(10.0);
        let cells = voronoi(&[("a".into(), Point::new(3.0, 1.0))], &b).unwrap();
        assert!((cells[0].area() - b.area()).abs() < 1e-9);
    }

    #[test]
    fn two_symmetric_sites_split_at_x0() {
        let b = square(10.0);
        let cells = voronoi(
            &[
                ("r".into(), Point::new(4.0, 2.0)),
                ("l".into(), Point::new(-4.0, 2.0)),
            ],
            &b,
        )
        .unwrap();
        assert_eq!(cells[0].bts_id, "l");
        for c in &cells {
            assert!((c.area() - 200.0).abs() < 1e-9);
            let bb = c.region.bbox().unwrap();
            if c.bts_id == "l" {
                assert!((bb.max.x - 0.0).abs() < 1e-9 && (bb.min.x + 10.0).abs() < 1e-9);
            } else {
                assert!((bb.min.x - 0.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn duplicate_sites_are_fatal() {
        let err = voronoi(
            &[
                ("a".into(), Point::new(1.0, 1.0)),
                ("b".into(), Point::new(1.0, 1.0)),
            ],
            &square(5.0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("a=b"));
    }
}
