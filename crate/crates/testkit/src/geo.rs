//! Sampling oracles for tessellation and hex assignment.

use std::collections::BTreeMap;

use rand::Rng;

use commute_core::geo::Point;

/// Index of the site closest to `p`; the first one wins exact ties.
pub fn nearest_site(sites: &[(String, Point)], p: &Point) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, (_, s)) in sites.iter().enumerate() {
        let d = (s.x - p.x).hypot(s.y - p.y);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Corners of a pointy-top hexagon, counter-clockwise.
pub fn hexagon(center: &Point, edge: f64) -> [Point; 6] {
    std::array::from_fn(|k| {
        let a = (30.0 + 60.0 * k as f64).to_radians();
        Point::new(center.x + edge * a.cos(), center.y + edge * a.sin())
    })
}

fn in_convex(poly: &[Point], p: &Point) -> bool {
    (0..poly.len()).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
    })
}

/// Fraction of the hexagon's area closest to each site, estimated from
/// `samples` uniform points. Points for which `inside` is false count toward
/// no site. Sorted by descending share.
pub fn monte_carlo_shares<R: Rng>(
    rng: &mut R,
    center: &Point,
    edge: f64,
    sites: &[(String, Point)],
    inside: impl Fn(&Point) -> bool,
    samples: usize,
) -> Vec<(String, f64)> {
    let poly = hexagon(center, edge);
    let mut hits: BTreeMap<usize, usize> = BTreeMap::new();
    let mut drawn = 0;
    while drawn < samples {
        let p = Point::new(
            center.x + rng.gen_range(-edge..edge),
            center.y + rng.gen_range(-edge..edge),
        );
        if !in_convex(&poly, &p) {
            continue;
        }
        drawn += 1;
        if inside(&p) {
            *hits.entry(nearest_site(sites, &p)).or_default() += 1;
        }
    }
    let mut out: Vec<(String, f64)> = hits
        .into_iter()
        .map(|(i, n)| (sites[i].0.clone(), n as f64 / samples as f64))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Random distinct sites inside the axis-aligned box.
pub fn random_sites<R: Rng>(rng: &mut R, n: usize, min: Point, max: Point) -> Vec<(String, Point)> {
    (0..n)
        .map(|i| {
            (
                format!("s{i:03}"),
                Point::new(rng.gen_range(min.x..max.x), rng.gen_range(min.y..max.y)),
            )
        })
        .collect()
}
