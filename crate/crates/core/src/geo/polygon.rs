//! Planar polygon primitives: signed area, half-plane clipping and
//! point membership.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, o: &Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn dist2(&self, o: &Point) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn of(points: &[Point]) -> Option<BBox> {
        let first = points.first()?;
        let mut b = BBox {
            min: *first,
            max: *first,
        };
        for p in &points[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn union(&self, o: &BBox) -> BBox {
        BBox {
            min: Point::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Point::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    pub fn expand(&self, by: f64) -> BBox {
        BBox {
            min: Point::new(self.min.x - by, self.min.y - by),
            max: Point::new(self.max.x + by, self.max.y + by),
        }
    }

    /// Counter-clockwise rectangle ring.
    pub fn ring(&self) -> Vec<Point> {
        vec![
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ]
    }
}

/// Shoelace signed area; positive for counter-clockwise rings. Rings are
/// implicitly closed (first point is not repeated).
pub fn signed_area(ring: &[Point]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut prev = ring[ring.len() - 1];
    for p in ring {
        acc += prev.x * p.y - p.x * prev.y;
        prev = *p;
    }
    acc / 2.0
}

/// Area-weighted centroid of a ring with non-zero area.
pub fn ring_centroid(ring: &[Point]) -> Option<Point> {
    let a = signed_area(ring);
    if a == 0.0 {
        return None;
    }
    let (mut cx, mut cy) = (0.0, 0.0);
    let mut prev = ring[ring.len() - 1];
    for p in ring {
        let cross = prev.x * p.y - p.x * prev.y;
        cx += (prev.x + p.x) * cross;
        cy += (prev.y + p.y) * cross;
        prev = *p;
    }
    Some(Point::new(cx / (6.0 * a), cy / (6.0 * a)))
}

/// Clips a ring to the half-plane `a·x + b·y ≤ c` (Sutherland–Hodgman).
///
/// For a non-convex ring the output may contain zero-width bridges along the
/// clip line, but its signed area is the area of the intersection.
pub fn clip_halfplane(ring: &[Point], a: f64, b: f64, c: f64) -> Vec<Point> {
    let n = ring.len();
    if n == 0 {
        return Vec::new();
    }
    let side = |p: &Point| a * p.x + b * p.y - c;
    let mut out = Vec::with_capacity(n + 2);
    let mut prev = ring[n - 1];
    let mut prev_s = side(&prev);
    for &cur in ring {
        let cur_s = side(&cur);
        let cur_in = cur_s <= 0.0;
        let prev_in = prev_s <= 0.0;
        if cur_in != prev_in {
            let t = prev_s / (prev_s - cur_s);
            out.push(Point::new(
                prev.x + t * (cur.x - prev.x),
                prev.y + t * (cur.y - prev.y),
            ));
        }
        if cur_in {
            out.push(cur);
        }
        prev = cur;
        prev_s = cur_s;
    }
    if out.len() < 3 {
        out.clear();
    }
    out
}

/// Clips `ring` by every edge of the counter-clockwise convex polygon `clip`.
pub fn clip_convex(ring: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out = ring.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let p = clip[i];
        let q = clip[(i + 1) % n];
        // inside is the left of p→q: cross(q-p, x-p) ≥ 0
        let a = q.y - p.y;
        let b = -(q.x - p.x);
        let c = a * p.x + b * p.y;
        out = clip_halfplane(&out, a, b, c);
    }
    out
}

/// Even-odd point-in-ring test.
pub fn point_in_ring(ring: &[Point], pt: &Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (pi, pj) = (ring[i], ring[j]);
        if (pi.y > pt.y) != (pj.y > pt.y) {
            let x = pj.x + (pt.y - pj.y) / (pi.y - pj.y) * (pi.x - pj.x);
            if pt.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// A planar area made of rings: outer boundaries counter-clockwise, holes
/// clockwise, so the total area is the sum of signed ring areas.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub rings: Vec<Vec<Point>>,
}

impl Region {
    pub fn from_polygon(outer: Vec<Point>, holes: Vec<Vec<Point>>) -> Region {
        let mut rings = Vec::with_capacity(1 + holes.len());
        rings.push(oriented(outer, true));
        rings.extend(holes.into_iter().map(|h| oriented(h, false)));
        Region { rings }
    }

    pub fn area(&self) -> f64 {
        self.rings.iter().map(|r| signed_area(r)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    pub fn bbox(&self) -> Option<BBox> {
        self.rings
            .iter()
            .filter_map(|r| BBox::of(r))
            .reduce(|a, b| a.union(&b))
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.rings.iter().filter(|r| point_in_ring(r, p)).count() % 2 == 1
    }

    pub fn clip_convex(&self, clip: &[Point]) -> Region {
        Region {
            rings: self
                .rings
                .iter()
                .map(|r| clip_convex(r, clip))
                .filter(|r| !r.is_empty())
                .collect(),
        }
    }

    pub fn centroid(&self) -> Option<Point> {
        let a = self.area();
        if a == 0.0 {
            return None;
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for r in &self.rings {
            if let Some(c) = ring_centroid(r) {
                let ra = signed_area(r);
                cx += c.x * ra;
                cy += c.y * ra;
            }
        }
        Some(Point::new(cx / a, cy / a))
    }
}

fn oriented(mut ring: Vec<Point>, ccw: bool) -> Vec<Point> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if (signed_area(&ring) > 0.0) != ccw {
        ring.reverse();
    }
    ring
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(s: f64) -> Vec<Point> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(s, 0.0),
            Point::new(s, s),
            Point::new(0.0, s),
        ]
    }

    #[test]
    fn area_and_orientation() {
        let sq = square(2.0);
        assert_eq!(signed_area(&sq), 4.0);
        let rev: Vec<Point> = sq.iter().rev().copied().collect();
        assert_eq!(signed_area(&rev), -4.0);
        let r = Region::from_polygon(rev, vec![]);
        assert_eq!(r.area(), 4.0);
    }

    #[test]
    fn halfplane_clip_of_square() {
        let half = clip_halfplane(&square(2.0), 1.0, 0.0, 1.0);
        assert!((signed_area(&half) - 2.0).abs() < 1e-12);
        assert!(clip_halfplane(&square(2.0), 1.0, 0.0, -1.0).is_empty());
    }

    #[test]
    fn concave_clip_keeps_true_area() {
        // U shape: 3x3 square minus the 1x2 notch at top middle
        let u = vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 3.0),
            Point::new(2.0, 3.0),
            Point::new(2.0, 1.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 3.0),
            Point::new(0.0, 3.0),
        ];
        assert_eq!(signed_area(&u), 7.0);
        // keep y >= 2: two separate 1x1 prongs
        let top = clip_halfplane(&u, 0.0, -1.0, -2.0);
        assert!((signed_area(&top) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn holes_subtract() {
        let hole = vec![
            Point::new(1.0, 1.0),
            Point::new(2.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(1.0, 2.0),
        ];
        let r = Region::from_polygon(square(3.0), vec![hole]);
        assert_eq!(r.area(), 8.0);
        assert!(!r.contains(&Point::new(1.5, 1.5)));
        assert!(r.contains(&Point::new(0.5, 1.5)));
    }

    #[test]
    fn centroid_of_square() {
        let c = Region::from_polygon(square(2.0), vec![]).centroid().unwrap();
        assert!((c.x - 1.0).abs() < 1e-12 && (c.y - 1.0).abs() < 1e-12);
    }
}
