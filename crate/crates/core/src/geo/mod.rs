//! Tower coverage polygons, hexagonal discretization and user disaggregation.

pub mod hex;
pub mod polygon;
pub mod voronoi;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use hex::{assign_hexes, build_hex_grid, disaggregate, hex_area, hexes_per_tower, HexCell, HexCoord};
pub use polygon::{BBox, Point, Region};
pub use voronoi::{voronoi, VoronoiCell};

use crate::ingest::TowerRegistry;

/// Meters per degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Padding around the study bounding box accepted by [`ProjectedPlane::project`].
pub const PROJECTION_PAD_M: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("point ({lon}, {lat}) outside the study area (padded by 10 km)")]
    OutOfBounds { lon: f64, lat: f64 },
    #[error("no Voronoi sites")]
    NoSites,
    #[error("duplicate projected sites: {0}")]
    DuplicateSites(String),
    #[error("hex edge must be positive, got {0}")]
    BadEdge(f64),
    #[error("invalid hex id `{0}`")]
    BadHexId(String),
    #[error("tower {0} has users but no assigned hexagons")]
    TowerWithoutHexes(String),
    #[error("boundary: {0}")]
    Boundary(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Local equirectangular projection centred on the study area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPlane {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub m_per_deg_lon: f64,
    pub m_per_deg_lat: f64,
    /// (min_lon, min_lat, max_lon, max_lat) after padding.
    pub bounds: (f64, f64, f64, f64),
}

impl ProjectedPlane {
    pub fn new(origin_lon: f64, origin_lat: f64, bbox: (f64, f64, f64, f64)) -> Self {
        let m_per_deg_lat = METERS_PER_DEGREE;
        let m_per_deg_lon = METERS_PER_DEGREE * origin_lat.to_radians().cos();
        let pad_lat = PROJECTION_PAD_M / m_per_deg_lat;
        let pad_lon = PROJECTION_PAD_M / m_per_deg_lon;
        Self {
            origin_lon,
            origin_lat,
            m_per_deg_lon,
            m_per_deg_lat,
            bounds: (bbox.0 - pad_lon, bbox.1 - pad_lat, bbox.2 + pad_lon, bbox.3 + pad_lat),
        }
    }

    pub fn project(&self, lon: f64, lat: f64) -> Result<Point, GeoError> {
        let (x0, y0, x1, y1) = self.bounds;
        if !(lon >= x0 && lon <= x1 && lat >= y0 && lat <= y1) {
            return Err(GeoError::OutOfBounds { lon, lat });
        }
        Ok(Point::new(
            (lon - self.origin_lon) * self.m_per_deg_lon,
            (lat - self.origin_lat) * self.m_per_deg_lat,
        ))
    }

    pub fn unproject(&self, p: &Point) -> (f64, f64) {
        (
            self.origin_lon + p.x / self.m_per_deg_lon,
            self.origin_lat + p.y / self.m_per_deg_lat,
        )
    }
}

/// Study boundary in WGS84 degrees: polygons of (outer, holes...) rings.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyBoundary {
    pub polygons: Vec<Vec<Vec<(f64, f64)>>>,
}

impl StudyBoundary {
    pub fn load(path: &Path) -> Result<Self, GeoError> {
        let text = std::fs::read_to_string(path).map_err(|source| GeoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| GeoError::Boundary(e.to_string()))?;
        Self::from_geojson(&v)
    }

    pub fn from_geojson(v: &Value) -> Result<Self, GeoError> {
        let geom = match v["type"].as_str() {
            Some("FeatureCollection") => {
                let feats = v["features"]
                    .as_array()
                    .ok_or_else(|| GeoError::Boundary("features missing".into()))?;
                if feats.len() != 1 {
                    return Err(GeoError::Boundary(format!(
                        "expected exactly one feature, found {}",
                        feats.len()
                    )));
                }
                &feats[0]["geometry"]
            }
            Some("Feature") => &v["geometry"],
            _ => v,
        };
        let polys = match geom["type"].as_str() {
            Some("Polygon") => vec![parse_polygon(&geom["coordinates"])?],
            Some("MultiPolygon") => geom["coordinates"]
                .as_array()
                .ok_or_else(|| GeoError::Boundary("bad MultiPolygon".into()))?
                .iter()
                .map(parse_polygon)
                .collect::<Result<_, _>>()?,
            other => {
                return Err(GeoError::Boundary(format!(
                    "expected Polygon or MultiPolygon, found {other:?}"
                )))
            }
        };
        Ok(StudyBoundary { polygons: polys })
    }

    pub fn to_geojson(&self) -> Value {
        let coords: Vec<Value> = self
            .polygons
            .iter()
            .map(|rings| {
                json!(rings
                    .iter()
                    .map(|r| {
                        let mut pts: Vec<[f64; 2]> = r.iter().map(|&(x, y)| [x, y]).collect();
                        if let Some(&first) = pts.first() {
                            pts.push(first);
                        }
                        pts
                    })
                    .collect::<Vec<_>>())
            })
            .collect();
        json!({
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {},
                "geometry": {"type": "MultiPolygon", "coordinates": coords}
            }]
        })
    }

    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in self.polygons.iter().flatten().flatten() {
            b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
        }
        b
    }

    /// Area centroid computed in degree space (adequate at city scale).
    pub fn centroid(&self) -> (f64, f64) {
        let region = self.region_with(|&(x, y)| Point::new(x, y));
        match region.centroid() {
            Some(c) => (c.x, c.y),
            None => {
                let b = self.bbox();
                ((b.0 + b.2) / 2.0, (b.1 + b.3) / 2.0)
            }
        }
    }

    pub fn plane(&self) -> ProjectedPlane {
        let (lon, lat) = self.centroid();
        ProjectedPlane::new(lon, lat, self.bbox())
    }

    pub fn region(&self, plane: &ProjectedPlane) -> Result<Region, GeoError> {
        let mut err = None;
        let region = self.region_with(|&(lon, lat)| match plane.project(lon, lat) {
            Ok(p) => p,
            Err(e) => {
                err.get_or_insert(e);
                Point::new(0.0, 0.0)
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(region),
        }
    }

    fn region_with(&self, mut f: impl FnMut(&(f64, f64)) -> Point) -> Region {
        let mut rings = Vec::new();
        for poly in &self.polygons {
            let mut iter = poly.iter();
            let Some(outer) = iter.next() else { continue };
            let outer: Vec<Point> = outer.iter().map(&mut f).collect();
            let holes: Vec<Vec<Point>> = iter.map(|r| r.iter().map(&mut f).collect()).collect();
            rings.extend(Region::from_polygon(outer, holes).rings);
        }
        Region { rings }
    }
}

fn parse_polygon(v: &Value) -> Result<Vec<Vec<(f64, f64)>>, GeoError> {
    let rings = v
        .as_array()
        .ok_or_else(|| GeoError::Boundary("polygon coordinates must be an array".into()))?;
    rings
        .iter()
        .map(|ring| {
            let pts = ring
                .as_array()
                .ok_or_else(|| GeoError::Boundary("ring must be an array".into()))?;
            let mut out: Vec<(f64, f64)> = pts
                .iter()
                .map(|p| match (p[0].as_f64(), p[1].as_f64()) {
                    (Some(x), Some(y)) if x.is_finite() && y.is_finite() => Ok((x, y)),
                    _ => Err(GeoError::Boundary(format!("bad position {p}"))),
                })
                .collect::<Result<_, _>>()?;
            if out.len() > 1 && out.first() == out.last() {
                out.pop();
            }
            if out.len() < 3 {
                return Err(GeoError::Boundary("ring with fewer than 3 positions".into()));
            }
            Ok(out)
        })
        .collect()
}

/// Projected tower sites, in id order.
pub fn project_towers(
    registry: &TowerRegistry,
    plane: &ProjectedPlane,
) -> Result<Vec<(String, Point)>, GeoError> {
    registry
        .towers()
        .iter()
        .map(|t| Ok((t.bts_id.clone(), plane.project(t.lon, t.lat)?)))
        .collect()
}

fn ring_lonlat(plane: &ProjectedPlane, ring: &[Point]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = ring
        .iter()
        .map(|p| {
            let (lon, lat) = plane.unproject(p);
            [lon, lat]
        })
        .collect();
    if let Some(&f) = pts.first() {
        pts.push(f);
    }
    pts
}

/// GeoJSON polygon geometry of a hex in WGS84.
pub fn hex_geometry(plane: &ProjectedPlane, hex: &HexCell) -> Value {
    json!({"type": "Polygon", "coordinates": [ring_lonlat(plane, &hex.polygon())]})
}

pub fn hexgrid_geojson(plane: &ProjectedPlane, hexes: &[HexCell]) -> Value {
    let features: Vec<Value> = hexes
        .iter()
        .map(|h| {
            json!({
                "type": "Feature",
                "properties": {
                    "hex_id": h.hex_id.to_string(),
                    "assigned_bts": h.assigned_bts,
                    "user_share": h.user_share,
                    "opportunity_share": h.opportunity_share,
                },
                "geometry": hex_geometry(plane, h),
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn voronoi_geojson(plane: &ProjectedPlane, cells: &[VoronoiCell]) -> Value {
    let features: Vec<Value> = cells
        .iter()
        .map(|c| {
            let polys: Vec<Value> = c
                .region
                .rings
                .iter()
                .map(|r| json!([ring_lonlat(plane, r)]))
                .collect();
            json!({
                "type": "Feature",
                "properties": {"bts_id": c.bts_id, "area_m2": c.area()},
                "geometry": {"type": "MultiPolygon", "coordinates": polys},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}
