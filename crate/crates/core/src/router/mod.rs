//! Walk + public transit travel times between hex centroids.

pub mod matrix;
pub mod raptor;
pub mod timetable;
pub mod walk;

use std::path::Path;

use chrono::Weekday;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, ProjectedPlane};

pub use matrix::TravelTimeMatrix;
pub use raptor::{raptor, RaptorScratch};
pub use timetable::{load_gtfs, RawTrip, TimetableInput, TimetableNetwork};
pub use walk::WalkGraph;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file} line {line}: dangling reference, {what}")]
    Dangling { file: String, line: u64, what: String },
    #[error("{file} line {line}: bad time `{value}`")]
    BadTime { file: String, line: u64, value: String },
    #[error("trip {trip_id}: times decrease at stop index {index}")]
    DecreasingTimes { trip_id: String, index: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouterConfig {
    pub walk_speed_kmh: f64,
    pub min_transfer_s: f64,
    pub max_access_walk_m: f64,
    /// Departure sampling step inside the window.
    pub step_s: u32,
    /// Window start, seconds after midnight (inclusive).
    pub window_start_s: u32,
    /// Window end, seconds after midnight (exclusive).
    pub window_end_s: u32,
    #[serde(with = "weekday_serde")]
    pub service_day: Weekday,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            walk_speed_kmh: 5.0,
            min_transfer_s: 0.0,
            max_access_walk_m: 1000.0,
            step_s: 600,
            window_start_s: 7 * 3600,
            window_end_s: 9 * 3600,
            service_day: Weekday::Wed,
        }
    }
}

impl RouterConfig {
    pub fn walk_speed_mps(&self) -> f64 {
        self.walk_speed_kmh * 1000.0 / 3600.0
    }

    pub fn validate(&self) -> Result<(), RouterError> {
        let bad = |m: &str| Err(RouterError::Invalid(m.to_string()));
        if !(self.walk_speed_kmh > 0.0 && self.walk_speed_kmh.is_finite()) {
            return bad("router.walk_speed_kmh must be positive");
        }
        if !(self.min_transfer_s >= 0.0 && self.min_transfer_s.is_finite()) {
            return bad("router.min_transfer_s must be non-negative");
        }
        if !(self.max_access_walk_m > 0.0 && self.max_access_walk_m.is_finite()) {
            return bad("router.max_access_walk_m must be positive");
        }
        if self.step_s == 0 {
            return bad("router.step_s must be positive");
        }
        if self.window_start_s >= self.window_end_s || self.window_end_s > 48 * 3600 {
            return bad("router window must satisfy start < end <= 48:00");
        }
        Ok(())
    }
}

mod weekday_serde {
    use chrono::Weekday;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Weekday, s: S) -> Result<S::Ok, S::Error> {
        let name = match d {
            Weekday::Mon => "monday",
            Weekday::Tue => "tuesday",
            Weekday::Wed => "wednesday",
            Weekday::Thu => "thursday",
            Weekday::Fri => "friday",
            Weekday::Sat => "saturday",
            Weekday::Sun => "sunday",
        };
        s.serialize_str(name)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Weekday, D::Error> {
        let s = String::deserialize(d)?;
        s.parse::<Weekday>()
            .map_err(|_| serde::de::Error::custom(format!("unknown weekday `{s}`")))
    }
}

/// Immutable routing network shared read-only by all queries.
#[derive(Debug, Clone)]
pub struct Network {
    pub walk: WalkGraph,
    pub transit: TimetableNetwork,
    pub cfg: RouterConfig,
}

impl Network {
    pub fn new(walk: WalkGraph, input: &TimetableInput, cfg: RouterConfig) -> Result<Self, RouterError> {
        cfg.validate()?;
        let transit = TimetableNetwork::build(input, &walk, &cfg)?;
        Ok(Self { walk, transit, cfg })
    }

    /// Loads the GTFS subset and street files and validates the result.
    pub fn build(
        gtfs_dir: &Path,
        streets_dir: &Path,
        plane: &ProjectedPlane,
        cfg: RouterConfig,
    ) -> Result<Self, RouterError> {
        cfg.validate()?;
        let walk = WalkGraph::load(streets_dir, plane, cfg.max_access_walk_m)?;
        let input = load_gtfs(gtfs_dir, plane, &cfg)?;
        Self::new(walk, &input, cfg)
    }
}

/// Deserializes every row, pairing it with its 1-based line number.
pub(crate) fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, RouterError> {
    let p = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(&p, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(&p, e))?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&p, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row: T = rec.deserialize(Some(&headers)).map_err(|e| csv_error(&p, e))?;
        out.push((line, row));
    }
    Ok(out)
}

pub(crate) fn read_csv_optional<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, RouterError> {
    if path.exists() {
        read_csv(path)
    } else {
        Ok(Vec::new())
    }
}

pub(crate) fn read_csv_tuples<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, RouterError> {
    let p = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(&p, e))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(&p, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push((line, rec.deserialize(None).map_err(|e| csv_error(&p, e))?));
    }
    Ok(out)
}

fn csv_error(path: &str, e: csv::Error) -> RouterError {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(source) = e.into_kind() {
            return RouterError::Io {
                path: path.to_string(),
                source,
            };
        }
        unreachable!("is_io_error implies ErrorKind::Io");
    }
    RouterError::Csv {
        path: path.to_string(),
        source: e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{HexCoord, Point};
    use timetable::RawTrip;

    fn two_node_walk() -> WalkGraph {
        WalkGraph::new(
            vec![
                ("a".into(), Point::new(0.0, 0.0)),
                ("b".into(), Point::new(1000.0, 0.0)),
            ],
            &[("a".into(), "b".into(), 1000.0)],
            1000.0,
        )
        .unwrap()
    }

    #[test]
    fn identical_points_take_zero() {
        let net = Network::new(two_node_walk(), &TimetableInput::default(), RouterConfig::default()).unwrap();
        let p = Point::new(10.0, 10.0);
        assert_eq!(net.shortest_time(&p, &p), Some(0.0));
    }

    #[test]
    fn kilometre_walk_is_twelve_minutes() {
        let net = Network::new(two_node_walk(), &TimetableInput::default(), RouterConfig::default()).unwrap();
        let t = net
            .shortest_time(&Point::new(0.0, 0.0), &Point::new(1000.0, 0.0))
            .unwrap();
        assert!((t - 12.0).abs() < 1e-12, "{t}");
    }

    #[test]
    fn far_points_are_unreachable() {
        let net = Network::new(two_node_walk(), &TimetableInput::default(), RouterConfig::default()).unwrap();
        assert_eq!(
            net.shortest_time(&Point::new(0.0, 0.0), &Point::new(50_000.0, 0.0)),
            None
        );
    }

    #[test]
    fn transit_beats_long_walk() {
        // 10 km street with stops at both ends and a 10-minute bus
        let walk = WalkGraph::new(
            vec![
                ("a".into(), Point::new(0.0, 0.0)),
                ("b".into(), Point::new(10_000.0, 0.0)),
            ],
            &[("a".into(), "b".into(), 10_000.0)],
            1000.0,
        )
        .unwrap();
        let input = TimetableInput {
            stops: vec![
                ("s1".into(), Point::new(0.0, 100.0)),
                ("s2".into(), Point::new(10_000.0, 100.0)),
            ],
            trips: vec![RawTrip {
                route_id: "r".into(),
                trip_id: "t".into(),
                stop_times: vec![("s1".into(), 25_500, 25_500), ("s2".into(), 26_100, 26_100)],
            }],
            transfers: vec![],
        };
        let net = Network::new(walk, &input, RouterConfig::default()).unwrap();
        let t = net
            .shortest_time(&Point::new(0.0, 0.0), &Point::new(10_000.0, 0.0))
            .unwrap();
        // only the 07:00 departure catches the 07:05 bus: 72 s walk, wait, 600 s ride, 72 s walk
        assert!((t - 972.0 / 60.0).abs() < 1e-9, "{t}");
        assert!(t < 120.0);
    }

    #[test]
    fn matrix_diagonal_and_ids() {
        let net = Network::new(two_node_walk(), &TimetableInput::default(), RouterConfig::default()).unwrap();
        let hexes = vec![
            (HexCoord::new(1, 0), Point::new(1000.0, 0.0)),
            (HexCoord::new(0, 0), Point::new(0.0, 0.0)),
        ];
        let m = net.build_matrix(&hexes, &hexes);
        assert_eq!(m.origins, vec![HexCoord::new(0, 0), HexCoord::new(1, 0)]);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert!((m.get(0, 1) - 12.0).abs() < 1e-12);

        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), &buf).unwrap();
        assert_eq!(TravelTimeMatrix::read_csv(f.path()).unwrap(), m);
    }

    #[test]
    fn departures_are_half_open() {
        let net = Network::new(two_node_walk(), &TimetableInput::default(), RouterConfig::default()).unwrap();
        let d = net.departures();
        assert_eq!(d.len(), 12);
        assert_eq!(d[0], 25_200);
        assert_eq!(*d.last().unwrap(), 32_400 - 600);
    }
}
