//! Transit timetable: GTFS subset loading, validation and RAPTOR route layout.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use chrono::Weekday;
use serde::Deserialize;

use crate::geo::{Point, ProjectedPlane};

use super::walk::WalkGraph;
use super::{read_csv, read_csv_optional, RouterConfig, RouterError};

/// One scheduled trip before route layout. Times are seconds after
/// service-day midnight.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrip {
    pub route_id: String,
    pub trip_id: String,
    /// (stop_id, arrival, departure) in stop-sequence order.
    pub stop_times: Vec<(String, u32, u32)>,
}

/// Everything needed to lay out a timetable, independent of file formats.
#[derive(Debug, Clone, Default)]
pub struct TimetableInput {
    pub stops: Vec<(String, Point)>,
    pub trips: Vec<RawTrip>,
    /// Explicit stop-to-stop transfers (from, to, seconds).
    pub transfers: Vec<(String, String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub id: String,
    pub point: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripTimes {
    pub trip_id: String,
    pub arr: Vec<u32>,
    pub dep: Vec<u32>,
}

/// A RAPTOR route: trips sharing one stop pattern, none overtaking another.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub id: String,
    pub stops: Vec<u32>,
    /// Sorted by departure at every position.
    pub trips: Vec<TripTimes>,
}

#[derive(Debug, Clone)]
pub struct TimetableNetwork {
    pub stops: Vec<Stop>,
    pub routes: Vec<Route>,
    /// (route index, position in route) for every stop.
    pub stop_routes: Vec<Vec<(u32, u32)>>,
    /// Walking links between stops, seconds, sorted by target.
    pub transfers: Vec<Vec<(u32, f64)>>,
    /// Nearest street node and snapping distance, when within reach.
    pub stop_snap: Vec<Option<(u32, f64)>>,
    /// Stops snapped to each street node.
    pub node_stops: Vec<Vec<(u32, f64)>>,
    pub source_route_count: usize,
}

impl TimetableNetwork {
    pub fn trip_count(&self) -> usize {
        self.routes.iter().map(|r| r.trips.len()).sum()
    }

    pub fn stop_index(&self, id: &str) -> Option<u32> {
        self.stops
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn build(
        input: &TimetableInput,
        walk: &WalkGraph,
        cfg: &RouterConfig,
    ) -> Result<Self, RouterError> {
        let mut stops: Vec<Stop> = input
            .stops
            .iter()
            .map(|(id, p)| Stop {
                id: id.clone(),
                point: *p,
            })
            .collect();
        stops.sort_by(|a, b| a.id.cmp(&b.id));
        for w in stops.windows(2) {
            if w[0].id == w[1].id {
                return Err(RouterError::Invalid(format!("duplicate stop `{}`", w[0].id)));
            }
        }
        let index: HashMap<&str, u32> = stops
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i as u32))
            .collect();

        // validate and group by (route_id, pattern)
        let mut patterns: BTreeMap<(String, Vec<u32>), Vec<TripTimes>> = BTreeMap::new();
        let mut source_routes: HashSet<&str> = HashSet::new();
        for trip in &input.trips {
            validate_trip(trip)?;
            if trip.stop_times.len() < 2 {
                continue;
            }
            let mut seq = Vec::with_capacity(trip.stop_times.len());
            for (s, _, _) in &trip.stop_times {
                seq.push(*index.get(s.as_str()).ok_or_else(|| RouterError::Dangling {
                    file: "stop_times.txt".into(),
                    line: 0,
                    what: format!("trip `{}` references unknown stop `{s}`", trip.trip_id),
                })?);
            }
            source_routes.insert(trip.route_id.as_str());
            patterns
                .entry((trip.route_id.clone(), seq))
                .or_default()
                .push(TripTimes {
                    trip_id: trip.trip_id.clone(),
                    arr: trip.stop_times.iter().map(|t| t.1).collect(),
                    dep: trip.stop_times.iter().map(|t| t.2).collect(),
                });
        }

        let mut routes = Vec::new();
        for ((route_id, seq), mut trips) in patterns {
            let pattern_no = routes.len();
            trips.sort_by(|a, b| a.dep[0].cmp(&b.dep[0]).then_with(|| a.trip_id.cmp(&b.trip_id)));
            // split overtaking trips into extra routes on the same pattern
            let mut chains: Vec<Vec<TripTimes>> = Vec::new();
            for t in trips {
                match chains
                    .iter_mut()
                    .find(|c| !overtakes(&t, c.last().expect("non-empty chain")))
                {
                    Some(c) => c.push(t),
                    None => chains.push(vec![t]),
                }
            }
            for (k, trips) in chains.into_iter().enumerate() {
                routes.push(Route {
                    id: format!("{route_id}#{pattern_no}.{k}"),
                    stops: seq.clone(),
                    trips,
                });
            }
        }

        let mut stop_routes = vec![Vec::new(); stops.len()];
        for (ri, r) in routes.iter().enumerate() {
            for (pos, &s) in r.stops.iter().enumerate() {
                stop_routes[s as usize].push((ri as u32, pos as u32));
            }
        }

        let reach = cfg.max_access_walk_m;
        let stop_snap: Vec<Option<(u32, f64)>> =
            stops.iter().map(|s| walk.nearest(&s.point, reach)).collect();
        let mut node_stops = vec![Vec::new(); walk.len()];
        for (si, snap) in stop_snap.iter().enumerate() {
            if let Some((n, d)) = snap {
                node_stops[*n as usize].push((si as u32, *d));
            }
        }

        let speed = cfg.walk_speed_mps();
        let mut transfers: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); stops.len()];
        for (si, snap) in stop_snap.iter().enumerate() {
            let Some((node, d0)) = *snap else { continue };
            let dist = walk.distances(node, reach - d0);
            for (n, d) in dist.iter().enumerate() {
                if !d.is_finite() {
                    continue;
                }
                for &(sj, d1) in &node_stops[n] {
                    let total = d0 + d + d1;
                    if sj as usize != si && total <= reach {
                        let e = transfers[si].entry(sj).or_insert(f64::INFINITY);
                        *e = e.min(total / speed);
                    }
                }
            }
        }
        for (from, to, secs) in &input.transfers {
            let f = *index.get(from.as_str()).ok_or_else(|| RouterError::Dangling {
                file: "transfers.txt".into(),
                line: 0,
                what: format!("unknown stop `{from}`"),
            })?;
            let t = *index.get(to.as_str()).ok_or_else(|| RouterError::Dangling {
                file: "transfers.txt".into(),
                line: 0,
                what: format!("unknown stop `{to}`"),
            })?;
            if f != t {
                let e = transfers[f as usize].entry(t).or_insert(f64::INFINITY);
                *e = e.min(*secs);
            }
        }

        Ok(Self {
            stops,
            routes,
            stop_routes,
            transfers: transfers.into_iter().map(|m| m.into_iter().collect()).collect(),
            stop_snap,
            node_stops,
            source_route_count: source_routes.len(),
        })
    }
}

fn validate_trip(trip: &RawTrip) -> Result<(), RouterError> {
    let mut prev_dep: Option<u32> = None;
    for (k, (_, arr, dep)) in trip.stop_times.iter().enumerate() {
        let bad = prev_dep.is_some_and(|p| *arr < p) || dep < arr;
        if bad {
            return Err(RouterError::DecreasingTimes {
                trip_id: trip.trip_id.clone(),
                index: k,
            });
        }
        prev_dep = Some(*dep);
    }
    Ok(())
}

/// `t` (departing no earlier at the first stop) is earlier than `prev` somewhere.
fn overtakes(t: &TripTimes, prev: &TripTimes) -> bool {
    t.arr.iter().zip(&prev.arr).any(|(a, b)| a < b) || t.dep.iter().zip(&prev.dep).any(|(a, b)| a < b)
}

/// Parses `HH:MM:SS`, allowing hours past 24.
pub fn parse_gtfs_time(s: &str) -> Option<u32> {
    let mut it = s.trim().split(':');
    let h: u32 = it.next()?.parse().ok()?;
    let m: u32 = it.next()?.parse().ok()?;
    let sec: u32 = it.next()?.parse().ok()?;
    if it.next().is_some() || m > 59 || sec > 59 {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

#[derive(Deserialize)]
struct StopRow {
    stop_id: String,
    stop_lat: f64,
    stop_lon: f64,
}

#[derive(Deserialize)]
struct RouteRow {
    route_id: String,
}

#[derive(Deserialize)]
struct TripRow {
    route_id: String,
    trip_id: String,
    service_id: String,
}

#[derive(Deserialize)]
struct StopTimeRow {
    trip_id: String,
    arrival_time: String,
    departure_time: String,
    stop_id: String,
    stop_sequence: u32,
}

#[derive(Deserialize)]
struct CalendarRow {
    service_id: String,
    monday: u8,
    tuesday: u8,
    wednesday: u8,
    thursday: u8,
    friday: u8,
    saturday: u8,
    sunday: u8,
}

impl CalendarRow {
    fn runs_on(&self, day: Weekday) -> bool {
        let flag = match day {
            Weekday::Mon => self.monday,
            Weekday::Tue => self.tuesday,
            Weekday::Wed => self.wednesday,
            Weekday::Thu => self.thursday,
            Weekday::Fri => self.friday,
            Weekday::Sat => self.saturday,
            Weekday::Sun => self.sunday,
        };
        flag == 1
    }
}

#[derive(Deserialize)]
struct TransferRow {
    from_stop_id: String,
    to_stop_id: String,
    #[serde(default)]
    transfer_type: Option<u8>,
    #[serde(default)]
    min_transfer_time: Option<f64>,
}

#[derive(Deserialize)]
struct FrequencyRow {
    trip_id: String,
    start_time: String,
    end_time: String,
    headway_secs: u32,
}

/// Loads the GTFS subset for the configured service weekday, expanding
/// frequency-based trips into explicit ones.
pub fn load_gtfs(
    dir: &Path,
    plane: &ProjectedPlane,
    cfg: &RouterConfig,
) -> Result<TimetableInput, RouterError> {
    let stops: Vec<(u64, StopRow)> = read_csv(&dir.join("stops.txt"))?;
    let routes: Vec<(u64, RouteRow)> = read_csv(&dir.join("routes.txt"))?;
    let trips: Vec<(u64, TripRow)> = read_csv(&dir.join("trips.txt"))?;
    let stop_times: Vec<(u64, StopTimeRow)> = read_csv(&dir.join("stop_times.txt"))?;
    let calendar: Vec<(u64, CalendarRow)> = read_csv(&dir.join("calendar.txt"))?;
    let transfers: Vec<(u64, TransferRow)> = read_csv_optional(&dir.join("transfers.txt"))?;
    let frequencies: Vec<(u64, FrequencyRow)> = read_csv_optional(&dir.join("frequencies.txt"))?;

    let stop_ids: HashSet<&str> = stops.iter().map(|(_, s)| s.stop_id.as_str()).collect();
    let route_ids: HashSet<&str> = routes.iter().map(|(_, r)| r.route_id.as_str()).collect();
    let services: HashMap<&str, bool> = calendar
        .iter()
        .map(|(_, c)| (c.service_id.as_str(), c.runs_on(cfg.service_day)))
        .collect();

    let mut trip_meta: HashMap<&str, (&str, bool)> = HashMap::new();
    for (line, t) in &trips {
        if !route_ids.contains(t.route_id.as_str()) {
            return Err(dangling("trips.txt", *line, format!("unknown route_id `{}`", t.route_id)));
        }
        let Some(&active) = services.get(t.service_id.as_str()) else {
            return Err(dangling("trips.txt", *line, format!("unknown service_id `{}`", t.service_id)));
        };
        trip_meta.insert(t.trip_id.as_str(), (t.route_id.as_str(), active));
    }

    let mut times: BTreeMap<&str, Vec<(u32, &str, u32, u32)>> = BTreeMap::new();
    for (line, st) in &stop_times {
        if !trip_meta.contains_key(st.trip_id.as_str()) {
            return Err(dangling("stop_times.txt", *line, format!("unknown trip_id `{}`", st.trip_id)));
        }
        if !stop_ids.contains(st.stop_id.as_str()) {
            return Err(dangling("stop_times.txt", *line, format!("unknown stop_id `{}`", st.stop_id)));
        }
        let (arr, dep) = match (st.arrival_time.trim(), st.departure_time.trim()) {
            ("", "") => {
                return Err(RouterError::BadTime {
                    file: "stop_times.txt".into(),
                    line: *line,
                    value: String::new(),
                })
            }
            ("", d) => (d, d),
            (a, "") => (a, a),
            (a, d) => (a, d),
        };
        let parse = |v: &str| {
            parse_gtfs_time(v).ok_or_else(|| RouterError::BadTime {
                file: "stop_times.txt".into(),
                line: *line,
                value: v.to_string(),
            })
        };
        times
            .entry(st.trip_id.as_str())
            .or_default()
            .push((st.stop_sequence, st.stop_id.as_str(), parse(arr)?, parse(dep)?));
    }

    let mut freq: HashMap<&str, Vec<(u32, u32, u32)>> = HashMap::new();
    for (line, f) in &frequencies {
        if !trip_meta.contains_key(f.trip_id.as_str()) {
            return Err(dangling("frequencies.txt", *line, format!("unknown trip_id `{}`", f.trip_id)));
        }
        let parse = |v: &str| {
            parse_gtfs_time(v).ok_or_else(|| RouterError::BadTime {
                file: "frequencies.txt".into(),
                line: *line,
                value: v.to_string(),
            })
        };
        if f.headway_secs == 0 {
            return Err(RouterError::Invalid(format!("frequencies.txt line {line}: zero headway")));
        }
        freq.entry(f.trip_id.as_str())
            .or_default()
            .push((parse(&f.start_time)?, parse(&f.end_time)?, f.headway_secs));
    }

    let mut raw_trips = Vec::new();
    for (trip_id, mut st) in times {
        let (route_id, active) = trip_meta[trip_id];
        if !active {
            continue;
        }
        st.sort_by_key(|s| s.0);
        for w in st.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(RouterError::Invalid(format!(
                    "trip `{trip_id}` repeats stop_sequence {}",
                    w[0].0
                )));
            }
        }
        let template: Vec<(String, u32, u32)> =
            st.iter().map(|s| (s.1.to_string(), s.2, s.3)).collect();
        match freq.get(trip_id) {
            None => raw_trips.push(RawTrip {
                route_id: route_id.to_string(),
                trip_id: trip_id.to_string(),
                stop_times: template,
            }),
            Some(windows) => {
                let base = template[0].2;
                for &(start, end, headway) in windows {
                    let mut t = start;
                    while t < end {
                        raw_trips.push(RawTrip {
                            route_id: route_id.to_string(),
                            trip_id: format!("{trip_id}@{t}"),
                            stop_times: template
                                .iter()
                                .map(|(s, a, d)| (s.clone(), a - base + t, d - base + t))
                                .collect(),
                        });
                        t += headway;
                    }
                }
            }
        }
    }

    let mut input = TimetableInput {
        stops: stops
            .into_iter()
            .map(|(_, s)| Ok((s.stop_id, plane.project(s.stop_lon, s.stop_lat)?)))
            .collect::<Result<_, RouterError>>()?,
        trips: raw_trips,
        transfers: Vec::new(),
    };
    let pos: HashMap<&str, Point> = input.stops.iter().map(|(id, p)| (id.as_str(), *p)).collect();
    for (line, t) in &transfers {
        if t.transfer_type == Some(3) {
            continue;
        }
        let (Some(a), Some(b)) = (pos.get(t.from_stop_id.as_str()), pos.get(t.to_stop_id.as_str())) else {
            return Err(dangling("transfers.txt", *line, "unknown stop".into()));
        };
        let secs = t
            .min_transfer_time
            .unwrap_or_else(|| a.dist(b) / cfg.walk_speed_mps());
        input
            .transfers
            .push((t.from_stop_id.clone(), t.to_stop_id.clone(), secs));
    }
    Ok(input)
}

fn dangling(file: &str, line: u64, what: String) -> RouterError {
    RouterError::Dangling {
        file: file.into(),
        line,
        what,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trip(id: &str, times: &[(&str, u32, u32)]) -> RawTrip {
        RawTrip {
            route_id: "r".into(),
            trip_id: id.into(),
            stop_times: times.iter().map(|(s, a, d)| (s.to_string(), *a, *d)).collect(),
        }
    }

    fn walk() -> WalkGraph {
        WalkGraph::new(vec![("n".into(), Point::new(0.0, 0.0))], &[], 1000.0).unwrap()
    }

    fn stops() -> Vec<(String, Point)> {
        vec![
            ("a".into(), Point::new(0.0, 0.0)),
            ("b".into(), Point::new(5000.0, 0.0)),
            ("c".into(), Point::new(10000.0, 0.0)),
        ]
    }

    #[test]
    fn gtfs_times() {
        assert_eq!(parse_gtfs_time("07:05:09"), Some(7 * 3600 + 309));
        assert_eq!(parse_gtfs_time("25:00:00"), Some(90000));
        assert_eq!(parse_gtfs_time("7:61:00"), None);
        assert_eq!(parse_gtfs_time("x"), None);
    }

    #[test]
    fn decreasing_times_name_the_trip() {
        let input = TimetableInput {
            stops: stops(),
            trips: vec![trip("T9", &[("a", 100, 110), ("b", 105, 105)])],
            transfers: vec![],
        };
        let err = TimetableNetwork::build(&input, &walk(), &RouterConfig::default()).unwrap_err();
        assert!(err.to_string().contains("T9"), "{err}");
    }

    #[test]
    fn overtaking_trip_split_into_new_route() {
        let input = TimetableInput {
            stops: stops(),
            trips: vec![
                trip("slow", &[("a", 0, 0), ("b", 600, 600), ("c", 1200, 1200)]),
                trip("fast", &[("a", 60, 60), ("b", 300, 300), ("c", 500, 500)]),
                trip("late", &[("a", 900, 900), ("b", 1500, 1500), ("c", 2100, 2100)]),
            ],
            transfers: vec![],
        };
        let net = TimetableNetwork::build(&input, &walk(), &RouterConfig::default()).unwrap();
        assert_eq!(net.routes.len(), 2);
        assert_eq!(net.trip_count(), 3);
        for r in &net.routes {
            for w in r.trips.windows(2) {
                assert!(!overtakes(&w[1], &w[0]));
            }
        }
    }

    #[test]
    fn unknown_stop_is_dangling() {
        let input = TimetableInput {
            stops: stops(),
            trips: vec![trip("t", &[("a", 0, 0), ("zz", 60, 60)])],
            transfers: vec![],
        };
        assert!(matches!(
            TimetableNetwork::build(&input, &walk(), &RouterConfig::default()),
            Err(RouterError::Dangling { .. })
        ));
    }
}
