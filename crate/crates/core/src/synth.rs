//! Deterministic synthetic cities with planted ground truth.
//!
//! Every artifact draws from its own ChaCha8 stream of the same seed, so
//! changing one generator never shifts the numbers another one sees.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, LocalResult, NaiveTime, TimeZone};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::geo::{
    assign_hexes, build_hex_grid, hexes_per_tower, voronoi, GeoError, HexCell, Point, ProjectedPlane,
    StudyBoundary,
};
use crate::ingest::{parse_timezone, StudyMonth, EVENTS_HEADER};
use crate::pipeline::{GeoConfig, Inputs, RunConfig, StudyConfig};
use crate::stats::VARIABLES;

const M_PER_DEG: f64 = 111_320.0;
const STREET_SPACING_M: f64 = 250.0;
const STOP_SPACING_M: f64 = 400.0;
const BUS_SPEED_MPS: f64 = 7.0;
const DWELL_S: u32 = 20;
const SERVICE_START_S: u32 = 6 * 3600;
const SERVICE_END_S: u32 = 10 * 3600;
const TOWER_ATTEMPTS: usize = 200;

const STREAM_TOWERS: u64 = 1;
const STREAM_USERS: u64 = 2;
const STREAM_EVENTS: u64 = 3;
const STREAM_STREETS: u64 = 4;
const STREAM_GTFS: u64 = 5;
const STREAM_SMI: u64 = 6;
const STREAM_DEMOGRAPHICS: u64 = 7;

/// Hours with positive home weight and zero work weight.
const NIGHT_HOURS: [u32; 8] = [0, 1, 2, 3, 4, 5, 6, 23];
/// Hours with positive work weight and zero home weight.
const WORK_HOURS: [u32; 9] = [9, 10, 11, 12, 13, 14, 15, 16, 17];
/// Hours with zero weight in both tables.
const NEUTRAL_HOURS: [u32; 7] = [7, 8, 18, 19, 20, 21, 22];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid city spec: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CitySpec {
    pub seed: u64,
    pub n_bts: usize,
    pub n_users: usize,
    /// Side of the square study area, metres.
    pub extent_m: f64,
    pub n_routes: usize,
    /// Probability that an event is reported by a uniformly random tower.
    pub noise: f64,
    pub centre_lon: f64,
    pub centre_lat: f64,
    pub month: StudyMonth,
    pub timezone: String,
    pub hex_edge_m: f64,
}

impl Default for CitySpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_bts: 60,
            n_users: 5000,
            extent_m: 5000.0,
            n_routes: 10,
            noise: 0.2,
            centre_lon: -70.65,
            centre_lat: -33.45,
            month: StudyMonth { year: 2023, month: 3 },
            timezone: "America/Santiago".into(),
            hex_edge_m: 174.0,
        }
    }
}

impl CitySpec {
    pub fn validate(&self) -> Result<Tz, SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.into()));
        if self.n_bts < 2 {
            return bad("n_bts must be at least 2");
        }
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if !(self.extent_m >= 500.0 && self.extent_m <= 100_000.0) {
            return bad("extent_m must lie in [500, 100000]");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad("noise must lie in [0, 1]");
        }
        if !(self.hex_edge_m > 0.0 && self.hex_edge_m < self.extent_m) {
            return bad("hex_edge_m must be positive and smaller than the extent");
        }
        if self.centre_lat.abs() > 80.0 || self.centre_lon.abs() > 180.0 {
            return bad("centre out of range");
        }
        parse_timezone(&self.timezone).map_err(|e| SynthError::Invalid(e.to_string()))
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserKind {
    /// Active, with distinct home and work towers.
    Commuter,
    /// Active, but every weekday-daytime signal comes from the home tower.
    Homebody,
    /// At most two events per day on average.
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedUser {
    pub user_id: String,
    pub kind: UserKind,
    pub home_bts: String,
    pub work_bts: String,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub variable: String,
    /// `east` or `north` half of the study area.
    pub region: String,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityTruth {
    pub spec: CitySpec,
    pub users: Vec<PlantedUser>,
    pub effects: Vec<PlantedEffect>,
    pub routes: usize,
    pub stops: usize,
    pub hexes: usize,
}

impl CityTruth {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| io_err(path, source))?;
        serde_json::from_str(&text).map_err(|e| SynthError::Invalid(format!("{}: {e}", path.display())))
    }
}

/// File names inside a generated bundle.
pub mod files {
    pub const EVENTS: &str = "events.csv";
    pub const BTS: &str = "bts.csv";
    pub const BOUNDARY: &str = "boundary.geojson";
    pub const STREETS: &str = "streets";
    pub const GTFS: &str = "gtfs";
    pub const SMI: &str = "smi.csv";
    pub const DEMOGRAPHICS: &str = "demographics.csv";
    pub const TRUTH: &str = "truth.json";
    pub const CONFIG: &str = "config.json";
}

fn io_err(path: &Path, source: std::io::Error) -> SynthError {
    SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, SynthError> {
    let f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

struct Layout {
    boundary: StudyBoundary,
    plane: ProjectedPlane,
    /// Projected bbox of the study square.
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Layout {
    fn new(spec: &CitySpec) -> Result<Self, SynthError> {
        let h = spec.extent_m / 2.0;
        let dlat = h / M_PER_DEG;
        let dlon = h / (M_PER_DEG * spec.centre_lat.to_radians().cos());
        let (cx, cy) = (spec.centre_lon, spec.centre_lat);
        let ring = vec![
            (cx - dlon, cy - dlat),
            (cx + dlon, cy - dlat),
            (cx + dlon, cy + dlat),
            (cx - dlon, cy + dlat),
        ];
        let boundary = StudyBoundary {
            polygons: vec![vec![ring]],
        };
        let plane = boundary.plane();
        let region = boundary.region(&plane)?;
        let bb = region
            .bbox()
            .ok_or_else(|| SynthError::Invalid("empty study area".into()))?;
        Ok(Self {
            boundary,
            plane,
            x0: bb.min.x,
            y0: bb.min.y,
            x1: bb.max.x,
            y1: bb.max.y,
        })
    }

    fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    fn point(&self, fx: f64, fy: f64) -> Point {
        Point::new(self.x0 + fx * self.width(), self.y0 + fy * self.height())
    }
}

/// Writes the full bundle for `spec` into `out_dir` and returns the planted
/// truth, which is also saved as `truth.json`.
pub fn generate_city(spec: &CitySpec, out_dir: &Path) -> Result<CityTruth, SynthError> {
    let tz = spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let layout = Layout::new(spec)?;

    write_file(
        &out_dir.join(files::BOUNDARY),
        serde_json::to_string_pretty(&layout.boundary.to_geojson())
            .expect("geojson serializes")
            .as_bytes(),
    )?;

    let (towers, hexes) = place_towers(spec, &layout)?;
    let mut w = csv_writer(&out_dir.join(files::BTS))?;
    w.write_record(["bts_id", "lon", "lat"])?;
    for (id, p) in &towers {
        let (lon, lat) = layout.plane.unproject(p);
        w.write_record([id.clone(), lon.to_string(), lat.to_string()])?;
    }
    w.flush().map_err(|e| io_err(&out_dir.join(files::BTS), e))?;

    let tower_ids: Vec<String> = towers.iter().map(|t| t.0.clone()).collect();
    let users = plant_users(spec, &tower_ids);
    let users = write_events(spec, &tz, &tower_ids, users, &out_dir.join(files::EVENTS))?;

    write_streets(spec, &layout, &out_dir.join(files::STREETS))?;
    let (routes, stops) = write_gtfs(spec, &layout, &out_dir.join(files::GTFS))?;
    write_smi(spec, &layout, &hexes, &out_dir.join(files::SMI))?;
    let effects = write_demographics(spec, &layout, &hexes, &out_dir.join(files::DEMOGRAPHICS))?;

    let truth = CityTruth {
        spec: spec.clone(),
        users,
        effects,
        routes,
        stops,
        hexes: hexes.len(),
    };
    write_file(
        &out_dir.join(files::TRUTH),
        serde_json::to_string_pretty(&truth).expect("truth serializes").as_bytes(),
    )?;
    let config = default_run_config(spec);
    write_file(
        &out_dir.join(files::CONFIG),
        serde_json::to_string_pretty(&config).expect("config serializes").as_bytes(),
    )?;
    Ok(truth)
}

/// Run configuration pointing at a bundle's files by relative path.
pub fn default_run_config(spec: &CitySpec) -> RunConfig {
    RunConfig {
        inputs: Inputs {
            events: files::EVENTS.into(),
            bts: files::BTS.into(),
            boundary: files::BOUNDARY.into(),
            gtfs: files::GTFS.into(),
            streets: files::STREETS.into(),
            smi: files::SMI.into(),
            demographics: files::DEMOGRAPHICS.into(),
        },
        output_dir: PathBuf::from("out"),
        seed: spec.seed,
        study: StudyConfig {
            month: spec.month,
            timezone: spec.timezone.clone(),
        },
        ingest: Default::default(),
        geo: GeoConfig {
            hex_edge_m: spec.hex_edge_m,
            ..Default::default()
        },
        router: Default::default(),
        access: Default::default(),
        lisa: Default::default(),
        stats: Default::default(),
    }
}

/// Jittered grid of towers, redrawn until every tower owns at least one hex.
fn place_towers(spec: &CitySpec, layout: &Layout) -> Result<(Vec<(String, Point)>, Vec<HexCell>), SynthError> {
    let mut rng = spec.rng(STREAM_TOWERS);
    let region = layout.boundary.region(&layout.plane)?;
    let grid = build_hex_grid(&region, spec.hex_edge_m)?;
    let cols = (spec.n_bts as f64).sqrt().ceil() as usize;
    let rows = spec.n_bts.div_ceil(cols);
    for _ in 0..TOWER_ATTEMPTS {
        let towers: Vec<(String, Point)> = (0..spec.n_bts)
            .map(|i| {
                let (c, r) = (i % cols, i / cols);
                let fx = (c as f64 + 0.5 + rng.gen_range(-0.35..0.35)) / cols as f64;
                let fy = (r as f64 + 0.5 + rng.gen_range(-0.35..0.35)) / rows as f64;
                (format!("BTS{i:03}"), layout.point(fx, fy))
            })
            .collect();
        let cells = voronoi(&towers, &region)?;
        let (hexes, _) = assign_hexes(&grid, &cells);
        if hexes_per_tower(&hexes).len() == towers.len() {
            return Ok((towers, hexes));
        }
    }
    Err(SynthError::Invalid(format!(
        "could not give each of {} towers a hex of edge {} m; use fewer towers or smaller hexes",
        spec.n_bts, spec.hex_edge_m
    )))
}

fn plant_users(spec: &CitySpec, towers: &[String]) -> Vec<PlantedUser> {
    let mut rng = spec.rng(STREAM_USERS);
    (0..spec.n_users)
        .map(|i| {
            let u: f64 = rng.gen();
            let kind = if u < 0.05 {
                UserKind::Inactive
            } else if u < 0.10 {
                UserKind::Homebody
            } else {
                UserKind::Commuter
            };
            let home = rng.gen_range(0..towers.len());
            let work = match kind {
                UserKind::Homebody => home,
                _ => (home + rng.gen_range(1..towers.len())) % towers.len(),
            };
            PlantedUser {
                user_id: format!("U{i:05}"),
                kind,
                home_bts: towers[home].clone(),
                work_bts: towers[work].clone(),
                events: 0,
            }
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Slot {
    Night,
    Work,
    Neutral,
}

fn write_events(
    spec: &CitySpec,
    tz: &Tz,
    towers: &[String],
    mut users: Vec<PlantedUser>,
    path: &Path,
) -> Result<Vec<PlantedUser>, SynthError> {
    let mut rng = spec.rng(STREAM_EVENTS);
    let month = spec.month;
    let days = month.days() as u8;
    let weekdays: Vec<u8> = (1..=days).filter(|d| month.is_weekday(*d)).collect();
    let all_days: Vec<u8> = (1..=days).collect();
    let mut w = csv_writer(path)?;
    w.write_record(EVENTS_HEADER)?;

    for user in users.iter_mut() {
        let n = match user.kind {
            UserKind::Inactive => rng.gen_range(10..=2 * days as usize),
            _ => rng.gen_range(80..=140),
        };
        let mut rows: Vec<(i64, String, String)> = Vec::with_capacity(n);
        for k in 0..n {
            // The first events guarantee both signals exist before noise.
            let slot = match k {
                0..=9 => Slot::Night,
                10..=19 => Slot::Work,
                _ => match rng.gen_range(0..10) {
                    0..=3 => Slot::Night,
                    4..=7 => Slot::Work,
                    _ => Slot::Neutral,
                },
            };
            let (day_pool, hours, tower): (&[u8], &[u32], Option<&str>) = match slot {
                Slot::Night => (&all_days, &NIGHT_HOURS, Some(&user.home_bts)),
                Slot::Work => (&weekdays, &WORK_HOURS, Some(&user.work_bts)),
                Slot::Neutral => (&all_days, &NEUTRAL_HOURS, None),
            };
            let noisy = rng.gen_bool(spec.noise);
            let tower = match (tower, noisy) {
                (Some(t), false) => t.to_string(),
                _ => towers[rng.gen_range(0..towers.len())].clone(),
            };
            let ts = loop {
                let day = day_pool[rng.gen_range(0..day_pool.len())];
                let hour = hours[rng.gen_range(0..hours.len())];
                let time = NaiveTime::from_hms_opt(hour, rng.gen_range(0..60), rng.gen_range(0..60))
                    .expect("valid clock time");
                let local = (month.first_day() + Duration::days(day as i64 - 1)).and_time(time);
                match tz.from_local_datetime(&local) {
                    LocalResult::Single(t) => break t,
                    LocalResult::Ambiguous(a, _) => break a,
                    LocalResult::None => continue,
                }
            };
            rows.push((ts.timestamp(), ts.to_rfc3339(), tower));
        }
        rows.sort();
        for (_, ts, tower) in &rows {
            w.write_record([user.user_id.as_str(), ts.as_str(), tower.as_str()])?;
        }
        user.events = n;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(users)
}

fn write_streets(spec: &CitySpec, layout: &Layout, dir: &Path) -> Result<(), SynthError> {
    let mut rng = spec.rng(STREAM_STREETS);
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let nx = (layout.width() / STREET_SPACING_M).floor() as usize + 1;
    let ny = (layout.height() / STREET_SPACING_M).floor() as usize + 1;
    let dx = layout.width() / (nx - 1) as f64;
    let dy = layout.height() / (ny - 1) as f64;
    let jitter = 0.15 * dx.min(dy);
    let mut pts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = (layout.x0 + i as f64 * dx + rng.gen_range(-jitter..jitter)).clamp(layout.x0, layout.x1);
            let y = (layout.y0 + j as f64 * dy + rng.gen_range(-jitter..jitter)).clamp(layout.y0, layout.y1);
            pts.push(Point::new(x, y));
        }
    }
    let id = |i: usize, j: usize| j * nx + i;

    let mut w = csv_writer(&dir.join("nodes.csv"))?;
    w.write_record(["node_id", "lon", "lat"])?;
    for (k, p) in pts.iter().enumerate() {
        let (lon, lat) = layout.plane.unproject(p);
        w.write_record([format!("N{k}"), lon.to_string(), lat.to_string()])?;
    }
    w.flush().map_err(|e| io_err(dir, e))?;

    let mut w = csv_writer(&dir.join("edges.csv"))?;
    w.write_record(["from_id", "to_id", "length_m"])?;
    for j in 0..ny {
        for i in 0..nx {
            let a = id(i, j);
            let mut nbrs = Vec::with_capacity(2);
            if i + 1 < nx {
                nbrs.push(id(i + 1, j));
            }
            if j + 1 < ny {
                nbrs.push(id(i, j + 1));
            }
            for b in nbrs {
                let len = pts[a].dist(&pts[b]) * (1.0 + rng.gen_range(0.0..0.08));
                w.write_record([format!("N{a}"), format!("N{b}"), format!("{len:.3}")])?;
            }
        }
    }
    w.flush().map_err(|e| io_err(dir, e))?;
    Ok(())
}

fn gtfs_time(s: u32) -> String {
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// Stop times along `stops` leaving the first stop at `start`.
fn schedule(stops: &[(String, Point)], start: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(stops.len());
    let mut dep = start;
    for (k, s) in stops.iter().enumerate() {
        if k == 0 {
            out.push((start, start));
            continue;
        }
        let arr = dep + (stops[k - 1].1.dist(&s.1) / BUS_SPEED_MPS).round() as u32;
        dep = if k + 1 == stops.len() { arr } else { arr + DWELL_S };
        out.push((arr, dep));
    }
    out
}

/// GTFS bundle with `n_routes` straight lines served in both directions.
/// Route 0 is expressed through `frequencies.txt`. Returns (routes, stops).
fn write_gtfs(spec: &CitySpec, layout: &Layout, dir: &Path) -> Result<(usize, usize), SynthError> {
    let mut rng = spec.rng(STREAM_GTFS);
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let flush = |w: &mut csv::Writer<fs::File>| w.flush().map_err(|e| io_err(dir, e));

    let mut lines: Vec<Vec<(String, Point)>> = Vec::new();
    for r in 0..spec.n_routes {
        let (a, b) = match r % 3 {
            0 => {
                let y = rng.gen_range(0.1..0.9);
                ((0.05, y), (0.95, y + rng.gen_range(-0.05..0.05)))
            }
            1 => {
                let x = rng.gen_range(0.1..0.9);
                ((x, 0.05), (x + rng.gen_range(-0.05..0.05), 0.95))
            }
            _ => (
                (rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3)),
                (rng.gen_range(0.7..0.95), rng.gen_range(0.7..0.95)),
            ),
        };
        let (pa, pb) = (layout.point(a.0, a.1), layout.point(b.0, b.1));
        let segs = ((pa.dist(&pb) / STOP_SPACING_M).round() as usize).max(1);
        let stops = (0..=segs)
            .map(|k| {
                let t = k as f64 / segs as f64;
                (
                    format!("S{r}_{k}"),
                    Point::new(pa.x + t * (pb.x - pa.x), pa.y + t * (pb.y - pa.y)),
                )
            })
            .collect();
        lines.push(stops);
    }

    let mut w = csv_writer(&dir.join("agency.txt"))?;
    w.write_record(["agency_id", "agency_name", "agency_url", "agency_timezone"])?;
    w.write_record(["SYN", "Synthetic Transit", "https://example.invalid", spec.timezone.as_str()])?;
    flush(&mut w)?;

    let mut w = csv_writer(&dir.join("calendar.txt"))?;
    w.write_record([
        "service_id", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday", "start_date",
        "end_date",
    ])?;
    let (start, end) = (spec.month.first_day(), spec.month.first_day() + Duration::days(spec.month.days() as i64 - 1));
    let (start, end) = (start.format("%Y%m%d").to_string(), end.format("%Y%m%d").to_string());
    w.write_record(["WK", "1", "1", "1", "1", "1", "0", "0", &start, &end])?;
    w.write_record(["WE", "0", "0", "0", "0", "0", "1", "1", &start, &end])?;
    flush(&mut w)?;

    let mut w = csv_writer(&dir.join("stops.txt"))?;
    w.write_record(["stop_id", "stop_name", "stop_lat", "stop_lon"])?;
    for (id, p) in lines.iter().flatten() {
        let (lon, lat) = layout.plane.unproject(p);
        w.write_record([id.clone(), format!("Stop {id}"), lat.to_string(), lon.to_string()])?;
    }
    flush(&mut w)?;

    let mut w = csv_writer(&dir.join("routes.txt"))?;
    w.write_record(["route_id", "agency_id", "route_short_name", "route_type"])?;
    for r in 0..lines.len() {
        w.write_record([format!("R{r}"), "SYN".into(), format!("{}", r + 1), "3".into()])?;
    }
    flush(&mut w)?;

    let mut trips = csv_writer(&dir.join("trips.txt"))?;
    trips.write_record(["route_id", "service_id", "trip_id", "direction_id"])?;
    let mut times = csv_writer(&dir.join("stop_times.txt"))?;
    times.write_record(["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"])?;
    let mut freq = csv_writer(&dir.join("frequencies.txt"))?;
    freq.write_record(["trip_id", "start_time", "end_time", "headway_secs"])?;

    for (r, line) in lines.iter().enumerate() {
        let headway: u32 = [360, 600, 900][rng.gen_range(0..3)];
        for dir_id in 0..2u32 {
            let stops: Vec<(String, Point)> = if dir_id == 0 {
                line.clone()
            } else {
                line.iter().rev().cloned().collect()
            };
            let mut write_trip = |trip_id: &str, service: &str, start: u32| -> Result<(), SynthError> {
                trips.write_record([format!("R{r}"), service.into(), trip_id.into(), dir_id.to_string()])?;
                for (seq, ((stop, _), (arr, dep))) in stops.iter().zip(schedule(&stops, start)).enumerate() {
                    times.write_record([
                        trip_id.to_string(),
                        gtfs_time(arr),
                        gtfs_time(dep),
                        stop.clone(),
                        (seq + 1).to_string(),
                    ])?;
                }
                Ok(())
            };
            let first = SERVICE_START_S + rng.gen_range(0..headway);
            if r == 0 {
                let id = format!("R0_{dir_id}_F");
                write_trip(&id, "WK", first)?;
                freq.write_record([id, gtfs_time(first), gtfs_time(SERVICE_END_S), headway.to_string()])?;
            } else {
                let mut t = first;
                let mut k = 0;
                while t < SERVICE_END_S {
                    write_trip(&format!("R{r}_{dir_id}_{k}"), "WK", t)?;
                    t += headway;
                    k += 1;
                }
            }
            write_trip(&format!("R{r}_{dir_id}_WE"), "WE", 8 * 3600)?;
        }
    }
    flush(&mut trips)?;
    flush(&mut times)?;
    flush(&mut freq)?;

    let mut w = csv_writer(&dir.join("transfers.txt"))?;
    w.write_record(["from_stop_id", "to_stop_id", "transfer_type", "min_transfer_time"])?;
    for a in 0..lines.len() {
        for b in a + 1..lines.len() {
            let best = lines[a]
                .iter()
                .flat_map(|sa| lines[b].iter().map(move |sb| (sa.1.dist(&sb.1), sa, sb)))
                .min_by(|x, y| x.0.total_cmp(&y.0));
            if let Some((d, sa, sb)) = best.filter(|b| b.0 <= 250.0) {
                let secs = (60.0 + d / 1.2).round().to_string();
                w.write_record([sa.0.as_str(), sb.0.as_str(), "2", secs.as_str()])?;
                w.write_record([sb.0.as_str(), sa.0.as_str(), "2", secs.as_str()])?;
            }
        }
    }
    flush(&mut w)?;
    Ok((lines.len(), lines.iter().map(Vec::len).sum()))
}

fn east_fraction(layout: &Layout, p: &Point) -> f64 {
    ((p.x - layout.x0) / layout.width()).clamp(0.0, 1.0)
}

/// SMI rising from west to east with uniform noise.
fn write_smi(spec: &CitySpec, layout: &Layout, hexes: &[HexCell], path: &Path) -> Result<(), SynthError> {
    let mut rng = spec.rng(STREAM_SMI);
    let mut w = csv_writer(path)?;
    w.write_record(["hex_id", "smi"])?;
    for h in hexes {
        let v = 0.2 + 0.6 * east_fraction(layout, &h.center) + rng.gen_range(-0.05..0.05);
        w.write_record([h.hex_id.to_string(), format!("{v:.6}")])?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Percentages with step effects by half of the study area.
fn write_demographics(
    spec: &CitySpec,
    layout: &Layout,
    hexes: &[HexCell],
    path: &Path,
) -> Result<Vec<PlantedEffect>, SynthError> {
    let mut rng = spec.rng(STREAM_DEMOGRAPHICS);
    let base: [(f64, f64); 5] = [(50.0, 2.0), (8.0, 3.0), (18.0, 4.0), (22.0, 4.0), (10.0, 3.0)];
    let effects = vec![
        PlantedEffect {
            variable: "immigrant".into(),
            region: "east".into(),
            delta: 12.0,
        },
        PlantedEffect {
            variable: "retired".into(),
            region: "east".into(),
            delta: -8.0,
        },
        PlantedEffect {
            variable: "minor".into(),
            region: "north".into(),
            delta: 6.0,
        },
    ];
    let mid_x = layout.x0 + layout.width() / 2.0;
    let mid_y = layout.y0 + layout.height() / 2.0;
    let index: BTreeMap<&str, usize> = VARIABLES.iter().enumerate().map(|(i, v)| (*v, i)).collect();

    let mut w = csv_writer(path)?;
    w.write_record(std::iter::once("hex_id").chain(VARIABLES))?;
    for h in hexes {
        let mut v: Vec<f64> = base.iter().map(|(m, s)| m + rng.gen_range(-s..*s)).collect();
        for e in &effects {
            let inside = match e.region.as_str() {
                "east" => h.center.x > mid_x,
                _ => h.center.y > mid_y,
            };
            if inside {
                v[index[e.variable.as_str()]] += e.delta;
            }
        }
        let mut rec = vec![h.hex_id.to_string()];
        rec.extend(v.iter().map(|x| format!("{:.4}", x.clamp(0.0, 100.0))));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(effects)
}

/// Writes a small text summary of a bundle, one `key=value` per line.
pub fn write_summary<W: Write>(truth: &CityTruth, mut w: W) -> std::io::Result<()> {
    let count = |k: UserKind| truth.users.iter().filter(|u| u.kind == k).count();
    let summary = json!({
        "seed": truth.spec.seed,
        "towers": truth.spec.n_bts,
        "users": truth.users.len(),
        "commuters": count(UserKind::Commuter),
        "homebodies": count(UserKind::Homebody),
        "inactive": count(UserKind::Inactive),
        "events": truth.users.iter().map(|u| u.events).sum::<usize>(),
        "routes": truth.routes,
        "stops": truth.stops,
        "hexes": truth.hexes,
    });
    for (k, v) in summary.as_object().expect("object") {
        writeln!(w, "{k}={v}")?;
    }
    Ok(())
}
