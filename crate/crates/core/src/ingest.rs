//! Event ingestion: tower registry, monthly event parsing, active-user
//! filtering and hourly binning.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, LocalResult, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
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
    #[error("{path}: header mismatch, expected `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path} line {line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },
    #[error("duplicate bts_id `{0}` in tower registry")]
    DuplicateTower(String),
    #[error("invalid study month `{0}` (expected YYYY-MM)")]
    BadMonth(String),
    #[error("unknown timezone `{0}`")]
    BadTimezone(String),
}

/// Calendar month under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StudyMonth {
    pub year: i32,
    pub month: u32,
}

impl StudyMonth {
    pub fn new(year: i32, month: u32) -> Result<Self, IngestError> {
        if !(1..=12).contains(&month) || NaiveDate::from_ymd_opt(year, month, 1).is_none() {
            return Err(IngestError::BadMonth(format!("{year:04}-{month:02}")));
        }
        Ok(Self { year, month })
    }

    pub fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("validated month")
    }

    pub fn days(&self) -> u32 {
        let next = if self.month == 12 {
            NaiveDate::from_ymd_opt(self.year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(self.year, self.month + 1, 1)
        };
        next.expect("validated month")
            .signed_duration_since(self.first_day())
            .num_days() as u32
    }

    /// Civil weekday of a day of this month (1-based).
    pub fn weekday(&self, day: u8) -> Weekday {
        NaiveDate::from_ymd_opt(self.year, self.month, day as u32)
            .map(|d| d.weekday())
            .unwrap_or_else(|| panic!("day {day} outside {self}"))
    }

    pub fn is_weekday(&self, day: u8) -> bool {
        !matches!(self.weekday(day), Weekday::Sat | Weekday::Sun)
    }

    pub fn contains(&self, local: &NaiveDateTime) -> bool {
        local.year() == self.year && local.month() == self.month
    }
}

impl fmt::Display for StudyMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for StudyMonth {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IngestError::BadMonth(s.to_string());
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        Self::new(year, month)
    }
}

impl TryFrom<String> for StudyMonth {
    type Error = IngestError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StudyMonth> for String {
    fn from(m: StudyMonth) -> String {
        m.to_string()
    }
}

pub fn parse_timezone(name: &str) -> Result<Tz, IngestError> {
    name.parse::<Tz>()
        .map_err(|_| IngestError::BadTimezone(name.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub bts_id: String,
    pub lon: f64,
    pub lat: f64,
}

/// Registry of base stations keyed by id, kept in id order.
#[derive(Debug, Clone, Default)]
pub struct TowerRegistry {
    towers: Vec<Tower>,
    index: HashMap<String, usize>,
}

impl TowerRegistry {
    pub fn new(mut towers: Vec<Tower>) -> Result<Self, IngestError> {
        towers.sort_by(|a, b| a.bts_id.cmp(&b.bts_id));
        let mut index = HashMap::with_capacity(towers.len());
        for (i, t) in towers.iter().enumerate() {
            if index.insert(t.bts_id.clone(), i).is_some() {
                return Err(IngestError::DuplicateTower(t.bts_id.clone()));
            }
        }
        Ok(Self { towers, index })
    }

    /// Reads `bts_id,lon,lat`.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let p = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(&p, e))?;
        check_header(&mut rdr, &p, &["bts_id", "lon", "lat"])?;
        let mut towers = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(&p, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let row_err = |message: String| IngestError::Row {
                path: p.clone(),
                line,
                message,
            };
            if rec.len() != 3 {
                return Err(row_err(format!("expected 3 fields, found {}", rec.len())));
            }
            let lon: f64 = rec[1].parse().map_err(|_| row_err(format!("bad lon `{}`", &rec[1])))?;
            let lat: f64 = rec[2].parse().map_err(|_| row_err(format!("bad lat `{}`", &rec[2])))?;
            if !lon.is_finite() || !lat.is_finite() || lon.abs() > 180.0 || lat.abs() > 90.0 {
                return Err(row_err(format!("coordinates out of range ({lon}, {lat})")));
            }
            towers.push(Tower {
                bts_id: rec[0].to_string(),
                lon,
                lat,
            });
        }
        Self::new(towers)
    }

    pub fn get(&self, bts_id: &str) -> Option<&Tower> {
        self.index.get(bts_id).map(|&i| &self.towers[i])
    }

    pub fn contains(&self, bts_id: &str) -> bool {
        self.index.contains_key(bts_id)
    }

    pub fn towers(&self) -> &[Tower] {
        &self.towers
    }

    pub fn len(&self) -> usize {
        self.towers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.towers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub bts_id: String,
}

impl Event {
    pub fn local(&self, tz: &Tz) -> NaiveDateTime {
        self.timestamp.with_timezone(tz).naive_local()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Malformed,
    UnknownTower,
    OutsideMonth,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::Malformed => "malformed",
            DropReason::UnknownTower => "unknown_tower",
            DropReason::OutsideMonth => "outside_month",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows_read: u64,
    pub retained: u64,
    pub dropped: BTreeMap<DropReason, u64>,
    /// (line number, message) for malformed rows.
    pub malformed: Vec<(u64, String)>,
}

impl ParseReport {
    pub fn dropped(&self, reason: DropReason) -> u64 {
        self.dropped.get(&reason).copied().unwrap_or(0)
    }

    fn drop_row(&mut self, reason: DropReason) {
        *self.dropped.entry(reason).or_default() += 1;
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub month: StudyMonth,
    pub tz: Tz,
    /// Timestamps carry no offset and are civil times in `tz`.
    pub naive_timestamps: bool,
}

pub const EVENTS_HEADER: [&str; 3] = ["user_id", "timestamp", "bts_id"];

/// Parses `user_id,timestamp,bts_id` rows, keeping those on registered towers
/// that fall inside the study month (in the study timezone).
pub fn parse_events(
    path: &Path,
    registry: &TowerRegistry,
    opts: &ParseOptions,
) -> Result<(Vec<Event>, ParseReport), IngestError> {
    let p = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(&p, e))?;
    check_header(&mut rdr, &p, &EVENTS_HEADER)?;

    let mut report = ParseReport::default();
    let mut events = Vec::new();
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => match e.kind() {
                csv::ErrorKind::Utf8 { pos, .. } => {
                    report.rows_read += 1;
                    let line = pos.as_ref().map(|p| p.line()).unwrap_or(0);
                    report.drop_row(DropReason::Malformed);
                    report.malformed.push((line, "invalid utf-8".into()));
                    continue;
                }
                _ => return Err(csv_err(&p, e)),
            },
        }
        report.rows_read += 1;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&rec, opts) {
            Err(message) => {
                report.drop_row(DropReason::Malformed);
                report.malformed.push((line, message));
            }
            Ok(ev) => {
                if !registry.contains(&ev.bts_id) {
                    report.drop_row(DropReason::UnknownTower);
                } else if !opts.month.contains(&ev.local(&opts.tz)) {
                    report.drop_row(DropReason::OutsideMonth);
                } else {
                    events.push(ev);
                }
            }
        }
    }
    report.retained = events.len() as u64;
    Ok((events, report))
}

fn parse_row(rec: &csv::StringRecord, opts: &ParseOptions) -> Result<Event, String> {
    if rec.len() != 3 {
        return Err(format!("expected 3 fields, found {}", rec.len()));
    }
    let user_id = &rec[0];
    let bts_id = &rec[2];
    if user_id.is_empty() {
        return Err("empty user_id".into());
    }
    if bts_id.is_empty() {
        return Err("empty bts_id".into());
    }
    let timestamp = parse_timestamp(&rec[1], opts)?;
    Ok(Event {
        user_id: user_id.to_string(),
        timestamp,
        bts_id: bts_id.to_string(),
    })
}

fn parse_timestamp(raw: &str, opts: &ParseOptions) -> Result<DateTime<Utc>, String> {
    if opts.naive_timestamps {
        let naive = NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
            .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
            .map_err(|_| format!("bad timestamp `{raw}`"))?;
        match opts.tz.from_local_datetime(&naive) {
            LocalResult::Single(t) => Ok(t.with_timezone(&Utc)),
            // repeated hour at a DST fall-back: first occurrence
            LocalResult::Ambiguous(t, _) => Ok(t.with_timezone(&Utc)),
            LocalResult::None => Err(format!("local time `{raw}` does not exist in {}", opts.tz)),
        }
    } else {
        DateTime::parse_from_rfc3339(raw)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|_| format!("bad timestamp `{raw}` (offset required)"))
    }
}

/// Key of one hourly bin for a single user.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinKey {
    pub bts_id: String,
    pub hour: u8,
    /// Day of month, 1-based.
    pub day: u8,
}

/// Per-user connection counts by (tower, local hour, day of month).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HourlyCounts {
    pub users: BTreeMap<String, BTreeMap<BinKey, u32>>,
}

impl HourlyCounts {
    pub fn total(&self) -> u64 {
        self.users.values().map(user_total).sum()
    }

    pub fn user_total(&self, user_id: &str) -> u64 {
        self.users.get(user_id).map(user_total).unwrap_or(0)
    }

    pub fn add(&mut self, user_id: &str, key: BinKey, n: u32) {
        *self
            .users
            .entry(user_id.to_string())
            .or_default()
            .entry(key)
            .or_default() += n;
    }

    /// Merge of two partial binnings; addition commutes so merge order is irrelevant.
    pub fn merge(&mut self, other: HourlyCounts) {
        for (user, cells) in other.users {
            let mine = self.users.entry(user).or_default();
            for (k, n) in cells {
                *mine.entry(k).or_default() += n;
            }
        }
    }

    pub const CSV_HEADER: [&'static str; 5] = ["user_id", "bts_id", "day", "hour", "count"];

    /// Canonical CSV serialization (sorted by user, tower, hour, day).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(Self::CSV_HEADER)?;
        for (user, cells) in &self.users {
            for (k, n) in cells {
                wtr.write_record([
                    user.as_str(),
                    k.bts_id.as_str(),
                    &k.day.to_string(),
                    &k.hour.to_string(),
                    &n.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, IngestError> {
        let p = path.display().to_string();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(&p, e))?;
        check_header(&mut rdr, &p, &Self::CSV_HEADER)?;
        let mut counts = HourlyCounts::default();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(&p, e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = || IngestError::Row {
                path: p.clone(),
                line,
                message: "bad hourly count row".into(),
            };
            let day: u8 = rec[2].parse().map_err(|_| bad())?;
            let hour: u8 = rec[3].parse().map_err(|_| bad())?;
            let n: u32 = rec[4].parse().map_err(|_| bad())?;
            counts.add(
                &rec[0],
                BinKey {
                    bts_id: rec[1].to_string(),
                    hour,
                    day,
                },
                n,
            );
        }
        Ok(counts)
    }
}

fn user_total(cells: &BTreeMap<BinKey, u32>) -> u64 {
    cells.values().map(|&n| n as u64).sum()
}

/// Users averaging strictly more than two events per calendar day of the month.
pub fn filter_active_users(counts: &HourlyCounts, month: StudyMonth) -> BTreeSet<String> {
    let threshold = 2 * month.days() as u64;
    counts
        .users
        .iter()
        .filter(|(_, cells)| user_total(cells) > threshold)
        .map(|(u, _)| u.clone())
        .collect()
}

/// Bins each event into its (user, tower, local hour, local day) cell.
pub fn bin_hourly(events: &[Event], tz: &Tz) -> HourlyCounts {
    use rayon::prelude::*;
    events
        .par_chunks(8192)
        .map(|chunk| {
            let mut part = HourlyCounts::default();
            for ev in chunk {
                let local = ev.local(tz);
                part.add(
                    &ev.user_id,
                    BinKey {
                        bts_id: ev.bts_id.clone(),
                        hour: local.hour() as u8,
                        day: local.day() as u8,
                    },
                    1,
                );
            }
            part
        })
        .reduce(HourlyCounts::default, |mut a, b| {
            a.merge(b);
            a
        })
}

fn csv_err(path: &str, source: csv::Error) -> IngestError {
    if source.is_io_error() {
        if let csv::ErrorKind::Io(source) = source.into_kind() {
            return IngestError::Io {
                path: path.to_string(),
                source,
            };
        }
        unreachable!("is_io_error implies ErrorKind::Io");
    }
    IngestError::Csv {
        path: path.to_string(),
        source,
    }
}

pub(crate) fn check_header<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    path: &str,
    expected: &[&str],
) -> Result<(), IngestError> {
    let found = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let found: Vec<&str> = found.iter().map(|h| h.trim_start_matches('\u{feff}')).collect();
    if found != expected {
        return Err(IngestError::Header {
            path: path.to_string(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry() -> TowerRegistry {
        TowerRegistry::new(
            ["b1", "b7"]
                .iter()
                .map(|id| Tower {
                    bts_id: id.to_string(),
                    lon: -70.6,
                    lat: -33.4,
                })
                .collect(),
        )
        .unwrap()
    }

    fn opts(naive: bool) -> ParseOptions {
        ParseOptions {
            month: "2023-03".parse().unwrap(),
            tz: parse_timezone("America/Santiago").unwrap(),
            naive_timestamps: naive,
        }
    }

    fn write_tmp(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn naive_row_maps_to_local_hour() {
        let f = write_tmp("user_id,timestamp,bts_id\nu1,2023-03-05T02:10:00,b7\n");
        let o = opts(true);
        let (events, report) = parse_events(f.path(), &registry(), &o).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].local(&o.tz).hour(), 2);
        assert_eq!(report.retained, 1);
    }

    #[test]
    fn unknown_tower_is_counted() {
        let f = write_tmp("user_id,timestamp,bts_id\nu1,2023-03-05T02:10:00,zz\n");
        let (events, report) = parse_events(f.path(), &registry(), &opts(true)).unwrap();
        assert!(events.is_empty());
        assert_eq!(report.dropped(DropReason::UnknownTower), 1);
    }

    #[test]
    fn offset_timestamps_convert_to_study_zone() {
        // 05:10 UTC is 02:10 in Santiago (UTC-3 during March 2023)
        let f = write_tmp(
            "user_id,timestamp,bts_id\nu1,2023-03-05T05:10:00Z,b1\nu1,2023-04-01T02:30:00Z,b1\nu1,2023-04-01T03:30:00Z,b1\n",
        );
        let o = opts(false);
        let (events, report) = parse_events(f.path(), &registry(), &o).unwrap();
        // 02:30Z on April 1st is still March 31st, 23:30 local; 03:30Z is April
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].local(&o.tz).hour(), 2);
        assert_eq!(events[1].local(&o.tz).hour(), 23);
        assert_eq!(report.dropped(DropReason::OutsideMonth), 1);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let f = write_tmp("user_id,timestamp,bts_id\nu1,2023-03-05T02:10:00,b1\nu2,notatime,b1\nu3,2023-03-05T02:10:00\n");
        let (events, report) = parse_events(f.path(), &registry(), &opts(true)).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(report.dropped(DropReason::Malformed), 2);
        let lines: Vec<u64> = report.malformed.iter().map(|m| m.0).collect();
        assert_eq!(lines, vec![3, 4]);
    }

    #[test]
    fn wrong_header_is_fatal() {
        let f = write_tmp("uid,ts,tower\n");
        assert!(matches!(
            parse_events(f.path(), &registry(), &opts(true)),
            Err(IngestError::Header { .. })
        ));
    }

    #[test]
    fn missing_file_is_fatal() {
        let r = parse_events(Path::new("/nonexistent/events.csv"), &registry(), &opts(true));
        assert!(matches!(r, Err(IngestError::Io { .. })));
    }

    #[test]
    fn duplicate_towers_rejected() {
        let t = Tower {
            bts_id: "a".into(),
            lon: 0.0,
            lat: 0.0,
        };
        assert!(TowerRegistry::new(vec![t.clone(), t]).is_err());
    }

    #[test]
    fn active_boundary_is_strict() {
        let month: StudyMonth = "2023-03".parse().unwrap();
        assert_eq!(month.days(), 31);
        let mut counts = HourlyCounts::default();
        let key = |d: u8| BinKey {
            bts_id: "b1".into(),
            hour: 10,
            day: d,
        };
        counts.add("u62", key(1), 62);
        counts.add("u63", key(1), 63);
        let active = filter_active_users(&counts, month);
        assert!(active.contains("u63"));
        assert!(!active.contains("u62"));
    }

    #[test]
    fn late_event_lands_in_hour_23() {
        let tz = parse_timezone("UTC").unwrap();
        let ev = Event {
            user_id: "u".into(),
            timestamp: Utc.with_ymd_and_hms(2023, 3, 4, 23, 59, 0).unwrap(),
            bts_id: "b".into(),
        };
        let counts = bin_hourly(&[ev], &tz);
        let cells = &counts.users["u"];
        assert_eq!(cells.keys().next().unwrap().hour, 23);
        assert_eq!(cells.keys().next().unwrap().day, 4);
    }

    #[test]
    fn empty_binning() {
        let tz = parse_timezone("UTC").unwrap();
        assert_eq!(bin_hourly(&[], &tz), HourlyCounts::default());
    }

    #[test]
    fn month_parsing() {
        assert!("2023-13".parse::<StudyMonth>().is_err());
        assert!("2023-3".parse::<StudyMonth>().is_err());
        let feb: StudyMonth = "2024-02".parse().unwrap();
        assert_eq!(feb.days(), 29);
        assert!(feb.is_weekday(1)); // Thursday
        assert!(!feb.is_weekday(3)); // Saturday
    }
}
