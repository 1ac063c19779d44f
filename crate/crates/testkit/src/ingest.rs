//! Event-file fixtures and line-by-line recount oracles.

use std::collections::{BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike};
use chrono_tz::Tz;
use rand::Rng;

use commute_core::ingest::Event;

/// Random event rows for `users` over `towers` in the given month, with a
/// fraction `corrupt` of rows damaged in assorted ways. Returns the file text.
pub fn corrupted_events_csv<R: Rng>(
    rng: &mut R,
    rows: usize,
    corrupt: f64,
    users: usize,
    towers: &[String],
    year: i32,
    month: u32,
    tz: &Tz,
) -> String {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    let days = (first + chrono::Months::new(1) - first).num_days();
    let mut out = String::from("user_id,timestamp,bts_id\n");
    for _ in 0..rows {
        let user = format!("u{}", rng.gen_range(0..users));
        let tower = towers[rng.gen_range(0..towers.len())].clone();
        let local = first.and_hms_opt(0, 0, 0).unwrap()
            + Duration::seconds(rng.gen_range(0..days * 86_400));
        let ts = match tz.from_local_datetime(&local).earliest() {
            Some(t) => t.to_rfc3339(),
            None => (tz.from_utc_datetime(&local)).to_rfc3339(),
        };
        if !rng.gen_bool(corrupt) {
            out.push_str(&format!("{user},{ts},{tower}\n"));
            continue;
        }
        let line = match rng.gen_range(0..8) {
            0 => format!("{user},{ts}\n"),
            1 => format!("{user},{ts},{tower},extra\n"),
            2 => format!("{user},not-a-time,{tower}\n"),
            3 => format!("{user},{},{tower}\n", local.format("%Y-%m-%dT%H:%M:%S")),
            4 => format!(",{ts},{tower}\n"),
            5 => format!("{user},{ts},zz{}\n", rng.gen_range(0..100)),
            6 => format!("{user},{},{tower}\n", tz.from_utc_datetime(&(local - Duration::days(40))).to_rfc3339()),
            _ => format!("{user},{ts},\n"),
        };
        out.push_str(&line);
    }
    out
}

/// Counts rows a correct parser must keep: three non-empty fields, an
/// RFC 3339 timestamp with offset, a registered tower, and a local date in
/// the study month.
pub fn naive_clean_count(text: &str, towers: &HashSet<String>, year: i32, month: u32, tz: &Tz) -> usize {
    text.lines()
        .skip(1)
        .filter(|line| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 || f[0].is_empty() || f[2].is_empty() || !towers.contains(f[2]) {
                return false;
            }
            match DateTime::parse_from_rfc3339(f[1]) {
                Ok(t) => {
                    let local = t.with_timezone(tz);
                    local.year() == year && local.month() == month
                }
                Err(_) => false,
            }
        })
        .count()
}

/// (user, tower, day, hour) → count, recounted with a plain hash map.
pub fn hashmap_recount(events: &[Event], tz: &Tz) -> HashMap<(String, String, u32, u32), u32> {
    let mut m = HashMap::new();
    for e in events {
        let local = e.timestamp.with_timezone(tz);
        *m.entry((e.user_id.clone(), e.bts_id.clone(), local.day(), local.hour()))
            .or_insert(0) += 1;
    }
    m
}

/// Users whose raw event count exceeds twice the number of days.
pub fn brute_active(events: &[Event], days: u32) -> BTreeSet<String> {
    let mut totals: HashMap<&str, u64> = HashMap::new();
    for e in events {
        *totals.entry(e.user_id.as_str()).or_insert(0) += 1;
    }
    totals
        .into_iter()
        .filter(|(_, n)| *n > 2 * days as u64)
        .map(|(u, _)| u.to_string())
        .collect()
}
