//! Exhaustive anchor scorer that re-walks every (user, tower, hour, day) cell.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;

use commute_core::anchors::{AnchorOutcome, AnchorPair, RejectReason, Rejection};
use commute_core::ingest::{BinKey, HourlyCounts};

/// Home weights written out hour by hour.
const HOME: [u64; 24] = [2, 2, 3, 3, 2, 2, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
/// Work weights written out hour by hour.
const WORK: [u64; 24] = [0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 2, 1, 1, 2, 2, 2, 2, 0, 0, 0, 0, 0, 0];

fn days_in(year: i32, month: u32) -> u32 {
    (28..=31)
        .rev()
        .find(|d| NaiveDate::from_ymd_opt(year, month, *d).is_some())
        .expect("month has days")
}

pub fn brute_force_anchors(counts: &HourlyCounts, active: &BTreeSet<String>, year: i32, month: u32) -> AnchorOutcome {
    let days = days_in(year, month);
    let mut out = AnchorOutcome::default();
    for user in active {
        let empty = BTreeMap::new();
        let cells = counts.users.get(user).unwrap_or(&empty);
        let towers: BTreeSet<&str> = cells.keys().map(|k| k.bts_id.as_str()).collect();
        let count = |t: &str, h: u8, d: u8| {
            cells
                .get(&BinKey {
                    bts_id: t.to_string(),
                    hour: h,
                    day: d,
                })
                .copied()
                .unwrap_or(0) as u64
        };
        let mut home: Option<(&str, u64)> = None;
        let mut work_scores: Vec<(&str, u64)> = Vec::new();
        for &t in &towers {
            let (mut hs, mut ws) = (0u64, 0u64);
            for h in 0..24u8 {
                for d in 1..=days as u8 {
                    let c = count(t, h, d);
                    hs += HOME[h as usize] * c;
                    let wd = NaiveDate::from_ymd_opt(year, month, d as u32).unwrap().weekday();
                    if !matches!(wd, Weekday::Sat | Weekday::Sun) {
                        ws += WORK[h as usize] * c;
                    }
                }
            }
            if hs > 0 && home.map_or(true, |(_, b)| hs > b) {
                home = Some((t, hs));
            }
            work_scores.push((t, ws));
        }
        let Some((home_bts, home_score)) = home else {
            out.rejected.push(Rejection {
                user_id: user.clone(),
                reason: RejectReason::NoNightSignal,
            });
            continue;
        };
        let mut work: Option<(&str, u64)> = None;
        for &(t, s) in &work_scores {
            if t != home_bts && s > 0 && work.map_or(true, |(_, b)| s > b) {
                work = Some((t, s));
            }
        }
        match work {
            None => out.rejected.push(Rejection {
                user_id: user.clone(),
                reason: RejectReason::NoDistinctWork,
            }),
            Some((work_bts, work_score)) => out.anchors.push(AnchorPair {
                user_id: user.clone(),
                home_bts: home_bts.to_string(),
                work_bts: work_bts.to_string(),
                home_score,
                work_score,
            }),
        }
    }
    out
}

/// Random sparse hourly counts, with frequent ties and empty users.
pub fn random_counts<R: Rng>(rng: &mut R, users: usize, towers: usize, days: u8) -> HourlyCounts {
    let mut c = HourlyCounts::default();
    for u in 0..users {
        let user = format!("u{u:04}");
        let cells = rng.gen_range(0..60);
        let pool = rng.gen_range(1..=towers.min(6));
        let base = rng.gen_range(0..towers);
        for _ in 0..cells {
            let t = (base + rng.gen_range(0..pool)) % towers;
            c.add(
                &user,
                BinKey {
                    bts_id: format!("b{t:02}"),
                    hour: rng.gen_range(0..24),
                    day: rng.gen_range(1..=days),
                },
                rng.gen_range(1..4),
            );
        }
    }
    c
}
