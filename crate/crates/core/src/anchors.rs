//! Home and work anchor detection from hour-weighted connection scores.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{HourlyCounts, StudyMonth};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnchorError {
    #[error("hour {0} outside 0..=23")]
    HourOutOfRange(u8),
}

/// Night-time weight used for the home score.
pub fn home_weight(hour: u8) -> Result<u32, AnchorError> {
    match hour {
        2 | 3 => Ok(3),
        0 | 1 | 4 | 5 => Ok(2),
        6 | 23 => Ok(1),
        7..=22 => Ok(0),
        _ => Err(AnchorError::HourOutOfRange(hour)),
    }
}

/// Weekday daytime weight used for the work score.
pub fn work_weight(hour: u8) -> Result<u32, AnchorError> {
    match hour {
        9 | 10 | 11 | 14 | 15 | 16 | 17 => Ok(2),
        12 | 13 => Ok(1),
        0..=8 | 18..=23 => Ok(0),
        _ => Err(AnchorError::HourOutOfRange(hour)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub user_id: String,
    pub home_bts: String,
    pub work_bts: String,
    pub home_score: u64,
    pub work_score: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NoNightSignal,
    NoDistinctWork,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::NoNightSignal => "no_night_signal",
            RejectReason::NoDistinctWork => "no_distinct_work",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "no_night_signal" => Some(Self::NoNightSignal),
            "no_distinct_work" => Some(Self::NoDistinctWork),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub user_id: String,
    pub reason: RejectReason,
}

/// Anchors for every active user, split into accepted pairs and rejections.
/// Both lists are sorted by user id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnchorOutcome {
    pub anchors: Vec<AnchorPair>,
    pub rejected: Vec<Rejection>,
}

enum UserAnchor {
    Pair(AnchorPair),
    Rejected(Rejection),
}

pub fn detect_anchors(
    counts: &HourlyCounts,
    active: &BTreeSet<String>,
    month: StudyMonth,
) -> AnchorOutcome {
    let users: Vec<&String> = active.iter().collect();
    let per_user: Vec<UserAnchor> = users
        .par_iter()
        .map(|user| match counts.users.get(user.as_str()) {
            Some(cells) => anchor_user(user, cells, month),
            None => UserAnchor::Rejected(Rejection {
                user_id: user.to_string(),
                reason: RejectReason::NoNightSignal,
            }),
        })
        .collect();

    let mut out = AnchorOutcome::default();
    for a in per_user {
        match a {
            UserAnchor::Pair(p) => out.anchors.push(p),
            UserAnchor::Rejected(r) => out.rejected.push(r),
        }
    }
    out
}

fn anchor_user(
    user: &str,
    cells: &BTreeMap<crate::ingest::BinKey, u32>,
    month: StudyMonth,
) -> UserAnchor {
    let mut home: BTreeMap<&str, u64> = BTreeMap::new();
    let mut work: BTreeMap<&str, u64> = BTreeMap::new();
    for (key, &n) in cells {
        let hw = home_weight(key.hour).unwrap_or(0) as u64;
        if hw > 0 {
            *home.entry(&key.bts_id).or_default() += hw * n as u64;
        }
        let ww = work_weight(key.hour).unwrap_or(0) as u64;
        if ww > 0 && month.is_weekday(key.day) {
            *work.entry(&key.bts_id).or_default() += ww * n as u64;
        }
    }

    let reject = |reason| {
        UserAnchor::Rejected(Rejection {
            user_id: user.to_string(),
            reason,
        })
    };
    let Some((home_bts, home_score)) = argmax(home.iter().map(|(k, v)| (*k, *v))) else {
        return reject(RejectReason::NoNightSignal);
    };
    let Some((work_bts, work_score)) =
        argmax(work.iter().filter(|(k, _)| **k != home_bts).map(|(k, v)| (*k, *v)))
    else {
        return reject(RejectReason::NoDistinctWork);
    };
    UserAnchor::Pair(AnchorPair {
        user_id: user.to_string(),
        home_bts: home_bts.to_string(),
        work_bts: work_bts.to_string(),
        home_score,
        work_score,
    })
}

/// Largest positive score; the iterator is in ascending id order so the first
/// maximum is the smallest id.
fn argmax<'a>(scores: impl Iterator<Item = (&'a str, u64)>) -> Option<(&'a str, u64)> {
    let mut best: Option<(&str, u64)> = None;
    for (id, s) in scores {
        if s > 0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((id, s));
        }
    }
    best
}

impl AnchorOutcome {
    pub fn write_anchors_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["user_id", "home_bts", "work_bts", "home_score", "work_score"])?;
        for a in &self.anchors {
            wtr.write_record([
                a.user_id.as_str(),
                &a.home_bts,
                &a.work_bts,
                &a.home_score.to_string(),
                &a.work_score.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_rejected_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["user_id", "reason"])?;
        for r in &self.rejected {
            wtr.write_record([r.user_id.as_str(), r.reason.as_str()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(anchors: &Path, rejected: &Path) -> Result<Self, csv::Error> {
        let bad = |what: &str| csv::Error::from(std::io::Error::other(what.to_string()));
        let mut out = AnchorOutcome::default();
        let mut rdr = csv::Reader::from_path(anchors)?;
        for rec in rdr.records() {
            let rec = rec?;
            out.anchors.push(AnchorPair {
                user_id: rec[0].to_string(),
                home_bts: rec[1].to_string(),
                work_bts: rec[2].to_string(),
                home_score: rec[3].parse().map_err(|_| bad("bad home_score"))?,
                work_score: rec[4].parse().map_err(|_| bad("bad work_score"))?,
            });
        }
        let mut rdr = csv::Reader::from_path(rejected)?;
        for rec in rdr.records() {
            let rec = rec?;
            out.rejected.push(Rejection {
                user_id: rec[0].to_string(),
                reason: RejectReason::parse(&rec[1]).ok_or_else(|| bad("bad reject reason"))?,
            });
        }
        Ok(out)
    }

    /// Number of anchored users per home tower and per work tower.
    pub fn tower_totals(&self) -> (BTreeMap<String, f64>, BTreeMap<String, f64>) {
        let mut home = BTreeMap::new();
        let mut work = BTreeMap::new();
        for a in &self.anchors {
            *home.entry(a.home_bts.clone()).or_insert(0.0) += 1.0;
            *work.entry(a.work_bts.clone()).or_insert(0.0) += 1.0;
        }
        (home, work)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::BinKey;

    fn key(bts: &str, hour: u8, day: u8) -> BinKey {
        BinKey {
            bts_id: bts.into(),
            hour,
            day,
        }
    }

    fn march() -> StudyMonth {
        "2023-03".parse().unwrap()
    }

    #[test]
    fn weight_tables() {
        assert_eq!(home_weight(3), Ok(3));
        assert_eq!(home_weight(23), Ok(1));
        assert_eq!(home_weight(12), Ok(0));
        assert_eq!(work_weight(9), Ok(2));
        assert_eq!(work_weight(13), Ok(1));
        assert_eq!(work_weight(2), Ok(0));
        assert_eq!(home_weight(24), Err(AnchorError::HourOutOfRange(24)));
        assert_eq!(work_weight(30), Err(AnchorError::HourOutOfRange(30)));
    }

    #[test]
    fn single_tower_user_has_no_work() {
        let mut c = HourlyCounts::default();
        c.add("u", key("b1", 2, 1), 40);
        c.add("u", key("b1", 3, 2), 40);
        let active = BTreeSet::from(["u".to_string()]);
        let out = detect_anchors(&c, &active, march());
        assert!(out.anchors.is_empty());
        assert_eq!(out.rejected[0].reason, RejectReason::NoDistinctWork);
    }

    #[test]
    fn work_is_best_non_home_weekday_tower() {
        // 2023-03-01 is a Wednesday
        let mut c = HourlyCounts::default();
        c.add("u", key("b1", 2, 1), 30);
        c.add("u", key("b2", 10, 1), 10);
        c.add("u", key("b3", 12, 1), 4);
        let active = BTreeSet::from(["u".to_string()]);
        let out = detect_anchors(&c, &active, march());
        let a = &out.anchors[0];
        assert_eq!((a.home_bts.as_str(), a.work_bts.as_str()), ("b1", "b2"));
        assert_eq!(a.work_score, 20);
        assert_eq!(a.home_score, 90);
    }

    #[test]
    fn weekend_daytime_is_ignored_for_work() {
        // 2023-03-04 is a Saturday
        let mut c = HourlyCounts::default();
        c.add("u", key("b1", 1, 1), 30);
        c.add("u", key("b2", 10, 1), 1);
        c.add("u", key("b3", 10, 4), 50);
        let active = BTreeSet::from(["u".to_string()]);
        let out = detect_anchors(&c, &active, march());
        assert_eq!(out.anchors[0].work_bts, "b2");
    }

    #[test]
    fn no_night_signal_rejected() {
        let mut c = HourlyCounts::default();
        c.add("u", key("b2", 10, 1), 100);
        let active = BTreeSet::from(["u".to_string()]);
        let out = detect_anchors(&c, &active, march());
        assert_eq!(out.rejected[0].reason, RejectReason::NoNightSignal);
    }

    #[test]
    fn ties_pick_smallest_id() {
        let mut c = HourlyCounts::default();
        c.add("u", key("b9", 2, 1), 5);
        c.add("u", key("b3", 2, 1), 5);
        c.add("u", key("b7", 10, 1), 5);
        c.add("u", key("b5", 10, 1), 5);
        let active = BTreeSet::from(["u".to_string()]);
        let a = &detect_anchors(&c, &active, march()).anchors[0];
        assert_eq!((a.home_bts.as_str(), a.work_bts.as_str()), ("b3", "b5"));
    }

    #[test]
    fn home_tower_excluded_from_work() {
        let mut c = HourlyCounts::default();
        c.add("u", key("b1", 2, 1), 5);
        c.add("u", key("b1", 10, 1), 50);
        c.add("u", key("b2", 10, 1), 1);
        let active = BTreeSet::from(["u".to_string()]);
        let a = &detect_anchors(&c, &active, march()).anchors[0];
        assert_eq!((a.home_bts.as_str(), a.work_bts.as_str()), ("b1", "b2"));
    }
}
