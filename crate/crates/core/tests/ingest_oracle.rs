use std::collections::{BTreeMap, HashSet};

use chrono::{TimeZone, Utc};
use commute_core::ingest::{
    bin_hourly, filter_active_users, parse_events, parse_timezone, BinKey, Event, HourlyCounts, ParseOptions,
    StudyMonth, Tower, TowerRegistry,
};
use commute_testkit::ingest::{brute_active, corrupted_events_csv, hashmap_recount, naive_clean_count};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn registry(n: usize) -> TowerRegistry {
    TowerRegistry::new(
        (0..n)
            .map(|i| Tower {
                bts_id: format!("b{i:02}"),
                lon: -70.6 + i as f64 * 1e-3,
                lat: -33.4,
            })
            .collect(),
    )
    .unwrap()
}

fn march() -> StudyMonth {
    StudyMonth::new(2023, 3).unwrap()
}

#[test]
fn corrupted_file_retains_exactly_the_clean_rows() {
    let tz = parse_timezone("America/Santiago").unwrap();
    let reg = registry(20);
    let ids: Vec<String> = reg.towers().iter().map(|t| t.bts_id.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let text = corrupted_events_csv(&mut rng, 10_000, 0.03, 300, &ids, 2023, 3, &tz);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.csv");
    std::fs::write(&path, &text).unwrap();

    let opts = ParseOptions {
        month: march(),
        tz,
        naive_timestamps: false,
    };
    let (events, report) = parse_events(&path, &reg, &opts).unwrap();
    let expected = naive_clean_count(&text, &ids.iter().cloned().collect::<HashSet<_>>(), 2023, 3, &tz);
    assert_eq!(report.rows_read, 10_000);
    assert_eq!(events.len(), expected);
    assert_eq!(report.retained as usize, expected);
    assert!(expected < 10_000 && expected > 9_600);
    let dropped: u64 = report.dropped.values().sum();
    assert_eq!(report.retained + dropped, report.rows_read);
}

fn random_events(rng: &mut ChaCha8Rng, users: usize, towers: usize) -> Vec<Event> {
    let start = Utc.with_ymd_and_hms(2023, 3, 1, 12, 0, 0).unwrap().timestamp();
    let mut out = Vec::new();
    for u in 0..users {
        for _ in 0..rng.gen_range(40..90) {
            out.push(Event {
                user_id: format!("u{u:03}"),
                timestamp: Utc.timestamp_opt(start + rng.gen_range(0..28 * 86_400), 0).unwrap(),
                bts_id: format!("b{:02}", rng.gen_range(0..towers)),
            });
        }
    }
    out
}

#[test]
fn binning_matches_hashmap_recount() {
    let tz = parse_timezone("America/Santiago").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let events: Vec<Event> = random_events(&mut rng, 200, 12).into_iter().take(10_000).collect();
    assert_eq!(events.len(), 10_000);
    let counts = bin_hourly(&events, &tz);
    assert_eq!(counts.total(), 10_000);
    let oracle = hashmap_recount(&events, &tz);
    let mut flat = BTreeMap::new();
    for (u, cells) in &counts.users {
        for (k, n) in cells {
            flat.insert((u.clone(), k.bts_id.clone(), k.day as u32, k.hour as u32), *n);
        }
    }
    assert_eq!(flat.len(), oracle.len());
    for (k, n) in oracle {
        assert_eq!(flat.get(&k), Some(&n), "{k:?}");
    }
}

#[test]
fn active_set_matches_brute_recount() {
    let tz = parse_timezone("America/Santiago").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let events = random_events(&mut rng, 500, 30);
    let counts = bin_hourly(&events, &tz);
    let active = filter_active_users(&counts, march());
    let oracle = brute_active(&events, 31);
    assert_eq!(active, oracle);
    assert!(!active.is_empty() && active.len() < 500);
}

#[test]
fn serialized_counts_are_byte_stable() {
    let tz = parse_timezone("America/Santiago").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let events = random_events(&mut rng, 40, 5);
    let mut reversed = events.clone();
    reversed.reverse();
    let mut a = Vec::new();
    let mut b = Vec::new();
    bin_hourly(&events, &tz).write_csv(&mut a).unwrap();
    bin_hourly(&reversed, &tz).write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    std::fs::write(&p, &a).unwrap();
    assert_eq!(HourlyCounts::read_csv(&p).unwrap(), bin_hourly(&events, &tz));
}

fn counts_from(cells: &[(u8, u8, u8, u32)]) -> HourlyCounts {
    let mut c = HourlyCounts::default();
    for &(u, day, hour, n) in cells {
        c.add(
            &format!("u{u}"),
            BinKey {
                bts_id: "b0".into(),
                hour,
                day,
            },
            n,
        );
    }
    c
}

proptest! {
    #[test]
    fn adding_events_never_deactivates(
        base in prop::collection::vec((0u8..6, 1u8..=31, 0u8..24, 1u32..30), 0..60),
        extra in prop::collection::vec((0u8..6, 1u8..=31, 0u8..24, 1u32..30), 0..30),
    ) {
        let before = filter_active_users(&counts_from(&base), march());
        let all: Vec<_> = base.iter().chain(&extra).copied().collect();
        let after = filter_active_users(&counts_from(&all), march());
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn binning_conserves_events(seed in any::<u64>(), users in 1usize..20) {
        let tz = parse_timezone("America/Santiago").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(&mut rng, users, 4);
        prop_assert_eq!(bin_hourly(&events, &tz).total(), events.len() as u64);
    }
}
