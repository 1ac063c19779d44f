use std::collections::BTreeSet;

use commute_core::anchors::{detect_anchors, AnchorOutcome, RejectReason};
use commute_core::ingest::{
    bin_hourly, filter_active_users, parse_events, parse_timezone, BinKey, HourlyCounts, ParseOptions, StudyMonth,
    TowerRegistry,
};
use commute_core::synth::{files, generate_city, CitySpec, UserKind};
use commute_testkit::anchors::{brute_force_anchors, random_counts};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn march() -> StudyMonth {
    StudyMonth::new(2023, 3).unwrap()
}

#[test]
fn random_counts_match_brute_force_scorer() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let counts = random_counts(&mut rng, 1000, 15, 31);
    let everyone: BTreeSet<String> = (0..1000).map(|u| format!("u{u:04}")).collect();
    let fast = detect_anchors(&counts, &everyone, march());
    let slow = brute_force_anchors(&counts, &everyone, 2023, 3);
    assert_eq!(fast, slow);
    assert!(fast.anchors.len() > 300 && fast.rejected.len() > 50);
}

fn synth_anchors(noise: f64, users: usize, seed: u64) -> (AnchorOutcome, AnchorOutcome, commute_core::synth::CityTruth) {
    let dir = tempfile::tempdir().unwrap();
    let spec = CitySpec {
        seed,
        n_users: users,
        noise,
        ..Default::default()
    };
    let truth = generate_city(&spec, dir.path()).unwrap();
    let tz = parse_timezone(&spec.timezone).unwrap();
    let reg = TowerRegistry::load(&dir.path().join(files::BTS)).unwrap();
    let opts = ParseOptions {
        month: spec.month,
        tz,
        naive_timestamps: false,
    };
    let (events, report) = parse_events(&dir.path().join(files::EVENTS), &reg, &opts).unwrap();
    assert_eq!(report.retained, report.rows_read, "generated events must parse without drops");
    let counts = bin_hourly(&events, &tz);
    let active = filter_active_users(&counts, spec.month);
    let fast = detect_anchors(&counts, &active, spec.month);
    let slow = brute_force_anchors(&counts, &active, spec.month.year, spec.month.month);
    (fast, slow, truth)
}

fn recovery(outcome: &AnchorOutcome, truth: &commute_core::synth::CityTruth) -> f64 {
    let commuters: Vec<_> = truth.users.iter().filter(|u| u.kind == UserKind::Commuter).collect();
    let hits = commuters
        .iter()
        .filter(|u| {
            outcome
                .anchors
                .iter()
                .any(|a| a.user_id == u.user_id && a.home_bts == u.home_bts && a.work_bts == u.work_bts)
        })
        .count();
    hits as f64 / commuters.len() as f64
}

#[test]
fn noisy_synth_city_agrees_with_brute_force() {
    let (fast, slow, truth) = synth_anchors(0.2, 1000, 42);
    assert_eq!(fast, slow);
    assert_eq!(recovery(&fast, &truth), recovery(&slow, &truth));
}

#[test]
fn noiseless_synth_city_recovers_every_planted_pair() {
    let (fast, _, truth) = synth_anchors(0.0, 400, 3);
    assert_eq!(recovery(&fast, &truth), 1.0);
    for u in truth.users.iter().filter(|u| u.kind == UserKind::Inactive) {
        assert!(!fast.anchors.iter().any(|a| a.user_id == u.user_id));
    }
}

type Cell = (u8, u8, u8, u32);

fn user_counts(cells: &[Cell]) -> HourlyCounts {
    let mut c = HourlyCounts::default();
    for &(t, day, hour, n) in cells {
        c.add(
            "u",
            BinKey {
                bts_id: format!("b{t}"),
                hour,
                day,
            },
            n,
        );
    }
    c
}

fn anchors_of(cells: &[Cell]) -> AnchorOutcome {
    let active: BTreeSet<String> = ["u".to_string()].into();
    detect_anchors(&user_counts(cells), &active, march())
}

fn cells() -> impl Strategy<Value = Vec<Cell>> {
    prop::collection::vec((0u8..5, 1u8..=31, 0u8..24, 1u32..6), 1..50)
}

fn is_weekend(day: u8) -> bool {
    !march().is_weekday(day)
}

proptest! {
    #[test]
    fn scaling_counts_keeps_anchors(c in cells(), k in 2u32..7) {
        let scaled: Vec<Cell> = c.iter().map(|&(t, d, h, n)| (t, d, h, n * k)).collect();
        let a = anchors_of(&c);
        let b = anchors_of(&scaled);
        prop_assert_eq!(a.rejected, b.rejected);
        for (x, y) in a.anchors.iter().zip(&b.anchors) {
            prop_assert_eq!((&x.home_bts, &x.work_bts), (&y.home_bts, &y.work_bts));
        }
    }

    #[test]
    fn work_differs_from_home(c in cells()) {
        for a in anchors_of(&c).anchors {
            prop_assert_ne!(a.home_bts, a.work_bts);
        }
    }

    #[test]
    fn weekend_counts_do_not_move_work(c in cells(), extra in prop::collection::vec((0u8..5, 0u8..8, 0u8..24, 1u32..6), 1..20)) {
        let weekend: Vec<u8> = (1..=31).filter(|d| is_weekend(*d)).collect();
        let mut perturbed = c.clone();
        perturbed.extend(extra.iter().map(|&(t, d, h, n)| (t, weekend[d as usize], h, n)));
        let (a, b) = (anchors_of(&c), anchors_of(&perturbed));
        if let (Some(x), Some(y)) = (a.anchors.first(), b.anchors.first()) {
            if x.home_bts == y.home_bts {
                prop_assert_eq!(&x.work_bts, &y.work_bts);
            }
        }
    }

    #[test]
    fn daytime_counts_do_not_move_home(c in cells(), extra in prop::collection::vec((0u8..5, 1u8..=31, 7u8..=22, 1u32..6), 1..20)) {
        let mut perturbed = c.clone();
        perturbed.extend(extra);
        let home = |o: &AnchorOutcome| o.anchors.first().map(|a| a.home_bts.clone());
        let (a, b) = (anchors_of(&c), anchors_of(&perturbed));
        if home(&a).is_some() {
            prop_assert_eq!(home(&a), home(&b));
        } else if a.rejected[0].reason == RejectReason::NoNightSignal {
            prop_assert_eq!(b.rejected.first().map(|r| r.reason), Some(RejectReason::NoNightSignal));
        }
    }
}
