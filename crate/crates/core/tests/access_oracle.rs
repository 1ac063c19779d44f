use std::collections::BTreeMap;

use commute_core::access::{commute_stats, cumulative_access, gini, palma_ratio, quartiles};
use commute_core::anchors::AnchorPair;
use commute_core::geo::{HexCell, HexCoord};
use commute_core::router::TravelTimeMatrix;
use commute_testkit::access::{class_counts, coa_double_loop, gini_pairwise, palma_pseudo_persons};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids(n: usize) -> Vec<HexCoord> {
    (0..n as i32).map(|i| HexCoord::new(i / 20, i % 20)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> (TravelTimeMatrix, Vec<Vec<f64>>) {
    let mut dense = vec![vec![0.0; n]; n];
    for (o, row) in dense.iter_mut().enumerate() {
        for (d, t) in row.iter_mut().enumerate() {
            *t = if o == d {
                0.0
            } else if rng.gen_bool(0.05) {
                f64::INFINITY
            } else {
                rng.gen_range(1.0..120.0)
            };
        }
    }
    let m = TravelTimeMatrix {
        origins: ids(n),
        destinations: ids(n),
        minutes: dense.iter().flatten().copied().collect(),
    };
    (m, dense)
}

#[test]
fn coa_matches_double_loop_and_grows_with_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (m, dense) = random_matrix(&mut rng, 200);
    let mass: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..10.0)).collect();
    let opp: BTreeMap<HexCoord, f64> = ids(200).into_iter().zip(mass.iter().copied()).collect();
    let mut prev = vec![0.0; 200];
    for k in 0..20 {
        let t = k as f64 * 7.0;
        let got = cumulative_access(&m, &opp, t).unwrap();
        let want = coa_double_loop(&dense, &mass, t);
        for o in 0..200 {
            assert!((got[o] - want[o]).abs() <= 1e-9, "T={t} origin {o}");
            assert!(got[o] >= prev[o]);
        }
        prev = got;
    }
}

fn palma_instance(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, u32, f64)> {
    let mut smi: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 + rng.gen_range(0.0..1e-4)).collect();
    smi.shuffle(rng);
    let mut items: Vec<(f64, u32, f64)> = smi
        .into_iter()
        .map(|s| (s, rng.gen_range(1..40), rng.gen_range(5.0..90.0)))
        .collect();
    let total: u32 = items.iter().map(|i| i.1).sum();
    items[0].1 += (10 - total % 10) % 10;
    items
}

#[test]
fn palma_matches_pseudo_person_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..5 {
        let items = palma_instance(&mut rng, 500);
        let as_f64: Vec<(f64, f64, f64)> = items.iter().map(|&(s, w, t)| (s, w as f64, t)).collect();
        let got = palma_ratio(&as_f64).unwrap();
        let want = palma_pseudo_persons(&items);
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        let scaled: Vec<(f64, f64, f64)> = as_f64.iter().map(|&(s, w, t)| (s, w, t * 3.7)).collect();
        assert!((palma_ratio(&scaled).unwrap() - got).abs() <= 1e-12 * got);
        let uniform: Vec<(f64, f64, f64)> = as_f64.iter().map(|&(s, w, _)| (s, w, 42.0)).collect();
        assert!((palma_ratio(&uniform).unwrap() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn gini_matches_pairwise_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let v: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.0..100.0)).collect();
    let w: Vec<f64> = (0..1000).map(|_| rng.gen_range(0.1..5.0)).collect();
    let got = gini(&v, &w).unwrap();
    assert!((got - gini_pairwise(&v, &w)).abs() <= 1e-9);
    let scaled: Vec<f64> = v.iter().map(|x| x * 2.5).collect();
    assert!((gini(&scaled, &w).unwrap() - got).abs() <= 1e-12);
}

#[test]
fn citywide_mean_equals_per_user_reaverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let n = 60;
    let (mut m, _) = random_matrix(&mut rng, n);
    m.minutes.iter_mut().filter(|t| !t.is_finite()).for_each(|t| *t = 200.0);
    let towers = 12;
    let hexes: Vec<HexCell> = ids(n)
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            let mut c = HexCell::new(h, 174.0);
            c.assigned_bts = Some(format!("t{:02}", i % towers));
            c
        })
        .collect();
    let anchors: Vec<AnchorPair> = (0..300)
        .map(|u| {
            let h = rng.gen_range(0..towers);
            let w = (h + rng.gen_range(1..towers)) % towers;
            AnchorPair {
                user_id: format!("u{u}"),
                home_bts: format!("t{h:02}"),
                work_bts: format!("t{w:02}"),
                home_score: 1,
                work_score: 1,
            }
        })
        .collect();
    let stats = commute_stats(&anchors, &hexes, &m).unwrap();
    let per_user: Vec<f64> = anchors
        .iter()
        .map(|a| {
            let homes: Vec<usize> = (0..n).filter(|i| format!("t{:02}", i % towers) == a.home_bts).collect();
            let works: Vec<usize> = (0..n).filter(|i| format!("t{:02}", i % towers) == a.work_bts).collect();
            let mut s = 0.0;
            for &h in &homes {
                for &w in &works {
                    s += m.get(h, w);
                }
            }
            s / (homes.len() * works.len()) as f64
        })
        .collect();
    let flat = per_user.iter().sum::<f64>() / per_user.len() as f64;
    let city = stats.citywide_mean.unwrap();
    assert!((city - flat).abs() <= 1e-9 * flat);
    let means: Vec<f64> = stats.hex.values().map(|v| v.0).collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= city && city <= hi);
}

proptest! {
    #[test]
    fn quartile_counts_are_balanced(seed in any::<u64>(), n in 4usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect();
        v.shuffle(&mut rng);
        let q = quartiles(&v);
        for c in class_counts(&q.classes) {
            prop_assert!((c as f64 - n as f64 / 4.0).abs() <= 1.0, "{:?} for n={}", class_counts(&q.classes), n);
        }
    }

    #[test]
    fn gini_zero_iff_equal(v in prop::collection::vec(0.0f64..50.0, 2..40), c in 0.5f64..20.0) {
        let w = vec![1.0; v.len()];
        prop_assert_eq!(gini(&vec![c; v.len()], &w).unwrap(), 0.0);
        let g = gini(&v, &w).unwrap();
        let all_equal = v.iter().all(|x| *x == v[0]);
        prop_assert_eq!(g == 0.0, all_equal || v.iter().all(|x| *x == 0.0));
        prop_assert!((0.0..1.0).contains(&g));
    }

    #[test]
    fn palma_scale_invariant(seed in any::<u64>(), k in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<(f64, f64, f64)> = (0..50)
            .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.1..5.0), rng.gen_range(1.0..90.0)))
            .collect();
        let scaled: Vec<(f64, f64, f64)> = items.iter().map(|&(s, w, t)| (s, w, t * k)).collect();
        let (a, b) = (palma_ratio(&items).unwrap(), palma_ratio(&scaled).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn coa_monotone_in_threshold(seed in any::<u64>(), t1 in 0.0f64..100.0, dt in 0.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, _) = random_matrix(&mut rng, 15);
        let opp: BTreeMap<HexCoord, f64> = ids(15).into_iter().map(|h| (h, rng.gen_range(0.0..3.0))).collect();
        let a = cumulative_access(&m, &opp, t1).unwrap();
        let b = cumulative_access(&m, &opp, t1 + dt).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x <= y));
    }
}
