use std::collections::BTreeMap;

use commute_core::geo::{
    assign_hexes, build_hex_grid, disaggregate, hex_area, voronoi, HexCell, Point, ProjectedPlane, Region,
};
use commute_testkit::geo::{monte_carlo_shares, nearest_site, random_sites};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(side: f64) -> Region {
    let h = side / 2.0;
    Region::from_polygon(
        vec![Point::new(-h, -h), Point::new(h, -h), Point::new(h, h), Point::new(-h, h)],
        vec![],
    )
}

#[test]
fn projection_round_trip_is_sub_metre() {
    let plane = ProjectedPlane::new(-70.65, -33.45, (-70.9, -33.7, -70.4, -33.2));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let (lon, lat) = (rng.gen_range(-70.9..-70.4), rng.gen_range(-33.7..-33.2));
        let p = plane.project(lon, lat).unwrap();
        let (lon2, lat2) = plane.unproject(&p);
        let q = plane.project(lon2, lat2).unwrap();
        assert!(p.dist(&q) < 0.5);
        assert!((lon - lon2).abs() < 1e-9 && (lat - lat2).abs() < 1e-9);
    }
}

#[test]
fn voronoi_cells_tile_and_respect_nearest_site() {
    let region = square(4000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for layout in 0..20 {
        let n = rng.gen_range(1..=200);
        let sites = random_sites(&mut rng, n, Point::new(-2000.0, -2000.0), Point::new(2000.0, 2000.0));
        let cells = voronoi(&sites, &region).unwrap();
        let total: f64 = cells.iter().map(|c| c.area()).sum();
        assert!((total - region.area()).abs() / region.area() < 1e-6, "layout {layout}");
        let by_id: BTreeMap<&str, &Region> = cells.iter().map(|c| (c.bts_id.as_str(), &c.region)).collect();
        for _ in 0..10_000 {
            let p = Point::new(rng.gen_range(-2000.0..2000.0), rng.gen_range(-2000.0..2000.0));
            let owner = &sites[nearest_site(&sites, &p)].0;
            assert!(by_id[owner.as_str()].contains(&p), "layout {layout}: {p:?} not in {owner}");
        }
    }
}

#[test]
fn hex_count_matches_area_bounds() {
    let side = 10_000.0;
    let edge = 174.0;
    let hexes = build_hex_grid(&square(side), edge).unwrap();
    let a = hex_area(edge);
    let lower = side * side / a;
    let upper = (side + 2.0 * edge) * (side + 2.0 * edge) / a;
    let n = hexes.len() as f64;
    assert!(n >= lower && n <= upper, "{n} outside [{lower}, {upper}]");
    for h in &hexes {
        assert!((h.area() - 1.5 * 3f64.sqrt() * edge * edge).abs() < 1e-9);
    }
}

#[test]
fn assignment_agrees_with_monte_carlo_majority() {
    let region = square(3000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sites = random_sites(&mut rng, 15, Point::new(-1500.0, -1500.0), Point::new(1500.0, 1500.0));
    let cells = voronoi(&sites, &region).unwrap();
    let grid = build_hex_grid(&region, 174.0).unwrap();
    let (hexes, dropped) = assign_hexes(&grid, &cells);
    assert_eq!(dropped, 0);
    let inside = |p: &Point| p.x.abs() <= 1500.0 && p.y.abs() <= 1500.0;
    let mut checked = 0;
    for h in &hexes {
        let shares = monte_carlo_shares(&mut rng, &h.center, h.edge_m, &sites, inside, 10_000);
        let top2 = shares.get(1).map_or(0.0, |s| s.1);
        let total: f64 = shares.iter().map(|s| s.1).sum();
        if (shares[0].1 - top2) / total > 0.05 {
            assert_eq!(h.assigned_bts.as_deref(), Some(shares[0].0.as_str()), "hex {}", h.hex_id);
            checked += 1;
        }
    }
    assert!(checked > hexes.len() / 2);
}

fn layout(seed: u64, n: usize) -> (Vec<(String, Point)>, Vec<HexCell>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = square(2500.0);
    let sites = random_sites(&mut rng, n, Point::new(-1250.0, -1250.0), Point::new(1250.0, 1250.0));
    let cells = voronoi(&sites, &region).unwrap();
    let (hexes, _) = assign_hexes(&build_hex_grid(&region, 174.0).unwrap(), &cells);
    (sites, hexes)
}

#[test]
fn disaggregation_conserves_mass_per_tower() {
    let (sites, mut hexes) = layout(5, 12);
    let owned: std::collections::BTreeSet<_> = hexes.iter().filter_map(|h| h.assigned_bts.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut home = BTreeMap::new();
    let mut work = BTreeMap::new();
    for (id, _) in sites.iter().filter(|s| owned.contains(&s.0)) {
        home.insert(id.clone(), rng.gen_range(0..500) as f64);
        work.insert(id.clone(), rng.gen_range(0..500) as f64);
    }
    disaggregate(&home, &work, &mut hexes).unwrap();
    for (id, total) in &home {
        let s: f64 = hexes.iter().filter(|h| h.assigned_bts.as_ref() == Some(id)).map(|h| h.user_share).sum();
        assert!((s - total).abs() <= 1e-9 * total.max(1.0));
    }
    let all_users: f64 = hexes.iter().map(|h| h.user_share).sum();
    let all_jobs: f64 = hexes.iter().map(|h| h.opportunity_share).sum();
    assert!((all_users - home.values().sum::<f64>()).abs() < 1e-9);
    assert!((all_jobs - work.values().sum::<f64>()).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assignment_ignores_site_order(seed in any::<u64>(), n in 2usize..20) {
        let (sites, hexes) = layout(seed, n);
        let mut shuffled = sites.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let region = square(2500.0);
        let cells = voronoi(&shuffled, &region).unwrap();
        let (again, _) = assign_hexes(&build_hex_grid(&region, 174.0).unwrap(), &cells);
        prop_assert_eq!(hexes, again);
    }

    #[test]
    fn every_hex_has_one_owner(seed in any::<u64>(), n in 1usize..30) {
        let (_, hexes) = layout(seed, n);
        let ids: std::collections::BTreeSet<_> = hexes.iter().map(|h| h.hex_id).collect();
        prop_assert_eq!(ids.len(), hexes.len());
        prop_assert!(hexes.iter().all(|h| h.assigned_bts.is_some()));
    }
}
