//! Hex contiguity weights and bivariate local Moran's I with conditional
//! permutation inference.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{hex_geometry, HexCell, HexCoord, ProjectedPlane};

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("degenerate_field: {0}")]
    DegenerateField(String),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at hex {0}")]
    NonFinite(HexCoord),
    #[error("alpha must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

/// Edge-adjacent neighbours within the study set, row-standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    /// Sorted hex ids; indices below refer to this order.
    pub hexes: Vec<HexCoord>,
    pub neighbors: Vec<Vec<u32>>,
}

impl SpatialWeights {
    pub fn len(&self) -> usize {
        self.hexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hexes.is_empty()
    }

    pub fn is_island(&self, i: usize) -> bool {
        self.neighbors[i].is_empty()
    }

    pub fn weight(&self, i: usize) -> f64 {
        1.0 / self.neighbors[i].len() as f64
    }

    pub fn index(&self, h: &HexCoord) -> Option<usize> {
        self.hexes.binary_search(h).ok()
    }
}

/// Queen contiguity, which on a hex lattice is plain edge adjacency.
pub fn build_weights(hexes: &[HexCoord]) -> SpatialWeights {
    let mut ids = hexes.to_vec();
    ids.sort();
    ids.dedup();
    let pos: HashMap<HexCoord, u32> = ids.iter().enumerate().map(|(i, h)| (*h, i as u32)).collect();
    let neighbors = ids
        .iter()
        .map(|h| {
            let mut n: Vec<u32> = h.neighbors().iter().filter_map(|x| pos.get(x).copied()).collect();
            n.sort_unstable();
            n
        })
        .collect();
    SpatialWeights { hexes: ids, neighbors }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LisaClass {
    HH,
    HL,
    LH,
    LL,
    NS,
}

impl LisaClass {
    pub const ALL: [LisaClass; 5] = [LisaClass::HH, LisaClass::HL, LisaClass::LH, LisaClass::LL, LisaClass::NS];

    pub fn as_str(&self) -> &'static str {
        match self {
            LisaClass::HH => "HH",
            LisaClass::HL => "HL",
            LisaClass::LH => "LH",
            LisaClass::LL => "LL",
            LisaClass::NS => "NS",
        }
    }

    fn quadrant(zx: f64, lag: f64) -> Self {
        match (zx >= 0.0, lag >= 0.0) {
            (true, true) => LisaClass::HH,
            (true, false) => LisaClass::HL,
            (false, true) => LisaClass::LH,
            (false, false) => LisaClass::LL,
        }
    }
}

impl fmt::Display for LisaClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LisaClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LisaClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown cluster class `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LisaConfig {
    pub permutations: u32,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for LisaConfig {
    fn default() -> Self {
        Self {
            permutations: 999,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LisaResult {
    pub hex_id: HexCoord,
    pub local_i: f64,
    /// Row-standardized lag of the standardized second variable.
    pub lag: f64,
    pub pseudo_p: f64,
    pub class: LisaClass,
}

/// Population z-scores over the non-island hexes; islands get NaN.
fn standardize(v: &[f64], w: &SpatialWeights, name: &str) -> Result<Vec<f64>, SpatialError> {
    let idx: Vec<usize> = (0..w.len()).filter(|&i| !w.is_island(i)).collect();
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| v[i]).sum::<f64>() / n;
    let var = idx.iter().map(|&i| (v[i] - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(SpatialError::DegenerateField(format!("{name} has zero variance")));
    }
    Ok((0..w.len())
        .map(|i| if w.is_island(i) { f64::NAN } else { (v[i] - mean) / sd })
        .collect())
}

fn check(v: &[f64], w: &SpatialWeights) -> Result<(), SpatialError> {
    if v.len() != w.len() {
        return Err(SpatialError::Length {
            expected: w.len(),
            got: v.len(),
        });
    }
    for (i, x) in v.iter().enumerate() {
        if !w.is_island(i) && !x.is_finite() {
            return Err(SpatialError::NonFinite(w.hexes[i]));
        }
    }
    Ok(())
}

/// Bivariate local Moran's I of `x` against the spatial lag of `y`, both
/// indexed like `w.hexes`. Each hex draws its permutations from its own
/// ChaCha stream, so results do not depend on scheduling.
pub fn bivariate_lisa(
    x: &[f64],
    y: &[f64],
    w: &SpatialWeights,
    cfg: &LisaConfig,
) -> Result<Vec<LisaResult>, SpatialError> {
    check(x, w)?;
    check(y, w)?;
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(SpatialError::BadAlpha(cfg.alpha));
    }
    let included: Vec<usize> = (0..w.len()).filter(|&i| !w.is_island(i)).collect();
    if included.len() < 2 {
        return Err(SpatialError::DegenerateField("fewer than two connected hexes".into()));
    }
    let zx = standardize(x, w, "x")?;
    let zy = standardize(y, w, "y")?;
    // position of each hex within `included`, for exclusion while sampling
    let mut slot = vec![usize::MAX; w.len()];
    for (k, &i) in included.iter().enumerate() {
        slot[i] = k;
    }
    let pool: Vec<f64> = included.iter().map(|&i| zy[i]).collect();

    let results = (0..w.len())
        .into_par_iter()
        .map(|i| {
            let hex_id = w.hexes[i];
            if w.is_island(i) {
                return LisaResult {
                    hex_id,
                    local_i: 0.0,
                    lag: 0.0,
                    pseudo_p: 1.0,
                    class: LisaClass::NS,
                };
            }
            let k = w.neighbors[i].len();
            let wi = w.weight(i);
            let lag: f64 = w.neighbors[i].iter().map(|&j| wi * zy[j as usize]).sum();
            let local_i = zx[i] * lag;

            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let me = slot[i];
            let mut extreme = 0u32;
            for _ in 0..cfg.permutations {
                let picks = index::sample(&mut rng, pool.len() - 1, k);
                let perm_lag: f64 = picks
                    .iter()
                    .map(|p| wi * pool[if p >= me { p + 1 } else { p }])
                    .sum();
                let perm_i = zx[i] * perm_lag;
                let hit = if local_i >= 0.0 { perm_i >= local_i } else { perm_i <= local_i };
                extreme += hit as u32;
            }
            let pseudo_p = (extreme as f64 + 1.0) / (cfg.permutations as f64 + 1.0);
            let class = if pseudo_p <= cfg.alpha {
                LisaClass::quadrant(zx[i], lag)
            } else {
                LisaClass::NS
            };
            LisaResult {
                hex_id,
                local_i,
                lag,
                pseudo_p,
                class,
            }
        })
        .collect();
    Ok(results)
}

/// Global bivariate Moran's I over the non-island hexes.
pub fn global_bivariate_moran(x: &[f64], y: &[f64], w: &SpatialWeights) -> Result<f64, SpatialError> {
    check(x, w)?;
    check(y, w)?;
    let zx = standardize(x, w, "x")?;
    let zy = standardize(y, w, "y")?;
    let (mut num, mut den, mut s0) = (0.0, 0.0, 0.0);
    for i in (0..w.len()).filter(|&i| !w.is_island(i)) {
        let wi = w.weight(i);
        for &j in &w.neighbors[i] {
            num += wi * zx[i] * zy[j as usize];
            s0 += wi;
        }
        den += zx[i] * zx[i];
    }
    let n = (0..w.len()).filter(|&i| !w.is_island(i)).count() as f64;
    Ok(n / s0 * num / den)
}

pub const LISA_CSV_HEADER: [&str; 5] = ["hex_id", "I_i", "lag", "pseudo_p", "class"];

pub fn write_lisa_csv<W: Write>(results: &[LisaResult], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(LISA_CSV_HEADER)?;
    for r in results {
        wtr.write_record([
            r.hex_id.to_string(),
            r.local_i.to_string(),
            r.lag.to_string(),
            r.pseudo_p.to_string(),
            r.class.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_lisa_csv(path: &Path) -> Result<Vec<LisaResult>, SpatialError> {
    let err = |message: String| SpatialError::Input {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != LISA_CSV_HEADER.len() {
            return Err(err(format!("expected {} fields", LISA_CSV_HEADER.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| err(format!("bad number `{}`", &rec[i])));
        out.push(LisaResult {
            hex_id: rec[0].parse().map_err(|_| err(format!("bad hex_id `{}`", &rec[0])))?,
            local_i: num(1)?,
            lag: num(2)?,
            pseudo_p: num(3)?,
            class: rec[4].parse().map_err(err)?,
        });
    }
    Ok(out)
}

/// Hex polygons carrying `I_i`, `pseudo_p` and `class`.
pub fn lisa_geojson(plane: &ProjectedPlane, hexes: &[HexCell], results: &[LisaResult]) -> Value {
    let cells: HashMap<HexCoord, &HexCell> = hexes.iter().map(|h| (h.hex_id, h)).collect();
    let features: Vec<Value> = results
        .iter()
        .filter_map(|r| {
            let cell = cells.get(&r.hex_id)?;
            Some(json!({
                "type": "Feature",
                "geometry": hex_geometry(plane, cell),
                "properties": {
                    "hex_id": r.hex_id.to_string(),
                    "I_i": r.local_i,
                    "pseudo_p": r.pseudo_p,
                    "class": r.class.as_str(),
                }
            }))
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(w: i32, h: i32) -> Vec<HexCoord> {
        let mut v = Vec::new();
        for r in 0..h {
            for q in -(r / 2)..w - (r / 2) {
                v.push(HexCoord::new(q, r));
            }
        }
        v
    }

    #[test]
    fn interior_hex_has_six_neighbours() {
        let hexes = block(5, 5);
        let w = build_weights(&hexes);
        let centre = w.index(&HexCoord::new(1, 2)).unwrap();
        assert_eq!(w.neighbors[centre].len(), 6);
        assert!((w.weight(centre) - 1.0 / 6.0).abs() < 1e-15);
        for i in 0..w.len() {
            for &j in &w.neighbors[i] {
                assert!(w.neighbors[j as usize].contains(&(i as u32)));
            }
        }
        let lone = build_weights(&[HexCoord::new(0, 0)]);
        assert!(lone.is_island(0));
    }

    #[test]
    fn constant_field_is_degenerate() {
        let hexes = block(4, 4);
        let w = build_weights(&hexes);
        let c = vec![1.0; w.len()];
        let err = bivariate_lisa(&c, &c, &w, &LisaConfig::default()).unwrap_err();
        assert!(err.to_string().starts_with("degenerate_field"));
    }

    #[test]
    fn islands_are_not_significant() {
        let mut hexes = block(4, 4);
        hexes.push(HexCoord::new(40, 40));
        let w = build_weights(&hexes);
        let x: Vec<f64> = (0..w.len()).map(|i| i as f64).collect();
        let res = bivariate_lisa(&x, &x, &w, &LisaConfig::default()).unwrap();
        let island = w.index(&HexCoord::new(40, 40)).unwrap();
        assert_eq!(res[island].class, LisaClass::NS);
        assert_eq!(res[island].pseudo_p, 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let r = vec![LisaResult {
            hex_id: HexCoord::new(3, -1),
            local_i: -0.25,
            lag: 0.5,
            pseudo_p: 0.001,
            class: LisaClass::LH,
        }];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_lisa_csv(&r, std::fs::File::create(f.path()).unwrap()).unwrap();
        assert_eq!(read_lisa_csv(f.path()).unwrap(), r);
    }
}
