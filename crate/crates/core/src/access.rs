//! Commute statistics, cumulative-opportunity accessibility, inequality
//! ratios and bivariate quartile classes per hex.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchors::AnchorPair;
use crate::geo::{hexes_per_tower, HexCell, HexCoord};
use crate::router::TravelTimeMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum AccessError {
    #[error("degenerate_distribution: {0}")]
    DegenerateDistribution(String),
    #[error("negative value {0} in inequality input")]
    NegativeValue(f64),
    #[error("threshold must be a non-negative number, got {0}")]
    BadThreshold(f64),
    #[error("tower `{0}` has no hexes")]
    TowerWithoutHexes(String),
    #[error("no matrix entry for {0} -> {1}")]
    MissingEntry(HexCoord, HexCoord),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

/// Per-hex and citywide commute means.
#[derive(Debug, Clone, PartialEq)]
pub struct CommuteStats {
    /// (weighted mean minutes, commuter weight with a finite time) per home hex.
    pub hex: BTreeMap<HexCoord, (f64, f64)>,
    pub citywide_mean: Option<f64>,
    pub reachable_weight: f64,
    pub unreachable_weight: f64,
    /// Users with at least one unreachable home/work hex pair.
    pub users_with_unreachable: usize,
}

/// Each user's unit mass is spread evenly over (home hex, work hex) pairs of
/// their anchor towers; the pair's time is the matrix entry.
pub fn commute_stats(
    anchors: &[AnchorPair],
    hexes: &[HexCell],
    matrix: &TravelTimeMatrix,
) -> Result<CommuteStats, AccessError> {
    let per_tower = hexes_per_tower(hexes);
    let lookup = |bts: &str| {
        per_tower
            .get(bts)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| AccessError::TowerWithoutHexes(bts.to_string()))
    };
    let mut sums: BTreeMap<HexCoord, (f64, f64)> = BTreeMap::new();
    let (mut total_t, mut total_w, mut lost_w) = (0.0, 0.0, 0.0);
    let mut users_with_unreachable = 0;
    for a in anchors {
        let homes = lookup(&a.home_bts)?;
        let works = lookup(&a.work_bts)?;
        let w = 1.0 / (homes.len() * works.len()) as f64;
        let mut any_lost = false;
        for h in homes {
            let oi = matrix.origin_index(h).ok_or(AccessError::MissingEntry(*h, works[0]))?;
            let e = sums.entry(*h).or_insert((0.0, 0.0));
            for d in works {
                let di = matrix.destination_index(d).ok_or(AccessError::MissingEntry(*h, *d))?;
                let t = matrix.get(oi, di);
                if t.is_finite() {
                    e.0 += w * t;
                    e.1 += w;
                    total_t += w * t;
                    total_w += w;
                } else {
                    lost_w += w;
                    any_lost = true;
                }
            }
        }
        users_with_unreachable += any_lost as usize;
    }
    let hex = sums
        .into_iter()
        .map(|(h, (t, w))| (h, (if w > 0.0 { t / w } else { f64::NAN }, w)))
        .collect();
    Ok(CommuteStats {
        hex,
        citywide_mean: (total_w > 0.0).then(|| total_t / total_w),
        reachable_weight: total_w,
        unreachable_weight: lost_w,
        users_with_unreachable,
    })
}

/// Opportunity mass reachable within `threshold_min` from every matrix
/// origin; `t == threshold` counts as reachable, unreachable never does.
pub fn cumulative_access(
    matrix: &TravelTimeMatrix,
    opportunities: &BTreeMap<HexCoord, f64>,
    threshold_min: f64,
) -> Result<Vec<f64>, AccessError> {
    if !(threshold_min >= 0.0) {
        return Err(AccessError::BadThreshold(threshold_min));
    }
    let mass: Vec<f64> = matrix
        .destinations
        .iter()
        .map(|d| opportunities.get(d).copied().unwrap_or(0.0))
        .collect();
    Ok((0..matrix.origins.len())
        .into_par_iter()
        .map(|o| {
            matrix
                .row(o)
                .iter()
                .zip(&mass)
                .filter(|(t, _)| **t <= threshold_min)
                .map(|(_, m)| m)
                .sum()
        })
        .collect())
}

/// Mean commute of the most privileged 10% of commuters over that of the
/// least privileged 40%, ranking by hex SMI. Items are (smi, weight, minutes).
/// Hexes with equal SMI are pooled; boundary hexes are split by weight.
pub fn palma_ratio(items: &[(f64, f64, f64)]) -> Result<f64, AccessError> {
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    let mut sorted: Vec<&(f64, f64, f64)> = items.iter().filter(|i| i.1 > 0.0).collect();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(smi, w, t) in sorted {
        match groups.last_mut() {
            Some(g) if g.0 == smi => {
                g.2 = (g.2 * g.1 + t * w) / (g.1 + w);
                g.1 += w;
            }
            _ => groups.push((smi, w, t)),
        }
    }
    let total: f64 = groups.iter().map(|g| g.1).sum();
    if !(total > 0.0) {
        return Err(AccessError::DegenerateDistribution("total commuter weight is zero".into()));
    }
    let top = slice_mean(groups.iter(), 0.1 * total);
    let bottom = slice_mean(groups.iter().rev(), 0.4 * total);
    if !(bottom > 0.0) {
        return Err(AccessError::DegenerateDistribution("bottom-40% mean commute is zero".into()));
    }
    Ok(top / bottom)
}

/// Weighted mean minutes over the first `take` units of weight.
fn slice_mean<'a>(groups: impl Iterator<Item = &'a (f64, f64, f64)>, take: f64) -> f64 {
    let (mut left, mut acc) = (take, 0.0);
    for &(_, w, t) in groups {
        if left <= 0.0 {
            break;
        }
        let used = w.min(left);
        acc += used * t;
        left -= used;
    }
    acc / take
}

/// Weighted Gini coefficient: mean absolute pairwise difference over twice
/// the mean. O(n log n) via prefix sums over sorted values.
pub fn gini(values: &[f64], weights: &[f64]) -> Result<f64, AccessError> {
    assert_eq!(values.len(), weights.len(), "values and weights differ in length");
    if let Some(&v) = values.iter().find(|v| !(**v >= 0.0)) {
        return Err(AccessError::NegativeValue(v));
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(AccessError::NegativeValue(w));
    }
    let total_w: f64 = weights.iter().sum();
    if !(total_w > 0.0) {
        return Err(AccessError::DegenerateDistribution("total weight is zero".into()));
    }
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total_w;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    // Ties are added as one block so equal values contribute exactly zero.
    let (mut cum_w, mut cum_wx, mut pair_sum) = (0.0, 0.0, 0.0);
    for block in order.chunk_by(|&a, &b| values[a] == values[b]) {
        let x = values[block[0]];
        let w: f64 = block.iter().map(|&i| weights[i]).sum();
        pair_sum += w * (x * cum_w - cum_wx);
        cum_w += w;
        cum_wx += w * x;
    }
    Ok((pair_sum / (total_w * total_w * mean)).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quartiles {
    /// 1..=4 per input value.
    pub classes: Vec<u8>,
    /// Upper-inclusive breakpoints at the 25th, 50th and 75th percentiles.
    pub breaks: [f64; 3],
    /// Fewer than four distinct values.
    pub degenerate: bool,
}

/// Quartile classes by rank. Breakpoint k is the smallest value with at
/// least k/4 of the values at or below it; a value equal to a breakpoint
/// joins the lower quartile.
pub fn quartiles(values: &[f64]) -> Quartiles {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut breaks = [f64::NAN; 3];
    if n > 0 {
        for (k, b) in breaks.iter_mut().enumerate() {
            let need = ((k + 1) * n).div_ceil(4).max(1);
            *b = sorted[need - 1];
        }
    }
    let classes = values
        .iter()
        .map(|v| 1 + breaks.iter().filter(|b| v > b).count() as u8)
        .collect();
    let mut distinct = sorted;
    distinct.dedup();
    Quartiles {
        classes,
        breaks,
        degenerate: distinct.len() < 4,
    }
}

/// Quartile classes of SMI and mean commute over the same hexes.
pub fn bivariate_quartiles(smi: &[f64], commute: &[f64]) -> (Quartiles, Quartiles) {
    (quartiles(smi), quartiles(commute))
}

/// Reads `hex_id,smi`.
pub fn read_smi(path: &Path) -> Result<BTreeMap<HexCoord, f64>, AccessError> {
    let err = |message: String| AccessError::Input {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["hex_id", "smi"] {
        return Err(err(format!("expected header `hex_id,smi`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let hex: HexCoord = rec[0].parse().map_err(|_| err(format!("line {line}: bad hex_id `{}`", &rec[0])))?;
        let smi: f64 = rec[1]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(format!("line {line}: bad smi `{}`", &rec[1])))?;
        if out.insert(hex, smi).is_some() {
            return Err(err(format!("line {line}: duplicate hex {hex}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexMetrics {
    pub hex_id: HexCoord,
    pub mean_commute_min: Option<f64>,
    pub commuter_weight: f64,
    pub coa: Option<f64>,
    pub coa_share: Option<f64>,
    pub smi: Option<f64>,
    pub q_smi: Option<u8>,
    pub q_commute: Option<u8>,
}

pub const HEX_METRICS_HEADER: [&str; 8] = [
    "hex_id",
    "mean_commute_min",
    "commuter_weight",
    "coa",
    "coa_share",
    "smi",
    "q_smi",
    "q_commute",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AccessReport {
    pub metrics: Vec<HexMetrics>,
    pub threshold_min: f64,
    pub citywide_mean: Option<f64>,
    pub palma: Option<f64>,
    pub gini: Option<f64>,
    pub total_opportunities: f64,
    pub unreachable_weight: f64,
    pub smi_degenerate: bool,
    pub commute_degenerate: bool,
}

/// Everything the access stage derives for each grid hex. `threshold_min`
/// of `None` uses the citywide mean commute.
pub fn hex_metrics(
    hexes: &[HexCell],
    anchors: &[AnchorPair],
    matrix: &TravelTimeMatrix,
    smi: &BTreeMap<HexCoord, f64>,
    threshold_min: Option<f64>,
) -> Result<AccessReport, AccessError> {
    let stats = commute_stats(anchors, hexes, matrix)?;
    let threshold = match threshold_min {
        Some(t) => t,
        None => stats
            .citywide_mean
            .ok_or_else(|| AccessError::DegenerateDistribution("no finite commute to derive a threshold".into()))?,
    };
    let opportunities: BTreeMap<HexCoord, f64> = hexes
        .iter()
        .filter(|h| h.opportunity_share > 0.0)
        .map(|h| (h.hex_id, h.opportunity_share))
        .collect();
    let total_opp: f64 = opportunities.values().sum();
    let coa = cumulative_access(matrix, &opportunities, threshold)?;

    let mut metrics: Vec<HexMetrics> = hexes
        .iter()
        .map(|h| {
            let (mean, weight) = stats
                .hex
                .get(&h.hex_id)
                .filter(|(_, w)| *w > 0.0)
                .map(|&(m, w)| (Some(m), w))
                .unwrap_or((None, 0.0));
            let coa = matrix.origin_index(&h.hex_id).map(|o| coa[o]);
            HexMetrics {
                hex_id: h.hex_id,
                mean_commute_min: mean,
                commuter_weight: weight,
                coa,
                coa_share: coa.map(|c| if total_opp > 0.0 { c / total_opp } else { 0.0 }),
                smi: smi.get(&h.hex_id).copied(),
                q_smi: None,
                q_commute: None,
            }
        })
        .collect();
    metrics.sort_by_key(|m| m.hex_id);

    let both: Vec<usize> = (0..metrics.len())
        .filter(|&i| metrics[i].smi.is_some() && metrics[i].mean_commute_min.is_some())
        .collect();
    let xs: Vec<f64> = both.iter().map(|&i| metrics[i].smi.unwrap()).collect();
    let ys: Vec<f64> = both.iter().map(|&i| metrics[i].mean_commute_min.unwrap()).collect();
    let (qs, qc) = bivariate_quartiles(&xs, &ys);
    for (k, &i) in both.iter().enumerate() {
        metrics[i].q_smi = Some(qs.classes[k]);
        metrics[i].q_commute = Some(qc.classes[k]);
    }

    let palma_items: Vec<(f64, f64, f64)> = both
        .iter()
        .map(|&i| (metrics[i].smi.unwrap(), metrics[i].commuter_weight, metrics[i].mean_commute_min.unwrap()))
        .collect();
    let palma = match palma_ratio(&palma_items) {
        Ok(p) => Some(p),
        Err(e) => {
            log::warn!("palma ratio unavailable: {e}");
            None
        }
    };
    let with_mean: Vec<&HexMetrics> = metrics.iter().filter(|m| m.mean_commute_min.is_some()).collect();
    let gini = gini(
        &with_mean.iter().map(|m| m.mean_commute_min.unwrap()).collect::<Vec<_>>(),
        &with_mean.iter().map(|m| m.commuter_weight).collect::<Vec<_>>(),
    )
    .ok();

    Ok(AccessReport {
        metrics,
        threshold_min: threshold,
        citywide_mean: stats.citywide_mean,
        palma,
        gini,
        total_opportunities: total_opp,
        unreachable_weight: stats.unreachable_weight,
        smi_degenerate: qs.degenerate,
        commute_degenerate: qc.degenerate,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_hex_metrics<W: Write>(metrics: &[HexMetrics], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(HEX_METRICS_HEADER)?;
    for m in metrics {
        wtr.write_record([
            m.hex_id.to_string(),
            opt(m.mean_commute_min),
            m.commuter_weight.to_string(),
            opt(m.coa),
            opt(m.coa_share),
            opt(m.smi),
            opt(m.q_smi),
            opt(m.q_commute),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_hex_metrics(path: &Path) -> Result<Vec<HexMetrics>, AccessError> {
    let err = |message: String| AccessError::Input {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let f = |i: usize| -> Result<Option<f64>, AccessError> {
            let s = rec.get(i).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| err(format!("bad number `{s}`")))
        };
        let q = |i: usize| -> Result<Option<u8>, AccessError> { Ok(f(i)?.map(|v| v as u8)) };
        out.push(HexMetrics {
            hex_id: rec[0].parse().map_err(|_| err(format!("bad hex_id `{}`", &rec[0])))?,
            mean_commute_min: f(1)?,
            commuter_weight: f(2)?.unwrap_or(0.0),
            coa: f(3)?,
            coa_share: f(4)?,
            smi: f(5)?,
            q_smi: q(6)?,
            q_commute: q(7)?,
        });
    }
    Ok(out)
}

/// `hex_id,coa_share,mean_commute_min,smi` for hexes where all three exist.
pub fn write_scatter<W: Write>(metrics: &[HexMetrics], w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["hex_id", "coa_share", "mean_commute_min", "smi"])?;
    for m in metrics {
        if let (Some(c), Some(t), Some(s)) = (m.coa_share, m.mean_commute_min, m.smi) {
            wtr.write_record([m.hex_id.to_string(), c.to_string(), t.to_string(), s.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
