//! Cluster composition statistics: Kruskal–Wallis, Dunn's post hoc test
//! with Holm–Šidák adjustment, and multinomial logistic regression.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::geo::HexCoord;
use crate::spatial::{LisaClass, LisaResult};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("need at least 3 observations, got {0}")]
    TooFewObservations(usize),
    #[error("non-finite observation")]
    NonFinite,
    #[error("multinomial fit did not converge after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
    #[error("Newton system is singular")]
    Singular,
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
}

/// Average ranks (1-based) of the pooled values, ties sharing their midrank,
/// plus Σ(t³ − t) over tie blocks.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

struct Ranked {
    n_total: f64,
    sizes: Vec<f64>,
    mean_ranks: Vec<f64>,
    ties: f64,
}

fn rank_groups(groups: &[Vec<f64>]) -> Result<Ranked, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if let Some(g) = groups.iter().position(|g| g.is_empty()) {
        return Err(StatsError::EmptyGroup(g));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    if pooled.len() < 3 {
        return Err(StatsError::TooFewObservations(pooled.len()));
    }
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (ranks, ties) = midranks(&pooled);
    let mut mean_ranks = Vec::with_capacity(groups.len());
    let mut at = 0;
    for g in groups {
        mean_ranks.push(ranks[at..at + g.len()].iter().sum::<f64>() / g.len() as f64);
        at += g.len();
    }
    Ok(Ranked {
        n_total: pooled.len() as f64,
        sizes: groups.iter().map(|g| g.len() as f64).collect(),
        mean_ranks,
        ties,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KwResult {
    pub h: f64,
    pub p: f64,
    pub df: usize,
}

/// Tie-corrected Kruskal–Wallis H with a chi-squared p-value.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KwResult, StatsError> {
    let r = rank_groups(groups)?;
    let n = r.n_total;
    let df = groups.len() - 1;
    let correction = 1.0 - r.ties / (n * n * n - n);
    if correction <= 0.0 {
        return Ok(KwResult { h: 0.0, p: 1.0, df });
    }
    let mid = (n + 1.0) / 2.0;
    let ss: f64 = r
        .sizes
        .iter()
        .zip(&r.mean_ranks)
        .map(|(ni, ri)| ni * (ri - mid).powi(2))
        .sum();
    let h = (12.0 / (n * (n + 1.0)) * ss / correction).max(0.0);
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    Ok(KwResult { h, p: chi.sf(h), df })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DunnPair {
    pub a: usize,
    pub b: usize,
    pub z: f64,
    pub p_raw: f64,
    pub p_adj: f64,
}

/// Holm–Šidák step-down adjustment, returned in input order.
pub fn holm_sidak(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (i, &k) in order.iter().enumerate() {
        let e = (m - i) as f64;
        let adj = if e == 1.0 { p[k] } else { -(e * (-p[k]).ln_1p()).exp_m1() };
        running = running.max(adj);
        out[k] = running.min(1.0);
    }
    out
}

/// Dunn's pairwise z tests over all group pairs (a < b), two-sided normal
/// p-values, Holm–Šidák adjusted.
pub fn dunn_posthoc(groups: &[Vec<f64>]) -> Result<Vec<DunnPair>, StatsError> {
    let r = rank_groups(groups)?;
    let n = r.n_total;
    let spread = n * (n + 1.0) / 12.0 - r.ties / (12.0 * (n - 1.0));
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut pairs = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let se = (spread * (1.0 / r.sizes[a] + 1.0 / r.sizes[b])).sqrt();
            let diff = r.mean_ranks[a] - r.mean_ranks[b];
            let z = if se > 0.0 { diff / se } else { 0.0 };
            let p_raw = (2.0 * normal.sf(z.abs())).min(1.0);
            pairs.push(DunnPair {
                a,
                b,
                z,
                p_raw,
                p_adj: 0.0,
            });
        }
    }
    let adj = holm_sidak(&pairs.iter().map(|p| p.p_raw).collect::<Vec<_>>());
    for (p, a) in pairs.iter_mut().zip(adj) {
        p.p_adj = a;
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MnlConfig {
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MnlConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnlFit {
    pub n_classes: usize,
    pub reference: usize,
    /// Per class: intercept followed by one coefficient per feature. The
    /// reference row is all zeros.
    pub coefficients: Vec<Vec<f64>>,
    /// Per class: exp(coefficient) for each feature.
    pub odds_ratios: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub mcfadden_r2: f64,
    pub accuracy: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

struct Design<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    k: usize,
    p: usize,
    reference: usize,
    /// Non-reference classes in order; parameter block `b` belongs to free[b].
    free: Vec<usize>,
}

impl Design<'_> {
    fn dim(&self) -> usize {
        self.free.len() * (self.p + 1)
    }

    fn probs(&self, beta: &[f64], row: &[f64], out: &mut [f64]) {
        let q = self.p + 1;
        out[self.reference] = 0.0;
        for (b, &c) in self.free.iter().enumerate() {
            let w = &beta[b * q..(b + 1) * q];
            out[c] = w[0] + row.iter().zip(&w[1..]).map(|(x, w)| x * w).sum::<f64>();
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in out.iter_mut() {
            *v /= z;
        }
    }

    fn log_lik(&self, beta: &[f64]) -> f64 {
        let mut pr = vec![0.0; self.k];
        self.x
            .iter()
            .zip(self.y)
            .map(|(row, &c)| {
                self.probs(beta, row, &mut pr);
                pr[c].ln()
            })
            .sum()
    }

    fn penalty(&self, beta: &[f64], l2: f64) -> f64 {
        let q = self.p + 1;
        0.5 * l2 * beta.iter().enumerate().filter(|(i, _)| i % q != 0).map(|(_, b)| b * b).sum::<f64>()
    }

    /// Gradient and negative Hessian of the penalized log-likelihood.
    fn derivatives(&self, beta: &[f64], l2: f64) -> (DVector<f64>, DMatrix<f64>) {
        let q = self.p + 1;
        let d = self.dim();
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        let mut pr = vec![0.0; self.k];
        let mut xt = vec![1.0; q];
        for (row, &c) in self.x.iter().zip(self.y) {
            self.probs(beta, row, &mut pr);
            xt[1..].copy_from_slice(row);
            for (a, &ca) in self.free.iter().enumerate() {
                let resid = (c == ca) as u8 as f64 - pr[ca];
                for j in 0..q {
                    g[a * q + j] += resid * xt[j];
                }
                for (b, &cb) in self.free.iter().enumerate().skip(a) {
                    let s = pr[ca] * ((a == b) as u8 as f64 - pr[cb]);
                    for j in 0..q {
                        let sx = s * xt[j];
                        for l in 0..q {
                            h[(a * q + j, b * q + l)] += sx * xt[l];
                        }
                    }
                }
            }
        }
        for a in 0..self.free.len() {
            for b in 0..a {
                for j in 0..q {
                    for l in 0..q {
                        h[(a * q + j, b * q + l)] = h[(b * q + l, a * q + j)];
                    }
                }
            }
        }
        for i in 0..d {
            if i % q != 0 {
                g[i] -= l2 * beta[i];
                h[(i, i)] += l2;
            }
        }
        (g, h)
    }
}

/// Softmax regression with intercepts, the reference class pinned at zero
/// and an L2 penalty on the slopes, fitted by damped Newton steps.
/// `x` holds one feature row per observation; `y` holds class indices.
pub fn fit_multinomial(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    reference: usize,
    cfg: &MnlConfig,
) -> Result<MnlFit, StatsError> {
    if x.len() != y.len() || x.is_empty() {
        return Err(StatsError::Invalid("feature and label counts differ or are zero".into()));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p || r.iter().any(|v| !v.is_finite())) {
        return Err(StatsError::Invalid("ragged or non-finite feature rows".into()));
    }
    if reference >= n_classes || y.iter().any(|&c| c >= n_classes) {
        return Err(StatsError::Invalid("class index out of range".into()));
    }
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    if counts.iter().filter(|&&n| n > 0).count() < 2 {
        return Err(StatsError::Invalid("need at least two classes present".into()));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(StatsError::Invalid(format!("class {c} has no observations")));
    }
    let n = y.len() as f64;
    let null_ll: f64 = counts.iter().map(|&c| c as f64 * (c as f64 / n).ln()).sum();
    let design = Design {
        x,
        y,
        k: n_classes,
        p,
        reference,
        free: (0..n_classes).filter(|&c| c != reference).collect(),
    };
    let q = p + 1;

    // intercept-only start, which is also the exact answer when p == 0
    let mut beta = vec![0.0; design.dim()];
    for (b, &c) in design.free.iter().enumerate() {
        beta[b * q] = (counts[c] as f64 / counts[reference] as f64).ln();
    }

    let mut iterations = 0;
    let mut gradient_norm = 0.0;
    let log_likelihood = if p == 0 {
        null_ll
    } else {
        let objective = |b: &[f64]| design.log_lik(b) - design.penalty(b, cfg.l2);
        let mut current = objective(&beta);
        loop {
            let (g, h) = design.derivatives(&beta, cfg.l2);
            gradient_norm = g.amax();
            if gradient_norm <= cfg.tol {
                break;
            }
            if iterations >= cfg.max_iter {
                return Err(StatsError::NotConverged {
                    iterations,
                    gradient_norm,
                });
            }
            iterations += 1;
            let step = match h.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => h.lu().solve(&g).ok_or(StatsError::Singular)?,
            };
            // Near the optimum the objective moves by less than its rounding
            // noise, so a step counts as an ascent within that slack.
            let slack = 1e-12 * current.abs().max(1.0);
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
                let value = objective(&trial);
                if value >= current - slack || t < 1e-10 {
                    beta = trial;
                    current = value;
                    break;
                }
                t *= 0.5;
            }
        }
        design.log_lik(&beta)
    };

    let mut coefficients = vec![vec![0.0; q]; n_classes];
    for (b, &c) in design.free.iter().enumerate() {
        coefficients[c].copy_from_slice(&beta[b * q..(b + 1) * q]);
    }
    let odds_ratios = coefficients.iter().map(|c| c[1..].iter().map(|v| v.exp()).collect()).collect();

    let mut pr = vec![0.0; n_classes];
    let correct = x
        .iter()
        .zip(y)
        .filter(|(row, &c)| {
            design.probs(&beta, row, &mut pr);
            let mut best = 0;
            for k in 1..n_classes {
                if pr[k] > pr[best] {
                    best = k;
                }
            }
            best == c
        })
        .count();

    Ok(MnlFit {
        n_classes,
        reference,
        coefficients,
        odds_ratios,
        log_likelihood,
        null_log_likelihood: null_ll,
        mcfadden_r2: 1.0 - log_likelihood / null_ll,
        accuracy: correct as f64 / n,
        iterations,
        gradient_norm,
    })
}

/// Column-wise population z-scores; constant columns become zeros.
pub fn standardize_columns(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let p = x[0].len();
    let mut out = x.to_vec();
    for j in 0..p {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
        for r in out.iter_mut() {
            r[j] = if sd > 0.0 { (r[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

pub const VARIABLES: [&str; 5] = ["gender_ratio", "immigrant", "retired", "minor", "indigenous"];

/// Percent shares per hex, in the order of [`VARIABLES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demographics(pub [f64; 5]);

/// Reads `hex_id,gender_ratio,immigrant,retired,minor,indigenous`.
pub fn read_demographics(path: &Path) -> Result<BTreeMap<HexCoord, Demographics>, StatsError> {
    let err = |message: String| StatsError::Input {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<&str> = std::iter::once("hex_id").chain(VARIABLES).collect();
    if headers != expected {
        return Err(err(format!("expected header `{}`", expected.join(","))));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let hex: HexCoord = rec[0].parse().map_err(|_| err(format!("line {line}: bad hex_id")))?;
        let mut v = [0.0; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            let s = &rec[k + 1];
            *slot = s
                .trim()
                .parse()
                .ok()
                .filter(|x: &f64| (0.0..=100.0).contains(x))
                .ok_or_else(|| err(format!("line {line}: {} must be a percentage, got `{s}`", VARIABLES[k])))?;
        }
        if out.insert(hex, Demographics(v)).is_some() {
            return Err(err(format!("line {line}: duplicate hex {hex}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation percentile of sorted data, `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(FiveNumber {
        n: s.len(),
        min: s[0],
        q1: percentile(&s, 0.25),
        median: percentile(&s, 0.5),
        q3: percentile(&s, 0.75),
        max: s[s.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KwRow {
    pub variable: String,
    pub h: f64,
    pub p: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DunnRow {
    pub a: String,
    pub b: String,
    pub z: f64,
    pub p_raw: f64,
    pub p_adj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MnlReport {
    pub reference: String,
    pub classes: Vec<String>,
    pub features: Vec<String>,
    /// class -> ("intercept" | variable) -> coefficient
    pub coefficients: BTreeMap<String, BTreeMap<String, f64>>,
    /// class -> variable -> odds ratio per one-SD increase
    pub odds_ratios: BTreeMap<String, BTreeMap<String, f64>>,
    pub mcfadden_r2: f64,
    pub accuracy: f64,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionReport {
    pub class_counts: BTreeMap<String, usize>,
    pub tested_classes: Vec<String>,
    pub warnings: Vec<String>,
    /// variable -> class -> five-number summary
    pub summaries: BTreeMap<String, BTreeMap<String, FiveNumber>>,
    pub kruskal_wallis: Vec<KwRow>,
    /// variable -> pairwise comparisons
    pub dunn: BTreeMap<String, Vec<DunnRow>>,
    pub multinomial: Option<MnlReport>,
}

/// Box-plot summaries, rank tests and the multinomial fit of demographic
/// shares across LISA classes. Classes with fewer than two hexes are left
/// out of the tests.
pub fn cluster_composition_report(
    lisa: &[LisaResult],
    demographics: &BTreeMap<HexCoord, Demographics>,
    cfg: &MnlConfig,
) -> Result<CompositionReport, StatsError> {
    let mut by_class: BTreeMap<LisaClass, Vec<Demographics>> = BTreeMap::new();
    let mut missing = 0usize;
    for r in lisa {
        match demographics.get(&r.hex_id) {
            Some(d) => by_class.entry(r.class).or_default().push(*d),
            None => missing += 1,
        }
    }
    if missing > 0 {
        return Err(StatsError::Invalid(format!("{missing} LISA hexes have no demographics row")));
    }
    let mut warnings = Vec::new();
    let class_counts = by_class.iter().map(|(c, v)| (c.to_string(), v.len())).collect();
    let mut summaries: BTreeMap<String, BTreeMap<String, FiveNumber>> = BTreeMap::new();
    for (k, var) in VARIABLES.iter().enumerate() {
        let entry = summaries.entry(var.to_string()).or_default();
        for (c, rows) in &by_class {
            let vals: Vec<f64> = rows.iter().map(|d| d.0[k]).collect();
            if let Some(s) = five_number(&vals) {
                entry.insert(c.to_string(), s);
            }
        }
    }

    let tested: Vec<LisaClass> = by_class
        .iter()
        .filter_map(|(c, rows)| {
            if rows.len() < 2 {
                let msg = format!("class {c} has {} hex(es); excluded from tests", rows.len());
                log::warn!("{msg}");
                warnings.push(msg);
                None
            } else {
                Some(*c)
            }
        })
        .collect();

    let mut kw_rows = Vec::new();
    let mut dunn = BTreeMap::new();
    if tested.len() >= 2 {
        for (k, var) in VARIABLES.iter().enumerate() {
            let groups: Vec<Vec<f64>> = tested
                .iter()
                .map(|c| by_class[c].iter().map(|d| d.0[k]).collect())
                .collect();
            let kw = kruskal_wallis(&groups)?;
            kw_rows.push(KwRow {
                variable: var.to_string(),
                h: kw.h,
                p: kw.p,
                df: kw.df,
            });
            let pairs = dunn_posthoc(&groups)?
                .into_iter()
                .map(|p| DunnRow {
                    a: tested[p.a].to_string(),
                    b: tested[p.b].to_string(),
                    z: p.z,
                    p_raw: p.p_raw,
                    p_adj: p.p_adj,
                })
                .collect();
            dunn.insert(var.to_string(), pairs);
        }
    } else {
        let msg = "fewer than two classes with at least two hexes; rank tests skipped".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let multinomial = if tested.len() >= 2 && tested.contains(&LisaClass::NS) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (ci, c) in tested.iter().enumerate() {
            for d in &by_class[c] {
                x.push(d.0.to_vec());
                y.push(ci);
            }
        }
        let x = standardize_columns(&x);
        let reference = tested.iter().position(|c| *c == LisaClass::NS).expect("checked");
        let fit = fit_multinomial(&x, &y, tested.len(), reference, cfg)?;
        let mut coefficients = BTreeMap::new();
        let mut odds = BTreeMap::new();
        for (ci, c) in tested.iter().enumerate() {
            let mut row = BTreeMap::new();
            row.insert("intercept".to_string(), fit.coefficients[ci][0]);
            let mut orow = BTreeMap::new();
            for (k, var) in VARIABLES.iter().enumerate() {
                row.insert(var.to_string(), fit.coefficients[ci][k + 1]);
                orow.insert(var.to_string(), fit.odds_ratios[ci][k]);
            }
            coefficients.insert(c.to_string(), row);
            odds.insert(c.to_string(), orow);
        }
        Some(MnlReport {
            reference: LisaClass::NS.to_string(),
            classes: tested.iter().map(|c| c.to_string()).collect(),
            features: VARIABLES.iter().map(|v| v.to_string()).collect(),
            coefficients,
            odds_ratios: odds,
            mcfadden_r2: fit.mcfadden_r2,
            accuracy: fit.accuracy,
            log_likelihood: fit.log_likelihood,
            null_log_likelihood: fit.null_log_likelihood,
            iterations: fit.iterations,
        })
    } else {
        let msg = "multinomial fit needs NS and another class with at least two hexes; skipped".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
        None
    };

    Ok(CompositionReport {
        class_counts,
        tested_classes: tested.iter().map(|c| c.to_string()).collect(),
        warnings,
        summaries,
        kruskal_wallis: kw_rows,
        dunn,
        multinomial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kw_hand_value() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
        let r = kruskal_wallis(&g).unwrap();
        assert!((r.h - 7.2).abs() < 1e-9);
        assert_eq!(r.df, 2);
        // chi-squared(2) survival is exp(-h/2)
        assert!((r.p - (-3.6f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kw_identical_groups() {
        let g = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]];
        let r = kruskal_wallis(&g).unwrap();
        assert!(r.h.abs() < 1e-12);
        assert!((r.p - 1.0).abs() < 1e-12);
        let same = vec![vec![4.0, 4.0], vec![4.0]];
        assert_eq!(kruskal_wallis(&same).unwrap(), KwResult { h: 0.0, p: 1.0, df: 1 });
        assert_eq!(kruskal_wallis(&[vec![1.0], vec![]]), Err(StatsError::EmptyGroup(1)));
    }

    #[test]
    fn holm_sidak_closed_form() {
        let adj = holm_sidak(&[0.01, 0.04, 0.03]);
        let want = [1.0 - 0.99f64.powi(3), 1.0 - 0.97f64.powi(2), 1.0 - 0.97f64.powi(2)];
        for (a, w) in adj.iter().zip(want) {
            assert!((a - w).abs() < 1e-15);
        }
        assert_eq!(holm_sidak(&[0.2]), vec![0.2]);
    }

    #[test]
    fn dunn_single_pair_is_unadjusted() {
        let g = vec![vec![1.0, 2.0, 2.0], vec![3.0, 4.0, 2.0]];
        let d = dunn_posthoc(&g).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].p_raw, d[0].p_adj);
    }

    #[test]
    fn intercept_only_r2_is_zero() {
        let x: Vec<Vec<f64>> = vec![vec![]; 7];
        let y = vec![0, 1, 1, 2, 2, 2, 0];
        let fit = fit_multinomial(&x, &y, 3, 0, &MnlConfig::default()).unwrap();
        assert_eq!(fit.mcfadden_r2, 0.0);
        assert_eq!(fit.coefficients[0], vec![0.0]);
    }

    #[test]
    fn reference_row_odds_are_one() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let y: Vec<usize> = (0..40).map(|i| (i * 7 % 3) as usize).collect();
        let fit = fit_multinomial(&standardize_columns(&x), &y, 3, 1, &MnlConfig::default()).unwrap();
        assert_eq!(fit.odds_ratios[1], vec![1.0, 1.0]);
        assert!(fit.gradient_norm <= 1e-8);
    }

    #[test]
    fn five_number_interpolates() {
        let s = five_number(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 1.75, 2.5, 3.25, 4.0));
    }

    #[test]
    fn all_ns_report_skips_tests() {
        let lisa: Vec<LisaResult> = (0..4)
            .map(|i| LisaResult {
                hex_id: HexCoord::new(i, 0),
                local_i: 0.0,
                lag: 0.0,
                pseudo_p: 0.5,
                class: LisaClass::NS,
            })
            .collect();
        let demo = (0..4)
            .map(|i| (HexCoord::new(i, 0), Demographics([50.0, 1.0, 2.0, 3.0, i as f64])))
            .collect();
        let r = cluster_composition_report(&lisa, &demo, &MnlConfig::default()).unwrap();
        assert_eq!(r.class_counts.len(), 1);
        assert!(r.kruskal_wallis.is_empty());
        assert!(r.multinomial.is_none());
        assert_eq!(r.warnings.len(), 2);
        assert_eq!(r.summaries["indigenous"]["NS"].max, 3.0);
    }
}
