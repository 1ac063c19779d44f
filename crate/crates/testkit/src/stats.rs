//! Rank-statistic and logistic-regression references written from the
//! textbook formulas with plain loops.

/// Midrank of every pooled value by counting smaller and equal values.
fn pooled_midranks(groups: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&v| {
                    let less = all.iter().filter(|&&u| u < v).count() as f64;
                    let equal = all.iter().filter(|&&u| u == v).count() as f64;
                    less + (equal + 1.0) / 2.0
                })
                .collect()
        })
        .collect()
}

/// Σ (t³ − t) over tie blocks.
fn tie_sum(groups: &[Vec<f64>]) -> f64 {
    let mut all: Vec<f64> = groups.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let mut s = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j] == all[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        s += t * t * t - t;
        i = j;
    }
    s
}

/// H = [12/(N(N+1)) Σ R_j²/n_j − 3(N+1)] / (1 − Σ(t³−t)/(N³−N)).
pub fn kw_direct(groups: &[Vec<f64>]) -> f64 {
    let ranks = pooled_midranks(groups);
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let mut s = 0.0;
    for r in &ranks {
        let sum: f64 = r.iter().sum();
        s += sum * sum / r.len() as f64;
    }
    let h = 12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0);
    h / (1.0 - tie_sum(groups) / (n * n * n - n))
}

/// Dunn z for groups a < b, in the same pair order as the library.
pub fn dunn_z_direct(groups: &[Vec<f64>]) -> Vec<f64> {
    let ranks = pooled_midranks(groups);
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let var = n * (n + 1.0) / 12.0 - tie_sum(groups) / (12.0 * (n - 1.0));
    let mean: Vec<f64> = ranks.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let mut z = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let se = (var * (1.0 / groups[a].len() as f64 + 1.0 / groups[b].len() as f64)).sqrt();
            z.push((mean[a] - mean[b]) / se);
        }
    }
    z
}

/// Solves `a · x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Binary logistic regression maximizing Σ log-lik − ½·l2·‖slopes‖² by
/// Newton steps with step halving. Returns intercept followed by slopes.
pub fn binary_logit_newton(x: &[Vec<f64>], y: &[bool], l2: f64, tol: f64, max_iter: usize) -> Vec<f64> {
    let q = x[0].len() + 1;
    let design = |row: &[f64]| -> Vec<f64> { std::iter::once(1.0).chain(row.iter().copied()).collect() };
    let objective = |beta: &[f64]| -> f64 {
        let mut ll = 0.0;
        for (row, &yi) in x.iter().zip(y) {
            let eta: f64 = design(row).iter().zip(beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(eta);
            ll += if yi { p.ln() } else { (1.0 - p).ln() };
        }
        ll - 0.5 * l2 * beta[1..].iter().map(|b| b * b).sum::<f64>()
    };
    let mut beta = vec![0.0; q];
    for _ in 0..max_iter {
        let mut g = vec![0.0; q];
        let mut h = vec![vec![0.0; q]; q];
        for (row, &yi) in x.iter().zip(y) {
            let d = design(row);
            let eta: f64 = d.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(eta);
            for j in 0..q {
                g[j] += (yi as u8 as f64 - p) * d[j];
                for k in 0..q {
                    h[j][k] += p * (1.0 - p) * d[j] * d[k];
                }
            }
        }
        for j in 1..q {
            g[j] -= l2 * beta[j];
            h[j][j] += l2;
        }
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < tol {
            break;
        }
        let step = solve(h, g);
        let base = objective(&beta);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            if objective(&cand) >= base || t < 1e-10 {
                beta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    beta
}

/// Linear-interpolation percentile of unsorted values, p in [0, 1].
pub fn percentile_direct(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}
