//! Direct-summation oracles for accessibility and inequality measures.

/// Opportunity mass within `threshold` of each origin, by a double loop over
/// a dense row-major matrix.
pub fn coa_double_loop(minutes: &[Vec<f64>], mass: &[f64], threshold: f64) -> Vec<f64> {
    let mut out = vec![0.0; minutes.len()];
    for (o, row) in minutes.iter().enumerate() {
        for (d, t) in row.iter().enumerate() {
            if t.is_finite() && *t <= threshold {
                out[o] += mass[d];
            }
        }
    }
    out
}

/// Palma ratio by expanding integer weights into individual persons. Items
/// are (smi, persons, minutes) with distinct smi; the total head count must
/// be a multiple of 10 so that both slices contain whole persons.
pub fn palma_pseudo_persons(items: &[(f64, u32, f64)]) -> f64 {
    let mut people: Vec<(f64, f64)> = Vec::new();
    for &(smi, n, t) in items {
        for _ in 0..n {
            people.push((smi, t));
        }
    }
    let n = people.len();
    assert!(n % 10 == 0, "head count {n} is not a multiple of 10");
    people.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top = n / 10;
    let bottom = 4 * n / 10;
    let mean = |s: &[(f64, f64)]| s.iter().map(|p| p.1).sum::<f64>() / s.len() as f64;
    mean(&people[..top]) / mean(&people[n - bottom..])
}

/// Weighted Gini from all ordered pairs.
pub fn gini_pairwise(values: &[f64], weights: &[f64]) -> f64 {
    let w: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / w;
    let mut s = 0.0;
    for i in 0..values.len() {
        for j in 0..values.len() {
            s += weights[i] * weights[j] * (values[i] - values[j]).abs();
        }
    }
    s / (2.0 * w * w * mean)
}

/// Members per quartile class.
pub fn class_counts(classes: &[u8]) -> [usize; 4] {
    let mut c = [0; 4];
    for &q in classes {
        c[q as usize - 1] += 1;
    }
    c
}
