//! Double-loop references for contiguity and bivariate Moran statistics.

use commute_core::geo::HexCoord;

/// Neighbours found by comparing every pair of centre distances with the
/// lattice spacing √3·edge.
pub fn distance_neighbors(hexes: &[HexCoord], edge: f64) -> Vec<Vec<usize>> {
    let centers: Vec<_> = hexes.iter().map(|h| h.center(edge)).collect();
    let spacing = 3f64.sqrt() * edge;
    (0..hexes.len())
        .map(|i| {
            (0..hexes.len())
                .filter(|&j| j != i && (centers[i].dist(&centers[j]) - spacing).abs() <= 1e-6)
                .collect()
        })
        .collect()
}

fn zscores(v: &[f64], keep: &[bool]) -> Vec<f64> {
    let mut n = 0.0;
    let mut sum = 0.0;
    for i in 0..v.len() {
        if keep[i] {
            n += 1.0;
            sum += v[i];
        }
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for i in 0..v.len() {
        if keep[i] {
            ss += (v[i] - mean) * (v[i] - mean);
        }
    }
    let sd = (ss / n).sqrt();
    v.iter().map(|x| (x - mean) / sd).collect()
}

/// I_i = z_x,i · Σ_j w_ij z_y,j with row-standardized weights; islands get 0.
pub fn naive_local_i(x: &[f64], y: &[f64], nbrs: &[Vec<usize>]) -> Vec<f64> {
    let keep: Vec<bool> = nbrs.iter().map(|n| !n.is_empty()).collect();
    let zx = zscores(x, &keep);
    let zy = zscores(y, &keep);
    (0..x.len())
        .map(|i| {
            if !keep[i] {
                return 0.0;
            }
            let mut lag = 0.0;
            for &j in &nbrs[i] {
                lag += zy[j] / nbrs[i].len() as f64;
            }
            zx[i] * lag
        })
        .collect()
}

/// Global bivariate Moran from a dense row-standardized weight matrix over
/// the non-island units.
pub fn dense_global_moran(x: &[f64], y: &[f64], nbrs: &[Vec<usize>]) -> f64 {
    let keep: Vec<bool> = nbrs.iter().map(|n| !n.is_empty()).collect();
    let zx = zscores(x, &keep);
    let zy = zscores(y, &keep);
    let n = x.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for &j in &nbrs[i] {
            w[i][j] = 1.0 / nbrs[i].len() as f64;
        }
    }
    let (mut num, mut s0, mut den, mut m) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        if !keep[i] {
            continue;
        }
        m += 1.0;
        den += zx[i] * zx[i];
        for j in 0..n {
            num += w[i][j] * zx[i] * zy[j];
            s0 += w[i][j];
        }
    }
    m / s0 * num / den
}
