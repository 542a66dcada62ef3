//! Slow reference computations with no code shared with the estimators.

use nalgebra::DMatrix;

use crate::design::DesignMatrix;
use crate::error::{GravityError, Result};

fn row(design: &DesignMatrix, i: usize) -> Vec<f64> {
    (0..design.ncols()).map(|j| design.x[(i, j)]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Poisson log-likelihood up to the `ln y!` term.
fn poisson_loglik(design: &DesignMatrix, rows: &[Vec<f64>], beta: &[f64]) -> f64 {
    rows.iter()
        .enumerate()
        .map(|(i, x)| {
            let eta = dot(x, beta);
            design.weight(i) * (design.y[i] * eta - eta.exp())
        })
        .sum()
}

/// Visits every point of the grid `centre[k] + step * m`, `m` in `-half..=half`.
fn best_on_grid(
    design: &DesignMatrix,
    rows: &[Vec<f64>],
    lo: &[f64],
    counts: &[usize],
    step: f64,
) -> (Vec<f64>, Vec<usize>) {
    let p = lo.len();
    let mut idx = vec![0usize; p];
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = idx.clone();
    loop {
        let beta: Vec<f64> = (0..p).map(|k| lo[k] + step * idx[k] as f64).collect();
        let ll = poisson_loglik(design, rows, &beta);
        if ll > best {
            best = ll;
            best_idx = idx.clone();
        }
        let mut k = 0;
        loop {
            if k == p {
                let beta = (0..p).map(|k| lo[k] + step * best_idx[k] as f64).collect();
                return (beta, best_idx);
            }
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Maximises the Poisson likelihood of `design` by exhaustive grid search:
/// a coarse pass over `bounds`, then `refine_rounds` passes (at least enough
/// to reach a step of 1e-4), each a tenfold finer grid spanning two coarse
/// steps either side of the current best point.
///
/// Fails with `BoundaryMaximum(k)` when the coarse optimum sits on an edge of
/// `bounds` in coordinate `k`.
pub fn oracle_mle_grid(
    design: &DesignMatrix,
    bounds: &[(f64, f64)],
    coarse_step: f64,
    refine_rounds: usize,
) -> Result<Vec<f64>> {
    let p = design.ncols();
    if p == 0 || p > 3 || bounds.len() != p {
        return Err(GravityError::InvalidSpec(
            "grid oracle takes one bound pair per coefficient and at most three coefficients".into(),
        ));
    }
    if !(coarse_step > 0.0) || bounds.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(GravityError::InvalidSpec("grid oracle needs a positive step and ordered bounds".into()));
    }
    let rows: Vec<Vec<f64>> = (0..design.nrows()).map(|i| row(design, i)).collect();

    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let counts: Vec<usize> = bounds
        .iter()
        .map(|(l, h)| ((h - l) / coarse_step).floor() as usize + 1)
        .collect();
    let (mut beta, idx) = best_on_grid(design, &rows, &lo, &counts, coarse_step);
    if let Some(k) = (0..p).find(|&k| idx[k] == 0 || idx[k] + 1 == counts[k]) {
        return Err(GravityError::BoundaryMaximum(k));
    }

    let mut step = coarse_step;
    let mut round = 0;
    while round < refine_rounds || step > 1e-4 {
        let fine = step / 10.0;
        let lo: Vec<f64> = beta.iter().map(|b| b - 2.0 * step).collect();
        let counts = vec![41; p];
        beta = best_on_grid(design, &rows, &lo, &counts, fine).0;
        step = fine;
        round += 1;
    }
    Ok(beta)
}

/// Inverts a square matrix by Gauss-Jordan elimination with partial pivoting.
fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Cluster-robust Poisson sandwich evaluated term by term:
/// `G/(G-1) A^{-1} (sum_g s_g s_g') A^{-1}` with `A = sum_i w_i mu_i x_i x_i'`
/// and `s_g = sum_{i in g} w_i x_i (y_i - mu_i)`.
pub fn oracle_sandwich(design: &DesignMatrix, coefficients: &[f64], clusters: &[String]) -> Result<DMatrix<f64>> {
    let n = design.nrows();
    let p = design.ncols();
    if coefficients.len() != p || clusters.len() != n {
        return Err(GravityError::Internal("oracle inputs disagree in size".into()));
    }
    let mut a = vec![vec![0.0; p]; p];
    let mut labels: Vec<&String> = Vec::new();
    let mut scores: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let x = row(design, i);
        let w = design.weight(i);
        let mu = dot(&x, coefficients).exp();
        for r in 0..p {
            for c in 0..p {
                a[r][c] += w * mu * x[r] * x[c];
            }
        }
        let g = match labels.iter().position(|l| *l == &clusters[i]) {
            Some(g) => g,
            None => {
                labels.push(&clusters[i]);
                scores.push(vec![0.0; p]);
                labels.len() - 1
            }
        };
        for r in 0..p {
            scores[g][r] += w * x[r] * (design.y[i] - mu);
        }
    }
    let g = labels.len();
    if g < 2 {
        return Err(GravityError::InsufficientData("need at least two clusters".into()));
    }
    let inv = gauss_jordan_inverse(&a).ok_or(GravityError::SingularBread)?;
    let mut meat = vec![vec![0.0; p]; p];
    for s in &scores {
        for r in 0..p {
            for c in 0..p {
                meat[r][c] += s[r] * s[c];
            }
        }
    }
    let factor = g as f64 / (g as f64 - 1.0);
    let mut out = DMatrix::<f64>::zeros(p, p);
    for r in 0..p {
        for c in 0..p {
            let mut v = 0.0;
            for k in 0..p {
                for l in 0..p {
                    v += inv[r][k] * meat[k][l] * inv[l][c];
                }
            }
            out[(r, c)] = factor * v;
        }
    }
    Ok(out)
}
