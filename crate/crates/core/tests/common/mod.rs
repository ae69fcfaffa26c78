#![allow(dead_code)]

use ndarray::Array2;
use srclpm::rng::SplitMix64;

/// Gaussian matrix with unit-norm columns.
pub fn random_dict(rows: usize, cols: usize, rng: &mut SplitMix64) -> Array2<f64> {
    let mut d = Array2::from_shape_fn((rows, cols), |_| rng.normal());
    for mut col in d.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col /= norm;
    }
    d
}

pub fn random_unit(len: usize, rng: &mut SplitMix64) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
    normalize(v)
}

pub fn normalize(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// `Dᵀ(y − Dβ)` by explicit loops.
pub fn correlation(d: &Array2<f64>, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let (rows, cols) = d.dim();
    let mut residual = y.to_vec();
    for j in 0..cols {
        for i in 0..rows {
            residual[i] -= d[[i, j]] * beta[j];
        }
    }
    (0..cols)
        .map(|j| (0..rows).map(|i| d[[i, j]] * residual[i]).sum())
        .collect()
}

/// `½‖y − Dβ‖² + λ‖β‖₁` by explicit loops.
pub fn lasso_objective(d: &Array2<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let (rows, cols) = d.dim();
    let mut rss = 0.0;
    for i in 0..rows {
        let mut r = y[i];
        for j in 0..cols {
            r -= d[[i, j]] * beta[j];
        }
        rss += r * r;
    }
    0.5 * rss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Largest violation of the ℓ1 optimality conditions.
pub fn kkt_gap(d: &Array2<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    correlation(d, y, beta)
        .iter()
        .zip(beta)
        .map(|(&c, &b)| {
            if b == 0.0 {
                (c.abs() - lambda).max(0.0)
            } else {
                (c - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Solves the dense system `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Best objective over all supports of size ≤ `max_support` and all sign patterns.
///
/// Returns the objective and whether the minimizer is itself optimal for the
/// full problem.
pub fn small_support_oracle(
    d: &Array2<f64>,
    y: &[f64],
    lambda: f64,
    max_support: usize,
) -> (f64, bool) {
    let cols = d.ncols();
    let zero = vec![0.0; cols];
    let mut best = (lasso_objective(d, y, &zero, lambda), zero);
    let mut support = Vec::new();
    enumerate(cols, max_support, 0, &mut support, &mut |s| {
        for pattern in 0..(1u32 << s.len()) {
            let signs: Vec<f64> = (0..s.len())
                .map(|i| if pattern >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            let gram: Vec<Vec<f64>> = s
                .iter()
                .map(|&a| s.iter().map(|&b| d.column(a).dot(&d.column(b))).collect())
                .collect();
            let rhs: Vec<f64> = s
                .iter()
                .zip(&signs)
                .map(|(&a, sg)| {
                    d.column(a).iter().zip(y).map(|(u, v)| u * v).sum::<f64>() - lambda * sg
                })
                .collect();
            let Some(coef) = gauss_solve(gram, rhs) else {
                continue;
            };
            if coef.iter().zip(&signs).any(|(c, sg)| c * sg <= 0.0) {
                continue;
            }
            let mut beta = vec![0.0; cols];
            for (&j, &c) in s.iter().zip(&coef) {
                beta[j] = c;
            }
            let f = lasso_objective(d, y, &beta, lambda);
            if f < best.0 {
                best = (f, beta);
            }
        }
    });
    let certified = kkt_gap(d, y, &best.1, lambda) <= 1e-9;
    (best.0, certified)
}

fn enumerate(
    cols: usize,
    max: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    if !current.is_empty() {
        visit(current);
    }
    if current.len() == max {
        return;
    }
    for j in start..cols {
        current.push(j);
        enumerate(cols, max, j + 1, current, visit);
        current.pop();
    }
}
