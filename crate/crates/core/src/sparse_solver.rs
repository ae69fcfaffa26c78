//! ℓ1-regularized least squares by accelerated proximal gradient.
//!
//! Minimizes `½‖y − Dβ‖² + λ‖β‖₁` over β. Iterates are taken on the Gram
//! matrix `DᵀD`, which is built once per dictionary and shared by every solve
//! against it. Supports stay small, so products with `DᵀD` only touch the
//! columns of nonzero coefficients.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a column norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-6;
/// Default stationarity tolerance for the optimality certificate.
pub const DEFAULT_KKT_TOL: f64 = 1e-6;
/// Smallest λ visited by the ε-constrained continuation.
pub const LAMBDA_FLOOR: f64 = 1e-6;

const POWER_ITERS: usize = 20;
const POWER_TOL: f64 = 1e-6;
const POLISH_EVERY: usize = 10;
/// Iterations with an unchanged sign pattern before a polish is attempted.
const STABLE_ITERS: usize = 3;

fn default_lambda() -> f64 {
    0.1
}
fn default_max_iters() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-8
}
fn default_kkt_tol() -> f64 {
    DEFAULT_KKT_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Lagrangian weight. Drives the solve unless `epsilon` is set.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Residual bound for the constrained form; selects λ-continuation.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Threshold on the relative objective change between iterations.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            epsilon: None,
            max_iters: default_max_iters(),
            tol: default_tol(),
            kkt_tol: default_kkt_tol(),
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param(
                "lambda",
                format!("{} must be finite and nonnegative", self.lambda),
            ));
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::param(
                    "epsilon",
                    format!("{eps} must be finite and nonnegative"),
                ));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param("tol", "must be nonnegative"));
        }
        if !(self.kkt_tol >= 0.0) {
            return Err(Error::param("kkt_tol", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Solution of one sparse coding problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    pub beta: Vec<f64>,
    pub iterations: usize,
    /// `½‖y − Dβ‖² + λ‖β‖₁` at `beta`, with λ the value actually used.
    pub objective: f64,
    pub lambda: f64,
    pub converged: bool,
}

impl SparseCode {
    pub fn support(&self) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Componentwise `sign(v)·max(|v| − t, 0)`.
pub fn soft_threshold(v: &[f64], t: f64) -> Vec<f64> {
    v.iter().map(|&x| shrink(x, t)).collect()
}

#[inline]
fn shrink(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `½‖y − Dβ‖² + λ‖β‖₁`.
pub fn objective(dict: ArrayView2<f64>, y: &[f64], beta: &[f64], lambda: f64) -> Result<f64> {
    let (rows, cols) = dict.dim();
    if y.len() != rows || beta.len() != cols {
        return Err(Error::Shape(format!(
            "dictionary is {rows}x{cols}, y has {} entries, beta has {}",
            y.len(),
            beta.len()
        )));
    }
    let mut residual = y.to_vec();
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (r, d) in residual.iter_mut().zip(dict.column(j)) {
                *r -= d * b;
            }
        }
    }
    let fit = residual.iter().map(|r| r * r).sum::<f64>();
    let l1 = beta.iter().map(|b| b.abs()).sum::<f64>();
    Ok(0.5 * fit + lambda * l1)
}

/// Largest stationarity violation of `beta` for the ℓ1 problem.
///
/// `correlation` is `Dᵀ(y − Dβ)`.
pub fn kkt_violation(correlation: &[f64], beta: &[f64], lambda: f64) -> f64 {
    correlation
        .iter()
        .zip(beta)
        .map(|(&g, &b)| coordinate_violation(g, b, lambda))
        .fold(0.0, f64::max)
}

fn coordinate_violation(g: f64, b: f64, lambda: f64) -> f64 {
    if b == 0.0 {
        (g.abs() - lambda).max(0.0)
    } else {
        (g - lambda * b.signum()).abs()
    }
}

fn same_signs(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        (*x == 0.0) == (*y == 0.0) && (x.is_sign_negative() == y.is_sign_negative() || *x == 0.0)
    })
}

/// Checks that every column has unit ℓ2 norm.
pub fn check_unit_columns(dict: ArrayView2<f64>) -> Result<()> {
    for (j, col) in dict.columns().into_iter().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Contract(format!(
                "dictionary column {j} has norm {norm}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Reusable solver bound to one column-normalized dictionary.
#[derive(Debug, Clone)]
pub struct SparseCoder<'a> {
    dict: ArrayView2<'a, f64>,
    gram: Array2<f64>,
    lipschitz: f64,
}

impl<'a> SparseCoder<'a> {
    pub fn new(dict: ArrayView2<'a, f64>) -> Result<Self> {
        if dict.ncols() == 0 || dict.nrows() == 0 {
            return Err(Error::Shape("dictionary has no atoms".into()));
        }
        check_unit_columns(dict)?;
        Self::new_unchecked(dict)
    }

    /// Skips the unit-norm check; used while atoms are still being learned.
    pub(crate) fn new_unchecked(dict: ArrayView2<'a, f64>) -> Result<Self> {
        if dict.ncols() == 0 || dict.nrows() == 0 {
            return Err(Error::Shape("dictionary has no atoms".into()));
        }
        let gram = dict.t().dot(&dict).as_standard_layout().into_owned();
        let lipschitz = largest_eigenvalue(&gram).max(f64::MIN_POSITIVE);
        Ok(Self {
            dict,
            gram,
            lipschitz,
        })
    }

    pub fn dictionary(&self) -> ArrayView2<'a, f64> {
        self.dict
    }

    pub fn gram(&self) -> &Array2<f64> {
        &self.gram
    }

    /// Step-size constant estimated for `DᵀD`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn code(&self, y: &[f64], config: &SolverConfig) -> Result<SparseCode> {
        self.code_traced(y, config).map(|(code, _)| code)
    }

    /// As [`SparseCoder::code`], also returning the objective after every accepted iterate.
    pub fn code_traced(&self, y: &[f64], config: &SolverConfig) -> Result<(SparseCode, Vec<f64>)> {
        config.validate()?;
        if y.len() != self.dict.nrows() {
            return Err(Error::Shape(format!(
                "signal has {} entries, dictionary atoms have {}",
                y.len(),
                self.dict.nrows()
            )));
        }
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (ynorm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Contract(format!(
                "signal has norm {ynorm}, expected 1"
            )));
        }
        let problem = Problem {
            coder: self,
            dty: self.dict.t().dot(&ndarray::ArrayView1::from(y)).to_vec(),
            yy: ynorm * ynorm,
        };
        let mut trace = Vec::new();
        let code = match config.epsilon {
            None => problem.solve(
                config.lambda,
                vec![0.0; self.dict.ncols()],
                config,
                &mut trace,
            ),
            Some(eps) => problem.continuation(eps, config, &mut trace),
        };
        // Report the objective from the explicit residual rather than the Gram expansion.
        let objective = objective(self.dict, y, &code.beta, code.lambda)?;
        Ok((SparseCode { objective, ..code }, trace))
    }
}

/// Solves one ℓ1 problem; builds the Gram matrix on every call.
pub fn solve_l1(dict: ArrayView2<f64>, y: &[f64], config: &SolverConfig) -> Result<SparseCode> {
    SparseCoder::new(dict)?.code(y, config)
}

struct Problem<'c, 'a> {
    coder: &'c SparseCoder<'a>,
    dty: Vec<f64>,
    yy: f64,
}

impl Problem<'_, '_> {
    fn gram_times(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                let row = self.coder.gram.row(j);
                let row = row.as_slice().expect("gram is stored row-major");
                for (o, g) in out.iter_mut().zip(row) {
                    *o += g * xj;
                }
            }
        }
    }

    /// Objective via the Gram expansion, given `gx = Gx`.
    fn value(&self, x: &[f64], gx: &[f64], lambda: f64) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut l1 = 0.0;
        for ((&xi, &gi), &ci) in x.iter().zip(gx).zip(&self.dty) {
            if xi != 0.0 {
                quad += xi * gi;
                lin += xi * ci;
                l1 += xi.abs();
            }
        }
        (0.5 * (self.yy - 2.0 * lin + quad)).max(0.0) + lambda * l1
    }

    fn violation(&self, x: &[f64], gx: &[f64], lambda: f64) -> f64 {
        x.iter()
            .zip(gx)
            .zip(&self.dty)
            .map(|((&b, &g), &c)| coordinate_violation(c - g, b, lambda))
            .fold(0.0, f64::max)
    }

    fn prox_step(&self, from: &[f64], g_from: &[f64], step: f64, lambda: f64) -> Vec<f64> {
        from.iter()
            .zip(g_from)
            .zip(&self.dty)
            .map(|((&z, &gz), &c)| shrink(z - step * (gz - c), step * lambda))
            .collect()
    }

    /// Accelerated proximal gradient with restart on objective increase.
    fn solve(
        &self,
        lambda: f64,
        start: Vec<f64>,
        config: &SolverConfig,
        trace: &mut Vec<f64>,
    ) -> SparseCode {
        let p = self.dty.len();
        let mut lipschitz = self.coder.lipschitz;
        let mut x = start;
        let mut gx = vec![0.0; p];
        self.gram_times(&x, &mut gx);
        let mut fx = self.value(&x, &gx, lambda);
        trace.push(fx);

        if self.violation(&x, &gx, lambda) <= config.kkt_tol {
            return SparseCode {
                beta: x,
                iterations: 0,
                objective: fx,
                lambda,
                converged: true,
            };
        }

        let mut z = x.clone();
        let mut gz = gx.clone();
        let mut t: f64 = 1.0;
        let mut converged = false;
        let mut iterations = 0;
        let mut g_new = vec![0.0; p];
        let mut stable = 0usize;

        for it in 1..=config.max_iters {
            iterations = it;
            let mut x_new = self.prox_step(&z, &gz, 1.0 / lipschitz, lambda);
            self.gram_times(&x_new, &mut g_new);
            let mut f_new = self.value(&x_new, &g_new, lambda);

            if f_new > fx {
                // Momentum overshot: restart from x with a plain proximal step,
                // doubling the Lipschitz estimate if even that fails to descend.
                t = 1.0;
                loop {
                    x_new = self.prox_step(&x, &gx, 1.0 / lipschitz, lambda);
                    self.gram_times(&x_new, &mut g_new);
                    f_new = self.value(&x_new, &g_new, lambda);
                    if f_new <= fx || lipschitz > 1e12 * self.coder.lipschitz {
                        break;
                    }
                    lipschitz *= 2.0;
                }
                if f_new > fx {
                    x_new.clone_from(&x);
                    g_new.clone_from(&gx);
                    f_new = fx;
                }
            }

            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            for j in 0..p {
                z[j] = x_new[j] + momentum * (x_new[j] - x[j]);
            }
            self.gram_times(&z, &mut gz);
            t = t_next;

            let rel = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut gx, &mut g_new);
            fx = f_new;
            trace.push(fx);

            if same_signs(&x, &x_new) {
                stable += 1;
            } else {
                stable = 0;
            }
            if stable >= STABLE_ITERS && (stable - STABLE_ITERS) % POLISH_EVERY == 0 {
                if let Some((xp, gp, fp)) = self.polish(&x, lambda) {
                    if fp <= fx && self.violation(&xp, &gp, lambda) <= config.kkt_tol {
                        x = xp;
                        fx = fp;
                        trace.push(fx);
                        converged = true;
                        break;
                    }
                }
            }
            if rel < config.tol && self.violation(&x, &gx, lambda) <= config.kkt_tol {
                converged = true;
                break;
            }
        }

        SparseCode {
            beta: x,
            iterations,
            objective: fx,
            lambda,
            converged,
        }
    }

    /// Exact minimizer on the current support and sign pattern, if consistent.
    fn polish(&self, x: &[f64], lambda: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let support: Vec<usize> = (0..x.len()).filter(|&j| x[j] != 0.0).collect();
        if support.is_empty() {
            return None;
        }
        let k = support.len();
        let mut a = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                a[r * k + c] = self.coder.gram[[i, j]];
            }
            rhs[r] = self.dty[i] - lambda * x[i].signum();
        }
        let sol = cholesky_solve(&mut a, &mut rhs, k)?;
        let mut xp = vec![0.0; x.len()];
        for (&j, &v) in support.iter().zip(&sol) {
            if v == 0.0 || v.signum() != x[j].signum() {
                return None;
            }
            xp[j] = v;
        }
        let mut gp = vec![0.0; x.len()];
        self.gram_times(&xp, &mut gp);
        let fp = self.value(&xp, &gp, lambda);
        Some((xp, gp, fp))
    }

    /// Halves λ from `‖Dᵀy‖∞` with warm starts until `‖y − Dβ‖ ≤ ε`.
    fn continuation(
        &self,
        epsilon: f64,
        config: &SolverConfig,
        trace: &mut Vec<f64>,
    ) -> SparseCode {
        let p = self.dty.len();
        let lambda_max = self.dty.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut lambda = lambda_max;
        let mut beta = vec![0.0; p];
        let mut total_iters = 0;
        loop {
            let code = self.solve(lambda, beta, config, trace);
            total_iters += code.iterations;
            let mut g = vec![0.0; p];
            self.gram_times(&code.beta, &mut g);
            let fit = self.value(&code.beta, &g, 0.0);
            let residual = (2.0 * fit).sqrt();
            if residual <= epsilon || lambda * 0.5 < LAMBDA_FLOOR {
                return SparseCode {
                    iterations: total_iters,
                    ..code
                };
            }
            beta = code.beta;
            lambda *= 0.5;
        }
    }
}

/// Power iteration for the top eigenvalue of a symmetric PSD matrix.
fn largest_eigenvalue(gram: &Array2<f64>) -> f64 {
    let p = gram.nrows();
    // Slightly non-uniform start so it is not orthogonal to the top eigenvector in symmetric cases.
    let mut v: Vec<f64> = (0..p)
        .map(|j| 1.0 + 0.1 * (j as f64 + 1.0) / p as f64)
        .collect();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERS {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        let w = gram.dot(&ndarray::ArrayView1::from(&v[..])).to_vec();
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let done = (next - estimate).abs() <= POWER_TOL * next.abs();
        estimate = next;
        v = w;
        if done {
            break;
        }
    }
    estimate
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, k×k).
pub(crate) fn cholesky_solve(a: &mut [f64], b: &mut [f64], k: usize) -> Option<Vec<f64>> {
    for j in 0..k {
        let mut d = a[j * k + j];
        for s in 0..j {
            d -= a[j * k + s] * a[j * k + s];
        }
        if d <= 1e-14 {
            return None;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut v = a[i * k + j];
            for s in 0..j {
                v -= a[i * k + s] * a[j * k + s];
            }
            a[i * k + j] = v / d;
        }
    }
    for i in 0..k {
        let mut v = b[i];
        for s in 0..i {
            v -= a[i * k + s] * b[s];
        }
        b[i] = v / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut v = b[i];
        for s in i + 1..k {
            v -= a[s * k + i] * b[s];
        }
        b[i] = v / a[i * k + i];
    }
    Some(b.to_vec())
}
