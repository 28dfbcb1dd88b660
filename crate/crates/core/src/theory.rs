//! Closed-form limiting quantities.
//!
//! Every quantity here is built from the factors `w(j) / (λ + w(j))`:
//!
//! * `ρ̂(λ) = Σ_{k≥1} Π_{j<k} w(j)/(λ+w(j))`, strictly decreasing from `∞`
//!   to `0` on its domain;
//! * `λ*` is the unique root of `ρ̂(λ) = 1`;
//! * `c_k = Π_{j<k} w(j)/(λ*+w(j))` is the limiting fraction of nodes with
//!   at least `k` children;
//! * `B₁ = ρ̂(2λ*) < 1`.
//!
//! ## Truncation
//!
//! The factors tend to 1, so the series has no uniform geometric ratio. After
//! `K` terms the remainder is modelled by freezing the local increment
//! `s = w(K+1) - w(K)` and treating `w` as affine from `K` on. For affine `w`
//! the remainder sums in closed form (a Gauss hypergeometric series at 1):
//!
//! ```text
//! Σ_{m≥1} t_{K+m} = t_K · w(K) / (λ - s)      (λ > s)
//! ```
//!
//! which is exact for linear weights and asymptotically exact otherwise. The
//! estimate is cross-checked by doubling `K` until it moves by less than
//! `tol/2`. The partial sum alone is always a rigorous lower bound.

use serde::{Deserialize, Serialize};

use crate::scalar::CompensatedSum;
use crate::weights::{AlphaClass, WeightSpec};
use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesOptions<T> {
    pub tol: T,
    /// Maximum number of series terms.
    pub k_max: usize,
}

impl<T: Scalar> Default for SeriesOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            k_max: 10_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceEval<T> {
    pub value: T,
    pub truncation_k: usize,
    pub tail_estimate: T,
    /// Partial sum of the first `truncation_k` terms.
    pub certified_lower: T,
    /// False when `k_max` was reached before the tail estimate settled.
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TheorySolution<T> {
    pub lambda_star: T,
    pub tol: T,
    #[serde(rename = "truncation_K")]
    pub truncation_k: usize,
    pub b1: T,
    pub alpha_class: AlphaClass<T>,
    pub c: Vec<T>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaStar<T> {
    pub lambda_star: T,
    pub eval: LaplaceEval<T>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions<T> {
    pub series: SeriesOptions<T>,
    /// Largest `k` for which `c_k` is reported.
    pub c_kmax: usize,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            series: SeriesOptions::default(),
            c_kmax: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailLaw<T> {
    pub sum_inv_w: T,
    pub predicted_log_ck: T,
    pub ratio: T,
}

fn check_domain<T: Scalar>(spec: &WeightSpec<T>, lambda: T) -> Result<()> {
    let lower = spec.lambda_domain_lower();
    if lambda.is_finite() && lambda > lower {
        Ok(())
    } else {
        Err(Error::Domain {
            lambda: lambda.as_f64(),
            lower: lower.as_f64(),
        })
    }
}

/// Estimated `Σ_{k>n} t_k` from `t_n`, the `n`-th term of `ρ̂(λ)`.
///
/// Exact when `w` is affine from `n` on; `+∞` when the local increment of
/// `w` is at least `λ`.
pub fn series_remainder<T: Scalar>(spec: &WeightSpec<T>, lambda: T, n: usize, t_n: T) -> T {
    if t_n == T::zero() {
        return T::zero();
    }
    let w = spec.evaluate(n);
    let slope = spec.evaluate(n + 1) - w;
    if slope >= lambda {
        return T::infinity();
    }
    t_n * w / (lambda - slope)
}

/// Partial sum of the first `k` terms of `ρ̂(λ)`, without any tail.
pub fn rho_hat_truncated<T: Scalar>(spec: &WeightSpec<T>, lambda: T, k: usize) -> T {
    let mut sum = CompensatedSum::new();
    let mut term = T::one();
    for j in 0..k {
        let w = spec.evaluate(j);
        term = term * w / (lambda + w);
        sum.add(term);
    }
    sum.value()
}

/// Evaluates `ρ̂(λ)` to tolerance `opts.tol`.
pub fn rho_hat<T: Scalar>(
    spec: &WeightSpec<T>,
    lambda: T,
    opts: &SeriesOptions<T>,
) -> Result<LaplaceEval<T>> {
    check_domain(spec, lambda)?;
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidInput(format!("tol={} must be > 0", opts.tol)));
    }
    let half_tol = opts.tol / T::lit(2.0);
    let mut next_check = 16usize.max(2 * spec.tail_start().next_power_of_two());
    let mut previous: Option<T> = None;
    let mut sum = CompensatedSum::new();
    let mut term = T::one();
    let mut n = 0usize;
    while n < opts.k_max {
        let w = spec.evaluate(n);
        term = term * w / (lambda + w);
        sum.add(term);
        n += 1;
        if term == T::zero() {
            let partial = sum.value();
            return Ok(LaplaceEval {
                value: partial,
                truncation_k: n,
                tail_estimate: T::zero(),
                certified_lower: partial,
                converged: true,
            });
        }
        if n == next_check {
            next_check = next_check.saturating_mul(2);
            let tail = series_remainder(spec, lambda, n, term);
            if !tail.is_finite() {
                previous = None;
                continue;
            }
            let partial = sum.value();
            let value = partial + tail;
            let settled =
                tail < half_tol || previous.is_some_and(|p: T| (value - p).abs() < half_tol);
            if settled {
                return Ok(LaplaceEval {
                    value,
                    truncation_k: n,
                    tail_estimate: tail,
                    certified_lower: partial,
                    converged: true,
                });
            }
            previous = Some(value);
        }
    }
    let partial = sum.value();
    let tail = series_remainder(spec, lambda, n, term);
    Ok(LaplaceEval {
        value: partial + tail,
        truncation_k: n,
        tail_estimate: tail,
        certified_lower: partial,
        converged: false,
    })
}

/// True once the partial sums of `ρ̂(λ)` provably exceed 1.
fn certified_above_one<T: Scalar>(spec: &WeightSpec<T>, lambda: T, k_max: usize) -> bool {
    let mut sum = CompensatedSum::new();
    let mut term = T::one();
    for j in 0..k_max {
        let w = spec.evaluate(j);
        term = term * w / (lambda + w);
        if term == T::zero() {
            return false;
        }
        sum.add(term);
        if sum.value() > T::one() {
            return true;
        }
    }
    false
}

/// Solves `ρ̂(λ*) = 1` by bisection on the strictly decreasing map `λ ↦ ρ̂(λ)`.
pub fn solve_lambda_star<T: Scalar>(
    spec: &WeightSpec<T>,
    opts: &SeriesOptions<T>,
) -> Result<LambdaStar<T>> {
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidInput(format!("tol={} must be > 0", opts.tol)));
    }
    let mut lo = spec.lambda_domain_lower() + T::lit(2f64.powi(-20));
    if !certified_above_one(spec, lo, opts.k_max) {
        return Err(Error::NoSolution(format!(
            "partial sums of rho_hat({lo}) never exceed 1; the weight function is not admissible"
        )));
    }
    let inner = SeriesOptions {
        tol: opts.tol / T::lit(4.0),
        k_max: opts.k_max,
    };
    let mut hi = T::lit(2.0) * spec.evaluate(0);
    let mut doublings = 0;
    loop {
        if hi > lo {
            let e = rho_hat(spec, hi, &inner)?;
            if e.converged && e.value < T::one() {
                break;
            }
        }
        hi = hi * T::lit(2.0);
        doublings += 1;
        if doublings > 200 {
            return Err(Error::NoSolution(
                "no upper bracket with rho_hat < 1".into(),
            ));
        }
    }

    let mut iterations = 0;
    let mut best: Option<(T, LaplaceEval<T>)> = None;
    while iterations < 300 {
        iterations += 1;
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = rho_hat(spec, mid, &inner)?;
        let miss = (e.value - T::one()).abs();
        if best.is_none_or(|(_, b)| miss < (b.value - T::one()).abs()) {
            best = Some((mid, e));
        }
        if miss <= inner.tol {
            break;
        }
        if e.value > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (lambda_star, _) = best.ok_or_else(|| Error::NoSolution("empty bracket".into()))?;
    let eval = rho_hat(spec, lambda_star, opts)?;
    if (eval.value - T::one()).abs() > opts.tol {
        return Err(Error::NoSolution(format!(
            "bisection stalled at lambda={lambda_star} with rho_hat={}",
            eval.value
        )));
    }
    Ok(LambdaStar {
        lambda_star,
        eval,
        iterations,
    })
}

/// `c_0..=c_kmax` by running product; entries underflow to 0 for huge `k`.
pub fn survival_fractions<T: Scalar>(spec: &WeightSpec<T>, lambda_star: T, k_max: usize) -> Vec<T> {
    let mut c = Vec::with_capacity(k_max + 1);
    let mut running = T::one();
    c.push(running);
    for j in 0..k_max {
        let w = spec.evaluate(j);
        running = running * w / (lambda_star + w);
        c.push(running);
    }
    c
}

/// Fractions of nodes with exactly `k` children, `c_k - c_{k+1}`.
pub fn exact_degree_fractions<T: Scalar>(c: &[T]) -> Result<Vec<T>> {
    if c.first() != Some(&T::one()) {
        return Err(Error::InvalidInput("c must start with c_0 = 1".into()));
    }
    if let Some(k) = c.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput(format!(
            "c is not monotone: c_{} < c_{}",
            k,
            k + 1
        )));
    }
    Ok(c.windows(2).map(|w| w[0] - w[1]).collect())
}

/// `B₁ = ρ̂(2λ*)`, which must come out below 1.
pub fn b1<T: Scalar>(spec: &WeightSpec<T>, lambda_star: T, opts: &SeriesOptions<T>) -> Result<T> {
    let value = rho_hat(spec, T::lit(2.0) * lambda_star, opts)?.value;
    if value >= T::one() - opts.tol {
        return Err(Error::Inconsistent(format!(
            "B1 = rho_hat(2 lambda*) = {value} is not below 1; lambda*={lambda_star} is wrong"
        )));
    }
    Ok(value)
}

/// Full answer sheet: `λ*`, `c_0..=c_kmax` and `B₁`.
pub fn solve<T: Scalar>(spec: &WeightSpec<T>, opts: &SolveOptions<T>) -> Result<TheorySolution<T>> {
    let root = solve_lambda_star(spec, &opts.series)?;
    let b1 = b1(spec, root.lambda_star, &opts.series)?;
    let c = survival_fractions(spec, root.lambda_star, opts.c_kmax);
    let mut warnings = Vec::new();
    if !root.eval.converged {
        warnings.push(format!(
            "rho_hat truncated at K={} before the tail estimate settled",
            root.eval.truncation_k
        ));
    }
    if let Some(k) = c.iter().position(|x| *x == T::zero() || !x.is_normal()) {
        warnings.push(format!("c_k underflows from k={k}"));
    }
    Ok(TheorySolution {
        lambda_star: root.lambda_star,
        tol: opts.series.tol,
        truncation_k: root.eval.truncation_k,
        b1,
        alpha_class: spec.alpha_class(),
        c,
        warnings,
    })
}

/// Compares `log c_k` with the decay law `-λ* Σ_{j<k} 1/w(j)`.
pub fn tail_law<T: Scalar>(spec: &WeightSpec<T>, lambda_star: T, k: usize) -> Result<TailLaw<T>> {
    if k == 0 {
        return Err(Error::InvalidInput("tail_law needs k >= 1".into()));
    }
    let mut sum_inv_w = CompensatedSum::new();
    let mut log_ck = CompensatedSum::new();
    for j in 0..k {
        let w = spec.evaluate(j);
        sum_inv_w.add(w.recip());
        log_ck.add(-(lambda_star / w).ln_1p());
    }
    let sum_inv_w = sum_inv_w.value();
    let predicted_log_ck = -lambda_star * sum_inv_w;
    Ok(TailLaw {
        sum_inv_w,
        predicted_log_ck,
        ratio: log_ck.value() / predicted_log_ck,
    })
}

/// Eigenfunction of the root birth process: `f_r(k) = Π_{j<k} (r+w(j))/w(j)`.
pub fn f_r<T: Scalar>(spec: &WeightSpec<T>, r: T, k: usize) -> T {
    (0..k).fold(T::one(), |acc, j| {
        let w = spec.evaluate(j);
        acc * (r + w) / w
    })
}

/// `f_r(0..=k_max)`.
pub fn f_r_table<T: Scalar>(spec: &WeightSpec<T>, r: T, k_max: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(k_max + 1);
    let mut acc = T::one();
    out.push(acc);
    for j in 0..k_max {
        let w = spec.evaluate(j);
        acc = acc * (r + w) / w;
        out.push(acc);
    }
    out
}

/// Smallest `r` (plus a small margin) above every probed increment
/// `w(k) - w(k-1)`; the piecewise-linear `f_r` is convex on the probe range
/// for any larger `r`.
pub fn min_convex_r<T: Scalar>(spec: &WeightSpec<T>, k_probe: usize) -> Result<T> {
    if k_probe < 2 {
        return Err(Error::InvalidInput(format!(
            "k_probe={k_probe} must be >= 2"
        )));
    }
    let sup = (1..=k_probe)
        .map(|k| spec.evaluate(k) - spec.evaluate(k - 1))
        .fold(T::zero(), T::max);
    let margin = T::lit(1e-6) * sup.max(T::one());
    Ok(sup + margin)
}
