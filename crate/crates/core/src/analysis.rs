//! Checks that tie simulations to the closed forms in [`crate::theory`].
//!
//! * [`exact_enumeration`]: `E N_k` for small trees by summing over all
//!   `(n-1)!` attachment histories.
//! * [`compare`]: across-seed mean of `N_k/N_0` against `c_k`. Standard
//!   errors come from seed-to-seed spread because the `N_k` of one tree are
//!   dependent.
//! * Root process: `X_t`, the number of children of the root, jumps from
//!   `j-1` to `j` after an `Exp(w(j-1))` wait. [`martingale_check`] tests
//!   `E f_r(X_t) = e^{rt}` and [`tau_laplace_check`] tests
//!   `E e^{-λτ_k} = Π_{j<k} w(j)/(λ+w(j))`.
//! * [`tail_fit`] and [`growth_rate_diagnostic`] for tail exponents and
//!   `n·e^{-λ* T_n}`.

use std::fmt;
use std::ops::RangeInclusive;

use num_traits::Num;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::growth::{grow, stream_rng, DegreeWeight, SimConfig};
use crate::theory::{f_r_table, TheorySolution};
use crate::weights::WeightSpec;
use crate::{DegreeHistogram, Error, Result, Scalar};

/// Largest tree size accepted by [`exact_enumeration`].
pub const MAX_ENUMERATION_NODES: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactResult<T> {
    pub n: usize,
    /// `E N_0..=E N_{n-1}`; `N_k = 0` for `k ≥ n`.
    pub expected_counts: Vec<T>,
    pub history_count: u64,
}

/// `E N_k` for trees of `n` nodes with weights `w(k) = weight(k)`, exact in
/// the arithmetic of `T` (floating point or rational).
pub fn exact_enumeration_with<T, F>(weight: F, n: usize) -> Result<ExactResult<T>>
where
    T: Num + Clone,
    F: Fn(usize) -> T,
{
    if !(2..=MAX_ENUMERATION_NODES).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "exact enumeration needs 2 <= n <= {MAX_ENUMERATION_NODES}, got {n}"
        )));
    }
    let weights: Vec<T> = (0..n).map(&weight).collect();
    let mut expected = vec![T::zero(); n];
    let mut degrees = vec![0usize; 1];
    let mut histories = 0u64;
    enumerate(
        &weights,
        n,
        &mut degrees,
        T::one(),
        &mut expected,
        &mut histories,
    );
    Ok(ExactResult {
        n,
        expected_counts: expected,
        history_count: histories,
    })
}

fn enumerate<T: Num + Clone>(
    weights: &[T],
    n: usize,
    degrees: &mut Vec<usize>,
    prob: T,
    expected: &mut [T],
    histories: &mut u64,
) {
    if degrees.len() == n {
        *histories += 1;
        for &d in degrees.iter() {
            // Node with degree d contributes to N_0..=N_d.
            for slot in expected.iter_mut().take(d + 1) {
                *slot = slot.clone() + prob.clone();
            }
        }
        return;
    }
    let total = degrees
        .iter()
        .fold(T::zero(), |acc, &d| acc + weights[d].clone());
    for j in 0..degrees.len() {
        let p = prob.clone() * weights[degrees[j]].clone() / total.clone();
        degrees[j] += 1;
        degrees.push(0);
        enumerate(weights, n, degrees, p, expected, histories);
        degrees.pop();
        degrees[j] -= 1;
    }
}

pub fn exact_enumeration<T: Scalar>(spec: &WeightSpec<T>, n: usize) -> Result<ExactResult<T>> {
    exact_enumeration_with(|k| spec.evaluate(k), n)
}

/// Monte-Carlo mean and standard error of `N_k` over independent runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountMoments {
    pub runs: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Grows `runs` trees of `n` nodes with seeds `seed, seed+1, …` and returns
/// the moments of `N_0..N_{n-1}`. Deterministic regardless of thread count.
pub fn monte_carlo_counts<W>(weights: &W, n: usize, runs: usize, seed: u64) -> Result<CountMoments>
where
    W: DegreeWeight + Clone,
{
    if runs < 2 {
        return Err(Error::InvalidInput("need at least 2 runs".into()));
    }
    let config = SimConfig::new(weights.clone(), n, seed);
    let zero = || (vec![0u64; n], vec![0u64; n]);
    let (sum, sum_sq) = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let run = grow(&config.clone().with_seed(seed.wrapping_add(i)))?;
            let h = run.state.histogram();
            Ok((0..n).map(|k| h.at_least(k)).collect::<Vec<_>>())
        })
        .try_fold(zero, |(mut s, mut q), counts: Result<Vec<u64>>| {
            for (k, c) in counts?.into_iter().enumerate() {
                s[k] += c;
                q[k] += c * c;
            }
            Ok::<_, Error>((s, q))
        })
        .try_reduce(zero, |(mut s, mut q), (s2, q2)| {
            for k in 0..n {
                s[k] += s2[k];
                q[k] += q2[k];
            }
            Ok((s, q))
        })?;
    let r = runs as f64;
    let mean: Vec<f64> = sum.iter().map(|&s| s as f64 / r).collect();
    let stderr = sum_sq
        .iter()
        .zip(&mean)
        .map(|(&q, &m)| {
            let var = ((q as f64 / r) - m * m).max(0.0) * r / (r - 1.0);
            (var / r).sqrt()
        })
        .collect();
    Ok(CountMoments { runs, mean, stderr })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub k: usize,
    pub exact: f64,
    pub mc_mean: f64,
    pub stderr: f64,
    pub z_score: f64,
}

/// z-scores of Monte-Carlo `N_k` means against exact expectations.
pub fn oracle_agreement<T: Scalar>(exact: &ExactResult<T>, mc: &CountMoments) -> Vec<OracleRow> {
    exact
        .expected_counts
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let exact = e.as_f64();
            let mc_mean = mc.mean.get(k).copied().unwrap_or(0.0);
            let stderr = mc.stderr.get(k).copied().unwrap_or(0.0);
            OracleRow {
                k,
                exact,
                mc_mean,
                stderr,
                z_score: z_score(mc_mean, exact, stderr),
            }
        })
        .collect()
}

/// `(observed - target) / stderr`, with a zero stderr meaning an exact match
/// is required (up to rounding).
pub fn z_score(observed: f64, target: f64, stderr: f64) -> f64 {
    let diff = observed - target;
    if stderr > 0.0 {
        diff / stderr
    } else if diff.abs() <= 1e-12 * target.abs().max(1.0) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn mean_and_stderr(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for x in values {
        n += 1;
        let delta = x - mean;
        mean += delta / n as f64;
        m2 += delta * (x - mean);
    }
    let stderr = if n > 1 {
        (m2 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    (mean, stderr, n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub k: usize,
    pub c_k: f64,
    pub mean_ratio: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub seeds_used: usize,
    pub n_nodes: u64,
    pub abs_tol: f64,
    pub z_cap: f64,
}

impl ComparisonReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Largest `|mean_ratio - c_k| / c_k` over the rows.
    pub fn max_relative_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.mean_ratio - r.c_k).abs() / r.c_k)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "n = {}, seeds = {}, abs_tol = {}, z_cap = {}",
            self.n_nodes, self.seeds_used, self.abs_tol, self.z_cap
        )?;
        writeln!(
            f,
            "{:>4} {:>14} {:>14} {:>12} {:>9}  verdict",
            "k", "c_k", "mean N_k/N_0", "stderr", "z"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>4} {:>14.8} {:>14.8} {:>12.3e} {:>9.2}  {}",
                r.k,
                r.c_k,
                r.mean_ratio,
                r.stderr,
                r.z_score,
                if r.pass { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Across-seed comparison of `N_k/N_0` with `c_k` for `k ≤ k_max`. A row
/// passes when `|mean - c_k| ≤ max(abs_tol, z_cap·stderr)`.
pub fn compare<T: Scalar>(
    histograms: &[DegreeHistogram],
    theory: &TheorySolution<T>,
    k_max: usize,
    abs_tol: f64,
    z_cap: f64,
) -> Result<ComparisonReport> {
    if histograms.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 runs for a standard error, got {}",
            histograms.len()
        )));
    }
    let n_nodes = histograms[0].n_nodes;
    if let Some(h) = histograms.iter().find(|h| h.n_nodes != n_nodes) {
        return Err(Error::InvalidInput(format!(
            "runs differ in size: {} vs {}",
            n_nodes, h.n_nodes
        )));
    }
    if k_max >= theory.c.len() {
        return Err(Error::InvalidInput(format!(
            "theory only has c_0..c_{}, asked for k_max={k_max}",
            theory.c.len() - 1
        )));
    }
    let rows = (0..=k_max)
        .map(|k| {
            let c_k = theory.c[k].as_f64();
            let (mean_ratio, stderr, _) = mean_and_stderr(histograms.iter().map(|h| h.ratio(k)));
            let z = z_score(mean_ratio, c_k, stderr);
            let pass = (mean_ratio - c_k).abs() <= abs_tol.max(z_cap * stderr);
            ComparisonRow {
                k,
                c_k,
                mean_ratio,
                stderr,
                z_score: z,
                pass,
            }
        })
        .collect();
    Ok(ComparisonReport {
        rows,
        seeds_used: histograms.len(),
        n_nodes,
        abs_tol,
        z_cap,
    })
}

/// Jump times `τ_1 < τ_2 < …` of the root's children, one list per path.
#[derive(Clone, Debug, PartialEq)]
pub struct RootPaths<T> {
    pub paths: Vec<Vec<T>>,
    /// Paths were run up to this time (time-capped simulation).
    pub t_max: Option<T>,
    /// Every path holds exactly this many jumps (jump-capped simulation).
    pub jump_cap: Option<usize>,
}

impl<T: Scalar> RootPaths<T> {
    /// `X_t = #{j : τ_j < t}` on one path.
    pub fn children_at(path: &[T], t: T) -> usize {
        path.partition_point(|&tau| tau < t)
    }
}

fn root_path<T: Scalar, R: Rng>(
    spec: &WeightSpec<T>,
    rng: &mut R,
    mut keep_going: impl FnMut(usize, T) -> bool,
) -> Vec<T> {
    let mut taus = Vec::new();
    let mut clock = T::zero();
    loop {
        let j = taus.len();
        let e: f64 = Exp1.sample(rng);
        clock = clock + T::lit(e) / spec.evaluate(j);
        if !keep_going(j, clock) {
            return taus;
        }
        taus.push(clock);
    }
}

/// Root birth process up to `t_max`. Path `i` uses ChaCha8 stream `i` of `seed`.
pub fn simulate_root_process<T: Scalar>(
    spec: &WeightSpec<T>,
    t_max: T,
    n_paths: usize,
    seed: u64,
) -> Result<RootPaths<T>> {
    if !(t_max >= T::zero()) || n_paths == 0 {
        return Err(Error::InvalidInput(
            "need t_max >= 0 and n_paths >= 1".into(),
        ));
    }
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            root_path(spec, &mut rng, |_, t| t <= t_max)
        })
        .collect();
    Ok(RootPaths {
        paths,
        t_max: Some(t_max),
        jump_cap: None,
    })
}

/// Root birth process stopped after exactly `n_jumps` children.
pub fn simulate_root_jumps<T: Scalar>(
    spec: &WeightSpec<T>,
    n_jumps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<RootPaths<T>> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("need n_paths >= 1".into()));
    }
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            root_path(spec, &mut rng, |j, _| j < n_jumps)
        })
        .collect();
    Ok(RootPaths {
        paths,
        t_max: None,
        jump_cap: Some(n_jumps),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingalePoint {
    pub t: f64,
    pub mc_mean_f_r: f64,
    /// `e^{rt}`
    pub target: f64,
    pub stderr: f64,
    pub z: f64,
    /// `mc_mean_f_r · e^{-rt}`, which should stay at 1.
    pub normalized: f64,
}

/// Monte-Carlo `E f_r(X_t)` against `e^{rt}` on a grid of times.
pub fn martingale_check<T: Scalar>(
    paths: &RootPaths<T>,
    spec: &WeightSpec<T>,
    r: T,
    t_grid: &[T],
) -> Result<Vec<MartingalePoint>> {
    let t_max = paths
        .t_max
        .ok_or_else(|| Error::InvalidInput("martingale check needs time-capped paths".into()))?;
    if !(r > T::zero()) {
        return Err(Error::InvalidInput(format!("r={r} must be > 0")));
    }
    if let Some(t) = t_grid.iter().find(|&&t| t < T::zero() || t > t_max) {
        return Err(Error::InvalidInput(format!(
            "t={t} is outside [0, {t_max}]"
        )));
    }
    let longest = paths.paths.iter().map(Vec::len).max().unwrap_or(0);
    let f = f_r_table(spec, r, longest);
    Ok(t_grid
        .iter()
        .map(|&t| {
            let values = paths
                .paths
                .iter()
                .map(|p| f[RootPaths::children_at(p, t)].as_f64());
            let (mean, stderr, _) = mean_and_stderr(values);
            let target = (r * t).exp().as_f64();
            MartingalePoint {
                t: t.as_f64(),
                mc_mean_f_r: mean,
                target,
                stderr,
                z: z_score(mean, target, stderr),
                normalized: mean / target,
            }
        })
        .collect())
}

/// Slope of `mean f_r(X_t)·e^{-rt}` against `t` divided by its standard
/// error, treating grid points as independent (conservative, since they are
/// positively correlated).
pub fn martingale_flatness(points: &[MartingalePoint]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let t_bar = points.iter().map(|p| p.t).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.t - t_bar).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    let slope = points
        .iter()
        .map(|p| (p.t - t_bar) * p.normalized)
        .sum::<f64>()
        / sxx;
    let var: f64 = points
        .iter()
        .map(|p| ((p.t - t_bar) / sxx).powi(2) * (p.stderr / p.target).powi(2))
        .sum();
    z_score(slope, 0.0, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauLaplace {
    pub k: usize,
    pub lambda: f64,
    pub mc_mean: f64,
    pub target: f64,
    pub stderr: f64,
    pub z: f64,
}

/// Monte-Carlo `E e^{-λτ_k}` against `Π_{j<k} w(j)/(λ+w(j))`.
pub fn tau_laplace_check<T: Scalar>(
    paths: &RootPaths<T>,
    spec: &WeightSpec<T>,
    lambda: T,
    k: usize,
) -> Result<TauLaplace> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::InvalidInput(format!("lambda={lambda} must be >= 0")));
    }
    if let Some(i) = paths.paths.iter().position(|p| p.len() < k) {
        return Err(Error::InvalidInput(format!(
            "path {i} has {} jumps, fewer than k={k}",
            paths.paths[i].len()
        )));
    }
    let target = (0..k)
        .fold(T::one(), |acc, j| {
            let w = spec.evaluate(j);
            acc * w / (lambda + w)
        })
        .as_f64();
    let (mc_mean, stderr, _) = mean_and_stderr(
        paths
            .paths
            .iter()
            .map(|p| (-lambda * p[k - 1]).exp().as_f64()),
    );
    Ok(TauLaplace {
        k,
        lambda: lambda.as_f64(),
        mc_mean,
        target,
        stderr,
        z: z_score(mc_mean, target, stderr),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log v_k` against `log k` over `k_range`, where
/// `values[k] = v_k`.
pub fn tail_fit<T: Scalar>(values: &[T], k_range: RangeInclusive<usize>) -> Result<TailFit> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo == 0 || hi <= lo || hi >= values.len() {
        return Err(Error::InvalidInput(format!(
            "k range {lo}..={hi} must satisfy 1 <= lo < hi < {}",
            values.len()
        )));
    }
    if let Some(k) = (lo..=hi).find(|&k| !(values[k] > T::zero())) {
        return Err(Error::InvalidInput(format!(
            "value at k={k} is not positive"
        )));
    }
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .map(|k| ((k as f64).ln(), values[k].as_f64().ln()))
        .collect();
    let n = pts.len() as f64;
    let x_bar = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_bar = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - x_bar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - x_bar) * (p.1 - y_bar)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - y_bar).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(TailFit {
        slope,
        intercept: y_bar - slope * x_bar,
        r_squared,
    })
}

/// `(n, n·e^{-λ* T_n})` at the requested node indices. No verdict: the
/// limit is a nondegenerate random variable.
pub fn growth_rate_diagnostic<T: Scalar>(
    birth_times: &[T],
    lambda_star: T,
    indices: &[usize],
) -> Result<Vec<(usize, f64)>> {
    indices
        .iter()
        .map(|&n| {
            let t = birth_times
                .get(n)
                .ok_or_else(|| Error::InvalidInput(format!("no birth time for node {n}")))?;
            Ok((n, n as f64 * (-(lambda_star * *t)).exp().as_f64()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{solve, survival_fractions, SolveOptions};
    use crate::weights::TailRule;
    use num_rational::Ratio;

    fn ba() -> WeightSpec<f64> {
        WeightSpec::linear(1.0, 1.0).unwrap()
    }

    #[test]
    fn enumeration_barabasi_three_nodes_exact() {
        let r = exact_enumeration_with(|k| Ratio::<i64>::from_integer(k as i64 + 1), 3).unwrap();
        assert_eq!(r.history_count, 2);
        assert_eq!(r.expected_counts[0], Ratio::from_integer(3));
        assert_eq!(r.expected_counts[1], Ratio::new(4, 3));
        assert_eq!(r.expected_counts[2], Ratio::new(2, 3));
    }

    #[test]
    fn enumeration_uniform_three_nodes() {
        let r = exact_enumeration_with(|_| Ratio::<i64>::from_integer(1), 3).unwrap();
        assert_eq!(r.expected_counts[1], Ratio::new(3, 2));
    }

    #[test]
    fn enumeration_two_nodes_forced() {
        let r = exact_enumeration(&WeightSpec::power_plus(0.5, 1.0).unwrap(), 2).unwrap();
        assert_eq!(r.expected_counts, vec![2.0, 1.0]);
    }

    #[test]
    fn enumeration_counts_and_edge_identity() {
        for n in 2..=MAX_ENUMERATION_NODES {
            let r = exact_enumeration(&ba(), n).unwrap();
            let factorial: u64 = (1..n as u64).product();
            assert_eq!(r.history_count, factorial);
            assert!((r.expected_counts[0] - n as f64).abs() < 1e-9);
            let edges: f64 = r.expected_counts[1..].iter().sum();
            assert!((edges - (n - 1) as f64).abs() < 1e-10);
        }
        assert!(exact_enumeration(&ba(), 1).is_err());
        assert!(exact_enumeration(&ba(), 10).is_err());
    }

    #[test]
    fn rational_and_float_enumeration_agree() {
        let rational =
            exact_enumeration_with(|k| Ratio::<i64>::from_integer(k as i64 + 1), 6).unwrap();
        let float = exact_enumeration(&ba(), 6).unwrap();
        for (q, x) in rational.expected_counts.iter().zip(&float.expected_counts) {
            let q = *q.numer() as f64 / *q.denom() as f64;
            assert!((q - x).abs() < 1e-12);
        }
    }

    fn hist(ratios_n1: &[u64], n: u64) -> Vec<DegreeHistogram> {
        ratios_n1
            .iter()
            .map(|&n1| DegreeHistogram {
                n_nodes: n,
                counts: vec![n, n1],
                time_stamp: None,
            })
            .collect()
    }

    #[test]
    fn compare_rows_and_errors() {
        let theory = solve(
            &ba(),
            &SolveOptions {
                c_kmax: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let h = hist(&[333, 334, 333, 334], 1000);
        let report = compare(&h, &theory, 1, 1e-3, 4.0).unwrap();
        assert_eq!(report.rows[0].mean_ratio, 1.0);
        assert_eq!(report.rows[0].z_score, 0.0);
        assert!(report.all_pass());
        assert!(report.to_string().contains("pass"));

        let wrong = solve(
            &WeightSpec::power_plus(0.5, 1.0).unwrap(),
            &SolveOptions {
                c_kmax: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!compare(&h, &wrong, 1, 1e-3, 4.0).unwrap().all_pass());

        assert!(compare(&h[..1], &theory, 1, 1e-3, 4.0).is_err());
        let mut mixed = h.clone();
        mixed[1].n_nodes = 999;
        assert!(compare(&mixed, &theory, 1, 1e-3, 4.0).is_err());
        assert!(compare(&h, &theory, 4, 1e-3, 4.0).is_err());
    }

    #[test]
    fn root_process_first_jumps() {
        let paths = simulate_root_jumps(&ba(), 2, 100_000, 1).unwrap();
        let (m1, se1, _) = mean_and_stderr(paths.paths.iter().map(|p| p[0]));
        assert!((m1 - 1.0).abs() < 4.0 * se1);
        let (m2, se2, _) = mean_and_stderr(paths.paths.iter().map(|p| p[1]));
        assert!((m2 - 1.5).abs() < 4.0 * se2);

        let timed = simulate_root_process(&ba(), 1.0, 100, 3).unwrap();
        for p in &timed.paths {
            assert_eq!(RootPaths::children_at(p, 0.0), 0);
            assert!(p.iter().all(|&t| t <= 1.0));
        }
    }

    #[test]
    fn martingale_at_zero_is_exact() {
        let paths = simulate_root_process(&ba(), 1.0, 1000, 2).unwrap();
        let pts = martingale_check(&paths, &ba(), 2.0, &[0.0]).unwrap();
        assert_eq!(pts[0].mc_mean_f_r, 1.0);
        assert_eq!(pts[0].stderr, 0.0);
        assert_eq!(pts[0].z, 0.0);
        assert!(martingale_check(&paths, &ba(), 2.0, &[1.5]).is_err());
        let capped = simulate_root_jumps(&ba(), 3, 10, 2).unwrap();
        assert!(martingale_check(&capped, &ba(), 2.0, &[0.5]).is_err());
    }

    #[test]
    fn martingale_r1_mean_is_e() {
        let paths = simulate_root_process(&ba(), 1.0, 100_000, 8).unwrap();
        let pts = martingale_check(&paths, &ba(), 1.0, &[1.0]).unwrap();
        assert!(pts[0].z.abs() < 4.0, "{pts:?}");
        assert!((pts[0].mc_mean_f_r - std::f64::consts::E).abs() < 0.05);
    }

    #[test]
    fn tau_laplace_examples() {
        let paths = simulate_root_jumps(&ba(), 2, 50_000, 4).unwrap();
        let t = tau_laplace_check(&paths, &ba(), 1.0, 1).unwrap();
        assert_eq!(t.target, 0.5);
        let t = tau_laplace_check(&paths, &ba(), 2.0, 2).unwrap();
        assert!((t.target - 1.0 / 6.0).abs() < 1e-15);
        assert!(t.z.abs() < 4.0);
        let t = tau_laplace_check(&paths, &ba(), 0.0, 2).unwrap();
        assert_eq!((t.target, t.mc_mean, t.z), (1.0, 1.0, 0.0));
        assert!(tau_laplace_check(&paths, &ba(), 1.0, 3).is_err());
    }

    #[test]
    fn tail_fit_examples() {
        let c = survival_fractions(&ba(), 2.0, 10_000);
        let fit = tail_fit(&c, 100..=10_000).unwrap();
        assert!((fit.slope + 2.0).abs() < 0.04);
        assert!(fit.r_squared > 0.999);

        let flat = vec![0.5f64; 20];
        let fit = tail_fit(&flat, 1..=19).unwrap();
        assert_eq!(fit.slope, 0.0);

        assert!(tail_fit(&[1.0, 0.5, 0.0], 1..=2).is_err());
        assert!(tail_fit(&c, 0..=10).is_err());
    }

    #[test]
    fn sublinear_tail_is_less_power_law_like() {
        let p = WeightSpec::power_plus(0.5, 1.0).unwrap();
        let sol = solve(
            &p,
            &SolveOptions {
                c_kmax: 400,
                ..Default::default()
            },
        )
        .unwrap();
        let fit_p = tail_fit(&sol.c, 10..=400).unwrap();
        let c = survival_fractions(&ba(), 2.0, 400);
        let fit_b = tail_fit(&c, 10..=400).unwrap();
        assert!(fit_p.r_squared < fit_b.r_squared);
        assert!(fit_p.r_squared < 0.99, "{fit_p:?}");
    }

    #[test]
    fn growth_rate_series_is_positive() {
        let run = grow(&SimConfig::new(ba(), 1024, 2).continuous(true)).unwrap();
        let times = run.state.birth_times().unwrap();
        let series = growth_rate_diagnostic(times, 2.0, &[1, 16, 256, 1023]).unwrap();
        assert!(series.iter().all(|&(_, v)| v > 0.0));
        assert!(growth_rate_diagnostic(times, 2.0, &[5000]).is_err());
    }

    #[test]
    fn uniform_oracle_matches_monte_carlo() {
        let uniform =
            WeightSpec::table(vec![1.0], TailRule::LinearExtrapolate { a: 0.0, b: 1.0 }).unwrap();
        let exact = exact_enumeration(&uniform, 5).unwrap();
        let mc = monte_carlo_counts(&uniform, 5, 20_000, 10).unwrap();
        for row in oracle_agreement(&exact, &mc) {
            assert!(row.z_score.abs() < 4.0, "{row:?}");
        }
    }
}
