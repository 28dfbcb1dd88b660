//! Closed forms checked against brute-force series evaluation.

#![allow(clippy::excessive_precision)]

use proptest::prelude::*;
use wtree::theory::{
    b1, rho_hat, rho_hat_truncated, series_remainder, solve, solve_lambda_star, survival_fractions,
    tail_law, SeriesOptions, SolveOptions,
};
use wtree::weights::{TailRule, WeightForm, WeightSpec};

// w(k) = sqrt(k) + 1, 40-digit direct summation and bisection (mpmath).
const SQRT_LAMBDA_STAR: f64 = 1.577_690_149_895_981_759_590_465;
const SQRT_B1: f64 = 0.412_420_927_432_747_168_505_380_4;
const SQRT_C: [f64; 11] = [
    1.0,
    0.387_944_222_093_704_037_84,
    0.216_868_541_343_628_195_35,
    0.131_157_215_078_780_463_75,
    0.083_143_784_953_898_553_991,
    0.054_488_474_906_359_369_311,
    0.036_630_093_187_225_329_342,
    0.025_134_396_107_553_390_262,
    0.017_542_794_007_895_015_668,
    0.012_423_205_974_218_452_378,
    0.008_909_211_978_689_875_783_8,
];

/// Sums terms until they drop below 1e-22, with no tail model at all.
/// Only usable where the terms decay faster than any power.
fn direct_rho(w: impl Fn(usize) -> f64, lambda: f64) -> f64 {
    let (mut sum, mut comp, mut term) = (0.0f64, 0.0f64, 1.0f64);
    let mut k = 0;
    while term > 1e-22 {
        let wk = w(k);
        term *= wk / (lambda + wk);
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        k += 1;
    }
    sum
}

fn direct_root(w: impl Fn(usize) -> f64 + Copy) -> f64 {
    let (mut lo, mut hi) = (1e-3, 8.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if direct_rho(w, mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sqrt_w(k: usize) -> f64 {
    (k as f64).sqrt() + 1.0
}

fn ba() -> WeightSpec<f64> {
    WeightSpec::linear(1.0, 1.0).unwrap()
}

fn sqrt_spec() -> WeightSpec<f64> {
    WeightSpec::power_plus(0.5, 1.0).unwrap()
}

#[test]
fn direct_oracle_reproduces_frozen_values() {
    assert!((direct_root(sqrt_w) - SQRT_LAMBDA_STAR).abs() < 1e-12);
    assert!((direct_rho(sqrt_w, 2.0 * SQRT_LAMBDA_STAR) - SQRT_B1).abs() < 1e-12);
}

#[test]
fn sublinear_solution_matches_oracle() {
    let opts = SolveOptions {
        c_kmax: 10,
        ..Default::default()
    };
    let sol = solve(&sqrt_spec(), &opts).unwrap();
    assert!(
        (sol.lambda_star - SQRT_LAMBDA_STAR).abs() < 1e-9,
        "{}",
        sol.lambda_star
    );
    assert!((sol.b1 - SQRT_B1).abs() < 1e-9);
    for (got, want) in sol.c.iter().zip(SQRT_C) {
        assert!((got - want).abs() < 1e-9);
    }
    for lambda in [0.5, 1.0, 3.0] {
        let e = rho_hat(&sqrt_spec(), lambda, &SeriesOptions::default()).unwrap();
        assert!(
            (e.value - direct_rho(sqrt_w, lambda)).abs() < 1e-10,
            "lambda={lambda}"
        );
    }
}

#[test]
fn barabasi_closed_forms() {
    let sol = solve(
        &ba(),
        &SolveOptions {
            c_kmax: 100,
            ..Default::default()
        },
    )
    .unwrap();
    assert!((sol.lambda_star - 2.0).abs() < 1e-10);
    for k in 0..=100 {
        let exact = 2.0 / ((k as f64 + 1.0) * (k as f64 + 2.0));
        assert!((sol.c[k] - exact).abs() < 1e-10, "k={k}");
    }
    assert!((sol.b1 - 1.0 / 3.0).abs() < 1e-10);
}

#[test]
fn edge_identity_sum_of_c_is_one() {
    for spec in [ba(), sqrt_spec()] {
        let sol = solve(
            &spec,
            &SolveOptions {
                c_kmax: 2000,
                ..Default::default()
            },
        )
        .unwrap();
        let k = sol.c.len() - 1;
        let partial: f64 = sol.c[1..].iter().sum();
        let total = partial + series_remainder(&spec, sol.lambda_star, k, sol.c[k]);
        assert!((total - 1.0).abs() < 1e-8, "{total}");
        assert!(partial <= 1.0 + 1e-12);
    }
}

#[test]
fn raw_scaling_covariance() {
    let opts = SolveOptions {
        c_kmax: 50,
        ..Default::default()
    };
    let forms = [
        WeightForm::Linear { a: 1.0, b: 1.0 },
        WeightForm::PowerPlus {
            alpha: 0.5,
            beta: 1.0,
        },
        WeightForm::Table {
            values: vec![1.0, 3.0, 2.0],
            tail: TailRule::LinearExtrapolate { a: 1.0, b: 2.0 },
        },
    ];
    for form in forms {
        let base = solve(&WeightSpec::unnormalized(form.clone()).unwrap(), &opts).unwrap();
        for c in [0.5, 2.0] {
            let scaled_form = scale_form(&form, c);
            let scaled = solve(&WeightSpec::unnormalized(scaled_form).unwrap(), &opts).unwrap();
            assert!((scaled.lambda_star - c * base.lambda_star).abs() < 1e-8);
            for (a, b) in scaled.c.iter().zip(&base.c) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}

fn scale_form(form: &WeightForm<f64>, c: f64) -> WeightForm<f64> {
    match form {
        WeightForm::Linear { a, b } => WeightForm::Linear { a: c * a, b: c * b },
        // c·(k^α + β) has no PowerPlus form unless c = 1; go through a table
        // plus a tail that is affine in k^α, which only exists for α = 1, so
        // tabulate far enough that truncation never reaches the tail.
        WeightForm::PowerPlus { alpha, beta } => WeightForm::Table {
            values: (0..200_000)
                .map(|k| c * ((k as f64).powf(*alpha) + beta))
                .collect(),
            tail: TailRule::PowerExtrapolate {
                alpha: *alpha,
                beta: c * beta,
            },
        },
        WeightForm::Table { values, tail } => WeightForm::Table {
            values: values.iter().map(|v| c * v).collect(),
            tail: match tail {
                TailRule::LinearExtrapolate { a, b } => {
                    TailRule::LinearExtrapolate { a: c * a, b: c * b }
                }
                TailRule::PowerExtrapolate { .. } => unreachable!(),
            },
        },
    }
}

#[test]
fn tail_law_ratio_increases_towards_one() {
    let ratios: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&k| tail_law(&ba(), 2.0, k).unwrap().ratio)
        .collect();
    assert!(ratios[0] < ratios[1] && ratios[1] < ratios[2]);
    assert!(ratios[2] > 0.85 && ratios[2] < 1.0);

    // Independent route: log c_k from the product formula.
    let k = 10_000;
    let exact_log = (2.0 / ((k as f64 + 1.0) * (k as f64 + 2.0))).ln();
    let harmonic: f64 = (1..=k).map(|j| 1.0 / j as f64).sum();
    assert!((ratios[2] - exact_log / (-2.0 * harmonic)).abs() < 1e-10);

    let lam = SQRT_LAMBDA_STAR;
    let gap = |k: usize| (1.0 - tail_law(&sqrt_spec(), lam, k).unwrap().ratio).abs();
    assert!(gap(2000) < gap(1000) && gap(1000) < gap(500));
}

#[test]
fn b1_below_one_for_admissible_specs() {
    let opts = SeriesOptions::default();
    for spec in [ba(), sqrt_spec(), WeightSpec::linear(3.0, 1.0).unwrap()] {
        let root = solve_lambda_star(&spec, &opts).unwrap();
        let v = b1(&spec, root.lambda_star, &opts).unwrap();
        assert!(v > 0.0 && v < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rho_hat_strictly_decreasing_at_fixed_truncation(a in 0.2f64..3.0, b in 0.2f64..3.0, l1 in 0.01f64..5.0, gap in 0.01f64..5.0) {
        let spec = WeightSpec::linear(a, b).unwrap();
        let lower = spec.lambda_domain_lower();
        let (x, y) = (lower + l1, lower + l1 + gap);
        prop_assert!(rho_hat_truncated(&spec, x, 500) > rho_hat_truncated(&spec, y, 500));
    }

    #[test]
    fn partial_sums_are_lower_bounds(alpha in 0.2f64..=1.0, beta in 0.2f64..4.0, lam in 0.1f64..4.0) {
        let spec = WeightSpec::power_plus(alpha, beta).unwrap();
        let lam = spec.lambda_domain_lower() + lam;
        let e = rho_hat(&spec, lam, &SeriesOptions { tol: 1e-8, k_max: 2_000_000 }).unwrap();
        let finer = rho_hat_truncated(&spec, lam, 4 * e.truncation_k);
        prop_assert!(e.certified_lower <= finer);
        prop_assert!(e.certified_lower <= e.value);
    }

    #[test]
    fn solver_hits_unit_rho(alpha in 0.3f64..=1.0, beta in 0.3f64..4.0) {
        let spec = WeightSpec::power_plus(alpha, beta).unwrap();
        let opts = SeriesOptions::default();
        let root = solve_lambda_star(&spec, &opts).unwrap();
        let e = rho_hat(&spec, root.lambda_star, &opts).unwrap();
        prop_assert!((e.value - 1.0).abs() <= opts.tol);
        let c = survival_fractions(&spec, root.lambda_star, 50);
        prop_assert_eq!(c[0], 1.0);
        prop_assert!(c.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }
}
