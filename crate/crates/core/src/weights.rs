//! Weight functions `w: ℕ → ℝ⁺` on out-degrees.
//!
//! A [`WeightSpec`] pairs a declarative [`WeightForm`] with the positive
//! constant it is divided by. Multiplying `w` by a constant does not change
//! the attachment law, so specs built through [`normalize`] carry
//! `scale = w_raw(0)` and evaluate to `w(0) = 1`. [`WeightSpec::unnormalized`]
//! keeps the raw values (scale 1); it exists for scaling checks.
//!
//! Admissible weights have the shape `w(k) = k^α + v(k)` with `0 < α ≤ 1`,
//! bounded increments and `w(k) → ∞`. The asymptotic side conditions on
//! `v` are not finitely decidable; [`validate`] only probes them.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// How a [`WeightForm::Table`] continues past its last entry. With
/// `m = k - len`, the tail is `a·m + b` or `m^α + β` respectively.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum TailRule<T> {
    LinearExtrapolate { a: T, b: T },
    PowerExtrapolate { alpha: T, beta: T },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum WeightForm<T> {
    /// `w(k) = a·k + b`
    Linear { a: T, b: T },
    /// `w(k) = k^α + β`, with `0^α = 0`
    PowerPlus { alpha: T, beta: T },
    /// Tabulated raw values for `k < values.len()`, then the tail rule.
    Table { values: Vec<T>, tail: TailRule<T> },
}

/// Asymptotic class of `w`, which decides where `ρ̂(λ)` is finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum AlphaClass<T> {
    Linear,
    Sublinear(T),
    /// `w` stays bounded. Not admissible; only used by the uniform
    /// attachment oracle.
    Bounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct WeightSpec<T> {
    form: WeightForm<T>,
    scale: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ValidationReport<T> {
    pub r_bound: T,
    pub alpha_class: AlphaClass<T>,
    pub lambda_domain_lower: T,
    pub probe_k_max: usize,
    pub warnings: Vec<String>,
}

fn positive<T: Scalar>(x: T) -> bool {
    x.is_finite() && x > T::zero()
}

impl<T: Scalar> WeightForm<T> {
    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidForm(msg));
        match self {
            WeightForm::Linear { a, b } => {
                if !positive(*a) {
                    return bad(format!("linear slope a={a} must be > 0"));
                }
                if !positive(*b) {
                    return Err(Error::InvalidSpec {
                        k: 0,
                        reason: format!("linear offset b={b} gives w(0) <= 0"),
                    });
                }
            }
            WeightForm::PowerPlus { alpha, beta } => {
                check_alpha(*alpha)?;
                if !positive(*beta) {
                    return Err(Error::InvalidSpec {
                        k: 0,
                        reason: format!("power offset beta={beta} gives w(0) <= 0"),
                    });
                }
            }
            WeightForm::Table { values, tail } => {
                if values.is_empty() {
                    return bad("table has no values".into());
                }
                if let Some(k) = values.iter().position(|v| !positive(*v)) {
                    return Err(Error::InvalidSpec {
                        k,
                        reason: format!("tabulated weight {} is not positive", values[k]),
                    });
                }
                let len = values.len();
                match tail {
                    TailRule::LinearExtrapolate { a, b } => {
                        if !(a.is_finite() && *a >= T::zero()) {
                            return bad(format!("tail slope a={a} must be >= 0"));
                        }
                        if !positive(*b) {
                            return Err(Error::InvalidSpec {
                                k: len,
                                reason: format!("tail offset b={b} gives a nonpositive weight"),
                            });
                        }
                    }
                    TailRule::PowerExtrapolate { alpha, beta } => {
                        check_alpha(*alpha)?;
                        if !positive(*beta) {
                            return Err(Error::InvalidSpec {
                                k: len,
                                reason: format!(
                                    "tail offset beta={beta} gives a nonpositive weight"
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Raw (unscaled) weight at degree `k`.
    pub fn raw(&self, k: usize) -> T {
        match self {
            WeightForm::Linear { a, b } => *a * T::from_count(k) + *b,
            WeightForm::PowerPlus { alpha, beta } => power(k, *alpha) + *beta,
            WeightForm::Table { values, tail } => match values.get(k) {
                Some(v) => *v,
                None => {
                    let m = k - values.len();
                    match tail {
                        TailRule::LinearExtrapolate { a, b } => *a * T::from_count(m) + *b,
                        TailRule::PowerExtrapolate { alpha, beta } => power(m, *alpha) + *beta,
                    }
                }
            },
        }
    }

    /// Parses the textual grammar
    /// `linear:a,b | power:alpha,beta | table:path[:lintail,a,b|powtail,alpha,beta]`.
    ///
    /// Without an explicit tail a table continues as `lintail,1,last+1`.
    pub fn parse(input: &str) -> Result<Self> {
        let err = |reason: &str| Error::Parse {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let (kind, rest) = input
            .split_once(':')
            .ok_or_else(|| err("expected <kind>:<parameters>"))?;
        let form = match kind.trim() {
            "linear" => {
                let [a, b] = parse_pair(rest).map_err(|r| err(&r))?;
                WeightForm::Linear { a, b }
            }
            "power" => {
                let [alpha, beta] = parse_pair(rest).map_err(|r| err(&r))?;
                WeightForm::PowerPlus { alpha, beta }
            }
            "table" => {
                let (path, tail) = match rest.split_once(':') {
                    Some((p, t)) => (p, Some(t)),
                    None => (rest, None),
                };
                let values = read_table(Path::new(path))?;
                let tail = match tail {
                    None => TailRule::LinearExtrapolate {
                        a: T::one(),
                        b: *values.last().ok_or_else(|| err("table file is empty"))? + T::one(),
                    },
                    Some(t) => {
                        let (name, params) = t
                            .split_once(',')
                            .ok_or_else(|| err("tail must be lintail,a,b or powtail,alpha,beta"))?;
                        let [x, y] = parse_pair(params).map_err(|r| err(&r))?;
                        match name.trim() {
                            "lintail" => TailRule::LinearExtrapolate { a: x, b: y },
                            "powtail" => TailRule::PowerExtrapolate { alpha: x, beta: y },
                            _ => return Err(err("unknown tail rule")),
                        }
                    }
                };
                WeightForm::Table { values, tail }
            }
            _ => return Err(err("unknown weight kind (linear, power, table)")),
        };
        form.check()?;
        Ok(form)
    }
}

impl<T: Scalar> FromStr for WeightForm<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha.is_finite() && alpha > T::zero() && alpha <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidForm(format!(
            "exponent alpha={alpha} must lie in (0, 1]"
        )))
    }
}

fn power<T: Scalar>(k: usize, alpha: T) -> T {
    if k == 0 {
        T::zero()
    } else if alpha == T::one() {
        T::from_count(k)
    } else {
        T::from_count(k).powf(alpha)
    }
}

fn parse_pair<T: Scalar>(s: &str) -> std::result::Result<[T; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got {s:?}"));
    }
    let mut out = [T::zero(); 2];
    for (slot, p) in out.iter_mut().zip(&parts) {
        let x: f64 = p.parse().map_err(|_| format!("{p:?} is not a number"))?;
        *slot = T::from_f64(x).ok_or_else(|| format!("{p:?} is out of range"))?;
    }
    Ok(out)
}

/// Reads one positive decimal per line; blank lines and `#` comments are skipped.
pub fn read_table<T: Scalar>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let x: f64 = line.parse().map_err(|_| Error::Parse {
            input: path.display().to_string(),
            reason: format!("line {}: {line:?} is not a number", line_no + 1),
        })?;
        values.push(T::lit(x));
    }
    Ok(values)
}

/// Divides `raw` by its value at 0 so that `w(0) = 1`.
pub fn normalize<T: Scalar>(raw: WeightForm<T>) -> Result<WeightSpec<T>> {
    raw.check()?;
    let scale = raw.raw(0);
    if !positive(scale) {
        return Err(Error::InvalidSpec {
            k: 0,
            reason: format!("raw w(0)={scale} must be > 0"),
        });
    }
    Ok(WeightSpec { form: raw, scale })
}

impl<T: Scalar> WeightSpec<T> {
    /// Keeps the raw values (scale 1), so `w(0)` need not be 1.
    pub fn unnormalized(raw: WeightForm<T>) -> Result<Self> {
        raw.check()?;
        Ok(WeightSpec {
            form: raw,
            scale: T::one(),
        })
    }

    pub fn linear(a: T, b: T) -> Result<Self> {
        normalize(WeightForm::Linear { a, b })
    }

    pub fn power_plus(alpha: T, beta: T) -> Result<Self> {
        normalize(WeightForm::PowerPlus { alpha, beta })
    }

    pub fn table(values: Vec<T>, tail: TailRule<T>) -> Result<Self> {
        normalize(WeightForm::Table { values, tail })
    }

    /// Parses the weight grammar and normalizes.
    pub fn parse(input: &str) -> Result<Self> {
        normalize(WeightForm::parse(input)?)
    }

    pub fn form(&self) -> &WeightForm<T> {
        &self.form
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// Re-normalizes the underlying raw form; a no-op on normalized specs.
    pub fn normalized(&self) -> Result<Self> {
        normalize(self.form.clone())
    }

    /// `w(k)`. Always positive for specs that passed construction.
    #[inline]
    pub fn evaluate(&self, k: usize) -> T {
        self.form.raw(k) / self.scale
    }

    /// Like [`evaluate`](Self::evaluate) but rejects a nonpositive value.
    pub fn try_evaluate(&self, k: usize) -> Result<T> {
        let w = self.evaluate(k);
        if positive(w) {
            Ok(w)
        } else {
            Err(Error::InvalidSpec {
                k,
                reason: format!("w({k})={w} is not positive"),
            })
        }
    }

    /// Coefficient of `k` in `w(k)` for the linear class.
    pub fn leading_slope(&self) -> Option<T> {
        let slope = match &self.form {
            WeightForm::Linear { a, .. } => *a,
            WeightForm::PowerPlus { alpha, .. } if *alpha == T::one() => T::one(),
            WeightForm::Table { tail, .. } => match tail {
                TailRule::LinearExtrapolate { a, .. } if *a > T::zero() => *a,
                TailRule::PowerExtrapolate { alpha, .. } if *alpha == T::one() => T::one(),
                _ => return None,
            },
            _ => return None,
        };
        Some(slope / self.scale)
    }

    pub fn alpha_class(&self) -> AlphaClass<T> {
        if self.leading_slope().is_some() {
            return AlphaClass::Linear;
        }
        match &self.form {
            WeightForm::PowerPlus { alpha, .. } => AlphaClass::Sublinear(*alpha),
            WeightForm::Table {
                tail: TailRule::PowerExtrapolate { alpha, .. },
                ..
            } => AlphaClass::Sublinear(*alpha),
            _ => AlphaClass::Bounded,
        }
    }

    /// `ρ̂(λ)` is finite exactly for `λ` above this value.
    pub fn lambda_domain_lower(&self) -> T {
        self.leading_slope().unwrap_or_else(T::zero)
    }

    /// First degree from which `w` follows its closed-form tail.
    pub fn tail_start(&self) -> usize {
        match &self.form {
            WeightForm::Table { values, .. } => values.len(),
            _ => 0,
        }
    }

    /// Leading coefficient `c` and exponent `α` of the `c·k^α` part.
    fn leading_term(&self) -> Option<(T, T)> {
        match self.alpha_class() {
            AlphaClass::Linear => self.leading_slope().map(|c| (c, T::one())),
            AlphaClass::Sublinear(alpha) => Some((T::one() / self.scale, alpha)),
            AlphaClass::Bounded => None,
        }
    }
}

/// Probes `w` on `0..=probe_k_max`: observed increment bound, asymptotic
/// class, and heuristic warnings. Never fails on the asymptotic conditions.
pub fn validate<T: Scalar>(
    spec: &WeightSpec<T>,
    probe_k_max: usize,
) -> Result<ValidationReport<T>> {
    if probe_k_max < 2 {
        return Err(Error::InvalidInput(format!(
            "probe_k_max={probe_k_max} must be at least 2"
        )));
    }
    let mut warnings = Vec::new();
    let mut prev = spec.try_evaluate(0)?;
    let mut r_bound = T::neg_infinity();
    let mut monotone = true;
    for k in 1..=probe_k_max {
        let w = spec.try_evaluate(k)?;
        let inc = w - prev;
        if inc < T::zero() {
            monotone = false;
        }
        r_bound = r_bound.max(inc);
        prev = w;
    }
    if !monotone {
        warnings.push("w is not monotone on the probe range (allowed)".to_string());
    }
    let alpha_class = spec.alpha_class();
    match spec.leading_term() {
        None => warnings.push(
            "w is bounded: w(k) -> infinity fails, the limit theorem does not apply".to_string(),
        ),
        Some((c, alpha)) => {
            // v(k)/k^α should visibly shrink towards 0.
            let relative = |k: usize| {
                let kk = T::from_count(k).powf(alpha);
                (spec.evaluate(k) - c * kk).abs() / kk
            };
            let half = relative(probe_k_max / 2);
            let full = relative(probe_k_max);
            if full > T::lit(1e-12) && full >= half {
                warnings.push(format!(
                    "v(k)/k^alpha does not decrease on the probe range ({half} -> {full})"
                ));
            }
        }
    }
    Ok(ValidationReport {
        r_bound,
        alpha_class,
        lambda_domain_lower: spec.lambda_domain_lower(),
        probe_k_max,
        warnings,
    })
}
