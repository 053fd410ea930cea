//! Distributions of p-values: central and noncentral Student t, the CDF of a
//! two-sided one-sample t-test p-value under a shifted mean, and the
//! complement transform `t -> 1 - F(1 - t)`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use libm::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_probability, Error, Result};
use crate::numeric::{solve_increasing, CompensatedSum};

/// Probabilities produced by cancellation-prone arithmetic are clamped to
/// `[0, 1]`; excursions larger than this are treated as bugs in debug builds.
const CLAMP_SLACK: f64 = 1e-12;

fn clamp_probability(p: f64) -> f64 {
    debug_assert!(
        p > -CLAMP_SLACK && p < 1.0 + CLAMP_SLACK,
        "probability {p} outside [0, 1]"
    );
    p.clamp(0.0, 1.0)
}

/// Degrees of freedom and noncentrality of a (noncentral) t distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TDistParams {
    nu: u32,
    mu: f64,
}

impl TDistParams {
    pub fn new(nu: u32, mu: f64) -> Result<Self> {
        if nu == 0 {
            return Err(Error::Parameter("degrees of freedom must be >= 1".into()));
        }
        if !mu.is_finite() {
            return Err(Error::Parameter(format!("noncentrality {mu} is not finite")));
        }
        Ok(Self { nu, mu })
    }

    pub fn central(nu: u32) -> Result<Self> {
        Self::new(nu, 0.0)
    }

    /// One-sample t-test with `n_samples` observations and standardized
    /// effect `theta`: `nu = N - 1`, `mu = theta * sqrt(N / 2)`.
    pub fn from_effect_size(theta: f64, n_samples: u32) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::Parameter(format!(
                "sample size {n_samples} must be at least 2"
            )));
        }
        Self::new(n_samples - 1, theta * (f64::from(n_samples) / 2.0).sqrt())
    }

    pub fn nu(&self) -> u32 {
        self.nu
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `P(|T| > |t|)` for a central t with `nu` degrees of freedom.
pub fn t_two_sided_pvalue(t: f64, nu: u32) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let nu = f64::from(nu);
    beta_reg(0.5 * nu, 0.5, nu / (nu + t * t))
}

/// Upper tail `P(T > x)` of a central t.
pub fn central_t_sf(x: f64, nu: u32) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    let half = 0.5 * t_two_sided_pvalue(x, nu);
    if x >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

pub fn central_t_cdf(x: f64, nu: u32) -> f64 {
    central_t_sf(-x, nu)
}

fn central_t_pdf(x: f64, nu: u32) -> f64 {
    let nu = f64::from(nu);
    let ln_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (ln_norm - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp()
}

/// `x >= 0` with `P(T > x) = tail` for a central t, `tail` in `(0, 1/2]`.
/// Solved on the upper tail directly so tiny tails keep full relative
/// precision.
pub(crate) fn central_t_isf(tail: f64, nu: u32) -> f64 {
    debug_assert!(tail > 0.0 && tail <= 0.5);
    if tail == 0.5 {
        return 0.0;
    }
    let mut hi = 1.0;
    while central_t_sf(hi, nu) > tail {
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    solve_increasing(
        |x| (tail - central_t_sf(x, nu), Some(central_t_pdf(x, nu))),
        0.0,
        hi,
        1e-15,
    )
}

/// Poisson-mixture series for `P(T <= t)` with `t >= 0`. Terms are summed
/// outward from the Poisson mode, using the incomplete-beta recurrences in
/// both directions.
fn noncentral_cdf_nonneg(t: f64, nu: f64, delta: f64) -> f64 {
    let base = std_normal_cdf(-delta);
    if t == 0.0 {
        return base;
    }
    let t2 = t * t;
    let x = t2 / (t2 + nu);
    let ln_x = x.ln();
    let ln_1mx = (nu / (t2 + nu)).ln();
    let lambda = 0.5 * delta * delta;
    let b = 0.5 * nu;
    let ln_gamma_b = ln_gamma(b);

    let k = lambda.floor() as usize;
    let kf = k as f64;
    let ln_lambda_k = if k == 0 { 0.0 } else { kf * lambda.ln() };
    let p_k = (-lambda + ln_lambda_k - ln_gamma(kf + 1.0)).exp();
    let q_k = (-lambda + ln_lambda_k - ln_gamma(kf + 1.5)).exp() * delta / SQRT_2;

    // Shape parameters of the two beta families at the mode.
    let a_half = kf + 0.5;
    let a_int = kf + 1.0;
    let ia_k = beta_reg(a_half, b, x);
    let ib_k = beta_reg(a_int, b, x);
    let ga_k = (ln_gamma(a_half + b) - ln_gamma(a_half + 1.0) - ln_gamma_b
        + a_half * ln_x
        + b * ln_1mx)
        .exp();
    let gb_k = (ln_gamma(a_int + b) - ln_gamma(a_int + 1.0) - ln_gamma_b
        + a_int * ln_x
        + b * ln_1mx)
        .exp();

    let mut sum = CompensatedSum::new();

    // Forward from the mode.
    let (mut p, mut q, mut ia, mut ib, mut ga, mut gb) = (p_k, q_k, ia_k, ib_k, ga_k, gb_k);
    let mut j = k;
    loop {
        sum.add(p * ia + q * ib);
        let jf = j as f64;
        let next_ia = (ia - ga).max(0.0);
        let next_ib = (ib - gb).max(0.0);
        ga *= x * (jf + 0.5 + b) / (jf + 1.5);
        gb *= x * (jf + 1.0 + b) / (jf + 2.0);
        p *= lambda / (jf + 1.0);
        q *= lambda / (jf + 1.5);
        ia = next_ia;
        ib = next_ib;
        j += 1;
        let r = lambda / (j as f64 + 1.0);
        if r < 0.9 {
            let bound = (p * ia + q.abs() * ib) / (1.0 - r);
            if bound < 1e-18 {
                break;
            }
        }
        if j > k + 100_000 {
            break;
        }
    }

    // Backward from the mode down to zero.
    let (mut p, mut q, mut ia, mut ib, mut ga, mut gb) = (p_k, q_k, ia_k, ib_k, ga_k, gb_k);
    for j in (0..k).rev() {
        let jf = j as f64;
        p *= (jf + 1.0) / lambda;
        q *= (jf + 1.5) / lambda;
        // g(a - 1) = g(a) * a / ((a + b - 1) x), with a the shape at j + 1.
        ga *= (jf + 1.5) / ((jf + 0.5 + b) * x);
        gb *= (jf + 2.0) / ((jf + 1.0 + b) * x);
        ia += ga;
        ib += gb;
        sum.add(p * ia.min(1.0) + q * ib.min(1.0));
    }

    base + 0.5 * sum.value()
}

/// `P(T <= x)` for `T ~ t(nu, mu)`. Infinite `x` saturates to 0 or 1.
pub fn noncentral_t_cdf(x: f64, params: &TDistParams) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if params.mu == 0.0 {
        return central_t_cdf(x, params.nu);
    }
    let nu = f64::from(params.nu);
    let p = if x >= 0.0 {
        noncentral_cdf_nonneg(x, nu, params.mu)
    } else {
        1.0 - noncentral_cdf_nonneg(-x, nu, -params.mu)
    };
    clamp_probability(p)
}

/// `P(T > x)`; exact central tail when `mu = 0`.
pub fn noncentral_t_sf(x: f64, params: &TDistParams) -> f64 {
    if params.mu == 0.0 {
        return central_t_sf(x, params.nu);
    }
    clamp_probability(1.0 - noncentral_t_cdf(x, params))
}

/// Inverse of [`noncentral_t_cdf`] for `p` in `(0, 1)`.
pub fn noncentral_t_quantile(p: f64, params: &TDistParams) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile level {p} is not in (0, 1)")));
    }
    if params.mu == 0.0 {
        let nu = params.nu;
        return Ok(if p > 0.5 {
            central_t_isf(1.0 - p, nu)
        } else {
            -central_t_isf(p, nu)
        });
    }
    let mut lo = params.mu - 1.0;
    let mut step = 1.0;
    while noncentral_t_cdf(lo, params) > p {
        step *= 2.0;
        lo = params.mu - step;
    }
    let mut hi = params.mu + 1.0;
    step = 1.0;
    while noncentral_t_cdf(hi, params) < p {
        step *= 2.0;
        hi = params.mu + step;
    }
    Ok(solve_increasing(
        |x| (noncentral_t_cdf(x, params) - p, None),
        lo,
        hi,
        1e-15,
    ))
}

/// CDF on `[0, 1]` given by linear interpolation through tabulated points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedCdf {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedCdf {
    /// `grid` must be strictly increasing from 0 to 1, `values` non-decreasing
    /// from 0 to 1.
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if grid.len() < 2 || grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
            return Err(Error::Parameter(
                "tabulated CDF grid must start at 0 and end at 1".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parameter("tabulated CDF grid must be strictly increasing".into()));
        }
        if values[0] != 0.0 || *values.last().unwrap() != 1.0 {
            return Err(Error::Parameter("tabulated CDF must run from 0 to 1".into()));
        }
        if values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Parameter("tabulated CDF values must be non-decreasing".into()));
        }
        Ok(Self { grid, values })
    }

    fn eval(&self, p: f64) -> f64 {
        let i = self.grid.partition_point(|&g| g <= p);
        if i == 0 {
            return 0.0;
        }
        if i >= self.grid.len() {
            return 1.0;
        }
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        y0 + (y1 - y0) * (p - x0) / (x1 - x0)
    }

    fn complement(&self) -> Self {
        Self {
            grid: self.grid.iter().rev().map(|g| 1.0 - g).collect(),
            values: self.values.iter().rev().map(|v| 1.0 - v).collect(),
        }
    }
}

/// Distribution of a p-value: the alternative CDF `F`, the null (uniform),
/// or a complement `1 - G(1 - t)` of one of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AltPValueCdf {
    TTestTwoSided(TDistParams),
    Uniform,
    Custom(TabulatedCdf),
    Complement(Box<AltPValueCdf>),
}

impl AltPValueCdf {
    pub fn t_test(theta: f64, n_samples: u32) -> Result<Self> {
        Ok(Self::TTestTwoSided(TDistParams::from_effect_size(theta, n_samples)?))
    }

    pub fn eval(&self, p: f64) -> Result<f64> {
        check_probability("p", p)?;
        Ok(self.eval_unchecked(p))
    }

    pub(crate) fn eval_unchecked(&self, p: f64) -> f64 {
        match self {
            Self::Uniform => p,
            Self::TTestTwoSided(params) => ttest_pvalue_cdf(p, params),
            Self::Custom(table) => table.eval(p),
            Self::Complement(inner) => clamp_probability(1.0 - inner.eval_unchecked(1.0 - p)),
        }
    }
}

fn ttest_pvalue_cdf(p: f64, params: &TDistParams) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    if params.mu == 0.0 {
        return p;
    }
    let q = central_t_isf(0.5 * p, params.nu);
    clamp_probability(noncentral_t_sf(q, params) + noncentral_t_cdf(-q, params))
}

/// CDF of the two-sided one-sample t-test p-value when the statistic follows
/// `t(nu, mu)`: `F(p) = 1 - F_mu(q) + F_mu(-q)` with `q` the central
/// `1 - p/2` quantile.
pub fn alt_pvalue_cdf(p: f64, params: &TDistParams) -> Result<f64> {
    check_probability("p", p)?;
    Ok(ttest_pvalue_cdf(p, params))
}

/// `t -> 1 - F(1 - t)`. Involutive: complementing twice gives back `F`.
pub fn complement_cdf(f: &AltPValueCdf) -> AltPValueCdf {
    match f {
        AltPValueCdf::Uniform => AltPValueCdf::Uniform,
        AltPValueCdf::Custom(table) => AltPValueCdf::Custom(table.complement()),
        AltPValueCdf::Complement(inner) => (**inner).clone(),
        other => AltPValueCdf::Complement(Box::new(other.clone())),
    }
}
