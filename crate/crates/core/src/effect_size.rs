//! Effect-size estimation from t-statistics: select the statistics passing
//! a threshold, then correct the mean of the selected values for the bias of
//! the noncentral t mean.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_probability, Error, Result};
use crate::numeric::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Keep `t_i` at or above the empirical `omega`-quantile of all t-values.
    TQuantile(f64),
    /// Keep p-values at or below a fixed cut-off.
    FixedP(f64),
    /// `h = a / m`.
    Bonferroni(f64),
    /// `h = 1 - (1 - a)^(1/m)`.
    Sidak(f64),
}

impl ThresholdRule {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            ThresholdRule::TQuantile(v)
            | ThresholdRule::FixedP(v)
            | ThresholdRule::Bonferroni(v)
            | ThresholdRule::Sidak(v) => v,
        };
        if v > 0.0 && v < 1.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!("threshold parameter {v} is not in (0, 1)")))
        }
    }

    /// P-value cut-off for `m` hypotheses; `None` for the quantile rule,
    /// which works on the t-values.
    pub fn p_threshold(&self, m: usize) -> Option<f64> {
        let m = m as f64;
        match *self {
            ThresholdRule::TQuantile(_) => None,
            ThresholdRule::FixedP(c) => Some(c),
            ThresholdRule::Bonferroni(a) => Some(a / m),
            ThresholdRule::Sidak(a) => Some(-((-a).ln_1p() / m).exp_m1()),
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::TQuantile(v) => write!(f, "quantile:{v}"),
            ThresholdRule::FixedP(v) => write!(f, "fixed:{v}"),
            ThresholdRule::Bonferroni(v) => write!(f, "bonferroni:{v}"),
            ThresholdRule::Sidak(v) => write!(f, "sidak:{v}"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    /// `quantile:0.9`, `fixed:0.001`, `bonferroni:0.05` or `sidak:0.05`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::Parameter(format!("threshold '{s}' is not of the form kind:value")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Parameter(format!("threshold value '{value}' is not a number")))?;
        let rule = match kind.trim().to_ascii_lowercase().as_str() {
            "quantile" => ThresholdRule::TQuantile(value),
            "fixed" => ThresholdRule::FixedP(value),
            "bonferroni" => ThresholdRule::Bonferroni(value),
            "sidak" => ThresholdRule::Sidak(value),
            other => return Err(Error::Parameter(format!("unknown threshold kind '{other}'"))),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// Type-7 empirical quantile (linear interpolation between order
/// statistics).
pub fn empirical_quantile(values: &[f64], omega: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter("quantile of an empty sample".into()));
    }
    check_probability("quantile level", omega)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * omega;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn select_statistics(tvalues: &[f64], pvalues: &[f64], rule: &ThresholdRule) -> Result<Vec<f64>> {
    if tvalues.len() != pvalues.len() {
        return Err(Error::Dimension {
            expected: tvalues.len(),
            found: pvalues.len(),
        });
    }
    rule.validate()?;
    for &p in pvalues {
        check_probability("p-value", p)?;
    }
    if tvalues.is_empty() {
        return Ok(Vec::new());
    }
    let selected = match rule.p_threshold(tvalues.len()) {
        Some(h) => tvalues
            .iter()
            .zip(pvalues)
            .filter(|(_, &p)| p <= h)
            .map(|(&t, _)| t)
            .collect(),
        None => {
            let ThresholdRule::TQuantile(omega) = *rule else {
                unreachable!()
            };
            let q = empirical_quantile(tvalues, omega)?;
            tvalues.iter().copied().filter(|&t| t >= q).collect()
        }
    };
    Ok(selected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeEstimate {
    pub theta_hat: f64,
    pub mu_hat: f64,
    pub n_selected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<ThresholdRule>,
    pub n_samples: u32,
    pub nu: u32,
}

/// `Gamma(nu / 2) / Gamma((nu - 1) / 2)`, via log-gamma. Zero at `nu = 1`,
/// where the noncentral t has no mean.
fn gamma_ratio(nu: f64) -> f64 {
    if nu <= 1.0 {
        return 0.0;
    }
    (ln_gamma(nu / 2.0) - ln_gamma((nu - 1.0) / 2.0)).exp()
}

/// `mu_hat = q_bar sqrt(2 / nu) Gamma(nu/2) / Gamma((nu-1)/2)` and
/// `theta_hat = mu_hat sqrt(2 / N)`, with `nu = N - 1`. An empty selection
/// gives zero.
pub fn estimate_theta(selected: &[f64], n_samples: u32) -> Result<EffectSizeEstimate> {
    if n_samples < 2 {
        return Err(Error::Parameter(format!("sample size {n_samples} must be at least 2")));
    }
    let nu = n_samples - 1;
    let (mu_hat, theta_hat) = if selected.is_empty() {
        (0.0, 0.0)
    } else {
        let q_bar = compensated_sum(selected.iter().copied()) / selected.len() as f64;
        let mu = q_bar * (2.0 / nu as f64).sqrt() * gamma_ratio(nu as f64);
        (mu, mu * (2.0 / n_samples as f64).sqrt())
    };
    Ok(EffectSizeEstimate {
        theta_hat,
        mu_hat,
        n_selected: selected.len(),
        rule: None,
        n_samples,
        nu,
    })
}

/// Selects with `rule` and estimates.
pub fn estimate_with_rule(
    tvalues: &[f64],
    pvalues: &[f64],
    rule: &ThresholdRule,
    n_samples: u32,
) -> Result<EffectSizeEstimate> {
    let selected = select_statistics(tvalues, pvalues, rule)?;
    let mut est = estimate_theta(&selected, n_samples)?;
    est.rule = Some(*rule);
    Ok(est)
}

/// Fallbacks for small pilot samples: when a rule selects nothing, try the
/// next one; a final estimate below `floor_below` in absolute value is
/// replaced by `replacement`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackPolicy {
    pub escalation: Vec<ThresholdRule>,
    pub floor_below: f64,
    pub replacement: f64,
}

impl Default for FallbackPolicy {
    fn default() -> Self {
        Self {
            escalation: Vec::new(),
            floor_below: 0.4,
            replacement: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackOutcome {
    pub estimate: EffectSizeEstimate,
    /// Rules tried, in order, before one selected something.
    pub tried: Vec<ThresholdRule>,
    pub replaced: bool,
}

pub fn estimate_with_fallback(
    tvalues: &[f64],
    pvalues: &[f64],
    rule: &ThresholdRule,
    n_samples: u32,
    policy: &FallbackPolicy,
) -> Result<FallbackOutcome> {
    let mut tried = Vec::new();
    let mut estimate = estimate_with_rule(tvalues, pvalues, rule, n_samples)?;
    tried.push(*rule);
    for next in &policy.escalation {
        if estimate.n_selected > 0 {
            break;
        }
        estimate = estimate_with_rule(tvalues, pvalues, next, n_samples)?;
        tried.push(*next);
    }
    let replaced = estimate.theta_hat.abs() < policy.floor_below;
    if replaced {
        estimate.theta_hat = policy.replacement;
        estimate.mu_hat = policy.replacement * (n_samples as f64 / 2.0).sqrt();
    }
    Ok(FallbackOutcome {
        estimate,
        tried,
        replaced,
    })
}

/// Random disjoint index sets of sizes `n_estimate` and `n_bound` drawn
/// from `0..n_total`, each sorted.
pub fn split_samples(n_total: usize, n_estimate: usize, n_bound: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_estimate + n_bound > n_total {
        return Err(Error::Parameter(format!(
            "split {n_estimate} + {n_bound} exceeds {n_total} subjects"
        )));
    }
    let mut idx: Vec<usize> = (0..n_total).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut est = idx[..n_estimate].to_vec();
    let mut bnd = idx[n_estimate..n_estimate + n_bound].to_vec();
    est.sort_unstable();
    bnd.sort_unstable();
    Ok((est, bnd))
}
