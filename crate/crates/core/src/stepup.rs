//! Critical vectors, the step-up rule and the exact law of the number of
//! step-up rejections under the two-group independent model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, Error, Result};
use crate::numeric::{ln_pow, CompensatedSum, LnFactorials};
use crate::order_stats::{upper_survival_orderstat, ThresholdVector, TwoGroupSample};
use crate::pvalue_model::AltPValueCdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Linear, `t_i = lambda * i / m`.
    Bh,
    /// Linear, scaled by the harmonic number `H_m`.
    By,
    /// `t_i = i * lambda / (m + beta - i * (1 - lambda))`.
    Aorc,
    /// `t_i = lambda * (i / m)^beta`.
    Exp,
    Custom,
}

impl Family {
    pub fn has_beta(self) -> bool {
        matches!(self, Family::Aorc | Family::Exp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Bh => "bh",
            Family::By => "by",
            Family::Aorc => "aorc",
            Family::Exp => "exp",
            Family::Custom => "custom",
        }
    }

    /// Admissible `lambda` interval for `m` hypotheses.
    pub fn lambda_range(self, m: usize) -> (f64, f64) {
        match self {
            Family::By => (0.0, harmonic(m)),
            Family::Aorc => (0.0, f64::INFINITY),
            _ => (0.0, 1.0),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bh" => Ok(Family::Bh),
            "by" => Ok(Family::By),
            "aorc" => Ok(Family::Aorc),
            "exp" => Ok(Family::Exp),
            "custom" => Ok(Family::Custom),
            other => Err(Error::Parameter(format!("unknown family '{other}'"))),
        }
    }
}

fn harmonic(m: usize) -> f64 {
    (1..=m).map(|j| 1.0 / j as f64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl FamilyParams {
    pub fn linear(lambda: f64) -> Self {
        Self { lambda, beta: None }
    }

    pub fn shaped(lambda: f64, beta: f64) -> Self {
        Self {
            lambda,
            beta: Some(beta),
        }
    }
}

/// Thresholds `0 <= t_1 <= ... <= t_m <= 1` of a step-up test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalVector {
    values: Vec<f64>,
    family: Family,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<FamilyParams>,
}

fn validate_thresholds(values: &[f64]) -> Result<()> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidCriticalVector(format!(
            "t_{} = {v} is not in [0, 1]",
            i + 1
        )));
    }
    if let Some(i) = values.windows(2).position(|w| w[0] > w[1]) {
        return Err(Error::InvalidCriticalVector(format!(
            "t_{} = {} exceeds t_{} = {}",
            i + 1,
            values[i],
            i + 2,
            values[i + 1]
        )));
    }
    Ok(())
}

impl CriticalVector {
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        validate_thresholds(&values)?;
        Ok(Self {
            values,
            family: Family::Custom,
            params: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> Option<FamilyParams> {
        self.params
    }
}

/// Builds the critical vector of `family` at `params` for `m` hypotheses.
pub fn make_critical_vector(family: Family, params: FamilyParams, m: usize) -> Result<CriticalVector> {
    if m == 0 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    let lambda = params.lambda;
    let (lo, hi) = family.lambda_range(m);
    if family == Family::Custom {
        return Err(Error::Parameter(
            "custom critical vectors are built from explicit thresholds".into(),
        ));
    }
    if !(lambda >= lo && lambda <= hi) {
        return Err(Error::Parameter(format!(
            "lambda = {lambda} outside [{lo}, {hi}] for family {family}"
        )));
    }
    let beta = if family.has_beta() {
        let beta = params
            .beta
            .ok_or_else(|| Error::Parameter(format!("family {family} requires beta")))?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!("beta = {beta} must be finite and >= 0")));
        }
        Some(beta)
    } else {
        None
    };

    let mf = m as f64;
    let values: Vec<f64> = (1..=m)
        .map(|i| {
            let i = i as f64;
            match family {
                Family::Bh => i / mf * lambda,
                Family::By => (i / mf * lambda) / harmonic(m),
                Family::Aorc => {
                    if lambda == 0.0 {
                        0.0
                    } else {
                        // Grouped so that t_m is exactly 1 when beta = 0.
                        (i * lambda / ((mf + beta.unwrap() - i) + i * lambda)).min(1.0)
                    }
                }
                Family::Exp => lambda * (i / mf).powf(beta.unwrap()),
                Family::Custom => unreachable!(),
            }
        })
        .collect();
    validate_thresholds(&values)?;
    Ok(CriticalVector {
        values,
        family,
        params: Some(FamilyParams { lambda, beta }),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub r: usize,
    /// Indices (into the input) of the `r` smallest p-values, in rank order.
    /// Equal p-values are ranked by input position.
    pub rejected: Vec<usize>,
}

/// Step-up test: `r = max{i : p_(i) <= t_i}`, or 0 if no index qualifies.
pub fn stepup_reject(pvalues: &[f64], cv: &CriticalVector) -> Result<Rejection> {
    if pvalues.len() != cv.m() {
        return Err(Error::Dimension {
            expected: cv.m(),
            found: pvalues.len(),
        });
    }
    for &p in pvalues {
        check_probability("p-value", p)?;
    }
    let mut order: Vec<usize> = (0..pvalues.len()).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let r = order
        .iter()
        .zip(cv.values())
        .rposition(|(&idx, &t)| pvalues[idx] <= t)
        .map_or(0, |pos| pos + 1);
    order.truncate(r);
    Ok(Rejection { r, rejected: order })
}

/// Number of rejections only; avoids materialising the index set.
pub(crate) fn count_rejections(sorted_pvalues: &[f64], thresholds: &[f64]) -> usize {
    sorted_pvalues
        .iter()
        .zip(thresholds)
        .rposition(|(p, t)| p <= t)
        .map_or(0, |pos| pos + 1)
}

/// `m` hypotheses of which `m1_candidate` follow `f_alt`, the rest uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupModel {
    pub m: usize,
    pub m1_candidate: usize,
    pub f_alt: AltPValueCdf,
}

impl TwoGroupModel {
    pub fn new(m: usize, m1_candidate: usize, f_alt: AltPValueCdf) -> Result<Self> {
        if m1_candidate > m {
            return Err(Error::Parameter(format!(
                "candidate m1 = {m1_candidate} exceeds m = {m}"
            )));
        }
        Ok(Self {
            m,
            m1_candidate,
            f_alt,
        })
    }
}

/// `P(R = l)` for `l = 0..=m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionPmf {
    probs: Vec<f64>,
}

impl RejectionPmf {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Parameter("a pmf needs at least one cell".into()));
        }
        for &p in &probs {
            check_probability("pmf cell", p)?;
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn m(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        CompensatedSum::from_iter(self.probs.iter().copied()).value()
    }

    /// Cells in descending order of `l`, the order in which the scan
    /// produces them.
    pub fn descending(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().copied().enumerate().rev()
    }

    /// `P(R > l)`, summed from the top.
    pub fn tail_above(&self, l: usize) -> f64 {
        let mut acc = CompensatedSum::new();
        for (i, p) in self.descending() {
            if i <= l {
                break;
            }
            acc.add(p);
        }
        acc.value()
    }

    /// `P(R <= l)`, evaluated as `1 - P(R > l)`.
    pub fn cdf(&self, l: usize) -> f64 {
        1.0 - self.tail_above(l)
    }

    pub fn mean(&self) -> f64 {
        CompensatedSum::from_iter(self.probs.iter().enumerate().map(|(l, p)| l as f64 * p)).value()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        CompensatedSum::from_iter(
            self.probs
                .iter()
                .enumerate()
                .map(|(l, p)| (l as f64 - mean).powi(2) * p),
        )
        .value()
        .max(0.0)
    }
}

/// `(E[R gamma*], Var[R gamma*])`.
pub fn rejection_moments(pmf: &RejectionPmf, gamma_star: f64) -> (f64, f64) {
    (gamma_star * pmf.mean(), gamma_star * gamma_star * pmf.variance())
}

/// Thresholds of a critical vector together with the alternative CDF at
/// each threshold; everything the law of `R` depends on.
#[derive(Debug, Clone)]
pub struct RejectionLaw {
    t: Vec<f64>,
    f: Vec<f64>,
    ln_fact: LnFactorials,
}

impl RejectionLaw {
    pub fn new(cv: &CriticalVector, f_alt: &AltPValueCdf) -> Self {
        let t = cv.values().to_vec();
        let mut f: Vec<f64> = t.iter().map(|&x| f_alt.eval_unchecked(x)).collect();
        // A CDF is monotone; enforce it against last-digit noise.
        for i in 1..f.len() {
            if f[i] < f[i - 1] {
                f[i] = f[i - 1];
            }
        }
        let ln_fact = LnFactorials::new(t.len());
        Self { t, f, ln_fact }
    }

    pub fn m(&self) -> usize {
        self.t.len()
    }

    /// Iterator over `(l, P(R = l))` for `l = m, m-1, ..., 0` when `m1` of
    /// the `m` p-values follow the alternative.
    pub fn scan(&self, m1: usize) -> DescendingScan<'_> {
        assert!(m1 <= self.m(), "m1 = {m1} exceeds m = {}", self.m());
        DescendingScan::new(self, m1)
    }

    pub fn pmf(&self, m1: usize) -> RejectionPmf {
        let mut probs = vec![0.0; self.m() + 1];
        for (l, p) in self.scan(m1) {
            probs[l] = p;
        }
        RejectionPmf { probs }
    }
}

/// Walks the thresholds from `t_m` down to `t_1`, tracking how many null
/// and alternative p-values lie strictly above the current threshold.
///
/// With `U_i` the number of p-values above `t_i`, the step-up test stops at
/// the first `i` (from the top) with `U_i = m - i`; reaching it emits
/// `P(R = i)` and removes that mass. Between thresholds, each p-value at or
/// below `t_{i+1}` moves above `t_i` independently with its conditional
/// probability, which makes the update two binomial convolutions over
/// non-negative terms.
pub struct DescendingScan<'a> {
    law: &'a RejectionLaw,
    m0: usize,
    m1: usize,
    /// Mass of `(u0, u1)` at `u0 * (m1 + 1) + u1`.
    mass: Vec<f64>,
    scratch: Vec<f64>,
    /// Per `u0`, the inclusive `u1` range holding non-zero mass; empty when
    /// `lo > hi`.
    support: Vec<(usize, usize)>,
    scratch_support: Vec<(usize, usize)>,
    windows0: BinomialWindows,
    windows1: BinomialWindows,
    next_index: usize,
    prev_t: f64,
    prev_f: f64,
    finished: bool,
}

/// Masses below this are dropped. The total mass discarded over a scan is
/// below `m^3 * FLUSH`, far under any accuracy that matters here.
const FLUSH: f64 = 1e-30;

/// Binomial weights below this are skipped, with the same effect.
const NEGLIGIBLE: f64 = 1e-30;

const EMPTY: (usize, usize) = (1, 0);

/// Rows of `Bin(d, q)` for a fixed `q`, built on demand and truncated to the
/// weights of at least `NEGLIGIBLE`. Each row is grown outward from its
/// mode with the ratio recurrence, so every term is a positive product.
struct BinomialWindows {
    q: f64,
    epoch: u32,
    stamp: Vec<u32>,
    lo: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl BinomialWindows {
    fn new(n: usize) -> Self {
        Self {
            q: 0.0,
            epoch: 0,
            stamp: vec![u32::MAX; n + 1],
            lo: vec![0; n + 1],
            rows: vec![Vec::new(); n + 1],
        }
    }

    fn reset(&mut self, q: f64) {
        self.q = q;
        self.epoch = self.epoch.wrapping_add(1);
    }

    /// `(first index, weights)` of row `d`.
    fn row(&mut self, d: usize, lf: &LnFactorials) -> (usize, &[f64]) {
        if self.stamp[d] != self.epoch {
            self.stamp[d] = self.epoch;
            self.lo[d] = fill_binomial_window(d, self.q, lf, &mut self.rows[d]);
        }
        (self.lo[d], &self.rows[d])
    }
}

fn fill_binomial_window(d: usize, q: f64, lf: &LnFactorials, out: &mut Vec<f64>) -> usize {
    out.clear();
    if q <= 0.0 || d == 0 {
        out.push(1.0);
        return 0;
    }
    if q >= 1.0 {
        out.push(1.0);
        return d;
    }
    let ratio = q / (1.0 - q);
    let mode = (((d + 1) as f64 * q).floor() as usize).min(d);
    let ln_mode = lf.ln_choose(d, mode) + ln_pow(q, mode) + (d - mode) as f64 * (-q).ln_1p();
    let peak = ln_mode.exp();
    let mut p = peak;
    let mut x = mode;
    while x > 0 {
        p *= x as f64 / ((d - x + 1) as f64 * ratio);
        if p < NEGLIGIBLE {
            break;
        }
        out.push(p);
        x -= 1;
    }
    let lo = mode - out.len();
    out.reverse();
    out.push(peak);
    let mut p = peak;
    let mut x = mode;
    while x < d {
        p *= (d - x) as f64 / (x + 1) as f64 * ratio;
        if p < NEGLIGIBLE {
            break;
        }
        out.push(p);
        x += 1;
    }
    lo
}

fn widen(range: &mut (usize, usize), lo: usize, hi: usize) {
    if range.0 > range.1 {
        *range = (lo, hi);
    } else {
        range.0 = range.0.min(lo);
        range.1 = range.1.max(hi);
    }
}

fn conditional_drop(prev: f64, current: f64) -> f64 {
    if prev > 0.0 {
        ((prev - current) / prev).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

impl<'a> DescendingScan<'a> {
    fn new(law: &'a RejectionLaw, m1: usize) -> Self {
        let m = law.m();
        let m0 = m - m1;
        let mut mass = vec![0.0; (m0 + 1) * (m1 + 1)];
        mass[0] = 1.0;
        let mut support = vec![EMPTY; m0 + 1];
        support[0] = (0, 0);
        Self {
            law,
            m0,
            m1,
            mass,
            scratch: vec![0.0; (m0 + 1) * (m1 + 1)],
            support,
            scratch_support: vec![EMPTY; m0 + 1],
            windows0: BinomialWindows::new(m0),
            windows1: BinomialWindows::new(m1),
            next_index: m,
            prev_t: 1.0,
            prev_f: 1.0,
            finished: false,
        }
    }

    fn step(&mut self, i: usize) -> f64 {
        let (m0, m1) = (self.m0, self.m1);
        let w1 = m1 + 1;
        let ti = self.law.t[i - 1];
        let fi = self.law.f[i - 1];
        let q0 = conditional_drop(self.prev_t, ti);
        let q1 = conditional_drop(self.prev_f, fi);
        self.prev_t = ti;
        self.prev_f = fi;
        let stop = m0 + m1 - i;

        // Nulls: row u0 spreads to rows u0 + x with Bin(m0 - u0, q0).
        let law = self.law;
        let lf = &law.ln_fact;
        self.windows0.reset(q0);
        for u0 in 0..=m0 {
            let (a, b) = self.scratch_support[u0];
            if a <= b {
                self.scratch[u0 * w1 + a..=u0 * w1 + b].fill(0.0);
            }
            self.scratch_support[u0] = EMPTY;
        }
        for u0 in 0..=m0 {
            let (a, b) = self.support[u0];
            if a > b {
                continue;
            }
            let (lo, row) = self.windows0.row(m0 - u0, lf);
            let src = &self.mass[u0 * w1 + a..=u0 * w1 + b];
            for (k, &coef) in row.iter().enumerate() {
                let t = u0 + lo + k;
                let dst = &mut self.scratch[t * w1 + a..=t * w1 + b];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += coef * s;
                }
                widen(&mut self.scratch_support[t], a, b);
            }
        }

        // Alternatives: within each row, u1 spreads to u1 + x with
        // Bin(m1 - u1, q1). Then absorb U = m - i and drop negligible mass.
        self.windows1.reset(q1);
        let mut absorbed = CompensatedSum::new();
        for u0 in 0..=m0 {
            let (a, b) = self.support[u0];
            if a <= b {
                self.mass[u0 * w1 + a..=u0 * w1 + b].fill(0.0);
            }
            self.support[u0] = EMPTY;
            let (a, b) = self.scratch_support[u0];
            if a > b {
                continue;
            }
            let src = &self.scratch[u0 * w1..(u0 + 1) * w1];
            let dst = &mut self.mass[u0 * w1..(u0 + 1) * w1];
            let mut reach = EMPTY;
            for u1 in a..=b {
                let w = src[u1];
                if w == 0.0 {
                    continue;
                }
                let (lo, row) = self.windows1.row(m1 - u1, lf);
                let hi = lo + row.len() - 1;
                for (d, &coef) in dst[u1 + lo..=u1 + hi].iter_mut().zip(row) {
                    *d += coef * w;
                }
                widen(&mut reach, u1 + lo, u1 + hi);
            }
            if reach.0 > reach.1 {
                continue;
            }
            if stop >= u0 && stop - u0 >= reach.0 && stop - u0 <= reach.1 {
                let cell = &mut dst[stop - u0];
                absorbed.add(*cell);
                *cell = 0.0;
            }
            let mut kept = EMPTY;
            for u1 in reach.0..=reach.1 {
                if dst[u1] < FLUSH {
                    dst[u1] = 0.0;
                } else {
                    widen(&mut kept, u1, u1);
                }
            }
            self.support[u0] = kept;
        }
        absorbed.value()
    }
}

impl Iterator for DescendingScan<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        if self.finished {
            return None;
        }
        let i = self.next_index;
        if i == 0 {
            self.finished = true;
            let rest = CompensatedSum::from_iter(self.mass.iter().copied()).value();
            return Some((0, rest.clamp(0.0, 1.0)));
        }
        let p = self.step(i);
        self.next_index -= 1;
        Some((i, p.clamp(0.0, 1.0)))
    }
}

/// Exact law of `R` under the two-group model.
pub fn rejection_pmf(model: &TwoGroupModel, cv: &CriticalVector) -> Result<RejectionPmf> {
    if model.m != cv.m() {
        return Err(Error::Dimension {
            expected: model.m,
            found: cv.m(),
        });
    }
    Ok(RejectionLaw::new(cv, &model.f_alt).pmf(model.m1_candidate))
}

/// The same law assembled term by term: for each `l`, sum over the number
/// `j` of rejected nulls of the probability that exactly those p-values sit
/// at or below `t_l` times the joint survival of the remaining ones above
/// `t_{l+1}, ..., t_m`. Cost grows like `m^5`; meant for moderate `m` and
/// as an independent check of [`rejection_pmf`].
pub fn rejection_pmf_via_survival(model: &TwoGroupModel, cv: &CriticalVector) -> Result<RejectionPmf> {
    let m = model.m;
    if m != cv.m() {
        return Err(Error::Dimension {
            expected: m,
            found: cv.m(),
        });
    }
    let m1 = model.m1_candidate;
    let m0 = m - m1;
    let t = cv.values();
    let lf = LnFactorials::new(m);
    let mut probs = Vec::with_capacity(m + 1);
    for l in 0..=m {
        let (tl, fl) = if l == 0 {
            (0.0, 0.0)
        } else {
            (t[l - 1], model.f_alt.eval_unchecked(t[l - 1]))
        };
        let tail = ThresholdVector::new(t[l..].to_vec())?;
        let mut acc = CompensatedSum::new();
        for j in l.saturating_sub(m1)..=l.min(m0) {
            let ln_coef = lf.ln_choose(m0, j) + lf.ln_choose(m1, l - j) + ln_pow(tl, j) + ln_pow(fl, l - j);
            if ln_coef == f64::NEG_INFINITY {
                continue;
            }
            let sample = TwoGroupSample::new(m0 - j, crate::pvalue_model::AltPValueCdf::Uniform, m1 + j - l, model.f_alt.clone());
            let survival = upper_survival_orderstat(&sample, &tail)?;
            acc.add(ln_coef.exp() * survival);
        }
        probs.push(acc.value().clamp(0.0, 1.0));
    }
    Ok(RejectionPmf { probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pvalue_model::TDistParams;

    fn f_alt() -> AltPValueCdf {
        AltPValueCdf::TTestTwoSided(TDistParams::new(49, 4.0).unwrap())
    }

    #[test]
    fn bh_endpoints() {
        let cv = make_critical_vector(Family::Bh, FamilyParams::linear(0.05), 100).unwrap();
        assert!((cv.values()[0] - 0.0005).abs() < 1e-18);
        assert!((cv.values()[99] - 0.05).abs() < 1e-17);
    }

    #[test]
    fn exp_with_unit_beta_is_bh() {
        let bh = make_critical_vector(Family::Bh, FamilyParams::linear(0.05), 100).unwrap();
        let ex = make_critical_vector(Family::Exp, FamilyParams::shaped(0.05, 1.0), 100).unwrap();
        for (a, b) in bh.values().iter().zip(ex.values()) {
            assert!((a - b).abs() < 1e-17);
        }
    }

    #[test]
    fn aorc_direct_value() {
        let cv = make_critical_vector(Family::Aorc, FamilyParams::shaped(0.1, 1.0), 100).unwrap();
        assert!((cv.values()[49] - 5.0 / 56.0).abs() < 1e-15);
    }

    #[test]
    fn aorc_zero_lambda_zero_beta_is_all_zero() {
        let cv = make_critical_vector(Family::Aorc, FamilyParams::shaped(0.0, 0.0), 10).unwrap();
        assert!(cv.values().iter().all(|&t| t == 0.0));
    }

    #[test]
    fn by_is_bh_over_harmonic() {
        let by = make_critical_vector(Family::By, FamilyParams::linear(1.0), 4).unwrap();
        let h = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
        assert!((by.values()[3] - 1.0 / h).abs() < 1e-15);
        assert!(make_critical_vector(Family::By, FamilyParams::linear(h + 0.01), 4).is_err());
    }

    #[test]
    fn parameter_ranges_are_enforced() {
        assert!(make_critical_vector(Family::Bh, FamilyParams::linear(1.5), 5).is_err());
        assert!(make_critical_vector(Family::Bh, FamilyParams::linear(-0.1), 5).is_err());
        assert!(make_critical_vector(Family::Exp, FamilyParams::linear(0.1), 5).is_err());
        assert!(make_critical_vector(Family::Exp, FamilyParams::shaped(0.1, -1.0), 5).is_err());
        assert!(make_critical_vector(Family::Aorc, FamilyParams::shaped(-0.1, 1.0), 5).is_err());
        assert!(CriticalVector::custom(vec![0.2, 0.1]).is_err());
        assert!(CriticalVector::custom(vec![0.2, 1.1]).is_err());
    }

    #[test]
    fn stepup_hand_cases() {
        let cv = CriticalVector::custom(vec![0.02, 0.03, 0.05]).unwrap();
        let rej = stepup_reject(&[0.01, 0.04, 0.9], &cv).unwrap();
        assert_eq!(rej.r, 1);
        assert_eq!(rej.rejected, vec![0]);
        assert_eq!(stepup_reject(&[0.5, 0.6, 0.7], &cv).unwrap().r, 0);
        let all = stepup_reject(&[0.01, 0.0, 0.02], &cv).unwrap();
        assert_eq!(all.r, 3);
        assert_eq!(all.rejected, vec![1, 0, 2]);
        assert!(stepup_reject(&[0.1], &cv).is_err());
        assert!(stepup_reject(&[0.1, 0.2, 1.2], &cv).is_err());
    }

    #[test]
    fn stepup_ties_follow_input_order() {
        let cv = CriticalVector::custom(vec![0.1, 0.1, 0.1]).unwrap();
        let rej = stepup_reject(&[0.05, 0.5, 0.05], &cv).unwrap();
        assert_eq!(rej.r, 2);
        assert_eq!(rej.rejected, vec![0, 2]);
    }

    #[test]
    fn single_hypothesis_laws() {
        let cv = CriticalVector::custom(vec![0.3]).unwrap();
        let null = rejection_pmf(&TwoGroupModel::new(1, 0, f_alt()).unwrap(), &cv).unwrap();
        assert!((null.probs()[1] - 0.3).abs() < 1e-15);
        assert!((null.probs()[0] - 0.7).abs() < 1e-15);
        let alt = rejection_pmf(&TwoGroupModel::new(1, 1, f_alt()).unwrap(), &cv).unwrap();
        let f = f_alt().eval(0.3).unwrap();
        assert!((alt.probs()[1] - f).abs() < 1e-15);
    }

    #[test]
    fn two_nulls_closed_form() {
        let (t1, t2) = (0.1, 0.2);
        let cv = CriticalVector::custom(vec![t1, t2]).unwrap();
        let pmf = rejection_pmf(&TwoGroupModel::new(2, 0, f_alt()).unwrap(), &cv).unwrap();
        let p2 = t2 * t2;
        let p1 = 2.0 * t1 * (1.0 - t2);
        assert!((pmf.probs()[2] - p2).abs() < 1e-15);
        assert!((pmf.probs()[1] - p1).abs() < 1e-15);
        assert!((pmf.probs()[0] - (1.0 - p2 - p1)).abs() < 1e-15);
        let (mean, var) = rejection_moments(&pmf, 1.0);
        let exp_mean = p1 + 2.0 * p2;
        let exp_var = p1 + 4.0 * p2 - exp_mean * exp_mean;
        assert!((mean - exp_mean).abs() < 1e-15);
        assert!((var - exp_var).abs() < 1e-15);
    }

    #[test]
    fn moments_degenerate_and_scaling() {
        let mut probs = vec![0.0; 8];
        probs[5] = 1.0;
        let pmf = RejectionPmf::from_probs(probs).unwrap();
        assert_eq!(rejection_moments(&pmf, 1.0), (5.0, 0.0));
        assert_eq!(rejection_moments(&pmf, 0.0), (0.0, 0.0));
    }

    #[test]
    fn zero_thresholds_never_reject() {
        let cv = CriticalVector::custom(vec![0.0; 6]).unwrap();
        let pmf = rejection_pmf(&TwoGroupModel::new(6, 3, f_alt()).unwrap(), &cv).unwrap();
        assert_eq!(pmf.probs()[0], 1.0);
        assert_eq!(pmf.tail_above(0), 0.0);
    }

    #[test]
    fn all_null_law_ignores_alternative() {
        let cv = make_critical_vector(Family::Bh, FamilyParams::linear(0.3), 12).unwrap();
        let a = rejection_pmf(&TwoGroupModel::new(12, 0, f_alt()).unwrap(), &cv).unwrap();
        let b = rejection_pmf(&TwoGroupModel::new(12, 0, AltPValueCdf::Uniform).unwrap(), &cv).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fast_and_survival_routes_agree() {
        let cv = make_critical_vector(Family::Aorc, FamilyParams::shaped(0.2, 1.0), 7).unwrap();
        for m1 in 0..=7 {
            let model = TwoGroupModel::new(7, m1, f_alt()).unwrap();
            let fast = rejection_pmf(&model, &cv).unwrap();
            let slow = rejection_pmf_via_survival(&model, &cv).unwrap();
            for (a, b) in fast.probs().iter().zip(slow.probs()) {
                assert!((a - b).abs() < 1e-12, "m1={m1}: {a} vs {b}");
            }
        }
    }
}
