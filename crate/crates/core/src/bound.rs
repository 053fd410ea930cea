//! Shrinkage factors `gamma_{m1}`, their minimum `gamma*`, and the lower
//! confidence bound `ceil(r * gamma*)` for the number of true discoveries.
//!
//! Throughout, `P(R <= l)` is evaluated as `1 - P(R > l)` with the upper
//! tail summed from `l = m` downwards. A scan that stops early therefore
//! produces exactly the same numbers as one that runs to the end.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, Error, Result};
use crate::numeric::CompensatedSum;
use crate::pvalue_model::AltPValueCdf;
use crate::stepup::{stepup_reject, CriticalVector, RejectionLaw};

/// A shrinkage factor stored as the exact fraction `num / den`, not
/// reduced. Equality and order compare values.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Shrinkage {
    num: u64,
    den: u64,
}

impl Shrinkage {
    pub const ZERO: Shrinkage = Shrinkage { num: 0, den: 1 };
    pub const ONE: Shrinkage = Shrinkage { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::Parameter(format!("{num}/{den} is not in [0, 1]")));
        }
        Ok(Self { num, den })
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `ceil(r * num / den)` in integer arithmetic.
    pub fn ceil_mul(&self, r: u64) -> u64 {
        (r * self.num).div_ceil(self.den)
    }

    /// `self >= target` up to a slack of `1e-9`.
    pub fn reaches(&self, target: f64) -> bool {
        self.num as f64 >= (target - 1e-9) * self.den as f64
    }
}

impl PartialEq for Shrinkage {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Shrinkage {}

impl Ord for Shrinkage {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl PartialOrd for Shrinkage {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Shrinkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTable {
    pub alpha: f64,
    /// `gamma_{m1}` for `m1 = 0..=m`. Shorter when the sweep was cut short.
    pub gammas: Vec<Shrinkage>,
    pub gamma_star: Shrinkage,
    /// `l_{m1}`; `None` for `m1 = 0`.
    pub ell: Vec<Option<usize>>,
    /// False when the sweep stopped after `gamma_0 = 0`.
    pub complete: bool,
}

impl GammaTable {
    pub fn m(&self) -> usize {
        self.ell.len().max(self.gammas.len()) - 1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaOptions {
    /// Stop the sweep once the running minimum is zero. Only `gamma_0` can
    /// be zero, so this skips every other candidate when it is.
    pub short_circuit_at_zero: bool,
}

/// `gamma_0` from a descending scan of the all-null law.
pub(crate) fn gamma_zero<I: Iterator<Item = (usize, f64)>>(scan: I, alpha: f64) -> Shrinkage {
    let tail = CompensatedSum::from_iter(scan.filter(|&(l, _)| l > 0).map(|(_, p)| p));
    if 1.0 - tail.value() >= 1.0 - alpha {
        Shrinkage::ONE
    } else {
        Shrinkage::ZERO
    }
}

/// `l_{m1} = min{l >= m1 : P(R <= l) >= 1 - alpha}` from a descending scan.
/// `P(R <= l)` only decreases as `l` falls, so the scan stops at the first
/// failure.
pub(crate) fn ell_from_scan<I: Iterator<Item = (usize, f64)>>(scan: I, m: usize, m1: usize, alpha: f64) -> usize {
    debug_assert!(m1 >= 1);
    let mut tail = CompensatedSum::new();
    let mut ell = m;
    for (l, p) in scan {
        if l < m1 || 1.0 - tail.value() < 1.0 - alpha {
            break;
        }
        ell = l;
        tail.add(p);
    }
    ell
}

fn gamma_from_law(law: &RejectionLaw, m1: usize, alpha: f64) -> (Shrinkage, Option<usize>) {
    if m1 == 0 {
        (gamma_zero(law.scan(0), alpha), None)
    } else {
        let ell = ell_from_scan(law.scan(m1), law.m(), m1, alpha);
        (
            Shrinkage {
                num: m1 as u64,
                den: ell as u64,
            },
            Some(ell),
        )
    }
}

/// `(gamma_{m1}, l_{m1})`.
pub fn gamma_for(
    m1_candidate: usize,
    f_alt: &AltPValueCdf,
    cv: &CriticalVector,
    alpha: f64,
) -> Result<(Shrinkage, Option<usize>)> {
    check_alpha(alpha)?;
    if m1_candidate > cv.m() {
        return Err(Error::Parameter(format!(
            "candidate m1 = {m1_candidate} exceeds m = {}",
            cv.m()
        )));
    }
    Ok(gamma_from_law(&RejectionLaw::new(cv, f_alt), m1_candidate, alpha))
}

/// Full table of `gamma_{m1}` and their minimum.
pub fn gamma_star(f_alt: &AltPValueCdf, cv: &CriticalVector, m: usize, alpha: f64) -> Result<GammaTable> {
    gamma_star_with(f_alt, cv, m, alpha, GammaOptions::default())
}

pub fn gamma_star_with(
    f_alt: &AltPValueCdf,
    cv: &CriticalVector,
    m: usize,
    alpha: f64,
    options: GammaOptions,
) -> Result<GammaTable> {
    check_alpha(alpha)?;
    if m != cv.m() {
        return Err(Error::Dimension {
            expected: m,
            found: cv.m(),
        });
    }
    Ok(gamma_table_for_law(&RejectionLaw::new(cv, f_alt), alpha, options))
}

pub(crate) fn gamma_table_for_law(law: &RejectionLaw, alpha: f64, options: GammaOptions) -> GammaTable {
    let m = law.m();
    let g0 = gamma_from_law(law, 0, alpha).0;
    if options.short_circuit_at_zero && g0 == Shrinkage::ZERO {
        return GammaTable {
            alpha,
            gammas: vec![g0],
            gamma_star: g0,
            ell: vec![None],
            complete: false,
        };
    }
    let rest: Vec<(Shrinkage, Option<usize>)> = (1..=m)
        .into_par_iter()
        .map(|m1| gamma_from_law(law, m1, alpha))
        .collect();
    let mut gammas = vec![g0];
    let mut ell = vec![None];
    for (g, l) in rest {
        gammas.push(g);
        ell.push(l);
    }
    let gamma_star = *gammas.iter().min().unwrap();
    GammaTable {
        alpha,
        gammas,
        gamma_star,
        ell,
        complete: true,
    }
}

/// Largest `l` in `[m1, m]` with `m1 / l` reaching `target`, or `None` when
/// even `l = m1` falls short.
fn largest_admissible_ell(m1: usize, m: usize, target: f64) -> Option<usize> {
    let reaches = |l: usize| Shrinkage { num: m1 as u64, den: l as u64 }.reaches(target);
    if !reaches(m1) {
        return None;
    }
    let guess = ((m1 as f64 / (target - 1e-9).max(f64::MIN_POSITIVE)).floor() as usize).clamp(m1, m);
    let mut l = guess;
    while l < m && reaches(l + 1) {
        l += 1;
    }
    while !reaches(l) {
        l -= 1;
    }
    Some(l)
}

/// Continuous margin of `gamma* >= target`: the minimum over candidates of
/// `P(R <= L) - (1 - alpha)`, where `L` is the largest admissible `l_{m1}`
/// for the target (`L = 0` for `m1 = 0`). Non-negative exactly when the
/// table of the same law reaches the target.
pub(crate) fn target_slack(law: &RejectionLaw, target: f64, alpha: f64) -> f64 {
    let m = law.m();
    let slack_at = |m1: usize| -> f64 {
        let ell = if m1 == 0 { Some(0) } else { largest_admissible_ell(m1, m, target) };
        let Some(ell) = ell else {
            return -1.0;
        };
        if ell == m {
            return alpha;
        }
        let mut tail = CompensatedSum::new();
        for (l, p) in law.scan(m1) {
            if l <= ell {
                break;
            }
            tail.add(p);
        }
        (1.0 - tail.value()) - (1.0 - alpha)
    };
    (0..=m)
        .into_par_iter()
        .map(slack_at)
        .reduce(|| f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub r: usize,
    pub gamma_star: Shrinkage,
    /// Lower confidence bound for the number of true discoveries.
    pub m1_hat: usize,
    /// `m1_hat / m`.
    pub tdp_hat: f64,
    /// Upper confidence bound for the number of true nulls, `m - m1_hat`.
    pub m0_hat: usize,
    pub table: GammaTable,
}

/// Bound for `r` observed rejections given a precomputed table.
pub fn bound_from_table(r: usize, m: usize, table: &GammaTable) -> BoundResult {
    let m1_hat = table.gamma_star.ceil_mul(r as u64) as usize;
    BoundResult {
        r,
        gamma_star: table.gamma_star,
        m1_hat,
        tdp_hat: m1_hat as f64 / m as f64,
        m0_hat: m - m1_hat,
        table: table.clone(),
    }
}

/// Runs the step-up test on `pvalues` and shrinks its rejection count by
/// `gamma*`.
pub fn compute_bound(pvalues: &[f64], cv: &CriticalVector, f_alt: &AltPValueCdf, alpha: f64) -> Result<BoundResult> {
    let rejection = stepup_reject(pvalues, cv)?;
    let table = gamma_star(f_alt, cv, cv.m(), alpha)?;
    Ok(bound_from_table(rejection.r, cv.m(), &table))
}
