//! Choosing a critical vector from a family: largest `lambda` reaching a
//! target `gamma*`, and for two-parameter families a choice of `beta` by
//! the summed expected bound with the summed variance as tie-breaker.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{gamma_table_for_law, target_slack, GammaOptions, GammaTable, Shrinkage};
use crate::error::{check_alpha, Error, Result};
use crate::numeric::CompensatedSum;
use crate::pvalue_model::AltPValueCdf;
use crate::stepup::{make_critical_vector, rejection_moments, CriticalVector, Family, FamilyParams, RejectionLaw};

pub const DEFAULT_BETA_GRID: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];

/// Exp grid: the default grid refined around `beta = 1`, where the summed
/// variance is flat and the tie-breaker decides.
pub const EXP_BETA_GRID: [f64; 13] = [0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 1.0, 1.05, 1.1, 1.25, 1.5, 2.0, 4.0];

/// AORC thresholds depend on `beta` through `m + beta`, so its grid is
/// expressed in multiples of `m`.
pub const AORC_BETA_MULTIPLES: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 10.0];

pub fn default_beta_grid(family: Family, m: usize) -> Vec<f64> {
    match family {
        Family::Aorc => AORC_BETA_MULTIPLES.iter().map(|k| k * m as f64).collect(),
        Family::Exp => EXP_BETA_GRID.to_vec(),
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lo: f64,
    pub hi: f64,
    /// Absolute width of the final bracket.
    pub tolerance: f64,
    /// Points of the coarse scan, endpoints included.
    pub grid_points: usize,
    /// Points of the exhaustive scan used when the coarse scan is not
    /// monotone.
    pub fine_points: usize,
}

impl LambdaSearch {
    /// `[0, 1]`, or `[0, H_m]` for the BY family.
    pub fn for_family(family: Family, m: usize) -> Self {
        let hi = match family {
            Family::By => family.lambda_range(m).1,
            _ => 1.0,
        };
        Self {
            lo: 0.0,
            hi,
            tolerance: 1e-5,
            grid_points: 11,
            fine_points: 401,
        }
    }

    fn validate(&self, family: Family, m: usize) -> Result<()> {
        let (flo, fhi) = family.lambda_range(m);
        if !(self.lo >= flo && self.hi <= fhi && self.lo < self.hi) {
            return Err(Error::Parameter(format!(
                "lambda search range [{}, {}] not inside [{flo}, {fhi}]",
                self.lo, self.hi
            )));
        }
        if !(self.tolerance > 0.0) || self.grid_points < 2 || self.fine_points < 2 {
            return Err(Error::Parameter("lambda search needs a positive tolerance and two grid points".into()));
        }
        Ok(())
    }
}

/// How two-parameter families pick `beta` when the target is below the
/// anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    /// Run the grid selection separately for each target.
    PerTarget,
    /// Select `beta` at the anchor target, then keep it and only move
    /// `lambda`.
    Anchored(f64),
}

impl Default for BetaChoice {
    fn default() -> Self {
        BetaChoice::Anchored(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub family: Family,
    pub m: usize,
    pub alpha: f64,
    pub f_alt: AltPValueCdf,
    pub gamma_target: f64,
    /// Ignored for one-parameter families.
    pub beta_grid: Vec<f64>,
    pub lambda_search: LambdaSearch,
    /// Relative distance from the best summed expectation within which
    /// candidates count as tied.
    pub tie_tolerance: f64,
    pub beta_choice: BetaChoice,
}

impl CalibrationSpec {
    pub fn new(family: Family, m: usize, alpha: f64, f_alt: AltPValueCdf, gamma_target: f64) -> Self {
        Self {
            family,
            m,
            alpha,
            f_alt,
            gamma_target,
            beta_grid: default_beta_grid(family, m),
            lambda_search: LambdaSearch::for_family(family, m),
            tie_tolerance: 0.01,
            beta_choice: BetaChoice::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.m == 0 {
            return Err(Error::Parameter("m must be at least 1".into()));
        }
        if self.family == Family::Custom {
            return Err(Error::Parameter("custom vectors have no parameters to calibrate".into()));
        }
        if !(self.gamma_target > 0.0) {
            return Err(Error::Parameter(format!("gamma target {} must be positive", self.gamma_target)));
        }
        if self.family.has_beta() {
            if self.beta_grid.is_empty() {
                return Err(Error::Parameter("beta grid is empty".into()));
            }
            if let Some(b) = self.beta_grid.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
                return Err(Error::Parameter(format!("beta = {b} must be finite and >= 0")));
            }
        }
        if let BetaChoice::Anchored(anchor) = self.beta_choice {
            if !(anchor > 0.0) {
                return Err(Error::Parameter(format!("beta anchor {anchor} must be positive")));
            }
        }
        if !(self.tie_tolerance >= 0.0) {
            return Err(Error::Parameter("tie tolerance must be >= 0".into()));
        }
        self.lambda_search.validate(self.family, self.m)
    }

    fn betas(&self) -> Vec<Option<f64>> {
        if self.family.has_beta() {
            self.beta_grid.iter().map(|&b| Some(b)).collect()
        } else {
            vec![None]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPhase {
    Grid,
    FineGrid,
    Refine,
    Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub phase: SearchPhase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub lambda: f64,
    /// Present for grid points, where the full table is computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_star: Option<f64>,
    /// Present for refinement steps: margin of `gamma* >= target`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaOutcome {
    pub lambda: f64,
    /// The target is missed at `lambda + tolerance` (or `lambda` is the
    /// upper end of the range).
    pub boundary_certified: bool,
    /// The coarse scan was monotone in feasibility.
    pub monotone: bool,
}

/// Summed expectation and variance of `R gamma*` over all candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub mean: f64,
    pub variance: f64,
    pub table: GammaTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub lambda: f64,
    pub gamma_star: Shrinkage,
    pub objective_mean: f64,
    pub objective_var: f64,
    pub boundary_certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub cv: CriticalVector,
    pub gamma_star: Shrinkage,
    pub objective_mean: f64,
    pub objective_var: f64,
    pub boundary_certified: bool,
    pub table: GammaTable,
    /// Every `beta` that reached the target, in grid order.
    pub candidates: Vec<Candidate>,
    pub diagnostics: Vec<SearchStep>,
}

/// Both objectives plus the gamma table, sharing one pass over the laws.
pub fn evaluate_objectives(cv: &CriticalVector, f_alt: &AltPValueCdf, alpha: f64) -> Result<Objectives> {
    check_alpha(alpha)?;
    Ok(objectives_for_law(&RejectionLaw::new(cv, f_alt), alpha))
}

fn objectives_for_law(law: &RejectionLaw, alpha: f64) -> Objectives {
    let m = law.m();
    let table = gamma_table_for_law(law, alpha, GammaOptions::default());
    let g = table.gamma_star.value();
    let moments: Vec<(f64, f64)> = (0..=m)
        .into_par_iter()
        .map(|m1| rejection_moments(&law.pmf(m1), g))
        .collect();
    let mean = CompensatedSum::from_iter(moments.iter().map(|x| x.0)).value();
    let variance = CompensatedSum::from_iter(moments.iter().map(|x| x.1)).value();
    Objectives { mean, variance, table }
}

pub fn objective_sum_expectation(cv: &CriticalVector, f_alt: &AltPValueCdf, m: usize, alpha: f64) -> Result<f64> {
    check_dim(cv, m)?;
    Ok(evaluate_objectives(cv, f_alt, alpha)?.mean)
}

pub fn objective_sum_variance(cv: &CriticalVector, f_alt: &AltPValueCdf, m: usize, alpha: f64) -> Result<f64> {
    check_dim(cv, m)?;
    Ok(evaluate_objectives(cv, f_alt, alpha)?.variance)
}

fn check_dim(cv: &CriticalVector, m: usize) -> Result<()> {
    if cv.m() == m {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected: m,
            found: cv.m(),
        })
    }
}

fn params_for(beta: Option<f64>, lambda: f64) -> FamilyParams {
    FamilyParams { lambda, beta }
}

/// `gamma*` over a coarse `lambda` grid for one `(family, beta)`. Serves
/// every target; each target then only needs its own refinement.
#[derive(Debug, Clone)]
pub struct LambdaProfile {
    family: Family,
    beta: Option<f64>,
    m: usize,
    alpha: f64,
    f_alt: AltPValueCdf,
    search: LambdaSearch,
    grid: Vec<f64>,
    gammas: Vec<Shrinkage>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

impl LambdaProfile {
    pub fn scan(
        family: Family,
        beta: Option<f64>,
        f_alt: &AltPValueCdf,
        m: usize,
        alpha: f64,
        search: LambdaSearch,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        search.validate(family, m)?;
        let grid = linspace(search.lo, search.hi, search.grid_points);
        let mut profile = Self {
            family,
            beta,
            m,
            alpha,
            f_alt: f_alt.clone(),
            search,
            grid: Vec::new(),
            gammas: Vec::new(),
        };
        profile.gammas = profile.gammas_on(&grid)?;
        profile.grid = grid;
        Ok(profile)
    }

    fn law(&self, lambda: f64) -> Result<RejectionLaw> {
        let cv = make_critical_vector(self.family, params_for(self.beta, lambda), self.m)?;
        Ok(RejectionLaw::new(&cv, &self.f_alt))
    }

    fn gammas_on(&self, grid: &[f64]) -> Result<Vec<Shrinkage>> {
        grid.iter()
            .map(|&l| {
                let law = self.law(l)?;
                Ok(gamma_table_for_law(&law, self.alpha, GammaOptions::default()).gamma_star)
            })
            .collect()
    }

    fn slack(&self, lambda: f64, target: f64) -> Result<f64> {
        Ok(target_slack(&self.law(lambda)?, target, self.alpha))
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn gammas(&self) -> &[Shrinkage] {
        &self.gammas
    }

    /// Largest `lambda` in the search range with `gamma* >= target`.
    pub fn max_lambda(&self, target: f64, trace: &mut Vec<SearchStep>) -> Result<LambdaOutcome> {
        let beta = self.beta;
        for (&l, g) in self.grid.iter().zip(&self.gammas) {
            trace.push(SearchStep {
                phase: SearchPhase::Grid,
                beta,
                lambda: l,
                gamma_star: Some(g.value()),
                slack: None,
            });
        }
        let unattainable = |gammas: &[Shrinkage]| Error::Unattainable {
            target,
            closest: gammas.iter().max().map_or(0.0, |g| g.value()),
            lo: self.search.lo,
            hi: self.search.hi,
        };
        if target > 1.0 + 1e-9 {
            return Err(unattainable(&self.gammas));
        }

        let feasible: Vec<bool> = self.gammas.iter().map(|g| g.reaches(target)).collect();
        let count = feasible.iter().filter(|&&f| f).count();
        let monotone = feasible.iter().take(count).all(|&f| f);
        let (grid, gammas, feasible) = if monotone {
            (self.grid.clone(), self.gammas.clone(), feasible)
        } else {
            let fine = linspace(self.search.lo, self.search.hi, self.search.fine_points);
            let gammas = self.gammas_on(&fine)?;
            for (&l, g) in fine.iter().zip(&gammas) {
                trace.push(SearchStep {
                    phase: SearchPhase::FineGrid,
                    beta,
                    lambda: l,
                    gamma_star: Some(g.value()),
                    slack: None,
                });
            }
            let feasible = gammas.iter().map(|g| g.reaches(target)).collect();
            (fine, gammas, feasible)
        };
        let Some(k) = feasible.iter().rposition(|&f| f) else {
            return Err(unattainable(&gammas));
        };
        if k + 1 == grid.len() {
            return Ok(LambdaOutcome {
                lambda: grid[k],
                boundary_certified: true,
                monotone,
            });
        }

        let (mut a, mut b) = (grid[k], grid[k + 1]);
        let mut fa = self.slack(a, target)?;
        let mut fb = self.slack(b, target)?;
        debug_assert!(fa >= 0.0 && fb < 0.0);
        let tol = self.search.tolerance;
        let mut side = 0i32;
        for _ in 0..200 {
            if b - a <= tol {
                break;
            }
            // Illinois step, kept away from the ends and replaced by
            // bisection when one end has been retained twice.
            let mut x = if side.abs() >= 2 {
                0.5 * (a + b)
            } else {
                (a * fb - b * fa) / (fb - fa)
            };
            let guard = 0.25 * tol;
            if !(x > a + guard && x < b - guard) {
                x = if !(x > a + guard) { a + 0.5 * tol.min(b - a) } else { b - 0.5 * tol.min(b - a) };
            }
            let fx = self.slack(x, target)?;
            trace.push(SearchStep {
                phase: SearchPhase::Refine,
                beta,
                lambda: x,
                gamma_star: None,
                slack: Some(fx),
            });
            if fx >= 0.0 {
                a = x;
                fa = fx;
                if side > 0 {
                    fb *= 0.5;
                }
                side = if side > 0 { side + 1 } else { 1 };
            } else {
                b = x;
                fb = fx;
                if side < 0 {
                    fa *= 0.5;
                }
                side = if side < 0 { side - 1 } else { -1 };
            }
        }

        let probe = a + tol;
        let boundary_certified = if probe > self.search.hi {
            true
        } else {
            let s = self.slack(probe, target)?;
            trace.push(SearchStep {
                phase: SearchPhase::Certificate,
                beta,
                lambda: probe,
                gamma_star: None,
                slack: Some(s),
            });
            s < 0.0
        };
        Ok(LambdaOutcome {
            lambda: a,
            boundary_certified,
            monotone,
        })
    }
}

/// Largest `lambda` reaching `spec.gamma_target` at the given `beta`.
pub fn max_lambda_for_target(family: Family, beta: Option<f64>, spec: &CalibrationSpec) -> Result<LambdaOutcome> {
    spec.validate()?;
    let profile = LambdaProfile::scan(family, beta, &spec.f_alt, spec.m, spec.alpha, spec.lambda_search)?;
    profile.max_lambda(spec.gamma_target, &mut Vec::new())
}

fn candidate_for(
    profile: &LambdaProfile,
    target: f64,
    trace: &mut Vec<SearchStep>,
) -> Result<Option<(Candidate, CriticalVector, GammaTable)>> {
    let outcome = match profile.max_lambda(target, trace) {
        Ok(o) => o,
        Err(Error::Unattainable { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let cv = make_critical_vector(profile.family, params_for(profile.beta, outcome.lambda), profile.m)?;
    let obj = objectives_for_law(&RejectionLaw::new(&cv, &profile.f_alt), profile.alpha);
    let candidate = Candidate {
        beta: profile.beta,
        lambda: outcome.lambda,
        gamma_star: obj.table.gamma_star,
        objective_mean: obj.mean,
        objective_var: obj.variance,
        boundary_certified: outcome.boundary_certified,
    };
    Ok(Some((candidate, cv, obj.table)))
}

/// Among candidates within `tie_tolerance` of the best summed expectation,
/// the one with the smallest summed variance; ties by smallest `beta`, then
/// smallest `lambda`.
pub fn choose_candidate(candidates: &[Candidate], tie_tolerance: f64) -> Option<usize> {
    let best = candidates.iter().map(|c| c.objective_mean).fold(f64::NEG_INFINITY, f64::max);
    let floor = best - tie_tolerance * best.abs();
    (0..candidates.len())
        .filter(|&i| candidates[i].objective_mean >= floor)
        .min_by(|&i, &j| {
            let (a, b) = (&candidates[i], &candidates[j]);
            a.objective_var
                .total_cmp(&b.objective_var)
                .then(a.beta.unwrap_or(0.0).total_cmp(&b.beta.unwrap_or(0.0)))
                .then(a.lambda.total_cmp(&b.lambda))
        })
}

fn select_from_profiles(spec: &CalibrationSpec, profiles: &[LambdaProfile]) -> Result<CalibrationResult> {
    let mut diagnostics = Vec::new();
    let mut found = Vec::new();
    for profile in profiles {
        if let Some(c) = candidate_for(profile, spec.gamma_target, &mut diagnostics)? {
            found.push(c);
        }
    }
    let candidates: Vec<Candidate> = found.iter().map(|c| c.0.clone()).collect();
    let Some(best) = choose_candidate(&candidates, spec.tie_tolerance) else {
        let closest = profiles
            .iter()
            .flat_map(|p| p.gammas.iter())
            .max()
            .map_or(0.0, |g| g.value());
        return Err(Error::Unattainable {
            target: spec.gamma_target,
            closest,
            lo: spec.lambda_search.lo,
            hi: spec.lambda_search.hi,
        });
    };
    let (chosen, cv, table) = found.swap_remove(best);
    Ok(CalibrationResult {
        cv,
        gamma_star: chosen.gamma_star,
        objective_mean: chosen.objective_mean,
        objective_var: chosen.objective_var,
        boundary_certified: chosen.boundary_certified,
        table,
        candidates,
        diagnostics,
    })
}

fn profiles_for(spec: &CalibrationSpec) -> Result<Vec<LambdaProfile>> {
    spec.betas()
        .into_iter()
        .map(|beta| LambdaProfile::scan(spec.family, beta, &spec.f_alt, spec.m, spec.alpha, spec.lambda_search))
        .collect()
}

pub fn select_critical_vector(spec: &CalibrationSpec) -> Result<CalibrationResult> {
    select_for_targets(spec, &[spec.gamma_target])?
        .pop()
        .expect("one result per target")
}

/// [`select_critical_vector`] for several targets, sharing the coarse
/// scans. `spec.gamma_target` is ignored.
pub fn select_for_targets(spec: &CalibrationSpec, targets: &[f64]) -> Result<Vec<Result<CalibrationResult>>> {
    let mut base = spec.clone();
    base.gamma_target = 1.0;
    base.validate()?;
    let profiles = profiles_for(&base)?;
    let anchored = match base.beta_choice {
        BetaChoice::Anchored(anchor) if base.family.has_beta() && targets.iter().any(|&t| t < anchor) => {
            let spec = CalibrationSpec {
                gamma_target: anchor,
                ..base.clone()
            };
            Some((anchor, select_from_profiles(&spec, &profiles)?))
        }
        _ => None,
    };
    Ok(targets
        .iter()
        .map(|&target| {
            let spec = CalibrationSpec {
                gamma_target: target,
                ..base.clone()
            };
            spec.validate()?;
            match &anchored {
                Some((anchor, at_anchor)) if target == *anchor => Ok(at_anchor.clone()),
                Some((anchor, at_anchor)) if target < *anchor => {
                    let beta = at_anchor.cv.params().and_then(|p| p.beta);
                    let own: Vec<LambdaProfile> = profiles.iter().filter(|p| p.beta == beta).cloned().collect();
                    select_from_profiles(&spec, &own)
                }
                _ => select_from_profiles(&spec, &profiles),
            }
        })
        .collect())
}
