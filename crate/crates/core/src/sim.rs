//! Monte Carlo evaluation of the bounds on equicorrelated Gaussian data with
//! per-coordinate one-sample t-tests.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::Shrinkage;
use crate::calibration::{select_for_targets, CalibrationResult, CalibrationSpec};
use crate::error::{check_alpha, Error, Result};
use crate::gs_baseline::gs_bound_sorted;
use crate::numeric::CompensatedSum;
use crate::pvalue_model::{t_two_sided_pvalue, AltPValueCdf};
use crate::stepup::{count_rejections, Family};

pub const THETA_GRID: [f64; 7] = [0.4, 0.6, 0.8, 1.0, 1.2, 2.0, 5.0];
pub const M1_GRID: [usize; 10] = [5, 10, 20, 30, 40, 50, 60, 70, 80, 90];
pub const RHO_GRID: [f64; 4] = [0.0, 0.3, 0.6, 0.9];

/// A critical-vector family calibrated to a gamma* target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub family: Family,
    pub gamma_target: f64,
}

impl MethodSpec {
    pub fn new(family: Family, gamma_target: f64) -> Self {
        Self { family, gamma_target }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.family, self.gamma_target)
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    /// `family` or `family:target`, e.g. `aorc:0.95`; the target defaults to 1.
    fn from_str(s: &str) -> Result<Self> {
        let (family, target) = match s.split_once(':') {
            Some((f, t)) => (
                f,
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("gamma target '{t}' is not a number")))?,
            ),
            None => (s, 1.0),
        };
        Ok(Self::new(family.trim().parse()?, target))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_samples: u32,
    pub m: usize,
    pub m1: usize,
    pub theta: f64,
    /// Pairwise correlation of the coordinates.
    pub rho: f64,
    /// Effect size used to build the alternative p-value CDF.
    pub theta_assumed: f64,
    pub alpha: f64,
    pub replications: usize,
    pub methods: Vec<MethodSpec>,
    pub include_gs: bool,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_samples: 50,
            m: 100,
            m1: 10,
            theta: 0.8,
            rho: 0.0,
            theta_assumed: 0.8,
            alpha: 0.2,
            replications: 10_000,
            methods: vec![MethodSpec::new(Family::Bh, 1.0)],
            include_gs: true,
            seed: 1,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parameter(format!("cannot parse '{value}' for key '{key}'")))
}

impl ScenarioConfig {
    /// Sets one field from a `key = value` pair. `theta` also resets
    /// `theta_assumed`, so set `theta_assumed` after it.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "n" | "n_samples" => self.n_samples = parse_value(key, value)?,
            "m" => self.m = parse_value(key, value)?,
            "m1" => self.m1 = parse_value(key, value)?,
            "theta" => {
                self.theta = parse_value(key, value)?;
                self.theta_assumed = self.theta;
            }
            "theta_assumed" | "theta_hat" => self.theta_assumed = parse_value(key, value)?,
            "rho" => self.rho = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "b" | "B" | "replications" => self.replications = parse_value(key, value)?,
            "gs" | "include_gs" => self.include_gs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "methods" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::Parameter(format!("unknown scenario key '{other}'"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parameter(format!("line {}: expected key = value", lineno + 1)))?;
            self.apply(key, value)
                .map_err(|e| Error::Parameter(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.n_samples < 2 {
            return Err(Error::Parameter("n must be at least 2".into()));
        }
        if self.m == 0 || self.m1 > self.m {
            return Err(Error::Parameter(format!("need 0 <= m1 <= m and m >= 1, got m1 = {}, m = {}", self.m1, self.m)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Parameter(format!("rho = {} is not in [0, 1)", self.rho)));
        }
        if !self.theta.is_finite() || !self.theta_assumed.is_finite() {
            return Err(Error::Parameter("effect sizes must be finite".into()));
        }
        if self.replications == 0 {
            return Err(Error::Parameter("at least one replication is required".into()));
        }
        Ok(())
    }

    /// `theta=0.8,rho=0,m1=10` style label.
    pub fn label(&self) -> String {
        let mut s = format!("theta={},rho={},m1={}", self.theta, self.rho, self.m1);
        if self.theta_assumed != self.theta {
            s.push_str(&format!(",theta_assumed={}", self.theta_assumed));
        }
        s
    }

    pub fn f_alt(&self) -> Result<AltPValueCdf> {
        AltPValueCdf::t_test(self.theta_assumed, self.n_samples)
    }
}

/// Every combination of the given grids on top of `base`, with a correctly
/// specified effect size.
pub fn scenario_grid(base: &ScenarioConfig, thetas: &[f64], m1s: &[usize], rhos: &[f64]) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for &theta in thetas {
        for &rho in rhos {
            for &m1 in m1s {
                out.push(ScenarioConfig {
                    theta,
                    theta_assumed: theta,
                    rho,
                    m1,
                    ..base.clone()
                });
            }
        }
    }
    out
}

/// Row-major `n x m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub m: usize,
    pub values: Vec<f64>,
}

impl Dataset {
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values[j..].iter().step_by(self.m).copied()
    }
}

fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Rows `eta + sqrt(rho) z0 + sqrt(1 - rho) z`; the first `m1` entries of
/// `eta` are `theta / sqrt(2)`, the rest zero. Determined by the seed and
/// `replication`.
pub fn gen_dataset(config: &ScenarioConfig, replication: u64) -> Result<Dataset> {
    config.validate()?;
    let (n, m) = (config.n_samples as usize, config.m);
    let eta = config.theta / std::f64::consts::SQRT_2;
    let (shared, own) = (config.rho.sqrt(), (1.0 - config.rho).sqrt());
    let mut rng = replication_rng(config.seed, replication);
    let mut values = Vec::with_capacity(n * m);
    for _ in 0..n {
        let z0: f64 = rng.sample(StandardNormal);
        for j in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            let shift = if j < config.m1 { eta } else { 0.0 };
            values.push(shift + shared * z0 + own * z);
        }
    }
    Ok(Dataset { n, m, values })
}

/// One-sample two-sided t-test per column. A column with zero sample
/// variance gets `p = 1` when its mean is zero (and `t = 0`), else `p = 0`
/// (and an infinite `t`).
pub fn ttest_maps(data: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.n < 2 {
        return Err(Error::Parameter("a t-test needs at least two observations".into()));
    }
    if data.values.len() != data.n * data.m {
        return Err(Error::Dimension {
            expected: data.n * data.m,
            found: data.values.len(),
        });
    }
    let nf = data.n as f64;
    let nu = (data.n - 1) as u32;
    let mut tvalues = Vec::with_capacity(data.m);
    let mut pvalues = Vec::with_capacity(data.m);
    for j in 0..data.m {
        let mean = data.column(j).sum::<f64>() / nf;
        let ss: f64 = data.column(j).map(|x| (x - mean) * (x - mean)).sum();
        let sd = (ss / (nf - 1.0)).sqrt();
        let (t, p) = if sd > 0.0 {
            let t = mean / (sd / nf.sqrt());
            (t, t_two_sided_pvalue(t, nu))
        } else if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        };
        tvalues.push(t);
        pvalues.push(p);
    }
    Ok((tvalues, pvalues))
}

/// A method calibrated once for a scenario; replications only change `r`.
#[derive(Debug, Clone)]
pub struct PreparedMethod {
    pub spec: MethodSpec,
    pub calibration: CalibrationResult,
}

/// Calibrates every configured method under `theta_assumed`, sharing the
/// coarse scans between targets of the same family.
pub fn prepare_methods(config: &ScenarioConfig) -> Result<Vec<PreparedMethod>> {
    config.validate()?;
    let f_alt = config.f_alt()?;
    let mut prepared: Vec<Option<PreparedMethod>> = vec![None; config.methods.len()];
    let mut families: Vec<Family> = Vec::new();
    for spec in &config.methods {
        if !families.contains(&spec.family) {
            families.push(spec.family);
        }
    }
    for family in families {
        let idx: Vec<usize> = (0..config.methods.len())
            .filter(|&i| config.methods[i].family == family)
            .collect();
        let targets: Vec<f64> = idx.iter().map(|&i| config.methods[i].gamma_target).collect();
        let spec = CalibrationSpec::new(family, config.m, config.alpha, f_alt.clone(), 1.0);
        for (&i, res) in idx.iter().zip(select_for_targets(&spec, &targets)?) {
            prepared[i] = Some(PreparedMethod {
                spec: config.methods[i],
                calibration: res?,
            });
        }
    }
    Ok(prepared.into_iter().map(|p| p.expect("every method calibrated")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    /// `family[target]` or `gs`.
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_star: Option<Shrinkage>,
    pub mean_bound: f64,
    pub mean_bound_se: f64,
    pub empirical_variance: f64,
    pub empirical_variance_se: f64,
    /// Fraction of replications with `m1 < m1_hat`.
    pub violation_rate: f64,
    pub violation_rate_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub config: ScenarioConfig,
    pub methods: Vec<MethodSummary>,
}

/// One long-format CSV record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub scenario: String,
    pub method: String,
    pub m1: usize,
    pub statistic: String,
    pub value: f64,
    pub mc_se: f64,
}

impl ScenarioSummary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == name)
    }

    pub fn tidy_rows(&self) -> Vec<TidyRow> {
        let mut rows = Vec::with_capacity(3 * self.methods.len());
        for s in &self.methods {
            for (statistic, value, mc_se) in [
                ("mean_bound", s.mean_bound, s.mean_bound_se),
                ("empirical_variance", s.empirical_variance, s.empirical_variance_se),
                ("violation_rate", s.violation_rate, s.violation_rate_se),
            ] {
                rows.push(TidyRow {
                    scenario: self.scenario.clone(),
                    method: s.method.clone(),
                    m1: self.config.m1,
                    statistic: statistic.to_string(),
                    value,
                    mc_se,
                });
            }
        }
        rows
    }
}

fn summarize(method: String, gamma_star: Option<Shrinkage>, bounds: impl Iterator<Item = usize> + Clone, m1: usize, b: usize) -> MethodSummary {
    let bf = b as f64;
    let mean = bounds.clone().map(|x| x as f64).collect::<CompensatedSum>().value() / bf;
    let m2 = bounds.clone().map(|x| (x as f64 - mean).powi(2)).collect::<CompensatedSum>().value() / bf;
    let m4 = bounds.clone().map(|x| (x as f64 - mean).powi(4)).collect::<CompensatedSum>().value() / bf;
    let violations = bounds.filter(|&x| x > m1).count() as f64 / bf;
    let variance = if b > 1 { m2 * bf / (bf - 1.0) } else { 0.0 };
    MethodSummary {
        method,
        gamma_star,
        mean_bound: mean,
        mean_bound_se: (variance / bf).sqrt(),
        empirical_variance: variance,
        empirical_variance_se: ((m4 - m2 * m2).max(0.0) / bf).sqrt(),
        violation_rate: violations,
        violation_rate_se: (violations * (1.0 - violations) / bf).sqrt(),
    }
}

/// Calibrates, then simulates.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioSummary> {
    let prepared = prepare_methods(config)?;
    run_scenario_prepared(config, &prepared)
}

/// Simulates with methods calibrated beforehand. Replications run in
/// parallel; results are reduced in replication order, so the summary does
/// not depend on the schedule.
pub fn run_scenario_prepared(config: &ScenarioConfig, prepared: &[PreparedMethod]) -> Result<ScenarioSummary> {
    config.validate()?;
    if let Some(p) = prepared.iter().find(|p| p.calibration.cv.m() != config.m) {
        return Err(Error::Dimension {
            expected: config.m,
            found: p.calibration.cv.m(),
        });
    }
    let k = prepared.len() + usize::from(config.include_gs);
    let per_rep: Vec<Vec<usize>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|rep| -> Result<Vec<usize>> {
            let data = gen_dataset(config, rep)?;
            let (_, mut p) = ttest_maps(&data)?;
            p.sort_by(f64::total_cmp);
            let mut out = Vec::with_capacity(k);
            for method in prepared {
                let r = count_rejections(&p, method.calibration.cv.values());
                out.push(method.calibration.gamma_star.ceil_mul(r as u64) as usize);
            }
            if config.include_gs {
                out.push(gs_bound_sorted(&p, config.alpha).d);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let b = config.replications;
    let column = |c: usize| per_rep.iter().map(move |row| row[c]);
    let mut methods: Vec<MethodSummary> = prepared
        .iter()
        .enumerate()
        .map(|(c, p)| summarize(p.spec.to_string(), Some(p.calibration.gamma_star), column(c), config.m1, b))
        .collect();
    if config.include_gs {
        methods.push(summarize("gs".into(), None, column(k - 1), config.m1, b));
    }
    Ok(ScenarioSummary {
        scenario: config.label(),
        config: config.clone(),
        methods,
    })
}
