use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tdp_core::bound::{bound_from_table, gamma_star, Shrinkage};
use tdp_core::calibration::{select_for_targets, BetaChoice, CalibrationResult, CalibrationSpec, Candidate, SearchStep};
use tdp_core::effect_size::{
    estimate_with_fallback, estimate_with_rule, split_samples, EffectSizeEstimate, FallbackPolicy, ThresholdRule,
};
use tdp_core::pvalue_model::AltPValueCdf;
use tdp_core::sim::{prepare_methods, run_scenario_prepared, ttest_maps, Dataset, ScenarioConfig, ScenarioSummary};
use tdp_core::stepup::{make_critical_vector, rejection_pmf, stepup_reject, CriticalVector, Family, FamilyParams, TwoGroupModel};

use crate::io::{read_matrix, read_pvalues, write_pvalues, Output, PValueRecord};
use crate::{BoundArgs, CalibrateArgs, CliError, DistArgs, EstimateArgs, FamilyArgs, SimulateArgs};

const DEFAULT_ALPHA: f64 = 0.2;
const DEFAULT_N: u32 = 50;
const DEFAULT_SEED: u64 = 1;

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn parse_key<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| input_err(format!("config: cannot parse '{}' for key '{key}'", value.trim())))
}

/// Fixed parameters when `--lambda` is given, `None` to calibrate.
fn fixed_params(family: Family, lambda: Option<f64>, beta: Option<f64>) -> Result<Option<FamilyParams>, CliError> {
    match (lambda, beta) {
        (None, None) => Ok(None),
        (None, Some(_)) => Err(input_err("--beta needs --lambda")),
        (Some(_), None) if family.has_beta() => Err(input_err(format!("family {family} needs --beta with --lambda"))),
        (Some(l), None) => Ok(Some(FamilyParams::linear(l))),
        (Some(l), Some(b)) if family.has_beta() => Ok(Some(FamilyParams::shaped(l, b))),
        (Some(_), Some(_)) => Err(input_err(format!("family {family} takes no beta"))),
    }
}

fn calibration_spec(
    family: Family,
    m: usize,
    alpha: f64,
    f_alt: AltPValueCdf,
    args: &FamilyArgs,
) -> CalibrationSpec {
    let mut spec = CalibrationSpec::new(family, m, alpha, f_alt, 1.0);
    if let Some(grid) = &args.beta_grid {
        spec.beta_grid = grid.clone();
    }
    if args.per_target_beta {
        spec.beta_choice = BetaChoice::PerTarget;
    }
    spec
}

/// Resolved inputs of `tdp bound`, echoed in its report.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisManifest {
    pub input: PathBuf,
    pub m: usize,
    pub alpha: f64,
    pub family: Family,
    pub gamma_target: f64,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub calibrated: bool,
    pub theta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_rule: Option<ThresholdRule>,
    pub n: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub r: usize,
    /// Exact fraction `num/den`.
    pub gamma_star: String,
    pub gamma_star_value: f64,
    pub m1_hat: usize,
    pub tdp_hat: f64,
    pub m0_hat: usize,
    pub parameters: AnalysisManifest,
}

#[derive(Default)]
struct BoundConfig {
    alpha: Option<f64>,
    family: Option<Family>,
    gamma_target: Option<f64>,
    theta: Option<f64>,
    threshold: Option<ThresholdRule>,
    n: Option<u32>,
    lambda: Option<f64>,
    beta: Option<f64>,
}

fn read_bound_config(path: &Path) -> Result<BoundConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    let mut cfg = BoundConfig::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| input_err(format!("{}: line {}: expected key = value", path.display(), i + 1)))?;
        match key.trim() {
            "alpha" => cfg.alpha = Some(parse_key(key, value)?),
            "family" => cfg.family = Some(parse_key(key, value)?),
            "gamma_target" => cfg.gamma_target = Some(parse_key(key, value)?),
            "theta" => cfg.theta = Some(parse_key(key, value)?),
            "threshold" => cfg.threshold = Some(parse_key(key, value)?),
            "n" => cfg.n = Some(parse_key(key, value)?),
            "lambda" => cfg.lambda = Some(parse_key(key, value)?),
            "beta" => cfg.beta = Some(parse_key(key, value)?),
            other => {
                return Err(input_err(format!(
                    "{}: line {}: unknown key '{other}'",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(cfg)
}

pub fn bound(args: BoundArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(path) => read_bound_config(path)?,
        None => BoundConfig::default(),
    };
    let alpha = args.common.alpha.or(cfg.alpha).unwrap_or(DEFAULT_ALPHA);
    let family = args.family.family.or(cfg.family).unwrap_or(Family::Bh);
    let gamma_target = args.gamma_target.or(cfg.gamma_target).unwrap_or(1.0);
    let n = args.n.or(cfg.n).unwrap_or(DEFAULT_N);
    let lambda = args.family.lambda.or(cfg.lambda);
    let beta = args.family.beta.or(cfg.beta);
    let threshold = args.threshold.or(cfg.threshold);

    let records = read_pvalues(&args.input)?;
    let pvalues: Vec<f64> = records.iter().map(|r| r.p).collect();
    let m = pvalues.len();

    let (theta, theta_rule) = match (args.theta.or(cfg.theta), threshold) {
        (Some(_), Some(_)) => return Err(input_err("give either --theta or --threshold, not both")),
        (Some(theta), None) => (theta, None),
        (None, Some(rule)) => {
            let source = args.theta_input.as_deref().unwrap_or(&args.input);
            let est = estimate_from_records(&read_pvalues(source)?, &rule, n)?;
            (est.theta_hat, Some(rule))
        }
        (None, None) => return Err(input_err("an effect size is required: --theta or --threshold")),
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(input_err(format!("alpha = {alpha} is not in (0, 1)")));
    }

    let fixed = fixed_params(family, lambda, beta)?;
    let mut manifest = AnalysisManifest {
        input: args.input.clone(),
        m,
        alpha,
        family,
        gamma_target,
        lambda: fixed.map_or(0.0, |p| p.lambda),
        beta: fixed.and_then(|p| p.beta),
        calibrated: fixed.is_none(),
        theta,
        theta_rule,
        n,
    };

    // An estimated effect of zero means no alternative is distinguishable
    // from the nulls; the bound is zero.
    if theta == 0.0 {
        return Output::new(args.common.out).write_json(&BoundReport {
            r: 0,
            gamma_star: Shrinkage::ZERO.to_string(),
            gamma_star_value: 0.0,
            m1_hat: 0,
            tdp_hat: 0.0,
            m0_hat: m,
            parameters: manifest,
        });
    }

    let f_alt = AltPValueCdf::t_test(theta, n)?;
    let (cv, table) = match fixed {
        Some(params) => {
            let cv = make_critical_vector(family, params, m)?;
            let table = gamma_star(&f_alt, &cv, m, alpha)?;
            (cv, table)
        }
        None => {
            let spec = calibration_spec(family, m, alpha, f_alt.clone(), &args.family);
            let res = select_for_targets(&spec, &[gamma_target])?
                .pop()
                .expect("one result per target")?;
            (res.cv, res.table)
        }
    };
    if let Some(p) = cv.params() {
        manifest.lambda = p.lambda;
        manifest.beta = p.beta;
    }
    let r = stepup_reject(&pvalues, &cv)?.r;
    let res = bound_from_table(r, m, &table);
    Output::new(args.common.out).write_json(&BoundReport {
        r: res.r,
        gamma_star: res.gamma_star.to_string(),
        gamma_star_value: res.gamma_star.value(),
        m1_hat: res.m1_hat,
        tdp_hat: res.tdp_hat,
        m0_hat: res.m0_hat,
        parameters: manifest,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub family: Family,
    pub gamma_target: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_star: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_certified: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Candidate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<SearchStep>,
}

fn calibration_report(family: Family, target: f64, res: tdp_core::Result<CalibrationResult>, trace: bool) -> CalibrationReport {
    let empty = CalibrationReport {
        family,
        gamma_target: target,
        error: None,
        lambda: None,
        beta: None,
        gamma_star: None,
        objective_mean: None,
        objective_var: None,
        boundary_certified: None,
        candidates: Vec::new(),
        trace: Vec::new(),
    };
    match res {
        Err(e) => CalibrationReport {
            error: Some(e.to_string()),
            ..empty
        },
        Ok(r) => {
            let params = r.cv.params();
            CalibrationReport {
                lambda: params.map(|p| p.lambda),
                beta: params.and_then(|p| p.beta),
                gamma_star: Some(r.gamma_star.to_string()),
                objective_mean: Some(r.objective_mean),
                objective_var: Some(r.objective_var),
                boundary_certified: Some(r.boundary_certified),
                candidates: if family.has_beta() { r.candidates } else { Vec::new() },
                trace: if trace { r.diagnostics } else { Vec::new() },
                ..empty
            }
        }
    }
}

/// Exit status 1 when any target is unattainable; the report still lists
/// every target.
pub fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let alpha = args.common.alpha.unwrap_or(DEFAULT_ALPHA);
    let family = args.family.family.unwrap_or(Family::Bh);
    if args.family.lambda.is_some() || args.family.beta.is_some() {
        return Err(input_err("calibrate searches lambda; --lambda and --beta are not accepted"));
    }
    let f_alt = AltPValueCdf::t_test(args.theta, args.n)?;
    let spec = calibration_spec(family, args.m, alpha, f_alt, &args.family);
    let results = select_for_targets(&spec, &args.gamma_target)?;
    let failed = results.iter().find_map(|r| r.as_ref().err().cloned());
    let reports: Vec<CalibrationReport> = args
        .gamma_target
        .iter()
        .zip(results)
        .map(|(&t, r)| calibration_report(family, t, r, args.trace))
        .collect();
    Output::new(args.common.out).write_json(&reports)?;
    match failed {
        Some(e) => Err(CliError::Compute(e.to_string())),
        None => Ok(()),
    }
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut config = ScenarioConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
        config
            .apply_text(&text)
            .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| input_err(format!("--set '{kv}' is not key=value")))?;
        config.apply(k, v)?;
    }
    if let Some(theta) = args.theta {
        config.apply("theta", &theta.to_string())?;
    }
    if let Some(t) = args.theta_assumed {
        config.theta_assumed = t;
    }
    if let Some(rho) = args.rho {
        config.rho = rho;
    }
    if let Some(alpha) = args.common.alpha {
        config.alpha = alpha;
    }
    if let Some(b) = args.replications {
        config.replications = b;
    }
    if let Some(methods) = &args.methods {
        config.apply("methods", methods)?;
    }
    if args.no_gs {
        config.include_gs = false;
    }
    if let Some(seed) = args.common.seed {
        config.seed = seed;
    }
    let m1s = args.m1.clone().unwrap_or_else(|| vec![config.m1]);

    let prepared = prepare_methods(&config)?;
    let mut summaries: Vec<ScenarioSummary> = Vec::with_capacity(m1s.len());
    for m1 in m1s {
        let scenario = ScenarioConfig { m1, ..config.clone() };
        summaries.push(run_scenario_prepared(&scenario, &prepared)?);
    }
    let out = Output::new(args.common.out);
    if args.json {
        out.write_json(&summaries)
    } else {
        let rows: Vec<_> = summaries.iter().flat_map(|s| s.tidy_rows()).collect();
        out.write_csv(&rows)
    }
}

fn estimate_from_records(records: &[PValueRecord], rule: &ThresholdRule, n: u32) -> Result<EffectSizeEstimate, CliError> {
    let (t, p) = t_and_p(records)?;
    Ok(estimate_with_rule(&t, &p, rule, n)?)
}

fn t_and_p(records: &[PValueRecord]) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let t = records
        .iter()
        .map(|r| r.t.ok_or_else(|| input_err(format!("row '{}' has no t value; a t column is required", r.id))))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok((t, records.iter().map(|r| r.p).collect()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    #[serde(flatten)]
    pub estimate: EffectSizeEstimate,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rules_tried: Vec<ThresholdRule>,
    pub replaced_by_floor: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimation_subjects: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_subjects: Option<Vec<usize>>,
}

fn subset_rows(names: &[String], values: &[f64], rows: &[usize]) -> Dataset {
    let m = names.len();
    let mut out = Vec::with_capacity(rows.len() * m);
    for &r in rows {
        out.extend_from_slice(&values[r * m..(r + 1) * m]);
    }
    Dataset {
        n: rows.len(),
        m,
        values: out,
    }
}

fn records_from_maps(names: &[String], t: &[f64], p: &[f64]) -> Vec<PValueRecord> {
    names
        .iter()
        .zip(t.iter().zip(p))
        .map(|(id, (&t, &p))| PValueRecord {
            id: id.clone(),
            p,
            t: Some(t),
        })
        .collect()
}

pub fn estimate_theta(args: EstimateArgs) -> Result<(), CliError> {
    let mut estimation_subjects = None;
    let mut bound_subjects = None;
    let (records, n) = match (&args.input, &args.data) {
        (Some(path), _) => (read_pvalues(path)?, args.n),
        (None, Some(path)) => {
            let (names, rows, values) = read_matrix(path)?;
            let (est_rows, bnd_rows) = match args.split {
                Some((ne, nb)) => split_samples(rows, ne, nb, args.common.seed.unwrap_or(DEFAULT_SEED))?,
                None => ((0..rows).collect(), Vec::new()),
            };
            let est = subset_rows(&names, &values, &est_rows);
            let (t, p) = ttest_maps(&est)?;
            if let Some(out) = &args.bound_pvalues {
                let (bt, bp) = ttest_maps(&subset_rows(&names, &values, &bnd_rows))?;
                write_pvalues(out, &records_from_maps(&names, &bt, &bp))?;
            }
            if args.split.is_some() {
                estimation_subjects = Some(est_rows.clone());
                bound_subjects = Some(bnd_rows);
            }
            let n = u32::try_from(est_rows.len()).map_err(|_| input_err("too many subjects"))?;
            (records_from_maps(&names, &t, &p), n)
        }
        (None, None) => return Err(input_err("--input or --data is required")),
    };
    let (t, p) = t_and_p(&records)?;
    let report = if args.fallback.is_empty() {
        EstimateReport {
            estimate: estimate_with_rule(&t, &p, &args.threshold, n)?,
            rules_tried: Vec::new(),
            replaced_by_floor: false,
            estimation_subjects,
            bound_subjects,
        }
    } else {
        let policy = FallbackPolicy {
            escalation: args.fallback.clone(),
            floor_below: args.floor_below,
            replacement: args.floor,
        };
        let out = estimate_with_fallback(&t, &p, &args.threshold, n, &policy)?;
        EstimateReport {
            estimate: out.estimate,
            rules_tried: out.tried,
            replaced_by_floor: out.replaced,
            estimation_subjects,
            bound_subjects,
        }
    };
    Output::new(args.common.out).write_json(&report)
}

#[derive(Debug, Clone, Serialize)]
struct PmfRow {
    r: usize,
    probability: f64,
}

#[derive(Debug, Clone, Serialize)]
struct PmfReport {
    m: usize,
    m1: usize,
    theta: f64,
    n: u32,
    thresholds: Vec<f64>,
    pmf: Vec<f64>,
    mean: f64,
    variance: f64,
}

pub fn dist_r(args: DistArgs) -> Result<(), CliError> {
    let cv: CriticalVector = match &args.thresholds {
        Some(t) => {
            if t.len() != args.m {
                return Err(input_err(format!("--thresholds has {} values, expected m = {}", t.len(), args.m)));
            }
            CriticalVector::custom(t.clone())?
        }
        None => {
            let family = args.family.family.unwrap_or(Family::Bh);
            let params = fixed_params(family, args.family.lambda, args.family.beta)?
                .ok_or_else(|| input_err("give --thresholds or --lambda"))?;
            make_critical_vector(family, params, args.m)?
        }
    };
    let f_alt = AltPValueCdf::t_test(args.theta, args.n)?;
    let model = TwoGroupModel::new(args.m, args.m1, f_alt)?;
    let pmf = rejection_pmf(&model, &cv)?;
    let out = Output::new(args.common.out);
    if args.json {
        out.write_json(&PmfReport {
            m: args.m,
            m1: args.m1,
            theta: args.theta,
            n: args.n,
            thresholds: cv.values().to_vec(),
            pmf: pmf.probs().to_vec(),
            mean: pmf.mean(),
            variance: pmf.variance(),
        })
    } else {
        let rows: Vec<PmfRow> = pmf
            .probs()
            .iter()
            .enumerate()
            .map(|(r, &probability)| PmfRow { r, probability })
            .collect();
        out.write_csv(&rows)
    }
}
