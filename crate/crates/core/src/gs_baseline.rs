//! Lower bound for the number of true discoveries by closed testing with
//! Simes local tests, as a baseline for the step-up bound.

use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, check_probability, Error, Result};

/// Largest `m` accepted by the exhaustive oracle.
pub const ORACLE_MAX_M: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsResult {
    /// Lower confidence bound for the number of false nulls.
    pub d: usize,
    /// Size of the largest intersection hypothesis the Simes test keeps.
    pub h: usize,
    pub alpha: f64,
}

fn check_inputs(pvalues: &[f64], alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    pvalues.iter().try_for_each(|&p| check_probability("p-value", p))
}

/// Simes test of an intersection whose p-values are given sorted.
fn simes_rejects(sorted: &[f64], alpha: f64) -> bool {
    let size = sorted.len();
    sorted
        .iter()
        .enumerate()
        .any(|(j, &p)| p <= (j + 1) as f64 * alpha / size as f64)
}

/// Exhaustive closed testing over all `2^m - 1` intersections. An
/// intersection is rejected when it and every superset are rejected by the
/// Simes test; the bound is `m` minus the size of the largest survivor.
pub fn gs_bound_oracle(pvalues: &[f64], alpha: f64) -> Result<usize> {
    let m = pvalues.len();
    if m > ORACLE_MAX_M {
        return Err(Error::Size(format!(
            "exhaustive closed testing supports m <= {ORACLE_MAX_M}, got {m}"
        )));
    }
    check_inputs(pvalues, alpha)?;
    if m == 0 {
        return Ok(0);
    }
    let full = (1usize << m) - 1;
    let mut closed = vec![false; full + 1];
    let mut buf = Vec::with_capacity(m);
    // Supersets have larger masks, so a descending sweep sees them first.
    for set in (1..=full).rev() {
        buf.clear();
        buf.extend((0..m).filter(|i| set >> i & 1 == 1).map(|i| pvalues[i]));
        buf.sort_by(f64::total_cmp);
        closed[set] = simes_rejects(&buf, alpha)
            && (0..m)
                .filter(|i| set >> i & 1 == 0)
                .all(|i| closed[set | 1 << i]);
    }
    let largest_kept = (1..=full)
        .filter(|&set| !closed[set])
        .map(|set| set.count_ones() as usize)
        .max()
        .unwrap_or(0);
    Ok(m - largest_kept)
}

/// `h = max{i : p_(m-i+j) > j alpha / i for j = 1..i}` and `d = m - h`.
/// Agrees with [`gs_bound_oracle`]; `O(m^2)` after sorting.
pub fn gs_bound(pvalues: &[f64], alpha: f64) -> Result<GsResult> {
    check_inputs(pvalues, alpha)?;
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(gs_bound_sorted(&sorted, alpha))
}

/// [`gs_bound`] on p-values already sorted ascending and validated.
pub(crate) fn gs_bound_sorted(sorted: &[f64], alpha: f64) -> GsResult {
    let m = sorted.len();
    // The i largest p-values form the hardest intersection of size i.
    let h = (1..=m)
        .rev()
        .find(|&i| !simes_rejects(&sorted[m - i..], alpha))
        .unwrap_or(0);
    GsResult { d: m - h, h, alpha }
}
