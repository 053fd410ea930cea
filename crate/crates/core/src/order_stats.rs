//! Joint distribution of the order statistics of independent variables drawn
//! from two distributions.
//!
//! The reference algorithm walks the thresholds from left to right and keeps,
//! for every pair `(k1, k2)`, the probability that exactly `k1` group-1 and
//! `k2` group-2 variables lie at or below the current threshold. Moving to
//! the next threshold, each variable still above the previous threshold
//! falls into the new interval with its conditional probability, so the
//! update is a pair of conditional binomial convolutions. States with
//! `k1 + k2 < j` at the `j`-th threshold violate `Z_(j) <= c_j` and are
//! dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{binomial_rows, CompensatedSum};
use crate::pvalue_model::{complement_cdf, AltPValueCdf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupSample {
    pub count_g1: usize,
    pub count_g2: usize,
    pub g1: AltPValueCdf,
    pub g2: AltPValueCdf,
}

impl TwoGroupSample {
    pub fn new(count_g1: usize, g1: AltPValueCdf, count_g2: usize, g2: AltPValueCdf) -> Self {
        Self {
            count_g1,
            count_g2,
            g1,
            g2,
        }
    }

    pub fn len(&self) -> usize {
        self.count_g1 + self.count_g2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Non-decreasing thresholds in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector(Vec<f64>);

impl ThresholdVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("threshold {v} is not in [0, 1]")));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain("thresholds must be non-decreasing".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn conditional_mass(current: f64, previous: f64) -> f64 {
    let rest = 1.0 - previous;
    if rest <= 0.0 {
        0.0
    } else {
        ((current - previous) / rest).clamp(0.0, 1.0)
    }
}

/// `P(Z_(1) <= c_1, ..., Z_(n) <= c_n)` for independent `Z`: `count_g1`
/// with CDF `g1` and `count_g2` with CDF `g2`.
pub fn joint_orderstat_cdf(sample: &TwoGroupSample, c: &ThresholdVector) -> Result<f64> {
    let (a, b) = (sample.count_g1, sample.count_g2);
    let n = a + b;
    if c.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: c.len(),
        });
    }
    if n == 0 {
        return Ok(1.0);
    }

    let width = b + 1;
    let mut state = vec![CompensatedSum::new(); (a + 1) * width];
    let mut scratch = vec![CompensatedSum::new(); (a + 1) * width];
    state[0].add(1.0);
    let (mut rows1, mut rows2) = (Vec::new(), Vec::new());
    let (mut prev1, mut prev2) = (0.0, 0.0);

    for (j, &cj) in c.values().iter().enumerate() {
        let need = j + 1;
        let g1 = sample.g1.eval_unchecked(cj);
        let g2 = sample.g2.eval_unchecked(cj);
        binomial_rows(a, conditional_mass(g1, prev1), &mut rows1);
        binomial_rows(b, conditional_mass(g2, prev2), &mut rows2);
        prev1 = prev1.max(g1);
        prev2 = prev2.max(g2);

        // Group 1 moves.
        scratch.fill(CompensatedSum::new());
        for k1 in 0..=a {
            let rem = a - k1;
            let row = &rows1[rem * (a + 1)..rem * (a + 1) + rem + 1];
            for k2 in 0..=b {
                let w = state[k1 * width + k2].value();
                if w == 0.0 {
                    continue;
                }
                for (x, &pr) in row.iter().enumerate() {
                    scratch[(k1 + x) * width + k2].add(w * pr);
                }
            }
        }
        // Group 2 moves, then drop states violating the order constraint.
        state.fill(CompensatedSum::new());
        for k1 in 0..=a {
            for k2 in 0..=b {
                let w = scratch[k1 * width + k2].value();
                if w == 0.0 {
                    continue;
                }
                let rem = b - k2;
                let row = &rows2[rem * width..rem * width + rem + 1];
                for (x, &pr) in row.iter().enumerate() {
                    if k1 + k2 + x >= need {
                        state[k1 * width + k2 + x].add(w * pr);
                    }
                }
            }
        }
    }
    Ok(state[a * width + b].value().clamp(0.0, 1.0))
}

/// `P(P_(1) > t_1, ..., P_(n) > t_n)` for the sorted sample, evaluated as
/// the joint CDF of `1 - P` at the reversed complemented thresholds with
/// both distributions replaced by their complements.
pub fn upper_survival_orderstat(sample: &TwoGroupSample, t_tail: &ThresholdVector) -> Result<f64> {
    if t_tail.len() != sample.len() {
        return Err(Error::Dimension {
            expected: sample.len(),
            found: t_tail.len(),
        });
    }
    if t_tail.is_empty() {
        return Ok(1.0);
    }
    let reflected = ThresholdVector(t_tail.values().iter().rev().map(|t| 1.0 - t).collect());
    let mirrored = TwoGroupSample {
        count_g1: sample.count_g1,
        count_g2: sample.count_g2,
        g1: complement_cdf(&sample.g1),
        g2: complement_cdf(&sample.g2),
    };
    joint_orderstat_cdf(&mirrored, &reflected)
}
