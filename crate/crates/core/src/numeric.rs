//! Small numerical building blocks shared by the distribution code.

use statrs::function::gamma::ln_gamma;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Table of `ln k!` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        Self((0..=n).map(|k| ln_gamma(k as f64 + 1.0)).collect())
    }

    #[inline]
    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n);
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// `x^k` with the convention `0^0 = 1`, evaluated as `k * ln x`.
#[inline]
pub fn ln_pow(x: f64, k: usize) -> f64 {
    if k == 0 {
        0.0
    } else if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        k as f64 * x.ln()
    }
}

/// Binomial probabilities `Bin(d, q)(x)` for every `d = 0..=n`, built with
/// Pascal's rule so that all arithmetic stays in positive terms.
///
/// Row `d` is stored at `rows[d * (n + 1) ..][..=d]`.
pub fn binomial_rows(n: usize, q: f64, rows: &mut Vec<f64>) {
    let width = n + 1;
    rows.clear();
    rows.resize(width * width, 0.0);
    rows[0] = 1.0;
    let p = 1.0 - q;
    for d in 1..=n {
        let (prev, cur) = rows.split_at_mut(d * width);
        let prev = &prev[(d - 1) * width..(d - 1) * width + d];
        let cur = &mut cur[..=d];
        cur[0] = prev[0] * p;
        for x in 1..d {
            cur[x] = prev[x] * p + prev[x - 1] * q;
        }
        cur[d] = prev[d - 1] * q;
    }
}

/// Finds `x` in `[lo, hi]` with `f(x) = 0` for a non-decreasing `f` with
/// `f(lo) <= 0 <= f(hi)`. Bisection, guarded Newton steps when a derivative
/// is supplied.
pub fn solve_increasing<F>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> f64
where
    F: FnMut(f64) -> (f64, Option<f64>),
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let (v, d) = f(x);
        if v == 0.0 {
            return x;
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= x_tol * (1.0 + x.abs()) {
            break;
        }
        let newton = d.filter(|d| *d > 0.0).map(|d| x - v / d);
        x = match newton {
            Some(nx) if nx > lo && nx < hi => nx,
            _ => 0.5 * (lo + hi),
        };
    }
    x
}
