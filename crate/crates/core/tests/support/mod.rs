//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use libm::erfc;
use statrs::function::gamma::ln_gamma;
use tdp_core::pvalue_model::t_two_sided_pvalue;

/// 15-point Kronrod nodes and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature: bisects the interval with
/// the largest error estimate until the summed estimate is below `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..5000 {
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= tol {
            break;
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].2 .1.total_cmp(&parts[j].2 .1))
            .unwrap();
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
    let mut values: Vec<f64> = parts.iter().map(|p| p.2 .0).collect();
    values.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    values.iter().sum()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `P(T <= x)` for a noncentral t with `nu` degrees of freedom, from the
/// mixture `E[Phi(x sqrt(S / nu) - mu)]` with `S ~ chi2(nu)`, integrated
/// over `w = sqrt(S)` so the integrand is bounded for every `nu`.
pub fn nct_cdf(x: f64, nu: f64, mu: f64) -> f64 {
    let log_norm = (nu / 2.0) * std::f64::consts::LN_2 + ln_gamma(nu / 2.0);
    let integrand = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let s = w * w;
        // chi2 density at s times ds/dw = 2w.
        let dens = ((nu / 2.0 - 1.0) * s.ln() - s / 2.0 - log_norm).exp() * 2.0 * w;
        normal_cdf(x * w / nu.sqrt() - mu) * dens
    };
    let upper = (nu + 60.0 * (2.0 * nu).sqrt() + 300.0).sqrt();
    // Split near the mode of the chi density, where the mass concentrates.
    let mode = (nu - 1.0).max(0.0).sqrt();
    let lo = (mode - 12.0).max(0.0);
    let hi = (mode + 12.0).min(upper);
    integrate(integrand, 0.0, lo, 1e-14) + integrate(integrand, lo, hi, 1e-14) + integrate(integrand, hi, upper, 1e-14)
}

/// Root of the increasing function `f` on `[lo, hi]` by bisection.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// A draw of the two-sided one-sample t-test p-value with `nu` degrees of
/// freedom and noncentrality `mu`.
pub fn draw_alt_pvalue<R: Rng>(rng: &mut R, chi: &ChiSquared<f64>, nu: u32, mu: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let s = chi.sample(rng);
    let t = (z + mu) / (s / nu as f64).sqrt();
    t_two_sided_pvalue(t, nu)
}

/// `P(U_(i) <= b_i for all i)` for `n` iid uniforms by Steck's determinant
/// `n! det[b_i^(j-i+1) / (j-i+1)!]`.
pub fn steck(b: &[f64]) -> f64 {
    let n = b.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut fact = vec![1.0; n + 2];
    for k in 1..n + 2 {
        fact[k] = fact[k - 1] * k as f64;
    }
    for i in 0..n {
        for j in 0..n {
            let e = j as i64 - i as i64 + 1;
            a[i][j] = match e {
                e if e < 0 => 0.0,
                0 => 1.0,
                e => b[i].powi(e as i32) / fact[e as usize],
            };
        }
    }
    fact[n] * determinant(a)
}

fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    det
}

/// `P(Z_(i) <= c_i for all i)` for independent variables with CDFs `cdfs`,
/// integrating the joint law over the grid cells cut by the thresholds:
/// every assignment of variables to cells is enumerated.
pub fn orderstat_cdf_by_cells(cdfs: &[&dyn Fn(f64) -> f64], c: &[f64]) -> f64 {
    let n = cdfs.len();
    assert_eq!(n, c.len());
    let cells = n + 1;
    let mass = |k: usize, cell: usize| -> f64 {
        let lo = if cell == 0 { 0.0 } else { cdfs[k](c[cell - 1]) };
        let hi = if cell == n { 1.0 } else { cdfs[k](c[cell]) };
        hi - lo
    };
    let mut total = 0.0;
    let mut assign = vec![0usize; n];
    loop {
        // Variables in cells 0..=j lie at or below c_j.
        let ok = (0..n).all(|j| assign.iter().filter(|&&a| a <= j).count() > j);
        if ok {
            total += (0..n).map(|k| mass(k, assign[k])).product::<f64>();
        }
        let mut k = 0;
        loop {
            if k == n {
                return total;
            }
            assign[k] += 1;
            if assign[k] < cells {
                break;
            }
            assign[k] = 0;
            k += 1;
        }
    }
}

/// Inverse of a piecewise-linear CDF through `(grid[i], values[i])`.
pub fn piecewise_inverse(grid: &[f64], values: &[f64], u: f64) -> f64 {
    let i = values.partition_point(|&v| v < u).clamp(1, values.len() - 1);
    let (v0, v1) = (values[i - 1], values[i]);
    if v1 == v0 {
        return grid[i];
    }
    grid[i - 1] + (u - v0) / (v1 - v0) * (grid[i] - grid[i - 1])
}

/// Number of step-up rejections of unsorted p-values, by direct search.
pub fn stepup_count(p: &mut [f64], t: &[f64]) -> usize {
    p.sort_by(f64::total_cmp);
    (1..=p.len()).rev().find(|&i| p[i - 1] <= t[i - 1]).unwrap_or(0)
}

/// Largest `gamma` in `[0, 1]` with `P(R gamma <= m1) >= 1 - alpha`,
/// searched over the candidates `m1 / l`, `0` and `1`, from a pmf of `R`.
/// Returned as an exact fraction.
pub fn brute_force_gamma(pmf: &[f64], m1: usize, alpha: f64) -> (u64, u64) {
    let m = pmf.len() - 1;
    let mut cands: Vec<(u64, u64)> = vec![(0, 1), (1, 1)];
    cands.extend((1..=m).filter(|&l| l >= m1).map(|l| (m1 as u64, l as u64)));
    let feasible = |(num, den): (u64, u64)| {
        let p: f64 = (0..=m)
            .filter(|&l| l as u64 * num <= m1 as u64 * den)
            .map(|l| pmf[l])
            .sum();
        p >= 1.0 - alpha
    };
    cands
        .into_iter()
        .filter(|&c| feasible(c))
        .max_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)))
        .unwrap()
}

/// Binomial standard error of an empirical frequency.
pub fn binom_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
