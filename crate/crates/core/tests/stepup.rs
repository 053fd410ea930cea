mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::ChiSquared;
use tdp_core::pvalue_model::{AltPValueCdf, TDistParams};
use tdp_core::stepup::{
    make_critical_vector, rejection_moments, rejection_pmf, rejection_pmf_via_survival, stepup_reject, CriticalVector,
    Family, FamilyParams, RejectionPmf, TwoGroupModel,
};

const N: u32 = 50;

fn f_alt(theta: f64) -> AltPValueCdf {
    AltPValueCdf::t_test(theta, N).unwrap()
}

fn cv(family: Family, lambda: f64, beta: f64, m: usize) -> CriticalVector {
    let params = if family.has_beta() {
        FamilyParams::shaped(lambda, beta)
    } else {
        FamilyParams::linear(lambda)
    };
    make_critical_vector(family, params, m).unwrap()
}

fn pmf(m: usize, m1: usize, theta: f64, cv: &CriticalVector) -> RejectionPmf {
    rejection_pmf(&TwoGroupModel::new(m, m1, f_alt(theta)).unwrap(), cv).unwrap()
}

#[test]
fn family_examples() {
    let bh = cv(Family::Bh, 0.05, 0.0, 100);
    assert!((bh.values()[0] - 0.0005).abs() < 1e-18);
    assert!((bh.values()[99] - 0.05).abs() < 1e-17);
    let exp = cv(Family::Exp, 0.05, 1.0, 100);
    for (a, b) in exp.values().iter().zip(bh.values()) {
        assert!((a - b).abs() <= 1e-15 * b.max(1e-300), "{a} vs {b}");
    }
    let aorc = cv(Family::Aorc, 0.1, 1.0, 100);
    assert!((aorc.values()[49] - 5.0 / 56.0).abs() < 1e-15);
}

#[test]
fn stepup_examples() {
    let t = CriticalVector::custom(vec![0.02, 0.03, 0.05]).unwrap();
    let rej = stepup_reject(&[0.01, 0.04, 0.9], &t).unwrap();
    assert_eq!(rej.r, 1);
    assert_eq!(rej.rejected, vec![0]);
    assert_eq!(stepup_reject(&[0.5, 0.6, 0.7], &t).unwrap().r, 0);
    assert_eq!(stepup_reject(&[0.01, 0.0, 0.02], &t).unwrap().r, 3);
    assert!(stepup_reject(&[0.01, 0.02], &t).is_err());
}

#[test]
fn small_analytic_laws() {
    let one = CriticalVector::custom(vec![0.3]).unwrap();
    let p0 = pmf(1, 0, 0.8, &one);
    assert!((p0.probs()[1] - 0.3).abs() < 1e-15 && (p0.probs()[0] - 0.7).abs() < 1e-15);
    let p1 = pmf(1, 1, 0.8, &one);
    assert!((p1.probs()[1] - f_alt(0.8).eval(0.3).unwrap()).abs() < 1e-15);

    let (t1, t2) = (0.1, 0.2);
    let two = CriticalVector::custom(vec![t1, t2]).unwrap();
    let p = pmf(2, 0, 0.8, &two);
    let want = [1.0 - t2 * t2 - 2.0 * t1 * (1.0 - t2), 2.0 * t1 * (1.0 - t2), t2 * t2];
    for (got, want) in p.probs().iter().zip(want) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
    let mean = want[1] + 2.0 * want[2];
    let var = want[1] + 4.0 * want[2] - mean * mean;
    let (m, v) = rejection_moments(&p, 1.0);
    assert!((m - mean).abs() < 1e-15 && (v - var).abs() < 1e-15);
}

#[test]
fn fast_law_matches_term_by_term_assembly() {
    let configs = [
        (cv(Family::Bh, 0.2, 0.0, 6), 0.8),
        (cv(Family::By, 0.5, 0.0, 9), 0.6),
        (cv(Family::Aorc, 0.3, 20.0, 10), 1.2),
        (cv(Family::Exp, 0.4, 0.5, 12), 0.8),
    ];
    for (c, theta) in configs {
        let m = c.m();
        for m1 in 0..=m {
            let model = TwoGroupModel::new(m, m1, f_alt(theta)).unwrap();
            let fast = rejection_pmf(&model, &c).unwrap();
            let slow = rejection_pmf_via_survival(&model, &c).unwrap();
            for (l, (a, b)) in fast.probs().iter().zip(slow.probs()).enumerate() {
                assert!((a - b).abs() <= 1e-10, "{:?} m1={m1} l={l}: {a} vs {b}", c.family());
            }
        }
    }
}

#[test]
fn empirical_rejection_counts() {
    let reps = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let chi = ChiSquared::new(f64::from(N - 1)).unwrap();
    let configs = [
        (cv(Family::Bh, 0.2, 0.0, 5), 2usize, 0.8),
        (cv(Family::Aorc, 0.2, 15.0, 12), 5, 0.6),
        (cv(Family::Exp, 0.3, 0.5, 20), 10, 0.8),
        (cv(Family::By, 1.0, 0.0, 20), 0, 0.8),
    ];
    for (c, m1, theta) in configs {
        let m = c.m();
        let mu = TDistParams::from_effect_size(theta, N).unwrap().mu();
        let exact = pmf(m, m1, theta, &c);
        let mut counts = vec![0usize; m + 1];
        let mut p = vec![0.0; m];
        for _ in 0..reps {
            for (i, pi) in p.iter_mut().enumerate() {
                *pi = if i < m1 {
                    support::draw_alt_pvalue(&mut rng, &chi, N - 1, mu)
                } else {
                    rng.random()
                };
            }
            counts[support::stepup_count(&mut p, c.values())] += 1;
        }
        for (l, (&k, &q)) in counts.iter().zip(exact.probs()).enumerate() {
            let freq = k as f64 / reps as f64;
            let se = support::binom_se(q, reps).max(1.0 / reps as f64);
            assert!(
                (freq - q).abs() <= 4.0 * se,
                "{:?} m1={m1} l={l}: {freq} vs {q} (se {se})",
                c.family()
            );
        }
    }
}

#[test]
fn normalization_up_to_100() {
    for m in [1usize, 7, 30, 100] {
        let vectors = [
            cv(Family::Bh, 0.2, 0.0, m),
            cv(Family::By, 0.9, 0.0, m),
            cv(Family::Aorc, 0.1, m as f64 * 2.0, m),
            cv(Family::Exp, 0.8, 0.25, m),
        ];
        for c in &vectors {
            let m1s: Vec<usize> = if m <= 30 { (0..=m).collect() } else { (0..=m).step_by(7).chain([m]).collect() };
            for m1 in m1s {
                for theta in [0.6, 2.0] {
                    let total = pmf(m, m1, theta, c).total();
                    assert!((total - 1.0).abs() <= 1e-8, "{:?} m={m} m1={m1}: {total}", c.family());
                }
            }
        }
    }
}

#[test]
fn all_null_law_ignores_alternative() {
    let c = cv(Family::Bh, 0.3, 0.0, 40);
    let a = pmf(40, 0, 0.6, &c);
    let b = pmf(40, 0, 2.0, &c);
    let u = rejection_pmf(&TwoGroupModel::new(40, 0, AltPValueCdf::Uniform).unwrap(), &c).unwrap();
    assert_eq!(a.probs(), b.probs());
    assert_eq!(a.probs(), u.probs());
}

#[test]
fn moment_examples() {
    let mut probs = vec![0.0; 8];
    probs[5] = 1.0;
    let point = RejectionPmf::from_probs(probs).unwrap();
    assert_eq!(rejection_moments(&point, 1.0), (5.0, 0.0));
    let p = pmf(20, 7, 0.8, &cv(Family::Bh, 0.4, 0.0, 20));
    assert_eq!(rejection_moments(&p, 0.0), (0.0, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn moments_scale_with_gamma(m1 in 0usize..=25, lambda in 0.0f64..1.0, g in 0.0f64..=1.0) {
        let p = pmf(25, m1, 0.8, &cv(Family::Bh, lambda, 0.0, 25));
        let (m_one, v_one) = rejection_moments(&p, 1.0);
        let (m_g, v_g) = rejection_moments(&p, g);
        prop_assert!((m_g - g * m_one).abs() <= 1e-12 * m_one.max(1.0));
        prop_assert!((v_g - g * g * v_one).abs() <= 1e-12 * v_one.max(1.0));
        prop_assert!(v_g >= 0.0);
    }

    #[test]
    fn larger_lambda_rejects_more(
        fam in prop::sample::select(vec![Family::Bh, Family::Aorc, Family::Exp]),
        m1 in 0usize..=30,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        theta in 0.5f64..2.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let beta = if fam == Family::Aorc { 40.0 } else { 0.5 };
        let small = pmf(30, m1, theta, &cv(fam, lo, beta, 30));
        let large = pmf(30, m1, theta, &cv(fam, hi, beta, 30));
        for l in 0..=30 {
            prop_assert!(large.cdf(l) <= small.cdf(l) + 1e-10, "l={} {} > {}", l, large.cdf(l), small.cdf(l));
        }
    }

    #[test]
    fn critical_vectors_are_valid(
        fam in prop::sample::select(vec![Family::Bh, Family::By, Family::Aorc, Family::Exp]),
        m in 1usize..150,
        u in 0.0f64..=1.0,
        beta in 0.0f64..50.0,
    ) {
        let (lo, hi) = fam.lambda_range(m);
        let hi = hi.min(5.0);
        let c = cv(fam, lo + u * (hi - lo), beta, m);
        let t = c.values();
        prop_assert_eq!(t.len(), m);
        prop_assert!(t.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(t.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}
