use hetmatch_core::ctmc::{solve_stationary, CtmcKind, PolicyRates, SolveMethod, TruncationSpec};
use hetmatch_core::theory::*;
use hetmatch_core::{Error, MarketParams};
use proptest::prelude::*;

fn mp(lh: f64, le: f64, ph: f64, pe: f64, d: u32) -> MarketParams {
    MarketParams::new(lh, le, ph, pe, d).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn bilateral_h_limits() {
    let r = limit_bilateral_h(&mp(1.0, 2.0, 0.01, 0.5, 1)).unwrap();
    assert!(close(r.constant, 2f64.ln() / 0.5, 1e-12));
    assert_eq!((r.scaling, r.kind), (Scaling::InvPh, BoundKind::Exact));
    assert!(close(r.constant, 1.386294, 1e-6));
    let r = limit_bilateral_h(&mp(2.0, 1.0, 0.01, 0.5, 1)).unwrap();
    assert!(close(r.constant, (4f64 / 3.0).ln() / 2.0, 1e-12));
    assert!(close(r.constant, 0.143841, 1e-6));
    assert_eq!(r.scaling, Scaling::InvPhSq);
    assert!(close(r.predicted_w_h(0.01), r.constant / 1e-4, 1e-6));
    assert!(matches!(
        limit_bilateral_h(&mp(1.0, 1.0, 0.01, 0.5, 1)),
        Err(Error::BalancedRegime)
    ));
}

#[test]
fn bilateral_e_bounds() {
    let b = bounds_bilateral_e(&mp(1.0, 2.0, 0.01, 0.5, 1)).unwrap();
    assert!(close(b.lower.constant, 1.386294, 1e-6));
    assert!(close(b.heuristic.constant, 2.197225, 1e-6));
    assert!(close(b.upper.constant, 2.772589, 1e-6));
    assert_eq!(b.lower.kind, BoundKind::LowerBound);
    assert_eq!(b.upper.kind, BoundKind::UpperBound);
    assert_eq!(b.heuristic.kind, BoundKind::Heuristic);
    let b = bounds_bilateral_e(&mp(2.0, 1.0, 0.01, 0.5, 1)).unwrap();
    for r in [b.lower, b.upper, b.heuristic] {
        assert!(close(r.constant, 0.143841, 1e-6));
        assert_eq!(r.kind, BoundKind::Exact);
    }
    assert!(bounds_bilateral_e(&mp(2.0, 2.0, 0.01, 0.5, 1)).is_err());
}

#[test]
fn chain_bounds() {
    let r = bound_chain(&mp(2.0, 2.0, 0.01, 0.5, 1)).unwrap();
    assert!(close(r.constant, 3f64.ln() / 2.0, 1e-12));
    assert_eq!(r.kind, BoundKind::UpperBound);
    let a = bound_chain(&mp(1.0, 2.0, 0.01, 1.0, 1)).unwrap();
    let b = bound_chain(&mp(1.0, 2.0, 0.01, 1.0, 50)).unwrap();
    assert_eq!(a.constant, b.constant);
    assert_eq!(a.kind, BoundKind::Exact);
    assert!(close(a.constant, 1.5f64.ln(), 1e-12));
    assert!(bound_chain(&mp(1.0, 0.0, 0.01, 0.5, 1)).is_err());
}

#[test]
fn chain_heuristic() {
    let p = mp(3.0, 3.0, 0.002, 0.5, 1);
    let r = heuristic_chain_constant(&p).unwrap();
    assert_eq!(r.kind, BoundKind::Heuristic);
    assert!(((r.constant - 2f64.ln() / 3.0) / (2f64.ln() / 3.0)).abs() < 0.01);
    let tiny = heuristic_chain_constant(&mp(1.0, 2.0, 1e-9, 1.0, 3)).unwrap();
    let prop = bound_chain(&mp(1.0, 2.0, 1e-9, 1.0, 3)).unwrap();
    assert!(close(tiny.constant, prop.constant, 1e-7));
    let mut prev = f64::INFINITY;
    for d in 1..30 {
        let c = heuristic_chain_constant(&mp(1.0, 2.0, 0.02, 0.5, d))
            .unwrap()
            .constant;
        assert!(c <= prev);
        prev = c;
    }
}

#[test]
fn chain_length_limits() {
    assert!(close(
        chain_length_limit(&mp(2.0, 2.0, 0.01, 0.5, 1)).unwrap(),
        4.0,
        1e-12
    ));
    assert!(close(
        chain_length_limit(&mp(3.0, 2.0, 0.01, 1.0, 4)).unwrap(),
        2.5,
        1e-12
    ));
    assert!(chain_length_limit(&mp(3.0, 0.0, 0.01, 0.5, 1)).is_err());
    for lh in [0.5, 1.0, 2.0, 4.0] {
        for le in [0.5, 1.0, 3.0] {
            for d in 1..10 {
                let here = chain_length_limit(&mp(lh, le, 0.01, 0.4, d)).unwrap();
                assert!(chain_length_limit(&mp(lh, le, 0.01, 0.4, d + 1)).unwrap() < here);
                assert!(chain_length_limit(&mp(lh * 1.1, le, 0.01, 0.4, d)).unwrap() > here);
                assert!(chain_length_limit(&mp(lh, le * 1.1, 0.01, 0.4, d)).unwrap() < here);
            }
        }
    }
}

#[test]
fn critical_ratio_root() {
    let x = critical_ratio();
    assert!((2.17..=2.19).contains(&x), "{x}");
    assert!(critical_ratio_residual(x).abs() <= 1e-12);
}

fn h_limit(lh: f64, le: f64) -> f64 {
    limit_bilateral_h(&mp(lh, le, 0.01, 0.5, 1))
        .unwrap()
        .constant
}

#[test]
fn minority_constant_increases_with_h_rate() {
    let le = 2.0;
    let step = 1e-6;
    for i in 1..200 {
        let lh = le * i as f64 / 200.0;
        if lh + step >= le {
            break;
        }
        assert!(
            h_limit(lh + step, le) > h_limit(lh - step.min(lh / 2.0), le),
            "lh = {lh}"
        );
    }
}

#[test]
fn majority_constant_peaks_at_critical_ratio() {
    let x_star = critical_ratio();
    let le = 1.5;
    let step = 1e-6;
    for i in 1..400 {
        let x = 1.0 + i as f64 * 0.02;
        if (x - x_star).abs() < 0.01 {
            continue;
        }
        let slope =
            (h_limit((x + step) * le, le) - h_limit((x - step) * le, le)) / (2.0 * step * le);
        if x < x_star {
            assert!(slope > 0.0, "x = {x}, slope {slope}");
        } else {
            assert!(slope < 0.0, "x = {x}, slope {slope}");
        }
    }
}

#[test]
fn constants_are_finite_on_grids() {
    for lh in [0.1, 0.5, 0.9, 1.1, 2.0, 5.0] {
        for pe in [0.1, 0.5, 1.0] {
            for d in [1, 2, 10] {
                let p = mp(lh, 1.0, 0.01, pe, d);
                let mut values = vec![
                    limit_bilateral_h(&p).unwrap().constant,
                    bound_chain(&p).unwrap().constant,
                ];
                let b = bounds_bilateral_e(&p).unwrap();
                values.extend([b.lower.constant, b.upper.constant, b.heuristic.constant]);
                values.push(heuristic_chain_constant(&p).unwrap().constant);
                values.push(chain_length_limit(&p).unwrap());
                for v in values {
                    assert!(v.is_finite() && v > 0.0, "{p:?}: {v}");
                }
            }
        }
    }
}

#[test]
fn drift_residual_examples() {
    let p = mp(1.0, 2.0, 0.01, 0.5, 1);
    let point = (
        2f64.ln() / (0.5 * 0.01),
        -(2f64.ln()) / (1.0 - 0.25f64).ln(),
    );
    let (r1, r2) = drift_residual(DriftPolicy::BilateralH, point, &p);
    assert!(
        r1.abs() <= 10.0 * 0.01 * 3.0 && r2.abs() <= 10.0 * 0.01 * 3.0,
        "{r1} {r2}"
    );
    let p = mp(2.0, 1.0, 0.01, 0.5, 1);
    let point = ((4f64 / 3.0).ln() / 1e-4, 0.0);
    let (r1, r2) = drift_residual(DriftPolicy::BilateralH, point, &p);
    assert!(
        r1.abs() <= 10.0 * 1e-4 * 3.0 && r2.abs() <= 10.0 * 1e-4 * 3.0,
        "{r1} {r2}"
    );
    let p = mp(1.5, 1.5, 0.01, 0.5, 1);
    assert_eq!(
        drift_residual(DriftPolicy::BilateralH, (0.0, 0.0), &p).0,
        1.5
    );
    assert_eq!(
        drift_residual(DriftPolicy::BilateralE, (0.0, 0.0), &p).0,
        1.5
    );
}

fn bisect_oracle(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of the drift system by nested bisection: `e(h)` zeroes the vertical
/// drift, then `h` zeroes the horizontal drift along that curve.
fn drift_oracle(policy: DriftPolicy, p: &MarketParams, h_hi: f64) -> (f64, f64) {
    let e_of = |h: f64| bisect_oracle(|e| drift_residual(policy, (h, e), p).1, 0.0, 1e4);
    let h = bisect_oracle(|h| drift_residual(policy, (h, e_of(h)), p).0, 0.0, h_hi);
    (h, e_of(h))
}

#[test]
fn drift_solve_matches_bisection_oracle() {
    for (policy, limit) in [
        (DriftPolicy::BilateralH, 2f64.ln()),
        (DriftPolicy::BilateralE, 3f64.ln()),
    ] {
        for ph in [0.01, 0.005, 0.002, 0.001] {
            let p = mp(1.0, 2.0, ph, 0.5, 1);
            let (h, e) = drift_solve(policy, &p, None).unwrap();
            let r = drift_residual(policy, (h, e), &p);
            assert!(r.0.abs().max(r.1.abs()) <= 1e-10);
            let (ho, eo) = drift_oracle(policy, &p, 5.0 * limit / (0.5 * ph));
            assert!(
                (h - ho).abs() <= 1e-6 * ho && (e - eo).abs() <= 1e-6 * eo.max(1.0),
                "{policy:?} {ph}: {h},{e} vs {ho},{eo}"
            );
            let rel = (h * 0.5 * ph / limit - 1.0).abs();
            assert!(rel <= 10.0 * ph, "{policy:?} {ph}: relative gap {rel}");
            if ph <= 0.005 {
                assert!(rel < 0.05);
            }
        }
    }
    let p = mp(2.0, 1.0, 0.01, 0.5, 1);
    let (h, _) = drift_solve(DriftPolicy::BilateralH, &p, None).unwrap();
    let predicted = p.lambda_h * limit_bilateral_h(&p).unwrap().constant / 1e-4;
    assert!(
        ((h - predicted) / predicted).abs() < 0.05,
        "{h} vs {predicted}"
    );
}

#[test]
fn merging_examples() {
    let p1 = mp(1.0, 2.0, 0.02, 0.5, 1);
    let m = merge_gain(&p1, 0.0, 0.5).unwrap();
    assert!(matches!(m.change, MergeChange::Delta(d) if d < 0.0));
    let p1 = mp(1.0, 1.3, 0.02, 0.5, 1);
    let m = merge_gain(&p1, 10.0, 0.0).unwrap();
    assert_eq!(m.change, MergeChange::WorseRegime);
    let p1 = mp(2.0, 1.0, 0.02, 0.5, 1);
    assert_eq!(
        merge_gain(&p1, 0.0, 5.0).unwrap().change,
        MergeChange::BetterRegime
    );
    // Doubling both rates halves the constant since it scales as 1 / lambda_h at a fixed ratio.
    for (lh, le) in [(1.0, 2.0), (2.0, 1.0), (1.0, 1.3)] {
        let p1 = mp(lh, le, 0.02, 0.5, 1);
        let m = merge_gain(&p1, lh, le).unwrap();
        assert!(close(m.merged.constant, m.standalone.constant / 2.0, 1e-12));
        assert_eq!(m.merged.scaling, m.standalone.scaling);
    }
    assert!(merge_gain(&mp(1.0, 2.0, 0.02, 0.5, 1), 1.0, 0.0).is_err());
    assert!(merge_gain(&mp(1.0, 2.0, 0.02, 0.5, 1), -1.0, 0.0).is_err());
}

#[test]
fn competing_thresholds() {
    assert!(close(
        competing_rate_threshold(1.0, 2.0, 1.0, 1).unwrap(),
        3.0,
        1e-12
    ));
    assert!(close(
        competing_rate_threshold(1.0, 2.0, 0.5, 1).unwrap(),
        3.41421,
        1e-5
    ));
    for d in 1..20 {
        assert!(close(
            competing_rate_threshold(1.5, 2.5, 1.0, d).unwrap(),
            4.0,
            1e-12
        ));
    }
    // Table cells at p_h = 0.02 sit above the necessary threshold.
    assert!(competing_rate_threshold(1.0, 2.0, 1.0, 1).unwrap() <= 3.0 + 1e-12);
    assert!(competing_rate_threshold(1.0, 2.0, 0.5, 1).unwrap() <= 5.4);
    assert!(competing_rate_threshold(0.0, 2.0, 0.5, 1).is_err());
}

fn unit_f(_: u64) -> f64 {
    1.0
}

fn spec<'a>(f: &'a dyn Fn(u64) -> f64, g: &'a dyn Fn(u64) -> f64) -> TailBoundSpec<'a> {
    TailBoundSpec {
        f,
        g,
        eta: 10,
        rho: 0.5,
        k: 10,
        epsilon: 0.0,
        c: 0.0,
        delta: 0.0,
        check_up_to: 100,
    }
}

#[test]
fn lemma_trivial_cases() {
    let g = |_: u64| 0.4;
    let s = spec(&unit_f, &g);
    assert!(close(
        lemma1_lower_tail_bound(&s).unwrap(),
        0.5f64.powi(10) / 0.5,
        1e-15
    ));
    assert!(
        lemma1_lower_tail_bound(&TailBoundSpec {
            k: 0,
            ..spec(&unit_f, &g)
        })
        .unwrap()
            >= 1.0
    );
    let f = |_: u64| 0.4;
    let g = |_: u64| 1.0;
    for k in [0, 3, 10] {
        let s = TailBoundSpec { k, ..spec(&f, &g) };
        assert!(close(
            lemma2_upper_tail_bound(&s).unwrap(),
            0.5f64.powi(k as i32) / 0.5,
            1e-15
        ));
    }
    let mut prev = f64::INFINITY;
    for k in 0..=1000 {
        let s = TailBoundSpec {
            k,
            c: 2.0,
            delta: 0.3,
            ..spec(&f, &g)
        };
        let b = lemma2_upper_tail_bound(&s).unwrap();
        assert!(b <= prev * (1.0 + 1e-12));
        prev = b;
    }
}

#[test]
fn lemma_hypotheses_are_enforced() {
    let g = |_: u64| 0.6;
    assert!(matches!(
        lemma1_lower_tail_bound(&spec(&unit_f, &g)),
        Err(Error::Hypothesis(_))
    ));
    let growing = |x: u64| 1.0 + x as f64;
    let small_g = |_: u64| 0.1;
    assert!(lemma1_lower_tail_bound(&spec(&growing, &small_g)).is_err());
    let shrinking_g = |x: u64| 0.4 / (1.0 + x as f64);
    assert!(lemma1_lower_tail_bound(&spec(&unit_f, &shrinking_g)).is_err());
    let f = |_: u64| 0.8;
    let g = |_: u64| 1.0;
    assert!(lemma2_upper_tail_bound(&spec(&f, &g)).is_err());
    let f = |_: u64| 0.4;
    assert!(lemma2_upper_tail_bound(&TailBoundSpec {
        rho: 1.0,
        ..spec(&f, &g)
    })
    .is_err());
}

struct Desk {
    p: MarketParams,
    pi: hetmatch_core::ctmc::StationaryDistribution,
    q: PolicyRates,
}

fn desk() -> Desk {
    let p = mp(1.0, 2.0, 0.05, 0.5, 1);
    let q = PolicyRates::new(CtmcKind::BilateralH, p);
    let pi = solve_stationary(
        &q,
        TruncationSpec::default_for(CtmcKind::BilateralH, &p),
        SolveMethod::Direct,
    )
    .unwrap();
    Desk { p, pi, q }
}

fn left_rate(p: &MarketParams) -> impl Fn(u64) -> f64 + '_ {
    move |h: u64| {
        p.lambda_h * (1.0 - (1.0 - p.p_h * p.p_h).powi(h as i32))
            + p.lambda_e * (1.0 - (1.0 - p.p_e * p.p_h).powi(h as i32))
    }
}

#[test]
fn lower_tail_bound_dominates_exact_probabilities() {
    let Desk { p, pi, q } = desk();
    let e_cap = (2.0 / p.p_h.sqrt()).floor() as usize;
    let epsilon = pi.tail_e_above(e_cap);
    let f = move |h: u64| {
        p.lambda_h * (1.0 - p.p_h * p.p_h).powi(h as i32) * (1.0 - p.p_e * p.p_h).powi(e_cap as i32)
    };
    let g = left_rate(&p);
    check_lemma1_envelope(&q, &f, &g, 150, 60, &|e| e <= e_cap).unwrap();
    let mut used = 0;
    for eta in 1..100u64 {
        let rho = g(eta + 1) / f(eta) * (1.0 + 1e-9);
        if rho >= 1.0 {
            continue;
        }
        for k in [5u64, 10, 20] {
            let s = TailBoundSpec {
                f: &f,
                g: &g,
                eta,
                rho,
                k,
                epsilon,
                c: 0.0,
                delta: 0.0,
                check_up_to: 150,
            };
            let bound = lemma1_lower_tail_bound(&s).unwrap();
            let exact = if k > eta {
                0.0
            } else {
                1.0 - pi.tail_h((eta - k + 1) as usize)
            };
            assert!(exact <= bound, "eta {eta} k {k}: {exact} > {bound}");
            used += 1;
        }
    }
    assert!(used > 10);
}

#[test]
fn upper_tail_bound_dominates_exact_probabilities() {
    let Desk { p, pi, q } = desk();
    let f = move |h: u64| p.lambda_h * (1.0 - p.p_h * p.p_h).powi(h as i32);
    let g = left_rate(&p);
    check_lemma2_envelope(&q, &f, &g, 150, 60, &|_, _| true).unwrap();
    let mut used = 0;
    for eta in 1..100u64 {
        let rho = f(eta) / g(eta + 1);
        if rho >= 1.0 {
            continue;
        }
        for k in [5u64, 10, 20] {
            let s = TailBoundSpec {
                f: &f,
                g: &g,
                eta,
                rho,
                k,
                epsilon: 0.0,
                c: 0.0,
                delta: 0.0,
                check_up_to: 300,
            };
            let bound = lemma2_upper_tail_bound(&s).unwrap();
            let exact = pi.tail_h((eta + k) as usize);
            assert!(exact <= bound, "eta {eta} k {k}: {exact} > {bound}");
            used += 1;
        }
    }
    assert!(used > 10);
}

proptest! {
    #[test]
    fn bilateral_e_sandwich(lh in 0.01f64..10.0, gap in 0.01f64..10.0, pe in 0.01f64..1.0) {
        let p = mp(lh, lh + gap, 0.001, pe, 1);
        let b = bounds_bilateral_e(&p).unwrap();
        prop_assert!(b.lower.constant <= b.heuristic.constant);
        prop_assert!(b.heuristic.constant <= b.upper.constant);
    }

    #[test]
    fn chains_beat_bilateral_in_minority(lh in 0.01f64..10.0, gap in 0.01f64..10.0, pe in 0.01f64..1.0, d in 1u32..50) {
        let p = mp(lh, lh + gap, 0.001, pe, d);
        prop_assert!(bound_chain(&p).unwrap().constant < limit_bilateral_h(&p).unwrap().constant);
    }

    #[test]
    fn threshold_is_one_plus_e1_when_always_compatible(lh in 0.01f64..10.0, le in 0.01f64..10.0, d in 1u32..50) {
        let t = competing_rate_threshold(lh, le, 1.0, d).unwrap();
        prop_assert!((t - (lh + le)).abs() <= 1e-9 * (lh + le));
    }
}
