use num_bigint::BigInt;
use num_traits::{One, Zero};
use proptest::prelude::*;

use optrec_core::circle::{Angle, IntervalUnion};
use optrec_core::density::{
    interpolation_audit, solution_density, weighted_solution_sum, GridFunction, GridSet,
};
use optrec_core::exactlin::{
    in_subspace, lattice_point_count, membership_margin, moment_subspace, vandermonde_coeffs, MomentFamily,
    Rational,
};
use optrec_core::report::parse_rational;
use optrec_core::sequences::{
    eval_sequence, uniform_partition, weyl_sum, equidistribution_test, HardyExpr, Real, SequenceSpec,
    SequenceValue,
};
use optrec_core::setsynth::{ruzsa_set_explicit, solution_system, to_digits, CoefficientNorm};
use optrec_core::torusdyn::{
    correlation_measure, pair_power, pair_t2, weyl_power, weyl_step, CommutingPair, Iterate, ProductSet,
    System, WeylSystem,
};

fn rat(p: i64, q: i64) -> Rational {
    Rational::new(p.into(), q.into())
}

fn distinct4(lo: i64, hi: i64) -> impl Strategy<Value = [i64; 4]> {
    proptest::collection::btree_set(lo..=hi, 4)
        .prop_map(|s| s.into_iter().collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|v| [v[0], v[1], v[2], v[3]])
}

/// Strictly increasing 5-tuples.
fn increasing5(lo: i64, hi: i64) -> impl Strategy<Value = [i64; 5]> {
    proptest::collection::btree_set(lo..=hi, 5)
        .prop_map(|s| s.into_iter().collect::<Vec<_>>())
        .prop_map(|v| [v[0], v[1], v[2], v[3], v[4]])
}

/// `det [1, a, a^2, x]`, zero exactly when `x` lies on a quadratic in `a`.
fn quadratic_det(a: &[i64; 4], x: &[i64]) -> i128 {
    let m: Vec<[i128; 4]> = (0..4)
        .map(|i| {
            let t = a[i] as i128;
            [1, t, t * t, x[i] as i128]
        })
        .collect();
    let det3 = |r: [usize; 3], c: [usize; 3]| -> i128 {
        let g = |i: usize, j: usize| m[r[i]][c[j]];
        g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
            + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
    };
    (0..4)
        .map(|j| {
            let cols: Vec<usize> = (0..4).filter(|&c| c != j).collect();
            let sign = if j % 2 == 0 { 1 } else { -1 };
            sign * m[0][j] * det3([1, 2, 3], [cols[0], cols[1], cols[2]])
        })
        .sum()
}

fn grid_function(values: &[(u8, u8)]) -> GridFunction {
    GridFunction::from_values(values.iter().map(|&(p, q)| rat(p.min(q) as i64, q.max(1) as i64)).collect())
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn vandermonde_kills_quadratics(a in distinct4(-50, 50), c in prop::array::uniform3(-1000i64..1000)) {
        let v = vandermonde_coeffs(&a).unwrap();
        let s: BigInt = (0..4)
            .map(|i| &v[i] * BigInt::from(c[0] + c[1] * a[i] + c[2] * a[i] * a[i]))
            .sum();
        prop_assert!(s.is_zero());
    }

    #[test]
    fn forms_annihilate_moments(a in distinct4(-20, 20)) {
        let v = moment_subspace(&MomentFamily::quadratic(a.to_vec()).unwrap()).unwrap();
        for f in v.forms() {
            for k in 0..3u32 {
                let s: BigInt = f.iter().zip(&a).map(|(w, &x)| w * BigInt::from(x).pow(k)).sum();
                prop_assert!(s.is_zero());
            }
        }
    }

    #[test]
    fn lattice_count_matches_determinant_oracle(a in distinct4(-6, 6), n in 1u64..=8) {
        let v = moment_subspace(&MomentFamily::quadratic(a.to_vec()).unwrap()).unwrap();
        let mut brute = 0u64;
        let n = n as i64;
        for x0 in 0..n {
            for x1 in 0..n {
                for x2 in 0..n {
                    for x3 in 0..n {
                        brute += (quadratic_det(&a, &[x0, x1, x2, x3]) == 0) as u64;
                    }
                }
            }
        }
        prop_assert_eq!(lattice_point_count(&v, n as u64).unwrap(), brute);
    }

    #[test]
    fn margin_snaps_near_points(
        a in distinct4(0, 12),
        c in prop::array::uniform3(-3i64..=3),
        e in prop::array::uniform4(-1i64..=1),
        t in prop::array::uniform3(-50i64..=50),
    ) {
        let v = moment_subspace(&MomentFamily::quadratic(a.to_vec()).unwrap()).unwrap();
        let eps = membership_margin(&v.forms()[0]).unwrap();
        // x0 on V, x = x0 + e, y = x0 + small V-direction: y is a V-point.
        let x0: Vec<i64> = a.iter().map(|&ai| c[0] + c[1] * ai + c[2] * ai * ai).collect();
        let x: Vec<i64> = x0.iter().zip(&e).map(|(p, q)| p + q).collect();
        let scale = Rational::new(BigInt::one(), BigInt::from(10_000));
        let y: Vec<Rational> = a
            .iter()
            .zip(&x0)
            .map(|(&ai, &p)| {
                Rational::from_integer(p.into())
                    + &scale * Rational::from_integer((t[0] + t[1] * ai + t[2] * ai * ai).into())
            })
            .collect();
        let dist = x
            .iter()
            .zip(&y)
            .map(|(&xi, yi)| {
                let d = Rational::from_integer(xi.into()) - yi;
                if d < Rational::zero() { -d } else { d }
            })
            .max()
            .unwrap();
        if dist < eps {
            prop_assert!(in_subspace(&x, &v).unwrap());
        }
        prop_assert!(in_subspace(&x0, &v).unwrap());
    }

    #[test]
    fn solution_system_identities(a in increasing5(-30, 30)) {
        let s = solution_system(&a).unwrap();
        for k in 0..3u32 {
            let lhs: i128 = (0..4).map(|i| s.v()[i] as i128 * (a[i] as i128).pow(k)).sum();
            let rhs: i128 = (0..4).map(|i| s.vt()[i] as i128 * (a[i + 1] as i128).pow(k)).sum();
            prop_assert_eq!(lhs, 0);
            prop_assert_eq!(rhs, 0);
        }
    }

    #[test]
    fn interpolation_never_violated(
        vals in prop::collection::vec((0u8..=12, 1u8..=12), 2..24),
        p in prop::sample::select(vec![(1i64, 4i64), (1, 2), (3, 4)]),
        r in 1i64..=2,
    ) {
        let f = grid_function(&vals);
        let audit = interpolation_audit(&f, &rat(p.0, p.1), &rat(r, 1)).unwrap();
        prop_assert!(audit.holds, "{:?}", audit);
    }

    #[test]
    fn weighted_sum_of_indicator_is_density(
        a in distinct4(0, 8),
        n in 2u64..=12,
        bits in prop::collection::vec(any::<bool>(), 12),
    ) {
        let members: Vec<Vec<u64>> = (0..n).filter(|&i| bits[i as usize]).map(|i| vec![i]).collect();
        let e = GridSet::new(1, n, members).unwrap();
        let v = moment_subspace(&MomentFamily::quadratic(a.to_vec()).unwrap()).unwrap();
        let direct = solution_density(&v, &e).unwrap().big_d_val;
        prop_assert_eq!(weighted_solution_sum(&GridFunction::indicator(&e), &v).unwrap(), direct);
    }

    #[test]
    fn closed_form_powers_match_iteration(p in -40i64..40, q in 1i64..60, x in 0i64..97, y in 0i64..97, n in 0i128..60) {
        let alpha = rat(p, q);
        let start = (rat(x, 97), rat(y, 97));
        let mut it = start.clone();
        for _ in 0..n {
            it = weyl_step(&alpha, it);
        }
        prop_assert_eq!(weyl_power(&alpha, n, start.clone()), it.clone());
        // T_1 and T_2 commute, and the pair closed form agrees.
        let a = pair_t2(&alpha, weyl_step(&alpha, start.clone()));
        let b = weyl_step(&alpha, pair_t2(&alpha, start.clone()));
        prop_assert_eq!(a, b);
        let mut both = it;
        for _ in 0..3 {
            both = pair_t2(&alpha, both);
        }
        prop_assert_eq!(pair_power(&alpha, n, 3, start), both);
    }

    #[test]
    fn more_terms_never_increase_correlation(
        lo in 0u32..60, len in 5u32..40, n in 1i128..500, k in 1usize..4,
    ) {
        let b = IntervalUnion::interval(lo as f64 / 100.0, (lo + len) as f64 / 100.0);
        let set = ProductSet::single(b);
        let sys = System::Weyl(WeylSystem::new(vec![Angle::golden()]).unwrap());
        let all: Vec<Iterate> = (0..=k as i128 + 1).map(|j| Iterate::single(j * n)).collect();
        let fewer = correlation_measure(&sys, &set, &all[..=k]).unwrap();
        let more = correlation_measure(&sys, &set, &all).unwrap();
        prop_assert!(more.value <= fewer.value + more.error_bound + fewer.error_bound);
        let zero = correlation_measure(&sys, &set, &[Iterate::single(0), Iterate::single(0)]).unwrap();
        prop_assert!((zero.value - set.measure()).abs() <= zero.error_bound + 1e-15);
    }

    #[test]
    fn pair_correlation_at_zero_is_measure(lo in 0u32..60, len in 5u32..40) {
        let set = ProductSet::single(IntervalUnion::interval(lo as f64 / 100.0, (lo + len) as f64 / 100.0));
        let sys = System::Pair(CommutingPair { alpha: Angle::sqrt(2).unwrap() });
        let r = correlation_measure(&sys, &set, &[Iterate::pair(0, 0)]).unwrap();
        prop_assert!((r.value - set.measure()).abs() <= r.error_bound + 1e-15);
    }

    #[test]
    fn certified_floors_are_exact(k in 2u64..50, n in 1u64..5000) {
        let isqrt = |v: u128| -> u128 {
            let mut r = (v as f64).sqrt() as u128;
            while r * r > v { r -= 1; }
            while (r + 1) * (r + 1) <= v { r += 1; }
            r
        };
        let check = |spec: &SequenceSpec, want: u128| -> Result<(), TestCaseError> {
            match eval_sequence(spec, n).unwrap() {
                SequenceValue::Certified(v) => prop_assert_eq!(v, BigInt::from(want)),
                SequenceValue::Indeterminate { .. } => {}
            }
            Ok(())
        };
        let beatty = SequenceSpec::Beatty { theta: Real::parse(&format!("sqrt{k}")).unwrap(), gamma: Real::parse("0").unwrap() };
        let n2 = n as u128;
        check(&beatty, isqrt(n2 * n2 * k as u128))?;
        check(&SequenceSpec::Hardy(HardyExpr::parse("x^(3/2)").unwrap()), isqrt(n2 * n2 * n2))?;
        check(&SequenceSpec::Hardy(HardyExpr::parse("x^(1/2)").unwrap()), isqrt(n2))?;
    }

    #[test]
    fn weyl_sums_are_bounded(b in prop::collection::vec(-5i64..=5, 1..3), m in 0u64..1000, len in 1u64..2000) {
        let alpha: Vec<Real> = ["sqrt2", "sqrt3"].iter().take(b.len()).map(|s| Real::parse(s).unwrap()).collect();
        let s = weyl_sum(&b, &alpha, &Real::parse("1/3").unwrap(), m, m + len).unwrap();
        prop_assert!(s <= 1.0 + 1e-12);
    }

    #[test]
    fn partition_frequencies_sum_to_one(k in 1u64..20, len in 1u64..5000) {
        let a = Real::parse("sqrt5").unwrap().frac128();
        let r = equidistribution_test(
            |x| (Some(vec![a.wrapping_mul(x as u128 * x as u128)]), false),
            &uniform_partition(k),
            0,
            len,
        )
        .unwrap();
        let total: Rational = r.boxes.iter().map(|b| parse_rational(&b.frequency.exact).unwrap()).sum();
        prop_assert_eq!(total, Rational::one());
    }
}

/// Digit sets at small `m`: scaling by `c <= C` never carries, and the two
/// equations hold over the integers exactly when they hold digit by digit.
#[test]
fn digit_sets_embed_without_carries() {
    let a = [1i64, 2, 3, 4, 5];
    let set = ruzsa_set_explicit(&a, (19, 20), CoefficientNorm::Primitive, 3, 48).unwrap();
    let (m, d, c) = (set.params.m, set.params.d, set.params.c);
    for &b in &set.members {
        let digits = to_digits(b, m, d);
        for k in 0..=c {
            let scaled: Vec<u64> = digits.iter().map(|x| x * k).collect();
            assert_eq!(to_digits(b * k, m, d), scaled);
        }
    }
    let sys = solution_system(&a).unwrap().primitive();
    let [e1, e2] = sys.equations();
    let mem = &set.members;
    let digit = |x: u64, j: usize| to_digits(x, m, d)[j] as i64;
    for &b1 in mem {
        for &b2 in mem {
            for &b3 in mem {
                for &b4 in mem {
                    for &b5 in mem.iter().take(6) {
                        let b = [b1, b2, b3, b4, b5];
                        for e in [e1, e2] {
                            let whole: i64 = (0..5).map(|i| e[i] * b[i] as i64).sum();
                            let per_digit = (0..d as usize)
                                .all(|j| (0..5).map(|i| e[i] * digit(b[i], j)).sum::<i64>() == 0);
                            assert_eq!(whole == 0, per_digit, "{b:?}");
                        }
                    }
                }
            }
        }
    }
}
