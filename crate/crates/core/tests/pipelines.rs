use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use optrec_core::circle::{Angle, IntervalUnion};
use optrec_core::density::{set_density, GridSet};
use optrec_core::exactlin::{in_subspace, moment_subspace, MomentFamily, Rational};
use optrec_core::sequences::{bohr_members, BohrKind, BohrSpec, Real};
use optrec_core::torusdyn::{
    correlation_measure, monte_carlo_correlation, prop113_build, prop113_verify, recurrence_scan,
    thm15_build, thm15_verify, thm19_build, thm19_snap_audit, BoxLayout, CommutingPair, Family, Iterate,
    ProductSet, Rotation, System, Thm15Options, WeylSystem,
};

fn rat(p: i64, q: i64) -> Rational {
    Rational::new(p.into(), q.into())
}

#[test]
fn thm19_snapped_indices_lie_in_v() {
    let a = [1i64, 2, 3, 4];
    let v = moment_subspace(&MomentFamily::quadratic(a.to_vec()).unwrap()).unwrap();
    let e = GridSet::from_values(5, &[0, 1, 2, 3, 4]).unwrap();
    for (layout, trials) in [(BoxLayout::Paper, 400_000), (BoxLayout::WrapFree, 4_000_000)] {
        let b = thm19_build(&e, &a, layout).unwrap();
        let audit = thm19_snap_audit(&b, 1, 1000, trials, 11).unwrap();
        assert!(audit.hits >= 5, "{layout:?}: only {} hits", audit.hits);
        assert_eq!(audit.violations, 0);
        for tuples in &audit.hit_indices {
            for t in tuples {
                let x: Vec<i64> = t.iter().map(|&c| c as i64).collect();
                match layout {
                    BoxLayout::WrapFree => assert!(in_subspace(&x, &v).unwrap(), "{x:?}"),
                    // Modulo N0 some representative lies in V.
                    BoxLayout::Paper => {
                        let s: i64 = b.form.iter().zip(&x).map(|(w, c)| w * c).sum();
                        assert_eq!(s.rem_euclid(5), 0, "{x:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn thm19_measure_is_eps_power_times_density() {
    let e = GridSet::new(2, 3, vec![vec![0, 1], vec![2, 2], vec![1, 0]]).unwrap();
    let b = thm19_build(&e, &[1, 3, 4, 6], BoxLayout::Paper).unwrap();
    let want = &b.epsilon * &b.epsilon * set_density(&e).unwrap();
    assert_eq!(b.mu_a, want);
    let full = GridSet::full(1, 7).unwrap();
    let b = thm19_build(&full, &[1, 2, 3, 4], BoxLayout::Paper).unwrap();
    assert_eq!(b.mu_a, b.epsilon);
}

#[test]
fn monte_carlo_agrees_with_certified_measure() {
    let mut rng = ChaCha8Rng::seed_from_u64(20261016);
    let mut misses = 0;
    let trials = 100;
    for t in 0..trials {
        let lo = rng.gen_range(0.0..0.6);
        let set = ProductSet::single(IntervalUnion::interval(lo, lo + rng.gen_range(0.1..0.4)));
        let n: i128 = rng.gen_range(1..300);
        let (sys, exps) = if t % 2 == 0 {
            (
                System::Weyl(WeylSystem::new(vec![Angle::golden()]).unwrap()),
                vec![Iterate::single(0), Iterate::single(n), Iterate::single(2 * n)],
            )
        } else {
            (
                System::Pair(CommutingPair { alpha: Angle::sqrt(3).unwrap() }),
                vec![Iterate::pair(0, 0), Iterate::pair(n, 0), Iterate::pair(0, n * n)],
            )
        };
        let exact = correlation_measure(&sys, &set, &exps).unwrap();
        let (mean, se) = monte_carlo_correlation(&sys, &set, &exps, 100_000, t).unwrap();
        if (mean - exact.value).abs() > 3.0 * se + exact.error_bound {
            misses += 1;
        }
    }
    assert!(misses <= 1, "{misses} of {trials} outside 3 sigma");
}

#[test]
fn verify_never_passes_without_symbolic_bound() {
    let b = thm15_build(&[1, 2, 3, 4, 5], 3, &Thm15Options::default()).unwrap();
    let r = thm15_verify(&b, 1, 30).unwrap();
    assert!(!r.symbolic_holds);
    assert!(!r.pass());
    assert!(r.all_below_target);

    let b = prop113_build(2, 40, Angle::golden()).unwrap();
    let r = prop113_verify(&b, 1, 40).unwrap();
    assert_eq!(r.pass(), r.symbolic_holds && r.all_below_target && r.all_below_analytic);
    assert!(r.pass());
}

#[test]
fn bohr_density_tends_to_two_delta() {
    for alpha in ["sqrt2", "golden"] {
        for (p, q) in [(1, 20), (1, 10), (1, 5)] {
            let spec = BohrSpec::new(vec![Real::parse(alpha).unwrap()], rat(p, q), BohrKind::Linear).unwrap();
            let m = bohr_members(&spec, 0, 1_000_000);
            let quotient = m.members.len() as f64 / 1e6;
            let want = 2.0 * p as f64 / q as f64;
            assert!((quotient - want).abs() < 0.01, "{alpha} delta={p}/{q}: {quotient}");
        }
    }
}

#[test]
fn quadratic_bohr_set_density() {
    // (n sqrt2, n^2 sqrt2) equidistributes on T^2, so both near 0 has
    // density (2 delta)^2.
    let spec = BohrSpec::new(
        vec![Real::parse("sqrt2").unwrap()],
        rat(1, 10),
        BohrKind::Polynomial { q1: vec![0, 1], q2: vec![0, 0, 1] },
    )
    .unwrap();
    let m = bohr_members(&spec, 0, 200_000);
    let q = m.members.len() as f64 / 2e5;
    assert!((q - 0.04).abs() < 0.005, "{q}");
}

#[test]
fn scan_above_measure_finds_nothing() {
    let set = ProductSet::single(IntervalUnion::interval(0.0, 0.3));
    let sys = System::Weyl(WeylSystem::new(vec![Angle::golden()]).unwrap());
    let r = recurrence_scan(&sys, &set, &Family::arithmetic(1), 1, 2000, 0.31).unwrap();
    assert!(r.qualifying.is_empty());
    assert_eq!(r.max_gap, 2001);
}

#[test]
fn rotation_returns_are_syndetic() {
    let set = ProductSet::single(IntervalUnion::interval(0.0, 0.5));
    let sys = System::Rotation(Rotation { alpha: Angle::golden() });
    // mu(A cap T^-n A) = 1/2 - ||n alpha||, above 0.2 when ||n alpha|| < 0.3.
    let r = recurrence_scan(&sys, &set, &Family::arithmetic(1), 1, 5000, 0.2).unwrap();
    assert!(r.max_gap <= 3, "{}", r.max_gap);
    let frac = r.qualifying.len() as f64 / 5000.0;
    assert!((frac - 0.6).abs() < 0.01);
}

#[test]
fn exact_rational_rotation_correlations() {
    // alpha = 1/4: every n that is a multiple of 4 returns A exactly.
    let set = ProductSet::single(IntervalUnion::interval(0.0, 0.25));
    let sys = System::Rotation(Rotation { alpha: Angle::ratio(1, 4).unwrap() });
    for n in [4i128, 8, 400] {
        let r = correlation_measure(&sys, &set, &[Iterate::single(0), Iterate::single(n)]).unwrap();
        assert!((r.value - 0.25).abs() <= r.error_bound + 1e-15);
    }
    let r = correlation_measure(&sys, &set, &[Iterate::single(0), Iterate::single(2)]).unwrap();
    assert!(r.value.abs() <= r.error_bound + 1e-15);
}
