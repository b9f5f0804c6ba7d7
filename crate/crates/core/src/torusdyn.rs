//! Skew products on tori and their correlation measures.
//!
//! The Weyl map is `T(x, y) = (x + alpha, y + 2x + alpha)` with
//! `T^n(x, y) = (x + n alpha, y + 2n x + n^2 alpha)`; the commuting pair
//! adds `T_2(x, y) = (x, y - 2 alpha)`. For sets `A = T^m x B` every
//! iterate `T_1^p T_2^q` moves the fiber coordinate to
//! `y + 2p x + (p^2 - 2q) alpha`, so correlations reduce to integrals over
//! `T^2` of products of `1_B` along linear forms, computed exactly by
//! [`crate::strip`].

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::circle::{wrap, Angle, IntervalUnion, StepFunction};
use crate::density::GridSet;
use crate::error::{Error, Result};
use crate::exactlin::{membership_margin, moment_subspace, MomentFamily, Rational};
use crate::report::Exact;
use crate::sequences::{eval_sequence_at, SequenceSpec, SequenceValue};
use crate::setsynth::{
    ap3_free, behrend_set, greedy_solution_free, ruzsa_set, solution_system, verify_solution_free,
    RuzsaOptions, SolutionSystem, Verdict,
};
use crate::strip::{self, Term};

/// `x -> x + alpha` on `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    pub alpha: Angle,
}

/// The Weyl map acting coordinate-wise on `T^{2m}`, one angle per
/// coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylSystem {
    pub alpha: Vec<Angle>,
}

impl WeylSystem {
    pub fn new(alpha: Vec<Angle>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidParameter("need at least one coordinate".into()));
        }
        Ok(Self { alpha })
    }

    pub fn m(&self) -> usize {
        self.alpha.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommutingPair {
    pub alpha: Angle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Rotation(Rotation),
    Weyl(WeylSystem),
    Pair(CommutingPair),
}

impl System {
    pub fn m(&self) -> usize {
        match self {
            Self::Weyl(w) => w.m(),
            _ => 1,
        }
    }

    fn angle(&self, c: usize) -> &Angle {
        match self {
            Self::Rotation(r) => &r.alpha,
            Self::Weyl(w) => &w.alpha[c],
            Self::Pair(p) => &p.alpha,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Rotation(r) => format!("rotation(alpha={})", r.alpha.label()),
            Self::Weyl(w) => format!(
                "weyl(alpha=[{}])",
                w.alpha.iter().map(|a| a.label().to_string()).collect::<Vec<_>>().join(",")
            ),
            Self::Pair(p) => format!("commuting-pair(alpha={})", p.alpha.label()),
        }
    }
}

/// The iterate `T^t1` (or `T_1^t1 T_2^t2` for a commuting pair).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Iterate {
    pub t1: i128,
    pub t2: i128,
}

impl Iterate {
    pub fn single(e: i128) -> Self {
        Self { t1: e, t2: 0 }
    }

    pub fn pair(t1: i128, t2: i128) -> Self {
        Self { t1, t2 }
    }
}

/// Circle arithmetic used by the point maps; `f64` and exact rationals.
pub trait CirclePoint: Clone + PartialEq + std::fmt::Debug {
    fn add(&self, o: &Self) -> Self;
    fn mul_int(&self, k: i128) -> Self;
}

impl CirclePoint for f64 {
    fn add(&self, o: &Self) -> Self {
        wrap(self + o)
    }

    fn mul_int(&self, k: i128) -> Self {
        wrap(k as f64 * self)
    }
}

impl CirclePoint for Rational {
    fn add(&self, o: &Self) -> Self {
        (self + o).fract_part()
    }

    fn mul_int(&self, k: i128) -> Self {
        (self * Rational::from_integer(k.into())).fract_part()
    }
}

trait FractPart {
    fn fract_part(&self) -> Self;
}

impl FractPart for Rational {
    fn fract_part(&self) -> Self {
        self - self.floor()
    }
}

pub fn weyl_step<P: CirclePoint>(alpha: &P, (x, y): (P, P)) -> (P, P) {
    let ny = y.add(&x.mul_int(2)).add(alpha);
    (x.add(alpha), ny)
}

pub fn weyl_power<P: CirclePoint>(alpha: &P, n: i128, (x, y): (P, P)) -> (P, P) {
    let ny = y.add(&x.mul_int(2 * n)).add(&alpha.mul_int(n * n));
    (x.add(&alpha.mul_int(n)), ny)
}

pub fn pair_t2<P: CirclePoint>(alpha: &P, (x, y): (P, P)) -> (P, P) {
    (x, y.add(&alpha.mul_int(-2)))
}

/// `T_1^p T_2^q` in closed form.
pub fn pair_power<P: CirclePoint>(alpha: &P, p: i128, q: i128, pt: (P, P)) -> (P, P) {
    let (x, y) = weyl_power(alpha, p, pt);
    (x, y.add(&alpha.mul_int(-2 * q)))
}

/// `A = T^m x (B_1 x ... x B_m)`; for a rotation, `A = B_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSet {
    pub fibers: Vec<IntervalUnion>,
}

impl ProductSet {
    pub fn new(fibers: Vec<IntervalUnion>) -> Self {
        Self { fibers }
    }

    pub fn single(b: IntervalUnion) -> Self {
        Self { fibers: vec![b] }
    }

    pub fn measure(&self) -> f64 {
        self.fibers.iter().map(|b| b.measure()).product()
    }
}

/// A real number with a bound on its absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measured {
    pub value: f64,
    pub error_bound: f64,
}

impl Measured {
    /// `Some(true)` if certainly `> t`, `Some(false)` if certainly `<= t`.
    pub fn exceeds(&self, t: f64) -> Option<bool> {
        if self.value - self.error_bound > t {
            Some(true)
        } else if self.value + self.error_bound <= t {
            Some(false)
        } else {
            None
        }
    }
}

/// Fiber shift `(slope, alpha multiplier)` of one iterate.
fn fiber_shift(sys: &System, it: Iterate) -> Result<(i128, i128)> {
    let over = || Error::Overflow("iterate exponent too large".into());
    match sys {
        System::Rotation(_) | System::Weyl(_) if it.t2 != 0 => Err(Error::InvalidParameter(
            "second generator only exists for a commuting pair".into(),
        )),
        System::Rotation(_) => Ok((0, it.t1)),
        _ => {
            let slope = it.t1.checked_mul(2).ok_or_else(over)?;
            let sq = it.t1.checked_mul(it.t1).ok_or_else(over)?;
            let c = sq
                .checked_sub(it.t2.checked_mul(2).ok_or_else(over)?)
                .ok_or_else(over)?;
            Ok((slope, c))
        }
    }
}

fn coordinate_measure(f: &StepFunction, alpha: &Angle, shifts: &[(i128, i128)]) -> Measured {
    let (s1, c1) = shifts[0];
    let g = shifts
        .iter()
        .fold(0i128, |g, &(s, _)| g.gcd(&(s - s1)));
    let mut offset_err: f64 = 0.0;
    let terms: Vec<Term> = shifts
        .iter()
        .map(|&(s, c)| {
            let delta = if g == 0 { 0 } else { (s - s1) / g };
            let k = BigInt::from(c - c1);
            offset_err = offset_err.max(alpha.mul_error(&k));
            Term {
                form: [delta as f64, 1.0],
                offset: alpha.mul_f64(&k),
                f,
            }
        })
        .collect();
    let r = strip::integrate(&terms);
    let sens = strip::offset_sensitivity(&terms);
    Measured {
        value: r.value,
        // Offsets and the f64 endpoints of B each carry rounding error.
        error_bound: r.error_bound + sens * (offset_err + f64::EPSILON),
    }
}

/// `mu(T^{-e_1} A ∩ ... ∩ T^{-e_k} A)`.
pub fn correlation_measure(sys: &System, a: &ProductSet, exps: &[Iterate]) -> Result<Measured> {
    if exps.is_empty() {
        return Err(Error::InvalidParameter("need at least one iterate".into()));
    }
    if a.fibers.len() != sys.m() {
        return Err(Error::DimensionMismatch {
            expected: sys.m(),
            got: a.fibers.len(),
        });
    }
    let shifts = exps
        .iter()
        .map(|&e| fiber_shift(sys, e))
        .collect::<Result<Vec<_>>>()?;
    let mut value = 1.0;
    let mut err = 0.0;
    for (c, b) in a.fibers.iter().enumerate() {
        let f = b.indicator();
        let r = coordinate_measure(&f, sys.angle(c), &shifts);
        err = err * (r.value + r.error_bound) + r.error_bound * value;
        value *= r.value;
    }
    Ok(Measured {
        value,
        error_bound: err,
    })
}

/// Monte Carlo estimate `(mean, standard error)` of the same quantity,
/// evaluating the maps on random points in 128-bit fixed point.
pub fn monte_carlo_correlation(
    sys: &System,
    a: &ProductSet,
    exps: &[Iterate],
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let shifts = exps
        .iter()
        .map(|&e| fiber_shift(sys, e))
        .collect::<Result<Vec<_>>>()?;
    let m = sys.m();
    let alphas: Vec<u128> = (0..m).map(|c| sys.angle(c).frac128()).collect();
    let chunks = 64u64;
    let per = samples / chunks;
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            let count = if k == chunks - 1 { samples - per * (chunks - 1) } else { per };
            let mut hits = 0u64;
            for _ in 0..count {
                let mut inside = true;
                for (c, &al) in alphas.iter().enumerate() {
                    let x: u128 = rng.gen();
                    let y: u128 = rng.gen();
                    for &(s, cc) in &shifts {
                        let v = y
                            .wrapping_add(x.wrapping_mul(s as u128))
                            .wrapping_add(al.wrapping_mul(cc as u128));
                        let t = (v >> 75) as f64 / 2f64.powi(53);
                        if !a.fibers[c].contains(t) {
                            inside = false;
                            break;
                        }
                    }
                    if !inside {
                        break;
                    }
                }
                hits += inside as u64;
            }
            hits
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok((p, (p * (1.0 - p) / samples as f64).sqrt()))
}

/// Where the solution-free set comes from.
#[derive(Debug, Clone)]
pub enum LambdaSource {
    /// Greedy solution-free subset of `[0, limit)`.
    Greedy { limit: u64 },
    /// The digit construction at the given exponent.
    Ruzsa { epsilon: (u64, u64), opts: RuzsaOptions },
    Explicit { members: Vec<u64>, l: u64 },
}

#[derive(Debug, Clone)]
pub struct Thm15Options {
    pub lambda: LambdaSource,
    /// Defaults to the largest positive part of the primitive equations.
    pub c: Option<u64>,
    pub alpha: Angle,
    pub budget: u128,
}

impl Default for Thm15Options {
    fn default() -> Self {
        Self {
            lambda: LambdaSource::Greedy { limit: 4096 },
            c: None,
            alpha: Angle::golden(),
            budget: 1 << 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Thm15Build {
    pub a: [i64; 5],
    pub ell: u32,
    pub sys: WeylSystem,
    pub system: SolutionSystem,
    pub c: u64,
    pub l: u64,
    pub lambda: Vec<u64>,
    pub set: ProductSet,
    /// `|Lambda| / (C^2 L)`.
    pub mu_a: Rational,
}

/// `A = T x U_{b in Lambda} [b/(CL), b/(CL) + 1/(C^2 L))` for a
/// solution-free `Lambda ⊆ [0, L)`.
pub fn thm15_build(a: &[i64; 5], ell: u32, opts: &Thm15Options) -> Result<Thm15Build> {
    if ell < 2 {
        return Err(Error::InvalidParameter("ell must exceed 1".into()));
    }
    let system = solution_system(a)?.primitive();
    let (lambda, l) = match &opts.lambda {
        LambdaSource::Greedy { limit } => (greedy_solution_free(&system, *limit), *limit),
        LambdaSource::Ruzsa { epsilon, opts } => {
            let d = ruzsa_set(a, *epsilon, *opts)?;
            let l = d.params.l;
            (d.members, l)
        }
        LambdaSource::Explicit { members, l } => (members.clone(), *l),
    };
    if lambda.is_empty() || lambda.iter().any(|&b| b >= l) {
        return Err(Error::InvalidParameter("Lambda must be a nonempty subset of [0, L)".into()));
    }
    match verify_solution_free(&lambda, &system, opts.budget) {
        Verdict::Pass => {}
        Verdict::Fail(w) => {
            return Err(Error::InvalidParameter(format!(
                "Lambda has the non-constant solution {w:?}"
            )))
        }
        Verdict::Indeterminate { required, budget } => {
            return Err(Error::ResourceCap {
                what: "solution-free verification".into(),
                required: required.to_string(),
                cap: budget.to_string(),
            })
        }
    }
    let c = opts.c.unwrap_or(system.max_positive_part() as u64);
    if c == 0 {
        return Err(Error::InvalidParameter("C must be positive".into()));
    }
    let cl = BigInt::from(c) * BigInt::from(l);
    let width = Rational::new(BigInt::one(), &cl * BigInt::from(c));
    let arcs: Vec<(Rational, Rational)> = lambda
        .iter()
        .map(|&b| {
            let lo = Rational::new(BigInt::from(b), cl.clone());
            let hi = &lo + &width;
            (lo, hi)
        })
        .collect();
    let fiber = IntervalUnion::from_rational_arcs(&arcs);
    let mu_a = &width * Rational::from_integer(BigInt::from(lambda.len()));
    Ok(Thm15Build {
        a: *a,
        ell,
        sys: WeylSystem::new(vec![opts.alpha.clone()])?,
        system,
        c,
        l,
        lambda,
        set: ProductSet::single(fiber),
        mu_a,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerN {
    pub n: u64,
    pub value: f64,
    pub error_bound: f64,
    /// `value <= analytic bound`, certified.
    pub below_analytic: bool,
    /// `value < mu(A)^ell`, certified.
    pub below_target: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub mu_a: Exact,
    pub target: Exact,
    pub analytic_bound: Exact,
    /// `analytic_bound < target`, decided exactly.
    pub symbolic_holds: bool,
    /// `analytic_bound / target`.
    pub symbolic_ratio: f64,
    pub all_below_analytic: bool,
    pub all_below_target: bool,
    pub witness: Option<u64>,
    pub indeterminate: Vec<u64>,
    pub per_n: Vec<PerN>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.symbolic_holds && self.all_below_analytic && self.all_below_target
    }
}

fn check_range(lo: u64, hi: u64) -> Result<()> {
    if lo == 0 || hi < lo {
        return Err(Error::InvalidParameter("n range must be a nonempty subset of n >= 1".into()));
    }
    Ok(())
}

fn rat_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn run_verify<F>(lo: u64, hi: u64, mu_a: &Rational, target: Rational, analytic: Rational, eval: F) -> Result<VerifyReport>
where
    F: Fn(u64) -> Result<Measured> + Sync,
{
    let ana = rat_f64(&analytic);
    let tgt = rat_f64(&target);
    let per_n = (lo..=hi)
        .into_par_iter()
        .map(|n| {
            let r = eval(n)?;
            Ok(PerN {
                n,
                value: r.value,
                error_bound: r.error_bound,
                below_analytic: r.value + r.error_bound <= ana * (1.0 + 1e-15),
                below_target: r.value + r.error_bound < tgt * (1.0 - 1e-15),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let witness = per_n
        .iter()
        .find(|p| !p.below_analytic || !p.below_target)
        .map(|p| p.n);
    let indeterminate = per_n
        .iter()
        .filter(|p| {
            let close = |t: f64| (p.value - t).abs() <= p.error_bound;
            close(ana) || close(tgt)
        })
        .map(|p| p.n)
        .collect();
    Ok(VerifyReport {
        mu_a: mu_a.into(),
        symbolic_holds: analytic < target,
        symbolic_ratio: rat_f64(&(&analytic / &target)),
        target: target.into(),
        analytic_bound: analytic.into(),
        all_below_analytic: per_n.iter().all(|p| p.below_analytic),
        all_below_target: per_n.iter().all(|p| p.below_target),
        witness,
        indeterminate,
        per_n,
    })
}

/// `2|Lambda| / (C^4 L^2)`.
pub fn thm15_analytic_bound(b: &Thm15Build) -> Rational {
    let c = BigInt::from(b.c);
    let l = BigInt::from(b.l);
    Rational::new(
        BigInt::from(2 * b.lambda.len()),
        num_traits::pow(c, 4) * &l * &l,
    )
}

pub fn thm15_terms(b: &Thm15Build, n: u64) -> Vec<Iterate> {
    b.a.iter().map(|&ai| Iterate::single(ai as i128 * n as i128)).collect()
}

pub fn thm15_verify(b: &Thm15Build, lo: u64, hi: u64) -> Result<VerifyReport> {
    check_range(lo, hi)?;
    let sys = System::Weyl(b.sys.clone());
    let target = num_traits::pow(b.mu_a.clone(), b.ell as usize);
    run_verify(lo, hi, &b.mu_a, target, thm15_analytic_bound(b), |n| {
        correlation_measure(&sys, &b.set, &thm15_terms(b, n))
    })
}

#[derive(Debug, Clone)]
pub struct Prop113Build {
    pub ell: u32,
    pub n: u64,
    pub pair: CommutingPair,
    pub lambda: Vec<u64>,
    pub set: ProductSet,
    /// `|Lambda| / (2N)`.
    pub mu_a: Rational,
    pub ell_max: f64,
}

/// `(2N)^ell |Lambda| <= N^2 |Lambda|^ell`, the exact form of the bound on
/// `ell`.
pub fn prop113_admissible(ell: u32, n: u64, size: usize) -> bool {
    let two_n = BigInt::from(2 * n);
    let s = BigInt::from(size);
    num_traits::pow(two_n, ell as usize) * &s <= BigInt::from(n).pow(2) * num_traits::pow(s.clone(), ell as usize)
}

pub fn prop113_ell_max(n: u64, size: usize) -> f64 {
    let (n, s) = (n as f64, size as f64);
    (2.0 * n.ln() - s.ln()) / ((2.0 * n).ln() - s.ln())
}

pub fn prop113_build(ell: u32, n: u64, alpha: Angle) -> Result<Prop113Build> {
    if ell < 1 {
        return Err(Error::InvalidParameter("ell must be positive".into()));
    }
    let beh = behrend_set(n)?;
    let lambda = beh.members;
    if !ap3_free(&lambda).is_pass() {
        return Err(Error::InvalidParameter("Behrend set is not AP3-free".into()));
    }
    if !prop113_admissible(ell, n, lambda.len()) {
        let mut hint = None;
        let mut cand = n;
        while cand < 1 << 20 {
            cand *= 2;
            if prop113_admissible(ell, cand, behrend_set(cand)?.members.len()) {
                hint = Some(cand);
                break;
            }
        }
        return Err(Error::InvalidParameter(format!(
            "ell = {ell} exceeds the bound (2 log N - log|L|)/(log 2N - log|L|) = {:.4} at N = {n}, |L| = {}; {}",
            prop113_ell_max(n, lambda.len()),
            lambda.len(),
            match hint {
                Some(c) => format!("N = {c} suffices"),
                None => "no N below 2^20 suffices".into(),
            }
        )));
    }
    let q = BigInt::from(4 * n);
    let arcs: Vec<(Rational, Rational)> = lambda
        .iter()
        .map(|&a| {
            (
                Rational::new(BigInt::from(4 * a as i64 - 1), q.clone()),
                Rational::new(BigInt::from(4 * a + 1), q.clone()),
            )
        })
        .collect();
    let fiber = IntervalUnion::from_rational_arcs(&arcs);
    Ok(Prop113Build {
        ell,
        n,
        pair: CommutingPair { alpha },
        mu_a: Rational::new(BigInt::from(lambda.len()), BigInt::from(2 * n)),
        ell_max: prop113_ell_max(n, lambda.len()),
        lambda,
        set: ProductSet::single(fiber),
    })
}

/// `A, T_1^{-n} A, T_1^{-2n} A, T_2^{-n^2} A`.
pub fn prop113_terms(n: u64) -> Vec<Iterate> {
    let n = n as i128;
    vec![
        Iterate::pair(0, 0),
        Iterate::pair(n, 0),
        Iterate::pair(2 * n, 0),
        Iterate::pair(0, n * n),
    ]
}

pub fn prop113_verify(b: &Prop113Build, lo: u64, hi: u64) -> Result<VerifyReport> {
    check_range(lo, hi)?;
    let sys = System::Pair(b.pair.clone());
    let target = num_traits::pow(b.mu_a.clone(), b.ell as usize);
    let analytic = Rational::new(BigInt::from(b.lambda.len()), BigInt::from(b.n).pow(2));
    run_verify(lo, hi, &b.mu_a, target, analytic, |n| {
        correlation_measure(&sys, &b.set, &prop113_terms(n))
    })
}

/// Box placement for the inverse construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoxLayout {
    /// Boxes `[c/N0, (c + eps)/N0)`; snapped indices satisfy the form
    /// modulo `N0`.
    Paper,
    /// Boxes `[c/(K N0), (c + eps)/(K N0))` with `K` the positive part of
    /// the form; snapped indices satisfy it exactly.
    WrapFree,
}

#[derive(Debug, Clone)]
pub struct Thm19Build {
    pub sys: WeylSystem,
    pub a: [i64; 4],
    pub form: Vec<i64>,
    pub epsilon: Rational,
    pub layout: BoxLayout,
    /// Box side is `epsilon / (scale N0)`.
    pub scale: u64,
    pub n0: u64,
    pub cells: GridSet,
    pub mu_a: Rational,
}

impl Thm19Build {
    /// Lower corner of the box for index `c`, per coordinate.
    pub fn corner(&self, c: &[u64]) -> Vec<Rational> {
        let den = BigInt::from(self.scale * self.n0);
        c.iter().map(|&x| Rational::new(BigInt::from(x), den.clone())).collect()
    }

    pub fn side(&self) -> Rational {
        &self.epsilon / Rational::from_integer(BigInt::from(self.scale * self.n0))
    }

    /// Box index of a fiber point, if it lies in `A`.
    pub fn snap(&self, y: &[f64]) -> Option<Vec<u64>> {
        let k = (self.scale * self.n0) as f64;
        let side = rat_f64(&self.epsilon);
        let mut idx = Vec::with_capacity(y.len());
        for &t in y {
            let s = wrap(t) * k;
            let c = s.floor();
            if s - c >= side || c as u64 >= self.n0 {
                return None;
            }
            idx.push(c as u64);
        }
        self.cells.contains(&idx).then_some(idx)
    }
}

pub fn thm19_build(e: &GridSet, a: &[i64; 4], layout: BoxLayout) -> Result<Thm19Build> {
    if e.is_empty() {
        return Err(Error::InvalidParameter("E must be nonempty".into()));
    }
    let fam = MomentFamily::quadratic(a.to_vec())?;
    let v = moment_subspace(&fam)?;
    let form_big = v.forms()[0].clone();
    let epsilon = membership_margin(&form_big)?;
    let form: Vec<i64> = form_big.iter().map(|x| x.to_i64().expect("small form")).collect();
    let scale = match layout {
        BoxLayout::Paper => 1,
        BoxLayout::WrapFree => form.iter().filter(|&&x| x > 0).sum::<i64>() as u64,
    };
    let m = e.m();
    let alpha = (0..m)
        .map(|c| Angle::sqrt([2, 3, 5, 6, 7, 10, 11, 13][c % 8] + 16 * (c / 8) as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut b = Thm19Build {
        sys: WeylSystem::new(alpha)?,
        a: *a,
        form,
        epsilon,
        layout,
        scale,
        n0: e.n(),
        cells: e.clone(),
        mu_a: Rational::zero(),
    };
    // Boxes are distinct grid cells of side < 1/(scale N0), hence disjoint.
    let side = b.side();
    let vol = num_traits::pow(side, m);
    let total = &vol * Rational::from_integer(BigInt::from(e.len()));
    let eps_eff = &b.epsilon / Rational::from_integer(BigInt::from(scale));
    let expected = num_traits::pow(eps_eff, m) * crate::density::set_density(e)?;
    if total != expected {
        return Err(Error::InvalidParameter("box measure mismatch".into()));
    }
    b.mu_a = total;
    Ok(b)
}

/// `(floor(y K), frac(y K))` for a 128-bit fixed-point `y ∈ [0, 1)`.
fn scale_fixed(y: u128, k: u64) -> (u64, u128) {
    let hi = (y >> 64) * k as u128;
    let lo = (y as u64 as u128) * k as u128;
    let (frac, carry) = (hi << 64).overflowing_add(lo);
    (((hi >> 64) + carry as u128) as u64, frac)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapAudit {
    pub trials: u64,
    /// Trials whose four iterates all landed in `A`.
    pub hits: u64,
    /// Hits whose box indices break the form (exactly, or modulo `N0`
    /// for [`BoxLayout::Paper`]).
    pub violations: u64,
    /// `(n, per-coordinate index tuples)` of the first violation.
    pub witness: Option<(u64, Vec<[u64; 4]>)>,
    pub hit_indices: Vec<Vec<[u64; 4]>>,
}

impl Thm19Build {
    /// Box index in `[0, N0)` of a fixed-point fiber coordinate, if the
    /// point lies inside a box.
    pub fn snap_fixed(&self, y: u128) -> Option<u64> {
        let (c, frac) = scale_fixed(y, self.scale * self.n0);
        if c >= self.n0 {
            return None;
        }
        let lhs = BigInt::from(frac) * self.epsilon.denom();
        let rhs = self.epsilon.numer() << 128usize;
        (lhs < rhs).then_some(c)
    }

    fn form_holds(&self, idx: &[u64; 4]) -> bool {
        let s: i128 = self.form.iter().zip(idx).map(|(&w, &c)| w as i128 * c as i128).sum();
        match self.layout {
            BoxLayout::WrapFree => s == 0,
            BoxLayout::Paper => s.rem_euclid(self.n0 as i128) == 0,
        }
    }
}

/// Samples random points of `T^{2m}` and random `n ∈ [lo, hi]`, keeps those
/// whose iterates `T^{a_i n}` all lie in `A`, and checks that the snapped box
/// indices satisfy the form. Arithmetic is 128-bit fixed point, exact for
/// the truncated rotation numbers.
pub fn thm19_snap_audit(b: &Thm19Build, lo: u64, hi: u64, trials: u64, seed: u64) -> Result<SnapAudit> {
    check_range(lo, hi)?;
    let alphas: Vec<u128> = b.sys.alpha.iter().map(Angle::frac128).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SnapAudit {
        trials,
        hits: 0,
        violations: 0,
        witness: None,
        hit_indices: Vec::new(),
    };
    for _ in 0..trials {
        let n = rng.gen_range(lo..=hi) as u128;
        let mut tuples = Vec::with_capacity(alphas.len());
        for &al in &alphas {
            let x: u128 = rng.gen();
            let y: u128 = rng.gen();
            let t: Option<Vec<u64>> = b
                .a
                .iter()
                .map(|&ai| {
                    let p = (ai as u128).wrapping_mul(n);
                    let v = y
                        .wrapping_add(x.wrapping_mul(2).wrapping_mul(p))
                        .wrapping_add(al.wrapping_mul(p.wrapping_mul(p)));
                    b.snap_fixed(v)
                })
                .collect();
            match t {
                Some(t) => tuples.push([t[0], t[1], t[2], t[3]]),
                None => break,
            }
        }
        // The i-th iterate lies in A when its box index vector is in E.
        let inside = tuples.len() == alphas.len()
            && (0..4).all(|i| b.cells.contains(&tuples.iter().map(|t| t[i]).collect::<Vec<_>>()));
        if !inside {
            continue;
        }
        out.hits += 1;
        if !tuples.iter().all(|t| b.form_holds(t)) {
            out.violations += 1;
            out.witness.get_or_insert((n as u64, tuples.clone()));
        }
        out.hit_indices.push(tuples);
    }
    Ok(out)
}

/// How the iterate list depends on `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub description: String,
    /// Per term, polynomials (ascending coefficients) for the two
    /// generator exponents, evaluated at the driver value.
    pub terms: Vec<(Vec<i64>, Vec<i64>)>,
    /// `None` means the driver is `n` itself.
    pub driver: Option<SequenceSpec>,
    /// Largest enclosure width used to certify driver values.
    pub precision: u32,
}

impl Family {
    /// `{0, n, 2n, ..., kn}`.
    pub fn arithmetic(k: u32) -> Self {
        Self {
            description: format!("{{0, n, ..., {k}n}}"),
            terms: (0..=k as i64).map(|j| (vec![0, j], vec![])).collect(),
            driver: None,
            precision: 1024,
        }
    }

    /// `{0, P_1(n), ..., P_k(n)}` for single-generator systems.
    pub fn polynomials(description: &str, polys: Vec<Vec<i64>>) -> Self {
        let mut terms = vec![(vec![], vec![])];
        terms.extend(polys.into_iter().map(|p| (p, vec![])));
        Self {
            description: description.into(),
            terms,
            driver: None,
            precision: 1024,
        }
    }

    pub fn with_precision(mut self, bits: u32) -> Self {
        self.precision = bits;
        self
    }

    pub fn with_driver(mut self, s: SequenceSpec) -> Self {
        self.description = format!("{} along {}", self.description, s.describe());
        self.driver = Some(s);
        self
    }

    /// Iterates at `n`; `None` if the driver value is not certified.
    pub fn at(&self, n: u64) -> Result<Option<Vec<Iterate>>> {
        let s: i128 = match &self.driver {
            None => n as i128,
            Some(spec) => match eval_sequence_at(spec, n, self.precision)? {
                SequenceValue::Certified(v) => v.to_i128().ok_or_else(|| Error::Overflow("driver value".into()))?,
                SequenceValue::Indeterminate { .. } => return Ok(None),
            },
        };
        let ev = |p: &[i64]| -> Result<i128> {
            p.iter().rev().try_fold(0i128, |acc, &c| {
                acc.checked_mul(s)
                    .and_then(|x| x.checked_add(c as i128))
                    .ok_or_else(|| Error::Overflow("family polynomial".into()))
            })
        };
        self.terms
            .iter()
            .map(|(p, q)| Ok(Iterate::pair(ev(p)?, ev(q)?)))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub n: u64,
    pub value: f64,
    pub error_bound: f64,
    pub qualifying: bool,
    pub indeterminate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub system: String,
    pub family: String,
    pub threshold: f64,
    pub n_lo: u64,
    pub n_hi: u64,
    pub mu_a: f64,
    pub qualifying: Vec<u64>,
    pub indeterminate: Vec<u64>,
    /// Largest distance between consecutive qualifying `n`, counting the
    /// range ends `n_lo - 1` and `n_hi + 1` as qualifying.
    pub max_gap: u64,
    /// `|qualifying| / (n_hi - n_lo + 1)`.
    pub lower_density_estimate: Exact,
    pub assumptions: Vec<String>,
    pub values: Vec<ScanRow>,
}

impl ScanReport {
    /// One row per `n`; `precision` is the enclosure width in bits used
    /// for driver values.
    pub fn to_csv(&self, precision: u32) -> String {
        let mut s = String::from("n,value,error_bound,qualifying,indeterminate,precision\n");
        for r in &self.values {
            s.push_str(&format!(
                "{},{:.17e},{:.3e},{},{},{}\n",
                r.n, r.value, r.error_bound, r.qualifying as u8, r.indeterminate as u8, precision
            ));
        }
        s
    }
}

pub fn max_gap(qualifying: &[u64], lo: u64, hi: u64) -> u64 {
    let mut prev = lo as i128 - 1;
    let mut best = 0i128;
    for &q in qualifying.iter().chain(std::iter::once(&(hi + 1))) {
        best = best.max(q as i128 - prev);
        prev = q as i128;
    }
    best as u64
}

pub fn recurrence_scan(
    sys: &System,
    a: &ProductSet,
    family: &Family,
    lo: u64,
    hi: u64,
    threshold: f64,
) -> Result<ScanReport> {
    if hi < lo {
        return Err(Error::InvalidParameter("empty range".into()));
    }
    let rows = (lo..=hi)
        .into_par_iter()
        .map(|n| {
            let Some(exps) = family.at(n)? else {
                return Ok(ScanRow {
                    n,
                    value: f64::NAN,
                    error_bound: f64::INFINITY,
                    qualifying: false,
                    indeterminate: true,
                });
            };
            let r = correlation_measure(sys, a, &exps)?;
            let verdict = r.exceeds(threshold);
            Ok(ScanRow {
                n,
                value: r.value,
                error_bound: r.error_bound,
                qualifying: verdict == Some(true),
                indeterminate: verdict.is_none(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let qualifying: Vec<u64> = rows.iter().filter(|r| r.qualifying).map(|r| r.n).collect();
    let indeterminate: Vec<u64> = rows.iter().filter(|r| r.indeterminate).map(|r| r.n).collect();
    let mut assumptions = Vec::new();
    if let Some(SequenceSpec::Beatty { .. }) = &family.driver {
        assumptions.push(
            "the discrete spectrum of the system meets the group generated by 1/theta only in 0".into(),
        );
    }
    if let Some(SequenceSpec::Hardy { .. }) = &family.driver {
        assumptions.push("f stays away from integer polynomials as required for Hardy sequences".into());
    }
    Ok(ScanReport {
        system: sys.describe(),
        family: family.description.clone(),
        threshold,
        n_lo: lo,
        n_hi: hi,
        mu_a: a.measure(),
        max_gap: max_gap(&qualifying, lo, hi),
        lower_density_estimate: Rational::new(
            BigInt::from(qualifying.len()),
            BigInt::from(hi - lo + 1),
        )
        .into(),
        qualifying,
        indeterminate,
        assumptions,
        values: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleGap {
    pub x: f64,
    pub y: f64,
    pub empirical: f64,
    pub limit: f64,
    pub limit_error: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub window: u64,
    pub bohr_count: u64,
    /// Window reached its cap with fewer than the wanted Bohr members.
    pub short_window: bool,
    pub max_gap: f64,
    pub mean_gap: f64,
    pub samples: Vec<SampleGap>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BohrLimitReport {
    pub alpha: String,
    pub a: Vec<i64>,
    pub fiber_measure: f64,
    pub caveat: String,
    pub rows: Vec<DeltaRow>,
}

#[derive(Debug, Clone)]
pub struct BohrLimitOptions {
    pub samples: usize,
    pub seed: u64,
    pub min_members: u64,
    pub max_window: u64,
}

impl Default for BohrLimitOptions {
    fn default() -> Self {
        Self {
            samples: 8,
            seed: 20261016,
            min_members: 2000,
            max_window: 1 << 26,
        }
    }
}

/// Averages of `prod_i 1_B(y + 2 a_i n x + a_i^2 n^2 alpha)` over
/// `n ∈ S_delta ∩ [0, window)` for sampled `(x, y)`, against
/// `int int prod_i 1_B(y + a_i u + a_i^2 v) du dv`.
pub fn bohr_limit_compare(
    sys: &WeylSystem,
    b: &IntervalUnion,
    a: &[i64],
    deltas: &[f64],
    window: u64,
    opts: &BohrLimitOptions,
) -> Result<BohrLimitReport> {
    if sys.m() != 1 {
        return Err(Error::InvalidParameter("needs a single coordinate".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) || deltas.iter().any(|&d| d <= 0.0) {
        return Err(Error::InvalidParameter("deltas must be positive and decreasing".into()));
    }
    let alpha = sys.alpha[0].frac128();
    let f = b.indicator();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points: Vec<(u128, u128)> = (0..opts.samples).map(|_| (rng.gen(), rng.gen())).collect();
    let to_f = |v: u128| (v >> 75) as f64 / 2f64.powi(53);
    let limits: Vec<(f64, f64)> = points
        .iter()
        .map(|&(_, y)| {
            let terms: Vec<Term> = a
                .iter()
                .map(|&ai| Term {
                    form: [ai as f64, (ai * ai) as f64],
                    offset: to_f(y),
                    f: &f,
                })
                .collect();
            let r = strip::integrate(&terms);
            (r.value, r.error_bound + strip::offset_sensitivity(&terms) * f64::EPSILON)
        })
        .collect();
    let mut rows = Vec::new();
    for &delta in deltas {
        let mut w = window.max(1);
        let (counts, bohr) = loop {
            let (counts, bohr) = bohr_averages(alpha, &points, a, b, delta, w);
            if bohr >= opts.min_members || w >= opts.max_window {
                break (counts, bohr);
            }
            w = (w * 2).min(opts.max_window);
        };
        let samples: Vec<SampleGap> = points
            .iter()
            .zip(&counts)
            .zip(&limits)
            .map(|((&(x, y), &c), &(lim, le))| {
                let emp = if bohr == 0 { f64::NAN } else { c as f64 / bohr as f64 };
                SampleGap {
                    x: to_f(x),
                    y: to_f(y),
                    empirical: emp,
                    limit: lim,
                    limit_error: le,
                    gap: (emp - lim).abs(),
                }
            })
            .collect();
        let max_gap = samples.iter().map(|s| s.gap).fold(0.0, f64::max);
        let mean_gap = samples.iter().map(|s| s.gap).sum::<f64>() / samples.len().max(1) as f64;
        rows.push(DeltaRow {
            delta,
            window: w,
            bohr_count: bohr,
            short_window: bohr < opts.min_members,
            max_gap,
            mean_gap,
            samples,
        });
    }
    Ok(BohrLimitReport {
        alpha: sys.alpha[0].label().into(),
        a: a.to_vec(),
        fiber_measure: b.measure(),
        caveat: "finitely many sampled points; exceptional null sets are not detected".into(),
        rows,
    })
}

fn bohr_averages(alpha: u128, points: &[(u128, u128)], a: &[i64], b: &IntervalUnion, delta: f64, window: u64) -> (Vec<u64>, u64) {
    let to_f = |v: u128| (v >> 75) as f64 / 2f64.powi(53);
    let chunk = 1u64 << 16;
    let parts: Vec<(Vec<u64>, u64)> = (0..window.div_ceil(chunk))
        .into_par_iter()
        .map(|k| {
            let mut counts = vec![0u64; points.len()];
            let mut bohr = 0u64;
            for n in k * chunk..((k + 1) * chunk).min(window) {
                let na = alpha.wrapping_mul(n as u128);
                let t = to_f(na);
                if t.min(1.0 - t) >= delta {
                    continue;
                }
                bohr += 1;
                let n2a = alpha.wrapping_mul((n as u128).wrapping_mul(n as u128));
                for (cnt, &(x, y)) in counts.iter_mut().zip(points) {
                    let nx = x.wrapping_mul(2 * n as u128);
                    let hit = a.iter().all(|&ai| {
                        let v = y
                            .wrapping_add(nx.wrapping_mul(ai as u128))
                            .wrapping_add(n2a.wrapping_mul((ai * ai) as u128));
                        b.contains(to_f(v))
                    });
                    *cnt += hit as u64;
                }
            }
            (counts, bohr)
        })
        .collect();
    let mut counts = vec![0u64; points.len()];
    let mut bohr = 0;
    for (c, k) in parts {
        for (t, v) in counts.iter_mut().zip(c) {
            *t += v;
        }
        bohr += k;
    }
    (counts, bohr)
}
