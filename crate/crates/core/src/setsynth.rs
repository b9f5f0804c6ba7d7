//! Solution-free and AP3-free set constructions with brute-force checkers.
//!
//! The five-variable system attached to `a_1 < ... < a_5` is
//! `v . (b_1..b_4) = 0` and `vt . (b_2..b_5) = 0`, where `v` and `vt` are the
//! Vandermonde annihilators of `(a_1..a_4)` and `(a_2..a_5)`. Its solutions
//! are exactly the tuples `(q(a_1), ..., q(a_5))` for quadratic `q`, so a set
//! is solution-free when it holds no non-constant such tuple.

use std::collections::HashSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactlin::vandermonde_coeffs;

/// The pair of integer equations derived from five increasing integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolutionSystem {
    a: Option<[i64; 5]>,
    v: [i64; 4],
    vt: [i64; 4],
}

impl SolutionSystem {
    /// Raw coefficient vectors, without a source tuple. Used for
    /// counterexamples to rigidity that need non-Vandermonde coefficients.
    pub fn from_raw(v: [i64; 4], vt: [i64; 4]) -> Result<Self> {
        if v[3] == 0 || vt[3] == 0 {
            return Err(Error::InvalidParameter(
                "last coefficient of each equation must be nonzero".into(),
            ));
        }
        Ok(Self { a: None, v, vt })
    }

    pub fn source(&self) -> Option<[i64; 5]> {
        self.a
    }

    /// Coefficients on `b_1..b_4`.
    pub fn v(&self) -> [i64; 4] {
        self.v
    }

    /// Coefficients on `b_2..b_5`.
    pub fn vt(&self) -> [i64; 4] {
        self.vt
    }

    /// Both equations padded to five variables.
    pub fn equations(&self) -> [[i64; 5]; 2] {
        let [v1, v2, v3, v4] = self.v;
        let [w2, w3, w4, w5] = self.vt;
        [[v1, v2, v3, v4, 0], [0, w2, w3, w4, w5]]
    }

    /// Same equations divided by their contents.
    pub fn primitive(&self) -> Self {
        let reduce = |x: [i64; 4]| {
            let g = x.iter().fold(0i64, |acc, &c| acc.gcd(&c));
            x.map(|c| c / g)
        };
        Self {
            a: self.a,
            v: reduce(self.v),
            vt: reduce(self.vt),
        }
    }

    pub fn holds(&self, b: &[i64; 5]) -> bool {
        self.equations().iter().all(|e| {
            e.iter()
                .zip(b)
                .map(|(&c, &x)| c as i128 * x as i128)
                .sum::<i128>()
                == 0
        })
    }

    /// `sum |v_i| + sum |vt_i|`.
    pub fn l1_weight(&self) -> i64 {
        self.v.iter().chain(&self.vt).map(|c| c.abs()).sum()
    }

    /// Largest positive part among the two equations. Since both sum to
    /// zero this equals half of the larger l1 norm.
    pub fn max_positive_part(&self) -> i64 {
        [self.v, self.vt]
            .iter()
            .map(|e| e.iter().filter(|&&c| c > 0).sum::<i64>())
            .max()
            .unwrap_or(0)
    }
}

/// Raw `vt_5 = -v_1` under the cofactor sign convention: both are
/// `det Vandermonde(a_2, a_3, a_4)` up to the sign of the deleted row.
pub fn solution_system(a: &[i64; 5]) -> Result<SolutionSystem> {
    if a.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidFamily(format!(
            "coefficients must be strictly increasing, got {a:?}"
        )));
    }
    let to_i64 = |v: [BigInt; 4]| -> Result<[i64; 4]> {
        let mut out = [0i64; 4];
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o = x
                .to_i64()
                .ok_or_else(|| Error::Overflow("Vandermonde coefficient".into()))?;
        }
        Ok(out)
    };
    let v = to_i64(vandermonde_coeffs(&[a[0], a[1], a[2], a[3]])?)?;
    let vt = to_i64(vandermonde_coeffs(&[a[1], a[2], a[3], a[4]])?)?;
    Ok(SolutionSystem { a: Some(*a), v, vt })
}

/// How the digit bound `C` is derived from the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CoefficientNorm {
    /// `C` from the raw cofactor coefficients.
    Raw,
    /// `C` from the equations divided by their contents (same solution set).
    #[default]
    Primitive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuzsaParams {
    /// `epsilon = num / den`.
    pub epsilon: (u64, u64),
    pub c: u64,
    pub d: u32,
    pub m: u64,
    pub l: u64,
    pub r0: u64,
    pub norm: CoefficientNorm,
    /// Whether `(d, m)` satisfy `d > 2/eps` and `m^(d eps - 2) > C^(d-2) d`.
    pub admissible: bool,
}

impl RuzsaParams {
    /// Digits range over `[0, m / C)`.
    pub fn digit_bound(&self) -> u64 {
        self.m / self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitSet {
    pub members: Vec<u64>,
    pub params: RuzsaParams,
}

impl DigitSet {
    pub fn base(&self) -> u64 {
        self.params.m
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn digits(&self, x: u64) -> Vec<u64> {
        to_digits(x, self.params.m, self.params.d)
    }

    /// `|members| > L^(1 - eps)`, compared exactly.
    pub fn beats_power_bound(&self) -> bool {
        let (p, q) = self.params.epsilon;
        let lhs = num_traits::pow(BigInt::from(self.members.len()), q as usize);
        let rhs = num_traits::pow(BigInt::from(self.params.l), (q - p) as usize);
        lhs > rhs
    }

    /// `|members| >= (m/C)^(d-2) / d`.
    pub fn meets_pigeonhole_bound(&self) -> bool {
        let lhs = BigInt::from(self.members.len()) * BigInt::from(self.params.d);
        let rhs = num_traits::pow(
            BigInt::from(self.params.digit_bound()),
            self.params.d as usize - 2,
        );
        lhs >= rhs
    }
}

pub fn to_digits(mut x: u64, base: u64, width: u32) -> Vec<u64> {
    (0..width)
        .map(|_| {
            let r = x % base;
            x /= base;
            r
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuzsaOptions {
    pub norm: CoefficientNorm,
    /// Largest `L` the construction may enumerate.
    pub l_cap: u64,
}

impl Default for RuzsaOptions {
    fn default() -> Self {
        Self {
            norm: CoefficientNorm::Primitive,
            l_cap: 1 << 32,
        }
    }
}

fn digit_weight(sys: &SolutionSystem, norm: CoefficientNorm) -> u64 {
    match norm {
        CoefficientNorm::Raw => sys.l1_weight() as u64,
        CoefficientNorm::Primitive => sys.primitive().l1_weight() as u64,
    }
}

/// Minimal admissible `(d, m)`: smallest `d > 2/eps`, then the smallest
/// multiple `m` of `C` with `m^(d eps - 2) > C^(d-2) d`. Returns `L = m^d`
/// as a big integer since it is usually astronomically large.
pub fn ruzsa_parameters(c: u64, epsilon: (u64, u64)) -> Result<(u32, u64, BigInt)> {
    let (p, q) = epsilon;
    if p == 0 || q == 0 || p >= q {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {p}/{q}"
        )));
    }
    let d = (2 * q / p + 1) as u32;
    let exp_num = d as u64 * p - 2 * q; // > 0 since d > 2q/p
    let target = num_traits::pow(
        num_traits::pow(BigInt::from(c), d as usize - 2) * BigInt::from(d),
        q as usize,
    );
    let ok = |m: u64| num_traits::pow(BigInt::from(m), exp_num as usize) > target;
    // Float estimate of the threshold, then exact adjustment.
    let est = ((c as f64).ln() * (d as f64 - 2.0) + (d as f64).ln()) * q as f64 / exp_num as f64;
    let mut k = if est.is_finite() && est < 60.0 {
        ((est.exp() / c as f64).floor() as u64).max(1)
    } else {
        return Err(Error::ResourceCap {
            what: "Ruzsa base m".into(),
            required: format!("about e^{est:.1}"),
            cap: "2^64".into(),
        });
    };
    while k > 1 && ok(c * (k - 1)) {
        k -= 1;
    }
    while !ok(c * k) {
        k += 1;
    }
    let m = c * k;
    Ok((d, m, num_traits::pow(BigInt::from(m), d as usize)))
}

/// Ruzsa's digit construction at the minimal admissible parameters.
pub fn ruzsa_set(a: &[i64; 5], epsilon: (u64, u64), opts: RuzsaOptions) -> Result<DigitSet> {
    let sys = solution_system(a)?;
    let c = digit_weight(&sys, opts.norm);
    let (d, m, l) = ruzsa_parameters(c, epsilon)?;
    if l > BigInt::from(opts.l_cap) {
        return Err(Error::ResourceCap {
            what: "Ruzsa interval length L".into(),
            required: l.to_string(),
            cap: opts.l_cap.to_string(),
        });
    }
    build_digit_set(&sys, epsilon, opts.norm, d, m, true)
}

/// The same construction at caller-chosen `(d, m)`; `m` must be a multiple
/// of `C`. Solution-freeness does not depend on admissibility, only the
/// cardinality guarantee does.
pub fn ruzsa_set_explicit(
    a: &[i64; 5],
    epsilon: (u64, u64),
    norm: CoefficientNorm,
    d: u32,
    m: u64,
) -> Result<DigitSet> {
    let sys = solution_system(a)?;
    let c = digit_weight(&sys, norm);
    if !m.is_multiple_of(c) || m < c {
        return Err(Error::InvalidParameter(format!(
            "base {m} must be a positive multiple of C = {c}"
        )));
    }
    let admissible = match ruzsa_parameters(c, epsilon) {
        Ok((d_min, _, _)) => {
            let (p, q) = epsilon;
            d as u64 * p > 2 * q && {
                let exp = (d as u64 * p - 2 * q) as usize;
                let lhs = num_traits::pow(BigInt::from(m), exp);
                let rhs = num_traits::pow(
                    num_traits::pow(BigInt::from(c), d as usize - 2) * BigInt::from(d),
                    q as usize,
                );
                d >= d_min && lhs > rhs
            }
        }
        Err(_) => false,
    };
    build_digit_set(&sys, epsilon, norm, d, m, admissible)
}

fn build_digit_set(
    sys: &SolutionSystem,
    epsilon: (u64, u64),
    norm: CoefficientNorm,
    d: u32,
    m: u64,
    admissible: bool,
) -> Result<DigitSet> {
    let c = digit_weight(sys, norm);
    let l = m
        .checked_pow(d)
        .ok_or_else(|| Error::Overflow("L = m^d".into()))?;
    let digit_bound = m / c;
    // Tally of digit-square sums over F by convolution over positions.
    let max_r = (d as u64 * (digit_bound - 1).pow(2)) as usize;
    let mut tally = vec![BigInt::zero(); max_r + 1];
    tally[0] = BigInt::one();
    for _ in 0..d {
        let mut next = vec![BigInt::zero(); max_r + 1];
        for (r, cnt) in tally.iter().enumerate() {
            if cnt.is_zero() {
                continue;
            }
            for x in 0..digit_bound {
                let s = r + (x * x) as usize;
                if s <= max_r {
                    next[s] += cnt;
                }
            }
        }
        tally = next;
    }
    // Most frequent level, smallest r0 on ties.
    let mut r0 = 0usize;
    for (r, cnt) in tally.iter().enumerate() {
        if cnt > &tally[r0] {
            r0 = r;
        }
    }
    let mut members = Vec::new();
    let mut digits = vec![0u64; d as usize];
    collect_level(&mut digits, 0, r0 as u64, digit_bound, m, &mut members);
    members.sort_unstable();
    Ok(DigitSet {
        members,
        params: RuzsaParams {
            epsilon,
            c,
            d,
            m,
            l,
            r0: r0 as u64,
            norm,
            admissible,
        },
    })
}

fn collect_level(
    digits: &mut [u64],
    pos: usize,
    remaining: u64,
    bound: u64,
    base: u64,
    out: &mut Vec<u64>,
) {
    if pos == digits.len() {
        if remaining == 0 {
            let x = digits.iter().rev().fold(0u64, |acc, &dg| acc * base + dg);
            out.push(x);
        }
        return;
    }
    let slots_left = (digits.len() - pos - 1) as u64;
    for x in 0..bound {
        let sq = x * x;
        if sq > remaining {
            break;
        }
        if remaining - sq > slots_left * (bound - 1) * (bound - 1) {
            continue;
        }
        digits[pos] = x;
        collect_level(digits, pos + 1, remaining - sq, bound, base, out);
    }
}

/// Outcome of an exhaustive search that may run out of budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict<W> {
    Pass,
    Fail(W),
    /// The search was not run to completion; never to be read as a pass.
    Indeterminate { required: u128, budget: u128 },
}

impl<W> Verdict<W> {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Exhaustive search for a non-constant solution inside `set`.
///
/// Each triple `(b_1, b_2, b_3)` fixes `b_4` through the first equation
/// (looked up in a hash set) and then `b_5` through the second. The work is
/// `|set|^3` triples; above `budget` the result is `Indeterminate`.
pub fn verify_solution_free(set: &[u64], sys: &SolutionSystem, budget: u128) -> Verdict<[i64; 5]> {
    let mut members: Vec<i64> = set.iter().map(|&x| x as i64).collect();
    members.sort_unstable();
    members.dedup();
    let n = members.len() as u128;
    let required = n * n * n;
    if required > budget {
        return Verdict::Indeterminate { required, budget };
    }
    let lookup: HashSet<i64> = members.iter().copied().collect();
    let [v1, v2, v3, v4] = sys.v().map(|x| x as i128);
    let [w2, w3, w4, w5] = sys.vt().map(|x| x as i128);
    let witness = members.par_iter().find_map_first(|&b1| {
        for &b2 in &members {
            let partial = v1 * b1 as i128 + v2 * b2 as i128;
            for &b3 in &members {
                let s = partial + v3 * b3 as i128;
                if s % v4 != 0 {
                    continue;
                }
                let b4 = -s / v4;
                let Ok(b4) = i64::try_from(b4) else { continue };
                if !lookup.contains(&b4) {
                    continue;
                }
                let t = w2 * b2 as i128 + w3 * b3 as i128 + w4 * b4 as i128;
                if t % w5 != 0 {
                    continue;
                }
                let Ok(b5) = i64::try_from(-t / w5) else { continue };
                if !lookup.contains(&b5) {
                    continue;
                }
                let q = [b1, b2, b3, b4, b5];
                if q.iter().any(|&x| x != b1) {
                    return Some(q);
                }
            }
        }
        None
    });
    match witness {
        Some(q) => Verdict::Fail(q),
        None => Verdict::Pass,
    }
}

/// Greedy solution-free subset of `[0, limit)`: each integer is kept unless
/// it completes a non-constant solution with the elements kept so far.
pub fn greedy_solution_free(sys: &SolutionSystem, limit: u64) -> Vec<u64> {
    let eqs = sys.equations().map(|e| e.map(|c| c as i128));
    // For x at position p, two further positions are enumerated and the
    // remaining two solved for; any two unknown positions give an invertible
    // 2x2 block because quadratics are fixed by three values.
    let plans: Vec<(usize, [usize; 2], [usize; 2], i128)> = (0..5)
        .filter_map(|p| {
            let others: Vec<usize> = (0..5).filter(|&i| i != p).collect();
            for i in 0..4 {
                for j in i + 1..4 {
                    let known = [others[i], others[j]];
                    let unknown: Vec<usize> =
                        others.iter().copied().filter(|k| !known.contains(k)).collect();
                    let (r, s) = (unknown[0], unknown[1]);
                    let det = eqs[0][r] * eqs[1][s] - eqs[0][s] * eqs[1][r];
                    if det != 0 {
                        return Some((p, known, [r, s], det));
                    }
                }
            }
            None
        })
        .collect();
    let mut in_set = vec![false; limit as usize];
    let mut members: Vec<i64> = Vec::new();
    for x in 0..limit as i64 {
        let mut pool = members.clone();
        pool.push(x);
        let contains = |y: i128| -> bool {
            y >= 0 && y <= x as i128 && (y == x as i128 || in_set[y as usize])
        };
        let mut bad = false;
        'plans: for &(p, [k1, k2], [r, s], det) in &plans {
            for &y in &pool {
                for &z in &pool {
                    let mut b = [0i128; 5];
                    b[p] = x as i128;
                    b[k1] = y as i128;
                    b[k2] = z as i128;
                    let c0: i128 = (0..5).map(|i| eqs[0][i] * b[i]).sum();
                    let c1: i128 = (0..5).map(|i| eqs[1][i] * b[i]).sum();
                    // [e0r e0s; e1r e1s] [br; bs] = -[c0; c1]
                    let nr = -c0 * eqs[1][s] + c1 * eqs[0][s];
                    let ns = -c1 * eqs[0][r] + c0 * eqs[1][r];
                    if nr % det != 0 || ns % det != 0 {
                        continue;
                    }
                    b[r] = nr / det;
                    b[s] = ns / det;
                    if !contains(b[r]) || !contains(b[s]) {
                        continue;
                    }
                    if b.iter().any(|&t| t != b[0]) {
                        bad = true;
                        break 'plans;
                    }
                }
            }
        }
        if !bad {
            in_set[x as usize] = true;
            members.push(x);
        }
    }
    members.into_iter().map(|x| x as u64).collect()
}

/// Rigidity report for five vectors against a system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SameNormReport {
    pub premises_hold: bool,
    pub conclusion_holds: bool,
}

/// Checks whether five equal-norm vectors solving both equations are all
/// equal. A report with premises but no conclusion falsifies rigidity for
/// the given system.
pub fn same_norm_check(b: &[Vec<BigRational>; 5], sys: &SolutionSystem) -> Result<SameNormReport> {
    let k = b[0].len();
    for v in b.iter() {
        if v.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: v.len(),
            });
        }
    }
    let norm2 = |v: &Vec<BigRational>| -> BigRational { v.iter().map(|x| x * x).sum() };
    let n0 = norm2(&b[0]);
    let equal_norms = b.iter().all(|v| norm2(v) == n0);
    let eq_holds = sys.equations().iter().all(|e| {
        (0..k).all(|coord| {
            let s: BigRational = e
                .iter()
                .zip(b.iter())
                .map(|(&c, v)| BigRational::from_integer(c.into()) * &v[coord])
                .sum();
            s.is_zero()
        })
    });
    Ok(SameNormReport {
        premises_hold: equal_norms && eq_holds,
        conclusion_holds: b.iter().all(|v| v == &b[0]),
    })
}

/// AP3-free check by midpoint lookups; the witness is `(x, y, z)` with
/// `x < y < z` and `x + z = 2y`.
pub fn ap3_free(set: &[u64]) -> Verdict<(u64, u64, u64)> {
    let mut s: Vec<u64> = set.to_vec();
    s.sort_unstable();
    s.dedup();
    let lookup: HashSet<u64> = s.iter().copied().collect();
    for (i, &x) in s.iter().enumerate() {
        for &z in &s[i + 1..] {
            if (x + z) % 2 == 0 {
                let y = (x + z) / 2;
                if y != x && lookup.contains(&y) {
                    return Verdict::Fail((x, y, z));
                }
            }
        }
    }
    Verdict::Pass
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehrendSet {
    pub members: Vec<u64>,
    pub n: u64,
    /// Digits lie in `[0, digit_bound)`, base `2 * digit_bound - 1`.
    pub digit_bound: u64,
    pub digits: u32,
    pub radius: u64,
    /// `Some(true)` when the brute-force check ran (`n <= 10^4`).
    pub verified: Option<bool>,
}

/// Behrend's sphere construction: integers below `n` whose base-`(2k-1)`
/// digits are all `< k` and whose digit-square sum is a fixed radius. Adding
/// two such integers never carries, so `x + z = 2y` holds digit-wise and
/// strict convexity of the sphere forces `x = y = z`. The pair `(k, radius)`
/// is chosen by exhaustive tally to maximize the level set.
pub fn behrend_set(n: u64) -> Result<BehrendSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    if n == 1 {
        return Ok(BehrendSet {
            members: vec![0],
            n,
            digit_bound: 1,
            digits: 1,
            radius: 0,
            verified: Some(true),
        });
    }
    // Bases with fewer than three digits below n give only tiny spheres.
    let mut best: Option<(usize, u64, u32, u64)> = None; // (size, k, digits, radius)
    let mut k = 2u64;
    while k == 2 || (2 * k - 1) * (2 * k - 1) < n {
        let base = 2 * k - 1;
        let mut width = 1u32;
        while base.checked_pow(width).is_some_and(|p| p < n) {
            width += 1;
        }
        let mut tally = vec![0usize; (width as u64 * (k - 1) * (k - 1) + 1) as usize];
        for_each_small_digit(n, base, k, width, |_, r| tally[r as usize] += 1);
        // Largest count, smallest radius on ties.
        let (r, &cnt) = tally
            .iter()
            .enumerate()
            .rev()
            .max_by_key(|&(_, c)| *c)
            .expect("nonempty tally");
        if best.is_none_or(|b| cnt > b.0) {
            best = Some((cnt, k, width, r as u64));
        }
        k += 1;
    }
    let (_, k, width, radius) = best.expect("at least one digit bound is tried");
    let mut members = Vec::new();
    for_each_small_digit(n, 2 * k - 1, k, width, |x, r| {
        if r == radius {
            members.push(x)
        }
    });
    members.sort_unstable();
    let verified = (n <= 10_000).then(|| ap3_free(&members).is_pass());
    Ok(BehrendSet {
        members,
        n,
        digit_bound: k,
        digits: width,
        radius,
        verified,
    })
}

/// Calls `f(x, digit-square sum)` for every `x < n` whose `width` base-`base`
/// digits are all below `k`, most significant digit first so that prefixes
/// already at or above `n` are cut off.
fn for_each_small_digit<F: FnMut(u64, u64)>(n: u64, base: u64, k: u64, width: u32, mut f: F) {
    fn go<F: FnMut(u64, u64)>(pos: u32, x: u128, sq: u64, n: u128, base: u128, k: u64, f: &mut F) {
        if pos == 0 {
            f(x as u64, sq);
            return;
        }
        let step = base.pow(pos - 1);
        for d in 0..k {
            let y = x + d as u128 * step;
            if y >= n {
                break;
            }
            go(pos - 1, y, sq + d * d, n, base, k, f);
        }
    }
    go(width, 0, 0, n as u128, base as u128, k, &mut f);
}

/// Newline-delimited decimal integers.
pub fn format_set(members: &[u64]) -> String {
    let mut s = String::new();
    for x in members {
        s.push_str(&x.to_string());
        s.push('\n');
    }
    s
}

pub fn parse_set(text: &str) -> Result<Vec<u64>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<u64>()
                .map_err(|e| Error::Parse(format!("bad set entry {l:?}: {e}")))
        })
        .collect()
}

/// JSON sidecar written next to a constructed set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSidecar {
    pub a: Vec<i64>,
    pub epsilon: String,
    #[serde(rename = "C")]
    pub c: u64,
    pub d: u32,
    pub m: u64,
    #[serde(rename = "L")]
    pub l: u64,
    pub r0: u64,
    pub cardinality: usize,
}

impl SetSidecar {
    pub fn from_digit_set(a: &[i64; 5], set: &DigitSet) -> Self {
        let p = &set.params;
        Self {
            a: a.to_vec(),
            epsilon: format!("{}/{}", p.epsilon.0, p.epsilon.1),
            c: p.c,
            d: p.d,
            m: p.m,
            l: p.l,
            r0: p.r0,
            cardinality: set.members.len(),
        }
    }
}

/// Integer quadratic through the tuple positions; handy for building
/// explicit solutions in tests and reports.
pub fn quadratic_tuple(a: &[i64; 5], c0: i64, c1: i64, c2: i64) -> [i64; 5] {
    a.map(|x| c0 + c1 * x + c2 * x * x)
}

/// `true` if `x` has every base-`m` digit strictly below `bound`.
pub fn digits_below(x: u64, m: u64, width: u32, bound: u64) -> bool {
    to_digits(x, m, width).iter().all(|&d| d < bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: i64) -> BigRational {
        BigRational::from_integer(x.into())
    }

    #[test]
    fn system_for_consecutive() {
        let s = solution_system(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(s.v(), [-2, 6, -6, 2]);
        assert_eq!(s.vt(), [-2, 6, -6, 2]);
        assert_eq!(s.vt()[3], -s.v()[0]);
        assert_eq!(s.l1_weight(), 32);
        assert_eq!(s.primitive().l1_weight(), 16);
    }

    #[test]
    fn system_identities() {
        for a in [[1, 2, 3, 4, 5], [0, 2, 3, 4, 6], [-3, 0, 1, 7, 20]] {
            let s = solution_system(&a).unwrap();
            assert_eq!(s.vt()[3], -s.v()[0]);
            for (coef, xs) in [(s.v(), &a[0..4]), (s.vt(), &a[1..5])] {
                for pow in 0..3u32 {
                    let sum: i64 = coef.iter().zip(xs).map(|(c, x)| c * x.pow(pow)).sum();
                    assert_eq!(sum, 0);
                }
            }
        }
        let s = solution_system(&[0, 2, 3, 4, 6]).unwrap();
        let g = s.v().iter().fold(0i64, |acc, &c| acc.gcd(&c));
        let prim = s.v().map(|c| c / g);
        assert!(prim == [1, -6, 8, -3] || prim == [-1, 6, -8, 3]);
    }

    #[test]
    fn system_rejects_non_increasing() {
        assert!(solution_system(&[1, 2, 2, 4, 5]).is_err());
        assert!(solution_system(&[5, 4, 3, 2, 1]).is_err());
    }

    #[test]
    fn quadratic_tuples_solve_the_system() {
        let a = [1, 3, 4, 8, 9];
        let s = solution_system(&a).unwrap();
        assert!(s.holds(&quadratic_tuple(&a, 5, -2, 7)));
        assert!(!s.holds(&[0, 0, 0, 0, 1]));
    }

    #[test]
    fn paper_parameters_need_huge_l() {
        // Raw weight 32, eps = 1/2: d = 5, m > 32^9 * 25 ...
        assert!(matches!(
            ruzsa_set(&[1, 2, 3, 4, 5], (1, 2), RuzsaOptions::default()),
            Err(Error::ResourceCap { .. })
        ));
    }

    #[test]
    fn ruzsa_parameters_minimal() {
        let (d, m, l) = ruzsa_parameters(16, (19, 20)).unwrap();
        assert_eq!((d, m), (3, 96));
        assert_eq!(l, BigInt::from(96u64.pow(3)));
        // m^(0.97) > 48 first holds at m = 64
        let (d, m, _) = ruzsa_parameters(16, (99, 100)).unwrap();
        assert_eq!((d, m), (3, 64));
    }

    #[test]
    fn ruzsa_small_scale_is_solution_free() {
        let a = [1, 2, 3, 4, 5];
        let set = ruzsa_set(&a, (19, 20), RuzsaOptions::default()).unwrap();
        assert!(set.params.admissible);
        assert!(set.beats_power_bound());
        assert!(set.meets_pigeonhole_bound());
        let sys = solution_system(&a).unwrap();
        assert_eq!(verify_solution_free(&set.members, &sys, 1 << 40), Verdict::Pass);
        let bound = set.params.digit_bound();
        for &x in &set.members {
            let dg = set.digits(x);
            assert!(dg.iter().all(|&d| d < bound));
            assert_eq!(dg.iter().map(|d| d * d).sum::<u64>(), set.params.r0);
        }
    }

    #[test]
    fn explicit_reduced_scale_is_solution_free() {
        let a = [1, 2, 3, 4, 5];
        let set = ruzsa_set_explicit(&a, (1, 2), CoefficientNorm::Primitive, 5, 64).unwrap();
        assert!(!set.params.admissible);
        let sys = solution_system(&a).unwrap();
        assert!(verify_solution_free(&set.members, &sys, 1 << 40).is_pass());
    }

    #[test]
    fn verify_finds_arithmetic_window() {
        let sys = solution_system(&[1, 2, 3, 4, 5]).unwrap();
        let set: Vec<u64> = (0..10).collect();
        match verify_solution_free(&set, &sys, 1 << 20) {
            Verdict::Fail(q) => {
                assert!(sys.holds(&q));
                assert!(q.iter().any(|&x| x != q[0]));
            }
            other => panic!("expected a witness, got {other:?}"),
        }
        assert_eq!(verify_solution_free(&[7], &sys, 1), Verdict::Pass);
        assert!(matches!(
            verify_solution_free(&set, &sys, 10),
            Verdict::Indeterminate { required: 1000, budget: 10 }
        ));
    }

    #[test]
    fn greedy_is_solution_free() {
        let a = [1, 2, 3, 4, 5];
        let sys = solution_system(&a).unwrap();
        let g = greedy_solution_free(&sys, 300);
        assert!(g.len() > 20);
        assert!(verify_solution_free(&g, &sys, 1 << 40).is_pass());
        let a = [0, 1, 3, 4, 7];
        let sys = solution_system(&a).unwrap();
        let g = greedy_solution_free(&sys, 200);
        assert!(verify_solution_free(&g, &sys, 1 << 40).is_pass());
    }

    #[test]
    fn same_norm_constant_and_counterexample() {
        let sys = solution_system(&[1, 2, 3, 4, 5]).unwrap();
        let c = vec![r(3), r(-1)];
        let rep = same_norm_check(&[c.clone(), c.clone(), c.clone(), c.clone(), c], &sys).unwrap();
        assert!(rep.premises_hold && rep.conclusion_holds);

        let bad = SolutionSystem::from_raw([1, -1, 1, -1], [-1, 1, -1, 1]).unwrap();
        let b = [1, 1, -1, -1, 1].map(|x| vec![r(x)]);
        let rep = same_norm_check(&b, &bad).unwrap();
        assert!(rep.premises_hold);
        assert!(!rep.conclusion_holds);
    }

    #[test]
    fn ap3_examples() {
        assert!(ap3_free(&[0, 1, 3, 4]).is_pass());
        assert_eq!(ap3_free(&[0, 2, 4]), Verdict::Fail((0, 2, 4)));
        assert!(ap3_free(&[]).is_pass());
        assert!(ap3_free(&[5]).is_pass());
    }

    #[test]
    fn behrend_small() {
        assert_eq!(behrend_set(1).unwrap().members, vec![0]);
        for n in [2, 10, 100, 1000, 10_000] {
            let b = behrend_set(n).unwrap();
            assert_eq!(b.verified, Some(true));
            assert!(b.members.iter().all(|&x| x < n));
        }
    }

    #[test]
    fn set_text_roundtrip() {
        let s = vec![0, 5, 17];
        assert_eq!(parse_set(&format_set(&s)).unwrap(), s);
        assert!(parse_set("1\nx\n").is_err());
    }
}
