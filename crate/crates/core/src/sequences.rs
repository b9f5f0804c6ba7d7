//! Integer sequences (primes, polynomial values, Hardy floors, Beatty) and
//! Bohr sets `S_delta = {n : ||n alpha|| < delta}` with their polynomial
//! variants.
//!
//! Floors and Bohr membership for irrational parameters go through a
//! precision ladder: 128-bit fixed point first, then rational interval
//! enclosures at 256 and 1024 bits. Cases still undecided are flagged, never
//! guessed.

use std::fmt;
use std::sync::RwLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Roots;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exactlin::Rational;
use crate::report::{parse_rational, rat_string, Exact};

pub const LADDER: [u32; 2] = [256, 1024];

/// Primes below `bound`, increasing.
pub fn primes_below(bound: u64) -> Vec<u64> {
    if bound < 3 {
        return Vec::new();
    }
    let n = bound as usize;
    let mut sieve = vec![true; n];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i < n {
        if sieve[i] {
            let mut j = i * i;
            while j < n {
                sieve[j] = false;
                j += i;
            }
        }
        i += 1;
    }
    sieve
        .iter()
        .enumerate()
        .filter(|(_, &p)| p)
        .map(|(i, _)| i as u64)
        .collect()
}

/// The first `count` primes.
pub fn first_primes(count: usize) -> Vec<u64> {
    if count == 0 {
        return Vec::new();
    }
    let c = count.max(6) as f64;
    let bound = (c * (c.ln() + c.ln().ln())) as u64 + 10;
    let mut p = primes_below(bound);
    p.truncate(count);
    p
}

static PRIME_CACHE: RwLock<Vec<u64>> = RwLock::new(Vec::new());

/// `p_n`, 1-indexed.
pub fn nth_prime(n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::OutOfRange("primes are indexed from 1".into()));
    }
    let idx = (n - 1) as usize;
    if let Some(&p) = PRIME_CACHE.read().expect("prime cache").get(idx) {
        return Ok(p);
    }
    let mut cache = PRIME_CACHE.write().expect("prime cache");
    if cache.len() <= idx {
        *cache = first_primes((idx + 1).max(2 * cache.len()));
    }
    Ok(cache[idx])
}

/// A real parameter that can be enclosed to any precision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Real {
    Rational(Rational),
    /// `sqrt(k)`.
    Sqrt(u64),
    /// `(1 + sqrt 5) / 2`.
    Golden,
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rational(r) => write!(f, "{}", rat_string(r)),
            Self::Sqrt(k) => write!(f, "sqrt{k}"),
            Self::Golden => write!(f, "golden"),
        }
    }
}

impl Real {
    /// `sqrtK`, `sqrt(K)`, `golden`, `p/q`, an integer or a decimal.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "golden" {
            return Ok(Self::Golden);
        }
        if let Some(rest) = t.strip_prefix("sqrt") {
            let k: u64 = rest
                .trim_matches(|c| c == '(' || c == ')')
                .parse()
                .map_err(|_| Error::Parse(format!("bad real {s:?}")))?;
            let r = k.sqrt();
            if r * r == k {
                return Ok(Self::Rational(Rational::from_integer(r.into())));
            }
            return Ok(Self::Sqrt(k));
        }
        Ok(Self::Rational(parse_rational(t)?))
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, Self::Rational(_))
    }

    /// `[lo, hi]` of width at most `2^-bits` containing the value.
    pub fn enclose(&self, bits: u32) -> (Rational, Rational) {
        let scale = BigInt::one() << bits;
        let sqrt_enc = |k: u64| {
            let big = BigUint::from(k) << (2 * bits);
            let r = big.sqrt();
            let exact = &r * &r == big;
            let lo = Rational::new(BigInt::from(r.clone()), scale.clone());
            let hi = if exact {
                lo.clone()
            } else {
                Rational::new(BigInt::from(r + 1u32), scale.clone())
            };
            (lo, hi)
        };
        match self {
            Self::Rational(r) => (r.clone(), r.clone()),
            Self::Sqrt(k) => sqrt_enc(*k),
            Self::Golden => {
                let (lo, hi) = sqrt_enc(5);
                let half = Rational::new(1.into(), 2.into());
                ((lo + Rational::one()) * &half, (hi + Rational::one()) * &half)
            }
        }
    }

    /// `floor(frac(x) 2^128)`; the true fraction lies within `2^-127` above.
    pub fn frac128(&self) -> u128 {
        let (lo, _) = self.enclose(192);
        let f = &lo - lo.floor();
        (f * Rational::from_integer(BigInt::one() << 128u32))
            .floor()
            .to_integer()
            .to_u128()
            .unwrap_or(u128::MAX)
    }

    pub fn to_f64(&self) -> f64 {
        self.enclose(64).0.to_f64().unwrap_or(f64::NAN)
    }
}

/// `[lo, hi]` with rational endpoints.
#[derive(Debug, Clone, PartialEq)]
struct Interval {
    lo: Rational,
    hi: Rational,
}

impl Interval {
    fn point(r: Rational) -> Self {
        Self { lo: r.clone(), hi: r }
    }

    fn of(x: &Real, bits: u32) -> Self {
        let (lo, hi) = x.enclose(bits);
        Self { lo, hi }
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            lo: &self.lo + &o.lo,
            hi: &self.hi + &o.hi,
        }
    }

    fn scale(&self, c: &Rational) -> Self {
        let (a, b) = (&self.lo * c, &self.hi * c);
        if a <= b {
            Self { lo: a, hi: b }
        } else {
            Self { lo: b, hi: a }
        }
    }

    /// Certified floor, if both ends agree.
    fn floor(&self) -> Option<BigInt> {
        let a = self.lo.floor().to_integer();
        let b = self.hi.floor().to_integer();
        (a == b).then_some(a)
    }
}

/// One summand of a Hardy expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HardyTerm {
    /// `coeff * x^(p/q)`.
    Power { coeff: Rational, p: u32, q: u32 },
    /// `coeff * x log x`.
    XLogX { coeff: Rational },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardyExpr {
    pub terms: Vec<HardyTerm>,
}

impl HardyExpr {
    /// Sums of terms `c*x^(p/q)`, `x^p`, `x`, `c`, `c*x*log(x)`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad Hardy expression {s:?}"));
        let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut parts = Vec::new();
        let mut cur = String::new();
        let mut depth = 0;
        let mut prev: Option<char> = None;
        for ch in cleaned.chars() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                _ => {}
            }
            if (ch == '+' || ch == '-') && depth == 0 && prev.is_some() && prev != Some('^') && prev != Some('*') {
                parts.push(std::mem::take(&mut cur));
            }
            cur.push(ch);
            prev = Some(ch);
        }
        parts.push(cur);
        let mut terms = Vec::new();
        for part in parts {
            let (sign, body) = match part.strip_prefix('-') {
                Some(b) => (-1, b.to_string()),
                None => (1, part.trim_start_matches('+').to_string()),
            };
            if body.is_empty() {
                return Err(bad());
            }
            let (coeff, rest) = match body.find('x') {
                Some(0) => (Rational::one(), body.as_str()),
                Some(i) => {
                    let c = body[..i].trim_end_matches('*');
                    (parse_rational(c)?, &body[i..])
                }
                None => {
                    terms.push(HardyTerm::Power {
                        coeff: parse_rational(&body)? * Rational::from_integer(sign.into()),
                        p: 0,
                        q: 1,
                    });
                    continue;
                }
            };
            let coeff = coeff * Rational::from_integer(sign.into());
            let term = match rest {
                "x" => HardyTerm::Power { coeff, p: 1, q: 1 },
                "x*log(x)" | "xlog(x)" | "x*logx" | "xlogx" => HardyTerm::XLogX { coeff },
                _ => {
                    let e = rest.strip_prefix("x^").ok_or_else(bad)?;
                    let e = e.trim_matches(|c| c == '(' || c == ')');
                    let r = parse_rational(e)?;
                    if r.is_negative() {
                        return Err(bad());
                    }
                    HardyTerm::Power {
                        coeff,
                        p: r.numer().to_u32().ok_or_else(bad)?,
                        q: r.denom().to_u32().ok_or_else(bad)?,
                    }
                }
            };
            terms.push(term);
        }
        Ok(Self { terms })
    }

    fn enclose(&self, n: u64, bits: u32) -> Interval {
        let mut acc = Interval::point(Rational::zero());
        for t in &self.terms {
            let v = match t {
                HardyTerm::Power { coeff, p, q } => root_enclosure(n, *p, *q, bits).scale(coeff),
                HardyTerm::XLogX { coeff } => {
                    let l = ln_enclosure(n, bits);
                    let nn = Rational::from_integer(n.into());
                    Interval {
                        lo: &l.lo * &nn,
                        hi: &l.hi * &nn,
                    }
                    .scale(coeff)
                }
            };
            acc = acc.add(&v);
        }
        acc
    }
}

impl fmt::Display for HardyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| match t {
                HardyTerm::Power { coeff, p, q } => format!("{}*x^({p}/{q})", rat_string(coeff)),
                HardyTerm::XLogX { coeff } => format!("{}*x*log(x)", rat_string(coeff)),
            })
            .collect();
        write!(f, "{}", parts.join("+"))
    }
}

/// `n^(p/q)`, exact when it is rational.
fn root_enclosure(n: u64, p: u32, q: u32, bits: u32) -> Interval {
    let base = BigUint::from(n).pow(p);
    let scaled = &base << (q * bits) as usize;
    let r = scaled.nth_root(q);
    let scale = BigInt::one() << bits;
    let lo = Rational::new(BigInt::from(r.clone()), scale.clone());
    if r.pow(q) == scaled {
        // Exact at this scale; if the root is an integer it is exact outright.
        let ir = base.nth_root(q);
        if ir.pow(q) == base {
            return Interval::point(Rational::from_integer(ir.into()));
        }
    }
    Interval {
        lo,
        hi: Rational::new(BigInt::from(r + 1u32), scale),
    }
}

/// `2 atanh(z)` for rational `0 <= z <= 1/3`, enclosed to `2^-bits`.
fn atanh2(z: &Rational, bits: u32) -> Interval {
    let work = bits + 16;
    let scale = BigInt::one() << work;
    let (zn, zd) = (z.numer().clone(), z.denom().clone());
    let z2n = &zn * &zn;
    let z2d = &zd * &zd;
    // term_j = z^(2j+1) / (2j+1), computed as floor in units of 2^-work.
    let mut pow_num = zn.clone();
    let mut pow_den = zd.clone();
    let mut sum = BigInt::zero();
    let mut j: u64 = 0;
    loop {
        let t = (&pow_num * &scale) / (&pow_den * BigInt::from(2 * j + 1));
        if t.is_zero() {
            break;
        }
        sum += t;
        j += 1;
        pow_num *= &z2n;
        pow_den *= &z2d;
    }
    // Each floor loses < 1 unit; the tail is below z^(2j+1)/(1 - z^2) < 2 units.
    let lo = Rational::new(2 * &sum, scale.clone());
    let hi = Rational::new(2 * (sum + BigInt::from(j + 3)), scale);
    Interval { lo, hi }
}

/// `ln n` for `n >= 1`.
fn ln_enclosure(n: u64, bits: u32) -> Interval {
    if n <= 1 {
        return Interval::point(Rational::zero());
    }
    let k = 63 - n.leading_zeros();
    let pk = 1u64 << k;
    let ln2 = atanh2(&Rational::new(1.into(), 3.into()), bits + 8);
    let kr = Rational::from_integer(k.into());
    let zr = Rational::new(BigInt::from(n - pk), BigInt::from(n + pk));
    let rest = atanh2(&zr, bits + 8);
    Interval {
        lo: &ln2.lo * &kr + rest.lo,
        hi: &ln2.hi * &kr + rest.hi,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SequenceSpec {
    /// Ascending integer coefficients.
    Polynomial(Vec<i64>),
    /// `q(p_n + shift)`.
    PrimesShifted { poly: Vec<i64>, shift: i64 },
    /// `floor(f(n))`; the growth hypothesis on `f` is the caller's.
    Hardy(HardyExpr),
    /// `floor(theta n + gamma)`.
    Beatty { theta: Real, gamma: Real },
}

impl SequenceSpec {
    pub fn describe(&self) -> String {
        match self {
            Self::Polynomial(p) => format!("poly{p:?}"),
            Self::PrimesShifted { poly, shift } => format!("poly{poly:?}(p_n{shift:+})"),
            Self::Hardy(h) => format!("floor({h})"),
            Self::Beatty { theta, gamma } => format!("floor({theta}*n+{gamma})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SequenceValue {
    Certified(BigInt),
    /// The floor could not be decided at the top precision.
    Indeterminate { bits: u32 },
}

pub fn eval_poly(p: &[i64], x: &BigInt) -> BigInt {
    p.iter()
        .rev()
        .fold(BigInt::zero(), |acc, &c| acc * x + BigInt::from(c))
}

pub fn eval_sequence(spec: &SequenceSpec, n: u64) -> Result<SequenceValue> {
    eval_sequence_at(spec, n, *LADDER.last().unwrap())
}

/// Enclosure widths tried up to `max_bits`: 64, then 256, doubling.
pub fn precision_ladder(max_bits: u32) -> Vec<u32> {
    let mut out = vec![64.min(max_bits.max(1))];
    let mut b = 256;
    while b <= max_bits {
        out.push(b);
        b *= 2;
    }
    if *out.last().unwrap() < max_bits {
        out.push(max_bits);
    }
    out
}

/// [`eval_sequence`] with the enclosure ladder capped at `max_bits`.
pub fn eval_sequence_at(spec: &SequenceSpec, n: u64, max_bits: u32) -> Result<SequenceValue> {
    if n == 0 {
        return Err(Error::OutOfRange("sequences are indexed from 1".into()));
    }
    let ladder = precision_ladder(max_bits);
    let certified = |enc: &dyn Fn(u32) -> Interval| {
        for &bits in &ladder {
            if let Some(v) = enc(bits).floor() {
                return SequenceValue::Certified(v);
            }
        }
        SequenceValue::Indeterminate {
            bits: *ladder.last().unwrap(),
        }
    };
    Ok(match spec {
        SequenceSpec::Polynomial(p) => SequenceValue::Certified(eval_poly(p, &BigInt::from(n))),
        SequenceSpec::PrimesShifted { poly, shift } => {
            let p = nth_prime(n)? as i64 + shift;
            SequenceValue::Certified(eval_poly(poly, &BigInt::from(p)))
        }
        SequenceSpec::Hardy(h) => certified(&|bits| h.enclose(n, bits)),
        SequenceSpec::Beatty { theta, gamma } => certified(&|bits| {
            Interval::of(theta, bits)
                .scale(&Rational::from_integer(n.into()))
                .add(&Interval::of(gamma, bits))
        }),
    })
}

/// Newline-delimited values for `n` in `[lo, hi]`; undecided floors print
/// as `?`.
pub fn sequence_stream(spec: &SequenceSpec, lo: u64, hi: u64) -> Result<String> {
    let mut s = String::new();
    for n in lo..=hi {
        match eval_sequence(spec, n)? {
            SequenceValue::Certified(v) => s.push_str(&format!("{v}\n")),
            SequenceValue::Indeterminate { .. } => s.push_str("?\n"),
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BohrKind {
    Linear,
    /// Both `q1(n) alpha` and `q2(n) alpha` must be close to 0.
    Polynomial { q1: Vec<i64>, q2: Vec<i64> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BohrSpec {
    pub alpha: Vec<Real>,
    /// Radius; `delta >= 1/2` makes the ball the whole circle.
    pub delta: Rational,
    pub kind: BohrKind,
    alpha128: Vec<u128>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Membership {
    In,
    Out,
    /// Too close to the boundary to decide at the top precision.
    Grazer,
}

fn trim(p: &[i64]) -> Vec<i64> {
    let mut v = p.to_vec();
    while v.last() == Some(&0) {
        v.pop();
    }
    v
}

impl BohrSpec {
    pub fn new(alpha: Vec<Real>, delta: Rational, kind: BohrKind) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidParameter("alpha must be nonempty".into()));
        }
        if !delta.is_positive() {
            return Err(Error::InvalidParameter("delta must be positive".into()));
        }
        if let BohrKind::Polynomial { q1, q2 } = &kind {
            let (a, b) = (trim(q1), trim(q2));
            if a.first().is_some_and(|&c| c != 0) || b.first().is_some_and(|&c| c != 0) {
                return Err(Error::InvalidParameter("q1, q2 need zero constant terms".into()));
            }
            let len = a.len().max(b.len());
            let at = |v: &[i64], i: usize| *v.get(i).unwrap_or(&0) as i128;
            let independent = (0..len).any(|i| (0..len).any(|j| at(&a, i) * at(&b, j) != at(&a, j) * at(&b, i)));
            if !independent {
                return Err(Error::InvalidParameter("q1, q2 must be linearly independent".into()));
            }
        }
        let alpha128 = alpha.iter().map(|a| a.frac128()).collect();
        Ok(Self {
            alpha,
            delta,
            kind,
            alpha128,
        })
    }

    pub fn linear(alpha: Real, delta: Rational) -> Result<Self> {
        Self::new(vec![alpha], delta, BohrKind::Linear)
    }

    fn multipliers(&self, n: u64) -> Vec<BigInt> {
        let x = BigInt::from(n);
        match &self.kind {
            BohrKind::Linear => vec![x],
            BohrKind::Polynomial { q1, q2 } => vec![eval_poly(q1, &x), eval_poly(q2, &x)],
        }
    }

    pub fn classify(&self, n: u64) -> Membership {
        if self.delta >= Rational::new(1.into(), 2.into()) {
            return Membership::In;
        }
        let mults = self.multipliers(n);
        let delta = self.delta.to_f64().unwrap_or(0.0);
        let mut undecided = false;
        for &a in &self.alpha128 {
            for k in &mults {
                let (mag, neg) = (k.magnitude(), k.sign() == Sign::Minus);
                let low = mag.iter_u64_digits().next().unwrap_or(0) as u128
                    | (mag.iter_u64_digits().nth(1).unwrap_or(0) as u128) << 64;
                let mut v = a.wrapping_mul(low);
                if neg {
                    v = v.wrapping_neg();
                }
                let d = v.min(v.wrapping_neg());
                let dist = (d >> 64) as f64 / 2f64.powi(64);
                let err = (mag.to_f64().unwrap_or(f64::INFINITY) + 2.0) * 2f64.powi(-127) + 1e-15;
                if dist + err < delta {
                    continue;
                }
                if dist - err >= delta {
                    return Membership::Out;
                }
                undecided = true;
            }
        }
        if !undecided {
            return Membership::In;
        }
        for bits in LADDER {
            if let Some(m) = self.classify_exact(&mults, bits) {
                return m;
            }
        }
        Membership::Grazer
    }

    fn classify_exact(&self, mults: &[BigInt], bits: u32) -> Option<Membership> {
        let mut all_in = true;
        for a in &self.alpha {
            for k in mults {
                let iv = Interval::of(a, bits).scale(&Rational::from_integer(k.clone()));
                let mid = (&iv.lo + &iv.hi) / Rational::from_integer(2.into());
                let near = mid.round();
                let in_ball = |x: &Rational| (x - &near).abs() < self.delta;
                if in_ball(&iv.lo) && in_ball(&iv.hi) {
                    continue;
                }
                let f = &iv.lo - iv.lo.floor();
                let w = &iv.hi - &iv.lo;
                if f >= self.delta && &f + &w <= Rational::one() - &self.delta {
                    return Some(Membership::Out);
                }
                all_in = false;
            }
        }
        all_in.then_some(Membership::In)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BohrMembers {
    pub members: Vec<u64>,
    pub grazers: Vec<u64>,
}

/// Members of `S_delta` in `[m, n)`.
pub fn bohr_members(spec: &BohrSpec, m: u64, n: u64) -> BohrMembers {
    let chunk = 1u64 << 14;
    let parts: Vec<(Vec<u64>, Vec<u64>)> = (m / chunk..n.div_ceil(chunk))
        .into_par_iter()
        .map(|k| {
            let (mut mem, mut gr) = (Vec::new(), Vec::new());
            for x in (k * chunk).max(m)..((k + 1) * chunk).min(n) {
                match spec.classify(x) {
                    Membership::In => mem.push(x),
                    Membership::Grazer => gr.push(x),
                    Membership::Out => {}
                }
            }
            (mem, gr)
        })
        .collect();
    let mut out = BohrMembers {
        members: Vec::new(),
        grazers: Vec::new(),
    };
    for (a, b) in parts {
        out.members.extend(a);
        out.grazers.extend(b);
    }
    out
}

/// `|(1/(N-M)) sum_{n=M}^{N-1} e(n^2 b.alpha + n theta)|`.
pub fn weyl_sum(b: &[i64], alpha: &[Real], theta: &Real, m: u64, n: u64) -> Result<f64> {
    if n <= m {
        return Err(Error::InvalidParameter("window must be nonempty".into()));
    }
    if b.len() != alpha.len() {
        return Err(Error::DimensionMismatch {
            expected: alpha.len(),
            got: b.len(),
        });
    }
    let beta = b
        .iter()
        .zip(alpha)
        .fold(0u128, |acc, (&bj, a)| acc.wrapping_add(a.frac128().wrapping_mul(bj as u128)));
    let th = theta.frac128();
    let chunk = 1u64 << 14;
    let (re, im) = (m / chunk..n.div_ceil(chunk))
        .into_par_iter()
        .map(|k| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for x in (k * chunk).max(m)..((k + 1) * chunk).min(n) {
                let x = x as u128;
                let ph = beta.wrapping_mul(x.wrapping_mul(x)).wrapping_add(th.wrapping_mul(x));
                let t = (ph >> 64) as f64 / 2f64.powi(64) * std::f64::consts::TAU;
                re += t.cos();
                im += t.sin();
            }
            (re, im)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((re.hypot(im) / (n - m) as f64).min(1.0))
}

/// Half-open axis-aligned box `prod [lo_j, hi_j)` in `[0, 1]^k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusBox {
    pub lo: Vec<Rational>,
    pub hi: Vec<Rational>,
}

impl TorusBox {
    pub fn new(lo: Vec<Rational>, hi: Vec<Rational>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        let unit = |r: &Rational| !r.is_negative() && r <= &Rational::one();
        if lo.iter().zip(&hi).any(|(a, b)| !unit(a) || !unit(b) || a > b) {
            return Err(Error::OutOfRange("box corners must satisfy 0 <= lo <= hi <= 1".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn interval(lo: Rational, hi: Rational) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn volume(&self) -> Rational {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// `ceil(c 2^128)` per corner; `None` stands for `2^128`.
    fn thresholds(&self) -> Vec<(Option<u128>, Option<u128>)> {
        let s = Rational::from_integer(BigInt::one() << 128u32);
        let conv = |r: &Rational| (r * &s).ceil().to_integer().to_u128();
        self.lo.iter().zip(&self.hi).map(|(a, b)| (conv(a), conv(b))).collect()
    }
}

fn in_box(p: &[u128], t: &[(Option<u128>, Option<u128>)]) -> bool {
    p.iter().zip(t).all(|(&x, &(lo, hi))| {
        let above = match lo {
            Some(l) => x >= l,
            None => false,
        };
        let below = match hi {
            Some(h) => x < h,
            None => true,
        };
        above && below
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxResult {
    pub lo: Vec<String>,
    pub hi: Vec<String>,
    pub count: u64,
    pub frequency: Exact,
    pub volume: Exact,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquidistReport {
    pub window: (u64, u64),
    pub samples: u64,
    pub skipped_grazers: u64,
    pub boxes: Vec<BoxResult>,
    pub max_gap: f64,
}

/// Point supplied for `n`: coordinates in 128-bit fixed point, or `None`
/// when `n` is not sampled. Grazers are reported through the second flag.
pub type Sample = (Option<Vec<u128>>, bool);

/// Empirical box frequencies of a sequence in `T^k` over `[m, n)`.
pub fn equidistribution_test<F>(points: F, boxes: &[TorusBox], m: u64, n: u64) -> Result<EquidistReport>
where
    F: Fn(u64) -> Sample + Sync,
{
    let thresholds: Vec<_> = boxes.iter().map(|b| b.thresholds()).collect();
    let chunk = 1u64 << 14;
    let (counts, total, grazers) = (m / chunk..n.div_ceil(chunk))
        .into_par_iter()
        .map(|k| {
            let mut counts = vec![0u64; boxes.len()];
            let (mut total, mut gr) = (0u64, 0u64);
            for x in (k * chunk).max(m)..((k + 1) * chunk).min(n) {
                let (p, grazer) = points(x);
                gr += grazer as u64;
                if let Some(p) = p {
                    total += 1;
                    for (c, t) in counts.iter_mut().zip(&thresholds) {
                        *c += in_box(&p, t) as u64;
                    }
                }
            }
            (counts, total, gr)
        })
        .reduce(
            || (vec![0; boxes.len()], 0, 0),
            |mut a, b| {
                for (x, y) in a.0.iter_mut().zip(b.0) {
                    *x += y;
                }
                (a.0, a.1 + b.1, a.2 + b.2)
            },
        );
    if total == 0 {
        return Err(Error::InvalidParameter("no sampled points in the window".into()));
    }
    let results: Vec<BoxResult> = boxes
        .iter()
        .zip(counts)
        .map(|(b, c)| {
            let freq = Rational::new(c.into(), total.into());
            let vol = b.volume();
            let gap = (&freq - &vol).abs().to_f64().unwrap_or(f64::NAN);
            BoxResult {
                lo: b.lo.iter().map(rat_string).collect(),
                hi: b.hi.iter().map(rat_string).collect(),
                count: c,
                frequency: freq.into(),
                volume: vol.into(),
                gap,
            }
        })
        .collect();
    Ok(EquidistReport {
        window: (m, n),
        samples: total,
        skipped_grazers: grazers,
        max_gap: results.iter().map(|r| r.gap).fold(0.0, f64::max),
        boxes: results,
    })
}

/// `n^2 alpha` sampled along `S_delta` (linear Bohr set of the same
/// `alpha`).
pub fn bohr_square_equidistribution(
    alpha: &[Real],
    delta: Rational,
    boxes: &[TorusBox],
    m: u64,
    n: u64,
) -> Result<EquidistReport> {
    let spec = BohrSpec::new(alpha.to_vec(), delta, BohrKind::Linear)?;
    let a128: Vec<u128> = alpha.iter().map(|a| a.frac128()).collect();
    equidistribution_test(
        |x| match spec.classify(x) {
            Membership::In => {
                let sq = (x as u128).wrapping_mul(x as u128);
                (Some(a128.iter().map(|a| a.wrapping_mul(sq)).collect()), false)
            }
            Membership::Out => (None, false),
            Membership::Grazer => (None, true),
        },
        boxes,
        m,
        n,
    )
}

/// `k` equal-length intervals partitioning `[0, 1)`.
pub fn uniform_partition(k: u64) -> Vec<TorusBox> {
    (0..k)
        .map(|i| {
            TorusBox::interval(
                Rational::new(i.into(), k.into()),
                Rational::new((i + 1).into(), k.into()),
            )
            .expect("valid partition")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    fn trial_division(n: u64) -> bool {
        n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
    }

    #[test]
    fn primes_examples() {
        assert_eq!(first_primes(3), vec![2, 3, 5]);
        let p = primes_below(100);
        assert_eq!(p.len(), 25);
        assert_eq!(p, (0..100).filter(|&n| trial_division(n)).collect::<Vec<_>>());
        assert_eq!(nth_prime(1000).unwrap(), 7919);
        let spec = SequenceSpec::PrimesShifted { poly: vec![0, 1], shift: -1 };
        let v: Vec<_> = (1..=4).map(|n| eval_sequence(&spec, n).unwrap()).collect();
        let expect: Vec<_> = [1, 2, 4, 6].iter().map(|&x| SequenceValue::Certified(x.into())).collect();
        assert_eq!(v, expect);
    }

    #[test]
    fn sequence_examples() {
        let beatty = SequenceSpec::Beatty {
            theta: Real::Sqrt(2),
            gamma: Real::Rational(q(0, 1)),
        };
        let v: Vec<_> = (1..=3).map(|n| eval_sequence(&beatty, n).unwrap()).collect();
        assert_eq!(
            v,
            [1, 2, 4].iter().map(|&x| SequenceValue::Certified(x.into())).collect::<Vec<_>>()
        );
        let h = SequenceSpec::Hardy(HardyExpr::parse("x^(3/2)").unwrap());
        assert_eq!(eval_sequence(&h, 4).unwrap(), SequenceValue::Certified(8.into()));
        assert_eq!(eval_sequence(&h, 2).unwrap(), SequenceValue::Certified(2.into()));
        let p = SequenceSpec::Polynomial(vec![-1, 0, 1]);
        assert_eq!(eval_sequence(&p, 5).unwrap(), SequenceValue::Certified(24.into()));
        assert!(eval_sequence(&p, 0).is_err());
    }

    #[test]
    fn hardy_logs_and_parsing() {
        let h = HardyExpr::parse("x*log(x) + 1/2*x^(1/3) - 2").unwrap();
        assert_eq!(h.terms.len(), 3);
        for n in [2u64, 10, 1000, 123456] {
            let nf = n as f64;
            let expect = (nf * nf.ln() + 0.5 * nf.cbrt() - 2.0).floor();
            let got = eval_sequence(&SequenceSpec::Hardy(h.clone()), n).unwrap();
            assert_eq!(got, SequenceValue::Certified(BigInt::from(expect as i64)), "{n}");
        }
        let l = ln_enclosure(1000, 80);
        let w = (&l.hi - &l.lo).to_f64().unwrap();
        assert!(w < 1e-20);
        assert!((l.lo.to_f64().unwrap() - 1000f64.ln()).abs() < 1e-14);
        assert!(HardyExpr::parse("x^").is_err());
    }

    #[test]
    fn undecidable_floor_is_flagged() {
        // The value is exactly 0, but every enclosure straddles it.
        let h = HardyExpr::parse("x^(1/3) - x^(1/3)").unwrap();
        assert_eq!(
            eval_sequence(&SequenceSpec::Hardy(h), 2).unwrap(),
            SequenceValue::Indeterminate { bits: 1024 }
        );
    }

    #[test]
    fn bohr_examples() {
        let s = BohrSpec::linear(Real::Rational(q(1, 4)), q(3, 10)).unwrap();
        let mem = bohr_members(&s, 0, 40);
        assert!(mem.grazers.is_empty());
        assert_eq!(
            mem.members,
            (0..40).filter(|n| n % 4 != 2).collect::<Vec<_>>()
        );
        let all = BohrSpec::linear(Real::Sqrt(2), q(1, 2)).unwrap();
        assert_eq!(bohr_members(&all, 0, 100).members.len(), 100);
        let poly = BohrSpec::new(
            vec![Real::Sqrt(2)],
            q(1, 10),
            BohrKind::Polynomial { q1: vec![0, 1], q2: vec![0, 0, 1] },
        )
        .unwrap();
        let lin = BohrSpec::linear(Real::Sqrt(2), q(1, 10)).unwrap();
        for n in 1..2000 {
            let both = lin.classify(n) == Membership::In && {
                let x = (n * n) as f64 * 2f64.sqrt();
                (x - x.round()).abs() < 0.1
            };
            assert_eq!(poly.classify(n) == Membership::In, both, "{n}");
        }
        assert!(BohrSpec::new(
            vec![Real::Sqrt(2)],
            q(1, 10),
            BohrKind::Polynomial { q1: vec![0, 1], q2: vec![0, 2] }
        )
        .is_err());
    }

    #[test]
    fn exact_grazer_resolution() {
        // ||n/3|| = 1/3 exactly for n = 1: on the boundary, so not a member.
        let s = BohrSpec::linear(Real::Rational(q(1, 3)), q(1, 3)).unwrap();
        assert_eq!(s.classify(1), Membership::Out);
        assert_eq!(s.classify(3), Membership::In);
    }

    #[test]
    fn weyl_sum_examples() {
        let half = Real::Rational(q(1, 2));
        let zero = Real::Rational(q(0, 1));
        assert!(weyl_sum(&[0], &[Real::Sqrt(2)], &half, 0, 101).unwrap() <= 1.0 / 101.0 + 1e-12);
        assert!((weyl_sum(&[0], &[Real::Sqrt(2)], &zero, 0, 50).unwrap() - 1.0).abs() < 1e-12);
        assert!(weyl_sum(&[1], &[Real::Sqrt(2)], &zero, 0, 100_000).unwrap() < 0.01);
        assert!(weyl_sum(&[1], &[Real::Sqrt(2)], &zero, 5, 5).is_err());
    }

    #[test]
    fn equidistribution_examples() {
        let boxes = vec![TorusBox::interval(q(1, 4), q(1, 2)).unwrap()];
        let c = 3u128 << 125; // 3/8
        let r = equidistribution_test(|_| (Some(vec![c]), false), &boxes, 0, 100).unwrap();
        assert_eq!(r.boxes[0].frequency.exact, "1/1");
        assert_eq!(r.boxes[0].volume.exact, "1/4");
        let a = Real::Sqrt(2).frac128();
        let part = uniform_partition(7);
        let r = equidistribution_test(|n| (Some(vec![a.wrapping_mul(n as u128)]), false), &part, 0, 10_000).unwrap();
        let total: u64 = r.boxes.iter().map(|b| b.count).sum();
        assert_eq!(total, r.samples);
        assert!(r.max_gap < 0.01);
        assert!(equidistribution_test(|_| (None, false), &part, 0, 10).is_err());
    }
}
