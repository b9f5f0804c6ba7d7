//! Circle arithmetic: fixed-point rotation numbers, interval unions and
//! periodic step functions on `T = R/Z`.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Roots;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactlin::Rational;

const ANGLE_BITS: u32 = 256;

/// A point of the circle stored as `floor(frac(alpha) * 2^256)`.
///
/// Multiples `k * alpha mod 1` are computed exactly modulo `2^256`, so the
/// only error is the initial truncation, at most `|k| * 2^-256`. When
/// `alpha` is itself a dyadic rational with denominator dividing `2^256` all
/// arithmetic is exact.
#[derive(Clone, PartialEq, Eq)]
pub struct Angle {
    frac: BigUint,
    exact: bool,
    label: String,
}

impl fmt::Debug for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Angle({}, {:.17})", self.label, self.to_f64())
    }
}

fn modulus() -> BigUint {
    BigUint::one() << ANGLE_BITS
}

impl Angle {
    /// `alpha = frac / 2^256`, exact.
    pub fn dyadic(frac: BigUint) -> Self {
        let frac = frac % modulus();
        Self {
            label: format!("dyadic:{frac:x}"),
            frac,
            exact: true,
        }
    }

    /// `p/q` reduced mod 1. Exact only when `q` is a power of two.
    pub fn ratio(p: i64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        let qb = BigInt::from(q);
        let r = ((BigInt::from(p) % &qb) + &qb) % &qb;
        let scaled = (r.to_biguint().unwrap() << ANGLE_BITS) / BigUint::from(q);
        Ok(Self {
            frac: scaled,
            exact: q.is_power_of_two(),
            label: format!("{p}/{q}"),
        })
    }

    /// Fractional part of `sqrt(k)`; `k` must not be a perfect square.
    pub fn sqrt(k: u64) -> Result<Self> {
        let r = k.sqrt();
        if r * r == k {
            return Err(Error::InvalidParameter(format!("{k} is a perfect square")));
        }
        let big = (BigUint::from(k) << (2 * ANGLE_BITS)).sqrt();
        let frac = big - (BigUint::from(r) << ANGLE_BITS);
        Ok(Self {
            frac,
            exact: false,
            label: format!("sqrt{k}"),
        })
    }

    /// `(sqrt 5 - 1) / 2`.
    pub fn golden() -> Self {
        let s5 = (BigUint::from(5u32) << (2 * ANGLE_BITS)).sqrt();
        let frac = (s5 - (BigUint::one() << ANGLE_BITS)) >> 1u32;
        Self {
            frac,
            exact: false,
            label: "golden".into(),
        }
    }

    pub fn from_f64(x: f64) -> Self {
        let f = x - x.floor();
        let bits = (f * 2f64.powi(53)) as u64;
        Self {
            frac: BigUint::from(bits) << (ANGLE_BITS - 53),
            exact: true,
            label: format!("{x}"),
        }
    }

    /// Accepts `sqrtK`, `sqrt(K)`, `golden`, `p/q` or a decimal.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "golden" {
            return Ok(Self::golden());
        }
        if let Some(rest) = t.strip_prefix("sqrt") {
            let k = rest.trim_matches(|c| c == '(' || c == ')');
            let k: u64 = k
                .parse()
                .map_err(|_| Error::Parse(format!("bad angle {s:?}")))?;
            return Self::sqrt(k);
        }
        if let Some((p, q)) = t.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| Error::Parse(format!("bad angle {s:?}")))?;
            let q: u64 = q.trim().parse().map_err(|_| Error::Parse(format!("bad angle {s:?}")))?;
            return Self::ratio(p, q);
        }
        let x: f64 = t.parse().map_err(|_| Error::Parse(format!("bad angle {s:?}")))?;
        let mut a = Self::from_f64(x);
        a.exact = false;
        a.label = t.to_string();
        Ok(a)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn to_f64(&self) -> f64 {
        self.frac.to_f64().unwrap_or(0.0) / 2f64.powi(ANGLE_BITS as i32)
    }

    /// Top 128 bits of the fraction.
    pub fn frac128(&self) -> u128 {
        (&self.frac >> (ANGLE_BITS - 128)).to_u128().unwrap_or(0)
    }

    /// `frac(k * alpha)` as a 256-bit fixed-point integer.
    pub fn mul_fixed(&self, k: &BigInt) -> BigUint {
        let m = modulus();
        let prod = BigInt::from(self.frac.clone()) * k;
        let r = prod % BigInt::from(m.clone());
        let r = if r.sign() == Sign::Minus {
            r + BigInt::from(m)
        } else {
            r
        };
        r.to_biguint().unwrap()
    }

    /// `frac(k * alpha)` rounded to `f64`; rounding error below `2^-53`
    /// plus the truncation error `|k| 2^-256`.
    pub fn mul_f64(&self, k: &BigInt) -> f64 {
        fixed_to_f64(&self.mul_fixed(k))
    }

    /// Bound on `|f64 result - true frac(k alpha)|` for [`Self::mul_f64`].
    pub fn mul_error(&self, k: &BigInt) -> f64 {
        let trunc = if self.exact {
            0.0
        } else {
            k.to_f64().unwrap_or(f64::INFINITY).abs() * 2f64.powi(-(ANGLE_BITS as i32))
        };
        trunc + 2f64.powi(-53)
    }
}

pub(crate) fn fixed_to_f64(x: &BigUint) -> f64 {
    let top = (x >> (ANGLE_BITS - 64)).to_u64().unwrap_or(0);
    (top >> 11) as f64 / 2f64.powi(53)
}

/// `x mod 1` into `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance to the nearest integer.
pub fn circle_norm(x: f64) -> f64 {
    let r = wrap(x);
    r.min(1.0 - r)
}

/// Finite union of disjoint half-open arcs `[lo, hi)` of `[0, 1)`, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self { intervals: vec![] }
    }

    pub fn full() -> Self {
        Self {
            intervals: vec![(0.0, 1.0)],
        }
    }

    /// Builds from arbitrary arcs `[lo, lo + len)`; arcs are wrapped into
    /// `[0, 1)`, split at 0 and merged.
    pub fn from_arcs<I: IntoIterator<Item = (f64, f64)>>(arcs: I) -> Self {
        let mut raw = Vec::new();
        for (lo, hi) in arcs {
            let len = hi - lo;
            if len.is_nan() || len <= 0.0 {
                continue;
            }
            if len >= 1.0 {
                return Self::full();
            }
            let a = wrap(lo);
            let b = a + len;
            if b <= 1.0 {
                raw.push((a, b));
            } else {
                raw.push((a, 1.0));
                raw.push((0.0, b - 1.0));
            }
        }
        raw.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            if let Some(last) = out.last_mut() {
                if a <= last.1 {
                    last.1 = last.1.max(b);
                    continue;
                }
            }
            out.push((a, b));
        }
        Self { intervals: out }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self::from_arcs([(lo, hi)])
    }

    /// Arcs with exact rational endpoints, rounded to nearest `f64`.
    pub fn from_rational_arcs(arcs: &[(Rational, Rational)]) -> Self {
        Self::from_arcs(
            arcs.iter()
                .map(|(a, b)| (rat_f64(a), rat_f64(b))),
        )
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let x = wrap(x);
        let i = self.intervals.partition_point(|&(a, _)| a <= x);
        i > 0 && x < self.intervals[i - 1].1
    }

    /// `{x + t : x in self}`.
    pub fn shift(&self, t: f64) -> Self {
        Self::from_arcs(self.intervals.iter().map(|&(a, b)| (a + t, b + t)))
    }

    pub fn complement(&self) -> Self {
        if self.intervals.is_empty() {
            return Self::full();
        }
        let mut out = Vec::new();
        let mut cur = 0.0;
        for &(a, b) in &self.intervals {
            if a > cur {
                out.push((cur, a));
            }
            cur = b;
        }
        if cur < 1.0 {
            out.push((cur, 1.0));
        }
        Self::from_arcs(out)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a0, a1) = self.intervals[i];
            let (b0, b1) = other.intervals[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo < hi {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self { intervals: out }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::from_arcs(self.intervals.iter().chain(&other.intervals).copied())
    }

    pub fn indicator(&self) -> StepFunction {
        let mut pts = vec![(0.0, 0.0)];
        for &(a, b) in &self.intervals {
            pts.push((a, 1.0));
            if b < 1.0 {
                pts.push((b, 0.0));
            }
        }
        StepFunction::from_points(pts)
    }
}

pub(crate) fn rat_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// 1-periodic piecewise-constant function: value `values[j]` on
/// `[breaks[j], breaks[j+1])`, with `breaks[0] = 0` and an implicit final
/// break at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
    /// `prefix[j] = integral over [0, breaks[j])`, length `pieces + 1`.
    prefix: Vec<f64>,
    /// `prefix2[j] = integral over [0, breaks[j]) of the primitive`.
    prefix2: Vec<f64>,
}

impl StepFunction {
    pub fn constant(c: f64) -> Self {
        Self::from_points(vec![(0.0, c)])
    }

    /// `n` equal cells with the given values.
    pub fn from_cells(values: &[f64]) -> Self {
        let n = values.len() as f64;
        Self::from_points(
            values
                .iter()
                .enumerate()
                .map(|(j, &v)| (j as f64 / n, v))
                .collect(),
        )
    }

    /// `(start, value)` pairs; a value holds until the next start.
    pub fn from_points(mut pts: Vec<(f64, f64)>) -> Self {
        pts.retain(|p| p.0 >= 0.0 && p.0 < 1.0);
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if pts.first().is_none_or(|p| p.0 > 0.0) {
            let last = pts.last().map_or(0.0, |p| p.1);
            pts.insert(0, (0.0, last));
        }
        let mut breaks: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (x, v) in pts {
            if let Some(&b) = breaks.last() {
                if x == b {
                    *values.last_mut().unwrap() = v;
                    continue;
                }
            }
            if values.last() == Some(&v) {
                continue;
            }
            breaks.push(x);
            values.push(v);
        }
        let mut s = Self {
            breaks,
            values,
            prefix: vec![],
            prefix2: vec![],
        };
        s.build_prefix();
        s
    }

    fn build_prefix(&mut self) {
        let k = self.values.len();
        self.prefix = vec![0.0; k + 1];
        self.prefix2 = vec![0.0; k + 1];
        for j in 0..k {
            let w = self.end(j) - self.breaks[j];
            self.prefix[j + 1] = self.prefix[j] + self.values[j] * w;
            self.prefix2[j + 1] =
                self.prefix2[j] + self.prefix[j] * w + 0.5 * self.values[j] * w * w;
        }
    }

    fn end(&self, j: usize) -> f64 {
        self.breaks.get(j + 1).copied().unwrap_or(1.0)
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn piece(&self, j: usize) -> (f64, f64, f64) {
        (self.breaks[j], self.end(j), self.values[j])
    }

    pub fn mean(&self) -> f64 {
        self.prefix[self.values.len()]
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// Total variation over one period, counting the jump at 0.
    pub fn total_variation(&self) -> f64 {
        let k = self.values.len();
        (0..k)
            .map(|j| (self.values[(j + 1) % k] - self.values[j]).abs())
            .sum()
    }

    fn locate(&self, r: f64) -> usize {
        self.breaks.partition_point(|&b| b <= r).saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.locate(wrap(x))]
    }

    fn phi0(&self, r: f64) -> f64 {
        let j = self.locate(r);
        self.prefix[j] + self.values[j] * (r - self.breaks[j])
    }

    fn psi0(&self, r: f64) -> f64 {
        let j = self.locate(r);
        let h = r - self.breaks[j];
        self.prefix2[j] + self.prefix[j] * h + 0.5 * self.values[j] * h * h
    }

    /// `Phi(x) = integral_0^x W`.
    pub fn phi(&self, x: f64) -> f64 {
        let k = x.floor();
        k * self.mean() + self.phi0(x - k)
    }

    /// `Psi(x) = integral_0^x Phi`.
    pub fn psi(&self, x: f64) -> f64 {
        let k = x.floor();
        let r = x - k;
        let mu = self.mean();
        mu * k * (k - 1.0) / 2.0 + k * self.prefix2[self.values.len()] + k * mu * r + self.psi0(r)
    }

    /// `(integral_0^d W(x0 + s) ds, integral_0^d W(x0 + s) s ds)` for `d >= 0`.
    pub fn moments(&self, x0: f64, d: f64) -> (f64, f64) {
        if d <= 0.0 {
            return (0.0, 0.0);
        }
        let base = x0.floor();
        let x0 = x0 - base;
        if d * self.values.len() as f64 > 48.0 {
            let p1 = self.phi(x0 + d);
            let i0 = p1 - self.phi0(x0);
            let i1 = d * p1 - (self.psi(x0 + d) - self.psi0(x0));
            return (i0, i1);
        }
        // Walk the pieces directly: stable for short spans.
        let mut i0 = 0.0;
        let mut i1 = 0.0;
        let mut j = self.locate(x0);
        let mut shift = 0.0;
        let mut s = 0.0;
        while s < d {
            let end = (self.end(j) + shift - x0).min(d);
            let v = self.values[j];
            if v != 0.0 && end > s {
                i0 += v * (end - s);
                i1 += v * 0.5 * (end - s) * (end + s);
            }
            s = end;
            j += 1;
            if j == self.values.len() {
                j = 0;
                shift += 1.0;
            }
        }
        (i0, i1)
    }
}

/// Checks a rational is in `[0, 1]`.
pub(crate) fn unit_rational(r: &Rational) -> bool {
    !r.is_negative() && r <= &Rational::one()
}
