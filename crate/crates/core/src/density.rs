//! Density functionals on `[N]^m` and on tori.
//!
//! `d_{m,N}(E) = |E| / N^m` and
//! `D_{m,N}(V, E) = |V^m ∩ E^d| / |V ∩ [N]^d|^m`, where a tuple
//! `(a_1, ..., a_d)` of points of `[N]^m` lies in `V^m` when each of its `m`
//! coordinate slices lies in `V`. Weighted versions replace `1_E` by a
//! function `c: [N]^m -> [0, 1]`. Sums are exact; quasinorms with
//! non-integer exponents are real.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::circle::{unit_rational, StepFunction};
use crate::error::{Error, Result};
use crate::exactlin::{
    lattice_point_count, lattice_points, moment_subspace, MomentFamily, PointSet, Rational,
    Subspace,
};
use crate::report::{parse_rational, rat_string, Exact};
use crate::strip::{self, Term};

const DENSE_CAP: u64 = 1 << 26;

fn total_points(m: usize, n: u64) -> Result<u64> {
    n.checked_pow(m as u32)
        .filter(|&t| t <= DENSE_CAP)
        .ok_or_else(|| Error::ResourceCap {
            what: "grid size N^m".into(),
            required: format!("{n}^{m}"),
            cap: DENSE_CAP.to_string(),
        })
}

fn check_index(idx: &[u64], m: usize, n: u64) -> Result<()> {
    if idx.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: idx.len(),
        });
    }
    if let Some(x) = idx.iter().find(|&&x| x >= n) {
        return Err(Error::OutOfRange(format!("index {x} not in [0, {n})")));
    }
    Ok(())
}

fn flat(idx: &[u64], n: u64) -> u64 {
    idx.iter().fold(0, |acc, &x| acc * n + x)
}

/// A subset of `[N]^m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSet {
    m: usize,
    n: u64,
    members: BTreeSet<Vec<u64>>,
}

impl GridSet {
    pub fn new<I: IntoIterator<Item = Vec<u64>>>(m: usize, n: u64, members: I) -> Result<Self> {
        let mut set = BTreeSet::new();
        for idx in members {
            check_index(&idx, m, n)?;
            set.insert(idx);
        }
        Ok(Self { m, n, members: set })
    }

    /// One-dimensional set from plain integers.
    pub fn from_values(n: u64, values: &[u64]) -> Result<Self> {
        Self::new(1, n, values.iter().map(|&x| vec![x]))
    }

    pub fn full(m: usize, n: u64) -> Result<Self> {
        let total = total_points(m, n)?;
        let members = (0..total).map(|f| unflat(f, m, n));
        Self::new(m, n, members)
    }

    /// Lines of comma- or space-separated coordinates; `#` starts a comment.
    pub fn parse(m: usize, n: u64, text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let idx = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<u64>()
                        .map_err(|_| Error::Parse(format!("bad coordinate {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(idx);
        }
        Self::new(m, n, out)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, idx: &[u64]) -> bool {
        self.members.contains(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<u64>> {
        self.members.iter()
    }
}

fn unflat(mut f: u64, m: usize, n: u64) -> Vec<u64> {
    let mut idx = vec![0; m];
    for slot in idx.iter_mut().rev() {
        *slot = f % n;
        f /= n;
    }
    idx
}

pub fn set_density(e: &GridSet) -> Result<Rational> {
    let total = BigInt::from(e.n).pow(e.m as u32);
    if total.is_zero() {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    Ok(Rational::new(BigInt::from(e.len()), total))
}

/// Function `[N]^m -> [0, 1]` with rational values, stored sparsely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridFunction {
    m: usize,
    n: u64,
    values: BTreeMap<Vec<u64>, Rational>,
}

#[derive(Serialize, Deserialize)]
struct GridFunctionJson {
    m: usize,
    #[serde(rename = "N")]
    n: u64,
    entries: Vec<(Vec<u64>, String)>,
}

impl GridFunction {
    pub fn zero(m: usize, n: u64) -> Self {
        Self {
            m,
            n,
            values: BTreeMap::new(),
        }
    }

    pub fn constant(m: usize, n: u64, c: Rational) -> Result<Self> {
        let total = total_points(m, n)?;
        let mut f = Self::zero(m, n);
        for fl in 0..total {
            f.set(unflat(fl, m, n), c.clone())?;
        }
        Ok(f)
    }

    pub fn indicator(e: &GridSet) -> Self {
        Self {
            m: e.m,
            n: e.n,
            values: e
                .members
                .iter()
                .map(|idx| (idx.clone(), Rational::one()))
                .collect(),
        }
    }

    /// One-dimensional function from its `N` values.
    pub fn from_values(values: Vec<Rational>) -> Result<Self> {
        let mut f = Self::zero(1, values.len() as u64);
        for (i, v) in values.into_iter().enumerate() {
            f.set(vec![i as u64], v)?;
        }
        Ok(f)
    }

    pub fn set(&mut self, idx: Vec<u64>, v: Rational) -> Result<()> {
        check_index(&idx, self.m, self.n)?;
        if !unit_rational(&v) {
            return Err(Error::OutOfRange(format!(
                "value {} not in [0, 1]",
                rat_string(&v)
            )));
        }
        if v.is_zero() {
            self.values.remove(&idx);
        } else {
            self.values.insert(idx, v);
        }
        Ok(())
    }

    pub fn get(&self, idx: &[u64]) -> Rational {
        self.values.get(idx).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<u64>, &Rational)> {
        self.values.iter()
    }

    fn size(&self) -> BigInt {
        BigInt::from(self.n).pow(self.m as u32)
    }

    pub fn is_indicator(&self) -> bool {
        self.values.values().all(|v| v.is_one())
    }

    /// Support as a set.
    pub fn support(&self) -> GridSet {
        GridSet {
            m: self.m,
            n: self.n,
            members: self.values.keys().cloned().collect(),
        }
    }

    /// `{a : c(a) >= t}`.
    pub fn level_set(&self, t: &Rational) -> GridSet {
        GridSet {
            m: self.m,
            n: self.n,
            members: self
                .values
                .iter()
                .filter(|(_, v)| *v >= t)
                .map(|(k, _)| k.clone())
                .collect(),
        }
    }

    pub fn sup(&self) -> Rational {
        self.values.values().max().cloned().unwrap_or_else(Rational::zero)
    }

    /// Mean of `|f|^r`, exact.
    pub fn mean_pow(&self, r: u32) -> Rational {
        let s: Rational = self.values.values().map(|v| num_traits::pow(v.clone(), r as usize)).sum();
        s / Rational::from_integer(self.size())
    }

    /// Distinct positive levels `t`, descending, with
    /// `fraction = #{f >= t} / N^m`.
    pub fn levels(&self) -> Vec<(Rational, Rational)> {
        let mut counts: BTreeMap<&Rational, u64> = BTreeMap::new();
        for v in self.values.values() {
            *counts.entry(v).or_default() += 1;
        }
        let size = Rational::from_integer(self.size());
        let mut acc = 0u64;
        let mut out = Vec::new();
        for (t, c) in counts.into_iter().rev() {
            acc += c;
            out.push((t.clone(), Rational::from_integer(acc.into()) / &size));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let j = GridFunctionJson {
            m: self.m,
            n: self.n,
            entries: self
                .values
                .iter()
                .map(|(k, v)| (k.clone(), rat_string(v)))
                .collect(),
        };
        serde_json::to_string(&j).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: GridFunctionJson =
            serde_json::from_str(s).map_err(|e| Error::Parse(format!("grid function: {e}")))?;
        let mut f = Self::zero(j.m, j.n);
        for (idx, v) in j.entries {
            f.set(idx, parse_rational(&v)?)?;
        }
        Ok(f)
    }
}

/// Exact `D_{m,N}(V, E)` with its two counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityReport {
    pub d_val: Rational,
    pub big_d_val: Rational,
    pub solution_count: BigInt,
    pub denominator_count: BigInt,
}

impl DensityReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "d": Exact::from(&self.d_val),
            "D": Exact::from(&self.big_d_val),
            "solution_count": self.solution_count.to_string(),
            "denominator_count": self.denominator_count.to_string(),
        })
    }
}

/// `sum over (p_1..p_m) in P^m of prod_i w(a_i)` with `a_i = (p_1[i], ..,
/// p_m[i])`, where `w` is given by integer numerators on flat indices.
fn tuple_sum(points: &PointSet, m: usize, n: u64, num: &[BigUint]) -> BigUint {
    let d = points.dim();
    if points.is_empty() {
        return BigUint::zero();
    }
    let small: Option<Vec<u64>> = num.iter().map(|x| x.to_u64()).collect();
    let max_bits = num.iter().map(|x| x.bits()).max().unwrap_or(0);
    // Prefix tables for pruning: prefix_ok[k][f] = some completion of the
    // length-k prefix f has nonzero weight.
    let mut prefix_ok: Vec<Vec<bool>> = vec![vec![]; m + 1];
    prefix_ok[m] = num.iter().map(|x| !x.is_zero()).collect();
    for k in (0..m).rev() {
        let size = n.pow(k as u32) as usize;
        let mut t = vec![false; size];
        for (f, ok) in prefix_ok[k + 1].iter().enumerate() {
            if *ok {
                t[f / n as usize] = true;
            }
        }
        prefix_ok[k] = t;
    }
    let pts: Vec<&[i64]> = points.iter().collect();
    let fast = small.is_some() && (max_bits as usize) * d < 120;
    let small = small.unwrap_or_default();

    let leaf_fast = |flats: &[u64]| -> u128 {
        flats
            .iter()
            .map(|&f| small[f as usize] as u128)
            .product()
    };
    let leaf_big = |flats: &[u64]| -> BigUint {
        flats
            .iter()
            .map(|&f| num[f as usize].clone())
            .product()
    };

    struct Walk<'a> {
        pts: &'a [&'a [i64]],
        m: usize,
        n: u64,
        prefix_ok: &'a [Vec<bool>],
    }

    impl Walk<'_> {
        fn go<F: FnMut(&[u64])>(&self, level: usize, flats: &[u64], leaf: &mut F) {
            if level == self.m {
                leaf(flats);
                return;
            }
            let d = flats.len();
            'pts: for p in self.pts {
                let mut next = Vec::with_capacity(d);
                for (&fl, &pi) in flats.iter().zip(p.iter()) {
                    let f = fl * self.n + pi as u64;
                    if !self.prefix_ok[level + 1][f as usize] {
                        continue 'pts;
                    }
                    next.push(f);
                }
                self.go(level + 1, &next, leaf);
            }
        }
    }

    let walk = Walk {
        pts: &pts,
        m,
        n,
        prefix_ok: &prefix_ok,
    };
    pts.par_iter()
        .map(|p| {
            let flats: Vec<u64> = p.iter().map(|&x| x as u64).collect();
            if flats.iter().any(|&f| !prefix_ok[1][f as usize]) {
                return BigUint::zero();
            }
            let mut big = BigUint::zero();
            if fast {
                let mut acc: u128 = 0;
                walk.go(1, &flats, &mut |fl: &[u64]| {
                    let v = leaf_fast(fl);
                    match acc.checked_add(v) {
                        Some(s) => acc = s,
                        None => {
                            big += acc;
                            acc = v;
                        }
                    }
                });
                big += acc;
            } else {
                walk.go(1, &flats, &mut |fl: &[u64]| big += leaf_big(fl));
            }
            big
        })
        .reduce(BigUint::zero, |a, b| a + b)
}

fn numerators(c: &GridFunction) -> Result<(Vec<BigUint>, BigInt)> {
    let total = total_points(c.m, c.n)?;
    let den = c
        .values
        .values()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let mut num = vec![BigUint::zero(); total as usize];
    for (idx, v) in &c.values {
        let x = (v * Rational::from_integer(den.clone())).to_integer();
        num[flat(idx, c.n) as usize] = x.to_biguint().expect("values are non-negative");
    }
    Ok((num, den))
}

fn check_family_space(v: &Subspace) -> Result<()> {
    if v.dim() == 0 {
        return Err(Error::InvalidParameter("subspace of dimension 0".into()));
    }
    Ok(())
}

/// Exact normalized sum of `prod c(a_i)` over tuples in `V^m`.
pub fn weighted_solution_sum(c: &GridFunction, v: &Subspace) -> Result<Rational> {
    check_family_space(v)?;
    let pts = lattice_points(v, c.n)?;
    let (num, den) = numerators(c)?;
    let s = tuple_sum(&pts, c.m, c.n, &num);
    let denom = den.pow(v.dim() as u32) * BigInt::from(pts.len()).pow(c.m as u32);
    Ok(Rational::new(BigInt::from(s), denom))
}

pub fn solution_density(v: &Subspace, e: &GridSet) -> Result<DensityReport> {
    check_family_space(v)?;
    let pts = lattice_points(v, e.n)?;
    let total = total_points(e.m, e.n)?;
    let mut num = vec![BigUint::zero(); total as usize];
    for idx in &e.members {
        num[flat(idx, e.n) as usize] = BigUint::one();
    }
    let count = BigInt::from(tuple_sum(&pts, e.m, e.n, &num));
    let denominator = BigInt::from(lattice_point_count(v, e.n)?).pow(e.m as u32);
    Ok(DensityReport {
        d_val: set_density(e)?,
        big_d_val: Rational::new(count.clone(), denominator.clone()),
        solution_count: count,
        denominator_count: denominator,
    })
}

fn positive(p: &Rational) -> Result<()> {
    if !p.is_positive() {
        return Err(Error::InvalidParameter(format!(
            "exponent must be positive, got {}",
            rat_string(p)
        )));
    }
    Ok(())
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `((1/N^m) sum |f|^p)^(1/p)`.
pub fn lp_quasinorm(f: &GridFunction, p: &Rational) -> Result<f64> {
    positive(p)?;
    let pf = to_f64(p);
    let size = to_f64(&Rational::from_integer(f.size()));
    let s: f64 = f.values.values().map(|v| to_f64(v).powf(pf)).sum();
    Ok((s / size).powf(1.0 / pf))
}

/// The weak quasinorm `sup_s s * |{|f| > s}|^(1/p)`, attained in the limit
/// `s -> t^-` at one of the finitely many levels `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakNorm {
    pub level: Rational,
    pub fraction: Rational,
    pub value: f64,
}

fn pow_rat(r: &Rational, e: &BigInt) -> Rational {
    num_traits::pow(r.clone(), e.to_usize().expect("small exponent"))
}

pub fn weak_lp_quasinorm(f: &GridFunction, p: &Rational) -> Result<WeakNorm> {
    positive(p)?;
    let (a, q) = (p.numer(), p.denom());
    let mut best: Option<(Rational, Rational, Rational)> = None;
    for (t, frac) in f.levels() {
        // Compare t * F^(q/a) through t^a * F^q.
        let key = pow_rat(&t, a) * pow_rat(&frac, q);
        if best.as_ref().is_none_or(|b| key > b.2) {
            best = Some((t, frac, key));
        }
    }
    Ok(match best {
        None => WeakNorm {
            level: Rational::zero(),
            fraction: Rational::zero(),
            value: 0.0,
        },
        Some((t, frac, _)) => WeakNorm {
            value: to_f64(&t) * to_f64(&frac).powf(1.0 / to_f64(p)),
            level: t,
            fraction: frac,
        },
    })
}

/// `||f||_r^r <= r/(r-p) ||f||_{p,w}^p ||f||_inf^(r-p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpolationAudit {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Whether `holds` was decided in exact arithmetic.
    pub exact: bool,
}

pub fn interpolation_audit(f: &GridFunction, p: &Rational, r: &Rational) -> Result<InterpolationAudit> {
    positive(p)?;
    if r <= p {
        return Err(Error::InvalidParameter("need 0 < p < r".into()));
    }
    let weak = weak_lp_quasinorm(f, p)?;
    let sup = f.sup();
    let k = r / (r - p);
    let (pf, rf) = (to_f64(p), to_f64(r));
    let weak_p = to_f64(&weak.level).powf(pf) * to_f64(&weak.fraction);
    let rhs = to_f64(&k) * weak_p * to_f64(&sup).powf(rf - pf);
    if r.is_integer() {
        // Raise both sides to the power q = denom(p): everything is rational.
        let ri = r.to_integer().to_u32().expect("small exponent");
        let lhs_exact = f.mean_pow(ri);
        let q = p.denom();
        let a = p.numer();
        let rq_minus_a = r.to_integer() * q - a;
        let rhs_q = pow_rat(&k, q)
            * pow_rat(&weak.level, a)
            * pow_rat(&weak.fraction, q)
            * pow_rat(&sup, &rq_minus_a);
        let holds = pow_rat(&lhs_exact, q) <= rhs_q;
        return Ok(InterpolationAudit {
            lhs: to_f64(&lhs_exact),
            rhs,
            holds,
            exact: true,
        });
    }
    let size = to_f64(&Rational::from_integer(f.size()));
    let lhs = f.values.values().map(|v| to_f64(v).powf(rf)).sum::<f64>() / size;
    Ok(InterpolationAudit {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-12),
        exact: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Item {
    pub lhs: Exact,
    pub rhs: Exact,
    pub holds: bool,
    pub slack: Exact,
}

fn item(lhs: &Rational, rhs: &Rational) -> Item {
    Item {
        lhs: lhs.into(),
        rhs: rhs.into(),
        holds: lhs >= rhs,
        slack: (lhs - rhs).into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub d: usize,
    pub ell: u32,
    pub constant: Exact,
    /// `D >= C d(E)^ell`; only for indicator inputs.
    pub item1: Option<Item>,
    /// weighted sum `>= C ||c||_{d/ell,w}^d`.
    pub item2: Item,
    /// weighted sum `>= C (1 - d/ell)^ell ||c||_1^ell`.
    pub item3: Item,
    /// `min_t D(E_t) / d(E_t)^ell` over the level sets `E_t = {c >= t}`.
    pub level_set_constant: Option<Exact>,
    /// weighted sum `>= level_set_constant * ||c||_{d/ell,w}^d`, the
    /// level-set argument with the best constant it supports.
    pub level_set_bound_holds: bool,
}

/// Evaluates the three statements on one instance; see [`EquivalenceReport`].
pub fn equivalence_audit(
    c: &GridFunction,
    v: &Subspace,
    constant: &Rational,
    ell: u32,
) -> Result<EquivalenceReport> {
    let d = v.dim();
    if ell as usize <= d {
        return Err(Error::InvalidParameter(format!(
            "ell = {ell} must exceed d = {d}"
        )));
    }
    let w = weighted_solution_sum(c, v)?;
    let weak_d = weak_power(c, d as u32, ell);
    let item2 = item(&w, &(constant * &weak_d));
    let ratio = Rational::one() - Rational::new(BigInt::from(d), BigInt::from(ell));
    let l1 = c.mean_pow(1);
    let item3 = item(
        &w,
        &(constant * num_traits::pow(ratio, ell as usize) * num_traits::pow(l1, ell as usize)),
    );
    let item1 = if c.is_indicator() {
        let e = c.support();
        let dens = set_density(&e)?;
        Some(item(&w, &(constant * num_traits::pow(dens, ell as usize))))
    } else {
        None
    };
    let mut level_const: Option<Rational> = None;
    for (t, frac) in c.levels() {
        let e = c.level_set(&t);
        let big_d = solution_density(v, &e)?.big_d_val;
        let r = big_d / num_traits::pow(frac, ell as usize);
        if level_const.as_ref().is_none_or(|b| &r < b) {
            level_const = Some(r);
        }
    }
    let level_set_bound_holds = match &level_const {
        Some(k) => w >= k * &weak_d,
        None => true,
    };
    Ok(EquivalenceReport {
        d,
        ell,
        constant: constant.into(),
        item1,
        item2,
        item3,
        level_set_constant: level_const.as_ref().map(Exact::from),
        level_set_bound_holds,
    })
}

/// `||c||_{d/ell,w}^d = max_t t^d * fraction(t)^ell`, exact.
pub fn weak_power(c: &GridFunction, d: u32, ell: u32) -> Rational {
    c.levels()
        .into_iter()
        .map(|(t, frac)| num_traits::pow(t, d as usize) * num_traits::pow(frac, ell as usize))
        .max()
        .unwrap_or_else(Rational::zero)
}

/// Sum-pair histogram check for `V = {s(x - y) + t(z - w) = 0}` on
/// variables `(x, y, z, w)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CauchySchwarzReport {
    pub set_size: u64,
    pub histogram_sum: String,
    pub histogram_square_sum: String,
    pub solution_count: String,
    pub lattice_count: String,
    pub identities_hold: bool,
    #[serde(rename = "D")]
    pub big_d: Exact,
    pub beta: Exact,
    pub lower_bound: Exact,
    pub holds: bool,
}

pub fn additive_quadruple_space(s: u64, t: u64) -> Result<Subspace> {
    if s == 0 || t == 0 {
        return Err(Error::InvalidParameter("s and t must be positive".into()));
    }
    let (s, t) = (BigInt::from(s), BigInt::from(t));
    Subspace::from_forms(4, &[vec![s.clone(), -s, t.clone(), -t]])
}

pub fn cauchy_schwarz_bound(e: &GridSet, s: u64, t: u64) -> Result<CauchySchwarzReport> {
    let v = additive_quadruple_space(s, t)?;
    if e.is_empty() {
        return Err(Error::InvalidParameter("E must be nonempty".into()));
    }
    let mut hist: HashMap<Vec<u64>, u64> = HashMap::new();
    for x in &e.members {
        for z in &e.members {
            let key: Vec<u64> = x.iter().zip(z).map(|(a, b)| s * a + t * b).collect();
            *hist.entry(key).or_default() += 1;
        }
    }
    let sum: BigInt = hist.values().map(|&p| BigInt::from(p)).sum();
    let sum_sq: BigInt = hist.values().map(|&p| BigInt::from(p) * p).sum();
    let dens = solution_density(&v, e)?;
    let size = BigInt::from(e.len());
    let identities_hold = sum == &size * &size && sum_sq == dens.solution_count;
    let lattice = BigInt::from(lattice_point_count(&v, e.n)?);
    let beta = Rational::new(BigInt::from(e.n).pow(3), &lattice * BigInt::from(s + t));
    let lower = num_traits::pow(beta.clone(), e.m) * num_traits::pow(dens.d_val.clone(), 4);
    Ok(CauchySchwarzReport {
        set_size: e.len() as u64,
        histogram_sum: sum.to_string(),
        histogram_square_sum: sum_sq.to_string(),
        solution_count: dens.solution_count.to_string(),
        lattice_count: lattice.to_string(),
        identities_hold,
        holds: dens.big_d_val >= lower,
        big_d: dens.big_d_val.into(),
        beta: beta.into(),
        lower_bound: lower.into(),
    })
}

/// A `[0, 1]`-valued function on `T^m`.
#[derive(Debug, Clone, PartialEq)]
pub enum TorusFunction {
    /// `f(y) = prod_k f_k(y_k)`.
    Product(Vec<StepFunction>),
    /// Constant on the `n^m` cells of the grid, values in row-major order.
    Grid { m: usize, n: usize, values: Vec<f64> },
}

impl TorusFunction {
    pub fn m(&self) -> usize {
        match self {
            Self::Product(fs) => fs.len(),
            Self::Grid { m, .. } => *m,
        }
    }

    /// Cell-constant extension of a grid function.
    pub fn from_grid(c: &GridFunction) -> Result<Self> {
        let total = total_points(c.m, c.n)? as usize;
        let mut values = vec![0.0; total];
        for (idx, v) in &c.values {
            values[flat(idx, c.n) as usize] = to_f64(v);
        }
        if c.m == 1 {
            return Ok(Self::Product(vec![StepFunction::from_cells(&values)]));
        }
        Ok(Self::Grid {
            m: c.m,
            n: c.n as usize,
            values,
        })
    }
}

/// Cell averages `c(a) = N^m int_{cell a} f`; for a cell-constant `f` on
/// the same grid this returns its values.
pub fn discretize(f: &StepFunction, n: u64) -> Result<GridFunction> {
    let mut c = GridFunction::zero(1, n);
    for a in 0..n {
        let lo = a as f64 / n as f64;
        let avg = f.moments(lo, 1.0 / n as f64).0 * n as f64;
        let r = Rational::from_float(avg.clamp(0.0, 1.0))
            .ok_or_else(|| Error::Unrepresentable("non-finite cell average".into()))?;
        c.set(vec![a], r)?;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorusIntegral {
    pub value: f64,
    pub error_bound: f64,
    pub method: String,
    pub terms: u64,
}

type C64 = (f64, f64);

fn cmul(a: C64, b: C64) -> C64 {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// `int_0^1 f(x) e^{-2 pi i j x} dx`.
fn step_coefficient(f: &StepFunction, j: i64) -> C64 {
    if j == 0 {
        return (f.mean(), 0.0);
    }
    let mut acc = (0.0, 0.0);
    let jf = j as f64;
    for k in 0..f.pieces() {
        let (a, b, v) = f.piece(k);
        if v == 0.0 {
            continue;
        }
        let (pa, pb) = (2.0 * PI * (jf * a).rem_euclid(1.0), 2.0 * PI * (jf * b).rem_euclid(1.0));
        // (e(-jb) - e(-ja)) / (-2 pi i j) = i (e(-jb) - e(-ja)) / (2 pi j)
        let dre = pb.cos() - pa.cos();
        let dim = -pb.sin() + pa.sin();
        let s = v / (2.0 * PI * jf);
        acc.0 += -dim * s;
        acc.1 += dre * s;
    }
    acc
}

/// `int_{cell l of n} e^{-2 pi i j x} dx`.
fn cell_coefficient(j: i64, l: usize, n: usize) -> C64 {
    if j == 0 {
        return (1.0 / n as f64, 0.0);
    }
    let jf = j as f64;
    let pa = 2.0 * PI * ((jf * l as f64) / n as f64).rem_euclid(1.0);
    let pb = 2.0 * PI * ((jf * (l + 1) as f64) / n as f64).rem_euclid(1.0);
    let dre = pb.cos() - pa.cos();
    let dim = -pb.sin() + pa.sin();
    let s = 1.0 / (2.0 * PI * jf);
    (-dim * s, dre * s)
}

const FOURIER_WORK_CAP: f64 = 5e8;

/// `int_Y prod_i f(y_i)` over `Y = (closure(V) / Z^d)^m`.
///
/// When `V` is everything the integral is `(int f)^d`. When `V` is cut out
/// by one primitive form `w`, the annihilator of `Y` is `Z w` and
/// `int_Y prod f(y_i) = sum_k prod_i f^(k w_i)`; the tail beyond `|k| = K`
/// is bounded through `|f^(j)| <= TV(f) / (2 pi |j|)`. Other cases fall
/// back to [`torus_solution_integral_quadrature`].
pub fn torus_solution_integral(f: &TorusFunction, fam: &MomentFamily, tol: f64) -> Result<TorusIntegral> {
    let v = moment_subspace(fam)?;
    let d = fam.dim();
    if v.codim() == 0 {
        return Ok(full_space_integral(f, d));
    }
    if v.codim() == 1 {
        let w: Vec<i64> = v.forms()[0]
            .iter()
            .map(|x| x.to_i64().ok_or_else(|| Error::Overflow("form entry".into())))
            .collect::<Result<_>>()?;
        return match f {
            TorusFunction::Product(fs) => {
                let parts: Vec<TorusIntegral> = fs
                    .iter()
                    .map(|g| fourier_1d(g, &w, tol / fs.len() as f64))
                    .collect();
                Ok(combine_product(&parts, "fourier"))
            }
            TorusFunction::Grid { m, n, values } => fourier_grid(*m, *n, values, &w, tol),
        };
    }
    match f {
        TorusFunction::Product(fs) if fam.degree() == 2 => {
            let parts = fs
                .iter()
                .map(|g| {
                    let cells = quadrature_cells(g, fam.coefficients(), tol / fs.len() as f64);
                    torus_solution_integral_quadrature(g, fam.coefficients(), cells)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(combine_product(&parts, "quadrature"))
        }
        _ => Err(Error::Unrepresentable(
            "codimension >= 2 needs a product function and a quadratic family".into(),
        )),
    }
}

fn full_space_integral(f: &TorusFunction, d: usize) -> TorusIntegral {
    let mean = match f {
        TorusFunction::Product(fs) => fs.iter().map(|g| g.mean()).product::<f64>(),
        TorusFunction::Grid { values, .. } => values.iter().sum::<f64>() / values.len() as f64,
    };
    TorusIntegral {
        value: mean.powi(d as i32),
        error_bound: 1e-15 * d as f64,
        method: "full".into(),
        terms: 1,
    }
}

fn combine_product(parts: &[TorusIntegral], method: &str) -> TorusIntegral {
    let value: f64 = parts.iter().map(|p| p.value).product();
    let mut err = 0.0;
    for (i, p) in parts.iter().enumerate() {
        let others: f64 = parts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, q)| q.value.abs() + q.error_bound)
            .product();
        err += p.error_bound * others;
    }
    TorusIntegral {
        value,
        error_bound: err,
        method: method.into(),
        terms: parts.iter().map(|p| p.terms).sum(),
    }
}

fn fourier_1d(f: &StepFunction, w: &[i64], tol: f64) -> TorusIntegral {
    let d = w.len();
    let tv = f.total_variation();
    let mean = f.mean();
    if tv == 0.0 {
        return TorusIntegral {
            value: mean.powi(d as i32),
            error_bound: 1e-15,
            method: "fourier".into(),
            terms: 1,
        };
    }
    // tail(K) <= 2 P / ((d-1) K^(d-1)), P = prod TV / (2 pi |w_i|)
    let p: f64 = w.iter().map(|&wi| tv / (2.0 * PI * wi.abs() as f64)).product();
    let target = (tol / 2.0).max(1e-14);
    let k = ((2.0 * p / ((d as f64 - 1.0) * target)).powf(1.0 / (d as f64 - 1.0)))
        .ceil()
        .max(1.0) as i64;
    let mut sum = 0.0;
    for kk in 1..=k {
        let mut prod = (1.0, 0.0);
        for &wi in w {
            prod = cmul(prod, step_coefficient(f, kk * wi));
        }
        sum += prod.0;
    }
    let tail = 2.0 * p / ((d as f64 - 1.0) * (k as f64).powi(d as i32 - 1));
    let rounding = (k as f64) * (d * f.pieces()) as f64 * 1e-15;
    TorusIntegral {
        value: mean.powi(d as i32) + 2.0 * sum,
        error_bound: tail + rounding,
        method: "fourier".into(),
        terms: 2 * k as u64 + 1,
    }
}

fn fourier_grid(m: usize, n: usize, values: &[f64], w: &[i64], tol: f64) -> Result<TorusIntegral> {
    let d = w.len();
    let sup = values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let nf = n as f64;
    let pw: f64 = w.iter().map(|&wi| nf / (PI * wi.abs() as f64)).product();
    let beta = |x: i64| if x == 0 { 1.0 } else { (nf / (PI * x.abs() as f64)).min(1.0) };
    let min_w = w.iter().map(|x| x.abs()).min().unwrap_or(1) as f64;
    let mut k = ((nf / (PI * min_w)).ceil() as i64).max(1);
    let tail_1d = |k: i64| 2.0 * pw / ((d as f64 - 1.0) * (k as f64).powi(d as i32 - 1));
    let partial = |k: i64| -> f64 {
        (-k..=k)
            .map(|kk| w.iter().map(|&wi| beta(kk * wi)).product::<f64>())
            .sum()
    };
    let tail_total = |k: i64| {
        let s = partial(k);
        let t = tail_1d(k);
        sup.powi(d as i32) * ((s + t).powi(m as i32) - s.powi(m as i32))
    };
    while tail_total(k) > tol / 2.0 && k < 1 << 20 {
        k *= 2;
    }
    let terms = (2 * k + 1) as f64;
    let work = terms.powi(m as i32) * d as f64 * values.len() as f64;
    if work > FOURIER_WORK_CAP {
        return Err(Error::ResourceCap {
            what: "Fourier lattice sum".into(),
            required: format!("{work:.3e} operations"),
            cap: format!("{FOURIER_WORK_CAP:.1e}"),
        });
    }
    let coefficient = |j: &[i64]| -> C64 {
        let mut acc = (0.0, 0.0);
        for (cell, &v) in values.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let mut rest = cell;
            let mut prod = (v, 0.0);
            for c in (0..m).rev() {
                let l = rest % n;
                rest /= n;
                prod = cmul(prod, cell_coefficient(j[c], l, n));
            }
            acc.0 += prod.0;
            acc.1 += prod.1;
        }
        acc
    };
    let mut total = 0.0;
    let mut kv = vec![-k; m];
    loop {
        let mut prod = (1.0, 0.0);
        for &wi in w {
            let j: Vec<i64> = kv.iter().map(|&x| x * wi).collect();
            prod = cmul(prod, coefficient(&j));
        }
        total += prod.0;
        let mut pos = 0;
        loop {
            if pos == m {
                let err = tail_total(k) + work * 1e-16;
                return Ok(TorusIntegral {
                    value: total,
                    error_bound: err,
                    method: "fourier-grid".into(),
                    terms: terms.powi(m as i32) as u64,
                });
            }
            kv[pos] += 1;
            if kv[pos] <= k {
                break;
            }
            kv[pos] = -k;
            pos += 1;
        }
    }
}

fn quadrature_lipschitz(f: &StepFunction, d: usize) -> f64 {
    d as f64 * f.total_variation() * f.sup().powi(d as i32 - 1)
}

/// Number of midpoint cells needed for error `tol`, capped at `2^16`.
pub fn quadrature_cells(f: &StepFunction, a: &[i64], tol: f64) -> usize {
    let k = quadrature_lipschitz(f, a.len());
    ((k / (4.0 * tol)).ceil() as usize).clamp(1, 1 << 16)
}

/// `int_s int_{u,v} prod_i f(s + a_i u + a_i^2 v)` by the midpoint rule in
/// `s` (Lipschitz constant `d TV(f) sup(f)^(d-1)`) with the inner integral
/// evaluated exactly.
pub fn torus_solution_integral_quadrature(f: &StepFunction, a: &[i64], cells: usize) -> Result<TorusIntegral> {
    if cells == 0 {
        return Err(Error::InvalidParameter("need at least one cell".into()));
    }
    let forms: Vec<[f64; 2]> = a.iter().map(|&x| [x as f64, (x * x) as f64]).collect();
    let h = 1.0 / cells as f64;
    let results: Vec<(f64, f64)> = (0..cells)
        .into_par_iter()
        .map(|j| {
            let s = (j as f64 + 0.5) * h;
            let terms: Vec<Term> = forms
                .iter()
                .map(|&form| Term { form, offset: s, f })
                .collect();
            let r = strip::integrate(&terms);
            (r.value, r.error_bound)
        })
        .collect();
    let value = results.iter().map(|r| r.0).sum::<f64>() * h;
    let rounding = results.iter().map(|r| r.1).sum::<f64>() * h;
    Ok(TorusIntegral {
        value,
        error_bound: quadrature_lipschitz(f, a.len()) * h / 4.0 + rounding,
        method: "quadrature".into(),
        terms: cells as u64,
    })
}
