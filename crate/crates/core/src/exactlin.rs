//! Exact integer/rational linear algebra for moment subspaces.
//!
//! A moment family `a_1, ..., a_d` with degree `t` spans the subspace
//! `V = span{(a_1^j, ..., a_d^j) : 0 <= j <= t}` of `Q^d` (with `0^0 = 1`).
//! Everything here is exact: big rationals for elimination, `i128` only in
//! the lattice-point inner loop where all coefficients are known to fit.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Coefficients `a_1..a_d` together with the top moment degree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentFamily {
    a: Vec<i64>,
    degree: usize,
}

impl MomentFamily {
    pub fn new(a: Vec<i64>, degree: usize) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidFamily("empty coefficient list".into()));
        }
        for (i, x) in a.iter().enumerate() {
            if a[..i].contains(x) {
                return Err(Error::InvalidFamily(format!("repeated coefficient {x}")));
            }
        }
        Ok(Self { a, degree })
    }

    /// The quadratic family used throughout (`t = 2`).
    pub fn quadratic(a: Vec<i64>) -> Result<Self> {
        Self::new(a, 2)
    }

    pub fn coefficients(&self) -> &[i64] {
        &self.a
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Row `j` of the moment matrix, `(a_i^j)_i`, with `0^0 = 1`.
    pub fn moment_row(&self, j: usize) -> Vec<BigInt> {
        self.a.iter().map(|&x| int_pow(x, j)).collect()
    }
}

fn int_pow(base: i64, exp: usize) -> BigInt {
    // num's pow already has 0^0 = 1; kept explicit since the convention matters.
    if exp == 0 {
        return BigInt::one();
    }
    num_traits::pow(BigInt::from(base), exp)
}

/// A rational subspace of `Q^d`, described both by a basis and by a complete
/// system of primitive integer forms whose common kernel is the subspace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subspace {
    dim: usize,
    basis: Vec<Vec<Rational>>,
    forms: Vec<Vec<BigInt>>,
}

impl Subspace {
    /// Builds the subspace spanned by `rows`.
    pub fn from_spanning_rows(dim: usize, rows: &[Vec<Rational>]) -> Result<Self> {
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
        }
        let (rref, pivots) = row_reduce(rows.to_vec(), dim, ColumnOrder::Forward);
        // Keep the original rows that are independent of their predecessors.
        let mut basis: Vec<Vec<Rational>> = Vec::new();
        for r in rows {
            let mut trial = basis.clone();
            trial.push(r.clone());
            if rank(&trial, dim) == trial.len() {
                basis.push(r.clone());
            }
        }
        debug_assert_eq!(basis.len(), pivots.len());
        let forms = kernel_forms(&rref, &pivots, dim);
        Ok(Self { dim, basis, forms })
    }

    /// The whole space `Q^d`.
    pub fn full(dim: usize) -> Self {
        let basis = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| if i == j { Rational::one() } else { Rational::zero() })
                    .collect()
            })
            .collect();
        Self {
            dim,
            basis,
            forms: Vec::new(),
        }
    }

    /// Subspace cut out by the given integer forms (normalized to primitive).
    pub fn from_forms(dim: usize, forms: &[Vec<BigInt>]) -> Result<Self> {
        let rows: Vec<Vec<Rational>> = forms
            .iter()
            .map(|f| {
                if f.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: f.len(),
                    });
                }
                Ok(f.iter().cloned().map(Rational::from_integer).collect())
            })
            .collect::<Result<_>>()?;
        let (rref, pivots) = row_reduce(rows, dim, ColumnOrder::Forward);
        // The kernel of the forms is the subspace; its annihilator is the row space.
        let basis_int = kernel_forms(&rref, &pivots, dim);
        let basis: Vec<Vec<Rational>> = basis_int
            .iter()
            .map(|b| b.iter().cloned().map(Rational::from_integer).collect())
            .collect();
        let primitive: Vec<Vec<BigInt>> = rref
            .iter()
            .take(pivots.len())
            .map(|r| primitive_integer(r))
            .collect();
        Ok(Self {
            dim,
            basis,
            forms: primitive,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &[Vec<Rational>] {
        &self.basis
    }

    pub fn forms(&self) -> &[Vec<BigInt>] {
        &self.forms
    }

    pub fn codim(&self) -> usize {
        self.forms.len()
    }
}

/// `V` for a moment family: basis from the moment rows, forms spanning the
/// annihilator, each primitive with first nonzero entry positive.
pub fn moment_subspace(fam: &MomentFamily) -> Result<Subspace> {
    let d = fam.dim();
    let rows: Vec<Vec<Rational>> = (0..=fam.degree())
        .map(|j| {
            fam.moment_row(j)
                .into_iter()
                .map(Rational::from_integer)
                .collect()
        })
        .collect();
    Subspace::from_spanning_rows(d, &rows)
}

/// Annihilator coefficients of a 4-tuple with the raw cofactor sign:
/// `v_i = (-1)^i det(M without row i)`, `M = (a_i^j)`, `j = 0, 1, 2`.
///
/// Not normalized; `sum v_i f(a_i) = 0` for every quadratic `f`.
pub fn vandermonde_coeffs(a: &[i64; 4]) -> Result<[BigInt; 4]> {
    MomentFamily::quadratic(a.to_vec())?;
    let mut out: [BigInt; 4] = Default::default();
    for (i, slot) in out.iter_mut().enumerate() {
        let rest: Vec<i64> = (0..4).filter(|&k| k != i).map(|k| a[k]).collect();
        // det of the 3x3 Vandermonde block is the product of pairwise differences.
        let mut det = BigInt::one();
        for p in 0..3 {
            for q in p + 1..3 {
                det *= BigInt::from(rest[q]) - BigInt::from(rest[p]);
            }
        }
        // Rows are 1-based in the sign convention.
        *slot = if (i + 1) % 2 == 1 { -det } else { det };
    }
    Ok(out)
}

/// `1 / ||w||_1`: any integer point within this l-infinity distance of
/// `w^perp` is annihilated by `w`.
pub fn membership_margin(form: &[BigInt]) -> Result<Rational> {
    let l1: BigInt = form.iter().map(|x| x.abs()).sum();
    if l1.is_zero() {
        return Err(Error::ZeroVector);
    }
    Ok(Rational::new(BigInt::one(), l1))
}

/// Minimum margin over the defining forms; `None` for the full space.
pub fn subspace_margin(v: &Subspace) -> Result<Option<Rational>> {
    let mut best: Option<Rational> = None;
    for f in v.forms() {
        let m = membership_margin(f)?;
        best = Some(match best {
            Some(b) if b < m => b,
            _ => m,
        });
    }
    Ok(best)
}

pub fn in_subspace(x: &[i64], v: &Subspace) -> Result<bool> {
    if x.len() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: v.dim(),
            got: x.len(),
        });
    }
    Ok(v.forms().iter().all(|f| {
        let s: BigInt = f.iter().zip(x).map(|(c, &xi)| c * BigInt::from(xi)).sum();
        s.is_zero()
    }))
}

/// Points of a subspace in a box, stored flat with stride `dim`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSet {
    dim: usize,
    flat: Vec<i64>,
}

impl PointSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.flat.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> + '_ {
        self.flat.chunks_exact(self.dim.max(1))
    }

    pub fn get(&self, i: usize) -> &[i64] {
        &self.flat[i * self.dim..(i + 1) * self.dim]
    }
}

/// Integer solver for the forms: trailing pivot coordinates are expressed
/// through the free ones, `den_p * x_p = -sum_f num_{p,f} x_f`.
#[derive(Debug, Clone)]
struct LatticeSolver {
    dim: usize,
    free: Vec<usize>,
    // (pivot column, denominator, numerators indexed like `free`)
    pivots: Vec<(usize, i128, Vec<i128>)>,
}

impl LatticeSolver {
    fn new(v: &Subspace) -> Result<Self> {
        let d = v.dim();
        let rows: Vec<Vec<Rational>> = v
            .forms()
            .iter()
            .map(|f| f.iter().cloned().map(Rational::from_integer).collect())
            .collect();
        let (rref, pivot_cols) = row_reduce(rows, d, ColumnOrder::Backward);
        let free: Vec<usize> = (0..d).filter(|c| !pivot_cols.contains(c)).collect();
        let mut pivots = Vec::new();
        for (row, &pc) in rref.iter().zip(&pivot_cols) {
            let ints = primitive_integer(row);
            let den = to_i128(&ints[pc])?;
            let nums = free
                .iter()
                .map(|&f| to_i128(&ints[f]))
                .collect::<Result<Vec<_>>>()?;
            pivots.push((pc, den, nums));
        }
        Ok(Self { dim: d, free, pivots })
    }

    /// Completes a free-coordinate assignment; `None` if a pivot coordinate
    /// is fractional or falls outside `[0, n)`.
    fn complete(&self, free_vals: &[i64], n: i64, out: &mut [i64]) -> bool {
        for (slot, &f) in self.free.iter().enumerate() {
            out[f] = free_vals[slot];
        }
        for (pc, den, nums) in &self.pivots {
            let s: i128 = nums
                .iter()
                .zip(free_vals)
                .map(|(c, &x)| c * x as i128)
                .sum();
            let rhs = -s;
            if rhs % den != 0 {
                return false;
            }
            let val = rhs / den;
            if val < 0 || val >= n as i128 {
                return false;
            }
            out[*pc] = val as i64;
        }
        true
    }

    fn for_each_with_lead<F: FnMut(&[i64])>(&self, n: i64, lead: Option<i64>, mut visit: F) {
        let k = self.free.len();
        let mut vals = vec![0i64; k];
        let mut point = vec![0i64; self.dim];
        if k == 0 {
            if lead.is_none() && self.complete(&vals, n, &mut point) {
                visit(&point);
            }
            return;
        }
        let start = if let Some(l) = lead {
            vals[0] = l;
            1
        } else {
            0
        };
        loop {
            if self.complete(&vals, n, &mut point) {
                visit(&point);
            }
            // odometer over positions start..k, last position fastest
            let mut pos = k;
            loop {
                if pos == start {
                    return;
                }
                pos -= 1;
                vals[pos] += 1;
                if vals[pos] < n {
                    break;
                }
                vals[pos] = 0;
            }
        }
    }
}

fn to_i128(x: &BigInt) -> Result<i128> {
    x.to_i128()
        .ok_or_else(|| Error::Overflow("lattice solver coefficient".into()))
}

/// `|V ∩ [N]^d|`, iterating only over the free coordinates.
pub fn lattice_point_count(v: &Subspace, n: u64) -> Result<u64> {
    let n = i64::try_from(n).map_err(|_| Error::Overflow("box side".into()))?;
    let solver = LatticeSolver::new(v)?;
    if solver.free.is_empty() {
        let mut c = 0u64;
        solver.for_each_with_lead(n, None, |_| c += 1);
        return Ok(c);
    }
    let total = (0..n)
        .into_par_iter()
        .map(|lead| {
            let mut c = 0u64;
            solver.for_each_with_lead(n, Some(lead), |_| c += 1);
            c
        })
        .sum();
    Ok(total)
}

/// All points of `V ∩ [N]^d` in lexicographic order.
pub fn lattice_points(v: &Subspace, n: u64) -> Result<PointSet> {
    let n = i64::try_from(n).map_err(|_| Error::Overflow("box side".into()))?;
    let solver = LatticeSolver::new(v)?;
    let d = v.dim();
    let mut pts: Vec<Vec<i64>> = Vec::new();
    solver.for_each_with_lead(n, None, |p| pts.push(p.to_vec()));
    pts.sort_unstable();
    let flat = pts.into_iter().flatten().collect();
    Ok(PointSet { dim: d, flat })
}

#[derive(Clone, Copy)]
enum ColumnOrder {
    Forward,
    Backward,
}

/// Reduced row echelon form; returns nonzero rows and their pivot columns.
fn row_reduce(
    mut rows: Vec<Vec<Rational>>,
    dim: usize,
    order: ColumnOrder,
) -> (Vec<Vec<Rational>>, Vec<usize>) {
    let cols: Vec<usize> = match order {
        ColumnOrder::Forward => (0..dim).collect(),
        ColumnOrder::Backward => (0..dim).rev().collect(),
    };
    let mut pivots = Vec::new();
    let mut r = 0;
    for &c in &cols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for x in rows[r].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let factor = rows[i][c].clone();
                let pivot = rows[r].clone();
                for (x, p) in rows[i].iter_mut().zip(&pivot) {
                    *x -= &factor * p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    (rows, pivots)
}

fn rank(rows: &[Vec<Rational>], dim: usize) -> usize {
    row_reduce(rows.to_vec(), dim, ColumnOrder::Forward).1.len()
}

/// Kernel basis of an RREF system, each vector primitive and sign-normalized.
fn kernel_forms(rref: &[Vec<Rational>], pivots: &[usize], dim: usize) -> Vec<Vec<BigInt>> {
    (0..dim)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![Rational::zero(); dim];
            v[free] = Rational::one();
            for (row, &pc) in rref.iter().zip(pivots) {
                v[pc] = -row[free].clone();
            }
            primitive_integer(&v)
        })
        .collect()
}

/// Clears denominators, divides by the content and makes the first nonzero
/// entry positive.
pub fn primitive_integer(v: &[Rational]) -> Vec<BigInt> {
    let lcm = v
        .iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let mut ints: Vec<BigInt> = v.iter().map(|x| x.numer() * (&lcm / x.denom())).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if !g.is_zero() {
        for x in ints.iter_mut() {
            *x = &*x / &g;
        }
    }
    if let Some(first) = ints.iter().find(|x| !x.is_zero()) {
        if first.is_negative() {
            for x in ints.iter_mut() {
                *x = -&*x;
            }
        }
    }
    ints
}

/// Primitive, sign-normalized copy of an integer vector.
pub fn primitive_form(v: &[BigInt]) -> Vec<BigInt> {
    let r: Vec<Rational> = v.iter().cloned().map(Rational::from_integer).collect();
    primitive_integer(&r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bi(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    /// Determinant by cofactor expansion, independent of the product formula.
    fn det_cofactor(m: &[Vec<BigInt>]) -> BigInt {
        let n = m.len();
        if n == 1 {
            return m[0][0].clone();
        }
        let mut acc = BigInt::zero();
        for c in 0..n {
            let minor: Vec<Vec<BigInt>> = m[1..]
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(j, _)| *j != c)
                        .map(|(_, x)| x.clone())
                        .collect()
                })
                .collect();
            let term = &m[0][c] * det_cofactor(&minor);
            if c % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        acc
    }

    fn cofactor_oracle(a: &[i64; 4]) -> Vec<BigInt> {
        (0..4)
            .map(|i| {
                let m: Vec<Vec<BigInt>> = (0..4)
                    .filter(|&k| k != i)
                    .map(|k| bi(&[1, a[k], a[k] * a[k]]))
                    .collect();
                let d = det_cofactor(&m);
                if (i + 1) % 2 == 1 {
                    -d
                } else {
                    d
                }
            })
            .collect()
    }

    #[test]
    fn vandermonde_matches_cofactor_oracle() {
        let v = vandermonde_coeffs(&[1, 2, 3, 4]).unwrap();
        assert_eq!(v.to_vec(), bi(&[-2, 6, -6, 2]));
        assert_eq!(v.to_vec(), cofactor_oracle(&[1, 2, 3, 4]));
        for a in [[0, 2, 3, 4], [-5, 7, 1, 30], [9, -3, 0, 2]] {
            assert_eq!(vandermonde_coeffs(&a).unwrap().to_vec(), cofactor_oracle(&a));
        }
    }

    #[test]
    fn vandermonde_on_0234_is_multiple_of_paper_form() {
        let v = vandermonde_coeffs(&[0, 2, 3, 4]).unwrap();
        assert_eq!(primitive_form(&v), bi(&[1, -6, 8, -3]));
    }

    #[test]
    fn vandermonde_rejects_repeats() {
        assert!(matches!(
            vandermonde_coeffs(&[1, 1, 2, 3]),
            Err(Error::InvalidFamily(_))
        ));
    }

    #[test]
    fn moment_subspace_examples() {
        let v = moment_subspace(&MomentFamily::quadratic(vec![0, 2, 3, 4]).unwrap()).unwrap();
        assert_eq!(v.forms(), &[bi(&[1, -6, 8, -3])]);
        assert_eq!(v.basis().len(), 3);

        let v = moment_subspace(&MomentFamily::quadratic(vec![1, 2, 3, 4]).unwrap()).unwrap();
        assert_eq!(v.forms(), &[bi(&[1, -3, 3, -1])]);

        let v = moment_subspace(&MomentFamily::new(vec![0, 1], 1).unwrap()).unwrap();
        assert!(v.forms().is_empty());
        assert_eq!(v.basis().len(), 2);
    }

    #[test]
    fn moment_subspace_rejects_duplicates() {
        assert!(MomentFamily::quadratic(vec![1, 2, 2, 4]).is_err());
    }

    #[test]
    fn forms_annihilate_moment_rows() {
        let fam = MomentFamily::quadratic(vec![5, -1, 7, 0, 11]).unwrap();
        let v = moment_subspace(&fam).unwrap();
        assert_eq!(v.codim(), 2);
        for j in 0..=2 {
            let row = fam.moment_row(j);
            for f in v.forms() {
                let s: BigInt = f.iter().zip(&row).map(|(a, b)| a * b).sum();
                assert!(s.is_zero());
            }
        }
    }

    #[test]
    fn margins() {
        assert_eq!(
            membership_margin(&bi(&[1, -6, 8, -3])).unwrap(),
            Rational::new(1.into(), 18.into())
        );
        assert_eq!(
            membership_margin(&bi(&[1, -1])).unwrap(),
            Rational::new(1.into(), 2.into())
        );
        assert_eq!(membership_margin(&bi(&[0, 0])), Err(Error::ZeroVector));
        let v = Subspace::from_forms(3, &[bi(&[1, -1, 0]), bi(&[0, 1, -3])]).unwrap();
        assert_eq!(
            subspace_margin(&v).unwrap(),
            Some(Rational::new(1.into(), 4.into()))
        );
    }

    #[test]
    fn membership() {
        let v = moment_subspace(&MomentFamily::quadratic(vec![0, 2, 3, 4]).unwrap()).unwrap();
        assert!(in_subspace(&[1, 1, 1, 1], &v).unwrap());
        assert!(!in_subspace(&[1, 0, 0, 0], &v).unwrap());
        assert!(in_subspace(&[0, 0, 0, 0], &v).unwrap());
        assert!(matches!(
            in_subspace(&[1, 1, 1], &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lattice_examples() {
        let v = moment_subspace(&MomentFamily::quadratic(vec![0, 2, 3, 4]).unwrap()).unwrap();
        assert_eq!(lattice_point_count(&v, 1).unwrap(), 1);
        assert_eq!(lattice_point_count(&v, 2).unwrap(), 2);
        let pts = lattice_points(&v, 2).unwrap();
        let got: Vec<Vec<i64>> = pts.iter().map(|p| p.to_vec()).collect();
        assert_eq!(got, vec![vec![0, 0, 0, 0], vec![1, 1, 1, 1]]);
        assert_eq!(lattice_point_count(&Subspace::full(4), 5).unwrap(), 625);
    }

    #[test]
    fn lattice_count_matches_brute_force() {
        for a in [vec![0, 2, 3, 4], vec![1, 2, 3, 4], vec![1, 3, 4, 9]] {
            let v = moment_subspace(&MomentFamily::quadratic(a).unwrap()).unwrap();
            for n in 1..=8i64 {
                let mut brute = 0u64;
                for x0 in 0..n {
                    for x1 in 0..n {
                        for x2 in 0..n {
                            for x3 in 0..n {
                                if in_subspace(&[x0, x1, x2, x3], &v).unwrap() {
                                    brute += 1;
                                }
                            }
                        }
                    }
                }
                assert_eq!(lattice_point_count(&v, n as u64).unwrap(), brute);
                assert_eq!(lattice_points(&v, n as u64).unwrap().len() as u64, brute);
            }
        }
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let v = Subspace::from_forms(3, &[bi(&[2, -1, -1])]).unwrap();
        let pts = lattice_points(&v, 6).unwrap();
        let list: Vec<&[i64]> = pts.iter().collect();
        assert!(list.windows(2).all(|w| w[0] < w[1]));
        assert!(list.iter().all(|p| 2 * p[0] == p[1] + p[2]));
    }
}
