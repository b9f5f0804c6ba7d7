//! Exact integration of products of periodic step functions of linear
//! forms over the unit square:
//!
//! `I = int_{[0,1)^2} prod_i W_i(g_i . p + kappa_i) dp`.
//!
//! All factors but one are handled by clipping convex polygons against the
//! strips where the factor is constant. The remaining factor is integrated
//! in closed form over each triangle of the resulting partition, using the
//! first and second primitives of its step function.

use crate::circle::StepFunction;

#[derive(Debug, Clone, Copy)]
pub struct Term<'a> {
    pub form: [f64; 2],
    pub offset: f64,
    pub f: &'a StepFunction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// A priori bound on floating-point rounding in the evaluation.
    pub error_bound: f64,
    pub pieces: usize,
}

type Poly = Vec<[f64; 2]>;

fn dot(g: [f64; 2], p: [f64; 2]) -> f64 {
    g[0] * p[0] + g[1] * p[1]
}

fn area(poly: &Poly) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s.abs()
}

/// Keeps the part of `poly` where `sign * (g . p - c) >= 0`.
fn clip(poly: &Poly, g: [f64; 2], c: f64, sign: f64) -> Poly {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let dp = sign * (dot(g, p) - c);
        let dq = sign * (dot(g, q) - c);
        if dp >= 0.0 {
            out.push(p);
        }
        if (dp >= 0.0) != (dq >= 0.0) {
            let t = dp / (dp - dq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    if out.len() < 3 {
        out.clear();
    }
    out
}

fn range(poly: &Poly, g: [f64; 2]) -> (f64, f64) {
    poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
        let t = dot(g, p);
        (lo.min(t), hi.max(t))
    })
}

/// Splits `poly` along the strips of `term`, yielding `(piece, value)`.
fn split(poly: &Poly, term: &Term, out: &mut Vec<(Poly, f64)>, weight: f64) {
    let (lo, hi) = range(poly, term.form);
    let f = term.f;
    let k0 = (lo + term.offset).floor() as i64;
    let k1 = (hi + term.offset).floor() as i64;
    for k in k0..=k1 {
        let base = k as f64 - term.offset;
        // Pieces whose shifted span meets [lo, hi].
        let start = f.breaks().partition_point(|&b| b + base <= lo).saturating_sub(1);
        for j in start..f.pieces() {
            let (a, b, v) = f.piece(j);
            let (s0, s1) = (a + base, b + base);
            if s0 > hi {
                break;
            }
            if v == 0.0 || s1 <= lo {
                continue;
            }
            let mut piece = poly.clone();
            if s0 > lo {
                piece = clip(&piece, term.form, s0, 1.0);
            }
            if s1 < hi && !piece.is_empty() {
                piece = clip(&piece, term.form, s1, -1.0);
            }
            if !piece.is_empty() && area(&piece) > 0.0 {
                out.push((piece, weight * v));
            }
        }
    }
}

/// `int_tri W(g . p + kappa) dp` over a triangle.
fn triangle(tri: [[f64; 2]; 3], term: &Term) -> f64 {
    let a = {
        let [p, q, r] = tri;
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])).abs()
    };
    if a == 0.0 {
        return 0.0;
    }
    let mut t = tri.map(|p| dot(term.form, p));
    t.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let [ta, tb, tc] = t;
    let span = tc - ta;
    if span <= 0.0 {
        return a * term.f.eval(ta + term.offset);
    }
    // Density of the pushforward of area onto t is a tent peaked at tb.
    let d1 = tb - ta;
    let d2 = tc - tb;
    let up = if d1 > 0.0 {
        term.f.moments(ta + term.offset, d1).1 / d1
    } else {
        0.0
    };
    let down = if d2 > 0.0 {
        let (i0, i1) = term.f.moments(tb + term.offset, d2);
        i0 - i1 / d2
    } else {
        0.0
    };
    2.0 * a / span * (up + down)
}

fn integrate_poly(poly: &Poly, term: &Term) -> f64 {
    (1..poly.len() - 1)
        .map(|i| triangle([poly[0], poly[i], poly[i + 1]], term))
        .sum()
}

pub fn integrate(terms: &[Term]) -> Integral {
    let mut constant = 1.0;
    let mut active: Vec<&Term> = Vec::new();
    for t in terms {
        if t.form == [0.0, 0.0] {
            constant *= t.f.eval(t.offset);
        } else {
            active.push(t);
        }
    }
    let unit: Poly = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    if constant == 0.0 {
        return Integral {
            value: 0.0,
            error_bound: 0.0,
            pieces: 0,
        };
    }
    if active.is_empty() {
        return Integral {
            value: constant,
            error_bound: 0.0,
            pieces: 1,
        };
    }
    let cost = |t: &&Term| (t.form[0].abs() + t.form[1].abs()) * t.f.pieces() as f64;
    active.sort_by(|x, y| cost(x).partial_cmp(&cost(y)).unwrap());
    let last = active.pop().unwrap();
    let mut current = vec![(unit, constant)];
    for term in &active {
        let mut next = Vec::new();
        for (poly, w) in &current {
            split(poly, term, &mut next, *w);
        }
        current = next;
        if current.is_empty() {
            break;
        }
    }
    let pieces = current.len();
    let value: f64 = current
        .iter()
        .map(|(poly, w)| w * integrate_poly(poly, last))
        .sum();
    let scale = terms.iter().map(|t| t.f.sup()).product::<f64>().max(1.0);
    let reach = last.form[0].abs() + last.form[1].abs() + 2.0;
    Integral {
        value,
        error_bound: (pieces as f64 + 1.0) * 64.0 * f64::EPSILON * scale * reach,
        pieces,
    }
}

/// Bound on `|dI/d kappa_i|` summed over terms, for propagating offset
/// errors: shifting one factor by `h` changes the integral by at most
/// `TV(W_i) * |h| * prod_{j != i} sup W_j`.
pub fn offset_sensitivity(terms: &[Term]) -> f64 {
    let sups: Vec<f64> = terms.iter().map(|t| t.f.sup()).collect();
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let others: f64 = sups
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, s)| s)
                .product();
            t.f.total_variation() * others
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle::IntervalUnion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(terms: &[Term], n: usize) -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                s += terms.iter().map(|t| t.f.eval(dot(t.form, p) + t.offset)).product::<f64>();
            }
        }
        s / (n * n) as f64
    }

    #[test]
    fn single_and_constant() {
        let f = IntervalUnion::interval(0.1, 0.4).indicator();
        let r = integrate(&[Term { form: [3.0, -2.0], offset: 0.37, f: &f }]);
        assert!((r.value - 0.3).abs() < 1e-12);
        let r = integrate(&[Term { form: [0.0, 0.0], offset: 0.2, f: &f }]);
        assert_eq!(r.value, 1.0);
        let r = integrate(&[
            Term { form: [0.0, 0.0], offset: 0.5, f: &f },
            Term { form: [1.0, 0.0], offset: 0.0, f: &f },
        ]);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn independent_forms_factor() {
        let f = IntervalUnion::interval(0.0, 0.3).indicator();
        let g = IntervalUnion::from_arcs([(0.5, 0.7), (0.9, 1.05)]).indicator();
        let r = integrate(&[
            Term { form: [1.0, 0.0], offset: 0.1, f: &f },
            Term { form: [2.0, 3.0], offset: 0.7, f: &g },
        ]);
        assert!((r.value - 0.3 * 0.35).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn parallel_forms_reduce_to_one_dimension() {
        let f = IntervalUnion::interval(0.0, 0.5).indicator();
        let r = integrate(&[
            Term { form: [0.0, 1.0], offset: 0.0, f: &f },
            Term { form: [0.0, 1.0], offset: 0.2, f: &f },
        ]);
        assert!((r.value - 0.3).abs() < 1e-12);
        let r = integrate(&[
            Term { form: [1.0, 0.0], offset: 0.0, f: &f },
            Term { form: [1.0, 0.0], offset: 0.5, f: &f },
        ]);
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn matches_fine_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..12 {
            let fs: Vec<StepFunction> = (0..3)
                .map(|_| {
                    let pts: Vec<(f64, f64)> = (0..4)
                        .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
                        .collect();
                    StepFunction::from_points(pts)
                })
                .collect();
            let terms: Vec<Term> = fs
                .iter()
                .map(|f| Term {
                    form: [rng.gen_range(-3..=3) as f64, rng.gen_range(-3..=3) as f64],
                    offset: rng.gen(),
                    f,
                })
                .collect();
            let exact = integrate(&terms).value;
            let approx = grid(&terms, 1500);
            assert!((exact - approx).abs() < 5e-3, "{exact} vs {approx}");
        }
    }

    #[test]
    fn sensitivity_bounds_shift() {
        let f = IntervalUnion::interval(0.2, 0.6).indicator();
        let mk = |o: f64| {
            integrate(&[
                Term { form: [1.0, 0.0], offset: 0.0, f: &f },
                Term { form: [1.0, 1.0], offset: o, f: &f },
                Term { form: [2.0, 1.0], offset: 0.3, f: &f },
            ])
            .value
        };
        let terms = [
            Term { form: [1.0, 0.0], offset: 0.0, f: &f },
            Term { form: [1.0, 1.0], offset: 0.0, f: &f },
            Term { form: [2.0, 1.0], offset: 0.3, f: &f },
        ];
        let k = offset_sensitivity(&terms);
        let h = 1e-3;
        assert!((mk(0.1 + h) - mk(0.1)).abs() <= k * h + 1e-12);
    }
}
