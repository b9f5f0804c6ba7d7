//! JSON rendering helpers shared by reports.

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactlin::Rational;

/// `"p/q"`, always with an explicit denominator.
pub fn rat_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("bad rational {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p = p.trim().parse().map_err(|_| bad())?;
        let q: num_bigint::BigInt = q.trim().parse().map_err(|_| bad())?;
        if q == 0.into() {
            return Err(bad());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches('-'), frac);
        let num: num_bigint::BigInt = digits.parse().map_err(|_| bad())?;
        let den = num_traits::pow(num_bigint::BigInt::from(10), frac.len());
        let r = Rational::new(num, den);
        return Ok(if neg { -r } else { r });
    }
    Ok(Rational::from_integer(s.parse().map_err(|_| bad())?))
}

/// Exact rational with a float convenience field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exact {
    pub exact: String,
    pub approx: f64,
}

impl From<&Rational> for Exact {
    fn from(r: &Rational) -> Self {
        Self {
            exact: rat_string(r),
            approx: r.to_f64().unwrap_or(f64::NAN),
        }
    }
}

impl From<Rational> for Exact {
    fn from(r: Rational) -> Self {
        (&r).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let r = parse_rational("6/8").unwrap();
        assert_eq!(rat_string(&r), "3/4");
        assert_eq!(rat_string(&parse_rational("0.05").unwrap()), "1/20");
        assert_eq!(rat_string(&parse_rational("-1.5").unwrap()), "-3/2");
        assert_eq!(rat_string(&parse_rational("7").unwrap()), "7/1");
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }
}
