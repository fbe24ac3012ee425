//! Exact rationals in the unit interval, plus the threshold grid
//! `{i/L : 0 <= i <= L}` used to materialize the discrete signature.

use alloc::string::{String, ToString};
use core::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

/// `p/q` as an exact rational.
pub fn rat(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

pub fn rat_zero() -> Rat {
    Rat::zero()
}

pub fn rat_one() -> Rat {
    Rat::one()
}

pub fn in_unit_interval(x: &Rat) -> bool {
    !x.is_negative() && *x <= Rat::one()
}

/// Truncated subtraction on rationals: `max(a - b, 0)`.
pub fn monus(a: &Rat, b: &Rat) -> Rat {
    if a > b {
        a - b
    } else {
        Rat::zero()
    }
}

pub fn min_rat(a: Rat, b: Rat) -> Rat {
    if a <= b {
        a
    } else {
        b
    }
}

pub fn max_rat(a: Rat, b: Rat) -> Rat {
    if a >= b {
        a
    } else {
        b
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RatParseError {
    Malformed(String),
    ZeroDenominator,
    OutOfRange(String),
}

impl fmt::Display for RatParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RatParseError::Malformed(s) => write!(f, "malformed rational: {s}"),
            RatParseError::ZeroDenominator => write!(f, "zero denominator"),
            RatParseError::OutOfRange(s) => write!(f, "rational out of [0,1]: {s}"),
        }
    }
}

/// Parses the `"p/q"` wire form (plain integers accepted).
pub fn parse_rat(s: &str) -> Result<Rat, RatParseError> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let p: BigInt = num
        .parse()
        .map_err(|_| RatParseError::Malformed(s.to_string()))?;
    let q: BigInt = den
        .parse()
        .map_err(|_| RatParseError::Malformed(s.to_string()))?;
    if q.is_zero() {
        return Err(RatParseError::ZeroDenominator);
    }
    Ok(Rat::new(p, q))
}

/// Parses a rational and checks it lies in `[0,1]`.
pub fn parse_unit_rat(s: &str) -> Result<Rat, RatParseError> {
    let r = parse_rat(s)?;
    if !in_unit_interval(&r) {
        return Err(RatParseError::OutOfRange(s.to_string()));
    }
    Ok(r)
}

/// Canonical `"p/q"` form ("0", "1", and integers print without the "/q").
pub fn format_rat(x: &Rat) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        let mut s = x.numer().to_string();
        s.push('/');
        s.push_str(&x.denom().to_string());
        s
    }
}

/// The threshold grid `{i/L : 0 <= i <= L}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub l: u32,
}

impl Grid {
    pub fn new(l: u32) -> Grid {
        assert!(l >= 2, "grid_L must be >= 2");
        Grid { l }
    }

    pub fn value(&self, i: u32) -> Rat {
        rat(i as i64, self.l as i64)
    }

    pub fn points(&self) -> impl Iterator<Item = u32> {
        0..=self.l
    }

    /// True when `x` equals some grid point.
    pub fn contains(&self, x: &Rat) -> bool {
        in_unit_interval(x) && (x * Rat::from(BigInt::from(self.l))).denom().is_one()
    }

    /// Largest grid index `i` with `i/L <= x` (assumes `x >= 0`).
    pub fn floor_index(&self, x: &Rat) -> u32 {
        let scaled = x * Rat::from(BigInt::from(self.l));
        let fl = scaled.floor().to_integer();
        if fl >= BigInt::from(self.l) {
            self.l
        } else {
            u32::try_from(&fl).unwrap_or(0)
        }
    }

    /// Smallest grid index `i` with `i/L >= x` (assumes `x <= 1`).
    pub fn ceil_index(&self, x: &Rat) -> u32 {
        let scaled = x * Rat::from(BigInt::from(self.l));
        let cl = scaled.ceil().to_integer();
        if cl <= BigInt::zero() {
            0
        } else {
            u32::try_from(&cl).unwrap_or(self.l).min(self.l)
        }
    }

    /// Largest grid index `i` with `i/L < x`, if any.
    pub fn strict_floor_index(&self, x: &Rat) -> Option<u32> {
        let fl = self.floor_index(x);
        if self.value(fl) < *x {
            Some(fl)
        } else if fl > 0 {
            Some(fl - 1)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_round_trip() {
        for s in ["0", "1", "1/2", "3/4", "7/24"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(format_rat(&r), s);
        }
        assert_eq!(parse_rat("2/4").unwrap(), rat(1, 2));
        assert!(parse_rat("3/0").is_err());
        assert!(parse_rat("x").is_err());
        assert!(parse_unit_rat("5/4").is_err());
    }

    #[test]
    fn monus_truncates() {
        assert_eq!(monus(&rat(1, 2), &rat(3, 4)), rat(0, 1));
        assert_eq!(monus(&rat(3, 4), &rat(1, 2)), rat(1, 4));
    }

    #[test]
    fn grid_indexing() {
        let g = Grid::new(4);
        assert_eq!(g.floor_index(&rat(3, 8)), 1);
        assert_eq!(g.ceil_index(&rat(3, 8)), 2);
        assert_eq!(g.floor_index(&rat(1, 2)), 2);
        assert_eq!(g.ceil_index(&rat(1, 2)), 2);
        assert_eq!(g.strict_floor_index(&rat(1, 2)), Some(1));
        assert_eq!(g.strict_floor_index(&rat(0, 1)), None);
        assert!(g.contains(&rat(3, 4)));
        assert!(!g.contains(&rat(1, 3)));
    }
}
