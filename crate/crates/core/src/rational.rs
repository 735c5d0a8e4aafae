//! Exact rationals, their text form, and outward-rounded `f64` enclosures.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::cmp::Ordering;

use crate::error::Error;

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Parses `"num/den"` or a bare integer.
pub fn parse_q(s: &str) -> Result<Q, Error> {
    let bad = || Error::Parse(format!("not an exact rational: {s:?}"));
    let t = s.trim();
    let (n, d) = match t.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (t, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Q::new(n, d))
}

/// Always `num/den` in lowest terms with positive denominator, so the text is canonical.
pub fn fmt_q(x: &Q) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

pub fn pow2(e: i64) -> Q {
    if e >= 0 {
        Q::from_integer(BigInt::one() << (e as usize))
    } else {
        Q::new(BigInt::one(), BigInt::one() << ((-e) as usize))
    }
}

pub fn floor_int(x: &Q) -> BigInt {
    x.numer().div_floor(x.denom())
}

pub fn ceil_int(x: &Q) -> BigInt {
    -((-x.numer()).div_floor(x.denom()))
}

/// Nearest `f64`; saturates to `±f64::MAX` instead of overflowing.
pub fn to_f64(x: &Q) -> f64 {
    let v = x.to_f64().unwrap_or(f64::NAN);
    if v.is_finite() {
        return v;
    }
    if v.is_nan() {
        // Only reachable for huge numerators and denominators; fall back to logs.
        let l = log2_abs(x);
        let m = 2f64.powf(l);
        return if x.is_negative() { -m } else { m };
    }
    if v > 0.0 {
        f64::MAX
    } else {
        -f64::MAX
    }
}

/// log2 |x| for x != 0, accurate to a few ulps even when x is far outside f64 range.
pub fn log2_abs(x: &Q) -> f64 {
    fn log2_int(n: &BigInt) -> f64 {
        let bits = n.bits();
        if bits <= 1000 {
            return n.abs().to_f64().unwrap().log2();
        }
        let shift = bits - 64;
        let top = (n.abs() >> shift as usize).to_f64().unwrap();
        top.log2() + shift as f64
    }
    log2_int(x.numer()) - log2_int(x.denom())
}

/// A closed interval of `f64` known to contain some real number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FInterval {
    pub const ZERO: FInterval = FInterval { lo: 0.0, hi: 0.0 };
    pub const ONE: FInterval = FInterval { lo: 1.0, hi: 1.0 };

    pub fn point(x: f64) -> Self {
        FInterval { lo: x, hi: x }
    }

    /// Encloses a rational; the conversion is within one ulp so two steps out is safe.
    pub fn of(x: &Q) -> Self {
        if x.is_zero() {
            return Self::ZERO;
        }
        let v = to_f64(x);
        FInterval {
            lo: v.next_down().next_down(),
            hi: v.next_up().next_up(),
        }
    }

    /// Encloses `n / d` for integers exactly representable in `f64`.
    pub fn ratio(n: i64, d: u64) -> Self {
        let v = n as f64 / d as f64;
        FInterval {
            lo: v.next_down(),
            hi: v.next_up(),
        }
    }

    pub fn add(self, o: Self) -> Self {
        FInterval {
            lo: (self.lo + o.lo).next_down(),
            hi: (self.hi + o.hi).next_up(),
        }
    }

    pub fn sub(self, o: Self) -> Self {
        FInterval {
            lo: (self.lo - o.hi).next_down(),
            hi: (self.hi - o.lo).next_up(),
        }
    }

    pub fn mul(self, o: Self) -> Self {
        let p = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        FInterval {
            lo: lo.next_down(),
            hi: hi.next_up(),
        }
    }

    /// Division by a strictly positive interval.
    pub fn div_pos(self, o: Self) -> Self {
        debug_assert!(o.lo > 0.0);
        let p = [
            self.lo / o.lo,
            self.lo / o.hi,
            self.hi / o.lo,
            self.hi / o.hi,
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        FInterval {
            lo: lo.next_down(),
            hi: hi.next_up(),
        }
    }

    pub fn mid(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Decides `x < y` (or `x <= y` when `strict` is false) from enclosures,
/// calling `exact` for the true ordering only when the enclosures overlap.
pub(crate) fn decide_le(
    x: FInterval,
    y: FInterval,
    strict: bool,
    exact: impl FnOnce() -> Ordering,
) -> bool {
    if strict {
        if x.hi < y.lo {
            return true;
        }
        if x.lo >= y.hi {
            return false;
        }
    } else {
        if x.hi <= y.lo {
            return true;
        }
        if x.lo > y.hi {
            return false;
        }
    }
    let o = exact();
    if strict {
        o == Ordering::Less
    } else {
        o != Ordering::Greater
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_format_round_trip() {
        assert_eq!(parse_q("2/6").unwrap(), q(1, 3));
        assert_eq!(parse_q(" -4 ").unwrap(), qi(-4));
        assert_eq!(fmt_q(&q(-2, 6)), "-1/3");
        assert_eq!(fmt_q(&qi(0)), "0/1");
        assert!(parse_q("1/0").is_err());
        assert!(parse_q("0.5").is_err());
    }

    #[test]
    fn floor_and_ceil_of_negatives() {
        assert_eq!(floor_int(&q(-7, 2)), BigInt::from(-4));
        assert_eq!(ceil_int(&q(-7, 2)), BigInt::from(-3));
        assert_eq!(ceil_int(&qi(5)), BigInt::from(5));
    }

    #[test]
    fn huge_rationals_keep_their_logarithm() {
        let x = pow2(-5000) * q(3, 1);
        assert!((log2_abs(&x) - (3f64.log2() - 5000.0)).abs() < 1e-9);
        assert_eq!(to_f64(&x), 0.0);
    }

    proptest! {
        #[test]
        fn enclosure_contains_exact_value(n in -1_000_000i64..1_000_000, d in 1i64..1_000_000,
                                          n2 in -1000i64..1000, d2 in 1i64..1000) {
            let a = q(n, d);
            let b = q(n2, d2);
            let ea = FInterval::of(&a);
            let eb = FInterval::of(&b);
            let inside = |e: FInterval, x: &Q| {
                FInterval::of(x); // conversion itself must not panic
                Q::from_float(e.lo).unwrap() <= *x && *x <= Q::from_float(e.hi).unwrap()
            };
            prop_assert!(inside(ea, &a));
            prop_assert!(inside(ea.add(eb), &(&a + &b)));
            prop_assert!(inside(ea.sub(eb), &(&a - &b)));
            prop_assert!(inside(ea.mul(eb), &(&a * &b)));
            if b > qi(0) {
                prop_assert!(inside(ea.div_pos(eb), &(&a / &b)));
            }
        }
    }
}
