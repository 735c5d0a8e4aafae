//! Approximation functions ψ sampled at dyadic arguments `2^m`.
//!
//! Power laws `ψ_v(q) = q^{-v}` are irrational at most arguments, so each
//! evaluation returns an exact rational bracket `[lo, hi] ∋ ψ(2^m)` with
//! relative width below `2^-70`. Callers use `lo` when asserting that a
//! point is inside a ball and `hi` when asserting that it is outside.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rational::{pow2, Q};

const ROOT_BITS: i64 = 72;
const MAX_EXPONENT_DEN: u32 = 4096;

#[derive(Clone, Debug, PartialEq)]
pub enum ApproxKind {
    PowerLaw {
        v: Q,
    },
    /// Exact values `ψ(2^m)` keyed by `m`.
    Table {
        values: BTreeMap<u32, Q>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxSpec {
    pub kind: ApproxKind,
    pub scale: Q,
}

impl ApproxSpec {
    pub fn power_law(v: Q) -> Result<Self> {
        if !v.is_positive() {
            return Err(Error::invalid("v", "exponent must be positive"));
        }
        let den = v.denom().to_u32().unwrap_or(u32::MAX);
        if den > MAX_EXPONENT_DEN {
            return Err(Error::invalid(
                "v",
                format!("exponent denominator above {MAX_EXPONENT_DEN}"),
            ));
        }
        Ok(ApproxSpec {
            kind: ApproxKind::PowerLaw { v },
            scale: Q::one(),
        })
    }

    pub fn table(values: BTreeMap<u32, Q>) -> Result<Self> {
        let mut prev: Option<&Q> = None;
        for (m, val) in &values {
            if val.is_negative() {
                return Err(Error::invalid("values", format!("ψ(2^{m}) is negative")));
            }
            if prev.is_some_and(|p| val > p) {
                return Err(Error::invalid(
                    "values",
                    format!("ψ increases at 2^{m}; must be non-increasing"),
                ));
            }
            prev = Some(val);
        }
        Ok(ApproxSpec {
            kind: ApproxKind::Table { values },
            scale: Q::one(),
        })
    }

    pub fn scaled(mut self, factor: Q) -> Result<Self> {
        if factor.is_negative() {
            return Err(Error::invalid("scale", "must be non-negative"));
        }
        self.scale *= factor;
        Ok(self)
    }

    pub fn exponent(&self) -> Option<&Q> {
        match &self.kind {
            ApproxKind::PowerLaw { v } => Some(v),
            ApproxKind::Table { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.scale.is_zero()
    }

    /// Rational bracket `(lo, hi)` of `scale · ψ(2^m)`.
    pub fn bracket(&self, m: u32) -> Result<(Q, Q)> {
        let (lo, hi) = match &self.kind {
            ApproxKind::PowerLaw { v } => pow2_neg_bracket(&(v * Q::from_integer(m.into()))),
            ApproxKind::Table { values } => {
                let x = values
                    .get(&m)
                    .ok_or_else(|| Error::invalid("m", format!("no table value for 2^{m}")))?;
                (x.clone(), x.clone())
            }
        };
        Ok((&lo * &self.scale, &hi * &self.scale))
    }

    /// `log2 ψ(2^m)` (including the scale) as a float.
    pub fn log2_at(&self, m: u32) -> Result<f64> {
        let (lo, hi) = self.bracket(m)?;
        if hi.is_zero() {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(0.5 * (crate::rational::log2_abs(&lo) + crate::rational::log2_abs(&hi)))
    }
}

/// Bracket of `2^{-x}` for rational `x ≥ 0`; exact when `x` is an integer.
pub fn pow2_neg_bracket(x: &Q) -> (Q, Q) {
    let a = x.numer();
    let b = x.denom();
    let (n, f) = a.div_mod_floor(b);
    let n = n.to_i64().expect("exponent fits i64");
    if f.is_zero() {
        let v = pow2(-n);
        return (v.clone(), v);
    }
    // 2^{-x} = 2^{-n-1} · 2^{(b-f)/b}, and Y = ⌊2^{(b-f)/b + P}⌋ via an integer b-th root.
    let bu = b.to_u32().expect("denominator checked at construction");
    let e = (b - &f).to_u64().unwrap() + (ROOT_BITS as u64) * bu as u64;
    let y: BigUint = (BigUint::one() << e as usize).nth_root(bu);
    let y = BigInt::from(y);
    let unit = pow2(-n - 1 - ROOT_BITS);
    let lo = Q::from_integer(y.clone()) * &unit;
    let hi = Q::from_integer(y + 1) * &unit;
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, to_f64};
    use proptest::prelude::*;

    #[test]
    fn integer_exponents_are_exact() {
        let s = ApproxSpec::power_law(q(2, 1)).unwrap();
        assert_eq!(s.bracket(3).unwrap(), (q(1, 64), q(1, 64)));
        let s = ApproxSpec::power_law(q(3, 2)).unwrap();
        assert_eq!(s.bracket(2).unwrap(), (q(1, 8), q(1, 8)));
    }

    #[test]
    fn irrational_values_are_bracketed_tightly() {
        let s = ApproxSpec::power_law(q(3, 2)).unwrap();
        let (lo, hi) = s.bracket(1).unwrap();
        // 2^{-3/2} = 1/(2√2): lo² ≤ 1/8 ≤ hi².
        assert!(&lo * &lo <= q(1, 8) && q(1, 8) <= &hi * &hi);
        assert!(to_f64(&((&hi - &lo) / &lo)) < 2f64.powi(-70));
    }

    #[test]
    fn scale_multiplies_and_zero_scale_vanishes() {
        let s = ApproxSpec::power_law(q(2, 1))
            .unwrap()
            .scaled(q(1, 3))
            .unwrap();
        assert_eq!(s.bracket(1).unwrap().0, q(1, 12));
        let z = ApproxSpec::power_law(q(2, 1))
            .unwrap()
            .scaled(q(0, 1))
            .unwrap();
        assert!(z.is_zero());
        assert_eq!(z.bracket(5).unwrap(), (q(0, 1), q(0, 1)));
    }

    #[test]
    fn tables_must_not_increase() {
        let ok: BTreeMap<u32, Q> = [(1, q(1, 2)), (2, q(1, 4))].into();
        assert!(ApproxSpec::table(ok).is_ok());
        let bad: BTreeMap<u32, Q> = [(1, q(1, 4)), (2, q(1, 2))].into();
        assert!(ApproxSpec::table(bad).is_err());
        let t = ApproxSpec::table([(3, q(1, 9))].into()).unwrap();
        assert!(t.bracket(4).is_err());
    }

    proptest! {
        #[test]
        fn bracket_contains_the_power(a in 1i64..40, b in 1i64..12, m in 0u32..40) {
            // Check lo^b ≤ 2^{-m a} ≤ hi^b exactly.
            let s = ApproxSpec::power_law(q(a, b)).unwrap();
            let (lo, hi) = s.bracket(m).unwrap();
            let target = pow2(-(m as i64) * a);
            let pw = |x: &Q| num_traits::pow(x.clone(), b as usize);
            prop_assert!(pw(&lo) <= target && target <= pw(&hi));
            prop_assert!(lo <= hi && lo > Q::zero());
        }

        #[test]
        fn power_law_is_non_increasing(a in 1i64..40, b in 1i64..12, m in 0u32..40) {
            let s = ApproxSpec::power_law(q(a, b)).unwrap();
            prop_assert!(s.bracket(m + 1).unwrap().1 <= s.bracket(m).unwrap().0);
        }
    }
}
