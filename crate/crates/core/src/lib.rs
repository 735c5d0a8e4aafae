//! Certified computations for self-similar sets on the line: attractor
//! geometry, self-similar measures, rational ball covers, counting and
//! dimension estimators, and the nested-ball construction behind
//! lower bounds for badly-approximable-style sets.
//!
//! All set-membership answers are exact: float fast paths are backed by
//! rigorous outward rounding and fall back to rational arithmetic.

pub mod approx;
pub mod covers;
pub mod error;
pub mod estimators;
pub mod fit;
pub mod ifs;
pub mod interval;
pub mod mass;
pub mod measure;
pub mod rational;
pub mod scheme;
mod walk;

pub use approx::ApproxSpec;
pub use covers::{CountRow, CoverLevel, Family, RationalBall};
pub use error::{Error, Result};
pub use ifs::{Affine1D, Dimension, HitCertificate, HitKind, Ifs1D, Word};
pub use interval::{IntervalQ, TriBool};
pub use measure::{MeasureEnclosure, RegularityEstimate, SelfSimilarMeasure};
pub use rational::Q;
pub use scheme::{CantorNode, CantorTree, SchemeParams};

/// Serde adapter storing rationals as `"num/den"` strings.
pub mod serde_q {
    use crate::rational::{fmt_q, parse_q, Q};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_q(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(serde::de::Error::custom)
    }
}
