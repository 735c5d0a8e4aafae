use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::rational::{fmt_q, Q};

/// A real interval with exact rational endpoints; each end may be open or closed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalQ {
    #[serde(with = "crate::serde_q")]
    pub lo: Q,
    #[serde(with = "crate::serde_q")]
    pub hi: Q,
    pub lo_open: bool,
    pub hi_open: bool,
}

/// Three-valued answer for questions that exact search may leave open.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TriBool<W> {
    Yes(W),
    No,
    Undecided { depth: u32 },
}

impl<W> TriBool<W> {
    pub fn is_yes(&self) -> bool {
        matches!(self, TriBool::Yes(_))
    }
}

impl IntervalQ {
    pub fn closed(lo: Q, hi: Q) -> Self {
        IntervalQ {
            lo,
            hi,
            lo_open: false,
            hi_open: false,
        }
    }

    pub fn open(lo: Q, hi: Q) -> Self {
        IntervalQ {
            lo,
            hi,
            lo_open: true,
            hi_open: true,
        }
    }

    /// Open ball `(center - radius, center + radius)`.
    pub fn ball(center: &Q, radius: &Q) -> Self {
        Self::open(center - radius, center + radius)
    }

    pub fn closed_ball(center: &Q, radius: &Q) -> Self {
        Self::closed(center - radius, center + radius)
    }

    pub fn interior(&self) -> Self {
        Self::open(self.lo.clone(), self.hi.clone())
    }

    pub fn closure(&self) -> Self {
        Self::closed(self.lo.clone(), self.hi.clone())
    }

    pub fn width(&self) -> Q {
        if self.is_empty() {
            Q::zero()
        } else {
            &self.hi - &self.lo
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn contains_point(&self, x: &Q) -> bool {
        let lo_ok = if self.lo_open {
            *x > self.lo
        } else {
            *x >= self.lo
        };
        let hi_ok = if self.hi_open {
            *x < self.hi
        } else {
            *x <= self.hi
        };
        lo_ok && hi_ok
    }

    pub fn meets(&self, o: &IntervalQ) -> bool {
        if self.is_empty() || o.is_empty() {
            return false;
        }
        let a = if self.lo_open || o.hi_open {
            self.lo < o.hi
        } else {
            self.lo <= o.hi
        };
        let b = if o.lo_open || self.hi_open {
            o.lo < self.hi
        } else {
            o.lo <= self.hi
        };
        a && b
    }

    /// `inner ⊆ self`; the empty set is contained in everything.
    pub fn contains(&self, inner: &IntervalQ) -> bool {
        if inner.is_empty() {
            return true;
        }
        let lo_ok = if self.lo_open && !inner.lo_open {
            inner.lo > self.lo
        } else {
            inner.lo >= self.lo
        };
        let hi_ok = if self.hi_open && !inner.hi_open {
            inner.hi < self.hi
        } else {
            inner.hi <= self.hi
        };
        lo_ok && hi_ok
    }

    /// Exact gap between two disjoint intervals; zero when they touch or overlap.
    pub fn gap(&self, o: &IntervalQ) -> Q {
        let g1 = &o.lo - &self.hi;
        let g2 = &self.lo - &o.hi;
        let g = if g1 > g2 { g1 } else { g2 };
        if g > Q::zero() {
            g
        } else {
            Q::zero()
        }
    }
}

impl std::fmt::Display for IntervalQ {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { '(' } else { '[' },
            fmt_q(&self.lo),
            fmt_q(&self.hi),
            if self.hi_open { ')' } else { ']' }
        )
    }
}
