//! Iterated function systems of contracting similarities on the line.

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interval::{IntervalQ, TriBool};
use crate::rational::{to_f64, FInterval, Q};
use crate::walk::{self, FAffine, Found, Span};

/// `x ↦ ratio·x + offset`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affine1D {
    #[serde(rename = "c", with = "crate::serde_q")]
    pub ratio: Q,
    #[serde(rename = "b", with = "crate::serde_q")]
    pub offset: Q,
}

impl Affine1D {
    pub fn new(ratio: Q, offset: Q) -> Self {
        Affine1D { ratio, offset }
    }

    pub fn identity() -> Self {
        Affine1D::new(Q::one(), Q::zero())
    }

    pub fn apply(&self, x: &Q) -> Q {
        &self.ratio * x + &self.offset
    }

    /// `self ∘ inner`
    pub fn compose(&self, inner: &Affine1D) -> Affine1D {
        Affine1D {
            ratio: &self.ratio * &inner.ratio,
            offset: &self.ratio * &inner.offset + &self.offset,
        }
    }

    pub fn fixed_point(&self) -> Q {
        &self.offset / (Q::one() - &self.ratio)
    }

    /// Image of an interval; orientation is preserved because ratios are positive.
    pub fn image(&self, iv: &IntervalQ) -> IntervalQ {
        IntervalQ {
            lo: self.apply(&iv.lo),
            hi: self.apply(&iv.hi),
            lo_open: iv.lo_open,
            hi_open: iv.hi_open,
        }
    }
}

/// Finite word over the map alphabet. Stored 0-based; printed 1-based and
/// dot separated (`1.2.2`), the empty word prints as the empty string.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(pub Vec<u16>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn from_one_based(symbols: &[u16]) -> Self {
        Word(symbols.iter().map(|&s| s - 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[u16] {
        &self.0
    }

    /// Prefix-or-equal.
    pub fn is_prefix_of(&self, other: &Word) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn truncated(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{}", s + 1)?;
        }
        Ok(())
    }
}

impl FromStr for Word {
    type Err = Error;
    fn from_str(s: &str) -> Result<Word> {
        if s.trim().is_empty() {
            return Ok(Word::empty());
        }
        s.split('.')
            .map(|t| match t.trim().parse::<u16>() {
                Ok(k) if k >= 1 => Ok(k - 1),
                _ => Err(Error::Parse(format!("bad word symbol {t:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Word, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a hit was certified: a whole cylinder inside the target, or one of its
/// endpoints (an attractor point) inside the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitKind {
    Cylinder,
    LeftEndpoint,
    RightEndpoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HitCertificate {
    pub word: Word,
    pub kind: HitKind,
}

impl HitCertificate {
    /// Re-checks the certificate against `target` in exact arithmetic.
    pub fn verify(&self, ifs: &Ifs1D, target: &IntervalQ) -> bool {
        let Ok(f) = ifs.compose_word(&self.word) else {
            return false;
        };
        let h = ifs.hull();
        match self.kind {
            HitKind::Cylinder => target.contains(&f.image(&h)),
            HitKind::LeftEndpoint => target.contains_point(&f.apply(&h.lo)),
            HitKind::RightEndpoint => target.contains_point(&f.apply(&h.hi)),
        }
    }

    /// A word of length at least `len` whose coding point lies in the certified part of the target.
    pub fn code(&self, ifs: &Ifs1D, len: usize) -> Word {
        let pad = match self.kind {
            HitKind::Cylinder => 0,
            HitKind::LeftEndpoint => ifs.hull_symbols().0,
            HitKind::RightEndpoint => ifs.hull_symbols().1,
        };
        let mut w = self.word.0.clone();
        while w.len() < len {
            w.push(pad);
        }
        Word(w)
    }
}

/// Bracketed similarity dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dimension {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ifs1D {
    maps: Vec<Affine1D>,
    hull: IntervalQ,
    hull_symbols: (u16, u16),
    fmaps: Vec<FAffine>,
    fhull: (FInterval, FInterval),
    c_min: f64,
    c_max: f64,
}

impl Ifs1D {
    /// Validates ratios in (0,1) and sorts maps ascending by ratio, ties by offset.
    pub fn new(mut maps: Vec<Affine1D>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::invalid("maps", "at least one map is required"));
        }
        if maps.len() > u16::MAX as usize {
            return Err(Error::invalid("maps", "too many maps"));
        }
        for (k, m) in maps.iter().enumerate() {
            if !(m.ratio > Q::zero() && m.ratio < Q::one()) {
                return Err(Error::invalid(
                    &format!("maps[{k}].c"),
                    format!("ratio {} is not in (0,1)", crate::rational::fmt_q(&m.ratio)),
                ));
            }
        }
        maps.sort_by(|a, b| a.ratio.cmp(&b.ratio).then_with(|| a.offset.cmp(&b.offset)));
        let fixed: Vec<Q> = maps.iter().map(Affine1D::fixed_point).collect();
        let (mut ilo, mut ihi) = (0usize, 0usize);
        for k in 1..fixed.len() {
            if fixed[k] < fixed[ilo] {
                ilo = k;
            }
            if fixed[k] > fixed[ihi] {
                ihi = k;
            }
        }
        let hull = IntervalQ::closed(fixed[ilo].clone(), fixed[ihi].clone());
        let fmaps = maps
            .iter()
            .map(|m| FAffine {
                c: FInterval::of(&m.ratio),
                b: FInterval::of(&m.offset),
            })
            .collect();
        let fhull = (FInterval::of(&hull.lo), FInterval::of(&hull.hi));
        let c_min = to_f64(&maps[0].ratio);
        let c_max = to_f64(&maps[maps.len() - 1].ratio);
        Ok(Ifs1D {
            maps,
            hull,
            hull_symbols: (ilo as u16, ihi as u16),
            fmaps,
            fhull,
            c_min,
            c_max,
        })
    }

    pub fn maps(&self) -> &[Affine1D] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Exact smallest ratio.
    pub fn ratio_min(&self) -> &Q {
        &self.maps[0].ratio
    }

    /// Convex hull of the attractor: spanned by the extreme fixed points.
    pub fn attractor_hull(&self) -> IntervalQ {
        self.hull.clone()
    }

    pub fn hull(&self) -> &IntervalQ {
        &self.hull
    }

    pub fn diam(&self) -> Q {
        self.hull.width()
    }

    /// Symbols whose fixed points are the left and right hull endpoints.
    pub fn hull_symbols(&self) -> (u16, u16) {
        self.hull_symbols
    }

    pub(crate) fn fmaps(&self) -> &[FAffine] {
        &self.fmaps
    }

    pub(crate) fn fhull(&self) -> (FInterval, FInterval) {
        self.fhull
    }

    pub fn compose_word(&self, w: &Word) -> Result<Affine1D> {
        if let Some(&s) = w.0.iter().find(|&&s| s as usize >= self.len()) {
            return Err(Error::invalid(
                "word",
                format!("symbol {} out of range 1..={}", s + 1, self.len()),
            ));
        }
        Ok(self.compose_raw(&w.0))
    }

    /// Left-to-right composition `f_{w1} ∘ … ∘ f_{wk}`; symbols are trusted.
    pub(crate) fn compose_raw(&self, w: &[u16]) -> Affine1D {
        let mut f = Affine1D::identity();
        for &s in w {
            let m = &self.maps[s as usize];
            f = Affine1D {
                offset: &f.ratio * &m.offset + &f.offset,
                ratio: &f.ratio * &m.ratio,
            };
        }
        f
    }

    /// Product of ratios along a word.
    pub fn word_ratio(&self, w: &Word) -> Q {
        w.0.iter()
            .fold(Q::one(), |acc, &s| acc * &self.maps[s as usize].ratio)
    }

    /// Root of `Σ c_i^s = 1` by bisection. The root lies in
    /// `[0, ln l / ln(1/c_max)]` because `Σ c_i^s ≤ l·c_max^s`.
    pub fn solve_dimension(&self, tol: f64) -> Dimension {
        let l = self.len();
        if l == 1 {
            return Dimension {
                value: 0.0,
                lo: 0.0,
                hi: 0.0,
            };
        }
        let logs: Vec<f64> = self.maps.iter().map(|m| to_f64(&m.ratio).ln()).collect();
        let g = |s: f64| logs.iter().map(|lc| (lc * s).exp()).sum::<f64>() - 1.0;
        let mut lo = 0.0f64;
        let mut hi = (l as f64).ln() / (-self.c_max.ln());
        let tol = tol.max(1e-15);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Absorb rounding in the sum of exponentials.
        let slack = 1e-14 * (1.0 + hi);
        Dimension {
            value: 0.5 * (lo + hi),
            lo: (lo - slack).max(0.0),
            hi: hi + slack,
        }
    }

    /// Default open set: the hull interior, or a unit neighbourhood when the hull is a point.
    pub fn default_open_set(&self) -> IntervalQ {
        if self.hull.lo == self.hull.hi {
            IntervalQ::open(&self.hull.lo - Q::one(), &self.hull.hi + Q::one())
        } else {
            self.hull.interior()
        }
    }

    /// Open set condition for the interior of `u`: images stay inside and are pairwise disjoint.
    pub fn check_osc(&self, u: &IntervalQ) -> bool {
        let u = u.interior();
        if u.is_empty() {
            return false;
        }
        let images: Vec<IntervalQ> = self.maps.iter().map(|m| m.image(&u)).collect();
        if !images.iter().all(|im| u.contains(im)) {
            return false;
        }
        let mut sorted: Vec<&IntervalQ> = images.iter().collect();
        sorted.sort_by(|a, b| a.lo.cmp(&b.lo));
        sorted.windows(2).all(|w| !w[0].meets(w[1]))
    }

    /// Closed interval containing every attractor point coded by an extension of `prefix`.
    pub fn code_point(&self, prefix: &Word) -> Result<IntervalQ> {
        Ok(self.compose_word(prefix)?.image(&self.hull))
    }

    /// Default search depth for a target of the given width: deep enough that
    /// cylinders are a couple hundred times narrower than the target.
    pub fn default_depth_cap(&self, width: &Q) -> u32 {
        let d = self.diam();
        if d.is_zero() || width.is_zero() {
            return 64;
        }
        let ratio = crate::rational::log2_abs(width) - crate::rational::log2_abs(&d);
        let levels = (ratio * std::f64::consts::LN_2 / self.c_max.ln()).ceil();
        (levels.max(0.0) as u32) + 8
    }

    /// Whether the attractor meets `target`, with a hit certificate on `Yes`.
    pub fn intersects_attractor(
        &self,
        target: &IntervalQ,
        depth_cap: Option<u32>,
    ) -> TriBool<HitCertificate> {
        self.intersects_bracketed(target, target, &Word::empty(), depth_cap)
    }

    /// Like [`Ifs1D::intersects_attractor`] but restricted to the attractor
    /// piece under `start`, certifying hits against `inner` and misses
    /// against `outer` (`inner ⊆ outer`).
    pub fn intersects_bracketed(
        &self,
        inner: &IntervalQ,
        outer: &IntervalQ,
        start: &Word,
        depth_cap: Option<u32>,
    ) -> TriBool<HitCertificate> {
        if inner.is_empty() && outer.is_empty() {
            return TriBool::No;
        }
        let cap = depth_cap
            .unwrap_or_else(|| self.default_depth_cap(&inner.width()))
            .max(start.len() as u32);
        let si = Span::from_interval(inner);
        let so = Span::from_interval(outer);
        let frame = walk::frame_of(self, &start.0, None);
        match walk::search(self, &start.0, frame, &si, &so, cap, &mut 0) {
            Found::Yes(w, kind) => {
                let cert = HitCertificate {
                    word: Word(w),
                    kind,
                };
                assert!(
                    cert.verify(self, inner),
                    "hit certificate failed exact re-verification"
                );
                TriBool::Yes(cert)
            }
            Found::No => TriBool::No,
            Found::Undecided => TriBool::Undecided { depth: cap },
        }
    }

    /// The first truncation `β` of `target_code` at or beyond `base` whose
    /// cylinder diameter lies in `[c_min·q, q]`.
    pub fn find_branch(&self, base: &Word, target_code: &Word, q: &Q) -> Result<Word> {
        if !base.is_prefix_of(target_code) {
            return Err(Error::invalid(
                "target_code",
                "does not extend the base word",
            ));
        }
        if *q <= Q::zero() {
            return Err(Error::invalid("q", "must be positive"));
        }
        let diam = self.diam();
        let lower = self.ratio_min() * q;
        let mut ratio = self.word_ratio(base);
        let n0 = base.len();
        for n in n0..=target_code.len() {
            if n > n0 {
                ratio *= &self.maps[target_code.0[n - 1] as usize].ratio;
            }
            let dn = &ratio * &diam;
            if dn <= *q {
                if dn >= lower {
                    return Ok(target_code.truncated(n));
                }
                return Err(Error::invalid(
                    "q",
                    "base cylinder is already narrower than c_min·q",
                ));
            }
        }
        Err(Error::invalid(
            "target_code",
            "too short to reach a cylinder of diameter at most q",
        ))
    }
}
