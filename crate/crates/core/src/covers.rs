//! Families of rational balls `B(p/q, ψ(2^m)/q)` with primitive `(p, q)`:
//! enumeration, classification against the attractor, exact disjointness
//! checks, and per-level counts.
//!
//! Family A at level `m` takes `q ∈ [2^m, 2^{m+1})`, family D takes
//! `q ∈ [2^{m-1}, 2^m)`; both use the radius numerator `ψ(2^m)`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::approx::ApproxSpec;
use crate::error::{Error, Result};
use crate::ifs::{HitCertificate, Ifs1D};
use crate::interval::{IntervalQ, TriBool};
use crate::rational::{ceil_int, floor_int, q as rq, qi, to_f64, FInterval, Q};
use crate::walk::{self, meets, Found, Frame, Span, Step};

/// Largest supported level: keeps `p` and `q` exactly representable in `f64`.
pub const MAX_LEVEL: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    A,
    D,
}

impl Family {
    /// Half-open denominator range `[lo, hi)` at level `m`.
    pub fn q_range(self, m: u32) -> (u64, u64) {
        match self {
            Family::A => (1 << m, 1 << (m + 1)),
            Family::D => (1 << (m.max(1) - 1), 1 << m),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::A => "A",
            Family::D => "D",
        })
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Family> {
        match s.trim() {
            "A" | "a" => Ok(Family::A),
            "D" | "d" => Ok(Family::D),
            _ => Err(Error::invalid(
                "family",
                format!("expected A or D, got {s:?}"),
            )),
        }
    }
}

/// Open ball centred at `p/q`; the true radius `ψ(2^m)/q` lies in `[radius_lo, radius_hi]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalBall {
    pub p: i64,
    pub q: u64,
    pub m: u32,
    pub family: Family,
    pub radius_lo: Q,
    pub radius_hi: Q,
}

impl RationalBall {
    pub fn new(p: i64, q: u64, m: u32, family: Family, psi: &(Q, Q)) -> Self {
        let qq = qi(q as i64);
        RationalBall {
            p,
            q,
            m,
            family,
            radius_lo: &psi.0 / &qq,
            radius_hi: &psi.1 / &qq,
        }
    }

    pub fn center(&self) -> Q {
        rq(self.p, self.q as i64)
    }

    /// Open ball with the lower radius: points here are certainly inside.
    pub fn inner(&self) -> IntervalQ {
        IntervalQ::ball(&self.center(), &self.radius_lo)
    }

    /// Open ball with the upper radius: points outside are certainly outside.
    pub fn outer(&self) -> IntervalQ {
        IntervalQ::ball(&self.center(), &self.radius_hi)
    }

    pub fn closed_ball(&self, radius: &Q) -> IntervalQ {
        IntervalQ::closed_ball(&self.center(), radius)
    }
}

/// Balls at one level split by how they relate to the attractor.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverLevel {
    pub m: u32,
    pub hits: Vec<(RationalBall, HitCertificate)>,
    pub misses: Vec<RationalBall>,
    pub undecided: Vec<RationalBall>,
}

impl CoverLevel {
    pub fn len(&self) -> usize {
        self.hits.len() + self.misses.len() + self.undecided.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_level(m: u32) -> Result<()> {
    if m == 0 || m > MAX_LEVEL {
        return Err(Error::invalid(
            "m",
            format!("level must be in 1..={MAX_LEVEL}"),
        ));
    }
    Ok(())
}

/// Exact range of numerators `p` whose ball of radius `psi/q` around `p/q`
/// meets the window; `None` when empty.
struct PRange {
    lo_num: BigInt,
    hi_num: BigInt,
    psi_num: BigInt,
    den: BigInt,
}

impl PRange {
    /// With `W = [L, R]`: `p/q - ψ/q < R` and `p/q + ψ/q > L`, i.e. `p ∈ (qL - ψ, qR + ψ)`.
    fn new(window: &IntervalQ, psi: &Q) -> Self {
        let den = window.lo.denom() * window.hi.denom() * psi.denom();
        let scale = |x: &Q| x.numer() * (&den / x.denom());
        PRange {
            lo_num: scale(&window.lo),
            hi_num: scale(&window.hi),
            psi_num: scale(psi),
            den,
        }
    }

    fn for_q(&self, q: u64) -> Option<(i64, i64)> {
        let qb = BigInt::from(q);
        let lo: BigInt = (&qb * &self.lo_num - &self.psi_num).div_floor(&self.den) + 1;
        let hi_n = &qb * &self.hi_num + &self.psi_num;
        let hi: BigInt = -((-hi_n).div_floor(&self.den)) - 1;
        let (lo, hi) = (lo.to_i64()?, hi.to_i64()?);
        (lo <= hi).then_some((lo, hi))
    }
}

/// All primitive balls of the family at level `m` meeting `window` (upper
/// radius, so nothing is missed), sorted by `(q, p)`.
pub fn enumerate_balls(
    spec: &ApproxSpec,
    m: u32,
    family: Family,
    window: &IntervalQ,
) -> Result<Vec<RationalBall>> {
    check_level(m)?;
    if spec.is_zero() || window.is_empty() {
        return Ok(Vec::new());
    }
    let psi = spec.bracket(m)?;
    let range = PRange::new(window, &psi.1);
    let (q_lo, q_hi) = family.q_range(m);
    let mut out = Vec::new();
    for q in q_lo..q_hi {
        if let Some((a, b)) = range.for_q(q) {
            for p in a..=b {
                if p.gcd(&(q as i64)) == 1 {
                    out.push(RationalBall::new(p, q, m, family, &psi));
                }
            }
        }
    }
    Ok(out)
}

/// Classifies each ball against the attractor. `depth` caps the search;
/// `None` uses the default cap for the ball's width.
pub fn filter_attractor_hits(
    ifs: &Ifs1D,
    balls: &[RationalBall],
    depth: Option<u32>,
) -> CoverLevel {
    let m = balls.first().map_or(0, |b| b.m);
    let verdicts: Vec<TriBool<HitCertificate>> = balls
        .par_iter()
        .map(|b| {
            let inner = b.inner();
            ifs.intersects_bracketed(&inner, &b.outer(), &crate::ifs::Word::empty(), depth)
        })
        .collect();
    let mut level = CoverLevel {
        m,
        hits: Vec::new(),
        misses: Vec::new(),
        undecided: Vec::new(),
    };
    for (b, v) in balls.iter().zip(verdicts) {
        match v {
            TriBool::Yes(cert) => level.hits.push((b.clone(), cert)),
            TriBool::No => level.misses.push(b.clone()),
            TriBool::Undecided { .. } => level.undecided.push(b.clone()),
        }
    }
    level
}

#[derive(Clone, Debug, PartialEq)]
pub struct Disjointness {
    pub disjoint: bool,
    /// Smallest gap between closed neighbours in centre order; negative when two overlap.
    pub min_gap: Option<Q>,
    pub balls: u64,
}

/// Exact pairwise disjointness of the closed balls (upper radii). Checking
/// neighbours in centre order suffices: if two balls overlap, the union
/// covers every centre between them, so some neighbouring pair overlaps.
pub fn check_pairwise_disjoint(balls: &[RationalBall]) -> Disjointness {
    let mut idx: Vec<usize> = (0..balls.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&balls[a], &balls[b]);
        (x.p as i128 * y.q as i128).cmp(&(y.p as i128 * x.q as i128))
    });
    let mut min_gap: Option<Q> = None;
    for w in idx.windows(2) {
        let (x, y) = (&balls[w[0]], &balls[w[1]]);
        let gap = y.center() - x.center() - &x.radius_hi - &y.radius_hi;
        if min_gap.as_ref().is_none_or(|g| gap < *g) {
            min_gap = Some(gap);
        }
    }
    Disjointness {
        disjoint: min_gap.as_ref().is_none_or(|g| g.is_positive()),
        min_gap,
        balls: balls.len() as u64,
    }
}

/// [`check_pairwise_disjoint`] for a whole level without materialising it:
/// walks the Farey sequence of order `q_hi - 1` and checks consecutive family members.
pub fn check_level_disjoint(
    spec: &ApproxSpec,
    m: u32,
    family: Family,
    window: &IntervalQ,
) -> Result<Disjointness> {
    check_level(m)?;
    if spec.is_zero() || window.is_empty() {
        return Ok(Disjointness {
            disjoint: true,
            min_gap: None,
            balls: 0,
        });
    }
    let psi = spec.bracket(m)?.1;
    let range = PRange::new(window, &psi);
    let (q_lo, q_hi) = family.q_range(m);
    let n = q_hi - 1;
    let bounds: Vec<Option<(i64, i64)>> = (0..q_hi)
        .map(|q| if q < q_lo { None } else { range.for_q(q) })
        .collect();
    let psi_n = psi.numer().clone();
    let psi_d = psi.denom().clone();
    let ratio = to_f64(&(Q::from_integer(psi_d.clone()) / Q::from_integer(psi_n.clone())));

    // Neighbours p1/q1 < p2/q2 are disjoint iff Δ = p2 q1 - p1 q2 > ψ (q1 + q2).
    let mut count = 0u64;
    let mut prev: Option<(i64, u64)> = None;
    let mut disjoint = true;
    let mut best: Vec<(i128, u64, u64)> = Vec::new();
    let mut best_f = f64::INFINITY;
    let mut visit = |p: i64, q: u64| {
        let Some((a, b)) = bounds[q as usize] else {
            return;
        };
        if p < a || p > b {
            return;
        }
        count += 1;
        if let Some((p1, q1)) = prev {
            let delta = p as i128 * q1 as i128 - p1 as i128 * q as i128;
            let sum = (q1 + q) as f64;
            let scaled = delta as f64 * ratio;
            let ok = if scaled > sum * (1.0 + 1e-9) {
                true
            } else if scaled < sum * (1.0 - 1e-9) {
                false
            } else {
                BigInt::from(delta) * &psi_d > &psi_n * BigInt::from(q1 + q)
            };
            disjoint &= ok;
            // Track every near-minimal gap in floats; the exact minimum is taken at the end.
            let g = (delta as f64 - sum / ratio) / (q1 as f64 * q as f64);
            let tol = best_f.abs() * 1e-9 + 1e-300;
            if best.is_empty() || g < best_f - tol {
                best_f = g;
                best.clear();
                best.push((delta, q1, q));
            } else if g <= best_f + tol {
                best.push((delta, q1, q));
            }
        }
        prev = Some((p, q));
    };
    let k0 = floor_int(&window.lo).to_i64().unwrap() - 1;
    let k1 = ceil_int(&window.hi).to_i64().unwrap() + 1;
    for k in k0..k1 {
        // Farey sequence of order n on [k, k+1), by the next-term recurrence.
        let (mut a, mut b, mut c, mut d) = (0i64, 1i64, 1i64, n as i64);
        visit(k, 1);
        while c <= d && !(c == 1 && d == 1) {
            visit(c + k * d, d as u64);
            let t = (n as i64 + b) / d;
            let (e, f) = (t * c - a, t * d - b);
            (a, b, c, d) = (c, d, e, f);
        }
    }
    visit(k1, 1);
    let min_gap = best
        .into_iter()
        .map(|(delta, q1, q2)| {
            (Q::from_integer(BigInt::from(delta)) - &psi * qi((q1 + q2) as i64))
                / qi((q1 * q2) as i64)
        })
        .min();
    Ok(Disjointness {
        disjoint,
        min_gap,
        balls: count,
    })
}

/// One row of a count table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountRow {
    pub m: u32,
    pub count_all: u64,
    pub count_hits: u64,
    pub count_undecided: u64,
    /// `log2` of the largest radius at the level, `ψ_hi(2^m) / q_min`.
    pub log2_radius_hi: f64,
}

/// Work done by the count kernel, for checking that cost tracks the attractor.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScanStats {
    pub leaves: u64,
    pub candidates: u64,
    pub balls_tested: u64,
    pub cylinder_visits: u64,
}

/// Classified balls of one level, as `(p, q)` pairs sorted by `(q, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelScan {
    pub m: u32,
    pub family: Family,
    pub count_all: u64,
    pub hits: Vec<(i64, u64)>,
    pub undecided: Vec<(i64, u64)>,
    pub stats: ScanStats,
}

impl LevelScan {
    pub fn row(&self, spec: &ApproxSpec) -> Result<CountRow> {
        let (q_lo, _) = self.family.q_range(self.m);
        let log2_radius_hi = if spec.is_zero() {
            f64::NEG_INFINITY
        } else {
            crate::rational::log2_abs(&spec.bracket(self.m)?.1) - (q_lo as f64).log2()
        };
        Ok(CountRow {
            m: self.m,
            count_all: self.count_all,
            count_hits: self.hits.len() as u64,
            count_undecided: self.undecided.len() as u64,
            log2_radius_hi,
        })
    }

    pub fn hit_and_undecided_balls(&self, spec: &ApproxSpec) -> Result<Vec<RationalBall>> {
        if self.hits.is_empty() && self.undecided.is_empty() {
            return Ok(Vec::new());
        }
        let psi = spec.bracket(self.m)?;
        let mut pairs: Vec<(u64, i64)> = self
            .hits
            .iter()
            .chain(&self.undecided)
            .map(|&(p, q)| (q, p))
            .collect();
        pairs.sort_unstable();
        Ok(pairs
            .into_iter()
            .map(|(q, p)| RationalBall::new(p, q, self.m, self.family, &psi))
            .collect())
    }
}

/// Smallest prime factor table for `0..n`.
fn spf_table(n: usize) -> Vec<u32> {
    let mut spf = vec![0u32; n.max(2)];
    for i in 2..n {
        if spf[i] == 0 {
            let mut j = i;
            while j < n {
                if spf[j] == 0 {
                    spf[j] = i as u32;
                }
                j += i;
            }
        }
    }
    spf
}

/// Squarefree divisors of `q` with their Möbius signs.
fn mobius_divisors(mut q: u64, spf: &[u32]) -> Vec<(i64, i64)> {
    let mut divs = vec![(1i64, 1i64)];
    while q > 1 {
        let p = spf[q as usize] as u64;
        while q % p == 0 {
            q /= p;
        }
        let ext: Vec<(i64, i64)> = divs.iter().map(|&(d, mu)| (d * p as i64, -mu)).collect();
        divs.extend(ext);
    }
    divs
}

/// Number of integers in `[a, b]` coprime to the number whose Möbius divisors are given.
fn coprime_count(a: i64, b: i64, divs: &[(i64, i64)]) -> u64 {
    let f = |n: i64| -> i64 { divs.iter().map(|&(d, mu)| mu * n.div_euclid(d)).sum() };
    (f(b) - f(a - 1)) as u64
}

struct Leaf {
    word: Vec<u16>,
    frame: Frame,
    lo: f64,
    hi: f64,
}

/// Counts and classifies the balls of one level that meet both `window` and
/// the attractor hull. Candidate numerators come only from the shadows of
/// small cylinders, so cost follows the attractor rather than the window.
pub fn scan_level(
    ifs: &Ifs1D,
    spec: &ApproxSpec,
    m: u32,
    family: Family,
    window: &IntervalQ,
    depth: Option<u32>,
) -> Result<LevelScan> {
    check_level(m)?;
    let empty = LevelScan {
        m,
        family,
        count_all: 0,
        hits: Vec::new(),
        undecided: Vec::new(),
        stats: ScanStats::default(),
    };
    let hull = ifs.hull();
    let eff = IntervalQ::closed(
        window.lo.clone().max(hull.lo.clone()),
        window.hi.clone().min(hull.hi.clone()),
    );
    if spec.is_zero() || !window.meets(hull) || eff.is_empty() {
        return Ok(empty);
    }
    let psi = spec.bracket(m)?;
    let fpsi_hi = FInterval::of(&psi.1);
    let fpsi_lo = FInterval::of(&psi.0);
    let (q_lo, q_hi) = family.q_range(m);
    let range = PRange::new(&eff, &psi.1);

    // Leaves: cylinders about as wide as the balls, near the effective window.
    let r_max = &psi.1 / qi(q_lo as i64);
    let leaf_width = {
        let a = Q::from_integer(1.into()) / qi(q_lo as i64);
        let b = &r_max + &r_max;
        a.max(b)
    };
    let near = Span::from_interval(&IntervalQ::closed(
        &eff.lo - &r_max - &r_max,
        &eff.hi + &r_max + &r_max,
    ));
    let fwidth = to_f64(&leaf_width);
    let leaf_cap = ifs.default_depth_cap(&leaf_width);
    let mut leaves: Vec<Leaf> = Vec::new();
    walk::walk(ifs, &[], Frame::ROOT, None, |n| {
        if !meets(n.span, &near) {
            return Step::Prune;
        }
        if n.span.fhi.hi - n.span.flo.lo <= fwidth || n.depth >= leaf_cap {
            leaves.push(Leaf {
                word: n.word.to_vec(),
                frame: walk::frame_of(ifs, n.word, None),
                lo: n.span.flo.lo,
                hi: n.span.fhi.hi,
            });
            return Step::Prune;
        }
        Step::Descend
    });

    let cap = depth.unwrap_or_else(|| ifs.default_depth_cap(&(&psi.0 / qi(q_hi as i64) * qi(2))));
    let spf = spf_table(q_hi as usize);
    let psi_f = fpsi_hi.hi;

    let chunk = 256u64;
    let starts: Vec<u64> = (q_lo..q_hi).step_by(chunk as usize).collect();
    let parts: Vec<(u64, Vec<(i64, u64)>, Vec<(i64, u64)>, ScanStats)> = starts
        .par_iter()
        .map(|&s| {
            let mut all = 0u64;
            let mut hits = Vec::new();
            let mut und = Vec::new();
            let mut st = ScanStats::default();
            let mut pairs: Vec<(i64, u32)> = Vec::new();
            for q in s..(s + chunk).min(q_hi) {
                let Some((pa, pb)) = range.for_q(q) else {
                    continue;
                };
                let divs = mobius_divisors(q, &spf);
                all += coprime_count(pa, pb, &divs);
                let qf = q as f64;
                pairs.clear();
                for (k, leaf) in leaves.iter().enumerate() {
                    // Float products here are off by far less than the 1e-6 slack.
                    let a = ((qf * leaf.lo - psi_f - 1e-6).floor() as i64).max(pa);
                    let b = ((qf * leaf.hi + psi_f + 1e-6).ceil() as i64).min(pb);
                    for p in a..=b {
                        pairs.push((p, k as u32));
                    }
                }
                st.candidates += pairs.len() as u64;
                pairs.sort_unstable();
                let mut i = 0;
                while i < pairs.len() {
                    let p = pairs[i].0;
                    let mut j = i;
                    while j < pairs.len() && pairs[j].0 == p {
                        j += 1;
                    }
                    if p.gcd(&(q as i64)) == 1 {
                        st.balls_tested += 1;
                        let inner = Span::ball(p, q, &psi.0, fpsi_lo, true);
                        let outer = Span::ball(p, q, &psi.1, fpsi_hi, true);
                        let mut undecided = false;
                        let mut hit = false;
                        for &(_, k) in &pairs[i..j] {
                            let leaf = &leaves[k as usize];
                            if leaf.hi < outer.flo.lo || leaf.lo > outer.fhi.hi {
                                continue;
                            }
                            let v = &mut st.cylinder_visits;
                            match walk::search(ifs, &leaf.word, leaf.frame, &inner, &outer, cap, v)
                            {
                                Found::Yes(..) => {
                                    hit = true;
                                    break;
                                }
                                Found::Undecided => undecided = true,
                                Found::No => {}
                            }
                        }
                        if hit {
                            hits.push((p, q));
                        } else if undecided {
                            und.push((p, q));
                        }
                    }
                    i = j;
                }
            }
            (all, hits, und, st)
        })
        .collect();

    let mut out = empty;
    out.stats.leaves = leaves.len() as u64;
    for (all, h, u, st) in parts {
        out.count_all += all;
        out.hits.extend(h);
        out.undecided.extend(u);
        out.stats.candidates += st.candidates;
        out.stats.balls_tested += st.balls_tested;
        out.stats.cylinder_visits += st.cylinder_visits;
    }
    Ok(out)
}

/// Per-level counts over `m_range`.
pub fn count_table(
    ifs: &Ifs1D,
    spec: &ApproxSpec,
    family: Family,
    m_range: std::ops::RangeInclusive<u32>,
    window: &IntervalQ,
    depth: Option<u32>,
) -> Result<Vec<CountRow>> {
    if m_range.is_empty() {
        return Err(Error::invalid("m_range", "must be nonempty"));
    }
    m_range
        .map(|m| scan_level(ifs, spec, m, family, window, depth)?.row(spec))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::Affine1D;
    use crate::rational::q;
    use proptest::prelude::*;

    fn cantor() -> Ifs1D {
        Ifs1D::new(vec![
            Affine1D::new(q(1, 3), q(0, 1)),
            Affine1D::new(q(1, 3), q(2, 3)),
        ])
        .unwrap()
    }

    fn unit() -> IntervalQ {
        IntervalQ::closed(qi(0), qi(1))
    }

    fn v(a: i64, b: i64) -> ApproxSpec {
        ApproxSpec::power_law(q(a, b)).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let zero = v(2, 1).scaled(qi(0)).unwrap();
        assert!(enumerate_balls(&zero, 3, Family::A, &unit())
            .unwrap()
            .is_empty());

        let got = enumerate_balls(&v(2, 1), 1, Family::A, &unit()).unwrap();
        let key: Vec<(i64, u64, Q)> = got
            .iter()
            .map(|b| (b.p, b.q, b.radius_hi.clone()))
            .collect();
        assert_eq!(
            key,
            vec![(1, 2, q(1, 8)), (1, 3, q(1, 12)), (2, 3, q(1, 12))]
        );

        let d = enumerate_balls(&v(3, 2), 1, Family::D, &IntervalQ::closed(qi(-2), qi(2))).unwrap();
        assert!(d.iter().all(|b| b.q == 1));
        assert_eq!(
            d.iter().map(|b| b.p).collect::<Vec<_>>(),
            vec![-2, -1, 0, 1, 2]
        );
    }

    #[test]
    fn families_share_denominators_across_levels() {
        let a = enumerate_balls(&v(2, 1), 4, Family::A, &unit()).unwrap();
        let d = enumerate_balls(&v(2, 1), 5, Family::D, &unit()).unwrap();
        let pa: Vec<(i64, u64)> = a.iter().map(|b| (b.p, b.q)).collect();
        let pd: Vec<(i64, u64)> = d.iter().map(|b| (b.p, b.q)).collect();
        assert_eq!(pa, pd);
    }

    #[test]
    fn filter_examples() {
        let c = cantor();
        let mk = |p, qq, r: Q| RationalBall {
            p,
            q: qq,
            m: 1,
            family: Family::A,
            radius_lo: r.clone(),
            radius_hi: r,
        };
        let lvl = filter_attractor_hits(
            &c,
            &[mk(1, 2, q(1, 8)), mk(1, 3, q(1, 12)), mk(1, 4, q(1, 48))],
            None,
        );
        assert_eq!(lvl.misses.len(), 1);
        assert_eq!(lvl.misses[0].q, 2);
        assert_eq!(lvl.hits.len(), 2);
        for (b, cert) in &lvl.hits {
            assert!(cert.verify(&c, &b.inner()));
        }
    }

    #[test]
    fn disjointness_examples() {
        let half = |p, qq| RationalBall::new(p, qq, 1, Family::A, &(q(1, 2), q(1, 2)));
        let r = check_pairwise_disjoint(&[half(1, 2), half(1, 3)]);
        assert!(!r.disjoint);
        assert_eq!(r.min_gap, Some(q(1, 6) - q(1, 4) - q(1, 6)));
        assert!(check_pairwise_disjoint(&[half(1, 2)]).disjoint);
    }

    #[test]
    fn streaming_check_matches_materialised_check() {
        for (m, fam) in [
            (3, Family::A),
            (4, Family::A),
            (4, Family::D),
            (6, Family::D),
            (2, Family::A),
        ] {
            for spec in [v(2, 1), v(3, 2), v(1, 1)] {
                let w = IntervalQ::closed(q(-1, 3), q(5, 4));
                let balls = enumerate_balls(&spec, m, fam, &w).unwrap();
                let a = check_pairwise_disjoint(&balls);
                let b = check_level_disjoint(&spec, m, fam, &w).unwrap();
                assert_eq!(a, b, "m={m} {fam}");
            }
        }
    }

    #[test]
    fn far_window_has_no_balls() {
        let w = IntervalQ::closed(qi(10), qi(11));
        let rows = count_table(&cantor(), &v(2, 1), Family::A, 1..=6, &w, None).unwrap();
        assert!(rows
            .iter()
            .all(|r| r.count_all == 0 && r.count_hits == 0 && r.count_undecided == 0));
    }

    #[test]
    fn kernel_agrees_with_per_ball_filtering() {
        let c = cantor();
        for m in 1..=7 {
            for fam in [Family::A, Family::D] {
                let spec = v(3, 2);
                let scan = scan_level(&c, &spec, m, fam, &unit(), None).unwrap();
                let balls = enumerate_balls(&spec, m, fam, &unit()).unwrap();
                let lvl = filter_attractor_hits(&c, &balls, None);
                assert_eq!(scan.count_all, balls.len() as u64, "m={m}");
                let hits: Vec<(i64, u64)> = lvl.hits.iter().map(|(b, _)| (b.p, b.q)).collect();
                assert_eq!(scan.hits, hits, "m={m}");
                assert_eq!(scan.undecided.len(), lvl.undecided.len());
            }
        }
    }

    #[test]
    fn mobius_counts_coprimes() {
        let spf = spf_table(100);
        for qq in 1u64..60 {
            let divs = mobius_divisors(qq, &spf);
            for (a, b) in [(-7i64, 13i64), (0, 0), (5, 4), (-30, -1)] {
                let brute = (a..=b).filter(|p| p.gcd(&(qq as i64)) == 1).count() as u64;
                assert_eq!(coprime_count(a, b, &divs), brute, "q={qq} [{a},{b}]");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn balls_are_primitive_and_in_range(m in 1u32..6, fam in prop_oneof![Just(Family::A), Just(Family::D)],
                                            a in -20i64..20, w in 1i64..30) {
            let win = IntervalQ::closed(q(a, 10), q(a + w, 10));
            let balls = enumerate_balls(&v(3, 2), m, fam, &win).unwrap();
            let (lo, hi) = fam.q_range(m);
            for b in &balls {
                prop_assert_eq!(b.p.gcd(&(b.q as i64)), 1);
                prop_assert!(lo <= b.q && b.q < hi);
                prop_assert!(b.outer().meets(&win));
                prop_assert!(b.radius_lo > crate::rational::qi(0) && b.radius_lo <= b.radius_hi);
            }
            let mut sorted = balls.clone();
            sorted.sort_by_key(|b| (b.q, b.p));
            prop_assert_eq!(&sorted, &balls);
        }

        #[test]
        fn enlarging_the_window_keeps_balls(m in 1u32..6, a in -10i64..10, w in 1i64..20, grow in 0i64..10) {
            let small = IntervalQ::closed(q(a, 10), q(a + w, 10));
            let big = IntervalQ::closed(q(a - grow, 10), q(a + w + grow, 10));
            let s = enumerate_balls(&v(2, 1), m, Family::A, &small).unwrap();
            let b = enumerate_balls(&v(2, 1), m, Family::A, &big).unwrap();
            prop_assert!(s.iter().all(|x| b.contains(x)));
        }
    }
}
