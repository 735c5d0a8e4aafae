//! The natural self-similar measure `μ = Σ c_i^s (f_i)_* μ` and certified
//! enclosures of the mass it gives to intervals and finite unions of balls.

use num_traits::Zero;
use rayon::prelude::*;
use std::collections::BTreeSet;

use crate::approx::ApproxSpec;
use crate::covers::{self, Family, RationalBall};
use crate::error::{Error, Result};
use crate::fit::{least_squares, ScalingFit};
use crate::ifs::{Dimension, Ifs1D, Word};
use crate::interval::IntervalQ;
use crate::rational::{decide_le, log2_abs, to_f64, Q};
use crate::walk::{self, contains, meets, Frame, Span, Step};

/// Certified bounds `lo ≤ μ(target) ≤ hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureEnclosure {
    pub lo: f64,
    pub hi: f64,
    pub depth: u32,
}

impl MeasureEnclosure {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn overlaps(&self, lo: f64, hi: f64) -> bool {
        self.lo <= hi && lo <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityEstimate {
    pub a1_hat: f64,
    pub a2_hat: f64,
    pub sample_count: usize,
    pub scale_range: (Q, Q),
}

#[derive(Clone, Debug)]
pub struct SelfSimilarMeasure {
    ifs: Ifs1D,
    dim: Dimension,
    weights: Vec<f64>,
    bounds: Vec<(f64, f64)>,
}

impl SelfSimilarMeasure {
    /// Natural measure with weights `c_i^s`; a single map would give a point mass and is rejected.
    pub fn new(ifs: Ifs1D) -> Result<Self> {
        if ifs.len() < 2 {
            return Err(Error::invalid(
                "maps",
                "a single-map system has dimension 0; its measure is a point mass",
            ));
        }
        let dim = ifs.solve_dimension(1e-14);
        let slack = 8.0 * f64::EPSILON;
        let mut weights = Vec::with_capacity(ifs.len());
        let mut bounds = Vec::with_capacity(ifs.len());
        for m in ifs.maps() {
            let c = to_f64(&m.ratio);
            weights.push(c.powf(dim.value));
            // c^s decreases in s, so the dimension bracket flips.
            bounds.push((
                c.powf(dim.hi) * (1.0 - slack),
                c.powf(dim.lo) * (1.0 + slack),
            ));
        }
        Ok(SelfSimilarMeasure {
            ifs,
            dim,
            weights,
            bounds,
        })
    }

    pub fn ifs(&self) -> &Ifs1D {
        &self.ifs
    }

    pub fn dimension(&self) -> Dimension {
        self.dim
    }

    pub fn s(&self) -> f64 {
        self.dim.value
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-map `(lo, hi)` enclosures of `c_i^s`.
    pub fn weight_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Enclosure of `μ(target)` refining cylinders down to word length `depth`.
    pub fn measure_interval(&self, target: &IntervalQ, depth: u32) -> MeasureEnclosure {
        let t = [Span::from_interval(&target.closure())];
        let (lo, hi) = self.enclose(&[], Frame::ROOT, &t, &t, depth);
        MeasureEnclosure { lo, hi, depth }
    }

    /// Enclosure of `μ_α(target) = μ(f_α^{-1} target)`, refining `depth` levels below `α`.
    pub fn branch_measure_interval(
        &self,
        alpha: &Word,
        target: &IntervalQ,
        depth: u32,
    ) -> Result<MeasureEnclosure> {
        self.ifs.compose_word(alpha)?;
        let mut frame = walk::frame_of(&self.ifs, &alpha.0, None);
        frame.w_lo = 1.0;
        frame.w_hi = 1.0;
        let t = [Span::from_interval(&target.closure())];
        let cap = alpha.len() as u32 + depth;
        let (lo, hi) = self.enclose(&alpha.0, frame, &t, &t, cap);
        Ok(MeasureEnclosure { lo, hi, depth })
    }

    /// Word length at which every cylinder is no wider than `width`.
    pub fn scale_depth(&self, width: &Q) -> u32 {
        self.ifs.default_depth_cap(width).saturating_sub(8)
    }

    /// Core recursion over two sorted lists of pairwise disjoint closed
    /// intervals: cylinders inside an `inner` interval count fully towards
    /// both bounds, cylinders meeting no `outer` interval count for nothing,
    /// and cylinders still undecided at `cap` count towards `hi` only.
    pub(crate) fn enclose(
        &self,
        start: &[u16],
        frame: Frame,
        inner: &[Span],
        outer: &[Span],
        cap: u32,
    ) -> (f64, f64) {
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        if outer.is_empty() {
            return (0.0, 0.0);
        }
        walk::walk(&self.ifs, start, frame, Some(&self.bounds), |n| {
            if first_meeting(outer, n.span).is_none() {
                return Step::Prune;
            }
            if let Some(k) = first_meeting(inner, n.span) {
                if contains(&inner[k], n.span) {
                    lo = (lo + n.w_lo).next_down();
                    hi = (hi + n.w_hi).next_up();
                    return Step::Prune;
                }
            }
            if n.depth >= cap {
                hi = (hi + n.w_hi).next_up();
                return Step::Prune;
            }
            Step::Descend
        });
        (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0))
    }

    /// Enclosure of `μ(⋃ balls)`, treating every ball as closed (the measure has no atoms).
    pub fn measure_level_union(&self, balls: &[RationalBall], depth: u32) -> MeasureEnclosure {
        let outer = merge_closed(balls.iter().map(|b| b.closed_ball(&b.radius_hi)).collect());
        let inner = merge_closed(balls.iter().map(|b| b.closed_ball(&b.radius_lo)).collect());
        let outer: Vec<Span> = outer.iter().map(Span::from_interval).collect();
        let inner: Vec<Span> = inner.iter().map(Span::from_interval).collect();
        let (lo, hi) = self.enclose(&[], Frame::ROOT, &inner, &outer, depth);
        MeasureEnclosure { lo, hi, depth }
    }

    /// Empirical regularity constants: extreme values of `μ(B(x,r)) / r^s`
    /// over attractor points `x` and the given radii. Centres are cylinder
    /// endpoints in breadth-first, lexicographic order; `depth` is the number
    /// of refinement levels beyond each ball's own scale.
    pub fn estimate_regularity(
        &self,
        n_centers: usize,
        scales: &[Q],
        depth: u32,
    ) -> Result<RegularityEstimate> {
        if n_centers == 0 {
            return Err(Error::invalid("n_centers", "must be at least 1"));
        }
        if scales.is_empty() {
            return Err(Error::invalid("scales", "at least one radius is required"));
        }
        let diam = self.ifs.diam();
        if scales.iter().any(|r| *r <= Q::zero() || *r > diam) {
            return Err(Error::invalid("scales", "radii must lie in (0, diam hull]"));
        }
        let centers = self.centers(n_centers);
        let s = self.s();
        let jobs: Vec<(&Q, &Q)> = centers
            .iter()
            .flat_map(|x| scales.iter().map(move |r| (x, r)))
            .collect();
        let ratios: Vec<f64> = jobs
            .par_iter()
            .map(|(x, r)| {
                let ball = IntervalQ::closed_ball(x, r);
                let cap = self.scale_depth(&(*r + *r)) + depth;
                let e = self.measure_interval(&ball, cap);
                e.mid() / (log2_abs(r) * s).exp2()
            })
            .collect();
        let a1_hat = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let a2_hat = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let smin = scales.iter().min().unwrap().clone();
        let smax = scales.iter().max().unwrap().clone();
        Ok(RegularityEstimate {
            a1_hat,
            a2_hat,
            sample_count: ratios.len(),
            scale_range: (smin, smax),
        })
    }

    /// First `n` distinct cylinder endpoints in breadth-first order.
    fn centers(&self, n: usize) -> Vec<Q> {
        let h = self.ifs.hull().clone();
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(n);
        let mut level: Vec<Word> = vec![Word::empty()];
        while out.len() < n {
            for w in &level {
                let f = self.ifs.compose_raw(&w.0);
                for x in [f.apply(&h.lo), f.apply(&h.hi)] {
                    if out.len() < n && seen.insert(x.clone()) {
                        out.push(x);
                    }
                }
            }
            if level[0].len() > 40 {
                break;
            }
            level = level
                .iter()
                .flat_map(|w| {
                    (0..self.ifs.len() as u16).map(move |i| {
                        let mut v = w.0.clone();
                        v.push(i);
                        Word(v)
                    })
                })
                .collect();
        }
        out
    }
}

/// Index of the first interval in a sorted disjoint list that meets `c`.
fn first_meeting(list: &[Span], c: &Span) -> Option<usize> {
    let start = list.partition_point(|iv| iv.fhi.hi < c.flo.lo);
    for (k, iv) in list.iter().enumerate().skip(start) {
        if meets(iv, c) {
            return Some(k);
        }
        // Past the cylinder: nothing further can meet it.
        if !decide_le(iv.flo, c.fhi, false, || iv.exact().0.cmp(&c.exact().1)) {
            return None;
        }
    }
    None
}

/// Sorts closed intervals and merges overlapping or touching ones.
pub(crate) fn merge_closed(mut ivs: Vec<IntervalQ>) -> Vec<IntervalQ> {
    ivs.sort_by(|a, b| a.lo.cmp(&b.lo));
    let mut out: Vec<IntervalQ> = Vec::with_capacity(ivs.len());
    for iv in ivs {
        match out.last_mut() {
            Some(last) if iv.lo <= last.hi => {
                if iv.hi > last.hi {
                    last.hi = iv.hi;
                }
            }
            _ => out.push(iv),
        }
    }
    out
}

/// One level of a measure scaling fit.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelMeasure {
    pub m: u32,
    pub balls: usize,
    pub enclosure: MeasureEnclosure,
    pub log2_mid: f64,
    pub dropped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelScaling {
    pub fit: ScalingFit,
    pub levels: Vec<LevelMeasure>,
    pub dropped_levels: Vec<u32>,
}

/// Extra refinement levels beyond the ball scale used for level unions.
pub const LEVEL_UNION_EXTRA_DEPTH: u32 = 12;

/// Fits `log2 μ(level set)` against `m` over `m_range`, where the level set
/// is the union of the family's balls meeting the attractor. Levels whose
/// enclosure contains 0 are dropped.
pub fn fit_level_scaling(
    mu: &SelfSimilarMeasure,
    spec: &ApproxSpec,
    family: Family,
    m_range: std::ops::RangeInclusive<u32>,
) -> Result<LevelScaling> {
    if m_range.is_empty() {
        return Err(Error::invalid("m_range", "must be nonempty"));
    }
    let window = mu.ifs().attractor_hull();
    let mut levels = Vec::new();
    for m in m_range {
        let scan = covers::scan_level(mu.ifs(), spec, m, family, &window, None)?;
        let balls = scan.hit_and_undecided_balls(spec)?;
        let depth = match balls.first() {
            Some(b) => mu.scale_depth(&b.radius_lo) + LEVEL_UNION_EXTRA_DEPTH,
            None => 0,
        };
        let enclosure = mu.measure_level_union(&balls, depth);
        let dropped = enclosure.lo <= 0.0;
        levels.push(LevelMeasure {
            m,
            balls: balls.len(),
            enclosure,
            log2_mid: if enclosure.hi > 0.0 {
                enclosure.mid().log2()
            } else {
                f64::NEG_INFINITY
            },
            dropped,
        });
    }
    let used: Vec<&LevelMeasure> = levels.iter().filter(|l| !l.dropped).collect();
    let dropped_levels: Vec<u32> = levels.iter().filter(|l| l.dropped).map(|l| l.m).collect();
    if used.len() < 2 {
        return Err(Error::Degenerate(format!(
            "fewer than two levels with a positive measure lower bound (dropped: {dropped_levels:?})"
        )));
    }
    let xs: Vec<f64> = used.iter().map(|l| l.m as f64).collect();
    let mid: Vec<f64> = used.iter().map(|l| l.log2_mid).collect();
    let lo: Vec<f64> = used.iter().map(|l| l.enclosure.lo.log2()).collect();
    let hi: Vec<f64> = used.iter().map(|l| l.enclosure.hi.log2()).collect();
    let line = least_squares(&xs, &mid)?;
    let fit = ScalingFit {
        slope: line.slope,
        intercept: line.intercept,
        r2: line.r2,
        levels_used: used.iter().map(|l| l.m).collect(),
        bracket: Some((
            least_squares(&xs, &lo)?.slope,
            least_squares(&xs, &hi)?.slope,
        )),
    };
    Ok(LevelScaling {
        fit,
        levels,
        dropped_levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::Affine1D;
    use crate::rational::{q, qi};
    use proptest::prelude::*;

    fn cantor() -> SelfSimilarMeasure {
        SelfSimilarMeasure::new(
            Ifs1D::new(vec![
                Affine1D::new(q(1, 3), q(0, 1)),
                Affine1D::new(q(1, 3), q(2, 3)),
            ])
            .unwrap(),
        )
        .unwrap()
    }

    fn golden() -> SelfSimilarMeasure {
        SelfSimilarMeasure::new(
            Ifs1D::new(vec![
                Affine1D::new(q(1, 4), q(0, 1)),
                Affine1D::new(q(1, 2), q(1, 2)),
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_map_is_rejected() {
        let ifs = Ifs1D::new(vec![Affine1D::new(q(1, 2), q(0, 1))]).unwrap();
        assert!(SelfSimilarMeasure::new(ifs).is_err());
    }

    #[test]
    fn weights_sum_to_one() {
        for mu in [cantor(), golden()] {
            let (lo, hi): (f64, f64) = mu
                .weight_bounds()
                .iter()
                .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            assert!(lo <= 1.0 && 1.0 <= hi, "{lo} {hi}");
            assert!((mu.weights().iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn cantor_interval_examples() {
        let mu = cantor();
        let full = mu.measure_interval(&IntervalQ::closed(qi(0), qi(1)), 10);
        assert!(full.contains(1.0) && full.lo > 1.0 - 1e-12);
        let left = mu.measure_interval(&IntervalQ::closed(qi(0), q(1, 3)), 12);
        assert!(left.contains(0.5) && left.width() <= 2.0 * 0.5f64.powi(12));
        let e = mu.measure_interval(&IntervalQ::closed(qi(0), q(1, 9)), 12);
        assert!(e.contains(0.25));
        let gap = mu.measure_interval(&IntervalQ::closed(q(2, 5), q(3, 5)), 12);
        assert_eq!((gap.lo, gap.hi), (0.0, 0.0));
    }

    #[test]
    fn branch_examples() {
        let mu = cantor();
        let a = Word::from_one_based(&[1]);
        let t = IntervalQ::closed(qi(0), q(1, 9));
        let e = mu.branch_measure_interval(&Word::empty(), &t, 12).unwrap();
        assert_eq!(e, mu.measure_interval(&t, 12));
        assert!(mu
            .branch_measure_interval(&a, &IntervalQ::closed(qi(0), q(1, 3)), 12)
            .unwrap()
            .contains(1.0));
        assert!(mu
            .branch_measure_interval(&a, &t, 12)
            .unwrap()
            .contains(0.5));
    }

    #[test]
    fn regularity_example_at_an_endpoint() {
        let mu = cantor();
        let r = mu.estimate_regularity(1, &[q(1, 3)], 14).unwrap();
        assert!((r.a1_hat - 1.0).abs() < 1e-3 && (r.a2_hat - 1.0).abs() < 1e-3);
        let scales: Vec<Q> = (1..=6).map(|j| q(1, 3i64.pow(j))).collect();
        let r = mu.estimate_regularity(64, &scales, 8).unwrap();
        assert!(r.a1_hat <= 1.0 && 1.0 <= r.a2_hat);
        assert!(mu.estimate_regularity(1, &[qi(2)], 8).is_err());
    }

    #[test]
    fn level_union_examples() {
        let mu = cantor();
        let e = mu.measure_level_union(&[], 10);
        assert_eq!((e.lo, e.hi), (0.0, 0.0));
        let big = RationalBall {
            p: 1,
            q: 2,
            m: 1,
            family: Family::A,
            radius_lo: qi(1),
            radius_hi: qi(1),
        };
        let e = mu.measure_level_union(&[big], 10);
        assert!(e.lo > 1.0 - 1e-12 && e.hi <= 1.0);
    }

    #[test]
    fn merging_joins_touching_intervals() {
        let m = merge_closed(vec![
            IntervalQ::closed(q(1, 2), qi(1)),
            IntervalQ::closed(qi(0), q(1, 2)),
            IntervalQ::closed(qi(2), qi(3)),
        ]);
        assert_eq!(
            m,
            vec![
                IntervalQ::closed(qi(0), qi(1)),
                IntervalQ::closed(qi(2), qi(3))
            ]
        );
    }

    fn arb_interval() -> impl Strategy<Value = IntervalQ> {
        (-10i64..110, 1i64..60).prop_map(|(a, w)| IntervalQ::closed(q(a, 100), q(a + w, 100)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn additivity(a in 0i64..50, w1 in 1i64..25, gap in 0i64..10, w2 in 1i64..25) {
            let mu = golden();
            let i = IntervalQ::closed(q(a, 100), q(a + w1, 100));
            let j = IntervalQ::closed(q(a + w1 + gap + 1, 100), q(a + w1 + gap + 1 + w2, 100));
            let u = IntervalQ::closed(q(a, 100), q(a + w1 + gap + 1 + w2, 100));
            let gap_iv = IntervalQ::open(q(a + w1, 100), q(a + w1 + gap + 1, 100));
            let (ei, ej, eu, eg) = (mu.measure_interval(&i, 14), mu.measure_interval(&j, 14),
                                    mu.measure_interval(&u, 14), mu.measure_interval(&gap_iv, 14));
            prop_assert!(eu.overlaps(ei.lo + ej.lo + eg.lo, ei.hi + ej.hi + eg.hi));
        }

        #[test]
        fn self_similarity(i in arb_interval(), k in 0usize..2) {
            let mu = golden();
            let f = &mu.ifs().maps()[k];
            let (wl, wh) = mu.weight_bounds()[k];
            let e = mu.measure_interval(&i, 12);
            let ef = mu.measure_interval(&f.image(&i), 13);
            prop_assert!(ef.overlaps(wl * e.lo, wh * e.hi));
        }

        #[test]
        fn width_shrinks_geometrically(i in arb_interval(), d in 2u32..14) {
            let mu = cantor();
            let e = mu.measure_interval(&i, d);
            prop_assert!(e.width() <= 2.0 * 0.5f64.powi(d as i32) * (1.0 + 1e-9));
            let e2 = mu.measure_interval(&i, d + 1);
            prop_assert!(e2.lo >= e.lo - 1e-12 && e2.hi <= e.hi + 1e-12);
        }

        #[test]
        fn branch_consistency(i in arb_interval(), raw in prop::collection::vec(0u16..2, 0..4)) {
            let mu = golden();
            let alpha = Word(raw);
            let f = mu.ifs().compose_word(&alpha).unwrap();
            let eb = mu.branch_measure_interval(&alpha, &f.image(&i), 12).unwrap();
            let e = mu.measure_interval(&i, 12);
            prop_assert!(eb.overlaps(e.lo, e.hi));
        }

        #[test]
        fn regularity_is_monotone_under_refinement(n in 1usize..12, extra in 1usize..8) {
            let mu = cantor();
            let s1 = [q(1, 9)];
            let s2 = [q(1, 9), q(1, 5)];
            let a = mu.estimate_regularity(n, &s1, 6).unwrap();
            let b = mu.estimate_regularity(n + extra, &s2, 6).unwrap();
            prop_assert!(b.a1_hat <= a.a1_hat && b.a2_hat >= a.a2_hat);
        }
    }
}
