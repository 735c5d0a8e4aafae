//! Equal-split mass on the nested-ball tree and the Frostman-type scan
//! `m(U) ≤ diam(U)^t` that feeds the mass distribution lower bound.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::approx::pow2_neg_bracket;
use crate::error::{Error, Result};
use crate::fit::least_squares;
use crate::interval::IntervalQ;
use crate::measure::MeasureEnclosure;
use crate::rational::{fmt_q, log2_abs, pow2, q as rq, qi, to_f64, Q};
use crate::scheme::CantorTree;

#[derive(Clone, Debug, PartialEq)]
pub struct MassTree {
    pub tree: CantorTree,
    /// Per node, indexed like `tree.nodes`.
    pub mass: Vec<Q>,
    pub level_totals: Vec<Q>,
    /// Per level: node ids sorted by centre, their closed balls, and prefix sums of mass.
    sorted: Vec<LevelIndex>,
}

#[derive(Clone, Debug, PartialEq)]
struct LevelIndex {
    ids: Vec<usize>,
    balls: Vec<IntervalQ>,
    prefix: Vec<Q>,
}

pub fn assign_mass(tree: CantorTree) -> Result<MassTree> {
    let depth = tree.depth() as usize;
    for (k, level) in tree.levels.iter().enumerate().take(depth) {
        if let Some(&i) = level.iter().find(|&&i| tree.nodes[i].children.is_empty()) {
            return Err(Error::Degenerate(format!(
                "node {i} at level {k} has no children; the tree is defective"
            )));
        }
    }
    let mut mass = vec![Q::zero(); tree.nodes.len()];
    mass[0] = Q::one();
    for level in &tree.levels {
        for &i in level {
            let ch = &tree.nodes[i].children;
            if ch.is_empty() {
                continue;
            }
            let share = &mass[i] / qi(ch.len() as i64);
            for &c in ch {
                mass[c] = share.clone();
            }
        }
    }
    let level_totals = tree
        .levels
        .iter()
        .map(|l| l.iter().fold(Q::zero(), |acc, &i| acc + &mass[i]))
        .collect();
    let sorted = tree
        .levels
        .iter()
        .map(|l| {
            let mut ids = l.clone();
            ids.sort_by_key(|&i| tree.nodes[i].center());
            let balls: Vec<IntervalQ> = ids.iter().map(|&i| tree.nodes[i].closed()).collect();
            let mut prefix = Vec::with_capacity(ids.len() + 1);
            prefix.push(Q::zero());
            for &i in &ids {
                let next = prefix.last().unwrap() + &mass[i];
                prefix.push(next);
            }
            LevelIndex { ids, balls, prefix }
        })
        .collect();
    Ok(MassTree {
        tree,
        mass,
        level_totals,
        sorted,
    })
}

fn f64_down(x: &Q) -> f64 {
    let f = to_f64(x);
    if Q::from_float(f).is_some_and(|e| e <= *x) {
        f
    } else {
        f.next_down()
    }
}

fn f64_up(x: &Q) -> f64 {
    let f = to_f64(x);
    if Q::from_float(f).is_some_and(|e| e >= *x) {
        f
    } else {
        f.next_up()
    }
}

impl MassTree {
    /// Exact bounds on `m(U)` from the level-`level` cover: balls contained in
    /// `U` give the lower bound, balls meeting `U` the upper one.
    pub fn mass_bounds_at(&self, u: &IntervalQ, level: usize) -> (Q, Q) {
        let ix = &self.sorted[level];
        if u.is_empty() {
            return (Q::zero(), Q::zero());
        }
        // Balls are disjoint and sorted, so both sets are index ranges.
        let a = ix
            .balls
            .partition_point(|b| b.hi < u.lo || (b.hi == u.lo && u.lo_open));
        let b = ix
            .balls
            .partition_point(|b| b.lo < u.hi || (b.lo == u.hi && !u.hi_open));
        if a >= b {
            return (Q::zero(), Q::zero());
        }
        let hi = &ix.prefix[b] - &ix.prefix[a];
        let mut ca = a;
        while ca < b && !u.contains(&ix.balls[ca]) {
            ca += 1;
        }
        let mut cb = b;
        while cb > ca && !u.contains(&ix.balls[cb - 1]) {
            cb -= 1;
        }
        let lo = &ix.prefix[cb] - &ix.prefix[ca];
        (lo, hi)
    }

    /// Upper bound on the mass of a union: each deepest ball meeting any of
    /// the sets counts once.
    pub fn upper_mass_of_union(&self, us: &[IntervalQ]) -> Q {
        let ix = &self.sorted[self.tree.depth() as usize];
        let mut hit = vec![false; ix.balls.len()];
        for u in us.iter().filter(|u| !u.is_empty()) {
            let a = ix
                .balls
                .partition_point(|b| b.hi < u.lo || (b.hi == u.lo && u.lo_open));
            let b = ix
                .balls
                .partition_point(|b| b.lo < u.hi || (b.lo == u.hi && !u.hi_open));
            for h in hit.iter_mut().take(b).skip(a) {
                *h = true;
            }
        }
        ix.ids
            .iter()
            .zip(&hit)
            .filter(|(_, &h)| h)
            .fold(Q::zero(), |acc, (&i, _)| acc + &self.mass[i])
    }

    /// Enclosure of `m(U)` from the deepest level.
    pub fn mass_of_interval(&self, u: &IntervalQ) -> MeasureEnclosure {
        let depth = self.tree.depth();
        let (lo, hi) = self.mass_bounds_at(u, depth as usize);
        MeasureEnclosure {
            lo: f64_down(&lo),
            hi: f64_up(&hi),
            depth,
        }
    }

    pub fn depth(&self) -> u32 {
        self.tree.depth()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanSpec {
    /// Dyadic window diameters `2^-k` for `k` in this range; default spans
    /// from the hull diameter down to the deepest ball diameter.
    pub scales: Option<(u32, u32)>,
    /// Only sets with diameter at most this count towards `pass`; default is
    /// the largest level-1 ball diameter.
    pub epsilon: Option<Q>,
    /// Extra windows with random centres and log-uniform diameters.
    pub random_windows: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Window {
    #[serde(with = "crate::serde_q")]
    pub lo: Q,
    #[serde(with = "crate::serde_q")]
    pub hi: Q,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrostmanReport {
    pub t: f64,
    pub worst_ratio: f64,
    pub witness: Window,
    pub epsilon_used: f64,
    /// Largest sampled diameter below which every sampled set passes.
    pub epsilon_empirical: f64,
    pub sets_scanned: usize,
    pub sample: String,
    pub pass: bool,
    /// When passing: the mass distribution principle gives `dim ≥ t` for the limit set.
    pub implies_dim_at_least: Option<f64>,
}

struct Sample {
    u: IntervalQ,
    log2_diam: f64,
    diam: f64,
}

fn window(center: &Q, half: &Q) -> IntervalQ {
    IntervalQ::closed(center - half, center + half)
}

fn samples(mt: &MassTree, spec: &ScanSpec) -> Result<(Vec<Sample>, String)> {
    let tree = &mt.tree;
    let depth = tree.depth() as usize;
    let mut out = Vec::new();
    for n in tree.nodes.iter().skip(1) {
        // The lower radius gives the smaller diameter, hence the larger ratio.
        let d = &n.radius_lo * qi(2);
        out.push(Sample {
            u: n.closed(),
            log2_diam: log2_abs(&d),
            diam: to_f64(&d),
        });
    }
    let deepest = &mt.sorted[depth];
    let (k1, k2) = match spec.scales {
        Some(r) => r,
        None => {
            let top = (-log2_abs(&tree.ifs.diam())).floor().max(0.0) as u32;
            let bottom = deepest
                .balls
                .iter()
                .map(|b| -log2_abs(&b.width()))
                .fold(0.0f64, f64::max)
                .ceil() as u32;
            (top, bottom.max(top))
        }
    };
    if k1 > k2 {
        return Err(Error::invalid("scales", "empty range"));
    }
    let mut centers: Vec<Q> = Vec::new();
    for b in &deepest.balls {
        centers.push(b.lo.clone());
        centers.push(b.hi.clone());
    }
    for w in deepest.balls.windows(2) {
        centers.push((&w[0].hi + &w[1].lo) / qi(2));
    }
    for k in k1..=k2 {
        let half = pow2(-(k as i64) - 1);
        for c in &centers {
            out.push(Sample {
                u: window(c, &half),
                log2_diam: -(k as f64),
                diam: (-(k as f64)).exp2(),
            });
        }
    }
    if spec.random_windows > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let h = tree.ifs.hull();
        let (lo_f, w_f) = (to_f64(&h.lo), to_f64(&h.width()));
        for _ in 0..spec.random_windows {
            let c = lo_f + w_f * rng.gen::<f64>();
            let k = rng.gen_range(k1 as f64..=k2 as f64);
            // Snap to dyadic rationals so the record reproduces exactly.
            let c = rq((c * (1u64 << 40) as f64).round() as i64, 1 << 40);
            let d = pow2_neg_bracket(&rq((k * 16.0).round() as i64, 16)).0;
            let half = &d / qi(2);
            out.push(Sample {
                u: window(&c, &half),
                log2_diam: log2_abs(&d),
                diam: to_f64(&d),
            });
        }
    }
    let desc = format!(
        "{} tree balls, {} centres x dyadic scales 2^-{k1}..2^-{k2}, {} random windows (seed {})",
        tree.nodes.len() - 1,
        centers.len(),
        spec.random_windows,
        spec.seed
    );
    Ok((out, desc))
}

/// Worst `hi(m(U)) / diam(U)^t` over tree balls and sliding windows.
pub fn frostman_scan(mt: &MassTree, t: f64, spec: &ScanSpec) -> Result<FrostmanReport> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", "must be non-negative"));
    }
    let eps = match &spec.epsilon {
        Some(e) => e.clone(),
        None => mt.tree.levels.get(1).map_or(Q::one(), |l| {
            l.iter()
                .map(|&i| &mt.tree.nodes[i].radius_hi * qi(2))
                .max()
                .unwrap_or_else(Q::one)
        }),
    };
    let eps_f = to_f64(&eps);
    let (sets, desc) = samples(mt, spec)?;
    let ratios: Vec<f64> = sets
        .par_iter()
        .map(|s| {
            let hi = mt.mass_of_interval(&s.u).hi;
            if hi == 0.0 {
                0.0
            } else {
                (hi.log2() - t * s.log2_diam).exp2()
            }
        })
        .collect();
    // Sequential reduction: ties go to the lexicographically smallest window.
    let mut worst: Option<usize> = None;
    let mut eps_fail = f64::INFINITY;
    let mut max_diam = 0.0f64;
    for (k, s) in sets.iter().enumerate() {
        max_diam = max_diam.max(s.diam);
        if ratios[k] > 1.0 {
            eps_fail = eps_fail.min(s.diam);
        }
        if s.diam > eps_f {
            continue;
        }
        let better = match worst {
            None => true,
            Some(w) => {
                ratios[k] > ratios[w]
                    || (ratios[k] == ratios[w]
                        && (&sets[k].u.lo, &sets[k].u.hi) < (&sets[w].u.lo, &sets[w].u.hi))
            }
        };
        if better {
            worst = Some(k);
        }
    }
    let eps_emp = if eps_fail.is_finite() {
        sets.iter()
            .map(|s| s.diam)
            .filter(|&d| d < eps_fail)
            .fold(0.0, f64::max)
    } else {
        max_diam
    };
    let (worst_ratio, witness) = match worst {
        Some(w) => (
            ratios[w],
            Window {
                lo: sets[w].u.lo.clone(),
                hi: sets[w].u.hi.clone(),
            },
        ),
        None => (
            0.0,
            Window {
                lo: Q::zero(),
                hi: Q::zero(),
            },
        ),
    };
    let pass = worst_ratio <= 1.0;
    Ok(FrostmanReport {
        t,
        worst_ratio,
        witness,
        epsilon_used: eps_f,
        epsilon_empirical: eps_emp,
        sets_scanned: sets.len(),
        sample: desc,
        pass,
        implies_dim_at_least: pass.then_some(t),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalExponent {
    pub t_star: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `s - u(v-1)/(v+1)`
    pub target: f64,
    /// `s - C(1 - 2/(v+1))` with `C = u`.
    pub theorem_form: f64,
    pub points: usize,
}

/// Least-squares slope of `ln m(B)` against `ln diam(B)` over all balls at levels ≥ 1.
pub fn local_exponent_fit(mt: &MassTree, s: f64) -> Result<LocalExponent> {
    if mt.depth() < 1 {
        return Err(Error::Degenerate(
            "tree has no levels below the root".into(),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, n) in mt.tree.nodes.iter().enumerate().skip(1) {
        xs.push(log2_abs(&(&n.radius_hi * qi(2))));
        ys.push(log2_abs(&mt.mass[i]));
    }
    let line = least_squares(&xs, &ys)?;
    let p = &mt.tree.params;
    let v = to_f64(&p.v);
    let u = p.u as f64;
    Ok(LocalExponent {
        t_star: line.slope,
        intercept: line.intercept,
        r2: line.r2,
        target: s - u * (v - 1.0) / (v + 1.0),
        theorem_form: s - u * (1.0 - 2.0 / (v + 1.0)),
        points: xs.len(),
    })
}

/// Totals per level as strings, for reports.
pub fn level_totals_text(mt: &MassTree) -> Vec<String> {
    mt.level_totals.iter().map(fmt_q).collect()
}
