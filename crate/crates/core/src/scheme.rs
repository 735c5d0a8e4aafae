//! Nested rational-ball construction behind the lower bound. Every node is
//! a ball `B(p/q, ψ(2^M)/q)` with `2^{M-1} ≤ q < 2^M`, paired with a branch
//! word `β` whose cylinder sits well inside the ball. Children of a node are
//! the level-`M_{n+1}` balls (radius shrunk threefold) that meet the parent's
//! branch of the attractor. Every inequality the construction relies on is
//! checked exactly per node instead of being assumed from large parameters.

use num_traits::{One, Signed, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{pow2_neg_bracket, ApproxSpec};
use crate::covers::{check_pairwise_disjoint, enumerate_balls, Family, RationalBall, MAX_LEVEL};
use crate::error::{Error, Result};
use crate::ifs::{Affine1D, Ifs1D, Word};
use crate::interval::{IntervalQ, TriBool};
use crate::measure::{RegularityEstimate, SelfSimilarMeasure};
use crate::rational::{fmt_q, log2_abs, parse_q, q as rq, qi, Q};

pub const DEFAULT_ATTRACTOR_DEPTH: u32 = 8;
pub const DEFAULT_MEASURE_DEPTH: u32 = 14;
/// Allowed spread of per-parent child counts within one level.
pub const CHILD_BAND: f64 = 64.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeParams {
    pub v: Q,
    /// Common ratio of the level sequence `M_n = m0 · u^n`.
    pub u: u32,
    pub m0: u32,
    /// Number of levels below the root.
    pub depth: u32,
    /// Search levels beyond each candidate ball's own scale.
    pub attractor_depth: u32,
    /// Refinement levels beyond each ball's scale for measure enclosures.
    pub measure_depth: u32,
}

impl SchemeParams {
    pub fn new(v: Q, u: u32, m0: u32, depth: u32) -> Result<Self> {
        let p = SchemeParams {
            v,
            u,
            m0,
            depth,
            attractor_depth: DEFAULT_ATTRACTOR_DEPTH,
            measure_depth: DEFAULT_MEASURE_DEPTH,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v <= Q::one() {
            return Err(Error::invalid("v", "must exceed 1"));
        }
        ApproxSpec::power_law(self.v.clone())?;
        if self.u < 2 {
            return Err(Error::invalid("u", "must be at least 2"));
        }
        if self.m0 < 1 {
            return Err(Error::invalid("m0", "must be at least 1"));
        }
        match self.level_m(self.depth) {
            Some(m) if m <= MAX_LEVEL => Ok(()),
            _ => Err(Error::invalid(
                "depth",
                format!("deepest level m0·u^depth exceeds {MAX_LEVEL}"),
            )),
        }
    }

    /// `M_n = m0 · u^n`, or `None` on overflow.
    pub fn level_m(&self, n: u32) -> Option<u32> {
        self.u.checked_pow(n)?.checked_mul(self.m0)
    }

    fn m(&self, n: u32) -> u32 {
        self.level_m(n).expect("validated")
    }

    fn spec(&self) -> ApproxSpec {
        ApproxSpec::power_law(self.v.clone()).expect("validated")
    }

    /// Bracket of `2^{-M(v+1)}`.
    fn scale(&self, m: u32) -> (Q, Q) {
        pow2_neg_bracket(&(qi(m as i64) * (&self.v + Q::one())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CantorNode {
    pub level: u32,
    pub m: u32,
    pub p: i64,
    pub q: u64,
    pub radius_lo: Q,
    pub radius_hi: Q,
    pub word: Word,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

impl CantorNode {
    pub fn center(&self) -> Q {
        rq(self.p, self.q as i64)
    }

    /// Points certainly inside the ball.
    pub fn inner(&self) -> IntervalQ {
        IntervalQ::ball(&self.center(), &self.radius_lo)
    }

    /// Closed ball with the upper radius: certainly contains the true ball.
    pub fn closed(&self) -> IntervalQ {
        IntervalQ::closed_ball(&self.center(), &self.radius_hi)
    }

    fn as_ball(&self) -> RationalBall {
        RationalBall {
            p: self.p,
            q: self.q,
            m: self.m,
            family: Family::D,
            radius_lo: self.radius_lo.clone(),
            radius_hi: self.radius_hi.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: u32,
    pub m: u32,
    pub nodes: usize,
    /// Candidate balls examined under all parents of the previous level.
    pub candidates: usize,
    /// Candidates dropped because the attractor test was undecided at the cap.
    pub undecided_dropped: usize,
    pub children_min: usize,
    pub children_max: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CantorTree {
    pub params: SchemeParams,
    pub ifs: Ifs1D,
    /// Arena; index 0 is the root.
    pub nodes: Vec<CantorNode>,
    pub levels: Vec<Vec<usize>>,
    /// Bracket of the level-0 normalisation `max{1, 3·2^{M0(v+1)}·diam}`.
    pub l_const: (Q, Q),
    /// One entry per level below the root.
    pub stats: Vec<LevelStats>,
}

struct Child {
    p: i64,
    q: u64,
    radius_lo: Q,
    radius_hi: Q,
    word: Word,
}

struct Expansion {
    children: Vec<Child>,
    candidates: usize,
    undecided: usize,
}

fn root_node(ifs: &Ifs1D, params: &SchemeParams) -> Result<(CantorNode, (Q, Q))> {
    let diam = ifs.diam();
    let x = ifs.hull().lo.clone();
    let (p, q) = match (x.numer().to_i64(), x.denom().to_u64()) {
        (Some(p), Some(q)) => (p, q),
        _ => {
            return Err(Error::invalid(
                "ifs",
                "hull endpoint does not fit a 64-bit fraction",
            ))
        }
    };
    let b0 = params.scale(params.m0);
    let four = qi(4) * &diam;
    let r_lo = four.clone().max(b0.0.clone());
    let r_hi = four.max(b0.1.clone());
    let three_d = qi(3) * &diam;
    let l_lo = Q::one().max(&three_d / &b0.1);
    let l_hi = Q::one().max(&three_d / &b0.0);
    let root = CantorNode {
        level: 0,
        m: params.m0,
        p,
        q,
        radius_lo: r_lo,
        radius_hi: r_hi,
        word: Word::empty(),
        parent: None,
        children: Vec::new(),
    };
    Ok((root, (l_lo, l_hi)))
}

/// Levels needed so that every cylinder has diameter at most `width`, plus one.
fn code_len(ifs: &Ifs1D, width: &Q) -> usize {
    let need = (log2_abs(width) - log2_abs(&ifs.diam())) / ifs.c_max().log2();
    need.max(0.0).ceil() as usize + 1
}

#[allow(clippy::too_many_arguments)]
fn expand(
    ifs: &Ifs1D,
    params: &SchemeParams,
    parent: &CantorNode,
    m: u32,
    psi: &(Q, Q),
    tilde: &ApproxSpec,
    window_q: &(Q, Q),
    l_lo: &Q,
) -> Result<Expansion> {
    let alpha = &parent.word;
    let hull = ifs.hull();
    let window = ifs.compose_word(alpha)?.image(hull);
    let cands = enumerate_balls(tilde, m, Family::D, &window)?;
    let parent_inner = parent.inner();
    let diam = ifs.diam();
    let c1 = ifs.ratio_min().clone();
    let (q_lo, q_hi) = Family::D.q_range(m);
    let mut out = Expansion {
        children: Vec::new(),
        candidates: cands.len(),
        undecided: 0,
    };
    for b in cands {
        let inner = b.inner();
        let cap = ifs.default_depth_cap(&inner.width()).saturating_sub(8) + params.attractor_depth;
        let cert = match ifs.intersects_bracketed(&inner, &b.outer(), alpha, Some(cap)) {
            TriBool::Yes(c) => c,
            TriBool::No => continue,
            TriBool::Undecided { .. } => {
                out.undecided += 1;
                continue;
            }
        };
        let len = code_len(ifs, &window_q.0).max(cert.word.len());
        let code = cert.code(ifs, len);
        let beta = ifs
            .find_branch(alpha, &code, &window_q.0)
            .map_err(|e| Error::verification("diameter-window", format!("{}/{}: {e}", b.p, b.q)))?;
        let ball = RationalBall::new(b.p, b.q, m, Family::D, psi);
        let x = ball.center();
        let tag = format!("ball {}/{} under word {}", b.p, b.q, alpha);
        if !alpha.is_prefix_of(&beta) {
            return Err(Error::verification("branch-monotonicity", tag));
        }
        let support = ifs.compose_word(&beta)?.image(hull);
        let two_thirds = &ball.radius_lo * rq(2, 3);
        if !IntervalQ::ball(&x, &two_thirds).contains(&support) {
            return Err(Error::verification("support-in-ball", tag));
        }
        let d_beta = ifs.word_ratio(&beta) * &diam;
        if d_beta < &c1 * &window_q.1 || d_beta > l_lo * &window_q.0 {
            return Err(Error::verification("diameter-window", tag));
        }
        if !(q_lo..q_hi).contains(&b.q) {
            return Err(Error::verification("radius-window", tag));
        }
        if !parent_inner.contains(&ball.closed_ball(&ball.radius_hi)) {
            return Err(Error::verification("nesting", tag));
        }
        out.children.push(Child {
            p: b.p,
            q: b.q,
            radius_lo: ball.radius_lo,
            radius_hi: ball.radius_hi,
            word: beta,
        });
    }
    Ok(out)
}

/// Builds the tree level by level. Candidates whose attractor test is
/// undecided are dropped and tallied; a node left without children aborts.
pub fn build_scheme(ifs: &Ifs1D, params: &SchemeParams) -> Result<CantorTree> {
    params.validate()?;
    if !ifs.check_osc(&ifs.default_open_set()) {
        return Err(Error::OscFails);
    }
    let (root, l_const) = root_node(ifs, params)?;
    let mut tree = CantorTree {
        params: params.clone(),
        ifs: ifs.clone(),
        nodes: vec![root],
        levels: vec![vec![0]],
        l_const,
        stats: Vec::new(),
    };
    let spec = params.spec();
    let tilde = spec.clone().scaled(rq(1, 3))?;
    for k in 0..params.depth {
        let m = params.m(k + 1);
        let psi = spec.bracket(m)?;
        let sc = params.scale(m);
        let window_q = (sc.0 / qi(3), sc.1 / qi(3));
        let parents = tree.levels[k as usize].clone();
        let expansions: Vec<Result<Expansion>> = parents
            .par_iter()
            .map(|&i| {
                expand(
                    ifs,
                    params,
                    &tree.nodes[i],
                    m,
                    &psi,
                    &tilde,
                    &window_q,
                    &tree.l_const.0,
                )
            })
            .collect();
        let mut level = Vec::new();
        let mut stats = LevelStats {
            level: k + 1,
            m,
            nodes: 0,
            candidates: 0,
            undecided_dropped: 0,
            children_min: usize::MAX,
            children_max: 0,
        };
        for (&pi, e) in parents.iter().zip(expansions) {
            let e = e?;
            if e.children.is_empty() {
                return Err(Error::ZeroChildren {
                    node: pi,
                    level: k,
                    word: tree.nodes[pi].word.to_string(),
                    candidates: e.candidates,
                    undecided: e.undecided,
                });
            }
            stats.candidates += e.candidates;
            stats.undecided_dropped += e.undecided;
            stats.children_min = stats.children_min.min(e.children.len());
            stats.children_max = stats.children_max.max(e.children.len());
            for c in e.children {
                let id = tree.nodes.len();
                tree.nodes.push(CantorNode {
                    level: k + 1,
                    m,
                    p: c.p,
                    q: c.q,
                    radius_lo: c.radius_lo,
                    radius_hi: c.radius_hi,
                    word: c.word,
                    parent: Some(pi),
                    children: Vec::new(),
                });
                tree.nodes[pi].children.push(id);
                level.push(id);
            }
        }
        stats.nodes = level.len();
        let balls: Vec<RationalBall> = level.iter().map(|&i| tree.nodes[i].as_ball()).collect();
        let d = check_pairwise_disjoint(&balls);
        if !d.disjoint {
            return Err(Error::verification(
                "sibling-disjointness",
                format!(
                    "level {} min gap {}",
                    k + 1,
                    d.min_gap.map(|g| fmt_q(&g)).unwrap_or_default()
                ),
            ));
        }
        tree.levels.push(level);
        tree.stats.push(stats);
    }
    Ok(tree)
}

impl CantorTree {
    pub fn root(&self) -> &CantorNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> u32 {
        self.levels.len() as u32 - 1
    }

    /// Node ids along a child-index path, root excluded.
    pub fn path_nodes(&self, path: &[usize]) -> Result<Vec<usize>> {
        if path.len() > self.depth() as usize {
            return Err(Error::invalid("path", "longer than the tree depth"));
        }
        let mut cur = 0;
        let mut out = Vec::with_capacity(path.len());
        for (k, &j) in path.iter().enumerate() {
            cur = *self.nodes[cur].children.get(j).ok_or_else(|| {
                Error::invalid("path", format!("step {k}: no child with index {j}"))
            })?;
            out.push(cur);
        }
        Ok(out)
    }

    /// Every root-to-leaf child-index path, in depth-first order.
    pub fn leaf_paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((i, path)) = stack.pop() {
            let ch = &self.nodes[i].children;
            if ch.is_empty() {
                out.push(path);
                continue;
            }
            for (j, &c) in ch.iter().enumerate().rev() {
                let mut p = path.clone();
                p.push(j);
                stack.push((c, p));
            }
        }
        out
    }
}

/// Exact intersection of the (certainly-inside) balls along `path`.
pub fn leaf_enclosure(tree: &CantorTree, path: &[usize]) -> Result<IntervalQ> {
    let mut iv = tree.root().inner();
    for i in tree.path_nodes(path)? {
        let b = tree.nodes[i].inner();
        let (lo, lo_open) = if b.lo > iv.lo || (b.lo == iv.lo && b.lo_open) {
            (b.lo.clone(), b.lo_open)
        } else {
            (iv.lo.clone(), iv.lo_open)
        };
        let (hi, hi_open) = if b.hi < iv.hi || (b.hi == iv.hi && b.hi_open) {
            (b.hi.clone(), b.hi_open)
        } else {
            (iv.hi.clone(), iv.hi_open)
        };
        iv = IntervalQ {
            lo,
            hi,
            lo_open,
            hi_open,
        };
    }
    Ok(iv)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Approximation {
    pub p: i64,
    pub q: u64,
    pub level: u32,
    pub m: u32,
}

/// One `(p, q)` per level along `path` such that every point `x` of the leaf
/// enclosure has `|qx - p| < ψ(2^m) ≤ ψ(q)` with `2^{m-1} ≤ q < 2^m`.
pub fn certify_approximations(tree: &CantorTree, path: &[usize]) -> Result<Vec<Approximation>> {
    let leaf = leaf_enclosure(tree, path)?;
    let mut out = Vec::new();
    for i in tree.path_nodes(path)? {
        let n = &tree.nodes[i];
        let (q_lo, q_hi) = Family::D.q_range(n.m);
        let tag = format!("{}/{} at level {}", n.p, n.q, n.level);
        if !(q_lo..q_hi).contains(&n.q) {
            return Err(Error::verification(
                "approximation",
                format!("{tag}: q out of range"),
            ));
        }
        // |x - p/q| < radius_lo = ψ_lo(2^m)/q, and ψ(2^m) ≤ ψ(q) because q < 2^m.
        if !n.inner().contains(&leaf) {
            return Err(Error::verification(
                "approximation",
                format!("{tag}: leaf not inside"),
            ));
        }
        out.push(Approximation {
            p: n.p,
            q: n.q,
            level: n.level,
            m: n.m,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeCheck {
    pub id: String,
    pub pass: bool,
    pub failures: u64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: u32,
    pub m: u32,
    pub nodes: usize,
    pub children_min: usize,
    pub children_max: usize,
    pub band_ratio: f64,
    pub log2_mean_children: f64,
    /// `M_n(v+1)s - M_{n-1}(v+1)s - M_n(v-1)`
    pub predicted_log2: f64,
    /// Smallest `μ(ball) lower bound / required bound` over the level.
    pub measure_worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeReport {
    pub a1_hat: f64,
    pub checks: Vec<SchemeCheck>,
    pub levels: Vec<LevelReport>,
    pub pass: bool,
}

impl SchemeReport {
    pub fn failing(&self) -> impl Iterator<Item = &SchemeCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Default)]
struct Tally {
    failures: u64,
    first: Option<String>,
}

impl Tally {
    fn fail(&mut self, detail: impl FnOnce() -> String) {
        self.failures += 1;
        if self.first.is_none() {
            self.first = Some(detail());
        }
    }

    fn into_check(self, id: &str, ok_detail: String) -> SchemeCheck {
        SchemeCheck {
            id: id.to_string(),
            pass: self.failures == 0,
            failures: self.failures,
            detail: self.first.unwrap_or(ok_detail),
        }
    }
}

/// Re-checks every structural invariant exactly and the measure lower bound
/// `μ(B(x,r)) ≥ (2/3)^s · a1_hat · r^s` with rigorous enclosures.
pub fn verify_scheme(
    tree: &CantorTree,
    mu: &SelfSimilarMeasure,
    regularity: &RegularityEstimate,
) -> SchemeReport {
    let ifs = &tree.ifs;
    let hull = ifs.hull();
    let diam = ifs.diam();
    let c1 = ifs.ratio_min().clone();
    let params = &tree.params;
    let s = mu.s();
    let a1 = regularity.a1_hat;

    let mut nesting = Tally::default();
    let mut mono = Tally::default();
    let mut support = Tally::default();
    let mut window = Tally::default();
    let mut radius = Tally::default();
    for n in tree.nodes.iter().skip(1) {
        let parent = &tree.nodes[n.parent.expect("non-root")];
        let tag = || format!("{}/{} (level {}, word {})", n.p, n.q, n.level, n.word);
        if !parent.inner().contains(&n.closed()) {
            nesting.fail(tag);
        }
        if !parent.word.is_prefix_of(&n.word) {
            mono.fail(tag);
        }
        let Ok(f) = ifs.compose_word(&n.word) else {
            support.fail(tag);
            continue;
        };
        if !IntervalQ::ball(&n.center(), &(&n.radius_lo * rq(2, 3))).contains(&f.image(hull)) {
            support.fail(tag);
        }
        let sc = params.scale(n.m);
        let d_beta = &f.ratio * &diam;
        if d_beta < &c1 * &sc.1 / qi(3) || d_beta > &tree.l_const.0 * &sc.0 / qi(3) {
            window.fail(tag);
        }
        let (q_lo, q_hi) = Family::D.q_range(n.m);
        if !(q_lo..q_hi).contains(&n.q) || params.level_m(n.level) != Some(n.m) {
            radius.fail(tag);
        }
    }

    let mut disjoint = Tally::default();
    for (k, level) in tree.levels.iter().enumerate().skip(1) {
        let balls: Vec<RationalBall> = level.iter().map(|&i| tree.nodes[i].as_ball()).collect();
        let d = check_pairwise_disjoint(&balls);
        if !d.disjoint {
            disjoint.fail(|| format!("level {k}"));
        }
    }

    let jobs: Vec<usize> = (1..tree.nodes.len()).collect();
    let factor = (2.0f64 / 3.0).powf(s) * a1;
    let ratios: Vec<f64> = jobs
        .par_iter()
        .map(|&i| {
            let n = &tree.nodes[i];
            let ball = IntervalQ::closed_ball(&n.center(), &n.radius_lo);
            let cap = mu.scale_depth(&(&n.radius_lo * qi(2))) + params.measure_depth;
            let e = mu.measure_interval(&ball, cap);
            let need = factor * (s * log2_abs(&n.radius_hi)).exp2();
            e.lo / need
        })
        .collect();
    let mut measure = Tally::default();
    for (&i, &r) in jobs.iter().zip(&ratios) {
        if !(r >= 1.0) {
            let n = &tree.nodes[i];
            measure.fail(|| format!("{}/{} at level {}: ratio {r:.6}", n.p, n.q, n.level));
        }
    }

    let mut band = Tally::default();
    let mut levels = Vec::new();
    for k in 1..tree.levels.len() {
        let counts: Vec<usize> = tree.levels[k - 1]
            .iter()
            .map(|&i| tree.nodes[i].children.len())
            .collect();
        let cmin = counts.iter().copied().min().unwrap_or(0);
        let cmax = counts.iter().copied().max().unwrap_or(0);
        let ratio = if cmin == 0 {
            f64::INFINITY
        } else {
            cmax as f64 / cmin as f64
        };
        if !(ratio <= CHILD_BAND) {
            band.fail(|| format!("level {k}: max/min = {cmax}/{cmin}"));
        }
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        let (m_prev, m_here) = (params.m(k as u32 - 1), params.m(k as u32));
        let vf = crate::rational::to_f64(&params.v);
        let worst = tree.levels[k]
            .iter()
            .map(|&i| ratios[i - 1])
            .fold(f64::INFINITY, f64::min);
        levels.push(LevelReport {
            level: k as u32,
            m: m_here,
            nodes: tree.levels[k].len(),
            children_min: cmin,
            children_max: cmax,
            band_ratio: ratio,
            log2_mean_children: mean.log2(),
            predicted_log2: (m_here as f64 - m_prev as f64) * (vf + 1.0) * s
                - m_here as f64 * (vf - 1.0),
            measure_worst_ratio: worst,
        });
    }

    let mut certs = Tally::default();
    let paths = tree.leaf_paths();
    let want = tree.depth() as usize;
    for path in &paths {
        match certify_approximations(tree, path) {
            Ok(a) if a.len() == want => {}
            Ok(a) => certs.fail(|| format!("path {path:?}: {} pairs", a.len())),
            Err(e) => certs.fail(|| format!("path {path:?}: {e}")),
        }
    }

    let nn = tree.nodes.len() - 1;
    let checks = vec![
        nesting.into_check("nesting", format!("{nn} edges")),
        disjoint.into_check("sibling-disjointness", format!("{} levels", tree.depth())),
        mono.into_check("branch-monotonicity", format!("{nn} edges")),
        support.into_check("support-in-ball", format!("{nn} nodes")),
        window.into_check("diameter-window", format!("{nn} nodes")),
        radius.into_check("radius-window", format!("{nn} nodes")),
        measure.into_check("measure-lower-bound", format!("{nn} nodes, a1_hat {a1:.6}")),
        band.into_check("child-count-band", format!("max/min ≤ {CHILD_BAND}")),
        certs.into_check(
            "leaf-certificates",
            format!("{} leaf paths x {want} pairs", paths.len()),
        ),
    ];
    SchemeReport {
        a1_hat: a1,
        pass: checks.iter().all(|c| c.pass),
        checks,
        levels,
    }
}

// Structured dump. Rationals travel as "num/den" strings, words as
// one-based dotted symbol strings.

pub const TREE_FORMAT: &str = "selfsim-cantor-tree/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsDump {
    pub v: String,
    pub u: u32,
    pub m0: u32,
    pub depth: u32,
    pub attractor_depth: u32,
    pub measure_depth: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub level: u32,
    pub m: u32,
    pub p: i64,
    pub q: u64,
    #[serde(with = "crate::serde_q")]
    pub radius_lo: Q,
    #[serde(with = "crate::serde_q")]
    pub radius_hi: Q,
    pub word: Word,
    pub children: Vec<NodeDump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDump {
    pub format: String,
    pub ifs: Vec<Affine1D>,
    pub params: ParamsDump,
    pub l_const: [String; 2],
    pub stats: Vec<LevelStats>,
    pub root: NodeDump,
}

impl CantorTree {
    pub fn to_dump(&self) -> TreeDump {
        fn node(t: &CantorTree, i: usize) -> NodeDump {
            let n = &t.nodes[i];
            NodeDump {
                level: n.level,
                m: n.m,
                p: n.p,
                q: n.q,
                radius_lo: n.radius_lo.clone(),
                radius_hi: n.radius_hi.clone(),
                word: n.word.clone(),
                children: n.children.iter().map(|&c| node(t, c)).collect(),
            }
        }
        let p = &self.params;
        TreeDump {
            format: TREE_FORMAT.to_string(),
            ifs: self.ifs.maps().to_vec(),
            params: ParamsDump {
                v: fmt_q(&p.v),
                u: p.u,
                m0: p.m0,
                depth: p.depth,
                attractor_depth: p.attractor_depth,
                measure_depth: p.measure_depth,
            },
            l_const: [fmt_q(&self.l_const.0), fmt_q(&self.l_const.1)],
            stats: self.stats.clone(),
            root: node(self, 0),
        }
    }

    /// Rebuilds the arena from a dump. Only shape is checked here; the
    /// geometric invariants are re-verified by [`verify_scheme`].
    pub fn from_dump(d: &TreeDump) -> Result<CantorTree> {
        if d.format != TREE_FORMAT {
            return Err(Error::invalid("format", format!("expected {TREE_FORMAT}")));
        }
        let ifs = Ifs1D::new(d.ifs.clone())?;
        let params = SchemeParams {
            v: parse_q(&d.params.v)?,
            u: d.params.u,
            m0: d.params.m0,
            depth: d.params.depth,
            attractor_depth: d.params.attractor_depth,
            measure_depth: d.params.measure_depth,
        };
        params.validate()?;
        let l_const = (parse_q(&d.l_const[0])?, parse_q(&d.l_const[1])?);
        let mut tree = CantorTree {
            params,
            ifs,
            nodes: Vec::new(),
            levels: Vec::new(),
            l_const,
            stats: d.stats.clone(),
        };
        let mut stack: Vec<(&NodeDump, Option<usize>)> = vec![(&d.root, None)];
        while let Some((nd, parent)) = stack.pop() {
            let expect = parent.map_or(0, |p| tree.nodes[p].level + 1);
            if nd.level != expect {
                return Err(Error::invalid(
                    "root",
                    format!("node {}/{} has level {}", nd.p, nd.q, nd.level),
                ));
            }
            if nd.q == 0 || !nd.radius_lo.is_positive() || nd.radius_lo > nd.radius_hi {
                return Err(Error::invalid(
                    "root",
                    format!("node {}/{} is malformed", nd.p, nd.q),
                ));
            }
            let id = tree.nodes.len();
            tree.nodes.push(CantorNode {
                level: nd.level,
                m: nd.m,
                p: nd.p,
                q: nd.q,
                radius_lo: nd.radius_lo.clone(),
                radius_hi: nd.radius_hi.clone(),
                word: nd.word.clone(),
                parent,
                children: Vec::new(),
            });
            if let Some(p) = parent {
                tree.nodes[p].children.push(id);
            }
            if tree.levels.len() <= nd.level as usize {
                tree.levels.push(Vec::new());
            }
            tree.levels[nd.level as usize].push(id);
            for c in nd.children.iter().rev() {
                stack.push((c, Some(id)));
            }
        }
        // Depth-first insertion keeps each level in sibling order, parents first.
        if tree.depth() != tree.params.depth {
            return Err(Error::invalid("depth", "tree depth disagrees with params"));
        }
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;
    use num_traits::Zero;

    fn cantor() -> Ifs1D {
        Ifs1D::new(vec![
            Affine1D::new(q(1, 3), q(0, 1)),
            Affine1D::new(q(1, 3), q(2, 3)),
        ])
        .unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::new(q(5, 4), 2, 3, 2).is_ok());
        assert!(SchemeParams::new(q(1, 1), 2, 3, 2).is_err());
        assert!(SchemeParams::new(q(5, 4), 1, 3, 2).is_err());
        assert!(SchemeParams::new(q(5, 4), 2, 0, 2).is_err());
        assert!(SchemeParams::new(q(5, 4), 2, 3, 4).is_err());
        let p = SchemeParams::new(q(5, 4), 2, 3, 3).unwrap();
        assert_eq!(
            (0..=3).map(|n| p.m(n)).collect::<Vec<_>>(),
            vec![3, 6, 12, 24]
        );
    }

    #[test]
    fn depth_zero_is_root_only() {
        let t = build_scheme(&cantor(), &SchemeParams::new(q(5, 4), 2, 3, 0).unwrap()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.root().center(), q(0, 1));
        assert_eq!(t.root().radius_lo, q(4, 1));
        assert_eq!(t.leaf_paths(), vec![Vec::<usize>::new()]);
        assert!(certify_approximations(&t, &[]).unwrap().is_empty());
        assert_eq!(
            leaf_enclosure(&t, &[]).unwrap(),
            IntervalQ::ball(&q(0, 1), &q(4, 1))
        );
    }

    #[test]
    fn level_one_children_match_brute_force() {
        let ifs = cantor();
        let t = build_scheme(&ifs, &SchemeParams::new(q(5, 4), 2, 3, 1).unwrap()).unwrap();
        let got: Vec<(i64, u64)> = t.levels[1]
            .iter()
            .map(|&i| (t.nodes[i].p, t.nodes[i].q))
            .collect();
        // Oracle: every primitive p/q in [32, 64) with a Cantor point within
        // ψ(64)/(3q) of p/q, found by exact ternary refinement.
        let psi = ApproxSpec::power_law(q(5, 4)).unwrap().bracket(6).unwrap();
        let mut want = Vec::new();
        for qq in 32u64..64 {
            for p in 0..=qq as i64 {
                if num_integer::Integer::gcd(&p, &(qq as i64)) != 1 {
                    continue;
                }
                let x = q(p, qq as i64);
                let lo = &psi.0 / qi(3 * qq as i64);
                let hi = &psi.1 / qi(3 * qq as i64);
                match cantor_meets(&(&x - &lo), &(&x + &lo), &(&x - &hi), &(&x + &hi), 30) {
                    Some(true) => want.push((p, qq)),
                    Some(false) => {}
                    None => panic!("oracle undecided at {p}/{qq}"),
                }
            }
        }
        assert_eq!(got, want);
        assert_eq!(t.stats[0].undecided_dropped, 0);
    }

    /// Does the Cantor set meet the open interval? `Some(true)` once a
    /// ternary cylinder sits inside `(a, b)` or an endpoint does, `Some(false)`
    /// once no cylinder meets the wider `(a2, b2)`.
    fn cantor_meets(a: &Q, b: &Q, a2: &Q, b2: &Q, depth: u32) -> Option<bool> {
        let mut frontier = vec![(Q::zero(), Q::one())];
        for _ in 0..=depth {
            let mut next = Vec::new();
            for (lo, hi) in frontier {
                if hi <= *a2 || lo >= *b2 {
                    continue;
                }
                if (lo > *a && lo < *b) || (hi > *a && hi < *b) {
                    return Some(true);
                }
                let w = (&hi - &lo) / qi(3);
                next.push((lo.clone(), &lo + &w));
                next.push((&hi - &w, hi));
            }
            if next.is_empty() {
                return Some(false);
            }
            frontier = next;
        }
        None
    }

    #[test]
    fn dump_round_trip() {
        let t = build_scheme(&cantor(), &SchemeParams::new(q(5, 4), 2, 3, 1).unwrap()).unwrap();
        let d = t.to_dump();
        let json = serde_json::to_string(&d).unwrap();
        let back: TreeDump = serde_json::from_str(&json).unwrap();
        assert_eq!(CantorTree::from_dump(&back).unwrap(), t);
        let mut bad = back.clone();
        bad.format = "other".into();
        assert!(CantorTree::from_dump(&bad).is_err());
    }

    #[test]
    fn huge_v_starves_nodes() {
        let err =
            build_scheme(&cantor(), &SchemeParams::new(q(10, 1), 2, 3, 2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::ZeroChildren { .. }), "{err:?}");
    }

    #[test]
    fn paths_and_enclosures() {
        let t = build_scheme(&cantor(), &SchemeParams::new(q(5, 4), 2, 3, 1).unwrap()).unwrap();
        let id = t.levels[1][0];
        assert_eq!(leaf_enclosure(&t, &[0]).unwrap(), t.nodes[id].inner());
        assert!(leaf_enclosure(&t, &[usize::MAX]).is_err());
        assert!(leaf_enclosure(&t, &[0, 0]).is_err());
        let cert = certify_approximations(&t, &[0]).unwrap();
        assert_eq!(cert.len(), 1);
        assert!((32..64).contains(&cert[0].q));
    }
}
