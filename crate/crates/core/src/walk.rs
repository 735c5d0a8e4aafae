//! Depth-first traversal of the cylinder tree with outward-rounded float maps.
//!
//! Every comparison first tries the float enclosures and only falls back to
//! exact rationals (recomputed from the word) when the enclosures overlap,
//! so answers are exact while the common case stays in `f64`.

use std::cell::OnceCell;

use crate::ifs::{HitKind, Ifs1D};
use crate::interval::IntervalQ;
use crate::rational::{decide_le, FInterval, Q};

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct FAffine {
    pub c: FInterval,
    pub b: FInterval,
}

impl FAffine {
    pub const IDENTITY: FAffine = FAffine {
        c: FInterval::ONE,
        b: FInterval::ZERO,
    };

    /// `self ∘ inner`
    pub fn then(&self, inner: &FAffine) -> FAffine {
        FAffine {
            c: self.c.mul(inner.c),
            b: self.c.mul(inner.b).add(self.b),
        }
    }

    pub fn apply(&self, x: FInterval) -> FInterval {
        self.c.mul(x).add(self.b)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Frame {
    pub map: FAffine,
    pub w_lo: f64,
    pub w_hi: f64,
}

impl Frame {
    pub const ROOT: Frame = Frame {
        map: FAffine::IDENTITY,
        w_lo: 1.0,
        w_hi: 1.0,
    };
}

enum Src<'a> {
    Fixed,
    Ball { p: i64, q: u64, psi: &'a Q },
    Cyl { ifs: &'a Ifs1D, word: &'a [u16] },
}

/// An interval whose exact endpoints are only materialised on demand.
pub(crate) struct Span<'a> {
    pub flo: FInterval,
    pub fhi: FInterval,
    pub lo_open: bool,
    pub hi_open: bool,
    src: Src<'a>,
    exact: OnceCell<(Q, Q)>,
}

impl<'a> Span<'a> {
    pub fn from_interval(iv: &IntervalQ) -> Span<'static> {
        let cell = OnceCell::new();
        let _ = cell.set((iv.lo.clone(), iv.hi.clone()));
        Span {
            flo: FInterval::of(&iv.lo),
            fhi: FInterval::of(&iv.hi),
            lo_open: iv.lo_open,
            hi_open: iv.hi_open,
            src: Src::Fixed,
            exact: cell,
        }
    }

    /// Ball centred at `p/q` of radius `psi/q`; `fpsi` must enclose `psi`.
    pub fn ball(p: i64, q: u64, psi: &'a Q, fpsi: FInterval, open: bool) -> Span<'a> {
        let c = FInterval::ratio(p, q);
        let r = fpsi.div_pos(FInterval::point(q as f64));
        Span {
            flo: c.sub(r),
            fhi: c.add(r),
            lo_open: open,
            hi_open: open,
            src: Src::Ball { p, q, psi },
            exact: OnceCell::new(),
        }
    }

    pub fn cylinder(ifs: &'a Ifs1D, word: &'a [u16], map: &FAffine) -> Span<'a> {
        let (ha, hb) = ifs.fhull();
        Span {
            flo: map.apply(ha),
            fhi: map.apply(hb),
            lo_open: false,
            hi_open: false,
            src: Src::Cyl { ifs, word },
            exact: OnceCell::new(),
        }
    }

    pub fn exact(&self) -> &(Q, Q) {
        self.exact.get_or_init(|| match &self.src {
            Src::Fixed => unreachable!("fixed spans are initialised eagerly"),
            Src::Ball { p, q, psi } => {
                let c = crate::rational::q(*p, *q as i64);
                let r = *psi / crate::rational::qi(*q as i64);
                (&c - &r, &c + &r)
            }
            Src::Cyl { ifs, word } => {
                let f = ifs.compose_raw(word);
                let h = ifs.hull();
                (f.apply(&h.lo), f.apply(&h.hi))
            }
        })
    }
}

/// Whether two spans share a point.
pub(crate) fn meets(a: &Span, b: &Span) -> bool {
    decide_le(a.flo, b.fhi, a.lo_open || b.hi_open, || {
        a.exact().0.cmp(&b.exact().1)
    }) && decide_le(b.flo, a.fhi, b.lo_open || a.hi_open, || {
        b.exact().0.cmp(&a.exact().1)
    })
}

/// Whether `inner ⊆ outer`.
pub(crate) fn contains(outer: &Span, inner: &Span) -> bool {
    decide_le(
        outer.flo,
        inner.flo,
        outer.lo_open && !inner.lo_open,
        || outer.exact().0.cmp(&inner.exact().0),
    ) && decide_le(
        inner.fhi,
        outer.fhi,
        outer.hi_open && !inner.hi_open,
        || inner.exact().1.cmp(&outer.exact().1),
    )
}

pub(crate) enum Step {
    Prune,
    Descend,
    Stop,
}

pub(crate) struct Node<'s, 'a> {
    pub span: &'s Span<'a>,
    pub word: &'a [u16],
    pub depth: u32,
    pub w_lo: f64,
    pub w_hi: f64,
}

/// Walks the cylinder subtree rooted at `start`. `weights` holds per-map
/// enclosures `(lo, hi)` of the measure weights; pass `None` to skip them.
pub(crate) fn walk(
    ifs: &Ifs1D,
    start: &[u16],
    start_frame: Frame,
    weights: Option<&[(f64, f64)]>,
    mut visit: impl FnMut(&Node) -> Step,
) {
    let l = ifs.len();
    let mut word: Vec<u16> = start.to_vec();
    let mut stack: Vec<(Frame, u16)> = Vec::with_capacity(64);

    let first = {
        let span = Span::cylinder(ifs, &word, &start_frame.map);
        visit(&Node {
            span: &span,
            word: &word,
            depth: word.len() as u32,
            w_lo: start_frame.w_lo,
            w_hi: start_frame.w_hi,
        })
    };
    match first {
        Step::Descend => stack.push((start_frame, 0)),
        Step::Prune | Step::Stop => return,
    }
    let fmaps = ifs.fmaps();
    while let Some(top) = stack.last_mut() {
        if top.1 as usize == l {
            stack.pop();
            if !stack.is_empty() {
                word.pop();
            }
            continue;
        }
        let i = top.1 as usize;
        top.1 += 1;
        let parent = top.0;
        let (w_lo, w_hi) = match weights {
            Some(w) => (
                (parent.w_lo * w[i].0).next_down().max(0.0),
                (parent.w_hi * w[i].1).next_up(),
            ),
            None => (1.0, 1.0),
        };
        let child = Frame {
            map: parent.map.then(&fmaps[i]),
            w_lo,
            w_hi,
        };
        word.push(i as u16);
        let step = {
            let span = Span::cylinder(ifs, &word, &child.map);
            visit(&Node {
                span: &span,
                word: &word,
                depth: word.len() as u32,
                w_lo: child.w_lo,
                w_hi: child.w_hi,
            })
        };
        match step {
            Step::Stop => return,
            Step::Prune => {
                word.pop();
            }
            Step::Descend => stack.push((child, 0)),
        }
    }
}

/// Float frame of an explicit word, composed from the root.
pub(crate) fn frame_of(ifs: &Ifs1D, word: &[u16], weights: Option<&[(f64, f64)]>) -> Frame {
    let mut f = Frame::ROOT;
    for &i in word {
        let i = i as usize;
        f.map = f.map.then(&ifs.fmaps()[i]);
        if let Some(w) = weights {
            f.w_lo = (f.w_lo * w[i].0).next_down().max(0.0);
            f.w_hi = (f.w_hi * w[i].1).next_up();
        }
    }
    f
}

pub(crate) enum Found {
    Yes(Vec<u16>, HitKind),
    No,
    Undecided,
}

/// Whether an endpoint of the cylinder `cyl` lies in `target`.
fn endpoint_in(target: &Span, cyl: &Span, left: bool) -> bool {
    let fx = if left { cyl.flo } else { cyl.fhi };
    let x = || if left { &cyl.exact().0 } else { &cyl.exact().1 };
    decide_le(target.flo, fx, target.lo_open, || target.exact().0.cmp(x()))
        && decide_le(fx, target.fhi, target.hi_open, || {
            x().cmp(&target.exact().1)
        })
}

/// Decides whether the attractor piece under `start` meets `outer`, using
/// cylinders inside `inner` as certificates of a hit. `inner ⊆ outer` is
/// expected: a hit is a cylinder inside `inner`, a miss means no cylinder
/// meets `outer`.
pub(crate) fn search(
    ifs: &Ifs1D,
    start: &[u16],
    frame: Frame,
    inner: &Span,
    outer: &Span,
    cap: u32,
    visits: &mut u64,
) -> Found {
    let mut hit: Option<(Vec<u16>, HitKind)> = None;
    let mut undecided = false;
    walk(ifs, start, frame, None, |n| {
        *visits += 1;
        if !meets(n.span, outer) {
            return Step::Prune;
        }
        if contains(inner, n.span) {
            hit = Some((n.word.to_vec(), HitKind::Cylinder));
            return Step::Stop;
        }
        if n.depth >= cap {
            // Cylinder endpoints are attractor points; they settle targets
            // that only touch the attractor at isolated points.
            for (left, kind) in [
                (true, HitKind::LeftEndpoint),
                (false, HitKind::RightEndpoint),
            ] {
                if endpoint_in(inner, n.span, left) {
                    hit = Some((n.word.to_vec(), kind));
                    return Step::Stop;
                }
            }
            undecided = true;
            return Step::Prune;
        }
        Step::Descend
    });
    match hit {
        Some((w, k)) => Found::Yes(w, k),
        None if undecided => Found::Undecided,
        None => Found::No,
    }
}
