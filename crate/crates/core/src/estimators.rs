//! Upper-bound side: Hausdorff cover sums over level families and the
//! empirical critical exponent where those sums switch from diverging to
//! converging.

use num_traits::One;
use serde::Serialize;

use crate::approx::ApproxSpec;
use crate::covers::CountRow;
use crate::error::{Error, Result};
use crate::fit::{least_squares, ScalingFit};
use crate::rational::log2_abs;

/// Fitted per-level slopes inside `[-DEAD_ZONE, DEAD_ZONE]` are inconclusive.
pub const DEAD_ZONE: f64 = 0.05;

/// Assumed spectral-gap exponent when flagging fast-decaying ψ: runs whose
/// `log2 ψ(2^m)` falls faster than `-(κ/2 + 1)` per level are outside the
/// regime in which the counting estimates were validated.
pub const ASSUMED_KAPPA: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converging,
    Diverging,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelMass {
    pub m: u32,
    pub count: u64,
    /// Upper-rounded cover-set diameter `2ψ(2^m)/2^m`.
    pub diam: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverSumReport {
    pub l: f64,
    pub start: u32,
    pub per_level: Vec<LevelMass>,
    /// `Σ_{start ≤ m ≤ k}` for each `k` in order.
    pub cumulative: Vec<f64>,
    /// `(M, Σ_{m ≥ M})` for each start level `M ≥ start`.
    pub tails: Vec<(u32, f64)>,
    pub slope: Option<f64>,
    pub verdict: Verdict,
    pub outside_validated_regime: bool,
}

/// `log2` of the upper-rounded diameter `2ψ_hi(2^m)/2^m`.
fn log2_diam(spec: &ApproxSpec, m: u32) -> Result<f64> {
    let hi = spec.bracket(m)?.1;
    if hi <= num_traits::Zero::zero() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(log2_abs(&hi) + 1.0 - m as f64)
}

/// Per-level masses `count_hits(m) · (2ψ(2^m)/2^m)^l` and their partial sums from `start` on.
pub fn hausdorff_partial_sum(
    counts: &[CountRow],
    spec: &ApproxSpec,
    l: f64,
    start: u32,
) -> Result<CoverSumReport> {
    if counts.is_empty() {
        return Err(Error::invalid("counts", "empty count table"));
    }
    if !(l >= 0.0) {
        return Err(Error::invalid("l", "must be non-negative"));
    }
    if !counts.iter().any(|r| r.m == start) {
        return Err(Error::invalid(
            "start",
            format!("level {start} is not in the table"),
        ));
    }
    let mut rows: Vec<&CountRow> = counts.iter().filter(|r| r.m >= start).collect();
    rows.sort_by_key(|r| r.m);
    let mut per_level = Vec::with_capacity(rows.len());
    for r in &rows {
        let ld = log2_diam(spec, r.m)?;
        let diam = ld.exp2().next_up();
        let mass = if r.count_hits == 0 {
            0.0
        } else {
            (r.count_hits as f64) * (l * ld).exp2()
        };
        per_level.push(LevelMass {
            m: r.m,
            count: r.count_hits,
            diam,
            mass,
        });
    }
    let mut cumulative = Vec::with_capacity(per_level.len());
    let mut acc = 0.0;
    for lm in &per_level {
        acc += lm.mass;
        cumulative.push(acc);
    }
    let mut tails = vec![(0u32, 0.0f64); per_level.len()];
    let mut acc = 0.0;
    for (k, lm) in per_level.iter().enumerate().rev() {
        acc += lm.mass;
        tails[k] = (lm.m, acc);
    }
    let pos: Vec<&LevelMass> = per_level.iter().filter(|x| x.mass > 0.0).collect();
    let (slope, verdict) = if pos.is_empty() {
        (None, Verdict::Converging)
    } else if pos.len() < 2 {
        (None, Verdict::Inconclusive)
    } else {
        let xs: Vec<f64> = pos.iter().map(|x| x.m as f64).collect();
        let ys: Vec<f64> = pos.iter().map(|x| x.mass.log2()).collect();
        let s = least_squares(&xs, &ys)?.slope;
        let v = if s < -DEAD_ZONE {
            Verdict::Converging
        } else if s > DEAD_ZONE {
            Verdict::Diverging
        } else {
            Verdict::Inconclusive
        };
        (Some(s), v)
    };
    Ok(CoverSumReport {
        l,
        start,
        per_level,
        cumulative,
        tails,
        slope,
        verdict,
        outside_validated_regime: is_fast_decay(spec, rows.iter().map(|r| r.m))?,
    })
}

/// Whether ψ decays faster than `2^{-(κ/2+1) m}` over the given levels.
pub fn is_fast_decay(spec: &ApproxSpec, levels: impl Iterator<Item = u32>) -> Result<bool> {
    let threshold = ASSUMED_KAPPA / 2.0 + 1.0;
    let ms: Vec<u32> = levels.collect();
    if spec.is_zero() {
        return Ok(false);
    }
    let rate = match spec.exponent() {
        Some(v) => crate::rational::to_f64(v),
        None => {
            if ms.len() < 2 {
                return Ok(false);
            }
            let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
            let ys = ms
                .iter()
                .map(|&m| spec.log2_at(m))
                .collect::<Result<Vec<f64>>>()?;
            -least_squares(&xs, &ys)?.slope
        }
    };
    Ok(rate > threshold)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalExponent {
    /// From certified hits only.
    pub l_star: f64,
    /// From hits plus undecided balls.
    pub l_star_bracketed: f64,
    pub count_fit: ScalingFit,
    /// Fitted slope of `log2` of the cover diameter against `m`.
    pub diam_slope: f64,
}

/// The `l` at which the fitted per-level cover mass exponent vanishes:
/// `count_slope + l · diam_slope = 0`, both slopes fitted from the data.
pub fn critical_exponent(
    counts: &[CountRow],
    spec: &ApproxSpec,
    m_range: std::ops::RangeInclusive<u32>,
) -> Result<CriticalExponent> {
    if let Some(v) = spec.exponent() {
        if *v <= crate::rational::Q::one() {
            return Err(Error::invalid("v", "critical exponent needs v > 1"));
        }
    }
    let rows: Vec<&CountRow> = counts.iter().filter(|r| m_range.contains(&r.m)).collect();
    if rows.len() != m_range.clone().count() {
        return Err(Error::invalid(
            "counts",
            "table does not cover the requested levels",
        ));
    }
    let hits: Vec<&&CountRow> = rows.iter().filter(|r| r.count_hits > 0).collect();
    let upper: Vec<&&CountRow> = rows
        .iter()
        .filter(|r| r.count_hits + r.count_undecided > 0)
        .collect();
    if hits.len() < 3 {
        return Err(Error::Degenerate(format!(
            "only {} levels with hits; at least 3 are needed",
            hits.len()
        )));
    }
    let fit = |rs: &[&&CountRow], f: &dyn Fn(&CountRow) -> u64| -> Result<(f64, f64, f64, f64)> {
        let xs: Vec<f64> = rs.iter().map(|r| r.m as f64).collect();
        let ys: Vec<f64> = rs.iter().map(|r| (f(r) as f64).log2()).collect();
        let dys = rs
            .iter()
            .map(|r| log2_diam(spec, r.m))
            .collect::<Result<Vec<f64>>>()?;
        let c = least_squares(&xs, &ys)?;
        let d = least_squares(&xs, &dys)?;
        Ok((c.slope, c.intercept, c.r2, d.slope))
    };
    let (cs, ci, cr2, ds) = fit(&hits, &|r| r.count_hits)?;
    let (cs_up, _, _, ds_up) = fit(&upper, &|r| r.count_hits + r.count_undecided)?;
    if ds >= 0.0 {
        return Err(Error::Degenerate("cover diameters do not shrink".into()));
    }
    Ok(CriticalExponent {
        l_star: cs / -ds,
        l_star_bracketed: cs_up / -ds_up,
        count_fit: ScalingFit {
            slope: cs,
            intercept: ci,
            r2: cr2,
            levels_used: hits.iter().map(|r| r.m).collect(),
            bracket: Some((cs, cs_up)),
        },
        diam_slope: ds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjectureRow {
    pub v: f64,
    /// `s - 1 + 2/(v+1)`
    pub covering_branch: f64,
    /// `s/(v+1)`
    pub scaling_branch: f64,
    pub max: f64,
    pub scaling_active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConjectureTable {
    pub s: f64,
    pub rows: Vec<ConjectureRow>,
    /// `v = 1/(1-s)`, where the branches cross; none when `s = 1`.
    pub crossover: Option<f64>,
}

pub fn conjecture_table(s: f64, vs: &[f64]) -> Result<ConjectureTable> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::invalid("s", "must lie in (0, 1]"));
    }
    let rows = vs
        .iter()
        .map(|&v| {
            let a = s - 1.0 + 2.0 / (v + 1.0);
            let b = s / (v + 1.0);
            ConjectureRow {
                v,
                covering_branch: a,
                scaling_branch: b,
                max: a.max(b),
                scaling_active: b > a,
            }
        })
        .collect();
    Ok(ConjectureTable {
        s,
        rows,
        crossover: (s < 1.0).then(|| 1.0 / (1.0 - s)),
    })
}
