//! Subcommand definitions and dispatch. Every command writes its artifact
//! atomically (or to stdout) and maps outcomes onto the documented exit codes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use selfsim_core::covers::{check_level_disjoint, count_table};
use selfsim_core::estimators::{conjecture_table, critical_exponent, hausdorff_partial_sum};
use selfsim_core::mass::{assign_mass, frostman_scan, local_exponent_fit, ScanSpec};
use selfsim_core::measure::fit_level_scaling;
use selfsim_core::rational::{fmt_q, pow2, to_f64};
use selfsim_core::scheme::{build_scheme, verify_scheme, SchemeParams, TreeDump};
use selfsim_core::{
    ApproxSpec, CantorTree, CountRow, Error, Family, IntervalQ, SelfSimilarMeasure, Word, Q,
};

use crate::config::{self, load_config, ConfigError, RunConfig};
use crate::output::{csv_string, fmt_f, to_json, write_atomic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_UNDECIDED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "selfsim",
    version,
    about = "Certified computations on self-similar sets and rational ball covers"
)]
pub struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct IfsArg {
    /// TOML file with `[[map]]` entries and optional defaults.
    #[arg(long)]
    pub ifs: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct LevelArgs {
    /// Exponent v of ψ(q) = q^-v, as "num/den".
    #[arg(long)]
    pub v: Option<String>,
    /// Ball family: A (q in [2^m, 2^{m+1})) or D (q in [2^{m-1}, 2^m)).
    #[arg(long)]
    pub family: Option<String>,
    /// Levels, "a..b" inclusive.
    #[arg(long)]
    pub m: Option<String>,
    /// Window "lo,hi"; defaults to the attractor hull.
    #[arg(long)]
    pub window: Option<String>,
    /// Absolute search depth cap for attractor tests.
    #[arg(long)]
    pub depth: Option<u32>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Similarity dimension (root of Σ c_i^s = 1).
    Dim {
        #[command(flatten)]
        ifs: IfsArg,
        #[arg(long, default_value_t = 1e-13)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact convex hull of the attractor.
    Hull {
        #[command(flatten)]
        ifs: IfsArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Open set condition on an open interval (default: hull interior).
    Osc {
        #[command(flatten)]
        ifs: IfsArg,
        #[arg(long)]
        open: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enclosure of the self-similar measure of a closed interval.
    Measure {
        #[command(flatten)]
        ifs: IfsArg,
        #[arg(long)]
        interval: String,
        #[arg(long, default_value_t = 20)]
        depth: u32,
        /// Measure the branch under this word (one-based, dot-separated).
        #[arg(long)]
        branch: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-level counts of balls meeting the attractor (CSV).
    Covers {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact pairwise disjointness of each level's closed balls (CSV).
    Disjoint {
        #[arg(long)]
        v: String,
        #[arg(long, default_value = "A")]
        family: String,
        #[arg(long)]
        m: String,
        #[arg(long, default_value = "0,1")]
        window: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure of each level's union of hit balls and the fitted log-log slope.
    Scaling {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        level: LevelArgs,
        /// Per-level CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fit summary JSON.
        #[arg(long)]
        fit_out: Option<PathBuf>,
    },
    /// Cover sums at exponent l and the empirical critical exponent.
    Critical {
        #[command(flatten)]
        ifs: IfsArg,
        #[command(flatten)]
        level: LevelArgs,
        /// Reuse a count table written by `covers`.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Cover-sum exponent (default: the closed-form prediction).
        #[arg(long)]
        l: Option<f64>,
        /// First level of the partial sums (default: first level of the range).
        #[arg(long)]
        start: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Both branches of the conjectured dimension formula over a list of v.
    Conjecture {
        #[command(flatten)]
        ifs: IfsArg,
        /// Comma-separated exponents.
        #[arg(long)]
        vs: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nested-ball construction.
    #[command(subcommand)]
    Cantor(CantorCommand),
    /// Equal-split mass on a tree: conservation and local exponent.
    Mass {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan m(U) ≤ diam(U)^t over tree balls and dyadic windows.
    Frostman {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        t: f64,
        /// Dyadic exponents "k1..k2" for window diameters 2^-k.
        #[arg(long)]
        scales: Option<String>,
        /// Diameter threshold "num/den" (default: largest level-1 ball diameter).
        #[arg(long)]
        epsilon: Option<String>,
        /// Extra random windows.
        #[arg(long, default_value_t = 0)]
        random: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum CantorCommand {
    /// Build the tree and write its dump.
    Build {
        #[command(flatten)]
        ifs: IfsArg,
        #[arg(long)]
        v: Option<String>,
        #[arg(long, default_value_t = 2)]
        u: u32,
        #[arg(long, default_value_t = 3)]
        m0: u32,
        #[arg(long, default_value_t = 2)]
        depth: u32,
        #[arg(long, default_value_t = selfsim_core::scheme::DEFAULT_ATTRACTOR_DEPTH)]
        attractor_depth: u32,
        #[arg(long, default_value_t = selfsim_core::scheme::DEFAULT_MEASURE_DEPTH)]
        measure_depth: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check every invariant of a dumped tree.
    Verify {
        #[arg(long)]
        tree: PathBuf,
        /// Attractor points sampled for the regularity estimate.
        #[arg(long, default_value_t = 64)]
        centers: usize,
        /// Radii diam·2^-k for k = 1..=scales.
        #[arg(long, default_value_t = 30)]
        scales: u32,
        /// Refinement levels beyond each radius for the regularity estimate.
        #[arg(long, default_value_t = 10)]
        reg_depth: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Why a command did not exit cleanly.
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Violation { invariant: String, detail: String },
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let detail = e.to_string();
        match e {
            Error::Parse(_) => Failure::Config(ConfigError::new("input", detail)),
            Error::Invalid { field, reason } => Failure::Config(ConfigError::new(field, reason)),
            Error::Degenerate(_) => violation("degenerate", detail),
            Error::OscFails => violation("open-set-condition", detail),
            Error::ZeroChildren { .. } => violation("zero-children", detail),
            Error::Verification { invariant, .. } => violation(&invariant, detail),
        }
    }
}

fn violation(id: &str, detail: impl Into<String>) -> Failure {
    Failure::Violation {
        invariant: id.to_string(),
        detail: detail.into(),
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) | Failure::Io(_) => EXIT_CONFIG,
            Failure::Violation { .. } => EXIT_VIOLATION,
        }
    }

    pub fn diagnostic(&self) -> String {
        match self {
            Failure::Config(e) => e.to_string(),
            Failure::Violation { invariant, detail } => {
                format!("invariant {invariant} failed: {detail}")
            }
            Failure::Io(e) => format!("i/o error: {e}"),
        }
    }
}

/// Text for stdout plus an exit code; failures of named invariants after
/// the artifact was written are reported through `violations`.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub violations: Vec<(String, String)>,
    pub undecided: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if !self.violations.is_empty() {
            EXIT_VIOLATION
        } else if self.undecided {
            EXIT_UNDECIDED
        } else {
            EXIT_OK
        }
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn emit(out: &Option<PathBuf>, body: &str, summary: String, o: &mut Outcome) -> Res<()> {
    match out {
        Some(p) => {
            write_atomic(p, body.as_bytes())
                .map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            o.stdout.push_str(&summary);
        }
        None => o.stdout.push_str(body),
    }
    Ok(())
}

fn load(a: &IfsArg) -> Res<RunConfig> {
    Ok(load_config(&a.ifs)?)
}

fn need_v(flag: &Option<String>, cfg: &RunConfig) -> Res<Q> {
    match flag {
        Some(s) => Ok(config::exponent("v", s)?),
        None => cfg
            .v
            .clone()
            .ok_or_else(|| ConfigError::new("v", "required (flag or config file)").into()),
    }
}

struct Levels {
    v: Q,
    spec: ApproxSpec,
    family: Family,
    m: std::ops::RangeInclusive<u32>,
    window: IntervalQ,
    depth: Option<u32>,
}

fn levels(a: &LevelArgs, cfg: &RunConfig, default_family: Family) -> Res<Levels> {
    let v = need_v(&a.v, cfg)?;
    let spec = ApproxSpec::power_law(v.clone())?;
    let family = match &a.family {
        Some(s) => config::family("family", s)?,
        None => cfg.family.unwrap_or(default_family),
    };
    let m = match &a.m {
        Some(s) => config::level_range("m", s)?,
        None => cfg.m_range.clone().ok_or_else(|| {
            Failure::from(ConfigError::new("m", "required (flag or config file)"))
        })?,
    };
    let window = match &a.window {
        Some(s) => config::interval("window", s)?,
        None => cfg.window.clone().unwrap_or_else(|| cfg.ifs.hull().clone()),
    };
    Ok(Levels {
        v,
        spec,
        family,
        m,
        window,
        depth: a.depth.or(cfg.depth),
    })
}

#[derive(Serialize)]
struct QInterval {
    lo: String,
    hi: String,
}

fn qiv(iv: &IntervalQ) -> QInterval {
    QInterval {
        lo: fmt_q(&iv.lo),
        hi: fmt_q(&iv.hi),
    }
}

pub fn run(cmd: &Command) -> Res<Outcome> {
    let mut o = Outcome::default();
    match cmd {
        Command::Dim { ifs, tol, out } => {
            let cfg = load(ifs)?;
            if !(*tol > 0.0) {
                return Err(ConfigError::new("tol", "must be positive").into());
            }
            let d = cfg.ifs.solve_dimension(*tol);
            #[derive(Serialize)]
            struct R {
                s: f64,
                lo: f64,
                hi: f64,
                maps: usize,
            }
            let r = R {
                s: d.value,
                lo: d.lo,
                hi: d.hi,
                maps: cfg.ifs.len(),
            };
            emit(
                out,
                &to_json(&r),
                format!("s = {}\n", fmt_f(d.value)),
                &mut o,
            )?;
        }
        Command::Hull { ifs, out } => {
            let cfg = load(ifs)?;
            let h = cfg.ifs.hull();
            let r = qiv(h);
            emit(
                out,
                &to_json(&r),
                format!("hull = [{}, {}]\n", r.lo, r.hi),
                &mut o,
            )?;
        }
        Command::Osc { ifs, open, out } => {
            let cfg = load(ifs)?;
            let u = match open {
                Some(s) => {
                    let c = config::interval("open", s)?;
                    IntervalQ::open(c.lo, c.hi)
                }
                None => cfg.ifs.default_open_set(),
            };
            let holds = cfg.ifs.check_osc(&u);
            #[derive(Serialize)]
            struct R {
                holds: bool,
                open_set: QInterval,
            }
            let body = to_json(&R {
                holds,
                open_set: qiv(&u),
            });
            emit(out, &body, format!("osc = {holds}\n"), &mut o)?;
            if !holds {
                o.violations.push((
                    "open-set-condition".into(),
                    format!("fails on ({}, {})", fmt_q(&u.lo), fmt_q(&u.hi)),
                ));
            }
        }
        Command::Measure {
            ifs,
            interval,
            depth,
            branch,
            out,
        } => {
            let cfg = load(ifs)?;
            let iv = config::interval("interval", interval)?;
            let mu = SelfSimilarMeasure::new(cfg.ifs.clone())?;
            let e = match branch {
                Some(w) => {
                    let w: Word = w
                        .parse()
                        .map_err(|e: Error| ConfigError::new("branch", e.to_string()))?;
                    mu.branch_measure_interval(&w, &iv, *depth)?
                }
                None => mu.measure_interval(&iv, *depth),
            };
            #[derive(Serialize)]
            struct R {
                interval: QInterval,
                branch: String,
                depth: u32,
                lo: f64,
                hi: f64,
            }
            let r = R {
                interval: qiv(&iv),
                branch: branch.clone().unwrap_or_default(),
                depth: *depth,
                lo: e.lo,
                hi: e.hi,
            };
            emit(
                out,
                &to_json(&r),
                format!("measure in [{}, {}]\n", fmt_f(e.lo), fmt_f(e.hi)),
                &mut o,
            )?;
        }
        Command::Covers { ifs, level, out } => {
            let cfg = load(ifs)?;
            let l = levels(level, &cfg, Family::A)?;
            let rows = count_table(&cfg.ifs, &l.spec, l.family, l.m.clone(), &l.window, l.depth)?;
            let body = counts_csv(&rows);
            let und: u64 = rows.iter().map(|r| r.count_undecided).sum();
            o.undecided = und > 0;
            emit(
                out,
                &body,
                format!("{} levels, {und} undecided balls\n", rows.len()),
                &mut o,
            )?;
        }
        Command::Disjoint {
            v,
            family,
            m,
            window,
            out,
        } => {
            let spec = ApproxSpec::power_law(config::exponent("v", v)?)?;
            let fam = config::family("family", family)?;
            let range = config::level_range("m", m)?;
            let w = config::interval("window", window)?;
            let mut rows = Vec::new();
            let mut bad = Vec::new();
            for lvl in range {
                let d = check_level_disjoint(&spec, lvl, fam, &w)?;
                if !d.disjoint {
                    bad.push(lvl);
                }
                rows.push(vec![
                    lvl.to_string(),
                    d.balls.to_string(),
                    d.disjoint.to_string(),
                    d.min_gap.as_ref().map(fmt_q).unwrap_or_default(),
                ]);
            }
            let body = csv_string(&["m", "balls", "disjoint", "min_gap"], &rows);
            emit(
                out,
                &body,
                format!("{} levels, {} overlapping\n", rows.len(), bad.len()),
                &mut o,
            )?;
            if !bad.is_empty() {
                o.violations
                    .push(("pairwise-disjointness".into(), format!("levels {bad:?}")));
            }
        }
        Command::Scaling {
            ifs,
            level,
            out,
            fit_out,
        } => {
            let cfg = load(ifs)?;
            let l = levels(level, &cfg, Family::D)?;
            let mu = SelfSimilarMeasure::new(cfg.ifs.clone())?;
            let sc = fit_level_scaling(&mu, &l.spec, l.family, l.m.clone())?;
            let rows: Vec<Vec<String>> = sc
                .levels
                .iter()
                .map(|x| {
                    vec![
                        x.m.to_string(),
                        fmt_f(x.enclosure.lo),
                        fmt_f(x.enclosure.hi),
                        fmt_f(x.log2_mid),
                    ]
                })
                .collect();
            let body = csv_string(&["m", "mu_lo", "mu_hi", "log2_mid"], &rows);
            #[derive(Serialize)]
            struct Fit {
                slope: f64,
                intercept: f64,
                r2: f64,
                dropped_levels: Vec<u32>,
                slope_bracket: Option<(f64, f64)>,
            }
            let fit = Fit {
                slope: sc.fit.slope,
                intercept: sc.fit.intercept,
                r2: sc.fit.r2,
                dropped_levels: sc.dropped_levels.clone(),
                slope_bracket: sc.fit.bracket,
            };
            let summary = format!("slope = {}\n", fmt_f(sc.fit.slope));
            emit(out, &body, summary.clone(), &mut o)?;
            if let Some(p) = fit_out {
                write_atomic(p, to_json(&fit).as_bytes())
                    .map_err(|e| Failure::Io(e.to_string()))?;
            } else if out.is_none() {
                o.stdout.push_str(&summary);
            }
        }
        Command::Critical {
            ifs,
            level,
            counts,
            l,
            start,
            out,
        } => {
            let cfg = load(ifs)?;
            let lv = levels(level, &cfg, Family::A)?;
            let rows = match counts {
                Some(p) => read_counts(p)?,
                None => count_table(
                    &cfg.ifs,
                    &lv.spec,
                    lv.family,
                    lv.m.clone(),
                    &lv.window,
                    lv.depth,
                )?,
            };
            let ce = critical_exponent(&rows, &lv.spec, lv.m.clone())?;
            let s = cfg.ifs.solve_dimension(1e-13).value;
            let vf = to_f64(&lv.v);
            let formula = s - 1.0 + 2.0 / (vf + 1.0);
            let lval = l.unwrap_or(formula);
            let start = start.unwrap_or(*lv.m.start());
            let in_range: Vec<CountRow> = rows
                .iter()
                .filter(|r| lv.m.contains(&r.m))
                .cloned()
                .collect();
            let sums = hausdorff_partial_sum(&in_range, &lv.spec, lval, start)?;
            #[derive(Serialize)]
            struct Level {
                m: u32,
                count: u64,
                diam: f64,
                mass: f64,
                cumulative: f64,
            }
            #[derive(Serialize)]
            struct R {
                l: f64,
                verdict: selfsim_core::estimators::Verdict,
                per_level: Vec<Level>,
                l_star: f64,
                l_star_bracketed: f64,
                formula_value: f64,
                abs_gap: f64,
                outside_validated_regime: bool,
            }
            let r = R {
                l: lval,
                verdict: sums.verdict,
                per_level: sums
                    .per_level
                    .iter()
                    .zip(&sums.cumulative)
                    .map(|(p, c)| Level {
                        m: p.m,
                        count: p.count,
                        diam: p.diam,
                        mass: p.mass,
                        cumulative: *c,
                    })
                    .collect(),
                l_star: ce.l_star,
                l_star_bracketed: ce.l_star_bracketed,
                formula_value: formula,
                abs_gap: (ce.l_star - formula).abs(),
                outside_validated_regime: sums.outside_validated_regime,
            };
            let summary = format!(
                "l_star = {} (formula {}), verdict at l = {}: {:?}\n",
                fmt_f(ce.l_star),
                fmt_f(formula),
                fmt_f(lval),
                sums.verdict
            );
            o.undecided = rows
                .iter()
                .any(|r| lv.m.contains(&r.m) && r.count_undecided > 0);
            emit(out, &to_json(&r), summary, &mut o)?;
        }
        Command::Conjecture { ifs, vs, out } => {
            let cfg = load(ifs)?;
            let list = vs
                .split(',')
                .map(|t| {
                    config::rational("vs", t.trim())
                        .map(|q| to_f64(&q))
                        .or_else(|_| {
                            t.trim()
                                .parse::<f64>()
                                .map_err(|_| ConfigError::new("vs", format!("bad number {t:?}")))
                        })
                })
                .collect::<std::result::Result<Vec<f64>, ConfigError>>()?;
            let t = conjecture_table(cfg.ifs.solve_dimension(1e-13).value, &list)?;
            emit(
                out,
                &to_json(&t),
                format!("{} rows\n", t.rows.len()),
                &mut o,
            )?;
        }
        Command::Cantor(c) => run_cantor(c, &mut o)?,
        Command::Mass { tree, out } => {
            let t = read_tree(tree)?;
            let s = t.ifs.solve_dimension(1e-13).value;
            let mt = assign_mass(t)?;
            let conserved = mt
                .level_totals
                .iter()
                .all(|x| *x == Q::from_integer(1.into()));
            let fit = local_exponent_fit(&mt, s)?;
            #[derive(Serialize)]
            struct R {
                level_totals: Vec<String>,
                conserved: bool,
                t_star: f64,
                target: f64,
                theorem_form: f64,
                r2: f64,
                points: usize,
            }
            let r = R {
                level_totals: selfsim_core::mass::level_totals_text(&mt),
                conserved,
                t_star: fit.t_star,
                target: fit.target,
                theorem_form: fit.theorem_form,
                r2: fit.r2,
                points: fit.points,
            };
            emit(
                out,
                &to_json(&r),
                format!(
                    "t_star = {}, target = {}\n",
                    fmt_f(fit.t_star),
                    fmt_f(fit.target)
                ),
                &mut o,
            )?;
            if !conserved {
                o.violations.push((
                    "mass-conservation".into(),
                    "a level total differs from 1".into(),
                ));
            }
        }
        Command::Frostman {
            tree,
            t,
            scales,
            epsilon,
            random,
            seed,
            out,
        } => {
            let mt = assign_mass(read_tree(tree)?)?;
            let scales = scales
                .as_deref()
                .map(|s| config::level_range("scales", s).map(|r| (*r.start(), *r.end())))
                .transpose()?;
            let spec = ScanSpec {
                scales,
                epsilon: epsilon
                    .as_deref()
                    .map(|s| config::rational("epsilon", s))
                    .transpose()?,
                random_windows: *random,
                seed: seed.unwrap_or(0),
            };
            let r = frostman_scan(&mt, *t, &spec)?;
            let summary = format!(
                "worst ratio {} at t = {}: {}\n",
                fmt_f(r.worst_ratio),
                fmt_f(r.t),
                if r.pass { "pass" } else { "fail" }
            );
            emit(out, &to_json(&r), summary, &mut o)?;
            if !r.pass {
                o.violations.push((
                    "frostman-bound".into(),
                    format!(
                        "m(U)/diam(U)^t = {} on [{}, {}]",
                        fmt_f(r.worst_ratio),
                        fmt_q(&r.witness.lo),
                        fmt_q(&r.witness.hi)
                    ),
                ));
            }
        }
    }
    Ok(o)
}

fn run_cantor(c: &CantorCommand, o: &mut Outcome) -> Res<()> {
    match c {
        CantorCommand::Build {
            ifs,
            v,
            u,
            m0,
            depth,
            attractor_depth,
            measure_depth,
            out,
        } => {
            let cfg = load(ifs)?;
            let params = SchemeParams {
                v: need_v(v, &cfg)?,
                u: *u,
                m0: *m0,
                depth: *depth,
                attractor_depth: *attractor_depth,
                measure_depth: *measure_depth,
            };
            params.validate()?;
            let tree = build_scheme(&cfg.ifs, &params)?;
            let mut summary = String::new();
            for s in &tree.stats {
                summary.push_str(&format!(
                    "level {} (M = {}): {} balls, children per parent {}..{}, {} undecided dropped\n",
                    s.level, s.m, s.nodes, s.children_min, s.children_max, s.undecided_dropped
                ));
            }
            emit(out, &to_json(&tree.to_dump()), summary, o)?;
        }
        CantorCommand::Verify {
            tree,
            centers,
            scales,
            reg_depth,
            out,
        } => {
            let t = read_tree(tree)?;
            let mu = SelfSimilarMeasure::new(t.ifs.clone())?;
            let diam = t.ifs.diam();
            let radii: Vec<Q> = (1..=(*scales).max(1) as i64)
                .map(|k| &diam * pow2(-k))
                .collect();
            let reg = mu.estimate_regularity(*centers, &radii, *reg_depth)?;
            let report = verify_scheme(&t, &mu, &reg);
            let mut summary = String::new();
            for c in &report.checks {
                summary.push_str(&format!(
                    "{}: {}\n",
                    c.id,
                    if c.pass { "pass" } else { "FAIL" }
                ));
            }
            emit(out, &to_json(&report), summary, o)?;
            for c in report.failing() {
                o.violations.push((c.id.clone(), c.detail.clone()));
            }
        }
    }
    Ok(())
}

pub fn counts_csv(rows: &[CountRow]) -> String {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                r.count_all.to_string(),
                r.count_hits.to_string(),
                r.count_undecided.to_string(),
                fmt_f(r.log2_radius_hi),
            ]
        })
        .collect();
    csv_string(
        &[
            "m",
            "count_all",
            "count_hits",
            "count_undecided",
            "log2_radius_hi",
        ],
        &rows,
    )
}

pub fn read_counts(path: &Path) -> Res<Vec<CountRow>> {
    let bad = |why: String| {
        Failure::from(ConfigError::new(
            "counts",
            format!("{}: {why}", path.display()),
        ))
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let want = [
        "m",
        "count_all",
        "count_hits",
        "count_undecided",
        "log2_radius_hi",
    ];
    if header.iter().collect::<Vec<_>>() != want {
        return Err(bad(format!("expected columns {}", want.join(","))));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let int = |k: usize| {
            rec[k]
                .parse::<u64>()
                .map_err(|_| bad(format!("bad integer {:?}", &rec[k])))
        };
        rows.push(CountRow {
            m: int(0)? as u32,
            count_all: int(1)?,
            count_hits: int(2)?,
            count_undecided: int(3)?,
            log2_radius_hi: rec[4]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number {:?}", &rec[4])))?,
        });
    }
    Ok(rows)
}

pub fn read_tree(path: &Path) -> Res<CantorTree> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::from(ConfigError::new("tree", format!("{}: {e}", path.display()))))?;
    let dump: TreeDump = serde_json::from_str(&text)
        .map_err(|e| Failure::from(ConfigError::new("tree", e.to_string())))?;
    Ok(CantorTree::from_dump(&dump)?)
}

/// Parses, runs on a pool of the requested size, and returns the exit code,
/// writing stdout and diagnostics through the given sinks.
pub fn main_with(
    args: &[String],
    stdout: &mut dyn std::io::Write,
    stderr: &mut dyn std::io::Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
            if code == EXIT_OK {
                let _ = write!(stdout, "{e}");
            } else {
                let _ = write!(stderr, "{e}");
            }
            return code;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            let _ = writeln!(stderr, "config error in `workers`: must be at least 1");
            return EXIT_CONFIG;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "i/o error: {e}");
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| run(&cli.command)) {
        Ok(o) => {
            let _ = stdout.write_all(o.stdout.as_bytes());
            for (id, detail) in &o.violations {
                let _ = writeln!(stderr, "invariant {id} failed: {detail}");
            }
            if o.undecided && o.violations.is_empty() {
                let _ = writeln!(
                    stderr,
                    "undecided: some balls could not be classified at the depth cap"
                );
            }
            o.exit_code()
        }
        Err(f) => {
            let _ = writeln!(stderr, "{}", f.diagnostic());
            f.exit_code()
        }
    }
}
