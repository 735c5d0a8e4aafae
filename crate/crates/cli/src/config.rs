//! Run configuration: an IFS plus optional defaults, read from TOML.
//!
//! ```toml
//! v = "5/4"        # optional
//! seed = 7         # optional
//!
//! [[map]]
//! c = "1/3"
//! b = "0"
//! ```

use std::fmt;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use selfsim_core::rational::parse_q;
use selfsim_core::{Affine1D, Family, Ifs1D, IntervalQ, Q};

/// A configuration problem, tied to the field that caused it.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error in `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    c: String,
    b: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    map: Vec<RawMap>,
    v: Option<String>,
    family: Option<String>,
    m: Option<String>,
    window: Option<String>,
    depth: Option<u32>,
    seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub path: PathBuf,
    pub ifs: Ifs1D,
    pub v: Option<Q>,
    pub family: Option<Family>,
    pub m_range: Option<RangeInclusive<u32>>,
    pub window: Option<IntervalQ>,
    pub depth: Option<u32>,
    pub seed: Option<u64>,
}

pub fn rational(field: &str, s: &str) -> Result<Q, ConfigError> {
    parse_q(s).map_err(|e| ConfigError::new(field, e.to_string()))
}

/// `v` must exceed 1 wherever an approximation exponent is used.
pub fn exponent(field: &str, s: &str) -> Result<Q, ConfigError> {
    let v = rational(field, s)?;
    if v <= Q::from_integer(1.into()) {
        return Err(ConfigError::new(field, "must exceed 1"));
    }
    Ok(v)
}

/// `"a..b"` (inclusive) or a single level.
pub fn level_range(field: &str, s: &str) -> Result<RangeInclusive<u32>, ConfigError> {
    let parse = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| ConfigError::new(field, format!("not a level: {t:?}")))
    };
    let r = match s.split_once("..") {
        Some((a, b)) => parse(a)?..=parse(b.trim_start_matches('='))?,
        None => {
            let m = parse(s)?;
            m..=m
        }
    };
    if r.is_empty() {
        return Err(ConfigError::new(field, "range is empty"));
    }
    Ok(r)
}

/// `"lo,hi"` as a closed interval of rationals.
pub fn interval(field: &str, s: &str) -> Result<IntervalQ, ConfigError> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| ConfigError::new(field, "expected \"lo,hi\""))?;
    let (lo, hi) = (rational(field, a.trim())?, rational(field, b.trim())?);
    if lo > hi {
        return Err(ConfigError::new(field, "lo exceeds hi"));
    }
    Ok(IntervalQ::closed(lo, hi))
}

pub fn family(field: &str, s: &str) -> Result<Family, ConfigError> {
    s.parse()
        .map_err(|_| ConfigError::new(field, format!("expected A or D, got {s:?}")))
}

pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let field = e
            .message()
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "file".to_string());
        ConfigError::new(field, e.message().trim().to_string())
    })?;
    if raw.map.is_empty() {
        return Err(ConfigError::new("map", "at least one map is required"));
    }
    let mut maps = Vec::with_capacity(raw.map.len());
    for (i, m) in raw.map.iter().enumerate() {
        let c = rational(&format!("map[{i}].c"), &m.c)?;
        if c <= Q::from_integer(0.into()) || c >= Q::from_integer(1.into()) {
            return Err(ConfigError::new(
                format!("map[{i}].c"),
                format!("ratio {} is outside (0, 1)", m.c),
            ));
        }
        let b = rational(&format!("map[{i}].b"), &m.b)?;
        maps.push(Affine1D::new(c, b));
    }
    let ifs = Ifs1D::new(maps).map_err(|e| ConfigError::new("map", e.to_string()))?;
    Ok(RunConfig {
        path: path.to_path_buf(),
        ifs,
        v: raw.v.as_deref().map(|s| exponent("v", s)).transpose()?,
        family: raw
            .family
            .as_deref()
            .map(|s| family("family", s))
            .transpose()?,
        m_range: raw.m.as_deref().map(|s| level_range("m", s)).transpose()?,
        window: raw
            .window
            .as_deref()
            .map(|s| interval("window", s))
            .transpose()?,
        depth: raw.depth,
        seed: raw.seed,
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("path", format!("{}: {e}", path.display())))?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, ConfigError> {
        parse_config(s, Path::new("x.toml"))
    }

    const CANTOR: &str = "[[map]]\nc = \"1/3\"\nb = \"0\"\n[[map]]\nc = \"1/3\"\nb = \"2/3\"\n";

    #[test]
    fn cantor_file() {
        let c = parse(CANTOR).unwrap();
        assert_eq!(c.ifs.len(), 2);
        assert_eq!(c.v, None);
        let shipped =
            load_config(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/cantor.toml")).unwrap();
        assert_eq!(shipped.ifs, c.ifs);
    }

    #[test]
    fn bad_ratio_names_the_map() {
        let e = parse("[[map]]\nc = \"3/2\"\nb = \"0\"\n").unwrap_err();
        assert_eq!(e.field, "map[0].c");
        let e = parse("[[map]]\nc = \"0.5\"\nb = \"0\"\n").unwrap_err();
        assert_eq!(e.field, "map[0].c");
        let e = parse("[[map]]\nc = \"1/2\"\nb = \"x\"\n").unwrap_err();
        assert_eq!(e.field, "map[0].b");
    }

    #[test]
    fn exponent_and_defaults() {
        let c = parse(&format!(
            "v = \"5/4\"\nm = \"6..14\"\nfamily = \"D\"\nwindow = \"0,1\"\n{CANTOR}"
        ))
        .unwrap();
        assert_eq!(c.v, Some(Q::new(5.into(), 4.into())));
        assert_eq!(c.m_range, Some(6..=14));
        assert_eq!(c.family, Some(Family::D));
        assert_eq!(
            parse(&format!("v = \"1/1\"\n{CANTOR}")).unwrap_err().field,
            "v"
        );
        assert_eq!(
            parse(&format!("m = \"9..3\"\n{CANTOR}")).unwrap_err().field,
            "m"
        );
        assert!(parse(&format!("bogus = 1\n{CANTOR}")).is_err());
        assert_eq!(parse("").unwrap_err().field, "map");
    }

    #[test]
    fn ranges_and_windows() {
        assert_eq!(level_range("m", "4..=12").unwrap(), 4..=12);
        assert_eq!(level_range("m", "7").unwrap(), 7..=7);
        assert!(level_range("m", "a..3").is_err());
        assert_eq!(
            interval("w", "10, 11").unwrap(),
            IntervalQ::closed(Q::from_integer(10.into()), Q::from_integer(11.into()))
        );
        assert!(interval("w", "1,0").is_err());
    }
}
