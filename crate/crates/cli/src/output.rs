//! Byte-stable report writing: floats at 12 significant digits, JSON with
//! sorted keys, and atomic file replacement.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

pub const SIG_DIGITS: usize = 12;

/// `%.12g`-style formatting: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros trimmed.
pub fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Rounds every float to 12 significant digits; non-finite values are already null by then.
fn normalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            let s = fmt_f(x);
            match s.parse::<f64>().ok().and_then(serde_json::Number::from_f64) {
                Some(n) => Value::Number(n),
                None => Value::String(s),
            }
        }
        Value::Array(a) => Value::Array(a.into_iter().map(normalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize(v))).collect()),
        other => other,
    }
}

/// Pretty JSON with sorted keys and rounded floats, newline-terminated.
pub fn to_json<T: Serialize>(data: &T) -> String {
    // serde_json's map type is ordered by key, so conversion sorts.
    let v = normalize(serde_json::to_value(data).expect("report serializes"));
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt_f(2f64.ln() / 3f64.ln()), "0.630929753571");
        assert_eq!(fmt_f(1.0), "1");
        assert_eq!(fmt_f(-0.25), "-0.25");
        assert_eq!(fmt_f(1234567.0), "1234567");
        assert_eq!(fmt_f(1e-7), "1e-7");
        assert_eq!(fmt_f(3.0e15), "3e15");
        assert_eq!(fmt_f(1.0 / 3.0 * 1e-6), "3.33333333333e-7");
        assert_eq!(fmt_f(f64::INFINITY), "inf");
    }

    #[test]
    fn json_is_sorted_and_rounded() {
        #[derive(Serialize)]
        struct R {
            z: f64,
            a: Vec<f64>,
            n: f64,
        }
        let s = to_json(&R {
            z: 0.1 + 0.2,
            a: vec![1.0 / 3.0],
            n: f64::NEG_INFINITY,
        });
        assert_eq!(
            s,
            "{\n  \"a\": [\n    0.333333333333\n  ],\n  \"n\": null,\n  \"z\": 0.3\n}\n"
        );
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
    }
}
