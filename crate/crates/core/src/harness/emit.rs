//! CSV and JSON serialization of sweep records.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64`. Undefined values (for example the
//! standard error of a single trial) are `NaN` in CSV and `null` in JSON.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::config::Format;
use super::engine::SweepRecord;
use crate::error::{Error, Result};
use crate::estimators::Method;

pub const COLUMNS: [&str; 11] = [
    "beta",
    "sigma_n2",
    "P",
    "alpha",
    "estimator",
    "trials",
    "sigma_g2_emp",
    "sigma_g2_se",
    "sigma_g2_ana",
    "eta_emp",
    "eta_ana",
];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fields(r: &SweepRecord) -> [String; 11] {
    [
        num(r.beta),
        num(r.sigma_n2),
        r.order.to_string(),
        num(r.alpha),
        r.estimator.to_string(),
        r.trials.to_string(),
        num(r.sigma_g2_emp),
        num(r.sigma_g2_se),
        num(r.sigma_g2_ana),
        num(r.eta_emp),
        num(r.eta_ana),
    ]
}

pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(records: &[SweepRecord], mut out: W) -> Result<()> {
    let mut s = String::from("[");
    for (i, r) in records.iter().enumerate() {
        s.push_str(if i == 0 { "\n  {" } else { ",\n  {" });
        for (j, (name, value)) in COLUMNS.iter().zip(fields(r)).enumerate() {
            if j > 0 {
                s.push_str(", ");
            }
            let value = match *name {
                "estimator" => format!("\"{value}\""),
                _ if value == "NaN" || value.contains("inf") => "null".to_string(),
                _ => value,
            };
            let _ = write!(s, "\"{name}\": {value}");
        }
        s.push('}');
    }
    s.push_str(if records.is_empty() { "]\n" } else { "\n]\n" });
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Io(format!("bad number '{s}'")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Io(format!("bad integer '{s}'")))
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(Error::Io(format!("unexpected CSV header: {header:?}")));
    }
    rd.records()
        .map(|row| {
            let row = row?;
            Ok(SweepRecord {
                beta: parse_f64(&row[0])?,
                sigma_n2: parse_f64(&row[1])?,
                order: parse_usize(&row[2])?,
                alpha: parse_f64(&row[3])?,
                estimator: row[4].parse::<Method>()?,
                trials: parse_usize(&row[5])?,
                sigma_g2_emp: parse_f64(&row[6])?,
                sigma_g2_se: parse_f64(&row[7])?,
                sigma_g2_ana: parse_f64(&row[8])?,
                eta_emp: parse_f64(&row[9])?,
                eta_ana: parse_f64(&row[10])?,
            })
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    beta: f64,
    sigma_n2: f64,
    #[serde(rename = "P")]
    order: usize,
    alpha: f64,
    estimator: Method,
    trials: usize,
    sigma_g2_emp: Option<f64>,
    sigma_g2_se: Option<f64>,
    sigma_g2_ana: Option<f64>,
    eta_emp: Option<f64>,
    eta_ana: Option<f64>,
}

pub fn parse_json<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let rows: Vec<JsonRecord> = serde_json::from_reader(input)?;
    let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
    Ok(rows
        .into_iter()
        .map(|r| SweepRecord {
            beta: r.beta,
            sigma_n2: r.sigma_n2,
            order: r.order,
            alpha: r.alpha,
            estimator: r.estimator,
            trials: r.trials,
            sigma_g2_emp: nan(r.sigma_g2_emp),
            sigma_g2_se: nan(r.sigma_g2_se),
            sigma_g2_ana: nan(r.sigma_g2_ana),
            eta_emp: nan(r.eta_emp),
            eta_ana: nan(r.eta_ana),
        })
        .collect())
}

/// Write to `path`, or to stdout when `path` is `None`.
pub fn write_records(records: &[SweepRecord], format: Format, path: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(records, &mut buf)?,
        Format::Json => write_json(records, &mut buf)?,
    }
    match path {
        Some(p) => std::fs::write(p, buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(beta: f64, est: Method, se: f64) -> SweepRecord {
        SweepRecord {
            beta,
            sigma_n2: 0.1,
            order: 3,
            alpha: 0.2,
            estimator: est,
            trials: 7,
            sigma_g2_emp: 1.0 / 3.0,
            sigma_g2_se: se,
            sigma_g2_ana: std::f64::consts::PI,
            eta_emp: -1e-300,
            eta_ana: 0.1 + 0.2,
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "beta,sigma_n2,P,alpha,estimator,trials,sigma_g2_emp,sigma_g2_se,sigma_g2_ana,eta_emp,eta_ana\n"
        );
        let mut buf = Vec::new();
        write_json(&[], &mut buf).unwrap();
        assert!(parse_json(&buf[..]).unwrap().is_empty());
    }

    #[test]
    fn numbers_have_17_digits() {
        let mut buf = Vec::new();
        write_csv(&[rec(0.25, Method::Mm, 0.5)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("2.5000000000000000e-1,1.0000000000000001e-1,3,"));
        assert!(row.contains(",mm,7,3.3333333333333331e-1,"));
    }

    #[test]
    fn round_trips_are_exact() {
        let records = vec![
            rec(0.25, Method::Training, 0.5),
            rec(0.75, Method::Subspace, f64::NAN),
            rec(1.0 / 7.0, Method::Mm, 1e-17),
        ];
        let mut csv = Vec::new();
        write_csv(&records, &mut csv).unwrap();
        let mut json = Vec::new();
        write_json(&records, &mut json).unwrap();
        for parsed in [parse_csv(&csv[..]).unwrap(), parse_json(&json[..]).unwrap()] {
            assert_eq!(parsed.len(), records.len());
            for (a, b) in parsed.iter().zip(&records) {
                assert!(a.same_bits(b), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
