//! Result rows and their CSV form.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// CSV header, in column order.
pub const HEADER: [&str; 17] = [
    "experiment",
    "policy",
    "lambda_h",
    "lambda_e",
    "p_h",
    "p_e",
    "d",
    "arrivals",
    "seed",
    "mean_h",
    "mean_e",
    "w_h",
    "w_e",
    "chain_len",
    "ci_half_width",
    "theory_value",
    "engine",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Engine {
    Counts,
    Graph,
    Ctmc,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Counts => "counts",
            Engine::Graph => "graph",
            Engine::Ctmc => "ctmc",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "counts" => Ok(Engine::Counts),
            "graph" => Ok(Engine::Graph),
            "ctmc" => Ok(Engine::Ctmc),
            _ => Err(Error::InvalidParams(format!("unknown engine `{s}`"))),
        }
    }
}

/// One output row. `d` is 0 for bilateral policies.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub policy: String,
    pub lambda_h: f64,
    pub lambda_e: f64,
    pub p_h: f64,
    pub p_e: f64,
    pub d: u32,
    pub arrivals: u64,
    pub seed: u64,
    pub mean_h: f64,
    pub mean_e: f64,
    pub w_h: f64,
    pub w_e: f64,
    pub chain_len: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub theory_value: Option<f64>,
    pub engine: Engine,
}

impl ResultRow {
    fn reals(&self) -> [(&'static str, Option<f64>); 11] {
        [
            ("lambda_h", Some(self.lambda_h)),
            ("lambda_e", Some(self.lambda_e)),
            ("p_h", Some(self.p_h)),
            ("p_e", Some(self.p_e)),
            ("mean_h", Some(self.mean_h)),
            ("mean_e", Some(self.mean_e)),
            ("w_h", Some(self.w_h)),
            ("w_e", Some(self.w_e)),
            ("chain_len", self.chain_len),
            ("ci_half_width", self.ci_half_width),
            ("theory_value", self.theory_value),
        ]
    }

    /// Every present real field is finite.
    pub fn check_finite(&self) -> Result<()> {
        for (name, v) in self.reals() {
            if let Some(x) = v {
                if !x.is_finite() {
                    return Err(Error::Invariant(format!(
                        "{} row for {}: {name} = {x}",
                        self.experiment, self.policy
                    )));
                }
            }
        }
        Ok(())
    }

    /// The row as it reads back after CSV formatting.
    pub fn rounded(&self) -> ResultRow {
        let r = |x: f64| {
            format_sig6(x)
                .parse::<f64>()
                .expect("formatted real parses")
        };
        ResultRow {
            lambda_h: r(self.lambda_h),
            lambda_e: r(self.lambda_e),
            p_h: r(self.p_h),
            p_e: r(self.p_e),
            mean_h: r(self.mean_h),
            mean_e: r(self.mean_e),
            w_h: r(self.w_h),
            w_e: r(self.w_e),
            chain_len: self.chain_len.map(r),
            ci_half_width: self.ci_half_width.map(r),
            theory_value: self.theory_value.map(r),
            ..self.clone()
        }
    }

    fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(format_sig6).unwrap_or_default();
        vec![
            self.experiment.clone(),
            self.policy.clone(),
            format_sig6(self.lambda_h),
            format_sig6(self.lambda_e),
            format_sig6(self.p_h),
            format_sig6(self.p_e),
            self.d.to_string(),
            self.arrivals.to_string(),
            self.seed.to_string(),
            format_sig6(self.mean_h),
            format_sig6(self.mean_e),
            format_sig6(self.w_h),
            format_sig6(self.w_e),
            opt(self.chain_len),
            opt(self.ci_half_width),
            opt(self.theory_value),
            self.engine.name().to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<ResultRow> {
        let bad = |msg: String| Error::Malformed { line, msg };
        if rec.len() != HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                HEADER.len(),
                rec.len()
            )));
        }
        let real = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("{}: `{}` is not a number", HEADER[i], &rec[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                real(i).map(Some)
            }
        };
        let int = |i: usize| -> Result<u64> {
            rec[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("{}: `{}` is not an integer", HEADER[i], &rec[i])))
        };
        Ok(ResultRow {
            experiment: rec[0].to_string(),
            policy: rec[1].to_string(),
            lambda_h: real(2)?,
            lambda_e: real(3)?,
            p_h: real(4)?,
            p_e: real(5)?,
            d: u32::try_from(int(6)?).map_err(|_| bad("d out of range".into()))?,
            arrivals: int(7)?,
            seed: int(8)?,
            mean_h: real(9)?,
            mean_e: real(10)?,
            w_h: real(11)?,
            w_e: real(12)?,
            chain_len: opt(13)?,
            ci_half_width: opt(14)?,
            theory_value: opt(15)?,
            engine: rec[16]
                .parse()
                .map_err(|_| bad(format!("engine: unknown `{}`", &rec[16])))?,
        })
    }
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..6).contains(&exp) {
        trim(&format!("{:.*}", (5 - exp) as usize, x))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

/// Write rows as CSV. An empty slice gives a header-only file.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        row.check_finite()?;
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_csv(rows, File::create(path)?)
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Malformed {
            line: 1,
            msg: "header does not match the result columns".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        rows.push(ResultRow::from_record(&rec?, i + 2)?);
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    parse_csv(File::open(path)?)
}
