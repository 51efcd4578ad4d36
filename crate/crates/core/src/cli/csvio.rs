//! Time-series CSV files: `# key=value` metadata lines, a header
//! `t,S_real,S_imag,norm_drift[,stderr]` and one row per sample.
//!
//! Numbers are written with 17 significant digits, which reproduces every
//! `f64` exactly on reading.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::propagate::TimeSeries;

pub const HEADER: &str = "t,S_real,S_imag,norm_drift";
pub const HEADER_STDERR: &str = "t,S_real,S_imag,norm_drift,stderr";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_series<W: Write>(w: &mut W, series: &TimeSeries) -> Result<()> {
    series.validate()?;
    for (k, v) in &series.metadata {
        writeln!(w, "# {k}={}", sanitize(v))?;
    }
    let stderr = series.stderr.as_deref();
    writeln!(w, "{}", if stderr.is_some() { HEADER_STDERR } else { HEADER })?;
    for i in 0..series.len() {
        let v = series.values[i];
        write!(
            w,
            "{},{},{},{}",
            num(series.times[i]),
            num(v.re),
            num(v.im),
            num(series.norm_drift[i])
        )?;
        if let Some(se) = stderr {
            write!(w, ",{}", num(se[i]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_series(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_series(&mut w, series)?;
    w.flush()?;
    Ok(())
}

fn sanitize(v: &str) -> String {
    v.replace(['\n', '\r'], " ")
}

pub fn parse_series(text: &str) -> Result<TimeSeries> {
    let mut out = TimeSeries::default();
    let mut columns = None;
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let bad = |msg: String| Error::Parse(format!("line {line_no}: {msg}"));
        let line = line.trim_end_matches('\r');
        if let Some(meta) = line.strip_prefix('#') {
            if columns.is_some() {
                return Err(bad("metadata after the header".into()));
            }
            let meta = meta.trim();
            if meta.is_empty() {
                continue;
            }
            let (k, v) = meta
                .split_once('=')
                .ok_or_else(|| bad(format!("metadata `{meta}` is not key=value")))?;
            out.push_meta(k.trim(), v.trim());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let Some(ncol) = columns else {
            columns = Some(match line.trim() {
                HEADER => 4,
                HEADER_STDERR => {
                    out.stderr = Some(Vec::new());
                    5
                }
                other => return Err(bad(format!("unexpected header `{other}`"))),
            });
            continue;
        };
        let fields = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("`{}` is not a number", f.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if fields.len() != ncol {
            return Err(bad(format!("expected {ncol} fields, found {}", fields.len())));
        }
        out.times.push(fields[0]);
        out.values.push(Complex64::new(fields[1], fields[2]));
        out.norm_drift.push(fields[3]);
        if let Some(se) = out.stderr.as_mut() {
            se.push(fields[4]);
        }
    }
    if columns.is_none() {
        return Err(Error::Parse("missing header line".into()));
    }
    out.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(out)
}

pub fn load_series(path: &Path) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_series(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Chain coefficient table written by the `coeffs` subcommand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoefficientTable {
    pub metadata: Vec<(String, String)>,
    pub alphas: Vec<f64>,
    /// `β_j` for `j = 1..n_tr`; the last entry is the zero boundary value.
    pub betas: Vec<f64>,
    pub energies: Vec<f64>,
    pub head_weights: Vec<f64>,
}

pub const COEFF_HEADER: &str = "j,alpha,beta,epsilon,q1";

pub fn write_coefficients<W: Write>(w: &mut W, table: &CoefficientTable) -> Result<()> {
    for (k, v) in &table.metadata {
        writeln!(w, "# {k}={}", sanitize(v))?;
    }
    writeln!(w, "{COEFF_HEADER}")?;
    for j in 0..table.alphas.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            j + 1,
            num(table.alphas[j]),
            num(table.betas[j]),
            num(table.energies[j]),
            num(table.head_weights[j])
        )?;
    }
    Ok(())
}
