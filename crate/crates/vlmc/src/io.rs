//! CSV forms of the cycle law and the rate curve.
//!
//! A pmf file starts with a comment line carrying the horizon and the
//! residual, then `t,s,mass` rows. Floats are written in Rust's shortest
//! round-trip form, so reading a file back gives bit-identical masses.

use vlmc_core::{JointPmf, RateCurve};

use crate::error::CliError;

pub fn write_pmf(pmf: &JointPmf) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "s", "mass"])?;
    for (t, s, m) in pmf.iter() {
        w.write_record([t.to_string(), s.to_string(), m.to_string()])?;
    }
    let body = w.into_inner().map_err(|e| e.into_error())?;
    let mut out = format!("# horizon={} residual={}\n", pmf.horizon(), pmf.residual());
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    Ok(out)
}

fn format_err(message: impl Into<String>) -> CliError {
    CliError::Format { path: "<pmf>".into(), message: message.into() }
}

/// Parses the output of [`write_pmf`]. The result carries no tail model,
/// so positive exponents need `residual = 0`.
pub fn read_pmf(text: &str) -> Result<JointPmf, CliError> {
    let (first, rest) = text.split_once('\n').ok_or_else(|| format_err("empty file"))?;
    let header = first.strip_prefix("# ").ok_or_else(|| format_err("missing `# horizon=... residual=...` line"))?;
    let mut horizon = None;
    let mut residual = None;
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("horizon", v)) => horizon = v.parse::<usize>().ok(),
            Some(("residual", v)) => residual = v.parse::<f64>().ok(),
            _ => return Err(format_err(format!("unexpected header field {field:?}"))),
        }
    }
    let horizon = horizon.ok_or_else(|| format_err("header lacks a valid horizon"))?;
    let residual = residual.ok_or_else(|| format_err("header lacks a valid residual"))?;
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let mut entries = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format_err(e.to_string()))?;
        let field = |k: usize| rec.get(k).ok_or_else(|| format_err(format!("row {}: missing column {k}", i + 1)));
        let t = field(0)?.parse::<usize>().map_err(|e| format_err(format!("row {}: t: {e}", i + 1)))?;
        let s = field(1)?.parse::<usize>().map_err(|e| format_err(format!("row {}: s: {e}", i + 1)))?;
        let m = field(2)?.parse::<f64>().map_err(|e| format_err(format!("row {}: mass: {e}", i + 1)))?;
        entries.push((t, s, m));
    }
    Ok(JointPmf::from_entries(horizon, entries, residual)?)
}

pub fn write_rate_curve(curve: &RateCurve) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "lambda", "mu", "D", "residual_A", "residual_slope", "converged"])?;
    for p in &curve.points {
        w.write_record([
            p.alpha.to_string(),
            p.lambda.to_string(),
            p.mu.to_string(),
            p.d_value.to_string(),
            p.residual_a.to_string(),
            p.residual_slope.to_string(),
            p.converged.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
