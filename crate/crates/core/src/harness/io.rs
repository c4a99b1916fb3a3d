//! File formats: headerless numeric matrices, replication and summary tables,
//! statistic vectors, selections and coupling reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::sim::SimReport;
use crate::diagnostics::CouplingReport;
use crate::error::{Error, Result};
use crate::selection::SelectionOutcome;
use crate::stats::StatVector;

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Comma-separated, one row per line, no header.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_f(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        match ncols {
            None => ncols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::DimensionMismatch(format!(
                    "{}: row {} has {} fields, expected {c}",
                    path.display(),
                    i + 1,
                    rec.len()
                )));
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidParameter(format!("{}: row {}: `{field}` is not a number", path.display(), i + 1))
            })?;
            data.push(v);
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| Error::InvalidParameter(format!("{} is empty", path.display())))?;
    Array2::from_shape_vec((nrows, ncols), data).map_err(|e| Error::DimensionMismatch(e.to_string()))
}

pub fn write_replications(path: &Path, report: &SimReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "rep,fdp,power,n_selected,false_discoveries,threshold,max_kkt,r,kfwer_n_selected,kfwer_false_discoveries"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.rep,
            fmt_f(r.fdp),
            fmt_f(r.power),
            r.n_selected,
            r.false_discoveries,
            fmt_f(r.threshold),
            fmt_f(r.max_kkt),
            fmt_f(r.r),
            fmt_opt(r.kfwer_n_selected),
            fmt_opt(r.kfwer_false_discoveries),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, report: &SimReport) -> Result<()> {
    let c = &report.config;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "setting,n,p,q,statistic,nu,seed,replications,completed,failures,fdr,fdr_mcse,power,power_mcse,mean_selected,max_kkt,kfwer,kfwer_mcse"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.setting,
        c.n,
        c.p,
        c.q,
        c.resolved_statistic(),
        fmt_opt(c.nu),
        c.seed,
        c.replications,
        report.completed,
        report.failures.len(),
        fmt_f(report.fdr),
        fmt_f(report.fdr_mcse),
        fmt_f(report.power),
        fmt_f(report.power_mcse),
        fmt_f(report.mean_selected),
        fmt_f(report.max_kkt),
        fmt_opt(report.kfwer.map(fmt_f)),
        fmt_opt(report.kfwer_mcse.map(fmt_f)),
    )?;
    w.flush()?;
    Ok(())
}

pub fn write_report_json(path: &Path, report: &SimReport) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, report)?;
    Ok(())
}

/// `j,w,method` with 1-based `j`.
pub fn write_stats(path: &Path, stats: &StatVector) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "j,w,method")?;
    for (j, v) in stats.w.iter().enumerate() {
        writeln!(w, "{},{},{}", j + 1, fmt_f(*v), stats.method)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads statistics either from a `j,w[,method]` table or a bare column of numbers.
pub fn read_stats(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    let mut w_col = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 {
            if let Some(pos) = rec.iter().position(|f| f == "w") {
                w_col = pos;
                continue;
            }
        }
        let field = rec.get(w_col).unwrap_or("");
        let v: f64 = field.parse().map_err(|_| {
            Error::InvalidParameter(format!("{}: line {}: `{field}` is not a number", path.display(), i + 1))
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::InvalidParameter(format!("{} holds no statistics", path.display())));
    }
    Ok(out)
}

/// `rule,q,k,threshold,n_selected,fdp,power,selected` with 1-based,
/// space-separated indices. `fdp`/`power` are blank without a ground truth.
pub fn write_selection(path: &Path, sel: &SelectionOutcome, scored: Option<(f64, f64)>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "rule,q,k,threshold,n_selected,fdp,power,selected")?;
    let idx: Vec<String> = sel.selected.iter().map(|j| (j + 1).to_string()).collect();
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        sel.rule,
        sel.q,
        fmt_opt(sel.k),
        sel.threshold,
        sel.n_selected(),
        fmt_opt(scored.map(|s| s.0)),
        fmt_opt(scored.map(|s| s.1)),
        idx.join(" "),
    )?;
    w.flush()?;
    Ok(())
}

/// Reads 1-based indices of the true signals, separated by commas, spaces or newlines.
pub fn read_support(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<usize>() {
            Ok(j) if j >= 1 => Ok(j - 1),
            _ => Err(Error::InvalidParameter(format!("{}: `{s}` is not a 1-based index", path.display()))),
        })
        .collect()
}

pub fn write_coupling(path: &Path, report: &CouplingReport) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, report)?;
    Ok(())
}

/// `j,kl` with 1-based `j`.
pub fn write_kl(path: &Path, kl: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "j,kl")?;
    for (j, v) in kl.iter().enumerate() {
        writeln!(w, "{},{}", j + 1, fmt_f(*v))?;
    }
    w.flush()?;
    Ok(())
}
