//! CSV output of traces and medians, and a reader for emitted files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::diagnostics::{RunTrace, TraceRecord};

pub const HEADER: &str = "run_seed,t,f_m,sigma,det_C,tr_normalized,kappa_HC,f_mu,success";

/// `run_seed` value of aggregated rows.
pub const MEDIAN_LABEL: &str = "median";

fn write_row<W: Write>(out: &mut W, label: &str, r: &TraceRecord) -> io::Result<()> {
    writeln!(
        out,
        "{label},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        r.t,
        r.f_m,
        r.sigma,
        r.det_c,
        r.tr_normalized,
        r.kappa_hc,
        r.f_mu,
        u8::from(r.success)
    )
}

pub fn write_traces<W: Write>(out: &mut W, traces: &[RunTrace]) -> io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for trace in traces {
        let label = trace.seed.to_string();
        for r in &trace.records {
            write_row(out, &label, r)?;
        }
    }
    Ok(())
}

pub fn write_medians<W: Write>(out: &mut W, medians: &[TraceRecord]) -> io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in medians {
        write_row(out, MEDIAN_LABEL, r)?;
    }
    Ok(())
}

pub fn emit_csv(traces: &[RunTrace], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_traces(&mut out, traces)?;
    out.flush()
}

pub fn emit_median_csv(medians: &[TraceRecord], path: &Path) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_medians(&mut out, medians)?;
    out.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub run_seed: String,
    pub record: TraceRecord,
}

/// Parses text produced by [`write_traces`] or [`write_medians`].
pub fn read_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.split('\n');
    if lines.next() != Some(HEADER) {
        return Err("missing or wrong header".into());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| format!("row {}: {what}", i + 1);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(bad("expected 9 fields"));
        }
        let real = |k: usize| fields[k].parse::<f64>().map_err(|_| bad(fields[k]));
        rows.push(CsvRow {
            run_seed: fields[0].to_string(),
            record: TraceRecord {
                t: fields[1].parse().map_err(|_| bad(fields[1]))?,
                f_m: real(2)?,
                sigma: real(3)?,
                det_c: real(4)?,
                tr_normalized: real(5)?,
                kappa_hc: real(6)?,
                f_mu: real(7)?,
                success: match fields[8] {
                    "1" => true,
                    "0" => false,
                    other => return Err(bad(other)),
                },
            },
        });
    }
    Ok(rows)
}
