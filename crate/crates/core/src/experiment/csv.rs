use std::io::Write;

use super::{CoverRow, SummaryRow, TraceRow};
use crate::error::Result;

/// 17 significant digits, round-trippable.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace_csv<W: Write + ?Sized>(out: &mut W, rows: &[TraceRow]) -> Result<()> {
    out.write_all(b"run_id,slot,scheduled_agent,event,kl,arm\n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.run_id,
            r.slot,
            r.scheduled_agent,
            r.event,
            format_float(r.kl),
            r.arm
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write + ?Sized>(out: &mut W, rows: &[SummaryRow]) -> Result<()> {
    out.write_all(b"arm,slot,median,q_low,q_high,runs\n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.arm,
            r.slot,
            format_float(r.median),
            format_float(r.q_low),
            format_float(r.q_high),
            r.runs
        )?;
    }
    Ok(())
}

pub fn write_cover_csv<W: Write + ?Sized>(out: &mut W, rows: &[CoverRow]) -> Result<()> {
    out.write_all(b"quantity,topology,k,trials,mc_mean,ci_low,ci_high,formula\n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.quantity,
            r.topology,
            r.k,
            r.estimate.trials,
            format_float(r.estimate.mean),
            format_float(r.estimate.ci.0),
            format_float(r.estimate.ci.1),
            r.formula.map(format_float).unwrap_or_default()
        )?;
    }
    Ok(())
}
