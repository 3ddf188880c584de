//! CSV rendering of simulation results. Floats use a fixed six-digit format
//! so that output bytes only depend on the computed values.

use std::io::{self, Write};

use crate::config::MaintenanceMode;
use crate::routing::Strategy;
use crate::simulator::{IntervalMetrics, RoundStats, Summary};

pub const INTERVAL_HEADER: &str =
    "interval,strategy,ttl,maintenance_mode,mean_recall,mean_messages,kb_concepts_mean,maintenance_work,queries_answered";

pub const SUMMARY_HEADER: &str =
    "strategy,ttl,maintenance_mode,mean_recall,mean_messages,total_maintenance_work,queries";

pub const ROUNDS_HEADER: &str =
    "maintenance_mode,round,at_query,peers_updated,e1_mean,e2_mean,work_total,work_mean,wall_ms_mean";

/// Identifies one simulated configuration in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunLabel {
    pub strategy: Strategy,
    pub ttl: u32,
    pub mode: MaintenanceMode,
}

pub fn write_interval_rows<W: Write + ?Sized>(
    w: &mut W,
    label: &RunLabel,
    rows: &[IntervalMetrics],
) -> io::Result<()> {
    for m in rows {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6},{:.6},{},{}",
            m.interval_index,
            label.strategy,
            label.ttl,
            label.mode,
            m.mean_recall,
            m.mean_messages,
            m.kb_concepts_mean,
            m.maintenance_work,
            m.queries_answered
        )?;
    }
    Ok(())
}

pub fn write_intervals_csv<W: Write>(
    mut w: W,
    label: &RunLabel,
    rows: &[IntervalMetrics],
) -> io::Result<()> {
    writeln!(w, "{INTERVAL_HEADER}")?;
    write_interval_rows(&mut w, label, rows)
}

pub fn write_summary_row<W: Write + ?Sized>(
    w: &mut W,
    label: &RunLabel,
    s: &Summary,
) -> io::Result<()> {
    writeln!(
        w,
        "{},{},{},{:.6},{:.6},{},{}",
        label.strategy,
        label.ttl,
        label.mode,
        s.mean_recall,
        s.mean_messages,
        s.total_maintenance_work,
        s.queries
    )
}

pub fn write_round_row<W: Write + ?Sized>(w: &mut W, r: &RoundStats) -> io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{:.6},{:.6},{},{:.6},{:.6}",
        r.mode,
        r.round,
        r.at_query,
        r.peers_updated,
        r.e1_mean,
        r.e2_mean,
        r.work_total,
        r.work_mean,
        r.wall_ms_mean
    )
}
