//! CSV output: `.` decimal, LF line endings, mandatory header
//!
//! Floats use Rust's shortest round-trip formatting, so identical values
//! always produce identical bytes.

use std::io::{self, Write};

use crate::history::JumpEvent;

/// One knot of a sampled path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRow {
    pub path_id: usize,
    pub time: f64,
    pub value: f64,
    pub mark: Option<f64>,
}

/// Writes `path_id,time,value` or `path_id,time,value,mark`. The mark
/// column is present when `with_marks`; rows without a mark leave it empty.
pub fn write_paths_csv<W: Write>(out: &mut W, rows: &[PathRow], with_marks: bool) -> io::Result<()> {
    if with_marks {
        out.write_all(b"path_id,time,value,mark\n")?;
    } else {
        out.write_all(b"path_id,time,value\n")?;
    }
    for r in rows {
        write!(out, "{},{},{}", r.path_id, r.time, r.value)?;
        if with_marks {
            match r.mark {
                Some(z) => write!(out, ",{z}")?,
                None => out.write_all(b",")?,
            }
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes `path_id,time,mark`, one row per event.
pub fn write_events_csv<W: Write>(out: &mut W, paths: &[Vec<JumpEvent>]) -> io::Result<()> {
    out.write_all(b"path_id,time,mark\n")?;
    for (i, events) in paths.iter().enumerate() {
        for e in events {
            writeln!(out, "{i},{},{}", e.time, e.mark)?;
        }
    }
    Ok(())
}

/// Rows for a counting or marked path: the origin, then one row per event
/// carrying the running sum and the mark.
pub fn jump_path_rows(path_id: usize, events: &[JumpEvent]) -> Vec<PathRow> {
    let mut rows = Vec::with_capacity(events.len() + 1);
    rows.push(PathRow {
        path_id,
        time: 0.0,
        value: 0.0,
        mark: None,
    });
    let mut acc = 0.0;
    for e in events {
        acc += e.mark;
        rows.push(PathRow {
            path_id,
            time: e.time,
            value: acc,
            mark: Some(e.mark),
        });
    }
    rows
}
