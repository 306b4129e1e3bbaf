//! CSV emission and parsing for run results, plus report generation.
//!
//! Raw schema (one line per successful run):
//!
//! ```text
//! regime,loss,dipa,k,seed,accuracy,kappa,macro_f1,best_epoch,epochs_run
//! ```
//!
//! Aggregate schema (one line per grid cell) adds `_mean`/`_std` columns, a
//! `runs` count (fewer runs than seeds marks a cell with failures), and a
//! `best` flag column listing the metrics this cell wins for its (regime, k)
//! group, `;`-joined:
//!
//! ```text
//! regime,loss,dipa,k,runs,accuracy_mean,accuracy_std,kappa_mean,kappa_std,\
//! macro_f1_mean,macro_f1_std,best
//! ```
//!
//! Floats use shortest-round-trip formatting, so `parse(emit(table)) ==
//! table` holds exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{CellAggregate, Failure, ResultTable, RunKey, RunRecord};
use crate::plot;

pub const RAW_HEADER: &str = "regime,loss,dipa,k,seed,accuracy,kappa,macro_f1,best_epoch,epochs_run";
pub const AGGREGATE_HEADER: &str = "regime,loss,dipa,k,runs,accuracy_mean,accuracy_std,kappa_mean,kappa_std,macro_f1_mean,macro_f1_std,best";
pub const FAILURES_HEADER: &str = "regime,loss,dipa,k,seed,error";

fn dipa_str(on: bool) -> &'static str {
    if on {
        "on"
    } else {
        "off"
    }
}

/// Render the raw per-run rows.
pub fn emit_raw(rows: &[RunRecord]) -> String {
    let mut out = String::from(RAW_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.key.regime,
            r.key.loss,
            dipa_str(r.key.dipa),
            r.key.shot(),
            r.key.seed,
            r.accuracy,
            r.kappa,
            r.macro_f1,
            r.best_epoch,
            r.epochs_run
        )
        .unwrap();
    }
    out
}

/// Render the aggregate rows.
pub fn emit_aggregate(cells: &[CellAggregate]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.regime,
            c.loss,
            dipa_str(c.dipa),
            c.shot(),
            c.runs,
            c.accuracy_mean,
            c.accuracy_std,
            c.kappa_mean,
            c.kappa_std,
            c.macro_f1_mean,
            c.macro_f1_std,
            c.best.join(";")
        )
        .unwrap();
    }
    out
}

fn emit_failures(failures: &[Failure]) -> String {
    let mut out = String::from(FAILURES_HEADER);
    out.push('\n');
    for f in failures {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            f.key.regime,
            f.key.loss,
            dipa_str(f.key.dipa),
            f.key.shot(),
            f.key.seed,
            f.error.replace([',', '\n'], ";")
        )
        .unwrap();
    }
    out
}

struct FieldParser<'a> {
    path: &'a Path,
    line_no: usize,
}

impl FieldParser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(self.path, self.line_no, message)
    }

    fn parse<T: std::str::FromStr>(&self, text: &str, what: &str) -> Result<T> {
        text.parse()
            .map_err(|_| self.err(format!("invalid {what}: `{text}`")))
    }

    fn parse_dipa(&self, text: &str) -> Result<bool> {
        match text {
            "on" => Ok(true),
            "off" => Ok(false),
            other => Err(self.err(format!("invalid dipa flag: `{other}`"))),
        }
    }
}

/// Parse a raw CSV back into run records.
pub fn parse_raw(path: &Path, text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RAW_HEADER => {}
        Some((_, other)) => {
            return Err(Error::parse(
                path,
                1,
                format!("unexpected header `{other}`"),
            ))
        }
        None => return Err(Error::parse(path, 1, "empty file")),
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let p = FieldParser {
            path,
            line_no: idx + 1,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(p.err(format!("expected 10 fields, got {}", fields.len())));
        }
        let key = RunKey {
            regime: fields[0]
                .parse()
                .map_err(|e: String| p.err(e))?,
            loss: fields[1].parse().map_err(|e: String| p.err(e))?,
            dipa: p.parse_dipa(fields[2])?,
            shot_key: fields[3]
                .parse::<crate::experiment::Shot>()
                .map_err(|e| p.err(e))?
                .ord_key(),
            seed: p.parse(fields[4], "seed")?,
        };
        rows.push(RunRecord {
            key,
            accuracy: p.parse(fields[5], "accuracy")?,
            kappa: p.parse(fields[6], "kappa")?,
            macro_f1: p.parse(fields[7], "macro_f1")?,
            best_epoch: p.parse(fields[8], "best_epoch")?,
            epochs_run: p.parse(fields[9], "epochs_run")?,
        });
    }
    Ok(rows)
}

/// Write `raw.csv`, `aggregate.csv`, metric plots, and (when any run
/// failed) `failures.csv` under `out_dir`.
pub fn write_outputs(table: &ResultTable, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let raw_path = out_dir.join("raw.csv");
    fs::write(&raw_path, emit_raw(&table.rows)).map_err(|e| Error::io(&raw_path, e))?;

    let cells = table.aggregate();
    let agg_path = out_dir.join("aggregate.csv");
    fs::write(&agg_path, emit_aggregate(&cells)).map_err(|e| Error::io(&agg_path, e))?;

    if !table.failures.is_empty() {
        let fail_path = out_dir.join("failures.csv");
        fs::write(&fail_path, emit_failures(&table.failures))
            .map_err(|e| Error::io(&fail_path, e))?;
    }

    plot::write_metric_plots(&cells, out_dir)?;
    Ok(())
}

/// Rebuild reports (aggregate CSV + plots) from a run directory's `raw.csv`.
pub fn report_from_dir(in_dir: &Path, out_dir: &Path) -> Result<ResultTable> {
    let raw_path = in_dir.join("raw.csv");
    let text = fs::read_to_string(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let rows = parse_raw(&raw_path, &text)?;
    if rows.is_empty() {
        return Err(Error::config(format!(
            "{} holds no result rows",
            raw_path.display()
        )));
    }
    let table = ResultTable {
        rows,
        failures: Vec::new(),
    };
    write_outputs(&table, out_dir)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{LossName, Regime, Shot};

    fn sample_rows() -> Vec<RunRecord> {
        let mut rows = Vec::new();
        for (i, (dipa, shot)) in [(false, Shot::K(1)), (true, Shot::K(1)), (false, Shot::All)]
            .into_iter()
            .enumerate()
        {
            rows.push(RunRecord {
                key: RunKey {
                    regime: Regime::Scratch,
                    loss: LossName::Ce,
                    dipa,
                    shot_key: shot.ord_key(),
                    seed: i as u64,
                },
                accuracy: 0.1 + 0.2 * i as f64 + 1.0 / 3.0,
                kappa: -0.05 + 0.1 * i as f64,
                macro_f1: 0.123456789 * (i + 1) as f64,
                best_epoch: i + 1,
                epochs_run: 10 + i,
            });
        }
        rows
    }

    #[test]
    fn raw_round_trip_is_exact() {
        let rows = sample_rows();
        let text = emit_raw(&rows);
        let parsed = parse_raw(Path::new("raw.csv"), &text).unwrap();
        assert_eq!(parsed, rows);
        // Bit-exact floats, not merely approximately equal.
        for (a, b) in parsed.iter().zip(&rows) {
            assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
            assert_eq!(a.kappa.to_bits(), b.kappa.to_bits());
            assert_eq!(a.macro_f1.to_bits(), b.macro_f1.to_bits());
        }
    }

    #[test]
    fn parse_rejects_malformed_rows() {
        let path = Path::new("raw.csv");
        assert!(parse_raw(path, "bogus header\n").is_err());
        let text = format!("{RAW_HEADER}\nscratch,ce,off,1,0,0.5\n");
        let err = parse_raw(path, &text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let text = format!("{RAW_HEADER}\nscratch,ce,maybe,1,0,0.5,0.4,0.3,1,2\n");
        assert!(parse_raw(path, &text).is_err());
        let text = format!("{RAW_HEADER}\nscratch,hinge,off,1,0,0.5,0.4,0.3,1,2\n");
        assert!(parse_raw(path, &text).is_err());
    }

    #[test]
    fn aggregate_csv_shape() {
        let table = ResultTable {
            rows: sample_rows(),
            failures: Vec::new(),
        };
        let cells = table.aggregate();
        let text = emit_aggregate(&cells);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), AGGREGATE_HEADER);
        assert_eq!(lines.count(), cells.len());
    }
}
