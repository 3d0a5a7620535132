//! CSV emission and loading.
//!
//! Files start with `#`-prefixed comment lines (the resolved config), then a
//! header row and one row per epoch. Numbers are written with Rust's shortest
//! round-trip decimal formatting; absent values are empty cells.

use std::io::{BufRead, BufReader, Read, Write};

use anyhow::{bail, Context, Result};
use metasgld_core::{JointRecord, RunRecord};

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn write_header<W: Write>(w: &mut W, comment: &str) -> Result<()> {
    for line in comment.lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

pub fn write_run_records<W: Write>(mut w: W, comment: &str, records: &[RunRecord]) -> Result<()> {
    write_header(&mut w, comment)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RunRecord::COLUMNS)?;
    for r in records {
        let mut row = vec![r.epoch.to_string()];
        row.extend(r.values().into_iter().map(cell));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_joint_records<W: Write>(
    mut w: W,
    comment: &str,
    records: &[JointRecord],
) -> Result<()> {
    write_header(&mut w, comment)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(JointRecord::COLUMNS)?;
    for r in records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.values().into_iter().map(cell));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// A numeric CSV loaded by column name.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comment: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        match self.columns.iter().position(|c| c == name) {
            Some(i) => Ok(i),
            None => bail!(
                "unknown column {name:?}; available columns: {}",
                self.columns.join(", ")
            ),
        }
    }

    /// Values of `name` for the rows where it is present.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().filter_map(|r| r[i]).collect())
    }

    /// `(first column, name)` pairs for the rows where `name` is present.
    pub fn series(&self, name: &str) -> Result<Vec<(f64, f64)>> {
        let i = self.column_index(name)?;
        Ok(self
            .rows
            .iter()
            .filter_map(|r| Some((r[0]?, r[i]?)))
            .collect())
    }

    /// Rebuilds run records; requires the run-record column layout.
    pub fn run_records(&self) -> Result<Vec<RunRecord>> {
        if self.columns != RunRecord::COLUMNS {
            bail!(
                "not a run-record table (columns: {})",
                self.columns.join(", ")
            );
        }
        self.rows
            .iter()
            .map(|r| {
                let req = |i: usize| {
                    r[i].with_context(|| format!("missing {} value", RunRecord::COLUMNS[i]))
                };
                Ok(RunRecord {
                    epoch: req(0)? as usize,
                    eps_u: req(1)?,
                    eps_w: req(2)?,
                    gnorm_u: req(3)?,
                    gnorm_w: req(4)?,
                    lipschitz: req(5)?,
                    bound_u: req(6)?,
                    bound_w: req(7)?,
                    bound_total: req(8)?,
                    gnorm_bound_u: req(9)?,
                    gnorm_bound_w: req(10)?,
                    gnorm_bound_total: req(11)?,
                    train_loss: r[12],
                    test_loss: r[13],
                    gap: r[14],
                })
            })
            .collect()
    }
}

pub fn read_table<R: Read>(r: R) -> Result<Table> {
    let mut reader = BufReader::new(r);
    let mut comment = Vec::new();
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        match line.strip_prefix('#') {
            Some(rest) if body.is_empty() => comment.push(
                rest.strip_prefix(' ')
                    .unwrap_or(rest)
                    .trim_end()
                    .to_string(),
            ),
            _ => body.push_str(&line),
        }
        line.clear();
    }
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    let columns: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if columns.is_empty() || columns.iter().all(|c| c.is_empty()) {
        bail!("csv has no header row");
    }
    let mut rows = Vec::new();
    for (n, rec) in csv.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .with_context(|| format!("row {}: bad number {c:?}", n + 1))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table {
        comment,
        columns,
        rows,
    })
}
