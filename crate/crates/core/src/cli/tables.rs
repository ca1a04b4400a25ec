//! `runs.csv` and `aggregates.csv`.
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a file
//! recovers every value bit for bit. Missing values are empty cells.
//!
//! `runs.csv` columns: `strategy,rep,budget,digest`, the nine headline metric
//! names, then per declared group `<label>:n`, `:tp`, `:tn`, `:fp`, `:fn`,
//! `:accuracy`, `:mse`, `:dp` (all empty when the group had no holdout points).

use std::io::{Read, Write};

use super::CliError;
use crate::metrics::{ConfusionCounts, GroupEntry, GroupMetrics, Metric, MetricsRecord};
use crate::simulation::{AggregateRecord, RunRecord};
use crate::strategies::StrategyKind;

const GROUP_FIELDS: [&str; 8] = ["n", "tp", "tn", "fp", "fn", "accuracy", "mse", "dp"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn write_runs<W: Write>(records: &[RunRecord], group_labels: &[String], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["strategy", "rep", "budget", "digest"].map(String::from).to_vec();
    header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    for label in group_labels {
        header.extend(GROUP_FIELDS.iter().map(|f| format!("{label}:{f}")));
    }
    w.write_record(&header).map_err(io_err)?;
    for r in records {
        let mut row = vec![
            r.strategy.name().to_string(),
            r.repetition.to_string(),
            r.budget.to_string(),
            format!("{:016x}", r.digest),
        ];
        row.extend(Metric::ALL.iter().map(|&m| opt(r.metrics.get(m))));
        for g in 0..group_labels.len() {
            match r.metrics.groups.get(g) {
                Some(e) => row.extend([
                    e.n.to_string(),
                    e.counts.tp.to_string(),
                    e.counts.tn.to_string(),
                    e.counts.fp.to_string(),
                    e.counts.fn_.to_string(),
                    e.accuracy.to_string(),
                    e.mse.to_string(),
                    e.dp.to_string(),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), GROUP_FIELDS.len())),
            }
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunsTable {
    pub group_labels: Vec<String>,
    pub records: Vec<RunRecord>,
}

fn parse_cell<T: std::str::FromStr>(cell: &str, what: &str, line: u64) -> Result<T, CliError> {
    cell.parse().map_err(|_| CliError::Runtime(format!("line {line}: invalid {what} `{cell}`")))
}

fn parse_opt(cell: &str, what: &str, line: u64) -> Result<Option<f64>, CliError> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_cell(cell, what, line).map(Some)
    }
}

pub fn read_runs<R: Read>(input: R) -> Result<RunsTable, CliError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| CliError::Runtime(format!("runs file: {e}")))?.clone();
    let fixed = 4 + Metric::ALL.len();
    let expected: Vec<&str> =
        ["strategy", "rep", "budget", "digest"].into_iter().chain(Metric::ALL.iter().map(|m| m.name())).collect();
    if header.len() < fixed || header.iter().take(fixed).ne(expected.iter().copied()) {
        return Err(CliError::Runtime("runs file: unexpected header".into()));
    }
    if !(header.len() - fixed).is_multiple_of(GROUP_FIELDS.len()) {
        return Err(CliError::Runtime("runs file: incomplete group columns".into()));
    }
    let mut group_labels = Vec::new();
    for chunk in header.iter().skip(fixed).collect::<Vec<_>>().chunks(GROUP_FIELDS.len()) {
        let label = chunk[0].strip_suffix(":n").ok_or_else(|| CliError::Runtime("runs file: bad group column".into()))?;
        for (c, f) in chunk.iter().zip(GROUP_FIELDS) {
            if *c != format!("{label}:{f}") {
                return Err(CliError::Runtime(format!("runs file: unexpected column `{c}`")));
            }
        }
        group_labels.push(label.to_string());
    }

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Runtime(format!("runs file: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let strategy: StrategyKind = rec[0].parse().map_err(|e: String| CliError::Runtime(format!("line {line}: {e}")))?;
        let digest = u64::from_str_radix(&rec[3], 16)
            .map_err(|_| CliError::Runtime(format!("line {line}: invalid digest `{}`", &rec[3])))?;
        let mut vals = [None; 9];
        for (i, m) in Metric::ALL.iter().enumerate() {
            vals[i] = parse_opt(&rec[4 + i], m.name(), line)?;
        }
        let mut groups = GroupMetrics::default();
        for g in 0..group_labels.len() {
            let cells: Vec<&str> = (0..GROUP_FIELDS.len()).map(|k| &rec[fixed + g * GROUP_FIELDS.len() + k]).collect();
            if cells.iter().all(|c| c.is_empty()) {
                groups.absent.push(g);
                continue;
            }
            let int = |k: usize| parse_cell::<u64>(cells[k], GROUP_FIELDS[k], line);
            let flt = |k: usize| parse_cell::<f64>(cells[k], GROUP_FIELDS[k], line);
            groups.entries.push(GroupEntry {
                group: g,
                n: int(0)?,
                counts: ConfusionCounts { tp: int(1)?, tn: int(2)?, fp: int(3)?, fn_: int(4)? },
                accuracy: flt(5)?,
                mse: flt(6)?,
                dp: flt(7)?,
            });
        }
        let [spearman, mse, auroc, accuracy, precision, recall, min_group_accuracy, max_group_mse, add] = vals;
        records.push(RunRecord {
            strategy,
            repetition: parse_cell(&rec[1], "rep", line)?,
            budget: parse_cell(&rec[2], "budget", line)?,
            digest,
            metrics: MetricsRecord {
                spearman,
                mse,
                auroc,
                accuracy,
                precision,
                recall,
                min_group_accuracy,
                max_group_mse,
                add,
                groups,
            },
        });
    }
    Ok(RunsTable { group_labels, records })
}

pub fn write_aggregates<W: Write>(aggregates: &[AggregateRecord], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "budget", "metric", "mean", "ci_low", "ci_high", "n_missing"]).map_err(io_err)?;
    for a in aggregates {
        for s in &a.metrics {
            w.write_record([
                a.strategy.name().to_string(),
                a.budget.to_string(),
                s.metric.name().to_string(),
                opt(s.mean),
                opt(s.ci_low),
                opt(s.ci_high),
                s.n_missing.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}
