//! Output files.
//!
//! JSON documents carry a `schema` field. CSV files have a header row;
//! checkpoint files additionally start with one `#` line describing the
//! table shapes.
//!
//! | file | schema / columns |
//! |------|------------------|
//! | `metrics.json` | `celldelay.metrics.v1`: a [`MetricsRecord`] |
//! | `users.csv` | `user,bs,k,mean_cost,mean_queue,delay,drop_prob,arrived,dropped` |
//! | `trace.csv` | `slot,pattern,queue_total,arrived,served,dropped,cost` |
//! | `sweep.json` | `celldelay.sweep.v1`: key, policy and [`SweepRow`]s |
//! | `sweep.csv` | `policy,point,value,delay_mean,delay_half_width,cost_mean,cost_half_width,drop_prob` |
//! | `checkpoints.csv` | `slot,user,table,pattern,q,value`; `table` is `value` or `qfactor` |
//! | `oracle.json` | `celldelay.oracle.v1`: θ, values and the pattern per QSI index |

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{PerUserQTable, PerUserValueTable};
use crate::oracle::{CentralPolicy, CentralValueTable};
use crate::policy::TableSnapshot;
use crate::sim::{MetricsRecord, SweepRow, TraceRow};

pub const METRICS_SCHEMA: &str = "celldelay.metrics.v1";
pub const SWEEP_SCHEMA: &str = "celldelay.sweep.v1";
pub const ORACLE_SCHEMA: &str = "celldelay.oracle.v1";
pub const CHECKPOINT_SCHEMA: &str = "celldelay.checkpoints.v1";

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema: String,
    #[serde(flatten)]
    pub record: MetricsRecord,
}

pub fn write_metrics_json(path: &Path, record: &MetricsRecord) -> Result<()> {
    let doc = MetricsFile {
        schema: METRICS_SCHEMA.into(),
        record: record.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsRecord> {
    let doc: MetricsFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    check_schema(&doc.schema, METRICS_SCHEMA, path)?;
    Ok(doc.record)
}

fn check_schema(found: &str, expected: &str, path: &Path) -> Result<()> {
    if found != expected {
        return Err(Error::Parse(format!(
            "{}: schema '{found}', expected '{expected}'",
            path.display()
        )));
    }
    Ok(())
}

pub fn write_users_csv(path: &Path, record: &MetricsRecord, users_per_bs: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["user", "bs", "k", "mean_cost", "mean_queue", "delay", "drop_prob", "arrived", "dropped"])
        .map_err(csv_err)?;
    for (u, m) in record.users.iter().enumerate() {
        w.write_record([
            u.to_string(),
            (u / users_per_bs).to_string(),
            (u % users_per_bs).to_string(),
            m.mean_cost.to_string(),
            m.mean_queue.to_string(),
            m.delay.to_string(),
            m.drop_prob.to_string(),
            m.arrived.to_string(),
            m.dropped.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in trace {
        w.serialize(row).map_err(csv_err)?;
    }
    if trace.is_empty() {
        w.write_record(["slot", "pattern", "queue_total", "arrived", "served", "dropped", "cost"])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub schema: String,
    pub key: String,
    pub policy: String,
    pub rows: Vec<SweepRow>,
}

pub fn write_sweep_json(path: &Path, key: &str, policy: &str, rows: &[SweepRow]) -> Result<()> {
    let doc = SweepFile {
        schema: SWEEP_SCHEMA.into(),
        key: key.into(),
        policy: policy.into(),
        rows: rows.to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn read_sweep_json(path: &Path) -> Result<SweepFile> {
    let doc: SweepFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    check_schema(&doc.schema, SWEEP_SCHEMA, path)?;
    Ok(doc)
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "policy",
    "point",
    "value",
    "delay_mean",
    "delay_half_width",
    "cost_mean",
    "cost_half_width",
    "drop_prob",
];

pub fn write_sweep_csv<'a>(path: &Path, files: impl IntoIterator<Item = &'a SweepFile>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for f in files {
        for r in &f.rows {
            w.write_record([
                f.policy.clone(),
                r.point.to_string(),
                r.value.to_string(),
                r.delay.mean.to_string(),
                r.delay.half_width.to_string(),
                r.cost.mean.to_string(),
                r.cost.half_width.to_string(),
                r.drop_prob.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub slot: u64,
    pub user: usize,
    pub table: String,
    pub pattern: Option<usize>,
    pub q: u64,
    pub value: f64,
}

/// Writes every snapshot as dense rows after a `#` shape line that also
/// lists each user's reference pattern.
pub fn write_checkpoints(path: &Path, snapshots: &[TableSnapshot]) -> Result<()> {
    let mut file = File::create(path)?;
    let header = snapshots
        .first()
        .map(|s| CheckpointHeader {
            users: s.values.len(),
            buffer_size: s.values.first().map_or(0, |v| v.buffer_size()),
            patterns: s.qfactors.first().map_or(0, |q| q.num_patterns()),
            references: s.values.iter().map(|v| v.reference_pattern()).collect(),
        })
        .unwrap_or_default();
    let refs: Vec<String> = header.references.iter().map(|r| r.to_string()).collect();
    writeln!(
        file,
        "# {CHECKPOINT_SCHEMA} users={} buffer_size={} patterns={} references={}",
        header.users,
        header.buffer_size,
        header.patterns,
        refs.join(";")
    )?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["slot", "user", "table", "pattern", "q", "value"]).map_err(csv_err)?;
    for s in snapshots {
        for (u, v) in s.values.iter().enumerate() {
            for (q, x) in v.values().iter().enumerate() {
                w.write_record([
                    s.slot.to_string(),
                    u.to_string(),
                    "value".into(),
                    String::new(),
                    q.to_string(),
                    x.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        for (u, t) in s.qfactors.iter().enumerate() {
            for q in 0..=t.buffer_size() {
                for p in 0..t.num_patterns() {
                    w.write_record([
                        s.slot.to_string(),
                        u.to_string(),
                        "qfactor".into(),
                        p.to_string(),
                        q.to_string(),
                        t.get(q, p).to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub users: usize,
    pub buffer_size: u64,
    pub patterns: usize,
    pub references: Vec<usize>,
}

fn parse_header(line: &str, path: &Path) -> Result<CheckpointHeader> {
    let bad = || Error::Parse(format!("{}: malformed checkpoint header", path.display()));
    let rest = line
        .trim()
        .strip_prefix(&format!("# {CHECKPOINT_SCHEMA}"))
        .ok_or_else(bad)?;
    let mut h = CheckpointHeader::default();
    for field in rest.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(bad)?;
        match k {
            "users" => h.users = v.parse().map_err(|_| bad())?,
            "buffer_size" => h.buffer_size = v.parse().map_err(|_| bad())?,
            "patterns" => h.patterns = v.parse().map_err(|_| bad())?,
            "references" if v.is_empty() => {}
            "references" => {
                h.references = v
                    .split(';')
                    .map(|x| x.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?
            }
            _ => return Err(bad()),
        }
    }
    Ok(h)
}

pub fn read_checkpoints(path: &Path) -> Result<(CheckpointHeader, Vec<CheckpointRow>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header = parse_header(&first, path)?;
    let mut r = csv::Reader::from_reader(reader);
    let rows = r.deserialize().map(|row| row.map_err(csv_err)).collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Rebuilds per-user tables of one checkpoint.
pub fn tables_at(
    rows: &[CheckpointRow],
    slot: u64,
    reference_patterns: &[usize],
) -> Result<(Vec<PerUserValueTable>, Vec<PerUserQTable>)> {
    let users = reference_patterns.len();
    let mut v: Vec<Vec<f64>> = vec![Vec::new(); users];
    let mut q: Vec<Vec<(u64, usize, f64)>> = vec![Vec::new(); users];
    for r in rows.iter().filter(|r| r.slot == slot && r.user < users) {
        match (r.table.as_str(), r.pattern) {
            ("value", _) => v[r.user].push(r.value),
            ("qfactor", Some(p)) => q[r.user].push((r.q, p, r.value)),
            _ => {}
        }
    }
    let values = v
        .into_iter()
        .zip(reference_patterns)
        .map(|(x, &p)| PerUserValueTable::from_values(x, p))
        .collect();
    let qfactors = q
        .into_iter()
        .zip(reference_patterns)
        .map(|(mut cells, &p)| {
            cells.sort_by_key(|c| (c.0, c.1));
            let np = cells.iter().map(|c| c.1 + 1).max().unwrap_or(1);
            PerUserQTable::from_values(cells.into_iter().map(|c| c.2).collect(), np, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((values, qfactors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub schema: String,
    pub theta: f64,
    pub iterations: usize,
    pub final_span: f64,
    pub num_users: usize,
    pub buffer_size: u64,
    /// Indexed by QSI with user 0 varying fastest.
    pub values: Vec<f64>,
    pub pattern: Vec<usize>,
}

pub fn write_oracle_json(path: &Path, table: &CentralValueTable, policy: &CentralPolicy) -> Result<()> {
    let doc = OracleFile {
        schema: ORACLE_SCHEMA.into(),
        theta: table.theta,
        iterations: table.iterations,
        final_span: table.final_span,
        num_users: table.num_users,
        buffer_size: table.buffer_size,
        values: table.values.clone(),
        pattern: (0..table.values.len()).map(|i| policy.pattern_index(i)).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

pub fn read_oracle_json(path: &Path) -> Result<OracleFile> {
    let doc: OracleFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    check_schema(&doc.schema, ORACLE_SCHEMA, path)?;
    Ok(doc)
}
