//! Plot-ready CSVs from run outputs. Nothing is rendered.
//!
//! | file | columns |
//! |------|---------|
//! | `fig_delay_sweep.csv` | `key,policy,point,value,delay_mean,delay_half_width,cost_mean,cost_half_width,drop_prob` |
//! | `fig_queue_cdf.csv` | `source,policy,q,count,cdf` |
//! | `fig_convergence.csv` | `source,slot,q,value,qfactor_ref`, for user (1,1) |

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{read_checkpoints, read_metrics_json, read_sweep_json};
use crate::sim::cdf;

pub const SWEEP_FIGURE: &str = "fig_delay_sweep.csv";
pub const CDF_FIGURE: &str = "fig_queue_cdf.csv";
pub const CONVERGENCE_FIGURE: &str = "fig_convergence.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct FigureStatus {
    pub name: &'static str,
    pub path: PathBuf,
    pub rows: usize,
    /// Inputs of this figure that could not be read.
    pub errors: Vec<String>,
}

fn find(dir: &Path, name: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            find(&p, name, out)?;
        } else if p.file_name().is_some_and(|f| f == name) {
            out.push(p);
        }
    }
    Ok(())
}

fn source(root: &Path, file: &Path) -> String {
    file.parent()
        .and_then(|p| p.strip_prefix(root).ok())
        .map(|p| p.display().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| ".".into())
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_record(header).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(w)
}

fn row(w: &mut csv::Writer<std::fs::File>, fields: Vec<String>) -> Result<()> {
    w.write_record(fields).map_err(|e| Error::Parse(e.to_string()))
}

/// Scans `input` recursively for `sweep.json`, `metrics.json` and
/// `checkpoints.csv` files and writes one CSV per figure into `out`.
pub fn report(input: &Path, out: &Path) -> Result<Vec<FigureStatus>> {
    if !input.is_dir() {
        return Err(Error::config(format!("input directory {} does not exist", input.display())));
    }
    std::fs::create_dir_all(out)?;
    Ok(vec![sweep_figure(input, out)?, cdf_figure(input, out)?, convergence_figure(input, out)?])
}

fn sweep_figure(input: &Path, out: &Path) -> Result<FigureStatus> {
    let path = out.join(SWEEP_FIGURE);
    let mut w = writer(
        &path,
        &[
            "key",
            "policy",
            "point",
            "value",
            "delay_mean",
            "delay_half_width",
            "cost_mean",
            "cost_half_width",
            "drop_prob",
        ],
    )?;
    let mut files = Vec::new();
    find(input, "sweep.json", &mut files)?;
    let mut status = FigureStatus {
        name: "delay_sweep",
        path: path.clone(),
        rows: 0,
        errors: Vec::new(),
    };
    for f in files {
        match read_sweep_json(&f) {
            Ok(doc) => {
                for r in &doc.rows {
                    row(
                        &mut w,
                        vec![
                            doc.key.clone(),
                            doc.policy.clone(),
                            r.point.to_string(),
                            r.value.to_string(),
                            r.delay.mean.to_string(),
                            r.delay.half_width.to_string(),
                            r.cost.mean.to_string(),
                            r.cost.half_width.to_string(),
                            r.drop_prob.to_string(),
                        ],
                    )?;
                    status.rows += 1;
                }
            }
            Err(e) => status.errors.push(format!("{}: {e}", f.display())),
        }
    }
    w.flush()?;
    Ok(status)
}

fn cdf_figure(input: &Path, out: &Path) -> Result<FigureStatus> {
    let path = out.join(CDF_FIGURE);
    let mut w = writer(&path, &["source", "policy", "q", "count", "cdf"])?;
    let mut files = Vec::new();
    find(input, "metrics.json", &mut files)?;
    let mut status = FigureStatus {
        name: "queue_cdf",
        path: path.clone(),
        rows: 0,
        errors: Vec::new(),
    };
    for f in files {
        match read_metrics_json(&f) {
            Ok(m) => {
                let src = source(input, &f);
                for (q, (count, c)) in m.histogram.iter().zip(cdf(&m.histogram)).enumerate() {
                    row(
                        &mut w,
                        vec![src.clone(), m.policy.clone(), q.to_string(), count.to_string(), c.to_string()],
                    )?;
                    status.rows += 1;
                }
            }
            Err(e) => status.errors.push(format!("{}: {e}", f.display())),
        }
    }
    w.flush()?;
    Ok(status)
}

fn convergence_figure(input: &Path, out: &Path) -> Result<FigureStatus> {
    let path = out.join(CONVERGENCE_FIGURE);
    let mut w = writer(&path, &["source", "slot", "q", "value", "qfactor_ref"])?;
    let mut files = Vec::new();
    find(input, "checkpoints.csv", &mut files)?;
    let mut status = FigureStatus {
        name: "convergence",
        path: path.clone(),
        rows: 0,
        errors: Vec::new(),
    };
    for f in files {
        let (header, rows) = match read_checkpoints(&f) {
            Ok(x) => x,
            Err(e) => {
                status.errors.push(format!("{}: {e}", f.display()));
                continue;
            }
        };
        let Some(&reference) = header.references.first() else {
            continue;
        };
        let src = source(input, &f);
        let mut slots: Vec<u64> = rows.iter().map(|r| r.slot).collect();
        slots.dedup();
        for slot in slots {
            for q in 0..=header.buffer_size {
                let pick = |table: &str, pattern: Option<usize>| {
                    rows.iter()
                        .find(|r| r.slot == slot && r.user == 0 && r.q == q && r.table == table && r.pattern == pattern)
                        .map(|r| r.value)
                };
                let (Some(v), Some(qf)) = (pick("value", None), pick("qfactor", Some(reference))) else {
                    status.errors.push(format!("{}: slot {slot} lacks user 1 entries at q = {q}", f.display()));
                    continue;
                };
                row(
                    &mut w,
                    vec![src.clone(), slot.to_string(), q.to_string(), v.to_string(), qf.to_string()],
                )?;
                status.rows += 1;
            }
        }
    }
    w.flush()?;
    Ok(status)
}
