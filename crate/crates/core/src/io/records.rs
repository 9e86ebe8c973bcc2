//! View schedule JSON and the training metrics CSV.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_bytes, read_json, write_bytes, write_json};
use crate::error::{Error, Result};
use crate::selection::ViewPlan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleFile {
    /// Full view order: the coverage set first, then the greedy extension.
    pub order: Vec<usize>,
    pub coverage: Vec<usize>,
    pub k_min: usize,
    /// False when the coverage set came from the greedy fallback.
    pub optimal: bool,
    pub k: usize,
    pub selected: Vec<usize>,
}

impl ScheduleFile {
    pub fn from_plan(plan: &ViewPlan, k: usize) -> Result<Self> {
        Ok(Self {
            order: plan.schedule.order.clone(),
            coverage: plan.coverage.selected.clone(),
            k_min: plan.k_min(),
            optimal: plan.coverage.optimal,
            k,
            selected: plan.take(k)?,
        })
    }
}

pub fn write_schedule(path: &Path, s: &ScheduleFile) -> Result<()> {
    write_json(path, s)
}

pub fn read_schedule(path: &Path) -> Result<ScheduleFile> {
    read_json(path)
}

/// One line of the training log; `psnr` is only set on evaluation iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub loss: f64,
    pub psnr: Option<f64>,
}

pub const METRICS_HEADER: &str = "iteration,loss,psnr";

pub fn encode_metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        // `{}` on f64 prints the shortest string that parses back to the same value
        let psnr = match r.psnr {
            Some(p) if p.is_infinite() => "inf".to_string(),
            Some(p) => p.to_string(),
            None => String::new(),
        };
        writeln!(s, "{},{},{}", r.iteration, r.loss, psnr).unwrap();
    }
    s
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_bytes(path, encode_metrics_csv(rows).as_bytes())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::format(path, "not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::format(path, format!("expected header {METRICS_HEADER:?}")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::format(path, format!("line {}: {line:?}", i + 2));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad());
            }
            let psnr = match cols[2] {
                "" => None,
                "inf" => Some(f64::INFINITY),
                v => Some(v.parse().map_err(|_| bad())?),
            };
            Ok(MetricsRow { iteration: cols[0].parse().map_err(|_| bad())?, loss: cols[1].parse().map_err(|_| bad())?, psnr })
        })
        .collect()
}
