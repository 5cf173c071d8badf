//! Metrics logging: append-only JSONL mirroring [`MetricsRow`] fields, plus
//! a flat CSV export.

use super::{MetricsRow, TrainError};
use std::io::Write;
use std::path::Path;

/// Append rows as they arrive; one JSON record per line.
pub struct MetricsLogger {
    out: std::io::BufWriter<std::fs::File>,
}

impl MetricsLogger {
    pub fn create(path: &Path) -> Result<Self, TrainError> {
        let file = std::fs::File::create(path)?;
        Ok(Self { out: std::io::BufWriter::new(file) })
    }

    pub fn append(path: &Path) -> Result<Self, TrainError> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: std::io::BufWriter::new(file) })
    }

    pub fn log(&mut self, row: &MetricsRow) -> Result<(), TrainError> {
        let line = serde_json::to_string(row).map_err(|e| TrainError::Metrics(e.to_string()))?;
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics_jsonl(path: &Path) -> Result<Vec<MetricsRow>, TrainError> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line)
                .map_err(|e| TrainError::Metrics(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(rows)
}

pub fn export_csv(rows: &[MetricsRow], path: &Path) -> Result<(), TrainError> {
    let mut out = String::from(
        "epoch,l_sim,l_reg,l_global_mse,l_align,l_disen,l_anch,l_total,\
         holdout_edge_cosine,holdout_anchor_cosine,wall_time\n",
    );
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.epoch,
            r.breakdown.l_sim,
            r.breakdown.l_reg,
            r.breakdown.l_global_mse,
            r.breakdown.l_align,
            r.breakdown.l_disen,
            r.breakdown.l_anch,
            r.breakdown.l_total,
            opt(r.holdout_edge_cosine),
            opt(r.holdout_anchor_cosine),
            r.wall_time,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossBreakdown;

    fn row(epoch: usize) -> MetricsRow {
        MetricsRow {
            epoch,
            breakdown: LossBreakdown {
                l_sim: 1.5,
                l_reg: 0.25,
                l_global_mse: 0.01,
                l_align: 1.76,
                l_disen: 0.9,
                l_anch: 0.1,
                l_total: 3.12,
            },
            holdout_edge_cosine: Some(0.42),
            holdout_anchor_cosine: None,
            wall_time: 1.25,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let rows = vec![row(1), row(2)];
        let mut logger = MetricsLogger::create(&path).unwrap();
        for r in &rows {
            logger.log(r).unwrap();
        }
        drop(logger);
        let back = read_metrics_jsonl(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn csv_has_one_line_per_row_plus_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        export_csv(&[row(1), row(5)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("epoch,l_sim"));
        assert!(lines[1].starts_with("1,1.5,"));
        // Missing holdout value stays an empty field.
        assert!(lines[1].contains(",0.42,,"));
    }
}
