//! On-disk report formats: per-epoch CSV, comparison CSV, density CSV, and
//! the JSON run report. CSV dialect: comma separator, '.' decimal point, LF
//! line endings, mandatory header row.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::loss::LossBreakdown;
use crate::metrics::{ComparisonRow, DensityEstimate};
use crate::train::{EpochRow, TrainReport};

/// Writer for the epoch log. Columns: epoch, recon, kl_1..kl_S, ph, mi,
/// total. Rows stream in as training progresses so partial logs survive a
/// failed run.
pub struct EpochCsvWriter {
    writer: csv::Writer<std::fs::File>,
    branches: usize,
    wrote_header: bool,
}

impl EpochCsvWriter {
    pub fn create(path: &Path, branches: usize) -> Result<Self> {
        let file = std::fs::File::create(path)?;
        Ok(EpochCsvWriter {
            writer: csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(file),
            branches,
            wrote_header: false,
        })
    }

    fn header(&self) -> Vec<String> {
        let mut cols = vec!["epoch".to_string(), "recon".to_string()];
        cols.extend((1..=self.branches).map(|s| format!("kl_{s}")));
        cols.extend(["ph", "mi", "total"].map(String::from));
        cols
    }

    pub fn write_row(&mut self, row: &EpochRow) -> Result<()> {
        if !self.wrote_header {
            self.writer.write_record(self.header())?;
            self.wrote_header = true;
        }
        let mut record = vec![row.epoch.to_string(), row.loss.recon.to_string()];
        record.extend(row.loss.kl_per_branch.iter().map(f64::to_string));
        record.extend([
            row.loss.ph.to_string(),
            row.loss.mi.to_string(),
            row.loss.total.to_string(),
        ]);
        self.writer.write_record(record)?;
        Ok(())
    }

    /// Write the header even for an empty run, then flush.
    pub fn finish(mut self) -> Result<()> {
        if !self.wrote_header {
            self.writer.write_record(self.header())?;
        }
        self.writer.flush()?;
        Ok(())
    }
}

pub fn write_epoch_csv(path: &Path, branches: usize, rows: &[EpochRow]) -> Result<()> {
    let mut writer = EpochCsvWriter::create(path, branches)?;
    for row in rows {
        writer.write_row(row)?;
    }
    writer.finish()
}

/// Read an epoch log back; used to recompute summaries from artifacts.
pub fn read_epoch_csv(path: &Path) -> Result<Vec<EpochRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let branches = headers.iter().filter(|h| h.starts_with("kl_")).count();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| Error::Config(format!("epoch csv row too short: {record:?}")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number in epoch csv: {e}")))
        };
        let epoch = field(0)? as usize;
        let recon = field(1)?;
        let kl_per_branch = (0..branches)
            .map(|s| field(2 + s))
            .collect::<Result<Vec<f64>>>()?;
        let ph = field(2 + branches)?;
        let mi = field(3 + branches)?;
        let total = field(4 + branches)?;
        rows.push(EpochRow {
            epoch,
            loss: LossBreakdown {
                recon,
                kl_per_branch,
                ph,
                mi,
                total,
            },
        });
    }
    Ok(rows)
}

/// Comparison table. Columns: S, A, seed, l1_distance, stabilized_loss,
/// wall_seconds, label.
pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    writer.write_record([
        "S",
        "A",
        "seed",
        "l1_distance",
        "stabilized_loss",
        "wall_seconds",
        "label",
    ])?;
    for row in rows {
        writer.write_record([
            row.branches.to_string(),
            row.amplitude.to_string(),
            row.seed.to_string(),
            row.l1_distance.to_string(),
            row.stabilized_loss.to_string(),
            row.wall_seconds.to_string(),
            row.label.clone(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Density table. Columns: bin_low, bin_high, mass.
pub fn write_density_csv(path: &Path, density: &DensityEstimate) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    writer.write_record(["bin_low", "bin_high", "mass"])?;
    for (i, mass) in density.masses.iter().enumerate() {
        writer.write_record([
            density.bin_edges[i].to_string(),
            density.bin_edges[i + 1].to_string(),
            mass.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// The JSON run report: config echo, seed, timing, flags, and summary
/// figures. Epoch rows live in the CSV, not here.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReportDoc {
    pub config: RunConfig,
    pub seed: u64,
    pub epochs_run: usize,
    pub wall_seconds: f64,
    pub flags: Vec<String>,
    pub snapshot_path: Option<String>,
    pub final_total_loss: Option<f64>,
}

impl RunReportDoc {
    pub fn from_report(report: &TrainReport) -> Self {
        RunReportDoc {
            config: report.config.clone(),
            seed: report.seed,
            epochs_run: report.epochs.len(),
            wall_seconds: report.wall_seconds,
            flags: report.flags.clone(),
            snapshot_path: report.snapshot_path.clone(),
            final_total_loss: report.epochs.last().map(|r| r.loss.total),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
