//! `phvae`: train and evaluate polynomial hierarchical VAEs from a JSON
//! config. Subcommands: gen-data, train, reconstruct, compare, selfcheck.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phvae_core::config::RunConfig;
use phvae_core::error::Error;
use phvae_core::{data, metrics, report, snapshot, train};

mod selfcheck;

#[derive(Parser)]
#[command(name = "phvae", version, about = "Polynomial hierarchical VAE pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Scalar overrides applied on top of the JSON config.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Run seed (initialization, shuffling, noise).
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Noise amplitude A.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Branch count S.
    #[arg(long)]
    s_max: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(seed) = self.seed {
            config.model.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.optimizer.epochs = epochs;
        }
        if let Some(a) = self.amplitude {
            config.model.amplitude = a;
        }
        if let Some(s) = self.s_max {
            config.model.branches = s;
        }
        if let Some(lr) = self.lr {
            config.optimizer.lr = lr;
        }
        if let Some(batch) = self.batch_size {
            config.optimizer.batch_size = batch;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset as CSV plus a JSON sidecar.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a model; writes epochs.csv, snapshot.json, and report.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Reconstruct the dataset through a trained snapshot.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        /// Snapshot file; defaults to <output_dir>/snapshot.json.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Forward repeats (fresh noise per repeat).
        #[arg(long)]
        repeats: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sweep the (S, A, seed) grid and write the comparison table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the built-in verification suite (no files written).
    Selfcheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { config, overrides } => load(&config, &overrides).and_then(cmd_gen_data),
        Command::Train { config, overrides } => load(&config, &overrides).and_then(cmd_train),
        Command::Reconstruct {
            config,
            snapshot,
            repeats,
            overrides,
        } => load(&config, &overrides)
            .and_then(|run| cmd_reconstruct(run, snapshot.as_deref(), repeats)),
        Command::Compare { config, overrides } => load(&config, &overrides).and_then(cmd_compare),
        Command::Selfcheck => selfcheck::run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, Error> {
    let mut config = RunConfig::load(path)?;
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn ensure_output_dir(config: &RunConfig) -> Result<(), Error> {
    std::fs::create_dir_all(&config.output_dir)?;
    Ok(())
}

fn cmd_gen_data(config: RunConfig) -> Result<(), Error> {
    ensure_output_dir(&config)?;
    let raw = data::generate::<f64>(&config.dataset)?;
    let csv_path = config.output_dir.join("dataset.csv");
    let file = std::fs::File::create(&csv_path)?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let m = raw.samples.first().map_or(0, Vec::len);
    writer.write_record((0..m).map(|j| format!("f{j}")))?;
    for row in &raw.samples {
        writer.write_record(row.iter().map(f64::to_string))?;
    }
    writer.flush()?;

    let sidecar = serde_json::json!({
        "spec": config.dataset,
        "n_rows": raw.samples.len(),
        "n_cols": m,
    });
    std::fs::write(
        config.output_dir.join("dataset.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    println!(
        "wrote {} rows x {} cols to {}",
        raw.samples.len(),
        m,
        csv_path.display()
    );
    Ok(())
}

fn cmd_train(config: RunConfig) -> Result<(), Error> {
    ensure_output_dir(&config)?;
    let epochs_path = config.output_dir.join("epochs.csv");
    let mut writer = report::EpochCsvWriter::create(&epochs_path, config.model.branches)?;
    // Stream rows so a failed run keeps its partial log.
    let outcome = train::train_with_callback::<f64>(&config, |row| writer.write_row(row))?;
    writer.finish()?;

    let snapshot_path = config.output_dir.join("snapshot.json");
    snapshot::Snapshot::from_params(&outcome.params).save(&snapshot_path)?;

    let mut train_report = outcome.report;
    train_report.snapshot_path = Some(snapshot_path.display().to_string());
    report::RunReportDoc::from_report(&train_report).save(&config.output_dir.join("report.json"))?;

    println!(
        "trained {} epochs in {:.2} s; final loss {}",
        train_report.epochs.len(),
        train_report.wall_seconds,
        train_report
            .epochs
            .last()
            .map_or("n/a".to_string(), |r| r.loss.total.to_string())
    );
    Ok(())
}

fn cmd_reconstruct(
    config: RunConfig,
    snapshot_path: Option<&Path>,
    repeats: Option<usize>,
) -> Result<(), Error> {
    ensure_output_dir(&config)?;
    let default_path = config.output_dir.join("snapshot.json");
    let snapshot_path = snapshot_path.unwrap_or(&default_path);
    let snap = snapshot::Snapshot::load(snapshot_path)?;
    let params = snap.into_params::<f64>(&config.model)?;

    let raw = data::generate::<f64>(&config.dataset)?;
    let normalized = data::normalize_dataset(&raw.samples)?;
    let n_repeats = repeats.unwrap_or(config.eval.n_repeats);
    let recon = train::reconstruct(
        &config.model,
        &params,
        &normalized.samples,
        config.model.amplitude,
        n_repeats,
        config.model.seed,
    )?;

    let csv_path = config.output_dir.join("reconstruction.csv");
    let file = std::fs::File::create(&csv_path)?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let m = recon.first().map_or(0, Vec::len);
    writer.write_record((0..m).map(|j| format!("f{j}")))?;
    for row in &recon {
        writer.write_record(row.iter().map(f64::to_string))?;
    }
    writer.flush()?;

    let density = metrics::histogram_density(&metrics::pool(&recon), config.eval.n_bins, (0.0, 1.0))?;
    report::write_density_csv(&config.output_dir.join("reconstruction_density.csv"), &density)?;
    println!("reconstructed {} rows to {}", recon.len(), csv_path.display());
    Ok(())
}

fn cmd_compare(config: RunConfig) -> Result<(), Error> {
    ensure_output_dir(&config)?;
    let (rows, truth) = metrics::compare_models(
        &config,
        &config.eval.s_grid,
        &config.eval.a_grid,
        &config.eval.seeds,
    )?;
    report::write_comparison_csv(&config.output_dir.join("comparison.csv"), &rows)?;
    report::write_density_csv(&config.output_dir.join("density_truth.csv"), &truth)?;

    // Density tables for the best cell overall and the best S = 1 baseline.
    let best = rows
        .iter()
        .min_by(|a, b| a.l1_distance.total_cmp(&b.l1_distance));
    let best_baseline = rows
        .iter()
        .filter(|r| r.branches == 1)
        .min_by(|a, b| a.l1_distance.total_cmp(&b.l1_distance));
    if let Some(row) = best {
        if let Some(d) = &row.density {
            report::write_density_csv(&config.output_dir.join("density_best.csv"), d)?;
        }
    }
    if let Some(row) = best_baseline {
        if let Some(d) = &row.density {
            report::write_density_csv(&config.output_dir.join("density_baseline.csv"), d)?;
        }
    }
    println!(
        "compared {} cells; table at {}",
        rows.len(),
        config.output_dir.join("comparison.csv").display()
    );
    Ok(())
}
