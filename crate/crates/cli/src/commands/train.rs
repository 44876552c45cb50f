//! `mmts train`: SGD on the toy two-tower model with scheduled values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args as ClapArgs;
use mmts_core::synthdata::PairedDataset;
use mmts_core::trainer::{train, TrainConfig, TrainMode, write_log_tsv};
use mmts_core::Result;

use crate::commands::cluster::SHIFT_TABLE_FILE;
use crate::manifest::RunManifest;

pub const TRAIN_LOG_FILE: &str = "train_log.tsv";

#[derive(ClapArgs)]
pub struct Args {
    /// Dataset directory produced by `mmts synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Train config JSON (TrainConfig).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's mode, e.g. ts_and_ics or fixed:0.05.
    #[arg(long)]
    pub mode: Option<TrainMode>,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let dataset = PairedDataset::load_dir(&args.data)?;
    let mut config = TrainConfig::load_json(&args.config)?;
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    let run = train(&dataset, &config)?;

    super::ensure_dir(&args.out)?;
    run.model.save_dir(&args.out)?;
    let mut log_w = BufWriter::new(File::create(args.out.join(TRAIN_LOG_FILE))?);
    write_log_tsv(&run.log, &mut log_w)?;
    // Hashing reads the file back, so the buffer must hit disk first.
    log_w.flush()?;
    drop(log_w);
    if let Some(table) = &run.shift_table {
        table.save_json(args.out.join(SHIFT_TABLE_FILE))?;
    }

    let mut manifest = RunManifest::new(
        "train",
        Some(config.seed),
        serde_json::json!({
            "data": args.data.to_string_lossy(),
            "train": serde_json::to_value(&config)?,
        }),
    );
    for name in [
        mmts_core::synthdata::DATASET_SIDECAR,
        mmts_core::synthdata::DATASET_VISUAL,
        mmts_core::synthdata::DATASET_TEXT,
    ] {
        manifest.record_input(args.data.join(name))?;
    }
    manifest.record_input(&args.config)?;
    manifest.record_output(&args.out, mmts_core::trainer::MODEL_VISUAL_FILE)?;
    manifest.record_output(&args.out, mmts_core::trainer::MODEL_TEXT_FILE)?;
    manifest.record_output(&args.out, TRAIN_LOG_FILE)?;
    if run.shift_table.is_some() {
        manifest.record_output(&args.out, SHIFT_TABLE_FILE)?;
    }
    manifest.save(&args.out)?;

    let final_loss = run.log.last().map(|e| e.loss);
    match final_loss {
        Some(loss) => println!(
            "trained {} iterations (final loss {loss:.6}) -> {}",
            config.total_iters,
            args.out.display()
        ),
        None => println!("trained 0 iterations -> {}", args.out.display()),
    }
    Ok(())
}
