//! `mmts schedule`: per-cluster temperature dump over training iterations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args as ClapArgs;
use mmts_core::schedule::{schedule_dump, write_dump_tsv, ScheduleConfig, ShiftTable};
use mmts_core::Result;

use crate::manifest::RunManifest;

pub const SCHEDULE_FILE: &str = "schedule.tsv";

#[derive(ClapArgs)]
pub struct Args {
    /// Schedule config JSON (ScheduleConfig).
    #[arg(long)]
    pub config: PathBuf,
    /// Shift table JSON providing per-cluster shifts.
    #[arg(long)]
    pub shifts: PathBuf,
    /// Number of iterations to evaluate, starting at 0.
    #[arg(long)]
    pub iters: u64,
    /// Directory receiving schedule.tsv and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let config: ScheduleConfig = serde_json::from_str(&text)?;
    let table = ShiftTable::load_json(&args.shifts)?;
    let rows = schedule_dump(&table, &config, args.iters)?;

    super::ensure_dir(&args.out)?;
    let mut w = BufWriter::new(File::create(args.out.join(SCHEDULE_FILE))?);
    write_dump_tsv(&rows, &mut w)?;
    // Hashing reads the file back, so the buffer must hit disk first.
    w.flush()?;
    drop(w);

    let mut manifest = RunManifest::new(
        "schedule",
        None,
        serde_json::json!({
            "schedule": serde_json::to_value(&config)?,
            "iters": args.iters,
        }),
    );
    manifest.record_input(&args.config)?;
    manifest.record_input(&args.shifts)?;
    manifest.record_output(&args.out, SCHEDULE_FILE)?;
    manifest.save(&args.out)?;
    println!(
        "dumped {} rows ({} iterations x {} clusters) -> {}",
        rows.len(),
        args.iters,
        table.k,
        args.out.display()
    );
    Ok(())
}
