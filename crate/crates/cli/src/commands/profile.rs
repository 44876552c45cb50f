//! `mmts profile`: per-negative softmax contributions for one anchor row
//! across a temperature grid, one TSV per temperature.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args as ClapArgs;
use mmts_core::embedding::EmbeddingMatrix;
use mmts_core::loss::{
    negative_contribution_profile, write_profile_tsv, Direction, SimilarityMatrix,
};
use mmts_core::{Error, Result};

use crate::manifest::RunManifest;

/// File name for the profile of the temperature at `index` in the grid.
pub fn profile_file_name(index: usize) -> String {
    format!("profile_{index:03}.tsv")
}

#[derive(ClapArgs)]
pub struct Args {
    /// Square MME file holding a similarity matrix fixture.
    #[arg(long)]
    pub similarities: PathBuf,
    /// Anchor row to profile.
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    /// Temperatures to profile, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub taus: Vec<f64>,
    /// Directory receiving one profile TSV per temperature and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let fixture = EmbeddingMatrix::load_mme(&args.similarities)?;
    if fixture.rows() != fixture.cols() {
        return Err(Error::InvalidArgument(format!(
            "similarity fixture must be square, got {}x{}",
            fixture.rows(),
            fixture.cols()
        )));
    }
    let similarities = SimilarityMatrix::new(
        fixture.rows(),
        fixture.data().to_vec(),
        Direction::VToT,
    )?;

    super::ensure_dir(&args.out)?;
    let mut manifest = RunManifest::new(
        "profile",
        None,
        serde_json::json!({
            "similarities": args.similarities.to_string_lossy(),
            "row": args.row,
            "taus": args.taus,
        }),
    );
    manifest.record_input(&args.similarities)?;
    for (index, &tau) in args.taus.iter().enumerate() {
        let profile = negative_contribution_profile(&similarities, args.row, tau)?;
        let name = profile_file_name(index);
        let mut w = BufWriter::new(File::create(args.out.join(&name))?);
        write_profile_tsv(&profile, &mut w)?;
        // Hashing reads the file back, so the buffer must hit disk first.
        w.flush()?;
        drop(w);
        manifest.record_output(&args.out, &name)?;
        println!("tau {tau} -> {name}");
    }
    manifest.save(&args.out)?;
    println!(
        "profiled row {} over {} temperatures -> {}",
        args.row,
        args.taus.len(),
        args.out.display()
    );
    Ok(())
}
