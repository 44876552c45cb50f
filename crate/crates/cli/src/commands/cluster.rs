//! `mmts cluster`: K-Means on an embedding file, shifts from cluster sizes.

use std::fs;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use mmts_core::distribution::{build_shift_table, kmeans_fit};
use mmts_core::embedding::EmbeddingMatrix;
use mmts_core::Result;

use crate::manifest::RunManifest;

pub const SHIFT_TABLE_FILE: &str = "shift_table.json";

#[derive(ClapArgs)]
pub struct Args {
    /// MME embedding file to cluster.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Number of clusters.
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    /// Shift for the smallest cluster.
    #[arg(long)]
    pub sh_minus: f64,
    /// Shift for the largest cluster.
    #[arg(long)]
    pub sh_plus: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Directory receiving shift_table.json and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let embeddings = EmbeddingMatrix::load_mme(&args.embeddings)?;
    let model = kmeans_fit(&embeddings, args.k, args.seed, args.max_iters, args.tol)?;
    let table = build_shift_table(&model, &embeddings, args.sh_minus, args.sh_plus)?;

    super::ensure_dir(&args.out)?;
    table.save_json(args.out.join(SHIFT_TABLE_FILE))?;
    fs::write(
        args.out.join("inertia.txt"),
        format!("{:.17e}\n", model.inertia),
    )?;

    let mut manifest = RunManifest::new(
        "cluster",
        Some(args.seed),
        serde_json::json!({
            "embeddings": args.embeddings.to_string_lossy(),
            "k": args.k,
            "sh_minus": args.sh_minus,
            "sh_plus": args.sh_plus,
            "max_iters": args.max_iters,
            "tol": args.tol,
        }),
    );
    manifest.record_input(&args.embeddings)?;
    manifest.record_output(&args.out, SHIFT_TABLE_FILE)?;
    manifest.record_output(&args.out, "inertia.txt")?;
    manifest.save(&args.out)?;
    println!(
        "clustered {} rows into k={} (inertia {:.6e}, {} iterations) -> {}",
        embeddings.rows(),
        args.k,
        model.inertia,
        model.iterations_run,
        args.out.display()
    );
    Ok(())
}
