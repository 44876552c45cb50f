//! `mmts eval`: retrieval metrics for a finished run, both directions.

use std::fs;
use std::path::PathBuf;

use clap::{Args as ClapArgs, ValueEnum};
use mmts_core::loss::similarity_matrix;
use mmts_core::retrieval_eval::{compute_metrics_report, RelevancyMatrix};
use mmts_core::synthdata::PairedDataset;
use mmts_core::trainer::TwoTowerModel;
use mmts_core::{Error, Result};

use crate::manifest::RunManifest;

pub const METRICS_FILE: &str = "metrics.json";

/// How gallery items count as relevant for a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RelevancyMode {
    /// Only the query's own pair is relevant.
    Identity,
    /// Every gallery item from the query's cluster is relevant.
    Labels,
}

#[derive(ClapArgs)]
pub struct Args {
    /// Run directory produced by `mmts train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum, default_value_t = RelevancyMode::Identity)]
    pub relevancy: RelevancyMode,
    /// Recall cutoffs.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10])]
    pub ks: Vec<usize>,
    /// Relevancy grades above this threshold count as positives for mAP.
    #[arg(long, default_value_t = 0.5)]
    pub map_threshold: f64,
    /// Directory receiving metrics.json and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let run_manifest = RunManifest::load(&args.run)?;
    run_manifest.verify(&args.run)?;
    let data_dir = run_manifest
        .config
        .get("data")
        .and_then(|v| v.as_str())
        .ok_or_else(|| {
            Error::Format(format!(
                "run manifest in {} records no data directory",
                args.run.display()
            ))
        })?
        .to_string();

    let dataset = PairedDataset::load_dir(&data_dir)?;
    let model = TwoTowerModel::load_dir(&args.run)?;
    let (v_emb, t_emb) = model.forward(&dataset.visual, &dataset.text)?;
    let similarities = similarity_matrix(&v_emb, &t_emb)?;
    let relevancy = match args.relevancy {
        RelevancyMode::Identity => RelevancyMatrix::identity(dataset.len())?,
        RelevancyMode::Labels => RelevancyMatrix::from_labels(&dataset.labels, &dataset.labels)?,
    };
    let report = compute_metrics_report(
        &similarities,
        &relevancy,
        &args.ks,
        args.map_threshold,
        Some((&dataset.labels, &dataset.sizes)),
    )?;

    super::ensure_dir(&args.out)?;
    fs::write(args.out.join(METRICS_FILE), report.to_json_string()?)?;

    let mut manifest = RunManifest::new(
        "eval",
        None,
        serde_json::json!({
            "run": args.run.to_string_lossy(),
            "data": data_dir,
            "relevancy": match args.relevancy {
                RelevancyMode::Identity => "identity",
                RelevancyMode::Labels => "labels",
            },
            "ks": args.ks,
            "map_threshold": args.map_threshold,
        }),
    );
    manifest.record_input(args.run.join(mmts_core::trainer::MODEL_VISUAL_FILE))?;
    manifest.record_input(args.run.join(mmts_core::trainer::MODEL_TEXT_FILE))?;
    for name in [
        mmts_core::synthdata::DATASET_SIDECAR,
        mmts_core::synthdata::DATASET_VISUAL,
        mmts_core::synthdata::DATASET_TEXT,
    ] {
        manifest.record_input(std::path::Path::new(&data_dir).join(name))?;
    }
    manifest.record_output(&args.out, METRICS_FILE)?;
    manifest.save(&args.out)?;
    println!(
        "evaluated {} queries (R@1 v2t {:.4}) -> {}",
        report.n,
        report.recall_at.get(&1).copied().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}
