//! `mmts gradcheck`: analytic vs finite-difference gradients, report to
//! stdout, exit 4 when any trial exceeds tolerance.

use clap::Args as ClapArgs;
use mmts_core::gradcheck::{run_trials, GradcheckConfig};
use mmts_core::{Error, Result};

#[derive(ClapArgs)]
pub struct Args {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Central difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

pub fn run(args: Args) -> Result<()> {
    let config = GradcheckConfig {
        trials: args.trials,
        seed: args.seed,
        step: args.step,
        tolerance: args.tolerance,
        ..GradcheckConfig::default()
    };
    let report = run_trials(&config)?;
    report.write_text(std::io::stdout().lock())?;
    if !report.passed {
        return Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.6e} exceeds {:.6e}",
            report.max_relative_error, args.tolerance
        )));
    }
    Ok(())
}
