use crate::config::{Mode, RunConfig};
use crate::error::{HarnessError, Result};
use crate::runner::run_experiment;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Gamma,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "lambda" => SweepParam::Lambda,
            "gamma" => SweepParam::Gamma,
            other => {
                return Err(HarnessError::config(format!(
                    "sweep parameter must be `lambda` or `gamma`, got `{other}`"
                )))
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
        }
    }
}

/// Run the experiment once per value with a shared seed and collect a CSV.
/// A failing value is reported and skipped; the sweep continues.
pub fn sweep(
    config: &RunConfig,
    parameter: SweepParam,
    values: &[f64],
    out_dir: &Path,
) -> Result<PathBuf> {
    if config.mode != Mode::Lpt {
        return Err(HarnessError::config(
            "sweeps cover the test-passing mode only (mean interaction and cardinality columns)",
        ));
    }
    if values.is_empty() {
        return Err(HarnessError::config("sweep needs at least one value"));
    }
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from("value,test_acc,mean_interaction,mean_cardinality\n");
    for (i, &value) in values.iter().enumerate() {
        let mut cfg = config.clone();
        match parameter {
            SweepParam::Lambda => cfg.lambda = Some(value),
            SweepParam::Gamma => cfg.gamma = value,
        }
        let sub = out_dir.join(format!("{}_{i}_{value}", parameter.as_str()));
        match run_experiment(&cfg, &sub) {
            Ok(outcome) => {
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    value,
                    outcome.test_accuracy,
                    outcome.mean_interaction.unwrap_or(f64::NAN),
                    outcome.mean_cardinality.unwrap_or(f64::NAN)
                );
            }
            Err(e) => {
                eprintln!("sweep value {value} failed: {e}");
            }
        }
    }
    let path = out_dir.join("sweep.csv");
    fs::write(&path, csv)?;
    Ok(path)
}
