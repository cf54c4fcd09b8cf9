use std::path::PathBuf;

use advface::eval::{epsilon_sweep, sweep_curve_csv, sweep_table_csv, SweepConfig};
use advface::physim::CaptureGridConfig;
use advface::toy::{ToyStack, ToyStackConfig};
use serde::{Deserialize, Serialize};

use crate::error::{parse_toml, write_text, CliError, CliResult};
use crate::grid::{check_pair_dims, claim_output};
use crate::inputs::{fingerprint, hash_text, load_pairs};
use crate::manifest::RunManifest;
use crate::{output_dir, Progress};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Sweep config (TOML); every field has a default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pair list CSV; synthetic pairs when omitted.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn d_pair_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepExperiment {
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub stack: ToyStackConfig,
    #[serde(default)]
    pub capture: CaptureGridConfig,
    /// Seed of the synthetic pairs; `max_attempts` of them are drawn.
    #[serde(default = "d_pair_seed")]
    pub pair_seed: u64,
}

pub fn run(args: Args, progress: &Progress) -> CliResult<()> {
    let mut cfg: SweepExperiment = match &args.config {
        Some(p) => parse_toml(p)?,
        None => toml::from_str("").expect("all fields default"),
    };
    if let Some(s) = args.seed {
        cfg.sweep.seed = s;
    }
    cfg.sweep
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let stack = ToyStack::build(cfg.stack.clone())?;
    let pairs = match &args.pairs {
        Some(p) => load_pairs(p, &stack.faces)?,
        None => stack.pairs(cfg.sweep.max_attempts, cfg.pair_seed),
    };
    check_pair_dims(&pairs, cfg.stack.side)?;
    let capture = cfg.capture.build()?;
    let out = output_dir(args.out.clone(), "sweep");
    let resolved = toml::to_string(&cfg).expect("config serializes");
    claim_output(
        &out,
        RunManifest::new(
            "sweep",
            cfg.sweep.seed,
            args.config.as_deref(),
            hash_text(&resolved),
            fingerprint(&pairs),
            &out,
        ),
    )?;
    write_text(&out.join("config.toml"), &resolved)?;

    let model = stack.zoo.whitebox.clone();
    let threshold = stack.thresholds.get(model.id())?.clone();
    progress.say(format!(
        "{} budgets x up to {} attempts against {}",
        cfg.sweep.epsilons.len(),
        cfg.sweep.max_attempts.min(pairs.len()),
        model.id()
    ));
    let points = epsilon_sweep(&cfg.sweep, &pairs, model, &threshold, &capture)?;
    write_text(&out.join("sweep_curve.csv"), sweep_curve_csv(&points))?;
    write_text(&out.join("sweep_table.csv"), sweep_table_csv(&points))?;
    write_text(
        &out.join("sweep.json"),
        serde_json::to_string_pretty(&points).expect("sweep serializes") + "\n",
    )?;
    progress.say(format!("sweep written to {}", out.display()));
    Ok(())
}
