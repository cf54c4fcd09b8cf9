use std::path::{Path, PathBuf};

use advface::attacks::{
    run_cell, Algorithm, AttackPair, BlackBox, CellKey, GridConfig, GridSpec, Technique,
};
use advface::eval::{evaluate_grid, write_report};
use advface::imagecore::save_image;
use advface::physim::CaptureGridConfig;
use advface::toy::{ToyStack, ToyStackConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{create_dir, parse_toml, write_text, CliError, CliResult};
use crate::inputs::{fingerprint, hash_text, load_pairs};
use crate::manifest::RunManifest;
use crate::report::{rebuild, CELLS, DONE, RECORD};
use crate::{output_dir, Progress};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Experiment config (TOML); every field has a default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pair list CSV; synthetic pairs from the config when omitted.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the master seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Only these algorithms, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<Algorithm>,
    /// Only these black-box techniques, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub blackbox: Vec<BlackBox>,
    /// Only these techniques (labels or S0..S4), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub techniques: Vec<Technique>,
    /// Stop after computing this many cells; rerunning resumes.
    #[arg(long)]
    pub max_cells: Option<usize>,
}

fn d_count() -> usize {
    20
}
fn d_physical() -> usize {
    5
}
fn d_pair_seed() -> u64 {
    1
}

/// Synthetic pair generation and the physical subset size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSettings {
    /// Synthetic pairs when no pair list is given.
    #[serde(default = "d_count")]
    pub count: usize,
    #[serde(default = "d_pair_seed")]
    pub seed: u64,
    /// The first `physical` pairs of each cell go through the simulator.
    #[serde(default = "d_physical")]
    pub physical: usize,
}

impl Default for PairSettings {
    fn default() -> Self {
        toml::from_str("").expect("all fields default")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<Algorithm>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blackboxes: Option<Vec<BlackBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub techniques: Option<Vec<Technique>>,
}

impl Subset {
    pub fn spec(&self) -> GridSpec {
        let full = GridSpec::full();
        GridSpec {
            algorithms: self.algorithms.clone().unwrap_or(full.algorithms),
            blackboxes: self.blackboxes.clone().unwrap_or(full.blackboxes),
            techniques: self.techniques.clone().unwrap_or(full.techniques),
        }
    }
}

/// Everything a grid run reads besides its pair list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub attack: GridConfig,
    #[serde(default)]
    pub stack: ToyStackConfig,
    #[serde(default)]
    pub capture: CaptureGridConfig,
    #[serde(default)]
    pub pairs: PairSettings,
    #[serde(default)]
    pub subset: Subset,
}

fn resolve_config(args: &Args) -> CliResult<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => parse_toml(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.attack.seed = s;
    }
    if !args.algorithms.is_empty() {
        cfg.subset.algorithms = Some(args.algorithms.clone());
    }
    if !args.blackbox.is_empty() {
        cfg.subset.blackboxes = Some(args.blackbox.clone());
    }
    if !args.techniques.is_empty() {
        cfg.subset.techniques = Some(args.techniques.clone());
    }
    Ok(cfg)
}

pub(crate) fn check_pair_dims(pairs: &[AttackPair], side: usize) -> CliResult<()> {
    for p in pairs {
        for (what, dims) in [("source", p.source.dims()), ("target", p.target.dims())] {
            if dims != (side, side, 3) {
                return Err(CliError::Contract(format!(
                    "pair {}: {what} is {}x{}x{}, models expect {side}x{side}x3",
                    p.label, dims.0, dims.1, dims.2
                )));
            }
        }
        if (p.patch.height(), p.patch.width()) != (side, side) {
            return Err(CliError::Contract(format!(
                "pair {}: patch mask is not {side}x{side}",
                p.label
            )));
        }
    }
    Ok(())
}

pub(crate) fn cell_dir(out: &Path, key: &CellKey) -> PathBuf {
    out.join(CELLS).join(key.slug())
}

/// Adopts an existing manifest for the same run, refuses a different one.
pub(crate) fn claim_output(out: &Path, mut manifest: RunManifest) -> CliResult<RunManifest> {
    create_dir(out)?;
    if let Some(old) = RunManifest::read(out)? {
        if !old.same_run(&manifest) {
            return Err(CliError::Contract(format!(
                "{} holds a different run (seed, config, inputs or grid differ); choose another --out",
                out.display()
            )));
        }
        manifest.timestamp = old.timestamp;
    }
    manifest.write(out)?;
    Ok(manifest)
}

pub fn run(args: Args, progress: &Progress) -> CliResult<()> {
    let cfg = resolve_config(&args)?;
    let spec = cfg.subset.spec();
    if spec.cells().is_empty() {
        return Err(CliError::Usage("grid subset selects no cells".into()));
    }
    let stack = ToyStack::build(cfg.stack.clone())?;
    let pairs = match &args.pairs {
        Some(p) => load_pairs(p, &stack.faces)?,
        None => stack.pairs(cfg.pairs.count, cfg.pairs.seed),
    };
    if pairs.is_empty() {
        return Err(CliError::Usage("grid needs at least one pair".into()));
    }
    check_pair_dims(&pairs, cfg.stack.side)?;
    let capture = cfg.capture.build()?;

    let out = output_dir(args.out.clone(), "grid");
    let resolved = toml::to_string(&cfg).expect("config serializes");
    let mut manifest = RunManifest::new(
        "grid",
        cfg.attack.seed,
        args.config.as_deref(),
        hash_text(&resolved),
        fingerprint(&pairs),
        &out,
    );
    manifest.grid = Some(spec.clone());
    claim_output(&out, manifest)?;
    write_text(&out.join("config.toml"), &resolved)?;

    let cells = spec.cells();
    let pending: Vec<CellKey> = cells
        .iter()
        .copied()
        .filter(|k| !cell_dir(&out, k).join(DONE).exists())
        .collect();
    let todo = &pending[..args.max_cells.unwrap_or(pending.len()).min(pending.len())];
    progress.say(format!(
        "{} cells, {} already complete, running {} over {} pairs",
        cells.len(),
        cells.len() - pending.len(),
        todo.len(),
        pairs.len()
    ));
    todo.par_iter().try_for_each(|&key| -> CliResult<()> {
        let outcomes = run_cell(key, &pairs, &cfg.attack, &stack.zoo);
        let mut records = evaluate_grid(
            &outcomes,
            &pairs,
            &stack.zoo,
            &stack.thresholds,
            &capture,
            cfg.pairs.physical,
        )?;
        let record = records.pop().expect("one cell evaluated");
        let dir = cell_dir(&out, &key);
        create_dir(&dir)?;
        for o in &outcomes {
            if let Ok(r) = &o.result {
                save_image(
                    &r.adversarial,
                    dir.join(format!("pair_{:03}.png", o.pair_index)),
                )?;
            }
        }
        let failed = record.axs.iter().filter(|r| r.error.is_some()).count();
        write_text(
            &dir.join(RECORD),
            serde_json::to_string_pretty(&record).expect("record serializes") + "\n",
        )?;
        write_text(&dir.join(DONE), "")?;
        progress.say(format!(
            "cell {} done{}",
            key.slug(),
            if failed > 0 {
                format!(" ({failed} failed attacks recorded)")
            } else {
                String::new()
            }
        ));
        Ok(())
    })?;

    let remaining = pending.len() - todo.len();
    if remaining == cells.len() {
        progress.say("no cell complete yet; rerun without --max-cells 0 to start");
        return Ok(());
    }
    let report = rebuild(&out, progress)?;
    write_report(&report, &out)?;
    if remaining > 0 {
        progress.say(format!(
            "{remaining} cells remain; rerun the same command to resume"
        ));
    } else {
        progress.say(format!("report written to {}", out.display()));
    }
    Ok(())
}
