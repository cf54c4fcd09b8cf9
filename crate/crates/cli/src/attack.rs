use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use advface::attacks::{run_attack, AttackConfig, AttackPair, NoiseMasks};
use advface::eval::verify;
use advface::imagecore::save_image;
use advface::toy::{ToyStack, ToyStackConfig};
use serde::Serialize;

use crate::error::{parse_toml, read_text, write_text, CliError, CliResult};
use crate::grid::{check_pair_dims, claim_output};
use crate::inputs::{fingerprint, hash_text, load_entry, load_patch};
use crate::manifest::RunManifest;
use crate::{output_dir, Progress};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Attack config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Source image: PNG path or `synth:<id>`.
    #[arg(long)]
    pub source: String,
    /// Target image: PNG path or `synth:<id>`.
    #[arg(long)]
    pub target: String,
    /// Patch mask PNG; the synthetic eyeglass mask when omitted.
    #[arg(long)]
    pub patch: Option<String>,
    /// Model stack config (TOML); defaults when omitted.
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct Verdict {
    model: String,
    score: f64,
    accepted: bool,
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a AttackConfig,
    models: Vec<String>,
    iterations_run: usize,
    best_iteration: usize,
    best_loss: f64,
    diverged: bool,
    verdicts: Vec<Verdict>,
}

pub fn run(args: Args, progress: &Progress) -> CliResult<()> {
    // read first so a missing file is reported by name before parsing
    read_text(&args.config)?;
    let mut config = AttackConfig::load(&args.config).map_err(|e| match e {
        advface::Error::Contract(m) | advface::Error::Config(m) => {
            CliError::Usage(format!("config error in {}: {m}", args.config.display()))
        }
        other => other.into(),
    })?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let stack_cfg: ToyStackConfig = match &args.stack {
        Some(p) => parse_toml(p)?,
        None => ToyStackConfig::default(),
    };
    let stack = ToyStack::build(stack_cfg.clone())?;
    let here = Path::new(".");
    let pair = AttackPair {
        label: format!("{}->{}", args.source, args.target),
        source: load_entry(&args.source, here, &stack.faces)?,
        target: load_entry(&args.target, here, &stack.faces)?,
        patch: load_patch(args.patch.as_deref(), here, &stack.faces)?,
    };
    check_pair_dims(std::slice::from_ref(&pair), stack_cfg.side)?;

    let out = output_dir(args.out.clone(), "attack");
    let resolved = format!(
        "{}\n[stack]\n{}",
        config.to_toml(),
        toml::to_string(&stack_cfg).expect("stack config serializes")
    );
    claim_output(
        &out,
        RunManifest::new(
            "attack",
            config.seed,
            Some(&args.config),
            hash_text(&resolved),
            fingerprint(std::slice::from_ref(&pair)),
            &out,
        ),
    )?;

    let models = stack.zoo.generation_models(config.blackbox)?;
    let masks = NoiseMasks::for_layout(config.layout, &pair.patch);
    progress.say(format!(
        "{} for {} iterations against {}",
        config.algorithm,
        config.iterations,
        stack
            .zoo
            .generation_ids(config.blackbox)
            .iter()
            .map(|m| m.0.as_str())
            .collect::<Vec<_>>()
            .join("+")
    ));
    let result = run_attack(&pair.source, &pair.target, &masks, &config, &models)?;
    if result.diverged {
        progress.say("loss became non-finite; the best finite iterate was kept");
    }

    let mut verdicts = Vec::new();
    for m in models.members() {
        let t = stack.thresholds.get(m.id())?;
        let (score, accepted) = verify(&result, &pair, m.as_ref(), t)?;
        verdicts.push(Verdict {
            model: m.id().0.clone(),
            score,
            accepted,
        });
    }
    save_image(&result.adversarial, out.join("adversarial.png"))?;
    let mut trace = String::from("iteration,loss,feature\n");
    for (i, (l, d)) in result
        .loss_trace
        .iter()
        .zip(&result.distance_trace)
        .enumerate()
    {
        let _ = writeln!(trace, "{i},{l},{d}");
    }
    write_text(&out.join("trace.csv"), trace)?;
    let meta = Metadata {
        config: &config,
        models: models.ids().into_iter().map(|m| m.0).collect(),
        iterations_run: result.iterations_run,
        best_iteration: result.best_iteration,
        best_loss: result.best_loss,
        diverged: result.diverged,
        verdicts,
    };
    write_text(
        &out.join("metadata.json"),
        serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n",
    )?;
    progress.say(format!(
        "best loss {:.6} at iteration {}; written to {}",
        result.best_loss,
        result.best_iteration,
        out.display()
    ));
    Ok(())
}
