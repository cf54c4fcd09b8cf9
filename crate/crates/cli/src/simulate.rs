use std::path::PathBuf;

use advface::imagecore::save_image;
use advface::physim::{capture_stages, CaptureParams};
use advface::synth::SyntheticFaces;
use advface::toy::ToyStackConfig;

use crate::error::{create_dir, parse_toml, write_text, CliResult};
use crate::inputs::load_entry;
use crate::{output_dir, Progress};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// PNG path or `synth:<id>`.
    #[arg(long)]
    pub image: String,
    /// Capture condition (TOML with illuminance, color_temperature and
    /// yaw_degrees; severity fields default).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the sensor noise; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Writes `printed.png`, `captured.png` (camera readout) and `realigned.png`
/// (known geometry and photometry undone), all at the input's resolution.
pub fn run(args: Args, progress: &Progress) -> CliResult<()> {
    let mut params = match &args.config {
        Some(p) => parse_toml::<CaptureParams>(p)?,
        None => CaptureParams::new(1200.0, 6500.0, 0.0),
    };
    if let Some(s) = args.seed {
        params.seed = s;
    }
    params.validate()?;
    let defaults = ToyStackConfig::default();
    let faces = SyntheticFaces::new(defaults.seed, defaults.side, defaults.side);
    let image = load_entry(&args.image, std::path::Path::new("."), &faces)?;
    let stages = capture_stages(&image, &params)?;
    let out = output_dir(args.out, "simulate");
    create_dir(&out)?;
    save_image(&stages.printed, out.join("printed.png"))?;
    save_image(&stages.captured, out.join("captured.png"))?;
    save_image(&stages.realigned, out.join("realigned.png"))?;
    write_text(
        &out.join("capture.toml"),
        toml::to_string(&params).expect("params serialize"),
    )?;
    progress.say(format!("capture written to {}", out.display()));
    Ok(())
}
