use std::path::{Path, PathBuf};

use advface::attacks::GridSpec;
use advface::eval::{build_report, write_report, AblationReport, CellRecord};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::Progress;

pub const CELLS: &str = "cells";
pub const RECORD: &str = "record.json";
pub const DONE: &str = "done";

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Grid output directory holding `cells/<slug>/record.json`.
    pub results: PathBuf,
    /// Where to write the report; defaults to the results directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Completed cell records under `dir`, in cell-directory order, plus one
/// diagnostic per record that could not be used.
pub fn load_records(dir: &Path) -> CliResult<(Vec<CellRecord>, Vec<String>)> {
    let cells = dir.join(CELLS);
    let mut entries: Vec<PathBuf> = match std::fs::read_dir(&cells) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(CliError::io(&cells, e)),
    };
    entries.sort();
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for cell in entries {
        let path = cell.join(RECORD);
        if !cell.join(DONE).exists() {
            if path.exists() {
                problems.push(format!(
                    "{}: cell not marked complete, skipped",
                    path.display()
                ));
            }
            continue;
        }
        match std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<CellRecord>(&t).map_err(|e| e.to_string()))
        {
            Ok(r) => records.push(r),
            Err(e) => problems.push(format!("corrupt record {}: {e}", path.display())),
        }
    }
    Ok((records, problems))
}

/// Report of every completed cell in `dir` over the manifest's grid, or the
/// full grid when there is no manifest.
pub fn rebuild(dir: &Path, progress: &Progress) -> CliResult<AblationReport> {
    let spec = RunManifest::read(dir)?
        .and_then(|m| m.grid)
        .unwrap_or_else(GridSpec::full);
    let (records, problems) = load_records(dir)?;
    for p in &problems {
        eprintln!("advface: warning: {p}");
    }
    if records.is_empty() {
        return Err(CliError::Contract(format!(
            "no records in {}",
            dir.display()
        )));
    }
    progress.say(format!(
        "{} cell records loaded from {}",
        records.len(),
        dir.display()
    ));
    Ok(build_report(&spec, &records))
}

pub fn run(args: Args, progress: &Progress) -> CliResult<()> {
    if !args.results.is_dir() {
        return Err(CliError::Usage(format!(
            "results directory not found: {}",
            args.results.display()
        )));
    }
    let report = rebuild(&args.results, progress)?;
    let out = args.out.unwrap_or(args.results);
    write_report(&report, &out)?;
    progress.say(format!("report written to {}", out.display()));
    Ok(())
}
