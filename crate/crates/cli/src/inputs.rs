//! Image entries and pair lists.
//!
//! An image entry is either `synth:<id>`, the canonical photo of a synthetic
//! identity, or a path to a PNG. Pair lists are CSV files with a
//! `source,target` header and an optional `patch` column naming a mask PNG;
//! the synthetic eyeglass mask is used when it is absent or empty. Relative
//! paths resolve against the CSV's directory.

use std::path::{Path, PathBuf};

use advface::attacks::AttackPair;
use advface::imagecore::{load_image, load_mask, BinaryMask, ImageTensor};
use advface::synth::SyntheticFaces;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn load_entry(entry: &str, base: &Path, faces: &SyntheticFaces) -> CliResult<ImageTensor> {
    if let Some(id) = entry.strip_prefix("synth:") {
        let id: u64 = id.parse().map_err(|_| {
            CliError::Usage(format!(
                "bad synthetic identity `{entry}`; expected synth:<integer>"
            ))
        })?;
        return Ok(faces.face(id));
    }
    Ok(load_image(resolve(entry, base))?)
}

fn resolve(entry: &str, base: &Path) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_patch(
    entry: Option<&str>,
    base: &Path,
    faces: &SyntheticFaces,
) -> CliResult<BinaryMask> {
    match entry.filter(|e| !e.is_empty()) {
        Some(e) => Ok(load_mask(resolve(e, base))?),
        None => Ok(faces.eyeglass_mask()),
    }
}

#[derive(Deserialize)]
struct PairRow {
    source: String,
    target: String,
    #[serde(default)]
    patch: Option<String>,
}

pub fn load_pairs(path: &Path, faces: &SyntheticFaces) -> CliResult<Vec<AttackPair>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::Usage(format!("file not found: {}", path.display()))
            }
            _ => CliError::Usage(format!("cannot read pairs {}: {e}", path.display())),
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (i, row) in reader.deserialize::<PairRow>().enumerate() {
        let row = row
            .map_err(|e| CliError::Usage(format!("pairs {} row {}: {e}", path.display(), i + 1)))?;
        pairs.push(AttackPair {
            label: format!("{}->{}", row.source, row.target),
            source: load_entry(&row.source, base, faces)?,
            target: load_entry(&row.target, base, faces)?,
            patch: load_patch(row.patch.as_deref(), base, faces)?,
        });
    }
    if pairs.is_empty() {
        return Err(CliError::Usage(format!(
            "pairs file {} lists no pairs",
            path.display()
        )));
    }
    Ok(pairs)
}

/// Hex SHA-256 over pair labels and pixel bits; identifies a run's inputs.
pub fn fingerprint(pairs: &[AttackPair]) -> String {
    let mut h = Sha256::new();
    for p in pairs {
        h.update(p.label.as_bytes());
        h.update([0]);
        for img in [&p.source, &p.target] {
            let (a, b, c) = img.dims();
            for d in [a, b, c] {
                h.update((d as u64).to_le_bytes());
            }
            for v in img.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.update(p.patch.data().iter().map(|&b| b as u8).collect::<Vec<u8>>());
    }
    hex(&h.finalize())
}

pub fn hash_text(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
