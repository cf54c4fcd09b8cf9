use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::records::{AxRecord, CellRecord, EvalMode, ModelVerdict};
use crate::attacks::{Algorithm, CellKey, GridSpec, Technique};
use crate::error::{Error, Result};

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn verdicts(r: &AxRecord, mode: EvalMode) -> &[ModelVerdict] {
    match mode {
        EvalMode::Whitebox => &r.whitebox,
        EvalMode::Blackbox => &r.blackbox,
    }
}

/// Per-AX digital success averaged over the mode's models; failed AXs score 0.
fn ax_digital(r: &AxRecord, mode: EvalMode) -> f64 {
    let v = verdicts(r, mode);
    if r.error.is_some() || v.is_empty() {
        return 0.0;
    }
    v.iter().filter(|v| v.digital_success).count() as f64 / v.len() as f64
}

/// Per-AX physical ASR with digital failures scoring 0.
fn ax_physical(r: &AxRecord, mode: EvalMode) -> f64 {
    let v = verdicts(r, mode);
    if r.error.is_some() || v.is_empty() {
        return 0.0;
    }
    v.iter().map(|v| v.physical_asr.unwrap_or(0.0)).sum::<f64>() / v.len() as f64
}

/// Cell-level rate over its AXs.
pub fn cell_digital_asr(records: &[AxRecord], mode: EvalMode) -> Option<f64> {
    mean(
        &records
            .iter()
            .map(|r| ax_digital(r, mode))
            .collect::<Vec<_>>(),
    )
}

/// Simulated-physical rate over the AXs of the physical subset.
pub fn cell_physical_asr(records: &[AxRecord], mode: EvalMode) -> Option<f64> {
    mean(
        &records
            .iter()
            .filter(|r| r.physical_subset)
            .map(|r| ax_physical(r, mode))
            .collect::<Vec<_>>(),
    )
}

/// Physical ASRs of digitally successful (AX, model) checks in the subset.
fn successful_physical(records: &[AxRecord], mode: EvalMode) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.physical_subset && r.error.is_none())
        .flat_map(|r| verdicts(r, mode).iter())
        .filter(|v| v.digital_success)
        .filter_map(|v| v.physical_asr)
        .collect()
}

/// Mean physical ASR among digitally successful white-box checks; `None`
/// when nothing succeeded digitally.
pub fn physical_transferability(records: &[AxRecord]) -> Option<f64> {
    mean(&successful_physical(records, EvalMode::Whitebox))
}

/// Mean final-patch TV per technique over every AX that carries one.
pub fn tv_statistics(cells: &[CellRecord]) -> BTreeMap<Technique, f64> {
    let mut groups: BTreeMap<Technique, Vec<f64>> = BTreeMap::new();
    for c in cells {
        for r in &c.axs {
            if let Some(tv) = r.patch_tv {
                groups.entry(c.key.technique).or_default().push(tv);
            }
        }
    }
    groups
        .into_iter()
        .filter_map(|(t, v)| mean(&v).map(|m| (t, m)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub key: CellKey,
    pub axs: usize,
    pub failed: usize,
    pub digital_whitebox: Option<f64>,
    pub digital_blackbox: Option<f64>,
    pub physical_whitebox: Option<f64>,
    pub physical_blackbox: Option<f64>,
    pub mean_tv: Option<f64>,
    pub transferability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub technique: Technique,
    pub algorithm: Algorithm,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<CellSummary>,
    pub mean_tv: BTreeMap<Technique, f64>,
    /// Rows S0..S4 by columns A1..A4, pooled over black-box techniques.
    pub transferability: Vec<TransferEntry>,
}

impl AblationReport {
    pub fn cell(&self, key: &CellKey) -> Option<&CellSummary> {
        self.cells.iter().find(|c| &c.key == key)
    }

    pub fn transfer(&self, technique: Technique, algorithm: Algorithm) -> Option<f64> {
        self.transferability
            .iter()
            .find(|e| e.technique == technique && e.algorithm == algorithm)
            .and_then(|e| e.value)
    }

    /// Mean of a per-cell quantity over the cells matching `filter`, skipping
    /// undefined cells.
    pub fn mean_over(
        &self,
        filter: impl Fn(&CellKey) -> bool,
        field: impl Fn(&CellSummary) -> Option<f64>,
    ) -> Option<f64> {
        mean(
            &self
                .cells
                .iter()
                .filter(|c| filter(&c.key))
                .filter_map(&field)
                .collect::<Vec<_>>(),
        )
    }
}

/// Builds the report for every cell of `spec`. Cells without records appear
/// with null rates.
pub fn build_report(spec: &GridSpec, records: &[CellRecord]) -> AblationReport {
    let by_key: BTreeMap<CellKey, &CellRecord> = records.iter().map(|r| (r.key, r)).collect();
    let cells = spec
        .cells()
        .into_iter()
        .map(|key| match by_key.get(&key) {
            Some(rec) if !rec.axs.is_empty() => {
                let axs = &rec.axs;
                CellSummary {
                    key,
                    axs: axs.len(),
                    failed: axs.iter().filter(|r| r.error.is_some()).count(),
                    digital_whitebox: cell_digital_asr(axs, EvalMode::Whitebox),
                    digital_blackbox: cell_digital_asr(axs, EvalMode::Blackbox),
                    physical_whitebox: cell_physical_asr(axs, EvalMode::Whitebox),
                    physical_blackbox: cell_physical_asr(axs, EvalMode::Blackbox),
                    mean_tv: mean(&axs.iter().filter_map(|r| r.patch_tv).collect::<Vec<_>>()),
                    transferability: physical_transferability(axs),
                }
            }
            _ => CellSummary {
                key,
                axs: 0,
                failed: 0,
                digital_whitebox: None,
                digital_blackbox: None,
                physical_whitebox: None,
                physical_blackbox: None,
                mean_tv: None,
                transferability: None,
            },
        })
        .collect();
    let present: Vec<CellRecord> = records
        .iter()
        .filter(|r| spec.cells().contains(&r.key))
        .cloned()
        .collect();
    let mut transferability = Vec::new();
    for &technique in &spec.techniques {
        for &algorithm in &spec.algorithms {
            let pooled: Vec<AxRecord> = present
                .iter()
                .filter(|r| r.key.technique == technique && r.key.algorithm == algorithm)
                .flat_map(|r| r.axs.iter().cloned())
                .collect();
            transferability.push(TransferEntry {
                technique,
                algorithm,
                value: physical_transferability(&pooled),
            });
        }
    }
    AblationReport {
        cells,
        mean_tv: tv_statistics(&present),
        transferability,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One row per cell; undefined values are empty fields.
pub fn report_csv(report: &AblationReport) -> String {
    let mut out = String::from(
        "algorithm,blackbox,technique,row,axs,failed,digital_whitebox,digital_blackbox,physical_whitebox,physical_blackbox,mean_tv,transferability\n",
    );
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            c.key.algorithm,
            c.key.blackbox,
            c.key.technique,
            c.key.technique.row(),
            c.axs,
            c.failed,
            fmt_opt(c.digital_whitebox),
            fmt_opt(c.digital_blackbox),
            fmt_opt(c.physical_whitebox),
            fmt_opt(c.physical_blackbox),
            fmt_opt(c.mean_tv),
            fmt_opt(c.transferability),
        );
    }
    out
}

/// Two-column `label,value` series for plotting.
pub fn plot_series(report: &AblationReport) -> Vec<(&'static str, String)> {
    let per_cell = |f: fn(&CellSummary) -> Option<f64>| {
        let mut s = String::from("cell,value\n");
        for c in &report.cells {
            let _ = writeln!(s, "{},{}", c.key.slug(), fmt_opt(f(c)));
        }
        s
    };
    let mut tv = String::from("technique,mean_tv\n");
    for (t, v) in &report.mean_tv {
        let _ = writeln!(tv, "{},{v:.6}", t.row());
    }
    let mut table = String::from("row_column,transferability\n");
    for e in &report.transferability {
        let _ = writeln!(
            table,
            "{}_{},{}",
            e.technique.row(),
            e.algorithm.column(),
            fmt_opt(e.value)
        );
    }
    vec![
        (
            "plot_digital_whitebox.csv",
            per_cell(|c| c.digital_whitebox),
        ),
        (
            "plot_digital_blackbox.csv",
            per_cell(|c| c.digital_blackbox),
        ),
        (
            "plot_physical_whitebox.csv",
            per_cell(|c| c.physical_whitebox),
        ),
        (
            "plot_physical_blackbox.csv",
            per_cell(|c| c.physical_blackbox),
        ),
        ("plot_mean_tv.csv", tv),
        ("plot_transferability.csv", table),
    ]
}

/// Writes `report.csv`, `report.json` and the plot series into `dir`.
pub fn write_report(report: &AblationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        ("report.csv", report_csv(report)),
        (
            "report.json",
            serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ),
    ];
    files.extend(plot_series(report));
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
