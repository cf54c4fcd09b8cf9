use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::threshold::VerificationThreshold;
use crate::attacks::{AttackPair, AttackResult, AxOutcome, CellKey, ModelZoo, NoiseMasks};
use crate::error::{contract, Result};
use crate::featnet::{match_score, Embedder, ModelId};
use crate::imagecore::tv_loss;
use crate::physim::{physical_evaluation, CaptureGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// The models the attack was generated against.
    Whitebox,
    /// Held-out models only.
    Blackbox,
}

/// Calibrated thresholds keyed by model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet(pub BTreeMap<ModelId, VerificationThreshold>);

impl ThresholdSet {
    pub fn get(&self, id: &ModelId) -> Result<&VerificationThreshold> {
        self.0.get(id).ok_or_else(|| {
            crate::Error::Contract(format!("no threshold calibrated for model {id}"))
        })
    }

    pub fn insert(&mut self, id: ModelId, t: VerificationThreshold) {
        self.0.insert(id, t);
    }
}

/// Digital and simulated-physical verdicts of one AX against one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVerdict {
    pub model: ModelId,
    pub score: f64,
    pub digital_success: bool,
    /// Present only for digitally successful AXs in the physical subset.
    pub physical_asr: Option<f64>,
}

/// Everything the report needs about one AX; written to disk per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxRecord {
    pub pair_index: usize,
    pub pair_label: String,
    pub seed: u64,
    pub error: Option<String>,
    /// TV of the final patch deviation.
    pub patch_tv: Option<f64>,
    pub best_loss: Option<f64>,
    pub iterations_run: usize,
    /// Digital successes of this AX went through the physical simulator.
    pub physical_subset: bool,
    pub whitebox: Vec<ModelVerdict>,
    pub blackbox: Vec<ModelVerdict>,
    pub queried: Vec<ModelId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: CellKey,
    pub axs: Vec<AxRecord>,
}

/// Digital verdict of `x_adv` as `x_t` for one model.
pub fn verify(
    result: &AttackResult,
    pair: &AttackPair,
    model: &dyn Embedder,
    t: &VerificationThreshold,
) -> Result<(f64, bool)> {
    let score = match_score(
        &model.embed(&pair.target)?,
        &model.embed(&result.adversarial)?,
        t.metric,
    )?;
    Ok((score, t.accepts(score)))
}

fn verdicts(
    result: &AttackResult,
    pair: &AttackPair,
    models: &[&dyn Embedder],
    thresholds: &ThresholdSet,
    physical: Option<&CaptureGrid>,
) -> Result<Vec<ModelVerdict>> {
    models
        .iter()
        .map(|m| {
            let t = thresholds.get(m.id())?;
            let (score, ok) = verify(result, pair, *m, t)?;
            let physical_asr = match (ok, physical) {
                (true, Some(grid)) => Some(
                    physical_evaluation(
                        &result.adversarial,
                        &pair.target,
                        grid,
                        *m,
                        t.value,
                        t.metric,
                    )?
                    .asr()?,
                ),
                _ => None,
            };
            Ok(ModelVerdict {
                model: m.id().clone(),
                score,
                digital_success: ok,
                physical_asr,
            })
        })
        .collect()
}

/// Models used for `mode` in a cell with the given black-box technique.
pub fn mode_models<'a>(zoo: &'a ModelZoo, key: &CellKey, mode: EvalMode) -> Vec<&'a dyn Embedder> {
    match mode {
        EvalMode::Whitebox => {
            let mut v: Vec<&'a dyn Embedder> = vec![zoo.whitebox.as_ref()];
            if key.blackbox.uses_ensemble() {
                v.push(zoo.partner.as_ref());
            }
            v
        }
        EvalMode::Blackbox => zoo.heldout.iter().map(|m| m.as_ref()).collect(),
    }
}

/// Digital evaluation of one AX on white-box and held-out models, plus the
/// simulated-physical evaluation of its digital successes when `physical` is
/// given. Failed attacks become records with `error` set.
pub fn evaluate_ax(
    outcome: &AxOutcome,
    pair: &AttackPair,
    zoo: &ModelZoo,
    thresholds: &ThresholdSet,
    physical: Option<&CaptureGrid>,
) -> AxRecord {
    let mut record = AxRecord {
        pair_index: outcome.pair_index,
        pair_label: pair.label.clone(),
        seed: outcome.config.seed,
        error: None,
        patch_tv: None,
        best_loss: None,
        iterations_run: 0,
        physical_subset: physical.is_some(),
        whitebox: Vec::new(),
        blackbox: Vec::new(),
        queried: outcome.queried.clone(),
    };
    let result = match &outcome.result {
        Ok(r) => r,
        Err(e) => {
            record.error = Some(e.clone());
            return record;
        }
    };
    record.best_loss = Some(result.best_loss);
    record.iterations_run = result.iterations_run;
    let masks = NoiseMasks::for_layout(outcome.config.layout, &pair.patch);
    let evaluated = (|| -> Result<()> {
        let deviation = result.adversarial.sub(&pair.source);
        record.patch_tv = Some(tv_loss(&deviation, &masks.patch)?);
        record.whitebox = verdicts(
            result,
            pair,
            &mode_models(zoo, &outcome.key, EvalMode::Whitebox),
            thresholds,
            physical,
        )?;
        record.blackbox = verdicts(
            result,
            pair,
            &mode_models(zoo, &outcome.key, EvalMode::Blackbox),
            thresholds,
            physical,
        )?;
        Ok(())
    })();
    if let Err(e) = evaluated {
        record.error = Some(e.to_string());
    }
    record
}

/// Evaluates grid outcomes and groups them into cells in first-seen order.
/// Pairs with index below `physical_pairs` form the physical subset.
pub fn evaluate_grid(
    outcomes: &[AxOutcome],
    pairs: &[AttackPair],
    zoo: &ModelZoo,
    thresholds: &ThresholdSet,
    grid: &CaptureGrid,
    physical_pairs: usize,
) -> Result<Vec<CellRecord>> {
    if let Some(o) = outcomes.iter().find(|o| o.pair_index >= pairs.len()) {
        return contract(format!(
            "outcome refers to pair {} of {}",
            o.pair_index,
            pairs.len()
        ));
    }
    let records: Vec<AxRecord> = outcomes
        .par_iter()
        .map(|o| {
            let physical = (o.pair_index < physical_pairs).then_some(grid);
            evaluate_ax(o, &pairs[o.pair_index], zoo, thresholds, physical)
        })
        .collect();
    let mut cells: Vec<CellRecord> = Vec::new();
    for (o, r) in outcomes.iter().zip(records) {
        match cells.iter_mut().find(|c| c.key == o.key) {
            Some(c) => c.axs.push(r),
            None => cells.push(CellRecord {
                key: o.key,
                axs: vec![r],
            }),
        }
    }
    Ok(cells)
}

/// Fraction of (AX, model) checks among `models` that pass digitally. Failed
/// AXs count as misses.
pub fn digital_asr(records: &[AxRecord], mode: EvalMode, models: &[ModelId]) -> Result<f64> {
    if records.is_empty() || models.is_empty() {
        return contract("digital ASR needs at least one record and one model");
    }
    let mut hits = 0usize;
    for r in records {
        if r.error.is_some() {
            continue;
        }
        let verdicts = match mode {
            EvalMode::Whitebox => &r.whitebox,
            EvalMode::Blackbox => &r.blackbox,
        };
        for id in models {
            let v = verdicts.iter().find(|v| &v.model == id).ok_or_else(|| {
                crate::Error::Contract(format!("model {id} was not evaluated in {mode:?} mode"))
            })?;
            hits += v.digital_success as usize;
        }
    }
    Ok(hits as f64 / (records.len() * models.len()) as f64)
}
