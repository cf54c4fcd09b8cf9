use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::CaptureGrid;
use super::transforms::{laplacian_energy, print_and_capture};
use crate::error::{Error, Result};
use crate::featnet::{accepts, match_score, Embedder, Metric};
use crate::imagecore::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub index: usize,
    pub retained: bool,
    /// Verification score; absent for discarded points.
    pub score: Option<f64>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalOutcome {
    pub points: Vec<PointOutcome>,
}

impl PhysicalOutcome {
    pub fn retained(&self) -> usize {
        self.points.iter().filter(|p| p.retained).count()
    }

    pub fn successes(&self) -> usize {
        self.points.iter().filter(|p| p.success).count()
    }

    /// Successes over retained points.
    pub fn asr(&self) -> Result<f64> {
        match self.retained() {
            0 => Err(Error::DegenerateGrid(self.points.len())),
            n => Ok(self.successes() as f64 / n as f64),
        }
    }

    /// Re-decides every retained point at another threshold.
    pub fn rethreshold(&self, metric: Metric, threshold: f64) -> PhysicalOutcome {
        PhysicalOutcome {
            points: self
                .points
                .iter()
                .map(|p| PointOutcome {
                    success: p.score.is_some_and(|s| accepts(metric, s, threshold)),
                    ..*p
                })
                .collect(),
        }
    }
}

/// Runs every grid point through print, capture and realignment, discards
/// captures whose Laplacian energy falls below the grid's floor (relative to
/// `x_adv`), and verifies the rest against `x_t`.
pub fn physical_evaluation(
    x_adv: &ImageTensor,
    x_t: &ImageTensor,
    grid: &CaptureGrid,
    model: &dyn Embedder,
    threshold: f64,
    metric: Metric,
) -> Result<PhysicalOutcome> {
    let target = model.embed(x_t)?;
    let floor = grid.sharpness_floor() * laplacian_energy(x_adv);
    let points = grid
        .points()
        .par_iter()
        .enumerate()
        .map(|(index, params)| {
            let seen = print_and_capture(x_adv, params)?;
            if laplacian_energy(&seen) < floor {
                return Ok(PointOutcome {
                    index,
                    retained: false,
                    score: None,
                    success: false,
                });
            }
            let score = match_score(&target, &model.embed(&seen)?, metric)?;
            Ok(PointOutcome {
                index,
                retained: true,
                score: Some(score),
                success: accepts(metric, score, threshold),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhysicalOutcome { points })
}

/// Fraction of retained grid points at which `x_adv` verifies as `x_t`.
pub fn physical_asr(
    x_adv: &ImageTensor,
    x_t: &ImageTensor,
    grid: &CaptureGrid,
    model: &dyn Embedder,
    threshold: f64,
    metric: Metric,
) -> Result<f64> {
    physical_evaluation(x_adv, x_t, grid, model, threshold, metric)?.asr()
}
