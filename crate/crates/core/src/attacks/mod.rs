//! Attack optimizers (PGD, I-FGSM, CW, LOTS), noise layouts, the adversarial
//! objective, and the algorithm x black-box x technique grid runner.
//!
//! Every optimizer minimizes `gamma * L_smooth + sum_i w_i f_d(f_i(x_t), f_i(x))`
//! over the trainable pixels and returns its lowest-loss iterate.

mod config;
mod grid;
mod objective;
mod optim;

pub use config::{
    Algorithm, AttackConfig, BlackBox, Layout, NoiseMasks, SmoothnessConfig, DEFAULT_GAMMA,
    DEFAULT_TAU,
};
pub use grid::{
    run_cell, run_grid, AttackPair, AxOutcome, CellKey, GridConfig, GridSpec, ModelZoo, Technique,
};
pub use objective::{adversarial_loss, LossEval, Objective};
pub use optim::{
    cw_from_pixel, cw_to_pixel, run_attack, run_attack_observed, run_cw, run_cw_observed,
    run_ifgsm, run_ifgsm_observed, run_lots, run_lots_observed, run_pgd, run_pgd_observed,
    AttackResult, ConstraintReport, CwParams, IterateInfo, Observer, CW_EDGE,
};
