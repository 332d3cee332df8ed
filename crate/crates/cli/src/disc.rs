//! `disc`: discrepancy between two datasets.

use std::path::Path;

use msa_core::discrepancy::{disc_estimate, DiscEstimate, DiscMethod};
use msa_core::Dataset;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::gen::write_text;
use crate::run::loss_from_config;

pub const DISC_KEYS: &[&str] = &[
    "a",
    "b",
    "loss",
    "erm.reg",
    "norm_ball",
    "bound",
    "intercept",
    "method",
    "disc.restarts",
    "disc.iters",
    "disc.resolution",
    "seed",
    "output",
];

pub fn cmd_disc(cfg: &ExperimentConfig) -> Result<DiscEstimate> {
    cfg.check_keys(DISC_KEYS)?;
    let a = Dataset::read(cfg.require_str("a")?, 0)?;
    let b = Dataset::read(cfg.require_str("b")?, 1)?;
    let loss = loss_from_config(cfg)?;
    let method = match cfg.get_str("method").unwrap_or("ascent") {
        "ascent" => {
            let DiscMethod::Ascent { restarts, iters } = DiscMethod::default() else {
                unreachable!("default method is ascent")
            };
            DiscMethod::Ascent {
                restarts: cfg.get_or("disc.restarts", restarts)?,
                iters: cfg.get_or("disc.iters", iters)?,
            }
        }
        "grid" => DiscMethod::Grid {
            resolution: cfg.get_or("disc.resolution", 0.01)?,
        },
        other => return Err(CliError::Config(format!("unknown method `{other}`; expected ascent or grid"))),
    };
    let est = disc_estimate(&a, &b, &loss, method, cfg.get_or("seed", 0u64)?)?;
    if let Some(path) = cfg.get_str("output") {
        write_text(Path::new(path), &est.witness.to_text())?;
    }
    Ok(est)
}
