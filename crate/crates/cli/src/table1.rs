//! `table1`: test loss against target sample size on the toy benchmark.

use std::fmt::Write as _;
use std::path::Path;

use msa_core::lmsa::{lmsa_minmax, MinmaxConfig};
use msa_core::synth::{gen_toy_regression, ToyRegressionSpec};
use msa_core::{train_dataset, train_on_mixture, LossSpec, TrainConfig};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::gen::{toy_spec, write_text};

pub const TABLE1_KEYS: &[&str] = &[
    "m0",
    "seeds",
    "seed",
    "p",
    "d",
    "m_k",
    "sigma_sq",
    "lambda_star",
    "erm.reg",
    "minmax.steps",
    "output",
];

pub const DEFAULT_M0: [usize; 5] = [50, 100, 200, 300, 400];
/// Reported losses are multiplied by this.
pub const LOSS_SCALE: f64 = 1000.0;

/// Mean test losses (times `LOSS_SCALE`) over the seeds of one `m0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table1Row {
    pub m0: usize,
    pub seeds: usize,
    pub seed_base: u64,
    pub target_only: f64,
    pub lmsa_minmax: f64,
    pub oracle: f64,
}

pub const TABLE1_HEADER: &str = "m0,seeds,seed_base,target_only,lmsa_minmax,oracle";

pub fn rows_to_csv(rows: &[Table1Row]) -> String {
    let mut out = format!("{TABLE1_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4}",
            r.m0, r.seeds, r.seed_base, r.target_only, r.lmsa_minmax, r.oracle
        );
    }
    out
}

/// Exact test losses `[target_only, lmsa_minmax, oracle]` for one instance.
pub fn table1_cell(spec: &ToyRegressionSpec, loss: &LossSpec, mm: &MinmaxConfig) -> Result<[f64; 3]> {
    let cfg = TrainConfig::default();
    let (coll, oracle) = gen_toy_regression(spec)?;
    let target_only = train_dataset(coll.target(), loss, &cfg)?;
    let (minmax, _) = lmsa_minmax(&coll, loss, &cfg, mm)?;
    let known = train_on_mixture(&coll, &spec.lambda_star, loss, &cfg)?;
    Ok([
        oracle.target_loss(&target_only),
        oracle.target_loss(&minmax),
        oracle.target_loss(&known),
    ])
}

pub fn cmd_table1(cfg: &ExperimentConfig) -> Result<Vec<Table1Row>> {
    cfg.check_keys(TABLE1_KEYS)?;
    let base = toy_spec(cfg)?;
    let m0s = cfg.get_list::<usize>("m0")?.unwrap_or_else(|| DEFAULT_M0.to_vec());
    let seeds = cfg.get_or("seeds", 10usize)?;
    if seeds == 0 || m0s.iter().any(|m| *m == 0) {
        return Err(CliError::Config("table1 needs seeds >= 1 and every m0 >= 1".into()));
    }
    let loss = LossSpec::squared(cfg.get_or("erm.reg", 1e-3)?);
    let mm = MinmaxConfig {
        steps: cfg.get_or("minmax.steps", MinmaxConfig::default().steps)?,
        ..MinmaxConfig::default()
    };
    let jobs: Vec<(usize, u64)> = m0s
        .iter()
        .flat_map(|&m0| (0..seeds as u64).map(move |s| (m0, base.seed + s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(m0, seed)| {
            let spec = ToyRegressionSpec {
                m0,
                seed,
                ..base.clone()
            };
            table1_cell(&spec, &loss, &mm)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Table1Row> = m0s
        .iter()
        .zip(cells.chunks(seeds))
        .map(|(&m0, chunk)| {
            let mean = |j: usize| LOSS_SCALE * chunk.iter().map(|c| c[j]).sum::<f64>() / seeds as f64;
            Table1Row {
                m0,
                seeds,
                seed_base: base.seed,
                target_only: mean(0),
                lmsa_minmax: mean(1),
                oracle: mean(2),
            }
        })
        .collect();
    if let Some(path) = cfg.get_str("output") {
        write_text(Path::new(path), &rows_to_csv(&rows))?;
    }
    Ok(rows)
}
