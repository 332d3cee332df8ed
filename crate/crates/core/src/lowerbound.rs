//! Simulator for the model-selection lower bound.
//!
//! Inputs are symbols `x in {1..p/2}` with binary labels. Source `k` puts
//! all its mass on symbol `ceil(k/2)`, labelled 1 for even `k` and 0 for odd
//! `k`. The target is the mixture `D_lambda` with
//! `lambda_{2x} + lambda_{2x-1} = 2/p` and `lambda_{2x} = (1 +- eps)/p`, so
//! its marginal is uniform and `D_0(1 | x) = (1 +- eps)/2`. A sign pattern of
//! `p/4` bits picks `lambda`: bit `j` fixes the sign of every symbol
//! `x` with `(x - 1) mod (p/4) = j`.

use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{MsaError, Result};
use crate::rng::{self, Rng};

const MAX_PATTERN_BITS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundInstance {
    pub p: usize,
    pub m0: usize,
    pub epsilon: f64,
    pub sign_pattern: Vec<bool>,
    /// `lambda_1..lambda_p`.
    pub lambda_true: Vec<f64>,
    /// `D_0(y = 1 | x)` for `x = 1..p/2`.
    pub conditional: Vec<f64>,
}

/// `eps = sqrt(p / m0) / 100`.
pub fn default_epsilon(p: usize, m0: usize) -> f64 {
    (p as f64 / m0 as f64).sqrt() / 100.0
}

pub fn build_instance(p: usize, m0: usize, sign_pattern: &[bool]) -> Result<LowerBoundInstance> {
    if m0 == 0 {
        return Err(MsaError::Config("m0 must be >= 1".into()));
    }
    build_instance_with_epsilon(p, m0, sign_pattern, default_epsilon(p, m0))
}

/// Same construction with an explicit `eps` in `[0, 1]`.
pub fn build_instance_with_epsilon(
    p: usize,
    m0: usize,
    sign_pattern: &[bool],
    epsilon: f64,
) -> Result<LowerBoundInstance> {
    if p == 0 || p % 4 != 0 {
        return Err(MsaError::Config(format!("p must be a positive multiple of 4, got {p}")));
    }
    if sign_pattern.len() != p / 4 {
        return Err(MsaError::LengthMismatch {
            what: "sign pattern",
            expected: p / 4,
            actual: sign_pattern.len(),
        });
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(MsaError::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let pf = p as f64;
    let symbols = p / 2;
    let mut lambda_true = vec![0.0; p];
    let mut conditional = vec![0.0; symbols];
    for x in 1..=symbols {
        let up = sign_pattern[(x - 1) % (p / 4)];
        let even = if up { (1.0 + epsilon) / pf } else { (1.0 - epsilon) / pf };
        lambda_true[2 * x - 1] = even;
        lambda_true[2 * x - 2] = 2.0 / pf - even;
        conditional[x - 1] = if up { (1.0 + epsilon) / 2.0 } else { (1.0 - epsilon) / 2.0 };
    }
    Ok(LowerBoundInstance {
        p,
        m0,
        epsilon,
        sign_pattern: sign_pattern.to_vec(),
        lambda_true,
        conditional,
    })
}

impl LowerBoundInstance {
    pub fn symbols(&self) -> usize {
        self.p / 2
    }

    /// `D_0(x) = lambda_{2x} + lambda_{2x-1}`.
    pub fn marginal(&self) -> Vec<f64> {
        self.lambda_true.chunks_exact(2).map(|c| c[0] + c[1]).collect()
    }

    /// `h*(x) = 1[lambda_{2x} > lambda_{2x-1}]`.
    pub fn bayes(&self) -> Vec<bool> {
        bayes_for(&self.lambda_true)
    }

    /// `L_{D_0}(h) - L_{D_0}(h*)` under the zero-one loss, in closed form.
    pub fn excess(&self, h: &[bool]) -> f64 {
        let bayes = self.bayes();
        self.marginal()
            .iter()
            .zip(&self.conditional)
            .zip(h.iter().zip(&bayes))
            .filter(|(_, (a, b))| a != b)
            .map(|((d, q), _)| d * (2.0 * q - 1.0).abs())
            .sum()
    }

    /// `n` target examples `(x, y)` with 0-based symbols.
    pub fn sample_target(&self, n: usize, rng: &mut Rng) -> Vec<(usize, bool)> {
        let symbols = self.symbols();
        (0..n)
            .map(|_| {
                let x = rng.random_range(0..symbols);
                (x, rng.random::<f64>() < self.conditional[x])
            })
            .collect()
    }
}

fn bayes_for(lambda: &[f64]) -> Vec<bool> {
    lambda.chunks_exact(2).map(|c| c[1] > c[0]).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LbAlgorithm {
    /// Per-symbol majority vote on the target sample; ties go to a coin flip.
    PluginMajority,
    /// Model selection over the `2^(p/4)` candidate mixtures: each candidate's
    /// Bayes predictor (the ERM for exactly known sources) is scored on the
    /// target sample and the lowest empirical error wins.
    LmsaAdapter,
}

impl LbAlgorithm {
    pub fn name(&self) -> &'static str {
        match self {
            LbAlgorithm::PluginMajority => "plugin",
            LbAlgorithm::LmsaAdapter => "lmsa",
        }
    }
}

fn counts(sample: &[(usize, bool)], symbols: usize) -> Vec<[usize; 2]> {
    let mut c = vec![[0usize; 2]; symbols];
    for &(x, y) in sample {
        c[x][usize::from(y)] += 1;
    }
    c
}

/// Runs `alg` on a target sample of `inst`; returns the predicted labels.
pub fn run_algorithm(
    alg: LbAlgorithm,
    inst: &LowerBoundInstance,
    sample: &[(usize, bool)],
    rng: &mut Rng,
) -> Result<Vec<bool>> {
    let c = counts(sample, inst.symbols());
    match alg {
        LbAlgorithm::PluginMajority => Ok(c
            .iter()
            .map(|[zeros, ones]| match ones.cmp(zeros) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => rng.random::<bool>(),
            })
            .collect()),
        LbAlgorithm::LmsaAdapter => {
            let bits = inst.p / 4;
            if bits > MAX_PATTERN_BITS {
                return Err(MsaError::Intractable(format!(
                    "lmsa adapter enumerates 2^{bits} candidates"
                )));
            }
            let mut best = (usize::MAX, Vec::new());
            for code in 0..(1usize << bits) {
                let pattern: Vec<bool> = (0..bits).map(|j| code >> j & 1 == 1).collect();
                let cand = build_instance_with_epsilon(inst.p, inst.m0, &pattern, inst.epsilon)?;
                let h = cand.bayes();
                let errors: usize = h
                    .iter()
                    .zip(&c)
                    .map(|(&one, [zeros, ones])| if one { *zeros } else { *ones })
                    .sum();
                if errors < best.0 {
                    best = (errors, h);
                }
            }
            Ok(best.1)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyRow {
    pub p: usize,
    pub m0: usize,
    pub epsilon: f64,
    pub mean_excess: f64,
    pub stderr: f64,
}

/// Mean excess risk of `alg` for every `(p, m0)` pair, averaged over
/// `trials` draws of a uniformly random sign pattern and target sample.
/// Rows are sorted by `(p, m0)`.
pub fn simulate_penalty(
    ps: &[usize],
    m0s: &[usize],
    trials: usize,
    alg: LbAlgorithm,
    seed: u64,
) -> Result<Vec<PenaltyRow>> {
    if trials == 0 {
        return Err(MsaError::Config("trials must be >= 1".into()));
    }
    let mut ps = ps.to_vec();
    ps.sort_unstable();
    ps.dedup();
    let mut m0s = m0s.to_vec();
    m0s.sort_unstable();
    m0s.dedup();
    let mut rows = Vec::new();
    for &p in &ps {
        for &m0 in &m0s {
            let cell = (p as u64) << 32 | m0 as u64;
            let excess: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut r = rng::derived(seed ^ cell.wrapping_mul(0xD6E8_FEB8_6659_FD93), t as u64);
                    let pattern: Vec<bool> = (0..p / 4).map(|_| r.random::<bool>()).collect();
                    let inst = build_instance(p, m0, &pattern)?;
                    let sample = inst.sample_target(m0, &mut r);
                    let h = run_algorithm(alg, &inst, &sample, &mut r)?;
                    Ok(inst.excess(&h))
                })
                .collect::<Result<_>>()?;
            let n = trials as f64;
            let mean = excess.iter().sum::<f64>() / n;
            let var = if trials > 1 {
                excess.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            rows.push(PenaltyRow {
                p,
                m0,
                epsilon: default_epsilon(p, m0),
                mean_excess: mean,
                stderr: (var / n).sqrt(),
            });
        }
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[PenaltyRow]) -> String {
    let mut out = String::from("p,m0,epsilon,mean_excess,stderr\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.p, r.m0, r.epsilon, r.mean_excess, r.stderr);
    }
    out
}
