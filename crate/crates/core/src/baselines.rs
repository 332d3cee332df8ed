//! Comparison methods: fixed mixtures, the pairwise-discrepancy weighting
//! and the convex-combination discrepancy bound minimization.

use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, DomainCollection, WeightedView};
use crate::discrepancy::{disc_views, pairwise_disc_matrix, DiscMethod};
use crate::erm::{MixtureTrainer, TrainConfig};
use crate::error::{MsaError, Result};
use crate::hypothesis::Hypothesis;
use crate::loss::{empirical_loss, view_loss, LossSpec};
use crate::simplex::{skewness, MixtureWeight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    TargetOnly,
    BestSingleSource,
    CombinedSources,
    SourcesPlusTarget,
    SourcesPlusTargetEqual,
    PairwiseDisc,
    ConvDisc,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::TargetOnly,
        BaselineKind::BestSingleSource,
        BaselineKind::CombinedSources,
        BaselineKind::SourcesPlusTarget,
        BaselineKind::SourcesPlusTargetEqual,
        BaselineKind::PairwiseDisc,
        BaselineKind::ConvDisc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::TargetOnly => "target_only",
            BaselineKind::BestSingleSource => "best_single_source",
            BaselineKind::CombinedSources => "combined_sources",
            BaselineKind::SourcesPlusTarget => "sources_plus_target",
            BaselineKind::SourcesPlusTargetEqual => "sources_plus_target_equal",
            BaselineKind::PairwiseDisc => "pairwise_disc",
            BaselineKind::ConvDisc => "conv_disc",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = MsaError;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MsaError::Config(format!("unknown baseline `{s}`")))
    }
}

/// How `gamma` of the pairwise-discrepancy objective is set.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaChoice {
    Fixed(f64),
    /// Pick the value whose model has the smallest loss on the last quarter
    /// of the target sample.
    Validate(Vec<f64>),
}

impl Default for GammaChoice {
    fn default() -> Self {
        GammaChoice::Validate(vec![1e-3, 1e-2, 1e-1, 1.0, 10.0])
    }
}

/// Constants of the convex-combination discrepancy bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvDiscConstants {
    pub c: f64,
    /// Capacity proxy; `None` uses the hypothesis parameter count plus one.
    pub d_proxy: Option<f64>,
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for ConvDiscConstants {
    fn default() -> Self {
        ConvDiscConstants {
            c: 1.0,
            d_proxy: None,
            epsilon: 0.1,
            delta: 0.1,
        }
    }
}

impl ConvDiscConstants {
    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.c) && ok(self.epsilon) && ok(self.delta) && self.d_proxy.is_none_or(ok)) {
            return Err(MsaError::Config(format!("conv_disc constants must be positive: {self:?}")));
        }
        if self.epsilon * self.delta >= 1.0 {
            return Err(MsaError::Config("conv_disc needs epsilon * delta < 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineHyper {
    pub pairwise_gamma: GammaChoice,
    pub disc_method: DiscMethod,
    pub seed: u64,
    pub conv: ConvDiscConstants,
    /// Alternating rounds of the conv_disc minimization.
    pub conv_iters: usize,
    /// Exponentiated-gradient iterations of the pairwise objective.
    pub eg_iters: usize,
}

impl Default for BaselineHyper {
    fn default() -> Self {
        BaselineHyper {
            pairwise_gamma: GammaChoice::default(),
            disc_method: DiscMethod::default(),
            seed: 0,
            conv: ConvDiscConstants::default(),
            conv_iters: 20,
            eg_iters: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub kind: BaselineKind,
    pub hypothesis: Hypothesis,
    /// Mixture used for training. Has `p + 1` entries (target last) for the
    /// sources-plus-target baselines.
    pub lambda: Option<MixtureWeight>,
    /// Discrepancy estimates the method relied on.
    pub disc: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub objective_trace: Vec<f64>,
}

impl BaselineOutcome {
    fn plain(kind: BaselineKind, hypothesis: Hypothesis, lambda: Option<MixtureWeight>) -> Self {
        BaselineOutcome {
            kind,
            hypothesis,
            lambda,
            disc: None,
            gamma: None,
            objective_trace: Vec::new(),
        }
    }
}

/// `sum_k lambda_k disc_k + gamma sqrt(m s(lambda || mhat))` with `m` the
/// total source sample size.
pub fn pairwise_objective(lambda: &[f64], disc: &[f64], mhat: &[f64], m: f64, gamma: f64) -> f64 {
    let lin: f64 = lambda.iter().zip(disc).map(|(l, d)| l * d).sum();
    let s: f64 = lambda.iter().zip(mhat).map(|(l, m)| l * l / m).sum();
    lin + gamma * (m * s).sqrt()
}

/// Minimizes [`pairwise_objective`] over the simplex by exponentiated
/// gradient with step backtracking, starting at `mhat`. The returned trace
/// holds the objective after every iteration and never increases.
pub fn minimize_pairwise(
    disc: &[f64],
    mhat: &[f64],
    m: f64,
    gamma: f64,
    iters: usize,
) -> (MixtureWeight, Vec<f64>) {
    let mut lambda = mhat.to_vec();
    let mut value = pairwise_objective(&lambda, disc, mhat, m, gamma);
    let mut trace = vec![value];
    let mut eta = 1.0;
    let mut trial = lambda.clone();
    for _ in 0..iters {
        let s: f64 = lambda.iter().zip(mhat).map(|(l, m)| l * l / m).sum();
        let grad: Vec<f64> = lambda
            .iter()
            .zip(disc)
            .zip(mhat)
            .map(|((l, d), mk)| d + gamma * m.sqrt() * (l / mk) / s.sqrt())
            .collect();
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())).max(1e-300);
        let shift = grad.iter().copied().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for ((t, l), g) in trial.iter_mut().zip(&lambda).zip(&grad) {
            *t = l * (-eta * (g - shift) / scale).exp();
            total += *t;
        }
        trial.iter_mut().for_each(|t| *t /= total);
        let next = pairwise_objective(&trial, disc, mhat, m, gamma);
        if next <= value {
            lambda.copy_from_slice(&trial);
            value = next;
            eta = (eta * 1.5).min(1e6);
        } else {
            eta *= 0.5;
        }
        trace.push(value);
    }
    (MixtureWeight::normalized(lambda).expect("simplex iterate"), trace)
}

/// Terms entering the convex-combination bound, for callers that already
/// know the skewness and sample sizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyInputs {
    pub disc: f64,
    pub skewness: f64,
    /// Total source sample size.
    pub m: f64,
    pub m0: f64,
    pub p: f64,
    pub bound_m: f64,
    pub d_proxy: f64,
}

/// `disc + c sqrt((d + ln(1/delta)) / m0) + epsilon M
///  + c M sqrt(s / m) sqrt(d ln(e m / d) + p ln(1 / (epsilon delta)))`.
pub fn conv_disc_bound(x: &PenaltyInputs, k: &ConvDiscConstants) -> f64 {
    let target_term = k.c * ((x.d_proxy + (1.0 / k.delta).ln()) / x.m0).sqrt();
    x.disc + target_term + k.epsilon * x.bound_m + skew_coefficient(x, k) * x.skewness.sqrt()
}

/// Factor multiplying `sqrt(s)` in [`conv_disc_bound`].
fn skew_coefficient(x: &PenaltyInputs, k: &ConvDiscConstants) -> f64 {
    let capacity = x.d_proxy * (std::f64::consts::E * x.m / x.d_proxy).ln() + x.p * (1.0 / (k.epsilon * k.delta)).ln();
    k.c * x.bound_m * (capacity.max(0.0) / x.m).sqrt()
}

fn penalty_inputs(
    lambda: &MixtureWeight,
    coll: &DomainCollection,
    loss: &LossSpec,
    disc: f64,
    k: &ConvDiscConstants,
) -> Result<PenaltyInputs> {
    let mhat = MixtureWeight::new(coll.sample_proportions())?;
    let params = coll.task().outputs() * (coll.dim() + 1);
    Ok(PenaltyInputs {
        disc,
        skewness: skewness(lambda, &mhat)?,
        m: coll.total_source() as f64,
        m0: coll.m0() as f64,
        p: coll.p() as f64,
        bound_m: loss.bound_m,
        d_proxy: k.d_proxy.unwrap_or(params as f64 + 1.0),
    })
}

/// The bound `C_epsilon(lambda)` for a collection and a discrepancy estimate.
pub fn conv_disc_penalty(
    lambda: &MixtureWeight,
    coll: &DomainCollection,
    loss: &LossSpec,
    disc_est: f64,
    constants: &ConvDiscConstants,
) -> Result<f64> {
    constants.validate()?;
    if lambda.p() != coll.p() {
        return Err(MsaError::LengthMismatch {
            what: "mixture weight",
            expected: coll.p(),
            actual: lambda.p(),
        });
    }
    Ok(conv_disc_bound(&penalty_inputs(lambda, coll, loss, disc_est, constants)?, constants))
}

pub fn run_baseline(
    kind: BaselineKind,
    coll: &DomainCollection,
    loss: &LossSpec,
    cfg: &TrainConfig,
    hyper: &BaselineHyper,
) -> Result<BaselineOutcome> {
    let p = coll.p();
    match kind {
        BaselineKind::TargetOnly => {
            let h = MixtureTrainer::new(vec![coll.target()], loss, cfg)?.train(&[1.0])?;
            Ok(BaselineOutcome::plain(kind, h, None))
        }
        BaselineKind::BestSingleSource => {
            let trainer = MixtureTrainer::for_sources(coll, loss, cfg)?;
            let mut best: Option<(f64, usize, Hypothesis)> = None;
            for k in 0..p {
                let lambda = MixtureWeight::vertex(p, k);
                let h = trainer.train(lambda.as_slice())?;
                let l = empirical_loss(&h, coll.target(), None, loss)?;
                if best.as_ref().is_none_or(|b| l < b.0) {
                    best = Some((l, k, h));
                }
            }
            let (_, k, h) = best.expect("p >= 1");
            Ok(BaselineOutcome::plain(kind, h, Some(MixtureWeight::vertex(p, k))))
        }
        BaselineKind::CombinedSources => {
            let lambda = MixtureWeight::new(coll.sample_proportions())?;
            let h = MixtureTrainer::for_sources(coll, loss, cfg)?.train(lambda.as_slice())?;
            Ok(BaselineOutcome::plain(kind, h, Some(lambda)))
        }
        BaselineKind::SourcesPlusTarget | BaselineKind::SourcesPlusTargetEqual => {
            let mut datasets: Vec<&Dataset> = coll.sources().iter().collect();
            datasets.push(coll.target());
            let lambda = if kind == BaselineKind::SourcesPlusTarget {
                let total = (coll.total_source() + coll.m0()) as f64;
                MixtureWeight::new(datasets.iter().map(|d| d.len() as f64 / total).collect())?
            } else {
                MixtureWeight::uniform(p + 1)
            };
            let h = MixtureTrainer::new(datasets, loss, cfg)?.train(lambda.as_slice())?;
            Ok(BaselineOutcome::plain(kind, h, Some(lambda)))
        }
        BaselineKind::PairwiseDisc => pairwise_disc(coll, loss, cfg, hyper),
        BaselineKind::ConvDisc => conv_disc(coll, loss, cfg, hyper),
    }
}

fn pairwise_disc(
    coll: &DomainCollection,
    loss: &LossSpec,
    cfg: &TrainConfig,
    hyper: &BaselineHyper,
) -> Result<BaselineOutcome> {
    let disc: Vec<f64> = pairwise_disc_matrix(coll, loss, hyper.disc_method, hyper.seed)?
        .into_iter()
        .map(|e| e.value)
        .collect();
    let mhat = coll.sample_proportions();
    let m = coll.total_source() as f64;
    let trainer = MixtureTrainer::for_sources(coll, loss, cfg)?;
    let gamma = match &hyper.pairwise_gamma {
        GammaChoice::Fixed(g) => {
            if !(*g >= 0.0 && g.is_finite()) {
                return Err(MsaError::Config(format!("pairwise_disc gamma must be >= 0, got {g}")));
            }
            *g
        }
        GammaChoice::Validate(grid) => {
            if grid.is_empty() {
                return Err(MsaError::Config("pairwise_disc needs a gamma or a non-empty gamma grid".into()));
            }
            let m0 = coll.m0();
            if m0 < 4 {
                return Err(MsaError::Config(format!(
                    "validating pairwise_disc gamma needs m0 >= 4, got {m0}"
                )));
            }
            let (_, held_out) = coll.target().split_at(m0 - m0 / 4)?;
            let mut best = (f64::INFINITY, grid[0]);
            for &g in grid {
                let (lambda, _) = minimize_pairwise(&disc, &mhat, m, g, hyper.eg_iters);
                let h = trainer.train(lambda.as_slice())?;
                let l = empirical_loss(&h, &held_out, None, loss)?;
                if l < best.0 {
                    best = (l, g);
                }
            }
            best.1
        }
    };
    let (lambda, trace) = minimize_pairwise(&disc, &mhat, m, gamma, hyper.eg_iters);
    let h = trainer.train(lambda.as_slice())?;
    Ok(BaselineOutcome {
        kind: BaselineKind::PairwiseDisc,
        hypothesis: h,
        lambda: Some(lambda),
        disc: Some(disc),
        gamma: Some(gamma),
        objective_trace: trace,
    })
}

/// Alternates ERM on the mixed sample with an exponentiated-gradient step
/// on `lambda` for `L_{mixed}(h) + C_epsilon(lambda)`, keeping the best
/// iterate.
fn conv_disc(
    coll: &DomainCollection,
    loss: &LossSpec,
    cfg: &TrainConfig,
    hyper: &BaselineHyper,
) -> Result<BaselineOutcome> {
    let k = &hyper.conv;
    k.validate()?;
    if hyper.conv_iters == 0 {
        return Err(MsaError::Config("conv_disc needs at least one iteration".into()));
    }
    let trainer = MixtureTrainer::for_sources(coll, loss, cfg)?;
    let sources: Vec<&Dataset> = coll.sources().iter().collect();
    let target = WeightedView::uniform(coll.target());
    let mhat = coll.sample_proportions();
    let mut lambda = mhat.clone();
    let mut witness: Option<Hypothesis> = None;
    let mut trace = Vec::with_capacity(hyper.conv_iters);
    let mut best: Option<(f64, Hypothesis, MixtureWeight, f64)> = None;
    let mut adagrad = 0.0;
    for it in 0..hyper.conv_iters {
        let lw = MixtureWeight::normalized(lambda.clone())?;
        let h = trainer.train(lw.as_slice())?;
        let mixed = WeightedView::mixture(&sources, lw.as_slice())?;
        let est = disc_views(&target, &mixed, loss, hyper.disc_method, hyper.seed ^ it as u64, witness.as_ref())?;
        let inputs = penalty_inputs(&lw, coll, loss, est.value, k)?;
        let value = view_loss(&h, &mixed, loss)? + conv_disc_bound(&inputs, k);
        trace.push(value);
        if best.as_ref().is_none_or(|b| value < b.0) {
            best = Some((value, h.clone(), lw.clone(), est.value));
        }

        let per_source: Vec<f64> = coll
            .sources()
            .iter()
            .map(|d| empirical_loss(&h, d, None, loss))
            .collect::<Result<_>>()?;
        let wit_source: Vec<f64> = coll
            .sources()
            .iter()
            .map(|d| empirical_loss(&est.witness, d, None, loss))
            .collect::<Result<_>>()?;
        let wit_target = view_loss(&est.witness, &target, loss)?;
        let wit_mixed: f64 = wit_source.iter().zip(lw.as_slice()).map(|(a, b)| a * b).sum();
        let sign = (wit_target - wit_mixed).signum();
        let s = inputs.skewness;
        let coef = skew_coefficient(&inputs, k);
        let grad: Vec<f64> = (0..coll.p())
            .map(|j| per_source[j] - sign * wit_source[j] + coef * (lambda[j] / mhat[j]) / s.sqrt())
            .collect();
        let g = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        adagrad += g * g;
        if adagrad > 0.0 {
            let eta = 1.0 / adagrad.sqrt();
            let shift = grad.iter().copied().fold(f64::INFINITY, f64::min);
            let mut total = 0.0;
            for (l, gj) in lambda.iter_mut().zip(&grad) {
                *l *= (-eta * (gj - shift)).exp();
                total += *l;
            }
            lambda.iter_mut().for_each(|l| *l /= total);
        }
        witness = Some(est.witness);
    }
    let (_, h, lw, disc) = best.expect("at least one iteration");
    Ok(BaselineOutcome {
        kind: BaselineKind::ConvDisc,
        hypothesis: h,
        lambda: Some(lw),
        disc: Some(vec![disc]),
        gamma: None,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Task};
    use crate::synth::{gen_toy_regression, ToyRegressionSpec};

    fn toy() -> DomainCollection {
        let spec = ToyRegressionSpec {
            d: 5,
            m_k: 300,
            m0: 40,
            ..ToyRegressionSpec::default()
        };
        gen_toy_regression(&spec).unwrap().0
    }

    #[test]
    fn names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("nope".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn penalty_matches_hand_computation() {
        let x = PenaltyInputs {
            disc: 0.05,
            skewness: 1.2,
            m: 40000.0,
            m0: 200.0,
            p: 4.0,
            bound_m: 1.0,
            d_proxy: 101.0,
        };
        let k = ConvDiscConstants {
            c: 1.0,
            d_proxy: Some(101.0),
            epsilon: 0.1,
            delta: 0.1,
        };
        assert!((conv_disc_bound(&x, &k) - 1.0160199644301793).abs() < 1e-12);
    }

    #[test]
    fn doubling_m0_shrinks_only_the_target_term() {
        let k = ConvDiscConstants::default();
        let x = PenaltyInputs {
            disc: 0.3,
            skewness: 1.5,
            m: 1000.0,
            m0: 50.0,
            p: 3.0,
            bound_m: 2.0,
            d_proxy: 6.0,
        };
        let y = PenaltyInputs { m0: 100.0, ..x };
        let rest = x.disc + k.epsilon * x.bound_m + skew_coefficient(&x, &k) * x.skewness.sqrt();
        let ratio = (conv_disc_bound(&y, &k) - rest) / (conv_disc_bound(&x, &k) - rest);
        assert!((ratio - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sample_proportions_minimize_skewness_term() {
        let coll = toy();
        let loss = LossSpec::squared(1e-3);
        let k = ConvDiscConstants::default();
        let mhat = MixtureWeight::new(coll.sample_proportions()).unwrap();
        let at_mhat = conv_disc_penalty(&mhat, &coll, &loss, 0.1, &k).unwrap();
        for l in [MixtureWeight::vertex(4, 0), MixtureWeight::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap()] {
            assert!(conv_disc_penalty(&l, &coll, &loss, 0.1, &k).unwrap() > at_mhat);
        }
    }

    #[test]
    fn equal_discrepancies_give_uniform_weights() {
        let mhat = [0.25; 4];
        for gamma in [1e-3, 1.0, 10.0] {
            let (l, trace) = minimize_pairwise(&[0.4; 4], &mhat, 1000.0, gamma, 200);
            assert!(l.as_slice().iter().all(|v| (v - 0.25).abs() < 1e-3));
            assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn pairwise_trace_is_monotone() {
        let (l, trace) = minimize_pairwise(&[0.9, 0.1, 0.5], &[0.2, 0.3, 0.5], 100.0, 0.005, 300);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(l.as_slice()[1] > l.as_slice()[0]);
    }

    #[test]
    fn every_baseline_runs() {
        let coll = toy();
        let loss = LossSpec::squared(1e-3);
        let hyper = BaselineHyper {
            disc_method: DiscMethod::Ascent { restarts: 2, iters: 50 },
            conv_iters: 4,
            ..BaselineHyper::default()
        };
        for kind in BaselineKind::ALL {
            let out = run_baseline(kind, &coll, &loss, &TrainConfig::default(), &hyper).unwrap();
            assert!(out.hypothesis.norm() <= loss.norm_ball_b);
            assert_eq!(out.kind, kind);
        }
    }

    #[test]
    fn sources_plus_target_is_concatenated_training() {
        let coll = toy();
        let loss = LossSpec::squared(1e-3);
        let cfg = TrainConfig::default();
        let out = run_baseline(BaselineKind::SourcesPlusTarget, &coll, &loss, &cfg, &BaselineHyper::default()).unwrap();
        let mut parts: Vec<&Dataset> = coll.sources().iter().collect();
        parts.push(coll.target());
        let all = Dataset::concat(0, &parts).unwrap();
        let direct = crate::erm::train_dataset(&all, &loss, &cfg).unwrap();
        assert!(out.hypothesis.distance(&direct) < 1e-9);
    }

    #[test]
    fn tiny_target_cannot_validate_gamma() {
        let t = Dataset::from_parts(0, Task::Regression, 1, vec![0.0, 1.0], vec![Label::Real(0.0), Label::Real(1.0)]).unwrap();
        let s = Dataset::from_parts(1, Task::Regression, 1, vec![0.0, 1.0, 2.0], vec![Label::Real(0.0), Label::Real(1.0), Label::Real(2.0)]).unwrap();
        let coll = DomainCollection::new(t, vec![s]).unwrap();
        let err = run_baseline(BaselineKind::PairwiseDisc, &coll, &LossSpec::squared(1e-3), &TrainConfig::default(), &BaselineHyper::default()).unwrap_err();
        assert!(matches!(err, MsaError::Config(_)));
    }
}
