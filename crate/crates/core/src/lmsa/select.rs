use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::DomainCollection;
use crate::erm::{MixtureTrainer, TrainConfig};
use crate::error::{MsaError, Result};
use crate::hypothesis::Hypothesis;
use crate::loss::{empirical_loss, LossSpec};
use crate::simplex::{skewness, MixtureWeight, SimplexCover};

#[derive(Clone, Debug, PartialEq)]
pub struct CoverPoint {
    pub lambda: MixtureWeight,
    /// `L_{D_0}(h_lambda)` on the target sample, with the evaluation loss.
    pub target_loss: f64,
    pub skewness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmsaReport {
    pub chosen_index: usize,
    pub chosen_lambda: MixtureWeight,
    pub per_point: Vec<CoverPoint>,
    pub selected_loss: f64,
}

impl LmsaReport {
    /// One row per cover point: `lambda_1..lambda_p,target_loss,skewness`.
    pub fn to_csv(&self) -> String {
        let p = self.chosen_lambda.p();
        let mut out = String::new();
        for k in 1..=p {
            let _ = write!(out, "lambda_{k},");
        }
        out.push_str("target_loss,skewness\n");
        for row in &self.per_point {
            for v in row.lambda.as_slice() {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{},{}", row.target_loss, row.skewness);
        }
        out
    }
}

/// Trains `h_lambda` for every cover point, in cover order, and evaluates
/// each on the target sample.
pub fn train_cover(
    coll: &DomainCollection,
    cover: &SimplexCover,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<Vec<(Hypothesis, CoverPoint)>> {
    if cover.p() != coll.p() {
        return Err(MsaError::LengthMismatch {
            what: "cover dimension",
            expected: coll.p(),
            actual: cover.p(),
        });
    }
    let trainer = MixtureTrainer::for_sources(coll, loss, cfg)?;
    let mhat = MixtureWeight::new(coll.sample_proportions())?;
    cover
        .points()
        .par_iter()
        .map(|lambda| {
            let h = trainer.train(lambda.as_slice())?;
            let target_loss = empirical_loss(&h, coll.target(), None, loss)?;
            let s = skewness(lambda, &mhat)?;
            Ok((
                h,
                CoverPoint {
                    lambda: lambda.clone(),
                    target_loss,
                    skewness: s,
                },
            ))
        })
        .collect()
}

/// Selects the cover model with the smallest target loss; ties go to the
/// lowest cover index.
pub fn lmsa_select(
    coll: &DomainCollection,
    cover: &SimplexCover,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<(Hypothesis, LmsaReport)> {
    let trained = train_cover(coll, cover, loss, cfg)?;
    let mut best = 0;
    for (i, (_, pt)) in trained.iter().enumerate() {
        if pt.target_loss < trained[best].1.target_loss {
            best = i;
        }
    }
    let h = trained[best].0.clone();
    let per_point: Vec<CoverPoint> = trained.into_iter().map(|(_, pt)| pt).collect();
    let report = LmsaReport {
        chosen_index: best,
        chosen_lambda: per_point[best].lambda.clone(),
        selected_loss: per_point[best].target_loss,
        per_point,
    };
    Ok((h, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Label, Task};
    use crate::erm::train_on_mixture;
    use crate::simplex::make_cover;
    use crate::synth::{gen_toy_regression, ToyRegressionSpec};
    use rand::Rng as _;

    #[test]
    fn single_point_cover_returns_its_model() {
        let spec = ToyRegressionSpec {
            d: 6,
            m_k: 200,
            m0: 30,
            ..ToyRegressionSpec::default()
        };
        let (coll, _) = gen_toy_regression(&spec).unwrap();
        let lambda = MixtureWeight::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let cover = SimplexCover::from_points(1.0, vec![lambda.clone()]).unwrap();
        let loss = LossSpec::squared(1e-3);
        let cfg = TrainConfig::default();
        let (h, report) = lmsa_select(&coll, &cover, &loss, &cfg).unwrap();
        assert_eq!(h, train_on_mixture(&coll, &lambda, &loss, &cfg).unwrap());
        assert_eq!(report.chosen_index, 0);
        assert_eq!(report.to_csv().lines().count(), 2);
    }

    #[test]
    fn selected_loss_is_table_minimum() {
        let spec = ToyRegressionSpec {
            d: 6,
            m_k: 200,
            m0: 30,
            seed: 4,
            ..ToyRegressionSpec::default()
        };
        let (coll, _) = gen_toy_regression(&spec).unwrap();
        let cover = make_cover(4, 0.5).unwrap();
        let (h, report) = lmsa_select(&coll, &cover, &LossSpec::squared(1e-3), &TrainConfig::default()).unwrap();
        assert!(report.per_point.iter().all(|pt| report.selected_loss <= pt.target_loss));
        assert_eq!(report.per_point.len(), cover.len());
        let direct = empirical_loss(&h, coll.target(), None, &LossSpec::squared(1e-3)).unwrap();
        assert_eq!(direct, report.selected_loss);
        assert!(report.per_point.iter().all(|pt| pt.skewness >= 1.0 - 1e-12));
    }

    #[test]
    fn prefers_the_source_matching_the_target() {
        let mut rng = crate::rng::derived(11, 0);
        let mut sample = |id: usize, n: usize, noise_only: bool| {
            let mut feats = Vec::new();
            let mut labels = Vec::new();
            for _ in 0..n {
                let x: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let y = if noise_only {
                    rng.random_range(-2.0..2.0)
                } else {
                    1.5 * x[0] - x[1] + 0.1 * rng.random_range(-1.0..1.0)
                };
                feats.extend(x);
                labels.push(Label::Real(y));
            }
            Dataset::from_parts(id, Task::Regression, 2, feats, labels).unwrap()
        };
        let s1 = sample(1, 3000, false);
        let s2 = sample(2, 3000, true);
        let t = sample(0, 200, false);
        let coll = DomainCollection::new(t, vec![s1, s2]).unwrap();
        let (_, report) = lmsa_select(&coll, &make_cover(2, 0.25).unwrap(), &LossSpec::squared(1e-3), &TrainConfig::default()).unwrap();
        assert!(report.chosen_lambda.as_slice()[0] >= 0.75, "{:?}", report.chosen_lambda);
        // exhaustive fine scan agrees on the region
        let (_, fine) = lmsa_select(&coll, &make_cover(2, 0.02).unwrap(), &LossSpec::squared(1e-3), &TrainConfig::default()).unwrap();
        assert!(fine.chosen_lambda.as_slice()[0] >= 0.75);
    }
}
