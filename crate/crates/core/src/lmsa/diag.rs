use crate::data::{Dataset, DomainCollection, WeightedView};
use crate::discrepancy::HypothesisGrid;
use crate::error::{MsaError, Result};
use crate::hypothesis::Hypothesis;
use crate::loss::LossSpec;
use crate::simplex::MixtureWeight;

/// Large samples standing in for the population distributions `D_0` and
/// `D_1..D_p`.
#[derive(Clone, Copy, Debug)]
pub struct PopulationProxy<'a> {
    pub target: &'a Dataset,
    pub sources: &'a [Dataset],
}

#[derive(Clone, Debug)]
pub struct ExcessBoundDiag {
    /// `max_h |L_{mixed sample}(h) - L_{D_lambda}(h)|`.
    pub deviation: f64,
    /// `disc(D_0, D_lambda)`.
    pub disc: f64,
    /// `E(lambda) = 2 deviation + 2 disc`.
    pub bound: f64,
    /// `L_{D_0}(h_mixed) - L_{D_0}(h_0)` with both minimizers taken over the grid.
    pub excess: f64,
    pub h_mixed: Hypothesis,
    pub h_target: Hypothesis,
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Uniform excess-risk bound `E(lambda)` with every supremum and minimizer
/// computed by brute force over a parameter lattice, together with the
/// excess risk it bounds. Needs `d <= 3` and at most two classes.
pub fn excess_bound_diag(
    coll: &DomainCollection,
    lambda: &MixtureWeight,
    loss: &LossSpec,
    resolution: f64,
    population: &PopulationProxy<'_>,
) -> Result<ExcessBoundDiag> {
    if population.sources.len() != coll.p() || lambda.p() != coll.p() {
        return Err(MsaError::LengthMismatch {
            what: "population sources",
            expected: coll.p(),
            actual: population.sources.len().min(lambda.p()),
        });
    }
    let grid = HypothesisGrid::new(coll.task(), coll.dim(), loss, resolution)?;
    let sample: Vec<&Dataset> = coll.sources().iter().collect();
    let pop: Vec<&Dataset> = population.sources.iter().collect();
    let mixed = grid.losses(&WeightedView::mixture(&sample, lambda.as_slice())?, loss);
    let pop_mix = grid.losses(&WeightedView::mixture(&pop, lambda.as_slice())?, loss);
    let target = grid.losses(&WeightedView::uniform(population.target), loss);

    let max_gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let deviation = max_gap(&mixed, &pop_mix);
    let disc = max_gap(&target, &pop_mix);
    let i_mixed = argmin(&mixed);
    let i_target = argmin(&target);
    Ok(ExcessBoundDiag {
        deviation,
        disc,
        bound: 2.0 * deviation + 2.0 * disc,
        excess: target[i_mixed] - target[i_target],
        h_mixed: grid.hypothesis(i_mixed),
        h_target: grid.hypothesis(i_target),
    })
}
