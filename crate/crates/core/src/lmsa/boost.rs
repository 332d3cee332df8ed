use rand::seq::index::sample;
use rand::Rng as _;

use super::ensemble::EnsembleHypothesis;
use super::select::train_cover;
use crate::data::{DomainCollection, Label, Task};
use crate::erm::TrainConfig;
use crate::error::{MsaError, Result};
use crate::hypothesis::{Hypothesis, Prediction};
use crate::loss::{example_loss, LossSpec};
use crate::rng::{self, Rng};
use crate::simplex::SimplexCover;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostConfig {
    /// Candidates per round (`s`).
    pub candidates: usize,
    /// Rounds (`T`).
    pub rounds: usize,
    /// Sample candidates by descending a hierarchical partition of the cover.
    pub hierarchical: bool,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            candidates: 5,
            rounds: 50,
            hierarchical: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostReport {
    /// Target loss of the ensemble before round 1 and after every round.
    pub trace: Vec<f64>,
    /// Cover index accepted in each round, if any.
    pub accepted: Vec<Option<usize>>,
    pub initial_index: usize,
}

const GOLDEN_ITERS: usize = 40;

struct Objective<'a> {
    labels: &'a [Label],
    outputs: usize,
    task: Task,
    loss: LossSpec,
}

impl Objective<'_> {
    /// Mean loss of stacked predictions (`outputs` values per example).
    fn value(&self, preds: &[f64]) -> f64 {
        // same summation as `view_loss`, so single models reproduce it bit for bit
        let w = 1.0 / self.labels.len() as f64;
        let mut total = 0.0;
        for (i, y) in self.labels.iter().enumerate() {
            let p = &preds[i * self.outputs..(i + 1) * self.outputs];
            let pred = match self.task {
                Task::Regression => Prediction::Real(p[0]),
                Task::Classification { .. } => Prediction::Dist(p.to_vec()),
            };
            total += w * example_loss(&self.loss, &pred, *y).expect("task checked");
        }
        total
    }

    fn mixed(&self, current: &[f64], cand: &[f64], a: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(current.iter().zip(cand).map(|(e, c)| (1.0 - a) * e + a * c));
    }

    /// Best step `a` in `[0, 1]` for `(1 - a) current + a cand`.
    fn line_search(&self, current: &[f64], cand: &[f64]) -> (f64, f64) {
        let mut buf = Vec::with_capacity(current.len());
        let mut f = |a: f64| {
            self.mixed(current, cand, a, &mut buf);
            self.value(&buf)
        };
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..GOLDEN_ITERS {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        let (mut a, mut v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        let v_end = f(1.0);
        if v_end < v {
            a = 1.0;
            v = v_end;
        }
        (a, v)
    }
}

fn stacked_predictions(h: &Hypothesis, coll: &DomainCollection) -> Vec<f64> {
    let mut out = Vec::with_capacity(coll.m0() * h.task().outputs());
    for (x, _) in coll.target().iter() {
        match h.predict(x).expect("dimensions checked") {
            Prediction::Real(v) => out.push(v),
            Prediction::Dist(p) => out.extend(p),
        }
    }
    out
}

/// Recursive partition of cover indices with branching factor `s`, built
/// by farthest-point centers in l1.
struct Cluster {
    members: Vec<usize>,
    children: Vec<Cluster>,
}

impl Cluster {
    fn build(members: Vec<usize>, cover: &SimplexCover, s: usize) -> Cluster {
        if members.len() <= s || s < 2 {
            return Cluster {
                members,
                children: Vec::new(),
            };
        }
        let pts = cover.points();
        let dist = |a: usize, b: usize| pts[a].l1_distance(pts[b].as_slice());
        let mut centers = vec![members[0]];
        let mut nearest: Vec<f64> = members.iter().map(|&m| dist(m, members[0])).collect();
        while centers.len() < s {
            let (far, _) = nearest
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
            let c = members[far];
            centers.push(c);
            for (i, &m) in members.iter().enumerate() {
                nearest[i] = nearest[i].min(dist(m, c));
            }
        }
        let mut groups = vec![Vec::new(); s];
        for &m in &members {
            let mut best = 0;
            for j in 1..s {
                if dist(m, centers[j]) < dist(m, centers[best]) {
                    best = j;
                }
            }
            groups[best].push(m);
        }
        let children = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .map(|g| Cluster::build(g, cover, s))
            .collect();
        Cluster { members, children }
    }
}

/// Randomized coordinate descent over convex combinations of the cover
/// models, minimizing the target loss. Starts from the best single model;
/// each round line-searches the update `(1 - a) E + a h_c` for sampled
/// candidates `c` and keeps the best one only if it strictly improves.
pub fn lmsa_boost(
    coll: &DomainCollection,
    cover: &SimplexCover,
    loss: &LossSpec,
    cfg: &TrainConfig,
    boost: &BoostConfig,
) -> Result<(EnsembleHypothesis, BoostReport)> {
    if boost.candidates == 0 {
        return Err(MsaError::Config("boost needs at least one candidate per round".into()));
    }
    let trained = train_cover(coll, cover, loss, cfg)?;
    let preds: Vec<Vec<f64>> = trained.iter().map(|(h, _)| stacked_predictions(h, coll)).collect();
    let obj = Objective {
        labels: coll.target().labels(),
        outputs: coll.task().outputs(),
        task: coll.task(),
        loss: *loss,
    };
    let mut start = 0;
    for (i, (_, pt)) in trained.iter().enumerate() {
        if pt.target_loss < trained[start].1.target_loss {
            start = i;
        }
    }
    let mut alpha = vec![0.0; trained.len()];
    alpha[start] = 1.0;
    let mut current = preds[start].clone();
    let mut value = obj.value(&current);
    let mut trace = vec![value];
    let mut accepted = Vec::with_capacity(boost.rounds);
    let mut rng = rng::derived(boost.seed, 0);
    let tree = boost
        .hierarchical
        .then(|| Cluster::build((0..trained.len()).collect(), cover, boost.candidates));

    for _ in 0..boost.rounds {
        let eval = |c: usize| {
            let (a, v) = obj.line_search(&current, &preds[c]);
            (c, a, v)
        };
        let best = match &tree {
            None => uniform_round(&mut rng, trained.len(), boost.candidates, eval),
            Some(root) => hierarchical_round(&mut rng, root, boost.candidates, eval),
        };
        match best {
            Some((c, a, v)) if v < value => {
                alpha.iter_mut().for_each(|x| *x *= 1.0 - a);
                alpha[c] += a;
                let mut next = Vec::with_capacity(current.len());
                obj.mixed(&current, &preds[c], a, &mut next);
                current = next;
                value = obj.value(&current);
                accepted.push(Some(c));
            }
            _ => accepted.push(None),
        }
        trace.push(value);
    }

    let total: f64 = alpha.iter().sum();
    let members = alpha
        .iter()
        .zip(trained)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, (h, _))| (a / total, h))
        .collect();
    let ensemble = EnsembleHypothesis::new(members)?;
    Ok((
        ensemble,
        BoostReport {
            trace,
            accepted,
            initial_index: start,
        },
    ))
}

type Candidate = (usize, f64, f64);

fn better(a: Option<Candidate>, b: Candidate) -> Option<Candidate> {
    match a {
        Some(x) if x.2 <= b.2 => Some(x),
        _ => Some(b),
    }
}

fn uniform_round(
    rng: &mut Rng,
    n: usize,
    s: usize,
    eval: impl Fn(usize) -> Candidate,
) -> Option<Candidate> {
    let mut picks = sample(rng, n, s.min(n)).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(eval).fold(None, better)
}

fn hierarchical_round(
    rng: &mut Rng,
    root: &Cluster,
    s: usize,
    eval: impl Fn(usize) -> Candidate,
) -> Option<Candidate> {
    let mut node = root;
    let mut best: Option<Candidate> = None;
    loop {
        if node.children.is_empty() {
            let picks = sample(rng, node.members.len(), s.min(node.members.len())).into_vec();
            let mut idx: Vec<usize> = picks.into_iter().map(|i| node.members[i]).collect();
            idx.sort_unstable();
            return idx.into_iter().map(&eval).fold(best, better);
        }
        let mut level: Option<(usize, Candidate)> = None;
        for (j, child) in node.children.iter().enumerate() {
            let c = eval(child.members[rng.random_range(0..child.members.len())]);
            if level.is_none_or(|(_, b)| c.2 < b.2) {
                level = Some((j, c));
            }
        }
        let (j, c) = level.expect("nonempty children");
        let improved = best.is_none_or(|b| c.2 < b.2 - 1e-12);
        best = better(best, c);
        if !improved {
            return best;
        }
        node = &node.children[j];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::make_cover;
    use crate::synth::{gen_toy_regression, ToyRegressionSpec};

    fn toy(seed: u64) -> DomainCollection {
        let spec = ToyRegressionSpec {
            d: 8,
            m_k: 300,
            m0: 60,
            seed,
            ..ToyRegressionSpec::default()
        };
        gen_toy_regression(&spec).unwrap().0
    }

    #[test]
    fn zero_rounds_is_best_single_model() {
        let coll = toy(1);
        let cover = make_cover(4, 1.0).unwrap();
        let loss = LossSpec::squared(1e-3);
        let cfg = TrainConfig::default();
        let (h, report) = super::super::lmsa_select(&coll, &cover, &loss, &cfg).unwrap();
        let b = BoostConfig {
            rounds: 0,
            ..BoostConfig::default()
        };
        let (e, r) = lmsa_boost(&coll, &cover, &loss, &cfg, &b).unwrap();
        assert_eq!(e.members().len(), 1);
        assert_eq!(e.members()[0].1, h);
        assert_eq!(r.trace, vec![report.selected_loss]);
    }

    #[test]
    fn trace_is_monotone_for_both_samplers() {
        let coll = toy(2);
        let cover = make_cover(4, 1.0).unwrap();
        let loss = LossSpec::squared(1e-3);
        for hierarchical in [false, true] {
            for seed in 0..3 {
                let b = BoostConfig {
                    candidates: 3,
                    rounds: 15,
                    hierarchical,
                    seed,
                };
                let (e, r) = lmsa_boost(&coll, &cover, &loss, &TrainConfig::default(), &b).unwrap();
                assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
                let direct = e.empirical_loss(coll.target(), &loss).unwrap();
                assert!((direct - r.trace.last().unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cluster_partitions_every_index() {
        let cover = make_cover(3, 0.25).unwrap();
        let root = Cluster::build((0..cover.len()).collect(), &cover, 3);
        fn leaves(c: &Cluster, out: &mut Vec<usize>) {
            if c.children.is_empty() {
                out.extend(&c.members);
            }
            for ch in &c.children {
                leaves(ch, out);
            }
        }
        let mut all = Vec::new();
        leaves(&root, &mut all);
        all.sort_unstable();
        assert_eq!(all, (0..cover.len()).collect::<Vec<_>>());
    }
}
