//! Synthetic generators: the Gaussian toy regression benchmark and a
//! three-source counterexample for pairwise-discrepancy weighting.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::data::{Dataset, DomainCollection, Label, Task, WeightedView};
use crate::discrepancy::{disc_views, DiscMethod};
use crate::error::{MsaError, Result};
use crate::hypothesis::Hypothesis;
use crate::loss::LossSpec;
use crate::rng::{self, Rng};
use crate::simplex::MixtureWeight;

/// Toy regression benchmark: `x ~ N(0, I_d / d)`, `w_k ~ N(0, I_d / d)`,
/// `y = w_k . x + eta` with scalar `eta ~ N(0, sigma_sq)`. The target draws
/// its domain index from `lambda_star` for every example.
#[derive(Clone, Debug)]
pub struct ToyRegressionSpec {
    pub p: usize,
    pub d: usize,
    pub m_k: usize,
    pub m0: usize,
    pub lambda_star: MixtureWeight,
    pub sigma_sq: f64,
    pub seed: u64,
}

impl Default for ToyRegressionSpec {
    fn default() -> Self {
        ToyRegressionSpec {
            p: 4,
            d: 100,
            m_k: 10_000,
            m0: 100,
            lambda_star: MixtureWeight::new(vec![0.7, 0.1, 0.1, 0.1]).expect("valid weight"),
            sigma_sq: 0.01,
            seed: 0,
        }
    }
}

impl ToyRegressionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.d == 0 || self.m_k == 0 || self.m0 == 0 {
            return Err(MsaError::Config("toy spec needs p, d, m_k, m0 >= 1".into()));
        }
        if self.lambda_star.p() != self.p {
            return Err(MsaError::LengthMismatch {
                what: "lambda_star",
                expected: self.p,
                actual: self.lambda_star.p(),
            });
        }
        if !(self.sigma_sq >= 0.0 && self.sigma_sq.is_finite()) {
            return Err(MsaError::Config(format!("sigma_sq must be >= 0, got {}", self.sigma_sq)));
        }
        Ok(())
    }
}

/// Ground truth of a generated toy instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyOracle {
    pub weights: Vec<Vec<f64>>,
    pub lambda_star: MixtureWeight,
    pub sigma_sq: f64,
    /// Latent domain index of every target example.
    pub target_domains: Vec<usize>,
}

impl ToyOracle {
    /// Exact expected squared loss of a regression hypothesis on the target
    /// distribution: `sigma^2 + sum_j lambda_j (||w_j - w||^2 / d + (b)^2)`.
    pub fn target_loss(&self, h: &Hypothesis) -> f64 {
        let d = self.weights[0].len() as f64;
        let b = h.intercept()[0];
        let mut total = self.sigma_sq;
        for (wj, l) in self.weights.iter().zip(self.lambda_star.as_slice()) {
            let dist: f64 = wj.iter().zip(h.weights()).map(|(a, c)| (a - c) * (a - c)).sum();
            total += l * (dist / d + b * b);
        }
        total
    }

    /// Best affine predictor for the target, `w = sum_j lambda_j w_j`.
    pub fn mixture_predictor(&self) -> Hypothesis {
        let d = self.weights[0].len();
        let mut w = vec![0.0; d];
        for (wj, l) in self.weights.iter().zip(self.lambda_star.as_slice()) {
            for (a, b) in w.iter_mut().zip(wj) {
                *a += l * b;
            }
        }
        Hypothesis::regression(w, 0.0)
    }

    /// Sidecar text: `sigma_sq`, `lambda_star` and one `w_k` row per source.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "sigma_sq={:.16e}", self.sigma_sq);
        let _ = writeln!(out, "lambda_star={}", join(self.lambda_star.as_slice()));
        for (k, w) in self.weights.iter().enumerate() {
            let _ = writeln!(out, "w{}={}", k + 1, join(w));
        }
        out
    }
}

fn gaussian_rows(rng: &mut Rng, n: usize, d: usize, scale: f64) -> Vec<f64> {
    (0..n * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws `n` examples `y = w[idx] . x + eta` with `x ~ N(0, scale^2 I)`.
fn linear_sample(
    rng: &mut Rng,
    domain_id: usize,
    weights: &[Vec<f64>],
    domains: &[usize],
    x_scale: f64,
    sigma: f64,
) -> Result<Dataset> {
    let features = gaussian_rows(rng, domains.len(), weights[0].len(), x_scale);
    label_rows(rng, domain_id, weights, domains, features, sigma)
}

/// Labels given feature rows: `y_i = w[domains[i]] . x_i + eta_i`.
fn label_rows(
    rng: &mut Rng,
    domain_id: usize,
    weights: &[Vec<f64>],
    domains: &[usize],
    features: Vec<f64>,
    sigma: f64,
) -> Result<Dataset> {
    let d = weights[0].len();
    let noise = Normal::new(0.0, sigma).map_err(|e| MsaError::Config(e.to_string()))?;
    let labels = domains
        .iter()
        .enumerate()
        .map(|(i, &k)| Label::Real(dot(&weights[k], &features[i * d..(i + 1) * d]) + noise.sample(rng)))
        .collect();
    Dataset::from_parts(domain_id, Task::Regression, d, features, labels)
}

/// Generates the toy benchmark. Source `k` (1-based domain id) has `m_k`
/// examples; the target (domain id 0) has `m0`.
pub fn gen_toy_regression(spec: &ToyRegressionSpec) -> Result<(DomainCollection, ToyOracle)> {
    spec.validate()?;
    let (p, d) = (spec.p, spec.d);
    let scale = 1.0 / (d as f64).sqrt();
    let mut wrng = rng::derived(spec.seed, 0);
    let weights: Vec<Vec<f64>> = (0..p).map(|_| gaussian_rows(&mut wrng, 1, d, scale)).collect();
    let sigma = spec.sigma_sq.sqrt();
    let sources = (0..p)
        .map(|k| {
            let mut r = rng::derived(spec.seed, 1 + k as u64);
            linear_sample(&mut r, k + 1, &weights, &vec![k; spec.m_k], scale, sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    let (target, target_domains) = toy_target_sample(spec, &weights, spec.m0, 1 << 20)?;
    let coll = DomainCollection::new(target, sources)?;
    Ok((
        coll,
        ToyOracle {
            weights,
            lambda_star: spec.lambda_star.clone(),
            sigma_sq: spec.sigma_sq,
            target_domains,
        },
    ))
}

/// Small regression instance with `|x| <= 1` and `|y| <= 1`, so that every
/// squared loss over the unit ball is at most 4. Source `k` scales its
/// inputs by its own factor and labels them with its own rule; the target
/// is a random mixture of the sources. `population` holds large samples of
/// the same distributions (target first), for brute-force diagnostics.
#[derive(Clone, Debug)]
pub struct BoundedInstance {
    pub collection: DomainCollection,
    pub target_lambda: MixtureWeight,
    pub population_target: Dataset,
    pub population_sources: Vec<Dataset>,
}

pub fn gen_bounded_regression(
    p: usize,
    d: usize,
    n_source: usize,
    m0: usize,
    n_population: usize,
    seed: u64,
) -> Result<BoundedInstance> {
    if p == 0 || d == 0 || n_source == 0 || m0 == 0 || n_population == 0 {
        return Err(MsaError::Config("bounded instance needs p, d and all sample sizes >= 1".into()));
    }
    let mut r = rng::derived(seed, 0);
    let unit = Uniform::new_inclusive(-1.0, 1.0).map_err(|e| MsaError::Config(e.to_string()))?;
    let rules: Vec<Vec<f64>> = (0..p).map(|_| (0..d).map(|_| unit.sample(&mut r)).collect()).collect();
    let scales: Vec<f64> = (0..p).map(|_| 0.3 + 0.7 * r.random::<f64>()).collect();
    let raw: Vec<f64> = (0..p).map(|_| -r.random::<f64>().ln()).collect();
    let target_lambda = MixtureWeight::normalized(raw)?;
    let pick = WeightedIndex::new(target_lambda.as_slice()).map_err(|e| MsaError::Config(e.to_string()))?;
    let root = (d as f64).sqrt();

    let draw = |stream: u64, id: usize, n: usize, source: Option<usize>| -> Result<Dataset> {
        let mut r = rng::derived(seed, stream);
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = source.unwrap_or_else(|| pick.sample(&mut r));
            let x: Vec<f64> = (0..d).map(|_| scales[k] * unit.sample(&mut r) / root).collect();
            let y = dot(&rules[k], &x) / root + 0.1 * unit.sample(&mut r);
            features.extend_from_slice(&x);
            labels.push(Label::Real(y.clamp(-1.0, 1.0)));
        }
        Dataset::from_parts(id, Task::Regression, d, features, labels)
    };
    let sources = (0..p)
        .map(|k| draw(1 + k as u64, k + 1, n_source, Some(k)))
        .collect::<Result<Vec<_>>>()?;
    let target = draw(1 << 20, 0, m0, None)?;
    let population_sources = (0..p)
        .map(|k| draw((1 << 21) + k as u64, k + 1, n_population, Some(k)))
        .collect::<Result<Vec<_>>>()?;
    let population_target = draw(1 << 22, 0, n_population, None)?;
    Ok(BoundedInstance {
        collection: DomainCollection::new(target, sources)?,
        target_lambda,
        population_target,
        population_sources,
    })
}

/// Target sample of size `n` for the toy instance, from stream `stream`.
/// Used for the training target sample and for held-out test samples.
pub fn toy_target_sample(
    spec: &ToyRegressionSpec,
    weights: &[Vec<f64>],
    n: usize,
    stream: u64,
) -> Result<(Dataset, Vec<usize>)> {
    let mut r = rng::derived(spec.seed, stream);
    let pick = WeightedIndex::new(spec.lambda_star.as_slice()).map_err(|e| MsaError::Config(e.to_string()))?;
    let domains: Vec<usize> = (0..n).map(|_| pick.sample(&mut r)).collect();
    let scale = 1.0 / (spec.d as f64).sqrt();
    let data = linear_sample(&mut r, 0, weights, &domains, scale, spec.sigma_sq.sqrt())?;
    Ok((data, domains))
}

pub const EXAMPLE1_DIM: usize = 2;
const EXAMPLE1_A: f64 = 1.0;
const EXAMPLE1_SIGMA: f64 = 0.1;

/// Loss used to generate and calibrate the counterexample: ridge squared
/// loss on the unit parameter ball.
pub fn example1_loss() -> LossSpec {
    LossSpec::squared(1e-3).with_norm_ball(1.0)
}

#[derive(Clone, Debug)]
pub struct Example1 {
    pub collection: DomainCollection,
    /// Independent target sample for measuring test loss.
    pub target_test: Dataset,
    /// True regression vectors of sources 1..3.
    pub weights: [Vec<f64>; 3],
    pub calibration: CalibrationReport,
}

#[derive(Clone, Debug)]
pub struct CalibrationReport {
    /// Length of `w_3` found by bisection.
    pub w3_norm: f64,
    /// Measured `disc(D_0, D_k)` for k = 1, 2, 3 with the calibration budget.
    pub disc: [f64; 3],
    pub iterations: usize,
}

impl CalibrationReport {
    pub fn to_text(&self) -> String {
        format!(
            "w3_norm={:.16e}\ndisc1={:.16e}\ndisc2={:.16e}\ndisc3={:.16e}\niterations={}\n",
            self.w3_norm, self.disc[0], self.disc[1], self.disc[2], self.iterations
        )
    }
}

const CALIBRATION_METHOD: DiscMethod = DiscMethod::Ascent {
    restarts: 8,
    iters: 200,
};

/// Three-source regression instance where the target is the even mixture
/// of sources 1 and 2 while source 3 is as far from the target (in label
/// discrepancy) as the other two.
///
/// All domains share `x ~ N(0, I_2)`; the training domains reuse one draw
/// of the inputs so that their discrepancies differ only through the
/// labels. Source 1 uses `w_1 = (a, 0)`, source 2 `w_2 = (-a, 0)` and
/// source 3 `w_3 = (0, t)`, with `t` found by bisection so that the
/// measured discrepancies agree within 1%. Target examples alternate
/// between the rules of sources 1 and 2.
pub fn gen_example1(n: usize, seed: u64) -> Result<Example1> {
    if n < 100 {
        return Err(MsaError::Config(format!("example1 needs n >= 100, got {n}")));
    }
    let w1 = vec![EXAMPLE1_A, 0.0];
    let w2 = vec![-EXAMPLE1_A, 0.0];
    let base = [w1.clone(), w2.clone()];
    let xs = gaussian_rows(&mut rng::derived(seed, 0), n, EXAMPLE1_DIM, 1.0);
    let alternating: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let gen = |stream: u64, id: usize, domains: &[usize], w: &[Vec<f64>]| {
        label_rows(&mut rng::derived(seed, stream), id, w, domains, xs.clone(), EXAMPLE1_SIGMA)
    };
    let s1 = gen(1, 1, &vec![0; n], &base)?;
    let s2 = gen(2, 2, &vec![1; n], &base)?;
    let target = gen(4, 0, &alternating, &base)?;
    let target_test = linear_sample(&mut rng::derived(seed, 5), 0, &base, &alternating, 1.0, EXAMPLE1_SIGMA)?;
    // source 3 keeps its noise draw fixed so the discrepancy is continuous in t
    let s3_at = |t: f64| gen(3, 3, &vec![0; n], &[vec![0.0, t]]);

    let loss = example1_loss();
    let disc_to_target = |src: &Dataset, s: u64| -> Result<f64> {
        let a = WeightedView::uniform(&target);
        let b = WeightedView::uniform(src);
        Ok(disc_views(&a, &b, &loss, CALIBRATION_METHOD, seed ^ s, None)?.value)
    };
    let d1 = disc_to_target(&s1, 1)?;
    let d2 = disc_to_target(&s2, 2)?;
    let goal = 0.5 * (d1 + d2);

    let (mut lo, mut hi) = (0.0, 4.0 * EXAMPLE1_A);
    let mut iterations = 0;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    while iterations < 60 {
        iterations += 1;
        let t = 0.5 * (lo + hi);
        let d3 = disc_to_target(&s3_at(t)?, 3)?;
        let rel = (d3 - goal).abs() / goal;
        if rel < best.0 {
            best = (rel, t, d3);
        }
        if rel <= 0.01 {
            break;
        }
        if d3 < goal {
            lo = t;
        } else {
            hi = t;
        }
    }
    if best.0 > 0.05 {
        return Err(MsaError::Calibration {
            iterations,
            detail: format!(
                "disc(D0, D3) = {:.6} vs target {:.6} at |w3| = {:.6}",
                best.2, goal, best.1
            ),
        });
    }
    let t = best.1;
    let collection = DomainCollection::new(target, vec![s1, s2, s3_at(t)?])?;
    Ok(Example1 {
        collection,
        target_test,
        weights: [w1, w2, vec![0.0, t]],
        calibration: CalibrationReport {
            w3_norm: t,
            disc: [d1, d2, best.2],
            iterations,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erm::{train_dataset, TrainConfig};

    fn small_spec(seed: u64) -> ToyRegressionSpec {
        ToyRegressionSpec {
            d: 10,
            m_k: 500,
            m0: 200,
            seed,
            ..ToyRegressionSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, oa) = gen_toy_regression(&small_spec(3)).unwrap();
        let (b, ob) = gen_toy_regression(&small_spec(3)).unwrap();
        assert_eq!(a.target().to_text(), b.target().to_text());
        assert_eq!(a.source(2).to_text(), b.source(2).to_text());
        assert_eq!(oa, ob);
        let (c, _) = gen_toy_regression(&small_spec(4)).unwrap();
        assert_ne!(a.source(0).to_text(), c.source(0).to_text());
    }

    #[test]
    fn noiseless_source_recovers_its_weights() {
        let spec = ToyRegressionSpec {
            sigma_sq: 0.0,
            ..small_spec(1)
        };
        let (coll, oracle) = gen_toy_regression(&spec).unwrap();
        let h = train_dataset(coll.source(1), &LossSpec::squared(0.0), &TrainConfig::default()).unwrap();
        for (a, b) in h.weights().iter().zip(&oracle.weights[1]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn features_have_unit_expected_norm() {
        let spec = ToyRegressionSpec {
            d: 50,
            m_k: 4000,
            ..small_spec(2)
        };
        let (coll, _) = gen_toy_regression(&spec).unwrap();
        let src = coll.source(0);
        let mean: f64 = src.iter().map(|(x, _)| dot(x, x)).sum::<f64>() / src.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn closed_form_target_loss_matches_sample() {
        let (coll, oracle) = gen_toy_regression(&small_spec(5)).unwrap();
        let h = train_dataset(coll.source(0), &LossSpec::squared(1e-3), &TrainConfig::default()).unwrap();
        let spec = small_spec(5);
        let (test, _) = toy_target_sample(&spec, &oracle.weights, 200_000, 99).unwrap();
        let sample = crate::loss::empirical_loss(&h, &test, None, &LossSpec::squared(1e-3)).unwrap();
        let exact = oracle.target_loss(&h);
        assert!((sample - exact).abs() < 0.02 * exact, "{sample} vs {exact}");
    }

    #[test]
    fn example1_is_calibrated() {
        let ex = gen_example1(1000, 2).unwrap();
        let c = &ex.calibration;
        let goal = 0.5 * (c.disc[0] + c.disc[1]);
        assert!((c.disc[2] - goal).abs() <= 0.05 * goal);
        assert!((c.disc[0] - c.disc[1]).abs() <= 0.1 * goal);
        assert!(c.w3_norm > 0.5 && c.w3_norm < 1.5, "{}", c.w3_norm);
        assert_eq!(ex.collection.p(), 3);
    }

    #[test]
    fn example1_target_is_the_even_mixture() {
        let ex = gen_example1(1000, 3).unwrap();
        let coll = &ex.collection;
        let srcs: Vec<&Dataset> = coll.sources().iter().collect();
        let mixed = WeightedView::mixture(&srcs, &[0.5, 0.5, 0.0]).unwrap();
        let target = WeightedView::uniform(coll.target());
        let d = disc_views(&target, &mixed, &example1_loss(), CALIBRATION_METHOD, 9, None).unwrap();
        let pairwise = ex.calibration.disc.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(d.value <= 0.1 * pairwise, "{} vs {pairwise}", d.value);
    }

    #[test]
    fn bounded_instance_is_bounded() {
        let inst = gen_bounded_regression(3, 2, 50, 20, 100, 4).unwrap();
        let all = inst.collection.sources().iter().chain([inst.collection.target(), &inst.population_target]);
        for data in all {
            for (x, y) in data.iter() {
                assert!(x.iter().map(|v| v * v).sum::<f64>() <= 1.0);
                assert!(y.as_real().unwrap().abs() <= 1.0);
            }
        }
        assert_eq!(inst.population_sources.len(), 3);
        assert_eq!(inst.collection.m0(), 20);
    }

    #[test]
    fn example1_rejects_small_n() {
        assert!(matches!(gen_example1(50, 0), Err(MsaError::Config(_))));
    }
}
