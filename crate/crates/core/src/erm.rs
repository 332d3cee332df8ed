//! Weighted empirical risk minimization over affine hypotheses.
//!
//! Squared loss is solved exactly through the weighted ridge normal
//! equations; the multinomial log loss runs deterministic full-batch
//! gradient descent. Both minimize the raw (unclipped) loss plus
//! `regularization * ||W||^2`; the intercept is never penalized. The result
//! is finally projected onto the parameter ball of radius `norm_ball_b`.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, DomainCollection, Task, WeightedView};
use crate::error::{MsaError, Result};
use crate::hypothesis::Hypothesis;
use crate::loss::{view_loss_and_grad, LossKind, LossSpec, ParamShape};
use crate::simplex::{mix_weights, MixtureWeight};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Gradient-norm stopping threshold.
    pub tol: f64,
    /// Fixed step; `None` uses `1 / smoothness` estimated from the data.
    pub step_size: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 5000,
            tol: 1e-8,
            step_size: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(MsaError::Config("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(MsaError::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0) {
                return Err(MsaError::Config(format!("step_size must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// Unnormalized second moments of one dataset over augmented inputs
/// `[x, 1]` (or `x` without an intercept).
#[derive(Clone, Debug)]
pub struct SecondMoments {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

pub(crate) fn augmented_len(dim: usize, intercept: bool) -> usize {
    dim + usize::from(intercept)
}

impl SecondMoments {
    pub fn from_dataset(data: &Dataset, intercept: bool) -> Self {
        let q = augmented_len(data.dim(), intercept);
        let n = data.len();
        let mut x = DMatrix::<f64>::zeros(n, q);
        let mut y = DVector::<f64>::zeros(n);
        for (i, (feat, label)) in data.iter().enumerate() {
            for (j, v) in feat.iter().enumerate() {
                x[(i, j)] = *v;
            }
            if intercept {
                x[(i, q - 1)] = 1.0;
            }
            y[i] = label.as_real().unwrap_or(0.0);
        }
        SecondMoments {
            xtx: x.tr_mul(&x),
            xty: x.tr_mul(&y),
            yty: y.dot(&y),
            n,
        }
    }
}

/// Maps augmented coefficients to hypothesis parameters `[w, b]`.
pub(crate) fn params_from_augmented(dim: usize, intercept: bool, beta: &[f64]) -> Vec<f64> {
    let mut theta = beta[..dim].to_vec();
    theta.push(if intercept { beta[dim] } else { 0.0 });
    theta
}

pub(crate) fn augmented_from_params(dim: usize, intercept: bool, theta: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        augmented_len(dim, intercept),
        theta[..augmented_len(dim, intercept)].iter().copied(),
    )
}

/// Ridge penalty matrix: `reg` on the weights, 0 on the intercept.
pub(crate) fn ridge_diag(dim: usize, intercept: bool, reg: f64) -> DMatrix<f64> {
    let q = augmented_len(dim, intercept);
    let mut d = DMatrix::zeros(q, q);
    for j in 0..dim {
        d[(j, j)] = reg;
    }
    d
}

pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, reg: f64) -> Result<DVector<f64>> {
    match a.cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => Err(MsaError::Numerical(format!(
            "weighted normal equations are singular (regularization = {reg}); \
             use regularization > 0"
        ))),
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..100 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - est).abs() <= 1e-10 * next {
            est = next;
            break;
        }
        est = next;
    }
    // power iteration approaches from below; pad so 1/L stays a safe step
    est * 1.05
}

/// Trains on a fixed list of datasets for any mixture of them. Second
/// moments are computed once, so repeated calls with different mixture
/// weights (a cover sweep) cost one small linear solve each for squared loss.
#[derive(Clone, Debug)]
pub struct MixtureTrainer<'a> {
    datasets: Vec<&'a Dataset>,
    moments: Vec<SecondMoments>,
    loss: LossSpec,
    cfg: TrainConfig,
    task: Task,
    dim: usize,
}

impl<'a> MixtureTrainer<'a> {
    pub fn new(datasets: Vec<&'a Dataset>, loss: &LossSpec, cfg: &TrainConfig) -> Result<Self> {
        let first = *datasets
            .first()
            .ok_or_else(|| MsaError::InvalidData("no datasets to train on".into()))?;
        loss.validate()?;
        cfg.validate()?;
        loss.check_task(first.task())?;
        if loss.kind == LossKind::ZeroOne {
            return Err(MsaError::Config("zero-one loss is evaluation-only".into()));
        }
        for d in &datasets {
            if d.dim() != first.dim() {
                return Err(MsaError::DimensionMismatch {
                    expected: first.dim(),
                    actual: d.dim(),
                });
            }
        }
        let moments = datasets
            .iter()
            .map(|d| SecondMoments::from_dataset(d, loss.fit_intercept))
            .collect();
        Ok(MixtureTrainer {
            task: first.task(),
            dim: first.dim(),
            datasets,
            moments,
            loss: *loss,
            cfg: *cfg,
        })
    }

    pub fn for_sources(coll: &'a DomainCollection, loss: &LossSpec, cfg: &TrainConfig) -> Result<Self> {
        MixtureTrainer::new(coll.sources().iter().collect(), loss, cfg)
    }

    pub fn datasets(&self) -> &[&'a Dataset] {
        &self.datasets
    }

    pub fn moments(&self) -> &[SecondMoments] {
        &self.moments
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    /// `sum_k (mass_k / n_k) S_k`, skipping zero-mass datasets.
    pub fn mixed_gram(&self, mass: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let q = augmented_len(self.dim, self.loss.fit_intercept);
        let mut a = DMatrix::zeros(q, q);
        let mut b = DVector::zeros(q);
        for (mom, &l) in self.moments.iter().zip(mass) {
            if l == 0.0 {
                continue;
            }
            let scale = l / mom.n as f64;
            a += &mom.xtx * scale;
            b += &mom.xty * scale;
        }
        (a, b)
    }

    /// Minimizer of the regularized loss under the mixture putting mass
    /// `mass[k]` uniformly on dataset `k`.
    pub fn train(&self, mass: &[f64]) -> Result<Hypothesis> {
        if mass.len() != self.datasets.len() {
            return Err(MsaError::LengthMismatch {
                what: "mixture weight",
                expected: self.datasets.len(),
                actual: mass.len(),
            });
        }
        MixtureWeight::new(mass.to_vec())?;
        let (gram, xty) = self.mixed_gram(mass);
        let mut h = match self.loss.kind {
            LossKind::Squared => {
                let reg = self.loss.regularization;
                let a = gram + ridge_diag(self.dim, self.loss.fit_intercept, reg);
                let beta = solve_spd(a, &xty, reg)?;
                let theta = params_from_augmented(self.dim, self.loss.fit_intercept, beta.as_slice());
                Hypothesis::from_params(self.task, self.dim, &theta)?
            }
            LossKind::Log => {
                let view = WeightedView::mixture(&self.datasets, mass)?;
                let smooth = 0.5 * max_eigenvalue(&gram) + 2.0 * self.loss.regularization;
                gradient_descent(&view, &self.loss, &self.cfg, smooth, None)?
            }
            LossKind::ZeroOne => unreachable!("rejected in constructor"),
        };
        h.project_to_ball(self.loss.norm_ball_b);
        Ok(h)
    }
}

/// Regularized training objective `L_view(h) + reg * ||W||^2` with the raw loss.
pub fn training_objective(h: &Hypothesis, view: &WeightedView<'_>, loss: &LossSpec) -> f64 {
    let shape = ParamShape::of(h.task(), h.dim());
    let theta = h.to_params();
    view_loss_and_grad(loss.kind, shape, &theta, view, None, None)
        + loss.regularization * shape.weight_norm_sq(&theta)
}

pub(crate) fn objective_and_grad(
    view: &WeightedView<'_>,
    loss: &LossSpec,
    shape: ParamShape,
    theta: &[f64],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let value = view_loss_and_grad(loss.kind, shape, theta, view, None, Some(grad));
    let stride = shape.dim + 1;
    for (c, block) in grad.chunks_exact_mut(stride).enumerate() {
        for j in 0..shape.dim {
            block[j] += 2.0 * loss.regularization * theta[c * stride + j];
        }
        if !loss.fit_intercept {
            block[shape.dim] = 0.0;
        }
    }
    value + loss.regularization * shape.weight_norm_sq(theta)
}

pub(crate) fn gradient_descent(
    view: &WeightedView<'_>,
    loss: &LossSpec,
    cfg: &TrainConfig,
    smoothness: f64,
    warm_start: Option<&[f64]>,
) -> Result<Hypothesis> {
    let shape = ParamShape::of(view.task(), view.dim());
    let step = cfg.step_size.unwrap_or_else(|| 1.0 / smoothness.max(1e-12));
    let mut theta = warm_start.map_or_else(|| vec![0.0; shape.len()], <[f64]>::to_vec);
    let mut grad = vec![0.0; shape.len()];
    for _ in 0..cfg.max_iters {
        objective_and_grad(view, loss, shape, &theta, &mut grad);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !gnorm.is_finite() {
            return Err(MsaError::Numerical("gradient descent diverged".into()));
        }
        if gnorm <= cfg.tol {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= step * g;
        }
    }
    Hypothesis::from_params(view.task(), view.dim(), &theta)
}

/// Trains on an arbitrary weighted view, example by example.
pub fn train_view(view: &WeightedView<'_>, loss: &LossSpec, cfg: &TrainConfig) -> Result<Hypothesis> {
    loss.validate()?;
    cfg.validate()?;
    loss.check_task(view.task())?;
    let dim = view.dim();
    let intercept = loss.fit_intercept;
    let q = augmented_len(dim, intercept);
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut xty = DVector::<f64>::zeros(q);
    let mut aug = vec![0.0; q];
    for (x, y, w) in view.iter() {
        aug[..dim].copy_from_slice(x);
        if intercept {
            aug[dim] = 1.0;
        }
        for i in 0..q {
            for j in 0..q {
                gram[(i, j)] += w * aug[i] * aug[j];
            }
            xty[i] += w * aug[i] * y.as_real().unwrap_or(0.0);
        }
    }
    let mut h = match loss.kind {
        LossKind::Squared => {
            let a = gram + ridge_diag(dim, intercept, loss.regularization);
            let beta = solve_spd(a, &xty, loss.regularization)?;
            Hypothesis::from_params(view.task(), dim, &params_from_augmented(dim, intercept, beta.as_slice()))?
        }
        LossKind::Log => {
            let smooth = 0.5 * max_eigenvalue(&gram) + 2.0 * loss.regularization;
            gradient_descent(view, loss, cfg, smooth, None)?
        }
        LossKind::ZeroOne => return Err(MsaError::Config("zero-one loss is evaluation-only".into())),
    };
    h.project_to_ball(loss.norm_ball_b);
    Ok(h)
}

/// ERM under per-example weights laid out over all source examples in order.
pub fn train_weighted(
    coll: &DomainCollection,
    weights: &[f64],
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<Hypothesis> {
    let sources: Vec<&Dataset> = coll.sources().iter().collect();
    let view = WeightedView::from_flat(&sources, weights)?;
    train_view(&view, loss, cfg)
}

/// ERM on the mixed empirical distribution `sum_k lambda_k D_k`.
pub fn train_on_mixture(
    coll: &DomainCollection,
    lambda: &MixtureWeight,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<Hypothesis> {
    mix_weights(lambda, coll)?;
    MixtureTrainer::for_sources(coll, loss, cfg)?.train(lambda.as_slice())
}

/// ERM on one dataset with uniform weights.
pub fn train_dataset(data: &Dataset, loss: &LossSpec, cfg: &TrainConfig) -> Result<Hypothesis> {
    MixtureTrainer::new(vec![data], loss, cfg)?.train(&[1.0])
}
