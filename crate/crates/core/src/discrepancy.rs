//! Label-discrepancy `disc_H(D, D') = max_{h in H} |L_D(h) - L_D'(h)|` for
//! affine hypotheses in the parameter ball of radius `B`.
//!
//! Both estimators return certified lower bounds: the reported value is the
//! gap actually achieved by the returned witness hypothesis.

use rayon::prelude::*;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, DomainCollection, Task, WeightedView};
use crate::error::{MsaError, Result};
use crate::hypothesis::Hypothesis;
use crate::loss::{view_loss, view_loss_and_grad, LossKind, LossSpec, ParamShape};
use crate::rng;

const MAX_GRID_POINTS: usize = 4_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiscMethod {
    /// Multi-restart projected gradient ascent on the squared gap.
    Ascent { restarts: usize, iters: usize },
    /// Exhaustive scan of a parameter lattice with the given spacing.
    Grid { resolution: f64 },
}

impl Default for DiscMethod {
    fn default() -> Self {
        DiscMethod::Ascent {
            restarts: 16,
            iters: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiscEstimate {
    pub value: f64,
    pub method: DiscMethod,
    pub witness: Hypothesis,
    pub restarts_used: usize,
}

/// Lattice `{j * resolution}` of parameter vectors inside the norm ball.
///
/// Regression lattices cover `[w, b]` directly. Binary classification only
/// depends on the score difference `delta`, so the lattice covers `delta`
/// and maps it to the minimum-norm parameters `(delta / 2, -delta / 2)`;
/// the ball constraint becomes `||delta|| <= sqrt(2) B`.
#[derive(Clone, Debug)]
pub struct HypothesisGrid {
    task: Task,
    dim: usize,
    /// Flattened hypothesis parameter vectors, `param_len` each.
    params: Vec<f64>,
    param_len: usize,
}

impl HypothesisGrid {
    pub fn new(task: Task, dim: usize, loss: &LossSpec, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(MsaError::Config(format!("grid resolution must be > 0, got {resolution}")));
        }
        let classes = task.outputs();
        if dim > 3 || (matches!(task, Task::Classification { .. }) && classes > 2) {
            return Err(MsaError::Intractable(format!(
                "grid oracle needs d <= 3 and K <= 2, got d = {dim}, K = {classes}"
            )));
        }
        let free = dim + usize::from(loss.fit_intercept);
        let radius = match task {
            Task::Regression => loss.norm_ball_b,
            Task::Classification { .. } => std::f64::consts::SQRT_2 * loss.norm_ball_b,
        };
        let steps = (radius / resolution * (1.0 + 1e-12)).floor() as i64;
        let side = (2 * steps + 1) as f64;
        if side.powi(free as i32) > MAX_GRID_POINTS as f64 * 2.0 {
            return Err(MsaError::Intractable(format!(
                "grid with {free} free parameters and {side} values each is too large"
            )));
        }
        let shape = ParamShape::of(task, dim);
        let mut params = Vec::new();
        let mut idx = vec![-steps; free];
        let mut coords = vec![0.0; free];
        let mut count = 0usize;
        'outer: loop {
            for (c, i) in coords.iter_mut().zip(&idx) {
                *c = *i as f64 * resolution;
            }
            let norm = coords.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= radius * (1.0 + 1e-12) {
                count += 1;
                if count > MAX_GRID_POINTS {
                    return Err(MsaError::Intractable("grid too large".into()));
                }
                let mut delta = vec![0.0; dim + 1];
                delta[..dim].copy_from_slice(&coords[..dim]);
                if loss.fit_intercept {
                    delta[dim] = coords[dim];
                }
                match task {
                    Task::Regression => params.extend_from_slice(&delta),
                    Task::Classification { .. } => {
                        params.extend(delta.iter().map(|v| v / 2.0));
                        params.extend(delta.iter().map(|v| -v / 2.0));
                    }
                }
            }
            let mut k = free;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = -steps;
            }
            if free == 0 {
                break;
            }
        }
        Ok(HypothesisGrid {
            task,
            dim,
            params,
            param_len: shape.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.params.len() / self.param_len
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.params.chunks_exact(self.param_len)
    }

    pub fn hypothesis(&self, i: usize) -> Hypothesis {
        let theta = &self.params[i * self.param_len..(i + 1) * self.param_len];
        Hypothesis::from_params(self.task, self.dim, theta).expect("grid parameters have the right shape")
    }

    /// Clipped loss of every grid hypothesis under `view`, in grid order.
    pub fn losses(&self, view: &WeightedView<'_>, loss: &LossSpec) -> Vec<f64> {
        let shape = ParamShape::of(self.task, self.dim);
        self.params
            .par_chunks_exact(self.param_len)
            .map(|theta| clipped_loss(loss, shape, theta, view))
            .collect()
    }
}

fn clipped_loss(loss: &LossSpec, shape: ParamShape, theta: &[f64], view: &WeightedView<'_>) -> f64 {
    match loss.kind {
        LossKind::ZeroOne => {
            let h = Hypothesis::from_params(view.task(), shape.dim, theta).expect("shape");
            view_loss(&h, view, loss).expect("task checked")
        }
        kind => view_loss_and_grad(kind, shape, theta, view, Some(loss.bound_m), None),
    }
}

fn check_views(a: &WeightedView<'_>, b: &WeightedView<'_>, loss: &LossSpec) -> Result<()> {
    loss.validate()?;
    if a.dim() != b.dim() {
        return Err(MsaError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.task() != b.task() {
        return Err(MsaError::TaskMismatch("discrepancy between different tasks".into()));
    }
    loss.check_task(a.task())
}

fn certify(
    a: &WeightedView<'_>,
    b: &WeightedView<'_>,
    loss: &LossSpec,
    witness: Hypothesis,
    method: DiscMethod,
    restarts_used: usize,
) -> Result<DiscEstimate> {
    let value = (view_loss(&witness, a, loss)? - view_loss(&witness, b, loss)?).abs();
    Ok(DiscEstimate {
        value,
        method,
        witness,
        restarts_used,
    })
}

fn project(theta: &mut [f64], shape: ParamShape, loss: &LossSpec) {
    let stride = shape.dim + 1;
    if !loss.fit_intercept {
        for c in 0..shape.outputs {
            theta[c * stride + shape.dim] = 0.0;
        }
    }
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > loss.norm_ball_b {
        let s = loss.norm_ball_b / norm;
        theta.iter_mut().for_each(|v| *v *= s);
    }
}

struct GapEval<'v, 'a> {
    a: &'v WeightedView<'a>,
    b: &'v WeightedView<'a>,
    loss: LossSpec,
    shape: ParamShape,
}

impl GapEval<'_, '_> {
    /// Signed gap `L_a - L_b` and, if requested, its gradient.
    fn gap(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let m = Some(self.loss.bound_m);
        match grad {
            None => {
                view_loss_and_grad(self.loss.kind, self.shape, theta, self.a, m, None)
                    - view_loss_and_grad(self.loss.kind, self.shape, theta, self.b, m, None)
            }
            Some(g) => {
                let mut gb = vec![0.0; g.len()];
                g.iter_mut().for_each(|v| *v = 0.0);
                let la = view_loss_and_grad(self.loss.kind, self.shape, theta, self.a, m, Some(g));
                let lb = view_loss_and_grad(self.loss.kind, self.shape, theta, self.b, m, Some(&mut gb));
                for (x, y) in g.iter_mut().zip(&gb) {
                    *x -= y;
                }
                if !self.loss.fit_intercept {
                    let stride = self.shape.dim + 1;
                    for c in 0..self.shape.outputs {
                        g[c * stride + self.shape.dim] = 0.0;
                    }
                }
                la - lb
            }
        }
    }

    /// Projected ascent on `gap^2` with normalized, self-tuning steps.
    fn ascend(&self, mut theta: Vec<f64>, iters: usize) -> (f64, Vec<f64>) {
        let n = theta.len();
        project(&mut theta, self.shape, &self.loss);
        let mut grad = vec![0.0; n];
        let mut gap = self.gap(&theta, Some(&mut grad));
        let mut step = 0.5 * self.loss.norm_ball_b;
        let min_step = 1e-12 * self.loss.norm_ball_b;
        let mut trial = vec![0.0; n];
        for _ in 0..iters {
            // d(gap^2) = 2 gap d(gap); the sign of gap picks the direction
            let gnorm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm == 0.0 || step < min_step {
                break;
            }
            let dir = gap.signum() / gnorm;
            let dir = if dir == 0.0 { 1.0 / gnorm } else { dir };
            for i in 0..n {
                trial[i] = theta[i] + step * dir * grad[i];
            }
            project(&mut trial, self.shape, &self.loss);
            let trial_gap = self.gap(&trial, None);
            if trial_gap.abs() > gap.abs() {
                theta.copy_from_slice(&trial);
                gap = self.gap(&theta, Some(&mut grad));
                step *= 1.25;
            } else {
                step *= 0.5;
            }
        }
        (gap.abs(), theta)
    }
}

/// Discrepancy between two weighted samples. `start`, if given, is used as
/// an additional deterministic starting point for the ascent.
pub fn disc_views(
    a: &WeightedView<'_>,
    b: &WeightedView<'_>,
    loss: &LossSpec,
    method: DiscMethod,
    seed: u64,
    start: Option<&Hypothesis>,
) -> Result<DiscEstimate> {
    check_views(a, b, loss)?;
    let task = a.task();
    let dim = a.dim();
    let shape = ParamShape::of(task, dim);
    match method {
        DiscMethod::Grid { resolution } => {
            let grid = HypothesisGrid::new(task, dim, loss, resolution)?;
            let la = grid.losses(a, loss);
            let lb = grid.losses(b, loss);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (i, (x, y)) in la.iter().zip(&lb).enumerate() {
                let gap = (x - y).abs();
                if gap > best.0 {
                    best = (gap, i);
                }
            }
            certify(a, b, loss, grid.hypothesis(best.1), method, 0)
        }
        DiscMethod::Ascent { restarts, iters } => {
            if loss.kind == LossKind::ZeroOne {
                return Err(MsaError::Config(
                    "ascent needs a differentiable loss; use the grid oracle for zero-one".into(),
                ));
            }
            if restarts == 0 && start.is_none() {
                return Err(MsaError::Config("ascent needs at least one restart".into()));
            }
            let eval = GapEval {
                a,
                b,
                loss: *loss,
                shape,
            };
            let mut starts: Vec<Vec<f64>> = (0..restarts)
                .map(|r| random_in_ball(shape, loss, seed, r as u64))
                .collect();
            if let Some(h) = start {
                starts.insert(0, h.to_params());
            }
            let results: Vec<(f64, Vec<f64>)> = starts
                .into_par_iter()
                .map(|theta| eval.ascend(theta, iters))
                .collect();
            let mut best = 0;
            for (i, r) in results.iter().enumerate() {
                if r.0 > results[best].0 {
                    best = i;
                }
            }
            let witness = Hypothesis::from_params(task, dim, &results[best].1)?;
            certify(a, b, loss, witness, method, results.len())
        }
    }
}

fn random_in_ball(shape: ParamShape, loss: &LossSpec, seed: u64, restart: u64) -> Vec<f64> {
    let mut rng = rng::derived(seed, restart);
    let mut theta: Vec<f64> = (0..shape.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let stride = shape.dim + 1;
    let mut free = shape.len();
    if !loss.fit_intercept {
        for c in 0..shape.outputs {
            theta[c * stride + shape.dim] = 0.0;
        }
        free -= shape.outputs;
    }
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let radius = loss.norm_ball_b * rng.random::<f64>().powf(1.0 / free.max(1) as f64);
    theta.iter_mut().for_each(|v| *v *= radius / norm);
    theta
}

/// `disc_H(a, b)` between two uniformly weighted datasets.
pub fn disc_estimate(
    a: &Dataset,
    b: &Dataset,
    loss: &LossSpec,
    method: DiscMethod,
    seed: u64,
) -> Result<DiscEstimate> {
    disc_views(&WeightedView::uniform(a), &WeightedView::uniform(b), loss, method, seed, None)
}

/// `disc_H(D_k, D_0)` for every source `k`, each with its own derived seed.
pub fn pairwise_disc_matrix(
    coll: &DomainCollection,
    loss: &LossSpec,
    method: DiscMethod,
    seed: u64,
) -> Result<Vec<DiscEstimate>> {
    coll.sources()
        .iter()
        .enumerate()
        .map(|(k, src)| {
            let s = seed ^ (k as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407);
            disc_estimate(src, coll.target(), loss, method, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, LabeledExample};

    fn points(rows: &[(f64, f64)]) -> Dataset {
        let ex = rows
            .iter()
            .map(|(x, y)| LabeledExample::new(vec![*x], Label::Real(*y)))
            .collect();
        Dataset::new(0, Task::Regression, 1, ex).unwrap()
    }

    #[test]
    fn identical_samples_have_zero_discrepancy() {
        let d = points(&[(0.5, 1.0), (-0.2, 0.3)]);
        let loss = LossSpec::squared(0.0).with_norm_ball(2.0);
        for m in [DiscMethod::Grid { resolution: 0.05 }, DiscMethod::default()] {
            assert_eq!(disc_estimate(&d, &d, &loss, m, 1).unwrap().value, 0.0);
        }
    }

    #[test]
    fn closed_form_one_dimensional_case() {
        // max_{|w|<=1} |(w-1)^2 - (w+1)^2| = max |4w| = 4
        let a = points(&[(1.0, 1.0)]);
        let b = points(&[(1.0, -1.0)]);
        let loss = LossSpec::squared(0.0).with_norm_ball(1.0).without_intercept();
        let est = disc_estimate(&a, &b, &loss, DiscMethod::Grid { resolution: 1e-3 }, 0).unwrap();
        assert!((est.value - 4.0).abs() <= 4e-3, "{}", est.value);
        let asc = disc_estimate(&a, &b, &loss, DiscMethod::default(), 0).unwrap();
        assert!((asc.value - 4.0).abs() <= 1e-9, "{}", asc.value);
    }

    #[test]
    fn grid_guard_rejects_large_inputs() {
        let ex = vec![LabeledExample::new(vec![0.0; 4], Label::Real(0.0))];
        let d = Dataset::new(0, Task::Regression, 4, ex).unwrap();
        let err = disc_estimate(&d, &d, &LossSpec::squared(0.0), DiscMethod::Grid { resolution: 0.1 }, 0)
            .unwrap_err();
        assert!(matches!(err, MsaError::Intractable(_)));
    }

    #[test]
    fn witness_certifies_value() {
        let a = points(&[(0.3, 1.0), (1.0, -0.4), (-0.8, 0.1)]);
        let b = points(&[(0.2, -0.5), (0.9, 0.9)]);
        let loss = LossSpec::squared(0.0).with_norm_ball(1.5);
        let est = disc_estimate(&a, &b, &loss, DiscMethod::default(), 3).unwrap();
        let direct = (crate::loss::empirical_loss(&est.witness, &a, None, &loss).unwrap()
            - crate::loss::empirical_loss(&est.witness, &b, None, &loss).unwrap())
        .abs();
        assert!((est.value - direct).abs() < 1e-9);
        assert!(est.witness.norm() <= 1.5 + 1e-12);
        assert_eq!(est.restarts_used, 16);
    }

    #[test]
    fn binary_classification_grid() {
        let task = Task::Classification { classes: 2 };
        let mk = |c| {
            Dataset::new(0, task, 1, vec![LabeledExample::new(vec![1.0], Label::Class(c))]).unwrap()
        };
        let loss = LossSpec::log(0.0).with_norm_ball(1.0);
        let est = disc_estimate(&mk(0), &mk(1), &loss, DiscMethod::Grid { resolution: 0.01 }, 0).unwrap();
        // witness delta maximizes |log-odds| = |delta_w + delta_b| subject to ||delta|| <= sqrt 2
        assert!(est.value > 1.9 && est.value <= 2.0 + 1e-9, "{}", est.value);
    }
}
