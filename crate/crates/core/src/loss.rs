//! Bounded losses and empirical risk.
//!
//! Every per-example loss is clipped at `bound_m`, so all reported losses
//! lie in `[0, M]`. Training objectives (see `erm`) use the raw, unclipped
//! squared or log loss plus a ridge term.

use crate::data::{Dataset, Label, Task, WeightedView};
use crate::error::{MsaError, Result};
use crate::hypothesis::{softmax_in_place, Hypothesis, Prediction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Squared,
    /// Multinomial log loss.
    Log,
    /// Evaluation only; not differentiable.
    ZeroOne,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Squared => "squared",
            LossKind::Log => "log",
            LossKind::ZeroOne => "zero-one",
        }
    }
}

/// Loss kind plus the constants the algorithms and diagnostics rely on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Upper bound `M`; losses are clipped here.
    pub bound_m: f64,
    pub lipschitz_l: f64,
    /// Strong convexity `mu` of the training objective.
    pub strong_convexity_mu: f64,
    pub gradient_bound_g: f64,
    /// Ridge coefficient on the weights (never on the intercept).
    pub regularization: f64,
    /// Radius `B` of the parameter ball defining the hypothesis class.
    pub norm_ball_b: f64,
    /// Whether hypotheses carry an intercept. Without one the intercept is pinned at 0.
    pub fit_intercept: bool,
}

impl LossSpec {
    pub fn squared(regularization: f64) -> Self {
        LossSpec {
            kind: LossKind::Squared,
            bound_m: 1e3,
            lipschitz_l: 1.0,
            strong_convexity_mu: 2.0 * regularization,
            gradient_bound_g: 1.0,
            regularization,
            norm_ball_b: 1e3,
            fit_intercept: true,
        }
    }

    pub fn log(regularization: f64) -> Self {
        LossSpec {
            kind: LossKind::Log,
            bound_m: 10.0,
            strong_convexity_mu: 2.0 * regularization,
            ..LossSpec::squared(regularization)
        }
    }

    pub fn zero_one() -> Self {
        LossSpec {
            kind: LossKind::ZeroOne,
            bound_m: 1.0,
            strong_convexity_mu: 0.0,
            ..LossSpec::squared(0.0)
        }
    }

    pub fn with_bound(mut self, m: f64) -> Self {
        self.bound_m = m;
        self
    }

    pub fn with_norm_ball(mut self, b: f64) -> Self {
        self.norm_ball_b = b;
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.fit_intercept = false;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.strong_convexity_mu = mu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bound_m", self.bound_m),
            ("lipschitz_l", self.lipschitz_l),
            ("gradient_bound_g", self.gradient_bound_g),
            ("norm_ball_b", self.norm_ball_b),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MsaError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.regularization >= 0.0) || !(self.strong_convexity_mu >= 0.0) {
            return Err(MsaError::Config(
                "regularization and strong_convexity_mu must be nonnegative".into(),
            ));
        }
        if self.regularization > 0.0 && self.strong_convexity_mu < self.regularization {
            return Err(MsaError::Config(format!(
                "strong_convexity_mu ({}) must be >= regularization ({})",
                self.strong_convexity_mu, self.regularization
            )));
        }
        Ok(())
    }

    pub fn check_task(&self, task: Task) -> Result<()> {
        match (self.kind, task) {
            (LossKind::Squared, Task::Regression) => Ok(()),
            (LossKind::Log | LossKind::ZeroOne, Task::Classification { .. }) => Ok(()),
            (kind, task) => Err(MsaError::TaskMismatch(format!(
                "{} loss cannot be used for {}",
                kind.name(),
                task.name()
            ))),
        }
    }
}

fn argmax_lowest(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Loss of one prediction, clipped to `[0, M]`.
pub fn example_loss(loss: &LossSpec, prediction: &Prediction, label: Label) -> Result<f64> {
    let raw = match (loss.kind, prediction, label) {
        (LossKind::Squared, Prediction::Real(p), Label::Real(y)) => (p - y) * (p - y),
        (LossKind::Log, Prediction::Dist(p), Label::Class(y)) if y < p.len() => -p[y].ln(),
        (LossKind::ZeroOne, Prediction::Dist(p), Label::Class(y)) if y < p.len() => {
            if argmax_lowest(p) == y {
                0.0
            } else {
                1.0
            }
        }
        (kind, pred, label) => {
            return Err(MsaError::TaskMismatch(format!(
                "{} loss cannot score prediction {pred:?} against label {label:?}",
                kind.name()
            )))
        }
    };
    Ok(clip(raw, loss.bound_m))
}

fn clip(raw: f64, m: f64) -> f64 {
    if raw.is_nan() || raw > m {
        m
    } else {
        raw.max(0.0)
    }
}

/// `sum_i w_i loss(h(x_i), y_i)`; `weights = None` means uniform `1/n`.
pub fn empirical_loss(
    h: &Hypothesis,
    data: &Dataset,
    weights: Option<&[f64]>,
    loss: &LossSpec,
) -> Result<f64> {
    if h.dim() != data.dim() {
        return Err(MsaError::DimensionMismatch {
            expected: h.dim(),
            actual: data.dim(),
        });
    }
    match weights {
        None => {
            let view = WeightedView::uniform(data);
            view_loss(h, &view, loss)
        }
        Some(w) => {
            if w.len() != data.len() {
                return Err(MsaError::LengthMismatch {
                    what: "weight vector",
                    expected: data.len(),
                    actual: w.len(),
                });
            }
            let view = WeightedView::new(vec![(data, w.to_vec())])?;
            view_loss(h, &view, loss)
        }
    }
}

/// Clipped loss under an arbitrary weighted view.
pub fn view_loss(h: &Hypothesis, view: &WeightedView<'_>, loss: &LossSpec) -> Result<f64> {
    if h.dim() != view.dim() {
        return Err(MsaError::DimensionMismatch {
            expected: h.dim(),
            actual: view.dim(),
        });
    }
    let mut total = 0.0;
    for (x, y, w) in view.iter() {
        total += w * example_loss(loss, &h.predict_unchecked(x), y)?;
    }
    Ok(total)
}

/// Per-example clipped losses, in dataset order.
pub fn example_losses(h: &Hypothesis, data: &Dataset, loss: &LossSpec) -> Result<Vec<f64>> {
    data.iter()
        .map(|(x, y)| example_loss(loss, &h.predict(x)?, y))
        .collect()
}

/// Raw (unclipped) loss of affine scores and, optionally, its gradient with
/// respect to the scores. `scores` is overwritten for the log loss.
pub(crate) fn raw_loss_and_score_grad(
    kind: LossKind,
    scores: &mut [f64],
    label: Label,
    score_grad: Option<&mut [f64]>,
) -> f64 {
    match (kind, label) {
        (LossKind::Squared, Label::Real(y)) => {
            let r = scores[0] - y;
            if let Some(g) = score_grad {
                g[0] = 2.0 * r;
            }
            r * r
        }
        (LossKind::Log, Label::Class(y)) => {
            // log-sum-exp for the value, softmax for the gradient
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            let value = lse - scores[y];
            if let Some(g) = score_grad {
                softmax_in_place(scores);
                for (c, gc) in g.iter_mut().enumerate() {
                    *gc = scores[c] - if c == y { 1.0 } else { 0.0 };
                }
            }
            value
        }
        _ => unreachable!("raw loss requested for a non-differentiable or mismatched loss"),
    }
}

/// Shapes and helpers for flat parameter vectors laid out as in
/// [`Hypothesis::to_params`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct ParamShape {
    pub outputs: usize,
    pub dim: usize,
}

impl ParamShape {
    pub fn of(task: Task, dim: usize) -> Self {
        ParamShape {
            outputs: task.outputs(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.outputs * (self.dim + 1)
    }

    pub fn scores(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        let stride = self.dim + 1;
        for (c, slot) in out.iter_mut().enumerate() {
            let block = &theta[c * stride..(c + 1) * stride];
            *slot = block[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + block[self.dim];
        }
    }

    /// Squared norm of the weights only (intercepts excluded).
    pub fn weight_norm_sq(&self, theta: &[f64]) -> f64 {
        let stride = self.dim + 1;
        theta
            .chunks_exact(stride)
            .map(|b| b[..self.dim].iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Weighted loss of raw parameters over a view. With `clip = Some(M)` each
/// example loss is clipped and contributes zero gradient once clipped.
/// The gradient, if requested, is accumulated (added) into `grad`.
pub(crate) fn view_loss_and_grad(
    kind: LossKind,
    shape: ParamShape,
    theta: &[f64],
    view: &WeightedView<'_>,
    clip_at: Option<f64>,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let stride = shape.dim + 1;
    let mut scores = vec![0.0; shape.outputs];
    let mut sg = vec![0.0; shape.outputs];
    let mut total = 0.0;
    for (x, y, w) in view.iter() {
        shape.scores(theta, x, &mut scores);
        let want_grad = grad.is_some();
        let raw = raw_loss_and_score_grad(kind, &mut scores, y, want_grad.then_some(&mut sg[..]));
        let (value, active) = match clip_at {
            Some(m) if raw > m => (m, false),
            _ => (raw, true),
        };
        total += w * value;
        if let (Some(g), true) = (grad.as_deref_mut(), active) {
            for c in 0..shape.outputs {
                let coef = w * sg[c];
                let block = &mut g[c * stride..(c + 1) * stride];
                for (gj, xj) in block[..shape.dim].iter_mut().zip(x) {
                    *gj += coef * xj;
                }
                block[shape.dim] += coef;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledExample;

    #[test]
    fn squared_exact_is_zero() {
        let l = LossSpec::squared(0.0);
        assert_eq!(example_loss(&l, &Prediction::Real(2.0), Label::Real(2.0)).unwrap(), 0.0);
    }

    #[test]
    fn zero_one_on_confident_prediction() {
        let l = LossSpec::zero_one();
        let p = Prediction::Dist(vec![0.75, 0.25]);
        assert_eq!(example_loss(&l, &p, Label::Class(0)).unwrap(), 0.0);
        assert_eq!(example_loss(&l, &p, Label::Class(1)).unwrap(), 1.0);
    }

    #[test]
    fn zero_one_ties_go_to_lowest_class() {
        let l = LossSpec::zero_one();
        let p = Prediction::Dist(vec![0.5, 0.5]);
        assert_eq!(example_loss(&l, &p, Label::Class(0)).unwrap(), 0.0);
        assert_eq!(example_loss(&l, &p, Label::Class(1)).unwrap(), 1.0);
    }

    #[test]
    fn squared_is_clipped_at_bound() {
        let l = LossSpec::squared(0.0).with_bound(1.0);
        let unclipped = LossSpec::squared(0.0).with_bound(1e9);
        let raw = example_loss(&unclipped, &Prediction::Real(5.0), Label::Real(0.0)).unwrap();
        assert_eq!(raw, 25.0);
        assert!(raw > l.bound_m);
        assert_eq!(example_loss(&l, &Prediction::Real(5.0), Label::Real(0.0)).unwrap(), 1.0);
    }

    #[test]
    fn log_loss_of_zero_probability_is_clipped() {
        let l = LossSpec::log(0.0);
        let v = example_loss(&l, &Prediction::Dist(vec![1.0, 0.0]), Label::Class(1)).unwrap();
        assert_eq!(v, l.bound_m);
    }

    #[test]
    fn mismatched_task_is_an_error() {
        let l = LossSpec::squared(0.0);
        assert!(example_loss(&l, &Prediction::Dist(vec![1.0]), Label::Class(0)).is_err());
    }

    fn losses_dataset(targets: &[f64]) -> Dataset {
        // h = 0 on x = 0, so loss_i = y_i^2
        let ex = targets
            .iter()
            .map(|y| LabeledExample::new(vec![0.0], Label::Real(*y)))
            .collect();
        Dataset::new(0, Task::Regression, 1, ex).unwrap()
    }

    #[test]
    fn empirical_loss_weighting() {
        let l = LossSpec::squared(0.0);
        let h = Hypothesis::regression(vec![0.0], 0.0);
        let two = losses_dataset(&[0.0, 1.0]);
        assert_eq!(empirical_loss(&h, &two, None, &l).unwrap(), 0.5);

        let three = losses_dataset(&[0.0, 1.0, -1.0]);
        let w = [0.5, 0.25, 0.25];
        let got = empirical_loss(&h, &three, Some(&w), &l).unwrap();
        let mut loop_sum = 0.0;
        for (i, y) in [0.0f64, 1.0, -1.0].iter().enumerate() {
            loop_sum += w[i] * y * y;
        }
        assert_eq!(got, 0.5);
        assert_eq!(got, loop_sum);

        let err = empirical_loss(&h, &three, Some(&[0.5, 0.5]), &l).unwrap_err();
        assert!(matches!(err, MsaError::LengthMismatch { .. }));
    }

    #[test]
    fn perfect_fit_has_zero_empirical_loss() {
        let h = Hypothesis::regression(vec![2.0, -1.0], 0.5);
        let ex = (0..10)
            .map(|i| {
                let x = vec![i as f64, (i * i) as f64 / 10.0];
                let y = 2.0 * x[0] - x[1] + 0.5;
                LabeledExample::new(x, Label::Real(y))
            })
            .collect();
        let d = Dataset::new(0, Task::Regression, 2, ex).unwrap();
        assert_eq!(empirical_loss(&h, &d, None, &LossSpec::squared(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let task = Task::Classification { classes: 3 };
        let ex = vec![
            LabeledExample::new(vec![0.3, -1.2], Label::Class(0)),
            LabeledExample::new(vec![1.1, 0.4], Label::Class(2)),
            LabeledExample::new(vec![-0.7, 0.9], Label::Class(1)),
        ];
        let d = Dataset::new(0, task, 2, ex).unwrap();
        let view = WeightedView::uniform(&d);
        let shape = ParamShape::of(task, 2);
        let theta: Vec<f64> = (0..shape.len()).map(|i| 0.1 * i as f64 - 0.4).collect();
        let mut g = vec![0.0; shape.len()];
        view_loss_and_grad(LossKind::Log, shape, &theta, &view, None, Some(&mut g));
        for j in 0..shape.len() {
            let h = 1e-6;
            let mut tp = theta.clone();
            tp[j] += h;
            let mut tm = theta.clone();
            tm[j] -= h;
            let fd = (view_loss_and_grad(LossKind::Log, shape, &tp, &view, None, None)
                - view_loss_and_grad(LossKind::Log, shape, &tm, &view, None, None))
                / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-8, "coord {j}: {fd} vs {}", g[j]);
        }
    }
}
