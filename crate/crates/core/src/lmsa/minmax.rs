use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, DomainCollection, WeightedView};
use crate::erm::{
    augmented_from_params, max_eigenvalue, objective_and_grad, params_from_augmented, ridge_diag,
    solve_spd, MixtureTrainer, SecondMoments, TrainConfig,
};
use crate::error::{MsaError, Result};
use crate::hypothesis::Hypothesis;
use crate::loss::{view_loss_and_grad, LossKind, LossSpec, ParamShape};
use crate::simplex::MixtureWeight;

#[derive(Clone, Debug, PartialEq)]
pub struct MinmaxConfig {
    /// Outer rounds of alternating updates.
    pub steps: usize,
    /// Base step of the exponentiated-gradient update on `lambda`,
    /// normalized AdaGrad-style by the accumulated gradient magnitudes.
    pub eta_lambda: f64,
    /// Step of the ascent on `gamma`, applied to the relative constraint violation.
    pub eta_gamma: f64,
    pub gamma0: f64,
    pub gamma_max: f64,
    /// Gradient steps per round for the per-example (log-loss) backend.
    pub inner_steps: usize,
    /// Relative constraint violation under which an iterate counts as feasible.
    pub feasibility_tol: f64,
    /// Starting mixture; uniform when `None`.
    pub lambda0: Option<MixtureWeight>,
}

impl Default for MinmaxConfig {
    fn default() -> Self {
        MinmaxConfig {
            steps: 300,
            eta_lambda: 0.5,
            eta_gamma: 100.0,
            gamma0: 1.0,
            gamma_max: 100.0,
            inner_steps: 10,
            feasibility_tol: 1e-3,
            lambda0: None,
        }
    }
}

impl MinmaxConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(MsaError::Config(format!("minmax.{name} must be > 0, got {v}")))
            }
        };
        positive("eta_lambda", self.eta_lambda)?;
        positive("eta_gamma", self.eta_gamma)?;
        positive("gamma_max", self.gamma_max)?;
        positive("feasibility_tol", self.feasibility_tol)?;
        if !(0.0..=self.gamma_max).contains(&self.gamma0) {
            return Err(MsaError::Config(format!(
                "minmax.gamma0 must lie in [0, {}], got {}",
                self.gamma_max, self.gamma0
            )));
        }
        if self.inner_steps == 0 {
            return Err(MsaError::Config("minmax.inner_steps must be >= 1".into()));
        }
        if let Some(l) = &self.lambda0 {
            if l.p() != p {
                return Err(MsaError::LengthMismatch {
                    what: "lambda0",
                    expected: p,
                    actual: l.p(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinmaxIterate {
    pub lambda: MixtureWeight,
    pub gamma: f64,
    /// `L_0(h) + gamma (R_lambda(h) - R_lambda(h'))`.
    pub objective: f64,
    /// Raw target loss of `h' = h_lambda`.
    pub target_loss: f64,
    /// `(R_lambda(h) - R_lambda(h')) / R_lambda(h')`.
    pub violation: f64,
}

#[derive(Clone, Debug)]
pub struct MinmaxState {
    /// First player's hypothesis at the selected iterate.
    pub h: Hypothesis,
    pub lambda: MixtureWeight,
    pub gamma: f64,
    /// `h_lambda` for the selected `lambda`; this is the returned model.
    pub h_prime: Hypothesis,
    /// Objective value of every iterate, starting with iterate 0.
    pub history: Vec<f64>,
    pub trace: Vec<MinmaxIterate>,
    pub selected: usize,
}

/// The two backends share this view of the game.
trait DomainObjective {
    fn target_loss(&self, theta: &[f64]) -> f64;
    fn source_losses(&self, theta: &[f64]) -> Vec<f64>;
    fn penalty(&self, theta: &[f64]) -> f64;
    /// First player's step on `h` for fixed `(lambda, gamma)`.
    fn update_h(&self, lambda: &[f64], gamma: f64, theta: &[f64]) -> Result<Vec<f64>>;
    /// `h' = argmin R_lambda`, exactly or approximately from `warm`.
    fn update_h_prime(&self, lambda: &[f64], warm: &[f64]) -> Result<Vec<f64>>;

    fn risk(&self, lambda: &[f64], theta: &[f64]) -> f64 {
        self.source_losses(theta)
            .iter()
            .zip(lambda)
            .map(|(l, w)| l * w)
            .sum::<f64>()
            + self.penalty(theta)
    }
}

/// Squared loss: every loss is a quadratic form in the augmented
/// coefficients, and the `h` step is the exact minimizer (a Newton step).
struct Quadratic<'t, 'a> {
    trainer: &'t MixtureTrainer<'a>,
    dim: usize,
    intercept: bool,
    /// Normalized moments `(X'X / n, X'y / n, y'y / n)`.
    sources: Vec<(DMatrix<f64>, DVector<f64>, f64)>,
    target: (DMatrix<f64>, DVector<f64>, f64),
    ridge: DMatrix<f64>,
    reg: f64,
}

fn normalized(m: &SecondMoments) -> (DMatrix<f64>, DVector<f64>, f64) {
    let n = m.n as f64;
    (&m.xtx / n, &m.xty / n, m.yty / n)
}

impl Quadratic<'_, '_> {
    fn beta(&self, theta: &[f64]) -> DVector<f64> {
        augmented_from_params(self.dim, self.intercept, theta)
    }

    fn quad(q: &(DMatrix<f64>, DVector<f64>, f64), beta: &DVector<f64>) -> f64 {
        (&q.0 * beta).dot(beta) - 2.0 * q.1.dot(beta) + q.2
    }
}

impl DomainObjective for Quadratic<'_, '_> {
    fn target_loss(&self, theta: &[f64]) -> f64 {
        Self::quad(&self.target, &self.beta(theta))
    }

    fn source_losses(&self, theta: &[f64]) -> Vec<f64> {
        let beta = self.beta(theta);
        self.sources.iter().map(|q| Self::quad(q, &beta)).collect()
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        self.reg * theta[..self.dim].iter().map(|v| v * v).sum::<f64>()
    }

    fn update_h(&self, lambda: &[f64], gamma: f64, _theta: &[f64]) -> Result<Vec<f64>> {
        // an exactly zero gamma leaves only the target term, which is
        // singular whenever m0 < d
        let g = gamma.max(1e-9);
        let mut a = self.target.0.clone() + &self.ridge * g;
        let mut b = self.target.1.clone();
        for ((sa, sb, _), &l) in self.sources.iter().zip(lambda) {
            if l == 0.0 {
                continue;
            }
            a += sa * (g * l);
            b += sb * (g * l);
        }
        let beta = solve_spd(a, &b, self.reg)?;
        Ok(params_from_augmented(self.dim, self.intercept, beta.as_slice()))
    }

    fn update_h_prime(&self, lambda: &[f64], _warm: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trainer.train(lambda)?.to_params())
    }
}

/// Any differentiable loss, evaluated example by example; both players
/// take a fixed number of gradient steps per round.
struct PerExample<'a> {
    sources: Vec<&'a Dataset>,
    target: &'a Dataset,
    loss: LossSpec,
    shape: ParamShape,
    /// Smoothness bounds of the source losses and of the target loss.
    smooth_src: f64,
    smooth_tgt: f64,
    steps: usize,
}

impl PerExample<'_> {
    fn target_grad(&self, theta: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let view = WeightedView::uniform(self.target);
        view_loss_and_grad(self.loss.kind, self.shape, theta, &view, None, Some(grad));
        if !self.loss.fit_intercept {
            let stride = self.shape.dim + 1;
            for c in 0..self.shape.outputs {
                grad[c * stride + self.shape.dim] = 0.0;
            }
        }
    }
}

impl DomainObjective for PerExample<'_> {
    fn target_loss(&self, theta: &[f64]) -> f64 {
        let view = WeightedView::uniform(self.target);
        view_loss_and_grad(self.loss.kind, self.shape, theta, &view, None, None)
    }

    fn source_losses(&self, theta: &[f64]) -> Vec<f64> {
        self.sources
            .iter()
            .map(|d| {
                let view = WeightedView::uniform(d);
                view_loss_and_grad(self.loss.kind, self.shape, theta, &view, None, None)
            })
            .collect()
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        self.loss.regularization * self.shape.weight_norm_sq(theta)
    }

    fn update_h(&self, lambda: &[f64], gamma: f64, theta: &[f64]) -> Result<Vec<f64>> {
        let view = WeightedView::mixture(&self.sources, lambda)?;
        let step = 1.0 / (self.smooth_tgt + gamma * (self.smooth_src + 2.0 * self.loss.regularization));
        let mut theta = theta.to_vec();
        let mut g_src = vec![0.0; theta.len()];
        let mut g_tgt = vec![0.0; theta.len()];
        for _ in 0..self.steps {
            objective_and_grad(&view, &self.loss, self.shape, &theta, &mut g_src);
            self.target_grad(&theta, &mut g_tgt);
            for ((t, a), b) in theta.iter_mut().zip(&g_tgt).zip(&g_src) {
                *t -= step * (a + gamma * b);
            }
        }
        Ok(theta)
    }

    fn update_h_prime(&self, lambda: &[f64], warm: &[f64]) -> Result<Vec<f64>> {
        let view = WeightedView::mixture(&self.sources, lambda)?;
        let step = 1.0 / (self.smooth_src + 2.0 * self.loss.regularization);
        let mut theta = warm.to_vec();
        let mut grad = vec![0.0; theta.len()];
        for _ in 0..self.steps {
            objective_and_grad(&view, &self.loss, self.shape, &theta, &mut grad);
            theta.iter_mut().zip(&grad).for_each(|(t, g)| *t -= step * g);
        }
        Ok(theta)
    }
}

/// Exponentiated-gradient step on the simplex.
fn eg_step(lambda: &mut [f64], grad: &[f64], eta: f64) {
    let shift = grad.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (l, g) in lambda.iter_mut().zip(grad) {
        *l *= (-eta * (g - shift)).exp();
        total += *l;
    }
    lambda.iter_mut().for_each(|l| *l /= total);
}

/// Solves `min_{h, lambda} max_{gamma >= 0, h'} L_0(h) + gamma (R_lambda(h) - R_lambda(h'))`
/// where `R_lambda` is the regularized risk on the mixed source sample.
///
/// Each round takes a step on `h`, an exponentiated-gradient step on
/// `lambda` with gradient `gamma (L_k(h) - L_k(h'))`, an ascent step on
/// `gamma` clipped to `[0, gamma_max]`, and re-solves `h'`. Among the
/// iterates whose relative constraint violation is within
/// `feasibility_tol`, the one whose `h' = h_lambda` has the smallest target
/// loss is selected and `h_lambda` is returned.
pub fn lmsa_minmax(
    coll: &DomainCollection,
    loss: &LossSpec,
    cfg: &TrainConfig,
    mm: &MinmaxConfig,
) -> Result<(Hypothesis, MinmaxState)> {
    if !(loss.strong_convexity_mu > 0.0) {
        return Err(MsaError::NotStronglyConvex(loss.strong_convexity_mu));
    }
    loss.validate()?;
    mm.validate(coll.p())?;
    let trainer = MixtureTrainer::for_sources(coll, loss, cfg)?;
    let (task, dim) = (coll.task(), coll.dim());
    let intercept = loss.fit_intercept;
    let target_moments = SecondMoments::from_dataset(coll.target(), intercept);
    let backend: Box<dyn DomainObjective + '_> = match loss.kind {
        LossKind::Squared => Box::new(Quadratic {
            trainer: &trainer,
            dim,
            intercept,
            sources: trainer.moments().iter().map(normalized).collect(),
            target: normalized(&target_moments),
            ridge: ridge_diag(dim, intercept, loss.regularization),
            reg: loss.regularization,
        }),
        _ => {
            let grams: Vec<f64> = trainer
                .moments()
                .iter()
                .map(|m| max_eigenvalue(&(&m.xtx / m.n as f64)))
                .collect();
            Box::new(PerExample {
                sources: coll.sources().iter().collect(),
                target: coll.target(),
                loss: *loss,
                shape: ParamShape::of(task, dim),
                smooth_src: 0.5 * grams.iter().copied().fold(0.0, f64::max),
                smooth_tgt: 0.5 * max_eigenvalue(&(&target_moments.xtx / target_moments.n as f64)),
                steps: mm.inner_steps,
            })
        }
    };

    let mut lambda = mm
        .lambda0
        .clone()
        .unwrap_or_else(|| MixtureWeight::uniform(coll.p()))
        .into_vec();
    let mut gamma = mm.gamma0;
    let mut h_prime = backend.update_h_prime(&lambda, &vec![0.0; ParamShape::of(task, dim).len()])?;
    let mut h = h_prime.clone();
    let l0 = backend.target_loss(&h_prime);
    let mut trace = vec![MinmaxIterate {
        lambda: MixtureWeight::new(lambda.clone())?,
        gamma,
        objective: l0,
        target_loss: l0,
        violation: 0.0,
    }];
    let mut hs = vec![h.clone()];
    let mut adagrad = 0.0;

    for _ in 0..mm.steps {
        h = backend.update_h(&lambda, gamma, &h)?;
        let r_h = backend.risk(&lambda, &h);
        let r_hp = backend.risk(&lambda, &h_prime);
        let gap = r_h - r_hp;

        let lh = backend.source_losses(&h);
        let lhp = backend.source_losses(&h_prime);
        let grad: Vec<f64> = lh.iter().zip(&lhp).map(|(a, b)| gamma * (a - b)).collect();
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        adagrad += gmax * gmax;
        if adagrad > 0.0 {
            eg_step(&mut lambda, &grad, mm.eta_lambda / adagrad.sqrt());
        }

        gamma = (gamma + mm.eta_gamma * gap / r_hp.abs().max(1e-12)).clamp(0.0, mm.gamma_max);
        h_prime = backend.update_h_prime(&lambda, &h_prime)?;

        let r_h = backend.risk(&lambda, &h);
        let r_hp = backend.risk(&lambda, &h_prime);
        let target_h = backend.target_loss(&h);
        trace.push(MinmaxIterate {
            lambda: MixtureWeight::new(lambda.clone())?,
            gamma,
            objective: target_h + gamma * (r_h - r_hp),
            target_loss: backend.target_loss(&h_prime),
            violation: (r_h - r_hp) / r_hp.abs().max(1e-12),
        });
        hs.push(h.clone());
    }

    let feasible: Vec<usize> = (0..trace.len())
        .filter(|&t| trace[t].violation <= mm.feasibility_tol)
        .collect();
    let pool = if feasible.is_empty() {
        let least = (0..trace.len())
            .min_by(|&a, &b| trace[a].violation.total_cmp(&trace[b].violation))
            .expect("iterate 0 exists");
        vec![least]
    } else {
        feasible
    };
    let mut selected = pool[0];
    for &t in &pool {
        if trace[t].target_loss < trace[selected].target_loss {
            selected = t;
        }
    }
    let chosen = trace[selected].lambda.clone();
    let output = trainer.train(chosen.as_slice())?;
    let state = MinmaxState {
        h: Hypothesis::from_params(task, dim, &hs[selected])?,
        lambda: chosen,
        gamma: trace[selected].gamma,
        h_prime: output.clone(),
        history: trace.iter().map(|it| it.objective).collect(),
        trace,
        selected,
    };
    Ok((output, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, LabeledExample, Task};
    use crate::erm::train_on_mixture;
    use crate::lmsa::lmsa_select;
    use crate::loss::empirical_loss;
    use crate::simplex::make_cover;
    use crate::synth::{gen_toy_regression, ToyRegressionSpec};

    fn toy(p: usize, seed: u64) -> DomainCollection {
        let lambda_star = if p == 1 {
            MixtureWeight::new(vec![1.0]).unwrap()
        } else {
            MixtureWeight::normalized((0..p).map(|k| if k == 0 { 3.0 } else { 1.0 }).collect()).unwrap()
        };
        let spec = ToyRegressionSpec {
            p,
            d: 5,
            m_k: 400,
            m0: 100,
            lambda_star,
            seed,
            ..ToyRegressionSpec::default()
        };
        gen_toy_regression(&spec).unwrap().0
    }

    #[test]
    fn requires_strict_convexity() {
        let coll = toy(2, 0);
        let loss = LossSpec::squared(0.0);
        let err = lmsa_minmax(&coll, &loss, &TrainConfig::default(), &MinmaxConfig::default()).unwrap_err();
        assert!(matches!(err, MsaError::NotStronglyConvex(_)));
        assert!(err.to_string().contains("strictly convex"));
    }

    #[test]
    fn single_source_returns_its_model() {
        let coll = toy(1, 1);
        let loss = LossSpec::squared(1e-3);
        let cfg = TrainConfig::default();
        let (h, _) = lmsa_minmax(&coll, &loss, &cfg, &MinmaxConfig::default()).unwrap();
        let direct = train_on_mixture(&coll, &MixtureWeight::new(vec![1.0]).unwrap(), &loss, &cfg).unwrap();
        assert!(h.distance(&direct) < 1e-4);
    }

    #[test]
    fn iterates_stay_feasible() {
        let coll = toy(3, 2);
        let loss = LossSpec::squared(1e-3);
        let mm = MinmaxConfig {
            steps: 100,
            ..MinmaxConfig::default()
        };
        let (_, state) = lmsa_minmax(&coll, &loss, &TrainConfig::default(), &mm).unwrap();
        assert_eq!(state.trace.len(), 101);
        for it in &state.trace {
            assert!((0.0..=mm.gamma_max).contains(&it.gamma));
            assert!(it.lambda.as_slice().iter().all(|l| *l >= 0.0));
            assert!((it.lambda.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_fine_cover_selection() {
        let coll = toy(2, 3);
        let loss = LossSpec::squared(1e-3);
        let cfg = TrainConfig::default();
        let (h, _) = lmsa_minmax(&coll, &loss, &cfg, &MinmaxConfig::default()).unwrap();
        let (_, report) = lmsa_select(&coll, &make_cover(2, 0.02).unwrap(), &loss, &cfg).unwrap();
        let mine = empirical_loss(&h, coll.target(), None, &loss).unwrap();
        assert!((mine - report.selected_loss).abs() <= 0.01 * report.selected_loss, "{mine} vs {}", report.selected_loss);
    }

    #[test]
    fn log_loss_backend_runs() {
        let task = Task::Classification { classes: 2 };
        let mk = |id, flip: bool| {
            let ex = (0..40)
                .map(|i| {
                    let x = i as f64 / 20.0 - 1.0;
                    let c = usize::from((x > 0.0) != flip);
                    LabeledExample::new(vec![x], Label::Class(c))
                })
                .collect();
            Dataset::new(id, task, 1, ex).unwrap()
        };
        let coll = DomainCollection::new(mk(0, false), vec![mk(1, false), mk(2, true)]).unwrap();
        let loss = LossSpec::log(1e-2);
        let mm = MinmaxConfig {
            steps: 60,
            ..MinmaxConfig::default()
        };
        let (_, state) = lmsa_minmax(&coll, &loss, &TrainConfig::default(), &mm).unwrap();
        assert!(state.lambda.as_slice()[0] > 0.8, "{:?}", state.lambda);
    }
}
