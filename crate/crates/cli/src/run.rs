//! `run`: one algorithm or baseline on a dataset directory.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use msa_core::baselines::{run_baseline, BaselineHyper, BaselineKind, GammaChoice};
use msa_core::discrepancy::DiscMethod;
use msa_core::lmsa::{lmsa_boost, lmsa_minmax, lmsa_select, BoostConfig, EnsembleHypothesis, MinmaxConfig};
use msa_core::simplex::default_epsilon;
use msa_core::{empirical_loss, make_cover, Dataset, DomainCollection, Hypothesis, LossSpec, MixtureWeight, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::gen::{load_data_dir, write_text};

pub const RUN_KEYS: &[&str] = &[
    "data",
    "algorithm",
    "loss",
    "erm.reg",
    "erm.max_iters",
    "erm.tol",
    "norm_ball",
    "bound",
    "intercept",
    "mu",
    "cover.epsilon",
    "minmax.steps",
    "minmax.eta_lambda",
    "minmax.eta_gamma",
    "minmax.gamma0",
    "minmax.gamma_max",
    "minmax.inner_steps",
    "minmax.feasibility_tol",
    "boost.s",
    "boost.T",
    "boost.hierarchical",
    "pairwise.gamma",
    "disc.restarts",
    "disc.iters",
    "seed",
    "target-split",
    "output",
    "model",
    "report",
];

/// Share of the target sample moved into an extra source by the split protocol.
pub const SPLIT_SOURCE_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Lmsa,
    LmsaBoost,
    LmsaMinmax,
    Baseline(BaselineKind),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Lmsa => "lmsa",
            Algorithm::LmsaBoost => "lmsa_boost",
            Algorithm::LmsaMinmax => "lmsa_minmax",
            Algorithm::Baseline(k) => k.name(),
        }
    }
}

impl FromStr for Algorithm {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmsa" => Ok(Algorithm::Lmsa),
            "lmsa_boost" => Ok(Algorithm::LmsaBoost),
            "lmsa_minmax" => Ok(Algorithm::LmsaMinmax),
            other => other.parse::<BaselineKind>().map(Algorithm::Baseline).map_err(|_| {
                let mut names = vec!["lmsa", "lmsa_boost", "lmsa_minmax"];
                names.extend(BaselineKind::ALL.iter().map(|k| k.name()));
                CliError::Config(format!("unknown algorithm `{other}`; expected one of {}", names.join(", ")))
            }),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Model {
    Single(Hypothesis),
    Ensemble(EnsembleHypothesis),
}

impl Model {
    pub fn loss(&self, data: &Dataset, loss: &LossSpec) -> Result<f64> {
        Ok(match self {
            Model::Single(h) => empirical_loss(h, data, None, loss)?,
            Model::Ensemble(e) => e.empirical_loss(data, loss)?,
        })
    }

    pub fn to_text(&self) -> String {
        match self {
            Model::Single(h) => h.to_text(),
            Model::Ensemble(e) => e.to_text(),
        }
    }
}

/// Everything `run` needs besides the data.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub algorithm: Algorithm,
    pub loss: LossSpec,
    pub train: TrainConfig,
    pub epsilon: Option<f64>,
    pub minmax: MinmaxConfig,
    pub boost: BoostConfig,
    pub baseline: BaselineHyper,
    pub seed: u64,
}

pub fn loss_from_config(cfg: &ExperimentConfig) -> Result<LossSpec> {
    let reg = cfg.get_or("erm.reg", 1e-3)?;
    let mut loss = match cfg.get_str("loss").unwrap_or("squared") {
        "squared" => LossSpec::squared(reg),
        "log" => LossSpec::log(reg),
        other => return Err(CliError::Config(format!("unknown loss `{other}`; expected squared or log"))),
    };
    if let Some(b) = cfg.get::<f64>("norm_ball")? {
        loss = loss.with_norm_ball(b);
    }
    if let Some(m) = cfg.get::<f64>("bound")? {
        loss = loss.with_bound(m);
    }
    if !cfg.get_or("intercept", true)? {
        loss = loss.without_intercept();
    }
    if let Some(mu) = cfg.get::<f64>("mu")? {
        loss = loss.with_mu(mu);
    }
    // validated by the algorithm, so precondition errors keep their own message
    Ok(loss)
}

impl RunSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let seed = cfg.get_or("seed", 0u64)?;
        let d = TrainConfig::default();
        let train = TrainConfig {
            max_iters: cfg.get_or("erm.max_iters", d.max_iters)?,
            tol: cfg.get_or("erm.tol", d.tol)?,
            seed,
            ..d
        };
        train.validate()?;
        let m = MinmaxConfig::default();
        let minmax = MinmaxConfig {
            steps: cfg.get_or("minmax.steps", m.steps)?,
            eta_lambda: cfg.get_or("minmax.eta_lambda", m.eta_lambda)?,
            eta_gamma: cfg.get_or("minmax.eta_gamma", m.eta_gamma)?,
            gamma0: cfg.get_or("minmax.gamma0", m.gamma0)?,
            gamma_max: cfg.get_or("minmax.gamma_max", m.gamma_max)?,
            inner_steps: cfg.get_or("minmax.inner_steps", m.inner_steps)?,
            feasibility_tol: cfg.get_or("minmax.feasibility_tol", m.feasibility_tol)?,
            lambda0: None,
        };
        let b = BoostConfig::default();
        let boost = BoostConfig {
            candidates: cfg.get_or("boost.s", b.candidates)?,
            rounds: cfg.get_or("boost.T", b.rounds)?,
            hierarchical: cfg.get_or("boost.hierarchical", b.hierarchical)?,
            seed,
        };
        let mut baseline = BaselineHyper {
            seed,
            ..BaselineHyper::default()
        };
        if let Some(g) = cfg.get_list::<f64>("pairwise.gamma")? {
            baseline.pairwise_gamma = if g.len() == 1 {
                GammaChoice::Fixed(g[0])
            } else {
                GammaChoice::Validate(g)
            };
        }
        if let DiscMethod::Ascent { restarts, iters } = DiscMethod::default() {
            baseline.disc_method = DiscMethod::Ascent {
                restarts: cfg.get_or("disc.restarts", restarts)?,
                iters: cfg.get_or("disc.iters", iters)?,
            };
        }
        let epsilon = cfg.get::<f64>("cover.epsilon")?;
        if let Some(e) = epsilon {
            if !(e > 0.0 && e <= 1.0) {
                return Err(CliError::Config(format!("cover.epsilon must lie in (0, 1], got {e}")));
            }
        }
        Ok(RunSettings {
            algorithm: cfg.require_str("algorithm")?.parse()?,
            loss: loss_from_config(cfg)?,
            train,
            epsilon,
            minmax,
            boost,
            baseline,
            seed,
        })
    }
}

/// Output of one protocol: the model, the mixture it used and an optional
/// per-algorithm report (cover table, boosting trace or min-max iterates).
#[derive(Clone, Debug)]
pub struct Fitted {
    pub model: Model,
    pub lambda: Option<MixtureWeight>,
    pub report: Option<String>,
}

pub fn fit(coll: &DomainCollection, s: &RunSettings) -> Result<Fitted> {
    let p = coll.p();
    let cover = || make_cover(p, s.epsilon.unwrap_or_else(|| default_epsilon(p)));
    Ok(match s.algorithm {
        Algorithm::Lmsa => {
            let (h, rep) = lmsa_select(coll, &cover()?, &s.loss, &s.train)?;
            Fitted {
                model: Model::Single(h),
                lambda: Some(rep.chosen_lambda.clone()),
                report: Some(rep.to_csv()),
            }
        }
        Algorithm::LmsaBoost => {
            let (e, rep) = lmsa_boost(coll, &cover()?, &s.loss, &s.train, &s.boost)?;
            let mut csv = String::from("round,target_loss,accepted\n");
            for (t, v) in rep.trace.iter().enumerate() {
                let acc = match t.checked_sub(1).and_then(|i| rep.accepted.get(i).copied().flatten()) {
                    Some(i) => i.to_string(),
                    None if t == 0 => rep.initial_index.to_string(),
                    None => String::new(),
                };
                let _ = writeln!(csv, "{t},{v},{acc}");
            }
            Fitted {
                model: Model::Ensemble(e),
                lambda: None,
                report: Some(csv),
            }
        }
        Algorithm::LmsaMinmax => {
            let (h, st) = lmsa_minmax(coll, &s.loss, &s.train, &s.minmax)?;
            let mut csv = (1..=p).map(|k| format!("lambda_{k}")).collect::<Vec<_>>().join(",");
            csv.push_str(",gamma,objective,target_loss,violation,selected\n");
            for (i, it) in st.trace.iter().enumerate() {
                for l in it.lambda.as_slice() {
                    let _ = write!(csv, "{l},");
                }
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    it.gamma,
                    it.objective,
                    it.target_loss,
                    it.violation,
                    u8::from(i == st.selected)
                );
            }
            Fitted {
                model: Model::Single(h),
                lambda: Some(st.lambda),
                report: Some(csv),
            }
        }
        Algorithm::Baseline(kind) => {
            let out = run_baseline(kind, coll, &s.loss, &s.train, &s.baseline)?;
            Fitted {
                model: Model::Single(out.hypothesis),
                lambda: out.lambda,
                report: None,
            }
        }
    })
}

/// Moves a seeded random `SPLIT_SOURCE_FRACTION` of the target sample into
/// an extra source; the rest stays as the target sample.
pub fn split_target(coll: &DomainCollection, seed: u64) -> Result<DomainCollection> {
    let m0 = coll.m0();
    let n_src = (SPLIT_SOURCE_FRACTION * m0 as f64).round() as usize;
    if n_src == 0 || n_src >= m0 {
        return Err(CliError::Config(format!("target sample of size {m0} is too small to split")));
    }
    let mut idx: Vec<usize> = (0..m0).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = idx.split_at(n_src);
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable();
    b.sort_unstable();
    let extra = coll.target().subset(&a)?.with_domain_id(coll.p() + 1);
    let target = coll.target().subset(&b)?;
    let mut sources = coll.sources().to_vec();
    sources.push(extra);
    Ok(DomainCollection::new(target, sources)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub algorithm: String,
    /// `all`, `split` or `better`.
    pub protocol: String,
    pub seed: u64,
    pub lambda: Option<Vec<f64>>,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub wall_time_s: f64,
}

pub const RUN_HEADER: &str = "algorithm,protocol,seed,lambda,train_loss,test_loss,wall_time_s";

impl RunRow {
    pub fn to_csv(&self) -> String {
        let lambda = self
            .lambda
            .as_ref()
            .map(|l| l.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"))
            .unwrap_or_default();
        let test = self.test_loss.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{:.6}",
            self.algorithm, self.protocol, self.seed, lambda, self.train_loss, test, self.wall_time_s
        )
    }
}

pub struct RunOutcome {
    pub rows: Vec<RunRow>,
    pub csv: String,
    /// Model of the reported protocol (the better one under `target-split`).
    pub model: Model,
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.check_keys(RUN_KEYS)?;
    let settings = RunSettings::from_config(cfg)?;
    let (coll, test) = load_data_dir(Path::new(cfg.require_str("data")?))?;
    let split = cfg.get_or("target-split", false)?;
    if split && test.is_none() {
        return Err(CliError::Config("target-split compares protocols on test.txt, which is missing".into()));
    }

    let mut protocols = vec![("all", coll.clone())];
    if split {
        protocols.push(("split", split_target(&coll, settings.seed)?));
    }
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for (name, c) in &protocols {
        let start = Instant::now();
        let fitted = fit(c, &settings)?;
        let wall = start.elapsed().as_secs_f64();
        let test_loss = test.as_ref().map(|t| fitted.model.loss(t, &settings.loss)).transpose()?;
        rows.push(RunRow {
            algorithm: settings.algorithm.name().to_string(),
            protocol: name.to_string(),
            seed: settings.seed,
            lambda: fitted.lambda.as_ref().map(|l| l.as_slice().to_vec()),
            train_loss: fitted.model.loss(c.target(), &settings.loss)?,
            test_loss,
            wall_time_s: wall,
        });
        fits.push(fitted);
    }
    let mut chosen = 0;
    if split {
        let t = |i: usize| rows[i].test_loss.unwrap_or(f64::INFINITY);
        chosen = if t(1) < t(0) { 1 } else { 0 };
        let mut better = rows[chosen].clone();
        better.protocol = format!("better:{}", rows[chosen].protocol);
        rows.push(better);
    }
    let fitted = fits.swap_remove(chosen);

    let mut csv = format!("{RUN_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.to_csv());
        csv.push('\n');
    }
    if let Some(path) = cfg.get_str("output") {
        write_text(Path::new(path), &csv)?;
    }
    if let Some(path) = cfg.get_str("model") {
        write_text(Path::new(path), &fitted.model.to_text())?;
    }
    if let Some(path) = cfg.get_str("report") {
        let report = fitted
            .report
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("algorithm {} has no report", settings.algorithm.name())))?;
        write_text(Path::new(path), report)?;
    }
    Ok(RunOutcome {
        rows,
        csv,
        model: fitted.model,
    })
}
