//! Affine-linear hypotheses and the versioned model file format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Task;
use crate::error::{MsaError, Result};

/// Output of a hypothesis on one input.
#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Real(f64),
    Dist(Vec<f64>),
}

/// Affine predictor. For regression `weights` has length `d` and
/// `intercept` length 1; for `K`-class classification `weights` is a
/// row-major `K x d` matrix feeding a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    task: Task,
    dim: usize,
    weights: Vec<f64>,
    intercept: Vec<f64>,
}

/// Numerically stable softmax written into `out`.
pub fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

impl Hypothesis {
    pub fn zeros(task: Task, dim: usize) -> Self {
        let k = task.outputs();
        Hypothesis {
            task,
            dim,
            weights: vec![0.0; k * dim],
            intercept: vec![0.0; k],
        }
    }

    pub fn new(task: Task, dim: usize, weights: Vec<f64>, intercept: Vec<f64>) -> Result<Self> {
        let k = task.outputs();
        if weights.len() != k * dim {
            return Err(MsaError::LengthMismatch {
                what: "weights",
                expected: k * dim,
                actual: weights.len(),
            });
        }
        if intercept.len() != k {
            return Err(MsaError::LengthMismatch {
                what: "intercept",
                expected: k,
                actual: intercept.len(),
            });
        }
        Ok(Hypothesis {
            task,
            dim,
            weights,
            intercept,
        })
    }

    pub fn regression(weights: Vec<f64>, intercept: f64) -> Self {
        let dim = weights.len();
        Hypothesis {
            task: Task::Regression,
            dim,
            weights,
            intercept: vec![intercept],
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> &[f64] {
        &self.intercept
    }

    /// Number of free parameters, `K (d + 1)`.
    pub fn param_len(&self) -> usize {
        self.task.outputs() * (self.dim + 1)
    }

    /// Flattens to `[w_1, b_1, w_2, b_2, ...]`, one block of `d + 1` per output.
    pub fn to_params(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.param_len());
        for (c, b) in self.intercept.iter().enumerate() {
            theta.extend_from_slice(&self.weights[c * self.dim..(c + 1) * self.dim]);
            theta.push(*b);
        }
        theta
    }

    pub fn from_params(task: Task, dim: usize, theta: &[f64]) -> Result<Self> {
        let k = task.outputs();
        if theta.len() != k * (dim + 1) {
            return Err(MsaError::LengthMismatch {
                what: "parameter vector",
                expected: k * (dim + 1),
                actual: theta.len(),
            });
        }
        let mut weights = Vec::with_capacity(k * dim);
        let mut intercept = Vec::with_capacity(k);
        for block in theta.chunks_exact(dim + 1) {
            weights.extend_from_slice(&block[..dim]);
            intercept.push(block[dim]);
        }
        Ok(Hypothesis {
            task,
            dim,
            weights,
            intercept,
        })
    }

    /// Euclidean norm over all parameters (weights and intercepts).
    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.intercept)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance(&self, other: &Hypothesis) -> f64 {
        self.to_params()
            .iter()
            .zip(other.to_params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Radial projection onto the ball of radius `radius`.
    pub fn project_to_ball(&mut self, radius: f64) {
        let norm = self.norm();
        if norm > radius {
            let scale = radius / norm;
            self.weights.iter_mut().for_each(|v| *v *= scale);
            self.intercept.iter_mut().for_each(|v| *v *= scale);
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(MsaError::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Raw affine scores, one per output row.
    pub(crate) fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *slot = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.intercept[c];
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        let mut scores = vec![0.0; self.task.outputs()];
        self.scores_into(x, &mut scores);
        match self.task {
            Task::Regression => Prediction::Real(scores[0]),
            Task::Classification { .. } => {
                softmax_in_place(&mut scores);
                Prediction::Dist(scores)
            }
        }
    }

    /// Writes `msa-model v1`: header, shape line, then one row per output
    /// holding `d` weights followed by the intercept, at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::from("msa-model v1\n");
        let _ = writeln!(
            out,
            "task={} d={} K={}",
            self.task.name(),
            self.dim,
            self.task.outputs()
        );
        for block in self.to_params().chunks_exact(self.dim + 1) {
            let row: Vec<String> = block.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Hypothesis> {
        let perr = |line: usize, msg: String| MsaError::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("msa-model v1") {
            return Err(perr(1, "expected 'msa-model v1'".into()));
        }
        let shape = lines.next().ok_or_else(|| perr(2, "missing shape line".into()))?;
        let (mut task, mut dim, mut k) = (None, None, None);
        for field in shape.split_whitespace() {
            match field.split_once('=') {
                Some(("task", v)) => task = Some(v.to_string()),
                Some(("d", v)) => dim = Some(v.parse::<usize>().map_err(|e| perr(2, e.to_string()))?),
                Some(("K", v)) => k = Some(v.parse::<usize>().map_err(|e| perr(2, e.to_string()))?),
                _ => return Err(perr(2, format!("malformed field '{field}'"))),
            }
        }
        let dim = dim.ok_or_else(|| perr(2, "missing d".into()))?;
        let k = k.ok_or_else(|| perr(2, "missing K".into()))?;
        let task = match task.as_deref() {
            Some("regression") if k == 1 => Task::Regression,
            Some("classification") => Task::Classification { classes: k },
            _ => return Err(perr(2, "bad task/K combination".into())),
        };
        let mut theta = Vec::with_capacity(k * (dim + 1));
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            for f in line.split(',') {
                theta.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| perr(i + 3, format!("'{f}': {e}")))?,
                );
            }
        }
        Hypothesis::from_params(task, dim, &theta)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| MsaError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Hypothesis> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| MsaError::io(path, e))?;
        Hypothesis::parse(&text, path)
    }
}
