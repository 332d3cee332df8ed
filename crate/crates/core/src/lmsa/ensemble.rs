use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{Dataset, Task};
use crate::error::{MsaError, Result};
use crate::hypothesis::{Hypothesis, Prediction};
use crate::loss::{example_loss, LossSpec};

/// Convex combination `sum_j alpha_j h_j` of hypotheses. Classification
/// ensembles average the predicted distributions, so predictions stay in
/// the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleHypothesis {
    members: Vec<(f64, Hypothesis)>,
}

impl EnsembleHypothesis {
    pub fn new(members: Vec<(f64, Hypothesis)>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| MsaError::InvalidData("empty ensemble".into()))?
            .1
            .clone();
        let mut total = 0.0;
        for (a, h) in &members {
            if !(a.is_finite() && *a >= 0.0) {
                return Err(MsaError::InvalidData(format!("invalid ensemble weight {a}")));
            }
            if h.dim() != first.dim() || h.task() != first.task() {
                return Err(MsaError::InvalidData("ensemble members disagree on shape".into()));
            }
            total += a;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(MsaError::InvalidData(format!("ensemble weights sum to {total}")));
        }
        Ok(EnsembleHypothesis { members })
    }

    pub fn single(h: Hypothesis) -> Self {
        EnsembleHypothesis {
            members: vec![(1.0, h)],
        }
    }

    pub fn members(&self) -> &[(f64, Hypothesis)] {
        &self.members
    }

    pub fn task(&self) -> Task {
        self.members[0].1.task()
    }

    pub fn dim(&self) -> usize {
        self.members[0].1.dim()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let mut acc: Option<Prediction> = None;
        for (a, h) in &self.members {
            let p = h.predict(x)?;
            acc = Some(match (acc, p) {
                (None, Prediction::Real(v)) => Prediction::Real(a * v),
                (None, Prediction::Dist(v)) => Prediction::Dist(v.iter().map(|q| a * q).collect()),
                (Some(Prediction::Real(s)), Prediction::Real(v)) => Prediction::Real(s + a * v),
                (Some(Prediction::Dist(mut s)), Prediction::Dist(v)) => {
                    s.iter_mut().zip(&v).for_each(|(t, q)| *t += a * q);
                    Prediction::Dist(s)
                }
                _ => unreachable!("members share a task"),
            });
        }
        Ok(acc.expect("nonempty ensemble"))
    }

    /// Mean clipped loss on `data`.
    pub fn empirical_loss(&self, data: &Dataset, loss: &LossSpec) -> Result<f64> {
        let w = 1.0 / data.len() as f64;
        let mut total = 0.0;
        for (x, y) in data.iter() {
            total += w * example_loss(loss, &self.predict(x)?, y)?;
        }
        Ok(total)
    }
}

impl EnsembleHypothesis {
    /// `msa-ensemble v1`, the member count, then for each member a
    /// `weight=` line followed by its model text.
    pub fn to_text(&self) -> String {
        let mut out = String::from("msa-ensemble v1\n");
        let _ = writeln!(out, "members={}", self.members.len());
        for (a, h) in &self.members {
            let _ = writeln!(out, "weight={a:.16e}");
            out.push_str(&h.to_text());
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<EnsembleHypothesis> {
        let perr = |line: usize, msg: String| MsaError::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let lines: Vec<&str> = text.lines().collect();
        if lines.first().map(|l| l.trim()) != Some("msa-ensemble v1") {
            return Err(perr(1, "expected 'msa-ensemble v1'".into()));
        }
        let count: usize = lines
            .get(1)
            .and_then(|l| l.trim().strip_prefix("members="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| perr(2, "expected members=<count>".into()))?;
        let mut starts = Vec::new();
        for (i, l) in lines.iter().enumerate().skip(2) {
            if l.starts_with("weight=") {
                starts.push(i);
            }
        }
        if starts.len() != count {
            return Err(perr(2, format!("declared {count} members, found {}", starts.len())));
        }
        starts.push(lines.len());
        let mut members = Vec::with_capacity(count);
        for w in starts.windows(2) {
            let a: f64 = lines[w[0]]["weight=".len()..]
                .trim()
                .parse()
                .map_err(|e| perr(w[0] + 1, format!("bad weight: {e}")))?;
            let body = lines[w[0] + 1..w[1]].join("\n");
            members.push((a, Hypothesis::parse(&body, origin)?));
        }
        EnsembleHypothesis::new(members)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| MsaError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<EnsembleHypothesis> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| MsaError::io(path, e))?;
        EnsembleHypothesis::parse(&text, path)
    }
}
