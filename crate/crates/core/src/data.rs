//! Datasets, domain collections and the plain-text dataset format.
//!
//! A dataset file is UTF-8 text with a header line
//! `# d=<int> task=<regression|classification> K=<int>` followed by one
//! example per line: comma-separated features, label last.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MsaError, Result};

/// Learning task shared by every dataset of a collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification { classes: usize },
}

impl Task {
    /// Number of output rows of a linear hypothesis for this task.
    pub fn outputs(&self) -> usize {
        match self {
            Task::Regression => 1,
            Task::Classification { classes } => *classes,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification { .. } => "classification",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label {
    Real(f64),
    Class(usize),
}

impl Label {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Label::Real(y) => Some(*y),
            Label::Class(_) => None,
        }
    }

    pub fn as_class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Real(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        LabeledExample { features, label }
    }
}

/// An empirical sample from one domain. Features are stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    domain_id: usize,
    task: Task,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
}

fn check_label(task: Task, label: Label) -> Result<()> {
    match (task, label) {
        (Task::Regression, Label::Real(y)) if y.is_finite() => Ok(()),
        (Task::Regression, Label::Real(y)) => {
            Err(MsaError::InvalidData(format!("non-finite label {y}")))
        }
        (Task::Classification { classes }, Label::Class(c)) if c < classes => Ok(()),
        (Task::Classification { classes }, Label::Class(c)) => Err(MsaError::InvalidData(
            format!("class index {c} out of range for K = {classes}"),
        )),
        (task, label) => Err(MsaError::TaskMismatch(format!(
            "label {label:?} does not match task {}",
            task.name()
        ))),
    }
}

impl Dataset {
    pub fn new(domain_id: usize, task: Task, dim: usize, examples: Vec<LabeledExample>) -> Result<Self> {
        let mut features = Vec::with_capacity(examples.len() * dim);
        let mut labels = Vec::with_capacity(examples.len());
        for ex in examples {
            if ex.features.len() != dim {
                return Err(MsaError::DimensionMismatch {
                    expected: dim,
                    actual: ex.features.len(),
                });
            }
            features.extend_from_slice(&ex.features);
            labels.push(ex.label);
        }
        Self::from_parts(domain_id, task, dim, features, labels)
    }

    /// Builds a dataset from a row-major feature buffer.
    pub fn from_parts(
        domain_id: usize,
        task: Task,
        dim: usize,
        features: Vec<f64>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(MsaError::InvalidData(format!(
                "dataset for domain {domain_id} is empty"
            )));
        }
        if let Task::Classification { classes } = task {
            if classes < 2 {
                return Err(MsaError::InvalidData(format!(
                    "classification needs K >= 2, got {classes}"
                )));
            }
        }
        if features.len() != labels.len() * dim {
            return Err(MsaError::LengthMismatch {
                what: "feature buffer",
                expected: labels.len() * dim,
                actual: features.len(),
            });
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(MsaError::InvalidData(format!("non-finite feature {v}")));
        }
        for &label in &labels {
            check_label(task, label)?;
        }
        Ok(Dataset {
            domain_id,
            task,
            dim,
            features,
            labels,
        })
    }

    pub fn domain_id(&self) -> usize {
        self.domain_id
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], Label)> + '_ {
        self.features
            .chunks_exact(self.dim.max(1))
            .take(self.labels.len())
            .zip(self.labels.iter().copied())
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        LabeledExample::new(self.features(i).to_vec(), self.labels[i])
    }

    pub fn with_domain_id(mut self, domain_id: usize) -> Self {
        self.domain_id = domain_id;
        self
    }

    /// Copies the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset::from_parts(self.domain_id, self.task, self.dim, features, labels)
    }

    /// Splits into the first `n` examples and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.subset(&head)?, self.subset(&tail)?))
    }

    pub fn concat(domain_id: usize, parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| MsaError::InvalidData("nothing to concatenate".into()))?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for d in parts {
            if d.dim != first.dim {
                return Err(MsaError::DimensionMismatch {
                    expected: first.dim,
                    actual: d.dim,
                });
            }
            if d.task != first.task {
                return Err(MsaError::TaskMismatch("cannot concatenate datasets of different tasks".into()));
            }
            features.extend_from_slice(&d.features);
            labels.extend_from_slice(&d.labels);
        }
        Dataset::from_parts(domain_id, first.task, first.dim, features, labels)
    }

    /// Serializes to the text format. Values use the shortest
    /// representation that parses back to the identical `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# d={} task={} K={}",
            self.dim,
            self.task.name(),
            self.task.outputs()
        );
        for (x, y) in self.iter() {
            for v in x {
                let _ = write!(out, "{v},");
            }
            match y {
                Label::Real(v) => {
                    let _ = writeln!(out, "{v}");
                }
                Label::Class(c) => {
                    let _ = writeln!(out, "{c}");
                }
            }
        }
        out
    }

    pub fn parse(text: &str, domain_id: usize, origin: &Path) -> Result<Dataset> {
        let perr = |line: usize, msg: String| MsaError::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| perr(1, "missing header line".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| perr(1, "header must start with '#'".into()))?;
        let (mut dim, mut task_name, mut classes) = (None, None, None);
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| perr(1, format!("malformed header field '{field}'")))?;
            match key {
                "d" => dim = Some(value.parse::<usize>().map_err(|e| perr(1, e.to_string()))?),
                "task" => task_name = Some(value.to_string()),
                "K" => classes = Some(value.parse::<usize>().map_err(|e| perr(1, e.to_string()))?),
                other => return Err(perr(1, format!("unknown header key '{other}'"))),
            }
        }
        let dim = dim.ok_or_else(|| perr(1, "header lacks d=".into()))?;
        let task = match task_name.as_deref() {
            Some("regression") => Task::Regression,
            Some("classification") => Task::Classification {
                classes: classes.ok_or_else(|| perr(1, "classification header lacks K=".into()))?,
            },
            Some(other) => return Err(perr(1, format!("unknown task '{other}'"))),
            None => return Err(perr(1, "header lacks task=".into())),
        };
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(perr(
                    lineno,
                    format!("expected {} fields, found {}", dim + 1, fields.len()),
                ));
            }
            for f in &fields[..dim] {
                features.push(f.parse::<f64>().map_err(|e| perr(lineno, format!("'{f}': {e}")))?);
            }
            let raw = fields[dim];
            let label = match task {
                Task::Regression => {
                    Label::Real(raw.parse::<f64>().map_err(|e| perr(lineno, format!("'{raw}': {e}")))?)
                }
                Task::Classification { .. } => Label::Class(
                    raw.parse::<usize>()
                        .map_err(|e| perr(lineno, format!("'{raw}': {e}")))?,
                ),
            };
            labels.push(label);
        }
        Dataset::from_parts(domain_id, task, dim, features, labels)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| MsaError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>, domain_id: usize) -> Result<Dataset> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| MsaError::io(path, e))?;
        Dataset::parse(&text, domain_id, path)
    }
}

/// A probability-weighted view over one or more datasets: the empirical
/// measure `sum_i w_i delta_{(x_i, y_i)}`.
#[derive(Clone, Debug)]
pub struct WeightedView<'a> {
    parts: Vec<(&'a Dataset, Vec<f64>)>,
}

impl<'a> WeightedView<'a> {
    /// Validates that weights are nonnegative, match the part lengths and sum to 1 within 1e-9.
    pub fn new(parts: Vec<(&'a Dataset, Vec<f64>)>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| MsaError::InvalidData("empty weighted view".into()))?
            .0;
        let mut total = 0.0;
        for (d, w) in &parts {
            if w.len() != d.len() {
                return Err(MsaError::LengthMismatch {
                    what: "weight vector",
                    expected: d.len(),
                    actual: w.len(),
                });
            }
            if d.dim() != first.dim() {
                return Err(MsaError::DimensionMismatch {
                    expected: first.dim(),
                    actual: d.dim(),
                });
            }
            if d.task() != first.task() {
                return Err(MsaError::TaskMismatch("weighted view mixes tasks".into()));
            }
            if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(MsaError::InvalidData(format!("invalid example weight {v}")));
            }
            total += w.iter().sum::<f64>();
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(MsaError::InvalidData(format!(
                "example weights sum to {total}, expected 1"
            )));
        }
        Ok(WeightedView { parts })
    }

    pub fn uniform(data: &'a Dataset) -> Self {
        let n = data.len();
        WeightedView {
            parts: vec![(data, vec![1.0 / n as f64; n])],
        }
    }

    /// Splits a flat weight vector laid out over `datasets` in order.
    pub fn from_flat(datasets: &[&'a Dataset], weights: &[f64]) -> Result<Self> {
        let total: usize = datasets.iter().map(|d| d.len()).sum();
        if weights.len() != total {
            return Err(MsaError::LengthMismatch {
                what: "weight vector",
                expected: total,
                actual: weights.len(),
            });
        }
        let mut offset = 0;
        let mut parts = Vec::with_capacity(datasets.len());
        for d in datasets {
            parts.push((*d, weights[offset..offset + d.len()].to_vec()));
            offset += d.len();
        }
        WeightedView::new(parts)
    }

    /// Each dataset `k` contributes mass `mass[k]`, spread uniformly over its examples.
    pub fn mixture(datasets: &[&'a Dataset], mass: &[f64]) -> Result<Self> {
        if datasets.len() != mass.len() {
            return Err(MsaError::LengthMismatch {
                what: "mixture weight",
                expected: datasets.len(),
                actual: mass.len(),
            });
        }
        let parts = datasets
            .iter()
            .zip(mass)
            .map(|(d, &l)| (*d, vec![l / d.len() as f64; d.len()]))
            .collect();
        WeightedView::new(parts)
    }

    pub fn dim(&self) -> usize {
        self.parts[0].0.dim()
    }

    pub fn task(&self) -> Task {
        self.parts[0].0.task()
    }

    pub fn parts(&self) -> &[(&'a Dataset, Vec<f64>)] {
        &self.parts
    }

    /// Iterates `(x, y, w)` over examples with strictly positive weight.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], Label, f64)> + '_ {
        self.parts.iter().flat_map(|(d, w)| {
            d.iter()
                .zip(w.iter().copied())
                .filter(|(_, w)| *w > 0.0)
                .map(|((x, y), w)| (x, y, w))
        })
    }
}

/// One target sample plus `p >= 1` source samples.
#[derive(Clone, Debug)]
pub struct DomainCollection {
    target: Dataset,
    sources: Vec<Dataset>,
}

impl DomainCollection {
    pub fn new(target: Dataset, sources: Vec<Dataset>) -> Result<Self> {
        if sources.is_empty() {
            return Err(MsaError::InvalidData("need at least one source domain".into()));
        }
        for s in &sources {
            if s.dim() != target.dim() {
                return Err(MsaError::DimensionMismatch {
                    expected: target.dim(),
                    actual: s.dim(),
                });
            }
            if s.task() != target.task() {
                return Err(MsaError::TaskMismatch(format!(
                    "source {} has task {:?}, target has {:?}",
                    s.domain_id(),
                    s.task(),
                    target.task()
                )));
            }
        }
        Ok(DomainCollection { target, sources })
    }

    pub fn target(&self) -> &Dataset {
        &self.target
    }

    pub fn sources(&self) -> &[Dataset] {
        &self.sources
    }

    pub fn source(&self, k: usize) -> &Dataset {
        &self.sources[k]
    }

    pub fn p(&self) -> usize {
        self.sources.len()
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn task(&self) -> Task {
        self.target.task()
    }

    pub fn m0(&self) -> usize {
        self.target.len()
    }

    pub fn source_sizes(&self) -> Vec<usize> {
        self.sources.iter().map(Dataset::len).collect()
    }

    /// Total source count `m`.
    pub fn total_source(&self) -> usize {
        self.sources.iter().map(Dataset::len).sum()
    }

    /// Empirical proportions `m_k / m`.
    pub fn sample_proportions(&self) -> Vec<f64> {
        let m = self.total_source() as f64;
        self.sources.iter().map(|s| s.len() as f64 / m).collect()
    }

    pub fn with_target(&self, target: Dataset) -> Result<DomainCollection> {
        DomainCollection::new(target, self.sources.clone())
    }
}
