//! Mixture weights on the probability simplex, grid covers of the simplex,
//! skewness, and the per-example weights of a mixed empirical distribution.

use std::fmt::Write as _;

use crate::data::DomainCollection;
use crate::error::{MsaError, Result};

const SUM_TOL: f64 = 1e-9;
const MAX_COVER_POINTS: u128 = 2_000_000;

/// A point of the simplex `Delta_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureWeight(Vec<f64>);

impl MixtureWeight {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(MsaError::InvalidData("mixture weight must have p >= 1 entries".into()));
        }
        if let Some(v) = lambda.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(MsaError::InvalidData(format!("mixture weight entry {v} is not >= 0")));
        }
        let total: f64 = lambda.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(MsaError::InvalidData(format!(
                "mixture weight sums to {total}, expected 1"
            )));
        }
        Ok(MixtureWeight(lambda))
    }

    /// Rescales a nonnegative vector onto the simplex.
    pub fn normalized(raw: Vec<f64>) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(MsaError::InvalidData(format!("cannot normalize weights summing to {total}")));
        }
        MixtureWeight::new(raw.into_iter().map(|v| v / total).collect())
    }

    pub fn uniform(p: usize) -> Self {
        MixtureWeight(vec![1.0 / p as f64; p])
    }

    pub fn vertex(p: usize, k: usize) -> Self {
        let mut v = vec![0.0; p];
        v[k] = 1.0;
        MixtureWeight(v)
    }

    pub fn p(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Finite epsilon-cover of the simplex in the l1 norm.
#[derive(Clone, Debug)]
pub struct SimplexCover {
    epsilon: f64,
    points: Vec<MixtureWeight>,
}

impl SimplexCover {
    /// A cover made of caller-supplied points (no cover guarantee implied).
    pub fn from_points(epsilon: f64, points: Vec<MixtureWeight>) -> Result<Self> {
        let p = points
            .first()
            .ok_or_else(|| MsaError::Config("cover needs at least one point".into()))?
            .p();
        if points.iter().any(|pt| pt.p() != p) {
            return Err(MsaError::Config("cover points have different dimensions".into()));
        }
        Ok(SimplexCover { epsilon, points })
    }

    /// The `p` vertices of the simplex.
    pub fn vertices(p: usize) -> Self {
        SimplexCover {
            epsilon: 1.0,
            points: (0..p).map(|k| MixtureWeight::vertex(p, k)).collect(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn points(&self) -> &[MixtureWeight] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn p(&self) -> usize {
        self.points[0].p()
    }

    /// One row per point, columns `lambda_1..lambda_p`.
    pub fn to_csv(&self) -> String {
        let p = self.p();
        let mut out = (1..=p).map(|k| format!("lambda_{k}")).collect::<Vec<_>>().join(",");
        out.push('\n');
        for pt in &self.points {
            let row: Vec<String> = pt.as_slice().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Grid cover: each of the first `p - 1` coordinates ranges over the
/// multiples of `epsilon / p` in `[0, 1]`, the last coordinate takes the
/// remainder, and assignments whose partial sum exceeds 1 are dropped.
///
/// Rounding each coordinate of any `lambda` up or down so the rounding
/// errors sum into `[0, epsilon / p)` reaches a grid point at l1 distance
/// below `epsilon`.
pub fn make_cover(p: usize, epsilon: f64) -> Result<SimplexCover> {
    if p == 0 {
        return Err(MsaError::Config("p must be >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(MsaError::Config(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if p == 1 {
        return Ok(SimplexCover {
            epsilon,
            points: vec![MixtureWeight(vec![1.0])],
        });
    }
    let step = epsilon / p as f64;
    // number of grid steps that fit in [0, 1]
    let steps = ((p as f64 / epsilon) + 1e-9).floor() as usize;
    let size = binomial((steps + p - 1) as u128, (p - 1) as u128);
    if size > MAX_COVER_POINTS {
        return Err(MsaError::Config(format!(
            "cover for p = {p}, epsilon = {epsilon} would have {size} points; use a larger epsilon"
        )));
    }

    let free = p - 1;
    let mut counts = vec![0usize; free];
    let mut points = Vec::with_capacity(size as usize);
    loop {
        let used: usize = counts.iter().sum();
        if used <= steps {
            let mut lambda: Vec<f64> = counts.iter().map(|&c| c as f64 * step).collect();
            let partial: f64 = lambda.iter().sum();
            if partial <= 1.0 + 1e-12 {
                lambda.push((1.0 - partial).max(0.0));
                // remove the rounding residue so the point lies on the simplex
                let total: f64 = lambda.iter().sum();
                if total != 1.0 {
                    let last = lambda.len() - 1;
                    lambda[last] = (lambda[last] + (1.0 - total)).max(0.0);
                }
                points.push(MixtureWeight(lambda));
            }
        }
        // odometer increment, last free coordinate fastest
        let mut i = free;
        loop {
            if i == 0 {
                return Ok(SimplexCover { epsilon, points });
            }
            i -= 1;
            counts[i] += 1;
            if counts[..=i].iter().sum::<usize>() <= steps {
                break;
            }
            counts[i] = 0;
        }
    }
}

/// Default cover resolution for `p` sources.
pub fn default_epsilon(p: usize) -> f64 {
    match p {
        0..=4 => 0.25,
        5..=6 => 0.5,
        _ => 1.0,
    }
}

/// Skewness `s(lambda || mhat) = sum_k lambda_k^2 / mhat_k`, which is `>= 1`
/// with equality iff `lambda = mhat`.
pub fn skewness(lambda: &MixtureWeight, mhat: &MixtureWeight) -> Result<f64> {
    if lambda.p() != mhat.p() {
        return Err(MsaError::LengthMismatch {
            what: "sample proportions",
            expected: lambda.p(),
            actual: mhat.p(),
        });
    }
    let mut s = 0.0;
    for (k, (&l, &m)) in lambda.as_slice().iter().zip(mhat.as_slice()).enumerate() {
        if l > 0.0 {
            if m <= 0.0 {
                return Err(MsaError::InfiniteSkewness { index: k, lambda: l });
            }
            s += l * l / m;
        }
    }
    Ok(s)
}

/// Per-example weights of the mixed empirical distribution: every example of
/// source `k` gets `lambda_k / m_k`. Layout follows the sources in order.
pub fn mix_weights(lambda: &MixtureWeight, coll: &DomainCollection) -> Result<Vec<f64>> {
    if lambda.p() != coll.p() {
        return Err(MsaError::LengthMismatch {
            what: "mixture weight",
            expected: coll.p(),
            actual: lambda.p(),
        });
    }
    let mut w = Vec::with_capacity(coll.total_source());
    for (src, &l) in coll.sources().iter().zip(lambda.as_slice()) {
        let per = l / src.len() as f64;
        w.extend(std::iter::repeat_n(per, src.len()));
    }
    Ok(w)
}
