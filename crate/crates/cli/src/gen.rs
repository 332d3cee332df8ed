//! `gen`: synthetic datasets in the core text format.

use std::fs;
use std::path::{Path, PathBuf};

use msa_core::synth::{gen_example1, gen_toy_regression, toy_target_sample, ToyRegressionSpec};
use msa_core::{Dataset, DomainCollection, MixtureWeight};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const TOY_KEYS: &[&str] = &["out", "seed", "p", "d", "m_k", "m0", "sigma_sq", "lambda_star", "test_n"];
pub const EXAMPLE1_KEYS: &[&str] = &["out", "n", "seed"];

/// Stream of the held-out toy test sample.
const TOY_TEST_STREAM: u64 = (1 << 20) + 1;

pub(crate) fn existing_dir(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::MissingDir(path.to_path_buf()))
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        existing_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_collection(dir: &Path, coll: &DomainCollection, test: &Dataset) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (k, src) in coll.sources().iter().enumerate() {
        let path = dir.join(format!("source{}.txt", k + 1));
        write_text(&path, &src.to_text())?;
        written.push(path);
    }
    for (name, data) in [("target.txt", coll.target()), ("test.txt", test)] {
        let path = dir.join(name);
        write_text(&path, &data.to_text())?;
        written.push(path);
    }
    Ok(written)
}

pub fn toy_spec(cfg: &ExperimentConfig) -> Result<ToyRegressionSpec> {
    let d = ToyRegressionSpec::default();
    let p = cfg.get_or("p", d.p)?;
    let lambda_star = match cfg.get_list::<f64>("lambda_star")? {
        Some(v) => MixtureWeight::new(v)?,
        None if p == d.p => d.lambda_star,
        None => MixtureWeight::uniform(p),
    };
    let spec = ToyRegressionSpec {
        p,
        d: cfg.get_or("d", d.d)?,
        m_k: cfg.get_or("m_k", d.m_k)?,
        m0: cfg.get_or("m0", d.m0)?,
        lambda_star,
        sigma_sq: cfg.get_or("sigma_sq", d.sigma_sq)?,
        seed: cfg.get_or("seed", d.seed)?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Writes `source{k}.txt`, `target.txt`, a held-out `test.txt` and the
/// `oracle.txt` sidecar with the true rules and mixture.
pub fn cmd_gen_toy(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.check_keys(TOY_KEYS)?;
    let dir = existing_dir(Path::new(cfg.require_str("out")?))?;
    let spec = toy_spec(cfg)?;
    let test_n = cfg.get_or("test_n", 10_000usize)?;
    if test_n == 0 {
        return Err(CliError::Config("test_n must be >= 1".into()));
    }
    let (coll, oracle) = gen_toy_regression(&spec)?;
    let (test, _) = toy_target_sample(&spec, &oracle.weights, test_n, TOY_TEST_STREAM)?;
    let mut written = write_collection(&dir, &coll, &test)?;
    let path = dir.join("oracle.txt");
    write_text(&path, &oracle.to_text())?;
    written.push(path);
    Ok(written)
}

/// Writes the three sources, target, held-out test sample and the
/// calibration report.
pub fn cmd_gen_example1(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.check_keys(EXAMPLE1_KEYS)?;
    let dir = existing_dir(Path::new(cfg.require_str("out")?))?;
    let ex = gen_example1(cfg.get_or("n", 2000usize)?, cfg.get_or("seed", 0u64)?)?;
    let mut written = write_collection(&dir, &ex.collection, &ex.target_test)?;
    let path = dir.join("calibration.txt");
    write_text(&path, &ex.calibration.to_text())?;
    written.push(path);
    Ok(written)
}

/// Reads `target.txt`, `source1.txt`, `source2.txt`, ... (until the first
/// missing index) and `test.txt` if present.
pub fn load_data_dir(dir: &Path) -> Result<(DomainCollection, Option<Dataset>)> {
    let dir = existing_dir(dir)?;
    let target = Dataset::read(dir.join("target.txt"), 0)?;
    let mut sources = Vec::new();
    loop {
        let path = dir.join(format!("source{}.txt", sources.len() + 1));
        if !path.exists() {
            break;
        }
        sources.push(Dataset::read(&path, sources.len() + 1)?);
    }
    if sources.is_empty() {
        return Err(CliError::Config(format!("no source1.txt in {}", dir.display())));
    }
    let test_path = dir.join("test.txt");
    let test = if test_path.exists() {
        Some(Dataset::read(&test_path, 0)?)
    } else {
        None
    };
    Ok((DomainCollection::new(target, sources)?, test))
}
