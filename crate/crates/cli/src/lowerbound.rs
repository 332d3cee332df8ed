//! `lowerbound`: mean excess risk over a `(p, m0)` grid, with an optional
//! SVG plot against `sqrt(p / m0)`.

use std::fmt::Write as _;
use std::path::Path;

use msa_core::lowerbound::{rows_to_csv, simulate_penalty, LbAlgorithm, PenaltyRow};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::gen::write_text;

pub const LOWERBOUND_KEYS: &[&str] = &["p", "m0", "trials", "algorithm", "seed", "output", "plot"];

pub const DEFAULT_P: [usize; 3] = [4, 8, 16];
pub const DEFAULT_M0: [usize; 4] = [50, 100, 200, 400];

pub fn parse_algorithm(name: &str) -> Result<LbAlgorithm> {
    [LbAlgorithm::PluginMajority, LbAlgorithm::LmsaAdapter]
        .into_iter()
        .find(|a| a.name() == name)
        .ok_or_else(|| CliError::Config(format!("unknown lowerbound algorithm `{name}`; expected plugin or lmsa")))
}

pub fn cmd_lowerbound(cfg: &ExperimentConfig) -> Result<Vec<PenaltyRow>> {
    cfg.check_keys(LOWERBOUND_KEYS)?;
    let ps = cfg.get_list::<usize>("p")?.unwrap_or_else(|| DEFAULT_P.to_vec());
    let m0s = cfg.get_list::<usize>("m0")?.unwrap_or_else(|| DEFAULT_M0.to_vec());
    let alg = parse_algorithm(cfg.get_str("algorithm").unwrap_or("plugin"))?;
    let rows = simulate_penalty(&ps, &m0s, cfg.get_or("trials", 500usize)?, alg, cfg.get_or("seed", 0u64)?)?;
    if let Some(path) = cfg.get_str("output") {
        write_text(Path::new(path), &rows_to_csv(&rows))?;
    }
    if let Some(path) = cfg.get_str("plot") {
        write_text(Path::new(path), &plot_svg(&rows))?;
    }
    Ok(rows)
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Scatter of mean excess (with one-stderr bars) against `sqrt(p / m0)`,
/// one series per `p`.
pub fn plot_svg(rows: &[PenaltyRow]) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let xs: Vec<f64> = rows.iter().map(|r| (r.p as f64 / r.m0 as f64).sqrt()).collect();
    let x_max = xs.iter().cloned().fold(0.0, f64::max).max(1e-12) * 1.05;
    let y_max = rows
        .iter()
        .map(|r| r.mean_excess + r.stderr)
        .fold(0.0, f64::max)
        .max(1e-12)
        * 1.1;
    let px = |x: f64| pad + x / x_max * (w - 2.0 * pad);
    let py = |y: f64| h - pad - y / y_max * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{pad}" y1="{y0}" x2="{pad}" y2="{pad}" stroke="black"/>"#,
        y0 = h - pad,
        x1 = w - pad
    );
    for i in 0..=4 {
        let (fx, fy) = (x_max * i as f64 / 4.0, y_max * i as f64 / 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            px(fx),
            h - pad + 18.0,
            fx
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.4}</text>"#,
            pad - 6.0,
            py(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">sqrt(p / m0)</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">mean excess risk</text>"#,
        h / 2.0,
        h / 2.0
    );

    let mut ps: Vec<usize> = rows.iter().map(|r| r.p).collect();
    ps.dedup();
    for (j, p) in ps.iter().enumerate() {
        let color = COLORS[j % COLORS.len()];
        for (r, x) in rows.iter().zip(&xs).filter(|(r, _)| r.p == *p) {
            let (cx, cy) = (px(*x), py(r.mean_excess));
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#,
                py(r.mean_excess - r.stderr),
                py(r.mean_excess + r.stderr)
            );
            let _ = writeln!(s, r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="4" fill="{color}"/>"#);
        }
        let ly = pad + 16.0 * j as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{ly:.1}" r="4" fill="{color}"/><text x="{:.1}" y="{:.1}">p = {p}</text>"#,
            w - pad - 60.0,
            w - pad - 50.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
