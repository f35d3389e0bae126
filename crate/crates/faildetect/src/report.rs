//! Result files: JSON, flat CSV, risk-coverage curves, SVG boxplots, score
//! vectors and the toy report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use faildetect_core::stats::Summary;
use faildetect_core::toy::{HistogramBin, ToyReport};

use crate::bench::{BenchmarkResult, ScoredRun};
use crate::error::{Error, Result};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let json = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    write(path, json)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// One row per score × seed × metric.
pub fn results_csv(result: &BenchmarkResult) -> String {
    let mut out = String::from("score,seed,metric,value\n");
    for r in &result.reports {
        for (metric, value) in r.metrics() {
            let _ = writeln!(out, "{},{},{},{}", r.score_name, r.seed, metric, value);
        }
    }
    out
}

/// Writes results.json, results.csv, `risk_coverage/<score>.csv` and one
/// `boxplot_<metric>.svg` per metric. Returns the written paths.
pub fn emit_report(result: &BenchmarkResult, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let mut written = vec![
        write_json(&out.join("results.json"), result)?,
        write(&out.join("results.csv"), results_csv(result))?,
    ];
    let rc_dir = out.join("risk_coverage");
    create_dir(&rc_dir)?;
    for score in &result.provenance.scores {
        let mut csv = String::from("seed,coverage,risk\n");
        let mut any = false;
        for r in result.reports.iter().filter(|r| &r.score_name == score) {
            any = true;
            for p in &r.risk_coverage {
                let _ = writeln!(csv, "{},{},{}", r.seed, p.coverage, p.risk);
            }
        }
        if any {
            written.push(write(&rc_dir.join(format!("{score}.csv")), csv)?);
        }
    }
    let mut metrics: Vec<&str> = Vec::new();
    for agg in &result.aggregates {
        for m in agg.metrics.keys() {
            if !metrics.contains(&m.as_str()) {
                metrics.push(m);
            }
        }
    }
    for metric in metrics {
        let groups: Vec<(&str, &Summary)> = result
            .aggregates
            .iter()
            .filter_map(|a| a.metrics.get(metric).map(|s| (a.score_name.as_str(), s)))
            .collect();
        written.push(write(&out.join(format!("boxplot_{metric}.svg")), boxplot_svg(metric, &groups))?);
    }
    Ok(written)
}

/// Boxes span the quartiles, whiskers the min and max over seeds.
pub fn boxplot_svg(title: &str, groups: &[(&str, &Summary)]) -> String {
    let (width, height) = (80.0 + 90.0 * groups.len().max(1) as f64, 360.0);
    let (top, bottom, left) = (40.0, 300.0, 60.0);
    let lo = groups.iter().map(|(_, s)| s.min).fold(f64::INFINITY, f64::min);
    let hi = groups.iter().map(|(_, s)| s.max).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if groups.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.05, hi + 0.05)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    };
    let y = |v: f64| bottom - (v - lo) / (hi - lo) * (bottom - top);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, width / 2.0);
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * f64::from(k) / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            left - 5.0,
            y(v) + 4.0
        );
    }
    for (i, (name, s)) in groups.iter().enumerate() {
        let cx = left + 45.0 + 90.0 * i as f64;
        let (bx, bw) = (cx - 20.0, 40.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{cx}" y1="{:.2}" x2="{cx}" y2="{:.2}" stroke="black"/>"#,
            y(s.max),
            y(s.min)
        );
        for v in [s.min, s.max] {
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="black"/>"#,
                cx - 10.0,
                y(v),
                cx + 10.0,
                y(v)
            );
        }
        let _ = writeln!(
            svg,
            r##"<rect x="{bx}" y="{:.2}" width="{bw}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            y(s.q3),
            (y(s.q1) - y(s.q3)).max(0.5)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{bx}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            y(s.median),
            bx + bw,
            y(s.median)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{name}</text>"#,
            bottom + 18.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// `sample_index,score,predicted_class,label,correct` for one scored split.
pub fn score_csv(run: &ScoredRun) -> String {
    let mut out = String::from("sample_index,score,predicted_class,label,correct\n");
    for (i, ((&s, &p), &l)) in run
        .scored
        .scores
        .scores
        .iter()
        .zip(&run.scored.predicted)
        .zip(&run.labels)
        .enumerate()
    {
        let _ = writeln!(out, "{i},{s},{p},{l},{}", u8::from(p == l));
    }
    out
}

pub fn write_score_csvs(runs: &[ScoredRun], out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join("scores");
    create_dir(&dir)?;
    runs.iter()
        .map(|r| write(&dir.join(format!("{}_seed{}.csv", r.method, r.seed)), score_csv(r)))
        .collect()
}

fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("lower,upper,correct,incorrect\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{},{}", b.lower, b.upper, b.correct, b.incorrect);
    }
    out
}

/// toy_report.json plus one histogram CSV per model.
pub fn write_toy_report(report: &ToyReport, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    Ok(vec![
        write_json(&out.join("toy_report.json"), report)?,
        write(&out.join("toy_histogram_model1.csv"), histogram_csv(&report.histogram_model1))?,
        write(&out.join("toy_histogram_model2.csv"), histogram_csv(&report.histogram_model2))?,
    ])
}

pub fn read_result(path: &Path) -> Result<BenchmarkResult> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}
