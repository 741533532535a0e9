use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::metrics::MetricSeries;
use crate::harness::trial::TrialRecord;

/// Steps skipped when reporting `rho_min`; the first fusions run on the shared prior.
pub const RHO_WARMUP: usize = 5;

/// Window used for "final" MSE and NoB figures in the summary.
pub const FINAL_WINDOW: usize = 20;

/// Column label `"<estimator>@<rule>"`.
fn column(series: &MetricSeries, estimator: &str) -> String {
    format!("{estimator}@{}", series.rule.label())
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("csv encoding: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::invalid(format!("csv encoding: {e}")))
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Per-step table with one column per `(label, values)` pair.
fn step_table(columns: &[(String, &[f64])]) -> Result<Vec<u8>> {
    let steps = columns.iter().map(|c| c.1.len()).max().unwrap_or(0);
    let mut header = vec!["step".to_string()];
    header.extend(columns.iter().map(|c| c.0.clone()));
    csv_bytes(
        &header,
        (0..steps).map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(columns.iter().map(|c| c.1.get(k).map(|v| v.to_string()).unwrap_or_default()));
            row
        }),
    )
}

fn mse_columns(series: &[MetricSeries]) -> Vec<(String, &[f64])> {
    series
        .iter()
        .flat_map(|s| s.estimators.iter().map(move |e| (column(s, e.estimator.name()), e.mse.as_slice())))
        .collect()
}

fn nob_columns(series: &[MetricSeries]) -> Vec<(String, &[f64])> {
    series
        .iter()
        .flat_map(|s| {
            s.estimators
                .iter()
                .filter_map(move |e| e.nob.as_deref().map(|n| (column(s, e.estimator.name()), n)))
        })
        .collect()
}

/// Writes `mse.csv`, `nob.csv`, `cert.csv`, `trials.csv`, `summary.txt`,
/// `mse.svg` and `nob.svg` into `out_dir`, creating it if needed.
///
/// `records[r]` holds the trials behind `series[r]`; pass an empty slice to
/// skip `trials.csv`.
pub fn emit_outputs(series: &[MetricSeries], records: &[Vec<TrialRecord>], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if series.is_empty() || series.iter().any(|s| s.estimators.is_empty() || s.steps == 0) {
        return Err(Error::invalid("nothing to write: empty metric series"));
    }
    if !records.is_empty() && records.len() != series.len() {
        return Err(Error::invalid("records must be given per series or not at all"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let mse = mse_columns(series);
    written.push(write_file(out_dir.join("mse.csv"), &step_table(&mse)?)?);
    let nob = nob_columns(series);
    written.push(write_file(out_dir.join("nob.csv"), &step_table(&nob)?)?);

    let header: Vec<String> = ["rule", "estimator", "cert_rate", "rho_min", "events"]
        .map(String::from)
        .to_vec();
    let cert_rows = series.iter().flat_map(|s| {
        s.estimators.iter().filter(|e| e.estimator.is_event_triggered()).map(move |e| {
            vec![
                s.rule.label().to_string(),
                e.estimator.name().to_string(),
                e.cert_rate(0).map(|v| v.to_string()).unwrap_or_default(),
                e.rho_min_from(RHO_WARMUP).map(|v| v.to_string()).unwrap_or_default(),
                e.certificate_events(0).to_string(),
            ]
        })
    });
    written.push(write_file(out_dir.join("cert.csv"), &csv_bytes(&header, cert_rows)?)?);

    if !records.is_empty() {
        written.push(write_file(out_dir.join("trials.csv"), &trials_table(series, records)?)?);
    }

    written.push(write_file(out_dir.join("summary.txt"), summary(series).as_bytes())?);
    written.push(write_file(
        out_dir.join("mse.svg"),
        line_chart("MSE per step", &mse, true).as_bytes(),
    )?);
    written.push(write_file(
        out_dir.join("nob.svg"),
        line_chart("Broadcasts per step", &nob, false).as_bytes(),
    )?);
    Ok(written)
}

fn trials_table(series: &[MetricSeries], records: &[Vec<TrialRecord>]) -> Result<Vec<u8>> {
    let header: Vec<String> = ["rule", "trial", "seed", "estimator", "step", "mse", "nob"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for (s, recs) in series.iter().zip(records) {
        for r in recs {
            for t in &r.traces {
                for k in 0..r.steps() {
                    rows.push(vec![
                        s.rule.label().to_string(),
                        r.trial.to_string(),
                        r.seed.to_string(),
                        t.estimator.name().to_string(),
                        k.to_string(),
                        t.mse_at(k).to_string(),
                        t.rounds.get(k).map(|x| x.nob.to_string()).unwrap_or_default(),
                    ]);
                }
            }
        }
    }
    csv_bytes(&header, rows.into_iter())
}

fn summary(series: &[MetricSeries]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "MSE(k) = (1/trials) * sum over trials of (1/N) * sum over nodes of |x_hat_i(k) - x(k)|^2"
    );
    let _ = writeln!(out, "final figures average the last {FINAL_WINDOW} steps; rho_min skips the first {RHO_WARMUP} steps");
    for s in series {
        let _ = writeln!(
            out,
            "\nrule {} ({} trials, N = {}, {} steps)",
            s.rule, s.trials, s.nodes, s.steps
        );
        for e in &s.estimators {
            let _ = write!(
                out,
                "  {:<13} mse[0] {:.4e}  final mse {:.4e}  nees {:.3}",
                e.estimator.name(),
                e.mse[0],
                e.final_mse(FINAL_WINDOW),
                e.mean_nees(s.steps / 2)
            );
            if let Some(nob) = e.mean_nob(FINAL_WINDOW) {
                let _ = write!(out, "  final nob {nob:.2}");
            }
            if let Some(rate) = e.cert_rate(0) {
                let _ = write!(out, "  cert_rate {rate:.4}");
            }
            if let Some(rho) = e.rho_min_from(RHO_WARMUP) {
                let _ = write!(out, "  rho_min {rho:.4}");
            }
            out.push('\n');
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Minimal SVG line chart; non-positive values are dropped on a log axis.
pub fn line_chart(title: &str, columns: &[(String, &[f64])], log_y: bool) -> String {
    let (w, h, left, right, top, bottom) = (720.0, 420.0, 70.0, 170.0, 36.0, 40.0);
    let tf = |v: f64| if log_y { v.log10() } else { v };
    let usable = |v: &f64| v.is_finite() && (!log_y || *v > 0.0);
    let values: Vec<f64> = columns
        .iter()
        .flat_map(|c| c.1.iter().filter(|v| usable(v)).map(|&v| tf(v)))
        .collect();
    let steps = columns.iter().map(|c| c.1.len()).max().unwrap_or(0).max(2);
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if !log_y {
        lo = lo.min(0.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let px = |k: usize| left + (w - left - right) * k as f64 / (steps - 1) as f64;
    let py = |v: f64| top + (h - top - bottom) * (1.0 - (tf(v) - lo) / (hi - lo));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for i in 0..=4 {
        let t = lo + (hi - lo) * i as f64 / 4.0;
        let y = top + (h - top - bottom) * (1.0 - i as f64 / 4.0);
        let label = if log_y { format!("{:.1e}", 10f64.powf(t)) } else { format!("{t:.2}") };
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#, left - 6.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{left}" y="{}">0</text>"#, h - bottom + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, w - right, h - bottom + 16.0, steps - 1);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, (left + w - right) / 2.0, h - 8.0);

    for (i, (label, vals)) in columns.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = vals
            .iter()
            .enumerate()
            .filter(|(_, v)| usable(v))
            .map(|(k, &v)| format!("{:.2},{:.2}", px(k), py(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - right + 10.0,
            w - right + 30.0,
            w - right + 36.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Parses a per-step table written by [`emit_outputs`] back into its header and
/// columns. Empty cells read as NaN.
pub fn read_step_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let bad = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    let header: Vec<String> = r.headers().map_err(bad)?.iter().map(String::from).collect();
    if header.first().map(String::as_str) != Some("step") {
        return Err(Error::invalid(format!("{}: first column must be 'step'", path.display())));
    }
    let mut cols = vec![Vec::new(); header.len() - 1];
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(bad)?;
        if rec.get(0) != Some(k.to_string().as_str()) {
            return Err(Error::invalid(format!("{}: row {k} out of order", path.display())));
        }
        for (c, cell) in rec.iter().skip(1).enumerate() {
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse()
                    .map_err(|_| Error::invalid(format!("{}: bad number '{cell}'", path.display())))?
            };
            cols[c].push(v);
        }
    }
    Ok((header[1..].to_vec(), cols))
}
