//! Renders the CSV artifacts of an experiment run directory as SVG.

use std::fs;
use std::path::{Path, PathBuf};

use overparam::{Error, Result};

use crate::svg::{self, LineChart, Series};

/// A numeric CSV with a header row; empty cells read as NaN.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::validation(format!("{} is empty", path.display())))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| {
                    let cell = cell.trim();
                    if cell.is_empty() {
                        return Ok(f64::NAN);
                    }
                    cell.parse::<f64>().map_err(|_| Error::Parse {
                        path: path.to_path_buf(),
                        line: idx as u64 + 2,
                        message: format!("'{cell}' is not a number"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx as u64 + 2,
                    message: format!("expected {} columns, found {}", header.len(), row.len()),
                });
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str, path: &Path) -> Result<Vec<f64>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("{} has no column '{name}'", path.display())))?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

fn series(table: &Table, path: &Path, x: &str, y: &str, f: impl Fn(f64) -> f64, name: &str) -> Result<Series> {
    let xs = table.column(x, path)?;
    let ys = table.column(y, path)?;
    Ok(Series {
        name: name.to_string(),
        points: xs.into_iter().zip(ys).map(|(a, b)| (a, f(b))).collect(),
    })
}

/// File suffixes `s` for which `<prefix><s>.csv` exists, sorted.
fn suffixes(dir: &Path, prefix: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(rest) = name.strip_prefix(prefix) {
            if let Some(sfx) = rest.strip_suffix(".csv") {
                out.push(sfx.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn write(path: PathBuf, contents: String, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes one SVG per loss curve set and per figure found in `dir`.
pub fn render_run_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::validation(format!("run directory {} does not exist", dir.display())));
    }
    let mut written = Vec::new();

    for sfx in suffixes(dir, "prediction")? {
        let trace = dir.join(format!("trace{sfx}.csv"));
        if !trace.exists() {
            return Err(Error::validation(format!("missing trace file {}", trace.display())));
        }
    }
    for sfx in suffixes(dir, "trace")? {
        let trace_path = dir.join(format!("trace{sfx}.csv"));
        let trace = Table::read(&trace_path)?;
        let mut curves = vec![series(&trace, &trace_path, "k", "loss_sq", f64::sqrt, "measured")?];
        let pred_path = dir.join(format!("prediction{sfx}.csv"));
        if pred_path.exists() {
            let t = Table::read(&pred_path)?;
            curves.push(series(&t, &pred_path, "k", "predicted", |v| v, "eigen prediction")?);
        }
        let bound_path = dir.join(format!("bound{sfx}.csv"));
        if bound_path.exists() {
            let t = Table::read(&bound_path)?;
            curves.push(series(&t, &bound_path, "k", "bound", f64::sqrt, "rate bound")?);
        }
        let chart = LineChart {
            title: format!("training loss{sfx}"),
            x_label: "step k".into(),
            y_label: "||u(k) - y||_2".into(),
            log_y: true,
            series: curves,
        };
        write(dir.join(format!("loss{sfx}.svg")), svg::line_chart(&chart), &mut written)?;
    }

    let fig1 = dir.join("fig1.csv");
    if fig1.exists() {
        let t = Table::read(&fig1)?;
        for (col, title) in [("lambda", "smallest eigenvalue of H^cts"), ("theta", "theta")] {
            let chart = LineChart {
                title: title.into(),
                x_label: "n".into(),
                y_label: col.into(),
                log_y: false,
                series: vec![series(&t, &fig1, "n", col, |v| v, col)?],
            };
            write(dir.join(format!("fig1_{col}.svg")), svg::line_chart(&chart), &mut written)?;
        }
    }

    let hist = dir.join("fig2_hist.csv");
    if hist.exists() {
        let t = Table::read(&hist)?;
        let lo = t.column("lo", &hist)?;
        let hi = t.column("hi", &hist)?;
        let count = t.column("count", &hist)?;
        let bins: Vec<(f64, f64, f64)> = lo.into_iter().zip(hi).zip(count).map(|((a, b), c)| (a, b, c)).collect();
        write(
            dir.join("fig2.svg"),
            svg::histogram("||H(w) - E H(w)||_2 over weight samples", "spectral deviation", &bins),
            &mut written,
        )?;
    }

    if written.is_empty() {
        return Err(Error::validation(format!(
            "missing trace file {} (no plottable CSV in the run directory)",
            dir.join("trace.csv").display()
        )));
    }
    Ok(written)
}
