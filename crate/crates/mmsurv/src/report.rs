//! Run reports and their files.
//!
//! Every file starts with a stamp naming the tool version and the config
//! hash. Nothing time-dependent is written, so the same `(config, seed)`
//! always produces the same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mmsurv_core::survival::KmCurve;
use mmsurv_core::train::EpochLog;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::TOOL_VERSION;

/// Evaluation of one model on one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainEval {
    pub domain: String,
    pub n: usize,
    pub events: usize,
    /// `None` when no pair is comparable.
    pub c_index: Option<f64>,
    pub risks: Vec<f64>,
    pub low: Vec<usize>,
    pub high: Vec<usize>,
    pub km_low: KmCurve,
    pub km_high: KmCurve,
}

/// Training and evaluation under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub log: Vec<EpochLog>,
    pub checkpoint: Checkpoint,
    pub source: DomainEval,
    pub targets: Vec<DomainEval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config_hash: String,
    pub source: String,
    pub targets: Vec<String>,
    pub runs: Vec<SeedRun>,
}

/// Mean, sample standard deviation and count of the defined values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Cell {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let v: Vec<f64> = values.iter().flatten().copied().collect();
        let n = v.len();
        if n == 0 {
            return Self {
                mean: None,
                std: None,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean: Some(mean),
            std: Some(std),
            n,
        }
    }

    /// `0.6831 ± 0.0120`, or `NA`.
    pub fn display(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
            _ => "NA".into(),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:?}"))
}

impl RunReport {
    /// Per-seed mean C-index over the targets with a defined value.
    pub fn target_average(run: &SeedRun) -> Option<f64> {
        let v: Vec<f64> = run.targets.iter().filter_map(|t| t.c_index).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// One cell per target, then the per-seed target average.
    pub fn target_cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> = (0..self.targets.len())
            .map(|k| {
                let v: Vec<Option<f64>> = self.runs.iter().map(|r| r.targets[k].c_index).collect();
                Cell::from_values(&v)
            })
            .collect();
        let avg: Vec<Option<f64>> = self.runs.iter().map(Self::target_average).collect();
        cells.push(Cell::from_values(&avg));
        cells
    }

    pub fn source_cell(&self) -> Cell {
        let v: Vec<Option<f64>> = self.runs.iter().map(|r| r.source.c_index).collect();
        Cell::from_values(&v)
    }

    /// Per-epoch loss terms averaged over seeds.
    pub fn mean_log(&self) -> Vec<EpochLog> {
        let Some(first) = self.runs.first() else {
            return Vec::new();
        };
        let k = self.runs.len() as f64;
        (0..first.log.len())
            .map(|e| {
                let mut acc = EpochLog {
                    epoch: e + 1,
                    steps: first.log[e].steps,
                    clean: 0.0,
                    sdir: 0.0,
                    kl: 0.0,
                    total: 0.0,
                };
                for r in &self.runs {
                    let l = &r.log[e];
                    acc.clean += l.clean / k;
                    acc.sdir += l.sdir / k;
                    acc.kl += l.kl / k;
                    acc.total += l.total / k;
                }
                acc
            })
            .collect()
    }
}

pub fn stamp(prefix: &str, hash: &str) -> String {
    format!("{prefix} {TOOL_VERSION} config={hash}\n")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Fails early when `dir` cannot be created or written.
pub fn ensure_writable(dir: &Path) -> Result<()> {
    mkdir(dir)?;
    let probe = dir.join(".mmsurv-write-probe");
    write(&probe, "")?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

pub fn log_csv(hash: &str, runs: &[(u64, &[EpochLog])]) -> String {
    let mut out = stamp("#", hash);
    out.push_str("seed,epoch,steps,clean,sdir,kl,total\n");
    for (seed, log) in runs {
        for l in *log {
            let _ = writeln!(
                out,
                "{seed},{},{},{:?},{:?},{:?},{:?}",
                l.epoch, l.steps, l.clean, l.sdir, l.kl, l.total
            );
        }
    }
    out
}

pub fn km_csv(hash: &str, eval: &DomainEval) -> String {
    let mut out = stamp("#", hash);
    out.push_str("group,time,survival,at_risk,deaths\n");
    for (group, c) in [("low", &eval.km_low), ("high", &eval.km_high)] {
        for i in 0..c.times.len() {
            let _ = writeln!(
                out,
                "{group},{:?},{:?},{},{}",
                c.times[i], c.survival[i], c.at_risk[i], c.deaths[i]
            );
        }
    }
    out
}

/// Step plot of the low-risk (blue) and high-risk (red) curves.
pub fn km_svg(hash: &str, eval: &DomainEval) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    let t_max = eval
        .km_low
        .times
        .iter()
        .chain(&eval.km_high.times)
        .fold(0.0f64, |a, &b| a.max(b))
        .max(f64::MIN_POSITIVE);
    let x = |t: f64| PAD + (W - 2.0 * PAD) * t / t_max;
    let y = |s: f64| H - PAD - (H - 2.0 * PAD) * s;
    let path = |c: &KmCurve| {
        let mut pts = format!("{:.2},{:.2}", x(0.0), y(1.0));
        let mut s = 1.0;
        for (t, v) in c.times.iter().zip(&c.survival) {
            let _ = write!(pts, " {:.2},{:.2} {:.2},{:.2}", x(*t), y(s), x(*t), y(*v));
            s = *v;
        }
        let _ = write!(pts, " {:.2},{:.2}", x(t_max), y(s));
        pts
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(out, "<!-- {TOOL_VERSION} config={hash} -->");
    let _ = writeln!(
        out,
        "<text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{} C-index {}</text>",
        eval.domain,
        eval.c_index.map_or_else(|| "NA".into(), |c| format!("{c:.4}"))
    );
    let _ = writeln!(
        out,
        "<polyline fill=\"none\" stroke=\"black\" points=\"{PAD},{PAD} {PAD},{} {},{}\"/>",
        H - PAD,
        W - PAD,
        H - PAD
    );
    for (c, colour, label, dy) in [
        (&eval.km_low, "blue", "low risk", 0.0),
        (&eval.km_high, "red", "high risk", 16.0),
    ] {
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>",
            path(c)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{colour}\">{label}</text>",
            W - PAD - 70.0,
            PAD + dy
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn results_csv(report: &RunReport) -> String {
    let mut out = stamp("#", &report.config_hash);
    out.push_str("seed,domain,role,n,events,c_index\n");
    for r in &report.runs {
        let rows =
            std::iter::once(("source", &r.source)).chain(r.targets.iter().map(|t| ("target", t)));
        for (role, e) in rows {
            let _ = writeln!(
                out,
                "{},{},{role},{},{},{}",
                r.seed,
                e.domain,
                e.n,
                e.events,
                opt(e.c_index)
            );
        }
    }
    out
}

pub fn summary_text(report: &RunReport) -> String {
    let mut out = stamp("#", &report.config_hash);
    let _ = writeln!(out, "seeds: {}", report.runs.len());
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<12} {:<8} C-index (mean ± std)", "domain", "role");
    let _ = writeln!(
        out,
        "{:<12} {:<8} {}",
        report.source,
        "source",
        report.source_cell().display()
    );
    let cells = report.target_cells();
    for (t, c) in report.targets.iter().zip(&cells) {
        let _ = writeln!(out, "{:<12} {:<8} {}", t, "target", c.display());
    }
    let _ = writeln!(
        out,
        "{:<12} {:<8} {}",
        "average",
        "target",
        cells[cells.len() - 1].display()
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "loss per epoch (mean over seeds)");
    let _ = writeln!(
        out,
        "{:>5} {:>10} {:>10} {:>10} {:>10}",
        "epoch", "clean", "sdir", "kl", "total"
    );
    for l in report.mean_log() {
        let _ = writeln!(
            out,
            "{:>5} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            l.epoch, l.clean, l.sdir, l.kl, l.total
        );
    }
    out
}

/// Writes a run report under `dir`.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<()> {
    let hash = &report.config_hash;
    mkdir(&dir.join("km"))?;
    mkdir(&dir.join("checkpoints"))?;
    write(&dir.join("results.csv"), &results_csv(report))?;
    write(&dir.join("summary.txt"), &summary_text(report))?;
    let logs: Vec<(u64, &[EpochLog])> = report
        .runs
        .iter()
        .map(|r| (r.seed, r.log.as_slice()))
        .collect();
    write(&dir.join("loss.csv"), &log_csv(hash, &logs))?;
    for r in &report.runs {
        r.checkpoint
            .save(&dir.join("checkpoints").join(format!("seed{}.ckpt", r.seed)))?;
        for e in std::iter::once(&r.source).chain(&r.targets) {
            let base = dir.join("km").join(format!("{}-seed{}", e.domain, r.seed));
            write(&base.with_extension("csv"), &km_csv(hash, e))?;
            write(&base.with_extension("svg"), &km_svg(hash, e))?;
        }
    }
    Ok(())
}

/// A table whose rows are labelled runs and whose metric columns are the
/// targets followed by their average.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub config_hash: String,
    /// Name of the row-label column.
    pub key: String,
    pub targets: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    /// Hash of the config the row was produced with.
    pub config_hash: String,
    pub cells: Vec<Cell>,
}

impl TableRow {
    pub fn from_report(label: impl Into<String>, report: &RunReport) -> Self {
        Self {
            label: label.into(),
            config_hash: report.config_hash.clone(),
            cells: report.target_cells(),
        }
    }
}

impl Table {
    pub fn metric_columns(&self) -> Vec<String> {
        let mut cols = self.targets.clone();
        cols.push("average".into());
        cols
    }

    pub fn to_csv(&self) -> String {
        let mut out = stamp("#", &self.config_hash);
        out.push_str(&self.key);
        for c in self.metric_columns() {
            let _ = write!(out, ",{c}_mean,{c}_std,{c}_seeds");
        }
        out.push_str(",config\n");
        for r in &self.rows {
            out.push_str(&r.label);
            for c in &r.cells {
                let _ = write!(out, ",{},{},{}", opt(c.mean), opt(c.std), c.n);
            }
            let _ = writeln!(out, ",{}", r.config_hash);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let cols = self.metric_columns();
        let label_w = self
            .rows
            .iter()
            .map(|r| r.label.chars().count())
            .chain([self.key.chars().count()])
            .max()
            .unwrap_or(0);
        let cell_w = 22;
        let mut out = format!("{}\n", self.title);
        let _ = write!(out, "{:<label_w$}", self.key);
        for c in &cols {
            let _ = write!(out, " | {c:^cell_w$}");
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(label_w + cols.len() * (cell_w + 3)));
        for r in &self.rows {
            let _ = write!(out, "{:<label_w$}", r.label);
            for c in &r.cells {
                let s = format!("{} (n={})", c.display(), c.n);
                let _ = write!(out, " | {s:^cell_w$}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn emit_table(table: &Table, dir: &Path, name: &str) -> Result<()> {
    mkdir(dir)?;
    write(&dir.join(format!("{name}.csv")), &table.to_csv())?;
    let text = stamp("#", &table.config_hash) + &table.to_text();
    write(&dir.join(format!("{name}.txt")), &text)
}
