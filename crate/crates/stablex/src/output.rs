//! Result files. CSV files start with `#` comment lines carrying the config
//! hash and seed; floats are written with 17 significant digits. JSON files
//! wrap the report in an [`Envelope`] with the same provenance.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stablex_core::hydro::{CauchyReport, ConvergenceReport, ScalingReport, TaggedReport};
use stablex_core::lattice::LatticeFunction;
use stablex_core::particles::{ObservableSeries, ParticleConfig, Snapshot};
use stablex_core::stone::EquivalenceReport;
use stablex_core::Window;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(String),
}

/// SHA-256 of the compact JSON form of `value`, in hex.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub report: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(kind: &str, prov: &Provenance, report: T) -> Self {
        Self {
            kind: kind.into(),
            config_hash: prov.config_hash.clone(),
            seed: prov.seed,
            report,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// A CSV table with a fixed column order.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self, prov: &Provenance) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# config_sha256={}", prov.config_hash);
        let _ = writeln!(out, "# seed={}", prov.seed);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8"));
        out
    }
}

macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$(Cell::from($v)),*] };
}

/// Columns `x, x/N, value`.
pub fn frame_table(f: &LatticeFunction) -> Table {
    let mut t = Table::new(&["x", "x_over_n", "value"]);
    for (i, v) in f.values.iter().enumerate() {
        let x = f.window.site(i);
        t.push(row![x, x as f64 / f.n as f64, *v]);
    }
    t
}

/// One row per `(replica, time)`; columns `time, replica`, then one per
/// observable and the tagged site when present.
pub fn series_table(series: &[ObservableSeries]) -> Table {
    let h = series.first().map_or(0, |s| s.values.len());
    let tagged = series.first().is_some_and(|s| !s.tagged.is_empty());
    let mut cols = vec!["time".to_string(), "replica".to_string()];
    cols.extend((0..h).map(|k| format!("h{k}")));
    if tagged {
        cols.push("tagged".into());
    }
    let mut t = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for s in series {
        for (k, time) in s.times.iter().enumerate() {
            let mut r = row![*time, s.replica];
            r.extend(s.values.iter().map(|v| Cell::Float(v[k])));
            if tagged {
                r.push(Cell::Int(s.tagged[k]));
            }
            t.push(r);
        }
    }
    t
}

pub fn convergence_table(r: &ConvergenceReport) -> Table {
    let mut t = Table::new(&[
        "n",
        "t",
        "test_function",
        "mean",
        "se",
        "reference",
        "abs_error",
        "abs_error_se",
        "gamma_sq",
        "gamma_sq_se",
        "variance_bound",
        "bound_holds",
    ]);
    for x in &r.rows {
        t.push(row![
            x.n,
            x.t,
            x.test_function,
            x.mean,
            x.se,
            x.reference,
            x.abs_error,
            x.abs_error_se,
            x.gamma_sq,
            x.gamma_sq_se,
            x.variance_bound,
            x.bound_holds
        ]);
    }
    t
}

pub fn summary_table(r: &ConvergenceReport) -> Table {
    let mut t = Table::new(&["n", "test_function", "sup_abs_error", "sup_abs_error_se"]);
    for s in &r.summaries {
        t.push(row![s.n, s.test_function, s.sup_abs_error, s.sup_abs_error_se]);
    }
    t
}

pub fn cauchy_table(r: &CauchyReport) -> Table {
    let mut t = Table::new(&["n", "t", "distance"]);
    for x in &r.rows {
        t.push(row![x.n, x.t, x.distance]);
    }
    t
}

pub fn tagged_table(r: &TaggedReport) -> Table {
    let mut cols = vec!["n", "t", "quantile", "mean_abs_deviation", "replicas"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for k in 0..r.deltas.len() {
        cols.push(format!("exceedance_{k}"));
        cols.push(format!("exceedance_se_{k}"));
    }
    let mut t = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for x in &r.rows {
        let mut v = row![x.n, x.t, x.quantile, x.mean_abs_deviation, x.replicas];
        for (e, se) in x.exceedance.iter().zip(&x.exceedance_se) {
            v.push(Cell::Float(*e));
            v.push(Cell::Float(*se));
        }
        t.push(v);
    }
    t
}

pub fn scaling_table(r: &ScalingReport) -> Table {
    let mut t = Table::new(&["n", "median", "log_n", "log_median"]);
    for l in &r.levels {
        t.push(row![l.n, l.median, (l.n as f64).ln(), l.median.ln()]);
    }
    t
}

pub fn equivalence_table(r: &EquivalenceReport) -> Table {
    let mut t = Table::new(&["x0", "t", "replicas", "level", "statistic", "p_value", "passed"]);
    t.push(row![r.x0, r.t, r.replicas, r.level, r.ks.statistic, r.ks.p_value, r.passed]);
    t
}

/// Occupied runs as `lo..hi` (inclusive), separated by spaces; `-` when empty.
pub fn encode_occupancy(config: &ParticleConfig) -> String {
    let w = config.window();
    let occ = config.occupancy();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < occ.len() {
        if occ[i] {
            let start = i;
            while i < occ.len() && occ[i] {
                i += 1;
            }
            runs.push(format!("{}..{}", w.site(start), w.site(i - 1)));
        } else {
            i += 1;
        }
    }
    if runs.is_empty() {
        "-".into()
    } else {
        runs.join(" ")
    }
}

pub fn decode_occupancy(window: Window, text: &str, tagged: Option<i64>) -> Result<ParticleConfig, OutputError> {
    let bad = || OutputError::Format(format!("bad occupancy runs {text:?}"));
    let mut occ = vec![false; window.sites()];
    if text != "-" {
        for run in text.split(' ') {
            let (a, b) = run.split_once("..").ok_or_else(bad)?;
            let (a, b): (i64, i64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            for x in a..=b {
                occ[window.index(x).map_err(|_| bad())?] = true;
            }
        }
    }
    ParticleConfig::new(window, occ, tagged).map_err(|e| OutputError::Format(e.to_string()))
}

/// Columns `replica, time, tagged, runs`.
pub fn snapshot_table(runs: &[(u64, Vec<Snapshot>)]) -> Table {
    let mut t = Table::new(&["replica", "time", "tagged", "runs"]);
    for (r, snaps) in runs {
        for s in snaps {
            let tag = s.config.tagged().map_or(String::new(), |x| x.to_string());
            t.push(row![*r, s.time, tag, encode_occupancy(&s.config)]);
        }
    }
    t
}

/// Writes the files of one command into `dir`.
pub struct Writer {
    pub dir: PathBuf,
    pub prov: Provenance,
    pub csv: bool,
    pub json: bool,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, prov: Provenance, csv: bool, json: bool) -> Result<Self, OutputError> {
        std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prov,
            csv,
            json,
            written: Vec::new(),
        })
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), OutputError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|source| OutputError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<(), OutputError> {
        if self.csv {
            let text = table.to_csv(&self.prov);
            self.text(&format!("{name}.csv"), &text)?;
        }
        Ok(())
    }

    pub fn report<T: Serialize>(&mut self, name: &str, kind: &str, report: &T) -> Result<(), OutputError> {
        if self.json {
            let text = Envelope::new(kind, &self.prov, report).to_json();
            self.text(&format!("{name}.json"), &text)?;
        }
        Ok(())
    }
}
