//! Recorded simulation output and its CSV + JSON manifest export.
//!
//! The CSV has one header row and one row per record. Columns are grouped
//! by signal and, inside a group, ordered by agent: `t`, `Q1x, Q1y, ...`,
//! `eta1x, ...`, `omega1x, ...`, `delta1x, ...`, `energy`, then the vessel
//! groups when the trace comes from a closed-loop run. Values are written
//! with 17 significant digits, so a re-import is bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::planner::Vec2;
use crate::vessel::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlannerSample {
    pub q: Vec2,
    pub eta_hat: Vec2,
    pub omega: Vec2,
    pub delta: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VesselSample {
    pub q: Vec3,
    pub nu: Vec3,
    pub e_b: Vec2,
    pub tau_hat: Vec3,
    pub tau_d: Vec3,
    pub tau_u: f64,
    pub tau_r: f64,
    pub f1: f64,
    pub f2: f64,
}

/// One transmitted estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub payload: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EventKind {
    FormationSwitch { index: usize },
    PlannerConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Series on a uniform time grid. `planner[k][i]` is agent `i` at
/// `time[k]`; `vessels` is empty for planner-only runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub agents: usize,
    pub time: Vec<f64>,
    pub planner: Vec<Vec<PlannerSample>>,
    pub energy: Vec<f64>,
    pub vessels: Vec<Vec<VesselSample>>,
    /// Estimates sent at each record, in sender-then-receiver order.
    pub messages: Vec<Vec<Message>>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub unit: String,
}

struct Column {
    info: ColumnInfo,
    values: Vec<f64>,
}

struct Field<S> {
    pattern: &'static str,
    unit: &'static str,
    get: fn(&S) -> f64,
    set: fn(&mut S, f64),
}

macro_rules! field {
    ($pattern:literal, $unit:literal, $($path:tt)+) => {
        Field {
            pattern: $pattern,
            unit: $unit,
            get: |s| s.$($path)+,
            set: |s, v| s.$($path)+ = v,
        }
    };
}

const PLANNER_GROUPS: &[&[Field<PlannerSample>]] = &[
    &[field!("Q{}x", "m", q[0]), field!("Q{}y", "m", q[1])],
    &[field!("eta{}x", "m", eta_hat[0]), field!("eta{}y", "m", eta_hat[1])],
    &[field!("omega{}x", "m", omega[0]), field!("omega{}y", "m", omega[1])],
    &[field!("delta{}x", "m", delta[0]), field!("delta{}y", "m", delta[1])],
];

const VESSEL_GROUPS: &[&[Field<VesselSample>]] = &[
    &[
        field!("x{}", "m", q[0]),
        field!("y{}", "m", q[1]),
        field!("psi{}", "rad", q[2]),
    ],
    &[
        field!("u{}", "m/s", nu[0]),
        field!("v{}", "m/s", nu[1]),
        field!("r{}", "rad/s", nu[2]),
    ],
    &[field!("eb{}_1", "m", e_b[0]), field!("eb{}_2", "m", e_b[1])],
    &[
        field!("tauhat{}_u", "N", tau_hat[0]),
        field!("tauhat{}_v", "N", tau_hat[1]),
        field!("tauhat{}_r", "N m", tau_hat[2]),
    ],
    &[
        field!("taud{}_u", "N", tau_d[0]),
        field!("taud{}_v", "N", tau_d[1]),
        field!("taud{}_r", "N m", tau_d[2]),
    ],
    &[field!("tau{}_u", "N", tau_u), field!("tau{}_r", "N m", tau_r)],
    &[field!("F{}_1", "N", f1), field!("F{}_2", "N", f2)],
];

/// Column order: group, then agent, then component.
fn ordered<S>(
    groups: &'static [&'static [Field<S>]],
    agents: usize,
) -> impl Iterator<Item = (usize, &'static Field<S>)> {
    groups
        .iter()
        .flat_map(move |g| (0..agents).flat_map(move |i| g.iter().map(move |f| (i, f))))
}

fn label(pattern: &str, agent: usize) -> String {
    pattern.replacen("{}", &(agent + 1).to_string(), 1)
}

impl SimTrace {
    pub fn new(agents: usize) -> Self {
        Self {
            agents,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn has_vessels(&self) -> bool {
        !self.vessels.is_empty()
    }

    /// Record spacing, `None` with fewer than two records.
    pub fn step(&self) -> Option<f64> {
        (self.time.len() >= 2).then(|| self.time[1] - self.time[0])
    }

    pub fn planner_series(&self, agent: usize) -> impl Iterator<Item = &PlannerSample> + '_ {
        self.planner.iter().map(move |row| &row[agent])
    }

    pub fn vessel_series(&self, agent: usize) -> impl Iterator<Item = &VesselSample> + '_ {
        self.vessels.iter().map(move |row| &row[agent])
    }

    pub fn last_planner(&self) -> Option<&[PlannerSample]> {
        self.planner.last().map(Vec::as_slice)
    }

    /// Column layout for a trace with `agents` agents.
    pub fn column_layout(agents: usize, vessels: bool) -> Vec<ColumnInfo> {
        let info = |name: String, unit: &str| ColumnInfo {
            name,
            unit: unit.into(),
        };
        let mut out = vec![info("t".into(), "s")];
        out.extend(ordered(PLANNER_GROUPS, agents).map(|(i, f)| info(label(f.pattern, i), f.unit)));
        out.push(info("energy".into(), "m^2"));
        if vessels {
            out.extend(ordered(VESSEL_GROUPS, agents).map(|(i, f)| info(label(f.pattern, i), f.unit)));
        }
        out
    }

    fn columns(&self) -> Vec<Column> {
        let layout = Self::column_layout(self.agents, self.has_vessels());
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(layout.len());
        values.push(self.time.clone());
        values.extend(
            ordered(PLANNER_GROUPS, self.agents)
                .map(|(i, f)| self.planner.iter().map(|row| (f.get)(&row[i])).collect()),
        );
        values.push(self.energy.clone());
        if self.has_vessels() {
            values.extend(
                ordered(VESSEL_GROUPS, self.agents)
                    .map(|(i, f)| self.vessels.iter().map(|row| (f.get)(&row[i])).collect()),
            );
        }
        layout
            .into_iter()
            .zip(values)
            .map(|(info, values)| Column { info, values })
            .collect()
    }

    /// Inverse of [`Self::columns`]; `columns` follows [`Self::column_layout`].
    fn from_columns(agents: usize, vessels: bool, columns: &[Vec<f64>]) -> Self {
        let rows = columns.first().map_or(0, Vec::len);
        let mut it = columns.iter();
        let time = it.next().cloned().unwrap_or_default();
        let mut planner = vec![vec![PlannerSample::default(); agents]; rows];
        for (i, f) in ordered(PLANNER_GROUPS, agents) {
            for (row, v) in planner.iter_mut().zip(it.next().unwrap()) {
                (f.set)(&mut row[i], *v);
            }
        }
        let energy = it.next().cloned().unwrap_or_default();
        let mut vessel_rows = Vec::new();
        if vessels {
            vessel_rows = vec![vec![VesselSample::default(); agents]; rows];
            for (i, f) in ordered(VESSEL_GROUPS, agents) {
                for (row, v) in vessel_rows.iter_mut().zip(it.next().unwrap()) {
                    (f.set)(&mut row[i], *v);
                }
            }
        }
        Self {
            agents,
            time,
            planner,
            energy,
            vessels: vessel_rows,
            messages: vec![Vec::new(); rows],
            events: Vec::new(),
        }
    }
}

/// Which artifacts [`export_trace`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Manifest,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub step: f64,
    pub records: usize,
}

/// Companion description of an exported CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub data_file: String,
    pub agents: usize,
    pub closed_loop: bool,
    pub grid: Grid,
    pub columns: Vec<ColumnInfo>,
    pub events: Vec<Event>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn for_trace(trace: &SimTrace, data_file: &str) -> Self {
        Self {
            data_file: data_file.into(),
            agents: trace.agents,
            closed_loop: trace.has_vessels(),
            grid: Grid {
                start: trace.time.first().copied().unwrap_or(0.0),
                step: trace.step().unwrap_or(0.0),
                records: trace.len(),
            },
            columns: SimTrace::column_layout(trace.agents, trace.has_vessels()),
            events: trace.events.clone(),
            metadata: BTreeMap::new(),
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(trace: &SimTrace, out: W) -> Result<(), csv::Error> {
    let columns = trace.columns();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns.iter().map(|c| c.info.name.as_str()))?;
    for k in 0..trace.len() {
        w.write_record(columns.iter().map(|c| fmt(c.values[k])))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

pub fn export_csv(trace: &SimTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_csv(trace, std::io::BufWriter::new(file)).map_err(csv_error(path))
}

pub fn export_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest).expect("manifest is plain data");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

/// Files written by [`export_trace`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExportedFiles {
    pub csv: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

/// Writes `<dir>/<stem>.csv` and/or `<dir>/<stem>.manifest.json`.
pub fn export_trace(
    trace: &SimTrace,
    format: TraceFormat,
    dir: impl AsRef<Path>,
    stem: &str,
    metadata: &BTreeMap<String, serde_json::Value>,
) -> Result<ExportedFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_name = format!("{stem}.csv");
    let mut files = ExportedFiles::default();
    if matches!(format, TraceFormat::Csv | TraceFormat::Both) {
        let path = dir.join(&csv_name);
        export_csv(trace, &path)?;
        files.csv = Some(path);
    }
    if matches!(format, TraceFormat::Manifest | TraceFormat::Both) {
        let mut manifest = Manifest::for_trace(trace, &csv_name);
        manifest.metadata = metadata.clone();
        let path = dir.join(format!("{stem}.manifest.json"));
        export_manifest(&manifest, &path)?;
        files.manifest = Some(path);
    }
    Ok(files)
}

/// Reads a CSV written by [`export_csv`]. Messages and events are not part
/// of the CSV and come back empty.
pub fn import_csv(path: impl AsRef<Path>) -> Result<SimTrace> {
    let path = path.as_ref();
    let format_err = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    let header: Vec<String> = r.headers().map_err(csv_error(path))?.iter().map(String::from).collect();
    let agents = header.iter().filter(|h| h.starts_with('Q') && h.ends_with('x')).count();
    let vessels = header.iter().any(|h| h == "x1");
    let expected: Vec<String> = SimTrace::column_layout(agents, vessels)
        .into_iter()
        .map(|c| c.name)
        .collect();
    if header != expected {
        return Err(format_err("header does not match the trace column layout".into()));
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(csv_error(path))?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(format!("row {}: `{field}` is not a number", line + 2)))?;
            col.push(v);
        }
    }
    Ok(SimTrace::from_columns(agents, vessels, &columns))
}
