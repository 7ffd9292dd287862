//! Resolved, serializable jobs: what a manifest records and a replay runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use shadowlab::excursion::{crossing, threshold, Direction};
use shadowlab::experiments::{self, ExperimentConfig, ExperimentKind, ExperimentResult};
use shadowlab::field::{FieldSynth, GridSpec};
use shadowlab::geometry::{chemical_distance, level_set_segments};
use shadowlab::kernel::{Covariance, KernelSpec};
use shadowlab::lattice::CellRect;
use shadowlab::slope::{
    ray_margin, slope_field, truncated_slope_field, windowed_slope_field, SlopeField,
};
use shadowlab::snapshot::{check_same_grid, Content, Snapshot};
use shadowlab::svg::Canvas;
use shadowlab::Error;

use crate::output::Sink;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldJob {
    pub config: ExperimentConfig,
    pub samples: u64,
    pub truncate: Option<f64>,
    pub svg: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeJob {
    pub config: ExperimentConfig,
    pub format: Format,
    pub inputs: Vec<PathBuf>,
    pub window: Option<f64>,
    pub against: Option<PathBuf>,
    pub svg: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PercJob {
    pub config: ExperimentConfig,
    pub format: Format,
    pub input: PathBuf,
    pub level: f64,
    /// `[i, j, nx, ny]` in cells; the whole usable window when absent.
    pub rect: Option<[usize; 4]>,
    pub direction: Direction,
    pub svg: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChemdistJob {
    pub config: ExperimentConfig,
    pub format: Format,
    pub input: PathBuf,
    pub level: f64,
    pub from: [usize; 2],
    pub to: [usize; 2],
    pub svg: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentJob {
    pub config: ExperimentConfig,
    pub format: Format,
    pub kind: ExperimentKind,
    pub svg: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Job {
    Field(FieldJob),
    Slope(SlopeJob),
    Perc(PercJob),
    Chemdist(ChemdistJob),
    Kacrice(ExperimentJob),
    Lc(ExperimentJob),
    Experiment(ExperimentJob),
}

impl Job {
    pub fn subcommand(&self) -> &'static str {
        match self {
            Job::Field(_) => "field",
            Job::Slope(_) => "slope",
            Job::Perc(_) => "perc",
            Job::Chemdist(_) => "chemdist",
            Job::Kacrice(_) => "kacrice",
            Job::Lc(_) => "lc",
            Job::Experiment(_) => "experiment",
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        match self {
            Job::Field(j) => &j.config,
            Job::Slope(j) => &j.config,
            Job::Perc(j) => &j.config,
            Job::Chemdist(j) => &j.config,
            Job::Kacrice(j) | Job::Lc(j) | Job::Experiment(j) => &j.config,
        }
    }

    pub fn run(&self, sink: &mut Sink) -> Result<(), Error> {
        match self {
            Job::Field(j) => run_field(j, sink),
            Job::Slope(j) => run_slope(j, sink),
            Job::Perc(j) => run_perc(j, sink),
            Job::Chemdist(j) => run_chemdist(j, sink),
            Job::Kacrice(j) | Job::Lc(j) | Job::Experiment(j) => run_experiment(j, sink),
        }
    }
}

/// Renders rows as CSV or as a JSON array of objects.
fn table(format: Format, columns: &[&str], rows: &[Vec<Value>]) -> Result<String, Error> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(columns)?;
            for r in rows {
                w.write_record(r.iter().map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                }))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        Format::Json => {
            let objs: Vec<Value> = rows
                .iter()
                .map(|r| {
                    Value::Object(
                        columns
                            .iter()
                            .map(|c| c.to_string())
                            .zip(r.iter().cloned())
                            .collect(),
                    )
                })
                .collect();
            Ok(serde_json::to_string_pretty(&objs)? + "\n")
        }
    }
}

fn read_snapshot(path: &Path) -> Result<Snapshot, Error> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open snapshot {}: {e}", path.display())))?;
    Snapshot::read(std::io::BufReader::new(file)).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Slope field of a slope snapshot, or computed from a field snapshot.
fn slope_of(
    snap: &Snapshot,
    cfg: &ExperimentConfig,
    window: Option<f64>,
) -> Result<SlopeField, Error> {
    match snap.header.content {
        Content::Slope if window.is_some() => Err(Error::Config(
            "a ray window applies to field snapshots, not slope snapshots".into(),
        )),
        Content::Slope => snap.to_slope(),
        Content::Field => {
            let fs = snap.to_field()?;
            if let Some(r) = window {
                return Ok(windowed_slope_field(&fs, r));
            }
            if fs.truncation.is_some() {
                return truncated_slope_field(&fs);
            }
            let kernel = snap.header.kernel.as_ref().unwrap_or(&cfg.kernel).build()?;
            let k0 = Covariance::new(kernel).at([0.0, 0.0]);
            let margin = ray_margin(k0, cfg.grid.margin_level, fs.spec.h, cfg.grid.margin_tol);
            if margin >= fs.spec.nx {
                return Err(Error::Parameter(format!(
                    "window of {} cells leaves nothing beyond the {margin}-cell ray margin; widen the grid or raise the margin level",
                    fs.spec.nx
                )));
            }
            Ok(slope_field(&fs, margin))
        }
        Content::Mask => Err(Error::Format(
            "expected a field or slope snapshot, found a mask".into(),
        )),
    }
}

fn stem(path: &Path) -> String {
    let name = path
        .file_name()
        .map_or_else(|| "input".into(), |n| n.to_string_lossy().into_owned());
    name.strip_suffix(".shdw").unwrap_or(&name).to_string()
}

fn run_field(j: &FieldJob, sink: &mut Sink) -> Result<(), Error> {
    let cfg = &j.config;
    let kernel = cfg.kernel.build()?;
    let spec = GridSpec::for_support(
        [0.0, 0.0],
        cfg.grid.h,
        cfg.grid.nx,
        cfg.grid.ny,
        kernel.trunc_radius(),
    );
    let synth = match j.truncate {
        Some(r) => FieldSynth::truncated(&kernel, r, &spec)?,
        None => FieldSynth::new(&kernel, &spec)?,
    };
    for s in 0..j.samples {
        let fs = synth.sample(cfg.seed, s);
        sink.snapshot(
            &format!("field_{s:04}.shdw"),
            Snapshot::from_field(&fs, Some(&cfg.kernel)),
        )?;
        if j.svg {
            sink.svg(
                &format!("field_{s:04}.svg"),
                &Canvas::new(&spec, 2.0).heatmap(&fs.f).finish(),
            )?;
        }
    }
    Ok(())
}

fn slope_svg(sf: &SlopeField, levels: &[f64]) -> Result<String, Error> {
    let mut c = Canvas::new(&sf.spec, 2.0).heatmap(&sf.alpha);
    let usable = sf.usable_nx();
    if usable >= 2 && sf.spec.ny >= 2 {
        let rect = CellRect::new(0, 0, usable, sf.spec.ny);
        for &l in levels {
            c = c.segments(&level_set_segments(&sf.alpha, &sf.spec, l, &rect)?, "white");
        }
    }
    Ok(c.finish())
}

fn run_slope(j: &SlopeJob, sink: &mut Sink) -> Result<(), Error> {
    if j.inputs.is_empty() {
        return Err(Error::Config(
            "slope needs at least one --input snapshot".into(),
        ));
    }
    let mut first = None;
    for path in &j.inputs {
        let snap = read_snapshot(path)?;
        let sf = slope_of(&snap, &j.config, j.window)?;
        let name = stem(path);
        let kernel: Option<&KernelSpec> = snap.header.kernel.as_ref();
        sink.snapshot(
            &format!("{name}.slope.shdw"),
            Snapshot::from_slope(&sf, snap.header.seed, snap.header.sample, kernel),
        )?;
        if j.svg {
            sink.svg(
                &format!("{name}.slope.svg"),
                &slope_svg(&sf, &j.config.levels)?,
            )?;
        }
        first.get_or_insert(sf);
    }
    if let (Some(against), Some(a)) = (&j.against, &first) {
        let b = slope_of(&read_snapshot(against)?, &j.config, None)?;
        check_same_grid(&a.spec, &b.spec)?;
        let mut best = (0.0f64, 0, 0);
        for jy in 0..a.spec.ny {
            for ix in 0..a.usable_nx().min(b.usable_nx()) {
                let d = (a.alpha.at(ix, jy) - b.alpha.at(ix, jy)).abs();
                if d > best.0 {
                    best = (d, ix, jy);
                }
            }
        }
        let at = a.spec.position(best.1, best.2);
        let rows = vec![vec![
            Value::from(j.inputs[0].display().to_string()),
            Value::from(against.display().to_string()),
            Value::from(best.0),
            Value::from(at[0]),
            Value::from(at[1]),
        ]];
        let body = table(
            j.format,
            &["input", "against", "sup_abs_diff", "x", "y"],
            &rows,
        )?;
        sink.text(&format!("slope_diff.{}", j.format.ext()), &body)?;
    }
    Ok(())
}

fn run_perc(j: &PercJob, sink: &mut Sink) -> Result<(), Error> {
    let snap = read_snapshot(&j.input)?;
    let sf = slope_of(&snap, &j.config, None)?;
    let mask = threshold(&sf, j.level, j.config.connectivity);
    let rect = match j.rect {
        Some([i, k, nx, ny]) => CellRect::new(i, k, nx, ny),
        None => CellRect::new(0, 0, mask.usable_nx(), mask.spec.ny),
    };
    let crossed = crossing(&mask, &rect, j.direction)?;
    let usable = (mask.usable_nx() * mask.spec.ny).max(1);
    let rows = vec![vec![
        Value::from(j.input.display().to_string()),
        Value::from(j.level),
        serde_json::to_value(j.direction)?,
        Value::from(crossed),
        Value::from(mask.n_components),
        Value::from(mask.open_count() as f64 / usable as f64),
        Value::from(snap.header.seed),
    ]];
    let cols = [
        "input",
        "level",
        "direction",
        "crossing",
        "components",
        "open_fraction",
        "seed",
    ];
    sink.snapshot(
        "mask.shdw",
        Snapshot::from_mask(&mask, snap.header.seed, snap.header.sample),
    )?;
    sink.text(
        &format!("perc.{}", j.format.ext()),
        &table(j.format, &cols, &rows)?,
    )?;
    if j.svg {
        sink.svg(
            "mask.svg",
            &Canvas::new(&mask.spec, 2.0).mask(&mask).finish(),
        )?;
    }
    Ok(())
}

fn run_chemdist(j: &ChemdistJob, sink: &mut Sink) -> Result<(), Error> {
    let snap = read_snapshot(&j.input)?;
    let sf = slope_of(&snap, &j.config, None)?;
    let mask = threshold(&sf, j.level, j.config.connectivity);
    let (a, b) = ((j.from[0], j.from[1]), (j.to[0], j.to[1]));
    let p = chemical_distance(&mask, a, b)?;
    let rows = vec![vec![
        Value::from(format!("{},{}", a.0, a.1)),
        Value::from(format!("{},{}", b.0, b.1)),
        Value::from(p.found),
        if p.found {
            Value::from(p.length)
        } else {
            Value::from("inf")
        },
    ]];
    sink.text(
        &format!("chemdist.{}", j.format.ext()),
        &table(j.format, &["a", "b", "found", "length"], &rows)?,
    )?;
    if j.svg {
        let svg = Canvas::new(&mask.spec, 2.0)
            .mask(&mask)
            .path(&p.cells, "black")
            .finish();
        sink.svg("chemdist.svg", &svg)?;
    }
    Ok(())
}

/// Result metadata without the rows.
#[derive(Serialize)]
struct Meta<'a> {
    experiment: &'a str,
    tool_version: &'a str,
    seed: u64,
    manifest: Option<&'a str>,
    columns: &'a [String],
    summary: &'a std::collections::BTreeMap<String, f64>,
    notes: &'a [String],
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Full<'a> {
    #[serde(flatten)]
    meta: Meta<'a>,
    rows: &'a [experiments::Row],
}

fn run_experiment(j: &ExperimentJob, sink: &mut Sink) -> Result<(), Error> {
    let r: ExperimentResult = experiments::run(j.kind, &j.config)?;
    let name = j.kind.name();
    let manifest = sink.manifest_name().map(str::to_string);
    let meta = Meta {
        experiment: name,
        tool_version: env!("CARGO_PKG_VERSION"),
        seed: j.config.seed,
        manifest: manifest.as_deref(),
        columns: &r.columns,
        summary: &r.summary,
        notes: &r.notes,
        config: &r.config,
    };
    match j.format {
        Format::Csv => {
            let mut csv = Vec::new();
            r.write_csv(&mut csv)?;
            sink.text(
                &format!("{name}.csv"),
                &String::from_utf8(csv).expect("csv output is utf-8"),
            )?;
            if matches!(sink, Sink::Stdout) {
                for (k, v) in &r.summary {
                    eprintln!("# {k} = {v}");
                }
            } else {
                sink.text(
                    &format!("{name}.json"),
                    &(serde_json::to_string_pretty(&meta)? + "\n"),
                )?;
            }
        }
        Format::Json => {
            let full = Full {
                meta,
                rows: &r.rows,
            };
            sink.text(
                &format!("{name}.json"),
                &(serde_json::to_string_pretty(&full)? + "\n"),
            )?;
        }
    }
    if j.svg {
        sink.svg(&format!("{name}.svg"), &diagnostic_svg(&j.config)?)?;
    }
    Ok(())
}

/// Slope field of the first sample on a 64 x 64 window with the configured
/// level lines.
fn diagnostic_svg(cfg: &ExperimentConfig) -> Result<String, Error> {
    let kernel = cfg.kernel.build()?;
    let m = shadowlab::slope::window_cells(cfg.geometry.ray_window, cfg.grid.h);
    let spec = GridSpec::for_support([0.0, 0.0], cfg.grid.h, 64 + m, 64, kernel.trunc_radius());
    let fs = FieldSynth::new(&kernel, &spec)?.sample(cfg.seed, 0);
    slope_svg(
        &windowed_slope_field(&fs, cfg.geometry.ray_window),
        &cfg.levels,
    )
}
