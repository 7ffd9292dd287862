mod config;
mod jobs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use shadowlab::excursion::Direction;
use shadowlab::experiments::{ExperimentConfig, ExperimentKind};
use shadowlab::Error;

use config::{opt, Override};
use jobs::{ChemdistJob, ExperimentJob, FieldJob, Format, Job, PercJob, SlopeJob};
use output::{RunManifest, Sink};

#[derive(Parser)]
#[command(
    name = "shadowlab",
    version,
    about = "Slope-field percolation laboratory"
)]
struct Cli {
    /// JSON configuration; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (falls back to SHADOWLAB_SEED, then the config)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, or `-` for standard output
    #[arg(long, global = true)]
    out: Option<String>,
    /// Worker thread cap
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Format of tabular outputs
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct KernelArgs {
    /// Kernel family: gaussian, bump or power-tail
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    /// Decay exponent of the power-tail family
    #[arg(long)]
    beta: Option<f64>,
    /// Radius beyond which the kernel is set to zero
    #[arg(long)]
    trunc_radius: Option<f64>,
}

#[derive(Args, Default)]
struct GridArgs {
    /// Grid spacing
    #[arg(long)]
    h: Option<f64>,
    /// Lowest level at which slope fields must be exact
    #[arg(long)]
    margin_level: Option<f64>,
    /// Connectivity of the open set: four or eight
    #[arg(long)]
    connectivity: Option<String>,
    /// Write SVG diagnostics next to the outputs
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize field samples as SHDW1 snapshots
    Field {
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Square window of N x N cells
        #[arg(long)]
        grid_size: Option<usize>,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
        #[arg(long, default_value_t = 1)]
        samples: u64,
        /// Synthesize the field with the kernel cut off at this radius
        #[arg(long)]
        truncate: Option<f64>,
    },
    /// Slope fields of field snapshots
    Slope {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        /// Restrict rays to lengths below this radius
        #[arg(long)]
        window: Option<f64>,
        /// Report sup |alpha - alpha'| against this snapshot
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Excursion mask and crossing test at one level
    Perc {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        level: Option<f64>,
        /// Rectangle `i,j,nx,ny` in cells
        #[arg(long, value_parser = cells::<4>)]
        rect: Option<[usize; 4]>,
        #[arg(long, default_value = "horizontal")]
        direction: String,
    },
    /// Chemical distance between two cells of an excursion set
    Chemdist {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        level: Option<f64>,
        /// Start cell `i,j`
        #[arg(long, value_parser = cells::<2>)]
        from: [usize; 2],
        /// End cell `i,j`
        #[arg(long, value_parser = cells::<2>)]
        to: [usize; 2],
    },
    /// Mean level-set length against the Kac-Rice expression
    Kacrice {
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Levels to probe; spread over the bulk of alpha(0) when omitted
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        levels: Option<Vec<f64>>,
        /// Origin samples
        #[arg(long)]
        samples: Option<usize>,
        /// Field draws for level-set lengths
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        box_side: Option<f64>,
        #[arg(long)]
        ray_window: Option<f64>,
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Bisection for the level of square-crossing probability 1/2
    Lc {
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Square side in length units
        #[arg(long)]
        side: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a configured Monte Carlo campaign
    Experiment {
        /// crossing-decay, chemical-scaling, global-structure,
        /// truncation-study, lipschitz-probe, kac-rice or critical-level
        name: String,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Re-run the job recorded in a manifest
    Replay { manifest: PathBuf },
}

/// Parses `N` comma-separated cell indices.
fn cells<const N: usize>(s: &str) -> Result<[usize; N], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("`{p}` is not a cell index"))
        })
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| format!("expected {N} comma-separated indices"))
}

fn kernel_overrides(base: &mut Value, k: &KernelArgs) -> Result<(), Error> {
    if let Some(f) = &k.kernel {
        let family: shadowlab::kernel::KernelFamily = f.parse()?;
        base["kernel"]["family"] = serde_json::to_value(family)?;
    }
    let slots = [k.scale, k.amplitude, k.beta];
    if slots.iter().any(Option::is_some) {
        let defaults = [1.0, 1.0, 3.0];
        let current: Vec<f64> = base
            .get("kernel")
            .and_then(|k| k.get("params"))
            .and_then(|p| serde_json::from_value(p.clone()).ok())
            .unwrap_or_default();
        let len = if k.beta.is_some() {
            3
        } else {
            current.len().max(2)
        };
        let params: Vec<f64> = (0..len)
            .map(|i| {
                slots
                    .get(i)
                    .copied()
                    .flatten()
                    .or(current.get(i).copied())
                    .unwrap_or(defaults[i])
            })
            .collect();
        base["kernel"]["params"] = json!(params);
    }
    if let Some(r) = k.trunc_radius {
        base["kernel"]["trunc_radius"] = json!(r);
    }
    Ok(())
}

fn grid_overrides(g: &GridArgs) -> Result<Vec<Override>, Error> {
    let conn = match &g.connectivity {
        Some(c) => serde_json::to_value(c.parse::<shadowlab::lattice::Connectivity>()?)?,
        None => Value::Null,
    };
    Ok(vec![
        ("grid.h", opt(g.h)),
        ("grid.margin_level", opt(g.margin_level)),
        ("connectivity", conn),
    ])
}

fn level_of(flag: Option<f64>, cfg: &ExperimentConfig) -> Result<f64, Error> {
    flag.or_else(|| cfg.levels.first().copied())
        .ok_or_else(|| Error::Config("no level: pass --level or set `levels` in the config".into()))
}

/// Turns parsed arguments into a fully resolved job.
fn build_job(cli: &Cli) -> Result<Job, Error> {
    let seed = config::seed_from(cli.seed)?;
    let mut base = config::load(cli.config.as_deref())?;
    // slope, perc and chemdist read the kernel from their input snapshots
    let kernel_from_input = matches!(
        cli.cmd,
        Cmd::Slope { .. } | Cmd::Perc { .. } | Cmd::Chemdist { .. }
    );
    if kernel_from_input && base.get("kernel").is_none() {
        base["kernel"] = serde_json::to_value(shadowlab::kernel::KernelSpec::gaussian())?;
    }
    let fmt = cli.format;
    let job = match &cli.cmd {
        Cmd::Field {
            kernel,
            grid,
            grid_size,
            nx,
            ny,
            samples,
            truncate,
        } => {
            kernel_overrides(&mut base, kernel)?;
            let mut ov = grid_overrides(grid)?;
            ov.push(("grid.nx", opt(nx.or(*grid_size))));
            ov.push(("grid.ny", opt(ny.or(*grid_size))));
            let config = config::resolve(base, ov, seed)?;
            let svg = grid.svg || config.output.svg;
            Job::Field(FieldJob {
                config,
                samples: *samples,
                truncate: *truncate,
                svg,
            })
        }
        Cmd::Slope {
            grid,
            inputs,
            window,
            against,
        } => {
            let config = config::resolve(base, grid_overrides(grid)?, seed)?;
            let svg = grid.svg || config.output.svg;
            Job::Slope(SlopeJob {
                config,
                format: fmt,
                inputs: inputs.clone(),
                window: *window,
                against: against.clone(),
                svg,
            })
        }
        Cmd::Perc {
            grid,
            input,
            level,
            rect,
            direction,
        } => {
            let config = config::resolve(base, grid_overrides(grid)?, seed)?;
            let level = level_of(*level, &config)?;
            let direction: Direction = direction.parse()?;
            let rect = *rect;
            let svg = grid.svg || config.output.svg;
            Job::Perc(PercJob {
                config,
                format: fmt,
                input: input.clone(),
                level,
                rect,
                direction,
                svg,
            })
        }
        Cmd::Chemdist {
            grid,
            input,
            level,
            from,
            to,
        } => {
            let config = config::resolve(base, grid_overrides(grid)?, seed)?;
            let level = level_of(*level, &config)?;
            let svg = grid.svg || config.output.svg;
            Job::Chemdist(ChemdistJob {
                config,
                format: fmt,
                input: input.clone(),
                level,
                from: *from,
                to: *to,
                svg,
            })
        }
        Cmd::Kacrice {
            kernel,
            grid,
            levels,
            samples,
            draws,
            box_side,
            ray_window,
            bandwidth,
        } => {
            fill_preset(&mut base, ExperimentKind::KacRice)?;
            kernel_overrides(&mut base, kernel)?;
            let mut ov = grid_overrides(grid)?;
            ov.extend([
                ("levels", levels.as_ref().map_or(Value::Null, |l| json!(l))),
                ("n_samples", opt(*samples)),
                ("n_draws", opt(*draws)),
                ("geometry.box_side", opt(*box_side)),
                ("geometry.ray_window", opt(*ray_window)),
                ("bandwidth", opt(*bandwidth)),
            ]);
            Job::Kacrice(experiment_job(
                base,
                ov,
                seed,
                fmt,
                ExperimentKind::KacRice,
                grid.svg,
            )?)
        }
        Cmd::Lc {
            kernel,
            grid,
            side,
            samples,
            tol,
        } => {
            fill_preset(&mut base, ExperimentKind::CriticalLevel)?;
            kernel_overrides(&mut base, kernel)?;
            let mut ov = grid_overrides(grid)?;
            ov.extend([
                ("geometry.square_side", opt(*side)),
                ("n_samples", opt(*samples)),
                ("geometry.tol", opt(*tol)),
            ]);
            Job::Lc(experiment_job(
                base,
                ov,
                seed,
                fmt,
                ExperimentKind::CriticalLevel,
                grid.svg,
            )?)
        }
        Cmd::Experiment {
            name,
            kernel,
            grid,
            samples,
        } => {
            let kind: ExperimentKind = name.parse()?;
            fill_preset(&mut base, kind)?;
            kernel_overrides(&mut base, kernel)?;
            let mut ov = grid_overrides(grid)?;
            ov.push(("n_samples", opt(*samples)));
            Job::Experiment(experiment_job(base, ov, seed, fmt, kind, grid.svg)?)
        }
        Cmd::Replay { .. } => unreachable!("replay has no job of its own"),
    };
    Ok(job)
}

/// Fills keys missing from the config with the campaign's preset values.
fn fill_preset(base: &mut Value, kind: ExperimentKind) -> Result<(), Error> {
    let preset = serde_json::to_value(ExperimentConfig::preset(kind))?;
    merge_missing(base, &preset);
    Ok(())
}

fn merge_missing(dst: &mut Value, src: &Value) {
    if let (Some(d), Some(s)) = (dst.as_object_mut(), src.as_object()) {
        for (k, v) in s {
            match d.get_mut(k) {
                Some(existing) => merge_missing(existing, v),
                None => {
                    d.insert(k.clone(), v.clone());
                }
            }
        }
    }
}

fn experiment_job(
    base: Value,
    ov: Vec<Override>,
    seed: Option<u64>,
    format: Format,
    kind: ExperimentKind,
    svg: bool,
) -> Result<ExperimentJob, Error> {
    let config = config::resolve(base, ov, seed)?;
    if let Some(k) = config.experiment {
        if k != kind {
            return Err(Error::Config(format!(
                "config is for `{}`, not `{}`",
                k.name(),
                kind.name()
            )));
        }
    }
    let svg = svg || config.output.svg;
    Ok(ExperimentJob {
        config,
        format,
        kind,
        svg,
    })
}

fn execute(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set thread count: {e}")))?;
    }
    let (job, config_path) = match &cli.cmd {
        Cmd::Replay { manifest } => (RunManifest::read(manifest)?.job, Some(manifest.clone())),
        _ => (build_job(cli)?, cli.config.clone()),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| job.config().output.dir.clone())
        .unwrap_or_else(|| "out".into());
    let mut manifest = RunManifest::new(job, config_path, &out)?;
    let mut sink = Sink::new(&out, manifest.file_name())?;
    let start = Instant::now();
    manifest.job.run(&mut sink)?;
    manifest.wall_clock_s = start.elapsed().as_secs_f64();
    sink.finish(manifest)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Order { .. } | Error::Json(_) => 2,
        Error::Format(_) => 3,
        Error::Consistency(_) => 4,
        Error::Bounds(_) | Error::UnknownComponent(_) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shadowlab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
