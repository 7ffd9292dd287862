//! Configuration-driven Monte Carlo campaigns.
//!
//! Every campaign is a pure function of its [`ExperimentConfig`]: sample `s`
//! always draws noise stream `(seed, s)`, tasks run in parallel, and results
//! are gathered in parameter-then-sample order, so tables are bitwise
//! reproducible whatever the thread count. Only `wall_clock_s` varies.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursion::{
    estimate_critical_level, threshold, CrossingEstimate, CrossingSetup, Direction,
};
use crate::field::{sample_white_noise, FieldSample, FieldSynth, GridSpec};
use crate::geometry::{
    chemical_distance, kac_rice_compare, level_lengths, sample_alpha_at_origin, set_distance,
    DensityEstimate, KacRiceSetup,
};
use crate::kernel::{Covariance, KernelSpec};
use crate::lattice::{CellRect, Connectivity};
use crate::par;
use crate::rng::mix_seed;
use crate::slope::{ray_margin, slope_field, slope_field_from_rows, windowed_slope_field};
use crate::stats::{linear_fit, quantile, wilson, Z95};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CrossingDecay,
    ChemicalScaling,
    GlobalStructure,
    TruncationStudy,
    LipschitzProbe,
    KacRice,
    CriticalLevel,
}

impl ExperimentKind {
    pub const ALL: [Self; 7] = [
        Self::CrossingDecay,
        Self::ChemicalScaling,
        Self::GlobalStructure,
        Self::TruncationStudy,
        Self::LipschitzProbe,
        Self::KacRice,
        Self::CriticalLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CrossingDecay => "crossing-decay",
            Self::ChemicalScaling => "chemical-scaling",
            Self::GlobalStructure => "global-structure",
            Self::TruncationStudy => "truncation-study",
            Self::LipschitzProbe => "lipschitz-probe",
            Self::KacRice => "kac-rice",
            Self::CriticalLevel => "critical-level",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Grid spacing, single-sample window and the ray-margin policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    #[serde(default = "defaults::h")]
    pub h: f64,
    /// Window size in cells for commands that synthesize one field; the
    /// campaigns size their own windows.
    #[serde(default = "defaults::window")]
    pub nx: usize,
    #[serde(default = "defaults::window")]
    pub ny: usize,
    /// Lowest level at which slope fields must be exact; sets the ray margin.
    #[serde(default = "defaults::margin_level")]
    pub margin_level: f64,
    #[serde(default = "defaults::margin_tol")]
    pub margin_tol: f64,
}

/// Geometric sweep parameters. Unused entries are ignored by a campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    /// Scale factors for the crossing rectangle.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    /// Base rectangle `[width, height]` in length units.
    #[serde(default = "defaults::rect")]
    pub rect: [f64; 2],
    /// Distances `|z|` in grid cells.
    #[serde(default)]
    pub z_cells: Vec<usize>,
    /// Truncation radii `R` in length units.
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Ball-radius exponent for global-structure endpoints.
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// Path-length constants `C`.
    #[serde(default)]
    pub c_list: Vec<f64>,
    /// Threshold on `sup |alpha - alpha_R|`.
    #[serde(default = "defaults::deviation")]
    pub deviation: f64,
    /// Side of the probed box in length units.
    #[serde(default = "defaults::box_side")]
    pub box_side: f64,
    /// Side of the square for the critical-level bisection.
    #[serde(default = "defaults::square_side")]
    pub square_side: f64,
    /// Bracket width at which the bisection stops.
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    /// Maximal ray length for windowed slope fields.
    #[serde(default = "defaults::ray_window")]
    pub ray_window: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all geometry fields have defaults")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    /// Directory for result files; the CLI's `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub svg: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub grid: GridParams,
    #[serde(default)]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub geometry: GeometryParams,
    #[serde(default = "defaults::n_samples")]
    pub n_samples: usize,
    /// Independent field draws for level-set lengths (Kac-Rice only).
    #[serde(default = "defaults::n_draws")]
    pub n_draws: usize,
    #[serde(default = "defaults::bootstrap")]
    pub bootstrap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default = "defaults::connectivity")]
    pub connectivity: Connectivity,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputPaths,
}

impl Default for GridParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all grid fields have defaults")
    }
}

mod defaults {
    use crate::lattice::Connectivity;
    pub fn h() -> f64 {
        0.25
    }
    pub fn window() -> usize {
        256
    }
    pub fn n_samples() -> usize {
        400
    }
    pub fn margin_level() -> f64 {
        0.4
    }
    pub fn margin_tol() -> f64 {
        1e-3
    }
    pub fn rect() -> [f64; 2] {
        [2.0, 1.0]
    }
    pub fn epsilon() -> f64 {
        0.5
    }
    pub fn deviation() -> f64 {
        0.1
    }
    pub fn box_side() -> f64 {
        1.0
    }
    pub fn square_side() -> f64 {
        64.0
    }
    pub fn tol() -> f64 {
        0.02
    }
    pub fn ray_window() -> f64 {
        20.0
    }
    pub fn n_draws() -> usize {
        200
    }
    pub fn bootstrap() -> usize {
        200
    }
    pub fn connectivity() -> Connectivity {
        Connectivity::Eight
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for a campaign with the unit gaussian kernel.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut c = Self {
            experiment: Some(kind),
            kernel: KernelSpec::gaussian(),
            grid: GridParams::default(),
            levels: vec![0.8],
            geometry: GeometryParams::default(),
            n_samples: 400,
            n_draws: defaults::n_draws(),
            bootstrap: defaults::bootstrap(),
            bandwidth: None,
            connectivity: Connectivity::Eight,
            seed: 1,
            output: OutputPaths::default(),
        };
        let g = &mut c.geometry;
        match kind {
            ExperimentKind::CrossingDecay => g.lambdas = vec![2.0, 4.0, 8.0, 16.0],
            ExperimentKind::ChemicalScaling | ExperimentKind::GlobalStructure => {
                g.z_cells = vec![32, 64, 128, 256];
                g.c_list = vec![1.5, 2.0, 3.0];
            }
            ExperimentKind::TruncationStudy => {
                g.radii = vec![4.0, 8.0, 16.0, 32.0];
                c.grid.h = 0.1;
                c.grid.margin_level = 0.2;
                c.n_samples = 200;
            }
            ExperimentKind::LipschitzProbe => {
                c.grid.h = 0.05;
                c.n_samples = 100;
            }
            ExperimentKind::KacRice => {
                c.grid.h = 0.1;
                c.levels = Vec::new();
                c.n_samples = 2000;
                g.box_side = 4.0;
            }
            ExperimentKind::CriticalLevel => c.n_samples = 200,
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if let Some(l) = self.levels.iter().find(|l| !l.is_finite()) {
            return Err(Error::Config(format!("level {l} is not finite")));
        }
        if !(self.grid.h > 0.0 && self.grid.h.is_finite()) {
            return Err(Error::Config(format!(
                "grid.h must be positive, got {}",
                self.grid.h
            )));
        }
        self.kernel.build()?;
        Ok(())
    }

    fn single_level(&self) -> Result<f64> {
        match self.levels[..] {
            [l] => Ok(l),
            [] => Err(Error::Config("campaign needs a level".into())),
            _ => Err(Error::Config(format!(
                "campaign takes one level, got {}",
                self.levels.len()
            ))),
        }
    }

    fn crossing_setup(&self, rect: [f64; 2]) -> CrossingSetup {
        CrossingSetup {
            kernel: self.kernel.clone(),
            h: self.grid.h,
            rect,
            direction: Direction::Horizontal,
            connectivity: self.connectivity,
            margin_level: self.grid.margin_level,
            margin_tol: self.grid.margin_tol,
        }
    }

    fn margin_cells(&self) -> Result<usize> {
        self.crossing_setup([1.0, 1.0]).margin_cells()
    }
}

/// One table row; `seed` is the master seed of the draws behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub seed: u64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub summary: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
    /// Kept out of serialized results so reruns compare bitwise.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl ExperimentResult {
    fn new(kind: ExperimentKind, cfg: &ExperimentConfig, columns: &[&str]) -> Self {
        Self {
            experiment: kind.name().into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
            notes: Vec::new(),
            config: cfg.clone(),
            wall_clock_s: 0.0,
        }
    }

    fn push(&mut self, seed: u64, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(Row { seed, values });
    }

    /// Values of one column, in row order.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    /// Rows as CSV with a leading `seed` column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["seed".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.seed.to_string()];
            rec.extend(r.values.iter().map(|v| format!("{v}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Everything except the wall clock, for reproducibility checks.
    pub fn same_tables(&self, other: &Self) -> bool {
        let bits = |r: &Self| -> Vec<(u64, Vec<u64>)> {
            r.rows
                .iter()
                .map(|row| (row.seed, row.values.iter().map(|v| v.to_bits()).collect()))
                .collect()
        };
        let sums = |r: &Self| -> Vec<(String, u64)> {
            r.summary
                .iter()
                .map(|(k, v)| (k.clone(), v.to_bits()))
                .collect()
        };
        self.experiment == other.experiment
            && self.columns == other.columns
            && bits(self) == bits(other)
            && sums(self) == sums(other)
            && self.notes == other.notes
    }
}

/// Runs the campaign named in `cfg.experiment` (or `kind` when given).
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let mut r = match kind {
        ExperimentKind::CrossingDecay => run_crossing_decay(cfg),
        ExperimentKind::ChemicalScaling => run_chemical_scaling(cfg),
        ExperimentKind::GlobalStructure => run_global_structure(cfg),
        ExperimentKind::TruncationStudy => run_truncation_study(cfg),
        ExperimentKind::LipschitzProbe => run_lipschitz_probe(cfg),
        ExperimentKind::KacRice => run_kac_rice(cfg),
        ExperimentKind::CriticalLevel => run_critical_level(cfg),
    }?;
    r.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(r)
}

/// `1 - p(lambda)` for the crossing of `lambda * rect` at the first level,
/// with a least-squares fit of `log(1 - p)` against `lambda`.
pub fn run_crossing_decay(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let level = cfg.single_level()?;
    let setup = cfg.crossing_setup(cfg.geometry.rect);
    let mut res = ExperimentResult::new(
        ExperimentKind::CrossingDecay,
        cfg,
        &[
            "lambda",
            "level",
            "n",
            "failures",
            "one_minus_p",
            "ci_lo",
            "ci_hi",
        ],
    );
    let mut pts = Vec::new();
    for &lambda in &cfg.geometry.lambdas {
        let thr = setup.thresholds(lambda, cfg.n_samples, cfg.seed)?;
        let est = CrossingEstimate::from_thresholds(&thr, level, lambda, cfg.seed);
        let failures = est.n - est.successes;
        let ci = wilson(failures, est.n);
        let q = failures as f64 / est.n as f64;
        res.push(
            cfg.seed,
            vec![
                lambda,
                level,
                est.n as f64,
                failures as f64,
                q,
                ci.lo,
                ci.hi,
            ],
        );
        if failures > 0 {
            pts.push((lambda, q.ln()));
        }
    }
    if pts.len() >= 2 {
        let fit = linear_fit(&pts);
        res.summary.insert("log_slope".into(), fit.slope);
        res.summary.insert("log_slope_se".into(), fit.slope_se);
        res.summary
            .insert("log_slope_hi".into(), fit.slope + Z95 * fit.slope_se);
    } else {
        res.notes
            .push("fewer than two scales with failures; no decay fit".into());
    }
    Ok(res)
}

/// Window holding the segment from `o` to `t = o + z e1`.
struct SegmentLayout {
    spec: GridSpec,
    o: (usize, usize),
    t: (usize, usize),
    margin: usize,
}

/// `|z| / 2` cells of room on every side of the segment, plus the ray margin.
fn segment_layout(cfg: &ExperimentConfig, z: usize) -> Result<SegmentLayout> {
    let kernel = cfg.kernel.build()?;
    let margin = cfg.margin_cells()?;
    let a = (z / 2).max(1);
    let spec = GridSpec::for_support(
        [0.0, 0.0],
        cfg.grid.h,
        2 * a + z + 1 + margin,
        2 * a + 1,
        kernel.trunc_radius(),
    );
    Ok(SegmentLayout {
        spec,
        o: (a, a),
        t: (a + z, a),
        margin,
    })
}

fn ratio_quantiles(r: &[f64]) -> [f64; 3] {
    if r.is_empty() {
        return [f64::NAN; 3];
    }
    [quantile(r, 0.5), quantile(r, 0.9), quantile(r, 0.99)]
}

/// Connection and intrinsic-distance statistics between `0` and `z`, for
/// every `|z|` and level, on levels coupled through common samples.
///
/// Ratios `d_chem / |z|` and exceedances are conditional on connection. The
/// "twice the median" threshold is shared across `|z|`: twice the median of
/// the ratios pooled over the sweep at that level.
pub fn run_chemical_scaling(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.levels.is_empty() {
        return Err(Error::Config(
            "chemical scaling needs at least one level".into(),
        ));
    }
    let mut cols: Vec<String> = [
        "z_cells",
        "z_len",
        "level",
        "n",
        "connected",
        "p_conn",
        "conn_lo",
        "conn_hi",
        "median_ratio",
        "q90_ratio",
        "q99_ratio",
        "c_twice_median",
        "exceed_twice_median",
        "exceed_lo",
        "exceed_hi",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for c in &cfg.geometry.c_list {
        cols.push(format!("exceed_c{c}"));
        cols.push(format!("exceed_c{c}_lo"));
        cols.push(format!("exceed_c{c}_hi"));
    }
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut res = ExperimentResult::new(ExperimentKind::ChemicalScaling, cfg, &col_refs);
    let h = cfg.grid.h;
    let kernel = cfg.kernel.build()?;
    // ratios[z][level]: connected samples only, in sample order
    let mut ratios: Vec<Vec<Vec<f64>>> = Vec::new();
    for &z in &cfg.geometry.z_cells {
        let SegmentLayout { spec, o, t, margin } = segment_layout(cfg, z)?;
        let synth = FieldSynth::new(&kernel, &spec)?;
        let z_len = z as f64 * h;
        let per_sample: Vec<Vec<Option<f64>>> = par::map_range(cfg.n_samples, |s| {
            let noise = sample_white_noise(&spec, cfg.seed, s as u64);
            let (f, df1) = synth.value_and_slope(&noise)?;
            let sf = slope_field_from_rows(&spec, &f, &df1, margin);
            cfg.levels
                .iter()
                .map(|&l| {
                    let m = threshold(&sf, l, cfg.connectivity);
                    let p = chemical_distance(&m, o, t)?;
                    Ok(p.found.then(|| p.length / z_len))
                })
                .collect::<Result<Vec<_>>>()
        })
        .into_iter()
        .collect::<Result<_>>()?;
        ratios.push(
            (0..cfg.levels.len())
                .map(|k| per_sample.iter().filter_map(|v| v[k]).collect())
                .collect(),
        );
    }
    let pooled_median: Vec<f64> = (0..cfg.levels.len())
        .map(|k| {
            let all: Vec<f64> = ratios.iter().flat_map(|r| r[k].iter().copied()).collect();
            if all.is_empty() {
                f64::NAN
            } else {
                quantile(&all, 0.5)
            }
        })
        .collect();
    let n = cfg.n_samples;
    for (zi, &z) in cfg.geometry.z_cells.iter().enumerate() {
        for (k, &level) in cfg.levels.iter().enumerate() {
            let r = &ratios[zi][k];
            let conn = wilson(r.len(), n);
            let [med, q90, q99] = ratio_quantiles(r);
            let exceed = |c: f64| {
                let e = r.iter().filter(|&&x| x >= c).count();
                let ci = wilson(e, r.len().max(1));
                [
                    if r.is_empty() {
                        f64::NAN
                    } else {
                        e as f64 / r.len() as f64
                    },
                    ci.lo,
                    ci.hi,
                ]
            };
            let twice = 2.0 * pooled_median[k];
            let mut row = vec![
                z as f64,
                z as f64 * h,
                level,
                n as f64,
                r.len() as f64,
                r.len() as f64 / n as f64,
                conn.lo,
                conn.hi,
                med,
                q90,
                q99,
                twice,
            ];
            row.extend(exceed(twice));
            for &c in &cfg.geometry.c_list {
                row.extend(exceed(c));
            }
            res.push(cfg.seed, row);
        }
    }
    summarize_chemical(&mut res, cfg);
    Ok(res)
}

fn summarize_chemical(res: &mut ExperimentResult, cfg: &ExperimentConfig) {
    let col = |name: &str| res.column(name).unwrap_or_default();
    let (levels, q99, conn) = (col("level"), col("q99_ratio"), col("connected"));
    let (ex, lo, hi) = (
        col("exceed_twice_median"),
        col("exceed_lo"),
        col("exceed_hi"),
    );
    for (k, &level) in cfg.levels.iter().enumerate() {
        let idx: Vec<usize> = (k..levels.len()).step_by(cfg.levels.len()).collect();
        let qs: Vec<f64> = idx
            .iter()
            .map(|&i| q99[i])
            .filter(|q| q.is_finite())
            .collect();
        if qs.len() == idx.len() && !qs.is_empty() {
            let (mn, mx) = qs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &q| {
                    (a.min(q), b.max(q))
                });
            res.summary
                .insert(format!("q99_spread_level{level}"), (mx - mn) / mn);
            // the largest q99 over the sweep serves as the empirical C*
            res.summary.insert(format!("c_star_level{level}"), mx);
        }
        let disjoint = idx.windows(2).all(|w| lo[w[0]] > hi[w[1]]);
        let z_min = idx
            .windows(2)
            .map(|w| decrease_z(ex[w[0]], conn[w[0]], ex[w[1]], conn[w[1]]))
            .fold(f64::INFINITY, f64::min);
        res.summary.insert(
            format!("exceed_disjoint_ci_level{level}"),
            f64::from(u8::from(disjoint)),
        );
        res.summary
            .insert(format!("exceed_decrease_z_min_level{level}"), z_min);
    }
}

/// One-sided two-proportion statistic for `p1 > p2` with pooled variance;
/// above 1.645 means a decrease at 95% confidence.
pub fn decrease_z(p1: f64, n1: f64, p2: f64, n2: f64) -> f64 {
    let pool = (p1 * n1 + p2 * n2) / (n1 + n2);
    let se = (pool * (1.0 - pool) * (1.0 / n1 + 1.0 / n2)).sqrt();
    if se > 0.0 {
        (p1 - p2) / se
    } else {
        0.0
    }
}

/// Cells within Euclidean distance `r` (cells) of `c`.
fn ball(c: (usize, usize), r: f64) -> Vec<(usize, usize)> {
    let k = r.floor() as i64;
    let mut out = Vec::new();
    for dj in -k..=k {
        for di in -k..=k {
            if ((di * di + dj * dj) as f64) <= r * r {
                out.push(((c.0 as i64 + di) as usize, (c.1 as i64 + dj) as usize));
            }
        }
    }
    out
}

/// Shortest open path between the balls of radius `|z|^epsilon` around `0`
/// and `z`, per `|z|` and level.
pub fn run_global_structure(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.levels.is_empty() {
        return Err(Error::Config(
            "global structure needs at least one level".into(),
        ));
    }
    let mut cols: Vec<String> = [
        "z_cells",
        "z_len",
        "level",
        "ball_radius",
        "n",
        "found",
        "p_found",
        "found_lo",
        "found_hi",
        "median_ratio",
        "iqr_ratio",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for c in &cfg.geometry.c_list {
        cols.push(format!("p_good_c{c}"));
        cols.push(format!("p_good_c{c}_lo"));
        cols.push(format!("p_good_c{c}_hi"));
    }
    let col_refs: Vec<&str> = cols.iter().map(|s| s.as_str()).collect();
    let mut res = ExperimentResult::new(ExperimentKind::GlobalStructure, cfg, &col_refs);
    let h = cfg.grid.h;
    for &z in &cfg.geometry.z_cells {
        let SegmentLayout { spec, o, t, margin } = segment_layout(cfg, z)?;
        let z_len = z as f64 * h;
        let r_len = z_len.powf(cfg.geometry.epsilon);
        let r_cells = (r_len / h).min((z / 2) as f64);
        let (b0, bz) = (ball(o, r_cells), ball(t, r_cells));
        let kernel = cfg.kernel.build()?;
        let synth = FieldSynth::new(&kernel, &spec)?;
        let per_sample: Vec<Vec<Option<f64>>> = par::map_range(cfg.n_samples, |s| {
            let noise = sample_white_noise(&spec, cfg.seed, s as u64);
            let (f, df1) = synth.value_and_slope(&noise)?;
            let sf = slope_field_from_rows(&spec, &f, &df1, margin);
            cfg.levels
                .iter()
                .map(|&l| {
                    let m = threshold(&sf, l, cfg.connectivity);
                    let p = set_distance(&m, &b0, &bz)?;
                    Ok(p.found.then(|| p.length / z_len))
                })
                .collect::<Result<Vec<_>>>()
        })
        .into_iter()
        .collect::<Result<_>>()?;
        for (k, &level) in cfg.levels.iter().enumerate() {
            let ratios: Vec<f64> = per_sample.iter().filter_map(|v| v[k]).collect();
            let n = cfg.n_samples;
            let ci = wilson(ratios.len(), n);
            let (med, iqr) = if ratios.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (
                    quantile(&ratios, 0.5),
                    quantile(&ratios, 0.75) - quantile(&ratios, 0.25),
                )
            };
            let mut row = vec![
                z as f64,
                z_len,
                level,
                r_cells * h,
                n as f64,
                ratios.len() as f64,
                ratios.len() as f64 / n as f64,
                ci.lo,
                ci.hi,
                med,
                iqr,
            ];
            for &c in &cfg.geometry.c_list {
                let good = ratios.iter().filter(|&&r| r <= c).count();
                let ci = wilson(good, n);
                row.extend([good as f64 / n as f64, ci.lo, ci.hi]);
            }
            res.push(cfg.seed, row);
        }
    }
    Ok(res)
}

/// Per radius `R`: how often `sup_B |alpha - alpha_R| >= deviation` on a box
/// `B` at the window's lower-left corner, with `alpha_R` from `f_R` on the
/// same noise.
pub fn run_truncation_study(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let radii = &cfg.geometry.radii;
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "truncation radii must be non-empty and strictly ascending".into(),
        ));
    }
    let h = cfg.grid.h;
    let kernel = cfg.kernel.build()?;
    let nb = ((cfg.geometry.box_side / h).round() as usize).max(1) + 1;
    let margin = cfg.margin_cells()?;
    let spec = GridSpec::for_support([0.0, 0.0], h, nb + margin, nb, kernel.trunc_radius());
    let full = FieldSynth::new(&kernel, &spec)?;
    let truncated: Vec<FieldSynth> = radii
        .iter()
        .map(|&r| FieldSynth::truncated(&kernel, r, &spec))
        .collect::<Result<_>>()?;
    let eps = cfg.geometry.deviation;
    // per sample, per radius: (sup deviation, i, j)
    let per_sample: Vec<Vec<(f64, usize, usize)>> = par::map_range(cfg.n_samples, |s| {
        let noise = sample_white_noise(&spec, cfg.seed, s as u64);
        let fs = full.synthesize(&noise)?;
        let alpha = slope_field(&fs, margin);
        truncated
            .iter()
            .zip(radii)
            .map(|(synth, &r)| {
                let fr = synth.synthesize(&noise)?;
                let ar = windowed_slope_field(&fr, r);
                let mut best = (0.0f64, 0, 0);
                for j in 0..nb {
                    for i in 0..nb {
                        let d = (alpha.alpha.at(i, j) - ar.alpha.at(i, j)).abs();
                        if d > best.0 {
                            best = (d, i, j);
                        }
                    }
                }
                Ok(best)
            })
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut res = ExperimentResult::new(
        ExperimentKind::TruncationStudy,
        cfg,
        &[
            "radius", "n", "exceed", "p_hat", "ci_lo", "ci_hi", "mean_sup", "max_sup", "max_x",
            "max_y",
        ],
    );
    let mut pts = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        let sups: Vec<(f64, usize, usize)> = per_sample.iter().map(|v| v[k]).collect();
        let exceed = sups.iter().filter(|s| s.0 >= eps).count();
        let ci = wilson(exceed, cfg.n_samples);
        let mean = sups.iter().map(|s| s.0).sum::<f64>() / sups.len() as f64;
        let worst = sups
            .iter()
            .copied()
            .fold((0.0, 0, 0), |a, b| if b.0 > a.0 { b } else { a });
        let pos = spec.position(worst.1, worst.2);
        let p = exceed as f64 / cfg.n_samples as f64;
        res.push(
            cfg.seed,
            vec![
                r,
                cfg.n_samples as f64,
                exceed as f64,
                p,
                ci.lo,
                ci.hi,
                mean,
                worst.0,
                pos[0],
                pos[1],
            ],
        );
        if exceed > 0 {
            pts.push((r, p.ln()));
        }
    }
    if pts.len() >= 2 {
        let fit = linear_fit(&pts);
        res.summary.insert("log_p_slope".into(), fit.slope);
        res.summary.insert("log_p_slope_se".into(), fit.slope_se);
    }
    Ok(res)
}

/// Operator norm of the Hessian at a cell.
fn hessian_norm(fs: &FieldSample, i: usize, j: usize) -> f64 {
    let (a, b, c) = (fs.d2f11.at(i, j), fs.d2f12.at(i, j), fs.d2f22.at(i, j));
    (0.5 * (a + c)).abs() + (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

/// Largest `|alpha(z) - alpha(z')| / h` over adjacent nodes of a box.
pub fn discrete_lipschitz(sf: &crate::slope::SlopeField, rect: &CellRect) -> f64 {
    let h = sf.spec.h;
    let mut lip: f64 = 0.0;
    for (i, j) in rect.cells() {
        let a = sf.alpha.at(i, j);
        if i + 1 < rect.i + rect.nx {
            lip = lip.max((sf.alpha.at(i + 1, j) - a).abs() / h);
        }
        if j + 1 < rect.j + rect.ny {
            lip = lip.max((sf.alpha.at(i, j + 1) - a).abs() / h);
        }
    }
    lip
}

/// Per sample: discrete Lipschitz constant of `alpha` on the box against the
/// sampled bound `sup |Hess f|` over `[0, T_max + 1] x [0, box]`.
pub fn run_lipschitz_probe(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let h = cfg.grid.h;
    let kernel = cfg.kernel.build()?;
    let nb = ((cfg.geometry.box_side / h).round() as usize).max(1) + 1;
    let margin = cfg.margin_cells()?;
    let spec = GridSpec::for_support([0.0, 0.0], h, nb + margin, nb, kernel.trunc_radius());
    let synth = FieldSynth::new(&kernel, &spec)?;
    let rect = CellRect::new(0, 0, nb, nb);
    let rows: Vec<[f64; 4]> = par::map_range(cfg.n_samples, |s| {
        let fs = synth.sample(cfg.seed, s as u64);
        let sf = slope_field(&fs, margin);
        let lip = discrete_lipschitz(&sf, &rect);
        let t_max = rect
            .cells()
            .map(|(i, j)| sf.argmax_t.at(i, j))
            .fold(0.0, f64::max);
        let reach = (((t_max + 1.0) / h).ceil() as usize + nb).min(spec.nx);
        let mut m: f64 = 0.0;
        for j in 0..nb {
            for i in 0..reach {
                m = m.max(hessian_norm(&fs, i, j));
            }
        }
        [s as f64, lip, m, t_max]
    });
    let mut res = ExperimentResult::new(
        ExperimentKind::LipschitzProbe,
        cfg,
        &["sample", "lipschitz", "hessian_bound", "ratio", "t_max"],
    );
    let mut within = 0usize;
    for r in &rows {
        let ratio = r[1] / r[2];
        within += usize::from(ratio <= 1.0);
        res.push(cfg.seed, vec![r[0], r[1], r[2], ratio, r[3]]);
    }
    res.summary.insert(
        "fraction_within_bound".into(),
        within as f64 / rows.len() as f64,
    );
    Ok(res)
}

/// Mean level-set length against the Kac-Rice expression on a level sweep.
///
/// Without explicit levels, 20 levels are spread evenly between the 5th and
/// 95th percentiles of the sampled `alpha(0)`.
pub fn run_kac_rice(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let setup = KacRiceSetup {
        kernel: cfg.kernel.clone(),
        h: cfg.grid.h,
        ray_window: cfg.geometry.ray_window,
        box_side: cfg.geometry.box_side,
    };
    let samples = sample_alpha_at_origin(&setup, cfg.n_samples, mix_seed(cfg.seed, 1))?;
    let levels = if cfg.levels.is_empty() {
        let (lo, hi) = (
            quantile(&samples.alpha, 0.05),
            quantile(&samples.alpha, 0.95),
        );
        (0..20).map(|k| lo + (hi - lo) * k as f64 / 19.0).collect()
    } else {
        cfg.levels.clone()
    };
    let sigma = level_lengths(&setup, &levels, cfg.n_draws, mix_seed(cfg.seed, 2))?;
    let rows = kac_rice_compare(
        &samples,
        &levels,
        cfg.bandwidth,
        setup.volume(),
        &sigma,
        cfg.bootstrap,
        mix_seed(cfg.seed, 3),
    )?;
    let mut res = ExperimentResult::new(
        ExperimentKind::KacRice,
        cfg,
        &[
            "level",
            "lhs",
            "lhs_se",
            "lhs_lo",
            "lhs_hi",
            "rhs",
            "rhs_se",
            "rhs_lo",
            "rhs_hi",
            "density",
            "conditional_grad",
            "agree",
        ],
    );
    for r in &rows {
        res.push(
            cfg.seed,
            vec![
                r.level,
                r.lhs,
                r.lhs_se,
                r.lhs_ci.lo,
                r.lhs_ci.hi,
                r.rhs,
                r.rhs_se,
                r.rhs_ci.lo,
                r.rhs_ci.hi,
                r.density,
                r.conditional_grad,
                f64::from(u8::from(r.agree)),
            ],
        );
    }
    let kde = DensityEstimate::new(samples.alpha.clone(), cfg.bandwidth)?;
    res.summary.insert(
        "agree_fraction".into(),
        rows.iter().filter(|r| r.agree).count() as f64 / rows.len() as f64,
    );
    res.summary.insert("bandwidth".into(), kde.bandwidth);
    res.summary
        .insert("density_integral".into(), kde.integral());
    res.summary.insert("volume".into(), setup.volume());
    res.summary.insert(
        "positive_fraction".into(),
        samples.alpha.iter().filter(|&&a| a > 0.0).count() as f64 / samples.alpha.len() as f64,
    );
    res.notes.push(
        "right-hand side smooths over (alpha(0), grad alpha(0)) by kernel regression; a joint density is not assumed".into(),
    );
    Ok(res)
}

/// Bisection for the level where the square is crossed with probability 1/2.
pub fn run_critical_level(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let g = &cfg.geometry;
    let setup = cfg.crossing_setup([g.square_side, g.square_side]);
    let lc = estimate_critical_level(&setup, g.square_side, cfg.n_samples, g.tol, cfg.seed)?;
    let mut res = ExperimentResult::new(
        ExperimentKind::CriticalLevel,
        cfg,
        &["level", "n", "successes", "p_hat", "ci_lo", "ci_hi"],
    );
    for p in &lc.probes {
        res.push(
            p.seed,
            vec![
                p.level,
                p.n as f64,
                p.successes as f64,
                p.p_hat,
                p.ci_lo,
                p.ci_hi,
            ],
        );
    }
    res.summary.insert("estimate".into(), lc.estimate);
    res.summary.insert("bracket_lo".into(), lc.bracket.lo);
    res.summary.insert("bracket_hi".into(), lc.bracket.hi);
    res.summary.insert("bracket_width".into(), lc.width());
    res.summary
        .insert("non_monotone".into(), f64::from(u8::from(lc.non_monotone)));
    res.notes.push(
        "finite-size proxy: level of crossing probability 1/2 on a single square size".into(),
    );
    Ok(res)
}

/// Crossing thresholds of the rectangle for `n` samples, at scale 1.
pub fn crossing_thresholds(
    cfg: &ExperimentConfig,
    rect: [f64; 2],
    dir: Direction,
) -> Result<Vec<f64>> {
    let mut setup = cfg.crossing_setup(rect);
    setup.direction = dir;
    setup.thresholds(1.0, cfg.n_samples, cfg.seed)
}

/// `K(0)` of the configured kernel and the ray margin it implies.
pub fn margin_report(cfg: &ExperimentConfig) -> Result<(f64, usize)> {
    let k0 = Covariance::new(cfg.kernel.build()?).at([0.0, 0.0]);
    Ok((
        k0,
        ray_margin(k0, cfg.grid.margin_level, cfg.grid.h, cfg.grid.margin_tol),
    ))
}
