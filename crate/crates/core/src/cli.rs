//! Command-line front end: run configuration, the four experiment drivers,
//! and CSV/JSON/SVG emission with a checksummed manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::contact::{self, Chi, ContactError, GtdMetricSpec};
use crate::geodesic::{
    self, GeodesicError, GeodesicOptions, GeodesicSystem, GeodesicTrajectory, IncompletenessReport,
};
use crate::geometry::{riemann, CurvatureField, GeometryError, MetricField};
use crate::symexpr::{parse, Chart, Expr, Program};
use crate::vdw::{self, VdwError, VdwParams};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("grid point {point:?} lies outside the domain")]
    GridDomain { point: Vec<f64> },
    #[error(transparent)]
    Vdw(#[from] VdwError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Contact(#[from] ContactError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    #[default]
    Vdw,
    Flat,
    Custom,
}

/// A metric given by component expressions; `guard` and `constraints`
/// play the roles of the singular polynomial and the domain inequalities
/// (each must stay positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomMetric {
    pub coordinates: Vec<String>,
    pub components: Vec<Vec<String>>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub guard: Option<String>,
    #[serde(default)]
    pub constraints: Vec<String>,
}

/// `n` equally spaced values from `lo` to `hi` inclusive; written `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n)
                .map(|k| {
                    if k == n - 1 {
                        self.hi
                    } else {
                        self.lo + (self.hi - self.lo) * k as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected lo:hi:n, got {s:?}"));
        }
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        let (lo, hi) = (num(parts[0])?, num(parts[1])?);
        let n = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|e| format!("{:?}: {e}", parts[2]))?;
        if !lo.is_finite() || !hi.is_finite() {
            return Err("range bounds must be finite".into());
        }
        Ok(Range { lo, hi, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvatureConfig {
    pub u: Range,
    pub v: Range,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        CurvatureConfig {
            u: Range {
                lo: 0.5,
                hi: 5.0,
                n: 20,
            },
            v: Range {
                lo: 1.5,
                hi: 5.0,
                n: 20,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicsConfig {
    pub v0: f64,
    pub du0: f64,
    pub dv0: f64,
    /// Initial values of the first coordinate, one trajectory each.
    pub u0: Vec<f64>,
    pub options: GeodesicOptions,
    pub endpoint_tol: f64,
}

impl Default for GeodesicsConfig {
    fn default() -> Self {
        GeodesicsConfig {
            v0: 0.1,
            du0: 0.0,
            dv0: 1.0,
            u0: Range {
                lo: 0.0,
                hi: 140.0,
                n: 15,
            }
            .values(),
            options: GeodesicOptions::default(),
            endpoint_tol: geodesic::ENDPOINT_RTOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocusConfig {
    pub pressure: f64,
}

impl Default for LocusConfig {
    fn default() -> Self {
        LocusConfig { pressure: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LegendreMetric {
    #[default]
    GtdFirstOrder,
    GtdSecondOrder,
    Hessian,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LegendreConfig {
    pub metric: LegendreMetric,
    /// Number of extensive variables.
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for LegendreConfig {
    fn default() -> Self {
        LegendreConfig {
            metric: LegendreMetric::default(),
            n: 2,
            trials: 100,
            seed: 0,
        }
    }
}

/// Fully resolved configuration of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemKind,
    pub custom: Option<CustomMetric>,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub curvature: CurvatureConfig,
    pub geodesics: GeodesicsConfig,
    pub locus: LocusConfig,
    pub legendre: LegendreConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            system: SystemKind::Vdw,
            custom: None,
            a: 1.0,
            b: 0.05,
            lambda: 1.0,
            out: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
            curvature: CurvatureConfig::default(),
            geodesics: GeodesicsConfig::default(),
            locus: LocusConfig::default(),
            legendre: LegendreConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        RunConfig::from_json(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn vdw_params(&self) -> Result<VdwParams, CliError> {
        Ok(VdwParams::new(self.a, self.b, self.lambda)?)
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Metric plus optional singular polynomial and domain constraints.
struct SystemSpec {
    metric: MetricField,
    guard: Option<Expr>,
    constraints: Vec<Expr>,
    vdw: Option<VdwParams>,
}

fn parse_expr(text: &str, what: &str) -> Result<Expr, CliError> {
    parse(text).map_err(|e| CliError::Config(format!("{what} {text:?}: {e}")))
}

fn build_system(cfg: &RunConfig) -> Result<SystemSpec, CliError> {
    match cfg.system {
        SystemKind::Vdw => {
            let p = cfg.vdw_params()?;
            let consts = [("a", p.a), ("b", p.b)]
                .iter()
                .map(|(k, v)| (k.to_string(), Expr::decimal(*v)))
                .collect();
            let e = |s: &str| parse(s).expect("formula").substitute(&consts);
            Ok(SystemSpec {
                metric: vdw::vdw_metric_closed(&p),
                guard: Some(e(vdw::BOUNDARY_POLY)),
                constraints: vec![e("V - b"), e("U + a/V")],
                vdw: Some(p),
            })
        }
        SystemKind::Flat => {
            let chart = Chart::new(&["U", "V"]).expect("chart");
            let metric =
                MetricField::diagonal(chart, vec![Expr::one(), Expr::one()], Default::default())?;
            Ok(SystemSpec {
                metric,
                guard: None,
                constraints: Vec::new(),
                vdw: None,
            })
        }
        SystemKind::Custom => {
            let c = cfg.custom.as_ref().ok_or_else(|| {
                CliError::Config("system \"custom\" needs a \"custom\" metric".into())
            })?;
            let chart = Chart::new(&c.coordinates).map_err(|e| CliError::Config(e.to_string()))?;
            let rows = c
                .components
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|t| parse_expr(t, "metric component"))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            let metric = MetricField::new(chart, rows, c.params.clone())?;
            let guard = c
                .guard
                .as_deref()
                .map(|g| parse_expr(g, "guard"))
                .transpose()?;
            let constraints = c
                .constraints
                .iter()
                .map(|t| parse_expr(t, "constraint"))
                .collect::<Result<_, _>>()?;
            Ok(SystemSpec {
                metric,
                guard,
                constraints,
                vdw: None,
            })
        }
    }
}

fn require_dim(spec: &SystemSpec, n: usize) -> Result<(), CliError> {
    if spec.metric.dim() != n {
        return Err(CliError::Config(format!(
            "this command needs a {n}-dimensional metric, got {}",
            spec.metric.dim()
        )));
    }
    Ok(())
}

/// Shortest representation that parses back to the same double.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_owned()
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// In-memory outputs of one command, in emission order.
#[derive(Debug, Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    failures: usize,
}

impl Artifacts {
    fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Written as `manifest.json` next to the outputs of every invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub duration_seconds: f64,
    pub failures: usize,
    pub outputs: Vec<OutputRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn emit(
    command: &str,
    cfg: &RunConfig,
    art: Artifacts,
    started: Instant,
) -> Result<RunManifest, CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let mut outputs = Vec::with_capacity(art.files.len());
    for (name, bytes) in &art.files {
        let path = cfg.out.join(name);
        std::fs::write(&path, bytes).map_err(io_err(&path))?;
        let digest = Sha256::digest(bytes);
        let sha256 = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        outputs.push(OutputRecord {
            file: name.clone(),
            bytes: bytes.len(),
            sha256,
        });
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config: cfg.clone(),
        duration_seconds: started.elapsed().as_secs_f64(),
        failures: art.failures,
        outputs,
    };
    let path = cfg.out.join(MANIFEST_FILE);
    std::fs::write(&path, json_bytes(&manifest)).map_err(io_err(&path))?;
    Ok(manifest)
}

// ---------------------------------------------------------------- curvature

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureSummary {
    pub system: SystemKind,
    pub coordinates: Vec<String>,
    pub u: Range,
    pub v: Range,
    pub cells: usize,
    pub flagged: usize,
    /// Extremes of `|R|` over unflagged cells.
    pub min_abs_r: Option<f64>,
    pub max_abs_r: Option<f64>,
}

/// One grid cell: scalar curvature, or `None` when flagged as near-singular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureCell {
    pub u: f64,
    pub v: f64,
    pub r: Option<f64>,
}

fn curvature_field(spec: &SystemSpec) -> Result<CurvatureField, CliError> {
    match &spec.vdw {
        Some(p) => Ok(vdw::vdw_curvature(p)?),
        None => Ok(riemann(&spec.metric)?),
    }
}

fn check_domain(spec: &SystemSpec, point: &[f64]) -> Result<(), CliError> {
    if let Some(p) = &spec.vdw {
        return p
            .check(point[0], point[1])
            .map(|_| ())
            .map_err(|_| CliError::GridDomain {
                point: point.to_vec(),
            });
    }
    if spec.constraints.is_empty() {
        return Ok(());
    }
    let names: Vec<String> = spec
        .metric
        .chart()
        .names()
        .iter()
        .chain(spec.metric.params().keys())
        .cloned()
        .collect();
    let prog =
        Program::compile(&spec.constraints, &names).map_err(|e| CliError::Config(e.to_string()))?;
    let inputs: Vec<f64> = point
        .iter()
        .chain(spec.metric.params().values())
        .copied()
        .collect();
    match prog.eval(&inputs) {
        Ok(v) if v.iter().all(|c| *c > 0.0) => Ok(()),
        _ => Err(CliError::GridDomain {
            point: point.to_vec(),
        }),
    }
}

/// Evaluates `R` on the grid (V outer, U inner). A cell is flagged when the
/// proximity guard refuses it, or when a denominator factor changes sign
/// between it and a grid neighbour and it is the neighbour closer to zero.
pub fn curvature_grid(cfg: &RunConfig) -> Result<(Vec<CurvatureCell>, CurvatureSummary), CliError> {
    let spec = build_system(cfg)?;
    require_dim(&spec, 2)?;
    let (us, vs) = (cfg.curvature.u.values(), cfg.curvature.v.values());
    for &v in &vs {
        for &u in &us {
            check_domain(&spec, &[u, v])?;
        }
    }
    let field = curvature_field(&spec)?;
    let (nu, nv) = (us.len(), vs.len());
    let mut cells = Vec::with_capacity(nu * nv);
    let mut factors = Vec::with_capacity(nu * nv);
    for &v in &vs {
        for &u in &us {
            let r = match field.scalar_at(&[u, v]) {
                Ok(r) => Some(r),
                Err(GeometryError::SingularProximity { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            cells.push(CurvatureCell { u, v, r });
            factors.push(field.factors_at(&[u, v])?);
        }
    }
    let mut flag = vec![false; cells.len()];
    let mut pairs = Vec::new();
    for iv in 0..nv {
        for iu in 0..nu {
            let k = iv * nu + iu;
            if iu + 1 < nu {
                pairs.push((k, k + 1));
            }
            if iv + 1 < nv {
                pairs.push((k, k + nu));
            }
        }
    }
    for (i, j) in pairs {
        for (fi, fj) in factors[i].iter().zip(&factors[j]) {
            if fi.signum() != fj.signum() || *fi == 0.0 || *fj == 0.0 {
                flag[if fi.abs() <= fj.abs() { i } else { j }] = true;
            }
        }
    }
    for (c, f) in cells.iter_mut().zip(&flag) {
        if *f {
            c.r = None;
        }
    }
    let abs: Vec<f64> = cells.iter().filter_map(|c| c.r.map(f64::abs)).collect();
    let summary = CurvatureSummary {
        system: cfg.system,
        coordinates: spec.metric.chart().names().to_vec(),
        u: cfg.curvature.u,
        v: cfg.curvature.v,
        cells: cells.len(),
        flagged: cells.iter().filter(|c| c.r.is_none()).count(),
        min_abs_r: abs.iter().copied().reduce(f64::min),
        max_abs_r: abs.iter().copied().reduce(f64::max),
    };
    Ok((cells, summary))
}

fn curvature_artifacts(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let (cells, summary) = curvature_grid(cfg)?;
    let mut art = Artifacts::default();
    if cfg.wants(Format::Csv) {
        let names = &summary.coordinates;
        let mut csv = format!("{},{},R\n", names[0], names[1]);
        for c in &cells {
            let r = c.r.map_or_else(|| "inf".to_owned(), fmt_f64);
            let _ = writeln!(csv, "{},{},{}", fmt_f64(c.u), fmt_f64(c.v), r);
        }
        art.push("curvature.csv", csv.into_bytes());
    }
    if cfg.wants(Format::Json) {
        art.push("curvature.json", json_bytes(&summary));
    }
    Ok(art)
}

/// Scalar curvature on a grid: `curvature.csv` and `curvature.json`.
pub fn cmd_curvature(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let art = curvature_artifacts(cfg)?;
    emit("curvature", cfg, art, started)
}

// ---------------------------------------------------------------- geodesics

/// Per-trajectory entry of `geodesics.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub u0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub affine_norm_drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<IncompletenessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn trajectory_file(index: usize) -> String {
    format!("geodesic_{index:03}.csv")
}

fn trajectory_csv(names: &[String], traj: &GeodesicTrajectory) -> String {
    let mut csv = String::from("tau");
    for n in names {
        let _ = write!(csv, ",{n}");
    }
    for n in names {
        let _ = write!(csv, ",d{n}");
    }
    csv.push('\n');
    for s in &traj.samples {
        csv.push_str(&fmt_f64(s.tau));
        for x in s.x.iter().chain(&s.v) {
            csv.push(',');
            csv.push_str(&fmt_f64(*x));
        }
        csv.push('\n');
    }
    csv
}

/// Integrates the configured sweep and returns the per-trajectory records
/// together with the successful trajectories (same order, `None` on error).
pub fn run_geodesics(
    cfg: &RunConfig,
) -> Result<(Vec<TrajectoryRecord>, Vec<Option<GeodesicTrajectory>>), CliError> {
    let g = &cfg.geodesics;
    g.options.validate()?;
    if !(g.endpoint_tol > 0.0) {
        return Err(CliError::Config("endpoint_tol must be positive".into()));
    }
    if let Some(u) = g.u0.iter().find(|u| !u.is_finite()) {
        return Err(CliError::Config(format!("invalid initial value {u}")));
    }
    let spec = build_system(cfg)?;
    require_dim(&spec, 2)?;
    let sys = Arc::new(GeodesicSystem::new(
        spec.metric,
        spec.guard,
        spec.constraints,
    )?);
    let batch = geodesic::shoot_batch(
        &sys,
        &[0.0, g.v0],
        &[g.du0, g.dv0],
        &g.u0,
        g.options,
        spec.vdw.as_ref(),
        g.endpoint_tol,
    );
    let mut records = Vec::with_capacity(batch.len());
    let mut trajectories = Vec::with_capacity(batch.len());
    for (index, (item, &u0)) in batch.into_iter().zip(&g.u0).enumerate() {
        let mut rec = TrajectoryRecord {
            index,
            u0,
            csv: None,
            samples: None,
            affine_norm_drift: None,
            report: None,
            error: None,
        };
        match item {
            Ok((traj, report)) => {
                rec.csv = cfg.wants(Format::Csv).then(|| trajectory_file(index));
                rec.samples = Some(traj.samples.len());
                rec.affine_norm_drift = geodesic::affine_norm_drift(&sys, &traj).ok();
                rec.report = Some(report);
                trajectories.push(Some(traj));
            }
            Err(e) => {
                rec.error = Some(e.to_string());
                trajectories.push(None);
            }
        }
        records.push(rec);
    }
    Ok((records, trajectories))
}

fn geodesics_artifacts(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let (records, trajectories) = run_geodesics(cfg)?;
    let names: Vec<String> = build_system(cfg)?.metric.chart().names().to_vec();
    let mut art = Artifacts {
        failures: records.iter().filter(|r| r.error.is_some()).count(),
        ..Default::default()
    };
    if cfg.wants(Format::Csv) {
        for (i, t) in trajectories.iter().enumerate() {
            if let Some(t) = t {
                art.push(trajectory_file(i), trajectory_csv(&names, t).into_bytes());
            }
        }
    }
    if cfg.wants(Format::Json) {
        art.push("geodesics.json", json_bytes(&records));
    }
    if cfg.wants(Format::Svg) {
        let lines: Vec<Vec<(f64, f64)>> = trajectories
            .iter()
            .flatten()
            .map(|t| t.samples.iter().map(|s| (s.x[1], s.x[0])).collect())
            .collect();
        art.push(
            "geodesics.svg",
            svg_plot(&lines, &names[1], &names[0]).into_bytes(),
        );
    }
    Ok(art)
}

/// Geodesic sweep over the first initial coordinate: one CSV per
/// trajectory, `geodesics.json`, and optionally `geodesics.svg`.
pub fn cmd_geodesics(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let art = geodesics_artifacts(cfg)?;
    emit("geodesics", cfg, art, started)
}

// ---------------------------------------------------------------- svg

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn padded_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.02 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(x: f64) -> String {
    let x = if x.abs() < 1e-12 { 0.0 } else { x };
    if x != 0.0 && (x.abs() >= 1e5 || x.abs() < 1e-3) {
        format!("{x:.1e}")
    } else {
        let s = format!("{x:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

/// Static line plot: one polyline per series, linear axes with tick labels.
pub fn svg_plot(series: &[Vec<(f64, f64)>], x_label: &str, y_label: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 20.0;
    const B: f64 = 50.0;
    const COLORS: [&str; 8] = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
    ];
    let (x0, x1) = padded_bounds(series.iter().flatten().map(|p| p.0));
    let (y0, y1) = padded_bounds(series.iter().flatten().map(|p| p.1));
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{L}" y="{T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - L - R,
        H - T - B
    );
    for t in nice_ticks(x0, x1) {
        let px = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/>"#,
            H - B,
            H - B + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - B + 18.0,
            tick_label(t)
        );
    }
    for t in nice_ticks(y0, y1) {
        let py = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{L}" y2="{py:.2}" stroke="black"/>"#,
            L - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            L - 8.0,
            py + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        L + (W - L - R) / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{y_label}</text>"#,
        T + (H - T - B) / 2.0
    );
    for (k, line) in series.iter().enumerate() {
        let pts: Vec<String> = line
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLORS[k % COLORS.len()],
            pts.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}

// ---------------------------------------------------------------- locus

fn locus_artifacts(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let report = vdw::singular_locus(cfg.locus.pressure, &cfg.vdw_params()?)?;
    let mut art = Artifacts::default();
    if cfg.wants(Format::Json) {
        art.push("locus.json", json_bytes(&report));
    }
    Ok(art)
}

/// Roots of the phase-transition cubic at the configured pressure:
/// `locus.json`.
pub fn cmd_locus(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let art = locus_artifacts(cfg)?;
    emit("locus", cfg, art, started)
}

// ---------------------------------------------------------------- legendre

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LegendreVerdict {
    pub metric: LegendreMetric,
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
    pub trials: usize,
    pub redraws: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub verdict: &'static str,
}

pub fn legendre_verdict(cfg: &RunConfig) -> Result<LegendreVerdict, CliError> {
    let l = &cfg.legendre;
    if l.n == 0 || l.trials == 0 {
        return Err(CliError::Config(
            "legendre needs n ≥ 1 and at least one trial".into(),
        ));
    }
    let metric = match l.metric {
        LegendreMetric::GtdFirstOrder => {
            contact::gtd_metric(&GtdMetricSpec::new(cfg.lambda, Chi::Delta)?, l.n)
        }
        LegendreMetric::GtdSecondOrder => {
            contact::gtd_metric(&GtdMetricSpec::new(cfg.lambda, Chi::Eta)?, l.n)
        }
        LegendreMetric::Hessian => contact::hessian_generating_metric(l.n),
        LegendreMetric::Flat => contact::flat_phase_metric(l.n),
    };
    let r = contact::legendre_invariance_check(&metric, l.trials, l.seed)?;
    Ok(LegendreVerdict {
        metric: l.metric,
        n: l.n,
        lambda: cfg.lambda,
        seed: l.seed,
        trials: r.trials,
        redraws: r.redraws,
        max_deviation: r.max_deviation,
        tolerance: contact::INVARIANCE_RTOL,
        verdict: if r.pass { "PASS" } else { "FAIL" },
    })
}

/// Randomized Legendre-invariance verdict: `legendre.json`.
pub fn cmd_legendre(cfg: &RunConfig) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let verdict = legendre_verdict(cfg)?;
    let mut art = Artifacts::default();
    if cfg.wants(Format::Json) {
        art.push("legendre.json", json_bytes(&verdict));
    }
    emit("legendre", cfg, art, started)
}

// ---------------------------------------------------------------- arguments

#[derive(Debug, Parser)]
#[command(
    name = "gtd",
    version,
    about = "Geometrothermodynamics of the van der Waals gas"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scalar curvature on a rectangular (U, V) grid.
    Curvature(CurvatureArgs),
    /// Geodesic sweep over initial energies.
    Geodesics(GeodesicsArgs),
    /// Roots of the phase-transition cubic at fixed pressure.
    Locus(LocusArgs),
    /// Legendre-invariance verdict for a phase-space metric.
    Legendre(LegendreArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub system: Option<SystemKind>,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Output formats; repeatable. Replaces the configured list.
    #[arg(long, value_enum)]
    pub format: Vec<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct CurvatureArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// U grid as lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    pub u_range: Option<Range>,
    /// V grid as lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    pub v_range: Option<Range>,
}

#[derive(Debug, Clone, Args)]
pub struct GeodesicsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub v0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub du0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub dv0: Option<f64>,
    /// Initial U values as lo:hi:n.
    #[arg(long, allow_hyphen_values = true)]
    pub u0_range: Option<Range>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Relative residual below which a singular stop counts as a phase-boundary endpoint.
    #[arg(long)]
    pub endpoint_tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct LocusArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub pressure: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct LegendreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub metric: Option<LegendreMetric>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn resolve(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(s) = common.system {
        cfg.system = s;
    }
    cfg.a = common.a.unwrap_or(cfg.a);
    cfg.b = common.b.unwrap_or(cfg.b);
    cfg.lambda = common.lambda.unwrap_or(cfg.lambda);
    if !common.format.is_empty() {
        let mut f = common.format.clone();
        f.sort_by_key(|x| *x as u8);
        f.dedup();
        cfg.formats = f;
    }
    Ok(cfg)
}

impl Command {
    /// Merges the configuration file (if any) with the flags.
    pub fn config(&self) -> Result<RunConfig, CliError> {
        match self {
            Command::Curvature(a) => {
                let mut cfg = resolve(&a.common)?;
                cfg.curvature.u = a.u_range.unwrap_or(cfg.curvature.u);
                cfg.curvature.v = a.v_range.unwrap_or(cfg.curvature.v);
                Ok(cfg)
            }
            Command::Geodesics(a) => {
                let mut cfg = resolve(&a.common)?;
                let g = &mut cfg.geodesics;
                g.v0 = a.v0.unwrap_or(g.v0);
                g.du0 = a.du0.unwrap_or(g.du0);
                g.dv0 = a.dv0.unwrap_or(g.dv0);
                if let Some(r) = a.u0_range {
                    g.u0 = r.values();
                }
                g.options.rtol = a.rtol.unwrap_or(g.options.rtol);
                g.options.atol = a.atol.unwrap_or(g.options.atol);
                g.options.tau_max = a.tau_max.unwrap_or(g.options.tau_max);
                g.endpoint_tol = a.endpoint_tol.unwrap_or(g.endpoint_tol);
                Ok(cfg)
            }
            Command::Locus(a) => {
                let mut cfg = resolve(&a.common)?;
                cfg.locus.pressure = a.pressure.unwrap_or(cfg.locus.pressure);
                Ok(cfg)
            }
            Command::Legendre(a) => {
                let mut cfg = resolve(&a.common)?;
                let l = &mut cfg.legendre;
                l.metric = a.metric.unwrap_or(l.metric);
                l.n = a.n.unwrap_or(l.n);
                l.trials = a.trials.unwrap_or(l.trials);
                l.seed = a.seed.unwrap_or(l.seed);
                Ok(cfg)
            }
        }
    }
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> Result<RunManifest, CliError> {
    let cfg = cli.command.config()?;
    match cli.command {
        Command::Curvature(_) => cmd_curvature(&cfg),
        Command::Geodesics(_) => cmd_geodesics(&cfg),
        Command::Locus(_) => cmd_locus(&cfg),
        Command::Legendre(_) => cmd_legendre(&cfg),
    }
}
