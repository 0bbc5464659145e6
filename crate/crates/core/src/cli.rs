//! Experiment configs, command dispatch, CSV/JSON artifacts, sweeps and run manifests behind
//! the `fraclap` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use schemars::{schema_for, JsonSchema};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::conjugate::{first_commutator_residual, mourre_constant, second_commutator_residual, CommutatorOptions};
use crate::dynamics::{
    ballistic_average, chebyshev_evolve, local_decay_integral, rage_overlap, DecayOptions, Propagator,
};
use crate::error::Error;
use crate::fmt::f17;
use crate::kernel::{kernel_table, QuadSpec};
use crate::model::{eig_all, BoxModel, EigOptions, FrequencyGrid, LatticeModel, Potential, TorusModel, DEFAULT_DENSE_CAP};
use crate::resolvent::{lap_scan, LapOptions, LapWeights};
use crate::scattering::{birman_krein, scatter_sweep, ssf_counting_grid, ScatterOptions, SsfOptions};
use crate::symbol::{spectrum_interval, symbol_grid, threshold_set, EnergyWindow, FractionalOrder};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Compute(#[from] Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for schema violations, 4 for threshold-guard refusals, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(Error::ThresholdGuard { .. }) => 4,
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Errors raised while turning params into domain objects are config errors.
fn check<T>(r: crate::error::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Symbol,
    Kernel,
    Spectrum,
    Thresholds,
    Mourre,
    Lap,
    Evolve,
    Ballistic,
    Scatter,
    Ssf,
    Bk,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Symbol,
        Command::Kernel,
        Command::Spectrum,
        Command::Thresholds,
        Command::Mourre,
        Command::Lap,
        Command::Evolve,
        Command::Ballistic,
        Command::Scatter,
        Command::Ssf,
        Command::Bk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Symbol => "symbol",
            Command::Kernel => "kernel",
            Command::Spectrum => "spectrum",
            Command::Thresholds => "thresholds",
            Command::Mourre => "mourre",
            Command::Lap => "lap",
            Command::Evolve => "evolve",
            Command::Ballistic => "ballistic",
            Command::Scatter => "scatter",
            Command::Ssf => "ssf",
            Command::Bk => "bk",
        }
    }

    pub fn from_name(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// One run: a command, its parameter table, an output directory and a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum OrderSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl OrderSpec {
    fn order(&self) -> CliResult<FractionalOrder> {
        check(match self {
            OrderSpec::Scalar(r) => FractionalOrder::scalar(*r),
            OrderSpec::Vector(r) => FractionalOrder::new(r.clone()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

/// A single energy, an explicit list, or lo..=hi in steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum EnergyGrid {
    One(f64),
    Many(Vec<f64>),
    Range(RangeSpec),
}

impl EnergyGrid {
    fn values(&self) -> CliResult<Vec<f64>> {
        let v = match self {
            EnergyGrid::One(x) => vec![*x],
            EnergyGrid::Many(v) => v.clone(),
            EnergyGrid::Range(RangeSpec { lo, hi, step }) => {
                if !(*step > 0.0) || !(hi >= lo) {
                    return Err(CliError::Config("range needs step > 0 and hi >= lo".into()));
                }
                let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
                if n > 100_000 {
                    return Err(CliError::Config(format!("range of {n} points is too long")));
                }
                (0..n).map(|i| lo + step * i as f64).collect()
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config("energy grid must be non-empty and finite".into()));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SiteValue {
    pub site: Vec<i64>,
    pub value: f64,
}

fn potential(entries: &[SiteValue], d: usize) -> CliResult<Potential> {
    let mut w = Potential::zero(d);
    for e in entries {
        if e.site.len() != d {
            return Err(CliError::Config(format!("potential site {:?} does not have dimension {d}", e.site)));
        }
        if !e.value.is_finite() {
            return Err(CliError::Config("potential values must be finite".into()));
        }
        if e.value != 0.0 {
            w.values.insert(e.site.clone(), e.value);
        }
    }
    Ok(w)
}

fn window(w: [f64; 2]) -> CliResult<EnergyWindow> {
    check(EnergyWindow::new(w[0], w[1]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    Plain,
    HalfInteger,
    ZeroModeProjected,
}

impl From<GridSpec> for FrequencyGrid {
    fn from(g: GridSpec) -> Self {
        match g {
            GridSpec::Plain => FrequencyGrid::Plain,
            GridSpec::HalfInteger => FrequencyGrid::HalfInteger,
            GridSpec::ZeroModeProjected => FrequencyGrid::ZeroModeProjected,
        }
    }
}

fn default_grid(order: &FractionalOrder, g: Option<GridSpec>) -> FrequencyGrid {
    g.map(Into::into).unwrap_or(if order.has_negative() { FrequencyGrid::HalfInteger } else { FrequencyGrid::Plain })
}

/// Periodic torus of side `n` or the box [−l, l]^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Torus {
        n: usize,
        #[serde(default)]
        grid: Option<GridSpec>,
    },
    Box {
        l: usize,
    },
}

impl ModelSpec {
    fn build(&self, order: &FractionalOrder, w: &Potential) -> CliResult<LatticeModel> {
        let m = match self {
            ModelSpec::Torus { n, grid } => {
                LatticeModel::Torus(check(TorusModel::new(order.clone(), *n, default_grid(order, *grid)))?)
            }
            ModelSpec::Box { l } => {
                let side = (2 * l + 1) as f64;
                if side.powi(order.dim() as i32) > DEFAULT_DENSE_CAP as f64 {
                    return Err(CliError::Config(format!("box of side {side} exceeds the dense cap {DEFAULT_DENSE_CAP}")));
                }
                LatticeModel::Box(BoxModel::build(order.clone(), *l, &QuadSpec::default())?)
            }
        };
        if w.is_zero() {
            Ok(m)
        } else {
            Ok(m.with_potential(w)?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Unit mass at one site (the origin by default).
    Delta {
        #[serde(default)]
        site: Option<Vec<i64>>,
    },
    /// exp(−|n − c|²/(2 width²) + i k·n) on every axis, normalised.
    Gaussian {
        #[serde(default)]
        center: Option<Vec<i64>>,
        width: f64,
        #[serde(default)]
        momentum: f64,
    },
    /// Seeded complex Gaussian entries on |n|_∞ ≤ radius, normalised.
    Random { radius: i64 },
}

impl InitialState {
    fn build(&self, model: &LatticeModel, seed: u64) -> CliResult<Vec<Complex64>> {
        let n = model.sites();
        let d = model.order().dim();
        let coords: Vec<Vec<i64>> = (0..n).map(|i| model.coords(i)).collect();
        let dim_check = |c: &Option<Vec<i64>>| -> CliResult<Vec<i64>> {
            let c = c.clone().unwrap_or_else(|| vec![0; d]);
            if c.len() != d {
                return Err(CliError::Config(format!("site {c:?} does not have dimension {d}")));
            }
            Ok(c)
        };
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        match self {
            InitialState::Delta { site } => {
                let s = dim_check(site)?;
                let i = coords
                    .iter()
                    .position(|c| *c == s)
                    .ok_or_else(|| CliError::Config(format!("site {s:?} lies outside the model")))?;
                v[i] = Complex64::new(1.0, 0.0);
            }
            InitialState::Gaussian { center, width, momentum } => {
                if !(*width > 0.0) {
                    return Err(CliError::Config("gaussian width must be positive".into()));
                }
                let c0 = dim_check(center)?;
                for (x, c) in v.iter_mut().zip(&coords) {
                    let r2: f64 = c.iter().zip(&c0).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
                    let phase: f64 = c.iter().map(|&a| momentum * a as f64).sum();
                    *x = Complex64::from_polar((-r2 / (2.0 * width * width)).exp(), phase);
                }
            }
            InitialState::Random { radius } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for (x, c) in v.iter_mut().zip(&coords) {
                    if c.iter().all(|a| a.abs() <= *radius) {
                        *x = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                    }
                }
            }
        }
        let nrm = crate::linalg::norm(&v);
        if nrm == 0.0 {
            return Err(CliError::Config("initial state vanishes on the model".into()));
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        Ok(v)
    }
}

fn default_initial() -> InitialState {
    InitialState::Delta { site: None }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SymbolParams {
    pub r: OrderSpec,
    /// Grid points per axis on [−π, π].
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    33
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    pub r: f64,
    /// Largest |k| tabulated.
    #[serde(rename = "K")]
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    pub r: OrderSpec,
    /// Torus side.
    pub n: usize,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub potential: Vec<SiteValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsParams {
    pub r: OrderSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MourreParams {
    pub r: OrderSpec,
    /// Box half-width.
    #[serde(rename = "L")]
    pub l: usize,
    pub window: [f64; 2],
    #[serde(default)]
    pub potential: Vec<SiteValue>,
    #[serde(default = "default_bulk")]
    pub bulk_threshold: f64,
    /// Also report the first and second commutator residuals (free box only).
    #[serde(default = "yes")]
    pub commutators: bool,
}

fn default_bulk() -> f64 {
    CommutatorOptions::default().bulk_threshold
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    Position,
    Conjugate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LapParams {
    pub r: OrderSpec,
    pub model: ModelSpec,
    pub window: [f64; 2],
    pub s: f64,
    /// Strictly decreasing, spanning at least two decades.
    pub etas: Vec<f64>,
    #[serde(default = "default_lambda_points")]
    pub lambda_points: usize,
    #[serde(default)]
    pub weights: Option<WeightSpec>,
    #[serde(default)]
    pub potential: Vec<SiteValue>,
}

fn default_lambda_points() -> usize {
    LapOptions::default().lambda_points
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum EvolveMethod {
    Spectral,
    Chebyshev,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    pub window: [f64; 2],
    pub s: f64,
    pub horizons: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RageParams {
    pub window: [f64; 2],
    pub probe: InitialState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct EvolveParams {
    pub r: OrderSpec,
    pub model: ModelSpec,
    #[serde(default = "default_initial")]
    pub initial: InitialState,
    pub times: Vec<f64>,
    #[serde(default)]
    pub method: Option<EvolveMethod>,
    /// Chebyshev order; defaults to t‖H‖ + 40.
    #[serde(default)]
    pub chebyshev_order: Option<usize>,
    #[serde(default)]
    pub potential: Vec<SiteValue>,
    #[serde(default)]
    pub local_decay: Option<DecayParams>,
    #[serde(default)]
    pub rage: Option<RageParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BallisticParams {
    pub r: OrderSpec,
    /// Box half-width.
    #[serde(rename = "L")]
    pub l: usize,
    pub window: [f64; 2],
    pub v: f64,
    pub horizons: Vec<f64>,
    #[serde(default = "default_initial")]
    pub initial: InitialState,
    #[serde(default)]
    pub potential: Vec<SiteValue>,
    #[serde(default)]
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScatterParams {
    pub r: f64,
    pub lambda: EnergyGrid,
    pub potential: Vec<SiteValue>,
    /// Torus sizes for the counting spectral shift; adds ξ and the Birman–Krein residual.
    #[serde(default)]
    pub ssf_sizes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SsfParams {
    pub r: f64,
    pub lambda: EnergyGrid,
    pub potential: Vec<SiteValue>,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub sigma_factor: Option<f64>,
}

pub type BkParams = SsfParams;

/// Scalar results of a run, merged into sweep summaries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub command: String,
    pub values: BTreeMap<String, Option<f64>>,
    pub flags: BTreeMap<String, bool>,
}

impl Summary {
    fn new(c: Command) -> Self {
        Summary { command: c.name().to_string(), ..Default::default() }
    }

    fn value(&mut self, k: &str, v: f64) -> &mut Self {
        self.values.insert(k.to_string(), v.is_finite().then_some(v));
        self
    }

    fn flag(&mut self, k: &str, v: bool) -> &mut Self {
        self.flags.insert(k.to_string(), v);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsOutput {
    pub r: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Versions {
    pub fraclap: String,
    pub format: u32,
}

fn versions() -> Versions {
    Versions { fraclap: env!("CARGO_PKG_VERSION").to_string(), format: FORMAT_VERSION }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub artifacts: Vec<Artifact>,
    pub versions: Versions,
    pub wall_time_s: f64,
}

/// Collects artifacts of one run inside its output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        fs::write(self.dir.join(name), s)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn sha256_file(p: &Path) -> CliResult<(u64, String)> {
    let bytes = fs::read(p)?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

/// Write through a temporary sibling and rename, so readers never see a partial file.
fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_params<T: DeserializeOwned>(v: &Value) -> CliResult<T> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("params: {e}")))
}

fn nonempty<T>(v: &[T], what: &str) -> CliResult<()> {
    if v.is_empty() {
        Err(CliError::Config(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

fn c17(z: Complex64) -> [String; 2] {
    [f17(z.re), f17(z.im)]
}

/// Validate params and execute `config` into `out`; the manifest is written last.
pub fn run(config: &ExperimentConfig, out: &Path) -> CliResult<RunManifest> {
    let start = Instant::now();
    let mut o = Outputs::new(out)?;
    let summary = dispatch(config, &mut o)?;
    o.json("summary.json", &summary)?;
    let mut artifacts = Vec::with_capacity(o.written.len());
    for name in &o.written {
        let (bytes, sha256) = sha256_file(&out.join(name))?;
        artifacts.push(Artifact { path: name.clone(), bytes, sha256 });
    }
    let manifest = RunManifest { config: config.clone(), artifacts, versions: versions(), wall_time_s: start.elapsed().as_secs_f64() };
    let mut s = serde_json::to_string_pretty(&manifest)?;
    s.push('\n');
    write_atomic(&out.join("manifest.json"), s.as_bytes())?;
    Ok(manifest)
}

fn dispatch(config: &ExperimentConfig, o: &mut Outputs) -> CliResult<Summary> {
    let p = &config.params;
    match config.command {
        Command::Symbol => cmd_symbol(parse_params(p)?, o),
        Command::Kernel => cmd_kernel(parse_params(p)?, o),
        Command::Spectrum => cmd_spectrum(parse_params(p)?, o),
        Command::Thresholds => cmd_thresholds(parse_params(p)?, o),
        Command::Mourre => cmd_mourre(parse_params(p)?, o),
        Command::Lap => cmd_lap(parse_params(p)?, o),
        Command::Evolve => cmd_evolve(parse_params(p)?, config.seed, o),
        Command::Ballistic => cmd_ballistic(parse_params(p)?, config.seed, o),
        Command::Scatter => cmd_scatter(parse_params(p)?, o),
        Command::Ssf => cmd_ssf(parse_params(p)?, o),
        Command::Bk => cmd_bk(parse_params(p)?, o),
    }
}

fn cmd_symbol(p: SymbolParams, o: &mut Outputs) -> CliResult<Summary> {
    let order = p.r.order()?;
    let d = order.dim();
    if p.points < 2 || (p.points as f64).powi(d as i32) > 1e6 {
        return Err(CliError::Config("points must be >= 2 with points^d <= 1e6".into()));
    }
    let axis: Vec<f64> =
        (0..p.points).map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / (p.points - 1) as f64).collect();
    let total = p.points.pow(d as u32);
    let thetas = vec![axis; d];
    let grid = symbol_grid(&order, &thetas)?;
    let mut header: Vec<String> = (1..=d).map(|j| format!("theta_{j}_rad")).collect();
    header.push("symbol_energy".into());
    header.extend((1..=d).map(|j| format!("grad_{j}_energy_per_rad")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut finite_max: f64 = 0.0;
    let rows: Vec<Vec<String>> = grid
        .iter()
        .map(|(t, v)| {
            let mut row: Vec<String> = t.iter().map(|&x| f17(x)).collect();
            let val = v.value.finite().unwrap_or(f64::INFINITY);
            if val.is_finite() {
                finite_max = finite_max.max(val);
            }
            row.push(f17(val));
            match &v.gradient {
                Some(g) => row.extend(g.iter().map(|&x| f17(x))),
                None => row.extend((0..d).map(|_| "nan".to_string())),
            }
            row
        })
        .collect();
    o.csv("symbol.csv", &header, rows)?;
    let spec = spectrum_interval(&order);
    let mut s = Summary::new(Command::Symbol);
    s.value("points", total as f64)
        .value("sampled_max_energy", finite_max)
        .value("spectrum_lo_energy", spec.total.lo)
        .value("spectrum_hi_energy", spec.total.hi.unwrap_or(f64::INFINITY));
    Ok(s)
}

fn cmd_kernel(p: KernelParams, o: &mut Outputs) -> CliResult<Summary> {
    if p.k > 1_000_000 {
        return Err(CliError::Config("K must be at most 1e6".into()));
    }
    let t = kernel_table(p.r, p.k, &QuadSpec::default())?;
    let rows = (0..=t.k_max).map(|k| vec![k.to_string(), f17(t.values[k]), f17(t.quad_error[k])]);
    o.csv("kernel.csv", &["k_sites", "a_r_dimensionless", "quad_error_abs"], rows)?;
    let mut s = Summary::new(Command::Kernel);
    s.value("r", p.r)
        .value("K", p.k as f64)
        .value("a0", t.values[0])
        .value("max_quad_error", t.quad_error.iter().copied().fold(0.0, f64::max))
        .flag("integer_order", t.is_integer_order());
    Ok(s)
}

fn cmd_spectrum(p: SpectrumParams, o: &mut Outputs) -> CliResult<Summary> {
    let order = p.r.order()?;
    let w = potential(&p.potential, order.dim())?;
    let model = ModelSpec::Torus { n: p.n, grid: p.grid }.build(&order, &w)?;
    let LatticeModel::Torus(t) = &model else { unreachable!() };
    let eig = if w.is_zero() {
        t.eigenvalues()?
    } else {
        eig_all(&model, &EigOptions { cap: DEFAULT_DENSE_CAP, vectors: false })?.values
    };
    o.csv(
        "eigenvalues.csv",
        &["index", "eigenvalue_energy"],
        eig.iter().enumerate().map(|(i, &e)| vec![i.to_string(), f17(e)]),
    )?;
    let spec = spectrum_interval(&order);
    let hi = spec.total.hi.unwrap_or(f64::INFINITY);
    // largest distance from a point of the interval to the sampled eigenvalues (finite part only)
    let mut gap: f64 = 0.0;
    if let (Some(&first), Some(&last)) = (eig.first(), eig.last()) {
        gap = (first - spec.total.lo).max(0.0);
        for w2 in eig.windows(2) {
            gap = gap.max(0.5 * (w2[1] - w2[0]));
        }
        if hi.is_finite() {
            gap = gap.max(hi - last);
        }
    }
    let mut s = Summary::new(Command::Spectrum);
    s.value("count", eig.len() as f64)
        .value("min_energy", eig.first().copied().unwrap_or(f64::NAN))
        .value("max_energy", eig.last().copied().unwrap_or(f64::NAN))
        .value("interval_lo_energy", spec.total.lo)
        .value("interval_hi_energy", hi)
        .value("hausdorff_gap_energy", gap);
    Ok(s)
}

fn cmd_thresholds(p: ThresholdsParams, o: &mut Outputs) -> CliResult<Summary> {
    let order = p.r.order()?;
    let t = threshold_set(&order);
    o.json("thresholds.json", &ThresholdsOutput { r: order.components().to_vec(), values: t.values.clone() })?;
    let mut s = Summary::new(Command::Thresholds);
    s.value("count", t.values.len() as f64);
    Ok(s)
}

fn cmd_mourre(p: MourreParams, o: &mut Outputs) -> CliResult<Summary> {
    let order = p.r.order()?;
    let win = window(p.window)?;
    let w = potential(&p.potential, order.dim())?;
    let LatticeModel::Box(h0) = (ModelSpec::Box { l: p.l }).build(&order, &Potential::zero(order.dim()))? else {
        unreachable!()
    };
    let h = if w.is_zero() { h0.clone() } else { h0.with_potential(&w)? };
    let m = mourre_constant(&h, &win, p.bulk_threshold)?;
    let mut s = Summary::new(Command::Mourre);
    s.value("L", p.l as f64)
        .value("c_observed", m.c_observed)
        .value("c_predicted", m.c_predicted.unwrap_or(f64::NAN))
        .value("spectral_dim", m.spectral_dim as f64)
        .value("kept", m.kept as f64)
        .value("defect_rank", m.defect_rank as f64);
    o.csv(
        "mourre_spectrum.csv",
        &["index", "compressed_eigenvalue_energy"],
        m.compressed_spectrum.iter().enumerate().map(|(i, &x)| vec![i.to_string(), f17(x)]),
    )?;
    let mut reports = serde_json::Map::new();
    reports.insert("mourre".into(), serde_json::to_value(&m)?);
    if p.commutators {
        let opts = CommutatorOptions { bulk_threshold: p.bulk_threshold, ..CommutatorOptions::default() };
        let first = first_commutator_residual(&h0, &win, &opts)?;
        let second = second_commutator_residual(&h0, &win, &opts)?;
        s.value("first_residual", first.identity_residual)
            .value("second_residual", second.identity_residual)
            .flag("edge_contaminated", first.edge_contaminated || second.edge_contaminated);
        reports.insert("first_commutator".into(), serde_json::to_value(&first)?);
        reports.insert("second_commutator".into(), serde_json::to_value(&second)?);
    }
    o.json("mourre.json", &reports)?;
    Ok(s)
}

fn cmd_lap(p: LapParams, o: &mut Outputs) -> CliResult<Summary> {
    let order = p.r.order()?;
    let win = window(p.window)?;
    let w = potential(&p.potential, order.dim())?;
    if p.lambda_points < 2 {
        return Err(CliError::Config("lambda_points must be >= 2".into()));
    }
    let model = p.model.build(&order, &w)?;
    let weights = match p.weights.unwrap_or(WeightSpec::Position) {
        WeightSpec::Position => LapWeights::Position,
        WeightSpec::Conjugate => LapWeights::Conjugate,
    };
    let opts = LapOptions { weights, lambda_points: p.lambda_points, ..LapOptions::default() };
    let scan = lap_scan(&model, &win, p.s, &p.etas, &opts).map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::Config(m),
        e => CliError::Compute(e),
    })?;
    o.csv(
        "lap.csv",
        &["eta_energy", "sup_norm_inverse_energy", "argmax_energy"],
        scan.etas.iter().zip(&scan.sup_norm).zip(&scan.argmax).map(|((e, n), a)| vec![f17(*e), f17(*n), f17(*a)]),
    )?;
    let mut s = Summary::new(Command::Lap);
    s.value("s", p.s)
        .value("last_change", scan.last_change)
        .value("sup_last", *scan.sup_norm.last().unwrap_or(&f64::NAN))
        .value("threshold_margin", scan.threshold_margin)
        .flag("flagged", scan.flagged);
    o.json("lap.json", &scan)?;
    Ok(s)
}

fn second_moment(model: &LatticeModel, v: &[Complex64]) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, x)| x.norm_sqr() * model.coords(i).iter().map(|&c| (c * c) as f64).sum::<f64>())
        .sum()
}

fn cmd_evolve(p: EvolveParams, seed: u64, o: &mut Outputs) -> CliResult<Summary> {
    let order = p.r.order()?;
    let w = potential(&p.potential, order.dim())?;
    nonempty(&p.times, "times")?;
    if p.times.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Config("times must be finite".into()));
    }
    let model = p.model.build(&order, &w)?;
    let f = p.initial.build(&model, seed)?;
    let method = p.method.unwrap_or(EvolveMethod::Spectral);
    let prop = Propagator::new(&model, DEFAULT_DENSE_CAP)?;
    let states: Vec<Vec<Complex64>> = match (method, &model) {
        (EvolveMethod::Spectral, _) => p.times.par_iter().map(|&t| prop.evolve(&f, t)).collect::<Result<_, _>>()?,
        (EvolveMethod::Chebyshev, LatticeModel::Box(b)) => p
            .times
            .par_iter()
            .map(|&t| {
                let m = p.chebyshev_order.unwrap_or((t.abs() * prop.norm_bound()).ceil() as usize + 40);
                chebyshev_evolve(b, &f, t, m).map(|s| s.values)
            })
            .collect::<Result<_, _>>()?,
        (EvolveMethod::Chebyshev, LatticeModel::Torus(_)) => {
            return Err(CliError::Config("the chebyshev method needs a box model".into()))
        }
    };
    let rows: Vec<Vec<String>> = p
        .times
        .iter()
        .zip(&states)
        .map(|(&t, v)| vec![f17(t), f17(crate::linalg::norm(v)), f17(second_moment(&model, v))])
        .collect();
    o.csv("evolve.csv", &["t_time", "norm_dimensionless", "second_moment_sites2"], rows)?;
    let last = states.last().unwrap();
    let d = order.dim();
    let mut header: Vec<String> = (1..=d).map(|j| format!("n_{j}_sites")).collect();
    header.extend(["re_amplitude".to_string(), "im_amplitude".to_string()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    o.csv(
        "state_final.csv",
        &header,
        last.iter().enumerate().map(|(i, x)| {
            let mut row: Vec<String> = model.coords(i).iter().map(|c| c.to_string()).collect();
            row.extend(c17(*x));
            row
        }),
    )?;
    let max_norm_dev = states.iter().map(|v| (crate::linalg::norm(v) - 1.0).abs()).fold(0.0, f64::max);
    let mut s = Summary::new(Command::Evolve);
    s.value("max_norm_deviation", max_norm_dev).value("final_second_moment", second_moment(&model, last));
    if let Some(dp) = &p.local_decay {
        let win = window(dp.window)?;
        nonempty(&dp.horizons, "local_decay.horizons")?;
        let reports = dp
            .horizons
            .iter()
            .map(|&h| local_decay_integral(&model, &f, &win, dp.s, h, &DecayOptions::default()))
            .collect::<Result<Vec<_>, _>>()?;
        o.csv(
            "local_decay.csv",
            &["horizon_time", "integral_time", "tail_slope_dimensionless"],
            reports.iter().map(|r| vec![f17(r.horizon), f17(r.value), f17(r.tail_slope)]),
        )?;
        let first = reports.first().unwrap().value;
        let last = reports.last().unwrap().value;
        s.value("decay_integral_last", last).value("decay_growth", if first > 0.0 { last / first } else { f64::NAN });
    }
    if let Some(rp) = &p.rage {
        let win = window(rp.window)?;
        let g = rp.probe.build(&model, seed)?;
        let rep = rage_overlap(&model, &g, &f, &win, &p.times)?;
        o.csv(
            "rage.csv",
            &["t_time", "overlap_abs"],
            rep.times.iter().zip(&rep.overlaps).map(|(t, x)| vec![f17(*t), f17(*x)]),
        )?;
        s.value("rage_exponent", rep.envelope_exponent).flag("rage_flagged", rep.flagged);
    }
    Ok(s)
}

fn cmd_ballistic(p: BallisticParams, seed: u64, o: &mut Outputs) -> CliResult<Summary> {
    let order = p.r.order()?;
    let win = window(p.window)?;
    let w = potential(&p.potential, order.dim())?;
    let model = (ModelSpec::Box { l: p.l }).build(&order, &w)?;
    let LatticeModel::Box(b) = &model else { unreachable!() };
    let f = p.initial.build(&model, seed)?;
    let rep = ballistic_average(b, &f, &win, p.v, &p.horizons, p.dt).map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::Config(m),
        e => CliError::Compute(e),
    })?;
    o.csv(
        "ballistic.csv",
        &["horizon_time", "average_mass_dimensionless", "envelope_dimensionless"],
        rep.horizons
            .iter()
            .zip(&rep.averages)
            .map(|(&t, &a)| vec![f17(t), f17(a), f17(rep.envelope_c / (1.0 + t).ln())]),
    )?;
    let mut s = Summary::new(Command::Ballistic);
    s.value("envelope_c", rep.envelope_c)
        .value("final_average", *rep.averages.last().unwrap())
        .flag("non_increasing", rep.non_increasing)
        .flag("final_below_envelope", rep.final_below_envelope);
    Ok(s)
}

fn scalar_potential(entries: &[SiteValue]) -> CliResult<Potential> {
    potential(entries, 1)
}

fn cmd_scatter(p: ScatterParams, o: &mut Outputs) -> CliResult<Summary> {
    let lambdas = p.lambda.values()?;
    let w = scalar_potential(&p.potential)?;
    check(FractionalOrder::scalar(p.r))?;
    let opts = ScatterOptions::default();
    let mut sweep = scatter_sweep(p.r, &lambdas, &w, &opts)?;
    if let Some(ns) = &p.ssf_sizes {
        nonempty(ns, "ssf_sizes")?;
        let ls: Vec<f64> = sweep.records.iter().map(|r| r.lambda).collect();
        let bk = birman_krein(p.r, &ls, &w, ns, &opts, &SsfOptions::default())?;
        for (rec, b) in sweep.records.iter_mut().zip(bk) {
            rec.ssf = b.points.last().map(|q| q.xi);
            rec.bk_residual = Some(b.residual);
        }
    }
    let header = [
        "lambda_energy",
        "s_pp_re",
        "s_pp_im",
        "s_pm_re",
        "s_pm_im",
        "s_mp_re",
        "s_mp_im",
        "s_mm_re",
        "s_mm_im",
        "unitarity_residual",
        "optical_residual",
        "route_difference",
        "reciprocity_residual",
        "arg_det_s_rad",
        "xi_dimensionless",
        "bk_residual",
    ];
    let opt = |x: Option<f64>| x.map(f17).unwrap_or_else(|| "nan".into());
    let rows = sweep.records.iter().map(|r| {
        let mut row = vec![f17(r.lambda)];
        for a in 0..2 {
            for b in 0..2 {
                row.extend(c17(r.s[a][b]));
            }
        }
        row.extend([
            f17(r.unitarity_residual),
            f17(r.optical_residual),
            f17(r.route_difference),
            f17(r.reciprocity_residual),
            f17(r.det_s.arg()),
            opt(r.ssf),
            opt(r.bk_residual),
        ]);
        row
    });
    o.csv("scatter.csv", &header, rows)?;
    let max = |f: &dyn Fn(&crate::scattering::ScatteringRecord) -> f64| sweep.records.iter().map(f).fold(0.0, f64::max);
    let mut s = Summary::new(Command::Scatter);
    s.value("records", sweep.records.len() as f64)
        .value("skipped", sweep.skipped.len() as f64)
        .value("max_unitarity_residual", max(&|r| r.unitarity_residual))
        .value("max_optical_residual", max(&|r| r.optical_residual))
        .value("max_route_difference", max(&|r| r.route_difference))
        .value("max_reciprocity_residual", max(&|r| r.reciprocity_residual))
        .value("max_phase_jump", sweep.max_phase_jump);
    if p.ssf_sizes.is_some() {
        s.value("max_bk_residual", max(&|r| r.bk_residual.unwrap_or(0.0)));
    }
    if sweep.records.len() == 1 {
        s.value("arg_det_s", sweep.records[0].det_s.arg());
    }
    Ok(s)
}

fn ssf_setup(p: &SsfParams) -> CliResult<(Vec<f64>, Potential, SsfOptions)> {
    let lambdas = p.lambda.values()?;
    let w = scalar_potential(&p.potential)?;
    check(FractionalOrder::scalar(p.r))?;
    nonempty(&p.sizes, "sizes")?;
    if p.sizes.windows(2).any(|s| s[1] <= s[0]) {
        return Err(CliError::Config("sizes must be increasing".into()));
    }
    let mut opts = SsfOptions::default();
    if let Some(sf) = p.sigma_factor {
        opts.sigma_factor = sf;
    }
    Ok((lambdas, w, opts))
}

fn cmd_ssf(p: SsfParams, o: &mut Outputs) -> CliResult<Summary> {
    let (lambdas, w, opts) = ssf_setup(&p)?;
    let reps = ssf_counting_grid(p.r, &lambdas, &w, &p.sizes, &opts)?;
    let rows = reps.iter().flat_map(|r| {
        r.points.iter().map(move |q| {
            vec![f17(r.lambda), q.n.to_string(), q.raw.to_string(), f17(q.smoothed), f17(q.sigma)]
        })
    });
    o.csv("ssf.csv", &["lambda_energy", "n_sites", "xi_raw_count", "xi_smoothed_dimensionless", "sigma_energy"], rows)?;
    let mut s = Summary::new(Command::Ssf);
    s.flag("stabilized", reps.iter().all(|r| r.stabilized_raw.is_some()));
    if reps.len() == 1 {
        s.value("xi_smoothed", reps[0].smoothed).value("xi_raw", reps[0].stabilized_raw.map_or(f64::NAN, |x| x as f64));
    }
    Ok(s)
}

fn cmd_bk(p: BkParams, o: &mut Outputs) -> CliResult<Summary> {
    let (lambdas, w, opts) = ssf_setup(&p)?;
    let reps = birman_krein(p.r, &lambdas, &w, &p.sizes, &ScatterOptions::default(), &opts)?;
    let rows = reps.iter().flat_map(|r| {
        r.points.iter().map(move |q| {
            let [re, im] = c17(r.det_s);
            vec![f17(r.lambda), q.n.to_string(), re, im, f17(q.xi), f17(q.phase_distance)]
        })
    });
    o.csv(
        "bk.csv",
        &["lambda_energy", "n_sites", "det_s_re", "det_s_im", "xi_dimensionless", "phase_distance"],
        rows,
    )?;
    let mut s = Summary::new(Command::Bk);
    s.value("max_residual", reps.iter().map(|r| r.residual).fold(0.0, f64::max))
        .flag("decreasing", reps.iter().all(|r| r.decreasing));
    Ok(s)
}

/// A template config with one parameter swept over a list of values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub template: ExperimentConfig,
    /// Key in `template.params` that is replaced per entry.
    pub param: String,
    pub values: SweepValues,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum SweepValues {
    List(Vec<Value>),
    Range(RangeSpec),
}

impl SweepValues {
    fn values(&self) -> CliResult<Vec<Value>> {
        match self {
            SweepValues::List(v) => Ok(v.clone()),
            SweepValues::Range(r) => Ok(EnergyGrid::Range(r.clone()).values()?.into_iter().map(Value::from).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub index: usize,
    pub dir: String,
    pub value: Value,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    pub sweep: SweepConfig,
    pub entries: Vec<SweepEntry>,
    pub summary: Artifact,
    pub versions: Versions,
    pub wall_time_s: f64,
}

fn value_cell(v: &Value) -> String {
    match v {
        Value::Number(n) => n.as_f64().map(f17).unwrap_or_else(|| n.to_string()),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Run every entry of a sweep (isolated per subdirectory) and merge the summaries.
pub fn sweep(cfg: &SweepConfig, out: &Path) -> CliResult<SweepManifest> {
    let start = Instant::now();
    let values = cfg.values.values()?;
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    if !cfg.template.params.is_object() {
        return Err(CliError::Config("template params must be an object".into()));
    }
    fs::create_dir_all(out)?;
    let width = values.len().to_string().len().max(3);
    let results: Vec<(SweepEntry, Option<Summary>)> = values
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let dir = format!("entry_{i:0width$}");
            let mut c = cfg.template.clone();
            c.params.as_object_mut().unwrap().insert(cfg.param.clone(), v.clone());
            c.output = None;
            let path = out.join(&dir);
            let res = std::panic::catch_unwind(|| run(&c, &path))
                .unwrap_or_else(|_| Err(CliError::Io(std::io::Error::other("worker panicked"))));
            match res {
                Ok(_) => {
                    let summary = fs::read(path.join("summary.json"))
                        .ok()
                        .and_then(|b| serde_json::from_slice::<Summary>(&b).ok());
                    let sha = sha256_file(&path.join("manifest.json")).ok().map(|x| x.1);
                    (SweepEntry { index: i, dir, value: v.clone(), exit_code: 0, error: None, manifest_sha256: sha }, summary)
                }
                Err(e) => (
                    SweepEntry { index: i, dir, value: v.clone(), exit_code: e.exit_code(), error: Some(e.to_string()), manifest_sha256: None },
                    None,
                ),
            }
        })
        .collect();
    let mut value_keys = std::collections::BTreeSet::new();
    let mut flag_keys = std::collections::BTreeSet::new();
    for (_, s) in &results {
        if let Some(s) = s {
            value_keys.extend(s.values.keys().cloned());
            flag_keys.extend(s.flags.keys().cloned());
        }
    }
    let mut header = vec!["entry".to_string(), cfg.param.clone(), "exit_code".to_string()];
    header.extend(value_keys.iter().cloned());
    header.extend(flag_keys.iter().cloned());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = results.iter().map(|(e, s)| {
        let mut row = vec![e.dir.clone(), value_cell(&e.value), e.exit_code.to_string()];
        for k in &value_keys {
            row.push(s.as_ref().and_then(|s| s.values.get(k).copied().flatten()).map(f17).unwrap_or_else(|| "nan".into()));
        }
        for k in &flag_keys {
            row.push(s.as_ref().and_then(|s| s.flags.get(k)).map(|b| b.to_string()).unwrap_or_default());
        }
        row
    });
    let mut o = Outputs::new(out)?;
    o.csv("summary.csv", &header, rows)?;
    let (bytes, sha256) = sha256_file(&out.join("summary.csv"))?;
    let manifest = SweepManifest {
        sweep: cfg.clone(),
        entries: results.into_iter().map(|x| x.0).collect(),
        summary: Artifact { path: "summary.csv".into(), bytes, sha256 },
        versions: versions(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut s = serde_json::to_string_pretty(&manifest)?;
    s.push('\n');
    write_atomic(&out.join("manifest.json"), s.as_bytes())?;
    Ok(manifest)
}

/// Names accepted by [`schema`].
pub fn schema_names() -> Vec<&'static str> {
    let mut v = vec!["config", "sweep", "summary", "thresholds_output", "manifest", "sweep_manifest"];
    v.extend(Command::ALL.iter().map(|c| c.name()));
    v
}

/// JSON schema for a config, a command's params table or an output document.
pub fn schema(name: &str) -> Option<Value> {
    let s = match name {
        "config" => schema_for!(ExperimentConfig),
        "sweep" => schema_for!(SweepConfig),
        "summary" => schema_for!(Summary),
        "thresholds_output" => schema_for!(ThresholdsOutput),
        "manifest" => schema_for!(RunManifest),
        "sweep_manifest" => schema_for!(SweepManifest),
        "symbol" => schema_for!(SymbolParams),
        "kernel" => schema_for!(KernelParams),
        "spectrum" => schema_for!(SpectrumParams),
        "thresholds" => schema_for!(ThresholdsParams),
        "mourre" => schema_for!(MourreParams),
        "lap" => schema_for!(LapParams),
        "evolve" => schema_for!(EvolveParams),
        "ballistic" => schema_for!(BallisticParams),
        "scatter" => schema_for!(ScatterParams),
        "ssf" => schema_for!(SsfParams),
        "bk" => schema_for!(BkParams),
        _ => return None,
    };
    serde_json::to_value(s).ok()
}

/// Read a config document from a path, or from an inline JSON string.
pub fn load_json<T: DeserializeOwned>(src: &str) -> CliResult<T> {
    let text = if src.trim_start().starts_with('{') { src.to_string() } else { fs::read_to_string(src)? };
    serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: Value) -> ExperimentConfig {
        serde_json::from_value(v).unwrap()
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_value::<ExperimentConfig>(serde_json::json!({"command": "kernel", "bogus": 1})).is_err());
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(serde_json::json!({"command": "kernel", "params": {"r": 0.5, "K": 5, "extra": 1}}));
        assert_eq!(run(&c, dir.path()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn energy_grid_range_is_inclusive() {
        let g = EnergyGrid::Range(RangeSpec { lo: 1.0, hi: 3.0, step: 0.05 });
        let v = g.values().unwrap();
        assert_eq!(v.len(), 41);
        assert!((v[40] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn every_schema_is_available() {
        for n in schema_names() {
            assert!(schema(n).is_some(), "{n}");
        }
        assert!(schema("nope").is_none());
    }

    #[test]
    fn random_initial_state_is_seeded() {
        let m = LatticeModel::Torus(TorusModel::new(FractionalOrder::scalar(1.0).unwrap(), 32, FrequencyGrid::Plain).unwrap());
        let s = InitialState::Random { radius: 3 };
        assert_eq!(s.build(&m, 7).unwrap(), s.build(&m, 7).unwrap());
        assert_ne!(s.build(&m, 7).unwrap(), s.build(&m, 8).unwrap());
    }
}
