//! Experiment orchestration: config ingestion, replication fan-out, CSV and
//! JSON reports, and the verdict on fitted slopes.
//!
//! Replication `rep` at the `i`-th path length draws from stream
//! `(master_seed, (i << 32) | rep)`, so every row can be regenerated in
//! isolation and results never depend on the thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{
    corollary_rate, gamma12_proxy, min_integral, min_integral_rate, rational_from_f64,
    theoretical_rate, CorollaryExample, IntensityMeasure, RateClass, Rational,
};
use crate::error::{Error, Result};
use crate::kernels::{arima_coefficients, rho_k_estimate, KernelSpec};
use crate::rng::{LevyModel, RngStream};
use crate::simulate::{
    default_horizon, lattice_scale, ou_stationary_scale, tail_truncation, ConvolutionMethod,
    PathSource, ProcessModel, SimGrid, Simulator, DEFAULT_TAIL_TOL, DEFAULT_WORK_BUDGET,
};
use crate::stats::{
    distances_to_gaussian, estimate_variance, fit_rate, Metric, RateFit, Shape, TestFunction,
};

pub const CSV_HEADER: [&str; 8] = [
    "experiment",
    "n",
    "metric",
    "value",
    "stderr",
    "R",
    "seed",
    "flag",
];

/// Stream indices at or above this offset are reserved for plug-in variance runs.
const VARIANCE_STREAM_OFFSET: u64 = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RateMc,
    BoundQuadrature,
    RhoDecay,
    VarianceCheck,
}

/// Model shorthand: the four worked examples, an explicit pair, or the
/// i.i.d. Gaussian debug model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "example", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Ou {
        lambda: f64,
        beta: f64,
        #[serde(default = "one")]
        sigma: f64,
        /// Exact autoregressive recursion instead of the lattice scheme.
        #[serde(default = "yes")]
        exact: bool,
    },
    Lfsn {
        h: f64,
        beta: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    Fln {
        rho: f64,
        zeta: f64,
        tempering: f64,
        #[serde(default = "default_truncation_eps")]
        truncation_eps: f64,
        /// The ε of the rate `n^{-ρ+ε}`.
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Farima {
        d: f64,
        beta: f64,
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default)]
        phi: Vec<f64>,
        #[serde(default)]
        theta: Vec<f64>,
    },
    Custom {
        levy: LevyModel,
        kernel: KernelSpec,
    },
    IidGaussian,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_truncation_eps() -> f64 {
    1e-3
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_f() -> TestFunction {
    TestFunction {
        shape: Shape::Cos { theta: 1.0 },
        mean_mode: Default::default(),
    }
}

fn default_replications() -> usize {
    1000
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    #[serde(default)]
    pub m: Option<u32>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub method: Option<ConvolutionMethod>,
    #[serde(default)]
    pub work_budget: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative tolerance of ρ_k and other kernel integrals.
    pub quad_rel: f64,
    pub min_integral: f64,
    /// Half-width of the slope band.
    pub band: f64,
    /// Band when a log factor or `p = β` is present.
    pub band_log: f64,
    /// Lags in the plug-in long-run variance.
    pub j_max: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quad_rel: 1e-8,
            min_integral: 1e-4,
            band: 0.15,
            band_log: 0.25,
            j_max: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `V_n / v̂_n` with `v̂_n²` the Monte Carlo second moment of `V_n`.
    #[default]
    DirectMc,
    /// `V_n / v̂` with `v̂²` the truncated autocovariance sum.
    PlugIn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSpec {
    pub p: f64,
    pub q: f64,
    pub c_kappa: f64,
    /// Index of the intensity measure; defaults to the noise index.
    pub beta: Option<f64>,
}

impl Default for BoundSpec {
    fn default() -> Self {
        BoundSpec {
            p: 2.0,
            q: 3.0,
            c_kappa: 1.0,
            beta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    #[serde(default = "default_f")]
    pub f: TestFunction,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub bound: BoundSpec,
    /// Lags for the ρ_k experiment; the n-grid is used when empty.
    #[serde(default)]
    pub lags: Vec<u64>,
    #[serde(default)]
    pub output: Option<String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn rat(x: f64, what: &str) -> Result<Rational> {
    rational_from_f64(x).map_err(|_| config_err(format!("{what} = {x} has no small rational form")))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(config_err("n_grid is empty"));
        }
        if self.n_grid[0] == 0 {
            return Err(config_err("path lengths must be >= 1"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("n_grid must be strictly increasing"));
        }
        if self.kind == ExperimentKind::RateMc && self.replications < 100 {
            return Err(config_err(format!(
                "rate-mc needs R >= 100, got {}",
                self.replications
            )));
        }
        if matches!(self.kind, ExperimentKind::VarianceCheck) && self.replications < 2 {
            return Err(config_err("variance-check needs R >= 2"));
        }
        if self.replications as u64 >= VARIANCE_STREAM_OFFSET {
            return Err(config_err("too many replications"));
        }
        if self.n_grid.len() as u64 >= 1 << 31 {
            return Err(config_err("n_grid too long"));
        }
        self.f
            .validate()
            .map_err(|e| config_err(format!("test function: {e}")))?;
        let t = &self.tolerances;
        if !(t.quad_rel > 0.0 && t.min_integral > 0.0 && t.band > 0.0 && t.band_log > 0.0) {
            return Err(config_err("tolerances and bands must be > 0"));
        }
        if t.j_max == 0 {
            return Err(config_err("j_max must be >= 1"));
        }
        if let Some(m) = self.grid.m {
            if m == 0 {
                return Err(config_err("grid.m must be >= 1"));
            }
        }
        if self.kind == ExperimentKind::BoundQuadrature {
            let b = &self.bound;
            if !((0.0..=2.0).contains(&b.p) && b.q > 2.0 && b.c_kappa > 0.0) {
                return Err(config_err(format!(
                    "bound needs p in [0,2], q > 2, C_κ > 0; got {b:?}"
                )));
            }
            if matches!(self.model, ModelSpec::IidGaussian) {
                return Err(config_err("the bound experiment needs a kernel"));
            }
        }
        self.model.validate()
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

impl ModelSpec {
    /// Checks the parameter domain of the model's rate formula.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| config_err(e.to_string());
        match self {
            ModelSpec::Ou {
                lambda,
                beta,
                sigma,
                ..
            } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(config_err(format!("OU needs λ > 0, got {lambda}")));
                }
                LevyModel::symmetric_stable(*beta, *sigma).map_err(wrap)?;
            }
            ModelSpec::Lfsn { h, beta, sigma } => {
                corollary_rate(CorollaryExample::Lfsn {
                    h: rat(*h, "H")?,
                    beta: rat(*beta, "β")?,
                })
                .map_err(wrap)?;
                LevyModel::symmetric_stable(*beta, *sigma).map_err(wrap)?;
            }
            ModelSpec::Fln {
                rho,
                zeta,
                tempering,
                truncation_eps,
                epsilon,
            } => {
                corollary_rate(CorollaryExample::Fln {
                    rho: rat(*rho, "ρ")?,
                    epsilon: rat(*epsilon, "ε")?,
                })
                .map_err(wrap)?;
                if *zeta > 0.0 && *rho >= 1.0 / zeta {
                    return Err(config_err(format!(
                        "FLN needs ρ < 1/ζ, got ρ = {rho}, ζ = {zeta}"
                    )));
                }
                LevyModel::tempered_stable(*zeta, *tempering, *truncation_eps).map_err(wrap)?;
            }
            ModelSpec::Farima {
                d,
                beta,
                sigma,
                phi,
                theta,
            } => {
                corollary_rate(CorollaryExample::Arima {
                    d: rat(*d, "d")?,
                    beta: rat(*beta, "β")?,
                })
                .map_err(wrap)?;
                LevyModel::symmetric_stable(*beta, *sigma).map_err(wrap)?;
                arima_coefficients(phi, theta, *d, 1).map_err(wrap)?;
            }
            ModelSpec::Custom { levy, kernel } => {
                ProcessModel::new(levy.clone(), kernel.clone()).map_err(wrap)?;
            }
            ModelSpec::IidGaussian => {}
        }
        Ok(())
    }

    /// Exponent of `n` in the Berry–Esseen bound for each metric.
    pub fn theoretical_rates(&self) -> Result<Option<[RateClass; 2]>> {
        let pair = |c: crate::bounds::CorollaryRates| Some([c.kolmogorov, c.wasserstein]);
        Ok(match self {
            ModelSpec::Ou { .. } | ModelSpec::IidGaussian => {
                pair(corollary_rate(CorollaryExample::Ou)?)
            }
            ModelSpec::Lfsn { h, beta, .. } => pair(corollary_rate(CorollaryExample::Lfsn {
                h: rat(*h, "H")?,
                beta: rat(*beta, "β")?,
            })?),
            ModelSpec::Fln { rho, epsilon, .. } => pair(corollary_rate(CorollaryExample::Fln {
                rho: rat(*rho, "ρ")?,
                epsilon: rat(*epsilon, "ε")?,
            })?),
            ModelSpec::Farima { d, beta, .. } => pair(corollary_rate(CorollaryExample::Arima {
                d: rat(*d, "d")?,
                beta: rat(*beta, "β")?,
            })?),
            ModelSpec::Custom { levy, kernel } => match (levy, kernel) {
                (LevyModel::SymmetricStable { beta, .. }, _) => match kernel.tail_exponent() {
                    Some(alpha) => {
                        let ab = rat(alpha * beta, "αβ")?;
                        Some([
                            theoretical_rate(ab, Metric::Kolmogorov)?,
                            theoretical_rate(ab, Metric::Wasserstein1)?,
                        ])
                    }
                    None => pair(corollary_rate(CorollaryExample::Ou)?),
                },
                _ => None,
            },
        })
    }

    /// `(kernel, noise index)` used by the deterministic bound quantities.
    /// Discrete moving averages are truncated at `len` coefficients.
    pub fn kernel_and_index(&self, len: usize) -> Result<(KernelSpec, f64)> {
        Ok(match self {
            ModelSpec::Ou { lambda, beta, .. } => {
                (KernelSpec::OuExponential { lambda: *lambda }, *beta)
            }
            ModelSpec::Lfsn { h, beta, .. } => {
                (KernelSpec::LfsnIncrement { h: *h, beta: *beta }, *beta)
            }
            ModelSpec::Fln { rho, zeta, .. } => {
                (KernelSpec::FractionalLevyIncrement { rho: *rho }, *zeta)
            }
            ModelSpec::Farima {
                d,
                beta,
                phi,
                theta,
                ..
            } => (
                KernelSpec::DiscreteMa {
                    b: arima_coefficients(phi, theta, *d, len.max(1) - 1)?,
                },
                *beta,
            ),
            ModelSpec::Custom { levy, kernel } => (kernel.clone(), levy.index()),
            ModelSpec::IidGaussian => {
                return Err(config_err("the i.i.d. Gaussian model has no kernel"))
            }
        })
    }

    /// `αβ` as a rational, when the kernel decays polynomially.
    pub fn alpha_beta(&self, index: f64) -> Result<Option<Rational>> {
        Ok(match self {
            ModelSpec::Lfsn { h, beta, .. } => Some(rat(*beta * (1.0 - h) + 1.0, "αβ")?),
            ModelSpec::Farima { d, beta, .. } => Some(rat((1.0 - d) * beta, "αβ")?),
            ModelSpec::Fln { rho, .. } => Some(rat((rho + 1.0) * index, "αβ")?),
            ModelSpec::Custom { kernel, .. } => match kernel.tail_exponent() {
                Some(a) => Some(rat(a * index, "αβ")?),
                None => None,
            },
            ModelSpec::Ou { .. } | ModelSpec::IidGaussian => None,
        })
    }
}

/// One path length, ready to simulate.
pub struct Assembled {
    pub source: PathSource,
    /// The continuous-time model; `None` for the i.i.d. Gaussian debug model.
    pub model: Option<ProcessModel>,
    /// Exact `E f(X_1)` of the simulated law; `None` centres at the grand mean.
    pub mean: Option<f64>,
    pub grid: Option<SimGrid>,
    pub tail_truncation: Option<f64>,
    /// Exact marginal scale of the simulated process, for stable noise.
    pub scale: Option<f64>,
}

fn lattice_model(spec: &ModelSpec, n: usize) -> Result<Option<ProcessModel>> {
    let (levy, kernel) = match spec {
        ModelSpec::Ou {
            lambda,
            beta,
            sigma,
            exact: false,
        } => (
            LevyModel::symmetric_stable(*beta, *sigma)?,
            KernelSpec::OuExponential { lambda: *lambda },
        ),
        ModelSpec::Lfsn { h, beta, sigma } => (
            LevyModel::symmetric_stable(*beta, *sigma)?,
            KernelSpec::LfsnIncrement { h: *h, beta: *beta },
        ),
        ModelSpec::Fln {
            rho,
            zeta,
            tempering,
            truncation_eps,
            ..
        } => (
            LevyModel::tempered_stable(*zeta, *tempering, *truncation_eps)?,
            KernelSpec::FractionalLevyIncrement { rho: *rho },
        ),
        ModelSpec::Farima { beta, sigma, .. } => {
            let (kernel, _) = spec.kernel_and_index(farima_length(spec, n)?)?;
            (LevyModel::symmetric_stable(*beta, *sigma)?, kernel)
        }
        ModelSpec::Custom { levy, kernel } => (levy.clone(), kernel.clone()),
        ModelSpec::Ou { exact: true, .. } | ModelSpec::IidGaussian => return Ok(None),
    };
    Ok(Some(ProcessModel::new(levy, kernel)?))
}

/// Coefficient count for FARIMA: the tail-truncation target, at least `n`.
fn farima_length(spec: &ModelSpec, n: usize) -> Result<usize> {
    let ModelSpec::Farima {
        d,
        beta,
        phi,
        theta,
        ..
    } = spec
    else {
        unreachable!()
    };
    let cap = (1usize << 20).max(n);
    let b = arima_coefficients(phi, theta, *d, cap - 1)?;
    let total: f64 = b.iter().map(|v| v.abs().powf(*beta)).sum();
    let mut tail = total;
    let mut len = b.len();
    for (j, v) in b.iter().enumerate() {
        if tail <= DEFAULT_TAIL_TOL * total {
            len = j;
            break;
        }
        tail -= v.abs().powf(*beta);
    }
    Ok(len.max(n).max(1))
}

impl ExperimentConfig {
    /// Builds the path source for length `n`. Kernels with polynomial tails
    /// get a horizon of at least `n`, so the simulated memory spans the window.
    pub fn assemble(&self, n: usize) -> Result<Assembled> {
        match &self.model {
            ModelSpec::IidGaussian => {
                let mean = self
                    .f
                    .mean_under_stable(2.0, std::f64::consts::FRAC_1_SQRT_2)?;
                return Ok(Assembled {
                    source: PathSource::IidGaussian { n },
                    model: None,
                    mean: Some(mean),
                    grid: None,
                    tail_truncation: None,
                    scale: None,
                });
            }
            ModelSpec::Ou {
                lambda,
                beta,
                sigma,
                exact: true,
            } => {
                let scale = ou_stationary_scale(*lambda, *beta, *sigma);
                let model = ProcessModel::new(
                    LevyModel::symmetric_stable(*beta, *sigma)?,
                    KernelSpec::OuExponential { lambda: *lambda },
                )?;
                return Ok(Assembled {
                    model: Some(model),
                    source: PathSource::OuExact {
                        lambda: *lambda,
                        beta: *beta,
                        sigma_l: *sigma,
                        n,
                    },
                    mean: Some(self.f.mean_under_stable(*beta, scale)?),
                    grid: None,
                    tail_truncation: None,
                    scale: Some(scale),
                });
            }
            _ => {}
        }
        let model = lattice_model(&self.model, n)?.expect("lattice model");
        let m = self.grid.m.unwrap_or(match model.kernel {
            KernelSpec::DiscreteMa { .. } => 1,
            _ => 16,
        });
        let horizon = match self.grid.horizon {
            Some(h) => h,
            None => {
                let base = default_horizon(&model, DEFAULT_TAIL_TOL)?;
                match model.kernel {
                    KernelSpec::DiscreteMa { .. } => base,
                    _ if model.kernel.tail_exponent().is_some() => base.max(n as f64),
                    _ => base,
                }
            }
        };
        let grid = SimGrid {
            m,
            horizon,
            n,
            method: self.grid.method.unwrap_or_default(),
            work_budget: self.grid.work_budget.unwrap_or(DEFAULT_WORK_BUDGET),
        };
        grid.validate()?;
        let tail = tail_truncation(&model, horizon)?;
        let (mean, scale) = match model.levy {
            LevyModel::SymmetricStable { beta, .. } => {
                let s = lattice_scale(&model, &grid)?;
                (Some(self.f.mean_under_stable(beta, s)?), Some(s))
            }
            LevyModel::TemperedStable(_) => (None, None),
        };
        let sim = Simulator::new(&model, &grid)?;
        Ok(Assembled {
            source: PathSource::Lattice(sim),
            model: Some(model),
            mean,
            grid: Some(grid),
            tail_truncation: Some(tail),
            scale,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    WithinBand,
    Inconclusive,
    FloorLimited,
    Violation,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::WithinBand => "within band",
            Verdict::Inconclusive => "inconclusive",
            Verdict::FloorLimited => "floor-limited",
            Verdict::Violation => "violation",
        })
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub n: u64,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    #[serde(rename = "R")]
    pub replications: usize,
    pub seed: u64,
    pub flag: String,
}

pub const FLAG_OK: &str = "ok";
pub const FLAG_FLOOR: &str = "floor_limited";
pub const FLAG_INEXACT: &str = "inexact";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeSummary {
    pub metric: String,
    /// Unweighted fit through every row.
    pub fit_all: Option<RateFit>,
    /// Fit through unflagged rows, weighted by `(value/stderr)²`.
    pub fit_used: Option<RateFit>,
    pub points_used: usize,
    pub theoretical: Option<RateClass>,
    pub band: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalizationInfo {
    pub n: usize,
    pub mean: f64,
    pub mean_source: &'static str,
    pub v_hat_n_sq: f64,
    pub v_hat_sq: Option<f64>,
    pub v_hat_sq_stderr: Option<f64>,
    pub scale: Option<f64>,
    pub tail_truncation: Option<f64>,
    pub grid: Option<SimGrid>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaCheck {
    /// `ρ_0 + 2 Σ_{k≥1} ρ_k` over the computed table.
    pub rho_sum: f64,
    pub bound: f64,
    pub max_n_gamma1_sq: f64,
    pub bounded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub master_seed: u64,
    pub version: &'static str,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub kind: ExperimentKind,
    pub rows: Vec<Row>,
    pub slopes: Vec<SlopeSummary>,
    pub normalization: Vec<NormalizationInfo>,
    pub gamma_check: Option<GammaCheck>,
    pub incomplete: bool,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    /// Worst verdict over all slope summaries.
    pub fn verdict(&self) -> Verdict {
        let rank = |v: &Verdict| match v {
            Verdict::WithinBand => 0,
            Verdict::FloorLimited => 1,
            Verdict::Inconclusive => 2,
            Verdict::Violation => 3,
        };
        self.slopes
            .iter()
            .map(|s| s.verdict)
            .max_by_key(rank)
            .unwrap_or(Verdict::Inconclusive)
    }

    pub fn slope(&self, metric: &str) -> Option<&SlopeSummary> {
        self.slopes.iter().find(|s| s.metric == metric)
    }

    pub fn rows_for<'a>(&'a self, metric: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.rows)
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        // f64 Display is the shortest decimal that round-trips.
        w.write_record([
            r.experiment.clone(),
            r.n.to_string(),
            r.metric.clone(),
            r.value.to_string(),
            r.stderr.to_string(),
            r.replications.to_string(),
            r.seed.to_string(),
            r.flag.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Input(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Fits both slopes for one metric and grades the used fit against the
/// theoretical exponent.
pub fn summarize_slope(
    metric: &str,
    rows: &[&Row],
    theoretical: Option<RateClass>,
    band: f64,
) -> SlopeSummary {
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let vs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let fit_all = fit_rate(&ns, &vs, None).ok();
    let used: Vec<&&Row> = rows.iter().filter(|r| r.flag == FLAG_OK).collect();
    let weights: Vec<f64> = used
        .iter()
        .map(|r| {
            if r.stderr > 0.0 {
                (r.value / r.stderr).powi(2)
            } else {
                1.0
            }
        })
        .collect();
    let fit_used = fit_rate(
        &used.iter().map(|r| r.n as f64).collect::<Vec<_>>(),
        &used.iter().map(|r| r.value).collect::<Vec<_>>(),
        Some(&weights),
    )
    .ok();
    let verdict =
        if !rows.is_empty() && used.is_empty() && rows.iter().all(|r| r.flag == FLAG_FLOOR) {
            Verdict::FloorLimited
        } else {
            match (fit_used, theoretical) {
                (Some(fit), Some(th)) => {
                    let e = th.exponent_f64();
                    if (fit.slope - e).abs() <= band {
                        Verdict::WithinBand
                    } else if fit.slope > e + band + 2.0 * fit.stderr {
                        Verdict::Violation
                    } else {
                        Verdict::Inconclusive
                    }
                }
                _ => Verdict::Inconclusive,
            }
        };
    SlopeSummary {
        metric: metric.to_owned(),
        fit_all,
        fit_used,
        points_used: used.len(),
        theoretical,
        band,
        verdict,
    }
}

fn band_for(t: &Tolerances, rate: Option<RateClass>, extra_log: bool) -> f64 {
    if extra_log || rate.is_some_and(|r| r.log_power > 0) {
        t.band_log
    } else {
        t.band
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream index of replication `rep` at grid position `i`.
pub fn stream_index(i: usize, rep: usize) -> u64 {
    ((i as u64) << 32) | rep as u64
}

/// Seed of the bootstrap streams at grid position `i`.
pub fn bootstrap_seed(master_seed: u64, i: usize) -> u64 {
    splitmix(master_seed ^ splitmix(i as u64 + 1))
}

fn provenance(cfg: &ExperimentConfig, start: Instant) -> Provenance {
    Provenance {
        config_sha256: cfg.hash(),
        master_seed: cfg.master_seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match cfg.kind {
        ExperimentKind::RateMc => run_rate_experiment(cfg),
        ExperimentKind::BoundQuadrature => run_bound_experiment(cfg),
        ExperimentKind::RhoDecay => run_rho_experiment(cfg),
        ExperimentKind::VarianceCheck => run_variance_check(cfg),
    }
}

/// Monte Carlo distances of `V_n / v̂` to N(0,1) across the n-grid.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let theory = cfg.model.theoretical_rates()?;
    let r = cfg.replications;
    let floor = 3.0 / (r as f64).sqrt();
    let mut rows = Vec::new();
    let mut norms = Vec::new();
    let mut notes = Vec::new();
    let mut incomplete = false;
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let asm = match cfg.assemble(n) {
            Ok(a) => a,
            Err(Error::Resource(msg)) => {
                incomplete = true;
                notes.push(format!("stopped before n = {n}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let m0 = asm.mean.unwrap_or(0.0);
        let sqrt_n = (n as f64).sqrt();
        let raw: Vec<f64> = (0..r)
            .into_par_iter()
            .map(|rep| {
                let path = asm
                    .source
                    .path(&mut RngStream::new(cfg.master_seed, stream_index(i, rep)));
                path.iter().map(|&x| cfg.f.eval(x) - m0).sum::<f64>() / sqrt_n
            })
            .collect();
        let (vn, mean, mean_source) = match asm.mean {
            Some(m) => (raw, m, "exact"),
            None => {
                let shift = raw.iter().sum::<f64>() / r as f64;
                (
                    raw.iter().map(|v| v - shift).collect(),
                    m0 + shift / sqrt_n,
                    "grand mean",
                )
            }
        };
        let dof = if asm.mean.is_some() {
            r as f64
        } else {
            r as f64 - 1.0
        };
        let v_hat_n_sq = vn.iter().map(|v| v * v).sum::<f64>() / dof;
        let (v_hat_sq, v_hat_sq_stderr) = match cfg.normalization {
            Normalization::PlugIn => {
                let est = estimate_variance(
                    &asm.source,
                    &cfg.f,
                    mean,
                    cfg.tolerances.j_max.min(n.saturating_sub(1)).max(1),
                    r,
                    cfg.master_seed,
                    stream_index(i, 0) | VARIANCE_STREAM_OFFSET,
                )?;
                (Some(est.v_hat_sq), Some(est.v_hat_sq_stderr))
            }
            Normalization::DirectMc => (None, None),
        };
        let v = match cfg.normalization {
            Normalization::DirectMc => v_hat_n_sq,
            Normalization::PlugIn => v_hat_sq.expect("plug-in estimate"),
        };
        let (fsup, _, _) = cfg.f.sup_norms();
        if !(v > 1e-14 * fsup * fsup) {
            return Err(Error::DegenerateVariance { v_hat_sq: v });
        }
        let sd = v.sqrt();
        let normalized: Vec<f64> = vn.iter().map(|x| x / sd).collect();
        for d in distances_to_gaussian(&normalized, n, bootstrap_seed(cfg.master_seed, i))? {
            rows.push(Row {
                experiment: cfg.name.clone(),
                n: n as u64,
                metric: d.metric.name().into(),
                value: d.value,
                stderr: d.mc_stderr,
                replications: r,
                seed: cfg.master_seed,
                flag: if d.value < floor { FLAG_FLOOR } else { FLAG_OK }.into(),
            });
        }
        norms.push(NormalizationInfo {
            n,
            mean,
            mean_source,
            v_hat_n_sq,
            v_hat_sq,
            v_hat_sq_stderr,
            scale: asm.scale,
            tail_truncation: asm.tail_truncation,
            grid: asm.grid,
        });
    }
    if cfg.normalization == Normalization::PlugIn {
        notes.push("normalized by the plug-in long-run variance, not the exact v_n".into());
    }
    let mut slopes = Vec::new();
    for (k, metric) in [Metric::Kolmogorov, Metric::Wasserstein1]
        .into_iter()
        .enumerate()
    {
        let th = theory.map(|t| t[k]);
        let mrows: Vec<&Row> = rows.iter().filter(|r| r.metric == metric.name()).collect();
        slopes.push(summarize_slope(
            metric.name(),
            &mrows,
            th,
            band_for(&cfg.tolerances, th, false),
        ));
    }
    Ok(ExperimentReport {
        experiment: cfg.name.clone(),
        kind: cfg.kind,
        rows,
        slopes,
        normalization: norms,
        gamma_check: None,
        incomplete,
        notes,
        provenance: provenance(cfg, start),
    })
}

/// ρ_0..ρ_{len-1} by quadrature.
pub fn rho_table(kernel: &KernelSpec, beta: f64, len: usize, tol: f64) -> Result<Vec<f64>> {
    (0..len as u64)
        .into_par_iter()
        .map(|k| rho_k_estimate(kernel, beta, k, tol, None).map(|e| e.value))
        .collect()
}

/// The min-integral and the γ₁/γ₂ proxy across the n-grid.
pub fn run_bound_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let n_max = *cfg.n_grid.last().expect("non-empty grid");
    let (kernel, index) = cfg.model.kernel_and_index(match cfg.model {
        ModelSpec::Farima { .. } => farima_length(&cfg.model, n_max)?,
        _ => n_max,
    })?;
    let beta = cfg.bound.beta.unwrap_or(index);
    let measure = IntensityMeasure {
        beta,
        c_kappa: cfg.bound.c_kappa,
    };
    let seed = cfg.master_seed;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let row = |n: usize, metric: &str, value: f64, stderr: f64, flag: &str| Row {
        experiment: cfg.name.clone(),
        n: n as u64,
        metric: metric.into(),
        value,
        stderr,
        replications: 0,
        seed,
        flag: flag.into(),
    };
    let (p, q) = (cfg.bound.p, cfg.bound.q);
    let integrals: Vec<Result<crate::bounds::MinIntegral>> = cfg
        .n_grid
        .par_iter()
        .map(|&n| min_integral(p, q, n, &kernel, &measure, cfg.tolerances.min_integral))
        .collect();
    for (&n, res) in cfg.n_grid.iter().zip(integrals) {
        match res {
            Ok(mi) => {
                let flag = if mi.inner_inexact {
                    FLAG_INEXACT
                } else {
                    FLAG_OK
                };
                rows.push(row(n, "min_integral", mi.value, mi.abs_error, flag));
            }
            Err(Error::Accuracy {
                estimate,
                error_bound,
                ..
            }) => {
                notes.push(format!("min-integral at n = {n} missed its tolerance"));
                rows.push(row(n, "min_integral", estimate, error_bound, FLAG_INEXACT));
            }
            Err(e) => return Err(e),
        }
    }
    let rho = rho_table(&kernel, beta, n_max, cfg.tolerances.quad_rel)?;
    let rho_sum = rho[0] + 2.0 * rho[1..].iter().sum::<f64>();
    let mut max_ng: f64 = 0.0;
    for &n in &cfg.n_grid {
        let g = gamma12_proxy(n, &rho)?;
        let ng = n as f64 * g.gamma1_sq;
        max_ng = max_ng.max(ng);
        rows.push(row(n, "gamma1_sq", g.gamma1_sq, 0.0, FLAG_OK));
        rows.push(row(n, "n_gamma1_sq", ng, 0.0, FLAG_OK));
    }
    let bound = rho_sum.powi(3);
    let gamma_check = GammaCheck {
        rho_sum,
        bound,
        max_n_gamma1_sq: max_ng,
        bounded: max_ng <= 1.1 * bound,
    };
    let ab = cfg.model.alpha_beta(beta)?;
    let q_rat = rat(q, "q")?;
    let th = match ab {
        Some(ab) => Some(min_integral_rate(ab, q_rat)?),
        // Exponential kernels sit in the fast-decay regime.
        None => Some(RateClass::new(Rational::new(1, 1) - q_rat / 2, 0)),
    };
    let p_is_beta = (p - beta).abs() < 1e-12;
    let mi_rows: Vec<&Row> = rows.iter().filter(|r| r.metric == "min_integral").collect();
    let g_rows: Vec<&Row> = rows.iter().filter(|r| r.metric == "gamma1_sq").collect();
    let g_th = Some(RateClass::new(Rational::new(-1, 1), 0));
    let slopes = vec![
        summarize_slope(
            "min_integral",
            &mi_rows,
            th,
            band_for(&cfg.tolerances, th, p_is_beta),
        ),
        summarize_slope("gamma1_sq", &g_rows, g_th, cfg.tolerances.band),
    ];
    Ok(ExperimentReport {
        experiment: cfg.name.clone(),
        kind: cfg.kind,
        rows,
        slopes,
        normalization: Vec::new(),
        gamma_check: Some(gamma_check),
        incomplete: false,
        notes,
        provenance: provenance(cfg, start),
    })
}

/// ρ_k over the configured lags against the `k^{-αβ/2}` bound.
pub fn run_rho_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let lags: Vec<u64> = if cfg.lags.is_empty() {
        cfg.n_grid.iter().map(|&n| n as u64).collect()
    } else {
        cfg.lags.clone()
    };
    let max_lag = lags.iter().copied().max().unwrap_or(0) as usize;
    let (kernel, beta) = cfg.model.kernel_and_index(match cfg.model {
        ModelSpec::Farima { .. } => farima_length(&cfg.model, max_lag + 1)?,
        _ => max_lag + 1,
    })?;
    let est: Vec<Result<crate::quad::Estimate>> = lags
        .par_iter()
        .map(|&k| rho_k_estimate(&kernel, beta, k, cfg.tolerances.quad_rel, None))
        .collect();
    let mut rows = Vec::new();
    for (&k, e) in lags.iter().zip(est) {
        let (value, err, flag) = match e {
            Ok(e) => (e.value, e.abs_error, FLAG_OK),
            Err(Error::Accuracy {
                estimate,
                error_bound,
                ..
            }) => (estimate, error_bound, FLAG_INEXACT),
            Err(e) => return Err(e),
        };
        rows.push(Row {
            experiment: cfg.name.clone(),
            n: k,
            metric: "rho".into(),
            value,
            stderr: err,
            replications: 0,
            seed: cfg.master_seed,
            flag: flag.into(),
        });
    }
    let th = cfg
        .model
        .alpha_beta(beta)?
        .map(|ab| RateClass::new(-ab / 2, 0));
    let used: Vec<&Row> = rows.iter().filter(|r| r.n > 0).collect();
    let slopes = vec![summarize_slope("rho", &used, th, cfg.tolerances.band)];
    Ok(ExperimentReport {
        experiment: cfg.name.clone(),
        kind: cfg.kind,
        rows,
        slopes,
        normalization: Vec::new(),
        gamma_check: None,
        incomplete: false,
        notes: Vec::new(),
        provenance: provenance(cfg, start),
    })
}

/// `v̂²` (truncated autocovariance sum) against the direct `E V_n²`.
pub fn run_variance_check(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut agree_at_last = None;
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let asm = cfg.assemble(n)?;
        let Some(mean) = asm.mean else {
            return Err(config_err(
                "variance-check needs a model with an exact mean",
            ));
        };
        let j_max = cfg.tolerances.j_max.min(n.saturating_sub(1));
        let est = estimate_variance(
            &asm.source,
            &cfg.f,
            mean,
            j_max,
            cfg.replications,
            cfg.master_seed,
            stream_index(i, 0),
        )?;
        let push = |rows: &mut Vec<Row>, metric: &str, v: f64, se: f64| {
            rows.push(Row {
                experiment: cfg.name.clone(),
                n: n as u64,
                metric: metric.into(),
                value: v,
                stderr: se,
                replications: cfg.replications,
                seed: cfg.master_seed,
                flag: FLAG_OK.into(),
            })
        };
        push(&mut rows, "v_hat_sq", est.v_hat_sq, est.v_hat_sq_stderr);
        push(&mut rows, "vn_sq", est.vn_sq, est.vn_sq_stderr);
        for (j, (c, se)) in est.per_lag.iter().zip(&est.per_lag_stderr).enumerate() {
            push(&mut rows, &format!("cov_lag_{j}"), *c, *se);
        }
        let combined = (est.v_hat_sq_stderr.powi(2) + est.vn_sq_stderr.powi(2)).sqrt();
        let ok = (est.v_hat_sq - est.vn_sq).abs() <= 3.0 * combined;
        notes.push(format!(
            "n = {n}: v̂² = {:.6}, v̂_n² = {:.6}, {}",
            est.v_hat_sq,
            est.vn_sq,
            if ok {
                "agree within 3 stderr"
            } else {
                "differ by more than 3 stderr"
            }
        ));
        agree_at_last = Some(ok);
    }
    let verdict = match agree_at_last {
        Some(true) => Verdict::WithinBand,
        _ => Verdict::Inconclusive,
    };
    let slopes = vec![SlopeSummary {
        metric: "v_hat_sq_vs_vn_sq".into(),
        fit_all: None,
        fit_used: None,
        points_used: 0,
        theoretical: None,
        band: 3.0,
        verdict,
    }];
    Ok(ExperimentReport {
        experiment: cfg.name.clone(),
        kind: cfg.kind,
        rows,
        slopes,
        normalization: Vec::new(),
        gamma_check: None,
        incomplete: false,
        notes,
        provenance: provenance(cfg, start),
    })
}

/// Per-(experiment, metric) slope of merged report rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergedSlope {
    pub experiment: String,
    pub metric: String,
    pub rows: usize,
    pub points_used: usize,
    pub n_min: u64,
    pub n_max: u64,
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
}

/// Groups rows by experiment and metric and fits each group on its
/// unflagged rows.
pub fn merge_rows(rows: &[Row]) -> Vec<MergedSlope> {
    let mut groups: BTreeMap<(String, String), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.experiment.clone(), r.metric.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((experiment, metric), mut g)| {
            g.sort_by_key(|r| r.n);
            let s = summarize_slope(&metric, &g, None, 0.0);
            MergedSlope {
                experiment,
                metric,
                rows: g.len(),
                points_used: s.points_used,
                n_min: g.first().map_or(0, |r| r.n),
                n_max: g.last().map_or(0, |r| r.n),
                slope: s.fit_used.map(|f| f.slope),
                slope_stderr: s.fit_used.map(|f| f.stderr),
            }
        })
        .collect()
}

pub fn write_merged_csv<W: Write>(out: W, merged: &[MergedSlope]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "experiment",
        "metric",
        "rows",
        "points_used",
        "n_min",
        "n_max",
        "slope",
        "slope_stderr",
    ])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for m in merged {
        w.write_record([
            m.experiment.clone(),
            m.metric.clone(),
            m.rows.to_string(),
            m.points_used.to_string(),
            m.n_min.to_string(),
            m.n_max.to_string(),
            opt(m.slope),
            opt(m.slope_stderr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"kind": "rate-mc", "model": {"example": "ou", "lambda": 1.0, "beta": 1.5},
                "n_grid": [16, 32, 64], "replications": 200, "master_seed": 5}"#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_roundtrip() {
        let cfg = ou_config();
        assert_eq!(cfg.f, default_f());
        assert_eq!(cfg.tolerances.j_max, 50);
        let text = cfg.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn config_rejections() {
        let bad = |s: &str| matches!(ExperimentConfig::from_json(s), Err(Error::Config(_)));
        assert!(bad(
            r#"{"kind": "rate-mc", "model": {"example": "iid_gaussian"}, "n_grid": [8, 8]}"#
        ));
        assert!(bad(
            r#"{"kind": "rate-mc", "model": {"example": "iid_gaussian"}, "n_grid": [8], "replications": 50}"#
        ));
        // H outside (0, 1 - 1/β)
        assert!(bad(
            r#"{"kind": "rate-mc", "model": {"example": "lfsn", "h": 0.5, "beta": 1.5}, "n_grid": [8]}"#
        ));
        assert!(bad(
            r#"{"kind": "rate-mc", "model": {"example": "farima", "d": 0.2, "beta": 1.5}, "n_grid": [8]}"#
        ));
        assert!(bad(
            r#"{"kind": "rate-mc", "model": {"example": "ou", "lambda": 1, "beta": 1.5, "bogus": 1}, "n_grid": [8]}"#
        ));
        assert!(bad(
            r#"{"kind": "nope", "model": {"example": "iid_gaussian"}, "n_grid": [8]}"#
        ));
    }

    #[test]
    fn custom_model_parses() {
        let cfg = ExperimentConfig::from_json(
            r#"{"kind": "rho-decay", "n_grid": [1],
                "model": {"example": "custom",
                          "levy": {"type": "symmetric_stable", "beta": 1.5, "scale": 1.0},
                          "kernel": {"type": "power_law", "gamma": 0.0, "alpha": 1.5}}}"#,
        )
        .unwrap();
        assert_eq!(
            cfg.model.alpha_beta(1.5).unwrap(),
            Some(Rational::new(9, 4))
        );
        let tempered = ExperimentConfig::from_json(
            r#"{"kind": "rate-mc", "n_grid": [8],
                "model": {"example": "custom",
                          "levy": {"type": "tempered_stable", "zeta": 0.5, "tempering": 3.0, "truncation_eps": 0.001},
                          "kernel": {"type": "ou_exponential", "lambda": 1.0}}}"#,
        )
        .unwrap();
        assert_eq!(tempered.model.theoretical_rates().unwrap(), None);
    }

    #[test]
    fn rate_experiment_is_deterministic() {
        let cfg = ou_config();
        let a = run_rate_experiment(&cfg).unwrap();
        let b = run_rate_experiment(&cfg).unwrap();
        assert_eq!(a.csv_string(), b.csv_string());
        assert_eq!(a.rows.len(), 6);
        assert!(a
            .csv_string()
            .starts_with("experiment,n,metric,value,stderr,R,seed,flag\n"));
        let th = a.slope("d_W").unwrap().theoretical.unwrap();
        assert_eq!(th.exponent, Rational::new(-1, 2));
    }

    #[test]
    fn iid_gaussian_is_floor_limited() {
        let cfg = ExperimentConfig::from_json(
            r#"{"kind": "rate-mc", "model": {"example": "iid_gaussian"},
                "n_grid": [64, 128, 256], "replications": 400, "master_seed": 1}"#,
        )
        .unwrap();
        let rep = run_rate_experiment(&cfg).unwrap();
        assert!(rep.rows_for("d_K").all(|r| r.flag == FLAG_FLOOR));
        assert_eq!(rep.slope("d_K").unwrap().verdict, Verdict::FloorLimited);
    }

    #[test]
    fn csv_roundtrip_and_merge() {
        let rows: Vec<Row> = [64u64, 128, 256, 512]
            .iter()
            .map(|&n| Row {
                experiment: "e".into(),
                n,
                metric: "d_W".into(),
                value: 2.0 / (n as f64).sqrt(),
                stderr: 0.0,
                replications: 100,
                seed: 3,
                flag: FLAG_OK.into(),
            })
            .collect();
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let back = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        let merged = merge_rows(&back);
        assert_eq!(merged.len(), 1);
        assert!((merged[0].slope.unwrap() + 0.5).abs() < 1e-12);
        assert!(read_rows("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn verdict_classification() {
        let mk = |vals: &[f64]| -> Vec<Row> {
            vals.iter()
                .enumerate()
                .map(|(i, &v)| Row {
                    experiment: "e".into(),
                    n: 64 << i,
                    metric: "m".into(),
                    value: v,
                    stderr: v * 0.01,
                    replications: 1,
                    seed: 0,
                    flag: FLAG_OK.into(),
                })
                .collect()
        };
        let th = Some(RateClass::new(Rational::new(-1, 2), 0));
        let decay = |s: f64| -> Vec<f64> { (0..5).map(|i| 2f64.powf(s * i as f64)).collect() };
        let within = mk(&decay(-0.45));
        let refs: Vec<&Row> = within.iter().collect();
        assert_eq!(
            summarize_slope("m", &refs, th, 0.15).verdict,
            Verdict::WithinBand
        );
        let slow = mk(&decay(0.0));
        let refs: Vec<&Row> = slow.iter().collect();
        assert_eq!(
            summarize_slope("m", &refs, th, 0.15).verdict,
            Verdict::Violation
        );
        let fast = mk(&decay(-1.0));
        let refs: Vec<&Row> = fast.iter().collect();
        assert_eq!(
            summarize_slope("m", &refs, th, 0.15).verdict,
            Verdict::Inconclusive
        );
        let single = mk(&[0.3]);
        let refs: Vec<&Row> = single.iter().collect();
        assert_eq!(
            summarize_slope("m", &refs, th, 0.15).verdict,
            Verdict::Inconclusive
        );
    }

    #[test]
    fn budget_overrun_gives_partial_report() {
        let mut cfg = ExperimentConfig::from_json(
            r#"{"kind": "rate-mc", "model": {"example": "lfsn", "h": 0.1, "beta": 1.8},
                "n_grid": [8, 4096], "replications": 100, "grid": {"m": 2, "work_budget": 1e6}}"#,
        )
        .unwrap();
        let rep = run_rate_experiment(&cfg).unwrap();
        assert!(rep.incomplete);
        assert!(rep.rows.iter().all(|r| r.n == 8));
        cfg.grid.work_budget = Some(1.0);
        let rep = run_rate_experiment(&cfg).unwrap();
        assert!(rep.rows.is_empty() && rep.incomplete);
    }

    #[test]
    fn bound_experiment_single_point_is_inconclusive() {
        let cfg = ExperimentConfig::from_json(
            r#"{"kind": "bound-quadrature", "n_grid": [16],
                "model": {"example": "custom",
                          "levy": {"type": "symmetric_stable", "beta": 1.0, "scale": 1.0},
                          "kernel": {"type": "power_law", "gamma": 0.0, "alpha": 2.5}}}"#,
        )
        .unwrap();
        let rep = run_bound_experiment(&cfg).unwrap();
        assert_eq!(
            rep.slope("min_integral").unwrap().verdict,
            Verdict::Inconclusive
        );
        assert!(rep.slope("min_integral").unwrap().fit_all.is_none());
        assert!(rep.gamma_check.as_ref().unwrap().bounded);
    }
}
