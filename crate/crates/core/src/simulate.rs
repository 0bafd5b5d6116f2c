//! Joint path simulation of `X_t = ∫_{-∞}^t g(t-s) dL_s` at integer times.
//!
//! The noise lives on one fixed lattice of step `Δ = 1/m` reaching back a
//! horizon `M` before `t = 1`; every `X_t` is a left-point Riemann sum over
//! the same increments, so the joint dependence of the path is that of the
//! discretised model. Cells within one time unit after the origin or after a
//! singular point of `g` use the cell-exact weight
//! `sign(g)·(Δ⁻¹ ∫_cell |g|^p)^{1/p}` instead, with `p = β` for stable noise
//! and `p = 2` for tempered noise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::quad::{self, QuadOptions};
use crate::rng::{unit_symmetric_stable, LevyModel, RngStream};

/// Default tail-truncation target `∫_M^∞|g|^p / ∫_0^∞|g|^p`.
pub const DEFAULT_TAIL_TOL: f64 = 1e-3;
/// Default cap on `n·m·(M·m)`.
pub const DEFAULT_WORK_BUDGET: f64 = 5e10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    /// Lattice cells per unit time; `Δ = 1/m`.
    pub m: u32,
    /// Truncation horizon `M` of the stochastic integral.
    pub horizon: f64,
    /// Path length.
    pub n: usize,
    #[serde(default)]
    pub method: ConvolutionMethod,
    #[serde(default = "default_budget")]
    pub work_budget: f64,
}

fn default_budget() -> f64 {
    DEFAULT_WORK_BUDGET
}

impl SimGrid {
    pub fn new(m: u32, horizon: f64, n: usize) -> Result<Self> {
        let g = SimGrid {
            m,
            horizon,
            n,
            method: ConvolutionMethod::Auto,
            work_budget: DEFAULT_WORK_BUDGET,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::ParameterDomain(
                "lattice resolution m must be >= 1".into(),
            ));
        }
        if !(self.horizon >= 1.0) || !self.horizon.is_finite() {
            return Err(Error::ParameterDomain(format!(
                "horizon {} must be >= 1",
                self.horizon
            )));
        }
        let cells = self.horizon * self.m as f64;
        if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::ParameterDomain(format!(
                "horizon {} is not a multiple of the step 1/{}",
                self.horizon, self.m
            )));
        }
        if self.n == 0 {
            return Err(Error::ParameterDomain("path length must be >= 1".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Number of kernel taps `M·m`.
    pub fn taps(&self) -> usize {
        (self.horizon * self.m as f64).round() as usize
    }

    pub fn work_estimate(&self) -> f64 {
        self.n as f64 * self.m as f64 * self.taps() as f64
    }

    /// Defaults: `Δ = 1/16` for continuous kernels, `Δ = 1` for discrete
    /// moving averages, and `M` from the tail-truncation target.
    pub fn default_for(model: &ProcessModel, n: usize) -> Result<Self> {
        let m = match model.kernel {
            KernelSpec::DiscreteMa { .. } => 1,
            _ => 16,
        };
        let horizon = default_horizon(model, DEFAULT_TAIL_TOL)?;
        SimGrid::new(m, horizon, n)
    }
}

/// Smallest integer horizon whose tail-truncation diagnostic is below `tol`.
pub fn default_horizon(model: &ProcessModel, tol: f64) -> Result<f64> {
    let p = model.weight_exponent();
    match &model.kernel {
        KernelSpec::DiscreteMa { b } => Ok((b.len() as f64).max(1.0)),
        KernelSpec::PowerLaw { alpha, .. } if alpha * p > 1.0 => {
            Ok(tol.powf(-1.0 / (alpha * p - 1.0)).ceil().max(1.0))
        }
        _ => {
            let mut m = 1.0;
            while tail_truncation(model, m)? >= tol {
                m *= 2.0;
                if m > 1e9 {
                    return Err(Error::ModelInvalid(
                        "kernel tail too heavy to truncate".into(),
                    ));
                }
            }
            // refine within the last doubling
            let (mut lo, mut hi) = (m / 2.0, m);
            while hi - lo > 1.0 {
                let mid = ((lo + hi) / 2.0).floor();
                if tail_truncation(model, mid)? < tol {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(hi.max(1.0))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessModel {
    pub levy: LevyModel,
    pub kernel: KernelSpec,
}

impl ProcessModel {
    pub fn new(levy: LevyModel, kernel: KernelSpec) -> Result<Self> {
        let m = ProcessModel { levy, kernel };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.levy.validate()?;
        self.kernel.validate()?;
        let p = self.weight_exponent();
        if let Some(alpha) = self.kernel.tail_exponent() {
            if alpha * p <= 1.0 {
                return Err(Error::ModelInvalid(format!(
                    "∫|g|^{p} diverges at infinity (alpha·p = {})",
                    alpha * p
                )));
            }
        }
        for (_, e) in self.kernel.singular_points() {
            if e * p <= -1.0 {
                return Err(Error::ModelInvalid(format!(
                    "∫|g|^{p} diverges at a singular point (exponent {e})"
                )));
            }
        }
        self.kernel
            .lp_norm_pow(p, 1e-8)
            .map_err(|e| Error::ModelInvalid(format!("∫|g|^{p} did not converge: {e}")))?;
        Ok(())
    }

    /// Exponent for cell-exact weights and tail diagnostics: β for stable
    /// noise, 2 for tempered (finite-variance) noise.
    pub fn weight_exponent(&self) -> f64 {
        match &self.levy {
            LevyModel::SymmetricStable { beta, .. } => *beta,
            LevyModel::TemperedStable(_) => 2.0,
        }
    }
}

/// `σ_L (∫_0^∞ |g|^β)^{1/β}`, the exact marginal scale of `X_t`.
pub fn marginal_scale(model: &ProcessModel, tol: f64) -> Result<f64> {
    let LevyModel::SymmetricStable { beta, scale } = model.levy else {
        return Err(Error::WrongVariant(
            "marginal scale needs stable noise".into(),
        ));
    };
    let est = model
        .kernel
        .lp_norm_pow(beta, tol)
        .map_err(|e| Error::ModelInvalid(format!("∫|g|^β did not converge: {e}")))?;
    if !est.value.is_finite() {
        return Err(Error::ModelInvalid("∫|g|^β diverges".into()));
    }
    Ok(scale * est.value.powf(1.0 / beta))
}

/// `∫_M^∞ |g|^p / ∫_0^∞ |g|^p`.
pub fn tail_truncation(model: &ProcessModel, horizon: f64) -> Result<f64> {
    let p = model.weight_exponent();
    let total = model.kernel.lp_norm_pow(p, 1e-8)?.value;
    if total == 0.0 {
        return Ok(0.0);
    }
    let tail =
        crate::kernels::overlap_integral(&model.kernel, &[(0.0, p)], horizon, None, 1e-8)?.value;
    Ok(tail / total)
}

/// Riemann weights `w_0..w_{L-1}` for the lattice cells `[jΔ, (j+1)Δ)`.
pub fn lattice_weights(model: &ProcessModel, grid: &SimGrid) -> Result<Vec<f64>> {
    let taps = grid.taps();
    let dt = grid.step();
    if let KernelSpec::DiscreteMa { b } = &model.kernel {
        return Ok((0..taps)
            .map(|j| {
                let idx = (j as f64 * dt).floor() as usize;
                b.get(idx).copied().unwrap_or(0.0)
            })
            .collect());
    }
    let p = model.weight_exponent();
    let singular = model.kernel.singular_points();
    let opts = QuadOptions::with_rel_tol(1e-10);
    let mut w = Vec::with_capacity(taps);
    for j in 0..taps {
        let a = j as f64 * dt;
        let sing = singular.iter().find(|(loc, _)| (loc - a).abs() < 1e-12);
        let near = a < 1.0 - 1e-12
            || singular
                .iter()
                .any(|(loc, _)| a > *loc && a < loc + 1.0 - 1e-12);
        if near || sing.is_some() {
            let f = |delta: f64| model.kernel.eval_near(a, delta).abs().powf(p);
            let est = match sing {
                Some((_, e)) => quad::integrate_left_singular(f, 0.0, dt, e * p, &opts)?,
                None => quad::integrate(f, 0.0, dt, &opts)?,
            };
            let sign = model.kernel.eval(a + 0.5 * dt).signum();
            w.push(sign * (est.value / dt).powf(1.0 / p));
        } else {
            w.push(model.kernel.eval(a));
        }
    }
    Ok(w)
}

/// Scale of the simulated marginal: `σ_L Δ^{1/β} (Σ|w_j|^β)^{1/β}`.
/// Under stable noise the lattice process is exactly stable with this scale.
pub fn lattice_scale(model: &ProcessModel, grid: &SimGrid) -> Result<f64> {
    let LevyModel::SymmetricStable { beta, scale } = model.levy else {
        return Err(Error::WrongVariant(
            "lattice scale needs stable noise".into(),
        ));
    };
    let w = lattice_weights(model, grid)?;
    let s: f64 = w.iter().map(|v| v.abs().powf(beta)).sum();
    Ok(scale * (grid.step() * s).powf(1.0 / beta))
}

/// Reusable simulator for one `(model, grid)`: weights and FFT plans are
/// computed once and shared by every replication.
pub struct Simulator {
    model: ProcessModel,
    grid: SimGrid,
    weights: Vec<f64>,
    fft: Option<FftPlan>,
}

struct FftPlan {
    size: usize,
    weights_hat: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Simulator {
    pub fn new(model: &ProcessModel, grid: &SimGrid) -> Result<Self> {
        grid.validate()?;
        model.validate()?;
        let work = grid.work_estimate();
        if work > grid.work_budget {
            return Err(Error::Resource(format!(
                "path work estimate {work:.3e} exceeds budget {:.3e}",
                grid.work_budget
            )));
        }
        let weights = lattice_weights(model, grid)?;
        let taps = weights.len();
        let use_fft = match grid.method {
            ConvolutionMethod::Direct => false,
            ConvolutionMethod::Fft => true,
            ConvolutionMethod::Auto => taps > 64 && (taps as f64) * (grid.n as f64) > 4e6,
        };
        let fft = use_fft.then(|| {
            let cells = noise_len(grid, taps);
            let size = (cells + taps).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let mut weights_hat: Vec<Complex<f64>> = weights
                .iter()
                .map(|&w| Complex::new(w, 0.0))
                .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
                .take(size)
                .collect();
            forward.process(&mut weights_hat);
            FftPlan {
                size,
                weights_hat,
                forward,
                inverse,
            }
        });
        Ok(Self {
            model: model.clone(),
            grid: grid.clone(),
            weights,
            fft,
        })
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws the noise lattice, oldest cell first.
    pub fn noise(&self, stream: &mut RngStream) -> Vec<f64> {
        let len = noise_len(&self.grid, self.weights.len());
        let dt = self.grid.step();
        match &self.model.levy {
            LevyModel::SymmetricStable { beta, scale } => {
                let cell_scale = scale * dt.powf(1.0 / beta);
                (0..len)
                    .map(|_| cell_scale * unit_symmetric_stable(stream, *beta))
                    .collect()
            }
            levy => (0..len)
                .map(|_| levy.sample_increment(stream, dt))
                .collect(),
        }
    }

    /// `X_1..X_n` driven by a given noise lattice.
    pub fn path_from_noise(&self, noise: &[f64]) -> Vec<f64> {
        let taps = self.weights.len();
        let m = self.grid.m as usize;
        let n = self.grid.n;
        let at = |t: usize| taps - 1 + t * m; // lattice index of the cell ending at time t+1
        match &self.fft {
            None => (0..n)
                .map(|t| {
                    let end = at(t);
                    let mut acc = 0.0;
                    for (j, w) in self.weights.iter().enumerate() {
                        acc += w * noise[end - j];
                    }
                    acc
                })
                .collect(),
            Some(plan) => {
                let mut buf: Vec<Complex<f64>> = noise
                    .iter()
                    .map(|&v| Complex::new(v, 0.0))
                    .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
                    .take(plan.size)
                    .collect();
                plan.forward.process(&mut buf);
                for (b, w) in buf.iter_mut().zip(&plan.weights_hat) {
                    *b *= w;
                }
                plan.inverse.process(&mut buf);
                let norm = 1.0 / plan.size as f64;
                (0..n).map(|t| buf[at(t)].re * norm).collect()
            }
        }
    }

    pub fn path(&self, stream: &mut RngStream) -> Vec<f64> {
        let noise = self.noise(stream);
        self.path_from_noise(&noise)
    }
}

fn noise_len(grid: &SimGrid, taps: usize) -> usize {
    (grid.n - 1) * grid.m as usize + taps
}

pub fn simulate_path(
    model: &ProcessModel,
    grid: &SimGrid,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    Ok(Simulator::new(model, grid)?.path(stream))
}

/// Innovation scale of the exact integer-time OU recursion.
pub fn ou_innovation_scale(lambda: f64, beta: f64, sigma_l: f64) -> f64 {
    sigma_l * ((1.0 - (-lambda * beta).exp()) / (lambda * beta)).powf(1.0 / beta)
}

pub fn ou_stationary_scale(lambda: f64, beta: f64, sigma_l: f64) -> f64 {
    sigma_l * (lambda * beta).powf(-1.0 / beta)
}

/// Exact-in-law stable OU at integer times: stationary start, then
/// `X_{t+1} = e^{-λ} X_t + ξ_t`.
pub fn simulate_ou_exact(
    lambda: f64,
    beta: f64,
    sigma_l: f64,
    n: usize,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::ParameterDomain(format!(
            "OU rate {lambda} must be > 0"
        )));
    }
    if !(beta > 0.0 && beta < 2.0) {
        return Err(Error::ParameterDomain(format!(
            "stable index {beta} not in (0, 2)"
        )));
    }
    if !(sigma_l > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "noise scale {sigma_l} must be > 0"
        )));
    }
    let decay = (-lambda).exp();
    let innov = ou_innovation_scale(lambda, beta, sigma_l);
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let mut x = ou_stationary_scale(lambda, beta, sigma_l) * unit_symmetric_stable(stream, beta);
    out.push(x);
    for _ in 1..n {
        x = decay * x + innov * unit_symmetric_stable(stream, beta);
        out.push(x);
    }
    Ok(out)
}

/// How paths are produced for one path length.
pub enum PathSource {
    Lattice(Simulator),
    OuExact {
        lambda: f64,
        beta: f64,
        sigma_l: f64,
        n: usize,
    },
    /// i.i.d. N(0,1) draws, used to calibrate the Monte Carlo floor.
    IidGaussian {
        n: usize,
    },
}

impl PathSource {
    pub fn n(&self) -> usize {
        match self {
            PathSource::Lattice(s) => s.grid().n,
            PathSource::OuExact { n, .. } | PathSource::IidGaussian { n } => *n,
        }
    }

    pub fn path(&self, stream: &mut RngStream) -> Vec<f64> {
        match self {
            PathSource::Lattice(sim) => sim.path(stream),
            PathSource::OuExact {
                lambda,
                beta,
                sigma_l,
                n,
            } => simulate_ou_exact(*lambda, *beta, *sigma_l, *n, stream)
                .expect("validated OU parameters"),
            PathSource::IidGaussian { n } => (0..*n).map(|_| stream.std_normal()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpSidecar {
    pub model: Option<ProcessModel>,
    pub grid: Option<SimGrid>,
    pub master_seed: u64,
    pub first_stream: u64,
    pub rows: usize,
    pub cols: usize,
    /// Always "f64-le-row-major".
    pub layout: String,
}

/// Writes paths as row-major little-endian `f64` plus a JSON sidecar at
/// `<path>.json`.
pub fn write_path_dump(path: &Path, rows: &[Vec<f64>], sidecar: &DumpSidecar) -> Result<()> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Input("ragged path dump".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    for row in rows {
        for v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    let mut meta = sidecar.clone();
    meta.rows = rows.len();
    meta.cols = cols;
    meta.layout = "f64-le-row-major".into();
    let side = sidecar_path(path);
    std::fs::write(side, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_path_dump(path: &Path) -> Result<(Vec<Vec<f64>>, DumpSidecar)> {
    let meta: DumpSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() != meta.rows * meta.cols * 8 {
        return Err(Error::Input(
            "path dump size does not match its sidecar".into(),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let rows = values
        .chunks(meta.cols.max(1))
        .map(<[f64]>::to_vec)
        .take(meta.rows)
        .collect();
    Ok((rows, meta))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_symmetric_stable;
    use crate::stats::kolmogorov_distance;

    fn stable(beta: f64) -> LevyModel {
        LevyModel::symmetric_stable(beta, 1.0).unwrap()
    }

    #[test]
    fn zero_kernel_gives_zero_path() {
        let model = ProcessModel::new(stable(1.5), KernelSpec::zero()).unwrap();
        let grid = SimGrid::new(4, 8.0, 20).unwrap();
        let mut s = RngStream::new(1, 0);
        assert!(simulate_path(&model, &grid, &mut s)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn discrete_ma_matches_direct_convolution_bitwise() {
        let b = vec![1.0, -0.6, 0.3, 0.2, -0.1];
        let model =
            ProcessModel::new(stable(1.3), KernelSpec::DiscreteMa { b: b.clone() }).unwrap();
        let n = 50;
        let mut grid = SimGrid::new(1, b.len() as f64, n).unwrap();
        grid.method = ConvolutionMethod::Direct;
        let path = simulate_path(&model, &grid, &mut RngStream::new(5, 2)).unwrap();
        // Oracle: same noise, oldest first, then X_t = Σ_j b_j ε_{t-j}.
        let mut s = RngStream::new(5, 2);
        let eps: Vec<f64> = (0..n - 1 + b.len())
            .map(|_| sample_symmetric_stable(&mut s, 1.3, 1.0).unwrap())
            .collect();
        assert_eq!(path.len(), n);
        for (t, x) in path.iter().enumerate() {
            let now = b.len() - 1 + t;
            let mut want = 0.0;
            for (j, bj) in b.iter().enumerate() {
                want += bj * eps[now - j];
            }
            assert_eq!(x.to_bits(), want.to_bits(), "t={t}");
        }
    }

    #[test]
    fn fft_and_direct_agree() {
        let model = ProcessModel::new(stable(1.8), KernelSpec::LfsnIncrement { h: 0.1, beta: 1.8 })
            .unwrap();
        let mut grid = SimGrid::new(2, 64.0, 100).unwrap();
        grid.method = ConvolutionMethod::Direct;
        let direct = Simulator::new(&model, &grid).unwrap();
        grid.method = ConvolutionMethod::Fft;
        let fft = Simulator::new(&model, &grid).unwrap();
        let noise = direct.noise(&mut RngStream::new(3, 3));
        let a = direct.path_from_noise(&noise);
        let b = fft.path_from_noise(&noise);
        let scale = noise.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn ou_lattice_marginal_is_stable_with_closed_form_scale() {
        let (lambda, beta) = (1.0, 1.5);
        let model = ProcessModel::new(stable(beta), KernelSpec::OuExponential { lambda }).unwrap();
        let grid = SimGrid::new(64, 40.0 / lambda, 1).unwrap();
        let sim = Simulator::new(&model, &grid).unwrap();
        let mut xs: Vec<f64> = (0..10_000u64)
            .map(|i| sim.path(&mut RngStream::new(17, i))[0])
            .collect();
        xs.sort_by(f64::total_cmp);
        let scale = ou_stationary_scale(lambda, beta, 1.0);
        let d = kolmogorov_distance(&xs, |x| crate::stable::cdf(x, beta, scale)).unwrap();
        assert!(d < 0.02, "KS {d}");
    }

    #[test]
    fn marginal_scales() {
        let ou = ProcessModel::new(stable(1.5), KernelSpec::OuExponential { lambda: 1.0 }).unwrap();
        assert!((marginal_scale(&ou, 1e-10).unwrap() - 1.5f64.powf(-2.0 / 3.0)).abs() < 1e-9);
        let zero = ProcessModel::new(stable(1.5), KernelSpec::zero()).unwrap();
        assert_eq!(marginal_scale(&zero, 1e-10).unwrap(), 0.0);
        let pl = ProcessModel::new(
            stable(1.5),
            KernelSpec::PowerLaw {
                gamma: 0.0,
                alpha: 1.5,
                k: 1.0,
            },
        )
        .unwrap();
        let want = 1.8f64.powf(2.0 / 3.0);
        assert!(
            (marginal_scale(&pl, 1e-10).unwrap() - want).abs() < 1e-8,
            "{want}"
        );
    }

    #[test]
    fn divergent_model_rejected() {
        let r = ProcessModel::new(
            stable(1.5),
            KernelSpec::PowerLaw {
                gamma: 0.0,
                alpha: 0.5,
                k: 1.0,
            },
        );
        assert!(matches!(r, Err(Error::ModelInvalid(_))));
        let r = ProcessModel::new(
            stable(1.5),
            KernelSpec::PowerLaw {
                gamma: -0.8,
                alpha: 1.5,
                k: 1.0,
            },
        );
        assert!(matches!(r, Err(Error::ModelInvalid(_))));
    }

    #[test]
    fn ou_innovation_scale_value() {
        let got = ou_innovation_scale(1.0, 1.5, 1.0);
        // Quadrature oracle for ∫_0^1 e^{-λβ s} ds.
        let q =
            quad::integrate(|s: f64| (-1.5 * s).exp(), 0.0, 1.0, &QuadOptions::default()).unwrap();
        assert!((got - q.value.powf(1.0 / 1.5)).abs() < 1e-12);
        assert!((got - 0.6449).abs() < 1e-4, "{got}");
        // λ → ∞: innovations carry the full stationary scale.
        let big = 200.0;
        assert!(
            (ou_innovation_scale(big, 1.5, 1.0) / ou_stationary_scale(big, 1.5, 1.0) - 1.0).abs()
                < 1e-12
        );
    }

    #[test]
    fn ou_exact_lag_one_sign_correlation() {
        // Sign agreement of (X_t, X_{t+1}) from the exact recursion vs the
        // lattice scheme driven by independent seeds.
        let (lambda, beta) = (1.0, 1.5);
        let r = 4000u64;
        let exact: Vec<f64> = (0..r)
            .map(|i| {
                let p =
                    simulate_ou_exact(lambda, beta, 1.0, 2, &mut RngStream::new(21, i)).unwrap();
                f64::from(p[0].signum() == p[1].signum())
            })
            .collect();
        let model = ProcessModel::new(stable(beta), KernelSpec::OuExponential { lambda }).unwrap();
        let grid = SimGrid::new(16, 30.0, 2).unwrap();
        let sim = Simulator::new(&model, &grid).unwrap();
        let lattice: Vec<f64> = (0..r)
            .map(|i| {
                let p = sim.path(&mut RngStream::new(22, i));
                f64::from(p[0].signum() == p[1].signum())
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (a, b) = (mean(&exact), mean(&lattice));
        let se = ((a * (1.0 - a) + b * (1.0 - b)) / r as f64).sqrt();
        assert!((a - b).abs() < 3.0 * se, "{a} {b} {se}");
        assert!(a > 0.6);
    }

    #[test]
    fn work_budget_enforced() {
        let model =
            ProcessModel::new(stable(1.5), KernelSpec::OuExponential { lambda: 1.0 }).unwrap();
        let mut grid = SimGrid::new(64, 1000.0, 100_000).unwrap();
        grid.work_budget = 1e9;
        assert!(matches!(
            Simulator::new(&model, &grid),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(SimGrid::new(0, 4.0, 1).is_err());
        assert!(SimGrid::new(4, 0.5, 1).is_err());
        assert!(SimGrid::new(4, 1.1, 1).is_err());
        assert!(SimGrid::new(4, 1.25, 1).is_ok());
    }

    #[test]
    fn default_horizon_meets_truncation_target() {
        for kernel in [
            KernelSpec::OuExponential { lambda: 0.5 },
            KernelSpec::LfsnIncrement { h: 0.2, beta: 1.5 },
            KernelSpec::PowerLaw {
                gamma: 0.0,
                alpha: 1.5,
                k: 1.0,
            },
        ] {
            let model = ProcessModel::new(stable(1.5), kernel).unwrap();
            let grid = SimGrid::default_for(&model, 10).unwrap();
            assert!(tail_truncation(&model, grid.horizon).unwrap() < 1.05 * DEFAULT_TAIL_TOL);
        }
    }

    #[test]
    fn lattice_scale_converges_to_marginal_scale() {
        let model = ProcessModel::new(stable(1.5), KernelSpec::LfsnIncrement { h: 0.2, beta: 1.5 })
            .unwrap();
        let exact = marginal_scale(&model, 1e-10).unwrap();
        let coarse = lattice_scale(&model, &SimGrid::new(4, 512.0, 1).unwrap()).unwrap();
        let fine = lattice_scale(&model, &SimGrid::new(32, 512.0, 1).unwrap()).unwrap();
        assert!((fine - exact).abs() < (coarse - exact).abs() + 1e-12);
        assert!((fine / exact - 1.0).abs() < 0.02, "{fine} {exact}");
    }

    #[test]
    fn path_dump_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("paths.bin");
        let rows = vec![vec![1.0, -2.5, 3.25], vec![0.0, f64::MAX, 1e-300]];
        let side = DumpSidecar {
            model: None,
            grid: None,
            master_seed: 9,
            first_stream: 0,
            rows: 0,
            cols: 0,
            layout: String::new(),
        };
        write_path_dump(&p, &rows, &side).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 6 * 8);
        let (back, meta) = read_path_dump(&p).unwrap();
        assert_eq!(back, rows);
        assert_eq!((meta.rows, meta.cols), (2, 3));
    }
}
