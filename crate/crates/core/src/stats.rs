//! The partial-sum statistic `V_n`, long-run variance estimates and
//! empirical distances to the standard Gaussian.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions};
use crate::rng::{unit_symmetric_stable, LevyModel, RngStream};
use crate::simulate::{marginal_scale, PathSource, ProcessModel};
use crate::special::{normal_cdf, normal_quantile};
use crate::stable;

pub const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Cos {
        theta: f64,
    },
    Sin {
        theta: f64,
    },
    /// `1_{(-∞,t]}` smoothed by a biweight kernel of half-width `h`.
    SmoothedIndicator {
        t: f64,
        h: f64,
    },
    GaussBump {
        center: f64,
        width: f64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeanMode {
    #[default]
    Analytic,
    QuadratureVsStableDensity,
    MonteCarlo {
        replications: usize,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub mean_mode: MeanMode,
}

/// Integrated biweight `K(u) = ∫_{-1}^u (15/16)(1-v²)² dv` on `[-1, 1]`.
fn biweight_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.5 + (15.0 / 16.0) * (u - 2.0 * u.powi(3) / 3.0 + u.powi(5) / 5.0)
    }
}

impl TestFunction {
    pub fn new(shape: Shape) -> Result<Self> {
        let f = TestFunction {
            shape,
            mean_mode: MeanMode::default(),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn with_mean_mode(mut self, mode: MeanMode) -> Self {
        self.mean_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::ParameterDomain(format!("{name} must be finite")))
            }
        };
        match self.shape {
            Shape::Cos { theta } | Shape::Sin { theta } => finite(theta, "theta")?,
            Shape::SmoothedIndicator { t, h } => {
                finite(t, "t")?;
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::ParameterDomain(format!(
                        "bandwidth h = {h} must be > 0"
                    )));
                }
            }
            Shape::GaussBump { center, width } => {
                finite(center, "center")?;
                if !(width > 0.0 && width.is_finite()) {
                    return Err(Error::ParameterDomain(format!(
                        "width = {width} must be > 0"
                    )));
                }
            }
        }
        if let MeanMode::MonteCarlo { replications, .. } = self.mean_mode {
            if replications < 2 {
                return Err(Error::ParameterDomain(
                    "Monte Carlo mean needs >= 2 draws".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Cos { theta } => (theta * x).cos(),
            Shape::Sin { theta } => (theta * x).sin(),
            Shape::SmoothedIndicator { t, h } => 1.0 - biweight_cdf((x - t) / h),
            Shape::GaussBump { center, width } => {
                let z = (x - center) / width;
                (-0.5 * z * z).exp()
            }
        }
    }

    /// `(‖f‖∞, ‖f′‖∞, ‖f″‖∞)`.
    pub fn sup_norms(&self) -> (f64, f64, f64) {
        match self.shape {
            Shape::Cos { theta } | Shape::Sin { theta } => (1.0, theta.abs(), theta * theta),
            // K'' = -(15/4) u (1-u²) peaks at u = 1/√3.
            Shape::SmoothedIndicator { h, .. } => {
                (1.0, 15.0 / 16.0 / h, 2.5 / 3f64.sqrt() / (h * h))
            }
            Shape::GaussBump { width, .. } => (1.0, (-0.5f64).exp() / width, 1.0 / (width * width)),
        }
    }

    /// `E f(Y)` for `Y` symmetric β-stable with the given scale.
    pub fn mean_under_stable(&self, beta: f64, scale: f64) -> Result<f64> {
        match self.mean_mode {
            MeanMode::Analytic => match self.shape {
                Shape::Cos { theta } => Ok((-(scale * theta.abs()).powf(beta)).exp()),
                Shape::Sin { .. } => Ok(0.0),
                _ => Err(Error::UnsupportedMode(
                    "analytic mean is only available for cos/sin test functions".into(),
                )),
            },
            MeanMode::QuadratureVsStableDensity => self.quadrature_mean(beta, scale),
            MeanMode::MonteCarlo { replications, seed } => {
                Ok(self.monte_carlo_mean(beta, scale, replications, seed).0)
            }
        }
    }

    /// Mean and standard error of `f` over `r` exact stable draws.
    pub fn monte_carlo_mean(&self, beta: f64, scale: f64, r: usize, seed: u64) -> (f64, f64) {
        let mut stream = RngStream::new(seed, 0);
        let vals: Vec<f64> = (0..r)
            .map(|_| self.eval(scale * unit_symmetric_stable(&mut stream, beta)))
            .collect();
        let (m, var) = mean_var(&vals);
        (m, (var / r as f64).sqrt())
    }

    fn quadrature_mean(&self, beta: f64, scale: f64) -> Result<f64> {
        if scale == 0.0 {
            return Ok(self.eval(0.0));
        }
        let opts = QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_evals: 2_000_000,
        };
        let density = |x: f64| stable::pdf(x, beta, scale);
        // Past `far` the alternating tail of the oscillatory integral is below
        // 2 p(far) / θ ≈ 1e-10.
        let far = scale * 1e10f64.powf(1.0 / (1.0 + beta)).max(50.0);
        match self.shape {
            Shape::Cos { theta } | Shape::Sin { theta } => {
                if matches!(self.shape, Shape::Sin { .. }) {
                    // Odd integrand: pair x with -x.
                    let pts = oscillation_points(theta, 0.0, far);
                    let e = quad::integrate_points(
                        |x: f64| (theta * x).sin() * (density(x) - density(-x)),
                        &pts,
                        &opts,
                    )?;
                    return Ok(e.value);
                }
                if theta == 0.0 {
                    return Ok(1.0);
                }
                let pts = oscillation_points(theta, 0.0, far);
                let e =
                    quad::integrate_points(|x: f64| (theta * x).cos() * density(x), &pts, &opts)?;
                Ok(2.0 * e.value)
            }
            Shape::SmoothedIndicator { t, h } => {
                let e = quad::integrate(|x: f64| self.eval(x) * density(x), t - h, t + h, &opts)?;
                Ok(stable::cdf(t - h, beta, scale) + e.value)
            }
            Shape::GaussBump { center, width } => {
                let (a, b) = (center - 40.0 * width, center + 40.0 * width);
                let mut pts: Vec<f64> = (0..=16).map(|i| a + (b - a) * i as f64 / 16.0).collect();
                if a < 0.0 && b > 0.0 {
                    pts.push(0.0);
                    pts.sort_by(f64::total_cmp);
                }
                let e = quad::integrate_points(|x: f64| self.eval(x) * density(x), &pts, &opts)?;
                Ok(e.value)
            }
        }
    }
}

fn oscillation_points(theta: f64, a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a];
    if theta != 0.0 {
        let half = PI / theta.abs();
        let mut x = a + half;
        while x < b && pts.len() < 200_000 {
            pts.push(x);
            x += half;
        }
    }
    pts.push(b);
    pts
}

/// `E f(X_1)` under the model's stationary marginal.
pub fn expected_f(model: &ProcessModel, f: &TestFunction) -> Result<f64> {
    f.validate()?;
    let LevyModel::SymmetricStable { beta, .. } = model.levy else {
        return match f.mean_mode {
            MeanMode::MonteCarlo { .. } => Err(Error::WrongVariant(
                "Monte Carlo mean by exact stable draws needs stable noise".into(),
            )),
            _ => Err(Error::WrongVariant(
                "closed-form means need stable noise".into(),
            )),
        };
    };
    let scale = marginal_scale(model, 1e-10)?;
    f.mean_under_stable(beta, scale)
}

/// `n^{-1/2} Σ (f(X_t) - mean)`.
pub fn compute_vn(path: &[f64], f: &TestFunction, mean: f64) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::Domain("V_n of an empty path".into()));
    }
    let s: f64 = path.iter().map(|&x| f.eval(x) - mean).sum();
    Ok(s / (path.len() as f64).sqrt())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    /// `ĉ_0 + 2 Σ_{j=1}^{j_max} ĉ_j`.
    pub v_hat_sq: f64,
    pub v_hat_sq_stderr: f64,
    pub per_lag: Vec<f64>,
    pub per_lag_stderr: Vec<f64>,
    /// Direct Monte Carlo `E V_n²` over the same paths.
    pub vn_sq: f64,
    pub vn_sq_stderr: f64,
    pub n: usize,
    pub replications: usize,
}

/// Long-run variance from `r` independent stationary paths, each centred
/// at the exact mean. Path `i` uses stream `(master_seed, first_stream + i)`.
pub fn estimate_variance(
    source: &PathSource,
    f: &TestFunction,
    mean: f64,
    j_max: usize,
    r: usize,
    master_seed: u64,
    first_stream: u64,
) -> Result<VarianceEstimate> {
    let n = source.n();
    if j_max < 1 || j_max >= n {
        return Err(Error::ParameterDomain(format!(
            "need 1 <= j_max < n, got j_max={j_max}, n={n}"
        )));
    }
    if r < 2 {
        return Err(Error::ParameterDomain(
            "need at least 2 replications".into(),
        ));
    }
    use rayon::prelude::*;
    let per_path: Vec<(Vec<f64>, f64)> = (0..r as u64)
        .into_par_iter()
        .map(|i| {
            let path = source.path(&mut RngStream::new(master_seed, first_stream + i));
            let y: Vec<f64> = path.iter().map(|&x| f.eval(x) - mean).collect();
            let cov: Vec<f64> = (0..=j_max)
                .map(|j| {
                    y[..n - j]
                        .iter()
                        .zip(&y[j..])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        / (n - j) as f64
                })
                .collect();
            let vn = y.iter().sum::<f64>() / (n as f64).sqrt();
            (cov, vn * vn)
        })
        .collect();
    let rf = r as f64;
    let mut per_lag = Vec::with_capacity(j_max + 1);
    let mut per_lag_stderr = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let col: Vec<f64> = per_path.iter().map(|(c, _)| c[j]).collect();
        let (m, v) = mean_var(&col);
        per_lag.push(m);
        per_lag_stderr.push((v / rf).sqrt());
    }
    let lrv: Vec<f64> = per_path
        .iter()
        .map(|(c, _)| c[0] + 2.0 * c[1..].iter().sum::<f64>())
        .collect();
    let (v_hat_sq, v_lrv) = mean_var(&lrv);
    let sq: Vec<f64> = per_path.iter().map(|(_, s)| *s).collect();
    let (vn_sq, v_sq) = mean_var(&sq);
    let (fsup, _, _) = f.sup_norms();
    if !(v_hat_sq > 1e-14 * fsup * fsup) {
        return Err(Error::DegenerateVariance { v_hat_sq });
    }
    Ok(VarianceEstimate {
        v_hat_sq,
        v_hat_sq_stderr: (v_lrv / rf).sqrt(),
        per_lag,
        per_lag_stderr,
        vn_sq,
        vn_sq_stderr: (v_sq / rf).sqrt(),
        n,
        replications: r,
    })
}

/// `sup_x |F̂(x) - F(x)|` for sorted samples.
pub fn kolmogorov_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Input(
            "Kolmogorov distance of an empty sample".into(),
        ));
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    let r = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d
            .max((((i + 1) as f64) / r - f).abs())
            .max((i as f64 / r - f).abs());
    }
    Ok(d.min(1.0))
}

/// `(1/R) Σ |x_(i) - Q((i-½)/R)|`.
pub fn wasserstein1_distance(sorted: &[f64], quantile: impl Fn(f64) -> f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Input(
            "Wasserstein distance of an empty sample".into(),
        ));
    }
    let r = sorted.len() as f64;
    let s: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - quantile((i as f64 + 0.5) / r)).abs())
        .sum();
    Ok(s / r)
}

/// Two-sample Kolmogorov–Smirnov statistic for sorted inputs.
pub fn two_sample_ks(xs: &[f64], ys: &[f64]) -> f64 {
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Kolmogorov,
    Wasserstein1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Kolmogorov => "d_K",
            Metric::Wasserstein1 => "d_W",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub metric: Metric,
    pub value: f64,
    pub mc_stderr: f64,
    pub replications: usize,
    pub n: usize,
}

/// Distances of normalized statistics to N(0,1) with bootstrap standard
/// errors; the bootstrap uses streams `(boot_seed, 0..200)`.
pub fn distances_to_gaussian(
    samples: &[f64],
    n: usize,
    boot_seed: u64,
) -> Result<[DistanceEstimate; 2]> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let dk = kolmogorov_distance(&sorted, normal_cdf)?;
    let r = sorted.len();
    // Quantiles are shared by the point estimate and all resamples.
    let q: Vec<f64> = (0..r)
        .map(|i| normal_quantile((i as f64 + 0.5) / r as f64))
        .collect();
    let w1 = |s: &[f64]| s.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>() / r as f64;
    let dw = w1(&sorted);
    use rayon::prelude::*;
    let boots: Vec<(f64, f64)> = (0..BOOTSTRAP_RESAMPLES as u64)
        .into_par_iter()
        .map(|b| {
            let mut stream = RngStream::new(boot_seed, b);
            let mut res: Vec<f64> = (0..r)
                .map(|_| sorted[((stream.open01() * r as f64) as usize).min(r - 1)])
                .collect();
            res.sort_by(f64::total_cmp);
            (
                kolmogorov_distance(&res, normal_cdf).expect("non-empty"),
                w1(&res),
            )
        })
        .collect();
    let sd = |xs: Vec<f64>| mean_var(&xs).1.sqrt();
    let sk = sd(boots.iter().map(|b| b.0).collect());
    let sw = sd(boots.iter().map(|b| b.1).collect());
    Ok([
        DistanceEstimate {
            metric: Metric::Kolmogorov,
            value: dk,
            mc_stderr: sk,
            replications: r,
            n,
        },
        DistanceEstimate {
            metric: Metric::Wasserstein1,
            value: dw,
            mc_stderr: sw,
            replications: r,
            n,
        },
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// Weighted least squares of `ln value` on `ln n`.
pub fn fit_rate(ns: &[f64], values: &[f64], weights: Option<&[f64]>) -> Result<RateFit> {
    if ns.len() != values.len() || weights.is_some_and(|w| w.len() != ns.len()) {
        return Err(Error::Input("fit_rate inputs differ in length".into()));
    }
    if ns.len() < 3 {
        return Err(Error::Input("fit_rate needs at least 3 points".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "cannot fit a log-log slope through value {v}"
        )));
    }
    if let Some(n) = ns.iter().find(|n| !(**n > 0.0)) {
        return Err(Error::Domain(format!(
            "cannot fit a log-log slope at n = {n}"
        )));
    }
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; ns.len()], <[f64]>::to_vec);
    if w.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Input("weights must be non-negative".into()));
    }
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let sw: f64 = w.iter().sum();
    let used = w.iter().filter(|w| **w > 0.0).count();
    if used < 2 {
        return Err(Error::Input(
            "fit_rate needs two points with positive weight".into(),
        ));
    }
    let xm = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input(
            "fit_rate needs at least two distinct n".into(),
        ));
    }
    let sxy: f64 = w
        .iter()
        .zip(&x)
        .zip(&y)
        .map(|((w, x), y)| w * (x - xm) * (y - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let stderr = if used > 2 {
        let rss: f64 = w
            .iter()
            .zip(&x)
            .zip(&y)
            .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (used - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        intercept,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    fn ou() -> ProcessModel {
        ProcessModel::new(
            LevyModel::symmetric_stable(1.5, 1.0).unwrap(),
            KernelSpec::OuExponential { lambda: 1.0 },
        )
        .unwrap()
    }

    fn kahan(xs: impl Iterator<Item = f64>) -> f64 {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for x in xs {
            let y = x - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
        }
        s
    }

    #[test]
    fn analytic_cos_mean_for_ou() {
        let f = TestFunction::new(Shape::Cos { theta: 1.0 }).unwrap();
        let got = expected_f(&ou(), &f).unwrap();
        // σ^β = σ_L^β / (λβ) = 2/3
        let want = (-2.0f64 / 3.0).exp();
        assert!((got - want).abs() < 1e-9, "{got}");
        assert!((got - 0.5134).abs() < 1e-4);
        let quad = expected_f(
            &ou(),
            &f.with_mean_mode(MeanMode::QuadratureVsStableDensity),
        )
        .unwrap();
        assert!((quad - got).abs() < 1e-4, "{quad} vs {got}");
    }

    #[test]
    fn sin_mean_is_zero() {
        let f = TestFunction::new(Shape::Sin { theta: 0.7 }).unwrap();
        assert_eq!(expected_f(&ou(), &f).unwrap(), 0.0);
        let q = expected_f(
            &ou(),
            &f.with_mean_mode(MeanMode::QuadratureVsStableDensity),
        )
        .unwrap();
        assert!(q.abs() < 1e-12);
    }

    #[test]
    fn analytic_mode_rejects_bumps() {
        let f = TestFunction::new(Shape::GaussBump {
            center: 0.3,
            width: 0.5,
        })
        .unwrap();
        assert!(matches!(
            expected_f(&ou(), &f),
            Err(Error::UnsupportedMode(_))
        ));
    }

    #[test]
    fn bump_monte_carlo_vs_quadrature() {
        let f = TestFunction::new(Shape::GaussBump {
            center: 0.3,
            width: 0.5,
        })
        .unwrap();
        let q = expected_f(
            &ou(),
            &f.with_mean_mode(MeanMode::QuadratureVsStableDensity),
        )
        .unwrap();
        let scale = marginal_scale(&ou(), 1e-10).unwrap();
        let (m, se) = f.monte_carlo_mean(1.5, scale, 100_000, 42);
        assert!((m - q).abs() < 4.0 * se, "{m} {q} {se}");
    }

    #[test]
    fn smoothed_indicator_quadrature_vs_monte_carlo() {
        let f = TestFunction::new(Shape::SmoothedIndicator { t: 0.4, h: 0.1 }).unwrap();
        let q = f
            .with_mean_mode(MeanMode::QuadratureVsStableDensity)
            .mean_under_stable(1.5, 0.8)
            .unwrap();
        let (m, se) = f.monte_carlo_mean(1.5, 0.8, 100_000, 7);
        assert!((m - q).abs() < 4.0 * se, "{m} {q} {se}");
    }

    #[test]
    fn sup_norm_bounds_hold_on_grid() {
        let shapes = [
            Shape::Cos { theta: 1.3 },
            Shape::SmoothedIndicator { t: 0.2, h: 0.1 },
            Shape::GaussBump {
                center: -1.0,
                width: 0.4,
            },
        ];
        for s in shapes {
            let f = TestFunction::new(s).unwrap();
            let (b0, b1, b2) = f.sup_norms();
            let h = 1e-4;
            let (mut m0, mut m1, mut m2) = (0.0f64, 0.0f64, 0.0f64);
            for i in -30_000..30_000 {
                let x = i as f64 * 1e-4;
                m0 = m0.max(f.eval(x).abs());
                m1 = m1.max(((f.eval(x + h) - f.eval(x - h)) / (2.0 * h)).abs());
                m2 = m2.max(((f.eval(x + h) - 2.0 * f.eval(x) + f.eval(x - h)) / (h * h)).abs());
            }
            assert!(m0 <= b0 * (1.0 + 1e-9));
            assert!(m1 <= b1 * (1.0 + 1e-6) && m1 > 0.99 * b1, "{s:?} {m1} {b1}");
            assert!(m2 <= b2 * (1.0 + 1e-3) && m2 > 0.99 * b2, "{s:?} {m2} {b2}");
        }
    }

    #[test]
    fn vn_basic_cases() {
        let f = TestFunction::new(Shape::Cos { theta: 1.0 }).unwrap();
        assert_eq!(compute_vn(&[0.0], &f, 0.5).unwrap(), 0.5);
        assert!(matches!(compute_vn(&[], &f, 0.5), Err(Error::Domain(_))));
        let zero = TestFunction::new(Shape::Cos { theta: 0.0 }).unwrap();
        assert_eq!(compute_vn(&[1.0, -3.0, 8.0], &zero, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn vn_matches_compensated_sum() {
        let f = TestFunction::new(Shape::Cos { theta: 1.0 }).unwrap();
        let mut s = RngStream::new(3, 1);
        let path: Vec<f64> = (0..5000).map(|_| 3.0 * s.std_normal()).collect();
        let got = compute_vn(&path, &f, 0.2).unwrap();
        let want = kahan(path.iter().map(|&x| f.eval(x) - 0.2)) / (path.len() as f64).sqrt();
        assert!((got - want).abs() <= 1e-12 * want.abs());
        // permutation invariance
        let mut rev = path.clone();
        rev.reverse();
        let back = compute_vn(&rev, &f, 0.2).unwrap();
        assert!((back - got).abs() <= 1e-12 * got.abs());
    }

    #[test]
    fn kolmogorov_trivial_cases() {
        assert_eq!(kolmogorov_distance(&[0.0], normal_cdf).unwrap(), 0.5);
        let r = 50;
        let xs: Vec<f64> = (0..r)
            .map(|i| normal_quantile((i as f64 + 0.5) / r as f64))
            .collect();
        assert!((kolmogorov_distance(&xs, normal_cdf).unwrap() - 0.5 / r as f64).abs() < 1e-12);
        assert!(kolmogorov_distance(&[], normal_cdf).is_err());
    }

    #[test]
    fn kolmogorov_invariant_under_monotone_maps() {
        let xs = [-1.3, -0.2, 0.1, 0.5, 2.2];
        let a = kolmogorov_distance(&xs, normal_cdf).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.exp()).collect();
        let b = kolmogorov_distance(&ys, |y| normal_cdf(y.ln())).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_gaussian_draws() {
        let mut s = RngStream::new(11, 0);
        let mut xs: Vec<f64> = (0..100_000).map(|_| s.std_normal()).collect();
        xs.sort_by(f64::total_cmp);
        let d = kolmogorov_distance(&xs, normal_cdf).unwrap();
        assert!(d < 1.95 / (xs.len() as f64).sqrt(), "{d}");
    }

    #[test]
    fn wasserstein_cases() {
        let r = 40;
        let grid: Vec<f64> = (0..r)
            .map(|i| normal_quantile((i as f64 + 0.5) / r as f64))
            .collect();
        assert_eq!(wasserstein1_distance(&grid, normal_quantile).unwrap(), 0.0);
        let shifted: Vec<f64> = grid.iter().map(|x| x + 0.37).collect();
        assert!((wasserstein1_distance(&shifted, normal_quantile).unwrap() - 0.37).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_vs_cdf_integral() {
        let mut s = RngStream::new(5, 5);
        let r = 2000;
        let mut xs: Vec<f64> = (0..r).map(|_| 0.2 + 1.1 * s.std_normal()).collect();
        xs.sort_by(f64::total_cmp);
        let w = wasserstein1_distance(&xs, normal_quantile).unwrap();
        // ∫|F̂ - Φ| by the trapezoid rule on a fine grid.
        let (a, b, m) = (-10.0, 10.0, 400_000);
        let h = (b - a) / m as f64;
        let mut k = 0;
        let mut acc = 0.0;
        for i in 0..=m {
            let x = a + i as f64 * h;
            while k < r && xs[k] <= x {
                k += 1;
            }
            let v = (k as f64 / r as f64 - normal_cdf(x)).abs();
            acc += if i == 0 || i == m { 0.5 * v } else { v };
        }
        let oracle = acc * h;
        assert!((w - oracle).abs() < 5.0 / r as f64, "{w} {oracle}");
        // Jensen lower bound.
        let mean = xs.iter().sum::<f64>() / r as f64;
        assert!(w >= mean.abs());
    }

    #[test]
    fn fit_rate_cases() {
        let ns: Vec<f64> = (6..=12).map(|k| 2f64.powi(k)).collect();
        let exact: Vec<f64> = ns.iter().map(|n| 3.0 * n.powf(-0.5)).collect();
        let fit = fit_rate(&ns, &exact, None).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12 && fit.stderr < 1e-12);
        let logged: Vec<f64> = ns.iter().map(|n| n.powf(-0.5) * n.ln()).collect();
        let s = fit_rate(&ns, &logged, None).unwrap().slope;
        assert!(s > -0.5 && s < -0.30, "{s}");
        let mut noisy = exact.clone();
        noisy[3] = 100.0;
        let mut w = vec![1.0; ns.len()];
        w[3] = 0.0;
        let fit = fit_rate(&ns, &noisy, Some(&w)).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(matches!(
            fit_rate(&ns, &[0.0; 7], None),
            Err(Error::Domain(_))
        ));
        assert!(fit_rate(&ns[..2], &exact[..2], None).is_err());
    }

    #[test]
    fn degenerate_variance_for_constant_f() {
        let src = PathSource::IidGaussian { n: 64 };
        let f = TestFunction::new(Shape::Cos { theta: 0.0 }).unwrap();
        let r = estimate_variance(&src, &f, 1.0, 5, 20, 1, 0);
        assert!(matches!(r, Err(Error::DegenerateVariance { .. })));
    }

    #[test]
    fn iid_variance_matches_closed_form() {
        // f = cos under N(0,1): Var = (1 + e^{-2})/2 - e^{-1}, no autocovariance.
        let src = PathSource::IidGaussian { n: 256 };
        let f = TestFunction::new(Shape::Cos { theta: 1.0 }).unwrap();
        let mean = (-0.5f64).exp();
        let est = estimate_variance(&src, &f, mean, 10, 400, 3, 0).unwrap();
        let want = 0.5 * (1.0 + (-2.0f64).exp()) - (-1.0f64).exp();
        assert!((est.per_lag[0] - want).abs() < 4.0 * est.per_lag_stderr[0]);
        assert!((est.vn_sq - want).abs() < 4.0 * est.vn_sq_stderr);
        for j in 1..=10 {
            assert!(
                est.per_lag[j].abs() < 4.5 * est.per_lag_stderr[j],
                "lag {j}"
            );
        }
    }

    #[test]
    fn bootstrap_errors_are_sensible() {
        let mut s = RngStream::new(8, 0);
        let xs: Vec<f64> = (0..2000).map(|_| s.std_normal()).collect();
        let [k, w] = distances_to_gaussian(&xs, 1, 99).unwrap();
        assert!(k.value < 0.05 && w.value < 0.1);
        assert!(k.mc_stderr > 0.0 && k.mc_stderr < 0.03);
        assert!(w.mc_stderr > 0.0 && w.mc_stderr < 0.05);
        let again = distances_to_gaussian(&xs, 1, 99).unwrap();
        assert_eq!(again[0], k);
    }
}
