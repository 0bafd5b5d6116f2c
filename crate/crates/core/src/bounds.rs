//! Rate tables and the deterministic bound ingredients: `A_n`, the
//! ρ-sum majorant of γ₁/γ₂ and the min-integral `∫∫ min(A_n^p, A_n^q) dλ`.
//! All unknown constants are normalised to 1.

use std::cell::Cell;
use std::fmt;

use num_rational::Ratio;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::quad::{self, QuadOptions};
use crate::stats::Metric;

pub type Rational = Ratio<i64>;

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// Nearest rational with denominator at most 10⁶, exact for the decimal
/// parameters that appear in configs (2.2 → 11/5).
pub fn rational_from_f64(x: f64) -> Result<Rational> {
    if !x.is_finite() || x.abs() > 1e12 {
        return Err(Error::Input(format!("{x} has no small rational form")));
    }
    // continued fraction convergents
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        let ai = a as i64;
        let h2 = ai.checked_mul(h1).and_then(|p| p.checked_add(h0));
        let k2 = ai.checked_mul(k1).and_then(|p| p.checked_add(k0));
        let (Some(h2), Some(k2)) = (h2, k2) else {
            break;
        };
        if k2 > 1_000_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - x).abs() <= 1e-12 * x.abs().max(1.0) {
            break;
        }
        let frac = v - a;
        if frac == 0.0 {
            break;
        }
        v = 1.0 / frac;
    }
    Ok(Rational::new(h1, k1))
}

/// `n^{exponent} · log(n)^{log_power}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateClass {
    pub exponent: Rational,
    pub log_power: u8,
}

impl RateClass {
    pub fn new(exponent: Rational, log_power: u8) -> Self {
        RateClass {
            exponent,
            log_power,
        }
    }

    pub fn exponent_f64(&self) -> f64 {
        *self.exponent.numer() as f64 / *self.exponent.denom() as f64
    }
}

impl fmt::Display for RateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n^({})", self.exponent)?;
        if self.log_power > 0 {
            write!(f, " log(n)")?;
            if self.log_power > 1 {
                write!(f, "^{}", self.log_power)?;
            }
        }
        Ok(())
    }
}

impl Serialize for RateClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("RateClass", 3)?;
        st.serialize_field("exponent", &self.exponent.to_string())?;
        st.serialize_field("exponent_value", &self.exponent_f64())?;
        st.serialize_field("log_power", &self.log_power)?;
        st.end()
    }
}

/// The Berry–Esseen rate for `v_n^{-1} V_n` given `αβ`.
pub fn theoretical_rate(alpha_beta: Rational, metric: Metric) -> Result<RateClass> {
    if alpha_beta <= r(2, 1) {
        return Err(Error::OutOfRegime(format!(
            "αβ = {alpha_beta} must exceed 2 for a Gaussian limit"
        )));
    }
    let half = r(-1, 2);
    let (boundary, divisor) = match metric {
        Metric::Wasserstein1 => (r(3, 1), 2),
        Metric::Kolmogorov => (r(4, 1), 4),
    };
    Ok(if alpha_beta > boundary {
        RateClass::new(half, 0)
    } else if alpha_beta == boundary {
        RateClass::new(half, 1)
    } else {
        RateClass::new((r(2, 1) - alpha_beta) / divisor, 0)
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CorollaryExample {
    Lfsn { h: Rational, beta: Rational },
    Fln { rho: Rational, epsilon: Rational },
    Arima { d: Rational, beta: Rational },
    Ou,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CorollaryRates {
    pub wasserstein: RateClass,
    pub kolmogorov: RateClass,
}

impl CorollaryRates {
    pub fn get(&self, metric: Metric) -> RateClass {
        match metric {
            Metric::Wasserstein1 => self.wasserstein,
            Metric::Kolmogorov => self.kolmogorov,
        }
    }
}

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// Rates of the four worked examples, each checked against
/// [`theoretical_rate`] under its memory exponent α.
pub fn corollary_rate(example: CorollaryExample) -> Result<CorollaryRates> {
    let one = r(1, 1);
    let two = r(2, 1);
    let half = r(-1, 2);
    match example {
        CorollaryExample::Lfsn { h, beta } => {
            if !(beta > one && beta < two) {
                return Err(domain(format!("LFSN needs 1 < β < 2, got β = {beta}")));
            }
            if !(h > r(0, 1) && h < one - one / beta) {
                return Err(domain(format!("LFSN needs 0 < H < 1 - 1/β, got H = {h}")));
            }
            let w = (one + beta * (h - one)) / 2;
            let out = CorollaryRates {
                wasserstein: RateClass::new(w, 0),
                kolmogorov: RateClass::new(w / 2, 0),
            };
            let alpha = one - h + one / beta;
            check_consistency(&out, alpha * beta, alpha * beta)?;
            Ok(out)
        }
        CorollaryExample::Fln { rho, epsilon } => {
            if !(rho > r(0, 1)) {
                return Err(domain(format!("FLN needs ρ > 0, got ρ = {rho}")));
            }
            if !(epsilon > r(0, 1)) {
                return Err(domain(format!("FLN needs ε > 0, got ε = {epsilon}")));
            }
            let w = if rho > r(1, 2) {
                RateClass::new(half, 0)
            } else {
                RateClass::new(-rho + epsilon, 0)
            };
            let k = if rho > one {
                RateClass::new(half, 0)
            } else {
                RateClass::new(-rho / 2 + epsilon, 0)
            };
            if w.exponent >= r(0, 1) || k.exponent >= r(0, 1) {
                return Err(domain(format!(
                    "ε = {epsilon} is too large for ρ = {rho}: the rate must decay"
                )));
            }
            let out = CorollaryRates {
                wasserstein: w,
                kolmogorov: k,
            };
            // The αβ table applies for every β < 2 with α = ρ + 1. The ε-regime is
            // attained at β = 2 - 2ε/(ρ+1) (d_W) and β = 2 - 4ε/(ρ+1) (d_K);
            // the n^{-1/2} regime in the limit β → 2.
            let alpha = rho + one;
            let ab_w = if rho > r(1, 2) {
                two * alpha
            } else {
                (two - two * epsilon / alpha) * alpha
            };
            let ab_k = if rho > one {
                two * alpha
            } else {
                (two - r(4, 1) * epsilon / alpha) * alpha
            };
            check_consistency(&out, ab_w, ab_k)?;
            Ok(out)
        }
        CorollaryExample::Arima { d, beta } => {
            if !(beta > r(0, 1) && beta < two) {
                return Err(domain(format!("ARIMA needs 0 < β < 2, got β = {beta}")));
            }
            if d.is_integer() {
                return Err(domain(format!("ARIMA needs non-integer d, got d = {d}")));
            }
            if !(d < one - two / beta) {
                return Err(domain(format!("ARIMA needs d < 1 - 2/β, got d = {d}")));
            }
            let three = r(3, 1);
            let four = r(4, 1);
            let mid = one - (one - d) * beta / 2;
            let w = if d < one - three / beta {
                RateClass::new(half, 0)
            } else if d == one - three / beta {
                RateClass::new(half, 1)
            } else {
                RateClass::new(mid, 0)
            };
            let k = if d < one - four / beta {
                RateClass::new(half, 0)
            } else if d == one - four / beta {
                RateClass::new(half, 1)
            } else {
                RateClass::new(mid / 2, 0)
            };
            let out = CorollaryRates {
                wasserstein: w,
                kolmogorov: k,
            };
            let ab = (one - d) * beta;
            check_consistency(&out, ab, ab)?;
            Ok(out)
        }
        CorollaryExample::Ou => {
            let out = CorollaryRates {
                wasserstein: RateClass::new(half, 0),
                kolmogorov: RateClass::new(half, 0),
            };
            // α can be taken arbitrarily large.
            check_consistency(&out, r(5, 1), r(5, 1))?;
            Ok(out)
        }
    }
}

fn check_consistency(out: &CorollaryRates, ab_w: Rational, ab_k: Rational) -> Result<()> {
    let w = theoretical_rate(ab_w, Metric::Wasserstein1)?;
    let k = theoretical_rate(ab_k, Metric::Kolmogorov)?;
    assert_eq!(
        out.wasserstein, w,
        "example rates disagree with the αβ table (d_W)"
    );
    assert_eq!(
        out.kolmogorov, k,
        "example rates disagree with the αβ table (d_K)"
    );
    Ok(())
}

/// `n^{-1/2} Σ_{t=1}^n min(1, |x g(t - s)|)`.
pub fn a_n(x: f64, s: f64, kernel: &KernelSpec, n: usize) -> f64 {
    let sum: f64 = (1..=n)
        .map(|t| (x * kernel.eval(t as f64 - s)).abs().min(1.0))
        .sum();
    sum / (n as f64).sqrt()
}

/// `n^{-1/2} Σ_t min(1,|x₁g(t-s₁)|) min(1,|x₂g(t-s₂)|)`.
pub fn a_n2(z1: (f64, f64), z2: (f64, f64), kernel: &KernelSpec, n: usize) -> f64 {
    let sum: f64 = (1..=n)
        .map(|t| {
            let t = t as f64;
            (z1.0 * kernel.eval(t - z1.1)).abs().min(1.0)
                * (z2.0 * kernel.eval(t - z2.1)).abs().min(1.0)
        })
        .sum();
    sum / (n as f64).sqrt()
}

/// Intensity `ds · C_κ |x|^{-1-β} dx` on the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct IntensityMeasure {
    pub beta: f64,
    #[serde(default = "one")]
    pub c_kappa: f64,
}

fn one() -> f64 {
    1.0
}

impl IntensityMeasure {
    pub fn new(beta: f64) -> Self {
        IntensityMeasure { beta, c_kappa: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinIntegral {
    pub value: f64,
    pub abs_error: f64,
    /// Contributions from `|x| < 1`, `1 ≤ |x| ≤ n^α` and `|x| > n^α`.
    pub parts: [f64; 3],
    /// Set when an inner quadrature missed its tolerance.
    pub inner_inexact: bool,
}

/// Inner integral `J(x) = ∫_R min(A_n(x,s)^p, A_n(x,s)^q) ds` for one `x > 0`.
struct Inner<'a> {
    kernel: &'a KernelSpec,
    n: usize,
    p: f64,
    q: f64,
    x: f64,
    inv_sqrt_n: f64,
}

impl Inner<'_> {
    fn h(&self, u: f64) -> f64 {
        (self.x * self.kernel.eval(u)).abs().min(1.0)
    }

    fn f(&self, a: f64) -> f64 {
        if a <= 0.0 {
            0.0
        } else if a >= 1.0 {
            a.powf(self.p)
        } else {
            a.powf(self.q)
        }
    }

    /// `Σ_c F(A(s0 + c + φ))` over `cells` unit cells starting at integer `s0`.
    ///
    /// With `u = t - s = (j + 1 - φ)` and `j = t - s0 - c - 1`, one prefix
    /// sum of `h(b + i + 1 - φ)` serves every cell.
    fn block(&self, s0: f64, cells: usize, phi: f64, buf: &mut Vec<f64>) -> f64 {
        let n = self.n as f64;
        let c_f = cells as f64;
        // j ranges over [max(0, -s0-c), n - s0 - c - 1] for cell c.
        let (base, count, far_left) = if s0 + c_f <= 1.0 {
            (-s0 - c_f + 1.0, self.n + cells - 1, true)
        } else {
            (0.0, (n - s0).max(0.0) as usize, false)
        };
        buf.clear();
        buf.push(0.0);
        let mut acc = 0.0;
        for i in 0..count {
            acc += self.h(base + i as f64 + 1.0 - phi);
            buf.push(acc);
        }
        let mut total = 0.0;
        for c in 0..cells {
            let (lo, hi) = if far_left {
                (cells - 1 - c, self.n + cells - 2 - c)
            } else {
                let s0i = s0 as i64;
                let lo = (-s0i - c as i64).max(0);
                let hi = self.n as i64 - s0i - c as i64 - 1;
                if hi < lo {
                    continue;
                }
                (lo as usize, hi as usize)
            };
            let sum = buf[hi + 1] - buf[lo];
            total += self.f(sum * self.inv_sqrt_n);
        }
        total
    }

    fn a_direct(&self, s: f64) -> f64 {
        let sum: f64 = (1..=self.n).map(|t| self.h(t as f64 - s)).sum();
        sum * self.inv_sqrt_n
    }

    fn integrate(&self, opts: &QuadOptions, inexact: &Cell<bool>) -> f64 {
        let level = 1.0 / self.x;
        let t0 = self.kernel.monotone_tail_start();
        let k1 = t0.ceil() + 1.0;
        let u_star = self.kernel.tail_level_crossing(level).filter(|u| *u > t0);
        // Phases at which some cell meets a saturation boundary.
        let mut phases = vec![0.0, 1.0];
        let mut add_phase = |u: f64| {
            let ph = 1.0 - u.fract();
            if ph > 1e-12 && ph < 1.0 - 1e-12 {
                phases.push(ph);
            }
        };
        if let Some(u) = u_star {
            add_phase(u);
        }
        if let Some(u) = near_crossing(self.kernel, level) {
            add_phase(u);
        }
        phases.sort_by(f64::total_cmp);
        phases.dedup();

        let mut buf = Vec::new();
        let mut run = |s0: f64, cells: usize| -> f64 {
            if cells == 0 {
                return 0.0;
            }
            match quad::integrate_points(|phi| self.block(s0, cells, phi, &mut buf), &phases, opts)
            {
                Ok(e) => e.value,
                Err(Error::Accuracy { estimate, .. }) => {
                    inexact.set(true);
                    estimate
                }
                Err(_) => {
                    inexact.set(true);
                    f64::NAN
                }
            }
        };

        // s ∈ (-k1, n]: the kernel's non-monotone start is inside.
        let mut total = run(-k1, self.n + k1 as usize);
        let (ra, rb) = match u_star {
            Some(u) => (k1.max((u - self.n as f64).floor()), k1.max(u.ceil())),
            None => (k1, k1),
        };
        // r = -s ∈ [k1, ra]: every term saturated.
        total += (self.n as f64).powf(self.p / 2.0) * (ra - k1);
        // r ∈ [ra, rb]: partially saturated window.
        total += run(-rb, (rb - ra) as usize);
        // r ≥ rb: nothing saturated, smooth in r.
        let tail = quad::integrate_tail(|r| self.f(self.a_direct(-r)), rb, opts);
        total += match tail {
            Ok(e) => e.value,
            Err(Error::Accuracy { estimate, .. }) => {
                inexact.set(true);
                estimate
            }
            Err(_) => {
                inexact.set(true);
                f64::NAN
            }
        };
        total
    }
}

/// Crossing of `|g| = level` inside `(0, 1)` for kernels monotone there.
fn near_crossing(kernel: &KernelSpec, level: f64) -> Option<f64> {
    match kernel {
        KernelSpec::PowerLaw { .. }
        | KernelSpec::LfsnIncrement { .. }
        | KernelSpec::FractionalLevyIncrement { .. } => {
            let f = |u: f64| kernel.eval(u).abs() - level;
            let (mut lo, mut hi) = (1e-300, 1.0 - 1e-15);
            let (flo, fhi) = (f(lo), f(hi));
            if flo.signum() == fhi.signum() || flo == 0.0 || fhi == 0.0 {
                return None;
            }
            for _ in 0..200 {
                let mid = if hi / lo > 4.0 {
                    (lo * hi).sqrt()
                } else {
                    0.5 * (lo + hi)
                };
                if mid <= lo || mid >= hi {
                    break;
                }
                if f(mid).signum() == flo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        }
        _ => None,
    }
}

/// `∫∫ min(A_n^p, A_n^q) C_κ |x|^{-1-β} ds dx`, split at `|x| = 1` and
/// `|x| = n^α` and integrated over `log |x|`.
pub fn min_integral(
    p: f64,
    q: f64,
    n: usize,
    kernel: &KernelSpec,
    measure: &IntensityMeasure,
    tol: f64,
) -> Result<MinIntegral> {
    if !(0.0..=2.0).contains(&p) || !(q > 2.0) {
        return Err(Error::ParameterDomain(format!(
            "need p ∈ [0,2] and q > 2, got p={p}, q={q}"
        )));
    }
    if n == 0 {
        return Err(Error::ParameterDomain("n must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::ParameterDomain("tolerance must be > 0".into()));
    }
    kernel.validate()?;
    let beta = measure.beta;
    let alpha = kernel.tail_exponent().unwrap_or(2.0 / beta + 1.0);
    let inner_opts = QuadOptions {
        rel_tol: (tol * 0.1).max(1e-12),
        abs_tol: 1e-300,
        max_evals: 20_000,
    };
    let outer_opts = QuadOptions {
        rel_tol: tol,
        abs_tol: 1e-300,
        max_evals: 2_000,
    };
    let inexact = Cell::new(false);
    // x^{-β} J(x) dw with x = e^w
    let g = |w: f64| -> f64 {
        let x = w.exp();
        if !x.is_finite() || x == 0.0 {
            return 0.0;
        }
        let inner = Inner {
            kernel,
            n,
            p,
            q,
            x,
            inv_sqrt_n: 1.0 / (n as f64).sqrt(),
        };
        let j = inner.integrate(&inner_opts, &inexact);
        x.powf(-beta) * j
    };
    let w_split = alpha * (n as f64).ln();
    let mut outer_err = 0.0;
    let mut take = |r: Result<quad::Estimate>| -> Result<f64> {
        match r {
            Ok(e) => {
                outer_err += e.abs_error;
                Ok(e.value)
            }
            Err(Error::Accuracy {
                estimate,
                error_bound,
                ..
            }) => {
                outer_err += error_bound;
                Ok(estimate)
            }
            Err(e) => Err(e),
        }
    };
    // w ∈ (-∞, 0] as v = 1 - w ∈ [1, ∞)
    let i1 = take(quad::integrate_tail(|v| g(1.0 - v), 1.0, &outer_opts))?;
    let pts: Vec<f64> = (0..=8).map(|i| w_split * i as f64 / 8.0).collect();
    let i2 = if w_split > 0.0 {
        take(quad::integrate_points(g, &pts, &outer_opts))?
    } else {
        0.0
    };
    // w ∈ [w_split, ∞) as v = w - w_split + 1
    let i3 = take(quad::integrate_tail(
        |v| g(v - 1.0 + w_split),
        1.0,
        &outer_opts,
    ))?;
    let c = 2.0 * measure.c_kappa;
    let parts = [c * i1, c * i2, c * i3];
    let value = parts.iter().sum::<f64>();
    if !value.is_finite() {
        return Err(Error::accuracy("min-integral", value, f64::INFINITY));
    }
    Ok(MinIntegral {
        value,
        abs_error: c * outer_err,
        parts,
        inner_inexact: inexact.get(),
    })
}

/// Rate of the min-integral: `n^{1-q/2}` for `αβ > q`,
/// with a log at `αβ = q`, and `n^{(2-αβ)/2}` for `2 < αβ < q`.
pub fn min_integral_rate(alpha_beta: Rational, q: Rational) -> Result<RateClass> {
    if alpha_beta <= r(2, 1) {
        return Err(Error::OutOfRegime(format!(
            "αβ = {alpha_beta} must exceed 2"
        )));
    }
    let one = r(1, 1);
    Ok(if alpha_beta > q {
        RateClass::new(one - q / 2, 0)
    } else if alpha_beta == q {
        RateClass::new(one - q / 2, 1)
    } else {
        RateClass::new((r(2, 1) - alpha_beta) / 2, 0)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Gamma12 {
    pub gamma1_sq: f64,
    pub gamma2_sq: f64,
}

/// `n^{-2} Σ_{t1..t4} ρ_{t1-t3} ρ_{t2-t4} ρ_{t3-t4}` in `O(n²)` with
/// `S(t) = Σ_u ρ_{u-t}` and `ρ_{-k} = ρ_k`. `rho_table[k] = ρ_k`.
pub fn gamma12_proxy(n: usize, rho_table: &[f64]) -> Result<Gamma12> {
    if n == 0 {
        return Err(Error::ParameterDomain("n must be >= 1".into()));
    }
    if rho_table.len() < n {
        return Err(Error::Input(format!(
            "ρ table covers lags 0..{} but n = {n} needs lags up to {}",
            rho_table.len().saturating_sub(1),
            n - 1
        )));
    }
    let rho = &rho_table[..n];
    // prefix[k] = ρ_0 + … + ρ_{k-1}
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + rho[k];
    }
    // S(t) for t = 1..n: lags 0..t-1 on the left, 1..n-t on the right.
    let s: Vec<f64> = (1..=n)
        .map(|t| prefix[t] + (prefix[n - t + 1] - prefix[1]))
        .collect();
    let mut total = 0.0;
    for (a, sa) in s.iter().enumerate() {
        let mut row = 0.0;
        for (b, sb) in s.iter().enumerate() {
            row += rho[a.abs_diff(b)] * sb;
        }
        total += sa * row;
    }
    let v = total / (n as f64 * n as f64);
    Ok(Gamma12 {
        gamma1_sq: v,
        gamma2_sq: v,
    })
}
