//! Kernel functions `g`, stable fractional ARIMA coefficients and the
//! overlap integrals `ρ_k = ∫ |g(x) g(x+k)|^{β/2} dx`.
//!
//! Every kernel vanishes on `(-∞, 0]`. The overlap integrals are all of the
//! form `∫_from^∞ Π_i |g(y + shift_i)|^{power_i} dy` and share one quadrature
//! driver, [`overlap_integral`], which splits at the kernels' kinks, applies
//! an algebraic substitution next to each singular point and maps the tail
//! through `y = T/u`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, Estimate, QuadOptions};

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `K x^γ` on (0,1), `K x^{-α}` on [1,∞): the extremal kernel of the
    /// growth condition.
    PowerLaw {
        gamma: f64,
        alpha: f64,
        #[serde(default = "one")]
        k: f64,
    },
    /// Increment kernel of linear fractional stable motion:
    /// `(x)_+^{H-1/β} - (x-1)_+^{H-1/β}`.
    LfsnIncrement {
        h: f64,
        beta: f64,
    },
    /// `(x)_+^{-ρ} - (x-1)_+^{-ρ}`.
    FractionalLevyIncrement {
        rho: f64,
    },
    OuExponential {
        lambda: f64,
    },
    /// `b_{⌊x⌋}` on `[0, len)`.
    DiscreteMa {
        b: Vec<f64>,
    },
}

// (x)_+^a with the convention 0 for x <= 0
#[inline]
fn pos_pow(x: f64, a: f64) -> f64 {
    if x > 0.0 {
        x.powf(a)
    } else {
        0.0
    }
}

// x_+^a - (x-1)_+^a, without cancellation for large x.
fn power_increment(x: f64, a: f64) -> f64 {
    if x > 2.0 {
        -x.powf(a) * (a * (-1.0 / x).ln_1p()).exp_m1()
    } else {
        pos_pow(x, a) - pos_pow(x - 1.0, a)
    }
}

impl KernelSpec {
    pub fn zero() -> Self {
        KernelSpec::PowerLaw {
            gamma: 0.0,
            alpha: 1.0,
            k: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ParameterDomain(m));
        match self {
            KernelSpec::PowerLaw { gamma, alpha, k } => {
                if !(*alpha > 0.0) || !alpha.is_finite() {
                    return bad(format!("power-law decay {alpha} must be > 0"));
                }
                if !gamma.is_finite() || !(*k >= 0.0) || !k.is_finite() {
                    return bad("power-law gamma must be finite and K >= 0".into());
                }
            }
            KernelSpec::LfsnIncrement { h, beta } => {
                if !(*h > 0.0 && *h < 1.0) {
                    return bad(format!("self-similarity {h} not in (0, 1)"));
                }
                if !(*beta > 0.0 && *beta < 2.0) {
                    return bad(format!("stable index {beta} not in (0, 2)"));
                }
            }
            KernelSpec::FractionalLevyIncrement { rho } => {
                if !(*rho > 0.0) || !rho.is_finite() {
                    return bad(format!("decay {rho} must be > 0"));
                }
            }
            KernelSpec::OuExponential { lambda } => {
                if !(*lambda > 0.0) || !lambda.is_finite() {
                    return bad(format!("OU rate {lambda} must be > 0"));
                }
            }
            KernelSpec::DiscreteMa { b } => {
                if b.iter().any(|v| !v.is_finite()) {
                    return bad("moving-average coefficients must be finite".into());
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            KernelSpec::PowerLaw { gamma, alpha, k } => {
                if x < 1.0 {
                    k * x.powf(*gamma)
                } else {
                    k * x.powf(-alpha)
                }
            }
            KernelSpec::LfsnIncrement { h, beta } => power_increment(x, h - 1.0 / beta),
            KernelSpec::FractionalLevyIncrement { rho } => power_increment(x, -rho),
            KernelSpec::OuExponential { lambda } => (-lambda * x).exp(),
            KernelSpec::DiscreteMa { b } => {
                let j = x.floor();
                if j < b.len() as f64 {
                    b[j as usize]
                } else {
                    0.0
                }
            }
        }
    }

    /// `g(loc + delta)` for `delta > 0`, exact in `delta` at the singular
    /// point `loc = 1` of the increment kernels.
    pub fn eval_near(&self, loc: f64, delta: f64) -> f64 {
        let a = match self {
            KernelSpec::LfsnIncrement { h, beta } => h - 1.0 / beta,
            KernelSpec::FractionalLevyIncrement { rho } => -rho,
            _ => return self.eval(loc + delta),
        };
        if loc == 1.0 && delta > 0.0 && delta < 1.0 {
            (1.0 + delta).powf(a) - delta.powf(a)
        } else {
            self.eval(loc + delta)
        }
    }

    /// Polynomial decay exponent α of `|g|` at infinity, if the kernel has one.
    /// `None` for exponentially decaying or finitely supported kernels.
    pub fn tail_exponent(&self) -> Option<f64> {
        match self {
            KernelSpec::PowerLaw { alpha, .. } => Some(*alpha),
            KernelSpec::LfsnIncrement { h, beta } => Some(1.0 - h + 1.0 / beta),
            KernelSpec::FractionalLevyIncrement { rho } => Some(rho + 1.0),
            KernelSpec::OuExponential { .. } | KernelSpec::DiscreteMa { .. } => None,
        }
    }

    /// Right-sided singular points `(location, e)` where `|g(x)| ~ c (x - location)^e`, `e < 0`.
    pub fn singular_points(&self) -> Vec<(f64, f64)> {
        match self {
            KernelSpec::PowerLaw { gamma, k, .. } if *gamma < 0.0 && *k > 0.0 => {
                vec![(0.0, *gamma)]
            }
            KernelSpec::LfsnIncrement { h, beta } if h - 1.0 / beta < 0.0 => {
                let a = h - 1.0 / beta;
                vec![(0.0, a), (1.0, a)]
            }
            KernelSpec::FractionalLevyIncrement { rho } => vec![(0.0, -rho), (1.0, -rho)],
            _ => vec![],
        }
    }

    /// Points where `g` is not smooth (excluding 0).
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            KernelSpec::PowerLaw { .. }
            | KernelSpec::LfsnIncrement { .. }
            | KernelSpec::FractionalLevyIncrement { .. } => vec![1.0],
            KernelSpec::OuExponential { .. } => vec![],
            KernelSpec::DiscreteMa { b } => (1..=b.len()).map(|j| j as f64).collect(),
        }
    }

    /// Start of the region on which `|g|` is non-increasing.
    pub fn monotone_tail_start(&self) -> f64 {
        match self {
            KernelSpec::OuExponential { .. } => 0.0,
            KernelSpec::DiscreteMa { b } => b.len() as f64,
            _ => 1.0,
        }
    }

    /// The largest `u` with `|g(u)| >= level` on the monotone tail, if any.
    pub fn tail_level_crossing(&self, level: f64) -> Option<f64> {
        if !(level > 0.0) {
            return None;
        }
        let start = self.monotone_tail_start();
        match self {
            KernelSpec::PowerLaw { alpha, k, .. } => {
                if *k < level {
                    return None;
                }
                Some((k / level).powf(1.0 / alpha))
            }
            KernelSpec::OuExponential { lambda } => {
                if level >= 1.0 {
                    return None;
                }
                Some(-level.ln() / lambda)
            }
            KernelSpec::DiscreteMa { .. } => None,
            _ => {
                // |g| decreases from +∞ at start⁺ to 0; bracket then bisect.
                let mut lo = start;
                let mut hi = start + 1.0;
                while self.eval(hi).abs() >= level {
                    lo = hi;
                    hi = start + 2.0 * (hi - start);
                    if hi > 1e300 {
                        return Some(hi);
                    }
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.eval(mid).abs() >= level {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(lo)
            }
        }
    }

    /// `∫_0^∞ |g|^β`.
    pub fn lp_norm_pow(&self, beta: f64, tol: f64) -> Result<Estimate> {
        overlap_integral(self, &[(0.0, beta)], 0.0, None, tol)
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: f64) -> f64 {
    spec.eval(x)
}

/// `∫_from^∞ Π_i |g(y + shift_i)|^{power_i} dy` with `shift_i >= 0`.
///
/// `tail_cutoff` is where the `y = T/u` tail mapping starts (default chosen
/// from the shifts). Non-negative integrand, so `tol` is relative to the total.
pub fn overlap_integral(
    spec: &KernelSpec,
    factors: &[(f64, f64)],
    from: f64,
    tail_cutoff: Option<f64>,
    tol: f64,
) -> Result<Estimate> {
    if !(tol > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "tolerance {tol} must be > 0"
        )));
    }
    if factors.iter().any(|(s, _)| *s < 0.0) {
        return Err(Error::Input("overlap shifts must be non-negative".into()));
    }
    let from = from.max(0.0);
    if let KernelSpec::DiscreteMa { b } = spec {
        return Ok(step_overlap(b, factors, from));
    }
    if let KernelSpec::OuExponential { lambda } = spec {
        // Π e^{-λ p_i (y + s_i)} integrates in closed form; evaluating it in
        // the log domain keeps relative precision where g itself underflows.
        let total: f64 = factors.iter().map(|f| f.1).sum();
        if total > 0.0 && *lambda > 0.0 {
            let exponent: f64 = factors.iter().map(|&(s, p)| p * (from + s)).sum();
            return Ok(Estimate {
                value: (-lambda * exponent).exp() / (lambda * total),
                abs_error: 0.0,
                evals: 0,
            });
        }
    }
    if let KernelSpec::PowerLaw { k, .. } = spec {
        if *k == 0.0 {
            return Ok(Estimate::default());
        }
    }
    let sing_locs: Vec<f64> = spec.singular_points().iter().map(|p| p.0).collect();
    // Product at y = a + δ. Factors whose argument starts at a singular
    // point are evaluated from the offset δ itself, which keeps full
    // relative precision as δ → 0.
    let integrand = |a: f64, delta: f64| {
        let mut v = 1.0;
        for &(shift, power) in factors {
            let base = a + shift;
            let g = match sing_locs.iter().find(|l| (*l - base).abs() < 1e-12) {
                Some(&loc) => spec.eval_near(loc, delta),
                None => spec.eval(base + delta),
            }
            .abs();
            if g == 0.0 {
                return 0.0;
            }
            v *= g.powf(power);
        }
        v
    };

    // Singular points in y with the summed local exponent of the product.
    let mut singular: Vec<(f64, f64)> = Vec::new();
    for &(shift, power) in factors {
        for (loc, e) in spec.singular_points() {
            let y = loc - shift;
            if y >= from - 1e-12 {
                let y = y.max(from);
                match singular.iter_mut().find(|(p, _)| (*p - y).abs() < 1e-12) {
                    Some(entry) => entry.1 += power * e,
                    None => singular.push((y, power * e)),
                }
            }
        }
    }
    let max_shift = factors.iter().map(|f| f.0).fold(0.0, f64::max);
    let cutoff = tail_cutoff
        .unwrap_or_else(|| (4.0 * (max_shift + 1.0)).max(16.0))
        .max(from + 1.0);

    let mut pts = vec![from];
    for &(shift, _) in factors {
        for kink in spec.kinks() {
            pts.push(kink - shift);
        }
        pts.push(-shift); // g switches on
    }
    for &(y, _) in &singular {
        pts.push(y);
    }
    // Geometric grid out to the tail cutoff keeps panels aligned with the decay.
    let mut g = (from + 1.0).max(2.0);
    while g < cutoff {
        pts.push(g);
        g *= 2.0;
    }
    pts.push(cutoff);
    pts.retain(|p| *p >= from && *p <= cutoff && p.is_finite());
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    // Every panel is mapped onto a unit interval of one global parameter so
    // that a single adaptive pass distributes the node budget and the
    // tolerance is relative to the whole integral.
    enum Map {
        Plain,
        Singular(f64),
        Tail,
    }
    let mut panels: Vec<(f64, f64, Map)> = pts
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let exponent = singular
                .iter()
                .find(|(p, _)| (*p - a).abs() < 1e-12)
                .map(|(_, e)| *e)
                .unwrap_or(0.0);
            let map = if exponent < 0.0 {
                Map::Singular(1.0 / (exponent + 1.0))
            } else {
                Map::Plain
            };
            (a, b, map)
        })
        .collect();
    panels.push((cutoff, f64::INFINITY, Map::Tail));
    let mapped = |tau: f64| -> f64 {
        let i = (tau.floor() as usize).min(panels.len() - 1);
        let u = tau - i as f64;
        let (a, b, map) = &panels[i];
        let v = match map {
            Map::Plain => integrand(*a, (b - a) * u) * (b - a),
            Map::Singular(c) => {
                if u <= 0.0 {
                    return 0.0;
                }
                integrand(*a, (b - a) * u.powf(*c)) * (b - a) * c * u.powf(c - 1.0)
            }
            Map::Tail => {
                if u <= 0.0 {
                    return 0.0;
                }
                integrand(a / u, 0.0) * a / (u * u)
            }
        };
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let breaks: Vec<f64> = (0..=panels.len()).map(|i| i as f64).collect();
    let opts = QuadOptions {
        rel_tol: tol,
        abs_tol: 0.0,
        max_evals: 100_000,
    };
    quad::integrate_points(mapped, &breaks, &opts).map_err(|e| e.in_context("overlap integral"))
}

// Exact integral of a product of step functions.
fn step_overlap(b: &[f64], factors: &[(f64, f64)], from: f64) -> Estimate {
    let len = b.len() as f64;
    let end = factors
        .iter()
        .map(|(s, _)| len - s)
        .fold(f64::INFINITY, f64::min);
    if end <= from {
        return Estimate::default();
    }
    let mut pts = vec![from, end];
    for &(shift, _) in factors {
        for j in 0..=b.len() {
            let p = j as f64 - shift;
            if p > from && p < end {
                pts.push(p);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let g = KernelSpec::DiscreteMa { b: b.to_vec() };
    let value = pts
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let v: f64 = factors
                .iter()
                .map(|&(s, p)| {
                    let gv = g.eval(mid + s).abs();
                    if gv == 0.0 {
                        0.0
                    } else {
                        gv.powf(p)
                    }
                })
                .product();
            v * (w[1] - w[0])
        })
        .sum();
    Estimate {
        value,
        abs_error: 0.0,
        evals: pts.len(),
    }
}

/// `ρ_k = ∫ |g(x) g(x+k)|^{β/2} dx`.
pub fn rho_k(spec: &KernelSpec, beta: f64, k: u64, tol: f64) -> Result<f64> {
    rho_k_estimate(spec, beta, k, tol, None).map(|e| e.value)
}

pub fn rho_k_estimate(
    spec: &KernelSpec,
    beta: f64,
    k: u64,
    tol: f64,
    tail_cutoff: Option<f64>,
) -> Result<Estimate> {
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::ParameterDomain(format!(
            "stable index {beta} not in (0, 2]"
        )));
    }
    overlap_integral(
        spec,
        &[(0.0, beta / 2.0), (k as f64, beta / 2.0)],
        0.0,
        tail_cutoff,
        tol,
    )
    .map_err(|e| e.in_context("rho_k"))
}

/// `∫ (Π_{i=1}^4 |g(t_i - s)|)^{β/4} ds`.
pub fn product4_integral(spec: &KernelSpec, beta: f64, t: [f64; 4], tol: f64) -> Result<f64> {
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("times must be finite".into()));
    }
    // With y = min t - s, each factor is g(y + t_i - min t).
    let t_min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let factors: Vec<(f64, f64)> = t.iter().map(|ti| (ti - t_min, beta / 4.0)).collect();
    overlap_integral(spec, &factors, 0.0, None, tol)
        .map(|e| e.value)
        .map_err(|e| e.in_context("product4_integral"))
}

/// Coefficients `b_0..b_{n_max}` of `Θ(z) Φ(z)^{-1} (1 - z)^{-d}` with
/// `Φ(z) = 1 - φ_1 z - … - φ_p z^p` and `Θ(z) = 1 + θ_1 z + … + θ_q z^q`.
pub fn arima_coefficients(phi: &[f64], theta: &[f64], d: f64, n_max: usize) -> Result<Vec<f64>> {
    if !d.is_finite() || phi.iter().chain(theta).any(|v| !v.is_finite()) {
        return Err(Error::ParameterDomain(
            "ARIMA parameters must be finite".into(),
        ));
    }
    check_ar_stationary(phi)?;
    let len = n_max + 1;
    // (1 - z)^{-d}: ψ_0 = 1, ψ_j = ψ_{j-1} (j - 1 + d) / j
    let mut psi = vec![0.0; len];
    psi[0] = 1.0;
    for j in 1..len {
        psi[j] = psi[j - 1] * (j as f64 - 1.0 + d) / j as f64;
    }
    // Θ(z)·ψ(z)
    let mut c = psi.clone();
    for (i, th) in theta.iter().enumerate() {
        let lag = i + 1;
        for j in lag..len {
            c[j] += th * psi[j - lag];
        }
    }
    // Divide by Φ: b_j = c_j + Σ_i φ_i b_{j-i}
    let mut b = vec![0.0; len];
    for j in 0..len {
        let mut v = c[j];
        for (i, ph) in phi.iter().enumerate() {
            let lag = i + 1;
            if lag <= j {
                v += ph * b[j - lag];
            }
        }
        b[j] = v;
    }
    Ok(b)
}

/// Fails unless every root of `Φ` lies strictly outside the closed unit disk.
pub fn check_ar_stationary(phi: &[f64]) -> Result<()> {
    let p = phi
        .iter()
        .rposition(|v| *v != 0.0)
        .map(|i| i + 1)
        .unwrap_or(0);
    if p == 0 {
        return Ok(());
    }
    // Roots of Φ are reciprocals of the companion eigenvalues of
    // λ^p - φ_1 λ^{p-1} - … - φ_p.
    let mut m = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        m[(0, j)] = phi[j];
    }
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    let eig = m.complex_eigenvalues();
    let worst = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if worst >= 1.0 - 1e-12 {
        return Err(Error::Stationarity(format!(
            "AR polynomial has a root of modulus {:.6} inside the closed unit disk",
            1.0 / worst
        )));
    }
    Ok(())
}
