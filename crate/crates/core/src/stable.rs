//! Distribution and density functions of the symmetric stable law with
//! characteristic function `exp(-scale^β |θ|^β)`.
//!
//! The primary route is Zolotarev's integral representation of the inverted
//! characteristic function (a finite, non-oscillatory integral over
//! `θ ∈ (0, π/2)`), with the power series around the origin for `β > 1` and
//! closed forms at `β ∈ {1, 2}`. Direct Fourier inversion is kept as a second
//! route: it serves as the fallback near `β = 1`, where Zolotarev's
//! exponents blow up, and as an independent cross-check.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::quad::{self, QuadOptions};
use crate::special::{gamma_fn, normal_cdf};

// Purely relative: Zolotarev integrals can be far below any fixed floor.
const LAW_OPTS: QuadOptions = QuadOptions {
    rel_tol: 1e-11,
    abs_tol: 0.0,
    max_evals: 20_000,
};

const FOURIER_OPTS: QuadOptions = QuadOptions {
    rel_tol: 1e-11,
    abs_tol: 1e-15,
    max_evals: 2_000_000,
};

/// Below this distance from 1 the Zolotarev form loses precision.
const NEAR_CAUCHY: f64 = 0.02;

pub fn cdf(x: f64, beta: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        return if x >= 0.0 { 1.0 } else { 0.0 };
    }
    let y = x / scale;
    if y == 0.0 {
        return 0.5;
    }
    if y < 0.0 {
        return 1.0 - cdf_unit(-y, beta);
    }
    cdf_unit(y, beta)
}

pub fn pdf(x: f64, beta: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        return if x == 0.0 { f64::INFINITY } else { 0.0 };
    }
    pdf_unit((x / scale).abs(), beta) / scale
}

fn cdf_unit(y: f64, beta: f64) -> f64 {
    debug_assert!(y > 0.0);
    if beta == 2.0 {
        return normal_cdf(y / std::f64::consts::SQRT_2);
    }
    if beta == 1.0 {
        return 0.5 + y.atan() / PI;
    }
    if (beta - 1.0).abs() < NEAR_CAUCHY {
        return cdf_fourier(y, beta, 1.0);
    }
    if beta > 1.0 && y < 1.0 {
        return cdf_series(y, beta);
    }
    zolotarev(y, beta, false)
}

fn pdf_unit(y: f64, beta: f64) -> f64 {
    if beta == 2.0 {
        return (-y * y / 4.0).exp() / (2.0 * PI.sqrt());
    }
    if beta == 1.0 {
        return 1.0 / (PI * (1.0 + y * y));
    }
    if y == 0.0 {
        return gamma_fn(1.0 + 1.0 / beta) / PI;
    }
    if (beta - 1.0).abs() < NEAR_CAUCHY {
        return pdf_fourier(y, beta, 1.0);
    }
    if beta > 1.0 && y < 1.0 {
        return pdf_series(y, beta);
    }
    zolotarev(y, beta, true)
}

// Convergent for β > 1: p(y) = (1/(πβ)) Σ (-1)^k Γ((2k+1)/β) y^{2k} / (2k)!
fn pdf_series(y: f64, beta: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow_over_fact = 1.0; // y^{2k}/(2k)!
    for k in 0..80 {
        let kf = k as f64;
        if k > 0 {
            pow_over_fact *= y * y / ((2.0 * kf - 1.0) * (2.0 * kf));
        }
        let term = gamma_fn((2.0 * kf + 1.0) / beta) * pow_over_fact;
        sum += if k % 2 == 0 { term } else { -term };
        if term.abs() < 1e-17 * sum.abs() && k > 2 {
            break;
        }
    }
    sum / (PI * beta)
}

fn cdf_series(y: f64, beta: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow_over_fact = y; // y^{2k+1}/(2k+1)!
    for k in 0..80 {
        let kf = k as f64;
        if k > 0 {
            pow_over_fact *= y * y / ((2.0 * kf) * (2.0 * kf + 1.0));
        }
        let term = gamma_fn((2.0 * kf + 1.0) / beta) * pow_over_fact;
        sum += if k % 2 == 0 { term } else { -term };
        if term.abs() < 1e-17 * sum.abs() && k > 2 {
            break;
        }
    }
    0.5 + sum / (PI * beta)
}

/// ln V(θ) for the symmetric case.
fn ln_v(theta: f64, beta: f64) -> f64 {
    let e = beta / (beta - 1.0);
    e * (theta.cos().ln() - (beta * theta).sin().ln()) + ((beta - 1.0) * theta).cos().ln()
        - theta.cos().ln()
}

fn zolotarev(y: f64, beta: f64, density: bool) -> f64 {
    let ln_c = beta / (beta - 1.0) * y.ln();
    // c·V(θ) is monotone in θ; locate where it crosses 1 and split there.
    let h = |theta: f64| ln_c + ln_v(theta, beta);
    let (mut lo, mut hi) = (1e-300_f64.max(0.0), FRAC_PI_2);
    let decreasing = beta > 1.0;
    let mut theta_star = FRAC_PI_2 * 0.5;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = h(mid);
        if !v.is_finite() {
            break;
        }
        if (v > 0.0) == decreasing {
            lo = mid;
        } else {
            hi = mid;
        }
        theta_star = mid;
        if hi - lo < 1e-15 {
            break;
        }
    }
    let theta_star = theta_star.clamp(1e-12, FRAC_PI_2 - 1e-12);
    // The integrand can switch on over a layer far narrower than the
    // interval, so geometric breakpoints around θ* keep the rule from
    // sampling only its flat part.
    let mut pts = vec![0.0, theta_star, FRAC_PI_2];
    let mut d = 0.1;
    while d > 1e-13 {
        pts.push(theta_star - d);
        pts.push(theta_star + d);
        d *= 0.1;
    }
    pts.retain(|&t| (0.0..=FRAC_PI_2).contains(&t));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if density {
        let integrand = |theta: f64| {
            let lv = ln_v(theta, beta);
            let cv = (ln_c + lv).exp();
            let v = (lv + (-cv)).exp();
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        let est = quad::integrate_points(integrand, &pts, &LAW_OPTS)
            .map(|e| e.value)
            .unwrap_or_else(|err| accuracy_estimate(&err));
        beta * y.powf(1.0 / (beta - 1.0)) / (PI * (beta - 1.0).abs()) * est
    } else {
        let integrand = |theta: f64| {
            let cv = (ln_c + ln_v(theta, beta)).exp();
            let v = (-cv).exp();
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        let est = quad::integrate_points(integrand, &pts, &LAW_OPTS)
            .map(|e| e.value)
            .unwrap_or_else(|err| accuracy_estimate(&err));
        if beta > 1.0 {
            1.0 - est / PI
        } else {
            0.5 + est / PI
        }
    }
}

fn accuracy_estimate(err: &crate::Error) -> f64 {
    match err {
        crate::Error::Accuracy { estimate, .. } => *estimate,
        _ => f64::NAN,
    }
}

/// Fourier inversion breakpoints: half periods of the oscillating factor.
fn fourier_points(y: f64, beta: f64) -> Vec<f64> {
    let theta_max = 40f64.powf(1.0 / beta);
    let mut pts = vec![0.0];
    if y.abs() > 0.0 {
        let half = PI / y.abs();
        let count = ((theta_max / half).ceil() as usize).min(50_000);
        for i in 1..count {
            pts.push(i as f64 * half);
        }
    }
    pts.push(theta_max);
    pts
}

/// `p(x) = (1/π) ∫_0^∞ cos(θx) exp(-(scale θ)^β) dθ` evaluated directly.
pub fn pdf_fourier(x: f64, beta: f64, scale: f64) -> f64 {
    let y = x / scale;
    let pts = fourier_points(y, beta);
    let est = quad::integrate_points(
        |t: f64| (t * y).cos() * (-t.powf(beta)).exp(),
        &pts,
        &FOURIER_OPTS,
    )
    .map(|e| e.value)
    .unwrap_or_else(|err| accuracy_estimate(&err));
    est / (PI * scale)
}

/// `F(x) = 1/2 + (1/π) ∫_0^∞ sin(θx)/θ · exp(-(scale θ)^β) dθ` evaluated directly.
pub fn cdf_fourier(x: f64, beta: f64, scale: f64) -> f64 {
    let y = x / scale;
    if y == 0.0 {
        return 0.5;
    }
    let pts = fourier_points(y, beta);
    let est = quad::integrate_points(
        |t: f64| {
            if t == 0.0 {
                y
            } else {
                (t * y).sin() / t * (-t.powf(beta)).exp()
            }
        },
        &pts,
        &FOURIER_OPTS,
    )
    .map(|e| e.value)
    .unwrap_or_else(|err| accuracy_estimate(&err));
    0.5 + est / PI
}
