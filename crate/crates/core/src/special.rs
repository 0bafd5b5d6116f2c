//! Small special-function helpers on top of `statrs`.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma;

/// `(ln |Γ(x)|, sign Γ(x))` for any non-pole real `x`.
pub fn ln_gamma_signed(x: f64) -> (f64, f64) {
    if x > 0.0 {
        return (gamma::ln_gamma(x), 1.0);
    }
    if x == x.floor() {
        return (f64::INFINITY, f64::NAN);
    }
    // Reflection: Γ(x) Γ(1 - x) = π / sin(π x)
    let s = (std::f64::consts::PI * x).sin();
    let ln = std::f64::consts::PI.ln() - s.abs().ln() - gamma::ln_gamma(1.0 - x);
    (ln, s.signum())
}

pub fn gamma_fn(x: f64) -> f64 {
    let (ln, sign) = ln_gamma_signed(x);
    sign * ln.exp()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    let mut x = std_normal().inverse_cdf(p);
    if !x.is_finite() {
        return x;
    }
    // Halley steps polish the initial approximation to full precision
    for _ in 0..2 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf == 0.0 {
            break;
        }
        let e = normal_cdf(x) - p;
        let u = e / pdf;
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}
