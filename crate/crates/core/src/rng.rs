//! Seedable, splittable random streams and heavy-tailed variate generation.
//!
//! Each [`RngStream`] is a ChaCha8 keystream keyed by the master seed and
//! positioned on the 64-bit ChaCha stream id given by `stream_index`, so a
//! replication's draws depend only on `(master_seed, stream_index)` and never
//! on which thread runs it.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, QuadOptions};

#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// Uniform on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.gen();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Unit-scale symmetric stable draw (Chambers–Mallows–Stuck).
/// The caller guarantees `0 < beta <= 2`.
#[inline]
pub fn unit_symmetric_stable(stream: &mut RngStream, beta: f64) -> f64 {
    let v = PI * (stream.open01() - 0.5);
    if beta == 1.0 {
        return v.tan();
    }
    let w = stream.exp1();
    let cos_v = v.cos();
    (beta * v).sin() / cos_v.powf(1.0 / beta)
        * (((1.0 - beta) * v).cos() / w).powf((1.0 - beta) / beta)
}

pub fn sample_symmetric_stable(stream: &mut RngStream, beta: f64, scale: f64) -> Result<f64> {
    check_stable_params(beta, scale)?;
    let unit = unit_symmetric_stable(stream, beta);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(scale * unit)
}

pub(crate) fn check_stable_params(beta: f64, scale: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::ParameterDomain(format!(
            "stable index {beta} not in (0, 2]"
        )));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::ParameterDomain(format!(
            "stable scale {scale} must be finite and >= 0"
        )));
    }
    Ok(())
}

/// Parameters of a symmetric tempered-stable noise with Lévy density
/// `|x|^{-1-ζ} e^{-tempering·|x|}`, together with the constants the
/// truncated compound-Poisson sampler needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TemperedParams", into = "TemperedParams")]
pub struct TemperedStable {
    pub zeta: f64,
    pub tempering: f64,
    pub truncation_eps: f64,
    // ∫ κ over (ε, max(ε,1)] and (max(ε,1), ∞), one side only.
    inner_mass: f64,
    outer_mass: f64,
    // 2 ∫_0^ε x² κ(x) dx
    small_jump_var: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemperedParams {
    zeta: f64,
    tempering: f64,
    #[serde(default = "default_truncation_eps")]
    truncation_eps: f64,
}

fn default_truncation_eps() -> f64 {
    1e-3
}

impl TryFrom<TemperedParams> for TemperedStable {
    type Error = Error;
    fn try_from(p: TemperedParams) -> Result<Self> {
        TemperedStable::new(p.zeta, p.tempering, p.truncation_eps)
    }
}

impl From<TemperedStable> for TemperedParams {
    fn from(t: TemperedStable) -> Self {
        TemperedParams {
            zeta: t.zeta,
            tempering: t.tempering,
            truncation_eps: t.truncation_eps,
        }
    }
}

impl TemperedStable {
    pub fn new(zeta: f64, tempering: f64, truncation_eps: f64) -> Result<Self> {
        if !(0.0..2.0).contains(&zeta) {
            return Err(Error::ParameterDomain(format!(
                "small-jump index {zeta} not in [0, 2)"
            )));
        }
        if !(tempering > 0.0 && tempering.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "tempering {tempering} must be > 0"
            )));
        }
        if !(truncation_eps > 0.0 && truncation_eps.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "truncation_eps {truncation_eps} must be > 0"
            )));
        }
        // Large jumps must be dominated by |x|^{-3}: sup_{x>1} x^{2-ζ} e^{-λx} ≤ 1.
        let peak = (2.0 - zeta) / tempering;
        let worst = if peak > 1.0 {
            peak.powf(2.0 - zeta) * (-(2.0 - zeta)).exp()
        } else {
            (-tempering).exp()
        };
        let grid_worst = (0..2000)
            .map(|i| 1.0 + i as f64 * 0.05)
            .map(|x| x.powf(2.0 - zeta) * (-tempering * x).exp())
            .fold(0.0, f64::max);
        if worst.max(grid_worst) > 1.0 + 1e-12 {
            return Err(Error::ParameterDomain(format!(
                "tempering {tempering} too weak for zeta {zeta}: Lévy density exceeds |x|^-3 beyond 1"
            )));
        }
        let density = |x: f64| x.powf(-1.0 - zeta) * (-tempering * x).exp();
        let opts = QuadOptions::with_rel_tol(1e-10);
        let split = truncation_eps.max(1.0);
        let inner_mass = if split > truncation_eps {
            quad::integrate(density, truncation_eps, split, &opts)?.value
        } else {
            0.0
        };
        let outer_mass = quad::integrate_tail(density, split, &opts)?.value;
        let small_jump_var = 2.0
            * quad::integrate_left_singular(
                |x: f64| x.powf(1.0 - zeta) * (-tempering * x).exp(),
                0.0,
                truncation_eps,
                1.0 - zeta,
                &opts,
            )?
            .value;
        Ok(Self {
            zeta,
            tempering,
            truncation_eps,
            inner_mass,
            outer_mass,
            small_jump_var,
        })
    }

    pub fn levy_density(&self, x: f64) -> f64 {
        if x == 0.0 {
            return f64::INFINITY;
        }
        x.abs().powf(-1.0 - self.zeta) * (-self.tempering * x.abs()).exp()
    }

    /// Rate of jumps with modulus above the truncation level (both signs).
    pub fn jump_rate(&self) -> f64 {
        2.0 * (self.inner_mass + self.outer_mass)
    }

    /// Variance of the discarded small jumps per unit time.
    pub fn small_jump_variance(&self) -> f64 {
        self.small_jump_var
    }

    /// Exact `Var(L_1) = 2 ∫_0^∞ x² κ(x) dx = 2 Γ(2-ζ) λ^{ζ-2}`.
    pub fn unit_variance(&self) -> f64 {
        2.0 * crate::special::gamma_fn(2.0 - self.zeta) * self.tempering.powf(self.zeta - 2.0)
    }

    fn sample_jump_modulus(&self, stream: &mut RngStream) -> f64 {
        let eps = self.truncation_eps;
        let split = eps.max(1.0);
        let total = self.inner_mass + self.outer_mass;
        if stream.open01() * total < self.inner_mass {
            // Proposal ∝ x^{-1-ζ} on (ε, 1], accept with e^{-λ(x-ε)}.
            loop {
                let u = stream.open01();
                let x = if self.zeta > 0.0 {
                    let a = eps.powf(-self.zeta);
                    (a - u * (a - 1.0)).powf(-1.0 / self.zeta)
                } else {
                    eps.powf(1.0 - u)
                };
                if stream.open01() <= (-self.tempering * (x - eps)).exp() {
                    return x;
                }
            }
        } else {
            // Proposal split + Exp(λ), accept with (x/split)^{-1-ζ}.
            loop {
                let x = split + stream.exp1() / self.tempering;
                if stream.open01() <= (x / split).powf(-1.0 - self.zeta) {
                    return x;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LevyModel {
    SymmetricStable { beta: f64, scale: f64 },
    TemperedStable(TemperedStable),
}

impl LevyModel {
    pub fn symmetric_stable(beta: f64, scale: f64) -> Result<Self> {
        let m = LevyModel::SymmetricStable { beta, scale };
        m.validate()?;
        Ok(m)
    }

    pub fn tempered_stable(zeta: f64, tempering: f64, truncation_eps: f64) -> Result<Self> {
        Ok(LevyModel::TemperedStable(TemperedStable::new(
            zeta,
            tempering,
            truncation_eps,
        )?))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LevyModel::SymmetricStable { beta, scale } => {
                if !(*beta > 0.0 && *beta < 2.0) {
                    return Err(Error::ParameterDomain(format!(
                        "noise index {beta} not in (0, 2)"
                    )));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::ParameterDomain(format!(
                        "noise scale {scale} must be > 0"
                    )));
                }
                Ok(())
            }
            LevyModel::TemperedStable(_) => Ok(()),
        }
    }

    /// Index used in the rate machinery: β for stable noise, ζ for tempered.
    pub fn index(&self) -> f64 {
        match self {
            LevyModel::SymmetricStable { beta, .. } => *beta,
            LevyModel::TemperedStable(t) => t.zeta,
        }
    }

    /// One noise increment `L_{t+dt} - L_t`.
    pub fn sample_increment(&self, stream: &mut RngStream, dt: f64) -> f64 {
        match self {
            LevyModel::SymmetricStable { beta, scale } => {
                scale * dt.powf(1.0 / beta) * unit_symmetric_stable(stream, *beta)
            }
            LevyModel::TemperedStable(t) => tempered_increment(stream, t, dt),
        }
    }
}

fn tempered_increment(stream: &mut RngStream, t: &TemperedStable, dt: f64) -> f64 {
    if dt == 0.0 {
        return 0.0;
    }
    let mean_jumps = t.jump_rate() * dt;
    let count = if mean_jumps > 0.0 {
        Poisson::new(mean_jumps)
            .map(|p| p.sample(stream) as u64)
            .unwrap_or(0)
    } else {
        0
    };
    let mut sum = 0.0;
    for _ in 0..count {
        sum += stream.sign() * t.sample_jump_modulus(stream);
    }
    sum + (t.small_jump_var * dt).sqrt() * stream.std_normal()
}

pub fn sample_tempered_stable_increment(
    stream: &mut RngStream,
    model: &LevyModel,
    dt: f64,
) -> Result<f64> {
    let LevyModel::TemperedStable(t) = model else {
        return Err(Error::WrongVariant(
            "tempered-stable increment requested for stable noise".into(),
        ));
    };
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::ParameterDomain(format!(
            "increment length {dt} must be >= 0"
        )));
    }
    Ok(tempered_increment(stream, t, dt))
}
