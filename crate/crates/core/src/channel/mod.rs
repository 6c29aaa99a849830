//! Uplink SINR, interference Laplace transform and the debiasing weights.
//!
//! The success probability of a client at distance `r` under threshold `zeta`
//! is
//!
//! ```text
//! S(zeta, r) = exp(-zeta * N0 * r^eta / P) * L(zeta * r^eta / P)
//! L(s)       = exp(-2 pi lambda * Int_0^inf (1 - exp(-pi lambda r^2)) / (1 + r^eta / (s P)) r dr)
//! ```
//!
//! and the aggregation weight of a successful upload is `1 / S`.

pub mod montecarlo;
pub mod quadrature;

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{interferer_distances, NetworkTopology};

pub const DEFAULT_DEBIAS_FLOOR: f64 = 1e-12;
/// Target absolute error of the radial interference integral.
pub const LAPLACE_ABS_TOL: f64 = 1e-8;
const MAX_PANELS: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error(
        "interference integral did not converge: error {abs_error:e} > tolerance {tolerance:e}"
    )]
    NonConvergence { abs_error: f64, tolerance: f64 },
    #[error(
        "success probability {probability:e} is below the floor {floor:e}; client unreachable"
    )]
    Unreachable { probability: f64, floor: f64 },
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Linear-unit channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Transmit power in watts.
    pub tx_power: f64,
    /// Noise power at the BS in watts.
    pub noise: f64,
    pub path_loss_exp: f64,
    /// Base stations per square meter.
    pub bs_density: f64,
}

impl ChannelParams {
    pub fn from_dbm(
        tx_power_dbm: f64,
        noise_dbm: f64,
        path_loss_exp: f64,
        bs_density: f64,
    ) -> Result<Self, ChannelError> {
        let p = Self {
            tx_power: dbm_to_watts(tx_power_dbm),
            noise: dbm_to_watts(noise_dbm),
            path_loss_exp,
            bs_density,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::InvalidParams(m.to_string()));
        if !(self.tx_power > 0.0 && self.tx_power.is_finite()) {
            return bad("tx_power must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative");
        }
        if !(self.path_loss_exp > 2.0 && self.path_loss_exp.is_finite()) {
            return bad("path_loss_exp must exceed 2");
        }
        if !(self.bs_density >= 0.0 && self.bs_density.is_finite()) {
            return bad("bs_density must be non-negative");
        }
        Ok(())
    }

    /// `d^-eta`.
    #[inline]
    pub fn path_gain(&self, d: f64) -> f64 {
        if self.path_loss_exp == 4.0 {
            let d2 = d * d;
            1.0 / (d2 * d2)
        } else {
            d.powf(-self.path_loss_exp)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrRealization {
    pub zeta: f64,
    pub sinr: Vec<f64>,
    pub success: Vec<bool>,
}

/// SINR for given fading gains. `interferers` yields `(distance, gain)`.
/// With zero noise and no interference the result is `+inf`.
pub fn sinr_from_gains(
    params: &ChannelParams,
    r: f64,
    signal_gain: f64,
    interferers: impl IntoIterator<Item = (f64, f64)>,
) -> f64 {
    let signal = params.tx_power * signal_gain * params.path_gain(r);
    let interference: f64 = interferers
        .into_iter()
        .map(|(d, g)| params.tx_power * g * params.path_gain(d))
        .sum();
    let denom = params.noise + interference;
    if denom == 0.0 {
        f64::INFINITY
    } else {
        signal / denom
    }
}

/// One Rayleigh-faded SINR draw for a user at distance `r` with the given
/// co-channel interferer distances.
pub fn draw_user_sinr<R: Rng + ?Sized>(
    params: &ChannelParams,
    r: f64,
    interferers: &[f64],
    rng: &mut R,
) -> f64 {
    let signal_gain: f64 = rng.sample(Exp1);
    let mut interference = 0.0;
    for &d in interferers {
        let g: f64 = rng.sample(Exp1);
        interference += params.tx_power * g * params.path_gain(d);
    }
    let denom = params.noise + interference;
    let signal = params.tx_power * signal_gain * params.path_gain(r);
    if denom == 0.0 {
        f64::INFINITY
    } else {
        signal / denom
    }
}

/// SINR of every test-cell user of `topology`, drawn sequentially from `rng`.
pub fn draw_sinr<R: Rng + ?Sized>(
    topology: &NetworkTopology,
    params: &ChannelParams,
    zeta: f64,
    rng: &mut R,
) -> SinrRealization {
    let sinr: Vec<f64> = topology
        .test_cell_users()
        .into_iter()
        .map(|u| {
            let interferers = interferer_distances(topology, topology.rb_assignment[u]);
            draw_user_sinr(params, topology.distances[u], &interferers, rng)
        })
        .collect();
    let success = sinr.iter().map(|&s| s > zeta).collect();
    SinrRealization {
        zeta,
        sinr,
        success,
    }
}

/// `u / (1 + (u / c)^p)` without overflow for large `u`.
#[inline]
fn saturating_kernel(u: f64, c: f64, p: f64) -> f64 {
    if u <= c {
        u / (1.0 + (u / c).powf(p))
    } else {
        let q = (c / u).powf(p);
        u * q / (q + 1.0)
    }
}

/// Laplace transform of the aggregate uplink interference at `s`.
///
/// The radial integral is evaluated in the dimensionless variable
/// `v = pi * lambda * r^2`:
///
/// ```text
/// 2 pi lambda Int (...) r dr = Int_0^inf (1 - e^-v) / (1 + (v / c)^(eta/2)) dv,
/// c = pi * lambda * (s P)^(2 / eta)
/// ```
///
/// split at `min(1, c)`, `max(1, c)` and `8 max(1, c)`; the tail beyond the
/// last break is mapped to `(0, 1]` by `v = v0 * t^(-q)` with
/// `q = 4 / (eta - 2)`, which makes the transformed integrand vanish at `t = 0`.
pub fn laplace_interference(s: f64, params: &ChannelParams) -> Result<f64, ChannelError> {
    laplace_exponent(s, params).map(|e| (-e).exp())
}

/// The exponent `2 pi lambda Int (...) r dr` of [`laplace_interference`].
pub fn laplace_exponent(s: f64, params: &ChannelParams) -> Result<f64, ChannelError> {
    params.validate()?;
    if s.is_nan() || s < 0.0 {
        return Err(ChannelError::Domain(format!(
            "s = {s} must be non-negative"
        )));
    }
    let lambda = params.bs_density;
    if s == 0.0 || lambda == 0.0 {
        return Ok(0.0);
    }
    let eta = params.path_loss_exp;
    let p = eta / 2.0;
    let c = PI * lambda * (s * params.tx_power).powf(2.0 / eta);
    if c == 0.0 {
        return Ok(0.0);
    }
    if !c.is_finite() {
        return Err(ChannelError::Domain(format!(
            "s = {s} overflows the integrand"
        )));
    }

    // The r-integral equals this v-integral divided by 2 pi lambda.
    let scale = 2.0 * PI * lambda;
    let abs_tol = LAPLACE_ABS_TOL * scale;
    let rel_tol = 64.0 * f64::EPSILON;

    let lo = c.min(1.0);
    let hi = c.max(1.0);
    let v0 = 8.0 * hi;
    let mut breaks = vec![0.0, lo, hi, v0];
    breaks.dedup();

    let body = |v: f64| -(-v).exp_m1() / (1.0 + (v / c).powf(p));
    let head =
        quadrature::integrate(body, &breaks, 0.5 * abs_tol, rel_tol, MAX_PANELS).map_err(|e| {
            ChannelError::NonConvergence {
                abs_error: e.abs_error / scale,
                tolerance: e.tolerance / scale,
            }
        })?;

    let q = 4.0 / (eta - 2.0);
    let tail_fn = |t: f64| {
        let v = v0 * t.powf(-q);
        if !v.is_finite() {
            return 0.0;
        }
        // dv = q v / t dt
        -(-v).exp_m1() * saturating_kernel(v, c, p) * q / t
    };
    let tail = quadrature::integrate(tail_fn, &[0.0, 1.0], 0.5 * abs_tol, rel_tol, MAX_PANELS)
        .map_err(|e| ChannelError::NonConvergence {
            abs_error: e.abs_error / scale,
            tolerance: e.tolerance / scale,
        })?;
    Ok(head.value + tail.value)
}

/// Probability that an upload at distance `r` clears threshold `zeta`.
pub fn success_probability(zeta: f64, r: f64, params: &ChannelParams) -> Result<f64, ChannelError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(ChannelError::Domain(format!(
            "distance r = {r} must be positive"
        )));
    }
    if zeta.is_nan() || zeta < 0.0 {
        return Err(ChannelError::Domain(format!(
            "threshold zeta = {zeta} must be non-negative"
        )));
    }
    if zeta == 0.0 {
        return Ok(1.0);
    }
    // s = zeta / (P r^-eta)
    let s = zeta / (params.tx_power * params.path_gain(r));
    let noise_term = s * params.noise;
    let exponent = laplace_exponent(s, params)?;
    Ok((-(noise_term + exponent)).exp())
}

/// Aggregation weight `1 / S`. Fails when `S` drops below `floor`.
pub fn debias_weight(
    zeta: f64,
    r: f64,
    params: &ChannelParams,
    floor: f64,
) -> Result<f64, ChannelError> {
    let s = success_probability(zeta, r, params)?;
    weight_from_probability(s, floor)
}

pub fn weight_from_probability(s: f64, floor: f64) -> Result<f64, ChannelError> {
    if s < floor || s == 0.0 {
        return Err(ChannelError::Unreachable {
            probability: s,
            floor,
        });
    }
    Ok((1.0 / s).max(1.0))
}

/// Memoized success probabilities keyed by `(zeta, r)` bit patterns.
#[derive(Debug, Clone)]
pub struct SuccessCache {
    params: ChannelParams,
    table: HashMap<(u64, u64), f64>,
}

impl SuccessCache {
    pub fn new(params: ChannelParams) -> Self {
        Self {
            params,
            table: HashMap::new(),
        }
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn probability(&mut self, zeta: f64, r: f64) -> Result<f64, ChannelError> {
        let key = (zeta.to_bits(), r.to_bits());
        if let Some(&s) = self.table.get(&key) {
            return Ok(s);
        }
        let s = success_probability(zeta, r, &self.params)?;
        self.table.insert(key, s);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}
