//! Monte Carlo success probabilities, averaging over both the interferer
//! field and the fading.
//!
//! Co-channel interferers around the test BS are sampled as a Poisson
//! process of intensity `lambda * (1 - exp(-pi lambda r^2))` inside a disk of
//! radius `radius`. Points are generated in increasing distance order: in
//! `v = pi lambda r^2` a homogeneous process of density `lambda` has unit rate,
//! so gaps are `Exp(1)`, and each point is kept with probability
//! `1 - exp(-v)`.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use super::ChannelParams;
use crate::rng::{names, Streams};

pub const DEFAULT_FIELD_RADIUS: f64 = 4_000.0;
/// Independent RNG chunks; fixed so results do not depend on thread count.
const CHUNKS: usize = 64;
// Beyond this v the retention probability is 1 to double precision.
const THINNING_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy)]
pub struct InterfererField {
    params: ChannelParams,
    v_max: f64,
    pi_lambda: f64,
}

impl InterfererField {
    pub fn new(params: ChannelParams, radius: f64) -> Self {
        let pi_lambda = std::f64::consts::PI * params.bs_density;
        Self {
            params,
            v_max: pi_lambda * radius * radius,
            pi_lambda,
        }
    }

    /// Distances of one realization of the interferer field.
    pub fn sample_distances<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::new();
        if self.pi_lambda == 0.0 {
            return out;
        }
        let mut v = 0.0;
        loop {
            let gap: f64 = rng.sample(Exp1);
            v += gap;
            if v > self.v_max {
                return out;
            }
            if v < THINNING_CUTOFF && rng.random::<f64>() >= -(-v).exp_m1() {
                continue;
            }
            out.push((v / self.pi_lambda).sqrt());
        }
    }

    /// Aggregate Rayleigh-faded interference power of one realization.
    pub fn sample_interference<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.pi_lambda == 0.0 {
            return 0.0;
        }
        let eta_half = self.params.path_loss_exp / 2.0;
        let mut total = 0.0;
        let mut v = 0.0;
        loop {
            let gap: f64 = rng.sample(Exp1);
            v += gap;
            if v > self.v_max {
                return total * self.params.tx_power;
            }
            if v < THINNING_CUTOFF && rng.random::<f64>() >= -(-v).exp_m1() {
                continue;
            }
            let g: f64 = rng.sample(Exp1);
            // r^-eta = (v / pi lambda)^(-eta/2)
            let r2 = v / self.pi_lambda;
            let gain = if eta_half == 2.0 {
                1.0 / (r2 * r2)
            } else {
                r2.powf(-eta_half)
            };
            total += g * gain;
        }
    }

    /// One SINR draw for a user at distance `r`, with a fresh field.
    pub fn sample_sinr<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> f64 {
        let interference = self.sample_interference(rng);
        let g: f64 = rng.sample(Exp1);
        let denom = self.params.noise + interference;
        let signal = self.params.tx_power * g * self.params.path_gain(r);
        if denom == 0.0 {
            f64::INFINITY
        } else {
            signal / denom
        }
    }
}

/// Empirical `P(SINR > zeta)` over a `zetas x distances` grid. Each draw
/// shares one field and one signal gain across all grid cells.
pub fn success_grid(
    params: &ChannelParams,
    zetas: &[f64],
    distances: &[f64],
    samples: usize,
    seed: u64,
    radius: f64,
) -> Vec<Vec<f64>> {
    let field = InterfererField::new(*params, radius);
    let streams = Streams::new(seed);
    let signal: Vec<f64> = distances
        .iter()
        .map(|&r| params.tx_power * params.path_gain(r))
        .collect();
    let counts: Vec<Vec<u64>> = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let n = samples / CHUNKS + usize::from(chunk < samples % CHUNKS);
            let mut rng = streams.rng(names::MONTE_CARLO, &[chunk as u64]);
            let mut counts = vec![0u64; zetas.len() * distances.len()];
            for _ in 0..n {
                let interference = field.sample_interference(&mut rng);
                let g: f64 = rng.sample(Exp1);
                let denom = params.noise + interference;
                for (j, s) in signal.iter().enumerate() {
                    let sinr = if denom == 0.0 {
                        f64::INFINITY
                    } else {
                        g * s / denom
                    };
                    for (i, &z) in zetas.iter().enumerate() {
                        if sinr > z {
                            counts[i * distances.len() + j] += 1;
                        }
                    }
                }
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; zetas.len() * distances.len()];
    for c in counts {
        for (t, x) in total.iter_mut().zip(c) {
            *t += x;
        }
    }
    zetas
        .iter()
        .enumerate()
        .map(|(i, _)| {
            (0..distances.len())
                .map(|j| total[i * distances.len() + j] as f64 / samples as f64)
                .collect()
        })
        .collect()
}
