//! Reverse-time SDE sampling and the energy distance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::GaussianMixture1D;
use crate::error::{domain, Error, Result};
use crate::net::MlpParams;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::seed;

/// A score `s(x, σ)` evaluated for many `x` at one noise level.
pub trait ScoreModel<T>: Sync {
    fn score_into(&self, xs: &[T], sigma: T, out: &mut [T]);
}

/// Plain closure `(x, σ) -> s`.
pub struct ScoreFn<F>(pub F);

impl<T: Scalar, F: Fn(T, T) -> T + Sync> ScoreModel<T> for ScoreFn<F> {
    fn score_into(&self, xs: &[T], sigma: T, out: &mut [T]) {
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = (self.0)(x, sigma);
        }
    }
}

/// The exact score of the mixture convolved with `N(0, σ²)`.
impl<T: Scalar> ScoreModel<T> for GaussianMixture1D<T> {
    fn score_into(&self, xs: &[T], sigma: T, out: &mut [T]) {
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = self.perturbed_score_hessian(sigma, x).0;
        }
    }
}

impl<T: Scalar> ScoreModel<T> for MlpParams<T> {
    fn score_into(&self, xs: &[T], sigma: T, out: &mut [T]) {
        let mut scratch = Vec::new();
        out.copy_from_slice(self.eval_batch(xs, sigma, &mut scratch));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig<T> {
    pub steps: usize,
    pub t_start: T,
    pub t_end: T,
    pub n_samples: usize,
}

impl<T: Scalar> Default for SamplerConfig<T> {
    fn default() -> Self {
        Self {
            steps: 1000,
            t_start: T::one(),
            t_end: T::zero(),
            n_samples: 5000,
        }
    }
}

impl<T: Scalar> SamplerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.n_samples == 0 {
            return Err(domain("sampler needs steps >= 1 and n_samples >= 1"));
        }
        if !(self.t_end >= T::zero() && self.t_end < self.t_start && self.t_start <= T::one()) {
            return Err(domain(format!(
                "need 0 <= t_end < t_start <= 1, got t_end = {}, t_start = {}",
                self.t_end, self.t_start
            )));
        }
        Ok(())
    }
}

const CHUNK: usize = 256;

/// Euler–Maruyama integration of `dx = -g²(t) s(x, σ(t)) dt + g(t) dw̄`
/// backwards from `t_start` to `t_end`, started from `N(0, σ(t_start)²)`.
///
/// Trajectory `i` draws its noise from its own stream derived from
/// `(seed, i)`, so the result does not depend on how work is split.
pub fn reverse_sde_sample<T: Scalar, S: ScoreModel<T> + ?Sized>(
    score: &S,
    sched: &NoiseSchedule<T>,
    cfg: &SamplerConfig<T>,
    seed: u64,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let dt = (cfg.t_start - cfg.t_end) / T::from_usize_lossy(cfg.steps);
    let sqrt_dt = dt.sqrt();
    let sigma_start = sched.sigma_at(cfg.t_start)?;
    let mut out = vec![T::zero(); cfg.n_samples];

    out.par_chunks_mut(CHUNK).enumerate().try_for_each(|(c, xs)| -> Result<()> {
        let mut rngs: Vec<ChaCha8Rng> = (0..xs.len())
            .map(|j| ChaCha8Rng::seed_from_u64(seed::derive_seed(seed, "trajectory", (c * CHUNK + j) as u64)))
            .collect();
        for (x, rng) in xs.iter_mut().zip(rngs.iter_mut()) {
            *x = sigma_start * T::standard_normal(rng);
        }
        let mut s = vec![T::zero(); xs.len()];
        for i in 0..cfg.steps {
            let t = cfg.t_start - T::from_usize_lossy(i) * dt;
            let sigma = sched.sigma_at(t.max(T::zero()))?;
            let g2 = sched.diffusion_coeff_sq(t.max(T::zero()))?;
            let g = g2.sqrt();
            score.score_into(xs, sigma, &mut s);
            for ((x, si), rng) in xs.iter_mut().zip(&s).zip(rngs.iter_mut()) {
                if !si.is_finite() {
                    return Err(Error::NonFinite(format!("score {si} at t = {t}, x = {x}")));
                }
                *x += g2 * *si * dt + g * sqrt_dt * T::standard_normal(rng);
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// `Σ_{i<j} |x_i - x_j|` for sorted `x`.
fn sorted_pair_sum(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(k, &v)| v * (2.0 * k as f64 - n + 1.0))
        .sum()
}

fn sorted_f64<T: Scalar>(x: &[T]) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = x.iter().map(|a| a.as_f64()).collect();
    if v.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("energy distance input".into()));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Energy distance `2 E|A-B| - E|A-A'| - E|B-B'|` as a V-statistic
/// (diagonal pairs included), in `O(n log n)`.
pub fn energy_distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(domain("energy distance needs two nonempty samples"));
    }
    let sa = sorted_f64(a)?;
    let sb = sorted_f64(b)?;
    let mut pooled = Vec::with_capacity(sa.len() + sb.len());
    pooled.extend_from_slice(&sa);
    pooled.extend_from_slice(&sb);
    pooled.sort_by(f64::total_cmp);
    let (n, m) = (sa.len() as f64, sb.len() as f64);
    let within_a = sorted_pair_sum(&sa);
    let within_b = sorted_pair_sum(&sb);
    let cross = sorted_pair_sum(&pooled) - within_a - within_b;
    let e = 2.0 * cross / (n * m) - 2.0 * within_a / (n * n) - 2.0 * within_b / (m * m);
    Ok(T::lit(e.max(0.0)))
}
