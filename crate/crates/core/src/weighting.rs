//! Loss weightings for denoising score matching.
//!
//! All weights are scalar multipliers on the squared residual
//! `(s(x_t; θ) - s(x_t|x0))²`. The optimal weight is the inverse conditional
//! variance of the kernel score, `Var_{x0|x_t}[s(x_t|x0)] = σ⁻² + H(x_t)`,
//! and its expectation over `x_t` is `(σ⁻² - 𝓘(σ))⁻¹`.

use std::fmt;
use std::str::FromStr;

use crate::density::{fisher_information, GaussianMixture1D, QuadratureSpec};
use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;

/// Smallest conditional variance accepted before the pointwise weight is clamped.
pub const VARIANCE_FLOOR: f64 = 1e-12;

pub fn heuristic_weight<T: Scalar>(sigma: T) -> T {
    sigma * sigma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseWeight<T> {
    pub value: T,
    /// The conditional variance fell below [`VARIANCE_FLOOR`] and was clamped.
    pub clamped: bool,
}

/// `(σ⁻² + H(x_t))⁻¹`, the inverse of `Var_{x0|x_t}[s(x_t|x0)]`.
pub fn optimal_pointwise_weight<T: Scalar>(sigma: T, hessian_at_xt: T) -> PointwiseWeight<T> {
    let var = T::one() / (sigma * sigma) + hessian_at_xt;
    let floor = T::lit(VARIANCE_FLOOR);
    if var > floor {
        PointwiseWeight {
            value: T::one() / var,
            clamped: false,
        }
    } else {
        PointwiseWeight {
            value: T::one() / floor,
            clamped: true,
        }
    }
}

/// `σ² / (1 - q)` with `q = σ²·𝓘(σ)`.
pub fn optimal_expected_weight<T: Scalar>(sigma: T, fisher: T) -> Result<T> {
    let s2 = sigma * sigma;
    let q = s2 * fisher;
    if !(q < T::one()) || fisher < T::zero() {
        return Err(domain(format!(
            "expected optimal weight needs 0 <= σ²·𝓘 < 1, got σ = {sigma}, 𝓘 = {fisher} (q = {q})"
        )));
    }
    Ok(s2 / (T::one() - q))
}

/// Truncated expansion of the expected optimal weight: `σ²` at order 1,
/// `σ² + σ⁴ 𝓘` at order 2.
pub fn taylor_weight<T: Scalar>(sigma: T, fisher: T, order: usize) -> Result<T> {
    let s2 = sigma * sigma;
    match order {
        1 => Ok(s2),
        2 => Ok(s2 + s2 * s2 * fisher),
        _ => Err(domain(format!("Taylor order must be 1 or 2, got {order}"))),
    }
}

/// `σ² + 𝓘₀ σ⁴` where `𝓘₀` is the Fisher information of the clean data.
pub fn stam_upper_bound<T: Scalar>(sigma: T, fisher0: T) -> T {
    let s2 = sigma * sigma;
    s2 + fisher0 * s2 * s2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightingScheme {
    None,
    Heuristic,
    OptimalPointwise,
    OptimalExpected,
    /// Two-term expansion `σ² + σ⁴ 𝓘(σ)` for first-order score matching.
    Taylor,
}

impl WeightingScheme {
    pub fn name(self) -> &'static str {
        match self {
            WeightingScheme::None => "none",
            WeightingScheme::Heuristic => "heuristic",
            WeightingScheme::OptimalPointwise => "optimal",
            WeightingScheme::OptimalExpected => "optimal-expected",
            WeightingScheme::Taylor => "taylor-k1",
        }
    }

    pub fn needs_fisher(self) -> bool {
        matches!(self, WeightingScheme::OptimalExpected | WeightingScheme::Taylor)
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WeightingScheme::None),
            "heuristic" => Ok(WeightingScheme::Heuristic),
            "optimal" | "optimal-pointwise" => Ok(WeightingScheme::OptimalPointwise),
            "optimal-expected" => Ok(WeightingScheme::OptimalExpected),
            "taylor" | "taylor-k1" => Ok(WeightingScheme::Taylor),
            other => Err(domain(format!("unknown weighting `{other}`"))),
        }
    }
}

/// Fisher information of the perturbed marginal on a grid of noise levels,
/// interpolated linearly in `ln σ` through `q = σ² 𝓘(σ)`. Exact at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherTable<T> {
    log_sigmas: Vec<T>,
    q: Vec<T>,
}

impl<T: Scalar> FisherTable<T> {
    pub fn build(gmm: &GaussianMixture1D<T>, sigmas: &[T], quad: &QuadratureSpec<T>) -> Result<Self> {
        let mut nodes: Vec<T> = sigmas.to_vec();
        if nodes.is_empty() {
            return Err(domain("Fisher table needs at least one noise level"));
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite sigmas"));
        nodes.dedup();
        let mut q = Vec::with_capacity(nodes.len());
        for &s in &nodes {
            let fi = fisher_information(&gmm.perturb(s)?, quad)?;
            q.push(s * s * fi.value);
        }
        Ok(Self {
            log_sigmas: nodes.iter().map(|s| s.ln()).collect(),
            q,
        })
    }

    /// Geometric grid of `nodes` levels over the schedule, plus `extra` exact levels.
    pub fn for_schedule(
        gmm: &GaussianMixture1D<T>,
        schedule: &NoiseSchedule<T>,
        nodes: usize,
        extra: &[T],
    ) -> Result<Self> {
        let mut sigmas = schedule.levels(nodes)?;
        sigmas.extend_from_slice(extra);
        Self::build(gmm, &sigmas, &QuadratureSpec::default())
    }

    pub fn fisher(&self, sigma: T) -> T {
        let ls = sigma.ln();
        let n = self.log_sigmas.len();
        let q = if n == 1 || ls <= self.log_sigmas[0] {
            self.q[0]
        } else if ls >= self.log_sigmas[n - 1] {
            self.q[n - 1]
        } else {
            let hi = self.log_sigmas.partition_point(|&v| v < ls);
            let lo = hi - 1;
            let f = (ls - self.log_sigmas[lo]) / (self.log_sigmas[hi] - self.log_sigmas[lo]);
            self.q[lo] + f * (self.q[hi] - self.q[lo])
        };
        q / (sigma * sigma)
    }
}

/// Evaluates a [`WeightingScheme`] at `(σ, x_t)` for a fixed clean density.
#[derive(Debug, Clone)]
pub struct Weighter<T> {
    scheme: WeightingScheme,
    density: GaussianMixture1D<T>,
    fisher: Option<FisherTable<T>>,
}

impl<T: Scalar> Weighter<T> {
    /// Fisher values are tabulated up front for schemes that need them; the
    /// table is read-only afterwards.
    pub fn new(
        scheme: WeightingScheme,
        density: &GaussianMixture1D<T>,
        schedule: &NoiseSchedule<T>,
        exact_levels: &[T],
    ) -> Result<Self> {
        let fisher = if scheme.needs_fisher() {
            Some(FisherTable::for_schedule(density, schedule, 129, exact_levels)?)
        } else {
            None
        };
        Ok(Self {
            scheme,
            density: density.clone(),
            fisher,
        })
    }

    pub fn scheme(&self) -> WeightingScheme {
        self.scheme
    }

    #[inline]
    pub fn weight(&self, sigma: T, x_t: T) -> T {
        match self.scheme {
            WeightingScheme::None => T::one(),
            WeightingScheme::Heuristic => heuristic_weight(sigma),
            WeightingScheme::OptimalPointwise => {
                let (_, h) = self.density.perturbed_score_hessian(sigma, x_t);
                optimal_pointwise_weight(sigma, h).value
            }
            WeightingScheme::OptimalExpected => {
                let fi = self.fisher.as_ref().expect("table built for this scheme").fisher(sigma);
                let s2 = sigma * sigma;
                // q < 1 holds analytically; guard interpolation round-off
                s2 / (T::one() - s2 * fi).max(T::lit(VARIANCE_FLOOR))
            }
            WeightingScheme::Taylor => {
                let fi = self.fisher.as_ref().expect("table built for this scheme").fisher(sigma);
                let s2 = sigma * sigma;
                s2 + s2 * s2 * fi
            }
        }
    }
}
