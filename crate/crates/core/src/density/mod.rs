//! Exact 1-D Gaussian-mixture machinery: densities, log-density derivatives
//! of arbitrary order, Gaussian convolution, conjugate posteriors and
//! sampling. Every other module uses these as ground truth.

mod config;
mod quadrature;

pub use config::{format_mixture, parse_mixture};
pub use quadrature::{fisher_information, integrate_simpson, FisherInformation, QuadratureSpec};

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::scalar::{binomial, Scalar};

/// Highest derivative order of `log p` computed in closed form.
pub const MAX_ANALYTIC_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component<T> {
    pub weight: T,
    pub mean: T,
    pub std: T,
}

impl<T> Component<T> {
    pub fn new(weight: T, mean: T, std: T) -> Self {
        Self { weight, mean, std }
    }
}

/// Weighted mixture of univariate normals.
///
/// Weights are strictly positive and sum to one; standard deviations are
/// strictly positive. The same type represents a clean data prior, its
/// Gaussian-perturbed marginal and the conjugate posterior of `x0 | x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture1D<T> {
    components: Vec<Component<T>>,
}

impl<T: Scalar> GaussianMixture1D<T> {
    pub fn new(components: Vec<Component<T>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("at least one component is required".into()));
        }
        let mut total = T::zero();
        for (i, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.mean.is_finite() && c.std.is_finite()) {
                return Err(Error::InvalidMixture(format!("component {i} has a non-finite field")));
            }
            if c.weight <= T::zero() {
                return Err(Error::InvalidMixture(format!(
                    "component {i} has non-positive weight {}",
                    c.weight
                )));
            }
            if c.std <= T::zero() {
                return Err(Error::InvalidMixture(format!(
                    "component {i} has non-positive std {}",
                    c.std
                )));
            }
            total += c.weight;
        }
        let tol = T::lit(1e-12).max(T::lit(8.0) * T::epsilon());
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidMixture(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    pub fn normal(mean: T, std: T) -> Result<Self> {
        Self::new(vec![Component::new(T::one(), mean, std)])
    }

    pub fn standard_normal() -> Self {
        Self::normal(T::zero(), T::one()).expect("N(0,1) is valid")
    }

    /// `0.3258·N(0, 0.5063²) + 0.3316·N(2, 0.7782²) + 0.3426·N(4, 0.0985²)`:
    /// two broad modes and one sharp one. Shipped as `fig1_gmm.cfg`.
    pub fn sharp_trimodal() -> Self {
        Self::new(vec![
            Component::new(T::lit(0.3258), T::lit(0.0), T::lit(0.5063)),
            Component::new(T::lit(0.3316), T::lit(2.0), T::lit(0.7782)),
            Component::new(T::lit(0.3426), T::lit(4.0), T::lit(0.0985)),
        ])
        .expect("valid preset")
    }

    /// `0.3·N(-5, 0.1²) + 0.3·N(5, 5.75²) + 0.4·N(15, 5.75²)`. Shipped as
    /// `gradvar_gmm.cfg`.
    pub fn wide_trimodal() -> Self {
        Self::new(vec![
            Component::new(T::lit(0.3), T::lit(-5.0), T::lit(0.1)),
            Component::new(T::lit(0.3), T::lit(5.0), T::lit(5.75)),
            Component::new(T::lit(0.4), T::lit(15.0), T::lit(5.75)),
        ])
        .expect("valid preset")
    }

    pub fn components(&self) -> &[Component<T>] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn mean(&self) -> T {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.std * c.std + (c.mean - m) * (c.mean - m)))
            .sum()
    }

    pub fn min_mean(&self) -> T {
        self.components.iter().map(|c| c.mean).fold(T::infinity(), T::min)
    }

    pub fn max_mean(&self) -> T {
        self.components.iter().map(|c| c.mean).fold(T::neg_infinity(), T::max)
    }

    pub fn max_std(&self) -> T {
        self.components.iter().map(|c| c.std).fold(T::zero(), T::max)
    }

    /// Per-component log of `w_i · N(x; μ_i, s_i²)` and standardized offsets.
    fn log_terms(&self, x: T) -> (Vec<T>, Vec<T>) {
        let half_log_2pi = T::lit(0.5) * (T::lit(2.0) * T::PI()).ln();
        let mut logs = Vec::with_capacity(self.components.len());
        let mut zs = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let z = (x - c.mean) / c.std;
            logs.push(c.weight.ln() - c.std.ln() - half_log_2pi - T::lit(0.5) * z * z);
            zs.push(z);
        }
        (logs, zs)
    }

    pub fn log_pdf(&self, x: T) -> Result<T> {
        check_finite(x)?;
        let (logs, _) = self.log_terms(x);
        Ok(log_sum_exp(&logs))
    }

    pub fn pdf(&self, x: T) -> Result<T> {
        self.log_pdf(x).map(T::exp)
    }

    /// Derivatives `[d/dx log p, d²/dx² log p, …]` up to order `k`.
    ///
    /// Pdf derivatives come from Hermite polynomials, rescaled by the largest
    /// component term so nothing underflows, and are converted to derivatives
    /// of `log p` with the recursion `p⁽ⁿ⁾ = Σ_j C(n-1, j) L⁽ʲ⁺¹⁾ p⁽ⁿ⁻¹⁻ʲ⁾`.
    pub fn log_density_derivatives(&self, x: T, k: usize) -> Result<Vec<T>> {
        check_finite(x)?;
        if k == 0 {
            return Err(domain("derivative order must be at least 1"));
        }
        if k > MAX_ANALYTIC_ORDER {
            return Err(Error::UnsupportedOrder {
                order: k,
                msg: format!("closed-form log-density derivatives stop at order {MAX_ANALYTIC_ORDER}"),
            });
        }
        let (logs, zs) = self.log_terms(x);
        let max = logs.iter().copied().fold(T::neg_infinity(), T::max);

        // scaled[n] = p⁽ⁿ⁾(x) · exp(-max)
        let mut scaled = vec![T::zero(); k + 1];
        let mut he = vec![T::zero(); k + 1];
        for ((c, &lt), &z) in self.components.iter().zip(&logs).zip(&zs) {
            let r = (lt - max).exp();
            if r == T::zero() {
                continue;
            }
            hermite_into(z, &mut he);
            let mut inv_s_pow = T::one();
            let mut sign = T::one();
            for n in 0..=k {
                scaled[n] += r * sign * he[n] * inv_s_pow;
                inv_s_pow /= c.std;
                sign = -sign;
            }
        }

        let p0 = scaled[0];
        let mut out: Vec<T> = Vec::with_capacity(k);
        for n in 1..=k {
            let mut acc = scaled[n];
            for j in 0..n - 1 {
                acc -= binomial::<T>(n - 1, j) * out[j] * scaled[n - 1 - j];
            }
            out.push(acc / p0);
        }
        if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "log-density derivative of order {} at x = {x}",
                bad + 1
            )));
        }
        Ok(out)
    }

    /// The `k`-th derivative of `log p` at `x`; `k = 1` is the score and
    /// `k = 2` the Hessian.
    pub fn log_density_derivative(&self, x: T, k: usize) -> Result<T> {
        Ok(self.log_density_derivatives(x, k)?[k - 1])
    }

    /// Score `d/dx log p(x)` without allocation, for inner loops.
    #[inline]
    pub fn score(&self, x: T) -> T {
        self.score_hessian(x).0
    }

    /// Score and Hessian of `log p` without allocation.
    #[inline]
    pub fn score_hessian(&self, x: T) -> (T, T) {
        let half = T::lit(0.5);
        let mut max = T::neg_infinity();
        for c in &self.components {
            let z = (x - c.mean) / c.std;
            let lt = c.weight.ln() - c.std.ln() - half * z * z;
            if lt > max {
                max = lt;
            }
        }
        let (mut p0, mut p1, mut p2) = (T::zero(), T::zero(), T::zero());
        for c in &self.components {
            let z = (x - c.mean) / c.std;
            let r = (c.weight.ln() - c.std.ln() - half * z * z - max).exp();
            let inv = T::one() / c.std;
            p0 += r;
            p1 -= r * z * inv;
            p2 += r * (z * z - T::one()) * inv * inv;
        }
        let s = p1 / p0;
        (s, p2 / p0 - s * s)
    }

    /// Score and Hessian of the mixture convolved with `N(0, σ²)`, without
    /// building the perturbed mixture.
    #[inline]
    pub fn perturbed_score_hessian(&self, sigma: T, x: T) -> (T, T) {
        let half = T::lit(0.5);
        let s2 = sigma * sigma;
        let mut max = T::neg_infinity();
        for c in &self.components {
            let v = c.std * c.std + s2;
            let d = x - c.mean;
            let lt = c.weight.ln() - half * v.ln() - half * d * d / v;
            if lt > max {
                max = lt;
            }
        }
        let (mut p0, mut p1, mut p2) = (T::zero(), T::zero(), T::zero());
        for c in &self.components {
            let v = c.std * c.std + s2;
            let d = x - c.mean;
            let r = (c.weight.ln() - half * v.ln() - half * d * d / v - max).exp();
            p0 += r;
            p1 -= r * d / v;
            p2 += r * (d * d / v - T::one()) / v;
        }
        let s = p1 / p0;
        (s, p2 / p0 - s * s)
    }

    /// Convolution with `N(0, σ²)`: same weights and means, variances grown by σ².
    pub fn perturb(&self, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(domain(format!("perturbation sigma must be positive, got {sigma}")));
        }
        let components = self
            .components
            .iter()
            .map(|c| Component::new(c.weight, c.mean, (c.std * c.std + sigma * sigma).sqrt()))
            .collect();
        Ok(Self { components })
    }

    /// Exact posterior of `x0` given `x_t = x0 + σ·z`, with `x0` drawn from `self`.
    ///
    /// Components whose responsibility underflows to zero are dropped; at
    /// least the most responsible one always survives.
    pub fn posterior(&self, sigma: T, x_t: T) -> Result<Self> {
        check_finite(x_t)?;
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(domain(format!("posterior sigma must be positive, got {sigma}")));
        }
        let s2 = sigma * sigma;
        let half = T::lit(0.5);
        let mut logs = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let v = c.std * c.std + s2;
            let d = x_t - c.mean;
            logs.push(c.weight.ln() - half * v.ln() - half * d * d / v);
        }
        let lse = log_sum_exp(&logs);
        let mut components = Vec::with_capacity(self.components.len());
        for (c, lw) in self.components.iter().zip(&logs) {
            let w = (*lw - lse).exp();
            if w <= T::zero() {
                continue;
            }
            let v0 = c.std * c.std;
            let v = v0 + s2;
            let mean = (c.mean * s2 + x_t * v0) / v;
            let std = (v0 * s2 / v).sqrt();
            components.push(Component::new(w, mean, std));
        }
        let total: T = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= total;
        }
        Ok(Self { components })
    }

    /// One draw: pick a component by weight, then a Gaussian draw from it.
    #[inline]
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u = T::unit_uniform(rng);
        let mut acc = T::zero();
        let last = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc || i == last {
                return c.mean + c.std * T::standard_normal(rng);
            }
        }
        unreachable!("mixture has at least one component")
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<T>> {
        if n == 0 {
            return Err(domain("sample count must be at least 1"));
        }
        Ok((0..n).map(|_| self.sample_one(rng)).collect())
    }
}

fn check_finite<T: Scalar>(x: T) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("evaluation point must be finite, got {x}")))
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(logs: &[T]) -> T {
    let max = logs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + logs.iter().map(|&l| (l - max).exp()).sum::<T>().ln()
}

/// Probabilists' Hermite polynomials `He_0..He_k` at `z`.
fn hermite_into<T: Scalar>(z: T, out: &mut [T]) {
    out[0] = T::one();
    if out.len() > 1 {
        out[1] = z;
    }
    for n in 1..out.len().saturating_sub(1) {
        out[n + 1] = z * out[n] - T::from_usize_lossy(n) * out[n - 1];
    }
}
