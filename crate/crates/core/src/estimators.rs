//! Monte-Carlo estimators of marginal scores of arbitrary order.
//!
//! For the Gaussian kernel `x_t | x0 ~ N(x0, σ²)` the `k`-th marginal score is
//! `s_k(x_t) = E_{x0|x_t}[h_k(x0, x_t)]` with `h_1 = s_1(x_t|x0)` and
//! `h_k = 𝒯[h_{k-1}] = ∇h + h·s_1(x_t|x0) - h·s_1(x_t)`.
//!
//! `h_k` is carried symbolically: every `x_t`-derivative of `h` is a polynomial
//! in `u = s_1(x_t|x0) = (x0 - x_t)/σ²` whose coefficients depend only on
//! `x_t`, so one preparation per `x_t` turns each posterior draw into a Horner
//! evaluation.

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::density::GaussianMixture1D;
use crate::error::{domain, Error, Result};
use crate::scalar::{binomial, Scalar};
use crate::seed;
use crate::stats::Welford;

/// Highest derivative order a finite-difference [`FnScore`] supplies.
pub const MAX_FD_DERIVATIVE: usize = 3;

/// `k`-th `x_t`-derivative of `log N(x_t; x0, σ²)`.
pub fn conditional_score<T: Scalar>(x0: T, x_t: T, sigma: T, k: usize) -> T {
    match k {
        1 => (x0 - x_t) / (sigma * sigma),
        2 => -T::one() / (sigma * sigma),
        _ => T::zero(),
    }
}

/// Source of the marginal score `s_1(x) = d/dx log p(x)` and its derivatives.
pub trait ScoreProvider<T: Scalar>: Sync {
    /// Returns `[s_1(x), s_2(x), …, s_n(x)]`, where `s_j` is the `j`-th
    /// derivative of `log p`.
    fn score_derivatives(&self, x: T, n: usize) -> Result<Vec<T>>;
}

impl<T: Scalar> ScoreProvider<T> for GaussianMixture1D<T> {
    fn score_derivatives(&self, x: T, n: usize) -> Result<Vec<T>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        self.log_density_derivatives(x, n)
    }
}

/// A black-box score `x -> s_1(x)`; higher derivatives by central differences.
pub struct FnScore<F>(pub F);

impl<T: Scalar, F: Fn(T) -> T + Sync> ScoreProvider<T> for FnScore<F> {
    fn score_derivatives(&self, x: T, n: usize) -> Result<Vec<T>> {
        if n > MAX_FD_DERIVATIVE + 1 {
            return Err(Error::UnsupportedOrder {
                order: n,
                msg: format!(
                    "finite-difference fallback supplies score derivatives up to order {}",
                    MAX_FD_DERIVATIVE + 1
                ),
            });
        }
        let f = &self.0;
        let scale = T::one().max(x.abs());
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let v = match j {
                0 => f(x),
                _ => {
                    let step = T::lit(1e-5).max(T::epsilon().powf(T::one() / T::from_usize_lossy(j + 2))) * scale;
                    let two = T::lit(2.0);
                    match j {
                        1 => (f(x + step) - f(x - step)) / (two * step),
                        2 => (f(x + step) - two * f(x) + f(x - step)) / (step * step),
                        _ => {
                            (f(x + two * step) - two * f(x + step) + two * f(x - step) - f(x - two * step))
                                / (two * step * step * step)
                        }
                    }
                }
            };
            out.push(v);
        }
        Ok(out)
    }
}

/// `h_k` of the iterative estimator, bound to a marginal score and a noise level.
pub struct HkTerm<'a, T, P: ?Sized> {
    order: usize,
    sigma: T,
    marginal: &'a P,
}

impl<T, P: ?Sized> Clone for HkTerm<'_, T, P>
where
    T: Copy,
{
    fn clone(&self) -> Self {
        Self {
            order: self.order,
            sigma: self.sigma,
            marginal: self.marginal,
        }
    }
}

impl<'a, T: Scalar, P: ScoreProvider<T> + ?Sized> HkTerm<'a, T, P> {
    /// `h_1(x0, x_t) = s_1(x_t | x0)`.
    pub fn first(marginal: &'a P, sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            order: 1,
            sigma,
            marginal,
        })
    }

    /// `h_k` for a given `k >= 1`.
    pub fn of_order(marginal: &'a P, sigma: T, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(domain("score order must be at least 1"));
        }
        let mut h = Self::first(marginal, sigma)?;
        for _ in 1..k {
            h = apply_score_operator(h);
        }
        Ok(h)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    /// Resolves the marginal-score derivatives at `x_t`, leaving a polynomial in `u`.
    pub fn prepare(&self, x_t: T) -> Result<PreparedHk<T>> {
        let derivs = self.marginal.score_derivatives(x_t, self.order - 1)?;
        if let Some(bad) = derivs.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("marginal score derivative {bad} at x_t = {x_t}")));
        }
        Ok(prepare_from_derivatives(self.order, self.sigma, x_t, &derivs))
    }

    pub fn eval(&self, x0: T, x_t: T) -> Result<T> {
        Ok(self.prepare(x_t)?.eval(x0))
    }
}

/// `𝒯[h](x0, x_t) = ∇_{x_t} h + h·s_1(x_t|x0) - h·s_1(x_t)`.
pub fn apply_score_operator<'a, T: Scalar, P: ScoreProvider<T> + ?Sized>(h: HkTerm<'a, T, P>) -> HkTerm<'a, T, P> {
    HkTerm {
        order: h.order + 1,
        ..h
    }
}

/// `h_k` at fixed `x_t` as a polynomial in `u = (x0 - x_t)/σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedHk<T> {
    pub x_t: T,
    pub sigma: T,
    /// Ascending coefficients in `u`.
    pub coefficients: Vec<T>,
}

impl<T: Scalar> PreparedHk<T> {
    #[inline]
    pub fn eval(&self, x0: T) -> T {
        let u = (x0 - self.x_t) / (self.sigma * self.sigma);
        self.coefficients.iter().rev().fold(T::zero(), |acc, &c| acc * u + c)
    }
}

type Poly<T> = Vec<T>;

fn poly_add<T: Scalar>(a: &[T], b: &[T]) -> Poly<T> {
    let mut out = vec![T::zero(); a.len().max(b.len())];
    for (i, &v) in a.iter().enumerate() {
        out[i] += v;
    }
    for (i, &v) in b.iter().enumerate() {
        out[i] += v;
    }
    out
}

fn poly_mul<T: Scalar>(a: &[T], b: &[T]) -> Poly<T> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![T::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Leibniz rule on derivative jets: `(fg)⁽ⁿ⁾ = Σ C(n, j) f⁽ʲ⁾ g⁽ⁿ⁻ʲ⁾`.
fn jet_mul<T: Scalar>(f: &[Poly<T>], g: &[Poly<T>], order: usize) -> Vec<Poly<T>> {
    (0..=order)
        .map(|n| {
            (0..=n).fold(Vec::new(), |acc, j| {
                let term: Poly<T> = poly_mul(&f[j], &g[n - j])
                    .into_iter()
                    .map(|c| c * binomial::<T>(n, j))
                    .collect();
                poly_add(&acc, &term)
            })
        })
        .collect()
}

/// Builds `h_k` from the marginal derivatives `[s_1, …, s_{k-1}]` at `x_t`.
pub fn prepare_from_derivatives<T: Scalar>(k: usize, sigma: T, x_t: T, marginal: &[T]) -> PreparedHk<T> {
    assert!(k >= 1 && marginal.len() >= k - 1, "need k-1 marginal derivatives");
    let c = -T::one() / (sigma * sigma);
    let top = k - 1;

    // jet of u: [u, c, 0, …]
    let mut h: Vec<Poly<T>> = (0..=top)
        .map(|n| match n {
            0 => vec![T::zero(), T::one()],
            1 => vec![c],
            _ => vec![T::zero()],
        })
        .collect();
    // jet of u - s_1(x_t): [u - s_1, c - s_2, -s_3, …]
    let a: Vec<Poly<T>> = (0..top)
        .map(|n| match n {
            0 => vec![-marginal[0], T::one()],
            1 => vec![c - marginal[1]],
            _ => vec![-marginal[n]],
        })
        .collect();

    for step in 1..k {
        let order = top - step;
        let prod = jet_mul(&h, &a, order);
        h = (0..=order).map(|n| poly_add(&h[n + 1], &prod[n])).collect();
    }
    let mut coefficients = h.swap_remove(0);
    while coefficients.len() > 1 && coefficients.last() == Some(&T::zero()) {
        coefficients.pop();
    }
    PreparedHk {
        x_t,
        sigma,
        coefficients,
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<T> {
    pub estimate: T,
    pub std_err: T,
}

/// Estimates `s_k(x_t)` of `gmm` perturbed by `σ` by averaging `h_k` over `n`
/// exact posterior draws.
pub fn estimate_score_mc<T: Scalar, R: Rng + ?Sized>(
    gmm: &GaussianMixture1D<T>,
    sigma: T,
    x_t: T,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<McEstimate<T>> {
    if n < 2 {
        return Err(domain("need at least two Monte-Carlo draws"));
    }
    let marginal = gmm.perturb(sigma)?;
    let prepared = HkTerm::of_order(&marginal, sigma, k)?.prepare(x_t)?;
    let posterior = gmm.posterior(sigma, x_t)?;
    let mut acc = Welford::default();
    for _ in 0..n {
        acc.push(prepared.eval(posterior.sample_one(rng)));
    }
    Ok(McEstimate {
        estimate: acc.mean(),
        std_err: acc.std_err(),
    })
}

/// Second-order Monte-Carlo estimators compared in the bias/variance harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// `E[u u - u ŝ + s_2(x_t|x0)]`: the operator form.
    T1,
    /// `E[(u - ŝ)(u - ŝ) + s_2(x_t|x0)]`.
    T2,
    /// `E[u u - ŝ ŝ + s_2(x_t|x0)]`.
    T3,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::T1, EstimatorKind::T2, EstimatorKind::T3];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::T1 => "t1",
            EstimatorKind::T2 => "t2",
            EstimatorKind::T3 => "t3",
        }
    }

    /// One Monte-Carlo term given `u = s_1(x_t|x0)`, the supplied first-order
    /// score `ŝ` and the kernel Hessian `c = -1/σ²`.
    #[inline]
    pub fn term<T: Scalar>(self, u: T, s_hat: T, c: T) -> T {
        match self {
            EstimatorKind::T1 => u * u - u * s_hat + c,
            EstimatorKind::T2 => (u - s_hat) * (u - s_hat) + c,
            EstimatorKind::T3 => u * u - s_hat * s_hat + c,
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t1" => Ok(EstimatorKind::T1),
            "t2" => Ok(EstimatorKind::T2),
            "t3" => Ok(EstimatorKind::T3),
            other => Err(domain(format!("unknown estimator kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Second-order estimate fed a first-order score with error `delta`:
/// `ŝ = s_1(x_t) + δ`.
pub fn second_order_estimate<T: Scalar, R: Rng + ?Sized>(
    kind: EstimatorKind,
    gmm: &GaussianMixture1D<T>,
    sigma: T,
    x_t: T,
    delta: T,
    n: usize,
    rng: &mut R,
) -> Result<McEstimate<T>> {
    if n < 2 {
        return Err(domain("need at least two Monte-Carlo draws"));
    }
    let marginal = gmm.perturb(sigma)?;
    let posterior = gmm.posterior(sigma, x_t)?;
    let s_hat = marginal.score(x_t) + delta;
    let inv_var = T::one() / (sigma * sigma);
    let c = -inv_var;
    let mut acc = Welford::default();
    for _ in 0..n {
        let u = (posterior.sample_one(rng) - x_t) * inv_var;
        acc.push(kind.term(u, s_hat, c));
    }
    Ok(McEstimate {
        estimate: acc.mean(),
        std_err: acc.std_err(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasVarianceRow<T> {
    pub x_t: T,
    pub kind: EstimatorKind,
    /// Mean of the replicate estimates.
    pub estimate: T,
    /// `estimate - s_2(x_t)`.
    pub bias: T,
    /// Sample variance of the replicate estimates.
    pub variance: T,
    /// Standard error of `estimate` (and so of `bias`).
    pub std_err: T,
}

/// Bias against the analytic Hessian and replicate variance at each `x_t`.
///
/// Replicates run in parallel; replicate `r` uses its own stream derived
/// from one draw of `rng` and `r`, so results do not depend on thread count.
#[allow(clippy::too_many_arguments)]
pub fn estimator_bias_variance<T: Scalar, R: RngCore + ?Sized>(
    kind: EstimatorKind,
    gmm: &GaussianMixture1D<T>,
    sigma: T,
    x_t_grid: &[T],
    delta: T,
    n_inner: usize,
    n_reps: usize,
    rng: &mut R,
) -> Result<Vec<BiasVarianceRow<T>>> {
    if n_reps < 10 {
        return Err(domain(format!("need at least 10 replicates, got {n_reps}")));
    }
    let marginal = gmm.perturb(sigma)?;
    let base = rng.next_u64();
    x_t_grid
        .iter()
        .enumerate()
        .map(|(gi, &x_t)| {
            let truth = marginal.log_density_derivative(x_t, 2)?;
            let reps: Vec<T> = (0..n_reps)
                .into_par_iter()
                .map(|r| {
                    let mut rs = seed::stream(base, kind.name(), (gi * n_reps + r) as u64);
                    second_order_estimate(kind, gmm, sigma, x_t, delta, n_inner, &mut rs).map(|e| e.estimate)
                })
                .collect::<Result<_>>()?;
            let mut acc = Welford::default();
            reps.iter().for_each(|&v| acc.push(v));
            Ok(BiasVarianceRow {
                x_t,
                kind,
                estimate: acc.mean(),
                bias: acc.mean() - truth,
                variance: acc.variance(),
                std_err: acc.std_err(),
            })
        })
        .collect()
}

/// Spread of an estimator across the noisy marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalSpread<T> {
    pub kind: EstimatorKind,
    /// Mean of `estimate(x_t) - s_2(x_t)` over `x_t ~ p_t`.
    pub mean_bias: T,
    pub bias_std_err: T,
    /// Variance of `estimate(x_t)` over `x_t ~ p_t`.
    pub variance: T,
}

/// Draws `n_outer` points `x_t ~ p_t` and evaluates the estimator at each
/// with `n_inner` posterior draws: the average bias and the variance of the
/// estimator over `x_t`, with the first-order error `delta` held fixed.
pub fn estimator_marginal_spread<T: Scalar, R: RngCore + ?Sized>(
    kind: EstimatorKind,
    gmm: &GaussianMixture1D<T>,
    sigma: T,
    delta: T,
    n_outer: usize,
    n_inner: usize,
    rng: &mut R,
) -> Result<MarginalSpread<T>> {
    if n_outer < 10 {
        return Err(domain(format!("need at least 10 outer draws, got {n_outer}")));
    }
    let marginal = gmm.perturb(sigma)?;
    let base = rng.next_u64();
    let pairs: Vec<(T, T)> = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let mut rs = seed::stream(base, "spread", i as u64);
            let x_t = marginal.sample_one(&mut rs);
            let truth = marginal.log_density_derivative(x_t, 2)?;
            let est = second_order_estimate(kind, gmm, sigma, x_t, delta, n_inner, &mut rs)?;
            Ok((est.estimate, est.estimate - truth))
        })
        .collect::<Result<_>>()?;
    let mut value = Welford::default();
    let mut bias = Welford::default();
    for &(v, b) in &pairs {
        value.push(v);
        bias.push(b);
    }
    Ok(MarginalSpread {
        kind,
        mean_bias: bias.mean(),
        bias_std_err: bias.std_err(),
        variance: value.variance(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Component;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conditional_scores() {
        assert_eq!(conditional_score(0.0, 0.5, 0.5, 1), -2.0);
        assert_eq!(conditional_score(1.7, -3.0, 0.5, 2), -4.0);
        assert_eq!(conditional_score(1.7, -3.0, 0.5, 3), 0.0);
    }

    #[test]
    fn first_term_is_kernel_score() {
        let g = GaussianMixture1D::<f64>::sharp_trimodal();
        let h1 = HkTerm::first(&g, 0.7).unwrap();
        for (x0, xt) in [(0.0, 1.0), (2.5, -0.3), (4.0, 4.0)] {
            assert_eq!(h1.eval(x0, xt).unwrap(), conditional_score(x0, xt, 0.7, 1));
        }
    }

    #[test]
    fn operator_on_first_term_gives_three_term_identity() {
        let sigma: f64 = 0.8;
        let s1 = 0.37;
        let p = prepare_from_derivatives(2, sigma, 1.1, &[s1]);
        let c = -1.0 / (sigma * sigma);
        assert_eq!(p.coefficients, vec![c, -s1, 1.0]);
        for x0 in [-1.0, 0.2, 3.0] {
            let u = conditional_score(x0, 1.1, sigma, 1);
            let expected = u * u - u * s1 + conditional_score(x0, 1.1, sigma, 2);
            assert!((p.eval(x0) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_prior_collapses_to_kernel_hessian() {
        // point-mass prior: marginal score equals the kernel score at x0
        let (x0, xt, sigma): (f64, f64, f64) = (0.4, 1.3, 0.6);
        let u = conditional_score(x0, xt, sigma, 1);
        let p = prepare_from_derivatives(2, sigma, xt, &[u]);
        assert!((p.eval(x0) + 1.0 / (sigma * sigma)).abs() < 1e-12);
    }

    #[test]
    fn third_order_term_matches_hand_expansion() {
        let (sigma, xt): (f64, f64) = (0.9, 0.25);
        let (s1, s2) = (-0.4, -1.3);
        let p = prepare_from_derivatives(3, sigma, xt, &[s1, s2]);
        let c = -1.0 / (sigma * sigma);
        for x0 in [-2.0, 0.0, 1.5] {
            let u = (x0 - xt) / (sigma * sigma);
            let h2 = c + u * u - u * s1;
            let dh2 = 2.0 * u * c - c * s1 - u * s2;
            let h3 = dh2 + h2 * (u - s1);
            assert!((p.eval(x0) - h3).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_order_rejected() {
        let g = GaussianMixture1D::<f64>::standard_normal();
        assert!(HkTerm::of_order(&g, 1.0, 0).is_err());
        assert!(HkTerm::first(&g, 0.0).is_err());
    }

    #[test]
    fn finite_difference_provider_limits() {
        let g = GaussianMixture1D::<f64>::sharp_trimodal().perturb(0.5).unwrap();
        let fs = FnScore(|x: f64| g.score(x));
        let fd = fs.score_derivatives(1.3, 3).unwrap();
        let exact = g.log_density_derivatives(1.3, 3).unwrap();
        assert!((fd[0] - exact[0]).abs() < 1e-14);
        assert!((fd[1] - exact[1]).abs() < 1e-7 * exact[1].abs().max(1.0));
        assert!((fd[2] - exact[2]).abs() < 1e-4 * exact[2].abs().max(1.0));
        assert!(matches!(fs.score_derivatives(1.3, 5), Err(Error::UnsupportedOrder { .. })));

        let h = HkTerm::of_order(&fs, 0.5, 6).unwrap();
        assert!(h.prepare(1.0).is_err());
    }

    #[test]
    fn gaussian_second_order_mc() {
        let g = GaussianMixture1D::<f64>::standard_normal();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let est = estimate_score_mc(&g, 1.0, 0.0, 2, 200_000, &mut rng).unwrap();
        assert!((est.estimate + 0.5).abs() < 3.0 * est.std_err, "{est:?}");

        // E[h_2] at any x_t for a Gaussian prior is -1/(s² + σ²)
        let g = GaussianMixture1D::<f64>::normal(0.0, 0.6).unwrap();
        let marginal = g.perturb(0.8).unwrap();
        let h2 = HkTerm::of_order(&marginal, 0.8, 2).unwrap().prepare(1.7).unwrap();
        let post = g.posterior(0.8, 1.7).unwrap();
        // exact expectation of a quadratic in u under the Gaussian posterior
        let pc = post.components()[0];
        let mu_u = (pc.mean - 1.7) / 0.64;
        let var_u = pc.std * pc.std / (0.64 * 0.64);
        let expect = h2.coefficients[0] + h2.coefficients[1] * mu_u + h2.coefficients[2] * (var_u + mu_u * mu_u);
        assert!((expect + 1.0 / (0.36 + 0.64)).abs() < 1e-12);
    }

    #[test]
    fn second_order_kinds_agree_without_error() {
        let g = GaussianMixture1D::<f64>::standard_normal();
        for kind in EstimatorKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let e = second_order_estimate(kind, &g, 1.0, 0.0, 0.0, 200_000, &mut rng).unwrap();
            assert!((e.estimate + 0.5).abs() < 3.0 * e.std_err, "{kind}: {e:?}");
        }
        assert!(second_order_estimate(EstimatorKind::T1, &g, 1.0, 0.0, 0.0, 1, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("T2".parse::<EstimatorKind>().unwrap(), EstimatorKind::T2);
        assert!("t4".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn bias_variance_requires_replicates() {
        let g = GaussianMixture1D::<f64>::standard_normal();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(estimator_bias_variance(EstimatorKind::T1, &g, 1.0, &[0.0], 0.0, 100, 9, &mut rng).is_err());
        let rows = estimator_bias_variance(EstimatorKind::T1, &g, 1.0, &[0.0, 1.0], 0.0, 1000, 20, &mut rng).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.variance > 0.0));
    }

    #[test]
    fn bias_variance_is_deterministic_per_seed() {
        let g = GaussianMixture1D::new(vec![Component::new(0.4, -1.0, 0.3), Component::new(0.6, 1.0, 0.5)]).unwrap();
        let run = || {
            estimator_bias_variance(EstimatorKind::T3, &g, 0.5, &[-1.0, 0.5], 0.1, 500, 12, &mut ChaCha8Rng::seed_from_u64(77))
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
