use super::GaussianMixture1D;
use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Fixed composite-Simpson grid used for expectations under a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec<T> {
    /// Number of nodes; must be odd and at least 3.
    pub points: usize,
    /// Half-width of the default grid in units of the largest component std.
    pub half_width_stds: T,
    /// Explicit integration bounds, overriding the default grid.
    pub bounds: Option<(T, T)>,
}

impl<T: Scalar> Default for QuadratureSpec<T> {
    fn default() -> Self {
        Self {
            points: 20_001,
            half_width_stds: T::lit(10.0),
            bounds: None,
        }
    }
}

impl<T: Scalar> QuadratureSpec<T> {
    pub fn with_points(points: usize) -> Self {
        Self {
            points,
            ..Self::default()
        }
    }

    /// Grid bounds for `gmm`.
    pub fn bounds_for(&self, gmm: &GaussianMixture1D<T>) -> (T, T) {
        self.bounds.unwrap_or_else(|| {
            let pad = self.half_width_stds * gmm.max_std();
            (gmm.min_mean() - pad, gmm.max_mean() + pad)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInformation<T> {
    pub value: T,
    /// Probability mass of the mixture outside the quadrature grid.
    pub tail_mass: f64,
    /// Set when `tail_mass` exceeds `1e-10`.
    pub tail_warning: bool,
}

/// Composite Simpson rule for `f` on `[lo, hi]` with `points` nodes.
pub fn integrate_simpson<T: Scalar, F: Fn(T) -> T>(f: F, lo: T, hi: T, points: usize) -> Result<T> {
    if points < 3 || points.is_multiple_of(2) {
        return Err(domain(format!("Simpson rule needs an odd node count >= 3, got {points}")));
    }
    if !(hi > lo) {
        return Err(domain(format!("empty integration interval [{lo}, {hi}]")));
    }
    let n = points - 1;
    let h = (hi - lo) / T::from_usize_lossy(n);
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let x = lo + h * T::from_usize_lossy(i);
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        acc += w * f(x);
    }
    Ok(acc * h / T::lit(3.0))
}

fn tail_mass<T: Scalar>(gmm: &GaussianMixture1D<T>, lo: T, hi: T) -> f64 {
    let sqrt2 = std::f64::consts::SQRT_2;
    gmm.components()
        .iter()
        .map(|c| {
            let (w, m, s) = (c.weight.as_f64(), c.mean.as_f64(), c.std.as_f64());
            let below = 0.5 * libm::erfc((m - lo.as_f64()) / (s * sqrt2));
            let above = 0.5 * libm::erfc((hi.as_f64() - m) / (s * sqrt2));
            w * (below + above)
        })
        .sum()
}

/// Fisher information `E[s(x)²]` of the mixture by deterministic quadrature.
pub fn fisher_information<T: Scalar>(
    gmm: &GaussianMixture1D<T>,
    spec: &QuadratureSpec<T>,
) -> Result<FisherInformation<T>> {
    let (lo, hi) = spec.bounds_for(gmm);
    let value = integrate_simpson(
        |x| {
            let s = gmm.score(x);
            let p = gmm.pdf(x).unwrap_or(T::zero());
            s * s * p
        },
        lo,
        hi,
        spec.points,
    )?;
    let tail_mass = tail_mass(gmm, lo, hi);
    Ok(FisherInformation {
        value,
        tail_mass,
        tail_warning: tail_mass > 1e-10,
    })
}
