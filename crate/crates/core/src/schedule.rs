//! Variance-exploding noise schedule `σ(t) = σ_min (σ_max/σ_min)^t` with zero drift.

use rand::Rng;

use crate::error::{domain, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    GeometricVe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule<T> {
    sigma_min: T,
    sigma_max: T,
    kind: ScheduleKind,
}

impl<T: Scalar> Default for NoiseSchedule<T> {
    fn default() -> Self {
        Self::new(T::lit(0.01), T::lit(50.0)).expect("default schedule is valid")
    }
}

impl<T: Scalar> NoiseSchedule<T> {
    pub fn new(sigma_min: T, sigma_max: T) -> Result<Self> {
        if !(sigma_min > T::zero() && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(domain(format!(
                "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
            )));
        }
        Ok(Self {
            sigma_min,
            sigma_max,
            kind: ScheduleKind::GeometricVe,
        })
    }

    pub fn sigma_min(&self) -> T {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> T {
        self.sigma_max
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    fn log_ratio(&self) -> T {
        (self.sigma_max / self.sigma_min).ln()
    }

    fn check_t(t: T) -> Result<()> {
        if t >= T::zero() && t <= T::one() {
            Ok(())
        } else {
            Err(domain(format!("t must lie in [0, 1], got {t}")))
        }
    }

    pub fn sigma_at(&self, t: T) -> Result<T> {
        Self::check_t(t)?;
        Ok(self.sigma_unchecked(t))
    }

    #[inline]
    pub(crate) fn sigma_unchecked(&self, t: T) -> T {
        self.sigma_min * (self.log_ratio() * t).exp()
    }

    /// `g(t)² = d σ(t)² / dt = 2 σ(t)² ln(σ_max/σ_min)`.
    pub fn diffusion_coeff_sq(&self, t: T) -> Result<T> {
        let s = self.sigma_at(t)?;
        Ok(T::lit(2.0) * s * s * self.log_ratio())
    }

    /// Inverse of `sigma_at`.
    pub fn t_of_sigma(&self, sigma: T) -> Result<T> {
        if !(sigma >= self.sigma_min && sigma <= self.sigma_max) {
            return Err(domain(format!(
                "sigma {sigma} outside [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        Ok(((sigma / self.sigma_min).ln() / self.log_ratio()).min(T::one()))
    }

    /// `n` geometrically spaced levels from `σ_min` to `σ_max` inclusive.
    pub fn levels(&self, n: usize) -> Result<Vec<T>> {
        match n {
            0 => Err(domain("need at least one noise level")),
            1 => Ok(vec![self.sigma_min]),
            _ => Ok((0..n)
                .map(|i| {
                    if i == n - 1 {
                        self.sigma_max
                    } else {
                        self.sigma_unchecked(T::from_usize_lossy(i) / T::from_usize_lossy(n - 1))
                    }
                })
                .collect()),
        }
    }
}

/// Forward perturbation `x_t = x0 + σ z` with `z ~ N(0, 1)`. The noise is
/// returned too so the kernel score `-z/σ` never goes through `x0 - x_t`.
pub fn perturb<T: Scalar, R: Rng + ?Sized>(x0: T, sigma: T, rng: &mut R) -> (T, T) {
    perturb_with_noise(x0, sigma, T::standard_normal(rng))
}

#[inline]
pub fn perturb_with_noise<T: Scalar>(x0: T, sigma: T, z: T) -> (T, T) {
    (x0 + sigma * z, z)
}
