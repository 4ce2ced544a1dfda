//! Weighted denoising score matching: batches, the training loop,
//! gradient-variance measurement and the DSM/SM decomposition check.

use rand::Rng;
use rayon::prelude::*;

use crate::density::{fisher_information, GaussianMixture1D, QuadratureSpec};
use crate::error::{domain, Error, Result};
use crate::net::{MlpLayout, MlpParams, Sample};
use crate::optim::Adam;
use crate::sampling::{energy_distance, reverse_sde_sample, SamplerConfig};
use crate::scalar::Scalar;
use crate::schedule::{perturb, NoiseSchedule};
use crate::seed;
use crate::stats::{mean_se, moving_average, Welford};
use crate::weighting::{Weighter, WeightingScheme};

/// How the noise level of each batch element is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseDraw<T> {
    /// `t ~ U[0, 1]` independently per element.
    UniformTime,
    /// Every element at the same `σ`.
    Level(T),
}

/// Draws `(x_t, σ, target, weight)` tuples for one clean density.
#[derive(Debug, Clone)]
pub struct BatchSource<T> {
    density: GaussianMixture1D<T>,
    schedule: NoiseSchedule<T>,
}

impl<T: Scalar> BatchSource<T> {
    pub fn new(density: &GaussianMixture1D<T>, schedule: &NoiseSchedule<T>) -> Self {
        Self {
            density: density.clone(),
            schedule: *schedule,
        }
    }

    fn sigma<R: Rng + ?Sized>(&self, draw: NoiseDraw<T>, rng: &mut R) -> Result<T> {
        match draw {
            NoiseDraw::UniformTime => self.schedule.sigma_at(T::unit_uniform(rng)),
            NoiseDraw::Level(s) if s > T::zero() && s.is_finite() => Ok(s),
            NoiseDraw::Level(s) => Err(domain(format!("noise level must be positive, got {s}"))),
        }
    }

    /// DSM tuples with unit weight: `x_0 ~ p`, `x_t = x_0 + σ z`, target `-z/σ`.
    pub fn raw_dsm_batch<R: Rng + ?Sized>(&self, draw: NoiseDraw<T>, n: usize, rng: &mut R) -> Result<Vec<Sample<T>>> {
        if n == 0 {
            return Err(domain("batch size must be at least 1"));
        }
        (0..n)
            .map(|_| {
                let sigma = self.sigma(draw, rng)?;
                let x0 = self.density.sample_one(rng);
                let (x_t, z) = perturb(x0, sigma, rng);
                Ok(Sample {
                    x_t,
                    sigma,
                    target: -z / sigma,
                    weight: T::one(),
                })
            })
            .collect()
    }

    /// DSM batch weighted by `weighter` at each `(σ, x_t)`.
    pub fn dsm_batch<R: Rng + ?Sized>(&self, weighter: &Weighter<T>, draw: NoiseDraw<T>, n: usize, rng: &mut R) -> Result<Vec<Sample<T>>> {
        let mut batch = self.raw_dsm_batch(draw, n, rng)?;
        apply_weights(weighter, &mut batch);
        Ok(batch)
    }

    /// Same sampling as [`Self::dsm_batch`] but regressing onto the exact
    /// marginal score of `p_σ` at `x_t`.
    pub fn sm_batch<R: Rng + ?Sized>(&self, weighter: &Weighter<T>, draw: NoiseDraw<T>, n: usize, rng: &mut R) -> Result<Vec<Sample<T>>> {
        let mut batch = self.raw_dsm_batch(draw, n, rng)?;
        for s in &mut batch {
            s.target = self.density.perturbed_score_hessian(s.sigma, s.x_t).0;
        }
        apply_weights(weighter, &mut batch);
        Ok(batch)
    }
}

pub fn apply_weights<T: Scalar>(weighter: &Weighter<T>, batch: &mut [Sample<T>]) {
    for s in batch {
        s.weight = weighter.weight(s.sigma, s.x_t);
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T> {
    pub density: GaussianMixture1D<T>,
    pub schedule: NoiseSchedule<T>,
    pub weighting: WeightingScheme,
    pub layout: MlpLayout,
    pub batch_size: usize,
    pub iterations: usize,
    pub lr: T,
    pub eval_every: usize,
    /// Energy distances are only computed at evaluation points at or after
    /// this iteration. Records before it still carry the training loss.
    pub eval_from: usize,
    /// Samples per side for each energy distance; 0 disables evaluation.
    pub eval_samples: usize,
    pub sampler_steps: usize,
    /// Also record the analytic-score sampler's energy distance.
    pub baseline: bool,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(density: GaussianMixture1D<T>, weighting: WeightingScheme, layout: MlpLayout) -> Self {
        Self {
            density,
            schedule: NoiseSchedule::default(),
            weighting,
            layout,
            batch_size: 128,
            iterations: 80_000,
            lr: T::lit(1e-3),
            eval_every: 2000,
            eval_from: 0,
            eval_samples: 5000,
            sampler_steps: 1000,
            baseline: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.iterations == 0 || self.eval_every == 0 {
            return Err(domain("batch size, iterations and eval interval must be at least 1"));
        }
        if !(self.lr > T::zero() && self.lr.is_finite()) {
            return Err(domain(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.eval_samples > 0 && self.sampler_steps == 0 {
            return Err(domain("sampler needs at least one step"));
        }
        Ok(())
    }

    fn sampler(&self) -> SamplerConfig<T> {
        SamplerConfig {
            steps: self.sampler_steps,
            n_samples: self.eval_samples,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord<T> {
    pub iteration: usize,
    /// Mean training loss over the preceding interval (a held-out batch for
    /// the initial record).
    pub loss: T,
    pub model_sample_ed: Option<T>,
    pub gen_sample_ed: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog<T> {
    pub records: Vec<EvalRecord<T>>,
}

impl<T: Scalar> RunLog<T> {
    pub fn iterations(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.iteration).collect()
    }

    /// `(iteration, ed)` for the records where the model was evaluated.
    pub fn model_ed(&self) -> Vec<(usize, T)> {
        self.records.iter().filter_map(|r| r.model_sample_ed.map(|e| (r.iteration, e))).collect()
    }

    pub fn gen_ed(&self) -> Vec<(usize, T)> {
        self.records.iter().filter_map(|r| r.gen_sample_ed.map(|e| (r.iteration, e))).collect()
    }

    /// Last value of the centered moving average of the model energy distance.
    pub fn final_smoothed_model_ed(&self, window: usize) -> Option<T> {
        final_smoothed(&self.model_ed(), window)
    }

    pub fn final_smoothed_gen_ed(&self, window: usize) -> Option<T> {
        final_smoothed(&self.gen_ed(), window)
    }
}

fn final_smoothed<T: Scalar>(series: &[(usize, T)], window: usize) -> Option<T> {
    let vals: Vec<T> = series.iter().map(|p| p.1).collect();
    moving_average(&vals, window).last().copied()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: MlpParams<T>,
    pub log: RunLog<T>,
}

/// Trains from a seeded initialization. See [`train_with`].
pub fn train<T: Scalar>(cfg: &TrainConfig<T>) -> Result<TrainOutcome<T>> {
    train_with(cfg, |_, _| Ok(()))
}

/// Runs Adam on the weighted DSM loss, calling `checkpoint` with the current
/// parameters at iteration 0 and every `eval_every` iterations.
///
/// Training, evaluation data and each sampler run draw from separate streams
/// of `cfg.seed`, so enabling evaluation does not change the trajectory.
pub fn train_with<T, F>(cfg: &TrainConfig<T>, mut checkpoint: F) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    F: FnMut(usize, &MlpParams<T>) -> Result<()>,
{
    cfg.validate()?;
    let weighter = Weighter::new(cfg.weighting, &cfg.density, &cfg.schedule, &[])?;
    let source = BatchSource::new(&cfg.density, &cfg.schedule);
    let mut params = MlpParams::init(&cfg.layout, seed::derive_seed(cfg.seed, "init", 0));
    let mut opt = Adam::new(params.len(), cfg.lr)?;
    let mut rng = seed::stream(cfg.seed, "train", 0);
    let mut grad = vec![T::zero(); params.len()];
    let mut log = RunLog::default();

    let mut held_out_rng = seed::stream(cfg.seed, "held-out", 0);
    let held_out = source.dsm_batch(&weighter, NoiseDraw::UniformTime, cfg.batch_size, &mut held_out_rng)?;
    let (init_loss, _) = params.loss_and_grad(&held_out)?;
    checkpoint(0, &params)?;
    log.records.push(evaluate(cfg, &params, 0, init_loss, cfg.eval_from == 0)?);

    let mut interval_loss = Welford::default();
    for it in 1..=cfg.iterations {
        let batch = source.dsm_batch(&weighter, NoiseDraw::UniformTime, cfg.batch_size, &mut rng)?;
        let loss = params.loss_and_grad_into(&batch, &mut grad).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged {
                iteration: it,
                loss: f64::NAN,
            },
            other => other,
        })?;
        opt.step(params.as_mut_slice(), &grad);
        if params.as_slice().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                loss: loss.as_f64(),
            });
        }
        interval_loss.push(loss);
        if it % cfg.eval_every == 0 {
            checkpoint(it, &params)?;
            let rec = evaluate(cfg, &params, it, interval_loss.mean(), it >= cfg.eval_from)?;
            log.records.push(rec);
            interval_loss = Welford::default();
        }
    }
    Ok(TrainOutcome { params, log })
}

fn evaluate<T: Scalar>(cfg: &TrainConfig<T>, params: &MlpParams<T>, iteration: usize, loss: T, due: bool) -> Result<EvalRecord<T>> {
    let mut rec = EvalRecord {
        iteration,
        loss,
        model_sample_ed: None,
        gen_sample_ed: None,
    };
    if cfg.eval_samples == 0 || !due {
        return Ok(rec);
    }
    let idx = iteration as u64;
    let data = cfg.density.sample(cfg.eval_samples, &mut seed::stream(cfg.seed, "eval-data", idx))?;
    let sampler = cfg.sampler();
    let model = reverse_sde_sample(params, &cfg.schedule, &sampler, seed::derive_seed(cfg.seed, "eval-model", idx))?;
    rec.model_sample_ed = Some(energy_distance(&model, &data)?);
    if cfg.baseline {
        let truth = reverse_sde_sample(&cfg.density, &cfg.schedule, &sampler, seed::derive_seed(cfg.seed, "eval-truth", idx))?;
        rec.gen_sample_ed = Some(energy_distance(&truth, &data)?);
    }
    Ok(rec)
}

/// Trace of the unbiased sample covariance of per-batch gradient vectors.
pub fn gradient_covariance_trace<T: Scalar>(params: &MlpParams<T>, batches: &[Vec<Sample<T>>]) -> Result<T> {
    if batches.len() < 2 {
        return Err(domain("need at least two batches for a covariance"));
    }
    let mut acc = vec![Welford::<T>::default(); params.len()];
    let mut grad = vec![T::zero(); params.len()];
    for b in batches {
        params.loss_and_grad_into(b, &mut grad)?;
        for (a, g) in acc.iter_mut().zip(&grad) {
            a.push(*g);
        }
    }
    Ok(acc.iter().map(|a| a.variance()).sum())
}

#[derive(Debug, Clone)]
pub struct GradVarConfig<T> {
    pub levels: Vec<T>,
    pub batches: usize,
    pub seeds: Vec<u64>,
    /// Weightings compared on common random numbers.
    pub schemes: Vec<WeightingScheme>,
    /// Measure only at initialization instead of along a heuristic-weighted
    /// training run.
    pub at_init: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradVarRow<T> {
    pub iteration: usize,
    pub sigma: T,
    pub scheme: WeightingScheme,
    /// One trace per seed, in seed order.
    pub traces: Vec<T>,
    pub mean: T,
    pub std_err: T,
}

/// For each seed, trains with heuristic weighting (unless `at_init`) and at
/// every checkpoint measures, per level and scheme, the covariance trace of
/// `batches` gradients at a pinned `σ`. All schemes see the same `(x_0, z)`.
///
/// `base` supplies density, schedule, layout, batch size, iterations and the
/// checkpoint interval; its weighting and seed are ignored.
pub fn gradient_variance<T: Scalar>(base: &TrainConfig<T>, gv: &GradVarConfig<T>) -> Result<Vec<GradVarRow<T>>> {
    if gv.batches < 2 || gv.seeds.is_empty() || gv.levels.is_empty() || gv.schemes.is_empty() {
        return Err(domain("gradient variance needs >= 2 batches and at least one seed, level and scheme"));
    }
    let weighters: Vec<Weighter<T>> = gv
        .schemes
        .iter()
        .map(|&s| Weighter::new(s, &base.density, &base.schedule, &gv.levels))
        .collect::<Result<_>>()?;
    let source = BatchSource::new(&base.density, &base.schedule);

    // per seed: list of (iteration, traces[level][scheme])
    let per_seed: Vec<Vec<(usize, Vec<Vec<T>>)>> = gv
        .seeds
        .par_iter()
        .map(|&s| {
            let mut cfg = base.clone();
            cfg.seed = s;
            cfg.weighting = WeightingScheme::Heuristic;
            cfg.eval_samples = 0;
            let mut out = Vec::new();
            let mut measure = |it: usize, params: &MlpParams<T>| -> Result<()> {
                let mut by_level = Vec::with_capacity(gv.levels.len());
                for (li, &sigma) in gv.levels.iter().enumerate() {
                    let mut rng = seed::stream(seed::derive_seed(s, "gradvar", it as u64), "level", li as u64);
                    let raw: Vec<Vec<Sample<T>>> = (0..gv.batches)
                        .map(|_| source.raw_dsm_batch(NoiseDraw::Level(sigma), cfg.batch_size, &mut rng))
                        .collect::<Result<_>>()?;
                    let traces = weighters
                        .iter()
                        .map(|w| {
                            let mut batches = raw.clone();
                            for b in &mut batches {
                                apply_weights(w, b);
                            }
                            gradient_covariance_trace(params, &batches)
                        })
                        .collect::<Result<Vec<T>>>()?;
                    by_level.push(traces);
                }
                out.push((it, by_level));
                Ok(())
            };
            if gv.at_init {
                let params = MlpParams::init(&cfg.layout, seed::derive_seed(s, "init", 0));
                measure(0, &params)?;
            } else {
                train_with(&cfg, &mut measure)?;
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (ci, &(iteration, _)) in per_seed[0].iter().enumerate() {
        for (li, &sigma) in gv.levels.iter().enumerate() {
            for (si, &scheme) in gv.schemes.iter().enumerate() {
                let traces: Vec<T> = per_seed.iter().map(|p| p[ci].1[li][si]).collect();
                let (mean, std_err) = mean_se(&traces);
                rows.push(GradVarRow {
                    iteration,
                    sigma,
                    scheme,
                    traces,
                    mean,
                    std_err,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PythagoreanGap<T> {
    pub l_dsm: T,
    pub l_sm: T,
    pub gap: T,
    /// `1/σ² - 𝓘(σ)` by quadrature.
    pub analytic: T,
    /// Standard error of the Monte-Carlo gap.
    pub gap_std_err: T,
}

/// Monte-Carlo DSM and SM losses of `score` at one noise level, and the
/// model-independent constant separating them.
pub fn pythagorean_gap<T: Scalar, F: Fn(T) -> T, R: Rng + ?Sized>(
    gmm: &GaussianMixture1D<T>,
    sigma: T,
    score: F,
    n: usize,
    rng: &mut R,
) -> Result<PythagoreanGap<T>> {
    if n < 1000 {
        return Err(domain(format!("need n >= 1000 draws, got {n}")));
    }
    let (mut dsm, mut sm, mut diff) = (Welford::default(), Welford::default(), Welford::default());
    for _ in 0..n {
        let x0 = gmm.sample_one(rng);
        let (x_t, z) = perturb(x0, sigma, rng);
        let s = score(x_t);
        let a = s + z / sigma;
        let b = s - gmm.perturbed_score_hessian(sigma, x_t).0;
        dsm.push(a * a);
        sm.push(b * b);
        diff.push(a * a - b * b);
    }
    let marginal = gmm.perturb(sigma)?;
    let fisher = fisher_information(&marginal, &QuadratureSpec::default())?.value;
    Ok(PythagoreanGap {
        l_dsm: dsm.mean(),
        l_sm: sm.mean(),
        gap: diff.mean(),
        analytic: T::one() / (sigma * sigma) - fisher,
        gap_std_err: diff.std_err(),
    })
}
