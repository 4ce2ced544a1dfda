//! Fully connected score network `s(x, σ; θ)` on the features `(x, ln σ)`,
//! with tanh hidden layers, a linear scalar output and hand-written
//! reverse-mode gradients.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;
use crate::seed;

pub const INPUT_WIDTH: usize = 2;
pub const OUTPUT_WIDTH: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpLayout {
    hidden: Vec<usize>,
}

impl MlpLayout {
    pub fn new(hidden: Vec<usize>) -> Result<Self> {
        if hidden.contains(&0) {
            return Err(domain("hidden widths must be positive"));
        }
        Ok(Self { hidden })
    }

    /// One hidden layer of width `h` has `4h + 1` parameters, so 25, 361 and
    /// 1321 map to widths 6, 90 and 330.
    pub fn for_param_count(count: usize) -> Result<Self> {
        if count < 5 || !(count - 1).is_multiple_of(4) {
            return Err(domain(format!(
                "no single-hidden-layer layout has {count} parameters (need 4h + 1)"
            )));
        }
        Self::new(vec![(count - 1) / 4])
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    /// `[2, h_1, …, h_L, 1]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(INPUT_WIDTH);
        w.extend_from_slice(&self.hidden);
        w.push(OUTPUT_WIDTH);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| (p[0] + 1) * p[1]).sum()
    }

    pub fn header(&self) -> String {
        let mut s = String::from("mlp");
        for w in self.widths() {
            s.push(' ');
            s.push_str(&w.to_string());
        }
        s
    }

    fn parse_header(line: &str) -> Result<Self> {
        let mut fields = line.split_whitespace();
        if fields.next() != Some("mlp") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `mlp <in> <hidden...> <out>`, found `{line}`"),
            });
        }
        let widths: Vec<usize> = fields
            .map(|f| {
                f.parse::<usize>().map_err(|_| Error::Parse {
                    line: 1,
                    msg: format!("bad layer width `{f}`"),
                })
            })
            .collect::<Result<_>>()?;
        if widths.len() < 2 || widths[0] != INPUT_WIDTH || widths[widths.len() - 1] != OUTPUT_WIDTH {
            return Err(Error::Parse {
                line: 1,
                msg: format!("layout must run {INPUT_WIDTH} -> ... -> {OUTPUT_WIDTH}, found {widths:?}"),
            });
        }
        Self::new(widths[1..widths.len() - 1].to_vec())
    }
}

/// Flat parameter vector, layer-major: each layer's weights (row-major,
/// `out x in`) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    layout: MlpLayout,
    values: Vec<T>,
}

/// One regression example for [`MlpParams::loss_and_grad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<T> {
    pub x_t: T,
    pub sigma: T,
    pub target: T,
    pub weight: T,
}

impl<T: Scalar> MlpParams<T> {
    /// Glorot-uniform weights and zero biases, deterministic per seed.
    pub fn init(layout: &MlpLayout, seed: u64) -> Self {
        let mut rng = seed::stream(seed, "mlp-init", 0);
        let widths = layout.widths();
        let mut values = Vec::with_capacity(layout.param_count());
        for p in widths.windows(2) {
            let (fan_in, fan_out) = (p[0], p[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                values.push(T::lit(rng.random_range(-limit..limit)));
            }
            values.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Self {
            layout: layout.clone(),
            values,
        }
    }

    pub fn zeros(layout: &MlpLayout) -> Self {
        Self {
            layout: layout.clone(),
            values: vec![T::zero(); layout.param_count()],
        }
    }

    pub fn from_vec(layout: &MlpLayout, values: Vec<T>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(domain(format!(
                "layout needs {} parameters, got {}",
                layout.param_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self {
            layout: layout.clone(),
            values,
        })
    }

    pub fn layout(&self) -> &MlpLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Network output, rejecting non-finite inputs or activations.
    pub fn forward(&self, x: T, sigma: T) -> Result<T> {
        if !(x.is_finite() && sigma.is_finite() && sigma > T::zero()) {
            return Err(domain(format!("network input must be finite with σ > 0, got x = {x}, σ = {sigma}")));
        }
        let out = self.eval(x, sigma);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite(format!("network output {out} at x = {x}, σ = {sigma}")))
        }
    }

    /// Unchecked forward pass.
    pub fn eval(&self, x: T, sigma: T) -> T {
        let mut buf = Vec::new();
        self.eval_batch(&[x], sigma, &mut buf)[0]
    }

    /// Outputs for many `x` at a shared `σ`; `scratch` is reused across calls.
    pub fn eval_batch<'b>(&self, xs: &[T], sigma: T, scratch: &'b mut Vec<T>) -> &'b [T] {
        let widths = self.layout.widths();
        let max_w = widths.iter().copied().max().unwrap_or(1);
        scratch.clear();
        scratch.resize(2 * max_w + xs.len(), T::zero());
        let (bufs, outs) = scratch.split_at_mut(2 * max_w);
        let (cur, next) = bufs.split_at_mut(max_w);
        let log_sigma = sigma.ln();
        let n_layers = widths.len() - 1;

        for (xi, out) in xs.iter().zip(outs.iter_mut()) {
            cur[0] = *xi;
            cur[1] = log_sigma;
            let mut offset = 0;
            let (mut a, mut b) = (&mut *cur, &mut *next);
            for l in 0..n_layers {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let w = &self.values[offset..offset + fan_in * fan_out];
                let bias = &self.values[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
                for o in 0..fan_out {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let mut z = bias[o];
                    for (wi, ai) in row.iter().zip(a.iter()) {
                        z += *wi * *ai;
                    }
                    b[o] = if l + 1 < n_layers { z.tanh() } else { z };
                }
                offset += (fan_in + 1) * fan_out;
                std::mem::swap(&mut a, &mut b);
            }
            *out = a[0];
        }
        outs
    }

    /// Runs forward storing every layer's activations into `acts`
    /// (concatenated, input first). Returns the output.
    fn forward_trace(&self, widths: &[usize], x: T, log_sigma: T, acts: &mut [T]) -> T {
        acts[0] = x;
        acts[1] = log_sigma;
        let n_layers = widths.len() - 1;
        let mut offset = 0;
        let mut a_start = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let b_start = a_start + fan_in;
            let (prev, rest) = acts.split_at_mut(b_start);
            let a = &prev[a_start..];
            let w = &self.values[offset..offset + fan_in * fan_out];
            let bias = &self.values[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut z = bias[o];
                for (wi, ai) in row.iter().zip(a.iter()) {
                    z += *wi * *ai;
                }
                rest[o] = if l + 1 < n_layers { z.tanh() } else { z };
            }
            offset += (fan_in + 1) * fan_out;
            a_start = b_start;
        }
        acts[a_start]
    }

    /// Backpropagates `d_out` through a stored trace, accumulating parameter
    /// gradients into `grad` (if given) and returning `d out / d x` scaled by `d_out`.
    fn backward_trace(&self, widths: &[usize], acts: &[T], d_out: T, mut grad: Option<&mut [T]>, delta: &mut Vec<T>, delta_prev: &mut Vec<T>) -> T {
        let n_layers = widths.len() - 1;
        let mut act_starts = Vec::with_capacity(widths.len());
        let mut param_starts = Vec::with_capacity(n_layers);
        let (mut a, mut p) = (0, 0);
        for l in 0..widths.len() {
            act_starts.push(a);
            a += widths[l];
            if l < n_layers {
                param_starts.push(p);
                p += (widths[l] + 1) * widths[l + 1];
            }
        }
        delta.clear();
        delta.push(d_out);
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let a_in = &acts[act_starts[l]..act_starts[l] + fan_in];
            let off = param_starts[l];
            if let Some(g) = grad.as_deref_mut() {
                for o in 0..fan_out {
                    let d = delta[o];
                    let row = &mut g[off + o * fan_in..off + (o + 1) * fan_in];
                    for (gi, ai) in row.iter_mut().zip(a_in) {
                        *gi += d * *ai;
                    }
                    g[off + fan_in * fan_out + o] += d;
                }
            }
            delta_prev.clear();
            delta_prev.resize(fan_in, T::zero());
            let w = &self.values[off..off + fan_in * fan_out];
            for o in 0..fan_out {
                let d = delta[o];
                for (dp, wi) in delta_prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *dp += d * *wi;
                }
            }
            if l > 0 {
                for (dp, ai) in delta_prev.iter_mut().zip(a_in) {
                    *dp *= T::one() - *ai * *ai;
                }
            }
            std::mem::swap(delta, delta_prev);
        }
        delta[0]
    }

    /// Output and its derivative with respect to `x`.
    pub fn forward_with_input_grad(&self, x: T, sigma: T) -> Result<(T, T)> {
        let out = self.forward(x, sigma)?;
        let widths = self.layout.widths();
        let mut acts = vec![T::zero(); widths.iter().sum()];
        self.forward_trace(&widths, x, sigma.ln(), &mut acts);
        let (mut d, mut dp) = (Vec::new(), Vec::new());
        let dx = self.backward_trace(&widths, &acts, T::one(), None, &mut d, &mut dp);
        Ok((out, dx))
    }

    /// Weighted mean squared error `(1/N) Σ w_i (s(x_i, σ_i) - target_i)²`
    /// and its exact gradient.
    pub fn loss_and_grad(&self, batch: &[Sample<T>]) -> Result<(T, Vec<T>)> {
        let mut grad = vec![T::zero(); self.values.len()];
        let loss = self.loss_and_grad_into(batch, &mut grad)?;
        Ok((loss, grad))
    }

    /// As [`Self::loss_and_grad`], overwriting `grad`.
    pub fn loss_and_grad_into(&self, batch: &[Sample<T>], grad: &mut [T]) -> Result<T> {
        if batch.is_empty() {
            return Err(domain("batch must be nonempty"));
        }
        assert_eq!(grad.len(), self.values.len(), "gradient buffer length");
        for (i, s) in batch.iter().enumerate() {
            if !(s.x_t.is_finite() && s.sigma.is_finite() && s.target.is_finite() && s.weight.is_finite()) {
                return Err(Error::NonFinite(format!("batch entry {i}: {s:?}")));
            }
            if s.weight < T::zero() || s.sigma <= T::zero() {
                return Err(domain(format!("batch entry {i} needs weight >= 0 and σ > 0: {s:?}")));
            }
        }
        grad.iter_mut().for_each(|g| *g = T::zero());
        let widths = self.layout.widths();
        let mut acts = vec![T::zero(); widths.iter().sum()];
        let (mut d, mut dp) = (Vec::new(), Vec::new());
        let inv_n = T::one() / T::from_usize_lossy(batch.len());
        let mut loss = T::zero();
        for s in batch {
            let out = self.forward_trace(&widths, s.x_t, s.sigma.ln(), &mut acts);
            let r = out - s.target;
            loss += s.weight * r * r;
            let d_out = T::lit(2.0) * s.weight * r * inv_n;
            self.backward_trace(&widths, &acts, d_out, Some(grad), &mut d, &mut dp);
        }
        let loss = loss * inv_n;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        Ok(loss)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.layout.header();
        s.push('\n');
        for v in &self.values {
            s.push_str(&format!("{v:?}\n"));
        }
        s
    }

    /// Parses the text format; if `expected` is given the header must match it.
    pub fn from_text(text: &str, expected: Option<&MlpLayout>) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty parameter file".into(),
        })?;
        let layout = MlpLayout::parse_header(header)?;
        if let Some(want) = expected {
            if *want != layout {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("layout `{}` does not match requested `{}`", layout.header(), want.header()),
                });
            }
        }
        let mut values = Vec::with_capacity(layout.param_count());
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v = line.parse::<T>().map_err(|_| Error::Parse {
                line: i + 2,
                msg: format!("`{line}` is not a number"),
            })?;
            values.push(v);
        }
        if values.len() != layout.param_count() {
            return Err(Error::Parse {
                line: values.len() + 1,
                msg: format!("expected {} parameters, found {}", layout.param_count(), values.len()),
            });
        }
        Self::from_vec(&layout, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path, expected: Option<&MlpLayout>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?, expected)
    }
}
