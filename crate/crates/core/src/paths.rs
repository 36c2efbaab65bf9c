//! Sampled piecewise-linear paths and their variation seminorms.

use crate::error::{arg, Error, Result};

/// Absolute tolerance used when matching times against the sample grid.
pub const TIME_TOL: f64 = 1e-12;

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// A `d`-dimensional path observed at strictly increasing times starting at
/// zero, interpolated linearly between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl SampledPath {
    /// Builds a path from per-sample rows.
    pub fn new(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return arg("all samples must have the same dimension");
        }
        let values = rows.into_iter().flatten().collect();
        Self::from_flat(times, values, dim)
    }

    /// Builds a path from row-major sample storage (`times.len() * dim` reals).
    pub fn from_flat(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return arg("path dimension must be positive");
        }
        if times.is_empty() {
            return arg("a path needs at least one sample");
        }
        if values.len() != times.len() * dim {
            return arg(format!(
                "expected {} values for {} samples of dimension {dim}, got {}",
                times.len() * dim,
                times.len(),
                values.len()
            ));
        }
        if times[0] != 0.0 {
            return arg("sample times must start at 0");
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return arg("sample times must be strictly increasing");
        }
        if times.iter().chain(values.iter()).any(|x| !x.is_finite()) {
            return arg("path contains non-finite entries");
        }
        Ok(Self { times, values, dim })
    }

    /// Samples `f` on the uniform grid `k * horizon / n_steps`.
    pub fn from_fn(horizon: f64, n_steps: usize, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        if n_steps == 0 || !(horizon > 0.0) {
            return arg("need a positive horizon and at least one step");
        }
        let times: Vec<f64> = uniform_grid(horizon, n_steps);
        let mut values = Vec::with_capacity(times.len() * dim);
        for &t in &times {
            let v = f(t);
            if v.len() != dim {
                return arg("sampling function returned the wrong dimension");
            }
            values.extend(v);
        }
        Self::from_flat(times, values, dim)
    }

    /// A path that holds `value` on the given grid.
    pub fn constant(times: Vec<f64>, value: &[f64]) -> Result<Self> {
        let values = times.iter().flat_map(|_| value.iter().copied()).collect();
        Self::from_flat(times, values, value.len())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Final sample time `T`.
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// `X_{t_j} - X_{t_i}` for grid indices.
    pub fn grid_increment(&self, i: usize, j: usize) -> Vec<f64> {
        self.value(j).iter().zip(self.value(i)).map(|(b, a)| b - a).collect()
    }

    /// Index of the sample at time `t`, if `t` lies on the grid.
    pub fn grid_index(&self, t: f64) -> Option<usize> {
        let pos = self.times.partition_point(|&s| s < t - TIME_TOL);
        (pos < self.times.len() && (self.times[pos] - t).abs() <= TIME_TOL).then_some(pos)
    }

    /// Like [`grid_index`](Self::grid_index) but reports off-grid times as an error.
    pub fn require_grid_index(&self, t: f64) -> Result<usize> {
        self.grid_index(t)
            .ok_or_else(|| Error::Argument(format!("time {t} is not a sample time")))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= -TIME_TOL && t <= self.horizon() + TIME_TOL) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon())));
        }
        Ok(())
    }

    /// Segment `i` and weight `w` such that `t = (1-w) t_i + w t_{i+1}`.
    /// For single-sample paths returns `(0, 0.0)`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        self.check_time(t)?;
        let n = self.len();
        if n == 1 {
            return Ok((0, 0.0));
        }
        if let Some(i) = self.grid_index(t) {
            return Ok(if i == n - 1 { (n - 2, 1.0) } else { (i, 0.0) });
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Ok((i, w))
    }

    /// Interpolated value `X_t`.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        let (i, w) = self.locate(t)?;
        if w == 0.0 {
            return Ok(self.value(i).to_vec());
        }
        Ok(self
            .value(i)
            .iter()
            .zip(self.value(i + 1))
            .map(|(a, b)| a + w * (b - a))
            .collect())
    }

    /// Increment `X_t - X_s` for `0 <= s <= t <= T`.
    pub fn increment(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        self.check_time(s)?;
        self.check_time(t)?;
        if s > t {
            return Err(Error::Domain(format!("increment needs s <= t, got s={s}, t={t}")));
        }
        if s == t {
            return Ok(vec![0.0; self.dim]);
        }
        let a = self.value_at(s)?;
        let b = self.value_at(t)?;
        Ok(b.iter().zip(&a).map(|(b, a)| b - a).collect())
    }

    /// Exact p-variation over the sample grid (Euclidean norm on increments).
    pub fn p_variation(&self, p: f64) -> Result<f64> {
        Ok(self.p_variation_with_partition(p)?.0)
    }

    /// The p-variation together with a maximising partition.
    pub fn p_variation_with_partition(&self, p: f64) -> Result<(f64, Partition)> {
        check_p(p)?;
        let (best, parts) = p_variation_dp(self.len(), p, |i, j| norm2(&self.grid_increment(i, j)));
        let sum = *best.last().expect("non-empty");
        Ok((sum.powf(1.0 / p), Partition { indices: parts }))
    }

    /// `||X||_{p,[0,t_j]}` for every grid index `j`.
    pub fn running_p_variation(&self, p: f64) -> Result<Vec<f64>> {
        check_p(p)?;
        let (best, _) = p_variation_dp(self.len(), p, |i, j| norm2(&self.grid_increment(i, j)));
        Ok(best.into_iter().map(|s| s.powf(1.0 / p)).collect())
    }

    /// Hölder seminorm restricted to sample pairs; zero for a single sample.
    pub fn holder_seminorm(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return arg(format!("Hölder exponent must lie in (0, 1], got {alpha}"));
        }
        let n = self.len();
        let mut best = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                let r = norm2(&self.grid_increment(i, j)) / (self.times[j] - self.times[i]).powf(alpha);
                best = best.max(r);
            }
        }
        Ok(best)
    }

    /// Euclidean length of the path on `[0, t]`.
    pub fn path_length_1var(&self, t: f64) -> Result<f64> {
        let (seg, w) = self.locate(t)?;
        let mut total = 0.0;
        for i in 0..seg {
            total += norm2(&self.grid_increment(i, i + 1));
        }
        if self.len() > 1 && w > 0.0 {
            total += w * norm2(&self.grid_increment(seg, seg + 1));
        }
        Ok(total)
    }

    /// Re-samples the path on `grid`. Linear interpolation keeps the
    /// geometric path unchanged when `grid` contains every original sample.
    pub fn resample(&self, grid: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * self.dim);
        for &t in grid {
            values.extend(self.value_at(t)?);
        }
        Self::from_flat(grid.to_vec(), values, self.dim)
    }

    /// Time-reversed path `t -> X_{T-t}` on the mirrored grid.
    pub fn reversed(&self) -> Self {
        let horizon = self.horizon();
        let n = self.len();
        let mut times: Vec<f64> = self.times.iter().rev().map(|t| horizon - t).collect();
        times[0] = 0.0;
        let mut values = Vec::with_capacity(self.values.len());
        for i in (0..n).rev() {
            values.extend_from_slice(self.value(i));
        }
        Self { times, values, dim: self.dim }
    }

    /// Row-major copy of the samples as vectors.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.value(i).to_vec()).collect()
    }
}

/// A partition of the sample grid given by increasing sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    indices: Vec<usize>,
}

impl Partition {
    pub fn new(indices: Vec<usize>, n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return arg("cannot partition an empty grid");
        }
        if indices.first() != Some(&0) || indices.last() != Some(&(n_samples - 1)) {
            return arg("partition must start at 0 and end at the last sample");
        }
        if n_samples > 1 && indices.windows(2).any(|w| w[1] <= w[0]) {
            return arg("partition indices must be strictly increasing");
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// `sum |X_{t_i, t_{i+1}}|^p` along this partition.
    pub fn p_sum(&self, path: &SampledPath, p: f64) -> f64 {
        self.indices
            .windows(2)
            .fold(0.0, |acc, w| acc + norm2(&path.grid_increment(w[0], w[1])).powf(p))
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return arg(format!("p-variation exponent must be >= 1, got {p}"));
    }
    Ok(())
}

/// Grid `k * horizon / n` for `k = 0..=n`, with the last point pinned to `horizon`.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
    g[n] = horizon;
    g
}

/// Dynamic program for `sup_D sum dist(t_i, t_{i+1})^p` over partitions of
/// `0..n` that end at each index.
///
/// Returns the running suprema (not raised to `1/p`) and one maximising
/// partition of the whole grid. Sums accumulate left to right along the
/// partition, so the result matches an exhaustive search bit for bit.
pub fn p_variation_dp(n: usize, p: f64, dist: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<usize>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut best = vec![0.0_f64; n];
    let mut prev = vec![0usize; n];
    for j in 1..n {
        let mut b = f64::NEG_INFINITY;
        let mut arg = 0;
        for i in 0..j {
            let cand = best[i] + dist(i, j).powf(p);
            if cand > b {
                b = cand;
                arg = i;
            }
        }
        best[j] = b;
        prev[j] = arg;
    }
    let mut parts = vec![n - 1];
    let mut j = n - 1;
    while j > 0 {
        j = prev[j];
        parts.push(j);
    }
    parts.reverse();
    (best, parts)
}
