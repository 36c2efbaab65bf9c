//! Randomized stopping driven by linear signature functionals.
//!
//! A policy `l` defines `θ_t = ⟨l, 𝕏̂_{0,t}⟩` on the time-augmented driver.
//! With an `Expo(1)` threshold `Z`, the randomized stopping time is the first
//! `t` with `H_t = ∫_0^t θ_s² ds ≥ Z`, and the conditional expected reward is
//! `Y_0 + ∫_0^T e^{-H_t} dY_t`.
//!
//! On the sample grid `H` is the running trapezoid sum of `θ²`, interpolated
//! linearly inside each cell, and `Y` is interpolated linearly as well. The
//! cell integral of `e^{-H}` against `dY` is then evaluated in closed form, so
//! the integral representation and the average of `Y_{τ∧T}` over threshold
//! draws agree exactly.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::paths::SampledPath;
use crate::rng::sub_seed;
use crate::signature::{pvar_threshold_time, running_signatures, time_augment, TIME_LETTER};
use crate::tensor::{LinearFunctional, Word};

/// `H` beyond which `e^{-H}` underflows to zero.
const H_UNDERFLOW: f64 = 745.2;

/// A linear signature stopping policy over the alphabet `{1 (time), 2..=d+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingPolicy {
    functional: LinearFunctional,
    level: usize,
}

impl StoppingPolicy {
    pub fn new(functional: LinearFunctional, level: usize) -> Result<Self> {
        if functional.degree() > level {
            return arg(format!(
                "policy degree {} exceeds truncation level {level}",
                functional.degree()
            ));
        }
        Ok(Self { functional, level })
    }

    /// The policy that never stops (`θ ≡ 0`).
    pub fn never(level: usize) -> Self {
        Self { functional: LinearFunctional::zero(), level }
    }

    pub fn functional(&self) -> &LinearFunctional {
        &self.functional
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { functional: self.functional.scaled(c), level: self.level }
    }

    /// `|l| + deg(l)`.
    pub fn budget_usage(&self) -> f64 {
        self.functional.l1_norm() + self.functional.degree() as f64
    }

    /// `θ_{t_k} = ⟨l, 𝕏̂_{0,t_k}⟩` along the augmented driver.
    pub fn theta(&self, driver: &SampledPath) -> Result<Vec<f64>> {
        let aug = time_augment(driver);
        let max = self.functional.max_letter() as usize;
        if max > aug.dim() {
            return arg(format!("policy uses letter {max} but the augmented path has {} letters", aug.dim()));
        }
        running_signatures(&aug, self.functional.degree())
            .iter()
            .map(|s| self.functional.pair(s))
            .collect()
    }
}

/// Law of the randomization threshold `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Randomizer {
    /// Exponential with rate 1.
    #[default]
    Exponential,
}

impl Randomizer {
    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            Randomizer::Exponential => {
                if z <= 0.0 {
                    0.0
                } else {
                    -(-z).exp_m1()
                }
            }
        }
    }

    /// `n` independent draws from `seed`.
    pub fn draws(&self, seed: u64, n: usize) -> Vec<f64> {
        let mut rng = crate::rng::rng(seed);
        match self {
            Randomizer::Exponential => (0..n)
                .map(|_| loop {
                    let z: f64 = Exp1.sample(&mut rng);
                    if z > 0.0 {
                        break z;
                    }
                })
                .collect(),
        }
    }
}

/// Running trapezoid integral `H_{t_k} = ∫_0^{t_k} θ² ds`.
pub fn cumulative_hazard(theta: &[f64], times: &[f64]) -> Vec<f64> {
    let mut h = Vec::with_capacity(theta.len());
    h.push(0.0);
    for k in 1..theta.len() {
        let dt = times[k] - times[k - 1];
        let prev = h[k - 1];
        h.push(prev + 0.5 * dt * (theta[k - 1] * theta[k - 1] + theta[k] * theta[k]));
    }
    h
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    let n = times.len();
    if t >= times[n - 1] {
        return values[n - 1];
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    values[k] + w * (values[k + 1] - values[k])
}

/// Mean of `e^{-H}` over a cell where `H` moves linearly from `h0` to `h1`.
fn cell_weight(h0: f64, h1: f64) -> f64 {
    let dh = h1 - h0;
    let base = (-h0).exp();
    if dh == 0.0 {
        base
    } else {
        base * (-(-dh).exp_m1()) / dh
    }
}

/// `Y_0 + ∫_0^{t_end} e^{-H} dY` for piecewise-linear `H` and `Y`, where
/// `t_end` is the sample time with index `end`.
pub fn weighted_value(theta: &[f64], times: &[f64], y: &[f64], end: usize) -> f64 {
    let mut total = y[0];
    let mut h0 = 0.0;
    for k in 0..end {
        let dt = times[k + 1] - times[k];
        let h1 = h0 + 0.5 * dt * (theta[k] * theta[k] + theta[k + 1] * theta[k + 1]);
        total += (y[k + 1] - y[k]) * cell_weight(h0, h1);
        if h1 > H_UNDERFLOW {
            break;
        }
        h0 = h1;
    }
    total
}

/// First `t` with `H_t >= z`, locating the crossing by linear interpolation of
/// `H`; `f64::INFINITY` if the threshold is never reached.
pub fn randomized_stop_time(policy: &StoppingPolicy, path: &SampledPath, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return arg("randomization threshold must be positive");
    }
    let theta = policy.theta(path)?;
    Ok(stop_time_from_hazard(&cumulative_hazard(&theta, path.times()), path.times(), z))
}

fn stop_time_from_hazard(h: &[f64], times: &[f64], z: f64) -> f64 {
    let k = h.partition_point(|&v| v < z);
    if k == h.len() {
        return f64::INFINITY;
    }
    if k == 0 {
        return times[0];
    }
    let (h0, h1) = (h[k - 1], h[k]);
    times[k - 1] + (z - h0) / (h1 - h0) * (times[k] - times[k - 1])
}

/// First sample time with `⟨l, 𝕏̂_{0,t}⟩ >= 1`; `f64::INFINITY` if none.
pub fn hitting_time(policy: &StoppingPolicy, path: &SampledPath) -> Result<f64> {
    let theta = policy.theta(path)?;
    Ok(theta
        .iter()
        .position(|&v| v >= 1.0)
        .map(|k| path.time(k))
        .unwrap_or(f64::INFINITY))
}

/// `1 - F̃(t) = exp(-∫_0^t θ² ds)`.
pub fn survival_weight(policy: &StoppingPolicy, path: &SampledPath, t: f64) -> Result<f64> {
    let theta = policy.theta(path)?;
    let h = cumulative_hazard(&theta, path.times());
    path.locate(t)?;
    Ok((-interpolate(path.times(), &h, t)).exp())
}

/// Adapted reward `Y_t`.
#[derive(Clone)]
pub enum PayoffKind {
    AmericanCall,
    AmericanPut,
    /// `f(t, price samples up to t)`; must only look at the prefix it is given.
    Custom(Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for PayoffKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PayoffKind::AmericanCall => f.write_str("AmericanCall"),
            PayoffKind::AmericanPut => f.write_str("AmericanPut"),
            PayoffKind::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Discounted exercise value `e^{-rt} (S_t - K)^+` or `e^{-rt} (K - S_t)^+`.
#[derive(Debug, Clone)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub strike: f64,
    pub rate: f64,
}

impl PayoffSpec {
    pub fn call(strike: f64, rate: f64) -> Self {
        Self { kind: PayoffKind::AmericanCall, strike, rate }
    }

    pub fn put(strike: f64, rate: f64) -> Self {
        Self { kind: PayoffKind::AmericanPut, strike, rate }
    }

    pub fn custom(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { kind: PayoffKind::Custom(Arc::new(f)), strike: 0.0, rate: 0.0 }
    }

    /// `Y_{t_k}` at every sample time of a one-dimensional price path.
    pub fn evaluate(&self, price: &SampledPath) -> Vec<f64> {
        let s = price.values();
        let d = price.dim();
        (0..price.len())
            .map(|k| {
                let t = price.time(k);
                match &self.kind {
                    PayoffKind::AmericanCall => (-self.rate * t).exp() * (s[k * d] - self.strike).max(0.0),
                    PayoffKind::AmericanPut => (-self.rate * t).exp() * (self.strike - s[k * d]).max(0.0),
                    PayoffKind::Custom(f) => f(t, &s[..(k + 1) * d]),
                }
            })
            .collect()
    }
}

/// One simulated scenario: the driver whose signature feeds the policy and
/// the price process the payoff reads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPath {
    pub driver: SampledPath,
    pub price: SampledPath,
}

/// A scenario generator. Implementations must be deterministic in `seed`.
pub trait PathModel: Send + Sync {
    fn driver_dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn simulate(&self, seed: u64, n_steps: usize) -> Result<ModelPath>;
}

fn brownian_increments(seed: u64, n_steps: usize, horizon: f64) -> Result<SampledPath> {
    if n_steps == 0 {
        return arg("need at least one time step");
    }
    let mut rng = crate::rng::rng(seed);
    let sd = (horizon / n_steps as f64).sqrt();
    let mut values = Vec::with_capacity(n_steps + 1);
    values.push(0.0);
    let mut b = 0.0;
    for _ in 0..n_steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        b += sd * z;
        values.push(b);
    }
    SampledPath::from_flat(crate::paths::uniform_grid(horizon, n_steps), values, 1)
}

/// `S_t = S_0 exp((r - σ²/2) t + σ B_t)`; the driver is `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricBrownian {
    pub s0: f64,
    pub rate: f64,
    pub sigma: f64,
    pub horizon: f64,
}

impl PathModel for GeometricBrownian {
    fn driver_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn simulate(&self, seed: u64, n_steps: usize) -> Result<ModelPath> {
        let b = brownian_increments(seed, n_steps, self.horizon)?;
        let drift = self.rate - 0.5 * self.sigma * self.sigma;
        let prices: Vec<f64> = (0..b.len())
            .map(|k| self.s0 * (drift * b.time(k) + self.sigma * b.value(k)[0]).exp())
            .collect();
        let price = SampledPath::from_flat(b.times().to_vec(), prices, 1)?;
        Ok(ModelPath { driver: b, price })
    }
}

/// `S_t = S_0 + σ B_t`; the driver is `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BachelierModel {
    pub s0: f64,
    pub sigma: f64,
    pub horizon: f64,
}

impl PathModel for BachelierModel {
    fn driver_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn simulate(&self, seed: u64, n_steps: usize) -> Result<ModelPath> {
        let b = brownian_increments(seed, n_steps, self.horizon)?;
        let prices: Vec<f64> = b.values().iter().map(|x| self.s0 + self.sigma * x).collect();
        let price = SampledPath::from_flat(b.times().to_vec(), prices, 1)?;
        Ok(ModelPath { driver: b, price })
    }
}

/// `Y_0 + ∫_0^T e^{-∫_0^t θ² ds} dY_t` along one scenario.
pub fn conditional_value(policy: &StoppingPolicy, path: &ModelPath, payoff: &PayoffSpec) -> Result<f64> {
    let theta = policy.theta(&path.driver)?;
    let y = payoff.evaluate(&path.price);
    Ok(weighted_value(&theta, path.driver.times(), &y, y.len() - 1))
}

/// `Y_{τ∧T}` for the randomized stopping time with threshold `z`.
pub fn stopped_reward(policy: &StoppingPolicy, path: &ModelPath, payoff: &PayoffSpec, z: f64) -> Result<f64> {
    let tau = randomized_stop_time(policy, &path.driver, z)?;
    let y = payoff.evaluate(&path.price);
    let times = path.driver.times();
    Ok(interpolate(times, &y, tau.min(path.driver.horizon())))
}

/// Truncation and horizon of the linearized objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    /// Truncation level `N` of the signature.
    pub level: usize,
    /// The integral stops at `S_k`, the first time the running p-variation
    /// of the augmented driver reaches `k`. `None` integrates to `T`.
    pub threshold: Option<(f64, f64)>,
}

/// `Y_0 + ∫_0^{S_k} ⟨exp⧢(-(l⧢l)1), 𝕏̂^{≤N}_{0,t}⟩ dY_t` with trapezoid weights.
pub fn conditional_value_linearized(
    policy: &StoppingPolicy,
    path: &ModelPath,
    payoff: &PayoffSpec,
    lin: Linearization,
) -> Result<f64> {
    let l = policy.functional();
    let q = l.shuffle(l).appended(TIME_LETTER);
    if q.degree() > lin.level {
        return arg(format!(
            "(l⧢l)1 has degree {} above truncation level {}",
            q.degree(),
            lin.level
        ));
    }
    let e = q.scaled(-1.0).exp_shuffle(lin.level);
    let aug = time_augment(&path.driver);
    let end_time = match lin.threshold {
        Some((k, p)) => pvar_threshold_time(&aug, k, p)?,
        None => aug.horizon(),
    };
    let end = aug.require_grid_index(end_time)?;
    let sigs = running_signatures(&aug, lin.level);
    let w: Vec<f64> = sigs.iter().take(end + 1).map(|s| e.pair(s)).collect::<Result<_>>()?;
    let y = payoff.evaluate(&path.price);
    let mut total = y[0];
    for k in 0..end {
        total += 0.5 * (w[k] + w[k + 1]) * (y[k + 1] - y[k]);
    }
    Ok(total)
}

/// Monte Carlo settings for valuation and policy search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Signature truncation level `N` (maximum policy degree).
    pub level: usize,
    /// Budget `K` on `|l| + deg(l)`.
    pub budget: f64,
    /// Paths used while searching; defaults to `n_paths`.
    pub n_train_paths: Option<usize>,
    pub n_starts: usize,
    /// Objective evaluations allowed per start.
    pub max_evals: usize,
    pub randomizer: Randomizer,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            n_steps: 256,
            seed: 0,
            level: 4,
            budget: 10.0,
            n_train_paths: None,
            n_starts: 3,
            max_evals: 400,
            randomizer: Randomizer::Exponential,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 || self.n_starts == 0 || self.max_evals == 0 {
            return arg("Monte Carlo counts must be positive");
        }
        if !(self.budget > 0.0) {
            return arg("policy budget must be positive");
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, std_error: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }
}

/// Seed of the `i`-th scenario for the stream `(seed, salt)`.
fn path_seed(seed: u64, salt: u64, i: usize) -> u64 {
    sub_seed(sub_seed(seed, salt), i as u64)
}

const SALT_EVAL: u64 = 0;
const SALT_TRAIN: u64 = 1;
const SALT_TEST: u64 = 2;

fn simulate_set(model: &dyn PathModel, seed: u64, salt: u64, n: usize, n_steps: usize) -> Result<Vec<ModelPath>> {
    (0..n)
        .into_par_iter()
        .map(|i| model.simulate(path_seed(seed, salt, i), n_steps))
        .collect()
}

/// Average of [`conditional_value`] over `cfg.n_paths` scenarios.
pub fn mc_value(policy: &StoppingPolicy, payoff: &PayoffSpec, model: &dyn PathModel, cfg: &McConfig) -> Result<Estimate> {
    cfg.validate()?;
    mc_value_salted(policy, payoff, model, cfg, SALT_EVAL, cfg.n_paths)
}

fn mc_value_salted(
    policy: &StoppingPolicy,
    payoff: &PayoffSpec,
    model: &dyn PathModel,
    cfg: &McConfig,
    salt: u64,
    n: usize,
) -> Result<Estimate> {
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let path = model.simulate(path_seed(cfg.seed, salt, i), cfg.n_steps)?;
            conditional_value(policy, &path, payoff)
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&values))
}

/// Outcome of a policy search.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub policy: StoppingPolicy,
    /// Value on the training scenarios (common random numbers).
    pub in_sample: Estimate,
    /// Value on fresh scenarios.
    pub out_of_sample: Estimate,
    pub evaluations: usize,
    /// Set when the evaluation budget ran out before the search converged.
    pub budget_exhausted: bool,
    /// `(evaluation index, best in-sample value so far)`.
    pub trace: Vec<(usize, f64)>,
}

/// Signature features of the training scenarios, laid out `[path][word][time]`.
struct FeatureBank {
    words: Vec<Word>,
    n_t: usize,
    n_paths: usize,
    features: Vec<f32>,
    rewards: Vec<f64>,
    times: Vec<f64>,
}

impl FeatureBank {
    fn build(paths: &[ModelPath], payoff: &PayoffSpec, level: usize) -> Result<Self> {
        let letters = paths[0].driver.dim() + 1;
        let words: Vec<Word> = (0..=level).flat_map(|n| Word::all_of_degree(letters, n)).collect();
        let n_t = paths[0].driver.len();
        let blocks: Vec<(Vec<f32>, Vec<f64>)> = paths
            .par_iter()
            .map(|p| {
                let sigs = running_signatures(&time_augment(&p.driver), level);
                let mut block = Vec::with_capacity(words.len() * n_t);
                for w in &words {
                    let (deg, idx) = (w.degree(), w.index(letters).expect("word in alphabet"));
                    block.extend(sigs.iter().map(|s| s.levels()[deg][idx] as f32));
                }
                (block, payoff.evaluate(&p.price))
            })
            .collect();
        let mut features = Vec::with_capacity(paths.len() * words.len() * n_t);
        let mut rewards = Vec::with_capacity(paths.len() * n_t);
        for (f, y) in blocks {
            features.extend(f);
            rewards.extend(y);
        }
        Ok(Self { words, n_t, n_paths: paths.len(), features, rewards, times: paths[0].driver.times().to_vec() })
    }

    fn feature(&self, p: usize, w: usize) -> &[f32] {
        let start = (p * self.words.len() + w) * self.n_t;
        &self.features[start..start + self.n_t]
    }

    fn theta(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_paths * self.n_t];
        for (w, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                self.add_word(&mut theta, w, c);
            }
        }
        theta
    }

    fn add_word(&self, theta: &mut [f64], w: usize, c: f64) {
        theta.par_chunks_mut(self.n_t).enumerate().for_each(|(p, row)| {
            for (t, f) in row.iter_mut().zip(self.feature(p, w)) {
                *t += c * *f as f64;
            }
        });
    }

    /// Objective at `scale · (θ + δ F_w)` without materializing the candidate.
    fn objective_moved(&self, theta: &[f64], w: usize, delta: f64, scale: f64) -> f64 {
        let vals: Vec<f64> = theta
            .par_chunks(self.n_t)
            .zip(self.rewards.par_chunks(self.n_t))
            .enumerate()
            .map(|(p, (th, y))| {
                let row: Vec<f64> = th
                    .iter()
                    .zip(self.feature(p, w))
                    .map(|(t, f)| scale * (t + delta * *f as f64))
                    .collect();
                weighted_value(&row, &self.times, y, self.n_t - 1)
            })
            .collect();
        vals.iter().sum::<f64>() / self.n_paths as f64
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let vals: Vec<f64> = theta
            .par_chunks(self.n_t)
            .zip(self.rewards.par_chunks(self.n_t))
            .map(|(th, y)| weighted_value(th, &self.times, y, self.n_t - 1))
            .collect();
        vals.iter().sum::<f64>() / self.n_paths as f64
    }
}

fn budget_scale(coeffs: &[f64], words: &[Word], budget: f64) -> Option<f64> {
    let norm: f64 = coeffs.iter().map(|c| c.abs()).sum();
    let deg = coeffs
        .iter()
        .zip(words)
        .filter(|(c, _)| **c != 0.0)
        .map(|(_, w)| w.degree())
        .max()
        .unwrap_or(0) as f64;
    let allowed = budget - deg;
    if allowed <= 0.0 {
        return None;
    }
    Some(if norm > allowed { allowed / norm } else { 1.0 })
}

/// Maximizes the Monte Carlo value over policies with `|l| + deg(l) <= K` by
/// multi-start compass search on a fixed set of training scenarios.
pub fn optimize_policy(payoff: &PayoffSpec, model: &dyn PathModel, cfg: &McConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    let n_train = cfg.n_train_paths.unwrap_or(cfg.n_paths).max(1);
    let train = simulate_set(model, cfg.seed, SALT_TRAIN, n_train, cfg.n_steps)?;
    let bank = FeatureBank::build(&train, payoff, cfg.level)?;
    drop(train);
    let n_words = bank.words.len();

    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; n_words]];
    if cfg.n_starts > 1 {
        let mut stop_now = vec![0.0; n_words];
        stop_now[0] = cfg.budget;
        starts.push(stop_now);
    }
    let mut rng = crate::rng::stream(cfg.seed, 0xA11CE);
    while starts.len() < cfg.n_starts {
        let mut c: Vec<f64> = (0..n_words).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Some(s) = budget_scale(&c, &bank.words, cfg.budget) {
            c.iter_mut().for_each(|x| *x *= s * 0.5);
        }
        starts.push(c);
    }

    let mut evaluations = 0usize;
    let mut best_overall: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut exhausted = false;
    for start in starts {
        let mut coeffs = start;
        let mut theta = bank.theta(&coeffs);
        let mut value = bank.objective(&theta);
        let mut evals = 1usize;
        evaluations += 1;
        let mut step = 0.25 * cfg.budget.min(4.0);
        let min_step = 1e-3;
        'search: while step >= min_step {
            let mut improved = false;
            for w in 0..n_words {
                for dir in [1.0, -1.0] {
                    if evals >= cfg.max_evals {
                        exhausted = true;
                        break 'search;
                    }
                    let mut cand = coeffs.clone();
                    cand[w] += dir * step;
                    let Some(scale) = budget_scale(&cand, &bank.words, cfg.budget) else {
                        continue;
                    };
                    let v = bank.objective_moved(&theta, w, dir * step, scale);
                    evals += 1;
                    evaluations += 1;
                    if v > value + 1e-12 {
                        value = v;
                        cand.iter_mut().for_each(|x| *x *= scale);
                        coeffs = cand;
                        bank.add_word(&mut theta, w, dir * step);
                        if scale < 1.0 {
                            theta.par_iter_mut().for_each(|x| *x *= scale);
                        }
                        improved = true;
                        let best = best_overall.as_ref().map_or(v, |b| b.0.max(v));
                        trace.push((evaluations, best));
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best_overall.as_ref().is_none_or(|b| value > b.0) {
            best_overall = Some((value, coeffs));
        }
        let best = best_overall.as_ref().map(|b| b.0).unwrap_or(value);
        trace.push((evaluations, best));
    }
    let (_, coeffs) = best_overall.expect("at least one start");
    let functional = LinearFunctional::from_terms(bank.words.iter().cloned().zip(coeffs));
    let policy = StoppingPolicy::new(functional, cfg.level)?;
    let in_sample = mc_value_salted(&policy, payoff, model, cfg, SALT_TRAIN, n_train)?;
    let out_of_sample = mc_value_salted(&policy, payoff, model, cfg, SALT_TEST, cfg.n_paths)?;
    Ok(OptimizationResult { policy, in_sample, out_of_sample, evaluations, budget_exhausted: exhausted, trace })
}

/// Result of [`price_american_option`].
#[derive(Debug, Clone)]
pub struct PricingResult {
    /// Out-of-sample value of the optimized policy.
    pub price: f64,
    pub std_error: f64,
    pub in_sample: Estimate,
    pub optimization: OptimizationResult,
}

/// Prices an American call or put by optimizing a signature stopping policy.
pub fn price_american_option(
    strike: f64,
    rate: f64,
    put: bool,
    model: &dyn PathModel,
    cfg: &McConfig,
) -> Result<PricingResult> {
    let payoff = if put { PayoffSpec::put(strike, rate) } else { PayoffSpec::call(strike, rate) };
    let optimization = optimize_policy(&payoff, model, cfg)?;
    Ok(PricingResult {
        price: optimization.out_of_sample.mean,
        std_error: optimization.out_of_sample.std_error,
        in_sample: optimization.in_sample,
        optimization,
    })
}

/// Monte Carlo draws of `Y_{τ(z)∧T}` for `n` thresholds, for checking the
/// integral representation.
pub fn randomized_rewards(
    policy: &StoppingPolicy,
    path: &ModelPath,
    payoff: &PayoffSpec,
    randomizer: Randomizer,
    seed: u64,
    n: usize,
) -> Result<Vec<f64>> {
    let theta = policy.theta(&path.driver)?;
    let times = path.driver.times();
    let h = cumulative_hazard(&theta, times);
    let y = payoff.evaluate(&path.price);
    let horizon = path.driver.horizon();
    Ok(randomizer
        .draws(seed, n)
        .into_iter()
        .map(|z| interpolate(times, &y, stop_time_from_hazard(&h, times, z).min(horizon)))
        .collect())
}
