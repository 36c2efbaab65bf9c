//! Kalman–Bucy filtering, likelihoods and penalty-based robust expectations.
//!
//! Signal and observation follow
//! `dS = αS dt + σ dB¹`, `dY = cS dt + dB²` with `d⟨B¹, B²⟩ = ρ dt`,
//! `S_0 ~ N(μ₀, Σ₀)` and `Y_0 = 0`. Dimensions are `S ∈ R^m`, `Y ∈ R^d`,
//! `B¹ ∈ R^l`.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::paths::SampledPath;
use crate::rough::{rough_integral, ControlledPath, RoughPath};

/// Model coefficients `γ = (α, σ, c, ρ)` at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub alpha: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub rho: DMatrix<f64>,
}

impl Coefficients {
    pub fn new(alpha: DMatrix<f64>, sigma: DMatrix<f64>, c: DMatrix<f64>, rho: DMatrix<f64>) -> Result<Self> {
        let m = alpha.nrows();
        if alpha.ncols() != m || sigma.nrows() != m || c.ncols() != m {
            return Err(Error::Model("α must be m×m, σ m×l and c d×m".into()));
        }
        if rho.nrows() != sigma.ncols() || rho.ncols() != c.nrows() {
            return Err(Error::Model("ρ must be l×d".into()));
        }
        Ok(Self { alpha, sigma, c, rho })
    }

    /// Scalar model (`m = l = d = 1`).
    pub fn scalar(alpha: f64, sigma: f64, c: f64, rho: f64) -> Self {
        let s = |x| DMatrix::from_element(1, 1, x);
        Self { alpha: s(alpha), sigma: s(sigma), c: s(c), rho: s(rho) }
    }

    pub fn signal_dim(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.sigma.ncols()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Smallest eigenvalue of `I - ρρᵀ`.
    pub fn correlation_margin(&self) -> f64 {
        let l = self.noise_dim();
        let g = DMatrix::identity(l, l) - &self.rho * self.rho.transpose();
        SymmetricEigen::new(g).eigenvalues.min()
    }

    /// `Rcᵀ + σρ`.
    pub fn gain(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        r * self.c.transpose() + &self.sigma * &self.rho
    }
}

/// Coefficients that are constant between knots; `values[i]` applies on
/// `[knots[i], knots[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCoefficients {
    knots: Vec<f64>,
    values: Vec<Coefficients>,
}

impl PiecewiseCoefficients {
    pub fn new(knots: Vec<f64>, values: Vec<Coefficients>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return arg("need one coefficient set per knot");
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return arg("knots must be strictly increasing");
        }
        let (m, l, d) = (values[0].signal_dim(), values[0].noise_dim(), values[0].obs_dim());
        if values.iter().any(|v| v.signal_dim() != m || v.noise_dim() != l || v.obs_dim() != d) {
            return Err(Error::Model("coefficient dimensions differ between knots".into()));
        }
        Ok(Self { knots, values })
    }

    pub fn constant(coeffs: Coefficients) -> Self {
        Self { knots: vec![0.0], values: vec![coeffs] }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[Coefficients] {
        &self.values
    }

    pub fn at(&self, t: f64) -> &Coefficients {
        let k = self.knots.partition_point(|&s| s <= t + crate::paths::TIME_TOL);
        &self.values[k.saturating_sub(1)]
    }

    /// `Err` if `I - ρρᵀ` fails the PSD check at some knot.
    pub fn check_admissible(&self) -> Result<()> {
        for (t, v) in self.knots.iter().zip(&self.values) {
            let margin = v.correlation_margin();
            if margin < -1e-10 {
                return Err(Error::Model(format!(
                    "I - ρρᵀ is not positive semi-definite at t={t} (eigenvalue {margin:e})"
                )));
            }
        }
        Ok(())
    }
}

/// Linear-Gaussian signal/observation model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    pub gamma: PiecewiseCoefficients,
    pub mu0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
}

impl LinearGaussianModel {
    /// Checks dimensions and the symmetry of `Σ₀`. Correlation admissibility
    /// is checked by the operations that need it.
    pub fn new(gamma: PiecewiseCoefficients, mu0: DVector<f64>, sigma0: DMatrix<f64>) -> Result<Self> {
        let m = gamma.values[0].signal_dim();
        if mu0.len() != m || sigma0.nrows() != m || sigma0.ncols() != m {
            return Err(Error::Model("μ₀ and Σ₀ must match the signal dimension".into()));
        }
        if (&sigma0 - sigma0.transpose()).amax() > 1e-12 {
            return Err(Error::Model("Σ₀ is not symmetric".into()));
        }
        Ok(Self { gamma, mu0, sigma0 })
    }

    pub fn scalar(coeffs: Coefficients, mu0: f64, sigma0: f64) -> Result<Self> {
        Self::new(
            PiecewiseCoefficients::constant(coeffs),
            DVector::from_element(1, mu0),
            DMatrix::from_element(1, 1, sigma0),
        )
    }

    pub fn signal_dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.gamma.values[0].obs_dim()
    }

    pub fn check_admissible(&self) -> Result<()> {
        self.gamma.check_admissible()?;
        if SymmetricEigen::new(self.sigma0.clone()).eigenvalues.min() < -1e-10 {
            return Err(Error::Model("Σ₀ is not positive semi-definite".into()));
        }
        Ok(())
    }
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clamped).
fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(0.5 * (a + a.transpose()));
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0).sqrt()));
    &e.eigenvectors * s * e.eigenvectors.transpose()
}

fn normals(rng: &mut crate::rng::Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Euler–Maruyama sample of `(S, Y)` on a uniform grid over `[0, horizon]`.
pub fn simulate_pair(
    model: &LinearGaussianModel,
    seed: u64,
    n_steps: usize,
    horizon: f64,
) -> Result<(SampledPath, SampledPath)> {
    model.check_admissible()?;
    if n_steps == 0 || !(horizon > 0.0) {
        return arg("need n_steps >= 1 and a positive horizon");
    }
    let mut rng = crate::rng::rng(seed);
    let times = crate::paths::uniform_grid(horizon, n_steps);
    let m = model.signal_dim();
    let d = model.obs_dim();
    let mut s = &model.mu0 + psd_sqrt(&model.sigma0) * normals(&mut rng, m);
    let mut y = DVector::zeros(d);
    let mut sig = Vec::with_capacity((n_steps + 1) * m);
    let mut obs = Vec::with_capacity((n_steps + 1) * d);
    sig.extend(s.iter());
    obs.extend(y.iter());
    for k in 0..n_steps {
        let dt = times[k + 1] - times[k];
        let g = model.gamma.at(times[k]);
        let l = g.noise_dim();
        let db2 = normals(&mut rng, d) * dt.sqrt();
        let resid = psd_sqrt(&(DMatrix::identity(l, l) - &g.rho * g.rho.transpose()));
        let db1 = &g.rho * &db2 + resid * normals(&mut rng, l) * dt.sqrt();
        let ds = &g.alpha * &s * dt + &g.sigma * db1;
        y += &g.c * &s * dt + db2;
        s += ds;
        sig.extend(s.iter());
        obs.extend(y.iter());
    }
    Ok((
        SampledPath::from_flat(times.clone(), sig, m)?,
        SampledPath::from_flat(times, obs, d)?,
    ))
}

/// Conditional mean and covariance at one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    pub q: DVector<f64>,
    pub r: DMatrix<f64>,
    /// Set when negative eigenvalues of `R` were clamped at this step.
    pub clamped: bool,
}

fn clamp_psd(r: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let e = SymmetricEigen::new(r.clone());
    if e.eigenvalues.min() >= 0.0 {
        return (r, false);
    }
    let lam = DMatrix::from_diagonal(&e.eigenvalues.map(|x| x.max(0.0)));
    (&e.eigenvectors * lam * e.eigenvectors.transpose(), true)
}

/// Euler march of the Kalman–Bucy filter along the observation grid.
pub fn kalman_bucy(model: &LinearGaussianModel, observation: &SampledPath) -> Result<Vec<FilterState>> {
    kalman_bucy_from(&model.gamma, &model.mu0, &model.sigma0, observation)
}

fn kalman_bucy_from(
    gamma: &PiecewiseCoefficients,
    q0: &DVector<f64>,
    r0: &DMatrix<f64>,
    observation: &SampledPath,
) -> Result<Vec<FilterState>> {
    gamma.check_admissible()?;
    if observation.dim() != gamma.values[0].obs_dim() {
        return arg(format!(
            "observation has dimension {}, model expects {}",
            observation.dim(),
            gamma.values[0].obs_dim()
        ));
    }
    let mut q = q0.clone();
    let mut r = r0.clone();
    let mut out = Vec::with_capacity(observation.len());
    out.push(FilterState { t: observation.time(0), q: q.clone(), r: r.clone(), clamped: false });
    for k in 0..observation.len() - 1 {
        let t = observation.time(k);
        let dt = observation.time(k + 1) - t;
        let g = gamma.at(t);
        let dy = DVector::from_column_slice(&observation.grid_increment(k, k + 1));
        let gain = g.gain(&r);
        let dq = &g.alpha * &q * dt + &gain * (dy - &g.c * &q * dt);
        let dr = (&g.sigma * g.sigma.transpose() + &g.alpha * &r + &r * g.alpha.transpose()
            - &gain * gain.transpose())
            * dt;
        q += dq;
        r += dr;
        r = 0.5 * (&r + r.transpose());
        let (r_next, clamped) = clamp_psd(r);
        r = r_next;
        if q.iter().chain(r.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: k + 1, what: "non-finite filter state".into() });
        }
        out.push(FilterState { t: observation.time(k + 1), q: q.clone(), r: r.clone(), clamped });
    }
    Ok(out)
}

fn check_states(observation: &SampledPath, states: &[FilterState]) -> Result<()> {
    if states.len() != observation.len() {
        return arg("filter states do not match the observation grid");
    }
    if states.iter().zip(observation.times()).any(|(s, &t)| (s.t - t).abs() > crate::paths::TIME_TOL) {
        return arg("filter state times do not match the observation grid");
    }
    Ok(())
}

/// Innovation `V_t = ∫_0^t (dY - cq ds)` on the grid.
pub fn innovation(model: &LinearGaussianModel, observation: &SampledPath, states: &[FilterState]) -> Result<SampledPath> {
    check_states(observation, states)?;
    let d = observation.dim();
    let mut v = DVector::zeros(d);
    let mut values = Vec::with_capacity(observation.len() * d);
    values.extend(v.iter());
    for k in 0..observation.len() - 1 {
        let t = observation.time(k);
        let dt = observation.time(k + 1) - t;
        let c = &model.gamma.at(t).c;
        let dy = DVector::from_column_slice(&observation.grid_increment(k, k + 1));
        v += dy - c * &states[k].q * dt;
        values.extend(v.iter());
    }
    SampledPath::from_flat(observation.times().to_vec(), values, d)
}

/// `-∫ cq·dY + ½∫|cq|² ds` with left-point sums, up to the last state.
pub fn neg_log_likelihood_ito(model: &LinearGaussianModel, observation: &SampledPath, states: &[FilterState]) -> Result<f64> {
    check_states(observation, states)?;
    Ok(nll_ito_upto(&model.gamma, observation, states, observation.len() - 1))
}

fn nll_ito_upto(gamma: &PiecewiseCoefficients, observation: &SampledPath, states: &[FilterState], end: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..end {
        let t = observation.time(k);
        let dt = observation.time(k + 1) - t;
        let cq = &gamma.at(t).c * &states[k].q;
        let dy = DVector::from_column_slice(&observation.grid_increment(k, k + 1));
        total += -cq.dot(&dy) + 0.5 * cq.norm_squared() * dt;
    }
    total
}

/// `∫ψ dζ + ½∫(|cq|² + tr(c(Rcᵀ+σρ))) ds` with `ψ = -cq` integrated as a
/// rough integral with Gubinelli derivative `ψ′ = -c(Rcᵀ+σρ)`.
pub fn neg_log_likelihood_pathwise(model: &LinearGaussianModel, observation: &RoughPath, states: &[FilterState]) -> Result<f64> {
    check_states(observation.base(), states)?;
    Ok(nll_pathwise_upto(&model.gamma, observation, states, observation.len() - 1))
}

fn nll_pathwise_upto(gamma: &PiecewiseCoefficients, rp: &RoughPath, states: &[FilterState], end: usize) -> f64 {
    let d = rp.dim();
    let base = rp.base();
    let mut total = 0.0;
    for k in 0..end {
        let t = base.time(k);
        let dt = base.time(k + 1) - t;
        let g = gamma.at(t);
        let cq = &g.c * &states[k].q;
        let ck = &g.c * g.gain(&states[k].r);
        let dy = base.grid_increment(k, k + 1);
        let area = rp.segment_area(k);
        let mut step = 0.0;
        for b in 0..d {
            step -= cq[b] * dy[b];
            for c in 0..d {
                step -= ck[(b, c)] * area[c * d + b];
            }
        }
        total += step + 0.5 * (cq.norm_squared() + ck.trace()) * dt;
    }
    total
}

/// Running prior cost `z(q, R, γ)`.
pub type PriorIntegrand = Arc<dyn Fn(&DVector<f64>, &DMatrix<f64>, &Coefficients) -> f64 + Send + Sync>;
/// Initial cost `g(μ₀, Σ₀)`.
pub type InitialCost = Arc<dyn Fn(&DVector<f64>, &DMatrix<f64>) -> f64 + Send + Sync>;

/// Penalty exponents and prior terms.
#[derive(Clone)]
pub struct PenaltyConfig {
    pub k1: f64,
    pub k2: f64,
    pub z: Option<PriorIntegrand>,
    pub g: Option<InitialCost>,
    /// Fixed reference level subtracted from every `β` before the transform.
    /// When unset, the smallest finite `β` in the candidate set is used.
    pub anchor: Option<f64>,
}

impl std::fmt::Debug for PenaltyConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PenaltyConfig")
            .field("k1", &self.k1)
            .field("k2", &self.k2)
            .field("z", &self.z.is_some())
            .field("g", &self.g.is_some())
            .field("anchor", &self.anchor)
            .finish()
    }
}

impl PenaltyConfig {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !(k1 > 0.0) || !(k2 >= 1.0) {
            return arg("penalty needs k1 > 0 and k2 >= 1");
        }
        Ok(Self { k1, k2, z: None, g: None, anchor: None })
    }

    pub fn with_prior(mut self, z: PriorIntegrand) -> Self {
        self.z = Some(z);
        self
    }

    pub fn with_initial_cost(mut self, g: InitialCost) -> Self {
        self.g = Some(g);
        self
    }

    pub fn with_anchor(mut self, beta: f64) -> Self {
        self.anchor = Some(beta);
        self
    }

    /// The reference level for a candidate set.
    pub fn offset(&self, fits: &[CandidateFit]) -> f64 {
        self.anchor.unwrap_or_else(|| fits.iter().map(|f| f.penalty).fold(f64::INFINITY, f64::min))
    }

    /// `(β/k₁)^{k₂}`, extended as an odd function for negative `β` since the
    /// likelihood is only defined up to an additive constant.
    pub fn transform(&self, beta: f64) -> f64 {
        if beta == f64::INFINITY {
            return f64::INFINITY;
        }
        let x = beta / self.k1;
        x.signum() * x.abs().powf(self.k2)
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.k1, self.k2).map(|_| ())
    }
}

fn prior_cost(
    gamma: &PiecewiseCoefficients,
    states: &[FilterState],
    end: usize,
    cfg: &PenaltyConfig,
) -> f64 {
    let mut total = 0.0;
    if let Some(z) = &cfg.z {
        for k in 0..end {
            let dt = states[k + 1].t - states[k].t;
            total += z(&states[k].q, &states[k].r, gamma.at(states[k].t)) * dt;
        }
    }
    if let Some(g) = &cfg.g {
        total += g(&states[0].q, &states[0].r);
    }
    total
}

/// `β = ∫z ds + g(μ₀, Σ₀) + pathwise NLL` over the whole observation, or
/// `+∞` for an inadmissible candidate.
pub fn penalty(candidate: &LinearGaussianModel, observation: &SampledPath, cfg: &PenaltyConfig) -> Result<f64> {
    let rp = RoughPath::canonical_lift(observation);
    Ok(fit_candidate(candidate, &rp, cfg, observation.horizon())?.penalty)
}

/// A candidate filtered up to time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFit {
    pub q: DVector<f64>,
    pub r: DMatrix<f64>,
    pub penalty: f64,
}

/// Filters one candidate along the lifted observation up to grid time `t`.
pub fn fit_candidate(candidate: &LinearGaussianModel, observation: &RoughPath, cfg: &PenaltyConfig, t: f64) -> Result<CandidateFit> {
    cfg.validate()?;
    let end = observation.base().require_grid_index(t)?;
    if candidate.check_admissible().is_err() {
        let m = candidate.signal_dim();
        return Ok(CandidateFit { q: DVector::zeros(m), r: DMatrix::zeros(m, m), penalty: f64::INFINITY });
    }
    let states = kalman_bucy(candidate, observation.base())?;
    let beta = prior_cost(&candidate.gamma, &states, end, cfg)
        + nll_pathwise_upto(&candidate.gamma, observation, &states, end);
    Ok(CandidateFit { q: states[end].q.clone(), r: states[end].r.clone(), penalty: beta })
}

/// Fits every candidate in parallel.
pub fn fit_candidates(
    candidates: &[LinearGaussianModel],
    observation: &SampledPath,
    cfg: &PenaltyConfig,
    t: f64,
) -> Result<Vec<CandidateFit>> {
    if candidates.is_empty() {
        return arg("candidate set is empty");
    }
    let rp = RoughPath::canonical_lift(observation);
    candidates.par_iter().map(|c| fit_candidate(c, &rp, cfg, t)).collect()
}

const GH_ORDER: usize = 20;
const MC_SAMPLES: usize = 100_000;
const MC_SEED: u64 = 0x5EED_F11E;

/// Gauss–Hermite nodes and weights for the standard normal law
/// (Golub–Welsch on the probabilists' Hermite recurrence).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| if i + 1 == j || j + 1 == i { (i.max(j) as f64).sqrt() } else { 0.0 });
    let e = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (e.eigenvalues[k], e.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn gh20() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_hermite(GH_ORDER))
}

/// `∫ φ dN(μ, Σ)`: order-20 Gauss–Hermite for `m <= 2`, otherwise a fixed-seed
/// Monte Carlo average.
pub fn gaussian_expectation(phi: &dyn Fn(&[f64]) -> f64, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let m = mean.len();
    let root = psd_sqrt(cov);
    let eval = |z: &DVector<f64>| {
        let x = mean + &root * z;
        phi(x.as_slice())
    };
    match m {
        0 => phi(&[]),
        1 | 2 => {
            let (nodes, weights) = gh20();
            let mut total = 0.0;
            if m == 1 {
                for (x, w) in nodes.iter().zip(weights) {
                    total += w * eval(&DVector::from_element(1, *x));
                }
            } else {
                for (x, wx) in nodes.iter().zip(weights) {
                    for (y, wy) in nodes.iter().zip(weights) {
                        total += wx * wy * eval(&DVector::from_vec(vec![*x, *y]));
                    }
                }
            }
            total
        }
        _ => {
            let mut rng = crate::rng::rng(MC_SEED);
            (0..MC_SAMPLES).map(|_| eval(&normals(&mut rng, m))).sum::<f64>() / MC_SAMPLES as f64
        }
    }
}

/// `max_j { E_j[φ] - ((β_j - β₀)/k₁)^{k₂} }` over fitted candidates, with
/// `β₀` from [`PenaltyConfig::offset`].
pub fn robust_expectation_from(phi: &dyn Fn(&[f64]) -> f64, fits: &[CandidateFit], cfg: &PenaltyConfig) -> Result<f64> {
    best_candidate(phi, fits, cfg).map(|(v, _)| v)
}

/// The value and index of the maximizing candidate.
pub fn best_candidate(phi: &dyn Fn(&[f64]) -> f64, fits: &[CandidateFit], cfg: &PenaltyConfig) -> Result<(f64, usize)> {
    let offset = cfg.offset(fits);
    let mut best: Option<(f64, usize)> = None;
    for (j, f) in fits.iter().enumerate() {
        if f.penalty == f64::INFINITY {
            continue;
        }
        let v = gaussian_expectation(phi, &f.q, &f.r) - cfg.transform(f.penalty - offset);
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, j));
        }
    }
    best.ok_or_else(|| Error::Argument("no admissible candidate".into()))
}

/// Robust conditional expectation `ℰ(φ(S_t) | 𝒴_t)` over a finite candidate set.
pub fn robust_expectation(
    phi: &dyn Fn(&[f64]) -> f64,
    candidates: &[LinearGaussianModel],
    observation: &SampledPath,
    cfg: &PenaltyConfig,
    t: f64,
) -> Result<f64> {
    robust_expectation_from(phi, &fit_candidates(candidates, observation, cfg, t)?, cfg)
}

/// `argmin_ξ ℰ((φ(S_t) - ξ)² | 𝒴_t)` by golden-section search.
pub fn robust_point_estimate_from(phi: &dyn Fn(&[f64]) -> f64, fits: &[CandidateFit], cfg: &PenaltyConfig) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for f in fits.iter().filter(|f| f.penalty < f64::INFINITY) {
        let mean = gaussian_expectation(phi, &f.q, &f.r);
        let var = gaussian_expectation(&|x| (phi(x) - mean).powi(2), &f.q, &f.r).max(0.0);
        lo = lo.min(mean - 6.0 * var.sqrt());
        hi = hi.max(mean + 6.0 * var.sqrt());
    }
    if !lo.is_finite() {
        return arg("no admissible candidate");
    }
    let objective = |xi: f64| robust_expectation_from(&|x: &[f64]| (phi(x) - xi).powi(2), fits, cfg);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    while b - a > 1e-10 * (1.0 + a.abs().max(b.abs())) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = objective(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = objective(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}

pub fn robust_point_estimate(
    phi: &dyn Fn(&[f64]) -> f64,
    candidates: &[LinearGaussianModel],
    observation: &SampledPath,
    cfg: &PenaltyConfig,
    t: f64,
) -> Result<f64> {
    robust_point_estimate_from(phi, &fit_candidates(candidates, observation, cfg, t)?, cfg)
}

/// `[-ℰ(-φ), ℰ(φ)]`.
pub fn robust_confidence_interval_from(phi: &dyn Fn(&[f64]) -> f64, fits: &[CandidateFit], cfg: &PenaltyConfig) -> Result<(f64, f64)> {
    let hi = robust_expectation_from(phi, fits, cfg)?;
    let lo = -robust_expectation_from(&|x| -phi(x), fits, cfg)?;
    Ok((lo, hi))
}

pub fn robust_confidence_interval(
    phi: &dyn Fn(&[f64]) -> f64,
    candidates: &[LinearGaussianModel],
    observation: &SampledPath,
    cfg: &PenaltyConfig,
    t: f64,
) -> Result<(f64, f64)> {
    robust_confidence_interval_from(phi, &fit_candidates(candidates, observation, cfg, t)?, cfg)
}

/// Robust summary of one observation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustReport {
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub best_candidate: usize,
    pub penalties: Vec<f64>,
}

pub fn robust_report(
    phi: &dyn Fn(&[f64]) -> f64,
    candidates: &[LinearGaussianModel],
    observation: &SampledPath,
    cfg: &PenaltyConfig,
    t: f64,
) -> Result<RobustReport> {
    let fits = fit_candidates(candidates, observation, cfg, t)?;
    let (_, best) = best_candidate(phi, &fits, cfg)?;
    let estimate = robust_point_estimate_from(phi, &fits, cfg)?;
    let (ci_lo, ci_hi) = robust_confidence_interval_from(phi, &fits, cfg)?;
    Ok(RobustReport { estimate, ci_lo, ci_hi, best_candidate: best, penalties: fits.iter().map(|f| f.penalty).collect() })
}

/// `∫_0^t w(q, R, γ) ds + ∫_0^t ψ(q, γ) dζ + g(q₀, R₀)` along the filter
/// driven by the control trajectory `γ` from `(q₀, R₀)`.
pub fn filtering_cost(
    gamma: &PiecewiseCoefficients,
    q0: &DVector<f64>,
    r0: &DMatrix<f64>,
    observation: &RoughPath,
    cfg: &PenaltyConfig,
    t: f64,
) -> Result<f64> {
    cfg.validate()?;
    gamma.check_admissible()?;
    let base = observation.base();
    let end = base.require_grid_index(t)?;
    let states = kalman_bucy_from(gamma, q0, r0, base)?;
    let d = observation.dim();

    let mut running = 0.0;
    for k in 0..end {
        let dt = states[k + 1].t - states[k].t;
        let g = gamma.at(states[k].t);
        let cq = &g.c * &states[k].q;
        let w = cfg.z.as_ref().map_or(0.0, |z| z(&states[k].q, &states[k].r, g))
            + 0.5 * (cq.norm_squared() + (&g.c * g.gain(&states[k].r)).trace());
        running += w * dt;
    }

    let mut psi = Vec::with_capacity(base.len() * d);
    let mut psi_prime = Vec::with_capacity(base.len() * d * d);
    for s in &states {
        let g = gamma.at(s.t);
        psi.extend((-(&g.c * &s.q)).iter());
        let ck = &g.c * g.gain(&s.r);
        for b in 0..d {
            for c in 0..d {
                psi_prime.push(-ck[(b, c)]);
            }
        }
    }
    let times = base.times().to_vec();
    let y = ControlledPath::new(
        SampledPath::from_flat(times.clone(), psi, d)?,
        SampledPath::from_flat(times, psi_prime, d * d)?,
        observation.clone(),
    )?;
    let integral = rough_integral(&y, observation, base.time(0), base.time(end))?[0];
    let initial = cfg.g.as_ref().map_or(0.0, |g| g(q0, r0));
    Ok(running + integral + initial)
}
