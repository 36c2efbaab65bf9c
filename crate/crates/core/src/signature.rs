//! Truncated signatures of piecewise-linear paths, stopped paths and the
//! shuffle identities behind linear signature stopping.
//!
//! For time-augmented paths `t ↦ (t, X_t)` the time coordinate is letter `1`
//! and the spatial coordinates are letters `2..=d+1`.

use rayon::prelude::*;

use crate::error::{arg, Result};
use crate::paths::{SampledPath, TIME_TOL};
use crate::rough::{rough_metric, MetricMode, RoughPath};
use crate::tensor::{LinearFunctional, TruncatedTensor};

/// The letter carrying the time coordinate of an augmented path.
pub const TIME_LETTER: u16 = 1;

/// A truncated signature `𝕏^{≤N}_{s,t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    tensor: TruncatedTensor,
    start: f64,
    end: f64,
}

impl Signature {
    pub fn from_tensor(tensor: TruncatedTensor, start: f64, end: f64) -> Result<Self> {
        if (tensor.levels()[0][0] - 1.0).abs() > 1e-12 {
            return arg("a signature has unit scalar part");
        }
        Ok(Self { tensor, start, end })
    }

    pub fn tensor(&self) -> &TruncatedTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> TruncatedTensor {
        self.tensor
    }

    pub fn level(&self) -> usize {
        self.tensor.level()
    }

    pub fn dim(&self) -> usize {
        self.tensor.dim()
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.start, self.end)
    }

    pub fn pair(&self, l: &LinearFunctional) -> Result<f64> {
        l.pair(&self.tensor)
    }
}

/// `t ↦ (t, X_t)`.
pub fn time_augment(path: &SampledPath) -> SampledPath {
    let d = path.dim();
    let mut values = Vec::with_capacity(path.len() * (d + 1));
    for i in 0..path.len() {
        values.push(path.time(i));
        values.extend_from_slice(path.value(i));
    }
    SampledPath::from_flat(path.times().to_vec(), values, d + 1).expect("augmenting a valid path")
}

/// Signature of `path` over `[s, t]`, exact for piecewise-linear paths.
pub fn signature(path: &SampledPath, level: usize, s: f64, t: f64) -> Result<Signature> {
    if s > t {
        return arg(format!("signature needs s <= t, got s={s}, t={t}"));
    }
    let mut tensor = TruncatedTensor::one(path.dim(), level);
    let mut prev = path.value_at(s)?;
    for (k, &u) in path.times().iter().enumerate() {
        if u <= s + TIME_TOL || u >= t - TIME_TOL {
            continue;
        }
        let cur = path.value(k);
        let delta: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
        tensor.mul_exp_increment(&delta);
        prev = cur.to_vec();
    }
    if t > s {
        let end = path.value_at(t)?;
        let delta: Vec<f64> = end.iter().zip(&prev).map(|(a, b)| a - b).collect();
        tensor.mul_exp_increment(&delta);
    }
    Ok(Signature { tensor, start: s, end: t })
}

/// `𝕏^{≤N}_{0,t_k}` at every sample time.
pub fn running_signatures(path: &SampledPath, level: usize) -> Vec<TruncatedTensor> {
    let mut out = Vec::with_capacity(path.len());
    let mut cur = TruncatedTensor::one(path.dim(), level);
    out.push(cur.clone());
    for k in 1..path.len() {
        cur.mul_exp_increment(&path.grid_increment(k - 1, k));
        out.push(cur.clone());
    }
    out
}

/// `⟨l, 𝕏_{0,t_k}⟩` at every sample time.
pub fn running_pairing(l: &LinearFunctional, path: &SampledPath) -> Result<Vec<f64>> {
    running_signatures(path, l.degree())
        .iter()
        .map(|s| l.pair(s))
        .collect()
}

/// Whole-interval signatures of many paths, computed in parallel.
pub fn signatures_batch(paths: &[SampledPath], level: usize) -> Result<Vec<Signature>> {
    paths
        .par_iter()
        .map(|p| signature(p, level, 0.0, p.horizon()))
        .collect()
}

/// A path stopped at `cut`: spatial values freeze after the cut while the
/// time coordinate keeps running.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppedRoughPath {
    underlying: SampledPath,
    cut: f64,
}

impl StoppedRoughPath {
    /// `path` is the spatial path; it is time-augmented here.
    pub fn new(path: &SampledPath, cut: f64) -> Result<Self> {
        if !(cut >= 0.0 && cut <= path.horizon() + TIME_TOL) {
            return arg(format!("cut {cut} outside [0, {}]", path.horizon()));
        }
        Ok(Self { underlying: time_augment(path), cut: cut.min(path.horizon()) })
    }

    pub fn underlying(&self) -> &SampledPath {
        &self.underlying
    }

    pub fn cut(&self) -> f64 {
        self.cut
    }

    /// `u ↦ (u, X_{u∧cut})` on `grid`.
    pub fn frozen_extension(&self, grid: &[f64]) -> Result<SampledPath> {
        let d = self.underlying.dim();
        let mut values = Vec::with_capacity(grid.len() * d);
        for &u in grid {
            let x = self.underlying.value_at(u.min(self.cut))?;
            values.push(u);
            values.extend_from_slice(&x[1..]);
        }
        SampledPath::from_flat(grid.to_vec(), values, d)
    }
}

/// Distance between stopped paths: rough p-variation distance of the frozen
/// extensions up to the later cut, plus the gap between the cuts.
pub fn stopped_metric(a: &StoppedRoughPath, b: &StoppedRoughPath, p: f64) -> Result<f64> {
    if a.underlying.dim() != b.underlying.dim() {
        return arg("stopped paths have different dimensions");
    }
    let horizon = a.cut.max(b.cut);
    let mut grid: Vec<f64> = a
        .underlying
        .times()
        .iter()
        .chain(b.underlying.times())
        .copied()
        .chain([a.cut, b.cut, horizon])
        .filter(|&u| u <= horizon + TIME_TOL)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|x, y| (*x - *y).abs() <= TIME_TOL);
    if let Some(last) = grid.last_mut() {
        *last = (*last).min(horizon);
    }
    let gap = (a.cut - b.cut).abs();
    if grid.len() < 2 {
        return Ok(gap);
    }
    let ea = RoughPath::canonical_lift(&a.frozen_extension(&grid)?);
    let eb = RoughPath::canonical_lift(&b.frozen_extension(&grid)?);
    Ok(rough_metric(&ea, &eb, p, MetricMode::PVar)? + gap)
}

fn check_augmented(path: &SampledPath) -> Result<()> {
    let d = path.dim();
    for i in 0..path.len() {
        if (path.values()[i * d] - path.time(i)).abs() > 1e-9 {
            return arg("expected a time-augmented path (first coordinate equal to time)");
        }
    }
    Ok(())
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `∫_0^t ⟨l, 𝕏_{0,s}⟩² ds` against `⟨(l⧢l)1, 𝕏_{0,t}⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticShuffleReport {
    pub integral: f64,
    pub shuffle_pairing: f64,
    pub relative_error: f64,
    pub agrees: bool,
}

/// `path` must be time-augmented and `t` a sample time.
pub fn quadratic_shuffle_identity_check(
    l: &LinearFunctional,
    path: &SampledPath,
    t: f64,
    level: usize,
) -> Result<QuadraticShuffleReport> {
    check_augmented(path)?;
    let q = l.shuffle(l).appended(TIME_LETTER);
    if q.degree() > level {
        return arg(format!("(l⧢l)1 has degree {} above truncation level {level}", q.degree()));
    }
    let j = path.require_grid_index(t)?;
    let theta = running_pairing(l, path)?;
    let mut integral = 0.0;
    for k in 0..j {
        let dt = path.time(k + 1) - path.time(k);
        integral += 0.5 * dt * (theta[k] * theta[k] + theta[k + 1] * theta[k + 1]);
    }
    let shuffle_pairing = q.pair(signature(path, level, 0.0, t)?.tensor())?;
    let relative_error = relative_gap(integral, shuffle_pairing);
    Ok(QuadraticShuffleReport { integral, shuffle_pairing, relative_error, agrees: relative_error <= 1e-6 })
}

/// Finite-difference check of the exponential-shuffle differential identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpShuffleDerivativeReport {
    pub max_discrepancy: f64,
    pub evaluations: usize,
}

/// Compares `d/dt ⟨exp⧢(l1), 𝕏^{≤N}_{0,t}⟩` (central differences at segment
/// midpoints) with `Σ_i ⟨λ_i w_i, 𝕏_{0,t}⟩ ⟨exp⧢(l1), 𝕏^{≤N-deg(w_i)-1}_{0,t}⟩`.
pub fn exp_shuffle_derivative_check(
    l: &LinearFunctional,
    path: &SampledPath,
    level: usize,
) -> Result<ExpShuffleDerivativeReport> {
    check_augmented(path)?;
    let e = l.appended(TIME_LETTER).exp_shuffle(level);
    let mut worst = 0.0_f64;
    let mut evaluations = 0;
    for k in 0..path.len().saturating_sub(1) {
        let (a, b) = (path.time(k), path.time(k + 1));
        let mid = 0.5 * (a + b);
        let h = 1e-3 * (b - a);
        let fp = e.pair(signature(path, level, 0.0, mid + h)?.tensor())?;
        let fm = e.pair(signature(path, level, 0.0, mid - h)?.tensor())?;
        let lhs = (fp - fm) / (2.0 * h);
        let sig = signature(path, level, 0.0, mid)?;
        let mut rhs = 0.0;
        for (w, lambda) in l.terms() {
            let cap = level as isize - w.degree() as isize - 1;
            if cap < 0 {
                continue;
            }
            let head = lambda * sig.tensor().get(w)?;
            rhs += head * e.truncated(cap as usize).pair(sig.tensor())?;
        }
        worst = worst.max((lhs - rhs).abs());
        evaluations += 1;
    }
    Ok(ExpShuffleDerivativeReport { max_discrepancy: worst, evaluations })
}

/// Truncation error of the exponential shuffle against its analytic bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpShuffleTruncationReport {
    /// `|exp⟨l, g⟩ - ⟨exp⧢(l), π_{≤N} g⟩|`.
    pub error: f64,
    pub bound: f64,
    /// Whether `N > 2 |l| deg(l) |π_{deg(l)} g|`.
    pub hypothesis_holds: bool,
    /// `error <= bound`, meaningful only when the hypothesis holds.
    pub within_bound: bool,
}

pub fn exp_shuffle_truncation_error(l: &LinearFunctional, g: &Signature, level: usize) -> Result<ExpShuffleTruncationReport> {
    if level > g.level() {
        return arg(format!("truncation level {level} exceeds signature level {}", g.level()));
    }
    let deg = l.degree();
    let exact = l.pair(g.tensor())?.exp();
    let approx = l.exp_shuffle(level).pair(g.tensor())?;
    let error = (exact - approx).abs();
    let a0 = l.coefficient(&crate::tensor::Word::empty());
    let norm_l = l.l1_norm();
    let (bound, hypothesis_holds) = if deg == 0 {
        (0.0, true)
    } else {
        let top = crate::paths::max_abs(g.tensor().project(deg)?);
        let low = g.tensor().project_up_to(deg)?.linf_norm();
        let m = level / deg + 1;
        let mut b = 4.0 * a0.exp();
        for k in 1..=m {
            b *= norm_l * low / k as f64;
        }
        (b, level as f64 > 2.0 * norm_l * deg as f64 * top)
    };
    let within_bound = error <= bound + 1e-12 * exact.abs().max(1.0);
    Ok(ExpShuffleTruncationReport { error, bound, hypothesis_holds, within_bound })
}

/// First sample time at which the running p-variation reaches `k`, else `T`.
pub fn pvar_threshold_time(path: &SampledPath, k: f64, p: f64) -> Result<f64> {
    if !(k > 0.0) {
        return arg("threshold must be positive");
    }
    let running = path.running_p_variation(p)?;
    Ok(running
        .iter()
        .position(|&v| v >= k)
        .map(|i| path.time(i))
        .unwrap_or_else(|| path.horizon()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rough::brownian_path;
    use crate::tensor::Word;

    #[test]
    fn scalar_closed_form() {
        let p = SampledPath::new(vec![0.0, 0.4, 1.0], vec![vec![0.0], vec![0.9], vec![0.7]]).unwrap();
        let s = signature(&p, 6, 0.0, 1.0).unwrap();
        let mut fact = 1.0;
        for k in 0..=6 {
            if k > 0 {
                fact *= k as f64;
            }
            assert!((s.tensor().levels()[k][0] - 0.7_f64.powi(k as i32) / fact).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_path_signature_is_one() {
        let p = SampledPath::constant(vec![0.0, 0.5, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(signature(&p, 4, 0.0, 1.0).unwrap().tensor(), &TruncatedTensor::one(2, 4));
    }

    #[test]
    fn l_path_level_two_matches_lift() {
        let p = SampledPath::new(vec![0.0, 1.0, 2.0], vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let s = signature(&p, 2, 0.0, 2.0).unwrap();
        let lift = RoughPath::canonical_lift(&p).second_level(0.0, 2.0).unwrap();
        assert_eq!(s.tensor().levels()[2], lift);
    }

    #[test]
    fn augmentation() {
        let p = SampledPath::constant(vec![0.0, 0.5, 1.0], &[2.0]).unwrap();
        let a = time_augment(&p);
        assert_eq!(a.dim(), 2);
        assert_eq!(a.len(), 3);
        let s = signature(&a, 1, 0.0, 0.5).unwrap();
        assert_eq!(s.tensor().levels()[1], vec![0.5, 0.0]);
    }

    #[test]
    fn off_grid_interval_and_chen() {
        let p = brownian_path(9, 16, 1.0, 2).unwrap();
        let a = signature(&p, 4, 0.0, 0.3).unwrap();
        let b = signature(&p, 4, 0.3, 1.0).unwrap();
        let whole = signature(&p, 4, 0.0, 1.0).unwrap();
        let glued = a.tensor().mul(b.tensor()).unwrap();
        assert!(glued.max_abs_diff(whole.tensor()).unwrap() < 1e-12);
    }

    #[test]
    fn stopped_metric_examples() {
        let p = brownian_path(1, 20, 1.0, 1).unwrap();
        let a = StoppedRoughPath::new(&p, 0.6).unwrap();
        let b = StoppedRoughPath::new(&p, 0.35).unwrap();
        assert_eq!(stopped_metric(&a, &a, 2.5).unwrap(), 0.0);
        assert!(stopped_metric(&a, &b, 2.5).unwrap() >= 0.25 - 1e-12);
    }

    #[test]
    fn quadratic_identity_trivial_cases() {
        let p = time_augment(&brownian_path(3, 64, 1.0, 1).unwrap());
        let r = quadratic_shuffle_identity_check(&LinearFunctional::zero(), &p, 1.0, 3).unwrap();
        assert_eq!((r.integral, r.shuffle_pairing), (0.0, 0.0));
        let r = quadratic_shuffle_identity_check(&LinearFunctional::constant(1.0), &p, 0.5, 3).unwrap();
        assert!((r.integral - 0.5).abs() < 1e-12 && (r.shuffle_pairing - 0.5).abs() < 1e-12);
        let l: LinearFunctional = "1*2 + 0.5*12".parse().unwrap();
        assert!(quadratic_shuffle_identity_check(&l, &p, 1.0, 4).is_err());
        let raw = brownian_path(3, 8, 1.0, 1).unwrap();
        assert!(quadratic_shuffle_identity_check(&l, &raw, 1.0, 5).is_err());
    }

    #[test]
    fn derivative_identity_single_letter() {
        let p = time_augment(&brownian_path(2, 8, 1.0, 1).unwrap());
        let zero = exp_shuffle_derivative_check(&LinearFunctional::zero(), &p, 4).unwrap();
        assert_eq!(zero.max_discrepancy, 0.0);
        let l = LinearFunctional::constant(-0.7);
        let r = exp_shuffle_derivative_check(&l, &p, 8).unwrap();
        assert!(r.max_discrepancy < 1e-6, "{}", r.max_discrepancy);
    }

    #[test]
    fn truncation_error_scalar_line() {
        let p = SampledPath::new(vec![0.0, 1.0], vec![vec![0.0], vec![0.5]]).unwrap();
        let g = signature(&p, 6, 0.0, 1.0).unwrap();
        let l = LinearFunctional::word(Word::letter(1));
        let r = exp_shuffle_truncation_error(&l, &g, 3).unwrap();
        let taylor: f64 = 0.5_f64.exp() - (1.0 + 0.5 + 0.125 + 0.125 / 6.0);
        assert!((r.error - taylor).abs() < 1e-14, "{} vs {taylor}", r.error);
        assert!(r.hypothesis_holds && r.within_bound);
        let z = exp_shuffle_truncation_error(&LinearFunctional::zero(), &g, 3).unwrap();
        assert_eq!(z.error, 0.0);
    }

    #[test]
    fn threshold_time() {
        let p = SampledPath::from_fn(1.0, 10, 1, |t| vec![t]).unwrap();
        assert!((pvar_threshold_time(&p, 0.5, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(pvar_threshold_time(&p, 100.0, 1.0).unwrap(), 1.0);
    }
}
