//! Level-2 rough paths over piecewise-linear samples, controlled paths,
//! rough and Young integration and a second-order RDE solver.
//!
//! Second-level data is stored once per grid segment; values over arbitrary
//! grid intervals are assembled with Chen's relation
//! `A_{s,t} = A_{s,r} + A_{r,t} + ζ_{s,r} ⊗ ζ_{r,t}`.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg, Error, Result};
use crate::paths::{check_p, max_abs, norm2, p_variation_dp, SampledPath, TIME_TOL};

/// A level-2 rough path `(ζ, ζ⁽²⁾)` on the sample grid of its base path.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughPath {
    base: SampledPath,
    /// Row-major `d×d` matrix per segment.
    seg_area: Vec<f64>,
    geometric: bool,
}

impl RoughPath {
    /// Canonical lift: each linear segment carries `½ Δ ⊗ Δ`.
    pub fn canonical_lift(path: &SampledPath) -> Self {
        let d = path.dim();
        let n = path.len();
        let mut seg_area = Vec::with_capacity(n.saturating_sub(1) * d * d);
        for i in 0..n.saturating_sub(1) {
            let delta = path.grid_increment(i, i + 1);
            for a in 0..d {
                for b in 0..d {
                    seg_area.push(0.5 * delta[a] * delta[b]);
                }
            }
        }
        Self { base: path.clone(), seg_area, geometric: true }
    }

    /// Builds a rough path from explicit per-segment second-level matrices.
    /// `geometric` is checked against the symmetric-part condition.
    pub fn from_segments(base: SampledPath, seg_area: Vec<f64>, geometric: bool) -> Result<Self> {
        let d = base.dim();
        let want = base.len().saturating_sub(1) * d * d;
        if seg_area.len() != want {
            return arg(format!("expected {want} second-level entries, got {}", seg_area.len()));
        }
        if seg_area.iter().any(|x| !x.is_finite()) {
            return arg("second-level entries must be finite");
        }
        let rp = Self { base, seg_area, geometric };
        if geometric && rp.symmetry_defect() > 1e-10 {
            return arg("second level is not geometric: Sym(A) differs from ½ Δ⊗Δ");
        }
        Ok(rp)
    }

    pub fn base(&self) -> &SampledPath {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        self.base.times()
    }

    /// Sample time `t_i`.
    pub fn time_at(&self, i: usize) -> f64 {
        self.base.time(i)
    }

    pub fn is_geometric(&self) -> bool {
        self.geometric
    }

    /// Second-level matrix of segment `i`.
    pub fn segment_area(&self, i: usize) -> &[f64] {
        let dd = self.dim() * self.dim();
        &self.seg_area[i * dd..(i + 1) * dd]
    }

    pub fn segment_areas(&self) -> &[f64] {
        &self.seg_area
    }

    /// `ζ⁽²⁾_{t_i, t_j}` for grid indices `i <= j`.
    pub fn second_level_idx(&self, i: usize, j: usize) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0.0; d * d];
        let start = self.base.value(i).to_vec();
        for k in i..j {
            self.extend_area(&mut acc, &start, k);
        }
        acc
    }

    /// `A ← A + A_k + (ζ_{t_k} - start) ⊗ Δ_k`: one Chen step along segment `k`.
    fn extend_area(&self, acc: &mut [f64], start: &[f64], k: usize) {
        let d = self.dim();
        let xk = self.base.value(k);
        let xk1 = self.base.value(k + 1);
        let seg = self.segment_area(k);
        for a in 0..d {
            let left = xk[a] - start[a];
            for b in 0..d {
                acc[a * d + b] += seg[a * d + b] + left * (xk1[b] - xk[b]);
            }
        }
    }

    /// `ζ⁽²⁾_{s,t}` for grid times `s <= t`.
    pub fn second_level(&self, s: f64, t: f64) -> Result<Vec<f64>> {
        let i = self.base.require_grid_index(s)?;
        let j = self.base.require_grid_index(t)?;
        if i > j {
            return arg(format!("second level needs s <= t, got s={s}, t={t}"));
        }
        Ok(self.second_level_idx(i, j))
    }

    /// `ζ⁽²⁾_{s,t}` assembled from `[s,r]` and `[r,t]` by Chen's relation.
    pub fn chen_extend(&self, s: f64, r: f64, t: f64) -> Result<Vec<f64>> {
        if !(s <= r && r <= t) {
            return arg(format!("Chen assembly needs s <= r <= t, got ({s}, {r}, {t})"));
        }
        let (i, k, j) = (
            self.base.require_grid_index(s)?,
            self.base.require_grid_index(r)?,
            self.base.require_grid_index(t)?,
        );
        let d = self.dim();
        let left = self.second_level_idx(i, k);
        let right = self.second_level_idx(k, j);
        let x_sr = self.base.grid_increment(i, k);
        let x_rt = self.base.grid_increment(k, j);
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = left[a * d + b] + right[a * d + b] + x_sr[a] * x_rt[b];
            }
        }
        Ok(out)
    }

    /// All `ζ⁽²⁾_{t_i, t_j}` for `j >= i`, indexed by `j - i`.
    pub fn second_level_row(&self, i: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let start = self.base.value(i).to_vec();
        let mut acc = vec![0.0; d * d];
        let mut row = vec![acc.clone()];
        for k in i..self.len() - 1 {
            self.extend_area(&mut acc, &start, k);
            row.push(acc.clone());
        }
        row
    }

    /// Largest violation of Chen's relation over all grid triples.
    pub fn chen_defect(&self) -> f64 {
        let n = self.len();
        let d = self.dim();
        let rows: Vec<Vec<Vec<f64>>> = (0..n).map(|i| self.second_level_row(i)).collect();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for k in i..n {
                let x_sr = self.base.grid_increment(i, k);
                for j in k..n {
                    let x_rt = self.base.grid_increment(k, j);
                    let whole = &rows[i][j - i];
                    let left = &rows[i][k - i];
                    let right = &rows[k][j - k];
                    for a in 0..d {
                        for b in 0..d {
                            let e = whole[a * d + b] - left[a * d + b] - right[a * d + b] - x_sr[a] * x_rt[b];
                            worst = worst.max(e.abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Largest `|Sym(ζ⁽²⁾_{s,t}) - ½ ζ_{s,t}⊗ζ_{s,t}|` over grid pairs.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.len();
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for (off, area) in self.second_level_row(i).iter().enumerate() {
                let x = self.base.grid_increment(i, i + off);
                for a in 0..d {
                    for b in 0..d {
                        let sym = 0.5 * (area[a * d + b] + area[b * d + a]);
                        worst = worst.max((sym - 0.5 * x[a] * x[b]).abs());
                    }
                }
            }
        }
        worst
    }

    /// Same rough path viewed on a refined grid that contains every original sample.
    /// Only canonical lifts can be refined this way.
    pub fn refine(&self, grid: &[f64]) -> Result<Self> {
        let canonical = Self::canonical_lift(&self.base);
        let is_canonical = self
            .seg_area
            .iter()
            .zip(&canonical.seg_area)
            .all(|(a, b)| (a - b).abs() <= 1e-12);
        if !is_canonical {
            return arg("only canonical lifts can be refined");
        }
        for &t in self.times() {
            if !grid.iter().any(|&g| (g - t).abs() <= TIME_TOL) {
                return arg(format!("refined grid is missing sample time {t}"));
            }
        }
        Ok(Self::canonical_lift(&self.base.resample(grid)?))
    }

    fn same_grid(&self, other: &RoughPath) -> Result<()> {
        same_times(self.times(), other.times())
    }
}

pub(crate) fn same_times(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| (x - y).abs() > TIME_TOL) {
        return arg("paths are sampled on different grids; resample first");
    }
    Ok(())
}

/// Supremum over grid partitions of `(Σ dist^p)^{1/p}` for any `p > 0`.
pub(crate) fn grid_pvar(n: usize, p: f64, dist: impl Fn(usize, usize) -> f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let (best, _) = p_variation_dp(n, p, dist);
    best[n - 1].powf(1.0 / p)
}

/// p-variation of a sampled path with exponent `p > 0` (p/2-norms included).
pub(crate) fn path_pvar(path: &SampledPath, p: f64) -> f64 {
    grid_pvar(path.len(), p, |i, j| norm2(&path.grid_increment(i, j)))
}

/// Which rough-path metric to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMode {
    PVar,
    Holder,
}

/// Inhomogeneous rough-path distance: level-1 difference in p-variation (or
/// `1/p`-Hölder) plus level-2 difference in p/2-variation (or `2/p`-Hölder),
/// using the max-entry norm on matrices.
pub fn rough_metric(rp1: &RoughPath, rp2: &RoughPath, p: f64, mode: MetricMode) -> Result<f64> {
    check_p(p)?;
    if rp1.dim() != rp2.dim() {
        return arg("rough paths have different dimensions");
    }
    rp1.same_grid(rp2)?;
    let n = rp1.len();
    if n < 2 {
        return Ok(0.0);
    }
    let d = rp1.dim();
    let mut d1 = vec![0.0; n * n];
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        let r1 = rp1.second_level_row(i);
        let r2 = rp2.second_level_row(i);
        for j in i + 1..n {
            let mut inc = vec![0.0; d];
            for a in 0..d {
                inc[a] = (rp1.base.value(j)[a] - rp1.base.value(i)[a]) - (rp2.base.value(j)[a] - rp2.base.value(i)[a]);
            }
            d1[i * n + j] = norm2(&inc);
            let diff: Vec<f64> = r1[j - i].iter().zip(&r2[j - i]).map(|(x, y)| x - y).collect();
            d2[i * n + j] = max_abs(&diff);
        }
    }
    Ok(match mode {
        MetricMode::PVar => {
            grid_pvar(n, p, |i, j| d1[i * n + j]) + grid_pvar(n, p / 2.0, |i, j| d2[i * n + j])
        }
        MetricMode::Holder => {
            let times = rp1.times();
            let mut h1 = 0.0_f64;
            let mut h2 = 0.0_f64;
            for i in 0..n {
                for j in i + 1..n {
                    let dt = times[j] - times[i];
                    h1 = h1.max(d1[i * n + j] / dt.powf(1.0 / p));
                    h2 = h2.max(d2[i * n + j] / dt.powf(2.0 / p));
                }
            }
            h1 + h2
        }
    })
}

/// Gaussian increments with variance `T/n`, interpolated linearly and lifted canonically.
pub fn brownian_rough_path(seed: u64, n_steps: usize, horizon: f64, dim: usize) -> Result<RoughPath> {
    Ok(RoughPath::canonical_lift(&brownian_path(seed, n_steps, horizon, dim)?))
}

/// Sampled Brownian path started at the origin.
pub fn brownian_path(seed: u64, n_steps: usize, horizon: f64, dim: usize) -> Result<SampledPath> {
    if n_steps == 0 {
        return arg("a Brownian path needs at least one step");
    }
    if dim == 0 || !(horizon > 0.0) {
        return arg("Brownian path needs positive dimension and horizon");
    }
    let mut rng = crate::rng::rng(seed);
    let sd = (horizon / n_steps as f64).sqrt();
    let mut values = vec![0.0; (n_steps + 1) * dim];
    for k in 1..=n_steps {
        for a in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            values[k * dim + a] = values[(k - 1) * dim + a] + sd * z;
        }
    }
    SampledPath::from_flat(crate::paths::uniform_grid(horizon, n_steps), values, dim)
}

/// Callback `(x, γ) ↦ output` used for drifts, diffusions and integrands.
pub type MapFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A coefficient `(x, γ) ↦ R^k` together with its Jacobian in `x`
/// (row-major `k × m`).
#[derive(Clone)]
pub struct Field {
    out_dim: usize,
    value: MapFn,
    jac_x: MapFn,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field").field("out_dim", &self.out_dim).finish_non_exhaustive()
    }
}

impl Field {
    pub fn new<V, J>(out_dim: usize, value: V, jac_x: J) -> Self
    where
        V: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        J: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { out_dim, value: Arc::new(value), jac_x: Arc::new(jac_x) }
    }

    /// A field that does not depend on `x` or `γ`.
    pub fn constant(value: Vec<f64>, state_dim: usize) -> Self {
        let k = value.len();
        Self::new(k, move |_, _| value.clone(), move |_, _| vec![0.0; k * state_dim])
    }

    pub fn zero(out_dim: usize, state_dim: usize) -> Self {
        Self::constant(vec![0.0; out_dim], state_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn eval(&self, x: &[f64], gamma: &[f64]) -> Vec<f64> {
        (self.value)(x, gamma)
    }

    pub fn jac(&self, x: &[f64], gamma: &[f64]) -> Vec<f64> {
        (self.jac_x)(x, gamma)
    }

    /// Compares the supplied Jacobian with central differences at `(x, γ)`:
    /// every entry must satisfy `|fd - an| <= 1e-4 (1 + |an|)`.
    pub fn check_jacobian(&self, x: &[f64], gamma: &[f64]) -> Result<()> {
        let m = x.len();
        let k = self.out_dim;
        let v = self.eval(x, gamma);
        if v.len() != k {
            return arg(format!("coefficient returned {} entries, expected {k}", v.len()));
        }
        let an = self.jac(x, gamma);
        if an.len() != k * m {
            return arg(format!("Jacobian returned {} entries, expected {}", an.len(), k * m));
        }
        for l in 0..m {
            let h = 1e-6 * (1.0 + x[l].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[l] += h;
            xm[l] -= h;
            let fp = self.eval(&xp, gamma);
            let fm = self.eval(&xm, gamma);
            for o in 0..k {
                let fd = (fp[o] - fm[o]) / (2.0 * h);
                let a = an[o * m + l];
                if (fd - a).abs() > 1e-4 * (1.0 + a.abs()) {
                    return arg(format!(
                        "Jacobian entry ({o}, {l}) is {a} but finite differences give {fd}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A controlled path `(Y, Y′)` with respect to a reference rough path.
/// `Y` takes values in `R^k` and `Y′` in row-major `k × d` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledPath {
    value: SampledPath,
    gubinelli: SampledPath,
    reference: RoughPath,
}

impl ControlledPath {
    pub fn new(value: SampledPath, gubinelli: SampledPath, reference: RoughPath) -> Result<Self> {
        same_times(value.times(), reference.times())?;
        same_times(gubinelli.times(), reference.times())?;
        if gubinelli.dim() != value.dim() * reference.dim() {
            return arg(format!(
                "Gubinelli derivative must have {} entries per sample, got {}",
                value.dim() * reference.dim(),
                gubinelli.dim()
            ));
        }
        Ok(Self { value, gubinelli, reference })
    }

    pub fn value(&self) -> &SampledPath {
        &self.value
    }

    pub fn gubinelli(&self) -> &SampledPath {
        &self.gubinelli
    }

    pub fn reference(&self) -> &RoughPath {
        &self.reference
    }

    /// `R^Y_{t_i,t_j} = Y_{t_i,t_j} - Y′_{t_i} ζ_{t_i,t_j}`.
    pub fn remainder_idx(&self, i: usize, j: usize) -> Vec<f64> {
        let k = self.value.dim();
        let d = self.reference.dim();
        let dy = self.value.grid_increment(i, j);
        let dz = self.reference.base().grid_increment(i, j);
        let yp = self.gubinelli.value(i);
        (0..k)
            .map(|a| dy[a] - (0..d).map(|c| yp[a * d + c] * dz[c]).sum::<f64>())
            .collect()
    }

    /// p-variation of the remainder with exponent `p` (usually p/2).
    pub fn remainder_pvar(&self, p: f64) -> f64 {
        grid_pvar(self.value.len(), p, |i, j| norm2(&self.remainder_idx(i, j)))
    }
}

/// Compensated-sum rough integral `∫_s^t Y dζ` over grid times. `Y` must be
/// matrix valued (`m × d`, so its dimension is a multiple of `d`).
pub fn rough_integral(y: &ControlledPath, rp: &RoughPath, s: f64, t: f64) -> Result<Vec<f64>> {
    let i = rp.base().require_grid_index(s)?;
    let j = rp.base().require_grid_index(t)?;
    if i > j {
        return arg(format!("integral needs s <= t, got s={s}, t={t}"));
    }
    let running = integral_steps(y, rp)?;
    let m = y.value.dim() / rp.dim();
    let mut acc = vec![0.0; m];
    for k in i..j {
        for (a, v) in acc.iter_mut().zip(&running[k * m..(k + 1) * m]) {
            *a += v;
        }
    }
    Ok(acc)
}

/// Running rough integral `t ↦ ∫_0^t Y dζ` on the grid.
pub fn rough_integral_path(y: &ControlledPath, rp: &RoughPath) -> Result<SampledPath> {
    let steps = integral_steps(y, rp)?;
    let m = y.value.dim() / rp.dim();
    let n = rp.len();
    let mut values = vec![0.0; n * m];
    for k in 1..n {
        for a in 0..m {
            values[k * m + a] = values[(k - 1) * m + a] + steps[(k - 1) * m + a];
        }
    }
    SampledPath::from_flat(rp.times().to_vec(), values, m)
}

/// Per-segment terms `Y_{t_k} Δζ_k + Y′_{t_k} : A_k`.
fn integral_steps(y: &ControlledPath, rp: &RoughPath) -> Result<Vec<f64>> {
    same_times(y.value.times(), rp.times())?;
    let d = rp.dim();
    if y.reference.dim() != d {
        return arg("controlled path and rough path have different dimensions");
    }
    if y.value.dim() % d != 0 {
        return arg(format!("integrand dimension {} is not a multiple of {d}", y.value.dim()));
    }
    let m = y.value.dim() / d;
    let n = rp.len();
    let mut out = vec![0.0; (n - 1) * m];
    for k in 0..n - 1 {
        let dz = rp.base().grid_increment(k, k + 1);
        let area = rp.segment_area(k);
        let yk = y.value.value(k);
        let ypk = y.gubinelli.value(k);
        for a in 0..m {
            let mut s = 0.0;
            for b in 0..d {
                s += yk[a * d + b] * dz[b];
            }
            for b in 0..d {
                for c in 0..d {
                    s += ypk[(a * d + b) * d + c] * area[c * d + b];
                }
            }
            out[k * m + a] = s;
        }
    }
    Ok(out)
}

/// Local remainder estimate of the rough integral over `[s, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemainderReport {
    /// `|∫_s^t Y dζ - Y_s ζ_{s,t} - Y′_s ζ⁽²⁾_{s,t}|`.
    pub lhs: f64,
    /// `‖R^Y‖_{p/2} ‖ζ‖_p + ‖Y′‖_p ‖ζ⁽²⁾‖_{p/2}` on `[s, t]`.
    pub rhs_factor: f64,
    /// `lhs / rhs_factor` (0 when both vanish).
    pub implied_constant: f64,
    pub finite: bool,
}

pub fn remainder_estimate_check(y: &ControlledPath, rp: &RoughPath, p: f64, s: f64, t: f64) -> Result<RemainderReport> {
    check_p(p)?;
    let i = rp.base().require_grid_index(s)?;
    let j = rp.base().require_grid_index(t)?;
    if i > j {
        return arg("remainder check needs s <= t");
    }
    let integral = rough_integral(y, rp, s, t)?;
    let d = rp.dim();
    let m = y.value.dim() / d;
    let dz = rp.base().grid_increment(i, j);
    let area = rp.second_level_idx(i, j);
    let yi = y.value.value(i);
    let ypi = y.gubinelli.value(i);
    let mut local = vec![0.0; m];
    for a in 0..m {
        let mut v = integral[a];
        for b in 0..d {
            v -= yi[a * d + b] * dz[b];
            for c in 0..d {
                v -= ypi[(a * d + b) * d + c] * area[c * d + b];
            }
        }
        local[a] = v;
    }
    let lhs = norm2(&local);
    let n = j - i + 1;
    let rows: Vec<Vec<Vec<f64>>> = (i..=j).map(|r| rp.second_level_row(r)).collect();
    let r_y = grid_pvar(n, p / 2.0, |a, b| norm2(&y.remainder_idx(i + a, i + b)));
    let zeta = grid_pvar(n, p, |a, b| norm2(&rp.base().grid_increment(i + a, i + b)));
    let yprime = grid_pvar(n, p, |a, b| norm2(&y.gubinelli.grid_increment(i + a, i + b)));
    let area_var = grid_pvar(n, p / 2.0, |a, b| max_abs(&rows[a][b - a]));
    let rhs_factor = r_y * zeta + yprime * area_var;
    Ok(RemainderReport {
        lhs,
        rhs_factor,
        implied_constant: ratio(lhs, rhs_factor),
        finite: lhs.is_finite() && rhs_factor.is_finite(),
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Running Young integral `t ↦ ∫_0^t Y dX` by left-point sums. `Y` is either
/// scalar-per-channel (`dim X` entries) or an `m × d` matrix.
pub fn young_integral(y: &SampledPath, x: &SampledPath, p: f64, q: f64) -> Result<SampledPath> {
    if !(p > 0.0 && q > 0.0) || 1.0 / p + 1.0 / q <= 1.0 {
        return arg(format!("Young integration needs 1/p + 1/q > 1, got p={p}, q={q}"));
    }
    same_times(y.times(), x.times())?;
    let d = x.dim();
    if y.dim() % d != 0 {
        return arg(format!("integrand dimension {} is not a multiple of {d}", y.dim()));
    }
    let m = y.dim() / d;
    let n = x.len();
    let mut values = vec![0.0; n * m];
    for k in 1..n {
        let dx = x.grid_increment(k - 1, k);
        let yk = y.value(k - 1);
        for a in 0..m {
            let s: f64 = (0..d).map(|b| yk[a * d + b] * dx[b]).sum();
            values[k * m + a] = values[(k - 1) * m + a] + s;
        }
    }
    SampledPath::from_flat(x.times().to_vec(), values, m)
}

/// `dX = b(X, γ) dt + λ(X, γ) dζ` with `X ∈ R^m`, `λ` an `m × d` matrix field.
#[derive(Debug, Clone)]
pub struct Rde {
    pub state_dim: usize,
    pub drift: Field,
    pub diffusion: Field,
}

impl Rde {
    pub fn new(state_dim: usize, drift: Field, diffusion: Field) -> Result<Self> {
        if drift.out_dim() != state_dim {
            return arg("drift must return one entry per state coordinate");
        }
        if diffusion.out_dim() % state_dim != 0 {
            return arg("diffusion must return an m×d matrix");
        }
        Ok(Self { state_dim, drift, diffusion })
    }
}

/// Second-order Davie scheme
/// `X ← X + b Δt + λ Δζ + Σ ∂_l λ_{ij} λ_{lk} A_{kj}`;
/// the returned controlled path carries `X′ = λ(X, γ)`.
pub fn solve_rde(rde: &Rde, gamma: &SampledPath, rp: &RoughPath, x0: &[f64]) -> Result<ControlledPath> {
    let m = rde.state_dim;
    let d = rp.dim();
    if x0.len() != m {
        return arg(format!("initial state must have {m} entries"));
    }
    if rde.diffusion.out_dim() != m * d {
        return arg(format!("diffusion must be {m}×{d} to match the driver"));
    }
    same_times(gamma.times(), rp.times())?;
    rde.diffusion.check_jacobian(x0, gamma.value(0))?;
    let n = rp.len();
    let times = rp.times();
    let mut xs = vec![0.0; n * m];
    let mut lams = vec![0.0; n * m * d];
    xs[..m].copy_from_slice(x0);
    for k in 0..n {
        let x = xs[k * m..(k + 1) * m].to_vec();
        let g = gamma.value(k);
        let lam = rde.diffusion.eval(&x, g);
        if lam.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k, what: "diffusion coefficient is not finite".into() });
        }
        lams[k * m * d..(k + 1) * m * d].copy_from_slice(&lam);
        if k == n - 1 {
            break;
        }
        let dt = times[k + 1] - times[k];
        let dz = rp.base().grid_increment(k, k + 1);
        let area = rp.segment_area(k);
        let b = rde.drift.eval(&x, g);
        let dlam = rde.diffusion.jac(&x, g);
        let next = &mut xs[(k + 1) * m..(k + 2) * m];
        for i in 0..m {
            let mut v = x[i] + b[i] * dt;
            for j in 0..d {
                v += lam[i * d + j] * dz[j];
            }
            for j in 0..d {
                for l in 0..m {
                    let dl = dlam[(i * d + j) * m + l];
                    if dl == 0.0 {
                        continue;
                    }
                    for kk in 0..d {
                        v += dl * lam[l * d + kk] * area[kk * d + j];
                    }
                }
            }
            next[i] = v;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k + 1, what: "state is not finite".into() });
        }
    }
    ControlledPath::new(
        SampledPath::from_flat(times.to_vec(), xs, m)?,
        SampledPath::from_flat(times.to_vec(), lams, m * d)?,
        rp.clone(),
    )
}

/// `ψ(X, γ)` as a controlled path with `ψ′ = ∂_x ψ · X′`.
pub fn compose_controlled(psi: &Field, x: &ControlledPath, gamma: &SampledPath) -> Result<ControlledPath> {
    same_times(gamma.times(), x.value.times())?;
    let m = x.value.dim();
    let d = x.reference.dim();
    let k = psi.out_dim();
    let n = x.value.len();
    let mut vals = vec![0.0; n * k];
    let mut primes = vec![0.0; n * k * d];
    for t in 0..n {
        let xv = x.value.value(t);
        let g = gamma.value(t);
        let v = psi.eval(xv, g);
        if v.len() != k {
            return arg("integrand returned the wrong number of entries");
        }
        vals[t * k..(t + 1) * k].copy_from_slice(&v);
        let jac = psi.jac(xv, g);
        let xp = x.gubinelli.value(t);
        for o in 0..k {
            for c in 0..d {
                primes[(t * k + o) * d + c] = (0..m).map(|l| jac[o * m + l] * xp[l * d + c]).sum();
            }
        }
    }
    ControlledPath::new(
        SampledPath::from_flat(x.value.times().to_vec(), vals, k)?,
        SampledPath::from_flat(x.value.times().to_vec(), primes, k * d)?,
        x.reference.clone(),
    )
}

/// Implied constants of the four RDE regularity estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub x_pvar: f64,
    pub gamma_pvar: f64,
    pub psi_prime_pvar: f64,
    pub psi_remainder_pvar: f64,
    pub x_remainder_pvar: f64,
    /// `‖ψ′‖_p / (‖X‖_p + ‖γ‖_{p/2})`.
    pub ratio_psi_prime: f64,
    /// `‖R^ψ‖_{p/2} / (‖X‖_p² + ‖R^X‖_{p/2} + ‖γ‖_{p/2})`.
    pub ratio_psi_remainder: f64,
    /// `‖X‖_p / (1 + ‖γ‖_{p/2}^{1+p})`.
    pub ratio_x: f64,
    /// `‖R^X‖_{p/2} / (1 + ‖γ‖_{p/2}^{2+p})`.
    pub ratio_x_remainder: f64,
    pub finite: bool,
}

pub fn regularity_report(x: &ControlledPath, gamma: &SampledPath, psi: &Field, p: f64) -> Result<RegularityReport> {
    check_p(p)?;
    let psi_path = compose_controlled(psi, x, gamma)?;
    let x_pvar = path_pvar(&x.value, p);
    let gamma_pvar = path_pvar(gamma, p / 2.0);
    let psi_prime_pvar = path_pvar(&psi_path.gubinelli, p);
    let psi_remainder_pvar = psi_path.remainder_pvar(p / 2.0);
    let x_remainder_pvar = x.remainder_pvar(p / 2.0);
    let r1 = ratio(psi_prime_pvar, x_pvar + gamma_pvar);
    let r2 = ratio(psi_remainder_pvar, x_pvar * x_pvar + x_remainder_pvar + gamma_pvar);
    let r3 = ratio(x_pvar, 1.0 + gamma_pvar.powf(1.0 + p));
    let r4 = ratio(x_remainder_pvar, 1.0 + gamma_pvar.powf(2.0 + p));
    Ok(RegularityReport {
        x_pvar,
        gamma_pvar,
        psi_prime_pvar,
        psi_remainder_pvar,
        x_remainder_pvar,
        ratio_psi_prime: r1,
        ratio_psi_remainder: r2,
        ratio_x: r3,
        ratio_x_remainder: r4,
        finite: [r1, r2, r3, r4].iter().all(|v| v.is_finite()),
    })
}

/// Both sides of the driver-stability estimate for the running integrals
/// `∫ψ(X, γ) dζ` and `∫ψ(Y, ϑ) dη`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// p-variation of the difference of the two running integrals.
    pub lhs: f64,
    pub initial_gap: f64,
    pub control_sup_gap: f64,
    pub control_pvar_gap: f64,
    pub driver_distance: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Inputs of one side of [`driver_stability_probe`].
#[derive(Debug, Clone, Copy)]
pub struct DrivenSystem<'a> {
    pub x0: &'a [f64],
    pub gamma: &'a SampledPath,
    pub driver: &'a RoughPath,
}

pub fn driver_stability_probe(
    rde: &Rde,
    psi: &Field,
    first: DrivenSystem<'_>,
    second: DrivenSystem<'_>,
    p: f64,
) -> Result<StabilityReport> {
    check_p(p)?;
    first.driver.same_grid(second.driver)?;
    let xa = solve_rde(rde, first.gamma, first.driver, first.x0)?;
    let xb = solve_rde(rde, second.gamma, second.driver, second.x0)?;
    let ia = rough_integral_path(&compose_controlled(psi, &xa, first.gamma)?, first.driver)?;
    let ib = rough_integral_path(&compose_controlled(psi, &xb, second.gamma)?, second.driver)?;
    let diff = difference(&ia, &ib)?;
    let lhs = path_pvar(&diff, p);
    let gdiff = difference(first.gamma, second.gamma)?;
    let initial_gap = norm2(&first.x0.iter().zip(second.x0).map(|(a, b)| a - b).collect::<Vec<_>>());
    let control_sup_gap = (0..gdiff.len()).map(|i| norm2(gdiff.value(i))).fold(0.0, f64::max);
    let control_pvar_gap = path_pvar(&gdiff, p);
    let driver_distance = rough_metric(first.driver, second.driver, p, MetricMode::PVar)?;
    let rhs = initial_gap + control_sup_gap + control_pvar_gap + driver_distance;
    Ok(StabilityReport {
        lhs,
        initial_gap,
        control_sup_gap,
        control_pvar_gap,
        driver_distance,
        rhs,
        ratio: ratio(lhs, rhs),
    })
}

/// Pointwise difference of two paths on the same grid.
pub(crate) fn difference(a: &SampledPath, b: &SampledPath) -> Result<SampledPath> {
    same_times(a.times(), b.times())?;
    if a.dim() != b.dim() {
        return arg("paths have different dimensions");
    }
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    SampledPath::from_flat(a.times().to_vec(), values, a.dim())
}
