//! Pathwise optimal control driven by a rough path.
//!
//! The controlled system is `dX = b(X, γ) ds + λ(X, γ) dζ`, `dγ = h(γ, u) ds`
//! with cost `∫f(X, γ) ds + ∫ψ(X, γ) dζ + g(X_T, γ_T) + ε∫|u|^q ds`.
//! Controls `u` are piecewise constant between knots that sit on the driver
//! grid, so value functions are minima over finite lattices.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{arg, Result};
use crate::paths::{norm2, SampledPath};
use crate::rough::{compose_controlled, rough_integral, rough_metric, solve_rde, Field, MetricMode, Rde, RoughPath};

/// `(x, γ) ↦ R`.
pub type ScalarFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// `(γ, u) ↦ dγ/ds`.
pub type ControlDynamics = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A control problem on a fixed driver.
#[derive(Clone)]
pub struct ControlProblem {
    pub rde: Rde,
    pub f: ScalarFn,
    /// `ψ(x, γ) ∈ L(R^d, R)` as a `d`-vector field with its `x`-Jacobian.
    pub psi: Field,
    pub g: ScalarFn,
    pub h: ControlDynamics,
    pub eps: f64,
    pub q_exp: f64,
    pub driver: RoughPath,
    pub control_dim: usize,
    pub input_dim: usize,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("state_dim", &self.rde.state_dim)
            .field("control_dim", &self.control_dim)
            .field("input_dim", &self.input_dim)
            .field("eps", &self.eps)
            .field("q_exp", &self.q_exp)
            .field("driver_len", &self.driver.len())
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    /// A problem with `f = g = 0`, `h(γ, u) = u` and no regularization.
    pub fn new(rde: Rde, psi: Field, driver: RoughPath, control_dim: usize) -> Result<Self> {
        let p = Self {
            rde,
            f: Arc::new(|_, _| 0.0),
            psi,
            g: Arc::new(|_, _| 0.0),
            h: Arc::new(|_, u| u.to_vec()),
            eps: 0.0,
            q_exp: 2.0,
            driver,
            control_dim,
            input_dim: control_dim,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_running_cost(mut self, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.f = Arc::new(f);
        self
    }

    pub fn with_terminal_cost(mut self, g: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.g = Arc::new(g);
        self
    }

    pub fn with_dynamics(
        mut self,
        input_dim: usize,
        h: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.input_dim = input_dim;
        self.h = Arc::new(h);
        self
    }

    pub fn with_regularization(mut self, eps: f64, q_exp: f64) -> Result<Self> {
        self.eps = eps;
        self.q_exp = q_exp;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !(self.q_exp >= 1.0) {
            return arg("regularization needs eps >= 0 and q >= 1");
        }
        let m = self.rde.state_dim;
        let d = self.driver.dim();
        if self.rde.diffusion.out_dim() != m * d {
            return arg(format!("diffusion must be {m}×{d}"));
        }
        if self.psi.out_dim() != d {
            return arg(format!("ψ must return {d} entries"));
        }
        let x = vec![0.0; m];
        let a = vec![0.0; self.control_dim];
        self.rde.diffusion.check_jacobian(&x, &a)?;
        self.psi.check_jacobian(&x, &a)?;
        Ok(())
    }

    fn n_steps(&self) -> usize {
        self.driver.len() - 1
    }

    fn time(&self, k: usize) -> f64 {
        self.driver.time_at(k)
    }

    fn index_of(&self, t: f64) -> Result<usize> {
        self.driver.base().require_grid_index(t)
    }

    /// Same problem on another driver (same grid not required).
    pub fn with_driver(&self, driver: RoughPath) -> Result<Self> {
        let mut p = self.clone();
        p.driver = driver;
        p.validate()?;
        Ok(p)
    }
}

/// Names accepted by [`desk_problem`].
pub const DESK_INSTANCES: [&str; 3] = ["lq", "bilinear", "planar"];

/// Small named problems on a caller-supplied driver.
///
/// * `lq`: `dX = γ ds + 0.3 X dζ`, running cost `X²`, terminal `(X - ½)²`, `ε = 0.1`.
/// * `bilinear`: `dX = (γ - X) ds + (0.2 + 0.1 X) dζ`, `dγ = u - γ`,
///   running cost `X² + ½γ²`, `ψ = 0.25 X`, terminal `|X|`, `ε = 0.05`.
/// * `planar`: two-dimensional driver, `dX = γ ds + 0.2 dζ¹ + 0.1 X dζ²`,
///   `ψ = (0.5 X, 0)`, terminal `X²`, `ε = 0.1`.
pub fn desk_problem(name: &str, driver: RoughPath) -> Result<ControlProblem> {
    let field = |f: fn(&[f64], &[f64]) -> Vec<f64>, j: fn(&[f64], &[f64]) -> Vec<f64>, out| Field::new(out, f, j);
    match name {
        "lq" => {
            let rde = Rde::new(1, field(|_, g| vec![g[0]], |_, _| vec![0.0], 1), field(|x, _| vec![0.3 * x[0]], |_, _| vec![0.3], 1))?;
            let psi = field(|x, _| vec![0.5 * x[0]], |_, _| vec![0.5], 1);
            ControlProblem::new(rde, psi, driver, 1)?
                .with_running_cost(|x, _| x[0] * x[0])
                .with_terminal_cost(|x, _| (x[0] - 0.5).powi(2))
                .with_regularization(0.1, 2.0)
        }
        "bilinear" => {
            let rde = Rde::new(
                1,
                field(|x, g| vec![g[0] - x[0]], |_, _| vec![-1.0], 1),
                field(|x, _| vec![0.2 + 0.1 * x[0]], |_, _| vec![0.1], 1),
            )?;
            let psi = field(|x, _| vec![0.25 * x[0]], |_, _| vec![0.25], 1);
            ControlProblem::new(rde, psi, driver, 1)?
                .with_dynamics(1, |g, u| vec![u[0] - g[0]])
                .with_running_cost(|x, g| x[0] * x[0] + 0.5 * g[0] * g[0])
                .with_terminal_cost(|x, _| x[0].abs())
                .with_regularization(0.05, 2.0)
        }
        "planar" => {
            if driver.dim() != 2 {
                return arg("the planar instance needs a two-dimensional driver");
            }
            let rde = Rde::new(
                1,
                field(|_, g| vec![g[0]], |_, _| vec![0.0], 1),
                field(|x, _| vec![0.2, 0.1 * x[0]], |_, _| vec![0.0, 0.1], 2),
            )?;
            let psi = field(|x, _| vec![0.5 * x[0], 0.0], |_, _| vec![0.5, 0.0], 2);
            ControlProblem::new(rde, psi, driver, 1)?
                .with_terminal_cost(|x, _| x[0] * x[0])
                .with_regularization(0.1, 2.0)
        }
        other => arg(format!("unknown control instance `{other}`; expected one of {DESK_INSTANCES:?}")),
    }
}

/// A control that is constant between consecutive grid indices in `starts`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseControl {
    starts: Vec<usize>,
    values: Vec<Vec<f64>>,
}

impl PiecewiseControl {
    pub fn new(starts: Vec<usize>, values: Vec<Vec<f64>>) -> Result<Self> {
        if starts.len() != values.len() {
            return arg("need one control value per piece");
        }
        if starts.windows(2).any(|w| w[1] <= w[0]) {
            return arg("piece starts must be strictly increasing");
        }
        Ok(Self { starts, values })
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Control active on the grid step `[t_k, t_{k+1})`.
    pub fn at_step(&self, k: usize) -> &[f64] {
        let j = self.starts.partition_point(|&s| s <= k);
        &self.values[j.saturating_sub(1)]
    }
}

/// Lattice of piecewise-constant controls on knots spread evenly over the
/// driver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    pub n_knots: usize,
    pub u_bounds: Vec<(f64, f64)>,
    pub u_levels: Vec<usize>,
}

const EXHAUSTIVE_LIMIT: usize = 100_000;

impl ControlGrid {
    pub fn new(n_knots: usize, u_bounds: Vec<(f64, f64)>, u_levels: Vec<usize>) -> Result<Self> {
        if n_knots == 0 || u_levels.iter().any(|&l| l == 0) || u_bounds.len() != u_levels.len() {
            return arg("control grid needs positive counts and one level count per bound");
        }
        if u_bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return arg("control bounds must satisfy lo <= hi");
        }
        Ok(Self { n_knots, u_bounds, u_levels })
    }

    /// Knot grid indices `⌊j n / n_knots⌋`.
    pub fn knots(&self, n_steps: usize) -> Vec<usize> {
        let mut k: Vec<usize> = (0..self.n_knots).map(|j| j * n_steps / self.n_knots).collect();
        k.dedup();
        k
    }

    fn level_values(&self) -> Vec<Vec<f64>> {
        self.u_bounds
            .iter()
            .zip(&self.u_levels)
            .map(|(&(lo, hi), &n)| {
                if n == 1 {
                    vec![lo]
                } else {
                    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
                }
            })
            .collect()
    }

    /// Number of control values per piece.
    fn choices(&self) -> usize {
        self.u_levels.iter().product()
    }

    fn choice(&self, levels: &[Vec<f64>], mut idx: usize) -> Vec<f64> {
        let mut u = vec![0.0; levels.len()];
        for c in (0..levels.len()).rev() {
            let n = levels[c].len();
            u[c] = levels[c][idx % n];
            idx /= n;
        }
        u
    }

    /// Piece starts for controls on `[t_from, t_to)`.
    fn pieces(&self, n_steps: usize, from: usize, to: usize) -> Vec<usize> {
        if from >= to {
            return Vec::new();
        }
        let mut starts = vec![from];
        starts.extend(self.knots(n_steps).into_iter().filter(|&k| k > from && k < to));
        starts
    }
}

/// Cost pieces of one trajectory segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// `∫f ds + ∫ψ dζ + ε∫|u|^q ds` over the segment.
    pub running: f64,
    pub x_end: Vec<f64>,
    pub gamma_end: Vec<f64>,
}

/// Segment `[t_{i0}, t_{i1}]` of a rough path, with time shifted to start at 0.
fn restrict(rp: &RoughPath, i0: usize, i1: usize) -> Result<RoughPath> {
    let d = rp.dim();
    let base = rp.base();
    let t0 = base.times()[i0];
    let sub = SampledPath::from_flat(
        base.times()[i0..=i1].iter().map(|t| t - t0).collect(),
        base.values()[i0 * d..(i1 + 1) * d].to_vec(),
        d,
    )?;
    RoughPath::from_segments(sub, rp.segment_areas()[i0 * d * d..i1 * d * d].to_vec(), rp.is_geometric())
}

/// `ε ∫_{t_i}^{t_j} |u|^q ds` for a piecewise-constant control.
pub fn regularizing_cost(problem: &ControlProblem, u: &PiecewiseControl, i: usize, j: usize) -> f64 {
    if problem.eps == 0.0 {
        return 0.0;
    }
    (i..j)
        .map(|k| problem.eps * norm2(u.at_step(k)).powf(problem.q_exp) * (problem.time(k + 1) - problem.time(k)))
        .sum()
}

/// Runs the system from grid index `i0` to `i1` and accumulates running costs.
pub fn run_segment(problem: &ControlProblem, i0: usize, i1: usize, x: &[f64], a: &[f64], u: &PiecewiseControl) -> Result<Segment> {
    if x.len() != problem.rde.state_dim || a.len() != problem.control_dim {
        return arg("state or control has the wrong dimension");
    }
    if i0 > i1 || i1 > problem.n_steps() {
        return arg("segment indices out of range");
    }
    if i0 == i1 {
        return Ok(Segment { running: 0.0, x_end: x.to_vec(), gamma_end: a.to_vec() });
    }
    let kdim = problem.control_dim;
    let mut gam = Vec::with_capacity((i1 - i0 + 1) * kdim);
    gam.extend_from_slice(a);
    for k in i0..i1 {
        let g = gam[(k - i0) * kdim..(k - i0 + 1) * kdim].to_vec();
        let uk = u.at_step(k);
        if uk.len() != problem.input_dim {
            return arg("control value has the wrong dimension");
        }
        let dg = (problem.h)(&g, uk);
        let dt = problem.time(k + 1) - problem.time(k);
        gam.extend(g.iter().zip(&dg).map(|(g, v)| g + v * dt));
    }
    let sub = restrict(&problem.driver, i0, i1)?;
    let gamma = SampledPath::from_flat(sub.times().to_vec(), gam, kdim)?;
    let xpath = solve_rde(&problem.rde, &gamma, &sub, x)?;
    let xs = xpath.value();
    let mut running = 0.0;
    let mut f_prev = (problem.f)(xs.value(0), gamma.value(0));
    for k in 0..xs.len() - 1 {
        let f_next = (problem.f)(xs.value(k + 1), gamma.value(k + 1));
        running += 0.5 * (f_prev + f_next) * (xs.time(k + 1) - xs.time(k));
        f_prev = f_next;
    }
    let psi = compose_controlled(&problem.psi, &xpath, &gamma)?;
    running += rough_integral(&psi, &sub, sub.time_at(0), sub.time_at(sub.len() - 1))?[0];
    running += regularizing_cost(problem, u, i0, i1);
    let last = xs.len() - 1;
    Ok(Segment { running, x_end: xs.value(last).to_vec(), gamma_end: gamma.value(last).to_vec() })
}

/// `J(t, x, a, u) + ε∫|u|^q`, integrated on the driver grid from `t` to `T`.
pub fn cost(problem: &ControlProblem, t: f64, x: &[f64], a: &[f64], u: &PiecewiseControl) -> Result<f64> {
    let i0 = problem.index_of(t)?;
    let seg = run_segment(problem, i0, problem.n_steps(), x, a, u)?;
    Ok(seg.running + (problem.g)(&seg.x_end, &seg.gamma_end))
}

/// Minimum over the control lattice and the minimizing control.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueResult {
    pub value: f64,
    pub control: PiecewiseControl,
    pub evaluations: usize,
    pub exhaustive: bool,
}

fn control_from_indices(grid: &ControlGrid, levels: &[Vec<f64>], starts: &[usize], idx: &[usize]) -> PiecewiseControl {
    PiecewiseControl { starts: starts.to_vec(), values: idx.iter().map(|&i| grid.choice(levels, i)).collect() }
}

fn lattice_indices(mut flat: usize, choices: usize, pieces: usize) -> Vec<usize> {
    let mut idx = vec![0; pieces];
    for p in (0..pieces).rev() {
        idx[p] = flat % choices;
        flat /= choices;
    }
    idx
}

/// Minimizes `objective` over the product lattice; ties go to the
/// lexicographically smallest control.
fn lattice_min(
    grid: &ControlGrid,
    starts: &[usize],
    objective: &(dyn Fn(&PiecewiseControl) -> Result<f64> + Sync),
) -> Result<ValueResult> {
    let levels = grid.level_values();
    let choices = grid.choices();
    let pieces = starts.len();
    let total = (choices as f64).powi(pieces as i32);
    if total <= EXHAUSTIVE_LIMIT as f64 {
        let total = total as usize;
        let costs: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|flat| objective(&control_from_indices(grid, &levels, starts, &lattice_indices(flat, choices, pieces))))
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (i, &c) in costs.iter().enumerate() {
            if c < costs[best] {
                best = i;
            }
        }
        return Ok(ValueResult {
            value: costs[best],
            control: control_from_indices(grid, &levels, starts, &lattice_indices(best, choices, pieces)),
            evaluations: total,
            exhaustive: true,
        });
    }

    let mut evaluations = 0;
    let mut rng = crate::rng::rng(0xC0DE);
    let mut starts_idx = vec![vec![0; pieces], vec![choices / 2; pieces]];
    for _ in 0..2 {
        starts_idx.push((0..pieces).map(|_| rng.random_range(0..choices)).collect());
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mut idx in starts_idx {
        let mut current = objective(&control_from_indices(grid, &levels, starts, &idx))?;
        evaluations += 1;
        loop {
            let mut improved = false;
            for p in 0..pieces {
                let trial: Vec<(f64, usize)> = (0..choices)
                    .into_par_iter()
                    .map(|c| {
                        let mut cand = idx.clone();
                        cand[p] = c;
                        objective(&control_from_indices(grid, &levels, starts, &cand)).map(|v| (v, c))
                    })
                    .collect::<Result<_>>()?;
                evaluations += choices;
                for (v, c) in trial {
                    if v < current || (v == current && c < idx[p]) {
                        improved |= v < current;
                        current = v;
                        idx[p] = c;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        if best.as_ref().is_none_or(|(b, bi)| current < *b || (current == *b && idx < *bi)) {
            best = Some((current, idx));
        }
    }
    let (value, idx) = best.expect("at least one start");
    Ok(ValueResult { value, control: control_from_indices(grid, &levels, starts, &idx), evaluations, exhaustive: false })
}

/// `v(t, x, a)` over the control lattice.
pub fn value(problem: &ControlProblem, t: f64, x: &[f64], a: &[f64], grid: &ControlGrid) -> Result<ValueResult> {
    let i0 = problem.index_of(t)?;
    value_from(problem, i0, x, a, grid)
}

fn value_from(problem: &ControlProblem, i0: usize, x: &[f64], a: &[f64], grid: &ControlGrid) -> Result<ValueResult> {
    let n = problem.n_steps();
    let starts = grid.pieces(n, i0, n);
    if starts.is_empty() {
        return Ok(ValueResult {
            value: (problem.g)(x, a),
            control: PiecewiseControl { starts: Vec::new(), values: Vec::new() },
            evaluations: 0,
            exhaustive: true,
        });
    }
    lattice_min(grid, &starts, &|u| {
        let seg = run_segment(problem, i0, n, x, a, u)?;
        Ok(seg.running + (problem.g)(&seg.x_end, &seg.gamma_end))
    })
}

/// Both sides of the dynamic programming principle at `(t, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DppReport {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Compares `v(t, x, a)` with `inf_u { v(r, X_r, γ_r) + costs on [t, r] }`.
pub fn dpp_check(
    problem: &ControlProblem,
    t: f64,
    r: f64,
    x: &[f64],
    a: &[f64],
    grid: &ControlGrid,
    tolerance: f64,
) -> Result<DppReport> {
    let it = problem.index_of(t)?;
    let ir = problem.index_of(r)?;
    let n = problem.n_steps();
    if ir < it {
        return arg("DPP needs t <= r");
    }
    if ir != it && ir != n && !grid.knots(n).contains(&ir) {
        return arg(format!("r = {r} is not a control knot"));
    }
    let lhs = value_from(problem, it, x, a, grid)?.value;
    let starts = grid.pieces(n, it, ir);
    let rhs = if starts.is_empty() {
        value_from(problem, ir, x, a, grid)?.value
    } else {
        lattice_min(grid, &starts, &|u| {
            let seg = run_segment(problem, it, ir, x, a, u)?;
            Ok(seg.running + value_from(problem, ir, &seg.x_end, &seg.gamma_end, grid)?.value)
        })?
        .value
    };
    let gap = (lhs - rhs).abs();
    Ok(DppReport { lhs, rhs, gap, tolerance, passes: gap <= tolerance })
}

/// Trading value `sup { x + Σ γ_k Δη_k - ε Σ |γ_k - γ_{k-1}|^q Δt^{1-q} }`
/// with inventory `γ_k ∈ [-Q, Q]` held on each grid step, starting from
/// inventory `a`, by backward induction over `levels` inventory values.
pub fn trading_value(driver: &SampledPath, x: f64, q_max: f64, a: f64, eps: f64, q_exp: f64, levels: usize) -> Result<f64> {
    if driver.dim() != 1 {
        return arg("trading driver must be scalar");
    }
    if levels < 2 || !(q_max >= 0.0) || !(eps >= 0.0) || !(q_exp >= 1.0) {
        return arg("need at least two inventory levels, Q >= 0, eps >= 0 and q >= 1");
    }
    let inv: Vec<f64> = (0..levels).map(|i| -q_max + 2.0 * q_max * i as f64 / (levels - 1) as f64).collect();
    let n = driver.len() - 1;
    let mut w = vec![0.0; levels];
    for k in (0..n).rev() {
        let dt = driver.time(k + 1) - driver.time(k);
        let deta = driver.value(k + 1)[0] - driver.value(k)[0];
        let scale = dt.powf(1.0 - q_exp);
        let gain: Vec<f64> = inv.iter().zip(&w).map(|(g, wn)| g * deta + wn).collect();
        let prev = if k == 0 { vec![a] } else { inv.clone() };
        let next: Vec<f64> = prev
            .iter()
            .map(|gp| {
                inv.iter()
                    .zip(&gain)
                    .map(|(g, v)| if eps == 0.0 { *v } else { v - eps * (g - gp).abs().powf(q_exp) * scale })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        if k == 0 {
            return Ok(x + next[0]);
        }
        w = next;
    }
    Ok(x)
}

/// One row of the degeneracy table.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyRow {
    pub n_steps: usize,
    pub eps: f64,
    pub value: f64,
    /// `x + Q · length(η)`, reported for `ε = 0`.
    pub closed_form: Option<f64>,
    /// Mesh-independent upper bound for `ε > 0`.
    pub bound: Option<f64>,
}

/// Trading values along piecewise-linear interpolations of one Brownian sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyTable {
    pub rows: Vec<DegeneracyRow>,
}

impl DegeneracyTable {
    pub fn values(&self, eps: f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.eps == eps).map(|r| r.value).collect()
    }

    /// `ε = 0` values strictly increase with the mesh.
    pub fn unregularized_increasing(&self) -> bool {
        self.values(0.0).windows(2).all(|w| w[1] > w[0])
    }

    /// Every `ε > 0` value respects its bound.
    pub fn regularized_bounded(&self) -> bool {
        self.rows.iter().filter_map(|r| r.bound.map(|b| r.value <= b)).all(|ok| ok)
    }

    /// Largest `|value - closed form|` over `ε = 0` rows.
    pub fn closed_form_error(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.closed_form.map(|c| (r.value - c).abs()))
            .fold(0.0, f64::max)
    }
}

/// Samples `η` at `n` steps from the finest path by subsampling its grid.
pub fn interpolation_at(sample: &SampledPath, n: usize) -> Result<SampledPath> {
    let fine = sample.len() - 1;
    if n == 0 || fine % n != 0 {
        return arg(format!("mesh {n} does not divide the sample's {fine} steps"));
    }
    let stride = fine / n;
    let rows: Vec<Vec<f64>> = (0..=n).map(|i| sample.value(i * stride).to_vec()).collect();
    let times = (0..=n).map(|i| sample.time(i * stride)).collect();
    SampledPath::new(times, rows)
}

/// Trading values with inventory bound `Q` and quadratic regularizing cost
/// `ε ∫|u|²` over the meshes `ns` of one scalar sample path.
pub fn degeneracy_demo(
    sample: &SampledPath,
    ns: &[usize],
    q_max: f64,
    x: f64,
    eps_list: &[f64],
    levels: usize,
) -> Result<DegeneracyTable> {
    let origin = sample.value(0)[0];
    let max_abs = (0..sample.len()).map(|k| (sample.value(k)[0] - origin).abs()).fold(0.0, f64::max);
    let horizon = sample.horizon() - sample.time(0);
    let mut rows = Vec::new();
    for &eps in eps_list {
        for &n in ns {
            let eta = interpolation_at(sample, n)?;
            let value = trading_value(&eta, x, q_max, 0.0, eps, 2.0, levels)?;
            let (closed_form, bound) = if eps == 0.0 {
                (Some(x + q_max * eta.path_length_1var(eta.horizon())?), None)
            } else {
                (None, Some(x + q_max * max_abs + horizon * max_abs * max_abs / (4.0 * eps)))
            };
            rows.push(DegeneracyRow { n_steps: n, eps, value, closed_form, bound });
        }
    }
    Ok(DegeneracyTable { rows })
}

/// Value function on a `(t, x, a)` grid for scalar state and control state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub avals: Vec<f64>,
    /// Indexed `[k][ix][ia]`, flattened.
    pub values: Vec<f64>,
}

impl ValueTable {
    fn idx(&self, k: usize, ix: usize, ia: usize) -> usize {
        (k * self.xs.len() + ix) * self.avals.len() + ia
    }

    pub fn get(&self, k: usize, ix: usize, ia: usize) -> f64 {
        self.values[self.idx(k, ix, ia)]
    }

    /// Fills a table from a candidate function `w(t, x, a)`.
    pub fn from_fn(times: Vec<f64>, xs: Vec<f64>, avals: Vec<f64>, w: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(times.len() * xs.len() * avals.len());
        for &t in &times {
            for &x in &xs {
                for &a in &avals {
                    values.push(w(t, x, a));
                }
            }
        }
        Self { times, xs, avals, values }
    }

    /// Bilinear interpolation in `(x, a)` at time index `k`, clamped to the box.
    pub fn interpolate(&self, k: usize, x: f64, a: f64) -> f64 {
        let (ix, wx) = bracket(&self.xs, x);
        let (ia, wa) = bracket(&self.avals, a);
        let v = |i, j| self.get(k, i, j);
        let lo = v(ix, ia) * (1.0 - wa) + v(ix, ia + 1) * wa;
        let hi = v(ix + 1, ia) * (1.0 - wa) + v(ix + 1, ia + 1) * wa;
        lo * (1.0 - wx) + hi * wx
    }
}

fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let i = (grid.partition_point(|&g| g <= x) - 1).min(n - 2);
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn require_scalar(problem: &ControlProblem) -> Result<()> {
    if problem.rde.state_dim != 1 || problem.control_dim != 1 || problem.driver.dim() != 1 {
        return arg("value tables need scalar state, control state and driver");
    }
    Ok(())
}

/// Semi-Lagrangian dynamic programming along a piecewise-linear driver: on each
/// segment the driver moves with slope `η′` and
/// `v_k(x, a) = min_u { (f + ε|u|^q + ψη′) Δt + v_{k+1}(x + (b + λη′)Δt, a + hΔt) }`.
pub fn value_table(
    problem: &ControlProblem,
    x_range: (f64, f64, usize),
    a_range: (f64, f64, usize),
    u_lattice: &[Vec<f64>],
) -> Result<ValueTable> {
    require_scalar(problem)?;
    if x_range.2 < 3 || a_range.2 < 3 || problem.driver.len() < 3 {
        return arg("grid too coarse: need at least 3 nodes per dimension");
    }
    if u_lattice.is_empty() {
        return arg("control lattice is empty");
    }
    let xs = linspace(x_range.0, x_range.1, x_range.2);
    let avals = linspace(a_range.0, a_range.1, a_range.2);
    let times = problem.driver.times().to_vec();
    let nt = times.len();
    let g = &problem.g;
    let mut table = ValueTable::from_fn(times.clone(), xs.clone(), avals.clone(), |_, x, a| g(&[x], &[a]));
    for k in (0..nt - 1).rev() {
        let dt = times[k + 1] - times[k];
        let slope = problem.driver.base().grid_increment(k, k + 1)[0] / dt;
        let layer: Vec<f64> = xs
            .par_iter()
            .flat_map_iter(|&x| avals.iter().map(move |&a| (x, a)))
            .map(|(x, a)| {
                let (xv, av) = ([x], [a]);
                let b = problem.rde.drift.eval(&xv, &av)[0];
                let lam = problem.rde.diffusion.eval(&xv, &av)[0];
                let psi = problem.psi.eval(&xv, &av)[0];
                let f = (problem.f)(&xv, &av);
                let xn = x + (b + lam * slope) * dt;
                u_lattice
                    .iter()
                    .map(|u| {
                        let an = a + (problem.h)(&av, u)[0] * dt;
                        let reg = problem.eps * norm2(u).powf(problem.q_exp);
                        (f + reg + psi * slope) * dt + table.interpolate(k + 1, xn, an)
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let start = table.idx(k, 0, 0);
        table.values[start..start + layer.len()].copy_from_slice(&layer);
    }
    Ok(table)
}

/// Finite-difference HJB residual of a value table.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbReport {
    /// Residual at interior nodes, indexed like the table without its last
    /// time slice and boundary nodes.
    pub field: Vec<f64>,
    pub max_abs: f64,
}

/// `-∂_t v - b ∂_x v - inf_u { h ∂_a v + f + ε|u|^q } - (λ ∂_x v + ψ) η′`
/// at interior nodes, with a forward difference in time and central
/// differences in `x` and `a`.
pub fn hjb_residual(problem: &ControlProblem, table: &ValueTable, u_lattice: &[Vec<f64>]) -> Result<HjbReport> {
    require_scalar(problem)?;
    let (nt, nx, na) = (table.times.len(), table.xs.len(), table.avals.len());
    if nt < 3 || nx < 3 || na < 3 {
        return arg("grid too coarse: need at least 3 nodes per dimension");
    }
    if table.times.len() != problem.driver.len() {
        return arg("table times must match the driver grid");
    }
    let mut field = Vec::new();
    let mut max_abs: f64 = 0.0;
    for k in 0..nt - 1 {
        let dt = table.times[k + 1] - table.times[k];
        let slope = problem.driver.base().grid_increment(k, k + 1)[0] / dt;
        for ix in 1..nx - 1 {
            for ia in 1..na - 1 {
                let (x, a) = (table.xs[ix], table.avals[ia]);
                let (xv, av) = ([x], [a]);
                let vt = (table.get(k + 1, ix, ia) - table.get(k, ix, ia)) / dt;
                let vx = (table.get(k, ix + 1, ia) - table.get(k, ix - 1, ia)) / (table.xs[ix + 1] - table.xs[ix - 1]);
                let va = (table.get(k, ix, ia + 1) - table.get(k, ix, ia - 1)) / (table.avals[ia + 1] - table.avals[ia - 1]);
                let b = problem.rde.drift.eval(&xv, &av)[0];
                let lam = problem.rde.diffusion.eval(&xv, &av)[0];
                let psi = problem.psi.eval(&xv, &av)[0];
                let f = (problem.f)(&xv, &av);
                let inner = u_lattice
                    .iter()
                    .map(|u| (problem.h)(&av, u)[0] * va + f + problem.eps * norm2(u).powf(problem.q_exp))
                    .fold(f64::INFINITY, f64::min);
                let r = -vt - b * vx - inner - (lam * vx + psi) * slope;
                max_abs = max_abs.max(r.abs());
                field.push(r);
            }
        }
    }
    Ok(HjbReport { field, max_abs })
}

/// Checks of a candidate value function and feedback control.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Largest HJB residual of the candidate on the table grid.
    pub residual: f64,
    /// Cost of the closed-loop candidate control minus the table value.
    pub cost_gap: f64,
    /// `max |w - v|` over the table grid.
    pub value_gap: f64,
}

/// Compares a candidate `w` and feedback `u*(t, x, a)` with a value table.
pub fn verification_probe(
    problem: &ControlProblem,
    w: impl Fn(f64, f64, f64) -> f64,
    u_star: impl Fn(f64, f64, f64) -> Vec<f64>,
    table: &ValueTable,
    u_lattice: &[Vec<f64>],
    x0: f64,
    a0: f64,
) -> Result<VerificationReport> {
    let candidate = ValueTable::from_fn(table.times.clone(), table.xs.clone(), table.avals.clone(), &w);
    let residual = hjb_residual(problem, &candidate, u_lattice)?.max_abs;
    let value_gap = candidate
        .values
        .iter()
        .zip(&table.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let n = problem.n_steps();
    let (mut x, mut a) = (vec![x0], vec![a0]);
    let mut total = 0.0;
    for k in 0..n {
        let u = u_star(problem.time(k), x[0], a[0]);
        let piece = PiecewiseControl { starts: vec![k], values: vec![u] };
        let seg = run_segment(problem, k, k + 1, &x, &a, &piece)?;
        total += seg.running;
        x = seg.x_end;
        a = seg.gamma_end;
    }
    total += (problem.g)(&x, &a);
    let cost_gap = total - table.interpolate(0, x0, a0);
    Ok(VerificationReport { residual, cost_gap, value_gap })
}

/// One driver pair of the continuity scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityRow {
    pub coarse: usize,
    pub fine: usize,
    pub metric: f64,
    pub value_gap: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityScan {
    pub rows: Vec<ContinuityRow>,
    pub max_ratio: f64,
}

impl ContinuityScan {
    /// The largest ratio over the finer half of the scan stays within
    /// `factor` times the largest ratio over the coarser half.
    pub fn is_stable(&self, factor: f64) -> bool {
        let ratios: Vec<f64> = self.rows.iter().map(|r| r.ratio).collect();
        if ratios.len() < 2 || ratios.iter().any(|r| !r.is_finite()) {
            return false;
        }
        let half = ratios.len() / 2;
        let coarse = ratios[..half].iter().copied().fold(0.0, f64::max);
        let fine = ratios[half..].iter().copied().fold(0.0, f64::max);
        fine <= factor * coarse.max(f64::MIN_POSITIVE)
    }
}

/// Lift of the mesh-`n` interpolation of `sample`, refined onto the sample grid.
pub fn lifted_interpolation(sample: &SampledPath, n: usize) -> Result<RoughPath> {
    RoughPath::canonical_lift(&interpolation_at(sample, n)?).refine(sample.times())
}

/// `|v^ζ - v^η|` against `ρ_{p-var}(ζ, η)` for pairs of interpolations of
/// one sample, all refined to the sample grid so only the driver changes.
pub fn driver_continuity_scan(
    problem: &ControlProblem,
    sample: &SampledPath,
    pairs: &[(usize, usize)],
    p: f64,
    x: &[f64],
    a: &[f64],
    grid: &ControlGrid,
) -> Result<ContinuityScan> {
    let t0 = sample.time(0);
    let value_on = |n: usize| -> Result<(RoughPath, f64)> {
        let rp = lifted_interpolation(sample, n)?;
        let v = value(&problem.with_driver(rp.clone())?, t0, x, a, grid)?.value;
        Ok((rp, v))
    };
    let mut rows = Vec::new();
    for &(coarse, fine) in pairs {
        if coarse == fine {
            continue;
        }
        let (z, vz) = value_on(coarse)?;
        let (e, ve) = value_on(fine)?;
        let metric = rough_metric(&z, &e, p, MetricMode::PVar)?;
        let value_gap = (vz - ve).abs();
        rows.push(ContinuityRow { coarse, fine, metric, value_gap, ratio: value_gap / metric });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ContinuityScan { rows, max_ratio })
}
