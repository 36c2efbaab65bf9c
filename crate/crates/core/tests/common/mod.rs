//! Independent reference computations used across the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, Normal};

/// Euclidean norm of `b - a`, summed in coordinate order.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt()
}

/// p-variation by enumerating every partition of the sample grid.
pub fn brute_pvar(rows: &[Vec<f64>], p: f64) -> f64 {
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let interior = n - 2;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u64..(1u64 << interior) {
        let mut pts = vec![0];
        pts.extend((0..interior).filter(|i| mask >> i & 1 == 1).map(|i| i + 1));
        pts.push(n - 1);
        let s = pts.windows(2).fold(0.0, |acc, w| acc + dist(&rows[w[0]], &rows[w[1]]).powf(p));
        best = best.max(s);
    }
    best.powf(1.0 / p)
}

/// Cox–Ross–Rubinstein tree for an American option.
pub fn crr_american(s0: f64, strike: f64, rate: f64, sigma: f64, horizon: f64, steps: usize, put: bool) -> f64 {
    let dt = horizon / steps as f64;
    let u = (sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let disc = (-rate * dt).exp();
    let q = ((rate * dt).exp() - d) / (u - d);
    let payoff = |s: f64| if put { (strike - s).max(0.0) } else { (s - strike).max(0.0) };
    let mut v: Vec<f64> = (0..=steps)
        .map(|j| payoff(s0 * u.powi(j as i32) * d.powi((steps - j) as i32)))
        .collect();
    for n in (0..steps).rev() {
        for j in 0..=n {
            let cont = disc * (q * v[j + 1] + (1.0 - q) * v[j]);
            let s = s0 * u.powi(j as i32) * d.powi((n - j) as i32);
            v[j] = cont.max(payoff(s));
        }
    }
    v[0]
}

/// Black–Scholes price of a European call or put.
pub fn black_scholes(s0: f64, strike: f64, rate: f64, sigma: f64, horizon: f64, put: bool) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let sd = sigma * horizon.sqrt();
    let d1 = ((s0 / strike).ln() + (rate + 0.5 * sigma * sigma) * horizon) / sd;
    let d2 = d1 - sd;
    let df = (-rate * horizon).exp();
    if put {
        strike * df * n.cdf(-d2) - s0 * n.cdf(-d1)
    } else {
        s0 * n.cdf(d1) - strike * df * n.cdf(d2)
    }
}

/// One-step-ahead Kalman predictor for the Euler-discretized scalar model
/// `S' = (1 + αΔ)S + σ(ρΔW + √(1-ρ²)ΔB)`, `ΔY = cSΔ + ΔW`.
/// Returns the predicted means at every grid point.
pub fn discrete_kalman(alpha: f64, sigma: f64, c: f64, rho: f64, mu0: f64, s0: f64, dy: &[f64], dt: f64) -> Vec<f64> {
    let a = 1.0 + alpha * dt;
    let (mut m, mut p) = (mu0, s0);
    let mut out = vec![m];
    for &z in dy {
        let s = c * c * p * dt * dt + dt;
        let g = (a * p * c * dt + sigma * rho * dt) / s;
        m = a * m + g * (z - c * m * dt);
        p = a * a * p + sigma * sigma * dt - g * g * s;
        out.push(m);
    }
    out
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Stratonovich–Heun scheme for `dX = λ(X) dW` on the increments `dw`.
pub fn heun(lambda: impl Fn(f64) -> f64, x0: f64, dw: &[f64]) -> f64 {
    dw.iter().fold(x0, |x, &w| {
        let pred = x + lambda(x) * w;
        x + 0.5 * (lambda(x) + lambda(pred)) * w
    })
}

/// Truncated tensor as levels of row-major coefficient arrays.
pub type Tensor = Vec<Vec<f64>>;

pub fn tensor_one(dim: usize, level: usize) -> Tensor {
    let mut t: Tensor = (0..=level).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
    t[0][0] = 1.0;
    t
}

pub fn tensor_mul(a: &Tensor, b: &Tensor, dim: usize) -> Tensor {
    let level = a.len() - 1;
    let mut out = tensor_one(dim, level);
    out[0][0] = 0.0;
    for n in 0..=level {
        for i in 0..=n {
            let j = n - i;
            let bj = dim.pow(j as u32);
            for (x, av) in a[i].iter().enumerate() {
                for (y, bv) in b[j].iter().enumerate() {
                    out[n][x * bj + y] += av * bv;
                }
            }
        }
    }
    out
}

pub fn tensor_exp(delta: &[f64], level: usize) -> Tensor {
    let dim = delta.len();
    let mut t = tensor_one(dim, level);
    for k in 1..=level {
        let prev = t[k - 1].clone();
        let mut cur = vec![0.0; dim.pow(k as u32)];
        for (x, p) in prev.iter().enumerate() {
            for (i, d) in delta.iter().enumerate() {
                cur[x * dim + i] = p * d / k as f64;
            }
        }
        t[k] = cur;
    }
    t
}

/// Signature of the piecewise-linear path through `rows` as a Chen product.
pub fn signature_oracle(rows: &[Vec<f64>], level: usize) -> Tensor {
    let dim = rows[0].len();
    let mut s = tensor_one(dim, level);
    for w in rows.windows(2) {
        let delta: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| b - a).collect();
        s = tensor_mul(&s, &tensor_exp(&delta, level), dim);
    }
    s
}

/// Coefficient of a word (letters `1..=dim`).
pub fn coeff(t: &Tensor, word: &[u16], dim: usize) -> f64 {
    let idx = word.iter().fold(0usize, |acc, &l| acc * dim + (l as usize - 1));
    t[word.len()][idx]
}

/// Shuffle product by the recursive definition `ua ⧢ vb = (u ⧢ vb)a + (ua ⧢ v)b`.
pub fn shuffle_oracle(u: &[u16], v: &[u16]) -> BTreeMap<Vec<u16>, f64> {
    let mut out = BTreeMap::new();
    if u.is_empty() || v.is_empty() {
        out.insert(if u.is_empty() { v.to_vec() } else { u.to_vec() }, 1.0);
        return out;
    }
    let (ua, a) = (&u[..u.len() - 1], u[u.len() - 1]);
    let (vb, b) = (&v[..v.len() - 1], v[v.len() - 1]);
    for (w, c) in shuffle_oracle(ua, v) {
        let mut w = w;
        w.push(a);
        *out.entry(w).or_insert(0.0) += c;
    }
    for (w, c) in shuffle_oracle(u, vb) {
        let mut w = w;
        w.push(b);
        *out.entry(w).or_insert(0.0) += c;
    }
    out
}

/// Level-2 of the canonical lift of the piecewise-linear path on `[t_i, t_j]`.
pub fn level2_oracle(rows: &[Vec<f64>], i: usize, j: usize) -> Vec<f64> {
    let d = rows[0].len();
    let mut out = vec![0.0; d * d];
    for k in i..j {
        for a in 0..d {
            for b in 0..d {
                let before = rows[k][a] - rows[i][a];
                let da = rows[k + 1][a] - rows[k][a];
                let db = rows[k + 1][b] - rows[k][b];
                out[a * d + b] += before * db + 0.5 * da * db;
            }
        }
    }
    out
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}
