//! Truncated tensor algebra `T^N(R^d)` and its dual word space.
//!
//! Level `n` of a [`TruncatedTensor`] is a dense array of `d^n` reals; the
//! word `i_1 ... i_n` (letters `1..=d`) addresses the entry whose base-`d`
//! big-endian index has digits `i_k - 1`. [`LinearFunctional`]s are sparse
//! finite sums of words and pair with tensors coefficient-wise.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{arg, Error, Result};

/// A word over the alphabet `{1, ..., d}`. The empty word is the unit of the
/// shuffle product.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<u16>);

impl Word {
    pub fn new(letters: Vec<u16>) -> Result<Self> {
        if letters.contains(&0) {
            return arg("word letters start at 1");
        }
        Ok(Self(letters))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn letter(i: u16) -> Self {
        assert!(i > 0, "word letters start at 1");
        Self(vec![i])
    }

    pub fn letters(&self) -> &[u16] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_letter(&self) -> u16 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// The concatenation `w i`.
    pub fn appended(&self, letter: u16) -> Self {
        let mut v = self.0.clone();
        v.push(letter);
        Self(v)
    }

    /// Offset of this word inside the level-`degree` array of a `dim`-dimensional tensor.
    pub fn index(&self, dim: usize) -> Result<usize> {
        let mut idx = 0usize;
        for &l in &self.0 {
            if l as usize > dim {
                return arg(format!("letter {l} exceeds alphabet size {dim}"));
            }
            idx = idx * dim + (l as usize - 1);
        }
        Ok(idx)
    }

    /// Inverse of [`index`](Self::index).
    pub fn from_index(mut idx: usize, degree: usize, dim: usize) -> Self {
        let mut letters = vec![0u16; degree];
        for k in (0..degree).rev() {
            letters[k] = (idx % dim) as u16 + 1;
            idx /= dim;
        }
        Self(letters)
    }

    /// All words of length `degree` over `{1..=dim}` in index order.
    pub fn all_of_degree(dim: usize, degree: usize) -> impl Iterator<Item = Word> {
        let count = dim.pow(degree as u32);
        (0..count).map(move |i| Word::from_index(i, degree, dim))
    }

    fn text(&self) -> String {
        if self.0.is_empty() {
            "e".to_string()
        } else if self.0.iter().all(|&l| l <= 9) {
            self.0.iter().map(|l| char::from(b'0' + *l as u8)).collect()
        } else {
            let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
            format!("[{}]", parts.join(","))
        }
    }
}

// Shorter words first, then lexicographic.
impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "e" || s == "∅" {
            return Ok(Word::empty());
        }
        let letters: Result<Vec<u16>> = if let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            inner
                .split(',')
                .map(|p| p.trim().parse::<u16>().map_err(|e| parse_err(format!("bad letter {p:?}: {e}"))))
                .collect()
        } else {
            s.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as u16)
                        .ok_or_else(|| parse_err(format!("bad letter {c:?} in word {s:?}")))
                })
                .collect()
        };
        let letters = letters?;
        if letters.is_empty() || letters.contains(&0) {
            return Err(parse_err(format!("invalid word {s:?}")));
        }
        Ok(Word(letters))
    }
}

fn parse_err(msg: String) -> Error {
    Error::Parse { line: 1, msg }
}

/// Shuffle product of two words; coefficients count interleavings.
pub fn shuffle(w: &Word, v: &Word) -> LinearFunctional {
    let (a, b) = (w.letters(), v.letters());
    // table[i][j] holds the shuffles of a[..i] and b[..j].
    let mut prev_row: Vec<BTreeMap<Vec<u16>, f64>> = Vec::with_capacity(b.len() + 1);
    for j in 0..=b.len() {
        let mut m = BTreeMap::new();
        m.insert(b[..j].to_vec(), 1.0);
        prev_row.push(m);
    }
    for i in 1..=a.len() {
        let mut row: Vec<BTreeMap<Vec<u16>, f64>> = Vec::with_capacity(b.len() + 1);
        let mut first = BTreeMap::new();
        first.insert(a[..i].to_vec(), 1.0);
        row.push(first);
        for j in 1..=b.len() {
            let mut m: BTreeMap<Vec<u16>, f64> = BTreeMap::new();
            for (u, c) in &prev_row[j] {
                let mut x = u.clone();
                x.push(a[i - 1]);
                *m.entry(x).or_insert(0.0) += c;
            }
            for (u, c) in &row[j - 1] {
                let mut x = u.clone();
                x.push(b[j - 1]);
                *m.entry(x).or_insert(0.0) += c;
            }
            row.push(m);
        }
        prev_row = row;
    }
    let mut out = LinearFunctional::zero();
    for (letters, c) in prev_row.pop().expect("non-empty") {
        out.add_term(Word(letters), c);
    }
    out
}

/// A finite linear combination of words, an element of `T(V*)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearFunctional {
    terms: BTreeMap<Word, f64>,
}

impl LinearFunctional {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `c * ∅`.
    pub fn constant(c: f64) -> Self {
        Self::from_terms([(Word::empty(), c)])
    }

    pub fn word(w: Word) -> Self {
        Self::from_terms([(w, 1.0)])
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Word, f64)>) -> Self {
        let mut l = Self::zero();
        for (w, c) in terms {
            l.add_term(w, c);
        }
        l
    }

    /// Adds `c * w`, dropping the term if the coefficient cancels to zero.
    pub fn add_term(&mut self, w: Word, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(w) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn coefficient(&self, w: &Word) -> f64 {
        self.terms.get(w).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, f64)> {
        self.terms.iter().map(|(w, c)| (w, *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum word length; 0 for the zero functional.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Word::degree).max().unwrap_or(0)
    }

    /// ℓ¹ norm of the coefficients.
    pub fn l1_norm(&self) -> f64 {
        self.terms.values().map(|c| c.abs()).sum()
    }

    pub fn max_letter(&self) -> u16 {
        self.terms.keys().map(Word::max_letter).max().unwrap_or(0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|(w, c)| (w.clone(), c * s)))
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, c) in other.terms() {
            out.add_term(w.clone(), c);
        }
        out
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    /// Drops every word longer than `max_degree`.
    pub fn truncated(&self, max_degree: usize) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .filter(|(w, _)| w.degree() <= max_degree)
                .map(|(w, c)| (w.clone(), *c)),
        )
    }

    /// Right-concatenates `letter` to every word: `l ↦ l i`.
    pub fn appended(&self, letter: u16) -> Self {
        Self::from_terms(self.terms.iter().map(|(w, c)| (w.appended(letter), *c)))
    }

    /// Bilinear shuffle product.
    pub fn shuffle(&self, other: &Self) -> Self {
        self.shuffle_truncated(other, usize::MAX)
    }

    /// Shuffle product keeping only words of length `<= max_degree`.
    pub fn shuffle_truncated(&self, other: &Self, max_degree: usize) -> Self {
        let mut out = Self::zero();
        for (w, a) in &self.terms {
            for (v, b) in &other.terms {
                if w.degree().saturating_add(v.degree()) > max_degree {
                    continue;
                }
                for (u, c) in shuffle(w, v).terms {
                    out.add_term(u, a * b * c);
                }
            }
        }
        out
    }

    /// `l^{⧢ r}`, truncated at `max_degree`.
    pub fn shuffle_power(&self, r: usize, max_degree: usize) -> Self {
        let mut acc = Self::constant(1.0);
        for _ in 0..r {
            acc = acc.shuffle_truncated(self, max_degree);
        }
        acc
    }

    /// Shuffle polynomial `λ_0 ∅ + λ_1 l + ... + λ_n l^{⧢n}`.
    pub fn shuffle_polynomial(&self, coeffs: &[f64]) -> Self {
        self.shuffle_polynomial_truncated(coeffs, usize::MAX)
    }

    pub fn shuffle_polynomial_truncated(&self, coeffs: &[f64], max_degree: usize) -> Self {
        let mut out = Self::zero();
        let mut power = Self::constant(1.0);
        for (k, &lambda) in coeffs.iter().enumerate() {
            if k > 0 {
                power = power.shuffle_truncated(self, max_degree);
            }
            out = out.plus(&power.scaled(lambda));
        }
        out
    }

    /// Exponential shuffle `exp(a_0) Σ_r l̃^{⧢r}/r!` with words longer than
    /// `max_degree` dropped.
    pub fn exp_shuffle(&self, max_degree: usize) -> Self {
        let a0 = self.coefficient(&Word::empty());
        let tail = self.minus(&Self::constant(a0));
        let scale = a0.exp();
        let mut out = Self::constant(1.0);
        if tail.is_zero() {
            return out.scaled(scale);
        }
        let mut term = Self::constant(1.0);
        let mut r = 0usize;
        loop {
            r += 1;
            term = term.shuffle_truncated(&tail, max_degree).scaled(1.0 / r as f64);
            if term.is_zero() {
                break;
            }
            out = out.plus(&term);
        }
        out.scaled(scale)
    }

    /// Pairing `⟨l, a⟩`. Words longer than the tensor's level are an error.
    pub fn pair(&self, a: &TruncatedTensor) -> Result<f64> {
        let mut total = 0.0;
        for (w, c) in &self.terms {
            total += c * a.get(w)?;
        }
        Ok(total)
    }
}

impl fmt::Display for LinearFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let parts: Vec<String> = self.terms.iter().map(|(w, c)| format!("{c}*{w}")).collect();
        f.write_str(&parts.join(" + "))
    }
}

impl FromStr for LinearFunctional {
    type Err = Error;

    /// Parses `coef*word` terms joined by `+`, with `e` for the empty word.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "0" || s.is_empty() {
            return Ok(Self::zero());
        }
        // A piece without `*` is the mantissa of an exponent like `1e+5`.
        let mut pieces: Vec<String> = Vec::new();
        for raw in s.split('+') {
            match pieces.last_mut() {
                Some(last) if !last.contains('*') => {
                    last.push('+');
                    last.push_str(raw);
                }
                _ => pieces.push(raw.to_string()),
            }
        }
        let mut out = Self::zero();
        for piece in pieces {
            let (c, w) = piece
                .split_once('*')
                .ok_or_else(|| parse_err(format!("term {:?} is not of the form coef*word", piece.trim())))?;
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad coefficient {:?}: {e}", c.trim())))?;
            out.add_term(w.parse()?, c);
        }
        Ok(out)
    }
}

/// An element of `T^N(R^d)` stored densely level by level.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTensor {
    dim: usize,
    levels: Vec<Vec<f64>>,
}

impl TruncatedTensor {
    pub fn zero(dim: usize, level: usize) -> Self {
        let levels = (0..=level).map(|n| vec![0.0; dim.pow(n as u32)]).collect();
        Self { dim, levels }
    }

    /// The unit `(1, 0, 0, ...)`.
    pub fn one(dim: usize, level: usize) -> Self {
        let mut t = Self::zero(dim, level);
        t.levels[0][0] = 1.0;
        t
    }

    pub fn from_levels(dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return arg("tensor dimension must be positive");
        }
        if levels.is_empty() {
            return arg("a tensor needs at least level 0");
        }
        for (n, l) in levels.iter().enumerate() {
            if l.len() != dim.pow(n as u32) {
                return arg(format!("level {n} must hold {} entries, got {}", dim.pow(n as u32), l.len()));
            }
        }
        Ok(Self { dim, levels })
    }

    /// `Σ_k Δ^{⊗k}/k!`, the signature of a straight segment with increment `delta`.
    pub fn exp_increment(delta: &[f64], level: usize) -> Self {
        let dim = delta.len();
        let mut t = Self::one(dim, level);
        for n in 1..=level {
            let prev = t.levels[n - 1].clone();
            let cur = &mut t.levels[n];
            let inv = 1.0 / n as f64;
            for (i, p) in prev.iter().enumerate() {
                for (j, d) in delta.iter().enumerate() {
                    cur[i * dim + j] = p * d * inv;
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Truncation level `N`.
    pub fn level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// `π_n(a)`.
    pub fn project(&self, n: usize) -> Result<&[f64]> {
        self.levels
            .get(n)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Argument(format!("level {n} exceeds truncation level {}", self.level())))
    }

    /// `π_{≤n}(a)`.
    pub fn project_up_to(&self, n: usize) -> Result<Self> {
        if n > self.level() {
            return arg(format!("level {n} exceeds truncation level {}", self.level()));
        }
        Ok(Self { dim: self.dim, levels: self.levels[..=n].to_vec() })
    }

    /// Coefficient of the word `w`.
    pub fn get(&self, w: &Word) -> Result<f64> {
        let n = w.degree();
        if n > self.level() {
            return arg(format!(
                "word {w} of degree {n} exceeds tensor level {}; truncate the functional explicitly",
                self.level()
            ));
        }
        Ok(self.levels[n][w.index(self.dim)?])
    }

    /// `sup_n |a_n|` with the max-entry norm on each level.
    pub fn linf_norm(&self) -> f64 {
        self.levels.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            levels: self.levels.iter().map(|l| l.iter().map(|x| x * s).collect()).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(Self { dim: self.dim, levels })
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return arg(format!("tensor dimensions differ: {} vs {}", self.dim, other.dim));
        }
        if self.level() != other.level() {
            return arg(format!("tensor levels differ: {} vs {}", self.level(), other.level()));
        }
        Ok(())
    }

    /// Max-entry distance across all levels.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.linf_norm())
    }

    /// Tensor product truncated at the lower of the two levels.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return arg(format!("tensor dimensions differ: {} vs {}", self.dim, other.dim));
        }
        let level = self.level().min(other.level());
        let mut out = Self::zero(self.dim, level);
        for n in 0..=level {
            let c = &mut out.levels[n];
            for k in 0..=n {
                let a = &self.levels[k];
                let b = &other.levels[n - k];
                let bl = b.len();
                for (i, x) in a.iter().enumerate() {
                    if *x == 0.0 {
                        continue;
                    }
                    let row = &mut c[i * bl..(i + 1) * bl];
                    for (r, y) in row.iter_mut().zip(b) {
                        *r += x * y;
                    }
                }
            }
        }
        Ok(out)
    }

    /// In-place `a ← a ⊗ exp(Δ)`, the Chen update for a straight segment.
    pub fn mul_exp_increment(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.dim, "increment dimension mismatch");
        let dim = self.dim;
        for n in (1..=self.level()).rev() {
            // Horner: (((a_0 Δ/n + a_1) Δ/(n-1) + a_2) ... ) Δ/1 + a_n.
            let mut acc = self.levels[0].clone();
            for k in 1..=n {
                let inv = 1.0 / (n - k + 1) as f64;
                let mut next = self.levels[k].clone();
                for (i, x) in acc.iter().enumerate() {
                    let xi = x * inv;
                    for (j, d) in delta.iter().enumerate() {
                        next[i * dim + j] += xi * d;
                    }
                }
                acc = next;
            }
            self.levels[n] = acc;
        }
    }

    /// Inverse via the truncated geometric series `a_0^{-1} Σ_n (1 - a/a_0)^n`.
    pub fn inverse(&self) -> Result<Self> {
        let a0 = self.levels[0][0];
        if a0 == 0.0 {
            return Err(Error::Singularity("tensor with zero scalar part has no inverse".into()));
        }
        let n = self.level();
        let mut b = self.scaled(-1.0 / a0);
        b.levels[0][0] = 0.0;
        let mut sum = Self::one(self.dim, n);
        let mut power = Self::one(self.dim, n);
        for _ in 0..n {
            power = power.mul(&b)?;
            for (s, p) in sum.levels.iter_mut().zip(&power.levels) {
                for (x, y) in s.iter_mut().zip(p) {
                    *x += y;
                }
            }
        }
        Ok(sum.scaled(1.0 / a0))
    }

    /// Randomised test of the shuffle identity `⟨w⧢v, a⟩ = ⟨w, a⟩⟨v, a⟩`
    /// on `trials` word pairs with total degree at most the tensor level.
    pub fn is_group_like(&self, trials: usize, tol: f64, seed: u64) -> Result<bool> {
        if (self.levels[0][0] - 1.0).abs() > tol {
            return arg("group-like test expects a unit scalar part");
        }
        let mut rng = crate::rng::rng(seed);
        let n = self.level();
        for _ in 0..trials {
            let m = rng.random_range(0..=n);
            let k = rng.random_range(0..=n - m);
            let w = random_word(&mut rng, self.dim, m);
            let v = random_word(&mut rng, self.dim, k);
            let lhs = shuffle(&w, &v).pair(self)?;
            let rhs = self.get(&w)? * self.get(&v)?;
            if (lhs - rhs).abs() > tol {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Exhaustive group-like check over every word pair with total degree `<= max_total`.
    pub fn shuffle_defect(&self, max_total: usize) -> Result<f64> {
        let mut worst = 0.0_f64;
        for m in 0..=max_total {
            for k in 0..=max_total - m {
                for w in Word::all_of_degree(self.dim, m) {
                    for v in Word::all_of_degree(self.dim, k) {
                        let lhs = shuffle(&w, &v).pair(self)?;
                        worst = worst.max((lhs - self.get(&w)? * self.get(&v)?).abs());
                    }
                }
            }
        }
        Ok(worst)
    }
}

pub(crate) fn random_word(rng: &mut crate::rng::Rng, dim: usize, len: usize) -> Word {
    Word((0..len).map(|_| rng.random_range(1..=dim as u16)).collect())
}
