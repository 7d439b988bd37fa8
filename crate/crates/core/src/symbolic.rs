//! Exact computation on the two-sided Bernoulli shift.
//!
//! Points are bi-infinite sequences `x = (x_k)` over the alphabet
//! `{0, .., A-1}` with i.i.d. coordinates. The shift acts by
//! `(T x)_k = x_{k+1}`, so `f o T^n` reads the coordinates of `f`'s window
//! moved by `+n`: if `f` depends on `x_lo..=x_hi` then `f o T^n` depends on
//! `x_{lo+n}..=x_{hi+n}`.
//!
//! The sigma-algebra `F_0` is generated by the coordinates with index
//! `>= 0` (the local stable leaves `{y : y_k = x_k for k >= 0}`), and
//! `T^{-k} F_0` by those with index `>= k`.
//!
//! Observables are [`WindowFunction`]s: dense tables over all words on a
//! finite coordinate window. Coordinate `lo + j` is digit `j` of the table
//! index in base `A` (least significant first), so conditioning on the future
//! averages out the low digits.

use crate::report::fmt_f64;
use std::io::{BufRead, Write};
use thiserror::Error;

/// Largest dense table accepted.
pub const MAX_TABLE_ENTRIES: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolicError {
    #[error("invalid probabilities: {0}")]
    BadProbabilities(String),
    #[error("window table would need {entries} entries (limit {MAX_TABLE_ENTRIES})")]
    WindowTooLarge { entries: u128 },
    #[error("alphabet mismatch: {0} vs {1}")]
    AlphabetMismatch(usize, usize),
    #[error("table has {got} entries, window needs {expected}")]
    BadTable { expected: usize, got: usize },
    #[error("invalid window [{lo}, {hi}]")]
    BadWindow { lo: i64, hi: i64 },
    #[error("malformed window csv: {0}")]
    Csv(String),
}

/// Product measure on `{0..A-1}^Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliShift {
    probabilities: Vec<f64>,
}

impl BernoulliShift {
    pub fn new(probabilities: Vec<f64>) -> Result<Self, SymbolicError> {
        if probabilities.len() < 2 {
            return Err(SymbolicError::BadProbabilities("alphabet must have at least 2 symbols".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(SymbolicError::BadProbabilities(format!("probability {p} is not positive")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-14 {
            return Err(SymbolicError::BadProbabilities(format!("probabilities sum to {total}")));
        }
        Ok(Self { probabilities })
    }

    /// Uniform measure on `alphabet` symbols.
    pub fn fair(alphabet: usize) -> Self {
        Self::new(vec![1.0 / alphabet as f64; alphabet]).expect("uniform probabilities are valid")
    }

    pub fn alphabet_size(&self) -> usize {
        self.probabilities.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    fn check(&self, f: &WindowFunction) {
        assert_eq!(
            f.alphabet,
            self.alphabet_size(),
            "window function alphabet does not match the shift"
        );
    }

    /// Averages out the `count` lowest coordinates of `table`.
    fn average_low(&self, table: &[f64], count: usize) -> Vec<f64> {
        let a = self.alphabet_size();
        let mut current = table.to_vec();
        for _ in 0..count {
            current = current
                .chunks_exact(a)
                .map(|block| block.iter().zip(&self.probabilities).map(|(v, p)| p * v).sum())
                .collect();
        }
        current
    }

    /// Exact integral of `f`.
    pub fn expectation(&self, f: &WindowFunction) -> f64 {
        self.check(f);
        self.average_low(&f.table, f.len())[0]
    }

    /// `E[f | F_0]`: averages out every coordinate with negative index.
    pub fn condition_future(&self, f: &WindowFunction) -> WindowFunction {
        self.condition_shifted_future(f, 0)
    }

    /// `E[f | T^{-k} F_0]`: averages out every coordinate with index `< k`.
    ///
    /// The result lives on `[max(lo, k), hi]`, or is the constant `E[f]`
    /// on `[k, k]` when the whole window lies below `k`.
    pub fn condition_shifted_future(&self, f: &WindowFunction, k: i64) -> WindowFunction {
        self.check(f);
        if f.lo >= k {
            return f.clone();
        }
        if f.hi < k {
            return WindowFunction::constant(f.alphabet, k, self.expectation(f));
        }
        let count = (k - f.lo) as usize;
        WindowFunction { lo: k, hi: f.hi, alphabet: f.alphabet, table: self.average_low(&f.table, count) }
    }

    /// `E[f . g o T^n]`.
    pub fn correlation(&self, f: &WindowFunction, g: &WindowFunction, n: i64) -> Result<f64, SymbolicError> {
        let product = f.mul(&g.shift(n))?;
        Ok(self.expectation(&product))
    }

    /// `(E|f|^p)^{1/p}`; `p = inf` gives the max norm.
    pub fn lp_norm(&self, f: &WindowFunction, p: f64) -> f64 {
        assert!(p >= 1.0, "lp_norm needs p >= 1");
        if p.is_infinite() {
            return f.max_abs();
        }
        let powered = f.map(|v| v.abs().powf(p));
        self.expectation(&powered).powf(1.0 / p)
    }
}

/// A real observable depending on the coordinates `x_lo..=x_hi`, stored as a
/// dense table over all words.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFunction {
    lo: i64,
    hi: i64,
    alphabet: usize,
    table: Vec<f64>,
}

fn table_len(lo: i64, hi: i64, alphabet: usize) -> Result<usize, SymbolicError> {
    if hi < lo || alphabet < 2 {
        return Err(SymbolicError::BadWindow { lo, hi });
    }
    let len = (hi - lo + 1) as u32;
    let entries = (alphabet as u128).checked_pow(len).unwrap_or(u128::MAX);
    if entries > MAX_TABLE_ENTRIES as u128 {
        return Err(SymbolicError::WindowTooLarge { entries });
    }
    Ok(entries as usize)
}

impl WindowFunction {
    pub fn new(lo: i64, hi: i64, alphabet: usize, table: Vec<f64>) -> Result<Self, SymbolicError> {
        let expected = table_len(lo, hi, alphabet)?;
        if table.len() != expected {
            return Err(SymbolicError::BadTable { expected, got: table.len() });
        }
        Ok(Self { lo, hi, alphabet, table })
    }

    /// Tabulates `f(word)` where `word[j]` is the symbol at coordinate `lo + j`.
    pub fn from_fn(
        lo: i64,
        hi: i64,
        alphabet: usize,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self, SymbolicError> {
        let entries = table_len(lo, hi, alphabet)?;
        let mut word = vec![0usize; (hi - lo + 1) as usize];
        let mut table = Vec::with_capacity(entries);
        for _ in 0..entries {
            table.push(f(&word));
            for digit in word.iter_mut() {
                *digit += 1;
                if *digit < alphabet {
                    break;
                }
                *digit = 0;
            }
        }
        Ok(Self { lo, hi, alphabet, table })
    }

    /// The constant `c`, nominally on the window `[at, at]`.
    pub fn constant(alphabet: usize, at: i64, c: f64) -> Self {
        Self { lo: at, hi: at, alphabet, table: vec![c; alphabet] }
    }

    /// The coordinate function `x -> x_k` (symbol index as a real number).
    pub fn coordinate(alphabet: usize, k: i64) -> Self {
        Self { lo: k, hi: k, alphabet, table: (0..alphabet).map(|a| a as f64).collect() }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Number of coordinates in the window.
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Measurable with respect to `F_0`.
    pub fn is_future_measurable(&self) -> bool {
        self.lo >= 0
    }

    pub fn index_of(&self, word: &[usize]) -> usize {
        word.iter().rev().fold(0, |acc, &d| acc * self.alphabet + d)
    }

    /// Value at the point whose coordinate `k` is `coord(k)`.
    pub fn evaluate(&self, coord: impl Fn(i64) -> usize) -> f64 {
        let mut index = 0;
        for k in (self.lo..=self.hi).rev() {
            index = index * self.alphabet + coord(k);
        }
        self.table[index]
    }

    pub fn max_abs(&self) -> f64 {
        self.table.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { table: self.table.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// `f o T^n`: same table on the window moved by `+n`.
    pub fn shift(&self, n: i64) -> Self {
        Self { lo: self.lo + n, hi: self.hi + n, ..self.clone() }
    }

    /// Re-tabulates on the larger window `[lo, hi]`.
    pub fn extend(&self, lo: i64, hi: i64) -> Result<Self, SymbolicError> {
        if lo > self.lo || hi < self.hi {
            return Err(SymbolicError::BadWindow { lo, hi });
        }
        let entries = table_len(lo, hi, self.alphabet)?;
        let low = self.alphabet.pow((self.lo - lo) as u32);
        let span = self.table.len();
        let table = (0..entries).map(|i| self.table[(i / low) % span]).collect();
        Ok(Self { lo, hi, alphabet: self.alphabet, table })
    }

    /// Pointwise combination on the union window.
    pub fn zip_with(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self, SymbolicError> {
        if self.alphabet != other.alphabet {
            return Err(SymbolicError::AlphabetMismatch(self.alphabet, other.alphabet));
        }
        let lo = self.lo.min(other.lo);
        let hi = self.hi.max(other.hi);
        let a = self.extend(lo, hi)?;
        let b = other.extend(lo, hi)?;
        let table = a.table.iter().zip(&b.table).map(|(&x, &y)| op(x, y)).collect();
        Ok(Self { table, ..a })
    }

    pub fn add(&self, other: &Self) -> Result<Self, SymbolicError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SymbolicError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, SymbolicError> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Largest oscillation of `f` over the coordinates below `k` with the
    /// coordinates `>= k` held fixed.
    pub fn max_variation_below(&self, k: i64) -> f64 {
        let free = (k - self.lo).clamp(0, self.len() as i64) as u32;
        if free == 0 {
            return 0.0;
        }
        let block = self.alphabet.pow(free);
        self.table
            .chunks_exact(block)
            .map(|b| {
                let (min, max) = b.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                max - min
            })
            .fold(0.0, f64::max)
    }

    /// Drops boundary coordinates the table does not depend on (up to `tol`).
    pub fn trim(&self, tol: f64) -> Self {
        let mut f = self.clone();
        let a = f.alphabet;
        while f.len() > 1 && f.table.chunks_exact(a).all(|b| b.iter().all(|&v| (v - b[0]).abs() <= tol)) {
            f.table = f.table.iter().step_by(a).copied().collect();
            f.lo += 1;
        }
        while f.len() > 1 {
            let stride = f.table.len() / a;
            let independent = (0..stride).all(|i| (1..a).all(|d| (f.table[d * stride + i] - f.table[i]).abs() <= tol));
            if !independent {
                break;
            }
            f.table.truncate(stride);
            f.hi -= 1;
        }
        f
    }

    /// Writes the `(word_index, value)` CSV form with a window comment line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# window lo={} hi={} alphabet={}", self.lo, self.hi, self.alphabet)?;
        writeln!(out, "word_index,value")?;
        for (i, v) in self.table.iter().enumerate() {
            writeln!(out, "{i},{}", fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, SymbolicError> {
        let bad = |m: &str| SymbolicError::Csv(m.to_string());
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))?.map_err(|e| bad(&e.to_string()))?;
        let meta = header.strip_prefix("# window").ok_or_else(|| bad("missing '# window' line"))?;
        let (mut lo, mut hi, mut alphabet) = (None, None, None);
        for field in meta.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| bad(field))?;
            match key {
                "lo" => lo = value.parse::<i64>().ok(),
                "hi" => hi = value.parse::<i64>().ok(),
                "alphabet" => alphabet = value.parse::<usize>().ok(),
                _ => return Err(bad(field)),
            }
        }
        let (lo, hi, alphabet) = match (lo, hi, alphabet) {
            (Some(l), Some(h), Some(a)) => (l, h, a),
            _ => return Err(bad("window line needs lo, hi and alphabet")),
        };
        let expected = table_len(lo, hi, alphabet)?;
        let mut table = vec![f64::NAN; expected];
        let rest: String = lines.map_while(Result::ok).collect::<Vec<_>>().join("\n");
        let mut reader = csv::Reader::from_reader(rest.as_bytes());
        for record in reader.records() {
            let record = record.map_err(|e| bad(&e.to_string()))?;
            let index: usize = record.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("bad word_index"))?;
            let value: f64 = record.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("bad value"))?;
            *table.get_mut(index).ok_or_else(|| bad("word_index out of range"))? = value;
        }
        if table.iter().any(|v| v.is_nan()) {
            return Err(bad("table is not total"));
        }
        Self::new(lo, hi, alphabet, table)
    }
}
