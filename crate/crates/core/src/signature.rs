//! Truncated tensor-algebra signatures of piecewise-linear paths.
//!
//! Coefficients are stored densely: level `k` occupies `d^k` consecutive slots
//! starting at `(d^k - 1)/(d - 1)`, and within a level the word `i_1 … i_k`
//! (letters `1..=d`) sits at the base-`d` number `(i_1-1) … (i_k-1)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stochastic::PiecewisePath;

pub const MAX_INTEGRAL_WORD: usize = 12;
pub const MAX_IDENTITY_ORDER: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignatureError {
    #[error("alphabet sizes differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("truncation levels differ ({0} vs {1})")]
    LevelMismatch(usize, usize),
    #[error("word of length {len} exceeds the limit {max}")]
    WordTooLong { len: usize, max: usize },
    #[error("letter {letter} outside the alphabet 1..={dims}")]
    Letter { letter: u8, dims: usize },
    #[error("identity order {0} outside 1..={MAX_IDENTITY_ORDER}")]
    IdentityOrder(usize),
    #[error("empty word")]
    EmptyWord,
    #[error("cannot parse word {0:?}")]
    Parse(String),
    #[error("series has {found} coefficients, expected {expected}")]
    Size { found: usize, expected: usize },
    #[error("alphabet size must be positive")]
    ZeroDims,
}

/// Word over the alphabet `{1, …, d}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoordinateWord(pub Vec<u8>);

impl CoordinateWord {
    pub fn new(letters: impl Into<Vec<u8>>) -> Self {
        Self(letters.into())
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    pub fn concat(&self, other: &CoordinateWord) -> CoordinateWord {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        CoordinateWord(v)
    }

    pub fn reversed(&self) -> CoordinateWord {
        CoordinateWord(self.0.iter().rev().copied().collect())
    }

    /// All words of length `len` over `1..=dims`, in storage order.
    pub fn all(dims: usize, len: usize) -> impl Iterator<Item = CoordinateWord> {
        (0..len)
            .map(|_| 1..=dims as u8)
            .multi_cartesian_product()
            .map(CoordinateWord)
    }
}

impl fmt::Display for CoordinateWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&l| l < 10) {
            for l in &self.0 {
                write!(f, "{l}")?;
            }
            Ok(())
        } else {
            write!(f, "{}", self.0.iter().join(","))
        }
    }
}

impl FromStr for CoordinateWord {
    type Err = SignatureError;
    fn from_str(s: &str) -> Result<Self, SignatureError> {
        let bad = || SignatureError::Parse(s.to_string());
        if s.contains(',') {
            s.split(',')
                .map(|t| t.trim().parse::<u8>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()
                .map(CoordinateWord)
        } else {
            s.chars()
                .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(bad))
                .collect::<Result<Vec<_>, _>>()
                .map(CoordinateWord)
        }
    }
}

impl From<&[u8]> for CoordinateWord {
    fn from(v: &[u8]) -> Self {
        Self(v.to_vec())
    }
}

/// Truncated element of the tensor algebra over `ℝ^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesRecord", into = "SeriesRecord")]
pub struct TensorSeries {
    dims: usize,
    level: usize,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SeriesRecord {
    dims: usize,
    level: usize,
    coeffs: BTreeMap<String, f64>,
}

impl From<TensorSeries> for SeriesRecord {
    fn from(s: TensorSeries) -> Self {
        let coeffs = (0..=s.level)
            .flat_map(|k| CoordinateWord::all(s.dims, k))
            .zip(s.coeffs.iter())
            .map(|(w, &c)| (w.to_string(), c))
            .collect();
        SeriesRecord {
            dims: s.dims,
            level: s.level,
            coeffs,
        }
    }
}

impl TryFrom<SeriesRecord> for TensorSeries {
    type Error = SignatureError;
    fn try_from(r: SeriesRecord) -> Result<Self, SignatureError> {
        if r.dims == 0 {
            return Err(SignatureError::ZeroDims);
        }
        let mut s = TensorSeries::zeros(r.dims, r.level);
        if r.coeffs.len() != s.coeffs.len() {
            return Err(SignatureError::Size {
                found: r.coeffs.len(),
                expected: s.coeffs.len(),
            });
        }
        for (key, v) in r.coeffs {
            let w: CoordinateWord = key.parse()?;
            *s.get_mut(&w)? = v;
        }
        Ok(s)
    }
}

/// Number of words of length `0..=level` over `dims` letters.
pub fn series_size(dims: usize, level: usize) -> usize {
    level_offset(dims, level + 1)
}

/// Storage offset of level `k`.
pub fn level_offset(dims: usize, k: usize) -> usize {
    if dims == 1 {
        k
    } else {
        (dims.pow(k as u32) - 1) / (dims - 1)
    }
}

impl TensorSeries {
    pub fn zeros(dims: usize, level: usize) -> Self {
        Self {
            dims,
            level,
            coeffs: vec![0.0; series_size(dims, level)],
        }
    }

    /// Unit of the algebra: the signature of a constant path.
    pub fn identity(dims: usize, level: usize) -> Self {
        let mut s = Self::zeros(dims, level);
        s.coeffs[0] = 1.0;
        s
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficients of words of length exactly `k`.
    pub fn level_slice(&self, k: usize) -> &[f64] {
        let a = level_offset(self.dims, k);
        &self.coeffs[a..a + self.dims.pow(k as u32)]
    }

    pub fn index_of(&self, word: &CoordinateWord) -> Result<usize, SignatureError> {
        if word.len() > self.level {
            return Err(SignatureError::WordTooLong {
                len: word.len(),
                max: self.level,
            });
        }
        let mut idx = 0usize;
        for &l in word.letters() {
            if l == 0 || l as usize > self.dims {
                return Err(SignatureError::Letter { letter: l, dims: self.dims });
            }
            idx = idx * self.dims + (l as usize - 1);
        }
        Ok(level_offset(self.dims, word.len()) + idx)
    }

    pub fn get(&self, word: &CoordinateWord) -> Result<f64, SignatureError> {
        Ok(self.coeffs[self.index_of(word)?])
    }

    pub fn get_mut(&mut self, word: &CoordinateWord) -> Result<&mut f64, SignatureError> {
        let i = self.index_of(word)?;
        Ok(&mut self.coeffs[i])
    }

    /// Coefficient of a word given as a letter string such as `"12"`.
    pub fn coeff(&self, word: &str) -> f64 {
        let w: CoordinateWord = word.parse().expect("valid word literal");
        self.get(&w).expect("word within the series")
    }

    fn check_compatible(&self, other: &TensorSeries) -> Result<(), SignatureError> {
        if self.dims != other.dims {
            return Err(SignatureError::DimMismatch(self.dims, other.dims));
        }
        if self.level != other.level {
            return Err(SignatureError::LevelMismatch(self.level, other.level));
        }
        Ok(())
    }

    /// Truncated tensor product `self ⊗ other`.
    pub fn mul(&self, other: &TensorSeries) -> Result<TensorSeries, SignatureError> {
        self.check_compatible(other)?;
        let d = self.dims;
        let mut out = TensorSeries::zeros(d, self.level);
        for n in 0..=self.level {
            let dst = level_offset(d, n);
            for i in 0..=n {
                let a = self.level_slice(i);
                let b = other.level_slice(n - i);
                let width = b.len();
                for (u, &au) in a.iter().enumerate() {
                    if au == 0.0 {
                        continue;
                    }
                    let row = &mut out.coeffs[dst + u * width..dst + (u + 1) * width];
                    for (o, &bv) in row.iter_mut().zip(b) {
                        *o += au * bv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Multiply on the right by the exponential of a linear segment, in place.
    pub fn extend_by_segment(&mut self, increment: &[f64]) {
        assert_eq!(increment.len(), self.dims, "increment dimension");
        let d = self.dims;
        let mut acc = Vec::with_capacity(d.pow(self.level as u32));
        let mut next = Vec::with_capacity(acc.capacity());
        for n in (1..=self.level).rev() {
            // Horner: ((S_0 Δ/n + S_1) Δ/(n-1) + …) Δ/1 + S_n
            acc.clear();
            acc.push(self.coeffs[0]);
            for j in 1..=n {
                let scale = 1.0 / (n - j + 1) as f64;
                next.clear();
                for &a in &acc {
                    let a = a * scale;
                    next.extend(increment.iter().map(|&x| a * x));
                }
                let s = self.level_slice(j);
                for (v, &sj) in next.iter_mut().zip(s) {
                    *v += sj;
                }
                std::mem::swap(&mut acc, &mut next);
            }
            let dst = level_offset(d, n);
            self.coeffs[dst..dst + acc.len()].copy_from_slice(&acc);
        }
    }

    /// Inverse of a group-like series (antipode): `(-1)^|w|` times the coefficient of the reversed word.
    pub fn inverse(&self) -> TensorSeries {
        let mut out = TensorSeries::zeros(self.dims, self.level);
        for k in 0..=self.level {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            for w in CoordinateWord::all(self.dims, k) {
                let v = self.get(&w.reversed()).expect("in range");
                *out.get_mut(&w).expect("in range") = sign * v;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &TensorSeries) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Signature of the linear segment with the given increment.
pub fn segment_signature(increment: &[f64], level: usize) -> TensorSeries {
    let d = increment.len();
    let mut s = TensorSeries::zeros(d, level);
    s.coeffs[0] = 1.0;
    let mut prev = vec![1.0];
    for k in 1..=level {
        let inv_k = 1.0 / k as f64;
        let cur: Vec<f64> = prev
            .iter()
            .flat_map(|&p| increment.iter().map(move |&x| p * x * inv_k))
            .collect();
        let dst = level_offset(d, k);
        s.coeffs[dst..dst + cur.len()].copy_from_slice(&cur);
        prev = cur;
    }
    s
}

/// Chen concatenation of two signatures.
pub fn chen_concat(a: &TensorSeries, b: &TensorSeries) -> Result<TensorSeries, SignatureError> {
    a.mul(b)
}

/// Signature of a planar polyline.
pub fn path_signature(path: &PiecewisePath, level: usize) -> TensorSeries {
    let mut s = TensorSeries::identity(2, level);
    for (_, _, a, b) in path.segments() {
        s.extend_by_segment(&[b.x - a.x, b.y - a.y]);
    }
    s
}

/// Signature of a polyline in `ℝ^d` given by its vertices.
pub fn polyline_signature(vertices: &[Vec<f64>], level: usize) -> Result<TensorSeries, SignatureError> {
    let d = vertices.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(SignatureError::ZeroDims);
    }
    let mut s = TensorSeries::identity(d, level);
    for w in vertices.windows(2) {
        if w[1].len() != d {
            return Err(SignatureError::DimMismatch(d, w[1].len()));
        }
        let inc: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
        s.extend_by_segment(&inc);
    }
    Ok(s)
}

/// All interleavings of `u` and `v`, with multiplicity.
pub fn shuffle(u: &CoordinateWord, v: &CoordinateWord) -> Vec<CoordinateWord> {
    fn go(u: &[u8], v: &[u8], prefix: &mut Vec<u8>, out: &mut Vec<CoordinateWord>) {
        if u.is_empty() || v.is_empty() {
            let mut w = prefix.clone();
            w.extend_from_slice(u);
            w.extend_from_slice(v);
            out.push(CoordinateWord(w));
            return;
        }
        prefix.push(u[0]);
        go(&u[1..], v, prefix, out);
        prefix.pop();
        prefix.push(v[0]);
        go(u, &v[1..], prefix, out);
        prefix.pop();
    }
    let mut out = Vec::new();
    go(u.letters(), v.letters(), &mut Vec::new(), &mut out);
    out
}

/// Iterated integral `∫ dx^{w_1} … dx^{w_k}` along the polyline by the nested running-integral
/// recursion, exact per segment as a polynomial in the segment parameter.
pub fn coordinate_iterated_integral(path: &PiecewisePath, word: &CoordinateWord) -> Result<f64, SignatureError> {
    let k = word.len();
    if k == 0 {
        return Err(SignatureError::EmptyWord);
    }
    if k > MAX_INTEGRAL_WORD {
        return Err(SignatureError::WordTooLong {
            len: k,
            max: MAX_INTEGRAL_WORD,
        });
    }
    if let Some(&l) = word.letters().iter().find(|&&l| l == 0 || l > 2) {
        return Err(SignatureError::Letter { letter: l, dims: 2 });
    }
    // running[j] = value of the length-j prefix integral at the current vertex
    let mut running = vec![0.0; k + 1];
    running[0] = 1.0;
    let mut poly: Vec<Vec<f64>> = vec![Vec::new(); k + 1];
    for (_, _, a, b) in path.segments() {
        let delta = [b.x - a.x, b.y - a.y];
        poly[0] = vec![1.0];
        for j in 1..=k {
            let c = delta[word.letters()[j - 1] as usize - 1];
            // I_j(s) = I_j(0) + c ∫_0^s I_{j-1}
            let mut p = Vec::with_capacity(j + 1);
            p.push(running[j]);
            p.extend(poly[j - 1].iter().enumerate().map(|(i, &q)| c * q / (i + 1) as f64));
            poly[j] = p;
        }
        for j in 1..=k {
            running[j] = poly[j].iter().sum();
        }
    }
    Ok(running[k])
}

/// Both sides of `∏ W^{j_k} = Σ_{π ∈ S_n} [j_{π_1} … j_{π_n}]` at the path's end.
pub fn polynomial_identity_sides(path: &PiecewisePath, indices: &[u8]) -> Result<(f64, f64), SignatureError> {
    let n = indices.len();
    if n == 0 || n > MAX_IDENTITY_ORDER {
        return Err(SignatureError::IdentityOrder(n));
    }
    if let Some(&l) = indices.iter().find(|&&l| l == 0 || l > 2) {
        return Err(SignatureError::Letter { letter: l, dims: 2 });
    }
    let sig = path_signature(path, n);
    let disp = path.end() - path.start();
    let lhs: f64 = indices.iter().map(|&j| if j == 1 { disp.x } else { disp.y }).product();
    let rhs = (0..n)
        .permutations(n)
        .map(|p| {
            let w = CoordinateWord(p.iter().map(|&i| indices[i]).collect());
            sig.get(&w).expect("within level")
        })
        .sum();
    Ok((lhs, rhs))
}

/// Absolute residual of the polynomial identity.
pub fn verify_polynomial_identity(path: &PiecewisePath, indices: &[u8]) -> Result<f64, SignatureError> {
    let (lhs, rhs) = polynomial_identity_sides(path, indices)?;
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::rng::{GaussianStream, Seed};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn w(s: &str) -> CoordinateWord {
        s.parse().unwrap()
    }

    fn l_path() -> PiecewisePath {
        PiecewisePath::from_points(vec![Point::ORIGIN, Point::new(1.0, 0.0), Point::new(1.0, 1.0)]).unwrap()
    }

    fn random_path(seed: u64, segments: usize) -> PiecewisePath {
        let mut g = GaussianStream::new(Seed::new(seed, 77));
        let mut p = Point::ORIGIN;
        let mut pts = vec![p];
        for _ in 0..segments {
            let [a, b] = g.next_pair();
            p = p + Point::new(a, b) * 0.3;
            pts.push(p);
        }
        PiecewisePath::from_points(pts).unwrap()
    }

    #[test]
    fn sizes_and_offsets() {
        assert_eq!(series_size(2, 6), 127);
        assert_eq!(level_offset(2, 3), 7);
        assert_eq!(series_size(3, 2), 13);
        assert_eq!(series_size(1, 4), 5);
        let s = TensorSeries::zeros(2, 3);
        assert_eq!(s.index_of(&w("21")).unwrap(), 3 + 2);
        assert!(matches!(s.index_of(&w("1111")), Err(SignatureError::WordTooLong { .. })));
        assert!(matches!(s.index_of(&w("13")), Err(SignatureError::Letter { .. })));
    }

    #[test]
    fn segment_examples() {
        let s = segment_signature(&[1.0, 0.0], 2);
        assert_eq!(s.coeff("1"), 1.0);
        assert_eq!(s.coeff("2"), 0.0);
        assert_eq!(s.coeff("11"), 0.5);
        assert_eq!(s.coeff("12"), 0.0);
        assert_eq!(s.coeff("21"), 0.0);
        assert_eq!(s.coeff("22"), 0.0);
        let s = segment_signature(&[0.3, -1.2], 1);
        assert_eq!((s.coeff("1"), s.coeff("2")), (0.3, -1.2));
        assert_abs_diff_eq!(segment_signature(&[1.0, 0.0], 3).coeff("111"), 1.0 / 6.0);
    }

    #[test]
    fn chen_l_path() {
        let a = segment_signature(&[1.0, 0.0], 2);
        let b = segment_signature(&[0.0, 1.0], 2);
        let s = chen_concat(&a, &b).unwrap();
        assert_eq!(s.coeff("12"), 1.0);
        assert_eq!(s.coeff("21"), 0.0);
        assert_eq!(s.coeff("11"), 0.5);
        assert_eq!(s.coeff("22"), 0.5);
        assert_eq!(path_signature(&l_path(), 2), s);
        let id = TensorSeries::identity(2, 2);
        assert_eq!(chen_concat(&s, &id).unwrap(), s);
        assert_eq!(chen_concat(&id, &s).unwrap(), s);
        assert_eq!(
            chen_concat(&s, &TensorSeries::identity(2, 3)),
            Err(SignatureError::LevelMismatch(2, 3))
        );
        assert_eq!(
            chen_concat(&s, &TensorSeries::identity(3, 2)),
            Err(SignatureError::DimMismatch(2, 3))
        );
    }

    #[test]
    fn square_loop_area() {
        // CCW unit square: [12] - [21] = 2 * area
        let sq = PiecewisePath::from_points(vec![
            Point::ORIGIN,
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
            Point::ORIGIN,
        ])
        .unwrap();
        let s = path_signature(&sq, 2);
        assert_abs_diff_eq!(s.coeff("12") - s.coeff("21"), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.coeff("1"), 0.0);
    }

    #[test]
    fn level_one_is_displacement() {
        let p = random_path(3, 30);
        let s = path_signature(&p, 3);
        let d = p.end() - p.start();
        assert_abs_diff_eq!(s.coeff("1"), d.x, epsilon = 1e-12);
        assert_abs_diff_eq!(s.coeff("2"), d.y, epsilon = 1e-12);
        assert_eq!(s.coeffs()[0], 1.0);
    }

    #[test]
    fn single_segment_path() {
        let p = PiecewisePath::from_points(vec![Point::new(0.5, 0.5), Point::new(1.5, -0.5)]).unwrap();
        let a = path_signature(&p, 5);
        let b = segment_signature(&[1.0, -1.0], 5);
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn general_dimension() {
        let verts = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.5, -0.2], vec![0.3, 1.0, 0.7]];
        let s = polyline_signature(&verts, 3).unwrap();
        let t = chen_concat(&segment_signature(&[1.0, 0.5, -0.2], 3), &segment_signature(&[-0.7, 0.5, 0.9], 3)).unwrap();
        assert!(s.max_abs_diff(&t) < 1e-14);
        assert_abs_diff_eq!(s.coeff("3"), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn shuffle_examples() {
        let mut s = shuffle(&w("1"), &w("2"));
        s.sort();
        assert_eq!(s, vec![w("12"), w("21")]);
        assert_eq!(shuffle(&w("1"), &CoordinateWord::empty()), vec![w("1")]);
        assert_eq!(shuffle(&w("11"), &w("22")).len(), 6);
        assert_eq!(shuffle(&w("121"), &w("2112")).len(), 35);
    }

    #[test]
    fn coordinate_integral_examples() {
        let l = l_path();
        assert_abs_diff_eq!(coordinate_iterated_integral(&l, &w("12")).unwrap(), 1.0);
        assert_abs_diff_eq!(coordinate_iterated_integral(&l, &w("21")).unwrap(), 0.0);
        let p = random_path(8, 20);
        let d = p.end() - p.start();
        assert_abs_diff_eq!(coordinate_iterated_integral(&p, &w("1")).unwrap(), d.x, epsilon = 1e-12);
        assert!(coordinate_iterated_integral(&p, &CoordinateWord(vec![1; 13])).is_err());
        assert!(coordinate_iterated_integral(&p, &CoordinateWord::empty()).is_err());
    }

    #[test]
    fn dual_computation() {
        for case in 0..100u64 {
            let p = random_path(case, 5 + (case as usize % 17));
            let len = 1 + (case as usize % 6);
            let letters: Vec<u8> = (0..len).map(|i| 1 + ((case >> i) & 1) as u8).collect();
            let word = CoordinateWord(letters);
            let sig = path_signature(&p, len).get(&word).unwrap();
            let direct = coordinate_iterated_integral(&p, &word).unwrap();
            assert!((sig - direct).abs() <= 1e-10 * sig.abs().max(1e-3), "{word}: {sig} vs {direct}");
        }
    }

    #[test]
    fn polynomial_identity_examples() {
        let p = random_path(1, 20);
        let (lhs, rhs) = polynomial_identity_sides(&p, &[1, 1]).unwrap();
        let s = path_signature(&p, 2);
        assert_abs_diff_eq!(rhs, 2.0 * s.coeff("11"), epsilon = 1e-14);
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        assert!(verify_polynomial_identity(&p, &[2]).unwrap() < 1e-15);
        let (lhs, _) = polynomial_identity_sides(&p, &[1, 2, 2]).unwrap();
        assert!(verify_polynomial_identity(&p, &[1, 2, 2]).unwrap() < 1e-9 * lhs.abs().max(1.0));
        assert_eq!(verify_polynomial_identity(&p, &[1; 7]), Err(SignatureError::IdentityOrder(7)));
    }

    #[test]
    fn inverse_matches_reversed_path() {
        let p = random_path(4, 25);
        let s = path_signature(&p, 5);
        let r = path_signature(&p.reversed(), 5);
        assert!(s.inverse().max_abs_diff(&r) < 1e-10);
        let prod = chen_concat(&s, &r).unwrap();
        assert!(prod.max_abs_diff(&TensorSeries::identity(2, 5)) < 1e-10);
    }

    #[test]
    fn json_keys_are_word_strings() {
        let s = segment_signature(&[1.0, 2.0], 2);
        let v = serde_json::to_value(&s).unwrap();
        assert_eq!(v["coeffs"][""], 1.0);
        assert_eq!(v["coeffs"]["12"], 1.0);
        assert_eq!(v["dims"], 2);
        let back: TensorSeries = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
        let bad = serde_json::json!({"dims": 2, "level": 1, "coeffs": {"": 1.0, "1": 0.0}});
        assert!(serde_json::from_value::<TensorSeries>(bad).is_err());
    }

    fn arb_increments(n: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec([-2.0..2.0f64, -2.0..2.0f64], 1..n)
    }

    fn poly(incs: &[[f64; 2]]) -> PiecewisePath {
        let mut p = Point::ORIGIN;
        let mut pts = vec![p];
        for i in incs {
            p = p + Point::new(i[0], i[1]);
            pts.push(p);
        }
        PiecewisePath::from_points(pts).unwrap()
    }

    proptest! {
        #[test]
        fn chen_on_concatenation(a in arb_increments(8), b in arb_increments(8)) {
            let (pa, pb) = (poly(&a), poly(&b));
            let joined = path_signature(&pa.concat(&pb), 5);
            let chen = chen_concat(&path_signature(&pa, 5), &path_signature(&pb, 5)).unwrap();
            prop_assert!(joined.max_abs_diff(&chen) < 1e-12 * joined.coeffs().iter().fold(1.0f64, |m, c| m.max(c.abs())));
        }

        #[test]
        fn associativity(x in arb_increments(4), y in arb_increments(4), z in arb_increments(4)) {
            let (a, b, c) = (path_signature(&poly(&x), 4), path_signature(&poly(&y), 4), path_signature(&poly(&z), 4));
            let l = chen_concat(&chen_concat(&a, &b).unwrap(), &c).unwrap();
            let r = chen_concat(&a, &chen_concat(&b, &c).unwrap()).unwrap();
            prop_assert!(l.max_abs_diff(&r) < 1e-12 * l.coeffs().iter().fold(1.0f64, |m, c| m.max(c.abs())));
        }

        #[test]
        fn shuffle_identity(incs in arb_increments(10), u in prop::collection::vec(1u8..=2, 0..4), v in prop::collection::vec(1u8..=2, 0..3)) {
            let s = path_signature(&poly(&incs), 6);
            let (u, v) = (CoordinateWord(u), CoordinateWord(v));
            let lhs = s.get(&u).unwrap() * s.get(&v).unwrap();
            let rhs: f64 = shuffle(&u, &v).iter().map(|w| s.get(w).unwrap()).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn shuffle_count(u in prop::collection::vec(1u8..=3, 0..5), v in prop::collection::vec(1u8..=3, 0..5)) {
            let n = shuffle(&CoordinateWord(u.clone()), &CoordinateWord(v.clone())).len();
            let binom = (1..=v.len()).fold(1usize, |acc, i| acc * (u.len() + i) / i);
            prop_assert_eq!(n, binom);
        }
    }
}
