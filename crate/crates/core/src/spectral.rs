//! Centered-index spectral primitives.
//!
//! Vectors of odd length `d` are stored in centered order: storage slot `i`
//! holds index `i - (d-1)/2`. Conversion to FFT order happens only inside
//! [`dft`] and [`idft`]. The DFT carries the `1/d` factor on the forward side,
//! so `(F_d v)_j = (1/d) sum_k v_k e^{-2 pi i j k / d}`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CoeffMap = BTreeMap<i64, C64>;

/// Default floor below which a quotient denominator counts as zero.
pub const EPS_DIV: f64 = 1e-14;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unnormalized forward FFT in standard order, in place.
pub(crate) fn fft_standard(buf: &mut [C64]) {
    if buf.len() > 1 {
        plan(buf.len(), false).process(buf);
    }
}

/// Half width `(n-1)/2` of an odd size.
#[inline]
pub fn half(n: usize) -> i64 {
    (n as i64 - 1) / 2
}

/// Maps any integer to its representative in `[d]_c`.
#[inline]
pub fn wrap(p: i64, d: usize) -> i64 {
    let h = half(d);
    (p + h).rem_euclid(d as i64) - h
}

/// Storage slot of centered index `p` (already in range).
#[inline]
pub fn slot(p: i64, d: usize) -> usize {
    (p + half(d)) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CenteredIndexSet {
    requested: usize,
    size: usize,
}

impl CenteredIndexSet {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `n` the set was built from; differs from `len()` when `n` was even.
    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn widened(&self) -> bool {
        self.requested != self.size
    }

    pub fn lo(&self) -> i64 {
        -half(self.size)
    }

    pub fn hi(&self) -> i64 {
        half(self.size)
    }

    pub fn contains(&self, p: i64) -> bool {
        p.abs() <= self.hi()
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo()..=self.hi()
    }
}

/// `[n]_c`; even `n` widens to `n + 1`.
pub fn centered_range(n: usize) -> Result<CenteredIndexSet> {
    if n == 0 {
        return Err(Error::InvalidSize("centered range of size 0".into()));
    }
    let size = if n.is_multiple_of(2) { n + 1 } else { n };
    Ok(CenteredIndexSet { requested: n, size })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CenteredVector {
    values: Vec<C64>,
}

impl CenteredVector {
    pub fn new(values: Vec<C64>) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(Error::InvalidSize(format!(
                "centered vector needs odd length, got {}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(d: usize) -> Self {
        assert!(d % 2 == 1, "odd length required");
        Self {
            values: vec![C64::new(0.0, 0.0); d],
        }
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(i64) -> C64) -> Self {
        assert!(d % 2 == 1, "odd length required");
        let h = half(d);
        Self {
            values: (-h..=h).map(&mut f).collect(),
        }
    }

    /// Impulse at centered index `p`.
    pub fn impulse(d: usize, p: i64) -> Self {
        let mut v = Self::zeros(d);
        v.set(p, C64::new(1.0, 0.0));
        v
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn half(&self) -> i64 {
        half(self.len())
    }

    pub fn indices(&self) -> CenteredIndexSet {
        CenteredIndexSet {
            requested: self.len(),
            size: self.len(),
        }
    }

    /// Value at `p`, index taken modulo `d`.
    #[inline]
    pub fn get(&self, p: i64) -> C64 {
        let d = self.len();
        self.values[slot(wrap(p, d), d)]
    }

    #[inline]
    pub fn set(&mut self, p: i64, v: C64) {
        let d = self.len();
        self.values[slot(wrap(p, d), d)] = v;
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        let h = self.half();
        self.values.iter().enumerate().map(move |(i, &v)| (i as i64 - h, v))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }
}

/// In-place `F_d` on a centered-order slice of odd length.
pub fn dft_in_place(buf: &mut [C64]) {
    let d = buf.len();
    let h = (d - 1) / 2;
    buf.rotate_left(h);
    fft_standard(buf);
    buf.rotate_right(h);
    let s = 1.0 / d as f64;
    for v in buf.iter_mut() {
        *v *= s;
    }
}

/// In-place `F_d^{-1}` on a centered-order slice of odd length.
pub fn idft_in_place(buf: &mut [C64]) {
    let d = buf.len();
    let h = (d - 1) / 2;
    buf.rotate_left(h);
    if d > 1 {
        plan(d, true).process(buf);
    }
    buf.rotate_right(h);
}

pub fn dft(v: &CenteredVector) -> CenteredVector {
    let mut values = v.values.clone();
    dft_in_place(&mut values);
    CenteredVector { values }
}

pub fn idft(v: &CenteredVector) -> CenteredVector {
    let mut values = v.values.clone();
    idft_in_place(&mut values);
    CenteredVector { values }
}

/// `(S_l v)_p = v_{p+l}`.
pub fn circular_shift(v: &CenteredVector, l: i64) -> CenteredVector {
    CenteredVector::from_fn(v.len(), |p| v.get(p + l))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pointwise {
    Product,
    ConjProduct,
    Quotient,
}

pub fn pointwise(v: &CenteredVector, w: &CenteredVector, mode: Pointwise) -> Result<CenteredVector> {
    pointwise_with_floor(v, w, mode, EPS_DIV)
}

pub fn pointwise_with_floor(
    v: &CenteredVector,
    w: &CenteredVector,
    mode: Pointwise,
    floor: f64,
) -> Result<CenteredVector> {
    if v.len() != w.len() {
        return Err(Error::Shape(format!("lengths {} and {}", v.len(), w.len())));
    }
    let h = v.half();
    let mut out = Vec::with_capacity(v.len());
    for (i, (&a, &b)) in v.values.iter().zip(&w.values).enumerate() {
        out.push(match mode {
            Pointwise::Product => a * b,
            Pointwise::ConjProduct => a * b.conj(),
            Pointwise::Quotient => {
                if b.norm() <= floor {
                    return Err(Error::DivisionHazard {
                        index: i as i64 - h,
                        magnitude: b.norm(),
                    });
                }
                a / b
            }
        });
    }
    Ok(CenteredVector { values: out })
}

/// `v ∘ S_l conj(v)`, the l-th autocorrelation band of `v`.
pub fn shifted_autocorr(v: &CenteredVector, l: i64) -> CenteredVector {
    CenteredVector::from_fn(v.len(), |p| v.get(p) * v.get(p + l).conj())
}

/// Zero every coefficient outside `window`.
pub fn fourier_project(coeffs: &CoeffMap, window: CenteredIndexSet) -> CoeffMap {
    coeffs
        .iter()
        .map(|(&n, &c)| (n, if window.contains(n) { c } else { C64::new(0.0, 0.0) }))
        .collect()
}

/// `H(M) = (M + M*)/2`, assembled so the output is exactly Hermitian.
pub fn hermitianize(m: &CMatrix) -> Result<CMatrix> {
    let (r, c) = m.shape();
    if r != c {
        return Err(Error::Shape(format!("hermitianize needs a square matrix, got {r}x{c}")));
    }
    let mut out = CMatrix::zeros(r, r);
    for i in 0..r {
        out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in i + 1..r {
            let h = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = h;
            out[(j, i)] = h.conj();
        }
    }
    Ok(out)
}

/// Band `|i - j| <= gamma - 1` of a d×d matrix over `[d]_c`, stored as
/// d rows of `2*gamma - 1` diagonals. Entries whose column falls outside
/// `[d]_c` are structural zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedAutocorrelation {
    d: usize,
    gamma: usize,
    band: Vec<C64>,
}

impl BandedAutocorrelation {
    pub fn zeros(d: usize, gamma: usize) -> Self {
        assert!(d % 2 == 1 && gamma >= 1);
        let gamma = gamma.min(d);
        Self {
            d,
            gamma,
            band: vec![C64::new(0.0, 0.0); d * (2 * gamma - 1)],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    fn width(&self) -> usize {
        2 * self.gamma - 1
    }

    fn index(&self, i: i64, j: i64) -> Option<usize> {
        let h = half(self.d);
        let off = j - i;
        if i.abs() > h || j.abs() > h || off.unsigned_abs() as usize >= self.gamma {
            return None;
        }
        Some(slot(i, self.d) * self.width() + (off + self.gamma as i64 - 1) as usize)
    }

    pub fn in_band(&self, i: i64, j: i64) -> bool {
        self.index(i, j).is_some()
    }

    pub fn get(&self, i: i64, j: i64) -> C64 {
        self.index(i, j).map_or(C64::new(0.0, 0.0), |k| self.band[k])
    }

    /// Writes a single entry; out-of-band writes are ignored.
    pub fn set(&mut self, i: i64, j: i64, v: C64) {
        if let Some(k) = self.index(i, j) {
            self.band[k] = v;
        }
    }

    pub fn diag(&self, n: i64) -> C64 {
        self.get(n, n)
    }

    pub fn is_hermitian(&self) -> bool {
        let h = half(self.d);
        let g = self.gamma as i64;
        (-h..=h).all(|i| {
            (i - g + 1..=i + g - 1)
                .filter(|j| j.abs() <= h)
                .all(|j| self.get(i, j) == self.get(j, i).conj())
        })
    }

    pub fn to_dense(&self) -> CMatrix {
        let h = half(self.d);
        let mut m = CMatrix::zeros(self.d, self.d);
        for i in -h..=h {
            for j in -h..=h {
                m[(slot(i, self.d), slot(j, self.d))] = self.get(i, j);
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.band.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.band.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Frobenius norm of `self - other` over the union of both bands.
    pub fn distance(&self, other: &BandedAutocorrelation) -> f64 {
        assert_eq!(self.d, other.d);
        let h = half(self.d);
        let g = self.gamma.max(other.gamma) as i64;
        let mut acc = 0.0;
        for i in -h..=h {
            for j in (i - g + 1).max(-h)..=(i + g - 1).min(h) {
                acc += (self.get(i, j) - other.get(i, j)).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// `T_gamma(v v*)`.
    pub fn from_outer(v: &CenteredVector, gamma: usize) -> Self {
        let d = v.len();
        let mut a = Self::zeros(d, gamma);
        let h = half(d);
        let g = a.gamma as i64;
        for i in -h..=h {
            for j in (i - g + 1).max(-h)..=(i + g - 1).min(h) {
                a.set(i, j, v.get(i) * v.get(j).conj());
            }
        }
        a
    }

    /// Restricts to a narrower band.
    pub fn restrict(&self, gamma: usize) -> Self {
        let mut out = Self::zeros(self.d, gamma.min(self.gamma));
        let h = half(self.d);
        let g = out.gamma as i64;
        for i in -h..=h {
            for j in (i - g + 1).max(-h)..=(i + g - 1).min(h) {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    /// `H` applied within the band; the result is exactly Hermitian.
    pub fn hermitianized(&self) -> Self {
        let mut out = Self::zeros(self.d, self.gamma);
        let h = half(self.d);
        let g = self.gamma as i64;
        for i in -h..=h {
            out.set(i, i, C64::new(self.get(i, i).re, 0.0));
            for j in i + 1..=(i + g - 1).min(h) {
                let v = (self.get(i, j) + self.get(j, i).conj()) * 0.5;
                out.set(i, j, v);
                out.set(j, i, v.conj());
            }
        }
        out
    }
}

/// `T_gamma(M)` for a square d×d matrix in centered layout.
pub fn band_restrict(m: &CMatrix, gamma: usize) -> Result<BandedAutocorrelation> {
    let (r, c) = m.shape();
    if r != c || r % 2 == 0 {
        return Err(Error::Shape(format!("band_restrict needs odd square input, got {r}x{c}")));
    }
    if gamma == 0 {
        return Err(Error::InvalidSize("band width gamma must be at least 1".into()));
    }
    let d = r;
    let mut a = BandedAutocorrelation::zeros(d, gamma);
    let h = half(d);
    let g = a.gamma as i64;
    for i in -h..=h {
        for j in (i - g + 1).max(-h)..=(i + g - 1).min(h) {
            a.set(i, j, m[(slot(i, d), slot(j, d))]);
        }
    }
    Ok(a)
}

/// `R(M)_{i,j} = M_{i,i+j}` for `j` in `[2*kappa-1]_c`, non-circular.
pub fn band_extract(m: &CMatrix, kappa: usize) -> Result<CMatrix> {
    let (r, c) = m.shape();
    if r != c || r % 2 == 0 {
        return Err(Error::Shape(format!("band_extract needs odd square input, got {r}x{c}")));
    }
    if kappa == 0 {
        return Err(Error::InvalidSize("kappa must be at least 1".into()));
    }
    let d = r;
    let h = half(d);
    let w = 2 * kappa - 1;
    let k = kappa as i64 - 1;
    let mut out = CMatrix::zeros(d, w);
    for i in -h..=h {
        for j in -k..=k {
            if (i + j).abs() <= h {
                out[(slot(i, d), (j + k) as usize)] = m[(slot(i, d), slot(i + j, d))];
            }
        }
    }
    Ok(out)
}

/// `(Λ(M))_{i,j} = M_{i,j-i}` embedded in d×d. Rows of `M` are indexed by
/// `[rows]_c`, columns by `[cols]_c` (both odd). Entries landing outside
/// `[d]_c` are dropped.
pub fn lift(m: &CMatrix, d: usize) -> Result<CMatrix> {
    let (r, c) = m.shape();
    if r % 2 == 0 || c % 2 == 0 || d.is_multiple_of(2) {
        return Err(Error::Shape(format!("lift needs odd sizes, got {r}x{c} into {d}")));
    }
    if r > d {
        return Err(Error::Shape(format!("lift: {r} rows exceed d = {d}")));
    }
    let h = half(d);
    let hr = half(r);
    let hc = half(c);
    let mut out = CMatrix::zeros(d, d);
    for i in -hr..=hr {
        for off in -hc..=hc {
            let j = i + off;
            if j.abs() <= h {
                out[(slot(i, d), slot(j, d))] = m[((i + hr) as usize, (off + hc) as usize)];
            }
        }
    }
    Ok(out)
}

/// Matrix in centered layout: element `(i, j)` at slots `(i + h_r, j + h_c)`.
#[inline]
pub fn cget(m: &CMatrix, i: i64, j: i64) -> C64 {
    m[((i + half(m.nrows())) as usize, (j + half(m.ncols())) as usize)]
}

/// Applies `F_n` along every column of `m` (n = row count).
pub fn dft_columns(m: &mut CMatrix) {
    let mut buf = vec![C64::new(0.0, 0.0); m.nrows()];
    for mut col in m.column_iter_mut() {
        buf.copy_from_slice(col.as_slice());
        dft_in_place(&mut buf);
        col.as_mut_slice().copy_from_slice(&buf);
    }
}

/// Applies `F_n` along every row of `m` (n = column count).
pub fn dft_rows(m: &mut CMatrix) {
    let mut buf = vec![C64::new(0.0, 0.0); m.ncols()];
    for i in 0..m.nrows() {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = m[(i, j)];
        }
        dft_in_place(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            m[(i, j)] = *b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(d: usize, seed: u64) -> CenteredVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CenteredVector::from_fn(d, |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn naive_dft(v: &CenteredVector, sign: f64, scale: f64) -> CenteredVector {
        let d = v.len();
        CenteredVector::from_fn(d, |j| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, x) in v.iter() {
                let ang = sign * 2.0 * std::f64::consts::PI * (j * k) as f64 / d as f64;
                acc += x * C64::from_polar(1.0, ang);
            }
            acc * scale
        })
    }

    fn max_diff(a: &CenteredVector, b: &CenteredVector) -> f64 {
        a.values().iter().zip(b.values()).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn centered_range_sizes() {
        assert_eq!(centered_range(3).unwrap().iter().collect::<Vec<_>>(), vec![-1, 0, 1]);
        assert_eq!(centered_range(1).unwrap().iter().collect::<Vec<_>>(), vec![0]);
        let four = centered_range(4).unwrap();
        assert_eq!(four.iter().collect::<Vec<_>>(), vec![-2, -1, 0, 1, 2]);
        assert!(four.widened());
        assert_eq!(four.requested(), 4);
        assert!(centered_range(0).is_err());
    }

    #[test]
    fn dft_of_impulse_and_ones() {
        let e = dft(&CenteredVector::impulse(5, 0));
        for v in e.values() {
            assert!((v - C64::new(0.2, 0.0)).norm() < 1e-15);
        }
        let ones = CenteredVector::from_fn(7, |_| C64::new(1.0, 0.0));
        let f = dft(&ones);
        assert!(max_diff(&f, &CenteredVector::impulse(7, 0)) < 1e-15);
        let back = idft(&CenteredVector::impulse(7, 0));
        assert!(max_diff(&back, &ones) < 1e-15);
    }

    #[test]
    fn dft_matches_naive() {
        let v = rand_vec(9, 3);
        assert!(max_diff(&dft(&v), &naive_dft(&v, -1.0, 1.0 / 9.0)) < 1e-12);
        let w = rand_vec(11, 4);
        assert!(max_diff(&idft(&w), &naive_dft(&w, 1.0, 1.0)) < 1e-12);
        assert!(max_diff(&idft(&dft(&w)), &w) < 1e-12);
    }

    #[test]
    fn shift_definition() {
        let v = CenteredVector::new(vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(3.0, 0.0)]).unwrap();
        let s = circular_shift(&v, 1);
        assert_eq!(s.values().iter().map(|c| c.re).collect::<Vec<_>>(), vec![2.0, 3.0, 1.0]);
        assert_eq!(circular_shift(&v, 3), v);
    }

    #[test]
    fn quotient_hazard_names_index() {
        let v = CenteredVector::from_fn(5, |_| C64::new(1.0, 0.0));
        let mut w = v.clone();
        w.set(2, C64::new(0.0, 0.0));
        match pointwise(&v, &w, Pointwise::Quotient) {
            Err(Error::DivisionHazard { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        let q = pointwise(&v, &v, Pointwise::Quotient).unwrap();
        assert_eq!(q, v);
        let x = rand_vec(7, 1);
        let a = pointwise(&x, &x, Pointwise::ConjProduct).unwrap();
        for (p, val) in a.iter() {
            assert!((val.re - x.get(p).norm_sqr()).abs() < 1e-15 && val.im == 0.0);
        }
    }

    #[test]
    fn projection() {
        let mut c = CoeffMap::new();
        c.insert(3, C64::new(1.0, 0.0));
        let p = fourier_project(&c, centered_range(3).unwrap());
        assert_eq!(p[&3], C64::new(0.0, 0.0));
        let full = fourier_project(&c, centered_range(7).unwrap());
        assert_eq!(full, c);
    }

    #[test]
    fn hermitianize_cases() {
        let i = CMatrix::identity(3, 3) * C64::new(0.0, 1.0);
        assert_eq!(hermitianize(&i).unwrap(), CMatrix::zeros(3, 3));
        assert!(hermitianize(&CMatrix::zeros(2, 3)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = CMatrix::from_fn(5, 5, |_, _| C64::new(rng.random(), rng.random()));
        let h = hermitianize(&m).unwrap();
        assert_eq!(h, h.adjoint());
        assert_eq!(hermitianize(&h).unwrap(), h);
        assert!(h.norm() <= m.norm() + 1e-15);
    }

    #[test]
    fn band_extract_identity_and_rank_one() {
        let r = band_extract(&CMatrix::identity(5, 5), 2).unwrap();
        for i in 0..5 {
            assert_eq!(r[(i, 1)], C64::new(1.0, 0.0));
            assert_eq!(r[(i, 0)], C64::new(0.0, 0.0));
            assert_eq!(r[(i, 2)], C64::new(0.0, 0.0));
        }
        let v = rand_vec(5, 2);
        let vv = CMatrix::from_fn(5, 5, |i, j| v.values()[i] * v.values()[j].conj());
        let r = band_extract(&vv, 3).unwrap();
        for i in 0..5 {
            assert!((r[(i, 2)].re - v.values()[i].norm_sqr()).abs() < 1e-15);
        }
    }

    #[test]
    fn lift_cases() {
        let mut m = CMatrix::zeros(3, 5);
        for i in 0..3 {
            m[(i, 2)] = C64::new(i as f64 + 1.0, 0.0);
        }
        let l = lift(&m, 7).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                if i != j {
                    assert_eq!(l[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
        assert_eq!(l[(3, 3)], C64::new(2.0, 0.0));
        assert_eq!(lift(&CMatrix::zeros(3, 5), 7).unwrap(), CMatrix::zeros(7, 7));
    }

    fn rand_matrix(d: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    proptest! {
        #[test]
        fn roundtrip(seed in any::<u64>(), half_d in 0usize..40) {
            let v = rand_vec(2 * half_d + 1, seed);
            prop_assert!(max_diff(&idft(&dft(&v)), &v) <= 1e-12);
        }

        #[test]
        fn shift_composition(seed in any::<u64>(), a in -30i64..30, b in -30i64..30) {
            let v = rand_vec(9, seed);
            let ab = circular_shift(&circular_shift(&v, a), b);
            let ba = circular_shift(&circular_shift(&v, b), a);
            prop_assert_eq!(&ab, &circular_shift(&v, a + b));
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn shifted_autocorr_dft_identity(seed in any::<u64>(), which in 0usize..3) {
            let d = [5usize, 9, 15][which];
            let x = rand_vec(d, seed);
            let xh = dft(&x);
            let h = half(d);
            for w in -h..=h {
                let lhs = dft(&shifted_autocorr(&x, w));
                for l in -h..=h {
                    let rhs_vec = dft(&shifted_autocorr(&xh, -l));
                    let ph = C64::from_polar(d as f64, 2.0 * std::f64::consts::PI * (w * l) as f64 / d as f64);
                    prop_assert!((lhs.get(l) - ph * rhs_vec.get(w)).norm() <= 1e-10);
                }
            }
        }

        #[test]
        fn band_roundtrips(seed in any::<u64>(), gamma in 1usize..8) {
            let d = 7;
            let m = rand_matrix(d, seed);
            let t = band_restrict(&m, gamma).unwrap();
            prop_assert_eq!(&band_restrict(&t.to_dense(), gamma).unwrap(), &t);
            let r = band_extract(&t.to_dense(), gamma.min(d)).unwrap();
            prop_assert!((r.norm() - t.frobenius()).abs() <= 1e-12);
            let back = lift(&r, d).unwrap();
            prop_assert_eq!(back, t.to_dense());
        }

        #[test]
        fn projection_contracts(seed in any::<u64>()) {
            let v = rand_vec(9, seed);
            let c: CoeffMap = v.iter().collect();
            let p = fourier_project(&c, centered_range(5).unwrap());
            let n0: f64 = c.values().map(|x| x.norm_sqr()).sum();
            let n1: f64 = p.values().map(|x| x.norm_sqr()).sum();
            prop_assert!(n1 <= n0);
        }
    }

    #[test]
    fn band_restrict_extremes() {
        let m = rand_matrix(5, 7);
        let diag = band_restrict(&m, 1).unwrap().to_dense();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { m[(i, j)] } else { C64::new(0.0, 0.0) };
                assert_eq!(diag[(i, j)], expect);
            }
        }
        assert_eq!(band_restrict(&m, 9).unwrap().to_dense(), m);
    }
}
