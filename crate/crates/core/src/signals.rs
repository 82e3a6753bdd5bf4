//! Test functions, masks, and the mask admissibility constants.
//!
//! A test function is a complex combination of shifted C∞ bumps. Masks are
//! either trigonometric polynomials of degree `rho/2`, or a bump on `(-b, b)`
//! times a `2b`-periodic trigonometric polynomial. All mask evaluators are
//! 2π-periodized so that sampling on the d-grid matches the circular model.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{dft, fft_standard, half, shifted_autocorr, CenteredVector, CoeffMap, C64};

/// Node count used for reference Fourier coefficients.
pub const COEFF_QUAD_NODES: usize = 10001;

/// `exp(1 - 1/(1 - t^2))` on `(c1, c2)` with `t` mapped to `(-1, 1)`; zero elsewhere.
pub fn bump(c1: f64, c2: f64, x: f64) -> Result<f64> {
    if !(c1 < c2) {
        return Err(Error::InvalidSupport { c1, c2 });
    }
    Ok(bump_unchecked(c1, c2, x))
}

#[inline]
pub(crate) fn bump_unchecked(c1: f64, c2: f64, x: f64) -> f64 {
    let t = (2.0 * x - c1 - c2) / (c2 - c1);
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// Maps `x` into `[-pi, pi)`.
#[inline]
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

pub(crate) fn complex_gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Something that can be sampled and has a Fourier series on `[-pi, pi]`.
pub trait Signal: Sync {
    fn eval(&self, x: f64) -> C64;

    /// `(1/2pi) ∫ f(x) e^{-inx} dx`.
    fn coefficient(&self, n: i64) -> C64;

    fn coefficients(&self, s: usize) -> CenteredVector {
        CenteredVector::from_fn(s | 1, |n| self.coefficient(n))
    }

    /// `x_p = P_S f(2 pi p / d)` with `S = [s]_c`.
    fn projected_samples(&self, d: usize, s: usize) -> CenteredVector {
        let c = self.coefficients(s);
        trig_eval_grid(&c, d)
    }
}

/// Samples `sum_n c_n e^{inx}` at `x = 2 pi p / d`, `p` in `[d]_c`.
pub fn trig_eval_grid(c: &CenteredVector, d: usize) -> CenteredVector {
    CenteredVector::from_fn(d, |p| trig_eval(c, 2.0 * PI * p as f64 / d as f64))
}

/// `sum_n c_n e^{inx}` by phasor recurrence.
pub fn trig_eval(c: &CenteredVector, x: f64) -> C64 {
    let h = c.half();
    let step = C64::from_polar(1.0, x);
    let mut ph = C64::from_polar(1.0, -(h as f64) * x);
    let mut acc = C64::new(0.0, 0.0);
    for (k, v) in c.values().iter().enumerate() {
        acc += v * ph;
        ph *= step;
        // refresh periodically to keep recurrence drift below 1e-15
        if k % 64 == 63 {
            ph = C64::from_polar(1.0, (k as i64 + 1 - h) as f64 * x);
        }
    }
    acc
}

/// Bandlimited signal given by its Fourier coefficients on `[s]_c`.
#[derive(Clone, Debug)]
pub struct TrigPoly {
    pub coeffs: CenteredVector,
}

impl Signal for TrigPoly {
    fn eval(&self, x: f64) -> C64 {
        trig_eval(&self.coeffs, x)
    }

    fn coefficient(&self, n: i64) -> C64 {
        if n.abs() <= self.coeffs.half() {
            self.coeffs.get(n)
        } else {
            C64::new(0.0, 0.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestFunctionSpec {
    pub alphas: Vec<C64>,
    pub shifts: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub seed: u64,
}

impl TestFunctionSpec {
    /// Draws `j` bumps on `(c1, c2)` at distinct points of the shift lattice
    /// `-nu_max + k * 2 nu_max / (2j - 1)`, `k = 0..2j`.
    pub fn random(j: usize, c1: f64, c2: f64, nu_max: f64, seed: u64) -> Result<Self> {
        if j == 0 {
            return Err(Error::Generation("need at least one bump".into()));
        }
        if !(c1 < c2) {
            return Err(Error::InvalidSupport { c1, c2 });
        }
        if j > 1 && nu_max <= 0.0 {
            return Err(Error::Generation(format!("shift lattice collapses for nu_max = {nu_max}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = 2 * j;
        let step = 2.0 * nu_max / (m as f64 - 1.0);
        let mut lattice: Vec<f64> = (0..m).map(|k| -nu_max + k as f64 * step).collect();
        lattice.shuffle(&mut rng);
        let shifts = lattice[..j].to_vec();
        let alphas = (0..j)
            .map(|_| C64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
            .collect();
        Ok(Self {
            alphas,
            shifts,
            c1,
            c2,
            seed,
        })
    }

    /// Four bumps on `(-pi/5, pi/5)` kept inside `[-0.9 pi, 0.9 pi]`.
    pub fn trig_default(seed: u64) -> Result<Self> {
        Self::random(4, -PI / 5.0, PI / 5.0, 0.9 * PI - PI / 5.0, seed)
    }

    /// Same family with shifts capped at `a - b` for the compact-mask setting.
    pub fn compact_default(a: f64, b: f64, seed: u64) -> Result<Self> {
        Self::random(4, -PI / 5.0, PI / 5.0, a - b, seed)
    }

    /// Largest `|x|` where the function can be nonzero.
    pub fn support_radius(&self) -> f64 {
        let w = self.c1.abs().max(self.c2.abs());
        self.shifts.iter().fold(0.0_f64, |m, s| m.max(s.abs())) + w
    }
}

#[derive(Clone, Debug)]
pub struct TestFunction {
    spec: TestFunctionSpec,
    bump_hat: Vec<C64>,
}

impl TestFunction {
    pub fn new(spec: TestFunctionSpec) -> Result<Self> {
        if !(spec.c1 < spec.c2) {
            return Err(Error::InvalidSupport {
                c1: spec.c1,
                c2: spec.c2,
            });
        }
        if spec.alphas.len() != spec.shifts.len() {
            return Err(Error::Generation("amplitude and shift counts differ".into()));
        }
        let bump_hat = bump_coefficients(spec.c1, spec.c2, COEFF_QUAD_NODES);
        Ok(Self { spec, bump_hat })
    }

    pub fn spec(&self) -> &TestFunctionSpec {
        &self.spec
    }

    fn bump_hat(&self, n: i64) -> C64 {
        let n_tab = (self.bump_hat.len() - 1) / 2;
        if n.unsigned_abs() as usize <= n_tab {
            self.bump_hat[(n + n_tab as i64) as usize]
        } else {
            bump_coefficient_direct(self.spec.c1, self.spec.c2, n, 4 * COEFF_QUAD_NODES)
        }
    }
}

impl Signal for TestFunction {
    fn eval(&self, x: f64) -> C64 {
        self.spec
            .alphas
            .iter()
            .zip(&self.spec.shifts)
            .map(|(a, nu)| a * bump_unchecked(self.spec.c1, self.spec.c2, x - nu))
            .sum()
    }

    fn coefficient(&self, n: i64) -> C64 {
        let xi = self.bump_hat(n);
        self.spec
            .alphas
            .iter()
            .zip(&self.spec.shifts)
            .map(|(a, nu)| a * C64::from_polar(1.0, -(n as f64) * nu))
            .sum::<C64>()
            * xi
    }
}

/// Fourier coefficients of the bump on `(c1, c2)` for `|n| <= (nodes-1)/4`,
/// via one trapezoid FFT over `[-pi, pi]`. Returned in centered order.
fn bump_coefficients(c1: f64, c2: f64, nodes: usize) -> Vec<C64> {
    let n = nodes - 1;
    let h = 2.0 * PI / n as f64;
    let mut buf: Vec<C64> = (0..n)
        .map(|i| {
            let x = -PI + i as f64 * h;
            let v = if i == 0 {
                0.5 * (bump_unchecked(c1, c2, -PI) + bump_unchecked(c1, c2, PI))
            } else {
                bump_unchecked(c1, c2, x)
            };
            C64::new(v, 0.0)
        })
        .collect();
    fft_standard(&mut buf);
    let n_tab = n / 4;
    (-(n_tab as i64)..=n_tab as i64)
        .map(|k| {
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            buf[k.rem_euclid(n as i64) as usize] * (sign * h / (2.0 * PI))
        })
        .collect()
}

fn bump_coefficient_direct(c1: f64, c2: f64, n: i64, nodes: usize) -> C64 {
    let h = (c2 - c1) / (nodes - 1) as f64;
    let mut acc = C64::new(0.0, 0.0);
    for i in 1..nodes - 1 {
        let x = c1 + i as f64 * h;
        acc += C64::from_polar(bump_unchecked(c1, c2, x), -(n as f64) * x);
    }
    acc * (h / (2.0 * PI))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskStyle {
    RandomGaussian,
    Structured,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaskSpec {
    /// `m(x) = sum_{|q| <= rho/2} mhat(q) e^{iqx}`.
    Trig { rho: usize, coeffs: CenteredVector, seed: u64 },
    /// `xi_{-b,b}(x) * sum_{|p| <= rho/2} mhat(p) e^{i pi p x / b}`.
    Compact { b: f64, rho: usize, coeffs: CenteredVector, seed: u64 },
    /// Prescribed grid samples, interpolated linearly between nodes.
    /// Stand-in for a spline mask built from a target `z`.
    Sampled { samples: CenteredVector },
}

impl MaskSpec {
    pub fn is_trig(&self) -> bool {
        matches!(self, MaskSpec::Trig { .. })
    }

    pub fn rho(&self) -> Option<usize> {
        match self {
            MaskSpec::Trig { rho, .. } | MaskSpec::Compact { rho, .. } => Some(*rho),
            MaskSpec::Sampled { .. } => None,
        }
    }

    pub fn b(&self) -> Option<f64> {
        match self {
            MaskSpec::Compact { b, .. } => Some(*b),
            _ => None,
        }
    }

    /// 2π-periodized mask value.
    pub fn eval(&self, x: f64) -> C64 {
        match self {
            MaskSpec::Trig { coeffs, .. } => trig_eval(coeffs, x),
            MaskSpec::Compact { b, coeffs, .. } => {
                let x = wrap_angle(x);
                let w = bump_unchecked(-b, *b, x);
                if w == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    trig_eval(coeffs, PI * x / b) * w
                }
            }
            MaskSpec::Sampled { samples } => {
                let d = samples.len() as f64;
                let u = wrap_angle(x) * d / (2.0 * PI);
                let p0 = u.floor();
                let t = u - p0;
                let p0 = p0 as i64;
                samples.get(p0) * (1.0 - t) + samples.get(p0 + 1) * t
            }
        }
    }

    /// `z_p = m(2 pi p / d)`.
    pub fn samples(&self, d: usize) -> CenteredVector {
        match self {
            MaskSpec::Sampled { samples } if samples.len() == d => samples.clone(),
            _ => CenteredVector::from_fn(d, |p| self.eval(2.0 * PI * p as f64 / d as f64)),
        }
    }

    /// `m(2 pi p / d - t)`.
    pub fn shifted_samples(&self, d: usize, t: f64) -> CenteredVector {
        CenteredVector::from_fn(d, |p| self.eval(2.0 * PI * p as f64 / d as f64 - t))
    }
}

fn structured_magnitudes(rng: &mut ChaCha8Rng, count: usize) -> Vec<C64> {
    // random phases, magnitudes sorted into a nonincreasing chain
    let draws: Vec<C64> = (0..count).map(|_| complex_gaussian(rng)).collect();
    let mut mags: Vec<f64> = draws.iter().map(|c| c.norm().max(1e-3)).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    mags.iter()
        .zip(&draws)
        .map(|(&m, c)| C64::from_polar(m, c.arg()))
        .collect()
}

pub fn make_trig_mask(rho: usize, style: MaskStyle, seed: u64) -> Result<MaskSpec> {
    if rho < 2 || rho % 2 == 1 {
        return Err(Error::InvalidSize(format!("rho must be even and at least 2, got {rho}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = match style {
        MaskStyle::RandomGaussian => CenteredVector::from_fn(rho + 1, |_| complex_gaussian(&mut rng)),
        MaskStyle::Structured => {
            let tail = structured_magnitudes(&mut rng, rho);
            let lead_phase = rng.random_range(-PI..PI);
            let lead = C64::from_polar((2 * rho + 1) as f64 * tail[0].norm(), lead_phase);
            let mut v = vec![lead];
            v.extend(tail);
            CenteredVector::new(v)?
        }
    };
    Ok(MaskSpec::Trig { rho, coeffs, seed })
}

pub fn make_compact_mask(b: f64, rho: usize, seed: u64) -> Result<MaskSpec> {
    if !(b > 0.0 && b < PI) {
        return Err(Error::Config(format!("mask half-width b = {b} must lie in (0, pi)")));
    }
    if rho % 2 == 1 {
        return Err(Error::InvalidSize(format!("rho must be even, got {rho}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = CenteredVector::from_fn(rho + 1, |_| complex_gaussian(&mut rng));
    Ok(MaskSpec::Compact { b, rho, coeffs, seed })
}

/// `delta = floor(b d / pi)`.
pub fn compact_delta(b: f64, d: usize) -> usize {
    (b * d as f64 / PI).floor() as usize
}

/// Sample vector meeting the hypotheses of the compact-mask lower bound:
/// support `{n, ..., n + width - 1}` starting at `n = -(width-1)/2`,
/// `|z_n| = (2 width + 1) |z_{n+1}|`, then nonincreasing magnitudes.
pub fn structured_compact_samples(d: usize, width: usize, seed: u64) -> Result<CenteredVector> {
    if width < 2 || width > d {
        return Err(Error::InvalidSize(format!("support width {width} invalid for d = {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tail = structured_magnitudes(&mut rng, width - 1);
    let lead = C64::from_polar((2 * width + 1) as f64 * tail[0].norm(), rng.random_range(-PI..PI));
    let n0 = -((width as i64 - 1) / 2);
    let mut z = CenteredVector::zeros(d);
    z.set(n0, lead);
    for (k, v) in tail.into_iter().enumerate() {
        z.set(n0 + 1 + k as i64, v);
    }
    Ok(z)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuReport {
    pub mu: f64,
    /// `(p*, q*)`: shift and frequency of the minimum.
    pub argmin: (i64, i64),
    pub lower_bound: Option<f64>,
    /// Leading coefficient dominance (`> 2 rho` or `> 2 width` times the next one).
    pub dominant_lead: bool,
    /// Nonincreasing nonzero magnitudes after the lead.
    pub decreasing_tail: bool,
}

impl MuReport {
    pub fn conditions_hold(&self) -> bool {
        self.dominant_lead && self.decreasing_tail
    }
}

/// Contiguous support `[lo, hi]` of entries above `tol * max`.
fn support_of(v: &CenteredVector) -> Option<(i64, i64)> {
    let tol = 1e-13 * v.max_abs();
    let nz: Vec<i64> = v.iter().filter(|(_, c)| c.norm() > tol).map(|(p, _)| p).collect();
    Some((*nz.first()?, *nz.last()?))
}

fn chain_conditions(v: &CenteredVector, lo: i64, hi: i64, factor: f64) -> (bool, bool) {
    if hi <= lo {
        return (false, false);
    }
    let dom = v.get(lo).norm() > factor * v.get(lo + 1).norm();
    let dec = (lo + 1..hi).all(|k| v.get(k).norm() >= v.get(k + 1).norm()) && v.get(hi).norm() > 0.0;
    (dom, dec)
}

/// `min_{|p| <= kappa-1, q in [d]_c} |(F_d(zhat ∘ S_p conj zhat))_q|` with `zhat = F_d z`.
pub fn mu1(z: &CenteredVector, kappa: usize) -> Result<MuReport> {
    if kappa < 2 {
        return Err(Error::Geometry(format!("kappa = {kappa} must be at least 2")));
    }
    let zh = dft(z);
    let d = z.len();
    let k = kappa as i64 - 1;
    let mut best = (f64::INFINITY, (0, 0));
    for p in -k..=k {
        let g = dft(&shifted_autocorr(&zh, p));
        for (q, v) in g.iter() {
            if v.norm() < best.0 {
                best = (v.norm(), (p, q));
            }
        }
    }
    let (dominant_lead, decreasing_tail, lower_bound) = match support_of(&zh) {
        Some((lo, hi)) => {
            let rho = (hi - lo) as f64;
            let (dom, dec) = chain_conditions(&zh, lo, hi, 2.0 * rho);
            let lb = (dom && dec && lo + k <= hi)
                .then(|| zh.get(lo).norm() * zh.get(lo + k).norm() / (2.0 * d as f64));
            (dom, dec, lb)
        }
        None => (false, false, None),
    };
    Ok(MuReport {
        mu: best.0,
        argmin: best.1,
        lower_bound,
        dominant_lead,
        decreasing_tail,
    })
}

/// Frequency-side route:
/// `min_{w in [2kappa-1]_c, l in [2s-1]_c} |(F_d(zhat ∘ S_l conj zhat))_w|`.
pub fn mu2(z: &CenteredVector, kappa: usize, s: usize) -> Result<MuReport> {
    mu2_check(z, kappa, s)?;
    let zh = dft(z);
    let (kk, ss) = (kappa as i64 - 1, s as i64 - 1);
    let mut best = (f64::INFINITY, (0, 0));
    for l in -ss..=ss {
        let g = dft(&shifted_autocorr(&zh, l));
        for w in -kk..=kk {
            let v = g.get(w).norm();
            if v < best.0 {
                best = (v, (l, w));
            }
        }
    }
    Ok(mu2_report(z, kappa, best))
}

/// Space-side route: `(1/d) min_{p in [2kappa-1]_c, q in [2s-1]_c} |(F_d(z ∘ S_p conj z))_q|`.
pub fn mu2_space(z: &CenteredVector, kappa: usize, s: usize) -> Result<MuReport> {
    mu2_check(z, kappa, s)?;
    let d = z.len() as f64;
    let (kk, ss) = (kappa as i64 - 1, s as i64 - 1);
    let mut best = (f64::INFINITY, (0, 0));
    for p in -kk..=kk {
        let g = dft(&shifted_autocorr(z, p));
        for q in -ss..=ss {
            let v = g.get(q).norm() / d;
            if v < best.0 {
                // report as (l, w) to match the frequency route
                best = (v, (-q, p));
            }
        }
    }
    Ok(mu2_report(z, kappa, best))
}

fn mu2_check(z: &CenteredVector, kappa: usize, s: usize) -> Result<()> {
    if kappa < 2 || s < 1 {
        return Err(Error::Geometry(format!("mu2 needs kappa >= 2 and s >= 1, got {kappa}, {s}")));
    }
    if 2 * kappa - 1 > z.len() || 2 * s - 1 > z.len() {
        return Err(Error::Geometry("index windows exceed d".into()));
    }
    Ok(())
}

fn mu2_report(z: &CenteredVector, kappa: usize, best: (f64, (i64, i64))) -> MuReport {
    let d = z.len() as f64;
    let (dominant_lead, decreasing_tail, lower_bound) = match support_of(z) {
        Some((lo, hi)) => {
            let width = (hi - lo + 1) as f64;
            let (dom, dec) = chain_conditions(z, lo, hi, 2.0 * width);
            let k = kappa as i64 - 1;
            let lb = (dom && dec && lo + k <= hi).then(|| z.get(lo).norm() * z.get(lo + k).norm() / (2.0 * d * d));
            (dom, dec, lb)
        }
        None => (false, false, None),
    };
    MuReport {
        mu: best.0,
        argmin: best.1,
        lower_bound,
        dominant_lead,
        decreasing_tail,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayCheck {
    pub holds: bool,
    /// `(n, n')` with `|n| <= |n'|` and `D_n < D_{n'}`.
    pub violation: Option<(i64, i64)>,
}

/// `D_n = max_{|m - n| < beta/2} |fhat(m)|`.
pub fn decay_envelope(coeffs: &CoeffMap, beta: usize, n: i64) -> f64 {
    let r = (beta as i64 - 1) / 2;
    (n - r..=n + r)
        .filter(|m| 2 * (m - n).abs() < beta as i64)
        .map(|m| coeffs.get(&m).map_or(0.0, |c| c.norm()))
        .fold(0.0, f64::max)
}

/// Relative slack for ties broken by rounding.
pub const DECAY_RTOL: f64 = 1e-12;

/// Checks `D_n >= D_{n'}` whenever `|n| <= |n'|`, up to [`DECAY_RTOL`].
pub fn check_fourier_decay(coeffs: &CoeffMap, beta: usize) -> DecayCheck {
    let Some(reach) = coeffs.keys().map(|n| n.abs()).max() else {
        return DecayCheck {
            holds: true,
            violation: None,
        };
    };
    let top = reach + beta as i64;
    // for each radius t: (min D over ±t, its index), (max D over ±t, its index)
    let mut lows = Vec::with_capacity(top as usize + 1);
    let mut highs = Vec::with_capacity(top as usize + 1);
    for t in 0..=top {
        let a = (decay_envelope(coeffs, beta, t), t);
        let b = (decay_envelope(coeffs, beta, -t), -t);
        let (lo, hi) = if a.0 <= b.0 { (a, b) } else { (b, a) };
        lows.push(lo);
        highs.push(hi);
    }
    let mut run = (f64::NEG_INFINITY, 0);
    for t in (0..=top as usize).rev() {
        if highs[t].0 > run.0 {
            run = highs[t];
        }
        if lows[t].0 < run.0 * (1.0 - DECAY_RTOL) {
            return DecayCheck {
                holds: false,
                violation: Some((lows[t].1, run.1)),
            };
        }
    }
    DecayCheck {
        holds: true,
        violation: None,
    }
}

/// Coefficients on `[s]_c` with magnitudes symmetric in `n` and nonincreasing
/// in `|n|`, uniform random phases. These have `beta` Fourier decay for every `beta`.
pub fn decaying_coefficients(s: usize, seed: u64) -> CenteredVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = half(s | 1);
    let mut mags: Vec<f64> = (0..=h).map(|_| rng.random_range(0.2..1.0)).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    CenteredVector::from_fn(s | 1, |n| {
        C64::from_polar(mags[n.unsigned_abs() as usize], rng.random_range(-PI..PI))
    })
}
