//! HIO+ER alternating projections on the discrete masked-DFT model.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measure::{Geometry, MeasurementSet};
use crate::recon::{Diagnostics, ReconstructionResult};
use crate::signals::{complex_gaussian, MaskSpec};
use crate::spectral::{dft, dft_in_place, half, idft, idft_in_place, slot, CMatrix, CenteredVector, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HioInit {
    Zero,
    Random(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HioConfig {
    pub hio_per_block: usize,
    pub er_per_block: usize,
    pub total_iters: usize,
    pub beta: f64,
    pub init: HioInit,
    /// Object-domain support `|2 pi p / d| <= a`; `None` keeps every index.
    pub support: Option<f64>,
    /// Coefficient window `[s]_c` for the returned estimate.
    pub s: usize,
    /// Also constrain the Fourier coefficients to `[s]_c`.
    pub bandlimit: bool,
}

impl HioConfig {
    pub fn new(total_iters: usize, s: usize) -> Self {
        Self {
            hio_per_block: 8,
            er_per_block: 2,
            total_iters,
            beta: 0.9,
            init: HioInit::Zero,
            support: None,
            s,
            bandlimit: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 || self.hio_per_block + self.er_per_block == 0 {
            return Err(Error::Config("HIO iteration counts must be positive".into()));
        }
        if self.s.is_multiple_of(2) {
            return Err(Error::Config(format!("coefficient window s = {} must be odd", self.s)));
        }
        Ok(())
    }

    fn is_er(&self, k: usize) -> bool {
        k % (self.hio_per_block + self.er_per_block) >= self.hio_per_block
    }
}

/// Shifted mask samples `w_{p,l} = m(2 pi p / d - t_l)`, one column per shift.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskFrames {
    pub geometry: Geometry,
    /// `d × L`.
    pub w: CMatrix,
}

impl MaskFrames {
    pub fn from_mask(mask: &MaskSpec, geometry: Geometry) -> Result<Self> {
        geometry.validate()?;
        if !geometry.shifts_on_grid() && !mask.is_trig() {
            return Err(Error::Geometry(format!("L = {} must divide d = {}", geometry.l, geometry.d)));
        }
        let d = geometry.d;
        let hl = half(geometry.l);
        let mut w = CMatrix::zeros(d, geometry.l);
        for l in -hl..=hl {
            let col = mask.shifted_samples(d, geometry.shift(l));
            for (p, v) in col.iter() {
                w[(slot(p, d), (l + hl) as usize)] = v;
            }
        }
        Ok(Self { geometry, w })
    }

    /// Grid shifts of sampled `z`: `w_{p,l} = z_{p - l d / L}`.
    pub fn from_samples(z: &CenteredVector, geometry: Geometry) -> Result<Self> {
        geometry.validate()?;
        if !geometry.shifts_on_grid() || z.len() != geometry.d {
            return Err(Error::Geometry("sampled masks need L | d and a length-d vector".into()));
        }
        let d = geometry.d;
        let (hl, step) = (half(geometry.l), (d / geometry.l) as i64);
        let w = CMatrix::from_fn(d, geometry.l, |r, c| z.get(r as i64 - half(d) - (c as i64 - hl) * step));
        Ok(Self { geometry, w })
    }
}

/// `(2 pi / d) sum_p x_p w_{p,l} e^{-2 pi i w_k p / d}`, `K × L`.
pub fn forward(x: &CenteredVector, frames: &MaskFrames) -> Result<CMatrix> {
    let g = frames.geometry;
    if x.len() != g.d {
        return Err(Error::Shape(format!("x has {} entries, d = {}", x.len(), g.d)));
    }
    let (d, hk) = (g.d, half(g.k));
    let mut out = CMatrix::zeros(g.k, g.l);
    let mut buf = vec![C64::new(0.0, 0.0); d];
    for c in 0..g.l {
        for (r, b) in buf.iter_mut().enumerate() {
            *b = x.values()[r] * frames.w[(r, c)];
        }
        dft_in_place(&mut buf);
        for k in -hk..=hk {
            out[((k + hk) as usize, c)] = buf[slot(g.frequency(k), d)] * (2.0 * PI);
        }
    }
    Ok(out)
}

/// Adjoint of [`forward`].
pub fn adjoint(y: &CMatrix, frames: &MaskFrames) -> Result<CenteredVector> {
    let g = frames.geometry;
    if y.shape() != (g.k, g.l) {
        return Err(Error::Shape(format!("expected {}x{}, got {:?}", g.k, g.l, y.shape())));
    }
    let (d, hk) = (g.d, half(g.k));
    let mut x = vec![C64::new(0.0, 0.0); d];
    let mut buf = vec![C64::new(0.0, 0.0); d];
    for c in 0..g.l {
        buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
        for k in -hk..=hk {
            buf[slot(g.frequency(k), d)] = y[((k + hk) as usize, c)];
        }
        idft_in_place(&mut buf);
        for (r, v) in x.iter_mut().enumerate() {
            *v += frames.w[(r, c)].conj() * buf[r] * (2.0 * PI / d as f64);
        }
    }
    CenteredVector::new(x)
}

/// Diagonal of `F* F`: `(4 pi^2 K / d^2) sum_l |w_{p,l}|^2`, valid when each
/// shifted mask spans at most `K` consecutive samples.
fn normal_diagonal(frames: &MaskFrames) -> Vec<f64> {
    let g = frames.geometry;
    let c = 4.0 * PI * PI * g.k as f64 / (g.d * g.d) as f64;
    (0..g.d).map(|r| c * frames.w.row(r).iter().map(|v| v.norm_sqr()).sum::<f64>()).collect()
}

fn residual(fx: &CMatrix, amp: &CMatrix) -> f64 {
    fx.iter().zip(amp.iter()).map(|(a, b)| (a.norm() - b.re).powi(2)).sum::<f64>().sqrt()
}

/// Least-squares projection onto the magnitude set; also returns the residual of `x`.
fn project(x: &CenteredVector, frames: &MaskFrames, amp: &CMatrix, diag: &[f64]) -> Result<(CenteredVector, f64)> {
    let fx = forward(x, frames)?;
    let r = residual(&fx, amp);
    let target = fx.zip_map(amp, |y, a| {
        let n = y.norm();
        if n > 0.0 { y * (a.re / n) } else { a }
    });
    let mut p = adjoint(&target, frames)?;
    for (v, &dg) in p.values_mut().iter_mut().zip(diag) {
        *v = if dg > 0.0 { *v / dg } else { C64::new(0.0, 0.0) };
    }
    Ok((p, r))
}

/// Runs `hio_per_block` HIO then `er_per_block` ER steps per block and returns
/// the iterate with the lowest measurement residual.
pub fn hio_er(y: &MeasurementSet, frames: &MaskFrames, cfg: &HioConfig) -> Result<ReconstructionResult> {
    cfg.validate()?;
    let g = frames.geometry;
    if y.geometry != g {
        return Err(Error::Geometry("measurement and mask geometries differ".into()));
    }
    let d = g.d;
    let amp = y.values.map(|v| C64::new(v.max(0.0).sqrt(), 0.0));
    let diag = normal_diagonal(frames);
    let inside: Vec<bool> = (-half(d)..=half(d))
        .map(|p| cfg.support.is_none_or(|a| (2.0 * PI * p as f64 / d as f64).abs() <= a))
        .collect();
    let mut x = match cfg.init {
        HioInit::Zero => CenteredVector::zeros(d),
        HioInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            CenteredVector::from_fn(d, |_| complex_gaussian(&mut rng))
        }
    };
    let mut residuals = Vec::with_capacity(cfg.total_iters + 1);
    let mut best = (f64::INFINITY, x.clone());
    for k in 0..cfg.total_iters {
        let (p, r) = project(&x, frames, &amp, &diag)?;
        residuals.push(r);
        if r < best.0 {
            best = (r, x.clone());
        }
        let er = cfg.is_er(k);
        let update = |keep: bool, xv: C64, pv: C64| {
            if keep {
                pv
            } else if er {
                C64::new(0.0, 0.0)
            } else {
                xv - pv * cfg.beta
            }
        };
        let mut next = CenteredVector::from_fn(d, |q| update(inside[slot(q, d)], x.get(q), p.get(q)));
        if cfg.bandlimit {
            let (xh, nh) = (dft(&x), dft(&next));
            let hs = half(cfg.s);
            next = idft(&CenteredVector::from_fn(d, |n| update(n.abs() <= hs, xh.get(n), nh.get(n))));
        }
        x = next;
    }
    let r = residual(&forward(&x, frames)?, &amp);
    residuals.push(r);
    if r < best.0 {
        best = (r, x);
    }
    let xh = dft(&best.1);
    let hs = half(cfg.s);
    let coeffs = CenteredVector::from_fn(cfg.s, |n| if n.abs() <= hs { xh.get(n) } else { C64::new(0.0, 0.0) });
    Ok(ReconstructionResult::from_coeffs(
        coeffs,
        None,
        Diagnostics {
            residuals,
            ..Default::default()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{discrete_oracle, discrete_oracle_grid, subsample, Provenance};
    use crate::signals::{make_trig_mask, MaskStyle};
    use rand::Rng;

    fn rand_vec(d: usize, seed: u64) -> CenteredVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CenteredVector::from_fn(d, |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn forward_matches_oracle() {
        let d = 21;
        let mask = make_trig_mask(4, MaskStyle::Structured, 1).unwrap();
        let x = rand_vec(d, 2);
        assert_eq!(forward(&CenteredVector::zeros(d), &MaskFrames::from_mask(&mask, Geometry::full(d)).unwrap()).unwrap().norm(), 0.0);
        for (k, l) in [(21, 7), (7, 21), (21, 21)] {
            let g = Geometry::new(d, k, l).unwrap();
            let frames = MaskFrames::from_mask(&mask, g).unwrap();
            let f = forward(&x, &frames).unwrap().map(|v| v.norm_sqr());
            let o = subsample(&discrete_oracle(&x, &mask.samples(d)).unwrap(), k, l).unwrap();
            assert!((f - &o).abs().max() <= 1e-12 * (1.0 + o.abs().max()));
            let fs = MaskFrames::from_samples(&mask.samples(d), g).unwrap();
            assert!((&fs.w - &frames.w).norm() < 1e-12);
        }
        let off = Geometry::new(19, 19, 7).unwrap();
        let f = forward(&rand_vec(19, 3), &MaskFrames::from_mask(&mask, off).unwrap()).unwrap().map(|v| v.norm_sqr());
        let o = discrete_oracle_grid(&rand_vec(19, 3), &mask, off).unwrap().values;
        assert!((f - &o).abs().max() <= 1e-12 * o.abs().max());
    }

    #[test]
    fn adjoint_identity() {
        let d = 21;
        let mask = make_trig_mask(4, MaskStyle::RandomGaussian, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (k, l) in [(21, 7), (7, 21)] {
            let frames = MaskFrames::from_mask(&mask, Geometry::new(d, k, l).unwrap()).unwrap();
            let x = rand_vec(d, 7);
            let y = CMatrix::from_fn(k, l, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let lhs: C64 = forward(&x, &frames).unwrap().iter().zip(y.iter()).map(|(a, b)| b.conj() * a).sum();
            let ax = adjoint(&y, &frames).unwrap();
            let rhs: C64 = x.values().iter().zip(ax.values()).map(|(a, b)| b.conj() * a).sum();
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm());
        }
    }

    #[test]
    fn normal_operator_is_diagonal() {
        let d = 21;
        let mask = make_trig_mask(4, MaskStyle::RandomGaussian, 8).unwrap();
        let frames = MaskFrames::from_mask(&mask, Geometry::new(d, d, 7).unwrap()).unwrap();
        let diag = normal_diagonal(&frames);
        let x = rand_vec(d, 9);
        let ffx = adjoint(&forward(&x, &frames).unwrap(), &frames).unwrap();
        for (i, (a, b)) in ffx.values().iter().zip(x.values()).enumerate() {
            assert!((a - b * diag[i]).norm() < 1e-10);
        }
    }

    fn instance(d: usize, l: usize, seed: u64) -> (MeasurementSet, MaskFrames, CenteredVector) {
        let mask = make_trig_mask(4, MaskStyle::Structured, seed).unwrap();
        let g = Geometry::new(d, d, l).unwrap();
        let x = rand_vec(d, 10 + seed);
        let y = discrete_oracle_grid(&x, &mask, g).unwrap();
        (MeasurementSet { provenance: Provenance::DiscreteOracle, ..y }, MaskFrames::from_mask(&mask, g).unwrap(), x)
    }

    #[test]
    fn residual_decreases_and_er_is_monotone() {
        let (y, frames, _) = instance(21, 7, 1);
        let r = hio_er(&y, &frames, &HioConfig::new(30, 21)).unwrap();
        let res = &r.diagnostics.residuals;
        assert!(res.iter().cloned().fold(f64::INFINITY, f64::min) < res[0]);
        // pure ER run never increases the residual
        let cfg = HioConfig { hio_per_block: 0, er_per_block: 1, ..HioConfig::new(20, 21) };
        let r = hio_er(&y, &frames, &cfg).unwrap();
        for w in r.diagnostics.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_measurements() {
        let (y, frames, _) = instance(21, 7, 2);
        let zero = MeasurementSet { values: y.values * 0.0, ..y };
        let r = hio_er(&zero, &frames, &HioConfig::new(10, 21)).unwrap();
        assert_eq!(r.coeffs.norm(), 0.0);
    }

    #[test]
    fn deterministic() {
        let (y, frames, _) = instance(21, 7, 3);
        let cfg = HioConfig { init: HioInit::Random(4), ..HioConfig::new(12, 21) };
        assert_eq!(hio_er(&y, &frames, &cfg).unwrap(), hio_er(&y, &frames, &cfg).unwrap());
    }
}
