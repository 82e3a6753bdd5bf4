//! Spectrogram measurements.
//!
//! Rows are frequencies `w = k d / K` for `k` in `[K]_c`; columns are shifts
//! `t = 2 pi l / L` for `l` in `[L]_c`. When `L | d` the shift is the grid
//! shift `l d / L`. A trigonometric mask can be evaluated anywhere, so for it
//! `L` need not divide `d`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::split;
use crate::signals::{MaskSpec, Signal};
use crate::spectral::{dft_in_place, fft_standard, half, CenteredVector, C64};

pub type RMatrix = DMatrix<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadratureConfig {
    pub nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { nodes: 10001 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_multiple_of(2) || self.nodes < 1001 {
            return Err(Error::Config(format!("quadrature nodes must be odd and >= 1001, got {}", self.nodes)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub d: usize,
    pub k: usize,
    pub l: usize,
}

impl Geometry {
    pub fn new(d: usize, k: usize, l: usize) -> Result<Self> {
        let g = Self { d, k, l };
        g.validate()?;
        Ok(g)
    }

    pub fn full(d: usize) -> Self {
        Self { d, k: d, l: d }
    }

    pub fn validate(&self) -> Result<()> {
        let Self { d, k, l } = *self;
        if d % 2 == 0 || k % 2 == 0 || l % 2 == 0 {
            return Err(Error::Geometry(format!("d, K, L must be odd, got {d}, {k}, {l}")));
        }
        if k == 0 || d % k != 0 {
            return Err(Error::Geometry(format!("K = {k} must divide d = {d}")));
        }
        if l == 0 || l > d {
            return Err(Error::Geometry(format!("L = {l} must lie in 1..=d = {d}")));
        }
        Ok(())
    }

    pub fn shifts_on_grid(&self) -> bool {
        self.d.is_multiple_of(self.l)
    }

    /// Frequency of row index `k`.
    pub fn frequency(&self, k: i64) -> i64 {
        k * (self.d / self.k) as i64
    }

    /// Shift (radians) of column index `l`.
    pub fn shift(&self, l: i64) -> f64 {
        2.0 * PI * l as f64 / self.l as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Quadrature,
    DiscreteOracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    /// `K × L`, row `k + (K-1)/2`, column `l + (L-1)/2`.
    pub values: RMatrix,
    pub geometry: Geometry,
    pub provenance: Provenance,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub achieved_snr_db: Option<f64>,
}

impl MeasurementSet {
    pub fn clean(values: RMatrix, geometry: Geometry, provenance: Provenance) -> Self {
        Self {
            values,
            geometry,
            provenance,
            snr_db: None,
            seed: None,
            achieved_snr_db: None,
        }
    }

    pub fn to_csv(&self) -> String {
        let g = self.geometry;
        let mut out = String::from("d,K,L,snr_db,seed\n");
        let snr = self.snr_db.map_or("inf".to_string(), |s| format!("{s}"));
        let seed = self.seed.map_or(String::new(), |s| s.to_string());
        let _ = writeln!(out, "{},{},{},{},{}", g.d, g.k, g.l, snr, seed);
        for r in 0..self.values.nrows() {
            let row: Vec<String> = (0..self.values.ncols()).map(|c| format!("{:e}", self.values[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("measurement csv: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        if header.trim() != "d,K,L,snr_db,seed" {
            return Err(bad("unexpected header"));
        }
        let meta: Vec<&str> = lines.next().ok_or_else(|| bad("missing metadata"))?.split(',').collect();
        if meta.len() != 5 {
            return Err(bad("metadata needs 5 fields"));
        }
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad("bad integer"));
        let geometry = Geometry::new(num(meta[0])?, num(meta[1])?, num(meta[2])?)?;
        let snr_db = match meta[3].trim() {
            "inf" => None,
            s => Some(s.parse::<f64>().map_err(|_| bad("bad snr"))?),
        };
        let seed = match meta[4].trim() {
            "" => None,
            s => Some(s.parse::<u64>().map_err(|_| bad("bad seed"))?),
        };
        let mut vals = Vec::with_capacity(geometry.k * geometry.l);
        for line in lines {
            for tok in line.split(',') {
                vals.push(tok.trim().parse::<f64>().map_err(|_| bad("bad value"))?);
            }
        }
        if vals.len() != geometry.k * geometry.l {
            return Err(bad("value count does not match K*L"));
        }
        Ok(Self {
            values: RMatrix::from_row_slice(geometry.k, geometry.l, &vals),
            geometry,
            provenance: Provenance::Quadrature,
            snr_db,
            seed,
            achieved_snr_db: None,
        })
    }
}

fn check_mask_geometry(mask: &MaskSpec, geom: &Geometry) -> Result<()> {
    geom.validate()?;
    if !geom.shifts_on_grid() && !mask.is_trig() {
        return Err(Error::Geometry(format!(
            "L = {} must divide d = {} unless the mask is a trigonometric polynomial",
            geom.l, geom.d
        )));
    }
    Ok(())
}

/// Full `d × d` continuous-model matrix `Z`.
pub fn measure_continuous(f: &dyn Signal, mask: &MaskSpec, d: usize, quad: QuadratureConfig) -> Result<RMatrix> {
    Ok(measure_grid(f, mask, Geometry::full(d), quad)?.values)
}

/// `|∫_{-pi}^{pi} f(x) m(x - t_l) e^{-i w x} dx|^2` on the geometry's grid,
/// composite trapezoid with `quad.nodes` equispaced nodes including both ends.
/// Each column is one FFT of length `nodes - 1`.
pub fn measure_grid(f: &dyn Signal, mask: &MaskSpec, geom: Geometry, quad: QuadratureConfig) -> Result<MeasurementSet> {
    quad.validate()?;
    check_mask_geometry(mask, &geom)?;
    let n = quad.nodes - 1;
    if n <= geom.d {
        return Err(Error::Config("quadrature grid coarser than d".into()));
    }
    let h = 2.0 * PI / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| -PI + i as f64 * h).collect();
    let fx: Vec<C64> = xs.iter().map(|&x| f.eval(x)).collect();
    let (hk, hl) = (half(geom.k), half(geom.l));

    // bins of the trapezoid sum at integer frequency w
    let bin = |buf: &[C64], w: i64| -> C64 {
        let sign = if w.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        buf[w.rem_euclid(n as i64) as usize] * (sign * h)
    };
    let trapezoid_fft = |g: &mut Vec<C64>| {
        g[0] = (g[0] + g[n]) * 0.5;
        g.truncate(n);
        fft_standard(g);
    };

    let columns: Vec<Vec<f64>> = match mask {
        MaskSpec::Trig { coeffs, .. } => {
            // m(x - t) = sum_q mhat(q) e^{-iqt} e^{iqx}; shifting bins is exact for the trapezoid sum
            let mut g = fx.clone();
            trapezoid_fft(&mut g);
            let rq = coeffs.half();
            (-hl..=hl)
                .into_par_iter()
                .map(|l| {
                    let t = geom.shift(l);
                    (-hk..=hk)
                        .map(|k| {
                            let w = geom.frequency(k);
                            let mut acc = C64::new(0.0, 0.0);
                            for q in -rq..=rq {
                                acc += coeffs.get(q) * C64::from_polar(1.0, -(q as f64) * t) * bin(&g, w - q);
                            }
                            acc.norm_sqr()
                        })
                        .collect()
                })
                .collect()
        }
        _ => (-hl..=hl)
            .into_par_iter()
            .map(|l| {
                let t = geom.shift(l);
                let mut g: Vec<C64> = xs.iter().zip(&fx).map(|(&x, &v)| v * mask.eval(x - t)).collect();
                trapezoid_fft(&mut g);
                (-hk..=hk).map(|k| bin(&g, geom.frequency(k)).norm_sqr()).collect()
            })
            .collect(),
    };
    let values = RMatrix::from_fn(geom.k, geom.l, |r, c| columns[c][r]);
    Ok(MeasurementSet::clean(values, geom, Provenance::Quadrature))
}

/// `T'_{w,l} = (4 pi^2 / d^2) |sum_p x_p z_{p-l} e^{-2 pi i w p / d}|^2`, full `d × d`.
pub fn discrete_oracle(x: &CenteredVector, z: &CenteredVector) -> Result<RMatrix> {
    if x.len() != z.len() {
        return Err(Error::Shape(format!("x has {} entries, z has {}", x.len(), z.len())));
    }
    let d = x.len();
    let h = half(d);
    let cols: Vec<Vec<f64>> = (-h..=h)
        .map(|l| {
            let mut u: Vec<C64> = (-h..=h).map(|p| x.get(p) * z.get(p - l)).collect();
            dft_in_place(&mut u);
            u.iter().map(|v| 4.0 * PI * PI * v.norm_sqr()).collect()
        })
        .collect();
    Ok(RMatrix::from_fn(d, d, |r, c| cols[c][r]))
}

/// Discrete spectrogram on a geometry, with the mask evaluated at
/// `2 pi p / d - t_l`. Matches `subsample(discrete_oracle(x, z))` when `L | d`.
pub fn discrete_oracle_grid(x: &CenteredVector, mask: &MaskSpec, geom: Geometry) -> Result<MeasurementSet> {
    check_mask_geometry(mask, &geom)?;
    if x.len() != geom.d {
        return Err(Error::Shape(format!("x has {} entries, d = {}", x.len(), geom.d)));
    }
    let d = geom.d;
    let (hk, hl) = (half(geom.k), half(geom.l));
    let cols: Vec<Vec<f64>> = (-hl..=hl)
        .map(|l| {
            let w = mask.shifted_samples(d, geom.shift(l));
            let mut u: Vec<C64> = x.values().iter().zip(w.values()).map(|(a, b)| a * b).collect();
            dft_in_place(&mut u);
            let u = CenteredVector::new(u).expect("odd length");
            (-hk..=hk).map(|k| 4.0 * PI * PI * u.get(geom.frequency(k)).norm_sqr()).collect()
        })
        .collect();
    let values = RMatrix::from_fn(geom.k, geom.l, |r, c| cols[c][r]);
    Ok(MeasurementSet::clean(values, geom, Provenance::DiscreteOracle))
}

/// `(M_{K,L})_{k,l} = M_{k d/K, l d/L}`.
pub fn subsample(m: &RMatrix, k: usize, l: usize) -> Result<RMatrix> {
    let d = m.nrows();
    if m.ncols() != d || d.is_multiple_of(2) {
        return Err(Error::Shape(format!("subsample needs an odd square matrix, got {}x{}", d, m.ncols())));
    }
    if k == 0 || l == 0 || !d.is_multiple_of(k) || !d.is_multiple_of(l) {
        return Err(Error::Geometry(format!("K = {k} and L = {l} must divide d = {d}")));
    }
    let (hd, hk, hl) = (half(d), half(k), half(l));
    let (sk, sl) = ((d / k) as i64, (d / l) as i64);
    Ok(RMatrix::from_fn(k, l, |r, c| {
        let w = (r as i64 - hk) * sk;
        let s = (c as i64 - hl) * sl;
        m[((w + hd) as usize, (s + hd) as usize)]
    }))
}

/// Adds i.i.d. `N(0, sigma^2)` with `sigma^2 = ||Y||_F^2 / (count 10^{snr/10})`.
/// `snr_db = +inf` returns the input unchanged. Column `c` draws from its own
/// stream seeded by `(seed, c)`.
pub fn add_noise(clean: &MeasurementSet, snr_db: f64, seed: u64) -> Result<MeasurementSet> {
    if snr_db == f64::INFINITY {
        return Ok(clean.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let energy = clean.values.norm_squared();
    if energy == 0.0 {
        return Err(Error::Config("SNR undefined for an all-zero measurement matrix".into()));
    }
    let count = clean.values.len() as f64;
    let sigma = (energy / (count * 10f64.powf(snr_db / 10.0))).sqrt();
    let (rows, cols) = clean.values.shape();
    let noise_cols: Vec<Vec<f64>> = (0..cols)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(split(seed, c as u64));
            (0..rows).map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
        })
        .collect();
    let noise = RMatrix::from_fn(rows, cols, |r, c| noise_cols[c][r]);
    let achieved = 10.0 * (energy / noise.norm_squared()).log10();
    Ok(MeasurementSet {
        values: &clean.values + noise,
        geometry: clean.geometry,
        provenance: clean.provenance,
        snr_db: Some(snr_db),
        seed: Some(seed),
        achieved_snr_db: Some(achieved),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{make_trig_mask, MaskStyle, TestFunction, TestFunctionSpec, TrigPoly};
    use rand::Rng;

    fn rand_vec(d: usize, seed: u64) -> CenteredVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CenteredVector::from_fn(d, |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn naive_oracle(x: &CenteredVector, z: &CenteredVector) -> RMatrix {
        let d = x.len();
        let h = half(d);
        RMatrix::from_fn(d, d, |r, c| {
            let (w, l) = (r as i64 - h, c as i64 - h);
            let mut acc = C64::new(0.0, 0.0);
            for p in -h..=h {
                acc += x.get(p) * z.get(p - l) * C64::from_polar(1.0, -2.0 * PI * (w * p) as f64 / d as f64);
            }
            4.0 * PI * PI / (d * d) as f64 * acc.norm_sqr()
        })
    }

    #[test]
    fn oracle_matches_naive_sum() {
        let (x, z) = (rand_vec(15, 1), rand_vec(15, 2));
        let a = discrete_oracle(&x, &z).unwrap();
        let b = naive_oracle(&x, &z);
        assert!((a - b).abs().max() < 1e-12);
    }

    #[test]
    fn oracle_trivial_cases() {
        let d = 9;
        let x = rand_vec(d, 3);
        assert_eq!(discrete_oracle(&CenteredVector::zeros(d), &x).unwrap(), RMatrix::zeros(d, d));
        let t = discrete_oracle(&x, &CenteredVector::impulse(d, 0)).unwrap();
        let h = half(d);
        for r in 0..d {
            for c in 0..d {
                let expect = 4.0 * PI * PI / (d * d) as f64 * x.get(c as i64 - h).norm_sqr();
                assert!((t[(r, c)] - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn oracle_column_energy() {
        let d = 15;
        let (x, z) = (rand_vec(d, 4), rand_vec(d, 5));
        let t = discrete_oracle(&x, &z).unwrap();
        let h = half(d);
        for c in 0..d {
            let l = c as i64 - h;
            let lhs: f64 = t.column(c).sum();
            let rhs: f64 = 4.0 * PI * PI / d as f64 * (-h..=h).map(|p| (x.get(p) * z.get(p - l)).norm_sqr()).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-12 * rhs);
        }
    }

    #[test]
    fn subsample_cases() {
        let d = 15;
        let m = RMatrix::from_fn(d, d, |r, c| (r * 100 + c) as f64);
        assert_eq!(subsample(&m, d, d).unwrap(), m);
        assert!(subsample(&m, 4, 3).is_err());
        let s = subsample(&m, 5, 3).unwrap();
        for (r, k) in (-2i64..=2).enumerate() {
            for (c, l) in (-1i64..=1).enumerate() {
                assert_eq!(s[(r, c)], m[((k * 3 + 7) as usize, (l * 5 + 7) as usize)]);
            }
        }
        let m9 = RMatrix::from_fn(9, 9, |r, _| r as f64);
        let s9 = subsample(&m9, 3, 9).unwrap();
        assert_eq!(s9.column(0).iter().cloned().collect::<Vec<_>>(), vec![1.0, 4.0, 7.0]);
    }

    #[test]
    fn quadrature_matches_oracle_for_trig_polys() {
        let d = 21;
        let c = rand_vec(9, 6);
        let f = TrigPoly { coeffs: c.clone() };
        let mask = make_trig_mask(6, MaskStyle::RandomGaussian, 7).unwrap();
        let z = mask.samples(d);
        let x = f.projected_samples(d, 9);
        let q = measure_continuous(&f, &mask, d, QuadratureConfig::default()).unwrap();
        let o = discrete_oracle(&x, &z).unwrap();
        assert!((&q - &o).abs().max() <= 1e-9 * o.abs().max());
        // the generic per-shift path agrees with the trig fast path
        let sampled = MaskSpec::Sampled { samples: z };
        let _ = sampled;
    }

    #[test]
    fn quadrature_scaling_and_zero() {
        let d = 11;
        let mask = make_trig_mask(4, MaskStyle::RandomGaussian, 1).unwrap();
        let zero = TrigPoly { coeffs: CenteredVector::zeros(5) };
        assert_eq!(measure_continuous(&zero, &mask, d, QuadratureConfig::default()).unwrap(), RMatrix::zeros(d, d));
        let c = rand_vec(5, 8);
        let f = TrigPoly { coeffs: c.clone() };
        let f3 = TrigPoly { coeffs: c.scale(C64::new(0.0, 3.0)) };
        let a = measure_continuous(&f, &mask, d, QuadratureConfig::default()).unwrap();
        let b = measure_continuous(&f3, &mask, d, QuadratureConfig::default()).unwrap();
        assert!((&a * 9.0 - b).abs().max() < 1e-10 * a.abs().max());
    }

    #[test]
    fn off_grid_shifts_match_oracle_grid() {
        // L does not divide d; the trig mask is evaluated at 2 pi l / L
        let d = 19;
        let geom = Geometry::new(d, d, 7).unwrap();
        let f = TrigPoly { coeffs: rand_vec(7, 9) };
        let mask = make_trig_mask(4, MaskStyle::Structured, 3).unwrap();
        let q = measure_grid(&f, &mask, geom, QuadratureConfig::default()).unwrap();
        let o = discrete_oracle_grid(&f.projected_samples(d, 7), &mask, geom).unwrap();
        assert!((&q.values - &o.values).abs().max() <= 1e-9 * o.values.abs().max());
    }

    #[test]
    fn oracle_grid_matches_subsample() {
        let d = 21;
        let mask = make_trig_mask(4, MaskStyle::RandomGaussian, 2).unwrap();
        let x = rand_vec(d, 10);
        let full = discrete_oracle(&x, &mask.samples(d)).unwrap();
        let g = discrete_oracle_grid(&x, &mask, Geometry::new(d, d, 7).unwrap()).unwrap();
        assert!((subsample(&full, d, 7).unwrap() - g.values).abs().max() < 1e-10);
    }

    #[test]
    fn generic_path_matches_fast_path() {
        let d = 15;
        let f = TestFunction::new(TestFunctionSpec::trig_default(2).unwrap()).unwrap();
        let mask = make_trig_mask(4, MaskStyle::RandomGaussian, 4).unwrap();
        let fast = measure_continuous(&f, &mask, d, QuadratureConfig::default()).unwrap();
        let sampled = MaskSpec::Sampled { samples: mask.samples(4001) };
        let slow = measure_continuous(&f, &sampled, d, QuadratureConfig::default()).unwrap();
        // linear interpolation of a smooth mask on a fine grid
        assert!((&fast - &slow).abs().max() <= 1e-5 * fast.abs().max());
    }

    #[test]
    fn noise_levels() {
        let d = 63;
        let x = rand_vec(d, 11);
        let z = rand_vec(d, 12);
        let clean = MeasurementSet::clean(discrete_oracle(&x, &z).unwrap(), Geometry::full(d), Provenance::DiscreteOracle);
        assert_eq!(add_noise(&clean, f64::INFINITY, 1).unwrap(), clean);
        assert!(add_noise(&clean, f64::NAN, 1).is_err());
        let zero = MeasurementSet::clean(RMatrix::zeros(d, d), Geometry::full(d), Provenance::DiscreteOracle);
        assert!(add_noise(&zero, 20.0, 1).is_err());
        let noisy = add_noise(&clean, 20.0, 5).unwrap();
        assert!((noisy.achieved_snr_db.unwrap() - 20.0).abs() < 0.5);
        assert_eq!(noisy, add_noise(&clean, 20.0, 5).unwrap());
        assert_ne!(noisy.values, clean.values);
    }

    #[test]
    fn csv_roundtrip() {
        let d = 9;
        let m = MeasurementSet::clean(
            discrete_oracle(&rand_vec(d, 1), &rand_vec(d, 2)).unwrap(),
            Geometry::new(d, 9, 3).unwrap(),
            Provenance::DiscreteOracle,
        );
        let m = MeasurementSet { values: subsample(&m.values, 9, 3).unwrap(), ..m };
        let noisy = add_noise(&m, 30.0, 3).unwrap();
        let back = MeasurementSet::from_csv(&noisy.to_csv()).unwrap();
        assert_eq!(back.geometry, noisy.geometry);
        assert_eq!(back.seed, Some(3));
        assert!((back.values - &noisy.values).abs().max() <= 1e-15 * noisy.values.abs().max());
    }
}
