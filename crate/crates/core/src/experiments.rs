//! Trial runners shared by the CLI and the acceptance suite.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use crate::deconv::{DeconvGeometryCompact, DeconvGeometryTrig};
use crate::error::{Error, Result};
use crate::hio::{hio_er, HioConfig, MaskFrames};
use crate::measure::{add_noise, measure_grid, MeasurementSet, QuadratureConfig};
use crate::recon::{
    evaluate_grid, lowpass, recover_compact, recover_trig, signal_on_grid, align_phase, to_db, CompactRoute,
    FilterSpec, MagnitudeMethod, RecoverOptions, ReconstructionResult, ERROR_GRID,
};
use crate::rng::stream;
use crate::signals::{make_compact_mask, make_trig_mask, mu1, mu2, MaskSpec, MaskStyle, TestFunction, TestFunctionSpec};
use crate::spectral::{CenteredVector, C64};

/// Half-width of the compact-mask experiments' nominal mask support.
pub const COMPACT_B: f64 = 0.75;
/// Power-iteration steps for eigenvector magnitudes.
pub const EIGEN_ITERS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Alg1,
    /// Eigenvector magnitudes and SNR-dependent low-pass filter.
    Alg1Improved,
    Alg2,
    Alg2Alt,
    HioEr { iters: usize },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Alg1 => "alg1".into(),
            Method::Alg1Improved => "alg1+filter".into(),
            Method::Alg2 => "alg2".into(),
            Method::Alg2Alt => "alg2-alt".into(),
            Method::HioEr { iters } => format!("hio-er{iters}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "alg1" => Ok(Method::Alg1),
            "alg1+filter" => Ok(Method::Alg1Improved),
            "alg2" => Ok(Method::Alg2),
            "alg2-alt" => Ok(Method::Alg2Alt),
            "hio-er" => Ok(Method::HioEr { iters: 30 }),
            other => match other.strip_prefix("hio-er").and_then(|n| n.parse().ok()) {
                Some(iters) if iters > 0 => Ok(Method::HioEr { iters }),
                _ => Err(Error::Config(format!("unknown method {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrigSetup {
    pub d: usize,
    pub rho: usize,
    pub kappa: usize,
    pub style: MaskStyle,
    pub quad: QuadratureConfig,
}

impl TrigSetup {
    pub fn new(d: usize, rho: usize, kappa: usize) -> Self {
        Self {
            d,
            rho,
            kappa,
            style: MaskStyle::RandomGaussian,
            quad: QuadratureConfig::default(),
        }
    }

    pub fn l(&self) -> usize {
        self.rho + self.kappa
    }

    pub fn geometry(&self) -> Result<DeconvGeometryTrig> {
        DeconvGeometryTrig::new(self.d, self.l(), self.rho, self.d)
    }
}

/// `rho = min((d - 5)/2, c floor(log2 d))`.
pub fn rho_rule(d: usize, c: usize) -> usize {
    let r = ((d - 5) / 2).min(c * d.ilog2() as usize);
    r - r % 2
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompactSetup {
    pub d: usize,
    pub k: usize,
    pub delta: usize,
    pub s: usize,
    pub mask_rho: usize,
    pub quad: QuadratureConfig,
}

impl CompactSetup {
    /// `K = delta + kappa`.
    pub fn new(d: usize, delta: usize, kappa: usize, s: usize) -> Self {
        Self {
            d,
            k: delta + kappa,
            delta,
            s,
            mask_rho: 16,
            quad: QuadratureConfig::default(),
        }
    }

    pub fn geometry(&self) -> Result<DeconvGeometryCompact> {
        DeconvGeometryCompact::from_delta(self.d, self.k, self.delta, self.s)
    }

    /// Signal support half-width `a = 0.9 (pi - b)`.
    pub fn support(&self) -> f64 {
        0.9 * (PI - COMPACT_B)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub snr_db: f64,
    pub method: Method,
    pub error_db: f64,
    pub runtime_s: f64,
    pub mu: Option<f64>,
    pub sigma_min: Option<f64>,
    pub calibration_residual: Option<f64>,
}

fn error_against(fgrid: &[C64], coeffs: &CenteredVector) -> Result<f64> {
    let fe: Vec<C64> = evaluate_grid(coeffs, ERROR_GRID).into_iter().map(|(_, v)| v).collect();
    let a = align_phase(fgrid, &fe)?;
    Ok(to_db(a.relative * a.relative))
}

fn outcome(snr_db: f64, method: Method, r: &ReconstructionResult, fgrid: &[C64], secs: f64) -> Result<TrialOutcome> {
    Ok(TrialOutcome {
        snr_db,
        method,
        error_db: error_against(fgrid, &r.coeffs)?,
        runtime_s: secs,
        mu: r.diagnostics.mu,
        sigma_min: r.diagnostics.sigma_min,
        calibration_residual: r.diagnostics.calibration_residual,
    })
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}

/// Test function, mask and clean quadrature measurements for one trig trial.
pub fn trig_instance(setup: &TrigSetup, master: u64, trial: u64) -> Result<(TestFunction, MaskSpec, MeasurementSet)> {
    let geom = setup.geometry()?;
    let f = TestFunction::new(TestFunctionSpec::trig_default(stream(master, trial, "signal"))?)?;
    let mask = make_trig_mask(setup.rho, setup.style, stream(master, trial, "mask"))?;
    let y = measure_grid(&f, &mask, geom.measurement_geometry(), setup.quad)?;
    Ok((f, mask, y))
}

/// Noisy copy of `clean`; `snr = inf` returns it unchanged.
pub fn noisy(clean: &MeasurementSet, snr: f64, master: u64, trial: u64) -> Result<MeasurementSet> {
    add_noise(clean, snr, stream(master, trial, &format!("noise{snr}")))
}

/// Runs one trig-mask method on measurements `y` taken at `snr` dB.
pub fn recover_trig_method(setup: &TrigSetup, y: &MeasurementSet, mask: &MaskSpec, method: Method, snr: f64) -> Result<ReconstructionResult> {
    let geom = setup.geometry()?;
    match method {
        Method::Alg1 => recover_trig(y, mask, &geom, &RecoverOptions::default()),
        Method::Alg1Improved => {
            let opts = RecoverOptions {
                magnitudes: MagnitudeMethod::Eigen { iters: EIGEN_ITERS },
                filter: Some(FilterSpec::for_snr(snr)),
                ..Default::default()
            };
            recover_trig(y, mask, &geom, &opts)
        }
        Method::HioEr { iters } => {
            let frames = MaskFrames::from_mask(mask, geom.measurement_geometry())?;
            let cfg = HioConfig { support: Some(0.9 * PI), ..HioConfig::new(iters, setup.d) };
            hio_er(y, &frames, &cfg)
        }
        other => Err(Error::Config(format!("{} does not apply to trig masks", other.name()))),
    }
}

/// Runs one compact-mask method on measurements `y` taken at `snr` dB.
pub fn recover_compact_method(
    setup: &CompactSetup,
    y: &MeasurementSet,
    mask: &MaskSpec,
    method: Method,
    snr: f64,
) -> Result<ReconstructionResult> {
    let geom = setup.geometry()?;
    let filter = FilterSpec::for_snr(snr);
    match method {
        Method::Alg2 => recover_compact(y, mask, &geom, &RecoverOptions::default()),
        Method::Alg2Alt => {
            let opts = RecoverOptions { route: CompactRoute::Alternate, filter: Some(filter), ..Default::default() };
            recover_compact(y, mask, &geom, &opts)
        }
        Method::HioEr { iters } => {
            let frames = MaskFrames::from_mask(mask, geom.measurement_geometry())?;
            let cfg = HioConfig { support: Some(setup.support()), ..HioConfig::new(iters, setup.d) };
            let mut r = hio_er(y, &frames, &cfg)?;
            r.coeffs = lowpass(&r.coeffs, &filter);
            Ok(r)
        }
        other => Err(Error::Config(format!("{} does not apply to compact masks", other.name()))),
    }
}

pub fn trig_trial(setup: &TrigSetup, master: u64, trial: u64, snrs: &[f64], methods: &[Method]) -> Result<Vec<TrialOutcome>> {
    let (f, mask, clean) = trig_instance(setup, master, trial)?;
    let fgrid = signal_on_grid(&f, ERROR_GRID);
    let mut out = Vec::new();
    for &snr in snrs {
        let y = noisy(&clean, snr, master, trial)?;
        for &m in methods {
            let (r, secs) = timed(|| recover_trig_method(setup, &y, &mask, m, snr))?;
            out.push(outcome(snr, m, &r, &fgrid, secs)?);
        }
    }
    Ok(out)
}

pub fn compact_instance(setup: &CompactSetup, master: u64, trial: u64) -> Result<(TestFunction, MaskSpec, MeasurementSet)> {
    let geom = setup.geometry()?;
    let spec = TestFunctionSpec::compact_default(setup.support(), COMPACT_B, stream(master, trial, "signal"))?;
    let f = TestFunction::new(spec)?;
    let mask = make_compact_mask(geom.b, setup.mask_rho, stream(master, trial, "mask"))?;
    let y = measure_grid(&f, &mask, geom.measurement_geometry(), setup.quad)?;
    Ok((f, mask, y))
}

pub fn compact_trial(
    setup: &CompactSetup,
    master: u64,
    trial: u64,
    snrs: &[f64],
    methods: &[Method],
) -> Result<Vec<TrialOutcome>> {
    let (f, mask, clean) = compact_instance(setup, master, trial)?;
    let fgrid = signal_on_grid(&f, ERROR_GRID);
    let mut out = Vec::new();
    for &snr in snrs {
        let y = noisy(&clean, snr, master, trial)?;
        for &m in methods {
            let (r, secs) = timed(|| recover_compact_method(setup, &y, &mask, m, snr))?;
            out.push(outcome(snr, m, &r, &fgrid, secs)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuStats {
    pub mean: f64,
    pub min: f64,
}

fn stats(v: &[f64]) -> MuStats {
    MuStats {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        min: v.iter().cloned().fold(f64::INFINITY, f64::min),
    }
}

/// Mean of `mu_1` over random Gaussian trig masks with `kappa = rho - 1`.
pub fn mu1_table(d: usize, rho: usize, trials: usize, master: u64) -> Result<MuStats> {
    let v: Result<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let z = make_trig_mask(rho, MaskStyle::RandomGaussian, stream(master, t, "mask"))?.samples(d);
            Ok(mu1(&z, rho - 1)?.mu)
        })
        .collect();
    Ok(stats(&v?))
}

/// Mean of `mu_2` over random compact masks (`b = 3/4`, 16 coefficients),
/// with `s = kappa - 1` and `K = 2 kappa + 1`.
pub fn mu2_table(d: usize, kappa: usize, trials: usize, master: u64) -> Result<MuStats> {
    let s = (kappa - 1).max(1);
    let v: Result<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let z = make_compact_mask(COMPACT_B, 16, stream(master, t, "mask"))?.samples(d);
            Ok(mu2(&z, kappa, s)?.mu)
        })
        .collect();
    Ok(stats(&v?))
}

/// Noiseless error of the trig pipeline on the default test function,
/// `rho = min((d - 5)/2, 16 floor(log2 d))`, `kappa = rho - 1`.
pub fn convergence_error(d: usize, master: u64) -> Result<f64> {
    let rho = rho_rule(d, 16);
    let setup = TrigSetup::new(d, rho, rho - 1);
    let out = trig_trial(&setup, master, 0, &[f64::INFINITY], &[Method::Alg1])?;
    Ok(out[0].error_db)
}

/// Median recovery time (seconds) over `reps` runs for the runtime study:
/// `rho = min((d - 5)/2, 2 floor(log2 d))`, `L = 2 rho - 1`. Returns `(dL, seconds)`.
pub fn runtime_point(d: usize, reps: usize, master: u64) -> Result<(usize, f64)> {
    let rho = rho_rule(d, 2);
    let setup = TrigSetup::new(d, rho, rho - 1);
    let geom = setup.geometry()?;
    let (_, mask, y) = trig_instance(&setup, master, 0)?;
    let y = add_noise(&y, 40.0, master)?;
    // warm caches and plans once
    recover_trig(&y, &mask, &geom, &RecoverOptions::default())?;
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| timed(|| recover_trig(&y, &mask, &geom, &RecoverOptions::default())).map(|(_, t)| t))
        .collect::<Result<_>>()?;
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((d * setup.l(), times[times.len() / 2]))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Linear-interpolated quantile.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q * (s.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos - pos.floor());
    if i + 1 < s.len() {
        s[i] * (1.0 - frac) + s[i + 1] * frac
    } else {
        s[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rho_rules() {
        assert_eq!(rho_rule(33, 16), 14);
        assert_eq!(rho_rule(1025, 16), 160);
        assert_eq!(rho_rule(257, 2), 16);
        assert_eq!(rho_rule(129, 2), 14);
    }

    #[test]
    fn method_names_roundtrip() {
        for m in [Method::Alg1, Method::Alg1Improved, Method::Alg2, Method::Alg2Alt, Method::HioEr { iters: 30 }, Method::HioEr { iters: 100 }] {
            assert_eq!(Method::parse(&m.name()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }

    #[test]
    fn quantiles_and_slope() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        let pts: Vec<(f64, f64)> = (1..5).map(|i| (i as f64, 3.0 * (i as f64).powf(1.5))).collect();
        assert!((loglog_slope(&pts) - 1.5).abs() < 1e-12);
    }
}
