//! Trigonometric-polynomial estimates, filtering, error metrics and the
//! end-to-end recovery drivers.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::deconv::{
    deconvolve_compact, deconvolve_compact_alt, deconvolve_trig, default_calibration, DeconvGeometryCompact,
    DeconvGeometryTrig, Deconvolved, Route, SolverConfig,
};
use crate::error::{Error, Result};
use crate::measure::MeasurementSet;
use crate::signals::{trig_eval, MaskSpec, Signal};
use crate::spectral::{centered_range, half, slot, CenteredVector, C64};
use crate::sync::{eigen_magnitudes, magnitudes, phases_window, CoefficientEstimate, EdgePolicy};

/// Error floor reported instead of `-inf` dB.
pub const DB_FLOOR: f64 = -300.0;
/// Grid size used for reported errors.
pub const ERROR_GRID: usize = 2003;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub mu: Option<f64>,
    pub sigma_min: Option<f64>,
    pub calibration_residual: Option<f64>,
    pub gamma: usize,
    /// Coefficients whose phase path crossed an unusable edge (set to zero).
    pub undetermined: usize,
    pub warning: Option<String>,
    /// Measurement residual trace, for iterative baselines.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionResult {
    /// `c_n` for `n` in `S = [s]_c`, centered.
    pub coeffs: CenteredVector,
    /// `(x_i, f_e(x_i))` with `x_i = -pi + 2 pi i / N`, `i = 0..=N`.
    pub grid: Option<Vec<(f64, C64)>>,
    pub diagnostics: Diagnostics,
}

impl ReconstructionResult {
    pub fn from_coeffs(coeffs: CenteredVector, grid: Option<usize>, diagnostics: Diagnostics) -> Self {
        let grid = grid.map(|n| evaluate_grid(&coeffs, n));
        Self { coeffs, grid, diagnostics }
    }

    pub fn coefficients_csv(&self) -> String {
        let mut out = String::from("n,re,im\n");
        for (n, c) in self.coeffs.iter() {
            let _ = writeln!(out, "{n},{:e},{:e}", c.re, c.im);
        }
        out
    }

    pub fn grid_csv(&self) -> Option<String> {
        let g = self.grid.as_ref()?;
        let mut out = String::from("x,re,im\n");
        for (x, v) in g {
            let _ = writeln!(out, "{x:e},{:e},{:e}", v.re, v.im);
        }
        Some(out)
    }
}

/// Grid nodes `x_i = -pi + 2 pi i / N`, `i = 0..=N`.
pub fn grid_nodes(n: usize) -> Vec<f64> {
    (0..=n).map(|i| -PI + 2.0 * PI * i as f64 / n as f64).collect()
}

pub fn evaluate_grid(coeffs: &CenteredVector, n: usize) -> Vec<(f64, C64)> {
    grid_nodes(n).into_iter().map(|x| (x, trig_eval(coeffs, x))).collect()
}

pub fn signal_on_grid(f: &dyn Signal, n: usize) -> Vec<C64> {
    grid_nodes(n).into_iter().map(|x| f.eval(x)).collect()
}

/// `f_e(x) = sum_{n in S} a_n e^{i alpha_n} e^{inx}` on an `N`-interval grid.
pub fn assemble(estimates: &[CoefficientEstimate], n: usize) -> Result<ReconstructionResult> {
    let reach = estimates.iter().map(|e| e.index.abs()).max().unwrap_or(0);
    let mut coeffs = CenteredVector::zeros(2 * reach as usize + 1);
    for e in estimates {
        coeffs.set(e.index, e.value());
    }
    Ok(ReconstructionResult::from_coeffs(coeffs, Some(n), Diagnostics::default()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterSpec {
    pub order: u32,
    /// `n_max` as a fraction of `(s - 1)/2`.
    pub cutoff: f64,
}

impl FilterSpec {
    pub fn new(order: u32, cutoff: f64) -> Result<Self> {
        if order % 2 == 1 || !(2..=16).contains(&order) {
            return Err(Error::Config(format!("filter order must be even in [2, 16], got {order}")));
        }
        if !(cutoff > 0.0) {
            return Err(Error::Config(format!("filter cutoff must be positive, got {cutoff}")));
        }
        Ok(Self { order, cutoff })
    }

    /// Order used at a given SNR: 2 at 10 dB up to 12 at 60 dB.
    pub fn for_snr(snr_db: f64) -> Self {
        let order = if snr_db.is_finite() { (2.0 * (snr_db / 10.0).round()).clamp(2.0, 12.0) as u32 } else { 16 };
        Self { order, cutoff: 1.0 }
    }
}

/// `c_n <- c_n exp(-c_f (|n| / n_max)^order)` with `c_f = -ln(eps)`.
pub fn lowpass(coeffs: &CenteredVector, filt: &FilterSpec) -> CenteredVector {
    lowpass_order(coeffs, filt.order as f64, filt.cutoff)
}

fn lowpass_order(coeffs: &CenteredVector, order: f64, cutoff: f64) -> CenteredVector {
    let cf = -f64::EPSILON.ln();
    let nmax = (cutoff * coeffs.half() as f64).max(1.0);
    CenteredVector::from_fn(coeffs.len(), |n| coeffs.get(n) * (-cf * (n.abs() as f64 / nmax).powf(order)).exp())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment {
    /// Rotation applied to the candidate: minimizes `||f - e^{i theta} f_e||`.
    pub theta: f64,
    /// `sqrt(h sum |f - e^{i theta} f_e|^2)`.
    pub error: f64,
    pub relative: f64,
}

fn l2(v: impl Iterator<Item = f64>, h: f64) -> f64 {
    (h * v.sum::<f64>()).sqrt()
}

pub fn align_phase(f: &[C64], fe: &[C64]) -> Result<Alignment> {
    if f.len() != fe.len() {
        return Err(Error::Shape(format!("grids differ: {} vs {}", f.len(), fe.len())));
    }
    let h = 2.0 * PI / f.len().max(1) as f64;
    let fnorm = l2(f.iter().map(|v| v.norm_sqr()), h);
    if fnorm == 0.0 {
        return Err(Error::ZeroReference);
    }
    let ip: C64 = f.iter().zip(fe).map(|(a, b)| b.conj() * a).sum();
    let theta = if ip.norm() > 0.0 { ip.arg() } else { 0.0 };
    let rot = C64::from_polar(1.0, theta);
    let error = l2(f.iter().zip(fe).map(|(a, b)| (a - rot * b).norm_sqr()), h);
    Ok(Alignment {
        theta,
        error,
        relative: error / fnorm,
    })
}

/// `10 log10(sum |f - f_e|^2 / sum |f|^2)`, floored at [`DB_FLOOR`].
pub fn error_db(f: &[C64], fe: &[C64]) -> Result<f64> {
    if f.len() != fe.len() {
        return Err(Error::Shape(format!("grids differ: {} vs {}", f.len(), fe.len())));
    }
    let den: f64 = f.iter().map(|v| v.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num: f64 = f.iter().zip(fe).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(to_db(num / den))
}

pub fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Phase-aligned error in dB against `f` on the standard error grid.
pub fn aligned_error_db(f: &dyn Signal, coeffs: &CenteredVector) -> Result<f64> {
    let fv = signal_on_grid(f, ERROR_GRID);
    let fe: Vec<C64> = evaluate_grid(coeffs, ERROR_GRID).into_iter().map(|(_, v)| v).collect();
    let a = align_phase(&fv, &fe)?;
    Ok(to_db(a.relative * a.relative))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MagnitudeMethod {
    Diagonal,
    Eigen { iters: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompactRoute {
    Primary,
    Alternate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoverOptions {
    pub magnitudes: MagnitudeMethod,
    pub filter: Option<FilterSpec>,
    /// Grid size for `f_e`; `None` skips evaluation.
    pub grid: Option<usize>,
    /// Greedy window width; `None` means `max(1, (gamma - 1)/2)`.
    pub beta: Option<usize>,
    pub policy: EdgePolicy,
    pub route: CompactRoute,
    pub solver: SolverConfig,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        Self {
            magnitudes: MagnitudeMethod::Diagonal,
            filter: None,
            grid: None,
            beta: None,
            policy: EdgePolicy::Lenient,
            route: CompactRoute::Primary,
            solver: SolverConfig::default(),
        }
    }
}

fn synchronize(dec: Deconvolved, s: usize, gamma: usize, opts: &RecoverOptions) -> Result<ReconstructionResult> {
    let band = &dec.band;
    let d = band.d();
    let mags = match opts.magnitudes {
        MagnitudeMethod::Diagonal => magnitudes(band),
        MagnitudeMethod::Eigen { iters } => eigen_magnitudes(band, iters),
    };
    let window = centered_range(s).map_err(|e| e.at("magnitudes"))?;
    let gamma = gamma.min(band.gamma());
    let beta = opts.beta.unwrap_or(((gamma - 1) / 2).max(1)).min(gamma - 1);
    let ph = phases_window(band, &mags, &window, gamma, beta, opts.policy).map_err(|e| e.at("phases"))?;
    let mut coeffs = CenteredVector::zeros(window.len());
    let mut undetermined = 0;
    for (n, p) in ph {
        match p {
            Some(p) => coeffs.set(n, C64::from_polar(mags[slot(n, d)], p)),
            None => undetermined += 1,
        }
    }
    if let Some(f) = &opts.filter {
        coeffs = lowpass(&coeffs, f);
    }
    let diagnostics = Diagnostics {
        mu: Some(dec.mu),
        sigma_min: dec.sigma_min,
        calibration_residual: Some(dec.calibration_residual),
        gamma,
        undetermined,
        warning: dec.warning,
        residuals: Vec::new(),
    };
    Ok(ReconstructionResult::from_coeffs(coeffs, opts.grid, diagnostics))
}

fn check_measurements(y: &MeasurementSet, d: usize, k: usize, l: usize) -> Result<()> {
    let g = y.geometry;
    if (g.d, g.k, g.l) != (d, k, l) {
        return Err(Error::Geometry(format!(
            "measurements are d={}, K={}, L={} but the recovery expects d={d}, K={k}, L={l}",
            g.d, g.k, g.l
        )));
    }
    Ok(())
}

/// Trig-mask pipeline: deconvolve, magnitudes, greedy phases, filter, assemble.
pub fn recover_trig(
    y: &MeasurementSet,
    mask: &MaskSpec,
    geom: &DeconvGeometryTrig,
    opts: &RecoverOptions,
) -> Result<ReconstructionResult> {
    check_measurements(y, geom.d, geom.d, geom.l).map_err(|e| e.at("geometry"))?;
    let z = mask.samples(geom.d);
    let cal = default_calibration(Route::FrequencySide).map_err(|e| e.at("calibration"))?;
    let dec = deconvolve_trig(&y.values, &z, geom, &cal).map_err(|e| e.at("deconvolution"))?;
    synchronize(dec, geom.s, geom.kappa, opts)
}

/// Compact-mask pipeline; `opts.route` picks the partial Fourier solve or the space-side route.
pub fn recover_compact(
    y: &MeasurementSet,
    mask: &MaskSpec,
    geom: &DeconvGeometryCompact,
    opts: &RecoverOptions,
) -> Result<ReconstructionResult> {
    check_measurements(y, geom.d, geom.k, geom.d).map_err(|e| e.at("geometry"))?;
    let z = mask.samples(geom.d);
    let dec = match opts.route {
        CompactRoute::Primary => {
            let cal = default_calibration(Route::FrequencySide).map_err(|e| e.at("calibration"))?;
            deconvolve_compact(&y.values, &z, geom, &cal, &opts.solver)
        }
        CompactRoute::Alternate => {
            let cal = default_calibration(Route::SpaceSide).map_err(|e| e.at("calibration"))?;
            deconvolve_compact_alt(&y.values, &z, geom, &cal)
        }
    }
    .map_err(|e| e.at("deconvolution"))?;
    synchronize(dec, geom.s, 2 * geom.s - 1, opts)
}

/// `||e^{i theta} fhat - c||_2` over the common index range, minimized over `theta`.
pub fn coefficient_error(truth: &CenteredVector, est: &CenteredVector) -> f64 {
    let h = half(truth.len().max(est.len()));
    let t: Vec<C64> = (-h..=h).map(|n| if n.abs() <= truth.half() { truth.get(n) } else { C64::new(0.0, 0.0) }).collect();
    let e: Vec<C64> = (-h..=h).map(|n| if n.abs() <= est.half() { est.get(n) } else { C64::new(0.0, 0.0) }).collect();
    let ip: C64 = t.iter().zip(&e).map(|(a, b)| b.conj() * a).sum();
    let rot = C64::from_polar(1.0, if ip.norm() > 0.0 { ip.arg() } else { 0.0 });
    t.iter().zip(&e).map(|(a, b)| (a - rot * b).norm_sqr()).sum::<f64>().sqrt()
}
