//! Angular synchronization on a banded autocorrelation.
//!
//! Magnitudes come from the diagonal. Phases are telescoped along greedy
//! paths (one spine per direction from the largest coefficient, so every
//! target costs one closing hop).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spectral::{centered_range, half, slot, BandedAutocorrelation, CenteredIndexSet, C64};

/// Edge entries below this fraction of the largest diagonal entry have no usable argument.
pub const EDGE_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgePolicy {
    /// Fail on the first undefined edge.
    Strict,
    /// Mark every coefficient whose path crosses an undefined edge as unknown.
    Lenient,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyncPath {
    pub target: i64,
    /// `n_0, ..., n_b` with `n_0` the argmax and `n_b = target`.
    pub nodes: Vec<i64>,
}

impl SyncPath {
    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientEstimate {
    pub index: i64,
    pub magnitude: f64,
    /// In `(-pi, pi]`.
    pub phase: f64,
}

impl CoefficientEstimate {
    pub fn value(&self) -> C64 {
        C64::from_polar(self.magnitude, self.phase)
    }
}

/// Wraps into `(-pi, pi]`.
pub fn wrap_phase(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `a_n = sqrt(|A_{n,n}|)` for every `n` in `[d]_c`, stored by slot.
pub fn magnitudes(a: &BandedAutocorrelation) -> Vec<f64> {
    let d = a.d();
    let h = half(d);
    (-h..=h).map(|n| a.diag(n).norm().sqrt()).collect()
}

/// `magnitudes` restricted to a window, as `(n, a_n)`.
pub fn magnitudes_on(a: &BandedAutocorrelation, window: &CenteredIndexSet) -> Vec<(i64, f64)> {
    window.iter().map(|n| (n, a.diag(n).norm().sqrt())).collect()
}

/// Magnitudes from the top eigenvector of the banded matrix by power
/// iteration, scaled so `sum a_n^2` equals the trace. Falls back to the
/// diagonal when the iteration does not settle.
pub fn eigen_magnitudes(a: &BandedAutocorrelation, iters: usize) -> Vec<f64> {
    let d = a.d();
    let h = half(d);
    let g = a.gamma() as i64;
    let diag = magnitudes(a);
    let trace: f64 = (-h..=h).map(|n| a.diag(n).re).sum();
    if !(trace > 0.0) {
        return diag;
    }
    let matvec = |v: &[C64]| -> Vec<C64> {
        (-h..=h)
            .map(|i| {
                ((i - g + 1).max(-h)..=(i + g - 1).min(h))
                    .map(|j| a.get(i, j) * v[slot(j, d)])
                    .sum()
            })
            .collect()
    };
    let norm = |v: &[C64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let n0 = norm(&diag.iter().map(|&m| C64::new(m, 0.0)).collect::<Vec<_>>());
    let mut v: Vec<C64> = diag.iter().map(|&m| C64::new(m / n0, 0.0)).collect();
    let mut change = f64::INFINITY;
    for _ in 0..iters {
        let w = matvec(&v);
        let nw = norm(&w);
        if !(nw > 0.0) {
            return diag;
        }
        let next: Vec<C64> = w.iter().map(|c| c / nw).collect();
        change = v.iter().zip(&next).map(|(a, b)| (a.norm() - b.norm()).powi(2)).sum::<f64>().sqrt();
        v = next;
        if change < 1e-12 {
            break;
        }
    }
    if !(change < 1e-6) {
        return diag;
    }
    let s = trace.sqrt();
    v.iter().map(|c| c.norm() * s).collect()
}

/// Largest magnitude, ties to the smallest index.
pub fn argmax(window: &CenteredIndexSet, mag: impl Fn(i64) -> f64) -> i64 {
    let mut best = (window.lo(), f64::NEG_INFINITY);
    for n in window.iter() {
        let m = mag(n);
        if m > best.1 {
            best = (n, m);
        }
    }
    best.0
}

fn argmax_range(lo: i64, hi: i64, mag: &impl Fn(i64) -> f64) -> Option<i64> {
    let mut best: Option<(i64, f64)> = None;
    for m in lo..=hi {
        let v = mag(m);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((m, v));
        }
    }
    best.map(|b| b.0)
}

fn check_params(gamma: usize, beta: usize) -> Result<()> {
    if gamma < 2 || beta < 1 || beta > gamma - 1 {
        return Err(Error::Config(format!("need gamma >= 2 and 1 <= beta <= gamma - 1, got {gamma}, {beta}")));
    }
    Ok(())
}

/// Spine from `start` toward `end` (inclusive bound): ascent takes the
/// argmax over `[n_b + gamma - beta, n_b + gamma)`, descent over
/// `(n_b - gamma, n_b - gamma + beta]`. Stops once `end` is within `gamma - 1`.
fn spine(start: i64, end: i64, gamma: i64, beta: i64, mag: &impl Fn(i64) -> f64) -> Result<Vec<i64>> {
    let mut nodes = vec![start];
    let up = end >= start;
    loop {
        let nb = *nodes.last().unwrap();
        if (end - nb).abs() < gamma {
            return Ok(nodes);
        }
        let next = if up {
            argmax_range(nb + gamma - beta, nb + gamma - 1, mag)
        } else {
            argmax_range(nb - gamma + 1, nb - gamma + beta, mag)
        };
        nodes.push(next.ok_or(Error::EmptyWindow { from: nb })?);
    }
}

/// Greedy path from the argmax of `mag` over `window` to `n`.
pub fn greedy_path(
    window: &CenteredIndexSet,
    mag: impl Fn(i64) -> f64,
    n: i64,
    gamma: usize,
    beta: usize,
) -> Result<SyncPath> {
    check_params(gamma, beta)?;
    if !window.contains(n) {
        return Err(Error::Config(format!("target {n} outside the window")));
    }
    let n0 = argmax(window, &mag);
    let mut nodes = spine(n0, n, gamma as i64, beta as i64, &mag)?;
    if *nodes.last().unwrap() != n {
        nodes.push(n);
    }
    Ok(SyncPath { target: n, nodes })
}

/// Telescoped phase `sum arg(A_{n_{l+1}, n_l})` along one path.
pub fn path_phase(a: &BandedAutocorrelation, path: &SyncPath) -> Result<f64> {
    let floor = edge_floor(a);
    let mut acc = 0.0;
    for w in path.nodes.windows(2) {
        let e = a.get(w[1], w[0]);
        if !a.in_band(w[1], w[0]) || e.norm() < floor {
            return Err(Error::UndefinedArgument(w[1], w[0]));
        }
        acc += e.arg();
    }
    Ok(wrap_phase(acc))
}

/// Phases for explicit paths.
pub fn phases(a: &BandedAutocorrelation, paths: &[SyncPath]) -> Result<Vec<(i64, f64)>> {
    paths.iter().map(|p| Ok((p.target, path_phase(a, p)?))).collect()
}

fn edge_floor(a: &BandedAutocorrelation) -> f64 {
    let h = half(a.d());
    EDGE_FLOOR * (-h..=h).map(|n| a.diag(n).norm()).fold(0.0, f64::max)
}

/// Phases for every `n` in `[d]_c` (by slot) using shared spines; `None`
/// marks coefficients left undetermined under the lenient policy.
pub fn phases_all(
    a: &BandedAutocorrelation,
    mag: &[f64],
    gamma: usize,
    beta: usize,
    policy: EdgePolicy,
) -> Result<Vec<Option<f64>>> {
    let d = a.d();
    let h = half(d);
    phases_window(a, mag, &centered_range(d).expect("d >= 1"), gamma.min(a.gamma()), beta.min(gamma.min(a.gamma()) - 1).max(1), policy)
        .map(|v| {
            let mut out = vec![None; d];
            for (n, p) in v {
                out[slot(n, d)] = p;
            }
            debug_assert_eq!(out.len(), (2 * h + 1) as usize);
            out
        })
}

/// Phases over a window, `O(|window|)` after the spines are built.
pub fn phases_window(
    a: &BandedAutocorrelation,
    mag: &[f64],
    window: &CenteredIndexSet,
    gamma: usize,
    beta: usize,
    policy: EdgePolicy,
) -> Result<Vec<(i64, Option<f64>)>> {
    check_params(gamma, beta)?;
    let d = a.d();
    let magf = |n: i64| mag[slot(n, d)];
    let floor = edge_floor(a);
    let n0 = argmax(window, magf);
    let (g, b) = (gamma as i64, beta as i64);
    let edge = |i: i64, j: i64| -> Result<Option<f64>> {
        let e = a.get(i, j);
        if e.norm() < floor || !a.in_band(i, j) {
            match policy {
                EdgePolicy::Strict => Err(Error::UndefinedArgument(i, j)),
                EdgePolicy::Lenient => Ok(None),
            }
        } else {
            Ok(Some(e.arg()))
        }
    };
    let mut out = Vec::with_capacity(window.len());
    for (end, range) in [(window.hi(), (n0..=window.hi()).collect::<Vec<_>>()), (window.lo(), (window.lo()..n0).rev().collect())] {
        let sp = spine(n0, end, g, b, &magf)?;
        // cumulative phase at each spine node
        let mut cum: Vec<Option<f64>> = vec![Some(0.0)];
        for w in sp.windows(2) {
            let prev = *cum.last().unwrap();
            let next = match prev {
                Some(p) => edge(w[1], w[0])?.map(|e| p + e),
                None => None,
            };
            cum.push(next);
        }
        let mut k = 0;
        for n in range {
            while (n - sp[k]).abs() > g - 1 {
                k += 1;
            }
            let phase = if n == sp[k] {
                cum[k]
            } else {
                match cum[k] {
                    Some(p) => edge(n, sp[k])?.map(|e| p + e),
                    None => None,
                }
            };
            out.push((n, phase.map(wrap_phase)));
        }
    }
    out.sort_by_key(|(n, _)| *n);
    Ok(out)
}
