use std::collections::BTreeMap;
use std::fmt::Write;

use anyhow::{bail, Result};
use serde::Serialize;
use specinv::experiments::loglog_slope;

use crate::config::ExperimentKind;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Noise,
    Shift,
    Convergence,
    Runtime,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "noise" => PlotKind::Noise,
            "shift" => PlotKind::Shift,
            "convergence" => PlotKind::Convergence,
            "runtime" => PlotKind::Runtime,
            _ => bail!("unknown plot kind {s:?} (noise, shift, convergence, runtime)"),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PlotKind::Noise => "noise",
            PlotKind::Shift => "shift",
            PlotKind::Convergence => "convergence",
            PlotKind::Runtime => "runtime",
        }
    }

    pub fn for_experiment(k: ExperimentKind) -> Option<Self> {
        match k {
            ExperimentKind::NoiseSweep => Some(PlotKind::Noise),
            ExperimentKind::ShiftSweep => Some(PlotKind::Shift),
            ExperimentKind::Convergence => Some(PlotKind::Convergence),
            ExperimentKind::Runtime => Some(PlotKind::Runtime),
            _ => None,
        }
    }

    /// (x column, y column, x label, y label).
    fn columns(&self) -> (&'static str, &'static str, &'static str, &'static str) {
        match self {
            PlotKind::Noise => ("snr_db", "error_db_median", "SNR (dB)", "median error (dB)"),
            PlotKind::Shift => ("L", "error_db_median", "L", "median error (dB)"),
            PlotKind::Convergence => ("d", "error_db_median", "d", "median error (dB)"),
            PlotKind::Runtime => ("d", "runtime_s_mean", "d L", "runtime (s)"),
        }
    }

    fn log(&self) -> bool {
        *self == PlotKind::Runtime
    }
}

/// Renders aggregate rows; same code path as reading them back from CSV.
pub fn render<T: Serialize>(rows: &[T], kind: PlotKind) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    render_csv(&String::from_utf8(bytes)?, kind)
}

fn series(text: &str, kind: PlotKind) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers()?.clone();
    let (xc, yc, _, _) = kind.columns();
    let mut need = vec!["method", xc, yc];
    if kind == PlotKind::Runtime {
        need.push("L");
    }
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<&str> = need.iter().copied().filter(|c| idx(c).is_none()).collect();
    if !missing.is_empty() {
        bail!("schema error: {} plot needs columns {:?}, missing {:?}", kind.name(), need, missing);
    }
    let (im, ix, iy, il) = (idx("method").unwrap(), idx(xc).unwrap(), idx(yc).unwrap(), idx("L"));
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            match s.parse::<f64>() {
                Ok(v) => Ok(Some(v)),
                Err(_) => bail!("schema error: non-numeric value {s:?}"),
            }
        };
        let (Some(mut x), Some(y)) = (num(ix)?, num(iy)?) else { continue };
        if kind == PlotKind::Runtime {
            x *= il.and_then(|i| num(i).ok().flatten()).unwrap_or(1.0);
        }
        if !x.is_finite() || !y.is_finite() || (kind.log() && (x <= 0.0 || y <= 0.0)) {
            continue;
        }
        out.entry(rec.get(im).unwrap_or("").to_string()).or_default().push((x, y));
    }
    if out.is_empty() {
        bail!("schema error: no plottable rows for a {} plot", kind.name());
    }
    for pts in out.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if hi - lo < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Standalone SVG line plot of an aggregate CSV.
pub fn render_csv(text: &str, kind: PlotKind) -> Result<String> {
    let data = series(text, kind)?;
    let tf = |v: f64| if kind.log() { v.log10() } else { v };
    let (x0, x1) = range(data.values().flatten().map(|p| tf(p.0)));
    let (y0, y1) = range(data.values().flatten().map(|p| tf(p.1)));
    let px = |x: f64| MARGIN + (tf(x) - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (tf(y) - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let (_, _, xl, yl) = kind.columns();

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#)?;
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#)?;
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    )?;
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (xs, ys) = (MARGIN + f * (W - 2.0 * MARGIN), H - MARGIN - f * (H - 2.0 * MARGIN));
        let lab = |v: f64| if kind.log() { format!("1e{v:.1}") } else { format!("{v:.3}") };
        writeln!(s, r#"<text x="{xs:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, H - MARGIN + 16.0, lab(xv))?;
        writeln!(s, r#"<text x="{:.1}" y="{ys:.1}" text-anchor="end">{}</text>"#, MARGIN - 4.0, lab(yv))?;
    }
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xl}</text>"#, W / 2.0, H - 16.0)?;
    writeln!(s, r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{yl}</text>"#, H / 2.0, H / 2.0)?;
    for (i, (name, pts)) in data.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, path.join(" "))?;
        for &(x, y) in pts {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, px(x), py(y))?;
        }
        let mut label = name.clone();
        if kind.log() && pts.len() >= 2 {
            write!(label, " (slope {:.2})", loglog_slope(pts))?;
        }
        writeln!(s, r#"<text x="{:.1}" y="{:.1}" fill="{c}">{}</text>"#, MARGIN + 8.0, MARGIN + 16.0 * (i as f64 + 1.0), escape(&label))?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_columns_are_schema_errors() {
        let e = render_csv("method,snr_db\nalg1,10\n", PlotKind::Noise).unwrap_err();
        assert!(e.to_string().contains("error_db_median"), "{e}");
        assert!(render_csv("", PlotKind::Noise).is_err());
        assert!(render_csv("method,snr_db,error_db_median\n", PlotKind::Noise).is_err());
    }

    #[test]
    fn renders_series() {
        let svg = render_csv("method,d,L,runtime_s_mean\na,9,3,0.001\na,99,15,0.1\n", PlotKind::Runtime).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("slope"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
