use std::f64::consts::PI;

use serde::Serialize;
use specinv::deconv::EPS_DIV;
use specinv::experiments::{CompactSetup, COMPACT_B};
use specinv::rng::stream;
use specinv::signals::{compact_delta, make_compact_mask, make_trig_mask, mu1, mu2};

use crate::config::{ExperimentConfig, ExperimentKind, MaskKind};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rule {
    pub rule: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub pass: bool,
    pub rules: Vec<Rule>,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| !r.ok)
    }
}

struct Rules(Vec<Rule>);

impl Rules {
    fn add(&mut self, rule: &str, ok: bool, detail: String) -> bool {
        self.0.push(Rule { rule: rule.into(), ok, detail });
        ok
    }
}

fn trig_rules(r: &mut Rules, d: usize, rho: usize, kappa: usize, s: usize, cfg: &ExperimentConfig) {
    let l = rho + kappa;
    let mut ok = r.add("d must be odd", d % 2 == 1, format!("d = {d}"));
    ok &= r.add("L must be odd", l % 2 == 1, format!("L = {l}"));
    ok &= r.add("L must not exceed d", l <= d, format!("L = {l}, d = {d}"));
    ok &= r.add("rho must be even", rho.is_multiple_of(2), format!("rho = {rho}"));
    ok &= r.add("rho + 1 must not exceed d", rho < d, format!("rho = {rho}, d = {d}"));
    ok &= r.add(
        "kappa = L - rho must satisfy 2 <= kappa <= rho",
        (2..=rho).contains(&kappa),
        format!("kappa = {kappa}, rho = {rho}"),
    );
    ok &= r.add("s must be odd and at most d", s % 2 == 1 && s <= d, format!("s = {s}"));
    if ok {
        match make_trig_mask(rho, cfg.style(), stream(cfg.seed, 0, "mask")).and_then(|m| mu1(&m.samples(d), kappa)) {
            Ok(rep) => {
                r.add("mask admissible (mu1 above floor)", rep.mu > EPS_DIV, format!("mu1 = {:.3e} (trial 0 mask)", rep.mu));
            }
            Err(e) => {
                r.add("mask admissible (mu1 above floor)", false, e.to_string());
            }
        }
    }
}

fn compact_rules(r: &mut Rules, setup: &CompactSetup, seed: u64) {
    let (d, k, delta, s) = (setup.d, setup.k, setup.delta, setup.s);
    let kappa = k.saturating_sub(delta);
    let mut ok = r.add("d must be odd", d % 2 == 1, format!("d = {d}"));
    ok &= r.add("K must divide d", k > 0 && d % k == 0, format!("K = {k}, d = {d}"));
    ok &= r.add(
        "kappa = K - delta must satisfy 2 <= kappa <= delta",
        (2..=delta).contains(&kappa),
        format!("kappa = {kappa}, delta = {delta}"),
    );
    ok &= r.add("s must satisfy s <= 2 kappa - 1", s < 2 * kappa, format!("s = {s}, kappa = {kappa}"));
    ok &= r.add("2 s - 1 must not exceed d", 2 * s <= d + 1, format!("s = {s}, d = {d}"));
    let b = PI * (delta as f64 + 0.5) / d as f64;
    ok &= r.add("delta = floor(b d / pi)", compact_delta(b, d) == delta, format!("b = {b:.4}"));
    let a = setup.support();
    ok &= r.add("a + b <= pi", a + COMPACT_B <= PI && a + b <= PI, format!("a = {a:.4}, b = {:.4}", b.max(COMPACT_B)));
    if ok {
        let rep = make_compact_mask(b, setup.mask_rho, stream(seed, 0, "mask")).and_then(|m| mu2(&m.samples(d), kappa, s));
        match rep {
            Ok(rep) => {
                r.add("mask admissible (mu2 above floor)", rep.mu > EPS_DIV, format!("mu2 = {:.3e} (trial 0 mask)", rep.mu));
            }
            Err(e) => {
                r.add("mask admissible (mu2 above floor)", false, e.to_string());
            }
        }
    }
}

/// Geometry, support and admissibility checks; never errors, failures are listed.
pub fn validate(cfg: &ExperimentConfig) -> Report {
    let mut r = Rules(Vec::new());
    if let Err(e) = cfg.methods() {
        r.add("methods must be known", false, e.to_string());
    }
    r.add(
        "snr_db entries must be finite or inf",
        cfg.snr_db.iter().all(|s| s.is_finite() || *s == f64::INFINITY),
        format!("{:?}", cfg.snr_db),
    );
    match (cfg.experiment, cfg.geometry.mask) {
        (ExperimentKind::Convergence | ExperimentKind::Runtime, _) => {
            r.add("sweep.ds must be nonempty", !cfg.sweep.ds.is_empty(), format!("{:?}", cfg.sweep.ds));
            for &d in &cfg.sweep.ds {
                let ok = r.add("swept d must be odd and at least 9", d % 2 == 1 && d >= 9, format!("d = {d}"));
                if ok {
                    if let Ok(setup) = cfg.trig_setup_for_d(d) {
                        trig_rules(&mut r, d, setup.rho, setup.kappa, d, cfg);
                    } else {
                        r.add("swept geometry must be valid", false, format!("d = {d}"));
                    }
                }
            }
        }
        (ExperimentKind::MuTable, kind) => {
            r.add("sweep.params must be nonempty", !cfg.sweep.params.is_empty(), format!("{:?}", cfg.sweep.params));
            let d = cfg.geometry.d;
            r.add("d must be odd", d % 2 == 1, format!("d = {d}"));
            for &p in &cfg.sweep.params {
                match kind {
                    MaskKind::Trig => r.add("rho must be even with 4 <= rho < d", p % 2 == 0 && p >= 4 && p < d, format!("rho = {p}")),
                    MaskKind::Compact => r.add("kappa must satisfy 2 <= kappa, 2 kappa - 1 <= d", p >= 2 && 2 * p <= d + 1, format!("kappa = {p}")),
                };
            }
        }
        (_, MaskKind::Trig) => match cfg.rho_kappa() {
            Ok((rho, kappa)) => {
                let kappas = if cfg.experiment == ExperimentKind::ShiftSweep && !cfg.sweep.kappas.is_empty() {
                    cfg.sweep.kappas.clone()
                } else {
                    vec![kappa]
                };
                for k in kappas {
                    trig_rules(&mut r, cfg.geometry.d, rho, k, cfg.geometry.s.unwrap_or(cfg.geometry.d), cfg);
                }
            }
            Err(e) => {
                r.add("trig geometry must be complete", false, e.to_string());
            }
        },
        (_, MaskKind::Compact) => {
            let g = &cfg.geometry;
            match g.delta {
                Some(delta) => {
                    let kappa = g.kappa.or(g.k.map(|k| k.saturating_sub(delta))).unwrap_or(delta.saturating_sub(1));
                    let s = g.s.unwrap_or(kappa.saturating_sub(2) | 1);
                    let mut setup = CompactSetup::new(g.d, delta, kappa, s);
                    if let Some(k) = g.k {
                        setup.k = k;
                    }
                    compact_rules(&mut r, &setup, cfg.seed);
                }
                None => {
                    r.add("compact geometry needs delta", false, "geometry.delta missing".into());
                }
            }
        }
    }
    let pass = r.0.iter().all(|x| x.ok);
    Report { pass, rules: r.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trig(d: usize, l: usize, rho: usize) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "experiment = \"recover\"\n[geometry]\nmask = \"trig\"\nd = {d}\nl = {l}\nrho = {rho}\nmask_style = \"structured\"\n"
        ))
        .unwrap()
    }

    #[test]
    fn trig_examples() {
        let ok = validate(&trig(21, 7, 4));
        assert!(ok.pass, "{ok:?}");
        let bad = validate(&trig(21, 7, 6));
        assert!(!bad.pass);
        assert!(bad.failures().any(|r| r.rule.starts_with("kappa = L - rho")));
        let even = validate(&trig(20, 8, 4));
        let names: Vec<_> = even.failures().map(|r| r.rule.as_str()).collect();
        assert!(names.contains(&"d must be odd") && names.contains(&"L must be odd"));
    }

    #[test]
    fn compact_example() {
        let cfg = ExperimentConfig::parse(
            "experiment = \"recover\"\n[geometry]\nmask = \"compact\"\nd = 189\ndelta = 32\nkappa = 31\ns = 29\n",
        )
        .unwrap();
        let rep = validate(&cfg);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.rules.iter().any(|r| r.rule == "a + b <= pi" && r.ok));
        let bad = ExperimentConfig::parse(
            "experiment = \"recover\"\n[geometry]\nmask = \"compact\"\nd = 189\ndelta = 32\nk = 64\ns = 29\n",
        )
        .unwrap();
        assert!(validate(&bad).failures().any(|r| r.rule == "K must divide d"));
    }
}
