use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use specinv::experiments::{
    compact_instance, median, mu1_table, mu2_table, noisy, quantile, recover_compact_method, recover_trig_method,
    trig_instance, CompactSetup, Method, TrialOutcome, TrigSetup,
};
use specinv::measure::MeasurementSet;
use specinv::recon::{align_phase, aligned_error_db, evaluate_grid, signal_on_grid, ReconstructionResult, ERROR_GRID};
use specinv::spectral::C64;
use specinv::rng::stream;
use specinv::signals::{make_compact_mask, make_trig_mask, MaskSpec, TestFunction};

use crate::config::{ExperimentConfig, ExperimentKind, MaskKind};
use crate::plot;
use crate::validate::validate;

/// Geometry columns shared by the per-trial and aggregate tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Geo {
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub rho_or_delta: usize,
    pub kappa: usize,
    pub s: usize,
}

impl Geo {
    pub fn trig(t: &TrigSetup, s: usize) -> Self {
        Geo { d: t.d, k: t.d, l: t.l(), rho_or_delta: t.rho, kappa: t.kappa, s }
    }

    pub fn compact(c: &CompactSetup) -> Self {
        Geo { d: c.d, k: c.k, l: c.d, rho_or_delta: c.delta, kappa: c.k - c.delta, s: c.s }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub experiment: String,
    pub trial: u64,
    pub method: String,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub rho_or_delta: usize,
    pub kappa: usize,
    pub s: usize,
    pub snr_db: f64,
    pub error_db: f64,
    pub mu: Option<f64>,
    pub sigma_min: Option<f64>,
    pub calibration_residual: Option<f64>,
    pub runtime_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub method: String,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub rho_or_delta: usize,
    pub kappa: usize,
    pub s: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub error_db_median: f64,
    pub error_db_mean: f64,
    pub error_db_q25: f64,
    pub error_db_q75: f64,
    pub runtime_s_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuRow {
    pub d: usize,
    pub param: usize,
    pub trials: usize,
    pub mu_mean: f64,
    pub mu_min: f64,
}

#[derive(Serialize)]
struct TrialSeeds {
    trial: u64,
    signal: u64,
    mask: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    master_seed: u64,
    config: String,
    outputs: Vec<String>,
    trials: Vec<TrialSeeds>,
    diagnostics: &'a [TrialRow],
}

/// Output files written by a run, relative to the output directory.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.dir.join(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.write(name, bytes)
    }
}

pub fn check(cfg: &ExperimentConfig) -> Result<()> {
    let rep = validate(cfg);
    if !rep.pass {
        let lines: Vec<String> = rep.failures().map(|r| format!("  {}: {}", r.rule, r.detail)).collect();
        bail!("invalid configuration:\n{}", lines.join("\n"));
    }
    Ok(())
}

fn row(cfg: &ExperimentConfig, trial: u64, geo: Geo, o: &TrialOutcome) -> TrialRow {
    TrialRow {
        experiment: cfg.experiment.name().into(),
        trial,
        method: o.method.name(),
        d: geo.d,
        k: geo.k,
        l: geo.l,
        rho_or_delta: geo.rho_or_delta,
        kappa: geo.kappa,
        s: geo.s,
        snr_db: o.snr_db,
        error_db: o.error_db,
        mu: o.mu,
        sigma_min: o.sigma_min,
        calibration_residual: o.calibration_residual,
        runtime_s: cfg.timing().then_some(o.runtime_s),
    }
}

/// Groups by (geometry, snr, method) in first-seen order and summarizes.
pub fn aggregate(rows: &[TrialRow]) -> Vec<AggregateRow> {
    let mut order: Vec<(Geo, u64, String)> = Vec::new();
    let mut groups: BTreeMap<(Geo, u64, String), Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        let geo = Geo { d: r.d, k: r.k, l: r.l, rho_or_delta: r.rho_or_delta, kappa: r.kappa, s: r.s };
        let key = (geo, r.snr_db.to_bits(), r.method.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let errs: Vec<f64> = g.iter().map(|r| r.error_db).collect();
            let times: Vec<f64> = g.iter().filter_map(|r| r.runtime_s).collect();
            let first = g[0];
            AggregateRow {
                experiment: first.experiment.clone(),
                method: first.method.clone(),
                d: first.d,
                k: first.k,
                l: first.l,
                rho_or_delta: first.rho_or_delta,
                kappa: first.kappa,
                s: first.s,
                snr_db: first.snr_db,
                trials: g.len(),
                error_db_median: median(&errs),
                error_db_mean: errs.iter().sum::<f64>() / errs.len() as f64,
                error_db_q25: quantile(&errs, 0.25),
                error_db_q75: quantile(&errs, 0.75),
                runtime_s_mean: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
            }
        })
        .collect()
}

/// Per trial: every (snr, method) reconstruction with its outcome.
type TrialResults = Vec<(u64, Vec<(ReconstructionResult, TrialOutcome)>)>;

enum Instance {
    Trig(TrigSetup),
    Compact(CompactSetup),
}

impl Instance {
    fn geo(&self, cfg: &ExperimentConfig) -> Geo {
        match self {
            Instance::Trig(t) => Geo::trig(t, cfg.geometry.s.unwrap_or(t.d).min(t.d)),
            Instance::Compact(c) => Geo::compact(c),
        }
    }

    fn build(&self, seed: u64, trial: u64) -> Result<(TestFunction, MaskSpec, MeasurementSet)> {
        Ok(match self {
            Instance::Trig(t) => trig_instance(t, seed, trial)?,
            Instance::Compact(c) => compact_instance(c, seed, trial)?,
        })
    }

    fn mask(&self, seed: u64, trial: u64) -> Result<MaskSpec> {
        let s = stream(seed, trial, "mask");
        Ok(match self {
            Instance::Trig(t) => make_trig_mask(t.rho, t.style, s)?,
            Instance::Compact(c) => make_compact_mask(c.geometry()?.b, c.mask_rho, s)?,
        })
    }

    fn recover(&self, y: &MeasurementSet, mask: &MaskSpec, m: Method, snr: f64) -> Result<ReconstructionResult> {
        Ok(match self {
            Instance::Trig(t) => recover_trig_method(t, y, mask, m, snr)?,
            Instance::Compact(c) => recover_compact_method(c, y, mask, m, snr)?,
        })
    }
}

/// Runs every trial of one geometry; results come back ordered by trial.
fn run_instance(cfg: &ExperimentConfig, inst: &Instance, methods: &[Method]) -> Result<TrialResults> {
    let one = |t: u64| -> Result<(u64, Vec<(ReconstructionResult, TrialOutcome)>)> {
        let (f, mask, clean) = inst.build(cfg.seed, t)?;
        let mut out = Vec::new();
        for &snr in &cfg.snr_db {
            let y = noisy(&clean, snr, cfg.seed, t)?;
            for &m in methods {
                let start = Instant::now();
                let r = inst.recover(&y, &mask, m, snr)?;
                let secs = start.elapsed().as_secs_f64();
                let o = TrialOutcome {
                    snr_db: snr,
                    method: m,
                    error_db: aligned_error_db(&f, &r.coeffs)?,
                    runtime_s: secs,
                    mu: r.diagnostics.mu,
                    sigma_min: r.diagnostics.sigma_min,
                    calibration_residual: r.diagnostics.calibration_residual,
                };
                out.push((r, o));
            }
        }
        Ok((t, out))
    };
    let trials = 0..cfg.trials as u64;
    if cfg.timing() {
        trials.map(one).collect()
    } else {
        trials.into_par_iter().map(one).collect()
    }
}

fn instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    Ok(match (cfg.experiment, cfg.geometry.mask) {
        (ExperimentKind::Convergence | ExperimentKind::Runtime, _) => cfg
            .sweep
            .ds
            .iter()
            .map(|&d| cfg.trig_setup_for_d(d).map(Instance::Trig))
            .collect::<Result<_>>()?,
        (ExperimentKind::ShiftSweep, MaskKind::Trig) if !cfg.sweep.kappas.is_empty() => {
            let (rho, _) = cfg.rho_kappa()?;
            cfg.sweep
                .kappas
                .iter()
                .map(|&k| cfg.trig_setup_with(cfg.geometry.d, rho, k).map(Instance::Trig))
                .collect::<Result<_>>()?
        }
        (_, MaskKind::Trig) => vec![Instance::Trig(cfg.trig_setup()?)],
        (_, MaskKind::Compact) => vec![Instance::Compact(cfg.compact_setup()?)],
    })
}

fn seeds(cfg: &ExperimentConfig) -> Vec<TrialSeeds> {
    (0..cfg.trials as u64)
        .map(|t| TrialSeeds { trial: t, signal: stream(cfg.seed, t, "signal"), mask: stream(cfg.seed, t, "mask") })
        .collect()
}

fn finish(cfg: &ExperimentConfig, art: &mut Artifacts, rows: &[TrialRow]) -> Result<()> {
    let mut outputs = art.files.clone();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: "specinv",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.experiment.name(),
        master_seed: cfg.seed,
        config: cfg.to_toml(),
        outputs,
        trials: seeds(cfg),
        diagnostics: rows,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    art.write("manifest.json", json + "\n")
}

/// Runs a recovery or sweep experiment and writes its artifacts into `dir`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Artifacts> {
    check(cfg)?;
    if cfg.experiment == ExperimentKind::MuTable {
        return run_mu_table(cfg, dir);
    }
    let methods = cfg.methods()?;
    let mut art = Artifacts::new(dir)?;
    let mut rows = Vec::new();
    for inst in instances(cfg)? {
        let geo = inst.geo(cfg);
        let results = match (&inst, cfg.experiment) {
            (Instance::Trig(t), ExperimentKind::Runtime) => runtime_trials(cfg, t, &methods)?,
            _ => run_instance(cfg, &inst, &methods)?,
        };
        for (t, outs) in &results {
            for (_, o) in outs {
                rows.push(row(cfg, *t, geo, o));
            }
        }
        match cfg.experiment {
            ExperimentKind::Recover => {
                for (t, outs) in &results {
                    for (r, o) in outs {
                        let tag = format!("t{t}_{}_snr{}", o.method.name(), o.snr_db);
                        art.write(&format!("coefficients_{tag}.csv"), r.coefficients_csv())?;
                    }
                }
            }
            ExperimentKind::Convergence => {
                if let Some((t, outs)) = results.first() {
                    let (f, _, _) = inst.build(cfg.seed, *t)?;
                    if let Some((r, _)) = outs.first() {
                        art.write(&format!("reconstruction_d{}.csv", geo.d), grid_with_truth(&f, r))?;
                    }
                }
            }
            _ => {}
        }
    }
    art.write_csv("trials.csv", &rows)?;
    let agg = aggregate(&rows);
    art.write_csv("aggregate.csv", &agg)?;
    if cfg.plots {
        if let Some(kind) = plot::PlotKind::for_experiment(cfg.experiment) {
            let svg = plot::render(&agg, kind)?;
            art.write(&format!("{}.svg", kind.name()), svg)?;
        }
    }
    finish(cfg, &mut art, &rows)?;
    Ok(art)
}

fn grid_with_truth(f: &TestFunction, r: &ReconstructionResult) -> String {
    let fe = evaluate_grid(&r.coeffs, ERROR_GRID);
    let fv = signal_on_grid(f, ERROR_GRID);
    let a = align_phase(&fv, &fe.iter().map(|(_, v)| *v).collect::<Vec<_>>());
    let rot = a.map(|a| C64::from_polar(1.0, a.theta)).unwrap_or(C64::new(1.0, 0.0));
    let mut s = String::from("x,re_fe,im_fe,re_f,im_f\n");
    for ((x, e), v) in fe.iter().zip(&fv) {
        let e = e * rot;
        s += &format!("{x},{},{},{},{}\n", e.re, e.im, v.re, v.im);
    }
    s
}

/// Sequential timed trials: one warm-up, then the median of `reps` runs.
fn runtime_trials(cfg: &ExperimentConfig, t: &TrigSetup, methods: &[Method]) -> Result<TrialResults> {
    let reps = cfg.sweep.reps.unwrap_or(5).max(1);
    let mut all = Vec::new();
    for trial in 0..cfg.trials as u64 {
        let (f, mask, clean) = trig_instance(t, cfg.seed, trial)?;
        let mut out = Vec::new();
        for &snr in &cfg.snr_db {
            let y = noisy(&clean, snr, cfg.seed, trial)?;
            for &m in methods {
                let mut r = recover_trig_method(t, &y, &mask, m, snr)?;
                let mut times = Vec::with_capacity(reps);
                for _ in 0..reps {
                    let start = Instant::now();
                    r = recover_trig_method(t, &y, &mask, m, snr)?;
                    times.push(start.elapsed().as_secs_f64());
                }
                let o = TrialOutcome {
                    snr_db: snr,
                    method: m,
                    error_db: aligned_error_db(&f, &r.coeffs)?,
                    runtime_s: median(&times),
                    mu: r.diagnostics.mu,
                    sigma_min: r.diagnostics.sigma_min,
                    calibration_residual: r.diagnostics.calibration_residual,
                };
                out.push((r, o));
            }
        }
        all.push((trial, out));
    }
    Ok(all)
}

pub fn run_mu_table(cfg: &ExperimentConfig, dir: &Path) -> Result<Artifacts> {
    check(cfg)?;
    let mut art = Artifacts::new(dir)?;
    let d = cfg.geometry.d;
    let rows: Vec<MuRow> = cfg
        .sweep
        .params
        .iter()
        .map(|&p| {
            let st = match cfg.geometry.mask {
                MaskKind::Trig => mu1_table(d, p, cfg.trials, cfg.seed)?,
                MaskKind::Compact => mu2_table(d, p, cfg.trials, cfg.seed)?,
            };
            Ok(MuRow { d, param: p, trials: cfg.trials, mu_mean: st.mean, mu_min: st.min })
        })
        .collect::<Result<_>>()?;
    art.write_csv("mu_table.csv", &rows)?;
    finish(cfg, &mut art, &[])?;
    Ok(art)
}

/// Writes one measurement CSV per trial (first SNR in the config).
pub fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<Artifacts> {
    check(cfg)?;
    let mut art = Artifacts::new(dir)?;
    let snr = cfg.snr_db.first().copied().unwrap_or(f64::INFINITY);
    for inst in instances(cfg)? {
        let geo = inst.geo(cfg);
        for t in 0..cfg.trials as u64 {
            let (_, _, clean) = inst.build(cfg.seed, t)?;
            let y = noisy(&clean, snr, cfg.seed, t)?;
            art.write(&format!("measurements_d{}_L{}_t{t}.csv", geo.d, geo.l), y.to_csv())?;
        }
    }
    finish(cfg, &mut art, &[])?;
    Ok(art)
}

/// Recovers from a saved measurement CSV using the trial-0 mask implied by the config.
pub fn recover_file(cfg: &ExperimentConfig, input: &Path, dir: &Path, grid: usize) -> Result<Artifacts> {
    check(cfg)?;
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let y = MeasurementSet::from_csv(&text)?;
    let inst = instances(cfg)?.into_iter().next().context("no geometry")?;
    let mask = inst.mask(cfg.seed, 0)?;
    let snr = y.snr_db.unwrap_or(f64::INFINITY);
    let mut art = Artifacts::new(dir)?;
    for m in cfg.methods()? {
        let r = inst.recover(&y, &mask, m, snr)?;
        let r = ReconstructionResult::from_coeffs(r.coeffs, Some(grid), r.diagnostics);
        art.write(&format!("coefficients_{}.csv", m.name()), r.coefficients_csv())?;
        art.write(&format!("grid_{}.csv", m.name()), r.grid_csv().unwrap_or_default())?;
    }
    finish(cfg, &mut art, &[])?;
    Ok(art)
}
