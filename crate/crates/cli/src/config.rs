use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use specinv::experiments::{rho_rule, CompactSetup, Method, TrigSetup};
use specinv::measure::QuadratureConfig;
use specinv::signals::MaskStyle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Recover,
    NoiseSweep,
    ShiftSweep,
    Convergence,
    MuTable,
    Runtime,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Recover => "recover",
            ExperimentKind::NoiseSweep => "noise-sweep",
            ExperimentKind::ShiftSweep => "shift-sweep",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::MuTable => "mu-table",
            ExperimentKind::Runtime => "runtime",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    Trig,
    Compact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleName {
    RandomGaussian,
    Structured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub mask: MaskKind,
    pub d: usize,
    /// Trig: `L`; defaults to `rho + kappa`.
    pub l: Option<usize>,
    pub rho: Option<usize>,
    pub kappa: Option<usize>,
    /// Compact: `K`; defaults to `delta + kappa`.
    pub k: Option<usize>,
    pub delta: Option<usize>,
    /// Coefficient window; defaults to `d` (trig) or `kappa - 1` (compact).
    pub s: Option<usize>,
    #[serde(default = "default_style")]
    pub mask_style: StyleName,
}

fn default_style() -> StyleName {
    StyleName::RandomGaussian
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// shift-sweep: values of `kappa` (so `L = rho + kappa`).
    #[serde(default)]
    pub kappas: Vec<usize>,
    /// convergence and runtime: values of `d`.
    #[serde(default)]
    pub ds: Vec<usize>,
    /// `c` in `rho = min((d - 5)/2, c floor(log2 d))`.
    pub rho_factor: Option<usize>,
    /// runtime: timed repetitions per trial (median is kept).
    pub reps: Option<usize>,
    /// mu-table: `rho` values (`mu1`) or `kappa` values (`mu2`).
    #[serde(default)]
    pub params: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub methods: Vec<String>,
    /// `inf` means noiseless.
    #[serde(default = "default_snrs")]
    pub snr_db: Vec<f64>,
    /// Write wall-clock columns; timings make reruns differ.
    pub record_timing: Option<bool>,
    #[serde(default = "default_true")]
    pub plots: bool,
    pub quadrature_nodes: Option<usize>,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> usize {
    10
}

fn default_snrs() -> Vec<f64> {
    vec![f64::INFINITY]
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        if cfg.trials == 0 {
            bail!("trials must be positive");
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn timing(&self) -> bool {
        self.record_timing.unwrap_or(self.experiment == ExperimentKind::Runtime)
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Ok(vec![match self.geometry.mask {
                MaskKind::Trig => Method::Alg1,
                MaskKind::Compact => Method::Alg2,
            }]);
        }
        self.methods.iter().map(|m| Method::parse(m).map_err(Into::into)).collect()
    }

    pub fn quad(&self) -> QuadratureConfig {
        match self.quadrature_nodes {
            Some(nodes) => QuadratureConfig { nodes },
            None => QuadratureConfig::default(),
        }
    }

    pub fn style(&self) -> MaskStyle {
        match self.geometry.mask_style {
            StyleName::RandomGaussian => MaskStyle::RandomGaussian,
            StyleName::Structured => MaskStyle::Structured,
        }
    }

    /// `(rho, kappa)` for the trig geometry, filling `kappa` from `L` when needed.
    pub fn rho_kappa(&self) -> Result<(usize, usize)> {
        let g = &self.geometry;
        let rho = g.rho.context("geometry.rho is required for trig masks")?;
        let kappa = match (g.kappa, g.l) {
            (Some(k), Some(l)) if l != rho + k => bail!("L = {l} but rho + kappa = {}", rho + k),
            (Some(k), _) => k,
            (None, Some(l)) if l > rho => l - rho,
            (None, Some(l)) => bail!("L = {l} must exceed rho = {rho}"),
            (None, None) => rho.saturating_sub(1),
        };
        Ok((rho, kappa))
    }

    pub fn trig_setup(&self) -> Result<TrigSetup> {
        let (rho, kappa) = self.rho_kappa()?;
        self.trig_setup_with(self.geometry.d, rho, kappa)
    }

    pub fn trig_setup_with(&self, d: usize, rho: usize, kappa: usize) -> Result<TrigSetup> {
        let mut setup = TrigSetup::new(d, rho, kappa);
        setup.style = self.style();
        setup.quad = self.quad();
        setup.geometry()?;
        Ok(setup)
    }

    /// Trig setup for a `d` swept with the `rho` rule (`kappa = rho - 1`).
    pub fn trig_setup_for_d(&self, d: usize) -> Result<TrigSetup> {
        let rho = rho_rule(d, self.sweep.rho_factor.unwrap_or(16));
        self.trig_setup_with(d, rho, rho - 1)
    }

    pub fn compact_setup(&self) -> Result<CompactSetup> {
        let g = &self.geometry;
        let delta = g.delta.context("geometry.delta is required for compact masks")?;
        let kappa = match (g.kappa, g.k) {
            (Some(k), Some(kk)) if kk != delta + k => bail!("K = {kk} but delta + kappa = {}", delta + k),
            (Some(k), _) => k,
            (None, Some(kk)) if kk > delta => kk - delta,
            (None, Some(kk)) => bail!("K = {kk} must exceed delta = {delta}"),
            (None, None) => delta.saturating_sub(1),
        };
        let s = g.s.unwrap_or(kappa.saturating_sub(2) | 1);
        let mut setup = CompactSetup::new(g.d, delta, kappa, s);
        setup.quad = self.quad();
        setup.geometry()?;
        Ok(setup)
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| std::env::var_os("SPECINV_OUT").map(PathBuf::from))
            .or_else(|| self.out.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(self.experiment.name()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOISE_SWEEP: &str = r#"
experiment = "noise-sweep"
seed = 7
trials = 4
methods = ["alg1", "alg1+filter", "hio-er30"]
snr_db = [10.0, 20.0, inf]

[geometry]
mask = "trig"
d = 257
rho = 32
kappa = 31
"#;

    #[test]
    fn parses_and_roundtrips() {
        let c = ExperimentConfig::parse(NOISE_SWEEP).unwrap();
        assert_eq!(c.experiment, ExperimentKind::NoiseSweep);
        assert_eq!(c.snr_db[2], f64::INFINITY);
        assert_eq!(c.methods().unwrap().len(), 3);
        let s = c.trig_setup().unwrap();
        assert_eq!(s.l(), 63);
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_methods() {
        assert!(ExperimentConfig::parse(&NOISE_SWEEP.replace("seed = 7", "sed = 7")).is_err());
        let c = ExperimentConfig::parse(&NOISE_SWEEP.replace("\"alg1\",", "\"alg9\",")).unwrap();
        assert!(c.methods().is_err());
    }

    #[test]
    fn derived_geometry() {
        let c = ExperimentConfig::parse(&NOISE_SWEEP.replace("kappa = 31", "l = 63")).unwrap();
        assert_eq!(c.rho_kappa().unwrap(), (32, 31));
        let c = ExperimentConfig::parse(&NOISE_SWEEP.replace("kappa = 31", "kappa = 30\nl = 63")).unwrap();
        assert!(c.rho_kappa().is_err());
        let compact = r#"
experiment = "recover"
[geometry]
mask = "compact"
d = 189
delta = 32
kappa = 31
s = 29
"#;
        let c = ExperimentConfig::parse(compact).unwrap();
        let s = c.compact_setup().unwrap();
        assert_eq!((s.k, s.s), (63, 29));
    }
}
