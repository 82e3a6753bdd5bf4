use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use specinv_cli::config::{ExperimentConfig, MaskKind};
use specinv_cli::plot::{render_csv, PlotKind};
use specinv_cli::run;
use specinv_cli::validate::validate;

#[derive(Parser)]
#[command(name = "specinv", version, about = "Phase retrieval from masked short-time Fourier measurements")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides SPECINV_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated method names, e.g. alg1,alg1+filter,hio-er30.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            if t == 0 {
                bail!("--trials must be positive");
            }
            cfg.trials = t;
        }
        if let Some(m) = &self.methods {
            cfg.methods = m.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    common: Common,
    /// Measurement CSV written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Points of the evaluation grid written next to the coefficients.
    #[arg(long, default_value_t = 1001)]
    grid: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate measurement CSVs for every trial.
    Simulate(Common),
    /// Recover from measurements taken with a trigonometric-polynomial mask.
    RecoverTrig(RecoverArgs),
    /// Recover from measurements taken with a compactly supported mask.
    RecoverCompact(RecoverArgs),
    /// Run the HIO/ER baseline on a measurement CSV.
    BaselineHio(RecoverArgs),
    /// Run the experiment described by the config (trials, aggregate, plots).
    Sweep(Common),
    /// Tabulate mask admissibility constants.
    MuTable(Common),
    /// Check a config; prints a JSON report, exits 2 on failure.
    Validate(Common),
    /// Plot an aggregate CSV as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: String,
        /// SVG path; defaults to the input with an .svg extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn report(art: &run::Artifacts) {
    for f in &art.files {
        println!("{}", art.dir.join(f).display());
    }
}

fn recover(a: &RecoverArgs, mask: Option<MaskKind>, hio: bool) -> Result<()> {
    let mut cfg = a.common.load()?;
    if let Some(m) = mask {
        if cfg.geometry.mask != m {
            bail!("config geometry.mask does not match this subcommand");
        }
    }
    if hio && a.common.methods.is_none() {
        cfg.methods = vec!["hio-er".into()];
    }
    let dir = cfg.out_dir(a.common.out.as_deref());
    report(&run::recover_file(&cfg, &a.input, &dir, a.grid)?);
    Ok(())
}

fn plot(input: &Path, kind: &str, out: Option<&Path>) -> Result<()> {
    let kind = PlotKind::parse(kind)?;
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let svg = render_csv(&text, kind)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| input.with_extension("svg"));
    std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Validate(c) => match c.load() {
            Ok(cfg) => {
                let rep = validate(&cfg);
                println!("{}", serde_json::to_string_pretty(&rep).expect("report serializes"));
                return if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(2) };
            }
            Err(e) => Err(e),
        },
        Cmd::Simulate(c) | Cmd::Sweep(c) | Cmd::MuTable(c) => c.load().and_then(|cfg| {
            let dir = cfg.out_dir(c.out.as_deref());
            let art = match cli.cmd {
                Cmd::Simulate(_) => run::simulate(&cfg, &dir)?,
                Cmd::MuTable(_) => run::run_mu_table(&cfg, &dir)?,
                _ => run::run(&cfg, &dir)?,
            };
            report(&art);
            Ok(())
        }),
        Cmd::RecoverTrig(a) => recover(a, Some(MaskKind::Trig), false),
        Cmd::RecoverCompact(a) => recover(a, Some(MaskKind::Compact), false),
        Cmd::BaselineHio(a) => recover(a, None, true),
        Cmd::Plot { input, kind, out } => plot(input, kind, out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
