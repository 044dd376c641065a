//! Subcommand definitions and their handlers.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rwre_core::env::{decompose, Environment};
use rwre_core::generators::{generate, CoinPattern, Family, GeneratorSpec, SymmetricPart};
use rwre_core::spectral::{covariance_spectrum, TorusFft, DEFAULT_KOZLOV_BAND};
use rwre_core::walker::{auxiliary_env, ensemble_trajectory, simulate_ensemble, EnsembleOptions};

use crate::analysis;
use crate::config::{default_ladder, ExperimentConfig, Suite, Track};
use crate::io::{write_json, SummaryTable};
use crate::plotdata::emit_plotdata;
use crate::report::{CheckRecord, ExperimentReport, ReportData};

#[derive(Debug, Parser)]
#[command(name = "rwre", version, about = "Random walks in bistochastic random environments on lattice tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an environment.
    Gen(GenArgs),
    /// Check bistochasticity, ellipticity, boundedness and zero mean drift.
    Validate(ValidateArgs),
    /// Covariance spectra, C̃ and D̃, regularity fit.
    Spectral(SpectralArgs),
    /// Simulate paths and write one summary row per path.
    Simulate(SimulateArgs),
    /// Diffusivity and CLT statistics from a path summary.
    Estimate(EstimateArgs),
    /// Corrector, operator-norm and Kipnis-Varadhan suites.
    Resolvent(ResolventArgs),
    /// Exact heat-kernel profile of the auxiliary lazy walk.
    Heatkernel(HeatkernelArgs),
    /// Run a full experiment from a JSON config.
    Run(RunArgs),
    /// Long-format CSV from an experiment report.
    EmitPlotdata(PlotArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyTag {
    #[value(alias = "stream_tensor")]
    Stream,
    Manhattan,
    Cyclic,
    Symmetric,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PatternArg {
    Random,
    Alternating,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Full generator spec as JSON; the family flags are ignored when given.
    #[arg(long, conflicts_with = "family")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "spec")]
    pub family: Option<FamilyTag>,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long = "L", default_value_t = 16)]
    pub side: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stream tensor amplitude.
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Pareto tail exponent of stream plaquettes (bounded uniform when absent).
    #[arg(long)]
    pub tail_exponent: Option<f64>,
    /// Largest |v_k| as a fraction of s_*.
    #[arg(long, default_value_t = 0.9)]
    pub clip: f64,
    #[arg(long, default_value_t = 1)]
    pub correlation_length: usize,
    #[arg(long, value_enum, default_value_t = PatternArg::Random)]
    pub pattern: PatternArg,
    /// Cycles per site.
    #[arg(long, default_value_t = 0.3)]
    pub density: f64,
    #[arg(long, default_value_t = 4)]
    pub max_len: usize,
    #[arg(long, default_value_t = 1.0)]
    pub weight: f64,
    /// Constant symmetric part s_k.
    #[arg(long, conflicts_with = "conductance")]
    pub s: Option<f64>,
    /// Random conductances uniform in [MIN, MAX].
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub conductance: Option<Vec<f64>>,
    /// Output path; `.json` selects the JSON container.
    #[arg(long)]
    pub out: PathBuf,
}

impl GenArgs {
    pub fn spec(&self) -> anyhow::Result<GeneratorSpec> {
        if let Some(path) = &self.spec {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(serde_json::from_str(&text)?);
        }
        let family = match self.family.expect("clap enforces family or spec") {
            FamilyTag::Stream => Family::StreamTensor {
                amplitude: self.amplitude,
                tail_exponent: self.tail_exponent,
                clip: self.clip,
            },
            FamilyTag::Manhattan => Family::Manhattan {
                correlation_length: self.correlation_length,
                pattern: match self.pattern {
                    PatternArg::Random => CoinPattern::Random,
                    PatternArg::Alternating => CoinPattern::Alternating,
                },
            },
            FamilyTag::Cyclic => Family::Cyclic {
                density: self.density,
                max_len: self.max_len,
                weight: self.weight,
                clip: self.clip,
            },
            FamilyTag::Symmetric => Family::Symmetric,
        };
        let symmetric = match (&self.s, &self.conductance) {
            (Some(s), _) => SymmetricPart::Constant { s: *s },
            (None, Some(c)) => SymmetricPart::Conductance { min: c[0], max: c[1] },
            (None, None) => SymmetricPart::default(),
        };
        Ok(GeneratorSpec::new(family, self.d, self.side, self.seed).with_symmetric(symmetric))
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Also dump `tr Ĉ(p)` against `|p|²`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Frequency band `0 < |p| <= band` of the regularity fit.
    #[arg(long, default_value_t = DEFAULT_KOZLOV_BAND)]
    pub band: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Decompositions to record.
    #[arg(long, value_delimiter = ',', default_value = "mi")]
    pub tracks: Vec<TrackArg>,
    /// Seed of the forward-backward coins; derived from `--seed` when absent.
    #[arg(long)]
    pub coin_seed: Option<u64>,
    /// Extra recording times.
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write complete jump sequences of the first `--keep` paths as JSON lines.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub keep: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrackArg {
    Mi,
    Klj,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// `sigma2.json` from the resolvent command.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// The environment, for the diffusivity bounds and the K-track check.
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, default_value_t = 3.0)]
    pub sigmas: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ResolventArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "corrector")]
    pub suite: Vec<Suite>,
    #[arg(long, default_value_t = default_ladder())]
    pub ladder: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatkernelArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Steps; at most (L/4)².
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Use the environment as given instead of its auxiliary walk.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Whether every judged check passed.
pub type Passed = bool;

fn load_env(path: &Path) -> anyhow::Result<Environment> {
    Environment::load(path).with_context(|| format!("loading environment {}", path.display()))
}

fn summarize(checks: &[CheckRecord]) -> Passed {
    let mut out = std::io::stdout().lock();
    for c in checks {
        let _ = writeln!(
            out,
            "{:<5} {}/{}: {:e} (tol {:e}){}",
            if c.pass { "ok" } else { "FAIL" },
            c.stage,
            c.name,
            c.value,
            c.tolerance,
            if c.acceptance { "" } else { " [info]" }
        );
    }
    checks.iter().all(|c| c.pass || !c.acceptance)
}

pub fn execute(cli: Cli) -> anyhow::Result<Passed> {
    match cli.command {
        Command::Gen(a) => {
            let spec = a.spec()?;
            let g = generate(&spec)?;
            g.env.save(&a.out)?;
            println!(
                "wrote {} ({} d={} L={} s_*={} s*={})",
                a.out.display(),
                spec.tag(),
                spec.d,
                spec.side,
                g.env.s_star(),
                g.env.s_upper()
            );
            Ok(true)
        }
        Command::Validate(a) => {
            let env = load_env(&a.input)?;
            let report = rwre_core::validate(&env);
            if let Some(path) = &a.report {
                write_json(path, &report)?;
            }
            Ok(summarize(&analysis::validation_checks(&env)))
        }
        Command::Spectral(a) => {
            let env = load_env(&a.input)?;
            let dec = decompose(&env);
            let mut data = ReportData::default();
            let (h1, mut checks) = analysis::spectral_stage(&dec, false, false, &mut data)?;
            let kozlov = rwre_core::spectral::kozlov_regularity(&dec, a.band)?;
            checks.push(CheckRecord::at_most("spectral", "kozlov_vector_identity", kozlov.vector_residual, 1e-10));
            checks.push(CheckRecord::at_most("spectral", "kozlov_covariance_identity", kozlov.covariance_residual, 1e-10));
            write_json(
                &a.report,
                &serde_json::json!({
                    "c_tilde": h1.c_tilde,
                    "d_tilde": h1.d_tilde,
                    "trace_c_tilde": h1.trace_c_tilde(),
                    "zero_frequency": h1.zero_frequency,
                    "identity_residuals": {
                        "vector": kozlov.vector_residual,
                        "divergence_free": kozlov.divfree_residual,
                        "quadratic": kozlov.quadratic_residual,
                        "covariance": kozlov.covariance_residual,
                    },
                    "regularity_fit": {
                        "coefficient": kozlov.fit_coefficient,
                        "frequencies": kozlov.fit_frequencies,
                        "band": kozlov.band,
                    },
                }),
            )?;
            if let Some(path) = &a.csv {
                let spec = covariance_spectrum(&dec);
                let fft = TorusFft::new(env.torus());
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(["p_squared", "trace_c_hat"])?;
                for p in 1..env.len() {
                    w.write_record([fft.p_squared(p).to_string(), spec.trace_c(p).to_string()])?;
                }
                w.flush()?;
            }
            Ok(summarize(&checks))
        }
        Command::Simulate(a) => {
            let env = load_env(&a.input)?;
            let dec = decompose(&env);
            let mut checkpoints = a.checkpoints.clone();
            if checkpoints.iter().any(|&t| !(t > 0.0 && t <= a.horizon)) {
                bail!("checkpoints must lie in (0, horizon]");
            }
            checkpoints.sort_by(f64::total_cmp);
            checkpoints.dedup();
            let mut opts = EnsembleOptions::new(a.paths, a.horizon, a.seed).with_checkpoints(checkpoints.clone());
            if a.tracks.contains(&TrackArg::Klj) {
                let coin = a.coin_seed.unwrap_or_else(|| rwre_core::rng::derive_seed(a.seed, "coins"));
                opts = opts.with_coins(coin);
            }
            let paths = simulate_ensemble(&env, &dec, &opts, &[])?;
            let table = SummaryTable::from_paths(&paths, env.dim(), a.horizon, &checkpoints);
            table.write_csv(&a.out)?;
            if let Some(path) = &a.trajectories {
                let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
                for n in 0..a.keep.min(a.paths) {
                    let t = ensemble_trajectory(&env, &opts, n as u64)?;
                    serde_json::to_writer(&mut f, &t)?;
                    writeln!(f)?;
                }
            }
            println!(
                "wrote {} paths to {} (mean jumps {:.1})",
                table.len(),
                a.out.display(),
                table.mean_jumps()
            );
            Ok(true)
        }
        Command::Estimate(a) => {
            let table = SummaryTable::read_csv(&a.input)?;
            let oracle: Option<Vec<Vec<f64>>> = match &a.oracle {
                Some(p) => {
                    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                    Some(
                        serde_json::from_value(v.get("sigma2").cloned().unwrap_or_default())
                            .context("oracle file has no sigma2 matrix")?,
                    )
                }
                None => None,
            };
            let mut data = ReportData::default();
            let mut checks = analysis::msd_stage(&table, oracle.as_deref(), a.sigmas, &mut data)?;
            if let Some(path) = &a.env {
                let env = load_env(path)?;
                if let Ok(h1) = rwre_core::spectral::h1_functional(&decompose(&env)) {
                    checks.extend(analysis::bounds_msd_stage(&env, &h1, a.sigmas, &mut data));
                }
                checks.extend(analysis::klj_stage(&table, env.s_star(), a.sigmas));
            }
            if let Some(o) = &oracle {
                checks.extend(analysis::clt_stage(&table, o, a.seed, &mut data)?);
            }
            write_json(&a.report, &serde_json::json!({ "checks": checks, "data": data }))?;
            Ok(summarize(&checks))
        }
        Command::Resolvent(a) => {
            let env = load_env(&a.input)?;
            let dec = decompose(&env);
            let mut data = ReportData::default();
            let outcome = analysis::resolvent_stage(&env, &dec, &a.suite, a.ladder, &mut data)?;
            write_json(
                &a.out,
                &serde_json::json!({
                    "sigma2": data.sigma2_oracle,
                    "residuals": data.corrector_residuals,
                    "bounds": data.bounds_oracle,
                    "sector": data.sector,
                    "rsc": data.rsc,
                    "kv": data.kv,
                    "checks": outcome.checks,
                }),
            )?;
            if let Some(s) = &data.sigma2_oracle {
                println!("sigma2 = {s:?}");
            }
            Ok(summarize(&outcome.checks))
        }
        Command::Heatkernel(a) => {
            let env = load_env(&a.input)?;
            let y = if a.raw { env.clone() } else { auxiliary_env(&env)? };
            let n_max = a.nmax.unwrap_or_else(|| rwre_core::estimators::heat_kernel_horizon(env.side()));
            let prof = rwre_core::estimators::heat_kernel_profile(&y, n_max)?;
            let mut w = csv::Writer::from_path(&a.out)?;
            w.write_record(["n", "a_n"])?;
            for (i, v) in prof.a.iter().enumerate() {
                w.write_record([(i + 1).to_string(), v.to_string()])?;
            }
            w.flush()?;
            println!("max_n a_n = {} at n = {}", prof.max, prof.argmax);
            Ok(true)
        }
        Command::Run(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let out = a.out_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let report = crate::pipeline::run_experiment_in(&cfg, &out)?;
            for s in &report.stages {
                println!(
                    "stage {:<20} {:?}{}",
                    s.name,
                    s.status,
                    s.error.as_ref().map_or(String::new(), |e| format!(": {e}"))
                );
            }
            summarize(&report.checks);
            println!("report: {}", out.join("report.json").display());
            Ok(report.passed)
        }
        Command::EmitPlotdata(a) => {
            let text = std::fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
            let report: ExperimentReport = serde_json::from_str(&text)
                .with_context(|| format!("{} is not an experiment report from `rwre run`", a.report.display()))?;
            for p in emit_plotdata(&report, &a.out_dir)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
    }
}

impl From<TrackArg> for Track {
    fn from(t: TrackArg) -> Self {
        match t {
            TrackArg::Mi => Track::Mi,
            TrackArg::Klj => Track::Klj,
        }
    }
}
