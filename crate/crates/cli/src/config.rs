//! Experiment configuration: one JSON document, versioned, unknown keys
//! rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rwre_core::generators::GeneratorSpec;
use rwre_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    /// Martingale plus compensator `X = M + I`.
    Mi,
    /// Forward-backward split `X = K + L + J`.
    Klj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Corrector,
    Rsc,
    Kv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub paths: usize,
    pub horizon: f64,
    #[serde(default = "default_tracks")]
    pub tracks: Vec<Track>,
    /// Extra times at which displacements are recorded.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
}

fn default_tracks() -> Vec<Track> {
    vec![Track::Mi]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralBlock {
    #[serde(default = "yes")]
    pub h1: bool,
    #[serde(default)]
    pub kozlov: bool,
    #[serde(default)]
    pub cocycle: bool,
    /// Side lengths for the `tr C̃` growth study of the same generator.
    #[serde(default)]
    pub growth_sides: Vec<usize>,
    #[serde(default = "default_growth_seeds")]
    pub growth_seeds: usize,
}

fn yes() -> bool {
    true
}

fn default_growth_seeds() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolventBlock {
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default = "default_ladder")]
    pub ladder: usize,
}

fn default_suites() -> Vec<Suite> {
    vec![Suite::Corrector]
}

pub fn default_ladder() -> usize {
    24
}

/// Declared in dependency order: `bounds` reads the `msd` result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorCheck {
    Msd,
    Bounds,
    Clt,
    HeatKernel,
    EdgeCut,
    Scenery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBlock {
    pub checks: Vec<EstimatorCheck>,
    /// Band width in standard errors before the multiple-comparison
    /// correction; `3` corresponds to the nominal 0.27% level.
    #[serde(default = "default_sigmas")]
    pub sigmas: f64,
    #[serde(default)]
    pub heat_kernel_nmax: Option<usize>,
    #[serde(default = "default_scenery_horizon")]
    pub scenery_horizon: f64,
    #[serde(default = "default_scenery_paths")]
    pub scenery_paths: usize,
}

fn default_sigmas() -> f64 {
    3.0
}

fn default_scenery_horizon() -> f64 {
    200.0
}

fn default_scenery_paths() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed. Every stochastic stage draws from
    /// `derive_seed(seed, stage)`; the environment itself is fixed by the
    /// generator block's own seed.
    pub seed: u64,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub validate: Option<bool>,
    #[serde(default)]
    pub simulation: Option<SimulationBlock>,
    #[serde(default)]
    pub spectral: Option<SpectralBlock>,
    #[serde(default)]
    pub resolvent: Option<ResolventBlock>,
    #[serde(default)]
    pub estimators: Option<EstimatorBlock>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).context("parsing experiment config")?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check(&self) -> anyhow::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        if let Some(sim) = &self.simulation {
            if sim.paths == 0 || !(sim.horizon > 0.0) {
                bail!("simulation needs paths > 0 and horizon > 0");
            }
            if sim.checkpoints.iter().any(|&t| !(t > 0.0 && t <= sim.horizon)) {
                bail!("checkpoints must lie in (0, horizon]");
            }
        }
        if let Some(est) = &self.estimators {
            let needs_paths = est
                .checks
                .iter()
                .any(|c| matches!(c, EstimatorCheck::Msd | EstimatorCheck::Clt));
            if needs_paths && self.simulation.is_none() {
                bail!("msd and clt checks need a simulation block");
            }
            if !(est.sigmas > 0.0) {
                bail!("sigmas must be positive");
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical (compact) serialization, with the output
    /// location blanked so relocated reruns hash alike.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let canonical = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "seed": 7,
        "generator": {"family": "stream_tensor", "amplitude": 1.0, "d": 2, "L": 8, "seed": 3},
        "output_dir": "out"
    }"#;

    #[test]
    fn round_trip_is_stable() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("\"seed\": 7,", "\"seed\": 7, \"sede\": 1,");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_ne!(cfg.stage_seed("simulate"), cfg.stage_seed("coins"));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
