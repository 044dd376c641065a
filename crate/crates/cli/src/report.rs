//! Machine-readable experiment report.

use rwre_core::env::EnvHeader;
use rwre_core::estimators::{BoundsReport, CltReport, EdgeCut, HeatKernelProfile, MsdEstimate, SceneryReport};
use rwre_core::resolvent::{KvReport, RscReport, SectorReport};
use rwre_core::spectral::{GrowthReport, KozlovReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
    Holds,
}

/// One numeric claim with the stage, seed and tolerance that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub stage: String,
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub seed: Option<u64>,
    pub pass: bool,
    /// Only acceptance checks decide the exit status.
    pub acceptance: bool,
}

impl CheckRecord {
    pub fn at_most(stage: &str, name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckRecord {
            stage: stage.into(),
            name: name.into(),
            value,
            relation: Relation::AtMost,
            tolerance,
            seed: None,
            pass: value <= tolerance,
            acceptance: true,
        }
    }

    pub fn at_least(stage: &str, name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckRecord {
            relation: Relation::AtLeast,
            pass: value >= tolerance,
            ..Self::at_most(stage, name, value, tolerance)
        }
    }

    /// A boolean outcome; `value` carries the diagnostic it was derived from.
    pub fn holds(stage: &str, name: impl Into<String>, pass: bool, value: f64, tolerance: f64) -> Self {
        CheckRecord {
            relation: Relation::Holds,
            pass,
            ..Self::at_most(stage, name, value, tolerance)
        }
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn informational(mut self) -> Self {
        self.acceptance = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seed: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MsdPoint {
    pub t: f64,
    #[serde(flatten)]
    pub estimate: MsdEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KvEntry {
    pub field: String,
    #[serde(flatten)]
    pub report: KvReport,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportData {
    pub c_tilde: Option<Vec<Vec<f64>>>,
    pub d_tilde: Option<Vec<Vec<f64>>>,
    pub kozlov: Option<KozlovReport>,
    pub growth: Option<GrowthReport>,
    pub sigma2_oracle: Option<Vec<Vec<f64>>>,
    pub corrector_residuals: Option<Vec<f64>>,
    pub sector: Option<SectorReport>,
    pub rsc: Option<RscReport>,
    pub kv: Vec<KvEntry>,
    pub msd: Vec<MsdPoint>,
    pub bounds_oracle: Option<BoundsReport>,
    pub bounds_msd: Option<BoundsReport>,
    pub clt: Option<CltReport>,
    pub heat_kernel: Option<HeatKernelProfile>,
    pub heat_kernel_reference: Option<f64>,
    pub edge_cuts: Vec<EdgeCut>,
    pub scenery: Option<SceneryReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub environment: Option<EnvHeader>,
    pub stages: Vec<StageRecord>,
    pub checks: Vec<CheckRecord>,
    pub data: ReportData,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.acceptance && !c.pass)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}
