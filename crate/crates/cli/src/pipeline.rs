//! `generate → validate → spectral → resolvent → simulate → estimate`,
//! with failures confined to the stages that depend on them.

use std::path::Path;

use anyhow::Context;
use rwre_core::env::{decompose, Environment, RateDecomposition};
use rwre_core::generators::generate;
use rwre_core::spectral::{h1_functional, h1_growth, H1Functional};
use rwre_core::walker::{simulate_ensemble, EnsembleOptions};

use crate::analysis;
use crate::config::{EstimatorCheck, ExperimentConfig, Track};
use crate::io::{write_json, SummaryTable};
use crate::report::{CheckRecord, ExperimentReport, ReportData, StageRecord, StageStatus};

struct Run {
    stages: Vec<StageRecord>,
    checks: Vec<CheckRecord>,
    data: ReportData,
}

impl Run {
    fn record<T>(&mut self, name: &str, seed: Option<u64>, result: anyhow::Result<T>) -> Option<T> {
        let (status, error, value) = match result {
            Ok(v) => (StageStatus::Ok, None, Some(v)),
            Err(e) => (StageStatus::Failed, Some(format!("{e:#}")), None),
        };
        self.stages.push(StageRecord {
            name: name.into(),
            status,
            seed,
            error,
        });
        value
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.stages.push(StageRecord {
            name: name.into(),
            status: StageStatus::Skipped,
            seed: None,
            error: Some(why.into()),
        });
    }
}

/// Executes every requested stage and writes its artifacts under the
/// configured output directory. The report is returned even when stages
/// fail; `passed` is false iff an acceptance check failed or a requested
/// stage could not complete.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    run_experiment_in(cfg, &cfg.output_dir)
}

pub fn run_experiment_in(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<ExperimentReport> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut run = Run {
        stages: Vec::new(),
        checks: Vec::new(),
        data: ReportData::default(),
    };

    let env = run.record(
        "generate",
        Some(cfg.generator.seed),
        generate(&cfg.generator)
            .map_err(anyhow::Error::from)
            .and_then(|g| {
                g.env.save(&out.join("env.bin"))?;
                Ok(g.env)
            }),
    );
    let Some(env) = env else {
        return Ok(finish(cfg, None, run));
    };
    let dec = decompose(&env);

    if cfg.validate.unwrap_or(true) {
        run.checks.extend(analysis::validation_checks(&env));
        run.record::<()>("validate", None, Ok(()));
    }

    let mut h1: Option<H1Functional> = None;
    if let Some(block) = &cfg.spectral {
        let result = (|| -> anyhow::Result<()> {
            if block.h1 || block.kozlov || block.cocycle {
                let (functional, checks) = analysis::spectral_stage(&dec, block.kozlov, block.cocycle, &mut run.data)?;
                run.checks.extend(checks);
                write_json(
                    &out.join("h1.json"),
                    &serde_json::json!({
                        "c_tilde": functional.c_tilde,
                        "d_tilde": functional.d_tilde,
                        "zero_frequency": functional.zero_frequency,
                        "kozlov": run.data.kozlov,
                    }),
                )?;
                h1 = Some(functional);
            }
            if !block.growth_sides.is_empty() {
                run.data.growth = Some(h1_growth(&cfg.generator, &block.growth_sides, block.growth_seeds)?);
            }
            Ok(())
        })();
        run.record("spectral", None, result);
    }

    if let Some(block) = &cfg.resolvent {
        let result = analysis::resolvent_stage(&env, &dec, &block.suites, block.ladder, &mut run.data).and_then(|o| {
            write_json(
                &out.join("sigma2.json"),
                &serde_json::json!({
                    "sigma2": run.data.sigma2_oracle,
                    "residuals": run.data.corrector_residuals,
                    "kv": run.data.kv,
                    "sector": run.data.sector,
                    "rsc": run.data.rsc,
                }),
            )?;
            Ok(o.checks)
        });
        if let Some(checks) = run.record("resolvent", None, result) {
            run.checks.extend(checks);
        }
    }

    let table = match &cfg.simulation {
        Some(sim) => {
            let seed = cfg.stage_seed("simulate");
            let result = simulate(cfg, &env, &dec, sim, seed).and_then(|t| {
                t.write_csv(&out.join("traj_summary.csv"))?;
                Ok(t)
            });
            run.record("simulate", Some(seed), result)
        }
        None => None,
    };

    if let Some(est) = &cfg.estimators {
        estimate(cfg, est, &env, &dec, h1, table.as_ref(), &mut run);
    }

    if let Some(p) = &run.data.heat_kernel {
        let mut w = csv::Writer::from_path(out.join("profile.csv"))?;
        w.write_record(["n", "a_n"])?;
        for (i, a) in p.a.iter().enumerate() {
            w.write_record([(i + 1).to_string(), a.to_string()])?;
        }
        w.flush()?;
    }

    let report = finish(cfg, Some(&env), run);
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn simulate(
    cfg: &ExperimentConfig,
    env: &Environment,
    dec: &RateDecomposition,
    sim: &crate::config::SimulationBlock,
    seed: u64,
) -> anyhow::Result<SummaryTable> {
    let mut checkpoints = sim.checkpoints.clone();
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();
    let mut opts = EnsembleOptions::new(sim.paths, sim.horizon, seed).with_checkpoints(checkpoints.clone());
    if sim.tracks.contains(&Track::Klj) {
        opts = opts.with_coins(cfg.stage_seed("coins"));
    }
    let paths = simulate_ensemble(env, dec, &opts, &[])?;
    Ok(SummaryTable::from_paths(&paths, env.dim(), sim.horizon, &checkpoints))
}

fn estimate(
    cfg: &ExperimentConfig,
    est: &crate::config::EstimatorBlock,
    env: &Environment,
    dec: &RateDecomposition,
    h1: Option<H1Functional>,
    table: Option<&SummaryTable>,
    run: &mut Run,
) {
    // The oracle comes from the resolvent stage when it ran, otherwise it
    // is computed here on demand.
    let needs_oracle = est.checks.iter().any(|c| matches!(c, EstimatorCheck::Msd | EstimatorCheck::Clt));
    if needs_oracle && run.data.sigma2_oracle.is_none() {
        let result = analysis::resolvent_stage(env, dec, &[crate::config::Suite::Corrector], 0, &mut run.data);
        if let Some(o) = run.record("oracle", None, result) {
            run.checks.extend(o.checks);
        }
    }
    let oracle = run.data.sigma2_oracle.clone();
    let h1 = h1.or_else(|| h1_functional(dec).ok());
    let mut order = est.checks.clone();
    order.sort();
    order.dedup();
    for check in &order {
        let name = format!("estimate:{}", serde_json::to_value(check).unwrap().as_str().unwrap_or("?"));
        let seed = cfg.stage_seed(&name);
        let result: anyhow::Result<Vec<CheckRecord>> = match check {
            EstimatorCheck::Msd => match table {
                Some(t) => analysis::msd_stage(t, oracle.as_deref(), est.sigmas, &mut run.data).map(|mut c| {
                    c.extend(analysis::klj_stage(t, env.s_star(), est.sigmas));
                    c
                }),
                None => {
                    run.skip(&name, "simulation did not complete");
                    continue;
                }
            },
            EstimatorCheck::Bounds => match &h1 {
                Some(h1) => Ok(analysis::bounds_msd_stage(env, h1, est.sigmas, &mut run.data)),
                None => Err(anyhow::anyhow!("bounds need a drift-free environment")),
            },
            EstimatorCheck::Clt => match (table, &oracle) {
                (Some(t), Some(o)) => analysis::clt_stage(t, o, seed, &mut run.data),
                _ => {
                    run.skip(&name, "needs both simulation and oracle");
                    continue;
                }
            },
            EstimatorCheck::HeatKernel => analysis::heat_kernel_stage(env, est.heat_kernel_nmax, &mut run.data),
            EstimatorCheck::EdgeCut => analysis::edge_cut_stage(env, seed, &mut run.data),
            EstimatorCheck::Scenery => {
                analysis::scenery_stage(dec, est.scenery_horizon, est.scenery_paths, seed, est.sigmas, &mut run.data)
            }
        };
        if let Some(checks) = run.record(&name, Some(seed), result) {
            run.checks.extend(checks);
        }
    }
}

fn finish(cfg: &ExperimentConfig, env: Option<&Environment>, run: Run) -> ExperimentReport {
    let stages_ok = run.stages.iter().all(|s| s.status != StageStatus::Failed);
    let checks_ok = run.checks.iter().all(|c| c.pass || !c.acceptance);
    ExperimentReport {
        schema_version: crate::config::SCHEMA_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        environment: env.map(|e| e.header()),
        stages: run.stages,
        checks: run.checks,
        data: run.data,
        passed: stages_ok && checks_ok,
    }
}
