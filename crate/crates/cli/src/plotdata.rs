//! Long-format CSV for external plotting.

use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::report::ExperimentReport;

fn writer(path: &Path) -> anyhow::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Writes `plotdata.csv` (quantity, index, value, se, stage) plus one
/// narrow table per series present in the report. Returns the files written.
pub fn emit_plotdata(report: &ExperimentReport, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let data = &report.data;

    let long = dir.join("plotdata.csv");
    let mut w = writer(&long)?;
    w.write_record(["quantity", "index", "value", "se", "stage"])?;
    let row = |w: &mut csv::Writer<std::fs::File>, q: &str, i: String, v: f64, se: Option<f64>, stage: &str| {
        w.write_record([q.to_string(), i, v.to_string(), se.map_or(String::new(), |s| s.to_string()), stage.into()])
    };
    for p in &data.msd {
        let d = p.estimate.sigma2.len();
        for i in 0..d {
            for j in i..d {
                row(&mut w, &format!("sigma2_hat_{i}{j}"), p.t.to_string(), p.estimate.sigma2[i][j], Some(p.estimate.se[i][j]), "estimate")?;
            }
        }
    }
    if let Some(s) = &data.sigma2_oracle {
        for (i, r) in s.iter().enumerate() {
            for (j, v) in r.iter().enumerate().skip(i) {
                row(&mut w, &format!("sigma2_oracle_{i}{j}"), "0".into(), *v, None, "resolvent")?;
            }
        }
    }
    if let Some(h) = &data.heat_kernel {
        for (n, a) in h.a.iter().enumerate() {
            row(&mut w, "heat_kernel_a", (n + 1).to_string(), *a, None, "estimate")?;
        }
    }
    if let Some(g) = &data.growth {
        for ((l, t), se) in g.sides.iter().zip(&g.trace_c_tilde).zip(&g.trace_se) {
            row(&mut w, "trace_c_tilde", l.to_string(), *t, Some(*se), "spectral")?;
        }
    }
    for kv in &data.kv {
        for (lambda, gap) in kv.report.lambdas.iter().zip(&kv.report.s_half_gap) {
            row(&mut w, &format!("kv_s_half_gap_{}", kv.field), lambda.to_string(), *gap, None, "resolvent")?;
        }
    }
    for c in &report.checks {
        row(&mut w, &format!("check:{}", c.name), "0".into(), c.value, None, &c.stage)?;
    }
    w.flush()?;
    written.push(long);

    if let Some(h) = &data.heat_kernel {
        let path = dir.join("heat_kernel.csv");
        let mut w = writer(&path)?;
        w.write_record(["n", "a_n"])?;
        for (n, a) in h.a.iter().enumerate() {
            w.write_record([(n + 1).to_string(), a.to_string()])?;
        }
        w.flush()?;
        written.push(path);
    }
    if let Some(g) = &data.growth {
        let path = dir.join("h1_growth.csv");
        let family = report
            .environment
            .as_ref()
            .map_or("unknown".to_string(), |e| e.generator.clone());
        let mut w = writer(&path)?;
        w.write_record(["L", "trace_Ctilde", "se", "family"])?;
        for ((l, t), se) in g.sides.iter().zip(&g.trace_c_tilde).zip(&g.trace_se) {
            w.write_record([l.to_string(), t.to_string(), se.to_string(), family.clone()])?;
        }
        w.flush()?;
        written.push(path);
    }
    if !data.msd.is_empty() {
        let path = dir.join("msd.csv");
        let mut w = writer(&path)?;
        w.write_record(["t", "i", "j", "sigma2_hat", "se"])?;
        for p in &data.msd {
            let d = p.estimate.sigma2.len();
            for i in 0..d {
                for j in i..d {
                    w.write_record([
                        p.t.to_string(),
                        i.to_string(),
                        j.to_string(),
                        p.estimate.sigma2[i][j].to_string(),
                        p.estimate.se[i][j].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}
