//! File formats owned by the command line: per-path summaries as CSV and
//! JSON helpers.

use std::path::Path;

use anyhow::{bail, Context};
use rwre_core::walker::PathSummary;
use serde::Serialize;

/// Per-path endpoint values read back from a summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub dim: usize,
    pub horizon: f64,
    pub starts: Vec<usize>,
    pub jumps: Vec<u64>,
    pub x: Vec<Vec<f64>>,
    pub i: Vec<Vec<f64>>,
    pub k: Option<Vec<Vec<f64>>>,
    pub l: Option<Vec<Vec<f64>>>,
    pub j: Option<Vec<Vec<f64>>>,
    pub checkpoint_times: Vec<f64>,
    /// `checkpoints[c][n]` is path `n` at `checkpoint_times[c]`.
    pub checkpoints: Vec<Vec<Vec<f64>>>,
}

impl SummaryTable {
    pub fn from_paths(paths: &[PathSummary], dim: usize, horizon: f64, checkpoint_times: &[f64]) -> Self {
        let opt = |f: fn(&PathSummary) -> Option<&Vec<f64>>| -> Option<Vec<Vec<f64>>> {
            paths.iter().map(|p| f(p).cloned()).collect()
        };
        SummaryTable {
            dim,
            horizon,
            starts: paths.iter().map(|p| p.start).collect(),
            jumps: paths.iter().map(|p| p.jumps).collect(),
            x: paths.iter().map(|p| p.x.clone()).collect(),
            i: paths.iter().map(|p| p.i.clone()).collect(),
            k: opt(|p| p.k.as_ref()),
            l: opt(|p| p.l.as_ref()),
            j: opt(|p| p.j.as_ref()),
            checkpoint_times: checkpoint_times.to_vec(),
            checkpoints: (0..checkpoint_times.len())
                .map(|c| paths.iter().map(|p| p.checkpoints[c].clone()).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn mean_jumps(&self) -> f64 {
        self.jumps.iter().map(|&j| j as f64).sum::<f64>() / self.len().max(1) as f64
    }

    pub fn m(&self) -> Vec<Vec<f64>> {
        self.x
            .iter()
            .zip(&self.i)
            .map(|(x, i)| x.iter().zip(i).map(|(a, b)| a - b).collect())
            .collect()
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["path".to_string(), "start".into(), "jumps".into(), "horizon".into()];
        let mut block = |name: &str| (0..self.dim).for_each(|c| h.push(format!("{name}_{c}")));
        block("x");
        block("i");
        block("m");
        if self.k.is_some() {
            block("k");
            block("l");
            block("j");
        }
        for t in &self.checkpoint_times {
            (0..self.dim).for_each(|c| h.push(format!("x_{c}@{t}")));
        }
        h
    }

    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(self.header())?;
        let m = self.m();
        for n in 0..self.len() {
            let mut row = vec![n.to_string(), self.starts[n].to_string(), self.jumps[n].to_string(), self.horizon.to_string()];
            let mut push = |v: &[f64]| row.extend(v.iter().map(|x| x.to_string()));
            push(&self.x[n]);
            push(&self.i[n]);
            push(&m[n]);
            if let (Some(k), Some(l), Some(j)) = (&self.k, &self.l, &self.j) {
                push(&k[n]);
                push(&l[n]);
                push(&j[n]);
            }
            for cp in &self.checkpoints {
                push(&cp[n]);
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> anyhow::Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| header.iter().position(|h| h == name);
        let dim = (0..).take_while(|c| col(&format!("x_{c}")).is_some()).count();
        if dim == 0 || col("horizon").is_none() || col("jumps").is_none() {
            bail!("{} is not a path summary table", path.display());
        }
        let block = |name: &str| -> Option<Vec<usize>> { (0..dim).map(|c| col(&format!("{name}_{c}"))).collect() };
        let x_cols = block("x").expect("x columns");
        let i_cols = block("i").context("missing compensator columns")?;
        let klj = match (block("k"), block("l"), block("j")) {
            (Some(k), Some(l), Some(j)) => Some((k, l, j)),
            _ => None,
        };
        let mut checkpoint_times: Vec<f64> = Vec::new();
        let mut cp_cols: Vec<Vec<usize>> = Vec::new();
        for (idx, h) in header.iter().enumerate() {
            if let Some((name, t)) = h.split_once('@') {
                let t: f64 = t.parse().with_context(|| format!("bad checkpoint column {h}"))?;
                let c: usize = name.trim_start_matches("x_").parse()?;
                if c == 0 {
                    checkpoint_times.push(t);
                    cp_cols.push(vec![idx]);
                } else {
                    cp_cols.last_mut().context("checkpoint columns out of order")?.push(idx);
                }
            }
        }
        let mut t = SummaryTable {
            dim,
            horizon: 0.0,
            starts: Vec::new(),
            jumps: Vec::new(),
            x: Vec::new(),
            i: Vec::new(),
            k: klj.as_ref().map(|_| Vec::new()),
            l: klj.as_ref().map(|_| Vec::new()),
            j: klj.as_ref().map(|_| Vec::new()),
            checkpoints: vec![Vec::new(); checkpoint_times.len()],
            checkpoint_times,
        };
        let (h_col, s_col, j_col) = (col("horizon").unwrap(), col("start"), col("jumps").unwrap());
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> anyhow::Result<f64> {
                rec.get(i)
                    .context("short row")?
                    .parse::<f64>()
                    .with_context(|| format!("bad number in column {}", header[i]))
            };
            let vec_of = |cols: &[usize]| -> anyhow::Result<Vec<f64>> { cols.iter().map(|&c| num(c)).collect() };
            t.horizon = num(h_col)?;
            t.starts.push(s_col.map(|c| num(c)).transpose()?.unwrap_or(0.0) as usize);
            t.jumps.push(num(j_col)? as u64);
            t.x.push(vec_of(&x_cols)?);
            t.i.push(vec_of(&i_cols)?);
            if let Some((kc, lc, jc)) = &klj {
                t.k.as_mut().unwrap().push(vec_of(kc)?);
                t.l.as_mut().unwrap().push(vec_of(lc)?);
                t.j.as_mut().unwrap().push(vec_of(jc)?);
            }
            for (cols, store) in cp_cols.iter().zip(t.checkpoints.iter_mut()) {
                store.push(vec_of(cols)?);
            }
        }
        Ok(t)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}
