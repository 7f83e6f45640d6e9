//! Deterministic run artifacts: CSV tables with full-precision floats, JSON
//! summaries, and the run manifest. Nothing here records wall-clock time or
//! any other nondeterministic value, so identical configs reproduce byte
//! for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use logcvx_core::energetics::FrequencyTrace;
use logcvx_core::localization::CutoffLimitReport;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => fmt(x),
        None => "nan".into(),
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut f = fs::File::create(&path)
            .with_context(|| format!("creating {}", path.display()))?;
        writeln!(f, "{header}")?;
        for row in rows {
            writeln!(f, "{row}")?;
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let body = serde_json::to_string_pretty(value).context("serializing summary")?;
        fs::write(&path, body + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub const TRACE_HEADER: &str =
    "tau,E,F,N,dN_numeric,sandwich_lower,sandwich_upper,I1,I2,Ic,res_l2ev,res_h1arr1,res_h1ev";

pub fn trace_rows(trace: &FrequencyTrace) -> Vec<String> {
    let mut rows = Vec::with_capacity(trace.len());
    for i in 0..trace.len() {
        let r = &trace.reports[i];
        rows.push(
            [
                fmt(r.tau),
                fmt(r.e),
                fmt(r.f),
                fmt_opt(r.n),
                fmt_opt(trace.dn_numeric[i]),
                fmt_opt(trace.sandwich_lower[i]),
                fmt_opt(trace.sandwich_upper[i]),
                fmt(r.i1),
                fmt(r.i2),
                fmt(r.ic),
                fmt(trace.res_l2ev[i]),
                fmt(trace.res_h1arr1[i]),
                fmt(trace.res_h1ev[i]),
            ]
            .join(","),
        );
    }
    rows
}

pub const CUTOFF_HEADER: &str = "R,tau,E_R,F_R,N_R,Q_R,correction";

pub fn cutoff_rows(report: &CutoffLimitReport) -> Vec<String> {
    report
        .rows
        .iter()
        .map(|r| {
            [
                fmt(r.r),
                fmt(r.tau),
                fmt(r.e_r),
                fmt(r.f_r),
                fmt_opt(r.n_r),
                fmt(r.q_r),
                fmt(r.correction),
            ]
            .join(",")
        })
        .collect()
}

pub const CUTOFF_GLOBAL_HEADER: &str = "tau,E,F,N";

pub fn cutoff_global_rows(report: &CutoffLimitReport) -> Vec<String> {
    report
        .global
        .iter()
        .map(|g| [fmt(g.tau), fmt(g.e), fmt(g.f), fmt_opt(g.n)].join(","))
        .collect()
}

/// The manifest every run writes; replay re-executes from it.
#[derive(Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub seed: u64,
    pub config: std::collections::BTreeMap<String, String>,
}
