//! Command implementations behind the `nlsplit` binary. Each command loads a
//! scenario, calls into [`crate::harness`], and writes its CSV and manifest
//! files to the resolved output directory.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::acceptance::{self, AcceptOptions, Fault};
use crate::error::{Error, Result};
use crate::harness::{
    efficiency_csv, efficiency_curve, manifest_json, multistart, multistart_restarts_csv, multistart_summary_csv,
    run_scenario, sweep_csv, sweep_stepsize,
};
use crate::scenario::Scenario;
use crate::trace::{fmt_real, RunStatus};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "NLSPLIT_OUTPUT";

#[derive(Debug, Clone, Default)]
pub struct CommandOptions {
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// What a successful command observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Diverged,
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::Failed => 1,
            Outcome::Diverged => 2,
        }
    }
}

/// Maps a command result to a process exit code, reporting errors on stderr.
pub fn exit_code(r: Result<Outcome>) -> i32 {
    match r {
        Ok(o) => o.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn load_scenario(path: &Path, opts: &CommandOptions) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = opts.seed {
        s.problem.seed = seed;
    }
    Ok(s)
}

/// `--output`, then `output.dir`, then `$NLSPLIT_OUTPUT`, then `.`.
pub fn output_dir(s: Option<&Scenario>, opts: &CommandOptions) -> PathBuf {
    opts.output
        .clone()
        .or_else(|| s.and_then(|s| s.output.dir.clone()))
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents).map_err(|e| Error::Io(format!("{}: {e}", dir.join(name).display())))
}

fn write_outputs(dir: &Path, command: &str, s: &Scenario, files: &[(String, String)], summary: serde_json::Value) -> Result<()> {
    let names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    for (name, contents) in files {
        write(dir, name, contents)?;
    }
    write(dir, &format!("{}_manifest.json", s.prefix()), &manifest_json(command, s, &names, summary))
}

pub fn cmd_run(path: &Path, opts: &CommandOptions) -> Result<Outcome> {
    let s = load_scenario(path, opts)?;
    let r = run_scenario(&s)?;
    let files = vec![(format!("{}_trace.csv", s.prefix()), r.trace.to_csv())];
    let summary = json!({
        "method": r.method.as_str(),
        "status": r.status,
        "iterations": r.iterations(),
        "final_cost": fmt_real(r.final_cost()),
        "failure": r.failure,
    });
    write_outputs(&output_dir(Some(&s), opts), "run", &s, &files, summary)?;
    println!("{} {}: {} after {} iterations, cost {}", s.problem.name, r.method, r.status, r.iterations(), fmt_real(r.final_cost()));
    if let Some(f) = &r.failure {
        println!("  {f}");
    }
    Ok(if r.status == RunStatus::Diverged { Outcome::Diverged } else { Outcome::Ok })
}

pub fn cmd_sweep(path: &Path, opts: &CommandOptions) -> Result<Outcome> {
    let s = load_scenario(path, opts)?;
    let rows = sweep_stepsize(&s, opts.jobs)?;
    let files = vec![(format!("{}_sweep.csv", s.prefix()), sweep_csv(&rows))];
    let diverged = rows.iter().filter(|r| r.status == RunStatus::Diverged).count();
    write_outputs(&output_dir(Some(&s), opts), "sweep", &s, &files, json!({ "cells": rows.len(), "diverged": diverged }))?;
    println!("{} cells, {} diverged", rows.len(), diverged);
    Ok(Outcome::Ok)
}

pub fn cmd_multistart(path: &Path, opts: &CommandOptions) -> Result<Outcome> {
    let s = load_scenario(path, opts)?;
    let res = multistart(&s, opts.jobs)?;
    let files = vec![
        (format!("{}_multistart.csv", s.prefix()), multistart_summary_csv(&res.summary)),
        (format!("{}_restarts.csv", s.prefix()), multistart_restarts_csv(&res.restarts)),
    ];
    write_outputs(&output_dir(Some(&s), opts), "multistart", &s, &files, json!({ "restarts": s.n_restarts() }))?;
    for r in &res.summary {
        println!(
            "{}: mean {} median {} converged {:.2} diverged {}",
            r.method,
            fmt_real(r.mean_final_cost),
            fmt_real(r.median_final_cost),
            r.fraction_converged,
            r.n_diverged
        );
    }
    Ok(Outcome::Ok)
}

pub fn cmd_efficiency(path: &Path, opts: &CommandOptions) -> Result<Outcome> {
    let s = load_scenario(path, opts)?;
    let rows = efficiency_curve(&s, opts.jobs)?;
    let files = vec![(format!("{}_efficiency.csv", s.prefix()), efficiency_csv(&rows))];
    write_outputs(&output_dir(Some(&s), opts), "efficiency", &s, &files, json!({ "rows": rows.len() }))?;
    println!("{} rows", rows.len());
    Ok(Outcome::Ok)
}

/// Runs the acceptance suite, printing one line per criterion. Artifacts are
/// written only when an output directory is given explicitly or through
/// the environment.
pub fn cmd_accept(opts: &CommandOptions, fault: Option<Fault>, only: &[u8]) -> Result<Outcome> {
    let artifacts = opts.output.clone().or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from));
    let accept = AcceptOptions { jobs: opts.jobs.max(1), fault, only: only.to_vec() };
    let report = acceptance::run_all(&accept);
    for r in &report.results {
        println!("{}", r.line());
    }
    if let Some(dir) = artifacts {
        for (name, contents) in &report.artifacts {
            write(&dir, name, contents)?;
        }
    }
    Ok(if report.all_passed() { Outcome::Ok } else { Outcome::Failed })
}
