//! Batch front end: single runs, parameter sweeps and the oracle suite.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use icflow::checks::{format_table, run_suite, SuiteOptions};
use icflow::diagnostics::{theorem_report, write_series, SERIES_COLUMNS};
use icflow::{Checkpoint, RunOutput, Simulation, TheoremReport};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig};

pub const THREADS_ENV: &str = "ICFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "icflow", version, about = "Inverse curvature flow in AdS-Schwarzschild")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one flow and write its series, report, checkpoint and profile.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `[output] directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run every combination of the `[sweep]` value lists.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the built-in oracle suite.
    Check,
}

/// Exit status: 0 when every enabled check passes, 1 on a failed check,
/// 2 on any error.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Run { config, out, resume } => cmd_run(&config, out.as_deref(), resume.as_deref()),
        Command::Sweep { config, out, jobs } => cmd_sweep(&config, out.as_deref(), jobs),
        Command::Check => Ok(cmd_check()),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => bail!("{THREADS_ENV} must be a positive integer, got {v:?}"),
        },
        Err(_) => Ok(None),
    }
}

fn out_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    match (out, &cfg.output.directory) {
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(p)) => Ok(p.clone()),
        (None, None) => bail!("no output directory: pass --out or set [output] directory"),
    }
}

pub fn cmd_run(config: &Path, out: Option<&Path>, resume: Option<&Path>) -> Result<bool> {
    let cfg = RunConfig::load(config)?;
    let dir = out_dir(&cfg, out)?;
    let checkpoint = resume.map(Checkpoint::load).transpose().context("loading checkpoint")?;
    let (output, report) = execute_config(&cfg, checkpoint.as_ref(), threads_from_env()?)?;
    write_artifacts(&dir, &cfg, &output, &report)?;
    print!("{}", report.to_text());
    Ok(report.overall_pass)
}

/// Runs (or resumes) one configuration and evaluates its report.
pub fn execute_config(
    cfg: &RunConfig,
    checkpoint: Option<&Checkpoint>,
    threads: Option<usize>,
) -> Result<(RunOutput, TheoremReport)> {
    let flow = cfg.flow_config()?;
    let sim = Simulation::with_threads(flow.clone(), threads)?;
    let out = match checkpoint {
        Some(cp) => sim.resume(cp)?,
        None => sim.run()?,
    };
    let report = theorem_report(
        &out.series,
        &out.samples,
        &out.reference,
        flow.t_end,
        &cfg.report_settings(),
    );
    Ok((out, report))
}

pub fn report_json(cfg: &RunConfig, out: &RunOutput, report: &TheoremReport) -> Result<Value> {
    let mut v = serde_json::to_value(report)?;
    let obj = v.as_object_mut().context("report is not an object")?;
    obj.insert("config_echo".into(), serde_json::to_value(cfg)?);
    obj.insert("t_final".into(), json!(out.state.t));
    obj.insert("steps".into(), json!(out.steps));
    obj.insert("events".into(), serde_json::to_value(&out.events)?);
    Ok(v)
}

fn profile_table(out: &RunOutput, delim: char) -> String {
    let mut s = format!("theta{delim}psi{delim}f_hat{delim}conformal\n");
    let grid = out.state.grid();
    let Some(last) = out.samples.last() else {
        return s;
    };
    for i in 0..grid.len() {
        let (t, p) = grid.coords(i);
        let _ = writeln!(
            s,
            "{t:.16e}{delim}{p:.16e}{delim}{:.16e}{delim}{:.16e}",
            last.r_tilde[i], last.conformal[i]
        );
    }
    s
}

pub fn write_artifacts(dir: &Path, cfg: &RunConfig, out: &RunOutput, report: &TheoremReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: &str, body: &str| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    let mut files = Vec::new();
    for format in &cfg.output.formats {
        match format {
            Format::Csv | Format::Tsv => {
                let (delim, ext) = if *format == Format::Csv {
                    (',', "csv")
                } else {
                    ('\t', "tsv")
                };
                write(&format!("series.{ext}"), &write_series(&out.series, delim))?;
                write(&format!("profile.{ext}"), &profile_table(out, delim))?;
                files.push(json!({"file": format!("series.{ext}"), "columns": SERIES_COLUMNS, "x": "t"}));
                files.push(json!({"file": format!("profile.{ext}"), "columns": ["theta", "psi", "f_hat", "conformal"], "x": "theta"}));
            }
            Format::Json => {
                write(
                    "report.json",
                    &serde_json::to_string_pretty(&report_json(cfg, out, report)?)?,
                )?;
                files.push(json!({"file": "report.json"}));
            }
            Format::Text => {
                write("report.txt", &report.to_text())?;
                files.push(json!({"file": "report.txt"}));
            }
        }
    }
    let flow = cfg.flow_config()?;
    Checkpoint::from_run(&flow, out).save(&dir.join("checkpoint.json"))?;
    files.push(json!({"file": "checkpoint.json"}));
    write(
        "manifest.json",
        &serde_json::to_string_pretty(&json!({ "files": files }))?,
    )?;
    Ok(())
}

/// Directory name of one sweep combination.
pub fn combination_name(cfg: &RunConfig) -> String {
    let mut s = format!("m{}_{}", cfg.background.m, cfg.flow.f_kind);
    if let Some(a) = cfg.initial.amplitude {
        s.push_str(&format!("_amp{a}"));
    }
    s
}

pub fn cmd_sweep(config: &Path, out: Option<&Path>, jobs: usize) -> Result<bool> {
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let base = RunConfig::load(config)?;
    let dir = out_dir(&base, out)?;
    let runs = base.expand_sweep()?;
    let threads = threads_from_env()?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let results: Vec<Result<TheoremReport>> = pool.install(|| {
        runs.par_iter()
            .map(|cfg| {
                let (output, report) = execute_config(cfg, None, threads)?;
                write_artifacts(&dir.join(combination_name(cfg)), cfg, &output, &report)?;
                Ok(report)
            })
            .collect()
    });

    let mut table = String::from(
        "run,m,f_kind,amplitude,status,sup_kappa_dev_slope,sup_grad_phi_sq_slope,sup_hess_phi_slope,limit_gap,overall_pass,error\n",
    );
    let mut all_pass = true;
    for (cfg, res) in runs.iter().zip(&results) {
        let amp = cfg.initial.amplitude.map(|a| a.to_string()).unwrap_or_default();
        let head = format!(
            "{},{},{},{amp}",
            combination_name(cfg),
            cfg.background.m,
            cfg.flow.f_kind
        );
        match res {
            Ok(r) => {
                let slope = |name: &str| {
                    r.rates
                        .iter()
                        .find(|f| f.name == name)
                        .map(|f| format!("{:.16e}", f.slope))
                        .unwrap_or_default()
                };
                let gap = r.limit_gap.map(|g| format!("{g:.16e}")).unwrap_or_default();
                let status = if r.overall_pass { "pass" } else { "fail" };
                all_pass &= r.overall_pass;
                let _ = writeln!(
                    table,
                    "{head},{status},{},{},{},{gap},{},",
                    slope("sup_kappa_dev"),
                    slope("sup_grad_phi_sq"),
                    slope("sup_hess_phi"),
                    r.overall_pass
                );
            }
            Err(e) => {
                all_pass = false;
                let msg = format!("{e:#}").replace([',', '\n'], ";");
                let _ = writeln!(table, "{head},error,,,,,false,{msg}");
            }
        }
    }
    fs::write(dir.join("aggregate.csv"), &table).context("writing aggregate.csv")?;
    print!("{table}");
    Ok(all_pass)
}

pub fn cmd_check() -> bool {
    let rows = run_suite(SuiteOptions::default());
    print!("{}", format_table(&rows));
    let pass = rows.iter().all(|r| r.pass);
    println!(
        "{}",
        if pass {
            "all checks passed"
        } else {
            "some checks FAILED"
        }
    );
    pass
}
