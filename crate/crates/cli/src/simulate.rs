//! The `simulate` command.

use std::fs::OpenOptions;
use std::io::Write;

use cdpi_core::predint::{Method, MIN_BOOTSTRAP};
use cdpi_core::sim::{coverage_study, CoverageConfig, CoverageReport, GenerativeSpec, Scenario};
use serde::Serialize;

use crate::{check_alpha, resolve_seed, CliError, CliResult, SimulateArgs};

/// Validates the factor combination without running anything.
pub fn spec_from_args(args: &SimulateArgs) -> CliResult<GenerativeSpec> {
    let scenario = Scenario::parse(&args.scenario, args.variant.as_deref())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    check_alpha(args.alpha)?;
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if args.b < MIN_BOOTSTRAP {
        return Err(CliError::Usage(format!("--B must be at least {MIN_BOOTSTRAP}, got {}", args.b)));
    }
    GenerativeSpec::new(scenario, args.k, args.tau2, args.mu).map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Debug, Serialize)]
struct Row<'a> {
    scenario: &'static str,
    #[serde(rename = "K")]
    k: usize,
    tau2: f64,
    mu: f64,
    method: &'static str,
    reps: usize,
    #[serde(rename = "B")]
    b: usize,
    alpha: f64,
    seed: u64,
    evaluated: usize,
    failures: usize,
    coverage: &'a str,
    mc_se: &'a str,
    mean_length: &'a str,
    mean_i2: f64,
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

/// Writes result rows as CSV, with a header row if `header` is set.
pub fn write_rows(reports: &[CoverageReport], out: &mut dyn Write, header: bool) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for r in reports {
        let (cov, se, len) = (num(r.coverage), num(r.mc_se), num(r.mean_width));
        w.serialize(Row {
            scenario: r.scenario.name(),
            k: r.k,
            tau2: r.tau2,
            mu: r.mu,
            method: r.method.name(),
            reps: r.reps,
            b: r.b,
            alpha: r.alpha,
            seed: r.seed,
            evaluated: r.evaluated,
            failures: r.failures,
            coverage: &cov,
            mc_se: &se,
            mean_length: &len,
            mean_i2: r.mean_i2,
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(spec: &GenerativeSpec, reports: &[CoverageReport], out: &mut dyn Write) -> CliResult<()> {
    let Some(first) = reports.first() else {
        return Ok(());
    };
    writeln!(
        out,
        "scenario {}, K = {}, tau2 = {}, mu = {}; reps = {}, B = {}, alpha = {}, seed = {}",
        spec.scenario, spec.k, spec.tau2, spec.mu, first.reps, first.b, first.alpha, first.seed
    )?;
    writeln!(out, "mean I2 = {:.1}%", first.mean_i2)?;
    writeln!(out, "  {:<10}{:>10}{:>10}{:>13}{:>10}", "method", "coverage", "mc_se", "mean_length", "failures")?;
    for r in reports {
        if r.evaluated == 0 {
            writeln!(out, "  {:<10}{:>10}{:>10}{:>13}{:>10}", r.method.name(), "-", "-", "-", r.failures)?;
        } else {
            writeln!(
                out,
                "  {:<10}{:>10.4}{:>10.4}{:>13.4}{:>10}",
                r.method.name(),
                r.coverage,
                r.mc_se,
                r.mean_width,
                r.failures
            )?;
        }
    }
    Ok(())
}

pub fn run(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let spec = spec_from_args(args)?;
    let seed = resolve_seed(args.seed, err)?;
    let cfg = CoverageConfig {
        reps: args.reps,
        b: args.b,
        alpha: args.alpha,
        seed,
        threads: args.threads,
    };
    let reports = coverage_study(&spec, &Method::ALL, &cfg)?;
    if let Some(path) = &args.out {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
        let empty = file.metadata()?.len() == 0;
        write_rows(&reports, &mut file, empty)?;
    }
    write_summary(&spec, &reports, out)
}
