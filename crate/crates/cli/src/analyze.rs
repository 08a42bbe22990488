//! The `analyze` command.

use std::io::Write;

use cdpi_core::dist::normal_quantile;
use cdpi_core::estimators::HeterogeneityFit;
use cdpi_core::model::StudySet;
use cdpi_core::predint::{ci_mean_dl, prediction_interval, Method, PredictionResult};
use cdpi_core::rng::StreamSeed;
use serde::Serialize;

use crate::input::{read_path, Dataset};
use crate::{check_alpha, level_label, resolve_seed, with_threads, AnalyzeArgs, CliError, CliResult, InputFormat, OutputKind};

pub const SCHEMA: &str = "cdpi.analysis/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub format: &'static str,
    #[serde(rename = "K")]
    pub k: usize,
    pub labels: Vec<String>,
    pub continuity_correction: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimates {
    pub mu_hat: f64,
    pub se_mu: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub q: f64,
    pub tau2_dl: f64,
    pub tau2_reml: f64,
    pub reml_converged: bool,
    /// Percent.
    pub i2: f64,
    pub p_het: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalEntry {
    pub method: Method,
    pub available: bool,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub length: Option<f64>,
    pub center: Option<f64>,
    pub tau2_used: Option<f64>,
    /// Share of bootstrap draws with tau2 = 0 (proposed method only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IntervalEntry {
    fn from_result(r: PredictionResult) -> Self {
        Self {
            method: r.method,
            available: true,
            lower: Some(r.lower),
            upper: Some(r.upper),
            length: Some(r.width),
            center: Some(r.center),
            tau2_used: Some(r.tau2_used),
            zero_fraction: r.bootstrap.map(|b| b.zero_fraction),
            note: r.warning,
        }
    }

    fn unavailable(method: Method, reason: String) -> Self {
        Self {
            method,
            available: false,
            lower: None,
            upper: None,
            length: None,
            center: None,
            tau2_used: None,
            zero_fraction: None,
            note: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema: &'static str,
    pub input_summary: InputSummary,
    pub estimates: Estimates,
    pub intervals: Vec<IntervalEntry>,
    pub settings: Settings,
    #[serde(skip)]
    pub studies: StudySet,
}

/// Runs every estimator and all four interval methods. A method that cannot
/// be applied (e.g. HTS with fewer than 3 studies) is reported unavailable;
/// a failure of the proposed method is an error.
pub fn analyze(data: &Dataset, alpha: f64, b: usize, seed: u64) -> CliResult<AnalysisReport> {
    let s = &data.studies;
    let fit = HeterogeneityFit::compute(s)?;
    let ci = ci_mean_dl(s, alpha)?;
    let mut intervals = Vec::with_capacity(Method::ALL.len());
    for method in Method::ALL {
        match prediction_interval(s, method, alpha, b, StreamSeed::new(seed)) {
            Ok(r) => intervals.push(IntervalEntry::from_result(r)),
            Err(e) if method == Method::Proposed => return Err(e.into()),
            Err(e) => intervals.push(IntervalEntry::unavailable(method, e.to_string())),
        }
    }
    let mut notes = Vec::new();
    if data.continuity_corrected {
        notes.push("continuity correction applied: 0.5 added to every cell of every table".to_owned());
    }
    if !fit.reml_converged {
        notes.push(format!("REML did not converge in {} iterations", fit.reml_iterations));
    }
    Ok(AnalysisReport {
        schema: SCHEMA,
        input_summary: InputSummary {
            format: match data.format {
                InputFormat::Effects => "effects",
                InputFormat::Counts => "counts",
            },
            k: s.len(),
            labels: (0..s.len()).map(|k| s.label(k)).collect(),
            continuity_correction: data.continuity_corrected,
            notes,
        },
        estimates: Estimates {
            mu_hat: fit.mu_hat,
            se_mu: fit.se_mu,
            ci_lower: ci.lower,
            ci_upper: ci.upper,
            q: fit.q,
            tau2_dl: fit.tau2_dl,
            tau2_reml: fit.tau2_reml,
            reml_converged: fit.reml_converged,
            i2: fit.i2,
            p_het: fit.p_het,
        },
        intervals,
        settings: Settings { alpha, b, seed },
        studies: s.clone(),
    })
}

pub fn write_json(r: &AnalysisReport, out: &mut dyn Write) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, r).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn interval_text(lower: f64, upper: f64) -> String {
    format!("[{lower:.4}, {upper:.4}]")
}

pub fn write_table(r: &AnalysisReport, out: &mut dyn Write) -> CliResult<()> {
    let e = &r.estimates;
    let lvl = level_label(r.settings.alpha);
    writeln!(out, "Random-effects meta-analysis ({} input)", r.input_summary.format)?;
    writeln!(out, "  {:<28}{}", "number of studies K", r.input_summary.k)?;
    writeln!(out, "  {:<28}{:.4}", "pooled mean (DL)", e.mu_hat)?;
    writeln!(out, "  {:<28}{}", format!("{lvl} CI"), interval_text(e.ci_lower, e.ci_upper))?;
    writeln!(out, "  {:<28}{:.4}", "tau2 (DL)", e.tau2_dl)?;
    writeln!(out, "  {:<28}{:.4}", "tau2 (REML)", e.tau2_reml)?;
    writeln!(out, "  {:<28}{:.1}%", "I2", e.i2)?;
    writeln!(out, "  {:<28}{:.4}", "P-value for heterogeneity", e.p_het)?;
    writeln!(out)?;
    writeln!(out, "{lvl} prediction intervals")?;
    writeln!(out, "  {:<10}{:<24}length", "method", "interval")?;
    for iv in &r.intervals {
        match (iv.lower, iv.upper, iv.length) {
            (Some(lo), Some(hi), Some(len)) => {
                writeln!(out, "  {:<10}{:<24}{:.4}", iv.method.name(), interval_text(lo, hi), len)?
            }
            _ => writeln!(
                out,
                "  {:<10}unavailable: {}",
                iv.method.name(),
                iv.note.as_deref().unwrap_or("")
            )?,
        }
    }
    writeln!(out)?;
    let s = &r.settings;
    writeln!(out, "alpha = {}, B = {}, seed = {}", s.alpha, s.b, s.seed)?;
    for iv in r.intervals.iter().filter(|iv| iv.available) {
        if let Some(n) = &iv.note {
            writeln!(out, "note ({}): {n}", iv.method.name())?;
        }
    }
    for n in &r.input_summary.notes {
        writeln!(out, "note: {n}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForestRow {
    pub kind: &'static str,
    pub label: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: String,
}

/// One row per study (estimate and Wald CI) followed by summary rows for
/// the pooled-mean CI and each available prediction interval.
pub fn forest_rows(r: &AnalysisReport) -> Vec<ForestRow> {
    let s = &r.studies;
    let z = normal_quantile(1.0 - r.settings.alpha / 2.0);
    let mut rows: Vec<ForestRow> = (0..s.len())
        .map(|k| {
            let half = z * s.sigma2()[k].sqrt();
            ForestRow {
                kind: "study",
                label: s.label(k),
                estimate: s.y()[k],
                lower: s.y()[k] - half,
                upper: s.y()[k] + half,
                method: String::new(),
            }
        })
        .collect();
    let e = &r.estimates;
    rows.push(ForestRow {
        kind: "summary",
        label: "pooled mean".into(),
        estimate: e.mu_hat,
        lower: e.ci_lower,
        upper: e.ci_upper,
        method: "CI".into(),
    });
    for iv in &r.intervals {
        if let (Some(c), Some(lo), Some(hi)) = (iv.center, iv.lower, iv.upper) {
            rows.push(ForestRow {
                kind: "summary",
                label: "prediction".into(),
                estimate: c,
                lower: lo,
                upper: hi,
                method: iv.method.name().into(),
            });
        }
    }
    rows
}

pub fn write_forest_csv(r: &AnalysisReport, out: &mut dyn Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in forest_rows(r) {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    check_alpha(args.alpha)?;
    if args.b < cdpi_core::predint::MIN_BOOTSTRAP {
        return Err(CliError::Usage(format!(
            "--B must be at least {}, got {}",
            cdpi_core::predint::MIN_BOOTSTRAP,
            args.b
        )));
    }
    let data = read_path(&args.input, args.format)?;
    let seed = resolve_seed(args.seed, err)?;
    let report = with_threads(args.threads, || analyze(&data, args.alpha, args.b, seed))??;
    match args.out {
        OutputKind::Table => write_table(&report, out),
        OutputKind::Json => write_json(&report, out),
        OutputKind::ForestCsv => write_forest_csv(&report, out),
    }
}
