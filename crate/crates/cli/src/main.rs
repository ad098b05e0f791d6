//! `duckcurve`: probabilistic duck and ramp curves from PV/load history.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use duckcurve::curves::{build_prc_with, CurveModel, CurveOptions, ProbCurve, StepSpec, DEFAULT_BINS};
use duckcurve::dps::CumulativeRule;
use duckcurve::indices::{compute_indices, IndexOptions, SweepRow, DEFAULT_ALPHAS};
use duckcurve::ingest::{load_panel_with, LoadOptions, SeriesKind, TimePanel};
use duckcurve::oracle::{validate, ValidationOptions, DEFAULT_SAMPLES, DEFAULT_SEED};
use duckcurve::planning::{breakeven_point, daily_cost, load_resources, stack_resources, PlanResult};
use duckcurve::synth::{self, SynthConfig};

/// Exit code when validation ran but a threshold was exceeded.
const EXIT_THRESHOLD: u8 = 2;

#[derive(Parser)]
#[command(name = "duckcurve", version, about = "Probabilistic duck curves and ramp curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probabilistic duck curve: per-period net-load distributions.
    Pdc(CurveArgs),
    /// Probabilistic ramp curve: distributions of net-load change between adjacent periods.
    Prc(CurveArgs),
    /// Expected curves, confidence bands, PTV distribution and area sweep.
    Indices(IndexArgs),
    /// Size flexible resources against the area sweep.
    Plan(PlanArgs),
    /// Check every DDC result against a seeded Monte Carlo draw of the fitted model.
    Validate(ValidateArgs),
    /// Write the bundled synthetic PV/load dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Midpoint,
    Right,
}

#[derive(Args)]
struct Common {
    /// PV CSV (timestamp column plus one column per farm, MW).
    #[arg(long, requires = "input_load")]
    input_pv: Option<PathBuf>,
    /// Load CSV (timestamp column plus one column per node, MW).
    #[arg(long, requires = "input_pv")]
    input_load: Option<PathBuf>,
    /// Use the bundled synthetic dataset instead of input files.
    #[arg(long, conflicts_with_all = ["input_pv", "input_load"])]
    synthetic: bool,
    /// Periods per day.
    #[arg(long, default_value_t = 24)]
    periods: usize,
    /// Discretization step in MW.
    #[arg(long, conflicts_with = "bins", allow_negative_numbers = true)]
    step_mw: Option<f64>,
    /// Discretization step as peak total load divided by this many bins.
    #[arg(long)]
    bins: Option<usize>,
    /// First day to use (YYYY-MM-DD).
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last day to use (YYYY-MM-DD).
    #[arg(long)]
    to: Option<NaiveDate>,
    /// Where the copula density is evaluated inside each cell.
    #[arg(long, value_enum, default_value = "midpoint")]
    rule: RuleArg,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    common: Common,
    /// Quantiles for the fan CSV.
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.25, 0.5, 0.75, 0.95])]
    quantiles: Vec<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Lowest MOU of the sweep, MW (default 0).
    #[arg(long, allow_negative_numbers = true)]
    mou_min: Option<f64>,
    /// Highest MOU of the sweep, MW (default: peak total load).
    #[arg(long, allow_negative_numbers = true)]
    mou_max: Option<f64>,
    /// MOU grid spacing, MW (default: the discretization step).
    #[arg(long)]
    mou_step: Option<f64>,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    common: Common,
    /// Confidence levels in percent.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    /// TOML file with [[resources]] tables, cheapest break-even first.
    #[arg(long)]
    resources: PathBuf,
    /// Current minimum output of units before any flexibility is added, MW.
    #[arg(long, allow_negative_numbers = true)]
    mou_max: f64,
    /// Planning grid spacing, MW (default: the discretization step).
    #[arg(long)]
    mou_step: Option<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Monte Carlo draws per compared quantity.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// MOU levels for the area check, MW (default: 30-70% of peak load).
    #[arg(long, value_delimiter = ',')]
    mou: Vec<f64>,
    /// Also compare fitted and independent PDCs against the raw net loads.
    #[arg(long)]
    benchmark: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

struct Loaded {
    panel: TimePanel,
    options: CurveOptions,
    step_label: String,
}

fn load(common: &Common) -> Result<Loaded> {
    if common.periods == 0 {
        bail!("--periods must be positive");
    }
    let panel = match (&common.input_pv, &common.input_load, common.synthetic) {
        (Some(pv), Some(load), false) => {
            let options = LoadOptions {
                periods_per_day: common.periods,
                from: common.from,
                to: common.to,
            };
            let report = load_panel_with(pv, load, &options)
                .with_context(|| format!("loading {} and {}", pv.display(), load.display()))?;
            if report.dropped_days > 0 {
                log::warn!("dropped {} incomplete days", report.dropped_days);
            }
            if report.clamped_pv_values > 0 {
                log::warn!("raised {} negative PV readings to 0 MW", report.clamped_pv_values);
            }
            report.panel
        }
        (None, None, true) => {
            let panel = synth::bundled();
            if panel.periods_per_day() != common.periods {
                bail!("the synthetic dataset has 24 periods per day; drop --periods or set it to 24");
            }
            panel.filter_days(common.from, common.to)?
        }
        _ => bail!("give --input-pv and --input-load, or --synthetic"),
    };
    let spec = match (common.step_mw, common.bins) {
        (Some(mw), _) => StepSpec::Mw(mw),
        (None, Some(bins)) => StepSpec::Bins(bins),
        (None, None) => StepSpec::Bins(DEFAULT_BINS),
    };
    let step = spec.resolve(&panel)?;
    let step_label = match spec {
        StepSpec::Mw(_) => format!("step_mw={step}"),
        StepSpec::Bins(b) => format!("step_mw={step} bins={b}"),
    };
    let mut options = CurveOptions::new(step);
    options.rule = match common.rule {
        RuleArg::Midpoint => CumulativeRule::Midpoint,
        RuleArg::Right => CumulativeRule::Right,
    };
    Ok(Loaded {
        panel,
        options,
        step_label,
    })
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory, so a failed run never leaves a partial file.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(&target)
        .with_context(|| format!("writing {}", target.display()))?;
    Ok(target)
}

fn write_all(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in files {
        let path = write_atomic(dir, name, bytes)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn fan_csv(curve: &ProbCurve, quantiles: &[f64], step_label: &str) -> Result<Vec<u8>> {
    let rows = curve.quantile_fan(quantiles)?;
    let mut out = format!("# {step_label}\nperiod");
    for q in quantiles {
        out.push_str(&format!(",q{q}"));
    }
    out.push('\n');
    for (t, row) in rows.iter().enumerate() {
        out.push_str(&t.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out.into_bytes())
}

fn sweep_csv(rows: &[SweepRow], step_label: &str) -> Vec<u8> {
    let mut out = format!("# {step_label}\nmou_mw,s_mwh,ds_mwh_per_mw\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.mou_mw, r.s_mwh, r.ds_mwh_per_mw));
    }
    out.into_bytes()
}

fn check_quantiles(qs: &[f64]) -> Result<()> {
    if qs.is_empty() || qs.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        bail!("--quantiles must be in (0, 1)");
    }
    Ok(())
}

fn curves(loaded: &Loaded) -> Result<(ProbCurve, ProbCurve)> {
    let pdc = CurveModel::fit(&loaded.panel, &loaded.options)?.pdc()?;
    let prc = build_prc_with(&pdc, &loaded.panel, loaded.options.dependence, loaded.options.rule)?;
    Ok((pdc, prc))
}

fn cmd_curve(args: &CurveArgs, ramp: bool) -> Result<()> {
    check_quantiles(&args.quantiles)?;
    let loaded = load(&args.common)?;
    let pdc = CurveModel::fit(&loaded.panel, &loaded.options)?.pdc()?;
    let (curve, stem) = if ramp {
        let prc = build_prc_with(&pdc, &loaded.panel, loaded.options.dependence, loaded.options.rule)?;
        (prc, "prc")
    } else {
        (pdc, "pdc")
    };
    write_all(
        &args.common.out,
        &[
            (&format!("{stem}.json"), json(&curve)?),
            (&format!("{stem}_fan.csv"), fan_csv(&curve, &args.quantiles, &loaded.step_label)?),
        ],
    )
}

struct Sweep {
    min: f64,
    max: f64,
    step: f64,
}

fn sweep_range(args: &SweepArgs, loaded: &Loaded) -> Result<Sweep> {
    let step = args.mou_step.unwrap_or(loaded.options.step);
    let max = args.mou_max.unwrap_or_else(|| (loaded.panel.peak_total_load() / step).ceil() * step);
    let min = args.mou_min.unwrap_or(0.0);
    if !(step > 0.0) {
        bail!("--mou-step must be positive");
    }
    if !(max >= min) {
        bail!("--mou-max must not be below --mou-min");
    }
    Ok(Sweep { min, max, step })
}

#[derive(Serialize)]
struct IndexOutput<'a> {
    step_spec: &'a str,
    #[serde(flatten)]
    bundle: duckcurve::indices::IndexBundle,
}

fn cmd_indices(args: &IndexArgs) -> Result<()> {
    let alphas = if args.alpha.is_empty() {
        DEFAULT_ALPHAS.to_vec()
    } else {
        args.alpha.clone()
    };
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 100.0)) {
        bail!("--alpha values must be in (0, 100)");
    }
    let loaded = load(&args.common)?;
    let sweep = sweep_range(&args.sweep, &loaded)?;
    let (pdc, prc) = curves(&loaded)?;
    let options = IndexOptions {
        alphas,
        mou_min: sweep.min,
        mou_max: sweep.max,
        mou_step: sweep.step,
    };
    let bundle = compute_indices(&pdc, &prc, &loaded.panel, &options)?;
    let csv = sweep_csv(&bundle.area_sweep, &loaded.step_label);
    write_all(
        &args.common.out,
        &[
            (
                "indices.json",
                json(&IndexOutput {
                    step_spec: &loaded.step_label,
                    bundle,
                })?,
            ),
            ("area_sweep.csv", csv),
        ],
    )
}

#[derive(Serialize)]
struct ResourceRow {
    name: String,
    daily_cost_usd_per_mw: f64,
    breakeven_mwh_per_mw: f64,
}

#[derive(Serialize)]
struct PlanOutput<'a> {
    step_spec: &'a str,
    grid_step_mw: f64,
    table: Vec<ResourceRow>,
    plan: PlanResult,
    net_benefit_usd_per_day: f64,
}

fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let resources = load_resources(&args.resources)
        .with_context(|| format!("reading resources from {}", args.resources.display()))?;
    let loaded = load(&args.common)?;
    let step = args.mou_step.unwrap_or(loaded.options.step);
    if !(step > 0.0) {
        bail!("--mou-step must be positive");
    }
    let pdc = CurveModel::fit(&loaded.panel, &loaded.options)?.pdc()?;
    let plan = stack_resources(&pdc, args.mou_max, &resources, step, loaded.panel.period_hours())?;
    let table = resources
        .iter()
        .map(|r| {
            Ok(ResourceRow {
                name: r.name.clone(),
                daily_cost_usd_per_mw: daily_cost(r),
                breakeven_mwh_per_mw: breakeven_point(r)?,
            })
        })
        .collect::<Result<Vec<_>, duckcurve::Error>>()?;
    let out = PlanOutput {
        step_spec: &loaded.step_label,
        grid_step_mw: step,
        table,
        net_benefit_usd_per_day: plan.net_benefit(),
        plan,
    };
    write_all(&args.common.out, &[("plan.json", json(&out)?)])
}

fn cmd_validate(args: &ValidateArgs) -> Result<bool> {
    let loaded = load(&args.common)?;
    let options = ValidationOptions {
        curve: loaded.options,
        samples: args.samples,
        seed: args.seed,
        mou_levels: args.mou.clone(),
        benchmark: args.benchmark,
    };
    let report = validate(&loaded.panel, &options)?;
    write_all(&args.common.out, &[("validation_report.json", json(&report)?)])?;
    for failure in report.failures() {
        eprintln!("threshold exceeded: {failure}");
    }
    Ok(report.pass)
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut config = SynthConfig::default();
    if let Some(days) = args.days {
        config.days = days;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let panel = synth::generate(&config)?;
    let mut pv = Vec::new();
    let mut load = Vec::new();
    panel.write_kind(SeriesKind::Pv, &mut pv)?;
    panel.write_kind(SeriesKind::Load, &mut load)?;
    write_all(&args.out, &[("pv.csv", pv), ("load.csv", load)])
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Pdc(a) => cmd_curve(a, false)?,
        Command::Prc(a) => cmd_curve(a, true)?,
        Command::Indices(a) => cmd_indices(a)?,
        Command::Plan(a) => cmd_plan(a)?,
        Command::Validate(a) => return cmd_validate(a),
        Command::Synth(a) => cmd_synth(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // help and version go to stdout with code 0; usage errors share
        // code 1 with every other error so 2 stays unambiguous
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_THRESHOLD),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
