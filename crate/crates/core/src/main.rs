//! Command-line front end: read CSV panels, run estimators, diagnostics, and
//! simulations, and write machine-readable tables next to a human summary.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use panel_did::diagnostics::did_weights;
use panel_did::estimators::{
    aggregated_att, aggregated_event_study, did_regression, naive_event_study, stacked_did,
    two_stage_did, two_stage_event_study, Estimand, Estimate, EventStudySpec, FirstStage,
    SeMethod, StackedOptions, TwoStageOptions,
};
use panel_did::panel::read_csv;
use panel_did::report::{
    render_estimate, render_mc_suite, write_estimate_csv, write_estimate_json,
    write_event_study_csv, write_mc_suite_csv, write_mc_suite_draws_csv, McSuiteRow,
};
use panel_did::simulation::{monte_carlo, simulate_panel, true_estimands, SimConfig};
use panel_did::{validate_panel, Error, Observation, Panel, Result, ValidationFlags};

#[derive(Parser)]
#[command(
    name = "panel-did",
    version,
    about = "Difference-in-differences estimators for staggered-adoption panels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate an average treatment effect from a CSV panel
    Estimate(EstimateArgs),
    /// Estimate lead and duration coefficients from a CSV panel
    EventStudy(EventStudyArgs),
    /// Report the implicit cell weights of the two-way FE regression
    Weights(WeightsArgs),
    /// Run a Monte Carlo suite over all estimators on a simulated design
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Did,
    TwoStage,
    Aggregated,
    Stacked,
}

#[derive(Clone, Copy, ValueEnum)]
enum EsMethod {
    Naive,
    TwoStage,
    Aggregated,
}

#[derive(Clone, Copy, ValueEnum)]
enum FirstStageArg {
    Untreated,
    Interacted,
    Saturated,
}

impl From<FirstStageArg> for FirstStage {
    fn from(value: FirstStageArg) -> Self {
        match value {
            FirstStageArg::Untreated => FirstStage::UntreatedOnly,
            FirstStageArg::Interacted => FirstStage::FullSampleInteracted,
            FirstStageArg::Saturated => FirstStage::Saturated,
        }
    }
}

fn parse_estimand(text: &str) -> std::result::Result<Estimand, String> {
    if text == "overall" {
        return Ok(Estimand::Overall);
    }
    if let Some(p) = text.strip_prefix("capped:") {
        let cap: i64 = p
            .parse()
            .map_err(|_| format!("bad duration cap {p:?} (expected an integer)"))?;
        if cap < 1 {
            return Err(format!("duration cap must be at least 1, got {cap}"));
        }
        return Ok(Estimand::Capped(cap));
    }
    Err(format!("bad estimand {text:?} (expected overall or capped:P)"))
}

#[derive(Args)]
struct InputArgs {
    /// CSV panel with columns unit,time,y[,first_treat][,cluster][,weight]
    input: PathBuf,
    /// Column to cluster standard errors on (default: `cluster` if present,
    /// else unit)
    #[arg(long, value_name = "COL")]
    cluster: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "two-stage")]
    method: Method,
    /// Target estimand: overall or capped:P
    #[arg(long, value_parser = parse_estimand, default_value = "overall")]
    estimand: Estimand,
    #[arg(long, value_enum, default_value = "untreated")]
    first_stage: FirstStageArg,
    /// Pre-treatment periods per stacked window
    #[arg(long, value_name = "R", default_value_t = 1)]
    leads: i64,
    /// Report the uncorrected second-stage standard error
    #[arg(long)]
    naive_se: bool,
    /// Directory for estimates.json and estimates.csv
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EventStudyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "two-stage")]
    method: EsMethod,
    /// Number of adoption leads R (indicators cover r = -R..=0)
    #[arg(long, value_name = "R", default_value_t = 1)]
    leads: i64,
    /// Maximum duration indicator P
    #[arg(long, value_name = "P", default_value_t = 4)]
    durations: i64,
    /// Drop treated observations beyond duration P instead of extending the
    /// indicators
    #[arg(long)]
    cap: bool,
    /// Adoption cohorts to exclude (aggregated method only; repeatable)
    #[arg(long, value_name = "COHORT")]
    exclude: Vec<i64>,
    #[arg(long, value_enum, default_value = "untreated")]
    first_stage: FirstStageArg,
    #[arg(long)]
    naive_se: bool,
    /// Directory for estimates.json and event_study.csv
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    /// CSV panel; omit when using --preset
    input: Option<PathBuf>,
    /// Use a simulated design instead of a CSV panel
    #[arg(long, value_name = "NAME", conflicts_with = "input")]
    preset: Option<String>,
    /// Replication seed for the simulated design
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for weights.csv
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in design: sim1 or sim2
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    preset: Option<String>,
    /// TOML file describing the design
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 250)]
    reps: u64,
    /// Master seed (overrides the config's seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Duration cap for the capped estimand rows
    #[arg(long, value_name = "P", default_value_t = 4)]
    durations: i64,
    /// Pre-treatment periods per stacked window
    #[arg(long, value_name = "R", default_value_t = 1)]
    leads: i64,
    /// Directory for mc_summary.csv and mc_draws.csv
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn load_panel(args: &InputArgs) -> Result<Panel> {
    let file = File::open(&args.input)?;
    let mut observations = read_csv(file)?;
    if let Some(col) = &args.cluster {
        if col != "cluster" {
            apply_cluster_column(&args.input, col, &mut observations)?;
        }
    }
    validate_panel(&observations, ValidationFlags::default())
}

/// Re-read the input and overwrite each observation's cluster with the named
/// column.
fn apply_cluster_column(
    path: &Path,
    column: &str,
    observations: &mut [Observation],
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    let idx = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, message: e.to_string() })?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Parse {
            row: 0,
            message: format!("cluster column {column:?} not found"),
        })?;
    for (o, rec) in observations.iter_mut().zip(rdr.records()) {
        let rec = rec.map_err(|e| Error::Parse { row: 0, message: e.to_string() })?;
        o.cluster = rec.get(idx).map(str::to_string);
    }
    Ok(())
}

fn out_dir(dir: &Option<PathBuf>) -> Result<Option<&Path>> {
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        Ok(Some(d))
    } else {
        Ok(None)
    }
}

fn write_estimate_outputs(dir: &Option<PathBuf>, estimate: &Estimate) -> Result<()> {
    if let Some(dir) = out_dir(dir)? {
        write_estimate_json(File::create(dir.join("estimates.json"))?, estimate)?;
        write_estimate_csv(File::create(dir.join("estimates.csv"))?, estimate)?;
    }
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let panel = load_panel(&args.input)?;
    let se = if args.naive_se { SeMethod::Naive } else { SeMethod::Gmm };
    let options = TwoStageOptions {
        estimand: args.estimand,
        first_stage: args.first_stage.into(),
        se,
        ..Default::default()
    };
    let estimate = match args.method {
        Method::Did => did_regression(&panel)?,
        Method::TwoStage => two_stage_did(&panel, &options)?,
        Method::Aggregated => aggregated_att(&panel, args.estimand)?.0,
        Method::Stacked => {
            let cap = match args.estimand {
                Estimand::Capped(p) => p,
                Estimand::Overall => {
                    return Err(Error::InvalidConfig(
                        "the stacked estimator targets a capped estimand; pass --estimand capped:P"
                            .into(),
                    ))
                }
            };
            stacked_did(&panel, &StackedOptions::new(args.leads, cap))?
        }
    };
    write_estimate_outputs(&args.out, &estimate)?;
    print!("{}", render_estimate(&estimate));
    Ok(())
}

fn cmd_event_study(args: &EventStudyArgs) -> Result<()> {
    let panel = load_panel(&args.input)?;
    let spec = if args.cap {
        EventStudySpec::capped(args.leads, args.durations)
    } else {
        EventStudySpec::new(args.leads, args.durations)
    };
    let estimate = match args.method {
        EsMethod::Naive => naive_event_study(&panel, &spec)?,
        EsMethod::TwoStage => {
            let se = if args.naive_se { SeMethod::Naive } else { SeMethod::Gmm };
            let options = TwoStageOptions {
                first_stage: args.first_stage.into(),
                se,
                ..Default::default()
            };
            two_stage_event_study(&panel, &spec, &options)?
        }
        EsMethod::Aggregated => aggregated_event_study(&panel, &spec, &args.exclude)?,
    };
    if let Some(dir) = out_dir(&args.out)? {
        write_estimate_json(File::create(dir.join("estimates.json"))?, &estimate)?;
        write_event_study_csv(File::create(dir.join("event_study.csv"))?, &estimate)?;
    }
    print!("{}", render_estimate(&estimate));
    Ok(())
}

fn cmd_weights(args: &WeightsArgs) -> Result<()> {
    let panel = match (&args.input, &args.preset) {
        (Some(path), None) => {
            load_panel(&InputArgs { input: path.clone(), cluster: None })?
        }
        (None, Some(name)) => simulate_panel(&SimConfig::preset(name)?, args.seed)?,
        _ => {
            return Err(Error::InvalidConfig(
                "pass a CSV panel or --preset, not both or neither".into(),
            ))
        }
    };
    let weights = did_weights(&panel)?;
    if let Some(dir) = out_dir(&args.out)? {
        weights.write_csv(File::create(dir.join("weights.csv"))?)?;
    }
    println!("group  period   weight");
    for cell in &weights.cells {
        println!("{:>5}  {:>6}  {:>7.3}", cell.adoption, cell.time, cell.weight);
    }
    println!(
        "{} cells; {} negative weights with total mass {:.3}{}",
        weights.cells.len(),
        weights.negative_count(),
        weights.negative_mass(),
        if weights.brute_force { " (unbalanced panel: regression path)" } else { "" },
    );
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut config = match (&args.preset, &args.config) {
        (Some(name), None) => SimConfig::preset(name)?,
        (None, Some(path)) => SimConfig::from_toml_str(&fs::read_to_string(path)?)?,
        (None, None) => SimConfig::sim1(),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    let truth = true_estimands(&config);
    let cap = args.durations;
    let capped = Estimand::Capped(cap);
    let capped_options = TwoStageOptions { estimand: capped, ..Default::default() };
    let stacked_options = StackedOptions::new(args.leads, cap);

    let mut rows = vec![
        McSuiteRow {
            method: "did".into(),
            estimand: "overall-att".into(),
            result: monte_carlo(&config, args.reps, |p| did_regression(p))?,
            truth: Some(truth.overall),
        },
        McSuiteRow {
            method: "two-stage".into(),
            estimand: "overall-att".into(),
            result: monte_carlo(&config, args.reps, |p| {
                two_stage_did(p, &TwoStageOptions::default())
            })?,
            truth: Some(truth.overall),
        },
        McSuiteRow {
            method: "aggregated".into(),
            estimand: "overall-att".into(),
            result: monte_carlo(&config, args.reps, |p| {
                aggregated_att(p, Estimand::Overall).map(|(e, _)| e)
            })?,
            truth: Some(truth.overall),
        },
    ];
    let capped_truth = truth.capped_at(cap);
    rows.push(McSuiteRow {
        method: "two-stage".into(),
        estimand: capped.to_string(),
        result: monte_carlo(&config, args.reps, |p| two_stage_did(p, &capped_options))?,
        truth: capped_truth,
    });
    rows.push(McSuiteRow {
        method: "aggregated".into(),
        estimand: capped.to_string(),
        result: monte_carlo(&config, args.reps, |p| {
            aggregated_att(p, capped).map(|(e, _)| e)
        })?,
        truth: capped_truth,
    });
    rows.push(McSuiteRow {
        method: "stacked".into(),
        estimand: capped.to_string(),
        result: monte_carlo(&config, args.reps, |p| stacked_did(p, &stacked_options))?,
        truth: capped_truth,
    });

    if let Some(dir) = out_dir(&args.out)? {
        write_mc_suite_csv(File::create(dir.join("mc_summary.csv"))?, &rows)?;
        write_mc_suite_draws_csv(File::create(dir.join("mc_draws.csv"))?, &rows)?;
    }
    println!("true overall = {:.3}, true capped({cap}) = {}", truth.overall, {
        capped_truth.map_or("n/a".into(), |v| format!("{v:.3}"))
    });
    print!("{}", render_mc_suite(&rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::EventStudy(args) => cmd_event_study(args),
        Command::Weights(args) => cmd_weights(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
