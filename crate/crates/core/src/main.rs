use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use ivxj::csv_io::{read_panel_path, write_panel_path};
use ivxj::inference::{estimate_variants, Variant};
use ivxj::local_projection::{estimate_lp, LongHorizonConfig, Restriction};
use ivxj::montecarlo::{
    mult_table_csv, reference_grid, run_grid, run_mult_grid, uni_long_csv, uni_table_csv, McOptions, MultCell,
    OmegaDraw, UniTable,
};
use ivxj::report::{standardization_factor, EstimateReport, EstimateRun, Failure, LpRun, PanelInfo, SCHEMA_VERSION};
use ivxj::simulate::{replication_rng, simulate_panel, SimulationSpec};
use ivxj::{Error, IvxConfig, Panel};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "ivxj", version, about = "Bias-corrected panel predictive regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the univariate variants on a long-format panel CSV.
    Estimate(EstimateArgs),
    /// Multivariate, multi-horizon local projection.
    Lp(LpArgs),
    /// Simulate one panel and write it as CSV.
    Simulate(SimulateArgs),
    /// Regenerate the simulation tables.
    ReplicateTables(ReplicateArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct IvxArgs {
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    cz: f64,
    #[arg(long, default_value_t = 0.95)]
    theta: f64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

impl IvxArgs {
    fn config(&self) -> Result<IvxConfig, Error> {
        IvxConfig::new(self.cz, self.theta, self.level)
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    ivx: IvxArgs,
    /// Comma-separated list, e.g. IVXJ,WG-XJ; all eight when absent.
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<String>,
    /// Hypothesized slope for the t-statistic.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    null: f64,
    /// Restrictions for a multivariate panel (JSON `{"a": [[..]], "q": [..]}` or CSV with q last).
    #[arg(long)]
    restrictions: Option<PathBuf>,
    /// Report coefficients and SEs per 100 sample standard deviations of x.
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct LpArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    ivx: IvxArgs,
    /// Comma-separated horizons, e.g. 1,3,5.
    #[arg(long, value_delimiter = ',', required = true)]
    horizons: Vec<usize>,
    /// Linear restrictions A β = q for the Wald test, as JSON or CSV.
    #[arg(long)]
    restrictions: Option<PathBuf>,
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation settings as TOML; the flags below build a univariate design otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    periods: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = 0.7, allow_hyphen_values = true)]
    omega12: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the settings used, as TOML.
    #[arg(long)]
    write_spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OmegaDrawArg {
    Fixed,
    PerCell,
    PerReplication,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 20240101)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    ivx: IvxArgs,
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    threads: Option<usize>,
    /// Sample sizes n = T for the multivariate table.
    #[arg(long, value_delimiter = ',', default_values_t = vec![30, 50, 100])]
    mult_sizes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = OmegaDrawArg::Fixed)]
    omega_draw: OmegaDrawArg,
    #[arg(long)]
    skip_univariate: bool,
    #[arg(long)]
    skip_multivariate: bool,
}

fn parse_variants(names: &[String]) -> Result<Vec<Variant>, Error> {
    if names.is_empty() {
        return Ok(Variant::ALL.to_vec());
    }
    names.iter().map(|s| s.parse()).collect()
}

#[derive(Deserialize)]
struct RestrictionFile {
    a: Vec<Vec<f64>>,
    q: Vec<f64>,
}

fn read_restrictions(path: &Path, k: usize) -> Result<Restriction, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
    let (a, q) = if is_json {
        let f: RestrictionFile = serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("restrictions: {e}")))?;
        (f.a, f.q)
    } else {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut a = Vec::new();
        let mut q = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidConfig(format!("restrictions: {e}")))?;
            if vals.len() < 2 {
                return Err(Error::InvalidConfig("restriction rows need k coefficients and q".into()));
            }
            q.push(vals[vals.len() - 1]);
            a.push(vals[..vals.len() - 1].to_vec());
        }
        (a, q)
    };
    if a.iter().any(|row| row.len() != k) {
        return Err(Error::InvalidConfig(format!("every restriction row needs {k} coefficients")));
    }
    let m = a.len();
    Restriction::new(DMatrix::from_fn(m, k, |r, c| a[r][c]), DVector::from_vec(q))
}

fn emit(output: &OutputArgs, json: impl FnOnce() -> String, csv: impl FnOnce() -> String) -> Result<(), Error> {
    let text = match output.format {
        Format::Json => json(),
        Format::Csv => csv(),
    };
    match &output.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn run_lp(panel: &Panel, config: IvxConfig, horizons: Vec<usize>, restriction: Option<Restriction>, standardize: bool, output: &OutputArgs) -> Result<(), Error> {
    let mut lp = LongHorizonConfig::new(horizons, config);
    lp.restriction = restriction;
    let res = estimate_lp(panel, &lp)?;
    let run = LpRun::new(panel, &config, &res, standardize);
    emit(output, || to_json(&run), || run.to_csv())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Error> {
    let config = args.ivx.config()?;
    let panel = read_panel_path(&args.input)?;
    if panel.k() > 1 {
        let restriction = args.restrictions.as_deref().map(|p| read_restrictions(p, panel.k())).transpose()?;
        return run_lp(&panel, config, vec![1], restriction, args.standardize, &args.output);
    }
    if args.restrictions.is_some() {
        return Err(Error::InvalidConfig("restrictions need a multivariate panel or the lp command".into()));
    }
    let variants = parse_variants(&args.estimators)?;
    let scale = if args.standardize { standardization_factor(&panel, 0) } else { 1.0 };
    let results = estimate_variants(&panel, &config, &variants, args.null / scale)?;
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (v, r) in variants.iter().zip(results) {
        match r {
            Ok(e) => estimates.push(EstimateReport::new(&e, scale)),
            Err(e) => failures.push(Failure::new(v.label(), &e)),
        }
    }
    if estimates.is_empty() {
        if let Some(f) = failures.first() {
            return Err(Error::SingularDesign(format!("every estimator failed; first: {}", f.error)));
        }
    }
    let run = EstimateRun {
        schema_version: SCHEMA_VERSION,
        command: "estimate",
        config,
        panel: PanelInfo::new(&panel, &config),
        standardized: args.standardize,
        estimates,
        failures,
    };
    emit(&args.output, || to_json(&run), || run.to_csv())
}

fn cmd_lp(args: LpArgs) -> Result<(), Error> {
    let config = args.ivx.config()?;
    let panel = read_panel_path(&args.input)?;
    let restriction = args.restrictions.as_deref().map(|p| read_restrictions(p, panel.k())).transpose()?;
    run_lp(&panel, config, args.horizons, restriction, args.standardize, &args.output)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let mut spec = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            SimulationSpec::from_toml_str(&text)?
        }
        None => SimulationSpec::univariate(args.n, args.periods, args.rho, args.beta, args.omega12),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let panel = simulate_panel(&spec, &mut replication_rng(spec.seed, 0, 0))?;
    write_panel_path(&panel, &args.out)?;
    if let Some(p) = &args.write_spec {
        fs::write(p, spec.to_toml_string()?).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn cmd_replicate(args: ReplicateArgs) -> Result<(), Error> {
    let config = args.ivx.config()?;
    let variants = parse_variants(&args.estimators)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::Io(format!("{}: {e}", args.out.display())))?;
    let opts = McOptions {
        reps: args.reps,
        seed: args.seed,
        ivx: config,
        threads: args.threads,
    };
    let write = |name: &str, text: String| -> Result<(), Error> {
        let p = args.out.join(name);
        fs::write(&p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
    };
    if !args.skip_univariate {
        let summaries = run_grid(&reference_grid(), &variants, &opts)?;
        match args.format {
            Format::Csv => {
                write("table_s1_bias.csv", uni_table_csv(&summaries, UniTable::Bias))?;
                write("table_s2_rmse.csv", uni_table_csv(&summaries, UniTable::Rmse))?;
                write("table_s3_coverage.csv", uni_table_csv(&summaries, UniTable::Coverage))?;
            }
            Format::Json => write("univariate_summaries.json", to_json(&summaries))?,
        }
        write("univariate_long.csv", uni_long_csv(&summaries))?;
        let failed: usize = summaries.iter().map(|s| s.failures).sum();
        if failed * 1000 > summaries.len() * args.reps {
            write(
                "warnings.txt",
                format!("{failed} failed estimator replications out of {}\n", summaries.len() * args.reps),
            )?;
        }
    }
    if !args.skip_multivariate {
        let draw = match args.omega_draw {
            OmegaDrawArg::Fixed => OmegaDraw::Fixed,
            OmegaDrawArg::PerCell => OmegaDraw::PerCell,
            OmegaDrawArg::PerReplication => OmegaDraw::PerReplication,
        };
        let cells: Vec<MultCell> = args.mult_sizes.iter().map(|&n| MultCell::reference(n, draw)).collect();
        let summaries = run_mult_grid(&cells, &opts)?;
        match args.format {
            Format::Csv => write("table_multivariate.csv", mult_table_csv(&summaries))?,
            Format::Json => write("multivariate_summaries.json", to_json(&summaries))?,
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Lp(a) => cmd_lp(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::ReplicateTables(a) => cmd_replicate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.is_input_error() { "input" } else { "numerical" };
            let body = serde_json::json!({ "error": kind, "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_NUMERICAL })
        }
    }
}
