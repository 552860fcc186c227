use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stwj::distributions::{sample_clayton_bivariate, MarginalDist};
use stwj::finance::{self, PriceSeries, QqMode};
use stwj::gptest::{self, DEFAULT_K, DEFAULT_N_SIMS};
use stwj::montecarlo::{self, CaseId, ExperimentConfig, TestKind};
use stwj::oracle::{self, DiscreteBivariate};
use stwj::{Error, PairedSample};

#[derive(Debug, Parser)]
#[command(name = "stwj", version, about = "Weak joint stochastic dominance toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test X ≤st:wj Y on a paired `x,y` CSV and write a JSON result.
    Test(TestArgs),
    /// Run a Monte Carlo rejection-rate experiment for one scenario.
    Mc(McArgs),
    /// Compare two assets (or two portfolios sharing a third asset) from price CSVs.
    Portfolio(PortfolioArgs),
    /// Write Q-Q plot data for a paired CSV.
    Qq(QqArgs),
    /// Write a simulated paired sample as CSV.
    Simulate(SimulateArgs),
    /// Exact order checks on a finite law given as an `x,y,p` CSV.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct SimFlags {
    /// Number of grid intervals.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Number of Gaussian-process simulations.
    #[arg(long = "n-sims", default_value_t = DEFAULT_N_SIMS)]
    n_sims: usize,
    /// Random seed (required).
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    sim: SimFlags,
    /// Evaluate at the realized differences instead of an equally spaced grid.
    #[arg(long)]
    discrete: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long)]
    case: CaseId,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    replications: usize,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long = "n-sims", default_value_t = 2000)]
    n_sims: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.01])]
    levels: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values = ["stwj", "t", "wilcoxon"])]
    tests: Vec<TestKind>,
    #[arg(long)]
    seed: u64,
    /// CSV report path (stdout when omitted).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PortfolioArgs {
    /// Price CSV of asset X.
    #[arg(long)]
    x: PathBuf,
    /// Price CSV of asset Y.
    #[arg(long)]
    y: PathBuf,
    /// Price CSV of a shared asset Z; compares (1-α)X+αZ with (1-α)Y+αZ.
    #[arg(long, requires = "alpha")]
    z: Option<PathBuf>,
    #[arg(long, requires = "z")]
    alpha: Option<f64>,
    #[command(flatten)]
    sim: SimFlags,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QqModeArg {
    Marginals,
    Differences,
}

#[derive(Debug, Args)]
struct QqArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = QqModeArg::Differences)]
    mode: QqModeArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Benchmark scenario C1..C8.
    #[arg(long, conflicts_with_all = ["theta", "x_dist", "y_dist"], required_unless_present = "theta")]
    case: Option<CaseId>,
    /// Clayton parameter for a custom scenario.
    #[arg(long, requires_all = ["x_dist", "y_dist"])]
    theta: Option<f64>,
    /// Marginal of X for a custom scenario, e.g. `pareto:2,1` or `weibull:1.5,1.5`.
    #[arg(long = "x-dist", value_parser = parse_marginal)]
    x_dist: Option<MarginalDist>,
    #[arg(long = "y-dist", value_parser = parse_marginal)]
    y_dist: Option<MarginalDist>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    input: PathBuf,
}

fn parse_marginal(s: &str) -> Result<MarginalDist, String> {
    let (family, params) = s
        .split_once(':')
        .ok_or_else(|| format!("expected FAMILY:A,B, got `{s}`"))?;
    let nums: Vec<f64> = params
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [a, b] = nums[..] else {
        return Err(format!("expected two parameters, got {}", nums.len()));
    };
    let d = match family {
        "normal" => MarginalDist::normal(a, b),
        "pareto" => MarginalDist::pareto(a, b),
        "weibull" => MarginalDist::weibull(a, b),
        other => return Err(format!("unknown family `{other}`")),
    };
    d.map_err(|e| e.to_string())
}

fn open(path: &Path) -> stwj::Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn sink(path: Option<&Path>) -> stwj::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> stwj::Result<()> {
    let mut w = sink(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn read_pairs(path: &Path) -> stwj::Result<PairedSample> {
    PairedSample::read_csv(open(path)?)
}

fn run_test(a: TestArgs) -> stwj::Result<()> {
    let s = read_pairs(&a.input)?;
    let r = if a.discrete {
        gptest::test_st_wj_discrete_support(&s, a.sim.n_sims, a.sim.seed)?
    } else {
        gptest::test_st_wj(&s, a.sim.k, a.sim.n_sims, a.sim.seed)?
    };
    eprintln!(
        "n = {}, statistic = {:.6}, p1 = {:?}, p2 = {:?}, reject at 0.05: {}",
        r.n, r.statistic, r.p1, r.p2, r.reject_at_0_05
    );
    write_text(a.output.as_deref(), &r.to_json()?)
}

fn run_mc(a: McArgs) -> stwj::Result<()> {
    let cfg = ExperimentConfig {
        case: a.case,
        n: a.n,
        replications: a.replications,
        k: a.k,
        n_sims: a.n_sims,
        levels: a.levels,
        master_seed: a.seed,
        tests: a.tests,
    };
    let report = montecarlo::run_rejection_experiment(&cfg)?;
    for row in &report.rows {
        eprintln!(
            "{} n={} {:>8} level {:<5} rate {:.3} failures {}",
            cfg.case,
            cfg.n,
            row.test.name(),
            row.level,
            row.rate,
            row.failures
        );
    }
    eprintln!("wall time {:.2?}", report.wall_time);
    let mut w = sink(a.csv.as_deref())?;
    report.write_csv(&mut w)?;
    w.flush()?;
    if let Some(p) = a.json.as_deref() {
        write_text(Some(p), &report.to_json()?)?;
    }
    Ok(())
}

fn run_portfolio(a: PortfolioArgs) -> stwj::Result<()> {
    let returns = |p: &Path| -> stwj::Result<_> { finance::weekly_returns(&PriceSeries::read_csv(open(p)?)?) };
    let rx = returns(&a.x)?;
    let ry = returns(&a.y)?;
    let (px, py) = match (&a.z, a.alpha) {
        (Some(z), Some(alpha)) => {
            let rz = returns(z)?;
            (
                finance::portfolio_returns(alpha, &rx, &rz)?,
                finance::portfolio_returns(alpha, &ry, &rz)?,
            )
        }
        _ => (rx, ry),
    };
    let s = finance::align(&px, &py)?;
    let report = finance::analyze_pair(&s, a.sim.k, a.sim.n_sims, a.sim.seed)?;
    eprintln!("{} aligned weeks, verdict {:?}", s.len(), report.verdict);
    write_text(a.output.as_deref(), &report.to_json()?)
}

fn run_qq(a: QqArgs) -> stwj::Result<()> {
    let s = read_pairs(&a.input)?;
    let mode = match a.mode {
        QqModeArg::Marginals => QqMode::Marginals,
        QqModeArg::Differences => QqMode::Differences,
    };
    let q = finance::qq_export(&s, mode);
    let mut w = sink(a.output.as_deref())?;
    q.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> stwj::Result<()> {
    let s = match (a.case, a.theta, a.x_dist, a.y_dist) {
        (Some(case), ..) => montecarlo::generate_scenario(case, a.n, a.seed)?,
        (None, Some(theta), Some(x), Some(y)) => sample_clayton_bivariate(theta, &x, &y, a.n, a.seed)?,
        _ => return Err(Error::Parameter("give --case or --theta with --x-dist and --y-dist".into())),
    };
    let mut w = sink(a.output.as_deref())?;
    s.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run_oracle(a: OracleArgs) -> stwj::Result<()> {
    let d = DiscreteBivariate::read_csv(open(&a.input)?)?;
    let forward = oracle::check_st_wj_discrete(&d);
    let reverse = oracle::check_st_wj_discrete(&d.swapped());
    let (p_xy, p_yx) = oracle::check_precedence(&d);
    let marginals = oracle::check_st_marginals_discrete(&d);
    eprintln!(
        "st:wj X<=Y {}, Y<=X {}, P(X>Y) = {p_xy}, P(Y>X) = {p_yx}{}",
        if forward.holds { "holds" } else { "fails" },
        if reverse.holds { "holds" } else { "fails" },
        if (p_xy - p_yx).abs() <= oracle::PROB_TOL { " (precedence tied)" } else { "" },
    );
    let out = serde_json::json!({
        "st_wj_x_le_y": forward,
        "st_wj_y_le_x": reverse,
        "p_x_gt_y": p_xy,
        "p_y_gt_x": p_yx,
        "st_marginals": marginals,
    });
    write_text(None, &serde_json::to_string_pretty(&out)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Test(a) => run_test(a),
        Command::Mc(a) => run_mc(a),
        Command::Portfolio(a) => run_portfolio(a),
        Command::Qq(a) => run_qq(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Oracle(a) => run_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Parameter(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
