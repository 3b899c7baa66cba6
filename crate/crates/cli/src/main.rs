use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use rankshape_core::estimators::{SphericityTester, DEFAULT_MAX_ITER, DEFAULT_TOL};
use rankshape_core::harness::{parse_config, render_report};
use rankshape_core::onestep::parse_vector;
use rankshape_core::{
    are_table, gaussian_shape, hr_median, r_estimate, render_are_csv, run_sim, sample, tyler_shape, Location,
    OneStepConfig, Preliminary, QuadratureSpec, RadialFamily, RadialModel, SampleMatrix, ScoreFamily, ShapeMatrix,
    SimConfig,
};

#[derive(Parser)]
#[command(name = "rankshape", version, about = "Rank-based estimation of elliptical shape matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw an elliptical sample and write it as CSV.
    Sample(SampleArgs),
    /// Estimate the shape matrix of a CSV sample.
    Estimate(EstimateArgs),
    /// Rank-based test of the hypothesis V = V0.
    Test(TestArgs),
    /// Asymptotic relative efficiencies as CSV.
    AreTable(AreArgs),
    /// Run a Monte Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// normal, t:NU or e:ETA
    #[arg(long)]
    family: RadialFamily,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Location as "v1,v2,..." (default: origin)
    #[arg(long)]
    location: Option<String>,
    /// Shape matrix as "a,b;c,d" rows (default: identity)
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Tyler,
    Gaussian,
    Hr,
    Ronestep,
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV file, or "-" for standard input
    #[arg(long)]
    data: String,
    #[arg(long, value_enum)]
    method: Method,
    /// "auto" (HR median) or "v1,v2,..."
    #[arg(long, default_value = "auto")]
    theta: String,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Score family for ronestep: vdw, t:NU, e:ETA or const
    #[arg(long, default_value = "vdw")]
    scores: ScoreFamily,
    #[arg(long, default_value = "tyler")]
    preliminary: Preliminary,
    /// Location for ronestep: auto or known:v1,v2,... (overrides --theta)
    #[arg(long)]
    location: Option<Location>,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    data: String,
    /// Null shape as "a,b;c,d" rows (default: identity)
    #[arg(long)]
    v0: Option<String>,
    /// "auto" (HR median) or "v1,v2,..."
    #[arg(long, default_value = "auto")]
    theta: String,
    #[arg(long, default_value = "vdw")]
    scores: ScoreFamily,
}

#[derive(Args)]
struct AreArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,6,10")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "t:0.5,t:3,t:10,vdw")]
    scores: Vec<ScoreFamily>,
    #[arg(long, value_delimiter = ',', default_value = "t:0.5,t:3,t:10,normal")]
    under: Vec<RadialFamily>,
    /// Include the nu -> 0 Student limit column
    #[arg(long)]
    limits: bool,
    #[arg(long, default_value_t = 3)]
    decimals: usize,
    /// Quadrature node budget
    #[arg(long, default_value_t = 512)]
    nodes: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Table2,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Report path (default: the config's output, else standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Override the number of replications
    #[arg(long)]
    replications: Option<usize>,
    /// Override the sample sizes, e.g. "250"
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Test(a) => cmd_test(a),
        Command::AreTable(a) => cmd_are(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn parse_matrix(s: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_vector).collect::<Result<_, _>>()?;
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        bail!("matrix '{s}' is not square");
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn read_data(path: &str) -> Result<SampleMatrix> {
    let data = if path == "-" {
        SampleMatrix::read_csv(io::stdin().lock())
    } else {
        let f = File::open(path).with_context(|| format!("cannot open {path}"))?;
        SampleMatrix::read_csv(BufReader::new(f))
    };
    data.with_context(|| format!("cannot read data from {path}"))
}

fn resolve_theta(spec: &str, data: &SampleMatrix, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    if spec.trim().eq_ignore_ascii_case("auto") {
        return Ok(hr_median(data, tol, 4 * max_iter)?.location);
    }
    let v = parse_vector(spec)?;
    if v.len() != data.k() {
        bail!("theta has {} entries but the data has {} columns", v.len(), data.k());
    }
    Ok(DVector::from_vec(v))
}

fn print_matrix(out: &mut impl Write, m: &DMatrix<f64>) -> io::Result<()> {
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let shape = match &a.shape {
        Some(s) => ShapeMatrix::new(parse_matrix(s)?)?,
        None => ShapeMatrix::identity(a.k),
    };
    let location = match &a.location {
        Some(s) => parse_vector(s)?,
        None => vec![0.0; a.k],
    };
    let model = RadialModel::new(a.family, location, a.scale, shape)?;
    let data = sample(&model, a.n, a.seed)?;
    match a.out {
        Some(p) => data.write_csv(File::create(&p).with_context(|| format!("cannot create {}", p.display()))?)?,
        None => data.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let data = read_data(&a.data)?;
    let mut out = io::stdout().lock();
    match a.method {
        Method::Tyler | Method::Gaussian => {
            let report = match a.method {
                Method::Tyler => {
                    let theta = resolve_theta(&a.theta, &data, a.tol, a.max_iter)?;
                    tyler_shape(&data, &theta, a.tol, a.max_iter)?
                }
                _ => gaussian_shape(&data)?,
            };
            print_matrix(&mut out, report.shape.as_matrix())?;
            writeln!(
                out,
                "# method={} iterations={} residual={:e}",
                report.method, report.iterations, report.residual
            )?;
        }
        Method::Hr => {
            let hr = hr_median(&data, a.tol, a.max_iter)?;
            print_matrix(&mut out, hr.shape.as_matrix())?;
            let loc: Vec<String> = hr.location.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "# location={}", loc.join(","))?;
            writeln!(
                out,
                "# method=hr iterations={} residual={:e}",
                hr.iterations,
                hr.location_residual.max(hr.shape_residual)
            )?;
        }
        Method::Ronestep => {
            let location = match a.location {
                Some(l) => l,
                None if a.theta.trim().eq_ignore_ascii_case("auto") => Location::Hr,
                None => Location::Known(parse_vector(&a.theta)?),
            };
            let cfg = OneStepConfig {
                scores: a.scores,
                preliminary: a.preliminary,
                location,
                tyler_tol: a.tol,
                tyler_max_iter: a.max_iter,
                ..OneStepConfig::default()
            };
            let r = r_estimate(&data, &cfg)?;
            print_matrix(&mut out, r.shape.as_matrix())?;
            let loc: Vec<String> = r.location.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "# location={}", loc.join(","))?;
            writeln!(out, "# beta_star={}", r.beta_star)?;
            writeln!(out, "# alpha_star={}", if r.alpha_star.is_finite() { r.alpha_star.to_string() } else { "inf".into() })?;
            writeln!(out, "# evaluations={}", r.evaluations)?;
            writeln!(out, "# fallback={}", r.fallback)?;
            if let Some(w) = r.warning {
                writeln!(out, "# warning={w}")?;
            }
        }
    }
    Ok(())
}

fn cmd_test(a: TestArgs) -> Result<()> {
    let data = read_data(&a.data)?;
    let v0 = match &a.v0 {
        Some(s) => ShapeMatrix::new(parse_matrix(s)?)?,
        None => ShapeMatrix::identity(data.k()),
    };
    let theta = resolve_theta(&a.theta, &data, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let t = SphericityTester::new(a.scores, data.k(), &QuadratureSpec::default())?.test(&data, &theta, &v0)?;
    println!("Q={}", t.q);
    println!("df={}", t.df);
    println!("p={}", t.p_value);
    Ok(())
}

fn cmd_are(a: AreArgs) -> Result<()> {
    let quad = QuadratureSpec { nodes: a.nodes, ..QuadratureSpec::default() };
    let cells = are_table(&a.k, &a.scores, &a.under, a.limits, &quad)?;
    print!("{}", render_are_csv(&cells, a.decimals));
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            parse_config(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        (None, Some(Preset::Table2)) => SimConfig::table2(),
        (None, None) => bail!("either --config or --preset is required"),
    };
    if let Some(m) = a.replications {
        cfg.replications = m;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    // per-replication fallback warnings are summarized below instead
    if std::env::var_os("RUST_LOG").is_none() {
        log::set_max_level(log::LevelFilter::Error);
    }
    let report = match a.threads {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build()?.install(|| run_sim(&cfg))?,
        None => run_sim(&cfg)?,
    };
    for row in report.rows.iter().filter(|r| r.fallbacks > 0 || r.failures > 0) {
        eprintln!(
            "note: {} {} {} under {}{} n={}: {} fallbacks to the preliminary, {} failures of {}",
            row.estimator,
            row.scores,
            row.preliminary,
            row.family,
            row.param.map(|p| format!(":{p}")).unwrap_or_default(),
            row.n,
            row.fallbacks,
            row.failures,
            row.replications
        );
    }
    let text = render_report(&report);
    match a.out.or(cfg.output) {
        Some(p) => std::fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
