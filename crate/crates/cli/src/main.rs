use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use wassball::attack::{AttackConfig, AttackMethod};
use wassball::GridShape;
use wassball_cli::attack::{
    attack_batch, load_batch, sample_rows, toy_batch, toy_model, trace_rows,
};
use wassball_cli::bench::{run_dykstra_bench, BenchConfig};
use wassball_cli::output::{emit, write_csv, Format};
use wassball_cli::project::{
    random_pair, run_project, run_table1, ProjectMethod, ProjectSettings, Table1Config,
};
use wassball_cli::schema::AttackFile;
use wassball_cli::verify::verify;
use wassball_cli::{exit_code, wadv, EXIT_FAILURE, EXIT_OK};

#[derive(Parser, Debug)]
#[command(
    name = "wassball",
    version,
    about = "Wasserstein-ball attacks, projections and checks"
)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Attack the seeded toy classifier.
    Attack(AttackArgs),
    /// Recheck an attack result file.
    Verify(VerifyArgs),
    /// Project one image onto the ball around another.
    Project(ProjectArgs),
    /// Compare the dual projection with Dykstra's algorithm.
    DykstraBench(BenchArgs),
    /// Projection sanity experiment on random 20×20 images.
    Table1(Table1Args),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AttackMethodArg {
    PgdDualProjection,
    FwDualLmo,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ProjectMethodArg {
    ProjectDual,
    ProjectEntropic,
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[arg(long, value_enum, default_value_t = AttackMethodArg::PgdDualProjection)]
    method: AttackMethodArg,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 30)]
    iterations: usize,
    #[arg(long, default_value_t = 0.1)]
    step_size: f64,
    /// Entropic regularization; fw-dual-lmo only.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Clip pixels to 1 with the capacity projection after the last step.
    #[arg(long)]
    post_process: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of held-out toy images to attack.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// WADV array `[count, channels, height, width]` to attack instead.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write the per-iteration loss and accuracy curve to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Bisection tolerance.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Attack result file (JSON).
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long, value_enum, default_value_t = ProjectMethodArg::ProjectDual)]
    method: ProjectMethodArg,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Defaults to 30000 for project-dual and 60000 for project-entropic.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    /// Entropic regularization; project-entropic only.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Side of the random square images when no input is given.
    #[arg(long, default_value_t = 20)]
    side: usize,
    /// WADV array `[2, channels, height, width]`: source, then target.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 6)]
    side: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Dykstra passes per instance.
    #[arg(long, default_value_t = 100_000)]
    iterations: usize,
    /// Bisection tolerance of the dual projection.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Write the Dykstra residuals of the first instance to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Table1Args {
    /// Image seed; a fresh random one when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 30_000)]
    pgd_iterations: usize,
    #[arg(long, default_value_t = 60_000)]
    fw_iterations: usize,
}

fn usage_error(msg: &str) -> ! {
    Cli::command()
        .error(ErrorKind::ArgumentConflict, msg)
        .exit()
}

fn attack(args: AttackArgs, format: Format, out: Option<&Path>) -> Result<i32> {
    let method = match args.method {
        AttackMethodArg::PgdDualProjection => AttackMethod::PgdDualProjection,
        AttackMethodArg::FwDualLmo => AttackMethod::FwDualLmo,
    };
    if args.gamma.is_some() && method != AttackMethod::FwDualLmo {
        usage_error("--gamma only applies to --method fw-dual-lmo");
    }
    let config = AttackConfig {
        method,
        epsilon: args.epsilon,
        iterations: args.iterations,
        step_size: args.step_size,
        gamma: args.gamma.unwrap_or(AttackConfig::default().gamma),
        k: args.k,
        post_process: args.post_process,
        seed: args.seed,
        tol: args.tol,
        ..AttackConfig::default()
    };
    config.validate()?;
    let model = toy_model(args.seed)?;
    let batch = match &args.input {
        Some(path) => load_batch(path, &model)?,
        None => toy_batch(args.seed, args.samples)?,
    };
    let file = attack_batch(&model, &batch, &config, args.trace.is_some())?;
    if let Some(path) = &args.trace {
        write_csv(&trace_rows(&file), Some(path))?;
    }
    emit(format, &file, &sample_rows(&file), out)?;
    Ok(EXIT_OK)
}

fn verify_cmd(args: VerifyArgs, format: Format, out: Option<&Path>) -> Result<i32> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let file = AttackFile::parse(&text)?;
    let report = verify(&file)?;
    emit(format, &report, &report.samples, out)?;
    let bad = report.violations(file.settings.post_process);
    if bad > 0 {
        log::error!("{bad} violations found");
        return Ok(EXIT_FAILURE);
    }
    Ok(EXIT_OK)
}

fn project(args: ProjectArgs, format: Format, out: Option<&Path>) -> Result<i32> {
    let method = match args.method {
        ProjectMethodArg::ProjectDual => ProjectMethod::Dual,
        ProjectMethodArg::ProjectEntropic => ProjectMethod::Entropic,
    };
    if args.gamma.is_some() && method != ProjectMethod::Entropic {
        usage_error("--gamma only applies to --method project-entropic");
    }
    let defaults = ProjectSettings::default();
    let settings = ProjectSettings {
        epsilon: args.epsilon,
        k: args.k,
        dual_iterations: args.iterations.unwrap_or(defaults.dual_iterations),
        entropic_iterations: args.iterations.unwrap_or(defaults.entropic_iterations),
        step_size: args.step_size,
        gamma: args.gamma.unwrap_or(defaults.gamma),
        ..defaults
    };
    let (shape, source, target) = match &args.input {
        Some(path) => {
            let file =
                std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let array = wadv::read(std::io::BufReader::new(file))?;
            ensure!(
                array.dims.len() == 4 && array.dims[0] == 2,
                "expected dimensions [2, channels, height, width], got {:?}",
                array.dims
            );
            let [_, c, h, w] = [0, 1, 2, 3].map(|i| array.dims[i] as usize);
            let shape = GridShape::new(w, h, c)?;
            let (a, b) = array.data.split_at(shape.len());
            (shape, a.to_vec(), b.to_vec())
        }
        None => {
            let (a, b) = random_pair(args.seed, args.side);
            (GridShape::square(args.side)?, a, b)
        }
    };
    let report = run_project(shape, &source, &target, method, &settings)?;
    emit(format, &report, std::slice::from_ref(&report.row), out)?;
    Ok(EXIT_OK)
}

fn bench(args: BenchArgs, format: Format, out: Option<&Path>) -> Result<i32> {
    let config = BenchConfig {
        seed: args.seed,
        instances: args.samples,
        side: args.side,
        k: args.k,
        epsilon: args.epsilon,
        dykstra_iterations: args.iterations,
        tol: args.tol,
    };
    let (report, history) = run_dykstra_bench(&config)?;
    if let Some(path) = &args.trace {
        write_csv(&history, Some(path))?;
    }
    emit(format, &report, &report.rows, out)?;
    Ok(EXIT_OK)
}

fn table1(args: Table1Args, format: Format, out: Option<&Path>) -> Result<i32> {
    let seed = args.seed.unwrap_or_else(rand::random);
    let mut config = Table1Config {
        seed,
        ..Table1Config::default()
    };
    config.settings.dual_iterations = args.pgd_iterations;
    config.settings.entropic_iterations = args.fw_iterations;
    let report = run_table1(&config)?;
    emit(format, &report, &report.rows, out)?;
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            usage_error("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting the worker pool")?;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Attack(a) => attack(a, cli.format, out),
        Command::Verify(a) => verify_cmd(a, cli.format, out),
        Command::Project(a) => project(a, cli.format, out),
        Command::DykstraBench(a) => bench(a, cli.format, out),
        Command::Table1(a) => table1(a, cli.format, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WASSBALL_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
