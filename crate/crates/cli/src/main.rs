use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand};

use neural_rbmle::env::preprocess_context;
use neural_rbmle::harness::{self, Algo, EnvSpec, ExperimentConfig, KEYS};
use neural_rbmle::net::{gradient_check, NetworkConfig, NetworkParams};
use neural_rbmle::ntk::{diagnostics, effective_dim, ntk_matrix};
use neural_rbmle::rng::seeded;

#[derive(Parser)]
#[command(
    name = "neural-rbmle",
    version,
    about = "Reward-biased neural contextual bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run an experiment and write trace and summary CSVs.
    #[command(after_help = keys_help())]
    Run(RunArgs),
    /// Neural tangent kernel and effective dimension of a set of contexts.
    Ntk(NtkArgs),
    /// Compare network gradients against central differences.
    Gradcheck(GradcheckArgs),
}

fn keys_help() -> String {
    let mut s = String::from(
        "Configuration file: one `key = value` per line, `#` starts a comment.\nFlags override the file. Keys:\n",
    );
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<16} {d}\n"));
    }
    s.push_str("\nEnvironment: RBMLE_THREADS caps the number of worker threads.");
    s
}

fn parse_env(s: &str) -> Result<String, String> {
    s.parse::<EnvSpec>()
        .map(|_| s.to_string())
        .map_err(|e| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file in `key = value` form.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = PossibleValuesParser::new(Algo::ALL.map(Algo::as_str)))]
    algo: Option<String>,
    /// synthetic:{linear,quadratic,cosine} or dataset:<path>.
    #[arg(long, value_parser = parse_env)]
    env: Option<String>,
    /// Horizon.
    #[arg(long = "T")]
    horizon: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden width.
    #[arg(long = "m")]
    width: Option<usize>,
    /// Network depth.
    #[arg(long = "L")]
    depth: Option<usize>,
    #[arg(long, value_parser = ["gaussian", "bernoulli", "mixture"])]
    likelihood: Option<String>,
    #[arg(long)]
    nu: Option<f64>,
    /// Gradient steps per fit.
    #[arg(long = "J")]
    steps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_parser = ["one_plus_log", "sqrt", "constant_one"])]
    zeta: Option<String>,
    #[arg(long = "warm_start", alias = "warm-start")]
    warm_start: Option<bool>,
    #[arg(long = "normalize_steps", alias = "normalize-steps")]
    normalize_steps: Option<bool>,
    #[arg(long = "precision_mode", alias = "precision-mode", value_parser = ["diagonal", "full"])]
    precision_mode: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "lin_lambda", alias = "lin-lambda")]
    lin_lambda: Option<f64>,
    #[arg(long = "lin_nu", alias = "lin-nu")]
    lin_nu: Option<f64>,
    /// Raw context dimension of synthetic envs.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    arms: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long = "on_exhaust", alias = "on-exhaust", value_parser = ["wrap", "end"])]
    on_exhaust: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timing: Option<bool>,
    #[arg(long, value_parser = ["parallel", "sequential"])]
    execution: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn put<T: ToString>(
            out: &mut Vec<(&'static str, String)>,
            key: &'static str,
            v: &Option<T>,
        ) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let mut o = Vec::new();
        put(&mut o, "algo", &self.algo);
        put(&mut o, "env", &self.env);
        put(&mut o, "T", &self.horizon);
        put(&mut o, "trials", &self.trials);
        put(&mut o, "seed", &self.seed);
        put(&mut o, "m", &self.width);
        put(&mut o, "L", &self.depth);
        put(&mut o, "likelihood", &self.likelihood);
        put(&mut o, "nu", &self.nu);
        put(&mut o, "J", &self.steps);
        put(&mut o, "eta", &self.eta);
        put(&mut o, "lambda", &self.lambda);
        put(&mut o, "zeta", &self.zeta);
        put(&mut o, "warm_start", &self.warm_start);
        put(&mut o, "normalize_steps", &self.normalize_steps);
        put(&mut o, "precision_mode", &self.precision_mode);
        put(&mut o, "gamma", &self.gamma);
        put(&mut o, "lin_lambda", &self.lin_lambda);
        put(&mut o, "lin_nu", &self.lin_nu);
        put(&mut o, "dim", &self.dim);
        put(&mut o, "arms", &self.arms);
        put(&mut o, "noise", &self.noise);
        put(&mut o, "on_exhaust", &self.on_exhaust);
        put(
            &mut o,
            "out",
            &self.out.as_ref().map(|p| p.display().to_string()),
        );
        put(&mut o, "timing", &self.timing);
        put(&mut o, "execution", &self.execution);
        o
    }
}

#[derive(Args)]
struct NtkArgs {
    /// CSV of contexts, one per row, no header.
    #[arg(long)]
    contexts: PathBuf,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// Duplicate and normalise each row before building the kernel.
    #[arg(long)]
    preprocess: bool,
    /// Write the kernel matrix to this CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Input dimension (even).
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long = "m", default_value_t = 16)]
    width: usize,
    #[arg(long = "L", default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exit with status 1 if the maximum relative error exceeds this.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Ntk(args) => ntk(args),
        Command::Gradcheck(args) => gradcheck(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for (key, value) in args.overrides() {
        config.set(key, &value)?;
    }
    let report = harness::run_experiment(&config)?;
    let (mean, std) = report.mean_std();
    let mut out = std::io::stdout().lock();
    for row in &report.rows {
        let regret = row
            .final_cumulative_regret
            .map(harness::format_decimal)
            .unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{} {} trial {}: regret {} ({})",
            row.algo, row.env, row.trial, regret, row.status
        )?;
    }
    writeln!(
        out,
        "mean {} std {}",
        harness::format_decimal(mean),
        harness::format_decimal(std)
    )?;
    if let Some(dir) = &config.output_dir {
        writeln!(out, "wrote {}", dir.display())?;
    }
    if !report.all_ok() {
        bail!("some trials failed; see the status column");
    }
    Ok(ExitCode::SUCCESS)
}

fn read_contexts(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: row {}: not a list of numbers", path.display(), i + 1))?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no contexts", path.display());
    }
    Ok(rows)
}

fn ntk(args: NtkArgs) -> Result<ExitCode> {
    let mut contexts = read_contexts(&args.contexts)?;
    if args.preprocess {
        contexts = contexts
            .iter()
            .map(|x| preprocess_context(x).to_vec())
            .collect();
    }
    let h = ntk_matrix(&contexts, args.depth)?;
    let d = effective_dim(&h.h, args.lambda, contexts.len())?;
    let diag = diagnostics(&h, &contexts, args.lambda);
    eprintln!(
        "contexts {}  min eigenvalue {:.6e}  H >= lambda*I: {}  parallel pairs: {}",
        contexts.len(),
        diag.min_eigenvalue,
        diag.dominates_lambda,
        diag.parallel_pairs.len()
    );
    if let Some(path) = &args.out {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..h.len() {
            let row: Vec<String> = (0..h.len())
                .map(|j| harness::format_decimal(h.h[(i, j)]))
                .collect();
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
    }
    println!("{d}");
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let config = NetworkConfig::new(args.d, args.width, args.depth)?;
    let mut rng = seeded(args.seed);
    let (mut worst, mut skipped, mut checked) = (0.0f64, 0, 0);
    while checked < args.samples {
        let params = NetworkParams::init_gaussian(config, &mut rng);
        let x = neural_rbmle::env::random_unit_context(args.d / 2, &mut rng);
        let report = gradient_check(&params, &x, args.step)?;
        // A kink inside the difference stencil breaks the comparison.
        if report.kink_margin < 100.0 * args.step {
            skipped += 1;
            if skipped > 100 * args.samples {
                bail!("could not find kink-free instances");
            }
            continue;
        }
        worst = worst.max(report.max_rel_error);
        checked += 1;
    }
    println!("{worst:e}");
    eprintln!("{checked} instances, {skipped} skipped near a kink");
    Ok(if worst <= args.tol {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
