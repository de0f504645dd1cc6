use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use truereview::belief::UserModel;
use truereview::experiment::{fmt_num, parse_config, run_suite, write_report, ExperimentSuite};
use truereview::nash::truthfulness_grid_check;

#[derive(Parser)]
#[command(name = "truereview", version, about = "Review-incentive mechanism simulator")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SuiteArgs {
    /// TOML config; missing keys take the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single (policy, user model) cell.
    Simulate {
        #[command(flatten)]
        suite: SuiteArgs,
        /// Policy row, e.g. `random` or `selfish:0.1`.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        user_model: Option<UserModel>,
    },
    /// Run every (policy, user model) cell of the config.
    Sweep {
        #[command(flatten)]
        suite: SuiteArgs,
    },
    /// Monte Carlo check of the deviation-loss formula over a grid.
    ValidateNash {
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        n: Vec<usize>,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "-2,-1,-0.5,0,0.5,1,2"
        )]
        deltas: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for `nash.csv`; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild `summary.csv` from the repetition files of a previous run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_suite(args: &SuiteArgs) -> Result<(ExperimentSuite, PathBuf)> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    let mut suite = parse_config(&text)?;
    if let Some(seed) = args.seed {
        suite.base.seed = seed;
    }
    if let Some(reps) = args.reps {
        if reps == 0 {
            bail!("--reps must be at least 1");
        }
        suite.base.repetitions = reps;
    }
    let out = args
        .out
        .clone()
        .or_else(|| suite.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((suite, out))
}

fn run(suite: &ExperimentSuite, out: &Path) -> Result<()> {
    let files = run_suite(suite, out)?;
    for f in &files {
        println!("{}", f.display());
    }
    print!(
        "{}",
        fs::read_to_string(out.join(truereview::experiment::SUMMARY_FILE))?
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring thread pool")?;
    }

    match cli.command {
        Command::Simulate {
            suite,
            policy,
            user_model,
        } => {
            let (mut suite, out) = load_suite(&suite)?;
            suite.select(policy.as_deref(), user_model)?;
            if suite.cells().len() != 1 {
                bail!(
                    "simulate runs a single cell but the config has {} (pass --policy and --user-model, or use sweep)",
                    suite.cells().len()
                );
            }
            run(&suite, &out)
        }
        Command::Sweep { suite } => {
            let (suite, out) = load_suite(&suite)?;
            run(&suite, &out)
        }
        Command::ValidateNash {
            variance,
            n,
            deltas,
            trials,
            seed,
            out,
        } => {
            let mut csv = String::from("n,delta,simulated,analytic,std_error\n");
            let mut ok = true;
            for &n in &n {
                let check = truthfulness_grid_check(variance, n, &deltas, trials, seed)?;
                for r in &check.rows {
                    csv.push_str(&format!(
                        "{n},{},{},{},{}\n",
                        fmt_num(Some(r.delta)),
                        fmt_num(Some(r.simulated)),
                        fmt_num(Some(r.analytic)),
                        fmt_num(Some(r.std_error))
                    ));
                }
                let within = check.all_within(3.0);
                let minimum = check.minimum_at_zero();
                eprintln!(
                    "n={n}: within 3 std errors: {}; minimum at delta=0: {}",
                    if within { "PASS" } else { "FAIL" },
                    if minimum { "PASS" } else { "FAIL" }
                );
                ok &= within && minimum;
            }
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("nash.csv"), &csv)?;
                }
                None => print!("{csv}"),
            }
            if !ok {
                bail!("truthfulness check failed");
            }
            Ok(())
        }
        Command::Report { out } => {
            let path = write_report(&out)?;
            print!("{}", fs::read_to_string(&path)?);
            Ok(())
        }
    }
}
