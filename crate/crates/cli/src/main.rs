use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use unlearn_cli::commands::{self, AddSource, GameArgs, PointArgs};
use unlearn_cli::config::CliConfig;
use unlearn_cli::store::Layout;
use unlearn_core::game::GameHop;
use unlearn_core::proofsys::Backend;

#[derive(Parser)]
#[command(name = "unlearn", version, about = "Verifiable machine unlearning: server and user commands")]
struct Cli {
    /// State directory.
    #[arg(long, global = true, default_value = "unlearn-state")]
    dir: PathBuf,
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    WitnessCheck,
    Snark,
    Unsound,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::WitnessCheck => Backend::WitnessCheck,
            BackendArg::Snark => Backend::Snark,
            BackendArg::Unsound => Backend::Unsound,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HopArg {
    G0,
    G1,
    G2,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build both relations and run the proof-system setup.
    Setup {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Create the empty server state and the initial commitment.
    Init,
    /// Queue points for addition, from a CSV file or one point.
    Add {
        #[arg(long, conflicts_with_all = ["uid", "features", "label"])]
        dataset: Option<PathBuf>,
        #[arg(long, requires_all = ["features", "label"])]
        uid: Option<u64>,
        /// Comma-separated decimal features.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        features: Option<Vec<String>>,
        #[arg(long, allow_hyphen_values = true)]
        label: Option<String>,
    },
    /// Queue a training point for unlearning.
    Delete {
        #[arg(long)]
        uid: u64,
    },
    /// Apply queued requests, retrain, commit and prove.
    Update,
    /// Verify the proof of update of one iteration (0 checks initialization).
    VerifyUpdate {
        #[arg(long)]
        iteration: usize,
    },
    /// Write a proof of unlearning for an unlearnt point.
    ProveUnlearn {
        #[arg(long)]
        uid: u64,
    },
    /// Check a proof of unlearning against the commitment of an iteration.
    VerifyUnlearn {
        #[arg(long)]
        uid: u64,
        #[arg(long)]
        iteration: usize,
    },
    /// Run adversary strategies through the security game.
    Game {
        #[arg(long, default_value = "all")]
        strategy: String,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, value_enum, default_value = "g0")]
        hop: HopArg,
        /// Disable the commitment-validity line (negative control).
        #[arg(long)]
        no_commitment_check: bool,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
    },
    /// Circuit sizes and prove/verify timings for several dataset sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "10,100")]
        sizes: Vec<usize>,
        /// Share of points unlearnt in the measured update.
        #[arg(long, default_value_t = 0.1)]
        unlearn_fraction: f64,
        /// Also run size 1000.
        #[arg(long)]
        full: bool,
    },
}

fn run(cli: &Cli) -> anyhow::Result<commands::Output> {
    let l = Layout::new(&cli.dir);
    match &cli.cmd {
        Cmd::Setup {
            config,
            backend,
            dataset,
        } => {
            let mut cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    CliConfig::parse(&text).map_err(|e| unlearn_cli::Failure::Usage(e.to_string()))?
                }
                None => CliConfig::default(),
            };
            if let Some(b) = backend {
                cfg.backend = (*b).into();
            }
            if dataset.is_some() {
                cfg.dataset = dataset.clone();
            }
            commands::cmd_setup(&l, cfg)
        }
        Cmd::Init => commands::cmd_init(&l),
        Cmd::Add {
            dataset,
            uid,
            features,
            label,
        } => {
            let src = match (dataset, uid) {
                (Some(p), _) => AddSource::Csv(p),
                (None, Some(uid)) => AddSource::Point(PointArgs {
                    uid: *uid,
                    features: features.clone().unwrap_or_default(),
                    label: label.clone().unwrap_or_default(),
                }),
                (None, None) => {
                    return Err(unlearn_cli::Failure::Usage("add needs --dataset or --uid/--features/--label".into()).into())
                }
            };
            commands::cmd_add(&l, src)
        }
        Cmd::Delete { uid } => commands::cmd_delete(&l, *uid),
        Cmd::Update => commands::cmd_update(&l),
        Cmd::VerifyUpdate { iteration } => commands::cmd_verify_update(&l, *iteration),
        Cmd::ProveUnlearn { uid } => commands::cmd_prove_unlearn(&l, *uid),
        Cmd::VerifyUnlearn { uid, iteration } => commands::cmd_verify_unlearn(&l, *uid, *iteration),
        Cmd::Game {
            strategy,
            seeds,
            hop,
            no_commitment_check,
            backend,
        } => {
            let hop = match hop {
                HopArg::G0 => GameHop::G0,
                HopArg::G1 => GameHop::G1,
                HopArg::G2 => GameHop::G2,
            };
            commands::cmd_game(
                &l,
                &GameArgs {
                    strategy: strategy.clone(),
                    seeds: *seeds,
                    hop,
                    check_commitments: !no_commitment_check,
                    backend: backend.map(Into::into),
                },
            )
        }
        Cmd::Bench {
            sizes,
            unlearn_fraction,
            full,
        } => {
            let mut sizes = sizes.clone();
            if *full && !sizes.contains(&1000) {
                sizes.push(1000);
            }
            if !(*unlearn_fraction > 0.0 && *unlearn_fraction <= 1.0) {
                return Err(unlearn_cli::Failure::Usage("--unlearn-fraction must be in (0, 1]".into()).into());
            }
            commands::cmd_bench(&l, &sizes, *unlearn_fraction)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                println!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(unlearn_cli::exit_code(&e))
        }
    }
}
