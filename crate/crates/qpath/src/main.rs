//! Command-line front end: parse, normalize, compile, simulate on both
//! backends, compare, and report as JSON.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qpath::cli::{
    cmd_compare, cmd_compile, cmd_dummy, cmd_net_build, cmd_run, Backend, CompareOpts,
    CompileOpts, Config, RunOpts,
};
use qpath::corpus::CorpusParams;
use qpath::program::Verdict;
use qpath::skcompile::NET_ENTRY_CAP;

#[derive(Parser)]
#[command(name = "qpath", version, about = "Compile and simulate classically-controlled quantum programs with intermediate measurements")]
struct Cli {
    /// Optional key=value config file (max-branches, net-depth, precision-bits).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum BackendArg {
    Statevec,
    Pathcount,
    #[default]
    Both,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Statevec => Backend::Statevec,
            BackendArg::Pathcount => Backend::Pathcount,
            BackendArg::Both => Backend::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compile a program to the universal library {CNOT, F, Fdg, H, I}.
    Compile {
        input: PathBuf,
        /// Output path (default: <input>.compiled.qp).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Per-gate approximation epsilon (overrides the 1/(20 t') rule).
        #[arg(long)]
        eps: Option<f64>,
        /// Total drift budget; per-gate epsilon becomes budget / t'.
        #[arg(long)]
        eps_budget_override: Option<f64>,
        /// Base net word length.
        #[arg(long)]
        net_depth: Option<usize>,
    },
    /// Simulate a program; exit 0 = accept, 1 = reject, 2 = error.
    Run {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        backend: BackendArg,
        /// Classical input bits, e.g. "0110".
        #[arg(long = "input", default_value = "")]
        input_bits: String,
        /// Force exact amplitudes (universal-library programs only).
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        max_branches: Option<usize>,
        #[arg(long)]
        precision_bits: Option<u32>,
    },
    /// Cross-validate both backends on seeded random programs.
    Compare {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        max_qubits: usize,
        #[arg(long, default_value_t = 12)]
        max_gates: usize,
        #[arg(long, default_value_t = 3)]
        max_measures: usize,
        #[arg(long, default_value_t = 2)]
        input_len: usize,
        #[arg(long)]
        max_branches: Option<usize>,
        /// Test hook: corrupt one path count in the given trial.
        #[arg(long, hide = true)]
        inject_fault: Option<usize>,
    },
    /// Count the dummy gadget's accepting/rejecting guess strings.
    Dummy {
        #[arg(long)]
        f: u32,
        #[arg(long)]
        h: u32,
        #[arg(long)]
        g: u32,
    },
    /// Epsilon-net maintenance.
    Net {
        #[command(subcommand)]
        cmd: NetCommand,
    },
}

#[derive(Subcommand)]
enum NetCommand {
    /// Build (or load) the net and report size, digest and measured radius.
    Build {
        #[arg(long)]
        net_depth: Option<usize>,
        /// Random unitaries sampled for the covering-radius estimate.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    match dispatch(cli.command, config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command, config: Config) -> Result<ExitCode, qpath::cli::CliError> {
    match command {
        Command::Compile { input, output, eps, eps_budget_override, net_depth } => {
            let json = cmd_compile(&CompileOpts {
                input,
                output,
                eps,
                eps_budget_override,
                net_depth: net_depth.unwrap_or(config.net_depth),
                net_cap: NET_ENTRY_CAP,
            })?;
            println!("{}", serde_json::to_string_pretty(&json).expect("serialize"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { input, backend, input_bits, exact, max_branches, precision_bits } => {
            let (report, verdict) = cmd_run(&RunOpts {
                input,
                backend: backend.into(),
                input_bits,
                exact,
                max_branches: max_branches.unwrap_or(config.max_branches),
                precision_bits: precision_bits.unwrap_or(config.precision_bits),
            })?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serialize"));
            Ok(match verdict {
                Verdict::Accept => ExitCode::SUCCESS,
                Verdict::Reject => ExitCode::from(1),
            })
        }
        Command::Compare {
            trials,
            seed,
            max_qubits,
            max_gates,
            max_measures,
            input_len,
            max_branches,
            inject_fault,
        } => {
            let (json, ok) = cmd_compare(&CompareOpts {
                trials,
                seed,
                params: CorpusParams { max_qubits, max_gates, max_measures, input_len },
                max_branches: max_branches.unwrap_or(config.max_branches),
                inject_fault,
            })?;
            println!("{}", serde_json::to_string_pretty(&json).expect("serialize"));
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Dummy { f, h, g } => {
            let json = cmd_dummy(f, h, g)?;
            println!("{}", serde_json::to_string_pretty(&json).expect("serialize"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Net { cmd: NetCommand::Build { net_depth, samples } } => {
            let json = cmd_net_build(net_depth.unwrap_or(config.net_depth), samples)?;
            println!("{}", serde_json::to_string_pretty(&json).expect("serialize"));
            Ok(ExitCode::SUCCESS)
        }
    }
}
