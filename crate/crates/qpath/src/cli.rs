//! Implementations behind the `qpath` binary's subcommands.
//!
//! Each command is an ordinary function over parsed options so harnesses
//! and tests can call them without spawning a process. Exit-code policy
//! for `run`: 0 = accept, 1 = reject, 2 = error; `compare` exits 0 only on
//! a 100% exact-match corpus.

use std::path::{Path, PathBuf};
use std::time::Instant;

use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::corpus::{compare_corpus, CorpusError, CorpusParams};
use crate::pathcount::{dummy_path_counts, threshold_decide, CountError};
use crate::program::{BranchingProgram, ProgramError, Verdict};
use crate::report::{
    program_digest, verdict_str, BackendJson, BranchJson, CompareJson, CompileGateJson,
    CompileJson, CompileWordJson, DummyJson, ProfileJson, RunReport, ThresholdJson,
};
use crate::skcompile::{build_or_load_net, compile_program, SkError, NET_ENTRY_CAP};
use crate::statevec::{accept_probability, enumerate_branches, BranchProb, Mode, SimError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Sk(#[from] SkError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("bad input bits '{0}': use only 0 and 1")]
    BadInputBits(String),
    #[error("config {path}:{line}: {msg}")]
    Config { path: PathBuf, line: usize, msg: String },
    #[error("pathcount backend requires a universal-library program")]
    NonUniversalForCounting,
}

/// Cap settings shared by commands; loadable from a `key=value` file.
#[derive(Clone, Copy, Debug)]
pub struct Config {
    pub max_branches: usize,
    pub net_depth: usize,
    pub precision_bits: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config { max_branches: crate::DEFAULT_BRANCH_CAP, net_depth: 12, precision_bits: 96 }
    }
}

impl Config {
    /// Parses `key=value` lines; `#` comments and blank lines are skipped.
    /// Keys: `max-branches`, `net-depth`, `precision-bits`.
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|err| CliError::Io { path: path.to_path_buf(), err })?;
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| CliError::Config {
                path: path.to_path_buf(),
                line: i + 1,
                msg: msg.to_string(),
            };
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let value = value.trim();
            match key.trim() {
                "max-branches" => {
                    cfg.max_branches = value.parse().map_err(|_| bad("bad max-branches"))?
                }
                "net-depth" => cfg.net_depth = value.parse().map_err(|_| bad("bad net-depth"))?,
                "precision-bits" => {
                    cfg.precision_bits = value.parse().map_err(|_| bad("bad precision-bits"))?
                }
                other => return Err(bad(&format!("unknown key '{other}'"))),
            }
        }
        Ok(cfg)
    }
}

fn read_program(path: &Path) -> Result<(BranchingProgram, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| CliError::Io { path: path.to_path_buf(), err })?;
    let prog = BranchingProgram::parse(&text)?;
    Ok((prog, text))
}

pub fn parse_input_bits(s: &str) -> Result<Vec<bool>, CliError> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(CliError::BadInputBits(s.to_string())),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// compile
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CompileOpts {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    /// Per-gate epsilon; overrides the 1/(20 t') budget outright.
    pub eps: Option<f64>,
    /// Total drift budget B; per-gate epsilon becomes B / t'.
    pub eps_budget_override: Option<f64>,
    pub net_depth: usize,
    pub net_cap: usize,
}

pub fn cmd_compile(opts: &CompileOpts) -> Result<CompileJson, CliError> {
    let (prog, text) = read_program(&opts.input)?;
    let net = build_or_load_net(opts.net_depth, opts.net_cap)?;
    let eps = match (opts.eps, opts.eps_budget_override) {
        (Some(e), _) => Some(e),
        (None, Some(budget)) => {
            // recompute t' the same way compile_program will; one extra
            // decomposition pass is cheap at these sizes
            let (_, probe) = compile_program(&prog, &net, Some(1.0))?;
            Some(budget / probe.t_prime.max(1) as f64)
        }
        (None, None) => None,
    };
    let (compiled, report) = compile_program(&prog, &net, eps)?;
    let out_path = opts
        .output
        .clone()
        .unwrap_or_else(|| opts.input.with_extension("compiled.qp"));
    let compiled_text = compiled.to_text();
    std::fs::write(&out_path, &compiled_text)
        .map_err(|err| CliError::Io { path: out_path.clone(), err })?;
    Ok(CompileJson {
        program_digest: program_digest(&text),
        output_path: out_path.display().to_string(),
        t_prime: report.t_prime,
        eps: report.eps,
        net_word_len: report.net_word_len,
        net_digest: report.net_digest,
        gates: report
            .gates
            .iter()
            .map(|g| CompileGateJson {
                name: g.name.clone(),
                fragment_ops: g.fragment_ops,
                ancillas: g.ancillas,
                words: g
                    .words
                    .iter()
                    .map(|&(length, distance)| CompileWordJson { length, distance })
                    .collect(),
            })
            .collect(),
        compiled_digest: program_digest(&compiled_text),
    })
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Statevec,
    Pathcount,
    Both,
}

#[derive(Clone, Debug)]
pub struct RunOpts {
    pub input: PathBuf,
    pub backend: Backend,
    pub input_bits: String,
    /// Force exact amplitudes for the statevector backend (default is
    /// exact for universal programs, fixed-point otherwise).
    pub exact: bool,
    pub max_branches: usize,
    pub precision_bits: u32,
}

/// Runs a program; the report's verdict is the threshold decision when the
/// path-counting backend participates, otherwise the statevector majority.
pub fn cmd_run(opts: &RunOpts) -> Result<(RunReport, Verdict), CliError> {
    let started = Instant::now();
    let (parsed, text) = read_program(&opts.input)?;
    let x = parse_input_bits(&opts.input_bits)?;
    let counting = opts.backend != Backend::Statevec;
    if counting && !parsed.is_universal() {
        return Err(CliError::NonUniversalForCounting);
    }
    // normalization aligns branch histories across backends and gives the
    // threshold arithmetic its h >= 1 precondition
    let (prog, normalized) = if parsed.is_universal() {
        (parsed.normalize()?, true)
    } else {
        (parsed, false)
    };
    let exact_mode = opts.exact || prog.is_universal();
    let mode = if exact_mode { Mode::Exact } else { Mode::Approx { bits: opts.precision_bits } };

    let mut backends = Vec::new();
    let mut sv_exact: Option<Vec<(String, BigRational, Verdict)>> = None;
    if opts.backend != Backend::Pathcount {
        let branches = enumerate_branches(&prog, &x, mode, opts.max_branches)?;
        let mut acc_num = None;
        let mut acc_den = None;
        let mut acc_f = None;
        match accept_probability(&prog, &x, mode, opts.max_branches)? {
            BranchProb::Exact(p) => {
                acc_num = Some(p.numer().to_string());
                acc_den = Some(p.denom().to_string());
            }
            BranchProb::Approx { p, .. } => acc_f = Some(p),
        }
        if exact_mode {
            sv_exact = Some(
                branches
                    .iter()
                    .map(|b| match &b.p {
                        BranchProb::Exact(p) => (b.mu.to_string(), p.clone(), b.verdict),
                        _ => unreachable!(),
                    })
                    .collect(),
            );
        }
        backends.push(BackendJson {
            backend: "statevec".to_string(),
            branches: branches.iter().map(BranchJson::from).collect(),
            p_accept_num: acc_num,
            p_accept_den: acc_den,
            p_accept: acc_f,
        });
    }

    let mut threshold_json: Option<ThresholdJson> = None;
    let mut comparison = None;
    let mut tie = false;
    let verdict;
    if counting {
        let report = threshold_decide(&prog, &x, opts.max_branches)?;
        tie = report.tie;
        verdict = report.verdict;

        // per-branch counts for the report plus cross-validation
        let branches = enumerate_branches(&prog, &x, Mode::Exact, opts.max_branches)?;
        let tally = prog.uniform_tally(&x)?;
        let mut pc_branches = Vec::new();
        let mut matched = true;
        for b in &branches {
            let counts = crate::pathcount::count_paths(&prog, &x, &b.mu)?;
            let p = crate::pathcount::branch_probability(&counts, tally.f as u32, tally.h as u32);
            if let Some(sv) = &sv_exact {
                let sv_p = &sv.iter().find(|(mu, _, _)| *mu == b.mu.to_string()).unwrap().1;
                if sv_p != &p {
                    matched = false;
                }
            }
            pc_branches.push(BranchJson {
                mu: b.mu.to_string(),
                p_num: Some(p.numer().to_string()),
                p_den: Some(p.denom().to_string()),
                p: None,
                err: None,
                verdict: verdict_str(b.verdict).to_string(),
            });
        }
        let p_accept = pc_branches
            .iter()
            .filter(|b| b.verdict == "accept")
            .fold(BigRational::zero(), |acc, b| {
                acc + BigRational::new(
                    b.p_num.as_ref().unwrap().parse().unwrap(),
                    b.p_den.as_ref().unwrap().parse().unwrap(),
                )
            });
        backends.push(BackendJson {
            backend: "pathcount".to_string(),
            branches: pc_branches,
            p_accept_num: Some(p_accept.numer().to_string()),
            p_accept_den: Some(p_accept.denom().to_string()),
            p_accept: None,
        });
        if opts.backend == Backend::Both {
            comparison = Some(if matched { "exact-match" } else { "mismatch" }.to_string());
        }
        threshold_json = Some(ThresholdJson::from(&report));
    } else {
        // statevector-only verdict: majority of accepting probability
        match accept_probability(&prog, &x, mode, opts.max_branches)? {
            BranchProb::Exact(p) => {
                let half = BigRational::new(1.into(), 2.into());
                tie = p == half;
                verdict = if p > half { Verdict::Accept } else { Verdict::Reject };
            }
            BranchProb::Approx { p, .. } => {
                verdict = if p > 0.5 { Verdict::Accept } else { Verdict::Reject };
            }
        }
    }

    let profile = if normalized { Some(ProfileJson::from(&prog.profile(&x)?)) } else { None };
    let report = RunReport {
        program_digest: program_digest(&text),
        input: opts.input_bits.clone(),
        normalized,
        profile,
        backends,
        threshold: threshold_json,
        comparison,
        tie,
        verdict: verdict_str(verdict).to_string(),
        elapsed_ms: started.elapsed().as_millis(),
    };
    Ok((report, verdict))
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct CompareOpts {
    pub trials: usize,
    pub seed: u64,
    pub params: CorpusParams,
    pub max_branches: usize,
    /// Test hook: corrupt one path count in this trial.
    pub inject_fault: Option<usize>,
}

pub fn cmd_compare(opts: &CompareOpts) -> Result<(CompareJson, bool), CliError> {
    let report = compare_corpus(
        &opts.params,
        opts.trials,
        opts.seed,
        opts.max_branches,
        opts.inject_fault,
    )?;
    let ok = report.all_matched();
    let json = CompareJson {
        trials: report.trials,
        matched: report.matched,
        exact_match_rate: format!("{}/{}", report.matched, report.trials),
        threshold_agreements: report.threshold_agreements,
        ties: report.ties,
        counterexamples: report
            .failures
            .iter()
            .filter_map(|f| f.counterexample.clone())
            .collect(),
    };
    Ok((json, ok))
}

// ---------------------------------------------------------------------------
// dummy & net build
// ---------------------------------------------------------------------------

pub fn cmd_dummy(f: u32, h: u32, g: u32) -> Result<DummyJson, CliError> {
    let (accepting, rejecting) = dummy_path_counts(f, h, g)?;
    Ok(DummyJson {
        f,
        h,
        g,
        total: (&accepting + &rejecting).to_string(),
        accepting: accepting.to_string(),
        rejecting: rejecting.to_string(),
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct NetBuildJson {
    pub word_len: usize,
    pub entries: usize,
    pub digest: String,
    pub cache_dir: String,
    pub measured_covering_radius: f64,
}

pub fn cmd_net_build(depth: usize, samples: usize) -> Result<NetBuildJson, CliError> {
    let net = build_or_load_net(depth, NET_ENTRY_CAP)?;
    let radius = net.measured_covering_radius(samples, 42);
    Ok(NetBuildJson {
        word_len: depth,
        entries: net.len(),
        digest: net.digest().to_string(),
        cache_dir: crate::skcompile::net_cache_dir().display().to_string(),
        measured_covering_radius: radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(name: &str, text: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("qpath-cli-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path
    }

    fn run_opts(path: PathBuf, backend: Backend) -> RunOpts {
        RunOpts {
            input: path,
            backend,
            input_bits: String::new(),
            exact: false,
            max_branches: 1 << 16,
            precision_bits: 96,
        }
    }

    #[test]
    fn run_hfh_both_backends_match() {
        let path = write_temp(
            "hfh.qp",
            "qubits 1\nU H 0\nU F 0\nU H 0\nMEASURE 0 { 0: ACCEPT 1: REJECT }\n",
        );
        let (report, verdict) = cmd_run(&run_opts(path, Backend::Both)).unwrap();
        assert_eq!(verdict, Verdict::Accept);
        assert_eq!(report.comparison.as_deref(), Some("exact-match"));
        assert!(!report.tie);
        let sv = &report.backends[0];
        assert_eq!(sv.p_accept_num.as_deref(), Some("4"));
        assert_eq!(sv.p_accept_den.as_deref(), Some("5"));
        let th = report.threshold.unwrap();
        assert_eq!(th.threshold, "50");
        assert_eq!(th.verdict, "accept");
    }

    #[test]
    fn run_tie_is_flagged() {
        let path = write_temp(
            "tie.qp",
            "qubits 1\nU H 0\nMEASURE 0 { 0: ACCEPT 1: REJECT }\n",
        );
        let (report, verdict) = cmd_run(&run_opts(path, Backend::Both)).unwrap();
        assert_eq!(verdict, Verdict::Reject);
        assert!(report.tie);
        let th = report.threshold.unwrap();
        assert_eq!(th.accept_fraction_num, "1");
        assert_eq!(th.accept_fraction_den, "2");
    }

    #[test]
    fn run_trivial_accept() {
        let path = write_temp("acc.qp", "qubits 1\nACCEPT\n");
        let (report, verdict) = cmd_run(&run_opts(path, Backend::Both)).unwrap();
        assert_eq!(verdict, Verdict::Accept);
        let sv = &report.backends[0];
        assert_eq!(sv.branches.len(), 1);
        assert_eq!(sv.p_accept_num.as_deref(), Some("1"));
    }

    #[test]
    fn run_rejects_pathcount_on_custom_gates() {
        let path = write_temp(
            "custom.qp",
            "qubits 1\nGATE T 2 1 0 0 cis(1/4)\nU T 0\nACCEPT\n",
        );
        assert!(matches!(
            cmd_run(&run_opts(path.clone(), Backend::Pathcount)),
            Err(CliError::NonUniversalForCounting)
        ));
        // statevector backend happily runs it in fixed-point mode
        let (report, verdict) = cmd_run(&run_opts(path, Backend::Statevec)).unwrap();
        assert_eq!(verdict, Verdict::Accept);
        assert!(!report.normalized);
    }

    #[test]
    fn compare_small_corpus() {
        let opts = CompareOpts {
            trials: 10,
            seed: 11,
            params: CorpusParams::default(),
            max_branches: 1 << 16,
            inject_fault: None,
        };
        let (json, ok) = cmd_compare(&opts).unwrap();
        assert!(ok, "{:?}", json.counterexamples);
        assert_eq!(json.exact_match_rate, "10/10");
    }

    #[test]
    fn compare_reports_injected_fault() {
        let opts = CompareOpts {
            trials: 3,
            seed: 11,
            params: CorpusParams::default(),
            max_branches: 1 << 16,
            inject_fault: Some(1),
        };
        let (json, ok) = cmd_compare(&opts).unwrap();
        assert!(!ok);
        assert!(!json.counterexamples.is_empty());
    }

    #[test]
    fn dummy_command_counts() {
        let j = cmd_dummy(1, 1, 6).unwrap();
        assert_eq!(j.rejecting, "89");
        assert_eq!(j.total, "128");
        assert!(matches!(cmd_dummy(1, 1, 2), Err(CliError::Count(_))));
    }

    #[test]
    fn config_parsing() {
        let path = write_temp(
            "cfg.txt",
            "# caps\nmax-branches = 4096\nnet-depth=10\nprecision-bits = 128\n",
        );
        let cfg = Config::load(&path).unwrap();
        assert_eq!(cfg.max_branches, 4096);
        assert_eq!(cfg.net_depth, 10);
        assert_eq!(cfg.precision_bits, 128);
        let bad = write_temp("cfg-bad.txt", "nonsense = 1\n");
        assert!(Config::load(&bad).is_err());
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        let path = write_temp("bad.qp", "qubits 1\nU H 0\nMEASURE 0 { 0: ACCEPT }\n");
        let err = cmd_run(&run_opts(path, Backend::Both)).unwrap_err();
        assert!(err.to_string().contains("missing outcome-1 arm"), "{err}");
    }
}
