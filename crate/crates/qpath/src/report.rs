//! Machine-readable run reports.
//!
//! Exact rationals are serialized as decimal strings in separate
//! numerator/denominator fields so no precision is lost in transit.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::pathcount::ThresholdReport;
use crate::program::{ProgramProfile, Verdict};
use crate::statevec::{BranchOutcome, BranchProb};

pub fn program_digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Accept => "accept",
        Verdict::Reject => "reject",
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileJson {
    pub t: usize,
    pub s: usize,
    pub m: usize,
    pub f: usize,
    pub h: usize,
    pub g: u32,
}

impl From<&ProgramProfile> for ProfileJson {
    fn from(p: &ProgramProfile) -> Self {
        ProfileJson { t: p.t, s: p.s, m: p.m, f: p.f, h: p.h, g: p.g }
    }
}

/// One complete outcome branch. Exact mode fills `p_num`/`p_den`; the
/// fixed-point mode fills `p`/`err`.
#[derive(Clone, Debug, Serialize)]
pub struct BranchJson {
    pub mu: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_num: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_den: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub err: Option<f64>,
    pub verdict: String,
}

impl From<&BranchOutcome> for BranchJson {
    fn from(b: &BranchOutcome) -> Self {
        match &b.p {
            BranchProb::Exact(p) => BranchJson {
                mu: b.mu.to_string(),
                p_num: Some(p.numer().to_string()),
                p_den: Some(p.denom().to_string()),
                p: None,
                err: None,
                verdict: verdict_str(b.verdict).to_string(),
            },
            BranchProb::Approx { p, err } => BranchJson {
                mu: b.mu.to_string(),
                p_num: None,
                p_den: None,
                p: Some(*p),
                err: Some(*err),
                verdict: verdict_str(b.verdict).to_string(),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BackendJson {
    pub backend: String,
    pub branches: Vec<BranchJson>,
    /// Sum over accepting branches, as exact strings when available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_accept_num: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_accept_den: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_accept: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdJson {
    pub n_plus: String,
    pub n_minus: String,
    pub f: u32,
    pub h: u32,
    pub g: u32,
    pub threshold: String,
    pub accept_fraction_num: String,
    pub accept_fraction_den: String,
    pub verdict: String,
    pub tie: bool,
}

impl From<&ThresholdReport> for ThresholdJson {
    fn from(r: &ThresholdReport) -> Self {
        ThresholdJson {
            n_plus: r.n_plus.to_string(),
            n_minus: r.n_minus.to_string(),
            f: r.f,
            h: r.h,
            g: r.g,
            threshold: r.threshold.to_string(),
            accept_fraction_num: r.accept_fraction.numer().to_string(),
            accept_fraction_den: r.accept_fraction.denom().to_string(),
            verdict: verdict_str(r.verdict).to_string(),
            tie: r.tie,
        }
    }
}

/// Full record of one `run` invocation.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub program_digest: String,
    pub input: String,
    pub normalized: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileJson>,
    pub backends: Vec<BackendJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdJson>,
    /// "exact-match" only when all per-branch probabilities agree as
    /// exact rationals across backends.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<String>,
    pub tie: bool,
    pub verdict: String,
    pub elapsed_ms: u128,
}

/// Summary of one `compile` invocation.
#[derive(Clone, Debug, Serialize)]
pub struct CompileJson {
    pub program_digest: String,
    pub output_path: String,
    pub t_prime: usize,
    pub eps: f64,
    pub net_word_len: usize,
    pub net_digest: String,
    pub gates: Vec<CompileGateJson>,
    pub compiled_digest: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompileGateJson {
    pub name: String,
    pub fragment_ops: usize,
    pub ancillas: usize,
    pub words: Vec<CompileWordJson>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompileWordJson {
    pub length: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareJson {
    pub trials: usize,
    pub matched: usize,
    pub exact_match_rate: String,
    pub threshold_agreements: usize,
    pub ties: usize,
    pub counterexamples: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DummyJson {
    pub f: u32,
    pub h: u32,
    pub g: u32,
    pub total: String,
    pub accepting: String,
    pub rejecting: String,
}
