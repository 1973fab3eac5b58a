//! `qindel`: condition checks, shadow tables, decoder synthesis, simulation
//! and code search for single-qudit insertion/deletion codes.
//!
//! Every command is a function returning a [`CmdOutput`]; [`run`] parses a
//! command line and dispatches. Exit codes: 0 success, 1 a condition does
//! not hold, 2 bad input.

pub mod parse;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use qudit_indel::code::{kl_check, KlReport, LogicalCodewords};
use qudit_indel::codefile::{example_code, CodeFile};
use qudit_indel::conditions::{
    check_conditions, delta_minus, delta_plus, format_word, CodeSpec, ConditionReport, Word,
};
use qudit_indel::decoder::{
    decode_exact, decode_sampled, predicted_probs, synthesize, DecodeResult, Outcome, RecoveryPlan,
    Tolerances,
};
use qudit_indel::kraus::{
    build_deletion_kraus, build_insertion_kraus, ErrorKind, InsertedState, KrausSet, PositionDistribution,
};
use qudit_indel::linalg::{DensityMatrix, QuditDims, C64};
use qudit_indel::random::random_amplitudes;
use qudit_indel::rational::{format_fraction, format_probability};
use qudit_indel::search::{search_codes_with, SearchPolicy};
use qudit_indel::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Name under which the bundled example can be given instead of a path.
pub const BUNDLED_EXAMPLE: &str = "example_l3n6";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::KlViolation { .. }) => EXIT_FAIL,
            _ => EXIT_INPUT,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CmdOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CmdOutput {
    fn ok(code: i32, stdout: String) -> Self {
        Self {
            code,
            stdout,
            stderr: String::new(),
        }
    }
}

macro_rules! line {
    ($out:expr) => {{ let _ = writeln!($out); }};
    ($out:expr, $($t:tt)*) => {{ let _ = writeln!($out, $($t)*); }};
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Globals {
    pub json: bool,
    pub tol: f64,
    pub seed: u64,
}

impl Default for Globals {
    fn default() -> Self {
        Self {
            json: false,
            tol: 1e-9,
            seed: 0,
        }
    }
}

impl Globals {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            kl: self.tol,
            ..Tolerances::default()
        }
    }
}

// ---------------------------------------------------------------- run config

#[derive(Clone, Debug, PartialEq)]
pub enum DistSpec {
    Uniform,
    Vector(Vec<f64>),
    /// 1-based position.
    OneHot(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InsertedSpec {
    MaximallyMixed,
    /// Eigenvalues with an optional eigenbasis (columns); computational basis otherwise.
    Diagonal { probs: Vec<f64>, unitary: Option<DMatrix<C64>> },
    Density(DMatrix<C64>),
}

impl InsertedSpec {
    pub fn build(&self, l: usize) -> CliResult<InsertedState> {
        let state = match self {
            InsertedSpec::MaximallyMixed => InsertedState::from_probabilities(&vec![1.0 / l as f64; l])?,
            InsertedSpec::Diagonal { probs, unitary: None } => InsertedState::from_probabilities(probs)?,
            InsertedSpec::Diagonal { probs, unitary: Some(u) } => InsertedState::new(probs.clone(), u.clone())?,
            InsertedSpec::Density(m) => {
                InsertedState::from_density(&DensityMatrix::from_matrix(QuditDims::new(m.nrows(), 1)?, m.clone())?)?
            }
        };
        if state.l() != l {
            return Err(CliError::Usage(format!(
                "inserted state has dimension {}, code has l = {l}",
                state.l()
            )));
        }
        Ok(state)
    }

    fn describe(&self) -> String {
        match self {
            InsertedSpec::MaximallyMixed => "sigma maximally mixed".into(),
            InsertedSpec::Diagonal { probs, unitary } => {
                let p: Vec<String> = probs.iter().map(|x| format_fraction(*x)).collect();
                let basis = if unitary.is_some() { " in a given eigenbasis" } else { "" };
                format!("sigma eigenvalues ({}){basis}", p.join(", "))
            }
            InsertedSpec::Density(_) => "sigma from a density matrix literal".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kind: ErrorKind,
    pub dist: DistSpec,
    pub inserted: InsertedSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: ErrorKind::Deletion,
            dist: DistSpec::Uniform,
            inserted: InsertedSpec::MaximallyMixed,
        }
    }
}

impl RunConfig {
    /// sigma = diag(1/2, 1/3, 1/6) inserted at position 4.
    pub fn mixed_insertion_at_4() -> Self {
        Self {
            kind: ErrorKind::Insertion,
            dist: DistSpec::OneHot(4),
            inserted: InsertedSpec::Diagonal {
                probs: vec![0.5, 1.0 / 3.0, 1.0 / 6.0],
                unitary: None,
            },
        }
    }

    pub fn positions(&self, n: usize) -> usize {
        match self.kind {
            ErrorKind::Deletion => n,
            ErrorKind::Insertion => n + 1,
        }
    }

    pub fn distribution(&self, n: usize) -> CliResult<PositionDistribution> {
        let len = self.positions(n);
        Ok(match &self.dist {
            DistSpec::Uniform => PositionDistribution::uniform(len)?,
            DistSpec::Vector(w) => PositionDistribution::new(w.clone())?,
            DistSpec::OneHot(p) => PositionDistribution::one_hot(len, *p)?,
        })
    }

    pub fn kraus_set(&self, code: &CodeSpec) -> CliResult<KrausSet> {
        let dist = self.distribution(code.n())?;
        Ok(match self.kind {
            ErrorKind::Deletion => build_deletion_kraus(code.n(), code.l(), &dist)?,
            ErrorKind::Insertion => build_insertion_kraus(code.n(), &self.inserted.build(code.l())?, &dist)?,
        })
    }

    pub fn describe(&self, n: usize) -> String {
        let sign = match self.kind {
            ErrorKind::Deletion => "p-",
            ErrorKind::Insertion => "p+",
        };
        let dist = match &self.dist {
            DistSpec::Uniform => format!("{sign} uniform over {} positions", self.positions(n)),
            DistSpec::Vector(w) => {
                let w: Vec<String> = w.iter().map(|x| format_fraction(*x)).collect();
                format!("{sign} = ({})", w.join(", "))
            }
            DistSpec::OneHot(p) => format!("{sign} concentrated at position {p}"),
        };
        match self.kind {
            ErrorKind::Deletion => format!("deletion, {dist}"),
            ErrorKind::Insertion => format!("insertion, {dist}, {}", self.inserted.describe()),
        }
    }
}

// ---------------------------------------------------------------- clap

#[derive(Parser, Debug)]
#[command(name = "qindel", version, about = "Workbench for single-qudit insertion/deletion codes")]
struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Knill-Laflamme tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for random logical inputs and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ErrorArg {
    Del,
    Ins,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Tsv,
    Md,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// sigma = diag(1/2, 1/3, 1/6) inserted at position 4.
    Ins4,
    /// Deletion at position 1.
    Del1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Exhaustive,
    Cyclic,
}

#[derive(Args, Debug, Default)]
struct SigmaArgs {
    /// Inserted-state eigenvalues, e.g. 1/2,1/3,1/6.
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    /// Eigenbasis of the inserted state as a matrix literal (columns are eigenvectors).
    #[arg(long, requires = "sigma")]
    unitary: Option<String>,
    /// Inserted state as a density matrix literal.
    #[arg(long, conflicts_with_all = ["sigma", "unitary"])]
    sigma_matrix: Option<String>,
}

impl SigmaArgs {
    fn spec(&self) -> CliResult<InsertedSpec> {
        if let Some(m) = &self.sigma_matrix {
            return Ok(InsertedSpec::Density(parse::parse_matrix(m)?));
        }
        match &self.sigma {
            None => Ok(InsertedSpec::MaximallyMixed),
            Some(p) => Ok(InsertedSpec::Diagonal {
                probs: parse::parse_real_list(p)?,
                unitary: self.unitary.as_deref().map(parse::parse_matrix).transpose()?,
            }),
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Error channel.
    #[arg(long, value_enum, default_value = "del")]
    error: ErrorArg,
    /// Position distribution: `uniform` or comma-separated weights.
    #[arg(long, conflicts_with = "at")]
    dist: Option<String>,
    /// All weight on one (1-based) position.
    #[arg(long)]
    at: Option<usize>,
    #[command(flatten)]
    sigma: SigmaArgs,
}

impl RunArgs {
    fn config(&self) -> CliResult<RunConfig> {
        let kind = match self.error {
            ErrorArg::Del => ErrorKind::Deletion,
            ErrorArg::Ins => ErrorKind::Insertion,
        };
        let dist = match (&self.dist, self.at) {
            (_, Some(p)) => DistSpec::OneHot(p),
            (Some(d), None) if d.trim() != "uniform" => DistSpec::Vector(parse::parse_real_list(d)?),
            _ => DistSpec::Uniform,
        };
        Ok(RunConfig {
            kind,
            dist,
            inserted: self.sigma.spec()?,
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check both combinatorial conditions and both Knill-Laflamme conditions.
    Verify {
        /// Code file, or `example_l3n6` for the bundled example.
        #[arg(default_value = BUNDLED_EXAMPLE)]
        code: String,
        #[command(flatten)]
        sigma: SigmaArgs,
    },
    /// Print the deletion (and insertion) shadow grids.
    Table {
        #[arg(default_value = BUNDLED_EXAMPLE)]
        code: String,
        #[arg(long, value_enum, default_value = "text")]
        format: TableFormat,
        /// Omit the insertion grid.
        #[arg(long)]
        minus_only: bool,
    },
    /// Numerical Knill-Laflamme check for one channel.
    Kl {
        #[arg(default_value = BUNDLED_EXAMPLE)]
        code: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build the recovery and print d and p(k).
    Synthesize {
        #[arg(default_value = BUNDLED_EXAMPLE)]
        code: String,
        #[command(flatten)]
        run: RunArgs,
        /// Write the full plan report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode, apply the channel, decode; exact unless --trials is given.
    Simulate {
        #[arg(default_value = BUNDLED_EXAMPLE)]
        code: String,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Logical amplitudes, e.g. 0.6,0.48i,0.64; random from --seed otherwise.
        #[arg(long, allow_hyphen_values = true)]
        alphas: Option<String>,
        /// Number of sampled trajectories.
        #[arg(long)]
        trials: Option<u64>,
        /// Print every sampled trial.
        #[arg(long)]
        log: bool,
    },
    /// Enumerate codes that satisfy the deletion conditions.
    Search {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "cyclic")]
        policy: PolicyArg,
        /// Strings per class; defaults to l for the cyclic policy, all sizes otherwise.
        #[arg(long)]
        class_size: Option<usize>,
        #[arg(long, default_value_t = 100)]
        limit: usize,
        /// Write each code to its own file here instead of stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Re-check every code with the insertion conditions.
        #[arg(long)]
        verify_ins: bool,
    },
    /// Walk through the bundled example.
    Demo,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> CmdOutput
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() {
                CmdOutput {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                CmdOutput::ok(code, text)
            };
        }
    };
    let g = Globals {
        json: cli.json,
        tol: cli.tol,
        seed: cli.seed,
    };
    match dispatch(cli.command, &g) {
        Ok(out) => out,
        Err(e) => CmdOutput {
            code: e.exit_code(),
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn dispatch(command: Command, g: &Globals) -> CliResult<CmdOutput> {
    if g.tol.is_nan() || g.tol <= 0.0 {
        return Err(CliError::Usage(format!("--tol must be positive, got {}", g.tol)));
    }
    match command {
        Command::Verify { code, sigma } => cmd_verify(&load_code(&code)?, &sigma.spec()?, g),
        Command::Table {
            code,
            format,
            minus_only,
        } => cmd_table(&load_code(&code)?, format, !minus_only, g),
        Command::Kl { code, run } => cmd_kl(&load_code(&code)?, &run.config()?, g),
        Command::Synthesize { code, run, out } => cmd_synthesize(&load_code(&code)?, &run.config()?, out.as_deref(), g),
        Command::Simulate {
            code,
            run,
            preset,
            alphas,
            trials,
            log,
        } => {
            let config = match preset {
                Some(Preset::Ins4) => RunConfig::mixed_insertion_at_4(),
                Some(Preset::Del1) => RunConfig {
                    dist: DistSpec::OneHot(1),
                    ..RunConfig::default()
                },
                None => run.config()?,
            };
            let alphas = alphas.as_deref().map(parse::parse_complex_list).transpose()?;
            cmd_simulate(&load_code(&code)?, &config, alphas.as_deref(), trials, log, g)
        }
        Command::Search {
            l,
            n,
            policy,
            class_size,
            limit,
            out_dir,
            verify_ins,
        } => {
            let policy = match policy {
                PolicyArg::Exhaustive => SearchPolicy::Exhaustive { class_size },
                PolicyArg::Cyclic => SearchPolicy::CyclicOrbits {
                    class_size: class_size.unwrap_or(l),
                },
            };
            cmd_search(l, n, policy, limit, out_dir.as_deref(), verify_ins, g)
        }
        Command::Demo => cmd_demo(g),
    }
}

/// Loads a code file, or the bundled example by name.
pub fn load_code(arg: &str) -> CliResult<CodeSpec> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(CodeFile::load(path)?.code);
    }
    if arg == BUNDLED_EXAMPLE {
        return Ok(example_code());
    }
    Err(CliError::Io(format!("no such code file: {arg}")))
}

// ---------------------------------------------------------------- verify

fn ratio_grid(report: &ConditionReport, positions: usize, l: usize) -> String {
    let keys: Vec<(usize, u8)> = (1..=positions).flat_map(|p| (0..l as u8).map(move |b| (p, b))).collect();
    let cells: Vec<Vec<String>> = keys
        .iter()
        .map(|&(p1, b1)| {
            keys.iter()
                .map(|&(p2, b2)| {
                    let pair = qudit_indel::conditions::ShadowPair { p1, b1, p2, b2 };
                    report.ratio_table.get(&pair).map_or("-".into(), |r| r.to_string())
                })
                .collect()
        })
        .collect();
    let width = cells.iter().flatten().map(|c| c.len()).max().unwrap_or(1).max(4);
    let mut out = String::new();
    let mut header = format!("{:>6}", "p,b");
    for (p, b) in &keys {
        let _ = write!(header, " {:>width$}", format!("{p},{b}"));
    }
    line!(out, "{header}");
    for ((p, b), row) in keys.iter().zip(&cells) {
        let mut s = format!("{:>6}", format!("{p},{b}"));
        for c in row {
            let _ = write!(s, " {c:>width$}");
        }
        line!(out, "{s}");
    }
    out
}

fn distinct_ratios(report: &ConditionReport) -> Vec<String> {
    let mut values: Vec<(u64, u64)> = report.ratio_table.values().map(|r| r.reduced()).collect();
    values.sort_by(|a, b| (a.0 as u128 * b.1 as u128).cmp(&(b.0 as u128 * a.1 as u128)));
    values.dedup();
    values
        .into_iter()
        .map(|(n, d)| match (n, d) {
            (0, _) => "0".to_string(),
            (n, 1) => n.to_string(),
            (n, d) => format!("{n}/{d}"),
        })
        .collect()
}

fn condition_json(report: &ConditionReport) -> Value {
    json!({
        "satisfied": report.satisfied,
        "violation_count": report.violation_count,
        "ratio_violation_count": report.ratio_violation_count,
        "distance_violation_count": report.distance_violation_count,
        "violations": report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        "ratio_values": distinct_ratios(report),
        "ratio_table": report.ratio_table.iter().map(|(k, r)| {
            (format!("{},{}|{},{}", k.p1, k.b1, k.p2, k.b2), Value::from(r.to_string()))
        }).collect::<serde_json::Map<_, _>>(),
    })
}

fn kl_json(report: &KlReport) -> Value {
    json!({
        "satisfied": report.satisfied,
        "tol": report.tol,
        "max_offdiag_logical": report.max_offdiag_logical,
        "max_diag_spread": report.max_diag_spread,
        "mu_hermiticity_deviation": report.mu_hermiticity_deviation(),
        "labels": report.labels.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
        "mu": (0..report.mu.nrows()).map(|a| (0..report.mu.ncols()).map(|b| {
            let z = report.mu[(a, b)];
            json!([z.re, z.im])
        }).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

fn kl_text(out: &mut String, title: &str, report: &KlReport) {
    line!(
        out,
        "{title}: {} (max off-diagonal {:.3e}, max diagonal spread {:.3e}, mu Hermiticity {:.3e}, tol {:.1e})",
        if report.satisfied { "satisfied" } else { "VIOLATED" },
        report.max_offdiag_logical,
        report.max_diag_spread,
        report.mu_hermiticity_deviation(),
        report.tol
    );
}

fn render(g: &Globals, value: Value, text: String) -> String {
    if g.json {
        let mut s = serde_json::to_string_pretty(&value).expect("json values serialize");
        s.push('\n');
        s
    } else {
        text
    }
}

/// Both combinatorial checkers and both numerical checks; exit 0 iff all hold.
pub fn cmd_verify(code: &CodeSpec, inserted: &InsertedSpec, g: &Globals) -> CliResult<CmdOutput> {
    let del = check_conditions(code, ErrorKind::Deletion);
    let ins = check_conditions(code, ErrorKind::Insertion);
    let cw = LogicalCodewords::new(code)?;
    let del_ks = RunConfig::default().kraus_set(code)?;
    let ins_ks = RunConfig {
        kind: ErrorKind::Insertion,
        dist: DistSpec::Uniform,
        inserted: inserted.clone(),
    }
    .kraus_set(code)?;
    let kl_del = kl_check(&cw, &del_ks, g.tol)?;
    let kl_ins = kl_check(&cw, &ins_ks, g.tol)?;
    let all = del.satisfied && ins.satisfied && kl_del.satisfied && kl_ins.satisfied;

    let mut text = String::new();
    line!(text, "code: {code}");
    for (title, report, positions) in [
        ("deletion conditions", &del, code.n()),
        ("insertion conditions", &ins, code.n() + 1),
    ] {
        line!(
            text,
            "{title}: {} ({} violations: {} ratio, {} distance)",
            if report.satisfied { "satisfied" } else { "VIOLATED" },
            report.violation_count,
            report.ratio_violation_count,
            report.distance_violation_count
        );
        line!(text, "  ratio values (class 0): {}", distinct_ratios(report).join(", "));
        for v in &report.violations {
            line!(text, "  {v}");
        }
        if report.violation_count > report.violations.len() {
            line!(text, "  ... {} more", report.violation_count - report.violations.len());
        }
        if report.satisfied {
            line!(text, "  ratio table |D(p1,b1) & D(p2,b2)| / |A|, class 0:");
            for l in ratio_grid(report, positions, code.l()).lines() {
                line!(text, "  {l}");
            }
        }
    }
    kl_text(&mut text, "Knill-Laflamme, deletion (uniform p-)", &kl_del);
    kl_text(
        &mut text,
        &format!("Knill-Laflamme, insertion (uniform p+, {})", inserted.describe()),
        &kl_ins,
    );
    line!(text, "verdict: {}", if all { "all conditions hold" } else { "NOT correctable" });

    let value = json!({
        "code": code.to_string(),
        "satisfied": all,
        "deletion": condition_json(&del),
        "insertion": condition_json(&ins),
        "kl_deletion": kl_json(&kl_del),
        "kl_insertion": kl_json(&kl_ins),
    });
    Ok(CmdOutput::ok(if all { EXIT_OK } else { EXIT_FAIL }, render(g, value, text)))
}

// ---------------------------------------------------------------- table

fn cell(set: &BTreeSet<Word>) -> String {
    if set.is_empty() {
        "\u{2205}".into()
    } else {
        let words: Vec<String> = set.iter().map(|w| format_word(w)).collect();
        format!("{{{}}}", words.join(","))
    }
}

/// `cells[i][p-1][b]` for the deletion (`plus = false`) or insertion grid.
pub fn shadow_cells(code: &CodeSpec, plus: bool) -> Vec<Vec<Vec<String>>> {
    let positions = if plus { code.n() + 1 } else { code.n() };
    code.classes()
        .iter()
        .map(|a| {
            (1..=positions)
                .map(|p| {
                    (0..code.l() as u8)
                        .map(|b| cell(&if plus { delta_plus(a, p, b) } else { delta_minus(a, p, b) }))
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn class_label(code: &CodeSpec, i: usize) -> String {
    let words: Vec<String> = code.class(i).iter().map(|w| format_word(w)).collect();
    format!("A{i}={{{}}}", words.join(","))
}

pub fn cmd_table(code: &CodeSpec, format: TableFormat, with_plus: bool, g: &Globals) -> CliResult<CmdOutput> {
    let mut grids = vec![("minus", shadow_cells(code, false))];
    if with_plus {
        grids.push(("plus", shadow_cells(code, true)));
    }
    if g.json {
        let value: serde_json::Map<String, Value> = grids
            .iter()
            .map(|(name, cells)| (name.to_string(), json!(cells)))
            .collect();
        return Ok(CmdOutput::ok(EXIT_OK, render(g, Value::Object(value), String::new())));
    }
    let l = code.l();
    let mut out = String::new();
    if format == TableFormat::Tsv {
        let header: Vec<String> = (0..l).map(|b| format!("b={b}")).collect();
        line!(out, "grid\tclass\tp\t{}", header.join("\t"));
    }
    for (name, cells) in &grids {
        let sym = if *name == "minus" { "\u{0394}\u{207b}" } else { "\u{0394}\u{207a}" };
        for (i, rows) in cells.iter().enumerate() {
            match format {
                TableFormat::Tsv => {
                    for (p, row) in rows.iter().enumerate() {
                        line!(out, "{name}\t{i}\t{}\t{}", p + 1, row.join("\t"));
                    }
                }
                TableFormat::Md => {
                    line!(out, "**{sym}_{{p,b}}(A{i})**, {}", class_label(code, i));
                    line!(out);
                    let header: Vec<String> = (0..l).map(|b| format!("b={b}")).collect();
                    line!(out, "| | {} |", header.join(" | "));
                    line!(out, "|---|{}", "---|".repeat(l));
                    for (p, row) in rows.iter().enumerate() {
                        line!(out, "| p={} | {} |", p + 1, row.join(" | "));
                    }
                    line!(out);
                }
                TableFormat::Text => {
                    line!(out, "{sym}_{{p,b}}(A{i})  {}", class_label(code, i));
                    let width = rows.iter().flatten().map(|c| c.chars().count()).max().unwrap_or(1).max(3);
                    let mut header = format!("{:<5}", "");
                    for b in 0..l {
                        let _ = write!(header, " | {:<width$}", format!("b={b}"));
                    }
                    line!(out, "{}", header.trim_end());
                    for (p, row) in rows.iter().enumerate() {
                        let mut s = format!("{:<5}", format!("p={}", p + 1));
                        for c in row {
                            let pad = width - c.chars().count();
                            let _ = write!(s, " | {c}{}", " ".repeat(pad));
                        }
                        line!(out, "{}", s.trim_end());
                    }
                    line!(out);
                }
            }
        }
    }
    Ok(CmdOutput::ok(EXIT_OK, out))
}

// ---------------------------------------------------------------- kl

pub fn cmd_kl(code: &CodeSpec, config: &RunConfig, g: &Globals) -> CliResult<CmdOutput> {
    let cw = LogicalCodewords::new(code)?;
    let ks = config.kraus_set(code)?;
    let report = kl_check(&cw, &ks, g.tol)?;
    let mut text = String::new();
    line!(text, "code: {code}");
    line!(text, "channel: {} ({} Kraus operators)", config.describe(code.n()), ks.len());
    kl_text(&mut text, "Knill-Laflamme", &report);
    let code_out = if report.satisfied { EXIT_OK } else { EXIT_FAIL };
    Ok(CmdOutput::ok(code_out, render(g, kl_json(&report), text)))
}

// ---------------------------------------------------------------- synthesize

fn probs_json(probs: &[f64]) -> Value {
    Value::Array(
        probs
            .iter()
            .enumerate()
            .map(|(k, p)| json!({"k": k + 1, "p": p, "fraction": format_fraction(*p)}))
            .collect(),
    )
}

pub fn cmd_synthesize(code: &CodeSpec, config: &RunConfig, out: Option<&Path>, g: &Globals) -> CliResult<CmdOutput> {
    let cw = LogicalCodewords::new(code)?;
    let ks = config.kraus_set(code)?;
    let plan = synthesize(&cw, &ks, g.tolerances())?;
    let probs = predicted_probs(&plan, &ks)?;
    if let Some(path) = out {
        std::fs::write(path, plan.export_report(&ks)?).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    let mut text = String::new();
    line!(text, "code: {code}");
    line!(text, "channel: {}", config.describe(code.n()));
    line!(text, "d = {}", plan.d());
    line!(text, "p(k):");
    for (k, p) in probs.iter().enumerate() {
        line!(text, "  k={:<3} {}", k + 1, format_probability(*p));
    }
    line!(text, "  total {}", format_probability(probs.iter().sum()));
    if let Some(path) = out {
        line!(text, "plan report written to {}", path.display());
    }
    let value = json!({
        "d": plan.d(),
        "channel": config.describe(code.n()),
        "orthonormality_deviation": plan.orthonormality_deviation(),
        "correction_deviation": plan.correction_deviation(),
        "probabilities": probs_json(&probs),
    });
    Ok(CmdOutput::ok(EXIT_OK, render(g, value, text)))
}

// ---------------------------------------------------------------- simulate

fn outcome_json(outcome: Outcome) -> Value {
    match outcome {
        Outcome::Syndrome(k) => json!(k),
        Outcome::Null => json!("null"),
    }
}

fn decode_json(res: &DecodeResult) -> Value {
    json!({
        "total_probability": res.total_probability,
        "mean_fidelity": res.mean_fidelity,
        "outcomes": res.outcomes.iter().map(|r| json!({
            "outcome": outcome_json(r.outcome),
            "probability": r.probability,
            "fraction": format_fraction(r.probability),
            "fidelity": r.fidelity,
        })).collect::<Vec<_>>(),
    })
}

fn format_alphas(alphas: &[C64]) -> String {
    let parts: Vec<String> = alphas
        .iter()
        .map(|z| if z.im == 0.0 { format!("{:.6}", z.re) } else { format!("{:.6}{:+.6}i", z.re, z.im) })
        .collect();
    format!("({})", parts.join(", "))
}

/// Exact decode of `ks` applied to `Enc(alphas)`, via the full output density matrix.
pub fn simulate_exact(plan: &RecoveryPlan, ks: &KrausSet, cw: &LogicalCodewords, alphas: &[C64]) -> CliResult<DecodeResult> {
    let psi = cw.encode(alphas)?;
    let rho = ks.apply_pure(&psi)?;
    Ok(decode_exact(plan, &rho, Some(alphas))?)
}

pub fn cmd_simulate(
    code: &CodeSpec,
    config: &RunConfig,
    alphas: Option<&[C64]>,
    trials: Option<u64>,
    log: bool,
    g: &Globals,
) -> CliResult<CmdOutput> {
    if trials == Some(0) {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let cw = LogicalCodewords::new(code)?;
    let ks = config.kraus_set(code)?;
    let plan = synthesize(&cw, &ks, g.tolerances())?;
    let alphas: Vec<C64> = match alphas {
        Some(a) => a.to_vec(),
        None => random_amplitudes(code.l(), &mut ChaCha8Rng::seed_from_u64(g.seed)),
    };
    let predicted = predicted_probs(&plan, &ks)?;
    let mut text = String::new();
    line!(text, "code: {code}");
    line!(text, "channel: {}", config.describe(code.n()));
    line!(text, "logical input alpha = {}", format_alphas(&alphas));
    line!(text, "d = {}", plan.d());

    let value = match trials {
        None => {
            let res = simulate_exact(&plan, &ks, &cw, &alphas)?;
            line!(text, "exact decoding (outcomes with nonzero probability):");
            for r in &res.outcomes {
                if r.probability > plan.tolerances().num {
                    let f = r.fidelity.map_or("-".into(), |f| format!("{f:.12}"));
                    line!(text, "  {:<6} p = {:<36} fidelity {f}", r.outcome.to_string(), format_probability(r.probability));
                }
            }
            line!(text, "  p(\u{2205}) = {:.3e}", res.probability_of(Outcome::Null));
            line!(text, "total probability {}", format_probability(res.total_probability));
            if let Some(f) = res.mean_fidelity {
                line!(text, "mean fidelity {f:.12}");
            }
            json!({
                "mode": "exact",
                "channel": config.describe(code.n()),
                "alphas": alphas.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
                "d": plan.d(),
                "result": decode_json(&res),
            })
        }
        Some(t) => {
            let psi = cw.encode(&alphas)?;
            let rep = decode_sampled(&plan, &psi, Some(&alphas), &ks, t, g.seed)?;
            line!(text, "sampled decoding: {t} trials, seed {}", g.seed);
            line!(text, "  {:<6} {:>9} {:>12} {:>12} {:>8}", "", "count", "frequency", "expected", "z");
            let mut rows = Vec::new();
            for (k, p) in predicted.iter().enumerate() {
                let outcome = Outcome::Syndrome(k + 1);
                let count = *rep.histogram.get(&outcome).unwrap_or(&0);
                if count == 0 && *p <= plan.tolerances().num {
                    continue;
                }
                let sigma = (p * (1.0 - p) / t as f64).sqrt();
                let z = if sigma > 0.0 { (rep.frequency(outcome) - p) / sigma } else { 0.0 };
                line!(text, "  {:<6} {count:>9} {:>12.6} {p:>12.6} {z:>8.2}", outcome.to_string(), rep.frequency(outcome));
                rows.push(json!({"outcome": k + 1, "count": count, "expected": p, "z": z}));
            }
            let nulls = *rep.histogram.get(&Outcome::Null).unwrap_or(&0);
            line!(text, "  {:<6} {nulls:>9}", Outcome::Null.to_string());
            if let Some(f) = rep.mean_fidelity {
                line!(text, "mean fidelity {f:.12}");
            }
            if log {
                for r in &rep.log {
                    let f = r.fidelity.map_or("-".into(), |f| format!("{f:.12}"));
                    line!(text, "  trial {:>6}: {} -> {} fidelity {f}", r.trial, r.branch, r.outcome);
                }
            }
            json!({
                "mode": "sampled",
                "channel": config.describe(code.n()),
                "trials": t,
                "seed": g.seed,
                "d": plan.d(),
                "histogram": rows,
                "null_count": nulls,
                "mean_fidelity": rep.mean_fidelity,
            })
        }
    };
    Ok(CmdOutput::ok(EXIT_OK, render(g, value, text)))
}

// ---------------------------------------------------------------- search

pub fn cmd_search(
    l: usize,
    n: usize,
    policy: SearchPolicy,
    limit: usize,
    out_dir: Option<&Path>,
    verify_ins: bool,
    g: &Globals,
) -> CliResult<CmdOutput> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let policy_name = match policy {
        SearchPolicy::Exhaustive { .. } => "exhaustive",
        SearchPolicy::CyclicOrbits { .. } => "cyclic",
    };
    let mut text = String::new();
    let mut files = Vec::new();
    let mut ins_failures = Vec::new();
    let mut io_error = None;
    let mut index = 0usize;
    let outcome = search_codes_with(l, n, policy, limit, |code| {
        index += 1;
        let mut file = CodeFile::new(code.clone());
        file.name = Some(format!("l{l}n{n}-{policy_name}-{index}"));
        file.provenance = Some("qindel search".into());
        if verify_ins && !check_conditions(code, ErrorKind::Insertion).satisfied {
            ins_failures.push(index);
        }
        match out_dir {
            Some(dir) => {
                let path = dir.join(format!("l{l}n{n}_{index:04}.json"));
                if let Err(e) = file.save(&path) {
                    io_error.get_or_insert(e);
                }
                files.push(path.display().to_string());
                line!(text, "{}", path.display());
            }
            None => {
                files.push(file.to_json());
                text.push_str(&file.to_json());
            }
        }
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    if outcome.truncated {
        line!(text, "limit of {limit} codes reached; search stopped");
    } else {
        line!(
            text,
            "{} codes found from {} candidate classes",
            outcome.codes.len(),
            outcome.candidate_classes
        );
    }
    if verify_ins {
        if ins_failures.is_empty() {
            line!(text, "insertion conditions hold for every code");
        } else {
            line!(text, "insertion conditions FAIL for codes {ins_failures:?}");
        }
    }
    let value = json!({
        "l": l,
        "n": n,
        "policy": policy_name,
        "count": outcome.codes.len(),
        "truncated": outcome.truncated,
        "candidate_classes": outcome.candidate_classes,
        "codes": outcome.codes.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        "files": if out_dir.is_some() { json!(files) } else { Value::Null },
        "insertion_failures": ins_failures,
    });
    let code = if ins_failures.is_empty() { EXIT_OK } else { EXIT_FAIL };
    Ok(CmdOutput::ok(code, render(g, value, text)))
}

// ---------------------------------------------------------------- demo

pub fn cmd_demo(g: &Globals) -> CliResult<CmdOutput> {
    let code = example_code();
    let sections = [
        ("verify", cmd_verify(&code, &InsertedSpec::MaximallyMixed, g)?),
        ("deletion decoder", cmd_synthesize(&code, &RunConfig::default(), None, g)?),
        ("mixed insertion at position 4", cmd_simulate(&code, &RunConfig::mixed_insertion_at_4(), None, None, false, g)?),
    ];
    let code_out = sections.iter().map(|(_, o)| o.code).max().unwrap_or(EXIT_OK);
    if g.json {
        let value: serde_json::Map<String, Value> = sections
            .iter()
            .map(|(name, o)| (name.to_string(), serde_json::from_str(&o.stdout).unwrap_or(Value::Null)))
            .collect();
        return Ok(CmdOutput::ok(code_out, render(g, Value::Object(value), String::new())));
    }
    let mut text = String::new();
    for (name, o) in &sections {
        line!(text, "== {name} ==");
        text.push_str(&o.stdout);
        line!(text);
    }
    let table = cmd_table(&code, TableFormat::Text, false, g)?;
    line!(text, "== deletion shadows ==");
    text.push_str(&table.stdout);
    Ok(CmdOutput::ok(code_out, text))
}
