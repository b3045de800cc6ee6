//! Experiment driver behind the `rqclab` binary.
//!
//! Every subcommand writes CSV whose first line is `# config: ...`, holding
//! the parsed command, the master seed and the seeding scheme. The same
//! arguments always produce the same bytes, whatever `--threads` is.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rqclab::circuit::{
    conflict_chain_mc, coverage_probability, depth_tail_mc, sample_rqc_td, DEFAULT_REJECTION_CAP,
};
use rqclab::decoupler::{decoupling_curve, moment_consistency, DensityMatrix, GateEnsemble};
use rqclab::gambler::{ruin_exact_linear, ruin_mc, ruin_probability, RuinInstance};
use rqclab::stats::{run_trials_exact, Histogram, SEEDING_SCHEME};
use rqclab::string_chain::{build_q_matrix, empirical_uniformity};
use rqclab::weight_chain::{hitting_time_mc, HittingSampler, WeightChain};
use rqclab::{Error, PauliString};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_PARAMETER: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_REJECTION_CAP: i32 = 4;

#[derive(Debug, Clone, Parser)]
#[command(name = "rqclab", version, about = "Random-circuit decoupling experiments as CSV")]
pub struct RunConfig {
    /// Master seed; trial i uses stream i of this seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (0 uses every core). Does not affect results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Exact law of the Pauli weight after t steps.
    WeightEvolve(WeightEvolve),
    /// Monte Carlo hitting times of the weight chain.
    HittingTime(HittingTime),
    /// Chi-square uniformity of each weight shell after t string-chain steps.
    StringShells(StringShells),
    /// Ruin probability: closed form, linear solve and simulation.
    Gambler(Gambler),
    /// Greedy depth of sequential random circuits.
    Depth(Depth),
    /// Probability that t random gates touch every qubit.
    Coverage(Coverage),
    /// Trace-distance decoupling error along random circuits.
    Decouple(Decouple),
    /// Gate-level second moments against the string chain.
    MomentCheck(MomentCheck),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::WeightEvolve(_) => "weight-evolve",
            Command::HittingTime(_) => "hitting-time",
            Command::StringShells(_) => "string-shells",
            Command::Gambler(_) => "gambler",
            Command::Depth(_) => "depth",
            Command::Coverage(_) => "coverage",
            Command::Decouple(_) => "decouple",
            Command::MomentCheck(_) => "moment-check",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WeightEvolve {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub start: usize,
    #[arg(long)]
    pub t: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Sampler {
    Direct,
    Accelerated,
}

#[derive(Debug, Clone, Args)]
pub struct HittingTime {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub start: usize,
    /// Target weight; defaults to ⌊0.7n⌋.
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    /// Censoring deadline; defaults to ⌈50 n log₂²n⌉.
    #[arg(long)]
    pub deadline: Option<u64>,
    #[arg(long, value_enum, default_value_t = Sampler::Accelerated)]
    pub sampler: Sampler,
    /// Also write the full histogram as `t,count` to this file.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StringShells {
    #[arg(long)]
    pub n: usize,
    /// Starting Pauli string (site 1 first); defaults to a single X on the last site.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub t: u64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    /// Also write the one-step matrix as `mu,nu,prob` triplets (n ≤ 6).
    #[arg(long)]
    pub triplets: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Gambler {
    /// Right absorbing boundary.
    #[arg(long)]
    pub a: usize,
    /// Forward probability at site 0, and at every site unless --p-plus is given.
    #[arg(long)]
    pub p: f64,
    /// Forward probabilities at sites 1..a-1, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub p_plus: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
}

#[derive(Debug, Clone, Args)]
pub struct Depth {
    #[arg(long)]
    pub n: usize,
    /// Gates per circuit; defaults to ⌈n log₂²n⌉.
    #[arg(long)]
    pub t: Option<usize>,
    /// Keep only circuits of depth at most d, by rejection.
    #[arg(long)]
    pub d: Option<usize>,
    /// Report conflict-chain frequencies for chain lengths 1..=k instead.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, default_value_t = DEFAULT_REJECTION_CAP)]
    pub rejection_cap: usize,
}

#[derive(Debug, Clone, Args)]
pub struct Coverage {
    #[arg(long)]
    pub n: usize,
    /// Gates per circuit; defaults to ⌈3 n ln n⌉.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Ensemble {
    Haar,
    Clifford,
}

impl From<Ensemble> for GateEnsemble {
    fn from(e: Ensemble) -> Self {
        match e {
            Ensemble::Haar => GateEnsemble::Haar,
            Ensemble::Clifford => GateEnsemble::Clifford,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitialState {
    /// The first e A-qubits maximally entangled with E, the rest in |0⟩.
    Entangled,
    /// (I/2^n) ⊗ I/2^e, invariant under every circuit.
    Mixed,
}

#[derive(Debug, Clone, Args)]
pub struct Decouple {
    /// A-qubits.
    #[arg(long)]
    pub n: usize,
    /// E-qubits.
    #[arg(long, default_value_t = 2)]
    pub e: usize,
    /// Kept A-qubits, taken from the end of the register.
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    /// Circuit lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,25,50,100,200")]
    pub t: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = Ensemble::Haar)]
    pub ensemble: Ensemble,
    #[arg(long, value_enum, default_value_t = InitialState::Entangled)]
    pub state: InitialState,
}

#[derive(Debug, Clone, Args)]
pub struct MomentCheck {
    #[arg(long)]
    pub n: usize,
    /// Pauli string μ (site 1 first); defaults to X on the first site.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub t: usize,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = Ensemble::Haar)]
    pub ensemble: Ensemble,
}

/// A failure carrying its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) => EXIT_PARAMETER,
            Error::Capacity { .. } => EXIT_GUARD,
            Error::RejectionCap { .. } => EXIT_REJECTION_CAP,
            Error::Internal(_) => EXIT_INTERNAL,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_INTERNAL, message: format!("i/o error: {e}") }
    }
}

/// Shortest round-trip form, in exponent notation outside [1e-4, 1e15).
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn parameter(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_PARAMETER, message: msg.into() }
}

fn parse_string(text: &str, n: usize) -> Result<PauliString, Failure> {
    let p: PauliString = text.parse().map_err(Failure::from)?;
    if p.len() != n {
        return Err(parameter(format!("string {text} has {} sites, expected {n}", p.len())));
    }
    Ok(p)
}

/// Output of one run: the main CSV plus optional side files.
#[derive(Debug, Default)]
pub struct Output {
    pub csv: String,
    pub side_files: Vec<(PathBuf, String)>,
}

impl RunConfig {
    pub fn config_line(&self) -> String {
        format!(
            "# config: command={} args={:?} seed={} threads={} seeding={}\n",
            self.command.name(),
            self.command,
            self.seed,
            self.threads,
            SEEDING_SCHEME
        )
    }

    /// Runs the subcommand and renders its CSV without touching the filesystem.
    pub fn execute(&self) -> Result<Output, Failure> {
        let mut out = Output { csv: self.config_line(), side_files: Vec::new() };
        let csv = &mut out.csv;
        let seed = self.seed;
        match &self.command {
            Command::WeightEvolve(c) => {
                let dist = WeightChain::build(c.n)?.evolve(c.start, c.t)?;
                csv.push_str("k,prob\n");
                let first = usize::from(c.start > 0);
                for (k, p) in dist.iter().enumerate().skip(first) {
                    if c.start == 0 && k > 0 {
                        break;
                    }
                    writeln!(csv, "{k},{}", fmt_f64(*p)).unwrap();
                }
            }
            Command::HittingTime(c) => {
                let chain = WeightChain::build(c.n)?;
                let target = c.target.unwrap_or(7 * c.n / 10);
                let sampler = match c.sampler {
                    Sampler::Direct => HittingSampler::Direct,
                    Sampler::Accelerated => HittingSampler::Accelerated,
                };
                let stats = hitting_time_mc(&chain, c.start, target, c.trials, c.deadline, seed, sampler)?;
                let q = |p: f64| stats.quantile(p).map_or("inf".to_string(), |v| v.to_string());
                csv.push_str("start,target,trial_count,censored,p50,p90,p99,mean\n");
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    stats.start,
                    stats.target,
                    stats.trials(),
                    stats.censored,
                    q(0.5),
                    q(0.9),
                    q(0.99),
                    fmt_f64(stats.mean())
                )
                .unwrap();
                if let Some(path) = &c.histogram {
                    let mut h = self.config_line();
                    h.push_str("t,count\n");
                    for (t, count) in stats.histogram.iter() {
                        writeln!(h, "{t},{count}").unwrap();
                    }
                    out.side_files.push((path.clone(), h));
                }
            }
            Command::StringShells(c) => {
                let start = match &c.start {
                    Some(s) => parse_string(s, c.n)?,
                    None => {
                        if c.n < 2 {
                            return Err(parameter("string chain needs n >= 2"));
                        }
                        let mut p = PauliString::identity(c.n);
                        p.set(c.n - 1, 1);
                        p
                    }
                };
                let rep = empirical_uniformity(&start, c.t, c.trials, seed)?;
                csv.push_str("k,shell_size,chi2,dof,pvalue\n");
                for s in &rep.shells {
                    match s.test {
                        Some(t) => writeln!(
                            csv,
                            "{},{},{},{},{}",
                            s.k,
                            s.shell_size,
                            fmt_f64(t.statistic),
                            t.dof,
                            fmt_f64(t.p_value)
                        ),
                        None => writeln!(csv, "{},{},,,", s.k, s.shell_size),
                    }
                    .unwrap();
                }
                if let Some(path) = &c.triplets {
                    let q = build_q_matrix(c.n)?;
                    let mut bytes = self.config_line().into_bytes();
                    q.write_triplets(&mut bytes)?;
                    out.side_files.push((path.clone(), String::from_utf8(bytes).expect("ascii")));
                }
            }
            Command::Gambler(c) => {
                let p_plus = match &c.p_plus {
                    Some(v) => v.clone(),
                    None => vec![c.p; c.a.saturating_sub(1)],
                };
                let inst = RuinInstance::new(c.a, c.p, p_plus)?;
                let exact = ruin_probability(&inst)?;
                let linear = ruin_exact_linear(&inst)?;
                let mc = ruin_mc(&inst, c.trials, seed);
                let z = if mc.stderr > 0.0 { (mc.mean - exact) / mc.stderr } else { 0.0 };
                csv.push_str("a,p,exact,linear,trials,mc_mean,mc_stderr,z\n");
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    c.a,
                    fmt_f64(c.p),
                    fmt_f64(exact),
                    fmt_f64(linear),
                    c.trials,
                    fmt_f64(mc.mean),
                    fmt_f64(mc.stderr),
                    fmt_f64(z)
                )
                .unwrap();
            }
            Command::Depth(c) => {
                if c.n < 2 {
                    return Err(parameter("need at least 2 qubits"));
                }
                let l = (c.n as f64).log2();
                let t = c.t.unwrap_or((c.n as f64 * l * l).ceil() as usize);
                if let Some(k) = c.k {
                    csv.push_str("k,hits,trials,frequency,bound\n");
                    for f in conflict_chain_mc(c.n, k, c.trials, seed)? {
                        writeln!(
                            csv,
                            "{},{},{},{},{}",
                            f.k,
                            f.hits,
                            f.trials,
                            fmt_f64(f.estimate().mean),
                            fmt_f64(f.bound)
                        )
                        .unwrap();
                    }
                } else {
                    let hist = match c.d {
                        None => depth_tail_mc(c.n, t, c.trials, seed)?,
                        Some(d) => limited_depths(c.n, t, d, c.rejection_cap, c.trials, seed)?,
                    };
                    csv.push_str("depth,count\n");
                    for (d, count) in hist.iter() {
                        writeln!(csv, "{d},{count}").unwrap();
                    }
                }
            }
            Command::Coverage(c) => {
                let t = c.t.unwrap_or((3.0 * c.n as f64 * (c.n as f64).ln()).ceil() as usize);
                let cov = coverage_probability(c.n, t, c.trials, seed)?;
                let miss = cov.uncovered_estimate();
                csv.push_str("n,t,trials,uncovered,stderr,bound\n");
                writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    c.n,
                    t,
                    c.trials,
                    fmt_f64(miss.mean),
                    fmt_f64(miss.stderr),
                    fmt_f64(cov.bound)
                )
                .unwrap();
            }
            Command::Decouple(c) => {
                if c.s > c.n {
                    return Err(parameter(format!("cannot keep {} of {} qubits", c.s, c.n)));
                }
                let rho = match c.state {
                    InitialState::Entangled => DensityMatrix::entangled_with_env(c.n, c.e)?,
                    InitialState::Mixed => DensityMatrix::maximally_mixed(c.n, c.e)?,
                };
                let keep: Vec<usize> = (c.n - c.s..c.n).collect();
                let curve = decoupling_curve(&rho, &keep, &c.t, c.ensemble.into(), c.trials, seed)?;
                csv.push_str("n,e_qubits,s,t,trials,mean,stderr\n");
                for p in curve {
                    writeln!(
                        csv,
                        "{},{},{},{},{},{},{}",
                        c.n,
                        c.e,
                        c.s,
                        p.t,
                        p.error.trials,
                        fmt_f64(p.error.mean),
                        fmt_f64(p.error.stderr)
                    )
                    .unwrap();
                }
            }
            Command::MomentCheck(c) => {
                let mu = match &c.start {
                    Some(s) => parse_string(s, c.n)?,
                    None => {
                        let mut p = PauliString::identity(c.n);
                        if c.n > 0 {
                            p.set(0, 1);
                        }
                        p
                    }
                };
                let rep = moment_consistency(c.n, &mu, c.t, c.trials, c.ensemble.into(), seed)?;
                csv.push_str("nu,empirical,exact,z\n");
                for r in &rep.rows {
                    writeln!(
                        csv,
                        "{},{},{},{}",
                        r.nu,
                        fmt_f64(r.empirical.mean),
                        fmt_f64(r.exact),
                        fmt_f64(r.z)
                    )
                    .unwrap();
                }
            }
        }
        Ok(out)
    }
}

fn limited_depths(n: usize, t: usize, d: usize, cap: usize, trials: u64, seed: u64) -> Result<Histogram, Error> {
    let results = run_trials_exact(
        trials,
        seed,
        || Ok(Histogram::new()),
        |acc: &mut Result<Histogram, Error>, _, rng| {
            if let Ok(h) = acc {
                match sample_rqc_td(n, t, d, cap, rng) {
                    Ok(c) => h.record(c.levels.depth() as u64),
                    Err(e) => *acc = Err(e),
                }
            }
        },
        |a, b| Ok(a?.merge(b?)),
    );
    results
}

/// Parses a full argument list, program name first.
pub fn parse_args<I, T>(args: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    RunConfig::try_parse_from(args)
}

/// Parses `args`, runs, and writes the CSV to `--out` or `stdout`. Returns
/// the process exit status; diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_PARAMETER;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match run_config(&config, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run_config(config: &RunConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Failure { code: EXIT_INTERNAL, message: e.to_string() })?;
    let output = pool.install(|| config.execute())?;
    match &config.out {
        Some(path) => std::fs::write(path, &output.csv)?,
        None => stdout.write_all(output.csv.as_bytes())?,
    }
    for (path, body) in &output.side_files {
        std::fs::write(path, body)?;
    }
    Ok(())
}
