//! The `delta` command line. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: 0 on success, 1 when an
//! analysis or input file fails, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analyses::render::{Format, Report};
use crate::analyses::{
    energy_et2, latency_criticality, modification_diff, run_graph, slowdown, timing_predictability,
    AnalysisOptions, TestMethod,
};
use crate::cfg::{graph_for_runs, graph_for_trace, render_dot, CfgOptions, GraphDump, Scope};
use crate::ingest::{
    align, interpolate, parse_trace, AlignOptions, AlignStrategy, AlignedRun, E2eEndpoints, MetaOverrides,
};
use crate::simgen::{default_pipeline, generate, inject, scale_frequency, write_fixture, Modification, PipelineSpec};
use crate::stats::{TieMode, MIN_PERMUTATIONS};
use crate::trace_model::{validate, Host, Trace};

/// Sender and receiver trace file names inside a run directory.
pub const SENDER_FILE: &str = "sender.csv";
pub const RECEIVER_FILE: &str = "receiver.csv";

#[derive(Debug, Parser)]
#[command(name = "delta", version, about = "Differential timing analysis of packet traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct the control-flow graph of runs or single trace files.
    Cfg(CfgCmd),
    /// Correlate every segment's duration with end-to-end latency.
    Criticality(CriticalityCmd),
    /// Test whether segment timing reproduces across runs of one version.
    Predictability(PredictabilityCmd),
    /// Find segments whose timing changed between two versions.
    Diff(DiffCmd),
    /// Rank runs by energy-delay-squared per packet.
    Energy(EnergyCmd),
    /// Normalized per-segment slowdown between a fast and a slow run.
    Slowdown(SlowdownCmd),
    /// Generate a synthetic fixture with ground truth.
    Simgen(SimgenCmd),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignKind {
    MinSymmetry,
    ExplicitOffset,
    PreAligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    PerHost,
    CrossHost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventPair(pub String, pub String);

fn parse_pair(s: &str) -> Result<EventPair, String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() => Ok(EventPair(a.into(), b.into())),
        _ => Err("expected two event names separated by a comma".into()),
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err("must lie strictly between 0 and 1".into())
    }
}

fn parse_permutations(s: &str) -> Result<usize, String> {
    let b: usize = s.parse().map_err(|e| format!("{e}"))?;
    if b >= MIN_PERMUTATIONS {
        Ok(b)
    } else {
        Err(format!("need at least {MIN_PERMUTATIONS} iterations"))
    }
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn parse_min_support(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(format!("{e}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct AlignArgs {
    /// Clock alignment between sender and receiver [default: min-symmetry].
    #[arg(long, value_enum)]
    pub align: Option<AlignKind>,
    /// Receiver clock minus sender clock for `--align explicit-offset`; give
    /// it once for all runs or once per run.
    #[arg(long, allow_hyphen_values = true)]
    pub offset_ns: Vec<f64>,
    /// Sender event and receiver event of the forward delay, `A,B`.
    #[arg(long, value_parser = parse_pair)]
    pub forward_pair: Option<EventPair>,
    /// Receiver event and sender event of the reverse delay, `A,B`.
    #[arg(long, value_parser = parse_pair)]
    pub reverse_pair: Option<EventPair>,
    /// Minimum one-way delay assumed without reverse traffic.
    #[arg(long, default_value_t = 0.0)]
    pub min_delay_floor: f64,
    /// Sender event starting end-to-end latency.
    #[arg(long)]
    pub e2e_start: Option<String>,
    /// Receiver event ending end-to-end latency.
    #[arg(long)]
    pub e2e_end: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Packets that must witness an ordering before it counts.
    #[arg(long, default_value_t = crate::cfg::DEFAULT_MIN_SUPPORT, value_parser = parse_min_support)]
    pub min_support: usize,
    /// Relate events of one host only, or across hosts (needs `--align`).
    #[arg(long, value_enum, default_value = "per-host")]
    pub scope: ScopeArg,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    /// Significance level of the Anderson-Darling tests.
    #[arg(long, default_value = "0.01", value_parser = parse_alpha)]
    pub alpha: f64,
    /// Use permutation p-values with this many iterations.
    #[arg(long, value_parser = parse_permutations)]
    pub permutations: Option<usize>,
    #[arg(long, env = "DELTA_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// json, table or csv.
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CfgCmd {
    /// Run directories, or single-host trace CSV files.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    /// Also write the graph in DOT format.
    #[arg(long)]
    pub dot: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CriticalityCmd {
    pub run: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PredictabilityCmd {
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DiffCmd {
    #[arg(long, required = true, num_args = 1..)]
    pub old: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub new: Vec<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    #[command(flatten)]
    pub test: TestArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EnergyCmd {
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[command(flatten)]
    pub align: AlignArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SlowdownCmd {
    #[arg(long)]
    pub fast: PathBuf,
    #[arg(long)]
    pub slow: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub align: AlignArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimgenCmd {
    /// Pipeline spec as JSON; the built-in pipeline when omitted.
    pub spec: Option<PathBuf>,
    /// Packets to generate.
    #[arg(short = 'n', long = "packets", default_value_t = 1000)]
    pub packets: usize,
    /// Overrides the seed in the pipeline spec.
    #[arg(long, env = "DELTA_SEED")]
    pub seed: Option<u64>,
    /// Rescale stage delays to this frequency before generating.
    #[arg(long)]
    pub freq_mhz: Option<u32>,
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long)]
    pub version_label: Option<String>,
    /// A modification as JSON, applied in order; repeatable.
    #[arg(long)]
    pub inject: Vec<String>,
    /// Print the resulting spec as JSON instead of generating.
    #[arg(long)]
    pub print_spec: bool,
    /// Directory receiving the fixture files.
    #[arg(long, required_unless_present = "print_spec")]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags; exit code 2.
    Usage(String),
    /// Input or analysis failure; exit code 1.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Reports go to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Cfg(c) => cmd_cfg(c, stdout),
        Command::Criticality(c) => cmd_criticality(c, stdout),
        Command::Predictability(c) => cmd_predictability(c, stdout),
        Command::Diff(c) => cmd_diff(c, stdout),
        Command::Energy(c) => cmd_energy(c, stdout),
        Command::Slowdown(c) => cmd_slowdown(c, stdout),
        Command::Simgen(c) => cmd_simgen(c, stdout),
    }
}

fn emit(text: &str, output: &OutputArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &output.out {
        Some(path) => fs::write(path, text).map_err(|e| data(format!("Io: {}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(data),
    }
}

fn report<R: Report>(r: &R, output: &OutputArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    emit(&r.render(output.format), output, stdout)
}

/// Reads one host's trace, rejects it when it breaks an invariant and
/// interpolates its cycle-stamps.
pub fn load_trace(path: &Path, host: Option<Host>) -> Result<Trace, CliError> {
    let overrides = MetaOverrides {
        host,
        ..MetaOverrides::default()
    };
    let trace = parse_trace(path, &overrides).map_err(data)?;
    let violations = validate(&trace);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Data(format!("InvalidTrace: {}: {}", path.display(), list.join(", "))));
    }
    interpolate(&trace).map_err(data)
}

impl AlignArgs {
    /// Alignment options for each of `n_runs` runs.
    fn options(&self, n_runs: usize) -> Result<Vec<AlignOptions>, CliError> {
        let endpoints = E2eEndpoints {
            start: self.e2e_start.clone(),
            end: self.e2e_end.clone(),
        };
        let kind = self.align.unwrap_or(AlignKind::MinSymmetry);
        if kind != AlignKind::ExplicitOffset && !self.offset_ns.is_empty() {
            return Err(usage("--offset-ns needs --align explicit-offset"));
        }
        if kind != AlignKind::MinSymmetry && (self.forward_pair.is_some() || self.reverse_pair.is_some()) {
            return Err(usage("--forward-pair and --reverse-pair need --align min-symmetry"));
        }
        if !self.min_delay_floor.is_finite() {
            return Err(usage("--min-delay-floor must be finite"));
        }
        let strategies: Vec<AlignStrategy> = match kind {
            AlignKind::PreAligned => vec![AlignStrategy::PreAligned; n_runs],
            AlignKind::MinSymmetry => {
                let pair = |p: &Option<EventPair>| p.as_ref().map(|EventPair(a, b)| (a.clone(), b.clone()));
                let s = AlignStrategy::MinSymmetry {
                    forward: pair(&self.forward_pair),
                    reverse: pair(&self.reverse_pair),
                    floor_ns: Some(self.min_delay_floor),
                };
                vec![s; n_runs]
            }
            AlignKind::ExplicitOffset => {
                let offsets = match self.offset_ns.len() {
                    0 => return Err(usage("--align explicit-offset needs --offset-ns")),
                    1 => vec![self.offset_ns[0]; n_runs],
                    n if n == n_runs => self.offset_ns.clone(),
                    n => {
                        return Err(usage(format!(
                            "--offset-ns given {n} times; give it once or once per run ({n_runs})"
                        )))
                    }
                };
                if offsets.iter().any(|o| !o.is_finite()) {
                    return Err(usage("--offset-ns must be finite"));
                }
                offsets.into_iter().map(AlignStrategy::ExplicitOffset).collect()
            }
        };
        Ok(strategies
            .into_iter()
            .map(|strategy| AlignOptions {
                strategy,
                endpoints: endpoints.clone(),
            })
            .collect())
    }
}

impl GraphArgs {
    fn options(&self, align: &AlignArgs) -> Result<CfgOptions, CliError> {
        let scope = match self.scope {
            ScopeArg::PerHost => Scope::PerHost,
            ScopeArg::CrossHost => {
                if align.align.is_none() {
                    return Err(usage("--scope cross-host needs an explicit --align"));
                }
                Scope::CrossHost
            }
        };
        Ok(CfgOptions {
            min_support: self.min_support,
            scope,
        })
    }
}

impl TestArgs {
    fn options(&self, cfg: CfgOptions) -> AnalysisOptions {
        AnalysisOptions {
            alpha: self.alpha,
            tie_mode: TieMode::Midrank,
            cfg,
            method: match self.permutations {
                Some(iterations) => TestMethod::Permutation {
                    iterations,
                    seed: self.seed,
                },
                None => TestMethod::Asymptotic,
            },
        }
    }
}

/// Loads a run directory holding `sender.csv` and `receiver.csv`.
pub fn load_run(dir: &Path, options: &AlignOptions) -> Result<AlignedRun, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Data(format!("NotARunDirectory: {}", dir.display())));
    }
    let sender = load_trace(&dir.join(SENDER_FILE), Some(Host::Sender))?;
    let receiver = load_trace(&dir.join(RECEIVER_FILE), Some(Host::Receiver))?;
    align(&sender, &receiver, options).map_err(|e| data(format!("{}: {e}", dir.display())))
}

fn load_runs(dirs: &[PathBuf], align: &AlignArgs) -> Result<Vec<AlignedRun>, CliError> {
    let options = align.options(dirs.len())?;
    dirs.par_iter()
        .zip(options.par_iter())
        .map(|(d, o)| load_run(d, o))
        .collect()
}

pub fn cmd_cfg(c: &CfgCmd, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = c.graph.options(&c.align)?;
    let dirs = c.paths.iter().filter(|p| p.is_dir()).count();
    let graph = if dirs == c.paths.len() {
        let runs = load_runs(&c.paths, &c.align)?;
        let refs: Vec<&AlignedRun> = runs.iter().collect();
        graph_for_runs(&refs, cfg).map_err(data)?
    } else if dirs == 0 && c.paths.len() == 1 {
        if cfg.scope == Scope::CrossHost {
            return Err(usage("--scope cross-host needs run directories, not a single trace file"));
        }
        let trace = load_trace(&c.paths[0], None)?;
        graph_for_trace(&trace, cfg.min_support).map_err(data)?
    } else {
        return Err(usage("PATHS must be run directories or exactly one trace file"));
    };
    if let Some(path) = &c.dot {
        fs::write(path, render_dot(&graph)).map_err(|e| data(format!("Io: {}: {e}", path.display())))?;
    }
    report(&GraphDump::from(&graph), &c.output, stdout)
}

pub fn cmd_criticality(c: &CriticalityCmd, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = c.graph.options(&c.align)?;
    let run = load_runs(std::slice::from_ref(&c.run), &c.align)?.remove(0);
    let graph = run_graph(&run, cfg).map_err(data)?;
    report(&latency_criticality(&run, &graph).map_err(data)?, &c.output, stdout)
}

pub fn cmd_predictability(c: &PredictabilityCmd, stdout: &mut dyn Write) -> Result<(), CliError> {
    let options = c.test.options(c.graph.options(&c.align)?);
    let runs = load_runs(&c.runs, &c.align)?;
    report(&timing_predictability(&runs, &options).map_err(data)?, &c.output, stdout)
}

pub fn cmd_diff(c: &DiffCmd, stdout: &mut dyn Write) -> Result<(), CliError> {
    let options = c.test.options(c.graph.options(&c.align)?);
    let all: Vec<PathBuf> = c.old.iter().chain(&c.new).cloned().collect();
    let mut runs = load_runs(&all, &c.align)?;
    let new = runs.split_off(c.old.len());
    report(&modification_diff(&runs, &new, &options).map_err(data)?, &c.output, stdout)
}

pub fn cmd_energy(c: &EnergyCmd, stdout: &mut dyn Write) -> Result<(), CliError> {
    let runs = load_runs(&c.runs, &c.align)?;
    report(&energy_et2(&runs).map_err(data)?, &c.output, stdout)
}

pub fn cmd_slowdown(c: &SlowdownCmd, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = c.graph.options(&c.align)?;
    let mut runs = load_runs(&[c.fast.clone(), c.slow.clone()], &c.align)?;
    let slow = runs.pop().expect("two runs");
    let fast = runs.pop().expect("two runs");
    let graph = graph_for_runs(&[&fast, &slow], cfg).map_err(data)?;
    report(&slowdown(&fast, &slow, &graph).map_err(data)?, &c.output, stdout)
}

pub fn cmd_simgen(c: &SimgenCmd, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut spec: PipelineSpec = match &c.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| data(format!("Io: {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| data(format!("InvalidSpec: {}: {e}", path.display())))?
        }
        None => default_pipeline(),
    };
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    if let Some(id) = &c.run_id {
        spec.run_id = id.clone();
    }
    if let Some(v) = &c.version_label {
        spec.version_label = v.clone();
    }
    if let Some(f) = c.freq_mhz {
        spec = scale_frequency(&spec, f).map_err(data)?;
    }
    for m in &c.inject {
        let m: Modification = serde_json::from_str(m).map_err(|e| usage(format!("--inject: {e}")))?;
        spec = inject(&spec, m).map_err(data)?;
    }
    spec.validate().map_err(data)?;
    if c.print_spec {
        let mut s = serde_json::to_string_pretty(&spec).map_err(data)?;
        s.push('\n');
        return stdout.write_all(s.as_bytes()).map_err(data);
    }
    if c.packets == 0 {
        return Err(usage("-n/--packets must be at least 1"));
    }
    let out = c.out.as_ref().expect("clap requires --out");
    let generated = generate(&spec, c.packets).map_err(data)?;
    let paths = write_fixture(out, &generated).map_err(|e| data(format!("Io: {}: {e}", out.display())))?;
    for p in [&paths.sender, &paths.receiver, &paths.ground_truth] {
        writeln!(stdout, "{}", p.display()).map_err(data)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["delta"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn bad_alpha_names_the_flag() {
        let (code, _, err) = call(&["predictability", "a", "b", "--alpha", "1.5"]);
        assert_eq!(code, 2);
        assert!(err.contains("--alpha"), "{err}");
    }

    #[test]
    fn cross_host_needs_align() {
        let (code, _, err) = call(&["criticality", ".", "--scope", "cross-host"]);
        assert_eq!(code, 2);
        assert!(err.contains("--align"), "{err}");
    }

    #[test]
    fn offset_needs_explicit_alignment() {
        let (code, _, err) = call(&["energy", ".", "--offset-ns", "5"]);
        assert_eq!(code, 2);
        assert!(err.contains("--offset-ns"), "{err}");
        let (code, _, err) = call(&["energy", ".", "--align", "explicit-offset"]);
        assert_eq!(code, 2);
        assert!(err.contains("--offset-ns"), "{err}");
    }

    #[test]
    fn too_few_permutations_is_usage() {
        let (code, _, err) = call(&["predictability", "a", "b", "--permutations", "10"]);
        assert_eq!(code, 2);
        assert!(err.contains("--permutations"), "{err}");
    }

    #[test]
    fn missing_run_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope");
        let (code, _, err) = call(&["criticality", missing.to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.starts_with("error: NotARunDirectory"), "{err}");
    }

    #[test]
    fn print_spec_round_trips() {
        let (code, out, _) = call(&["simgen", "--print-spec", "--seed", "9"]);
        assert_eq!(code, 0);
        let spec: PipelineSpec = serde_json::from_str(&out).unwrap();
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.stages, default_pipeline().stages);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("predictability"));
    }
}
