use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use blelearn::fingerprint::connection_references;
use blelearn::sim::manifest;
use blelearn::{
    derive_fingerprint, from_dot, run_learning, to_dot, FingerprintError, MealyError, MealyMachine,
    NoiseConfig, OracleConfig, Procedure, RobustConfig, RunConfig, RunOutcome, SocId, Verdict,
};

const USAGE: u8 = 2;
const FAILURE: u8 = 1;

#[derive(Parser)]
#[command(
    name = "blelearn",
    version,
    about = "Learn, compare and fingerprint models of simulated BLE peripherals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn one target and write its model and statistics.
    Learn(LearnArgs),
    /// Learn every catalogued target.
    LearnAll(LearnAllArgs),
    /// Derive a fingerprinting sequence for a set of models.
    Fingerprint(FingerprintArgs),
    /// Check two models for equivalence.
    Compare(CompareArgs),
    /// Print the target catalogue as JSON.
    Catalog(CatalogArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Clone)]
struct Tuning {
    /// Probability that a response packet is lost.
    #[arg(long, env = "BLELEARN_LOSS", default_value_t = 0.0)]
    loss: f64,
    /// Probability that a response packet arrives late.
    #[arg(long, env = "BLELEARN_DELAY", default_value_t = 0.0)]
    delay: f64,
    #[arg(long, env = "BLELEARN_SEED", default_value_t = 0)]
    seed: u64,
    /// Conformance tests per hypothesis state.
    #[arg(long, env = "BLELEARN_N_TEST")]
    n_test: Option<usize>,
    /// Random inputs per conformance test.
    #[arg(long, env = "BLELEARN_N_LEN")]
    n_len: Option<usize>,
    /// Consecutive failed resets tolerated.
    #[arg(long, env = "BLELEARN_N_ERROR")]
    n_error: Option<u32>,
    /// Samples drawn when outputs conflict with the cache.
    #[arg(long, env = "BLELEARN_N_CACHE")]
    n_cache: Option<u32>,
    /// Repetitions tolerated for a finalized conflicting query.
    #[arg(long, env = "BLELEARN_N_NONDET")]
    n_nondet: Option<u32>,
    /// Simulated quirks: all catalogued ones, or none. Default: all but pairing fatigue.
    #[arg(long, env = "BLELEARN_QUIRKS", value_enum)]
    quirks: Option<Switch>,
}

impl Tuning {
    fn config(&self, target: SocId, procedure: Procedure) -> Result<RunConfig, String> {
        let mut cfg = RunConfig::new(target, procedure);
        cfg.noise = NoiseConfig::new(self.loss, self.delay, self.seed)?;
        let d = cfg.robust;
        cfg.robust = RobustConfig::new(
            self.n_error.unwrap_or(d.n_error),
            self.n_cache.unwrap_or(d.n_cache),
            self.n_nondet.unwrap_or(d.n_nondet),
        )?
        .with_confirm(d.n_confirm);
        let o = OracleConfig::default();
        cfg.oracle = OracleConfig::new(
            self.n_test.unwrap_or(o.n_test),
            self.n_len.unwrap_or(o.n_len),
            self.seed,
        )?;
        cfg.quirks = self.quirks.map(|q| matches!(q, Switch::On));
        Ok(cfg)
    }
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long, env = "BLELEARN_TARGET")]
    target: SocId,
    #[arg(long, env = "BLELEARN_PROCEDURE")]
    procedure: Procedure,
    #[command(flatten)]
    tuning: Tuning,
    /// Model DOT file; standard output when omitted.
    #[arg(long, env = "BLELEARN_OUT")]
    out: Option<PathBuf>,
    /// Statistics JSON file.
    #[arg(long, env = "BLELEARN_STATS")]
    stats: Option<PathBuf>,
    /// File receiving every generated conformance test, one per line.
    #[arg(long, env = "BLELEARN_DUMP_SUITE")]
    dump_suite: Option<PathBuf>,
}

#[derive(Args)]
struct LearnAllArgs {
    /// Directory receiving `<soc>_<procedure>.dot` and `.json` files.
    #[arg(long, env = "BLELEARN_OUT_DIR")]
    out_dir: PathBuf,
    #[arg(long, env = "BLELEARN_JOBS", default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct FingerprintArgs {
    /// Directory of DOT models, identified by file stem. The six built-in
    /// connection references when omitted.
    models: Option<PathBuf>,
    /// Report JSON file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input that resets every model between segments.
    #[arg(long, default_value = "scan_req")]
    reset: String,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args)]
struct CatalogArgs {
    /// Also write each SoC's full connection reference as DOT into this directory.
    #[arg(long)]
    references: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::LearnAll(a) => cmd_learn_all(a),
        Command::Fingerprint(a) => cmd_fingerprint(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Catalog(a) => cmd_catalog(a),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(FAILURE)
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> Result<u8> {
    eprintln!("error: {msg}");
    Ok(USAGE)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn model_name(cfg: &RunConfig) -> String {
    format!("{}_{}", cfg.target, cfg.procedure)
}

fn cmd_learn(a: LearnArgs) -> Result<u8> {
    let cfg = match a.tuning.config(a.target, a.procedure) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let out = match run_learning(&cfg) {
        Ok(o) => o,
        Err(e) => return usage(e),
    };
    let stats = serde_json::to_string_pretty(&out.stats)? + "\n";
    if let Some(p) = &a.stats {
        fs::write(p, &stats).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.dump_suite {
        fs::write(p, &out.suites).with_context(|| format!("writing {}", p.display()))?;
    }
    match &out.result {
        Ok(h) => {
            write_or_print(a.out.as_deref(), &to_dot(&h.machine, &model_name(&cfg)))?;
            eprintln!(
                "learned {} states in {} rounds ({} output queries)",
                out.stats.states, out.stats.learning_rounds, out.stats.output_queries
            );
            Ok(0)
        }
        Err(e) => {
            eprintln!("learning aborted: {e}");
            eprint!("{stats}");
            Ok(FAILURE)
        }
    }
}

fn cmd_learn_all(a: LearnAllArgs) -> Result<u8> {
    if a.jobs == 0 {
        return usage("--jobs must be at least 1");
    }
    let mut configs = Vec::new();
    for e in manifest() {
        match a.tuning.config(e.soc_id, e.procedure) {
            Ok(c) => configs.push(c),
            Err(msg) => return usage(msg),
        }
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunOutcome>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..a.jobs.min(configs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(k) else { break };
                let out = run_learning(cfg).expect("catalogued targets");
                results.lock().expect("no worker panics")[k] = Some(out);
            });
        }
    });
    let mut failed = 0;
    for (cfg, out) in configs
        .iter()
        .zip(results.into_inner().expect("workers joined"))
    {
        let out = out.expect("every job ran");
        let name = model_name(cfg);
        fs::write(
            a.out_dir.join(format!("{name}.json")),
            serde_json::to_string_pretty(&out.stats)? + "\n",
        )?;
        match &out.result {
            Ok(h) => {
                fs::write(
                    a.out_dir.join(format!("{name}.dot")),
                    to_dot(&h.machine, &name),
                )?;
                println!("{name}: {} states", out.stats.states);
            }
            Err(e) => {
                failed += 1;
                println!("{name}: aborted: {e}");
            }
        }
    }
    Ok(if failed == 0 { 0 } else { FAILURE })
}

fn read_model(path: &Path) -> std::result::Result<MealyMachine, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    from_dot(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_fingerprint(a: FingerprintArgs) -> Result<u8> {
    let models = match &a.models {
        None => connection_references(),
        Some(dir) => {
            let entries = match fs::read_dir(dir) {
                Ok(e) => e,
                Err(e) => return usage(format!("{}: {e}", dir.display())),
            };
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "dot"))
                .collect();
            paths.sort();
            let mut models = Vec::new();
            for p in paths {
                let id = p
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned();
                match read_model(&p) {
                    Ok(m) => models.push((id, m)),
                    Err(e) => return usage(e),
                }
            }
            models
        }
    };
    let report = match derive_fingerprint(&models, &a.reset) {
        Ok(r) => r,
        Err(FingerprintError::Empty) => return usage("no DOT models found"),
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(FAILURE);
        }
    };
    write_or_print(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    if let Some((x, y)) = &report.indistinguishable {
        eprintln!("models `{x}` and `{y}` are indistinguishable");
        return Ok(FAILURE);
    }
    Ok(0)
}

fn cmd_compare(a: CompareArgs) -> Result<u8> {
    let (ma, mb) = match (read_model(&a.a), read_model(&a.b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return usage(e),
    };
    let mut sa = ma.inputs().to_vec();
    let mut sb = mb.inputs().to_vec();
    sa.sort();
    sb.sort();
    if sa != sb {
        return usage("input alphabets differ");
    }
    match ma.equivalent(&mb) {
        Ok(Verdict::Equivalent) => {
            println!("equivalent");
            Ok(0)
        }
        Ok(Verdict::Counterexample(w)) => {
            println!("separating sequence: {}", w.join(" "));
            println!("{}: {}", a.a.display(), ma.run(&w)?.join(" "));
            println!("{}: {}", a.b.display(), mb.run(&w)?.join(" "));
            Ok(FAILURE)
        }
        Err(MealyError::AlphabetMismatch) => usage("input alphabets differ"),
        Err(e) => Err(e.into()),
    }
}

fn cmd_catalog(a: CatalogArgs) -> Result<u8> {
    if let Some(dir) = &a.references {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (id, m) in connection_references() {
            fs::write(dir.join(format!("{id}.dot")), to_dot(&m, &id))?;
        }
    }
    println!("{}", serde_json::to_string_pretty(&manifest())?);
    Ok(0)
}
