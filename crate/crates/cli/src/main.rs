use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use log::info;

use rkme::demo::{run_demo, DemoConfig, PROVIDER_NAMES};
use rkme::deploy::{self, Deployment, InstanceOptions};
use rkme::herding::{herd_sample, HerdOptions};
use rkme::market::{list_dir, EntryMeta};
use rkme::models::{self, DEFAULT_RIDGE};
use rkme::rkme::{mmd_sq, mmd_sq_with, reduce, Embedding, ReduceOptions};
use rkme::{Dataset, Error, KernelConfig, KernelFamily, ModelRef, Pool, Rkme};

/// Reduced kernel mean embeddings: build specifications, manage a model
/// pool and reuse its models on new data.
#[derive(Debug, Parser)]
#[command(name = "rkme", version)]
struct Cli {
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a reduced embedding of a dataset.
    #[command(subcommand)]
    Spec(SpecCmd),
    /// Manage a pool directory.
    #[command(subcommand)]
    Pool(PoolCmd),
    /// Predict on unlabeled test data with models from a pool.
    #[command(subcommand)]
    Deploy(DeployCmd),
    /// Draw points from a specification by kernel herding.
    Herd {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the estimated mixture weights of a test set over the pool as JSON.
    Weights {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Squared MMD between two specifications or datasets.
    Mmd {
        /// Specification (.json) or dataset (.csv).
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Kernel family, needed when neither side is a specification.
        #[arg(long)]
        kernel: Option<KernelFamily>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Reproduce the toy experiment.
    #[command(subcommand)]
    Demo(DemoCmd),
}

#[derive(Debug, Subcommand)]
enum SpecCmd {
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value = "gaussian")]
        kernel: KernelFamily,
        /// Number of reduced points M.
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = ReduceOptions::default().iters)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum PoolCmd {
    /// Upload a dataset's specification and a model; creates the pool if needed.
    Add(PoolAdd),
    List {
        #[arg(long)]
        pool: PathBuf,
    },
    /// Print one entry as JSON.
    Show {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Args)]
struct PoolAdd {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    id: String,
    /// Training data; only its specification is stored.
    #[arg(long)]
    data: PathBuf,
    /// Model reference JSON. Without it a compact kernel ridge classifier is
    /// trained on the labelled data.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    size: usize,
    /// Pool kernel; must match an existing pool. Defaults to gaussian.
    #[arg(long)]
    kernel: Option<KernelFamily>,
    /// Pool kernel gamma; must match an existing pool. Defaults to 1.
    #[arg(long)]
    gamma: Option<f64>,
    /// Gamma of the trained classifier (defaults to the pool gamma).
    #[arg(long)]
    model_gamma: Option<f64>,
    #[arg(long, default_value_t = 40)]
    centers: usize,
    #[arg(long, default_value = "")]
    provider: String,
    #[arg(long, default_value = "")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum DeployCmd {
    /// The whole test set comes from one provider's distribution.
    Task(DeployArgs),
    /// Each test point comes from some provider's distribution.
    Instance(DeployArgs),
}

#[derive(Debug, Args)]
struct DeployArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    mimic_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Predictions CSV `index,prediction,chosen_model`.
    #[arg(long)]
    out: PathBuf,
    /// Weights and per-entry MMD as JSON.
    #[arg(long)]
    diag: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum DemoCmd {
    Toy {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// `%g`-style formatting with six significant digits.
fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-4..6).contains(&exp) {
        trim(format!("{:.*}", (5 - exp).max(0) as usize, v))
    } else {
        let s = format!("{v:.5e}");
        let (mant, e) = s.split_once('e').expect("exponent");
        format!("{}e{e}", trim(mant.to_string()))
    }
}

/// Writes to stdout, surfacing a closed pipe as an error instead of a panic.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(&format!("{}\n", format_args!($($arg)*))) };
}

fn join6(v: &[f64]) -> String {
    v.iter().map(|x| sig6(*x)).collect::<Vec<_>>().join(" ")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

fn read_file(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?)
}

fn spec_build(
    data: &Path,
    kernel: KernelConfig,
    size: usize,
    iters: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let data = Dataset::read_csv(data)?;
    let spec = reduce(&kernel, &data.x, size, &ReduceOptions { iters, seed, ..Default::default() })?;
    write_file(out, &spec.to_json()?)?;
    info!("wrote {} reduced points to {}", spec.len(), out.display());
    outln!("objective {}", sig6(spec.meta.objective))?;
    Ok(())
}

fn pool_add(a: &PoolAdd) -> Result<()> {
    let data = Dataset::read_csv(&a.data)?;
    let supplied = a.model.as_deref().map(|p| read_file(p).and_then(|s| Ok(ModelRef::from_json(&s)?))).transpose()?;
    let requested = match (a.kernel, a.gamma) {
        (None, None) => None,
        (k, g) => Some(KernelConfig::new(k.unwrap_or_default(), g.unwrap_or(1.0))?),
    };
    let mut pool = if a.pool.join("manifest.json").exists() {
        let pool = Pool::load(&a.pool)?;
        if let Some(k) = requested.filter(|k| k != pool.kernel()) {
            return Err(Error::Config(format!("pool kernel is {:?}, requested {k:?}", pool.kernel())).into());
        }
        pool
    } else {
        Pool::create(&a.pool, requested.unwrap_or(KernelConfig::new(KernelFamily::Gaussian, 1.0)?))?
    };
    let model = match supplied {
        Some(model) => model,
        None => {
            let kernel = KernelConfig::new(pool.kernel().family, a.model_gamma.unwrap_or(pool.kernel().gamma))?;
            models::train_krc_compact(&kernel, &data, DEFAULT_RIDGE, a.centers, a.seed)?
        }
    };
    let opts = ReduceOptions { seed: a.seed, ..Default::default() };
    let entry = pool.upload(&a.id, &data, model, a.size, EntryMeta::new(&a.provider, &a.task), &opts)?;
    outln!("{}\tobjective {}", entry.id, sig6(entry.spec.meta.objective))?;
    Ok(())
}

fn pool_list(root: &Path) -> Result<()> {
    for e in list_dir(root)? {
        outln!("{}\t{}\t{}\t{}", e.id, e.meta.provider, e.meta.task, e.meta.created.to_rfc3339())?;
    }
    Ok(())
}

fn pool_show(root: &Path, id: &str) -> Result<()> {
    let pool = Pool::load(root)?;
    let e = pool.get(id)?;
    let v = serde_json::json!({
        "id": e.id,
        "meta": e.meta,
        "spec": e.spec,
        "model": { "kind": e.model.kind, "dim": e.model.dim, "output": e.model.output },
    });
    outln!("{}", serde_json::to_string_pretty(&v)?)?;
    Ok(())
}

fn run_deploy(instance: bool, a: &DeployArgs) -> Result<()> {
    let pool = Pool::load(&a.pool)?;
    let test = Dataset::read_csv(&a.test)?;
    let d: Deployment = if instance {
        let opts = InstanceOptions { mimic_size: a.mimic_size, seed: a.seed, ..Default::default() };
        deploy::deploy_instance_recurrent(&pool, &test, &opts)?
    } else {
        deploy::deploy_task_recurrent(&pool, &test)?
    };
    let mut csv = String::from("index,prediction,chosen_model\n");
    for (i, (p, c)) in d.predictions.iter().zip(&d.chosen).enumerate() {
        writeln!(csv, "{i},{},{}", sig6(*p), pool.entries()[*c].id)?;
    }
    write_file(&a.out, &csv)?;
    if let Some(diag) = &a.diag {
        write_file(diag, &(serde_json::to_string_pretty(&d.diagnostics())? + "\n"))?;
    }
    info!("w = [{}], per-entry mmd = [{}]", join6(&d.weights.w), join6(&d.per_entry_mmd));
    emit(&csv)?;
    Ok(())
}

fn herd(spec: &Path, n: usize, out: &Path, seed: u64) -> Result<()> {
    let spec = Rkme::from_json(&read_file(spec)?)?;
    let x = herd_sample(&spec, n, &HerdOptions { seed, ..Default::default() })?;
    Dataset::unlabeled(x)?.write_csv(out)?;
    info!("wrote {n} herded points to {}", out.display());
    Ok(())
}

fn weights(pool: &Path, test: &Path) -> Result<()> {
    let pool = Pool::load(pool)?;
    let test = Dataset::read_csv(test)?;
    let w = deploy::estimate_weights(&pool, &test)?;
    if w.ill_conditioned {
        log::warn!("specifications are nearly collinear (condition number {:e})", w.condition);
    }
    outln!("{}", serde_json::to_string(&w.w)?)?;
    Ok(())
}

enum Side {
    Spec(Rkme),
    Data(Dataset),
}

impl Side {
    fn read(path: &Path) -> Result<Side> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Ok(Side::Spec(Rkme::from_json(&read_file(path)?)?))
        } else {
            Ok(Side::Data(Dataset::read_csv(path)?))
        }
    }

    fn embedding(&self) -> Embedding<'_> {
        match self {
            Side::Spec(s) => s.into(),
            Side::Data(d) => d.into(),
        }
    }
}

fn mmd(a: &Path, b: &Path, kernel: Option<KernelFamily>, gamma: Option<f64>) -> Result<()> {
    let (a, b) = (Side::read(a)?, Side::read(b)?);
    let v = match (kernel, gamma) {
        (None, None) => mmd_sq(a.embedding(), b.embedding())?,
        (k, g) => {
            let g = g.ok_or_else(|| Error::Config("--kernel needs --gamma".into()))?;
            mmd_sq_with(&KernelConfig::new(k.unwrap_or_default(), g)?, a.embedding(), b.embedding())?
        }
    };
    outln!("{}", sig6(v))?;
    Ok(())
}

fn demo(seed: u64) -> Result<()> {
    let cfg = DemoConfig::with_seed(seed);
    let r = run_demo(&cfg, None)?;
    let name = |i: usize| PROVIDER_NAMES.get(i).copied().unwrap_or("?");
    outln!("local_accuracy {}", join6(&r.local_accuracy))?;
    outln!("spec_mmd {}", join6(&r.spec_mmd))?;
    outln!("task_mmd {}", join6(&r.task_mmd))?;
    outln!("task_selected {} expected {}", name(r.task_selected), name(r.task_expected))?;
    outln!("task_accuracy {}", sig6(r.task_accuracy))?;
    outln!("mixture {}", join6(&cfg.mixture))?;
    outln!("w_hat {}", join6(&r.w_hat))?;
    outln!("instance_accuracy {}", sig6(r.instance_accuracy))?;
    outln!("routing_accuracy {}", sig6(r.routing_accuracy))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Spec(SpecCmd::Build { data, gamma, kernel, size, iters, seed, out }) => {
            spec_build(&data, KernelConfig::new(kernel, gamma)?, size, iters, seed, &out)
        }
        Command::Pool(PoolCmd::Add(a)) => pool_add(&a),
        Command::Pool(PoolCmd::List { pool }) => pool_list(&pool),
        Command::Pool(PoolCmd::Show { pool, id }) => pool_show(&pool, &id),
        Command::Deploy(DeployCmd::Task(a)) => run_deploy(false, &a),
        Command::Deploy(DeployCmd::Instance(a)) => run_deploy(true, &a),
        Command::Herd { spec, n, out, seed } => herd(&spec, n, &out, seed),
        Command::Weights { pool, test } => weights(&pool, &test),
        Command::Mmd { a, b, kernel, gamma } => mmd(&a, &b, kernel, gamma),
        Command::Demo(DemoCmd::Toy { seed }) => demo(seed),
    }
}

/// Validates `RKME_NUM_THREADS` in every build so a bad value fails the same
/// way; only the rayon build uses it.
fn configure_threads() -> Result<()> {
    use anyhow::Context;
    if let Ok(v) = std::env::var("RKME_NUM_THREADS") {
        let n: usize = v.parse().with_context(|| format!("RKME_NUM_THREADS={v:?} is not a thread count"))?;
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
        #[cfg(not(feature = "parallel"))]
        log::debug!("sequential build ignores RKME_NUM_THREADS={n}");
    }
    Ok(())
}

fn broken_pipe(err: &anyhow::Error) -> bool {
    err.chain()
        .filter_map(|e| e.downcast_ref::<std::io::Error>())
        .any(|e| e.kind() == std::io::ErrorKind::BrokenPipe)
}

/// The error and its causes on one line, skipping causes whose text the
/// message already includes.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_data_error() => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = configure_threads() {
        eprintln!("error: {}", describe(&e));
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::sig6;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.123456789), "0.123457");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(-2.5e-7), "-2.5e-7");
        assert_eq!(sig6(0.000012345678), "1.23457e-5");
        assert_eq!(sig6(99.99999), "100");
    }
}
