//! `speckle-rf`: reproducible elliptic-kernel and random-feature experiments
//! on MNIST.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use speckle_rf::bench::{
    self, DatasetRecord, ExactOptions, FidelityPath, GammaChoice, LinearOptions, OutputFormat,
    RunManifest, Split, SweepConfig, SweepResult,
};
use speckle_rf::features;
use speckle_rf::optical::{CorrelationMode, DetectorSpec};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "speckle-rf", version, about = "Elliptic-kernel and random-feature ridge experiments on MNIST")]
struct Cli {
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kernel ridge with the exact elliptic kernel.
    KernelExact(KernelExactArgs),
    /// Random-feature ridge over a grid of feature counts and seeds.
    RfSweep(RfSweepArgs),
    /// Ridge regression on raw normalized pixels.
    LinearBaseline(LinearArgs),
    /// Deviation of the random-feature Gram matrix from the elliptic kernel.
    Convergence(ConvergenceArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct DataArgs {
    /// Directory holding the four MNIST IDX files.
    #[arg(long, env = "SPECKLE_RF_DATA")]
    data_dir: Option<PathBuf>,

    /// Training images, a stratified sample of the training split.
    #[arg(long, default_value_t = 60_000)]
    n_train: usize,

    /// Test images, a stratified sample of the test split.
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,

    /// Seed for subsampling and for the validation split.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// JSON file whose keys (flag names) replace defaults; explicit flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct RidgeArgs {
    /// Fixed regularization; when absent gamma is picked on a validation split.
    #[arg(long)]
    gamma: Option<f64>,

    /// Candidate gammas for the validation search.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1,1,10,100")]
    gamma_grid: Vec<f64>,
}

impl RidgeArgs {
    fn choice(&self) -> GammaChoice {
        match self.gamma {
            Some(g) => GammaChoice::Fixed(g),
            None => GammaChoice::Grid(self.gamma_grid.clone()),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct OutputArgs {
    /// Results file.
    #[arg(long, default_value = "results.csv")]
    output: PathBuf,

    /// Results format: csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct KernelExactArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    ridge: RidgeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,

    /// Refuse runs whose kernel storage exceeds this many GiB.
    #[arg(long, default_value_t = 16.0)]
    memory_budget_gb: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct LinearArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    ridge: RidgeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,

    /// Append a constant feature to the pixels.
    #[arg(long, default_value_t = false)]
    intercept: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct RfSweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    ridge: RidgeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,

    /// Feature counts.
    #[arg(
        long = "N",
        id = "n_list",
        value_delimiter = ',',
        default_value = "64,128,256,512,1024,2048,4096,8192,16384"
    )]
    n_list: Vec<usize>,

    /// Number of projection seeds, starting at --seed.
    #[arg(long, default_value_t = 5)]
    seeds: usize,

    /// Feature source: ideal or device.
    #[arg(long, default_value = "ideal")]
    path: String,

    /// Poisson shot noise on the camera (device path).
    #[arg(long, default_value_t = false)]
    shot_noise: bool,

    /// Mean photons per camera pixel under shot noise.
    #[arg(long, default_value_t = 1e4)]
    photon_budget: f64,

    /// Camera quantization bits, 0 (off) or 8.
    #[arg(long, default_value_t = 0)]
    quantize_bits: u8,

    /// Pixel crosstalk: off or smear.
    #[arg(long, default_value = "off")]
    correlation: String,

    /// Training images used to measure the Gram deviation (0 disables).
    #[arg(long, default_value_t = 200)]
    gram_probe: usize,

    /// Asymptote subtracted before the power-law fit.
    #[arg(long, default_value_t = 0.0)]
    err_inf: f64,

    /// Refuse runs whose working set exceeds this many GiB.
    #[arg(long, default_value_t = 16.0)]
    memory_budget_gb: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ConvergenceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutputArgs,

    /// Feature counts.
    #[arg(long = "N", id = "n_list", value_delimiter = ',', default_value = "128,512,2048,8192")]
    n_list: Vec<usize>,

    /// Independent projection seeds averaged per feature count.
    #[arg(long, default_value_t = 3)]
    trials: usize,
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Applies a JSON config on top of parsed arguments: every key replaces the
/// value unless the flag was given on the command line.
fn merge_config<T>(args: T, matches: &ArgMatches, config: Option<&Path>) -> anyhow::Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let Some(path) = config else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read --config {}: {e}", path.display())))?;
    let overrides: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| usage(format!("--config {} is not a JSON object: {e}", path.display())))?;
    let mut value = serde_json::to_value(&args)?;
    let fields = value.as_object_mut().expect("argument structs serialize to objects");
    for (key, v) in overrides {
        let id = if key == "N" { "n_list".to_string() } else { key.replace('-', "_") };
        if !fields.contains_key(&id) {
            return Err(usage(format!("unknown key {key:?} in --config {}", path.display())));
        }
        let explicit = matches
            .try_get_raw(&id)
            .ok()
            .flatten()
            .is_some()
            && matches.value_source(&id) == Some(ValueSource::CommandLine);
        if !explicit {
            fields.insert(id, v);
        }
    }
    serde_json::from_value(value)
        .map_err(|e| usage(format!("invalid value in --config {}: {e}", path.display())))
}

fn data_dir(data: &DataArgs) -> anyhow::Result<PathBuf> {
    data.data_dir
        .clone()
        .ok_or_else(|| usage("--data-dir is required (or set SPECKLE_RF_DATA)"))
}

fn load_pair(data: &DataArgs) -> anyhow::Result<(bench::Dataset, bench::Dataset)> {
    let dir = data_dir(data)?;
    let train = bench::load_mnist(&dir, Split::Train)?;
    let test = bench::load_mnist(&dir, Split::Test)?;
    if data.n_train == 0 || data.n_train > train.len() {
        return Err(usage(format!(
            "--n-train must lie in 1..={}, got {}",
            train.len(),
            data.n_train
        )));
    }
    if data.n_test == 0 || data.n_test > test.len() {
        return Err(usage(format!(
            "--n-test must lie in 1..={}, got {}",
            test.len(),
            data.n_test
        )));
    }
    let train = bench::subsample(&train, data.n_train, data.seed)?;
    let test = bench::subsample(&test, data.n_test, data.seed)?;
    Ok((train, test))
}

fn output_format(out: &OutputArgs) -> anyhow::Result<OutputFormat> {
    out.format.parse().map_err(|e: speckle_rf::Error| usage(e.to_string()))
}

fn budget_bytes(gb: f64) -> anyhow::Result<u64> {
    if !(gb > 0.0 && gb.is_finite()) {
        return Err(usage(format!("--memory-budget-gb must be positive, got {gb}")));
    }
    Ok((gb * (1u64 << 30) as f64) as u64)
}

fn check_gamma(ridge: &RidgeArgs) -> anyhow::Result<()> {
    ridge
        .choice()
        .validate()
        .map_err(|e| usage(e.to_string()))
}

fn finish(
    command: &str,
    config: &impl Serialize,
    sweep: &SweepResult,
    out: &OutputArgs,
    datasets: Vec<DatasetRecord>,
    extra: serde_json::Value,
) -> anyhow::Result<()> {
    let format = output_format(out)?;
    bench::emit_results(sweep, format, &out.output)?;
    let mut manifest = RunManifest::new(command, serde_json::to_value(config)?);
    if let Some(obj) = manifest.config.as_object_mut() {
        obj.insert("resolved".into(), extra);
    }
    manifest.datasets = datasets;
    manifest.results = Some(out.output.clone());
    manifest.partial = sweep.partial;
    bench::write_manifest(&bench::manifest_path(&out.output), &manifest)?;
    Ok(())
}

fn write_failure_manifest(command: &str, config: &impl Serialize, out: &OutputArgs, err: &anyhow::Error) {
    let Ok(value) = serde_json::to_value(config) else {
        return;
    };
    let mut manifest = RunManifest::new(command, value);
    manifest.failure = Some(format!("{err:#}"));
    let _ = bench::write_manifest(&bench::manifest_path(&out.output), &manifest);
}

fn cmd_kernel_exact(args: &KernelExactArgs) -> anyhow::Result<()> {
    check_gamma(&args.ridge)?;
    output_format(&args.out)?;
    let budget = budget_bytes(args.memory_budget_gb)?;
    let (train, test) = load_pair(&args.data)?;
    let opts = ExactOptions {
        gamma: args.ridge.choice(),
        memory_budget: budget,
        split_seed: args.data.seed,
    };
    let outcome = bench::run_exact_kernel(&train, &test, &opts)?;
    println!(
        "exact kernel: n_train={} n_test={} gamma={} error={:.4}% ({:.1} s)",
        outcome.n_train,
        outcome.n_test,
        outcome.selection.gamma,
        100.0 * outcome.error,
        outcome.wall_ms / 1e3
    );
    let sweep = SweepResult::single("kernel-exact", &outcome, args.data.seed, &train, &test, &opts.gamma);
    finish(
        "kernel-exact",
        args,
        &sweep,
        &args.out,
        vec![DatasetRecord::of("train", &train), DatasetRecord::of("test", &test)],
        serde_json::to_value(&outcome)?,
    )
}

fn cmd_linear(args: &LinearArgs) -> anyhow::Result<()> {
    check_gamma(&args.ridge)?;
    output_format(&args.out)?;
    let (train, test) = load_pair(&args.data)?;
    let opts = LinearOptions {
        gamma: args.ridge.choice(),
        split_seed: args.data.seed,
        intercept: args.intercept,
    };
    let outcome = bench::run_linear_baseline(&train, &test, &opts)?;
    println!(
        "linear ridge: n_train={} n_test={} gamma={} error={:.4}% ({:.1} s)",
        outcome.n_train,
        outcome.n_test,
        outcome.selection.gamma,
        100.0 * outcome.error,
        outcome.wall_ms / 1e3
    );
    let sweep = SweepResult::single("linear-baseline", &outcome, args.data.seed, &train, &test, &opts.gamma);
    finish(
        "linear-baseline",
        args,
        &sweep,
        &args.out,
        vec![DatasetRecord::of("train", &train), DatasetRecord::of("test", &test)],
        serde_json::to_value(&outcome)?,
    )
}

fn sweep_config(args: &RfSweepArgs) -> anyhow::Result<SweepConfig> {
    let path: FidelityPath = args.path.parse().map_err(|e: speckle_rf::Error| usage(e.to_string()))?;
    let correlation: CorrelationMode = args
        .correlation
        .parse()
        .map_err(|e: speckle_rf::Error| usage(e.to_string()))?;
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let seeds = (0..args.seeds as u64).map(|k| args.data.seed + k).collect();
    let mut cfg = SweepConfig::new(args.n_list.clone(), seeds, path);
    cfg.gamma = args.ridge.choice();
    cfg.detector = DetectorSpec {
        shot_noise: args.shot_noise,
        photon_budget: args.photon_budget,
        quantize_bits: args.quantize_bits,
        correlation,
    };
    cfg.gram_probe = args.gram_probe;
    cfg.split_seed = args.data.seed;
    cfg.memory_budget = budget_bytes(args.memory_budget_gb)?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_rf_sweep(args: &RfSweepArgs, cancel: &AtomicBool) -> anyhow::Result<()> {
    let cfg = sweep_config(args)?;
    output_format(&args.out)?;
    let (train, test) = load_pair(&args.data)?;
    let sweep = bench::run_rf_sweep(&train, &test, &cfg, Some(cancel))?;
    for s in sweep.summary() {
        println!(
            "N={:>6}  error={:.4}% ± {:.4}  seeds={}",
            s.n_features,
            100.0 * s.mean_error,
            100.0 * s.std_error,
            s.seeds
        );
    }
    let points = sweep.mean_errors();
    let fit = if points.len() >= bench::powerlaw::MIN_POINTS {
        match bench::fit_power_law(&points, args.err_inf) {
            Ok(fit) => {
                println!(
                    "power law: err - {} ≈ {:.4} N^{:.3} (fixed -2/3 amplitude {:.4})",
                    args.err_inf, fit.amplitude, fit.exponent, fit.fixed_amplitude
                );
                serde_json::to_value(fit)?
            }
            Err(e) => {
                println!("power law: not fitted ({e})");
                serde_json::Value::String(e.to_string())
            }
        }
    } else {
        serde_json::Value::Null
    };
    if sweep.partial {
        eprintln!("interrupted: wrote {} finished records", sweep.records.len());
    }
    finish(
        "rf-sweep",
        args,
        &sweep,
        &args.out,
        vec![DatasetRecord::of("train", &train), DatasetRecord::of("test", &test)],
        serde_json::json!({ "sweep": cfg, "power_law": fit }),
    )
}

#[derive(Serialize)]
struct ConvergenceRow {
    #[serde(rename = "N")]
    n_features: usize,
    trials: usize,
    max_abs: f64,
    rms: f64,
    rms_std: f64,
    kernel_max: f64,
}

fn cmd_convergence(args: &ConvergenceArgs) -> anyhow::Result<()> {
    let format = output_format(&args.out)?;
    if args.data.n_train == 0 || args.data.n_train > features::GRAM_MAX_SAMPLES {
        return Err(usage(format!(
            "--n-train must lie in 1..={} for the convergence study",
            features::GRAM_MAX_SAMPLES
        )));
    }
    let dir = data_dir(&args.data)?;
    let train = bench::load_mnist(&dir, Split::Train)?;
    let sample = bench::subsample(&train, args.data.n_train, args.data.seed)?;
    let stats = features::gram_convergence(
        sample.normalized().as_ref(),
        &args.n_list,
        args.data.seed,
        args.trials,
    )
    .map_err(|e| match e {
        speckle_rf::Error::InvalidArgument(m) => usage(m),
        other => other.into(),
    })?;
    let rows: Vec<ConvergenceRow> = stats
        .iter()
        .map(|s| ConvergenceRow {
            n_features: s.n_features,
            trials: s.trials,
            max_abs: s.max_abs,
            rms: s.rms,
            rms_std: s.rms_std,
            kernel_max: s.kernel_max,
        })
        .collect();
    for r in &rows {
        println!(
            "N={:>7}  max|G-K|={:.5} ({:.3}% of max K)  rms={:.5}",
            r.n_features,
            r.max_abs,
            100.0 * r.max_abs / r.kernel_max,
            r.rms
        );
    }
    let bytes = match format {
        OutputFormat::Csv => {
            let mut text = String::from("N,trials,max_abs,rms,rms_std,kernel_max\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.n_features, r.trials, r.max_abs, r.rms, r.rms_std, r.kernel_max
                ));
            }
            text.into_bytes()
        }
        OutputFormat::Json => {
            let mut v = serde_json::to_vec_pretty(&serde_json::json!({ "stats": rows }))?;
            v.push(b'\n');
            v
        }
    };
    if let Some(dir) = args.out.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&args.out.output, bytes)
        .with_context(|| format!("writing {}", args.out.output.display()))?;
    let mut manifest = RunManifest::new("convergence", serde_json::to_value(args)?);
    manifest.datasets = vec![DatasetRecord::of("sample", &sample)];
    manifest.results = Some(args.out.output.clone());
    bench::write_manifest(&bench::manifest_path(&args.out.output), &manifest)?;
    Ok(())
}

fn resolve<T>(matches: &ArgMatches, args: T, config: Option<PathBuf>) -> anyhow::Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    merge_config(args, matches, config.as_deref())
}

fn run(cli: Cli, matches: &ArgMatches) -> anyhow::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| anyhow!("configuring {} threads: {e}", cli.threads))?;
    }
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match cli.command {
        Command::KernelExact(a) => {
            let config = a.data.config.clone();
            let a = resolve(sub, a, config)?;
            cmd_kernel_exact(&a).inspect_err(|e| write_failure_manifest("kernel-exact", &a, &a.out, e))
        }
        Command::LinearBaseline(a) => {
            let config = a.data.config.clone();
            let a = resolve(sub, a, config)?;
            cmd_linear(&a).inspect_err(|e| write_failure_manifest("linear-baseline", &a, &a.out, e))
        }
        Command::RfSweep(a) => {
            let config = a.data.config.clone();
            let a = resolve(sub, a, config)?;
            let cancel = Arc::new(AtomicBool::new(false));
            let flag = Arc::clone(&cancel);
            ctrlc::set_handler(move || {
                if flag.swap(true, Ordering::SeqCst) {
                    std::process::exit(130);
                }
                eprintln!("interrupt received: finishing the current seed, press again to abort");
            })
            .context("installing the interrupt handler")?;
            cmd_rf_sweep(&a, &cancel).inspect_err(|e| write_failure_manifest("rf-sweep", &a, &a.out, e))
        }
        Command::Convergence(a) => {
            let config = a.data.config.clone();
            let a = resolve(sub, a, config)?;
            cmd_convergence(&a)
        }
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
