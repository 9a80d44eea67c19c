use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use grbm::baselines::{MogInit, VarianceMode};
use grbm::data::io::{load_dataset, load_image, load_model, save_dataset, save_model, write_csv};
use grbm::data::{
    apply_whitening, dead_leaves_image, extract_patches_from_images, fit_whitening, WhiteningKind,
};
use grbm::estimators::{
    ais_avg_log_likelihood, ais_log_partition, sample_visible_chains, AisConfig, Schedule,
};
use grbm::exact::DEFAULT_ENUMERATION_CAP;
use grbm::experiment::{
    mixture_summary, run_bss, run_patch_study, run_sampler_bench, BenchData, BssConfig,
    PatchStudyConfig, SamplerBenchConfig, SamplerSpec,
};
use grbm::rng::{stream, streams};
use grbm::training::{train_monitored, Monitor};
use grbm::{DataBatch, ExactDensity, GrbmParams, Method, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Overrides;
use crate::output::{in_dir, Sink};
use crate::{CliError, Context, Format};

/// Largest hidden layer for which `eval` and `ais` enumerate by default.
const AUTO_EXACT_HIDDEN: usize = 20;

pub fn dispatch(cmd: crate::Command, mut o: Overrides, ctx: &Context) -> Result<(), CliError> {
    use crate::Command::*;
    match cmd {
        Bss(a) => bss(a, &mut o, ctx),
        Train(a) => train(a, &mut o, ctx),
        Eval(a) => eval(a, &mut o, ctx),
        Mixture(a) => mixture(a, ctx),
        Ais(a) => ais(a, &mut o, ctx),
        Sample(a) => sample(a, &mut o, ctx),
        Whiten(a) => whiten(a, ctx),
        Patches(a) => patches(a, &mut o, ctx),
        Bench(a) => bench(a, &mut o, ctx),
    }
}

/// Training flags, named after the `TrainConfig` fields.
#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    k_steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate_w: Option<f64>,
    #[arg(long)]
    learning_rate_b: Option<f64>,
    #[arg(long)]
    learning_rate_c: Option<f64>,
    #[arg(long)]
    momentum_initial: Option<f64>,
    #[arg(long)]
    grad_norm_cap: Option<f64>,
    #[arg(long)]
    learn_sigma: bool,
    #[arg(long)]
    tau_init: Option<f64>,
    /// Persistent chains per temperature for PCD and PT.
    #[arg(long)]
    num_chains: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pt_inverse_temperatures: Option<Vec<f64>>,
}

impl TrainFlags {
    fn apply(&self, o: &mut Overrides) {
        let mut t = serde_json::Map::new();
        let mut put = |k: &str, v: serde_json::Value| {
            if !v.is_null() {
                t.insert(k.into(), v);
            }
        };
        put("method", json!(self.method));
        put("k_steps", json!(self.k_steps));
        put("epochs", json!(self.epochs));
        put("batch_size", json!(self.batch_size));
        put("learning_rate_w", json!(self.learning_rate_w));
        put("learning_rate_b", json!(self.learning_rate_b));
        put("learning_rate_c", json!(self.learning_rate_c));
        put("momentum_initial", json!(self.momentum_initial));
        put("grad_norm_cap", json!(self.grad_norm_cap));
        put("tau_init", json!(self.tau_init));
        put("num_chains", json!(self.num_chains));
        put(
            "pt_inverse_temperatures",
            json!(self.pt_inverse_temperatures),
        );
        if self.learn_sigma {
            put("learn_sigma", json!(true));
        }
        if !t.is_empty() {
            o.set("train", t);
        }
    }
}

/// AIS flags; they set the `ais.*` keys.
#[derive(Debug, Args)]
pub struct AisFlags {
    #[arg(long)]
    ais_chains: Option<usize>,
    /// Number of betas including 0 and 1.
    #[arg(long)]
    ais_betas: Option<usize>,
    #[arg(long)]
    ais_schedule: Option<Schedule>,
}

impl AisFlags {
    fn apply(&self, o: &mut Overrides) {
        let mut a = serde_json::Map::new();
        if let Some(v) = self.ais_chains {
            a.insert("num_chains".into(), json!(v));
        }
        if let Some(v) = self.ais_betas {
            a.insert("num_betas".into(), json!(v));
        }
        if let Some(v) = self.ais_schedule {
            a.insert("schedule".into(), json!(v));
        }
        if !a.is_empty() {
            o.set("ais", a);
        }
    }
}

fn load_data(path: &Path) -> Result<DataBatch, CliError> {
    load_dataset(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_params(path: &Path) -> Result<GrbmParams, CliError> {
    load_model(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn check_dims(p: &GrbmParams, d: &DataBatch, what: &Path) -> Result<(), CliError> {
    if p.n_visible() != d.dim() {
        return Err(CliError::Data(format!(
            "{}: data has {} columns but the model has {} visible units",
            what.display(),
            d.dim(),
            p.n_visible()
        )));
    }
    Ok(())
}

fn require_out<'a>(ctx: &'a Context, cmd: &str) -> Result<&'a Path, CliError> {
    ctx.out()
        .ok_or_else(|| CliError::Usage(format!("{cmd} needs --out")))
}

/// Writes a dataset to `--out` (format from the extension) or as CSV to
/// stdout.
fn emit_dataset(d: &DataBatch, ctx: &Context) -> Result<(), CliError> {
    match ctx.out() {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
            }
            Ok(save_dataset(d, p)?)
        }
        None => {
            let mut out = std::io::BufWriter::new(std::io::stdout());
            write_csv(d, &mut out)?;
            out.flush().map_err(|e| CliError::Data(e.to_string()))
        }
    }
}

#[derive(Debug, Args)]
pub struct BssArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Comma-separated hidden layer sizes.
    #[arg(long, value_delimiter = ',')]
    hidden_sizes: Option<Vec<usize>>,
    #[arg(long)]
    mog_components: Option<usize>,
    #[arg(long)]
    mog_variance: Option<VarianceMode>,
    #[arg(long)]
    mog_init: Option<MogInit>,
    #[arg(long)]
    mog_restarts: Option<usize>,
    #[arg(long)]
    recovery_threshold_deg: Option<f64>,
    #[command(flatten)]
    train: TrainFlags,
}

/// With `--out DIR`: `records.jsonl`, `summary.csv` and `timings.jsonl`.
/// Otherwise the records (json) or the summary (csv) go to stdout.
fn bss(a: BssArgs, o: &mut Overrides, ctx: &Context) -> Result<(), CliError> {
    o.set_opt("trials", a.trials);
    o.set_opt("n_train", a.n_train);
    o.set_opt("n_test", a.n_test);
    o.set_opt("hidden_sizes", a.hidden_sizes);
    o.set_opt("mog_components", a.mog_components);
    o.set_opt("recovery_threshold_deg", a.recovery_threshold_deg);
    let mut mog = serde_json::Map::new();
    if let Some(v) = a.mog_variance {
        mog.insert("variance".into(), json!(v));
    }
    if let Some(v) = a.mog_init {
        mog.insert("init".into(), json!(v));
    }
    if let Some(v) = a.mog_restarts {
        mog.insert("restarts".into(), json!(v));
    }
    if !mog.is_empty() {
        o.set("mog", mog);
    }
    a.train.apply(o);
    let cfg: BssConfig = o.build(&BssConfig::default(), &["train", "mog"])?;
    let report = run_bss(&cfg)?;
    match ctx.out() {
        Some(dir) => {
            Sink::open(in_dir(Some(dir), "records.jsonl").as_deref())?
                .json_lines(&report.records)?;
            Sink::open(in_dir(Some(dir), "summary.csv").as_deref())?.csv(&report.summary)?;
            Sink::open(in_dir(Some(dir), "timings.jsonl").as_deref())?.json_lines(&report.timings)
        }
        None => match ctx.format {
            Format::Json => Sink::open(None)?.json_lines(&report.records),
            Format::Csv => Sink::open(None)?.csv(&report.summary),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MonitorKind {
    Off,
    Exact,
    Ais,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    /// Training data (`.csv`, or the binary dataset format).
    #[arg(long)]
    data: PathBuf,
    /// Held-out data tracked alongside the training data.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    hidden: usize,
    /// How the per-epoch log-likelihood is tracked.
    #[arg(long, value_enum, default_value_t = MonitorKind::Exact)]
    monitor: MonitorKind,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    ais: AisFlags,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainJob {
    train: TrainConfig,
    ais: AisConfig,
}

/// Saves the model to `--out` and prints the per-epoch history.
fn train(a: TrainCmd, o: &mut Overrides, ctx: &Context) -> Result<(), CliError> {
    let out = require_out(ctx, "train")?;
    a.train.apply(o);
    a.ais.apply(o);
    let job: TrainJob = o.build(&TrainJob::default(), &["train", "ais"])?;
    let d = load_data(&a.data)?;
    let test = a.test.as_deref().map(load_data).transpose()?;
    if let Some(t) = &test {
        if t.dim() != d.dim() {
            return Err(CliError::Data(format!(
                "test data has {} columns, training data {}",
                t.dim(),
                d.dim()
            )));
        }
    }
    let monitor = match a.monitor {
        MonitorKind::Off => Monitor::Off,
        MonitorKind::Exact => Monitor::Exact,
        MonitorKind::Ais => Monitor::Ais(job.ais.clone()),
    };
    let outcome = train_monitored(&d, test.as_ref(), a.hidden, &job.train, &monitor)?;
    if !outcome.params.is_finite() {
        return Err(CliError::Numeric(
            "training produced non-finite parameters".into(),
        ));
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    save_model(&outcome.params, out)?;
    Sink::open(None)?.rows(ctx.format, &outcome.history)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Estimate ln Z by AIS even when enumeration is feasible.
    #[arg(long)]
    use_ais: bool,
    #[command(flatten)]
    ais: AisFlags,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AisJob {
    ais: AisConfig,
}

#[derive(Debug, Serialize)]
struct EvalRow {
    method: &'static str,
    samples: usize,
    avg_log_likelihood: f64,
    log_partition: f64,
    log_partition_std_err: Option<f64>,
}

fn eval(a: EvalArgs, o: &mut Overrides, ctx: &Context) -> Result<(), CliError> {
    a.ais.apply(o);
    let job: AisJob = o.build(&AisJob::default(), &["ais"])?;
    let p = load_params(&a.model)?;
    let d = load_data(&a.data)?;
    check_dims(&p, &d, &a.data)?;
    let row = if a.use_ais || p.n_hidden() > AUTO_EXACT_HIDDEN {
        let (ll, est) = ais_avg_log_likelihood(&d, &p, &job.ais)?;
        EvalRow {
            method: "ais",
            samples: d.len(),
            avg_log_likelihood: ll,
            log_partition: est.log_z,
            log_partition_std_err: Some(est.std_err),
        }
    } else {
        let density = ExactDensity::new(&p)?;
        EvalRow {
            method: "exact",
            samples: d.len(),
            avg_log_likelihood: density.avg_log_likelihood(&d)?,
            log_partition: density.log_partition(),
            log_partition_std_err: None,
        }
    };
    if !row.avg_log_likelihood.is_finite() {
        return Err(CliError::Numeric("log-likelihood is not finite".into()));
    }
    Sink::open(ctx.out())?.rows(ctx.format, [row])
}

#[derive(Debug, Args)]
pub struct MixtureArgs {
    #[arg(long)]
    model: PathBuf,
    /// Also write every component (hidden state, weight, mean) here.
    #[arg(long)]
    components: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct OrderRow {
    order: usize,
    mass: f64,
}

#[derive(Debug, Serialize)]
struct ComponentRow {
    hidden: String,
    order: usize,
    weight: f64,
    mean: Vec<f64>,
}

/// Prints the order-mass table; `--components` adds the component list.
fn mixture(a: MixtureArgs, ctx: &Context) -> Result<(), CliError> {
    let p = load_params(&a.model)?;
    if p.n_hidden() > DEFAULT_ENUMERATION_CAP {
        return Err(CliError::Numeric(format!(
            "{} hidden units is too many to enumerate",
            p.n_hidden()
        )));
    }
    let (mass, comps) = mixture_summary(&p)?;
    if let Some(path) = &a.components {
        let rows: Vec<ComponentRow> = comps
            .into_iter()
            .map(|(h, mean, weight)| ComponentRow {
                hidden: h.iter().map(|b| char::from(b'0' + b)).collect(),
                order: h.iter().filter(|&&b| b == 1).count(),
                weight,
                mean: mean.to_vec(),
            })
            .collect();
        write_components(&rows, path, ctx.format)?;
    }
    let rows = mass
        .into_iter()
        .enumerate()
        .map(|(order, mass)| OrderRow { order, mass });
    Sink::open(ctx.out())?.rows(ctx.format, rows)
}

/// CSV has no list type, so the mean is spread over `mean_0, mean_1, ...`.
fn write_components(rows: &[ComponentRow], path: &Path, format: Format) -> Result<(), CliError> {
    let mut sink = Sink::open(Some(path))?;
    if format == Format::Json {
        return sink.json_lines(rows);
    }
    let m = rows.first().map_or(0, |r| r.mean.len());
    let mut table = Vec::with_capacity(rows.len() + 1);
    let mut header = vec!["hidden".to_string(), "order".into(), "weight".into()];
    header.extend((0..m).map(|i| format!("mean_{i}")));
    table.push(header);
    for r in rows {
        let mut line = vec![r.hidden.clone(), r.order.to_string(), r.weight.to_string()];
        line.extend(r.mean.iter().map(f64::to_string));
        table.push(line);
    }
    sink.csv_records(table)
}

#[derive(Debug, Args)]
pub struct AisCmd {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    ais: AisFlags,
}

#[derive(Debug, Serialize)]
struct AisRow {
    log_z: f64,
    std_err: f64,
    effective_sample_size: f64,
    num_chains: usize,
    num_betas: usize,
    schedule: Schedule,
    exact_log_z: Option<f64>,
    abs_error: Option<f64>,
}

/// Reports the exact value next to the estimate when the hidden layer is
/// small enough to enumerate.
fn ais(a: AisCmd, o: &mut Overrides, ctx: &Context) -> Result<(), CliError> {
    a.ais.apply(o);
    let job: AisJob = o.build(&AisJob::default(), &["ais"])?;
    let p = load_params(&a.model)?;
    let est = ais_log_partition(&p, &job.ais)?;
    if !est.log_z.is_finite() {
        return Err(CliError::Numeric("AIS estimate is not finite".into()));
    }
    let exact = (p.n_hidden() <= AUTO_EXACT_HIDDEN)
        .then(|| ExactDensity::new(&p).map(|d| d.log_partition()))
        .transpose()?;
    let row = AisRow {
        log_z: est.log_z,
        std_err: est.std_err,
        effective_sample_size: est.effective_sample_size,
        num_chains: job.ais.num_chains,
        num_betas: job.ais.num_betas,
        schedule: job.ais.schedule,
        exact_log_z: exact,
        abs_error: exact.map(|z| (z - est.log_z).abs()),
    };
    Sink::open(ctx.out())?.rows(ctx.format, [row])
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Gibbs sweeps per chain before its sample is taken.
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SeedJob {
    seed: u64,
}

/// Samples go to `--out` (format by extension) or as CSV to stdout.
fn sample(a: SampleArgs, o: &mut Overrides, ctx: &Context) -> Result<(), CliError> {
    let job: SeedJob = o.build(&SeedJob::default(), &[])?;
    if a.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let p = load_params(&a.model)?;
    let x = sample_visible_chains(&p, a.count, a.burn_in, job.seed)?;
    emit_dataset(&DataBatch::new(x)?, ctx)
}

#[derive(Debug, Args)]
pub struct WhitenArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "zca")]
    kind: WhiteningKind,
    /// Fit the transform on this dataset instead, e.g. a training split.
    #[arg(long)]
    fit_on: Option<PathBuf>,
    /// Save the fitted transform as JSON.
    #[arg(long)]
    transform: Option<PathBuf>,
}

fn whiten(a: WhitenArgs, ctx: &Context) -> Result<(), CliError> {
    let d = load_data(&a.data)?;
    let fit_data = match &a.fit_on {
        Some(p) => load_data(p)?,
        None => d.clone(),
    };
    if fit_data.dim() != d.dim() {
        return Err(CliError::Data(format!(
            "fit data has {} columns, data {}",
            fit_data.dim(),
            d.dim()
        )));
    }
    let t = fit_whitening(&fit_data, a.kind)?;
    if let Some(path) = &a.transform {
        let mut sink = Sink::open(Some(path))?;
        sink.json_lines([&t])?;
    }
    emit_dataset(&apply_whitening(&t, &d)?, ctx)
}

#[derive(Debug, Args)]
pub struct PatchesArgs {
    /// Grayscale images: PGM, or whitespace-separated text matrices.
    #[arg(long, num_args = 1..)]
    images: Vec<PathBuf>,
    /// Use this many synthetic dead-leaves scenes instead of images.
    #[arg(long, conflicts_with = "images")]
    dead_leaves: Option<usize>,
    /// Side length of the synthetic scenes.
    #[arg(long, default_value_t = 256)]
    scene_size: usize,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    n_patches: Option<usize>,
    #[arg(long)]
    n_hidden: Option<usize>,
    #[arg(long)]
    whitening: Option<WhiteningKind>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Only cut the raw patches and write them to `--out`.
    #[arg(long)]
    extract_only: bool,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    ais: AisFlags,
}

fn patches(a: PatchesArgs, o: &mut Overrides, ctx: &Context) -> Result<(), CliError> {
    o.set_opt("patch_size", a.patch_size);
    o.set_opt("n_patches", a.n_patches);
    o.set_opt("n_hidden", a.n_hidden);
    o.set_opt("whitening", a.whitening);
    o.set_opt("train_fraction", a.train_fraction);
    a.train.apply(o);
    a.ais.apply(o);
    let cfg: PatchStudyConfig = o.build(&PatchStudyConfig::default(), &["train", "ais"])?;
    let images = match a.dead_leaves {
        Some(0) => return Err(CliError::Usage("--dead-leaves must be positive".into())),
        Some(n) => {
            let mut rng = stream(cfg.seed, streams::BASELINE);
            (0..n)
                .map(|_| dead_leaves_image(a.scene_size, a.scene_size, &mut rng))
                .collect()
        }
        None if a.images.is_empty() => {
            return Err(CliError::Usage("give --images or --dead-leaves".into()));
        }
        None => a
            .images
            .iter()
            .map(|p| load_image(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
            .collect::<Result<Vec<_>, _>>()?,
    };
    if a.extract_only {
        require_out(ctx, "patches --extract-only")?;
        let mut rng = stream(cfg.seed, streams::DATA);
        let d = extract_patches_from_images(&images, cfg.patch_size, cfg.n_patches, &mut rng)?;
        return emit_dataset(&d, ctx);
    }
    let report = run_patch_study(&images, &cfg)?;
    if !report.grbm_test_ll.is_finite() {
        return Err(CliError::Numeric(
            "patch model log-likelihood is not finite".into(),
        ));
    }
    let mut sink = Sink::open(ctx.out())?;
    match ctx.format {
        Format::Json => sink.json_lines([&report]),
        Format::Csv => sink.csv(patch_rows(&report)),
    }
}

#[derive(Debug, Serialize)]
struct MetricRow {
    metric: String,
    value: f64,
}

fn patch_rows(r: &grbm::experiment::PatchStudyReport) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> = [
        ("n_train", r.n_train as f64),
        ("n_test", r.n_test as f64),
        ("gaussian_test_ll", r.gaussian_test_ll),
        ("grbm_test_ll", r.grbm_test_ll),
        ("log_partition", r.log_partition),
        ("log_partition_std_err", r.log_partition_std_err),
        ("mean_active_before", r.mean_active_before),
        ("mean_active_after", r.mean_active_after),
    ]
    .into_iter()
    .map(|(m, v)| MetricRow {
        metric: m.into(),
        value: v,
    })
    .collect();
    for (name, hist) in [
        ("active_before", &r.histogram_before),
        ("active_after", &r.histogram_after),
    ] {
        rows.extend(hist.iter().enumerate().map(|(k, &c)| MetricRow {
            metric: format!("{name}_{k}"),
            value: c as f64,
        }));
    }
    rows
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated samplers such as `cd-1,pcd-10,pt-10`.
    #[arg(long, value_delimiter = ',')]
    samplers: Option<Vec<SamplerSpec>>,
    /// `patches` or `lifted-sources`.
    #[arg(long)]
    source: Option<BenchData>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    n_visible: Option<usize>,
    #[arg(long)]
    n_hidden: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Column cap as a fraction of the largest data norm.
    #[arg(long)]
    cap_fraction: Option<f64>,
    #[arg(long)]
    plateau_tol: Option<f64>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Serialize)]
struct BenchRow<'a> {
    sampler: &'a str,
    final_ll: f64,
    epochs_to_plateau: usize,
    diverged_runs: usize,
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    sampler: &'a str,
    epoch: usize,
    mean_ll: f64,
}

#[derive(Debug, Serialize)]
struct TimingRow<'a> {
    sampler: &'a str,
    seconds_per_epoch: f64,
}

/// With `--out DIR`: `runs.jsonl`, `summary.csv`, `curves.csv` and the
/// machine-dependent `timings.csv`. Otherwise the summary goes to stdout
/// and the timings to stderr.
fn bench(a: BenchArgs, o: &mut Overrides, ctx: &Context) -> Result<(), CliError> {
    o.set_opt("samplers", a.samplers);
    o.set_opt("data", a.source);
    o.set_opt("runs", a.runs);
    o.set_opt("n_visible", a.n_visible);
    o.set_opt("n_hidden", a.n_hidden);
    o.set_opt("n_samples", a.n_samples);
    o.set_opt("cap_fraction", a.cap_fraction);
    o.set_opt("plateau_tol", a.plateau_tol);
    a.train.apply(o);
    let cfg: SamplerBenchConfig = o.build(&SamplerBenchConfig::default(), &["train"])?;
    let report = run_sampler_bench(&cfg)?;
    let rows: Vec<BenchRow> = report
        .summary
        .iter()
        .map(|s| BenchRow {
            sampler: &s.sampler,
            final_ll: s.final_ll,
            epochs_to_plateau: s.epochs_to_plateau,
            diverged_runs: s.diverged_runs,
        })
        .collect();
    let timings: Vec<TimingRow> = report
        .summary
        .iter()
        .map(|s| TimingRow {
            sampler: &s.sampler,
            seconds_per_epoch: report.seconds_per_epoch(&s.sampler).unwrap_or(f64::NAN),
        })
        .collect();
    match ctx.out() {
        Some(dir) => {
            let curves = report.summary.iter().flat_map(|s| {
                s.mean_curve
                    .iter()
                    .enumerate()
                    .map(|(epoch, &mean_ll)| CurveRow {
                        sampler: &s.sampler,
                        epoch,
                        mean_ll,
                    })
            });
            Sink::open(in_dir(Some(dir), "runs.jsonl").as_deref())?.json_lines(&report.runs)?;
            Sink::open(in_dir(Some(dir), "summary.csv").as_deref())?.csv(&rows)?;
            Sink::open(in_dir(Some(dir), "curves.csv").as_deref())?.csv(curves)?;
            Sink::open(in_dir(Some(dir), "timings.csv").as_deref())?.csv(&timings)
        }
        None => {
            for t in &timings {
                eprintln!("{:>8}  {:.4} s/epoch", t.sampler, t.seconds_per_epoch);
            }
            match ctx.format {
                Format::Json => Sink::open(None)?.json_lines(&report.summary),
                Format::Csv => Sink::open(None)?.csv(&rows),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_rows_include_histograms() {
        let r = grbm::experiment::PatchStudyReport {
            n_train: 4,
            n_test: 3,
            gaussian_test_ll: -1.0,
            grbm_test_ll: -0.5,
            log_partition: 2.0,
            log_partition_std_err: 0.1,
            histogram_before: vec![1, 3],
            histogram_after: vec![4, 0],
            mean_active_before: 0.75,
            mean_active_after: 0.0,
        };
        let rows = patch_rows(&r);
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[9].metric, "active_before_1");
        assert_eq!(rows[9].value, 3.0);
    }
}
