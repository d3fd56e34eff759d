//! `casimir` command-line tool.
//!
//! Every subcommand parses its flags, loads files, calls into
//! [`casimir_core`] and writes the result. Exit status: 0 on success, 1 on
//! usage, domain or configuration errors, 2 on numerical failures.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use casimir_core::cases::{reference, two_pole_film, CaseTag};
use casimir_core::config::RunConfig;
use casimir_core::dataset::{
    feature_rows_csv, generate_dataset_with_progress, parse_feature_rows, split_dataset,
    with_noise, Dataset, GapGrid,
};
use casimir_core::lifshitz::{FilmStack, ForceCurve};
use casimir_core::materials::{param_index, param_name, FilmSample, SamplingRanges};
use casimir_core::neuralnet::Mlp;
use casimir_core::pipeline::{
    self, grid_tag, predict_film, predict_spectrum, run_case, spectrum_csv, train_characterizer,
    train_denoiser, write_evaluation,
};
use casimir_core::textio::{self, fmt_f64, TOOL_VERSION};
use casimir_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "casimir", version, about = "Casimir force curves and their neural-network inversion")]
pub struct Cli {
    /// Suppress progress messages.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded dataset of (feature, target) incidences.
    Gen(GenArgs),
    /// Train a characterizer on the training part of a dataset.
    Train(TrainArgs),
    /// Evaluate a characterizer on the test part of a dataset.
    Eval(EvalArgs),
    /// Predict film parameters from feature rows.
    Predict(PredictArgs),
    /// Train a denoising autoencoder on the training part of a dataset.
    DenoiseTrain(DenoiseTrainArgs),
    /// Denoise feature rows.
    Denoise(DenoiseArgs),
    /// Pressure and its gap derivative for one film over a gap grid.
    ForceCurve(ForceCurveArgs),
    /// Real-frequency permittivity of a film, given or predicted.
    Spectrum(SpectrumArgs),
    /// Generate, split, train, evaluate and write every report for one case.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Run-configuration file (TOML); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct GenArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// two-pole-a, two-pole-b, four-pole or silicon.
    #[arg(long)]
    pub case: Option<CaseTag>,
    /// Master seed of the dataset.
    #[arg(long)]
    pub seed: u64,
    /// Dataset CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of incidences.
    #[arg(long)]
    pub size: Option<usize>,
    /// Add Gaussian noise of this standard deviation to the features.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long, requires = "noise_sigma")]
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Weight-initialization and batching seed.
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training-part size; defaults to 80% of the dataset.
    #[arg(long)]
    pub n_train: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory for `report.csv` and `scatter_<param>.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluate on every row instead of the held-out part.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset file or feature CSV with columns `X_1..X_n`.
    #[arg(long)]
    pub input: PathBuf,
    /// Denoise the features with this autoencoder first.
    #[arg(long)]
    pub denoiser: Option<PathBuf>,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct DenoiseTrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Presentation noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub n_train: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilmArgs {
    /// Film family; fixes and ties parameters the way the case does.
    #[arg(long)]
    pub case: CaseTag,
    /// Film thickness in nm.
    #[arg(long)]
    pub t_nm: Option<f64>,
    /// Second resonance frequency in rad/s.
    #[arg(long)]
    pub w02: Option<f64>,
    /// Any other parameter, `name=value` in rad/s (for example `wp1=1e15`).
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ForceCurveArgs {
    #[command(flatten)]
    pub film: FilmArgs,
    #[arg(long)]
    pub d_min_nm: Option<f64>,
    #[arg(long)]
    pub d_max_nm: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SpectrumArgs {
    /// Predict the film with this model instead of giving it explicitly.
    #[arg(long, requires = "input", conflicts_with_all = ["case", "t_nm", "w02", "set"])]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub input: Option<PathBuf>,
    /// Row of `--input` to use.
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long, required_unless_present = "model")]
    pub case: Option<CaseTag>,
    #[arg(long)]
    pub t_nm: Option<f64>,
    #[arg(long)]
    pub w02: Option<f64>,
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value_t = 1e14)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 1e17)]
    pub omega_max: f64,
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub case: Option<CaseTag>,
    /// Dataset seed; falls back to `[case] seed` in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reuse this dataset instead of generating one.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Output directory; falls back to `[output] dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("casimir: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        2
    } else {
        1
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let log = Log { quiet: cli.quiet };
    match &cli.command {
        Command::Gen(a) => gen(a, log),
        Command::Train(a) => train(a, log),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::DenoiseTrain(a) => denoise_train(a, log),
        Command::Denoise(a) => denoise(a),
        Command::ForceCurve(a) => force_curve(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Run(a) => run_all(a, log),
    }
}

#[derive(Clone, Copy)]
struct Log {
    quiet: bool,
}

impl Log {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn load_config(arg: &ConfigArg, fallback: Option<CaseTag>) -> Result<RunConfig> {
    match (&arg.config, fallback) {
        (Some(path), _) => RunConfig::load(path, fallback),
        (None, Some(tag)) => Ok(RunConfig::preset(tag)),
        (None, None) => Err(Error::Config("give --case or --config".into())),
    }
}

fn check_case(cfg: &RunConfig, flag: Option<CaseTag>) -> Result<()> {
    match flag {
        Some(tag) if tag != cfg.case.dataset.case => Err(Error::Config(format!(
            "--case {tag} contradicts the config file case {}",
            cfg.case.dataset.case
        ))),
        _ => Ok(()),
    }
}

fn header(digest: &str) -> Vec<String> {
    vec![format!("tool={TOOL_VERSION}"), format!("config_digest={digest}")]
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => textio::write_file(p, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
    }
}

fn default_n_train(size: usize) -> usize {
    size * 4 / 5
}

fn gen(a: &GenArgs, log: Log) -> Result<()> {
    let mut cfg = load_config(&a.config, a.case)?;
    check_case(&cfg, a.case)?;
    let ds_cfg = &mut cfg.case.dataset;
    if let Some(n) = a.size {
        ds_cfg.size = n;
    }
    let total = ds_cfg.size;
    let step = (total / 10).max(1);
    log.say(format!("generating {total} {} incidences", ds_cfg.case));
    let mut ds = generate_dataset_with_progress(ds_cfg, a.seed, |done| {
        if done % step == 0 {
            log.say(format!("  {done}/{total}"));
        }
    })?;
    if let Some(sigma) = a.noise_sigma {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("noise sigma must be ≥ 0, got {sigma}")));
        }
        ds = with_noise(&ds, sigma, a.noise_seed.unwrap_or(a.seed));
    }
    ds.write(&a.out)?;
    log.say(format!("wrote {}", a.out.display()));
    Ok(())
}

/// Splits `ds` with its own master seed, as `run` does.
fn split(ds: &Dataset, n_train: Option<usize>) -> Result<(Dataset, Dataset, usize)> {
    let n = n_train.unwrap_or_else(|| default_n_train(ds.len()));
    let (tr, te) = split_dataset(ds, n, ds.master_seed)?;
    Ok((tr, te, n))
}

fn train(a: &TrainArgs, log: Log) -> Result<()> {
    let ds = Dataset::read(&a.dataset)?;
    let run = load_config(&a.config, Some(ds.config.case))?;
    let mut cfg = run.case;
    cfg.dataset = ds.config.clone();
    cfg.train.seed = a.seed;
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    let (train_part, _, n) = split(&ds, a.n_train.or(Some(cfg.n_train).filter(|&n| n < ds.len())))?;
    cfg.n_train = n;
    if a.batch_size.is_none() {
        cfg.train.batch_size = cfg.train.batch_size.min(n);
    }
    log.say(format!(
        "training {} for {} epochs on {n} incidences",
        cfg.arch()?,
        cfg.train.epochs
    ));
    let (mut mlp, report) = train_characterizer(&cfg, &train_part)?;
    mlp.meta.insert("split_seed".into(), ds.master_seed.to_string());
    if let Some(loss) = report.loss_history.last() {
        log.say(format!("final training cost {}", fmt_f64(*loss)));
    }
    mlp.write(&a.out)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let mlp = Mlp::read(&a.model)?;
    let ds = Dataset::read(&a.dataset)?;
    check_schema(&mlp, &ds.config.ranges)?;
    let part = if a.all {
        ds.clone()
    } else {
        let n_train = match mlp.meta.get("n_train") {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("model has a bad n_train `{v}`")))?,
            None => default_n_train(ds.len()),
        };
        split(&ds, Some(n_train))?.1
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let mut comments = header(&ds.config_digest());
    comments.push(format!("model_digest={}", textio::digest(&mlp.to_text())));
    let (report, _) = write_evaluation(&mlp, &part, &a.out, &comments)?;
    for (n, r) in report.names.iter().zip(&report.rmse) {
        println!("{n} {}", fmt_f64(*r));
    }
    Ok(())
}

fn check_schema(mlp: &Mlp, ranges: &SamplingRanges) -> Result<()> {
    let names = casimir_core::dataset::TargetSchema::from_ranges(ranges)
        .names()
        .join(",");
    match mlp.meta.get("schema") {
        Some(s) if *s != names => Err(Error::Schema(format!(
            "model predicts `{s}` but the ranges free `{names}`"
        ))),
        _ => Ok(()),
    }
}

fn read_rows(path: &Path) -> Result<(Vec<Vec<f64>>, Option<Dataset>)> {
    let text = textio::read_file(path)?;
    let source = path.display().to_string();
    let ds = Dataset::parse(&text, &source).ok();
    let rows = match &ds {
        Some(ds) => ds.features(),
        None => parse_feature_rows(&text, &source)?,
    };
    Ok((rows, ds))
}

fn model_case(mlp: &Mlp) -> Option<CaseTag> {
    mlp.meta.get("case").and_then(|c| c.parse().ok())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let mlp = Mlp::read(&a.model)?;
    let ae = a.denoiser.as_deref().map(Mlp::read).transpose()?;
    let (rows, ds) = read_rows(&a.input)?;
    let ranges = match (&ds, &a.config.config) {
        (Some(ds), None) => ds.config.ranges.clone(),
        _ => load_config(&a.config, model_case(&mlp))?.case.dataset.ranges,
    };
    check_schema(&mlp, &ranges)?;
    let n_params = ranges.params().len();
    let mut s = String::new();
    for c in header(&textio::digest(&mlp.to_text())) {
        s.push_str(&format!("# {c}\n"));
    }
    let names: Vec<String> = (0..n_params).map(param_name).collect();
    s.push_str(&format!("row,{}\n", names.join(",")));
    for (i, x) in rows.iter().enumerate() {
        let film = match &ae {
            Some(ae) => pipeline::end_to_end(ae, &mlp, &ranges, x)?,
            None => predict_film(&mlp, &ranges, x)?,
        };
        s.push_str(&format!(
            "{i},{}\n",
            textio::fmt_f64_list(&film.sample.params(), ",")
        ));
    }
    emit(a.out.as_deref(), &s)
}

fn denoise_train(a: &DenoiseTrainArgs, log: Log) -> Result<()> {
    let ds = Dataset::read(&a.dataset)?;
    let run = load_config(&a.config, Some(ds.config.case))?;
    let mut cfg = run.denoiser;
    cfg.train.seed = a.seed;
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.sigma {
        cfg.train.input_noise = v;
    }
    let n_train = a.n_train.or(Some(run.case.n_train).filter(|&n| n < ds.len()));
    let (train_part, _, n) = split(&ds, n_train)?;
    if a.batch_size.is_none() {
        cfg.train.batch_size = cfg.train.batch_size.min(n);
    }
    log.say(format!(
        "training denoiser for {} epochs on {n} incidences",
        cfg.train.epochs
    ));
    let (mut ae, report) = train_denoiser(&train_part.features(), &cfg)?;
    for (k, v) in [
        ("case", ds.config.case.to_string()),
        ("grid", grid_tag(&ds.config)),
        ("dataset_seed", ds.master_seed.to_string()),
        ("dataset_digest", ds.config_digest()),
        ("n_train", n.to_string()),
        ("split_seed", ds.master_seed.to_string()),
    ] {
        ae.meta.insert(k.into(), v);
    }
    if let Some(loss) = report.loss_history.last() {
        log.say(format!("final training cost {}", fmt_f64(*loss)));
    }
    ae.write(&a.out)
}

fn denoise(a: &DenoiseArgs) -> Result<()> {
    let ae = Mlp::read(&a.model)?;
    let (rows, _) = read_rows(&a.input)?;
    let cleaned = rows
        .iter()
        .map(|x| pipeline::denoise(&ae, x))
        .collect::<Result<Vec<_>>>()?;
    let comments = header(&textio::digest(&ae.to_text()));
    emit(a.out.as_deref(), &feature_rows_csv(&cleaned, &comments))
}

/// Builds the film described by `--case`, `--t-nm`, `--w02` and `--set`.
///
/// Two-pole cases start from their fixed parameters with the ties applied;
/// the other cases start from a published reference film.
pub fn film_from_args(
    case: CaseTag,
    t_nm: Option<f64>,
    w02: Option<f64>,
    set: &[String],
) -> Result<FilmSample> {
    let mut params = match case {
        CaseTag::TwoPoleA | CaseTag::TwoPoleB => {
            let t = t_nm.map_or(100e-9, |v| v / 1e9);
            two_pole_film(case, t, w02.unwrap_or(1e15))?.params()
        }
        CaseTag::FourPole => reference::four_pole_first_true().params(),
        CaseTag::Silicon => reference::silicon_true().params(),
    };
    if let Some(t) = t_nm {
        params[0] = t / 1e9;
    }
    if let (Some(w), CaseTag::FourPole | CaseTag::Silicon) = (w02, case) {
        params[4] = w;
    }
    let n_poles = (params.len() - 1) / 3;
    for item in set {
        let (name, value) = textio::split_key_value(item)
            .ok_or_else(|| Error::Config(format!("--set expects name=value, got `{item}`")))?;
        let i = param_index(name, n_poles)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}` for {case}")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Error::Config(format!("--set {name}: `{value}` is not a number")))?;
        params[i] = if i == 0 { v / 1e9 } else { v };
    }
    FilmSample::from_params(&params)
}

fn film_comments(film: &FilmSample) -> Vec<String> {
    let params = textio::fmt_f64_list(&film.params(), " ");
    let mut c = header(&textio::digest(&params));
    c.push(format!("params={params}"));
    c
}

fn force_curve(a: &ForceCurveArgs) -> Result<()> {
    let f = &a.film;
    let film = film_from_args(f.case, f.t_nm, f.w02, &f.set)?;
    let grid = GapGrid::for_case(f.case);
    let grid = GapGrid::new(
        a.d_min_nm.map_or(grid.d_min(), |v| v / 1e9),
        a.d_max_nm.map_or(grid.d_max(), |v| v / 1e9),
        a.count.unwrap_or(grid.len()),
    )?;
    let quad = RunConfig::preset(f.case).case.dataset.quad;
    let curve = ForceCurve::compute(&FilmStack::on_gold(&film), grid.gaps(), &quad)?;
    let mut buf = Vec::new();
    curve
        .write_csv(&mut buf, &film_comments(&film))
        .expect("writing to memory");
    emit(a.out.as_deref(), &String::from_utf8(buf).expect("ascii"))
}

fn spectrum(a: &SpectrumArgs) -> Result<()> {
    let film = match (&a.model, &a.input, a.case) {
        (Some(model), Some(input), _) => {
            let mlp = Mlp::read(model)?;
            let (rows, ds) = read_rows(input)?;
            let ranges = match ds {
                Some(ds) => ds.config.ranges,
                None => model_case(&mlp)
                    .ok_or_else(|| Error::Config("model does not name its case".into()))?
                    .ranges(),
            };
            let x = rows.get(a.row).ok_or_else(|| {
                Error::Domain(format!("--row {} but the input has {} rows", a.row, rows.len()))
            })?;
            predict_film(&mlp, &ranges, x)?.sample
        }
        (_, _, Some(case)) => film_from_args(case, a.t_nm, a.w02, &a.set)?,
        _ => return Err(Error::Config("give --case or --model with --input".into())),
    };
    if a.points < 2 || !(a.omega_min > 0.0) || !(a.omega_max > a.omega_min) {
        return Err(Error::Domain(
            "need at least 2 points and 0 < omega-min < omega-max".into(),
        ));
    }
    let grid = pipeline::log_grid(a.omega_min, a.omega_max, a.points);
    let rows = predict_spectrum(&film.film, &grid)?;
    emit(a.out.as_deref(), &spectrum_csv(&rows, &film_comments(&film)))
}

fn run_all(a: &RunArgs, log: Log) -> Result<()> {
    let mut cfg = load_config(&a.config, a.case)?;
    check_case(&cfg, a.case)?;
    if let Some(v) = a.epochs {
        cfg.case.train.epochs = v;
    }
    let seed = a.seed.or(cfg.dataset_seed).ok_or_else(|| {
        Error::Config("give --seed or `[case] seed` in the config file".into())
    })?;
    let out = a
        .out
        .clone()
        .or(cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("give --out or `[output] dir`".into()))?;
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let dataset = a.dataset.as_deref().map(Dataset::read).transpose()?;
    log.say(format!(
        "running {} ({} epochs) into {}",
        cfg.case.dataset.case,
        cfg.case.train.epochs,
        out.display()
    ));
    let outcome = run_case(&cfg.case, seed, dataset, &out)?;
    for (n, r) in outcome.report.names.iter().zip(&outcome.report.rmse) {
        println!("{n} {}", fmt_f64(*r));
    }
    Ok(())
}
