//! End-to-end experiments: generate or load a dataset, train the
//! characterizer, evaluate it, train the denoiser, and turn network outputs
//! back into films and permittivity spectra.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cases::CaseTag;
use crate::dataset::{generate_dataset, split_dataset, Dataset, DatasetConfig, TargetSchema};
use crate::error::{Error, Result};
use crate::materials::{param_name, FilmSample, LorentzDrudeModel, ParamRange, SamplingRanges};
use crate::neuralnet::{
    evaluate_rmse, mlp_init, train, CostKind, EvalReport, Mlp, MlpArch, Standardizer,
    TrainConfig, TrainReport,
};
use crate::textio::{self, fmt_f64};

/// Noise level of the denoising experiment.
pub const DENOISE_SIGMA: f64 = 0.02;

/// Default spectrum grid: 400 log-spaced points over `[1e14, 1e17]` rad/s.
pub fn default_omega_grid() -> Vec<f64> {
    log_grid(1e14, 1e17, 400)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| lo * (step * i as f64).exp()).collect();
    grid[n - 1] = hi;
    grid
}

/// Characterizer experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseConfig {
    pub dataset: DatasetConfig,
    /// Training part size; the rest is the test part.
    pub n_train: usize,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Standardize features with training-part statistics.
    pub standardize_inputs: bool,
}

impl CaseConfig {
    /// Published settings of `case` (full epoch budget).
    pub fn preset(case: CaseTag) -> Self {
        CaseConfig {
            dataset: DatasetConfig::for_case(case),
            n_train: case.sizes().1,
            hidden: vec![20, 20, 20],
            train: TrainConfig {
                learning_rate: 0.1,
                epochs: case.epochs(),
                batch_size: 200,
                seed: 0,
                cost: CostKind::LogTargetSse,
                early_stop: None,
                input_noise: 0.0,
            },
            standardize_inputs: true,
        }
    }

    pub fn arch(&self) -> Result<MlpArch> {
        let mut sizes = vec![self.dataset.grid.len()];
        sizes.extend(&self.hidden);
        sizes.push(self.dataset.schema().len());
        MlpArch::new(sizes)
    }
}

/// Denoising autoencoder settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            hidden: vec![12, 4, 12],
            train: TrainConfig {
                learning_rate: 0.004,
                epochs: 1_000_000,
                batch_size: 200,
                seed: 0,
                cost: CostKind::ReconstructionSse,
                early_stop: None,
                input_noise: DENOISE_SIGMA,
            },
        }
    }
}

pub fn grid_tag(ds: &DatasetConfig) -> String {
    format!(
        "{}:{}:{}",
        fmt_f64(ds.grid.d_min()),
        fmt_f64(ds.grid.d_max()),
        ds.grid.len()
    )
}

/// Trains a characterizer on `train_part`.
pub fn train_characterizer(
    cfg: &CaseConfig,
    train_part: &Dataset,
) -> Result<(Mlp, TrainReport)> {
    let xs = train_part.features();
    let ys = train_part.targets();
    let mut mlp = mlp_init(&cfg.arch()?, cfg.train.seed);
    if cfg.standardize_inputs {
        mlp.input = Some(Standardizer::fit(&xs)?);
    }
    let ds = &train_part.config;
    let meta = [
        ("kind", "characterizer".to_string()),
        ("case", ds.case.to_string()),
        ("grid", grid_tag(ds)),
        ("schema", ds.schema().names().join(",")),
        ("dataset_seed", train_part.master_seed.to_string()),
        ("dataset_digest", train_part.config_digest()),
        ("n_train", train_part.len().to_string()),
        ("train_digest", cfg.train.digest()),
        ("epochs", cfg.train.epochs.to_string()),
        ("learning_rate", fmt_f64(cfg.train.learning_rate)),
        ("batch_size", cfg.train.batch_size.to_string()),
        ("train_seed", cfg.train.seed.to_string()),
    ];
    for (k, v) in meta {
        mlp.meta.insert(k.to_string(), v);
    }
    let report = train(&mut mlp, &xs, &ys, &cfg.train)?;
    Ok((mlp, report))
}

/// Film reconstructed from a network output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedFilm {
    pub sample: FilmSample,
    /// Dataset index of the incidence the features came from, if any.
    pub source: Option<usize>,
}

/// Exponentiates the network output, restores units, and fills fixed and tied
/// parameters from `ranges`.
pub fn predict_film(mlp: &Mlp, ranges: &SamplingRanges, x: &[f64]) -> Result<PredictedFilm> {
    let schema = TargetSchema::from_ranges(ranges);
    if mlp.arch().outputs() != schema.len() {
        return Err(Error::Config(format!(
            "model predicts {} parameters but the ranges have {} free ones",
            mlp.arch().outputs(),
            schema.len()
        )));
    }
    let y = mlp.predict(x)?;
    let mut independent: Vec<f64> = ranges
        .params()
        .iter()
        .map(|r| match *r {
            ParamRange::Interval { lo, .. } => lo,
            ParamRange::Tied { .. } => 0.0,
        })
        .collect();
    for (slot, &i) in schema.indices().iter().enumerate() {
        independent[i] = schema.restore(slot, y[slot]);
    }
    let sample = FilmSample::from_params(&ranges.resolve(&independent))?;
    Ok(PredictedFilm {
        sample,
        source: None,
    })
}

/// `(ω, Re ε, Im ε)`.
pub type SpectrumRow = (f64, f64, f64);

pub fn predict_spectrum(film: &LorentzDrudeModel, omegas: &[f64]) -> Result<Vec<SpectrumRow>> {
    if omegas.is_empty()
        || omegas[0] <= 0.0
        || omegas.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::Domain(
            "spectrum grid must be non-empty, positive and strictly ascending".into(),
        ));
    }
    omegas
        .iter()
        .map(|&w| film.eps_real_freq(w).map(|e| (w, e.re, e.im)))
        .collect()
}

pub fn spectrum_csv(rows: &[SpectrumRow], comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    s.push_str("omega_radps,re_eps,im_eps\n");
    for (w, re, im) in rows {
        let _ = writeln!(s, "{},{},{}", fmt_f64(*w), fmt_f64(*re), fmt_f64(*im));
    }
    s
}

/// Trains the denoising autoencoder on clean training features: inputs get
/// fresh noise at every presentation, targets are the clean features.
pub fn train_denoiser(train_x: &[Vec<f64>], cfg: &DenoiserConfig) -> Result<(Mlp, TrainReport)> {
    let Some(first) = train_x.first() else {
        return Err(Error::Domain("no training features".into()));
    };
    let dim = first.len();
    let mut sizes = vec![dim];
    sizes.extend(&cfg.hidden);
    sizes.push(dim);
    let mut train_cfg = cfg.train.clone();
    train_cfg.cost = CostKind::ReconstructionSse;
    let mut ae = mlp_init(&MlpArch::new(sizes)?, train_cfg.seed);
    // Outputs are only centered so that the cost stays in feature units.
    let st = Standardizer::fit(train_x)?;
    ae.output = Some(Standardizer {
        mean: st.mean.clone(),
        std: vec![1.0; dim],
    });
    ae.input = Some(st);
    let meta = [
        ("kind", "denoiser".to_string()),
        ("noise_sigma", fmt_f64(train_cfg.input_noise)),
        ("train_digest", train_cfg.digest()),
        ("epochs", train_cfg.epochs.to_string()),
        ("learning_rate", fmt_f64(train_cfg.learning_rate)),
        ("batch_size", train_cfg.batch_size.to_string()),
        ("train_seed", train_cfg.seed.to_string()),
    ];
    for (k, v) in meta {
        ae.meta.insert(k.to_string(), v);
    }
    let report = train(&mut ae, train_x, train_x, &train_cfg)?;
    Ok((ae, report))
}

/// Autoencoder pass on raw features.
pub fn denoise(ae: &Mlp, x_noisy: &[f64]) -> Result<Vec<f64>> {
    ae.predict(x_noisy)
}

/// Denoise, then characterize. Both models must come from the same gap grid.
pub fn end_to_end(
    ae: &Mlp,
    mlp: &Mlp,
    ranges: &SamplingRanges,
    x_noisy: &[f64],
) -> Result<PredictedFilm> {
    if let (Some(a), Some(b)) = (ae.meta.get("grid"), mlp.meta.get("grid")) {
        if a != b {
            return Err(Error::Config(format!(
                "denoiser grid {a} differs from characterizer grid {b}"
            )));
        }
    }
    if ae.arch().outputs() != mlp.arch().inputs() {
        return Err(Error::Config(format!(
            "denoiser emits {} features, characterizer expects {}",
            ae.arch().outputs(),
            mlp.arch().inputs()
        )));
    }
    predict_film(mlp, ranges, &denoise(ae, x_noisy)?)
}

/// Result of [`run_case`].
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub mlp: Mlp,
    pub report: EvalReport,
    pub training: TrainReport,
    pub files: Vec<PathBuf>,
}

/// Writes files into a directory and deletes them again unless committed.
struct Artifacts {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        textio::write_file(&path, contents.as_bytes())?;
        self.written.push(path);
        Ok(())
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

pub fn report_csv(report: &EvalReport, comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    s.push_str("parameter,rmse\n");
    for (n, r) in report.names.iter().zip(&report.rmse) {
        let _ = writeln!(s, "{n},{}", fmt_f64(*r));
    }
    s
}

/// `(true, predicted)` of output `slot` in natural units (m, rad/s).
pub fn scatter_csv(
    report: &EvalReport,
    schema: &TargetSchema,
    slot: usize,
    comments: &[String],
) -> String {
    let mut s = String::new();
    for c in comments {
        let _ = writeln!(s, "# {c}");
    }
    s.push_str("true,predicted\n");
    for (t, p) in &report.pairs[slot] {
        let _ = writeln!(
            s,
            "{},{}",
            fmt_f64(schema.restore(slot, *t)),
            fmt_f64(schema.restore(slot, *p))
        );
    }
    s
}

/// Evaluates `mlp` on `test` and writes `report.csv` and one scatter file per
/// output into `out_dir`. Returns the report and the files written.
pub fn write_evaluation(
    mlp: &Mlp,
    test: &Dataset,
    out_dir: &Path,
    comments: &[String],
) -> Result<(EvalReport, Vec<PathBuf>)> {
    let mut art = Artifacts {
        written: Vec::new(),
        committed: false,
    };
    let schema = test.schema();
    let report = evaluate_rmse(mlp, &test.features(), &test.targets(), &schema.names())?;
    art.write(out_dir.join("report.csv"), &report_csv(&report, comments))?;
    for (slot, name) in schema.names().iter().enumerate() {
        art.write(
            out_dir.join(format!("scatter_{name}.csv")),
            &scatter_csv(&report, &schema, slot, comments),
        )?;
    }
    art.committed = true;
    Ok((report, std::mem::take(&mut art.written)))
}

/// Full characterizer experiment. Generates the dataset unless one is given,
/// splits it with its own master seed, trains, evaluates on the test part and
/// writes `model`, `report.csv`, `scatter_<param>.csv`, true and predicted
/// `spectrum_<id>.csv` for the first three test incidences, and `manifest`.
/// Files already written are removed if a later step fails.
pub fn run_case(
    cfg: &CaseConfig,
    master_seed: u64,
    dataset: Option<Dataset>,
    out_dir: &Path,
) -> Result<CaseOutcome> {
    let ds = match dataset {
        Some(ds) => {
            if ds.config != cfg.dataset {
                return Err(Error::Config(
                    "supplied dataset was generated with different settings".into(),
                ));
            }
            ds
        }
        None => generate_dataset(&cfg.dataset, master_seed)?,
    };
    let (train_part, test_part) = split_dataset(&ds, cfg.n_train, ds.master_seed)?;
    let (mut mlp, training) = train_characterizer(cfg, &train_part)?;
    mlp.meta.insert("split_seed".into(), ds.master_seed.to_string());

    let mut art = Artifacts {
        written: Vec::new(),
        committed: false,
    };
    let header = vec![
        format!("tool={}", textio::TOOL_VERSION),
        format!("config_digest={}", ds.config_digest()),
    ];
    art.write(out_dir.join("dataset.csv"), &ds.to_csv())?;
    let model_text = mlp.to_text();
    art.write(out_dir.join("model"), &model_text)?;
    let (report, files) = write_evaluation(&mlp, &test_part, out_dir, &header)?;
    art.written.extend(files);

    let grid = default_omega_grid();
    for inc in test_part.incidences.iter().take(3) {
        let predicted = predict_film(&mlp, &cfg.dataset.ranges, &inc.x)?;
        for (label, film) in [("true", &inc.sample), ("pred", &predicted.sample)] {
            let rows = predict_spectrum(&film.film, &grid)?;
            let mut comments = header.clone();
            comments.push(format!("incidence={}", inc.index));
            comments.push(format!("params={}", textio::fmt_f64_list(&film.params(), " ")));
            art.write(
                out_dir.join(format!("spectrum_{}_{label}.csv", inc.index)),
                &spectrum_csv(&rows, &comments),
            )?;
        }
    }

    let mut manifest = String::new();
    let entries = [
        ("tool", textio::TOOL_VERSION.to_string()),
        ("case", cfg.dataset.case.to_string()),
        ("dataset_seed", ds.master_seed.to_string()),
        ("dataset_digest", ds.config_digest()),
        ("dataset_size", ds.len().to_string()),
        ("n_train", cfg.n_train.to_string()),
        ("arch", mlp.arch().to_string()),
        ("standardize_inputs", cfg.standardize_inputs.to_string()),
        ("learning_rate", fmt_f64(cfg.train.learning_rate)),
        ("epochs", cfg.train.epochs.to_string()),
        ("batch_size", cfg.train.batch_size.to_string()),
        ("train_seed", cfg.train.seed.to_string()),
        ("train_digest", cfg.train.digest()),
        ("model_digest", textio::digest(&model_text)),
        ("epochs_run", training.epochs_run.to_string()),
    ];
    for (k, v) in entries {
        let _ = writeln!(manifest, "{k}={v}");
    }
    for (n, r) in report.names.iter().zip(&report.rmse) {
        let _ = writeln!(manifest, "rmse.{n}={}", fmt_f64(*r));
    }
    art.write(out_dir.join("manifest"), &manifest)?;
    art.committed = true;
    Ok(CaseOutcome {
        mlp,
        report,
        training,
        files: std::mem::take(&mut art.written),
    })
}

/// Mean RMSE over the damping rates and over the resonance and plasma
/// frequencies, as `(gamma, frequency)`.
pub fn damping_vs_frequency_rmse(report: &EvalReport) -> (f64, f64) {
    let mean = |pred: &dyn Fn(&str) -> bool| {
        let v: Vec<f64> = report
            .names
            .iter()
            .zip(&report.rmse)
            .filter(|(n, _)| pred(n))
            .map(|(_, r)| *r)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    (
        mean(&|n| n.starts_with('g')),
        mean(&|n| n.starts_with('w')),
    )
}

/// Names of the flattened parameters of an `n_poles` film.
pub fn parameter_names(n_poles: usize) -> Vec<String> {
    (0..1 + 3 * n_poles).map(param_name).collect()
}
