//! Fully connected network with sigmoid hidden layers and an affine output
//! layer, trained by mini-batch back-propagation on a sum-of-squares cost.
//!
//! The same network type serves as the characterizer (features to log film
//! parameters) and as the denoising autoencoder (noisy features to clean
//! features). Inputs are standardized with statistics stored in the model; the
//! autoencoder also works on standardized targets and maps its output back.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seeding::{self, stream};
use crate::textio::{self, fmt_f64, parse_f64};

const MAGIC: &str = "casimir-mlp v1";

/// Layer sizes from input to output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArch {
    sizes: Vec<usize>,
}

impl MlpArch {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 3 || sizes.contains(&0) {
            return Err(Error::Config(format!(
                "architecture needs input, at least one hidden layer and output, all non-empty (got {sizes:?})"
            )));
        }
        Ok(MlpArch { sizes })
    }

    /// Three hidden layers of 20 units.
    pub fn characterizer(inputs: usize, outputs: usize) -> Self {
        MlpArch::new(vec![inputs, 20, 20, 20, outputs]).expect("non-empty sizes")
    }

    /// `inputs → 12 → 4 → 12 → inputs`.
    pub fn autoencoder(inputs: usize) -> Self {
        MlpArch::new(vec![inputs, 12, 4, 12, inputs]).expect("non-empty sizes")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }
}

impl fmt::Display for MlpArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// Affine map `rows × cols`, weights row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn fill_zero(&mut self) {
        self.w.fill(0.0);
        self.b.fill(0.0);
    }
}

/// Per-feature affine normalization `z = (x − mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column statistics of `rows`; constant columns get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Domain("cannot fit standardization on zero rows".into()));
        };
        let n = rows.len() as f64;
        let dim = first.len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            check_len(r.len(), dim, "row")?;
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} has length {got}, expected {want}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: MlpArch,
    pub layers: Vec<Layer>,
    /// Applied to raw inputs before the first layer.
    pub input: Option<Standardizer>,
    /// Maps network outputs back to target units (autoencoder only).
    pub output: Option<Standardizer>,
    /// Free-form provenance written into the model file.
    pub meta: BTreeMap<String, String>,
}

/// Glorot-uniform weights, zero biases, no standardization.
pub fn mlp_init(arch: &MlpArch, seed: u64) -> Mlp {
    let mut rng = seeding::derived_rng(seed, &[stream::INIT]);
    let layers = arch
        .sizes
        .windows(2)
        .map(|w| {
            let (cols, rows) = (w[0], w[1]);
            let limit = (6.0 / (cols + rows) as f64).sqrt();
            let mut layer = Layer::zeros(rows, cols);
            for v in &mut layer.w {
                *v = limit * (2.0 * rng.random::<f64>() - 1.0);
            }
            layer
        })
        .collect();
    Mlp {
        arch: arch.clone(),
        layers,
        input: None,
        output: None,
        meta: BTreeMap::new(),
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Dot product with four partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Activations of every layer for one input, input first.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub activations: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least the input")
    }
}

impl Mlp {
    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    /// Forward pass in network coordinates (no standardization).
    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        check_len(x.len(), self.arch.inputs(), "input")?;
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().expect("non-empty");
            let next = (0..layer.rows)
                .map(|i| {
                    let z = layer.b[i] + dot(&layer.w[i * layer.cols..(i + 1) * layer.cols], prev);
                    if l == last {
                        z
                    } else {
                        sigmoid(z)
                    }
                })
                .collect();
            acts.push(next);
        }
        Ok(Forward { activations: acts })
    }

    /// Raw features in, target units out.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(x.len(), self.arch.inputs(), "input")?;
        let z = match &self.input {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        };
        let out = self.forward(&z)?.output().to_vec();
        Ok(match &self.output {
            Some(s) => s.invert(&out),
            None => out,
        })
    }

    pub fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// Weights then biases of each layer, in layer order.
    pub fn params_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len(flat.len(), self.param_count(), "parameter vector")?;
        let mut k = 0;
        for layer in &mut self.layers {
            for v in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    fn max_abs_diff(&self, other: &[Layer]) -> f64 {
        self.layers
            .iter()
            .zip(other)
            .flat_map(|(a, b)| {
                a.w.iter()
                    .zip(&b.w)
                    .chain(a.b.iter().zip(&b.b))
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.w.iter().chain(&l.b).copied())
        .collect()
}

/// Which pair of vectors the sum of squares compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// Network output against log film parameters.
    LogTargetSse,
    /// Network output against the clean version of its input.
    ReconstructionSse,
}

impl CostKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostKind::LogTargetSse => "log-target-sse",
            CostKind::ReconstructionSse => "reconstruction-sse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "log-target-sse" => Ok(CostKind::LogTargetSse),
            "reconstruction-sse" => Ok(CostKind::ReconstructionSse),
            other => Err(Error::Config(format!("unknown cost kind `{other}`"))),
        }
    }
}

/// Gradient of the cost with the same shapes as the network layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

/// Buffers for one mini-batch, laid out sample-major.
struct Workspace {
    m: usize,
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    grads: Vec<Layer>,
}

impl Workspace {
    fn new(arch: &MlpArch, m: usize) -> Self {
        Workspace {
            m,
            acts: arch.sizes.iter().map(|&n| vec![0.0; n * m]).collect(),
            deltas: arch.sizes.iter().map(|&n| vec![0.0; n * m]).collect(),
            grads: arch.sizes.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect(),
        }
    }

    fn forward(&mut self, layers: &[Layer]) {
        let last = layers.len() - 1;
        for (l, layer) in layers.iter().enumerate() {
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let prev = &head[l];
            let next = &mut tail[0];
            for s in 0..self.m {
                let a = &prev[s * layer.cols..(s + 1) * layer.cols];
                let out = &mut next[s * layer.rows..(s + 1) * layer.rows];
                for (i, o) in out.iter_mut().enumerate() {
                    let z = layer.b[i] + dot(&layer.w[i * layer.cols..(i + 1) * layer.cols], a);
                    *o = if l == last { z } else { sigmoid(z) };
                }
            }
        }
    }

    /// Back-propagates `E = Σ (ŷ − y)²` against `targets` (sample-major);
    /// leaves the summed gradient in `grads` and returns `E`.
    fn backward(&mut self, layers: &[Layer], targets: &[f64]) -> f64 {
        let n_layers = layers.len();
        let out = &self.acts[n_layers];
        let delta = &mut self.deltas[n_layers];
        let mut cost = 0.0;
        for ((d, o), t) in delta.iter_mut().zip(out).zip(targets) {
            let r = o - t;
            cost += r * r;
            *d = 2.0 * r;
        }
        for g in &mut self.grads {
            g.fill_zero();
        }
        for l in (0..n_layers).rev() {
            let layer = &layers[l];
            let grad = &mut self.grads[l];
            let (dlo, dhi) = self.deltas.split_at_mut(l + 1);
            let delta = &dhi[0];
            let prev_act = &self.acts[l];
            let back = l > 0;
            let prev_delta = &mut dlo[l];
            if back {
                prev_delta.fill(0.0);
            }
            for s in 0..self.m {
                let a = &prev_act[s * layer.cols..(s + 1) * layer.cols];
                let ds = &delta[s * layer.rows..(s + 1) * layer.rows];
                for (i, &d) in ds.iter().enumerate() {
                    axpy(d, a, &mut grad.w[i * layer.cols..(i + 1) * layer.cols]);
                    grad.b[i] += d;
                }
                if back {
                    let pd = &mut prev_delta[s * layer.cols..(s + 1) * layer.cols];
                    for (i, &d) in ds.iter().enumerate() {
                        axpy(d, &layer.w[i * layer.cols..(i + 1) * layer.cols], pd);
                    }
                    for (p, &av) in pd.iter_mut().zip(a) {
                        *p *= av * (1.0 - av);
                    }
                }
            }
        }
        cost
    }

    fn load_inputs(&mut self, rows: impl Iterator<Item = impl AsRef<[f64]>>) {
        let buf = &mut self.acts[0];
        let mut k = 0;
        for r in rows {
            let r = r.as_ref();
            buf[k..k + r.len()].copy_from_slice(r);
            k += r.len();
        }
    }
}

fn check_batch(mlp: &Mlp, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} targets",
            xs.len(),
            ys.len()
        )));
    }
    for (x, y) in xs.iter().zip(ys) {
        check_len(x.len(), mlp.arch.inputs(), "input")?;
        check_len(y.len(), mlp.arch.outputs(), "target")?;
    }
    Ok(())
}

/// Sum over the batch of `‖network(x) − y‖²`, in network coordinates.
pub fn sse(mlp: &Mlp, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
    check_batch(mlp, xs, ys)?;
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let f = mlp.forward(x)?;
        total += f
            .output()
            .iter()
            .zip(y)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();
    }
    Ok(total)
}

/// Gradient of [`sse`] with respect to every weight and bias.
pub fn backprop_grad(
    mlp: &Mlp,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    cost: CostKind,
) -> Result<Gradients> {
    check_batch(mlp, xs, ys)?;
    if cost == CostKind::ReconstructionSse && mlp.arch.inputs() != mlp.arch.outputs() {
        return Err(Error::Shape(format!(
            "reconstruction cost needs equal input and output sizes, arch is {}",
            mlp.arch
        )));
    }
    let mut ws = Workspace::new(&mlp.arch, xs.len());
    ws.load_inputs(xs.iter());
    ws.forward(&mlp.layers);
    let targets: Vec<f64> = ys.iter().flatten().copied().collect();
    ws.backward(&mlp.layers, &targets);
    Ok(Gradients { layers: ws.grads })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub cost: CostKind,
    /// Stop once the largest weight change over an epoch falls below this.
    pub early_stop: Option<f64>,
    /// Standard deviation of Gaussian noise added to raw inputs at every
    /// presentation (denoising training).
    pub input_noise: f64,
}

impl TrainConfig {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be ≥ 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::Config(format!(
                "batch size must lie in 1..={n_train}, got {}",
                self.batch_size
            )));
        }
        if !(self.input_noise >= 0.0 && self.input_noise.is_finite()) {
            return Err(Error::Config("input noise must be ≥ 0".into()));
        }
        if let Some(tol) = self.early_stop {
            if !(tol > 0.0) {
                return Err(Error::Config("early-stop tolerance must be positive".into()));
            }
        }
        Ok(())
    }

    /// Digest of every setting, recorded in model files.
    pub fn digest(&self) -> String {
        textio::digest(&format!(
            "lr={} epochs={} batch={} seed={} cost={} early_stop={:?} noise={}",
            fmt_f64(self.learning_rate),
            self.epochs,
            self.batch_size,
            self.seed,
            self.cost.as_str(),
            self.early_stop.map(fmt_f64),
            fmt_f64(self.input_noise)
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-sample cost over each epoch's updates.
    pub loss_history: Vec<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Mini-batch SGD: each epoch shuffles the training set and performs
/// `⌊N/M⌋` updates `w ← w − η·∇E/M`.
///
/// `inputs` are raw features; `targets` are in target units and pass through
/// `mlp.output` when it is set. Deterministic given `cfg.seed`.
pub fn train(
    mlp: &mut Mlp,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    check_batch(mlp, inputs, targets)?;
    cfg.validate(inputs.len())?;
    if cfg.cost == CostKind::ReconstructionSse && mlp.arch.inputs() != mlp.arch.outputs() {
        return Err(Error::Shape(format!(
            "reconstruction cost needs equal input and output sizes, arch is {}",
            mlp.arch
        )));
    }
    let input_std = mlp
        .input
        .clone()
        .unwrap_or_else(|| Standardizer::identity(mlp.arch.inputs()));
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| input_std.apply(x)).collect();
    let ys: Vec<Vec<f64>> = match &mlp.output {
        Some(s) => targets.iter().map(|y| s.apply(y)).collect(),
        None => targets.to_vec(),
    };
    let noise_scale: Vec<f64> = input_std.std.iter().map(|s| cfg.input_noise / s).collect();

    let n = xs.len();
    let m = cfg.batch_size;
    let updates = n / m;
    let step = cfg.learning_rate / m as f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_rng = seeding::derived_rng(cfg.seed, &[stream::BATCHES]);
    let mut noise_rng = seeding::derived_rng(cfg.seed, &[stream::PRESENTATION_NOISE]);
    let mut ws = Workspace::new(&mlp.arch, m);
    let mut target_buf = vec![0.0; m * mlp.arch.outputs()];
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut snapshot = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        if cfg.early_stop.is_some() {
            snapshot.clone_from(&mlp.layers);
        }
        order.shuffle(&mut batch_rng);
        let mut epoch_cost = 0.0;
        for chunk in order.chunks_exact(m).take(updates) {
            ws.load_inputs(chunk.iter().map(|&i| &xs[i]));
            if cfg.input_noise > 0.0 {
                for row in ws.acts[0].chunks_exact_mut(noise_scale.len()) {
                    for (v, s) in row.iter_mut().zip(&noise_scale) {
                        let g: f64 = StandardNormal.sample(&mut noise_rng);
                        *v += s * g;
                    }
                }
            }
            let width = ys[0].len();
            for (k, &i) in chunk.iter().enumerate() {
                target_buf[k * width..(k + 1) * width].copy_from_slice(&ys[i]);
            }
            ws.forward(&mlp.layers);
            epoch_cost += ws.backward(&mlp.layers, &target_buf);
            for (layer, g) in mlp.layers.iter_mut().zip(&ws.grads) {
                axpy(-step, &g.w, &mut layer.w);
                axpy(-step, &g.b, &mut layer.b);
            }
        }
        let mean = epoch_cost / (updates * m) as f64;
        if !mean.is_finite() {
            let partial = history.last().copied().unwrap_or(f64::NAN);
            return Err(Error::numeric(
                format!(
                    "training loss became non-finite in epoch {}; the learning rate {} is likely too high",
                    epoch + 1,
                    cfg.learning_rate
                ),
                partial,
                epoch,
            ));
        }
        history.push(mean);
        if let Some(tol) = cfg.early_stop {
            if mlp.max_abs_diff(&snapshot) < tol {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainReport {
        epochs_run: history.len(),
        loss_history: history,
        stopped_early,
    })
}

/// Per-output RMSE over a test set, with the `(true, predicted)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub names: Vec<String>,
    pub rmse: Vec<f64>,
    /// `pairs[l]` holds `(true, predicted)` for output `l`, one per sample.
    pub pairs: Vec<Vec<(f64, f64)>>,
}

impl EvalReport {
    pub fn rmse_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.rmse[i])
    }
}

/// Compares `mlp.predict(x)` with `y` output by output.
pub fn evaluate_rmse(
    mlp: &Mlp,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    names: &[String],
) -> Result<EvalReport> {
    check_batch(mlp, inputs, targets)?;
    check_len(names.len(), mlp.arch.outputs(), "output name list")?;
    let mut pairs = vec![Vec::with_capacity(inputs.len()); names.len()];
    for (x, y) in inputs.iter().zip(targets) {
        let p = mlp.predict(x)?;
        for (l, slot) in pairs.iter_mut().enumerate() {
            slot.push((y[l], p[l]));
        }
    }
    let rmse = pairs
        .iter()
        .map(|ps| {
            (ps.iter().map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / ps.len() as f64).sqrt()
        })
        .collect();
    Ok(EvalReport {
        names: names.to_vec(),
        rmse,
        pairs,
    })
}

/// Sample Pearson correlation; `NaN` when either side is constant.
pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (ma, mb) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

impl Mlp {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "# tool={}", textio::TOOL_VERSION);
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k}={v}");
        }
        let sizes: Vec<String> = self.arch.sizes.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "arch {}", sizes.join(" "));
        for (name, st) in [("input", &self.input), ("output", &self.output)] {
            match st {
                Some(st) => {
                    let _ = writeln!(s, "{name}_mean {}", textio::fmt_f64_list(&st.mean, " "));
                    let _ = writeln!(s, "{name}_std {}", textio::fmt_f64_list(&st.std, " "));
                }
                None => {
                    let _ = writeln!(s, "{name} none");
                }
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let _ = writeln!(s, "layer {} {} {}", l + 1, layer.rows, layer.cols);
            for row in layer.w.chunks_exact(layer.cols) {
                let _ = writeln!(s, "w {}", textio::fmt_f64_list(row, " "));
            }
            let _ = writeln!(s, "b {}", textio::fmt_f64_list(&layer.b, " "));
        }
        s.push_str("end\n");
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        textio::write_file(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&textio::read_file(path)?, &path.display().to_string())
    }

    /// Reads a model and insists on `expected` as its architecture.
    pub fn read_expecting(path: &Path, expected: &MlpArch) -> Result<Self> {
        let mlp = Self::read(path)?;
        if &mlp.arch != expected {
            return Err(Error::Shape(format!(
                "model {} has architecture {}, expected {}",
                path.display(),
                mlp.arch,
                expected
            )));
        }
        Ok(mlp)
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.starts_with('#') && !l.is_empty());
        let eof = |what: &str| Error::parse(source, text.lines().count(), format!("unexpected end of file, expected {what}"));
        match lines.next() {
            Some((_, MAGIC)) => {}
            Some((no, other)) => {
                return Err(Error::parse(
                    source,
                    no,
                    format!("expected `{MAGIC}`, found `{other}`"),
                ))
            }
            None => return Err(eof(MAGIC)),
        }
        let mut meta = BTreeMap::new();
        let (mut no, mut line) = lines.next().ok_or_else(|| eof("arch"))?;
        while let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = textio::split_key_value(rest)
                .ok_or_else(|| Error::parse(source, no, "meta line is not key=value"))?;
            meta.insert(k.to_string(), v.to_string());
            (no, line) = lines.next().ok_or_else(|| eof("arch"))?;
        }
        let sizes = line
            .strip_prefix("arch ")
            .ok_or_else(|| Error::parse(source, no, "expected `arch` line"))?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| Error::parse(source, no, "bad layer size")))
            .collect::<Result<Vec<_>>>()?;
        let arch = MlpArch::new(sizes).map_err(|e| Error::parse(source, no, e.to_string()))?;

        let mut numbers = |key: &str, len: usize| -> Result<Option<Vec<f64>>> {
            let (no, line) = lines.next().ok_or_else(|| eof(key))?;
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            if head != key {
                if key.ends_with("_mean") && line == format!("{} none", &key[..key.len() - 5]) {
                    return Ok(None);
                }
                return Err(Error::parse(source, no, format!("expected `{key}`, found `{head}`")));
            }
            let vals = parts.map(|t| parse_f64(t, source, no)).collect::<Result<Vec<_>>>()?;
            if vals.len() != len {
                return Err(Error::parse(
                    source,
                    no,
                    format!("`{key}` has {} values, expected {len}", vals.len()),
                ));
            }
            Ok(Some(vals))
        };
        let mut standardizer = |name: &str, dim: usize| -> Result<Option<Standardizer>> {
            match numbers(&format!("{name}_mean"), dim)? {
                None => Ok(None),
                Some(mean) => {
                    let std = numbers(&format!("{name}_std"), dim)?.expect("std follows mean");
                    Ok(Some(Standardizer { mean, std }))
                }
            }
        };
        let input = standardizer("input", arch.inputs())?;
        let output = standardizer("output", arch.outputs())?;

        let mut layers = Vec::new();
        for (l, w) in arch.sizes.windows(2).enumerate() {
            let (rows, cols) = (w[1], w[0]);
            let (no, line) = lines.next().ok_or_else(|| eof("layer"))?;
            let expect = format!("layer {} {rows} {cols}", l + 1);
            if line != expect {
                return Err(Error::Shape(format!(
                    "{source}:{no}: found `{line}` where architecture {arch} requires `{expect}`"
                )));
            }
            let mut layer = Layer::zeros(rows, cols);
            for r in 0..rows {
                let row = numbers_line(&mut lines, "w", cols, source, text)?;
                layer.w[r * cols..(r + 1) * cols].copy_from_slice(&row);
            }
            layer.b = numbers_line(&mut lines, "b", rows, source, text)?;
            layers.push(layer);
        }
        match lines.next() {
            Some((_, "end")) => {}
            Some((no, other)) => {
                return Err(Error::parse(source, no, format!("expected `end`, found `{other}`")))
            }
            None => return Err(eof("end")),
        }
        let mlp = Mlp {
            arch,
            layers,
            input,
            output,
            meta,
        };
        if !mlp.params_flat().iter().all(|v| v.is_finite()) {
            return Err(Error::parse(source, 0, "non-finite weight"));
        }
        Ok(mlp)
    }
}

fn numbers_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
    len: usize,
    source: &str,
    text: &str,
) -> Result<Vec<f64>> {
    let (no, line) = lines.next().ok_or_else(|| {
        Error::parse(source, text.lines().count(), format!("unexpected end of file, expected `{key}` row"))
    })?;
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::parse(source, no, format!("expected `{key}` row")))?;
    let vals = rest
        .split_whitespace()
        .map(|t| parse_f64(t, source, no))
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != len {
        return Err(Error::parse(
            source,
            no,
            format!("`{key}` row has {} values, expected {len}", vals.len()),
        ));
    }
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_rows(n: usize, dim: usize, seed: u64, scale: f64) -> Vec<Vec<f64>> {
        let mut rng = seeding::rng_from(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect())
            .collect()
    }

    #[test]
    fn arch_validation_and_counts() {
        assert!(MlpArch::new(vec![20, 13]).is_err());
        assert!(MlpArch::new(vec![20, 0, 13]).is_err());
        assert_eq!(MlpArch::characterizer(20, 13).param_count(), 1533);
        assert_eq!(MlpArch::autoencoder(20).to_string(), "20-12-4-12-20");
    }

    #[test]
    fn init_is_seeded_glorot_with_zero_bias() {
        let arch = MlpArch::characterizer(20, 13);
        let a = mlp_init(&arch, 1);
        assert_eq!(a, mlp_init(&arch, 1));
        assert_ne!(a.layers[0].w, mlp_init(&arch, 2).layers[0].w);
        for layer in &a.layers {
            let limit = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
            assert!(layer.w.iter().all(|w| w.abs() <= limit));
            assert!(layer.b.iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.params_flat().len(), 1533);
    }

    #[test]
    fn forward_closed_forms() {
        let mut zero = mlp_init(&MlpArch::new(vec![3, 4, 2]).unwrap(), 0);
        zero.set_params_flat(&vec![0.0; zero.param_count()]).unwrap();
        let f = zero.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert!(f.activations[1].iter().all(|&a| a == 0.5));
        assert_eq!(f.output(), &[0.0, 0.0]);

        let mut tiny = mlp_init(&MlpArch::new(vec![1, 1, 1]).unwrap(), 0);
        tiny.set_params_flat(&[0.0, 0.0, 3.0, 1.0]).unwrap();
        for x in [-5.0, 0.0, 7.0] {
            assert_eq!(tiny.forward(&[x]).unwrap().output(), &[2.5]);
        }
        assert!(matches!(tiny.forward(&[1.0, 2.0]), Err(Error::Domain(_))));
    }

    fn finite_difference_check(mlp: &Mlp, xs: &[Vec<f64>], ys: &[Vec<f64>], cost: CostKind) {
        let grad = backprop_grad(mlp, xs, ys, cost).unwrap().flat();
        let base = mlp.params_flat();
        let mut probe = mlp.clone();
        let h = 1e-6;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + h;
            probe.set_params_flat(&p).unwrap();
            let up = sse(&probe, xs, ys).unwrap();
            p[k] = base[k] - h;
            probe.set_params_flat(&p).unwrap();
            let down = sse(&probe, xs, ys).unwrap();
            let fd = (up - down) / (2.0 * h);
            if grad[k].abs() > 1e-8 {
                let rel = (fd - grad[k]).abs() / grad[k].abs().max(fd.abs());
                assert!(rel < 1e-5, "param {k}: backprop {} vs fd {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mlp = mlp_init(&MlpArch::new(vec![20, 8, 13]).unwrap(), 3);
        let xs = random_rows(5, 20, 4, 1.0);
        let ys = random_rows(5, 13, 5, 2.0);
        finite_difference_check(&mlp, &xs, &ys, CostKind::LogTargetSse);
        let ae = mlp_init(&MlpArch::new(vec![6, 3, 6]).unwrap(), 3);
        let xs = random_rows(4, 6, 6, 1.0);
        finite_difference_check(&ae, &xs, &xs, CostKind::ReconstructionSse);
    }

    #[test]
    fn gradient_vanishes_at_fit_and_scales_with_duplicates() {
        let mlp = mlp_init(&MlpArch::new(vec![4, 5, 3]).unwrap(), 9);
        let xs = random_rows(3, 4, 1, 1.0);
        let fit: Vec<Vec<f64>> = xs.iter().map(|x| mlp.forward(x).unwrap().output().to_vec()).collect();
        let g = backprop_grad(&mlp, &xs, &fit, CostKind::LogTargetSse).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));

        let ys = random_rows(3, 3, 2, 1.0);
        let single = backprop_grad(&mlp, &xs, &ys, CostKind::LogTargetSse).unwrap().flat();
        let xs2: Vec<_> = xs.iter().chain(&xs).cloned().collect();
        let ys2: Vec<_> = ys.iter().chain(&ys).cloned().collect();
        let double = backprop_grad(&mlp, &xs2, &ys2, CostKind::LogTargetSse).unwrap().flat();
        for (a, b) in single.iter().zip(&double) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-12, epsilon = 1e-15);
        }
        assert!(backprop_grad(&mlp, &[], &[], CostKind::LogTargetSse).is_err());
        assert!(backprop_grad(&mlp, &xs, &ys, CostKind::ReconstructionSse).is_err());
    }

    fn cfg(lr: f64, epochs: usize, batch: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            epochs,
            batch_size: batch,
            seed: 1,
            cost: CostKind::LogTargetSse,
            early_stop: None,
            input_noise: 0.0,
        }
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut mlp = mlp_init(&MlpArch::new(vec![3, 4, 1]).unwrap(), 2);
        let before = mlp.clone();
        let xs = random_rows(10, 3, 1, 1.0);
        let ys = random_rows(10, 1, 2, 1.0);
        let rep = train(&mut mlp, &xs, &ys, &cfg(0.0, 5, 5)).unwrap();
        assert_eq!(mlp, before);
        assert!(rep.loss_history.windows(2).all(|w| w[0] == w[1]));
        let rep = train(&mut mlp, &xs, &ys, &cfg(0.1, 0, 5)).unwrap();
        assert_eq!((rep.epochs_run, mlp == before), (0, true));
    }

    #[test]
    fn learns_a_constant_target() {
        let mut mlp = mlp_init(&MlpArch::new(vec![1, 2, 1]).unwrap(), 4);
        let xs = random_rows(20, 1, 3, 1.0);
        let ys = vec![vec![0.7]; 20];
        // 20 samples in batches of 10: 2 updates per epoch, 10^4 updates
        train(&mut mlp, &xs, &ys, &cfg(0.5, 5000, 10)).unwrap();
        let e = sse(&mlp, &xs, &ys).unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn training_is_deterministic_and_stops_early() {
        let xs = random_rows(30, 3, 1, 1.0);
        let ys = random_rows(30, 2, 2, 1.0);
        let arch = MlpArch::new(vec![3, 5, 2]).unwrap();
        let run = |c: &TrainConfig| {
            let mut m = mlp_init(&arch, 7);
            let r = train(&mut m, &xs, &ys, c).unwrap();
            (m, r)
        };
        let mut c = cfg(0.1, 50, 7);
        c.input_noise = 0.1;
        assert_eq!(run(&c), run(&c));
        c.early_stop = Some(1.0);
        let (_, r) = run(&c);
        assert!(r.stopped_early && r.epochs_run == 1);
    }

    #[test]
    fn divergence_is_a_numeric_error() {
        let mut mlp = mlp_init(&MlpArch::new(vec![2, 3, 1]).unwrap(), 4);
        let xs = random_rows(10, 2, 3, 1.0);
        let ys = vec![vec![1e3]; 10];
        let err = train(&mut mlp, &xs, &ys, &cfg(1e3, 100, 5)).unwrap_err();
        assert!(err.is_numeric(), "{err}");
    }

    #[test]
    fn rmse_closed_forms() {
        let mut mlp = mlp_init(&MlpArch::new(vec![1, 2, 2]).unwrap(), 0);
        mlp.set_params_flat(&vec![0.0; mlp.param_count()]).unwrap();
        let xs = vec![vec![0.0]; 4];
        let names = vec!["a".to_string(), "b".to_string()];
        let exact = evaluate_rmse(&mlp, &xs, &vec![vec![0.0, 0.0]; 4], &names).unwrap();
        assert_eq!(exact.rmse, vec![0.0, 0.0]);
        assert_eq!(exact.pairs[0].len(), 4);
        let off = evaluate_rmse(&mlp, &xs, &vec![vec![1.0, 0.0]; 4], &names).unwrap();
        assert_eq!(off.rmse_of("a"), Some(1.0));
        assert_eq!(off.rmse_of("b"), Some(0.0));
        assert_relative_eq!(pearson(&[(1.0, 2.0), (2.0, 4.1), (3.0, 6.0)]), 0.9996, epsilon = 1e-3);
    }

    #[test]
    fn standardizer_roundtrip() {
        let rows = random_rows(50, 4, 8, 5.0);
        let st = Standardizer::fit(&rows).unwrap();
        let z = st.apply(&rows[3]);
        for (a, b) in st.invert(&z).iter().zip(&rows[3]) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        let constant = Standardizer::fit(&[vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(constant.std, vec![1.0]);
    }

    #[test]
    fn model_text_roundtrip_and_errors() {
        let mut mlp = mlp_init(&MlpArch::autoencoder(20), 5);
        let rows = random_rows(10, 20, 1, 3.0);
        mlp.input = Some(Standardizer::fit(&rows).unwrap());
        mlp.output = mlp.input.clone();
        mlp.meta.insert("case".into(), "silicon".into());
        let text = mlp.to_text();
        let back = Mlp::parse(&text, "m").unwrap();
        assert_eq!(back, mlp);
        for x in random_rows(100, 20, 2, 1.0) {
            assert_eq!(back.predict(&x).unwrap(), mlp.predict(&x).unwrap());
        }
        let cut: String = text.lines().take(20).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Mlp::parse(&cut, "m"), Err(Error::Parse { .. })));
        let bad_magic = text.replacen("v1", "v9", 1);
        assert!(Mlp::parse(&bad_magic, "m").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ae.model");
        mlp.write(&path).unwrap();
        let err = Mlp::read_expecting(&path, &MlpArch::characterizer(20, 2)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("20-12-4-12-20") && msg.contains("20-20-20-20-2"), "{msg}");
    }
}
