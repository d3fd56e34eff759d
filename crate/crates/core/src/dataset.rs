//! Feature and target vectors, seeded dataset generation, splitting, noise,
//! and the dataset CSV format.
//!
//! A feature vector holds `∂P̃/∂z` (z in micrometers) on a log-spaced gap grid.
//! A target vector holds the natural log of each free film parameter, with the
//! thickness in units of 10³ m and frequencies in rad/s.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cases::CaseTag;
use crate::error::{Error, Result};
use crate::lifshitz::{FilmStack, KparScheme, LifshitzSolver, QuadratureConfig};
use crate::materials::{
    param_name, sample_film, FilmSample, ParamRange, SamplingLaw, SamplingRanges,
};
use crate::seeding::{self, stream};
use crate::textio::{self, fmt_f64, parse_f64};

/// Features per incidence.
pub const DEFAULT_GRID_POINTS: usize = 20;

/// Thickness unit inside target vectors, meters.
pub const THICKNESS_UNIT: f64 = 1e3;

/// Fresh draws tried per incidence before generation gives up.
pub const MAX_ATTEMPTS: u64 = 64;

const MAGIC: &str = "# casimir-dataset v1";

#[derive(Debug, Clone, PartialEq)]
pub struct GapGrid {
    d_min: f64,
    d_max: f64,
    gaps: Vec<f64>,
}

impl GapGrid {
    /// `count` gaps in geometric progression from `d_min` to `d_max` (meters),
    /// both endpoints exact.
    pub fn new(d_min: f64, d_max: f64, count: usize) -> Result<Self> {
        if !(d_min > 0.0 && d_max > d_min && d_max.is_finite()) || count < 2 {
            return Err(Error::Domain(format!(
                "gap grid needs 0 < d_min < d_max and at least 2 points (got {d_min:e}, {d_max:e}, {count})"
            )));
        }
        let ratio = (d_max / d_min).powf(1.0 / (count - 1) as f64);
        let mut gaps: Vec<f64> = (0..count).map(|i| d_min * ratio.powi(i as i32)).collect();
        gaps[0] = d_min;
        gaps[count - 1] = d_max;
        if gaps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("gap grid is not strictly ascending".into()));
        }
        Ok(GapGrid { d_min, d_max, gaps })
    }

    /// The 20-point grid of `case`.
    pub fn for_case(case: CaseTag) -> Self {
        let (lo, hi) = case.gap_range();
        GapGrid::new(lo, hi, DEFAULT_GRID_POINTS).expect("preset grid is valid")
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn ratio(&self) -> f64 {
        self.gaps[1] / self.gaps[0]
    }
}

/// Which flattened film parameters form the target vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSchema {
    /// Flattened indices of the free parameters, ascending.
    indices: Vec<usize>,
    n_params: usize,
}

impl TargetSchema {
    pub fn from_ranges(ranges: &SamplingRanges) -> Self {
        TargetSchema {
            indices: (0..ranges.params().len())
                .filter(|&i| ranges.params()[i].is_free())
                .collect(),
            n_params: ranges.params().len(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.indices.iter().map(|&i| param_name(i)).collect()
    }

    /// Unit of the flattened parameter `index` inside the log targets.
    pub fn unit(index: usize) -> f64 {
        if index == 0 {
            THICKNESS_UNIT
        } else {
            1.0
        }
    }

    /// Inverse of the log map for output slot `slot`: natural units (m, rad/s).
    pub fn restore(&self, slot: usize, y: f64) -> f64 {
        y.exp() * Self::unit(self.indices[slot])
    }
}

/// `ln(value / unit)` for every free parameter of `sample`.
pub fn target_vector(sample: &FilmSample, schema: &TargetSchema) -> Result<Vec<f64>> {
    let params = sample.params();
    if params.len() != schema.n_params {
        return Err(Error::Shape(format!(
            "film has {} parameters, schema expects {}",
            params.len(),
            schema.n_params
        )));
    }
    schema
        .indices
        .iter()
        .map(|&i| {
            let v = params[i];
            if v > 0.0 {
                Ok((v / TargetSchema::unit(i)).ln())
            } else {
                Err(Error::Domain(format!(
                    "free parameter {} must be positive, got {v:e}",
                    param_name(i)
                )))
            }
        })
        .collect()
}

/// `∂P̃/∂z` per µm at every grid gap.
pub fn feature_vector(
    sample: &FilmSample,
    grid: &GapGrid,
    quad: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let solver = LifshitzSolver::new(quad)?;
    features_with(&solver, &FilmStack::on_gold(sample), grid)
}

fn features_with(solver: &LifshitzSolver, stack: &FilmStack, grid: &GapGrid) -> Result<Vec<f64>> {
    grid.gaps()
        .iter()
        .map(|&d| {
            let x = solver.evaluate(stack, d)?.dnormalized_dz_um();
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::numeric(format!("non-finite feature at d = {d:e}"), x, 0))
            }
        })
        .collect()
}

/// Everything that determines a generated dataset apart from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub case: CaseTag,
    pub grid: GapGrid,
    pub ranges: SamplingRanges,
    /// Incidences to generate.
    pub size: usize,
    pub quad: QuadratureConfig,
}

impl DatasetConfig {
    pub fn for_case(case: CaseTag) -> Self {
        DatasetConfig {
            case,
            grid: GapGrid::for_case(case),
            ranges: case.ranges(),
            size: case.sizes().0,
            quad: QuadratureConfig::default(),
        }
    }

    pub fn schema(&self) -> TargetSchema {
        TargetSchema::from_ranges(&self.ranges)
    }

    fn header_entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("case".to_string(), self.case.to_string()),
            ("size".into(), self.size.to_string()),
            ("grid.d_min_m".into(), fmt_f64(self.grid.d_min)),
            ("grid.d_max_m".into(), fmt_f64(self.grid.d_max)),
            ("grid.count".into(), self.grid.len().to_string()),
            ("feature".into(), "dPnorm_dz_per_um".into()),
            ("law".into(), self.ranges.law.as_str().into()),
        ];
        for (i, r) in self.ranges.params().iter().enumerate() {
            let value = match *r {
                ParamRange::Interval { lo, hi } if lo == hi => fmt_f64(lo),
                ParamRange::Interval { lo, hi } => format!("{}:{}", fmt_f64(lo), fmt_f64(hi)),
                ParamRange::Tied { source, factor } => {
                    format!("{}*{}", fmt_f64(factor), param_name(source))
                }
            };
            out.push((format!("range.{}", param_name(i)), value));
        }
        let q = &self.quad;
        out.extend([
            ("quad.rel_tol".to_string(), fmt_f64(q.rel_tol)),
            ("quad.consecutive_small".into(), q.matsubara_consecutive_small.to_string()),
            ("quad.kpar_scheme".into(), q.kpar_scheme.as_str().into()),
            ("quad.gl_nodes".into(), q.gl_nodes.to_string()),
            ("quad.max_terms".into(), q.max_matsubara_terms.to_string()),
        ]);
        out
    }

    fn from_header(h: &Header) -> Result<Self> {
        let case: CaseTag = h.get("case")?.parse()?;
        let grid = GapGrid::new(
            h.num("grid.d_min_m")?,
            h.num("grid.d_max_m")?,
            h.int("grid.count")?,
        )?;
        let law = SamplingLaw::parse(h.get("law")?)?;
        let mut params = Vec::new();
        for i in 0.. {
            let key = format!("range.{}", param_name(i));
            let Some(text) = h.map.get(&key) else { break };
            params.push(parse_range(text, i).ok_or_else(|| {
                Error::Schema(format!("{key}: cannot read range `{text}`"))
            })?);
        }
        let quad = QuadratureConfig {
            rel_tol: h.num("quad.rel_tol")?,
            matsubara_consecutive_small: h.int("quad.consecutive_small")?,
            kpar_scheme: KparScheme::parse(h.get("quad.kpar_scheme")?)?,
            gl_nodes: h.int("quad.gl_nodes")?,
            max_matsubara_terms: h.int("quad.max_terms")?,
        };
        quad.validate()?;
        Ok(DatasetConfig {
            case,
            grid,
            ranges: SamplingRanges::new(params, law)?,
            size: h.int("size")?,
            quad,
        })
    }
}

fn parse_range(text: &str, index: usize) -> Option<ParamRange> {
    if let Some((factor, source)) = text.split_once('*') {
        let source = (0..3 * 16 + 1).find(|&j| j != index && param_name(j) == source.trim())?;
        return Some(ParamRange::Tied {
            source,
            factor: factor.trim().parse().ok()?,
        });
    }
    if let Some((lo, hi)) = text.split_once(':') {
        return Some(ParamRange::interval(lo.trim().parse().ok()?, hi.trim().parse().ok()?));
    }
    Some(ParamRange::fixed(text.trim().parse().ok()?))
}

/// One dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    /// Position in the generated dataset.
    pub index: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sample: FilmSample,
    /// Seed the film was drawn from.
    pub seed: u64,
}

/// Additive Gaussian noise applied to the features of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseInfo {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub master_seed: u64,
    pub noise: Option<NoiseInfo>,
    pub incidences: Vec<Incidence>,
}

impl Dataset {
    pub fn schema(&self) -> TargetSchema {
        self.config.schema()
    }

    pub fn len(&self) -> usize {
        self.incidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidences.is_empty()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.incidences.iter().map(|inc| inc.x.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Vec<f64>> {
        self.incidences.iter().map(|inc| inc.y.clone()).collect()
    }

    /// Metadata lines written before the rows; also what regeneration reads.
    fn header_entries(&self) -> Vec<(String, String)> {
        let mut out = vec![("seed".to_string(), self.master_seed.to_string())];
        out.extend(self.config.header_entries());
        if let Some(n) = self.noise {
            out.push(("noise.sigma".into(), fmt_f64(n.sigma)));
            out.push(("noise.seed".into(), n.seed.to_string()));
        }
        out.push(("schema".into(), self.schema().names().join(",")));
        out.push(("rows".into(), self.len().to_string()));
        out
    }

    /// Digest over the metadata that determines the file contents.
    pub fn config_digest(&self) -> String {
        let text: String = self
            .header_entries()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect();
        textio::digest(&text)
    }

    fn column_names(&self) -> Vec<String> {
        let mut cols = vec!["idx".to_string()];
        cols.extend((1..=self.config.grid.len()).map(|i| format!("X_{i}")));
        cols.extend(self.schema().names().iter().map(|n| format!("Y_{n}")));
        cols.push("t_nm".into());
        cols.extend((0..self.config.ranges.params().len()).map(param_name));
        cols.push("seed".into());
        cols
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(MAGIC);
        s.push('\n');
        let _ = writeln!(s, "# tool={}", textio::TOOL_VERSION);
        let _ = writeln!(s, "# config_digest={}", self.config_digest());
        for (k, v) in self.header_entries() {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str(&self.column_names().join(","));
        s.push('\n');
        for inc in &self.incidences {
            let params = inc.sample.params();
            let mut fields = vec![inc.index.to_string()];
            fields.extend(inc.x.iter().map(|&v| fmt_f64(v)));
            fields.extend(inc.y.iter().map(|&v| fmt_f64(v)));
            fields.push(fmt_f64(params[0] * 1e9));
            fields.extend(params.iter().map(|&v| fmt_f64(v)));
            fields.push(inc.seed.to_string());
            s.push_str(&fields.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        textio::write_file(path, self.to_csv().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = textio::read_file(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim_end() == MAGIC => {}
            _ => return Err(Error::parse(source, 1, format!("expected `{MAGIC}`"))),
        }
        let mut header = Header::default();
        let mut columns = None;
        for (no, line) in lines.by_ref() {
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = textio::split_key_value(rest)
                    .ok_or_else(|| Error::parse(source, no, "header line is not key=value"))?;
                header.map.insert(k.to_string(), v.to_string());
            } else {
                columns = Some((no, line));
                break;
            }
        }
        let Some((col_line, col_text)) = columns else {
            return Err(Error::parse(source, text.lines().count(), "missing column header"));
        };
        let config = DatasetConfig::from_header(&header)?;
        let master_seed = header.int("seed")?;
        let noise = match header.map.get("noise.sigma") {
            Some(_) => Some(NoiseInfo {
                sigma: header.num("noise.sigma")?,
                seed: header.int("noise.seed")?,
            }),
            None => None,
        };
        let mut ds = Dataset {
            config,
            master_seed,
            noise,
            incidences: Vec::new(),
        };
        let schema = ds.schema();
        if header.get("schema")? != schema.names().join(",") {
            return Err(Error::Schema(format!(
                "declared schema `{}` does not match the ranges (`{}`)",
                header.get("schema")?,
                schema.names().join(",")
            )));
        }
        let expected = ds.column_names();
        let found: Vec<&str> = col_text.split(',').map(str::trim).collect();
        if found != expected {
            return Err(Error::Schema(format!(
                "{source}:{col_line}: columns `{}` do not match expected `{}`",
                found.join(","),
                expected.join(",")
            )));
        }
        let nx = ds.config.grid.len();
        let ny = schema.len();
        let np = ds.config.ranges.params().len();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected.len() {
                return Err(Error::parse(
                    source,
                    no,
                    format!("expected {} columns, found {}", expected.len(), fields.len()),
                ));
            }
            let index = fields[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, no, "bad incidence index"))?;
            let nums = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
                fields[range].iter().map(|t| parse_f64(t, source, no)).collect()
            };
            let x = nums(1..1 + nx)?;
            let y = nums(1 + nx..1 + nx + ny)?;
            let params = nums(2 + nx + ny..2 + nx + ny + np)?;
            let seed = fields[expected.len() - 1]
                .trim()
                .parse()
                .map_err(|_| Error::parse(source, no, "bad seed"))?;
            let sample =
                FilmSample::from_params(&params).map_err(|e| Error::parse(source, no, e.to_string()))?;
            if x.iter().chain(&y).any(|v| !v.is_finite()) {
                return Err(Error::parse(source, no, "non-finite value"));
            }
            ds.incidences.push(Incidence {
                index,
                x,
                y,
                sample,
                seed,
            });
        }
        let rows: usize = header.int("rows")?;
        if rows != ds.len() {
            return Err(Error::Schema(format!(
                "header declares {rows} rows, file has {}",
                ds.len()
            )));
        }
        Ok(ds)
    }

    /// Rebuilds the dataset from its own metadata.
    pub fn regenerate(&self) -> Result<Self> {
        let clean = generate_dataset(&self.config, self.master_seed)?;
        match self.noise {
            Some(n) => Ok(with_noise(&clean, n.sigma, n.seed)),
            None => Ok(clean),
        }
    }

    fn subset(&self, picks: &[usize]) -> Dataset {
        Dataset {
            config: self.config.clone(),
            master_seed: self.master_seed,
            noise: self.noise,
            incidences: picks.iter().map(|&i| self.incidences[i].clone()).collect(),
        }
    }
}

#[derive(Default)]
struct Header {
    map: BTreeMap<String, String>,
}

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Schema(format!("header is missing `{key}`")))
    }

    fn num(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Schema(format!("header `{key}`: not a number: `{v}`")))
    }

    fn int<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Schema(format!("header `{key}`: not an integer: `{v}`")))
    }
}

/// Draws and evaluates one incidence; a numeric failure triggers a fresh draw.
fn generate_incidence(
    config: &DatasetConfig,
    schema: &TargetSchema,
    solver: &LifshitzSolver,
    master_seed: u64,
    index: usize,
) -> Result<Incidence> {
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = seeding::derive(master_seed, &[stream::INCIDENCE, index as u64, attempt]);
        let mut rng = seeding::rng_from(seed);
        let sample = sample_film(&config.ranges, &mut rng)?;
        match features_with(solver, &FilmStack::on_gold(&sample), &config.grid) {
            Ok(x) => {
                let y = target_vector(&sample, schema)?;
                return Ok(Incidence {
                    index,
                    x,
                    y,
                    sample,
                    seed,
                });
            }
            Err(e) if e.is_numeric() => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Generates `config.size` incidences in parallel; the result depends only on
/// `config` and `master_seed`.
pub fn generate_dataset(config: &DatasetConfig, master_seed: u64) -> Result<Dataset> {
    generate_dataset_with_progress(config, master_seed, |_| {})
}

/// As [`generate_dataset`], calling `progress` with the number of completed
/// incidences (in completion order, from worker threads).
pub fn generate_dataset_with_progress(
    config: &DatasetConfig,
    master_seed: u64,
    progress: impl Fn(usize) + Sync,
) -> Result<Dataset> {
    if config.size == 0 {
        return Err(Error::Config("dataset size must be positive".into()));
    }
    let solver = LifshitzSolver::new(&config.quad)?;
    let schema = config.schema();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let incidences = (0..config.size)
        .into_par_iter()
        .map(|i| {
            let inc = generate_incidence(config, &schema, &solver, master_seed, i);
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
            inc
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        config: config.clone(),
        master_seed,
        noise: None,
        incidences,
    })
}

/// Seeded shuffle of the incidence positions; the first `n_train` go to the
/// training part. Both parts keep the original relative order.
pub fn split_indices(n: usize, n_train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train == 0 || n_train >= n {
        return Err(Error::Domain(format!(
            "training size must satisfy 0 < n_train < {n}, got {n_train}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeding::derived_rng(seed, &[stream::SPLIT]));
    let (train, test) = order.split_at(n_train);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(ds: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(ds.len(), n_train, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// `x + N(0, σ²)` element-wise.
pub fn add_noise(x: &[f64], sigma: f64, rng: &mut impl rand::Rng) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("noise sigma must be ≥ 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    Ok(x.iter().map(|&v| v + normal.sample(rng)).collect())
}

/// Copy of `ds` with noisy features; each incidence gets its own stream keyed
/// by its index, so a subset noised alone matches the same rows noised whole.
pub fn with_noise(ds: &Dataset, sigma: f64, seed: u64) -> Dataset {
    let mut out = ds.clone();
    for inc in &mut out.incidences {
        let mut rng = seeding::derived_rng(seed, &[stream::NOISE, inc.index as u64]);
        inc.x = add_noise(&inc.x, sigma, &mut rng).expect("caller validated sigma");
    }
    out.noise = Some(NoiseInfo { sigma, seed });
    out
}

/// Feature rows from either a dataset file or a plain CSV whose header names
/// the columns `X_1..X_n` (extra columns such as `idx` are ignored).
pub fn read_feature_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = textio::read_file(path)?;
    parse_feature_rows(&text, &path.display().to_string())
}

pub fn parse_feature_rows(text: &str, source: &str) -> Result<Vec<Vec<f64>>> {
    if text.lines().next().map(str::trim_end) == Some(MAGIC) {
        return Ok(Dataset::parse(text, source)?.features());
    }
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((header_line, header)) = lines.next() else {
        return Err(Error::parse(source, 1, "no header row"));
    };
    let columns: Vec<usize> = {
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let mut cols = Vec::new();
        for k in 1.. {
            match names.iter().position(|n| *n == format!("X_{k}")) {
                Some(c) => cols.push(c),
                None => break,
            }
        }
        cols
    };
    if columns.is_empty() {
        return Err(Error::parse(source, header_line, "header has no X_1 column"));
    }
    let mut rows = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        let row = columns
            .iter()
            .map(|&c| match fields.get(c) {
                Some(tok) => textio::parse_f64(tok, source, line),
                None => Err(Error::parse(source, line, "row is shorter than the header")),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(source, header_line, "no feature rows"));
    }
    Ok(rows)
}

/// Plain feature CSV readable by [`parse_feature_rows`].
pub fn feature_rows_csv(rows: &[Vec<f64>], comments: &[String]) -> String {
    let mut s = String::new();
    for c in comments {
        s.push_str(&format!("# {c}\n"));
    }
    let n = rows.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=n).map(|k| format!("X_{k}")).collect();
    s.push_str("row,");
    s.push_str(&header.join(","));
    s.push('\n');
    for (i, r) in rows.iter().enumerate() {
        s.push_str(&format!("{i},{}\n", textio::fmt_f64_list(r, ",")));
    }
    s
}
