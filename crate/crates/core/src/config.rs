//! Run-configuration files.
//!
//! A TOML file with optional sections; anything left out falls back to the
//! preset of the selected case, and unknown keys are rejected.
//!
//! ```toml
//! [case]
//! name = "two-pole-a"
//! seed = 42
//! size = 1000
//! n_train = 800
//! law = "log-uniform"
//!
//! [grid]
//! d_min_nm = 5.0
//! d_max_nm = 2500.0
//! count = 20
//!
//! [ranges]            # t in nm, frequencies in rad/s; a number fixes the value
//! t = [10.0, 500.0]
//! w02 = [3e14, 1.25e16]
//!
//! [quadrature]
//! rel_tol = 1e-8
//! consecutive_small = 3
//! kpar_scheme = "gauss-legendre-on-y"
//! gl_nodes = 64
//! max_terms = 1000000
//!
//! [train]
//! learning_rate = 0.1
//! epochs = 50000
//! batch_size = 200
//! seed = 1
//! early_stop = 1e-9
//! standardize_inputs = true
//!
//! [denoise]
//! sigma = 0.02
//! learning_rate = 0.004
//! epochs = 1000000
//! batch_size = 200
//! seed = 2
//!
//! [output]
//! dir = "runs/two-pole-a"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cases::CaseTag;
use crate::dataset::GapGrid;
use crate::error::{Error, Result};
use crate::lifshitz::KparScheme;
use crate::materials::{param_index, ParamRange, SamplingLaw, SamplingRanges};
use crate::pipeline::{CaseConfig, DenoiserConfig};
use crate::textio;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default)]
    pub case: CaseSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub ranges: BTreeMap<String, RangeValue>,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub denoise: DenoiseSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub size: Option<usize>,
    pub n_train: Option<usize>,
    pub law: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub d_min_nm: Option<f64>,
    pub d_max_nm: Option<f64>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum RangeValue {
    Fixed(f64),
    Interval([f64; 2]),
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub rel_tol: Option<f64>,
    pub consecutive_small: Option<usize>,
    pub kpar_scheme: Option<String>,
    pub gl_nodes: Option<usize>,
    pub max_terms: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub early_stop: Option<f64>,
    pub standardize_inputs: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DenoiseSection {
    pub sigma: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// A fully resolved run: every value either from the file or from the preset.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: CaseConfig,
    pub denoiser: DenoiserConfig,
    pub dataset_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Digest of the file text (empty text when no file was given).
    pub digest: String,
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&textio::read_file(path)?)
    }

    /// Applies this file on top of the preset of its case (or of `fallback`
    /// when the file names none).
    pub fn resolve(&self, fallback: Option<CaseTag>) -> Result<RunConfig> {
        let tag = match (&self.case.name, fallback) {
            (Some(name), _) => name.parse()?,
            (None, Some(tag)) => tag,
            (None, None) => return Err(Error::Config("no case selected".into())),
        };
        let mut case = CaseConfig::preset(tag);
        let ds = &mut case.dataset;

        if let Some(n) = self.case.size {
            ds.size = n;
            case.n_train = n * 4 / 5;
        }
        if let Some(n) = self.case.n_train {
            case.n_train = n;
        }
        let g = &self.grid;
        if g.d_min_nm.is_some() || g.d_max_nm.is_some() || g.count.is_some() {
            ds.grid = GapGrid::new(
                g.d_min_nm.map_or(ds.grid.d_min(), |v| v / 1e9),
                g.d_max_nm.map_or(ds.grid.d_max(), |v| v / 1e9),
                g.count.unwrap_or(ds.grid.len()),
            )
            .map_err(|e| Error::Config(e.to_string()))?;
        }
        let law = match &self.case.law {
            Some(l) => SamplingLaw::parse(l)?,
            None => ds.ranges.law,
        };
        let mut params = ds.ranges.params().to_vec();
        let n_poles = ds.ranges.n_poles();
        for (name, value) in &self.ranges {
            let i = param_index(name, n_poles).ok_or_else(|| {
                Error::Config(format!("[ranges]: unknown parameter `{name}` for {tag}"))
            })?;
            let unit = if i == 0 { 1e-9 } else { 1.0 };
            params[i] = match *value {
                RangeValue::Fixed(v) => ParamRange::fixed(v * unit),
                RangeValue::Interval([lo, hi]) => ParamRange::interval(lo * unit, hi * unit),
            };
        }
        ds.ranges = SamplingRanges::new(params, law)?;

        let q = &self.quadrature;
        let quad = &mut ds.quad;
        quad.rel_tol = q.rel_tol.unwrap_or(quad.rel_tol);
        quad.matsubara_consecutive_small =
            q.consecutive_small.unwrap_or(quad.matsubara_consecutive_small);
        if let Some(s) = &q.kpar_scheme {
            quad.kpar_scheme = KparScheme::parse(s)?;
        }
        quad.gl_nodes = q.gl_nodes.unwrap_or(quad.gl_nodes);
        quad.max_matsubara_terms = q.max_terms.unwrap_or(quad.max_matsubara_terms);
        quad.validate()?;

        let t = &self.train;
        let tc = &mut case.train;
        tc.learning_rate = t.learning_rate.unwrap_or(tc.learning_rate);
        tc.epochs = t.epochs.unwrap_or(tc.epochs);
        tc.batch_size = t.batch_size.unwrap_or(tc.batch_size);
        tc.seed = t.seed.unwrap_or(tc.seed);
        tc.early_stop = t.early_stop.or(tc.early_stop);
        case.standardize_inputs = t.standardize_inputs.unwrap_or(case.standardize_inputs);
        if case.n_train == 0 || case.n_train >= case.dataset.size {
            return Err(Error::Config(format!(
                "n_train must lie strictly between 0 and the dataset size {}",
                case.dataset.size
            )));
        }

        let mut denoiser = DenoiserConfig::default();
        let d = &self.denoise;
        let dc = &mut denoiser.train;
        dc.input_noise = d.sigma.unwrap_or(dc.input_noise);
        dc.learning_rate = d.learning_rate.unwrap_or(dc.learning_rate);
        dc.epochs = d.epochs.unwrap_or(dc.epochs);
        dc.batch_size = d.batch_size.unwrap_or(dc.batch_size);
        dc.seed = d.seed.unwrap_or(dc.seed);

        Ok(RunConfig {
            case,
            denoiser,
            dataset_seed: self.case.seed,
            output_dir: self.output.dir.clone(),
            digest: String::new(),
        })
    }
}

impl RunConfig {
    /// Preset of `tag` with no overrides.
    pub fn preset(tag: CaseTag) -> Self {
        RunFile::default().resolve(Some(tag)).expect("presets are valid")
    }

    /// Reads and resolves a config file.
    pub fn load(path: &Path, fallback: Option<CaseTag>) -> Result<Self> {
        let text = textio::read_file(path)?;
        let mut cfg = RunFile::parse(&text)?.resolve(fallback)?;
        cfg.digest = textio::digest(&text);
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_the_preset() {
        let cfg = RunFile::parse("").unwrap().resolve(Some(CaseTag::FourPole)).unwrap();
        assert_eq!(cfg.case, CaseConfig::preset(CaseTag::FourPole));
        assert!(RunFile::parse("").unwrap().resolve(None).is_err());
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
            [case]
            name = "two-pole-b"
            seed = 9
            size = 50
            n_train = 40
            law = "uniform"
            [grid]
            count = 8
            [ranges]
            t = [20.0, 100.0]
            wp1 = 6e14
            [train]
            epochs = 10
            batch_size = 20
            [output]
            dir = "out"
        "#;
        let cfg = RunFile::parse(text).unwrap().resolve(None).unwrap();
        assert_eq!(cfg.case.dataset.case, CaseTag::TwoPoleB);
        assert_eq!(cfg.dataset_seed, Some(9));
        assert_eq!((cfg.case.dataset.size, cfg.case.n_train), (50, 40));
        assert_eq!(cfg.case.dataset.grid.len(), 8);
        assert_eq!(cfg.case.dataset.grid.d_min(), 5e-9);
        assert_eq!(cfg.case.dataset.ranges.law, SamplingLaw::Uniform);
        assert_eq!(cfg.case.dataset.ranges.params()[0], ParamRange::interval(20.0 * 1e-9, 100.0 * 1e-9));
        assert_eq!(cfg.case.dataset.ranges.params()[2], ParamRange::fixed(6e14));
        assert_eq!(cfg.case.train.epochs, 10);
        assert_eq!(cfg.output_dir, Some(PathBuf::from("out")));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for text in [
            "[case]\nnmae = \"two-pole-a\"",
            "[grids]\ncount = 3",
            "[case]\nname = \"two-pole-a\"\n[ranges]\nw09 = 1.0",
            "[case]\nname = \"nope\"",
            "[case]\nname = \"silicon\"\n[quadrature]\ngl_nodes = 12",
            "[case]\nname = \"silicon\"\nn_train = 5000",
            "[case]\nname = \"silicon\"\n[ranges]\nt = [500.0, 100.0]",
            "not toml at all =",
        ] {
            let r = RunFile::parse(text).and_then(|f| f.resolve(None));
            assert!(matches!(r, Err(Error::Config(_))), "{text}: {r:?}");
        }
    }
}
