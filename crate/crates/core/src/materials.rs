//! Lorentz-Drude permittivity, physical constants and random film sampling.
//!
//! A model is a list of poles `(ω0, ωp, γ)`; on the real axis
//!
//! ```text
//! ε(ω) = 1 + Σ ωp² / (ω0² − ω² − iωγ)
//! ```
//!
//! and on the imaginary axis `ε(iξ) = 1 + Σ ωp² / (ω0² + ξ² + γξ)`, which is
//! real and at least one. A pole with `ω0 = 0` is a Drude (free carrier) term.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Fixed CODATA 2018 constants (SI units).
pub mod consts {
    /// Reduced Planck constant, J·s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Speed of light in vacuum, m/s.
    pub const C: f64 = 299_792_458.0;
    /// Boltzmann constant, J/K.
    pub const KB: f64 = 1.380_649e-23;
    /// Elementary charge, C.
    pub const E_CHARGE: f64 = 1.602_176_634e-19;
}

/// Upper bound on the aggregate oscillator strength `√(Σ ωp²)`, in eV.
pub const SUM_RULE_LIMIT_EV: f64 = 33.0;

/// Consecutive rejected draws after which sampling gives up.
pub const MAX_REJECTIONS: usize = 1_000_000;

/// Converts a photon energy in eV to an angular frequency in rad/s.
pub fn ev_to_radps(energy_ev: f64) -> Result<f64> {
    if !(energy_ev >= 0.0) {
        return Err(Error::domain(format!(
            "photon energy must be non-negative, got {energy_ev} eV"
        )));
    }
    Ok(energy_ev * consts::E_CHARGE / consts::HBAR)
}

/// Sum-rule bound in rad/s.
pub fn sum_rule_limit() -> f64 {
    SUM_RULE_LIMIT_EV * consts::E_CHARGE / consts::HBAR
}

/// One oscillator term. All frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub omega0: f64,
    pub omegap: f64,
    pub gamma: f64,
}

impl Pole {
    pub fn new(omega0: f64, omegap: f64, gamma: f64) -> Result<Self> {
        let pole = Pole {
            omega0,
            omegap,
            gamma,
        };
        pole.validate()?;
        Ok(pole)
    }

    pub fn drude(omegap: f64, gamma: f64) -> Result<Self> {
        Self::new(0.0, omegap, gamma)
    }

    fn validate(&self) -> Result<()> {
        let finite = self.omega0.is_finite() && self.omegap.is_finite() && self.gamma.is_finite();
        if !finite || self.omega0 < 0.0 || self.omegap <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::domain(format!(
                "pole requires ω0 ≥ 0, ωp > 0, γ > 0 (got ω0={:e}, ωp={:e}, γ={:e})",
                self.omega0, self.omegap, self.gamma
            )));
        }
        Ok(())
    }

    pub fn is_drude(&self) -> bool {
        self.omega0 == 0.0
    }
}

/// Zero-frequency limit of `ε(iξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StaticPermittivity {
    /// No Drude pole: `1 + Σ ωp²/ω0²`.
    Finite(f64),
    /// At least one Drude pole: `ε(iξ) ~ weight / ξ` as `ξ → 0`, with
    /// `weight = Σ_drude ωp²/γ`.
    Conducting(f64),
}

/// Sum of Lorentz-Drude poles. The pole order is the canonical parameter order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LorentzDrudeModel {
    poles: Vec<Pole>,
}

impl LorentzDrudeModel {
    pub fn new(poles: Vec<Pole>) -> Result<Self> {
        for pole in &poles {
            pole.validate()?;
        }
        Ok(LorentzDrudeModel { poles })
    }

    /// The vacuum model (`ε ≡ 1`).
    pub fn vacuum() -> Self {
        LorentzDrudeModel { poles: Vec::new() }
    }

    pub fn poles(&self) -> &[Pole] {
        &self.poles
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn has_drude_pole(&self) -> bool {
        self.poles.iter().any(Pole::is_drude)
    }

    /// Permittivity on the imaginary frequency axis, `ε(iξ)`.
    pub fn eps_imag_axis(&self, xi: f64) -> Result<f64> {
        if !(xi >= 0.0) {
            return Err(Error::domain(format!(
                "imaginary frequency must be non-negative, got {xi}"
            )));
        }
        if xi == 0.0 && self.has_drude_pole() {
            return Err(Error::Singularity(
                "Drude pole evaluated at ξ = 0; use static_permittivity()".into(),
            ));
        }
        Ok(self.eps_imag_axis_unchecked(xi))
    }

    #[inline]
    pub(crate) fn eps_imag_axis_unchecked(&self, xi: f64) -> f64 {
        1.0 + self
            .poles
            .iter()
            .map(|p| p.omegap * p.omegap / (p.omega0 * p.omega0 + xi * xi + p.gamma * xi))
            .sum::<f64>()
    }

    /// Limit of `ε(iξ)` as `ξ → 0⁺`.
    pub fn static_permittivity(&self) -> StaticPermittivity {
        if self.has_drude_pole() {
            StaticPermittivity::Conducting(
                self.poles
                    .iter()
                    .filter(|p| p.is_drude())
                    .map(|p| p.omegap * p.omegap / p.gamma)
                    .sum(),
            )
        } else {
            StaticPermittivity::Finite(
                1.0 + self
                    .poles
                    .iter()
                    .map(|p| (p.omegap / p.omega0).powi(2))
                    .sum::<f64>(),
            )
        }
    }

    /// Complex permittivity at real angular frequency `omega > 0`.
    pub fn eps_real_freq(&self, omega: f64) -> Result<Complex64> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::domain(format!(
                "real frequency must be positive and finite, got {omega}"
            )));
        }
        let mut eps = Complex64::new(1.0, 0.0);
        for p in &self.poles {
            let denom = Complex64::new(p.omega0 * p.omega0 - omega * omega, -omega * p.gamma);
            eps += p.omegap * p.omegap / denom;
        }
        Ok(eps)
    }

    /// Aggregate oscillator strength `√(Σ ωp²)` in rad/s.
    pub fn oscillator_strength(&self) -> f64 {
        self.poles
            .iter()
            .map(|p| p.omegap * p.omegap)
            .sum::<f64>()
            .sqrt()
    }

    pub fn satisfies_sum_rule(&self) -> bool {
        self.oscillator_strength() <= sum_rule_limit()
    }
}

/// Single-pole Drude gold: ωp = 9 eV, γ = 0.035 eV.
pub fn gold_drude() -> LorentzDrudeModel {
    let omegap = ev_to_radps(9.0).expect("positive energy");
    let gamma = ev_to_radps(0.035).expect("positive energy");
    LorentzDrudeModel {
        poles: vec![Pole {
            omega0: 0.0,
            omegap,
            gamma,
        }],
    }
}

/// Film thickness plus film permittivity model.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmSample {
    /// Thickness in meters.
    pub thickness: f64,
    pub film: LorentzDrudeModel,
}

impl FilmSample {
    /// Flattened parameters in canonical order: `t, ω01, ωp1, γ1, ω02, ...`
    /// (meters and rad/s).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + 3 * self.film.len());
        out.push(self.thickness);
        for p in self.film.poles() {
            out.extend_from_slice(&[p.omega0, p.omegap, p.gamma]);
        }
        out
    }

    pub fn from_params(params: &[f64]) -> Result<Self> {
        if params.is_empty() || (params.len() - 1) % 3 != 0 {
            return Err(Error::Shape(format!(
                "expected 1 + 3·Np parameters, got {}",
                params.len()
            )));
        }
        let thickness = params[0];
        if !(thickness > 0.0) || !thickness.is_finite() {
            return Err(Error::domain(format!(
                "film thickness must be positive, got {thickness}"
            )));
        }
        let poles = params[1..]
            .chunks_exact(3)
            .map(|c| Pole::new(c[0], c[1], c[2]))
            .collect::<Result<Vec<_>>>()?;
        Ok(FilmSample {
            thickness,
            film: LorentzDrudeModel::new(poles)?,
        })
    }
}

/// Name of the `index`-th flattened parameter: `t`, `w01`, `wp1`, `g1`, `w02`, ...
pub fn param_name(index: usize) -> String {
    if index == 0 {
        return "t".to_string();
    }
    let pole = (index - 1) / 3 + 1;
    match (index - 1) % 3 {
        0 => format!("w0{pole}"),
        1 => format!("wp{pole}"),
        _ => format!("g{pole}"),
    }
}

/// Inverse of [`param_name`] for a model with `n_poles` poles.
pub fn param_index(name: &str, n_poles: usize) -> Option<usize> {
    (0..1 + 3 * n_poles).find(|&i| param_name(i) == name)
}

/// Distribution used inside each sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingLaw {
    LogUniform,
    Uniform,
}

impl SamplingLaw {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplingLaw::LogUniform => "log-uniform",
            SamplingLaw::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "log-uniform" => Ok(SamplingLaw::LogUniform),
            "uniform" => Ok(SamplingLaw::Uniform),
            other => Err(Error::config(format!("unknown sampling law `{other}`"))),
        }
    }
}

/// How one flattened parameter is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamRange {
    /// Closed interval; `lo == hi` means the parameter is fixed.
    Interval { lo: f64, hi: f64 },
    /// `factor ×` another (non-tied) parameter.
    Tied { source: usize, factor: f64 },
}

impl ParamRange {
    pub fn fixed(value: f64) -> Self {
        ParamRange::Interval {
            lo: value,
            hi: value,
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        ParamRange::Interval { lo, hi }
    }

    /// Free parameters are the ones a network has to predict.
    pub fn is_free(&self) -> bool {
        matches!(self, ParamRange::Interval { lo, hi } if lo < hi)
    }
}

/// Per-parameter sampling description for a film: thickness (meters) followed
/// by `(ω0, ωp, γ)` per pole (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingRanges {
    params: Vec<ParamRange>,
    pub law: SamplingLaw,
}

impl SamplingRanges {
    pub fn new(params: Vec<ParamRange>, law: SamplingLaw) -> Result<Self> {
        let ranges = SamplingRanges { params, law };
        ranges.validate()?;
        Ok(ranges)
    }

    pub fn params(&self) -> &[ParamRange] {
        &self.params
    }

    pub fn n_poles(&self) -> usize {
        (self.params.len() - 1) / 3
    }

    fn validate(&self) -> Result<()> {
        let n = self.params.len();
        if n < 4 || (n - 1) % 3 != 0 {
            return Err(Error::config(format!(
                "sampling ranges need 1 + 3·Np entries with Np ≥ 1, got {n}"
            )));
        }
        for (i, range) in self.params.iter().enumerate() {
            let name = param_name(i);
            match *range {
                ParamRange::Interval { lo, hi } => {
                    if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 {
                        return Err(Error::config(format!(
                            "{name}: invalid interval [{lo:e}, {hi:e}]"
                        )));
                    }
                    if lo < hi && lo <= 0.0 && self.law == SamplingLaw::LogUniform {
                        return Err(Error::config(format!(
                            "{name}: log-uniform sampling needs a positive lower bound"
                        )));
                    }
                }
                ParamRange::Tied { source, factor } => {
                    let ok = source < n
                        && source != i
                        && matches!(self.params[source], ParamRange::Interval { .. });
                    if !ok || !(factor > 0.0) || !factor.is_finite() {
                        return Err(Error::config(format!(
                            "{name}: tie must reference an interval parameter with a positive factor"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves tied parameters once the independent ones are known.
    pub fn resolve(&self, independent: &[f64]) -> Vec<f64> {
        self.params
            .iter()
            .zip(independent)
            .map(|(range, &v)| match *range {
                ParamRange::Interval { .. } => v,
                ParamRange::Tied { source, factor } => factor * independent[source],
            })
            .collect()
    }

    /// True when every parameter of `sample` respects its range (with a small
    /// relative slack for tied products).
    pub fn contains(&self, sample: &FilmSample) -> bool {
        let values = sample.params();
        if values.len() != self.params.len() {
            return false;
        }
        self.params.iter().zip(&values).all(|(range, &v)| match *range {
            ParamRange::Interval { lo, hi } => v >= lo && v <= hi,
            ParamRange::Tied { source, factor } => {
                let expect = factor * values[source];
                (v - expect).abs() <= 1e-12 * expect.abs()
            }
        })
    }

    fn draw(&self, lo: f64, hi: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
        if lo == hi {
            return lo;
        }
        let u: f64 = rng.random();
        let v = match self.law {
            SamplingLaw::LogUniform => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
            SamplingLaw::Uniform => lo + u * (hi - lo),
        };
        v.clamp(lo, hi)
    }
}

/// Draws a random film respecting `ranges` and the oscillator-strength sum
/// rule. Violations resample the whole parameter vector.
pub fn sample_film(ranges: &SamplingRanges, rng: &mut (impl Rng + ?Sized)) -> Result<FilmSample> {
    let limit = sum_rule_limit();
    let mut independent = vec![0.0; ranges.params.len()];
    for _ in 0..MAX_REJECTIONS {
        for (slot, range) in independent.iter_mut().zip(&ranges.params) {
            *slot = match *range {
                ParamRange::Interval { lo, hi } => ranges.draw(lo, hi, rng),
                ParamRange::Tied { .. } => 0.0,
            };
        }
        let values = ranges.resolve(&independent);
        let sample = FilmSample::from_params(&values)?;
        if sample.film.oscillator_strength() <= limit {
            return Ok(sample);
        }
    }
    Err(Error::config(format!(
        "{MAX_REJECTIONS} consecutive draws violated the sum rule; ranges are incompatible with it"
    )))
}
