//! The four film families used for training and their fixed settings.
//!
//! Frequencies in rad/s, lengths in meters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::materials::{FilmSample, ParamRange, SamplingLaw, SamplingRanges};

const NM_PER_M: f64 = 1e9;
const E15: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    /// Drude pole plus one Lorentz pole tied to ω02 (`ωp2 = 4ω02`, `γ2 = 0.4ω02`).
    TwoPoleA,
    /// Same structure with `ωp2 = 2ω02`, `γ2 = 0.8ω02` and a weaker Drude pole.
    TwoPoleB,
    /// Drude pole plus three Lorentz poles, all independent.
    FourPole,
    /// Four Lorentz poles spanning a silicon-like permittivity.
    Silicon,
}

impl CaseTag {
    pub const ALL: [CaseTag; 4] = [
        CaseTag::TwoPoleA,
        CaseTag::TwoPoleB,
        CaseTag::FourPole,
        CaseTag::Silicon,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CaseTag::TwoPoleA => "two-pole-a",
            CaseTag::TwoPoleB => "two-pole-b",
            CaseTag::FourPole => "four-pole",
            CaseTag::Silicon => "silicon",
        }
    }

    /// Gap range `(d_min, d_max)`; 20 log-spaced points are used.
    pub fn gap_range(&self) -> (f64, f64) {
        match self {
            CaseTag::Silicon => (50e-9, 2500e-9),
            _ => (5e-9, 2500e-9),
        }
    }

    /// `(N, N_TR)`.
    pub fn sizes(&self) -> (usize, usize) {
        match self {
            CaseTag::TwoPoleA | CaseTag::TwoPoleB => (1000, 800),
            CaseTag::FourPole | CaseTag::Silicon => (2000, 1600),
        }
    }

    /// Full training budget in epochs.
    pub fn epochs(&self) -> usize {
        match self {
            CaseTag::TwoPoleA | CaseTag::TwoPoleB => 5_000_000,
            CaseTag::FourPole => 400_000,
            CaseTag::Silicon => 800_000,
        }
    }

    pub fn ranges(&self) -> SamplingRanges {
        use ParamRange as R;
        let params = match self {
            CaseTag::TwoPoleA => vec![
                R::interval(10e-9, 500e-9),
                R::fixed(0.0),
                R::fixed(1e15),
                R::fixed(1e14),
                R::interval(3e14, 1.25e16),
                R::Tied { source: 4, factor: 4.0 },
                R::Tied { source: 4, factor: 0.4 },
            ],
            CaseTag::TwoPoleB => vec![
                R::interval(20e-9, 300e-9),
                R::fixed(0.0),
                R::fixed(5e14),
                R::fixed(2e14),
                R::interval(3e14, 2.5e16),
                R::Tied { source: 4, factor: 2.0 },
                R::Tied { source: 4, factor: 0.8 },
            ],
            CaseTag::FourPole => scaled(
                (10.0, 500.0),
                &[
                    (0.0, 0.0),
                    (0.316, 5.0),
                    (0.034, 6.05),
                    (0.316, 5.0),
                    (0.657, 21.3),
                    (0.131, 23.3),
                    (1.33, 13.9),
                    (2.47, 39.8),
                    (0.893, 57.5),
                    (6.96, 41.6),
                    (7.49, 48.9),
                    (5.32, 198.0),
                ],
            ),
            CaseTag::Silicon => scaled(
                (100.0, 500.0),
                &[
                    (0.5, 12.5),
                    (0.33, 33.4),
                    (0.029, 2.24),
                    (0.719, 13.3),
                    (0.462, 33.2),
                    (0.04, 4.07),
                    (1.01, 23.6),
                    (1.09, 46.5),
                    (0.067, 5.79),
                    (1.84, 31.2),
                    (1.08, 36.7),
                    (0.159, 6.89),
                ],
            ),
        };
        SamplingRanges::new(params, SamplingLaw::LogUniform).expect("preset ranges are valid")
    }
}

/// Thickness in nm and pole parameters in units of 1e15 rad/s.
fn scaled(t_nm: (f64, f64), poles: &[(f64, f64)]) -> Vec<ParamRange> {
    std::iter::once(ParamRange::interval(t_nm.0 / NM_PER_M, t_nm.1 / NM_PER_M))
        .chain(poles.iter().map(|&(lo, hi)| ParamRange::interval(lo * E15, hi * E15)))
        .collect()
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CaseTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseTag::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown case `{s}` (expected two-pole-a, two-pole-b, four-pole or silicon)"
                ))
            })
    }
}

/// A two-pole film of `case` with the given thickness and second resonance.
pub fn two_pole_film(case: CaseTag, thickness: f64, omega02: f64) -> Result<FilmSample> {
    let ranges = case.ranges();
    if ranges.n_poles() != 2 {
        return Err(Error::Config(format!("{case} is not a two-pole case")));
    }
    let mut independent = vec![0.0; ranges.params().len()];
    for (slot, range) in independent.iter_mut().zip(ranges.params()) {
        if let ParamRange::Interval { lo, .. } = *range {
            *slot = lo;
        }
    }
    independent[0] = thickness;
    independent[4] = omega02;
    FilmSample::from_params(&ranges.resolve(&independent))
}

/// Builds a film from a thickness in nm and `(ω0, ωp, γ)` triples in units of
/// 1e15 rad/s.
pub fn film_from_table(t_nm: f64, poles: &[[f64; 3]]) -> FilmSample {
    let mut params = vec![t_nm / NM_PER_M];
    for p in poles {
        params.extend(p.iter().map(|v| v * E15));
    }
    FilmSample::from_params(&params).expect("reference values are admissible")
}

/// Published reference films, keyed by a descriptive name.
pub mod reference {
    use super::*;

    /// Four-pole training examples.
    pub fn example_i() -> FilmSample {
        film_from_table(
            467.0,
            &[
                [5.51, 7.67, 0.579],
                [6.02, 5.4, 1.5],
                [15.9, 20.6, 2.0],
                [19.3, 24.7, 3.78],
            ],
        )
    }

    pub fn example_ii() -> FilmSample {
        film_from_table(
            167.0,
            &[
                [0.746, 2.08, 0.071],
                [1.42, 2.63, 0.288],
                [13.1, 13.2, 2.52],
                [14.1, 11.9, 2.33],
            ],
        )
    }

    pub fn example_iii() -> FilmSample {
        film_from_table(
            152.0,
            &[
                [3.19, 8.03, 0.246],
                [3.58, 6.76, 0.734],
                [4.04, 15.1, 0.871],
                [6.15, 7.73, 0.418],
            ],
        )
    }

    /// Two-pole test incidences `(case, t, ω02)` with published predictions
    /// `(t, ω02)`.
    pub const TWO_POLE_TRUE_A: (CaseTag, f64, f64) = (CaseTag::TwoPoleA, 385e-9, 0.365e15);
    pub const TWO_POLE_PRED_A: (f64, f64) = (394e-9, 0.366e15);
    pub const TWO_POLE_TRUE_B: (CaseTag, f64, f64) = (CaseTag::TwoPoleB, 63e-9, 8.74e15);
    pub const TWO_POLE_PRED_B: (f64, f64) = (63e-9, 8.65e15);

    /// Four-pole test incidence whose spectrum is shown first.
    pub fn four_pole_first_true() -> FilmSample {
        film_from_table(
            194.0,
            &[
                [0.0, 3.0, 0.612],
                [0.513, 2.12, 0.978],
                [9.53, 26.2, 10.8],
                [14.8, 25.2, 19.1],
            ],
        )
    }

    /// Silicon fitted with four Lorentz poles.
    pub fn silicon_true() -> FilmSample {
        film_from_table(
            324.0,
            &[
                [5.2, 9.0, 0.6],
                [5.7, 9.0, 1.0],
                [6.45, 15.4, 1.0],
                [8.1, 8.0, 1.2],
            ],
        )
    }

    /// Published prediction for [`silicon_true`].
    pub fn silicon_predicted() -> FilmSample {
        film_from_table(
            332.0,
            &[
                [5.3, 7.81, 0.569],
                [5.73, 8.4, 0.906],
                [6.39, 13.2, 0.798],
                [8.67, 7.6, 1.09],
            ],
        )
    }
}
