//! Casimir pressure between a gold plate and a film-coated gold plate, and
//! neural-network inversion of gap-dependent force data into film thickness
//! and Lorentz-Drude permittivity parameters.
//!
//! Modules, bottom-up:
//! - [`materials`]: permittivity models, constants, random film sampling.
//! - [`lifshitz`]: Matsubara-summed Lifshitz pressure and its gap derivative.
//! - [`dataset`]: feature/target vectors, seeded dataset generation and CSV I/O.
//! - [`neuralnet`]: sigmoid multilayer perceptron trained by back-propagation.
//! - [`pipeline`]: the characterization and denoising experiments end to end.
//! - [`config`]: run-configuration files for the command-line tool.

pub mod cases;
pub mod config;
pub mod dataset;
pub mod error;
pub mod lifshitz;
pub mod materials;
pub mod neuralnet;
pub mod pipeline;
pub mod quadrature;
pub mod seeding;
pub mod textio;

pub use error::{Error, Result};
pub use lifshitz::{
    casimir_pressure, dpnorm_dz, normalized_pressure, pec_pressure, FilmStack, ForceCurve,
    LifshitzSolver, QuadratureConfig,
};
pub use materials::{gold_drude, FilmSample, LorentzDrudeModel, Pole, SamplingRanges};
pub use cases::CaseTag;
pub use config::{RunConfig, RunFile};
pub use dataset::{generate_dataset, Dataset, DatasetConfig, GapGrid, TargetSchema};
pub use neuralnet::{train, Mlp, MlpArch, TrainConfig, TrainReport};
pub use pipeline::{run_case, CaseConfig, DenoiserConfig};
