//! Scatterer-based adversarial attacks on SAR image classifiers.
//!
//! The crate renders parametric point/line scatterers into SAR amplitude
//! images with the attributed scattering center model ([`ascm`]), optimizes
//! their parameters by projected gradient ascent so that a classifier
//! mispredicts ([`attack`]), and keeps the scatterers on the imaged target
//! through a truncated Gaussian-kernel positioning score ([`positioning`]).
//!
//! Supporting modules:
//!
//! - [`gradient`]: objective value and its exact parameter gradient, plus a
//!   central finite-difference oracle.
//! - [`classifier`]: a small convolutional classifier behind the
//!   [`classifier::Classifier`] trait.
//! - [`dataio`]: synthetic dataset generation, crops, PGM/PBM IO, threshold
//!   segmentation and a Phoenix (MSTAR) header parser.
//! - [`evaluation`]: campaign harness, positioning filter and reports.
//! - [`cli`]: the `otsa` command line.

pub mod ascm;
pub mod attack;
pub mod classifier;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod gradient;
pub mod positioning;
pub mod seed;

pub use ascm::{
    render_image, ComplexField, FrequencyGrid, ImagingParams, Renderer, SarImage, ScattererParams,
    ScattererSet,
};
pub use error::{OtsaError, Result};
