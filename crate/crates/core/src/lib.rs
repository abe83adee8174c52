//! Phase-field simulation and operator-learning toolkit.
//!
//! Fields live on uniform periodic grids and are manipulated with FFT-based
//! spectral calculus. On top of that sit the Allen-Cahn and anisotropic
//! dendritic-growth solvers, a small neural-network layer vocabulary with
//! hand-written reverse rules, training utilities and morphology metrics.

pub mod allen_cahn;
pub mod dendrite;
pub mod field;
pub mod metrics;
pub mod neural;
pub mod training;

pub use field::{Field2D, FieldError, Grid2D, SpectralMultiplier};
