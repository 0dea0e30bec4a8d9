//! Biphoton speckle propagation behind a thin random phase scatterer.
//!
//! The crate covers the full chain used to study how two-photon speckle
//! evolves with distance from a scatterer:
//!
//! - [`grid`], [`source`], [`field`], [`coords`], [`regime`]: sampling
//!   lattice, Gaussian biphoton input state, sum/difference rotation and the
//!   near-field / intermediate / far-field classifier.
//! - [`scatterer`]: seeded 1D random phase screens with a calibrated
//!   correlation length.
//! - [`propagation`]: separable angular-spectrum and Fresnel propagation of
//!   biphoton and classical fields, plus a brute-force quadrature reference.
//! - [`statistics`]: coincidence maps, ensemble correlation estimates, speckle
//!   and field-of-view widths, width-vs-distance curves and the classical
//!   single-photon baseline.
//! - [`theory`]: closed-form near/far-field correlation predictors and a
//!   numeric quadrature for the intermediate zone.
//! - [`frames`]: camera frame synthesis and the accidental-subtracted
//!   coincidence estimator.
//! - [`io`]: raw little-endian arrays with JSON sidecars, 16-bit PGM and CSV.
//!
//! Units follow the field names: wavelengths in nm, scatterer and pixel
//! lengths in µm, biphoton widths in mm, distances in cm. Computations
//! convert everything to µm internally.

pub mod coords;
pub mod error;
pub mod fft;
pub mod field;
pub mod frames;
pub mod grid;
pub mod io;
pub mod numerics;
pub mod propagation;
pub mod regime;
pub mod scatterer;
pub mod source;
pub mod statistics;
pub mod theory;

pub use rustfft::num_complex;
pub use rustfft::num_complex::Complex64;

pub use coords::rotate_sum_diff;
pub use error::{Error, Result};
pub use field::{apply_scatterer, build_input_state, BiphotonField};
pub use frames::{
    bin_horizontal, estimate_coincidences, raw_coincidences, synthesize_frames, EstimatorConfig,
    FrameDtype, FrameStack, NoiseParams, PairRate,
};
pub use grid::Grid1D;
pub use propagation::{
    propagate, propagate_classical, propagate_direct_quadrature, propagate_with, PropagateOptions,
    PropagationMethod,
};
pub use regime::{regime_boundaries, PredictedWidths, Regime, RegimeReport};
pub use scatterer::{
    generate_screen, generate_screen_with, measure_sigma0, CorrelationProfile, ScatterScreen,
    ScreenOptions,
};
pub use source::SourceParams;
pub use statistics::{
    classical_speckle_curve, coincidence_map, ensemble_correlation, ensemble_correlations,
    fov_widths, speckle_widths, width_curve, ClassicalCurve, ClassicalOptions, CoincidenceMap,
    EnsembleCorrelation, EnsembleSpec, FovWidths, GammaWindow, MapMode, SpeckleWidths, WidthCurve,
    WidthOptions,
};
pub use theory::{
    gamma_far_field, gamma_intermediate_numeric, gamma_near_field, FactorizedGamma0, GammaSlice,
};

/// Micrometres per millimetre.
pub const UM_PER_MM: f64 = 1.0e3;
/// Micrometres per centimetre.
pub const UM_PER_CM: f64 = 1.0e4;
/// Micrometres per nanometre.
pub const UM_PER_NM: f64 = 1.0e-3;
