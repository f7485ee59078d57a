//! Numerical toolkit for spectral analysis of uniquely ergodic torus dynamics
//! via the commutator (Mourre) method.
//!
//! The library works at "desk scale": everything is driven by sparse
//! trigonometric polynomials, explicit torus maps and flows, and dense
//! operator matrices on truncated Fourier windows, so that every claimed
//! identity can be checked exactly (up to tracked truncation residuals)
//! rather than sampled statistically.
//!
//! Components:
//!
//! * [`trigfun`] — sparse trigonometric polynomials on 𝕋ᵈ with exact
//!   coefficient-level operations, controlled exp/log truncation, and
//!   certified grid infima.
//! * [`torusdyn`] — torus points, translation flows, skew products,
//!   triangular (Furstenberg-type) maps, and time-changed linear flows.
//! * [`ergodic`] — Birkhoff averages: exact geometric-sum form for
//!   translations, orbit-iteration form for general invertible maps, and
//!   flow averages g_L, g̃_L for time changes, with deviation curves.
//! * [`opcalc`] — Koopman and conjugate operators as dense matrices on a
//!   truncated frequency window, with band tracking, averaged conjugate
//!   operators, commutators, and a fast transform-based apply path.
//! * [`mourre`] — commutator functions g per system class, certified strict
//!   Mourre constants from Birkhoff averages, operator-level identity
//!   residuals, a unitary/self-adjoint bridge check, and conjugate vector
//!   fields for time-changed flows.
//! * [`specmeas`] — correlation sequences ⟨φ, Uᵏφ⟩ by matrix and by
//!   quadrature paths, Wiener statistics, kernel-smoothed spectral
//!   densities, and a spectral-type indicator report.

pub mod error;
pub mod linalg;
pub mod quad;

pub mod trigfun;

pub mod torusdyn;

pub mod ergodic;

pub mod opcalc;

pub mod mourre;

pub mod specmeas;

pub use error::{CoreError, Result};
pub use trigfun::{GridFunction, TrigPoly};
pub use torusdyn::{
    FrequencyVector, FurstenbergSpec, SkewProductSpec, TimeChangeSpec, TorusPoint,
};
pub use ergodic::AverageCurve;
pub use opcalc::{FreqWindow, OperatorMatrix, StateVector};
pub use mourre::{CertifyStatus, MourreCertificate};
pub use specmeas::{CorrelationSequence, SpectralReport};
