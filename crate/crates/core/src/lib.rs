//! Quantum Fisher information for estimating the 3D separation of two
//! incoherent point sources imaged through a pupil.

pub mod error;
pub mod oracle;
pub mod overlap;
pub mod qfi;
pub mod quadrature;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use overlap::{BrightnessSplit, OverlapData, PhysicalScales, SeparationVector};
pub use qfi::{qcrb_from_qfi, CenteringConvention, QcrbVector, QfiEvaluator, QfiMatrix};
pub use quadrature::{PupilModel, QuadratureSpec, SampledPupil};
pub use sweep::{run_point, run_sweep, SweepConfig, SweepRecord};
