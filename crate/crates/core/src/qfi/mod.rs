//! QFI matrices for the separation of a two-source pair, and their inversion to
//! quantum Cramer-Rao bounds.
//!
//! Two closed forms are provided. With the geometric center known the QFI is
//! `4 Cov(d Psi)`, independent of the separation and of the brightness split.
//! With the intensity centroid known,
//!
//! ```text
//! H = (1 - dp^2) [ Cov(d Psi) - dp^2 ( Delta^2/(1 - Delta^2) (m1 - d phi)(m1 - d phi)^T
//!                                      + d Delta d Delta^T ) ]
//! ```
//!
//! All information values are per detected photon, in diffraction units.

mod coefficients;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;

pub use coefficients::{
    assemble_coefficient_path, coefficient_combinations, eigen_structure, CoefficientCombinations, CoefficientPath,
    EigenStructure, DEGENERATE_SPLITTING,
};

use crate::error::{Error, Result};
use crate::overlap::{
    overlap_for_convention, overlap_integrals, BrightnessSplit, OverlapData, PsiMoments, SeparationVector,
};
use crate::quadrature::{PupilModel, QuadratureSpec, RadialIntegralSet};

/// `1 - Delta^2` below which the `Delta^2 / (1 - Delta^2)` term is taken at its
/// small-separation limit of zero.
pub const SMALL_SEPARATION_THRESHOLD: f64 = 1e-8;

/// Smallest-to-largest eigenvalue ratio below which inversion is refused.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Per-photon information floor: a smallest eigenvalue below this is reported as
/// singular rather than inverted into a bound that no experiment could reach.
pub const INFORMATION_FLOOR: f64 = 1e-3;

/// Which point of the pair is assumed known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CenteringConvention {
    /// Midpoint known; sources at `+-l` (half-separation parameters).
    GeometricCenter,
    /// Brightness-weighted centroid known; sources at `+p- r` and `-p+ r`.
    IntensityCentroid,
}

impl CenteringConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            CenteringConvention::GeometricCenter => "geometric",
            CenteringConvention::IntensityCentroid => "centroid",
        }
    }
}

impl fmt::Display for CenteringConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CenteringConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "geometric" | "geometric-center" => Ok(CenteringConvention::GeometricCenter),
            "centroid" | "intensity-centroid" => Ok(CenteringConvention::IntensityCentroid),
            other => Err(Error::InvalidInput(format!("unknown convention `{other}`"))),
        }
    }
}

/// Symmetric 3x3 QFI matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfiMatrix(Matrix3<f64>);

impl QfiMatrix {
    pub fn new(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn from_diagonal(d: [f64; 3]) -> Self {
        Self(Matrix3::from_diagonal(&Vector3::from(d)))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        Self(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `[xx, xy, xz, yy, yz, zz]`.
    pub fn upper_entries(&self) -> [f64; 6] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]]
    }

    pub fn asymmetry(&self) -> f64 {
        (self.0 - self.0.transpose()).amax()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let sym = 0.5 * (self.0 + self.0.transpose());
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        [ev[0], ev[1], ev[2]]
    }

    /// Symmetric to `1e-12` (relative to the largest entry) with eigenvalues `>= -1e-9`.
    pub fn is_symmetric_psd(&self) -> bool {
        let scale = self.0.amax().max(1.0);
        self.asymmetry() <= 1e-12 * scale && self.eigenvalues()[0] >= -1e-9
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &QfiMatrix) -> f64 {
        (self.0 - other.0).amax()
    }

    /// Largest absolute entrywise difference over the largest entry of `reference`.
    pub fn relative_diff(&self, reference: &QfiMatrix) -> f64 {
        self.max_abs_diff(reference) / reference.0.amax()
    }

    /// `R H R^T` for a rotation by `theta` about the optical axis.
    pub fn rotated_z(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let r = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self(r * self.0 * r.transpose())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * s)
    }
}

/// Diagonal of the inverse QFI: per-photon variance lower bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcrbVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Ratio of the largest to the smallest eigenvalue of the inverted matrix.
    pub condition: f64,
}

impl QcrbVector {
    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Inverts the QFI by the adjugate formula and returns the diagonal of the inverse.
pub fn qcrb_from_qfi(h: &QfiMatrix) -> Result<QcrbVector> {
    let [min, _, max] = h.eigenvalues();
    if !(min.is_finite() && max.is_finite()) || max <= 0.0 || min <= SINGULAR_RATIO * max || min < INFORMATION_FLOOR {
        return Err(Error::SingularInformation { min_eigenvalue: min, max_eigenvalue: max });
    }
    let m = h.matrix();
    let det = m.determinant();
    // diagonal cofactors: 2x2 minors over the other two axes
    let minor = |a: usize, b: usize| m[(a, a)] * m[(b, b)] - m[(a, b)] * m[(b, a)];
    Ok(QcrbVector { x: minor(1, 2) / det, y: minor(0, 2) / det, z: minor(0, 1) / det, condition: max / min })
}

/// `(1 + dp) / (1 - dp)` with `dp = sqrt(dp2)`.
pub fn dp2_to_brightness_ratio(dp2: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&dp2) {
        return Err(Error::InvalidInput(format!("dp2 must lie in [0, 1), got {dp2}")));
    }
    let dp = dp2.sqrt();
    Ok((1.0 + dp) / (1.0 - dp))
}

/// A closed-form QFI together with the overlap it was evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormQfi {
    pub qfi: QfiMatrix,
    /// `Delta` in the requested convention.
    pub delta: f64,
    /// Principal-value phase constant in the requested convention.
    pub phi: f64,
    /// Set when the `Delta^2 / (1 - Delta^2)` term was replaced by its limit.
    pub small_separation_limit: bool,
}

/// Centroid closed form from the raw overlap integrals.
///
/// Writing `v = m1 <e^{iPsi}> - <d Psi e^{iPsi}>` and `w = v e^{-i phi}`, one has
/// `Re w = Delta (m1 - d phi)` and `Im w = d Delta`, so the bracketed term is
/// `Re(v v^H) + Delta^2/(1 - Delta^2) Re(w) Re(w)^T`, which stays finite as the
/// overlap goes to zero.
pub fn centroid_closed_from_integrals(
    moments: &PsiMoments,
    integrals: &RadialIntegralSet,
    brightness: &BrightnessSplit,
) -> ClosedFormQfi {
    let i0 = integrals.i0;
    let delta = i0.norm();
    let grad = integrals.gradient();
    let v: [Complex64; 3] = std::array::from_fn(|k| moments.m1[k] * i0 - grad[k]);
    let mut overlap_term = Matrix3::from_fn(|a, b| (v[a] * v[b].conj()).re);
    let one_minus = 1.0 - delta * delta;
    let small_separation_limit = one_minus < SMALL_SEPARATION_THRESHOLD;
    if !small_separation_limit && delta > 0.0 {
        let rotate = i0.conj() / delta;
        let re_w = Vector3::from_fn(|k, _| (v[k] * rotate).re);
        overlap_term += (delta * delta / one_minus) * re_w * re_w.transpose();
    }
    let dp2 = brightness.dp2();
    let h = brightness.one_minus_dp2() * (moments.covariance() - dp2 * overlap_term);
    ClosedFormQfi { qfi: QfiMatrix::new(h), delta, phi: i0.arg(), small_separation_limit }
}

/// The alternative centroid expression whose overlap-derivative term carries the
/// extra factor `4 p+ / p-`. It is not the QFI; kept so the discrepancy with the
/// correct form can be measured against the oracle.
pub fn centroid_prefactor_variant(
    moments: &PsiMoments,
    overlap: &OverlapData,
    brightness: &BrightnessSplit,
) -> QfiMatrix {
    let dp2 = brightness.dp2();
    let mean = moments.m1 - overlap.d_phi;
    let d2 = overlap.delta * overlap.delta;
    let head = brightness.one_minus_dp2() * (moments.covariance() - dp2 * d2 / (1.0 - d2) * mean * mean.transpose());
    let tail = 4.0 * brightness.p_plus() / brightness.p_minus()
        * dp2
        * brightness.one_minus_dp2()
        * overlap.d_delta
        * overlap.d_delta.transpose();
    QfiMatrix::new(head - tail)
}

/// QFI evaluator for one pupil and quadrature spec; caches the phase-gradient moments.
#[derive(Debug, Clone)]
pub struct QfiEvaluator {
    pupil: PupilModel,
    spec: QuadratureSpec,
    moments: PsiMoments,
}

impl QfiEvaluator {
    pub fn new(pupil: PupilModel, spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let moments = crate::overlap::psi_moments(&pupil, &spec)?;
        Ok(Self { pupil, spec, moments })
    }

    pub fn circular(spec: QuadratureSpec) -> Result<Self> {
        Self::new(PupilModel::CircularClear, spec)
    }

    pub fn pupil(&self) -> &PupilModel {
        &self.pupil
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    pub fn moments(&self) -> &PsiMoments {
        &self.moments
    }

    /// `4 (m2 - m1 m1^T)`.
    pub fn geometric_closed(&self) -> QfiMatrix {
        QfiMatrix::new(4.0 * self.moments.covariance())
    }

    pub fn centroid_closed(&self, l: &SeparationVector, brightness: &BrightnessSplit) -> Result<ClosedFormQfi> {
        let integrals = overlap_integrals(l, &self.pupil, &self.spec)?;
        Ok(centroid_closed_from_integrals(&self.moments, &integrals, brightness))
    }

    /// Closed form in either convention, with the overlap of that convention.
    pub fn closed(
        &self,
        l: &SeparationVector,
        brightness: &BrightnessSplit,
        convention: CenteringConvention,
    ) -> Result<ClosedFormQfi> {
        match convention {
            CenteringConvention::IntensityCentroid => self.centroid_closed(l, brightness),
            CenteringConvention::GeometricCenter => {
                let i0 = overlap_integrals(&l.scaled(2.0), &self.pupil, &self.spec)?.i0;
                Ok(ClosedFormQfi {
                    qfi: self.geometric_closed(),
                    delta: i0.norm(),
                    phi: 0.5 * i0.arg(),
                    small_separation_limit: false,
                })
            }
        }
    }

    pub fn coefficient_path(
        &self,
        l: &SeparationVector,
        brightness: &BrightnessSplit,
        convention: CenteringConvention,
    ) -> Result<CoefficientPath> {
        let overlap = overlap_for_convention(l, convention, &self.pupil, &self.spec)?;
        assemble_coefficient_path(&overlap, &self.moments, brightness, convention)
    }

    pub fn centroid_prefactor_variant(
        &self,
        l: &SeparationVector,
        brightness: &BrightnessSplit,
    ) -> Result<QfiMatrix> {
        let overlap = crate::overlap::overlap_data(l, &self.pupil, &self.spec)?;
        Ok(centroid_prefactor_variant(&self.moments, &overlap, brightness))
    }
}

/// `4 (m2 - m1 m1^T)` for the given pupil.
pub fn qfi_geometric_closed(pupil: &PupilModel, spec: &QuadratureSpec) -> Result<QfiMatrix> {
    Ok(QfiEvaluator::new(pupil.clone(), *spec)?.geometric_closed())
}

pub fn qfi_centroid_closed(
    l: &SeparationVector,
    brightness: &BrightnessSplit,
    pupil: &PupilModel,
    spec: &QuadratureSpec,
) -> Result<ClosedFormQfi> {
    QfiEvaluator::new(pupil.clone(), *spec)?.centroid_closed(l, brightness)
}

pub fn qfi_coefficient_path(
    l: &SeparationVector,
    brightness: &BrightnessSplit,
    convention: CenteringConvention,
    pupil: &PupilModel,
    spec: &QuadratureSpec,
) -> Result<CoefficientPath> {
    QfiEvaluator::new(pupil.clone(), *spec)?.coefficient_path(l, brightness, convention)
}
