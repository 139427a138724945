//! Phase function, state overlap and phase constant.
//!
//! With `Psi(u; l) = 2 pi u . l_perp + pi |u|^2 l_z` the overlap of the two
//! single-source states is `Delta e^{i phi} = <e^{i Psi}>` (full separation,
//! intensity-centroid form). Differentiating that identity and dividing by
//! `<e^{i Psi}>` gives
//!
//! ```text
//! d_mu Delta = -Delta Im(<d_mu Psi e^{iPsi}> / <e^{iPsi}>)
//! d_mu phi   =        Re(<d_mu Psi e^{iPsi}> / <e^{iPsi}>)
//! ```
//!
//! which is what [`overlap_data`] evaluates. The geometric-center convention
//! places the sources at `+-l`, so its overlap is the same integral at `2l`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qfi::CenteringConvention;
use crate::quadrature::{self, pupil_average_many, PupilModel, QuadratureSpec, RadialIntegralSet};

/// `|<e^{iPsi}>|` below which phase derivatives are reported as undefined.
pub const OVERLAP_NULL_THRESHOLD: f64 = 1e-13;

/// Dimensionless 3D separation in diffraction units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SeparationVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("separation must be finite, got {self:?}")))
        }
    }

    pub fn transverse_norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scaled(self, s: f64) -> Self {
        Self::new(s * self.x, s * self.y, s * self.z)
    }

    /// Rotates the transverse part by `theta` about the optical axis.
    pub fn rotated_z(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }

    /// Perturbs component `axis` by `h`.
    pub fn shifted(self, axis: usize, h: f64) -> Self {
        let mut v = self.to_array();
        v[axis] += h;
        Self::from_array(v)
    }
}

/// Physical quantities fixing the diffraction scales. Lengths share one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalScales {
    pub wavelength: f64,
    /// Pupil radius, or a characteristic size for non-circular pupils.
    pub pupil_size: f64,
    pub image_distance: f64,
    /// Carried for completeness; the image-side axial scale does not use it.
    pub object_distance: f64,
}

impl PhysicalScales {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("wavelength", self.wavelength),
            ("pupil_size", self.pupil_size),
            ("image_distance", self.image_distance),
            ("object_distance", self.object_distance),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `lambda z_I / R`.
    pub fn transverse_scale(&self) -> f64 {
        self.wavelength * self.image_distance / self.pupil_size
    }

    /// `lambda z_I^2 / R^2`.
    pub fn axial_scale(&self) -> f64 {
        self.wavelength * (self.image_distance / self.pupil_size).powi(2)
    }
}

/// Converts a physical separation `(x, y, z)` to diffraction units.
pub fn to_dimensionless(physical: [f64; 3], scales: &PhysicalScales) -> Result<SeparationVector> {
    scales.validate()?;
    let t = scales.transverse_scale();
    let a = scales.axial_scale();
    Ok(SeparationVector::new(physical[0] / t, physical[1] / t, physical[2] / a))
}

/// Emission probabilities of the two sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrightnessSplit {
    p_plus: f64,
    p_minus: f64,
}

impl BrightnessSplit {
    pub fn new(p_plus: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_plus) {
            return Err(Error::InvalidInput(format!("p_plus must lie in [0, 1], got {p_plus}")));
        }
        Ok(Self { p_plus, p_minus: 1.0 - p_plus })
    }

    /// From the probability difference `dp = p_plus - p_minus`.
    pub fn from_dp(dp: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&dp) {
            return Err(Error::InvalidInput(format!("dp must lie in [-1, 1], got {dp}")));
        }
        Ok(Self { p_plus: 0.5 * (1.0 + dp), p_minus: 0.5 * (1.0 - dp) })
    }

    /// From `dp^2`, taking the brighter source as `+`.
    pub fn from_dp2(dp2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&dp2) {
            return Err(Error::InvalidInput(format!("dp2 must lie in [0, 1], got {dp2}")));
        }
        Self::from_dp(dp2.sqrt())
    }

    pub fn equal() -> Self {
        Self { p_plus: 0.5, p_minus: 0.5 }
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn dp(&self) -> f64 {
        self.p_plus - self.p_minus
    }

    pub fn dp2(&self) -> f64 {
        self.dp() * self.dp()
    }

    /// `1 - dp^2 = 4 p_+ p_-`.
    pub fn one_minus_dp2(&self) -> f64 {
        4.0 * self.p_plus * self.p_minus
    }
}

/// Overlap magnitude, phase constant and their separation derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapData {
    pub delta: f64,
    pub phi: f64,
    pub d_delta: Vector3<f64>,
    pub d_phi: Vector3<f64>,
}

impl OverlapData {
    pub fn from_integrals(set: &RadialIntegralSet) -> Result<Self> {
        let delta = set.i0.norm();
        if delta < OVERLAP_NULL_THRESHOLD {
            return Err(Error::OverlapVanishes { magnitude: delta });
        }
        let ratios = set.gradient().map(|g| g / set.i0);
        Ok(Self {
            delta,
            phi: set.i0.arg(),
            d_delta: Vector3::from_fn(|k, _| -delta * ratios[k].im),
            d_phi: Vector3::from_fn(|k, _| ratios[k].re),
        })
    }
}

/// `Psi(u; l) = 2 pi u . l_perp + pi |u|^2 l_z`.
#[inline]
pub fn phase_function(u: [f64; 2], l: &SeparationVector) -> f64 {
    2.0 * PI * (u[0] * l.x + u[1] * l.y) + PI * (u[0] * u[0] + u[1] * u[1]) * l.z
}

/// `(d_x Psi, d_y Psi, d_z Psi)`, independent of `l`.
#[inline]
pub fn phase_gradient(u: [f64; 2]) -> [f64; 3] {
    [2.0 * PI * u[0], 2.0 * PI * u[1], PI * (u[0] * u[0] + u[1] * u[1])]
}

/// `<e^{iPsi}>` and `<d_mu Psi e^{iPsi}>`; radial fast path on the circular aperture.
pub fn overlap_integrals(
    l: &SeparationVector,
    pupil: &PupilModel,
    spec: &QuadratureSpec,
) -> Result<RadialIntegralSet> {
    l.validate()?;
    match pupil {
        PupilModel::CircularClear => quadrature::radial_integrals(l, spec),
        PupilModel::SampledGrid(_) => {
            let [i0, ix, iy, iz] = pupil_average_many(
                |u| {
                    let e = Complex64::from_polar(1.0, phase_function(u, l));
                    let g = phase_gradient(u);
                    [e, e * g[0], e * g[1], e * g[2]]
                },
                pupil,
                &spec.guarded(l),
            )?;
            Ok(RadialIntegralSet { i0, ix, iy, iz })
        }
    }
}

/// Overlap data for the full-separation phase `Psi(u; l)`.
pub fn overlap_data(l: &SeparationVector, pupil: &PupilModel, spec: &QuadratureSpec) -> Result<OverlapData> {
    OverlapData::from_integrals(&overlap_integrals(l, pupil, spec)?)
}

/// Overlap data in either centering convention, differentiated with respect to
/// that convention's own separation parameters.
///
/// Geometric center: sources at `+-l`, so `Delta(l) = |<e^{iPsi(u; 2l)}>|`,
/// `phi(l) = arg(...) / 2`, and the chain rule doubles `d Delta` while `d phi`
/// keeps its value at `2l`.
pub fn overlap_for_convention(
    l: &SeparationVector,
    convention: CenteringConvention,
    pupil: &PupilModel,
    spec: &QuadratureSpec,
) -> Result<OverlapData> {
    match convention {
        CenteringConvention::IntensityCentroid => overlap_data(l, pupil, spec),
        CenteringConvention::GeometricCenter => {
            let full = overlap_data(&l.scaled(2.0), pupil, spec)?;
            Ok(OverlapData { delta: full.delta, phi: 0.5 * full.phi, d_delta: 2.0 * full.d_delta, d_phi: full.d_phi })
        }
    }
}

/// First and second moments of the phase gradient over the pupil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiMoments {
    /// `<d_mu Psi>`.
    pub m1: Vector3<f64>,
    /// `<d_mu Psi d_nu Psi>`.
    pub m2: Matrix3<f64>,
}

impl PsiMoments {
    /// `m2 - m1 m1^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        self.m2 - self.m1 * self.m1.transpose()
    }
}

pub fn psi_moments(pupil: &PupilModel, spec: &QuadratureSpec) -> Result<PsiMoments> {
    let values = pupil_average_many(
        |u| {
            let g = phase_gradient(u);
            [g[0], g[1], g[2], g[0] * g[0], g[0] * g[1], g[0] * g[2], g[1] * g[1], g[1] * g[2], g[2] * g[2]]
                .map(|v| Complex64::new(v, 0.0))
        },
        pupil,
        spec,
    )?
    .map(|v| v.re);
    let m1 = Vector3::new(values[0], values[1], values[2]);
    let m2 = Matrix3::new(
        values[3], values[4], values[5], //
        values[4], values[6], values[7], //
        values[5], values[7], values[8],
    );
    Ok(PsiMoments { m1, m2 })
}
