//! Eigen-decomposition of the two-state density operator and the coefficient
//! route to the QFI.
//!
//! The density operator `p+ |K+><K+| + p- |K-><K-|` has range spanned by the two
//! single-source states; its eigenvectors are `a |K+> + b |K->`. Expanding the
//! general QFI formula in that basis leaves four state matrix elements,
//!
//! ```text
//! <K+|d_mu K+><K+|d_nu K+>,  <d_mu K+|d_nu K+>,  Re <d_mu K+|d_nu K->,  d_mu Delta d_nu Delta
//! ```
//!
//! multiplied by combinations of the eigen-coefficients. Two corrections to the
//! published coefficient tables are applied here, both checked against a direct
//! evaluation of the general formula:
//!
//! * the eigenvalue-derivative term `3 Delta^2 (1 - dp^2)^2 / (de^2 (1 - de^2))`
//!   enters once, not multiplied by the overall factor 4;
//! * the geometric-center `h4` carries a factor 1/4, since the cross elements
//!   `<K-|d_mu K+>` equal `d_mu Delta / 2`.
//!
//! The third combination vanishes identically (only as the sum over both
//! eigenvalues), so the `Re <d_mu K+|d_nu K->` element is never needed.

use nalgebra::Matrix3;

use super::{CenteringConvention, QfiMatrix};
use crate::error::{Error, Result};
use crate::overlap::{BrightnessSplit, OverlapData, PsiMoments};

/// Below this eigenvalue splitting the coefficient route is refused.
pub const DEGENERATE_SPLITTING: f64 = 1e-9;

/// Eigenvalues and eigenvector coefficients `|e+-> = alpha+- |K+> + beta+- |K->`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenStructure {
    pub e_plus: f64,
    pub e_minus: f64,
    pub delta_e: f64,
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
}

impl EigenStructure {
    /// Whether `e-` is nonzero, i.e. the `-` eigenvector exists in the range.
    pub fn has_minus_eigenvector(&self) -> bool {
        self.e_minus > 0.0
    }

    /// `alpha^2 + beta^2 + 2 alpha beta Delta` for the `+` and `-` eigenvectors.
    pub fn norms(&self, delta: f64) -> [f64; 2] {
        let n = |a: f64, b: f64| a * a + b * b + 2.0 * a * b * delta;
        [n(self.alpha_plus, self.beta_plus), n(self.alpha_minus, self.beta_minus)]
    }
}

/// Closed-form eigen-structure of the two-state density operator.
///
/// Fails only when the spectrum is degenerate (`de < 1e-9`, equal brightness at
/// a vanishing overlap). When `e- = 0` (one source, or coincident sources) the
/// `-` coefficients are set to zero.
pub fn eigen_structure(delta: f64, brightness: &BrightnessSplit) -> Result<EigenStructure> {
    if !(-1e-12..=1.0 + 1e-12).contains(&delta) {
        return Err(Error::InvalidInput(format!("overlap must lie in [0, 1], got {delta}")));
    }
    let delta = delta.clamp(0.0, 1.0);
    let dp = brightness.dp();
    let dp2 = dp * dp;
    let de = (dp2 + delta * delta * (1.0 - dp2)).sqrt().min(1.0);
    let e_plus = 0.5 * (1.0 + de);
    let e_minus = 0.5 * (1.0 - de);
    if de < DEGENERATE_SPLITTING {
        return Err(Error::DegenerateSpectrum { delta_e: de, e_minus });
    }
    let (pp, pm) = (brightness.p_plus(), brightness.p_minus());
    // (de - dp) and (de + dp) are nonnegative analytically; clamp rounding
    let coeff = |p: f64, num: f64, denom: f64| {
        if denom > 0.0 {
            (p * num.max(0.0) / denom).sqrt()
        } else {
            0.0
        }
    };
    Ok(EigenStructure {
        e_plus,
        e_minus,
        delta_e: de,
        alpha_plus: coeff(pp, de + dp, de * (1.0 + de)),
        alpha_minus: coeff(pp, de - dp, de * (1.0 - de)),
        beta_plus: coeff(pm, de - dp, de * (1.0 + de)),
        beta_minus: -coeff(pm, de + dp, de * (1.0 - de)),
    })
}

/// Multipliers of the four state matrix elements, before the overall factor 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientCombinations {
    /// Multiplies `<K+|d_mu K+><K+|d_nu K+>`.
    pub c1: f64,
    /// Multiplies `<d_mu K+|d_nu K+>`.
    pub c2: f64,
    /// Multiplies `Re <d_mu K+|d_nu K->`; identically zero.
    pub c3: f64,
    /// Multiplies `d_mu Delta d_nu Delta`.
    pub c4: f64,
}

/// QFI assembled from the coefficient tables, with the combinations used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientPath {
    pub qfi: QfiMatrix,
    pub eigen: EigenStructure,
    pub combinations: CoefficientCombinations,
}

pub fn coefficient_combinations(
    delta: f64,
    brightness: &BrightnessSplit,
    convention: CenteringConvention,
) -> Result<(EigenStructure, CoefficientCombinations)> {
    let eig = eigen_structure(delta, brightness)?;
    if eig.e_minus < 1e-12 {
        return Err(Error::DegenerateSpectrum { delta_e: eig.delta_e, e_minus: eig.e_minus });
    }
    let (pp, pm) = (brightness.p_plus(), brightness.p_minus());
    let dp2 = brightness.dp2();
    let d = delta;
    let (ep, em, de) = (eig.e_plus, eig.e_minus, eig.delta_e);
    let a = [eig.alpha_plus, eig.alpha_minus];
    let b = [eig.beta_plus, eig.beta_minus];
    let e = [ep, em];

    let cross_diff = a[1] * b[0] - a[0] * b[1];
    let cross_sum = a[1] * b[0] + a[0] * b[1];
    let off_diag = 1.0 / (ep * em) - 1.0;
    let eigen_derivative = 3.0 * d * d * (1.0 - dp2).powi(2) / (de * de * (1.0 - de * de));
    let h3 = |s: usize| 2.0 * pp * pm * (a[s] + b[s] * d) * (a[s] * d + b[s]);

    let (g1, g2, h1, h2, h4): (f64, f64, [f64; 2], [f64; 2], [f64; 2]) = match convention {
        CenteringConvention::GeometricCenter => {
            let g1 = -cross_diff * cross_diff * d * d;
            let g2 = 0.25 * (cross_sum + 2.0 * d * (pp * b[0] * b[1] + pm * a[0] * a[1])).powi(2);
            let h1 = |s: usize| {
                pp * pp * a[s] * a[s] + pm * pm * b[s] * b[s] + 2.0 * a[s] * b[s] * d * (pp * pp + pm * pm + pp * pm)
            };
            let h2 = |s: usize| pp * pp * (a[s] + b[s] * d).powi(2) + pm * pm * (a[s] * d + b[s]).powi(2);
            let h4 = |s: usize| {
                0.25 * (pm * pm * a[s] * a[s] + pp * pp * b[s] * b[s] + 2.0 * pp * pm * (1.0 + a[s] * b[s] * d))
            };
            (g1, g2, [h1(0), h1(1)], [h2(0), h2(1)], [h4(0), h4(1)])
        }
        CenteringConvention::IntensityCentroid => {
            let g1 = -4.0 * pp * pp * cross_diff * cross_diff * d * d;
            let g2 = 4.0 * (pp * pm).powi(2) * (cross_sum + d * (b[0] * b[1] + a[0] * a[1])).powi(2);
            let h1 = |s: usize| pp * pp * (1.0 + 4.0 * a[s] * b[s] * d);
            let h2 = |s: usize| pp * pp * (1.0 + d).powi(2) * (a[s] + b[s]).powi(2);
            let h4 = 3.0 * (pp * pm).powi(2);
            (g1, g2, [h1(0), h1(1)], [h2(0), h2(1)], [h4, h4])
        }
    };
    let over_e = |h: [f64; 2]| h[0] / e[0] + h[1] / e[1];
    let combinations = CoefficientCombinations {
        c1: over_e(h1) - g1 * off_diag,
        c2: over_e(h2),
        c3: over_e([h3(0), h3(1)]),
        c4: over_e(h4) - g2 * off_diag - 0.25 * eigen_derivative,
    };
    Ok((eig, combinations))
}

/// Assembles the QFI from the coefficient tables and the state matrix elements
/// built out of the phase-gradient moments and the overlap derivatives.
///
/// `overlap` must be the overlap of the chosen convention (see
/// [`crate::overlap::overlap_for_convention`]).
pub fn assemble_coefficient_path(
    overlap: &OverlapData,
    moments: &PsiMoments,
    brightness: &BrightnessSplit,
    convention: CenteringConvention,
) -> Result<CoefficientPath> {
    let (eigen, combinations) = coefficient_combinations(overlap.delta, brightness, convention)?;
    // <K+|d K+> = i s <d phi - d Psi>, <d K+|d K+> = s^2 <(d phi - d Psi)(d phi - d Psi)>
    let s = match convention {
        CenteringConvention::GeometricCenter => 1.0,
        CenteringConvention::IntensityCentroid => brightness.p_minus(),
    };
    let mean = overlap.d_phi - moments.m1;
    let first = -(s * s) * mean * mean.transpose();
    let second = (s * s)
        * (moments.m2 - overlap.d_phi * moments.m1.transpose() - moments.m1 * overlap.d_phi.transpose()
            + overlap.d_phi * overlap.d_phi.transpose());
    let overlap_term = overlap.d_delta * overlap.d_delta.transpose();
    let h: Matrix3<f64> =
        4.0 * (combinations.c1 * first + combinations.c2 * second + combinations.c4 * overlap_term);
    Ok(CoefficientPath { qfi: QfiMatrix::new(h), eigen, combinations })
}
