//! Brute-force QFI from the general eigen-decomposition formula.
//!
//! The pupil is discretized into `n` quadrature nodes and each single-source
//! state becomes a vector in `C^n` with amplitudes `sqrt(w_k) P-phase`, so the
//! plain Hermitian inner product reproduces the pupil integral. The density
//! operator is never formed: `rho` and its derivatives are low-rank sums of
//! outer products and only their actions on vectors are evaluated. The
//! eigenvalues come from an exact 2x2 problem in the span of the two states,
//! and the QFI is assembled from
//!
//! ```text
//! H = sum_i 4/e_i <e_i|d rho d rho|e_i>
//!   + sum_ij [4 e_i/(e_i + e_j)^2 - 4/e_i] <e_i|d rho|e_j><e_j|d rho|e_i>
//! ```
//!
//! including the components of `d rho |e_i>` outside the range of `rho`.
//! No closed-form overlap derivative or coefficient table is used.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::overlap::{phase_function, phase_gradient, BrightnessSplit, SeparationVector};
use crate::qfi::{CenteringConvention, QfiMatrix, DEGENERATE_SPLITTING};
use crate::quadrature::{gauss_legendre, PupilModel, SampledPupil};

pub const DEFAULT_RESOLUTION: usize = 256;

/// Quadrature nodes `u_k` with weights `|P(u_k)|^2 dA_k`.
#[derive(Debug, Clone)]
pub struct OracleGrid {
    nodes: Vec<[f64; 2]>,
    weights: Vec<f64>,
    resolution: usize,
}

impl OracleGrid {
    /// Polar grid on the unit disk: `n` Gauss-Legendre radii times `2n` equispaced angles.
    pub fn circular(n: usize) -> Result<Self> {
        if n < 64 {
            return Err(Error::Resolution(format!("grid resolution {n} < 64")));
        }
        let rule = gauss_legendre(n);
        let angular = 2 * n;
        let dtheta = 2.0 * PI / angular as f64;
        let mut nodes = Vec::with_capacity(n * angular);
        let mut weights = Vec::with_capacity(n * angular);
        for &(x, w) in rule.iter() {
            let r = 0.5 * (x + 1.0);
            // (1/pi) r dr dtheta with dr = w/2
            let weight = r * 0.5 * w * dtheta / PI;
            for j in 0..angular {
                let (s, c) = ((j as f64 + 0.5) * dtheta).sin_cos();
                nodes.push([r * c, r * s]);
                weights.push(weight);
            }
        }
        Ok(Self { nodes, weights, resolution: n })
    }

    pub fn sampled(pupil: &SampledPupil) -> Self {
        let (nodes, weights) = pupil.nodes().unzip();
        Self { nodes, weights, resolution: pupil.size() }
    }

    pub fn for_pupil(pupil: &PupilModel, n: usize) -> Result<Self> {
        match pupil {
            PupilModel::CircularClear => Self::circular(n),
            PupilModel::SampledGrid(grid) => Ok(Self::sampled(grid)),
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Discretized `<e^{i Psi(u; l)}>`.
    pub fn overlap(&self, l: &SeparationVector) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| Complex64::from_polar(*w, phase_function(*u, l)))
            .sum()
    }
}

/// A single-source state sampled on an [`OracleGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedState {
    pub amplitudes: Vec<Complex64>,
}

impl DiscretizedState {
    pub fn inner(&self, other: &DiscretizedState) -> Complex64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Source displacement factors: `K+` sits at `+c+ l`, `K-` at `-c- l`.
fn displacement(convention: CenteringConvention, brightness: &BrightnessSplit) -> (f64, f64) {
    match convention {
        CenteringConvention::GeometricCenter => (1.0, 1.0),
        CenteringConvention::IntensityCentroid => (brightness.p_minus(), brightness.p_plus()),
    }
}

/// The two single-source states, with the phase constant chosen so that
/// `<K+|K->` is real and positive.
pub fn build_states(
    l: &SeparationVector,
    brightness: &BrightnessSplit,
    convention: CenteringConvention,
    grid: &OracleGrid,
) -> Result<(DiscretizedState, DiscretizedState)> {
    l.validate()?;
    let (cp, cm) = displacement(convention, brightness);
    let total = cp + cm;
    let raw = grid.overlap(&l.scaled(total));
    let phi = if raw.norm() > 0.0 { raw.arg() / total } else { 0.0 };
    let mut plus = Vec::with_capacity(grid.len());
    let mut minus = Vec::with_capacity(grid.len());
    for (u, w) in grid.nodes.iter().zip(&grid.weights) {
        let psi = phase_function(*u, l);
        let amp = w.sqrt();
        plus.push(Complex64::from_polar(amp, cp * (phi - psi)));
        minus.push(Complex64::from_polar(amp, -cm * (phi - psi)));
    }
    let (plus, minus) = (DiscretizedState { amplitudes: plus }, DiscretizedState { amplitudes: minus });
    for s in [&plus, &minus] {
        let defect = (s.norm_sqr() - 1.0).abs();
        if defect > 1e-6 {
            return Err(Error::Resolution(format!("state norm defect {defect:e}")));
        }
    }
    Ok((plus, minus))
}

/// How `d_mu rho` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeRoute {
    /// From `d_mu K+ = -i c+ d_mu Psi K+` and `d_mu K- = +i c- d_mu Psi K-`.
    /// The phase-constant derivatives are omitted: they only rotate each state by
    /// a global phase, which cancels in every projector.
    Analytic,
    /// Central differences of `rho` with step `h`.
    FiniteDifference { h: f64 },
}

/// Sum of `coef |ket><bra|` terms.
struct LowRankOperator {
    terms: Vec<(f64, Vec<Complex64>, Vec<Complex64>)>,
}

impl LowRankOperator {
    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for (coef, ket, bra) in &self.terms {
            let s = *coef * inner(bra, v);
            for (o, k) in out.iter_mut().zip(ket) {
                *o += s * k;
            }
        }
        out
    }
}

fn density_derivatives(
    l: &SeparationVector,
    brightness: &BrightnessSplit,
    convention: CenteringConvention,
    grid: &OracleGrid,
    states: &(DiscretizedState, DiscretizedState),
    route: DerivativeRoute,
) -> Result<[LowRankOperator; 3]> {
    let (pp, pm) = (brightness.p_plus(), brightness.p_minus());
    let mut ops = Vec::with_capacity(3);
    match route {
        DerivativeRoute::Analytic => {
            let (cp, cm) = displacement(convention, brightness);
            for axis in 0..3 {
                let grad: Vec<f64> = grid.nodes.iter().map(|u| phase_gradient(*u)[axis]).collect();
                let d_plus: Vec<Complex64> = states
                    .0
                    .amplitudes
                    .iter()
                    .zip(&grad)
                    .map(|(a, g)| Complex64::new(0.0, -cp * g) * a)
                    .collect();
                let d_minus: Vec<Complex64> = states
                    .1
                    .amplitudes
                    .iter()
                    .zip(&grad)
                    .map(|(a, g)| Complex64::new(0.0, cm * g) * a)
                    .collect();
                let (kp, km) = (states.0.amplitudes.clone(), states.1.amplitudes.clone());
                ops.push(LowRankOperator {
                    terms: vec![
                        (pp, d_plus.clone(), kp.clone()),
                        (pp, kp, d_plus),
                        (pm, d_minus.clone(), km.clone()),
                        (pm, km, d_minus),
                    ],
                });
            }
        }
        DerivativeRoute::FiniteDifference { h } => {
            if !(h.is_finite() && h >= 1e-12) {
                return Err(Error::InvalidInput(format!("finite-difference step {h} underflows")));
            }
            for axis in 0..3 {
                let mut terms = Vec::with_capacity(4);
                for (sign, shifted) in [(1.0, l.shifted(axis, h)), (-1.0, l.shifted(axis, -h))] {
                    let (kp, km) = build_states(&shifted, brightness, convention, grid)?;
                    let c = sign / (2.0 * h);
                    terms.push((c * pp, kp.amplitudes.clone(), kp.amplitudes));
                    terms.push((c * pm, km.amplitudes.clone(), km.amplitudes));
                }
                ops.push(LowRankOperator { terms });
            }
        }
    }
    Ok(ops.try_into().unwrap_or_else(|_| unreachable!()))
}

/// Brute-force QFI and the diagnostics used to validate it.
#[derive(Debug, Clone)]
pub struct OracleQfi {
    pub qfi: QfiMatrix,
    pub e_plus: f64,
    pub e_minus: f64,
    /// Largest `||rho |e> - e |e>||` over the two eigenpairs.
    pub eigen_residual: f64,
    /// `<e_i|d_mu rho|e_i>` for `i = +, -` (rows) and `mu = x, y, z`.
    pub diagonal_elements: [[f64; 3]; 2],
}

/// Eigenpairs of `p+ |K+><K+| + p- |K-><K-|` in the span of the two states.
fn range_eigenpairs(
    brightness: &BrightnessSplit,
    states: &(DiscretizedState, DiscretizedState),
) -> Result<[(f64, Vec<Complex64>); 2]> {
    let (kp, km) = (&states.0.amplitudes, &states.1.amplitudes);
    let (pp, pm) = (brightness.p_plus(), brightness.p_minus());
    let g = inner(kp, km);
    let (np, nm) = (inner(kp, kp).re, inner(km, km).re);
    // coefficient-space matrix [[p+ n+, p+ g], [p- conj(g), p- n-]]
    let m00 = pp * np;
    let m11 = pm * nm;
    let trace = m00 + m11;
    let det = pp * pm * (np * nm - g.norm_sqr());
    let disc = (trace * trace - 4.0 * det).max(0.0).sqrt();
    let values = [0.5 * (trace + disc), 0.5 * (trace - disc)];
    if disc < DEGENERATE_SPLITTING {
        return Err(Error::DegenerateSpectrum { delta_e: disc, e_minus: values[1] });
    }
    let pairs = values.map(|lambda| {
        // null vector of (M - lambda); pick the better-conditioned row
        let a = (Complex64::new(pp, 0.0) * g, Complex64::new(lambda - m00, 0.0));
        let b = (Complex64::new(lambda - m11, 0.0), Complex64::new(pm, 0.0) * g.conj());
        let (c1, c2) = if a.0.norm_sqr() + a.1.norm_sqr() >= b.0.norm_sqr() + b.1.norm_sqr() { a } else { b };
        let mut v: Vec<Complex64> = kp.iter().zip(km).map(|(x, y)| c1 * x + c2 * y).collect();
        let norm = inner(&v, &v).re.sqrt();
        for x in &mut v {
            *x /= norm;
        }
        (lambda, v)
    });
    Ok(pairs)
}

fn apply_density(brightness: &BrightnessSplit, states: &(DiscretizedState, DiscretizedState), v: &[Complex64]) -> Vec<Complex64> {
    LowRankOperator {
        terms: vec![
            (brightness.p_plus(), states.0.amplitudes.clone(), states.0.amplitudes.clone()),
            (brightness.p_minus(), states.1.amplitudes.clone(), states.1.amplitudes.clone()),
        ],
    }
    .apply(v)
}

/// QFI from the general eigen-decomposition formula on a discretized pupil.
pub fn sld_qfi(
    l: &SeparationVector,
    brightness: &BrightnessSplit,
    convention: CenteringConvention,
    grid: &OracleGrid,
    route: DerivativeRoute,
) -> Result<OracleQfi> {
    let states = build_states(l, brightness, convention, grid)?;
    let pairs = range_eigenpairs(brightness, &states)?;
    let eigen_residual = pairs
        .iter()
        .map(|(lambda, v)| {
            let rv = apply_density(brightness, &states, v);
            rv.iter().zip(v).map(|(a, b)| (a - lambda * b).norm_sqr()).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);
    let derivs = density_derivatives(l, brightness, convention, grid, &states, route)?;

    let e = [pairs[0].0, pairs[1].0];
    // images[mu][i] = d_mu rho |e_i>
    let images: Vec<[Vec<Complex64>; 2]> =
        derivs.iter().map(|op| [op.apply(&pairs[0].1), op.apply(&pairs[1].1)]).collect();
    // range[mu][i][j] = <e_i| d_mu rho |e_j>
    let range: Vec<[[Complex64; 2]; 2]> = images
        .iter()
        .map(|img| std::array::from_fn(|i| std::array::from_fn(|j| inner(&pairs[i].1, &img[j]))))
        .collect();

    let mut h = Matrix3::zeros();
    for mu in 0..3 {
        for nu in mu..3 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..2 {
                acc += 4.0 / e[i] * inner(&images[mu][i], &images[nu][i]);
                for j in 0..2 {
                    let coef = 4.0 * e[i] / (e[i] + e[j]).powi(2) - 4.0 / e[i];
                    acc += coef * range[mu][i][j] * range[nu][j][i];
                }
            }
            h[(mu, nu)] = acc.re;
            h[(nu, mu)] = acc.re;
        }
    }
    let diagonal_elements = std::array::from_fn(|i| std::array::from_fn(|mu| range[mu][i][i].re));
    Ok(OracleQfi { qfi: QfiMatrix::new(h), e_plus: e[0], e_minus: e[1], eigen_residual, diagonal_elements })
}

/// [`sld_qfi`] at resolution `n`, checked against resolution `2n`; returns the
/// finer result.
pub fn sld_qfi_converged(
    l: &SeparationVector,
    brightness: &BrightnessSplit,
    convention: CenteringConvention,
    n: usize,
    route: DerivativeRoute,
) -> Result<OracleQfi> {
    let coarse = sld_qfi(l, brightness, convention, &OracleGrid::circular(n)?, route)?;
    let fine = sld_qfi(l, brightness, convention, &OracleGrid::circular(2 * n)?, route)?;
    let change = coarse.qfi.relative_diff(&fine.qfi);
    if change > 1e-6 {
        return Err(Error::Resolution(format!("QFI changed by {change:e} when resolution doubled from {n}")));
    }
    Ok(fine)
}

/// Central differences of `Delta = |<e^{iPsi}>|` and `phi = arg <e^{iPsi}>`
/// on the oracle grid, with phase differences wrapped to `(-pi, pi]`.
pub fn finite_diff_overlap(l: &SeparationVector, grid: &OracleGrid, h: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if !(h.is_finite() && h >= 1e-12) {
        return Err(Error::InvalidInput(format!("finite-difference step {h} underflows")));
    }
    let centre = grid.overlap(l).norm();
    if centre <= 1e-3 {
        return Err(Error::OverlapVanishes { magnitude: centre });
    }
    let mut d_delta = Vector3::zeros();
    let mut d_phi = Vector3::zeros();
    for axis in 0..3 {
        let fwd = grid.overlap(&l.shifted(axis, h));
        let back = grid.overlap(&l.shifted(axis, -h));
        d_delta[axis] = (fwd.norm() - back.norm()) / (2.0 * h);
        d_phi[axis] = wrap_phase(fwd.arg() - back.arg()) / (2.0 * h);
    }
    Ok((d_delta, d_phi))
}

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_phase(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}
