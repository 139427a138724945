//! Pupil-plane integration.
//!
//! Two engines live here. [`pupil_average`] integrates an arbitrary function of
//! the pupil coordinate against `|P(u)|^2`: on the clear circular aperture it
//! uses composite Gauss-Legendre in radius tensored with the trapezoid rule in
//! angle, refined by doubling both until successive estimates agree; on a
//! sampled pupil it is the midpoint rule over grid cells, so accuracy is
//! `O(h^2)` in the cell size and no refinement is attempted.
//!
//! [`radial_integrals`] is the circular-aperture fast path: after the angular
//! integral is done analytically in Bessel functions, the four averages that
//! drive the overlap reduce to one-dimensional integrals over `u in [0, 1]`.

mod bessel;
mod pupil;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;

pub use bessel::{bessel_j0, bessel_j1};
pub use pupil::{PupilModel, SampledPupil};

use crate::error::{Error, Result};
use crate::overlap::SeparationVector;

/// Separation magnitude beyond which the base node counts are doubled.
pub const OSCILLATION_GUARD: f64 = 10.0;

/// Node counts and stopping rule for every quadrature in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Gauss-Legendre order per radial panel.
    pub radial_nodes: usize,
    /// Base trapezoid node count in angle.
    pub angular_nodes: usize,
    /// Absolute tolerance on successive refinement estimates.
    pub tolerance: f64,
    /// Maximum number of node doublings.
    pub refinement_cap: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { radial_nodes: 16, angular_nodes: 32, tolerance: 1e-10, refinement_cap: 6 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < 16 {
            return Err(Error::InvalidInput(format!("radial node count {} < 16", self.radial_nodes)));
        }
        if self.angular_nodes < 32 {
            return Err(Error::InvalidInput(format!("angular node count {} < 32", self.angular_nodes)));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }

    /// The spec to use for integrands whose phase depends on `l`: base node
    /// counts double once when the phase wraps many times across the pupil.
    pub fn guarded(&self, l: &SeparationVector) -> Self {
        if l.transverse_norm() > OSCILLATION_GUARD || l.z.abs() > OSCILLATION_GUARD {
            Self { radial_nodes: 2 * self.radial_nodes, angular_nodes: 2 * self.angular_nodes, ..*self }
        } else {
            *self
        }
    }
}

/// The four pupil averages `<e^{iPsi}>` and `<d_mu Psi e^{iPsi}>` for `mu = x, y, z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialIntegralSet {
    pub i0: Complex64,
    pub ix: Complex64,
    pub iy: Complex64,
    pub iz: Complex64,
}

impl RadialIntegralSet {
    /// `[ix, iy, iz]`.
    pub fn gradient(&self) -> [Complex64; 3] {
        [self.ix, self.iy, self.iz]
    }
}

/// `integral d^2u |P(u)|^2 f(u)`.
pub fn pupil_average<F>(f: F, pupil: &PupilModel, spec: &QuadratureSpec) -> Result<Complex64>
where
    F: Fn([f64; 2]) -> Complex64,
{
    pupil_average_many(|u| [f(u)], pupil, spec).map(|[v]| v)
}

/// Several pupil averages evaluated on a shared node set; convergence is judged
/// on the largest componentwise change.
pub fn pupil_average_many<const K: usize, F>(
    f: F,
    pupil: &PupilModel,
    spec: &QuadratureSpec,
) -> Result<[Complex64; K]>
where
    F: Fn([f64; 2]) -> [Complex64; K],
{
    match pupil {
        PupilModel::CircularClear => {
            spec.validate()?;
            refine(spec, |level| disk_rule(&f, spec, level))
        }
        PupilModel::SampledGrid(grid) => {
            let mut acc = [Complex64::new(0.0, 0.0); K];
            for (u, w) in grid.nodes() {
                for (a, v) in acc.iter_mut().zip(f(u)) {
                    *a += w * v;
                }
            }
            Ok(acc)
        }
    }
}

/// The four radial integrals on the clear circular aperture, by adaptive
/// composite Gauss-Legendre with panel doubling.
pub fn radial_integrals(l: &SeparationVector, spec: &QuadratureSpec) -> Result<RadialIntegralSet> {
    spec.validate()?;
    let spec = spec.guarded(l);
    let lt = l.transverse_norm();
    let (cos_l, sin_l) = if lt > 0.0 { (l.x / lt, l.y / lt) } else { (1.0, 0.0) };
    let k = 2.0 * PI * lt;
    let integrand = |u: f64| {
        let (j0, j1) = (bessel_j0(k * u), bessel_j1(k * u));
        let e = Complex64::from_polar(1.0, PI * u * u * l.z);
        [e * (2.0 * u * j0), e * (u * u * j1), e * (2.0 * PI * u * u * u * j0)]
    };
    let [i0, kt, iz] = refine(&spec, |level| composite_gauss_legendre(&integrand, spec.radial_nodes, 1 << level))?;
    let transverse = Complex64::new(0.0, 4.0 * PI) * kt;
    Ok(RadialIntegralSet { i0, ix: transverse * cos_l, iy: transverse * sin_l, iz })
}

fn refine<const K: usize>(
    spec: &QuadratureSpec,
    mut estimate: impl FnMut(u32) -> [Complex64; K],
) -> Result<[Complex64; K]> {
    let mut last = estimate(0);
    let mut previous = None;
    for level in 1..=spec.refinement_cap {
        let current = estimate(level);
        let change = current
            .iter()
            .zip(&last)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if change < spec.tolerance {
            return Ok(current);
        }
        previous = Some(std::mem::replace(&mut last, current));
    }
    Err(Error::QuadratureNotConverged {
        last: format!("{last:?}"),
        previous: previous.map_or_else(|| "none".to_string(), |p| format!("{p:?}")),
    })
}

/// Composite Gauss-Legendre of `order` nodes on each of `panels` equal panels of `[0, 1]`.
fn composite_gauss_legendre<const K: usize>(
    f: &impl Fn(f64) -> [Complex64; K],
    order: usize,
    panels: usize,
) -> [Complex64; K] {
    let rule = gauss_legendre(order);
    let width = 1.0 / panels as f64;
    let mut acc = [Complex64::new(0.0, 0.0); K];
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * width;
        for &(x, w) in rule.iter() {
            let values = f(mid + 0.5 * width * x);
            for (a, v) in acc.iter_mut().zip(values) {
                *a += (0.5 * width * w) * v;
            }
        }
    }
    acc
}

fn disk_rule<const K: usize>(
    f: &impl Fn([f64; 2]) -> [Complex64; K],
    spec: &QuadratureSpec,
    level: u32,
) -> [Complex64; K] {
    let angular = spec.angular_nodes << level;
    let dtheta = 2.0 * PI / angular as f64;
    let trig: Vec<(f64, f64)> = (0..angular).map(|j| ((j as f64 + 0.5) * dtheta).sin_cos()).collect();
    // (1/pi) r dr dtheta
    composite_gauss_legendre(
        &|r| {
            let mut ring = [Complex64::new(0.0, 0.0); K];
            for &(s, c) in &trig {
                for (a, v) in ring.iter_mut().zip(f([r * c, r * s])) {
                    *a += v;
                }
            }
            ring.map(|v| v * (r * dtheta / PI))
        },
        spec.radial_nodes,
        1 << level,
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, cached per order.
type Rule = Arc<Vec<(f64, f64)>>;

pub(crate) fn gauss_legendre(order: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(order)
        .or_insert_with(|| {
            let rule = gauss_quad::GaussLegendre::new(order.max(2)).expect("order >= 2");
            Arc::new(rule.as_node_weight_pairs().to_vec())
        })
        .clone()
}
