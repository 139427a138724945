//! Named verification suites with per-check deviations and tolerances.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle::{finite_diff_overlap, sld_qfi, DerivativeRoute, OracleGrid, DEFAULT_RESOLUTION};
use crate::overlap::{overlap_data, BrightnessSplit, SeparationVector};
use crate::qfi::{
    coefficient_combinations, dp2_to_brightness_ratio, qcrb_from_qfi, CenteringConvention, QfiEvaluator, QfiMatrix,
};
use crate::quadrature::{bessel_j1, PupilModel, QuadratureSpec};

const PI2: f64 = PI * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Constants,
    Collapse,
    Oracle,
    Gradients,
    Symmetry,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Constants, Suite::Collapse, Suite::Oracle, Suite::Gradients, Suite::Symmetry];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Constants => "constants",
            Suite::Collapse => "collapse",
            Suite::Oracle => "oracle",
            Suite::Gradients => "gradients",
            Suite::Symmetry => "symmetry",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, deviation: f64, tolerance: f64) -> Self {
        Self { name: name.into(), deviation, tolerance }
    }

    /// A check that fails outright, e.g. when a computation errored.
    pub fn failed(name: impl Into<String>) -> Self {
        Self::new(name, f64::NAN, 0.0)
    }

    pub fn passed(&self) -> bool {
        self.deviation.is_finite() && self.deviation <= self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} deviation={:.3e} tolerance={:.1e}", self.name, self.deviation, self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed()).count()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} suite {}: {} checks, {} failed", self.suite, self.checks.len(), self.failures())
    }
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let ev = QfiEvaluator::circular(QuadratureSpec::default())?;
    let checks = match suite {
        Suite::Constants => constants(&ev)?,
        Suite::Collapse => collapse(&ev)?,
        Suite::Oracle => oracle(&ev)?,
        Suite::Gradients => gradients()?,
        Suite::Symmetry => symmetry(&ev)?,
    };
    Ok(SuiteReport { suite, checks })
}

pub fn geometric_target() -> QfiMatrix {
    QfiMatrix::from_diagonal([4.0 * PI2, 4.0 * PI2, PI2 / 3.0])
}

/// Uniform draws of `(l, dp)` with `|l_mu| <= bound` and `dp` in `[0, dp_max]`.
pub fn random_points(seed: u64, count: usize, bound: f64, dp_max: f64) -> Vec<(SeparationVector, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let l = SeparationVector::new(
                rng.gen_range(-bound..=bound),
                rng.gen_range(-bound..=bound),
                rng.gen_range(-bound..=bound),
            );
            (l, rng.gen_range(0.0..=dp_max))
        })
        .collect()
}

/// Draws for the oracle comparison: `dp2` from `{0, 0.75, 0.95}`,
/// `|l_perp|` in `[0.05, 3]`, `l_z` in `[0, 2]`.
pub fn oracle_points(seed: u64, count: usize) -> Vec<(SeparationVector, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let dp2 = [0.0, 0.75, 0.95][k % 3];
            let r = rng.gen_range(0.05..=3.0);
            let theta = rng.gen_range(0.0..2.0 * PI);
            let l = SeparationVector::new(r * theta.cos(), r * theta.sin(), rng.gen_range(0.0..=2.0));
            (l, dp2)
        })
        .collect()
}

fn constants(ev: &QfiEvaluator) -> Result<Vec<Check>> {
    let mut checks = vec![Check::new(
        "geometric_closed_form",
        ev.geometric_closed().max_abs_diff(&geometric_target()),
        1e-7,
    )];
    for (k, (l, dp)) in random_points(11, 20, 3.0, 0.99).into_iter().enumerate() {
        let b = BrightnessSplit::from_dp(dp)?;
        let name = format!("geometric_coefficient_path[{k}]");
        checks.push(match ev.coefficient_path(&l, &b, CenteringConvention::GeometricCenter) {
            Ok(path) => Check::new(name, path.qfi.max_abs_diff(&geometric_target()), 1e-7),
            Err(_) => Check::failed(name),
        });
    }
    let geo_qcrb = qcrb_from_qfi(&geometric_target())?;
    checks.push(Check::new("geometric_qcrb_x", (geo_qcrb.x - 0.25 / PI2).abs(), 1e-12));
    checks.push(Check::new("geometric_qcrb_z", (geo_qcrb.z - 3.0 / PI2).abs(), 1e-12));

    let target = [1.0 / PI2, 1.0 / PI2, 12.0 / PI2];
    let mut worst: f64 = 0.0;
    let mut factor: f64 = 0.0;
    let equal = BrightnessSplit::equal();
    for i in 0..10 {
        for j in 0..10 {
            for lz in [0.0, 1.0, 2.0] {
                let l = SeparationVector::new(0.3 * (i + 1) as f64, 0.3 * (j + 1) as f64, lz);
                let closed = ev.centroid_closed(&l, &equal)?;
                let q = qcrb_from_qfi(&closed.qfi)?.to_array();
                worst = worst.max(q.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                factor = factor.max(ev.geometric_closed().max_abs_diff(&closed.qfi.scaled(4.0)));
            }
        }
    }
    checks.push(Check::new("centroid_equal_brightness_qcrb", worst, 1e-8));
    checks.push(Check::new("convention_factor_four", factor, 1e-10));

    checks.push(Check::new("brightness_ratio_0.75", (dp2_to_brightness_ratio(0.75)? - 13.928203230275509).abs(), 1e-9));
    checks.push(Check::new("brightness_ratio_0.95", (dp2_to_brightness_ratio(0.95)? - 77.98717737923586).abs(), 1e-9));

    let pupil = PupilModel::CircularClear;
    let spec = QuadratureSpec::default();
    let axial = crate::overlap::overlap_integrals(&SeparationVector::new(0.0, 0.0, 2.0), &pupil, &spec)?.i0.norm();
    checks.push(Check::new("axial_null", axial, 1e-9));
    let j11 = first_j1_zero();
    let transverse =
        crate::overlap::overlap_integrals(&SeparationVector::new(j11 / (2.0 * PI), 0.0, 0.0), &pupil, &spec)?.i0.norm();
    checks.push(Check::new("transverse_null", transverse, 1e-3));

    for dp2 in [0.75, 0.95] {
        let b = BrightnessSplit::from_dp2(dp2)?;
        let closed = ev.centroid_closed(&SeparationVector::new(5.0, 0.0, 0.5), &b)?;
        let q = qcrb_from_qfi(&closed.qfi)?;
        let asymptote = 1.0 / ((1.0 - dp2) * PI2);
        checks.push(Check::new(format!("asymptote_qcrb_x[dp2={dp2}]"), (q.x / asymptote - 1.0).abs(), 0.05));
    }
    Ok(checks)
}

/// First positive zero of `J1`, by bisection on `[3, 4.5]`.
pub fn first_j1_zero() -> f64 {
    let (mut a, mut b) = (3.0_f64, 4.5_f64);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if bessel_j1(a) * bessel_j1(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

fn collapse(ev: &QfiEvaluator) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let reference = geometric_target();
    let mut spread: f64 = 0.0;
    let mut combos: f64 = 0.0;
    for (l, dp) in random_points(23, 20, 3.0, 0.99) {
        let b = BrightnessSplit::from_dp(dp)?;
        let overlap = crate::overlap::overlap_for_convention(
            &l,
            CenteringConvention::GeometricCenter,
            ev.pupil(),
            ev.spec(),
        )?;
        let (_, c) = coefficient_combinations(overlap.delta, &b, CenteringConvention::GeometricCenter)?;
        combos = combos.max((c.c1 - 1.0).abs()).max((c.c2 - 1.0).abs()).max(c.c3.abs()).max(c.c4.abs());
        let path = ev.coefficient_path(&l, &b, CenteringConvention::GeometricCenter)?;
        spread = spread.max(path.qfi.max_abs_diff(&reference));
    }
    checks.push(Check::new("geometric_combinations", combos, 1e-10));
    checks.push(Check::new("geometric_qfi_independent_of_l_and_dp", spread, 1e-7));
    // the same formula at dp = 0 in the centroid frame keeps only the covariance
    let mut centroid: f64 = 0.0;
    for (l, _) in random_points(29, 20, 3.0, 0.0) {
        let path = ev.coefficient_path(&l, &BrightnessSplit::equal(), CenteringConvention::IntensityCentroid);
        match path {
            Ok(p) => centroid = centroid.max(p.qfi.scaled(4.0).max_abs_diff(&reference)),
            Err(Error::DegenerateSpectrum { .. }) | Err(Error::OverlapVanishes { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    checks.push(Check::new("centroid_equal_brightness_path", centroid, 1e-7));
    Ok(checks)
}

fn oracle(ev: &QfiEvaluator) -> Result<Vec<Check>> {
    let grid = OracleGrid::circular(DEFAULT_RESOLUTION)?;
    let points = oracle_points(37, 50);
    let results: Vec<Vec<Check>> = points
        .par_iter()
        .enumerate()
        .map(|(k, (l, dp2))| -> Result<Vec<Check>> {
            let b = BrightnessSplit::from_dp2(*dp2)?;
            let name = |what: &str| format!("{what}[{k}]");
            let closed = ev.centroid_closed(l, &b)?;
            let sld = match sld_qfi(l, &b, CenteringConvention::IntensityCentroid, &grid, DerivativeRoute::Analytic) {
                Ok(s) => s,
                Err(_) => return Ok(vec![Check::failed(name("oracle_vs_closed"))]),
            };
            let mut out = vec![
                Check::new(name("oracle_vs_closed"), sld.qfi.relative_diff(&closed.qfi), 1e-5),
                Check::new(name("eigen_residual"), sld.eigen_residual, 1e-8),
                Check::new(name("trace"), (sld.e_plus + sld.e_minus - 1.0).abs(), 1e-10),
            ];
            // d e_+ = Delta (1 - dp2) d Delta / (2 de), d e_- = -d e_+
            if let Ok(ov) = overlap_data(l, ev.pupil(), ev.spec()) {
                let de = sld.e_plus - sld.e_minus;
                let d_eplus = ov.delta * b.one_minus_dp2() / (2.0 * de) * ov.d_delta;
                let dev = (0..3)
                    .map(|mu| {
                        (sld.diagonal_elements[0][mu] - d_eplus[mu])
                            .abs()
                            .max((sld.diagonal_elements[1][mu] + d_eplus[mu]).abs())
                    })
                    .fold(0.0, f64::max);
                out.push(Check::new(name("diagonal_element_identity"), dev, 1e-6));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut checks: Vec<Check> = results.into_iter().flatten().collect();
    for (k, (l, dp)) in random_points(41, 5, 3.0, 0.95).into_iter().enumerate() {
        let b = BrightnessSplit::from_dp(dp)?;
        let name = format!("geometric_oracle[{k}]");
        checks.push(match sld_qfi(&l, &b, CenteringConvention::GeometricCenter, &grid, DerivativeRoute::Analytic) {
            Ok(s) => Check::new(name, s.qfi.max_abs_diff(&geometric_target()), 1e-5),
            Err(_) => Check::failed(name),
        });
    }
    Ok(checks)
}

/// Gradient points: the oracle draws restricted to `Delta > 1e-3`.
pub fn gradient_points(seed: u64, count: usize) -> Vec<SeparationVector> {
    let pupil = PupilModel::CircularClear;
    let spec = QuadratureSpec::default();
    let mut out = Vec::with_capacity(count);
    let mut s = seed;
    while out.len() < count {
        for (l, _) in oracle_points(s, count) {
            let keep = crate::overlap::overlap_integrals(&l, &pupil, &spec).map(|i| i.i0.norm() > 1e-3).unwrap_or(false);
            if keep && out.len() < count {
                out.push(l);
            }
        }
        s += 1;
    }
    out
}

fn vector_relative(a: &nalgebra::Vector3<f64>, reference: &nalgebra::Vector3<f64>) -> f64 {
    (a - reference).amax() / reference.amax()
}

fn gradients() -> Result<Vec<Check>> {
    let grid = OracleGrid::circular(DEFAULT_RESOLUTION)?;
    let pupil = PupilModel::CircularClear;
    let spec = QuadratureSpec::default();
    gradient_points(53, 50)
        .par_iter()
        .enumerate()
        .map(|(k, l)| {
            let analytic = overlap_data(l, &pupil, &spec)?;
            let (dd, dphi) = finite_diff_overlap(l, &grid, 1e-5)?;
            Ok(vec![
                Check::new(format!("d_delta[{k}]"), vector_relative(&dd, &analytic.d_delta), 1e-5),
                Check::new(format!("d_phi[{k}]"), vector_relative(&dphi, &analytic.d_phi), 1e-5),
            ])
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

fn conjugate(h: &QfiMatrix, m: &Matrix3<f64>) -> QfiMatrix {
    QfiMatrix::new(m * h.matrix() * m.transpose())
}

fn symmetry(ev: &QfiEvaluator) -> Result<Vec<Check>> {
    let swap = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let flip = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, -1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let mut checks = Vec::new();
    for (k, (l, dp)) in random_points(61, 20, 3.0, 0.97).into_iter().enumerate() {
        let b = BrightnessSplit::from_dp(dp)?;
        let h = ev.centroid_closed(&l, &b)?.qfi;
        let scale = h.matrix().amax();
        let swapped = ev.centroid_closed(&SeparationVector::new(l.y, l.x, l.z), &b)?.qfi;
        checks.push(Check::new(format!("xy_exchange[{k}]"), swapped.max_abs_diff(&conjugate(&h, &swap)) / scale, 1e-9));
        let theta = rng.gen_range(0.0..2.0 * PI);
        let rotated = ev.centroid_closed(&l.rotated_z(theta), &b)?.qfi;
        checks.push(Check::new(format!("z_rotation[{k}]"), rotated.max_abs_diff(&h.rotated_z(theta)) / scale, 1e-9));
        let mirrored = ev.centroid_closed(&SeparationVector::new(l.x, l.y, -l.z), &b)?.qfi;
        checks.push(Check::new(format!("lz_reflection[{k}]"), mirrored.max_abs_diff(&conjugate(&h, &flip)) / scale, 1e-9));
        checks.push(Check::new(format!("symmetric[{k}]"), h.asymmetry() / scale, 1e-12));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn check_verdicts() {
        assert!(Check::new("a", 1e-9, 1e-8).passed());
        assert!(!Check::new("a", 1e-7, 1e-8).passed());
        assert!(!Check::failed("a").passed());
        assert!(Check::new("a", 0.5, 1.0).to_string().starts_with("PASS a"));
    }

    #[test]
    fn j1_zero() {
        assert!((first_j1_zero() - 3.8317059702075123).abs() < 1e-12);
    }

    #[test]
    fn cheap_suites_pass() {
        for s in [Suite::Constants, Suite::Collapse, Suite::Symmetry] {
            let report = run_suite(s).unwrap();
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn oracle_points_cover_requested_ranges() {
        for (l, dp2) in oracle_points(1, 30) {
            let r = l.transverse_norm();
            assert!((0.05..=3.0 + 1e-12).contains(&r));
            assert!((0.0..=2.0).contains(&l.z));
            assert!([0.0, 0.75, 0.95].contains(&dp2));
        }
    }
}
