//! QFI from the fidelity between neighbouring density operators, computed on a
//! quadrature rule local to this file.
//!
//! For rank-two mixtures `rho = A A^H`, `sigma = B B^H` the fidelity is the sum
//! of singular values of the 2x2 matrix `A^H B`, i.e.
//! `F = sqrt(||M||_F^2 + 2 |det M|)`, and `H(d, d) = 8 (1 - F) / h^2` for states
//! at `l -+ h d / 2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use qfi3d::{BrightnessSplit, CenteringConvention, QfiEvaluator, QuadratureSpec, SeparationVector};

const RADIAL: usize = 2000;
const ANGULAR: usize = 256;

/// `<exp(i Psi(u; d))>` over the unit disk with midpoint in `s = r^2` and trapezoid in angle.
fn pupil_average(d: [f64; 3]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..RADIAL {
        let s = (i as f64 + 0.5) / RADIAL as f64;
        let r = s.sqrt();
        let mut ring = Complex64::new(0.0, 0.0);
        for j in 0..ANGULAR {
            let t = 2.0 * PI * j as f64 / ANGULAR as f64;
            let psi = 2.0 * PI * r * (t.cos() * d[0] + t.sin() * d[1]) + PI * s * d[2];
            ring += Complex64::from_polar(1.0, psi);
        }
        acc += ring;
    }
    acc / (RADIAL * ANGULAR) as f64
}

fn combine(a: [f64; 3], ca: f64, b: [f64; 3], cb: f64) -> [f64; 3] {
    std::array::from_fn(|k| ca * a[k] + cb * b[k])
}

/// Fidelity between the two-source states at `l1` and `l2`.
fn fidelity(l1: [f64; 3], l2: [f64; 3], b: &BrightnessSplit, conv: CenteringConvention) -> f64 {
    let (pp, pm) = (b.p_plus(), b.p_minus());
    // K+ ~ exp(-i cp Psi(l)), K- ~ exp(+i cm Psi(l))
    let (cp, cm) = match conv {
        CenteringConvention::GeometricCenter => (1.0, 1.0),
        CenteringConvention::IntensityCentroid => (pm, pp),
    };
    let m00 = pp * pupil_average(combine(l2, -cp, l1, cp));
    let m01 = (pp * pm).sqrt() * pupil_average(combine(l1, cp, l2, cm));
    let m10 = (pp * pm).sqrt() * pupil_average(combine(l1, -cm, l2, -cp));
    let m11 = pm * pupil_average(combine(l2, cm, l1, -cm));
    let frob = m00.norm_sqr() + m01.norm_sqr() + m10.norm_sqr() + m11.norm_sqr();
    let det = (m00 * m11 - m01 * m10).norm();
    (frob + 2.0 * det).sqrt()
}

fn bures_qfi(l: [f64; 3], b: &BrightnessSplit, conv: CenteringConvention, h: f64) -> [[f64; 3]; 3] {
    let quad = |d: [f64; 3]| {
        let lo = combine(l, 1.0, d, -0.5 * h);
        let hi = combine(l, 1.0, d, 0.5 * h);
        8.0 * (1.0 - fidelity(lo, hi, b, conv)) / (h * h)
    };
    let unit = |k: usize| std::array::from_fn(|i| if i == k { 1.0 } else { 0.0 });
    let diag: [f64; 3] = std::array::from_fn(|k| quad(unit(k)));
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            if i == j {
                diag[i]
            } else {
                (quad(combine(unit(i), 1.0, unit(j), 1.0)) - diag[i] - diag[j]) / 2.0
            }
        })
    })
}

fn check(l: [f64; 3], dp2: f64, conv: CenteringConvention) {
    let b = BrightnessSplit::from_dp2(dp2).unwrap();
    let ev = QfiEvaluator::circular(QuadratureSpec::default()).unwrap();
    let closed = ev.closed(&SeparationVector::from_array(l), &b, conv).unwrap().qfi;
    let bures = bures_qfi(l, &b, conv, 1e-4);
    let scale = closed.matrix().amax();
    for (i, row) in bures.iter().enumerate() {
        for (j, value) in row.iter().enumerate() {
            let err = (value - closed.get(i, j)).abs() / scale;
            assert!(err < 1e-4, "{l:?} dp2={dp2} {conv} H[{i}{j}]: bures {value} closed {}", closed.get(i, j));
        }
    }
}

#[test]
fn centroid_matches_fidelity_metric() {
    check([0.3, 0.2, 1.0], 0.95, CenteringConvention::IntensityCentroid);
    check([1.1, -0.6, 0.4], 0.75, CenteringConvention::IntensityCentroid);
}

#[test]
fn geometric_matches_fidelity_metric() {
    check([0.7, 0.4, 1.3], 0.45, CenteringConvention::GeometricCenter);
}

#[test]
fn equal_brightness_matches_fidelity_metric() {
    check([0.9, 0.1, 0.6], 0.0, CenteringConvention::IntensityCentroid);
}
