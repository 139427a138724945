//! Bessel functions of the first kind, orders 0 and 1.
//!
//! Backed by the fdlibm-derived routines in `libm` (rational approximations on
//! `|x| < 2`, Hankel asymptotics with polynomial corrections beyond).

/// `J0(x)`.
#[inline]
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// `J1(x)`.
#[inline]
pub fn bessel_j1(x: f64) -> f64 {
    libm::j1(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `(1/2pi) * contour integral of cos(n phi) exp(i x cos phi)`, real part of `i^-n` times it.
    /// Trapezoid on a periodic analytic integrand converges geometrically.
    fn angular_definition(order: u32, x: f64) -> f64 {
        let m = 512;
        let mut acc = 0.0;
        for k in 0..m {
            let phi = 2.0 * PI * (k as f64) / (m as f64);
            let (s, c) = (x * phi.cos()).sin_cos();
            acc += match order {
                0 => c,
                // cos(phi) e^{i x cos phi} / i has real part cos(phi) sin(x cos phi)
                _ => phi.cos() * s,
            };
        }
        acc / m as f64
    }

    #[test]
    fn values_at_origin() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert_eq!(bessel_j1(0.0), 0.0);
    }

    #[test]
    fn matches_angular_integral_definition() {
        let mut x = 0.0;
        while x <= 50.0 {
            assert!((bessel_j0(x) - angular_definition(0, x)).abs() <= 1e-10, "J0({x})");
            assert!((bessel_j1(x) - angular_definition(1, x)).abs() <= 1e-10, "J1({x})");
            x += 0.125;
        }
    }

    #[test]
    fn first_j1_root_bracketed() {
        for f in [bessel_j1 as fn(f64) -> f64, |x| angular_definition(1, x)] {
            assert!(f(3.8) > 0.0 && f(3.9) < 0.0);
        }
        // bisect both and compare roots
        let bisect = |f: &dyn Fn(f64) -> f64| {
            let (mut a, mut b) = (3.8, 3.9);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if f(m) > 0.0 {
                    a = m
                } else {
                    b = m
                }
            }
            0.5 * (a + b)
        };
        let r1 = bisect(&bessel_j1);
        let r2 = bisect(&|x| angular_definition(1, x));
        assert!((r1 - r2).abs() < 1e-12);
        assert!((r1 - 3.831_705_970_207_512).abs() < 1e-12);
    }

    #[test]
    fn high_precision_reference_values() {
        // mpmath besselj at 30 digits
        let refs = [
            (0.5, 0.938_469_807_240_812_9, 0.242_268_457_674_873_9),
            (2.0, 0.223_890_779_141_235_67, 0.576_724_807_756_873_4),
            (7.5, 0.266_339_657_880_378_4, 0.135_248_427_579_705_5),
            (31.5, 0.108_238_926_711_472_62, -0.090_445_691_454_422_47),
            (1000.0, 0.024_786_686_152_420_174, 0.004_728_311_907_089_524),
        ];
        for (x, j0, j1) in refs {
            assert!((bessel_j0(x) - j0).abs() <= 1e-12 * j0.abs().max(1e-3), "J0({x})");
            assert!((bessel_j1(x) - j1).abs() <= 1e-12 * j1.abs().max(1e-3), "J1({x})");
        }
    }
}
