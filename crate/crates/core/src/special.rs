//! Bessel functions of the first kind (orders 0 and 1) and the
//! unnormalized sinc.
//!
//! Three regimes:
//!
//! * `|x| < 8`: ascending power series. The largest term at `x = 8` is
//!   about 114, so cancellation costs roughly two digits.
//! * `8 <= |x| < 1000`: Miller's backward recurrence, normalized with
//!   `J0 + 2 * sum(J_2k) = 1`.
//! * `|x| >= 1000`: Hankel asymptotic expansion, truncated at its
//!   smallest term.

use std::f64::consts::PI;

/// First positive zero of J0.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Maximum of |J0| past its first zero, attained at the first zero of J1
/// (x = 3.8317...). Used to bound the Bessel signal.
pub const J0_FIRST_MIN: f64 = -0.402_759_395_702_553;

const SERIES_LIMIT: f64 = 8.0;
const ASYMPTOTIC_LIMIT: f64 = 1000.0;

pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax.is_nan() {
        return f64::NAN;
    }
    if ax.is_infinite() {
        return 0.0;
    }
    if ax < SERIES_LIMIT {
        j0_series(ax)
    } else if ax < ASYMPTOTIC_LIMIT {
        miller(ax).0
    } else {
        hankel(0.0, ax)
    }
}

pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    if ax.is_nan() {
        return f64::NAN;
    }
    if ax.is_infinite() {
        return 0.0;
    }
    let v = if ax < SERIES_LIMIT {
        ax * j1_over_x_series(ax)
    } else if ax < ASYMPTOTIC_LIMIT {
        miller(ax).1
    } else {
        hankel(1.0, ax)
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// J1(x)/x, finite at the origin where it equals 1/2.
pub fn bessel_j1_over_x(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        j1_over_x_series(ax)
    } else {
        bessel_j1(ax) / ax
    }
}

/// J_n(x) by its ascending series; intended for |x| < 8.
pub fn bessel_jn_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    // (x/2)^n / n!
    let mut term: f64 = (1..=n).fold(1.0, |acc, k| acc * half / f64::from(k));
    let mut sum = term;
    let mut j = 1.0;
    while term.abs() > 1e-18 * sum.abs() && j < 200.0 {
        term *= -q / (j * (j + f64::from(n)));
        sum += term;
        j += 1.0;
    }
    sum
}

/// 1 - J0(x) without the cancellation of the direct difference near zero.
pub fn one_minus_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax >= SERIES_LIMIT {
        return 1.0 - bessel_j0(ax);
    }
    let q = 0.25 * ax * ax;
    let mut term: f64 = -1.0;
    let mut sum: f64 = 0.0;
    let mut k = 1.0;
    loop {
        term *= -q / (k * k);
        sum += term;
        k += 1.0;
        if term.abs() <= 1e-18 * sum.abs() || k > 200.0 {
            break;
        }
    }
    sum
}

/// sin(x)/x with sinc(0) = 1.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        // next term x^4/120 is below f64 resolution here
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term: f64 = 1.0;
    let mut sum: f64 = 1.0;
    let mut k = 1.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-300) || k < 3.0 {
        term *= -q / (k * k);
        sum += term;
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    sum
}

fn j1_over_x_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term: f64 = 0.5;
    let mut sum: f64 = 0.5;
    let mut k = 1.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-300) || k < 3.0 {
        term *= -q / (k * (k + 1.0));
        sum += term;
        k += 1.0;
        if k > 200.0 {
            break;
        }
    }
    sum
}

/// Returns (J0(x), J1(x)) for x > 0 by downward recurrence from an even
/// starting order well above x.
fn miller(x: f64) -> (f64, f64) {
    let start = x + 40.0 + 12.0 * x.cbrt();
    let mut m = start.ceil() as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let two_over_x = 2.0 / x;

    let mut j_above = 0.0; // J_{n+1}
    let mut j = 1.0; // J_n, arbitrary scale
    let mut even_sum = j; // sum of J_2k for k >= 1
    let mut j1 = 0.0;
    for n in (1..=m).rev() {
        let below = n as f64 * two_over_x * j - j_above;
        j_above = j;
        j = below;
        let order = n - 1;
        if order == 1 {
            j1 = j;
        } else if order > 0 && order % 2 == 0 {
            even_sum += j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            j_above *= 1e-250;
            even_sum *= 1e-250;
            j1 *= 1e-250;
        }
    }
    let norm = j + 2.0 * even_sum;
    (j / norm, j1 / norm)
}

fn hankel(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    let mut k = 1usize;
    loop {
        let odd = (2 * k - 1) as f64;
        let next = term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() || next.abs() < 1e-18 {
            break;
        }
        term = next;
        // t_k enters P (k even) or Q (k odd) with alternating sign
        let sign = if (k / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        if k.is_multiple_of(2) {
            p += sign * term;
        } else {
            q += sign * term;
        }
        k += 1;
    }
    let chi = x - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bessel's integral sampled on a uniform grid over a full period;
    // the trapezoid rule converges geometrically for these integrands.
    fn j0_quad(x: f64) -> f64 {
        let n = 4096;
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                (x * t.sin()).cos()
            })
            .sum::<f64>()
            / n as f64
    }

    fn j1_quad(x: f64) -> f64 {
        let n = 4096;
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                (t - x * t.sin()).cos()
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn known_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert_eq!(bessel_j1(0.0), 0.0);
        // Abramowitz & Stegun table 9.1
        assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j0(10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-14);
        assert!((bessel_j1(10.0) - 0.043_472_746_168_861_44).abs() < 1e-14);
        assert!(bessel_j0(J0_FIRST_ZERO).abs() < 1e-15);
    }

    #[test]
    fn matches_bessel_integral_across_regimes() {
        let mut x = 0.0;
        while x < 120.0 {
            assert!((bessel_j0(x) - j0_quad(x)).abs() < 1e-13, "j0 at {x}");
            assert!((bessel_j1(x) - j1_quad(x)).abs() < 1e-13, "j1 at {x}");
            x += 0.173;
        }
        // both sides of each branch switch
        for x in [7.999_999, 8.0, 8.000_001, 999.9, 1000.0, 1000.1, 2500.3] {
            assert!((bessel_j0(x) - j0_quad(x)).abs() < 1e-13, "j0 at {x}");
            assert!((bessel_j1(x) - j1_quad(x)).abs() < 1e-13, "j1 at {x}");
        }
    }

    #[test]
    fn parity() {
        for x in [0.3, 4.0, 9.5, 33.0] {
            assert_eq!(bessel_j0(-x), bessel_j0(x));
            assert_eq!(bessel_j1(-x), -bessel_j1(x));
        }
    }

    #[test]
    fn first_minimum_value() {
        // J0' = -J1, so the minimum sits at the first zero of J1
        let x = 3.831_705_970_207_512;
        assert!(bessel_j1(x).abs() < 1e-14);
        assert!((bessel_j0(x) - J0_FIRST_MIN).abs() < 1e-14);
    }

    #[test]
    fn j1_over_x_small() {
        assert_eq!(bessel_j1_over_x(0.0), 0.5);
        for x in [1e-6, 0.1, 2.0, 7.9, 8.1, 30.0] {
            let direct = bessel_j1(x) / x;
            assert!((bessel_j1_over_x(x) - direct).abs() < 1e-15 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn one_minus_j0_small_argument() {
        assert_eq!(one_minus_j0(0.0), 0.0);
        // leading terms x^2/4 - x^4/64
        let x = 1e-5;
        assert!((one_minus_j0(x) - (x * x / 4.0 - x.powi(4) / 64.0)).abs() < 1e-30);
        for x in [0.5, 2.0, 7.5, 9.0, 20.0] {
            assert!((one_minus_j0(x) - (1.0 - bessel_j0(x))).abs() < 1e-14);
        }
    }

    #[test]
    fn integer_order_series() {
        assert!((bessel_jn_series(0, 1.3) - bessel_j0(1.3)).abs() < 1e-16);
        assert!((bessel_jn_series(1, 1.3) - bessel_j1(1.3)).abs() < 1e-16);
        // recurrence J2 = (2/x) J1 - J0
        for x in [0.2, 1.0, 3.0, 6.0] {
            let j2 = 2.0 / x * bessel_j1(x) - bessel_j0(x);
            assert!((bessel_jn_series(2, x) - j2).abs() < 1e-14);
        }
        assert_eq!(bessel_jn_series(4, 0.0), 0.0);
    }

    #[test]
    fn sinc_limit() {
        assert_eq!(sinc(0.0), 1.0);
        assert!((sinc(1e-9) - 1.0).abs() < 1e-17);
        assert!((sinc(2.0) - 2f64.sin() / 2.0).abs() < 1e-16);
        assert!((sinc(-2.0) - sinc(2.0)).abs() < 1e-16);
    }
}
