//! Special functions: Lanczos gamma, generalized binomial coefficients and
//! the n-fBm normalizing constant.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function via the Lanczos approximation (g = 7, nine terms), with
/// reflection for arguments below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Generalized binomial coefficient `x choose j` as the falling factorial
/// `x (x-1) ... (x-j+1) / j!`. Defined for every real `x`.
pub fn gen_binomial(x: f64, j: u32) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (x - i as f64) / (i as f64 + 1.0))
}

/// `(Gamma(2H + 1) |sin(pi H)|)^-1`, valid for `order - 1 < H < order`.
pub fn normalizing_constant(h: f64, order: u32) -> Result<f64> {
    if order == 0 {
        return Err(Error::InvalidParameter("order must be at least 1".into()));
    }
    let lo = (order - 1) as f64;
    let hi = order as f64;
    if !(h > lo && h < hi) {
        return Err(Error::InvalidParameter(format!(
            "H={h} must lie strictly inside ({lo}, {hi}) for order {order}"
        )));
    }
    let s = (PI * h).sin().abs();
    Ok(1.0 / (gamma(2.0 * h + 1.0) * s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn gamma_at_integers_matches_factorials() {
        let mut fact = 1.0;
        for n in 1..=20u32 {
            assert!(rel(gamma(n as f64), fact) < 1e-13, "n={n}");
            fact *= n as f64;
        }
    }

    #[test]
    fn gamma_at_half_integers() {
        // Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!)
        let sqrt_pi = PI.sqrt();
        let mut expected = sqrt_pi;
        for k in 0..10 {
            let x = k as f64 + 0.5;
            assert!(rel(gamma(x), expected) < 1e-13, "x={x}");
            expected *= x;
        }
    }

    #[test]
    fn gamma_recurrence_on_needed_range() {
        let mut x = 0.05;
        while x < 9.0 {
            assert!(rel(gamma(x + 1.0), x * gamma(x)) < 1e-13, "x={x}");
            x += 0.173;
        }
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(gen_binomial(1.3, 0), 1.0);
        assert_eq!(gen_binomial(3.0, 1), 3.0);
        assert!((gen_binomial(2.6, 2) - 2.08).abs() < 1e-14);
        assert_eq!(gen_binomial(5.0, 2), 10.0);
        assert_eq!(gen_binomial(4.0, 5), 0.0);
        // (-1 choose j) = (-1)^j
        assert_eq!(gen_binomial(-1.0, 3), -1.0);
    }

    #[test]
    fn normalizing_constant_examples() {
        assert!((normalizing_constant(0.5, 1).unwrap() - 1.0).abs() < 1e-13);
        assert!((normalizing_constant(1.5, 2).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        assert!(normalizing_constant(1.0, 1).is_err());
        assert!(normalizing_constant(1.0, 2).is_err());
        assert!(normalizing_constant(2.5, 2).is_err());
        assert!(normalizing_constant(0.5, 0).is_err());
    }
}
