//! Special functions: digamma and the Beta(a, b) law.

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// B_{2k} / (2k) for k = 1..=7.
const ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// `psi(x) = Gamma'(x) / Gamma(x)` for `x > 0`.
///
/// Shifts up with `psi(x) = psi(x + 1) - 1/x` until `x >= 10`, then sums the
/// asymptotic series through the `x^-14` term.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain { name: "x", value: x, domain: "x > 0" });
    }
    let mut x = x;
    let mut shift = 0.0;
    let mut comp = 0.0;
    while x < 10.0 {
        // Compensated accumulation of 1/x terms; the first can dominate.
        let y = 1.0 / x - comp;
        let t = shift + y;
        comp = (t - shift) - y;
        shift = t;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut series = 0.0;
    for c in ASYMPTOTIC.iter().rev() {
        series = series * inv2 + c;
    }
    series *= inv2;
    Ok(x.ln() - 0.5 / x - series - shift)
}

/// Density of Beta(a, b) at `u` in (0, 1).
pub fn beta_pdf(u: f64, a: f64, b: f64) -> f64 {
    use statrs::function::beta::ln_beta;
    ((a - 1.0) * u.ln() + (b - 1.0) * (-u).ln_1p() - ln_beta(a, b)).exp()
}

/// Regularized incomplete beta `I_u(a, b)`, i.e. the Beta(a, b) CDF.
pub fn beta_cdf(u: f64, a: f64, b: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    statrs::function::beta::beta_reg(a, b, u)
}

/// Raw moment `E[X^p]` of Beta(a, b) for integer `p`.
pub fn beta_moment(a: f64, b: f64, p: u32) -> f64 {
    (0..p).map(|k| (a + k as f64) / (a + b + k as f64)).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from an independent arbitrary-precision evaluation (mpmath.digamma).
    const REFERENCE: [(f64, f64); 8] = [
        (0.001, -1000.5755719318103),
        (0.3, -3.502524222200133),
        (0.5, -1.9635100260214235),
        (1.0, -0.5772156649015329),
        (2.5, 0.7031566406452432),
        (9.99, 2.250700372831201),
        (123.4, 4.8113737751162775),
        (1000.0, 6.907255195648812),
    ];

    #[test]
    fn digamma_matches_reference_values() {
        for (x, want) in REFERENCE {
            let got = digamma(x).unwrap();
            assert!((got - want).abs() <= 1e-12, "psi({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn digamma_identities() {
        let g = EULER_GAMMA;
        assert!((digamma(1.0).unwrap() + g).abs() < 1e-15);
        assert!((digamma(2.0).unwrap() - (1.0 - g)).abs() < 1e-15);
        assert!((digamma(0.5).unwrap() - (-g - 2.0 * std::f64::consts::LN_2)).abs() < 1e-14);
        for &x in &[0.01, 0.7, 3.3, 42.0] {
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + 1.0 / x;
            assert!((lhs - rhs).abs() <= 1e-13 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn digamma_domain() {
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
        assert!(digamma(f64::NAN).is_err());
    }

    #[test]
    fn beta_half_half_is_arcsine() {
        for u in [0.01f64, 0.25, 0.5, 0.9] {
            let want = 2.0 / std::f64::consts::PI * u.sqrt().asin();
            assert!((beta_cdf(u, 0.5, 0.5) - want).abs() < 1e-12);
        }
        let f = beta_pdf(0.25, 0.5, 0.5);
        assert!((f - 4.0 / (std::f64::consts::PI * 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn beta_moments() {
        assert!((beta_moment(0.5, 0.5, 1) - 0.5).abs() < 1e-15);
        assert!((beta_moment(0.7, 0.3, 2) - 0.7 * 1.7 / 2.0).abs() < 1e-15);
        assert_eq!(beta_moment(2.0, 3.0, 0), 1.0);
    }
}
