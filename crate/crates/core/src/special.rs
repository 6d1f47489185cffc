//! Scalar special functions shared by the link, kernel and sampler code.
//!
//! Everything here works on `f64` and is careful about the far tails, since
//! the augmentation sampler evaluates log-cdfs at strongly negative
//! arguments and truncated draws at extreme locations.

use std::f64::consts::{LN_2, PI, SQRT_2};

use statrs::function::{beta, erf, gamma};

/// `ln(sqrt(2π))`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal cdf.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

/// `ln Φ(x)` for the standard normal.
///
/// Below -20 the erfc representation underflows long before the target
/// range, so the asymptotic Mills-ratio series is used there.
pub fn norm_log_cdf(x: f64) -> f64 {
    if x < -20.0 {
        let x2 = x * x;
        let inv = 1.0 / x2;
        // 1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8 - 945/x^10
        let series = 1.0 + inv * (-1.0 + inv * (3.0 + inv * (-15.0 + inv * (105.0 - 945.0 * inv))));
        -0.5 * x2 - LN_SQRT_2PI - (-x).ln() + series.ln()
    } else if x > 5.0 {
        (-0.5 * erf::erfc(x / SQRT_2)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Logistic sigmoid `1 / (1 + e^{-x})`, stable in both tails.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x) = -ln(1 + e^{-x})`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Logistic density `σ(x) σ(-x)`.
pub fn logistic_pdf(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// `ln Γ(x)`.
pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Log of the regularized incomplete beta `I_x(a, b)`.
///
/// `x_c` must equal `1 - x`; passing it separately keeps precision when `x`
/// is within rounding of one.
pub fn ln_beta_reg(a: f64, b: f64, x: f64, x_c: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x_c <= 0.0 {
        return 0.0;
    }
    let ln_front = a * x.ln() + b * x_c.ln() - beta::ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front + beta_cf(a, b, x).ln() - a.ln()
    } else {
        // I_x(a,b) = 1 - I_{1-x}(b,a)
        let tail = (ln_front + beta_cf(b, a, x_c).ln() - b.ln()).exp();
        (-tail).ln_1p()
    }
}

/// Student-t density with `nu` degrees of freedom.
pub fn student_t_pdf(x: f64, nu: f64) -> f64 {
    student_t_log_pdf(x, nu).exp()
}

pub fn student_t_log_pdf(x: f64, nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0))
        - ln_gamma(0.5 * nu)
        - 0.5 * (nu * PI).ln()
        - 0.5 * (nu + 1.0) * ln_1p_sq_over(x, nu)
}

/// `ln(1 + x²/ν)` without overflowing `x²`.
fn ln_1p_sq_over(x: f64, nu: f64) -> f64 {
    let ax = x.abs();
    if ax > 1e100 {
        2.0 * ax.ln() - nu.ln() + (nu / ax / ax).ln_1p()
    } else {
        (x * x / nu).ln_1p()
    }
}

/// `ln T_ν(x)` through the incomplete beta representation.
///
/// For `x < 0`, `T_ν(x) = I_{ν/(ν+x²)}(ν/2, 1/2) / 2`. The log is taken
/// inside the continued fraction so there is no underflow even at
/// `x = -1e6`.
pub fn student_t_log_cdf(x: f64, nu: f64) -> f64 {
    if x < -1e100 {
        // leading power-law tail; the relative error is O(ν / x²)
        let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
        return ln_c + 0.5 * (nu - 1.0) * nu.ln() - nu * (-x).ln();
    }
    let x2 = x * x;
    let w = nu / (nu + x2);
    let w_c = x2 / (nu + x2);
    let ln_half_tail = ln_beta_reg(0.5 * nu, 0.5, w, w_c) - LN_2;
    if x <= 0.0 {
        ln_half_tail
    } else {
        (-ln_half_tail.exp()).ln_1p()
    }
}

pub fn student_t_cdf(x: f64, nu: f64) -> f64 {
    student_t_log_cdf(x, nu).exp()
}

/// Upper-tail probability `P(T > x)`.
pub fn student_t_sf(x: f64, nu: f64) -> f64 {
    student_t_cdf(-x, nu)
}

/// Student-t quantile via the inverse regularized incomplete beta.
pub fn student_t_quantile(p: f64, nu: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let lower = p.min(1.0 - p);
    let w = beta::inv_beta_reg(0.5 * nu, 0.5, 2.0 * lower);
    let t = (nu * (1.0 - w) / w).sqrt();
    if p < 0.5 {
        -t
    } else {
        t
    }
}

/// Modified Bessel function of the second kind `K_ν(z)` for `z > 0`.
///
/// Evaluated from `K_ν(z) = ∫_0^∞ exp(-z cosh t) cosh(ν t) dt` by the
/// trapezoid rule; the integrand decays doubly exponentially so a fixed
/// step converges to machine precision.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    assert!(z > 0.0, "bessel_k requires z > 0");
    let nu = nu.abs();
    let log_cutoff = 745.0;
    // Integrand is negligible once z cosh t - ν t exceeds the cutoff + z.
    let mut t_max = ((log_cutoff + z) / z).acosh().max(1.0);
    while nu * t_max - z * t_max.cosh() > -log_cutoff {
        t_max *= 1.5;
    }
    let h = 0.01;
    let n = (t_max / h).ceil() as usize;
    let mut sum = 0.5 * (-z).exp();
    for i in 1..=n {
        let t = i as f64 * h;
        sum += (-z * t.cosh()).exp() * (nu * t).cosh();
    }
    sum * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn norm_log_cdf_matches_direct_where_both_valid() {
        for &x in &[-19.9, -10.0, -3.0, 0.0, 2.0, 6.0] {
            assert_abs_diff_eq!(norm_log_cdf(x), norm_cdf(x).ln(), epsilon = 1e-9);
        }
        // continuity across the switch to the asymptotic branch
        let left = norm_log_cdf(-20.0 - 1e-9);
        let right = norm_log_cdf(-20.0 + 1e-9);
        assert!((left - right).abs() < 1e-7);
        assert!(norm_log_cdf(-40.0).is_finite());
    }

    #[test]
    fn beta_reg_against_statrs() {
        for &(a, b, x) in &[(2.0, 0.5, 0.3), (0.5, 0.5, 0.9), (5.0, 0.5, 0.999), (0.5, 3.0, 0.01)] {
            let ours = ln_beta_reg(a, b, x, 1.0 - x).exp();
            let theirs = beta::beta_reg(a, b, x);
            assert_abs_diff_eq!(ours, theirs, epsilon = 1e-12);
        }
    }

    #[test]
    fn student_t_cdf_cauchy_closed_form() {
        for &x in &[-50.0, -3.0, -0.2, 0.0, 1.0, 7.0] {
            let exact = 0.5 + (x as f64).atan() / PI;
            assert_abs_diff_eq!(student_t_cdf(x, 1.0), exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn student_t_quantile_inverts_cdf() {
        for &nu in &[1.0, 4.0, 30.0] {
            for &p in &[1e-6, 0.01, 0.3, 0.5, 0.8, 0.999] {
                let q = student_t_quantile(p, nu);
                assert_abs_diff_eq!(student_t_cdf(q, nu), p, epsilon = 1e-9 * p.max(1e-3));
            }
        }
    }

    #[test]
    fn bessel_half_order_closed_form() {
        for &z in &[0.01, 0.3, 1.0, 4.0, 25.0] {
            let exact = (PI / (2.0 * z)).sqrt() * (-z as f64).exp();
            let got = bessel_k(0.5, z);
            assert!((got - exact).abs() <= 1e-10 * exact.max(1e-300), "z={z} {got} {exact}");
            let exact32 = exact * (1.0 + 1.0 / z);
            let got32 = bessel_k(1.5, z);
            assert!((got32 - exact32).abs() <= 1e-10 * exact32);
        }
    }

    #[test]
    fn sigmoid_tails() {
        assert_abs_diff_eq!(sigmoid(0.0), 0.5);
        assert_abs_diff_eq!(log_sigmoid(-800.0), -800.0, epsilon = 1e-9);
        assert!(log_sigmoid(40.0) < 0.0);
    }
}
