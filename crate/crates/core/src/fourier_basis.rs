//! Random Fourier features in the response.
//!
//! A shift-invariant correlation `δ(y - y')` with `δ(0) = 1` is the
//! characteristic function of some spectral law `P(dω)`, and then
//! `δ(y - y') = E[2 cos(ωy + b) cos(ωy' + b)]` for `ω ~ P`, `b ~ U(0, 2π)`.
//! Each tree carries one feature `B(y) = √2 cos(ωy + b)`.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::special;

/// One random feature `√2 cos(ω y + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisFunction {
    pub omega: f64,
    pub phase: f64,
}

impl BasisFunction {
    pub fn new(omega: f64, phase: f64) -> Self {
        let phase = phase.rem_euclid(2.0 * PI);
        Self { omega, phase }
    }

    /// The constant feature `√2`.
    pub fn constant() -> Self {
        Self { omega: 0.0, phase: 0.0 }
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        basis_eval(self, y)
    }
}

#[inline]
pub fn basis_eval(basis: &BasisFunction, y: f64) -> f64 {
    SQRT_2 * (basis.omega * y + basis.phase).cos()
}

/// Spectral family of the target kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-d²/(2ρ²))`, spectral law `Normal(0, ρ^{-2})`.
    SquaredExponential,
    /// Matérn of order `ν/2`, spectral law `t_ν` scaled by `ρ^{-1}`.
    Matern { nu: f64 },
    /// `1/(1 + d²/ρ²)`, spectral law Laplace with rate `ρ`.
    Cauchy,
}

impl Default for KernelFamily {
    fn default() -> Self {
        KernelFamily::SquaredExponential
    }
}

/// A kernel family together with its length scale `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    pub length_scale: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, length_scale: f64) -> Self {
        Self { family, length_scale }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(format!("length scale must be positive, got {}", self.length_scale));
        }
        if let KernelFamily::Matern { nu } = self.family {
            if !(nu > 0.0) {
                return Err(format!("Matern nu must be positive, got {nu}"));
            }
        }
        Ok(())
    }

    /// Draw a frequency from the spectral law.
    pub fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let rho = self.length_scale;
        match self.family {
            KernelFamily::SquaredExponential => {
                let z: f64 = rng.sample(StandardNormal);
                z / rho
            }
            KernelFamily::Matern { nu } => {
                let t = StudentT::new(nu).expect("nu validated").sample(rng);
                t / rho
            }
            KernelFamily::Cauchy => {
                let e = Exp::new(rho).expect("rho validated").sample(rng);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
        }
    }

    /// Log density of the spectral law at `omega`.
    pub fn spectral_log_density(&self, omega: f64) -> f64 {
        let rho = self.length_scale;
        match self.family {
            KernelFamily::SquaredExponential => {
                rho.ln() - special::LN_SQRT_2PI - 0.5 * (rho * omega).powi(2)
            }
            KernelFamily::Matern { nu } => rho.ln() + special::student_t_log_pdf(rho * omega, nu),
            KernelFamily::Cauchy => (0.5 * rho).ln() - rho * omega.abs(),
        }
    }
}

/// Draw a feature: `ω` from the spectral law, `b ~ Uniform(0, 2π)`.
pub fn sample_basis<R: Rng + ?Sized>(rng: &mut R, kernel: &Kernel) -> BasisFunction {
    let omega = kernel.sample_frequency(rng);
    let phase = rng.random::<f64>() * 2.0 * PI;
    BasisFunction { omega, phase }
}

/// Closed-form correlation `δ(y - y')` of the kernel.
pub fn kernel_cov(kernel: &Kernel, y: f64, y_prime: f64) -> f64 {
    let d = (y - y_prime).abs();
    if d == 0.0 {
        return 1.0;
    }
    let rho = kernel.length_scale;
    match kernel.family {
        KernelFamily::SquaredExponential => (-d * d / (2.0 * rho * rho)).exp(),
        KernelFamily::Cauchy => 1.0 / (1.0 + d * d / (rho * rho)),
        KernelFamily::Matern { nu } => {
            let order = 0.5 * nu;
            let arg = nu.sqrt() * d / rho;
            if arg > 700.0 {
                return 0.0;
            }
            // 2^{1-s}/Γ(s) · arg^s K_s(arg), in logs
            let log_front = (1.0 - order) * std::f64::consts::LN_2 - special::ln_gamma(order) + order * arg.ln();
            (log_front + special::bessel_k(order, arg).ln()).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn eval_examples() {
        assert_abs_diff_eq!(BasisFunction::new(0.0, 0.0).eval(3.7), SQRT_2);
        assert_abs_diff_eq!(BasisFunction::new(PI, 0.0).eval(1.0), -SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn kernel_closed_forms() {
        let se = Kernel::new(KernelFamily::SquaredExponential, 1.0);
        assert_abs_diff_eq!(kernel_cov(&se, 0.3, 1.3), (-0.5f64).exp(), epsilon = 1e-15);
        let m = Kernel::new(KernelFamily::Matern { nu: 1.0 }, 2.0);
        assert_abs_diff_eq!(kernel_cov(&m, 0.0, 2.0), (-1.0f64).exp(), epsilon = 1e-12);
        for k in [se, m, Kernel::new(KernelFamily::Cauchy, 0.7)] {
            assert_eq!(kernel_cov(&k, 0.4, 0.4), 1.0);
        }
    }

    #[test]
    fn matern_three_closed_form() {
        // order 3/2: (1 + √3 d/ρ) exp(-√3 d/ρ)
        let k = Kernel::new(KernelFamily::Matern { nu: 3.0 }, 0.8);
        for &d in &[0.05, 0.4, 1.0, 3.0] {
            let a = 3f64.sqrt() * d / 0.8;
            assert_abs_diff_eq!(kernel_cov(&k, 0.0, d), (1.0 + a) * (-a).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn phase_in_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = Kernel::new(KernelFamily::Cauchy, 1.0);
        for _ in 0..1000 {
            let b = sample_basis(&mut rng, &k);
            assert!((0.0..2.0 * PI).contains(&b.phase));
        }
        assert!((0.0..2.0 * PI).contains(&BasisFunction::new(1.0, -0.1).phase));
    }

    #[test]
    fn squared_exponential_frequency_variance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let k = Kernel::new(KernelFamily::SquaredExponential, 2.0);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| k.sample_frequency(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 0.25).abs() < 0.0025, "var {var}");
    }

    #[test]
    fn spectral_densities_normalize() {
        for k in [
            Kernel::new(KernelFamily::SquaredExponential, 0.6),
            Kernel::new(KernelFamily::Matern { nu: 3.0 }, 1.2),
            Kernel::new(KernelFamily::Cauchy, 0.9),
        ] {
            let h = 0.001;
            let total: f64 = (-200_000..=200_000)
                .map(|i| k.spectral_log_density(i as f64 * h).exp() * h)
                .sum();
            assert!((total - 1.0).abs() < 1e-3, "{k:?}: {total}");
        }
    }
}
