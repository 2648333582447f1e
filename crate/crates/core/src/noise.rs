//! Amplification-chain noise arithmetic.

use crate::constants::{BOLTZMANN, PLANCK};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplChain {
    /// Paramp power gain (linear).
    pub g_p: f64,
    /// Intermediate gain factor (linear), enters squared.
    pub g_i: f64,
    /// Post-amplifier gain (linear).
    pub g_a: f64,
    /// Hot reference temperature, K.
    pub t_h: f64,
}

impl AmplChain {
    pub fn new(g_p: f64, g_i: f64, g_a: f64, t_h: f64) -> Result<Self> {
        for (name, v) in [("g_p", g_p), ("g_i", g_i), ("g_a", g_a), ("t_h", t_h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self { g_p, g_i, g_a, t_h })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyEstimate {
    pub n_noise: f64,
    pub eta: f64,
}

impl EfficiencyEstimate {
    pub fn from_noise(n_noise: f64) -> Result<Self> {
        Ok(Self { n_noise, eta: efficiency_from_noise(n_noise)? })
    }
}

/// Temperature equivalent of one photon, h·f/k_B.
pub fn quantum_limit_temperature(f: f64) -> Result<f64> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::domain(format!("frequency must be >= 0, got {f}")));
    }
    Ok(PLANCK * f / BOLTZMANN)
}

/// T_sys = (y − 1)/(g_p·g_i²·g_a)·t_h.
pub fn system_noise_temperature(y: f64, chain: &AmplChain) -> Result<f64> {
    if !(y >= 1.0 && y.is_finite()) {
        return Err(Error::domain(format!("Y-factor must be >= 1, got {y}")));
    }
    Ok((y - 1.0) / (chain.g_p * chain.g_i * chain.g_i * chain.g_a) * chain.t_h)
}

/// Rayleigh–Jeans photon number k_B·T/(h·f).
pub fn noise_photons_from_temperature(t_sys: f64, f: f64) -> Result<f64> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::domain(format!("frequency must be > 0, got {f}")));
    }
    if !(t_sys >= 0.0 && t_sys.is_finite()) {
        return Err(Error::domain(format!("temperature must be >= 0, got {t_sys}")));
    }
    Ok(BOLTZMANN * t_sys / (PLANCK * f))
}

pub fn efficiency_from_noise(n_noise: f64) -> Result<f64> {
    if !(n_noise >= 0.0) {
        return Err(Error::domain(format!("noise photon number must be >= 0, got {n_noise}")));
    }
    Ok(1.0 / (1.0 + n_noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantum_limit_examples() {
        assert_eq!(quantum_limit_temperature(0.0).unwrap(), 0.0);
        assert!((quantum_limit_temperature(9.4e9).unwrap() - 0.4511).abs() < 1e-4);
        assert!((quantum_limit_temperature(6e9).unwrap() - 0.2880).abs() < 1e-4);
        assert!(matches!(quantum_limit_temperature(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn system_noise_examples() {
        let chain = AmplChain::new(100.0, 1.0, 1.0, 4.0).unwrap();
        assert_eq!(system_noise_temperature(1.0, &chain).unwrap(), 0.0);
        assert!((system_noise_temperature(3.0, &chain).unwrap() - 0.08).abs() < 1e-12 * 0.08);
        let hot = AmplChain { t_h: 8.0, ..chain };
        assert_eq!(system_noise_temperature(3.0, &hot).unwrap(), 2.0 * system_noise_temperature(3.0, &chain).unwrap());
        assert!(system_noise_temperature(0.5, &chain).is_err());
        assert!(AmplChain::new(0.0, 1.0, 1.0, 4.0).is_err());
    }

    #[test]
    fn photon_examples() {
        let f = 7.3e9;
        let n = noise_photons_from_temperature(quantum_limit_temperature(f).unwrap(), f).unwrap();
        assert!((n - 1.0).abs() < 1e-15);
        assert_eq!(noise_photons_from_temperature(0.0, f).unwrap(), 0.0);
        assert!(noise_photons_from_temperature(1.0, 0.0).is_err());
        let t = 2.78 * quantum_limit_temperature(f).unwrap();
        let n = noise_photons_from_temperature(t, f).unwrap();
        assert!((efficiency_from_noise(n).unwrap() - 0.26455).abs() < 1e-5);
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(efficiency_from_noise(0.0).unwrap(), 1.0);
        assert!((efficiency_from_noise(2.78).unwrap() - 0.26455).abs() < 1e-5);
        assert!(efficiency_from_noise(3.0).unwrap() < efficiency_from_noise(2.78).unwrap());
        assert!(efficiency_from_noise(-0.1).is_err());
    }

    proptest! {
        #[test]
        fn photon_round_trip(n in 0.0..1e3f64, f in 1e6..1e12f64) {
            let t = quantum_limit_temperature(f).unwrap() * n;
            let back = noise_photons_from_temperature(t, f).unwrap();
            prop_assert!((back - n).abs() <= 1e-12 * n.max(1.0));
        }

        #[test]
        fn efficiency_decreasing(a in 0.0..1e6f64, d in 1e-6..1e3f64) {
            let (ea, eb) = (efficiency_from_noise(a).unwrap(), efficiency_from_noise(a + d).unwrap());
            prop_assert!(eb < ea && ea <= 1.0 && eb > 0.0);
        }

        #[test]
        fn system_noise_scaling(
            y in 1.5..100.0f64, gp in 1e-3..1e6f64, gi in 1e-3..1e3f64, ga in 1e-3..1e6f64,
            th in 1e-3..1e3f64, c in 0.1..10.0f64,
        ) {
            let base = AmplChain::new(gp, gi, ga, th).unwrap();
            let t0 = system_noise_temperature(y, &base).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE);
            let hot = system_noise_temperature(y, &AmplChain { t_h: c * th, ..base }).unwrap();
            let more_y = system_noise_temperature(1.0 + c * (y - 1.0), &base).unwrap();
            let more_p = system_noise_temperature(y, &AmplChain { g_p: c * gp, ..base }).unwrap();
            let more_a = system_noise_temperature(y, &AmplChain { g_a: c * ga, ..base }).unwrap();
            let more_i = system_noise_temperature(y, &AmplChain { g_i: c * gi, ..base }).unwrap();
            prop_assert!(rel(hot, c * t0));
            prop_assert!(rel(more_y, c * t0));
            prop_assert!(rel(more_p, t0 / c));
            prop_assert!(rel(more_a, t0 / c));
            prop_assert!(rel(more_i, t0 / (c * c)));
        }
    }
}
