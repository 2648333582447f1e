//! Two-port (ABCD) algebra for lossless transmission-line sections.
//!
//! Chains are listed from the external port toward the amplifier. All
//! functions are pure, so frequency grids can be evaluated in any order.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Lossless, dispersionless line section whose electrical length is given
/// as a fraction of a wavelength at `f_design`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionLineSection {
    pub z0: f64,
    pub f_design: f64,
    pub length_fraction: f64,
}

impl TransmissionLineSection {
    pub fn new(z0: f64, f_design: f64, length_fraction: f64) -> Result<Self> {
        if !(z0 > 0.0 && z0.is_finite()) {
            return Err(Error::domain(format!("line impedance must be > 0, got {z0}")));
        }
        if !(f_design > 0.0 && f_design.is_finite()) {
            return Err(Error::domain(format!("design frequency must be > 0, got {f_design}")));
        }
        if !(length_fraction > 0.0 && length_fraction.is_finite()) {
            return Err(Error::domain(format!(
                "length fraction must be > 0, got {length_fraction}"
            )));
        }
        Ok(Self { z0, f_design, length_fraction })
    }

    pub fn quarter_wave(z0: f64, f_design: f64) -> Result<Self> {
        Self::new(z0, f_design, 0.25)
    }

    pub fn half_wave(z0: f64, f_design: f64) -> Result<Self> {
        Self::new(z0, f_design, 0.5)
    }

    /// Electrical phase θ(f) in radians.
    pub fn electrical_length(&self, f: f64) -> f64 {
        2.0 * PI * self.length_fraction * f / self.f_design
    }
}

/// Complex 2×2 transmission matrix. `b` is in Ω, `c` in S.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPortABCD {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl TwoPortABCD {
    pub fn identity() -> Self {
        Self {
            a: Complex64::new(1.0, 0.0),
            b: Complex64::new(0.0, 0.0),
            c: Complex64::new(0.0, 0.0),
            d: Complex64::new(1.0, 0.0),
        }
    }

    pub fn determinant(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    /// Matrix for a line of electrical length `theta`.
    pub fn line(z0: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let j = Complex64::i();
        Self {
            a: Complex64::new(c, 0.0),
            b: j * z0 * s,
            c: j * s / z0,
            d: Complex64::new(c, 0.0),
        }
    }

    /// Input impedance with the output port terminated by an admittance.
    /// Returns numerator and denominator so an open input (`den == 0`) can
    /// still be turned into a reflection coefficient.
    pub fn input_impedance_parts(&self, y_load: Complex64) -> (Complex64, Complex64) {
        (self.a + self.b * y_load, self.c + self.d * y_load)
    }
}

impl Mul for TwoPortABCD {
    type Output = TwoPortABCD;

    fn mul(self, rhs: TwoPortABCD) -> TwoPortABCD {
        cascade(&self, &rhs)
    }
}

/// Ordered sections from the external port toward the amplifier, plus the
/// real impedance of the external environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerChain {
    pub sections: Vec<TransmissionLineSection>,
    pub z_ref: f64,
}

impl TransformerChain {
    pub const DEFAULT_Z_REF: f64 = 50.0;

    pub fn new(sections: Vec<TransmissionLineSection>, z_ref: f64) -> Result<Self> {
        if sections.is_empty() {
            return Err(Error::domain("transformer chain needs at least one section"));
        }
        if !(z_ref > 0.0 && z_ref.is_finite()) {
            return Err(Error::domain(format!("reference impedance must be > 0, got {z_ref}")));
        }
        Ok(Self { sections, z_ref })
    }

    /// λ/4 matching section from `z_ref` to `z_target` followed by a λ/2
    /// section of impedance `z_half`, both designed at `f_design`.
    pub fn quarter_half(z_ref: f64, z_target: f64, z_half: f64, f_design: f64) -> Result<Self> {
        let z_quarter = quarter_wave_impedance(z_ref, z_target)?;
        Self::new(
            vec![
                TransmissionLineSection::quarter_wave(z_quarter, f_design)?,
                TransmissionLineSection::half_wave(z_half, f_design)?,
            ],
            z_ref,
        )
    }

    /// Cascade of all sections seen from the amplifier looking out.
    pub fn abcd_from_device(&self, f: f64) -> Result<TwoPortABCD> {
        let mut net = TwoPortABCD::identity();
        for section in self.sections.iter().rev() {
            net = cascade(&net, &line_abcd(section, f)?);
        }
        Ok(net)
    }

    /// Cascade of all sections seen from the external port.
    pub fn abcd_from_port(&self, f: f64) -> Result<TwoPortABCD> {
        let mut net = TwoPortABCD::identity();
        for section in &self.sections {
            net = cascade(&net, &line_abcd(section, f)?);
        }
        Ok(net)
    }
}

/// Characteristic impedance of the λ/4 section matching `z_ref` to `z_target`.
pub fn quarter_wave_impedance(z_ref: f64, z_target: f64) -> Result<f64> {
    if !(z_ref > 0.0 && z_target > 0.0) {
        return Err(Error::domain("quarter-wave endpoints must be positive impedances"));
    }
    Ok((z_ref * z_target).sqrt())
}

pub fn line_abcd(section: &TransmissionLineSection, f: f64) -> Result<TwoPortABCD> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::domain(format!("frequency must be > 0, got {f}")));
    }
    Ok(TwoPortABCD::line(section.z0, section.electrical_length(f)))
}

/// `first` followed by `second` (port side first).
pub fn cascade(first: &TwoPortABCD, second: &TwoPortABCD) -> TwoPortABCD {
    TwoPortABCD {
        a: first.a * second.a + first.b * second.c,
        b: first.a * second.b + first.b * second.d,
        c: first.c * second.a + first.d * second.c,
        d: first.c * second.b + first.d * second.d,
    }
}

pub fn input_impedance(net: &TwoPortABCD, z_load: Complex64) -> Result<Complex64> {
    let den = net.c * z_load + net.d;
    let num = net.a * z_load + net.b;
    if den.norm() <= 1e-15 * (num.norm() + net.d.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::Pole("input impedance is an open circuit".into()));
    }
    Ok(num / den)
}

/// Reflection coefficient Γ = (z − z_ref)/(z + z_ref).
pub fn reflection(z_in: Complex64, z_ref: f64) -> Result<Complex64> {
    if !(z_ref > 0.0) {
        return Err(Error::domain(format!("reference impedance must be > 0, got {z_ref}")));
    }
    if z_in.is_infinite() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let den = z_in + z_ref;
    if den.norm() <= 1e-15 * z_ref {
        return Err(Error::Pole("reflection singular at z_in = -z_ref".into()));
    }
    Ok((z_in - z_ref) / den)
}

/// Γ from an impedance expressed as `num/den`; valid when `den` vanishes.
pub fn reflection_from_parts(num: Complex64, den: Complex64, z_ref: f64) -> Result<Complex64> {
    let d = num + den * z_ref;
    if d.norm() <= 1e-300 {
        return Err(Error::Pole("reflection singular at z_in = -z_ref".into()));
    }
    Ok((num - den * z_ref) / d)
}

/// Impedance seen from the amplifier node looking back through the chain
/// into `z_ref`.
pub fn environment_impedance(chain: &TransformerChain, f: f64) -> Result<Complex64> {
    let net = chain.abcd_from_device(f)?;
    input_impedance(&net, Complex64::new(chain.z_ref, 0.0))
}
