//! Pump-on response: linearised signal/idler gain with a frequency-dependent
//! environment, bandwidth extraction, Kerr saturation and pump tuning.
//!
//! The mode sees the environment through its admittance at each frequency:
//! the conductance sets the decay rate κ(f) = Re[Y_env]/C_p and the total
//! node susceptance sets the mismatch −B(f)/(2·C_p) between the mode and
//! the drive. Signal and idler are coupled by a degenerate parametric drive
//! of strength λ at `f_pump`, idler at `f_pump − f_s`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::constants::{ELEMENTARY_CHARGE, HBAR};
use crate::error::{Error, Result};
use crate::roots::{golden_max, Poly};
use crate::squid::{resonant_frequency, DeviceModel, FluxBias};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpSettings {
    /// Pump frequency, Hz.
    pub f_pump: f64,
    /// Parametric drive strength λ, rad/s.
    pub strength: f64,
    /// Pump phase, rad.
    pub phase: f64,
}

impl PumpSettings {
    pub fn new(f_pump: f64, strength: f64, phase: f64) -> Result<Self> {
        if !(f_pump > 0.0 && f_pump.is_finite()) {
            return Err(Error::domain(format!("pump frequency must be > 0, got {f_pump}")));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::domain(format!("pump strength must be >= 0, got {strength}")));
        }
        Ok(Self { f_pump, strength, phase })
    }

    pub fn off(f_pump: f64) -> Self {
        Self { f_pump, strength: 0.0, phase: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainProfile {
    pub freq_grid: Vec<f64>,
    pub signal_gain: Vec<Complex64>,
    pub idler_gain: Vec<Complex64>,
    pub pump: PumpSettings,
}

impl GainProfile {
    /// Builds a profile from magnitudes only (measured data); idler gain is
    /// unknown and left at zero.
    pub fn from_signal_db(freq_grid: Vec<f64>, gain_db: &[f64], pump: PumpSettings) -> Self {
        let signal_gain = gain_db.iter().map(|g| Complex64::new(10f64.powf(g / 20.0), 0.0)).collect();
        let idler_gain = vec![Complex64::new(0.0, 0.0); freq_grid.len()];
        Self { freq_grid, signal_gain, idler_gain, pump }
    }

    pub fn gain_db(&self) -> Vec<f64> {
        self.signal_gain.iter().map(|g| 20.0 * g.norm().log10()).collect()
    }

    /// Largest gain on the grid, dB, and the frequency where it occurs.
    pub fn peak(&self) -> (f64, f64) {
        self.gain_db()
            .into_iter()
            .zip(&self.freq_grid)
            .fold((f64::NEG_INFINITY, 0.0), |acc, (g, &f)| if g > acc.0 { (g, f) } else { acc })
    }

    /// Interior points strictly above the left neighbour and not below the right.
    pub fn local_maxima(&self) -> Vec<usize> {
        let g = self.gain_db();
        (1..g.len().saturating_sub(1))
            .filter(|&i| g[i] > g[i - 1] && g[i] >= g[i + 1])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrModel {
    /// Self-Kerr shift per intracavity photon, rad/s (negative).
    pub kerr_per_photon: f64,
    /// ħω at the operating point, J.
    pub photon_energy: f64,
}

impl KerrModel {
    /// Charging-energy Kerr diluted by the linear inductance:
    /// K = −(e²/(2ħ·C_p))·p³ with p = L_J/(L_J + l_stray).
    pub fn from_device(device: &DeviceModel, flux: FluxBias) -> Result<Self> {
        let p = device.participation(flux)?;
        let f0 = resonant_frequency(device, flux)?;
        Ok(Self {
            kerr_per_photon: -(ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * HBAR * device.c_p)) * p.powi(3),
            photon_energy: HBAR * 2.0 * PI * f0,
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { kerr_per_photon: self.kerr_per_photon * factor, ..*self }
    }
}

/// Decay rate and drive mismatch of the mode at one frequency, both rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCoefficients {
    pub kappa: f64,
    /// ω_mode(f) − ω at this frequency.
    pub mismatch: f64,
}

/// κ(f) = Re[Y_env(f)]/C_p.
pub fn coupling_rate(device: &DeviceModel, f: f64, _flux: FluxBias) -> Result<f64> {
    let y = device.environment.admittance(f)?;
    if !(y.re > 0.0) {
        return Err(Error::UnphysicalEnvironment { freq: f, re_y: y.re });
    }
    Ok(y.re / device.c_p)
}

pub fn mode_coefficients(device: &DeviceModel, f: f64, flux: FluxBias) -> Result<ModeCoefficients> {
    let (b_total, g_env) = device.node_admittance(f, flux)?;
    if !(g_env > 0.0) {
        return Err(Error::UnphysicalEnvironment { freq: f, re_y: g_env });
    }
    Ok(ModeCoefficients { kappa: g_env / device.c_p, mismatch: -b_total / (2.0 * device.c_p) })
}

/// Reflection gains and intracavity amplitudes for a unit-flux signal input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalIdlerResponse {
    pub signal_gain: Complex64,
    pub idler_gain: Complex64,
    /// Intracavity signal amplitude per √(photon/s) of input.
    pub signal_amplitude: Complex64,
    /// Conjugate intracavity idler amplitude per √(photon/s) of input.
    pub idler_amplitude: Complex64,
}

/// Solves the coupled signal / conjugate-idler equations
///
/// ```text
/// [ κs/2 − i·ms    i·λ·e^{iφ}   ] [a_s ]   [√κs·b_s ]
/// [ −i·λ·e^{−iφ}   κi/2 + i·mi  ] [a_i*] = [√κi·b_i*]
/// ```
///
/// with `b_i = 0`, where `m` is the mismatch ω_mode − ω at each frequency
/// and `shift` is an extra common mode shift (Kerr).
pub fn signal_idler_response(
    signal: ModeCoefficients,
    idler: ModeCoefficients,
    strength: f64,
    phase: f64,
    shift: f64,
) -> Result<SignalIdlerResponse> {
    let j = Complex64::i();
    let m11 = Complex64::new(signal.kappa / 2.0, -(signal.mismatch + shift));
    let m22 = Complex64::new(idler.kappa / 2.0, idler.mismatch + shift);
    let m12 = j * strength * Complex64::from_polar(1.0, phase);
    let m21 = -j * strength * Complex64::from_polar(1.0, -phase);
    let det = m11 * m22 - m12 * m21;
    let scale = (signal.kappa * idler.kappa).max(f64::MIN_POSITIVE);
    if det.norm() <= 1e-14 * scale {
        return Err(Error::OscillationThreshold { strength, threshold: strength });
    }
    let ks = signal.kappa.sqrt();
    let a_s = ks * m22 / det;
    let a_i = -ks * m21 / det;
    Ok(SignalIdlerResponse {
        signal_gain: Complex64::new(1.0, 0.0) - ks * a_s,
        idler_gain: -idler.kappa.sqrt() * a_i,
        signal_amplitude: a_s,
        idler_amplitude: a_i,
    })
}

/// Drive strength at which the mode at `f_pump/2` becomes unstable:
/// λ_th = √(κ²/4 + m²).
pub fn oscillation_threshold(device: &DeviceModel, flux: FluxBias, f_pump: f64) -> Result<f64> {
    let c = mode_coefficients(device, f_pump / 2.0, flux)?;
    Ok((c.kappa * c.kappa / 4.0 + c.mismatch * c.mismatch).sqrt())
}

pub fn small_signal_gain(
    device: &DeviceModel,
    flux: FluxBias,
    pump: &PumpSettings,
    freq_grid: &[f64],
) -> Result<GainProfile> {
    let threshold = oscillation_threshold(device, flux, pump.f_pump)?;
    if pump.strength >= threshold {
        return Err(Error::OscillationThreshold { strength: pump.strength, threshold });
    }
    let points = freq_grid
        .par_iter()
        .map(|&fs| {
            let fi = pump.f_pump - fs;
            if !(fi > 0.0) {
                return Err(Error::domain(format!("idler frequency {fi} Hz for signal {fs} Hz is not positive")));
            }
            let r = signal_idler_response(
                mode_coefficients(device, fs, flux)?,
                mode_coefficients(device, fi, flux)?,
                pump.strength,
                pump.phase,
                0.0,
            )
            .map_err(|_| Error::OscillationThreshold { strength: pump.strength, threshold })?;
            Ok((r.signal_gain, r.idler_gain))
        })
        .collect::<Result<Vec<_>>>()?;
    let (signal_gain, idler_gain) = points.into_iter().unzip();
    Ok(GainProfile { freq_grid: freq_grid.to_vec(), signal_gain, idler_gain, pump: *pump })
}

/// Measure of the frequencies where the gain is at or above `threshold_db`,
/// interpolating linearly (in dB) at crossings.
pub fn bandwidth_above(profile: &GainProfile, threshold_db: f64) -> f64 {
    bandwidth_above_db(&profile.freq_grid, &profile.gain_db(), threshold_db)
}

pub fn bandwidth_above_db(freqs: &[f64], gain_db: &[f64], threshold_db: f64) -> f64 {
    freqs
        .windows(2)
        .zip(gain_db.windows(2))
        .map(|(f, g)| {
            let width = f[1] - f[0];
            let (a, b) = (g[0] - threshold_db, g[1] - threshold_db);
            match (a >= 0.0, b >= 0.0) {
                (true, true) => width,
                (false, false) => 0.0,
                (true, false) => width * a / (a - b),
                (false, true) => width * b / (b - a),
            }
        })
        .sum()
}

pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    1e-3 * 10f64.powf(p_dbm / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * (p_w / 1e-3).log10()
}

/// Input photon flux (photons/s) of a tone of `p_dbm` at `f`.
pub fn photon_flux(p_dbm: f64, f: f64) -> f64 {
    dbm_to_watts(p_dbm) / (HBAR * 2.0 * PI * f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Intracavity photon number (signal plus idler).
    pub photons: f64,
    pub signal_amplitude: Complex64,
    pub idler_amplitude: Complex64,
    pub signal_gain: Complex64,
    /// Every non-negative root of the self-consistency polynomial.
    pub branches: Vec<f64>,
    /// More than one steady state exists; the low-amplitude one is returned.
    pub multistable: bool,
}

impl SteadyState {
    pub fn gain_db(&self) -> f64 {
        20.0 * self.signal_gain.norm().log10()
    }
}

/// Self-consistent Kerr steady state. With the Kerr shift K·n added to the
/// mismatch, n = Φ·κs·(|m22|² + λ²)/|D|², which is the Duffing cubic when the
/// pump is off and a quintic in n with the pump on. The lowest non-negative
/// root is the branch reached by sweeping power upward.
pub fn duffing_steady_state(
    device: &DeviceModel,
    flux: FluxBias,
    pump: &PumpSettings,
    kerr: &KerrModel,
    drive_power_dbm: f64,
    f_s: f64,
) -> Result<SteadyState> {
    if !drive_power_dbm.is_finite() {
        return Err(Error::domain("drive power must be finite"));
    }
    let signal = mode_coefficients(device, f_s, flux)?;
    let idler = mode_coefficients(device, pump.f_pump - f_s, flux)?;
    let flux_in = photon_flux(drive_power_dbm, f_s);
    let k = kerr.kerr_per_photon;

    let linear = signal_idler_response(signal, idler, pump.strength, pump.phase, 0.0)?;
    let n_lin = flux_in * (linear.signal_amplitude.norm_sqr() + linear.idler_amplitude.norm_sqr());
    if k == 0.0 {
        return Ok(SteadyState {
            photons: n_lin,
            signal_amplitude: linear.signal_amplitude * flux_in.sqrt(),
            idler_amplitude: linear.idler_amplitude * flux_in.sqrt(),
            signal_gain: linear.signal_gain,
            branches: vec![n_lin],
            multistable: false,
        });
    }

    // rates normalised by κs for conditioning
    let s = signal.kappa;
    let (us, ui) = (0.5, idler.kappa / (2.0 * s));
    let (ms, mi, lam, kn, phi_in) =
        (signal.mismatch / s, idler.mismatch / s, pump.strength / s, k / s, flux_in / s);
    // m11 = us − i(ms + kn·n), m22 = ui + i(mi + kn·n)
    let m11_im = Poly(vec![-ms, -kn]);
    let m22_im = Poly(vec![mi, kn]);
    let det_re = Poly(vec![us * ui - lam * lam]).add(&m11_im.mul(&m22_im).scale(-1.0));
    let det_im = m22_im.scale(us).add(&m11_im.scale(ui));
    let det_sq = det_re.mul(&det_re).add(&det_im.mul(&det_im));
    let numer = m22_im.mul(&m22_im).add(&Poly(vec![ui * ui + lam * lam])).scale(phi_in);
    let poly = Poly(vec![0.0, 1.0]).mul(&det_sq).add(&numer.scale(-1.0));

    let branches: Vec<f64> = poly.real_roots().into_iter().filter(|n| *n >= 0.0).collect();
    let photons = *branches
        .first()
        .ok_or_else(|| Error::Fit("steady-state polynomial has no non-negative root".into()))?;
    let r = signal_idler_response(signal, idler, pump.strength, pump.phase, k * photons)?;
    Ok(SteadyState {
        photons,
        signal_amplitude: r.signal_amplitude * flux_in.sqrt(),
        idler_amplitude: r.idler_amplitude * flux_in.sqrt(),
        signal_gain: r.signal_gain,
        multistable: branches.len() > 1,
        branches,
    })
}

pub const SWEEP_START_DBM: f64 = -150.0;
pub const SWEEP_STOP_DBM: f64 = -60.0;
pub const SWEEP_STEP_DB: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum Saturation {
    Compressed { p1db_dbm: f64, small_signal_db: f64 },
    NoCompression { small_signal_db: f64 },
}

impl Saturation {
    pub fn p1db(&self) -> Option<f64> {
        match self {
            Saturation::Compressed { p1db_dbm, .. } => Some(*p1db_dbm),
            Saturation::NoCompression { .. } => None,
        }
    }
}

/// Gain at each swept input power, dB.
pub fn gain_vs_power(
    device: &DeviceModel,
    flux: FluxBias,
    pump: &PumpSettings,
    kerr: &KerrModel,
    f_s: f64,
    powers_dbm: &[f64],
) -> Result<Vec<f64>> {
    powers_dbm
        .iter()
        .map(|&p| duffing_steady_state(device, flux, pump, kerr, p, f_s).map(|s| s.gain_db()))
        .collect()
}

/// Upward power sweep from −150 dBm in 0.25 dB steps; the 1-dB compression
/// point is interpolated linearly between the bracketing steps.
pub fn saturation_power(
    device: &DeviceModel,
    flux: FluxBias,
    pump: &PumpSettings,
    kerr: &KerrModel,
    f_s: f64,
) -> Result<Saturation> {
    let linear = signal_idler_response(
        mode_coefficients(device, f_s, flux)?,
        mode_coefficients(device, pump.f_pump - f_s, flux)?,
        pump.strength,
        pump.phase,
        0.0,
    )?;
    let small_signal_db = 20.0 * linear.signal_gain.norm().log10();
    if small_signal_db < 2.0 {
        return Err(Error::domain(format!("small-signal gain {small_signal_db:.2} dB is below 2 dB")));
    }
    let target = small_signal_db - 1.0;
    let steps = ((SWEEP_STOP_DBM - SWEEP_START_DBM) / SWEEP_STEP_DB).round() as usize;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=steps {
        let p = SWEEP_START_DBM + SWEEP_STEP_DB * k as f64;
        let g = duffing_steady_state(device, flux, pump, kerr, p, f_s)?.gain_db();
        if g <= target {
            let p1db = match prev {
                Some((p0, g0)) => p0 + (p - p0) * (g0 - target) / (g0 - g),
                None => p,
            };
            return Ok(Saturation::Compressed { p1db_dbm: p1db, small_signal_db });
        }
        prev = Some((p, g));
    }
    Ok(Saturation::NoCompression { small_signal_db })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneObjective {
    pub target_gain_db: f64,
    /// Band over which gain is evaluated, Hz.
    pub band: (f64, f64),
    pub points: usize,
    /// Allowed excess of the peak over the target, dB.
    pub ripple_db: f64,
}

impl TuneObjective {
    pub fn around(f0: f64, target_gain_db: f64) -> Self {
        Self { target_gain_db, band: (f0 - 2e9, f0 + 2e9), points: 801, ripple_db: 1.0 }
    }

    pub fn grid(&self) -> Vec<f64> {
        linspace(self.band.0, self.band.1, self.points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub pump: PumpSettings,
    /// Bandwidth above the target gain at the returned settings, Hz.
    pub bandwidth_hz: f64,
    pub peak_gain_db: f64,
    /// False when no sub-threshold setting reaches the target.
    pub reachable: bool,
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

const MAX_THRESHOLD_FRACTION: f64 = 0.999;
const TUNE_SWEEPS: usize = 6;

/// Coordinate descent over pump frequency and strength (as a fraction of the
/// oscillation threshold), golden-section line search on each coordinate,
/// from strength 0 at twice the loaded resonance. The score is the
/// bandwidth above target while the peak stays within `ripple_db` of it,
/// and a negative dB shortfall or overshoot otherwise.
pub fn tune_pump(device: &DeviceModel, flux: FluxBias, objective: &TuneObjective) -> Result<TuneResult> {
    if !(objective.target_gain_db >= 0.0) {
        return Err(Error::domain("target gain must be >= 0 dB"));
    }
    let f0 = resonant_frequency(device, flux)?;
    let grid = objective.grid();
    let target = objective.target_gain_db;

    let evaluate = |f_pump: f64, fraction: f64| -> Option<(PumpSettings, GainProfile)> {
        let threshold = oscillation_threshold(device, flux, f_pump).ok()?;
        let pump = PumpSettings::new(f_pump, fraction * threshold, 0.0).ok()?;
        small_signal_gain(device, flux, &pump, &grid).ok().map(|p| (pump, p))
    };
    let score = |f_pump: f64, fraction: f64| -> f64 {
        let Some((_, profile)) = evaluate(f_pump, fraction) else {
            return f64::NEG_INFINITY;
        };
        let (peak, _) = profile.peak();
        if peak < target {
            peak - target
        } else if peak > target + objective.ripple_db {
            -(peak - target - objective.ripple_db)
        } else {
            bandwidth_above(&profile, target) / 1e9
        }
    };

    let mut f_pump = 2.0 * f0;
    let mut fraction = 0.0;
    if target > 0.0 {
        let mut span = 1e9;
        for _ in 0..TUNE_SWEEPS {
            fraction = golden_max(|r| score(f_pump, r), 0.0, MAX_THRESHOLD_FRACTION, 1e-5).0;
            f_pump = golden_max(|fp| score(fp, fraction), f_pump - span, f_pump + span, 1e4).0;
            span *= 0.5;
        }
    }
    let (pump, profile) = evaluate(f_pump, fraction)
        .ok_or_else(|| Error::Infeasible("tuned pump settings are not evaluable".into()))?;
    let (peak, _) = profile.peak();
    Ok(TuneResult {
        pump,
        bandwidth_hz: bandwidth_above(&profile, target),
        peak_gain_db: peak,
        reachable: peak >= target,
    })
}
