//! Flux-tunable SQUID resonator: inductance, pump-off response, resonance
//! extraction, stray-inductance calibration and flux-modulation fitting.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::constants::FLUX_QUANTUM;
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LeastSquaresProblem, LmOptions};
use crate::network::{environment_impedance, reflection_from_parts, TransformerChain};
use crate::roots::bisect;

/// Guard on |cos(π·phi)| below which the critical current is treated as
/// fully suppressed.
pub const DIVERGENCE_GUARD: f64 = 1e-9;
/// Absolute frequency tolerance of the resonance bisection, Hz.
pub const RESONANCE_TOL_HZ: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquidParams {
    /// Total critical current of both junctions, A.
    pub i_c_total: f64,
}

impl SquidParams {
    pub fn new(i_c_total: f64) -> Result<Self> {
        if !(i_c_total > 0.0 && i_c_total.is_finite()) {
            return Err(Error::domain(format!("critical current must be > 0, got {i_c_total}")));
        }
        Ok(Self { i_c_total })
    }

    pub fn flux_quantum(&self) -> f64 {
        FLUX_QUANTUM
    }
}

/// Applied flux in units of Φ0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FluxBias(pub f64);

/// What the amplifier node sees looking out of the device.
#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    /// Direct connection to a real reference impedance.
    Direct { z_ref: f64 },
    Chain(TransformerChain),
}

impl Environment {
    pub fn z_ref(&self) -> f64 {
        match self {
            Environment::Direct { z_ref } => *z_ref,
            Environment::Chain(c) => c.z_ref,
        }
    }

    pub fn impedance(&self, f: f64) -> Result<Complex64> {
        match self {
            Environment::Direct { z_ref } => Ok(Complex64::new(*z_ref, 0.0)),
            Environment::Chain(c) => environment_impedance(c, f),
        }
    }

    pub fn admittance(&self, f: f64) -> Result<Complex64> {
        Ok(Complex64::new(1.0, 0.0) / self.impedance(f)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    pub squid: SquidParams,
    /// Shunt capacitance, F.
    pub c_p: f64,
    /// Series stray inductance in the SQUID branch, H.
    pub l_stray: f64,
    pub environment: Environment,
    /// Flux (Φ0) at which the resonance is maximal.
    pub flux_offset: f64,
    /// Band searched for the loaded resonance, Hz.
    pub search_band: (f64, f64),
}

impl DeviceModel {
    pub const DEFAULT_C_P: f64 = 3e-12;
    pub const DEFAULT_SEARCH_BAND: (f64, f64) = (1e9, 40e9);

    pub fn new(squid: SquidParams, c_p: f64, l_stray: f64, environment: Environment) -> Result<Self> {
        if !(c_p > 0.0 && c_p.is_finite()) {
            return Err(Error::domain(format!("c_p must be > 0, got {c_p}")));
        }
        if !(l_stray >= 0.0 && l_stray.is_finite()) {
            return Err(Error::domain(format!("l_stray must be >= 0, got {l_stray}")));
        }
        Ok(Self {
            squid,
            c_p,
            l_stray,
            environment,
            flux_offset: 0.0,
            search_band: Self::DEFAULT_SEARCH_BAND,
        })
    }

    pub fn with_l_stray(&self, l_stray: f64) -> Self {
        Self { l_stray, ..self.clone() }
    }

    pub fn with_environment(&self, environment: Environment) -> Self {
        Self { environment, ..self.clone() }
    }

    /// Flux measured from the modulation maximum.
    pub fn relative_flux(&self, flux: FluxBias) -> FluxBias {
        FluxBias(flux.0 - self.flux_offset)
    }

    /// Inductance of the SQUID branch (stray plus Josephson), H.
    pub fn total_inductance(&self, flux: FluxBias) -> Result<f64> {
        Ok(self.l_stray + josephson_inductance(&self.squid, self.relative_flux(flux))?)
    }

    /// Fraction of the branch inductance that is nonlinear.
    pub fn participation(&self, flux: FluxBias) -> Result<f64> {
        let lj = josephson_inductance(&self.squid, self.relative_flux(flux))?;
        Ok(lj / (lj + self.l_stray))
    }

    pub fn jpa_admittance(&self, f: f64, flux: FluxBias) -> Result<Complex64> {
        check_freq(f)?;
        let w = 2.0 * PI * f;
        let l = self.total_inductance(flux)?;
        Ok(Complex64::new(0.0, w * self.c_p - 1.0 / (w * l)))
    }

    /// Total node susceptance including the environment, and the
    /// environment conductance, both in S.
    pub fn node_admittance(&self, f: f64, flux: FluxBias) -> Result<(f64, f64)> {
        let y_env = self.environment.admittance(f)?;
        let y_jpa = self.jpa_admittance(f, flux)?;
        Ok((y_jpa.im + y_env.im, y_env.re))
    }
}

fn check_freq(f: f64) -> Result<()> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::domain(format!("frequency must be > 0, got {f}")));
    }
    Ok(())
}

pub fn josephson_inductance(squid: &SquidParams, flux: FluxBias) -> Result<f64> {
    let c = (PI * flux.0).cos().abs();
    if c <= DIVERGENCE_GUARD {
        return Err(Error::Divergence { flux: flux.0 });
    }
    Ok(FLUX_QUANTUM / (2.0 * PI * squid.i_c_total * c))
}

/// Impedance of the inductive branch in parallel with `c_p`.
pub fn jpa_impedance(device: &DeviceModel, f: f64, flux: FluxBias) -> Result<Complex64> {
    check_freq(f)?;
    let w = 2.0 * PI * f;
    let l = device.total_inductance(flux)?;
    let den = 1.0 - w * w * l * device.c_p;
    if den.abs() <= 1e-12 {
        return Err(Error::Pole(format!("parallel LC antiresonance at {f} Hz")));
    }
    Ok(Complex64::new(0.0, w * l / den))
}

/// Reflection at the external port, referenced to `z_ref`. Computed from
/// the device admittance so the LC antiresonance is not a singularity.
pub fn pump_off_reflection(device: &DeviceModel, f: f64, flux: FluxBias) -> Result<Complex64> {
    let y = device.jpa_admittance(f, flux)?;
    match &device.environment {
        Environment::Direct { z_ref } => {
            reflection_from_parts(Complex64::new(1.0, 0.0), y, *z_ref)
        }
        Environment::Chain(chain) => {
            let (num, den) = chain.abcd_from_port(f)?.input_impedance_parts(y);
            reflection_from_parts(num, den, chain.z_ref)
        }
    }
}

/// Reflection at the device terminals, power-wave referenced to the
/// environment admittance: (Y_env* − Y_jpa)/(Y_env + Y_jpa). Its phase is
/// −2·atan(B_total/G_env) and winds by exactly 2π across the loaded resonance.
pub fn device_plane_reflection(device: &DeviceModel, f: f64, flux: FluxBias) -> Result<Complex64> {
    let y_env = device.environment.admittance(f)?;
    let y_jpa = device.jpa_admittance(f, flux)?;
    Ok((y_env.conj() - y_jpa) / (y_env + y_jpa))
}

fn device_plane_phase(device: &DeviceModel, f: f64, flux: FluxBias) -> Result<f64> {
    let (b_total, g_env) = device.node_admittance(f, flux)?;
    if g_env <= 0.0 {
        return Err(Error::UnphysicalEnvironment { freq: f, re_y: g_env });
    }
    Ok(-2.0 * (b_total / g_env).atan())
}

/// Loaded resonance: the frequency where the device-plane phase crosses the
/// centre of its 2π traversal (zero total susceptance). When the band holds
/// several crossings the one closest to the bare LC frequency wins.
pub fn resonant_frequency(device: &DeviceModel, flux: FluxBias) -> Result<f64> {
    let (f_lo, f_hi) = device.search_band;
    let n = 4000;
    let ratio = (f_hi / f_lo).powf(1.0 / n as f64);
    let bare = 1.0 / (2.0 * PI * (device.total_inductance(flux)? * device.c_p).sqrt());
    let mut best: Option<(f64, f64)> = None;
    let mut f_prev = f_lo;
    let mut p_prev = device_plane_phase(device, f_prev, flux)?;
    for k in 1..=n {
        let f = if k == n { f_hi } else { f_lo * ratio.powi(k) };
        let p = device_plane_phase(device, f, flux)?;
        if p_prev > 0.0 && p <= 0.0 {
            let root = bisect(|x| device_plane_phase(device, x, flux), f_prev, f, RESONANCE_TOL_HZ)?;
            let dist = (root / bare).ln().abs();
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((root, dist));
            }
        }
        f_prev = f;
        p_prev = p;
    }
    best.map(|(f, _)| f).ok_or(Error::NoResonance { f_lo, f_hi })
}

/// Stray inductance that places the resonance at `flux_offset` on
/// `f_max_target`.
pub fn calibrate_stray(device: &DeviceModel, f_max_target: f64) -> Result<f64> {
    check_freq(f_max_target)?;
    let at_offset = FluxBias(device.flux_offset);
    let f_of = |l: f64| resonant_frequency(&device.with_l_stray(l), at_offset);
    let f_bare = f_of(0.0)?;
    if f_max_target > f_bare + RESONANCE_TOL_HZ {
        return Err(Error::Infeasible(format!(
            "target {f_max_target} Hz is above the l_stray = 0 resonance {f_bare} Hz"
        )));
    }
    if (f_bare - f_max_target).abs() <= RESONANCE_TOL_HZ {
        return Ok(0.0);
    }
    let lj0 = josephson_inductance(&device.squid, FluxBias(0.0))?;
    let mut hi = lj0.max(1.0 / ((2.0 * PI * f_max_target).powi(2) * device.c_p));
    while f_of(hi)? > f_max_target {
        hi *= 2.0;
        if hi > 1e-6 {
            return Err(Error::Infeasible("stray inductance search diverged".into()));
        }
    }
    bisect(|l| Ok(f_of(l)? - f_max_target), 0.0, hi, hi * 1e-13)
}

/// Pump-off reflection phase (unwrapped along frequency) over a flux ×
/// frequency grid. Rows follow `flux_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub flux_grid: Vec<FluxBias>,
    pub freq_grid: Vec<f64>,
    pub phase: Vec<Vec<f64>>,
}

/// Removes 2π jumps larger than π between neighbours.
pub fn unwrap_phase(phase: &mut [f64]) {
    let mut offset = 0.0;
    for k in 1..phase.len() {
        let raw = phase[k] + offset;
        let mut d = raw - phase[k - 1];
        while d > PI {
            offset -= 2.0 * PI;
            d -= 2.0 * PI;
        }
        while d < -PI {
            offset += 2.0 * PI;
            d += 2.0 * PI;
        }
        phase[k] = phase[k - 1] + d;
    }
}

pub fn phase_map(device: &DeviceModel, flux_grid: &[FluxBias], freq_grid: &[f64]) -> Result<PhaseMap> {
    if flux_grid.is_empty() || freq_grid.is_empty() {
        return Err(Error::domain("phase map needs non-empty grids"));
    }
    let phase = flux_grid
        .par_iter()
        .map(|&flux| {
            let mut row = freq_grid
                .iter()
                .map(|&f| pump_off_reflection(device, f, flux).map(|g| g.arg()))
                .collect::<Result<Vec<_>>>()?;
            unwrap_phase(&mut row);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseMap { flux_grid: flux_grid.to_vec(), freq_grid: freq_grid.to_vec(), phase })
}

/// Closed-form flux modulation of a capacitively shunted SQUID branch with
/// series stray inductance. Parameters are carried in scaled units
/// `[i_c (µA), flux_offset (Φ0), period (Φ0), l_stray (pH)]`, output in GHz.
#[derive(Debug, Clone, Copy)]
pub struct FluxModulationModel {
    pub c_p: f64,
}

const IC_SCALE: f64 = 1e-6;
const L_SCALE: f64 = 1e-12;
const F_SCALE: f64 = 1e9;

impl FluxModulationModel {
    /// Resonance in Hz for physical parameters.
    pub fn resonance(&self, flux: f64, i_c: f64, offset: f64, period: f64, l_stray: f64) -> f64 {
        let c = (PI * (flux - offset) / period).cos().abs().max(DIVERGENCE_GUARD);
        let lj = FLUX_QUANTUM / (2.0 * PI * i_c * c);
        1.0 / (2.0 * PI * (self.c_p * (l_stray + lj)).sqrt())
    }

    fn scaled(&self, flux: f64, p: &[f64]) -> f64 {
        self.resonance(flux, p[0] * IC_SCALE, p[1], p[2], p[3] * L_SCALE) / F_SCALE
    }

    fn scaled_gradient(&self, flux: f64, p: &[f64]) -> [f64; 4] {
        let (i_c, offset, period, l_s) = (p[0] * IC_SCALE, p[1], p[2], p[3] * L_SCALE);
        let u = PI * (flux - offset) / period;
        let c = u.cos();
        let lj = FLUX_QUANTUM / (2.0 * PI * i_c * c.abs().max(DIVERGENCE_GUARD));
        let l_tot = l_s + lj;
        let f = 1.0 / (2.0 * PI * (self.c_p * l_tot).sqrt()) / F_SCALE;
        let df_dl = -f / (2.0 * l_tot);
        let dlj_du = lj * u.tan();
        [
            df_dl * (-lj / i_c) * IC_SCALE,
            df_dl * dlj_du * (-PI / period),
            df_dl * dlj_du * (-u / period),
            df_dl * L_SCALE,
        ]
    }
}

struct FluxFitProblem<'a> {
    model: FluxModulationModel,
    data: &'a [(f64, f64)],
}

impl LeastSquaresProblem for FluxFitProblem<'_> {
    fn n_params(&self) -> usize {
        4
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.data.iter().map(|&(x, y)| self.model.scaled(x, p) - y / F_SCALE).collect()
    }

    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.data.len(), 4);
        for (i, &(x, _)) in self.data.iter().enumerate() {
            let g = self.model.scaled_gradient(x, p);
            for j in 0..4 {
                jac[(i, j)] = g[j];
            }
        }
        jac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxModulationFit {
    pub i_c_est: f64,
    pub flux_offset_est: f64,
    pub period_est: f64,
    pub l_stray_est: f64,
    pub f_max_est: f64,
    /// Residual norm in Hz.
    pub residual_norm: f64,
}

const FIT_STARTS: usize = 6;

/// Fits (flux Φ0, resonance Hz) samples with [`FluxModulationModel`].
pub fn fit_flux_modulation(data: &[(f64, f64)], c_p: f64) -> Result<FluxModulationFit> {
    if data.len() < 8 {
        return Err(Error::Fit(format!("need at least 8 samples, got {}", data.len())));
    }
    if data.iter().any(|(x, y)| !x.is_finite() || !y.is_finite() || *y <= 0.0) {
        return Err(Error::Fit("samples must be finite with positive frequency".into()));
    }
    let (fl_min, fl_max) = data.iter().fold((f64::MAX, f64::MIN), |(a, b), (x, _)| (a.min(*x), b.max(*x)));
    if fl_max - fl_min < 0.5 {
        return Err(Error::Fit(format!("flux span {} Φ0 is below half a period", fl_max - fl_min)));
    }
    let (f_min, f_max) = data.iter().fold((f64::MAX, f64::MIN), |(a, b), (_, y)| (a.min(*y), b.max(*y)));
    if f_max - f_min <= 1e-9 * f_max {
        return Err(Error::Fit("resonance data is constant".into()));
    }

    let model = FluxModulationModel { c_p };
    let problem = FluxFitProblem { model, data };
    let peak = data.iter().copied().fold((0.0, f64::MIN), |acc, s| if s.1 > acc.1 { s } else { acc });
    let offset0 = peak.0;
    let l_tot_max = 1.0 / ((2.0 * PI * f_max).powi(2) * c_p);

    // coarse scan over period and critical current with the stray inductance
    // pinned by f_max; LM runs from the best few seeds
    let mut seeds: Vec<(Vec<f64>, f64)> = Vec::new();
    for period in [0.7, 0.8, 0.9, 1.0, 1.1, 1.25, 1.4] {
        for k in 0..=80 {
            let i_c = 1e-7 * 10f64.powf(k as f64 / 20.0);
            let l_s = l_tot_max - FLUX_QUANTUM / (2.0 * PI * i_c);
            if l_s < 0.0 {
                continue;
            }
            let p = vec![i_c / IC_SCALE, offset0, period, l_s / L_SCALE];
            let cost: f64 = problem.residuals(&p).iter().map(|r| r * r).sum();
            if cost.is_finite() {
                seeds.push((p, cost));
            }
        }
    }
    if seeds.is_empty() {
        return Err(Error::Fit("no feasible starting point".into()));
    }
    seeds.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best: Option<crate::fit::LmReport> = None;
    let mut last_err = None;
    for (p0, _) in seeds.iter().take(FIT_STARTS) {
        match levenberg_marquardt(&problem, p0, &LmOptions::default()) {
            Ok(rep) if rep.params[0] > 0.0 && rep.params[2] > 0.0 => {
                if best.as_ref().is_none_or(|b| rep.residual_norm < b.residual_norm) {
                    best = Some(rep);
                }
            }
            Ok(rep) => last_err = Some(Error::Fit(format!("fit left the physical region: {:?}", rep.params))),
            Err(e) => last_err = Some(e),
        }
    }
    let rep = best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Fit("no start converged".into())))?;
    let p = &rep.params;
    let (i_c, offset, period, l_s) = (p[0] * IC_SCALE, p[1], p[2], p[3] * L_SCALE);
    Ok(FluxModulationFit {
        i_c_est: i_c,
        flux_offset_est: offset,
        period_est: period,
        l_stray_est: l_s,
        f_max_est: model.resonance(offset, i_c, offset, period, l_s),
        residual_norm: rep.residual_norm * F_SCALE,
    })
}
