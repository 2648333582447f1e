//! Device configuration file.
//!
//! One `section.key = value [unit]` entry per line; `#` starts a comment.
//! Dimensioned values must carry their unit suffix (`hz`, `ohm`, `f`, `h`,
//! `a`, `k`, `dbm`, `db`, `rad`, `rad/s`, `phi0`); plain numbers, counts and
//! the chain layout take none. Unknown or repeated keys are rejected.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::network::{TransformerChain, TransmissionLineSection};
use crate::noise::AmplChain;
use crate::paramp::{linspace, KerrModel, PumpSettings};
use crate::readout::{calibrate_separation, DispersiveModel};
use crate::squid::{calibrate_stray, DeviceModel, Environment, FluxBias, SquidParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Hz,
    Ohm,
    Farad,
    Henry,
    Ampere,
    Kelvin,
    Dbm,
    Db,
    Rad,
    RadPerSecond,
    FluxQuantum,
    None,
}

impl Unit {
    pub fn suffix(self) -> &'static str {
        match self {
            Unit::Hz => "hz",
            Unit::Ohm => "ohm",
            Unit::Farad => "f",
            Unit::Henry => "h",
            Unit::Ampere => "a",
            Unit::Kelvin => "k",
            Unit::Dbm => "dbm",
            Unit::Db => "db",
            Unit::Rad => "rad",
            Unit::RadPerSecond => "rad/s",
            Unit::FluxQuantum => "phi0",
            Unit::None => "",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainLayout {
    /// Quarter-wave then half-wave section.
    QuarterHalf,
    QuarterOnly,
    /// JPA connected straight to the reference port.
    None,
}

impl ChainLayout {
    fn as_str(self) -> &'static str {
        match self {
            ChainLayout::QuarterHalf => "qw+hw",
            ChainLayout::QuarterOnly => "qw",
            ChainLayout::None => "none",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "qw+hw" => Some(ChainLayout::QuarterHalf),
            "qw" => Some(ChainLayout::QuarterOnly),
            "none" => Some(ChainLayout::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquidConfig {
    pub i_c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSection {
    pub c_p: f64,
    /// Calibrated against `f_max` when absent.
    pub l_stray: Option<f64>,
    pub f_max: f64,
    pub flux_offset: f64,
    /// Operating flux bias.
    pub flux: f64,
    pub search_lo: f64,
    pub search_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub layout: ChainLayout,
    pub z_ref: f64,
    pub z_target: f64,
    /// Defaults to √(z_ref·z_target).
    pub qw_z0: Option<f64>,
    pub hw_z0: f64,
    /// Defaults to `device.f_max`.
    pub f_design: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PumpConfig {
    /// When frequency or strength is absent the pump is tuned.
    pub f_pump: Option<f64>,
    pub strength: Option<f64>,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub target_gain: f64,
    pub ripple: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KerrConfig {
    /// Overrides the Kerr coefficient derived from the device, rad/s.
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub y: f64,
    pub g_p: f64,
    pub g_i: f64,
    pub g_a: f64,
    pub t_h: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutConfig {
    pub f_q: f64,
    pub f_r: f64,
    pub chi: f64,
    pub g: f64,
    pub kappa_r: f64,
    pub eta: f64,
    pub snr_target: f64,
    /// Overrides the separation calibrated from `snr_target`.
    pub separation: Option<f64>,
    pub shots: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandConfig {
    pub f_start: f64,
    pub f_stop: f64,
    pub points: usize,
}

/// Band over which measured traces are analysed.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub f_start: f64,
    pub f_stop: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxMapConfig {
    pub flux_start: f64,
    pub flux_stop: f64,
    pub flux_points: usize,
    pub f_start: f64,
    pub f_stop: f64,
    pub f_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturateConfig {
    pub p_start: f64,
    pub p_stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub squid: SquidConfig,
    pub device: DeviceSection,
    pub chain: ChainConfig,
    pub pump: PumpConfig,
    pub tune: TuneConfig,
    pub kerr: KerrConfig,
    pub noise: NoiseConfig,
    pub readout: ReadoutConfig,
    pub sim: BandConfig,
    pub analysis: AnalysisConfig,
    pub flux_map: FluxMapConfig,
    pub saturate: SaturateConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bound {
    Positive,
    NonNegative,
    NonPositive,
    AtLeastOne,
    UnitInterval,
    Any,
}

enum Slot<'a> {
    Required(&'a mut f64),
    Value(&'a mut f64),
    Optional(&'a mut Option<f64>),
    Count(&'a mut usize),
    Seed(&'a mut u64),
    Layout(&'a mut ChainLayout),
}

struct Field<'a> {
    key: &'static str,
    unit: Unit,
    bound: Bound,
    slot: Slot<'a>,
}

fn field<'a>(key: &'static str, unit: Unit, bound: Bound, slot: Slot<'a>) -> Field<'a> {
    Field { key, unit, bound, slot }
}

impl Default for DeviceConfig {
    /// Defaults for every optional key; required keys are NaN.
    fn default() -> Self {
        Self {
            squid: SquidConfig { i_c: f64::NAN },
            device: DeviceSection {
                c_p: f64::NAN,
                l_stray: None,
                f_max: 9.4e9,
                flux_offset: 0.0,
                flux: 0.0,
                search_lo: DeviceModel::DEFAULT_SEARCH_BAND.0,
                search_hi: DeviceModel::DEFAULT_SEARCH_BAND.1,
            },
            chain: ChainConfig {
                layout: ChainLayout::QuarterHalf,
                z_ref: 50.0,
                z_target: 30.0,
                qw_z0: None,
                hw_z0: 75.0,
                f_design: None,
            },
            pump: PumpConfig { f_pump: None, strength: None, phase: 0.0 },
            tune: TuneConfig { target_gain: 16.5, ripple: 1.0 },
            kerr: KerrConfig { k: None },
            noise: NoiseConfig { y: 15.0, g_p: 44.668, g_i: 1.0, g_a: 1.0, t_h: 4.0, f: 9.4e9 },
            readout: ReadoutConfig {
                f_q: 5.2e9,
                f_r: 6.5e9,
                chi: 1e6,
                g: 50e6,
                kappa_r: 2e6,
                eta: 0.2646,
                snr_target: 14.56,
                separation: None,
                shots: 3000,
            },
            sim: BandConfig { f_start: 7.4e9, f_stop: 11.4e9, points: 801 },
            analysis: AnalysisConfig { f_start: 4e9, f_stop: 8e9 },
            flux_map: FluxMapConfig {
                flux_start: -0.45,
                flux_stop: 0.45,
                flux_points: 91,
                f_start: 5e9,
                f_stop: 12e9,
                f_points: 281,
            },
            saturate: SaturateConfig { p_start: -150.0, p_stop: -60.0, step: 0.25 },
            seed: 0,
        }
    }
}

impl DeviceConfig {
    fn fields(&mut self) -> Vec<Field<'_>> {
        use Bound::*;
        use Slot::*;
        use Unit as U;
        let s = self;
        vec![
            field("squid.i_c", U::Ampere, Positive, Required(&mut s.squid.i_c)),
            field("device.c_p", U::Farad, Positive, Required(&mut s.device.c_p)),
            field("device.l_stray", U::Henry, NonNegative, Optional(&mut s.device.l_stray)),
            field("device.f_max", U::Hz, Positive, Value(&mut s.device.f_max)),
            field("device.flux_offset", U::FluxQuantum, Any, Value(&mut s.device.flux_offset)),
            field("device.flux", U::FluxQuantum, Any, Value(&mut s.device.flux)),
            field("device.search_lo", U::Hz, Positive, Value(&mut s.device.search_lo)),
            field("device.search_hi", U::Hz, Positive, Value(&mut s.device.search_hi)),
            field("chain.layout", U::None, Any, Layout(&mut s.chain.layout)),
            field("chain.z_ref", U::Ohm, Positive, Value(&mut s.chain.z_ref)),
            field("chain.z_target", U::Ohm, Positive, Value(&mut s.chain.z_target)),
            field("chain.qw_z0", U::Ohm, Positive, Optional(&mut s.chain.qw_z0)),
            field("chain.hw_z0", U::Ohm, Positive, Value(&mut s.chain.hw_z0)),
            field("chain.f_design", U::Hz, Positive, Optional(&mut s.chain.f_design)),
            field("pump.f_pump", U::Hz, Positive, Optional(&mut s.pump.f_pump)),
            field("pump.strength", U::RadPerSecond, NonNegative, Optional(&mut s.pump.strength)),
            field("pump.phase", U::Rad, Any, Value(&mut s.pump.phase)),
            field("tune.target_gain", U::Db, NonNegative, Value(&mut s.tune.target_gain)),
            field("tune.ripple", U::Db, Positive, Value(&mut s.tune.ripple)),
            field("kerr.k", U::RadPerSecond, NonPositive, Optional(&mut s.kerr.k)),
            field("noise.y", U::None, AtLeastOne, Value(&mut s.noise.y)),
            field("noise.g_p", U::None, Positive, Value(&mut s.noise.g_p)),
            field("noise.g_i", U::None, Positive, Value(&mut s.noise.g_i)),
            field("noise.g_a", U::None, Positive, Value(&mut s.noise.g_a)),
            field("noise.t_h", U::Kelvin, Positive, Value(&mut s.noise.t_h)),
            field("noise.f", U::Hz, Positive, Value(&mut s.noise.f)),
            field("readout.f_q", U::Hz, Positive, Value(&mut s.readout.f_q)),
            field("readout.f_r", U::Hz, Positive, Value(&mut s.readout.f_r)),
            field("readout.chi", U::Hz, NonNegative, Value(&mut s.readout.chi)),
            field("readout.g", U::Hz, NonNegative, Value(&mut s.readout.g)),
            field("readout.kappa_r", U::Hz, NonNegative, Value(&mut s.readout.kappa_r)),
            field("readout.eta", U::None, UnitInterval, Value(&mut s.readout.eta)),
            field("readout.snr_target", U::None, NonNegative, Value(&mut s.readout.snr_target)),
            field("readout.separation", U::None, NonNegative, Optional(&mut s.readout.separation)),
            field("readout.shots", U::None, Any, Count(&mut s.readout.shots)),
            field("sim.f_start", U::Hz, Positive, Value(&mut s.sim.f_start)),
            field("sim.f_stop", U::Hz, Positive, Value(&mut s.sim.f_stop)),
            field("sim.points", U::None, Any, Count(&mut s.sim.points)),
            field("analysis.f_start", U::Hz, Positive, Value(&mut s.analysis.f_start)),
            field("analysis.f_stop", U::Hz, Positive, Value(&mut s.analysis.f_stop)),
            field("fluxmap.flux_start", U::FluxQuantum, Any, Value(&mut s.flux_map.flux_start)),
            field("fluxmap.flux_stop", U::FluxQuantum, Any, Value(&mut s.flux_map.flux_stop)),
            field("fluxmap.flux_points", U::None, Any, Count(&mut s.flux_map.flux_points)),
            field("fluxmap.f_start", U::Hz, Positive, Value(&mut s.flux_map.f_start)),
            field("fluxmap.f_stop", U::Hz, Positive, Value(&mut s.flux_map.f_stop)),
            field("fluxmap.f_points", U::None, Any, Count(&mut s.flux_map.f_points)),
            field("saturate.p_start", U::Dbm, Any, Value(&mut s.saturate.p_start)),
            field("saturate.p_stop", U::Dbm, Any, Value(&mut s.saturate.p_stop)),
            field("saturate.step", U::Db, Positive, Value(&mut s.saturate.step)),
            field("run.seed", U::None, Any, Seed(&mut s.seed)),
        ]
    }

    /// Canonical text form; `parse_config` of the result reproduces `self`.
    pub fn serialize(&self) -> String {
        let mut copy = self.clone();
        let mut out = String::new();
        let mut section = "";
        for f in copy.fields() {
            let sec = f.key.split('.').next().unwrap_or("");
            if !section.is_empty() && sec != section {
                out.push('\n');
            }
            section = sec;
            let value = match f.slot {
                Slot::Required(v) | Slot::Value(v) => format!("{v:e}"),
                Slot::Optional(v) => match v {
                    Some(v) => format!("{v:e}"),
                    None => continue,
                },
                Slot::Count(n) => n.to_string(),
                Slot::Seed(n) => n.to_string(),
                Slot::Layout(l) => l.as_str().to_string(),
            };
            let unit = f.unit.suffix();
            if unit.is_empty() {
                let _ = writeln!(out, "{} = {value}", f.key);
            } else {
                let _ = writeln!(out, "{} = {value} {unit}", f.key);
            }
        }
        out
    }

    pub fn flux(&self) -> FluxBias {
        FluxBias(self.device.flux)
    }

    pub fn environment(&self) -> Result<Environment> {
        let c = &self.chain;
        let f_design = c.f_design.unwrap_or(self.device.f_max);
        let qw = c.qw_z0.unwrap_or((c.z_ref * c.z_target).sqrt());
        Ok(match c.layout {
            ChainLayout::None => Environment::Direct { z_ref: c.z_ref },
            ChainLayout::QuarterOnly => Environment::Chain(TransformerChain::new(
                vec![TransmissionLineSection::quarter_wave(qw, f_design)?],
                c.z_ref,
            )?),
            ChainLayout::QuarterHalf => Environment::Chain(TransformerChain::new(
                vec![
                    TransmissionLineSection::quarter_wave(qw, f_design)?,
                    TransmissionLineSection::half_wave(c.hw_z0, f_design)?,
                ],
                c.z_ref,
            )?),
        })
    }

    /// Device with the stray inductance from the file or calibrated so the
    /// resonance at `flux_offset` sits at `f_max`.
    pub fn device_model(&self) -> Result<DeviceModel> {
        let mut d = DeviceModel::new(
            SquidParams::new(self.squid.i_c)?,
            self.device.c_p,
            self.device.l_stray.unwrap_or(0.0),
            self.environment()?,
        )?;
        d.flux_offset = self.device.flux_offset;
        d.search_band = (self.device.search_lo, self.device.search_hi);
        if self.device.l_stray.is_none() {
            let l = calibrate_stray(&d, self.device.f_max)?;
            d = d.with_l_stray(l);
        }
        Ok(d)
    }

    pub fn kerr_model(&self, device: &DeviceModel) -> Result<KerrModel> {
        let base = KerrModel::from_device(device, self.flux())?;
        Ok(match self.kerr.k {
            Some(k) => KerrModel { kerr_per_photon: k, ..base },
            None => base,
        })
    }

    /// Explicit pump from the file, if both frequency and strength are set.
    pub fn pump_settings(&self) -> Result<Option<PumpSettings>> {
        match (self.pump.f_pump, self.pump.strength) {
            (Some(f), Some(s)) => PumpSettings::new(f, s, self.pump.phase).map(Some),
            _ => Ok(None),
        }
    }

    pub fn ampl_chain(&self) -> Result<AmplChain> {
        AmplChain::new(self.noise.g_p, self.noise.g_i, self.noise.g_a, self.noise.t_h)
    }

    pub fn readout_separation(&self) -> Result<f64> {
        match self.readout.separation {
            Some(s) => Ok(s),
            None => calibrate_separation(self.readout.snr_target, self.readout.eta),
        }
    }

    pub fn dispersive_model(&self) -> Result<DispersiveModel> {
        let r = &self.readout;
        DispersiveModel::new(r.f_q, r.f_r, r.chi, r.g, r.kappa_r, self.readout_separation()?, r.shots)
    }

    pub fn sim_grid(&self) -> Vec<f64> {
        linspace(self.sim.f_start, self.sim.f_stop, self.sim.points)
    }

    pub fn flux_grid(&self) -> Vec<FluxBias> {
        let m = &self.flux_map;
        linspace(m.flux_start, m.flux_stop, m.flux_points).into_iter().map(FluxBias).collect()
    }

    pub fn flux_map_freqs(&self) -> Vec<f64> {
        let m = &self.flux_map;
        linspace(m.f_start, m.f_stop, m.f_points)
    }

    pub fn saturate_powers(&self) -> Vec<f64> {
        let s = &self.saturate;
        let n = ((s.p_stop - s.p_start) / s.step + 1e-9).floor() as usize;
        (0..=n).map(|k| s.p_start + s.step * k as f64).collect()
    }
}

fn config_err(key: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), line, msg: msg.into() }
}

fn check_bound(bound: Bound, v: f64) -> Option<&'static str> {
    let ok = match bound {
        Bound::Positive => v > 0.0,
        Bound::NonNegative => v >= 0.0,
        Bound::NonPositive => v <= 0.0,
        Bound::AtLeastOne => v >= 1.0,
        Bound::UnitInterval => v > 0.0 && v <= 1.0,
        Bound::Any => true,
    };
    (!ok).then_some(match bound {
        Bound::Positive => "must be > 0",
        Bound::NonNegative => "must be >= 0",
        Bound::NonPositive => "must be <= 0",
        Bound::AtLeastOne => "must be >= 1",
        Bound::UnitInterval => "must be in (0, 1]",
        Bound::Any => "",
    })
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<DeviceConfig> {
    let mut entries: HashMap<String, (usize, String, Option<String>)> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, rhs)) = body.split_once('=') else {
            return Err(Error::Parse { line, msg: format!("expected `key = value [unit]`, found `{body}`") });
        };
        let key = key.trim();
        let mut tokens = rhs.split_whitespace();
        let value = tokens.next().ok_or_else(|| config_err(key, line, "missing value"))?;
        let unit = tokens.next().map(str::to_string);
        if let Some(extra) = tokens.next() {
            return Err(config_err(key, line, format!("unexpected trailing `{extra}`")));
        }
        if let Some((first, _, _)) = entries.get(key) {
            return Err(config_err(key, line, format!("duplicate key (first set on line {first})")));
        }
        entries.insert(key.to_string(), (line, value.to_string(), unit));
    }

    let mut cfg = DeviceConfig::default();
    let mut lines: HashMap<&'static str, usize> = HashMap::new();
    for f in cfg.fields() {
        let Some((line, value, unit)) = entries.remove(f.key) else {
            if matches!(f.slot, Slot::Required(_)) {
                return Err(config_err(f.key, 0, "required key is missing"));
            }
            continue;
        };
        lines.insert(f.key, line);
        let expected = f.unit.suffix();
        match (unit.as_deref(), expected) {
            (None, "") => {}
            (Some(u), e) if u == e => {}
            (None, e) => return Err(config_err(f.key, line, format!("missing unit suffix `{e}`"))),
            (Some(u), "") => return Err(config_err(f.key, line, format!("unexpected unit `{u}`"))),
            (Some(u), e) => return Err(config_err(f.key, line, format!("bad unit `{u}`, expected `{e}`"))),
        }
        let number = || -> Result<f64> {
            let v: f64 = value.parse().map_err(|_| config_err(f.key, line, format!("invalid number `{value}`")))?;
            if !v.is_finite() {
                return Err(config_err(f.key, line, "value must be finite"));
            }
            if let Some(msg) = check_bound(f.bound, v) {
                return Err(config_err(f.key, line, format!("{msg}, got {v}")));
            }
            Ok(v)
        };
        match f.slot {
            Slot::Required(v) | Slot::Value(v) => *v = number()?,
            Slot::Optional(v) => *v = Some(number()?),
            Slot::Count(n) => {
                *n = value.parse().map_err(|_| config_err(f.key, line, format!("invalid count `{value}`")))?
            }
            Slot::Seed(n) => {
                *n = value.parse().map_err(|_| config_err(f.key, line, format!("invalid seed `{value}`")))?
            }
            Slot::Layout(l) => {
                *l = ChainLayout::parse(&value)
                    .ok_or_else(|| config_err(f.key, line, format!("unknown layout `{value}` (qw+hw, qw, none)")))?
            }
        }
    }
    if let Some((key, (line, _, _))) = entries.into_iter().min_by_key(|(_, (line, _, _))| *line) {
        return Err(config_err(&key, line, "unknown key"));
    }

    let at = |key: &'static str| lines.get(key).copied().unwrap_or(0);
    let ordered = [
        ("sim.f_stop", cfg.sim.f_start, cfg.sim.f_stop),
        ("analysis.f_stop", cfg.analysis.f_start, cfg.analysis.f_stop),
        ("fluxmap.f_stop", cfg.flux_map.f_start, cfg.flux_map.f_stop),
        ("fluxmap.flux_stop", cfg.flux_map.flux_start, cfg.flux_map.flux_stop),
        ("saturate.p_stop", cfg.saturate.p_start, cfg.saturate.p_stop),
        ("device.search_hi", cfg.device.search_lo, cfg.device.search_hi),
    ];
    for (key, lo, hi) in ordered {
        if !(hi > lo) {
            return Err(config_err(key, at(key), format!("must exceed the start value {lo}")));
        }
    }
    for (key, n, min) in [
        ("sim.points", cfg.sim.points, 2),
        ("fluxmap.flux_points", cfg.flux_map.flux_points, 1),
        ("fluxmap.f_points", cfg.flux_map.f_points, 2),
        ("readout.shots", cfg.readout.shots, 2),
    ] {
        if n < min {
            return Err(config_err(key, at(key), format!("must be at least {min}, got {n}")));
        }
    }
    if (cfg.readout.f_q - cfg.readout.f_r).abs() < 10.0 * cfg.readout.g {
        return Err(config_err("readout.g", at("readout.g"), "qubit-resonator detuning must be at least 10 g"));
    }
    Ok(cfg)
}
