//! `impa` command-line interface.
//!
//! Exit status: 0 on success, 1 on invalid input or arguments, 2 on I/O
//! failure. Diagnostics go to stderr; each command writes one CSV and a
//! short summary on stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{parse_config, DeviceConfig};
use crate::error::{Error, Result};
use crate::noise::{
    efficiency_from_noise, noise_photons_from_temperature, quantum_limit_temperature, system_noise_temperature,
};
use crate::paramp::{
    bandwidth_above, gain_vs_power, saturation_power, small_signal_gain, tune_pump, PumpSettings, Saturation,
    TuneObjective, TuneResult,
};
use crate::readout::{fit_exponential, fit_ramsey, simulate_clouds, snr, visibility, CoherenceFit};
use crate::squid::{fit_flux_modulation, phase_map, pump_off_reflection, resonant_frequency, DeviceModel};
use crate::trace::{
    compression_from_sweep, crop_profile, measured_gain, parse_csv, parse_power_sweep_csv, parse_trace_csv,
    read_file, table_csv, trace_csv, write_atomic, MeasuredTrace, PowerSweep,
};

/// Configuration used when `--config` is not given.
pub const DEFAULT_CONFIG: &str = include_str!("../config/impa.conf");

#[derive(Debug, Parser)]
#[command(name = "impa", version, about = "Impedance-transformed paramp modelling and trace analysis")]
pub struct Cli {
    /// Device configuration file (defaults to the bundled device)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output CSV path (defaults to `<command>.csv`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pump-off reflection phase over flux and frequency
    FluxMap,
    /// Small-signal gain profile and 10/14 dB bandwidths
    Gain {
        /// Also write pump-off and pump-on traces into this directory
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Gain against signal power and the 1-dB compression point
    Saturate {
        /// Signal frequency, Hz (defaults to the gain peak)
        #[arg(long)]
        freq: Option<f64>,
    },
    /// Quantum limit, system noise, added photons and efficiency
    Noise,
    /// Simulated I/Q clouds, SNR and visibility
    Readout,
    /// Fit a decay, Ramsey fringe or flux-modulation curve
    Fit {
        #[arg(value_enum)]
        kind: FitKind,
        /// Input CSV (`time_s,value` or `flux_phi0,freq_hz`)
        #[arg(long)]
        input: PathBuf,
    },
    /// Gain, bandwidths and compression from measured traces
    Analyze {
        /// Pump-on trace (`freq_hz,s21_re,s21_im`)
        #[arg(long)]
        on: PathBuf,
        /// Pump-off reference trace
        #[arg(long)]
        off: PathBuf,
        /// Power sweep CSV (`power_dbm,gain_db`)
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Optimise pump settings for bandwidth above the target gain
    Tune,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    T1,
    T2,
    Fluxmod,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::FluxMap => "flux-map",
            Command::Gain { .. } => "gain",
            Command::Saturate { .. } => "saturate",
            Command::Noise => "noise",
            Command::Readout => "readout",
            Command::Fit { .. } => "fit",
            Command::Analyze { .. } => "analyze",
            Command::Tune => "tune",
        }
    }
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{rendered}") } else { write!(stderr, "{rendered}") };
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<DeviceConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let bytes = read_file(path)?;
            let text = String::from_utf8(bytes).map_err(|_| Error::Parse { line: 1, msg: "config is not UTF-8".into() })?;
            parse_config(&text)?
        }
        None => parse_config(DEFAULT_CONFIG)?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_path(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", cli.command.name())))
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = out_path(cli);
    let mut report = String::new();
    match &cli.command {
        Command::FluxMap => flux_map(&cfg, &out, &mut report)?,
        Command::Gain { traces } => gain(&cfg, &out, traces.as_deref(), &mut report)?,
        Command::Saturate { freq } => saturate(&cfg, &out, *freq, &mut report)?,
        Command::Noise => noise(&cfg, &out, &mut report)?,
        Command::Readout => readout(&cfg, &out, &mut report)?,
        Command::Fit { kind, input } => fit(&cfg, *kind, input, &out, &mut report)?,
        Command::Analyze { on, off, sweep } => analyze(&cfg, on, off, sweep.as_deref(), &out, &mut report)?,
        Command::Tune => tune(&cfg, &out, &mut report)?,
    }
    report.push_str(&format!("wrote {}\n", out.display()));
    stdout.write_all(report.as_bytes())?;
    Ok(())
}

fn line(report: &mut String, text: impl AsRef<str>) {
    report.push_str(text.as_ref());
    report.push('\n');
}

fn key_value_csv(rows: &[(&str, f64)]) -> String {
    let mut out = String::from("quantity,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{}\n", crate::trace::format_value(*v)));
    }
    out
}

fn tune_objective(cfg: &DeviceConfig) -> TuneObjective {
    TuneObjective {
        target_gain_db: cfg.tune.target_gain,
        band: (cfg.sim.f_start, cfg.sim.f_stop),
        points: cfg.sim.points,
        ripple_db: cfg.tune.ripple,
    }
}

/// Pump from the config, or tuned to the target gain when unset.
fn operating_pump(cfg: &DeviceConfig, device: &DeviceModel) -> Result<(PumpSettings, Option<TuneResult>)> {
    match cfg.pump_settings()? {
        Some(p) => Ok((p, None)),
        None => {
            let r = tune_pump(device, cfg.flux(), &tune_objective(cfg))?;
            Ok((r.pump, Some(r)))
        }
    }
}

fn describe_pump(report: &mut String, pump: &PumpSettings, tuned: bool) {
    line(
        report,
        format!(
            "pump{}: f_pump = {:.6} GHz, strength = {:.6e} rad/s, phase = {:.4} rad",
            if tuned { " (tuned)" } else { "" },
            pump.f_pump / 1e9,
            pump.strength,
            pump.phase
        ),
    );
}

fn flux_map(cfg: &DeviceConfig, out: &Path, report: &mut String) -> Result<()> {
    let device = cfg.device_model()?;
    let map = phase_map(&device, &cfg.flux_grid(), &cfg.flux_map_freqs())?;
    let rows = map.flux_grid.iter().zip(&map.phase).flat_map(|(flux, row)| {
        map.freq_grid.iter().zip(row).map(move |(f, p)| vec![flux.0, *f, *p])
    });
    write_atomic(out, &table_csv(&["flux_phi0", "freq_hz", "phase_rad"], rows))?;
    line(report, format!("l_stray = {:.4} pH", device.l_stray * 1e12));
    line(report, format!("resonance at flux {} = {:.6} GHz", cfg.device.flux, resonant_frequency(&device, cfg.flux())? / 1e9));
    line(report, format!("map: {} flux x {} frequency points", map.flux_grid.len(), map.freq_grid.len()));
    Ok(())
}

fn gain(cfg: &DeviceConfig, out: &Path, traces: Option<&Path>, report: &mut String) -> Result<()> {
    let device = cfg.device_model()?;
    let (pump, tuned) = operating_pump(cfg, &device)?;
    let grid = cfg.sim_grid();
    let profile = small_signal_gain(&device, cfg.flux(), &pump, &grid)?;
    let db = profile.gain_db();
    let rows = (0..grid.len()).map(|k| {
        let (s, i) = (profile.signal_gain[k], profile.idler_gain[k]);
        vec![grid[k], db[k], s.re, s.im, i.re, i.im]
    });
    write_atomic(out, &table_csv(&["freq_hz", "gain_db", "signal_re", "signal_im", "idler_re", "idler_im"], rows))?;
    if let Some(dir) = traces {
        let off: Vec<_> = grid.iter().map(|&f| pump_off_reflection(&device, f, cfg.flux())).collect::<Result<_>>()?;
        let on = off.iter().zip(&profile.signal_gain).map(|(o, g)| o * g).collect();
        let mut meta = std::collections::BTreeMap::new();
        meta.insert("flux".to_string(), format!("{}", cfg.device.flux));
        meta.insert("pump".to_string(), "off".to_string());
        let off_trace = MeasuredTrace { freq: grid.clone(), s21: off, meta: meta.clone() };
        meta.insert("pump".to_string(), "on".to_string());
        let on_trace = MeasuredTrace { freq: grid.clone(), s21: on, meta };
        write_atomic(&dir.join("pump_off.csv"), &trace_csv(&off_trace))?;
        write_atomic(&dir.join("pump_on.csv"), &trace_csv(&on_trace))?;
        line(report, format!("traces written to {}", dir.display()));
    }
    describe_pump(report, &pump, tuned.is_some());
    let (peak, f_peak) = profile.peak();
    line(report, format!("peak gain = {peak:.3} dB at {:.6} GHz", f_peak / 1e9));
    line(report, format!("bandwidth above 10 dB = {:.3} MHz", bandwidth_above(&profile, 10.0) / 1e6));
    line(report, format!("bandwidth above 14 dB = {:.3} MHz", bandwidth_above(&profile, 14.0) / 1e6));
    line(report, format!("local maxima = {}", profile.local_maxima().len()));
    Ok(())
}

fn saturate(cfg: &DeviceConfig, out: &Path, freq: Option<f64>, report: &mut String) -> Result<()> {
    let device = cfg.device_model()?;
    let (pump, tuned) = operating_pump(cfg, &device)?;
    let f_s = match freq {
        Some(f) => f,
        None => small_signal_gain(&device, cfg.flux(), &pump, &cfg.sim_grid())?.peak().1,
    };
    let kerr = cfg.kerr_model(&device)?;
    let powers = cfg.saturate_powers();
    let gains = gain_vs_power(&device, cfg.flux(), &pump, &kerr, f_s, &powers)?;
    let sweep = PowerSweep { power_dbm: powers, gain_db: gains };
    write_atomic(out, &crate::trace::power_sweep_csv(&sweep))?;
    describe_pump(report, &pump, tuned.is_some());
    line(report, format!("signal = {:.6} GHz, kerr = {:.4e} rad/s per photon", f_s / 1e9, kerr.kerr_per_photon));
    match saturation_power(&device, cfg.flux(), &pump, &kerr, f_s)? {
        Saturation::Compressed { p1db_dbm, small_signal_db } => {
            line(report, format!("small-signal gain = {small_signal_db:.3} dB"));
            line(report, format!("P_1dB = {p1db_dbm:.2} dBm"));
        }
        Saturation::NoCompression { small_signal_db } => {
            line(report, format!("small-signal gain = {small_signal_db:.3} dB"));
            line(report, "no compression below -60 dBm");
        }
    }
    Ok(())
}

fn noise(cfg: &DeviceConfig, out: &Path, report: &mut String) -> Result<()> {
    let chain = cfg.ampl_chain()?;
    let t_sys = system_noise_temperature(cfg.noise.y, &chain)?;
    let rows = cfg
        .sim_grid()
        .into_iter()
        .map(|f| {
            let n = noise_photons_from_temperature(t_sys, f)?;
            Ok(vec![f, quantum_limit_temperature(f)?, t_sys, n, efficiency_from_noise(n)?])
        })
        .collect::<Result<Vec<_>>>()?;
    write_atomic(out, &table_csv(&["freq_hz", "t_quantum_k", "t_sys_k", "n_noise", "eta"], rows))?;
    let f = cfg.noise.f;
    let n = noise_photons_from_temperature(t_sys, f)?;
    line(report, format!("T_q({:.4} GHz) = {:.4} K", f / 1e9, quantum_limit_temperature(f)?));
    line(report, format!("T_sys = {t_sys:.4} K"));
    line(report, format!("n_noise = {n:.4}"));
    line(report, format!("eta = {:.5}", efficiency_from_noise(n)?));
    Ok(())
}

fn readout(cfg: &DeviceConfig, out: &Path, report: &mut String) -> Result<()> {
    let model = cfg.dispersive_model()?;
    let clouds = simulate_clouds(&model, cfg.readout.eta, cfg.seed)?;
    let rows = clouds
        .samples0
        .iter()
        .map(|p| vec![0.0, p[0], p[1]])
        .chain(clouds.samples1.iter().map(|p| vec![1.0, p[0], p[1]]));
    write_atomic(out, &table_csv(&["state", "i", "q"], rows))?;
    let (f0, f1) = model.pulled_frequencies();
    line(report, format!("pulled resonator: |0> {:.6} GHz, |1> {:.6} GHz", f0 / 1e9, f1 / 1e9));
    line(report, format!("eta = {}, separation = {:.4}, shots = {}, seed = {}", cfg.readout.eta, model.separation, model.shots, cfg.seed));
    let s = snr(&clouds);
    let v = visibility(&clouds);
    let flag = if s.zero_separation { " (zero separation)" } else { "" };
    line(report, format!("SNR = {:.3}{flag}", s.value));
    line(report, format!("visibility = {:.4}", v.value));
    Ok(())
}

fn read_columns(path: &Path, header: &[&str]) -> Result<(Vec<f64>, Vec<f64>)> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Parse { line: 1, msg: "input is not UTF-8".into() })?;
    let table = parse_csv(text, header)?;
    Ok((table.rows.iter().map(|r| r[0]).collect(), table.rows.iter().map(|r| r[1]).collect()))
}

fn coherence_rows(prefix: &str, fit: &CoherenceFit) -> Vec<(String, f64)> {
    let mut rows = vec![
        (format!("{prefix}_s"), fit.decay_time),
        ("amplitude".to_string(), fit.amplitude),
        ("offset".to_string(), fit.offset),
    ];
    if let (Some(f), Some(p)) = (fit.frequency, fit.phase) {
        rows.push(("frequency_hz".to_string(), f));
        rows.push(("phase_rad".to_string(), p));
    }
    rows.push(("residual_norm".to_string(), fit.residual_norm));
    rows.push(("fallback".to_string(), if fit.fallback { 1.0 } else { 0.0 }));
    rows
}

fn fit(cfg: &DeviceConfig, kind: FitKind, input: &Path, out: &Path, report: &mut String) -> Result<()> {
    let rows: Vec<(String, f64)> = match kind {
        FitKind::T1 | FitKind::T2 => {
            let (t, y) = read_columns(input, &["time_s", "value"])?;
            let (label, fit) = match kind {
                FitKind::T1 => ("t1", fit_exponential(&t, &y)?),
                _ => ("t2", fit_ramsey(&t, &y)?),
            };
            line(report, format!("{} = {:.4} us", label.to_uppercase(), fit.decay_time * 1e6));
            if fit.fallback {
                line(report, "no fringe found; exponential fit used");
            }
            if let Some(f) = fit.frequency {
                line(report, format!("fringe frequency = {:.4} MHz", f / 1e6));
            }
            coherence_rows(label, &fit)
        }
        FitKind::Fluxmod => {
            let (flux, freq) = read_columns(input, &["flux_phi0", "freq_hz"])?;
            let data: Vec<(f64, f64)> = flux.into_iter().zip(freq).collect();
            let fit = fit_flux_modulation(&data, cfg.device.c_p)?;
            line(report, format!("i_c = {:.4} uA", fit.i_c_est * 1e6));
            line(report, format!("flux offset = {:.5} phi0, period = {:.5} phi0", fit.flux_offset_est, fit.period_est));
            line(report, format!("f_max = {:.6} GHz", fit.f_max_est / 1e9));
            vec![
                ("i_c_a".to_string(), fit.i_c_est),
                ("flux_offset_phi0".to_string(), fit.flux_offset_est),
                ("period_phi0".to_string(), fit.period_est),
                ("l_stray_h".to_string(), fit.l_stray_est),
                ("f_max_hz".to_string(), fit.f_max_est),
                ("residual_norm".to_string(), fit.residual_norm),
            ]
        }
    };
    let borrowed: Vec<(&str, f64)> = rows.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    write_atomic(out, &key_value_csv(&borrowed))
}

fn analyze(
    cfg: &DeviceConfig,
    on: &Path,
    off: &Path,
    sweep: Option<&Path>,
    out: &Path,
    report: &mut String,
) -> Result<()> {
    let on = parse_trace_csv(&read_file(on)?)?;
    let off = parse_trace_csv(&read_file(off)?)?;
    let profile = crop_profile(&measured_gain(&on, &off)?, cfg.analysis.f_start, cfg.analysis.f_stop);
    if profile.freq_grid.is_empty() {
        return Err(Error::domain(format!(
            "no trace points inside the analysis band {}..{} Hz",
            cfg.analysis.f_start, cfg.analysis.f_stop
        )));
    }
    let db = profile.gain_db();
    write_atomic(out, &table_csv(&["freq_hz", "gain_db"], profile.freq_grid.iter().zip(&db).map(|(f, g)| vec![*f, *g])))?;
    let (peak, f_peak) = profile.peak();
    line(report, format!("points analysed = {}", profile.freq_grid.len()));
    line(report, format!("peak gain = {peak:.3} dB at {:.6} GHz", f_peak / 1e9));
    line(report, format!("bandwidth above 10 dB = {:.3} MHz", bandwidth_above(&profile, 10.0) / 1e6));
    line(report, format!("bandwidth above 14 dB = {:.3} MHz", bandwidth_above(&profile, 14.0) / 1e6));
    if let Some(path) = sweep {
        match compression_from_sweep(&parse_power_sweep_csv(&read_file(path)?)?)? {
            Saturation::Compressed { p1db_dbm, .. } => line(report, format!("P_1dB = {p1db_dbm:.2} dBm")),
            Saturation::NoCompression { .. } => line(report, "no compression in sweep"),
        }
    }
    Ok(())
}

fn tune(cfg: &DeviceConfig, out: &Path, report: &mut String) -> Result<()> {
    let device = cfg.device_model()?;
    let r = tune_pump(&device, cfg.flux(), &tune_objective(cfg))?;
    let profile = small_signal_gain(&device, cfg.flux(), &r.pump, &cfg.sim_grid())?;
    write_atomic(
        out,
        &key_value_csv(&[
            ("f_pump_hz", r.pump.f_pump),
            ("strength_rad_s", r.pump.strength),
            ("phase_rad", r.pump.phase),
            ("peak_gain_db", r.peak_gain_db),
            ("bandwidth_above_target_hz", r.bandwidth_hz),
            ("bandwidth_above_10db_hz", bandwidth_above(&profile, 10.0)),
            ("reachable", if r.reachable { 1.0 } else { 0.0 }),
        ]),
    )?;
    describe_pump(report, &r.pump, true);
    line(report, format!("target = {} dB, peak = {:.3} dB{}", cfg.tune.target_gain, r.peak_gain_db, if r.reachable { "" } else { " (unreachable)" }));
    line(report, format!("bandwidth above target = {:.3} MHz", r.bandwidth_hz / 1e6));
    line(report, format!("bandwidth above 10 dB = {:.3} MHz", bandwidth_above(&profile, 10.0) / 1e6));
    Ok(())
}
