//! C ABI over `impa-core`.
//!
//! Every function returns an [`ImpaStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read back with
//! [`impa_last_error_message`]. Devices are opaque [`ImpaDevice`] handles
//! created from config text and released with [`impa_device_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use impa_core::config::{parse_config, DeviceConfig};
use impa_core::noise::{
    efficiency_from_noise, quantum_limit_temperature, system_noise_temperature, AmplChain,
};
use impa_core::paramp::{oscillation_threshold, small_signal_gain, PumpSettings};
use impa_core::squid::{resonant_frequency, DeviceModel, FluxBias};
use impa_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    NoResonance = 5,
    Threshold = 6,
    Unphysical = 7,
    Failed = 8,
    Panic = 9,
}

impl From<&Error> for ImpaStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config { .. } | Error::Parse { .. } | Error::Order { .. } => ImpaStatus::Config,
            Error::Domain(_) | Error::Divergence { .. } | Error::Pole(_) => ImpaStatus::Domain,
            Error::NoResonance { .. } => ImpaStatus::NoResonance,
            Error::OscillationThreshold { .. } => ImpaStatus::Threshold,
            Error::UnphysicalEnvironment { .. } => ImpaStatus::Unphysical,
            _ => ImpaStatus::Failed,
        }
    }
}

/// Opaque device handle.
pub struct ImpaDevice {
    config: DeviceConfig,
    model: DeviceModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), ImpaStatus>) -> ImpaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ImpaStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            ImpaStatus::Panic
        }
    }
}

fn check(r: impa_core::Result<f64>) -> Result<f64, ImpaStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        ImpaStatus::from(&e)
    })
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), ImpaStatus> {
    if p.is_null() {
        set_error(format!("`{name}` is null"));
        return Err(ImpaStatus::NullPointer);
    }
    Ok(())
}

unsafe fn device<'a>(dev: *const ImpaDevice) -> Result<&'a ImpaDevice, ImpaStatus> {
    non_null(dev, "device")?;
    Ok(&*dev)
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn impa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a device from config text (the CLI's `section.key = value unit`
/// format). The handle is written to `out` and must be released with
/// [`impa_device_free`].
///
/// # Safety
/// `config_text` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn impa_device_new(config_text: *const c_char, out: *mut *mut ImpaDevice) -> ImpaStatus {
    guard(|| {
        non_null(config_text, "config_text")?;
        non_null(out, "out")?;
        let text = CStr::from_ptr(config_text).to_str().map_err(|e| {
            set_error(format!("config text is not UTF-8: {e}"));
            ImpaStatus::InvalidUtf8
        })?;
        let built = parse_config(text).and_then(|config| {
            let model = config.device_model()?;
            Ok(ImpaDevice { config, model })
        });
        match built {
            Ok(d) => {
                *out = Box::into_raw(Box::new(d));
                Ok(())
            }
            Err(e) => {
                set_error(e.to_string());
                Err(ImpaStatus::from(&e))
            }
        }
    })
}

/// Builds the bundled default device.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn impa_device_default(out: *mut *mut ImpaDevice) -> ImpaStatus {
    let text = CString::new(impa_core::cli::DEFAULT_CONFIG).unwrap_or_default();
    impa_device_new(text.as_ptr(), out)
}

/// # Safety
/// `dev` must be null or a handle from [`impa_device_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn impa_device_free(dev: *mut ImpaDevice) {
    if !dev.is_null() {
        drop(Box::from_raw(dev));
    }
}

/// Flux bias from the device's config, in flux quanta.
///
/// # Safety
/// `dev` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn impa_device_flux(dev: *const ImpaDevice, out: *mut f64) -> ImpaStatus {
    guard(|| {
        let d = device(dev)?;
        non_null(out, "out")?;
        *out = d.config.flux().0;
        Ok(())
    })
}

/// Pump-off resonance (Hz) at `flux` flux quanta.
///
/// # Safety
/// `dev` must be a live handle and `out_hz` writable.
#[no_mangle]
pub unsafe extern "C" fn impa_resonant_frequency(dev: *const ImpaDevice, flux: f64, out_hz: *mut f64) -> ImpaStatus {
    guard(|| {
        let d = device(dev)?;
        non_null(out_hz, "out_hz")?;
        *out_hz = check(resonant_frequency(&d.model, FluxBias(flux)))?;
        Ok(())
    })
}

/// Impedance (ohm) the transformer chain presents to the device at `f_hz`.
///
/// # Safety
/// `dev` must be a live handle; `out_re` and `out_im` writable.
#[no_mangle]
pub unsafe extern "C" fn impa_environment_impedance(
    dev: *const ImpaDevice,
    f_hz: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> ImpaStatus {
    guard(|| {
        let d = device(dev)?;
        non_null(out_re, "out_re")?;
        non_null(out_im, "out_im")?;
        let z = d.model.environment.impedance(f_hz).map_err(|e| {
            set_error(e.to_string());
            ImpaStatus::from(&e)
        })?;
        *out_re = z.re;
        *out_im = z.im;
        Ok(())
    })
}

/// Parametric oscillation threshold (rad/s) for a pump at `f_pump_hz`.
///
/// # Safety
/// `dev` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn impa_oscillation_threshold(
    dev: *const ImpaDevice,
    flux: f64,
    f_pump_hz: f64,
    out: *mut f64,
) -> ImpaStatus {
    guard(|| {
        let d = device(dev)?;
        non_null(out, "out")?;
        *out = check(oscillation_threshold(&d.model, FluxBias(flux), f_pump_hz))?;
        Ok(())
    })
}

/// Small-signal power gain (dB) at each of the `n` frequencies in `freqs_hz`,
/// written to `out_db`.
///
/// # Safety
/// `dev` must be a live handle; `freqs_hz` and `out_db` must each hold `n`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn impa_small_signal_gain(
    dev: *const ImpaDevice,
    flux: f64,
    f_pump_hz: f64,
    strength: f64,
    phase: f64,
    freqs_hz: *const f64,
    n: usize,
    out_db: *mut f64,
) -> ImpaStatus {
    guard(|| {
        let d = device(dev)?;
        non_null(freqs_hz, "freqs_hz")?;
        non_null(out_db, "out_db")?;
        let freqs = std::slice::from_raw_parts(freqs_hz, n);
        let profile = PumpSettings::new(f_pump_hz, strength, phase)
            .and_then(|p| small_signal_gain(&d.model, FluxBias(flux), &p, freqs))
            .map_err(|e| {
                set_error(e.to_string());
                ImpaStatus::from(&e)
            })?;
        std::slice::from_raw_parts_mut(out_db, n).copy_from_slice(&profile.gain_db());
        Ok(())
    })
}

/// Temperature (K) of one photon energy at `f_hz`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn impa_quantum_limit_temperature(f_hz: f64, out: *mut f64) -> ImpaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = check(quantum_limit_temperature(f_hz))?;
        Ok(())
    })
}

/// System noise temperature (K) from a Y-factor and the chain gains and
/// hot-load temperature.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn impa_system_noise_temperature(
    y: f64,
    g_p: f64,
    g_i: f64,
    g_a: f64,
    t_hot: f64,
    out: *mut f64,
) -> ImpaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = check(AmplChain::new(g_p, g_i, g_a, t_hot).and_then(|c| system_noise_temperature(y, &c)))?;
        Ok(())
    })
}

/// Quantum efficiency for `n_noise` added noise photons.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn impa_efficiency_from_noise(n_noise: f64, out: *mut f64) -> ImpaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = check(efficiency_from_noise(n_noise))?;
        Ok(())
    })
}
