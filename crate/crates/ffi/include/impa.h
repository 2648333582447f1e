#ifndef IMPA_H
#define IMPA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ImpaStatus {
  IMPA_STATUS_OK = 0,
  IMPA_STATUS_NULL_POINTER = 1,
  IMPA_STATUS_INVALID_UTF8 = 2,
  IMPA_STATUS_CONFIG = 3,
  IMPA_STATUS_DOMAIN = 4,
  IMPA_STATUS_NO_RESONANCE = 5,
  IMPA_STATUS_THRESHOLD = 6,
  IMPA_STATUS_UNPHYSICAL = 7,
  IMPA_STATUS_FAILED = 8,
  IMPA_STATUS_PANIC = 9,
} ImpaStatus;

/**
 * Opaque device handle.
 */
typedef struct ImpaDevice ImpaDevice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *impa_last_error_message(void);

/**
 * Builds a device from config text (the CLI's `section.key = value unit`
 * format). The handle is written to `out` and must be released with
 * [`impa_device_free`].
 *
 * # Safety
 * `config_text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum ImpaStatus impa_device_new(const char *config_text, struct ImpaDevice **out);

/**
 * Builds the bundled default device.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
enum ImpaStatus impa_device_default(struct ImpaDevice **out);

/**
 * # Safety
 * `dev` must be null or a handle from [`impa_device_new`] not yet freed.
 */
void impa_device_free(struct ImpaDevice *dev);

/**
 * Flux bias from the device's config, in flux quanta.
 *
 * # Safety
 * `dev` must be a live handle and `out` writable.
 */
enum ImpaStatus impa_device_flux(const struct ImpaDevice *dev, double *out);

/**
 * Pump-off resonance (Hz) at `flux` flux quanta.
 *
 * # Safety
 * `dev` must be a live handle and `out_hz` writable.
 */
enum ImpaStatus impa_resonant_frequency(const struct ImpaDevice *dev, double flux, double *out_hz);

/**
 * Impedance (ohm) the transformer chain presents to the device at `f_hz`.
 *
 * # Safety
 * `dev` must be a live handle; `out_re` and `out_im` writable.
 */
enum ImpaStatus impa_environment_impedance(const struct ImpaDevice *dev,
                                           double f_hz,
                                           double *out_re,
                                           double *out_im);

/**
 * Parametric oscillation threshold (rad/s) for a pump at `f_pump_hz`.
 *
 * # Safety
 * `dev` must be a live handle and `out` writable.
 */
enum ImpaStatus impa_oscillation_threshold(const struct ImpaDevice *dev,
                                           double flux,
                                           double f_pump_hz,
                                           double *out);

/**
 * Small-signal power gain (dB) at each of the `n` frequencies in `freqs_hz`,
 * written to `out_db`.
 *
 * # Safety
 * `dev` must be a live handle; `freqs_hz` and `out_db` must each hold `n`
 * doubles.
 */
enum ImpaStatus impa_small_signal_gain(const struct ImpaDevice *dev,
                                       double flux,
                                       double f_pump_hz,
                                       double strength,
                                       double phase,
                                       const double *freqs_hz,
                                       size_t n,
                                       double *out_db);

/**
 * Temperature (K) of one photon energy at `f_hz`.
 *
 * # Safety
 * `out` must be writable.
 */
enum ImpaStatus impa_quantum_limit_temperature(double f_hz, double *out);

/**
 * System noise temperature (K) from a Y-factor and the chain gains and
 * hot-load temperature.
 *
 * # Safety
 * `out` must be writable.
 */
enum ImpaStatus impa_system_noise_temperature(double y,
                                              double g_p,
                                              double g_i,
                                              double g_a,
                                              double t_hot,
                                              double *out);

/**
 * Quantum efficiency for `n_noise` added noise photons.
 *
 * # Safety
 * `out` must be writable.
 */
enum ImpaStatus impa_efficiency_from_noise(double n_noise, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMPA_H */
