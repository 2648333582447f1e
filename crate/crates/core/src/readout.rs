//! Dispersive readout: pulled resonator frequencies, I/Q cloud sampling,
//! state discrimination, coherence fits and tomography repeatability.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, linear_lstsq, LeastSquaresProblem, LmOptions};

/// Per-quadrature variance of a vacuum-noise-limited sample.
pub const VACUUM_VARIANCE: f64 = 0.5;
/// Pointer amplitude of the superposition state used for tomography batches.
pub const QST_POINTER_AMPLITUDE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DispersiveModel {
    pub f_q: f64,
    pub f_r: f64,
    /// Dispersive shift, Hz.
    pub chi: f64,
    pub g_coupling: f64,
    pub kappa_r: f64,
    /// Integrated pointer-state distance |α0 − α1| in photon-amplitude units.
    pub separation: f64,
    pub shots: usize,
}

impl DispersiveModel {
    pub fn new(
        f_q: f64,
        f_r: f64,
        chi: f64,
        g_coupling: f64,
        kappa_r: f64,
        separation: f64,
        shots: usize,
    ) -> Result<Self> {
        for (name, v) in [("chi", chi), ("g", g_coupling), ("kappa_r", kappa_r), ("separation", separation)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(f_q > 0.0 && f_r > 0.0) {
            return Err(Error::domain("qubit and resonator frequencies must be > 0"));
        }
        if (f_q - f_r).abs() < 10.0 * g_coupling {
            return Err(Error::domain(format!(
                "detuning {} Hz is below 10 g = {} Hz; not dispersive",
                (f_q - f_r).abs(),
                10.0 * g_coupling
            )));
        }
        Ok(Self { f_q, f_r, chi, g_coupling, kappa_r, separation, shots })
    }

    /// Resonator frequency with the qubit in |0⟩ and in |1⟩.
    pub fn pulled_frequencies(&self) -> (f64, f64) {
        (self.f_r - self.chi, self.f_r + self.chi)
    }
}

pub type IqPoint = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct IQCloudSet {
    pub samples0: Vec<IqPoint>,
    pub samples1: Vec<IqPoint>,
    pub means: [IqPoint; 2],
    /// Sample covariance [[II, IQ], [IQ, QQ]] per state.
    pub covariances: [[[f64; 2]; 2]; 2],
    /// Unit vector from the state-0 mean toward the state-1 mean.
    pub projection_axis: Option<IqPoint>,
}

fn mean_cov(s: &[IqPoint]) -> (IqPoint, [[f64; 2]; 2]) {
    let n = s.len() as f64;
    let m = [s.iter().map(|p| p[0]).sum::<f64>() / n, s.iter().map(|p| p[1]).sum::<f64>() / n];
    let dof = (n - 1.0).max(1.0);
    let mut c = [[0.0; 2]; 2];
    for p in s {
        let d = [p[0] - m[0], p[1] - m[1]];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] += d[i] * d[j] / dof;
            }
        }
    }
    (m, c)
}

impl IQCloudSet {
    pub fn new(samples0: Vec<IqPoint>, samples1: Vec<IqPoint>) -> Result<Self> {
        if samples0.is_empty() || samples1.is_empty() {
            return Err(Error::domain("both clouds need at least one sample"));
        }
        if samples0.iter().chain(&samples1).any(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::domain("non-finite I/Q sample"));
        }
        let (m0, c0) = mean_cov(&samples0);
        let (m1, c1) = mean_cov(&samples1);
        let d = [m1[0] - m0[0], m1[1] - m0[1]];
        let len = d[0].hypot(d[1]);
        let projection_axis = (len > 0.0).then(|| [d[0] / len, d[1] / len]);
        Ok(Self { samples0, samples1, means: [m0, m1], covariances: [c0, c1], projection_axis })
    }

    /// Same clouds rotated by `angle` and scaled by `scale` about the origin.
    pub fn transformed(&self, angle: f64, scale: f64) -> Result<Self> {
        let (s, c) = angle.sin_cos();
        let map = |v: &Vec<IqPoint>| -> Vec<IqPoint> {
            v.iter().map(|p| [scale * (c * p[0] - s * p[1]), scale * (s * p[0] + c * p[1])]).collect()
        };
        Self::new(map(&self.samples0), map(&self.samples1))
    }

    fn projected(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let u = self.projection_axis?;
        let proj = |v: &[IqPoint]| v.iter().map(|p| p[0] * u[0] + p[1] * u[1]).collect::<Vec<_>>();
        Some((proj(&self.samples0), proj(&self.samples1)))
    }
}

/// Discrimination figure with a flag for clouds whose means coincide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrimination {
    pub value: f64,
    pub zero_separation: bool,
}

impl Discrimination {
    fn zero() -> Self {
        Self { value: 0.0, zero_separation: true }
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

/// Efficiency attenuates the pointer separation by √η; noise stays at the
/// vacuum level. State 0 sits at −I, state 1 at +I.
pub fn simulate_clouds(model: &DispersiveModel, eta: f64, seed: u64) -> Result<IQCloudSet> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("efficiency must be in (0, 1], got {eta}")));
    }
    if model.shots < 2 {
        return Err(Error::domain("need at least 2 shots"));
    }
    let half = eta.sqrt() * model.separation / 2.0;
    let sigma = VACUUM_VARIANCE.sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draw = |centre: f64| -> Vec<IqPoint> {
        (0..model.shots)
            .map(|_| {
                let i: f64 = rng.sample(StandardNormal);
                let q: f64 = rng.sample(StandardNormal);
                [centre + sigma * i, sigma * q]
            })
            .collect()
    };
    let s0 = draw(-half);
    let s1 = draw(half);
    IQCloudSet::new(s0, s1)
}

/// |μ1 − μ0| along the projection axis over the RMS of the projected
/// standard deviations.
pub fn snr(clouds: &IQCloudSet) -> Discrimination {
    let Some((p0, p1)) = clouds.projected() else {
        return Discrimination::zero();
    };
    let (m0, v0) = mean_var(&p0);
    let (m1, v1) = mean_var(&p1);
    let spread = ((v0 + v1) / 2.0).sqrt();
    if spread == 0.0 {
        return Discrimination { value: f64::INFINITY, zero_separation: false };
    }
    Discrimination { value: (m1 - m0).abs() / spread, zero_separation: false }
}

/// max over thresholds of F0(t) − F1(t) from the empirical projected CDFs.
pub fn visibility(clouds: &IQCloudSet) -> Discrimination {
    let Some((p0, p1)) = clouds.projected() else {
        return Discrimination::zero();
    };
    let (n0, n1) = (p0.len() as f64, p1.len() as f64);
    let mut all: Vec<(f64, bool)> = p0.into_iter().map(|v| (v, false)).chain(p1.into_iter().map(|v| (v, true))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut c0, mut c1, mut best) = (0usize, 0usize, 0.0f64);
    let mut k = 0;
    while k < all.len() {
        // ties move together so the threshold sits between distinct values
        let v = all[k].0;
        while k < all.len() && all[k].0 == v {
            if all[k].1 {
                c1 += 1;
            } else {
                c0 += 1;
            }
            k += 1;
        }
        best = best.max(c0 as f64 / n0 - c1 as f64 / n1);
    }
    Discrimination { value: best, zero_separation: false }
}

/// Separation whose expected SNR at efficiency `eta` is `target_snr`:
/// expected SNR = √η·separation/√(VACUUM_VARIANCE).
pub fn calibrate_separation(target_snr: f64, eta: f64) -> Result<f64> {
    if !(target_snr >= 0.0 && target_snr.is_finite()) {
        return Err(Error::domain(format!("target SNR must be >= 0, got {target_snr}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("efficiency must be in (0, 1], got {eta}")));
    }
    Ok(target_snr * VACUUM_VARIANCE.sqrt() / eta.sqrt())
}

pub fn expected_snr(separation: f64, eta: f64) -> f64 {
    eta.sqrt() * separation / VACUUM_VARIANCE.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceFit {
    /// T1 for an exponential fit, T2 for a Ramsey fit, s.
    pub decay_time: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Ramsey fringe frequency, Hz.
    pub frequency: Option<f64>,
    pub phase: Option<f64>,
    pub residual_norm: f64,
    /// Ramsey fit fell back to a plain exponential (no oscillation found).
    pub fallback: bool,
}

/// Time axis shifted to start at zero and scaled to unit span.
struct Normalised {
    tau: Vec<f64>,
    y: Vec<f64>,
    t0: f64,
    span: f64,
}

fn normalise(times: &[f64], values: &[f64], min_points: usize) -> Result<Normalised> {
    if times.len() != values.len() {
        return Err(Error::domain("times and values differ in length"));
    }
    if times.len() < min_points {
        return Err(Error::domain(format!("need at least {min_points} points, got {}", times.len())));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite sample"));
    }
    let t0 = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t0;
    if !(span > 0.0) {
        return Err(Error::domain("time samples span zero"));
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::NoDecay("data are constant".into()));
    }
    Ok(Normalised { tau: times.iter().map(|t| (t - t0) / span).collect(), y: values.to_vec(), t0, span })
}

fn log_grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
}

struct ExpProblem<'a> {
    tau: &'a [f64],
    y: &'a [f64],
}

// params: amplitude, decay, offset
impl LeastSquaresProblem for ExpProblem<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.tau.iter().zip(self.y).map(|(t, y)| p[0] * (-t / p[1]).exp() + p[2] - y).collect()
    }
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.tau.len(), 3, |i, j| {
            let e = (-self.tau[i] / p[1]).exp();
            match j {
                0 => e,
                1 => p[0] * e * self.tau[i] / (p[1] * p[1]),
                _ => 1.0,
            }
        })
    }
}

const DECAY_GRID: (f64, f64, usize) = (1e-3, 50.0, 240);

/// Least-squares fit of A·exp(−t/T1) + B.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<CoherenceFit> {
    let n = normalise(times, values, 4)?;
    let y = DVector::from_column_slice(&n.y);
    let mut best: Option<(usize, f64, f64, f64, f64)> = None;
    for (k, decay) in log_grid(DECAY_GRID.0, DECAY_GRID.1, DECAY_GRID.2).enumerate() {
        let a = DMatrix::from_fn(n.tau.len(), 2, |i, j| if j == 0 { (-n.tau[i] / decay).exp() } else { 1.0 });
        if let Some((x, r)) = linear_lstsq(&a, &y) {
            if best.is_none_or(|b| r < b.4) {
                best = Some((k, x[0], decay, x[1], r));
            }
        }
    }
    let (k, amp, decay, offset, _) = best.ok_or_else(|| Error::Fit("exponential seed search failed".into()))?;
    if k + 1 == DECAY_GRID.2 {
        return Err(Error::NoDecay("no exponential decay within the sampled window".into()));
    }
    let problem = ExpProblem { tau: &n.tau, y: &n.y };
    let report = levenberg_marquardt(&problem, &[amp, decay, offset], &LmOptions::default())?;
    let p = &report.params;
    if !(p[1] > 0.0 && p[1] < DECAY_GRID.1) || p[0] == 0.0 {
        return Err(Error::NoDecay(format!("fitted decay {} of the window is not a decay", p[1])));
    }
    Ok(CoherenceFit {
        decay_time: p[1] * n.span,
        amplitude: p[0] * (n.t0 / (p[1] * n.span)).exp(),
        offset: p[2],
        frequency: None,
        phase: None,
        residual_norm: report.residual_norm,
        fallback: false,
    })
}

struct RamseyProblem<'a> {
    tau: &'a [f64],
    y: &'a [f64],
}

// params: amplitude, decay, frequency (cycles per window), phase, offset
impl LeastSquaresProblem for RamseyProblem<'_> {
    fn n_params(&self) -> usize {
        5
    }
    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.tau
            .iter()
            .zip(self.y)
            .map(|(t, y)| p[0] * (-t / p[1]).exp() * (2.0 * PI * p[2] * t + p[3]).cos() + p[4] - y)
            .collect()
    }
    fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.tau.len(), 5, |i, j| {
            let t = self.tau[i];
            let e = (-t / p[1]).exp();
            let arg = 2.0 * PI * p[2] * t + p[3];
            let (s, c) = arg.sin_cos();
            match j {
                0 => e * c,
                1 => p[0] * e * c * t / (p[1] * p[1]),
                2 => -p[0] * e * s * 2.0 * PI * t,
                3 => -p[0] * e * s,
                _ => 1.0,
            }
        })
    }
}

fn periodogram(tau: &[f64], y: &[f64], cycles: f64) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let (re, im) = tau.iter().zip(y).fold((0.0, 0.0), |acc, (t, v)| {
        let (s, c) = (2.0 * PI * cycles * t).sin_cos();
        (acc.0 + (v - mean) * c, acc.1 + (v - mean) * s)
    });
    re * re + im * im
}

/// Dominant fringe frequency in cycles per window, if the periodogram peaks
/// at two or more cycles.
fn fringe_prescan(tau: &[f64], y: &[f64]) -> Option<f64> {
    let nyquist = (tau.len() / 2).max(2);
    let power: Vec<f64> = (0..=nyquist).map(|k| periodogram(tau, y, k as f64)).collect();
    let k = (1..=nyquist).max_by(|&a, &b| power[a].total_cmp(&power[b]))?;
    let local_max = power[k] > power[k - 1] && (k == nyquist || power[k] >= power[k + 1]);
    if k < 2 || !local_max {
        return None;
    }
    let fine = (-10..=10).map(|d| k as f64 + 0.1 * d as f64);
    fine.max_by(|a, b| periodogram(tau, y, *a).total_cmp(&periodogram(tau, y, *b)))
}

/// Least-squares fit of A·exp(−t/T2)·cos(2πf·t + φ) + B, frequency seeded
/// from a periodogram; falls back to `fit_exponential` when no fringe is found.
pub fn fit_ramsey(times: &[f64], values: &[f64]) -> Result<CoherenceFit> {
    let n = normalise(times, values, 8)?;
    let Some(cycles) = fringe_prescan(&n.tau, &n.y) else {
        return fit_exponential(times, values).map(|f| CoherenceFit { fallback: true, ..f });
    };
    let y = DVector::from_column_slice(&n.y);
    let mut best: Option<([f64; 5], f64)> = None;
    for decay in log_grid(DECAY_GRID.0, DECAY_GRID.1, 80) {
        for df in -5..=5 {
            let f = cycles + 0.02 * df as f64;
            let a = DMatrix::from_fn(n.tau.len(), 3, |i, j| {
                let t = n.tau[i];
                let e = (-t / decay).exp();
                match j {
                    0 => e * (2.0 * PI * f * t).cos(),
                    1 => e * (2.0 * PI * f * t).sin(),
                    _ => 1.0,
                }
            });
            if let Some((x, r)) = linear_lstsq(&a, &y) {
                if best.is_none_or(|b| r < b.1) {
                    // a·cos + b·sin = A·cos(θ + φ) with A = |(a, b)|, φ = atan2(−b, a)
                    best = Some(([x[0].hypot(x[1]), decay, f, (-x[1]).atan2(x[0]), x[2]], r));
                }
            }
        }
    }
    let (seed, _) = best.ok_or_else(|| Error::Fit("Ramsey seed search failed".into()))?;
    let problem = RamseyProblem { tau: &n.tau, y: &n.y };
    let report = levenberg_marquardt(&problem, &seed, &LmOptions::default())?;
    let mut p = report.params.clone();
    if !(p[1] > 0.0 && p[1] < DECAY_GRID.1) {
        return Err(Error::NoDecay(format!("fitted decay {} of the window is not a decay", p[1])));
    }
    if p[0] < 0.0 {
        p[0] = -p[0];
        p[3] += PI;
    }
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    let freq = p[2] / n.span;
    // re-reference amplitude and phase from the shifted origin to t = 0
    let phase = (p[3] - 2.0 * PI * freq * n.t0).rem_euclid(2.0 * PI);
    Ok(CoherenceFit {
        decay_time: p[1] * n.span,
        amplitude: p[0] * (n.t0 / (p[1] * n.span)).exp(),
        offset: p[4],
        frequency: Some(freq),
        phase: Some(phase),
        residual_norm: report.residual_norm,
        fallback: false,
    })
}

/// Sample standard deviation over mean; 0 for identical values.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::domain("need at least 2 values"));
    }
    let (mean, var) = mean_var(values);
    let std = var.sqrt();
    if std == 0.0 && mean != 0.0 {
        return Ok(0.0);
    }
    if mean.abs() <= 3.0 * std / (values.len() as f64).sqrt() || mean == 0.0 {
        return Err(Error::UndefinedCv { mean, std });
    }
    Ok(std / mean.abs())
}

/// Batch quadrature-mean estimates of a fixed pointer signal at efficiency
/// `eta`. Batch `b` draws from ChaCha20 stream `b` of `seed`.
pub fn qst_batch_means(eta: f64, shots_per_batch: usize, batches: usize, seed: u64) -> Result<Vec<f64>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("efficiency must be in (0, 1], got {eta}")));
    }
    if batches < 10 {
        return Err(Error::domain(format!("need at least 10 batches, got {batches}")));
    }
    if shots_per_batch == 0 {
        return Err(Error::domain("need at least 1 shot per batch"));
    }
    let mean = eta.sqrt() * QST_POINTER_AMPLITUDE;
    let sigma = VACUUM_VARIANCE.sqrt();
    Ok((0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let sum: f64 = (0..shots_per_batch).map(|_| rng.sample::<f64, _>(StandardNormal)).sum();
            mean + sigma * sum / shots_per_batch as f64
        })
        .collect())
}

pub fn qst_cv(eta: f64, shots_per_batch: usize, batches: usize, seed: u64) -> Result<f64> {
    coefficient_of_variation(&qst_batch_means(eta, shots_per_batch, batches, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use statrs::function::erf::erf;

    fn model(separation: f64, shots: usize) -> DispersiveModel {
        DispersiveModel::new(5.2e9, 6.5e9, 1e6, 50e6, 2e6, separation, shots).unwrap()
    }

    #[test]
    fn pulled_frequency_examples() {
        let m = model(1.0, 10);
        assert_eq!(m.pulled_frequencies(), (6.499e9, 6.501e9));
        let flat = DispersiveModel { chi: 0.0, ..m.clone() };
        assert_eq!(flat.pulled_frequencies(), (6.5e9, 6.5e9));
        let (a, b) = DispersiveModel { chi: 3.3e6, ..m }.pulled_frequencies();
        assert!(((a + b) / 2.0 - 6.5e9).abs() < 1e-6);
        assert!(DispersiveModel::new(6.4e9, 6.5e9, 1e6, 50e6, 2e6, 1.0, 10).is_err());
    }

    #[test]
    fn zero_separation_clouds() {
        let c = simulate_clouds(&model(0.0, 100_000), 0.5, 3).unwrap();
        assert!(snr(&c).value < 0.05);
        assert!(visibility(&c).value < 0.02);
        let same = IQCloudSet::new(vec![[1.0, 2.0]; 5], vec![[1.0, 2.0]; 5]).unwrap();
        assert_eq!(snr(&same), Discrimination { value: 0.0, zero_separation: true });
        assert!(visibility(&same).zero_separation);
    }

    #[test]
    fn sampler_statistics() {
        let (eta, sep, shots) = (0.3, 4.0, 100_000);
        let se = (VACUUM_VARIANCE / shots as f64).sqrt();
        for seed in 0..100 {
            let c = simulate_clouds(&model(sep, shots), eta, seed).unwrap();
            let half = eta.sqrt() * sep / 2.0;
            for (m, target) in c.means.iter().zip([-half, half]) {
                assert!((m[0] - target).abs() < 4.0 * se);
                assert!(m[1].abs() < 4.0 * se);
            }
            if seed < 5 {
                for cov in c.covariances {
                    assert!((cov[0][0] / VACUUM_VARIANCE - 1.0).abs() < 0.02);
                    assert!((cov[1][1] / VACUUM_VARIANCE - 1.0).abs() < 0.02);
                }
            }
        }
        assert_eq!(simulate_clouds(&model(sep, 50), eta, 9), simulate_clouds(&model(sep, 50), eta, 9));
        assert!(simulate_clouds(&model(sep, 50), 0.0, 9).is_err());
        assert!(simulate_clouds(&model(sep, 1), 0.5, 9).is_err());
    }

    fn gaussian_pair(d: f64, sigma: f64, n: usize, seed: u64) -> IQCloudSet {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut g = |mu: f64| -> Vec<IqPoint> {
            (0..n).map(|_| [mu + sigma * rng.sample::<f64, _>(StandardNormal), 0.0]).collect()
        };
        let a = g(0.0);
        let b = g(d);
        IQCloudSet::new(a, b).unwrap()
    }

    #[test]
    fn snr_of_one_dimensional_gaussians() {
        let c = gaussian_pair(2.5, 1.0, 100_000, 11);
        assert!((snr(&c).value - 2.5).abs() < 0.03);
    }

    #[test]
    fn visibility_matches_overlap() {
        for (d, sigma) in [(0.5, 1.0), (1.5, 0.7), (3.0, 1.2)] {
            let c = gaussian_pair(d, sigma, 100_000, 5);
            let oracle = erf(d / (2.0 * 2f64.sqrt() * sigma));
            assert!((visibility(&c).value - oracle).abs() < 0.01, "{d} {sigma}");
            let from_snr = erf(snr(&c).value / (2.0 * 2f64.sqrt()));
            assert!((visibility(&c).value - from_snr).abs() < 0.02);
        }
        let far = gaussian_pair(100.0, 1.0, 10_000, 5);
        assert!(visibility(&far).value > 0.999);
    }

    #[test]
    fn calibrated_separation_round_trip() {
        assert_eq!(calibrate_separation(0.0, 0.3).unwrap(), 0.0);
        let sep = calibrate_separation(14.56, 0.2646).unwrap();
        assert!((calibrate_separation(29.12, 0.2646).unwrap() / sep - 2.0).abs() < 1e-15);
        let c = simulate_clouds(&model(sep, 100_000), 0.2646, 1).unwrap();
        assert!((snr(&c).value / 14.56 - 1.0).abs() < 0.03);
    }

    #[test]
    fn snr_ordering_in_efficiency() {
        let sep = 2.0;
        assert!(expected_snr(sep, 0.4) > expected_snr(sep, 0.2));
        for seed in 0..20 {
            let lo = snr(&simulate_clouds(&model(sep, 100_000), 0.1, seed).unwrap()).value;
            let hi = snr(&simulate_clouds(&model(sep, 100_000), 0.2, seed + 1000).unwrap()).value;
            assert!(hi > lo);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rotation_and_scale_invariance(angle in -PI..PI, scale in 1e-3..1e3f64, seed in 0u64..1000) {
            let c = simulate_clouds(&model(1.5, 2000), 0.5, seed).unwrap();
            let t = c.transformed(angle, scale).unwrap();
            prop_assert!((snr(&c).value - snr(&t).value).abs() < 1e-9);
            prop_assert!((visibility(&c).value - visibility(&t).value).abs() < 1e-9);
        }
    }

    fn decay(t1: f64, amp: f64, off: f64) -> (Vec<f64>, Vec<f64>) {
        decay_record(t1, amp, off, 60)
    }

    fn decay_record(t1: f64, amp: f64, off: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 24e-6 / n as f64).collect();
        let y = t.iter().map(|t| amp * (-t / t1).exp() + off).collect();
        (t, y)
    }

    fn ramsey(t2: f64, f: f64) -> (Vec<f64>, Vec<f64>) {
        ramsey_record(t2, f, 101)
    }

    fn ramsey_record(t2: f64, f: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * 10e-6 / (n - 1) as f64).collect();
        let y = t.iter().map(|t| 0.45 * (-t / t2).exp() * (2.0 * PI * f * t + 0.3).cos() + 0.5).collect();
        (t, y)
    }

    #[test]
    fn exponential_round_trip() {
        let (t, y) = decay(5.151e-6, 0.9, 0.05);
        let f = fit_exponential(&t, &y).unwrap();
        assert!((f.decay_time / 5.151e-6 - 1.0).abs() < 1e-6);
        assert!((f.amplitude - 0.9).abs() < 1e-6 && (f.offset - 0.05).abs() < 1e-6);
        // rising recovery is also a decay
        let (t, y) = decay(2e-6, -0.5, 1.0);
        assert!((fit_exponential(&t, &y).unwrap().decay_time / 2e-6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exponential_rejects_flat_data() {
        assert!(matches!(fit_exponential(&[0.0, 1.0, 2.0, 3.0], &[0.4; 4]), Err(Error::NoDecay(_))));
        let t: Vec<f64> = (0..20).map(f64::from).collect();
        let line: Vec<f64> = t.iter().map(|t| 1.0 - 0.01 * t).collect();
        assert!(matches!(fit_exponential(&t, &line), Err(Error::NoDecay(_))));
        assert!(fit_exponential(&[0.0, 1.0, 2.0], &[1.0, 0.5, 0.2]).is_err());
    }

    #[test]
    fn exponential_jacobian_matches_differences() {
        let (t, y) = decay(5e-6, 1.0, 0.0);
        let tau: Vec<f64> = t.iter().map(|v| v / t[59]).collect();
        let p = ExpProblem { tau: &tau, y: &y };
        let params = [0.8, 0.37, 0.1];
        let (a, n) = (p.jacobian(&params), crate::fit::numeric_jacobian(&p, &params));
        assert!((a - &n).amax() <= 1e-6 * n.amax());
    }

    #[test]
    fn ramsey_jacobian_matches_differences() {
        let (t, y) = ramsey(3e-6, 1.2e6);
        let tau: Vec<f64> = t.iter().map(|v| v / t[100]).collect();
        let p = RamseyProblem { tau: &tau, y: &y };
        let params = [0.4, 0.3, 12.0, 0.3, 0.5];
        let (a, n) = (p.jacobian(&params), crate::fit::numeric_jacobian(&p, &params));
        assert!((a - &n).amax() <= 1e-6 * n.amax());
    }

    #[test]
    fn ramsey_round_trip() {
        let (t, y) = ramsey(3.007e-6, 1.7e6);
        let f = fit_ramsey(&t, &y).unwrap();
        assert!(!f.fallback);
        assert!((f.decay_time / 3.007e-6 - 1.0).abs() < 1e-6);
        assert!((f.frequency.unwrap() / 1.7e6 - 1.0).abs() < 1e-6);
        assert!((f.phase.unwrap() - 0.3).abs() < 1e-6);
    }

    #[test]
    fn ramsey_without_fringes_falls_back() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.2e-6).collect();
        let y: Vec<f64> = t.iter().map(|t| 0.5 * (-t / 3.007e-6).exp() + 0.5).collect();
        let f = fit_ramsey(&t, &y).unwrap();
        assert!(f.fallback && f.frequency.is_none());
        assert!((f.decay_time / 3.007e-6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_fits_over_seeds() {
        use rand_distr::{Distribution, Normal};
        for seed in 0..100 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.01).unwrap();
            let (t, y) = decay_record(5.151e-6, 1.0, 0.0, 600);
            let y: Vec<f64> = y.iter().map(|v| v + noise.sample(&mut rng)).collect();
            assert!((fit_exponential(&t, &y).unwrap().decay_time / 5.151e-6 - 1.0).abs() < 0.02, "seed {seed}");
            let (t, y) = ramsey_record(3.007e-6, 1.7e6, 600);
            let y: Vec<f64> = y.iter().map(|v| v + noise.sample(&mut rng)).collect();
            assert!((fit_ramsey(&t, &y).unwrap().decay_time / 3.007e-6 - 1.0).abs() < 0.03, "seed {seed}");
        }
    }

    #[test]
    fn cv_helpers() {
        assert_eq!(coefficient_of_variation(&[2.5; 12]).unwrap(), 0.0);
        assert!(matches!(coefficient_of_variation(&[1.0, -1.0, 1.0, -1.0]), Err(Error::UndefinedCv { .. })));
        assert!(qst_cv(0.26, 100, 9, 1).is_err());
        let a = qst_batch_means(0.26, 500, 16, 7).unwrap();
        assert_eq!(a, qst_batch_means(0.26, 500, 16, 7).unwrap());
        assert!(qst_cv(0.26, 10_000, 50, 3).unwrap() < qst_cv(0.05, 10_000, 50, 3).unwrap());
    }
}
