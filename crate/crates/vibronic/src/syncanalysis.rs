//! Windowed Pearson synchronisation measure, its phase characterisation, and
//! real Fourier spectra of trajectory observables.

use crate::error::{Error, Result};
use crate::scalar::{cm_per_ps, Scalar};
use num_complex::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;

/// Relative tolerance for the uniform-grid check.
const GRID_TOL: f64 = 1e-9;
/// Windowed variance below this is treated as a constant signal.
const DEGENERATE_VARIANCE: f64 = 1e-24;
/// Zero-padding factor applied before the DFT.
const FT_PAD: usize = 4;
/// Minimum number of samples accepted by [`real_ft`].
const FT_MIN_SAMPLES: usize = 16;

/// Sliding-window Pearson correlation C(t | Δt) between two signals.
///
/// `values[i]` is the correlation over the window starting at `times[i]`;
/// the series is defined only where the whole window lies inside the
/// trajectory, so it is one window shorter than the input grid. Degenerate
/// windows (a constant signal) yield NaN with a warning rather than an error.
#[derive(Debug, Clone)]
pub struct SyncSeries<R: Scalar> {
    /// Window start times in ps.
    pub times: Vec<R>,
    /// C(t) ∈ [−1, 1], NaN where a window is degenerate.
    pub values: Vec<R>,
    /// Window length Δt in ps.
    pub window: R,
    /// Names of the two correlated signals.
    pub signal_names: (String, String),
    /// Diagnostics (degenerate windows and the like).
    pub warnings: Vec<String>,
}

impl<R: Scalar> SyncSeries<R> {
    /// Serialises as `t_ps,sync` CSV.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_ps,sync")?;
        for (t, c) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t:.6},{c:.9}")?;
        }
        Ok(())
    }
}

/// Real part of the discrete Fourier transform of a windowed signal.
#[derive(Debug, Clone)]
pub struct Spectrum<R: Scalar> {
    /// Frequency grid in cm⁻¹ (zero-padded resolution).
    pub frequencies: Vec<R>,
    /// Re FT of the windowed signal at each frequency.
    pub values: Vec<R>,
    /// Time interval (t_start, t_end) that was transformed, in ps.
    pub window: (R, R),
}

impl<R: Scalar> Spectrum<R> {
    /// Frequency spacing of the (zero-padded) grid in cm⁻¹.
    pub fn resolution(&self) -> R {
        self.frequencies[1] - self.frequencies[0]
    }

    /// The dominant peak as (frequency cm⁻¹, Re FT value), with the
    /// frequency refined by parabolic interpolation on |Re FT|.
    pub fn dominant_peak(&self) -> (R, R) {
        let i = self
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        (self.refine(i), self.values[i])
    }

    /// Local maxima of |Re FT| at least `min_rel` of the global maximum,
    /// as (refined frequency, Re FT value), ascending in frequency.
    pub fn local_peaks(&self, min_rel: R) -> Vec<(R, R)> {
        let mag: Vec<R> = self.values.iter().map(|v| v.abs()).collect();
        let top = mag.iter().cloned().fold(R::zero(), R::max);
        let mut out = Vec::new();
        for i in 1..mag.len().saturating_sub(1) {
            if mag[i] >= mag[i - 1] && mag[i] > mag[i + 1] && mag[i] >= min_rel * top {
                out.push((self.refine(i), self.values[i]));
            }
        }
        out
    }

    /// Re FT value at the grid point closest to `freq_cm1`.
    pub fn value_near(&self, freq_cm1: R) -> R {
        let df = self.resolution();
        let mut i = ((freq_cm1 - self.frequencies[0]) / df).round().to_f64_lossy() as usize;
        i = i.min(self.values.len() - 1);
        self.values[i]
    }

    fn refine(&self, i: usize) -> R {
        let f = self.frequencies[i];
        if i == 0 || i + 1 >= self.values.len() {
            return f;
        }
        let (ym, y0, yp) = (
            self.values[i - 1].abs(),
            self.values[i].abs(),
            self.values[i + 1].abs(),
        );
        let denom = ym - (y0 + y0) + yp;
        if denom.abs() < R::of(1e-300) {
            return f;
        }
        let two = R::of(2.0);
        let shift = (ym - yp) / (two * denom);
        f + shift * self.resolution()
    }

    /// Serialises as `freq_cm1,re_ft` CSV.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "freq_cm1,re_ft")?;
        for (f, v) in self.frequencies.iter().zip(&self.values) {
            writeln!(w, "{f:.4},{v:.9e}")?;
        }
        Ok(())
    }
}

/// Default synchronisation window: one period of the mode at `omega_cm1`.
pub fn default_sync_window<R: Scalar>(omega_cm1: R) -> R {
    R::one() / (omega_cm1 * cm_per_ps::<R>())
}

fn check_uniform_grid<R: Scalar>(times: &[R]) -> Result<R> {
    if times.len() < 2 {
        return Err(Error::WindowTooShort { n: times.len(), min: 2 });
    }
    let dt = times[1] - times[0];
    for i in 1..times.len() {
        let expect = times[0] + dt * R::of(i as f64);
        if (times[i] - expect).abs() > R::of(GRID_TOL) * dt.abs().max(R::one()) {
            return Err(Error::Config(
                "pearson_sync requires a uniform time grid".into(),
            ));
        }
    }
    Ok(dt)
}

/// Trapezoidal integral of uniformly sampled values with spacing `dt`.
fn trapezoid<R: Scalar>(values: &[R], dt: R) -> R {
    let half = R::of(0.5);
    let inner: R = values[1..values.len() - 1].iter().cloned().sum();
    (inner + half * (values[0] + values[values.len() - 1])) * dt
}

/// Sliding-window Pearson correlation of two signals on a common uniform
/// grid (Eq. 11 form): per window, means are removed and the covariance and
/// variance integrals are evaluated by the trapezoidal rule.
pub fn pearson_sync<R: Scalar>(
    times: &[R],
    f1: &[R],
    f2: &[R],
    window: R,
    signal_names: (&str, &str),
) -> Result<SyncSeries<R>> {
    if f1.len() != times.len() || f2.len() != times.len() {
        return Err(Error::Config(
            "pearson_sync signals must share the time grid".into(),
        ));
    }
    let dt = check_uniform_grid(times)?;
    if !(window > R::zero()) {
        return Err(Error::Config("sync window must be positive".into()));
    }
    let w = (window / dt).round().to_f64_lossy() as usize;
    if w < 3 {
        return Err(Error::Config(format!(
            "sync window {} ps spans {} grid steps; at least 3 required",
            window, w
        )));
    }
    if w >= times.len() {
        return Err(Error::WindowTooShort { n: times.len(), min: w + 1 });
    }

    let n_out = times.len() - w;
    let results: Vec<(R, bool)> = (0..n_out)
        .into_par_iter()
        .map(|i| {
            let a = &f1[i..=i + w];
            let b = &f2[i..=i + w];
            let span = dt * R::of(w as f64);
            let mean_a = trapezoid(a, dt) / span;
            let mean_b = trapezoid(b, dt) / span;
            let da: Vec<R> = a.iter().map(|&v| v - mean_a).collect();
            let db: Vec<R> = b.iter().map(|&v| v - mean_b).collect();
            let cov: Vec<R> = da.iter().zip(&db).map(|(&x, &y)| x * y).collect();
            let va: Vec<R> = da.iter().map(|&x| x * x).collect();
            let vb: Vec<R> = db.iter().map(|&x| x * x).collect();
            let var_a = trapezoid(&va, dt);
            let var_b = trapezoid(&vb, dt);
            if var_a < R::of(DEGENERATE_VARIANCE) || var_b < R::of(DEGENERATE_VARIANCE) {
                (R::nan(), true)
            } else {
                (trapezoid(&cov, dt) / (var_a * var_b).sqrt(), false)
            }
        })
        .collect();

    let mut warnings = Vec::new();
    let degenerate = results.iter().filter(|r| r.1).count();
    if degenerate > 0 {
        warnings.push(format!(
            "{degenerate} of {n_out} windows had variance below {DEGENERATE_VARIANCE:e} \
             (constant signal); emitted NaN"
        ));
    }
    Ok(SyncSeries {
        times: times[..n_out].to_vec(),
        values: results.into_iter().map(|r| r.0).collect(),
        window: dt * R::of(w as f64),
        signal_names: (signal_names.0.into(), signal_names.1.into()),
        warnings,
    })
}

/// Calibration curve C(φ) for f1 = sin(a·t), f2 = sin(a·t + φ) with the
/// given window (Fig. 2 analogue). `frequency_a` is the angular frequency
/// in rad per time unit; one point is returned per phase.
pub fn sync_phase_characterisation<R: Scalar>(
    frequency_a: R,
    window: R,
    phases: &[R],
) -> Result<Vec<(R, R)>> {
    if !(frequency_a > R::zero()) {
        return Err(Error::Config("calibration frequency must be positive".into()));
    }
    let period = R::of(2.0) * R::PI() / frequency_a;
    // fine grid over one window plus one period of margin
    let n = 2048usize;
    let total = window + period;
    let dt = total / R::of(n as f64);
    let times: Vec<R> = (0..=n).map(|i| dt * R::of(i as f64)).collect();
    let f1: Vec<R> = times.iter().map(|&t| (frequency_a * t).sin()).collect();
    phases
        .iter()
        .map(|&phi| {
            let f2: Vec<R> = times
                .iter()
                .map(|&t| (frequency_a * t + phi).sin())
                .collect();
            let sync = pearson_sync(&times, &f1, &f2, window, ("f1", "f2"))?;
            Ok((phi, sync.values[0]))
        })
        .collect()
}

/// Real part of the forward DFT of the signal restricted to
/// [t_start, t_end], zero-padded 4×, frequency axis in cm⁻¹
/// (ν = cycles-per-ps / 0.0299792458). `detrend` subtracts the window mean.
/// A pure cosine yields a positive real peak at its frequency.
pub fn real_ft<R: Scalar>(
    times: &[R],
    signal: &[R],
    t_start: R,
    t_end: R,
    detrend: bool,
) -> Result<Spectrum<R>> {
    if signal.len() != times.len() {
        return Err(Error::Config("real_ft signal must share the time grid".into()));
    }
    let dt = check_uniform_grid(times)?;
    let half = R::of(0.5) * dt;
    let selected: Vec<R> = times
        .iter()
        .zip(signal)
        .filter(|(&t, _)| t >= t_start - half && t <= t_end + half)
        .map(|(_, &v)| v)
        .collect();
    let n = selected.len();
    if n < FT_MIN_SAMPLES {
        return Err(Error::WindowTooShort { n, min: FT_MIN_SAMPLES });
    }
    let mean = if detrend {
        selected.iter().cloned().sum::<R>() / R::of(n as f64)
    } else {
        R::zero()
    };
    let padded = n * FT_PAD;
    let mut buf: Vec<Complex<R>> = Vec::with_capacity(padded);
    buf.extend(selected.iter().map(|&v| Complex::new(v - mean, R::zero())));
    buf.resize(padded, Complex::<R>::default());
    FftPlanner::<R>::new().plan_fft_forward(padded).process(&mut buf);

    let dt_f64 = dt;
    let df_cm1 = R::one() / (dt_f64 * R::of(padded as f64) * cm_per_ps::<R>());
    let n_keep = padded / 2 + 1;
    let frequencies = (0..n_keep).map(|k| df_cm1 * R::of(k as f64)).collect();
    let values = buf[..n_keep].iter().map(|z| z.re).collect();
    Ok(Spectrum {
        frequencies,
        values,
        window: (t_start, t_end),
    })
}

/// Earliest time t with C(t') ≥ `threshold` for all t' in [t, t + hold];
/// `None` if the condition is never met. NaN values never satisfy the
/// threshold. `threshold` must lie in (0, 1].
pub fn sync_onset_time<R: Scalar>(sync: &SyncSeries<R>, threshold: R, hold: R) -> Option<R> {
    assert!(
        threshold > R::zero() && threshold <= R::one(),
        "onset threshold must lie in (0, 1]"
    );
    let n = sync.times.len();
    if n == 0 {
        return None;
    }
    let dt = if n > 1 {
        sync.times[1] - sync.times[0]
    } else {
        R::one()
    };
    let hold_steps = (hold / dt).ceil().to_f64_lossy() as usize;
    // suffix run-lengths of consecutive above-threshold samples
    let mut run = vec![0usize; n];
    for i in (0..n).rev() {
        if sync.values[i] >= threshold {
            run[i] = 1 + if i + 1 < n { run[i + 1] } else { 0 };
        }
    }
    for i in 0..n {
        // the hold interval must fit inside the series
        if i + hold_steps < n && run[i] > hold_steps {
            return Some(sync.times[i]);
        }
    }
    None
}
