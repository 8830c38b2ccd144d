use super::RawTrajectory;
use crate::error::{ensure, Error, Result};

/// Slices whose sample variance is below this (mm²) are treated as flat.
const FLAT_VARIANCE: f64 = 1e-6;
/// The time-constant search spans `[duration / 200, 10 · duration]`.
const TAU_MIN_FRACTION: f64 = 1.0 / 200.0;
const TAU_MAX_FACTOR: f64 = 10.0;
/// Golden-section stops once the bracket is this narrow relative to τ.
const TAU_REL_TOL: f64 = 1e-6;

/// Least-squares parameters of `d(t) = D_f + (D_i − D_f)·e^(−t/τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub d_init: f64,
    pub d_final: f64,
    pub tau: f64,
    pub duration: f64,
    pub residual_rms: f64,
    /// Set when the slice was flat and the fit fell back to its mean.
    pub degenerate: bool,
}

impl ExponentialFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.d_final + (self.d_init - self.d_final) * (-t / self.tau).exp()
    }

    pub fn labeled(self, power_label: f64) -> TrajectorySegment {
        TrajectorySegment {
            d_init: self.d_init,
            d_final: self.d_final,
            tau: self.tau,
            duration: self.duration,
            power_label,
            residual_rms: self.residual_rms,
            degenerate: self.degenerate,
        }
    }
}

/// One denoised hold with the power that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySegment {
    pub d_init: f64,
    pub d_final: f64,
    pub tau: f64,
    pub duration: f64,
    pub power_label: f64,
    pub residual_rms: f64,
    pub degenerate: bool,
}

impl TrajectorySegment {
    pub fn eval(&self, t: f64) -> f64 {
        self.d_final + (self.d_init - self.d_final) * (-t / self.tau).exp()
    }
}

/// Minimises a unimodal `f` on `[a, b]` by golden-section search, stopping
/// when the bracket is narrower than `tol`. Returns `(x, f(x))`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// For fixed τ the model is linear in `(D_i, D_f)`; returns the optimal pair
/// and the residual sum of squares.
fn linear_solve(times: &[f64], ys: &[f64], tau: f64) -> (f64, f64, f64) {
    let n = times.len() as f64;
    let g: Vec<f64> = times.iter().map(|t| (-t / tau).exp()).collect();
    let g_mean = g.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sgg, mut sgy) = (0.0, 0.0);
    for (gk, yk) in g.iter().zip(ys) {
        let dg = gk - g_mean;
        sgg += dg * dg;
        sgy += dg * (yk - y_mean);
    }
    // y = D_f + (D_i − D_f)·g  ⇒  slope = D_i − D_f, intercept = D_f
    let slope = if sgg > 0.0 { sgy / sgg } else { 0.0 };
    let d_final = y_mean - slope * g_mean;
    let d_init = d_final + slope;
    let rss = g
        .iter()
        .zip(ys)
        .map(|(gk, yk)| {
            let r = yk - (d_final + slope * gk);
            r * r
        })
        .sum();
    (d_init, d_final, rss)
}

/// Denoises one slice with the exponential transition model.
///
/// τ is found by golden-section search on `ln τ` around the closed-form
/// solve for `(D_i, D_f)`. Flat slices return their mean with
/// `τ = duration` and the `degenerate` flag set.
pub fn fit_exponential(slice: &RawTrajectory) -> Result<ExponentialFit> {
    ensure(slice.len() >= 4, || {
        Error::InvalidInput(format!("need at least 4 samples to fit, got {}", slice.len()))
    })?;
    ensure(slice.times.len() == slice.displacements.len(), || {
        Error::InvalidInput("times and displacements differ in length".into())
    })?;
    ensure(slice.displacements.iter().all(|d| d.is_finite()), || {
        Error::InvalidInput("non-finite displacement".into())
    })?;
    let t0 = slice.times[0];
    let times: Vec<f64> = slice.times.iter().map(|t| t - t0).collect();
    let duration = *times.last().unwrap();
    ensure(duration > 0.0, || Error::InvalidInput("slice has zero duration".into()))?;
    let ys = &slice.displacements;

    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let ss: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss / (n - 1.0) < FLAT_VARIANCE {
        return Ok(ExponentialFit {
            d_init: mean,
            d_final: mean,
            tau: duration,
            duration,
            residual_rms: (ss / n).sqrt(),
            degenerate: true,
        });
    }

    let lo = (duration * TAU_MIN_FRACTION).ln();
    let hi = (duration * TAU_MAX_FACTOR).ln();
    let (log_tau, _) = golden_section_min(
        |lt| linear_solve(&times, ys, lt.exp()).2,
        lo,
        hi,
        TAU_REL_TOL,
    );
    let tau = log_tau.exp();
    let (d_init, d_final, rss) = linear_solve(&times, ys, tau);
    Ok(ExponentialFit {
        d_init,
        d_final,
        tau,
        duration,
        residual_rms: (rss / n).sqrt(),
        degenerate: false,
    })
}
