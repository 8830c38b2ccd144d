//! Ensemble training, trajectory-to-power inference and open-loop episodes
//! against the twin.

mod ensemble;
mod episode;

pub use ensemble::{
    bootstrap_indices, bootstrap_resample, draw_lambdas, member_file, regression_set, train_ensemble,
    train_member, Ensemble, EnsembleConfig, Envelope, Member, BUNDLE_MANIFEST,
};
pub use episode::{
    control_episode, control_episode_from, plan_preparation, prepare_twin, run_episode,
    EpisodeConfig, EpisodeReport, PrepStrategy, Preparation, RepeatTrace, EPISODE_CSV_HEADER,
};

use crate::error::{ensure, Error, Result};
use crate::nn::forward;
use crate::pipeline::{trajectory_features, Normalization};

/// A desired exponential approach `d(t) = D_f + (D_i − D_f)·e^(−t/τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRequest {
    pub d_init: f64,
    pub d_final: f64,
    pub tau: f64,
    pub duration: f64,
}

impl TrajectoryRequest {
    pub fn validate(&self, stroke_mm: f64) -> Result<()> {
        ensure(self.tau.is_finite() && self.tau > 0.0, || {
            Error::InvalidInput(format!("tau {} must be > 0", self.tau))
        })?;
        ensure(self.duration.is_finite() && self.duration > 0.0, || {
            Error::InvalidInput(format!("duration {} must be > 0", self.duration))
        })?;
        for (name, d) in [("d_init", self.d_init), ("d_final", self.d_final)] {
            ensure((0.0..=stroke_mm).contains(&d), || {
                Error::InvalidInput(format!("{name} {d} mm outside [0, {stroke_mm}] mm"))
            })?;
        }
        Ok(())
    }

    /// Same request with a different time constant.
    pub fn with_tau(self, tau: f64) -> Self {
        Self { tau, ..self }
    }

    /// Desired displacement at `t` seconds into the hold, mm.
    pub fn desired(&self, t: f64) -> f64 {
        self.d_final + (self.d_init - self.d_final) * (-t / self.tau).exp()
    }
}

/// Network input for `req`, identical to the features of a fitted segment
/// with the same parameters.
pub fn encode_request(req: &TrajectoryRequest, norm: &Normalization) -> Result<Vec<f64>> {
    norm.validate()?;
    req.validate(norm.stroke_mm)?;
    Ok(trajectory_features(req.d_init, req.d_final, req.tau, req.duration, norm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    /// Mean of `member_powers`, W.
    pub mean_power: f64,
    /// Population standard deviation of `member_powers`, W.
    pub std_power: f64,
    /// Per-member power after clamping to `[0, power_max]`, W.
    pub member_powers: Vec<f64>,
    /// The request lies outside the displacements seen in training.
    pub extrapolated: bool,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Constant power each member recommends for `req`, with ensemble statistics.
pub fn predict(ens: &Ensemble, req: &TrajectoryRequest) -> Result<EnsemblePrediction> {
    let x = encode_request(req, &ens.normalization)?;
    let scale = ens.normalization.power_scale_w;
    let member_powers = ens
        .members
        .iter()
        .map(|m| forward(&m.params, &x).map(|y| (y * scale).clamp(0.0, ens.power_max())))
        .collect::<Result<Vec<_>>>()?;
    let (mean_power, std_power) = mean_std(&member_powers);
    Ok(EnsemblePrediction {
        mean_power,
        std_power,
        member_powers,
        extrapolated: !ens.envelope.contains(&x),
    })
}
