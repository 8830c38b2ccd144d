use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};

use super::{mean_std, predict, Ensemble, EnsemblePrediction, TrajectoryRequest};
use crate::error::{ensure, Error, Result};
use crate::excitation::PowerSchedule;
use crate::pipeline::sample_camera;
use crate::plant::{heating_hold_power, simulate, ActuatorParams, ActuatorState};
use crate::seed;

pub const EPISODE_CSV_HEADER: &str = "time_s,desired_mm,measured_mm";

/// How the twin is brought to the episode's initial displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepStrategy {
    /// Hold the power whose heating-branch equilibrium is `D_i`, computed
    /// from the nominal twin parameters.
    TwinEquilibrium,
    /// Hold the ensemble's prediction for the steady request `(D_i, D_i)`.
    SteadyRequest,
}

impl PrepStrategy {
    pub fn name(self) -> &'static str {
        match self {
            PrepStrategy::TwinEquilibrium => "twin-equilibrium",
            PrepStrategy::SteadyRequest => "steady-request",
        }
    }
}

impl std::str::FromStr for PrepStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "twin-equilibrium" => Ok(PrepStrategy::TwinEquilibrium),
            "steady-request" => Ok(PrepStrategy::SteadyRequest),
            _ => Err(Error::Parse(format!("unknown preparation strategy {s:?}"))),
        }
    }
}

/// Settings of an open-loop episode on the twin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeConfig {
    pub repeats: usize,
    pub fps: f64,
    /// Camera noise, mm.
    pub noise_std: f64,
    /// Integrator step, s.
    pub dt: f64,
    pub seed: u64,
    /// Standard deviation of a per-repeat offset of the ambient temperature, K.
    pub ambient_jitter_k: f64,
    pub prep: PrepStrategy,
    /// Length of the preparatory hold in thermal time constants.
    pub settle_time_constants: f64,
    /// Largest displacement drift allowed over the last time constant of the
    /// preparatory hold, mm.
    pub settle_tolerance_mm: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            repeats: 5,
            fps: 30.0,
            noise_std: 0.1,
            dt: 0.01,
            seed: 0,
            ambient_jitter_k: 1.0,
            prep: PrepStrategy::TwinEquilibrium,
            settle_time_constants: 5.0,
            settle_tolerance_mm: 0.5,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Error::Configuration(m.to_string());
        ensure(self.repeats >= 1, || bad("repeats must be >= 1"))?;
        ensure(self.fps.is_finite() && self.fps > 0.0, || bad("fps must be > 0"))?;
        ensure(self.noise_std.is_finite() && self.noise_std >= 0.0, || bad("noise_std must be >= 0"))?;
        ensure(self.dt.is_finite() && self.dt > 0.0, || bad("dt must be > 0"))?;
        ensure(self.ambient_jitter_k.is_finite() && self.ambient_jitter_k >= 0.0, || {
            bad("ambient_jitter_k must be >= 0")
        })?;
        ensure(self.settle_time_constants > 0.0, || bad("settle_time_constants must be > 0"))?;
        ensure(self.settle_tolerance_mm > 0.0, || bad("settle_tolerance_mm must be > 0"))?;
        Ok(())
    }
}

/// What the twin goes through, starting at ambient, before the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Preparation {
    pub label: String,
    pub schedule: PowerSchedule,
    /// Require the displacement to be stationary at the end.
    pub settle_check: bool,
    /// Ensemble output behind the hold, for [`PrepStrategy::SteadyRequest`].
    pub prediction: Option<EnsemblePrediction>,
}

impl Preparation {
    /// Replays a recorded power history; the episode continues where it ends.
    pub fn history(schedule: PowerSchedule) -> Self {
        Self {
            label: "history".into(),
            schedule,
            settle_check: false,
            prediction: None,
        }
    }

    /// Power of the final preparatory segment, W.
    pub fn final_power(&self) -> f64 {
        self.schedule.segments().last().map_or(0.0, |s| s.power_w)
    }
}

/// Chooses a settling hold that brings the twin to `req.d_init`.
pub fn plan_preparation(
    ens: &Ensemble,
    params: &ActuatorParams,
    req: &TrajectoryRequest,
    cfg: &EpisodeConfig,
) -> Result<Preparation> {
    cfg.validate()?;
    params.validate()?;
    let hold_s = (cfg.settle_time_constants * params.thermal_time_constant()).ceil();
    let (power, prediction) = match cfg.prep {
        PrepStrategy::TwinEquilibrium => (heating_hold_power(params, req.d_init), None),
        PrepStrategy::SteadyRequest => {
            let steady = TrajectoryRequest {
                d_final: req.d_init,
                ..*req
            };
            let p = predict(ens, &steady)?;
            (p.mean_power, Some(p))
        }
    };
    Ok(Preparation {
        label: cfg.prep.name().into(),
        schedule: PowerSchedule::new(vec![(power, hold_s)], "prepare")?,
        settle_check: true,
        prediction,
    })
}

/// Drives the twin through the preparation from ambient. Returns the final
/// state with its clock reset and the displacement drift over the last
/// thermal time constant.
pub fn prepare_twin(
    params: &ActuatorParams,
    prep: &Preparation,
    cfg: &EpisodeConfig,
) -> Result<(ActuatorState, f64)> {
    let trace = simulate(params, &prep.schedule, cfg.dt, &ActuatorState::at_ambient(params))?;
    let end = trace.records.last().expect("non-empty trace").displacement_mm;
    let window_start = trace.duration() - params.thermal_time_constant();
    let drift = trace
        .records
        .iter()
        .filter(|r| r.time_s >= window_start)
        .map(|r| (r.displacement_mm - end).abs())
        .fold(0.0, f64::max);
    ensure(!prep.settle_check || drift <= cfg.settle_tolerance_mm, || {
        Error::Setup(format!(
            "preparatory hold at {:.3} W still drifting {drift:.3} mm after {} s",
            prep.final_power(),
            trace.duration()
        ))
    })?;
    let mut state = trace.final_state;
    state.time_s = 0.0;
    Ok((state, drift))
}

/// One filmed repetition of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatTrace {
    pub ambient_temp: f64,
    /// Displacement at the end of the preparatory hold, mm.
    pub start_displacement: f64,
    pub prep_drift_mm: f64,
    pub times: Vec<f64>,
    pub desired: Vec<f64>,
    pub measured: Vec<f64>,
    /// Noise-free displacement at the frame times.
    pub actual: Vec<f64>,
    /// RMS of `measured − desired`, mm.
    pub rms_error: f64,
    /// RMS of `actual − desired`, mm.
    pub rms_error_noise_free: f64,
}

impl RepeatTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(EPISODE_CSV_HEADER);
        out.push('\n');
        for ((t, d), m) in self.times.iter().zip(&self.desired).zip(&self.measured) {
            let _ = writeln!(out, "{t},{d},{m}");
        }
        out
    }
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    (sum / n as f64).sqrt()
}

/// Prepares the twin and applies `power` for the request's duration,
/// `cfg.repeats` times.
///
/// Each repeat draws its own ambient offset and camera noise from `cfg.seed`
/// and runs its own preparatory hold under that ambient. The simulated hold
/// is rounded up to whole integrator steps; frames past `req.duration` are
/// dropped.
pub fn run_episode(
    params: &ActuatorParams,
    req: &TrajectoryRequest,
    power: f64,
    prep: &Preparation,
    cfg: &EpisodeConfig,
) -> Result<Vec<RepeatTrace>> {
    cfg.validate()?;
    req.validate(params.full_stroke)?;
    let steps = (req.duration / cfg.dt - 1e-9).ceil().max(1.0);
    let sched = PowerSchedule::new(vec![(power, steps * cfg.dt)], "episode")?;
    let jitter = Normal::new(0.0, cfg.ambient_jitter_k).expect("validated std");

    (0..cfg.repeats)
        .map(|r| {
            let mut p = *params;
            if cfg.ambient_jitter_k > 0.0 {
                let mut rng = seed::rng(seed::split(seed::split(cfg.seed, 1), r as u64));
                p.ambient_temp += jitter.sample(&mut rng);
            }
            let (start, prep_drift_mm) = prepare_twin(&p, prep, cfg)?;
            let trace = simulate(&p, &sched, cfg.dt, &start)?;
            let noise_seed = seed::split(seed::split(cfg.seed, 0), r as u64);
            let clean = sample_camera(&trace, cfg.fps, 0.0, noise_seed)?;
            let raw = sample_camera(&trace, cfg.fps, cfg.noise_std, noise_seed)?;
            let keep = raw.times.iter().take_while(|&&t| t <= req.duration + 1e-9).count();
            let times = raw.times[..keep].to_vec();
            let desired: Vec<f64> = times.iter().map(|&t| req.desired(t)).collect();
            let measured = raw.displacements[..keep].to_vec();
            let actual = clean.displacements[..keep].to_vec();
            let rms_error = rms(measured.iter().zip(&desired).map(|(m, d)| m - d));
            let rms_error_noise_free = rms(actual.iter().zip(&desired).map(|(a, d)| a - d));
            Ok(RepeatTrace {
                ambient_temp: p.ambient_temp,
                start_displacement: start.displacement,
                prep_drift_mm,
                times,
                desired,
                measured,
                actual,
                rms_error,
                rms_error_noise_free,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub request: TrajectoryRequest,
    pub prediction: EnsemblePrediction,
    pub preparation: Preparation,
    pub repeats: Vec<RepeatTrace>,
    /// Mean over repeats of the per-repeat RMS error, mm.
    pub rms_error: f64,
    /// RMS over time of the across-repeat sample standard deviation, mm.
    pub spread: f64,
    /// RMS over time of the mean measured curve minus the desired one, mm.
    pub mean_error: f64,
}

impl EpisodeReport {
    /// `mean_error / spread`; infinite when the repeats coincide.
    pub fn spread_ratio(&self) -> f64 {
        if self.spread > 0.0 {
            self.mean_error / self.spread
        } else {
            f64::INFINITY
        }
    }

    /// Mean measured displacement per frame, mm.
    pub fn mean_measured(&self) -> Vec<f64> {
        let n = self.repeats.len() as f64;
        (0..self.repeats[0].times.len())
            .map(|i| self.repeats.iter().map(|r| r.measured[i]).sum::<f64>() / n)
            .collect()
    }
}

/// Predicts the hold power for `req` and applies it `cfg.repeats` times on
/// a twin prepared according to `cfg.prep`.
pub fn control_episode(
    ens: &Ensemble,
    params: &ActuatorParams,
    req: &TrajectoryRequest,
    cfg: &EpisodeConfig,
) -> Result<EpisodeReport> {
    let preparation = plan_preparation(ens, params, req, cfg)?;
    control_episode_from(ens, params, req, preparation, cfg)
}

/// [`control_episode`] with an explicit preparation.
pub fn control_episode_from(
    ens: &Ensemble,
    params: &ActuatorParams,
    req: &TrajectoryRequest,
    preparation: Preparation,
    cfg: &EpisodeConfig,
) -> Result<EpisodeReport> {
    let prediction = predict(ens, req)?;
    let repeats = run_episode(params, req, prediction.mean_power, &preparation, cfg)?;

    let rms_error = repeats.iter().map(|r| r.rms_error).sum::<f64>() / repeats.len() as f64;
    let frames = repeats[0].times.len();
    let n = repeats.len() as f64;
    let mut spread_sq = 0.0;
    let mut mean_sq = 0.0;
    for i in 0..frames {
        let column: Vec<f64> = repeats.iter().map(|r| r.measured[i]).collect();
        let (m, pop_std) = mean_std(&column);
        if n > 1.0 {
            spread_sq += pop_std * pop_std * n / (n - 1.0);
        }
        let e = m - repeats[0].desired[i];
        mean_sq += e * e;
    }
    Ok(EpisodeReport {
        request: *req,
        prediction,
        preparation,
        rms_error,
        spread: (spread_sq / frames as f64).sqrt(),
        mean_error: (mean_sq / frames as f64).sqrt(),
        repeats,
    })
}
