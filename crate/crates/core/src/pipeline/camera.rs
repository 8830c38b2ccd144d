use rand_distr::{Distribution, Normal};

use crate::error::{ensure, Error, Result};
use crate::excitation::PowerSchedule;
use crate::plant::SimTrace;
use crate::seed;

/// Displacement samples at camera rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub times: Vec<f64>,
    pub displacements: Vec<f64>,
    pub fps: f64,
    /// Label of the schedule the footage was taken from.
    pub source: String,
}

impl RawTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,displacement_mm\n");
        for (t, d) in self.times.iter().zip(&self.displacements) {
            out.push_str(&format!("{},{}\n", crate::format::sig9(*t), crate::format::sig9(*d)));
        }
        out
    }
}

/// Observes a trace at `fps` frames per second with additive Gaussian jitter.
///
/// Each frame takes the trace record nearest in time. The noise stream is a
/// pure function of `seed`.
pub fn sample_camera(trace: &SimTrace, fps: f64, noise_std: f64, seed: u64) -> Result<RawTrajectory> {
    ensure(fps.is_finite() && fps > 0.0, || {
        Error::InvalidInput(format!("fps must be > 0, got {fps}"))
    })?;
    ensure(noise_std.is_finite() && noise_std >= 0.0, || {
        Error::InvalidInput(format!("noise_std must be >= 0, got {noise_std}"))
    })?;
    ensure(!trace.is_empty(), || Error::InvalidInput("empty trace".into()))?;
    let max_fps = 1.0 / trace.dt;
    ensure(fps <= max_fps * (1.0 + 1e-12), || Error::Oversampling { fps, max_fps })?;

    let t0 = trace.start_time();
    let frames = (trace.duration() * fps + 1e-9).floor() as usize + 1;
    let last = trace.len() - 1;
    let mut rng = seed::rng(seed);
    let noise = Normal::new(0.0, noise_std).expect("validated std");

    let mut times = Vec::with_capacity(frames);
    let mut displacements = Vec::with_capacity(frames);
    for k in 0..frames {
        let rel = k as f64 / fps;
        let idx = ((rel / trace.dt).round() as usize).min(last);
        let mut d = trace.records[idx].displacement_mm;
        if noise_std > 0.0 {
            d += noise.sample(&mut rng);
        }
        times.push(t0 + rel);
        displacements.push(d);
    }
    Ok(RawTrajectory {
        times,
        displacements,
        fps,
        source: String::new(),
    })
}

/// Cuts footage into one slice per schedule segment.
///
/// Frames on a switch instant belong to both neighbouring slices, so each
/// slice spans its whole hold. Slice clocks start at zero at the switch time.
pub fn segment(raw: &RawTrajectory, schedule: &PowerSchedule) -> Result<Vec<(RawTrajectory, f64)>> {
    ensure(raw.len() >= 2, || Error::Misalignment("footage has fewer than 2 frames".into()))?;
    let frame = 1.0 / raw.fps;
    let total = schedule.total_duration();
    ensure(raw.duration() >= total - frame, || {
        Error::Misalignment(format!(
            "footage covers {} s of a {} s schedule",
            raw.duration(),
            total
        ))
    })?;
    let t0 = raw.times[0];
    let switches = schedule.switch_times();
    let last = raw.len() - 1;
    let mut out = Vec::with_capacity(schedule.segments().len());
    for (m, seg) in schedule.segments().iter().enumerate() {
        let (start, end) = (switches[m], switches[m + 1]);
        let first = ((start * raw.fps) - 1e-6).ceil().max(0.0) as usize;
        let stop = (((end * raw.fps) + 1e-6).floor() as usize).min(last);
        ensure(stop > first, || {
            Error::Misalignment(format!("segment {m} ({start} s to {end} s) holds fewer than 2 frames"))
        })?;
        let times = raw.times[first..=stop].iter().map(|t| t - t0 - start).collect();
        out.push((
            RawTrajectory {
                times,
                displacements: raw.displacements[first..=stop].to_vec(),
                fps: raw.fps,
                source: raw.source.clone(),
            },
            seg.power_w,
        ));
    }
    Ok(out)
}
