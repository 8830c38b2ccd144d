use std::fmt::Write as _;

use rayon::prelude::*;

use super::{fit_exponential, sample_camera, segment, RawTrajectory, TrajectorySegment};
use crate::error::{ensure, Error, Result};
use crate::excitation::PowerSchedule;
use crate::kv::KeyValues;
use crate::plant::{simulate, ActuatorParams, ActuatorState};
use crate::seed;

/// Points per resampled trajectory.
pub const SAMPLE_POINTS: usize = 100;
/// Network input width: interleaved (time, displacement) pairs.
pub const FEATURE_LEN: usize = 2 * SAMPLE_POINTS;

pub const TAU_CSV_HEADER: &str = "segment_index,power_w,d_init_mm,d_final_mm,tau_s,residual_rms_mm";
const DATASET_MAGIC: &str = "# thermal-muscle dataset v1";

/// Scaling between physical units and network units. Displacements are
/// divided by the stroke, powers by `power_scale_w`, times by the segment
/// duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub stroke_mm: f64,
    pub power_scale_w: f64,
}

impl Normalization {
    pub fn validate(&self) -> Result<()> {
        ensure(
            self.stroke_mm.is_finite()
                && self.stroke_mm > 0.0
                && self.power_scale_w.is_finite()
                && self.power_scale_w > 0.0,
            || Error::Configuration(format!("invalid normalization constants {self:?}")),
        )
    }
}

/// Network input for the trajectory `(D_i, D_f, τ)` observed over `duration`.
///
/// This is the single code path shared by dataset construction and request
/// encoding, so both see bit-identical features.
pub fn trajectory_features(
    d_init: f64,
    d_final: f64,
    tau: f64,
    duration: f64,
    norm: &Normalization,
) -> Vec<f64> {
    let last = (SAMPLE_POINTS - 1) as f64;
    let mut out = Vec::with_capacity(FEATURE_LEN);
    for k in 0..SAMPLE_POINTS {
        let s = k as f64 / last;
        let t = s * duration;
        let d = d_final + (d_init - d_final) * (-t / tau).exp();
        out.push(s);
        out.push(d / norm.stroke_mm);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// `FEATURE_LEN` values: `t_0, d_0, t_1, d_1, …` in normalized units.
    pub inputs: Vec<f64>,
    /// Held power, W.
    pub target_power: f64,
}

impl TrainingSample {
    pub fn time(&self, k: usize) -> f64 {
        self.inputs[2 * k]
    }

    pub fn displacement(&self, k: usize) -> f64 {
        self.inputs[2 * k + 1]
    }
}

/// Evaluates the denoised curve on the 100-point grid.
pub fn resample_segment(seg: &TrajectorySegment, norm: &Normalization) -> TrainingSample {
    TrainingSample {
        inputs: trajectory_features(seg.d_init, seg.d_final, seg.tau, seg.duration, norm),
        target_power: seg.power_label,
    }
}

/// Provenance recorded in the dataset file header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetHeader {
    pub fps: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub dt: f64,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<TrainingSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let h = &self.header;
        let mut out = String::with_capacity(64 + self.samples.len() * FEATURE_LEN * 20);
        out.push_str(DATASET_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "# fps = {}", h.fps);
        let _ = writeln!(out, "# noise_std = {}", h.noise_std);
        let _ = writeln!(out, "# seed = {}", h.seed);
        let _ = writeln!(out, "# dt = {}", h.dt);
        let _ = writeln!(out, "# stroke_mm = {}", h.normalization.stroke_mm);
        let _ = writeln!(out, "# power_scale_w = {}", h.normalization.power_scale_w);
        out.push_str(&column_header());
        out.push('\n');
        for s in &self.samples {
            let _ = write!(out, "{}", s.target_power);
            for v in &s.inputs {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == DATASET_MAGIC => {}
            _ => return Err(Error::Parse("dataset: missing or unknown format line".into())),
        }
        let mut meta = String::new();
        let mut header_seen = false;
        let mut samples = Vec::new();
        let columns = column_header();
        for (i, line) in lines {
            if !header_seen {
                if let Some(rest) = line.strip_prefix('#') {
                    meta.push_str(rest);
                    meta.push('\n');
                    continue;
                }
                ensure(line == columns, || {
                    Error::Parse(format!("dataset line {}: unexpected column header", i + 1))
                })?;
                header_seen = true;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let v = crate::format::parse_row(line, FEATURE_LEN + 1)
                .map_err(|e| Error::Parse(format!("dataset line {}: {e}", i + 1)))?;
            ensure(v.iter().all(|x| x.is_finite()), || {
                Error::Parse(format!("dataset line {}: non-finite value", i + 1))
            })?;
            samples.push(TrainingSample {
                target_power: v[0],
                inputs: v[1..].to_vec(),
            });
        }
        ensure(header_seen, || Error::Parse("dataset: missing column header".into()))?;
        let kv = KeyValues::parse(&meta)?;
        let header = DatasetHeader {
            fps: kv.require("fps")?,
            noise_std: kv.require("noise_std")?,
            seed: kv.require("seed")?,
            dt: kv.require("dt")?,
            normalization: Normalization {
                stroke_mm: kv.require("stroke_mm")?,
                power_scale_w: kv.require("power_scale_w")?,
            },
        };
        header.normalization.validate()?;
        Ok(Self { header, samples })
    }
}

fn column_header() -> String {
    let mut s = String::from("power_w");
    for k in 0..SAMPLE_POINTS {
        let _ = write!(s, ",t_{k},d_{k}");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub fps: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Integrator step of the twin, s.
    pub dt: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            noise_std: 0.1,
            seed: 0,
            dt: 0.01,
        }
    }
}

/// A fitted hold and where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentRecord {
    pub schedule: usize,
    pub index_in_schedule: usize,
    pub segment: TrajectorySegment,
}

/// Spread of the fitted time constants over non-degenerate holds.
#[derive(Debug, Clone, PartialEq)]
pub struct TauSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    /// 10 %, 20 %, …, 90 % quantiles (linear interpolation).
    pub deciles: Vec<f64>,
}

impl TauSummary {
    pub fn from_taus(taus: &[f64]) -> Self {
        let mut v: Vec<f64> = taus.to_vec();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            return Self {
                count: 0,
                min: f64::NAN,
                max: f64::NAN,
                deciles: vec![],
            };
        }
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            if i + 1 < v.len() {
                v[i] + frac * (v[i + 1] - v[i])
            } else {
                v[i]
            }
        };
        Self {
            count: v.len(),
            min: v[0],
            max: v[v.len() - 1],
            deciles: (1..10).map(|k| q(k as f64 / 10.0)).collect(),
        }
    }
}

/// Everything produced on the way to a dataset.
#[derive(Debug, Clone)]
pub struct DatasetBuild {
    pub dataset: Dataset,
    pub segments: Vec<SegmentRecord>,
    /// Camera footage, one per schedule.
    pub footage: Vec<RawTrajectory>,
    pub tau_summary: TauSummary,
}

impl DatasetBuild {
    pub fn tau_csv(&self) -> String {
        let mut out = String::from(TAU_CSV_HEADER);
        out.push('\n');
        for (i, r) in self.segments.iter().enumerate() {
            let s = &r.segment;
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{}",
                s.power_label, s.d_init, s.d_final, s.tau, s.residual_rms
            );
        }
        out
    }
}

/// Simulates, films, slices, fits and resamples every hold of every schedule.
///
/// Each schedule runs on a fresh twin starting at ambient. Camera noise for
/// schedule `s` is seeded with `split(seed, s)`. Fits run in parallel but the
/// output order is schedule order then segment order.
pub fn build_dataset(
    schedules: &[PowerSchedule],
    params: &ActuatorParams,
    config: &DatasetConfig,
) -> Result<DatasetBuild> {
    ensure(!schedules.is_empty(), || Error::InvalidInput("no schedules".into()))?;
    params.validate()?;
    let power_scale = schedules.iter().map(|s| s.max_power()).fold(0.0, f64::max);
    let normalization = Normalization {
        stroke_mm: params.full_stroke,
        power_scale_w: if power_scale > 0.0 { power_scale } else { 1.0 },
    };

    let mut footage = Vec::with_capacity(schedules.len());
    let mut slices = Vec::new();
    for (si, sched) in schedules.iter().enumerate() {
        let trace = simulate(params, sched, config.dt, &ActuatorState::at_ambient(params))?;
        let mut raw = sample_camera(&trace, config.fps, config.noise_std, seed::split(config.seed, si as u64))?;
        raw.source = sched.label.clone();
        for (k, (slice, power)) in segment(&raw, sched)?.into_iter().enumerate() {
            slices.push((si, k, slice, power));
        }
        footage.push(raw);
    }

    let segments: Vec<SegmentRecord> = slices
        .par_iter()
        .map(|(si, k, slice, power)| {
            fit_exponential(slice)
                .map(|fit| SegmentRecord {
                    schedule: *si,
                    index_in_schedule: *k,
                    segment: fit.labeled(*power),
                })
                .map_err(|e| Error::Segment {
                    schedule: *si,
                    segment: *k,
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;

    let samples = segments
        .iter()
        .map(|r| resample_segment(&r.segment, &normalization))
        .collect();
    let taus: Vec<f64> = segments
        .iter()
        .filter(|r| !r.segment.degenerate)
        .map(|r| r.segment.tau)
        .collect();

    Ok(DatasetBuild {
        dataset: Dataset {
            header: DatasetHeader {
                fps: config.fps,
                noise_std: config.noise_std,
                seed: config.seed,
                dt: config.dt,
                normalization,
            },
            samples,
        },
        segments,
        footage,
        tau_summary: TauSummary::from_taus(&taus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(d_init: f64, d_final: f64, tau: f64, duration: f64) -> TrajectorySegment {
        TrajectorySegment {
            d_init,
            d_final,
            tau,
            duration,
            power_label: 2.0,
            residual_rms: 0.0,
            degenerate: false,
        }
    }

    const NORM: Normalization = Normalization {
        stroke_mm: 20.0,
        power_scale_w: 4.0,
    };

    #[test]
    fn resampled_endpoints() {
        let s = seg(2.0, 12.0, 8.0, 30.0);
        let sample = resample_segment(&s, &NORM);
        assert_eq!(sample.inputs.len(), FEATURE_LEN);
        assert_eq!(sample.displacement(0), 2.0 / 20.0);
        let end = 12.0 + (2.0 - 12.0) * (-30.0_f64 / 8.0).exp();
        assert!((sample.displacement(99) - end / 20.0).abs() < 1e-15);
        assert_eq!(sample.time(0), 0.0);
        assert_eq!(sample.time(99), 1.0);
        for k in 0..SAMPLE_POINTS {
            assert_eq!(sample.time(k), k as f64 / 99.0);
        }
        assert_eq!(sample.target_power, 2.0);
    }

    #[test]
    fn flat_segment_resamples_flat() {
        let sample = resample_segment(&seg(5.0, 5.0, 3.0, 20.0), &NORM);
        assert!((0..SAMPLE_POINTS).all(|k| sample.displacement(k) == 0.25));
    }

    #[test]
    fn tau_summary_quantiles() {
        let taus: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let s = TauSummary::from_taus(&taus);
        assert_eq!(s.count, 11);
        assert_eq!((s.min, s.max), (0.0, 10.0));
        assert_eq!(s.deciles, (1..10).map(|k| k as f64).collect::<Vec<_>>());
    }

    #[test]
    fn dataset_csv_round_trip_and_corruption() {
        let ds = Dataset {
            header: DatasetHeader {
                fps: 30.0,
                noise_std: 0.1,
                seed: 3,
                dt: 0.01,
                normalization: NORM,
            },
            samples: vec![resample_segment(&seg(1.0, 9.0, 7.0, 20.0), &NORM)],
        };
        let csv = ds.to_csv();
        let back = Dataset::from_csv(&csv).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_csv(), csv);

        let truncated = csv.replacen(",d_99\n", ",d_99\n1,2,3\n", 1);
        assert!(matches!(Dataset::from_csv(&truncated), Err(Error::Parse(_))));
        assert!(matches!(Dataset::from_csv("garbage"), Err(Error::Parse(_))));
        let no_stroke = csv.replace("# stroke_mm = 20\n", "");
        assert!(Dataset::from_csv(&no_stroke).is_err());
    }
}
