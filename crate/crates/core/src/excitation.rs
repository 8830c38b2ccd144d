//! Constant-power excitation protocols.
//!
//! A [`PowerSchedule`] is a list of constant-power holds. The data-collection
//! protocol visits every unordered pair of levels on an evenly spaced grid in
//! both directions; the conditioning protocol alternates a low base power
//! with increasing amplitudes.

use std::fmt::Write as _;

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub power_w: f64,
    pub hold_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSchedule {
    segments: Vec<Segment>,
    pub label: String,
}

pub const SCHEDULE_CSV_HEADER: &str = "power_w,hold_s";

impl PowerSchedule {
    /// Builds a schedule from `(power, hold)` pairs.
    pub fn new(segments: Vec<(f64, f64)>, label: impl Into<String>) -> Result<Self> {
        ensure(!segments.is_empty(), || {
            Error::InvalidInput("a schedule needs at least one segment".into())
        })?;
        let segments = segments
            .into_iter()
            .map(|(power_w, hold_s)| {
                ensure(power_w.is_finite() && power_w >= 0.0, || {
                    Error::InvalidInput(format!("segment power {power_w} W must be >= 0"))
                })?;
                ensure(hold_s.is_finite() && hold_s > 0.0, || {
                    Error::InvalidInput(format!("segment hold {hold_s} s must be > 0"))
                })?;
                Ok(Segment { power_w, hold_s })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            segments,
            label: label.into(),
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.hold_s).sum()
    }

    /// Start time of each segment, plus the end of the last one.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        out.push(0.0);
        for s in &self.segments {
            t += s.hold_s;
            out.push(t);
        }
        out
    }

    /// Number of level changes between consecutive segments.
    pub fn transition_count(&self) -> usize {
        self.segments
            .windows(2)
            .filter(|w| w[0].power_w != w[1].power_w)
            .count()
    }

    pub fn max_power(&self) -> f64 {
        self.segments.iter().map(|s| s.power_w).fold(f64::MIN, f64::max)
    }

    pub fn min_power(&self) -> f64 {
        self.segments.iter().map(|s| s.power_w).fold(f64::MAX, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if !self.label.is_empty() {
            let _ = writeln!(out, "# label = {}", self.label);
        }
        out.push_str(SCHEDULE_CSV_HEADER);
        out.push('\n');
        for s in &self.segments {
            let _ = writeln!(out, "{},{}", s.power_w, s.hold_s);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut label = String::new();
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(l) = comment.trim().strip_prefix("label =") {
                    label = l.trim().to_string();
                }
                continue;
            }
            if !header_seen {
                ensure(line.trim() == SCHEDULE_CSV_HEADER, || {
                    Error::Parse(format!("schedule CSV: expected header, got {line:?}"))
                })?;
                header_seen = true;
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let v = crate::format::parse_row(line, 2)
                .map_err(|e| Error::Parse(format!("schedule CSV line {}: {e}", i + 1)))?;
            rows.push((v[0], v[1]));
        }
        ensure(header_seen, || Error::Parse("schedule CSV: missing header".into()))?;
        Self::new(rows, label)
    }
}

/// Inclusive arithmetic grid `min, min + step, …, max`.
pub fn power_levels(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    ensure(min.is_finite() && max.is_finite() && step.is_finite(), || {
        Error::InvalidGrid("grid bounds must be finite".into())
    })?;
    ensure(step > 0.0, || Error::InvalidGrid(format!("step {step} must be > 0")))?;
    ensure(min <= max, || Error::InvalidGrid(format!("min {min} exceeds max {max}")))?;
    ensure(min >= 0.0, || Error::InvalidGrid(format!("powers must be >= 0, min is {min}")))?;
    let span = (max - min) / step;
    let n = span.round();
    ensure((span - n).abs() <= 1e-9, || {
        Error::InvalidGrid(format!("({max} - {min}) / {step} = {span} is not an integer"))
    })?;
    Ok((0..=n as usize)
        .map(|k| clean(min + k as f64 * step))
        .collect())
}

/// Snaps accumulated rounding (0.4·3 = 1.2000000000000002) back to the
/// nearest value on a 10⁻¹² grid.
fn clean(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// All unordered index pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn transition_pairs(levels: &[f64]) -> Result<Vec<(usize, usize)>> {
    ensure(levels.len() >= 2, || {
        Error::InvalidInput(format!("need at least 2 levels, got {}", levels.len()))
    })?;
    let n = levels.len();
    Ok((0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect())
}

/// Levels, the pairs to visit and the hold durations to use.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPlan {
    pub levels: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub hold_variants: Vec<f64>,
}

impl TransitionPlan {
    pub fn new(levels: Vec<f64>, hold_variants: Vec<f64>) -> Result<Self> {
        let pairs = transition_pairs(&levels)?;
        let plan = Self {
            levels,
            pairs,
            hold_variants,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.levels.len() >= 2, || {
            Error::InvalidInput("a plan needs at least 2 levels".into())
        })?;
        ensure(
            self.levels.iter().all(|l| l.is_finite() && *l >= 0.0),
            || Error::InvalidInput("levels must be finite and >= 0".into()),
        )?;
        ensure(self.levels.windows(2).all(|w| w[0] < w[1]), || {
            Error::InvalidInput("levels must be strictly increasing".into())
        })?;
        ensure(!self.hold_variants.is_empty(), || {
            Error::InvalidInput("a plan needs at least one hold variant".into())
        })?;
        ensure(
            self.hold_variants.iter().all(|h| h.is_finite() && *h > 0.0),
            || Error::InvalidInput("hold variants must be > 0".into()),
        )?;
        let n = self.levels.len();
        ensure(
            self.pairs.len() == n * (n - 1) / 2
                && self.pairs.iter().all(|&(i, j)| i < j && j < n),
            || Error::InvalidInput("pairs must list every i < j exactly once".into()),
        )?;
        let mut seen = vec![false; n * n];
        for &(i, j) in &self.pairs {
            ensure(!seen[i * n + j], || {
                Error::InvalidInput(format!("pair ({i}, {j}) listed twice"))
            })?;
            seen[i * n + j] = true;
        }
        Ok(())
    }

    /// Level indices visited by every emitted schedule.
    ///
    /// Pairs are taken in order; for each `(i, j)` the sequence goes to level
    /// `j` and back to level `i`, so both the rising and the falling
    /// transition occur. The sequence starts and ends at the lowest level.
    pub fn visit_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = vec![0];
        for &(i, j) in &self.pairs {
            if *order.last().unwrap() != i {
                order.push(i);
            }
            order.push(j);
            order.push(i);
        }
        if *order.last().unwrap() != 0 {
            order.push(0);
        }
        order
    }
}

/// One schedule per hold variant, all visiting the same level sequence.
pub fn build_schedule(plan: &TransitionPlan) -> Result<Vec<PowerSchedule>> {
    plan.validate()?;
    let order = plan.visit_order();
    plan.hold_variants
        .iter()
        .map(|&hold| {
            PowerSchedule::new(
                order.iter().map(|&k| (plan.levels[k], hold)).collect(),
                format!("pairs_hold_{hold}s"),
            )
        })
        .collect()
}

/// Base power of the conditioning protocol, W.
pub const TRAINING_BASE_W: f64 = 0.1;
/// Hold of every conditioning segment, s.
pub const TRAINING_HOLD_S: f64 = 30.0;

/// Conditioning cycles for a fresh sample: a 0.1 W base alternating with
/// 1 W … 6 W amplitudes, 30 s each, starting and ending on the base.
pub fn training_protocol() -> PowerSchedule {
    let mut segs = vec![(TRAINING_BASE_W, TRAINING_HOLD_S)];
    for amp in 1..=6 {
        segs.push((amp as f64, TRAINING_HOLD_S));
        segs.push((TRAINING_BASE_W, TRAINING_HOLD_S));
    }
    PowerSchedule::new(segs, "conditioning").expect("static protocol is valid")
}
