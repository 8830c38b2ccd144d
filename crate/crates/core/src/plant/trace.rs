use std::fmt::Write as _;

use super::{readout_from, resistance, rk4_advance, ActuatorParams, ActuatorState, ElectricalReadout};
use crate::error::{ensure, Error, Result};
use crate::excitation::PowerSchedule;
use crate::format::sig9;

pub const TRACE_CSV_HEADER: &str = "time_s,power_w,temp_k,resistance_ohm,displacement_mm";

/// One integrator sample. `power_w` is the power applied from this instant on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time_s: f64,
    pub power_w: f64,
    pub temp_k: f64,
    pub resistance_ohm: f64,
    pub displacement_mm: f64,
}

impl TraceRecord {
    pub fn readout(&self) -> ElectricalReadout {
        readout_from(self.power_w, self.resistance_ohm)
    }
}

/// Uniformly spaced simulation output.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dt: f64,
    pub records: Vec<TraceRecord>,
    /// State after the last step, for chaining runs.
    pub final_state: ActuatorState,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.records.first().map_or(0.0, |r| r.time_s)
    }

    pub fn duration(&self) -> f64 {
        match (self.records.first(), self.records.last()) {
            (Some(a), Some(b)) => b.time_s - a.time_s,
            _ => 0.0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 80);
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                sig9(r.time_s),
                sig9(r.power_w),
                sig9(r.temp_k),
                sig9(r.resistance_ohm),
                sig9(r.displacement_mm)
            );
        }
        out
    }

    /// Parses the CSV export. The returned trace carries no final state
    /// beyond what the last record implies.
    pub fn records_from_csv(text: &str) -> Result<Vec<TraceRecord>> {
        let mut lines = text.lines();
        ensure(lines.next() == Some(TRACE_CSV_HEADER), || {
            Error::Parse("trace CSV: unexpected header".into())
        })?;
        lines
            .enumerate()
            .map(|(i, line)| {
                let v = crate::format::parse_row(line, 5)
                    .map_err(|e| Error::Parse(format!("trace CSV row {}: {e}", i + 1)))?;
                Ok(TraceRecord {
                    time_s: v[0],
                    power_w: v[1],
                    temp_k: v[2],
                    resistance_ohm: v[3],
                    displacement_mm: v[4],
                })
            })
            .collect()
    }
}

/// Number of `dt` steps in `hold`, provided `dt` divides it.
pub(crate) fn steps_in(hold: f64, dt: f64) -> Result<usize> {
    let steps = (hold / dt).round();
    ensure(steps >= 1.0 && (steps * dt - hold).abs() <= 1e-9, || {
        Error::InvalidInput(format!("dt = {dt} s does not divide the hold of {hold} s"))
    })?;
    Ok(steps as usize)
}

/// Drives the twin through every segment of `schedule`.
///
/// The trace has one record per integrator step plus the initial one, so a
/// schedule of total length `D` yields `D / dt + 1` records.
pub fn simulate(
    params: &ActuatorParams,
    schedule: &PowerSchedule,
    dt: f64,
    initial: &ActuatorState,
) -> Result<SimTrace> {
    params.validate()?;
    ensure(dt.is_finite() && dt > 0.0, || {
        Error::InvalidInput(format!("dt must be finite and > 0, got {dt}"))
    })?;
    initial.check_finite()?;
    let steps: Vec<usize> = schedule
        .segments()
        .iter()
        .map(|s| steps_in(s.hold_s, dt))
        .collect::<Result<_>>()?;
    let total: usize = steps.iter().sum();

    let t0 = initial.time_s;
    let mut records = Vec::with_capacity(total + 1);
    let mut state = *initial;
    let mut k = 0usize;
    let record = |state: &ActuatorState, power: f64| -> Result<TraceRecord> {
        Ok(TraceRecord {
            time_s: state.time_s,
            power_w: power,
            temp_k: state.temp,
            resistance_ohm: resistance(params, state.temp, state.displacement)?,
            displacement_mm: state.displacement,
        })
    };
    let at = |time_s: f64| move |e: Error| Error::AtTime { time_s, source: Box::new(e) };

    for (seg, &n) in schedule.segments().iter().zip(&steps) {
        for _ in 0..n {
            records.push(record(&state, seg.power_w).map_err(at(state.time_s))?);
            state = rk4_advance(params, &state, seg.power_w, dt).map_err(at(state.time_s))?;
            k += 1;
            state.time_s = t0 + k as f64 * dt;
        }
    }
    let last_power = schedule.segments().last().map_or(0.0, |s| s.power_w);
    records.push(record(&state, last_power).map_err(at(state.time_s))?);

    Ok(SimTrace {
        dt,
        records,
        final_state: state,
    })
}
