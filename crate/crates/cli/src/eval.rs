//! The full acceptance run: data, training, a held-out control battery and
//! every criterion that a single run can decide.

use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};
use thermal_muscle::controller::{control_episode, predict, Ensemble, TrajectoryRequest};
use thermal_muscle::excitation::PowerSchedule;
use thermal_muscle::pipeline::{fit_exponential, sample_camera, segment};
use thermal_muscle::plant::{simulate, ActuatorParams, ActuatorState};
use thermal_muscle::seed;

use crate::checks::{self, Check, Criterion};
use crate::commands::{load_dataset, request_json, write_bundle, write_dataset, write_episode};
use crate::config::{stream, RunConfig};
use crate::error::CliResult;
use crate::output::{to_json_text, OutputDir, MANIFEST_FILE};

pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";

/// Margin kept from either end of the stroke for battery start points, mm.
const START_MARGIN_MM: f64 = 0.5;
/// Largest RMS tracking error counted as a success, as a fraction of stroke.
const RMS_FRACTION: f64 = 0.05;
const RATIO_LIMIT: f64 = 3.0;
const REQUIRED_FRACTION: f64 = 0.8;
/// Budget for training plus the battery, s.
const RUNTIME_BUDGET_S: f64 = 900.0;

/// A held-out request: hold `power_from` until settled, then step to `power_to`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryRequest {
    pub power_from: f64,
    pub power_to: f64,
    pub request: TrajectoryRequest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryResult {
    pub case: BatteryRequest,
    pub predicted_power: f64,
    pub predicted_std: f64,
    pub rms_error: f64,
    pub spread: f64,
    pub mean_error: f64,
    pub ratio: f64,
}

impl BatteryResult {
    pub fn rms_ok(&self, stroke: f64) -> bool {
        self.rms_error <= RMS_FRACTION * stroke
    }

    pub fn ratio_ok(&self) -> bool {
        self.ratio < RATIO_LIMIT
    }
}

/// Builds held-out requests by filming the twin on settle-then-step
/// schedules it never ran during data generation, and fitting the step.
///
/// For every ordered pair of grid levels the twin is held at the first level
/// from ambient until settled, then switched to the second; the hold after
/// the switch takes the durations in turn. Flat steps, steps starting within
/// `START_MARGIN_MM` of either end of the stroke, fits whose end points leave
/// the stroke, and requests outside the training envelope are dropped.
pub fn battery_requests(cfg: &RunConfig, params: &ActuatorParams, ens: &Ensemble) -> CliResult<Vec<BatteryRequest>> {
    let levels = cfg.levels()?;
    let footage_seed = seed::split(cfg.require_seed()?, stream::EVAL_FOOTAGE);
    let settle = (cfg.settle_time_constants * params.thermal_time_constant()).ceil();
    let stroke = params.full_stroke;
    let n = levels.len();
    let mut out = Vec::new();
    for (ia, &pa) in levels.iter().enumerate() {
        for (ib, &pb) in levels.iter().enumerate() {
            if ia == ib {
                continue;
            }
            let duration = cfg.holds[(ia * 7 + ib) % cfg.holds.len()];
            let sched = PowerSchedule::new(vec![(pa, settle), (pb, duration)], "battery")?;
            let trace = simulate(params, &sched, cfg.dt, &ActuatorState::at_ambient(params))?;
            let raw = sample_camera(&trace, cfg.fps, cfg.noise_std, seed::split(footage_seed, (ia * n + ib) as u64))?;
            let slices = segment(&raw, &sched)?;
            let fit = fit_exponential(&slices[1].0)?;
            if fit.degenerate
                || !(START_MARGIN_MM..=stroke - START_MARGIN_MM).contains(&fit.d_init)
                || !(0.0..=stroke).contains(&fit.d_final)
            {
                continue;
            }
            let request = TrajectoryRequest {
                d_init: fit.d_init,
                d_final: fit.d_final,
                tau: fit.tau,
                duration,
            };
            if predict(ens, &request)?.extrapolated {
                continue;
            }
            out.push(BatteryRequest {
                power_from: pa,
                power_to: pb,
                request,
            });
        }
    }
    Ok(out)
}

/// Runs every battery request; request `k` draws its noise and ambient
/// jitter from its own stream.
pub fn run_battery(
    cfg: &RunConfig,
    params: &ActuatorParams,
    ens: &Ensemble,
    cases: &[BatteryRequest],
    out: &mut OutputDir,
    prefix: &str,
) -> CliResult<Vec<BatteryResult>> {
    let episode_seed = seed::split(cfg.require_seed()?, stream::EVAL_EPISODES);
    let mut results = Vec::with_capacity(cases.len());
    for (k, case) in cases.iter().enumerate() {
        let ep = cfg.episode_config(seed::split(episode_seed, k as u64))?;
        let report = control_episode(ens, params, &case.request, &ep)?;
        write_episode(out, &format!("{prefix}/request_{k:02}"), &report)?;
        results.push(BatteryResult {
            case: case.clone(),
            predicted_power: report.prediction.mean_power,
            predicted_std: report.prediction.std_power,
            rms_error: report.rms_error,
            spread: report.spread,
            mean_error: report.mean_error,
            ratio: report.spread_ratio(),
        });
    }
    Ok(results)
}

pub fn controller_accuracy(
    cfg: &RunConfig,
    results: &[BatteryResult],
    stroke: f64,
    runtime_s: f64,
) -> Criterion {
    let n = results.len();
    let frac = |ok: usize| if n > 0 { ok as f64 / n as f64 } else { 0.0 };
    let rms_ok = results.iter().filter(|r| r.rms_ok(stroke)).count();
    let ratio_ok = results.iter().filter(|r| r.ratio_ok()).count();
    Criterion::new(
        7,
        "controller accuracy",
        vec![
            Check::at_least("held-out requests", n as f64, cfg.eval_min_requests.max(20) as f64),
            Check::at_least("fraction with RMS <= 5% of stroke", frac(rms_ok), REQUIRED_FRACTION),
            Check::at_least("fraction with mean error / spread < 3", frac(ratio_ok), REQUIRED_FRACTION),
            Check::at_most("train + battery runtime s", runtime_s, RUNTIME_BUDGET_S).timed(),
        ],
    )
}

fn battery_json(results: &[BatteryResult], stroke: f64) -> Value {
    Value::Array(
        results
            .iter()
            .enumerate()
            .map(|(k, r)| {
                json!({
                    "index": k,
                    "power_from_w": r.case.power_from,
                    "power_to_w": r.case.power_to,
                    "request": request_json(&r.case.request),
                    "predicted_power_w": r.predicted_power,
                    "predicted_std_w": r.predicted_std,
                    "rms_error_mm": r.rms_error,
                    "spread_mm": r.spread,
                    "mean_error_mm": r.mean_error,
                    "spread_ratio": r.ratio,
                    "rms_ok": r.rms_ok(stroke),
                    "ratio_ok": r.ratio_ok(),
                })
            })
            .collect(),
    )
}

/// Outcome of one evaluation run.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// Criteria decided by this run, in order; determinism needs a second run.
    pub criteria: Vec<Criterion>,
    pub battery: Vec<BatteryResult>,
    pub dataset_checksum: String,
    pub bundle_checksum: String,
    pub report_checksum: String,
}

impl EvalOutcome {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(Criterion::passed)
    }

    pub fn criterion(&self, id: u32) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.id == id)
    }

    /// Metric table printed after a run.
    pub fn table(&self, stroke: f64) -> String {
        let mut out = String::new();
        out.push_str("  #   P_a->P_b      D_i     D_f     tau   dur   P_pred    rms  spread  ratio\n");
        for (k, r) in self.battery.iter().enumerate() {
            let q = &r.case.request;
            out.push_str(&format!(
                "{:>3} {:>4.1}->{:<4.1} {:>7.2} {:>7.2} {:>7.2} {:>5.0} {:>8.3} {:>6.3}{} {:>6.3} {:>6.2}{}\n",
                k,
                r.case.power_from,
                r.case.power_to,
                q.d_init,
                q.d_final,
                q.tau,
                q.duration,
                r.predicted_power,
                r.rms_error,
                if r.rms_ok(stroke) { " " } else { "*" },
                r.spread,
                r.ratio,
                if r.ratio_ok() { " " } else { "*" },
            ));
        }
        for c in &self.criteria {
            out.push_str(&c.line());
            out.push('\n');
        }
        out
    }
}

/// Runs gen-data, train, the battery and the criteria into `out_dir`.
///
/// With `dataset` given, that file replaces data generation.
pub fn eval(cfg: &RunConfig, out_dir: &Path, dataset: Option<&Path>) -> CliResult<EvalOutcome> {
    let seed_value = cfg.require_seed()?;
    let params = cfg.params()?;
    let plan = cfg.plan()?;
    let schedules = cfg.schedules()?;
    let mut out = OutputDir::create(out_dir)?;

    let (data, fingerprint, build) = match dataset {
        Some(path) => {
            let (data, fingerprint) = load_dataset(path)?;
            (data, fingerprint, None)
        }
        None => {
            let build = write_dataset(&mut out, "data", cfg)?;
            let fingerprint = out.checksum("data/dataset.csv").unwrap_or_default().to_string();
            (build.dataset.clone(), fingerprint, Some(build))
        }
    };

    let mut criteria = vec![
        checks::gradient_oracle(24, seed::split(seed_value, 101))?,
        checks::ode_order()?,
        checks::steady_state(&params)?,
    ];
    if let Some(build) = &build {
        criteria.push(checks::fit_recovery(build, &schedules, seed::split(seed_value, 102))?);
    }
    criteria.push(checks::hysteresis_loop(&params)?);
    if let Some(build) = &build {
        criteria.push(checks::dataset_scale(&plan, &schedules, build));
    }

    let start = Instant::now();
    let ens = write_bundle(&mut out, "", cfg, &data, &fingerprint)?;
    let cases = battery_requests(cfg, &params, &ens)?;
    let battery = run_battery(cfg, &params, &ens, &cases, &mut out, "battery")?;
    let runtime = start.elapsed().as_secs_f64();
    let stroke = params.full_stroke;
    criteria.push(controller_accuracy(cfg, &battery, stroke, runtime));

    let probe = cases.first().map(|c| c.request).unwrap_or(TrajectoryRequest {
        d_init: 5.0,
        d_final: 12.0,
        tau: 8.0,
        duration: 30.0,
    });
    criteria.push(checks::inference_latency(&ens, &probe, 200)?);

    let contract_tau = build
        .as_ref()
        .and_then(|b| b.tau_summary.deciles.get(4).copied())
        .unwrap_or_else(|| params.thermal_time_constant());
    let requests: Vec<TrajectoryRequest> = cases.iter().map(|c| c.request).collect();
    let (contract, pairs) = checks::ensemble_contract(&ens, &requests, contract_tau)?;
    criteria.push(contract);
    criteria.sort_by_key(|c| c.id);

    let criteria_json: Vec<Value> = criteria
        .iter()
        .map(|c| {
            let deterministic: Vec<&Check> = c.checks.iter().filter(|k| !k.timing).collect();
            json!({
                "id": c.id,
                "title": c.title,
                "passed": deterministic.iter().all(|k| k.passed),
                "checks": deterministic.iter().map(|k| k.to_json()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let report = json!({
        "seed": seed_value,
        "members": ens.members.len(),
        "criteria": criteria_json,
        "determinism": "decided by comparing the checksums of two runs",
        "held_out_requests": battery_json(&battery, stroke),
        "hysteresis_pairs": pairs,
    });
    out.write(REPORT_FILE, to_json_text(&report))?;

    let timing: Vec<Value> = criteria
        .iter()
        .flat_map(|c| {
            c.checks
                .iter()
                .filter(|k| k.timing)
                .map(move |k| json!({ "criterion": c.id, "check": k.name, "value": k.value, "limit": k.limit, "passed": k.passed }))
        })
        .collect();
    out.write_untracked(TIMING_FILE, to_json_text(&Value::Array(timing)))?;

    let dataset_checksum = fingerprint;
    let bundle_checksum = out.checksum("bundle/bundle.txt").unwrap_or_default().to_string();
    let report_checksum = out.checksum(REPORT_FILE).unwrap_or_default().to_string();
    let summary: String = criteria.iter().map(|c| c.line() + "\n").collect();
    out.write_untracked("summary.txt", &summary)?;
    out.finish("eval", cfg)?;
    debug_assert!(out_dir.join(MANIFEST_FILE).exists());

    Ok(EvalOutcome {
        criteria,
        battery,
        dataset_checksum,
        bundle_checksum,
        report_checksum,
    })
}
