//! The subcommands, each writing into an [`OutputDir`].

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thermal_muscle::controller::{
    control_episode, predict as ensemble_predict, train_ensemble, Ensemble, EnsemblePrediction,
    EpisodeReport, Member, TrajectoryRequest, BUNDLE_MANIFEST,
};
use thermal_muscle::nn::LOSS_CSV_HEADER;
use thermal_muscle::pipeline::{build_dataset, Dataset, DatasetBuild, TauSummary};
use thermal_muscle::seed;

use crate::config::{stream, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{read_text, sha256_hex, to_json_text, OutputDir};
use crate::svg::{Chart, Series, Style, PALETTE};

/// Longest polyline written to a plot; longer series are thinned evenly.
const PLOT_POINTS: usize = 2000;

fn join(prefix: &str, rel: &str) -> String {
    if prefix.is_empty() {
        rel.to_string()
    } else {
        format!("{prefix}/{rel}")
    }
}

fn thin(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let stride = xs.len().div_ceil(PLOT_POINTS).max(1);
    let mut idx: Vec<usize> = (0..xs.len()).step_by(stride).collect();
    if let Some(&last) = idx.last() {
        if last + 1 != xs.len() {
            idx.push(xs.len() - 1);
        }
    }
    (idx.iter().map(|&i| xs[i]).collect(), idx.iter().map(|&i| ys[i]).collect())
}

pub fn tau_summary_csv(s: &TauSummary) -> String {
    let mut out = String::from("count,min_s,p10_s,p20_s,p30_s,p40_s,p50_s,p60_s,p70_s,p80_s,p90_s,max_s\n");
    let _ = write!(out, "{},{}", s.count, s.min);
    for d in &s.deciles {
        let _ = write!(out, ",{d}");
    }
    let _ = writeln!(out, ",{}", s.max);
    out
}

/// Simulates the excitation schedules and writes the dataset with everything
/// that led to it under `prefix`.
pub fn write_dataset(out: &mut OutputDir, prefix: &str, cfg: &RunConfig) -> CliResult<DatasetBuild> {
    let params = cfg.params()?;
    let schedules = cfg.schedules()?;
    let build = build_dataset(&schedules, &params, &cfg.dataset_config()?)?;

    out.write(&join(prefix, "params.txt"), params.to_text())?;
    for (sched, raw) in schedules.iter().zip(&build.footage) {
        out.write(&join(prefix, &format!("schedules/{}.csv", sched.label)), sched.to_csv())?;
        out.write(&join(prefix, &format!("traces/{}.csv", sched.label)), raw.to_csv())?;
        let (xs, ys) = thin(&raw.times, &raw.displacements);
        let mut chart = Chart::new(
            &format!("Displacement response, {}", sched.label),
            "time (s)",
            "displacement (mm)",
        );
        chart.push(Series::new("camera", xs, ys, Style::Solid, PALETTE[0]));
        out.write(&join(prefix, &format!("plots/{}.svg", sched.label)), chart.to_svg())?;
    }
    out.write(&join(prefix, "dataset.csv"), build.dataset.to_csv())?;
    out.write(&join(prefix, "tau_segments.csv"), build.tau_csv())?;
    out.write(&join(prefix, "tau_summary.csv"), tau_summary_csv(&build.tau_summary))?;
    Ok(build)
}

pub fn gen_data(cfg: &RunConfig, out_dir: &Path) -> CliResult<DatasetBuild> {
    let mut out = OutputDir::create(out_dir)?;
    let build = write_dataset(&mut out, "", cfg)?;
    out.finish("gen-data", cfg)?;
    Ok(build)
}

pub fn member_loss_csv(m: &Member) -> String {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for (e, (t, v)) in m.train_loss.iter().zip(&m.val_loss).enumerate() {
        let _ = writeln!(out, "{e},{t},{v}");
    }
    out
}

/// Trains the ensemble on `dataset` and writes the bundle and loss histories.
pub fn write_bundle(
    out: &mut OutputDir,
    prefix: &str,
    cfg: &RunConfig,
    dataset: &Dataset,
    fingerprint: &str,
) -> CliResult<Ensemble> {
    let ens = train_ensemble(dataset, &cfg.ensemble_config()?, fingerprint)?;
    let bundle_rel = join(prefix, "bundle");
    ens.save(&out.path(&bundle_rel))?;
    out.track(&join(&bundle_rel, BUNDLE_MANIFEST))?;
    for k in 0..ens.members.len() {
        out.track(&join(&bundle_rel, &thermal_muscle::controller::member_file(k)))?;
    }
    let mut chart = Chart::new("Validation loss per member", "epoch", "log10 validation MSE");
    for (k, m) in ens.members.iter().enumerate() {
        out.write(&join(prefix, &format!("losses/member_{k:02}.csv")), member_loss_csv(m))?;
        let epochs: Vec<f64> = (0..m.val_loss.len()).map(|e| e as f64).collect();
        let logs: Vec<f64> = m.val_loss.iter().map(|v| v.max(1e-300).log10()).collect();
        let (xs, ys) = thin(&epochs, &logs);
        chart.push(Series::new(
            format!("member {k}"),
            xs,
            ys,
            Style::Solid,
            PALETTE[k % PALETTE.len()],
        ));
    }
    out.write(&join(prefix, "plots/losses.svg"), chart.to_svg())?;
    Ok(ens)
}

pub fn load_dataset(path: &Path) -> CliResult<(Dataset, String)> {
    let text = read_text(path)?;
    let dataset = Dataset::from_csv(&text)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((dataset, sha256_hex(text.as_bytes())))
}

pub fn train(cfg: &RunConfig, dataset_path: &Path, out_dir: &Path) -> CliResult<Ensemble> {
    let (dataset, fingerprint) = load_dataset(dataset_path)?;
    let mut out = OutputDir::create(out_dir)?;
    let ens = write_bundle(&mut out, "", cfg, &dataset, &fingerprint)?;
    out.finish("train", cfg)?;
    Ok(ens)
}

pub fn load_bundle(dir: &Path) -> CliResult<Ensemble> {
    Ensemble::load(dir).map_err(|e| match e {
        thermal_muscle::Error::Io(io) => CliError::Io(format!("{}: {io}", dir.display())),
        other => CliError::Io(format!("{}: {other}", dir.display())),
    })
}

/// Runs one prediction and measures its wall time.
pub fn timed_predict(ens: &Ensemble, req: &TrajectoryRequest) -> CliResult<(EnsemblePrediction, Duration)> {
    let start = Instant::now();
    let pred = ensemble_predict(ens, req)?;
    Ok((pred, start.elapsed()))
}

pub fn prediction_json(pred: &EnsemblePrediction) -> Value {
    json!({
        "mean_power_w": pred.mean_power,
        "std_power_w": pred.std_power,
        "member_powers_w": pred.member_powers,
        "extrapolated": pred.extrapolated,
    })
}

pub fn request_json(req: &TrajectoryRequest) -> Value {
    json!({
        "d_init_mm": req.d_init,
        "d_final_mm": req.d_final,
        "tau_s": req.tau,
        "duration_s": req.duration,
    })
}

pub fn extrapolation_warning(req: &TrajectoryRequest) -> String {
    format!(
        "warning: request {} mm -> {} mm lies outside the training envelope; the prediction is an extrapolation",
        req.d_init, req.d_final
    )
}

pub fn predict(bundle: &Path, req: &TrajectoryRequest) -> CliResult<(EnsemblePrediction, Duration)> {
    let ens = load_bundle(bundle)?;
    timed_predict(&ens, req)
}

pub fn episode_json(report: &EpisodeReport) -> Value {
    let repeats: Vec<Value> = report
        .repeats
        .iter()
        .map(|r| {
            json!({
                "ambient_temp_k": r.ambient_temp,
                "start_displacement_mm": r.start_displacement,
                "prep_drift_mm": r.prep_drift_mm,
                "rms_error_mm": r.rms_error,
                "rms_error_noise_free_mm": r.rms_error_noise_free,
            })
        })
        .collect();
    json!({
        "request": request_json(&report.request),
        "prediction": prediction_json(&report.prediction),
        "preparation": {
            "label": report.preparation.label,
            "power_w": report.preparation.final_power(),
            "hold_s": report.preparation.schedule.total_duration(),
        },
        "repeats": repeats,
        "rms_error_mm": report.rms_error,
        "spread_mm": report.spread,
        "mean_error_mm": report.mean_error,
        "spread_ratio": report.spread_ratio(),
    })
}

pub fn overlay_svg(report: &EpisodeReport) -> String {
    let first = &report.repeats[0];
    let mut chart = Chart::new("Desired and measured displacement", "time (s)", "displacement (mm)");
    chart.push(Series::new("desired", first.times.clone(), first.desired.clone(), Style::Solid, "#000000"));
    for (k, r) in report.repeats.iter().enumerate() {
        chart.push(Series::new(
            format!("measured {}", k + 1),
            r.times.clone(),
            r.measured.clone(),
            Style::Dashed,
            PALETTE[k % PALETTE.len()],
        ));
    }
    chart.to_svg()
}

pub fn members_svg(pred: &EnsemblePrediction) -> String {
    let n = pred.member_powers.len();
    let idx: Vec<f64> = (1..=n).map(|k| k as f64).collect();
    let ends = vec![1.0, n as f64];
    let mut chart = Chart::new("Member predictions", "member", "power (W)");
    chart.push(Series::new("members", idx, pred.member_powers.clone(), Style::Points, PALETTE[0]));
    chart.push(Series::new("mean", ends.clone(), vec![pred.mean_power; 2], Style::Solid, "#000000"));
    chart.push(Series::new(
        "mean + std",
        ends.clone(),
        vec![pred.mean_power + pred.std_power; 2],
        Style::Dashed,
        PALETTE[1],
    ));
    chart.push(Series::new(
        "mean - std",
        ends,
        vec![pred.mean_power - pred.std_power; 2],
        Style::Dashed,
        PALETTE[1],
    ));
    chart.to_svg()
}

pub fn mean_csv(report: &EpisodeReport) -> String {
    let first = &report.repeats[0];
    let mean = report.mean_measured();
    let mut out = String::from("time_s,desired_mm,mean_measured_mm\n");
    for ((t, d), m) in first.times.iter().zip(&first.desired).zip(&mean) {
        let _ = writeln!(out, "{t},{d},{m}");
    }
    out
}

/// Writes CSVs, plots and the JSON summary of one episode under `prefix`.
pub fn write_episode(out: &mut OutputDir, prefix: &str, report: &EpisodeReport) -> CliResult<()> {
    for (k, r) in report.repeats.iter().enumerate() {
        out.write(&join(prefix, &format!("repeat_{}.csv", k + 1)), r.to_csv())?;
    }
    out.write(&join(prefix, "mean.csv"), mean_csv(report))?;
    out.write(&join(prefix, "summary.json"), to_json_text(&episode_json(report)))?;
    out.write(&join(prefix, "overlay.svg"), overlay_svg(report))?;
    out.write(&join(prefix, "members.svg"), members_svg(&report.prediction))?;
    Ok(())
}

pub struct ControlRun {
    pub report: EpisodeReport,
    pub inference: Duration,
    pub summary: String,
}

pub fn control(cfg: &RunConfig, bundle: &Path, req: &TrajectoryRequest, out_dir: &Path) -> CliResult<ControlRun> {
    let ens = load_bundle(bundle)?;
    let params = cfg.params()?;
    let ep = cfg.episode_config(seed::split(cfg.require_seed()?, stream::EPISODE))?;
    let (_, inference) = timed_predict(&ens, req)?;
    let report = control_episode(&ens, &params, req, &ep)?;

    let mut out = OutputDir::create(out_dir)?;
    write_episode(&mut out, "", &report)?;
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "request: {} mm -> {} mm, tau {} s, duration {} s",
        req.d_init, req.d_final, req.tau, req.duration
    );
    let _ = writeln!(
        summary,
        "prediction: {:.4} W +- {:.4} W over {} members{}",
        report.prediction.mean_power,
        report.prediction.std_power,
        report.prediction.member_powers.len(),
        if report.prediction.extrapolated { " (extrapolated)" } else { "" }
    );
    let _ = writeln!(
        summary,
        "rms error {:.3} mm over {} repeats; spread {:.3} mm; mean error {:.3} mm; ratio {:.2}",
        report.rms_error,
        report.repeats.len(),
        report.spread,
        report.mean_error,
        report.spread_ratio()
    );
    let _ = writeln!(
        summary,
        "ensemble inference: {:.3} ms",
        inference.as_secs_f64() * 1e3
    );
    out.write_untracked("summary.txt", &summary)?;
    out.write_untracked(
        "timing.json",
        to_json_text(&json!({ "inference_ms": inference.as_secs_f64() * 1e3 })),
    )?;
    out.finish("control", cfg)?;
    Ok(ControlRun {
        report,
        inference,
        summary,
    })
}

/// Parses a CSV with a header row; lines starting with `#` are skipped.
pub fn read_columns(text: &str) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Io("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(CliError::Io(format!(
                "CSV row {}: expected {} fields, got {}",
                i + 1,
                header.len(),
                fields.len()
            )));
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            c.push(
                f.trim()
                    .parse()
                    .map_err(|_| CliError::Io(format!("CSV row {}: not a number: {f:?}", i + 1)))?,
            );
        }
    }
    Ok((header, cols))
}

/// Charts every column of a CSV against its first column.
pub fn plot(input: &Path, output: &Path, title: Option<&str>) -> CliResult<()> {
    let (header, cols) = read_columns(&read_text(input)?)?;
    if header.len() < 2 {
        return Err(CliError::Invalid(format!("{}: need at least 2 columns", input.display())));
    }
    let default_title = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut chart = Chart::new(title.unwrap_or(&default_title), &header[0], "value");
    for (k, (name, ys)) in header.iter().zip(&cols).skip(1).enumerate() {
        let (xs, ys) = thin(&cols[0], ys);
        chart.push(Series::new(name.clone(), xs, ys, Style::Solid, PALETTE[k % PALETTE.len()]));
    }
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| crate::output::io_err(parent, e))?;
        }
    }
    std::fs::write(output, chart.to_svg()).map_err(|e| crate::output::io_err(output, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_keeps_endpoints() {
        let xs: Vec<f64> = (0..10_001).map(|k| k as f64).collect();
        let (tx, ty) = thin(&xs, &xs);
        assert!(tx.len() <= PLOT_POINTS + 1);
        assert_eq!(tx[0], 0.0);
        assert_eq!(*tx.last().unwrap(), 10_000.0);
        assert_eq!(tx, ty);
        let (short, _) = thin(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(short, vec![1.0, 2.0]);
    }

    #[test]
    fn columns_are_parsed() {
        let (h, c) = read_columns("# comment\nt,a,b\n0,1,2\n1,3,4\n").unwrap();
        assert_eq!(h, vec!["t", "a", "b"]);
        assert_eq!(c[2], vec![2.0, 4.0]);
        assert!(matches!(read_columns("t,a\n0\n"), Err(CliError::Io(_))));
        assert!(matches!(read_columns("t,a\n0,x\n"), Err(CliError::Io(_))));
    }

    #[test]
    fn tau_summary_has_one_row() {
        let s = TauSummary::from_taus(&[1.0, 2.0, 3.0]);
        let csv = tau_summary_csv(&s);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 12);
    }
}
