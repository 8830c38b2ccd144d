//! Run configuration: defaults, then a flat `key = value` file, then flags.

use std::path::{Path, PathBuf};

use thermal_muscle::controller::{EnsembleConfig, EpisodeConfig, PrepStrategy};
use thermal_muscle::excitation::{build_schedule, power_levels, PowerSchedule, TransitionPlan};
use thermal_muscle::kv::{format_f64_list, parse_f64_list, KeyValues};
use thermal_muscle::nn::TrainConfig;
use thermal_muscle::pipeline::DatasetConfig;
use thermal_muscle::plant::ActuatorParams;
use thermal_muscle::seed;

use crate::error::{CliError, CliResult};

/// Independent random streams derived from the master seed.
pub mod stream {
    pub const DATA: u64 = 0;
    pub const TRAIN: u64 = 1;
    pub const EPISODE: u64 = 2;
    pub const EVAL_FOOTAGE: u64 = 3;
    pub const EVAL_EPISODES: u64 = 4;
}

pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Twin parameter file; built-in defaults when absent.
    pub params_path: Option<PathBuf>,
    pub power_min: f64,
    pub power_max: f64,
    pub power_step: f64,
    pub holds: Vec<f64>,
    pub fps: f64,
    pub noise_std: f64,
    pub dt: f64,
    pub seed: Option<u64>,
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_decay: f64,
    pub val_fraction: f64,
    pub hidden: Vec<usize>,
    pub members: usize,
    pub lambda_mean: f64,
    pub lambda_std: f64,
    pub lambda_floor: f64,
    pub repeats: usize,
    pub ambient_jitter_k: f64,
    pub prep: PrepStrategy,
    pub settle_time_constants: f64,
    pub settle_tolerance_mm: f64,
    /// Fewest held-out requests the evaluation battery may run on.
    pub eval_min_requests: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let ens = EnsembleConfig::default();
        let ep = EpisodeConfig::default();
        let data = DatasetConfig::default();
        Self {
            params_path: None,
            power_min: 0.0,
            power_max: 4.0,
            power_step: 0.4,
            holds: vec![20.0, 30.0, 40.0],
            fps: data.fps,
            noise_std: data.noise_std,
            dt: data.dt,
            seed: None,
            epochs: train.epochs,
            lr_init: train.lr_init,
            lr_decay: train.lr_decay,
            val_fraction: train.val_fraction,
            hidden: train.hidden,
            members: ens.member_count,
            lambda_mean: ens.lambda_mean,
            lambda_std: ens.lambda_std,
            lambda_floor: ens.lambda_floor,
            repeats: ep.repeats,
            ambient_jitter_k: ep.ambient_jitter_k,
            prep: ep.prep,
            settle_time_constants: ep.settle_time_constants,
            settle_tolerance_mm: ep.settle_tolerance_mm,
            eval_min_requests: 20,
        }
    }
}

/// Every key accepted in config files and `--set` overrides.
pub const KEYS: &[&str] = &[
    "params",
    "power_min",
    "power_max",
    "power_step",
    "holds",
    "fps",
    "noise_std",
    "dt",
    "seed",
    "epochs",
    "lr_init",
    "lr_decay",
    "val_fraction",
    "hidden",
    "members",
    "lambda_mean",
    "lambda_std",
    "lambda_floor",
    "repeats",
    "ambient_jitter_k",
    "prep",
    "settle_time_constants",
    "settle_tolerance_mm",
    "eval_min_requests",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Invalid(format!("config key `{key}`: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "params" => {
                self.params_path = (!value.trim().is_empty()).then(|| PathBuf::from(value.trim()))
            }
            "power_min" => self.power_min = parse(key, value)?,
            "power_max" => self.power_max = parse(key, value)?,
            "power_step" => self.power_step = parse(key, value)?,
            "holds" => {
                self.holds = parse_f64_list(value)
                    .map_err(|e| CliError::Invalid(format!("config key `holds`: {e}")))?
            }
            "fps" => self.fps = parse(key, value)?,
            "noise_std" => self.noise_std = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "seed" => self.seed = Some(parse(key, value)?),
            "epochs" => self.epochs = parse(key, value)?,
            "lr_init" => self.lr_init = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "val_fraction" => self.val_fraction = parse(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "members" => self.members = parse(key, value)?,
            "lambda_mean" => self.lambda_mean = parse(key, value)?,
            "lambda_std" => self.lambda_std = parse(key, value)?,
            "lambda_floor" => self.lambda_floor = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "ambient_jitter_k" => self.ambient_jitter_k = parse(key, value)?,
            "prep" => {
                self.prep = value
                    .trim()
                    .parse()
                    .map_err(|e| CliError::Invalid(format!("config key `prep`: {e}")))?
            }
            "settle_time_constants" => self.settle_time_constants = parse(key, value)?,
            "settle_tolerance_mm" => self.settle_tolerance_mm = parse(key, value)?,
            "eval_min_requests" => self.eval_min_requests = parse(key, value)?,
            _ => return Err(CliError::Invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every entry of a config file.
    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let kv = KeyValues::parse(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for key in kv.keys() {
            self.set(key, kv.get(key).unwrap_or_default())?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set(
            "params",
            self.params_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        kv.set("power_min", self.power_min);
        kv.set("power_max", self.power_max);
        kv.set("power_step", self.power_step);
        kv.set("holds", format_f64_list(&self.holds));
        kv.set("fps", self.fps);
        kv.set("noise_std", self.noise_std);
        kv.set("dt", self.dt);
        kv.set("seed", self.seed.map(|s| s.to_string()).unwrap_or_default());
        kv.set("epochs", self.epochs);
        kv.set("lr_init", self.lr_init);
        kv.set("lr_decay", self.lr_decay);
        kv.set("val_fraction", self.val_fraction);
        kv.set(
            "hidden",
            self.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.set("members", self.members);
        kv.set("lambda_mean", self.lambda_mean);
        kv.set("lambda_std", self.lambda_std);
        kv.set("lambda_floor", self.lambda_floor);
        kv.set("repeats", self.repeats);
        kv.set("ambient_jitter_k", self.ambient_jitter_k);
        kv.set("prep", self.prep.name());
        kv.set("settle_time_constants", self.settle_time_constants);
        kv.set("settle_tolerance_mm", self.settle_tolerance_mm);
        kv.set("eval_min_requests", self.eval_min_requests);
        kv
    }

    /// Canonical text written as `config.txt` into every output directory.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# thermal-muscle run configuration\n");
        out.push_str(&self.to_key_values().to_text());
        out
    }

    pub fn require_seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| {
            CliError::Invalid("a seed is required: pass --seed N or set `seed` in the config file".into())
        })
    }

    pub fn params(&self) -> CliResult<ActuatorParams> {
        let params = match &self.params_path {
            None => ActuatorParams::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                ActuatorParams::from_text(&text)?
            }
        };
        params.validate()?;
        Ok(params)
    }

    pub fn levels(&self) -> CliResult<Vec<f64>> {
        Ok(power_levels(self.power_min, self.power_max, self.power_step)?)
    }

    pub fn plan(&self) -> CliResult<TransitionPlan> {
        Ok(TransitionPlan::new(self.levels()?, self.holds.clone())?)
    }

    pub fn schedules(&self) -> CliResult<Vec<PowerSchedule>> {
        Ok(build_schedule(&self.plan()?)?)
    }

    pub fn dataset_config(&self) -> CliResult<DatasetConfig> {
        Ok(DatasetConfig {
            fps: self.fps,
            noise_std: self.noise_std,
            seed: seed::split(self.require_seed()?, stream::DATA),
            dt: self.dt,
        })
    }

    pub fn ensemble_config(&self) -> CliResult<EnsembleConfig> {
        let cfg = EnsembleConfig {
            member_count: self.members,
            lambda_mean: self.lambda_mean,
            lambda_std: self.lambda_std,
            lambda_floor: self.lambda_floor,
            train: TrainConfig {
                epochs: self.epochs,
                lr_init: self.lr_init,
                lr_decay: self.lr_decay,
                val_fraction: self.val_fraction,
                hidden: self.hidden.clone(),
                ..TrainConfig::default()
            },
            master_seed: seed::split(self.require_seed()?, stream::TRAIN),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Episode settings; `stream_seed` selects the noise and jitter streams.
    pub fn episode_config(&self, stream_seed: u64) -> CliResult<EpisodeConfig> {
        let cfg = EpisodeConfig {
            repeats: self.repeats,
            fps: self.fps,
            noise_std: self.noise_std,
            dt: self.dt,
            seed: stream_seed,
            ambient_jitter_k: self.ambient_jitter_k,
            prep: self.prep,
            settle_time_constants: self.settle_time_constants,
            settle_tolerance_mm: self.settle_tolerance_mm,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
