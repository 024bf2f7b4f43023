//! Run configuration: a flat `[section]` / `key = value` text file with CLI
//! `--set section.key=value` overrides. Every command echoes the fully
//! resolved configuration next to its outputs so any artifact can be
//! reproduced from its sidecar alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use logsift_core::autoencoder::TrainHyper;
use logsift_core::ingest::TimestampFormat;
use logsift_core::recurrence::{PeakConfig, RecurrenceConfig};
use logsift_core::synth::{InjectionSpec, RecurringSpec, TransientSpec};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

type ConfigResult<T> = Result<T, ConfigError>;

#[derive(Clone, Debug)]
pub struct PathsConfig {
    pub train_log: PathBuf,
    pub test_log: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug)]
pub struct PcaConfig {
    pub variance_fraction: f64,
    pub threshold_percentile: f64,
}

#[derive(Clone, Debug)]
pub struct AeConfig {
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Optional "h1,h2,h3" encoder width override.
    pub hidden: Option<[usize; 3]>,
}

#[derive(Clone, Debug)]
pub enum WeightsConfig {
    Fit,
    Fixed(f64, f64),
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    pub healthy_seed: u64,
    pub start_epoch: i64,
    pub total_seconds: u64,
    pub base_rates: Vec<f64>,
    /// start/period/duration triples.
    pub recurring: Vec<(u64, u64, u64)>,
    /// start/duration pairs.
    pub transients: Vec<(u64, u64)>,
    pub noise_spikes: usize,
    pub multiplier: f64,
    pub error_rate: f64,
    pub transient_multiplier: f64,
    pub transient_error_rate: f64,
    pub noise_multiplier: f64,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub timestamp_format: TimestampFormat,
    pub pca: PcaConfig,
    pub ae: AeConfig,
    pub weights: WeightsConfig,
    pub recurrence: RecurrenceConfig,
    pub peak: PeakConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: PathsConfig {
                train_log: "out/train.log".into(),
                test_log: Some("out/test.log".into()),
                labels: Some("out/labels.csv".into()),
                output_dir: "out".into(),
            },
            timestamp_format: TimestampFormat::EpochFloat,
            pca: PcaConfig {
                variance_fraction: 0.95,
                threshold_percentile: 98.0,
            },
            ae: AeConfig {
                alpha: 1.0,
                beta: 0.5,
                epochs: 150,
                batch_size: 32,
                learning_rate: 0.01,
                seed: 7,
                hidden: None,
            },
            weights: WeightsConfig::Fit,
            recurrence: RecurrenceConfig::default(),
            peak: PeakConfig::default(),
            synth: SynthConfig {
                seed: 202,
                healthy_seed: 101,
                start_epoch: 1_700_000_000,
                total_seconds: 3600,
                base_rates: vec![5.0, 4.0, 3.0, 2.5, 2.0, 1.5],
                recurring: vec![(630, 675, 120)],
                transients: vec![(300, 8), (1580, 10), (2450, 15)],
                noise_spikes: 50,
                multiplier: 10.0,
                error_rate: 20.0,
                transient_multiplier: 10.0,
                transient_error_rate: 15.0,
                noise_multiplier: 15.0,
            },
        }
    }
}

impl RunConfig {
    /// Load from an optional file, then apply `--set section.key=value`
    /// overrides in order.
    pub fn resolve(file: Option<&Path>, sets: &[String]) -> ConfigResult<RunConfig> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            parse_ini(&text, &mut entries)?;
        }
        for set in sets {
            let (key, value) = set.split_once('=').ok_or_else(|| {
                ConfigError(format!("override {set:?} is not of the form section.key=value"))
            })?;
            if !key.contains('.') {
                return Err(ConfigError(format!(
                    "override key {key:?} must be section.key"
                )));
            }
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        RunConfig::from_entries(entries)
    }

    fn from_entries(mut entries: BTreeMap<String, String>) -> ConfigResult<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut take = |key: &str| entries.remove(key);

        if let Some(v) = take("paths.train_log") {
            cfg.paths.train_log = v.into();
        }
        if let Some(v) = take("paths.test_log") {
            cfg.paths.test_log = if v.is_empty() { None } else { Some(v.into()) };
        }
        if let Some(v) = take("paths.labels") {
            cfg.paths.labels = if v.is_empty() { None } else { Some(v.into()) };
        }
        if let Some(v) = take("paths.output_dir") {
            cfg.paths.output_dir = v.into();
        }
        if let Some(v) = take("ingest.timestamp_format") {
            cfg.timestamp_format = TimestampFormat::parse_name(&v)
                .map_err(|e| ConfigError(e.to_string()))?;
        }
        if let Some(v) = take("pca.variance_fraction") {
            cfg.pca.variance_fraction = num(&v, "pca.variance_fraction")?;
        }
        if let Some(v) = take("pca.threshold_percentile") {
            cfg.pca.threshold_percentile = num(&v, "pca.threshold_percentile")?;
        }
        if let Some(v) = take("ae.alpha") {
            cfg.ae.alpha = num(&v, "ae.alpha")?;
        }
        if let Some(v) = take("ae.beta") {
            cfg.ae.beta = num(&v, "ae.beta")?;
        }
        if let Some(v) = take("ae.epochs") {
            cfg.ae.epochs = num(&v, "ae.epochs")?;
        }
        if let Some(v) = take("ae.batch_size") {
            cfg.ae.batch_size = num(&v, "ae.batch_size")?;
        }
        if let Some(v) = take("ae.learning_rate") {
            cfg.ae.learning_rate = num(&v, "ae.learning_rate")?;
        }
        if let Some(v) = take("ae.seed") {
            cfg.ae.seed = num(&v, "ae.seed")?;
        }
        if let Some(v) = take("ae.hidden") {
            cfg.ae.hidden = if v.is_empty() {
                None
            } else {
                let widths = num_list(&v, "ae.hidden")?;
                if widths.len() != 3 {
                    return Err(ConfigError("ae.hidden needs exactly 3 widths".into()));
                }
                Some([widths[0] as usize, widths[1] as usize, widths[2] as usize])
            };
        }
        if let Some(v) = take("ensemble.weights") {
            cfg.weights = if v == "fit" {
                WeightsConfig::Fit
            } else {
                let parts = num_list(&v, "ensemble.weights")?;
                if parts.len() != 2 {
                    return Err(ConfigError(
                        "ensemble.weights must be \"fit\" or \"w_pca,w_ae\"".into(),
                    ));
                }
                WeightsConfig::Fixed(parts[0], parts[1])
            };
        }
        if let Some(v) = take("recurrence.coarse_window_s") {
            cfg.recurrence.coarse_window_s = num(&v, "recurrence.coarse_window_s")?;
        }
        if let Some(v) = take("recurrence.slide_s") {
            cfg.recurrence.slide_s = num(&v, "recurrence.slide_s")?;
        }
        if let Some(v) = take("recurrence.density_window_s") {
            cfg.recurrence.density_window_s = num(&v, "recurrence.density_window_s")?;
        }
        if let Some(v) = take("recurrence.density_threshold") {
            cfg.recurrence.density_threshold = num(&v, "recurrence.density_threshold")?;
        }
        if let Some(v) = take("recurrence.merge_gap_s") {
            cfg.recurrence.merge_gap_s = num(&v, "recurrence.merge_gap_s")?;
        }
        if let Some(v) = take("recurrence.min_duration_s") {
            cfg.recurrence.min_duration_s = num(&v, "recurrence.min_duration_s")?;
        }
        if let Some(v) = take("recurrence.lag") {
            cfg.peak.lag = num(&v, "recurrence.lag")?;
        }
        if let Some(v) = take("recurrence.z_threshold") {
            cfg.peak.z_threshold = num(&v, "recurrence.z_threshold")?;
        }
        if let Some(v) = take("recurrence.influence") {
            cfg.peak.influence = num(&v, "recurrence.influence")?;
        }
        if let Some(v) = take("synth.seed") {
            cfg.synth.seed = num(&v, "synth.seed")?;
        }
        if let Some(v) = take("synth.healthy_seed") {
            cfg.synth.healthy_seed = num(&v, "synth.healthy_seed")?;
        }
        if let Some(v) = take("synth.start_epoch") {
            cfg.synth.start_epoch = num(&v, "synth.start_epoch")?;
        }
        if let Some(v) = take("synth.total_seconds") {
            cfg.synth.total_seconds = num(&v, "synth.total_seconds")?;
        }
        if let Some(v) = take("synth.base_rates") {
            cfg.synth.base_rates = num_list(&v, "synth.base_rates")?;
        }
        if let Some(v) = take("synth.recurring") {
            cfg.synth.recurring = triple_list(&v, "synth.recurring")?;
        }
        if let Some(v) = take("synth.transients") {
            cfg.synth.transients = pair_list(&v, "synth.transients")?;
        }
        if let Some(v) = take("synth.noise_spikes") {
            cfg.synth.noise_spikes = num(&v, "synth.noise_spikes")?;
        }
        if let Some(v) = take("synth.multiplier") {
            cfg.synth.multiplier = num(&v, "synth.multiplier")?;
        }
        if let Some(v) = take("synth.error_rate") {
            cfg.synth.error_rate = num(&v, "synth.error_rate")?;
        }
        if let Some(v) = take("synth.transient_multiplier") {
            cfg.synth.transient_multiplier = num(&v, "synth.transient_multiplier")?;
        }
        if let Some(v) = take("synth.transient_error_rate") {
            cfg.synth.transient_error_rate = num(&v, "synth.transient_error_rate")?;
        }
        if let Some(v) = take("synth.noise_multiplier") {
            cfg.synth.noise_multiplier = num(&v, "synth.noise_multiplier")?;
        }

        if let Some((key, _)) = entries.into_iter().next() {
            return Err(ConfigError(format!("unknown config key {key:?}")));
        }
        Ok(cfg)
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.ae.epochs,
            batch_size: self.ae.batch_size,
            learning_rate: self.ae.learning_rate,
            seed: self.ae.seed,
            hidden: self.ae.hidden,
        }
    }

    pub fn injection_spec(&self) -> InjectionSpec {
        let s = &self.synth;
        InjectionSpec {
            total_seconds: s.total_seconds,
            start_epoch: s.start_epoch,
            base_rates: s.base_rates.clone(),
            recurring: s
                .recurring
                .iter()
                .map(|&(start_s, period_s, burst_s)| RecurringSpec {
                    start_s,
                    period_s,
                    burst_s,
                    rate_multiplier: s.multiplier,
                    error_rate: s.error_rate,
                })
                .collect(),
            transients: s
                .transients
                .iter()
                .map(|&(start_s, duration_s)| TransientSpec {
                    start_s,
                    duration_s,
                    rate_multiplier: s.transient_multiplier,
                    error_rate: s.transient_error_rate,
                })
                .collect(),
            noise_spikes: s.noise_spikes,
            noise_multiplier: s.noise_multiplier,
            min_duration_s: self.recurrence.min_duration_s,
            seed: s.seed,
        }
    }

    pub fn healthy_spec(&self) -> InjectionSpec {
        InjectionSpec::healthy(
            self.synth.total_seconds,
            self.synth.start_epoch - self.synth.total_seconds as i64 - 3600,
            self.synth.base_rates.clone(),
            self.synth.healthy_seed,
        )
    }

    /// Render the fully resolved configuration in the same file format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let path_str = |p: &PathBuf| p.display().to_string();
        writeln!(out, "[paths]").unwrap();
        writeln!(out, "train_log = {}", path_str(&self.paths.train_log)).unwrap();
        writeln!(
            out,
            "test_log = {}",
            self.paths.test_log.as_ref().map(path_str).unwrap_or_default()
        )
        .unwrap();
        writeln!(
            out,
            "labels = {}",
            self.paths.labels.as_ref().map(path_str).unwrap_or_default()
        )
        .unwrap();
        writeln!(out, "output_dir = {}", path_str(&self.paths.output_dir)).unwrap();
        writeln!(out, "\n[ingest]").unwrap();
        writeln!(out, "timestamp_format = {}", self.timestamp_format.name()).unwrap();
        writeln!(out, "\n[pca]").unwrap();
        writeln!(out, "variance_fraction = {}", self.pca.variance_fraction).unwrap();
        writeln!(out, "threshold_percentile = {}", self.pca.threshold_percentile).unwrap();
        writeln!(out, "\n[ae]").unwrap();
        writeln!(out, "alpha = {}", self.ae.alpha).unwrap();
        writeln!(out, "beta = {}", self.ae.beta).unwrap();
        writeln!(out, "epochs = {}", self.ae.epochs).unwrap();
        writeln!(out, "batch_size = {}", self.ae.batch_size).unwrap();
        writeln!(out, "learning_rate = {}", self.ae.learning_rate).unwrap();
        writeln!(out, "seed = {}", self.ae.seed).unwrap();
        writeln!(
            out,
            "hidden = {}",
            self.ae
                .hidden
                .map(|h| format!("{},{},{}", h[0], h[1], h[2]))
                .unwrap_or_default()
        )
        .unwrap();
        writeln!(out, "\n[ensemble]").unwrap();
        match self.weights {
            WeightsConfig::Fit => writeln!(out, "weights = fit").unwrap(),
            WeightsConfig::Fixed(p, a) => writeln!(out, "weights = {p},{a}").unwrap(),
        }
        writeln!(out, "\n[recurrence]").unwrap();
        writeln!(out, "coarse_window_s = {}", self.recurrence.coarse_window_s).unwrap();
        writeln!(out, "slide_s = {}", self.recurrence.slide_s).unwrap();
        writeln!(out, "density_window_s = {}", self.recurrence.density_window_s).unwrap();
        writeln!(out, "density_threshold = {}", self.recurrence.density_threshold).unwrap();
        writeln!(out, "merge_gap_s = {}", self.recurrence.merge_gap_s).unwrap();
        writeln!(out, "min_duration_s = {}", self.recurrence.min_duration_s).unwrap();
        writeln!(out, "lag = {}", self.peak.lag).unwrap();
        writeln!(out, "z_threshold = {}", self.peak.z_threshold).unwrap();
        writeln!(out, "influence = {}", self.peak.influence).unwrap();
        writeln!(out, "\n[synth]").unwrap();
        writeln!(out, "seed = {}", self.synth.seed).unwrap();
        writeln!(out, "healthy_seed = {}", self.synth.healthy_seed).unwrap();
        writeln!(out, "start_epoch = {}", self.synth.start_epoch).unwrap();
        writeln!(out, "total_seconds = {}", self.synth.total_seconds).unwrap();
        writeln!(
            out,
            "base_rates = {}",
            self.synth
                .base_rates
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
        .unwrap();
        writeln!(
            out,
            "recurring = {}",
            self.synth
                .recurring
                .iter()
                .map(|(a, p, d)| format!("{a}/{p}/{d}"))
                .collect::<Vec<_>>()
                .join(";")
        )
        .unwrap();
        writeln!(
            out,
            "transients = {}",
            self.synth
                .transients
                .iter()
                .map(|(a, d)| format!("{a}/{d}"))
                .collect::<Vec<_>>()
                .join(";")
        )
        .unwrap();
        writeln!(out, "noise_spikes = {}", self.synth.noise_spikes).unwrap();
        writeln!(out, "multiplier = {}", self.synth.multiplier).unwrap();
        writeln!(out, "error_rate = {}", self.synth.error_rate).unwrap();
        writeln!(out, "transient_multiplier = {}", self.synth.transient_multiplier).unwrap();
        writeln!(out, "transient_error_rate = {}", self.synth.transient_error_rate).unwrap();
        writeln!(out, "noise_multiplier = {}", self.synth.noise_multiplier).unwrap();
        out
    }
}

fn parse_ini(text: &str, entries: &mut BTreeMap<String, String>) -> ConfigResult<()> {
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError(format!("line {}: expected key = value, got {raw:?}", n + 1))
        })?;
        if section.is_empty() {
            return Err(ConfigError(format!(
                "line {}: key outside of any [section]",
                n + 1
            )));
        }
        entries.insert(
            format!("{section}.{}", key.trim()),
            value.trim().to_string(),
        );
    }
    Ok(())
}

fn num<T: std::str::FromStr>(v: &str, key: &str) -> ConfigResult<T> {
    v.parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse {v:?}")))
}

fn num_list(v: &str, key: &str) -> ConfigResult<Vec<f64>> {
    v.split(',')
        .map(|p| num(p.trim(), key))
        .collect()
}

fn triple_list(v: &str, key: &str) -> ConfigResult<Vec<(u64, u64, u64)>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(';')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split('/').collect();
            if parts.len() != 3 {
                return Err(ConfigError(format!(
                    "{key}: expected start/period/duration, got {item:?}"
                )));
            }
            Ok((num(parts[0], key)?, num(parts[1], key)?, num(parts[2], key)?))
        })
        .collect()
}

fn pair_list(v: &str, key: &str) -> ConfigResult<Vec<(u64, u64)>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(';')
        .map(|item| {
            let parts: Vec<&str> = item.trim().split('/').collect();
            if parts.len() != 2 {
                return Err(ConfigError(format!(
                    "{key}: expected start/duration, got {item:?}"
                )));
            }
            Ok((num(parts[0], key)?, num(parts[1], key)?))
        })
        .collect()
}
