//! The six pipeline commands. Each one reads its upstream artifacts from the
//! output directory, writes its own, and echoes the resolved configuration.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use logsift_core::autoencoder::{train, AutoencoderModel, LossParams};
use logsift_core::ensemble::{
    ensemble_score, fit_weights, AnomalyTimeline, EnsembleWeights, NormParams, SourceTag,
};
use logsift_core::eval::{evaluate, render_table, EvalReport};
use logsift_core::ingest::{
    parse_log_file, window_counts, ParseReport, TemplateCatalog, WindowMatrix,
};
use logsift_core::pca::PcaModel;
use logsift_core::recurrence::{read_regions_csv, run_recurrence, write_regions_csv};
use logsift_core::score::{calibrate_threshold, ScoreSeries};
use logsift_core::synth::{generate, GroundTruth};
use logsift_core::Error as CoreError;

use crate::config::{RunConfig, WeightsConfig};

pub enum CliError {
    Usage(String),
    Data(String),
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Divergence(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Divergence(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::Divergence { .. } => CliError::Divergence(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(err: crate::config::ConfigError) -> Self {
        CliError::Usage(err.to_string())
    }
}

type CmdResult = Result<(), CliError>;

struct Artifacts {
    dir: PathBuf,
}

impl Artifacts {
    fn new(cfg: &RunConfig) -> Artifacts {
        Artifacts {
            dir: cfg.paths.output_dir.clone(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn catalog(&self) -> PathBuf {
        self.path("catalog.tsv")
    }

    fn train_windows(&self) -> PathBuf {
        self.path("train_windows.csv")
    }

    fn test_windows(&self) -> PathBuf {
        self.path("test_windows.csv")
    }

    fn pca_model(&self) -> PathBuf {
        self.path("pca_model.txt")
    }

    fn ae_model(&self) -> PathBuf {
        self.path("ae_model.txt")
    }

    fn calibration(&self) -> PathBuf {
        self.path("calibration.json")
    }

    fn timeline(&self, source: SourceTag) -> PathBuf {
        self.path(&format!("timeline_{}.csv", source.name()))
    }

    fn regions(&self) -> PathBuf {
        self.path("regions.csv")
    }

    /// Fail with a message naming the missing stage.
    fn require(&self, path: &Path, what: &str, command: &str) -> Result<(), CliError> {
        if path.exists() {
            Ok(())
        } else {
            Err(CliError::Data(format!(
                "missing {what}: {} (run `logsift {command}` first)",
                path.display()
            )))
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn echo_config(cfg: &RunConfig) -> CmdResult {
    ensure_dir(&cfg.paths.output_dir)?;
    write_text(&cfg.paths.output_dir.join("resolved.cfg"), &cfg.render())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize {}: {e}", path.display())))?;
    write_text(path, &text)
}

/// Thresholds, normalization statistics and ensemble weights fixed at train
/// time so detection runs are reproducible from artifacts alone.
#[derive(serde::Serialize, serde::Deserialize)]
struct Calibration {
    threshold_percentile: f64,
    holdout_rows: usize,
    pca_threshold: f64,
    ae_threshold: f64,
    pca_norm: NormParams,
    ae_norm: NormParams,
    weights: EnsembleWeights,
    fused_threshold: f64,
    alpha: f64,
    beta: f64,
}

pub fn cmd_synth(cfg: &RunConfig) -> CmdResult {
    echo_config(cfg)?;
    let healthy = cfg.healthy_spec();
    let injected = cfg.injection_spec();
    let (train_text, _) = generate(&healthy)?;
    let (test_text, truth) = generate(&injected)?;
    write_text(&cfg.paths.train_log, &train_text)?;
    println!(
        "wrote {} ({} lines, healthy)",
        cfg.paths.train_log.display(),
        train_text.lines().count()
    );
    let test_path = cfg
        .paths
        .test_log
        .as_ref()
        .ok_or_else(|| CliError::Usage("synth needs paths.test_log".into()))?;
    write_text(test_path, &test_text)?;
    println!(
        "wrote {} ({} lines, {} recurring / {} transient / {} noise seconds)",
        test_path.display(),
        test_text.lines().count(),
        truth.true_anomaly_seconds.len(),
        truth.transient_seconds.len(),
        truth.noise_seconds.len()
    );
    let labels_path = cfg
        .paths
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Usage("synth needs paths.labels".into()))?;
    let mut buf = Vec::new();
    truth
        .write_csv(&mut buf)
        .map_err(|e| CliError::Data(format!("cannot render labels: {e}")))?;
    write_text(labels_path, &String::from_utf8_lossy(&buf))?;
    println!("wrote {}", labels_path.display());
    Ok(())
}

pub fn cmd_parse(cfg: &RunConfig) -> CmdResult {
    echo_config(cfg)?;
    let art = Artifacts::new(cfg);
    if !cfg.paths.train_log.exists() {
        return Err(CliError::Data(format!(
            "missing train log: {}",
            cfg.paths.train_log.display()
        )));
    }

    let train_parsed = parse_log_file(&cfg.paths.train_log, cfg.timestamp_format)?;
    let test_parsed = match &cfg.paths.test_log {
        Some(path) if path != &cfg.paths.train_log => {
            if !path.exists() {
                return Err(CliError::Data(format!(
                    "missing test log: {}",
                    path.display()
                )));
            }
            Some(parse_log_file(path, cfg.timestamp_format)?)
        }
        _ => None,
    };

    // one catalog across both corpora: templates unseen during training
    // become zero-count training columns
    let mut catalog = TemplateCatalog::new();
    for ev in train_parsed
        .events
        .iter()
        .chain(test_parsed.iter().flat_map(|p| p.events.iter()))
    {
        catalog.templatize(&ev.message)?;
    }
    let train_matrix = window_counts(&train_parsed.events, &mut catalog)?;
    let test_matrix = match &test_parsed {
        Some(parsed) => window_counts(&parsed.events, &mut catalog)?,
        None => train_matrix.clone(),
    };

    catalog.save(&art.catalog())?;
    train_matrix.save(&art.train_windows())?;
    test_matrix.save(&art.test_windows())?;

    #[derive(serde::Serialize)]
    struct Reports<'a> {
        train: &'a ParseReport,
        test: Option<&'a ParseReport>,
        templates: usize,
    }
    write_json(
        &art.path("parse_report.json"),
        &Reports {
            train: &train_parsed.report,
            test: test_parsed.as_ref().map(|p| &p.report),
            templates: catalog.len(),
        },
    )?;
    println!(
        "parsed {} train / {} test events into {} templates ({} skipped lines)",
        train_parsed.events.len(),
        test_parsed.as_ref().map(|p| p.events.len()).unwrap_or(0),
        catalog.len(),
        train_parsed.report.skipped
            + test_parsed.as_ref().map(|p| p.report.skipped).unwrap_or(0)
    );
    println!(
        "wrote {}, {}, {}",
        art.catalog().display(),
        art.train_windows().display(),
        art.test_windows().display()
    );
    Ok(())
}

fn load_matrix(path: &Path) -> Result<WindowMatrix, CliError> {
    let f = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(WindowMatrix::read_csv(BufReader::new(f))?)
}

pub fn cmd_train(cfg: &RunConfig) -> CmdResult {
    echo_config(cfg)?;
    let art = Artifacts::new(cfg);
    art.require(&art.train_windows(), "training window matrix", "parse")?;

    let matrix = load_matrix(&art.train_windows())?;
    if matrix.rows() < 10 {
        return Err(CliError::Data(format!(
            "training matrix has only {} rows",
            matrix.rows()
        )));
    }
    let split = matrix.rows() * 4 / 5;
    let fit_part = matrix.slice_rows(0, split);
    let holdout = matrix.slice_rows(split, matrix.rows());

    let pca = PcaModel::fit(&fit_part, cfg.pca.variance_fraction)?;
    let params = LossParams::new(cfg.ae.alpha, cfg.ae.beta)?;
    let (ae, report) = train(&fit_part, &pca, &params, &cfg.train_hyper())?;

    let pct = cfg.pca.threshold_percentile;
    let pca_hold = pca.score(&holdout)?;
    let ae_mse_hold = ae.score(&holdout)?;
    let ae_custom_hold = ae.score_custom(&pca, &params, &holdout)?;

    let pca_threshold = calibrate_threshold(&pca_hold.scores, pct)?;
    let ae_threshold = calibrate_threshold(&ae_mse_hold.scores, pct)?;
    let pca_norm = NormParams::fit(&pca_hold.scores)?;
    let ae_norm = NormParams::fit(&ae_custom_hold.scores)?;

    let weights = match cfg.weights {
        WeightsConfig::Fixed(p, a) => EnsembleWeights::new(p, a)?,
        WeightsConfig::Fit => fit_weights(
            &pca_norm.apply_all(&pca_hold.scores),
            &ae_norm.apply_all(&ae_custom_hold.scores),
        )?,
    };
    let fused_hold: Vec<f64> = pca_norm
        .apply_all(&pca_hold.scores)
        .iter()
        .zip(ae_norm.apply_all(&ae_custom_hold.scores))
        .map(|(&p, a)| weights.w_pca * p + weights.w_ae * a)
        .collect();
    let fused_threshold = calibrate_threshold(&fused_hold, pct)?;

    pca.save(&art.pca_model())?;
    ae.save(&art.ae_model())?;
    write_json(
        &art.calibration(),
        &Calibration {
            threshold_percentile: pct,
            holdout_rows: holdout.rows(),
            pca_threshold,
            ae_threshold,
            pca_norm,
            ae_norm,
            weights,
            fused_threshold,
            alpha: params.alpha,
            beta: params.beta,
        },
    )?;
    #[derive(serde::Serialize)]
    struct TrainSummary<'a> {
        templates: usize,
        pca_components: usize,
        pca_degenerate: bool,
        autoencoder: &'a logsift_core::autoencoder::TrainReport,
    }
    write_json(
        &art.path("train_report.json"),
        &TrainSummary {
            templates: matrix.num_templates(),
            pca_components: pca.k,
            pca_degenerate: pca.degenerate,
            autoencoder: &report,
        },
    )?;
    println!(
        "trained on {} windows ({} hold-out): pca k={}, ae loss {:.4} -> {:.4}, weights ({}, {})",
        split,
        holdout.rows(),
        pca.k,
        report.initial_loss,
        report.final_loss,
        weights.w_pca,
        weights.w_ae
    );
    println!(
        "wrote {}, {}, {}",
        art.pca_model().display(),
        art.ae_model().display(),
        art.calibration().display()
    );
    Ok(())
}

fn load_calibration(art: &Artifacts) -> Result<Calibration, CliError> {
    let text = fs::read_to_string(art.calibration())
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", art.calibration().display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed {}: {e}", art.calibration().display())))
}

fn save_timeline(path: &Path, timeline: &AnomalyTimeline) -> CmdResult {
    let mut buf = Vec::new();
    timeline
        .write_csv(&mut buf)
        .map_err(|e| CliError::Data(format!("cannot render timeline: {e}")))?;
    write_text(path, &String::from_utf8_lossy(&buf))
}

pub fn cmd_detect(cfg: &RunConfig) -> CmdResult {
    echo_config(cfg)?;
    let art = Artifacts::new(cfg);
    art.require(&art.test_windows(), "test window matrix", "parse")?;
    art.require(&art.pca_model(), "pca model", "train")?;
    art.require(&art.ae_model(), "autoencoder model", "train")?;
    art.require(&art.calibration(), "calibration", "train")?;

    let matrix = load_matrix(&art.test_windows())?;
    let pca = PcaModel::load(&art.pca_model())?;
    let ae = AutoencoderModel::load(&art.ae_model())?;
    let cal = load_calibration(&art)?;
    let params = LossParams::new(cal.alpha, cal.beta)?;

    let save_scores = |path: &Path, series: &ScoreSeries| -> CmdResult {
        let mut buf = Vec::new();
        series
            .write_csv(&mut buf)
            .map_err(|e| CliError::Data(format!("cannot render scores: {e}")))?;
        write_text(path, &String::from_utf8_lossy(&buf))
    };

    let mut pca_series = pca.score(&matrix)?;
    pca_series.set_threshold(cal.pca_threshold);
    save_scores(&art.path("scores_pca.csv"), &pca_series)?;
    save_timeline(
        &art.timeline(SourceTag::Pca),
        &AnomalyTimeline {
            series: pca_series.clone(),
            source: SourceTag::Pca,
        },
    )?;

    let mut ae_series = ae.score(&matrix)?;
    ae_series.set_threshold(cal.ae_threshold);
    save_scores(&art.path("scores_ae.csv"), &ae_series)?;
    save_timeline(
        &art.timeline(SourceTag::Ae),
        &AnomalyTimeline {
            series: ae_series.clone(),
            source: SourceTag::Ae,
        },
    )?;

    let ae_custom = ae.score_custom(&pca, &params, &matrix)?;
    let pca_n = ScoreSeries::new(matrix.start_epoch, cal.pca_norm.apply_all(&pca_series.scores));
    let ae_n = ScoreSeries::new(matrix.start_epoch, cal.ae_norm.apply_all(&ae_custom.scores));
    let mut fused = ensemble_score(&pca_n, &ae_n, cal.weights)?;
    fused.series.set_threshold(cal.fused_threshold);
    save_timeline(&art.timeline(SourceTag::Ensemble), &fused)?;

    let flags = |s: &ScoreSeries| s.flags.iter().filter(|&&f| f).count();
    println!(
        "scored {} windows: {} pca flags, {} ae flags, {} ensemble flags",
        matrix.rows(),
        flags(&pca_series),
        flags(&ae_series),
        flags(&fused.series)
    );
    println!(
        "wrote {}, {}, {}",
        art.timeline(SourceTag::Pca).display(),
        art.timeline(SourceTag::Ae).display(),
        art.timeline(SourceTag::Ensemble).display()
    );
    Ok(())
}

fn load_timeline(path: &Path) -> Result<AnomalyTimeline, CliError> {
    let f = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(AnomalyTimeline::read_csv(BufReader::new(f))?)
}

pub fn cmd_recur(cfg: &RunConfig) -> CmdResult {
    echo_config(cfg)?;
    let art = Artifacts::new(cfg);
    art.require(
        &art.timeline(SourceTag::Ensemble),
        "ensemble timeline",
        "detect",
    )?;
    let timeline = load_timeline(&art.timeline(SourceTag::Ensemble))?;
    let regions = run_recurrence(&timeline, &cfg.recurrence, &cfg.peak)?;
    let mut buf = Vec::new();
    write_regions_csv(&regions, &mut buf)
        .map_err(|e| CliError::Data(format!("cannot render regions: {e}")))?;
    write_text(&art.regions(), &String::from_utf8_lossy(&buf))?;
    println!(
        "{} recurring regions retained from {} flagged windows",
        regions.len(),
        timeline.flags().iter().filter(|&&f| f).count()
    );
    println!("wrote {}", art.regions().display());
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> CmdResult {
    echo_config(cfg)?;
    let art = Artifacts::new(cfg);
    let labels_path = cfg
        .paths
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Usage("eval needs paths.labels".into()))?;
    if !labels_path.exists() {
        return Err(CliError::Data(format!(
            "missing labels: {}",
            labels_path.display()
        )));
    }
    art.require(&art.regions(), "recurring regions", "recur")?;
    let truth = {
        let f = fs::File::open(labels_path)
            .map_err(|e| CliError::Data(format!("cannot open {}: {e}", labels_path.display())))?;
        GroundTruth::read_csv(BufReader::new(f))?
    };

    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    for source in [SourceTag::Pca, SourceTag::Ae, SourceTag::Ensemble] {
        let path = art.timeline(source);
        art.require(&path, &format!("{} timeline", source.name()), "detect")?;
        let timeline = load_timeline(&path)?;
        let regions = if source == SourceTag::Ensemble {
            let f = fs::File::open(art.regions())
                .map_err(|e| CliError::Data(format!("cannot open regions: {e}")))?;
            read_regions_csv(BufReader::new(f))?
        } else {
            run_recurrence(&timeline, &cfg.recurrence, &cfg.peak)?
        };
        let report = evaluate(&timeline, &regions, &truth, &cfg.recurrence, &cfg.peak)?;
        reports.push((source.name().to_string(), report));
    }

    #[derive(serde::Serialize)]
    struct FullReport<'a> {
        methods: std::collections::BTreeMap<&'a str, &'a EvalReport>,
    }
    let methods = reports
        .iter()
        .map(|(name, report)| (name.as_str(), report))
        .collect();
    write_json(&art.path("eval_report.json"), &FullReport { methods })?;
    print!("{}", render_table(&reports));
    println!("wrote {}", art.path("eval_report.json").display());
    Ok(())
}
