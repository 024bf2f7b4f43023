//! Pseudo-positive and true-positive reduction metrics.
//!
//! A flagged second is a pseudo positive when it is absent from the
//! ground-truth anomaly set. The recurrence stages eliminate initial alerts;
//! PPR measures how many pseudo alerts they removed (higher is better) and
//! TPR how many correct alerts were lost with them (lower is better).

use std::collections::BTreeSet;

use crate::ensemble::AnomalyTimeline;
use crate::error::{Error, Result};
use crate::recurrence::{
    run_recurrence_stages, CoarseWindow, DenseRegion, PeakConfig, RecurrenceConfig,
};
use crate::synth::GroundTruth;

/// Percent of pseudo alerts eliminated: 100 * (initial - final) / initial,
/// 0 when nothing was there to eliminate.
pub fn ppr(initial_pseudo: u64, final_pseudo: u64) -> Result<f64> {
    reduction_percent(initial_pseudo, final_pseudo)
}

/// Percent of correct alerts lost to the stages; same arithmetic over
/// true-positive counts.
pub fn tpr(initial_true: u64, final_true: u64) -> Result<f64> {
    reduction_percent(initial_true, final_true)
}

fn reduction_percent(initial: u64, final_count: u64) -> Result<f64> {
    if final_count > initial {
        return Err(Error::Accounting(format!(
            "final count {final_count} exceeds initial {initial}"
        )));
    }
    if initial == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * (initial - final_count) as f64 / initial as f64)
}

/// Alert counts surviving one refinement stage.
#[derive(Clone, Debug, serde::Serialize)]
pub struct StageCounts {
    pub stage: String,
    pub surviving_true: u64,
    pub surviving_pseudo: u64,
    pub ppr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EvalReport {
    pub initial_flags: u64,
    pub initial_true: u64,
    pub initial_pseudo: u64,
    pub final_true: u64,
    pub final_pseudo: u64,
    pub ppr: f64,
    pub tpr: f64,
    pub stages: Vec<StageCounts>,
}

fn windows_cover(windows: &[CoarseWindow], epoch: i64) -> bool {
    windows
        .iter()
        .any(|w| epoch >= w.start_epoch && epoch < w.end_epoch)
}

fn regions_cover(regions: &[DenseRegion], epoch: i64) -> bool {
    regions.iter().any(|r| r.contains(epoch))
}

/// Evaluate a flagged timeline and its final recurring regions against the
/// ground truth. The per-stage breakdown re-runs the pipeline with the later
/// stages disabled, counting which initial alerts each stage retains.
pub fn evaluate(
    timeline: &AnomalyTimeline,
    regions: &[DenseRegion],
    truth: &GroundTruth,
    cfg: &RecurrenceConfig,
    peak: &PeakConfig,
) -> Result<EvalReport> {
    let start = timeline.start_epoch();
    let end = start + timeline.len() as i64;
    let labeled: Vec<i64> = truth
        .true_anomaly_seconds
        .iter()
        .chain(&truth.transient_seconds)
        .chain(&truth.noise_seconds)
        .copied()
        .collect();
    if let Some(&bad) = labeled.iter().find(|&&s| s < start || s >= end) {
        return Err(Error::Alignment(format!(
            "labeled second {bad} outside the timeline [{start}, {end})"
        )));
    }

    let flagged: BTreeSet<i64> = timeline
        .flags()
        .iter()
        .enumerate()
        .filter(|&(_, &f)| f)
        .map(|(i, _)| start + i as i64)
        .collect();
    let initial_true = flagged
        .iter()
        .filter(|s| truth.true_anomaly_seconds.contains(s))
        .count() as u64;
    let initial_flags = flagged.len() as u64;
    let initial_pseudo = initial_flags - initial_true;

    let count_surviving = |covered: &dyn Fn(i64) -> bool| -> (u64, u64) {
        let mut surviving_true = 0;
        let mut surviving_pseudo = 0;
        for &s in &flagged {
            if covered(s) {
                if truth.true_anomaly_seconds.contains(&s) {
                    surviving_true += 1;
                } else {
                    surviving_pseudo += 1;
                }
            }
        }
        (surviving_true, surviving_pseudo)
    };

    let (final_true, final_pseudo) = count_surviving(&|s| regions_cover(regions, s));

    let stages_run = run_recurrence_stages(timeline, cfg, peak)?;
    let mut stages = Vec::with_capacity(3);
    for (name, covered) in [
        (
            "high_frequency",
            Box::new(|s| windows_cover(&stages_run.coarse, s)) as Box<dyn Fn(i64) -> bool>,
        ),
        ("dense", Box::new(|s| regions_cover(&stages_run.dense, s))),
        (
            "duration",
            Box::new(|s| regions_cover(&stages_run.final_regions, s)),
        ),
    ] {
        let (surviving_true, surviving_pseudo) = count_surviving(&|s| covered(s));
        stages.push(StageCounts {
            stage: name.to_string(),
            surviving_true,
            surviving_pseudo,
            ppr: ppr(initial_pseudo, surviving_pseudo)?,
            tpr: tpr(initial_true, surviving_true)?,
        });
    }

    Ok(EvalReport {
        initial_flags,
        initial_true,
        initial_pseudo,
        final_true,
        final_pseudo,
        ppr: ppr(initial_pseudo, final_pseudo)?,
        tpr: tpr(initial_true, final_true)?,
        stages,
    })
}

/// Plain-text results table: one row per (method, stage) pair.
pub fn render_table(reports: &[(String, EvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<48} {:>10} {:>10}\n", "METHOD", "PPR", "TPR"));
    for (method, report) in reports {
        for stage in &report.stages {
            let label = match stage.stage.as_str() {
                "high_frequency" => "high-frequency window detection",
                "dense" => "dense anomalous region detection",
                "duration" => "duration-based filtering",
                other => other,
            };
            let row = format!("[{method}] {label}");
            out.push_str(&format!(
                "{row:<48} {:>9.2}% {:>9.2}%\n",
                stage.ppr, stage.tpr
            ));
        }
    }
    out
}
