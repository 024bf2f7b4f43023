//! Three-stage refinement of a flagged anomaly timeline.
//!
//! 1. High-frequency detection: slide a coarse window over the per-second
//!    flags and run robust z-score peak detection on the flag counts.
//! 2. Dense-region detection: inside the high-frequency zones, find spans
//!    whose flagged-second fraction clears a density threshold.
//! 3. Time-based elimination: merge dense regions separated by less than a
//!    gap threshold, then drop regions shorter than a minimum duration, so
//!    short transients and isolated pseudo positives disappear while
//!    recurring anomalies survive.

use std::io::{BufRead, Write};

use crate::ensemble::AnomalyTimeline;
use crate::error::{Error, Result};

/// Robust peak detector parameters (moving-statistics history length,
/// deviation multiplier, damping weight of signaled points).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeakConfig {
    pub lag: usize,
    pub z_threshold: f64,
    pub influence: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        // z midpoint of the recommended 2.0..5.0 range.
        PeakConfig {
            lag: 5,
            z_threshold: 3.0,
            influence: 0.5,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lag < 1 {
            return Err(Error::InvalidParameter("lag must be >= 1".into()));
        }
        if !self.z_threshold.is_finite() || self.z_threshold <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "z threshold must be positive, got {}",
                self.z_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.influence) {
            return Err(Error::InvalidParameter(format!(
                "influence must lie in [0, 1], got {}",
                self.influence
            )));
        }
        Ok(())
    }
}

/// Sliding-window and elimination parameters. Defaults follow the reference
/// operating point: 2-minute coarse window, 45-second slide, 45% density,
/// 90-second merge gap, 30-second minimum duration.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RecurrenceConfig {
    pub coarse_window_s: u64,
    pub slide_s: u64,
    pub density_window_s: u64,
    pub density_threshold: f64,
    pub merge_gap_s: u64,
    pub min_duration_s: u64,
}

impl Default for RecurrenceConfig {
    fn default() -> Self {
        RecurrenceConfig {
            coarse_window_s: 120,
            slide_s: 45,
            density_window_s: 60,
            density_threshold: 0.45,
            merge_gap_s: 90,
            min_duration_s: 30,
        }
    }
}

impl RecurrenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_window_s == 0
            || self.slide_s == 0
            || self.density_window_s == 0
            || self.merge_gap_s == 0
        {
            return Err(Error::InvalidParameter(
                "window, slide and gap sizes must be positive".into(),
            ));
        }
        if self.slide_s > self.coarse_window_s {
            return Err(Error::InvalidParameter(format!(
                "slide ({}) must not exceed the coarse window ({})",
                self.slide_s, self.coarse_window_s
            )));
        }
        if !(self.density_threshold > 0.0 && self.density_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "density threshold {} outside (0, 1]",
                self.density_threshold
            )));
        }
        Ok(())
    }
}

/// A coarse sliding-window position whose flag count signaled as a peak.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoarseWindow {
    pub start_epoch: i64,
    pub end_epoch: i64,
}

/// Half-open span of seconds dense with anomaly flags.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseRegion {
    pub start_epoch: i64,
    pub end_epoch: i64,
    /// Flagged fraction of the span at the time it was formed.
    pub density: f64,
    /// Number of flagged seconds supporting the region.
    pub support: u64,
}

impl DenseRegion {
    pub fn duration_s(&self) -> u64 {
        (self.end_epoch - self.start_epoch) as u64
    }

    pub fn contains(&self, epoch: i64) -> bool {
        epoch >= self.start_epoch && epoch < self.end_epoch
    }
}

const STD_FLOOR: f64 = 1e-9;

/// Robust z-score peak detection over a series. The first `lag` elements
/// seed the moving statistics and never signal. An element signals when it
/// deviates from the moving mean of the filtered history by more than
/// z_threshold standard deviations; signaled values enter the history damped
/// by `influence`.
pub fn detect_peaks(series: &[f64], cfg: &PeakConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    if series.len() <= cfg.lag {
        return Err(Error::InsufficientData(format!(
            "series of {} elements cannot seed a lag of {}",
            series.len(),
            cfg.lag
        )));
    }
    let mut signals = vec![false; series.len()];
    let mut filtered: Vec<f64> = series[..cfg.lag].to_vec();
    for i in cfg.lag..series.len() {
        let window = &filtered[i - cfg.lag..i];
        let mean = window.iter().sum::<f64>() / cfg.lag as f64;
        let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cfg.lag as f64;
        let std = var.sqrt().max(STD_FLOOR);
        let x = series[i];
        if (x - mean).abs() > cfg.z_threshold * std {
            signals[i] = true;
            let prev = filtered[i - 1];
            filtered.push(cfg.influence * x + (1.0 - cfg.influence) * prev);
        } else {
            filtered.push(x);
        }
    }
    Ok(signals)
}

/// Stage 1: coarse windows whose flag counts signal as peaks.
pub fn high_frequency_windows(
    timeline: &AnomalyTimeline,
    cfg: &RecurrenceConfig,
    peak: &PeakConfig,
) -> Result<Vec<CoarseWindow>> {
    cfg.validate()?;
    peak.validate()?;
    let flags = timeline.flags();
    if flags.is_empty() {
        return Err(Error::EmptyInput("empty timeline".into()));
    }
    let w = cfg.coarse_window_s as usize;
    let s = cfg.slide_s as usize;
    let needed = cfg.coarse_window_s + peak.lag as u64 * cfg.slide_s;
    if (flags.len() as u64) < needed {
        return Err(Error::InsufficientData(format!(
            "timeline of {}s is shorter than window + lag * slide = {}s",
            flags.len(),
            needed
        )));
    }
    let positions = (flags.len() - w) / s + 1;
    let counts: Vec<f64> = (0..positions)
        .map(|p| flags[p * s..p * s + w].iter().filter(|&&f| f).count() as f64)
        .collect();
    let signals = detect_peaks(&counts, peak)?;
    let start = timeline.start_epoch();
    Ok(signals
        .iter()
        .enumerate()
        .filter(|&(_, &sig)| sig)
        .map(|(p, _)| CoarseWindow {
            start_epoch: start + (p * s) as i64,
            end_epoch: start + (p * s + w) as i64,
        })
        .collect())
}

/// Collapse possibly-overlapping coarse windows into disjoint second-offset
/// intervals clipped to the timeline.
fn zone_intervals(
    zones: &[CoarseWindow],
    start_epoch: i64,
    len: usize,
) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = zones
        .iter()
        .map(|z| {
            let lo = (z.start_epoch - start_epoch).max(0) as usize;
            let hi = ((z.end_epoch - start_epoch).max(0) as usize).min(len);
            (lo, hi)
        })
        .filter(|&(lo, hi)| lo < hi)
        .collect();
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    for (lo, hi) in spans {
        match merged.last_mut() {
            Some(prev) if lo <= prev.1 => prev.1 = prev.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// Stage 2: slide a density window over the per-second flags; maximal runs
/// of positions meeting the density threshold become regions spanning the
/// union of their windows. The whole flag range is treated as one zone.
pub fn dense_regions(
    flags: &[bool],
    start_epoch: i64,
    cfg: &RecurrenceConfig,
) -> Result<Vec<DenseRegion>> {
    let everything = [CoarseWindow {
        start_epoch,
        end_epoch: start_epoch + flags.len() as i64,
    }];
    dense_regions_in(flags, start_epoch, &everything, cfg)
}

/// Stage 2 constrained to the high-frequency zones: only density windows
/// lying entirely inside a zone are considered, so every dense region is a
/// subset of the zone coverage.
pub fn dense_regions_in(
    flags: &[bool],
    start_epoch: i64,
    zones: &[CoarseWindow],
    cfg: &RecurrenceConfig,
) -> Result<Vec<DenseRegion>> {
    cfg.validate()?;
    let nd = cfg.density_window_s as usize;
    let mut regions = Vec::new();
    for (zone_lo, zone_hi) in zone_intervals(zones, start_epoch, flags.len()) {
        if zone_hi - zone_lo < nd {
            continue;
        }
        let window = &flags[zone_lo..zone_hi];
        let positions = window.len() - nd + 1;
        let mut count = window[..nd].iter().filter(|&&f| f).count();
        let mut run_start: Option<usize> = None;
        for p in 0..=positions {
            let is_dense = p < positions && {
                if p > 0 {
                    count -= usize::from(window[p - 1]);
                    count += usize::from(window[p + nd - 1]);
                }
                count as f64 / nd as f64 >= cfg.density_threshold
            };
            match (is_dense, run_start) {
                (true, None) => run_start = Some(p),
                (false, Some(a)) => {
                    let span_lo = zone_lo + a;
                    let span_hi = zone_lo + p - 1 + nd; // exclusive
                    let support =
                        flags[span_lo..span_hi].iter().filter(|&&f| f).count() as u64;
                    regions.push(DenseRegion {
                        start_epoch: start_epoch + span_lo as i64,
                        end_epoch: start_epoch + span_hi as i64,
                        density: support as f64 / (span_hi - span_lo) as f64,
                        support,
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    regions.sort_by_key(|r| r.start_epoch);
    Ok(regions)
}

/// Stage 3a: consolidate regions whose boundary gap is under the merge gap.
/// Support is summed over constituents (they are disjoint by construction)
/// and density recomputed over the union span.
pub fn merge_regions(regions: &[DenseRegion], merge_gap_s: u64) -> Vec<DenseRegion> {
    if regions.is_empty() {
        return Vec::new();
    }
    let mut sorted = regions.to_vec();
    sorted.sort_by_key(|r| (r.start_epoch, r.end_epoch));
    let mut out: Vec<DenseRegion> = Vec::with_capacity(sorted.len());
    for region in sorted {
        match out.last_mut() {
            Some(prev) if region.start_epoch - prev.end_epoch < merge_gap_s as i64 => {
                prev.end_epoch = prev.end_epoch.max(region.end_epoch);
                prev.support += region.support;
                prev.density = (prev.support as f64
                    / (prev.end_epoch - prev.start_epoch) as f64)
                    .min(1.0);
            }
            _ => out.push(region),
        }
    }
    out
}

/// Stage 3b: keep regions persisting at least `min_duration_s` seconds.
pub fn duration_filter(regions: &[DenseRegion], min_duration_s: u64) -> Vec<DenseRegion> {
    regions
        .iter()
        .filter(|r| r.duration_s() >= min_duration_s)
        .copied()
        .collect()
}

/// Every intermediate product of the three stages, for per-stage evaluation.
#[derive(Clone, Debug)]
pub struct RecurrenceStages {
    pub coarse: Vec<CoarseWindow>,
    pub dense: Vec<DenseRegion>,
    pub merged: Vec<DenseRegion>,
    pub final_regions: Vec<DenseRegion>,
}

/// Run the full pipeline keeping each stage's output.
pub fn run_recurrence_stages(
    timeline: &AnomalyTimeline,
    cfg: &RecurrenceConfig,
    peak: &PeakConfig,
) -> Result<RecurrenceStages> {
    let coarse = high_frequency_windows(timeline, cfg, peak)?;
    let dense = dense_regions_in(timeline.flags(), timeline.start_epoch(), &coarse, cfg)?;
    let merged = merge_regions(&dense, cfg.merge_gap_s);
    let final_regions = duration_filter(&merged, cfg.min_duration_s);
    Ok(RecurrenceStages {
        coarse,
        dense,
        merged,
        final_regions,
    })
}

/// The final recurring-anomaly regions.
pub fn run_recurrence(
    timeline: &AnomalyTimeline,
    cfg: &RecurrenceConfig,
    peak: &PeakConfig,
) -> Result<Vec<DenseRegion>> {
    Ok(run_recurrence_stages(timeline, cfg, peak)?.final_regions)
}

pub fn write_regions_csv<W: Write>(regions: &[DenseRegion], mut w: W) -> std::io::Result<()> {
    writeln!(w, "start_epoch,end_epoch,duration_s,density,support")?;
    for r in regions {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.start_epoch,
            r.end_epoch,
            r.duration_s(),
            r.density,
            r.support
        )?;
    }
    Ok(())
}

pub fn read_regions_csv<R: BufRead>(r: R) -> Result<Vec<DenseRegion>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<regions csv>", e))?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::FormatMismatch(format!(
                "regions row {} has {} fields",
                n + 1,
                f.len()
            )));
        }
        let parse_err =
            |what: &str| Error::FormatMismatch(format!("bad {what} on regions row {}", n + 1));
        out.push(DenseRegion {
            start_epoch: f[0].parse().map_err(|_| parse_err("start"))?,
            end_epoch: f[1].parse().map_err(|_| parse_err("end"))?,
            density: f[3].parse().map_err(|_| parse_err("density"))?,
            support: f[4].parse().map_err(|_| parse_err("support"))?,
        });
    }
    Ok(out)
}
