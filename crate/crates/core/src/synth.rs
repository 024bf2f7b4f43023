//! Synthetic labeled log generation: Poisson base traffic per service
//! template, with injected recurring anomalies, short transients and
//! isolated single-second pseudo spikes. Stands in for a live deployment so
//! the pseudo-positive reduction of the recurrence stages is measurable.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A recurring anomaly: episodes of `burst_s` seconds starting at `start_s`
/// and repeating every `period_s` (0 = a single episode). During an episode
/// the base rates are multiplied and error-status lines are emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurringSpec {
    pub start_s: u64,
    pub period_s: u64,
    pub burst_s: u64,
    pub rate_multiplier: f64,
    pub error_rate: f64,
}

impl RecurringSpec {
    /// Episode intervals [start, end) in seconds from the corpus start.
    pub fn episodes(&self, total_seconds: u64) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        let mut start = self.start_s;
        loop {
            if start + self.burst_s > total_seconds {
                break;
            }
            out.push((start, start + self.burst_s));
            if self.period_s == 0 {
                break;
            }
            start += self.period_s;
        }
        out
    }
}

/// A short-lived anomaly that the duration stage is meant to eliminate.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientSpec {
    pub start_s: u64,
    pub duration_s: u64,
    pub rate_multiplier: f64,
    pub error_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectionSpec {
    pub total_seconds: u64,
    pub start_epoch: i64,
    /// Per-template per-second Poisson rates of the healthy traffic.
    pub base_rates: Vec<f64>,
    pub recurring: Vec<RecurringSpec>,
    pub transients: Vec<TransientSpec>,
    /// Exact number of isolated single-second spike seconds to inject.
    pub noise_spikes: usize,
    pub noise_multiplier: f64,
    /// The minimum-duration parameter the corpus is designed against:
    /// recurring bursts must last at least this, transients strictly less.
    pub min_duration_s: u64,
    pub seed: u64,
}

impl InjectionSpec {
    /// A healthy corpus: base traffic only.
    pub fn healthy(total_seconds: u64, start_epoch: i64, base_rates: Vec<f64>, seed: u64) -> Self {
        InjectionSpec {
            total_seconds,
            start_epoch,
            base_rates,
            recurring: Vec::new(),
            transients: Vec::new(),
            noise_spikes: 0,
            noise_multiplier: 15.0,
            min_duration_s: 30,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.total_seconds == 0 {
            return Err(Error::Spec("total_seconds must be positive".into()));
        }
        if self.base_rates.is_empty() {
            return Err(Error::Spec("at least one base template is required".into()));
        }
        if self.base_rates.iter().any(|&r| !r.is_finite() || r < 0.0) {
            return Err(Error::Spec("base rates must be finite and non-negative".into()));
        }
        for r in &self.recurring {
            if r.burst_s < self.min_duration_s {
                return Err(Error::Spec(format!(
                    "recurring burst of {}s is shorter than the minimum duration {}s",
                    r.burst_s, self.min_duration_s
                )));
            }
            if r.period_s > 0 && r.period_s < r.burst_s {
                return Err(Error::Spec(format!(
                    "recurring period {}s is shorter than its burst {}s",
                    r.period_s, r.burst_s
                )));
            }
            if r.start_s + r.burst_s > self.total_seconds {
                return Err(Error::Spec(format!(
                    "recurring anomaly at {}s overruns the corpus",
                    r.start_s
                )));
            }
        }
        for t in &self.transients {
            if t.duration_s == 0 || t.duration_s >= self.min_duration_s {
                return Err(Error::Spec(format!(
                    "transient duration {}s must be in 1..{}",
                    t.duration_s, self.min_duration_s
                )));
            }
            if t.start_s + t.duration_s > self.total_seconds {
                return Err(Error::Spec(format!(
                    "transient at {}s overruns the corpus",
                    t.start_s
                )));
            }
        }
        // recurring episodes and transients must not overlap
        let episodes: Vec<(u64, u64)> = self
            .recurring
            .iter()
            .flat_map(|r| r.episodes(self.total_seconds))
            .collect();
        let mut intervals = episodes.clone();
        intervals.extend(self.transients.iter().map(|t| (t.start_s, t.start_s + t.duration_s)));
        let mut sorted = intervals.clone();
        sorted.sort_unstable();
        for pair in sorted.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::Spec(format!(
                    "injected intervals [{}, {}) and [{}, {}) overlap",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(())
    }
}

/// Labeled seconds of the injected corpus; the three sets are disjoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub true_anomaly_seconds: BTreeSet<i64>,
    pub transient_seconds: BTreeSet<i64>,
    pub noise_seconds: BTreeSet<i64>,
}

impl GroundTruth {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "second_epoch,label")?;
        let mut rows: Vec<(i64, &str)> = Vec::new();
        rows.extend(self.true_anomaly_seconds.iter().map(|&s| (s, "true")));
        rows.extend(self.transient_seconds.iter().map(|&s| (s, "transient")));
        rows.extend(self.noise_seconds.iter().map(|&s| (s, "noise")));
        rows.sort_unstable();
        for (s, label) in rows {
            writeln!(w, "{s},{label}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<GroundTruth> {
        let mut truth = GroundTruth::default();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<labels csv>", e))?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let (epoch, label) = line.split_once(',').ok_or_else(|| {
                Error::FormatMismatch(format!("labels row {} lacks a comma", n + 1))
            })?;
            let epoch: i64 = epoch.parse().map_err(|_| {
                Error::FormatMismatch(format!("bad epoch on labels row {}", n + 1))
            })?;
            let inserted = match label.trim() {
                "true" => truth.true_anomaly_seconds.insert(epoch),
                "transient" => truth.transient_seconds.insert(epoch),
                "noise" => truth.noise_seconds.insert(epoch),
                other => {
                    return Err(Error::FormatMismatch(format!(
                        "unknown label {other:?} on row {}",
                        n + 1
                    )))
                }
            };
            if !inserted {
                return Err(Error::FormatMismatch(format!(
                    "duplicate labeled second {epoch}"
                )));
            }
        }
        Ok(truth)
    }
}

/// Deterministically generate the corpus: returns the raw log text (epoch
/// float timestamp format) and its ground truth.
pub fn generate(spec: &InjectionSpec) -> Result<(String, GroundTruth)> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let k = spec.base_rates.len();

    // Collect injected intervals as per-second lookup tables.
    let total = spec.total_seconds as usize;
    let mut in_recurring = vec![false; total];
    for r in &spec.recurring {
        for (a, b) in r.episodes(spec.total_seconds) {
            for slot in &mut in_recurring[a as usize..b as usize] {
                *slot = true;
            }
        }
    }
    let mut in_transient = vec![false; total];
    for t in &spec.transients {
        for slot in
            &mut in_transient[t.start_s as usize..(t.start_s + t.duration_s) as usize]
        {
            *slot = true;
        }
    }

    // Sample isolated noise seconds: outside every anomaly, pairwise at
    // least 3 seconds apart (so noise alone can never clear a 45% density
    // threshold).
    let mut noise = BTreeSet::new();
    let mut attempts = 0u64;
    while noise.len() < spec.noise_spikes {
        attempts += 1;
        if attempts > 1000 * (spec.noise_spikes as u64 + 1) {
            return Err(Error::Spec(
                "could not place the requested noise spikes; corpus too crowded".into(),
            ));
        }
        let s = rng.below(spec.total_seconds) as i64;
        let su = s as usize;
        if in_recurring[su] || in_transient[su] {
            continue;
        }
        if (-2..=2).any(|d| noise.contains(&(s + d))) {
            continue;
        }
        noise.insert(s);
    }

    let mut text = String::new();
    let mut messages: Vec<String> = Vec::new();
    for s in 0..total {
        messages.clear();
        let (multiplier, error_rate) = if in_recurring[s] {
            let r = spec
                .recurring
                .iter()
                .find(|r| {
                    r.episodes(spec.total_seconds)
                        .iter()
                        .any(|&(a, b)| (a as usize..b as usize).contains(&s))
                })
                .unwrap();
            (r.rate_multiplier, r.error_rate)
        } else if in_transient[s] {
            let t = spec
                .transients
                .iter()
                .find(|t| (t.start_s as usize..(t.start_s + t.duration_s) as usize).contains(&s))
                .unwrap();
            (t.rate_multiplier, t.error_rate)
        } else if noise.contains(&(s as i64)) {
            (spec.noise_multiplier, 0.0)
        } else {
            (1.0, 0.0)
        };

        for (i, &rate) in spec.base_rates.iter().enumerate() {
            let n = rng.poisson(rate * multiplier);
            for _ in 0..n {
                let request = 100_000 + rng.below(900_000);
                let ms = 20 + rng.below(480);
                messages.push(format!("svc{i} handled request {request} in {ms} ms"));
            }
        }
        if error_rate > 0.0 {
            let n = rng.poisson(error_rate);
            for _ in 0..n {
                let i = rng.below(k as u64);
                let request = 100_000 + rng.below(900_000);
                let code = [500u64, 502, 503][rng.below(3) as usize];
                messages.push(format!(
                    "svc{i} request {request} failed with status {code}"
                ));
            }
        }

        let count = messages.len();
        for (j, msg) in messages.iter().enumerate() {
            let ts = spec.start_epoch as f64
                + s as f64
                + (j + 1) as f64 / (count + 1) as f64;
            text.push_str(&format!("{ts:.3} {msg}\n"));
        }
    }

    let mut truth = GroundTruth::default();
    for (s, &flag) in in_recurring.iter().enumerate() {
        if flag {
            truth.true_anomaly_seconds.insert(spec.start_epoch + s as i64);
        }
    }
    for (s, &flag) in in_transient.iter().enumerate() {
        if flag {
            truth.transient_seconds.insert(spec.start_epoch + s as i64);
        }
    }
    truth.noise_seconds = noise.iter().map(|&s| spec.start_epoch + s).collect();
    Ok((text, truth))
}
