//! Per-window anomaly scores and threshold calibration shared by the
//! detectors and the ensemble.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One anomaly score per 1-second window, plus an optional calibrated
/// threshold. Flags are recomputed whenever the threshold is set so that
/// `flag == (score > threshold)` holds by construction.
#[derive(Clone, Debug)]
pub struct ScoreSeries {
    pub start_epoch: i64,
    pub scores: Vec<f64>,
    pub threshold: Option<f64>,
    pub flags: Vec<bool>,
}

impl ScoreSeries {
    pub fn new(start_epoch: i64, scores: Vec<f64>) -> Self {
        let flags = vec![false; scores.len()];
        ScoreSeries {
            start_epoch,
            scores,
            threshold: None,
            flags,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = Some(threshold);
        self.flags = self.scores.iter().map(|&s| s > threshold).collect();
    }

    /// Calibrate against a healthy hold-out score set and apply the result.
    pub fn calibrate(&mut self, healthy_scores: &[f64], percentile: f64) -> Result<f64> {
        let t = calibrate_threshold(healthy_scores, percentile)?;
        self.set_threshold(t);
        Ok(t)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "window_start_epoch,score,flag")?;
        for (i, &s) in self.scores.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                self.start_epoch + i as i64,
                s,
                self.flags[i]
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut scores = Vec::new();
        let mut flags = Vec::new();
        let mut start_epoch = None;
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<score csv>", e))?;
            if n == 0 {
                continue; // header
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let epoch: i64 = parse_field(parts.next(), n, "epoch")?;
            let score: f64 = parse_field(parts.next(), n, "score")?;
            let flag: bool = parse_field(parts.next(), n, "flag")?;
            if start_epoch.is_none() {
                start_epoch = Some(epoch);
            }
            scores.push(score);
            flags.push(flag);
        }
        let start_epoch =
            start_epoch.ok_or_else(|| Error::EmptyInput("score csv with no rows".into()))?;
        Ok(ScoreSeries {
            start_epoch,
            scores,
            threshold: None,
            flags,
        })
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, name: &str) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::FormatMismatch(format!("bad {name} field on line {}", line + 1)))
}

/// Percentile with linear interpolation between order statistics
/// (the `p/100 * (n-1)` rank definition).
pub fn percentile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput("percentile of empty set".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return Ok(sorted[lo]);
    }
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Threshold = given percentile of the healthy scores.
pub fn calibrate_threshold(healthy_scores: &[f64], pct: f64) -> Result<f64> {
    if healthy_scores.is_empty() {
        return Err(Error::EmptyInput("no healthy scores to calibrate on".into()));
    }
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold percentile {pct} outside (0, 100]"
        )));
    }
    let mut sorted = healthy_scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile(&sorted, pct)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scores_give_zero_threshold() {
        let t = calibrate_threshold(&[0.0, 0.0, 0.0, 0.0], 99.0).unwrap();
        assert_eq!(t, 0.0);
        let mut s = ScoreSeries::new(0, vec![0.0, 0.1, 0.0]);
        s.set_threshold(t);
        assert_eq!(s.flags, vec![false, true, false]);
    }

    #[test]
    fn uniform_scores_interpolate() {
        let scores: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let t = calibrate_threshold(&scores, 95.0).unwrap();
        assert!((t - 95.05).abs() < 1e-12, "{t}");
    }

    #[test]
    fn single_score_is_its_own_threshold() {
        assert_eq!(calibrate_threshold(&[3.25], 50.0).unwrap(), 3.25);
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(calibrate_threshold(&[], 98.0).is_err());
    }

    #[test]
    fn flags_follow_threshold_exactly() {
        let mut s = ScoreSeries::new(10, vec![0.5, 1.0, 2.0, 1.0]);
        s.set_threshold(1.0);
        assert_eq!(s.flags, vec![false, false, true, false]);
    }

    #[test]
    fn csv_round_trip() {
        let mut s = ScoreSeries::new(1700000000, vec![0.25, 1.5, 0.0]);
        s.set_threshold(1.0);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ScoreSeries::read_csv(&buf[..]).unwrap();
        assert_eq!(back.start_epoch, 1700000000);
        assert_eq!(back.scores, s.scores);
        assert_eq!(back.flags, s.flags);
    }
}
