//! Weighted fusion of the two detectors into one anomaly timeline.
//!
//! Raw PCA residuals and autoencoder losses live on incomparable scales, so
//! both series are normalized with robust statistics (median and IQR resist
//! the very anomalies being hunted) before the weighted sum.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::score::{percentile, ScoreSeries};

/// Normalized detector weights: w_pca + w_ae = 1, both non-negative.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnsembleWeights {
    pub w_pca: f64,
    pub w_ae: f64,
}

impl EnsembleWeights {
    pub fn new(w_pca: f64, w_ae: f64) -> Result<EnsembleWeights> {
        if w_pca < 0.0 || w_ae < 0.0 || (w_pca + w_ae - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "weights must be a simplex point, got ({w_pca}, {w_ae})"
            )));
        }
        Ok(EnsembleWeights { w_pca, w_ae })
    }

    pub fn balanced() -> EnsembleWeights {
        EnsembleWeights {
            w_pca: 0.5,
            w_ae: 0.5,
        }
    }
}

/// Which detector produced a timeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceTag {
    Pca,
    Ae,
    Ensemble,
}

impl SourceTag {
    pub fn name(&self) -> &'static str {
        match self {
            SourceTag::Pca => "pca",
            SourceTag::Ae => "ae",
            SourceTag::Ensemble => "ensemble",
        }
    }

    pub fn parse_name(name: &str) -> Result<Self> {
        match name {
            "pca" => Ok(SourceTag::Pca),
            "ae" => Ok(SourceTag::Ae),
            "ensemble" => Ok(SourceTag::Ensemble),
            other => Err(Error::FormatMismatch(format!("unknown source {other:?}"))),
        }
    }
}

/// A flagged per-second score series tagged with its producer; the unit the
/// recurrence stages consume.
#[derive(Clone, Debug)]
pub struct AnomalyTimeline {
    pub series: ScoreSeries,
    pub source: SourceTag,
}

impl AnomalyTimeline {
    pub fn start_epoch(&self) -> i64 {
        self.series.start_epoch
    }

    pub fn flags(&self) -> &[bool] {
        &self.series.flags
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "window_start_epoch,score,flag,source")?;
        for (i, &s) in self.series.scores.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                self.series.start_epoch + i as i64,
                s,
                self.series.flags[i],
                self.source.name()
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<AnomalyTimeline> {
        let mut scores = Vec::new();
        let mut flags = Vec::new();
        let mut start_epoch = None;
        let mut source = None;
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<timeline csv>", e))?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::FormatMismatch(format!(
                    "timeline row {} has {} fields",
                    n + 1,
                    fields.len()
                )));
            }
            let epoch: i64 = fields[0]
                .parse()
                .map_err(|_| Error::FormatMismatch(format!("bad epoch on row {}", n + 1)))?;
            let score: f64 = fields[1]
                .parse()
                .map_err(|_| Error::FormatMismatch(format!("bad score on row {}", n + 1)))?;
            let flag: bool = fields[2]
                .parse()
                .map_err(|_| Error::FormatMismatch(format!("bad flag on row {}", n + 1)))?;
            let tag = SourceTag::parse_name(fields[3])?;
            if start_epoch.is_none() {
                start_epoch = Some(epoch);
                source = Some(tag);
            }
            scores.push(score);
            flags.push(flag);
        }
        let start_epoch =
            start_epoch.ok_or_else(|| Error::EmptyInput("timeline csv has no rows".into()))?;
        let mut series = ScoreSeries::new(start_epoch, scores);
        series.flags = flags;
        Ok(AnomalyTimeline {
            series,
            source: source.unwrap(),
        })
    }
}

/// Median / IQR pair used to bring a score series onto a robust scale.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormParams {
    pub median: f64,
    pub iqr: f64,
}

impl NormParams {
    pub fn fit(scores: &[f64]) -> Result<NormParams> {
        if scores.is_empty() {
            return Err(Error::EmptyInput("cannot fit normalization on nothing".into()));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = percentile(&sorted, 50.0)?;
        let q1 = percentile(&sorted, 25.0)?;
        let q3 = percentile(&sorted, 75.0)?;
        let iqr = q3 - q1;
        Ok(NormParams {
            median,
            iqr: if iqr > 0.0 { iqr } else { 1.0 },
        })
    }

    /// (score - median) / iqr, clamped at zero below.
    pub fn apply(&self, score: f64) -> f64 {
        ((score - self.median) / self.iqr).max(0.0)
    }

    pub fn apply_all(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply(s)).collect()
    }
}

/// Robust-normalize a series against its own statistics.
pub fn normalize_scores(series: &ScoreSeries) -> Result<ScoreSeries> {
    if series.is_empty() {
        return Err(Error::EmptyInput("cannot normalize an empty series".into()));
    }
    let params = NormParams::fit(&series.scores)?;
    Ok(ScoreSeries::new(
        series.start_epoch,
        params.apply_all(&series.scores),
    ))
}

/// Weighted per-window sum of two normalized score series. The threshold is
/// left unset; calibrate it against a fused healthy hold-out exactly as the
/// base detectors do.
pub fn ensemble_score(
    pca_norm: &ScoreSeries,
    ae_norm: &ScoreSeries,
    weights: EnsembleWeights,
) -> Result<AnomalyTimeline> {
    if pca_norm.len() != ae_norm.len() {
        return Err(Error::Shape(format!(
            "series lengths differ: {} vs {}",
            pca_norm.len(),
            ae_norm.len()
        )));
    }
    if pca_norm.start_epoch != ae_norm.start_epoch {
        return Err(Error::Alignment(format!(
            "series start at {} vs {}",
            pca_norm.start_epoch, ae_norm.start_epoch
        )));
    }
    let fused: Vec<f64> = pca_norm
        .scores
        .iter()
        .zip(&ae_norm.scores)
        .map(|(&p, &a)| weights.w_pca * p + weights.w_ae * a)
        .collect();
    Ok(AnomalyTimeline {
        series: ScoreSeries::new(pca_norm.start_epoch, fused),
        source: SourceTag::Ensemble,
    })
}

/// Relative tolerance for calling two grid objectives a tie.
const TIE_REL_TOL: f64 = 1e-9;

/// Grid-search w_pca over {0, 0.05, .., 1} maximizing an unsupervised
/// contrast objective: mean of the top 5% fused scores over the median fused
/// score. Ties break toward the balanced point.
pub fn fit_weights(pca_norm: &[f64], ae_norm: &[f64]) -> Result<EnsembleWeights> {
    if pca_norm.is_empty() || ae_norm.is_empty() {
        return Ok(EnsembleWeights::balanced());
    }
    if pca_norm.len() != ae_norm.len() {
        return Err(Error::Shape(format!(
            "validation series lengths differ: {} vs {}",
            pca_norm.len(),
            ae_norm.len()
        )));
    }

    let mut best: Option<(f64, EnsembleWeights)> = None;
    for step in 0..=20u32 {
        let w_pca = step as f64 / 20.0;
        let w = EnsembleWeights {
            w_pca,
            w_ae: 1.0 - w_pca,
        };
        let fused: Vec<f64> = pca_norm
            .iter()
            .zip(ae_norm)
            .map(|(&p, &a)| w.w_pca * p + w.w_ae * a)
            .collect();
        let obj = contrast(&fused)?;
        best = Some(match best {
            None => (obj, w),
            Some((best_obj, best_w)) => {
                let tied = (obj - best_obj).abs() <= TIE_REL_TOL * best_obj.abs().max(1.0);
                if tied {
                    // prefer the candidate closest to (0.5, 0.5)
                    if (w.w_pca - 0.5).abs() < (best_w.w_pca - 0.5).abs() {
                        (best_obj, w)
                    } else {
                        (best_obj, best_w)
                    }
                } else if obj > best_obj {
                    (obj, w)
                } else {
                    (best_obj, best_w)
                }
            }
        });
    }
    Ok(best.unwrap().1)
}

/// (mean of top 5% scores) / (median + epsilon).
fn contrast(fused: &[f64]) -> Result<f64> {
    let mut sorted = fused.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = percentile(&sorted, 50.0)?;
    let top_count = (fused.len() as f64 * 0.05).ceil().max(1.0) as usize;
    let top_mean: f64 =
        sorted[sorted.len() - top_count..].iter().sum::<f64>() / top_count as f64;
    Ok(top_mean / (median + 1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_normalizes_to_zero() {
        let s = ScoreSeries::new(0, vec![3.0; 6]);
        let n = normalize_scores(&s).unwrap();
        assert!(n.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_hand_example() {
        let s = ScoreSeries::new(0, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let n = normalize_scores(&s).unwrap();
        assert_eq!(n.scores, vec![0.0, 0.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn single_element_normalizes_to_zero() {
        let s = ScoreSeries::new(0, vec![7.5]);
        let n = normalize_scores(&s).unwrap();
        assert_eq!(n.scores, vec![0.0]);
    }

    #[test]
    fn degenerate_weights_reproduce_inputs_bitwise() {
        let p = ScoreSeries::new(5, vec![0.0, 0.25, 2.0, 0.125]);
        let a = ScoreSeries::new(5, vec![1.0, 0.5, 0.0, 3.5]);
        let only_pca = ensemble_score(&p, &a, EnsembleWeights::new(1.0, 0.0).unwrap()).unwrap();
        let only_ae = ensemble_score(&p, &a, EnsembleWeights::new(0.0, 1.0).unwrap()).unwrap();
        for i in 0..p.len() {
            assert_eq!(only_pca.series.scores[i].to_bits(), p.scores[i].to_bits());
            assert_eq!(only_ae.series.scores[i].to_bits(), a.scores[i].to_bits());
        }
    }

    #[test]
    fn weighted_sum_hand_value() {
        let p = ScoreSeries::new(0, vec![2.0]);
        let a = ScoreSeries::new(0, vec![0.5]);
        let t = ensemble_score(&p, &a, EnsembleWeights::new(0.7, 0.3).unwrap()).unwrap();
        assert!((t.series.scores[0] - 1.55).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        let p = ScoreSeries::new(0, vec![1.0, 2.0]);
        let a = ScoreSeries::new(0, vec![1.0]);
        assert!(matches!(
            ensemble_score(&p, &a, EnsembleWeights::balanced()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn weights_validated() {
        assert!(EnsembleWeights::new(0.6, 0.4).is_ok());
        assert!(EnsembleWeights::new(0.6, 0.6).is_err());
        assert!(EnsembleWeights::new(-0.1, 1.1).is_err());
    }

    #[test]
    fn fit_weights_prefers_contrastful_detector() {
        // PCA constant (zero contrast), AE spiky: weight goes to the AE.
        let pca: Vec<f64> = vec![0.0; 100];
        let mut ae: Vec<f64> = vec![0.1; 100];
        ae[10] = 8.0;
        ae[60] = 9.0;
        let w = fit_weights(&pca, &ae).unwrap();
        assert!(w.w_ae >= 0.5, "w_ae = {}", w.w_ae);
    }

    #[test]
    fn fit_weights_tie_breaks_balanced() {
        let s: Vec<f64> = (0..50).map(|i| (i % 7) as f64 * 0.3).collect();
        let w = fit_weights(&s, &s.clone()).unwrap();
        assert_eq!(w.w_pca, 0.5);
        assert_eq!(w.w_ae, 0.5);
    }

    #[test]
    fn fit_weights_empty_defaults_balanced() {
        let w = fit_weights(&[], &[]).unwrap();
        assert_eq!(w, EnsembleWeights::balanced());
    }

    #[test]
    fn fit_weights_always_simplex() {
        let mut rng = crate::rng::Rng::new(17);
        for _ in 0..50 {
            let p: Vec<f64> = (0..40).map(|_| rng.next_f64() * 3.0).collect();
            let a: Vec<f64> = (0..40).map(|_| rng.next_f64() * 0.5).collect();
            let w = fit_weights(&p, &a).unwrap();
            assert!(w.w_pca >= 0.0 && w.w_ae >= 0.0);
            assert!((w.w_pca + w.w_ae - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_in_each_input() {
        let w = EnsembleWeights::new(0.3, 0.7).unwrap();
        let p = ScoreSeries::new(0, vec![1.0, 2.0]);
        let a = ScoreSeries::new(0, vec![0.5, 0.25]);
        let base = ensemble_score(&p, &a, w).unwrap();
        let p2 = ScoreSeries::new(0, vec![1.5, 2.0]);
        let bumped = ensemble_score(&p2, &a, w).unwrap();
        assert!(bumped.series.scores[0] >= base.series.scores[0]);
        assert_eq!(bumped.series.scores[1], base.series.scores[1]);
    }

    #[test]
    fn flags_invariant_under_positive_scaling() {
        // Scaling all raw scores by a power of two survives normalization
        // and recalibration bit-exactly.
        let raw: Vec<f64> = vec![0.5, 1.25, 0.75, 8.0, 0.25, 1.0, 0.125, 4.5];
        let scaled: Vec<f64> = raw.iter().map(|&v| v * 1024.0).collect();
        let mut s1 = normalize_scores(&ScoreSeries::new(0, raw)).unwrap();
        let mut s2 = normalize_scores(&ScoreSeries::new(0, scaled)).unwrap();
        let t1 = crate::score::calibrate_threshold(&s1.scores, 75.0).unwrap();
        let t2 = crate::score::calibrate_threshold(&s2.scores, 75.0).unwrap();
        s1.set_threshold(t1);
        s2.set_threshold(t2);
        assert_eq!(s1.flags, s2.flags);
    }

    #[test]
    fn timeline_csv_round_trip() {
        let mut series = ScoreSeries::new(100, vec![0.1, 0.9, 0.4]);
        series.set_threshold(0.5);
        let t = AnomalyTimeline {
            series,
            source: SourceTag::Ensemble,
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = AnomalyTimeline::read_csv(&buf[..]).unwrap();
        assert_eq!(back.source, SourceTag::Ensemble);
        assert_eq!(back.series.scores, t.series.scores);
        assert_eq!(back.series.flags, t.series.flags);
        assert_eq!(back.start_epoch(), 100);
    }
}
