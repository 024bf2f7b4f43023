//! Acceptance suite. Each test covers one acceptance criterion, pins its
//! stated tolerance, and prints one PASS line (run with `-- --nocapture` to
//! see them on success).

use std::time::Instant;

use logsift_core::autoencoder::{
    custom_loss, train, Activation, AutoencoderModel, InputScaler, LossParams, TrainHyper,
};
use logsift_core::ensemble::{ensemble_score, fit_weights, EnsembleWeights, NormParams};
use logsift_core::eval::{evaluate, ppr, tpr, EvalReport};
use logsift_core::ingest::{
    parse_lines, window_counts, LogEvent, TemplateCatalog, TimestampFormat, WindowMatrix,
};
use logsift_core::pca::PcaModel;
use logsift_core::recurrence::{
    detect_peaks, run_recurrence, DenseRegion, PeakConfig, RecurrenceConfig,
};
use logsift_core::rng::Rng;
use logsift_core::score::{calibrate_threshold, ScoreSeries};
use logsift_core::synth::{generate, GroundTruth, InjectionSpec, RecurringSpec, TransientSpec};

// ---------------------------------------------------------------------
// shared helpers
// ---------------------------------------------------------------------

/// Build a WindowMatrix through the public ingestion path from count rows.
fn matrix_from_rows(rows: &[Vec<u32>]) -> WindowMatrix {
    let mut events = Vec::new();
    for (sec, row) in rows.iter().enumerate() {
        for (tpl, &count) in row.iter().enumerate() {
            for _ in 0..count {
                events
                    .push(LogEvent::new(sec as f64, format!("unit tpl{tpl} event"), None).unwrap());
            }
        }
    }
    let mut catalog = TemplateCatalog::new();
    for tpl in 0..rows[0].len() {
        catalog.templatize(&format!("unit tpl{tpl} event")).unwrap();
    }
    let m = window_counts(&events, &mut catalog).unwrap();
    assert_eq!(m.rows(), rows.len(), "fixture rows must be non-empty at the edges");
    m
}

// ---------------------------------------------------------------------
// criterion 1: eigen-oracle equivalence
// ---------------------------------------------------------------------

/// Independent oracle: centered covariance by direct accumulation.
fn oracle_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for row in rows {
        for (j, &v) in row.iter().enumerate() {
            mean[j] += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut c = vec![vec![0.0; d]; d];
    for row in rows {
        for i in 0..d {
            for j in 0..d {
                c[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    c
}

/// Independent oracle: brute-force cyclic Jacobi eigensolver for symmetric
/// matrices. Entirely separate from the one-sided SVD route under test.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    let scale: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    for _sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
    eig
}

#[test]
fn criterion_01_eigen_oracle_equivalence() {
    let started = Instant::now();
    // guard: the oracle must solve a known spectrum by itself
    let known = jacobi_eigenvalues(vec![vec![2.0, 2.0], vec![2.0, 2.0]]);
    assert!((known[0] - 4.0).abs() < 1e-12 && known[1].abs() < 1e-12);

    let mut rng = Rng::new(0xE16E);
    for case in 0..100 {
        let n = 2 + (rng.below(7) as usize); // 2..=8 observations
        let d = 1 + (rng.below(8) as usize); // 1..=8 templates
        let mut rows: Vec<Vec<u32>> = (0..n)
            .map(|_| (0..d).map(|_| rng.below(40) as u32).collect())
            .collect();
        // keep the first and last second non-empty so the window span is exact
        rows[0][0] = rows[0][0].max(1);
        rows[n - 1][0] = rows[n - 1][0].max(1);
        let matrix = matrix_from_rows(&rows);

        let model = PcaModel::fit(&matrix, 1.0).unwrap();
        let float_rows: Vec<Vec<f64>> = (0..matrix.rows()).map(|r| matrix.row_f64(r)).collect();
        let oracle = jacobi_eigenvalues(oracle_covariance(&float_rows));

        let lam_max = oracle[0].abs().max(1.0);
        for (i, (&got, &want)) in model.eigenvalues.iter().zip(&oracle).enumerate() {
            assert!(
                (got - want).abs() <= 1e-6 * lam_max,
                "case {case}: eigenvalue {i}: svd route {got} vs jacobi oracle {want}"
            );
        }

        // full-rank reconstruction: training rows have SPE <= 1e-9
        for r in 0..matrix.rows() {
            let spe = model.spe_row(&matrix.row_f64(r)).unwrap();
            assert!(spe <= 1e-9, "case {case}: row {r} residual {spe}");
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("PASS criterion 1: eigen oracle equivalence on 100 random matrices ({elapsed:?})");
}

// ---------------------------------------------------------------------
// criterion 2: gradient correctness
// ---------------------------------------------------------------------

#[test]
fn criterion_02_gradient_check() {
    let started = Instant::now();
    let data = matrix_from_rows(&[
        vec![1, 2, 1],
        vec![2, 4, 1],
        vec![3, 1, 2],
        vec![1, 3, 4],
        vec![2, 2, 3],
    ]);
    let pca = PcaModel::fit(&data, 0.95).unwrap();
    let params = LossParams::new(1.0, 0.7).unwrap();

    // Find a seeded configuration away from every kink: no ReLU
    // pre-activation, reconstruction-error coordinate or projected-error
    // coordinate within 1e-3 of zero.
    let mut chosen = None;
    'seeds: for seed in 0..2000u64 {
        let model = AutoencoderModel::with_dims(
            vec![3, 2, 1, 2, 3],
            Activation::Relu,
            InputScaler::identity(3),
            seed,
        )
        .unwrap();
        let mut xr = Rng::new(seed ^ 0x517E);
        let x: Vec<f64> = (0..3).map(|_| 0.15 + 0.7 * xr.next_f64()).collect();
        let pass = model.forward(&x).unwrap();
        for z in pass.preacts.iter().take(pass.preacts.len() - 1) {
            if z.iter().any(|v| v.abs() <= 1e-3) {
                continue 'seeds;
            }
        }
        let x_hat = pass.reconstruction();
        if x.iter().zip(x_hat).any(|(a, b)| (a - b).abs() <= 1e-3) {
            continue 'seeds;
        }
        let px = pca.project_row(&x).unwrap();
        let ph = pca.project_row(x_hat).unwrap();
        if px.iter().zip(&ph).any(|(a, b)| (a - b).abs() <= 1e-3) {
            continue 'seeds;
        }
        chosen = Some((model, x));
        break;
    }
    let (model, x) = chosen.expect("no kink-free configuration found");

    let (grads, _) = model.gradients(&x, &pca, &params).unwrap();
    let eps = 1e-5;
    let mut checked = 0usize;
    let loss_with = |m: &AutoencoderModel| {
        custom_loss(&x, m.forward(&x).unwrap().reconstruction(), &pca, &params).unwrap()
    };
    for l in 0..model.layers.len() {
        let (rows, cols) = (model.layers[l].w.rows(), model.layers[l].w.cols());
        for r in 0..rows {
            for c in 0..cols {
                let orig = model.layers[l].w.get(r, c);
                let mut plus = model.clone();
                plus.layers[l].w.set(r, c, orig + eps);
                let mut minus = model.clone();
                minus.layers[l].w.set(r, c, orig - eps);
                let numeric = (loss_with(&plus) - loss_with(&minus)) / (2.0 * eps);
                let analytic = grads[l].dw.get(r, c);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    rel <= 1e-4,
                    "w[{l}][{r}][{c}]: analytic {analytic} vs numeric {numeric} (rel {rel})"
                );
                checked += 1;
            }
        }
        for b in 0..model.layers[l].b.len() {
            let orig = model.layers[l].b[b];
            let mut plus = model.clone();
            plus.layers[l].b[b] = orig + eps;
            let mut minus = model.clone();
            minus.layers[l].b[b] = orig - eps;
            let numeric = (loss_with(&plus) - loss_with(&minus)) / (2.0 * eps);
            let analytic = grads[l].db[b];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                rel <= 1e-4,
                "b[{l}][{b}]: analytic {analytic} vs numeric {numeric} (rel {rel})"
            );
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("PASS criterion 2: {checked} analytic gradients match central differences ({elapsed:?})");
}

// ---------------------------------------------------------------------
// criterion 3: loss contracts
// ---------------------------------------------------------------------

#[test]
fn criterion_03_loss_contracts() {
    let m = matrix_from_rows(&[vec![0, 1], vec![2, 3]]);
    let toy_pca = PcaModel::fit(&m, 0.95).unwrap();

    // alpha-only hand example
    let alpha_only = LossParams::new(1.0, 0.0).unwrap();
    let l = custom_loss(&[1.0, 0.0], &[0.5, 0.5], &toy_pca, &alpha_only).unwrap();
    assert!((l - 1.0).abs() <= 1e-9, "alpha-only loss {l}");

    // beta-only hand example against the mean-[1,2] single-component model
    let beta_only = LossParams::new(0.0, 1.0).unwrap();
    let l = custom_loss(&[2.0, 3.0], &[2.0, 1.0], &toy_pca, &beta_only).unwrap();
    assert!((l - 2f64.sqrt()).abs() <= 1e-9, "beta-only loss {l}");

    // zero iff equal when alpha > 0
    let both = LossParams::new(1.0, 0.5).unwrap();
    assert_eq!(custom_loss(&[2.0, 3.0], &[2.0, 3.0], &toy_pca, &both).unwrap(), 0.0);
    let mut rng = Rng::new(33);
    for _ in 0..200 {
        let x = [rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0)];
        let mut x_hat = x;
        let coord = rng.below(2) as usize;
        x_hat[coord] += rng.uniform(1e-6, 1.0) * if rng.below(2) == 0 { 1.0 } else { -1.0 };
        let l = custom_loss(&x, &x_hat, &toy_pca, &both).unwrap();
        assert!(l > 0.0, "loss must be positive for x != x_hat");
    }
    println!("PASS criterion 3: custom-loss contracts and hand examples reproduce to 1e-9");
}

// ---------------------------------------------------------------------
// criterion 4: peak-detection oracle
// ---------------------------------------------------------------------

/// Independent transcription of the published robust z-score pseudocode:
/// explicit filteredY / avgFilter / stdFilter arrays, population std.
fn reference_peaks(y: &[f64], lag: usize, threshold: f64, influence: f64) -> Vec<bool> {
    let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
    let pop_std = |w: &[f64]| {
        let m = mean(w);
        (w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / w.len() as f64).sqrt()
    };
    let n = y.len();
    let mut signals = vec![0i8; n];
    let mut filtered_y = y.to_vec();
    let mut avg_filter = vec![0.0; n];
    let mut std_filter = vec![0.0; n];
    avg_filter[lag - 1] = mean(&y[0..lag]);
    std_filter[lag - 1] = pop_std(&y[0..lag]);
    for i in lag..n {
        if (y[i] - avg_filter[i - 1]).abs() > threshold * std_filter[i - 1] {
            signals[i] = if y[i] > avg_filter[i - 1] { 1 } else { -1 };
            filtered_y[i] = influence * y[i] + (1.0 - influence) * filtered_y[i - 1];
        } else {
            signals[i] = 0;
            filtered_y[i] = y[i];
        }
        avg_filter[i] = mean(&filtered_y[i + 1 - lag..=i]);
        std_filter[i] = pop_std(&filtered_y[i + 1 - lag..=i]);
    }
    signals.iter().map(|&s| s != 0).collect()
}

#[test]
fn criterion_04_peak_detection_oracle() {
    let started = Instant::now();

    // 30-point fixture with spikes, dips and a plateau
    let fixture = [
        1.0, 1.1, 0.9, 1.0, 1.05, 1.0, 0.95, 1.1, 1.0, 0.9, 5.5, 1.0, 1.1, 0.9, 1.0, 1.0, 6.0,
        6.2, 5.9, 1.0, 0.9, 1.05, 1.0, -3.0, 1.0, 1.1, 0.95, 1.0, 1.02, 0.98,
    ];
    let cfg = PeakConfig {
        lag: 5,
        z_threshold: 3.0,
        influence: 0.5,
    };
    let got = detect_peaks(&fixture, &cfg).unwrap();
    let want = reference_peaks(&fixture, cfg.lag, cfg.z_threshold, cfg.influence);
    assert_eq!(got, want, "30-point fixture disagrees with the reference");
    assert!(got.iter().any(|&s| s), "fixture should contain signals");

    // 1000 random series, length 100, lag 5, varying z and influence
    let z_grid = [2.0, 2.5, 3.0, 5.0];
    let influence_grid = [0.0, 0.25, 0.5, 1.0];
    let mut rng = Rng::new(0xB12A);
    for case in 0..1000 {
        let series: Vec<f64> = (0..100)
            .map(|_| {
                let base = rng.next_f64();
                if rng.below(12) == 0 {
                    base + rng.uniform(2.0, 8.0)
                } else {
                    base
                }
            })
            .collect();
        let cfg = PeakConfig {
            lag: 5,
            z_threshold: z_grid[case % z_grid.len()],
            influence: influence_grid[(case / z_grid.len()) % influence_grid.len()],
        };
        let got = detect_peaks(&series, &cfg).unwrap();
        let want = reference_peaks(&series, cfg.lag, cfg.z_threshold, cfg.influence);
        assert_eq!(got, want, "case {case} disagrees with the reference");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("PASS criterion 4: peak detector matches the reference on the fixture and 1000 random series ({elapsed:?})");
}

// ---------------------------------------------------------------------
// criteria 5 and 6: fixture pipeline
// ---------------------------------------------------------------------

struct FixtureRun {
    truth: GroundTruth,
    regions: Vec<DenseRegion>,
    report: EvalReport,
}

fn default_fixture_spec() -> InjectionSpec {
    InjectionSpec {
        total_seconds: 3600,
        start_epoch: 1_700_000_000,
        base_rates: vec![5.0, 4.0, 3.0, 2.5, 2.0, 1.5],
        recurring: vec![RecurringSpec {
            start_s: 630,
            period_s: 675,
            burst_s: 120, // five 2-minute episodes fit in the hour: 10 minutes total
            rate_multiplier: 10.0,
            error_rate: 20.0,
        }],
        transients: vec![
            TransientSpec {
                start_s: 300,
                duration_s: 8,
                rate_multiplier: 10.0,
                error_rate: 15.0,
            },
            TransientSpec {
                start_s: 1580,
                duration_s: 10,
                rate_multiplier: 10.0,
                error_rate: 15.0,
            },
            TransientSpec {
                start_s: 2450,
                duration_s: 15,
                rate_multiplier: 10.0,
                error_rate: 15.0,
            },
        ],
        noise_spikes: 50,
        noise_multiplier: 15.0,
        min_duration_s: 30,
        seed: 202,
    }
}

fn run_fixture_pipeline() -> FixtureRun {
    let test_spec = default_fixture_spec();
    let healthy_spec = InjectionSpec::healthy(
        3600,
        1_699_990_000,
        test_spec.base_rates.clone(),
        101,
    );
    let (train_text, _) = generate(&healthy_spec).unwrap();
    let (test_text, truth) = generate(&test_spec).unwrap();

    let train_log = parse_lines(train_text.as_bytes(), TimestampFormat::EpochFloat).unwrap();
    let test_log = parse_lines(test_text.as_bytes(), TimestampFormat::EpochFloat).unwrap();

    // one catalog across both corpora so novel test templates become
    // zero-variance training columns
    let mut catalog = TemplateCatalog::new();
    for ev in train_log.events.iter().chain(&test_log.events) {
        catalog.templatize(&ev.message).unwrap();
    }
    let train_matrix = window_counts(&train_log.events, &mut catalog).unwrap();
    let test_matrix = window_counts(&test_log.events, &mut catalog).unwrap();
    assert!(catalog.len() <= 50);

    let split = train_matrix.rows() * 4 / 5;
    let fit_part = train_matrix.slice_rows(0, split);
    let holdout = train_matrix.slice_rows(split, train_matrix.rows());

    let pca = PcaModel::fit(&fit_part, 0.95).unwrap();
    let params = LossParams::new(1.0, 0.5).unwrap();
    let hyper = TrainHyper {
        epochs: 150,
        batch_size: 32,
        learning_rate: 0.01,
        seed: 7,
        hidden: None,
    };
    let (ae, train_report) = train(&fit_part, &pca, &params, &hyper).unwrap();
    assert!(train_report.final_loss.is_finite());

    let pca_hold = pca.score(&holdout).unwrap();
    let pca_test = pca.score(&test_matrix).unwrap();
    let ae_hold = ae.score_custom(&pca, &params, &holdout).unwrap();
    let ae_test = ae.score_custom(&pca, &params, &test_matrix).unwrap();

    let pca_norm = NormParams::fit(&pca_hold.scores).unwrap();
    let ae_norm = NormParams::fit(&ae_hold.scores).unwrap();
    let weights = fit_weights(
        &pca_norm.apply_all(&pca_hold.scores),
        &ae_norm.apply_all(&ae_hold.scores),
    )
    .unwrap();

    let fused_hold: Vec<f64> = pca_norm
        .apply_all(&pca_hold.scores)
        .iter()
        .zip(ae_norm.apply_all(&ae_hold.scores))
        .map(|(&p, a)| weights.w_pca * p + weights.w_ae * a)
        .collect();
    let threshold = calibrate_threshold(&fused_hold, 98.0).unwrap();

    let pca_test_n = ScoreSeries::new(test_matrix.start_epoch, pca_norm.apply_all(&pca_test.scores));
    let ae_test_n = ScoreSeries::new(test_matrix.start_epoch, ae_norm.apply_all(&ae_test.scores));
    let mut timeline = ensemble_score(&pca_test_n, &ae_test_n, weights).unwrap();
    timeline.series.set_threshold(threshold);

    let cfg = RecurrenceConfig::default();
    let peak = PeakConfig::default();
    let regions = run_recurrence(&timeline, &cfg, &peak).unwrap();
    let report = evaluate(&timeline, &regions, &truth, &cfg, &peak).unwrap();
    FixtureRun {
        truth,
        regions,
        report,
    }
}

#[test]
fn criterion_05_recurrence_pipeline_behavior() {
    let started = Instant::now();
    let run = run_fixture_pipeline();

    assert!(!run.regions.is_empty(), "no recurring regions retained");

    let covered_true = run
        .truth
        .true_anomaly_seconds
        .iter()
        .filter(|&&s| run.regions.iter().any(|r| r.contains(s)))
        .count();
    let total_true = run.truth.true_anomaly_seconds.len();
    assert!(
        covered_true as f64 >= 0.9 * total_true as f64,
        "regions cover {covered_true}/{total_true} recurring seconds"
    );

    // transient-only regions are gone: no surviving region touches a
    // transient second, and every region overlaps the recurring anomaly
    for r in &run.regions {
        assert!(
            !run.truth.transient_seconds.iter().any(|&s| r.contains(s)),
            "region {r:?} covers a transient second"
        );
        assert!(
            run.truth.true_anomaly_seconds.iter().any(|&s| r.contains(s)),
            "region {r:?} covers no recurring second"
        );
    }

    assert!(
        run.report.ppr >= 50.0,
        "ppr {:.2}% below 50%",
        run.report.ppr
    );
    assert!(
        run.report.tpr <= 10.0,
        "tpr {:.2}% above 10%",
        run.report.tpr
    );

    // deterministic under seed: a full re-run reproduces regions and metrics
    let again = run_fixture_pipeline();
    assert_eq!(run.regions, again.regions);
    assert_eq!(run.report.ppr.to_bits(), again.report.ppr.to_bits());
    assert_eq!(run.report.tpr.to_bits(), again.report.tpr.to_bits());

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "PASS criterion 5: pipeline covers {covered_true}/{total_true} recurring seconds, ppr {:.2}%, tpr {:.2}% ({elapsed:?})",
        run.report.ppr, run.report.tpr
    );
}

#[test]
fn criterion_06_stage_monotonicity() {
    let run = run_fixture_pipeline();
    let stages = &run.report.stages;
    assert_eq!(stages.len(), 3);
    assert_eq!(stages[0].stage, "high_frequency");
    assert_eq!(stages[1].stage, "dense");
    assert_eq!(stages[2].stage, "duration");

    for pair in stages.windows(2) {
        assert!(
            pair[1].surviving_pseudo <= pair[0].surviving_pseudo,
            "pseudo counts increased: {stages:?}"
        );
    }
    let duration_ppr = stages[2].ppr;
    assert!(
        duration_ppr >= stages[0].ppr && duration_ppr >= stages[1].ppr,
        "duration filtering ppr {duration_ppr:.2}% is not maximal: {stages:?}"
    );
    println!(
        "PASS criterion 6: stage pseudo counts {} -> {} -> {}; duration ppr {:.2}% maximal",
        stages[0].surviving_pseudo, stages[1].surviving_pseudo, stages[2].surviving_pseudo,
        duration_ppr
    );
}

// ---------------------------------------------------------------------
// criterion 7: ensemble identities
// ---------------------------------------------------------------------

#[test]
fn criterion_07_ensemble_identities() {
    let mut rng = Rng::new(0x53B1);

    // degenerate weights reproduce the base series bit-exactly
    for _ in 0..100 {
        let n = 5 + rng.below(60) as usize;
        let p = ScoreSeries::new(0, (0..n).map(|_| rng.next_f64() * 4.0).collect());
        let a = ScoreSeries::new(0, (0..n).map(|_| rng.next_f64() * 0.3).collect());
        let only_p = ensemble_score(&p, &a, EnsembleWeights::new(1.0, 0.0).unwrap()).unwrap();
        let only_a = ensemble_score(&p, &a, EnsembleWeights::new(0.0, 1.0).unwrap()).unwrap();
        for i in 0..n {
            assert_eq!(only_p.series.scores[i].to_bits(), p.scores[i].to_bits());
            assert_eq!(only_a.series.scores[i].to_bits(), a.scores[i].to_bits());
        }
    }

    // fit_weights always lands on the simplex
    for _ in 0..100 {
        let n = 10 + rng.below(50) as usize;
        let p: Vec<f64> = (0..n).map(|_| rng.next_f64() * rng.uniform(0.1, 9.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.next_f64() * rng.uniform(0.1, 9.0)).collect();
        let w = fit_weights(&p, &a).unwrap();
        assert!(w.w_pca >= 0.0 && w.w_ae >= 0.0);
        assert!((w.w_pca + w.w_ae - 1.0).abs() <= 1e-12);
    }

    // 1000 random single-coordinate raises never lower the fused score
    for _ in 0..1000 {
        let n = 4 + rng.below(30) as usize;
        let w_pca = (rng.below(21) as f64) / 20.0;
        let w = EnsembleWeights::new(w_pca, 1.0 - w_pca).unwrap();
        let p: Vec<f64> = (0..n).map(|_| rng.next_f64() * 2.0).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.next_f64() * 2.0).collect();
        let ps = ScoreSeries::new(0, p.clone());
        let as_ = ScoreSeries::new(0, a.clone());
        let base = ensemble_score(&ps, &as_, w).unwrap();

        let idx = rng.below(n as u64) as usize;
        let bump = rng.uniform(0.0, 3.0);
        let (p2, a2) = if rng.below(2) == 0 {
            let mut p2 = p.clone();
            p2[idx] += bump;
            (p2, a.clone())
        } else {
            let mut a2 = a.clone();
            a2[idx] += bump;
            (p.clone(), a2)
        };
        let bumped = ensemble_score(&ScoreSeries::new(0, p2), &ScoreSeries::new(0, a2), w).unwrap();
        assert!(
            bumped.series.scores[idx] >= base.series.scores[idx],
            "raising an input lowered the ensemble score"
        );
    }
    println!("PASS criterion 7: ensemble identities, simplex invariant, monotone on 1000 perturbations");
}

// ---------------------------------------------------------------------
// criterion 8: metric arithmetic
// ---------------------------------------------------------------------

#[test]
fn criterion_08_metric_arithmetic() {
    assert_eq!(ppr(100, 70).unwrap(), 30.0);
    assert_eq!(tpr(64, 49).unwrap(), 23.4375);
    assert_eq!(ppr(100, 100).unwrap(), 0.0);
    assert_eq!(ppr(100, 0).unwrap(), 100.0);
    assert_eq!(ppr(0, 0).unwrap(), 0.0);
    assert_eq!(tpr(0, 0).unwrap(), 0.0);
    assert_eq!(tpr(17, 17).unwrap(), 0.0);
    assert!(ppr(3, 4).is_err());
    println!("PASS criterion 8: ppr/tpr arithmetic exact on all unit examples");
}

// ---------------------------------------------------------------------
// criterion 9: ingestion conservation
// ---------------------------------------------------------------------

#[test]
fn criterion_09_ingestion_conservation() {
    let spec = InjectionSpec::healthy(3600, 1_700_000_000, vec![1.5, 1.0, 0.8], 77);
    let (text, _) = generate(&spec).unwrap();
    let parsed = parse_lines(text.as_bytes(), TimestampFormat::EpochFloat).unwrap();
    assert!(
        parsed.events.len() >= 10_000,
        "fixture produced only {} lines",
        parsed.events.len()
    );
    assert_eq!(parsed.report.skipped, 0);

    let mut catalog = TemplateCatalog::new();
    for ev in &parsed.events {
        catalog.templatize(&ev.message).unwrap();
    }
    let matrix = window_counts(&parsed.events, &mut catalog.clone()).unwrap();
    assert_eq!(matrix.total(), parsed.events.len() as u64);

    let mut shuffled = parsed.events.clone();
    Rng::new(5).shuffle(&mut shuffled);
    let matrix_shuffled = window_counts(&shuffled, &mut catalog.clone()).unwrap();
    assert_eq!(matrix, matrix_shuffled);
    println!(
        "PASS criterion 9: {} events conserved in the window matrix; shuffle invariant",
        parsed.events.len()
    );
}

// ---------------------------------------------------------------------
// supporting check: the fixture timeline reaches the recurrence stage with
// sane flag volumes (not a numbered criterion; keeps failures legible)
// ---------------------------------------------------------------------

#[test]
fn fixture_flags_are_plausible() {
    let run = run_fixture_pipeline();
    let initial = run.report.initial_flags;
    assert!(
        initial as usize >= run.truth.true_anomaly_seconds.len() / 2,
        "too few initial flags: {initial}"
    );
    // the detectors must flag most recurring seconds to begin with
    assert!(
        run.report.initial_true as f64 >= 0.8 * run.truth.true_anomaly_seconds.len() as f64,
        "initial true flags {} of {}",
        run.report.initial_true,
        run.truth.true_anomaly_seconds.len()
    );
}

