//! Fully-connected autoencoder detector: three encoder and three decoder
//! layers, trained from scratch with mini-batch SGD on a custom loss that
//! combines per-coordinate L1 reconstruction error with the L1 distance
//! between the PCA projections of the input and its reconstruction.
//!
//! Hidden layers use ReLU; the final decoder is linear so reconstructions
//! are not range-limited. Inputs are min-max scaled per column from the
//! training data. Everything is seeded and single-threaded, so training is
//! bit-reproducible.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::WindowMatrix;
use crate::linalg::Mat;
use crate::pca::PcaModel;
use crate::rng::Rng;
use crate::score::ScoreSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Subgradient; ReLU uses 0 at the kink.
    fn deriv(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidParameter(format!(
                "unknown activation {other:?}"
            ))),
        }
    }
}

/// Per-column min-max scaling fit on training data. Out-of-range test
/// values clamp to [0, 1]. Zero-range columns sit at 0.5 so that novel
/// activity on a column that was silent during training still moves the
/// input, and so a constant target is a nonzero learning signal.
#[derive(Clone, Debug, PartialEq)]
pub struct InputScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl InputScaler {
    pub fn fit(matrix: &WindowMatrix) -> InputScaler {
        let d = matrix.num_templates();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in 0..matrix.rows() {
            for (j, &c) in matrix.row(r).iter().enumerate() {
                let v = c as f64;
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        InputScaler { min, max }
    }

    /// Identity-range scaler for hand-built toy models.
    pub fn identity(d: usize) -> InputScaler {
        InputScaler {
            min: vec![0.0; d],
            max: vec![1.0; d],
        }
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.min.len() {
            return Err(Error::Shape(format!(
                "row has {} columns, scaler has {}",
                row.len(),
                self.min.len()
            )));
        }
        Ok(row
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                let range = hi - lo;
                let v = if range > 0.0 {
                    (x - lo) / range
                } else {
                    0.5 + (x - lo)
                };
                v.clamp(0.0, 1.0)
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct Layer {
    /// out x in weight matrix.
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Layer {
    fn out_dim(&self) -> usize {
        self.w.rows()
    }

    fn in_dim(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Clone, Debug)]
pub struct AutoencoderModel {
    /// Symmetric chain [d, h1, .., bottleneck, .., h1, d].
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub scaler: InputScaler,
}

/// Default widths: a geometric bottleneck in the input dimension. The
/// bottleneck is clamped below both d and h2 so tiny template spaces still
/// reduce dimensionality.
pub fn default_layer_dims(d: usize) -> Vec<usize> {
    if d <= 1 {
        return vec![1; 7];
    }
    let h1 = d.div_ceil(2);
    let h2 = d.div_ceil(4);
    let h3 = d.div_ceil(8).max(2).min(h2).min(d - 1).max(1);
    vec![d, h1, h2, h3, h2, h1, d]
}

/// Everything `train` needs besides the data.
#[derive(Clone, Debug)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Optional override of the three encoder widths [h1, h2, h3].
    pub hidden: Option<[usize; 3]>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.01,
            seed: 7,
            hidden: None,
        }
    }
}

/// alpha weights the raw reconstruction term, beta the projected term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    pub alpha: f64,
    pub beta: f64,
}

impl LossParams {
    pub fn new(alpha: f64, beta: f64) -> Result<LossParams> {
        if alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "loss weights must be non-negative with a positive sum, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(LossParams { alpha, beta })
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs_run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Full forward pass bookkeeping for backprop and inspection.
pub struct ForwardPass {
    /// activations[0] is the input; activations[L] the reconstruction.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pub preacts: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn reconstruction(&self) -> &[f64] {
        self.activations.last().unwrap()
    }

    /// Bottleneck output (the deepest encoder activation).
    pub fn code(&self) -> &[f64] {
        let mid = (self.activations.len() - 1) / 2;
        &self.activations[mid]
    }
}

/// Mean squared error between a vector and its reconstruction.
pub fn reconstruction_error(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Shape(format!(
            "reconstruction has {} dims, input {}",
            x_hat.len(),
            x.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("empty vectors".into()));
    }
    let sum: f64 = x
        .iter()
        .zip(x_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// Custom training loss: sum_j alpha*|x_j - xhat_j| plus
/// sum_c beta*|proj(x)_c - proj(xhat)_c| over the model's k components.
pub fn custom_loss(x: &[f64], x_hat: &[f64], pca: &PcaModel, params: &LossParams) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Shape(format!(
            "reconstruction has {} dims, input {}",
            x_hat.len(),
            x.len()
        )));
    }
    let mut loss = 0.0;
    if params.alpha > 0.0 {
        loss += params.alpha * x.iter().zip(x_hat).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    if params.beta > 0.0 {
        let px = pca.project_row(x)?;
        let ph = pca.project_row(x_hat)?;
        loss += params.beta * px.iter().zip(&ph).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(loss)
}

pub struct LayerGrad {
    pub dw: Mat,
    pub db: Vec<f64>,
}

impl AutoencoderModel {
    /// Seeded Xavier-uniform initialization over an explicit layer chain.
    /// The chain must be an odd-length palindrome (equal encoder and
    /// decoder counts); production models use the 7-entry default chain.
    pub fn with_dims(
        layer_dims: Vec<usize>,
        activation: Activation,
        scaler: InputScaler,
        seed: u64,
    ) -> Result<AutoencoderModel> {
        validate_dims(&layer_dims)?;
        if scaler.min.len() != layer_dims[0] {
            return Err(Error::Shape(format!(
                "scaler covers {} columns, input dim is {}",
                scaler.min.len(),
                layer_dims[0]
            )));
        }
        let mut rng = Rng::new(seed);
        let mut layers = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Mat::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    w.set(r, c, rng.uniform(-limit, limit));
                }
            }
            layers.push(Layer {
                w,
                b: vec![0.0; fan_out],
            });
        }
        Ok(AutoencoderModel {
            layer_dims,
            layers,
            activation,
            scaler,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn bottleneck_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() / 2]
    }

    /// Forward pass over an already-scaled input vector.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} dims, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut preacts = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = activations.last().unwrap();
            let mut z = layer.b.clone();
            for (r, zr) in z.iter_mut().enumerate() {
                let wrow = layer.w.row(r);
                let mut acc = 0.0;
                for (wv, av) in wrow.iter().zip(input) {
                    acc += wv * av;
                }
                *zr += acc;
            }
            let act = if l == last {
                Activation::Identity
            } else {
                self.activation
            };
            let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            preacts.push(z);
            activations.push(a);
        }
        Ok(ForwardPass {
            activations,
            preacts,
        })
    }

    /// Analytic gradients of `custom_loss(x, forward(x))` for every layer,
    /// treating the PCA projection as a fixed linear map.
    pub fn gradients(
        &self,
        x: &[f64],
        pca: &PcaModel,
        params: &LossParams,
    ) -> Result<(Vec<LayerGrad>, f64)> {
        let pass = self.forward(x)?;
        let x_hat = pass.reconstruction();
        let loss = custom_loss(x, x_hat, pca, params)?;

        // dL/d x_hat
        let d = x.len();
        let mut g = vec![0.0; d];
        if params.alpha > 0.0 {
            for j in 0..d {
                g[j] -= params.alpha * sign(x[j] - x_hat[j]);
            }
        }
        if params.beta > 0.0 {
            let px = pca.project_row(x)?;
            let ph = pca.project_row(x_hat)?;
            for c in 0..pca.k {
                let s = sign(px[c] - ph[c]);
                if s == 0.0 {
                    continue;
                }
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj -= params.beta * s * pca.eigenvectors.get(j, c);
                }
            }
        }

        let last = self.layers.len() - 1;
        let mut grads: Vec<Option<LayerGrad>> = (0..self.layers.len()).map(|_| None).collect();
        let mut delta = g; // final layer is linear, so delta_L = dL/d x_hat
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &pass.activations[l];
            let mut dw = Mat::zeros(layer.out_dim(), layer.in_dim());
            for (r, &dv) in delta.iter().enumerate() {
                for (c, &iv) in input.iter().enumerate() {
                    dw.set(r, c, dv * iv);
                }
            }
            let db = delta.clone();
            grads[l] = Some(LayerGrad { dw, db });
            if l == 0 {
                break;
            }
            // propagate: delta_{l-1} = (W_l^T delta_l) .* f'(z_{l-1})
            let prev_layer_is_last = l - 1 == last;
            let act = if prev_layer_is_last {
                Activation::Identity
            } else {
                self.activation
            };
            let mut next_delta = vec![0.0; layer.in_dim()];
            for (r, &dv) in delta.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                let wrow = layer.w.row(r);
                for (c, &wv) in wrow.iter().enumerate() {
                    next_delta[c] += wv * dv;
                }
            }
            for (c, nd) in next_delta.iter_mut().enumerate() {
                *nd *= act.deriv(pass.preacts[l - 1][c]);
            }
            delta = next_delta;
        }
        Ok((grads.into_iter().map(|g| g.unwrap()).collect(), loss))
    }

    /// Mean custom loss over every row of a scaled matrix.
    fn mean_loss(&self, rows: &[Vec<f64>], pca: &PcaModel, params: &LossParams) -> Result<f64> {
        let mut total = 0.0;
        for row in rows {
            let pass = self.forward(row)?;
            total += custom_loss(row, pass.reconstruction(), pca, params)?;
        }
        Ok(total / rows.len() as f64)
    }

    /// Score by reconstruction MSE per window (threshold unset).
    pub fn score(&self, matrix: &WindowMatrix) -> Result<ScoreSeries> {
        let mut scores = Vec::with_capacity(matrix.rows());
        for r in 0..matrix.rows() {
            let x = self.scaler.apply(&matrix.row_f64(r))?;
            let pass = self.forward(&x)?;
            scores.push(reconstruction_error(&x, pass.reconstruction())?);
        }
        Ok(ScoreSeries::new(matrix.start_epoch, scores))
    }

    /// Per-window custom-loss values (the autoencoder's contribution to the
    /// ensemble), threshold unset.
    pub fn score_custom(
        &self,
        pca: &PcaModel,
        params: &LossParams,
        matrix: &WindowMatrix,
    ) -> Result<ScoreSeries> {
        let mut scores = Vec::with_capacity(matrix.rows());
        for r in 0..matrix.rows() {
            let x = self.scaler.apply(&matrix.row_f64(r))?;
            let pass = self.forward(&x)?;
            scores.push(custom_loss(&x, pass.reconstruction(), pca, params)?);
        }
        Ok(ScoreSeries::new(matrix.start_epoch, scores))
    }

    // --- persistence: versioned flat text ---

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "logsift-ae v1")?;
        let dims: Vec<String> = self.layer_dims.iter().map(|d| d.to_string()).collect();
        writeln!(w, "dims {}", dims.join(" "))?;
        writeln!(w, "activation {}", self.activation.name())?;
        writeln!(w, "smin {}", join_floats(&self.scaler.min))?;
        writeln!(w, "smax {}", join_floats(&self.scaler.max))?;
        for (i, layer) in self.layers.iter().enumerate() {
            writeln!(w, "layer {} {} {}", i + 1, layer.out_dim(), layer.in_dim())?;
            for r in 0..layer.out_dim() {
                writeln!(w, "w {}", join_floats(layer.w.row(r)))?;
            }
            writeln!(w, "b {}", join_floats(&layer.b))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<AutoencoderModel> {
        let mut lines = r.lines();
        let header = next_line(&mut lines)?;
        if header.trim() != "logsift-ae v1" {
            return Err(Error::artifact("<ae model>", "unknown header/version"));
        }
        let dims_line = next_line(&mut lines)?;
        let mut parts = dims_line.split_whitespace();
        if parts.next() != Some("dims") {
            return Err(Error::artifact("<ae model>", "expected dims line"));
        }
        let layer_dims: Vec<usize> = parts
            .map(|p| p.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::artifact("<ae model>", "bad dims"))?;
        validate_dims(&layer_dims)?;

        let act_line = next_line(&mut lines)?;
        let activation = match act_line.split_whitespace().collect::<Vec<_>>()[..] {
            ["activation", name] => Activation::parse_name(name)?,
            _ => return Err(Error::artifact("<ae model>", "expected activation line")),
        };
        let d = layer_dims[0];
        let min = parse_float_line(&next_line(&mut lines)?, "smin", d)?;
        let max = parse_float_line(&next_line(&mut lines)?, "smax", d)?;

        let mut layers = Vec::with_capacity(layer_dims.len() - 1);
        for (i, pair) in layer_dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let tag = next_line(&mut lines)?;
            let expect = format!("layer {} {} {}", i + 1, fan_out, fan_in);
            if tag.trim() != expect {
                return Err(Error::artifact(
                    "<ae model>",
                    format!("expected {expect:?}, saw {tag:?}"),
                ));
            }
            let mut w = Mat::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                let vals = parse_float_line(&next_line(&mut lines)?, "w", fan_in)?;
                for (c, v) in vals.into_iter().enumerate() {
                    w.set(r, c, v);
                }
            }
            let b = parse_float_line(&next_line(&mut lines)?, "b", fan_out)?;
            layers.push(Layer { w, b });
        }
        Ok(AutoencoderModel {
            layer_dims,
            layers,
            activation,
            scaler: InputScaler { min, max },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.write(&mut f)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<AutoencoderModel> {
        let f = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read(BufReader::new(f))
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 3 || dims.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "layer chain must have an odd length of at least 3, got {}",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidParameter("zero-width layer".into()));
    }
    let n = dims.len();
    for i in 0..n / 2 {
        if dims[i] != dims[n - 1 - i] {
            return Err(Error::InvalidParameter(
                "layer chain must be symmetric".into(),
            ));
        }
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Train a fresh autoencoder on healthy windows. Deterministic given
/// `hyper.seed`; errors with the offending epoch if the loss leaves the
/// finite range.
pub fn train(
    healthy: &WindowMatrix,
    pca: &PcaModel,
    params: &LossParams,
    hyper: &TrainHyper,
) -> Result<(AutoencoderModel, TrainReport)> {
    if healthy.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "training needs at least 2 rows, got {}",
            healthy.rows()
        )));
    }
    if hyper.batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
    }
    if !(hyper.learning_rate > 0.0 && hyper.learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "learning rate {} out of range",
            hyper.learning_rate
        )));
    }
    let d = healthy.num_templates();
    let dims = match hyper.hidden {
        Some([h1, h2, h3]) => vec![d, h1, h2, h3, h2, h1, d],
        None => default_layer_dims(d),
    };
    let scaler = InputScaler::fit(healthy);
    let mut model = AutoencoderModel::with_dims(dims, Activation::Relu, scaler, hyper.seed)?;

    let rows: Vec<Vec<f64>> = (0..healthy.rows())
        .map(|r| model.scaler.apply(&healthy.row_f64(r)))
        .collect::<Result<_>>()?;

    let initial_loss = model.mean_loss(&rows, pca, params)?;
    let mut rng = Rng::new(hyper.seed ^ 0xA5A5_5A5A_DEAD_BEEF);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        rng.shuffle(&mut order);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let mut acc: Option<Vec<LayerGrad>> = None;
            for &idx in batch {
                let (grads, loss) = model.gradients(&rows[idx], pca, params)?;
                epoch_sum += loss;
                acc = Some(match acc {
                    None => grads,
                    Some(mut a) => {
                        for (slot, g) in a.iter_mut().zip(grads) {
                            for r in 0..slot.dw.rows() {
                                for c in 0..slot.dw.cols() {
                                    slot.dw.set(r, c, slot.dw.get(r, c) + g.dw.get(r, c));
                                }
                            }
                            for (bv, gv) in slot.db.iter_mut().zip(&g.db) {
                                *bv += gv;
                            }
                        }
                        a
                    }
                });
            }
            let scale = hyper.learning_rate / batch.len() as f64;
            for (layer, grad) in model.layers.iter_mut().zip(acc.unwrap()) {
                for r in 0..layer.w.rows() {
                    for c in 0..layer.w.cols() {
                        layer.w.set(r, c, layer.w.get(r, c) - scale * grad.dw.get(r, c));
                    }
                }
                for (bv, gv) in layer.b.iter_mut().zip(&grad.db) {
                    *bv -= scale * gv;
                }
            }
        }
        let epoch_loss = epoch_sum / rows.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("mean training loss became {epoch_loss}"),
            });
        }
        epoch_losses.push(epoch_loss);
    }

    let final_loss = model.mean_loss(&rows, pca, params)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: hyper.epochs,
            detail: format!("final loss became {final_loss}"),
        });
    }
    let report = TrainReport {
        seed: hyper.seed,
        epochs_run: hyper.epochs,
        initial_loss,
        final_loss,
        epoch_losses,
    };
    Ok((model, report))
}

fn join_floats(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn next_line<I: Iterator<Item = std::io::Result<String>>>(lines: &mut I) -> Result<String> {
    lines
        .next()
        .ok_or_else(|| Error::artifact("<ae model>", "unexpected end of file"))?
        .map_err(|e| Error::io("<ae model>", e))
}

fn parse_float_line(line: &str, tag: &str, expect: usize) -> Result<Vec<f64>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::artifact("<ae model>", format!("expected {tag} line")));
    }
    let vals: Vec<f64> = parts
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::artifact("<ae model>", format!("bad float in {tag} line")))?;
    if vals.len() != expect {
        return Err(Error::artifact(
            "<ae model>",
            format!("{tag} line has {} values, expected {expect}", vals.len()),
        ));
    }
    Ok(vals)
}
