//! Fully connected rectifier network with a two-way softmax head.
//!
//! Parameters live in one flat vector so that clients and the aggregator can
//! treat a model as a plain array of reals. Layer `k` occupies a contiguous
//! block: the `out x in` weight matrix in row-major order followed by the
//! `out` biases.
//!
//! Class 0 is "outage" and class 1 is "connected"; a connectivity label `l`
//! is used directly as the class index, so [`outage_probability`] is the
//! class-0 softmax output.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Bounds, Error, Result};

/// Lower clamp applied to probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
}

impl Default for MlpArchitecture {
    fn default() -> Self {
        MlpArchitecture {
            layer_sizes: vec![2, 256, 256, 256, 2],
        }
    }
}

impl TryFrom<Vec<usize>> for MlpArchitecture {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<MlpArchitecture> for Vec<usize> {
    fn from(a: MlpArchitecture) -> Self {
        a.layer_sizes
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

impl MlpArchitecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidArgument(
                "need an input, at least one hidden layer and an output".into(),
            ));
        }
        if layer_sizes[0] != 2 || *layer_sizes.last().unwrap() != 2 {
            return Err(Error::InvalidArgument(format!(
                "input and output widths must both be 2, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("zero-width layer".into()));
        }
        Ok(MlpArchitecture { layer_sizes })
    }

    /// `[2, hidden..., 2]`.
    pub fn with_hidden(hidden: &[usize]) -> Result<Self> {
        let mut sizes = vec![2];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        Self::new(sizes)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn spans(&self) -> Vec<LayerSpan> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let span = LayerSpan {
                    fan_in: w[0],
                    fan_out: w[1],
                    weights: offset,
                    biases: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                span
            })
            .collect()
    }
}

/// Flat parameter vector. Every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ParamVector {
    arch: MlpArchitecture,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    arch: MlpArchitecture,
    values: Vec<f64>,
}

impl TryFrom<RawParams> for ParamVector {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ParamVector::from_values(raw.arch, raw.values)
    }
}

impl From<ParamVector> for RawParams {
    fn from(p: ParamVector) -> Self {
        RawParams {
            arch: p.arch,
            values: p.values,
        }
    }
}

impl ParamVector {
    pub fn from_values(arch: MlpArchitecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.num_params() {
            return Err(Error::ShapeMismatch {
                expected: arch.num_params(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ParamVector { arch, values })
    }

    pub fn zeros(arch: MlpArchitecture) -> Self {
        let n = arch.num_params();
        ParamVector {
            arch,
            values: vec![0.0; n],
        }
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub(crate) fn check_same_shape(&self, other: &ParamVector) -> Result<()> {
        if self.arch != other.arch || self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }

    fn weights(&self, s: &LayerSpan) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((s.fan_out, s.fan_in), &self.values[s.weights..s.biases])
            .expect("span matches architecture")
    }

    fn biases(&self, s: &LayerSpan) -> &[f64] {
        &self.values[s.biases..s.biases + s.fan_out]
    }
}

/// One training example: a normalized coordinate and its connectivity label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub coord: [f64; 2],
    /// 1 = connected, 0 = outage.
    pub label: u8,
}

impl LabeledSample {
    pub fn new(coord: [f64; 2], label: u8) -> Result<Self> {
        if !coord.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument(format!(
                "coordinate {coord:?} outside the unit square"
            )));
        }
        if label > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {label}")));
        }
        Ok(LabeledSample { coord, label })
    }
}

/// He initialization: weights ~ N(0, 2 / fan_in), biases zero.
pub fn init_params<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> ParamVector {
    let mut values = vec![0.0; arch.num_params()];
    for s in arch.spans() {
        let normal = Normal::new(0.0, (2.0 / s.fan_in as f64).sqrt()).expect("positive std");
        for w in &mut values[s.weights..s.biases] {
            *w = normal.sample(rng);
        }
    }
    ParamVector {
        arch: arch.clone(),
        values,
    }
}

fn softmax2(z0: f64, z1: f64) -> [f64; 2] {
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Class probabilities `[p_outage, p_connected]` for one coordinate.
pub fn forward(theta: &ParamVector, coord: [f64; 2]) -> Result<[f64; 2]> {
    if !coord.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite input {coord:?}")));
    }
    let spans = theta.arch.spans();
    let mut act = coord.to_vec();
    let mut next = Vec::new();
    let last = spans.len() - 1;
    for (k, s) in spans.iter().enumerate() {
        let w = &theta.values[s.weights..s.biases];
        let b = theta.biases(s);
        next.clear();
        next.extend((0..s.fan_out).map(|o| {
            let row = &w[o * s.fan_in..(o + 1) * s.fan_in];
            let z = b[o] + row.iter().zip(&act).map(|(a, x)| a * x).sum::<f64>();
            if k == last {
                z
            } else {
                z.max(0.0)
            }
        }));
        std::mem::swap(&mut act, &mut next);
    }
    Ok(softmax2(act[0], act[1]))
}

/// Predicted outage probability (class 0).
pub fn outage_probability(theta: &ParamVector, coord: [f64; 2]) -> Result<f64> {
    Ok(forward(theta, coord)?[0])
}

/// Batched forward pass. Returns the input and every hidden activation, plus
/// the softmax output (`batch x 2`).
fn forward_batch(theta: &ParamVector, batch: &[LabeledSample]) -> (Vec<Array2<f64>>, Array2<f64>) {
    let spans = theta.arch.spans();
    let mut x = Array2::zeros((batch.len(), 2));
    for (mut row, s) in x.rows_mut().into_iter().zip(batch) {
        row[0] = s.coord[0];
        row[1] = s.coord[1];
    }
    let mut acts = vec![x];
    let last = spans.len() - 1;
    let mut logits = None;
    for (k, s) in spans.iter().enumerate() {
        let prev = acts.last().unwrap();
        let mut z = Array2::zeros((batch.len(), s.fan_out));
        z += &ndarray::ArrayView1::from(theta.biases(s));
        general_mat_mul(1.0, prev, &theta.weights(s).t(), 1.0, &mut z);
        if k == last {
            logits = Some(z);
        } else {
            z.mapv_inplace(|v| v.max(0.0));
            acts.push(z);
        }
    }
    let mut probs = logits.unwrap();
    for mut row in probs.rows_mut() {
        let p = softmax2(row[0], row[1]);
        row[0] = p[0];
        row[1] = p[1];
    }
    (acts, probs)
}

fn sample_loss(p_true: f64) -> f64 {
    -p_true.max(LOG_CLAMP).ln()
}

/// Mean cross-entropy over the batch.
pub fn loss(theta: &ParamVector, batch: &[LabeledSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (_, probs) = forward_batch(theta, batch);
    let total: f64 = batch
        .iter()
        .zip(probs.rows())
        .map(|(s, p)| sample_loss(p[s.label as usize]))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Analytic gradient of [`loss`] by reverse-mode accumulation.
pub fn gradient(theta: &ParamVector, batch: &[LabeledSample]) -> Result<ParamVector> {
    loss_and_gradient(theta, batch).map(|(_, g)| g)
}

pub fn loss_and_gradient(theta: &ParamVector, batch: &[LabeledSample]) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let (acts, probs) = forward_batch(theta, batch);

    // d(mean CE)/d(logits) = (p - onehot) / n; zero where the log was clamped.
    let mut total = 0.0;
    let mut delta = probs;
    for (mut row, s) in delta.rows_mut().into_iter().zip(batch) {
        let t = s.label as usize;
        let p_true = row[t];
        total += sample_loss(p_true);
        if p_true < LOG_CLAMP {
            row.fill(0.0);
        } else {
            row[t] -= 1.0;
            row.mapv_inplace(|v| v / n);
        }
    }

    let spans = theta.arch.spans();
    let mut grad = vec![0.0; theta.len()];
    for (k, s) in spans.iter().enumerate().rev() {
        let a_prev = &acts[k];
        {
            let mut dw = ndarray::ArrayViewMut2::from_shape(
                (s.fan_out, s.fan_in),
                &mut grad[s.weights..s.biases],
            )
            .expect("span matches architecture");
            general_mat_mul(1.0, &delta.t(), a_prev, 0.0, &mut dw);
        }
        let db: Array1<f64> = delta.sum_axis(Axis(0));
        grad[s.biases..s.biases + s.fan_out].copy_from_slice(db.as_slice().unwrap());
        if k > 0 {
            let mut back = delta.dot(&theta.weights(s));
            ndarray::Zip::from(&mut back)
                .and(a_prev)
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            delta = back;
        }
    }
    let grad = ParamVector::from_values(theta.arch.clone(), grad)?;
    Ok((total / n, grad))
}

/// `theta - eta * grad`.
pub fn sgd_step(theta: &ParamVector, grad: &ParamVector, eta: f64) -> Result<ParamVector> {
    theta.check_same_shape(grad)?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be non-negative, got {eta}")));
    }
    let values = theta
        .values
        .iter()
        .zip(&grad.values)
        .map(|(t, g)| t - eta * g)
        .collect();
    ParamVector::from_values(theta.arch.clone(), values)
}

/// Affine map of a ground point into the unit square.
pub fn normalize_coord(q: [f64; 2], bounds: &Bounds) -> Result<[f64; 2]> {
    if !bounds.contains(q) {
        return Err(Error::Geometry(format!("point {q:?} outside area {bounds:?}")));
    }
    Ok([
        ((q[0] - bounds.x_min) / bounds.width()).clamp(0.0, 1.0),
        ((q[1] - bounds.y_min) / bounds.height()).clamp(0.0, 1.0),
    ])
}

pub fn denormalize_coord(u: [f64; 2], bounds: &Bounds) -> [f64; 2] {
    [
        bounds.x_min + u[0] * bounds.width(),
        bounds.y_min + u[1] * bounds.height(),
    ]
}

/// A trained network together with the area frame its inputs were
/// normalized against. This is the unit persisted to disk and handed to the
/// planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioModel {
    pub bounds: Bounds,
    pub params: ParamVector,
}

impl RadioModel {
    pub fn new(params: ParamVector, bounds: Bounds) -> Self {
        RadioModel { bounds, params }
    }

    /// Predicted outage at a ground point; `None` outside the area.
    pub fn outage_at(&self, q: [f64; 2]) -> Option<f64> {
        let u = normalize_coord(q, &self.bounds).ok()?;
        outage_probability(&self.params, u).ok()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::parse(
                "model",
                format!("{e} (line {}, column {})", e.line(), e.column()),
            )
        })
    }
}
