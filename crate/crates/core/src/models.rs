//! The four rating-prediction architectures with classification and
//! regression heads.
//!
//! Networks consume `[batch, 12, rows]` tensors: months are the time axis
//! and the timeseries are the input channels.

use std::path::Path;

use esg_neuro::layers::{
    BatchNorm1d, Conv1d, Dense, Dropout, Flatten, GlobalMaxPool1d, LayerNorm, MaxPool1d, MultiHeadAttention, Relu,
};
use esg_neuro::loss::argmax;
use esg_neuro::{checkpoint, Context, Layer, NeuroError, OptimizerState, Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EsgError, Result};
use crate::features::{CompanyYearSeries, MONTHS};

pub const RATING_MAX: f64 = 100.0;
pub const DEFAULT_CLASSES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    BasicCnn,
    DeepCnn,
    CnnTransformer,
    CnnDeepTransformer,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::BasicCnn, Arch::DeepCnn, Arch::CnnTransformer, Arch::CnnDeepTransformer];

    pub fn name(self) -> &'static str {
        match self {
            Arch::BasicCnn => "basic-cnn",
            Arch::DeepCnn => "deep-cnn",
            Arch::CnnTransformer => "cnn-transformer",
            Arch::CnnDeepTransformer => "cnn-deep-transformer",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = EsgError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| EsgError::Validation(format!("unknown architecture {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Classification { n_classes: usize },
    Regression,
}

impl Head {
    pub fn classification() -> Self {
        Head::Classification { n_classes: DEFAULT_CLASSES }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Classification { .. } => "classification",
            Head::Regression => "regression",
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            Head::Classification { n_classes } => n_classes,
            Head::Regression => 1,
        }
    }
}

impl std::str::FromStr for Head {
    type Err = EsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classification" | "cls" => Ok(Head::classification()),
            "regression" | "reg" => Ok(Head::Regression),
            _ => Err(EsgError::Validation(format!("unknown head {s:?} (classification|regression)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Non-overlapping max pooling followed by flattening.
    Window(usize),
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerSpec {
    pub blocks: usize,
    pub heads: usize,
    pub head_size: usize,
    pub dropout: f64,
    /// Width of an optional position-wise feed-forward sublayer.
    #[serde(default)]
    pub feed_forward: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub conv: Vec<ConvSpec>,
    /// Batch normalization and ReLU after every convolution.
    pub conv_blocks: bool,
    pub transformer: Option<TransformerSpec>,
    pub pooling: Pooling,
    /// Hidden ReLU dense layer before the head.
    pub dense: Option<usize>,
}

impl Hyperparameters {
    pub fn defaults(arch: Arch) -> Self {
        let conv = |pairs: &[(usize, usize)]| pairs.iter().map(|&(filters, kernel)| ConvSpec { filters, kernel }).collect();
        let transformer = |blocks| TransformerSpec { blocks, heads: 8, head_size: 200, dropout: 0.2, feed_forward: None };
        match arch {
            Arch::BasicCnn => Self {
                conv: conv(&[(64, 2)]),
                conv_blocks: false,
                transformer: None,
                pooling: Pooling::Window(2),
                dense: Some(265),
            },
            Arch::DeepCnn => Self {
                conv: conv(&[(32, 3), (64, 2), (128, 1)]),
                conv_blocks: true,
                transformer: None,
                pooling: Pooling::Global,
                dense: None,
            },
            Arch::CnnTransformer | Arch::CnnDeepTransformer => Self {
                conv: conv(&[(64, 3), (128, 1)]),
                conv_blocks: true,
                transformer: Some(transformer(if arch == Arch::CnnTransformer { 1 } else { 3 })),
                pooling: Pooling::Global,
                dense: None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub head: Head,
    pub input_rows: usize,
    pub hyper: Hyperparameters,
}

impl ModelSpec {
    pub fn new(arch: Arch, head: Head) -> Self {
        Self { arch, head, input_rows: 9, hyper: Hyperparameters::defaults(arch) }
    }

    pub fn with_input_rows(mut self, rows: usize) -> Self {
        self.input_rows = rows;
        self
    }

    /// e.g. `deep-cnn/regression`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.arch.name(), self.head.name())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EsgError::Validation(format!("{}: {m}", self.label())));
        if let Head::Classification { n_classes } = self.head {
            if n_classes < 2 {
                return bad("n_classes must be at least 2");
            }
        }
        if self.input_rows == 0 {
            return bad("input_rows must be positive");
        }
        if self.hyper.conv.is_empty() || self.hyper.conv.iter().any(|c| c.filters == 0 || c.kernel == 0) {
            return bad("needs at least one convolution with positive filters and kernel");
        }
        if let Pooling::Window(w) = self.hyper.pooling {
            if w == 0 || w > MONTHS {
                return bad("pool window must be in 1..=12");
            }
        }
        if let Some(t) = &self.hyper.transformer {
            if t.heads == 0 || t.head_size == 0 || !(0.0..1.0).contains(&t.dropout) || t.feed_forward == Some(0) {
                return bad("invalid transformer block");
            }
        }
        if self.hyper.dense == Some(0) {
            return bad("dense width must be positive");
        }
        Ok(())
    }
}

/// `x -> norm -> attention -> dropout -> + x -> norm`, optionally followed by
/// a residual `dense -> relu -> dense -> dropout` sublayer.
pub struct EncoderBlock<T> {
    norm_in: LayerNorm<T>,
    attention: MultiHeadAttention<T>,
    dropout: Dropout,
    norm_out: LayerNorm<T>,
    feed_forward: Option<(Dense<T>, Relu, Dense<T>, Dropout)>,
}

impl<T: Scalar> EncoderBlock<T> {
    pub fn new(width: usize, spec: &TransformerSpec, rng: &mut ChaCha8Rng) -> Self {
        Self {
            norm_in: LayerNorm::new(width),
            attention: MultiHeadAttention::new(width, spec.heads, spec.head_size, rng),
            dropout: Dropout::new(spec.dropout),
            norm_out: LayerNorm::new(width),
            feed_forward: spec
                .feed_forward
                .map(|h| (Dense::new(width, h, rng), Relu::new(), Dense::new(h, width, rng), Dropout::new(spec.dropout))),
        }
    }

    pub fn attention(&self) -> &MultiHeadAttention<T> {
        &self.attention
    }

    fn sublayers(&self) -> Vec<(&'static str, &dyn Layer<T>)> {
        let mut out: Vec<(&'static str, &dyn Layer<T>)> =
            vec![("norm_in", &self.norm_in), ("attention", &self.attention), ("norm_out", &self.norm_out)];
        if let Some((a, _, b, _)) = &self.feed_forward {
            out.push(("ff_in", a));
            out.push(("ff_out", b));
        }
        out
    }
}

fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = a.clone();
    for (x, y) in out.data_mut().iter_mut().zip(b.data()) {
        *x += *y;
    }
    out
}

impl<T: Scalar> Layer<T> for EncoderBlock<T> {
    fn kind(&self) -> &'static str {
        "encoder_block"
    }

    fn forward(&mut self, input: &Tensor<T>, ctx: &mut Context) -> esg_neuro::Result<Tensor<T>> {
        let h = self.norm_in.forward(input, ctx)?;
        let a = self.attention.forward(&h, ctx)?;
        let d = self.dropout.forward(&a, ctx)?;
        let y = self.norm_out.forward(&add(input, &d), ctx)?;
        match &mut self.feed_forward {
            None => Ok(y),
            Some((inner, relu, outer, drop)) => {
                let f = inner.forward(&y, ctx)?;
                let f = relu.forward(&f, ctx)?;
                let f = outer.forward(&f, ctx)?;
                let f = drop.forward(&f, ctx)?;
                Ok(add(&y, &f))
            }
        }
    }

    fn backward(&mut self, grad_output: &Tensor<T>) -> esg_neuro::Result<Tensor<T>> {
        let g_y = match &mut self.feed_forward {
            None => grad_output.clone(),
            Some((inner, relu, outer, drop)) => {
                let g = drop.backward(grad_output)?;
                let g = outer.backward(&g)?;
                let g = relu.backward(&g)?;
                add(grad_output, &inner.backward(&g)?)
            }
        };
        let g_sum = self.norm_out.backward(&g_y)?;
        let g = self.dropout.backward(&g_sum)?;
        let g = self.attention.backward(&g)?;
        let g = self.norm_in.backward(&g)?;
        Ok(add(&g_sum, &g))
    }

    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        self.sublayers()
            .into_iter()
            .flat_map(|(prefix, l)| l.parameters().into_iter().map(move |(n, p)| (format!("{prefix}.{n}"), p)))
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.norm_in.parameters_mut();
        out.extend(self.attention.parameters_mut());
        out.extend(self.norm_out.parameters_mut());
        if let Some((a, _, b, _)) = &mut self.feed_forward {
            out.extend(a.parameters_mut());
            out.extend(b.parameters_mut());
        }
        out
    }
}

/// A built architecture: a layer stack ending in the head's dense layer.
///
/// [`Network::forward`] returns logits (classification) or the raw rating
/// (regression); [`Network::predict`] applies the softmax.
pub struct Network<T: Scalar> {
    spec: ModelSpec,
    layers: Vec<(String, Box<dyn Layer<T>>)>,
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights and zero biases drawn from `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = &spec.hyper;
        let mut layers: Vec<(String, Box<dyn Layer<T>>)> = Vec::new();
        let mut width = spec.input_rows;
        for (i, c) in h.conv.iter().enumerate() {
            let n = i + 1;
            layers.push((format!("conv{n}"), Box::new(Conv1d::new(c.kernel, width, c.filters, &mut rng))));
            if h.conv_blocks {
                layers.push((format!("bn{n}"), Box::new(BatchNorm1d::new(c.filters))));
                layers.push((format!("relu{n}"), Box::new(Relu::new())));
            }
            width = c.filters;
        }
        if let Some(t) = &h.transformer {
            for b in 0..t.blocks {
                layers.push((format!("encoder{}", b + 1), Box::new(EncoderBlock::new(width, t, &mut rng))));
            }
        }
        match h.pooling {
            Pooling::Window(w) => {
                layers.push(("pool".into(), Box::new(MaxPool1d::new(w))));
                layers.push(("flatten".into(), Box::new(Flatten::new())));
                width *= MONTHS / w;
            }
            Pooling::Global => layers.push(("pool".into(), Box::new(GlobalMaxPool1d::new()))),
        }
        if let Some(units) = h.dense {
            layers.push(("dense".into(), Box::new(Dense::new(width, units, &mut rng))));
            layers.push(("dense_relu".into(), Box::new(Relu::new())));
            width = units;
        }
        layers.push(("head".into(), Box::new(Dense::new(width, spec.head.outputs(), &mut rng))));
        Ok(Self { spec: spec.clone(), layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Logits or raw regression output, `[batch, outputs]`.
    pub fn forward(&mut self, x: &Tensor<T>, ctx: &mut Context) -> Result<Tensor<T>> {
        Ok(Layer::forward(self, x, ctx)?)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(Layer::backward(self, grad)?)
    }

    /// Eval-mode output: class probabilities or ratings (unclamped).
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut out = self.forward(x, &mut Context::eval())?;
        if let Head::Classification { n_classes } = self.spec.head {
            for row in out.data_mut().chunks_mut(n_classes) {
                esg_neuro::layers::softmax_in_place(row);
            }
        }
        Ok(out)
    }

    pub fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|(prefix, l)| l.parameters().into_iter().map(move |(n, p)| (format!("{prefix}.{n}"), p)))
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|(_, l)| l.parameters_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|(prefix, l)| l.buffers().into_iter().map(move |(n, p)| (format!("{prefix}.{n}"), p)))
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|(_, l)| l.buffers_mut()).collect()
    }

    /// Trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Copy of every parameter and buffer value.
    pub fn snapshot(&self) -> Vec<Vec<T>> {
        self.parameters().iter().chain(self.buffers().iter()).map(|(_, t)| t.data().to_vec()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<T>]) {
        let n_params = self.parameters().len();
        assert_eq!(n_params + self.buffers().len(), snapshot.len(), "snapshot from a different network");
        for (t, values) in self.parameters_mut().into_iter().zip(snapshot) {
            t.data_mut().copy_from_slice(values);
        }
        for (t, values) in self.buffers_mut().into_iter().zip(&snapshot[n_params..]) {
            t.data_mut().copy_from_slice(values);
        }
    }

    /// Parameters and buffers in the neuro checkpoint format, with the spec
    /// in the manifest header.
    pub fn save(&self, dir: &Path, optimizer: Option<&OptimizerState>) -> Result<()> {
        let mut tensors = self.parameters();
        tensors.extend(self.buffers().into_iter().map(|(n, t)| (format!("buffer.{n}"), t)));
        let header = serde_json::json!({ "spec": self.spec });
        checkpoint::save(dir, &tensors, optimizer, header)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, Option<OptimizerState>)> {
        let ckpt = checkpoint::load(dir)?;
        let spec: ModelSpec = serde_json::from_value(ckpt.manifest.header["spec"].clone())
            .map_err(|e| EsgError::Consistency(format!("checkpoint spec: {e}")))?;
        let mut net = Self::build(&spec, 0)?;
        let param_names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();
        let buffer_names: Vec<String> = net.buffers().into_iter().map(|(n, _)| format!("buffer.{n}")).collect();
        copy_from_checkpoint(&ckpt, &param_names, net.parameters_mut())?;
        copy_from_checkpoint(&ckpt, &buffer_names, net.buffers_mut())?;
        Ok((net, ckpt.optimizer))
    }
}

fn copy_from_checkpoint<T: Scalar>(ckpt: &checkpoint::Checkpoint, names: &[String], tensors: Vec<&mut Tensor<T>>) -> Result<()> {
    for (name, t) in names.iter().zip(tensors) {
        let stored = ckpt.tensor(name).ok_or_else(|| EsgError::Consistency(format!("checkpoint lacks {name}")))?;
        if stored.shape() != t.shape() {
            return Err(EsgError::Consistency(format!("{name}: shape {:?} vs {:?}", stored.shape(), t.shape())));
        }
        for (dst, src) in t.data_mut().iter_mut().zip(stored.data()) {
            *dst = T::of(*src);
        }
    }
    Ok(())
}

impl<T: Scalar> Layer<T> for Network<T> {
    fn kind(&self) -> &'static str {
        "network"
    }

    fn forward(&mut self, x: &Tensor<T>, ctx: &mut Context) -> esg_neuro::Result<Tensor<T>> {
        let expected = [MONTHS, self.spec.input_rows];
        if x.shape().len() != 3 || x.shape()[1..] != expected {
            return Err(NeuroError::Shape {
                op: "network input",
                expected: format!("[batch, {MONTHS}, {}]", expected[1]),
                got: x.shape().to_vec(),
            });
        }
        let mut h = x.clone();
        for (_, layer) in &mut self.layers {
            h = layer.forward(&h, ctx)?;
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Tensor<T>) -> esg_neuro::Result<Tensor<T>> {
        let mut g = grad.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        Network::parameters(self)
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Network::parameters_mut(self)
    }

    fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        Network::buffers(self)
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Network::buffers_mut(self)
    }
}

/// Class of a rating: `floor(rating * n / 100)` clamped to `0..n`.
pub fn quantize_target(rating: f64, n_classes: usize) -> Result<usize> {
    if !(0.0..=RATING_MAX).contains(&rating) {
        return Err(EsgError::OutOfRange { what: "rating".into(), value: rating });
    }
    let class = (rating * n_classes as f64 / RATING_MAX).floor() as usize;
    Ok(class.min(n_classes - 1))
}

/// Midpoint rating of a class.
pub fn class_rating(class: usize, n_classes: usize) -> f64 {
    (class as f64 + 0.5) * RATING_MAX / n_classes as f64
}

/// Maps one row of network output to a rating in `[0, 100]`.
pub fn output_to_rating<T: Scalar>(head: Head, row: &[T]) -> f64 {
    match head {
        Head::Classification { n_classes } => class_rating(argmax(row), n_classes),
        Head::Regression => row[0].as_f64().clamp(0.0, RATING_MAX),
    }
}

/// `[batch, 12, rows]` input from series matrices stored `rows x 12`.
pub fn batch_tensor<T: Scalar>(series: &[&CompanyYearSeries]) -> Result<Tensor<T>> {
    let rows = series.first().map_or(0, |s| s.n_rows());
    let mut data = Vec::with_capacity(series.len() * rows * MONTHS);
    for s in series {
        if s.n_rows() != rows {
            return Err(EsgError::DimensionMismatch { expected: rows, got: s.n_rows() });
        }
        for m in 0..MONTHS {
            for r in 0..rows {
                data.push(T::of(s.matrix[r * MONTHS + m]));
            }
        }
    }
    Ok(Tensor::from_vec(&[series.len(), MONTHS, rows], data)?)
}

/// Ratings for scaled series, in order.
pub fn predict_ratings<T: Scalar>(net: &mut Network<T>, series: &[&CompanyYearSeries]) -> Result<Vec<f64>> {
    if let Some(s) = series.iter().find(|s| s.scaled_by.is_none()) {
        return Err(EsgError::Unscaled(format!("{} {}", s.company_id, s.year)));
    }
    if series.is_empty() {
        return Ok(Vec::new());
    }
    let out = net.predict(&batch_tensor(series)?)?;
    let width = net.spec().head.outputs();
    Ok(out.data().chunks(width).map(|row| output_to_rating(net.spec().head, row)).collect())
}

pub fn predict_rating<T: Scalar>(net: &mut Network<T>, series: &CompanyYearSeries) -> Result<f64> {
    Ok(predict_ratings(net, &[series])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization() {
        assert_eq!(quantize_target(37.6, 100).unwrap(), 37);
        assert_eq!(quantize_target(100.0, 100).unwrap(), 99);
        assert_eq!(quantize_target(0.0, 100).unwrap(), 0);
        assert!(quantize_target(100.1, 100).is_err());
        assert!(quantize_target(-0.1, 100).is_err());
        assert!(quantize_target(f64::NAN, 100).is_err());
        assert_eq!(quantize_target(55.0, 10).unwrap(), 5);
        assert_eq!(class_rating(42, 100), 42.5);
    }

    #[test]
    fn output_mapping() {
        let mut onehot = vec![0.0; 100];
        onehot[42] = 1.0;
        assert_eq!(output_to_rating(Head::classification(), &onehot), 42.5);
        assert_eq!(output_to_rating(Head::Regression, &[-3.2]), 0.0);
        assert_eq!(output_to_rating(Head::Regression, &[55.1]), 55.1);
        assert_eq!(output_to_rating(Head::Regression, &[130.0]), 100.0);
    }

    #[test]
    fn spec_parsing_and_json() {
        assert_eq!("deep_cnn".parse::<Arch>().unwrap(), Arch::DeepCnn);
        assert_eq!("CNN-Deep-Transformer".parse::<Arch>().unwrap(), Arch::CnnDeepTransformer);
        assert!("lstm".parse::<Arch>().is_err());
        let spec = ModelSpec::new(Arch::CnnTransformer, Head::classification());
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), spec);
        let mut bad = spec.clone();
        bad.head = Head::Classification { n_classes: 1 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unscaled_input_is_rejected() {
        let s = CompanyYearSeries {
            company_id: "c".into(),
            year: 2020,
            rows: crate::features::FeatureConfig::default().rows(),
            matrix: vec![0.0; 9 * 12],
            target: 50.0,
            cap_band: crate::catalog::CapBand::Unknown,
            scaled_by: None,
        };
        let mut net = Network::<f64>::build(&ModelSpec::new(Arch::DeepCnn, Head::Regression), 1).unwrap();
        assert!(matches!(predict_rating(&mut net, &s), Err(EsgError::Unscaled(_))));
    }

    #[test]
    fn batch_layout_is_time_major() {
        let matrix: Vec<f64> = (0..2 * 12).map(|v| v as f64).collect();
        let s = CompanyYearSeries {
            company_id: "c".into(),
            year: 2020,
            rows: crate::features::FeatureConfig { k: 0, include_noise_sentiment: false }.rows(),
            matrix,
            target: 1.0,
            cap_band: crate::catalog::CapBand::Unknown,
            scaled_by: None,
        };
        let t: Tensor<f64> = batch_tensor(&[&s]).unwrap();
        assert_eq!(t.shape(), [1, 12, 2]);
        // month 3: row 0 value 3, row 1 value 15
        assert_eq!(&t.data()[6..8], &[3.0, 15.0]);
    }
}
