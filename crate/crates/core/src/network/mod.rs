//! Layer-chain CNNs with full activation capture.
//!
//! Both reference architectures share one topology:
//!
//! | layer | op               | CNN1         | CNN2         | variable |
//! |-------|------------------|--------------|--------------|----------|
//! | f1    | conv 3×3         | 30×30×20     | 30×30×20     | F1 (prior) |
//! | f2    | maxpool + ReLU   | 15×15×20     | 15×15×20     | F2       |
//! | f3    | conv 5×5         | 11×11×60     | 11×11×36     | F2       |
//! | f4    | maxpool + ReLU   | 5×5×60       | 5×5×36       | FY       |
//! | f5    | fully connected  | 10           | 10           | FY       |
//! | fY    | softmax          | 10           | 10           | FY       |
//!
//! F2 and FY play the likelihood role. Reduced variants with the same chain
//! (smaller inputs and filter counts) are available for gradient checks.

mod checkpoint;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CKPT_MAGIC, CKPT_VERSION,
};
pub use train::{
    evaluate, evaluate_with_loss, sgd_step, train, train_with_observer, EpochRecord, SplitScore,
    TrainConfig, TrainMetrics,
};

use crate::error::{shape_err, Error, Result};
use crate::rng::{SeededRng, INIT_STREAM};
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "CNN1")]
    Cnn1,
    #[serde(rename = "CNN2")]
    Cnn2,
}

impl Arch {
    pub const ALL: [Arch; 2] = [Arch::Cnn1, Arch::Cnn2];

    pub fn shape(self) -> ArchShape {
        let conv2_filters = match self {
            Arch::Cnn1 => 60,
            Arch::Cnn2 => 36,
        };
        ArchShape {
            input_side: 32,
            conv1_kernel: 3,
            conv1_filters: 20,
            conv2_kernel: 5,
            conv2_filters,
            classes: 10,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Arch::Cnn1 => 1,
            Arch::Cnn2 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Arch::Cnn1),
            2 => Some(Arch::Cnn2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Cnn1 => "CNN1",
            Arch::Cnn2 => "CNN2",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CNN1" => Ok(Arch::Cnn1),
            "CNN2" => Ok(Arch::Cnn2),
            _ => Err(Error::UnknownArch(s.to_string())),
        }
    }
}

/// Hyper-shape of the conv → pool → conv → pool → fc → softmax chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchShape {
    pub input_side: usize,
    pub conv1_kernel: usize,
    pub conv1_filters: usize,
    pub conv2_kernel: usize,
    pub conv2_filters: usize,
    pub classes: usize,
}

impl ArchShape {
    /// The small chain used for finite-difference checks: 8×8 input, 4 then 6 filters.
    pub fn reduced() -> Self {
        Self {
            input_side: 8,
            conv1_kernel: 3,
            conv1_filters: 4,
            conv2_kernel: 2,
            conv2_filters: 6,
            classes: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RandomVariable {
    F1,
    F2,
    FY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Prior,
    Likelihood,
}

/// Which random variable each layer belongs to, and the role of each variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGroup {
    /// One tag per layer, in layer order.
    pub tags: Vec<RandomVariable>,
}

impl LayerGroup {
    pub fn role(&self, var: RandomVariable) -> Role {
        match var {
            RandomVariable::F1 => Role::Prior,
            RandomVariable::F2 | RandomVariable::FY => Role::Likelihood,
        }
    }

    /// Indices of the layers tagged `var`.
    pub fn layers(&self, var: RandomVariable) -> Vec<usize> {
        self.tags
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == var)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    /// Parameters live at `param` (kernels) and `param + 1` (bias).
    Conv {
        kernel: usize,
        in_channels: usize,
        filters: usize,
        param: usize,
    },
    MaxPoolRelu,
    FullyConnected {
        inputs: usize,
        outputs: usize,
        param: usize,
    },
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub name: String,
    pub kind: LayerKind,
    pub output_shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `None` for reduced test variants.
    pub arch: Option<Arch>,
    pub shape: ArchShape,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerDesc>,
    pub groups: LayerGroup,
}

impl NetworkSpec {
    pub fn from_shape(arch: Option<Arch>, shape: ArchShape) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidArgument(msg));
        let ArchShape {
            input_side: side,
            conv1_kernel: k1,
            conv1_filters: c1,
            conv2_kernel: k2,
            conv2_filters: c2,
            classes,
        } = shape;
        if [side, k1, c1, k2, c2].contains(&0) || classes < 2 {
            return invalid(format!("degenerate architecture {shape:?}"));
        }
        if side < k1 {
            return invalid(format!("input side {side} smaller than kernel {k1}"));
        }
        let s1 = side - k1 + 1;
        if s1 < 2 {
            return invalid(format!("first conv output {s1}×{s1} cannot be pooled"));
        }
        let s2 = s1 / 2;
        if s2 < k2 {
            return invalid(format!("pooled map {s2}×{s2} smaller than kernel {k2}"));
        }
        let s3 = s2 - k2 + 1;
        if s3 < 2 {
            return invalid(format!("second conv output {s3}×{s3} cannot be pooled"));
        }
        let s4 = s3 / 2;
        let flat = s4 * s4 * c2;

        let layer = |name: &str, kind, output_shape: Vec<usize>| LayerDesc {
            name: name.to_string(),
            kind,
            output_shape,
        };
        let layers = vec![
            layer(
                "f1",
                LayerKind::Conv {
                    kernel: k1,
                    in_channels: 1,
                    filters: c1,
                    param: 0,
                },
                vec![s1, s1, c1],
            ),
            layer("f2", LayerKind::MaxPoolRelu, vec![s2, s2, c1]),
            layer(
                "f3",
                LayerKind::Conv {
                    kernel: k2,
                    in_channels: c1,
                    filters: c2,
                    param: 2,
                },
                vec![s3, s3, c2],
            ),
            layer("f4", LayerKind::MaxPoolRelu, vec![s4, s4, c2]),
            layer(
                "f5",
                LayerKind::FullyConnected {
                    inputs: flat,
                    outputs: classes,
                    param: 4,
                },
                vec![classes],
            ),
            layer("fY", LayerKind::Softmax, vec![classes]),
        ];
        use RandomVariable::*;
        Ok(Self {
            arch,
            shape,
            input_shape: vec![side, side, 1],
            layers,
            groups: LayerGroup {
                tags: vec![F1, F2, F2, FY, FY, FY],
            },
        })
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Shapes of every learnable tensor, in parameter order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for layer in &self.layers {
            match layer.kind {
                LayerKind::Conv {
                    kernel,
                    in_channels,
                    filters,
                    ..
                } => {
                    shapes.push(vec![kernel, kernel, in_channels, filters]);
                    shapes.push(vec![filters]);
                }
                LayerKind::FullyConnected {
                    inputs, outputs, ..
                } => {
                    shapes.push(vec![inputs, outputs]);
                    shapes.push(vec![outputs]);
                }
                LayerKind::MaxPoolRelu | LayerKind::Softmax => {}
            }
        }
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    pub fn classes(&self) -> usize {
        self.shape.classes
    }
}

/// Learnable tensors in layer order: conv1 kernels, conv1 bias, conv2
/// kernels, conv2 bias, fc weight `[inputs, outputs]`, fc bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub tensors: Vec<Tensor>,
}

/// Gradients and momentum buffers share the parameter layout.
pub type Gradients = Parameters;

impl Parameters {
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        Self {
            tensors: spec
                .param_shapes()
                .iter()
                .map(|s| Tensor::zeros(s))
                .collect(),
        }
    }

    /// He initialization (σ = √(2 / fan_in)) for weights, zero biases.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = SeededRng::stream(seed, INIT_STREAM);
        let tensors = spec
            .param_shapes()
            .iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let std = (2.0 / fan_in as f64).sqrt();
                Tensor::from_fn(shape, |_| std * rng.standard_normal())
            })
            .collect();
        Self { tensors }
    }

    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.param_shapes();
        if self.tensors.len() != expected.len()
            || self
                .tensors
                .iter()
                .zip(&expected)
                .any(|(t, s)| t.shape() != s.as_slice())
        {
            let got: Vec<&[usize]> = self.tensors.iter().map(|t| t.shape()).collect();
            return shape_err(format!(
                "parameters {got:?} do not match network {expected:?}"
            ));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn add_assign(&mut self, other: &Parameters) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return shape_err("parameter sets differ in length");
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(factor));
    }
}

pub fn build_network(arch: Arch, seed: u64) -> (NetworkSpec, Parameters) {
    let spec = NetworkSpec::from_shape(Some(arch), arch.shape())
        .expect("reference architectures are valid");
    let params = Parameters::init(&spec, seed);
    (spec, params)
}

/// Like [`build_network`] but from a textual tag such as `"CNN1"`.
pub fn build_network_named(tag: &str, seed: u64) -> Result<(NetworkSpec, Parameters)> {
    Ok(build_network(tag.parse()?, seed))
}

pub fn build_custom(shape: ArchShape, seed: u64) -> Result<(NetworkSpec, Parameters)> {
    let spec = NetworkSpec::from_shape(None, shape)?;
    let params = Parameters::init(&spec, seed);
    Ok((spec, params))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub name: String,
    pub output: Tensor,
    /// Winning input index per pooled element, for pooling layers.
    pub argmax: Option<Vec<usize>>,
}

/// Every layer output of one forward pass: the materialized chain F1 → … → FY.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub input: Tensor,
    pub layers: Vec<LayerRecord>,
}

impl Capture {
    pub fn layer(&self, name: &str) -> Option<&LayerRecord> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn probabilities(&self) -> &[f64] {
        self.layers
            .last()
            .expect("captures are never empty")
            .output
            .data()
    }

    pub fn logits(&self) -> &[f64] {
        self.layers[self.layers.len() - 2].output.data()
    }

    pub fn predicted(&self) -> usize {
        tensor::argmax(self.probabilities())
    }
}

fn conv_params(params: &Parameters, param: usize) -> (&Tensor, &[f64]) {
    (&params.tensors[param], params.tensors[param + 1].data())
}

pub fn forward(spec: &NetworkSpec, params: &Parameters, image: &Tensor) -> Result<Capture> {
    if image.shape() != spec.input_shape.as_slice() {
        return shape_err(format!(
            "network expects input {:?}, got {:?}",
            spec.input_shape,
            image.shape()
        ));
    }
    params.check_against(spec)?;

    let mut records: Vec<LayerRecord> = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let current = records.last().map_or(image, |r| &r.output);
        let (output, argmax) = match layer.kind {
            LayerKind::Conv { param, .. } => {
                let (k, b) = conv_params(params, param);
                (tensor::conv2d(current, k, b)?, None)
            }
            LayerKind::MaxPoolRelu => {
                let pooled = tensor::maxpool2(current)?;
                (tensor::relu(&pooled.output), Some(pooled.argmax))
            }
            LayerKind::FullyConnected { param, .. } => {
                let (w, b) = conv_params(params, param);
                (tensor::linear(current, w, b)?, None)
            }
            LayerKind::Softmax => (Tensor::vector(tensor::softmax(current.data())), None),
        };
        records.push(LayerRecord {
            name: layer.name.clone(),
            output,
            argmax,
        });
    }
    Ok(Capture {
        input: image.clone(),
        layers: records,
    })
}

/// Gradient of `cross_entropy(softmax output, label)` with respect to every parameter.
pub fn backward(
    spec: &NetworkSpec,
    params: &Parameters,
    capture: &Capture,
    label: usize,
) -> Result<Gradients> {
    params.check_against(spec)?;
    if capture.layers.len() != spec.layers.len()
        || capture.input.shape() != spec.input_shape.as_slice()
        || capture
            .layers
            .iter()
            .zip(&spec.layers)
            .any(|(r, l)| r.output.shape() != l.output_shape.as_slice())
    {
        return shape_err("capture does not match network layers (stale capture?)");
    }

    let mut grads = Parameters::zeros_like(spec);
    let last = spec.layers.len() - 1;
    if !matches!(spec.layers[last].kind, LayerKind::Softmax) {
        return Err(Error::InvalidArgument("network must end in softmax".into()));
    }
    // Softmax and cross-entropy fold into p − onehot(label) on the logits.
    let mut grad = Tensor::vector(tensor::softmax_cross_entropy_grad(
        capture.probabilities(),
        label,
    )?);

    for index in (0..last).rev() {
        let input = if index == 0 {
            &capture.input
        } else {
            &capture.layers[index - 1].output
        };
        let record = &capture.layers[index];
        grad = match spec.layers[index].kind {
            LayerKind::FullyConnected { param, .. } => {
                let g = tensor::linear_backward(input, &params.tensors[param], &grad)?;
                grads.tensors[param] = g.weight;
                grads.tensors[param + 1] = Tensor::vector(g.bias);
                g.input
            }
            LayerKind::MaxPoolRelu => {
                let grad = grad.reshape(record.output.shape())?;
                let through_relu = tensor::relu_backward(&record.output, &grad)?;
                let argmax = record.argmax.as_ref().ok_or_else(|| {
                    Error::Shape(format!("layer {} is missing pooling indices", record.name))
                })?;
                tensor::maxpool2_backward(input.shape(), argmax, &through_relu)?
            }
            LayerKind::Conv { param, .. } => {
                let g = tensor::conv2d_backward(input, &params.tensors[param], &grad, index > 0)?;
                grads.tensors[param] = g.kernels;
                grads.tensors[param + 1] = Tensor::vector(g.bias);
                match g.input {
                    Some(gi) => gi,
                    None => break,
                }
            }
            LayerKind::Softmax => {
                return Err(Error::InvalidArgument(
                    "softmax is only supported as the last layer".into(),
                ))
            }
        };
    }
    Ok(grads)
}

/// Loss and parameter gradients for one labelled example.
pub fn loss_and_gradients(
    spec: &NetworkSpec,
    params: &Parameters,
    image: &Tensor,
    label: usize,
) -> Result<(f64, Gradients)> {
    let capture = forward(spec, params, image)?;
    let loss = tensor::cross_entropy(capture.probabilities(), label)?;
    Ok((loss, backward(spec, params, &capture, label)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shapes() {
        let (spec, _) = build_network(Arch::Cnn1, 0);
        let shapes: Vec<Vec<usize>> = spec.layers.iter().map(|l| l.output_shape.clone()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![30, 30, 20],
                vec![15, 15, 20],
                vec![11, 11, 60],
                vec![5, 5, 60],
                vec![10],
                vec![10]
            ]
        );
        let (spec2, _) = build_network(Arch::Cnn2, 0);
        assert_eq!(spec2.layers[2].output_shape, vec![11, 11, 36]);
        assert_eq!(spec2.layers[3].output_shape, vec![5, 5, 36]);
        assert!(matches!(
            spec2.layers[4].kind,
            LayerKind::FullyConnected {
                inputs: 900,
                outputs: 10,
                ..
            }
        ));
    }

    #[test]
    fn parameter_counts() {
        // 3·3·20+20 + 5·5·20·60+60 + 1500·10+10
        assert_eq!(build_network(Arch::Cnn1, 0).0.parameter_count(), 45_270);
        // 3·3·20+20 + 5·5·20·36+36 + 900·10+10
        assert_eq!(build_network(Arch::Cnn2, 0).0.parameter_count(), 27_246);
    }

    #[test]
    fn unknown_arch_rejected() {
        assert!(matches!(
            build_network_named("CNN3", 0),
            Err(Error::UnknownArch(_))
        ));
        assert!(build_network_named("cnn2", 0).is_ok());
    }

    #[test]
    fn groups_and_roles() {
        let (spec, _) = build_network(Arch::Cnn1, 0);
        let g = &spec.groups;
        assert_eq!(g.layers(RandomVariable::F1), vec![0]);
        assert_eq!(g.layers(RandomVariable::F2), vec![1, 2]);
        assert_eq!(g.layers(RandomVariable::FY), vec![3, 4, 5]);
        assert_eq!(g.role(RandomVariable::F1), Role::Prior);
        assert_eq!(g.role(RandomVariable::F2), Role::Likelihood);
        assert_eq!(g.role(RandomVariable::FY), Role::Likelihood);
    }

    #[test]
    fn init_is_seeded_he() {
        let (_, a) = build_network(Arch::Cnn1, 4);
        let (_, b) = build_network(Arch::Cnn1, 4);
        let (_, c) = build_network(Arch::Cnn1, 5);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.tensors[1].data().iter().all(|&v| v == 0.0));
        let w = a.tensors[2].data();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 500.0).abs() < 0.1 * 2.0 / 500.0, "{var}");
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let (spec, params) = build_network(Arch::Cnn1, 0);
        assert!(forward(&spec, &params, &Tensor::zeros(&[28, 28, 1])).is_err());
    }

    #[test]
    fn one_hot_output_gives_zero_logit_gradient() {
        let (spec, mut params) = build_custom(ArchShape::reduced(), 1).unwrap();
        // Force an overwhelming logit for class 3 through the fc bias.
        for t in &mut params.tensors[4..5] {
            t.scale(0.0);
        }
        params.tensors[5].data_mut()[3] = 1e4;
        let image = Tensor::filled(&[8, 8, 1], 1.0);
        let capture = forward(&spec, &params, &image).unwrap();
        let grads = backward(&spec, &params, &capture, 3).unwrap();
        assert!(grads.tensors[5].data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn stale_capture_rejected() {
        let (spec, params) = build_custom(ArchShape::reduced(), 1).unwrap();
        let (spec1, params1) = build_network(Arch::Cnn1, 1);
        let capture = forward(&spec1, &params1, &Tensor::zeros(&[32, 32, 1])).unwrap();
        assert!(backward(&spec, &params, &capture, 0).is_err());
        let good = forward(&spec, &params, &Tensor::zeros(&[8, 8, 1])).unwrap();
        assert!(backward(&spec, &params, &good, 10).is_err());
    }

    #[test]
    fn invalid_shapes_rejected() {
        let mut s = ArchShape::reduced();
        s.conv2_kernel = 5;
        assert!(NetworkSpec::from_shape(None, s).is_err());
    }
}
