//! Layered networks over a frozen featurizer, and the freeze-mask strategies
//! that decide which layers a training run may update.
//!
//! Every model has the same skeleton:
//!
//! ```text
//! input [positions × dim]
//!   → hidden dense layers, applied position-wise
//!   → mean-pool over positions, or an Elman recurrent layer read at the last position
//!   → output dense layer → class logits
//! ```
//!
//! The featurizer itself carries no parameters and is never trained, the
//! counterpart of frozen input embeddings. Each dense or recurrent layer is one
//! parameter group; a [`FreezeMask`] holds one trainability flag per group.

mod checkpoint;
mod network;

pub use checkpoint::{read_checkpoint, write_checkpoint};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurizer {
    /// Token counts hashed into `dim` buckets; one position.
    HashedBagOfWords { dim: usize },
    /// Each token in a `±window` neighbourhood hashed into its own position of width `dim`.
    WindowFeatures { window: usize, dim: usize },
    /// Pre-computed numeric features of width `dim`, used as-is.
    Dense { dim: usize },
}

impl Featurizer {
    pub fn dim(&self) -> usize {
        match *self {
            Featurizer::HashedBagOfWords { dim }
            | Featurizer::WindowFeatures { dim, .. }
            | Featurizer::Dense { dim } => dim,
        }
    }

    pub fn positions(&self) -> usize {
        match *self {
            Featurizer::WindowFeatures { window, .. } => 2 * window + 1,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    SequenceTagging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub featurizer: Featurizer,
    pub hidden_layers: Vec<HiddenLayer>,
    /// Width of the recurrent aggregation layer, if the model has one.
    #[serde(default)]
    pub recurrent_width: Option<usize>,
    pub output_classes: usize,
    pub task: Task,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.featurizer.dim() == 0 {
            return Err(Error::arg("featurizer dimension must be positive"));
        }
        if self.output_classes < 2 {
            return Err(Error::arg(format!(
                "output_classes must be >= 2, got {}",
                self.output_classes
            )));
        }
        if let Some(i) = self.hidden_layers.iter().position(|l| l.width == 0) {
            return Err(Error::arg(format!("hidden layer {} has zero width", i + 1)));
        }
        if self.recurrent_width == Some(0) {
            return Err(Error::arg("recurrent layer has zero width"));
        }
        Ok(())
    }

    /// Total parameter count of the trainable stack (the featurizer has none).
    pub fn parameter_count(&self) -> usize {
        self.group_shapes().iter().map(GroupShape::len).sum()
    }

    fn group_shapes(&self) -> Vec<GroupShape> {
        let mut shapes = Vec::new();
        let mut fan_in = self.featurizer.dim();
        for layer in &self.hidden_layers {
            shapes.push(GroupShape {
                kind: GroupKind::Hidden(layer.activation),
                fan_in,
                fan_out: layer.width,
            });
            fan_in = layer.width;
        }
        if let Some(width) = self.recurrent_width {
            shapes.push(GroupShape {
                kind: GroupKind::Recurrent,
                fan_in,
                fan_out: width,
            });
            fan_in = width;
        }
        shapes.push(GroupShape {
            kind: GroupKind::Output,
            fan_in,
            fan_out: self.output_classes,
        });
        shapes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    Hidden(Activation),
    Recurrent,
    Output,
}

#[derive(Debug, Clone, Copy)]
struct GroupShape {
    kind: GroupKind,
    fan_in: usize,
    fan_out: usize,
}

impl GroupShape {
    fn len(&self) -> usize {
        let recurrent = if self.kind == GroupKind::Recurrent {
            self.fan_out * self.fan_out
        } else {
            0
        };
        self.fan_in * self.fan_out + recurrent + self.fan_out
    }
}

/// One layer's parameters. Flattened order is `weight`, then `recurrent`
/// (recurrent layers only), then `bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup<T> {
    pub kind: GroupKind,
    /// `[fan_in, fan_out]`
    pub weight: Tensor<T>,
    /// `[fan_out, fan_out]` hidden-to-hidden weights.
    pub recurrent: Option<Tensor<T>>,
    /// `[fan_out]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> ParamGroup<T> {
    pub fn len(&self) -> usize {
        self.weight.len() + self.recurrent.as_ref().map_or(0, Tensor::len) + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten_into(&self, out: &mut Vec<T>) {
        out.extend_from_slice(self.weight.data());
        if let Some(r) = &self.recurrent {
            out.extend_from_slice(r.data());
        }
        out.extend_from_slice(self.bias.data());
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        self.flatten_into(&mut out);
        out
    }

    /// Overwrites the group from `src`, returning the unconsumed remainder.
    pub fn assign_from<'a>(&mut self, src: &'a [T]) -> &'a [T] {
        let (w, rest) = src.split_at(self.weight.len());
        self.weight.data_mut().copy_from_slice(w);
        let rest = match &mut self.recurrent {
            Some(r) => {
                let (rw, rest) = rest.split_at(r.len());
                r.data_mut().copy_from_slice(rw);
                rest
            }
            None => rest,
        };
        let (b, rest) = rest.split_at(self.bias.len());
        self.bias.data_mut().copy_from_slice(b);
        rest
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    spec: ModelSpec,
    groups: Vec<ParamGroup<T>>,
}

impl<T: Scalar> Model<T> {
    /// Builds a model with weights and biases drawn uniformly from
    /// `[-1/√fan_in, 1/√fan_in]` per layer, in declaration order. Recurrent
    /// hidden-to-hidden weights use the layer width as their fan-in.
    pub fn build(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let groups = spec
            .group_shapes()
            .into_iter()
            .map(|shape| {
                let bound = 1.0 / (shape.fan_in as f64).sqrt();
                let mut draw = |n: usize, bound: f64| -> Vec<T> {
                    (0..n)
                        .map(|_| T::from_f64_lossy(rng.uniform_range(-bound, bound)))
                        .collect()
                };
                let weight = Tensor::from_vec(
                    &[shape.fan_in, shape.fan_out],
                    draw(shape.fan_in * shape.fan_out, bound),
                )?;
                let recurrent = if shape.kind == GroupKind::Recurrent {
                    let rb = 1.0 / (shape.fan_out as f64).sqrt();
                    Some(Tensor::from_vec(
                        &[shape.fan_out, shape.fan_out],
                        draw(shape.fan_out * shape.fan_out, rb),
                    )?)
                } else {
                    None
                };
                let bias = Tensor::vector(draw(shape.fan_out, bound));
                Ok(ParamGroup {
                    kind: shape.kind,
                    weight,
                    recurrent,
                    bias,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            spec: spec.clone(),
            groups,
        })
    }

    /// A model with every parameter set to zero.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        let mut model = Model::build(spec, &mut Rng::new(0))?;
        for g in &mut model.groups {
            g.weight.scale(T::zero());
            if let Some(r) = &mut g.recurrent {
                r.scale(T::zero());
            }
            g.bias.scale(T::zero());
        }
        Ok(model)
    }

    pub(crate) fn from_groups(spec: ModelSpec, groups: Vec<ParamGroup<T>>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.group_shapes();
        if shapes.len() != groups.len()
            || shapes.iter().zip(&groups).any(|(s, g)| {
                s.kind != g.kind || g.weight.shape() != [s.fan_in, s.fan_out] || g.len() != s.len()
            })
        {
            return Err(Error::Checkpoint(
                "parameter groups do not match the model spec".into(),
            ));
        }
        Ok(Model { spec, groups })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn groups(&self) -> &[ParamGroup<T>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup<T>] {
        &mut self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.groups.iter().map(ParamGroup::len).sum()
    }

    /// All parameters, flattened in declaration order.
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for g in &self.groups {
            g.flatten_into(&mut out);
        }
        out
    }

    /// Parameters of the trainable groups only, flattened in declaration order.
    pub fn trainable_parameters(&self, mask: &FreezeMask) -> Vec<T> {
        let mut out = Vec::new();
        for (g, _) in self.groups.iter().zip(mask.flags()).filter(|(_, &t)| t) {
            g.flatten_into(&mut out);
        }
        out
    }

    pub fn set_trainable_parameters(&mut self, mask: &FreezeMask, values: &[T]) -> Result<()> {
        let expected = mask.trainable_len(self);
        if values.len() != expected {
            return Err(Error::Shape {
                expected: vec![expected],
                actual: vec![values.len()],
            });
        }
        let mut rest = values;
        for (g, _) in self.groups.iter_mut().zip(mask.flags()).filter(|(_, &t)| t) {
            rest = g.assign_from(rest);
        }
        Ok(())
    }

    /// Derives the freeze mask for `strategy`.
    pub fn apply_strategy(&self, strategy: TrainStrategy) -> Result<FreezeMask> {
        let n = self.groups.len();
        let output = n - 1;
        let has_recurrent = self.spec.recurrent_width.is_some();
        let mut flags = vec![false; n];
        flags[output] = true;
        match strategy {
            TrainStrategy::HeadOnly => {}
            TrainStrategy::All => flags.iter_mut().for_each(|f| *f = true),
            TrainStrategy::LastK(k) => {
                for f in flags[..output].iter_mut().rev().take(k) {
                    *f = true;
                }
            }
            TrainStrategy::HeadRecurrent => {
                if !has_recurrent {
                    return Err(Error::arg(
                        "HeadRecurrent strategy needs a model with a recurrent layer",
                    ));
                }
                flags[output - 1] = true;
            }
        }
        Ok(FreezeMask { flags })
    }

    /// Class logits for one example of shape `[positions, dim]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Vec<T>> {
        let logits = self.forward_batch(std::slice::from_ref(input))?;
        Ok(logits.into_data())
    }

    /// Logits for a batch, as a `[batch, classes]` matrix.
    pub fn forward_batch(&self, inputs: &[Tensor<T>]) -> Result<Tensor<T>> {
        let refs: Vec<&Tensor<T>> = inputs.iter().collect();
        Ok(network::forward(self, &refs)?.logits)
    }

    /// Predicted class: argmax of the logits, lowest index on ties.
    pub fn predict(&self, input: &Tensor<T>) -> Result<usize> {
        Ok(argmax(&self.forward(input)?))
    }

    pub fn predict_batch(&self, inputs: &[Tensor<T>]) -> Result<Vec<usize>> {
        let logits = self.forward_batch(inputs)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }

    pub(crate) fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        let expected = [self.spec.featurizer.positions(), self.spec.featurizer.dim()];
        if input.shape() != expected {
            return Err(Error::Shape {
                expected: expected.to_vec(),
                actual: input.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub use network::{backward, backward_scaled, batch_gradient, mean_loss};

/// Which layers a run may update. Analogs of the fine-tuning strategies
/// "softmax on a frozen encoder", "last k layers", "everything but the
/// embeddings" and "recurrent head on a frozen encoder".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainStrategy {
    HeadOnly,
    LastK(usize),
    All,
    HeadRecurrent,
}

impl TrainStrategy {
    /// `LastK` from a signed count, rejecting negatives.
    pub fn last_k(k: i64) -> Result<Self> {
        usize::try_from(k)
            .map(TrainStrategy::LastK)
            .map_err(|_| Error::arg(format!("LastK needs k >= 0, got {k}")))
    }
}

impl fmt::Display for TrainStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainStrategy::HeadOnly => f.write_str("head"),
            TrainStrategy::LastK(k) => write!(f, "last{k}"),
            TrainStrategy::All => f.write_str("all"),
            TrainStrategy::HeadRecurrent => f.write_str("recurrent"),
        }
    }
}

impl FromStr for TrainStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "head" | "head_only" | "headonly" => Ok(TrainStrategy::HeadOnly),
            "all" => Ok(TrainStrategy::All),
            "recurrent" | "head_recurrent" | "headrecurrent" => Ok(TrainStrategy::HeadRecurrent),
            _ => {
                let k = s
                    .strip_prefix("last:")
                    .or_else(|| s.strip_prefix("last"))
                    .ok_or_else(|| Error::arg(format!("unknown strategy {s:?}")))?;
                let k: i64 = k
                    .parse()
                    .map_err(|_| Error::arg(format!("bad layer count in strategy {s:?}")))?;
                TrainStrategy::last_k(k)
            }
        }
    }
}

/// Per-group trainability flags, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FreezeMask {
    flags: Vec<bool>,
}

impl FreezeMask {
    pub fn all_trainable(groups: usize) -> Self {
        FreezeMask {
            flags: vec![true; groups],
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn is_trainable(&self, group: usize) -> bool {
        self.flags.get(group).copied().unwrap_or(false)
    }

    pub fn trainable_groups(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn trainable_len<T: Scalar>(&self, model: &Model<T>) -> usize {
        model
            .groups()
            .iter()
            .zip(&self.flags)
            .filter(|(_, &t)| t)
            .map(|(g, _)| g.len())
            .sum()
    }

    pub(crate) fn check(&self, groups: usize) -> Result<()> {
        if self.flags.len() != groups {
            return Err(Error::Shape {
                expected: vec![groups],
                actual: vec![self.flags.len()],
            });
        }
        if !self.flags.iter().any(|&f| f) {
            return Err(Error::arg("freeze mask leaves no trainable group"));
        }
        Ok(())
    }
}
