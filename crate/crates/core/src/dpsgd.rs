//! DP-SGD: Poisson lot sampling, per-example clipping, Gaussian noising and
//! the descent step, plus plain minibatch SGD as the non-private baseline.
//!
//! One private step on a lot `S` drawn with rate `q`:
//!
//! ```text
//! ḡᵢ = gᵢ / max(1, ‖gᵢ‖₂ / C)                    per example, over trainable groups
//! g̃  = (1/L) · (Σ_{i∈S} ḡᵢ + 𝒩(0, σ²C²I))        L = round(qN), the nominal lot size
//! θ  ← θ − γ·g̃                                    trainable groups only
//! ```
//!
//! Seeded determinism is preferred over a hardened noise source: this is a
//! research tool, not a production privacy mechanism.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::accountant::{self, EpsilonReport, DEFAULT_DELTA};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{self, ConfusionMatrix};
use crate::model::{backward_scaled, batch_gradient, FreezeMask, Model, TrainStrategy};
use crate::rng::{gaussian, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_CLIP: f64 = 1.0;
pub const DEFAULT_LOT_SIZE: usize = 32;
pub const LEARNING_RATE_RANGE: (f64, f64) = (1e-5, 0.1);

/// A privacy budget ε, possibly infinite (no privacy). Serializes as a
/// number, or as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Finite(f64),
    Infinite,
}

impl Budget {
    pub fn is_finite(self) -> bool {
        matches!(self, Budget::Finite(_))
    }

    pub fn value(self) -> f64 {
        match self {
            Budget::Finite(e) => e,
            Budget::Infinite => f64::INFINITY,
        }
    }

    pub fn from_f64(e: f64) -> Result<Self> {
        if e == f64::INFINITY {
            Ok(Budget::Infinite)
        } else if e > 0.0 && e.is_finite() {
            Ok(Budget::Finite(e))
        } else {
            Err(Error::arg(format!("epsilon must be positive, got {e}")))
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Finite(e) => write!(f, "{e}"),
            Budget::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Budget::Infinite),
            other => {
                let e: f64 = other
                    .parse()
                    .map_err(|_| Error::arg(format!("not an epsilon value: {s:?}")))?;
                Budget::from_f64(e)
            }
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Finite(e) => s.serialize_f64(*e),
            Budget::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(e) => Budget::from_f64(e),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Privacy parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon_target: Budget,
    pub delta: f64,
    pub clip_c: f64,
    pub noise_multiplier: f64,
    pub lot_size: usize,
    pub sampling_rate: f64,
    pub steps: u64,
}

/// Steps in `epochs` passes over `n` examples with lots of `lot_size`: `epochs · ⌈n/L⌉`.
pub fn steps_for(n: usize, lot_size: usize, epochs: usize) -> u64 {
    (epochs * n.div_ceil(lot_size.max(1))) as u64
}

fn lot_geometry(dataset_size: usize, lot_size: usize, epochs: usize) -> Result<(f64, u64)> {
    if dataset_size == 0 || lot_size == 0 || epochs == 0 {
        return Err(Error::arg("dataset size, lot size and epochs must be positive"));
    }
    if lot_size > dataset_size {
        return Err(Error::arg(format!(
            "lot size {lot_size} exceeds dataset size {dataset_size}"
        )));
    }
    Ok((
        lot_size as f64 / dataset_size as f64,
        steps_for(dataset_size, lot_size, epochs),
    ))
}

impl PrivacyParams {
    /// Private parameters whose noise multiplier is calibrated by the
    /// accountant so that `epochs` passes spend at most `epsilon`.
    pub fn calibrated(
        epsilon: f64,
        delta: f64,
        clip_c: f64,
        lot_size: usize,
        dataset_size: usize,
        epochs: usize,
    ) -> Result<Self> {
        let (q, steps) = lot_geometry(dataset_size, lot_size, epochs)?;
        let sigma = accountant::calibrate_sigma(epsilon, delta, q, steps)?;
        let p = PrivacyParams {
            epsilon_target: Budget::from_f64(epsilon)?,
            delta,
            clip_c,
            noise_multiplier: sigma,
            lot_size,
            sampling_rate: q,
            steps,
        };
        p.validate(dataset_size)?;
        Ok(p)
    }

    /// The ε = ∞ baseline: no clipping, no noise, no accounting.
    pub fn non_private(lot_size: usize, dataset_size: usize, epochs: usize) -> Result<Self> {
        let (q, steps) = lot_geometry(dataset_size, lot_size, epochs)?;
        Ok(PrivacyParams {
            epsilon_target: Budget::Infinite,
            delta: DEFAULT_DELTA,
            clip_c: DEFAULT_CLIP,
            noise_multiplier: 0.0,
            lot_size,
            sampling_rate: q,
            steps,
        })
    }

    pub fn is_private(&self) -> bool {
        self.epsilon_target.is_finite()
    }

    pub fn validate(&self, dataset_size: usize) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if !(self.clip_c > 0.0) || !self.clip_c.is_finite() {
            return Err(Error::Config(format!("clip must be positive, got {}", self.clip_c)));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return Err(Error::Config(format!(
                "noise multiplier must be >= 0, got {}",
                self.noise_multiplier
            )));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::Config(format!(
                "sampling rate must be in (0, 1], got {}",
                self.sampling_rate
            )));
        }
        if self.lot_size == 0 || self.steps == 0 {
            return Err(Error::Config("lot size and steps must be positive".into()));
        }
        match self.epsilon_target {
            Budget::Finite(_) if self.noise_multiplier == 0.0 => {
                return Err(Error::Config(
                    "finite epsilon with zero noise multiplier violates the privacy contract".into(),
                ))
            }
            Budget::Infinite if self.noise_multiplier != 0.0 => {
                return Err(Error::Config("infinite epsilon must use zero noise".into()))
            }
            _ => {}
        }
        let nominal = (self.sampling_rate * dataset_size as f64).round() as usize;
        if nominal != self.lot_size {
            return Err(Error::Config(format!(
                "sampling rate {} over {dataset_size} examples gives lot size {nominal}, not {}",
                self.sampling_rate, self.lot_size
            )));
        }
        Ok(())
    }

    /// ε actually spent by these parameters, recomputed by the accountant.
    /// `None` for the non-private path.
    pub fn realized_epsilon(&self) -> Result<Option<EpsilonReport>> {
        if !self.is_private() {
            return Ok(None);
        }
        accountant::epsilon(self.sampling_rate, self.noise_multiplier, self.steps, self.delta).map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = LEARNING_RATE_RANGE;
        if !(self.learning_rate >= lo && self.learning_rate <= hi) {
            return Err(Error::Config(format!(
                "learning rate {} outside [{lo}, {hi}]",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Rescales `g` to norm at most `clip_c`. A gradient already within the bound
/// is returned bit-for-bit unchanged.
pub fn clip<T: Scalar>(g: &Tensor<T>, clip_c: T) -> Result<Tensor<T>> {
    if !(clip_c > T::zero()) {
        return Err(Error::arg(format!("clip threshold must be positive, got {clip_c}")));
    }
    let norm = g.l2_norm();
    if norm <= clip_c {
        return Ok(g.clone());
    }
    let mut out = g.clone();
    out.scale(clip_c / norm);
    Ok(out)
}

/// `(1/L)(Σ clipped + 𝒩(0, σ²C²I))` over vectors of length `dim`. With `σ = 0`
/// no noise is drawn and the result is the sum divided by `L`.
pub fn noisy_aggregate<T: Scalar>(
    clipped: &[Tensor<T>],
    dim: usize,
    sigma: f64,
    clip_c: f64,
    lot_size: usize,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    if !(sigma >= 0.0) {
        return Err(Error::arg(format!("noise multiplier must be >= 0, got {sigma}")));
    }
    if lot_size == 0 {
        return Err(Error::arg("lot size must be positive"));
    }
    let mut sum = Tensor::zeros(&[dim]);
    for g in clipped {
        sum.add_assign(g)?;
    }
    if sigma > 0.0 {
        sum.add_assign(&gaussian::<T>(rng, sigma * clip_c, &[dim])?)?;
    }
    sum.scale(T::one() / T::from_usize(lot_size).expect("lot size fits"));
    Ok(sum)
}

/// `θ − γ·g`.
pub fn step<T: Scalar>(theta: &Tensor<T>, noisy_grad: &Tensor<T>, gamma: T) -> Result<Tensor<T>> {
    let mut out = theta.clone();
    out.axpy(-gamma, noisy_grad)?;
    Ok(out)
}

/// Applies `θ ← θ − γ·g` to the trainable groups of `model`; frozen groups are
/// not touched.
pub fn apply_update<T: Scalar>(model: &mut Model<T>, mask: &FreezeMask, grad: &Tensor<T>, gamma: T) -> Result<()> {
    let theta = Tensor::vector(model.trainable_parameters(mask));
    let next = step(&theta, grad, gamma)?;
    model.set_trainable_parameters(mask, next.data())
}

/// Poisson sampling: each of `0..n` is included independently with
/// probability `q`. `q = 1` returns every index without consuming randomness.
pub fn sample_lot(n: usize, q: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::arg(format!("sampling rate must be in (0, 1], got {q}")));
    }
    if q == 1.0 {
        return Ok((0..n).collect());
    }
    Ok((0..n).filter(|_| rng.bernoulli(q)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Examples that contributed a gradient.
    pub examples: usize,
    /// Summed (not averaged) loss over those examples.
    pub loss_sum: f64,
}

/// The private optimizer. Sampling and noise draw from independent streams so
/// that changing σ never changes which lots are sampled.
#[derive(Debug, Clone)]
pub struct PrivateOptimizer {
    params: PrivacyParams,
    learning_rate: f64,
    sampling: Rng,
    noise: Rng,
    steps_taken: u64,
}

impl PrivateOptimizer {
    pub fn new(params: PrivacyParams, learning_rate: f64, rng: &Rng) -> Self {
        PrivateOptimizer {
            params,
            learning_rate,
            sampling: rng.fork(1),
            noise: rng.fork(2),
            steps_taken: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    /// Samples a lot from `data` and takes one step on it.
    pub fn step<T: Scalar>(&mut self, model: &mut Model<T>, mask: &FreezeMask, data: &Dataset<T>) -> Result<StepStats> {
        let lot = sample_lot(data.len(), self.params.sampling_rate, &mut self.sampling)?;
        self.step_on_lot(model, mask, data, &lot)
    }

    /// One step on an explicit lot. An empty lot still counts as a step: the
    /// update is pure noise, and the accountant has already charged for it.
    pub fn step_on_lot<T: Scalar>(
        &mut self,
        model: &mut Model<T>,
        mask: &FreezeMask,
        data: &Dataset<T>,
        lot: &[usize],
    ) -> Result<StepStats> {
        let dim = mask.trainable_len(model);
        let c = T::from_f64_lossy(self.params.clip_c);
        let mut clipped = Vec::with_capacity(lot.len());
        let mut loss_sum = 0.0;
        for &i in lot {
            let (loss, g) = backward_scaled(
                model,
                mask,
                std::slice::from_ref(&data.inputs[i]),
                &[data.targets[i]],
                T::one(),
            )?;
            let g = clip(&g, c)?;
            debug_assert!(g.l2_norm() <= c * (T::one() + T::from_f64_lossy(8.0) * T::epsilon()));
            loss_sum += loss.to_f64_lossy();
            clipped.push(g);
        }
        let noisy = noisy_aggregate(
            &clipped,
            dim,
            self.params.noise_multiplier,
            self.params.clip_c,
            self.params.lot_size,
            &mut self.noise,
        )?;
        apply_update(model, mask, &noisy, T::from_f64_lossy(self.learning_rate))?;
        self.steps_taken += 1;
        Ok(StepStats {
            examples: lot.len(),
            loss_sum,
        })
    }
}

/// Plain minibatch SGD on the mean batch loss.
#[derive(Debug, Clone)]
pub struct SgdOptimizer {
    learning_rate: f64,
    steps_taken: u64,
}

impl SgdOptimizer {
    pub fn new(learning_rate: f64) -> Self {
        SgdOptimizer {
            learning_rate,
            steps_taken: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn step_on_batch<T: Scalar>(
        &mut self,
        model: &mut Model<T>,
        mask: &FreezeMask,
        data: &Dataset<T>,
        batch: &[usize],
    ) -> Result<StepStats> {
        let sub = data.subset(batch);
        let (loss, g) = batch_gradient(model, mask, &sub.inputs, &sub.targets)?;
        apply_update(model, mask, &g, T::from_f64_lossy(self.learning_rate))?;
        self.steps_taken += 1;
        Ok(StepStats {
            examples: batch.len(),
            loss_sum: loss.to_f64_lossy() * batch.len() as f64,
        })
    }
}

/// Deterministic part of one epoch's statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the examples seen this epoch.
    pub loss: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub mask: FreezeMask,
    pub epochs: Vec<EpochStats>,
    /// Wall-clock seconds per epoch, training only (evaluation excluded).
    pub epoch_seconds: Vec<f64>,
    /// Confusion matrix of the final epoch's evaluation.
    pub confusion: ConfusionMatrix,
    pub steps_executed: u64,
    pub realized: Option<EpsilonReport>,
}

/// Confusion matrix of `model` on `data`, predicted in chunks.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<ConfusionMatrix> {
    let mut preds = Vec::with_capacity(data.len());
    for chunk in data.inputs.chunks(512) {
        preds.extend(model.predict_batch(chunk)?);
    }
    metrics::confusion(&data.targets, &preds, &data.labels)
}

/// Trains `model` in place for `opt.epochs` epochs of `⌈N/L⌉` steps each,
/// evaluating on `eval` (or the training set) after every epoch.
///
/// The private path samples Poisson lots and runs the clipped, noised update;
/// the ε = ∞ path runs shuffled minibatch SGD with batches of `L`.
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    data: &Dataset<T>,
    eval: Option<&Dataset<T>>,
    strategy: TrainStrategy,
    privacy: &PrivacyParams,
    opt: &OptimizerConfig,
) -> Result<TrainOutcome> {
    opt.validate()?;
    privacy.validate(data.len())?;
    let expected_steps = steps_for(data.len(), privacy.lot_size, opt.epochs);
    if expected_steps != privacy.steps {
        return Err(Error::Config(format!(
            "privacy parameters were accounted for {} steps but training runs {expected_steps}",
            privacy.steps
        )));
    }
    let mask = model.apply_strategy(strategy)?;
    let eval = eval.unwrap_or(data);
    let rng = Rng::new(opt.seed);
    let per_epoch = data.len().div_ceil(privacy.lot_size);

    let mut private = privacy
        .is_private()
        .then(|| PrivateOptimizer::new(privacy.clone(), opt.learning_rate, &rng));
    let mut sgd = SgdOptimizer::new(opt.learning_rate);
    let mut shuffle = rng.fork(3);
    let mut order: Vec<usize> = (0..data.len()).collect();

    let mut epochs = Vec::with_capacity(opt.epochs);
    let mut epoch_seconds = Vec::with_capacity(opt.epochs);
    let mut confusion = ConfusionMatrix::new(data.labels.clone());
    for epoch in 1..=opt.epochs {
        let start = Instant::now();
        let (mut seen, mut loss_sum) = (0usize, 0.0);
        match private.as_mut() {
            Some(p) => {
                for _ in 0..per_epoch {
                    let s = p.step(model, &mask, data)?;
                    seen += s.examples;
                    loss_sum += s.loss_sum;
                }
            }
            None => {
                shuffle.shuffle(&mut order);
                for batch in order.chunks(privacy.lot_size) {
                    let s = sgd.step_on_batch(model, &mask, data, batch)?;
                    seen += s.examples;
                    loss_sum += s.loss_sum;
                }
            }
        }
        epoch_seconds.push(start.elapsed().as_secs_f64());
        confusion = evaluate(model, eval)?;
        let report = metrics::report(&confusion);
        epochs.push(EpochStats {
            epoch,
            loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
            accuracy: report.accuracy,
            macro_f1: report.macro_f1,
        });
    }

    let steps_executed = private.as_ref().map_or(sgd.steps_taken(), PrivateOptimizer::steps_taken);
    assert_eq!(
        steps_executed, privacy.steps,
        "executed step count diverged from the accounted step count"
    );
    Ok(TrainOutcome {
        mask,
        epochs,
        epoch_seconds,
        confusion,
        steps_executed,
        realized: privacy.realized_epsilon()?,
    })
}
