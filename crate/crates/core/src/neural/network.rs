//! The training loop shared by every model: batch losses, full-batch
//! gradients, seeded shuffling and the finite-difference gradient checker.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::optim::{Optimizer, OptimizerState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Sigmoid scalar head.
    BinaryCE,
    /// Softmax head.
    CategoricalCE,
}

/// A differentiable model whose gradients have the same type as its
/// parameters.
pub trait Network: Clone {
    type Example: Clone;

    fn head(&self) -> LossKind;
    fn params(&self) -> Vec<&Matrix>;
    fn params_mut(&mut self) -> Vec<&mut Matrix>;
    fn zeros_like(&self) -> Self;

    /// Loss of one example summed over its scored positions, and the number
    /// of positions. When `grads` is given, the gradient of the summed loss
    /// is added to it.
    fn accumulate(&self, example: &Self::Example, grads: Option<&mut Self>)
        -> Result<(f64, usize)>;

    /// Pads a batch in place to a common length. Padded positions must be
    /// masked by `accumulate`.
    fn pad_batch(_batch: &mut [Self::Example]) {}

    fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub loss: LossKind,
    pub seed: u64,
    pub shuffle: bool,
    /// Rescale the batch gradient to this global L2 norm when it is exceeded.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    /// Stop once the epoch loss falls below this value.
    #[serde(default)]
    pub target_loss: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

/// Default max-norm used when clipping is switched on without a value.
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Mean loss over a batch (all scored positions) and its gradient.
pub fn loss_and_grads<N: Network>(
    net: &N,
    batch: &[N::Example],
    loss: LossKind,
) -> Result<(f64, N)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if loss != net.head() {
        return Err(Error::Config(format!(
            "loss {loss:?} does not match model head {:?}",
            net.head()
        )));
    }
    let mut grads = net.zeros_like();
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in batch {
        let (l, n) = net.accumulate(ex, Some(&mut grads))?;
        total += l;
        count += n;
    }
    if count == 0 {
        return Err(Error::Data("batch has no scored positions".into()));
    }
    let mean = total / count as f64;
    if !mean.is_finite() {
        return Err(Error::Numerical { epoch: 0, batch: 0 });
    }
    let scale = 1.0 / count as f64;
    for g in grads.params_mut() {
        g.scale(scale);
    }
    Ok((mean, grads))
}

/// Mean loss without gradients.
pub fn batch_loss<N: Network>(net: &N, batch: &[N::Example]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in batch {
        let (l, n) = net.accumulate(ex, None)?;
        total += l;
        count += n;
    }
    if count == 0 {
        return Err(Error::Data("batch has no scored positions".into()));
    }
    Ok(total / count as f64)
}

fn clip<N: Network>(grads: &mut N, max_norm: f64) {
    let norm: f64 = grads
        .params()
        .iter()
        .flat_map(|m| m.as_slice())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        for g in grads.params_mut() {
            g.scale(max_norm / norm);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss per epoch, measured over the batches as they were trained.
    pub loss_curve: Vec<f64>,
    pub steps: u64,
}

/// What to do after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochControl {
    Continue,
    Stop,
}

pub fn train<N: Network>(
    net: &mut N,
    dataset: &[N::Example],
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_with(net, dataset, config, |_, _, _| EpochControl::Continue)
}

/// Minibatch training. Shuffling is driven by a generator seeded from
/// `config.seed`, so a run is a pure function of the initial parameters,
/// the dataset order and the config.
///
/// On a non-finite batch loss training aborts before the offending update;
/// `net` then holds the last good parameters.
pub fn train_with<N, F>(
    net: &mut N,
    dataset: &[N::Example],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    N: Network,
    F: FnMut(usize, f64, &N) -> EpochControl,
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4531);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut state = OptimizerState::new(net);
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        let mut batches = 0usize;
        for (batch_id, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut batch: Vec<N::Example> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            N::pad_batch(&mut batch);
            let (loss, mut grads) =
                loss_and_grads(net, &batch, config.loss).map_err(|e| match e {
                    Error::Numerical { .. } => Error::Numerical {
                        epoch,
                        batch: batch_id,
                    },
                    other => other,
                })?;
            if grads.params().iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical {
                    epoch,
                    batch: batch_id,
                });
            }
            if let Some(max_norm) = config.clip_norm {
                clip(&mut grads, max_norm);
            }
            state.step(net, &grads, &config.optimizer)?;
            weighted += loss;
            batches += 1;
        }
        let epoch_loss = weighted / batches as f64;
        curve.push(epoch_loss);
        log::debug!("epoch {} loss {:.6}", epoch + 1, epoch_loss);
        if config.target_loss.is_some_and(|t| epoch_loss < t) {
            break;
        }
        if on_epoch(epoch, epoch_loss, net) == EpochControl::Stop {
            break;
        }
    }
    Ok(TrainReport {
        loss_curve: curve,
        steps: state.steps(),
    })
}

/// Step used by [`gradient_check`] unless the caller picks another.
pub const DEFAULT_GRADCHECK_STEP: f64 = 1e-2;

/// Largest relative error between analytic gradients and numeric ones,
/// over every parameter: `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// Numeric gradients use the fourth-order central difference
/// `(-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h`. The two-point
/// stencil bottoms out near 5e-12 absolute error in f64, which is larger
/// than 1e-5 relative for the many gradients below 1e-6 that deep LSTM
/// stacks produce; the wider stencil allows a larger step at the same
/// truncation order.
pub fn gradient_check<N: Network>(net: &N, batch: &[N::Example], step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let (_, analytic) = loss_and_grads(net, batch, net.head())?;
    let analytic: Vec<Vec<f64>> = analytic
        .params()
        .iter()
        .map(|m| m.as_slice().to_vec())
        .collect();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (k, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = probe.params()[k].as_slice()[j];
            let mut at = |delta: f64| -> Result<f64> {
                probe.params_mut()[k].as_mut_slice()[j] = orig + delta;
                let l = batch_loss(&probe, batch);
                probe.params_mut()[k].as_mut_slice()[j] = orig;
                l
            };
            let (p1, m1, p2, m2) = (at(step)?, at(-step)?, at(2.0 * step)?, at(-2.0 * step)?);
            let numeric = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
