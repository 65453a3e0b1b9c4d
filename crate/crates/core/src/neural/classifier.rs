use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{backward_stack, check_stack, forward_stack, LstmLayer, StepInput, INIT_SCALE};
use super::matrix::{dot, sigmoid, Matrix};
use super::network::{LossKind, Network};
use crate::error::{Error, Result};

/// Learned character embedding, a stack of LSTM layers and a single sigmoid
/// unit reading the top layer's final hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceClassifier {
    /// `vocab x embed_dim`
    pub embedding: Matrix,
    pub layers: Vec<LstmLayer>,
    /// `1 x top_hidden`
    pub dense: Matrix,
    /// `1 x 1`
    pub dense_bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub chars: Vec<usize>,
    /// 1.0 for the positive class, 0.0 otherwise.
    pub label: f64,
}

impl SequenceClassifier {
    /// `dims` lists the embedding width followed by each LSTM hidden size,
    /// e.g. `[15, 35, 25]`.
    pub fn new<R: Rng>(vocab: usize, dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) || vocab == 0 {
            return Err(Error::Shape(format!("bad classifier dims {dims:?}")));
        }
        let embedding = Matrix::uniform(vocab, dims[0], INIT_SCALE, rng);
        let layers = dims
            .windows(2)
            .map(|w| LstmLayer::new(w[0], w[1], rng))
            .collect();
        let top = *dims.last().unwrap();
        Ok(SequenceClassifier {
            embedding,
            layers,
            dense: Matrix::uniform(1, top, INIT_SCALE, rng),
            dense_bias: Matrix::zeros(1, 1),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn check(&self) -> Result<()> {
        check_stack(&self.layers)?;
        if self.layers[0].input_dim != self.embedding.cols() {
            return Err(Error::Shape(
                "embedding width does not match first layer".into(),
            ));
        }
        let top = self.layers.last().unwrap().hidden_dim;
        if self.dense.rows() != 1 || self.dense.cols() != top || self.dense_bias.len() != 1 {
            return Err(Error::Shape("dense head does not match top layer".into()));
        }
        Ok(())
    }

    fn validate_input(&self, chars: &[usize]) -> Result<()> {
        if chars.is_empty() {
            return Err(Error::EmptyInput("character sequence"));
        }
        if let Some(&bad) = chars.iter().find(|&&c| c >= self.vocab_size()) {
            return Err(Error::Vocab {
                index: bad,
                size: self.vocab_size(),
            });
        }
        Ok(())
    }

    fn logit_with_trace(&self, chars: &[usize]) -> (f64, super::lstm::StackTrace) {
        let inputs: Vec<StepInput<'_>> = chars
            .iter()
            .map(|&c| StepInput::Dense(self.embedding.row(c)))
            .collect();
        let trace = forward_stack(&self.layers, &inputs, None);
        let h = *trace.top_outputs().last().unwrap();
        let z = dot(self.dense.row(0), h) + self.dense_bias.get(0, 0);
        (z, trace)
    }

    pub fn logit(&self, chars: &[usize]) -> Result<f64> {
        self.validate_input(chars)?;
        Ok(self.logit_with_trace(chars).0)
    }

    pub fn predict(&self, chars: &[usize]) -> Result<f64> {
        self.logit(chars).map(sigmoid)
    }
}

/// Binary cross-entropy from a logit, stable for large |z|.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl Network for SequenceClassifier {
    type Example = LabeledSequence;

    fn head(&self) -> LossKind {
        LossKind::BinaryCE
    }

    fn params(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.embedding];
        for l in &self.layers {
            out.extend(l.params());
        }
        out.push(&self.dense);
        out.push(&self.dense_bias);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embedding];
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        out.push(&mut self.dense);
        out.push(&mut self.dense_bias);
        out
    }

    fn zeros_like(&self) -> Self {
        SequenceClassifier {
            embedding: Matrix::zeros(self.embedding.rows(), self.embedding.cols()),
            layers: self.layers.iter().map(LstmLayer::zeros_like).collect(),
            dense: Matrix::zeros(1, self.dense.cols()),
            dense_bias: Matrix::zeros(1, 1),
        }
    }

    fn accumulate(
        &self,
        example: &LabeledSequence,
        grads: Option<&mut Self>,
    ) -> Result<(f64, usize)> {
        self.validate_input(&example.chars)?;
        let (z, trace) = self.logit_with_trace(&example.chars);
        let loss = bce_with_logit(z, example.label);
        let Some(grads) = grads else {
            return Ok((loss, 1));
        };
        let dz = sigmoid(z) - example.label;
        let steps = example.chars.len();
        let top_h = trace.top_outputs()[steps - 1].to_vec();
        grads.dense.add_outer(&[dz], &top_h);
        grads.dense_bias.as_mut_slice()[0] += dz;

        let top = self.dense.cols();
        let mut d_top = vec![vec![0.0; top]; steps];
        d_top[steps - 1] = self.dense.row(0).iter().map(|w| w * dz).collect();
        let (dx, _) = backward_stack(&self.layers, &trace, &d_top, None, &mut grads.layers);
        for (&c, d) in example.chars.iter().zip(dx) {
            if let Some(d) = d {
                super::matrix::axpy(1.0, &d, grads.embedding.row_mut(c));
            }
        }
        Ok((loss, 1))
    }
}
