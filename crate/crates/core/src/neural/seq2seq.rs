//! Character-level encoder–decoder with optional scaled dot-product
//! attention.
//!
//! The encoder's final (h, c) of every layer seeds the matching decoder
//! layer. With attention on, each decoder step attends over the encoder's
//! top-layer states with query `Wq h_t`; the context is projected by `Wv` and
//! concatenated to `h_t` before the output projection. A zero `Wv` therefore
//! removes the context path entirely.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{
    backward_stack, check_stack, forward_stack, step_stack, LayerState, LstmLayer, StackTrace,
    StepInput, INIT_SCALE,
};
use super::matrix::{argmax, axpy, dot, softmax, Matrix};
use super::network::{LossKind, Network};
use crate::error::{Error, Result};
use crate::text::CharVocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EmbeddingMode {
    OneHot,
    Learned { dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqShape {
    pub hidden: usize,
    pub layers: usize,
    pub attention: bool,
    pub embedding: EmbeddingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    /// `H x H`, applied to the decoder state to form the query.
    pub query: Matrix,
    /// `H x H`, applied to the attended context.
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2Seq {
    pub src_vocab: CharVocab,
    pub tgt_vocab: CharVocab,
    pub embedding: EmbeddingMode,
    pub src_embedding: Option<Matrix>,
    pub tgt_embedding: Option<Matrix>,
    pub encoder: Vec<LstmLayer>,
    pub decoder: Vec<LstmLayer>,
    pub attention: Option<Attention>,
    /// `|tgt| x H` without attention, `|tgt| x 2H` with it.
    pub output: Matrix,
    pub output_bias: Matrix,
}

/// One training pair in teacher-forcing form: decoder inputs are
/// `SOS + target`, labels are `target + EOS`. PAD labels are masked and a PAD
/// in the source ends it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seq2SeqExample {
    pub source: Vec<usize>,
    pub dec_input: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Seq2SeqExample {
    pub fn new(source: Vec<usize>, target: &[usize]) -> Self {
        let mut dec_input = Vec::with_capacity(target.len() + 1);
        dec_input.push(CharVocab::SOS);
        dec_input.extend_from_slice(target);
        let mut labels = target.to_vec();
        labels.push(CharVocab::EOS);
        Seq2SeqExample {
            source,
            dec_input,
            labels,
        }
    }
}

struct AttnCache {
    query: Vec<f64>,
    alpha: Vec<f64>,
    context: Vec<f64>,
}

struct StepOut {
    logits: Vec<f64>,
    features: Vec<f64>,
    attn: Option<AttnCache>,
}

struct Forward {
    enc: StackTrace,
    dec: StackTrace,
    steps: Vec<StepOut>,
}

impl Seq2Seq {
    pub fn new<R: Rng>(
        src_vocab: CharVocab,
        tgt_vocab: CharVocab,
        shape: Seq2SeqShape,
        rng: &mut R,
    ) -> Result<Self> {
        if shape.hidden == 0 || shape.layers == 0 {
            return Err(Error::Shape(
                "seq2seq needs positive hidden size and depth".into(),
            ));
        }
        let (src_in, tgt_in, src_embedding, tgt_embedding) = match shape.embedding {
            EmbeddingMode::OneHot => (src_vocab.len(), tgt_vocab.len(), None, None),
            EmbeddingMode::Learned { dim } => {
                if dim == 0 {
                    return Err(Error::Shape("embedding dim must be positive".into()));
                }
                (
                    dim,
                    dim,
                    Some(Matrix::uniform(src_vocab.len(), dim, INIT_SCALE, rng)),
                    Some(Matrix::uniform(tgt_vocab.len(), dim, INIT_SCALE, rng)),
                )
            }
        };
        let h = shape.hidden;
        let stack = |input: usize, rng: &mut R| -> Vec<LstmLayer> {
            (0..shape.layers)
                .map(|l| LstmLayer::new(if l == 0 { input } else { h }, h, rng))
                .collect()
        };
        let encoder = stack(src_in, rng);
        let decoder = stack(tgt_in, rng);
        let attention = shape.attention.then(|| Attention {
            query: Matrix::uniform(h, h, INIT_SCALE, rng),
            value: Matrix::uniform(h, h, INIT_SCALE, rng),
        });
        let features = if shape.attention { 2 * h } else { h };
        let output = Matrix::uniform(tgt_vocab.len(), features, INIT_SCALE, rng);
        let output_bias = Matrix::zeros(tgt_vocab.len(), 1);
        Ok(Seq2Seq {
            src_vocab,
            tgt_vocab,
            embedding: shape.embedding,
            src_embedding,
            tgt_embedding,
            encoder,
            decoder,
            attention,
            output,
            output_bias,
        })
    }

    pub fn hidden(&self) -> usize {
        self.decoder.last().map(|l| l.hidden_dim).unwrap_or(0)
    }

    pub fn shape(&self) -> Seq2SeqShape {
        Seq2SeqShape {
            hidden: self.hidden(),
            layers: self.encoder.len(),
            attention: self.attention.is_some(),
            embedding: self.embedding,
        }
    }

    pub fn check(&self) -> Result<()> {
        check_stack(&self.encoder)?;
        check_stack(&self.decoder)?;
        if self.encoder.len() != self.decoder.len()
            || self
                .encoder
                .iter()
                .zip(&self.decoder)
                .any(|(e, d)| e.hidden_dim != d.hidden_dim)
        {
            return Err(Error::Shape("encoder and decoder state dims differ".into()));
        }
        let (src_in, tgt_in) = match self.embedding {
            EmbeddingMode::OneHot => (self.src_vocab.len(), self.tgt_vocab.len()),
            EmbeddingMode::Learned { dim } => {
                let ok = |m: &Option<Matrix>, v: usize| {
                    m.as_ref().is_some_and(|m| m.rows() == v && m.cols() == dim)
                };
                if !ok(&self.src_embedding, self.src_vocab.len())
                    || !ok(&self.tgt_embedding, self.tgt_vocab.len())
                {
                    return Err(Error::Shape(
                        "embedding tables do not match vocabularies".into(),
                    ));
                }
                (dim, dim)
            }
        };
        if self.encoder[0].input_dim != src_in || self.decoder[0].input_dim != tgt_in {
            return Err(Error::Shape(
                "first layer input dims do not match embeddings".into(),
            ));
        }
        let h = self.hidden();
        if let Some(att) = &self.attention {
            for m in [&att.query, &att.value] {
                if m.rows() != h || m.cols() != h {
                    return Err(Error::Shape("attention projections must be H x H".into()));
                }
            }
        }
        let features = if self.attention.is_some() { 2 * h } else { h };
        if self.output.rows() != self.tgt_vocab.len()
            || self.output.cols() != features
            || self.output_bias.rows() != self.tgt_vocab.len()
            || self.output_bias.cols() != 1
        {
            return Err(Error::Shape(
                "output layer does not match target vocabulary".into(),
            ));
        }
        Ok(())
    }

    /// The same weights with the attention path and its output columns
    /// removed.
    pub fn without_attention(&self) -> Seq2Seq {
        let mut out = self.clone();
        if out.attention.take().is_some() {
            let h = self.hidden();
            let rows = self.output.rows();
            let data = (0..rows)
                .flat_map(|r| self.output.row(r)[..h].to_vec())
                .collect();
            out.output = Matrix::from_vec(rows, h, data).expect("sliced output shape");
        }
        out
    }

    fn src_input(&self, idx: usize) -> StepInput<'_> {
        match &self.src_embedding {
            Some(e) => StepInput::Dense(e.row(idx)),
            None => StepInput::Index(idx),
        }
    }

    fn tgt_input(&self, idx: usize) -> StepInput<'_> {
        match &self.tgt_embedding {
            Some(e) => StepInput::Dense(e.row(idx)),
            None => StepInput::Index(idx),
        }
    }

    fn validate(&self, source: &[usize], dec: &[usize]) -> Result<()> {
        if source.is_empty() {
            return Err(Error::EmptyInput("source sequence"));
        }
        for &i in source {
            self.src_vocab.check(i)?;
        }
        for &i in dec {
            self.tgt_vocab.check(i)?;
        }
        Ok(())
    }

    fn attend(&self, h: &[f64], enc_states: &[&[f64]]) -> (Vec<f64>, Option<AttnCache>) {
        let Some(att) = &self.attention else {
            return (h.to_vec(), None);
        };
        let hd = h.len();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut query = vec![0.0; hd];
        att.query.matvec_add(h, &mut query);
        let scores: Vec<f64> = enc_states.iter().map(|e| dot(&query, e) * scale).collect();
        let alpha = softmax(&scores);
        let mut context = vec![0.0; hd];
        for (a, e) in alpha.iter().zip(enc_states) {
            axpy(*a, e, &mut context);
        }
        let mut features = h.to_vec();
        features.resize(2 * hd, 0.0);
        att.value.matvec_add(&context, &mut features[hd..]);
        (
            features,
            Some(AttnCache {
                query,
                alpha,
                context,
            }),
        )
    }

    fn project(&self, features: &[f64]) -> Vec<f64> {
        let mut logits = self.output_bias.as_slice().to_vec();
        self.output.matvec_add(features, &mut logits);
        logits
    }

    fn run(&self, source: &[usize], dec_inputs: &[usize]) -> Forward {
        let enc_in: Vec<StepInput<'_>> = source.iter().map(|&i| self.src_input(i)).collect();
        let enc = forward_stack(&self.encoder, &enc_in, None);
        let finals = enc.final_states();
        let dec_in: Vec<StepInput<'_>> = dec_inputs.iter().map(|&i| self.tgt_input(i)).collect();
        let dec = forward_stack(&self.decoder, &dec_in, Some(&finals));
        let enc_states = enc.top_outputs();
        let steps = dec
            .top_outputs()
            .iter()
            .map(|h| {
                let (features, attn) = self.attend(h, &enc_states);
                StepOut {
                    logits: self.project(&features),
                    features,
                    attn,
                }
            })
            .collect();
        Forward { enc, dec, steps }
    }

    /// Output distributions for each decoder step when the decoder is fed
    /// `SOS + target_prefix`.
    pub fn forward_probs(
        &self,
        source: &[usize],
        target_prefix: &[usize],
    ) -> Result<Vec<Vec<f64>>> {
        self.validate(source, target_prefix)?;
        let mut dec = vec![CharVocab::SOS];
        dec.extend_from_slice(target_prefix);
        let fwd = self.run(source, &dec);
        Ok(fwd.steps.iter().map(|s| softmax(&s.logits)).collect())
    }

    /// Greedy decoding from SOS, one character per step, until EOS or
    /// `max_len` characters. Reserved symbols other than EOS are never
    /// emitted.
    pub fn greedy_decode(&self, source: &[usize], max_len: usize) -> Result<Vec<usize>> {
        self.validate(source, &[])?;
        let mut out = Vec::new();
        if max_len == 0 {
            return Ok(out);
        }
        let enc_in: Vec<StepInput<'_>> = source.iter().map(|&i| self.src_input(i)).collect();
        let enc = forward_stack(&self.encoder, &enc_in, None);
        let enc_states = enc.top_outputs();
        let mut states: Vec<LayerState> = enc.final_states();
        let mut prev = CharVocab::SOS;
        while out.len() < max_len {
            let h = step_stack(&self.decoder, self.tgt_input(prev), &mut states);
            let (features, _) = self.attend(&h, &enc_states);
            let mut logits = self.project(&features);
            for special in [CharVocab::PAD, CharVocab::SOS, CharVocab::UNK] {
                logits[special] = f64::NEG_INFINITY;
            }
            let next = argmax(&logits);
            if next == CharVocab::EOS {
                break;
            }
            out.push(next);
            prev = next;
        }
        Ok(out)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Network for Seq2Seq {
    type Example = Seq2SeqExample;

    fn head(&self) -> LossKind {
        LossKind::CategoricalCE
    }

    fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        out.extend(self.src_embedding.iter());
        out.extend(self.tgt_embedding.iter());
        for l in self.encoder.iter().chain(&self.decoder) {
            out.extend(l.params());
        }
        if let Some(att) = &self.attention {
            out.push(&att.query);
            out.push(&att.value);
        }
        out.push(&self.output);
        out.push(&self.output_bias);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        out.extend(self.src_embedding.iter_mut());
        out.extend(self.tgt_embedding.iter_mut());
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.extend(l.params_mut());
        }
        if let Some(att) = &mut self.attention {
            out.push(&mut att.query);
            out.push(&mut att.value);
        }
        out.push(&mut self.output);
        out.push(&mut self.output_bias);
        out
    }

    fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Seq2Seq {
            src_vocab: self.src_vocab.clone(),
            tgt_vocab: self.tgt_vocab.clone(),
            embedding: self.embedding,
            src_embedding: self.src_embedding.as_ref().map(z),
            tgt_embedding: self.tgt_embedding.as_ref().map(z),
            encoder: self.encoder.iter().map(LstmLayer::zeros_like).collect(),
            decoder: self.decoder.iter().map(LstmLayer::zeros_like).collect(),
            attention: self.attention.as_ref().map(|a| Attention {
                query: z(&a.query),
                value: z(&a.value),
            }),
            output: z(&self.output),
            output_bias: z(&self.output_bias),
        }
    }

    fn pad_batch(batch: &mut [Seq2SeqExample]) {
        let max = |f: fn(&Seq2SeqExample) -> usize| batch.iter().map(f).max().unwrap_or(0);
        let src = max(|e| e.source.len());
        let dec = max(|e| e.dec_input.len());
        let lab = max(|e| e.labels.len());
        for e in batch.iter_mut() {
            e.source.resize(src, CharVocab::PAD);
            e.dec_input.resize(dec, CharVocab::PAD);
            e.labels.resize(lab, CharVocab::PAD);
        }
    }

    fn accumulate(&self, ex: &Seq2SeqExample, grads: Option<&mut Self>) -> Result<(f64, usize)> {
        let src_len = ex
            .source
            .iter()
            .position(|&i| i == CharVocab::PAD)
            .unwrap_or(ex.source.len());
        let source = &ex.source[..src_len];
        let steps = ex
            .labels
            .iter()
            .rposition(|&i| i != CharVocab::PAD)
            .map_or(0, |p| p + 1);
        if ex.dec_input.len() < steps {
            return Err(Error::Shape("fewer decoder inputs than labels".into()));
        }
        let dec_inputs = &ex.dec_input[..steps];
        self.validate(source, dec_inputs)?;
        for &l in &ex.labels[..steps] {
            self.tgt_vocab.check(l)?;
        }
        if steps == 0 {
            return Ok((0.0, 0));
        }

        let fwd = self.run(source, dec_inputs);
        let mut loss = 0.0;
        let mut count = 0usize;
        for (step, &label) in fwd.steps.iter().zip(&ex.labels) {
            if label != CharVocab::PAD {
                loss += log_sum_exp(&step.logits) - step.logits[label];
                count += 1;
            }
        }
        let Some(grads) = grads else {
            return Ok((loss, count));
        };

        let hd = self.hidden();
        let scale = 1.0 / (hd as f64).sqrt();
        let enc_states = fwd.enc.top_outputs();
        let dec_states = fwd.dec.top_outputs();
        let mut d_enc = vec![vec![0.0; hd]; src_len];
        let mut d_dec = vec![vec![0.0; hd]; steps];
        for (t, (step, &label)) in fwd.steps.iter().zip(&ex.labels).enumerate() {
            if label == CharVocab::PAD {
                continue;
            }
            let mut dlogits = softmax(&step.logits);
            dlogits[label] -= 1.0;
            grads.output.add_outer(&dlogits, &step.features);
            axpy(1.0, &dlogits, grads.output_bias.as_mut_slice());
            let mut dfeat = vec![0.0; step.features.len()];
            self.output.tmatvec_add(&dlogits, &mut dfeat);
            axpy(1.0, &dfeat[..hd], &mut d_dec[t]);

            if let (Some(att), Some(cache), Some(gatt)) =
                (&self.attention, &step.attn, grads.attention.as_mut())
            {
                let dv = &dfeat[hd..];
                gatt.value.add_outer(dv, &cache.context);
                let mut dctx = vec![0.0; hd];
                att.value.tmatvec_add(dv, &mut dctx);
                let dalpha: Vec<f64> = enc_states.iter().map(|e| dot(&dctx, e)).collect();
                let mean: f64 = cache.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                let mut dq = vec![0.0; hd];
                for (j, e) in enc_states.iter().enumerate() {
                    axpy(cache.alpha[j], &dctx, &mut d_enc[j]);
                    let ds = cache.alpha[j] * (dalpha[j] - mean) * scale;
                    axpy(ds, e, &mut dq);
                    axpy(ds, &cache.query, &mut d_enc[j]);
                }
                gatt.query.add_outer(&dq, dec_states[t]);
                att.query.tmatvec_add(&dq, &mut d_dec[t]);
            }
        }

        let (dx_dec, d_init) =
            backward_stack(&self.decoder, &fwd.dec, &d_dec, None, &mut grads.decoder);
        if let Some(g) = grads.tgt_embedding.as_mut() {
            for (&i, d) in dec_inputs.iter().zip(dx_dec) {
                axpy(1.0, &d.expect("dense decoder input"), g.row_mut(i));
            }
        }
        let (dx_enc, _) = backward_stack(
            &self.encoder,
            &fwd.enc,
            &d_enc,
            Some(&d_init),
            &mut grads.encoder,
        );
        if let Some(g) = grads.src_embedding.as_mut() {
            for (&i, d) in source.iter().zip(dx_enc) {
                axpy(1.0, &d.expect("dense encoder input"), g.row_mut(i));
            }
        }
        Ok((loss, count))
    }
}
