//! LSTM layers, stacked forward passes and backpropagation through time.
//!
//! Gate pre-activations are laid out as `[input, forget, cell, output]`, each
//! block `hidden_dim` long:
//!
//! ```text
//! z = W x + U h_prev + b
//! i = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{sigmoid, Matrix};
use crate::error::{Error, Result};

pub const INIT_SCALE: f64 = 0.08;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `4H x I`
    pub w: Matrix,
    /// `4H x H`
    pub u: Matrix,
    /// `4H x 1`
    pub b: Matrix,
}

impl LstmLayer {
    pub fn new<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let w = Matrix::uniform(4 * hidden_dim, input_dim, INIT_SCALE, rng);
        let u = Matrix::uniform(4 * hidden_dim, hidden_dim, INIT_SCALE, rng);
        let mut b = Matrix::zeros(4 * hidden_dim, 1);
        for j in hidden_dim..2 * hidden_dim {
            b.set(j, 0, FORGET_BIAS);
        }
        LstmLayer {
            input_dim,
            hidden_dim,
            w,
            u,
            b,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmLayer {
            input_dim,
            hidden_dim,
            w: Matrix::zeros(4 * hidden_dim, input_dim),
            u: Matrix::zeros(4 * hidden_dim, hidden_dim),
            b: Matrix::zeros(4 * hidden_dim, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim)
    }

    pub fn check(&self) -> Result<()> {
        let h4 = 4 * self.hidden_dim;
        if self.w.rows() != h4
            || self.w.cols() != self.input_dim
            || self.u.rows() != h4
            || self.u.cols() != self.hidden_dim
            || self.b.rows() != h4
            || self.b.cols() != 1
        {
            return Err(Error::Shape(format!(
                "inconsistent LSTM layer {}->{}",
                self.input_dim, self.hidden_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn params(&self) -> [&Matrix; 3] {
        [&self.w, &self.u, &self.b]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }

    fn preactivation(&self, x: StepInput<'_>, h_prev: &[f64]) -> Vec<f64> {
        let mut z = self.b.as_slice().to_vec();
        match x {
            StepInput::Index(j) => self.w.add_column(j, &mut z),
            StepInput::Dense(v) => self.w.matvec_add(v, &mut z),
        }
        self.u.matvec_add(h_prev, &mut z);
        z
    }

    fn step(&self, x: StepInput<'_>, h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let hd = self.hidden_dim;
        let z = self.preactivation(x, h_prev);
        let i: Vec<f64> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * hd..3 * hd].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
        StepCache {
            input: x.to_owned(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            c,
            tanh_c,
            h,
        }
    }

    /// Backward through one cell step. Accumulates parameter gradients into
    /// `grads` and returns `(dx, dh_prev, dc_prev)`; `dx` is `None` for
    /// index inputs.
    fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc_next: &[f64],
        grads: &mut LstmLayer,
    ) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden_dim;
        let mut dz = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for k in 0..hd {
            let tc = cache.tanh_c[k];
            let d_o = dh[k] * tc;
            let dc = dc_next[k] + dh[k] * cache.o[k] * (1.0 - tc * tc);
            let d_i = dc * cache.g[k];
            let d_g = dc * cache.i[k];
            let d_f = dc * cache.c_prev[k];
            dc_prev[k] = dc * cache.f[k];
            dz[k] = d_i * cache.i[k] * (1.0 - cache.i[k]);
            dz[hd + k] = d_f * cache.f[k] * (1.0 - cache.f[k]);
            dz[2 * hd + k] = d_g * (1.0 - cache.g[k] * cache.g[k]);
            dz[3 * hd + k] = d_o * cache.o[k] * (1.0 - cache.o[k]);
        }
        let dx = match &cache.input {
            CachedInput::Index(j) => {
                grads.w.add_to_column(*j, &dz);
                None
            }
            CachedInput::Dense(x) => {
                grads.w.add_outer(&dz, x);
                let mut dx = vec![0.0; self.input_dim];
                self.w.tmatvec_add(&dz, &mut dx);
                Some(dx)
            }
        };
        grads.u.add_outer(&dz, &cache.h_prev);
        super::matrix::axpy(1.0, &dz, grads.b.as_mut_slice());
        let mut dh_prev = vec![0.0; hd];
        self.u.tmatvec_add(&dz, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }
}

/// Input to the bottom layer at one time step: either a one-hot index or a
/// dense vector.
#[derive(Debug, Clone, Copy)]
pub enum StepInput<'a> {
    Index(usize),
    Dense(&'a [f64]),
}

impl StepInput<'_> {
    fn to_owned(self) -> CachedInput {
        match self {
            StepInput::Index(j) => CachedInput::Index(j),
            StepInput::Dense(v) => CachedInput::Dense(v.to_vec()),
        }
    }
}

#[derive(Debug, Clone)]
enum CachedInput {
    Index(usize),
    Dense(Vec<f64>),
}

#[derive(Debug, Clone)]
struct StepCache {
    input: CachedInput,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LayerState {
    pub fn zeros(dim: usize) -> Self {
        LayerState {
            h: vec![0.0; dim],
            c: vec![0.0; dim],
        }
    }
}

/// Single LSTM cell step with shape checking.
pub fn lstm_cell_forward(
    layer: &LstmLayer,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    layer.check()?;
    if x.len() != layer.input_dim
        || h_prev.len() != layer.hidden_dim
        || c_prev.len() != layer.hidden_dim
    {
        return Err(Error::Shape(format!(
            "cell {}->{} got x={}, h={}, c={}",
            layer.input_dim,
            layer.hidden_dim,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let cache = layer.step(StepInput::Dense(x), h_prev, c_prev);
    Ok((cache.h, cache.c))
}

/// Cached forward pass of a layer stack, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct StackTrace {
    layers: Vec<Vec<StepCache>>,
}

impl StackTrace {
    pub fn len(&self) -> usize {
        self.layers[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn top_outputs(&self) -> Vec<&[f64]> {
        self.layers
            .last()
            .map(|steps| steps.iter().map(|s| s.h.as_slice()).collect())
            .unwrap_or_default()
    }

    pub fn final_states(&self) -> Vec<LayerState> {
        self.layers
            .iter()
            .map(|steps| {
                let last = steps.last().expect("non-empty trace");
                LayerState {
                    h: last.h.clone(),
                    c: last.c.clone(),
                }
            })
            .collect()
    }
}

pub(crate) fn check_stack(layers: &[LstmLayer]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Shape("empty layer stack".into()));
    }
    for l in layers {
        l.check()?;
    }
    for pair in layers.windows(2) {
        if pair[1].input_dim != pair[0].hidden_dim {
            return Err(Error::Shape(format!(
                "layer with hidden {} feeds layer with input {}",
                pair[0].hidden_dim, pair[1].input_dim
            )));
        }
    }
    Ok(())
}

/// Runs a layer stack over a sequence. `init` seeds each layer's (h, c);
/// zeros when absent.
pub fn forward_stack(
    layers: &[LstmLayer],
    inputs: &[StepInput<'_>],
    init: Option<&[LayerState]>,
) -> StackTrace {
    let mut traces: Vec<Vec<StepCache>> = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let (mut h, mut c) = match init {
            Some(states) => (states[l].h.clone(), states[l].c.clone()),
            None => (vec![0.0; layer.hidden_dim], vec![0.0; layer.hidden_dim]),
        };
        let mut steps = Vec::with_capacity(inputs.len());
        for t in 0..inputs.len() {
            let x = if l == 0 {
                inputs[t]
            } else {
                StepInput::Dense(&traces[l - 1][t].h)
            };
            let cache = layer.step(x, &h, &c);
            h.clone_from(&cache.h);
            c.clone_from(&cache.c);
            steps.push(cache);
        }
        traces.push(steps);
    }
    StackTrace { layers: traces }
}

/// One time step through the stack without caching; `states` is updated in
/// place and the top hidden state is returned.
pub fn step_stack(
    layers: &[LstmLayer],
    input: StepInput<'_>,
    states: &mut [LayerState],
) -> Vec<f64> {
    let mut below: Option<Vec<f64>> = None;
    for (layer, state) in layers.iter().zip(states.iter_mut()) {
        let x = match &below {
            None => input,
            Some(v) => StepInput::Dense(v),
        };
        let cache = layer.step(x, &state.h, &state.c);
        state.h = cache.h;
        state.c = cache.c;
        below = Some(state.h.clone());
    }
    below.unwrap_or_default()
}

/// Backpropagation through time over a cached stack pass.
///
/// `d_top[t]` is the loss gradient w.r.t. the top layer's output at step `t`;
/// `d_final` adds gradients w.r.t. each layer's final (h, c). Returns the
/// gradient w.r.t. dense bottom-layer inputs (`None` per step for index
/// inputs) and w.r.t. each layer's initial state.
pub fn backward_stack(
    layers: &[LstmLayer],
    trace: &StackTrace,
    d_top: &[Vec<f64>],
    d_final: Option<&[LayerState]>,
    grads: &mut [LstmLayer],
) -> (Vec<Option<Vec<f64>>>, Vec<LayerState>) {
    let steps = trace.len();
    let mut from_above: Vec<Option<Vec<f64>>> = d_top.iter().cloned().map(Some).collect();
    let mut d_init = vec![LayerState::zeros(0); layers.len()];
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let hd = layer.hidden_dim;
        let (mut dh_next, mut dc_next) = match d_final {
            Some(d) => (d[l].h.clone(), d[l].c.clone()),
            None => (vec![0.0; hd], vec![0.0; hd]),
        };
        let mut below: Vec<Option<Vec<f64>>> = vec![None; steps];
        for t in (0..steps).rev() {
            let mut dh = dh_next;
            if let Some(d) = &from_above[t] {
                super::matrix::axpy(1.0, d, &mut dh);
            }
            let (dx, dh_prev, dc_prev) =
                layer.step_backward(&trace.layers[l][t], &dh, &dc_next, &mut grads[l]);
            below[t] = dx;
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        d_init[l] = LayerState {
            h: dh_next,
            c: dc_next,
        };
        from_above = below;
    }
    (from_above, d_init)
}

/// Per-step top-layer hidden states and the final (h, c) of every layer.
pub fn run_stack(
    layers: &[LstmLayer],
    sequence: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<LayerState>)> {
    check_stack(layers)?;
    if sequence.is_empty() {
        return Err(Error::EmptyInput("sequence"));
    }
    if let Some(bad) = sequence.iter().find(|x| x.len() != layers[0].input_dim) {
        return Err(Error::Shape(format!(
            "input vector of length {} for layer with input {}",
            bad.len(),
            layers[0].input_dim
        )));
    }
    let inputs: Vec<StepInput<'_>> = sequence.iter().map(|x| StepInput::Dense(x)).collect();
    let trace = forward_stack(layers, &inputs, None);
    let outputs = trace
        .top_outputs()
        .into_iter()
        .map(<[f64]>::to_vec)
        .collect();
    Ok((outputs, trace.final_states()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Straight-line reimplementation of the cell equations, indexing the
    /// weight arrays directly.
    fn naive_cell(layer: &LstmLayer, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = layer.hidden_dim;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |row: usize| {
            let mut s = layer.b.get(row, 0);
            for (j, xj) in x.iter().enumerate() {
                s += layer.w.get(row, j) * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                s += layer.u.get(row, j) * hj;
            }
            s
        };
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for k in 0..hd {
            let i = sig(pre(k));
            let f = sig(pre(hd + k));
            let g = pre(2 * hd + k).tanh();
            let o = sig(pre(3 * hd + k));
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let layer = LstmLayer::zeros(3, 4);
        let (h, c) = lstm_cell_forward(&layer, &[0.0; 3], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn forget_bias_scales_previous_cell() {
        let mut layer = LstmLayer::zeros(2, 3);
        for j in 3..6 {
            layer.b.set(j, 0, 1.0);
        }
        let c_prev = [0.5, -1.0, 2.0];
        let (_, c) = lstm_cell_forward(&layer, &[0.0; 2], &[0.0; 3], &c_prev).unwrap();
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        for k in 0..3 {
            assert!((c[k] - s1 * c_prev[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn new_layer_has_unit_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = LstmLayer::new(3, 2, &mut rng);
        assert_eq!(
            layer.b.as_slice(),
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert!(layer.w.as_slice().iter().all(|v| v.abs() < INIT_SCALE));
    }

    #[test]
    fn cell_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut layer = LstmLayer::new(3, 3, &mut rng);
        // widen the weights so every gate is far from its linear regime
        layer.w.scale(10.0);
        layer.u.scale(10.0);
        let x = [0.3, -0.7, 1.1];
        let h = [0.1, 0.2, -0.4];
        let c = [1.5, -0.3, 0.0];
        let (h1, c1) = lstm_cell_forward(&layer, &x, &h, &c).unwrap();
        let (h2, c2) = naive_cell(&layer, &x, &h, &c);
        for k in 0..3 {
            assert!((h1[k] - h2[k]).abs() < 1e-10);
            assert!((c1[k] - c2[k]).abs() < 1e-10);
            assert!(h1[k].abs() < 1.0);
        }
    }

    #[test]
    fn cell_rejects_bad_shapes() {
        let layer = LstmLayer::zeros(3, 4);
        assert!(matches!(
            lstm_cell_forward(&layer, &[0.0; 2], &[0.0; 4], &[0.0; 4]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn single_step_stack_is_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = LstmLayer::new(2, 3, &mut rng);
        let x = vec![0.4, -0.2];
        let (outs, finals) =
            run_stack(std::slice::from_ref(&layer), std::slice::from_ref(&x)).unwrap();
        let (h, c) = lstm_cell_forward(&layer, &x, &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(outs[0], h);
        assert_eq!(finals[0].c, c);
    }

    #[test]
    fn zero_weight_stack_stays_zero() {
        let layers = vec![LstmLayer::zeros(2, 3)];
        let (outs, _) = run_stack(&layers, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(outs.iter().flatten().all(|&v| v == 0.0));
        assert!(matches!(run_stack(&layers, &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn two_layer_stack_matches_layerwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layers = vec![
            LstmLayer::new(3, 4, &mut rng),
            LstmLayer::new(4, 2, &mut rng),
        ];
        let seq: Vec<Vec<f64>> = (0..5)
            .map(|t| (0..3).map(|j| ((t * 3 + j) as f64 * 0.37).sin()).collect())
            .collect();
        let (outs, finals) = run_stack(&layers, &seq).unwrap();

        let mut lower = Vec::new();
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        for x in &seq {
            (h, c) = naive_cell(&layers[0], x, &h, &c);
            lower.push(h.clone());
        }
        let (mut h2, mut c2) = (vec![0.0; 2], vec![0.0; 2]);
        for (t, x) in lower.iter().enumerate() {
            (h2, c2) = naive_cell(&layers[1], x, &h2, &c2);
            for k in 0..2 {
                assert!((outs[t][k] - h2[k]).abs() < 1e-10);
            }
        }
        assert!(finals[0]
            .h
            .iter()
            .zip(&h)
            .all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(finals[1]
            .c
            .iter()
            .zip(&c2)
            .all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(finals[0]
            .c
            .iter()
            .zip(&c)
            .all(|(a, b)| (a - b).abs() < 1e-10));
    }
}
