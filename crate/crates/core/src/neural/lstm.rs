//! Gated recurrent cell with forget, external-input and output gates.
//!
//! Masked timesteps are skipped: the state carries over unchanged and the
//! output column is zero, so nothing at a masked position can reach any
//! other position.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

pub const FORGET: usize = 0;
pub const INPUT: usize = 1;
pub const OUTPUT: usize = 2;
pub const CANDIDATE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input projections `U_f, U_e, U_o, U_s`, each `hidden x input`.
    pub input: [Array2<f64>; 4],
    /// Recurrent projections `W_f, W_e, W_o, W_s`, each `hidden x hidden`.
    pub recurrent: [Array2<f64>; 4],
    pub bias: [Array1<f64>; 4],
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input: std::array::from_fn(|_| Array2::zeros((hidden, input_dim))),
            recurrent: std::array::from_fn(|_| Array2::zeros((hidden, hidden))),
            bias: std::array::from_fn(|_| Array1::zeros(hidden)),
        }
    }

    pub fn random<R: Rng>(input_dim: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-scale..=scale));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.input[0].ncols()
    }

    pub fn hidden(&self) -> usize {
        self.input[0].nrows()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(12);
        out.extend(self.input.iter().map(|a| a.as_slice().expect("standard layout")));
        out.extend(self.recurrent.iter().map(|a| a.as_slice().expect("standard layout")));
        out.extend(self.bias.iter().map(|a| a.as_slice().expect("standard layout")));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
        out.extend(self.input.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        out.extend(self.recurrent.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        out.extend(self.bias.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Values saved by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmCache {
    gates: [Array2<f64>; 4],
    tanh_state: Array2<f64>,
    prev_hidden: Array2<f64>,
    prev_state: Array2<f64>,
    /// Cell state after every step.
    pub state: Array2<f64>,
    mask: Vec<bool>,
}

/// Runs the cell over the columns of `x` (`input x g`) from zero initial
/// state, returning the output sequence (`hidden x g`).
pub fn forward(params: &LstmParams, x: ArrayView2<f64>, mask: &[bool]) -> (Array2<f64>, LstmCache) {
    let hidden = params.hidden();
    let g = x.ncols();
    let projected: [Array2<f64>; 4] = std::array::from_fn(|k| {
        let mut z = params.input[k].dot(&x);
        z += &params.bias[k].view().insert_axis(Axis(1));
        z
    });

    let mut gates: [Array2<f64>; 4] = std::array::from_fn(|_| Array2::zeros((hidden, g)));
    let mut tanh_state = Array2::zeros((hidden, g));
    let mut prev_hidden = Array2::zeros((hidden, g));
    let mut prev_state = Array2::zeros((hidden, g));
    let mut state_out = Array2::zeros((hidden, g));
    let mut out = Array2::zeros((hidden, g));

    let mut h = Array1::<f64>::zeros(hidden);
    let mut s = Array1::<f64>::zeros(hidden);
    for t in 0..g {
        if !mask[t] {
            continue;
        }
        prev_hidden.column_mut(t).assign(&h);
        prev_state.column_mut(t).assign(&s);
        let mut z: [Array1<f64>; 4] = std::array::from_fn(|k| &projected[k].column(t) + &params.recurrent[k].dot(&h));
        for k in [FORGET, INPUT, OUTPUT] {
            z[k].mapv_inplace(sigmoid);
        }
        z[CANDIDATE].mapv_inplace(f64::tanh);
        s = &z[FORGET] * &s + &z[INPUT] * &z[CANDIDATE];
        let ts = s.mapv(f64::tanh);
        h = &z[OUTPUT] * &ts;
        for k in 0..4 {
            gates[k].column_mut(t).assign(&z[k]);
        }
        tanh_state.column_mut(t).assign(&ts);
        state_out.column_mut(t).assign(&s);
        out.column_mut(t).assign(&h);
    }
    let cache = LstmCache {
        gates,
        tanh_state,
        prev_hidden,
        prev_state,
        state: state_out,
        mask: mask.to_vec(),
    };
    (out, cache)
}

/// Backpropagates `d_out` (`hidden x g`) through the sequence. Parameter
/// gradients are accumulated into `grad`; the gradient with respect to the
/// input sequence is returned.
pub fn backward(params: &LstmParams, cache: &LstmCache, x: ArrayView2<f64>, d_out: &Array2<f64>, grad: &mut LstmParams) -> Array2<f64> {
    let hidden = params.hidden();
    let g = d_out.ncols();
    let mut dz: [Array2<f64>; 4] = std::array::from_fn(|_| Array2::zeros((hidden, g)));
    let mut dh_next = Array1::<f64>::zeros(hidden);
    let mut ds_next = Array1::<f64>::zeros(hidden);

    for t in (0..g).rev() {
        if !cache.mask[t] {
            continue;
        }
        let f = cache.gates[FORGET].column(t);
        let q = cache.gates[INPUT].column(t);
        let o = cache.gates[OUTPUT].column(t);
        let c = cache.gates[CANDIDATE].column(t);
        let ts = cache.tanh_state.column(t);
        let s_prev = cache.prev_state.column(t);

        let dh = &d_out.column(t) + &dh_next;
        let d_o = &dh * &ts;
        let ds = &ds_next + &(&dh * &o * &ts.mapv(|v| 1.0 - v * v));
        let d_f = &ds * &s_prev;
        let d_q = &ds * &c;
        let d_c = &ds * &q;

        dz[FORGET].column_mut(t).assign(&(&d_f * &f.mapv(|v| v * (1.0 - v))));
        dz[INPUT].column_mut(t).assign(&(&d_q * &q.mapv(|v| v * (1.0 - v))));
        dz[OUTPUT].column_mut(t).assign(&(&d_o * &o.mapv(|v| v * (1.0 - v))));
        dz[CANDIDATE].column_mut(t).assign(&(&d_c * &c.mapv(|v| 1.0 - v * v)));

        let mut dh_prev = Array1::<f64>::zeros(hidden);
        for k in 0..4 {
            dh_prev += &params.recurrent[k].t().dot(&dz[k].column(t));
        }
        dh_next = dh_prev;
        ds_next = &ds * &f;
    }

    let mut dx = Array2::zeros(x.raw_dim());
    for k in 0..4 {
        grad.input[k] += &dz[k].dot(&x.t());
        grad.recurrent[k] += &dz[k].dot(&cache.prev_hidden.t());
        grad.bias[k] += &dz[k].sum_axis(Axis(1));
        dx += &params.input[k].t().dot(&dz[k]);
    }
    dx
}
