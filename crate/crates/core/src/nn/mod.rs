//! Shared-encoder actor-critic with hand-written reverse-mode gradients.
//!
//! Architecture: `input → H → H` (tanh) shared encoder, then one linear
//! output layer whose rows are the policy mean (2), the reward value (1) and
//! the `K` cost values. The policy standard deviation is a state-independent
//! log-std vector.
//!
//! Parameters live in one flat vector in this canonical order:
//! `W1 (H×I, row-major), b1 (H), W2 (H×H), b2 (H), W3 (O×H), b3 (O), log_std (2)`
//! with `O = 2 + 1 + K`.

pub mod adam;
pub mod checkpoint;
pub mod gaussian;
pub mod value_norm;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::types::{StateVector, ACTION_DIM, AGENT_FEATURES, EGO_FEATURES, NUM_AGENT_SLOTS, NUM_WAYPOINTS, STATE_DIM};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Row of the reward value in the output layer.
pub const VALUE_ROW: usize = ACTION_DIM;
/// First cost-value row in the output layer.
pub const COST_ROW: usize = ACTION_DIM + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: usize,
    pub num_costs: usize,
}

impl NetShape {
    pub fn new(input: usize, hidden: usize, num_costs: usize) -> Self {
        Self {
            input,
            hidden,
            num_costs,
        }
    }

    pub fn output(&self) -> usize {
        ACTION_DIM + 1 + self.num_costs
    }

    /// `(in, out)` of each dense layer.
    pub fn layers(&self) -> [(usize, usize); 3] {
        [
            (self.input, self.hidden),
            (self.hidden, self.hidden),
            (self.hidden, self.output()),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum::<usize>() + ACTION_DIM
    }

    fn offsets(&self) -> Offsets {
        let (i, h, o) = (self.input, self.hidden, self.output());
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + o * h;
        let log_std = b3 + o;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            log_std,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    log_std: usize,
}

/// Policy and critic heads on a shared encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    shape: NetShape,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    pub h1: Array2<f64>,
    pub h2: Array2<f64>,
    /// `B × O` raw outputs.
    pub out: Array2<f64>,
}

impl ForwardCache {
    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.out.slice(s![.., 0..ACTION_DIM])
    }

    pub fn reward_values(&self) -> ArrayView1<'_, f64> {
        self.out.column(VALUE_ROW)
    }

    pub fn cost_values(&self) -> ArrayView2<'_, f64> {
        self.out.slice(s![.., COST_ROW..])
    }
}

/// Heads evaluated for a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub mean: [f64; ACTION_DIM],
    pub log_std: [f64; ACTION_DIM],
    pub v_r: f64,
    pub v_c: Vec<f64>,
}

impl ActorCritic {
    /// All-zero parameters.
    pub fn zeros(shape: NetShape) -> Self {
        Self {
            shape,
            params: vec![0.0; shape.num_params()],
        }
    }

    /// Orthogonal init: gain √2 on hidden layers, 0.01 on the policy rows,
    /// 1 on the value rows; zero biases; log-std 0.
    pub fn init(shape: NetShape, rng: &mut RandomStream) -> Self {
        let mut net = Self::zeros(shape);
        let o = shape.offsets();
        let (i, h, out) = (shape.input, shape.hidden, shape.output());
        let gain = std::f64::consts::SQRT_2;
        orthogonal_into(&mut net.params[o.w1..o.b1], h, i, gain, rng);
        orthogonal_into(&mut net.params[o.w2..o.b2], h, h, gain, rng);
        orthogonal_into(&mut net.params[o.w3..o.b3], out, h, 1.0, rng);
        for v in &mut net.params[o.w3..o.w3 + ACTION_DIM * h] {
            *v *= 0.01;
        }
        net
    }

    pub fn from_flat(shape: NetShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.num_params() {
            return Err(Error::usage(format!(
                "expected {} parameters for {:?}, got {}",
                shape.num_params(),
                shape,
                params.len()
            )));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.params
    }

    /// Effective (clamped) log standard deviation.
    pub fn log_std(&self) -> [f64; ACTION_DIM] {
        let o = self.shape.offsets().log_std;
        [
            self.params[o].clamp(LOG_STD_MIN, LOG_STD_MAX),
            self.params[o + 1].clamp(LOG_STD_MIN, LOG_STD_MAX),
        ]
    }

    pub fn set_log_std(&mut self, log_std: [f64; ACTION_DIM]) {
        let o = self.shape.offsets().log_std;
        self.params[o..o + ACTION_DIM].copy_from_slice(&log_std);
    }

    /// Keeps the stored log-std inside its clamp range.
    pub fn project_log_std(&mut self) {
        let o = self.shape.offsets().log_std;
        for v in &mut self.params[o..o + ACTION_DIM] {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Rewrites output `row` so that it now produces `scale·out + shift` for
    /// every input.
    pub fn affine_output_row(&mut self, row: usize, scale: f64, shift: f64) {
        let o = self.shape.offsets();
        let h = self.shape.hidden;
        for w in &mut self.params[o.w3 + row * h..o.w3 + (row + 1) * h] {
            *w *= scale;
        }
        let b = &mut self.params[o.b3 + row];
        *b = scale * *b + shift;
    }

    /// Range of flat indices belonging to the value rows of the output layer.
    pub fn value_param_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let o = self.shape.offsets();
        let h = self.shape.hidden;
        vec![
            o.w3 + VALUE_ROW * h..o.w3 + self.shape.output() * h,
            o.b3 + VALUE_ROW..o.b3 + self.shape.output(),
        ]
    }

    fn weights(&self) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>, ArrayView2<'_, f64>, ArrayView1<'_, f64>, ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let o = self.shape.offsets();
        let (i, h, out) = (self.shape.input, self.shape.hidden, self.shape.output());
        let p = &self.params;
        (
            ArrayView2::from_shape((h, i), &p[o.w1..o.b1]).unwrap(),
            ArrayView1::from(&p[o.b1..o.w2]),
            ArrayView2::from_shape((h, h), &p[o.w2..o.b2]).unwrap(),
            ArrayView1::from(&p[o.b2..o.w3]),
            ArrayView2::from_shape((out, h), &p[o.w3..o.b3]).unwrap(),
            ArrayView1::from(&p[o.b3..o.log_std]),
        )
    }

    /// Batched forward pass over rows of `input` (`B × I`).
    pub fn forward(&self, input: Array2<f64>) -> Result<ForwardCache> {
        if input.ncols() != self.shape.input {
            return Err(Error::usage(format!(
                "input has {} features, network expects {}",
                input.ncols(),
                self.shape.input
            )));
        }
        let (w1, b1, w2, b2, w3, b3) = self.weights();
        let mut h1 = input.dot(&w1.t());
        h1 += &b1;
        h1.mapv_inplace(f64::tanh);
        let mut h2 = h1.dot(&w2.t());
        h2 += &b2;
        h2.mapv_inplace(f64::tanh);
        let mut out = h2.dot(&w3.t());
        out += &b3;
        Ok(ForwardCache { input, h1, h2, out })
    }

    /// Forward pass for one feature vector.
    pub fn forward_one(&self, features: &[f64]) -> Result<HeadOutputs> {
        if features.len() != self.shape.input {
            return Err(Error::usage(format!(
                "input has {} features, network expects {}",
                features.len(),
                self.shape.input
            )));
        }
        let (w1, b1, w2, b2, w3, b3) = self.weights();
        let x = ArrayView1::from(features);
        let h1 = (w1.dot(&x) + b1).mapv(f64::tanh);
        let h2 = (w2.dot(&h1) + b2).mapv(f64::tanh);
        let out = w3.dot(&h2) + b3;
        Ok(HeadOutputs {
            mean: [out[0], out[1]],
            log_std: self.log_std(),
            v_r: out[VALUE_ROW],
            v_c: out.slice(s![COST_ROW..]).to_vec(),
        })
    }

    /// Reverse pass. `d_out` is `∂L/∂out` (`B × O`) and `d_log_std` is the
    /// gradient with respect to the effective log-std; returns `∂L/∂θ` in
    /// canonical order.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>, d_log_std: [f64; ACTION_DIM]) -> Vec<f64> {
        let o = self.shape.offsets();
        let (_, _, w2, _, w3, _) = self.weights();
        let mut grad = vec![0.0; self.shape.num_params()];

        let d_w3 = d_out.t().dot(&cache.h2);
        copy_into(&mut grad[o.w3..o.b3], d_w3.view());
        copy_vec_into(&mut grad[o.b3..o.log_std], d_out.sum_axis(Axis(0)));

        let mut d_z2 = d_out.dot(&w3);
        d_z2.zip_mut_with(&cache.h2, |d, h| *d *= 1.0 - h * h);
        let d_w2 = d_z2.t().dot(&cache.h1);
        copy_into(&mut grad[o.w2..o.b2], d_w2.view());
        copy_vec_into(&mut grad[o.b2..o.w3], d_z2.sum_axis(Axis(0)));

        let mut d_z1 = d_z2.dot(&w2);
        d_z1.zip_mut_with(&cache.h1, |d, h| *d *= 1.0 - h * h);
        let d_w1 = d_z1.t().dot(&cache.input);
        copy_into(&mut grad[o.w1..o.b1], d_w1.view());
        copy_vec_into(&mut grad[o.b1..o.w2], d_z1.sum_axis(Axis(0)));

        // The clamp passes gradient only strictly inside its range.
        for k in 0..ACTION_DIM {
            let raw = self.params[o.log_std + k];
            if raw > LOG_STD_MIN && raw < LOG_STD_MAX {
                grad[o.log_std + k] = d_log_std[k];
            }
        }
        grad
    }

    pub fn policy_forward(&self, state: &StateVector) -> Result<([f64; ACTION_DIM], [f64; ACTION_DIM])> {
        let h = self.forward_one(&encode_state(state))?;
        Ok((h.mean, h.log_std))
    }

    pub fn critic_forward(&self, state: &StateVector) -> Result<(f64, Vec<f64>)> {
        let h = self.forward_one(&encode_state(state))?;
        Ok((h.v_r, h.v_c))
    }
}

fn copy_into(dst: &mut [f64], src: ArrayView2<'_, f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = *s;
    }
}

fn copy_vec_into(dst: &mut [f64], src: Array1<f64>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = *s;
    }
}

/// Writes a `rows × cols` matrix with orthonormal rows (or columns, whichever
/// is shorter) scaled by `gain` into `dst`.
fn orthogonal_into(dst: &mut [f64], rows: usize, cols: usize, gain: f64, rng: &mut RandomStream) {
    let transpose = rows < cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    // n × m with n ≥ m: orthonormalize the m columns.
    let mut a = Array2::from_shape_fn((n, m), |_| rng.normal());
    modified_gram_schmidt(a.view_mut());
    for r in 0..rows {
        for c in 0..cols {
            let v = if transpose { a[[c, r]] } else { a[[r, c]] };
            dst[r * cols + c] = gain * v;
        }
    }
}

fn modified_gram_schmidt(mut a: ArrayViewMut2<'_, f64>) {
    let m = a.ncols();
    for j in 0..m {
        for k in 0..j {
            let dot = a.column(j).dot(&a.column(k));
            let col_k = a.column(k).to_owned();
            a.column_mut(j).scaled_add(-dot, &col_k);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        if norm > 1e-12 {
            a.column_mut(j).mapv_inplace(|v| v / norm);
        }
    }
}

/// Fixed per-feature scaling of the raw SI observation before it enters the
/// network.
pub fn feature_scale() -> [f64; STATE_DIM] {
    let mut s = [1.0; STATE_DIM];
    s[0] = 1.0 / 2.0;
    s[1] = 1.0 / 10.0;
    s[2] = 1.0 / 5.0;
    for slot in 0..NUM_AGENT_SLOTS {
        let b = EGO_FEATURES + slot * AGENT_FEATURES;
        s[b + 4] = 1.0 / 20.0;
        s[b + 5] = 1.0 / 10.0;
        s[b + 6] = 1.0 / 10.0;
        s[b + 7] = 1.0 / 10.0;
    }
    let m = EGO_FEATURES + NUM_AGENT_SLOTS * AGENT_FEATURES;
    for i in 0..NUM_WAYPOINTS {
        s[m + 2 * i] = 1.0 / 25.0;
    }
    s
}

pub fn encode_state(state: &StateVector) -> Vec<f64> {
    state
        .as_slice()
        .iter()
        .zip(feature_scale())
        .map(|(v, s)| v * s)
        .collect()
}

/// Stacks encoded states into a `B × STATE_DIM` matrix.
pub fn encode_batch<'a>(states: impl ExactSizeIterator<Item = &'a StateVector>) -> Array2<f64> {
    let n = states.len();
    let mut m = Array2::zeros((n, STATE_DIM));
    for (mut row, st) in m.rows_mut().into_iter().zip(states) {
        for (d, v) in row.iter_mut().zip(encode_state(st)) {
            *d = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn toy(seed: u64) -> ActorCritic {
        let shape = NetShape::new(5, 7, 3);
        let mut rng = seeded_rng(seed, 0);
        let params = (0..shape.num_params()).map(|_| 0.5 * rng.normal()).collect();
        ActorCritic::from_flat(shape, params).unwrap()
    }

    fn random_input(b: usize, i: usize, seed: u64) -> Array2<f64> {
        let mut rng = seeded_rng(seed, 9);
        Array2::from_shape_fn((b, i), |_| rng.normal())
    }

    #[test]
    fn zero_params_give_zero_heads() {
        let net = ActorCritic::zeros(NetShape::new(STATE_DIM, 16, 6));
        let mut s = StateVector::zeros();
        s.as_mut_slice()[3] = 0.7;
        let (mean, log_std) = net.policy_forward(&s).unwrap();
        assert_eq!(mean, [0.0, 0.0]);
        assert_eq!(log_std, [0.0, 0.0]);
        let (v, c) = net.critic_forward(&s).unwrap();
        assert_eq!(v, 0.0);
        assert!(c.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = ActorCritic::zeros(NetShape::new(4, 8, 2));
        assert!(net.forward_one(&[0.0; 3]).is_err());
        assert!(net.forward(Array2::zeros((2, 5))).is_err());
        assert!(ActorCritic::from_flat(NetShape::new(4, 8, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let net = toy(1);
        let x = random_input(4, 5, 2);
        let cache = net.forward(x.clone()).unwrap();
        for (b, row) in x.rows().into_iter().enumerate() {
            let one = net.forward_one(row.as_slice().unwrap()).unwrap();
            assert!((one.mean[0] - cache.out[[b, 0]]).abs() < 1e-12);
            assert!((one.v_r - cache.out[[b, VALUE_ROW]]).abs() < 1e-12);
            assert!((one.v_c[2] - cache.out[[b, COST_ROW + 2]]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_first_layer_column_ignores_feature() {
        let mut net = toy(3);
        let i = net.shape().input;
        for r in 0..net.shape().hidden {
            net.params_mut()[r * i + 2] = 0.0;
        }
        let a = [0.1, 0.2, 0.3, 0.4, 0.5];
        let mut b = a;
        b[2] = -7.0;
        assert_eq!(net.forward_one(&a).unwrap(), net.forward_one(&b).unwrap());
    }

    #[test]
    fn output_change_within_lipschitz_bound() {
        let net = toy(4);
        let o = net.shape().offsets();
        let (i, h, out) = (5, 7, net.shape().output());
        // tanh is 1-Lipschitz, so the product of Frobenius norms bounds the
        // mean head's sensitivity.
        let fro = |r: std::ops::Range<usize>| net.params()[r].iter().map(|v| v * v).sum::<f64>().sqrt();
        let policy_rows = o.w3..o.w3 + ACTION_DIM * h;
        let bound = fro(o.w1..o.w1 + h * i) * fro(o.w2..o.w2 + h * h) * fro(policy_rows);
        let _ = out;
        let x = [0.3, -0.1, 0.8, 0.0, -0.5];
        let step = 1e-3;
        for k in 0..i {
            let mut y = x;
            y[k] += step;
            let a = net.forward_one(&x).unwrap().mean;
            let b = net.forward_one(&y).unwrap().mean;
            let change = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!(change <= bound * step + 1e-15, "{change} > {}", bound * step);
        }
    }

    #[test]
    fn backward_matches_finite_differences_for_linear_readout() {
        // L = Σ c ⊙ out + g · log_std, so ∂L/∂out = c.
        let mut net = toy(5);
        net.set_log_std([0.3, -0.4]);
        let x = random_input(6, 5, 7);
        let mut rng = seeded_rng(8, 0);
        let c = Array2::from_shape_fn((6, net.shape().output()), |_| rng.normal());
        let g = [0.7, -1.3];
        let loss = |n: &ActorCritic| {
            let cache = n.forward(x.clone()).unwrap();
            (&cache.out * &c).sum() + g[0] * n.log_std()[0] + g[1] * n.log_std()[1]
        };
        let cache = net.forward(x.clone()).unwrap();
        let grad = net.backward(&cache, &c, g);
        let h = 1e-5;
        for k in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = grad[k].abs().max(fd.abs()).max(1e-6);
            assert!((grad[k] - fd).abs() / denom < 1e-6, "param {k}: {} vs {fd}", grad[k]);
        }
    }

    #[test]
    fn squared_mean_gradient_vanishes_at_zero_params() {
        let net = ActorCritic::zeros(NetShape::new(4, 6, 2));
        let x = random_input(3, 4, 1);
        let cache = net.forward(x).unwrap();
        // ∂(mean₀²)/∂out = 2 mean₀ = 0.
        let mut d_out = Array2::zeros(cache.out.raw_dim());
        for b in 0..3 {
            d_out[[b, 0]] = 2.0 * cache.out[[b, 0]];
        }
        assert!(net.backward(&cache, &d_out, [0.0, 0.0]).iter().all(|g| *g == 0.0));
        // A constant loss has zero gradient everywhere.
        let zero = Array2::zeros(cache.out.raw_dim());
        assert!(net.backward(&cache, &zero, [0.0, 0.0]).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn init_is_orthogonal_and_seeded() {
        let shape = NetShape::new(6, 8, 2);
        let a = ActorCritic::init(shape, &mut seeded_rng(1, 3));
        let b = ActorCritic::init(shape, &mut seeded_rng(1, 3));
        assert_eq!(a, b);
        let o = shape.offsets();
        // W2 is square: W2 W2ᵀ = 2 I.
        let w2 = ArrayView2::from_shape((8, 8), &a.params()[o.w2..o.b2]).unwrap();
        let g = w2.dot(&w2.t());
        for r in 0..8 {
            for c in 0..8 {
                let expected = if r == c { 2.0 } else { 0.0 };
                assert!((g[[r, c]] - expected).abs() < 1e-10);
            }
        }
        assert_eq!(a.log_std(), [0.0, 0.0]);
    }

    #[test]
    fn flatten_round_trip() {
        let net = toy(11);
        let shape = net.shape();
        let back = ActorCritic::from_flat(shape, net.clone().into_flat()).unwrap();
        assert_eq!(back, net);
    }
}
