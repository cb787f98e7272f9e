//! Actor-critic networks with hand-written gradients.
//!
//! The network is an optional LSTM cell on the raw observation, followed by
//! an ELU MLP trunk shared by two heads: a tanh-squashed action mean and a
//! linear state value. The Gaussian policy's log standard deviation is a
//! free, state-independent parameter.
//!
//! All parameters live in one flat vector described by a list of named
//! tensors ([`TensorSpec`]); gradients and optimizer moments use the same
//! layout. Parameters are kept exactly representable in `f32` (they are
//! rounded after every optimizer step) while arithmetic runs in `f64`, so a
//! policy written to disk as 32-bit floats reloads bit-identically.

use crate::env::Observation;
use crate::{Error, Result, Rng};
use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// ln(2π)
const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const LOGSTD_MIN: f64 = -5.0;
pub const LOGSTD_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub recurrent: bool,
    pub recurrent_units: usize,
    pub action_dim: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            input_dim: 124,
            hidden: vec![256, 128, 64],
            recurrent: false,
            recurrent_units: 128,
            action_dim: 2,
        }
    }
}

impl NetworkShape {
    pub fn recurrent() -> Self {
        Self { recurrent: true, ..Self::default() }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.input_dim == 0 {
            return Err("input_dim must be > 0".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err("hidden layer sizes must be positive and nonempty".into());
        }
        if self.recurrent && self.recurrent_units == 0 {
            return Err("recurrent_units must be > 0".into());
        }
        if self.action_dim != 2 {
            return Err("action_dim must be 2".into());
        }
        Ok(())
    }

    /// Width of the hidden state carried between steps (0 without a cell).
    pub fn state_units(&self) -> usize {
        if self.recurrent {
            self.recurrent_units
        } else {
            0
        }
    }

    fn trunk_input(&self) -> usize {
        if self.recurrent {
            self.recurrent_units
        } else {
            self.input_dim
        }
    }
}

/// A named tensor inside the flat parameter vector. Matrices are row-major
/// `[fan_in, fan_out]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Element offset into the flat vector.
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Tensor list for `shape`, in storage order.
pub fn layout(shape: &NetworkShape) -> Vec<TensorSpec> {
    let mut out = Vec::new();
    let mut offset = 0;
    let mut push = |name: String, dims: Vec<usize>| {
        let t = TensorSpec { name, shape: dims, offset };
        offset += t.len();
        out.push(t);
    };
    if shape.recurrent {
        let h = shape.recurrent_units;
        push("lstm.weight_ih".into(), vec![shape.input_dim, 4 * h]);
        push("lstm.weight_hh".into(), vec![h, 4 * h]);
        push("lstm.bias".into(), vec![4 * h]);
    }
    let mut fan_in = shape.trunk_input();
    for (i, &width) in shape.hidden.iter().enumerate() {
        push(format!("mlp.{i}.weight"), vec![fan_in, width]);
        push(format!("mlp.{i}.bias"), vec![width]);
        fan_in = width;
    }
    push("mu.weight".into(), vec![fan_in, shape.action_dim]);
    push("mu.bias".into(), vec![shape.action_dim]);
    push("value.weight".into(), vec![fan_in, 1]);
    push("value.bias".into(), vec![1]);
    push("logstd".into(), vec![shape.action_dim]);
    out
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Debug, Clone)]
struct Index {
    lstm: Option<(Dense, usize)>, // input weights + bias, recurrent weights offset
    hidden: Vec<Dense>,
    mu: Dense,
    value: Dense,
    logstd: usize,
}

impl Index {
    fn new(shape: &NetworkShape, tensors: &[TensorSpec]) -> Self {
        let off = |name: &str| tensors.iter().find(|t| t.name == name).expect("layout tensor").offset;
        let lstm = shape.recurrent.then(|| {
            let h = shape.recurrent_units;
            (
                Dense { w: off("lstm.weight_ih"), b: off("lstm.bias"), fan_in: shape.input_dim, fan_out: 4 * h },
                off("lstm.weight_hh"),
            )
        });
        let mut fan_in = shape.trunk_input();
        let hidden = shape
            .hidden
            .iter()
            .enumerate()
            .map(|(i, &width)| {
                let d = Dense {
                    w: off(&format!("mlp.{i}.weight")),
                    b: off(&format!("mlp.{i}.bias")),
                    fan_in,
                    fan_out: width,
                };
                fan_in = width;
                d
            })
            .collect();
        Index {
            lstm,
            hidden,
            mu: Dense { w: off("mu.weight"), b: off("mu.bias"), fan_in, fan_out: shape.action_dim },
            value: Dense { w: off("value.weight"), b: off("value.bias"), fan_in, fan_out: 1 },
            logstd: off("logstd"),
        }
    }
}

/// Recurrent cell state for one robot. Both vectors are empty for
/// feed-forward networks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HiddenState {
    pub cell: Vec<f64>,
    pub output: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(units: usize) -> Self {
        Self { cell: vec![0.0; units], output: vec![0.0; units] }
    }

    pub fn reset(&mut self) {
        self.cell.iter_mut().for_each(|x| *x = 0.0);
        self.output.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Hidden states for a batch, one row per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenBatch {
    pub cell: Array2<f64>,
    pub output: Array2<f64>,
}

impl HiddenBatch {
    pub fn zeros(batch: usize, units: usize) -> Self {
        Self { cell: Array2::zeros((batch, units)), output: Array2::zeros((batch, units)) }
    }

    pub fn reset_row(&mut self, row: usize) {
        self.cell.row_mut(row).fill(0.0);
        self.output.row_mut(row).fill(0.0);
    }

    pub fn row(&self, row: usize) -> HiddenState {
        HiddenState { cell: self.cell.row(row).to_vec(), output: self.output.row(row).to_vec() }
    }
}

/// Inputs for a forward pass over `t_len` steps of `batch` sequences.
/// Row `t * batch + b` of `obs` is step `t` of sequence `b`.
#[derive(Debug, Clone)]
pub struct SeqInput {
    pub t_len: usize,
    pub batch: usize,
    pub obs: Array2<f64>,
    /// Zero the hidden state before consuming this row.
    pub reset: Vec<bool>,
    pub initial: HiddenBatch,
}

/// Per-row network outputs.
#[derive(Debug, Clone)]
pub struct SeqOutput {
    pub mean: Array2<f64>,
    pub value: Array1<f64>,
    pub final_hidden: HiddenBatch,
}

#[derive(Debug, Clone)]
struct LstmCache {
    h_prev: Vec<Array2<f64>>,
    c_prev: Vec<Array2<f64>>,
    /// Activated gates `[i | f | g | o]`.
    gates: Vec<Array2<f64>>,
    tanh_c: Vec<Array2<f64>>,
}

/// Activations retained by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    t_len: usize,
    batch: usize,
    obs: Array2<f64>,
    reset: Vec<bool>,
    lstm: Option<LstmCache>,
    /// Trunk input followed by each hidden layer's output.
    acts: Vec<Array2<f64>>,
    mean: Array2<f64>,
}

/// Result of a single-observation forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub mean: [f64; 2],
    pub value: f64,
    pub hidden: HiddenState,
    pub cache: Cache,
}

/// Flat gradient vector in parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.global_norm();
        if n > max_norm && n > 0.0 {
            let k = max_norm / n;
            self.0.iter_mut().for_each(|g| *g *= k);
        }
        n
    }
}

/// Actor-critic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights {
    shape: NetworkShape,
    tensors: Vec<TensorSpec>,
    idx: IndexHolder,
    params: Vec<f64>,
}

// Index is derived data; equality is decided by shape and parameters.
#[derive(Debug, Clone)]
struct IndexHolder(Index);

impl PartialEq for IndexHolder {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

/// ELU derivative expressed through the activation value.
fn elu_grad_from_output(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else {
        a + 1.0
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn snap_f32(x: f64) -> f64 {
    x as f32 as f64
}

fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    let (n, m) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let a = DMatrix::<f64>::from_fn(n, m, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let (qi, qj) = if rows >= cols { (i, j) } else { (j, i) };
            let sign = if r[(qj, qj)] < 0.0 { -1.0 } else { 1.0 };
            out[i * cols + j] = gain * sign * q[(qi, qj)];
        }
    }
    out
}

impl PolicyWeights {
    pub fn zeros(shape: NetworkShape) -> Result<Self> {
        shape.validate().map_err(Error::ShapeMismatch)?;
        let tensors = layout(&shape);
        let total = tensors.last().map_or(0, |t| t.offset + t.len());
        let idx = IndexHolder(Index::new(&shape, &tensors));
        Ok(Self { shape, tensors, idx, params: vec![0.0; total] })
    }

    /// Orthogonal weights (gain √2 for the trunk, 0.01 for the action head,
    /// 1 for the value head and the cell), zero biases, logstd 0.
    pub fn init(shape: NetworkShape, rng: &mut Rng) -> Result<Self> {
        let mut w = Self::zeros(shape)?;
        let idx = w.idx.0.clone();
        let mut fill = |d: Dense, gain: f64, rows: usize, params: &mut [f64]| {
            let m = orthogonal(rows, d.fan_out, gain, rng);
            params[d.w..d.w + m.len()].copy_from_slice(&m);
        };
        if let Some((input, hh)) = idx.lstm {
            fill(input, 1.0, input.fan_in, &mut w.params);
            let rec = Dense { w: hh, ..input };
            fill(rec, 1.0, input.fan_out / 4, &mut w.params);
        }
        for d in &idx.hidden {
            fill(*d, std::f64::consts::SQRT_2, d.fan_in, &mut w.params);
        }
        fill(idx.mu, 0.01, idx.mu.fan_in, &mut w.params);
        fill(idx.value, 1.0, idx.value.fan_in, &mut w.params);
        w.snap();
        Ok(w)
    }

    /// Wraps an existing parameter vector.
    pub fn from_params(shape: NetworkShape, params: Vec<f64>) -> Result<Self> {
        let mut w = Self::zeros(shape)?;
        if params.len() != w.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a network that needs {}",
                params.len(),
                w.params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite parameter".into()));
        }
        w.params = params;
        Ok(w)
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &self.params[t.range()])
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Direct parameter access. Callers that write arbitrary `f64` values
    /// give up the f32-exactness guarantee until [`Self::snap`] is called.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn logstd(&self) -> [f64; 2] {
        let o = self.idx.0.logstd;
        [self.params[o], self.params[o + 1]]
    }

    /// Rounds every parameter to the nearest `f32` and clamps logstd.
    pub fn snap(&mut self) {
        self.params.iter_mut().for_each(|p| *p = snap_f32(*p));
        let o = self.idx.0.logstd;
        for p in &mut self.params[o..o + self.shape.action_dim] {
            *p = snap_f32(p.clamp(LOGSTD_MIN, LOGSTD_MAX));
        }
    }

    fn mat(&self, d: Dense) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((d.fan_in, d.fan_out), &self.params[d.w..d.w + d.fan_in * d.fan_out])
            .expect("layout matches")
    }

    fn bias(&self, d: Dense) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[d.b..d.b + d.fan_out])
    }

    fn recurrent_mat(&self) -> Option<ArrayView2<'_, f64>> {
        self.idx.0.lstm.map(|(d, hh)| {
            let h = d.fan_out / 4;
            ArrayView2::from_shape((h, 4 * h), &self.params[hh..hh + h * 4 * h]).expect("layout matches")
        })
    }

    fn check_obs_dim(&self, cols: usize) -> Result<()> {
        if cols != self.shape.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "observation has {cols} values, network expects {}",
                self.shape.input_dim
            )));
        }
        Ok(())
    }

    /// One LSTM step. Returns (activated gates, new cell, tanh of new cell,
    /// new output).
    fn lstm_step(
        &self,
        x: ArrayView2<'_, f64>,
        h_prev: &Array2<f64>,
        c_prev: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let (d, _) = self.idx.0.lstm.expect("recurrent network");
        let hh = self.recurrent_mat().expect("recurrent network");
        let units = d.fan_out / 4;
        let mut gates = x.dot(&self.mat(d));
        general_mat_mul(1.0, h_prev, &hh, 1.0, &mut gates);
        gates += &self.bias(d);
        for mut row in gates.rows_mut() {
            for (k, g) in row.iter_mut().enumerate() {
                *g = if (2 * units..3 * units).contains(&k) { g.tanh() } else { sigmoid(*g) };
            }
        }
        let i = gates.slice(s![.., 0..units]);
        let f = gates.slice(s![.., units..2 * units]);
        let g = gates.slice(s![.., 2 * units..3 * units]);
        let o = gates.slice(s![.., 3 * units..]);
        let c = &f * c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        (gates, c, tanh_c, h)
    }

    /// Trunk and heads on `input`; returns layer activations, mean, value.
    fn trunk(&self, input: Array2<f64>) -> (Vec<Array2<f64>>, Array2<f64>, Array1<f64>) {
        let idx = &self.idx.0;
        let mut acts = Vec::with_capacity(idx.hidden.len() + 1);
        acts.push(input);
        for d in &idx.hidden {
            let mut z = acts.last().expect("input").dot(&self.mat(*d));
            z += &self.bias(*d);
            z.mapv_inplace(elu);
            acts.push(z);
        }
        let last = acts.last().expect("layers");
        let mut mean = last.dot(&self.mat(idx.mu));
        mean += &self.bias(idx.mu);
        mean.mapv_inplace(f64::tanh);
        let mut value = last.dot(&self.mat(idx.value));
        value += &self.bias(idx.value);
        let value = value.column(0).to_owned();
        (acts, mean, value)
    }

    /// Forward pass for one step of a batch, without retaining a cache.
    /// `hidden` is advanced in place (untouched for feed-forward networks).
    pub fn step_batch(&self, obs: ArrayView2<'_, f64>, hidden: &mut HiddenBatch) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_obs_dim(obs.ncols())?;
        let input = if self.shape.recurrent {
            let (_, c, _, h) = self.lstm_step(obs, &hidden.output, &hidden.cell);
            hidden.cell = c;
            hidden.output = h.clone();
            h
        } else {
            obs.to_owned()
        };
        let (_, mean, value) = self.trunk(input);
        Ok((mean, value))
    }

    /// Forward pass over sequences, retaining everything needed by
    /// [`Self::backward`].
    pub fn forward_seq(&self, input: &SeqInput) -> Result<(SeqOutput, Cache)> {
        let SeqInput { t_len, batch, .. } = *input;
        self.check_obs_dim(input.obs.ncols())?;
        if input.obs.nrows() != t_len * batch || input.reset.len() != t_len * batch {
            return Err(Error::ShapeMismatch(format!(
                "{} rows / {} reset flags for {t_len} steps x {batch} sequences",
                input.obs.nrows(),
                input.reset.len()
            )));
        }
        let units = self.shape.state_units();
        if input.initial.output.dim() != (batch, units) || input.initial.cell.dim() != (batch, units) {
            return Err(Error::ShapeMismatch("initial hidden state has the wrong shape".into()));
        }
        let (trunk_in, lstm, final_hidden) = if self.shape.recurrent {
            let mut h = input.initial.output.clone();
            let mut c = input.initial.cell.clone();
            let mut cache = LstmCache {
                h_prev: Vec::with_capacity(t_len),
                c_prev: Vec::with_capacity(t_len),
                gates: Vec::with_capacity(t_len),
                tanh_c: Vec::with_capacity(t_len),
            };
            let mut outputs = Array2::zeros((t_len * batch, units));
            for t in 0..t_len {
                for b in 0..batch {
                    if input.reset[t * batch + b] {
                        h.row_mut(b).fill(0.0);
                        c.row_mut(b).fill(0.0);
                    }
                }
                let x = input.obs.slice(s![t * batch..(t + 1) * batch, ..]);
                let (gates, c_new, tanh_c, h_new) = self.lstm_step(x, &h, &c);
                outputs.slice_mut(s![t * batch..(t + 1) * batch, ..]).assign(&h_new);
                cache.h_prev.push(std::mem::replace(&mut h, h_new));
                cache.c_prev.push(std::mem::replace(&mut c, c_new));
                cache.gates.push(gates);
                cache.tanh_c.push(tanh_c);
            }
            (outputs, Some(cache), HiddenBatch { cell: c, output: h })
        } else {
            (input.obs.clone(), None, input.initial.clone())
        };
        let (acts, mean, value) = self.trunk(trunk_in);
        let cache = Cache {
            t_len,
            batch,
            obs: input.obs.clone(),
            reset: input.reset.clone(),
            lstm,
            acts,
            mean: mean.clone(),
        };
        Ok((SeqOutput { mean, value, final_hidden }, cache))
    }

    /// Single-observation forward pass.
    pub fn forward(&self, obs: &Observation, hidden: &HiddenState) -> Result<Forward> {
        let units = self.shape.state_units();
        if hidden.cell.len() != units || hidden.output.len() != units {
            return Err(Error::ShapeMismatch(format!(
                "hidden state has {} units, network carries {units}",
                hidden.output.len()
            )));
        }
        let row = ArrayView2::from_shape((1, obs.len()), obs.as_slice())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let initial = HiddenBatch {
            cell: Array2::from_shape_vec((1, units), hidden.cell.clone()).expect("sized"),
            output: Array2::from_shape_vec((1, units), hidden.output.clone()).expect("sized"),
        };
        let (out, cache) = self.forward_seq(&SeqInput {
            t_len: 1,
            batch: 1,
            obs: row.to_owned(),
            reset: vec![false],
            initial,
        })?;
        Ok(Forward {
            mean: [out.mean[(0, 0)], out.mean[(0, 1)]],
            value: out.value[0],
            hidden: if self.shape.recurrent { out.final_hidden.row(0) } else { hidden.clone() },
            cache,
        })
    }

    /// Reverse-mode gradients of a scalar loss `L` given `dL/dmean`
    /// (post-squash), `dL/dvalue` per row and `dL/dlogstd`. Recurrent
    /// networks are differentiated through the whole cached unroll.
    pub fn backward(
        &self,
        cache: &Cache,
        grad_mean: ArrayView2<'_, f64>,
        grad_value: ArrayView1<'_, f64>,
        grad_logstd: [f64; 2],
    ) -> Result<Gradients> {
        let rows = cache.t_len * cache.batch;
        if grad_mean.dim() != (rows, self.shape.action_dim) || grad_value.len() != rows {
            return Err(Error::ShapeMismatch(format!(
                "gradients for {} rows, cache holds {rows}",
                grad_value.len()
            )));
        }
        let idx = &self.idx.0;
        let mut grads = vec![0.0; self.params.len()];

        let mut du = grad_mean.to_owned();
        Zip::from(&mut du).and(&cache.mean).for_each(|g, &m| *g *= 1.0 - m * m);
        let gv = grad_value.insert_axis(Axis(1));

        let last = cache.acts.last().expect("layers");
        accumulate_dense(&mut grads, idx.mu, last.view(), du.view());
        accumulate_dense(&mut grads, idx.value, last.view(), gv);
        let mut da = du.dot(&self.mat(idx.mu).t());
        general_mat_mul(1.0, &gv, &self.mat(idx.value).t(), 1.0, &mut da);

        for (k, d) in idx.hidden.iter().enumerate().rev() {
            let out = &cache.acts[k + 1];
            Zip::from(&mut da).and(out).for_each(|g, &a| *g *= elu_grad_from_output(a));
            accumulate_dense(&mut grads, *d, cache.acts[k].view(), da.view());
            da = da.dot(&self.mat(*d).t());
        }

        if let (Some(lc), Some((d, hh_off))) = (&cache.lstm, idx.lstm) {
            let units = d.fan_out / 4;
            let whh = self.recurrent_mat().expect("recurrent");
            let b = cache.batch;
            let mut dh_next = Array2::<f64>::zeros((b, units));
            let mut dc_next = Array2::<f64>::zeros((b, units));
            for t in (0..cache.t_len).rev() {
                let dh = &da.slice(s![t * b..(t + 1) * b, ..]) + &dh_next;
                let gates = &lc.gates[t];
                let i = gates.slice(s![.., 0..units]);
                let f = gates.slice(s![.., units..2 * units]);
                let g = gates.slice(s![.., 2 * units..3 * units]);
                let o = gates.slice(s![.., 3 * units..]);
                let tc = &lc.tanh_c[t];
                let mut dc = dc_next.clone();
                Zip::from(&mut dc).and(&dh).and(&o).and(tc).for_each(|dc, &dh, &o, &tc| {
                    *dc += dh * o * (1.0 - tc * tc);
                });
                let mut dpre = Array2::<f64>::zeros((b, 4 * units));
                Zip::from(dpre.slice_mut(s![.., 0..units]))
                    .and(&dc)
                    .and(&i)
                    .and(&g)
                    .for_each(|d, &dc, &i, &g| *d = dc * g * i * (1.0 - i));
                Zip::from(dpre.slice_mut(s![.., units..2 * units]))
                    .and(&dc)
                    .and(&f)
                    .and(&lc.c_prev[t])
                    .for_each(|d, &dc, &f, &cp| *d = dc * cp * f * (1.0 - f));
                Zip::from(dpre.slice_mut(s![.., 2 * units..3 * units]))
                    .and(&dc)
                    .and(&i)
                    .and(&g)
                    .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
                Zip::from(dpre.slice_mut(s![.., 3 * units..]))
                    .and(&dh)
                    .and(&o)
                    .and(tc)
                    .for_each(|d, &dh, &o, &tc| *d = dh * tc * o * (1.0 - o));

                let x = cache.obs.slice(s![t * b..(t + 1) * b, ..]);
                accumulate_dense(&mut grads, d, x, dpre.view());
                let rec = Dense { w: hh_off, b: usize::MAX, fan_in: units, fan_out: 4 * units };
                accumulate_weight(&mut grads, rec, lc.h_prev[t].view(), dpre.view());

                dh_next = dpre.dot(&whh.t());
                dc_next = &dc * &f;
                for r in 0..b {
                    if cache.reset[t * b + r] {
                        dh_next.row_mut(r).fill(0.0);
                        dc_next.row_mut(r).fill(0.0);
                    }
                }
            }
        }

        grads[idx.logstd] += grad_logstd[0];
        grads[idx.logstd + 1] += grad_logstd[1];
        Ok(Gradients(grads))
    }

    /// One Adam step followed by f32 rounding and the logstd clamp.
    pub fn apply_adam(&mut self, grads: &Gradients, opt: &mut OptState) -> Result<()> {
        adam_step(&mut self.params, &grads.0, opt)?;
        self.snap();
        Ok(())
    }
}

fn accumulate_weight(grads: &mut [f64], d: Dense, input: ArrayView2<'_, f64>, delta: ArrayView2<'_, f64>) {
    let mut gw = ArrayViewMut2::from_shape((d.fan_in, d.fan_out), &mut grads[d.w..d.w + d.fan_in * d.fan_out])
        .expect("layout matches");
    general_mat_mul(1.0, &input.t(), &delta, 1.0, &mut gw);
}

fn accumulate_dense(grads: &mut [f64], d: Dense, input: ArrayView2<'_, f64>, delta: ArrayView2<'_, f64>) {
    accumulate_weight(grads, d, input, delta);
    let mut gb = ArrayViewMut1::from(&mut grads[d.b..d.b + d.fan_out]);
    gb += &delta.sum_axis(Axis(0));
}

/// Log-density and entropy of a diagonal Gaussian.
pub fn gaussian_logprob_entropy(mean: &[f64], logstd: &[f64], action: &[f64]) -> (f64, f64) {
    let mut logp = 0.0;
    let mut ent = 0.0;
    for ((m, ls), a) in mean.iter().zip(logstd).zip(action) {
        let var = (2.0 * ls).exp();
        logp -= (a - m) * (a - m) / (2.0 * var) + ls + 0.5 * LN_2PI;
        ent += ls + 0.5 * (LN_2PI + 1.0);
    }
    (logp, ent)
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { learning_rate: 3e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub hyper: AdamHyper,
}

impl OptState {
    pub fn new(num_params: usize, hyper: AdamHyper) -> Self {
        Self { m: vec![0.0; num_params], v: vec![0.0; num_params], step: 0, hyper }
    }
}

/// Bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], opt: &mut OptState) -> Result<()> {
    if params.len() != grads.len() || params.len() != opt.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            opt.m.len()
        )));
    }
    opt.step += 1;
    let AdamHyper { learning_rate, beta1, beta2, epsilon } = opt.hyper;
    let t = opt.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut opt.m).zip(&mut opt.v) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        *p -= learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + epsilon);
    }
    Ok(())
}
