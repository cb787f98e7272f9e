//! Central finite differences of a linear functional of the network outputs.
//!
//! Each perturbed parameter gets its own copy of the network; copies are
//! evaluated together, sharing the unperturbed weight matrices and applying
//! the single-entry change as an explicit correction term. Layers below the
//! perturbed tensor are reused from one unperturbed pass, and for recurrent
//! parameters the trunk is only evaluated on rows with nonzero loss weight.

use navrl::nn::PolicyWeights;
use ndarray::{s, Array1, Array2, ArrayView2};

/// Inputs and the loss `L = Σ gm·mean + gv·value + gl·logstd`.
#[derive(Debug, Clone)]
pub struct Probe {
    pub t_len: usize,
    pub batch: usize,
    /// Row `t * batch + b`.
    pub obs: Array2<f64>,
    pub reset: Vec<bool>,
    pub h0: Array2<f64>,
    pub c0: Array2<f64>,
    pub gm: Array2<f64>,
    pub gv: Array1<f64>,
    pub gl: [f64; 2],
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// through exp, about three times faster than libm tanh
fn tanh(x: f64) -> f64 {
    2.0 * sig(2.0 * x) - 1.0
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

fn tile(base: ArrayView2<f64>, copies: usize) -> Array2<f64> {
    let (r, c) = base.dim();
    let stacked = base.broadcast((copies, r, c)).unwrap().to_owned();
    stacked.into_shape_with_order((copies * r, c)).unwrap()
}

struct Dense {
    w: Array2<f64>,
    b: Array1<f64>,
}

pub struct Oracle<'a> {
    weights: &'a PolicyWeights,
    probe: &'a Probe,
    lstm: Option<(Array2<f64>, Array2<f64>, Array1<f64>)>,
    hidden: Vec<Dense>,
    mu: Dense,
    value: Dense,
    logstd: [f64; 2],
    /// Unperturbed trunk input and hidden layer outputs.
    base_acts: Vec<Array2<f64>>,
    /// Unperturbed hidden layer pre-activations.
    base_pre: Vec<Array2<f64>>,
}

#[derive(Clone, Copy, PartialEq)]
enum Site {
    LstmIh,
    LstmHh,
    LstmBias,
    Weight(usize),
    Bias(usize),
    Logstd,
}

impl<'a> Oracle<'a> {
    pub fn new(weights: &'a PolicyWeights, probe: &'a Probe) -> Self {
        let mat = |name: &str| {
            let t = weights.tensors().iter().find(|t| t.name == name).unwrap_or_else(|| panic!("{name}"));
            let data = weights.params()[t.range()].to_vec();
            if t.shape.len() == 2 {
                Array2::from_shape_vec((t.shape[0], t.shape[1]), data).unwrap()
            } else {
                Array2::from_shape_vec((1, t.shape[0]), data).unwrap()
            }
        };
        let vec = |name: &str| mat(name).row(0).to_owned();
        let dense = |w: &str, b: &str| Dense { w: mat(w), b: vec(b) };
        let shape = weights.shape();
        let lstm = shape
            .recurrent
            .then(|| (mat("lstm.weight_ih"), mat("lstm.weight_hh"), vec("lstm.bias")));
        let hidden = (0..shape.hidden.len())
            .map(|k| dense(&format!("mlp.{k}.weight"), &format!("mlp.{k}.bias")))
            .collect();
        let ls = vec("logstd");
        let mut o = Oracle {
            weights,
            probe,
            lstm,
            hidden,
            mu: dense("mu.weight", "mu.bias"),
            value: dense("value.weight", "value.bias"),
            logstd: [ls[0], ls[1]],
            base_acts: Vec::new(),
            base_pre: Vec::new(),
        };
        let mut a = if o.lstm.is_some() { o.lstm_copies(Site::LstmBias, &[(0, 0.0)]) } else { probe.obs.clone() };
        o.base_acts.push(a.clone());
        for k in 0..o.hidden.len() {
            let z = o.affine(&o.hidden[k], &a, false, false, &[]);
            a = z.mapv(elu);
            o.base_pre.push(z);
            o.base_acts.push(a.clone());
        }
        o
    }

    fn rows(&self) -> usize {
        self.probe.t_len * self.probe.batch
    }

    /// Trunk inputs for every copy, rows `copy * T * B + t * B + b`.
    fn lstm_copies(&self, site: Site, perts: &[(usize, f64)]) -> Array2<f64> {
        let (wih, whh, bias) = self.lstm.as_ref().unwrap();
        let p = perts.len();
        let (tl, bsz) = (self.probe.t_len, self.probe.batch);
        let units = whh.nrows();
        let cols = 4 * units;
        let mut out = Array2::zeros((p * tl * bsz, units));

        // Step 0: every copy starts from the same state, so a single-entry
        // perturbation changes exactly one gate column and one unit.
        let mut h0 = self.probe.h0.clone();
        let mut c0 = self.probe.c0.clone();
        for b in 0..bsz {
            if self.probe.reset[b] {
                h0.row_mut(b).fill(0.0);
                c0.row_mut(b).fill(0.0);
            }
        }
        let x0 = self.probe.obs.slice(s![0..bsz, ..]);
        let pre0 = x0.dot(wih) + bias + h0.dot(whh);
        let cell = |pre: &[f64], c_prev: f64| {
            let c = sig(pre[1]) * c_prev + sig(pre[0]) * tanh(pre[2]);
            (c, sig(pre[3]) * tanh(c))
        };
        let mut base_h = Array2::zeros((bsz, units));
        let mut base_c = Array2::zeros((bsz, units));
        for b in 0..bsz {
            for u in 0..units {
                let g = [pre0[(b, u)], pre0[(b, units + u)], pre0[(b, 2 * units + u)], pre0[(b, 3 * units + u)]];
                let (c, h) = cell(&g, c0[(b, u)]);
                base_c[(b, u)] = c;
                base_h[(b, u)] = h;
            }
        }
        let mut h = tile(base_h.view(), p);
        let mut c = tile(base_c.view(), p);
        for (ci, &(e, d)) in perts.iter().enumerate() {
            for b in 0..bsz {
                let (j, delta) = match site {
                    Site::LstmIh => (e % cols, d * x0[(b, e / cols)]),
                    Site::LstmHh => (e % cols, d * h0[(b, e / cols)]),
                    _ => (e, d),
                };
                let u = j % units;
                let mut g = [pre0[(b, u)], pre0[(b, units + u)], pre0[(b, 2 * units + u)], pre0[(b, 3 * units + u)]];
                g[j / units] += delta;
                let (cn, hn) = cell(&g, c0[(b, u)]);
                c[(ci * bsz + b, u)] = cn;
                h[(ci * bsz + b, u)] = hn;
            }
        }
        for ci in 0..p {
            for b in 0..bsz {
                out.row_mut(ci * tl * bsz + b).assign(&h.row(ci * bsz + b));
            }
        }

        for t in 1..tl {
            for ci in 0..p {
                for b in 0..bsz {
                    if self.probe.reset[t * bsz + b] {
                        h.row_mut(ci * bsz + b).fill(0.0);
                        c.row_mut(ci * bsz + b).fill(0.0);
                    }
                }
            }
            let x = self.probe.obs.slice(s![t * bsz..(t + 1) * bsz, ..]);
            let shared = x.dot(wih) + bias;
            let mut pre = if t == 1 {
                // after step 0 each copy differs from the base state in one
                // unit, so its recurrent input is a rank-1 update
                let mut hb = base_h.clone();
                for b in 0..bsz {
                    if self.probe.reset[bsz + b] {
                        hb.row_mut(b).fill(0.0);
                    }
                }
                let base_rec = hb.dot(whh);
                let mut pre = tile(base_rec.view(), p);
                for (ci, &(e, _)) in perts.iter().enumerate() {
                    let u = self.changed_unit(site, e);
                    for b in 0..bsz {
                        let row = ci * bsz + b;
                        let dh = h[(row, u)] - hb[(b, u)];
                        if dh != 0.0 {
                            pre.row_mut(row).scaled_add(dh, &whh.row(u));
                        }
                    }
                }
                pre
            } else {
                h.dot(whh)
            };
            for (ci, &(e, d)) in perts.iter().enumerate() {
                for b in 0..bsz {
                    let row = ci * bsz + b;
                    pre.row_mut(row).zip_mut_with(&shared.row(b), |a, s| *a += s);
                    match site {
                        Site::LstmIh => pre[(row, e % cols)] += d * x[(b, e / cols)],
                        Site::LstmHh => pre[(row, e % cols)] += d * h[(row, e / cols)],
                        Site::LstmBias => pre[(row, e)] += d,
                        _ => {}
                    }
                }
            }
            for row in 0..p * bsz {
                let g = pre.row(row);
                let g = g.as_slice().unwrap();
                let cr = c.row_mut(row).into_slice().unwrap();
                let hr = h.row_mut(row).into_slice().unwrap();
                for u in 0..units {
                    (cr[u], hr[u]) = cell(&[g[u], g[units + u], g[2 * units + u], g[3 * units + u]], cr[u]);
                }
            }
            for ci in 0..p {
                for b in 0..bsz {
                    out.row_mut(ci * tl * bsz + t * bsz + b).assign(&h.row(ci * bsz + b));
                }
            }
        }
        out
    }

    fn changed_unit(&self, site: Site, e: usize) -> usize {
        let units = self.lstm.as_ref().unwrap().1.nrows();
        match site {
            Site::LstmBias => e % units,
            _ => (e % (4 * units)) % units,
        }
    }

    /// First hidden layer for cell-parameter copies. Step-0 rows differ from
    /// the base trunk input in one unit only.
    fn first_layer_after_cell(&self, a: &Array2<f64>, site: Site, perts: &[(usize, f64)]) -> Array2<f64> {
        let d = &self.hidden[0];
        let (tl, bsz) = (self.probe.t_len, self.probe.batch);
        let r = tl * bsz;
        let base_a = &self.base_acts[0];
        let base_z = base_a.slice(s![0..bsz, ..]).dot(&d.w) + &d.b;
        let later: Vec<usize> = (0..perts.len()).flat_map(|ci| (bsz..r).map(move |rr| ci * r + rr)).collect();
        let sub = a.select(ndarray::Axis(0), &later);
        let z_later = sub.dot(&d.w) + &d.b;
        let mut z = Array2::zeros((a.nrows(), d.w.ncols()));
        for (k, &row) in later.iter().enumerate() {
            z.row_mut(row).assign(&z_later.row(k));
        }
        for (ci, &(e, _)) in perts.iter().enumerate() {
            let u = self.changed_unit(site, e);
            for b in 0..bsz {
                let row = ci * r + b;
                z.row_mut(row).assign(&base_z.row(b));
                let da = a[(row, u)] - base_a[(b, u)];
                if da != 0.0 {
                    z.row_mut(row).scaled_add(da, &d.w.row(u));
                }
            }
        }
        z.mapv_inplace(elu);
        z
    }

    /// A perturbation in hidden layer `k` changes one output unit. That unit
    /// is recomputed directly and the next layer gets a rank-1 correction.
    /// Returns the activations after the first unaffected layer and its index.
    fn hidden_unit_copies(&self, k: usize, site: Site, perts: &[(usize, f64)]) -> (Array2<f64>, usize) {
        let r = self.rows();
        let cols = self.hidden[k].w.ncols();
        let (a_in, z) = (&self.base_acts[k], &self.base_pre[k]);
        let mut a = tile(self.base_acts[k + 1].view(), perts.len());
        let mut units = Vec::with_capacity(perts.len());
        for (ci, &(e, d)) in perts.iter().enumerate() {
            let j = if site == Site::Weight(k) { e % cols } else { e };
            for rr in 0..r {
                let dz = if site == Site::Weight(k) { d * a_in[(rr, e / cols)] } else { d };
                a[(ci * r + rr, j)] = elu(z[(rr, j)] + dz);
            }
            units.push(j);
        }
        if k + 1 == self.hidden.len() {
            return (a, k + 1);
        }
        let next = &self.hidden[k + 1];
        let base_next = &self.base_pre[k + 1];
        let mut zn = tile(base_next.view(), perts.len());
        for (ci, &j) in units.iter().enumerate() {
            for rr in 0..r {
                let da = a[(ci * r + rr, j)] - self.base_acts[k + 1][(rr, j)];
                if da != 0.0 {
                    zn.row_mut(ci * r + rr).scaled_add(da, &next.w.row(j));
                }
            }
        }
        zn.mapv_inplace(elu);
        (zn, k + 2)
    }

    fn affine(&self, d: &Dense, a: &Array2<f64>, weight: bool, hit: bool, perts: &[(usize, f64)]) -> Array2<f64> {
        let mut z = a.dot(&d.w) + &d.b;
        if hit {
            let r = self.rows();
            let cols = d.w.ncols();
            for (ci, &(e, delta)) in perts.iter().enumerate() {
                for rr in ci * r..(ci + 1) * r {
                    if weight {
                        z[(rr, e % cols)] += delta * a[(rr, e / cols)];
                    } else {
                        z[(rr, e)] += delta;
                    }
                }
            }
        }
        z
    }

    fn layer(&self, k: usize, a: Array2<f64>, site: Site, perts: &[(usize, f64)]) -> Array2<f64> {
        let hit = site == Site::Weight(k) || site == Site::Bias(k);
        let mut z = self.affine(&self.hidden[k], &a, site == Site::Weight(k), hit, perts);
        z.mapv_inplace(elu);
        z
    }

    fn losses(&self, site: Site, perts: &[(usize, f64)]) -> Vec<f64> {
        let p = perts.len();
        let n = self.hidden.len();
        let (mut a, start) = match site {
            Site::LstmIh | Site::LstmHh | Site::LstmBias => (self.lstm_copies(site, perts), 0),
            Site::Weight(k) | Site::Bias(k) if k < n => self.hidden_unit_copies(k, site, perts),
            Site::Weight(k) | Site::Bias(k) => (tile(self.base_acts[k.min(n)].view(), p), k.min(n)),
            Site::Logstd => (tile(self.base_acts[n].view(), p), n),
        };
        let r = self.rows();
        let mut start = start;
        // rows the loss reads; cell-parameter copies skip the trunk elsewhere
        let mut used: Vec<usize> = (0..r).collect();
        if matches!(site, Site::LstmIh | Site::LstmHh | Site::LstmBias) {
            let live: Vec<usize> = (0..r).filter(|&rr| self.weighted(rr)).collect();
            if live.iter().all(|&rr| rr >= self.probe.batch) {
                let rows: Vec<usize> = (0..p).flat_map(|ci| live.iter().map(move |&rr| ci * r + rr)).collect();
                a = a.select(ndarray::Axis(0), &rows);
                used = live;
            } else {
                a = self.first_layer_after_cell(&a, site, perts);
                start = 1;
            }
        }
        for k in start..n {
            a = self.layer(k, a, site, perts);
        }
        let mean = self
            .affine(&self.mu, &a, site == Site::Weight(n), site == Site::Weight(n) || site == Site::Bias(n), perts)
            .mapv(f64::tanh);
        let value = self.affine(
            &self.value,
            &a,
            site == Site::Weight(n + 1),
            site == Site::Weight(n + 1) || site == Site::Bias(n + 1),
            perts,
        );
        let pr = self.probe;
        let nu = used.len();
        perts
            .iter()
            .enumerate()
            .map(|(ci, &(e, d))| {
                let mut ls = self.logstd;
                if site == Site::Logstd {
                    ls[e] += d;
                }
                let mut l = pr.gl[0] * ls[0] + pr.gl[1] * ls[1];
                for (k, &rr) in used.iter().enumerate() {
                    let row = ci * nu + k;
                    l += pr.gm[(rr, 0)] * mean[(row, 0)] + pr.gm[(rr, 1)] * mean[(row, 1)] + pr.gv[rr] * value[(row, 0)];
                }
                l
            })
            .collect()
    }

    fn weighted(&self, rr: usize) -> bool {
        let pr = self.probe;
        pr.gm[(rr, 0)] != 0.0 || pr.gm[(rr, 1)] != 0.0 || pr.gv[rr] != 0.0
    }

    /// Loss at the unperturbed parameters.
    pub fn loss(&self) -> f64 {
        self.losses(Site::Logstd, &[(0, 0.0)])[0]
    }

    fn site_of(&self, name: &str) -> Site {
        let n = self.hidden.len();
        match name {
            "lstm.weight_ih" => Site::LstmIh,
            "lstm.weight_hh" => Site::LstmHh,
            "lstm.bias" => Site::LstmBias,
            "mu.weight" => Site::Weight(n),
            "mu.bias" => Site::Bias(n),
            "value.weight" => Site::Weight(n + 1),
            "value.bias" => Site::Bias(n + 1),
            "logstd" => Site::Logstd,
            other => {
                let k: usize = other.split('.').nth(1).unwrap().parse().unwrap();
                if other.ends_with("weight") {
                    Site::Weight(k)
                } else {
                    Site::Bias(k)
                }
            }
        }
    }

    /// Central-difference gradient for every parameter, in layout order.
    pub fn gradient(&self, h: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.weights.num_params()];
        for t in self.weights.tensors() {
            let site = self.site_of(&t.name);
            let elems: Vec<usize> = (0..t.len()).collect();
            for chunk in elems.chunks(192) {
                let perts: Vec<(usize, f64)> = chunk.iter().flat_map(|&e| [(e, h), (e, -h)]).collect();
                let l = self.losses(site, &perts);
                for (k, &e) in chunk.iter().enumerate() {
                    out[t.offset + e] = (l[2 * k] - l[2 * k + 1]) / (2.0 * h);
                }
            }
        }
        out
    }
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over all parameters, with the
/// index where it occurs.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> (f64, usize) {
    analytic
        .iter()
        .zip(numeric)
        .enumerate()
        .map(|(i, (a, n))| ((a - n).abs() / a.abs().max(n.abs()).max(floor), i))
        .fold((0.0, 0), |acc, x| if x.0 > acc.0 { x } else { acc })
}

/// Gaussian inputs, loss weights and (for recurrent nets) initial state.
pub fn random_probe(weights: &PolicyWeights, t_len: usize, batch: usize, reset_every: Option<usize>, seed: u64) -> Probe {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = navrl::rng_from_seed(seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let shape = weights.shape();
    let rows = t_len * batch;
    let units = shape.state_units();
    Probe {
        t_len,
        batch,
        obs: Array2::from_shape_fn((rows, shape.input_dim), |_| normal()),
        reset: (0..rows).map(|r| reset_every.is_some_and(|k| (r / batch) % k == k - 1)).collect(),
        h0: Array2::from_shape_fn((batch, units), |_| 0.5 * normal()),
        c0: Array2::from_shape_fn((batch, units), |_| 0.5 * normal()),
        gm: Array2::from_shape_fn((rows, 2), |_| normal()),
        gv: Array1::from_shape_fn(rows, |_| normal()),
        gl: [normal(), normal()],
    }
}

/// Analytic gradient of the probe loss from the library.
pub fn analytic(weights: &PolicyWeights, probe: &Probe) -> (Vec<f64>, f64) {
    use navrl::nn::{HiddenBatch, SeqInput};
    let input = SeqInput {
        t_len: probe.t_len,
        batch: probe.batch,
        obs: probe.obs.clone(),
        reset: probe.reset.clone(),
        initial: HiddenBatch { cell: probe.c0.clone(), output: probe.h0.clone() },
    };
    let (out, cache) = weights.forward_seq(&input).unwrap();
    let ls = weights.logstd();
    let loss = (&out.mean * &probe.gm).sum() + (&out.value * &probe.gv).sum() + probe.gl[0] * ls[0] + probe.gl[1] * ls[1];
    let g = weights.backward(&cache, probe.gm.view(), probe.gv.view(), probe.gl).unwrap();
    (g.0, loss)
}
