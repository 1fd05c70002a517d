//! A small dense network with hand-rolled backprop.
//!
//! Hidden layers use tanh, the output layer is linear. Everything is f64 so
//! finite-difference gradient checks hold to tight tolerances. The caller
//! owns the training loop: run [`Mlp::forward_cached`], feed the loss
//! gradient w.r.t. the outputs to [`Mlp::backward`], accumulate into
//! [`Grads`], and let [`Adam`] apply them.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer activations from a cached forward pass; `acts[0]` is the input.
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("nonempty cache")
    }
}

#[derive(Debug, Clone)]
pub struct Grads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Mlp {
    /// Xavier-uniform initialization over the given layer sizes, input
    /// dimension first.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    w: (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect(),
                    b: vec![0.0; fan_out],
                    in_dim: fan_in,
                    out_dim: fan_out,
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().expect("nonempty net").in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty net").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a, i < last);
        }
        a
    }

    pub fn forward_cached(&self, x: &[f64]) -> Cache {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.apply(acts.last().unwrap(), i < last);
            acts.push(a);
        }
        Cache { acts }
    }

    /// Accumulate parameter gradients for one sample given the loss gradient
    /// w.r.t. the network output.
    pub fn backward(&self, cache: &Cache, dout: &[f64], grads: &mut Grads) {
        let mut delta = dout.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &cache.acts[i];
            let (dw, db) = &mut grads.layers[i];
            let nz = nonzero(input);
            for o in 0..layer.out_dim {
                let d = delta[o];
                db[o] += d;
                let row = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                match &nz {
                    Some(idx) => {
                        for &j in idx {
                            row[j] += d * input[j];
                        }
                    }
                    None => {
                        for (slot, &x) in row.iter_mut().zip(input.iter()) {
                            *slot += d * x;
                        }
                    }
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = delta[o];
                    let row = &layer.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (p, &w) in prev.iter_mut().zip(row.iter()) {
                        *p += d * w;
                    }
                }
                // Hidden activations are tanh; 1 - y^2 is its derivative.
                for (p, &y) in prev.iter_mut().zip(cache.acts[i].iter()) {
                    *p *= 1.0 - y * y;
                }
                delta = prev;
            }
        }
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            layers: self
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }
}

impl Layer {
    fn apply(&self, x: &[f64], hidden: bool) -> Vec<f64> {
        let nz = nonzero(x);
        let mut out = self.b.clone();
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0;
            match &nz {
                Some(idx) => {
                    for &j in idx {
                        acc += row[j] * x[j];
                    }
                }
                None => {
                    for (w, v) in row.iter().zip(x.iter()) {
                        acc += w * v;
                    }
                }
            }
            *slot += acc;
            if hidden {
                *slot = slot.tanh();
            }
        }
        out
    }
}

/// Index list for vectors that are mostly zeros, as the wide embedding
/// vectors are. Skipped entries contribute exactly zero, so sparse and dense
/// accumulation agree; the dense path stays for ordinary activations.
fn nonzero(x: &[f64]) -> Option<Vec<usize>> {
    if x.len() < 256 {
        return None;
    }
    let idx: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    if idx.len() * 4 < x.len() {
        Some(idx)
    } else {
        None
    }
}

impl Grads {
    /// Scale all gradients, typically by 1/batch.
    pub fn scale(&mut self, factor: f64) {
        for (dw, db) in &mut self.layers {
            for g in dw.iter_mut().chain(db.iter_mut()) {
                *g *= factor;
            }
        }
    }

    /// Global L2 norm clip; returns the pre-clip norm.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let sq: f64 = self
            .layers
            .iter()
            .flat_map(|(dw, db)| dw.iter().chain(db.iter()))
            .map(|g| g * g)
            .sum();
        let norm = sq.sqrt();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|(dw, db)| dw.iter().chain(db.iter()))
    }
}

/// Adam with the usual defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, (p, g)) in net.params_mut().zip(grads.values()).enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Finite-difference gradient check: max absolute difference between
/// analytic and numeric gradients of `loss` over every parameter.
pub fn gradient_check(
    net: &mut Mlp,
    x: &[f64],
    loss_grad: impl Fn(&[f64]) -> (f64, Vec<f64>),
) -> f64 {
    let cache = net.forward_cached(x);
    let (_, dout) = loss_grad(cache.output());
    let mut grads = net.zero_grads();
    net.backward(&cache, &dout, &mut grads);
    let analytic: Vec<f64> = grads.values().copied().collect();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let count = net.param_count();
    for i in 0..count {
        let original = *net.params().nth(i).unwrap();
        *net.params_mut().nth(i).unwrap() = original + h;
        let (hi, _) = loss_grad(&net.forward(x));
        *net.params_mut().nth(i).unwrap() = original - h;
        let (lo, _) = loss_grad(&net.forward(x));
        *net.params_mut().nth(i).unwrap() = original;
        let numeric = (hi - lo) / (2.0 * h);
        worst = worst.max((numeric - analytic[i]).abs());
    }
    worst
}
