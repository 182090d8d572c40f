//! A one-hidden-layer tanh network with hand-written backprop, plus Adam.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

/// Scalar-output MLP: `w2 . tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    /// Row-major `hidden x inputs`.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

/// Hidden activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub output: f64,
}

impl Mlp {
    /// Xavier-uniform initialization.
    pub fn new(inputs: usize, hidden: usize, rng: &mut dyn RngCore) -> Self {
        let a1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + 1) as f64).sqrt();
        Self {
            inputs,
            hidden,
            w1: (0..inputs * hidden).map(|_| rng.random_range(-a1..a1)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| rng.random_range(-a2..a2)).collect(),
            b2: 0.0,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn forward(&self, x: &[f64]) -> Activations {
        debug_assert_eq!(x.len(), self.inputs);
        let mut hidden = self.b1.clone();
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[j * self.inputs..(j + 1) * self.inputs];
            *h = (*h + dot(row, x)).tanh();
        }
        let output = dot(&self.w2, &hidden) + self.b2;
        Activations { hidden, output }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward(x).output
    }

    /// Adds `dout * d(output)/d(params)` into `grad`, laid out like [`Mlp::params`].
    pub fn accumulate_grad(&self, x: &[f64], act: &Activations, dout: f64, grad: &mut [f64]) {
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());
        gb2[0] += dout;
        for j in 0..self.hidden {
            let h = act.hidden[j];
            gw2[j] += dout * h;
            let dz = dout * self.w2[j] * (1.0 - h * h);
            if dz == 0.0 {
                continue;
            }
            gb1[j] += dz;
            let row = &mut gw1[j * self.inputs..(j + 1) * self.inputs];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += dz * xi;
            }
        }
    }

    /// Flat parameter vector: `w1`, `b1`, `w2`, `b2`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params());
        let (w1, rest) = p.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, b2) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = b2[0];
    }

    /// Applies `params[i] += delta[i]`.
    pub fn apply_update(&mut self, delta: &[f64]) {
        let mut p = self.params();
        for (x, d) in p.iter_mut().zip(delta) {
            *x += d;
        }
        self.set_params(&p);
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|x| x.is_finite())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adam optimizer state for a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Update step for gradient *ascent* on `grad`.
    pub fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        grad.iter()
            .enumerate()
            .map(|(i, g)| {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps)
            })
            .collect()
    }
}
