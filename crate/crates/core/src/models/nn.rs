//! Minimal dense and recurrent building blocks with hand-written backprop.
//!
//! Parameters of every network live in one flat `Vec<f64>`; layers are views
//! into it by offset. That keeps SGD, serialization and finite-difference
//! checks uniform across families.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Act {
    Identity,
    Tanh,
    Sigmoid,
}

impl Act {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Act::Identity => z,
            Act::Tanh => z.tanh(),
            Act::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Act::Identity => 1.0,
            Act::Tanh => 1.0 - a * a,
            Act::Sigmoid => a * (1.0 - a),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Glorot-uniform fill of a `fan_out x fan_in` block.
pub fn glorot<R: Rng>(r: &mut R, w: &mut [f64], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in w {
        *v = r.random_range(-limit..limit);
    }
}

/// Fully connected feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub acts: Vec<Act>,
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, acts: Vec<Act>) -> Self {
        assert_eq!(sizes.len(), acts.len() + 1, "one activation per layer");
        Self { sizes, acts }
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.acts.len()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn init<R: Rng>(&self, r: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count()];
        let mut off = 0;
        for w in self.sizes.windows(2) {
            let (i, o) = (w[0], w[1]);
            glorot(r, &mut p[off..off + i * o], i, o);
            off += i * o + o;
        }
        p
    }

    /// Layer outputs, `acts[0]` being the input itself.
    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(x.len(), self.input());
        let mut outs = Vec::with_capacity(self.layers() + 1);
        outs.push(x.to_vec());
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (ni, no) = (w[0], w[1]);
            let weights = &p[off..off + ni * no];
            let bias = &p[off + ni * no..off + ni * no + no];
            let prev = &outs[l];
            let act = self.acts[l];
            let out: Vec<f64> = (0..no)
                .map(|o| {
                    let row = &weights[o * ni..(o + 1) * ni];
                    act.apply(bias[o] + dot(row, prev))
                })
                .collect();
            outs.push(out);
            off += ni * no + no;
        }
        outs
    }

    pub fn predict(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(p, x).pop().unwrap()
    }

    /// Accumulates `dL/dparams` into `grad` given `dL/d(output)` and returns
    /// `dL/d(input)`.
    pub fn backward(&self, p: &[f64], outs: &[Vec<f64>], d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        self.backward_from(p, outs, self.layers(), d_out, grad)
    }

    /// Like [`Mlp::backward`] but starting from the output of layer
    /// `from_layer` (1-based: `outs[from_layer]`), so a gradient on a hidden
    /// activation can be injected.
    pub fn backward_from(
        &self,
        p: &[f64],
        outs: &[Vec<f64>],
        from_layer: usize,
        d_out: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let offsets = self.offsets();
        let mut delta = d_out.to_vec();
        for l in (0..from_layer).rev() {
            let (ni, no) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let out = &outs[l + 1];
            let input = &outs[l];
            let act = self.acts[l];
            for o in 0..no {
                delta[o] *= act.grad_from_output(out[o]);
            }
            let mut d_in = vec![0.0; ni];
            for o in 0..no {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = off + o * ni;
                let g = &mut grad[row..row + ni];
                let w = &p[row..row + ni];
                for k in 0..ni {
                    g[k] += d * input[k];
                    d_in[k] += d * w[k];
                }
                grad[off + ni * no + o] += d;
            }
            delta = d_in;
        }
        delta
    }

    fn offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.layers());
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        offs
    }
}

/// Four independent accumulators let the compiler vectorize the reduction.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// One LSTM layer. Gate rows are ordered input, forget, cell, output; the
/// weight block is `4H x (I + H)` over `[x; h_prev]`, followed by `4H` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCell {
    pub fn param_count(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden) + 4 * self.hidden
    }

    pub fn init<R: Rng>(&self, r: &mut R, p: &mut [f64]) {
        let (h, k) = (self.hidden, self.input + self.hidden);
        glorot(r, &mut p[..4 * h * k], k, 4 * h);
        let bias = &mut p[4 * h * k..];
        bias.iter_mut().for_each(|b| *b = 0.0);
        // Open forget gates so early gradients survive the recurrence.
        bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
    }

    pub fn forward(&self, p: &[f64], x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let (ni, nh) = (self.input, self.hidden);
        let k = ni + nh;
        let bias = &p[4 * nh * k..4 * nh * k + 4 * nh];
        let mut z = bias.to_vec();
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &p[r * k..(r + 1) * k];
            *zr += dot(&row[..ni], x) + dot(&row[ni..], h_prev);
        }
        let i: Vec<f64> = z[..nh].iter().map(|v| sigmoid(*v)).collect();
        let f: Vec<f64> = z[nh..2 * nh].iter().map(|v| sigmoid(*v)).collect();
        let g: Vec<f64> = z[2 * nh..3 * nh].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * nh..].iter().map(|v| sigmoid(*v)).collect();
        let c: Vec<f64> = (0..nh).map(|u| f[u] * c_prev[u] + i[u] * g[u]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..nh).map(|u| o[u] * tanh_c[u]).collect();
        LstmStep { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), i, f, g, o, c, tanh_c, h }
    }

    /// Backprop through one step. `dh`/`dc` are gradients on this step's
    /// outputs; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &self,
        p: &[f64],
        s: &LstmStep,
        dh: &[f64],
        dc: &[f64],
        grad: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (ni, nh) = (self.input, self.hidden);
        let k = ni + nh;
        let mut dz = vec![0.0; 4 * nh];
        let mut dc_prev = vec![0.0; nh];
        for u in 0..nh {
            let d_o = dh[u] * s.tanh_c[u];
            let dct = dc[u] + dh[u] * s.o[u] * (1.0 - s.tanh_c[u] * s.tanh_c[u]);
            let di = dct * s.g[u];
            let dg = dct * s.i[u];
            let df = dct * s.c_prev[u];
            dc_prev[u] = dct * s.f[u];
            dz[u] = di * s.i[u] * (1.0 - s.i[u]);
            dz[nh + u] = df * s.f[u] * (1.0 - s.f[u]);
            dz[2 * nh + u] = dg * (1.0 - s.g[u] * s.g[u]);
            dz[3 * nh + u] = d_o * s.o[u] * (1.0 - s.o[u]);
        }
        let mut dx = vec![0.0; ni];
        let mut dh_prev = vec![0.0; nh];
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = r * k;
            {
                let g = &mut grad[row..row + k];
                for (q, xv) in s.x.iter().enumerate() {
                    g[q] += d * xv;
                }
                for (q, hv) in s.h_prev.iter().enumerate() {
                    g[ni + q] += d * hv;
                }
            }
            let w = &p[row..row + k];
            for q in 0..ni {
                dx[q] += d * w[q];
            }
            for q in 0..nh {
                dh_prev[q] += d * w[ni + q];
            }
            grad[4 * nh * k + r] += d;
        }
        (dx, dh_prev, dc_prev)
    }
}

/// SGD with classical momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm cap; non-positive disables it.
    pub clip_norm: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(n: usize, lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, clip_norm: 5.0, velocity: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if self.clip_norm > 0.0 && norm > self.clip_norm { self.clip_norm / norm } else { 1.0 };
        for ((p, v), g) in params.iter_mut().zip(self.velocity.iter_mut()).zip(grad) {
            *v = self.momentum * *v - self.lr * scale * g;
            *p += *v;
        }
    }
}
