//! Stacked LSTM encoder-decoder reconstructing a window in reverse order.
//!
//! The decoder starts from the encoder's final per-layer states, receives a
//! zero vector at its first step and its own previous output afterwards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{dot, glorot, LstmCell, LstmStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmEd {
    pub dim: usize,
    pub widths: Vec<usize>,
}

struct Layout {
    encoder: Vec<(LstmCell, usize)>,
    decoder: Vec<(LstmCell, usize)>,
    out: usize,
    total: usize,
}

struct Trace {
    encoder: Vec<Vec<LstmStep>>,
    decoder: Vec<Vec<LstmStep>>,
    outputs: Vec<Vec<f64>>,
}

impl LstmEd {
    pub fn new(dim: usize, widths: &[usize]) -> Self {
        Self { dim, widths: widths.to_vec() }
    }

    fn layout(&self) -> Layout {
        let mut off = 0;
        let stack = |off: &mut usize| {
            let mut cells = Vec::new();
            let mut input = self.dim;
            for &h in &self.widths {
                let cell = LstmCell { input, hidden: h };
                cells.push((cell, *off));
                *off += cell.param_count();
                input = h;
            }
            cells
        };
        let encoder = stack(&mut off);
        let decoder = stack(&mut off);
        let out = off;
        let top = *self.widths.last().unwrap();
        Layout { encoder, decoder, out, total: out + self.dim * top + self.dim }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    pub fn init<R: Rng>(&self, r: &mut R) -> Vec<f64> {
        let lay = self.layout();
        let mut p = vec![0.0; lay.total];
        for (cell, off) in lay.encoder.iter().chain(&lay.decoder) {
            cell.init(r, &mut p[*off..*off + cell.param_count()]);
        }
        let top = *self.widths.last().unwrap();
        glorot(r, &mut p[lay.out..lay.out + self.dim * top], top, self.dim);
        p
    }

    fn run(&self, lay: &Layout, p: &[f64], window: &[f64]) -> Trace {
        let dim = self.dim;
        let steps = window.len() / dim;
        let depth = self.widths.len();
        let mut h: Vec<Vec<f64>> = self.widths.iter().map(|w| vec![0.0; *w]).collect();
        let mut c = h.clone();
        let mut encoder = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut input = window[t * dim..(t + 1) * dim].to_vec();
            let mut row = Vec::with_capacity(depth);
            for (k, (cell, off)) in lay.encoder.iter().enumerate() {
                let s = cell.forward(&p[*off..*off + cell.param_count()], &input, &h[k], &c[k]);
                h[k].clone_from(&s.h);
                c[k].clone_from(&s.c);
                input.clone_from(&s.h);
                row.push(s);
            }
            encoder.push(row);
        }
        let top = *self.widths.last().unwrap();
        let w_out = &p[lay.out..lay.out + dim * top];
        let b_out = &p[lay.out + dim * top..lay.total];
        let mut decoder = Vec::with_capacity(steps);
        let mut outputs = Vec::with_capacity(steps);
        let mut feed = vec![0.0; dim];
        for _ in 0..steps {
            let mut input = feed.clone();
            let mut row = Vec::with_capacity(depth);
            for (k, (cell, off)) in lay.decoder.iter().enumerate() {
                let s = cell.forward(&p[*off..*off + cell.param_count()], &input, &h[k], &c[k]);
                h[k].clone_from(&s.h);
                c[k].clone_from(&s.c);
                input.clone_from(&s.h);
                row.push(s);
            }
            let y: Vec<f64> = (0..dim).map(|o| b_out[o] + dot(&w_out[o * top..(o + 1) * top], &input)).collect();
            feed.clone_from(&y);
            outputs.push(y);
            decoder.push(row);
        }
        Trace { encoder, decoder, outputs }
    }

    /// Decoder outputs in decoding order (last input step first).
    pub fn reconstruct(&self, p: &[f64], window: &[f64]) -> Vec<Vec<f64>> {
        self.run(&self.layout(), p, window).outputs
    }

    /// Mean squared error between the window and its reversed reconstruction.
    pub fn raw_error(&self, p: &[f64], window: &[f64]) -> f64 {
        let outs = self.reconstruct(p, window);
        mse(&outs, window, self.dim)
    }

    /// Loss for one window, accumulating `scale * dloss/dparams` into `grad`.
    pub fn loss_and_grad(&self, p: &[f64], window: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let lay = self.layout();
        let dim = self.dim;
        let steps = window.len() / dim;
        let depth = self.widths.len();
        let top = *self.widths.last().unwrap();
        let tr = self.run(&lay, p, window);
        let loss = mse(&tr.outputs, window, dim);
        let norm = scale * 2.0 / (steps * dim) as f64;

        let mut dh: Vec<Vec<f64>> = self.widths.iter().map(|w| vec![0.0; *w]).collect();
        let mut dc = dh.clone();
        let mut d_feed = vec![0.0; dim];
        let w_out = lay.out..lay.out + dim * top;
        for s in (0..steps).rev() {
            let target = &window[(steps - 1 - s) * dim..(steps - s) * dim];
            let y = &tr.outputs[s];
            let dy: Vec<f64> = (0..dim).map(|o| norm * (y[o] - target[o]) + d_feed[o]).collect();
            let h_top = &tr.decoder[s][depth - 1].h;
            for o in 0..dim {
                let row = lay.out + o * top;
                for u in 0..top {
                    grad[row + u] += dy[o] * h_top[u];
                    dh[depth - 1][u] += dy[o] * p[row + u];
                }
                grad[w_out.end + o] += dy[o];
            }
            for k in (0..depth).rev() {
                let (cell, off) = lay.decoder[k];
                let n = cell.param_count();
                let (dx, dhp, dcp) =
                    cell.backward(&p[off..off + n], &tr.decoder[s][k], &dh[k], &dc[k], &mut grad[off..off + n]);
                dh[k] = dhp;
                dc[k] = dcp;
                if k > 0 {
                    dh[k - 1].iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                } else {
                    d_feed = dx;
                }
            }
        }
        for t in (0..steps).rev() {
            for k in (0..depth).rev() {
                let (cell, off) = lay.encoder[k];
                let n = cell.param_count();
                let (dx, dhp, dcp) =
                    cell.backward(&p[off..off + n], &tr.encoder[t][k], &dh[k], &dc[k], &mut grad[off..off + n]);
                dh[k] = dhp;
                dc[k] = dcp;
                if k > 0 {
                    dh[k - 1].iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
                }
            }
        }
        loss
    }

    /// Floats alive during one scoring pass.
    pub fn activation_footprint(&self, steps: usize) -> usize {
        let states: usize = self.widths.iter().map(|h| 10 * h).sum::<usize>() * 2;
        states + 3 * steps * self.dim
    }
}

fn mse(outputs: &[Vec<f64>], window: &[f64], dim: usize) -> f64 {
    let steps = outputs.len();
    let mut s = 0.0;
    for (k, y) in outputs.iter().enumerate() {
        let target = &window[(steps - 1 - k) * dim..(steps - k) * dim];
        s += y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    s / (steps * dim) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_shape_size() {
        let m = LstmEd::new(1, &[64, 32]);
        let enc = 4 * 64 * (1 + 64) + 4 * 64 + 4 * 32 * (64 + 32) + 4 * 32;
        assert_eq!(m.param_count(), 2 * enc + 32 + 1);
    }

    #[test]
    fn zero_weights_reconstruct_zero() {
        let m = LstmEd::new(2, &[3, 2]);
        let p = vec![0.0; m.param_count()];
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(m.reconstruct(&p, &w).iter().flatten().all(|v| *v == 0.0));
        assert!((m.raw_error(&p, &w) - 91.0 / 6.0).abs() < 1e-12);
    }
}
