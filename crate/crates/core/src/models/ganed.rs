//! Adversarially regularized encoder-decoder for vector data.
//!
//! Three fully connected networks share one flat parameter vector laid out
//! as `[encoder | generator | discriminator]`.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::{sigmoid, softplus, sq_dist, Act, Mlp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanEd {
    pub dim: usize,
    pub latent: usize,
    pub encoder: Mlp,
    pub generator: Mlp,
    pub discriminator: Mlp,
    /// Weight of the reconstruction term in the score.
    pub alpha: f64,
}

fn hidden_acts(n: usize) -> Vec<Act> {
    let mut acts = vec![Act::Tanh; n];
    acts.push(Act::Identity);
    acts
}

impl GanEd {
    pub fn new(dim: usize, layers: &[usize], latent: usize, alpha: f64) -> Self {
        let mut enc = vec![dim];
        enc.extend_from_slice(layers);
        enc.push(latent);
        let mut gen = vec![latent];
        gen.extend(layers.iter().rev());
        gen.push(dim);
        let mut disc = vec![dim];
        disc.extend_from_slice(layers);
        disc.push(1);
        let h = layers.len();
        Self {
            dim,
            latent,
            encoder: Mlp::new(enc, hidden_acts(h)),
            generator: Mlp::new(gen, hidden_acts(h)),
            discriminator: Mlp::new(disc, hidden_acts(h)),
            alpha,
        }
    }

    pub fn encoder_range(&self) -> Range<usize> {
        0..self.encoder.param_count()
    }

    pub fn generator_range(&self) -> Range<usize> {
        let s = self.encoder.param_count();
        s..s + self.generator.param_count()
    }

    pub fn discriminator_range(&self) -> Range<usize> {
        let s = self.generator_range().end;
        s..s + self.discriminator.param_count()
    }

    pub fn param_count(&self) -> usize {
        self.discriminator_range().end
    }

    pub fn init<R: Rng>(&self, r: &mut R) -> Vec<f64> {
        let mut p = self.encoder.init(r);
        p.extend(self.generator.init(r));
        p.extend(self.discriminator.init(r));
        p
    }

    pub fn sample_latent<R: Rng>(&self, r: &mut R) -> Vec<f64> {
        (0..self.latent).map(|_| StandardNormal.sample(r)).collect()
    }

    pub fn reconstruct(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let z = self.encoder.predict(&p[self.encoder_range()], x);
        self.generator.predict(&p[self.generator_range()], &z)
    }

    pub fn reconstruction_error(&self, p: &[f64], x: &[f64]) -> f64 {
        sq_dist(x, &self.reconstruct(p, x))
    }

    fn features(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut outs = self.discriminator.forward(&p[self.discriminator_range()], x);
        outs.swap_remove(self.discriminator.layers() - 1)
    }

    pub fn raw_error(&self, p: &[f64], x: &[f64]) -> f64 {
        let xh = self.reconstruct(p, x);
        let rec = sq_dist(x, &xh);
        let feat = sq_dist(&self.features(p, x), &self.features(p, &xh));
        self.alpha * rec + (1.0 - self.alpha) * feat
    }

    /// Discriminator loss `mean[softplus(-D(x)) + softplus(D(G(z)))]` and its
    /// gradient with respect to all parameters.
    pub fn discriminator_loss(&self, p: &[f64], xs: &[&[f64]], zs: &[Vec<f64>], grad: &mut [f64]) -> f64 {
        let (gr, dr) = (self.generator_range(), self.discriminator_range());
        let (pg, pd) = (&p[gr.clone()], &p[dr.clone()]);
        let b = xs.len() as f64;
        let mut loss = 0.0;
        for (x, z) in xs.iter().zip(zs) {
            let real = self.discriminator.forward(pd, x);
            let lr = real.last().unwrap()[0];
            loss += softplus(-lr);
            self.discriminator.backward(pd, &real, &[(sigmoid(lr) - 1.0) / b], &mut grad[dr.clone()]);

            let g_outs = self.generator.forward(pg, z);
            let fake = self.discriminator.forward(pd, g_outs.last().unwrap());
            let lf = fake.last().unwrap()[0];
            loss += softplus(lf);
            let dx = self.discriminator.backward(pd, &fake, &[sigmoid(lf) / b], &mut grad[dr.clone()]);
            self.generator.backward(pg, &g_outs, &dx, &mut grad[gr.clone()]);
        }
        loss / b
    }

    /// Encoder/generator loss: non-saturating adversarial term on `G(z)` plus
    /// `lambda_rec * ||x - G(E(x))||^2`, averaged over the batch. Returns
    /// `(total, reconstruction part)`.
    pub fn generator_loss(
        &self,
        p: &[f64],
        xs: &[&[f64]],
        zs: &[Vec<f64>],
        lambda_rec: f64,
        grad: &mut [f64],
    ) -> (f64, f64) {
        let (er, gr, dr) = (self.encoder_range(), self.generator_range(), self.discriminator_range());
        let (pe, pg, pd) = (&p[er.clone()], &p[gr.clone()], &p[dr.clone()]);
        let b = xs.len() as f64;
        let (mut adv, mut rec) = (0.0, 0.0);
        for (x, z) in xs.iter().zip(zs) {
            let g_outs = self.generator.forward(pg, z);
            let fake = self.discriminator.forward(pd, g_outs.last().unwrap());
            let lf = fake.last().unwrap()[0];
            adv += softplus(-lf);
            let dx = self.discriminator.backward(pd, &fake, &[(sigmoid(lf) - 1.0) / b], &mut grad[dr.clone()]);
            self.generator.backward(pg, &g_outs, &dx, &mut grad[gr.clone()]);

            let e_outs = self.encoder.forward(pe, x);
            let r_outs = self.generator.forward(pg, e_outs.last().unwrap());
            let xh = r_outs.last().unwrap();
            rec += sq_dist(x, xh);
            let d_xh: Vec<f64> = xh.iter().zip(x.iter()).map(|(a, t)| 2.0 * lambda_rec * (a - t) / b).collect();
            let dz = self.generator.backward(pg, &r_outs, &d_xh, &mut grad[gr.clone()]);
            self.encoder.backward(pe, &e_outs, &dz, &mut grad[er.clone()]);
        }
        ((adv + lambda_rec * rec) / b, rec / b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoder_size_for_benchmark_shape() {
        let m = GanEd::new(80, &[64, 32], 16, 0.9);
        assert_eq!(m.encoder.param_count(), 7_792);
        assert_eq!(m.generator.sizes, vec![16, 32, 64, 80]);
        assert_eq!(m.discriminator.sizes, vec![80, 64, 32, 1]);
    }
}
