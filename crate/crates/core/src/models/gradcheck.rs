//! Central-difference checks of the hand-written backward passes on small
//! random networks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ganed::GanEd;
use super::lstmed::LstmEd;
use crate::rng;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

fn compare<F: Fn(&[f64]) -> f64>(p: &[f64], grad: &[f64], loss: F) -> GradCheck {
    let mut worst: f64 = 0.0;
    let mut q = p.to_vec();
    for k in 0..p.len() {
        q[k] = p[k] + STEP;
        let up = loss(&q);
        q[k] = p[k] - STEP;
        let down = loss(&q);
        q[k] = p[k];
        worst = worst.max(relative_error(grad[k], (up - down) / (2.0 * STEP)));
    }
    GradCheck { max_relative_error: worst, checked: p.len() }
}

fn normal_vec<R: Rng>(r: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

/// Checks both GAN-ED losses on a random instance with `dim <= 6` and
/// widths `<= 8`; returns the worse of the two.
pub fn check_gan_ed(seed: u64) -> GradCheck {
    let mut r = rng::stream(&[seed, 0x6763_6761]);
    let dim = r.random_range(2..=6);
    let layers = [r.random_range(2..=8), r.random_range(2..=8)];
    let latent = r.random_range(1..=4);
    let net = GanEd::new(dim, &layers, latent, 0.9);
    let p = net.init(&mut r);
    let batch = 3;
    let xs_own: Vec<Vec<f64>> = (0..batch).map(|_| normal_vec(&mut r, dim)).collect();
    let xs: Vec<&[f64]> = xs_own.iter().map(|x| x.as_slice()).collect();
    let zs: Vec<Vec<f64>> = (0..batch).map(|_| normal_vec(&mut r, latent)).collect();
    let lambda = 0.7;

    let mut g = vec![0.0; p.len()];
    net.discriminator_loss(&p, &xs, &zs, &mut g);
    let d = compare(&p, &g, |q| net.discriminator_loss(q, &xs, &zs, &mut vec![0.0; q.len()]));

    let mut g = vec![0.0; p.len()];
    net.generator_loss(&p, &xs, &zs, lambda, &mut g);
    let ge = compare(&p, &g, |q| net.generator_loss(q, &xs, &zs, lambda, &mut vec![0.0; q.len()]).0);

    GradCheck { max_relative_error: d.max_relative_error.max(ge.max_relative_error), checked: d.checked + ge.checked }
}

/// Checks the LSTM-ED reconstruction loss with `dim <= 6`, widths `<= 8`
/// and `seq_len <= 5`.
pub fn check_lstm_ed(seed: u64) -> GradCheck {
    let mut r = rng::stream(&[seed, 0x6763_6c73]);
    let dim = r.random_range(1..=6);
    let widths = [r.random_range(2..=8), r.random_range(2..=8)];
    let steps = r.random_range(2..=5);
    let net = LstmEd::new(dim, &widths);
    let mut p = net.init(&mut r);
    // Perturb biases away from their structured init.
    p.iter_mut().for_each(|v| *v += 0.1 * r.random_range(-1.0..1.0));
    let window = normal_vec(&mut r, steps * dim);
    let mut g = vec![0.0; p.len()];
    net.loss_and_grad(&p, &window, 1.0, &mut g);
    compare(&p, &g, |q| net.raw_error(q, &window))
}
