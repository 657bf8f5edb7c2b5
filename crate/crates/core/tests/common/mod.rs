//! Reference implementations shared by integration tests. Nothing here calls
//! the library's layer or training code.

#![allow(dead_code)]

use fedleak::data::Dataset;
use fedleak::nn::{ModelParams, ParamRole};
use fedleak::rng;
use rand::seq::SliceRandom;

/// Hand-written one-hidden-layer ReLU MLP with softmax cross-entropy, kept
/// apart from the library's layer code so it can serve as an oracle.
pub struct Mlp {
    w1: Vec<f64>, // [h, d]
    b1: Vec<f64>,
    w2: Vec<f64>, // [l, h]
    b2: Vec<f64>,
    d: usize,
    h: usize,
    l: usize,
}

impl Mlp {
    pub fn from_params(p: &ModelParams, d: usize, h: usize, l: usize) -> Self {
        let get = |layer, role| p.get(layer, role).unwrap().data().to_vec();
        Mlp {
            w1: get(0, ParamRole::Weight),
            b1: get(0, ParamRole::Bias),
            w2: get(2, ParamRole::Weight),
            b2: get(2, ParamRole::Bias),
            d,
            h,
            l,
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn step(&mut self, xs: &[&[f64]], ys: &[usize], eta: f64) {
        let (d, h, l) = (self.d, self.h, self.l);
        let n = xs.len() as f64;
        let mut gw1 = vec![0.0; h * d];
        let mut gb1 = vec![0.0; h];
        let mut gw2 = vec![0.0; l * h];
        let mut gb2 = vec![0.0; l];
        for (x, &y) in xs.iter().zip(ys) {
            let a: Vec<f64> = (0..h)
                .map(|j| (self.b1[j] + (0..d).map(|i| self.w1[j * d + i] * x[i]).sum::<f64>()).max(0.0))
                .collect();
            let z: Vec<f64> = (0..l)
                .map(|k| self.b2[k] + (0..h).map(|j| self.w2[k * h + j] * a[j]).sum::<f64>())
                .collect();
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            let dz: Vec<f64> = (0..l).map(|k| (e[k] / s - f64::from(k == y)) / n).collect();
            for k in 0..l {
                gb2[k] += dz[k];
                for j in 0..h {
                    gw2[k * h + j] += dz[k] * a[j];
                }
            }
            for j in 0..h {
                if a[j] <= 0.0 {
                    continue;
                }
                let da: f64 = (0..l).map(|k| dz[k] * self.w2[k * h + j]).sum();
                gb1[j] += da;
                for i in 0..d {
                    gw1[j * d + i] += da * x[i];
                }
            }
        }
        for (w, g) in [
            (&mut self.w1, gw1),
            (&mut self.b1, gb1),
            (&mut self.w2, gw2),
            (&mut self.b2, gb2),
        ] {
            for (v, gv) in w.iter_mut().zip(g) {
                *v -= eta * gv;
            }
        }
    }
}

/// Plain minibatch SGD on a `d -> h -> l` ReLU MLP, replaying the client
/// shuffle stream. Returns the flattened final parameters.
#[allow(clippy::too_many_arguments)]
pub fn sequential_sgd(
    init: &ModelParams,
    (d, h, l): (usize, usize, usize),
    data: &Dataset,
    indices: &[usize],
    epochs: usize,
    batch_size: usize,
    eta: f64,
    shuffle_seed: u64,
) -> Vec<f64> {
    let mut net = Mlp::from_params(init, d, h, l);
    let mut order = indices.to_vec();
    let mut shuffle = rng::rng_from(shuffle_seed, &[rng::tag::CLIENT]);
    for _ in 0..epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| data.input(i)).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| data.labels()[i]).collect();
            net.step(&xs, &ys, eta);
        }
    }
    net.flat()
}
