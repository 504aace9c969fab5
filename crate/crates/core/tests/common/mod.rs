#![allow(dead_code)]

use ozonecast::mlp::{Network, OutputKind};
use ozonecast::rng;
use ozonecast::FeatureTable;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn gaussian_rows(seed: u64, n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, 100);
    (0..n)
        .map(|_| (0..p).map(|_| StandardNormal.sample(&mut r)).collect())
        .collect()
}

pub fn noise(seed: u64, n: usize, sd: f64) -> Vec<f64> {
    let mut r = rng::stream(seed, 101);
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| d.sample(&mut r)).collect()
}

/// One tanh unit reading the first `relevant` of `relevant + irrelevant`
/// inputs, weights of magnitude 0.3..0.7 with random signs.
pub fn sparse_teacher(seed: u64, relevant: usize, irrelevant: usize) -> Network {
    let mut r = rng::stream(seed, 102);
    let p = relevant + irrelevant;
    let mut net = Network::zeros(p, 1, OutputKind::Identity);
    for i in 0..relevant {
        let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
        net.set_weight(net.input_weight_index(0, i), sign * r.random_range(0.3..0.7));
    }
    net.set_weight(net.hidden_bias_index(0), r.random_range(-0.3..0.3));
    net.set_weight(net.output_weight_index(0), 2.0);
    net.set_weight(net.output_bias_index(), 0.5);
    net
}

pub fn sample(teacher: &Network, seed: u64, n: usize, sd: f64) -> FeatureTable {
    let rows = gaussian_rows(seed, n, teacher.inputs());
    let e = noise(seed, n, sd);
    let y = rows
        .iter()
        .zip(&e)
        .map(|(x, e)| teacher.predict(x).unwrap() + e)
        .collect();
    FeatureTable::from_xy(rows, y).unwrap()
}

/// A single strongly bent unit on three inputs.
pub fn bent_teacher(seed: u64) -> Network {
    let mut r = rng::stream(seed, 103);
    let mut net = Network::zeros(3, 1, OutputKind::Identity);
    for i in 0..3 {
        let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
        net.set_weight(net.input_weight_index(0, i), sign * r.random_range(1.0..2.0));
    }
    net.set_weight(net.hidden_bias_index(0), r.random_range(-0.5..0.5));
    net.set_weight(net.output_weight_index(0), 1.5);
    net
}
