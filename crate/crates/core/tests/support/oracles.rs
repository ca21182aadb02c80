//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqa_core::nn::{Conv2d, Dense, Dropout, GlobalMaxPool, Layer, MaxPool2d, Mode, Relu, Tensor};

/// Finite-difference step used by every gradient check.
pub const FD_STEP: f64 = 1e-5;
/// Relative errors use this floor in the denominator so gradients that
/// are numerically zero compare absolutely.
pub const REL_FLOOR: f64 = 1e-7;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn project(layer: &dyn Layer<f64>, x: &Tensor<f64>, r: &[f64], seed: u64) -> f64 {
    // Dropout masks come from a fresh RNG with the same seed every call.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mode = Mode::Training(&mut rng);
    let (y, _) = layer.forward(x, &mut mode).unwrap();
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Largest relative error between the analytic input and parameter
/// gradients of `f = Σ r·layer(x)` and central differences.
pub fn gradcheck_layer(layer: &mut dyn Layer<f64>, x: &Tensor<f64>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let out_shape = layer.output_shape(x.shape()).unwrap();
    let r: Vec<f64> = (0..out_shape.iter().product::<usize>())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let mut drop_rng = ChaCha8Rng::seed_from_u64(seed);
    let (_, aux) = layer.forward(x, &mut Mode::Training(&mut drop_rng)).unwrap();
    let g = Tensor::new(out_shape, r.clone()).unwrap();
    let mut pgrads: Vec<Tensor<f64>> = layer.params().iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
    let gx = layer.backward(&g, x, &aux, &mut pgrads, true).unwrap().unwrap();

    let mut worst = 0.0f64;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + FD_STEP;
        let fp = project(layer, &xp, &r, seed);
        xp.data_mut()[i] = orig - FD_STEP;
        let fm = project(layer, &xp, &r, seed);
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err(gx.data()[i], (fp - fm) / (2.0 * FD_STEP)));
    }
    for (pi, pg) in pgrads.iter().enumerate() {
        for i in 0..pg.len() {
            let orig = layer.params()[pi].data()[i];
            layer.params_mut()[pi].data_mut()[i] = orig + FD_STEP;
            let fp = project(layer, x, &r, seed);
            layer.params_mut()[pi].data_mut()[i] = orig - FD_STEP;
            let fm = project(layer, x, &r, seed);
            layer.params_mut()[pi].data_mut()[i] = orig;
            worst = worst.max(rel_err(pg.data()[i], (fp - fm) / (2.0 * FD_STEP)));
        }
    }
    worst
}

pub fn random_tensor(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Values in (-1, 1) from a shuffled, jittered grid: any two differ by at
/// least `0.4 / n` and none is near 0, so central differences never straddle
/// a ReLU or max-pool kink.
pub fn separated_tensor(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(rng);
    let step = 2.0 / n as f64;
    let data = slots
        .into_iter()
        .map(|k| -1.0 + (k as f64 + rng.gen_range(0.1..0.9)) * step)
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// The `i`-th random gradient-check case, cycling through every layer kind.
pub fn gradcheck_case(i: usize, seed: u64) -> (Box<dyn Layer<f64>>, Tensor<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
    let h = rng.gen_range(2..7);
    let w = rng.gen_range(2..7);
    let c = rng.gen_range(1..4);
    match i % 6 {
        0 => {
            let k = [1, 3, 5][rng.gen_range(0..3)];
            let cout = rng.gen_range(1..4);
            let conv = Conv2d::with_params(
                random_tensor(&mut rng, vec![k, k, c, cout]),
                random_tensor(&mut rng, vec![cout]),
            )
            .unwrap();
            (Box::new(conv), random_tensor(&mut rng, vec![h, w, c]))
        }
        1 => {
            let din = rng.gen_range(1..8);
            let dout = rng.gen_range(1..6);
            let d = Dense::with_params(
                random_tensor(&mut rng, vec![dout, din]),
                random_tensor(&mut rng, vec![dout]),
            )
            .unwrap();
            (Box::new(d), random_tensor(&mut rng, vec![din]))
        }
        2 => (Box::new(Relu), separated_tensor(&mut rng, vec![h, w, c])),
        3 => (Box::new(MaxPool2d), separated_tensor(&mut rng, vec![h, w, c])),
        4 => (Box::new(GlobalMaxPool), separated_tensor(&mut rng, vec![h, w, c])),
        _ => (
            Box::new(Dropout::new(rng.gen_range(0.0..0.8)).unwrap()),
            random_tensor(&mut rng, vec![h, w, c]),
        ),
    }
}

/// Direct same-padded stride-1 convolution in HWC layout.
pub fn naive_conv(x: &Tensor<f64>, weight: &Tensor<f64>, bias: &Tensor<f64>) -> Vec<f64> {
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, cout) = (weight.shape()[0], weight.shape()[3]);
    let pad = (k / 2) as isize;
    let xv = x.data();
    let wv = weight.data();
    let mut out = vec![0.0; h * w * cout];
    for i in 0..h {
        for j in 0..w {
            for o in 0..cout {
                let mut acc = bias.data()[o];
                for di in 0..k {
                    for dj in 0..k {
                        let (si, sj) = (i as isize + di as isize - pad, j as isize + dj as isize - pad);
                        if si < 0 || sj < 0 || si >= h as isize || sj >= w as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            acc += xv[(si as usize * w + sj as usize) * cin + ci]
                                * wv[((di * k + dj) * cin + ci) * cout + o];
                        }
                    }
                }
                out[(i * w + j) * cout + o] = acc;
            }
        }
    }
    out
}

/// Textbook sample Pearson correlation.
pub fn naive_pcc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx: f64 = x.iter().sum::<f64>() / n;
    let my: f64 = y.iter().sum::<f64>() / n;
    let cov: f64 = (0..x.len()).map(|i| (x[i] - mx) * (y[i] - my)).sum();
    let vx: f64 = (0..x.len()).map(|i| (x[i] - mx).powi(2)).sum();
    let vy: f64 = (0..x.len()).map(|i| (y[i] - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Mean ranks by counting, O(n²).
pub fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn naive_srcc(x: &[f64], y: &[f64]) -> f64 {
    naive_pcc(&naive_ranks(x), &naive_ranks(y))
}

/// Least squares for `z ≈ a·x + b·y + c` via the normal equations and
/// Cramer's rule.
pub fn normal_equations_fit(rows: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for &(x, y, z) in rows {
        let v = [x, y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += v[i] * v[j];
            }
            atb[i] += v[i] * z;
        }
    }
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(ata);
    let solve = |col: usize| {
        let mut m = ata;
        for i in 0..3 {
            m[i][col] = atb[i];
        }
        det3(m) / d
    };
    (solve(0), solve(1), solve(2))
}
