//! Central finite differences of the training-mode batch loss for every
//! parameter.
//!
//! Perturbing one weight only changes one pre-activation row, so each
//! perturbed loss is re-evaluated from that row onwards instead of from the
//! input. That brings a check over all ~400k parameters down to seconds.
//! Perturbations are carried as output changes, so the loss difference is
//! formed without subtracting two nearly equal losses.

use nalgebra::{DMatrix, DVector};

use super::model::{sigmoid, BatchNorm, MlpModel, BN_EPS};

/// Training-mode forward values that perturbations start from.
struct Base {
    z1: DMatrix<f64>,
    a1: DMatrix<f64>,
    z2: DMatrix<f64>,
    a2: DMatrix<f64>,
}

fn affine(w: &DMatrix<f64>, b: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = w * x;
    for mut col in z.column_iter_mut() {
        col += b;
    }
    z
}

/// Batch-norm + sigmoid of one feature row.
fn activate_row(z: &[f64], gamma: f64, beta: f64) -> Vec<f64> {
    let b = z.len() as f64;
    let mean = z.iter().sum::<f64>() / b;
    let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / b;
    let inv = 1.0 / (var + BN_EPS).sqrt();
    z.iter()
        .map(|v| sigmoid(gamma * (v - mean) * inv + beta))
        .collect()
}

fn activate(z: &DMatrix<f64>, bn: &BatchNorm) -> DMatrix<f64> {
    let b = z.ncols() as f64;
    let mut a = z.clone();
    for i in 0..z.nrows() {
        let r = z.row(i);
        let mean = r.sum() / b;
        let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / b;
        let inv = 1.0 / (var + BN_EPS).sqrt();
        for j in 0..z.ncols() {
            a[(i, j)] = sigmoid(bn.gamma[i] * (z[(i, j)] - mean) * inv + bn.beta[i]);
        }
    }
    a
}

fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

struct Checker<'a> {
    m: &'a MlpModel,
    base: Base,
    /// `base.out - labels`.
    resid: DMatrix<f64>,
    /// Rows of `base.z2`, contiguous.
    z2_rows: Vec<Vec<f64>>,
}

/// Change of the network output caused by one perturbation, laid out
/// `[sample][output]`.
type OutDelta = Vec<f64>;

impl Checker<'_> {
    /// Output change after replacing row `i` of the second hidden activation.
    fn delta_a2_row(&self, i: usize, a2_row: &[f64]) -> OutDelta {
        let w3 = &self.m.dense3.w;
        let outputs = w3.nrows();
        let mut out = vec![0.0; outputs * a2_row.len()];
        for (j, v) in a2_row.iter().enumerate() {
            let d = v - self.base.a2[(i, j)];
            for k in 0..outputs {
                out[j * outputs + k] = w3[(k, i)] * d;
            }
        }
        out
    }

    /// Output change after replacing row `i` of the first hidden activation.
    fn delta_a1_row(&self, i: usize, a1_row: &[f64]) -> OutDelta {
        let batch = a1_row.len();
        let bf = batch as f64;
        let delta: Vec<f64> = a1_row
            .iter()
            .enumerate()
            .map(|(j, v)| v - self.base.a1[(i, j)])
            .collect();
        let (w2, w3, bn) = (&self.m.dense2.w, &self.m.dense3.w, &self.m.bn2);
        let outputs = w3.nrows();
        let mut out = vec![0.0; outputs * batch];
        let mut z = vec![0.0; batch];
        for k in 0..w2.nrows() {
            let wk = w2[(k, i)];
            let zk = &self.z2_rows[k];
            for j in 0..batch {
                z[j] = zk[j] + wk * delta[j];
            }
            let mean = z.iter().sum::<f64>() / bf;
            let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / bf;
            let inv = 1.0 / (var + BN_EPS).sqrt();
            for j in 0..batch {
                let a = sigmoid(bn.gamma[k] * (z[j] - mean) * inv + bn.beta[k]);
                let da = a - self.base.a2[(k, j)];
                for o in 0..outputs {
                    out[j * outputs + o] += w3[(o, k)] * da;
                }
            }
        }
        out
    }

    fn layer1(&self, i: usize, z_row: &[f64], gamma: f64, beta: f64) -> OutDelta {
        self.delta_a1_row(i, &activate_row(z_row, gamma, beta))
    }

    fn layer2(&self, i: usize, z_row: &[f64], gamma: f64, beta: f64) -> OutDelta {
        self.delta_a2_row(i, &activate_row(z_row, gamma, beta))
    }

    /// `(L(+h) - L(-h)) / 2h` from the two output changes. With residual `r`,
    /// `(r + d+)^2 - (r + d-)^2 = (d+ - d-)(2r + d+ + d-)`, which avoids
    /// subtracting two nearly equal losses.
    fn central(&self, h: f64, f: impl Fn(f64) -> OutDelta) -> f64 {
        let (up, down) = (f(h), f(-h));
        let outputs = self.resid.nrows();
        let batch = self.resid.ncols();
        let mut total = 0.0;
        for j in 0..batch {
            for o in 0..outputs {
                let (u, d) = (up[j * outputs + o], down[j * outputs + o]);
                total += (u - d) * (2.0 * self.resid[(o, j)] + u + d);
            }
        }
        total / batch as f64 / (2.0 * h)
    }
}

/// Finite-difference gradient of the training-mode loss of `model` on
/// `(x, labels)`, tensor by tensor in [`super::TENSOR_NAMES`] order.
pub fn finite_difference_gradients(
    model: &MlpModel,
    x: &DMatrix<f64>,
    labels: &DMatrix<f64>,
    step: f64,
) -> Vec<Vec<f64>> {
    let m = model;
    let z1 = affine(&m.dense1.w, &m.dense1.b, x);
    let a1 = activate(&z1, &m.bn1);
    let z2 = affine(&m.dense2.w, &m.dense2.b, &a1);
    let a2 = activate(&z2, &m.bn2);
    let out = affine(&m.dense3.w, &m.dense3.b, &a2);
    let z2_rows = (0..z2.nrows()).map(|i| row(&z2, i)).collect();
    let resid = &out - labels;
    let c = Checker {
        m,
        resid,
        z2_rows,
        base: Base {
            z1,
            a1,
            z2,
            a2,
        },
    };
    let (hidden, inputs) = m.dense1.w.shape();
    let batch = x.ncols();

    let shifted = |base: &[f64], dir: &[f64], h: f64| -> Vec<f64> {
        base.iter().zip(dir).map(|(b, d)| b + h * d).collect()
    };
    let ones = vec![1.0; batch];

    // Weight matrices are column-major, matching `as_slice` order.
    let mut dw1 = vec![0.0; hidden * inputs];
    for j in 0..inputs {
        let xj: Vec<f64> = x.row(j).iter().copied().collect();
        for i in 0..hidden {
            let zr = row(&c.base.z1, i);
            let (g, b) = (m.bn1.gamma[i], m.bn1.beta[i]);
            dw1[j * hidden + i] = c.central(step, |h| c.layer1(i, &shifted(&zr, &xj, h), g, b));
        }
    }
    let mut db1 = vec![0.0; hidden];
    let mut dg1 = vec![0.0; hidden];
    let mut dbeta1 = vec![0.0; hidden];
    for i in 0..hidden {
        let zr = row(&c.base.z1, i);
        let (g, b) = (m.bn1.gamma[i], m.bn1.beta[i]);
        db1[i] = c.central(step, |h| c.layer1(i, &shifted(&zr, &ones, h), g, b));
        dg1[i] = c.central(step, |h| c.layer1(i, &zr, g + h, b));
        dbeta1[i] = c.central(step, |h| c.layer1(i, &zr, g, b + h));
    }

    let mut dw2 = vec![0.0; hidden * hidden];
    for j in 0..hidden {
        let aj = row(&c.base.a1, j);
        for i in 0..hidden {
            let zr = row(&c.base.z2, i);
            let (g, b) = (m.bn2.gamma[i], m.bn2.beta[i]);
            dw2[j * hidden + i] = c.central(step, |h| c.layer2(i, &shifted(&zr, &aj, h), g, b));
        }
    }
    let mut db2 = vec![0.0; hidden];
    let mut dg2 = vec![0.0; hidden];
    let mut dbeta2 = vec![0.0; hidden];
    for i in 0..hidden {
        let zr = row(&c.base.z2, i);
        let (g, b) = (m.bn2.gamma[i], m.bn2.beta[i]);
        db2[i] = c.central(step, |h| c.layer2(i, &shifted(&zr, &ones, h), g, b));
        dg2[i] = c.central(step, |h| c.layer2(i, &zr, g + h, b));
        dbeta2[i] = c.central(step, |h| c.layer2(i, &zr, g, b + h));
    }

    let outputs = m.dense3.w.nrows();
    let out_shift = |k: usize, dir: &[f64], h: f64| -> OutDelta {
        let mut o = vec![0.0; outputs * batch];
        for (j, d) in dir.iter().enumerate() {
            o[j * outputs + k] = h * d;
        }
        o
    };
    let mut dw3 = vec![0.0; outputs * hidden];
    for j in 0..hidden {
        let aj = row(&c.base.a2, j);
        for k in 0..outputs {
            dw3[j * outputs + k] = c.central(step, |h| out_shift(k, &aj, h));
        }
    }
    let db3 = (0..outputs)
        .map(|k| c.central(step, |h| out_shift(k, &ones, h)))
        .collect();

    vec![dw1, db1, dg1, dbeta1, dw2, db2, dg2, dbeta2, dw3, db3]
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps gradients that are
/// zero by construction (biases ahead of batch-norm) from dividing noise by
/// noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{loss, Mode};
    use rand::{Rng, SeedableRng};

    /// The row-local shortcut must agree with perturbing the model itself
    /// and running the full forward pass.
    #[test]
    fn matches_full_recompute() {
        let mut m = MlpModel::new(7, 5, 11);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for t in m.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let x = DMatrix::from_fn(7, 6, |_, _| rng.gen_range(-1.0..1.0));
        let y = DMatrix::from_fn(4, 6, |_, _| rng.gen_range(0.0..1.0));
        let fast = finite_difference_gradients(&m, &x, &y, 1e-5);
        for (t, grads) in fast.iter().enumerate() {
            for (k, g) in grads.iter().enumerate() {
                let eval = |h: f64| {
                    let mut p = m.clone();
                    p.tensors_mut()[t][k] += h;
                    loss(&p.forward(&x, Mode::Train), &y)
                };
                let slow = (eval(1e-5) - eval(-1e-5)) / 2e-5;
                assert!((g - slow).abs() < 1e-9, "tensor {t} entry {k}: {g} vs {slow}");
            }
        }
    }
}
