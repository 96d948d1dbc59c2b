//! Three-layer regressor: two affine + batch-norm + sigmoid blocks and a
//! linear output layer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HIDDEN: usize = 300;
pub const OUTPUTS: usize = 4;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch-norm uses the statistics of the current batch.
    Train,
    /// Batch-norm uses its running statistics.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `outputs x inputs`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    /// Xavier-uniform weights, zero biases.
    fn xavier(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            w: DMatrix::from_fn(outputs, inputs, |_, _| rng.gen_range(-limit..=limit)),
            b: DVector::zeros(outputs),
        }
    }

    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: DMatrix::zeros(outputs, inputs),
            b: DVector::zeros(outputs),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.w * x;
        for mut col in z.column_iter_mut() {
            col += &self.b;
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: DVector<f64>,
    pub beta: DVector<f64>,
    pub running_mean: DVector<f64>,
    pub running_var: DVector<f64>,
}

/// Per-feature statistics of one training batch.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    pub inv_std: DVector<f64>,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        Self {
            gamma: DVector::from_element(n, 1.0),
            beta: DVector::zeros(n),
            running_mean: DVector::zeros(n),
            running_var: DVector::from_element(n, 1.0),
        }
    }

    fn scale_shift(&self, mut xhat: DMatrix<f64>) -> DMatrix<f64> {
        for mut col in xhat.column_iter_mut() {
            col.component_mul_assign(&self.gamma);
            col += &self.beta;
        }
        xhat
    }

    fn train(&self, z: &DMatrix<f64>) -> (DMatrix<f64>, BnCache) {
        let b = z.ncols() as f64;
        let mean = z.column_sum() / b;
        let mut centered = z.clone();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        let var = centered.map(|v| v * v).column_sum() / b;
        let inv_std = var.map(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut xhat = centered;
        for mut col in xhat.column_iter_mut() {
            col.component_mul_assign(&inv_std);
        }
        let out = self.scale_shift(xhat.clone());
        (
            out,
            BnCache {
                xhat,
                mean,
                var,
                inv_std,
            },
        )
    }

    fn eval(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let inv_std = self.running_var.map(|v| 1.0 / (v + BN_EPS).sqrt());
        let mut xhat = z.clone();
        for mut col in xhat.column_iter_mut() {
            col -= &self.running_mean;
            col.component_mul_assign(&inv_std);
        }
        self.scale_shift(xhat)
    }

    /// Exponential moving update; the variance uses the unbiased estimate
    /// when the batch has more than one sample.
    fn update_running(&mut self, cache: &BnCache, batch: usize) {
        let unbias = if batch > 1 {
            batch as f64 / (batch - 1) as f64
        } else {
            1.0
        };
        self.running_mean = &self.running_mean * (1.0 - BN_MOMENTUM) + &cache.mean * BN_MOMENTUM;
        self.running_var =
            &self.running_var * (1.0 - BN_MOMENTUM) + &cache.var * (BN_MOMENTUM * unbias);
    }

    /// Gradient w.r.t. the normalized input, given the gradient of the output.
    fn backward(
        &self,
        dout: &DMatrix<f64>,
        cache: &BnCache,
    ) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let b = dout.ncols() as f64;
        let dbeta = dout.column_sum();
        let dgamma = dout.component_mul(&cache.xhat).column_sum();
        let mut dxhat = dout.clone();
        for mut col in dxhat.column_iter_mut() {
            col.component_mul_assign(&self.gamma);
        }
        let sum_dxhat = dxhat.column_sum();
        let sum_dxhat_xhat = dxhat.component_mul(&cache.xhat).column_sum();
        let mut dz = dxhat * b;
        for (j, mut col) in dz.column_iter_mut().enumerate() {
            for i in 0..col.len() {
                col[i] = (col[i] - sum_dxhat[i] - cache.xhat[(i, j)] * sum_dxhat_xhat[i])
                    * cache.inv_std[i]
                    / b;
            }
        }
        (dz, dgamma, dbeta)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub dense1: Dense,
    pub bn1: BatchNorm,
    pub dense2: Dense,
    pub bn2: BatchNorm,
    pub dense3: Dense,
}

/// Intermediate values of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: DMatrix<f64>,
    pub bn1: BnCache,
    pub a1: DMatrix<f64>,
    pub bn2: BnCache,
    pub a2: DMatrix<f64>,
    pub out: DMatrix<f64>,
}

/// Names of the trainable tensors, in checkpoint and gradient order.
pub const TENSOR_NAMES: [&str; 10] = [
    "dense1.w", "dense1.b", "bn1.gamma", "bn1.beta", "dense2.w", "dense2.b", "bn2.gamma",
    "bn2.beta", "dense3.w", "dense3.b",
];

/// Names of the batch-norm running statistics, in checkpoint order.
pub const STAT_NAMES: [&str; 4] = [
    "bn1.running_mean",
    "bn1.running_var",
    "bn2.running_mean",
    "bn2.running_var",
];

impl MlpModel {
    /// Seeded Xavier-uniform model with `inputs -> hidden -> hidden -> 4` shapes.
    pub fn new(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            dense1: Dense::xavier(inputs, hidden, &mut rng),
            bn1: BatchNorm::new(hidden),
            dense2: Dense::xavier(hidden, hidden, &mut rng),
            bn2: BatchNorm::new(hidden),
            dense3: Dense::xavier(hidden, OUTPUTS, &mut rng),
        }
    }

    /// All weights and biases zero; batch-norm at its identity initialization.
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            dense1: Dense::zeros(inputs, hidden),
            bn1: BatchNorm::new(hidden),
            dense2: Dense::zeros(hidden, hidden),
            bn2: BatchNorm::new(hidden),
            dense3: Dense::zeros(hidden, OUTPUTS),
        }
    }

    pub fn inputs(&self) -> usize {
        self.dense1.w.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.dense1.w.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn tensors(&self) -> [&[f64]; 10] {
        [
            self.dense1.w.as_slice(),
            self.dense1.b.as_slice(),
            self.bn1.gamma.as_slice(),
            self.bn1.beta.as_slice(),
            self.dense2.w.as_slice(),
            self.dense2.b.as_slice(),
            self.bn2.gamma.as_slice(),
            self.bn2.beta.as_slice(),
            self.dense3.w.as_slice(),
            self.dense3.b.as_slice(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
        [
            self.dense1.w.as_mut_slice(),
            self.dense1.b.as_mut_slice(),
            self.bn1.gamma.as_mut_slice(),
            self.bn1.beta.as_mut_slice(),
            self.dense2.w.as_mut_slice(),
            self.dense2.b.as_mut_slice(),
            self.bn2.gamma.as_mut_slice(),
            self.bn2.beta.as_mut_slice(),
            self.dense3.w.as_mut_slice(),
            self.dense3.b.as_mut_slice(),
        ]
    }

    pub fn stats(&self) -> [&[f64]; 4] {
        [
            self.bn1.running_mean.as_slice(),
            self.bn1.running_var.as_slice(),
            self.bn2.running_mean.as_slice(),
            self.bn2.running_var.as_slice(),
        ]
    }

    pub fn stats_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.bn1.running_mean.as_mut_slice(),
            self.bn1.running_var.as_mut_slice(),
            self.bn2.running_mean.as_mut_slice(),
            self.bn2.running_var.as_mut_slice(),
        ]
    }

    /// Outputs for a batch stored column-wise (`inputs x batch`); rows of the
    /// result are (tp, te, ta, ee).
    pub fn forward(&self, x: &DMatrix<f64>, mode: Mode) -> DMatrix<f64> {
        match mode {
            Mode::Train => self.forward_train(x).out,
            Mode::Eval => {
                let a1 = self.bn1.eval(&self.dense1.apply(x)).map(sigmoid);
                let a2 = self.bn2.eval(&self.dense2.apply(&a1)).map(sigmoid);
                self.dense3.apply(&a2)
            }
        }
    }

    pub fn forward_train(&self, x: &DMatrix<f64>) -> ForwardCache {
        let (n1, bn1) = self.bn1.train(&self.dense1.apply(x));
        let a1 = n1.map(sigmoid);
        let (n2, bn2) = self.bn2.train(&self.dense2.apply(&a1));
        let a2 = n2.map(sigmoid);
        let out = self.dense3.apply(&a2);
        ForwardCache {
            x: x.clone(),
            bn1,
            a1,
            bn2,
            a2,
            out,
        }
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let b = cache.x.ncols();
        self.bn1.update_running(&cache.bn1, b);
        self.bn2.update_running(&cache.bn2, b);
    }

    /// Gradients of [`loss`] for the batch in `cache`, in [`TENSOR_NAMES`] order.
    pub fn backward(&self, cache: &ForwardCache, labels: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let b = labels.ncols() as f64;
        let dout = (&cache.out - labels) * (2.0 / b);

        let dw3 = &dout * cache.a2.transpose();
        let db3 = dout.column_sum();
        let da2 = self.dense3.w.transpose() * &dout;
        let dn2 = da2.component_mul(&cache.a2.map(|a| a * (1.0 - a)));
        let (dz2, dgamma2, dbeta2) = self.bn2.backward(&dn2, &cache.bn2);

        let dw2 = &dz2 * cache.a1.transpose();
        let db2 = dz2.column_sum();
        let da1 = self.dense2.w.transpose() * &dz2;
        let dn1 = da1.component_mul(&cache.a1.map(|a| a * (1.0 - a)));
        let (dz1, dgamma1, dbeta1) = self.bn1.backward(&dn1, &cache.bn1);

        let dw1 = &dz1 * cache.x.transpose();
        let db1 = dz1.column_sum();
        [
            dw1.as_slice(),
            db1.as_slice(),
            dgamma1.as_slice(),
            dbeta1.as_slice(),
            dw2.as_slice(),
            db2.as_slice(),
            dgamma2.as_slice(),
            dbeta2.as_slice(),
            dw3.as_slice(),
            db3.as_slice(),
        ]
        .iter()
        .map(|s| s.to_vec())
        .collect()
    }
}

/// Squared error summed over the outputs, averaged over the batch.
pub fn loss(pred: &DMatrix<f64>, labels: &DMatrix<f64>) -> f64 {
    assert_eq!(pred.shape(), labels.shape(), "prediction/label shape mismatch");
    (pred - labels).norm_squared() / pred.ncols() as f64
}
