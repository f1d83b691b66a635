//! Internal MLP regressor with hand-rolled backpropagation and an
//! adaptive-moment optimizer. Two tanh hidden layers, linear output.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optimizer hyperparameters (adaptive moments with bias correction).
#[derive(Debug, Clone, Copy)]
pub(crate) struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone)]
pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub(crate) fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One update with `step` counted from 1 for bias correction.
    pub(crate) fn update(
        &mut self,
        hp: &AdamParams,
        step: u64,
        params: &mut [f64],
        grads: &[f64],
    ) {
        debug_assert_eq!(params.len(), grads.len());
        let bc1 = 1.0 - hp.beta1.powi(step as i32);
        let bc2 = 1.0 - hp.beta2.powi(step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
            *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
}

struct Gradients {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Mlp {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
    opt_w1: AdamState,
    opt_b1: AdamState,
    opt_w2: AdamState,
    opt_b2: AdamState,
    opt_w3: AdamState,
    opt_b3: AdamState,
}

fn glorot_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| bound * (2.0 * rng.random::<f64>() - 1.0))
}

impl Mlp {
    /// Seeded scaled-uniform (Glorot) weight init, zero biases. The draw
    /// order (w1 row-major, then w2, then w3) is part of the scheme.
    pub(crate) fn init(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = glorot_uniform(&mut rng, input_dim, hidden);
        let w2 = glorot_uniform(&mut rng, hidden, hidden);
        let w3 = glorot_uniform(&mut rng, hidden, output_dim);
        Self {
            opt_w1: AdamState::new(w1.len()),
            opt_b1: AdamState::new(hidden),
            opt_w2: AdamState::new(w2.len()),
            opt_b2: AdamState::new(hidden),
            opt_w3: AdamState::new(w3.len()),
            opt_b3: AdamState::new(output_dim),
            b1: Array1::zeros(hidden),
            b2: Array1::zeros(hidden),
            b3: Array1::zeros(output_dim),
            w1,
            w2,
            w3,
        }
    }

    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let h1 = (x.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        let h2 = (h1.dot(&self.w2) + &self.b2).mapv(f64::tanh);
        let y = h2.dot(&self.w3) + &self.b3;
        (h1, h2, y)
    }

    pub(crate) fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).2
    }

    /// Weighted batch-mean squared error and its parameter gradients.
    /// `row_weights` scales each sample's squared error.
    fn loss_and_gradients(
        &self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        row_weights: &[f64],
    ) -> (f64, Gradients) {
        let batch = x.nrows() as f64;
        let (h1, h2, yhat) = self.forward(x);
        let mut g_out = yhat - y;

        let mut loss = 0.0;
        for (mut row, &w) in g_out.rows_mut().into_iter().zip(row_weights) {
            let sq: f64 = row.iter().map(|&d| d * d).sum();
            loss += w * sq;
            // Fold the row weight and the d/d(yhat) factor into the output
            // gradient so the backward pass below stays unweighted.
            row.mapv_inplace(|d| 2.0 * w * d / batch);
        }
        loss /= batch;

        let w3_grad = h2.t().dot(&g_out);
        let b3_grad = g_out.sum_axis(Axis(0));
        let g_h2 = g_out.dot(&self.w3.t()) * h2.mapv(|h| 1.0 - h * h);
        let w2_grad = h1.t().dot(&g_h2);
        let b2_grad = g_h2.sum_axis(Axis(0));
        let g_h1 = g_h2.dot(&self.w2.t()) * h1.mapv(|h| 1.0 - h * h);
        let w1_grad = x.t().dot(&g_h1);
        let b1_grad = g_h1.sum_axis(Axis(0));

        (
            loss,
            Gradients {
                w1: w1_grad,
                b1: b1_grad,
                w2: w2_grad,
                b2: b2_grad,
                w3: w3_grad,
                b3: b3_grad,
            },
        )
    }

    /// One optimizer step; returns the pre-update minibatch loss.
    pub(crate) fn train_step(
        &mut self,
        x: &Array2<f64>,
        y: &Array2<f64>,
        row_weights: &[f64],
        hp: &AdamParams,
        step: u64,
    ) -> f64 {
        let (loss, grads) = self.loss_and_gradients(x, y, row_weights);
        let slice = |a: &Array2<f64>| a.as_slice().expect("standard layout").to_vec();
        self.opt_w1.update(
            hp,
            step,
            self.w1.as_slice_mut().expect("standard layout"),
            &slice(&grads.w1),
        );
        self.opt_b1.update(
            hp,
            step,
            self.b1.as_slice_mut().expect("standard layout"),
            grads.b1.as_slice().expect("standard layout"),
        );
        self.opt_w2.update(
            hp,
            step,
            self.w2.as_slice_mut().expect("standard layout"),
            &slice(&grads.w2),
        );
        self.opt_b2.update(
            hp,
            step,
            self.b2.as_slice_mut().expect("standard layout"),
            grads.b2.as_slice().expect("standard layout"),
        );
        self.opt_w3.update(
            hp,
            step,
            self.w3.as_slice_mut().expect("standard layout"),
            &slice(&grads.w3),
        );
        self.opt_b3.update(
            hp,
            step,
            self.b3.as_slice_mut().expect("standard layout"),
            grads.b3.as_slice().expect("standard layout"),
        );
        loss
    }

    /// Flat copy of all parameters, used for determinism checks.
    #[cfg(test)]
    pub(crate) fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for m in [&self.w1, &self.w2, &self.w3] {
            out.extend(m.iter());
        }
        for b in [&self.b1, &self.b2, &self.b3] {
            out.extend(b.iter());
        }
        out
    }
}
