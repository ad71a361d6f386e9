use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::defaults::MlpDefaults;
use super::{Activation, LearningRate};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// L2 penalty on weights.
    pub alpha: f64,
    pub learning_rate: LearningRate,
}

/// Fully connected regression network trained with Adam on squared loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    activation: Activation,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    pub epochs: usize,
    pub final_loss: f64,
    pub converged: bool,
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    mb: Vec<Array1<f64>>,
    vb: Vec<Array1<f64>>,
    t: i32,
}

impl MlpModel {
    pub fn fit(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        p: &MlpParams,
        cfg: &MlpDefaults,
        seed: u64,
    ) -> Self {
        let (n, d) = x.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![d];
        sizes.extend(&p.hidden);
        sizes.push(1);

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            // Fan-in uniform: He for relu, LeCun for tanh.
            let gain = match p.activation {
                Activation::Relu => 6.0,
                Activation::Tanh => 3.0,
            };
            let bound = (gain / fan_in.max(1) as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        let mut model = MlpModel {
            activation: p.activation,
            weights,
            biases,
            epochs: 0,
            final_loss: f64::INFINITY,
            converged: false,
        };
        let mut adam = Adam {
            m: model
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            v: model
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            mb: model
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
            vb: model
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
            t: 0,
        };

        let batch = cfg.batch_size.min(n).max(1);
        let mut order: Vec<usize> = (0..n).collect();
        let mut lr = cfg.learning_rate_init;
        let mut best_loss = f64::INFINITY;
        let mut stale = 0usize;
        for epoch in 0..cfg.max_epochs {
            if cfg.shuffle {
                order.shuffle(&mut rng);
            }
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch) {
                let xb = x.select(Axis(0), chunk);
                let yb = y.select(Axis(0), chunk);
                let loss = model.step(xb.view(), yb.view(), p.alpha, lr, cfg, &mut adam);
                epoch_loss += loss * chunk.len() as f64;
            }
            epoch_loss /= n as f64;
            model.epochs = epoch + 1;
            model.final_loss = epoch_loss;

            if epoch_loss > best_loss - cfg.tol {
                stale += 1;
            } else {
                stale = 0;
            }
            best_loss = best_loss.min(epoch_loss);
            match p.learning_rate {
                LearningRate::Constant => {
                    if stale >= cfg.n_iter_no_change {
                        model.converged = true;
                        break;
                    }
                }
                LearningRate::Adaptive => {
                    if stale >= cfg.adaptive_patience {
                        lr *= 0.5;
                        stale = 0;
                        if lr < 1e-6 {
                            model.converged = true;
                            break;
                        }
                    }
                }
            }
        }
        model
    }

    fn activate(&self, z: &mut Array2<f64>) {
        match self.activation {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l < last {
                self.activate(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// One Adam update on a batch; returns the batch loss before the update.
    fn step(
        &mut self,
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        alpha: f64,
        lr: f64,
        cfg: &MlpDefaults,
        adam: &mut Adam,
    ) -> f64 {
        let nb = x.nrows() as f64;
        let acts = self.forward(x);
        let out = acts.last().expect("output layer").column(0).to_owned();
        let resid = &out - &y;
        let penalty: f64 = self
            .weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let loss = 0.5 * resid.mapv(|r| r * r).sum() / nb + 0.5 * alpha * penalty / nb;

        let mut delta = (resid / nb).insert_axis(Axis(1));
        let layers = self.weights.len();
        let mut grads_w = vec![Array2::zeros((0, 0)); layers];
        let mut grads_b = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            grads_w[l] = acts[l].t().dot(&delta) + &self.weights[l] * (alpha / nb);
            grads_b[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                let a = &acts[l];
                match self.activation {
                    Activation::Relu => back.zip_mut_with(a, |g, &av| {
                        if av <= 0.0 {
                            *g = 0.0;
                        }
                    }),
                    Activation::Tanh => back.zip_mut_with(a, |g, &av| *g *= 1.0 - av * av),
                }
                delta = back;
            }
        }

        adam.t += 1;
        let (b1, b2) = (cfg.beta_1, cfg.beta_2);
        let step = lr * (1.0 - b2.powi(adam.t)).sqrt() / (1.0 - b1.powi(adam.t));
        for l in 0..layers {
            adam.m[l].zip_mut_with(&grads_w[l], |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            adam.v[l].zip_mut_with(&grads_w[l], |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            adam.mb[l].zip_mut_with(&grads_b[l], |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            adam.vb[l].zip_mut_with(&grads_b[l], |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            let w = &mut self.weights[l];
            ndarray::Zip::from(w)
                .and(&adam.m[l])
                .and(&adam.v[l])
                .for_each(|w, &m, &v| *w -= step * m / (v.sqrt() + cfg.epsilon));
            ndarray::Zip::from(&mut self.biases[l])
                .and(&adam.mb[l])
                .and(&adam.vb[l])
                .for_each(|b, &m, &v| *b -= step * m / (v.sqrt() + cfg.epsilon));
        }
        loss
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let acts = self.forward(x);
        acts.last()
            .expect("output layer")
            .slice(s![.., 0])
            .to_owned()
    }
}
