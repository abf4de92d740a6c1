use log::{debug, trace};
use serde::{Deserialize, Serialize};

use super::MeanEstimates;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{ArmId, ObservationBatch, RewardVector, RngStream};
use crate::scalar::Scalar;

/// Which observations the network is trained on each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpDataScope {
    /// Everything observed so far.
    #[default]
    Cumulative,
    /// Only the current round's pulls.
    CurrentRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub lambda: f64,
    pub iters: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Training loss is recorded every this many iterations.
    pub checkpoint_every: usize,
    pub data_scope: MlpDataScope,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 30,
            lambda: 1e-4,
            iters: 2000,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            checkpoint_every: 100,
            data_scope: MlpDataScope::Cumulative,
        }
    }
}

/// Parameters of `g(φ) = W2·relu(W1·φ + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    /// h×d
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    /// m×h
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

impl<T: Scalar> MlpParams<T> {
    pub fn zeros(d: usize, hidden: usize, m: usize) -> Self {
        MlpParams {
            w1: Matrix::zeros(hidden, d),
            b1: vec![T::zero(); hidden],
            w2: Matrix::zeros(m, hidden),
            b2: vec![T::zero(); m],
        }
    }

    /// Uniform `±1/√fan_in` initialization.
    pub fn init(d: usize, hidden: usize, m: usize, rng: &mut RngStream) -> Self {
        let mut p = Self::zeros(d, hidden, m);
        let mut fill = |xs: &mut [T], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in xs {
                *x = T::lit((2.0 * rng.uniform() - 1.0) * bound);
            }
        };
        let mut flat = p.to_flat();
        let (w1_len, b1_len, w2_len) = (hidden * d, hidden, m * hidden);
        fill(&mut flat[..w1_len + b1_len], d);
        fill(
            &mut flat[w1_len + b1_len..w1_len + b1_len + w2_len + m],
            hidden,
        );
        p.set_flat(&flat);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn num_params(&self) -> usize {
        let (h, d, m) = (self.hidden(), self.input_dim(), self.output_dim());
        h * d + h + m * h + m
    }

    /// Parameters in the order W1 (row-major), b1, W2 (row-major), b2.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        self.w1.rows_iter().for_each(|r| out.extend_from_slice(r));
        out.extend_from_slice(&self.b1);
        self.w2.rows_iter().for_each(|r| out.extend_from_slice(r));
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.num_params());
        let (h, d, m) = (self.hidden(), self.input_dim(), self.output_dim());
        let mut it = flat.iter().copied();
        for i in 0..h {
            for j in 0..d {
                self.w1[(i, j)] = it.next().unwrap();
            }
        }
        self.b1.iter_mut().for_each(|b| *b = it.next().unwrap());
        for i in 0..m {
            for j in 0..h {
                self.w2[(i, j)] = it.next().unwrap();
            }
        }
        self.b2.iter_mut().for_each(|b| *b = it.next().unwrap());
    }

    pub fn squared_norm(&self) -> T {
        self.to_flat().iter().map(|&v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    /// Forward pass; also returns the hidden pre-activations.
    fn forward(&self, phi: &[T]) -> (Vec<T>, Vec<T>) {
        let pre: Vec<T> = self
            .w1
            .matvec(phi)
            .into_iter()
            .zip(&self.b1)
            .map(|(z, &b)| z + b)
            .collect();
        let act: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
        let out = self
            .w2
            .matvec(&act)
            .into_iter()
            .zip(&self.b2)
            .map(|(o, &b)| o + b)
            .collect();
        (out, pre)
    }

    pub fn predict(&self, phi: &[T]) -> Vec<T> {
        self.forward(phi).0
    }
}

/// `L = (1/n)Σ‖g(φ_t) − f_t‖² + λ‖θ‖²` and its exact gradient
/// (ReLU′(0) = 0).
pub fn mlp_loss_grad<T: Scalar>(
    params: &MlpParams<T>,
    batch: &ObservationBatch<T>,
    lambda: T,
) -> Result<(T, MlpParams<T>)> {
    if batch.is_empty() {
        return Err(Error::Estimation("MLP loss on an empty batch".into()));
    }
    if lambda < T::zero() {
        return Err(Error::Config(format!(
            "MLP lambda must be >= 0, got {lambda}"
        )));
    }
    let (h, d, m) = (params.hidden(), params.input_dim(), params.output_dim());
    let n = T::of_usize(batch.len());
    let two = T::lit(2.0);
    let mut grad = MlpParams::zeros(d, h, m);
    let mut data_loss = T::zero();

    for obs in batch.iter() {
        let (out, pre) = params.forward(&obs.feature);
        let resid: Vec<T> = out
            .iter()
            .zip(obs.reward.values())
            .map(|(&o, &f)| o - f)
            .collect();
        data_loss += resid.iter().map(|&r| r * r).sum::<T>();
        let dout: Vec<T> = resid.iter().map(|&r| two * r / n).collect();

        let mut dpre = vec![T::zero(); h];
        for i in 0..m {
            grad.b2[i] += dout[i];
            for j in 0..h {
                let a = pre[j].max(T::zero());
                grad.w2[(i, j)] += dout[i] * a;
                if pre[j] > T::zero() {
                    dpre[j] += params.w2[(i, j)] * dout[i];
                }
            }
        }
        for j in 0..h {
            if dpre[j] == T::zero() {
                continue;
            }
            grad.b1[j] += dpre[j];
            for k in 0..d {
                grad.w1[(j, k)] += dpre[j] * obs.feature[k];
            }
        }
    }

    let loss = data_loss / n + lambda * params.squared_norm();
    if lambda > T::zero() {
        let theta = params.to_flat();
        let mut g = grad.to_flat();
        for (gi, &ti) in g.iter_mut().zip(&theta) {
            *gi += two * lambda * ti;
        }
        grad.set_flat(&g);
    }
    Ok((loss, grad))
}

/// Result of [`mlp_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpFit<T> {
    pub params: MlpParams<T>,
    /// `(iteration, training loss)` at every checkpoint, including the start.
    pub checkpoints: Vec<(usize, T)>,
}

/// Full-batch Adam on [`mlp_loss_grad`]. Starts from `warm_start` when
/// given (and shape-compatible), otherwise from a fresh initialization
/// drawn from `rng`.
///
/// At every checkpoint the iterate is reset to the best one seen if Adam
/// has drifted above it, so logged losses never increase.
pub fn mlp_fit<T: Scalar>(
    batch: &ObservationBatch<T>,
    config: &MlpConfig,
    rng: &mut RngStream,
    warm_start: Option<&MlpParams<T>>,
) -> Result<MlpFit<T>> {
    let first = batch
        .rows()
        .first()
        .ok_or_else(|| Error::Estimation("MLP fit on an empty batch".into()))?;
    let (d, m) = (first.feature.len(), first.reward.dim());
    if d == 0 {
        return Err(Error::Estimation("MLP fit needs feature vectors".into()));
    }
    if config.hidden == 0 {
        return Err(Error::Config("MLP hidden width must be positive".into()));
    }
    let lambda = T::lit(config.lambda);
    let mut params = match warm_start {
        Some(p) if p.input_dim() == d && p.output_dim() == m && p.hidden() == config.hidden => {
            p.clone()
        }
        _ => MlpParams::init(d, config.hidden, m, rng),
    };

    let mut theta = params.to_flat();
    let mut m1 = vec![T::zero(); theta.len()];
    let mut m2 = vec![T::zero(); theta.len()];
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let (mut lr, eps) = (T::lit(config.learning_rate), T::lit(config.adam_epsilon));
    let every = config.checkpoint_every.max(1);
    let mut checkpoints = Vec::new();
    let mut best: Option<(T, Vec<T>)> = None;
    let mut step = 0;

    for it in 0..=config.iters {
        let (mut loss, mut grad) = mlp_loss_grad(&params, batch, lambda)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "MLP training loss is {loss} at iteration {it}"
            )));
        }
        if best.as_ref().is_none_or(|(l, _)| loss < *l) {
            best = Some((loss, theta.clone()));
        }
        if it % every == 0 || it == config.iters {
            // Adam can overshoot between checkpoints; fall back to the best
            // iterate and restart the moments with half the step.
            let (best_loss, best_theta) = best.as_ref().expect("set above");
            if loss > *best_loss {
                theta.clone_from(best_theta);
                params.set_flat(&theta);
                (loss, grad) = mlp_loss_grad(&params, batch, lambda)?;
                m1.iter_mut()
                    .chain(m2.iter_mut())
                    .for_each(|v| *v = T::zero());
                step = 0;
                lr = lr * T::lit(0.5);
                debug!("mlp iteration {it}: restored best iterate, step now {lr}");
            }
            trace!("mlp iteration {it}: loss {loss}");
            checkpoints.push((it, loss));
        }
        if it == config.iters {
            break;
        }
        let g = grad.to_flat();
        step += 1;
        let c1 = T::one() - b1.powi(step);
        let c2 = T::one() - b2.powi(step);
        for i in 0..theta.len() {
            m1[i] = b1 * m1[i] + (T::one() - b1) * g[i];
            m2[i] = b2 * m2[i] + (T::one() - b2) * g[i] * g[i];
            let mhat = m1[i] / c1;
            let vhat = m2[i] / c2;
            theta[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
        params.set_flat(&theta);
    }
    Ok(MlpFit {
        params,
        checkpoints,
    })
}

pub fn mlp_predict<T: Scalar>(
    params: &MlpParams<T>,
    features: &[(ArmId, &[T])],
) -> MeanEstimates<T> {
    MeanEstimates::from_pairs(
        features
            .iter()
            .map(|&(arm, phi)| (arm, RewardVector::new_unchecked(params.predict(phi)))),
    )
}
