//! Desk-scale datasets, models with closed-form gradients, and local SGD.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{clip_to_norm, purpose, std_normal, ModelVector, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Real(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One client's local data, features stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub n_features: usize,
    pub features: Vec<f64>,
    pub targets: Targets,
}

impl ClientDataset {
    pub fn new(client_id: usize, n_features: usize, features: Vec<f64>, targets: Targets) -> Result<Self> {
        if n_features == 0 || features.len() != n_features * targets.len() {
            return Err(Error::config(format!(
                "dataset {client_id}: {} feature values for {} rows of width {n_features}",
                features.len(),
                targets.len()
            )));
        }
        Ok(ClientDataset {
            client_id,
            n_features,
            features,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Number of samples per class (empty for regression data).
    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        if let Targets::Classes(labels) = &self.targets {
            for &y in labels {
                counts[y] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    Mlp1Hidden,
}

/// Shape of a model; determines the parameter layout.
///
/// Layouts (biases last within each row):
/// * linear: `[w_0..w_f, b]`
/// * logistic: `classes` rows of `f + 1`
/// * mlp: `hidden` rows of `f + 1`, then `classes` rows of `hidden + 1`; tanh hidden units
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ModelKind,
    pub n_features: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Architecture {
    pub fn linear(n_features: usize) -> Self {
        Architecture {
            kind: ModelKind::LinearRegression,
            n_features,
            hidden: 0,
            classes: 0,
        }
    }

    pub fn logistic(n_features: usize, classes: usize) -> Self {
        Architecture {
            kind: ModelKind::LogisticRegression,
            n_features,
            hidden: 0,
            classes,
        }
    }

    pub fn mlp(n_features: usize, hidden: usize, classes: usize) -> Self {
        Architecture {
            kind: ModelKind::Mlp1Hidden,
            n_features,
            hidden,
            classes,
        }
    }

    pub fn dim(&self) -> usize {
        let f = self.n_features;
        match self.kind {
            ModelKind::LinearRegression => f + 1,
            ModelKind::LogisticRegression => self.classes * (f + 1),
            ModelKind::Mlp1Hidden => self.hidden * (f + 1) + self.classes * (self.hidden + 1),
        }
    }

    pub fn is_classifier(&self) -> bool {
        self.kind != ModelKind::LinearRegression
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::config("model.n_features must be positive"));
        }
        if self.is_classifier() && self.classes < 2 {
            return Err(Error::config("model.classes must be at least 2"));
        }
        if self.kind == ModelKind::Mlp1Hidden && self.hidden == 0 {
            return Err(Error::config("model.hidden must be positive for mlp_1hidden"));
        }
        Ok(())
    }

    /// Zeros for the convex models; scaled Gaussian weights for the MLP.
    pub fn init_params(&self, stream: &RngStream) -> ModelVector {
        match self.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => ModelVector::zeros(self.dim()),
            ModelKind::Mlp1Hidden => {
                let mut rng = stream.rng();
                let f = self.n_features;
                let h = self.hidden;
                let mut params = Vec::with_capacity(self.dim());
                let s1 = 1.0 / (f as f64).sqrt();
                for _ in 0..h {
                    for _ in 0..f {
                        params.push(s1 * std_normal(&mut rng));
                    }
                    params.push(0.0);
                }
                let s2 = 1.0 / (h as f64).sqrt();
                for _ in 0..self.classes {
                    for _ in 0..h {
                        params.push(s2 * std_normal(&mut rng));
                    }
                    params.push(0.0);
                }
                ModelVector::from(params)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub arch: Architecture,
    pub params: ModelVector,
}

impl Model {
    pub fn new(arch: Architecture, params: ModelVector) -> Result<Self> {
        params.check_len(arch.dim())?;
        Ok(Model { arch, params })
    }

    pub fn loss_and_gradient(&self, data: &ClientDataset, batch: &[usize]) -> Result<(f64, ModelVector)> {
        loss_and_gradient(&self.arch, &self.params, data, batch)
    }
}

fn log_softmax_grad(logits: &mut [f64], label: usize) -> f64 {
    // logits become dL/dz = softmax - onehot; returns the cross-entropy
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let log_norm = max + sum.ln();
    let loss = log_norm - logits[label];
    for (c, z) in logits.iter_mut().enumerate() {
        *z = (*z - log_norm).exp() - if c == label { 1.0 } else { 0.0 };
    }
    loss
}

/// Mean loss over `batch` and its exact gradient with respect to `params`.
pub fn loss_and_gradient(
    arch: &Architecture,
    params: &ModelVector,
    data: &ClientDataset,
    batch: &[usize],
) -> Result<(f64, ModelVector)> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    params.check_len(arch.dim())?;
    if data.n_features != arch.n_features {
        return Err(Error::Dimension {
            expected: arch.n_features,
            got: data.n_features,
        });
    }
    let f = arch.n_features;
    let p = params.as_slice();
    let mut grad = vec![0.0; arch.dim()];
    let mut loss = 0.0;

    match (arch.kind, &data.targets) {
        (ModelKind::LinearRegression, Targets::Real(y)) => {
            for &i in batch {
                let x = data.row(i);
                let pred: f64 = x.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + p[f];
                let r = pred - y[i];
                loss += r * r;
                for j in 0..f {
                    grad[j] += 2.0 * r * x[j];
                }
                grad[f] += 2.0 * r;
            }
        }
        (ModelKind::LogisticRegression, Targets::Classes(y)) => {
            let mut logits = vec![0.0; arch.classes];
            for &i in batch {
                let x = data.row(i);
                for (c, z) in logits.iter_mut().enumerate() {
                    let w = &p[c * (f + 1)..(c + 1) * (f + 1)];
                    *z = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[f];
                }
                loss += log_softmax_grad(&mut logits, y[i]);
                for (c, dz) in logits.iter().enumerate() {
                    let g = &mut grad[c * (f + 1)..(c + 1) * (f + 1)];
                    for j in 0..f {
                        g[j] += dz * x[j];
                    }
                    g[f] += dz;
                }
            }
        }
        (ModelKind::Mlp1Hidden, Targets::Classes(y)) => {
            let h = arch.hidden;
            let off2 = h * (f + 1);
            let mut act = vec![0.0; h];
            let mut logits = vec![0.0; arch.classes];
            let mut dact = vec![0.0; h];
            for &i in batch {
                let x = data.row(i);
                for (j, a) in act.iter_mut().enumerate() {
                    let w = &p[j * (f + 1)..(j + 1) * (f + 1)];
                    *a = (x.iter().zip(w).map(|(u, v)| u * v).sum::<f64>() + w[f]).tanh();
                }
                for (c, z) in logits.iter_mut().enumerate() {
                    let w = &p[off2 + c * (h + 1)..off2 + (c + 1) * (h + 1)];
                    *z = act.iter().zip(w).map(|(u, v)| u * v).sum::<f64>() + w[h];
                }
                loss += log_softmax_grad(&mut logits, y[i]);
                dact.iter_mut().for_each(|d| *d = 0.0);
                for (c, dz) in logits.iter().enumerate() {
                    let base = off2 + c * (h + 1);
                    for j in 0..h {
                        grad[base + j] += dz * act[j];
                        dact[j] += dz * p[base + j];
                    }
                    grad[base + h] += dz;
                }
                for j in 0..h {
                    let da = dact[j] * (1.0 - act[j] * act[j]);
                    let g = &mut grad[j * (f + 1)..(j + 1) * (f + 1)];
                    for m in 0..f {
                        g[m] += da * x[m];
                    }
                    g[f] += da;
                }
            }
        }
        (kind, _) => {
            return Err(Error::config(format!("targets do not match model kind {kind:?}")));
        }
    }

    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, ModelVector::from(grad)))
}

/// Full-dataset loss plus accuracy (classifiers) or the same loss (regression).
pub fn evaluate(arch: &Architecture, params: &ModelVector, data: &ClientDataset) -> Result<(f64, f64)> {
    let idx = data.all_indices();
    let (loss, _) = loss_and_gradient(arch, params, data, &idx)?;
    if !arch.is_classifier() {
        return Ok((loss, loss));
    }
    let Targets::Classes(labels) = &data.targets else {
        return Err(Error::config("classifier evaluated on real targets"));
    };
    let correct = idx
        .iter()
        .filter(|&&i| predict_class(arch, params, data.row(i)) == labels[i])
        .count();
    Ok((loss, correct as f64 / data.len() as f64))
}

fn predict_class(arch: &Architecture, params: &ModelVector, x: &[f64]) -> usize {
    let f = arch.n_features;
    let p = params.as_slice();
    let logits: Vec<f64> = match arch.kind {
        ModelKind::LogisticRegression => (0..arch.classes)
            .map(|c| {
                let w = &p[c * (f + 1)..(c + 1) * (f + 1)];
                x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[f]
            })
            .collect(),
        ModelKind::Mlp1Hidden => {
            let h = arch.hidden;
            let act: Vec<f64> = (0..h)
                .map(|j| {
                    let w = &p[j * (f + 1)..(j + 1) * (f + 1)];
                    (x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[f]).tanh()
                })
                .collect();
            let off2 = h * (f + 1);
            (0..arch.classes)
                .map(|c| {
                    let w = &p[off2 + c * (h + 1)..off2 + (c + 1) * (h + 1)];
                    act.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[h]
                })
                .collect()
        }
        ModelKind::LinearRegression => return 0,
    };
    logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (c, &z)| if z > best.1 { (c, z) } else { best })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMode {
    Steps,
    Epochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// τ: SGD steps, or epochs in [`LocalMode::Epochs`].
    pub local_steps: usize,
    pub local_mode: LocalMode,
    pub batch_size: usize,
    /// Per-step gradient clip C₁.
    pub clip_gradient: f64,
    /// Update-level clip C used by DP-FedAvg.
    pub clip_update: f64,
    pub momentum: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            local_steps: 5,
            local_mode: LocalMode::Steps,
            batch_size: 16,
            clip_gradient: 1.0,
            clip_update: 1.0,
            momentum: 0.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("training.learning_rate must be a nonnegative finite number"));
        }
        if self.local_steps == 0 {
            return Err(Error::config("training.local_steps must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("training.batch_size must be positive"));
        }
        if !(self.clip_gradient > 0.0) {
            return Err(Error::config("training.clip_gradient must be positive"));
        }
        if !(self.clip_update > 0.0) {
            return Err(Error::config("training.clip_update must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("training.momentum must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Actual SGD step count for a client holding `n_samples` examples.
    pub fn steps_for(&self, n_samples: usize) -> usize {
        match self.local_mode {
            LocalMode::Steps => self.local_steps,
            LocalMode::Epochs => self.local_steps * n_samples.div_ceil(self.batch_size),
        }
    }

    /// η · steps · C₁, the certified bound on ‖Δ‖.
    pub fn update_norm_bound(&self, steps: usize) -> f64 {
        self.learning_rate * steps as f64 * self.clip_gradient
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub delta: ModelVector,
    pub steps: usize,
    /// Mean norm of the stochastic gradients after clipping.
    pub mean_clipped_grad_norm: f64,
    /// Mean minibatch loss seen during training.
    pub mean_train_loss: f64,
}

/// Runs local SGD from `init` and returns `θ_final − θ_init`.
///
/// Every stochastic gradient is clipped to `clip_gradient` before it is
/// applied. With momentum the final update is clipped to `η·steps·C₁` so the
/// norm bound still holds.
pub fn local_train(
    arch: &Architecture,
    init: &ModelVector,
    data: &ClientDataset,
    cfg: &TrainingConfig,
    stream: &RngStream,
) -> Result<LocalUpdate> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config(format!("client {} has an empty dataset", data.client_id)));
    }
    if data.len() < cfg.batch_size {
        return Err(Error::config(format!(
            "client {} holds {} samples, fewer than training.batch_size = {}",
            data.client_id,
            data.len(),
            cfg.batch_size
        )));
    }

    let batches = minibatch_schedule(data.len(), cfg, stream);
    let steps = batches.len();
    let mut params = init.clone();
    let mut velocity = ModelVector::zeros(init.len());
    let mut grad_norm_sum = 0.0;
    let mut loss_sum = 0.0;

    for batch in &batches {
        let (loss, grad) = loss_and_gradient(arch, &params, data, batch)?;
        let grad = clip_to_norm(&grad, cfg.clip_gradient)?;
        grad_norm_sum += grad.norm();
        loss_sum += loss;
        if cfg.momentum > 0.0 {
            velocity.scale_in_place(cfg.momentum);
            velocity.add_assign(&grad);
            params.axpy(-cfg.learning_rate, &velocity);
        } else {
            params.axpy(-cfg.learning_rate, &grad);
        }
    }

    let mut delta = params.sub(init);
    if cfg.momentum > 0.0 {
        let bound = cfg.update_norm_bound(steps);
        if bound > 0.0 {
            delta = clip_to_norm(&delta, bound)?;
        }
    }
    Ok(LocalUpdate {
        delta,
        steps,
        mean_clipped_grad_norm: grad_norm_sum / steps as f64,
        mean_train_loss: loss_sum / steps as f64,
    })
}

/// Minibatch index sets for one local training run, each sorted ascending.
fn minibatch_schedule(n: usize, cfg: &TrainingConfig, stream: &RngStream) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    match cfg.local_mode {
        LocalMode::Steps => {
            let mut pool: Vec<usize> = (0..n).collect();
            for s in 0..cfg.local_steps {
                let mut rng = stream.child(s as u64).rng();
                let (chosen, _) = pool.partial_shuffle(&mut rng, cfg.batch_size);
                let mut batch = chosen.to_vec();
                batch.sort_unstable();
                out.push(batch);
            }
        }
        LocalMode::Epochs => {
            for e in 0..cfg.local_steps {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut stream.child(e as u64).rng());
                for chunk in perm.chunks(cfg.batch_size) {
                    let mut batch = chunk.to_vec();
                    batch.sort_unstable();
                    out.push(batch);
                }
            }
        }
    }
    out
}

/// Generating distribution shared by every client and the held-out test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub arch: Architecture,
    /// Class centroids (classification) or a single row of true weights plus bias (regression).
    centers: Vec<Vec<f64>>,
    pub noise_std: f64,
}

impl SyntheticTask {
    /// Gaussian blobs for classifiers, a noisy linear model for regression.
    pub fn new(arch: Architecture, separation: f64, noise_std: f64, stream: &RngStream) -> Result<Self> {
        arch.validate()?;
        let mut rng = stream.child(purpose::DATA).child(0).rng();
        let f = arch.n_features;
        let rows = if arch.is_classifier() { arch.classes } else { 1 };
        let width = if arch.is_classifier() { f } else { f + 1 };
        let centers = (0..rows)
            .map(|_| {
                (0..width)
                    .map(|_| separation * std_normal(&mut rng))
                    .collect()
            })
            .collect();
        Ok(SyntheticTask {
            arch,
            centers,
            noise_std,
        })
    }

    /// True regression weights, `None` for classifiers.
    pub fn true_weights(&self) -> Option<&[f64]> {
        (!self.arch.is_classifier()).then(|| self.centers[0].as_slice())
    }

    /// Client `id`'s local dataset. `heterogeneity` in [0, 1] moves mass onto the
    /// client's home class `id mod classes` and shifts its feature mean.
    pub fn client_dataset(&self, id: usize, n: usize, heterogeneity: f64, stream: &RngStream) -> ClientDataset {
        let mut rng = stream.child(purpose::DATA).derive(&[1, id as u64]).rng();
        let f = self.arch.n_features;
        let shift: Vec<f64> = (0..f)
            .map(|_| heterogeneity * 0.5 * std_normal(&mut rng))
            .collect();
        let mut features = Vec::with_capacity(n * f);
        if self.arch.is_classifier() {
            let classes = self.arch.classes;
            let home = id % classes;
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let y = if rng.random::<f64>() < heterogeneity {
                    home
                } else {
                    rng.random_range(0..classes)
                };
                for j in 0..f {
                    let z = std_normal(&mut rng);
                    features.push(self.centers[y][j] + shift[j] + self.noise_std * z);
                }
                labels.push(y);
            }
            ClientDataset {
                client_id: id,
                n_features: f,
                features,
                targets: Targets::Classes(labels),
            }
        } else {
            let w = &self.centers[0];
            let tilt: Vec<f64> = (0..f)
                .map(|_| heterogeneity * 0.5 * std_normal(&mut rng))
                .collect();
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let mut y = w[f];
                for j in 0..f {
                    let x = shift[j] + std_normal(&mut rng);
                    y += (w[j] + tilt[j]) * x;
                    features.push(x);
                }
                let z = std_normal(&mut rng);
                ys.push(y + self.noise_std * z);
            }
            ClientDataset {
                client_id: id,
                n_features: f,
                features,
                targets: Targets::Real(ys),
            }
        }
    }

    /// Held-out split drawn from the unshifted population distribution.
    pub fn test_set(&self, n: usize, stream: &RngStream) -> ClientDataset {
        let mut data = self.client_dataset(usize::MAX, n, 0.0, &stream.child(u64::MAX));
        data.client_id = usize::MAX;
        data
    }
}

/// `n_clients` datasets of `samples_per_client` examples each.
pub fn make_synthetic_federation(
    n_clients: usize,
    samples_per_client: usize,
    task: &SyntheticTask,
    heterogeneity: f64,
    stream: &RngStream,
) -> Result<Vec<ClientDataset>> {
    if n_clients == 0 {
        return Err(Error::config("population must contain at least one client"));
    }
    if !(0.0..=1.0).contains(&heterogeneity) {
        return Err(Error::config("data.heterogeneity must lie in [0, 1]"));
    }
    Ok((0..n_clients)
        .map(|i| task.client_dataset(i, samples_per_client, heterogeneity, stream))
        .collect())
}
