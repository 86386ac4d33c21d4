//! Maneuver classifier: a one-hidden-layer perceptron with sigmoid hidden
//! units and a softmax output over (LCL, FLW, LCR).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::Maneuver;
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, Standardizer};

pub const CLASSES: usize = 3;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64; CLASSES]) -> [f64; CLASSES] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Network parameters. Weight matrices are row-major with one row per
/// output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

struct Activations {
    hidden: Vec<f64>,
    logits: [f64; CLASSES],
    probs: [f64; CLASSES],
}

impl Mlp {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w1: vec![0.0; hidden * input_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; CLASSES * hidden],
            b2: vec![0.0; CLASSES],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden);
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + CLASSES) as f64).sqrt();
        net.w1
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-a1..=a1));
        net.w2
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-a2..=a2));
        net
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
    }

    pub fn param_mut(&mut self, mut i: usize) -> Option<&mut f64> {
        for block in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if i < block.len() {
                return Some(&mut block[i]);
            }
            i -= block.len();
        }
        None
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn activate(&self, x: &[f64]) -> Activations {
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
                sigmoid(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j])
            })
            .collect();
        let mut logits = [0.0; CLASSES];
        for (k, z) in logits.iter_mut().enumerate() {
            let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
            *z = row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + self.b2[k];
        }
        Activations {
            hidden,
            probs: softmax(&logits),
            logits,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<[f64; CLASSES]> {
        self.check(x)?;
        Ok(self.activate(x).logits)
    }

    /// Class probabilities in (LCL, FLW, LCR) order.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; CLASSES]> {
        self.check(x)?;
        Ok(self.activate(x).probs)
    }

    /// Cross-entropy of one sample.
    pub fn loss(&self, x: &[f64], class: usize) -> Result<f64> {
        Ok(-self.forward(x)?[class].max(f64::MIN_POSITIVE).ln())
    }

    /// Loss and its gradient, accumulated into `grad` with weight `scale`.
    fn accumulate(&self, x: &[f64], class: usize, scale: f64, grad: &mut Mlp) -> f64 {
        let act = self.activate(x);
        let mut dz2 = act.probs;
        dz2[class] -= 1.0;
        let mut dh = vec![0.0; self.hidden];
        for k in 0..CLASSES {
            grad.b2[k] += scale * dz2[k];
            for j in 0..self.hidden {
                grad.w2[k * self.hidden + j] += scale * dz2[k] * act.hidden[j];
                dh[j] += dz2[k] * self.w2[k * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let dz1 = dh[j] * act.hidden[j] * (1.0 - act.hidden[j]);
            grad.b1[j] += scale * dz1;
            let row = &mut grad.w1[j * self.input_dim..(j + 1) * self.input_dim];
            for (g, v) in row.iter_mut().zip(x) {
                *g += scale * dz1 * v;
            }
        }
        -act.probs[class].max(f64::MIN_POSITIVE).ln()
    }

    /// Backpropagated gradient of the cross-entropy of one sample.
    pub fn gradient(&self, x: &[f64], class: usize) -> Result<(f64, Mlp)> {
        self.check(x)?;
        if class >= CLASSES {
            return Err(Error::invalid(format!("class index {class} out of range")));
        }
        let mut grad = Mlp::zeros(self.input_dim, self.hidden);
        let loss = self.accumulate(x, class, 1.0, &mut grad);
        Ok((loss, grad))
    }
}

/// Largest relative deviation between the backpropagated gradient and
/// central finite differences with step `eps`, over all parameters.
pub fn numeric_gradient_check(net: &Mlp, x: &[f64], class: usize, eps: f64) -> Result<f64> {
    let (_, analytic) = net.gradient(x, class)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (i, (ga, orig)) in analytic.params().zip(net.params()).enumerate() {
        *probe.param_mut(i).unwrap() = orig + eps;
        let up = probe.loss(x, class)?;
        *probe.param_mut(i).unwrap() = orig - eps;
        let down = probe.loss(x, class)?;
        *probe.param_mut(i).unwrap() = orig;
        let gn = (up - down) / (2.0 * eps);
        let dev = (ga - gn).abs() / ga.abs().max(gn.abs()).max(1e-6);
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub step_size: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 27,
            step_size: 0.02,
            batch_size: 32,
            max_epochs: 50,
            validation_fraction: 0.1,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Mean minibatch loss per epoch.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

/// Trained gate together with everything needed to apply it to raw
/// features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverClassifier {
    pub schema: FeatureSchema,
    pub standardizer: Standardizer,
    pub network: Mlp,
    pub config: TrainConfig,
    pub seed: u64,
    pub history: TrainingHistory,
}

impl ManeuverClassifier {
    /// Probabilities for raw (unstandardized) features.
    pub fn predict(&self, raw: &[f64]) -> Result<[f64; CLASSES]> {
        if raw.len() != self.standardizer.dim() {
            return Err(Error::SchemaMismatch(format!(
                "classifier expects {} features, got {}",
                self.standardizer.dim(),
                raw.len()
            )));
        }
        self.network.forward(&self.standardizer.apply(raw))
    }
}

fn mean_loss(net: &Mlp, x: &[Vec<f64>], y: &[usize], idx: &[usize]) -> f64 {
    idx.iter()
        .map(|&i| -net.activate(&x[i]).probs[y[i]].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / idx.len() as f64
}

/// Minibatch SGD on cross-entropy with early stopping on a held-out
/// validation share. Deterministic for a given seed.
pub fn train(
    features: &[Vec<f64>],
    labels: &[Maneuver],
    schema: &FeatureSchema,
    config: &TrainConfig,
    seed: u64,
) -> Result<ManeuverClassifier> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if features[0].len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "schema has {} features, samples have {}",
            schema.len(),
            features[0].len()
        )));
    }
    if config.hidden == 0 || config.batch_size == 0 || !(config.step_size > 0.0) {
        return Err(Error::invalid(
            "hidden units, batch size and step size must be positive",
        ));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| {
            l.index()
                .ok_or_else(|| Error::invalid("undefined label in training set"))
        })
        .collect::<Result<_>>()?;
    let standardizer = Standardizer::fit(features)?;
    let x: Vec<Vec<f64>> = features.iter().map(|r| standardizer.apply(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if x.len() >= 10 {
        ((x.len() as f64) * config.validation_fraction).round() as usize
    } else {
        0
    };
    let (val, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let mut net = Mlp::init(schema.len(), config.hidden, &mut rng);
    let mut best = net.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut history = TrainingHistory {
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut grad = Mlp::zeros(net.input_dim, net.hidden);
    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            grad.params_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += net.accumulate(&x[i], y[i], scale, &mut grad);
            }
            for (p, g) in net.params_mut().zip(grad.params()) {
                *p -= config.step_size * g;
            }
        }
        let epoch_loss = total / train_idx.len() as f64;
        if !epoch_loss.is_finite() || net.params().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                step_size: config.step_size,
            });
        }
        history.train_loss.push(epoch_loss);
        let monitored = if val.is_empty() {
            epoch_loss
        } else {
            mean_loss(&net, &x, &y, val)
        };
        history.validation_loss.push(monitored);
        log::debug!("epoch {epoch}: train {epoch_loss:.5} validation {monitored:.5}");
        if monitored < best_val {
            best_val = monitored;
            best = net.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= config.patience {
            log::info!("early stop after epoch {epoch}, best epoch {best_epoch}");
            break;
        }
    }
    history.best_epoch = best_epoch;
    Ok(ManeuverClassifier {
        schema: schema.clone(),
        standardizer,
        network: best,
        config: *config,
        seed,
        history,
    })
}
