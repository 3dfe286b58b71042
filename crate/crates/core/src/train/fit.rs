use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, Confusion};
use crate::dataset::PulseDataset;
use crate::error::{Error, Result};
use crate::models::{Ctx, NeuralNet};
use crate::rng::{derive_seed, seeded};
use crate::signal::PULSE_LEN;
use crate::tensor::{AdamState, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub batch_size: usize,
    /// `None` picks the model family's default rate.
    pub lr: Option<f64>,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batch_size: 96,
            lr: None,
            max_epochs: 150,
            early_stop_patience: 20,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("batch_size and early_stop_patience must be positive".into()));
        }
        if let Some(lr) = self.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
            }
        }
        Ok(())
    }
}

/// Per-epoch curves. `best_epoch` is 1-based; 0 means the initial weights
/// were kept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_precision: Vec<f64>,
    pub val_recall: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

/// Mean BCE of inference-mode predictions, plus the probabilities.
pub fn evaluate_loss(net: &NeuralNet, ds: &PulseDataset) -> Result<(f64, Vec<f64>)> {
    let probs = net.predict_proba(ds.data())?;
    let targets = ds.targets()?;
    let eps = 1e-15;
    let loss = probs
        .iter()
        .zip(&targets)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / targets.len().max(1) as f64;
    Ok((loss, probs))
}

/// Mini-batch Adam on binary cross-entropy with shuffled epochs and early
/// stopping on validation loss; the best-validation weights are restored.
pub fn train_neural(net: &mut NeuralNet, train: &PulseDataset, val: &PulseDataset, spec: &TrainSpec, lr: f64) -> Result<TrainHistory> {
    spec.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData(format!(
            "training needs non-empty train and validation sets, got {} and {}",
            train.len(),
            val.len()
        )));
    }
    let targets = train.targets()?;
    let val_targets = val.targets()?;
    let mut shuffle_rng = seeded(derive_seed(spec.seed, "shuffle"));
    let mut dropout_rng = seeded(derive_seed(spec.seed, "dropout"));
    let mut adam = AdamState::new(lr, net.params().tensors());

    let (initial_val, _) = evaluate_loss(net, val)?;
    let mut history = TrainHistory {
        best_val_loss: initial_val,
        ..Default::default()
    };
    let mut best: Vec<Tensor> = net.params().tensors().to_vec();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut xb = Vec::with_capacity(spec.batch_size * PULSE_LEN);
    let mut yb = Vec::with_capacity(spec.batch_size);

    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(spec.batch_size).enumerate() {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(train.row(i));
                yb.push(targets[i]);
            }
            let mut tape = Tape::new();
            let vars = net.params().bind(&mut tape);
            let mut ctx = Ctx {
                tape: &mut tape,
                vars: &vars,
                training: true,
                rng: &mut dropout_rng,
            };
            let z = net.forward(&mut ctx, &xb, chunk.len())?;
            let loss = tape.bce_with_logits(z, &yb)?;
            let lv = tape.value(loss)[0];
            if !lv.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b, lr });
            }
            tape.backward(loss)?;
            net.params_mut().collect_grads(&tape, &vars);
            adam.step(net.params_mut().tensors_mut())?;
            loss_sum += lv * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        let (val_loss, probs) = evaluate_loss(net, val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                lr,
            });
        }
        let m = metrics(&Confusion::from_probs(&probs, &val_targets, 0.5)?)?;
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.val_precision.push(m.pre);
        history.val_recall.push(m.rec);
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best.clone_from_slice(net.params().tensors());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= spec.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    for (dst, src) in net.params_mut().tensors_mut().iter_mut().zip(&best) {
        dst.data_mut().copy_from_slice(src.data());
    }
    Ok(history)
}
