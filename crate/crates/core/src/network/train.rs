use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Model, NetworkError};
use crate::sampler::{preprocess, sample_test_clips, sample_train_clip, ClipBatch, ClipSample, SamplerConfig};
use crate::tensor::{sgd_step, softmax_rows, Graph, SgdConfig, TensorError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Epoch counts after which the learning rate is multiplied by 0.1.
    pub milestones: Vec<usize>,
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Clips per step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            milestones: vec![6, 8, 9],
            epochs: 10,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let err = |m: &str| Err(NetworkError::Config(m.into()));
        if self.epochs == 0 || self.batch_size == 0 {
            return err("epochs and batch_size must be positive");
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return err("milestones must be strictly increasing");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.momentum >= 0.0 && self.weight_decay >= 0.0) {
            return err("lr, momentum and weight_decay must be finite and non-negative");
        }
        Ok(())
    }

    /// Learning rate for 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * 0.1f64.powi(decays as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub lr: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn predict_label(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn predictions(logits: &crate::tensor::Tensor) -> Vec<usize> {
    let k = logits.shape()[1];
    logits.data().chunks_exact(k).map(predict_label).collect()
}

/// One SGD step on a batch. Returns the mean loss and the batch predictions
/// made before the update.
pub fn train_step(model: &mut Model, batch: &ClipBatch, sgd: &SgdConfig) -> Result<(f64, Vec<usize>), NetworkError> {
    let mut g = Graph::new();
    let out = model.forward_batch(&mut g, batch)?;
    let loss = g.softmax_cross_entropy(out.logits, &batch.labels)?;
    let grads = g.backward(loss)?;
    g.accumulate_param_grads(&grads, &mut model.params);
    sgd_step(&mut model.params, sgd);
    Ok((g.value(loss).data()[0], predictions(g.value(out.logits))))
}

/// Trains with SGD and a step schedule. With `out_dir`, appends one JSON line
/// per epoch to `train_log.jsonl` and saves `checkpoint_epoch{e}.bin` at each
/// milestone and at the end.
pub fn train(
    model: &mut Model,
    data: &Dataset,
    sampler: &SamplerConfig,
    tc: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<EpochLog>, NetworkError> {
    tc.validate()?;
    sampler.validate()?;
    if data.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    if let Some((_, l)) = data.items.iter().find(|(_, l)| *l >= model.cfg.num_classes) {
        return Err(NetworkError::Tensor(TensorError::Label {
            label: *l,
            classes: model.cfg.num_classes,
        }));
    }
    let mut log_file = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            Some(BufWriter::new(File::create(d.join("train_log.jsonl"))?))
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let lr = tc.lr_at(epoch);
        let sgd = SgdConfig {
            lr,
            momentum: tc.momentum,
            weight_decay: tc.weight_decay,
        };
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0);
        for (step, chunk) in order.chunks(tc.batch_size).enumerate() {
            let clips = chunk
                .iter()
                .map(|&i| {
                    let (stream, label) = &data.items[i];
                    sample_train_clip(stream, *label, sampler, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let batch = preprocess(&clips, &sampler.norm)?;
            let (loss, preds) = train_step(model, &batch, &sgd).map_err(|e| match e {
                NetworkError::Tensor(TensorError::NonFinite { op }) => NetworkError::NonFinite {
                    epoch: epoch + 1,
                    step,
                    detail: format!("{op} produced a non-finite value (lr {lr})"),
                },
                other => other,
            })?;
            loss_sum += loss * chunk.len() as f64;
            correct += preds.iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / data.len() as f64,
            train_acc: correct as f64 / data.len() as f64,
            lr,
        };
        if let (Some(f), Some(d)) = (log_file.as_mut(), out_dir) {
            writeln!(f, "{}", serde_json::to_string(&entry).expect("plain struct serializes"))?;
            f.flush()?;
            if tc.milestones.contains(&(epoch + 1)) || epoch + 1 == tc.epochs {
                model.save(&d.join(format!("checkpoint_epoch{}.bin", epoch + 1)))?;
            }
        }
        logs.push(entry);
    }
    Ok(logs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    /// Per-video class probabilities.
    pub scores: Vec<Vec<f64>>,
}

/// Test-protocol accuracy: each video's `test_segments` centre samples form
/// one clip, its averaged logits go through a softmax and the top class wins.
pub fn evaluate(model: &Model, data: &Dataset, sampler: &SamplerConfig, batch_videos: usize) -> Result<EvalReport, NetworkError> {
    if data.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    let mut report = EvalReport {
        accuracy: 0.0,
        predictions: Vec::with_capacity(data.len()),
        labels: Vec::with_capacity(data.len()),
        scores: Vec::with_capacity(data.len()),
    };
    for chunk in data.items.chunks(batch_videos.max(1)) {
        let clips = chunk
            .iter()
            .map(|(s, l)| ClipSample::concat_time(sample_test_clips(s, *l, sampler)?))
            .collect::<Result<Vec<_>, _>>()?;
        let batch = preprocess(&clips, &sampler.norm)?;
        let probs = softmax_rows(&model.logits(&batch)?);
        let k = probs.shape()[1];
        for (row, &label) in probs.data().chunks_exact(k).zip(&batch.labels) {
            report.predictions.push(predict_label(row));
            report.labels.push(label);
            report.scores.push(row.to_vec());
        }
    }
    let correct = report.predictions.iter().zip(&report.labels).filter(|(p, l)| p == l).count();
    report.accuracy = correct as f64 / data.len() as f64;
    Ok(report)
}
