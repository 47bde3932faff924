use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{Gradients, Input, SiameseModel};
use super::pairs::{Label, TrainingPair};
use crate::encode::{EncodedVector, Encoder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negative_ratio: f64,
    pub margin: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 50,
            negative_ratio: 1.0,
            margin: 1.0,
            seed: 42,
            hidden: vec![300, 200, 150],
            embedding_dim: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{what} must be positive")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate");
        }
        if self.batch_size == 0 {
            return bad("batch size");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if !(self.negative_ratio > 0.0 && self.negative_ratio.is_finite()) {
            return bad("negative ratio");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin");
        }
        if self.embedding_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths");
        }
        Ok(())
    }

    /// Input width followed by every layer width.
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.embedding_dim))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: SiameseModel,
    /// Mean pair loss seen during each epoch.
    pub loss_trace: Vec<f64>,
}

/// Minibatch SGD on the mean contrastive loss.
///
/// Both elements of a pair go through the same weights and their gradients are
/// summed into that single parameter set.
pub fn train(pairs: &[TrainingPair], encoder: &Encoder, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }

    // Encode each distinct entity once.
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut inputs: Vec<EncodedVector> = Vec::new();
    let mut encoded_pairs = Vec::with_capacity(pairs.len());
    for p in pairs {
        let mut ends = [0usize; 2];
        for (end, s) in ends.iter_mut().zip([p.a.as_str(), p.b.as_str()]) {
            *end = *index.entry(s).or_insert_with(|| {
                inputs.push(encoder.encode(s));
                inputs.len() - 1
            });
        }
        encoded_pairs.push((ends[0], ends[1], p.label == Label::Unrelated));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = SiameseModel::init(
        &config.layer_dims(encoder.input_dim),
        config.margin,
        &mut rng,
    )?;
    let mut grads = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..encoded_pairs.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &k in batch {
                let (a, b, unrelated) = encoded_pairs[k];
                batch_loss += model.accumulate_pair(
                    Input::Sparse(&inputs[a]),
                    Input::Sparse(&inputs[b]),
                    unrelated,
                    scale,
                    &mut grads,
                )?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: config.learning_rate,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            model.apply(&mut grads, config.learning_rate);
        }
        let mean = epoch_loss / encoded_pairs.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        loss_trace.push(mean);
        if !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                learning_rate: config.learning_rate,
                loss: f64::NAN,
            });
        }
    }
    Ok(Trained { model, loss_trace })
}
