//! Siamese metric learning: training pairs, the shared network, and SGD.

mod network;
mod pairs;
mod train;

pub use network::{Gradients, Input, Layer, SiameseModel};
pub(crate) use network::ByteReader;
pub use pairs::{generate_pairs, sample_negatives, write_pairs, Label, NegativeSample, TrainingPair};
pub use train::{train, TrainConfig, Trained};

use crate::error::{Error, Result};

/// `(1 - Y) * D^2 + Y * max(0, margin - D)^2`, with `Y = 1` for unrelated pairs.
pub fn contrastive_loss(unrelated: bool, distance: f64, margin: f64) -> Result<f64> {
    if distance.is_nan() || distance < 0.0 {
        return Err(Error::InvalidArgument(format!("distance must be non-negative, got {distance}")));
    }
    if unrelated {
        let gap = (margin - distance).max(0.0);
        Ok(gap * gap)
    } else {
        Ok(distance * distance)
    }
}

/// Euclidean distance between two embeddings.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
