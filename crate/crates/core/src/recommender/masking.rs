use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;

/// `b′(v)`: `b(v)` with some components replaced by 0.5 ("unknown").
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaskedAttributeVector(pub Vec<f64>);

impl MaskedAttributeVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Replaces each component independently by 0.5 with probability `rate`.
pub fn mask_attributes(b: &[f64], rate: f64, seed: u64) -> MaskedAttributeVector {
    mask_with(b, rate, &mut seeded(seed))
}

pub(crate) fn mask_with(b: &[f64], rate: f64, rng: &mut impl Rng) -> MaskedAttributeVector {
    MaskedAttributeVector(b.iter().map(|&v| if rng.random::<f64>() < rate { 0.5 } else { v }).collect())
}
