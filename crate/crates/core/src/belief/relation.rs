use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp applied to beliefs inside the attribute loss.
pub const LOSS_EPS: f64 = 1e-6;

/// Symmetric attribute relation matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl RelationMatrix {
    /// `½(Ã + Ãᵀ)` with the diagonal overwritten by 1.
    pub fn from_raw(raw: &[f64], dim: usize) -> Result<Self> {
        if raw.len() != dim * dim {
            return Err(Error::Shape(format!(
                "raw relation output has {} values, expected {dim}²",
                raw.len()
            )));
        }
        let mut values = vec![0.0; dim * dim];
        for i in 0..dim {
            values[i * dim + i] = 1.0;
            for j in i + 1..dim {
                let s = 0.5 * (raw[i * dim + j] + raw[j * dim + i]);
                values[i * dim + j] = s;
                values[j * dim + i] = s;
            }
        }
        Ok(Self { dim, values })
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_raw(&vec![0.0; dim * dim], dim).expect("square")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Entry-wise mean of several matrices (all of equal size).
    pub fn mean(mats: &[RelationMatrix]) -> Result<Self> {
        let first = mats.first().ok_or(Error::Empty("relation matrix list"))?;
        let mut values = vec![0.0; first.values.len()];
        for m in mats {
            if m.dim != first.dim {
                return Err(Error::Shape("relation matrices differ in size".into()));
            }
            values.iter_mut().zip(&m.values).for_each(|(a, b)| *a += b);
        }
        let n = mats.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        Ok(Self { dim: first.dim, values })
    }
}

/// Per-attribute preference estimate, every component in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(Self(values))
        } else {
            Err(Error::Config("belief component outside [0, 1]".into()))
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Largest per-attribute gradient passed back by [`attribute_loss_grad`].
pub const GRAD_CAP: f64 = 10.0;

/// Unclamped `A · a`.
pub(crate) fn propagate(a: &RelationMatrix, feedback: &[f64]) -> Vec<f64> {
    (0..a.dim)
        .map(|i| a.row(i).iter().zip(feedback).map(|(x, y)| x * y).sum())
        .collect()
}

/// `q = clamp(A · a, 0, 1)`.
pub fn predict_beliefs(a: &RelationMatrix, feedback: &[f64]) -> Result<BeliefVector> {
    if feedback.len() != a.dim {
        return Err(Error::Shape(format!(
            "feedback has {} attributes, relation matrix {}",
            feedback.len(),
            a.dim
        )));
    }
    Ok(BeliefVector(
        propagate(a, feedback).into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    ))
}

/// Summed per-attribute binary cross-entropy of `q` against `b(v)`, with
/// `q` clamped into `[ε, 1-ε]`. Non-negative, zero only at the clamped truth.
pub fn attribute_loss(q: &[f64], target: &[f64]) -> f64 {
    q.iter()
        .zip(target)
        .map(|(&q, &b)| {
            let q = q.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            -(b * q.ln() + (1.0 - b) * (1.0 - q).ln())
        })
        .sum()
}

/// Gradient of [`attribute_loss`] with respect to the unclamped `A · a`.
///
/// Inside `[ε, 1-ε]` this is the exact BCE derivative. Outside it the
/// derivative is passed through only when it points back into the range,
/// so saturated wrong predictions keep receiving signal. Magnitudes are
/// capped at [`GRAD_CAP`]: near the clamp boundary the exact derivative
/// grows like `1/ε` and a handful of saturated attributes would otherwise
/// swamp every optimizer step.
pub(crate) fn attribute_loss_grad(z: &[f64], target: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(target)
        .map(|(&z, &b)| {
            let q = z.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            let g = (q - b) / (q * (1.0 - q));
            let g = g.clamp(-GRAD_CAP, GRAD_CAP);
            let outward = (z > 1.0 - LOSS_EPS && g < 0.0) || (z < LOSS_EPS && g > 0.0);
            if outward {
                0.0
            } else {
                g
            }
        })
        .collect()
}
