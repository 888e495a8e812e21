//! Belief tracking: a network maps a user's embedding and history attribute
//! matrix to a symmetric relation matrix `A`, and beliefs are `clamp(A·a)`.

mod btn;
mod relation;
mod train;

pub use btn::{Btn, BtnArch};
pub use relation::{attribute_loss, predict_beliefs, BeliefVector, RelationMatrix, LOSS_EPS};
pub use train::{evaluate_btn, train_btn, TrainConfig};

/// Pearson correlation of two equally long samples; 0 when either is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "pearson: length mismatch");
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Pearson correlation matrix of the catalog's attribute columns.
pub fn attribute_correlation(catalog: &crate::datasets::ItemCatalog) -> Vec<f64> {
    let p = catalog.num_attributes();
    let cols: Vec<Vec<f64>> = (0..p).map(|a| catalog.items().map(|v| catalog.binary(v)[a]).collect()).collect();
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            out[i * p + j] = if i == j { 1.0 } else { pearson(&cols[i], &cols[j]) };
        }
    }
    out
}
