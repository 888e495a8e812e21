use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::btn::Btn;
use super::relation::{attribute_loss, attribute_loss_grad, RelationMatrix};
use crate::datasets::{Example, ItemCatalog};
use crate::error::{Error, Result};
use crate::nnkit::{Adam, AdamConfig, CosineSchedule, EpochRecord, Mode, Tensor};
use crate::recommender::{mask_attributes, EmbeddingStore};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lr_min: f64,
    pub mask_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            adam: AdamConfig::default(),
            lr_min: 0.0,
            mask_rate: 0.5,
            seed: 123,
        }
    }
}

struct Batch {
    histories: Tensor,
    users: Tensor,
    feedback: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn build_batch(
    btn: &Btn,
    examples: &[&Example],
    catalog: &ItemCatalog,
    store: &EmbeddingStore,
    mask_rate: f64,
    mask_seed: impl Fn(usize) -> u64,
) -> Result<Batch> {
    let rows = btn.arch().history_len;
    let (p, d) = (btn.num_attributes(), store.dim());
    let mut hist = Vec::with_capacity(examples.len() * rows * p);
    let mut users = Vec::with_capacity(examples.len() * d);
    let mut feedback = Vec::with_capacity(examples.len());
    let mut targets = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        hist.extend(ex.history.attribute_matrix(catalog, rows));
        users.extend_from_slice(store.user(Some(ex.user))?);
        let b = catalog.binary(ex.item);
        feedback.push(mask_attributes(&b, mask_rate, mask_seed(i)).0);
        targets.push(b);
    }
    Ok(Batch {
        histories: Tensor::new(vec![examples.len(), 1, rows, p], hist)?,
        users: Tensor::new(vec![examples.len(), d], users)?,
        feedback,
        targets,
    })
}

/// Mean loss over the batch and its gradient with respect to the raw
/// `P²` network output.
fn batch_loss(raw: &Tensor, batch: &Batch, p: usize) -> Result<(f64, Tensor)> {
    let n = batch.targets.len();
    let mut total = 0.0;
    let mut grad = vec![0.0; raw.len()];
    for s in 0..n {
        let a = RelationMatrix::from_raw(raw.sample(s), p)?;
        let fb = &batch.feedback[s];
        let z = super::relation::propagate(&a, fb);
        let q: Vec<f64> = z.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        total += attribute_loss(&q, &batch.targets[s]);
        let dz = attribute_loss_grad(&z, &batch.targets[s]);
        let g = &mut grad[s * p * p..(s + 1) * p * p];
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    // dA_ij = dz_i a_j, split evenly over Ã_ij and Ã_ji.
                    let d = 0.5 * dz[i] * fb[j] / n as f64;
                    g[i * p + j] += d;
                    g[j * p + i] += d;
                }
            }
        }
    }
    Ok((total / n as f64, Tensor::new(raw.shape().to_vec(), grad)?))
}

/// Mean attribute loss in eval mode, with masks fixed by `seed`.
pub fn evaluate_btn(
    btn: &Btn,
    examples: &[Example],
    catalog: &ItemCatalog,
    store: &EmbeddingStore,
    mask_rate: f64,
    seed: u64,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation examples"));
    }
    let mut total = 0.0;
    for (c, chunk) in examples.chunks(256).enumerate() {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = build_batch(btn, &refs, catalog, store, mask_rate, |i| derive_seed(seed, &[c as u64, i as u64]))?;
        let raw = btn.net.forward(&batch.histories, &[&batch.users], Mode::Eval, 0)?;
        total += batch_loss(&raw, &batch, btn.num_attributes())?.0 * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Fits the belief network so that `clamp(A · b′(v))` reproduces `b(v)`
/// from randomly masked feedback `b′(v)`. User embeddings are read, not
/// updated. On a non-finite loss the parameters from the last finished
/// epoch are restored and [`Error::Diverged`] is returned.
pub fn train_btn(
    btn: &mut Btn,
    examples: &[Example],
    catalog: &ItemCatalog,
    store: &EmbeddingStore,
    config: &TrainConfig,
    mut progress: impl FnMut(EpochRecord),
) -> Result<Vec<EpochRecord>> {
    if config.epochs == 0 {
        return Ok(Vec::new());
    }
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    let bs = config.batch_size.max(1);
    let steps = (config.epochs * examples.len().div_ceil(bs)) as u64;
    let mut adam = Adam::new(config.adam, &btn.net.param_sizes()).with_schedule(CosineSchedule {
        total_steps: steps,
        lr_min: config.lr_min,
    });
    let p = btn.num_attributes();
    let mut last_good = btn.net.clone();
    let mut last_loss = f64::NAN;
    let mut records = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut seeded(derive_seed(config.seed, &[epoch as u64, 0])));
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(bs).enumerate() {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let batch = build_batch(btn, &refs, catalog, store, config.mask_rate, |i| {
                derive_seed(config.seed, &[epoch as u64, 1, chunk[i] as u64])
            })?;
            let dropout_seed = derive_seed(config.seed, &[epoch as u64, 2, b as u64]);
            let (raw, trace) = btn
                .net
                .forward_traced(&batch.histories, &[&batch.users], Mode::Train, dropout_seed)?;
            let (loss, grad) = batch_loss(&raw, &batch, p)?;
            if !loss.is_finite() {
                btn.net = last_good;
                return Err(Error::Diverged {
                    iteration: adam.step_count(),
                    last_loss,
                });
            }
            let grads = btn.net.backward(&trace, &grad)?;
            let g: Vec<&[f64]> = grads.params.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut [f64]> = btn.net.params_mut().map(|p| p.values.as_mut_slice()).collect();
            if let Err(e) = adam.step(&mut params, &g) {
                drop(params);
                btn.net = last_good;
                return Err(e);
            }
            epoch_loss += loss * chunk.len() as f64;
            last_loss = loss;
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: epoch_loss / examples.len() as f64,
        };
        progress(record);
        records.push(record);
        last_good = btn.net.clone();
    }
    Ok(records)
}
