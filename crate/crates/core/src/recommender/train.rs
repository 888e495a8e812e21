use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embedding::{belief_embedding, refresh_attribute_embeddings, AttributeEmbeddings, EmbeddingStore};
use super::masking::mask_with;
use super::rn::{rec_loss, rec_loss_grad, Rn};
use crate::datasets::{Example, ItemCatalog, ItemId};
use crate::error::{Error, Result};
use crate::nnkit::{Adam, AdamConfig, CosineSchedule, EpochRecord, Gradients, Mode, Tensor};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lr_min: f64,
    pub margin: f64,
    pub mask_rate: f64,
    /// Optimizer iterations between `E^attr` refreshes.
    pub refresh_every: u64,
    pub seed: u64,
}

impl Default for RnTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 128,
            adam: AdamConfig::default(),
            lr_min: 0.0,
            margin: 0.5,
            mask_rate: 0.5,
            refresh_every: 500,
            seed: 123,
        }
    }
}

/// Progress notifications from [`train_rn`].
#[derive(Debug)]
pub enum RnEvent<'a> {
    /// `E^attr` was recomputed before optimizer iteration `iteration`.
    Refresh {
        iteration: u64,
        attrs: &'a AttributeEmbeddings,
    },
    Epoch(EpochRecord),
}

/// Uniform over all items except `v`.
fn negative(v: ItemId, num_items: usize, rng: &mut impl Rng) -> ItemId {
    let r = rng.random_range(0..num_items - 1);
    ItemId::from(if r >= v.index() { r + 1 } else { r })
}

pub(super) struct Pairs {
    x: Tensor,
    o: Tensor,
    items: Tensor,
    pos: Vec<ItemId>,
    neg: Vec<ItemId>,
}

pub(super) fn build_pairs(
    rn: &Rn,
    store: &EmbeddingStore,
    catalog: &ItemCatalog,
    attrs: &AttributeEmbeddings,
    examples: &[&Example],
    mask_rate: f64,
    rng: &mut impl Rng,
) -> Result<Pairs> {
    let (d, rows, n) = (rn.dim(), rn.arch().history_len, examples.len());
    let mut x = Vec::with_capacity(n * (rows + 1) * d);
    let mut o = Vec::with_capacity(n * d);
    let mut pos = Vec::with_capacity(n);
    let mut neg = Vec::with_capacity(n);
    for ex in examples {
        x.extend(store.history_with_user(&ex.history, rows)?);
        let masked = mask_with(&catalog.binary(ex.item), mask_rate, rng);
        o.extend(belief_embedding(masked.as_slice(), attrs)?);
        pos.push(ex.item);
        neg.push(negative(ex.item, catalog.len(), rng));
    }
    let mut items = Vec::with_capacity(2 * n * d);
    for &v in pos.iter().chain(&neg) {
        items.extend_from_slice(store.item(v)?);
    }
    Ok(Pairs {
        x: Tensor::new(vec![n, 1, rows + 1, d], x)?,
        o: Tensor::new(vec![n, d], o)?,
        items: Tensor::new(vec![2 * n, d], items)?,
        pos,
        neg,
    })
}

pub(super) struct StepGrads {
    pub(super) loss: f64,
    pub(super) params: Gradients,
    x: Tensor,
    items: Tensor,
}

/// Mean pair loss and its gradients. The preference summary is computed once
/// per pair and shared by the positive and negative item.
pub(super) fn pair_gradients(rn: &Rn, pairs: &Pairs, margin: f64) -> Result<StepGrads> {
    let n = pairs.pos.len();
    let d = rn.dim();
    let net = &rn.net;
    let (s, prefix) = net.forward_range_traced(0..rn.split(), &pairs.x, &[&pairs.o], Mode::Train, 0)?;
    let s2 = Tensor::new(vec![2 * n, d], [s.data(), s.data()].concat())?;
    let (out, suffix) = net.forward_range_traced(rn.split()..net.layers().len(), &s2, &[&pairs.o, &pairs.items], Mode::Train, 0)?;
    let scores = out.data();
    let mut loss = 0.0;
    let mut g = vec![0.0; 2 * n];
    for i in 0..n {
        loss += rec_loss(scores[i], scores[n + i], margin);
        let (gp, gn) = rec_loss_grad(scores[i], scores[n + i], margin);
        g[i] = gp / n as f64;
        g[n + i] = gn / n as f64;
    }
    let mut params = net.backward(&suffix, &Tensor::new(vec![2 * n, 1], g)?)?;
    let ds = params.input.data();
    let ds_sum: Vec<f64> = (0..n * d).map(|k| ds[k] + ds[n * d + k]).collect();
    let head = net.backward(&prefix, &Tensor::new(vec![n, d], ds_sum)?)?;
    params.accumulate(&head);
    let items = params.side.get(1).cloned().flatten().ok_or(Error::MissingTrace)?;
    Ok(StepGrads {
        loss: loss / n as f64,
        params,
        x: head.input,
        items,
    })
}

/// Scatters input gradients back onto the embedding tables.
pub(super) fn embedding_grads(
    rn: &Rn,
    store: &EmbeddingStore,
    examples: &[&Example],
    pairs: &Pairs,
    step: &StepGrads,
) -> (Vec<f64>, Vec<f64>) {
    let (d, rows) = (rn.dim(), rn.arch().history_len);
    let mut gu = vec![0.0; store.num_users() * d];
    let mut gi = vec![0.0; store.num_items() * d];
    let add = |table: &mut [f64], row: usize, g: &[f64]| {
        table[row * d..(row + 1) * d].iter_mut().zip(g).for_each(|(t, v)| *t += v);
    };
    for (s, ex) in examples.iter().enumerate() {
        let gx = step.x.sample(s);
        for (r, &v) in ex.history.items.iter().take(rows).enumerate() {
            add(&mut gi, v.index(), &gx[r * d..(r + 1) * d]);
        }
        if let Some(u) = ex.history.user {
            add(&mut gu, u.index(), &gx[rows * d..]);
        }
    }
    for (k, &v) in pairs.pos.iter().chain(&pairs.neg).enumerate() {
        add(&mut gi, v.index(), step.items.sample(k));
    }
    (gu, gi)
}

/// Mean [`rec_loss`] over `examples` with seeded negatives and masks, using
/// `E^attr` refreshed from the current item embeddings.
pub fn evaluate_rn(
    rn: &Rn,
    store: &EmbeddingStore,
    examples: &[Example],
    catalog: &ItemCatalog,
    margin: f64,
    mask_rate: f64,
    seed: u64,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation examples"));
    }
    let attrs = refresh_attribute_embeddings(store, catalog)?;
    let mut rng = seeded(seed);
    let mut total = 0.0;
    for chunk in examples.chunks(256) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let pairs = build_pairs(rn, store, catalog, &attrs, &refs, mask_rate, &mut rng)?;
        let s = rn.net.forward_range(0..rn.split(), &pairs.x, &[&pairs.o], Mode::Eval, 0)?;
        let n = chunk.len();
        let s2 = Tensor::new(vec![2 * n, rn.dim()], [s.data(), s.data()].concat())?;
        let out = rn
            .net
            .forward_range(rn.split()..rn.net.layers().len(), &s2, &[&pairs.o, &pairs.items], Mode::Eval, 0)?;
        let sc = out.data();
        total += (0..n).map(|i| rec_loss(sc[i], sc[n + i], margin)).sum::<f64>();
    }
    Ok(total / examples.len() as f64)
}

/// Trains the network together with the user and item embeddings on
/// `(u, v, v_neg)` triples. `E^attr` is refreshed from the item embeddings
/// every `refresh_every` iterations and held fixed in between; no gradient
/// flows into it. On a non-finite loss the network and embeddings from the
/// last finished epoch are restored and [`Error::Diverged`] is returned.
pub fn train_rn(
    rn: &mut Rn,
    store: &mut EmbeddingStore,
    examples: &[Example],
    catalog: &ItemCatalog,
    config: &RnTrainConfig,
    mut observe: impl FnMut(RnEvent<'_>),
) -> Result<Vec<EpochRecord>> {
    if config.epochs == 0 {
        return Ok(Vec::new());
    }
    if examples.is_empty() {
        return Err(Error::Empty("training examples"));
    }
    if catalog.len() < 2 {
        return Err(Error::Config("negative sampling needs at least two items".into()));
    }
    if store.dim() != rn.dim() {
        return Err(Error::Config(format!(
            "store width {} differs from network width {}",
            store.dim(),
            rn.dim()
        )));
    }
    let bs = config.batch_size.max(1);
    let mut sizes = rn.net.param_sizes();
    sizes.extend([store.num_users() * store.dim(), store.num_items() * store.dim()]);
    let steps = (config.epochs * examples.len().div_ceil(bs)) as u64;
    let mut adam = Adam::new(config.adam, &sizes).with_schedule(CosineSchedule {
        total_steps: steps,
        lr_min: config.lr_min,
    });
    let refresh_every = config.refresh_every.max(1);
    let mut attrs = refresh_attribute_embeddings(store, catalog)?;
    let mut good = (rn.net.clone(), store.clone());
    let mut last_loss = f64::NAN;
    let mut records = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut seeded(derive_seed(config.seed, &[epoch as u64, 0])));
        let mut rng = seeded(derive_seed(config.seed, &[epoch as u64, 1]));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(bs) {
            let iteration = adam.step_count();
            if iteration.is_multiple_of(refresh_every) {
                if iteration > 0 {
                    attrs = refresh_attribute_embeddings(store, catalog)?;
                }
                observe(RnEvent::Refresh { iteration, attrs: &attrs });
            }
            let refs: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let pairs = build_pairs(rn, store, catalog, &attrs, &refs, config.mask_rate, &mut rng)?;
            let step = pair_gradients(rn, &pairs, config.margin)?;
            if !step.loss.is_finite() {
                (rn.net, *store) = good;
                return Err(Error::Diverged { iteration, last_loss });
            }
            let (gu, gi) = embedding_grads(rn, store, &refs, &pairs, &step);
            let mut grads: Vec<&[f64]> = step.params.params.iter().map(Vec::as_slice).collect();
            grads.extend([gu.as_slice(), gi.as_slice()]);
            let result = {
                let (users, items) = store.tables_mut();
                let mut params: Vec<&mut [f64]> = rn.net.params_mut().map(|p| p.values.as_mut_slice()).collect();
                params.extend([users, items]);
                adam.step(&mut params, &grads)
            };
            if let Err(e) = result {
                (rn.net, *store) = good;
                return Err(e);
            }
            epoch_loss += step.loss * chunk.len() as f64;
            last_loss = step.loss;
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: epoch_loss / examples.len() as f64,
        };
        observe(RnEvent::Epoch(record));
        records.push(record);
        good = (rn.net.clone(), store.clone());
    }
    Ok(records)
}
