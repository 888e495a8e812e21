//! Frozen model bundles and the end-to-end training pipeline.

use std::path::Path;

use log::info;

use crate::belief::{evaluate_btn, predict_beliefs, train_btn, Btn, RelationMatrix};
use crate::config::RunConfig;
use crate::datasets::{
    build_histories, split_interactions, training_examples, Dataset, Example, Interaction, InteractionLog, ItemCatalog, ItemId, Split,
    UserHistory, HISTORY_LEN,
};
use crate::dialogue::{BeliefModel, ItemScorer};
use crate::error::{Error, Result};
use crate::nnkit::{Checkpoint, Mode};
use crate::recommender::{
    belief_embedding, evaluate_rn, refresh_attribute_embeddings, train_rn, AttributeEmbeddings, EmbeddingStore, Rn, RnEvent,
};
use crate::rng::derive_seed;

/// Everything a session needs at inference time. Immutable once built.
#[derive(Clone, Debug)]
pub struct ModelSnapshot {
    pub catalog: ItemCatalog,
    pub btn: Btn,
    pub rn: Rn,
    pub store: EmbeddingStore,
    /// `E^attr` refreshed from the final item embeddings.
    pub attrs: AttributeEmbeddings,
    /// Training-set interaction counts, for the popularity baseline.
    pub popularity: Vec<u64>,
}

impl ModelSnapshot {
    pub fn new(catalog: ItemCatalog, btn: Btn, rn: Rn, store: EmbeddingStore, popularity: Vec<u64>) -> Result<Self> {
        let p = catalog.num_attributes();
        if btn.num_attributes() != p {
            return Err(Error::Config(format!(
                "belief network has {} attributes, catalog has {p}",
                btn.num_attributes()
            )));
        }
        if rn.dim() != store.dim() {
            return Err(Error::Config(format!(
                "recommendation network width {} differs from embeddings {}",
                rn.dim(),
                store.dim()
            )));
        }
        if store.num_items() != catalog.len() || popularity.len() != catalog.len() {
            return Err(Error::Config(format!(
                "embeddings cover {} items, catalog has {}",
                store.num_items(),
                catalog.len()
            )));
        }
        let attrs = refresh_attribute_embeddings(&store, &catalog)?;
        Ok(Self {
            catalog,
            btn,
            rn,
            store,
            attrs,
            popularity,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ckpt = Checkpoint::new();
        self.btn.save_into(&mut ckpt);
        self.rn.save_into(&mut ckpt);
        self.store.save_into(&mut ckpt);
        ckpt.meta.insert("popularity".into(), serde_json::to_value(&self.popularity)?);
        ckpt.save(path)
    }

    pub fn load(path: &Path, catalog: ItemCatalog) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let popularity: Vec<u64> = match ckpt.meta.get("popularity") {
            Some(v) => serde_json::from_value(v.clone())?,
            None => vec![0; catalog.len()],
        };
        Self::new(
            catalog,
            Btn::load_from(&ckpt)?,
            Rn::load_from(&ckpt)?,
            EmbeddingStore::load_from(&ckpt)?,
            popularity,
        )
    }

    fn b_u(&self, history: &UserHistory) -> Vec<f64> {
        history.attribute_matrix(&self.catalog, self.btn.arch().history_len)
    }

    /// `q` for a feedback vector under the eval-mode relation matrix.
    pub fn beliefs(&self, history: &UserHistory, feedback: &[f64]) -> Result<Vec<f64>> {
        Ok(predict_beliefs(&self.relation(history)?, feedback)?.into_inner())
    }
}

impl BeliefModel for ModelSnapshot {
    fn relation(&self, history: &UserHistory) -> Result<RelationMatrix> {
        self.btn
            .relation_matrix(self.store.user(history.user)?, &self.b_u(history), Mode::Eval, 0)
    }

    fn mc_relations(&self, history: &UserHistory, seeds: &[u64]) -> Result<Vec<RelationMatrix>> {
        self.btn
            .mc_relation_matrices(self.store.user(history.user)?, &self.b_u(history), seeds)
    }
}

impl ItemScorer for ModelSnapshot {
    fn scores(&self, history: &UserHistory, q: &[f64], items: &[ItemId]) -> Result<Vec<f64>> {
        let o = belief_embedding(q, &self.attrs)?;
        self.rn.session(&self.store, history, &o)?.scores(items)
    }
}

/// A dataset split into train/validation/test with histories drawn from the
/// training part only.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub catalog: ItemCatalog,
    pub num_users: usize,
    pub split: Split,
    /// Up to `HISTORY_LEN + 1` items per user so a target can be dropped.
    pub histories: Vec<UserHistory>,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub popularity: Vec<u64>,
}

impl Prepared {
    pub fn new(dataset: Dataset, config: &RunConfig) -> Result<Self> {
        let Dataset { catalog, log, policy } = dataset;
        let policy = config.history_policy.unwrap_or(policy);
        let split = split_interactions(log.records(), &config.split_config())?;
        let num_users = log.num_users();
        let histories = build_histories(&split.train, num_users, HISTORY_LEN + 1, policy);
        let train = training_examples(&split.train, &histories);
        let validation = training_examples(&split.validation, &histories);
        let popularity = InteractionLog::item_counts(&split.train, catalog.len());
        Ok(Self {
            catalog,
            num_users,
            split,
            histories,
            train,
            validation,
            popularity,
        })
    }

    /// History used when `record`'s item is the session target.
    pub fn session_history(&self, record: &Interaction) -> UserHistory {
        UserHistory {
            user: Some(record.user),
            items: self.histories[record.user.index()]
                .items
                .iter()
                .copied()
                .filter(|&v| v != record.item)
                .take(HISTORY_LEN)
                .collect(),
        }
    }
}

/// Trains the recommendation network with the shared embeddings, then the
/// belief network on top of the learned user embeddings.
pub fn train_models(data: &Prepared, config: &RunConfig) -> Result<ModelSnapshot> {
    let (rn, store) = train_recommender(data, config)?;
    let btn = train_belief(data, config, &store)?;
    ModelSnapshot::new(data.catalog.clone(), btn, rn, store, data.popularity.clone())
}

pub fn train_recommender(data: &Prepared, config: &RunConfig) -> Result<(Rn, EmbeddingStore)> {
    let dim = config.training.embedding_dim;
    let mut store = EmbeddingStore::random(data.num_users, data.catalog.len(), dim, derive_seed(config.seed, &[1]));
    let mut rn = Rn::new(config.rn.clone(), dim, derive_seed(config.seed, &[2]))?;
    let cfg = config.rn_training();
    train_rn(&mut rn, &mut store, &data.train, &data.catalog, &cfg, |ev| {
        if let RnEvent::Epoch(r) = ev {
            info!("rn epoch {} loss {:.6}", r.epoch, r.loss);
        }
    })?;
    if !data.validation.is_empty() {
        let loss = evaluate_rn(&rn, &store, &data.validation, &data.catalog, cfg.margin, cfg.mask_rate, config.seed)?;
        info!("rn validation loss {loss:.6}");
    }
    Ok((rn, store))
}

/// Writes the recommendation network and the embeddings it trained, the
/// input the belief network is trained on.
pub fn save_recommender(path: &Path, rn: &Rn, store: &EmbeddingStore) -> Result<()> {
    let mut ckpt = Checkpoint::new();
    rn.save_into(&mut ckpt);
    store.save_into(&mut ckpt);
    ckpt.save(path)
}

pub fn load_recommender(path: &Path) -> Result<(Rn, EmbeddingStore)> {
    let ckpt = Checkpoint::load(path)?;
    Ok((Rn::load_from(&ckpt)?, EmbeddingStore::load_from(&ckpt)?))
}

pub fn train_belief(data: &Prepared, config: &RunConfig, store: &EmbeddingStore) -> Result<Btn> {
    let mut btn = Btn::new(
        config.btn.clone(),
        data.catalog.num_attributes(),
        store.dim(),
        derive_seed(config.seed, &[3]),
    )?;
    let cfg = config.btn_training();
    train_btn(&mut btn, &data.train, &data.catalog, store, &cfg, |r| {
        info!("btn epoch {} loss {:.6}", r.epoch, r.loss);
    })?;
    if !data.validation.is_empty() {
        let loss = evaluate_btn(&btn, &data.validation, &data.catalog, store, cfg.mask_rate, config.seed)?;
        info!("btn validation loss {loss:.6}");
    }
    Ok(btn)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::belief::BtnArch;
    use crate::recommender::RnArch;
    use crate::simulation::{generate_world, SyntheticConfig};

    pub(crate) fn tiny_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.training.embedding_dim = 6;
        cfg.training.btn_epochs = 1;
        cfg.training.rn_epochs = 1;
        cfg.training.batch_size = 32;
        cfg.btn = BtnArch {
            conv_channels: 2,
            hidden: 8,
            fc: vec![8],
            ..BtnArch::default()
        };
        cfg.rn = RnArch {
            block1_channels: 2,
            block2_channels: 2,
            preference_hidden: 8,
            scorer_hidden: vec![8],
            ..RnArch::default()
        };
        cfg
    }

    #[test]
    fn snapshot_round_trips_through_a_file() {
        let world = generate_world(&SyntheticConfig::planted_blocks(5)).unwrap();
        let data = Prepared::new(world.dataset, &tiny_config()).unwrap();
        let snap = train_models(&data, &tiny_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        snap.save(&path).unwrap();
        let back = ModelSnapshot::load(&path, data.catalog.clone()).unwrap();
        assert_eq!(back.btn, snap.btn);
        assert_eq!(back.rn, snap.rn);
        assert_eq!(back.store, snap.store);
        assert_eq!(back.attrs, snap.attrs);
        assert_eq!(back.popularity, snap.popularity);
        let h = data.session_history(&data.split.test[0]);
        let q = vec![0.5; data.catalog.num_attributes()];
        let items: Vec<ItemId> = data.catalog.items().collect();
        assert_eq!(snap.scores(&h, &q, &items).unwrap(), back.scores(&h, &q, &items).unwrap());
    }

    #[test]
    fn recommender_checkpoint_round_trips() {
        let store = EmbeddingStore::random(3, 4, 6, 1);
        let rn = Rn::new(tiny_config().rn, 6, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rn.json");
        save_recommender(&path, &rn, &store).unwrap();
        assert_eq!(load_recommender(&path).unwrap(), (rn, store));
    }

    #[test]
    fn mismatched_parts_are_rejected() {
        let cat = ItemCatalog::from_sets([("a", vec![0]), ("b", vec![1])], None).unwrap();
        let store = EmbeddingStore::random(1, 2, 4, 0);
        let btn = Btn::new(BtnArch::default(), 3, 4, 0).unwrap();
        let rn = Rn::new(RnArch::default(), 4, 0).unwrap();
        assert!(ModelSnapshot::new(cat, btn, rn, store, vec![0, 0]).is_err());
    }

    #[test]
    fn session_history_drops_the_target() {
        let world = generate_world(&SyntheticConfig::planted_blocks(5)).unwrap();
        let data = Prepared::new(world.dataset, &tiny_config()).unwrap();
        for r in data.split.test.iter().take(50) {
            let h = data.session_history(r);
            assert!(!h.items.contains(&r.item));
            assert!(h.len() <= HISTORY_LEN);
        }
    }
}
