use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, HistoryPolicy, Interaction, InteractionLog, ItemCatalog, ItemId};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Generator for seeded toy worlds. Every item belongs to one latent
/// cluster and draws attribute `p` with probability `attribute_probs[c][p]`.
/// Users favour one cluster and pick items by a power-law popularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_items: usize,
    pub num_users: usize,
    pub interactions_per_user: usize,
    /// Row per cluster, column per attribute.
    pub attribute_probs: Vec<Vec<f64>>,
    /// Probability that an interaction stays inside the user's cluster.
    pub affinity: f64,
    /// Popularity weight of the `r`-th item is `(r + 1)^-exponent`.
    pub popularity_exponent: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Eight attributes in two blocks of four: attributes co-occur within a
    /// block and rarely across blocks.
    pub fn planted_blocks(seed: u64) -> Self {
        let block = |on: bool| if on { 0.7 } else { 0.08 };
        let row = |c: usize| (0..8).map(|p| block(p / 4 == c)).collect();
        Self {
            num_items: 120,
            num_users: 60,
            interactions_per_user: 12,
            attribute_probs: vec![row(0), row(1)],
            affinity: 0.9,
            popularity_exponent: 0.0,
            seed,
        }
    }

    /// Twelve attributes of which only one splits the catalog: attribute 0
    /// has prevalence 0.5, attributes 1..=8 are near-universal and 9..=11
    /// near-absent. 200 items, uniform popularity, no user clusters.
    pub fn single_informative(seed: u64) -> Self {
        let mut row = vec![0.5];
        row.extend([0.99; 8]);
        row.extend([0.01; 3]);
        Self {
            num_items: 200,
            num_users: 400,
            interactions_per_user: 10,
            attribute_probs: vec![row],
            affinity: 0.5,
            popularity_exponent: 0.0,
            seed,
        }
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_probs.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let p = self.num_attributes();
        if self.num_items == 0 || self.num_users == 0 || p == 0 {
            return Err(Error::Config("synthetic world needs items, users and attributes".into()));
        }
        if self
            .attribute_probs
            .iter()
            .any(|r| r.len() != p || r.iter().any(|q| !(0.0..=1.0).contains(q)))
        {
            return Err(Error::Config("attribute probabilities must be a rectangular grid in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.affinity) {
            return Err(Error::Config("affinity must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A generated dataset plus each item's latent cluster.
#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub dataset: Dataset,
    pub clusters: Vec<usize>,
}

pub fn generate_world(config: &SyntheticConfig) -> Result<SyntheticWorld> {
    config.validate()?;
    let p = config.num_attributes();
    let k = config.attribute_probs.len();
    let mut rng = seeded(derive_seed(config.seed, &[0]));
    let mut clusters = Vec::with_capacity(config.num_items);
    let mut entries = Vec::with_capacity(config.num_items);
    for v in 0..config.num_items {
        let c = v % k;
        let probs = &config.attribute_probs[c];
        let mut attrs: Vec<usize> = (0..p).filter(|&a| rng.random_bool(probs[a])).collect();
        if attrs.is_empty() {
            // Fall back to the cluster's most likely attribute.
            let best = (0..p).fold(0, |b, a| if probs[a] > probs[b] { a } else { b });
            attrs.push(best);
        }
        clusters.push(c);
        entries.push((format!("item-{v}"), attrs));
    }
    let catalog = ItemCatalog::from_sets(entries, Some(p))?;

    let weight = |v: usize| ((v / k) as f64 + 1.0).powf(-config.popularity_exponent);
    let by_cluster: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..config.num_items).filter(|&v| clusters[v] == c).collect())
        .collect();
    let pickers = by_cluster
        .iter()
        .map(|vs| WeightedIndex::new(vs.iter().map(|&v| weight(v))))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Config(format!("popularity weights: {e}")))?;
    let global = WeightedIndex::new((0..config.num_items).map(weight)).map_err(|e| Error::Config(format!("popularity weights: {e}")))?;

    let mut log = InteractionLog::new();
    let mut rng = seeded(derive_seed(config.seed, &[1]));
    let mut clock = 0i64;
    for u in 0..config.num_users {
        let user = log.user(&format!("user-{u}"));
        let home = rng.random_range(0..k);
        for _ in 0..config.interactions_per_user {
            let v = if rng.random_bool(config.affinity) {
                by_cluster[home][pickers[home].sample(&mut rng)]
            } else {
                global.sample(&mut rng)
            };
            clock += 1;
            log.push(Interaction {
                user,
                item: ItemId::from(v),
                value: Some(clock),
            })?;
        }
    }
    Ok(SyntheticWorld {
        dataset: Dataset {
            catalog,
            log,
            policy: HistoryPolicy::Latest,
        },
        clusters,
    })
}
