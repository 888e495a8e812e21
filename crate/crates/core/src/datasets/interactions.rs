use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::catalog::{ItemCatalog, ItemId, UserId};
use super::tsv::{read_rows, Row};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// One `(user, item)` record. `value` is a timestamp or a play count,
/// depending on the dataset's [`HistoryPolicy`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub value: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InteractionLog {
    users: Vec<String>,
    lookup: HashMap<String, UserId>,
    records: Vec<Interaction>,
}

impl InteractionLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns an external user id.
    pub fn user(&mut self, name: &str) -> UserId {
        if let Some(&u) = self.lookup.get(name) {
            return u;
        }
        let id = UserId::from(self.users.len());
        self.users.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        id
    }

    pub fn push(&mut self, record: Interaction) -> Result<()> {
        if record.user.index() >= self.users.len() {
            return Err(Error::Unknown {
                kind: "user",
                id: record.user.to_string(),
            });
        }
        self.records.push(record);
        Ok(())
    }

    /// Reads `user-id<TAB>item-id[<TAB>timestamp-or-count]` rows; every item
    /// must exist in `catalog`.
    pub fn load(path: &Path, catalog: &ItemCatalog) -> Result<Self> {
        let mut log = Self::new();
        for Row { line, fields } in read_rows(path)? {
            let bad = |message: String| Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            };
            let item_name = fields.get(1).ok_or_else(|| bad("expected user and item columns".into()))?;
            let item = catalog.item_id(item_name).map_err(|e| bad(e.to_string()))?;
            let value = fields
                .get(2)
                .map(|v| v.parse::<i64>().map_err(|e| bad(format!("value `{v}`: {e}"))))
                .transpose()?;
            let user = log.user(&fields[0]);
            log.records.push(Interaction { user, item, value });
        }
        Ok(log)
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn user_id(&self, name: &str) -> Result<UserId> {
        self.lookup.get(name).copied().ok_or_else(|| Error::Unknown {
            kind: "user",
            id: name.to_string(),
        })
    }

    pub fn user_name(&self, user: UserId) -> &str {
        &self.users[user.index()]
    }

    /// Interaction count per item, the TopPop signal.
    pub fn item_counts(records: &[Interaction], num_items: usize) -> Vec<u64> {
        let mut counts = vec![0; num_items];
        for r in records {
            counts[r.item.index()] += 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [0.7, 0.15, 0.15],
            seed: 123,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

/// Shuffles records under `config.seed` and cuts them at the rounded ratio
/// boundaries, so each part is within one record of its exact share.
pub fn split_interactions(records: &[Interaction], config: &SplitConfig) -> Result<Split> {
    if records.is_empty() {
        return Err(Error::Empty("interaction log"));
    }
    let [r_train, r_val, r_test] = config.ratios;
    if config.ratios.iter().any(|r| *r < 0.0) || ((r_train + r_val + r_test) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {:?} must be non-negative and sum to 1",
            config.ratios
        )));
    }
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(config.seed));
    let n_train = ((n as f64 * r_train).round() as usize).min(n);
    let n_val = ((n as f64 * r_val).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i]).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryPolicy {
    /// Most recent items by timestamp.
    #[default]
    Latest,
    /// Most frequently consumed items by summed count.
    MostFrequent,
}

/// Representative items `H_u`, most representative first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserHistory {
    pub user: Option<UserId>,
    pub items: Vec<ItemId>,
}

impl UserHistory {
    /// `B_u` as a row-major `rows × P` matrix; missing rows are zero.
    pub fn attribute_matrix(&self, catalog: &ItemCatalog, rows: usize) -> Vec<f64> {
        let p = catalog.num_attributes();
        let mut b = vec![0.0; rows * p];
        for (r, &item) in self.items.iter().take(rows).enumerate() {
            for a in catalog.attributes(item) {
                b[r * p + a.index()] = 1.0;
            }
        }
        b
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn rank_items(user: UserId, records: impl Iterator<Item = Interaction>, k: usize, policy: HistoryPolicy) -> UserHistory {
    let mut score: BTreeMap<ItemId, i64> = BTreeMap::new();
    for r in records {
        match policy {
            HistoryPolicy::Latest => {
                let ts = r.value.unwrap_or(i64::MIN);
                score.entry(r.item).and_modify(|s| *s = (*s).max(ts)).or_insert(ts);
            }
            HistoryPolicy::MostFrequent => *score.entry(r.item).or_insert(0) += r.value.unwrap_or(1),
        }
    }
    let mut ranked: Vec<(ItemId, i64)> = score.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    UserHistory {
        user: Some(user),
        items: ranked.into_iter().take(k).map(|(v, _)| v).collect(),
    }
}

/// Top-`k` items of `user` under `policy`; ties go to the lower item id.
pub fn select_history(user: UserId, records: &[Interaction], k: usize, policy: HistoryPolicy) -> UserHistory {
    rank_items(user, records.iter().copied().filter(|r| r.user == user), k, policy)
}

/// [`select_history`] for every user in one pass over `records`.
pub fn build_histories(records: &[Interaction], num_users: usize, k: usize, policy: HistoryPolicy) -> Vec<UserHistory> {
    let mut per_user: Vec<Vec<Interaction>> = vec![Vec::new(); num_users];
    for r in records {
        per_user[r.user.index()].push(*r);
    }
    per_user
        .into_iter()
        .enumerate()
        .map(|(u, rs)| rank_items(UserId::from(u), rs.into_iter(), k, policy))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    fn rec(user: u32, item: u32, value: i64) -> Interaction {
        Interaction {
            user: UserId(user),
            item: ItemId(item),
            value: Some(value),
        }
    }

    #[test]
    fn twenty_records_split_fourteen_three_three() {
        let records: Vec<_> = (0..20).map(|i| rec(0, i, 0)).collect();
        let s = split_interactions(&records, &SplitConfig::default()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (14, 3, 3));
        assert_eq!(s, split_interactions(&records, &SplitConfig::default()).unwrap());
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(split_interactions(&[], &SplitConfig::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn thousand_records_partition_checked_by_sets() {
        let mut rng = seeded(1);
        let records: Vec<_> = (0..1000)
            .map(|i| rec(rng.random_range(0..40), i, rng.random_range(0..100)))
            .collect();
        let s = split_interactions(
            &records,
            &SplitConfig {
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        let sets: Vec<HashSet<Interaction>> = [&s.train, &s.validation, &s.test]
            .iter()
            .map(|p| p.iter().copied().collect())
            .collect();
        assert!(sets[0].is_disjoint(&sets[1]) && sets[0].is_disjoint(&sets[2]) && sets[1].is_disjoint(&sets[2]));
        let union: HashSet<Interaction> = sets.iter().flatten().copied().collect();
        assert_eq!(union, records.iter().copied().collect::<HashSet<_>>());
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (700, 150, 150));
    }

    proptest! {
        #[test]
        fn split_is_deterministic_partition(seed in 0u64..100, n in 1usize..300) {
            let records: Vec<_> = (0..n as u32).map(|i| rec(0, i, 0)).collect();
            let cfg = SplitConfig { seed, ..Default::default() };
            let a = split_interactions(&records, &cfg).unwrap();
            prop_assert_eq!(&a, &split_interactions(&records, &cfg).unwrap());
            let mut items: Vec<u32> = a.train.iter().chain(&a.validation).chain(&a.test).map(|r| r.item.0).collect();
            items.sort_unstable();
            prop_assert_eq!(items, (0..n as u32).collect::<Vec<_>>());
            for (got, ratio) in [(a.train.len(), 0.7), (a.validation.len(), 0.15), (a.test.len(), 0.15)] {
                prop_assert!((got as f64 - n as f64 * ratio).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn short_history_returns_everything() {
        let records = vec![rec(0, 3, 1), rec(0, 1, 2), rec(0, 2, 3), rec(1, 9, 4)];
        let h = select_history(UserId(0), &records, 5, HistoryPolicy::Latest);
        assert_eq!(h.items, vec![ItemId(2), ItemId(1), ItemId(3)]);
    }

    #[test]
    fn latest_takes_top_five_by_timestamp() {
        let records: Vec<_> = (1..=6).map(|i| rec(0, i, 10 * i as i64)).collect();
        let h = select_history(UserId(0), &records, 5, HistoryPolicy::Latest);
        assert_eq!(h.items, (2..=6).rev().map(ItemId).collect::<Vec<_>>());
    }

    #[test]
    fn most_frequent_matches_full_sort() {
        let mut rng = seeded(3);
        let records: Vec<_> = (0..30).map(|i| rec(0, i, rng.random_range(1..6))).collect();
        let h = select_history(UserId(0), &records, 5, HistoryPolicy::MostFrequent);
        let mut sorted = records.clone();
        sorted.sort_by(|a, b| b.value.cmp(&a.value).then(a.item.cmp(&b.item)));
        let expect: Vec<ItemId> = sorted.iter().take(5).map(|r| r.item).collect();
        assert_eq!(h.items, expect);
    }

    #[test]
    fn unknown_user_has_empty_history() {
        let h = select_history(UserId(4), &[rec(0, 1, 1)], 5, HistoryPolicy::Latest);
        assert!(h.is_empty());
        let cat = ItemCatalog::from_sets([("a", vec![0, 1])], None).unwrap();
        assert_eq!(h.attribute_matrix(&cat, 0), Vec::<f64>::new());
        assert_eq!(h.attribute_matrix(&cat, 5), vec![0.0; 10]);
    }

    #[test]
    fn batch_histories_agree_with_single_user_selection() {
        let mut rng = seeded(8);
        let records: Vec<_> = (0..200)
            .map(|_| rec(rng.random_range(0..10), rng.random_range(0..30), rng.random_range(0..50)))
            .collect();
        let all = build_histories(&records, 10, 5, HistoryPolicy::MostFrequent);
        for u in 0..10 {
            assert_eq!(all[u], select_history(UserId(u as u32), &records, 5, HistoryPolicy::MostFrequent));
        }
    }
}
