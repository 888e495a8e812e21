//! Item catalogs, interaction logs, representative histories and splits.

mod catalog;
mod interactions;
mod tsv;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use catalog::{AttrId, ItemCatalog, ItemId, UserId};
pub use interactions::{
    build_histories, select_history, split_interactions, HistoryPolicy, Interaction, InteractionLog, Split, SplitConfig, UserHistory,
};

use crate::error::Result;

/// Number of representative history items fed to both networks.
pub const HISTORY_LEN: usize = 5;

/// TOML file naming a dataset's files; relative paths resolve against the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub interactions: PathBuf,
    pub item_attributes: PathBuf,
    #[serde(default)]
    pub attribute_names: Option<PathBuf>,
    #[serde(default)]
    pub history_policy: HistoryPolicy,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Self = toml::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.interactions = base.join(&m.interactions);
        m.item_attributes = base.join(&m.item_attributes);
        m.attribute_names = m.attribute_names.map(|p| base.join(p));
        Ok(m)
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub catalog: ItemCatalog,
    pub log: InteractionLog,
    pub policy: HistoryPolicy,
}

impl Dataset {
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let mut catalog = ItemCatalog::load(&manifest.item_attributes)?;
        if let Some(names) = &manifest.attribute_names {
            catalog.load_attribute_names(names)?;
        }
        let log = InteractionLog::load(&manifest.interactions, &catalog)?;
        Ok(Self {
            catalog,
            log,
            policy: manifest.history_policy,
        })
    }

    pub fn from_manifest_path(path: &Path) -> Result<Self> {
        Self::load(&DatasetManifest::load(path)?)
    }
}

/// A training pair `(u, v)` with the user's history, `v` excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub user: UserId,
    pub item: ItemId,
    pub history: UserHistory,
}

/// Pairs every record with its user's history minus the target item.
/// `histories` should hold at least `HISTORY_LEN + 1` items per user so the
/// exclusion still leaves a full history.
pub fn training_examples(records: &[Interaction], histories: &[UserHistory]) -> Vec<Example> {
    records
        .iter()
        .map(|r| Example {
            user: r.user,
            item: r.item,
            history: UserHistory {
                user: Some(r.user),
                items: histories[r.user.index()]
                    .items
                    .iter()
                    .copied()
                    .filter(|&v| v != r.item)
                    .take(HISTORY_LEN)
                    .collect(),
            },
        })
        .collect()
}
