use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::tsv::{read_rows, Row};
use crate::error::{Error, Result};

macro_rules! dense_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                Self(u32::try_from(i).expect("id fits in u32"))
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

dense_id!(
    /// Dense internal item index.
    ItemId
);
dense_id!(
    /// Dense internal user index.
    UserId
);
dense_id!(
    /// Attribute index in `0..P`.
    AttrId
);

/// Items, their attribute sets and the inverted attribute index.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemCatalog {
    names: Vec<String>,
    lookup: HashMap<String, ItemId>,
    attrs: Vec<Vec<AttrId>>,
    index: Vec<Vec<ItemId>>,
    attr_names: Vec<String>,
}

impl ItemCatalog {
    /// Builds the catalog from `(external id, attribute ids)` entries.
    /// Repeated ids are merged; `num_attrs` defaults to the largest id + 1.
    pub fn from_sets<S: Into<String>>(entries: impl IntoIterator<Item = (S, Vec<usize>)>, num_attrs: Option<usize>) -> Result<Self> {
        let mut names = Vec::new();
        let mut lookup: HashMap<String, ItemId> = HashMap::new();
        let mut sets: Vec<BTreeSet<usize>> = Vec::new();
        for (name, attrs) in entries {
            let name = name.into();
            let id = *lookup.entry(name.clone()).or_insert_with(|| {
                names.push(name);
                sets.push(BTreeSet::new());
                ItemId::from(sets.len() - 1)
            });
            sets[id.index()].extend(attrs);
        }
        if let Some(i) = sets.iter().position(BTreeSet::is_empty) {
            return Err(Error::EmptyAttributes(names[i].clone()));
        }
        let max_seen = sets.iter().filter_map(|s| s.last().copied()).max().map_or(0, |m| m + 1);
        let p = num_attrs.unwrap_or(max_seen);
        if max_seen > p {
            return Err(Error::Config(format!("attribute id {} outside 0..{p}", max_seen - 1)));
        }
        let mut index = vec![Vec::new(); p];
        for (i, set) in sets.iter().enumerate() {
            for &a in set {
                index[a].push(ItemId::from(i));
            }
        }
        for (a, items) in index.iter().enumerate() {
            if items.is_empty() {
                warn!("attribute {a} is attached to no item");
            }
        }
        Ok(Self {
            names,
            lookup,
            attrs: sets.into_iter().map(|s| s.into_iter().map(AttrId::from).collect()).collect(),
            index,
            attr_names: (0..p).map(|a| format!("attr-{a}")).collect(),
        })
    }

    /// Reads `item-id<TAB>attribute-id` rows. A row holding only an item id
    /// declares the item; it must still gain an attribute somewhere.
    pub fn load(path: &Path) -> Result<Self> {
        let mut entries: Vec<(String, Vec<usize>)> = Vec::new();
        for Row { line, fields } in read_rows(path)? {
            let attrs = match fields.get(1) {
                Some(a) => vec![a.parse::<usize>().map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line,
                    message: format!("attribute id `{a}`: {e}"),
                })?],
                None => vec![],
            };
            entries.push((fields[0].clone(), attrs));
        }
        Self::from_sets(entries, None)
    }

    pub fn write_tsv(&self, mut out: impl Write) -> Result<()> {
        for (i, attrs) in self.attrs.iter().enumerate() {
            for a in attrs {
                writeln!(out, "{}\t{}", self.names[i], a)?;
            }
        }
        Ok(())
    }

    /// Reads `attribute-id<TAB>name` rows.
    pub fn load_attribute_names(&mut self, path: &Path) -> Result<()> {
        for Row { line, fields } in read_rows(path)? {
            let bad = |message: String| Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            };
            let id: usize = fields[0].parse().map_err(|e| bad(format!("attribute id: {e}")))?;
            let name = fields.get(1).ok_or_else(|| bad("missing name".into()))?;
            let slot = self
                .attr_names
                .get_mut(id)
                .ok_or_else(|| bad(format!("attribute {id} outside 0..{}", self.index.len())))?;
            *slot = name.clone();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn num_attributes(&self) -> usize {
        self.index.len()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> {
        (0..self.attrs.len()).map(ItemId::from)
    }

    pub fn attributes(&self, item: ItemId) -> &[AttrId] {
        &self.attrs[item.index()]
    }

    pub fn has(&self, item: ItemId, attr: AttrId) -> bool {
        self.attrs[item.index()].binary_search(&attr).is_ok()
    }

    /// `b(v)` as a dense 0/1 vector.
    pub fn binary(&self, item: ItemId) -> Vec<f64> {
        let mut b = vec![0.0; self.num_attributes()];
        for a in &self.attrs[item.index()] {
            b[a.index()] = 1.0;
        }
        b
    }

    /// Inverted index `V[p]`, sorted by item id.
    pub fn items_with(&self, attr: AttrId) -> &[ItemId] {
        &self.index[attr.index()]
    }

    pub fn item_id(&self, name: &str) -> Result<ItemId> {
        self.lookup.get(name).copied().ok_or_else(|| Error::Unknown {
            kind: "item",
            id: name.to_string(),
        })
    }

    pub fn item_name(&self, item: ItemId) -> &str {
        &self.names[item.index()]
    }

    pub fn attribute_name(&self, attr: AttrId) -> &str {
        &self.attr_names[attr.index()]
    }

    pub fn check_attribute(&self, attr: usize) -> Result<AttrId> {
        if attr < self.num_attributes() {
            Ok(AttrId::from(attr))
        } else {
            Err(Error::Unknown {
                kind: "attribute",
                id: attr.to_string(),
            })
        }
    }

    pub fn check_item(&self, item: usize) -> Result<ItemId> {
        if item < self.len() {
            Ok(ItemId::from(item))
        } else {
            Err(Error::Unknown {
                kind: "item",
                id: item.to_string(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::rng::seeded;

    #[test]
    fn inverted_index_from_two_items() {
        let cat = ItemCatalog::from_sets([("0", vec![0]), ("1", vec![0, 1])], None).unwrap();
        assert_eq!(cat.items_with(AttrId(0)), &[ItemId(0), ItemId(1)]);
        assert_eq!(cat.items_with(AttrId(1)), &[ItemId(1)]);
        assert_eq!(cat.binary(ItemId(1)), vec![1.0, 1.0]);
    }

    #[test]
    fn duplicate_listing_is_merged() {
        let cat = ItemCatalog::from_sets([("a", vec![1, 0]), ("a", vec![0, 1]), ("b", vec![1])], None).unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.attributes(ItemId(0)), &[AttrId(0), AttrId(1)]);
        assert_eq!(cat.items_with(AttrId(0)), &[ItemId(0)]);
    }

    #[test]
    fn empty_attribute_set_is_rejected_with_id() {
        let err = ItemCatalog::from_sets([("x", vec![0]), ("lonely", vec![])], None).unwrap_err();
        assert!(matches!(err, Error::EmptyAttributes(ref id) if id == "lonely"));
    }

    #[test]
    fn random_catalog_index_matches_membership_scan() {
        let mut rng = seeded(5);
        let p = 7;
        let entries: Vec<(String, Vec<usize>)> = (0..50)
            .map(|i| {
                let mut attrs: Vec<usize> = (0..p).filter(|_| rng.random_bool(0.3)).collect();
                if attrs.is_empty() {
                    attrs.push(rng.random_range(0..p));
                }
                (format!("item{i}"), attrs)
            })
            .collect();
        let cat = ItemCatalog::from_sets(entries.clone(), Some(p)).unwrap();
        let mut union = BTreeSet::new();
        for a in 0..p {
            let scan: Vec<ItemId> = entries
                .iter()
                .enumerate()
                .filter(|(_, (_, attrs))| attrs.contains(&a))
                .map(|(i, _)| ItemId::from(i))
                .collect();
            assert_eq!(cat.items_with(AttrId::from(a)), scan.as_slice());
            let count = cat.items().filter(|&v| cat.binary(v)[a] == 1.0).count();
            assert_eq!(count, scan.len());
            union.extend(scan);
        }
        assert_eq!(union.len(), cat.len());
    }

    #[test]
    fn tsv_round_trip_preserves_vectors() {
        let cat = ItemCatalog::from_sets([("x", vec![2]), ("y", vec![0, 1, 2]), ("z", vec![1])], None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attrs.tsv");
        let mut buf = Vec::new();
        cat.write_tsv(&mut buf).unwrap();
        std::fs::write(&path, buf).unwrap();
        let back = ItemCatalog::load(&path).unwrap();
        for v in cat.items() {
            let name = cat.item_name(v);
            assert_eq!(back.binary(back.item_id(name).unwrap()), cat.binary(v));
        }
    }
}
