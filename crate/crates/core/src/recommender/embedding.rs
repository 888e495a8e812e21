use log::warn;
use rand::Rng;

use crate::datasets::{AttrId, ItemCatalog, ItemId, UserHistory, UserId};
use crate::error::{Error, Result};
use crate::nnkit::{Checkpoint, MatrixRecord};
use crate::rng::seeded;

/// Trainable user and item embedding tables, shared by both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    users: Vec<f64>,
    items: Vec<f64>,
    zero: Vec<f64>,
}

impl EmbeddingStore {
    /// Uniform initialization in ±1/√dim.
    pub fn random(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let bound = 1.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| (0..n * dim).map(|_| rng.random_range(-bound..=bound)).collect::<Vec<_>>();
        let users = draw(num_users);
        let items = draw(num_items);
        Self {
            dim,
            users,
            items,
            zero: vec![0.0; dim],
        }
    }

    pub fn from_tables(dim: usize, users: Vec<f64>, items: Vec<f64>) -> Result<Self> {
        if dim == 0 || !users.len().is_multiple_of(dim) || !items.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("embedding tables are not multiples of dim {dim}")));
        }
        if !users.iter().chain(&items).all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite embedding value".into()));
        }
        Ok(Self {
            dim,
            users,
            items,
            zero: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_users(&self) -> usize {
        self.users.len() / self.dim
    }

    pub fn num_items(&self) -> usize {
        self.items.len() / self.dim
    }

    /// `e^user_u`; a cold-start session (`None`) reads a zero row.
    pub fn user(&self, user: Option<UserId>) -> Result<&[f64]> {
        match user {
            None => Ok(&self.zero),
            Some(u) if u.index() < self.num_users() => Ok(&self.users[u.index() * self.dim..(u.index() + 1) * self.dim]),
            Some(u) => Err(Error::Unknown {
                kind: "user",
                id: u.to_string(),
            }),
        }
    }

    pub fn item(&self, item: ItemId) -> Result<&[f64]> {
        if item.index() < self.num_items() {
            Ok(&self.items[item.index() * self.dim..(item.index() + 1) * self.dim])
        } else {
            Err(Error::Unknown {
                kind: "item",
                id: item.to_string(),
            })
        }
    }

    /// `H_u` zero-padded to `rows`, followed by `e^user_u` as the last row.
    pub fn history_with_user(&self, history: &UserHistory, rows: usize) -> Result<Vec<f64>> {
        let mut m = vec![0.0; (rows + 1) * self.dim];
        for (r, &v) in history.items.iter().take(rows).enumerate() {
            m[r * self.dim..(r + 1) * self.dim].copy_from_slice(self.item(v)?);
        }
        m[rows * self.dim..].copy_from_slice(self.user(history.user)?);
        Ok(m)
    }

    pub(crate) fn tables_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.users, &mut self.items)
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        let (users, items) = self.to_records();
        ckpt.matrices.insert("user_embeddings".into(), users);
        ckpt.matrices.insert("item_embeddings".into(), items);
    }

    pub fn load_from(ckpt: &Checkpoint) -> Result<Self> {
        let users = ckpt.matrix("user_embeddings")?;
        let items = ckpt.matrix("item_embeddings")?;
        if users.cols != items.cols || users.values.len() != users.rows * users.cols || items.values.len() != items.rows * items.cols {
            return Err(Error::Shape("embedding tables in checkpoint disagree".into()));
        }
        Self::from_tables(users.cols, users.values.clone(), items.values.clone())
    }

    pub fn to_records(&self) -> (MatrixRecord, MatrixRecord) {
        (
            MatrixRecord {
                rows: self.num_users(),
                cols: self.dim,
                values: self.users.clone(),
            },
            MatrixRecord {
                rows: self.num_items(),
                cols: self.dim,
                values: self.items.clone(),
            },
        )
    }
}

/// `E^attr`: row `p` is the mean item embedding over `V[p]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeEmbeddings {
    dim: usize,
    rows: Vec<f64>,
}

impl AttributeEmbeddings {
    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("attribute table is not a multiple of dim {dim}")));
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_attributes(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, attr: AttrId) -> &[f64] {
        &self.rows[attr.index() * self.dim..(attr.index() + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }
}

pub fn refresh_attribute_embeddings(store: &EmbeddingStore, catalog: &ItemCatalog) -> Result<AttributeEmbeddings> {
    let d = store.dim();
    let p = catalog.num_attributes();
    let mut rows = vec![0.0; p * d];
    for a in 0..p {
        let items = catalog.items_with(AttrId::from(a));
        if items.is_empty() {
            warn!("attribute {a} has no items; its embedding is zero");
            continue;
        }
        let row = &mut rows[a * d..(a + 1) * d];
        for &v in items {
            row.iter_mut().zip(store.item(v)?).for_each(|(r, e)| *r += e);
        }
        let n = items.len() as f64;
        row.iter_mut().for_each(|r| *r /= n);
    }
    Ok(AttributeEmbeddings { dim: d, rows })
}

/// `o = Σ_p q_p E^attr_p`.
pub fn belief_embedding(q: &[f64], attrs: &AttributeEmbeddings) -> Result<Vec<f64>> {
    if q.len() != attrs.num_attributes() {
        return Err(Error::Shape(format!(
            "belief has {} attributes, embeddings have {}",
            q.len(),
            attrs.num_attributes()
        )));
    }
    let d = attrs.dim;
    let mut o = vec![0.0; d];
    for (p, &w) in q.iter().enumerate() {
        if w != 0.0 {
            o.iter_mut().zip(&attrs.rows[p * d..(p + 1) * d]).for_each(|(o, e)| *o += w * e);
        }
    }
    Ok(o)
}
