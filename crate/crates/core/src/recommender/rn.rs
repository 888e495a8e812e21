use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingStore;
use crate::datasets::{ItemId, UserHistory, HISTORY_LEN};
use crate::error::{Error, Result};
use crate::nnkit::{Checkpoint, LayerSpec, Mode, Network, Tensor};

/// Layer widths of the recommendation network. Defaults are the reference
/// sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RnArch {
    pub block1_channels: usize,
    pub block2_channels: usize,
    pub preference_hidden: usize,
    pub scorer_hidden: Vec<usize>,
    pub history_len: usize,
}

impl Default for RnArch {
    fn default() -> Self {
        Self {
            block1_channels: 64,
            block2_channels: 128,
            preference_hidden: 256,
            scorer_hidden: vec![256, 128],
            history_len: HISTORY_LEN,
        }
    }
}

impl RnArch {
    fn input_shape(&self, dim: usize) -> [usize; 3] {
        [1, self.history_len + 1, dim]
    }

    fn specs(&self, dim: usize) -> Result<Vec<LayerSpec>> {
        let mut specs = vec![
            LayerSpec::Residual {
                out_channels: self.block1_channels,
                kernel: 3,
                stride: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Residual {
                out_channels: self.block2_channels,
                kernel: 3,
                stride: 2,
            },
            LayerSpec::Relu,
        ];
        let trunk = Network::new(&self.input_shape(dim), &specs, 0)?;
        specs.extend([
            LayerSpec::Reshape {
                shape: vec![trunk.output_shape().iter().product()],
            },
            LayerSpec::Concat { width: dim, slot: 0 },
            LayerSpec::Dense {
                out: self.preference_hidden,
            },
            LayerSpec::Relu,
            LayerSpec::Dense { out: dim },
            LayerSpec::Concat { width: dim, slot: 1 },
        ]);
        for &w in &self.scorer_hidden {
            specs.extend([LayerSpec::Dense { out: w }, LayerSpec::Relu]);
        }
        specs.push(LayerSpec::Dense { out: 1 });
        Ok(specs)
    }
}

/// Recommendation network. Layers before the item concat map
/// `([H_u; e^user_u], o)` to the preference summary `s`; the rest score
/// `(s, e^item_v)`. Lower scores are better.
#[derive(Clone, Debug, PartialEq)]
pub struct Rn {
    arch: RnArch,
    dim: usize,
    pub(crate) net: Network,
    split: usize,
}

fn item_split(net: &Network) -> usize {
    net.position(|s| matches!(s, LayerSpec::Concat { slot: 1, .. }))
        .expect("recommendation network has an item concat")
}

impl Rn {
    pub fn new(arch: RnArch, dim: usize, seed: u64) -> Result<Self> {
        let net = Network::new(&arch.input_shape(dim), &arch.specs(dim)?, seed)?;
        let split = item_split(&net);
        Ok(Self { arch, dim, net, split })
    }

    pub fn arch(&self) -> &RnArch {
        &self.arch
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    /// Index of the item concat layer; layers before it produce `s`.
    pub fn split(&self) -> usize {
        self.split
    }

    /// Caches `s` for one `(u, H_u, o)` so that many items can be scored.
    pub fn session<'a>(&'a self, store: &'a EmbeddingStore, history: &UserHistory, o: &[f64]) -> Result<SessionScorer<'a>> {
        if o.len() != self.dim || store.dim() != self.dim {
            return Err(Error::Config(format!(
                "belief embedding width {} and store width {} must equal {}",
                o.len(),
                store.dim(),
                self.dim
            )));
        }
        let x = Tensor::new(
            vec![1, 1, self.arch.history_len + 1, self.dim],
            store.history_with_user(history, self.arch.history_len)?,
        )?;
        let o = Tensor::new(vec![1, self.dim], o.to_vec())?;
        let summary = self.net.forward_range(0..self.split, &x, &[&o], Mode::Eval, 0)?;
        Ok(SessionScorer {
            rn: self,
            store,
            summary: summary.into_data(),
        })
    }

    /// `s(u, v)` for a single item.
    pub fn score(&self, store: &EmbeddingStore, history: &UserHistory, item: ItemId, o: &[f64]) -> Result<f64> {
        Ok(self.session(store, history, o)?.scores(&[item])?[0])
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        ckpt.insert_network("rn", &self.net);
        ckpt.meta
            .insert("rn_arch".into(), serde_json::to_value(&self.arch).expect("arch serializes"));
        ckpt.meta.insert("embedding_dim".into(), self.dim.into());
    }

    pub fn load_from(ckpt: &Checkpoint) -> Result<Self> {
        let arch: RnArch = serde_json::from_value(ckpt.meta.get("rn_arch").cloned().unwrap_or_default())?;
        let dim = ckpt
            .meta
            .get("embedding_dim")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Config("checkpoint lacks `embedding_dim`".into()))? as usize;
        let net = ckpt.network("rn")?;
        if net.specs() != arch.specs(dim)? || net.input_shape() != arch.input_shape(dim) {
            return Err(Error::Config("rn checkpoint does not match its recorded architecture".into()));
        }
        let split = item_split(&net);
        Ok(Self { arch, dim, net, split })
    }
}

/// Scores items against a cached preference summary.
pub struct SessionScorer<'a> {
    rn: &'a Rn,
    store: &'a EmbeddingStore,
    summary: Vec<f64>,
}

impl SessionScorer<'_> {
    pub fn summary(&self) -> &[f64] {
        &self.summary
    }

    pub fn scores(&self, items: &[ItemId]) -> Result<Vec<f64>> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let d = self.rn.dim;
        let n = items.len();
        let mut emb = Vec::with_capacity(n * d);
        for &v in items {
            emb.extend_from_slice(self.store.item(v)?);
        }
        let s = Tensor::new(vec![n, d], self.summary.repeat(n))?;
        let e = Tensor::new(vec![n, d], emb)?;
        let out = self
            .rn
            .net
            .forward_range(self.rn.split..self.rn.net.layers().len(), &s, &[&e, &e], Mode::Eval, 0)?;
        Ok(out.into_data())
    }
}

/// The `k` lowest-scoring items, best first; ties go to the lower item id.
pub fn rank_candidates(scored: &[(ItemId, f64)], k: usize) -> Result<Vec<ItemId>> {
    if scored.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    // `+ 0.0` folds −0 into +0 so equal scores tie on id.
    let mut sorted: Vec<(ItemId, f64)> = scored.iter().map(|&(v, s)| (v, s + 0.0)).collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(sorted.into_iter().take(k).map(|(v, _)| v).collect())
}

/// `s_pos² + max(m − s_neg, 0)²`.
pub fn rec_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    s_pos * s_pos + (margin - s_neg).max(0.0).powi(2)
}

/// `(∂/∂s_pos, ∂/∂s_neg)` of [`rec_loss`].
pub fn rec_loss_grad(s_pos: f64, s_neg: f64, margin: f64) -> (f64, f64) {
    (2.0 * s_pos, -2.0 * (margin - s_neg).max(0.0))
}
