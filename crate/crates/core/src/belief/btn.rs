use serde::{Deserialize, Serialize};

use super::relation::RelationMatrix;
use crate::datasets::HISTORY_LEN;
use crate::error::{Error, Result};
use crate::nnkit::{Checkpoint, LayerSpec, Mode, Network, Tensor};

/// Layer widths of the belief network. Defaults are the reference sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BtnArch {
    pub conv_channels: usize,
    pub hidden: usize,
    pub fc: Vec<usize>,
    /// MC-Dropout rate after every hidden dense layer.
    pub dropout: f64,
    pub history_len: usize,
}

impl Default for BtnArch {
    fn default() -> Self {
        Self {
            conv_channels: 64,
            hidden: 128,
            fc: vec![512, 1024],
            dropout: 0.1,
            history_len: HISTORY_LEN,
        }
    }
}

impl BtnArch {
    fn specs(&self, num_attrs: usize, user_dim: usize) -> Vec<LayerSpec> {
        let conv = LayerSpec::Conv2d {
            out_channels: self.conv_channels,
            kernel: 3,
            stride: 1,
        };
        let dropout = LayerSpec::Dropout { rate: self.dropout };
        let mut specs = vec![
            conv.clone(),
            LayerSpec::Relu,
            conv,
            LayerSpec::Relu,
            LayerSpec::Reshape {
                shape: vec![self.conv_channels * self.history_len * num_attrs],
            },
            LayerSpec::Dense { out: self.hidden },
            LayerSpec::Relu,
            dropout.clone(),
            LayerSpec::Concat { width: user_dim, slot: 0 },
        ];
        for &width in &self.fc {
            specs.extend([LayerSpec::Dense { out: width }, LayerSpec::Relu, dropout.clone()]);
        }
        specs.push(LayerSpec::Dense {
            out: num_attrs * num_attrs,
        });
        specs
    }
}

/// Belief tracking network: `(e^user_u, B_u) ↦ Ã ∈ ℝ^{P×P}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Btn {
    arch: BtnArch,
    num_attrs: usize,
    user_dim: usize,
    pub(crate) net: Network,
}

impl Btn {
    pub fn new(arch: BtnArch, num_attrs: usize, user_dim: usize, seed: u64) -> Result<Self> {
        let net = Network::new(&[1, arch.history_len, num_attrs], &arch.specs(num_attrs, user_dim), seed)?;
        Ok(Self {
            arch,
            num_attrs,
            user_dim,
            net,
        })
    }

    pub fn arch(&self) -> &BtnArch {
        &self.arch
    }

    pub fn num_attributes(&self) -> usize {
        self.num_attrs
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    fn inputs(&self, user_emb: &[f64], b_u: &[f64]) -> Result<(Tensor, Tensor)> {
        let width = self.arch.history_len * self.num_attrs;
        if b_u.len() != width {
            return Err(Error::Config(format!(
                "history attribute matrix has {} values, expected {}×{}",
                b_u.len(),
                self.arch.history_len,
                self.num_attrs
            )));
        }
        if user_emb.len() != self.user_dim {
            return Err(Error::Config(format!(
                "user embedding has width {}, expected {}",
                user_emb.len(),
                self.user_dim
            )));
        }
        Ok((
            Tensor::new(vec![1, 1, self.arch.history_len, self.num_attrs], b_u.to_vec())?,
            Tensor::new(vec![1, self.user_dim], user_emb.to_vec())?,
        ))
    }

    /// `A` for one user. `b_u` is `B_u` zero-padded to `history_len` rows.
    pub fn relation_matrix(&self, user_emb: &[f64], b_u: &[f64], mode: Mode, seed: u64) -> Result<RelationMatrix> {
        let (hist, user) = self.inputs(user_emb, b_u)?;
        let raw = self.net.forward(&hist, &[&user], mode, seed)?;
        RelationMatrix::from_raw(raw.data(), self.num_attrs)
    }

    /// One relation matrix per seed with dropout active. The deterministic
    /// prefix before the first dropout layer is computed once.
    pub fn mc_relation_matrices(&self, user_emb: &[f64], b_u: &[f64], seeds: &[u64]) -> Result<Vec<RelationMatrix>> {
        let (hist, user) = self.inputs(user_emb, b_u)?;
        let split = self
            .net
            .position(|s| matches!(s, LayerSpec::Dropout { .. }))
            .unwrap_or(self.net.layers().len());
        let prefix = self.net.forward_range(0..split, &hist, &[&user], Mode::Eval, 0)?;
        seeds
            .iter()
            .map(|&seed| {
                let raw = self
                    .net
                    .forward_range(split..self.net.layers().len(), &prefix, &[&user], Mode::MonteCarlo, seed)?;
                RelationMatrix::from_raw(raw.data(), self.num_attrs)
            })
            .collect()
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        ckpt.insert_network("btn", &self.net);
        ckpt.meta
            .insert("btn_arch".into(), serde_json::to_value(&self.arch).expect("arch serializes"));
        ckpt.meta.insert("num_attributes".into(), self.num_attrs.into());
        ckpt.meta.insert("user_dim".into(), self.user_dim.into());
    }

    pub fn load_from(ckpt: &Checkpoint) -> Result<Self> {
        let arch: BtnArch = serde_json::from_value(ckpt.meta.get("btn_arch").cloned().unwrap_or_default())?;
        let meta_usize = |k: &str| {
            ckpt.meta
                .get(k)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks `{k}`")))
        };
        let (num_attrs, user_dim) = (meta_usize("num_attributes")?, meta_usize("user_dim")?);
        let net = ckpt.network("btn")?;
        let expected = Network::new(&[1, arch.history_len, num_attrs], &arch.specs(num_attrs, user_dim), 0)?;
        if expected.specs() != net.specs() || expected.input_shape() != net.input_shape() {
            return Err(Error::Config("btn checkpoint does not match its recorded architecture".into()));
        }
        Ok(Self {
            arch,
            num_attrs,
            user_dim,
            net,
        })
    }
}
