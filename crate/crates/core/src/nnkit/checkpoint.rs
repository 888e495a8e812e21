//! Self-describing JSON checkpoints. Floats are written in shortest
//! round-trip form and parsed exactly, so save/load is value-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{LayerSpec, Param};
use super::network::Network;
use crate::error::{Error, Result};

pub const FORMAT: &str = "elicit-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub spec: LayerSpec,
    pub params: Vec<Param>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerRecord>,
}

impl From<&Network> for NetworkRecord {
    fn from(net: &Network) -> Self {
        Self {
            input_shape: net.input_shape().to_vec(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    spec: l.spec.clone(),
                    params: l.params.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkRecord> for Network {
    type Error = Error;

    fn try_from(rec: NetworkRecord) -> Result<Self> {
        let specs: Vec<LayerSpec> = rec.layers.iter().map(|l| l.spec.clone()).collect();
        let params = rec.layers.into_iter().flat_map(|l| l.params).collect();
        Network::from_parts(&rec.input_shape, &specs, params)
    }
}

/// Row-major matrix stored alongside networks (embedding tables).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub meta: BTreeMap<String, serde_json::Value>,
    pub networks: BTreeMap<String, NetworkRecord>,
    pub matrices: BTreeMap<String, MatrixRecord>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self {
            format: FORMAT.to_string(),
            ..Default::default()
        }
    }

    pub fn insert_network(&mut self, name: &str, net: &Network) {
        self.networks.insert(name.to_string(), net.into());
    }

    pub fn network(&self, name: &str) -> Result<Network> {
        let rec = self.networks.get(name).ok_or_else(|| Error::Unknown {
            kind: "checkpoint network",
            id: name.to_string(),
        })?;
        rec.clone().try_into()
    }

    pub fn matrix(&self, name: &str) -> Result<&MatrixRecord> {
        self.matrices.get(name).ok_or_else(|| Error::Unknown {
            kind: "checkpoint matrix",
            id: name.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if ckpt.format != FORMAT {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint format `{}`",
                path.display(),
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}
