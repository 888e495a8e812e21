use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv_backward, conv_forward, ConvGeom};
use super::linalg::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// One entry of a sequential network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected, `y = W x + b`, on flat samples.
    Dense {
        out: usize,
    },
    /// Zero "same"-padded convolution on `[channels, height, width]` samples.
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    /// Inverted dropout; active in [`Mode::Train`] and [`Mode::MonteCarlo`].
    Dropout {
        rate: f64,
    },
    /// `conv(relu(conv(x))) + shortcut(x)`, where the shortcut is the
    /// identity when shapes agree and a strided 1×1 convolution otherwise.
    /// The first convolution carries the stride.
    Residual {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Reshape {
        shape: Vec<usize>,
    },
    /// Appends side input `slot` (a `[batch, width]` tensor) to flat samples.
    Concat {
        width: usize,
        slot: usize,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Residual { .. } => "residual",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Concat { .. } => "concat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
    /// Evaluation with dropout kept active, for MC-Dropout sampling.
    MonteCarlo,
}

impl Mode {
    fn dropout_active(self) -> bool {
        !matches!(self, Mode::Eval)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Param {
    fn uniform(shape: Vec<usize>, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { shape, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub params: Vec<Param>,
}

/// Per-layer state kept by a traced forward pass.
#[derive(Clone, Debug)]
pub(crate) enum Cache {
    None,
    Mask(Vec<f64>),
    /// Pre-activation of the first residual convolution.
    Hidden(Vec<f64>),
}

pub(crate) struct LayerGrad {
    pub input: Tensor,
    pub params: Vec<Vec<f64>>,
    pub side: Option<(usize, Tensor)>,
}

fn conv_geom(index: usize, kind: &'static str, in_shape: &[usize], o: usize, k: usize, s: usize) -> Result<ConvGeom> {
    let &[c, h, w] = in_shape else {
        return Err(Error::layer(
            index,
            kind,
            format!("expects [channels, height, width] samples, got {in_shape:?}"),
        ));
    };
    if k == 0 || s == 0 || o == 0 {
        return Err(Error::layer(index, kind, "kernel, stride and channels must be >= 1"));
    }
    ConvGeom::new(c, h, w, o, k, s).ok_or_else(|| Error::layer(index, kind, format!("kernel {k} does not fit input {in_shape:?}")))
}

fn flat_width(index: usize, kind: &'static str, in_shape: &[usize]) -> Result<usize> {
    match in_shape {
        [n] => Ok(*n),
        _ => Err(Error::layer(
            index,
            kind,
            format!("expects flat samples, got {in_shape:?} (insert a reshape)"),
        )),
    }
}

struct ResidualGeoms {
    first: ConvGeom,
    second: ConvGeom,
    shortcut: Option<ConvGeom>,
}

fn residual_geoms(index: usize, in_shape: &[usize], o: usize, k: usize, s: usize) -> Result<ResidualGeoms> {
    let first = conv_geom(index, "residual", in_shape, o, k, s)?;
    let second = conv_geom(index, "residual", &[o, first.ho, first.wo], o, k, 1)?;
    let shortcut = if in_shape[0] != o || s != 1 {
        let g = conv_geom(index, "residual", in_shape, o, 1, s)?;
        if (g.ho, g.wo) != (first.ho, first.wo) {
            return Err(Error::layer(index, "residual", "shortcut shape differs from inner path"));
        }
        Some(g)
    } else {
        None
    };
    Ok(ResidualGeoms { first, second, shortcut })
}

impl Layer {
    pub(crate) fn build(index: usize, spec: LayerSpec, in_shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        let kind = spec.kind();
        let (out_shape, params) = match &spec {
            LayerSpec::Dense { out } => {
                let n_in = flat_width(index, kind, in_shape)?;
                if *out == 0 || n_in == 0 {
                    return Err(Error::layer(index, kind, "zero-width dense layer"));
                }
                let bound = 1.0 / (n_in as f64).sqrt();
                (
                    vec![*out],
                    vec![Param::uniform(vec![*out, n_in], bound, rng), Param::uniform(vec![*out], bound, rng)],
                )
            }
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
            } => {
                let g = conv_geom(index, kind, in_shape, *out_channels, *kernel, *stride)?;
                let bound = 1.0 / (g.patch() as f64).sqrt();
                (
                    vec![g.o, g.ho, g.wo],
                    vec![
                        Param::uniform(vec![g.o, g.c, g.k, g.k], bound, rng),
                        Param::uniform(vec![g.o], bound, rng),
                    ],
                )
            }
            LayerSpec::Relu => (in_shape.to_vec(), vec![]),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::layer(index, kind, format!("rate {rate} outside [0, 1)")));
                }
                (in_shape.to_vec(), vec![])
            }
            LayerSpec::Residual {
                out_channels,
                kernel,
                stride,
            } => {
                let gs = residual_geoms(index, in_shape, *out_channels, *kernel, *stride)?;
                let mut params = Vec::new();
                for g in [Some(gs.first), Some(gs.second), gs.shortcut].into_iter().flatten() {
                    let bound = 1.0 / (g.patch() as f64).sqrt();
                    params.push(Param::uniform(vec![g.o, g.c, g.k, g.k], bound, rng));
                    params.push(Param::uniform(vec![g.o], bound, rng));
                }
                (vec![gs.second.o, gs.second.ho, gs.second.wo], params)
            }
            LayerSpec::Reshape { shape } => {
                let from: usize = in_shape.iter().product();
                let to: usize = shape.iter().product();
                if from != to {
                    return Err(Error::layer(index, kind, format!("cannot reshape {in_shape:?} into {shape:?}")));
                }
                (shape.clone(), vec![])
            }
            LayerSpec::Concat { width, .. } => {
                let n = flat_width(index, kind, in_shape)?;
                (vec![n + width], vec![])
            }
        };
        Ok(Self {
            spec,
            in_shape: in_shape.to_vec(),
            out_shape,
            params,
        })
    }

    fn batched(&self, batch: usize, data: Vec<f64>) -> Tensor {
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.out_shape);
        Tensor::new(shape, data).expect("layer output matches inferred shape")
    }

    pub(crate) fn forward(&self, index: usize, x: &Tensor, side: &[&Tensor], mode: Mode, seed: u64) -> Result<(Tensor, Cache)> {
        let batch = x.batch();
        let kind = self.spec.kind();
        match &self.spec {
            LayerSpec::Dense { out } => {
                let n_in = self.in_shape[0];
                let mut y = vec![0.0; batch * out];
                gemm(batch, n_in, *out, x.data(), false, &self.params[0].values, true, &mut y, 0.0);
                let bias = &self.params[1].values;
                for row in y.chunks_mut(*out) {
                    row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
                }
                Ok((self.batched(batch, y), Cache::None))
            }
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
            } => {
                let g = conv_geom(index, kind, &self.in_shape, *out_channels, *kernel, *stride)?;
                let y = conv_forward(&g, batch, x.data(), &self.params[0].values, &self.params[1].values);
                Ok((self.batched(batch, y), Cache::None))
            }
            LayerSpec::Relu => {
                let y = x.data().iter().map(|v| v.max(0.0)).collect();
                Ok((self.batched(batch, y), Cache::None))
            }
            LayerSpec::Dropout { rate } => {
                if *rate == 0.0 || !mode.dropout_active() {
                    return Ok((self.batched(batch, x.data().to_vec()), Cache::None));
                }
                let mut rng = seeded(derive_seed(seed, &[index as u64]));
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len()).map(|_| if rng.random::<f64>() < *rate { 0.0 } else { keep }).collect();
                let y = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                Ok((self.batched(batch, y), Cache::Mask(mask)))
            }
            LayerSpec::Residual {
                out_channels,
                kernel,
                stride,
            } => {
                let gs = residual_geoms(index, &self.in_shape, *out_channels, *kernel, *stride)?;
                let p = &self.params;
                let hidden = conv_forward(&gs.first, batch, x.data(), &p[0].values, &p[1].values);
                let activated: Vec<f64> = hidden.iter().map(|v| v.max(0.0)).collect();
                let mut y = conv_forward(&gs.second, batch, &activated, &p[2].values, &p[3].values);
                match gs.shortcut {
                    Some(g) => {
                        let s = conv_forward(&g, batch, x.data(), &p[4].values, &p[5].values);
                        y.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                    }
                    None => y.iter_mut().zip(x.data()).for_each(|(a, b)| *a += b),
                }
                Ok((self.batched(batch, y), Cache::Hidden(hidden)))
            }
            LayerSpec::Reshape { .. } => Ok((self.batched(batch, x.data().to_vec()), Cache::None)),
            LayerSpec::Concat { width, slot } => {
                let extra = side
                    .get(*slot)
                    .ok_or_else(|| Error::layer(index, kind, format!("side input {slot} not supplied")))?;
                if extra.shape() != [batch, *width] {
                    return Err(Error::layer(
                        index,
                        kind,
                        format!("side input {slot} has shape {:?}, expected [{batch}, {width}]", extra.shape()),
                    ));
                }
                let n = self.in_shape[0];
                let mut y = Vec::with_capacity(batch * (n + width));
                for i in 0..batch {
                    y.extend_from_slice(x.sample(i));
                    y.extend_from_slice(extra.sample(i));
                }
                Ok((self.batched(batch, y), Cache::None))
            }
        }
    }

    pub(crate) fn backward(&self, index: usize, x: &Tensor, cache: &Cache, dy: &Tensor) -> Result<LayerGrad> {
        let batch = x.batch();
        let kind = self.spec.kind();
        let input_like = |data: Vec<f64>| Tensor::new(x.shape().to_vec(), data).expect("input gradient shape");
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|p| vec![0.0; p.len()]).collect();
        let mut side = None;
        let dx = match &self.spec {
            LayerSpec::Dense { out } => {
                let n_in = self.in_shape[0];
                gemm(*out, batch, n_in, dy.data(), true, x.data(), false, &mut grads[0], 0.0);
                for row in dy.data().chunks(*out) {
                    grads[1].iter_mut().zip(row).for_each(|(g, d)| *g += d);
                }
                let mut dx = vec![0.0; batch * n_in];
                gemm(batch, *out, n_in, dy.data(), false, &self.params[0].values, false, &mut dx, 0.0);
                dx
            }
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                stride,
            } => {
                let g = conv_geom(index, kind, &self.in_shape, *out_channels, *kernel, *stride)?;
                let (dw, rest) = grads.split_at_mut(1);
                conv_backward(&g, batch, x.data(), &self.params[0].values, dy.data(), &mut dw[0], &mut rest[0])
            }
            LayerSpec::Relu => x
                .data()
                .iter()
                .zip(dy.data())
                .map(|(v, d)| if *v > 0.0 { *d } else { 0.0 })
                .collect(),
            LayerSpec::Dropout { .. } => match cache {
                Cache::Mask(mask) => dy.data().iter().zip(mask).map(|(d, m)| d * m).collect(),
                _ => dy.data().to_vec(),
            },
            LayerSpec::Residual {
                out_channels,
                kernel,
                stride,
            } => {
                let Cache::Hidden(hidden) = cache else {
                    return Err(Error::MissingTrace);
                };
                let gs = residual_geoms(index, &self.in_shape, *out_channels, *kernel, *stride)?;
                let p = &self.params;
                let activated: Vec<f64> = hidden.iter().map(|v| v.max(0.0)).collect();
                let (g01, g_rest) = grads.split_at_mut(2);
                let (g23, g45) = g_rest.split_at_mut(2);
                let (dw2, db2) = g23.split_at_mut(1);
                let d_act = conv_backward(&gs.second, batch, &activated, &p[2].values, dy.data(), &mut dw2[0], &mut db2[0]);
                let d_hidden: Vec<f64> = d_act.iter().zip(hidden).map(|(d, h)| if *h > 0.0 { *d } else { 0.0 }).collect();
                let (dw1, db1) = g01.split_at_mut(1);
                let mut dx = conv_backward(&gs.first, batch, x.data(), &p[0].values, &d_hidden, &mut dw1[0], &mut db1[0]);
                match gs.shortcut {
                    Some(g) => {
                        let (dws, dbs) = g45.split_at_mut(1);
                        let ds = conv_backward(&g, batch, x.data(), &p[4].values, dy.data(), &mut dws[0], &mut dbs[0]);
                        dx.iter_mut().zip(ds).for_each(|(a, b)| *a += b);
                    }
                    None => dx.iter_mut().zip(dy.data()).for_each(|(a, b)| *a += b),
                }
                dx
            }
            LayerSpec::Reshape { .. } => dy.data().to_vec(),
            LayerSpec::Concat { width, slot } => {
                let n = self.in_shape[0];
                let mut dx = Vec::with_capacity(batch * n);
                let mut ds = Vec::with_capacity(batch * width);
                for row in dy.data().chunks(n + width) {
                    dx.extend_from_slice(&row[..n]);
                    ds.extend_from_slice(&row[n..]);
                }
                side = Some((*slot, Tensor::new(vec![batch, *width], ds)?));
                dx
            }
        };
        Ok(LayerGrad {
            input: input_like(dx),
            params: grads,
            side,
        })
    }
}
