//! Zero-padded 2-D convolution via im2col.

use super::linalg::gemm;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    /// "Same" padding of `(k - 1) / 2` zeros on every side; returns `None`
    /// when the padded input is smaller than the kernel.
    pub fn new(c: usize, h: usize, w: usize, o: usize, k: usize, stride: usize) -> Option<Self> {
        let pad = (k - 1) / 2;
        if h + 2 * pad < k || w + 2 * pad < k || stride == 0 {
            return None;
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        Some(Self {
            c,
            h,
            w,
            o,
            k,
            stride,
            pad,
            ho,
            wo,
        })
    }

    pub fn patch(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn area(&self) -> usize {
        self.ho * self.wo
    }

    pub fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.o * self.area()
    }

    fn source(&self, out: usize, tap: usize, limit: usize) -> Option<usize> {
        let pos = (out * self.stride + tap).checked_sub(self.pad)?;
        (pos < limit).then_some(pos)
    }
}

fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let area = g.area();
    for ci in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * area..(row + 1) * area];
                for oy in 0..g.ho {
                    let iy = g.source(oy, ki, g.h);
                    for ox in 0..g.wo {
                        dst[oy * g.wo + ox] = match (iy, g.source(ox, kj, g.w)) {
                            (Some(iy), Some(ix)) => x[(ci * g.h + iy) * g.w + ix],
                            _ => 0.0,
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let area = g.area();
    for ci in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &cols[row * area..(row + 1) * area];
                for oy in 0..g.ho {
                    let Some(iy) = g.source(oy, ki, g.h) else {
                        continue;
                    };
                    for ox in 0..g.wo {
                        if let Some(ix) = g.source(ox, kj, g.w) {
                            dx[(ci * g.h + iy) * g.w + ix] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Weights are `[o, c, k, k]`, bias `[o]`; input and output are NCHW.
pub(crate) fn conv_forward(g: &ConvGeom, batch: usize, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let (inl, outl, area) = (g.in_len(), g.out_len(), g.area());
    let mut out = vec![0.0; batch * outl];
    let mut cols = vec![0.0; g.patch() * area];
    for n in 0..batch {
        im2col(g, &x[n * inl..(n + 1) * inl], &mut cols);
        let y = &mut out[n * outl..(n + 1) * outl];
        gemm(g.o, g.patch(), area, w, false, &cols, false, y, 0.0);
        for (oc, row) in y.chunks_mut(area).enumerate() {
            row.iter_mut().for_each(|v| *v += b[oc]);
        }
    }
    out
}

/// Accumulates weight and bias gradients, returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(g: &ConvGeom, batch: usize, x: &[f64], w: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let (inl, outl, area, patch) = (g.in_len(), g.out_len(), g.area(), g.patch());
    let mut dx = vec![0.0; batch * inl];
    let mut cols = vec![0.0; patch * area];
    let mut dcols = vec![0.0; patch * area];
    for n in 0..batch {
        let dy_n = &dy[n * outl..(n + 1) * outl];
        im2col(g, &x[n * inl..(n + 1) * inl], &mut cols);
        gemm(g.o, area, patch, dy_n, false, &cols, true, dw, 1.0);
        for (oc, row) in dy_n.chunks(area).enumerate() {
            db[oc] += row.iter().sum::<f64>();
        }
        gemm(patch, g.o, area, w, true, dy_n, false, &mut dcols, 0.0);
        col2im(g, &dcols, &mut dx[n * inl..(n + 1) * inl]);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution used as an oracle.
    fn direct(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; g.out_len()];
        for oc in 0..g.o {
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let mut acc = b[oc];
                    for ci in 0..g.c {
                        for ki in 0..g.k {
                            for kj in 0..g.k {
                                let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                    continue;
                                }
                                acc += w[((oc * g.c + ci) * g.k + ki) * g.k + kj] * x[(ci * g.h + iy as usize) * g.w + ix as usize];
                            }
                        }
                    }
                    y[(oc * g.ho + oy) * g.wo + ox] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn same_padding_preserves_size_at_stride_one() {
        let g = ConvGeom::new(2, 5, 7, 3, 3, 1).unwrap();
        assert_eq!((g.ho, g.wo), (5, 7));
        let g = ConvGeom::new(2, 5, 7, 3, 3, 2).unwrap();
        assert_eq!((g.ho, g.wo), (3, 4));
    }

    #[test]
    fn matches_direct_convolution() {
        for stride in [1, 2] {
            let g = ConvGeom::new(2, 4, 5, 3, 3, stride).unwrap();
            let x: Vec<f64> = (0..g.in_len()).map(|i| (i as f64 * 0.7).sin()).collect();
            let w: Vec<f64> = (0..g.o * g.patch()).map(|i| (i as f64 * 0.3).cos()).collect();
            let b = [0.1, -0.2, 0.3];
            let y = conv_forward(&g, 1, &x, &w, &b);
            for (a, e) in y.iter().zip(direct(&g, &x, &w, &b)) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }
}
