use rand::Rng;

use super::gradcheck::check_network;
use super::*;
use crate::error::Error;
use crate::rng::seeded;

fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn conv(out_channels: usize, kernel: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        out_channels,
        kernel,
        stride,
    }
}

#[test]
fn identity_kernel_reproduces_input() {
    let mut net = Network::new(&[2, 4, 5], &[conv(2, 3, 1)], 1).unwrap();
    {
        let mut params = net.params_mut();
        let w = params.next().unwrap();
        w.values.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..2 {
            // [o, c, 3, 3] centre tap of the diagonal channel pair.
            w.values[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        params.next().unwrap().values.iter_mut().for_each(|v| *v = 0.0);
    }
    let x = random_tensor(vec![3, 2, 4, 5], 9);
    let y = net.forward(&x, &[], Mode::Eval, 0).unwrap();
    assert_eq!(y, x);
}

#[test]
fn zero_dense_outputs_bias() {
    let mut net = Network::new(&[6], &[LayerSpec::Dense { out: 3 }], 2).unwrap();
    let mut params = net.params_mut();
    params.next().unwrap().values.iter_mut().for_each(|v| *v = 0.0);
    params.next().unwrap().values = vec![0.5, -1.0, 2.0];
    drop(params);
    let y = net.forward(&random_tensor(vec![4, 6], 3), &[], Mode::Eval, 0).unwrap();
    for row in y.data().chunks(3) {
        assert_eq!(row, &[0.5, -1.0, 2.0]);
    }
}

/// Straightforward nested loops for conv(3×3, same) → ReLU → flatten → dense.
fn loop_oracle(x: &[f64], c: usize, h: usize, w: usize, net: &Network) -> Vec<f64> {
    let params: Vec<&Param> = net.params().collect();
    let (cw, cb, dw, db) = (&params[0].values, &params[1].values, &params[2].values, &params[3].values);
    let o = params[1].len();
    let mut hidden = vec![0.0; o * h * w];
    for oc in 0..o {
        for i in 0..h {
            for j in 0..w {
                let mut acc = cb[oc];
                for ic in 0..c {
                    for di in 0..3 {
                        for dj in 0..3 {
                            let (ii, jj) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                            if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                                acc += cw[((oc * c + ic) * 3 + di) * 3 + dj] * x[(ic * h + ii as usize) * w + jj as usize];
                            }
                        }
                    }
                }
                hidden[(oc * h + i) * w + j] = acc.max(0.0);
            }
        }
    }
    let out = db.len();
    (0..out)
        .map(|r| db[r] + (0..hidden.len()).map(|k| dw[r * hidden.len() + k] * hidden[k]).sum::<f64>())
        .collect()
}

#[test]
fn random_two_layer_net_matches_loop_oracle() {
    for seed in 0..5 {
        let specs = [
            conv(3, 3, 1),
            LayerSpec::Relu,
            LayerSpec::Reshape { shape: vec![48] },
            LayerSpec::Dense { out: 5 },
        ];
        let net = Network::new(&[1, 4, 4], &specs, seed).unwrap();
        let x = random_tensor(vec![2, 1, 4, 4], 100 + seed);
        let y = net.forward(&x, &[], Mode::Eval, 0).unwrap();
        for b in 0..2 {
            let expect = loop_oracle(x.sample(b), 1, 4, 4, &net);
            for (a, e) in y.sample(b).iter().zip(expect) {
                assert!((a - e).abs() < 1e-10, "{a} vs {e}");
            }
        }
    }
}

#[test]
fn linear_input_gradient_is_weight_column_sums() {
    let net = Network::new(&[4], &[LayerSpec::Dense { out: 3 }], 5).unwrap();
    let x = random_tensor(vec![1, 4], 6);
    let (y, trace) = net.forward_traced(&x, &[], Mode::Train, 0).unwrap();
    let g = net.backward(&trace, &Tensor::filled(y.shape().to_vec(), 1.0)).unwrap();
    let w = &net.params().next().unwrap().values;
    for col in 0..4 {
        let sum: f64 = (0..3).map(|r| w[r * 4 + col]).sum();
        assert!((g.input.data()[col] - sum).abs() < 1e-14);
    }
}

#[test]
fn relu_blocks_gradient_at_negative_preactivation() {
    let net = Network::new(&[3], &[LayerSpec::Relu], 0).unwrap();
    let x = Tensor::new(vec![1, 3], vec![-0.5, 0.2, -3.0]).unwrap();
    let (_, trace) = net.forward_traced(&x, &[], Mode::Train, 0).unwrap();
    let g = net.backward(&trace, &Tensor::filled(vec![1, 3], 1.0)).unwrap();
    assert_eq!(g.input.data(), &[0.0, 1.0, 0.0]);
}

fn assert_gradcheck(net: &Network, input: &Tensor, side: &[&Tensor], seed: u64) {
    let report = check_network(net, input, side, Mode::Train, seed, 1e-5).unwrap();
    assert!(
        report.max_relative_error < 1e-4,
        "{:?} max relative error {} at {:?}",
        net.specs(),
        report.max_relative_error,
        report.worst
    );
}

#[test]
fn gradient_check_every_layer_kind() {
    let mut rng = seeded(77);
    for case in 0..20u64 {
        let c = rng.random_range(1..=2);
        let h = rng.random_range(2..=4);
        let w = rng.random_range(2..=5);
        let o = rng.random_range(1..=3);
        let stride = rng.random_range(1..=2);
        let batch = rng.random_range(1..=2);
        let x = random_tensor(vec![batch, c, h, w], 1000 + case);

        let net = Network::new(&[c, h, w], &[conv(o, 3, stride)], case).unwrap();
        assert_gradcheck(&net, &x, &[], case);

        let net = Network::new(
            &[c, h, w],
            &[LayerSpec::Residual {
                out_channels: o,
                kernel: 3,
                stride,
            }],
            case,
        )
        .unwrap();
        assert_gradcheck(&net, &x, &[], case);

        // Identity-shortcut residual.
        let net = Network::new(
            &[c, h, w],
            &[LayerSpec::Residual {
                out_channels: c,
                kernel: 3,
                stride: 1,
            }],
            case,
        )
        .unwrap();
        assert_gradcheck(&net, &x, &[], case);

        let flat = c * h * w;
        let width = rng.random_range(1..=3);
        let side = random_tensor(vec![batch, width], 2000 + case);
        let net = Network::new(
            &[c, h, w],
            &[
                LayerSpec::Reshape { shape: vec![flat] },
                LayerSpec::Dense { out: 4 },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.3 },
                LayerSpec::Concat { width, slot: 0 },
                LayerSpec::Dense { out: 2 },
            ],
            case,
        )
        .unwrap();
        assert_gradcheck(&net, &x, &[&side], case);
    }
}

#[test]
fn dropout_rate_zero_is_identity_in_all_modes() {
    let net = Network::new(&[5], &[LayerSpec::Dropout { rate: 0.0 }], 0).unwrap();
    let x = random_tensor(vec![3, 5], 4);
    for mode in [Mode::Train, Mode::Eval, Mode::MonteCarlo] {
        assert_eq!(net.forward(&x, &[], mode, 99).unwrap(), x);
    }
}

#[test]
fn dropout_is_inactive_in_eval_and_seeded_otherwise() {
    let net = Network::new(&[50], &[LayerSpec::Dropout { rate: 0.5 }], 0).unwrap();
    let x = Tensor::filled(vec![1, 50], 1.0);
    assert_eq!(net.forward(&x, &[], Mode::Eval, 1).unwrap(), x);
    let a = net.forward(&x, &[], Mode::MonteCarlo, 1).unwrap();
    let b = net.forward(&x, &[], Mode::MonteCarlo, 1).unwrap();
    let c = net.forward(&x, &[], Mode::MonteCarlo, 2).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.data().iter().all(|v| *v == 0.0 || *v == 2.0));
}

#[test]
fn forward_is_bit_deterministic() {
    let specs = [
        LayerSpec::Residual {
            out_channels: 4,
            kernel: 3,
            stride: 2,
        },
        LayerSpec::Relu,
        LayerSpec::Reshape { shape: vec![4 * 3 * 3] },
        LayerSpec::Dense { out: 6 },
        LayerSpec::Dropout { rate: 0.2 },
    ];
    let net = Network::new(&[2, 6, 5], &specs, 42).unwrap();
    let x = random_tensor(vec![2, 2, 6, 5], 43);
    let a = net.forward(&x, &[], Mode::Train, 7).unwrap();
    let b = net.clone().forward(&x, &[], Mode::Train, 7).unwrap();
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn residual_equals_composed_plain_layers() {
    for (c, o, stride) in [(2, 3, 2), (3, 3, 1), (1, 4, 1)] {
        let res = Network::new(
            &[c, 5, 4],
            &[LayerSpec::Residual {
                out_channels: o,
                kernel: 3,
                stride,
            }],
            11,
        )
        .unwrap();
        let p: Vec<Param> = res.params().cloned().collect();
        let inner = Network::from_parts(
            &[c, 5, 4],
            &[conv(o, 3, stride), LayerSpec::Relu, conv(o, 3, 1)],
            vec![p[0].clone(), p[1].clone(), p[2].clone(), p[3].clone()],
        )
        .unwrap();
        let x = random_tensor(vec![2, c, 5, 4], 12);
        let mut expect = inner.forward(&x, &[], Mode::Eval, 0).unwrap().into_data();
        if p.len() == 6 {
            let shortcut = Network::from_parts(&[c, 5, 4], &[conv(o, 1, stride)], vec![p[4].clone(), p[5].clone()]).unwrap();
            let s = shortcut.forward(&x, &[], Mode::Eval, 0).unwrap();
            expect.iter_mut().zip(s.data()).for_each(|(a, b)| *a += b);
        } else {
            expect.iter_mut().zip(x.data()).for_each(|(a, b)| *a += b);
        }
        let got = res.forward(&x, &[], Mode::Eval, 0).unwrap();
        for (a, e) in got.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

#[test]
fn shape_mismatch_names_the_layer() {
    let err = Network::new(&[1, 3, 3], &[conv(2, 3, 1), LayerSpec::Dense { out: 2 }], 0).unwrap_err();
    match err {
        Error::Layer { layer, kind, .. } => assert_eq!((layer, kind), (1, "dense")),
        other => panic!("unexpected {other:?}"),
    }
    let net = Network::new(&[4], &[LayerSpec::Dense { out: 2 }], 0).unwrap();
    let err = net.forward(&Tensor::zeros(vec![1, 5]), &[], Mode::Eval, 0).unwrap_err();
    assert!(matches!(
        err,
        Error::Layer {
            layer: 0,
            kind: "dense",
            ..
        }
    ));
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(Network::new(&[1, 3, 3], &[conv(2, 0, 1)], 0).is_err());
    assert!(Network::new(&[1, 3, 3], &[conv(2, 3, 0)], 0).is_err());
    assert!(Network::new(&[3], &[LayerSpec::Dropout { rate: 1.0 }], 0).is_err());
    assert!(Network::new(&[3], &[LayerSpec::Reshape { shape: vec![2, 2] }], 0).is_err());
}

#[test]
fn backward_without_trace_is_a_usage_error() {
    let net = Network::new(&[3], &[LayerSpec::Dense { out: 1 }], 0).unwrap();
    let err = net.backward(&Trace::empty(), &Tensor::zeros(vec![1, 1])).unwrap_err();
    assert!(matches!(err, Error::MissingTrace));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let specs = [
        conv(3, 3, 1),
        LayerSpec::Relu,
        LayerSpec::Reshape { shape: vec![3 * 4 * 4] },
        LayerSpec::Concat { width: 2, slot: 0 },
        LayerSpec::Dense { out: 5 },
    ];
    let net = Network::new(&[1, 4, 4], &specs, 31).unwrap();
    let mut ckpt = Checkpoint::new();
    ckpt.insert_network("net", &net);
    ckpt.matrices.insert(
        "table".into(),
        MatrixRecord {
            rows: 1,
            cols: 3,
            values: vec![0.1, 1.0 / 3.0, -2.5e-300],
        },
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    assert_eq!(loaded.network("net").unwrap(), net);
}

#[test]
fn range_forward_composes() {
    let specs = [
        LayerSpec::Dense { out: 4 },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Dense { out: 2 },
    ];
    let net = Network::new(&[3], &specs, 8).unwrap();
    let x = random_tensor(vec![2, 3], 9);
    let full = net.forward(&x, &[], Mode::MonteCarlo, 5).unwrap();
    let prefix = net.forward_range(0..2, &x, &[], Mode::MonteCarlo, 5).unwrap();
    let rest = net.forward_range(2..4, &prefix, &[], Mode::MonteCarlo, 5).unwrap();
    assert_eq!(full, rest);
}
