//! Central finite-difference verification of analytic gradients.

use rand::Rng;

use super::layer::Mode;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::seeded;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps near-zero gradients from
/// reporting roundoff as relative error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(tensor, element)` of the worst parameter entry; `None` when the
    /// worst entry is in the input or a side input.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    fn record(&mut self, err: f64, at: Option<(usize, usize)>) {
        self.checked += 1;
        if err > self.max_relative_error {
            self.max_relative_error = err;
            self.worst = at;
        }
    }
}

/// Checks every parameter, input and side-input gradient of `net` against
/// central differences of the scalar loss `Σ w·y` with fixed random `w`.
/// Dropout masks are held fixed through `seed`.
pub fn check_network(net: &Network, input: &Tensor, side: &[&Tensor], mode: Mode, seed: u64, h: f64) -> Result<GradCheckReport> {
    let probe = net.forward(input, side, mode, seed)?;
    let mut rng = seeded(seed ^ 0x5eed);
    let weights: Vec<f64> = (0..probe.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream = Tensor::new(probe.shape().to_vec(), weights.clone())?;
    let loss = |n: &Network, x: &Tensor, s: &[&Tensor]| -> f64 {
        let y = n.forward(x, s, mode, seed).expect("forward during gradient check");
        y.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
    };

    let (_, trace) = net.forward_traced(input, side, mode, seed)?;
    let grads = net.backward(&trace, &upstream)?;
    let mut report = GradCheckReport::default();

    let mut work = net.clone();
    for t in 0..grads.params.len() {
        let original = work.params().nth(t).expect("tensor index").values.clone();
        for (e, &x) in original.iter().enumerate() {
            let mut eval = |v: f64| {
                work.params_mut().nth(t).expect("tensor index").values[e] = v;
                loss(&work, input, side)
            };
            let numeric = (eval(x + h) - eval(x - h)) / (2.0 * h);
            eval(x);
            report.record(relative_error(grads.params[t][e], numeric), Some((t, e)));
        }
    }

    let numeric = central_difference(
        |x| loss(net, &Tensor::new(input.shape().to_vec(), x.to_vec()).expect("input shape"), side),
        input.data(),
        h,
    );
    for (a, n) in grads.input.data().iter().zip(numeric) {
        report.record(relative_error(*a, n), None);
    }

    for (slot, g) in grads.side.iter().enumerate() {
        let Some(g) = g else { continue };
        let numeric = central_difference(
            |x| {
                let replaced = Tensor::new(side[slot].shape().to_vec(), x.to_vec()).expect("side shape");
                let mut s: Vec<&Tensor> = side.to_vec();
                s[slot] = &replaced;
                loss(net, input, &s)
            },
            side[slot].data(),
            h,
        );
        for (a, n) in g.data().iter().zip(numeric) {
            report.record(relative_error(*a, n), None);
        }
    }
    Ok(report)
}
