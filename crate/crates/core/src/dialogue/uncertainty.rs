use serde::{Deserialize, Serialize};

use crate::datasets::AttrId;

/// `C_p = |q_p − 0.5|`.
pub fn confidence(q: &[f64]) -> Vec<f64> {
    q.iter().map(|&v| (v - 0.5).abs()).collect()
}

/// Per-vector min-max scaling into `[0, 1]`; an all-equal vector maps to
/// zeros.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|&x| (x - lo) / span).collect()
}

/// Population variance per attribute over `samples` (one belief vector
/// each), before normalization. Welford's update keeps identical samples at
/// exactly zero, which `Σq/n` does not.
pub fn belief_variance(samples: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|p| {
            let (mut mean, mut m2) = (0.0, 0.0);
            for (k, q) in samples.iter().enumerate() {
                let delta = q[p] - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (q[p] - mean);
            }
            m2 / samples.len() as f64
        })
        .collect()
}

/// Normalized MC-Dropout variance `σ`.
pub fn mc_dropout_variance(samples: &[Vec<f64>]) -> Vec<f64> {
    normalize(&belief_variance(samples))
}

/// `1 − 2|q_p − 0.5|` before normalization.
pub fn raw_midpoint_proximity(q: &[f64]) -> Vec<f64> {
    q.iter().map(|&v| 1.0 - 2.0 * (v - 0.5).abs()).collect()
}

/// Normalized midpoint proximity `r`.
pub fn midpoint_proximity(q: &[f64]) -> Vec<f64> {
    normalize(&raw_midpoint_proximity(q))
}

/// Element-wise harmonic mean `2rσ / (r + σ)`, zero where `r + σ = 0`.
pub fn fuse_uncertainty(r: &[f64], sigma: &[f64]) -> Vec<f64> {
    r.iter()
        .zip(sigma)
        .map(|(&r, &s)| if r + s == 0.0 { 0.0 } else { 2.0 * r * s / (r + s) })
        .collect()
}

/// Highest-scoring attribute among those still unknown; ties go to the
/// lowest id. `None` when every attribute has been answered.
pub fn argmax_unknown(scores: &[f64], unknown: &[bool]) -> Option<AttrId> {
    let mut best: Option<(usize, f64)> = None;
    for (p, (&s, &open)) in scores.iter().zip(unknown).enumerate() {
        if open && best.is_none_or(|(_, b)| s > b) {
            best = Some((p, s));
        }
    }
    best.map(|(p, _)| AttrId::from(p))
}

/// The attribute to query: most uncertain among unknown attributes.
pub fn select_query_attribute(u: &[f64], unknown: &[bool]) -> Option<AttrId> {
    argmax_unknown(u, unknown)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Query,
    Recommend,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Confidence threshold `α`.
    pub alpha: f64,
    /// Slate size `K`.
    pub k: usize,
    pub t_max: usize,
    /// MC-Dropout passes `N`.
    pub mc_passes: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            k: 10,
            t_max: 15,
            mc_passes: 10,
        }
    }
}

/// The four conditions of the decision rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Predicates {
    /// Some unknown attribute has `C_p ≤ α`.
    pub uncertain_unknown: bool,
    /// `t < T_max`.
    pub before_deadline: bool,
    /// `|V_{t−1}| > K`.
    pub many_candidates: bool,
    pub unknowns_remain: bool,
}

impl Predicates {
    pub fn evaluate(q: &[f64], unknown: &[bool], t: usize, candidates: usize, policy: &PolicyConfig) -> Self {
        let uncertain_unknown = confidence(q).iter().zip(unknown).any(|(&c, &open)| open && c <= policy.alpha);
        Self {
            uncertain_unknown,
            before_deadline: t < policy.t_max,
            many_candidates: candidates > policy.k,
            unknowns_remain: unknown.iter().any(|&o| o),
        }
    }

    pub fn decision(self) -> Decision {
        if self.uncertain_unknown && self.before_deadline && self.many_candidates && self.unknowns_remain {
            Decision::Query
        } else {
            Decision::Recommend
        }
    }
}

/// Query iff an unknown attribute is uncertain, `t < T_max`, `|V| > K` and
/// some attribute is still unknown; otherwise recommend.
pub fn decide_action(q: &[f64], unknown: &[bool], t: usize, candidates: usize, policy: &PolicyConfig) -> Decision {
    Predicates::evaluate(q, unknown, t, candidates, policy).decision()
}
