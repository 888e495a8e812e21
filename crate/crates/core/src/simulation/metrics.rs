use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::strategies::Strategy;
use crate::error::{Error, Result};

/// How one episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    /// Acceptance turn; `None` on failure.
    pub success_turn: Option<usize>,
}

/// Cumulative success rates and average turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub t_max: usize,
    /// `sr[t-1]` is SR@t for `t = 1..=t_max`.
    pub sr: Vec<f64>,
    pub average_turn: f64,
    pub episodes: usize,
}

/// SR@T is the share of episodes accepted by turn `T`; AT averages the
/// acceptance turn, counting failures as `t_max`.
pub fn evaluate(outcomes: &[Outcome], t_max: usize) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::Empty("episode set"));
    }
    let n = outcomes.len();
    let mut hits = vec![0usize; t_max + 1];
    let mut turn_sum = 0usize;
    for o in outcomes {
        match o.success_turn {
            Some(t) if (1..=t_max).contains(&t) => {
                hits[t] += 1;
                turn_sum += t;
            }
            Some(t) => return Err(Error::Invariant(format!("success at turn {t} outside 1..={t_max}"))),
            None => turn_sum += t_max,
        }
    }
    let mut sr = Vec::with_capacity(t_max);
    let mut cumulative = 0usize;
    for h in &hits[1..] {
        cumulative += h;
        sr.push(cumulative as f64 / n as f64);
    }
    Ok(MetricsReport {
        t_max,
        sr,
        average_turn: turn_sum as f64 / n as f64,
        episodes: n,
    })
}

impl MetricsReport {
    pub fn sr_at(&self, t: usize) -> f64 {
        self.sr[t - 1]
    }

    /// `turn,sr` rows followed by an `AT` row.
    pub fn to_csv(&self) -> String {
        columns_csv(&[("sr", self)])
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("episodes: {}\n  T   SR@T\n", self.episodes);
        for (i, v) in self.sr.iter().enumerate() {
            writeln!(out, "{:>3}  {:.4}", i + 1, v).unwrap();
        }
        writeln!(out, " AT  {:.4}", self.average_turn).unwrap();
        out
    }
}

fn columns_csv(cols: &[(&str, &MetricsReport)]) -> String {
    let mut out = String::from("turn");
    for (name, _) in cols {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    let t_max = cols.iter().map(|(_, r)| r.t_max).max().unwrap_or(0);
    for t in 1..=t_max {
        write!(out, "{t}").unwrap();
        for (_, r) in cols {
            match r.sr.get(t - 1) {
                Some(v) => write!(out, ",{v:.6}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out.push_str("AT");
    for (_, r) in cols {
        write!(out, ",{:.6}", r.average_turn).unwrap();
    }
    out.push('\n');
    out
}

/// One SR@T column per strategy plus a final AT row.
pub fn comparison_csv(reports: &[(String, MetricsReport)]) -> String {
    let cols: Vec<(&str, &MetricsReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    columns_csv(&cols)
}

pub fn comparison_table(reports: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("   T");
    for (name, _) in reports {
        write!(out, " {name:>14}").unwrap();
    }
    out.push('\n');
    let t_max = reports.iter().map(|(_, r)| r.t_max).max().unwrap_or(0);
    for t in 1..=t_max {
        write!(out, "{t:>4}").unwrap();
        for (_, r) in reports {
            write!(out, " {:>14.4}", r.sr.get(t - 1).copied().unwrap_or(f64::NAN)).unwrap();
        }
        out.push('\n');
    }
    out.push_str("  AT");
    for (_, r) in reports {
        write!(out, " {:>14.4}", r.average_turn).unwrap();
    }
    out.push('\n');
    out
}

pub fn strategy_label(s: Strategy, top_pop: bool) -> String {
    if top_pop {
        format!("{s}+toppop")
    } else {
        s.to_string()
    }
}
