//! Simulation runs and their output files, shared by the command line and
//! the test suites.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::RelationMatrix;
use crate::datasets::ItemId;
use crate::dialogue::{Engine, ItemScorer, PolicyConfig, TopPop, TurnRecord, UserResponse};
use crate::error::{Error, Result};
use crate::model::{ModelSnapshot, Prepared};
use crate::simulation::{
    comparison_csv, evaluate, run_episodes, strategy_label, EpisodeResult, EpisodeTask, MetricsReport, Outcome, Strategy,
};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const RELATIONS_FILE: &str = "relations.csv";
pub const MODEL_FILE: &str = "model.json";
pub const RECOMMENDER_FILE: &str = "rn.json";

/// One episode per held-out test interaction, in split order.
pub fn episode_tasks(data: &Prepared, limit: Option<usize>) -> Vec<EpisodeTask> {
    data.split
        .test
        .iter()
        .take(limit.unwrap_or(usize::MAX))
        .enumerate()
        .map(|(id, r)| EpisodeTask {
            id,
            history: data.session_history(r),
            target: r.item,
        })
        .collect()
}

/// Episodes of one strategy and their metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub label: String,
    pub results: Vec<EpisodeResult>,
    pub report: MetricsReport,
}

/// Runs `tasks` under `strategy`. With `top_pop` the slate is ranked by
/// training popularity instead of the recommendation network.
pub fn simulate(
    snap: &ModelSnapshot,
    policy: PolicyConfig,
    strategy: Strategy,
    top_pop: bool,
    tasks: &[EpisodeTask],
    seed: u64,
    jobs: usize,
) -> Result<Simulation> {
    let popularity = TopPop::new(snap.popularity.clone());
    let scorer: &dyn ItemScorer = if top_pop { &popularity } else { snap };
    let engine = Engine {
        catalog: &snap.catalog,
        belief: snap,
        scorer,
        policy,
        strategy,
    };
    let results = run_episodes(&engine, tasks, seed, jobs)?;
    let outcomes: Vec<Outcome> = results.iter().map(Outcome::from).collect();
    let report = evaluate(&outcomes, policy.t_max)?;
    Ok(Simulation {
        label: strategy_label(strategy, top_pop),
        results,
        report,
    })
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    strategy: &'a str,
    episode: usize,
    target: ItemId,
    #[serde(flatten)]
    record: &'a TurnRecord,
}

/// A parsed transcript line.
#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct TranscriptEntry {
    pub strategy: String,
    pub episode: usize,
    pub target: ItemId,
    #[serde(flatten)]
    pub record: TurnRecord,
}

/// One JSON object per turn of every episode.
pub fn transcript_jsonl(sims: &[Simulation]) -> Result<String> {
    let mut out = String::new();
    for sim in sims {
        for r in &sim.results {
            for record in &r.log {
                let line = TranscriptLine {
                    strategy: &sim.label,
                    episode: r.id,
                    target: r.target,
                    record,
                };
                out.push_str(&serde_json::to_string(&line)?);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Rebuilds per-run outcomes from a transcript, runs in order of first
/// appearance and episodes in order of id.
pub fn outcomes_from_transcript(text: &str) -> Result<Vec<(String, Vec<Outcome>)>> {
    let mut runs: Vec<(String, std::collections::BTreeMap<usize, Option<usize>>)> = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let e: TranscriptEntry = serde_json::from_str(line).map_err(|err| Error::Parse {
            path: TRANSCRIPT_FILE.into(),
            line: n + 1,
            message: err.to_string(),
        })?;
        let idx = match runs.iter().position(|(name, _)| *name == e.strategy) {
            Some(i) => i,
            None => {
                runs.push((e.strategy.clone(), Default::default()));
                runs.len() - 1
            }
        };
        let slot = runs[idx].1.entry(e.episode).or_insert(None);
        if matches!(e.record.response, UserResponse::Accept { .. }) {
            *slot = Some(e.record.turn);
        }
    }
    Ok(runs
        .into_iter()
        .map(|(name, eps)| (name, eps.into_values().map(|success_turn| Outcome { success_turn }).collect()))
        .collect())
}

/// Writes `metrics.csv` with one SR@T column per run and, when asked,
/// `transcript.jsonl`.
pub fn write_outputs(dir: &Path, sims: &[Simulation], transcripts: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let reports: Vec<(String, MetricsReport)> = sims.iter().map(|s| (s.label.clone(), s.report.clone())).collect();
    fs::write(dir.join(METRICS_FILE), comparison_csv(&reports))?;
    if transcripts {
        fs::write(dir.join(TRANSCRIPT_FILE), transcript_jsonl(sims)?)?;
    }
    Ok(())
}

/// `P` comma-separated rows of `A`.
pub fn relations_csv(a: &RelationMatrix) -> String {
    let mut out = String::new();
    for i in 0..a.dim() {
        let row: Vec<String> = a.row(i).iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
