use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use elicit_core::belief::RelationMatrix;
use elicit_core::config::RunConfig;
use elicit_core::datasets::{UserHistory, UserId};
use elicit_core::dialogue::BeliefModel;
use elicit_core::model::{load_recommender, save_recommender, train_belief, train_recommender, ModelSnapshot, Prepared};
use elicit_core::pipeline::{
    episode_tasks, outcomes_from_transcript, relations_csv, simulate, write_outputs, Simulation, METRICS_FILE, MODEL_FILE,
    RECOMMENDER_FILE, RELATIONS_FILE, TRANSCRIPT_FILE,
};
use elicit_core::simulation::{comparison_csv, comparison_table, evaluate, Strategy};
use elicit_service::{AppState, Model, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "elicit",
    version,
    about = "Train, simulate and serve the attribute-elicitation recommender"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML). Defaults apply to every missing field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for episodes; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// minicorn, random, most-inf, max-entropy, highest-score or greedy.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// Overrides the confidence threshold.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Where checkpoints and reports are read and written.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the recommendation network and the embeddings.
    TrainRn,
    /// Train the belief network on the embeddings from `train-rn`.
    TrainBtn,
    /// Run one strategy over the test episodes.
    Simulate {
        /// Only the first N test interactions.
        #[arg(long)]
        episodes: Option<usize>,
        /// Rank slates by training popularity.
        #[arg(long)]
        top_pop: bool,
    },
    /// Recompute metrics from a transcript file.
    Evaluate {
        /// Defaults to transcript.jsonl in the output directory.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run every strategy over the same episodes.
    Ablate {
        #[arg(long)]
        episodes: Option<usize>,
        /// Add a popularity-ranked greedy column.
        #[arg(long)]
        top_pop: bool,
    },
    /// Write the learned relation matrix as a P×P grid.
    ExportRelations {
        /// One user's matrix; the mean over all users when absent.
        #[arg(long)]
        user: Option<u32>,
    },
    /// Serve the JSON session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(alpha) = cli.alpha {
        cfg.policy.alpha = alpha;
    }
    cfg.validate().context("config")?;
    eprintln!("# effective configuration\n{}", cfg.to_toml());
    Ok(cfg)
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let data = Prepared::new(cfg.load_dataset()?, cfg)?;
    info!(
        "{} items, {} attributes, {} users; {} train / {} validation / {} test interactions",
        data.catalog.len(),
        data.catalog.num_attributes(),
        data.num_users,
        data.split.train.len(),
        data.split.validation.len(),
        data.split.test.len()
    );
    Ok(data)
}

fn load_model(out: &Path, data: &Prepared) -> Result<ModelSnapshot> {
    let path = out.join(MODEL_FILE);
    ModelSnapshot::load(&path, data.catalog.clone())
        .with_context(|| format!("loading {} (run train-rn and train-btn first)", path.display()))
}

fn report(out: &Path, sims: &[Simulation]) -> Result<()> {
    write_outputs(out, sims, true)?;
    let reports: Vec<_> = sims.iter().map(|s| (s.label.clone(), s.report.clone())).collect();
    print!("{}", comparison_table(&reports));
    info!(
        "wrote {} and {}",
        out.join(METRICS_FILE).display(),
        out.join(TRANSCRIPT_FILE).display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out_dir.as_path();
    fs::create_dir_all(out)?;
    match cli.command {
        Command::TrainRn => {
            let data = prepare(&cfg)?;
            let (rn, store) = train_recommender(&data, &cfg)?;
            save_recommender(&out.join(RECOMMENDER_FILE), &rn, &store)?;
            info!("wrote {}", out.join(RECOMMENDER_FILE).display());
        }
        Command::TrainBtn => {
            let data = prepare(&cfg)?;
            let path = out.join(RECOMMENDER_FILE);
            let (rn, store) = load_recommender(&path).with_context(|| format!("loading {} (run train-rn first)", path.display()))?;
            let btn = train_belief(&data, &cfg, &store)?;
            ModelSnapshot::new(data.catalog.clone(), btn, rn, store, data.popularity.clone())?.save(&out.join(MODEL_FILE))?;
            info!("wrote {}", out.join(MODEL_FILE).display());
        }
        Command::Simulate { episodes, top_pop } => {
            let data = prepare(&cfg)?;
            let snap = load_model(out, &data)?;
            let tasks = episode_tasks(&data, episodes);
            let strategy = cli.strategy.unwrap_or(Strategy::Minicorn);
            let sim = simulate(&snap, cfg.policy, strategy, top_pop, &tasks, cfg.seed, cli.jobs)?;
            report(out, &[sim])?;
        }
        Command::Ablate { episodes, top_pop } => {
            if cli.strategy.is_some() {
                bail!("ablate runs every strategy; drop --strategy");
            }
            let data = prepare(&cfg)?;
            let snap = load_model(out, &data)?;
            let tasks = episode_tasks(&data, episodes);
            let mut sims = Vec::new();
            for s in Strategy::ALL {
                info!("running {s}");
                sims.push(simulate(&snap, cfg.policy, s, false, &tasks, cfg.seed, cli.jobs)?);
            }
            if top_pop {
                sims.push(simulate(&snap, cfg.policy, Strategy::Greedy, true, &tasks, cfg.seed, cli.jobs)?);
            }
            report(out, &sims)?;
        }
        Command::Evaluate { transcript } => {
            let path = transcript.unwrap_or_else(|| out.join(TRANSCRIPT_FILE));
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mut reports = Vec::new();
            for (name, outcomes) in outcomes_from_transcript(&text)? {
                reports.push((name, evaluate(&outcomes, cfg.policy.t_max)?));
            }
            if reports.is_empty() {
                bail!("{} holds no episodes", path.display());
            }
            fs::write(out.join(METRICS_FILE), comparison_csv(&reports))?;
            print!("{}", comparison_table(&reports));
        }
        Command::ExportRelations { user } => {
            let data = prepare(&cfg)?;
            let snap = load_model(out, &data)?;
            let a = match user {
                Some(u) => {
                    let u = UserId(u);
                    snap.store.user(Some(u))?;
                    snap.relation(&data.histories.get(u.index()).cloned().unwrap_or(UserHistory {
                        user: Some(u),
                        items: vec![],
                    }))?
                }
                None => {
                    let mats = data
                        .histories
                        .iter()
                        .map(|h| snap.relation(h))
                        .collect::<elicit_core::Result<Vec<_>>>()?;
                    RelationMatrix::mean(&mats)?
                }
            };
            fs::write(out.join(RELATIONS_FILE), relations_csv(&a))?;
            info!("wrote {}", out.join(RELATIONS_FILE).display());
        }
        Command::Serve { addr } => {
            let data = prepare(&cfg)?;
            let snap = load_model(out, &data)?;
            let config = ServiceConfig {
                policy: cfg.policy,
                strategy: cli.strategy.unwrap_or(Strategy::Minicorn),
                seed: cfg.seed,
                ..ServiceConfig::default()
            };
            let state = AppState::new(config, Some(Model::new(snap, data.histories.clone())));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                reload_on_hangup(state.clone(), out.to_path_buf(), data);
                elicit_service::serve(addr, state).await
            })?;
        }
    }
    Ok(())
}

/// Re-reads the model checkpoint on SIGHUP and swaps it in for new sessions.
#[cfg(unix)]
fn reload_on_hangup(state: AppState, out: PathBuf, data: Prepared) {
    use tokio::signal::unix::{signal, SignalKind};
    tokio::spawn(async move {
        let Ok(mut hup) = signal(SignalKind::hangup()) else {
            log::warn!("cannot listen for SIGHUP; hot reload disabled");
            return;
        };
        while hup.recv().await.is_some() {
            match load_model(&out, &data) {
                Ok(snap) => {
                    state.swap_model(Model::new(snap, data.histories.clone()));
                    info!("model reloaded");
                }
                Err(e) => log::error!("reload failed: {e:#}"),
            }
        }
    });
}

#[cfg(not(unix))]
fn reload_on_hangup(_: AppState, _: PathBuf, _: Prepared) {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
