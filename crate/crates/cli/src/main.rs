use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use kitchen_client::api::{CreateSession, WireAssignment};
use kitchen_client::Client;
use kitchen_core::eval::{emit_report, run_experiment, Configuration, ExperimentConfig};
use kitchen_core::humans::{act, make_human, HumanKind};
use kitchen_core::kitchen::{KitchenMdp, ScenarioKind, ScriptedPolicy};
use kitchen_core::mdp::{derive_seed, sample_rollout, Mdp, Policy};
use kitchen_core::solvers::{
    fit_q_model, solve_oracle, train_pg, Artifact, FittedQ, Payload, PgConfig, QFitConfig, QModelKind,
};
use kitchen_core::tips::{infer_tip, FrequencyTable, InferConfig, Inference};
use kitchen_core::trace::{ingest, write_jsonl, TraceRecord};
use kitchen_service::ServiceConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "kitchen", version, about = "Kitchen coordination game: experts, tips and the study service")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Oracle,
    Pg,
}

#[derive(Clone, Copy, ValueEnum)]
enum InferMethod {
    /// Q-weighted scoring against a fitted model.
    Algorithm,
    /// Frequency matching against expert play.
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Forest,
    Network,
}

#[derive(Subcommand)]
enum Command {
    /// Compute an expert policy and print its schedule.
    Solve {
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long, value_enum, default_value = "oracle")]
        method: SolveMethod,
        /// Gradient steps for the policy-gradient learner.
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Save the trained policy here (pg only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a human model and write its games as JSONL traces.
    Collect {
        /// greedy, myopic, eps:<p>, avoid:<worker>.<subtask> or prefer:<worker>.<subtask>
        #[arg(long)]
        human: HumanKind,
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a Q-model of the scripted expert and save it.
    Fit {
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "forest")]
        kind: ModelKind,
        #[arg(long, default_value_t = 400)]
        rollouts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Infer the tip that best fixes the slowest traces.
    Infer {
        /// A JSONL file or a directory of them. All traces must share a scenario.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, value_enum, default_value = "algorithm")]
        method: InferMethod,
        /// Q-model from `fit`. Fitted on the fly when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Print the full ranking as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a simulated study and write its report tables.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run the session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        traces_dir: Option<PathBuf>,
        #[arg(long, default_value = "normal")]
        configuration: Configuration,
    },
    /// Play a whole session against a running service with a simulated player.
    Play {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        #[arg(long)]
        configuration: Option<Configuration>,
        #[arg(long)]
        condition: Option<String>,
        /// Simulated player; the scripted expert when omitted.
        #[arg(long)]
        human: Option<HumanKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check JSONL traces by replaying them.
    Validate {
        #[arg(long)]
        traces: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();

    match cli.command {
        Command::Solve { scenario, method, steps, seed, out } => solve(scenario, method, steps, seed, out.as_deref()),
        Command::Collect { human, n, scenario, out, seed } => collect(human, n, scenario, &out, seed),
        Command::Fit { scenario, out, kind, rollouts, seed } => fit(scenario, &out, kind, rollouts, seed),
        Command::Infer { traces, method, model, json } => infer(&traces, method, model.as_deref(), json),
        Command::Evaluate { config, out } => evaluate(&config, &out),
        Command::Serve { port, host, seed, traces_dir, configuration } => {
            let config = ServiceConfig { seed, traces_dir, default_configuration: configuration };
            runtime()?.block_on(kitchen_service::serve(SocketAddr::new(host, port), config))?;
            Ok(())
        }
        Command::Play { url, configuration, condition, human, seed } => {
            runtime()?.block_on(play(&url, configuration, condition, human, seed))
        }
        Command::Validate { traces } => validate(&traces),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn mdp_for(scenario: ScenarioKind) -> KitchenMdp {
    KitchenMdp::new(scenario.config()).expect("stock scenarios are valid")
}

fn solve(scenario: ScenarioKind, method: SolveMethod, steps: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let mdp = mdp_for(scenario);
    match method {
        SolveMethod::Oracle => {
            if out.is_some() {
                bail!("--out only applies to --method pg");
            }
            let sol = solve_oracle(&mdp, 5_000_000)?;
            println!("{scenario}: {} ticks ({} states searched)", sol.ticks, sol.states_explored);
            for (t, a) in sol.actions.iter().enumerate() {
                if !a.is_empty() {
                    println!("  t={t:<3} {a}");
                }
            }
        }
        SolveMethod::Pg => {
            let result = train_pg(&mdp, &PgConfig { steps, seed, ..PgConfig::default() })?;
            println!("{scenario}: best greedy return {:.2}", result.best_return);
            for p in &result.curve {
                tracing::info!(step = p.step, greedy_return = p.greedy_return, "learning curve");
            }
            if let Some(path) = out {
                Artifact::new(scenario, Payload::Policy(result.policy)).save(path)?;
                println!("policy saved to {}", path.display());
            }
        }
    }
    Ok(())
}

fn collect(human: HumanKind, n: usize, scenario: ScenarioKind, out: &Path, seed: u64) -> Result<()> {
    let mdp = mdp_for(scenario);
    let policy = make_human(human, &mdp);
    let records = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
            let rollout = sample_rollout(&mdp, policy.as_ref(), &mut rng)?;
            let mut record = TraceRecord::from_rollout(format!("collect-{i}"), scenario, &rollout);
            record.condition = human.to_string();
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(out, &records).with_context(|| format!("writing {}", out.display()))?;
    let mean = records.iter().map(|r| r.completion_ticks as f64).sum::<f64>() / n.max(1) as f64;
    println!("wrote {n} traces to {} (mean {mean:.2} ticks)", out.display());
    Ok(())
}

fn fit_config(kind: ModelKind, rollouts: usize, seed: u64) -> QFitConfig {
    let kind = match kind {
        ModelKind::Forest => QModelKind::Forest,
        ModelKind::Network => QModelKind::Network,
    };
    QFitConfig { kind, rollouts, seed, ..QFitConfig::default() }
}

fn fit(scenario: ScenarioKind, out: &Path, kind: ModelKind, rollouts: usize, seed: u64) -> Result<()> {
    let mdp = mdp_for(scenario);
    let expert = ScriptedPolicy::for_config(mdp.config());
    let FittedQ::Model(model) = fit_q_model(&mdp, &expert, &[], &fit_config(kind, rollouts, seed))? else {
        unreachable!("regressor kinds always give a model");
    };
    let samples = model.samples;
    Artifact::new(scenario, Payload::QModel(model)).save(out)?;
    println!("fitted on {samples} samples, saved to {}", out.display());
    Ok(())
}

fn infer(traces: &Path, method: InferMethod, model: Option<&Path>, json: bool) -> Result<()> {
    let ingested = ingest(traces).with_context(|| format!("reading {}", traces.display()))?;
    for e in &ingested.errors {
        eprintln!("skipping {e}");
    }
    let Some(first) = ingested.records.first() else {
        bail!("no usable traces in {}", traces.display());
    };
    let scenario = first.scenario;
    if let Some(r) = ingested.records.iter().find(|r| r.scenario != scenario) {
        bail!("traces mix scenarios: {} is {}, {} is {}", first.session_id, scenario, r.session_id, r.scenario);
    }
    let mdp = mdp_for(scenario);
    let expert = ScriptedPolicy::for_config(mdp.config());
    let rollouts = ingested.rollouts();
    let config = InferConfig::default();
    let inference: Inference = match method {
        InferMethod::Algorithm => {
            let q = match model {
                Some(path) => {
                    let (s, m) = Artifact::load_q_model(path)?;
                    if s != scenario {
                        bail!("{} was fitted for {s}, traces are {scenario}", path.display());
                    }
                    m
                }
                None => match fit_q_model(&mdp, &expert, &[], &QFitConfig::default())? {
                    FittedQ::Model(m) => m,
                    FittedQ::Table(_) => unreachable!("forest is the default"),
                },
            };
            infer_tip(&mdp, &rollouts, &q, &expert, &config)?
        }
        InferMethod::Baseline => {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let expert_runs =
                (0..10).map(|_| sample_rollout(&mdp, &expert, &mut rng)).collect::<Result<Vec<_>, _>>()?;
            let table = FrequencyTable::from_rollouts(&mdp, &expert_runs);
            infer_tip(&mdp, &rollouts, &table, &expert, &config)?
        }
    };
    if json {
        let out = serde_json::json!({
            "scenario": scenario,
            "traces_used": inference.traces_used,
            "best": inference.best,
            "ranking": inference.ranking,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    println!("scored the slowest {} of {} traces", inference.traces_used, rollouts.len());
    match &inference.best {
        Some(best) => println!("tip: {} (score {:.3})", best.text, best.score),
        None => println!("tip: none; no candidate improves on the observed play"),
    }
    for r in inference.ranking.iter().take(5) {
        println!(
            "  {:<32} score {:>8.3}  applicability {:.2}  disagreement {:.2}",
            r.text, r.score, r.applicability, r.disagreement
        );
    }
    Ok(())
}

fn evaluate(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    let report = run_experiment(&cfg)?;
    let files = emit_report(&report, out)?;
    println!("{:<6} {:<10} {:>10} {:>8} {:>10}", "round", "condition", "mean", "optimal", "complied");
    for row in &report.rows {
        let complied = row.compliance.map_or("NA".to_string(), |c| format!("{c:.3}"));
        println!(
            "{:<6} {:<10} {:>10.2} {:>8.3} {:>10}",
            row.round, row.condition, row.mean_ticks, row.frac_optimal, complied
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

async fn play(
    url: &str,
    configuration: Option<Configuration>,
    condition: Option<String>,
    human: Option<HumanKind>,
    seed: u64,
) -> Result<()> {
    let client = Client::new(url)?;
    let req = CreateSession { configuration, condition, client: serde_json::json!({"agent": "kitchen play"}) };
    let mut view = client.create_session(&req).await?;
    let id = view.session_id;
    let tip = client.tip(id).await?.tip.map(|t| t.display).unwrap_or_else(|| "none".into());
    println!("session {id}, {} rounds, first tip: {tip}", view.rounds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while !view.finished {
        let mdp = mdp_for(view.scenario);
        let policy: Box<dyn Policy<KitchenMdp>> = match human {
            Some(kind) => make_human(kind, &mdp),
            None => Box::new(ScriptedPolicy::for_config(mdp.config())),
        };
        let mut state = mdp.initial_state();
        loop {
            let action = act(policy.as_ref(), &mdp, &state, &mut rng);
            let wire = action
                .assignments()
                .iter()
                .map(|a| WireAssignment { worker: a.worker, order: a.order + 1, subtask: a.subtask })
                .collect();
            client.assign(id, wire, true).await?;
            view = client.commit(id).await?;
            state = mdp.next_state(&state, &action);
            if mdp.is_terminal(&state) {
                break;
            }
        }
        if let Some(r) = &view.last_round {
            println!(
                "round {} ({}): {} ticks, best known {}",
                r.round, r.scenario, r.completion_ticks, r.reference_ticks
            );
        }
    }
    let fin = client.finish(id).await?;
    println!("finished; {} traces stored", fin.traces_written);
    Ok(())
}

fn validate(traces: &Path) -> Result<()> {
    let ingested = ingest(traces).with_context(|| format!("reading {}", traces.display()))?;
    for e in &ingested.errors {
        println!("{e}");
    }
    println!("{} valid, {} invalid", ingested.records.len(), ingested.errors.len());
    if !ingested.errors.is_empty() {
        bail!("{} invalid trace lines", ingested.errors.len());
    }
    Ok(())
}
