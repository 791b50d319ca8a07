use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use partadvise::advisor::{self, AppliedPartitioning, Mode};
use partadvise::analysis::{feature_pcc, feature_reward_samples};
use partadvise::enumerate::enumerate_with_sources;
use partadvise::features::FEATURE_NAMES;
use partadvise::fixtures;
use partadvise::history::{self, HistorySnapshot, HistoryStore, DEFAULT_HISTORY_WINDOW};
use partadvise::ir::IrGraph;
use partadvise::rl::{self, Hyperparams, PolicyModel, TrainConfig};
use partadvise::sim::{self, EnvSpec, PartitionScheme, SimEnvironment};

const CONFIG_ENV: &str = "LACHESIS_CONFIG";

#[derive(Parser)]
#[command(name = "partadvise", version, about = "Partitioning advisor for UDF-centric analytics")]
struct Cli {
    /// JSON config file; defaults to $LACHESIS_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register IRs and append execution records to a history directory.
    Ingest {
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, num_args = 1..)]
        ir: Vec<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// List partitioner candidates of a dataset across consumer IRs.
    Enumerate {
        #[arg(long, num_args = 1.., required = true)]
        ir: Vec<PathBuf>,
        #[arg(long)]
        dataset: String,
    },
    /// Per-run feature/reward samples as CSV.
    Stats {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, num_args = 1..)]
        ir: Vec<PathBuf>,
    },
    /// Pearson correlation of features with reward, as CSV.
    Pcc {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, num_args = 1..)]
        ir: Vec<PathBuf>,
        /// One feature; all when omitted.
        #[arg(long)]
        feature: Option<String>,
    },
    /// Train a policy against a simulator environment.
    Train {
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recommend a partitioning for a dataset written by a producer.
    Recommend {
        #[arg(long)]
        producer: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        env: Option<PathBuf>,
        #[command(flatten)]
        history: HistoryArgs,
        /// Pick the most probable action (the default).
        #[arg(long, conflicts_with = "sample")]
        argmax: bool,
        /// Sample the action with this seed instead.
        #[arg(long)]
        sample: Option<u64>,
    },
    /// Decide, per join over the dataset, whether a consumer can skip the shuffle.
    Match {
        #[arg(long)]
        dataset_scheme: PathBuf,
        #[arg(long)]
        consumer: PathBuf,
    },
    /// Shuffle bytes and latency of every workload under given schemes.
    Simulate {
        #[arg(long)]
        env: Option<PathBuf>,
        /// JSON object mapping dataset to scheme; applied schemes otherwise.
        #[arg(long)]
        schemes: Option<PathBuf>,
    },
    /// Run the Reddit-style workflow end to end in a scratch directory.
    Demo {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 20)]
        days: u32,
    },
}

#[derive(Args)]
struct HistoryArgs {
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, conflicts_with = "history")]
    log: Option<PathBuf>,
    #[arg(long, num_args = 1.., requires = "log")]
    ir: Vec<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    history: Option<PathBuf>,
    model: Option<PathBuf>,
    env: Option<PathBuf>,
    k: Option<usize>,
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    batch: Option<usize>,
    epochs: Option<usize>,
    agents: Option<usize>,
    seed: Option<u64>,
    window: Option<f64>,
}

impl Config {
    fn hyper(&self) -> Hyperparams {
        let d = Hyperparams::default();
        Hyperparams {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            gamma: self.gamma.unwrap_or(d.gamma),
            slope: d.slope,
        }
    }

    fn window(&self) -> f64 {
        self.window.unwrap_or(DEFAULT_HISTORY_WINDOW)
    }
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.to_string())
    }
}

type Out = Result<String, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn load_config(path: Option<PathBuf>) -> Result<Config, Failure> {
    let path = path.or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let cfg: Config = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    if cfg.k == Some(0) {
        return Err(usage("config: k must be at least 1"));
    }
    Ok(cfg)
}

fn pick(flag: Option<PathBuf>, cfg: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.clone())
        .ok_or_else(|| usage(format!("--{name} is required (flag or config)")))
}

fn read_irs(paths: &[PathBuf]) -> Result<Vec<IrGraph>, Failure> {
    paths
        .iter()
        .map(|p| history::load_ir(p).map_err(Failure::from))
        .collect()
}

fn load_env(path: &Path, cfg: &Config) -> Result<SimEnvironment, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
    let mut spec = EnvSpec::from_json(&text)?;
    if let Some(k) = cfg.k {
        spec.k = k;
    }
    Ok(SimEnvironment::new(spec)?)
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output serializes") + "\n"
}

fn snapshot(args: HistoryArgs, cfg: &Config) -> Result<std::sync::Arc<HistorySnapshot>, Failure> {
    if let Some(log) = args.log {
        let store = HistoryStore::from_parts(read_irs(&args.ir)?, history::read_log(&log)?, cfg.window())?;
        return Ok(store.snapshot());
    }
    let dir = pick(args.history, &cfg.history, "history")?;
    if !dir.is_dir() {
        return Err(Failure::Domain(format!("history directory {} not found", dir.display())));
    }
    Ok(HistoryStore::open(&dir, cfg.window())?.snapshot())
}

fn run(cli: Cli) -> Out {
    let cfg = load_config(cli.config)?;
    match cli.command {
        Command::Ingest { history, ir, log } => {
            let dir = pick(history, &cfg.history, "history")?;
            let store = HistoryStore::open(&dir, cfg.window())?;
            let mut registered = Vec::new();
            for g in read_irs(&ir)? {
                let id = g.ir_id().to_string();
                let sig = store.register_ir(g)?;
                registered.push(json!({"ir_id": id, "signature": sig.to_hex()}));
            }
            let mut ingested = 0;
            if let Some(log) = log {
                for r in history::read_log(&log)? {
                    store.ingest(r)?;
                    ingested += 1;
                }
            }
            let snap = store.snapshot();
            Ok(pretty(&json!({
                "registered": registered,
                "ingested": ingested,
                "records": snap.len(),
                "groups": snap.skeleton().groups.len(),
                "edges": snap.skeleton().edges.len(),
            })))
        }
        Command::Enumerate { ir, dataset } => {
            let graphs = read_irs(&ir)?;
            let out: Vec<serde_json::Value> = enumerate_with_sources(&graphs, &dataset)?
                .into_iter()
                .map(|s| {
                    let mut v = serde_json::to_value(&s.candidate).expect("candidate serializes");
                    v["sources"] = json!(s.sources);
                    v
                })
                .collect();
            Ok(pretty(&out))
        }
        Command::Stats { log, ir } => {
            let irs = ir_map(&ir)?;
            let samples = feature_reward_samples(&history::read_log(&log)?, &irs);
            let mut out = format!("app_id,timestamp,{},reward\n", FEATURE_NAMES.join(","));
            for s in samples {
                let vals: Vec<String> = s.features.to_array().iter().map(|v| v.to_string()).collect();
                writeln!(out, "{},{},{},{}", s.app_id, s.timestamp, vals.join(","), s.reward).unwrap();
            }
            Ok(out)
        }
        Command::Pcc { log, ir, feature } => {
            let irs = ir_map(&ir)?;
            let samples = feature_reward_samples(&history::read_log(&log)?, &irs);
            let mut out = String::from("feature,n,pcc\n");
            match feature {
                Some(f) => {
                    if !FEATURE_NAMES.contains(&f.as_str()) {
                        return Err(usage(format!(
                            "unknown feature `{f}`; expected one of {}",
                            FEATURE_NAMES.join(", ")
                        )));
                    }
                    let r = feature_pcc(&samples, &f)?;
                    writeln!(out, "{f},{},{r}", samples.len()).unwrap();
                }
                None => {
                    for f in FEATURE_NAMES {
                        let r = feature_pcc(&samples, f)
                            .map(|r| r.to_string())
                            .unwrap_or_else(|e| {
                                eprintln!("{f}: {e}");
                                "undefined".into()
                            });
                        writeln!(out, "{f},{},{r}", samples.len()).unwrap();
                    }
                }
            }
            Ok(out)
        }
        Command::Train {
            env,
            epochs,
            batch,
            agents,
            seed,
            out,
        } => {
            let env = load_env(&pick(env, &cfg.env, "env")?, &cfg)?;
            let out = pick(out, &cfg.model, "out")?;
            let tc = TrainConfig {
                epochs: epochs.or(cfg.epochs).unwrap_or(TrainConfig::default().epochs),
                batch_size: batch.or(cfg.batch).unwrap_or(rl::DEFAULT_BATCH),
                iterations_per_epoch: rl::ITERATIONS_PER_EPOCH,
                agents: agents.or(cfg.agents).unwrap_or(1),
                seed: seed.or(cfg.seed).unwrap_or(0),
            };
            let (model, reports) = train_model(&env, &cfg, &tc)?;
            model.save(&out)?;
            eprintln!("saved model to {}", out.display());
            Ok(pretty(&json!({"config": tc, "epochs": reports})))
        }
        Command::Recommend {
            producer,
            dataset,
            model,
            env,
            history,
            argmax: _,
            sample,
        } => {
            let snap = snapshot(history, &cfg)?;
            let env = load_env(&pick(env, &cfg.env, "env")?, &cfg)?;
            let model = PolicyModel::load(&pick(model, &cfg.model, "model")?)?;
            let producer = history::load_ir(&producer)?;
            let mode = sample.map_or(Mode::Argmax, |seed| Mode::Sample { seed });
            let rec = advisor::recommend(&snap, &producer, &dataset, &env, &model, mode)?;
            Ok(rec.to_json() + "\n")
        }
        Command::Match {
            dataset_scheme,
            consumer,
        } => {
            let text = fs::read_to_string(&dataset_scheme)?;
            let applied: AppliedPartitioning = serde_json::from_str(&text)?;
            let consumer = history::load_ir(&consumer)?;
            let verdicts = advisor::consult(&applied, &consumer)?;
            Ok(pretty(&json!({
                "dataset": applied.dataset,
                "consumer": consumer.ir_id(),
                "joins": verdicts,
            })))
        }
        Command::Simulate { env, schemes } => {
            let env = load_env(&pick(env, &cfg.env, "env")?, &cfg)?;
            let mut chosen: BTreeMap<String, PartitionScheme> = env
                .datasets()
                .iter()
                .map(|(id, d)| (id.clone(), d.applied.clone()))
                .collect();
            if let Some(p) = schemes {
                let given: BTreeMap<String, PartitionScheme> = serde_json::from_str(&fs::read_to_string(&p)?)?;
                chosen.extend(given);
            }
            let mut rows = Vec::new();
            for w in &env.spec.workloads {
                let shuffled = sim::shuffle_bytes(w, &chosen, env.datasets(), &env.spec.cluster)?;
                let latency = sim::simulate_latency(w, &chosen, env.datasets(), &env.spec.cluster)?;
                rows.push(json!({
                    "query_id": w.query_id,
                    "key": sim::table_key(&chosen, &w.inputs)?,
                    "shuffle_bytes": w.inputs.iter().zip(shuffled).collect::<BTreeMap<_, _>>(),
                    "latency": latency,
                }));
            }
            Ok(pretty(&rows))
        }
        Command::Demo {
            dir,
            epochs,
            seed,
            days,
        } => demo(&dir, epochs, seed.or(cfg.seed).unwrap_or(7), days, &cfg),
    }
}

fn ir_map(paths: &[PathBuf]) -> Result<BTreeMap<String, IrGraph>, Failure> {
    Ok(read_irs(paths)?
        .into_iter()
        .map(|g| (g.ir_id().to_string(), g))
        .collect())
}

fn train_model(
    env: &SimEnvironment,
    cfg: &Config,
    tc: &TrainConfig,
) -> Result<(PolicyModel, Vec<rl::EpochReport>), Failure> {
    use partadvise::rl::Environment;
    let mut model = PolicyModel::new(env.state_len(), env.action_count(), cfg.hyper(), tc.seed);
    let reports = rl::train(&mut model, env, tc)?;
    if let Some(last) = reports.last() {
        eprintln!(
            "trained {} epochs; last mean reward {:.4}, entropy {:.4}",
            reports.len(),
            last.mean_reward,
            last.entropy
        );
    }
    Ok((model, reports))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Writes the fixture workflow to `dir`, ingests it, trains, recommends a
/// partitioning for `comments` and consults every consumer against it.
fn demo(dir: &Path, epochs: usize, seed: u64, days: u32, cfg: &Config) -> Out {
    let history_dir = dir.join("history");
    if history_dir.join("log.jsonl").exists() {
        return Err(Failure::Domain(format!(
            "{} already holds a history; use a fresh directory",
            dir.display()
        )));
    }
    let irs = fixtures::workflow_irs();
    for g in irs.iter().chain([&fixtures::comments_subreddit_join_ir()]) {
        write(&dir.join("irs").join(format!("{}.json", g.ir_id())), &g.to_json())?;
    }
    let records = fixtures::workflow_history(days);
    let log: String = records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect();
    write(&dir.join("runs.jsonl"), &log)?;
    let spec = fixtures::workflow_env_spec();
    write(&dir.join("env.json"), &pretty(&spec))?;
    eprintln!("wrote fixtures to {}", dir.display());

    let store = HistoryStore::open(&history_dir, cfg.window())?;
    for g in irs.iter().cloned() {
        store.register_ir(g)?;
    }
    for r in records {
        store.ingest(r)?;
    }
    let snap = store.snapshot();
    eprintln!("ingested {} runs into {} groups", snap.len(), snap.skeleton().groups.len());

    let env = load_env(&dir.join("env.json"), cfg)?;
    let tc = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let (model, reports) = train_model(&env, cfg, &tc)?;
    model.save(&dir.join("model.bin"))?;

    let producer = fixtures::comment_loader_ir();
    let rec = advisor::recommend(&snap, &producer, "comments", &env, &model, Mode::Argmax)?;
    let applied = rec.applied();
    write(&dir.join("applied.json"), &pretty(&applied))?;

    let mut consults = Vec::new();
    for c in snap.predict_consumers(&producer)? {
        let Some(g) = snap.ir(&c.ir_id) else { continue };
        if g.find_scanner("comments")?.is_none() {
            continue;
        }
        consults.push(json!({
            "consumer": c.ir_id,
            "joins": advisor::consult(&applied, g)?,
        }));
    }
    Ok(pretty(&json!({
        "dir": dir.display().to_string(),
        "records": snap.len(),
        "groups": snap.skeleton().groups.len(),
        "epochs": reports.len(),
        "final_mean_reward": reports.last().map(|r| r.mean_reward),
        "recommendation": {
            "dataset": rec.dataset,
            "chosen": rec.chosen,
            "distribution": rec.distribution,
            "slate": rec.slate.iter().map(|s| json!({
                "slot": s.slot,
                "strategy": s.strategy,
                "sources": s.sources,
                "signature": s.signature,
            })).collect::<Vec<_>>(),
        },
        "consults": consults,
    })))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            eprintln!("run `partadvise --help` for the synopsis");
            ExitCode::from(2)
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
