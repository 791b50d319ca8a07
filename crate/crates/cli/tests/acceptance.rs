//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use partadvise::enumerate::{candidates_in, merge, search, PartitionerCandidate};
use partadvise::features::{
    build_state, combine_shared, complexity, pearson, CandidateFeatures, EnvFeatures, FeatureWindow,
    QueryStats, SlateEntry,
};
use partadvise::fixtures;
use partadvise::history::HistorySnapshot;
use partadvise::ir::{IrGraph, NodeKind};
use partadvise::rl::{
    reward, train_until, BanditEnvironment, Hyperparams, PolicyModel, TrainConfig, Transition, WorkloadRun,
};
use partadvise::signature::{candidate_signature, match_candidate};
use partadvise::sim::{assign, range_buckets, ClusterConfig, KeyModel, PartitionScheme, SimDataset};
use partadvise_testkit::{
    brute_longest_path, isomorphic, mutate, oracle_candidates, oracle_strategy, permute_dag,
    permute_ids, random_ir, two_pass_pearson, DagParams, Sub,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn scans(g: &IrGraph) -> Vec<u32> {
    g.nodes().iter().filter(|n| n.kind == NodeKind::Scan).map(|n| n.id).collect()
}

fn enumeration_oracle() -> Outcome {
    let start = Instant::now();
    let p = DagParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs = 0usize;
    for i in 0..500 {
        let g = random_ir(&mut rng, &format!("g{i}"), &p);
        for scan in scans(&g) {
            let got: BTreeMap<(u32, u32), Sub> = merge(&search(&g, scan).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|c| ((c.subgraph.root(), c.subgraph.leaf()), Sub::of_dag(&c.subgraph)))
                .collect();
            let want = oracle_candidates(&g, scan);
            if got != want {
                return Err(format!("graph {i} scan {scan}: {}", g.to_json()));
            }
            pairs += want.len();
        }
    }
    let took = start.elapsed();
    if took >= Duration::from_secs(10) {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("500 graphs, {pairs} (scan, anchor) pairs agree in {took:?}"))
}

/// Anchors where `applied` should match in `g`, by brute-force isomorphism.
fn oracle_matches(applied: &PartitionerCandidate, g: &IrGraph) -> BTreeSet<u32> {
    let Some(scan) = g
        .nodes()
        .iter()
        .find(|n| n.kind == NodeKind::Scan && n.label == applied.dataset)
        .map(|n| n.id)
    else {
        return BTreeSet::new();
    };
    let want = Sub::of_dag(&applied.subgraph);
    oracle_candidates(g, scan)
        .into_iter()
        .filter(|((_, a), sub)| oracle_strategy(g, *a) == applied.strategy && isomorphic(&want, sub))
        .map(|((_, a), _)| a)
        .collect()
}

fn matching_oracle() -> Outcome {
    let p = DagParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut done, mut positive) = (0, 0);
    let mut attempts = 0;
    while done < 500 {
        attempts += 1;
        if attempts > 50_000 {
            return Err(format!("only {done} instances generated"));
        }
        let g1 = random_ir(&mut rng, "g1", &p);
        let all: Vec<PartitionerCandidate> = g1
            .datasets()
            .into_iter()
            .flat_map(|d| candidates_in(&g1, d).unwrap_or_default())
            .collect();
        let Some(applied) = all.choose(&mut rng).cloned() else {
            continue;
        };
        let g2 = match rng.random_range(0..3) {
            0 => permute_ids(&mut rng, &g1).0,
            1 => {
                let m = mutate(&mut rng, &g1, &p);
                if m.validate().is_err() {
                    continue;
                }
                permute_ids(&mut rng, &m).0
            }
            _ => random_ir(&mut rng, "g2", &p),
        };
        let got: BTreeSet<u32> = match match_candidate(&applied, &g2) {
            Ok(m) => m.into_iter().map(|m| m.anchor).collect(),
            Err(_) if g2.find_scanner(&applied.dataset).ok().flatten().is_none() => BTreeSet::new(),
            Err(e) => return Err(format!("match failed: {e}")),
        };
        let want = oracle_matches(&applied, &g2);
        if got != want {
            return Err(format!(
                "witness: applied {} vs consumer {}; matcher {got:?}, oracle {want:?}",
                applied.to_json(),
                g2.to_json()
            ));
        }
        positive += usize::from(!want.is_empty());
        done += 1;
    }
    Ok(format!("500 instances agree ({positive} with a match)"))
}

fn signature_stability() -> Outcome {
    let p = DagParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cands = Vec::new();
    while cands.len() < 200 {
        let g = random_ir(&mut rng, "g", &p);
        for d in g.datasets() {
            cands.extend(candidates_in(&g, d).unwrap_or_default());
        }
    }
    cands.truncate(200);
    for c in &cands {
        for _ in 0..10 {
            let sig = candidate_signature(&permute_dag(&mut rng, &c.subgraph)).map_err(|e| e.to_string())?;
            if &sig != c.signature() {
                return Err(format!("{} became {}", c.signature().text(), sig.text()));
            }
        }
    }
    Ok("200 candidates x 10 permutations, no mismatch".into())
}

fn reddit_fixture() -> Outcome {
    let g = fixtures::reddit_features_ir();
    let all: Vec<PartitionerCandidate> = ["comments", "authors", "subreddits"]
        .iter()
        .flat_map(|d| candidates_in(&g, d).unwrap())
        .collect();
    if all.len() != 3 {
        return Err(format!("{} candidates", all.len()));
    }
    let c = all.iter().find(|c| c.dataset == "comments").ok_or("no comments candidate")?;
    let kinds: BTreeMap<u32, NodeKind> = c.subgraph.nodes().iter().map(|n| (n.id, n.kind)).collect();
    if kinds.get(&5) != Some(&NodeKind::Conditional)
        || kinds.get(&3) != Some(&NodeKind::Member)
        || kinds.get(&4) != Some(&NodeKind::Member)
    {
        return Err(format!("comments candidate nodes {kinds:?}"));
    }
    let dp = complexity(c);
    let brute = brute_longest_path(&c.subgraph);
    if dp != brute {
        return Err(format!("dp {dp} vs brute {brute}"));
    }
    Ok(format!("3 candidates; comments candidate merged, complexity {dp}"))
}

fn cluster(m: u32) -> ClusterConfig {
    ClusterConfig {
        m,
        cores: 1.0,
        memory: 1.0,
        disk: 1.0,
        bandwidth: 1.0,
        base_cpu_rate: 1.0,
    }
}

fn keyed(keys: Vec<String>) -> SimDataset {
    SimDataset {
        id: "d".into(),
        n: keys.len() as u64,
        object_bytes: 1.0,
        key_model: Some(KeyModel::Explicit { keys }),
        applied: PartitionScheme::RoundRobin,
    }
}

fn partition_functions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let keys: Vec<String> = (0..10_000).map(|_| format!("k{}", rng.random_range(0..2_000))).collect();
    let d = keyed(keys.clone());
    let hash = PartitionScheme::Hash { signature: "s".into() };
    for m in [1, 2, 3, 7, 16] {
        let c = cluster(m);
        let nodes = assign(&d, &hash, &c).map_err(|e| e.to_string())?;
        let mut home: BTreeMap<&str, u32> = BTreeMap::new();
        for (k, &n) in keys.iter().zip(&nodes) {
            if *home.entry(k).or_insert(n) != n {
                return Err(format!("m={m}: key {k} on two nodes"));
            }
        }
        let rr = assign(&d, &PartitionScheme::RoundRobin, &c).map_err(|e| e.to_string())?;
        let mut loads = vec![0usize; m as usize];
        rr.iter().for_each(|&n| loads[n as usize] += 1);
        if loads.iter().max().unwrap() - loads.iter().min().unwrap() > 1 {
            return Err(format!("m={m}: round-robin loads {loads:?}"));
        }
        let buckets = range_buckets(&d, m).map_err(|e| e.to_string())?;
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        if order.windows(2).any(|w| buckets[w[0]] > buckets[w[1]]) {
            return Err(format!("m={m}: range buckets out of key order"));
        }
        if m == 1 {
            for s in [
                hash.clone(),
                PartitionScheme::Range { signature: "s".into() },
                PartitionScheme::RoundRobin,
                PartitionScheme::Random { seed: 9 },
            ] {
                if assign(&d, &s, &c).map_err(|e| e.to_string())?.iter().any(|&n| n != 0) {
                    return Err(format!("m=1: {} leaves node 0", s.label()));
                }
            }
        }
    }
    let ten = keyed((0..10).map(|i| i.to_string()).collect());
    let rr = assign(&ten, &PartitionScheme::RoundRobin, &cluster(3)).map_err(|e| e.to_string())?;
    let counts: Vec<usize> = (0..3).map(|n| rr.iter().filter(|&&x| x == n).count()).collect();
    if counts != [4, 3, 3] {
        return Err(format!("round-robin n=10 m=3 gave {counts:?}"));
    }
    Ok("co-location, balance, order, (4,3,3) and m=1 hold".into())
}

fn runs(v: &[(f64, f64)]) -> Vec<WorkloadRun> {
    v.iter().map(|&(bytes, latency)| WorkloadRun { bytes, latency }).collect()
}

fn reward_formula() -> Outcome {
    let base = runs(&[(100.0, 20.0), (200.0, 50.0), (50.0, 10.0)]);
    let same = reward(&base, &base).map_err(|e| e.to_string())?;
    let half = reward(&runs(&[(100.0, 10.0), (200.0, 25.0), (50.0, 5.0)]), &base).map_err(|e| e.to_string())?;
    let mixed = reward(&runs(&[(100.0, 10.0), (200.0, 40.0), (50.0, 5.0)]), &base).map_err(|e| e.to_string())?;
    // (350 / 55) / (350 / 80)
    let hand = 16.0 / 11.0;
    if same != 1.0 || half != 2.0 || (mixed - hand).abs() > 1e-12 {
        return Err(format!("same {same}, half {half}, mixed {mixed} vs {hand}"));
    }
    Ok(format!("1.0, 2.0, mixed {mixed:.15}"))
}

const GRAD_TOL: f64 = 1e-4;

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for m in 0..20 {
        let hyper = Hyperparams {
            beta: rng.random_range(0.0..0.5),
            gamma: rng.random_range(0.5..0.99),
            ..Hyperparams::default()
        };
        let model = PolicyModel::with_hidden(8, &[4, 3], 3, hyper, 100 + m, 0.5);
        let batch: Vec<Transition> = (0..rng.random_range(1..=6))
            .map(|_| Transition {
                state: (0..8).map(|_| rng.random_range(0.0..1.0)).collect(),
                action: rng.random_range(0..3),
                reward: rng.random_range(0.5..2.0),
                next_state: (0..8).map(|_| rng.random_range(0.0..1.0)).collect(),
            })
            .collect();
        let g = model.gradients(&batch).map_err(|e| e.to_string())?;
        let (adv, targets) = (&g.advantages, &g.targets);
        // A central difference cannot resolve less than ε·|L|/h in absolute
        // terms, so relative error is measured against at least that noise
        // scaled up to the tolerance.
        let loss = model.surrogate_loss(&batch, adv, targets);
        let floor = f64::EPSILON * loss.abs().max(1.0) / h / GRAD_TOL;
        for net in 0..2 {
            let analytic: Vec<f64> = if net == 0 { g.actor.params() } else { g.critic.params() }
                .copied()
                .collect();
            for (i, &a) in analytic.iter().enumerate() {
                let at = |delta: f64| {
                    let mut probe = model.clone();
                    let layer = if net == 0 { &mut probe.actor } else { &mut probe.critic };
                    *layer.params_mut().nth(i).unwrap() += delta;
                    probe.surrogate_loss(&batch, adv, targets)
                };
                let numeric = (at(h) - at(-h)) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
                worst = worst.max(rel);
                if rel > GRAD_TOL {
                    let which = if net == 0 { "actor" } else { "critic" };
                    return Err(format!("model {m} {which} param {i}: analytic {a}, numeric {numeric}"));
                }
            }
        }
    }
    Ok(format!("20 models, worst relative error {worst:.2e}"))
}

fn rl_convergence() -> Outcome {
    let start = Instant::now();
    let feat = |f: f64, r: f64| CandidateFeatures {
        frequency: f,
        distance: 86_400.0,
        recency: r,
        complexity: 3.0,
        selectivity: 0.5,
        key_distribution: 1000.0,
        num_copartitioned: 1.0,
        size_copartitioned: 1e9,
    };
    let entries: Vec<SlateEntry> = [(20.0, 100.0), (15.0, 400.0), (10.0, 900.0)]
        .iter()
        .enumerate()
        .map(|(i, &(f, r))| SlateEntry {
            key: format!("c{i}"),
            features: feat(f, r),
        })
        .collect();
    let env = EnvFeatures {
        dataset_bytes: 4e9,
        workers: 8.0,
        cores: 4.0,
        memory: 32e9,
        disk: 1e12,
    };
    let window = FeatureWindow::from_maxima(
        [30.0, 2.0 * 86_400.0, 3600.0, 10.0, 1.0, 1e4, 3.0, 1e10],
        [1e10, 16.0, 8.0, 64e9, 2e12],
    );
    let state = build_state(&entries, &env, 3, &window);
    let dominant = 1;
    let mut rewards = vec![1.0; state.action_count()];
    rewards[dominant] = 2.0;
    let bandit = BanditEnvironment {
        state: state.values.clone(),
        rewards,
    };
    let mut model = PolicyModel::new(bandit.state.len(), bandit.rewards.len(), Hyperparams::default(), 8);
    let cfg = TrainConfig {
        epochs: 2000,
        seed: 8,
        ..TrainConfig::default()
    };
    let mut reached = None;
    train_until(&mut model, &bandit, &cfg, |m, r| {
        let p = m.probabilities(&bandit.state).expect("state fits the model");
        let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        if best == dominant && p[dominant] >= 0.9 {
            reached = Some((r.epoch + 1, p[dominant]));
            return false;
        }
        true
    })
    .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let (epochs, p) = reached.ok_or_else(|| {
        let p = model.probabilities(&bandit.state).unwrap();
        format!("not converged after 2000 epochs: {p:?}")
    })?;
    if took > Duration::from_secs(600) {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("P(dominant) = {p:.3} after {epochs} epochs in {took:?}"))
}

fn shared_combination() -> Outcome {
    let q = |distance, frequency, recency, selectivity, key_distribution| QueryStats {
        distance,
        frequency,
        recency,
        selectivity,
        key_distribution,
    };
    let f = combine_shared(&[q(10.0, 2.0, 5.0, 0.3, 100.0), q(20.0, 4.0, 7.0, 0.5, 50.0)], 4.0, 1.0, 10.0)
        .map_err(|e| e.to_string())?;
    let got = (f.distance, f.frequency, f.recency, f.selectivity, f.key_distribution);
    if got != (15.0, 3.0, 6.0, 0.5, 50.0) {
        return Err(format!("{got:?}"));
    }
    Ok("(15, 3, 6, 0.5, 50)".into())
}

fn skeleton_condensation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let irs = fixtures::workflow_irs();
    let mut twins = Vec::new();
    for g in &irs {
        let (p, _) = permute_ids(&mut rng, g);
        twins.push(IrGraph::new(format!("{}-b", g.ir_id()), p.nodes().to_vec(), p.edges().to_vec()));
    }
    let mut records = fixtures::workflow_history(20);
    for (i, r) in records.iter_mut().enumerate() {
        if (i / 5) % 2 == 1 {
            r.ir_id = format!("{}-b", r.ir_id);
        }
    }
    if records.len() != 100 {
        return Err(format!("{} records", records.len()));
    }
    let build = |order: &[usize]| -> Result<HistorySnapshot, String> {
        let mut h = HistorySnapshot::new(partadvise::history::DEFAULT_HISTORY_WINDOW);
        for g in irs.iter().chain(&twins) {
            h.register_ir(g.clone()).map_err(|e| e.to_string())?;
        }
        for &i in order {
            h.ingest(records[i].clone()).map_err(|e| e.to_string())?;
        }
        Ok(h)
    };
    let mut order: Vec<usize> = (0..records.len()).collect();
    let first = build(&order)?;
    let reference = first.skeleton().to_json();
    if first.skeleton().groups.len() != 5 {
        return Err(format!("{} groups", first.skeleton().groups.len()));
    }
    for _ in 1..10 {
        order.shuffle(&mut rng);
        if build(&order)?.skeleton().to_json() != reference {
            return Err("skeleton depends on ingestion order".into());
        }
    }
    let predicted: BTreeSet<_> = first
        .predict_consumers(&fixtures::comment_loader_ir())
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|c| c.group)
        .collect();
    let want: BTreeSet<_> = ["reddit-features", "comments-by-author"]
        .iter()
        .filter_map(|id| first.group_of_ir(id))
        .collect();
    if want.len() != 2 || predicted != want {
        return Err(format!("predicted {predicted:?}, expected {want:?}"));
    }
    Ok("10 orders, identical skeletons; consumers = extractor + author join".into())
}

fn pcc() -> Outcome {
    let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.7 - 3.0).collect();
    let up: Vec<f64> = xs.iter().map(|x| 3.0 * x + 2.0).collect();
    let down: Vec<f64> = xs.iter().map(|x| -0.25 * x + 10.0).collect();
    let (a, b) = (pearson(&xs, &up).unwrap(), pearson(&xs, &down).unwrap());
    if a != 1.0 || b != -1.0 {
        return Err(format!("linear fixtures gave {a}, {b}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..200);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 * x + rng.random_range(-50.0..50.0)).collect();
        let diff = (pearson(&xs, &ys).map_err(|e| e.to_string())? - two_pass_pearson(&xs, &ys)).abs();
        worst = worst.max(diff);
    }
    if worst > 1e-12 {
        return Err(format!("max difference {worst:e}"));
    }
    Ok(format!("exact +/-1; 100 series within {worst:.1e}"))
}

fn run_bin(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_partadvise"))
        .args(args)
        .env_remove("LACHESIS_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let start = Instant::now();
    let out = run_bin(&["demo", "--dir", &dir.display().to_string()])?;
    let took = start.elapsed();
    if took > Duration::from_secs(120) {
        return Err(format!("demo took {took:?}"));
    }
    let v: serde_json::Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    let verdicts: Vec<&str> = v["consults"]
        .as_array()
        .into_iter()
        .flatten()
        .flat_map(|c| c["joins"].as_array().into_iter().flatten())
        .filter_map(|j| j["verdict"].as_str())
        .collect();
    if !verdicts.contains(&"local") {
        return Err(format!("no local join; chosen {}", v["recommendation"]["chosen"]));
    }
    let path = |p: &str| dir.join(p).display().to_string();
    let recommend = || {
        let irs: Vec<String> = std::fs::read_dir(dir.join("irs"))
            .map_err(|e| e.to_string())?
            .map(|e| e.map(|e| e.path().display().to_string()).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let mut args = vec![
            "recommend".to_string(),
            "--producer".into(),
            path("irs/comment-loader.json"),
            "--dataset".into(),
            "comments".into(),
            "--model".into(),
            path("model.bin"),
            "--env".into(),
            path("env.json"),
            "--argmax".into(),
            "--log".into(),
            path("runs.jsonl"),
            "--ir".into(),
        ];
        args.extend(irs);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run_bin(&refs)
    };
    let (a, b) = (recommend()?, recommend()?);
    if a != b || a.is_empty() {
        return Err("recommend --argmax output differs between runs".into());
    }
    let from_store = run_bin(&[
        "recommend",
        "--producer",
        &path("irs/comment-loader.json"),
        "--dataset",
        "comments",
        "--model",
        &path("model.bin"),
        "--env",
        &path("env.json"),
        "--history",
        &path("history"),
    ])?;
    if from_store.is_empty() || !Path::new(&path("applied.json")).exists() {
        return Err("demo outputs incomplete".into());
    }
    Ok(format!(
        "demo in {took:?}, verdicts {verdicts:?}, recommend byte-identical ({} bytes)",
        a.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("enumeration matches brute-force path union", enumeration_oracle),
        ("matching agrees with isomorphism oracle", matching_oracle),
        ("candidate signatures stable under relabeling", signature_stability),
        ("reddit fixture candidates and complexity", reddit_fixture),
        ("partitioning functions", partition_functions),
        ("reward formula", reward_formula),
        ("gradient check", gradient_check),
        ("policy converges on dominant candidate", rl_convergence),
        ("shared-candidate combination", shared_combination),
        ("skeleton condensation", skeleton_condensation),
        ("pearson correlation", pcc),
        ("end-to-end determinism", end_to_end),
    ];
    let mut failed = 0;
    let stdout = std::io::stdout();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let line = match f() {
            Ok(detail) => format!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                format!("FAIL criterion {}: {name}: {why}", i + 1)
            }
        };
        let mut lock = stdout.lock();
        let _ = writeln!(lock, "{line}");
        let _ = lock.flush();
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
