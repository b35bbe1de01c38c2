//! Acceptance suite. Prints one `[PASS]` / `[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{Kind, OracleCfg};
use sagcn::distance::{Distance, DistanceKind, LayerVectorPair, DEFAULT_EPSILON};
use sagcn::evaluation::{ndcg_at_k, recall_at_k};
use sagcn::graph::{InteractionGraph, NormalizedAdjacency};
use sagcn::io::synthetic::{write_two_block, TwoBlockSpec};
use sagcn::io::{checkpoint, load_dataset, run_train, RunConfig, ALPHA_GRID};
use sagcn::propagation::{forward, fusion_weights, EmbeddingTable, FusionConfig};
use sagcn::training::{batch_loss, loss_gradient, BprTriple};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn oracle_kind(kind: DistanceKind) -> Kind {
    match kind {
        DistanceKind::Euclidean => Kind::Euclidean,
        DistanceKind::Cosine => Kind::Cosine,
        DistanceKind::KlDivergence => Kind::Kl,
    }
}

fn table(m: usize, rows: &common::Dense) -> EmbeddingTable {
    let d = rows[0].len();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    EmbeddingTable::from_joint(m, Array2::from_shape_vec((rows.len(), d), flat).unwrap()).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let m = rng.gen_range(1..=10);
        let n = rng.gen_range(1..=10);
        let d = rng.gen_range(1..=4);
        let layers = rng.gen_range(1..=3);
        let kind = DistanceKind::ALL[case % 3];
        let alpha = rng.gen_range(0.1..5.0);
        let p = rng.gen_range(0.1..0.9);
        let edges = common::random_edges(&mut rng, m, n, p);
        let base = common::random_dense(&mut rng, m + n, d, 1.0);

        let g = InteractionGraph::new(m, n, &edges).unwrap();
        let adj = NormalizedAdjacency::from_graph(&g);
        let cfg = FusionConfig {
            alpha,
            num_layers: layers,
            ..FusionConfig::new(kind)
        };
        let got = forward(&cfg, &adj, &table(m, &base)).unwrap();
        let oracle = OracleCfg {
            alpha,
            beta: kind.default_beta(),
            kind: oracle_kind(kind),
            eps: DEFAULT_EPSILON,
            layers,
            mean: false,
        };
        let want = common::oracle_forward(&oracle, &common::dense_normalized(m, n, &edges), &base);
        for v in 0..m + n {
            for t in 0..d {
                worst = worst.max((got.node(v)[t] - want[v][t]).abs());
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(10),
        format!("100 graphs, max |err| = {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let (m, n, d) = (4, 5, 4);
    let lambda = 1e-4;
    let h = 1e-4;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for kind in DistanceKind::ALL {
        let cfg = FusionConfig {
            num_layers: 2,
            ..FusionConfig::new(kind)
        };
        for instance in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * instance + kind as u64);
            let mut edges = common::random_edges(&mut rng, m, n, 0.4);
            for u in 0..m {
                edges.push((u, rng.gen_range(0..n)));
            }
            let g = InteractionGraph::new(m, n, &edges).unwrap();
            let adj = NormalizedAdjacency::from_graph(&g);
            let batch: Vec<BprTriple> = g
                .edges()
                .iter()
                .filter_map(|&(u, i)| {
                    let free: Vec<usize> = (0..n).filter(|j| !g.has_edge(u, *j)).collect();
                    free.choose(&mut rng).map(|&j| BprTriple { user: u, pos_item: i, neg_item: j })
                })
                .collect();
            let base = EmbeddingTable::random(m, n, d, 1.0, &mut rng);
            let grad = loss_gradient(&cfg, lambda, &adj, &base, &batch).unwrap();
            for r in 0..m + n {
                for c in 0..d {
                    let a = grad[[r, c]];
                    if a.abs() <= 1e-8 {
                        continue;
                    }
                    let mut plus = base.clone();
                    plus.joint_mut()[[r, c]] += h;
                    let mut minus = base.clone();
                    minus.joint_mut()[[r, c]] -= h;
                    let fd = (batch_loss(&cfg, lambda, &adj, &plus, &batch).unwrap()
                        - batch_loss(&cfg, lambda, &adj, &minus, &batch).unwrap())
                        / (2.0 * h);
                    worst = worst.max((a - fd).abs() / a.abs());
                    checked += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    outcome(
        worst <= 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "60 instances, {checked} coordinates, max rel err = {worst:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn weight_properties() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    let w_new = |alpha: f64, beta: f64, dist: f64| {
        let cfg = FusionConfig {
            alpha,
            beta,
            ..FusionConfig::new(DistanceKind::Euclidean)
        };
        fusion_weights(&cfg, dist).unwrap()
    };
    for _ in 0..100_000 {
        let alpha = rng.gen_range(0.01..10.0);
        let beta = rng.gen_range(1e-3..100.0);
        let dist = rng.gen_range(1e-3..10.0);
        let w = w_new(alpha, beta, dist);
        if (w.w_old + w.w_new - 1.0).abs() > 1e-12 {
            failures.push(format!("sum at ({alpha}, {beta}, {dist})"));
        }
        if w_new(alpha, beta, 0.0).w_old != 1.0 {
            failures.push(format!("w_old at dist 0 ({alpha}, {beta})"));
        }
        let step = 1.0 + rng.gen_range(1e-3..1.0);
        let up = [
            w_new(alpha * step, beta, dist),
            w_new(alpha, beta * step, dist),
            w_new(alpha, beta, dist * step),
        ];
        if up.iter().any(|u| u.w_new <= w.w_new) {
            failures.push(format!("monotonicity at ({alpha}, {beta}, {dist})"));
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failures.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "1e5 triples, {} violations{}, {:.2}s",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default(),
            elapsed.as_secs_f64()
        ),
    )
}

fn distance_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problems = Vec::new();
    let eu = Distance::new(DistanceKind::Euclidean);
    let cos = Distance::new(DistanceKind::Cosine);
    let kl = Distance::new(DistanceKind::KlDivergence);
    let eval = |m: &Distance, x: &[f64], y: &[f64]| m.eval(LayerVectorPair::new(x, y).unwrap());
    let vec = |rng: &mut ChaCha8Rng, d: usize| -> Vec<f64> { (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect() };

    for _ in 0..10_000 {
        let d = rng.gen_range(1..=8);
        let (x, y, z) = (vec(&mut rng, d), vec(&mut rng, d), vec(&mut rng, d));
        for m in [&eu, &cos, &kl] {
            if eval(m, &x, &y) < 0.0 {
                problems.push("negative distance");
            }
        }
        let c = eval(&cos, &x, &y);
        if !(0.0..=1.0).contains(&c) {
            problems.push("cosine outside [0,1]");
        }
        if eval(&eu, &x, &z) > eval(&eu, &x, &y) + eval(&eu, &y, &z) + 1e-12 {
            problems.push("triangle inequality");
        }
        // zero iff the normalized distributions agree
        let shift = rng.gen_range(-5.0..5.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        if eval(&kl, &x, &shifted) > 1e-12 {
            problems.push("KL non-zero for equal distributions");
        }
        let (p, q) = (common::softmax(&x), common::softmax(&y));
        let gap = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-6 && eval(&kl, &x, &y) <= 0.0 {
            problems.push("KL zero for distinct distributions");
        }
    }
    let opposite = eval(&cos, &[1.0, 0.0], &[-1.0, 0.0]);
    if opposite.abs() > 1e-8 {
        problems.push("cosine of opposite vectors");
    }
    problems.dedup();
    outcome(
        problems.is_empty(),
        format!("1e4 random triples, cos((1,0),(-1,0)) = {opposite:.1e}, problems: {problems:?}"),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=30);
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.shuffle(&mut rng);
        let mut relevant: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        if relevant.is_empty() {
            relevant.push(rng.gen_range(0..n));
        }
        let set: HashSet<usize> = relevant.iter().copied().collect();
        let k = rng.gen_range(1..=n + 5);
        worst = worst
            .max((recall_at_k(&ranked, &relevant, k) - common::brute_recall(&ranked, &set, k)).abs())
            .max((ndcg_at_k(&ranked, &relevant, k) - common::brute_ndcg(&ranked, &set, k)).abs());
    }
    let second = ndcg_at_k(&[4, 7, 1], &[7], 3);
    let target = 1.0 / 3f64.log2();
    outcome(
        worst <= 1e-12 && (second - target).abs() <= 1e-9,
        format!("1000 tasks, max |err| = {worst:.1e}, rank-2 NDCG = {second:.5}"),
    )
}

fn synthetic(dir: &Path) -> PathBuf {
    let path = dir.join("two_block.tsv");
    write_two_block(&path, &TwoBlockSpec::default()).unwrap();
    path
}

/// 5 of the 20 interactions per user are held out.
fn base_config(data: &Path, out: &Path) -> RunConfig {
    RunConfig {
        data: Some(data.to_path_buf()),
        out: out.to_path_buf(),
        train_fraction: 0.75,
        distance: DistanceKind::Euclidean,
        alpha: 1.5,
        beta: Some(1.0),
        layers: 3,
        ..RunConfig::default()
    }
}

/// Expected Recall@20 of a uniformly random ranking: each held-out item
/// lands in the top 20 of `C` candidates with probability `min(20, C) / C`.
fn random_recall(cfg: &RunConfig) -> f64 {
    let data = load_dataset(cfg).unwrap();
    let known = data.split.known_items();
    let test = data.split.test_items();
    let n = data.split.num_items as f64;
    let mut total = 0.0;
    let mut users = 0;
    for u in 0..test.len() {
        if test[u].is_empty() {
            continue;
        }
        let c = n - known[u].len() as f64;
        total += c.min(20.0) / c;
        users += 1;
    }
    total / users as f64
}

/// Fraction of transitions where the trailing 3-epoch mean drops.
fn smoothed_decrease(losses: &[f64]) -> Option<f64> {
    let smooth: Vec<f64> = losses.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    if smooth.len() < 2 {
        return None;
    }
    let down = smooth.windows(2).filter(|w| w[1] < w[0]).count();
    Some(down as f64 / (smooth.len() - 1) as f64)
}

fn end_to_end(dir: &Path, data: &Path) -> Outcome {
    let started = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in 1..=3u64 {
        let mut cfg = base_config(data, &dir.join(format!("e2e-{seed}")));
        cfg.seed = seed;
        let baseline = random_recall(&cfg);
        let run = run_train(&cfg).unwrap();
        let recall = run.report.recall_at(20).unwrap();
        let losses: Vec<f64> = run.outcome.log.iter().map(|r| r.loss).collect();
        let decrease = smoothed_decrease(&losses).unwrap_or(0.0);
        pass &= recall >= 2.5 * baseline && decrease >= 0.8;
        parts.push(format!(
            "seed {seed}: R@20 {recall:.4} = {:.2}x random {baseline:.4}, loss down {:.0}% of {} epochs",
            recall / baseline,
            100.0 * decrease,
            losses.len()
        ));
    }
    let elapsed = started.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    parts.push(format!("{:.1}s", elapsed.as_secs_f64()));
    outcome(pass, parts.join("; "))
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sagcn"))
        .args(args)
        .output()
        .expect("sagcn binary runs")
}

fn common_flags<'a>(data: &'a str, out: &'a str) -> Vec<&'a str> {
    vec!["--data", data, "--out", out, "--train-frac", "0.75"]
}

/// Reads `sweep.tsv` into (header, rows).
fn read_sweep(dir: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(dir.join("sweep.tsv")).unwrap_or_default();
    let mut lines = text.lines().map(|l| l.split('\t').map(str::to_string).collect::<Vec<_>>());
    let header = lines.next().unwrap_or_default();
    (header, lines.collect())
}

fn baseline_comparison(dir: &Path, data: &Path) -> Outcome {
    let out = dir.join("compare");
    let (data_s, out_s) = (data.to_str().unwrap(), out.to_str().unwrap());
    let mut args = vec!["sweep"];
    args.extend(common_flags(data_s, out_s));
    args.extend([
        "--distance", "euclidean", "--beta", "1", "--layers", "3",
        "--aggregators", "sagcn,mean", "--alphas", "1.5", "--seeds", "1,2,3",
    ]);
    let status = cli(&args);
    if !status.status.success() {
        return outcome(false, format!("sweep failed: {}", String::from_utf8_lossy(&status.stderr).trim()));
    }
    let (header, rows) = read_sweep(&out);
    let col = header.iter().position(|h| h == "recall@20").unwrap();
    let mean_of = |agg: &str| {
        let vals: Vec<f64> = rows.iter().filter(|r| r[0] == agg).map(|r| r[col].parse::<f64>().unwrap()).collect();
        (vals.iter().sum::<f64>() / vals.len() as f64, vals.len())
    };
    let (adaptive, na) = mean_of("sagcn");
    let (mean, nm) = mean_of("mean");
    outcome(
        na == 3 && nm == 3 && adaptive >= 0.99 * mean,
        format!("mean R@20 over 3 seeds: sagcn {adaptive:.4}, mean-baseline {mean:.4} (sweep.tsv, {} rows)", rows.len()),
    )
}

fn determinism(dir: &Path, data: &Path) -> Outcome {
    let data_s = data.to_str().unwrap();
    let mut ckpts = Vec::new();
    for name in ["det-a", "det-b"] {
        let out = dir.join(name);
        let mut args = vec!["train"];
        args.extend(common_flags(data_s, out.to_str().unwrap()));
        args.extend(["--seed", "11"]);
        let status = cli(&args);
        if !status.status.success() {
            return outcome(false, format!("train failed: {}", String::from_utf8_lossy(&status.stderr).trim()));
        }
        ckpts.push(std::fs::read(out.join("model.ckpt")).unwrap());
    }
    let identical = ckpts[0] == ckpts[1];
    let (tbl, hash) = checkpoint::decode(&ckpts[0]).unwrap();
    let round_trip = checkpoint::encode(&tbl, hash).unwrap() == ckpts[0];

    let path = dir.join("roundtrip.ckpt");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut random = EmbeddingTable::random(7, 5, 6, 1.0, &mut rng);
    random.joint_mut()[[0, 0]] = -0.0;
    random.joint_mut()[[1, 1]] = f64::MIN_POSITIVE / 4.0;
    checkpoint::save(&path, &random, 42, "").unwrap();
    let (back, h) = checkpoint::load(&path).unwrap();
    let bits = |t: &EmbeddingTable| t.joint().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let file_round_trip = h == 42 && bits(&back) == bits(&random);
    outcome(
        identical && round_trip && file_round_trip,
        format!(
            "runs identical: {identical} ({} bytes), decode/encode identity: {round_trip}, save/load bits: {file_round_trip}",
            ckpts[0].len()
        ),
    )
}

fn alpha_sweep(dir: &Path, data: &Path) -> Outcome {
    let out = dir.join("alpha");
    let mut args = vec!["sweep"];
    args.extend(common_flags(data.to_str().unwrap(), out.to_str().unwrap()));
    let status = cli(&args);
    if !status.status.success() {
        return outcome(false, format!("sweep failed: {}", String::from_utf8_lossy(&status.stderr).trim()));
    }
    let (header, rows) = read_sweep(&out);
    let alpha_col = header.iter().position(|h| h == "alpha").unwrap();
    let status_col = header.iter().position(|h| h == "status").unwrap();
    let metric_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("recall@") || h.starts_with("ndcg@"))
        .map(|(i, _)| i)
        .collect();
    let mut alphas: Vec<f64> = Vec::new();
    let mut well_formed = rows.len() == 7;
    for r in &rows {
        well_formed &= r.len() == header.len() && r[status_col] == "ok";
        well_formed &= metric_cols
            .iter()
            .all(|&c| r[c].parse::<f64>().is_ok_and(|v| (0.0..=1.0).contains(&v)));
        alphas.extend(r[alpha_col].parse::<f64>());
    }
    alphas.sort_by(f64::total_cmp);
    well_formed &= alphas == ALPHA_GRID;
    outcome(well_formed, format!("{} rows, alphas {alphas:?}", rows.len()))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let data = synthetic(dir.path());
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (2, "forward matches dense oracle", oracle_equivalence()),
        (3, "loss gradient matches finite differences", gradient_check()),
        (4, "fusion weight properties", weight_properties()),
        (5, "distance properties", distance_properties()),
        (6, "metric oracles", metric_oracles()),
        (7, "end-to-end learning on two-block data", end_to_end(dir.path(), &data)),
        (8, "sagcn vs mean-baseline sweep", baseline_comparison(dir.path(), &data)),
        (9, "deterministic checkpoints", determinism(dir.path(), &data)),
        (10, "alpha grid sweep", alpha_sweep(dir.path(), &data)),
    ];
    let substitutes = results.iter().all(|(_, _, o)| o.pass);
    results.insert(
        0,
        (
            1,
            "full-scale benchmarks replaced by criteria 2-10",
            outcome(substitutes, format!("substitute criteria all pass: {substitutes}")),
        ),
    );

    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
