//! Acceptance suite. Runs as a plain binary so each criterion prints one
//! `PASS`/`FAIL` line regardless of output capture; exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use mazeadapt::autodiff::Tensor;
use mazeadapt::controller::{Controller, ControllerInput};
use mazeadapt::gcn::{self, init_params, GcnConfig, GcnMode, GraphInput, InputOptions};
use mazeadapt::harness::{blocked_mazes, run_experiment, slot_seed, ExperimentConfig, RunReport};
use mazeadapt::maze::{create_maze_graph, sample_reward_mask, GridMaze, SPATIAL_FEATURE_DIM};
use mazeadapt::metrics::{distance_correlations, policy_accuracy, spearman, MazeMetric};
use mazeadapt::oracle::{bfs_shortest_path, dp_value, enumerate_monotone_paths, optimal_policy};
use rand::Rng;

const SEEDS: [u64; 3] = [0, 1, 2];

type Verdict = (bool, String);

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn run(name: &str) -> impl Fn(u8, u64) -> RunReport + '_ {
    move |id, seed| {
        run_experiment(&ExperimentConfig::for_experiment(id, seed).unwrap(), None)
            .unwrap_or_else(|e| panic!("{name}: experiment {id} seed {seed}: {e}"))
    }
}

fn c1_gradients() -> Verdict {
    let start = Instant::now();
    let mut worst = [0.0f64; 4];
    for seed in 0..20 {
        worst[0] = worst[0].max(gcn_bce_grad_error(seed));
        worst[1] = worst[1].max(gcn_mse_grad_error(seed));
        worst[2] = worst[2].max(controller_grad_error(seed, ControllerInput::Basic));
        worst[3] = worst[3].max(controller_grad_error(seed, ControllerInput::Enriched));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst.iter().all(|&e| e < GRAD_TOL) && secs < 30.0,
        format!(
            "worst rel err bce {:.1e}, mse {:.1e}, controller {:.1e}/{:.1e} (basic/enriched) over 20 instances; {secs:.1}s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn c2_oracles() -> Verdict {
    let start = Instant::now();
    let mut dp_ok = 0;
    for n in 1..=4 {
        for seed in 0..50u64 {
            let mask = sample_reward_mask(n, 0.5, 1_000 * n as u64 + seed).unwrap();
            let best = enumerate_monotone_paths(&mask, 1_000_000)
                .unwrap()
                .into_iter()
                .map(|(_, s)| s)
                .fold(f64::NEG_INFINITY, f64::max);
            dp_ok += usize::from(dp_value(&mask).values[0] == best);
        }
    }
    let mut bfs_ok = 0;
    for k in 0..100u64 {
        let n = 2 + (k % 7) as usize;
        let maze = create_maze_graph(n, [0.1, 0.2, 0.3, 0.4][(k % 4) as usize], 90_000 + k, true).unwrap();
        let len = bfs_shortest_path(&maze).unwrap().path.len() - 1;
        bfs_ok += usize::from(Some(len) == dijkstra_distance(&maze));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        dp_ok == 200 && bfs_ok == 100 && secs < 30.0,
        format!("dp {dp_ok}/200 masks (n=1..4), bfs {bfs_ok}/100 mazes (n=2..8); {secs:.1}s"),
    )
}

fn c3_c4_experiment_1() -> (Verdict, Verdict) {
    let start = Instant::now();
    let reports: Vec<RunReport> = SEEDS.iter().map(|&s| run("C3")(1, s)).collect();
    let secs = start.elapsed().as_secs_f64();
    let held = |f: &dyn Fn(&RunReport) -> f64| mean(&reports.iter().map(f).collect::<Vec<_>>());
    let g = |r: &RunReport| r.group("held_out").unwrap().clone();
    let acc_u = held(&|r| g(r).mean_unadapted.accuracy.unwrap());
    let acc_a = held(&|r| g(r).mean_adapted.accuracy.unwrap());
    let bce_u = held(&|r| g(r).mean_unadapted.bce.unwrap());
    let bce_a = held(&|r| g(r).mean_adapted.bce.unwrap());
    let c3 = (
        acc_a >= acc_u + 0.15 && bce_a < bce_u && secs < 600.0,
        format!(
            "accuracy {:.1}% -> {:.1}% (+{:.1} pts), BCE {bce_u:.3} -> {bce_a:.3}; 3 seeds x 3 held-out 10x10 mazes; {secs:.1}s",
            100.0 * acc_u,
            100.0 * acc_a,
            100.0 * (acc_a - acc_u)
        ),
    );
    let iso: Vec<(f64, f64)> = reports
        .iter()
        .map(|r| {
            let i = r.embedding_analysis.as_ref().unwrap().isomorphism;
            (i.pearson, i.spearman)
        })
        .collect();
    let c4 = (
        iso.iter().all(|&(p, s)| p >= 0.8 && s >= 0.8),
        format!(
            "training-maze (r_p, r_s) per seed: {}",
            iso.iter().map(|(p, s)| format!("({p:.3}, {s:.3})")).collect::<Vec<_>>().join(", ")
        ),
    );
    (c3, c4)
}

fn c5_cross_size() -> Verdict {
    let report = run("C5")(3, 0);
    let study = report.group("study1").unwrap();
    let r: Vec<(usize, f64)> = study.entries.iter().map(|e| (e.id, e.unadapted.pearson.unwrap())).collect();
    let at = |n: usize| r.iter().find(|(m, _)| *m == n).map(|x| x.1).unwrap_or(f64::NAN);
    let (r10, r12, r14) = (at(10), at(12), at(14));
    (
        [r10, r12, r14].iter().all(|&v| v >= 0.9) && r14 >= r10 - 0.02,
        format!("trained on 8x8: r_p 10x10 {r10:.4}, 12x12 {r12:.4}, 14x14 {r14:.4}"),
    )
}

fn c6_collapse() -> Verdict {
    let report = run("C6")(4, 0);
    let iso = report.group("isomorphic").unwrap().mean_adapted.pearson.unwrap();
    let noise = report.summary["non_isomorphic_pearson_abs_mean"];
    (
        iso >= 0.6 && noise <= 0.2,
        format!("isomorphic mean r_p {iso:.3}, Gaussian-feature mean |r_p| {noise:.3}"),
    )
}

fn c7_value() -> Verdict {
    let reports: Vec<RunReport> = SEEDS.iter().map(|&s| run("C7")(5, s)).collect();
    let held = |f: &dyn Fn(&mazeadapt::harness::EvalGroup) -> f64| {
        mean(&reports.iter().map(|r| f(r.group("held_out").unwrap())).collect::<Vec<_>>())
    };
    let (mse_u, mse_a) = (held(&|g| g.mean_unadapted.mse.unwrap()), held(&|g| g.mean_adapted.mse.unwrap()));
    let (r2_u, r2_a) = (held(&|g| g.mean_unadapted.r2.unwrap()), held(&|g| g.mean_adapted.r2.unwrap()));
    let (pol_u, pol_a) = (
        held(&|g| g.mean_unadapted.policy_accuracy.unwrap()),
        held(&|g| g.mean_adapted.policy_accuracy.unwrap()),
    );
    (
        mse_a <= 0.5 * mse_u && r2_a > r2_u && pol_a >= pol_u + 0.20,
        format!(
            "MSE {mse_u:.1} -> {mse_a:.1}, R2 {r2_u:.3} -> {r2_a:.3}, policy {:.1}% -> {:.1}%; mean of 3 seeds",
            100.0 * pol_u,
            100.0 * pol_a
        ),
    )
}

fn c8_zero_controller() -> Verdict {
    let mut checked = 0;
    let mut mismatched = 0;
    let mut compare = |graph: &GraphInput, controller: &Controller, theta: &mazeadapt::autodiff::ParamVector, cfg: &GcnConfig| {
        let adapted = controller.adapted_params(graph, theta).unwrap();
        let a = gcn::forward(graph, &adapted, cfg).unwrap();
        let b = gcn::forward(graph, theta, cfg).unwrap();
        checked += 1;
        if adapted.data != theta.data || a.output.data() != b.output.data() || a.latent.data() != b.latent.data() {
            mismatched += 1;
        }
    };

    // every training and held-out classification task of the first two experiments
    let cfg = ExperimentConfig::for_experiment(1, 0).unwrap();
    let n = cfg.maze_size;
    let gcn_cfg = GcnConfig::new(SPATIAL_FEATURE_DIM, cfg.gcn.hidden_dim, 1, GcnMode::Classify).unwrap();
    let theta = init_params(&gcn_cfg, cfg.seeds.init);
    let m = cfg.num_tasks;
    let mut mazes = blocked_mazes(&cfg, n, &cfg.block_probs, &(0..m).collect::<Vec<_>>()).unwrap();
    mazes.extend(blocked_mazes(&cfg, n, &cfg.test_block_probs, &(m..m + cfg.num_test).collect::<Vec<_>>()).unwrap());
    for input in [ControllerInput::Basic, ControllerInput::Enriched] {
        let c = Controller::new(cfg.controller.config(input, false), gcn_cfg, n * n, cfg.seeds.controller).unwrap();
        for b in &mazes {
            compare(&GraphInput::from_maze(&b.maze, InputOptions::default()).unwrap(), &c, &theta, &gcn_cfg);
        }
    }

    // every masked-reward value task
    let cfg = ExperimentConfig::for_experiment(5, 0).unwrap();
    let gcn_cfg = GcnConfig::new(SPATIAL_FEATURE_DIM, cfg.gcn.hidden_dim, 1, GcnMode::Regress).unwrap();
    let theta = init_params(&gcn_cfg, cfg.seeds.init);
    let c = Controller::new(cfg.controller.config(ControllerInput::Basic, false), gcn_cfg, n * n, cfg.seeds.controller).unwrap();
    let grid = GridMaze::full(n).unwrap();
    for slot in 0..cfg.num_tasks + cfg.num_test {
        let mask = sample_reward_mask(n, cfg.mask_flip_prob, slot_seed(cfg.seeds.maze, slot)).unwrap();
        compare(&GraphInput::for_rewards(&mask, &grid).unwrap(), &c, &theta, &gcn_cfg);
    }

    // end to end: an untrained controller leaves every reported entry unchanged
    let mut entries = 0;
    let mut report_mismatch = 0;
    for id in 1..=5 {
        let mut cfg = ExperimentConfig::for_experiment(id, 0).unwrap();
        cfg.controller.epochs = 0;
        let report = run_experiment(&cfg, None).unwrap();
        for g in &report.groups {
            for e in &g.entries {
                entries += 1;
                report_mismatch += usize::from(e.unadapted != e.adapted);
            }
        }
    }
    (
        mismatched == 0 && report_mismatch == 0,
        format!(
            "{}/{checked} tasks bit-identical (params, outputs, latents); {}/{entries} report entries identical across experiments 1-5",
            checked - mismatched,
            entries - report_mismatch
        ),
    )
}

fn c9_metrics() -> Verdict {
    let mut r = rng(2024);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = 2 + k % 5;
        let h = 1 + k % 7;
        let rows: Vec<Vec<f64>> = (0..n * n).map(|_| (0..h).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let coords: Vec<[f64; 2]> = (0..n * n).map(|v| [(v % n) as f64, (v / n) as f64]).collect();
        let got = distance_correlations(&Tensor::from_rows(&rows).unwrap(), &coords, MazeMetric::Euclidean).unwrap();
        let (p, s) = naive_distance_correlations(&rows, &coords);
        worst = worst.max((got.pearson - p).abs()).max((got.spearman - s).abs());
    }

    let mut spearman_exact = 0;
    for _ in 0..100 {
        let len = r.random_range(3..60);
        let a: Vec<f64> = (0..len).map(|_| r.random_range(-10.0..10.0)).collect();
        // random strictly increasing map: positive mix of exp, cube and affine parts
        let (w1, w2, w3, b) = (r.random_range(0.1..2.0), r.random_range(0.0..1.0), r.random_range(0.0..3.0), r.random_range(-5.0..5.0));
        let f = |x: f64| w1 * (x / 4.0).exp() + w2 * x * x * x + w3 * x + b;
        let b: Vec<f64> = a.iter().map(|&x| f(x)).collect();
        spearman_exact += usize::from(spearman(&a, &b).unwrap() == 1.0);
    }

    let mut policy_same = 0;
    for k in 0..100u64 {
        let n = 2 + (k % 9) as usize;
        let table = dp_value(&sample_reward_mask(n, 0.3, k).unwrap());
        let oracle = optimal_policy(&table);
        let pred: Vec<f64> = table.values.iter().map(|v| v + r.random_range(-20.0..20.0)).collect();
        let (s, t) = (r.random_range(0.01..100.0), r.random_range(-100.0..100.0));
        let scaled: Vec<f64> = pred.iter().map(|v| s * v + t).collect();
        policy_same += usize::from(policy_accuracy(&pred, &oracle).unwrap() == policy_accuracy(&scaled, &oracle).unwrap());
    }
    (
        worst <= 1e-12 && spearman_exact == 100 && policy_same == 100,
        format!(
            "max |diff| vs naive {worst:.1e} on 100 inputs; Spearman exactly 1 in {spearman_exact}/100; policy invariant in {policy_same}/100"
        ),
    )
}

fn masked_report(dir: &Path) -> Vec<u8> {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    text.lines()
        .map(|l| if l.trim_start().starts_with("\"wall_clock_secs\"") { "<masked>" } else { l })
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}

fn c10_reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut identical = 0;
    let mut runs = 0;
    let mut notes = Vec::new();
    // every experiment on a reduced config, plus the first at full defaults
    let mut cases: Vec<(u8, Option<ExperimentConfig>)> = (1..=5).map(|id| (id, Some(small_config(id, 0)))).collect();
    cases.push((1, None));
    for (k, (id, cfg)) in cases.into_iter().enumerate() {
        let cfg_path = tmp.path().join(format!("cfg{k}.json"));
        let mut args = vec!["exp".to_string(), "--id".into(), id.to_string(), "--seed".into(), "5".into()];
        if let Some(c) = cfg {
            std::fs::write(&cfg_path, serde_json::to_string(&c).unwrap()).unwrap();
            args.extend(["--config".into(), cfg_path.display().to_string()]);
        }
        let outs: Vec<_> = (0..2).map(|rep| tmp.path().join(format!("run{k}_{rep}"))).collect();
        for out in &outs {
            let status = Command::new(env!("CARGO_BIN_EXE_mazeadapt"))
                .args(&args)
                .args(["--out", &out.display().to_string()])
                .status()
                .unwrap();
            assert!(status.success(), "exp {id} failed");
        }
        runs += 1;
        let same_report = masked_report(&outs[0]) == masked_report(&outs[1]);
        let mut files: Vec<_> = std::fs::read_dir(&outs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        let same_artifacts = files
            .iter()
            .filter(|f| *f != "report.json")
            .all(|f| std::fs::read(outs[0].join(f)).unwrap() == std::fs::read(outs[1].join(f)).unwrap());
        if same_report && same_artifacts {
            identical += 1;
        } else {
            notes.push(format!("exp {id} differs"));
        }
    }
    (
        identical == runs,
        format!("{identical}/{runs} repeated `exp` runs byte-identical after masking wall_clock_secs{}", notes.iter().map(|n| format!("; {n}")).collect::<String>()),
    )
}

fn record(results: &mut Vec<(String, Option<Verdict>, Duration)>, name: &str, f: impl FnOnce() -> Verdict) {
    let start = Instant::now();
    let v = catch_unwind(AssertUnwindSafe(f)).ok();
    results.push((name.to_string(), v, start.elapsed()));
}

fn main() {
    // `cargo test -- --list` and filters pass arguments; listing must not run anything
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut results = Vec::new();
    record(&mut results, "C1 gradient correctness", c1_gradients);
    record(&mut results, "C2 oracle equivalence", c2_oracles);
    let start = Instant::now();
    match catch_unwind(c3_c4_experiment_1) {
        Ok((c3, c4)) => {
            results.push(("C3 blocked-maze adaptation".into(), Some(c3), start.elapsed()));
            results.push(("C4 isomorphism emergence".into(), Some(c4), Duration::ZERO));
        }
        Err(_) => {
            results.push(("C3 blocked-maze adaptation".into(), None, start.elapsed()));
            results.push(("C4 isomorphism emergence".into(), None, Duration::ZERO));
        }
    }
    record(&mut results, "C5 cross-size generalization", c5_cross_size);
    record(&mut results, "C6 representation collapse", c6_collapse);
    record(&mut results, "C7 value adaptation", c7_value);
    record(&mut results, "C8 zero-controller identity", c8_zero_controller);
    record(&mut results, "C9 metric correctness", c9_metrics);
    record(&mut results, "C10 reproducibility", c10_reproducibility);

    println!();
    let mut failed = 0;
    for (name, verdict, took) in &results {
        match verdict {
            Some((true, detail)) => println!("PASS {name}: {detail} [{:.1}s]", took.as_secs_f64()),
            Some((false, detail)) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.1}s]", took.as_secs_f64());
            }
            None => {
                failed += 1;
                println!("FAIL {name}: panicked (see message above)");
            }
        }
    }
    println!("\nacceptance: {} passed; {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
