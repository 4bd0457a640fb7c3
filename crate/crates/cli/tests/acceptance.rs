//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use imprecise::extrapolation::{
    AdaptiveState, ADAPTIVE_THETA_MAX, ADAPTIVE_THETA_MIN, GAIN_WINDOW,
};
use imprecise::harness::study::{label_vs_root_methods, standard_methods, Method, StudyPlan};
use imprecise::harness::taxonomy::random_taxonomy;
use imprecise::harness::{mean_std, LoopConfig, SyntheticTask, TaskSpec};
use imprecise::noise::corrupt_label;
use imprecise::propagation::{clamp_to_source, propagate};
use imprecise::{
    ClassHierarchy, EvaluationReport, Extrapolator, NodeId, NoiseModel, NoiseModelConfig, ScoreMap,
    ScoreRole, Strategy, StrategyConfig,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn timed(f: impl FnOnce() -> Verdict) -> (Verdict, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn study_noises() -> Vec<NoiseModel> {
    vec![
        NoiseModel::ParentRelabel { p: 0.99 },
        NoiseModel::GeometricDepth { q: 0.5 },
        NoiseModel::PoissonDepth { lambda: 1.0 },
        NoiseModel::PoissonDepth { lambda: 2.0 },
    ]
}

/// Random tree on `n` nodes: node `i` hangs under a uniformly drawn `j < i`.
fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> ClassHierarchy {
    let edges: Vec<(String, String)> = (1..n)
        .map(|i| (format!("n{i}"), format!("n{}", rng.random_range(0..i))))
        .collect();
    ClassHierarchy::from_edges(edges).unwrap()
}

fn random_conditionals(rng: &mut ChaCha8Rng, h: &ClassHierarchy) -> ScoreMap {
    let values = h
        .nodes()
        .map(|n| if n == h.root() { 1.0 } else { rng.random() })
        .collect();
    ScoreMap::new(h, ScoreRole::Conditional, values).unwrap()
}

fn root_path(h: &ClassHierarchy, mut n: NodeId) -> Vec<NodeId> {
    let mut path = vec![n];
    while let Some(p) = h.parent(n) {
        path.push(p);
        n = p;
    }
    path
}

// ---- 1 ----

/// Depth law of a corrupted chain leaf at depth `leaf`.
fn depth_law(model: NoiseModel, leaf: usize) -> Vec<f64> {
    let mut p = vec![0.0; leaf + 1];
    match model {
        NoiseModel::NoNoise => p[leaf] = 1.0,
        NoiseModel::ParentRelabel { p: r } => {
            p[leaf - 1] = r;
            p[leaf] = 1.0 - r;
        }
        NoiseModel::GeometricDepth { q } => {
            for (d, slot) in p.iter_mut().enumerate().take(leaf) {
                *slot = q * (1.0 - q).powi(d as i32);
            }
            p[leaf] = 1.0 - p[..leaf].iter().sum::<f64>();
        }
        NoiseModel::PoissonDepth { lambda } => {
            let mut term = (-lambda).exp();
            for (d, slot) in p.iter_mut().enumerate().take(leaf) {
                *slot = term;
                term *= lambda / (d + 1) as f64;
            }
            p[leaf] = 1.0 - p[..leaf].iter().sum::<f64>();
        }
    }
    p
}

fn noise_fallback() -> Verdict {
    const DEPTH: usize = 20;
    const SAMPLES: u64 = 100_000;
    let h =
        ClassHierarchy::from_edges((1..=DEPTH).map(|i| (format!("d{i}"), format!("d{}", i - 1))))
            .unwrap();
    let leaf = h.leaves()[0];
    let mut worst = 0.0f64;
    for model in study_noises() {
        let cfg = NoiseModelConfig::new(model, 0);
        let mut counts = vec![0u64; DEPTH + 1];
        for key in 0..SAMPLES {
            counts[h.depth(corrupt_label(&h, leaf, &cfg, key).unwrap())] += 1;
        }
        let want = depth_law(model, DEPTH);
        let tv: f64 = counts
            .iter()
            .zip(&want)
            .map(|(&c, w)| (c as f64 / SAMPLES as f64 - w).abs())
            .sum::<f64>()
            / 2.0;
        worst = worst.max(tv);
    }
    verdict(
        worst <= 0.01,
        format!("fallback (no NABirds metadata): max TV {worst:.4} <= 0.01 on depth-20 chain, 1e5 samples"),
    )
}

fn noise_nabirds(dir: &Path) -> Verdict {
    let targets = [
        (vec!["--noise", "parent", "--p", "0.99"], 0.010),
        (vec!["--noise", "geometric", "--q", "0.5"], 0.096),
        (vec!["--noise", "poisson", "--lambda", "1"], 0.048),
        (vec!["--noise", "poisson", "--lambda", "2"], 0.227),
    ];
    let out = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut slowest = Duration::ZERO;
    for (flags, want) in targets {
        let mut fractions = Vec::new();
        for seed in 0..6 {
            let seed = seed.to_string();
            let target = out.path().join("noisy.txt");
            let mut args = vec!["corrupt", "--seed", &seed];
            args.extend(&flags);
            let t = Instant::now();
            let o = Command::new(env!("CARGO_BIN_EXE_imprecise"))
                .args(&args)
                .arg("--hierarchy")
                .arg(dir.join("hierarchy.txt"))
                .arg("--labels")
                .arg(dir.join("image_class_labels.txt"))
                .arg("--split")
                .arg(dir.join("train_test_split.txt"))
                .arg("--out")
                .arg(&target)
                .output()
                .unwrap();
            slowest = slowest.max(t.elapsed());
            let text = String::from_utf8_lossy(&o.stdout);
            let Some(f) = text
                .split("precise fraction ")
                .nth(1)
                .and_then(|s| s.split_whitespace().next())
                .and_then(|s| s.parse::<f64>().ok())
            else {
                return verdict(
                    false,
                    format!("corrupt failed: {}", String::from_utf8_lossy(&o.stderr)),
                );
            };
            fractions.push(f);
        }
        let (mean, _) = mean_std(&fractions);
        let ok = (mean - want).abs() <= 0.005;
        pass &= ok;
        lines.push(format!(
            "{} {:.2}% (want {:.1}%)",
            flags[1],
            mean * 100.0,
            want * 100.0
        ));
    }
    pass &= slowest < Duration::from_secs(5);
    verdict(
        pass,
        format!(
            "NABirds train split: {}; slowest run {:.2?}",
            lines.join(", "),
            slowest
        ),
    )
}

// ---- 2 ----

fn propagation_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=20);
        let h = random_tree(&mut rng, n);
        let cond = random_conditionals(&mut rng, &h);
        let uncond = propagate(&h, &cond).unwrap();
        for node in h.nodes() {
            let product: f64 = root_path(&h, node)
                .into_iter()
                .filter(|&a| a != h.root())
                .map(|a| cond.get(a))
                .product();
            worst = worst.max((uncond.get(node) - product).abs());
        }
    }
    verdict(
        worst <= 1e-12,
        format!("max |propagate - path product| = {worst:.1e} <= 1e-12 over 200 trees"),
    )
}

// ---- 3 ----

/// Ancestor-set recall with the shared root left out.
fn recall(h: &ClassHierarchy, pred: NodeId, truth: NodeId) -> f64 {
    let strict = |n| root_path(h, n).into_iter().filter(|&a| a != h.root());
    let truth_path: HashSet<NodeId> = strict(truth).collect();
    let hits = strict(pred).filter(|n| truth_path.contains(n)).count();
    hits as f64 / truth_path.len() as f64
}

fn random_strategy(rng: &mut ChaCha8Rng, i: usize) -> Strategy {
    match i % 5 {
        0 => Strategy::LeafNode,
        1 => Strategy::KStepsDown {
            k: rng.random_range(1..=4),
            confidence_floor: rng.random_bool(0.5).then(|| rng.random()),
        },
        2 => Strategy::FixedThreshold {
            threshold: rng.random_range(0.5..=1.0),
        },
        3 => Strategy::AdaptiveThreshold {
            target_gain: rng.random_range(0.0..0.5),
        },
        _ => {
            let lo: f64 = rng.random_range(0.0..1.0);
            Strategy::IcRange {
                lo,
                hi: rng.random_range(lo..=1.0),
            }
        }
    }
}

fn subsumption_and_recall() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0usize;
    for i in 0..10_000 {
        let n = rng.random_range(2..=30);
        let h = random_tree(&mut rng, n);
        let cond = random_conditionals(&mut rng, &h);
        let source = h.node(rng.random_range(0..h.len())).unwrap();
        let under: Vec<NodeId> = h
            .leaves()
            .iter()
            .copied()
            .filter(|&l| root_path(&h, l).contains(&source))
            .collect();
        let truth = under[rng.random_range(0..under.len())];
        let cfg = StrategyConfig::new(random_strategy(&mut rng, i)).with_seed(i as u64);
        let mut x = Extrapolator::new(cfg).unwrap();
        let uncond = propagate(&h, &clamp_to_source(&h, &cond, source).unwrap()).unwrap();
        // several calls so the adaptive threshold moves
        for call in 0..3 {
            let target = x.extrapolate(&h, source, &uncond, call).unwrap();
            let inside = root_path(&h, target).contains(&source);
            if !inside || recall(&h, target, truth) < recall(&h, source, truth) {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations in 10^4 draws (3 calls each) over five strategies"),
    )
}

// ---- 4 ----

fn adaptive_dynamics() -> Verdict {
    let target = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut gains: Vec<f64> = (0..150).map(|_| rng.random_range(0.0..0.6)).collect();
    gains.extend(std::iter::repeat_n(0.0, 150));
    gains.extend((0..100).map(|_| rng.random_range(0.0..0.1)));

    let mut state = AdaptiveState::new();
    let mut theta = ADAPTIVE_THETA_MIN;
    let mut exact = true;
    let mut bounded = true;
    for t in 0..gains.len() {
        let window = &gains[(t + 1).saturating_sub(GAIN_WINDOW)..=t];
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        theta = (theta + mean - target).clamp(0.55, 1.0);
        state.observe(gains[t], target);
        exact &= state.theta() == theta;
        bounded &= (ADAPTIVE_THETA_MIN..=ADAPTIVE_THETA_MAX).contains(&state.theta());
    }
    let reached_top = gains[..150].iter().sum::<f64>() > 0.0 && {
        let mut s = AdaptiveState::new();
        gains[..150].iter().for_each(|&g| s.observe(g, target));
        s.theta() == 1.0
    };

    // exactly representable gain so a pure window's mean equals h* bit for bit
    let h_star = 0.0625;
    let mut fixed = AdaptiveState::new();
    for _ in 0..3 {
        fixed.observe(0.1, h_star);
    }
    for _ in 0..GAIN_WINDOW {
        fixed.observe(h_star, h_star);
    }
    let settled = fixed.theta();
    let mut still = settled > ADAPTIVE_THETA_MIN && settled < ADAPTIVE_THETA_MAX;
    for _ in 0..500 {
        fixed.observe(h_star, h_star);
        still &= fixed.theta() == settled;
    }
    let pass = exact && bounded && reached_top && still;
    verdict(
        pass,
        format!(
            "trajectory exact over {} steps: {exact}; bounded: {bounded}; gain = h* holds theta at {settled:.4}: {still}",
            gains.len()
        ),
    )
}

// ---- 5 / 6 ----

fn study_taxonomy(seed: u64) -> ClassHierarchy {
    random_taxonomy(555, 8, 6, seed).unwrap()
}

fn all_strategy_methods() -> Vec<Method> {
    let mut m = standard_methods();
    m.push(Method::extrapolate(Strategy::AdaptiveThreshold {
        target_gain: 0.05,
    }));
    m.push(Method::extrapolate(Strategy::IcRange { lo: 0.2, hi: 1.0 }));
    m
}

fn cell<'a>(reports: &'a [EvaluationReport], noise: &str, method: &Method) -> &'a EvaluationReport {
    reports
        .iter()
        .find(|r| r.noise == noise && r.strategy == method.name() && r.params == method.params())
        .unwrap()
}

fn baseline_is_worst() -> Verdict {
    let methods = all_strategy_methods();
    let plan = StudyPlan {
        examples: 2000,
        noises: study_noises(),
        methods: methods.clone(),
        fidelity: 0.9,
        temperature: 1.0,
    };
    let mut good_seeds = 0;
    let mut margin = f64::INFINITY;
    for seed in 0..6 {
        let h = study_taxonomy(seed);
        let reports = plan.run(&h, seed).unwrap();
        let mut ok = true;
        for noise in plan.noises.iter().map(NoiseModel::label) {
            let base = cell(&reports, &noise, &Method::NoExtrapolation).h_f1;
            for m in methods.iter().filter(|m| **m != Method::NoExtrapolation) {
                let d = cell(&reports, &noise, m).h_f1 - base;
                margin = margin.min(d);
                ok &= d > 0.0;
            }
        }
        good_seeds += usize::from(ok);
    }
    verdict(
        good_seeds == 6,
        format!(
            "{good_seeds}/6 seeds with every strategy above baseline in all 4 noise cells ({} strategies, min margin {:.2} pp)",
            methods.len() - 1,
            margin * 100.0
        ),
    )
}

fn label_beats_root() -> Verdict {
    let plan = StudyPlan {
        examples: 2000,
        noises: study_noises(),
        methods: label_vs_root_methods(),
        fidelity: 0.9,
        temperature: 1.0,
    };
    let [with, root] = [&plan.methods[0], &plan.methods[1]];
    let mut good_seeds = 0;
    let mut margin = f64::INFINITY;
    for seed in 0..6 {
        let reports = plan.run(&study_taxonomy(seed), seed).unwrap();
        let mut ok = true;
        for noise in plan.noises.iter().map(NoiseModel::label) {
            let d = cell(&reports, &noise, with).accuracy.unwrap()
                - cell(&reports, &noise, root).accuracy.unwrap();
            margin = margin.min(d);
            ok &= d >= 0.0;
        }
        good_seeds += usize::from(ok);
    }
    verdict(
        good_seeds == 6,
        format!("{good_seeds}/6 seeds with leaf accuracy >= from-root in every cell (min margin {:.2} pp)", margin * 100.0),
    )
}

// ---- 7 ----

fn self_training_direction() -> Verdict {
    let h_star = 0.05;
    let mut base = Vec::new();
    let mut ada = Vec::new();
    let mut gains = Vec::new();
    for seed in 0..6 {
        let task = SyntheticTask::generate(&TaskSpec::default(), seed).unwrap();
        let noise = NoiseModelConfig::new(NoiseModel::GeometricDepth { q: 0.5 }, seed);
        let b = task
            .run(&LoopConfig::new(Method::NoExtrapolation, noise, seed))
            .unwrap();
        let method = Method::extrapolate(Strategy::AdaptiveThreshold {
            target_gain: h_star,
        });
        let a = task.run(&LoopConfig::new(method, noise, seed)).unwrap();
        base.push(b.final_report().accuracy.unwrap());
        ada.push(a.final_report().accuracy.unwrap());
        gains.push(a.epochs.last().unwrap().mean_ic_gain);
    }
    let (b, _) = mean_std(&base);
    let (a, _) = mean_std(&ada);
    let (g, _) = mean_std(&gains);
    verdict(
        a >= b && (g - h_star).abs() <= 0.03,
        format!("geometric(q=0.5), 6 seeds: adaptive {a:.4} vs baseline {b:.4}; final-epoch gain {g:.4} (want 0.05 +- 0.03)"),
    )
}

// ---- 8 ----

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_imprecise"))
        .current_dir(dir)
        .env_remove("IMPRECISE_DATA_DIR")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(String::from_utf8_lossy(&o.stdout).into_owned())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn replay_is_byte_identical() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let h = random_taxonomy(60, 5, 4, 8).unwrap();
    std::fs::write(d.join("h.txt"), h.to_edge_list()).unwrap();
    let labels: String = (0..300)
        .map(|i| format!("ex{i} {}\n", h.name(h.leaves()[i * 7 % h.leaves().len()])))
        .collect();
    std::fs::write(d.join("truth.txt"), labels).unwrap();
    let pipeline: [(&[&str], &[&str]); 6] = [
        (
            &[
                "corrupt",
                "--hierarchy",
                "h.txt",
                "--labels",
                "truth.txt",
                "--noise",
                "poisson",
                "--lambda",
                "2",
                "--seed",
                "5",
                "--out",
                "noisy.txt",
            ],
            &["noisy.txt"],
        ),
        (
            &[
                "simulate-scores",
                "--hierarchy",
                "h.txt",
                "--labels",
                "truth.txt",
                "--seed",
                "5",
                "--out",
                "scores.ndjson",
            ],
            &["scores.ndjson"],
        ),
        (
            &[
                "extrapolate",
                "--hierarchy",
                "h.txt",
                "--labels",
                "noisy.txt",
                "--scores",
                "scores.ndjson",
                "--strategy",
                "adaptive",
                "--seed",
                "5",
                "--out",
                "pseudo.txt",
            ],
            &["pseudo.txt"],
        ),
        (
            &[
                "evaluate",
                "--hierarchy",
                "h.txt",
                "--pred",
                "pseudo.txt",
                "--truth",
                "truth.txt",
                "--out",
                "eval.json",
            ],
            &["eval.json"],
        ),
        (
            &[
                "study",
                "--hierarchy",
                "h.txt",
                "--seed",
                "5",
                "--repeats",
                "2",
                "--jobs",
                "2",
                "--out",
                "study",
            ],
            &["study.csv", "study.json", "study.table.txt"],
        ),
        (
            &[
                "loop",
                "--strategy",
                "adaptive",
                "--noise",
                "geometric",
                "--epochs",
                "2",
                "--seed",
                "5",
                "--out",
                "loop",
            ],
            &["loop.epochs.csv", "loop.json", "loop.telemetry.ndjson"],
        ),
    ];
    let mut compared = 0;
    for (i, (args, outputs)) in pipeline.iter().enumerate() {
        if let Err(e) = cli(d, args) {
            return verdict(false, e);
        }
        let manifest = format!(
            "{}.manifest.json",
            if outputs.len() == 1 {
                outputs[0].to_owned()
            } else {
                args[args.len() - 1].to_owned()
            }
        );
        let replay_dir: PathBuf = d.join(format!("replay{i}"));
        if let Err(e) = cli(
            d,
            &[
                "replay",
                &manifest,
                "--out-dir",
                replay_dir.to_str().unwrap(),
            ],
        ) {
            return verdict(false, e);
        }
        for f in *outputs {
            let a = std::fs::read(d.join(f)).unwrap();
            let b = std::fs::read(replay_dir.join(f)).unwrap();
            if a != b {
                return verdict(false, format!("{f} differs after replay"));
            }
            compared += 1;
        }
    }
    verdict(
        true,
        format!(
            "{compared} files from 6 pipeline stages identical after replay from their manifests"
        ),
    )
}

fn main() {
    let nabirds = std::env::var_os("IMPRECISE_NABIRDS_DIR").map(PathBuf::from);
    type Check = Box<dyn FnOnce() -> Verdict>;
    let checks: Vec<(&str, Option<Duration>, Check)> = vec![
        (
            "noise-model precise fractions",
            Some(Duration::from_secs(5)),
            match nabirds {
                Some(dir) => Box::new(move || noise_nabirds(&dir)),
                None => Box::new(noise_fallback),
            },
        ),
        (
            "propagation matches path products",
            Some(Duration::from_secs(1)),
            Box::new(propagation_oracle),
        ),
        (
            "subsumption and recall dominance",
            None,
            Box::new(subsumption_and_recall),
        ),
        (
            "adaptive threshold dynamics",
            None,
            Box::new(adaptive_dynamics),
        ),
        (
            "baseline is worst on a 555-leaf taxonomy",
            Some(Duration::from_secs(120)),
            Box::new(baseline_is_worst),
        ),
        (
            "noisy label helps leaf extrapolation",
            None,
            Box::new(label_beats_root),
        ),
        (
            "self-training direction and realized gain",
            Some(Duration::from_secs(300)),
            Box::new(self_training_direction),
        ),
        (
            "CLI replay is byte-identical",
            None,
            Box::new(replay_is_byte_identical),
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in checks.into_iter().enumerate() {
        let (v, took) = timed(check);
        let in_time = limit.is_none_or(|l| took < l);
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit.map(|l| format!(" < {l:?}")).unwrap_or_default();
        println!(
            "{} {}. {name}: {} [{took:.2?}{budget}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
