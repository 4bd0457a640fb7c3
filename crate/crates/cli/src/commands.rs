use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use imprecise::extrapolation::ic_gain;
use imprecise::harness::study::StudyPlan;
use imprecise::harness::taxonomy::random_taxonomy;
use imprecise::harness::{
    mean_std, LoopConfig, Method, Refresh, SyntheticOracle, SyntheticTask, TaskSpec,
};
use imprecise::hierarchy::load_hierarchy;
use imprecise::jitter::DEFAULT_JITTER_SIGMA;
use imprecise::labels::{
    filter_split, format_labels, parse_labels, parse_leaf_labels, parse_split,
};
use imprecise::metrics::{format_table, reports_to_csv, TableMetric};
use imprecise::noise::{corrupt_label, precise_fraction};
use imprecise::propagation::{clamp_to_source, propagate, ScoreMapFile};
use imprecise::{
    ClassHierarchy, EvaluationReport, Extrapolator, NodeId, NoiseModel, NoiseModelConfig, ScoreMap,
    ScoreRole, Strategy, StrategyConfig,
};

use crate::Invalid;

pub const DATA_DIR_VAR: &str = "IMPRECISE_DATA_DIR";

/// Collects the files a command reads and writes.
#[derive(Debug, Default)]
pub struct Ctx {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub resolved: serde_json::Value,
    /// Where the manifest goes; defaults to beside the first output.
    pub manifest: Option<PathBuf>,
}

impl Ctx {
    fn read(&mut self, path: &Path) -> Result<String> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(path.to_owned());
        Ok(text)
    }

    fn write(&mut self, path: &Path, content: &str) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.to_owned());
        Ok(())
    }

    fn hierarchy(&mut self, path: &Path) -> Result<ClassHierarchy> {
        let text = self.read(path)?;
        load_hierarchy(&text).with_context(|| format!("loading hierarchy {}", path.display()))
    }
}

/// Relative inputs that do not exist are looked up in the data directory.
pub fn resolve_input(path: &Path) -> PathBuf {
    let found = if path.is_relative() && !path.exists() {
        std::env::var_os(DATA_DIR_VAR)
            .map(|dir| Path::new(&dir).join(path))
            .filter(|p| p.exists())
            .unwrap_or_else(|| path.to_owned())
    } else {
        path.to_owned()
    };
    std::path::absolute(&found).unwrap_or(found)
}

pub fn resolve_output(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_owned())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn check(problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Invalid(problems).into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    Parent,
    Geometric,
    Poisson,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct NoiseArgs {
    /// Noise model applied to the precise labels.
    #[arg(long, value_enum, default_value_t = NoiseKind::None)]
    pub noise: NoiseKind,
    /// Parent relabeling probability.
    #[arg(long, default_value_t = 0.99)]
    pub p: f64,
    /// Geometric success probability.
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    /// Poisson rate.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

impl NoiseArgs {
    pub fn model(&self) -> NoiseModel {
        match self.noise {
            NoiseKind::None => NoiseModel::NoNoise,
            NoiseKind::Parent => NoiseModel::ParentRelabel { p: self.p },
            NoiseKind::Geometric => NoiseModel::GeometricDepth { q: self.q },
            NoiseKind::Poisson => NoiseModel::PoissonDepth {
                lambda: self.lambda,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Keep the given label.
    None,
    Leaf,
    Ksteps,
    Threshold,
    Adaptive,
    Icrange,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct StrategyArgs {
    #[arg(long, value_enum, default_value_t = StrategyKind::Leaf)]
    pub strategy: StrategyKind,
    /// Levels to descend for `ksteps`.
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    /// Stop descending below this unconditional probability (`ksteps`).
    #[arg(long)]
    pub confidence_floor: Option<f64>,
    #[arg(long, default_value_t = 0.55)]
    pub threshold: f64,
    /// Target IC gain for `adaptive`.
    #[arg(long, default_value_t = 0.05)]
    pub target_gain: f64,
    #[arg(long, default_value_t = 0.5)]
    pub ic_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ic_hi: f64,
    /// Standard deviation of the tie-breaking sort noise.
    #[arg(long, default_value_t = DEFAULT_JITTER_SIGMA)]
    pub jitter_sigma: f64,
    /// Ignore the given label and extrapolate from the root.
    #[arg(long)]
    pub from_root: bool,
}

impl StrategyArgs {
    pub fn strategy(&self) -> Option<Strategy> {
        Some(match self.strategy {
            StrategyKind::None => return None,
            StrategyKind::Leaf => Strategy::LeafNode,
            StrategyKind::Ksteps => Strategy::KStepsDown {
                k: self.k,
                confidence_floor: self.confidence_floor,
            },
            StrategyKind::Threshold => Strategy::FixedThreshold {
                threshold: self.threshold,
            },
            StrategyKind::Adaptive => Strategy::AdaptiveThreshold {
                target_gain: self.target_gain,
            },
            StrategyKind::Icrange => Strategy::IcRange {
                lo: self.ic_lo,
                hi: self.ic_hi,
            },
        })
    }

    pub fn method(&self, seed: u64) -> Method {
        match self.strategy() {
            None => Method::NoExtrapolation,
            Some(s) => {
                let mut c = StrategyConfig::new(s).with_seed(seed);
                c.jitter_sigma = self.jitter_sigma;
                if self.from_root {
                    Method::FromRoot(c)
                } else {
                    Method::Extrapolate(c)
                }
            }
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyArgs {
    /// Edge-list file with one `child parent` pair per line.
    pub path: PathBuf,
    /// Fail on any structural problem, including a single-node hierarchy.
    #[arg(long)]
    pub validate: bool,
    /// Write the parsed hierarchy as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub fn hierarchy(a: &HierarchyArgs, ctx: &mut Ctx) -> Result<()> {
    let h = ctx.hierarchy(&a.path)?;
    println!(
        "{} nodes, {} leaves, max depth {}",
        h.len(),
        h.leaves().len(),
        h.max_depth()
    );
    let mut by_depth = vec![(0usize, 0usize); h.max_depth() + 1];
    for n in h.nodes() {
        let slot = &mut by_depth[h.depth(n)];
        slot.0 += 1;
        slot.1 += usize::from(h.is_leaf(n));
    }
    println!("depth  nodes  leaves");
    for (d, (nodes, leaves)) in by_depth.iter().enumerate() {
        println!("{d:>5}  {nodes:>5}  {leaves:>6}");
    }
    if h.len() < 2 {
        if a.validate {
            return Err(imprecise::Error::DegenerateHierarchy.into());
        }
        println!("information content: undefined for a single node");
    } else {
        let inner: Vec<f64> = h
            .nodes()
            .filter(|&n| !h.is_leaf(n))
            .map(|n| h.ic(n))
            .collect();
        let (mean, std) = mean_std(&inner);
        let max = inner.iter().copied().fold(0.0, f64::max);
        println!("information content of inner nodes: mean {mean:.4}, std {std:.4}, max {max:.4}");
    }
    if let Some(out) = &a.json {
        ctx.write(out, &(serde_json::to_string_pretty(&h.export())? + "\n"))?;
    }
    Ok(())
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CorruptArgs {
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// Precise labels, one `example-id leaf-id` pair per line.
    #[arg(long)]
    pub labels: PathBuf,
    /// Split file with `example-id 0|1` lines; only training examples are kept.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// With `--split`, keep the test examples instead.
    #[arg(long)]
    pub test: bool,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn corrupt(a: &CorruptArgs, ctx: &mut Ctx) -> Result<()> {
    let cfg = NoiseModelConfig::new(a.noise.model(), a.seed);
    check(cfg.model.problems())?;
    let h = ctx.hierarchy(&a.hierarchy)?;
    let text = ctx.read(&a.labels)?;
    let mut records = parse_leaf_labels(&h, &text)
        .with_context(|| format!("reading labels {}", a.labels.display()))?;
    if let Some(split) = &a.split {
        let split = parse_split(&ctx.read(split)?)
            .with_context(|| format!("reading split {}", split.display()))?;
        records = filter_split(records, &split, !a.test);
    }
    for r in &mut records {
        r.node = corrupt_label(&h, r.node, &cfg, r.key())?;
    }
    ctx.resolved = serde_json::to_value(cfg)?;
    let precise = records.iter().filter(|r| h.is_leaf(r.node)).count();
    println!(
        "{}: precise fraction {:.4} ({precise} of {})",
        cfg.model.label(),
        precise_fraction(&h, records.iter().map(|r| &r.node)),
        records.len()
    );
    ctx.write(&a.out, &format_labels(&h, &records))
}

/// One line of a score file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreLine {
    pub id: String,
    #[serde(flatten)]
    pub scores: ScoreMapFile,
}

fn read_scores(h: &ClassHierarchy, text: &str) -> Result<HashMap<String, ScoreMap>> {
    let mut out = HashMap::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let parsed: ScoreLine =
            serde_json::from_str(line).map_err(|e| imprecise::Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        let map = ScoreMap::from_file(h, &parsed.scores).map_err(|e| imprecise::Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(parsed.id, map);
    }
    Ok(out)
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// Ground-truth leaf labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Conditional score given to true-path nodes, at least.
    #[arg(long, default_value_t = 0.9)]
    pub fidelity: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// NDJSON file of conditional scores.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn simulate(a: &SimulateArgs, ctx: &mut Ctx) -> Result<()> {
    let oracle = SyntheticOracle {
        fidelity: a.fidelity,
        temperature: a.temperature,
        seed: a.seed,
    };
    check(oracle.problems())?;
    let h = ctx.hierarchy(&a.hierarchy)?;
    let records = parse_leaf_labels(&h, &ctx.read(&a.labels)?)
        .with_context(|| format!("reading labels {}", a.labels.display()))?;
    let mut out = String::new();
    for r in &records {
        let line = ScoreLine {
            id: r.id.clone(),
            scores: oracle.scores(&h, r.node, r.key())?.to_file(&h),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    ctx.resolved = serde_json::to_value(oracle)?;
    println!("{} score maps", records.len());
    ctx.write(&a.out, &out)
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ExtrapolateArgs {
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// Possibly imprecise labels to extrapolate from.
    #[arg(long)]
    pub labels: PathBuf,
    /// NDJSON conditional scores keyed by example id.
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn extrapolate(a: &ExtrapolateArgs, ctx: &mut Ctx) -> Result<()> {
    let method = a.strategy.method(a.seed);
    check(method.problems())?;
    let h = ctx.hierarchy(&a.hierarchy)?;
    let mut records = parse_labels(&h, &ctx.read(&a.labels)?)
        .with_context(|| format!("reading labels {}", a.labels.display()))?;
    let scores = read_scores(&h, &ctx.read(&a.scores)?)
        .with_context(|| format!("reading scores {}", a.scores.display()))?;
    let mut problems: Vec<String> = records
        .iter()
        .filter(|r| !scores.contains_key(&r.id))
        .map(|r| format!("no scores for example {:?}", r.id))
        .collect();
    problems.extend(
        scores
            .iter()
            .filter(|(_, s)| s.role() != ScoreRole::Conditional)
            .map(|(id, _)| format!("scores of example {id:?} are not conditional")),
    );
    problems.sort();
    check(problems)?;
    let mut x = method
        .strategy()
        .cloned()
        .map(Extrapolator::new)
        .transpose()?;
    let mut gains = Vec::with_capacity(records.len());
    for r in &mut records {
        let Some(x) = x.as_mut() else { break };
        let cond = &scores[&r.id];
        let source = if a.strategy.from_root {
            h.root()
        } else {
            r.node
        };
        let uncond = propagate(&h, &clamp_to_source(&h, cond, source)?)?;
        let target = x.extrapolate(&h, source, &uncond, r.key())?;
        gains.push(ic_gain(&h, r.node, target).unwrap_or(0.0));
        r.node = target;
    }
    ctx.resolved = serde_json::to_value(&method)?;
    let (mean, _) = mean_std(&gains);
    print!("{} labels, mean IC gain {mean:.4}", records.len());
    match x.as_ref().and_then(Extrapolator::state) {
        Some(state) => println!(", final theta {:.4}", state.theta()),
        None => println!(),
    }
    ctx.write(&a.out, &format_labels(&h, &records))
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn evaluate(a: &EvaluateArgs, ctx: &mut Ctx) -> Result<()> {
    let h = ctx.hierarchy(&a.hierarchy)?;
    let pred = parse_labels(&h, &ctx.read(&a.pred)?)
        .with_context(|| format!("reading predictions {}", a.pred.display()))?;
    let truth = parse_labels(&h, &ctx.read(&a.truth)?)
        .with_context(|| format!("reading truth {}", a.truth.display()))?;
    let by_id: HashMap<&str, NodeId> = pred.iter().map(|r| (r.id.as_str(), r.node)).collect();
    let problems: Vec<String> = truth
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| format!("no prediction for example {:?}", r.id))
        .collect();
    check(problems)?;
    let pairs: Vec<(NodeId, NodeId)> = truth
        .iter()
        .map(|r| (by_id[r.id.as_str()], r.node))
        .collect();
    let leaves_only = pairs.iter().all(|&(p, _)| h.is_leaf(p));
    let report = EvaluationReport::evaluate(&h, &pairs, leaves_only)?;
    println!("{} examples", report.n_examples);
    if let Some(acc) = report.accuracy {
        println!("accuracy {acc:.4}");
    }
    println!(
        "hP {:.4}  hR {:.4}  hF1 {:.4}",
        report.h_precision, report.h_recall, report.h_f1
    );
    if let Some(out) = &a.out {
        ctx.write(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Hf1,
    Accuracy,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct StudyArgs {
    /// Hierarchy to study; a random taxonomy is generated when absent.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
    /// JSON study plan; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Leaves of the generated taxonomy.
    #[arg(long, default_value_t = 555)]
    pub leaves: usize,
    #[arg(long, default_value_t = 8)]
    pub max_fanout: usize,
    #[arg(long, default_value_t = 5)]
    pub max_depth: usize,
    /// First seed; runs use `seed..seed + repeats`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub repeats: u64,
    /// Worker threads for the cell fan-out.
    #[arg(long, default_value_t = default_jobs())]
    pub jobs: usize,
    /// Metric shown in the printed table.
    #[arg(long, value_enum, default_value_t = MetricKind::Hf1)]
    pub metric: MetricKind,
    /// Output prefix: writes `<out>.csv`, `<out>.json` and `<out>.table.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

/// Cell means over seeds, in first-seen order.
pub fn mean_reports(reports: &[EvaluationReport]) -> Vec<EvaluationReport> {
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<&EvaluationReport>> = BTreeMap::new();
    for r in reports {
        let key = (r.noise.clone(), r.strategy.clone(), r.params.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let mean = |f: fn(&EvaluationReport) -> f64| {
                mean_std(&g.iter().map(|r| f(r)).collect::<Vec<_>>()).0
            };
            let mut out = g[0].clone();
            out.h_precision = mean(|r| r.h_precision);
            out.h_recall = mean(|r| r.h_recall);
            out.h_f1 = mean(|r| r.h_f1);
            out.accuracy = g[0].accuracy.map(|_| mean(|r| r.accuracy.unwrap_or(0.0)));
            out
        })
        .collect()
}

pub fn study(a: &StudyArgs, ctx: &mut Ctx) -> Result<()> {
    let plan: StudyPlan = match &a.config {
        Some(p) => serde_json::from_str(&ctx.read(p)?)
            .with_context(|| format!("parsing study plan {}", p.display()))?,
        None => StudyPlan::default(),
    };
    let mut problems = plan.problems();
    if a.repeats == 0 {
        problems.push("repeats must be at least 1".to_owned());
    }
    if a.jobs == 0 {
        problems.push("jobs must be at least 1".to_owned());
    }
    check(problems)?;
    let h = match &a.hierarchy {
        Some(p) => ctx.hierarchy(p)?,
        None => random_taxonomy(a.leaves, a.max_fanout, a.max_depth, a.seed)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .context("starting worker pool")?;
    let mut reports = Vec::new();
    for seed in a.seed..a.seed + a.repeats {
        reports.extend(pool.install(|| plan.run(&h, seed))?);
    }
    ctx.resolved = serde_json::to_value(&plan)?;
    let metric = match a.metric {
        MetricKind::Hf1 => TableMetric::HierarchicalF1,
        MetricKind::Accuracy => TableMetric::Accuracy,
    };
    let table = format_table(&mean_reports(&reports), metric);
    print!("{table}");
    ctx.manifest = Some(with_suffix(&a.out, ".manifest.json"));
    ctx.write(&with_suffix(&a.out, ".csv"), &reports_to_csv(&reports))?;
    ctx.write(
        &with_suffix(&a.out, ".json"),
        &(serde_json::to_string_pretty(&reports)? + "\n"),
    )?;
    ctx.write(&with_suffix(&a.out, ".table.txt"), &table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefreshKind {
    EveryBatch,
    EveryEpoch,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct LoopArgs {
    /// Strategy for pseudo-labels; `none` trains on the noisy labels.
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value_t = 6)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = RefreshKind::EveryBatch)]
    pub refresh: RefreshKind,
    /// Count smoothing of the learner.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Seeds the task, the noise and the extrapolation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix: writes `<out>.epochs.csv`, `<out>.json` and `<out>.telemetry.ndjson`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct LoopSummary<'a> {
    initial: &'a EvaluationReport,
    epochs: &'a [imprecise::harness::self_training::EpochRecord],
    final_theta: Option<f64>,
}

pub fn run_loop(a: &LoopArgs, ctx: &mut Ctx) -> Result<()> {
    let cfg = LoopConfig {
        method: a.strategy.method(a.seed),
        noise: NoiseModelConfig::new(a.noise.model(), a.seed),
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        refresh: match a.refresh {
            RefreshKind::EveryBatch => Refresh::EveryBatch,
            RefreshKind::EveryEpoch => Refresh::EveryEpoch,
        },
        alpha: a.alpha,
    };
    check(cfg.problems())?;
    let spec = TaskSpec::default();
    let task = SyntheticTask::generate(&spec, a.seed)?;
    let outcome = task.run(&cfg)?;
    ctx.resolved = serde_json::json!({ "task": spec, "loop": cfg });

    let mut csv = String::from(
        "epoch,accuracy,hP,hR,hF1,mean_ic_gain,extrapolated_fraction,pseudo_label_entropy,theta\n",
    );
    let row = |csv: &mut String, epoch: usize, r: &EvaluationReport, rest: [String; 4]| {
        let _ = writeln!(
            csv,
            "{epoch},{},{:.6},{:.6},{:.6},{}",
            r.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default(),
            r.h_precision,
            r.h_recall,
            r.h_f1,
            rest.join(",")
        );
    };
    row(&mut csv, 0, &outcome.initial, Default::default());
    for e in &outcome.epochs {
        let theta = e.theta.map(|t| format!("{t:.6}")).unwrap_or_default();
        row(
            &mut csv,
            e.epoch,
            &e.report,
            [
                format!("{:.6}", e.mean_ic_gain),
                format!("{:.6}", e.extrapolated_fraction),
                format!("{:.6}", e.pseudo_label_entropy),
                theta,
            ],
        );
    }
    let mut telemetry = String::new();
    for t in &outcome.telemetry {
        telemetry.push_str(&serde_json::to_string(t)?);
        telemetry.push('\n');
    }
    let summary = LoopSummary {
        initial: &outcome.initial,
        epochs: &outcome.epochs,
        final_theta: outcome.final_state.as_ref().map(|s| s.theta()),
    };

    let last = outcome.final_report();
    print!(
        "{} under {}: accuracy {:.4} -> {:.4}",
        cfg.method.name(),
        cfg.noise.model.label(),
        outcome.initial.accuracy.unwrap_or(0.0),
        last.accuracy.unwrap_or(0.0)
    );
    match (outcome.epochs.last(), summary.final_theta) {
        (Some(e), Some(theta)) => println!(
            ", final-epoch IC gain {:.4}, theta {theta:.4}",
            e.mean_ic_gain
        ),
        (Some(e), None) => println!(", final-epoch IC gain {:.4}", e.mean_ic_gain),
        _ => println!(),
    }

    ctx.manifest = Some(with_suffix(&a.out, ".manifest.json"));
    ctx.write(&with_suffix(&a.out, ".epochs.csv"), &csv)?;
    ctx.write(
        &with_suffix(&a.out, ".json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;
    ctx.write(&with_suffix(&a.out, ".telemetry.ndjson"), &telemetry)
}
