use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use advrate::analysis::{
    self, adv_collision_rate, architecture_sweep, empirical_rates, evaluate_model,
    grid_family_rate, spatial_heatmap, sweep_csv, temporal_sweep, AnalysisConfig, SweepConfig,
};
use advrate::counting::{estimate_rate, CounterConfig};
use advrate::gridworld::GridConfig;
use advrate::io::{self, Envelope};
use advrate::properties::{jumping_world_properties, load_properties, PropertyFamily};
use advrate::trainer::{initial_network, train_with_progress, Checkpoint, CheckpointMeta, TrainConfig};
use advrate::verifier::{
    self, adversarial_rate, decide, extract_counterexamples, Verdict, VerifierConfig,
};
use advrate::{Activation, Error, Network, Result};

const EXIT_SAT: u8 = 1;
const EXIT_UNKNOWN: u8 = 2;
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "advrate", version, about = "Adversarial-rate verification of feed-forward policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide every property and compute its violation rate. Exit 0 when all
    /// are UNSAT, 1 when any is SAT, 2 when any is UNKNOWN.
    Verify(VerifyCmd),
    /// Violation-rate bracket for every property.
    Rate(VerifyCmd),
    /// Randomized estimate of the violation rate.
    Count(CountCmd),
    /// Train a Jumping World policy.
    Train(TrainCmd),
    /// Success, collision, adversarial and adversarial-collision rates.
    Eval(EvalCmd),
    /// Per-cell adversarial rates over the Jumping World grid.
    Heatmap(HeatmapCmd),
    /// Train and verify a grid of architectures and activations.
    Sweep(SweepCmd),
    /// Rates and heatmaps across a sequence of checkpoints.
    Temporal(TemporalCmd),
    /// Collision rate of one model next to another model's counterexamples.
    CrossSeed(CrossSeedCmd),
}

#[derive(Args, Clone, Serialize)]
struct VerifierArgs {
    /// Resolution, as a fraction of each precondition width.
    #[arg(long, env = "ADVRATE_EPSILON", default_value_t = verifier::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Box classification budget per property.
    #[arg(long, env = "ADVRATE_MAX_BOXES", default_value_t = verifier::DEFAULT_MAX_BOXES)]
    max_boxes: usize,
    /// Boxes and witnesses kept per report.
    #[arg(long, default_value_t = 64)]
    max_stored: usize,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    workers: usize,
}

impl VerifierArgs {
    fn config(&self) -> VerifierConfig {
        VerifierConfig {
            epsilon: self.epsilon,
            max_boxes: self.max_boxes,
            workers: self.workers,
            max_stored: self.max_stored,
        }
    }
}

#[derive(Args, Clone, Serialize)]
struct GridArgs {
    #[arg(long, default_value_t = 9)]
    width: usize,
    #[arg(long, default_value_t = 9)]
    height: usize,
    #[arg(long, default_value_t = 10)]
    obstacles: usize,
    #[arg(long, default_value_t = 300)]
    max_steps: usize,
    /// Half-width of the uniform position noise.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
}

impl GridArgs {
    fn config(&self) -> GridConfig {
        GridConfig {
            width: self.width,
            height: self.height,
            n_obstacles: self.obstacles,
            noise_half_width: self.noise,
            max_steps: self.max_steps,
            seed: 0,
        }
    }
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Result file. Defaults to a name built from the command, model, seed
    /// and config hash.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for outputs with relative or default names.
    #[arg(long, env = "ADVRATE_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

impl OutArgs {
    fn resolve(&self, default_name: String) -> PathBuf {
        let dir = self.out_dir.clone().unwrap_or_default();
        match &self.out {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => dir.join(p),
            None => dir.join(default_name),
        }
    }
}

/// Input file recorded in a result config.
#[derive(Serialize)]
struct InputFile {
    path: String,
    sha256: String,
}

impl InputFile {
    fn new(path: &Path) -> Result<Self> {
        Ok(InputFile {
            path: path.display().to_string(),
            sha256: io::file_digest(path)?,
        })
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn default_name(command: &str, model: &str, seed: u64, hash: &str, ext: &str) -> String {
    format!("{command}_{model}_s{seed}_{}.{ext}", &hash[..12])
}

fn write_envelope<C: Serialize, R: Serialize>(
    command: &str,
    model: &str,
    seed: u64,
    config: C,
    result: R,
    out: &OutArgs,
) -> Result<PathBuf> {
    let env = Envelope::new(command, config, result)?;
    let path = out.resolve(default_name(command, model, seed, &env.config_hash, "json"));
    env.write(&path)?;
    Ok(path)
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

#[derive(Args)]
struct VerifyCmd {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    props: PathBuf,
    #[command(flatten)]
    verifier: VerifierArgs,
    /// Recorded for provenance; verification is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize)]
struct VerifyConfig<'a> {
    net: InputFile,
    props: InputFile,
    verifier: &'a VerifierArgs,
    seed: u64,
}

fn load_inputs(net: &Path, props: &Path) -> Result<(Network, PropertyFamily)> {
    let network = io::load_network(net)?;
    let family = load_properties(props)?;
    family.validate_for(&network)?;
    Ok((network, family))
}

#[derive(Serialize)]
struct VerifyResult {
    property: String,
    #[serde(flatten)]
    verdict: Verdict,
    decision_boxes: usize,
    splits: usize,
    report: verifier::RegionReport,
}

fn run_verify(cmd: &VerifyCmd) -> Result<u8> {
    let (net, family) = load_inputs(&cmd.net, &cmd.props)?;
    let vcfg = cmd.verifier.config();
    let mut results = Vec::new();
    let mut code = 0;
    for p in family.iter() {
        let d = decide(&net, p, &vcfg)?;
        let report = adversarial_rate(&net, p, &vcfg)?;
        match &d.verdict {
            Verdict::Sat { witness } => {
                code = EXIT_SAT;
                let y = net.forward(witness)?;
                println!("{}: SAT witness {:?} output {:?}", p.name, witness, y);
            }
            Verdict::Unsat => println!("{}: UNSAT", p.name),
            Verdict::Unknown { residual_volume } => {
                if code == 0 {
                    code = EXIT_UNKNOWN;
                }
                println!("{}: UNKNOWN residual volume {residual_volume}", p.name);
            }
        }
        println!(
            "  rate [{}, {}]{}",
            report.rate_lower,
            report.rate_upper,
            if report.complete { "" } else { " (budget exhausted)" }
        );
        results.push(VerifyResult {
            property: p.name.clone(),
            verdict: d.verdict,
            decision_boxes: d.boxes_classified,
            splits: d.splits,
            report,
        });
    }
    let config = VerifyConfig {
        net: InputFile::new(&cmd.net)?,
        props: InputFile::new(&cmd.props)?,
        verifier: &cmd.verifier,
        seed: cmd.seed,
    };
    let path = write_envelope("verify", &stem(&cmd.net), cmd.seed, config, results, &cmd.out)?;
    println!("wrote {}", path.display());
    Ok(code)
}

#[derive(Serialize)]
struct RateResult {
    report: verifier::RegionReport,
    counterexamples: Vec<Vec<f64>>,
}

fn run_rate(cmd: &VerifyCmd) -> Result<u8> {
    let (net, family) = load_inputs(&cmd.net, &cmd.props)?;
    let vcfg = cmd.verifier.config();
    let mut results = Vec::new();
    for p in family.iter() {
        let report = adversarial_rate(&net, p, &vcfg)?;
        println!(
            "{}: adversarial_rate {} (bracket [{}, {}]{})",
            p.name,
            report.adversarial_rate,
            report.rate_lower,
            report.rate_upper,
            if report.complete { "" } else { ", budget exhausted" }
        );
        let counterexamples = extract_counterexamples(&net, p, &report, 8);
        results.push(RateResult {
            report,
            counterexamples,
        });
    }
    let config = VerifyConfig {
        net: InputFile::new(&cmd.net)?,
        props: InputFile::new(&cmd.props)?,
        verifier: &cmd.verifier,
        seed: cmd.seed,
    };
    let path = write_envelope("rate", &stem(&cmd.net), cmd.seed, config, results, &cmd.out)?;
    println!("wrote {}", path.display());
    Ok(0)
}

#[derive(Args)]
struct CountCmd {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    props: PathBuf,
    #[arg(long, default_value_t = 4)]
    splits: u32,
    #[arg(long, default_value_t = 15)]
    trials: usize,
    #[arg(long, default_value_t = 256)]
    balance_samples: usize,
    #[arg(long, env = "ADVRATE_EPSILON", default_value_t = 1.0 / 1024.0)]
    leaf_epsilon: f64,
    #[arg(long, env = "ADVRATE_MAX_BOXES", default_value_t = verifier::DEFAULT_MAX_BOXES)]
    leaf_max_boxes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize)]
struct CountConfig {
    net: InputFile,
    props: InputFile,
    counter: CounterConfig,
}

fn run_count(cmd: &CountCmd) -> Result<u8> {
    let (net, family) = load_inputs(&cmd.net, &cmd.props)?;
    let ccfg = CounterConfig {
        splits: cmd.splits,
        trials: cmd.trials,
        balance_samples: cmd.balance_samples,
        leaf_epsilon: cmd.leaf_epsilon,
        seed: cmd.seed,
        leaf_max_boxes: cmd.leaf_max_boxes,
    };
    let mut results = Vec::new();
    for p in family.iter() {
        let est = estimate_rate(&net, p, &ccfg)?;
        println!(
            "{}: median {} (mean {}, quartiles [{}, {}], {} degraded)",
            p.name,
            est.median_rate,
            est.mean_rate,
            est.quantiles.0,
            est.quantiles.1,
            est.degraded.iter().filter(|d| **d).count()
        );
        results.push(est);
    }
    let config = CountConfig {
        net: InputFile::new(&cmd.net)?,
        props: InputFile::new(&cmd.props)?,
        counter: ccfg,
    };
    let path = write_envelope("count", &stem(&cmd.net), cmd.seed, config, results, &cmd.out)?;
    println!("wrote {}", path.display());
    Ok(0)
}

/// Comma-separated hidden layer widths.
#[derive(Clone, Debug)]
struct Widths(Vec<usize>);

impl std::str::FromStr for Widths {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(Widths)
    }
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    Activation::parse(s).map_err(|e| e.to_string())
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long, default_value_t = 20_000)]
    episodes: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, default_value = "32,32")]
    hidden: Widths,
    #[arg(long, default_value = "relu", value_parser = parse_activation)]
    activation: Activation,
    #[arg(long, default_value_t = 1000)]
    checkpoint_every: usize,
    #[arg(long, default_value_t = 0.01)]
    entropy: f64,
    /// Episodes averaged per update.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 0.99)]
    baseline_decay: f64,
}

impl TrainArgs {
    fn config(&self, seed: u64, grid: GridConfig) -> TrainConfig {
        TrainConfig {
            episodes: self.episodes,
            learning_rate: self.lr,
            gamma: self.gamma,
            hidden_sizes: self.hidden.0.clone(),
            activation: self.activation,
            seed,
            checkpoint_every: self.checkpoint_every,
            entropy_bonus: self.entropy,
            batch_episodes: self.batch,
            baseline_decay: self.baseline_decay,
            success_window: 500,
            grid,
        }
    }
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving init.json, ckpt_<episode>.json, final.json and
    /// train.json.
    #[arg(long, env = "ADVRATE_OUT_DIR", default_value = "checkpoints")]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct TrainResult {
    checkpoints: Vec<CheckpointEntry>,
}

#[derive(Serialize)]
struct CheckpointEntry {
    file: String,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

fn run_train(cmd: &TrainCmd) -> Result<u8> {
    let tcfg = cmd.train.config(cmd.seed, cmd.grid.config());
    let init = initial_network(&tcfg)?;
    io::save_network(cmd.out_dir.join("init.json"), &init)?;
    let ckpts = train_with_progress(&tcfg, |m| {
        eprintln!("episode {}: running success {:.3}", m.episode_index, m.running_success_rate);
    })?;
    let mut entries = Vec::new();
    for c in &ckpts {
        let name = format!("ckpt_{}", c.meta.episode_index);
        io::save_checkpoint(&cmd.out_dir, &name, c)?;
        entries.push(CheckpointEntry {
            file: format!("{name}.json"),
            meta: c.meta.clone(),
        });
    }
    let last: &Checkpoint = ckpts.last().expect("train returns the final model");
    io::save_checkpoint(&cmd.out_dir, "final", last)?;
    let env = Envelope::new("train", &tcfg, TrainResult { checkpoints: entries })?;
    env.write(cmd.out_dir.join("train.json"))?;
    println!(
        "trained {} episodes, final running success {:.3}; wrote {}",
        last.meta.episode_index,
        last.meta.running_success_rate,
        cmd.out_dir.display()
    );
    Ok(0)
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    net: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    verifier: VerifierArgs,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    /// Proximity radius around counterexamples, in cells.
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    #[arg(long, default_value_t = 16)]
    cex_per_property: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the counterexamples as JSONL.
    #[arg(long)]
    cex_out: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    net: InputFile,
    grid: &'a GridArgs,
    verifier: &'a VerifierArgs,
    analysis: AnalysisConfig,
}

fn run_eval(cmd: &EvalCmd) -> Result<u8> {
    let net = io::load_network(&cmd.net)?;
    let grid = cmd.grid.config();
    let family = jumping_world_properties(&grid)?;
    let acfg = AnalysisConfig {
        n_episodes: cmd.episodes,
        delta: cmd.delta,
        counterexamples_per_property: cmd.cex_per_property,
        seed: cmd.seed,
    };
    let ev = evaluate_model(&net, &grid, &family, &cmd.verifier.config(), &acfg)?;
    let m = &ev.metrics;
    println!("success   {:.4} ± {:.4}", m.success.rate, m.success.stderr);
    println!("collision {:.4} ± {:.4}", m.collision.rate, m.collision.stderr);
    println!("timeout   {:.4} ± {:.4}", m.timeout.rate, m.timeout.stderr);
    println!(
        "adversarial rate {:.4} (lower {:.4}{})",
        m.adversarial_rate,
        m.adversarial_rate_lower,
        if m.verification_complete { "" } else { ", budget exhausted" }
    );
    match &m.adv_collision {
        Some(a) => println!(
            "adv. collision {:.4} ± {:.4} ({} counterexamples, {} skipped)",
            a.collision.rate,
            a.collision.stderr,
            ev.counterexamples.len(),
            a.skipped
        ),
        None => println!("adv. collision n/a (no counterexamples)"),
    }
    if let Some(p) = &cmd.cex_out {
        io::write_jsonl(p, &ev.counterexamples)?;
    }
    let config = EvalConfig {
        net: InputFile::new(&cmd.net)?,
        grid: &cmd.grid,
        verifier: &cmd.verifier,
        analysis: acfg,
    };
    #[derive(Serialize)]
    struct EvalResult<'a> {
        metrics: &'a analysis::ModelMetrics,
        per_property: &'a [analysis::PropertyRate],
    }
    let result = EvalResult {
        metrics: &ev.metrics,
        per_property: &ev.family.rate.per_property,
    };
    let path = write_envelope("eval", &stem(&cmd.net), cmd.seed, config, result, &cmd.out)?;
    println!("wrote {}", path.display());
    Ok(0)
}

#[derive(Args)]
struct HeatmapCmd {
    #[arg(long)]
    net: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    verifier: VerifierArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Serialize)]
struct HeatmapConfig<'a> {
    net: InputFile,
    grid: &'a GridArgs,
    verifier: &'a VerifierArgs,
    seed: u64,
}

fn run_heatmap(cmd: &HeatmapCmd) -> Result<u8> {
    let net = io::load_network(&cmd.net)?;
    let grid = cmd.grid.config();
    let family = jumping_world_properties(&grid)?;
    let vcfg = cmd.verifier.config();
    let model = stem(&cmd.net);
    let map = spatial_heatmap(&net, &grid, &family, &vcfg, &model)?;
    let whole = grid_family_rate(&net, &grid, &family, &vcfg)?.rate;
    for y in (0..map.height).rev() {
        let row: Vec<String> = (0..map.width).map(|x| format!("{:.3}", map.get(x, y))).collect();
        println!("{}", row.join(" "));
    }
    println!(
        "cell mean {:.6}, whole-domain rate {:.6}",
        map.cell_mean(),
        whole.rate_upper
    );
    #[derive(Serialize)]
    struct HeatmapResult {
        heatmap: analysis::Heatmap,
        whole_domain: analysis::FamilyRate,
    }
    let csv = map.to_csv()?;
    let config = HeatmapConfig {
        net: InputFile::new(&cmd.net)?,
        grid: &cmd.grid,
        verifier: &cmd.verifier,
        seed: cmd.seed,
    };
    let result = HeatmapResult {
        heatmap: map,
        whole_domain: whole,
    };
    let path = write_envelope("heatmap", &model, cmd.seed, config, result, &cmd.out)?;
    io::write_atomic(with_extension(&path, "csv"), csv.as_bytes())?;
    println!("wrote {} and its .csv", path.display());
    Ok(0)
}

#[derive(Args)]
struct SweepCmd {
    /// Architectures as semicolon-separated width lists, e.g. "8,8;32,32".
    #[arg(long, value_delimiter = ';', default_value = "8,8;32,32")]
    sizes: Vec<Widths>,
    #[arg(long, value_delimiter = ',', value_parser = parse_activation, default_value = "relu")]
    activations: Vec<Activation>,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    seeds: Vec<u64>,
    #[command(flatten)]
    train: TrainArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    verifier: VerifierArgs,
    #[arg(long, default_value_t = 0.9)]
    cutoff: f64,
    #[arg(long, default_value_t = 500)]
    eval_episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

fn run_sweep(cmd: &SweepCmd) -> Result<u8> {
    let grid = cmd.grid.config();
    let family = jumping_world_properties(&grid)?;
    let scfg = SweepConfig {
        sizes: cmd.sizes.iter().map(|w| w.0.clone()).collect(),
        activations: cmd.activations.clone(),
        seeds: cmd.seeds.clone(),
        train: cmd.train.config(0, grid),
        success_cutoff: cmd.cutoff,
        eval_episodes: cmd.eval_episodes,
        eval_seed: cmd.seed,
    };
    #[derive(Serialize)]
    struct Cfg<'a> {
        sweep: &'a SweepConfig,
        verifier: &'a VerifierArgs,
    }
    let rows = architecture_sweep(&scfg, &family, &cmd.verifier.config())?;
    let csv = sweep_csv(&rows)?;
    print!("{csv}");
    let cfg = Cfg {
        sweep: &scfg,
        verifier: &cmd.verifier,
    };
    let path = write_envelope("sweep", "grid", cmd.seed, cfg, rows, &cmd.out)?;
    io::write_atomic(with_extension(&path, "csv"), csv.as_bytes())?;
    println!("wrote {} and its .csv", path.display());
    Ok(0)
}

#[derive(Args)]
struct TemporalCmd {
    /// Checkpoint network files in training order.
    #[arg(long, num_args = 2.., required = true)]
    nets: Vec<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    verifier: VerifierArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

fn run_temporal(cmd: &TemporalCmd) -> Result<u8> {
    let grid = cmd.grid.config();
    let family = jumping_world_properties(&grid)?;
    let checkpoints = cmd
        .nets
        .iter()
        .map(|p| Ok((stem(p), io::load_network(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let points = temporal_sweep(&checkpoints, &grid, &family, &cmd.verifier.config())?;
    for p in &points {
        println!("{}: rate [{:.4}, {:.4}]", p.label, p.rate.rate_lower, p.rate.rate_upper);
    }
    #[derive(Serialize)]
    struct Cfg<'a> {
        nets: Vec<InputFile>,
        grid: &'a GridArgs,
        verifier: &'a VerifierArgs,
        seed: u64,
    }
    let cfg = Cfg {
        nets: cmd.nets.iter().map(|p| InputFile::new(p)).collect::<Result<_>>()?,
        grid: &cmd.grid,
        verifier: &cmd.verifier,
        seed: cmd.seed,
    };
    let model = stem(&cmd.nets[0]);
    let path = write_envelope("temporal", &model, cmd.seed, cfg, &points, &cmd.out)?;
    println!("wrote {}", path.display());
    Ok(0)
}

#[derive(Args)]
struct CrossSeedCmd {
    /// Model whose counterexamples seed the rollouts.
    #[arg(long)]
    net_a: PathBuf,
    /// Model being rolled out.
    #[arg(long)]
    net_b: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    verifier: VerifierArgs,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    #[arg(long, default_value_t = 16)]
    cex_per_property: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

fn run_cross_seed(cmd: &CrossSeedCmd) -> Result<u8> {
    let a = io::load_network(&cmd.net_a)?;
    let b = io::load_network(&cmd.net_b)?;
    let grid = cmd.grid.config();
    let family = jumping_world_properties(&grid)?;
    let analysis_a = grid_family_rate(&a, &grid, &family, &cmd.verifier.config())?;
    let cex = analysis_a.counterexamples(&a, &family, cmd.cex_per_property);
    if cex.is_empty() {
        return Err(Error::Unrealizable(format!(
            "{} has no counterexamples; cross-seed rate is not applicable",
            cmd.net_a.display()
        )));
    }
    let rng = || ChaCha8Rng::seed_from_u64(cmd.seed);
    let own = adv_collision_rate(&a, &grid, &cex, cmd.delta, cmd.episodes, &mut rng())?;
    let cross = adv_collision_rate(&b, &grid, &cex, cmd.delta, cmd.episodes, &mut rng())?;
    let baseline = empirical_rates(&b, &grid, cmd.episodes, &mut rng())?;
    println!("A near A's counterexamples: {:.4}", own.collision.rate);
    println!("B near A's counterexamples: {:.4}", cross.collision.rate);
    println!("B from random resets:      {:.4}", baseline.collision.rate);
    #[derive(Serialize)]
    struct Cfg<'a> {
        net_a: InputFile,
        net_b: InputFile,
        grid: &'a GridArgs,
        verifier: &'a VerifierArgs,
        episodes: usize,
        delta: f64,
        cex_per_property: usize,
        seed: u64,
    }
    #[derive(Serialize)]
    struct CrossResult {
        self_rate: analysis::AdvCollision,
        cross_rate: analysis::AdvCollision,
        baseline_b: analysis::EmpiricalRates,
        n_counterexamples: usize,
    }
    let cfg = Cfg {
        net_a: InputFile::new(&cmd.net_a)?,
        net_b: InputFile::new(&cmd.net_b)?,
        grid: &cmd.grid,
        verifier: &cmd.verifier,
        episodes: cmd.episodes,
        delta: cmd.delta,
        cex_per_property: cmd.cex_per_property,
        seed: cmd.seed,
    };
    let result = CrossResult {
        self_rate: own,
        cross_rate: cross,
        baseline_b: baseline,
        n_counterexamples: cex.len(),
    };
    let model = format!("{}-vs-{}", stem(&cmd.net_b), stem(&cmd.net_a));
    let path = write_envelope("cross-seed", &model, cmd.seed, cfg, result, &cmd.out)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Verify(c) => run_verify(c),
        Command::Rate(c) => run_rate(c),
        Command::Count(c) => run_count(c),
        Command::Train(c) => run_train(c),
        Command::Eval(c) => run_eval(c),
        Command::Heatmap(c) => run_heatmap(c),
        Command::Sweep(c) => run_sweep(c),
        Command::Temporal(c) => run_temporal(c),
        Command::CrossSeed(c) => run_cross_seed(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
