//! `physrec` command line: every pipeline stage reads and writes plain
//! files, so stages can be re-run or swapped independently.

pub mod server;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use physrec_core::annealer::{QuantityDomain, K_RANGE};
use physrec_core::catalog::{generate_synthetic, validate, SyntheticParams};
use physrec_core::evalbench::{write_report_dir, AblationId, Bench, BenchConfig};
use physrec_core::kgraph::build_graph;
use physrec_core::recommend::{Artifacts, RecommendRequest, ServiceDefaults};
use physrec_core::thermo::{train, ThermoTargets, TrainConfig};
use physrec_core::{Activity, Checkpoint, Dataset, EncoderConfig, GraphConfig, Goal, PhysioParams, SemanticGraph, Sex, UserProfile};

#[derive(Debug, Parser)]
#[command(name = "physrec", version, about = "Nutrition-constrained grocery bundle recommendation")]
pub struct Cli {
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic catalog, food table, cohort and purchase log as CSV.
    GenData(GenDataArgs),
    /// Link products, map them to reference foods and save the graph.
    BuildGraph(BuildGraphArgs),
    /// Train embeddings with the ranking loss plus the nutrition regularizer.
    Train(TrainArgs),
    /// Recommend a bundle for one profile.
    Recommend(RecommendArgs),
    /// Run ablation arms over several seeds and write a report directory.
    Ablate(AblateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub products: usize,
    #[arg(long, default_value_t = 100)]
    pub foods: usize,
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 20)]
    pub purchases_per_user: usize,
    /// Output directory.
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Directory holding the four CSV files.
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    /// Cosine threshold for product links and food mapping.
    #[arg(long, default_value_t = 0.5)]
    pub theta_sim: f64,
    #[arg(long, default_value = "graph.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    #[arg(long, default_value = "graph.json")]
    pub graph: PathBuf,
    /// Weight of the nutrition regularizer.
    #[arg(long, default_value_t = 0.03)]
    pub lambda: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Checkpoint path; the loss log goes next to it as `<stem>.loss.csv`.
    #[arg(long, default_value = "checkpoint.json")]
    pub out: PathBuf,
}

/// Bundle search knobs shared by `recommend`, `ablate` and `serve`.
#[derive(Debug, Clone, Args)]
pub struct OptArgs {
    /// Desire weight.
    #[arg(long, default_value_t = 0.10)]
    pub alpha: f64,
    /// Protein penalty weight.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Bundle size.
    #[arg(long, default_value_t = 8, value_parser = parse_k)]
    pub k: usize,
    /// Largest quantity per item (quantities run 1..=qmax).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=3))]
    pub qmax: u32,
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    /// Relative band around both targets.
    #[arg(long, default_value_t = 0.12)]
    pub tolerance: f64,
}

fn parse_k(s: &str) -> Result<usize, String> {
    let k: usize = s.parse().map_err(|e| format!("{e}"))?;
    if (K_RANGE.0..=K_RANGE.1).contains(&k) {
        Ok(k)
    } else {
        Err(format!("k must lie in [{}, {}]", K_RANGE.0, K_RANGE.1))
    }
}

impl OptArgs {
    pub fn defaults(&self) -> anyhow::Result<ServiceDefaults> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            bail!("--tolerance {} outside (0, 1)", self.tolerance);
        }
        let mut d = ServiceDefaults::default();
        d.opt.alpha = self.alpha;
        d.opt.beta = self.beta;
        d.opt.k = self.k;
        d.opt.quantities = QuantityDomain::new(1, self.qmax)?;
        d.opt.iterations = self.iterations;
        d.physio = PhysioParams::default().with_tolerance(self.tolerance);
        d.opt.check()?;
        Ok(d)
    }
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    #[arg(long, default_value = "graph.json")]
    pub graph: PathBuf,
    #[arg(long, default_value = "checkpoint.json")]
    pub checkpoint: PathBuf,
    /// JSON file with a profile or a full request; replaces the inline flags.
    #[arg(long, conflicts_with_all = ["age", "sex", "weight", "height", "activity", "goal"])]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub age: Option<i64>,
    #[arg(long)]
    pub sex: Option<Sex>,
    /// kg
    #[arg(long)]
    pub weight: Option<f64>,
    /// cm
    #[arg(long)]
    pub height: Option<f64>,
    #[arg(long)]
    pub activity: Option<Activity>,
    #[arg(long)]
    pub goal: Option<Goal>,
    /// Known user id (uses that user's embedding instead of cold start).
    #[arg(long)]
    pub user: Option<String>,
    /// Annealer seed; derived from the request when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub opt: OptArgs,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    /// Comma-separated arms (A0..A6) or `all`.
    #[arg(long, default_value = "all")]
    pub ablation: String,
    /// Number of seeds, counting up from --seed.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// First seed.
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.03)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub theta_sim: f64,
    #[command(flatten)]
    pub opt: OptArgs,
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    #[arg(long, default_value = "graph.json")]
    pub graph: PathBuf,
    #[arg(long, default_value = "checkpoint.json")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[command(flatten)]
    pub opt: OptArgs,
}

/// Parses `argv` and runs it. Returns the process exit code: 0 success,
/// 2 usage error, 1 runtime error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        // Fails only if a pool already exists, which is fine to ignore.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::BuildGraph(a) => build_graph_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Recommend(a) => recommend_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Serve(a) => serve_cmd(a, cli.threads),
    }
}

fn load_dataset(dir: &Path) -> anyhow::Result<Dataset> {
    if !dir.is_dir() {
        bail!("data directory {} not found", dir.display());
    }
    let ds = Dataset::load_dir(dir).with_context(|| format!("loading {}", dir.display()))?;
    let problems = validate(&ds);
    if !problems.is_empty() {
        bail!("dataset {} is invalid:\n  {}", dir.display(), problems.join("\n  "));
    }
    Ok(ds)
}

fn gen_data(a: GenDataArgs) -> anyhow::Result<()> {
    let ds = generate_synthetic(SyntheticParams {
        seed: a.seed,
        n_products: a.products,
        n_foods: a.foods,
        n_users: a.users,
        purchases_per_user: a.purchases_per_user,
    })
    .context("catalog")?;
    ds.write_dir(&a.out).context("catalog")?;
    println!(
        "wrote {} products, {} foods, {} users, {} purchases to {}",
        ds.products.len(),
        ds.foods.len(),
        ds.users.len(),
        ds.purchases.len(),
        a.out.display()
    );
    Ok(())
}

fn build_graph_cmd(a: BuildGraphArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.data)?;
    let config = GraphConfig {
        theta_sim: a.theta_sim,
        ..GraphConfig::default()
    };
    let (graph, mapping) = build_graph(&ds, &EncoderConfig::default(), config).context("kgraph")?;
    graph.save(&a.out).context("kgraph")?;
    println!(
        "graph: {} purchase, {} similar, {} maps edges; {} of {} products unmapped -> {}",
        graph.purchase_edges.len(),
        graph.similar_edges.len(),
        graph.maps_edges.len(),
        mapping.unmapped.len(),
        graph.n_products,
        a.out.display()
    );
    Ok(())
}

pub fn loss_log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("loss.csv")
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let ds = load_dataset(&a.data)?;
    let graph = SemanticGraph::load(&a.graph, &ds).with_context(|| format!("kgraph: loading {}", a.graph.display()))?;
    let config = TrainConfig {
        lambda: a.lambda,
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let targets = ThermoTargets::for_cohort(&ds, &PhysioParams::default());
    let out = train(&graph, &targets, &config).context("thermo")?;
    let ckpt = Checkpoint::from_params(&out.params, a.seed, serde_json::to_value(config)?);
    std::fs::write(&a.out, serde_json::to_string(&ckpt)?).with_context(|| format!("writing {}", a.out.display()))?;
    let log = loss_log_path(&a.out);
    out.write_log(&log).context("thermo")?;
    let (first, last) = (&out.log[0], out.log.last().unwrap());
    println!(
        "trained {} epochs: l_total {:.4} -> {:.4}; checkpoint {} log {}",
        out.log.len(),
        first.l_total,
        last.l_total,
        a.out.display(),
        log.display()
    );
    Ok(())
}

fn read_request(path: &Path) -> anyhow::Result<RecommendRequest> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(r) = serde_json::from_str::<RecommendRequest>(&text) {
        return Ok(r);
    }
    let profile: UserProfile = serde_json::from_str(&text)
        .with_context(|| format!("{}: neither a request nor a profile", path.display()))?;
    Ok(RecommendRequest::new(profile))
}

fn inline_profile(a: &RecommendArgs) -> anyhow::Result<UserProfile> {
    let mut missing = Vec::new();
    if a.age.is_none() {
        missing.push("--age");
    }
    if a.sex.is_none() {
        missing.push("--sex");
    }
    if a.weight.is_none() {
        missing.push("--weight");
    }
    if a.height.is_none() {
        missing.push("--height");
    }
    if a.activity.is_none() {
        missing.push("--activity");
    }
    if a.goal.is_none() {
        missing.push("--goal");
    }
    if !missing.is_empty() {
        bail!("missing profile flags: {} (or pass --profile FILE)", missing.join(" "));
    }
    Ok(UserProfile {
        id: a.user.clone().unwrap_or_default(),
        age: a.age.unwrap(),
        sex: a.sex.unwrap(),
        weight: a.weight.unwrap(),
        height: a.height.unwrap(),
        activity: a.activity.unwrap(),
        goal: a.goal.unwrap(),
    })
}

fn recommend_cmd(a: RecommendArgs) -> anyhow::Result<()> {
    let mut req = match &a.profile {
        Some(p) => read_request(p)?,
        None => RecommendRequest::new(inline_profile(&a)?),
    };
    if a.seed.is_some() {
        req.overrides.seed = a.seed;
    }
    if let Some(v) = req.violations().first() {
        bail!("{}: {}", v.field, v.message);
    }
    let defaults = a.opt.defaults()?;
    let artifacts = Artifacts::load(&a.data, &a.graph, &a.checkpoint).context("loading artifacts")?;
    let resp = artifacts.recommend(&req, &defaults).context("recommend")?;
    let mut json = serde_json::to_string_pretty(&resp)?;
    json.push('\n');
    if let Some(out) = &a.out {
        std::fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    }
    print!("{json}");
    Ok(())
}

pub fn parse_ablations(spec: &str) -> anyhow::Result<Vec<AblationId>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(AblationId::ALL.to_vec());
    }
    let mut ids = spec
        .split(',')
        .map(|s| s.parse::<AblationId>())
        .collect::<Result<Vec<_>, _>>()?;
    ids.sort();
    ids.dedup();
    Ok(ids)
}

fn ablate_cmd(a: AblateArgs) -> anyhow::Result<()> {
    if a.runs == 0 {
        bail!("--runs must be >= 1");
    }
    let ids = parse_ablations(&a.ablation)?;
    let ds = load_dataset(&a.data)?;
    let defaults = a.opt.defaults()?;
    let mut config = BenchConfig {
        opt: defaults.opt,
        physio: defaults.physio,
        ..BenchConfig::default()
    };
    config.train.lambda = a.lambda;
    config.graph.theta_sim = a.theta_sim;
    let seeds: Vec<u64> = (0..a.runs as u64).map(|i| a.seed + i).collect();
    let mut bench = Bench::new(ds, config).context("evalbench")?;
    let mut reports = Vec::new();
    for id in ids {
        let r = bench.run(id, &seeds).with_context(|| format!("evalbench: {id}"))?;
        eprintln!("{id} {}: TSR {:.3}", id.method(), r.tsr.mean);
        reports.push(r);
    }
    write_report_dir(&a.out, &reports).context("evalbench")?;
    let (text, _) = physrec_core::evalbench::render_table(&reports)?;
    print!("{text}");
    Ok(())
}

fn serve_cmd(a: ServeArgs, threads: usize) -> anyhow::Result<()> {
    let defaults = a.opt.defaults()?;
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if threads > 0 {
        rt.worker_threads(threads);
    }
    let rt = rt.enable_all().build()?;
    rt.block_on(server::serve(a.port, a.data, a.graph, a.checkpoint, defaults))
}
