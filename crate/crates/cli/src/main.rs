mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use cosa::adapter::{
    adapter_file_len, analyze_core, encode_adapter, load_adapter, save_adapter, AdaptedLinear, Adapter, CosaAdapter,
    LoraAdapter, DEFAULT_ENERGY, DEFAULT_SPARSITY_THRESHOLD,
};
use cosa::budget::{format_millions, model_budget, MemoryModel, MethodKind, MethodSpec, ModelManifest};
use cosa::numerics::mean_std;
use cosa::projection::{DictionaryView, ProjectionPair};
use cosa::randgen::{derive_seed, gaussian_matrix, parse_seed, RngStream};
use cosa::rip::{omp_planted_trials, run_rip_study, theoretical_bound, BoundSettings, RipStudyConfig, RipTheoryConfig};
use cosa::train::{
    grad_check, run_toy_with_layer, sweep_ab, OptimizerConfig, OptimizerKind, ToyMethod, ToyTaskKind, ToyTaskSpec,
};
use cosa::CosaError;

use report::{to_rows, Format, Provenance, Report};

#[derive(Parser, Debug)]
#[command(name = "cosa", version, about = "Compressed-sensing adapter toolkit")]
struct Cli {
    /// Base seed (decimal or 0x-prefixed hex).
    #[arg(long, global = true, default_value = "0", value_parser = parse_seed)]
    seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = "COSA_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte-Carlo RIP study over one or more core configs.
    Rip(RipArgs),
    /// Mutual coherence of the Kronecker dictionary.
    Coherence(CoherenceArgs),
    /// Closed-form RIP bound.
    Bound(BoundArgs),
    /// Sparse recovery by orthogonal matching pursuit.
    Omp(OmpArgs),
    /// Trainable-parameter budget for a model manifest.
    Budget(BudgetArgs),
    /// Train a toy teacher-student task.
    Train(TrainArgs),
    /// Train the toy task over an (a, b) grid.
    Sweep(SweepArgs),
    /// Finite-difference gradient checks on random fixtures.
    Gradcheck(GradcheckArgs),
    /// Core statistics of a saved adapter.
    Analyze(AnalyzeArgs),
    /// Train an in-span toy adapter and save it.
    Export(ExportArgs),
    /// Load a saved adapter, optionally re-saving it.
    Import(ImportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    #[value(name = "paper-table4")]
    #[serde(rename = "paper-table4")]
    Reference,
}

#[derive(Args, Debug, Serialize)]
struct DimArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    a: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    /// Orthonormalize the projection pair.
    #[arg(long)]
    ortho: bool,
}

#[derive(Args, Debug, Serialize)]
struct BoundFlags {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Defaults to m * n.
    #[arg(long)]
    m_eff: Option<f64>,
    /// Defaults to a * b.
    #[arg(long)]
    n_ambient: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct RipArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[command(flatten)]
    dims: DimArgs,
    /// Sparsity levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    s: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Matrix seeds, comma separated; defaults to the global seed.
    #[arg(long, value_delimiter = ',', value_parser = parse_seed)]
    matrix_seeds: Vec<u64>,
    #[command(flatten)]
    bound: BoundFlags,
}

#[derive(Args, Debug, Serialize)]
struct CoherenceArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[command(flatten)]
    dims: DimArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_seed)]
    matrix_seeds: Vec<u64>,
}

#[derive(Args, Debug, Serialize)]
struct BoundArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    s: Vec<usize>,
    #[arg(long)]
    m_eff: f64,
    #[arg(long)]
    n_ambient: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Demo {
    Planted,
}

#[derive(Args, Debug, Serialize)]
struct OmpArgs {
    #[arg(long, value_enum, default_value = "planted")]
    demo: Demo,
    #[arg(long, default_value_t = 3)]
    s: usize,
    #[arg(long, default_value_t = 512)]
    m: usize,
    #[arg(long, default_value_t = 256)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    a: usize,
    #[arg(long, default_value_t = 8)]
    b: usize,
    #[arg(long)]
    ortho: bool,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Smallest planted coefficient magnitude.
    #[arg(long, default_value_t = 0.5)]
    min_abs: f64,
}

#[derive(Args, Debug, Serialize)]
struct BudgetArgs {
    /// Manifest path or bundled name (llama32-1b, llama31-8b, qwen2-7b).
    #[arg(long)]
    manifest: String,
    #[arg(long)]
    method: MethodKind,
    #[arg(long)]
    r: Option<u64>,
    #[arg(long)]
    a: Option<u64>,
    #[arg(long)]
    b: Option<u64>,
    #[arg(long, default_value_t = cosa::budget::DEFAULT_BYTES_PER_PARAM)]
    bytes: u64,
    #[arg(long, default_value_t = cosa::budget::DEFAULT_OPT_MULTIPLIER)]
    opt_mult: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum StudentKind {
    Cosa,
    Lora,
}

#[derive(Args, Debug, Serialize)]
struct TaskArgs {
    #[arg(long, default_value = "inspan")]
    task: ToyTaskKind,
    #[arg(long, value_enum, default_value = "cosa")]
    method: StudentKind,
    /// LoRA rank.
    #[arg(long, default_value_t = 4)]
    r: usize,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 48)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    a: usize,
    #[arg(long, default_value_t = 8)]
    b: usize,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value = "adam")]
    optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long)]
    ortho: bool,
}

impl TaskArgs {
    fn spec(&self, data_seed: u64) -> ToyTaskSpec {
        let mut optimizer = match self.optimizer {
            OptimizerKind::Sgd => OptimizerConfig::sgd(self.lr),
            OptimizerKind::Adam => OptimizerConfig::adam(self.lr),
            OptimizerKind::Adamw => OptimizerConfig::adamw(self.lr, self.weight_decay),
        };
        optimizer.weight_decay = self.weight_decay;
        ToyTaskSpec {
            kind: self.task,
            method: match self.method {
                StudentKind::Cosa => ToyMethod::Cosa,
                StudentKind::Lora => ToyMethod::Lora { rank: self.r },
            },
            m: self.m,
            n: self.n,
            a: self.a,
            b: self.b,
            teacher_core: None,
            data_seed,
            batch: self.batch,
            steps: self.steps,
            optimizer,
            alpha_scale: self.alpha,
            orthonormalize: self.ortho,
            eval_batch: 64,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    task: TaskArgs,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    a_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    b_list: Vec<usize>,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Exit with failure when any relative error exceeds this.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    adapter: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SPARSITY_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_ENERGY)]
    energy: f64,
}

#[derive(Args, Debug, Serialize)]
struct ExportArgs {
    /// Destination adapter file.
    #[arg(long)]
    adapter: PathBuf,
    #[arg(long, default_value_t = 64)]
    m: usize,
    #[arg(long, default_value_t = 48)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    a: usize,
    #[arg(long, default_value_t = 8)]
    b: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Args, Debug, Serialize)]
struct ImportArgs {
    #[arg(long)]
    adapter: PathBuf,
    /// Re-save the loaded adapter here.
    #[arg(long)]
    save: Option<PathBuf>,
}

/// What a subcommand produced: report rows, an optional summary object, human
/// lines for the terminal, and whether the run met its own success criterion.
struct Outcome {
    rows: Vec<Value>,
    summary: Option<Value>,
    lines: Vec<String>,
    ok: bool,
}

impl Outcome {
    fn new(rows: Vec<Value>, lines: Vec<String>) -> Self {
        Outcome {
            rows,
            summary: None,
            lines,
            ok: true,
        }
    }
}

fn usage(msg: impl Into<String>) -> CosaError {
    CosaError::Argument(msg.into())
}

fn preset_or_dims(preset: Option<Preset>, dims: &DimArgs, seeds: &[u64], global_seed: u64) -> cosa::Result<RipStudyConfig> {
    let mut cfg = match preset {
        Some(Preset::Reference) => {
            if dims.m.is_some() || dims.n.is_some() || dims.a.is_some() || dims.b.is_some() {
                return Err(usage("--preset cannot be combined with explicit dims"));
            }
            RipStudyConfig::reference_preset()
        }
        None => {
            let (Some(m), Some(n), Some(a), Some(b)) = (dims.m, dims.n, dims.a, dims.b) else {
                return Err(usage("either --preset or all of --m --n --a --b are required"));
            };
            RipStudyConfig {
                m,
                n,
                configs: vec![(a, b)],
                sparsities: vec![],
                num_samples: 1000,
                matrix_seeds: vec![global_seed],
                orthonormalize: dims.ortho,
                bound: BoundSettings::default(),
            }
        }
    };
    if !seeds.is_empty() {
        cfg.matrix_seeds = seeds.to_vec();
    }
    if preset.is_some() && dims.ortho {
        cfg.orthonormalize = true;
    }
    Ok(cfg)
}

fn cmd_rip(args: &RipArgs, seed: u64) -> cosa::Result<Outcome> {
    let mut cfg = preset_or_dims(args.preset, &args.dims, &args.matrix_seeds, seed)?;
    if args.preset.is_none() || args.s != [5, 10, 20] {
        cfg.sparsities = args.s.clone();
    }
    if args.preset.is_none() || args.samples != 1000 {
        cfg.num_samples = args.samples;
    }
    cfg.bound = BoundSettings {
        c: args.bound.c,
        m_eff: args.bound.m_eff,
        n_ambient: args.bound.n_ambient,
    };
    let report = run_rip_study(&cfg)?;
    let lines = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "(a,b)=({},{}) s={:<3} delta={:.3} +/- {:.3}  mu={:.3}  bound={:.4}",
                r.config.a, r.config.b, r.s, r.delta_mean, r.delta_std, r.coherence, r.bound
            )
        })
        .collect();
    Ok(Outcome::new(to_rows(&report.rows)?, lines))
}

#[derive(Serialize)]
struct CoherenceRow {
    m: usize,
    n: usize,
    a: usize,
    b: usize,
    coherence_mean: f64,
    coherence_std: f64,
    per_seed: Vec<f64>,
}

fn cmd_coherence(args: &CoherenceArgs, seed: u64) -> cosa::Result<Outcome> {
    let cfg = preset_or_dims(args.preset, &args.dims, &args.matrix_seeds, seed)?;
    let mut rows = Vec::new();
    for &(a, b) in &cfg.configs {
        let per_seed = cfg
            .matrix_seeds
            .iter()
            .map(|&s| {
                let pair = ProjectionPair::new(s, cfg.m, cfg.n, a, b, cfg.orthonormalize)?;
                DictionaryView::new(&pair).coherence()
            })
            .collect::<cosa::Result<Vec<f64>>>()?;
        let (coherence_mean, coherence_std) = mean_std(&per_seed);
        rows.push(CoherenceRow {
            m: cfg.m,
            n: cfg.n,
            a,
            b,
            coherence_mean,
            coherence_std,
            per_seed,
        });
    }
    let lines = rows
        .iter()
        .map(|r| format!("(a,b)=({},{}) mu={:.4} +/- {:.4}", r.a, r.b, r.coherence_mean, r.coherence_std))
        .collect();
    Ok(Outcome::new(to_rows(&rows)?, lines))
}

fn cmd_bound(args: &BoundArgs) -> cosa::Result<Outcome> {
    let theory = RipTheoryConfig::new(args.c, args.m_eff, args.n_ambient)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for &s in &args.s {
        let bound = theoretical_bound(&theory, s)?;
        lines.push(format!("s={s} bound={bound:.4}"));
        rows.push(json!({"s": s, "c": args.c, "m_eff": args.m_eff, "n_ambient": args.n_ambient, "bound": bound}));
    }
    Ok(Outcome::new(rows, lines))
}

fn cmd_omp(args: &OmpArgs, seed: u64) -> cosa::Result<Outcome> {
    let Demo::Planted = args.demo;
    let pair = ProjectionPair::new(seed, args.m, args.n, args.a, args.b, args.ortho)?;
    let view = DictionaryView::new(&pair);
    let trials = omp_planted_trials(&view, args.s, args.trials, args.min_abs, derive_seed(seed, 2))?;
    let hits = trials.iter().filter(|t| t.exact_support).count();
    let worst = trials
        .iter()
        .filter_map(|t| t.coefficient_error)
        .fold(0.0, f64::max);
    let mut out = Outcome::new(
        to_rows(&trials)?,
        vec![format!(
            "recovered {hits}/{} planted supports (s={}), max coefficient error {worst:.3e}",
            args.trials, args.s
        )],
    );
    out.summary = Some(json!({"trials": args.trials, "exact_support": hits, "max_coefficient_error": worst}));
    Ok(out)
}

fn cmd_budget(args: &BudgetArgs) -> cosa::Result<Outcome> {
    let manifest = ModelManifest::load(&args.manifest)?;
    let spec = MethodSpec {
        method: args.method,
        rank: args.r,
        a: args.a,
        b: args.b,
    };
    let memory = MemoryModel {
        bytes_per_param: args.bytes,
        opt_multiplier: args.opt_mult,
    };
    let report = model_budget(&spec, &manifest, memory)?;
    let lines = vec![format!(
        "{} {}: {} trainable params ({}), memory {} bytes",
        report.model_name,
        report.method.method,
        report.total_params,
        format_millions(report.total_params),
        report.memory_bytes
    )];
    let mut out = Outcome::new(to_rows(&report.layers)?, lines);
    out.summary = Some(json!({
        "model_name": report.model_name,
        "method": report.method,
        "total_params": report.total_params,
        "optimizer_state_params": report.optimizer_state_params,
        "storage_bytes": report.storage_bytes,
        "memory": report.memory,
        "memory_bytes": report.memory_bytes,
    }));
    Ok(out)
}

fn cmd_train(args: &TrainArgs, seed: u64) -> cosa::Result<Outcome> {
    let spec = args.task.spec(seed);
    let (trace, _) = run_toy_with_layer(&spec)?;
    let rows = trace
        .losses
        .iter()
        .enumerate()
        .map(|(step, loss)| json!({"step": step, "loss": loss}))
        .collect();
    let mut line = format!(
        "{:?} ({},{},{},{}) steps={} eval loss {:.3e} -> {:.3e}, update rel error {:.3e}",
        spec.kind, spec.m, spec.n, spec.a, spec.b, spec.steps, trace.initial_loss, trace.final_loss, trace.delta_rel_error
    );
    if let Some(e) = trace.core_rel_error {
        line.push_str(&format!(", core rel error {e:.3e}"));
    }
    let mut out = Outcome::new(rows, vec![line]);
    out.summary = Some(json!({
        "initial_loss": trace.initial_loss,
        "final_loss": trace.final_loss,
        "core_rel_error": trace.core_rel_error,
        "delta_rel_error": trace.delta_rel_error,
    }));
    Ok(out)
}

fn cmd_sweep(args: &SweepArgs, seed: u64) -> cosa::Result<Outcome> {
    if args.task.method != StudentKind::Cosa {
        return Err(usage("sweep trains cosa students only"));
    }
    let rows = sweep_ab(&args.task.spec(seed), &args.a_list, &args.b_list)?;
    let lines = rows
        .iter()
        .map(|r| format!("(a,b)=({},{}) params={} final loss {:.3e}", r.a, r.b, r.params, r.final_loss))
        .collect();
    Ok(Outcome::new(to_rows(&rows)?, lines))
}

#[derive(Serialize)]
struct GradRow {
    trial: usize,
    method: &'static str,
    m: usize,
    n: usize,
    a: usize,
    b: usize,
    batch: usize,
    max_rel_error: f64,
}

fn cmd_gradcheck(args: &GradcheckArgs, seed: u64) -> cosa::Result<Outcome> {
    let mut rng = RngStream::new(seed);
    let mut rows = Vec::new();
    for t in 0..args.trials {
        let a = 1 + rng.next_below(8) as usize;
        let b = 1 + rng.next_below(8) as usize;
        let m = a + rng.next_below(4) as usize;
        let n = b + rng.next_below(4) as usize;
        let batch = [1, 3][rng.next_below(2) as usize];
        let s = derive_seed(seed, t as u64);
        let w0 = gaussian_matrix(derive_seed(s, 0), m, n);
        let x = gaussian_matrix(derive_seed(s, 1), n, batch);
        let target = gaussian_matrix(derive_seed(s, 2), m, batch);

        let mut cosa = CosaAdapter::new(s, m, n, a, b, 1.0)?;
        cosa.set_core(gaussian_matrix(derive_seed(s, 3), a, b))?;
        let layer = AdaptedLinear::new(w0.clone(), Adapter::Cosa(cosa))?;
        let e_cosa = grad_check(&layer, &x, &target, args.step)?;

        let r = a.min(b);
        let mut lora = LoraAdapter::new(s, m, n, r, 1.0)?;
        lora.set_factors(gaussian_matrix(derive_seed(s, 4), r, n), gaussian_matrix(derive_seed(s, 5), m, r))?;
        let layer = AdaptedLinear::new(w0, Adapter::Lora(lora))?;
        let e_lora = grad_check(&layer, &x, &target, args.step)?;

        for (method, err) in [("cosa", e_cosa), ("lora", e_lora)] {
            rows.push(GradRow {
                trial: t,
                method,
                m,
                n,
                a,
                b,
                batch,
                max_rel_error: err,
            });
        }
    }
    let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let mut out = Outcome::new(
        to_rows(&rows)?,
        vec![format!("max relative error {worst:.3e} over {} fixtures (tol {:.0e})", args.trials, args.tol)],
    );
    out.ok = worst <= args.tol;
    out.summary = Some(json!({"max_rel_error": worst, "tol": args.tol}));
    Ok(out)
}

fn cmd_analyze(args: &AnalyzeArgs) -> cosa::Result<Outcome> {
    let adapter = load_adapter(&args.adapter)?;
    let stats = analyze_core(adapter.core(), args.threshold, args.energy)?;
    let lines = vec![format!(
        "sparsity {:.4} effective rank {:?} frobenius {:.4e}",
        stats.sparsity_fraction, stats.effective_rank, stats.frobenius_norm
    )];
    Ok(Outcome::new(vec![serde_json::to_value(&stats)?], lines))
}

fn adapter_row(adapter: &CosaAdapter, path: &std::path::Path) -> Value {
    let (m, n, a, b) = adapter.dims();
    json!({
        "path": path.display().to_string(),
        "m": m, "n": n, "a": a, "b": b,
        "seed": adapter.seed(),
        "alpha_scale": adapter.alpha_scale(),
        "bytes": adapter_file_len(a, b),
    })
}

fn cmd_export(args: &ExportArgs, seed: u64) -> cosa::Result<Outcome> {
    let spec = ToyTaskSpec {
        m: args.m,
        n: args.n,
        a: args.a,
        b: args.b,
        data_seed: seed,
        steps: args.steps,
        optimizer: OptimizerConfig::adam(args.lr),
        alpha_scale: args.alpha,
        ..ToyTaskSpec::default_inspan()
    };
    let (trace, layer) = run_toy_with_layer(&spec)?;
    let Adapter::Cosa(adapter) = layer.adapter() else {
        unreachable!("export trains cosa students")
    };
    save_adapter(adapter, &args.adapter)?;
    let mut row = adapter_row(adapter, &args.adapter);
    row["core_rel_error"] = json!(trace.core_rel_error);
    let line = format!("wrote {} ({} bytes)", args.adapter.display(), adapter_file_len(args.a, args.b));
    Ok(Outcome::new(vec![row], vec![line]))
}

fn cmd_import(args: &ImportArgs) -> cosa::Result<Outcome> {
    let adapter = load_adapter(&args.adapter)?;
    let mut lines = vec![format!("loaded {}", args.adapter.display())];
    if let Some(dest) = &args.save {
        fs::write(dest, encode_adapter(&adapter)?)?;
        lines.push(format!("wrote {}", dest.display()));
    }
    Ok(Outcome::new(vec![adapter_row(&adapter, &args.adapter)], lines))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Rip(_) => "rip",
        Command::Coherence(_) => "coherence",
        Command::Bound(_) => "bound",
        Command::Omp(_) => "omp",
        Command::Budget(_) => "budget",
        Command::Train(_) => "train",
        Command::Sweep(_) => "sweep",
        Command::Gradcheck(_) => "gradcheck",
        Command::Analyze(_) => "analyze",
        Command::Export(_) => "export",
        Command::Import(_) => "import",
    }
}

fn flags(c: &Command) -> serde_json::Result<Value> {
    match c {
        Command::Rip(a) => serde_json::to_value(a),
        Command::Coherence(a) => serde_json::to_value(a),
        Command::Bound(a) => serde_json::to_value(a),
        Command::Omp(a) => serde_json::to_value(a),
        Command::Budget(a) => serde_json::to_value(a),
        Command::Train(a) => serde_json::to_value(a),
        Command::Sweep(a) => serde_json::to_value(a),
        Command::Gradcheck(a) => serde_json::to_value(a),
        Command::Analyze(a) => serde_json::to_value(a),
        Command::Export(a) => serde_json::to_value(a),
        Command::Import(a) => serde_json::to_value(a),
    }
}

fn dispatch(cli: &Cli) -> cosa::Result<Outcome> {
    let seed = cli.seed;
    match &cli.command {
        Command::Rip(a) => cmd_rip(a, seed),
        Command::Coherence(a) => cmd_coherence(a, seed),
        Command::Bound(a) => cmd_bound(a),
        Command::Omp(a) => cmd_omp(a, seed),
        Command::Budget(a) => cmd_budget(a),
        Command::Train(a) => cmd_train(a, seed),
        Command::Sweep(a) => cmd_sweep(a, seed),
        Command::Gradcheck(a) => cmd_gradcheck(a, seed),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Export(a) => cmd_export(a, seed),
        Command::Import(a) => cmd_import(a),
    }
}

fn run(cli: &Cli) -> cosa::Result<bool> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CosaError::Numerical(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| dispatch(cli))?;
    let report = Report {
        provenance: Provenance {
            tool: "cosa",
            version: env!("CARGO_PKG_VERSION"),
            command: command_name(&cli.command),
            seed: cli.seed,
            threads: cli.threads,
            flags: flags(&cli.command)?,
        },
        summary: outcome.summary,
        rows: outcome.rows,
    };
    let text = report.render(cli.format)?;
    match &cli.out {
        Some(path) => {
            fs::write(path, text)?;
            for line in &outcome.lines {
                println!("{line}");
            }
        }
        None => {
            print!("{text}");
            for line in &outcome.lines {
                eprintln!("{line}");
            }
        }
    }
    Ok(outcome.ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ CosaError::Argument(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
