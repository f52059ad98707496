//! The `strpca` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on argument errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::batch::{solve_batch, BatchConfig, Decomposition, Graphs};
use crate::error::{Error, Result};
use crate::graph::{laplacian, spatial_graph, temporal_laplacian, temporal_median, GraphConfig, Sigma};
use crate::ingest::{load_sequence, read_masks, synth, write_frames, write_masks, Sequence, SequenceSpec, SynthSpec};
use crate::online::{solve_online, BasisUpdate, ModeReport, OnlineConfig};
use crate::segmentation::{binarize, score, Binarize, EvalReport, MaskSequence};
use crate::tensor::{write_tensor, Mode, Tensor3};

/// γ grid used by `--sweep-gamma`.
pub const GAMMA_GRID: [f64; 7] = [0.1, 0.3, 0.6, 0.9, 1.2, 1.5, 1.8];

#[derive(Debug, Parser)]
#[command(name = "strpca", version, about = "Graph regularized tensor RPCA background subtraction")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Cap on worker threads (0 uses every core).
    #[arg(long, global = true, env = "STRPCA_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Batch decomposition of a whole sequence.
    Decompose(DecomposeArgs),
    /// Online decomposition, one column at a time.
    Stream(StreamArgs),
    /// Score a directory of masks against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Write the temporal and spatial Laplacians as Matrix Market files.
    GraphDump(GraphDumpArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Frame directory, or a sequence directory with `input/` and
    /// `groundtruth/`.
    pub input: PathBuf,
    /// Ground-truth directory (overrides auto-detection).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Region-of-interest image; only its white pixels are scored.
    #[arg(long)]
    pub roi: Option<PathBuf>,
    /// Frame filename pattern, e.g. `in*.jpg`.
    #[arg(long)]
    pub glob: Option<String>,
    /// Resample frames to `WxH` by area averaging.
    #[arg(long, value_parser = parse_resize)]
    pub resize: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Neighbors per vertex.
    #[arg(long, env = "STRPCA_K")]
    pub k: Option<usize>,
    /// Patch side for spatial features.
    #[arg(long, env = "STRPCA_PATCH")]
    pub patch: Option<usize>,
    /// Fixed kernel width (default: mean kNN distance).
    #[arg(long, env = "STRPCA_SIGMA")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, short, env = "STRPCA_OUT", default_value = "strpca-out")]
    pub out: PathBuf,
    /// TOML file with `[batch]`, `[online]` and `[graph]` tables.
    #[arg(long, env = "STRPCA_CONFIG")]
    pub config: Option<PathBuf>,
    /// `otsu` or a fraction of max |F|.
    #[arg(long, value_parser = parse_threshold, default_value = "otsu")]
    pub threshold: Binarize,
    /// Score the masks against the ground truth.
    #[arg(long)]
    pub eval: bool,
    /// Write B and F as binary tensors.
    #[arg(long)]
    pub dump_tensor: bool,
    #[arg(long, env = "STRPCA_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, env = "STRPCA_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "STRPCA_GAMMA1")]
    pub gamma1: Option<f64>,
    #[arg(long, env = "STRPCA_GAMMA2")]
    pub gamma2: Option<f64>,
    #[arg(long, env = "STRPCA_MU0")]
    pub mu0: Option<f64>,
    #[arg(long, env = "STRPCA_MU_MAX")]
    pub mu_max: Option<f64>,
    #[arg(long, env = "STRPCA_RHO")]
    pub rho: Option<f64>,
    #[arg(long, env = "STRPCA_ZETA")]
    pub zeta: Option<f64>,
    #[arg(long, env = "STRPCA_MAX_ITERS")]
    pub max_iters: Option<usize>,
    /// One spatial graph from the per-pixel median frame for all frames.
    #[arg(long)]
    pub shared_spatial_graph: bool,
    /// Write per-iteration residuals to `trace.csv`.
    #[arg(long)]
    pub trace: bool,
    /// Solve for every (γ₁, γ₂) on the ablation grid and write `sweep.csv`.
    #[arg(long)]
    pub sweep_gamma: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisUpdateArg {
    ClosedForm,
    Sgd,
}

#[derive(Debug, Clone, Args)]
pub struct StreamArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Basis rank.
    #[arg(long, env = "STRPCA_RANK")]
    pub rank: Option<usize>,
    #[arg(long, env = "STRPCA_ETA")]
    pub eta: Option<f64>,
    #[arg(long, env = "STRPCA_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "STRPCA_LAMBDA2")]
    pub lambda2: Option<f64>,
    #[arg(long, env = "STRPCA_GAMMA1")]
    pub gamma1: Option<f64>,
    #[arg(long, env = "STRPCA_GAMMA2")]
    pub gamma2: Option<f64>,
    #[arg(long, env = "STRPCA_OMEGA")]
    pub omega: Option<f64>,
    /// Temporal window length, current column included.
    #[arg(long, env = "STRPCA_WINDOW")]
    pub window: Option<usize>,
    #[arg(long, value_enum)]
    pub basis_update: Option<BasisUpdateArg>,
    #[arg(long, env = "STRPCA_MAX_INNER")]
    pub max_inner: Option<usize>,
    /// Weight the initial basis by the graph Laplacians.
    #[arg(long)]
    pub graph_init: bool,
    /// Unfolding modes to stream, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',', env = "STRPCA_MODES")]
    pub modes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Directory of predicted masks.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth masks.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub roi: Option<PathBuf>,
    #[arg(long, short, default_value = "strpca-eval")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// static-impulses, moving-square, dynamic-noise or illumination.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub preset: Option<String>,
    /// TOML or JSON synthetic sequence description.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, env = "STRPCA_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphKind {
    Temporal,
    Spatial,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct GraphDumpArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: GraphKind,
    /// Frame whose spatial graph is dumped.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Dump the shared spatial graph of the median frame instead.
    #[arg(long)]
    pub shared_spatial_graph: bool,
    #[arg(long, short, default_value = "strpca-graphs")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub batch: BatchConfig,
    pub online: OnlineConfig,
    pub graph: GraphConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::arg(format!("{}: {e}", path.display())))
    }
}

/// Effective settings of a run, written to `config.resolved.json`.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedConfig {
    pub command: &'static str,
    pub input: SequenceSpec,
    pub dims: (usize, usize, usize),
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub online: Option<OnlineConfig>,
    pub graph: GraphConfig,
    pub threshold: Binarize,
    pub shared_spatial_graph: bool,
    pub seed: u64,
}

#[derive(Serialize)]
struct BatchSummary<'a> {
    iters: usize,
    converged: bool,
    final_residuals: &'a crate::batch::Residuals,
    foreground_pixels: usize,
}

#[derive(Serialize)]
struct StreamSummary<'a> {
    modes: &'a [ModeReport],
    foreground_pixels: usize,
}

fn parse_resize(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("resize dimensions must be >= 1".into());
    }
    Ok((w, h))
}

fn parse_threshold(s: &str) -> std::result::Result<Binarize, String> {
    if s.eq_ignore_ascii_case("otsu") {
        return Ok(Binarize::Otsu);
    }
    let t: f64 = s
        .parse()
        .map_err(|_| format!("expected `otsu` or a number, got {s:?}"))?;
    if !(0.0..=1.0).contains(&t) {
        return Err(format!("fixed threshold must lie in [0, 1], got {t}"));
    }
    Ok(Binarize::Fixed(t))
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Argument(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Decompose(a) => decompose(a),
        Command::Stream(a) => stream(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth_cmd(a),
        Command::GraphDump(a) => graph_dump(a),
    }
}

fn sequence_spec(a: &InputArgs) -> Result<SequenceSpec> {
    if !a.input.is_dir() {
        return Err(Error::arg(format!("{} is not a directory", a.input.display())));
    }
    let mut spec = SequenceSpec::detect(&a.input);
    if a.gt.is_some() {
        spec.gt_dir = a.gt.clone();
    }
    if a.roi.is_some() {
        spec.roi_path = a.roi.clone();
    }
    spec.resize = a.resize;
    spec.frame_glob = a.glob.clone();
    Ok(spec)
}

fn graph_config(base: GraphConfig, a: &GraphArgs) -> Result<GraphConfig> {
    let mut g = base;
    if let Some(k) = a.k {
        g.k = k;
    }
    if let Some(p) = a.patch {
        g.patch = p;
    }
    if let Some(s) = a.sigma {
        g.sigma = Sigma::Fixed(s);
    }
    g.validate()?;
    Ok(g)
}

fn batch_config(base: BatchConfig, a: &DecomposeArgs) -> Result<BatchConfig> {
    let mut c = base;
    if a.lambda.is_some() {
        c.lambda = a.lambda;
    }
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut c.gamma1, a.gamma1);
    set(&mut c.gamma2, a.gamma2);
    set(&mut c.mu0, a.mu0);
    set(&mut c.mu_max, a.mu_max);
    set(&mut c.rho, a.rho);
    set(&mut c.zeta, a.zeta);
    if let Some(m) = a.max_iters {
        c.max_iters = m;
    }
    c.validate()?;
    Ok(c)
}

fn online_config(base: OnlineConfig, a: &StreamArgs) -> Result<OnlineConfig> {
    let mut c = base;
    if a.lambda.is_some() {
        c.lambda = a.lambda;
    }
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut c.eta, a.eta);
    set(&mut c.lambda2, a.lambda2);
    set(&mut c.gamma1, a.gamma1);
    set(&mut c.gamma2, a.gamma2);
    set(&mut c.omega, a.omega);
    if let Some(r) = a.rank {
        c.r = r;
    }
    if let Some(w) = a.window {
        c.window = w;
    }
    if let Some(m) = a.max_inner {
        c.max_inner = m;
    }
    if let Some(b) = a.basis_update {
        c.basis_update = match b {
            BasisUpdateArg::ClosedForm => BasisUpdate::ClosedForm,
            BasisUpdateArg::Sgd => BasisUpdate::Sgd,
        };
    }
    if a.graph_init {
        c.graph_init = true;
    }
    if let Some(ms) = &a.modes {
        c.modes = ms.iter().map(|&m| Mode::from_index(m)).collect::<Result<_>>()?;
    }
    c.seed = a.output.seed;
    c.validate()?;
    Ok(c)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(format!("serialization failed: {e}")))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    let mut json = report.to_json();
    json.push('\n');
    write_file(&dir.join("metrics.json"), json.as_bytes())?;
    let mut csv = Vec::new();
    report
        .write_csv(&mut csv)
        .map_err(|e| Error::io(dir.join("metrics.csv"), e))?;
    write_file(&dir.join("metrics.csv"), &csv)
}

fn dump_tensor(path: &Path, t: &Tensor3) -> Result<()> {
    let mut buf = Vec::new();
    write_tensor(&mut buf, t).map_err(|e| Error::io(path, e))?;
    write_file(path, &buf)
}

fn ground_truth<'a>(seq: &'a Sequence, wanted: bool) -> Result<Option<&'a MaskSequence>> {
    if !wanted {
        return Ok(None);
    }
    match &seq.gt {
        Some(gt) => Ok(Some(gt)),
        None => Err(Error::arg("--eval needs ground truth (a groundtruth/ directory or --gt)")),
    }
}

/// Masks, optional tensors and optional metrics shared by `decompose` and
/// `stream`. Returns the number of foreground pixels.
fn write_outputs(
    out: &Path,
    seq: &Sequence,
    background: &Tensor3,
    foreground: &Tensor3,
    opts: &OutputArgs,
) -> Result<usize> {
    let masks = binarize(foreground, opts.threshold)?;
    write_masks(&out.join("masks"), &masks, &seq.names)?;
    if opts.dump_tensor {
        dump_tensor(&out.join("background.tensor"), background)?;
        dump_tensor(&out.join("foreground.tensor"), foreground)?;
    }
    if let Some(gt) = ground_truth(seq, opts.eval)? {
        let report = score(&masks, gt, seq.roi.as_deref())?;
        println!(
            "precision {:.4} recall {:.4} f-measure {:.4}",
            report.precision, report.recall, report.f_measure
        );
        write_report(out, &report)?;
    }
    Ok(masks.count_ones())
}

fn write_trace(path: &Path, d: &Decomposition) -> Result<()> {
    let mut s = String::from("iter,primal,delta_b,delta_f,spatial,temporal\n");
    for (i, r) in d.trace.iter().enumerate() {
        s.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e}\n",
            i + 1,
            r.primal,
            r.delta_b,
            r.delta_f,
            r.spatial,
            r.temporal
        ));
    }
    write_file(path, s.as_bytes())
}

fn decompose(a: &DecomposeArgs) -> Result<()> {
    let file = FileConfig::load(a.output.config.as_deref())?;
    let cfg = batch_config(file.batch, a)?;
    let gcfg = graph_config(file.graph, &a.graph)?;
    let spec = sequence_spec(&a.input)?;
    if a.sweep_gamma && !a.output.eval {
        return Err(Error::arg("--sweep-gamma needs --eval"));
    }
    let seq = load_sequence(&spec)?;
    ground_truth(&seq, a.output.eval)?;
    let dims = seq.tensor.dims();
    let out = &a.output.out;
    create_dir(out)?;
    write_json(
        &out.join("config.resolved.json"),
        &ResolvedConfig {
            command: "decompose",
            input: spec,
            dims,
            lambda: cfg.resolved_lambda(dims),
            batch: Some(cfg.clone()),
            online: None,
            graph: gcfg.clone(),
            threshold: a.output.threshold,
            shared_spatial_graph: a.shared_spatial_graph,
            seed: a.output.seed,
        },
    )?;

    if a.sweep_gamma {
        return sweep(&seq, &cfg, &gcfg, a);
    }

    let graphs = Graphs::build(&seq.tensor, &cfg, &gcfg, a.shared_spatial_graph)?;
    let d = solve_batch(&seq.tensor, &cfg, &graphs)?;
    info!("batch solve: {} iterations, converged {}", d.iters, d.converged);
    if a.trace {
        write_trace(&out.join("trace.csv"), &d)?;
    }
    let fg = write_outputs(out, &seq, &d.background, &d.foreground, &a.output)?;
    write_json(
        &out.join("summary.json"),
        &BatchSummary {
            iters: d.iters,
            converged: d.converged,
            final_residuals: &d.final_residuals,
            foreground_pixels: fg,
        },
    )
}

fn sweep(seq: &Sequence, cfg: &BatchConfig, gcfg: &GraphConfig, a: &DecomposeArgs) -> Result<()> {
    let gt = ground_truth(seq, true)?.expect("ground truth checked");
    let all_on = BatchConfig {
        gamma1: 1.0,
        gamma2: 1.0,
        ..cfg.clone()
    };
    let full = Graphs::build(&seq.tensor, &all_on, gcfg, a.shared_spatial_graph)?;
    let mut csv = String::from("gamma1,gamma2,iters,converged,precision,recall,f_measure\n");
    for &g1 in &GAMMA_GRID {
        for &g2 in &GAMMA_GRID {
            let c = BatchConfig {
                gamma1: g1,
                gamma2: g2,
                ..cfg.clone()
            };
            let d = solve_batch(&seq.tensor, &c, &full)?;
            let r = score(&binarize(&d.foreground, a.output.threshold)?, gt, seq.roi.as_deref())?;
            info!("gamma1 {g1} gamma2 {g2}: f-measure {:.4}", r.f_measure);
            csv.push_str(&format!(
                "{g1},{g2},{},{},{},{},{}\n",
                d.iters, d.converged, r.precision, r.recall, r.f_measure
            ));
        }
    }
    write_file(&a.output.out.join("sweep.csv"), csv.as_bytes())
}

fn stream(a: &StreamArgs) -> Result<()> {
    let file = FileConfig::load(a.output.config.as_deref())?;
    let cfg = online_config(file.online, a)?;
    let gcfg = graph_config(file.graph, &a.graph)?;
    let spec = sequence_spec(&a.input)?;
    let seq = load_sequence(&spec)?;
    ground_truth(&seq, a.output.eval)?;
    let dims = seq.tensor.dims();
    let out = &a.output.out;
    create_dir(out)?;
    write_json(
        &out.join("config.resolved.json"),
        &ResolvedConfig {
            command: "stream",
            input: spec,
            dims,
            lambda: cfg.resolved_lambda(dims),
            batch: None,
            online: Some(cfg.clone()),
            graph: gcfg.clone(),
            threshold: a.output.threshold,
            shared_spatial_graph: false,
            seed: a.output.seed,
        },
    )?;
    let d = solve_online(&seq.tensor, &cfg, &gcfg)?;
    let fg = write_outputs(out, &seq, &d.background, &d.foreground, &a.output)?;
    write_json(
        &out.join("summary.json"),
        &StreamSummary {
            modes: &d.modes,
            foreground_pixels: fg,
        },
    )
}

fn eval(a: &EvalArgs) -> Result<()> {
    let pred = read_masks(&a.pred)?;
    let gt = read_masks(&a.gt)?;
    if pred.len() != gt.len() {
        return Err(Error::arg(format!(
            "{} holds {} masks, {} holds {}",
            a.pred.display(),
            pred.len(),
            a.gt.display(),
            gt.len()
        )));
    }
    let roi = match &a.roi {
        Some(p) => {
            let img = crate::ingest::read_gray(p)?;
            Some(img.iter().map(|&v| v >= 0.5).collect::<Vec<bool>>())
        }
        None => None,
    };
    let report = score(&pred, &gt, roi.as_deref())?;
    println!(
        "precision {:.4} recall {:.4} f-measure {:.4}",
        report.precision, report.recall, report.f_measure
    );
    create_dir(&a.out)?;
    write_report(&a.out, &report)
}

fn synth_cmd(a: &SynthArgs) -> Result<()> {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(name), _) => SynthSpec::preset(name, a.seed)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let parsed = if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).map_err(|e| Error::arg(format!("{}: {e}", path.display())))
            } else {
                toml::from_str(&text).map_err(|e| Error::arg(format!("{}: {e}", path.display())))
            };
            parsed?
        }
        (None, None) => return Err(Error::arg("synth needs --preset or --spec")),
    };
    if a.preset.is_none() && a.seed != 0 {
        spec.seed = a.seed;
    }
    let s = synth(&spec)?;
    create_dir(&a.out)?;
    write_frames(&a.out.join("input"), &s.tensor, "in")?;
    let (_, _, n) = s.tensor.dims();
    let gt_names: Vec<String> = (0..n).map(|k| format!("gt{k:04}")).collect();
    write_masks(&a.out.join("groundtruth"), &s.gt, &gt_names)?;
    if spec.impulse_fraction > 0.0 {
        write_masks(&a.out.join("impulses"), &s.impulses, &gt_names)?;
    }
    write_json(&a.out.join("synth.json"), &spec)
}

fn graph_dump(a: &GraphDumpArgs) -> Result<()> {
    let file = FileConfig::load(a.config.as_deref())?;
    let gcfg = graph_config(file.graph, &a.graph)?;
    let spec = sequence_spec(&a.input)?;
    let seq = load_sequence(&spec)?;
    let (_, _, n) = seq.tensor.dims();
    create_dir(&a.out)?;
    let mut summary = Vec::new();
    if matches!(a.kind, GraphKind::Temporal | GraphKind::Both) {
        let l = temporal_laplacian(&seq.tensor, &gcfg)?;
        write_mtx(&a.out.join("temporal.mtx"), &l)?;
        summary.push(("temporal".to_string(), l.n(), l.nnz()));
    }
    if matches!(a.kind, GraphKind::Spatial | GraphKind::Both) {
        let (slice, name) = if a.shared_spatial_graph {
            (temporal_median(&seq.tensor), "spatial_median".to_string())
        } else {
            if a.frame >= n {
                return Err(Error::arg(format!("frame {} out of range for {n} frames", a.frame)));
            }
            (seq.tensor.frontal_slice(a.frame), format!("spatial_{:04}", a.frame))
        };
        let l = laplacian(&spatial_graph(&slice, &gcfg)?);
        write_mtx(&a.out.join(format!("{name}.mtx")), &l)?;
        summary.push((name, l.n(), l.nnz()));
    }
    let mut out = std::io::stdout().lock();
    for (name, v, nnz) in &summary {
        let _ = writeln!(out, "{name}: {v} vertices, {nnz} nonzeros");
    }
    Ok(())
}

fn write_mtx(path: &Path, l: &crate::graph::SparseLaplacian) -> Result<()> {
    let mut buf = Vec::new();
    l.write_matrix_market(&mut buf).map_err(|e| Error::io(path, e))?;
    write_file(path, &buf)
}
