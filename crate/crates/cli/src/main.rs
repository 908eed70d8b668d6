use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use udfrecon::estimator::{train_per_shape_with, train_prior_with, write_history_csv, Estimator, EstimatorConfig, LossRecord, StageMode};
use udfrecon::experiment::{
    estimated_sign_dataset, gen_fixture, reconstruct, run_ablation_suite, sign_heldout_accuracy, sign_heldout_shapes, sign_training_shapes, write_ablation_csv, AblationSpec, FieldSource,
    RunSpec, SignMode,
};
use udfrecon::extract::{extract_mesh, SignSource};
use udfrecon::field::{evaluate_grid_with, near_surface_cubes, read_grid, slice, write_grid, write_slice_csv, write_slice_pgm, AnalyticShape, Bounds};
use udfrecon::geom::{chamfer_l1, load_obj_mesh, load_point_cloud, normal_consistency, normalize_to_unit_cube, sample_mesh_surface, write_obj, write_ply_binary, write_xyz, PointCloud};
use udfrecon::sign::{train_sign_net_with, Head, SignConfig, SignDataset, SignNet};

const ESTIMATOR_CKPT: &str = "estimator.ckpt";
const ESTIMATOR_CONFIG: &str = "config.txt";
const SIGN_CKPT: &str = "sign.ckpt";
const SIGN_CONFIG: &str = "sign.json";

#[derive(Parser)]
#[command(name = "udfrecon", version, about = "Unsigned distance fields from point clouds, and meshes from the fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an analytic shape into a point cloud with normals.
    Gen(GenArgs),
    /// Fit the estimator to one cloud, or learn a prior over several.
    Train(TrainArgs),
    /// Shorthand for `train --mode prior`.
    TrainPrior(TrainArgs),
    /// Train the local relative-sign classifier on analytic shapes.
    TrainSign(TrainSignArgs),
    /// Evaluate a trained estimator on a lattice.
    Grid(GridArgs),
    /// Assign cube signs and run marching cubes on a lattice.
    Extract(ExtractArgs),
    /// Score a mesh, or run and score the whole pipeline on an analytic fixture.
    Eval(EvalArgs),
    /// Repeat the pipeline over estimator variants and seeds.
    Ablate(AblateArgs),
    /// Write axis-aligned UDF slices as CSV and PGM.
    Slices(SlicesArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Pershape,
    Prior,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Default,
    Quick,
    Reference,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SignArg {
    Learned,
    Baseline,
    Oracle,
}

impl SignArg {
    fn mode(self) -> SignMode {
        match self {
            SignArg::Learned => SignMode::Learned,
            SignArg::Baseline => SignMode::Baseline,
            SignArg::Oracle => SignMode::Oracle,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AblationKind {
    Inter,
    Stage,
    K,
}

#[derive(Args, Clone)]
struct EstimatorOpts {
    /// `key = value` config file applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    no_inter_loss: bool,
    #[arg(long, value_parser = ["s1", "s1x2", "full"])]
    stage: Option<String>,
}

impl EstimatorOpts {
    fn build(&self, seed: Option<u64>) -> Result<EstimatorConfig> {
        let mut cfg = match self.preset {
            Preset::Default => EstimatorConfig::default(),
            Preset::Quick => EstimatorConfig::quick(),
            Preset::Reference => EstimatorConfig::reference(),
        };
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("{} line {}: expected key = value", p.display(), n + 1))?;
                cfg.set(k.trim(), v.trim())?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        if self.no_inter_loss {
            cfg.weights.w_inter = 0.0;
        }
        if let Some(s) = &self.stage {
            cfg.stage = s.parse::<StageMode>()?;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    /// Standard shape name: sphere, torus, box, ellipsoid, capsule, cylinder, plane, open-disk, half-sphere, wavy-sheet.
    #[arg(long, conflicts_with = "shape_json")]
    shape: Option<String>,
    /// Shape as JSON, e.g. `{"kind":"sphere","center":[0,0,0],"radius":0.5}`.
    #[arg(long)]
    shape_json: Option<String>,
    #[arg(long, default_value_t = 3000)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Map the samples into the unit cube.
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Input cloud (.xyz, .ply, .obj); repeat for prior mode.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "pershape")]
    mode: Mode,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the checkpoint, config and loss history.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    est: EstimatorOpts,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct TrainSignArgs {
    #[arg(long, value_enum, default_value = "l1")]
    sign_head: HeadArg,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Lattice resolution for harvesting cubes.
    #[arg(long, default_value_t = 65)]
    resolution: usize,
    #[arg(long, default_value_t = 3000)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also harvest cubes from per-shape fitted fields (slow).
    #[arg(long)]
    estimated_fields: bool,
    /// Write the harvested dataset manifest as CSV.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    L1,
    L2,
    L3,
}

impl HeadArg {
    fn head(self) -> Head {
        match self {
            HeadArg::L1 => Head::L1,
            HeadArg::L2 => Head::L2,
            HeadArg::L3 => Head::L3,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    grid: PathBuf,
    /// The cloud the grid was computed from; selects near-surface cubes.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "learned")]
    sign: SignArg,
    /// Directory written by `train-sign`.
    #[arg(long)]
    sign_model: Option<PathBuf>,
    /// Mesh output; `.ply` writes binary PLY, anything else OBJ.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Mesh to score against `--reference`.
    #[arg(long, requires = "reference", conflicts_with = "shape")]
    mesh: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Run the pipeline on this standard shape and score it analytically.
    #[arg(long)]
    shape: Option<String>,
    #[arg(long, default_value_t = 3000)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long, value_enum, default_value = "pershape")]
    mode: Mode,
    /// Prior directory written by `train --mode prior`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "learned")]
    sign: SignArg,
    #[arg(long)]
    sign_model: Option<PathBuf>,
    #[arg(long, default_value_t = 300_000)]
    samples: usize,
    /// Directory for the fixture, mesh, grid and reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    est: EstimatorOpts,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, value_enum)]
    kind: AblationKind,
    #[arg(long, value_delimiter = ',', default_value = "sphere,open-disk")]
    shapes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Stage-1 neighbourhood sizes for `--kind k`.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    points: usize,
    #[arg(long, default_value_t = 64)]
    resolution: usize,
    #[arg(long, value_enum, default_value = "baseline")]
    sign: SignArg,
    #[arg(long)]
    sign_model: Option<PathBuf>,
    #[arg(long, default_value_t = 300_000)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    est: EstimatorOpts,
}

#[derive(Args)]
struct SlicesArgs {
    #[arg(long)]
    grid: PathBuf,
    /// Lattice index of each slice; defaults to the middle.
    #[arg(long)]
    index: Option<usize>,
    /// Value mapped to white in the PGM images; defaults to the slice maximum.
    #[arg(long)]
    max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn shape_named(name: &str) -> Result<AnalyticShape> {
    Ok(AnalyticShape::standard(name)?)
}

fn load_unit_cloud(path: &Path) -> Result<PointCloud> {
    let pc = load_point_cloud(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(normalize_to_unit_cube(&pc)?.0)
}

fn load_estimator(dir: &Path) -> Result<Estimator> {
    let text = std::fs::read_to_string(dir.join(ESTIMATOR_CONFIG)).with_context(|| format!("reading {}", dir.join(ESTIMATOR_CONFIG).display()))?;
    let cfg = EstimatorConfig::parse(&text)?;
    Ok(Estimator::load(cfg, &dir.join(ESTIMATOR_CKPT))?)
}

fn load_sign_net(dir: Option<&Path>) -> Result<SignNet> {
    let dir = dir.ok_or_else(|| anyhow!(udfrecon::Error::Config("learned signs need --sign-model".into())))?;
    let cfg: SignConfig = serde_json::from_str(&std::fs::read_to_string(dir.join(SIGN_CONFIG))?)?;
    Ok(SignNet::load(cfg, &dir.join(SIGN_CKPT))?)
}

fn progress(quiet: bool, every: usize) -> impl FnMut(&LossRecord) {
    move |r: &LossRecord| {
        if !quiet && r.step % every == 0 {
            eprintln!("step {:>5}  lr {:.2e}  chamfer {:.5}  intra {:.5}  inter {:.5}  total {:.5}", r.step, r.lr, r.chamfer, r.intra, r.inter, r.total);
        }
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn gen(a: GenArgs) -> Result<()> {
    let shape = match (&a.shape, &a.shape_json) {
        (Some(n), _) => shape_named(n)?,
        (None, Some(j)) => {
            let s: AnalyticShape = serde_json::from_str(j)?;
            s.validate()?;
            s
        }
        (None, None) => bail!(udfrecon::Error::Config("gen needs --shape or --shape-json".into())),
    };
    let mut pc = gen_fixture(&shape, a.points, a.seed)?;
    if a.normalize {
        pc = normalize_to_unit_cube(&pc)?.0;
    }
    write_xyz(&a.out, &pc)?;
    print_json(&json!({ "shape": shape, "points": pc.len(), "out": a.out }));
    Ok(())
}

fn train(a: TrainArgs, mode: Mode) -> Result<()> {
    let cfg = a.est.build(a.seed)?;
    let clouds = a.inputs.iter().map(|p| load_unit_cloud(p)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&a.out)?;
    let t = Instant::now();
    let mut report = progress(a.quiet, 100);
    let out = match mode {
        Mode::Pershape => {
            if clouds.len() != 1 {
                bail!(udfrecon::Error::Config(format!("per-shape mode takes one --input, got {}", clouds.len())));
            }
            train_per_shape_with(&clouds[0], &cfg, &mut report)?
        }
        Mode::Prior => train_prior_with(&clouds, &cfg, &mut report)?,
    };
    let seconds = t.elapsed().as_secs_f64();
    out.estimator.save(&a.out.join(ESTIMATOR_CKPT))?;
    std::fs::write(a.out.join(ESTIMATOR_CONFIG), cfg.to_text())?;
    write_history_csv(&out.history, BufWriter::new(File::create(a.out.join("history.csv"))?))?;
    let last = out.history.last();
    print_json(&json!({
        "mode": if mode == Mode::Prior { "prior" } else { "pershape" },
        "shapes": clouds.len(),
        "steps": cfg.steps,
        "seconds": seconds,
        "final_loss": last.map(|r| r.total),
        "out": a.out,
    }));
    Ok(())
}

fn train_sign(a: TrainSignArgs) -> Result<()> {
    let mut cfg = SignConfig { head: a.sign_head.head(), seed: a.seed, ..SignConfig::default() };
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(b) = a.batch {
        cfg.batch = b;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    cfg.validate()?;
    let t = Instant::now();
    let mut ds = SignDataset::from_shapes(&sign_training_shapes(), a.resolution, a.points, a.seed)?;
    if a.estimated_fields {
        let est = EstimatorConfig { steps: 300, ..EstimatorConfig::quick() };
        ds.extend(estimated_sign_dataset(&sign_training_shapes(), a.resolution, a.points, &est, a.seed)?);
    }
    if let Some(m) = &a.manifest {
        ds.write_manifest(BufWriter::new(File::create(m)?))?;
    }
    let quiet = a.quiet;
    let out = train_sign_net_with(&ds, &cfg, &mut |step, loss| {
        if !quiet && step % 100 == 0 {
            eprintln!("step {step:>5}  loss {loss:.5}");
        }
    })?;
    let seconds = t.elapsed().as_secs_f64();
    std::fs::create_dir_all(&a.out)?;
    out.net.save(&a.out.join(SIGN_CKPT))?;
    std::fs::write(a.out.join(SIGN_CONFIG), serde_json::to_string_pretty(&cfg)?)?;
    let acc = sign_heldout_accuracy(&out.net, a.resolution, a.points, a.seed.wrapping_add(1000))?;
    let heldout: Vec<&str> = sign_heldout_shapes().iter().map(|s| s.name()).collect();
    print_json(&json!({
        "head": cfg.head.as_str(),
        "samples": ds.len(),
        "seconds": seconds,
        "heldout_shapes": heldout,
        "heldout_accuracy": acc,
        "out": a.out,
    }));
    Ok(())
}

fn grid(a: GridArgs) -> Result<()> {
    let est = load_estimator(&a.model)?;
    let pc = load_unit_cloud(&a.input)?;
    let t = Instant::now();
    let ctx = est.context(&pc)?;
    let enc = est.encode(&ctx)?;
    let g = evaluate_grid_with(&est, &ctx, &enc, a.resolution, Bounds::unit())?;
    let seconds = t.elapsed().as_secs_f64();
    write_grid(&g, &a.out)?;
    print_json(&json!({ "resolution": g.h, "vertices": g.len(), "seconds": seconds, "out": a.out }));
    Ok(())
}

fn extract(a: ExtractArgs) -> Result<()> {
    let g = read_grid(&a.grid)?;
    let pc = load_unit_cloud(&a.input)?;
    let anchors = near_surface_cubes(&g, &pc);
    let net;
    let source = match a.sign {
        SignArg::Learned => {
            net = load_sign_net(a.sign_model.as_deref())?;
            SignSource::Learned(&net)
        }
        SignArg::Baseline => SignSource::Baseline,
        SignArg::Oracle => bail!(udfrecon::Error::Config("oracle signs need an analytic shape; use `eval --shape`".into())),
    };
    let (mesh, report) = extract_mesh(&g, &anchors, source)?;
    if a.out.extension().and_then(|e| e.to_str()) == Some("ply") {
        write_ply_binary(&a.out, &mesh)?;
    } else {
        write_obj(&a.out, &mesh)?;
    }
    if let Some(r) = &a.report {
        std::fs::write(r, report.to_json())?;
    }
    println!("{}", report.to_json());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    if let Some(m) = &a.mesh {
        let mesh = load_obj_mesh(m)?;
        let reference = load_point_cloud(a.reference.as_ref().expect("clap requires reference"))?;
        let ms = sample_mesh_surface(&mesh, a.samples, a.seed)?;
        let cd1 = chamfer_l1(&ms, &reference)?;
        let nc = if reference.normals.is_some() { Some(normal_consistency(&ms, &reference)?) } else { None };
        print_json(&json!({
            "cd1": cd1,
            "nc": nc,
            "triangles": mesh.triangles.len(),
            "boundary_edges": mesh.boundary_edge_count(),
            "euler_characteristic": mesh.euler_characteristic(),
        }));
        return Ok(());
    }
    let name = a.shape.as_deref().ok_or_else(|| anyhow!(udfrecon::Error::Config("eval needs --mesh/--reference or --shape".into())))?;
    let shape = shape_named(name)?;
    let cfg = a.est.build(Some(a.seed))?;
    let prior = match a.mode {
        Mode::Prior => Some(load_estimator(a.model.as_deref().ok_or_else(|| anyhow!(udfrecon::Error::Config("prior mode needs --model".into())))?)?),
        Mode::Pershape => None,
    };
    let net = match a.sign {
        SignArg::Learned => Some(load_sign_net(a.sign_model.as_deref())?),
        _ => None,
    };
    let estimator = prior.as_ref().map_or(cfg.clone(), |p| p.config.clone());
    let spec = RunSpec { resolution: a.resolution, sign: a.sign.mode(), eval_samples: a.samples, out_dir: a.out.clone(), ..RunSpec::new(shape, a.points, a.seed, estimator) };
    let field = prior.as_ref().map_or(FieldSource::PerShape, FieldSource::Prior);
    let rec = reconstruct(&spec, field, net.as_ref())?;
    println!("{}", serde_json::to_string_pretty(&rec)?);
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let base = a.est.build(None)?;
    let shapes = a.shapes.iter().map(|n| shape_named(n)).collect::<Result<Vec<_>>>()?;
    let mut spec = match a.kind {
        AblationKind::Inter => AblationSpec::inter_loss(shapes, base),
        AblationKind::Stage => AblationSpec::stages(shapes, base),
        AblationKind::K => AblationSpec::neighbourhood(shapes, base, &a.ks),
    };
    spec.seeds = a.seeds;
    spec.n_points = a.points;
    spec.resolution = a.resolution;
    spec.eval_samples = a.samples;
    spec.sign = a.sign.mode();
    let net = match a.sign {
        SignArg::Learned => Some(load_sign_net(a.sign_model.as_deref())?),
        _ => None,
    };
    let rows = run_ablation_suite(&spec, net.as_ref(), &mut |r| eprintln!("{} {} seed {}: cd1 {:.5} upsample_cd1 {:.5}", r.fixture, r.variant, r.seed, r.cd1, r.upsample_cd1))?;
    write_ablation_csv(&rows, BufWriter::new(File::create(&a.out)?))?;
    print_json(&json!({ "rows": rows.len(), "out": a.out }));
    Ok(())
}

fn slices(a: SlicesArgs) -> Result<()> {
    let g = read_grid(&a.grid)?;
    let index = a.index.unwrap_or(g.h / 2);
    if index >= g.h {
        bail!(udfrecon::Error::Config(format!("slice index {index} outside 0..{}", g.h)));
    }
    std::fs::create_dir_all(&a.out)?;
    let mut files = Vec::new();
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        let rows = slice(&g, axis, index);
        let csv = a.out.join(format!("udf_{name}_{index}.csv"));
        write_slice_csv(&rows, BufWriter::new(File::create(&csv)?))?;
        let pgm = a.out.join(format!("udf_{name}_{index}.pgm"));
        write_slice_pgm(&rows, a.max, BufWriter::new(File::create(&pgm)?))?;
        files.push(csv);
        files.push(pgm);
    }
    print_json(&json!({ "index": index, "files": files }));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => {
            let mode = a.mode;
            train(a, mode)
        }
        Command::TrainPrior(a) => train(a, Mode::Prior),
        Command::TrainSign(a) => train_sign(a),
        Command::Grid(a) => grid(a),
        Command::Extract(a) => extract(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Slices(a) => slices(a),
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(e) = e.downcast_ref::<udfrecon::Error>() {
        return e.kind();
    }
    macro_rules! kinds {
        ($($t:ty),*) => {
            $(if let Some(e) = e.downcast_ref::<$t>() { return e.kind(); })*
        };
    }
    kinds!(udfrecon::geom::GeomError, udfrecon::autodiff::AutodiffError, udfrecon::estimator::EstimatorError, udfrecon::field::FieldError, udfrecon::sign::SignError, udfrecon::extract::ExtractError);
    if e.downcast_ref::<std::io::Error>().is_some() {
        return "Io";
    }
    if e.downcast_ref::<serde_json::Error>().is_some() {
        return "Json";
    }
    "Error"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "Usage", "message": e.to_string().trim() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": error_kind(&e), "message": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}
