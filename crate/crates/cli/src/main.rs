use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qcmorph::diffgeo::curvatures;
use qcmorph::mesh::{load_landmarks, load_manifest, load_mesh, validate_pair, write_obj, write_planar_obj};
use qcmorph::param::{rectangular_param, CornerRole, Quality};
use qcmorph::shape::{
    evaluate_params, extract_features, p_values, run_pipeline, write_artifacts, PipelineOptions, SearchOptions,
    ShapeIndexParams, DEFAULT_P_CUTS, DEFAULT_TREES, RHO_RANGE,
};
use qcmorph::synth::{gen_dataset, write_dataset, Preset, SynthSpec};
use qcmorph::teichmuller::{landmark_tmap_with, QcOptions, SurfaceMap};
use qcmorph::{Error, LandmarkSet, TriMesh};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "qcmorph", about = "Teichmüller-map shape analysis of landmarked disk surfaces")]
#[command(disable_version_flag = true, subcommand_required = false, arg_required_else_help = true)]
struct Cli {
    /// Worker threads for parallel map and grid evaluation (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Print version, solver tolerances and defaults
    #[arg(long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rectangular conformal parameterisation of one surface
    Param {
        mesh: PathBuf,
        landmarks: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Landmark-matching Teichmüller map between two surfaces
    Map {
        source_mesh: PathBuf,
        source_landmarks: PathBuf,
        target_mesh: PathBuf,
        target_landmarks: PathBuf,
        /// Output JSON path
        #[arg(long)]
        out: PathBuf,
        /// Also write the source mesh moved onto the target
        #[arg(long)]
        mapped_obj: Option<PathBuf>,
        #[command(flatten)]
        qc: QcArgs,
    },
    /// Teichmüller distance between two surfaces
    Distance {
        source_mesh: PathBuf,
        source_landmarks: PathBuf,
        target_mesh: PathBuf,
        target_landmarks: PathBuf,
        #[command(flatten)]
        qc: QcArgs,
    },
    /// Classification at fixed shape-index weights
    Classify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        pcut: f64,
        #[command(flatten)]
        common: PipelineArgs,
    },
    /// Full pipeline with spherical marching parameter search
    Search {
        #[arg(long)]
        manifest: PathBuf,
        /// Grid density in radians
        #[arg(long, default_value_t = qcmorph::shape::DEFAULT_RHO)]
        rho: f64,
        /// Comma-separated p-value cuts
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_P_CUTS)]
        pcut_grid: Vec<f64>,
        #[arg(long)]
        allow_any_rho: bool,
        #[command(flatten)]
        common: PipelineArgs,
    },
    /// Generate a synthetic two-class dataset
    Gen {
        #[arg(long)]
        preset: Preset,
        /// Subjects per class
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1200)]
        resolution: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// CSV/JSON data for |μ| histograms and curvature maps
    Plotdata {
        /// SurfaceMap JSON written by `map`
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Mesh whose curvature should be exported
        #[arg(long)]
        mesh: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct QcArgs {
    /// Convergence threshold on std(|μ|)/mean(|μ|)
    #[arg(long, default_value_t = QcOptions::default().uniformity_tol)]
    uniformity_tol: f64,
    /// Convergence threshold on the change of mean |μ|
    #[arg(long, default_value_t = QcOptions::default().mean_tol)]
    mean_tol: f64,
    #[arg(long, default_value_t = QcOptions::default().max_iter)]
    max_iter: usize,
}

impl QcArgs {
    fn options(&self) -> Result<QcOptions> {
        if !(self.uniformity_tol > 0.0 && self.mean_tol > 0.0 && self.max_iter > 0) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()).into());
        }
        Ok(QcOptions {
            uniformity_tol: self.uniformity_tol,
            mean_tol: self.mean_tol,
            max_iter: self.max_iter,
            ..QcOptions::default()
        })
    }
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TREES)]
    trees: usize,
    /// Keep boundary vertices out of the significance mask
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    exclude_boundary: bool,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    qc: QcArgs,
}

/// Marker for results that exist but did not meet the convergence criteria.
#[derive(Debug)]
struct NotConverged(String);

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "not converged: {}", self.0)
    }
}

impl std::error::Error for NotConverged {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<NotConverged>().is_some() {
        return EXIT_NOT_CONVERGED;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::PersistentFolds { .. } | Error::TooManyExcluded { .. } | Error::Singular { .. }) => EXIT_NOT_CONVERGED,
        _ => EXIT_VALIDATION,
    }
}

fn version_text() -> String {
    let qc = QcOptions::default();
    format!(
        "qcmorph {}\n\
         qc iteration: uniformity_tol={} mean_tol={} max_iter={} smoothing={} (halved after {} stalled iterations, floor {}) fold_patience={} order={:?}\n\
         search: rho={:.6} (range [{:.6}, {:.6}]) p_cut_grid={:?} trees={}\n\
         features: exclude_boundary=true\n",
        env!("CARGO_PKG_VERSION"),
        qc.uniformity_tol,
        qc.mean_tol,
        qc.max_iter,
        qc.smoothing,
        qc.stall_patience,
        qc.min_smoothing,
        qc.fold_patience,
        qc.order,
        qcmorph::shape::DEFAULT_RHO,
        RHO_RANGE.0,
        RHO_RANGE.1,
        DEFAULT_P_CUTS,
        DEFAULT_TREES,
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_pair(mesh: &Path, lm: &Path) -> Result<(TriMesh, LandmarkSet)> {
    let m = load_mesh(mesh)?;
    let l = load_landmarks(lm, &m)?;
    Ok((m, l))
}

#[derive(Serialize)]
struct ParamOutput {
    width: f64,
    height: f64,
    corners: [usize; 4],
    corner_roles: [CornerRole; 4],
    landmark_uv: Vec<[f64; 2]>,
    quality: Quality,
    disk_quality: Quality,
}

fn cmd_param(mesh: &Path, lm: &Path, out_dir: &Path) -> Result<()> {
    let (m, l) = load_pair(mesh, lm)?;
    let p = rectangular_param(&m, &l)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_planar_obj(m.faces(), &p.rect.uv, out_dir.join("rect.obj"))?;
    write_json(
        &out_dir.join("param.json"),
        &ParamOutput {
            width: p.rect.width(),
            height: p.height(),
            corners: p.corners.vertices,
            corner_roles: p.corners.roles,
            landmark_uv: p.landmark_uv.iter().map(|q| [q.x, q.y]).collect(),
            quality: p.quality,
            disk_quality: p.disk_quality,
        },
    )?;
    println!("height {:.6}", p.height());
    Ok(())
}

fn compute_map(src: (&Path, &Path), tgt: (&Path, &Path), qc: &QcOptions) -> Result<(SurfaceMap, TriMesh, TriMesh)> {
    let (mi, li) = load_pair(src.0, src.1)?;
    let (mj, lj) = load_pair(tgt.0, tgt.1)?;
    validate_pair(&mi, &li, &mj, &lj)?;
    let pi = rectangular_param(&mi, &li)?;
    let pj = rectangular_param(&mj, &lj)?;
    let map = landmark_tmap_with(&mi, &li, &pi, &mj, &lj, &pj, qc)?;
    Ok((map, mi, mj))
}

fn pipeline_options(common: &PipelineArgs) -> Result<PipelineOptions> {
    Ok(PipelineOptions {
        qc: common.qc.options()?,
        search: SearchOptions {
            seed: common.seed,
            trees: common.trees,
            ..SearchOptions::default()
        },
        exclude_boundary: common.exclude_boundary,
    })
}

fn cmd_classify(manifest: &Path, params: ShapeIndexParams, common: &PipelineArgs) -> Result<()> {
    let ds = load_manifest(manifest)?;
    let opts = pipeline_options(common)?;
    let f = extract_features(&ds, &opts)?;
    let report = evaluate_params(&f.components, &params, common.trees, common.seed)?;
    let dir = &common.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let c = f.components.matrix(params.weights());
    fs::write(dir.join("features.csv"), c.to_csv()?)?;
    let mask: String = std::iter::once("vertex".to_string())
        .chain(report.significant_indices().iter().map(|k| k.to_string()))
        .map(|l| l + "\n")
        .collect();
    fs::write(dir.join("mask.csv"), mask)?;
    let p = p_values(&c, Some(&f.components.eligible))?;
    let mut pv = String::from("vertex,p_value,eligible\n");
    for (k, (x, e)) in p.iter().zip(&f.components.eligible).enumerate() {
        pv += &format!("{k},{x:e},{e}\n");
    }
    fs::write(dir.join("pvalues.csv"), pv)?;
    write_json(&dir.join("report.json"), &report)?;
    println!("accuracy {:.4} with {} significant vertices", report.overall_accuracy, report.num_significant);
    Ok(())
}

fn cmd_search(manifest: &Path, rho: f64, pcut_grid: Vec<f64>, allow_any_rho: bool, common: &PipelineArgs) -> Result<()> {
    let ds = load_manifest(manifest)?;
    let mut opts = pipeline_options(common)?;
    opts.search.rho = rho;
    opts.search.p_cut_grid = pcut_grid;
    opts.search.allow_any_rho = allow_any_rho;
    let out = run_pipeline(&ds, &opts)?;
    write_artifacts(&out, &ds, &common.out_dir)?;
    let b = &out.search.best;
    println!(
        "accuracy {:.4} at alpha={:.4} beta={:.4} gamma={:.4} p_cut={} with {} significant vertices",
        b.overall_accuracy, b.params.alpha, b.params.beta, b.params.gamma, b.params.p_cut, b.num_significant
    );
    Ok(())
}

#[derive(Serialize)]
struct Histogram {
    bins: Vec<[f64; 2]>,
    counts: Vec<usize>,
    mean: f64,
    residual_uniformity: f64,
}

fn mu_histogram(map: &SurfaceMap, bins: usize) -> Histogram {
    let moduli = map.mu.moduli();
    let mut counts = vec![0usize; bins];
    for m in &moduli {
        let b = ((m * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram {
        bins: (0..bins).map(|b| [b as f64 / bins as f64, (b + 1) as f64 / bins as f64]).collect(),
        counts,
        mean: map.k,
        residual_uniformity: map.residual_uniformity,
    }
}

fn cmd_plotdata(map: Option<&Path>, bins: usize, mesh: Option<&Path>, out_dir: &Path) -> Result<()> {
    if map.is_none() && mesh.is_none() {
        bail!(Error::InvalidParameter("plotdata needs --map and/or --mesh".into()));
    }
    if bins == 0 {
        bail!(Error::InvalidParameter("need at least one bin".into()));
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    if let Some(path) = map {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: SurfaceMap = serde_json::from_str(&text).map_err(Error::from)?;
        let h = mu_histogram(&m, bins);
        let mut csv = String::from("lo,hi,count\n");
        for (b, c) in h.bins.iter().zip(&h.counts) {
            csv += &format!("{},{},{}\n", b[0], b[1], c);
        }
        fs::write(out_dir.join("mu_histogram.csv"), csv)?;
        write_json(&out_dir.join("mu_histogram.json"), &h)?;
    }
    if let Some(path) = mesh {
        let m = load_mesh(path)?;
        let c = curvatures(&m);
        let mut csv = String::from("vertex,x,y,z,mean_curvature,gaussian_curvature,area,low_confidence\n");
        for (i, p) in m.vertices().iter().enumerate() {
            csv += &format!(
                "{i},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                p.x, p.y, p.z, c.h[i], c.k[i], c.area[i], c.low_confidence[i]
            );
        }
        fs::write(out_dir.join("curvature.csv"), csv)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let Some(command) = cli.command else {
        bail!(Error::InvalidParameter("no subcommand given".into()));
    };
    match command {
        Command::Param { mesh, landmarks, out_dir } => cmd_param(&mesh, &landmarks, &out_dir),
        Command::Map {
            source_mesh,
            source_landmarks,
            target_mesh,
            target_landmarks,
            out,
            mapped_obj,
            qc,
        } => {
            let (map, mi, mj) = compute_map((&source_mesh, &source_landmarks), (&target_mesh, &target_landmarks), &qc.options()?)?;
            write_json(&out, &map)?;
            if let Some(path) = mapped_obj {
                write_obj(&mi.with_positions(map.mapped_positions(&mj))?, path)?;
            }
            println!("distance {:.6} k {:.6} uniformity {:.4}", map.distance, map.k, map.residual_uniformity);
            if !map.converged {
                bail!(NotConverged(format!("{} iterations", map.iterations)));
            }
            Ok(())
        }
        Command::Distance {
            source_mesh,
            source_landmarks,
            target_mesh,
            target_landmarks,
            qc,
        } => {
            let (map, _, _) = compute_map((&source_mesh, &source_landmarks), (&target_mesh, &target_landmarks), &qc.options()?)?;
            println!("{:.9}", map.distance);
            if !map.converged {
                bail!(NotConverged(format!("{} iterations", map.iterations)));
            }
            Ok(())
        }
        Command::Classify {
            manifest,
            alpha,
            beta,
            gamma,
            pcut,
            common,
        } => cmd_classify(&manifest, ShapeIndexParams::normalized(alpha, beta, gamma, pcut)?, &common),
        Command::Search {
            manifest,
            rho,
            pcut_grid,
            allow_any_rho,
            common,
        } => cmd_search(&manifest, rho, pcut_grid, allow_any_rho, &common),
        Command::Gen {
            preset,
            n,
            seed,
            resolution,
            out_dir,
        } => {
            let spec = SynthSpec {
                resolution,
                ..SynthSpec::preset(preset, seed)
            };
            let ds = gen_dataset(&spec, n)?;
            write_dataset(&ds, &spec, &out_dir)?;
            println!("wrote {} subjects to {}", ds.len(), out_dir.display());
            Ok(())
        }
        Command::Plotdata { map, bins, mesh, out_dir } => cmd_plotdata(map.as_deref(), bins, mesh.as_deref(), &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.version {
        print!("{}", version_text());
        return ExitCode::SUCCESS;
    }
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
