//! Command-line front end: simulate, build-prior, train-disc, reconstruct,
//! eval, and mdl subcommands. Every run writes a config echo file with all
//! effective values so outputs can be reproduced byte-identically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cube::{
    read_cube, read_manifest, truecolor_composite, write_cube, write_manifest, write_ppm, HsiCube,
    Split,
};
use crate::discriminator::{
    read_params, train_discriminator, write_params, DiscriminatorParams, TrainOptions,
};
use crate::error::{Error, Result};
use crate::eval::{mdl_order, metric_report};
use crate::prior::{estimate_spectral_prior, read_prior, write_prior};
use crate::simulate::{
    build_srf, default_band_specs, make_dataset, read_band_specs, read_srf, remove_water_bands,
    simulate_sentinel2, spectral_downsample2, write_band_specs, write_srf, SentinelProduct,
    BAND_FACTORS,
};
use crate::solver::{solve, spectral_lift, write_trace_csv, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "s2hsi", version, about = "Sentinel-2 to hyperspectral reconstruction pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate 12-band multiresolution products from reference cubes.
    Simulate(SimulateArgs),
    /// Estimate the spectral prior matrix from training cubes.
    BuildPrior(BuildPriorArgs),
    /// Train the real/fake probability network.
    TrainDisc(TrainDiscArgs),
    /// Reconstruct a hyperspectral cube from a product.
    Reconstruct(ReconstructArgs),
    /// Score estimates against references.
    Eval(EvalArgs),
    /// Model-order selection by minimum description length.
    Mdl(MdlArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Reference hyperspectral cubes (HSC1), repeatable.
    #[arg(long, required = true)]
    pub input: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Band-spec table; the built-in Sentinel-2 table is used when omitted.
    #[arg(long)]
    pub band_table: Option<PathBuf>,
    /// Train/test/val split sizes; default puts every scene in train.
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub val: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub config_echo: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildPriorArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// Output prior file (SPM1).
    #[arg(long)]
    pub out: PathBuf,
    /// Pixel count the prior is scaled to; defaults to the first cube's.
    #[arg(long)]
    pub target_pixels: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub config_echo: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainDiscArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "train")]
    pub split: String,
    /// SRF file used to build lift-based fake samples.
    #[arg(long)]
    pub srf: PathBuf,
    /// Output parameter file (DSC1).
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace CSV; defaults next to the parameter file.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Explicit fake cubes; lift-plus-noise fakes are synthesized when empty.
    #[arg(long)]
    pub fake: Vec<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step_size: f64,
    #[arg(long, default_value_t = 8)]
    pub patch_size: usize,
    /// Noise level added to synthesized fakes.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub config_echo: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// 12-band multiresolution product (HSC1).
    #[arg(long)]
    pub product: PathBuf,
    #[arg(long)]
    pub srf: PathBuf,
    /// Spectral prior (SPM1); required unless --no-spectrum-prior.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Discriminator parameters (DSC1); required unless --no-dmr.
    #[arg(long)]
    pub disc: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5e-4)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 5e-1)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 5e-2)]
    pub mu: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub gamma: f64,
    #[arg(long, default_value_t = 2)]
    pub outer_iters: usize,
    #[arg(long, default_value_t = 10)]
    pub inner_steps: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Disable the discriminator term (lambda1 = mu = 0).
    #[arg(long, default_value_t = false)]
    pub no_dmr: bool,
    /// Disable the spectrum regularization (lambda2 = 0).
    #[arg(long, default_value_t = false)]
    pub no_spectrum_prior: bool,
    /// One fixed-size gradient step per outer iteration.
    #[arg(long, default_value_t = false)]
    pub unfold_faithful: bool,
    /// Skip the final nonnegativity clamp.
    #[arg(long, default_value_t = false)]
    pub no_clamp: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub config_echo: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Reference cubes, repeatable and zipped with --estimate.
    #[arg(long, required = true)]
    pub reference: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub estimate: Vec<PathBuf>,
    /// Output directory for metrics.csv and optional composites.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated band triple for a true-color composite, e.g. 25,12,8.
    #[arg(long)]
    pub composite: Option<String>,
    #[arg(long, default_value_t = 2.2)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub config_echo: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MdlArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub max_k: usize,
    /// Code-length curve CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub config_echo: Option<PathBuf>,
}

/// 0 success, 1 internal/data error, 2 usage/precondition error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::Format { .. } => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::BuildPrior(args) => cmd_build_prior(&args),
        Command::TrainDisc(args) => cmd_train_disc(&args),
        Command::Reconstruct(args) => cmd_reconstruct(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Mdl(args) => cmd_mdl(&args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            if code == 2 {
                eprintln!("usage: run `s2hsi --help` for command syntax");
            }
            code
        }
    }
}

struct Echo {
    lines: String,
}

impl Echo {
    fn new(command: &str) -> Self {
        Echo {
            lines: format!("command = {command}\n"),
        }
    }

    fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        writeln!(self.lines, "{key} = {value}").unwrap();
        self
    }

    fn put_opt(&mut self, key: &str, value: &Option<impl std::fmt::Display>) -> &mut Self {
        if let Some(v) = value {
            self.put(key, v);
        }
        self
    }

    fn put_many(&mut self, key: &str, values: &[PathBuf]) -> &mut Self {
        for v in values {
            self.put(key, v.display());
        }
        self
    }

    fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.lines).map_err(|e| Error::io(path, e))
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn scene_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string())
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Data(format!("worker pool: {e}")))
}

fn manifest_cubes(manifest_path: &Path, split: &str) -> Result<Vec<HsiCube>> {
    let manifest = read_manifest(manifest_path)?;
    let split = Split::parse(split).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let cubes: Vec<HsiCube> = manifest
        .entries_for(split)
        .map(|e| {
            let p = PathBuf::from(&e.path);
            let p = if p.is_relative() { base.join(p) } else { p };
            read_cube(&p)
        })
        .collect::<Result<_>>()?;
    if cubes.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "manifest has no {} entries",
            split.as_str()
        )));
    }
    Ok(cubes)
}

/// Spectral preprocessing of a reference cube: the 425-band airborne chain
/// (water-band removal, then pairwise band averaging down to 186) when it
/// applies, otherwise the cube unchanged.
fn prepare_reference(cube: HsiCube) -> Result<HsiCube> {
    if cube.bands == 425 {
        spectral_downsample2(&remove_water_bands(&cube)?)
    } else {
        Ok(cube)
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let specs = match &args.band_table {
        Some(p) => read_band_specs(p)?,
        None => default_band_specs(),
    };

    let first = prepare_reference(read_cube(&args.input[0])?)?;
    let wavelengths = first.wavelengths.clone().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "{} has no wavelengths; the SRF needs band centers",
            args.input[0].display()
        ))
    })?;
    let srf = build_srf(&wavelengths, &specs)?;
    write_srf(&srf, &args.out.join("srf.txt"))?;
    write_band_specs(&specs, &args.out.join("band_table.txt"))?;

    let pool = worker_pool(args.workers)?;
    pool.install(|| {
        args.input
            .par_iter()
            .map(|path| -> Result<()> {
                let cube = prepare_reference(read_cube(path)?)?;
                let id = scene_id(path);
                let (product, s_true_u) = simulate_sentinel2(&cube, &srf)?;
                write_cube(&cube, &args.out.join(format!("{id}_ref.hsc")))?;
                write_cube(&product.cube, &args.out.join(format!("{id}_product.hsc")))?;
                write_cube(&s_true_u, &args.out.join(format!("{id}_su.hsc")))?;
                Ok(())
            })
            .collect::<Result<Vec<()>>>()
    })?;

    let n = args.input.len();
    let n_train = args.train.unwrap_or(n.saturating_sub(args.test + args.val));
    let paths: Vec<(String, String)> = args
        .input
        .iter()
        .map(|p| {
            let id = scene_id(p);
            (format!("{id}_ref.hsc"), id)
        })
        .collect();
    let manifest = make_dataset(&paths, (n_train, args.test, args.val), args.seed)?;
    write_manifest(&manifest, &args.out.join("manifest.tsv"))?;

    let mut echo = Echo::new("simulate");
    echo.put_many("input", &args.input)
        .put("out", args.out.display())
        .put_opt("band-table", &args.band_table.as_ref().map(|p| p.display().to_string()))
        .put("train", n_train)
        .put("test", args.test)
        .put("val", args.val)
        .put("seed", args.seed)
        .put("workers", args.workers);
    let echo_path = args
        .config_echo
        .clone()
        .unwrap_or_else(|| args.out.join("config_echo.txt"));
    echo.write(&echo_path)
}

pub fn cmd_build_prior(args: &BuildPriorArgs) -> Result<()> {
    let cubes = manifest_cubes(&args.manifest, &args.split)?;
    let target = args.target_pixels.unwrap_or_else(|| cubes[0].pixels());
    let prior = estimate_spectral_prior(&cubes, target)?;
    eprintln!(
        "prior: {} bands, asymmetry {:.3e}, min eigenvalue {:.6e}",
        prior.bands(),
        prior.asymmetry(),
        prior.min_eigenvalue()
    );
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    write_prior(&prior, &args.out)?;

    let mut echo = Echo::new("build-prior");
    echo.put("manifest", args.manifest.display())
        .put("split", &args.split)
        .put("out", args.out.display())
        .put("target-pixels", target)
        .put("seed", args.seed)
        .put("workers", args.workers);
    let echo_path = args
        .config_echo
        .clone()
        .unwrap_or_else(|| args.out.with_extension("echo.txt"));
    echo.write(&echo_path)
}

/// Fake sample: pseudo-inverse spectral lift of D*A plus Gaussian noise.
fn lift_fake(cube: &HsiCube, srf: &crate::operators::SrfMatrix, noise: f64, rng: &mut ChaCha8Rng) -> Result<HsiCube> {
    let s_u = crate::operators::apply_srf(srf, &cube.as_matrix())?;
    let (mut lifted, _) = spectral_lift(&s_u, srf)?;
    for v in lifted.values.iter_mut() {
        // Box-Muller
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        *v += noise * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
    HsiCube::from_matrix(&lifted, None)
}

pub fn cmd_train_disc(args: &TrainDiscArgs) -> Result<()> {
    let real = manifest_cubes(&args.manifest, &args.split)?;
    let srf = read_srf(&args.srf)?;
    let bands = real[0].bands;
    if bands != srf.hsi_bands() {
        return Err(Error::ShapeMismatch(format!(
            "cubes have {} bands, SRF expects {}",
            bands,
            srf.hsi_bands()
        )));
    }
    let fakes: Vec<HsiCube> = if args.fake.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x6661_6b65);
        real.iter()
            .map(|c| lift_fake(c, &srf, args.noise, &mut rng))
            .collect::<Result<_>>()?
    } else {
        args.fake.iter().map(|p| read_cube(p)).collect::<Result<_>>()?
    };

    let init = DiscriminatorParams::seeded(bands, args.seed);
    let opts = TrainOptions {
        steps: args.steps,
        step_size: args.step_size,
        patch_size: args.patch_size,
        seed: args.seed,
    };
    let (trained, trace) = train_discriminator(&init, &real, &fakes, &opts)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_dir(dir)?;
        }
    }
    write_params(&trained, &args.out)?;

    let mut csv = String::from("step,loss,p_r,p_f\n");
    for row in &trace {
        writeln!(csv, "{},{},{},{}", row.step, row.loss, row.p_r, row.p_f).unwrap();
    }
    let csv_path = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        eprintln!(
            "discriminator: loss {:.4} -> {:.4}, separation {:.4}",
            first.loss,
            last.loss,
            last.p_r - last.p_f
        );
    }

    let mut echo = Echo::new("train-disc");
    echo.put("manifest", args.manifest.display())
        .put("split", &args.split)
        .put("srf", args.srf.display())
        .put("out", args.out.display())
        .put("loss-csv", csv_path.display())
        .put_many("fake", &args.fake)
        .put("steps", args.steps)
        .put("step-size", args.step_size)
        .put("patch-size", args.patch_size)
        .put("noise", args.noise)
        .put("seed", args.seed)
        .put("workers", args.workers);
    let echo_path = args
        .config_echo
        .clone()
        .unwrap_or_else(|| args.out.with_extension("echo.txt"));
    echo.write(&echo_path)
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let product_cube = read_cube(&args.product)?;
    let srf = read_srf(&args.srf)?;
    if product_cube.bands != srf.msi_bands() {
        return Err(Error::ShapeMismatch(format!(
            "product has {} bands, SRF has {} rows",
            product_cube.bands,
            srf.msi_bands()
        )));
    }
    let product = SentinelProduct {
        cube: product_cube,
        factors: BAND_FACTORS,
    };

    let prior = if args.no_spectrum_prior {
        None
    } else {
        let p = args.prior.as_ref().ok_or_else(|| {
            Error::InvalidArgument("--prior is required unless --no-spectrum-prior is set".into())
        })?;
        Some(read_prior(p)?)
    };
    let disc = if args.no_dmr {
        None
    } else {
        let p = args.disc.as_ref().ok_or_else(|| {
            Error::InvalidArgument("--disc is required unless --no-dmr is set".into())
        })?;
        Some(read_params(p)?)
    };

    let mut config = SolverConfig {
        lambda1: if args.no_dmr { 0.0 } else { args.lambda1 },
        lambda2: if args.no_spectrum_prior { 0.0 } else { args.lambda2 },
        mu: if args.no_dmr { 0.0 } else { args.mu },
        gamma: args.gamma,
        outer_iters: args.outer_iters,
        inner_grad_steps: args.inner_steps,
        tol: args.tol,
        clamp_output: !args.no_clamp,
        use_backtracking: true,
        record_iterates: false,
    };
    if args.unfold_faithful {
        config = config.unfold_faithful();
    }

    let output = solve(&product, &srf, prior.as_ref(), disc.as_ref(), &config)?;
    if output.stalled {
        eprintln!("warning: A-update stalled (backtracking exhausted); result written anyway");
    }
    if output.used_ridge {
        eprintln!("warning: SRF Gram matrix needed a ridge fallback during initialization");
    }
    write_cube(&output.cube, &args.out.join("recon.hsc"))?;
    write_trace_csv(&output.trace, &args.out.join("trace.csv"))?;

    let mut echo = Echo::new("reconstruct");
    echo.put("product", args.product.display())
        .put("srf", args.srf.display())
        .put_opt("prior", &args.prior.as_ref().map(|p| p.display().to_string()))
        .put_opt("disc", &args.disc.as_ref().map(|p| p.display().to_string()))
        .put("out", args.out.display())
        .put("lambda1", args.lambda1)
        .put("lambda2", args.lambda2)
        .put("mu", args.mu)
        .put("gamma", args.gamma)
        .put("outer-iters", args.outer_iters)
        .put("inner-steps", args.inner_steps)
        .put("tol", args.tol)
        .put("no-dmr", args.no_dmr)
        .put("no-spectrum-prior", args.no_spectrum_prior)
        .put("unfold-faithful", args.unfold_faithful)
        .put("no-clamp", args.no_clamp)
        .put("seed", args.seed)
        .put("workers", args.workers);
    let echo_path = args
        .config_echo
        .clone()
        .unwrap_or_else(|| args.out.join("config_echo.txt"));
    echo.write(&echo_path)
}

fn format_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    if args.reference.len() != args.estimate.len() {
        return Err(Error::InvalidArgument(format!(
            "{} references vs {} estimates",
            args.reference.len(),
            args.estimate.len()
        )));
    }
    ensure_dir(&args.out)?;
    let composite_bands: Option<[usize; 3]> = match &args.composite {
        Some(s) => {
            let parts: Vec<usize> = s
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad composite spec {s:?}")))
                })
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                return Err(Error::InvalidArgument(
                    "composite needs exactly three band indices".into(),
                ));
            }
            Some([parts[0], parts[1], parts[2]])
        }
        None => None,
    };

    let pool = worker_pool(args.workers)?;
    let pairs: Vec<(PathBuf, PathBuf)> = args
        .reference
        .iter()
        .cloned()
        .zip(args.estimate.iter().cloned())
        .collect();
    let rows: Vec<(String, String)> = pool.install(|| {
        pairs
            .par_iter()
            .map(|(r, e)| -> Result<(String, String)> {
                let reference = read_cube(r)?;
                let estimate = read_cube(e)?;
                let report = metric_report(&reference, &estimate)?;
                let id = scene_id(e);
                if let Some(bands) = composite_bands {
                    let img = truecolor_composite(&estimate, bands, args.gamma)?;
                    write_ppm(&img, &args.out.join(format!("{id}_rgb.ppm")))?;
                }
                let row = format!(
                    "{},{},{},{},{},{}\n",
                    id,
                    format_metric(report.psnr_db),
                    format_metric(report.sam_deg),
                    format_metric(report.ssim),
                    format_metric(report.rmse),
                    format_metric(report.l_g)
                );
                Ok((id, row))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut csv = String::from("scene_id,psnr_db,sam_deg,ssim,rmse,l_g\n");
    for (_, row) in &rows {
        csv.push_str(row);
    }
    let csv_path = args.out.join("metrics.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let mut echo = Echo::new("eval");
    echo.put_many("reference", &args.reference)
        .put_many("estimate", &args.estimate)
        .put("out", args.out.display())
        .put_opt("composite", &args.composite)
        .put("gamma", args.gamma)
        .put("seed", args.seed)
        .put("workers", args.workers);
    let echo_path = args
        .config_echo
        .clone()
        .unwrap_or_else(|| args.out.join("config_echo.txt"));
    echo.write(&echo_path)
}

pub fn cmd_mdl(args: &MdlArgs) -> Result<()> {
    let cube = read_cube(&args.input)?;
    if args.max_k >= cube.bands {
        return Err(Error::InvalidArgument(format!(
            "max_k {} must be below the band count {}",
            args.max_k, cube.bands
        )));
    }
    let result = mdl_order(&cube.as_matrix(), args.max_k)?;
    if result.floored {
        eprintln!("warning: rank-deficient covariance; eigenvalues floored");
    }
    if let Some(out) = &args.out {
        let mut csv = String::from("k,code_length\n");
        for (i, v) in result.curve.iter().enumerate() {
            writeln!(csv, "{},{}", i + 1, v).unwrap();
        }
        std::fs::write(out, csv).map_err(|e| Error::io(out, e))?;
    }
    println!("{}", result.selected);

    if let Some(echo_path) = &args.config_echo {
        let mut echo = Echo::new("mdl");
        echo.put("input", args.input.display())
            .put("max-k", args.max_k)
            .put_opt("out", &args.out.as_ref().map(|p| p.display().to_string()))
            .put("seed", args.seed)
            .put("workers", args.workers);
        echo.write(echo_path)?;
    }
    Ok(())
}
