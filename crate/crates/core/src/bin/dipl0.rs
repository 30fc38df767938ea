use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dipl0::admm::{run_with, Reference, RunConfig, Seeds};
use dipl0::config::ConfigFile;
use dipl0::fusion::{solve_prox_with_stats, FusionConfig};
use dipl0::image::{l0_gradient_count, ImageTensor, DEFAULT_L0_EPSILON};
use dipl0::io::{load_image, save_image, PreparedImage};
use dipl0::metrics;
use dipl0::net::checkpoint;
use dipl0::report::{ReportPaths, RunReport};
use dipl0::sweep::{format_table, run_sweep, SweepGrid};
use dipl0::synth::{gen_synthetic, SynthSpec};
use dipl0::{parallel_mode, Error, Result};

#[derive(Parser)]
#[command(
    name = "dipl0",
    version,
    about = "Edge-preserving smoothing with an untrained network and an l0 gradient penalty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smooth an image.
    Smooth(SmoothArgs),
    /// Apply the region fusion l0 solver directly to an image.
    L0(L0Args),
    /// Print PSNR and SSIM between two images.
    Metrics(MetricsArgs),
    /// Run the one-at-a-time parameter sweep.
    Sweep(SweepArgs),
    /// Generate a synthetic pair and smooth it.
    Demo(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Smoothing,
    Jpeg,
}

/// Solver settings shared by the commands that run the full pipeline.
#[derive(Args)]
struct SolverArgs {
    /// Default values to start from.
    #[arg(long, value_enum, default_value = "smoothing")]
    preset: Preset,
    /// TOML file with settings; command line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Outer iterations.
    #[arg(short = 'T', long = "iterations")]
    outer: Option<usize>,
    /// Adam steps per outer iteration.
    #[arg(short = 'K', long = "inner-iterations")]
    inner: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ramp_steps: Option<usize>,
}

impl SolverArgs {
    fn resolve(&self, channels: usize) -> Result<RunConfig> {
        let mut cfg = match self.preset {
            Preset::Smoothing => RunConfig::smoothing(channels),
            Preset::Jpeg => RunConfig::jpeg(channels),
        };
        if let Some(path) = &self.config {
            cfg = ConfigFile::load(path)?.apply(cfg);
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.outer {
            cfg.outer_iterations = v;
        }
        if let Some(v) = self.inner {
            cfg.inner_iterations = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.seed {
            cfg.seeds = Seeds::from_master(v);
        }
        if let Some(v) = self.ramp_steps {
            cfg.ramp_steps = v;
        }
        cfg.net.output_channels = channels;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long)]
    input: PathBuf,
    /// Clean image to track PSNR and SSIM against.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write the trained weights.
    #[arg(long)]
    save_weights: Option<PathBuf>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timing: bool,
    /// Suppress per-iteration progress on stderr.
    #[arg(long, short)]
    quiet: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct L0Args {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = FusionConfig::DEFAULT_RAMP_STEPS)]
    ramp_steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    out_table: PathBuf,
    /// Replace the lambda values of the grid.
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,
    #[arg(long = "iteration-counts", value_delimiter = ',')]
    iteration_counts: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Outer iterations.
    #[arg(short = 'T', long = "iterations", default_value_t = 100)]
    outer: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Smooth(a) => cmd_smooth(a),
        Command::L0(a) => cmd_l0(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Demo(a) => cmd_demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn load_matching(reference: &Path, like: &ImageTensor) -> Result<ImageTensor> {
    let img = load_image(reference)?;
    if !img.same_shape(like) {
        return Err(Error::Shape(format!(
            "reference {} is {:?}, input is {:?}",
            reference.display(),
            img.shape(),
            like.shape()
        )));
    }
    Ok(img)
}

struct SmoothJob<'a> {
    f: &'a ImageTensor,
    reference: Option<&'a ImageTensor>,
    cfg: &'a RunConfig,
    quiet: bool,
}

/// Runs the pipeline on an unaligned image and returns the cropped result.
fn smooth_image(job: SmoothJob<'_>) -> Result<(ImageTensor, dipl0::admm::RunOutput)> {
    let prep = PreparedImage::new(job.f, job.cfg.net.alignment());
    let reference = job.reference.map(|image| Reference {
        image,
        crop: Some(prep.crop),
    });
    let total = job.cfg.outer_iterations;
    let out = run_with(&prep.padded, job.cfg, reference, |row| {
        if !job.quiet {
            let quality = match (row.psnr, row.ssim) {
                (Some(p), Some(s)) => format!(" psnr={p} ssim={s:.4}"),
                (Some(p), None) => format!(" psnr={p}"),
                _ => String::new(),
            };
            eprintln!(
                "[{}/{total}] loss={:.4} l0={} residual={:.4}{quality}",
                row.t, row.eq3_loss, row.l0_count, row.dual_residual
            );
        }
    })?;
    let u = prep.restore(&out.u)?;
    Ok((u, out))
}

fn cmd_smooth(a: SmoothArgs) -> Result<()> {
    let f = load_image(&a.input)?;
    let cfg = a.solver.resolve(f.channels())?;
    let reference = a
        .reference
        .as_deref()
        .map(|p| load_matching(p, &f))
        .transpose()?;
    let (u, out) = smooth_image(SmoothJob {
        f: &f,
        reference: reference.as_ref(),
        cfg: &cfg,
        quiet: a.quiet,
    })?;
    save_image(&u, &a.out)?;
    if let Some(path) = &a.save_weights {
        checkpoint::save(&out.state.theta, path)?;
    }
    if let Some(path) = &a.report {
        RunReport {
            config: cfg,
            paths: ReportPaths {
                input: Some(display(&a.input)),
                reference: a.reference.as_deref().map(display),
                output: Some(display(&a.out)),
                weights: a.save_weights.as_deref().map(display),
            },
            timing: a.timing.then_some(out.timings),
            history: out.history,
        }
        .write(path)?;
    }
    Ok(())
}

fn cmd_l0(a: L0Args) -> Result<()> {
    let f = load_image(&a.input)?;
    let cfg = FusionConfig::new(a.lambda).with_ramp_steps(a.ramp_steps);
    let (v, stats) = solve_prox_with_stats(&f, &cfg)?;
    save_image(&v, &a.out)?;
    println!("regions = {}", stats.regions);
    println!("passes = {}", stats.passes);
    println!("l0_input = {}", l0_gradient_count(&f, DEFAULT_L0_EPSILON));
    println!("l0_output = {}", l0_gradient_count(&v, DEFAULT_L0_EPSILON));
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> Result<()> {
    let x = load_image(&a.a)?;
    let y = load_image(&a.b)?;
    let r = metrics::compare(&x, &y)?;
    println!("psnr = {}", r.psnr);
    println!("ssim = {:.6}", r.ssim);
    for (c, s) in r.per_channel_ssim.iter().enumerate() {
        println!("ssim.{c} = {s:.6}");
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let f = load_image(&a.input)?;
    let reference = load_matching(&a.reference, &f)?;
    let base = a.solver.resolve(f.channels())?;
    let mut grid = SweepGrid::standard(base);
    if !a.lambdas.is_empty() {
        grid.lambdas = a.lambdas;
    }
    if !a.betas.is_empty() {
        grid.betas = a.betas;
    }
    if !a.iteration_counts.is_empty() {
        grid.iterations = a.iteration_counts;
    }
    if !a.alphas.is_empty() {
        grid.alphas = a.alphas;
    }
    let prep = PreparedImage::new(&f, grid.base.net.alignment());
    let rows = run_sweep(
        &prep.padded,
        &reference,
        Some(prep.crop),
        &grid,
        parallel_mode(),
    )?;
    let table = format_table(&rows);
    std::fs::write(&a.out_table, &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_demo(a: DemoArgs) -> Result<()> {
    let spec = SynthSpec {
        size: a.size,
        seed: a.seed,
        ..SynthSpec::reference()
    };
    let (clean, corrupted) = gen_synthetic(&spec)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let clean_path = a.out_dir.join("clean.png");
    let corrupted_path = a.out_dir.join("corrupted.png");
    let out_path = a.out_dir.join("smoothed.png");
    save_image(&clean, &clean_path)?;
    save_image(&corrupted, &corrupted_path)?;
    let cfg = RunConfig {
        outer_iterations: a.outer,
        ..RunConfig::smoothing(clean.channels())
    };
    let (u, out) = smooth_image(SmoothJob {
        f: &corrupted,
        reference: Some(&clean),
        cfg: &cfg,
        quiet: false,
    })?;
    save_image(&u, &out_path)?;
    RunReport {
        config: cfg,
        paths: ReportPaths {
            input: Some(display(&corrupted_path)),
            reference: Some(display(&clean_path)),
            output: Some(display(&out_path)),
            weights: None,
        },
        timing: None,
        history: out.history,
    }
    .write(&a.out_dir.join("report.txt"))?;
    let before = metrics::compare(&corrupted, &clean)?;
    let after = metrics::compare(&u.clamped(0.0, 1.0), &clean)?;
    println!(
        "corrupted: psnr = {} ssim = {:.4}",
        before.psnr, before.ssim
    );
    println!("smoothed:  psnr = {} ssim = {:.4}", after.psnr, after.ssim);
    Ok(())
}
