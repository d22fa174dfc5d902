//! `gaussian-sr`: degrade, super-resolve and compare texture images.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gaussian_sr_core::io::{center_crop, BitDepth};
use gaussian_sr_core::metrics::{psnr_report, ssim_report};
use gaussian_sr_core::oracle::run_certification;
use gaussian_sr_core::{
    apply_degrade, build_downscale_kernel, build_sr_model, load_image, save_image, Error, GridImage,
    ModelOptions, SRModel, DEFAULT_TOL_REL, NOISE_GENERATOR,
};
use manifest::Manifest;
use rayon::prelude::*;

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "GAUSSIAN_SR_THREADS";

/// Innovation images are zero-mean; they are written around mid-gray.
const INNOVATION_OFFSET: f64 = 128.0;

#[derive(Parser)]
#[command(name = "gaussian-sr", version, about = "Stochastic super-resolution of Gaussian microtextures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Zoom an HR image out by an integer factor.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        factor: u32,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 8, value_parser = parse_depth)]
        depth: u32,
    },
    /// Draw conditional HR samples for an LR image.
    Sr(SrArgs),
    /// Write the deterministic kriging component for an LR image.
    Kriging {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// PSNR and SSIM between two images of equal size.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 255.0)]
        peak: f64,
    },
    /// Check the fast path against dense matrices on a random instance.
    OracleCheck {
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        factor: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Observed LR image.
    #[arg(long)]
    lr: PathBuf,
    /// HR reference texture; must be exactly `factor` times the LR size.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    factor: u32,
    /// Relative cutoff of the spectral pseudo-inverse.
    #[arg(long, default_value_t = DEFAULT_TOL_REL)]
    tol: f64,
    /// Drive innovations with the periodic component of the texton.
    #[arg(long)]
    consistent_texton: bool,
    /// Center-crop a larger reference to the HR size.
    #[arg(long)]
    crop: bool,
    /// Output bit depth.
    #[arg(long, default_value_t = 8, value_parser = parse_depth)]
    depth: u32,
}

#[derive(Args)]
struct SrArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Seed of the first sample; sample `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write kriging.png and innovation_NNNN.png.
    #[arg(long)]
    emit_components: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
    /// Number of failed oracle checks.
    Certification(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 1,
        Failure::Certification(_) => 3,
        Failure::Core(Error::NonFinite | Error::NonHermitianSpectrum { .. } | Error::DegenerateModel) => 3,
        Failure::Core(_) => 2,
    }
}

struct Loaded {
    lr: GridImage,
    reference: GridImage,
    hr_dims: (usize, usize),
}

fn load_inputs(args: &ModelArgs) -> Result<Loaded, Failure> {
    if !(args.tol.is_finite() && args.tol >= 0.0) {
        return Err(Failure::Usage(format!("--tol must be a finite non-negative number, got {}", args.tol)));
    }
    let lr = load_image(&args.lr)?;
    let mut reference = load_image(&args.reference)?;
    let r = args.factor as usize;
    let hr_dims = (lr.height() * r, lr.width() * r);
    if lr.channels() != reference.channels() {
        return Err(Error::ChannelMismatch {
            expected: reference.channels(),
            found: lr.channels(),
        }
        .into());
    }
    if args.crop && reference.dims() != hr_dims {
        reference = center_crop(&reference, hr_dims.0, hr_dims.1)?;
    }
    Ok(Loaded { lr, reference, hr_dims })
}

fn options(args: &ModelArgs) -> ModelOptions {
    ModelOptions {
        tol_rel: args.tol,
        consistent_texton: args.consistent_texton,
    }
}

fn parse_depth(s: &str) -> Result<u32, String> {
    match s {
        "8" => Ok(8),
        "16" => Ok(16),
        _ => Err("bit depth must be 8 or 16".into()),
    }
}

fn depth(bits: u32) -> BitDepth {
    BitDepth::from_bits(bits).expect("restricted by the parser")
}

fn record_model(m: &mut Manifest, args: &ModelArgs, inputs: &Loaded, model: &SRModel) {
    m.set("lr", args.lr.display());
    m.set("ref", args.reference.display());
    m.set("factor", args.factor);
    m.set("tol_rel", format!("{:e}", args.tol));
    m.set("consistent_texton", args.consistent_texton);
    m.set("crop", args.crop);
    m.set("depth", args.depth);
    m.set("lr_height", inputs.lr.height());
    m.set("lr_width", inputs.lr.width());
    m.set("hr_height", inputs.hr_dims.0);
    m.set("hr_width", inputs.hr_dims.1);
    m.set("channels", inputs.lr.channels());
    let masked: Vec<String> = (0..model.channels())
        .map(|c| model.kernels().zero_mask(c).iter().filter(|&&z| z).count().to_string())
        .collect();
    m.set("masked_frequencies", masked.join(","));
}

fn run_sr(args: &SrArgs) -> Result<(), Failure> {
    let inputs = load_inputs(&args.model)?;
    fs::create_dir_all(&args.out_dir)?;
    let out_depth = depth(args.model.depth);

    let t0 = Instant::now();
    let model = build_sr_model(&inputs.reference, args.model.factor as usize, inputs.hr_dims, options(&args.model))?;
    let step1 = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let cond = model.condition(&inputs.lr)?;
    let conditioning = t1.elapsed().as_secs_f64();

    let mut m = Manifest::new();
    m.set("tool", "gaussian-sr");
    m.set("tool_version", env!("CARGO_PKG_VERSION"));
    m.set("command", "sr");
    m.set("noise_generator", NOISE_GENERATOR);
    record_model(&mut m, &args.model, &inputs, &model);
    m.set("samples", args.samples);
    m.set("seed", args.seed);
    m.set("emit_components", args.emit_components);
    m.set("threads", rayon::current_num_threads());
    m.set("step1_seconds", format!("{step1:.6}"));
    m.set("conditioning_seconds", format!("{conditioning:.6}"));

    if args.emit_components {
        save_image(cond.kriging_part(), args.out_dir.join("kriging.png"), out_depth)?;
        m.set("kriging_file", "kriging.png");
        m.set("innovation_offset", INNOVATION_OFFSET);
    }

    // Samples are drawn in parallel chunks and written in seed order.
    let seeds: Vec<u64> = (0..args.samples).map(|i| args.seed.wrapping_add(i)).collect();
    let chunk = rayon::current_num_threads().max(1);
    let mut step2_total = 0.0;
    let mut index = 0usize;
    for block in seeds.chunks(chunk) {
        let drawn: Vec<_> = block
            .par_iter()
            .map(|&s| {
                let t = Instant::now();
                let sample = cond.sample(s);
                (sample, t.elapsed().as_secs_f64())
            })
            .collect();
        for (sample, secs) in drawn {
            let name = format!("sample_{index:04}.png");
            save_image(&sample.sr, args.out_dir.join(&name), out_depth)?;
            let key = format!("sample.{index:04}");
            m.set(&format!("{key}.seed"), sample.seed);
            m.set(&format!("{key}.file"), &name);
            if args.emit_components {
                let inn = format!("innovation_{index:04}.png");
                let shifted = sample.innovation_part.map(|v| v + INNOVATION_OFFSET);
                save_image(&shifted, args.out_dir.join(&inn), out_depth)?;
                m.set(&format!("{key}.innovation_file"), &inn);
            }
            m.set(&format!("{key}.step2_seconds"), format!("{secs:.6}"));
            step2_total += secs;
            index += 1;
        }
    }
    m.set("step2_seconds_total", format!("{step2_total:.6}"));
    m.set("step2_seconds_mean", format!("{:.6}", step2_total / args.samples as f64));
    m.write(&args.out_dir.join("manifest.txt"))?;
    println!(
        "wrote {} sample(s) to {} (step 1 {:.3} s, step 2 {:.4} s/sample)",
        args.samples,
        args.out_dir.display(),
        step1,
        step2_total / args.samples as f64
    );
    Ok(())
}

fn run_kriging(args: &ModelArgs, output: &Path) -> Result<(), Failure> {
    let inputs = load_inputs(args)?;
    let model = build_sr_model(&inputs.reference, args.factor as usize, inputs.hr_dims, options(args))?;
    let cond = model.condition(&inputs.lr)?;
    save_image(cond.kriging_part(), output, depth(args.depth))?;
    Ok(())
}

fn run_degrade(input: &Path, factor: u32, output: &Path, bits: u32) -> Result<(), Failure> {
    let u = load_image(input)?;
    let op = build_downscale_kernel(factor as usize)?;
    save_image(&apply_degrade(&op, &u)?, output, depth(bits))?;
    Ok(())
}

fn run_metrics(a: &Path, b: &Path, peak: f64) -> Result<(), Failure> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Failure::Usage(format!("--peak must be positive, got {peak}")));
    }
    let ua = load_image(a)?;
    let ub = load_image(b)?;
    let p = psnr_report(&ua, &ub, peak)?;
    let fmt = |v: f64| if v.is_infinite() { "inf".to_string() } else { format!("{v:.6}") };
    println!("psnr={}", fmt(p.value));
    match ssim_report(&ua, &ub, peak) {
        Ok(s) => {
            println!("ssim={:.6}", s.value);
            if s.per_channel.len() > 1 {
                let per: Vec<String> = s.per_channel.iter().map(|v| format!("{v:.6}")).collect();
                println!("ssim_per_channel={}", per.join(","));
            }
        }
        Err(Error::TooSmall { .. }) => println!("ssim=n/a"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn run_oracle_check(size: usize, factor: u32, seed: u64) -> Result<(), Failure> {
    let outcomes = run_certification(size, factor as usize, seed)?;
    let mut failed = 0;
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} {} (value {:.3e}, tolerance {:.0e})", o.name, o.value, o.tolerance);
        failed += usize::from(!o.passed);
    }
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        return Err(Failure::Certification(failed));
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Degrade {
            input,
            factor,
            output,
            depth,
        } => run_degrade(&input, factor, &output, depth),
        Command::Sr(args) => run_sr(&args),
        Command::Kriging { model, output } => run_kriging(&model, &output),
        Command::Metrics { a, b, peak } => run_metrics(&a, &b, peak),
        Command::OracleCheck { size, factor, seed } => run_oracle_check(size, factor, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("gaussian-sr: usage error: {msg}"),
                Failure::Core(e) => eprintln!("gaussian-sr: {e}"),
                Failure::Certification(n) => eprintln!("gaussian-sr: {n} oracle check(s) failed"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
