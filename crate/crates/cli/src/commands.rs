use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use painter_core::canvas::{load_mask, load_patch, load_spec, save_image, Rasterized};
use painter_core::datasets::{constant_images, two_gaussian_images, two_shapes};
use painter_core::denoiser::{train_toy_denoiser, TrainConfig};
use painter_core::sampler::NoObserver;
use painter_core::schedule::DEFAULT_STEPS;
use painter_core::spectral::{analytic_noise_spectrum, corruption_profile, power_law_image, radial_power_spectrum};
use painter_core::{
    build_resample_plan, count_ops, unconditional_sample, CompositionInput, GaussianNoiseSource, KnownNoiseIndex,
    ResampleConfig, SamplerOptions, Schedule, Shape, Strategy, VarianceMode,
};

use crate::pipeline::{load_denoiser, sibling, PaintConfig, PreparedPaint, DEFAULT_DENOISER};
use crate::service::{api, default_workers, JobService, DEFAULT_QUEUE_CAPACITY};

#[derive(Debug, Parser)]
#[command(name = "painter", version, about = "Compose pictures with a diffusion model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fill the unknown part of a composition.
    Paint(PaintArgs),
    /// Print operation counts of resampling strategies.
    Opcount(OpcountArgs),
    /// Per-band signal-to-noise of the forward process.
    Spectral(SpectralArgs),
    /// Train the toy denoiser on a synthetic dataset.
    Train(TrainArgs),
    /// Draw unconditional samples.
    Sample(SampleArgs),
    /// Run the HTTP job service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    /// none, all, start:<t>, stop:<t> or window:<lo>:<hi>
    #[arg(long, default_value = "stop:100")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 10)]
    pub lambda: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
}

impl ResampleArgs {
    fn config(&self) -> ResampleConfig {
        ResampleConfig { jump_length: self.lambda, repeats: self.repeats, strategy: self.strategy }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["spec", "image"])))]
pub struct PaintArgs {
    /// CompositionSpec JSON; relative image paths resolve against its directory.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Known image; requires --mask.
    #[arg(long, requires = "mask", conflicts_with = "spec")]
    pub image: Option<PathBuf>,
    /// Grayscale PNG, white = keep.
    #[arg(long, requires = "image")]
    pub mask: Option<PathBuf>,
    #[command(flatten)]
    pub resample: ResampleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// gmm:standard, gmm:<json>, gmm:<path> or a toy weights file.
    #[arg(long, default_value = DEFAULT_DENOISER)]
    pub denoiser: String,
    /// Schedule length (default: the denoiser's, else 250).
    #[arg(long = "steps", short = 'T')]
    pub steps: Option<usize>,
    /// fixed_beta or fixed_beta_tilde
    #[arg(long)]
    pub variance: Option<VarianceMode>,
    /// Do not clamp the implied clean image to [-1, 1].
    #[arg(long)]
    pub no_clamp: bool,
    /// Noise level of the known region when merging into x_{t-1}: t-1 or t.
    #[arg(long, default_value = "t-1")]
    pub known_noise_index: KnownNoiseIndex,
    #[arg(long)]
    pub out: PathBuf,
    /// Op-count JSON (default: <out>.report.json).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Reproducibility manifest (default: <out>.manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Write about this many preview frames as <out>.snap-<k>.png.
    #[arg(long)]
    pub snapshots: Option<usize>,
}

#[derive(Debug, Args)]
pub struct OpcountArgs {
    /// One strategy; all four presets when omitted.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long, default_value_t = 10)]
    pub lambda: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long = "steps", short = 'T', default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    /// Analyze this PNG; otherwise a generated power-law image.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Radial power falls off as |f|^-exponent.
    #[arg(long, default_value_t = 2.0)]
    pub power_law: f64,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = painter_core::spectral::DEFAULT_BANDS)]
    pub bands: usize,
    #[arg(long = "steps", short = 'T', default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    /// band,frequency,crossover
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// band,t,snr for every band and timestep
    #[arg(long)]
    pub snr_csv: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub columns: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// two-shapes, two-gaussians or constant:<value>
    #[arg(long, default_value = "two-shapes")]
    pub dataset: String,
    #[arg(long, default_value_t = 256)]
    pub count: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "steps", short = 'T', default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long)]
    pub variance: Option<VarianceMode>,
    #[arg(long)]
    pub out: PathBuf,
    /// TrainReport JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, default_value = DEFAULT_DENOISER)]
    pub denoiser: String,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CxHxW; required unless the denoiser fixes it.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long = "steps", short = 'T')]
    pub steps: Option<usize>,
    #[arg(long)]
    pub variance: Option<VarianceMode>,
    #[arg(long)]
    pub no_clamp: bool,
    /// Write sample_<i>.png here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Write raw values as a JSON array of arrays.
    #[arg(long)]
    pub values: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PAINTER_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, env = "PAINTER_STORE", default_value = "painter-store")]
    pub store: PathBuf,
    /// Worker threads (default: cores, at most 4).
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: Option<u16>,
    #[arg(long, default_value_t = DEFAULT_QUEUE_CAPACITY)]
    pub queue: usize,
}

/// Errors the user can fix by changing the command line.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 1 for bad arguments, 2 for anything that went wrong while running.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    let invalid = e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(c.downcast_ref::<painter_core::Error>(), Some(painter_core::Error::InvalidArgument(_)))
    });
    if invalid {
        1
    } else {
        2
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Paint(a) => paint_cmd(a),
        Command::Opcount(a) => opcount_cmd(a),
        Command::Spectral(a) => spectral_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn paint_cmd(a: PaintArgs) -> anyhow::Result<()> {
    let raster = match (&a.spec, &a.image, &a.mask) {
        (Some(spec), _, _) => painter_core::rasterize(&load_spec(spec)?)?,
        (None, Some(image), Some(mask)) => {
            let pixels = load_patch(image)?.pixels;
            let s = pixels.shape();
            let mask = load_mask(mask, Some((s.height, s.width)))?.broadcast(s.channels)?;
            Rasterized { input: CompositionInput::new(pixels, mask)?, warnings: Vec::new() }
        }
        _ => return Err(usage("give --spec, or --image with --mask")),
    };
    for w in &raster.warnings {
        eprintln!("warning: {w}");
    }
    let config = PaintConfig {
        resample: a.resample.config(),
        seed: a.seed,
        denoiser: a.denoiser.clone(),
        steps: a.steps,
        variance: a.variance,
        clamp_x0: !a.no_clamp,
        known_noise_index: a.known_noise_index,
        snapshots: a.snapshots.unwrap_or(0),
    };
    let prepared = PreparedPaint::new(raster, &config).map_err(|e| usage(format!("{e:#}")))?;
    let out = prepared.run(&mut NoObserver)?;

    write(&a.out, &out.png)?;
    let report = a.report.clone().unwrap_or_else(|| sibling(&a.out, ".report.json"));
    write(&report, serde_json::to_string_pretty(&out.report)?)?;
    let manifest = a.manifest.clone().unwrap_or_else(|| sibling(&a.out, ".manifest.json"));
    write(&manifest, serde_json::to_string_pretty(&out.manifest)?)?;
    for snap in &out.snapshots {
        save_image(&snap.image, &sibling(&a.out, &format!(".snap-{:02}.png", snap.index)))?;
    }
    println!("{}", out.report.ops);
    Ok(())
}

fn opcount_cmd(a: OpcountArgs) -> anyhow::Result<()> {
    let strategies: Vec<Strategy> = match a.strategy {
        Some(s) => vec![s],
        None => Strategy::PRESETS.to_vec(),
    };
    let mut rows = Vec::new();
    for strategy in strategies {
        let config = ResampleConfig { jump_length: a.lambda, repeats: a.repeats, strategy };
        rows.push((strategy, count_ops(&build_resample_plan(&config, a.steps)?)));
    }
    if a.json {
        let json: Vec<_> = rows
            .iter()
            .map(|(s, ops)| serde_json::json!({ "strategy": s, "n_dn": ops.n_dn, "n_fwd": ops.n_fwd, "n_total": ops.n_total }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&json)?);
    } else if a.strategy.is_some() {
        println!("{}", rows[0].1);
    } else {
        for (s, ops) in rows {
            println!("{s}: {ops}");
        }
    }
    Ok(())
}

fn spectral_cmd(a: SpectralArgs) -> anyhow::Result<()> {
    let image = match &a.image {
        Some(path) => load_patch(path)?.pixels,
        None => power_law_image(a.size, a.power_law, &mut GaussianNoiseSource::new(a.seed, 0)),
    };
    let schedule = Schedule::linear(a.steps)?;
    let signal = radial_power_spectrum(&image, a.bands)?;
    let profile = corruption_profile(&signal, &schedule, &analytic_noise_spectrum(&signal, 1.0))?;
    if let Some(p) = &a.csv {
        write(p, profile.crossover_csv())?;
    }
    if let Some(p) = &a.snr_csv {
        write(p, profile.to_csv())?;
    }
    if let Some(p) = &a.json {
        write(p, profile.summary_json())?;
    }
    print!("{}", profile.heat_table(a.columns));
    Ok(())
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    if a.channels != 1 && a.channels != 3 {
        return Err(usage("--channels must be 1 or 3"));
    }
    let shape = Shape::new(a.channels, a.size, a.size);
    let data = match a.dataset.as_str() {
        "two-shapes" => two_shapes(a.count, shape, a.seed),
        "two-gaussians" => two_gaussian_images(a.count, shape, a.seed),
        other => match other.strip_prefix("constant:").map(str::parse::<f64>) {
            Some(Ok(v)) => constant_images(a.count, shape, v),
            _ => return Err(usage(format!("unknown dataset `{other}`"))),
        },
    };
    let schedule = Schedule::linear(a.steps)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed,
        variance: a.variance.unwrap_or_default(),
        ..TrainConfig::default()
    };
    let (net, report) = train_toy_denoiser(&data, &schedule, &config)?;
    for (i, (l, p)) in report.epoch_losses.iter().zip(&report.probe_losses).enumerate() {
        eprintln!("epoch {:>3}  loss {l:.5}  probe {p:.5}", i + 1);
    }
    net.save(&a.out)?;
    if let Some(p) = &a.report {
        write(p, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn parse_shape(s: &str) -> anyhow::Result<Shape> {
    let dims: Vec<usize> =
        s.split('x').map(str::parse).collect::<Result<_, _>>().map_err(|_| usage(format!("bad shape `{s}`")))?;
    match dims[..] {
        [c, h, w] if c * h * w > 0 => Ok(Shape::new(c, h, w)),
        _ => Err(usage(format!("shape must be CxHxW, got `{s}`"))),
    }
}

fn sample_cmd(a: SampleArgs) -> anyhow::Result<()> {
    let (denoiser, schedule) = load_denoiser(&a.denoiser, a.steps, a.variance).map_err(|e| usage(format!("{e:#}")))?;
    let shape = match (a.shape.as_deref().map(parse_shape).transpose()?, denoiser.shape()) {
        (Some(s), Some(own)) if s != own => bail!(usage(format!("denoiser produces {own}, not {s}"))),
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err(usage("--shape is required for this denoiser")),
    };
    let options = SamplerOptions { clamp_x0: !a.no_clamp, ..SamplerOptions::default() };
    let samples = unconditional_sample(denoiser.as_ref(), &schedule, shape, a.seed, a.n, &options)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (i, s) in samples.iter().enumerate() {
            save_image(s, &dir.join(format!("sample_{i:04}.png")))?;
        }
    }
    if let Some(p) = &a.values {
        let values: Vec<&[f64]> = samples.iter().map(|s| s.as_slice()).collect();
        write(p, serde_json::to_string(&values)?)?;
    }
    if a.out_dir.is_none() && a.values.is_none() {
        for s in &samples {
            println!("{}", serde_json::to_string(s.as_slice())?);
        }
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> anyhow::Result<()> {
    let service = JobService::start(&a.store, a.workers.map_or_else(default_workers, usize::from), a.queue)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener =
            tokio::net::TcpListener::bind(a.addr).await.with_context(|| format!("cannot bind {}", a.addr))?;
        eprintln!("painter: serving on http://{} (store {})", listener.local_addr()?, a.store.display());
        axum::serve(listener, api::router(service)).await?;
        anyhow::Ok(())
    })
}
