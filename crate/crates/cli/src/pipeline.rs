//! The paint pipeline shared by `painter paint` and the job service, so both
//! produce the same bytes for the same spec, config and seed.

use std::path::Path;

use anyhow::{bail, Context};
use painter_core::canvas::{encode_png, rasterize, Composition, Rasterized};
use painter_core::denoiser::{GmmDenoiser, GmmModel, ToyDenoiser};
use painter_core::schedule::DEFAULT_STEPS;
use painter_core::{
    build_resample_plan, count_ops, paint, Denoiser, KnownNoiseIndex, Manifest, OpCountReport, PaintObserver,
    ResampleConfig, ResamplePlan, SamplerOptions, Schedule, Snapshot, TrajectoryNoise, VarianceMode,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_DENOISER: &str = "gmm:standard";
/// Preview frames requested by the service when a job does not say.
pub const DEFAULT_PREVIEW_FRAMES: usize = 40;

/// Everything besides the composition that determines a paint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PaintConfig {
    #[serde(flatten)]
    pub resample: ResampleConfig,
    pub seed: u64,
    /// `gmm:standard`, `gmm:<json>`, `gmm:<path>` or a toy weights file.
    pub denoiser: String,
    /// Schedule length; defaults to the denoiser's own T, else 250.
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceMode>,
    pub clamp_x0: bool,
    pub known_noise_index: KnownNoiseIndex,
    /// Roughly this many preview frames; 0 for none.
    pub snapshots: usize,
}

impl Default for PaintConfig {
    fn default() -> Self {
        PaintConfig {
            resample: ResampleConfig::default(),
            seed: 0,
            denoiser: DEFAULT_DENOISER.to_string(),
            steps: None,
            variance: None,
            clamp_x0: true,
            known_noise_index: KnownNoiseIndex::default(),
            snapshots: 0,
        }
    }
}

/// Resolve a denoiser spec and build the matching schedule.
pub fn load_denoiser(
    spec: &str,
    steps: Option<usize>,
    variance: Option<VarianceMode>,
) -> anyhow::Result<(Box<dyn Denoiser>, Schedule)> {
    if let Some(rest) = spec.strip_prefix("gmm:") {
        let model = if rest == "standard" {
            GmmModel::standard_normal()
        } else if rest.trim_start().starts_with('{') {
            serde_json::from_str(rest).context("bad inline GMM")?
        } else {
            let text = std::fs::read_to_string(rest).with_context(|| format!("cannot read GMM file {rest}"))?;
            serde_json::from_str(&text).with_context(|| format!("bad GMM file {rest}"))?
        };
        let schedule = Schedule::linear(steps.unwrap_or(DEFAULT_STEPS))?;
        let mut d = GmmDenoiser::new(model, schedule.clone());
        if let Some(v) = variance {
            d = d.with_variance(v);
        }
        return Ok((Box::new(d), schedule));
    }
    let mut net = ToyDenoiser::load(spec)?;
    let own = net.header().steps;
    if let Some(t) = steps {
        if t != own {
            bail!("{spec} was trained for T={own}, not T={t}");
        }
    }
    if let Some(v) = variance {
        net = net.with_variance(v);
    }
    Ok((Box::new(net), Schedule::linear(own)?))
}

/// A paint ready to run: inputs resolved and validated.
pub struct PreparedPaint {
    pub raster: Rasterized,
    pub denoiser: Box<dyn Denoiser>,
    pub schedule: Schedule,
    pub plan: ResamplePlan,
    pub options: SamplerOptions,
    pub config: PaintConfig,
}

impl PreparedPaint {
    pub fn new(raster: Rasterized, config: &PaintConfig) -> anyhow::Result<Self> {
        let (denoiser, schedule) = load_denoiser(&config.denoiser, config.steps, config.variance)?;
        let plan = build_resample_plan(&config.resample, schedule.steps())?;
        let n_dn = count_ops(&plan).n_dn;
        let snapshot_every = (config.snapshots > 0).then(|| (n_dn / config.snapshots as u64).max(1));
        let options =
            SamplerOptions { clamp_x0: config.clamp_x0, known_noise_index: config.known_noise_index, snapshot_every };
        if let Some(s) = denoiser.shape() {
            if s != raster.input.shape() {
                bail!("denoiser expects {s} images, the canvas is {}", raster.input.shape());
            }
        }
        Ok(PreparedPaint { raster, denoiser, schedule, plan, options, config: config.clone() })
    }

    pub fn from_composition(comp: &Composition, config: &PaintConfig) -> anyhow::Result<Self> {
        Self::new(rasterize(comp)?, config)
    }

    pub fn ops(&self) -> OpCountReport {
        count_ops(&self.plan)
    }

    /// Always trajectory 0 of the seed.
    pub fn run(&self, observer: &mut dyn PaintObserver) -> painter_core::Result<PaintOutcome> {
        let mut noise = TrajectoryNoise::new(self.config.seed, 0);
        let result = paint(
            &self.raster.input,
            self.denoiser.as_ref(),
            &self.schedule,
            &self.plan,
            &mut noise,
            &self.options,
            observer,
        )?;
        let manifest = Manifest {
            seed: self.config.seed,
            trajectory: 0,
            config: self.config.resample,
            options: self.options,
            schedule_digest: self.schedule.digest(),
            denoiser_digest: self.denoiser.digest(),
            shape: self.raster.input.shape(),
            ops: result.ops,
        };
        Ok(PaintOutcome {
            png: encode_png(&result.image)?,
            report: PaintReport {
                strategy: self.config.resample.strategy.to_string(),
                lambda: self.config.resample.jump_length,
                repeats: self.config.resample.repeats,
                steps: self.schedule.steps(),
                ops: result.ops,
                warnings: self.raster.warnings.clone(),
            },
            manifest,
            snapshots: result.snapshots,
        })
    }
}

/// Op-count report written next to a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintReport {
    pub strategy: String,
    pub lambda: usize,
    pub repeats: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(flatten)]
    pub ops: OpCountReport,
    pub warnings: Vec<String>,
}

pub struct PaintOutcome {
    pub png: Vec<u8>,
    pub report: PaintReport,
    pub manifest: Manifest,
    pub snapshots: Vec<Snapshot>,
}

/// `<dir>/<stem><suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}"))
}
