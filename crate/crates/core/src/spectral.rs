//! Frequency-band view of the forward process.
//!
//! Because the DFT is linear, `F(x_t) = √ᾱ_t F(x0) + √(1−ᾱ_t) F(ε)`, so in band `b`
//! the expected signal-to-noise ratio is
//! `snr(b, t) = ᾱ_t·P_x(b) / ((1 − ᾱ_t)·P_ε(b))`. Natural images concentrate power
//! at low frequencies, so high bands reach `snr ≤ 1` (are "corrupted") at smaller
//! `t` than low bands.
//!
//! Conventions: unnormalized DFT, power `|F(k)|²` averaged over channels; radial
//! frequency in cycles per image, `|f| = √(fx² + fy²)` with signed frequencies;
//! `n` bands linear in `|f|` over `(0, N/2]` where `N = min(h, w)`. Bins beyond
//! `N/2` (the corners of the spectrum) fold into the top band so every non-DC bin
//! is counted exactly once.

use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::GaussianNoiseSource;
use crate::schedule::Schedule;
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_BANDS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSpectrum {
    pub height: usize,
    pub width: usize,
    /// `n + 1` edges; band `b` covers `(edges[b], edges[b + 1]]`.
    pub band_edges: Vec<f64>,
    /// Mean `|F|²` per band.
    pub power: Vec<f64>,
    /// DFT bins per band.
    pub counts: Vec<usize>,
    /// `|F(0)|²`.
    pub dc_power: f64,
}

impl RadialSpectrum {
    pub fn bands(&self) -> usize {
        self.power.len()
    }

    pub fn band_center(&self, b: usize) -> f64 {
        0.5 * (self.band_edges[b] + self.band_edges[b + 1])
    }

    /// Σ_b power·count: all non-DC power.
    pub fn total_ac_power(&self) -> f64 {
        self.power.iter().zip(&self.counts).map(|(p, &c)| p * c as f64).sum()
    }

    fn same_grid(&self, other: &RadialSpectrum) -> bool {
        self.height == other.height && self.width == other.width && self.band_edges == other.band_edges
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionProfile {
    #[serde(rename = "T")]
    pub steps: usize,
    pub band_centers: Vec<f64>,
    /// `snr[b][t − 1]`.
    pub snr: Vec<Vec<f64>>,
    /// Smallest `t` with `snr ≤ 1`, or `T + 1` if the band never crosses.
    pub crossover: Vec<usize>,
}

#[derive(Serialize)]
struct CrossoverSummary {
    #[serde(rename = "T")]
    steps: usize,
    bands: Vec<BandCrossover>,
}

#[derive(Serialize)]
struct BandCrossover {
    band: usize,
    frequency: f64,
    crossover: usize,
}

impl CorruptionProfile {
    /// `band,t,snr` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,t,snr\n");
        for (b, row) in self.snr.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let _ = writeln!(out, "{b},{},{v:e}", i + 1);
            }
        }
        out
    }

    /// `band,frequency,crossover` rows, one per band.
    pub fn crossover_csv(&self) -> String {
        let mut out = String::from("band,frequency,crossover\n");
        for (b, (f, c)) in self.band_centers.iter().zip(&self.crossover).enumerate() {
            let _ = writeln!(out, "{b},{f},{c}");
        }
        out
    }

    /// `{"T": .., "bands": [{"band", "frequency", "crossover"}, ..]}`.
    pub fn summary_json(&self) -> String {
        let summary = CrossoverSummary {
            steps: self.steps,
            bands: self
                .crossover
                .iter()
                .enumerate()
                .map(|(band, &crossover)| BandCrossover { band, frequency: self.band_centers[band], crossover })
                .collect(),
        };
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    }

    /// Text heat table: one row per band, `columns` sampled timesteps, shading by log10 snr.
    pub fn heat_table(&self, columns: usize) -> String {
        const SHADES: [char; 6] = ['@', '#', '*', '+', '.', ' '];
        let columns = columns.clamp(1, self.steps);
        let ts: Vec<usize> = (0..columns).map(|i| 1 + i * (self.steps - 1) / (columns - 1).max(1)).collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "band  freq   cross | snr over t = {} .. {} (@ >= 100, # >= 10, * >= 1, + >= 0.1, . >= 0.01)",
            ts[0],
            ts[ts.len() - 1]
        );
        for (b, row) in self.snr.iter().enumerate() {
            let cells: String = ts
                .iter()
                .map(|&t| {
                    let v = row[t - 1];
                    let idx = if v >= 100.0 {
                        0
                    } else if v >= 10.0 {
                        1
                    } else if v >= 1.0 {
                        2
                    } else if v >= 0.1 {
                        3
                    } else if v >= 0.01 {
                        4
                    } else {
                        5
                    };
                    SHADES[idx]
                })
                .collect();
            let _ = writeln!(out, "{b:>4} {:>6.2} {:>6} | {cells}", self.band_centers[b], self.crossover[b]);
        }
        out
    }
}

/// Channel-averaged `|F(k)|²` of a 2-D image, row-major `h × w`.
fn power_grid(image: &Tensor) -> Vec<f64> {
    let Shape { channels, height, width } = image.shape();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(width);
    let col_fft = planner.plan_fft_forward(height);
    let mut power = vec![0.0; height * width];
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for c in 0..channels {
        let plane = image.channel(c);
        let mut buf: Vec<Complex<f64>> = plane.as_slice().iter().map(|&v| Complex::new(v, 0.0)).collect();
        for row in buf.chunks_exact_mut(width) {
            row_fft.process(row);
        }
        for x in 0..width {
            for y in 0..height {
                col[y] = buf[y * width + x];
            }
            col_fft.process(&mut col);
            for y in 0..height {
                buf[y * width + x] = col[y];
            }
        }
        for (p, v) in power.iter_mut().zip(&buf) {
            *p += v.norm_sqr();
        }
    }
    power.iter_mut().for_each(|p| *p /= channels as f64);
    power
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn radius(y: usize, x: usize, height: usize, width: usize) -> f64 {
    signed_freq(y, height).hypot(signed_freq(x, width))
}

fn nyquist(height: usize, width: usize) -> f64 {
    height.min(width) as f64 / 2.0
}

fn check_image(image: &Tensor) -> Result<()> {
    let s = image.shape();
    if s.height < 8 || s.width < 8 || s.channels == 0 {
        return Err(Error::invalid(format!("spectral analysis needs at least 8x8 pixels, got {s}")));
    }
    Ok(())
}

pub fn radial_power_spectrum(image: &Tensor, n_bands: usize) -> Result<RadialSpectrum> {
    check_image(image)?;
    if n_bands < 4 {
        return Err(Error::invalid(format!("need at least 4 bands, got {n_bands}")));
    }
    let Shape { height, width, .. } = image.shape();
    let power = power_grid(image);
    let nyq = nyquist(height, width);
    let band_edges: Vec<f64> = (0..=n_bands).map(|b| nyq * b as f64 / n_bands as f64).collect();
    let mut sums = vec![0.0; n_bands];
    let mut counts = vec![0usize; n_bands];
    for y in 0..height {
        for x in 0..width {
            if y == 0 && x == 0 {
                continue;
            }
            let r = radius(y, x, height, width);
            let b = ((r / nyq * n_bands as f64).ceil() as usize).clamp(1, n_bands) - 1;
            sums[b] += power[y * width + x];
            counts[b] += 1;
        }
    }
    let power_per_band = sums.iter().zip(&counts).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect();
    Ok(RadialSpectrum { height, width, band_edges, power: power_per_band, counts, dc_power: power[0] })
}

/// Expected spectrum of i.i.d. `N(0, σ²)` pixels on the same grid: flat at `σ²·h·w`.
pub fn analytic_noise_spectrum(like: &RadialSpectrum, sigma: f64) -> RadialSpectrum {
    let level = sigma * sigma * (like.height * like.width) as f64;
    RadialSpectrum {
        power: like.counts.iter().map(|&c| if c == 0 { 0.0 } else { level }).collect(),
        dc_power: level,
        ..like.clone()
    }
}

/// Monte-Carlo noise spectrum: the mean over `draws` white-noise images.
pub fn sampled_noise_spectrum(
    shape: Shape,
    n_bands: usize,
    draws: usize,
    noise: &mut GaussianNoiseSource,
) -> Result<RadialSpectrum> {
    if draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let mut acc: Option<RadialSpectrum> = None;
    for _ in 0..draws {
        let s = radial_power_spectrum(&noise.tensor(shape), n_bands)?;
        match acc.as_mut() {
            None => acc = Some(s),
            Some(a) => {
                a.power.iter_mut().zip(&s.power).for_each(|(x, y)| *x += y);
                a.dc_power += s.dc_power;
            }
        }
    }
    let mut acc = acc.expect("draws > 0");
    acc.power.iter_mut().for_each(|p| *p /= draws as f64);
    acc.dc_power /= draws as f64;
    Ok(acc)
}

pub fn corruption_profile(
    signal: &RadialSpectrum,
    schedule: &Schedule,
    noise: &RadialSpectrum,
) -> Result<CorruptionProfile> {
    if !signal.same_grid(noise) {
        return Err(Error::invalid("signal and noise spectra use different band grids"));
    }
    if let Some(b) = noise.power.iter().position(|&p| p.is_nan() || p <= 0.0) {
        return Err(Error::invalid(format!("noise spectrum has no power in band {b}")));
    }
    let steps = schedule.steps();
    let snr: Vec<Vec<f64>> = signal
        .power
        .iter()
        .zip(&noise.power)
        .map(|(&px, &pe)| {
            (1..=steps)
                .map(|t| {
                    let ab = schedule.alpha_bar(t);
                    ab * px / ((1.0 - ab) * pe)
                })
                .collect()
        })
        .collect();
    let crossover = snr.iter().map(|row| row.iter().position(|&v| v <= 1.0).map_or(steps + 1, |i| i + 1)).collect();
    Ok(CorruptionProfile {
        steps,
        band_centers: (0..signal.bands()).map(|b| signal.band_center(b)).collect(),
        snr,
        crossover,
    })
}

/// Fraction of non-DC power at radial frequencies above `cutoff_fraction · N/2`.
/// Zero for images with no AC power.
pub fn highband_energy(image: &Tensor, cutoff_fraction: f64) -> Result<f64> {
    if !(cutoff_fraction > 0.0 && cutoff_fraction < 1.0) {
        return Err(Error::invalid(format!("cutoff fraction {cutoff_fraction} outside (0, 1)")));
    }
    let Shape { height, width, .. } = image.shape();
    if height == 0 || width == 0 {
        return Err(Error::invalid("empty image"));
    }
    let power = power_grid(image);
    let cutoff = cutoff_fraction * nyquist(height, width);
    let mut high = 0.0;
    let mut total = 0.0;
    for y in 0..height {
        for x in 0..width {
            if y == 0 && x == 0 {
                continue;
            }
            let p = power[y * width + x];
            total += p;
            if radius(y, x, height, width) > cutoff {
                high += p;
            }
        }
    }
    // rounding leaves ~1e-30 of "power" in a constant image
    if total <= 1e-20 * (power[0] + 1.0) {
        return Ok(0.0);
    }
    Ok(high / total)
}

/// Synthetic image whose expected radial power falls off as `|f|^(-exponent)`:
/// random phases, amplitudes `|f|^(-exponent/2)`, normalized to unit pixel std.
pub fn power_law_image(size: usize, exponent: f64, noise: &mut GaussianNoiseSource) -> Tensor {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(size);
    let mut buf = vec![Complex::new(0.0, 0.0); size * size];
    for y in 0..size {
        for x in 0..size {
            let r = radius(y, x, size, size);
            if r == 0.0 {
                continue;
            }
            let amp = r.powf(-exponent / 2.0);
            buf[y * size + x] = Complex::new(amp * noise.next_normal(), amp * noise.next_normal());
        }
    }
    for row in buf.chunks_exact_mut(size) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); size];
    for x in 0..size {
        for y in 0..size {
            col[y] = buf[y * size + x];
        }
        fft.process(&mut col);
        for y in 0..size {
            buf[y * size + x] = col[y];
        }
    }
    let vals: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
    Tensor::from_vec(Shape::new(1, size, size), vals.iter().map(|v| (v - mean) / std).collect()).expect("size matches")
}
