//! Synthetic pseudo-periodic pixel grids.
//!
//! Each pixel channel is a smooth sum of 2-4 harmonics of `2*pi/period`
//! with per-pixel amplitudes and phases drawn from spatially-correlated
//! random fields, plus small additive noise. Neighboring pixels are
//! similar, which is what the spatial prior exploits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mat::Mat;

use super::{derive_seed, PixelGrid, Result, TimeSeries};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub n_steps: usize,
    /// Pseudo-period in time steps (cadence is one step).
    pub period: f64,
    pub min_harmonics: usize,
    pub max_harmonics: usize,
    pub noise_sigma: f64,
}

impl SynthSpec {
    pub fn new(height: usize, width: usize, channels: usize, n_steps: usize, period: f64) -> Self {
        assert!(period > 0.0, "period must be positive");
        SynthSpec {
            height,
            width,
            channels,
            n_steps,
            period,
            min_harmonics: 2,
            max_harmonics: 4,
            noise_sigma: 0.0,
        }
    }
}

/// Smooth random field over the grid: a few Gaussian bumps with random
/// centers and weights.
struct BumpField {
    centers: Vec<(f64, f64)>,
    weights: Vec<f64>,
    radius: f64,
    offset: f64,
}

impl BumpField {
    fn sample(rng: &mut ChaCha8Rng, height: usize, width: usize, amplitude: f64, offset: f64) -> Self {
        let n_bumps = 6;
        let radius = ((height.max(width)) as f64 / 3.0).max(1.0);
        let centers = (0..n_bumps)
            .map(|_| {
                (
                    rng.gen_range(0.0..height as f64),
                    rng.gen_range(0.0..width as f64),
                )
            })
            .collect();
        let weights = (0..n_bumps)
            .map(|_| rng.gen_range(-amplitude..amplitude))
            .collect();
        BumpField {
            centers,
            weights,
            radius,
            offset,
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        let mut v = self.offset;
        for ((cr, cc), w) in self.centers.iter().zip(&self.weights) {
            let dr = r as f64 - cr;
            let dc = c as f64 - cc;
            v += w * (-(dr * dr + dc * dc) / (2.0 * self.radius * self.radius)).exp();
        }
        v
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller transform.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn synth_pseudo_periodic(spec: &SynthSpec, seed: u64) -> Result<PixelGrid> {
    let SynthSpec {
        height,
        width,
        channels,
        n_steps,
        period,
        min_harmonics,
        max_harmonics,
        noise_sigma,
    } = *spec;
    let omega = 2.0 * std::f64::consts::PI / period;

    // Per-channel harmonic structure with spatially-correlated
    // amplitude and phase fields.
    struct Harmonic {
        order: f64,
        amp: BumpField,
        phase: BumpField,
    }
    let mut per_channel: Vec<Vec<Harmonic>> = Vec::with_capacity(channels);
    for c in 0..channels {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "channel-fields", c as u64));
        let n_harm = if min_harmonics >= max_harmonics {
            min_harmonics.max(1)
        } else {
            rng.gen_range(min_harmonics..=max_harmonics)
        };
        let mut harmonics = Vec::with_capacity(n_harm);
        for h in 0..n_harm {
            let order = (h + 1) as f64;
            // Higher harmonics contribute progressively less.
            let base_amp = 0.5 / order;
            let amp = BumpField::sample(&mut rng, height, width, 0.6 * base_amp, base_amp);
            let phase_offset = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let phase = BumpField::sample(
                &mut rng,
                height,
                width,
                std::f64::consts::PI / 2.0,
                phase_offset,
            );
            harmonics.push(Harmonic { order, amp, phase });
        }
        per_channel.push(harmonics);
    }

    let times: Vec<f64> = (0..n_steps).map(|t| t as f64).collect();
    let mut series = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                "pixel-noise",
                (r * width + c) as u64,
            ));
            let mut values = Mat::zeros(n_steps, channels);
            for (ch, harmonics) in per_channel.iter().enumerate() {
                for (t, &time) in times.iter().enumerate() {
                    let mut v = 0.0;
                    for h in harmonics {
                        v += h.amp.at(r, c) * (h.order * omega * time + h.phase.at(r, c)).sin();
                    }
                    values[(t, ch)] = v;
                }
            }
            if noise_sigma > 0.0 {
                for v in values.data_mut() {
                    *v += noise_sigma * gaussian(&mut noise_rng);
                }
            }
            series.push(TimeSeries::fully_observed(times.clone(), values)?);
        }
    }
    PixelGrid::new(height, width, series)
}
