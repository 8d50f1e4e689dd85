//! Data generation and preprocessing: the fluid-flow system, numerical
//! integration, synthetic pseudo-periodic pixel grids, state
//! augmentation, Cressman interpolation and subsampling.

mod csvio;
mod synth;

pub use csvio::{read_grid, read_series, write_grid, write_series};
pub use synth::{synth_pseudo_periodic, SynthSpec};

use crate::mat::Mat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynError {
    #[error("times must be strictly increasing")]
    UnsortedTimes,
    #[error("non-finite value in trajectory (blow-up)")]
    NonFinite,
    #[error("series has no observed entries")]
    EmptySeries,
    #[error("subsampling left fewer than two points or dropped t=0")]
    DegenerateMask,
    #[error("state augmentation requires a fully-observed, regularly-sampled series")]
    IrregularInput,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("series I/O: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, DynError>;

/// Timestamped multichannel observations with an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    /// (T+1) x C, row per time stamp.
    values: Mat,
    /// true = observed.
    mask: Vec<bool>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Mat, mask: Vec<bool>) -> Result<Self> {
        if times.len() != values.rows() || mask.len() != times.len() {
            return Err(DynError::Shape(format!(
                "{} times, {} rows, {} mask entries",
                times.len(),
                values.rows(),
                mask.len()
            )));
        }
        if times.is_empty() {
            return Err(DynError::EmptySeries);
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(DynError::UnsortedTimes);
        }
        for (i, &obs) in mask.iter().enumerate() {
            if obs && values.row(i).iter().any(|v| !v.is_finite()) {
                return Err(DynError::NonFinite);
            }
        }
        Ok(TimeSeries { times, values, mask })
    }

    pub fn fully_observed(times: Vec<f64>, values: Mat) -> Result<Self> {
        let mask = vec![true; times.len()];
        TimeSeries::new(times, values, mask)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Sub-series over rows `a..b` with times rebased to start at zero.
    pub fn window(&self, a: usize, b: usize) -> Result<TimeSeries> {
        if a >= b || b > self.len() {
            return Err(DynError::Shape(format!("window {a}..{b} out of range")));
        }
        let t0 = self.times[a];
        let times: Vec<f64> = self.times[a..b].iter().map(|t| t - t0).collect();
        TimeSeries::new(times, self.values.row_block(a, b - a), self.mask[a..b].to_vec())
    }
}

/// Spatial stack of per-pixel series sharing one time axis.
#[derive(Debug, Clone)]
pub struct PixelGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    series: Vec<TimeSeries>,
}

impl PixelGrid {
    pub fn new(height: usize, width: usize, series: Vec<TimeSeries>) -> Result<Self> {
        if series.len() != height * width || series.is_empty() {
            return Err(DynError::Shape(format!(
                "{} series for a {height}x{width} grid",
                series.len()
            )));
        }
        let first = &series[0];
        for s in &series {
            if s.times() != first.times() || s.mask() != first.mask() {
                return Err(DynError::Shape(
                    "pixel series must share times and mask".into(),
                ));
            }
            if s.channels() != first.channels() {
                return Err(DynError::Shape("pixel series must share channels".into()));
            }
        }
        Ok(PixelGrid {
            height,
            width,
            channels: first.channels(),
            series,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.series.len()
    }

    pub fn n_steps(&self) -> usize {
        self.series[0].len()
    }

    pub fn times(&self) -> &[f64] {
        self.series[0].times()
    }

    pub fn mask(&self) -> &[bool] {
        self.series[0].mask()
    }

    pub fn pixel(&self, idx: usize) -> &TimeSeries {
        &self.series[idx]
    }

    pub fn pixels(&self) -> &[TimeSeries] {
        &self.series
    }

    /// Frame at time index `t` as an N×C matrix, pixels in row-major order.
    pub fn frame(&self, t: usize) -> Mat {
        let n = self.n_pixels();
        let c = self.channels;
        let mut out = Mat::zeros(n, c);
        for (p, s) in self.series.iter().enumerate() {
            out.row_mut(p).copy_from_slice(s.row(t));
        }
        out
    }

    /// Replaces the shared mask on every pixel series.
    pub fn with_mask(&self, mask: Vec<bool>) -> Result<PixelGrid> {
        if mask.len() != self.n_steps() {
            return Err(DynError::Shape("mask length mismatch".into()));
        }
        let series = self
            .series
            .iter()
            .map(|s| TimeSeries::new(s.times().to_vec(), s.values().clone(), mask.clone()))
            .collect::<Result<Vec<_>>>()?;
        PixelGrid::new(self.height, self.width, series)
    }
}

/// State stacked with its discrete derivative, one row shorter than the
/// source and offset by one step.
#[derive(Debug, Clone)]
pub struct AugmentedSeries {
    inner: TimeSeries,
    source_channels: usize,
}

impl AugmentedSeries {
    pub fn series(&self) -> &TimeSeries {
        &self.inner
    }

    pub fn into_series(self) -> TimeSeries {
        self.inner
    }

    pub fn source_channels(&self) -> usize {
        self.source_channels
    }

    /// Drops the derivative half, recovering the source shifted by one step.
    pub fn state_block(&self) -> Mat {
        self.inner
            .values()
            .block(0, 0, self.inner.len(), self.source_channels)
    }
}

/// Fluid flow past a cylinder reduced to its 3-dimensional attractor.
#[derive(Debug, Clone, Copy)]
pub struct FluidFlowParams {
    pub mu: f64,
}

impl Default for FluidFlowParams {
    fn default() -> Self {
        FluidFlowParams { mu: 0.1 }
    }
}

pub fn fluid_flow_rhs(state: &[f64; 3], p: &FluidFlowParams) -> [f64; 3] {
    let [x, y, z] = *state;
    [
        p.mu * x - y - x * z,
        p.mu * y + x - y * z,
        -y + x * x + y * y,
    ]
}

/// Classical 4th-order Runge-Kutta over a fixed grid 0, dt, 2dt, ...
pub fn integrate_rk4(
    rhs: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    dt: f64,
    steps: usize,
) -> Result<TimeSeries> {
    assert!(dt > 0.0, "dt must be positive");
    let dim = x0.len();
    let mut values = Mat::zeros(steps + 1, dim);
    let mut times = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    values.row_mut(0).copy_from_slice(&x);
    times.push(0.0);
    let mut scratch = vec![0.0; dim];
    for s in 1..=steps {
        let k1 = rhs(&x);
        for i in 0..dim {
            scratch[i] = x[i] + 0.5 * dt * k1[i];
        }
        let k2 = rhs(&scratch);
        for i in 0..dim {
            scratch[i] = x[i] + 0.5 * dt * k2[i];
        }
        let k3 = rhs(&scratch);
        for i in 0..dim {
            scratch[i] = x[i] + dt * k3[i];
        }
        let k4 = rhs(&scratch);
        for i in 0..dim {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !x[i].is_finite() || x[i].abs() > 1e12 {
                return Err(DynError::NonFinite);
            }
        }
        values.row_mut(s).copy_from_slice(&x);
        times.push(s as f64 * dt);
    }
    TimeSeries::fully_observed(times, values)
}

/// Stacks each state with its discrete derivative:
/// `y_t = (x_{t+1}, x_{t+1} - x_t)`. Defined only for fully-observed,
/// regularly-sampled series.
pub fn augment_state(s: &TimeSeries) -> Result<AugmentedSeries> {
    if !s.is_fully_observed() || s.len() < 2 {
        return Err(DynError::IrregularInput);
    }
    let dts: Vec<f64> = s.times().windows(2).map(|w| w[1] - w[0]).collect();
    let dt0 = dts[0];
    if dts.iter().any(|&d| (d - dt0).abs() > 1e-9 * dt0.max(1.0)) {
        return Err(DynError::IrregularInput);
    }
    let c = s.channels();
    let rows = s.len() - 1;
    let mut values = Mat::zeros(rows, 2 * c);
    for t in 0..rows {
        let cur = s.row(t + 1);
        let prev = s.row(t);
        let out = values.row_mut(t);
        out[..c].copy_from_slice(cur);
        for j in 0..c {
            out[c + j] = cur[j] - prev[j];
        }
    }
    let times = s.times()[1..].to_vec();
    Ok(AugmentedSeries {
        inner: TimeSeries::fully_observed(times, values)?,
        source_channels: c,
    })
}

/// Fills missing rows by Gaussian-weighted averaging of observed rows:
/// `w_k = exp(-(t - t_k)^2 / (2 radius^2))`. Observed rows pass through
/// exactly.
pub fn cressman_interpolate(s: &TimeSeries, radius: f64) -> Result<TimeSeries> {
    assert!(radius > 0.0, "radius must be positive");
    if s.observed_count() == 0 {
        return Err(DynError::EmptySeries);
    }
    let c = s.channels();
    let mut values = s.values().clone();
    let observed: Vec<usize> = (0..s.len()).filter(|&i| s.mask()[i]).collect();
    for t in 0..s.len() {
        if s.mask()[t] {
            continue;
        }
        let tt = s.times()[t];
        let mut wsum = 0.0;
        let mut acc = vec![0.0; c];
        for &k in &observed {
            let dt = tt - s.times()[k];
            let w = (-dt * dt / (2.0 * radius * radius)).exp();
            wsum += w;
            for (a, v) in acc.iter_mut().zip(s.row(k)) {
                *a += w * v;
            }
        }
        if wsum <= 0.0 {
            // All weights underflowed; fall back to the nearest observation.
            let nearest = *observed
                .iter()
                .min_by(|&&a, &&b| {
                    let da = (s.times()[a] - tt).abs();
                    let db = (s.times()[b] - tt).abs();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            values.row_mut(t).copy_from_slice(s.row(nearest));
        } else {
            for (o, a) in values.row_mut(t).iter_mut().zip(&acc) {
                *o = a / wsum;
            }
        }
    }
    TimeSeries::fully_observed(s.times().to_vec(), values)
}

/// Row-retention rule for `subsample`.
#[derive(Debug, Clone)]
pub enum Keep {
    All,
    /// Retain rows so the sampling frequency becomes `target` (the
    /// native-to-target ratio must be a whole stride).
    Frequency(f64),
    /// Keep each row independently with this probability; row 0 always
    /// stays.
    RandomFraction(f64),
    /// Explicit per-row retention.
    Mask(Vec<bool>),
}

/// Drops rows from a series; times are preserved (not rebased) so the
/// result stays aligned with the source timeline.
pub fn subsample(s: &TimeSeries, keep: &Keep, seed: u64) -> Result<TimeSeries> {
    let retain: Vec<bool> = match keep {
        Keep::All => vec![true; s.len()],
        Keep::Frequency(target) => {
            assert!(*target > 0.0);
            if s.len() < 2 {
                return Err(DynError::DegenerateMask);
            }
            let native_dt = s.times()[1] - s.times()[0];
            let stride_f = 1.0 / (target * native_dt);
            let stride = stride_f.round();
            if stride < 1.0 || (stride_f - stride).abs() > 1e-6 {
                return Err(DynError::DegenerateMask);
            }
            let stride = stride as usize;
            (0..s.len()).map(|i| i % stride == 0).collect()
        }
        Keep::RandomFraction(frac) => {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..s.len())
                .map(|i| i == 0 || rng.gen::<f64>() < *frac)
                .collect()
        }
        Keep::Mask(m) => {
            if m.len() != s.len() {
                return Err(DynError::Shape("keep mask length mismatch".into()));
            }
            m.clone()
        }
    };
    if !retain[0] || retain.iter().filter(|&&r| r).count() < 2 {
        return Err(DynError::DegenerateMask);
    }
    let idx: Vec<usize> = (0..s.len()).filter(|&i| retain[i]).collect();
    let times: Vec<f64> = idx.iter().map(|&i| s.times()[i]).collect();
    let mut values = Mat::zeros(idx.len(), s.channels());
    let mut mask = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        values.row_mut(r).copy_from_slice(s.row(i));
        mask.push(s.mask()[i]);
    }
    TimeSeries::new(times, values, mask)
}

/// Deterministic sub-seed derivation (FNV-1a over a tag and index).
pub fn derive_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in root
        .to_le_bytes()
        .iter()
        .chain(tag.as_bytes())
        .chain(index.to_le_bytes().iter())
    {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests;
