//! Synthetic wide-field calcium imaging: Gaussian cell footprints, refractory
//! Poisson spike trains smoothed by a Gaussian kernel, and additive noise.
//!
//! Placement, spiking and noise draw from separate seeded streams, so
//! changing `noise_sigma` rescales the same noise realization and leaves the
//! cells and events untouched.

use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RfError};
use crate::matrix::DataMatrix;
use crate::rng::{derive_seed, SplitMix64};

const MAX_RADIUS_DRAWS: usize = 1000;
const MAX_PLACEMENT_DRAWS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalciumParams {
    pub width: usize,
    pub height: usize,
    pub n_cells: usize,
    pub overlap_prob: f64,
    /// Spikes per time unit.
    pub rate: f64,
    /// Minimum gap between spikes, in time units.
    pub refractory: f64,
    pub t_frames: usize,
    pub noise_sigma: f64,
    pub frames_per_unit: f64,
    pub kernel_std_frames: f64,
    pub amplitude: f64,
    pub radius_mean: f64,
    pub radius_std: f64,
    pub seed: u64,
}

impl Default for CalciumParams {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            n_cells: 32,
            overlap_prob: 0.1,
            rate: 1.0,
            refractory: 0.3,
            t_frames: 500,
            noise_sigma: 0.03,
            frames_per_unit: 20.0,
            kernel_std_frames: 2.0,
            amplitude: 1.0,
            radius_mean: 1.0,
            radius_std: 0.1,
            seed: 0,
        }
    }
}

impl CalciumParams {
    /// 256×256 field of view with 512 cells.
    pub fn full_scale() -> Self {
        Self {
            width: 256,
            height: 256,
            n_cells: 512,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RfError::InvalidSpec(msg));
        if self.width == 0 || self.height == 0 || self.t_frames == 0 {
            return bad("image and movie dimensions must be positive".into());
        }
        if self.n_cells == 0 {
            return bad("n_cells must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.overlap_prob) {
            return bad(format!("overlap_prob {} outside [0, 1]", self.overlap_prob));
        }
        if !(self.rate > 0.0) || !(self.refractory >= 0.0) {
            return bad("rate must be positive and refractory nonnegative".into());
        }
        if !(self.frames_per_unit > 0.0) || !(self.kernel_std_frames > 0.0) {
            return bad("frames_per_unit and kernel_std_frames must be positive".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.radius_std >= 0.0) || !(self.amplitude > 0.0) {
            return bad("noise_sigma and radius_std must be nonnegative, amplitude positive".into());
        }
        Ok(())
    }
}

/// Ground truth for one synthetic recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellScene {
    pub params: CalciumParams,
    /// `(x, y)` in pixels; pixel `(row, col)` sits at `(col, row)`.
    pub centers: Vec<(f64, f64)>,
    pub radii: Vec<f64>,
    /// Spike times per cell, in frames.
    pub events: Vec<Vec<f64>>,
    #[serde(skip)]
    pub profiles: DataMatrix,
    /// `T×N_c`.
    #[serde(skip)]
    pub traces: DataMatrix,
}

impl CellScene {
    pub fn n_pixels(&self) -> usize {
        self.params.width * self.params.height
    }

    pub fn profile(&self, c: usize) -> &[f64] {
        self.profiles.real_column(c).expect("real profiles")
    }

    pub fn trace(&self, c: usize) -> &[f64] {
        self.traces.real_column(c).expect("real traces")
    }

    /// Ground-truth sidecar: parameters, centers, radii and events.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

fn draw_radius(rng: &mut SplitMix64, p: &CalciumParams) -> Result<f64> {
    let dist = Normal::new(p.radius_mean, p.radius_std)
        .map_err(|e| RfError::InvalidSpec(format!("radius distribution: {e}")))?;
    for _ in 0..MAX_RADIUS_DRAWS {
        let r = dist.sample(rng);
        if r > 0.0 {
            return Ok(r);
        }
    }
    Err(RfError::InvalidSpec(format!(
        "no positive radius after {MAX_RADIUS_DRAWS} draws"
    )))
}

fn place(rng: &mut SplitMix64, p: &CalciumParams, prev: Option<(f64, f64)>, r: f64) -> (f64, f64) {
    let (w, h) = (p.width as f64, p.height as f64);
    let uniform = |rng: &mut SplitMix64| (rng.next_f64() * w, rng.next_f64() * h);
    match prev {
        Some((px, py)) if rng.next_f64() < p.overlap_prob => {
            for _ in 0..MAX_PLACEMENT_DRAWS {
                let angle = 2.0 * std::f64::consts::PI * rng.next_f64();
                let d = r * rng.next_f64();
                let (x, y) = (px + d * angle.cos(), py + d * angle.sin());
                if (0.0..w).contains(&x) && (0.0..h).contains(&y) {
                    return (x, y);
                }
            }
            (px, py)
        }
        _ => uniform(rng),
    }
}

/// Gaussian footprint truncated at `3r`, scaled to unit peak.
fn footprint(p: &CalciumParams, (cx, cy): (f64, f64), r: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.width * p.height];
    let reach = 3.0 * r;
    let rows = (cy - reach).floor().max(0.0) as usize..=((cy + reach).ceil() as usize).min(p.height - 1);
    for row in rows {
        let cols = (cx - reach).floor().max(0.0) as usize..=((cx + reach).ceil() as usize).min(p.width - 1);
        for col in cols {
            let d2 = (col as f64 - cx).powi(2) + (row as f64 - cy).powi(2);
            if d2 <= reach * reach {
                out[row * p.width + col] = (-d2 / (2.0 * r * r)).exp();
            }
        }
    }
    let peak = out.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    } else {
        // Radius too small to reach any pixel centre: light the nearest one.
        let col = (cx.round() as usize).min(p.width - 1);
        let row = (cy.round() as usize).min(p.height - 1);
        out[row * p.width + col] = 1.0;
    }
    out
}

/// Spike times in frames: exponential gaps, redrawn while shorter than the
/// refractory period.
fn spike_train(rng: &mut SplitMix64, p: &CalciumParams) -> Result<Vec<f64>> {
    let gap = Exp::new(p.rate).map_err(|e| RfError::InvalidSpec(format!("rate: {e}")))?;
    let horizon = p.t_frames as f64 / p.frames_per_unit;
    let mut t = 0.0;
    let mut out = Vec::new();
    loop {
        let mut g: f64 = gap.sample(rng);
        let mut tries = 0;
        while g < p.refractory {
            tries += 1;
            if tries > 100_000 {
                return Err(RfError::InvalidSpec(
                    "refractory period too long for the spike rate".into(),
                ));
            }
            g = gap.sample(rng);
        }
        t += g;
        if t >= horizon {
            return Ok(out);
        }
        out.push(t * p.frames_per_unit);
    }
}

fn smooth(p: &CalciumParams, events: &[f64]) -> Vec<f64> {
    let s = p.kernel_std_frames;
    let reach = 3.0 * s;
    let mut out = vec![0.0; p.t_frames];
    for &e in events {
        let lo = (e - reach).ceil().max(0.0) as usize;
        let hi = ((e + reach).floor() as usize).min(p.t_frames - 1);
        for (t, v) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let d = t as f64 - e;
            *v += p.amplitude * (-d * d / (2.0 * s * s)).exp();
        }
    }
    out
}

/// Builds the scene and the noisy `n×T` movie `profiles·tracesᵀ + σ·ε`.
pub fn generate_cell_scene(params: &CalciumParams) -> Result<(CellScene, DataMatrix)> {
    params.validate()?;
    let p = params;
    let n = p.width * p.height;
    let mut place_rng = SplitMix64::new(derive_seed(p.seed, 1));
    let mut spike_rng = SplitMix64::new(derive_seed(p.seed, 2));
    let mut noise_rng = SplitMix64::new(derive_seed(p.seed, 3));

    let mut centers = Vec::with_capacity(p.n_cells);
    let mut radii = Vec::with_capacity(p.n_cells);
    let mut profiles = Vec::with_capacity(p.n_cells);
    for _ in 0..p.n_cells {
        let r = draw_radius(&mut place_rng, p)?;
        let c = place(&mut place_rng, p, centers.last().copied(), r);
        profiles.push(footprint(p, c, r));
        centers.push(c);
        radii.push(r);
    }
    let events: Vec<Vec<f64>> = (0..p.n_cells)
        .map(|_| spike_train(&mut spike_rng, p))
        .collect::<Result<_>>()?;
    let traces: Vec<Vec<f64>> = events.iter().map(|e| smooth(p, e)).collect();

    let mut movie = vec![0.0; n * p.t_frames];
    for (prof, tr) in profiles.iter().zip(&traces) {
        for (pix, &w) in prof.iter().enumerate().filter(|(_, w)| **w > 0.0) {
            for (t, &s) in tr.iter().enumerate() {
                movie[t * n + pix] += w * s;
            }
        }
    }
    if p.noise_sigma > 0.0 {
        for v in movie.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut noise_rng);
            *v += p.noise_sigma * e;
        }
    }
    let scene = CellScene {
        params: p.clone(),
        centers,
        radii,
        events,
        profiles: DataMatrix::from_real_columns(n, &profiles)?,
        traces: DataMatrix::from_real_columns(p.t_frames, &traces)?,
    };
    Ok((scene, DataMatrix::from_real(n, p.t_frames, movie)?))
}
