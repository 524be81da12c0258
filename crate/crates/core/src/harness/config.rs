use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::LleParams;
use crate::error::{Result, RfError};
use crate::generators::{CalciumParams, PlaceCellSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rf,
    Lpf,
    Pca,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Rf => "rf",
            Method::Lpf => "lpf",
            Method::Pca => "pca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Isometry,
    Calcium,
    Vorticity,
    Manifold,
    Scaling,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Isometry => "isometry",
            ExperimentKind::Calcium => "calcium",
            ExperimentKind::Vorticity => "vorticity",
            ExperimentKind::Manifold => "manifold",
            ExperimentKind::Scaling => "scaling",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VorticitySpec {
    /// Grid side; the grid is square.
    pub grid: usize,
    pub nu: f64,
    pub t_end: f64,
    pub dt_out: f64,
    /// Forcing phase used when the snapshots serve as a plain dataset.
    pub phase: f64,
}

impl Default for VorticitySpec {
    fn default() -> Self {
        Self {
            grid: 64,
            nu: 1e-3,
            t_end: 10.0,
            dt_out: 0.5,
            phase: std::f64::consts::FRAC_PI_4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Sine {
        f_c: usize,
        samples: usize,
    },
    Calcium(CalciumParams),
    Vorticity(VorticitySpec),
    PlaceCells(PlaceCellSpec),
    /// An RFM1 or CSV file. `grid_shape` is only needed for the LPF baseline.
    Ingest {
        path: PathBuf,
        #[serde(default)]
        grid_shape: Option<Vec<usize>>,
    },
}

impl DatasetSpec {
    pub fn label(&self) -> &'static str {
        match self {
            DatasetSpec::Sine { .. } => "sine",
            DatasetSpec::Calcium(_) => "calcium",
            DatasetSpec::Vorticity(_) => "vorticity",
            DatasetSpec::PlaceCells(_) => "place_cells",
            DatasetSpec::Ingest { .. } => "ingest",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalciumOptions {
    /// Noise levels for the noise sweep, run at `sweep_ratio`.
    pub noise_levels: Vec<f64>,
    /// Overlap probabilities for the overlap sweep, run at `sweep_ratio`.
    pub overlap_levels: Vec<f64>,
    pub sweep_ratio: f64,
    pub k_sigma: f64,
    /// Thresholds tried for the best-F1 column.
    pub k_sigma_sweep: Vec<f64>,
    /// Minimum spacing of detections, in frames.
    pub refractory: usize,
    /// Matching tolerance, in frames.
    pub tol_frames: f64,
}

impl Default for CalciumOptions {
    fn default() -> Self {
        Self {
            noise_levels: vec![0.0, 0.03, 0.1, 0.2, 0.3],
            overlap_levels: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sweep_ratio: 10.0,
            k_sigma: 3.0,
            k_sigma_sweep: vec![2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0],
            refractory: 3,
            tol_frames: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VorticityOptions {
    /// Candidate count for the ratio and noise sweeps.
    pub phases: usize,
    /// Candidate counts for the phase-count sweep.
    pub phase_counts: Vec<usize>,
    /// Per-pixel noise added to the ratio and phase-count sweeps.
    pub noise: f64,
    /// Noise levels for the noise sweep, run at `sweep_ratio`.
    pub noise_levels: Vec<f64>,
    pub sweep_ratio: f64,
    /// Trajectories per candidate count, each with a uniformly drawn phase.
    pub trials: usize,
    /// Unit-normalize compressed snapshots and templates before matching.
    pub normalize: bool,
}

impl Default for VorticityOptions {
    fn default() -> Self {
        Self {
            phases: 4,
            phase_counts: vec![2, 4, 8],
            noise: 0.0,
            noise_levels: vec![0.0, 0.05, 0.1, 0.2],
            sweep_ratio: 10.0,
            trials: 8,
            normalize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldOptions {
    /// PCA fits on random subsamples for the isometry comparison.
    pub pca_repeats: usize,
    /// PCA fits whose embeddings go through LLE.
    pub lle_repeats: usize,
    /// Random subsamples per RF seed for the isometry comparison.
    pub rf_subsets: usize,
    pub subsample_fraction: f64,
    /// Pairs drawn per isometry estimate; 0 means all pairs.
    pub pair_samples: usize,
    pub lle: LleParams,
    pub compute_delta: bool,
    pub compute_lle: bool,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            pca_repeats: 100,
            lle_repeats: 10,
            rf_subsets: 10,
            subsample_fraction: 0.8,
            pair_samples: 20_000,
            lle: LleParams::default(),
            compute_delta: true,
            compute_lle: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingOptions {
    /// Cutoff frequencies; the ambient dimension is `2·f_c + 1`.
    pub f_c: Vec<usize>,
    pub target_delta: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            f_c: vec![64, 128, 256, 512],
            target_delta: 1.0 / 3.0,
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Rf, Method::Lpf]
}

fn default_seeds() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub experiment: ExperimentKind,
    pub dataset: DatasetSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Compression ratios `n/m`.
    #[serde(default)]
    pub ratios: Vec<f64>,
    /// Operator seeds per grid point: `base_seed .. base_seed + seeds`.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Metrics to keep in the output; empty keeps all.
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Pairs drawn per isometry estimate in the isometry sweep; all pairs
    /// when absent.
    #[serde(default)]
    pub pair_samples: Option<usize>,
    #[serde(default)]
    pub calcium: CalciumOptions,
    #[serde(default)]
    pub vorticity: VorticityOptions,
    #[serde(default)]
    pub manifold: ManifoldOptions,
    #[serde(default)]
    pub scaling: ScalingOptions,
}

impl ExperimentConfig {
    /// Defaults for `kind` on `dataset`, as used by the bundled configs.
    pub fn new(id: impl Into<String>, experiment: ExperimentKind, dataset: DatasetSpec) -> Self {
        Self {
            id: id.into(),
            experiment,
            dataset,
            methods: default_methods(),
            ratios: vec![],
            seeds: default_seeds(),
            base_seed: 0,
            metrics: vec![],
            output_dir: default_output(),
            pair_samples: None,
            calcium: CalciumOptions::default(),
            vorticity: VorticityOptions::default(),
            manifold: ManifoldOptions::default(),
            scaling: ScalingOptions::default(),
        }
    }

    /// Reads a config file, or the config embedded in a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(RfError::MissingPath(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let value = match value.get("config") {
            Some(inner) if value.get("config_sha256").is_some() => inner.clone(),
            _ => value,
        };
        let cfg: Self = serde_json::from_value(value)?;
        cfg.validate_static()?;
        Ok(cfg)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.base_seed + i).collect()
    }

    fn validate_static(&self) -> Result<()> {
        let bad = |msg: String| Err(RfError::Config(msg));
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return bad(format!("id {:?} must be a non-empty file stem", self.id));
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if self.methods.is_empty() && self.experiment != ExperimentKind::Scaling {
            return bad("at least one method is required".into());
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r >= 1.0) || !r.is_finite()) {
            return bad(format!("compression ratio {r} is below 1"));
        }
        if self.ratios.is_empty() && self.experiment != ExperimentKind::Scaling {
            return bad("at least one compression ratio is required".into());
        }
        if self.pair_samples == Some(0) {
            return bad("pair_samples must be positive when given".into());
        }
        Ok(())
    }

    /// Static checks plus existence of referenced paths.
    pub fn validate(&self) -> Result<()> {
        self.validate_static()?;
        if let DatasetSpec::Ingest { path, .. } = &self.dataset {
            if !path.exists() {
                return Err(RfError::MissingPath(path.clone()));
            }
        }
        Ok(())
    }

    /// Switches generated datasets to the large presets.
    pub fn apply_full_scale(&mut self) {
        match &mut self.dataset {
            DatasetSpec::Sine { f_c, .. } => *f_c = 5000,
            DatasetSpec::Calcium(p) => {
                let seed = p.seed;
                let noise = p.noise_sigma;
                *p = CalciumParams {
                    seed,
                    noise_sigma: noise,
                    ..CalciumParams::full_scale()
                };
                if self.experiment == ExperimentKind::Calcium && !self.ratios.contains(&40.0) {
                    self.ratios.push(40.0);
                }
            }
            DatasetSpec::Vorticity(v) => v.grid = 256,
            DatasetSpec::PlaceCells(_) | DatasetSpec::Ingest { .. } => {}
        }
        if self.experiment == ExperimentKind::Scaling {
            for f in [1024, 2048] {
                if !self.scaling.f_c.contains(&f) {
                    self.scaling.f_c.push(f);
                }
            }
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
